//! Command-line surface. `run` does the work and returns errors; the binary
//! maps them to exit codes.

use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use aggretriever_core::analysis::{cancellation_monte_carlo, sparse_ensemble, to_csv, ApproxConfig, EnsembleConfig};
use aggretriever_core::encoder::EncoderConfig;
use aggretriever_core::eval::{evaluate, Gain, Metric};
use aggretriever_core::index::FlatIndex;
use aggretriever_core::pretrain::{pretrain_mlm, PretrainConfig};
use aggretriever_core::pruning::{make_partition, Fingerprint, SlicePartition};
use aggretriever_core::synth::{generate, SynthConfig};
use aggretriever_core::toy::{toy_forward, ToyConfig, ToyEncoder};
use aggretriever_core::training::{train, LossWeights, StepRecord, TrainConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::checkpoint::{load_heads, load_toy, save_toy};
use crate::config::{ConfigOverrides, Pooling, Pruning};
use crate::error::{write_file, Error, Result};
use crate::formats::{index_file, DumpRecord, EmbeddingDump, TensorContainer, VectorSet};
use crate::jsonl::{self, CorpusRecord, TrainRecord};
use crate::parallel;
use crate::partition_file;
use crate::trec;

#[derive(Debug, Parser)]
#[command(name = "aggretriever", version, about = "Lexical aggregation retrieval pipeline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Draw a seeded slice partition of the vocabulary.
    Partition(PartitionArgs),
    /// Turn an embedding dump into retrieval vectors.
    Encode(EncodeArgs),
    /// Build a flat inner-product index or search it.
    #[command(subcommand)]
    Index(IndexCommand),
    /// Warm-start and contrastively train the toy encoder.
    TrainToy(TrainToyArgs),
    /// Run the toy encoder over a token-id corpus and write an embedding dump.
    EmbedToy(EmbedToyArgs),
    /// Score a TREC run against qrels.
    Eval(EvalArgs),
    /// Approximation studies on synthetic sparse vectors.
    #[command(subcommand)]
    Analyze(AnalyzeCommand),
    /// Generate the synthetic lexical-overlap retrieval task.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct PartitionArgs {
    #[arg(long)]
    pub vocab_size: usize,
    #[arg(long)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Encoder settings that override the config file.
#[derive(Debug, Args, Default)]
pub struct EncoderFlags {
    /// Encoder configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub d_cls: Option<usize>,
    #[arg(long)]
    pub d_agg: Option<usize>,
    #[arg(long)]
    pub max_query_len: Option<usize>,
    #[arg(long)]
    pub max_passage_len: Option<usize>,
    #[arg(long, value_enum)]
    pub pooling: Option<Pooling>,
    #[arg(long, value_enum)]
    pub pruning: Option<Pruning>,
    /// Drop the [CLS] part.
    #[arg(long)]
    pub no_cls: bool,
    /// Project [CLS] without a bias.
    #[arg(long)]
    pub no_cls_bias: bool,
    /// Token id that joins pooling despite being special.
    #[arg(long)]
    pub pool_token: Option<u32>,
}

impl EncoderFlags {
    fn resolve(&self, base: EncoderConfig) -> Result<EncoderConfig> {
        let file = match &self.config {
            Some(p) => ConfigOverrides::read(p)?,
            None => ConfigOverrides::default(),
        };
        let flags = ConfigOverrides {
            d_cls: self.d_cls,
            d_agg: self.d_agg,
            max_query_len: self.max_query_len,
            max_passage_len: self.max_passage_len,
            pooling: self.pooling,
            pruning: self.pruning,
            include_cls: self.no_cls.then_some(false),
            cls_bias: self.no_cls_bias.then_some(false),
            pool_token: self.pool_token,
        };
        let cfg = file.merge(&flags).apply(base);
        cfg.validate().map_err(|e| Error::invalid("encoder configuration", e))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Role {
    Query,
    Passage,
}

#[derive(Debug, Args)]
pub struct ThreadArgs {
    /// Worker threads [default: AGG_THREADS, else available parallelism].
    #[arg(long)]
    pub threads: Option<usize>,
}

impl ThreadArgs {
    fn pool(&self) -> Result<rayon::ThreadPool> {
        parallel::pool(parallel::resolve_threads(self.threads)?)
    }
}

#[derive(Debug, Args)]
pub struct EncodeArgs {
    /// Embedding dump.
    #[arg(long)]
    pub input: PathBuf,
    /// Tensor container holding mlm.weight/mlm.bias and any other heads.
    #[arg(long)]
    pub mlm_head: PathBuf,
    #[arg(long)]
    pub partition: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Sequences are truncated to this role's maximum length.
    #[arg(long, value_enum, default_value_t = Role::Passage)]
    pub role: Role,
    #[command(flatten)]
    pub encoder: EncoderFlags,
    #[command(flatten)]
    pub threads: ThreadArgs,
}

#[derive(Debug, Subcommand)]
pub enum IndexCommand {
    /// Build a flat index from encoded vectors.
    Build {
        #[arg(long)]
        vectors: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact top-k search; writes a TREC run.
    Search {
        #[arg(long)]
        index: PathBuf,
        #[arg(long)]
        queries: PathBuf,
        #[arg(long, default_value_t = 1000)]
        k: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "aggretriever")]
        tag: String,
        #[command(flatten)]
        threads: ThreadArgs,
    },
}

#[derive(Debug, Args)]
pub struct TrainToyArgs {
    /// Training records: {"query": [ids], "positive": id, "negatives": [ids]}.
    #[arg(long)]
    pub data: PathBuf,
    /// Token-id corpus the document ids refer to.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    /// Stop after this many optimizer steps instead of counting epochs.
    #[arg(long)]
    pub max_steps: Option<usize>,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 8)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 7)]
    pub negatives: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lambda1: f64,
    #[arg(long, default_value_t = 0.5)]
    pub lambda2: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Vocabulary size [default: partition size, else largest token id + 1].
    #[arg(long)]
    pub vocab_size: Option<usize>,
    #[arg(long, default_value_t = 16)]
    pub d_model: usize,
    #[arg(long, default_value_t = 0.05)]
    pub init_scale: f64,
    /// Masked-LM warm-start steps over the corpus (0 disables).
    #[arg(long, default_value_t = 300)]
    pub pretrain_steps: usize,
    #[arg(long, default_value_t = 2.0)]
    pub pretrain_lr: f64,
    #[arg(long, default_value_t = 16)]
    pub pretrain_batch_size: usize,
    /// Slice partition; drawn from --seed when omitted.
    #[arg(long)]
    pub partition: Option<PathBuf>,
    /// Where to save a drawn partition.
    #[arg(long)]
    pub partition_out: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Effective encoder configuration, for `encode`.
    #[arg(long)]
    pub config_out: Option<PathBuf>,
    /// CSV: step,epoch,total,concat,agg,cls.
    #[arg(long)]
    pub loss_trace: Option<PathBuf>,
    /// CSV: step,loss.
    #[arg(long)]
    pub pretrain_trace: Option<PathBuf>,
    #[command(flatten)]
    pub encoder: EncoderFlags,
}

#[derive(Debug, Args)]
pub struct EmbedToyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Corpus JSONL: {"id": str, "token_ids": [int]}.
    #[arg(long)]
    pub input: PathBuf,
    /// Truncation length [default: the model's position count].
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GainArg {
    Exponential,
    Linear,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    #[arg(long)]
    pub qrels: PathBuf,
    /// Comma-separated, e.g. rr@10,recall@1000,ndcg@10,hit@5.
    #[arg(long, value_delimiter = ',', default_value = "rr@10,recall@1000,ndcg@10")]
    pub metrics: Vec<String>,
    /// nDCG gain: 2^grade - 1, or the grade itself.
    #[arg(long, value_enum, default_value_t = GainArg::Exponential)]
    pub gain: GainArg,
}

#[derive(Debug, Subcommand)]
pub enum AnalyzeCommand {
    /// Mean absolute dot-product error of each pruner as a function of d (CSV).
    ApproxError {
        #[arg(long, default_value_t = 4096)]
        vocab_size: usize,
        #[arg(long, value_delimiter = ',', default_value = "16,64,256,1024,4096")]
        d: Vec<usize>,
        /// Random partitions per d.
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[command(flatten)]
        ensemble: EnsembleArgs,
        /// First partition seed.
        #[arg(long, default_value_t = 0)]
        partition_seed: u64,
        /// CSV path [default: stdout].
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        threads: ThreadArgs,
    },
    /// Sign split of misaligned slices over random partitions.
    Cancellation {
        #[arg(long, default_value_t = 4096)]
        vocab_size: usize,
        #[arg(long, default_value_t = 128)]
        d: usize,
        #[arg(long, default_value_t = 20)]
        seeds: usize,
        #[command(flatten)]
        ensemble: EnsembleArgs,
    },
}

#[derive(Debug, Args)]
pub struct EnsembleArgs {
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    #[arg(long, default_value_t = 64)]
    pub nonzeros: usize,
    /// Ids shared by the two vectors of a pair.
    #[arg(long, default_value_t = 16)]
    pub shared: usize,
    #[arg(long, default_value_t = 0)]
    pub ensemble_seed: u64,
}

impl EnsembleArgs {
    fn config(&self) -> EnsembleConfig {
        EnsembleConfig {
            pairs: self.pairs,
            nonzeros: self.nonzeros,
            shared: self.shared,
            seed: self.ensemble_seed,
        }
    }
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 256)]
    pub docs: usize,
    #[arg(long, default_value_t = 64)]
    pub queries: usize,
    #[arg(long, default_value_t = 128)]
    pub vocab_size: usize,
    #[arg(long, default_value_t = 24)]
    pub doc_len: usize,
    #[arg(long, default_value_t = 5)]
    pub query_len: usize,
    #[arg(long, default_value_t = 7)]
    pub negatives: usize,
    /// Fraction of queries withheld from train.jsonl.
    #[arg(long, default_value_t = 0.25)]
    pub held_out: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out_dir: PathBuf,
}

/// Encoder dimensions the toy trainer starts from before file and flag overrides.
pub fn toy_encoder_defaults() -> EncoderConfig {
    EncoderConfig {
        d_cls: 8,
        d_agg: 32,
        max_query_len: 32,
        max_passage_len: 32,
        ..EncoderConfig::default()
    }
}

pub fn run(cli: Cli, out: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Partition(a) => cmd_partition(&a, out),
        Command::Encode(a) => cmd_encode(&a, out),
        Command::Index(IndexCommand::Build { vectors, out: dst }) => cmd_index_build(&vectors, &dst, out),
        Command::Index(IndexCommand::Search {
            index,
            queries,
            k,
            out: dst,
            tag,
            threads,
        }) => cmd_index_search(&index, &queries, k, &dst, &tag, &threads, out),
        Command::TrainToy(a) => cmd_train_toy(&a, out),
        Command::EmbedToy(a) => cmd_embed_toy(&a, out),
        Command::Eval(a) => cmd_eval(&a, out),
        Command::Analyze(AnalyzeCommand::ApproxError {
            vocab_size,
            d,
            seeds,
            ensemble,
            partition_seed,
            out: dst,
            threads,
        }) => {
            let cfg = ApproxConfig {
                vocab_size,
                d_values: d,
                ensemble: ensemble.config(),
                partitions: seeds,
                partition_seed,
            };
            let rows = parallel::approx_error(&threads.pool()?, &cfg)?;
            let csv = to_csv(&rows);
            match dst {
                Some(p) => write_file(&p, csv.as_bytes()),
                None => say(out, csv.trim_end()),
            }
        }
        Command::Analyze(AnalyzeCommand::Cancellation {
            vocab_size,
            d,
            seeds,
            ensemble,
        }) => {
            let pairs = sparse_ensemble(vocab_size, &ensemble.config())?;
            let (all, active) = cancellation_monte_carlo(&pairs, vocab_size, d, 0..seeds as u64)?;
            for (name, s) in [("all", all), ("active", active)] {
                say(
                    out,
                    &format!(
                        "{name}\taligned={} opposite={} same={} opposite_fraction={:.4}",
                        s.aligned,
                        s.opposite,
                        s.same,
                        s.opposite_fraction()
                    ),
                )?;
            }
            Ok(())
        }
        Command::Synth(a) => cmd_synth(&a, out),
    }
}

fn say(out: &mut dyn Write, line: &str) -> Result<()> {
    writeln!(out, "{line}").map_err(|e| Error::io(Path::new("<stdout>"), e))
}

fn cmd_partition(a: &PartitionArgs, out: &mut dyn Write) -> Result<()> {
    let part = make_partition(a.vocab_size, a.d, a.seed).map_err(|e| Error::Usage(e.to_string()))?;
    partition_file::write(&part, &a.out)?;
    say(out, &format!("partition vocab={} d={} seed={}", a.vocab_size, a.d, a.seed))
}

fn read_partition_for(cfg: &EncoderConfig, path: Option<&Path>) -> Result<Option<SlicePartition>> {
    match path {
        Some(p) => Ok(Some(partition_file::read(p)?)),
        None if cfg.uses_partition() => Err(Error::Usage(
            "this configuration prunes through slices; pass --partition".into(),
        )),
        None => Ok(None),
    }
}

fn cmd_encode(a: &EncodeArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.encoder.resolve(EncoderConfig::default())?;
    let dump = EmbeddingDump::read(&a.input)?;
    let heads = load_heads(&TensorContainer::read(&a.mlm_head)?, &cfg).map_err(|e| Error::format(&a.mlm_head, e))?;
    let part = read_partition_for(&cfg, a.partition.as_deref())?;
    let mismatch = |what, expected, found| {
        Error::invalid(
            "encode inputs",
            aggretriever_core::Error::DimensionMismatch { what, expected, found },
        )
    };
    if dump.d_model != heads.mlm.d_model() {
        return Err(mismatch("dump d_model vs MLM head", heads.mlm.d_model(), dump.d_model));
    }
    if dump.vocab_size != heads.mlm.vocab_size() {
        return Err(mismatch("dump vocab_size vs MLM head", heads.mlm.vocab_size(), dump.vocab_size));
    }
    if let Some(p) = &part {
        if p.vocab_size() != heads.mlm.vocab_size() {
            return Err(mismatch("partition vocab_size vs MLM head", heads.mlm.vocab_size(), p.vocab_size()));
        }
    }
    let max_len = match a.role {
        Role::Query => cfg.max_query_len,
        Role::Passage => cfg.max_passage_len,
    };
    let items = parallel::encode_all(&a.threads.pool()?, &dump.docs, &heads, part.as_ref(), &cfg, max_len)?;
    let fingerprint = match &part {
        Some(p) if cfg.uses_partition() => p.fingerprint(),
        _ => Fingerprint::NONE,
    };
    let set = VectorSet::new(cfg.index_dim(), cfg.cls_dim(), fingerprint, items)?;
    set.write(&a.out)?;
    say(out, &format!("encoded {} sequences into {} dims", set.items.len(), set.dim))
}

fn cmd_index_build(vectors: &Path, dst: &Path, out: &mut dyn Write) -> Result<()> {
    let set = VectorSet::read(vectors)?;
    let index = if set.items.is_empty() {
        FlatIndex::from_raw(set.dim, Vec::new(), Vec::new(), set.fingerprint)?
    } else {
        FlatIndex::build(set.items).map_err(|e| Error::invalid("index build", e))?
    };
    index_file::write(&index, dst)?;
    say(out, &format!("indexed {} vectors of {} dims", index.len(), index.dim()))
}

fn cmd_index_search(
    index: &Path,
    queries: &Path,
    k: usize,
    dst: &Path,
    tag: &str,
    threads: &ThreadArgs,
    out: &mut dyn Write,
) -> Result<()> {
    if k == 0 {
        return Err(Error::Usage("--k must be at least 1".into()));
    }
    if tag.is_empty() || tag.chars().any(char::is_whitespace) {
        return Err(Error::Usage("--tag must be a single token".into()));
    }
    let index = index_file::read(index)?;
    let qs = VectorSet::read(queries)?;
    let results = parallel::search_all(&threads.pool()?, &index, &qs.items, k)?;
    let mut text = String::new();
    for ((qid, _), hits) in qs.items.iter().zip(&results) {
        trec::push_hits(&mut text, qid, hits, tag);
    }
    write_file(dst, text.as_bytes())?;
    say(out, &format!("searched {} queries, k={k}", qs.items.len()))
}

fn trace_csv(trace: &[StepRecord]) -> String {
    let mut s = String::from("step,epoch,total,concat,agg,cls\n");
    for r in trace {
        let l = r.loss;
        let _ = writeln!(s, "{},{},{},{},{},{}", r.step, r.epoch, l.total, l.concat, l.agg, l.cls);
    }
    s
}

fn cmd_train_toy(a: &TrainToyArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = a.encoder.resolve(toy_encoder_defaults())?;
    let corpus = jsonl::read_corpus(&a.corpus)?;
    let recs = jsonl::read_train(&a.data)?;
    let data = jsonl::to_dataset(&corpus, &recs).map_err(|e| Error::format(&a.data, e))?;
    let given = a.partition.as_deref().map(partition_file::read).transpose()?;
    let vocab = match (a.vocab_size, &given) {
        (Some(v), _) => v,
        (None, Some(p)) => p.vocab_size(),
        (None, None) => {
            let max = data
                .corpus
                .iter()
                .chain(data.examples.iter().map(|e| &e.query))
                .flatten()
                .max()
                .copied();
            max.map_or(1, |m| m as usize + 1)
        }
    };
    let part = match given {
        Some(p) => Some(p),
        None if cfg.uses_partition() => {
            let p = make_partition(vocab, cfg.d_agg, a.seed).map_err(|e| Error::Usage(e.to_string()))?;
            if let Some(path) = &a.partition_out {
                partition_file::write(&p, path)?;
            }
            Some(p)
        }
        None => None,
    };
    let toy = ToyConfig {
        vocab,
        d_model: a.d_model,
        max_len: cfg.max_query_len.max(cfg.max_passage_len),
        d_cls: cfg.d_cls.max(1),
        d_agg: cfg.d_agg.max(1),
        init_scale: a.init_scale,
        seed: a.seed,
    };
    let enc = ToyEncoder::new(toy).map_err(|e| Error::invalid("toy encoder", e))?;
    let enc = if a.pretrain_steps > 0 {
        let pcfg = PretrainConfig {
            steps: a.pretrain_steps,
            batch_size: a.pretrain_batch_size,
            lr: a.pretrain_lr,
            momentum: a.momentum,
            seed: a.seed,
        };
        let (enc, losses) = pretrain_mlm(&data.corpus, enc, &pcfg).map_err(|e| Error::invalid("warm start", e))?;
        if let Some(p) = &a.pretrain_trace {
            let mut s = String::from("step,loss\n");
            for (i, l) in losses.iter().enumerate() {
                let _ = writeln!(s, "{i},{l}");
            }
            write_file(p, s.as_bytes())?;
        }
        enc
    } else {
        enc
    };
    let tcfg = TrainConfig {
        epochs: a.epochs,
        max_steps: a.max_steps,
        lr: a.lr,
        momentum: a.momentum,
        batch_size: a.batch_size,
        negatives: a.negatives,
        seed: a.seed,
        weights: LossWeights {
            lambda1: a.lambda1,
            lambda2: a.lambda2,
        },
        ..TrainConfig::default()
    };
    let (enc, trace) = train(&data, enc, part.as_ref(), &cfg, &tcfg).map_err(|e| Error::invalid("training", e))?;
    save_toy(&enc).write(&a.out)?;
    if let Some(p) = &a.loss_trace {
        write_file(p, trace_csv(&trace).as_bytes())?;
    }
    if let Some(p) = &a.config_out {
        write_file(p, ConfigOverrides::full(&cfg).to_json().as_bytes())?;
    }
    match (trace.first(), trace.last()) {
        (Some(f), Some(l)) => say(
            out,
            &format!("trained {} steps, loss {:.4} -> {:.4}", trace.len(), f.loss.total, l.loss.total),
        ),
        _ => say(out, "trained 0 steps"),
    }
}

fn cmd_embed_toy(a: &EmbedToyArgs, out: &mut dyn Write) -> Result<()> {
    let enc = load_toy(&TensorContainer::read(&a.model)?).map_err(|e| Error::format(&a.model, e))?;
    let max_len = a.max_len.unwrap_or(enc.config.max_len).min(enc.config.max_len);
    let corpus = jsonl::read_corpus(&a.input)?;
    let mut docs = Vec::with_capacity(corpus.len());
    for r in &corpus {
        let tokens = &r.token_ids[..r.token_ids.len().min(max_len)];
        let seq = toy_forward(&enc, tokens).map_err(|e| Error::invalid(format!("document `{}`", r.id), e))?;
        docs.push(DumpRecord {
            id: r.id.clone(),
            token_ids: tokens.to_vec(),
            special_mask: seq.special_mask().to_vec(),
            embeddings: seq.embeddings().as_slice().iter().map(|&x| x as f32).collect(),
            cls: seq.cls_embedding().iter().map(|&x| x as f32).collect(),
        });
    }
    let dump = EmbeddingDump {
        d_model: enc.config.d_model,
        vocab_size: enc.config.vocab,
        max_len,
        producer: "toy-encoder".into(),
        docs,
    };
    dump.write(&a.out)?;
    say(out, &format!("embedded {} sequences", dump.docs.len()))
}

fn cmd_eval(a: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let metrics = a
        .metrics
        .iter()
        .map(|m| m.parse::<Metric>().map_err(|e| Error::Usage(format!("--metrics: {e}"))))
        .collect::<Result<Vec<_>>>()?;
    let gain = match a.gain {
        GainArg::Exponential => Gain::Exponential,
        GainArg::Linear => Gain::Linear,
    };
    let run = trec::read_run(&a.run)?;
    let qrels = trec::read_qrels(&a.qrels)?;
    let mut last = None;
    for m in metrics {
        let v = evaluate(&run, &qrels, m, gain);
        say(out, &format!("{}\tall\t{:.6}", m, v.value))?;
        last = Some(v);
    }
    if let Some(v) = last {
        say(out, &format!("queries\tall\t{}", v.queries))?;
        say(out, &format!("missing_from_qrels\tall\t{}", v.missing_from_qrels))?;
        say(out, &format!("missing_from_run\tall\t{}", v.missing_from_run))?;
    }
    Ok(())
}

fn cmd_synth(a: &SynthArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = SynthConfig {
        docs: a.docs,
        queries: a.queries,
        vocab: a.vocab_size,
        doc_len: a.doc_len,
        query_len: a.query_len,
        negatives: a.negatives,
        held_out: a.held_out,
        seed: a.seed,
    };
    let task = generate(&cfg).map_err(|e| Error::Usage(e.to_string()))?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| Error::io(&a.out_dir, e))?;
    let dir = &a.out_dir;
    let corpus: Vec<CorpusRecord> = task
        .doc_ids
        .iter()
        .zip(&task.docs)
        .map(|(id, t)| CorpusRecord {
            id: id.clone(),
            token_ids: t.clone(),
        })
        .collect();
    jsonl::write_corpus(&corpus, &dir.join("corpus.jsonl"))?;
    let queries: Vec<CorpusRecord> = task
        .queries
        .iter()
        .map(|q| CorpusRecord {
            id: q.id.clone(),
            token_ids: q.tokens.clone(),
        })
        .collect();
    jsonl::write_corpus(&queries, &dir.join("queries.jsonl"))?;
    let train: Vec<TrainRecord> = task
        .train
        .iter()
        .map(|&i| {
            let q = &task.queries[i];
            TrainRecord {
                query: q.tokens.clone(),
                positive: task.doc_ids[q.positive].clone(),
                negatives: q.negatives.iter().map(|&n| task.doc_ids[n].clone()).collect(),
            }
        })
        .collect();
    jsonl::write_train(&train, &dir.join("train.jsonl"))?;
    trec::write_qrels(&task.qrels(), &dir.join("qrels.txt"))?;
    trec::write_qrels(&task.qrels_for(&task.train), &dir.join("qrels.train.txt"))?;
    trec::write_qrels(&task.qrels_for(&task.held_out), &dir.join("qrels.heldout.txt"))?;
    say(
        out,
        &format!(
            "synth: {} docs, {} queries ({} train, {} held out) in {}",
            task.docs.len(),
            task.queries.len(),
            task.train.len(),
            task.held_out.len(),
            dir.display()
        ),
    )
}
