//! Binary format round trips, malformed-input handling, and the byte layout an
//! external exporter must produce.

use aggretriever::checkpoint::load_heads;
use aggretriever::formats::{index_file, DumpRecord, EmbeddingDump, Tensor, TensorContainer, VectorSet};
use aggretriever::FormatError;
use aggretriever_core::encoder::{encode, ConcatEmbedding, EncoderConfig, PoolingMode};
use aggretriever_core::index::{FlatIndex, Fingerprint};
use aggretriever_core::lexrep::mlm_project;
use aggretriever_core::pruning::make_partition;
use proptest::prelude::*;

/// Writes bytes the way a foreign producer would, without this crate's writer.
#[derive(Default)]
struct Raw(Vec<u8>);

impl Raw {
    fn tag(mut self, t: &[u8; 4]) -> Self {
        self.0.extend_from_slice(t);
        self
    }
    fn u32(mut self, x: u32) -> Self {
        self.0.extend_from_slice(&x.to_le_bytes());
        self
    }
    fn u64(mut self, x: u64) -> Self {
        self.0.extend_from_slice(&x.to_le_bytes());
        self
    }
    fn u8s(mut self, xs: &[u8]) -> Self {
        self.0.extend_from_slice(xs);
        self
    }
    fn name(self, s: &str) -> Self {
        self.u32(s.len() as u32).u8s(s.as_bytes())
    }
    fn f32s(mut self, xs: &[f32]) -> Self {
        for x in xs {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
        self
    }
}

fn wave(n: usize, k: f32) -> Vec<f32> {
    (0..n).map(|i| ((i as f32 + 1.0) * k).sin()).collect()
}

#[test]
fn exporter_head_layout_is_accepted() {
    let (d_model, vocab) = (6usize, 40usize);
    let w = wave(d_model * vocab, 0.37);
    let b = wave(vocab, 1.3);
    let bytes = Raw::default()
        .tag(b"AGGT")
        .u32(1)
        .u32(2)
        .name("mlm.weight")
        .u32(2)
        .u64(d_model as u64)
        .u64(vocab as u64)
        .f32s(&w)
        .name("mlm.bias")
        .u32(1)
        .u64(vocab as u64)
        .f32s(&b)
        .0;
    let c = TensorContainer::from_bytes(&bytes).unwrap();
    assert_eq!(c.to_bytes(), bytes);
    let cfg = EncoderConfig {
        include_cls: false,
        pooling: PoolingMode::UnitWeight,
        d_agg: 8,
        ..Default::default()
    };
    let heads = load_heads(&c, &cfg).unwrap();
    assert_eq!((heads.mlm.d_model(), heads.mlm.vocab_size()), (d_model, vocab));
    assert_eq!(heads.mlm.weight.get(2, 17), f64::from(w[2 * vocab + 17]));
    for t in 0..5 {
        let e: Vec<f64> = wave(d_model, 0.1 + t as f32).iter().map(|&x| f64::from(x) * 4.0).collect();
        let p = mlm_project(&e, &heads.mlm).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-4);
    }
}

#[test]
fn exporter_dump_layout_is_accepted() {
    let (d, vocab, len) = (3usize, 40usize, 4usize);
    let emb = wave(len * d, 0.21);
    let cls = wave(d, 0.9);
    let bytes = Raw::default()
        .tag(b"AGED")
        .u32(1)
        .u32(d as u32)
        .u32(vocab as u32)
        .u32(8)
        .name("hf:bert-tiny")
        .u64(1)
        .name("doc-7")
        .u32(len as u32)
        .u32(1)
        .u32(11)
        .u32(39)
        .u32(2)
        .u8s(&[1, 0, 0, 1])
        .f32s(&emb)
        .f32s(&cls)
        .0;
    let dump = EmbeddingDump::from_bytes(&bytes).unwrap();
    assert_eq!(dump.producer, "hf:bert-tiny");
    let doc = &dump.docs[0];
    assert_eq!(doc.token_ids, vec![1, 11, 39, 2]);
    assert_eq!(doc.special_mask, vec![true, false, false, true]);
    assert_eq!(dump.to_bytes().unwrap(), bytes);

    let seq = doc.to_sequence().unwrap();
    assert_eq!(seq.pooled_positions().collect::<Vec<_>>(), vec![1, 2]);
    let mut heads_c = TensorContainer::new();
    heads_c
        .push(Tensor::new("mlm.weight", vec![d as u64, vocab as u64], wave(d * vocab, 0.5)).unwrap())
        .unwrap();
    heads_c.push(Tensor::new("mlm.bias", vec![vocab as u64], vec![0.0; vocab]).unwrap()).unwrap();
    let cfg = EncoderConfig {
        include_cls: false,
        pooling: PoolingMode::UnitWeight,
        d_agg: 4,
        ..Default::default()
    };
    let heads = load_heads(&heads_c, &cfg).unwrap();
    let part = make_partition(vocab, 4, 0).unwrap();
    let e = encode(&seq, &heads, Some(&part), &cfg).unwrap();
    assert_eq!(e.dim(), 4);
    assert_eq!(e.fingerprint, part.fingerprint());
}

#[test]
fn dump_rejects_bad_mask_and_oversized_records() {
    let good = Raw::default()
        .tag(b"AGED")
        .u32(1)
        .u32(1)
        .u32(10)
        .u32(2)
        .name("p")
        .u64(1)
        .name("a")
        .u32(2)
        .u32(3)
        .u32(4);
    let bad_mask = Raw(good.0.clone()).u8s(&[0, 2]).f32s(&[0.0; 3]).0;
    assert!(EmbeddingDump::from_bytes(&bad_mask).is_err());
    let ok = Raw(good.0.clone()).u8s(&[0, 1]).f32s(&[0.0; 3]).0;
    assert!(EmbeddingDump::from_bytes(&ok).is_ok());
    let too_long = Raw::default()
        .tag(b"AGED")
        .u32(1)
        .u32(1)
        .u32(10)
        .u32(1)
        .name("p")
        .u64(1)
        .name("a")
        .u32(2)
        .u32(3)
        .u32(4)
        .u8s(&[0, 0])
        .f32s(&[0.0; 3])
        .0;
    assert!(EmbeddingDump::from_bytes(&too_long).is_err());
    let out_of_vocab = Raw(good.0[..good.0.len() - 4].to_vec()).u32(10).u8s(&[0, 0]).f32s(&[0.0; 3]).0;
    assert!(EmbeddingDump::from_bytes(&out_of_vocab).is_err());
}

#[test]
fn three_tensor_container_is_byte_identical_on_disk() {
    let mut c = TensorContainer::new();
    c.push(Tensor::new("a", vec![2, 3], wave(6, 1.0)).unwrap()).unwrap();
    c.push(Tensor::new("b", vec![4], wave(4, 2.0)).unwrap()).unwrap();
    c.push(Tensor::new("scalar", vec![], vec![7.5]).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.aggt");
    c.write(&p).unwrap();
    let first = std::fs::read(&p).unwrap();
    TensorContainer::read(&p).unwrap().write(&p).unwrap();
    assert_eq!(std::fs::read(&p).unwrap(), first);
    assert!(matches!(
        Tensor::new("x", vec![2, 3], vec![0.0; 5]),
        Err(FormatError::SizeMismatch { .. })
    ));
}

fn tensor_strategy() -> impl Strategy<Value = Tensor> {
    (prop::collection::vec(0u64..4, 0..4), "[a-z.]{1,12}").prop_flat_map(|(dims, name)| {
        let n = dims.iter().product::<u64>() as usize;
        prop::collection::vec(any::<u32>().prop_map(f32::from_bits), n)
            .prop_map(move |data| Tensor::new(name.clone(), dims.clone(), data).unwrap())
    })
}

fn bits(c: &TensorContainer) -> Vec<(String, Vec<u64>, Vec<u32>)> {
    c.tensors()
        .iter()
        .map(|t| (t.name.clone(), t.dims.clone(), t.data.iter().map(|x| x.to_bits()).collect()))
        .collect()
}

proptest! {
    #[test]
    fn containers_round_trip_bit_exactly(ts in prop::collection::vec(tensor_strategy(), 0..5)) {
        let mut c = TensorContainer::new();
        for t in ts {
            let _ = c.push(t);
        }
        let bytes = c.to_bytes();
        let back = TensorContainer::from_bytes(&bytes).unwrap();
        prop_assert_eq!(bits(&back), bits(&c));
        prop_assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn every_truncation_is_an_error(cut in 0usize..200) {
        let mut c = TensorContainer::new();
        c.push(Tensor::new("w", vec![3, 4], wave(12, 0.3)).unwrap()).unwrap();
        c.push(Tensor::new("b", vec![4], wave(4, 0.7)).unwrap()).unwrap();
        let bytes = c.to_bytes();
        let cut = cut % bytes.len();
        prop_assert!(TensorContainer::from_bytes(&bytes[..cut]).is_err());
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert!(TensorContainer::from_bytes(&longer).is_err());
    }

    #[test]
    fn index_files_round_trip(
        dim in 1usize..6,
        rows in prop::collection::vec(prop::collection::vec(-1e6f32..1e6, 6), 0..12),
        fp in any::<[u8; 32]>(),
    ) {
        let ids: Vec<String> = (0..rows.len()).map(|i| format!("id {i}")).collect();
        let data: Vec<f32> = rows.iter().flat_map(|r| r[..dim].to_vec()).collect();
        let idx = FlatIndex::from_raw(dim, ids, data, Fingerprint(fp)).unwrap();
        let bytes = index_file::to_bytes(&idx);
        let back = index_file::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &idx);
        prop_assert_eq!(index_file::to_bytes(&back), bytes);
    }

    #[test]
    fn vector_sets_and_dumps_round_trip(
        d_cls in 0usize..3,
        d_agg in 1usize..4,
        n in 0usize..5,
        seed in any::<u16>(),
    ) {
        let val = |i: usize| ((i as f32 + f32::from(seed)) * 0.731).cos();
        let fp = Fingerprint([seed as u8; 32]);
        let items: Vec<(String, ConcatEmbedding)> = (0..n)
            .map(|i| {
                let cls = (0..d_cls).map(|j| val(i * 10 + j)).collect();
                let agg = (0..d_agg).map(|j| val(i * 10 + 5 + j)).collect();
                (format!("v{i}"), ConcatEmbedding::new(cls, agg, fp).unwrap())
            })
            .collect();
        let set = VectorSet::new(d_cls + d_agg, d_cls, fp, items).unwrap();
        prop_assert_eq!(VectorSet::from_bytes(&set.to_bytes()).unwrap(), set);

        let d_model = d_agg + 1;
        let docs: Vec<DumpRecord> = (0..n)
            .map(|i| {
                let len = 1 + i % 3;
                DumpRecord {
                    id: format!("doc{i}"),
                    token_ids: (0..len as u32).map(|t| (t + i as u32) % 9).collect(),
                    special_mask: (0..len).map(|t| t == 0).collect(),
                    embeddings: (0..len * d_model).map(val).collect(),
                    cls: (0..d_model).map(|j| val(100 + j)).collect(),
                }
            })
            .collect();
        let dump = EmbeddingDump { d_model, vocab_size: 9, max_len: 3, producer: "toy".into(), docs };
        let bytes = dump.to_bytes().unwrap();
        let back = EmbeddingDump::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &dump);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}
