//! Vocabulary-space lexical vectors from contextualized token embeddings.
//!
//! Each pooled token embedding `e_i` is pushed through the masked-LM projector,
//! `p_i = softmax(e_i · W_mlm + b_mlm)`, and weighted by a learned importance
//! `w_i = |e_i · w + b|`. The lexical vector keeps, per vocabulary entry, the
//! largest `w_i · p_i[v]` over positions. `[CLS]`, `[SEP]` and padding are left
//! out of the max.

use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{dot, softmax_in_place, Matrix};
use crate::{Error, Result};

/// Contextualized embeddings for one tokenized text.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenEmbeddingSequence {
    embeddings: Matrix,
    token_ids: Vec<u32>,
    special_mask: Vec<bool>,
    cls_embedding: Vec<f64>,
}

impl TokenEmbeddingSequence {
    pub fn new(
        embeddings: Matrix,
        token_ids: Vec<u32>,
        special_mask: Vec<bool>,
        cls_embedding: Vec<f64>,
    ) -> Result<Self> {
        Error::check_dim("token ids", embeddings.rows(), token_ids.len())?;
        Error::check_dim("special mask", embeddings.rows(), special_mask.len())?;
        Error::check_dim("cls embedding", embeddings.cols(), cls_embedding.len())?;
        if !embeddings.is_finite() || cls_embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("token embeddings"));
        }
        Ok(Self {
            embeddings,
            token_ids,
            special_mask,
            cls_embedding,
        })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.token_ids.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    #[inline]
    pub fn d_model(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    #[inline]
    pub fn embedding(&self, i: usize) -> &[f64] {
        self.embeddings.row(i)
    }

    pub fn token_ids(&self) -> &[u32] {
        &self.token_ids
    }

    pub fn special_mask(&self) -> &[bool] {
        &self.special_mask
    }

    pub fn cls_embedding(&self) -> &[f64] {
        &self.cls_embedding
    }

    /// Positions that take part in pooling.
    pub fn pooled_positions(&self) -> impl Iterator<Item = usize> + '_ {
        self.special_mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| !m)
            .map(|(i, _)| i)
    }

    /// Clears the special flag on every position holding `token`, so that e.g.
    /// `[SEP]` is pooled like an ordinary token.
    pub fn unmask_token(&mut self, token: u32) {
        for (m, &t) in self.special_mask.iter_mut().zip(&self.token_ids) {
            if t == token {
                *m = false;
            }
        }
    }
}

/// Masked-language-model projector, `d_model → |V|`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlmHead {
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl MlmHead {
    pub fn new(weight: Matrix, bias: Vec<f64>) -> Result<Self> {
        Error::check_dim("mlm bias", weight.cols(), bias.len())?;
        if weight.cols() == 0 {
            return Err(Error::invalid("mlm head with empty vocabulary"));
        }
        if !weight.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("mlm head"));
        }
        Ok(Self { weight, bias })
    }

    #[inline]
    pub fn d_model(&self) -> usize {
        self.weight.rows()
    }

    #[inline]
    pub fn vocab_size(&self) -> usize {
        self.weight.cols()
    }

    /// Logits `e · W + b`, written into `out`.
    pub(crate) fn logits_into(&self, e: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        self.weight.vec_mul_into(e, out);
    }
}

/// Scalar term-importance head, `w = |e · weight + bias|`.
#[derive(Debug, Clone, PartialEq)]
pub struct TermWeightHead {
    pub weight: Vec<f64>,
    pub bias: f64,
}

impl TermWeightHead {
    pub fn new(weight: Vec<f64>, bias: f64) -> Result<Self> {
        if weight.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite("term weight head"));
        }
        Ok(Self { weight, bias })
    }

    /// A head that gives every token weight one.
    pub fn unit(d_model: usize) -> Self {
        Self {
            weight: vec![0.0; d_model],
            bias: 1.0,
        }
    }
}

/// Nonnegative vocabulary-sized term-weight vector.
#[derive(Debug, Clone, PartialEq)]
pub struct LexicalVector {
    values: Vec<f64>,
}

impl LexicalVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lexical vector"));
        }
        if values.iter().any(|&v| v < 0.0) {
            return Err(Error::invalid("lexical vector has a negative entry"));
        }
        Ok(Self { values })
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn vocab_size(&self) -> usize {
        self.values.len()
    }

    pub fn dot(&self, other: &LexicalVector) -> f64 {
        dot(&self.values, &other.values)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// How per-token distributions and weights enter the max pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum PoolingVariant {
    /// `max_i w_i · p_i[v]`.
    #[default]
    Full,
    /// Every `w_i` forced to one.
    UnitWeight,
    /// `p_i` replaced by the one-hot indicator of the token id.
    NoMlm,
}

/// Softmax of `e · W_mlm + b_mlm`.
pub fn mlm_project(e: &[f64], head: &MlmHead) -> Result<Vec<f64>> {
    Error::check_dim("embedding vs mlm head", head.d_model(), e.len())?;
    let mut p = vec![0.0; head.vocab_size()];
    head.logits_into(e, &mut p);
    softmax_in_place(&mut p);
    Ok(p)
}

pub fn term_weight(e: &[f64], head: &TermWeightHead) -> Result<f64> {
    Error::check_dim("embedding vs term weight head", head.weight.len(), e.len())?;
    Ok((dot(e, &head.weight) + head.bias).abs())
}

/// Weighted max pooling over the non-special positions of `seq`.
pub fn weighted_max_pool(
    seq: &TokenEmbeddingSequence,
    mlm: &MlmHead,
    tw: &TermWeightHead,
    variant: PoolingVariant,
) -> Result<LexicalVector> {
    Ok(pool_with_winners(seq, mlm, tw, variant)?.0)
}

/// Pooling that also reports, per vocabulary entry, which position won the
/// max (ties go to the earliest pooled position).
pub fn pool_with_winners(
    seq: &TokenEmbeddingSequence,
    mlm: &MlmHead,
    tw: &TermWeightHead,
    variant: PoolingVariant,
) -> Result<(LexicalVector, Vec<u32>)> {
    Error::check_dim("sequence vs mlm head", mlm.d_model(), seq.d_model())?;
    Error::check_dim("sequence vs term weight head", tw.weight.len(), seq.d_model())?;
    let vocab = mlm.vocab_size();
    let mut positions = seq.pooled_positions().peekable();
    let first = *positions.peek().ok_or(Error::EmptySequence)?;

    let mut v = vec![0.0; vocab];
    let mut winner = vec![first as u32; vocab];
    let mut p = vec![0.0; vocab];
    for i in positions {
        let e = seq.embedding(i);
        let w = match variant {
            PoolingVariant::UnitWeight => 1.0,
            _ => term_weight(e, tw)?,
        };
        match variant {
            PoolingVariant::NoMlm => {
                let t = seq.token_ids()[i];
                if t as usize >= vocab {
                    return Err(Error::TokenOutOfRange {
                        token: t,
                        vocab_size: vocab,
                    });
                }
                if w > v[t as usize] {
                    v[t as usize] = w;
                    winner[t as usize] = i as u32;
                }
            }
            _ => {
                mlm.logits_into(e, &mut p);
                softmax_in_place(&mut p);
                for (u, &pu) in p.iter().enumerate() {
                    let x = w * pu;
                    if x > v[u] {
                        v[u] = x;
                        winner[u] = i as u32;
                    }
                }
            }
        }
    }
    Ok((LexicalVector { values: v }, winner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(rows: Vec<Vec<f64>>, ids: Vec<u32>, mask: Vec<bool>) -> TokenEmbeddingSequence {
        let d = rows[0].len();
        let n = rows.len();
        let m = Matrix::from_vec(n, d, rows.concat()).unwrap();
        TokenEmbeddingSequence::new(m, ids, mask, vec![0.0; d]).unwrap()
    }

    fn head(w: Vec<Vec<f64>>, b: Vec<f64>) -> MlmHead {
        let rows = w.len();
        let cols = w[0].len();
        MlmHead::new(Matrix::from_vec(rows, cols, w.concat()).unwrap(), b).unwrap()
    }

    fn softmax_oracle(logits: &[f64]) -> Vec<f64> {
        let z: f64 = logits.iter().map(|l| l.exp()).sum();
        logits.iter().map(|l| l.exp() / z).collect()
    }

    #[test]
    fn uniform_for_equal_logits() {
        let h = head(vec![vec![0.0; 3]; 2], vec![0.0; 3]);
        let p = mlm_project(&[0.0, 0.0], &h).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_of_identity_projection() {
        let h = head(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]], vec![0.0; 3]);
        let p = mlm_project(&[1.0, 0.0], &h).unwrap();
        let expect = softmax_oracle(&[1.0, 0.0, 0.0]);
        for (a, b) in p.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[0] - 0.5761).abs() < 1e-4 && (p[1] - 0.2119).abs() < 1e-4);
    }

    #[test]
    fn bias_ln2_gives_one_two_ratio() {
        let h = head(vec![vec![0.0; 3]], vec![0.0, 0.0, core::f64::consts::LN_2]);
        let p = mlm_project(&[0.0], &h).unwrap();
        assert!((p[0] - 0.25).abs() < 1e-12);
        assert!((p[1] - 0.25).abs() < 1e-12);
        assert!((p[2] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn large_logits_stay_finite() {
        let h = head(vec![vec![1.0, 0.0]], vec![0.0, 0.0]);
        let p = mlm_project(&[1e6], &h).unwrap();
        assert_eq!(p, vec![1.0, 0.0]);
    }

    #[test]
    fn projection_rejects_wrong_dim() {
        let h = head(vec![vec![0.0; 3]; 2], vec![0.0; 3]);
        assert!(matches!(
            mlm_project(&[0.0], &h),
            Err(Error::DimensionMismatch { .. })
        ));
        let tw = TermWeightHead::new(vec![1.0, 1.0], 0.0).unwrap();
        assert!(term_weight(&[1.0], &tw).is_err());
    }

    #[test]
    fn term_weight_cases() {
        let tw = TermWeightHead::new(vec![1.0, 1.0], 0.5).unwrap();
        assert_eq!(term_weight(&[1.0, 2.0], &tw).unwrap(), 3.5);
        let neg = TermWeightHead::new(vec![1.0], 0.0).unwrap();
        assert_eq!(term_weight(&[-3.0], &neg).unwrap(), 3.0);
        let zero = TermWeightHead::new(vec![0.0, 0.0], 0.0).unwrap();
        assert_eq!(term_weight(&[0.0, 0.0], &zero).unwrap(), 0.0);
    }

    #[test]
    fn weighted_max_pool_two_tokens() {
        // Coordinates 0/1 select a row of log-probabilities, coordinate 2 only
        // feeds the term weight head.
        let h = head(
            vec![
                vec![0.6f64.ln(), 0.4f64.ln()],
                vec![0.3f64.ln(), 0.7f64.ln()],
                vec![0.0, 0.0],
            ],
            vec![0.0, 0.0],
        );
        let tw = TermWeightHead::new(vec![0.0, 0.0, 1.0], 0.0).unwrap();
        let s = seq(
            vec![vec![1.0, 0.0, 2.0], vec![0.0, 1.0, 1.0]],
            vec![0, 1],
            vec![false, false],
        );
        let v = weighted_max_pool(&s, &h, &tw, PoolingVariant::Full).unwrap();
        assert!((v.values()[0] - 1.2).abs() < 1e-12);
        assert!((v.values()[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn single_token_unit_weight_is_distribution() {
        let h = head(vec![vec![0.3, -0.2, 0.9]], vec![0.1, 0.0, -0.4]);
        let tw = TermWeightHead::new(vec![5.0], 0.0).unwrap();
        let s = seq(vec![vec![0.7]], vec![2], vec![false]);
        let v = weighted_max_pool(&s, &h, &tw, PoolingVariant::UnitWeight).unwrap();
        assert_eq!(v.values(), mlm_project(&[0.7], &h).unwrap().as_slice());
    }

    #[test]
    fn no_mlm_indicator_keeps_max_weight() {
        let h = head(vec![vec![0.0; 4]], vec![0.0; 4]);
        let tw = TermWeightHead::new(vec![1.0], 0.0).unwrap();
        let s = seq(vec![vec![2.0], vec![-5.0]], vec![3, 3], vec![false, false]);
        let v = weighted_max_pool(&s, &h, &tw, PoolingVariant::NoMlm).unwrap();
        assert_eq!(v.values(), &[0.0, 0.0, 0.0, 5.0]);
    }

    #[test]
    fn specials_are_excluded_and_all_masked_errors() {
        let h = head(vec![vec![1.0, 0.0]], vec![0.0, 0.0]);
        let tw = TermWeightHead::unit(1);
        let mut s = seq(
            vec![vec![100.0], vec![-100.0]],
            vec![0, 1],
            vec![true, false],
        );
        let v = weighted_max_pool(&s, &h, &tw, PoolingVariant::Full).unwrap();
        assert!(v.values()[1] > 0.99);
        s.unmask_token(0);
        let v = weighted_max_pool(&s, &h, &tw, PoolingVariant::Full).unwrap();
        assert!(v.values()[0] > 0.99);

        let all = seq(vec![vec![1.0]], vec![0], vec![true]);
        assert_eq!(
            weighted_max_pool(&all, &h, &tw, PoolingVariant::Full),
            Err(Error::EmptySequence)
        );
    }

    #[test]
    fn no_mlm_rejects_out_of_vocab() {
        let h = head(vec![vec![0.0; 2]], vec![0.0; 2]);
        let s = seq(vec![vec![1.0]], vec![9], vec![false]);
        assert!(matches!(
            weighted_max_pool(&s, &h, &TermWeightHead::unit(1), PoolingVariant::NoMlm),
            Err(Error::TokenOutOfRange { token: 9, .. })
        ));
    }

    fn arb_case() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<Vec<f64>>, Vec<u32>)> {
        let d = 3usize;
        let vocab = 6usize;
        (
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, vocab), d),
            prop::collection::vec(-1.0f64..1.0, d),
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, d), 1..6),
        )
            .prop_flat_map(move |(w, tw, rows)| {
                let n = rows.len();
                (
                    Just(w),
                    Just(tw),
                    Just(rows),
                    prop::collection::vec(0u32..vocab as u32, n),
                )
            })
    }

    proptest! {
        #[test]
        fn softmax_normalized((w, _tw, rows, _ids) in arb_case()) {
            let h = head(w, vec![0.0; 6]);
            for r in &rows {
                let p = mlm_project(r, &h).unwrap();
                prop_assert!(p.iter().all(|&x| x >= 0.0));
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            }
        }

        #[test]
        fn pool_dominates_and_attains((w, twv, rows, ids) in arb_case()) {
            let h = head(w, vec![0.0; 6]);
            let tw = TermWeightHead::new(twv, 0.1).unwrap();
            let n = rows.len();
            let s = seq(rows.clone(), ids, vec![false; n]);
            let v = weighted_max_pool(&s, &h, &tw, PoolingVariant::Full).unwrap();
            let mut attained = vec![false; 6];
            for r in &rows {
                let wi = term_weight(r, &tw).unwrap();
                let p = mlm_project(r, &h).unwrap();
                for u in 0..6 {
                    prop_assert!(v.values()[u] >= wi * p[u]);
                    if v.values()[u] == wi * p[u] { attained[u] = true; }
                }
            }
            prop_assert!(attained.iter().all(|&a| a));
        }

        #[test]
        fn pool_is_permutation_invariant_and_homogeneous(
            (w, twv, rows, ids) in arb_case(), c in 0.1f64..10.0
        ) {
            let h = head(w, vec![0.0; 6]);
            let tw = TermWeightHead::new(twv.clone(), 0.1).unwrap();
            let n = rows.len();
            let s = seq(rows.clone(), ids.clone(), vec![false; n]);
            let v = weighted_max_pool(&s, &h, &tw, PoolingVariant::Full).unwrap();

            let mut rrows = rows.clone();
            let mut rids = ids.clone();
            rrows.reverse();
            rids.reverse();
            let rs = seq(rrows, rids, vec![false; n]);
            prop_assert_eq!(&v, &weighted_max_pool(&rs, &h, &tw, PoolingVariant::Full).unwrap());

            let scaled = TermWeightHead::new(twv.iter().map(|x| x * c).collect(), 0.1 * c).unwrap();
            let vs = weighted_max_pool(&s, &h, &scaled, PoolingVariant::Full).unwrap();
            for (a, b) in v.values().iter().zip(vs.values()) {
                prop_assert!((a * c - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }

        #[test]
        fn no_mlm_support_bounded_by_distinct_tokens((w, twv, rows, ids) in arb_case()) {
            let h = head(w, vec![0.0; 6]);
            let tw = TermWeightHead::new(twv, 0.1).unwrap();
            let n = rows.len();
            let mut distinct = ids.clone();
            distinct.sort_unstable();
            distinct.dedup();
            let s = seq(rows, ids, vec![false; n]);
            let v = weighted_max_pool(&s, &h, &tw, PoolingVariant::NoMlm).unwrap();
            prop_assert!(v.values().iter().filter(|&&x| x != 0.0).count() <= distinct.len());
        }
    }
}
