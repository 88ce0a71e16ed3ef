//! Causal transformer over item sequences with tied-embedding scoring.
//!
//! The item table provides both the input rows and the scoring rows, so the
//! relevance of item `i` for a user is the inner product of the final hidden
//! state with the item's effective embedding.

mod train;

pub use train::{NoopObserver, TrainObserver, TrainStats};

use std::collections::{BTreeSet, HashMap};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embeddings::{EmbeddingTable, EmbeddingVariant};
use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::tensor::{no_grad, Tensor};

const LAYER_NORM_EPS: f64 = 1e-8;

/// How unknown (untrained) items inside input sequences are handled by the
/// id-learned baseline: removed from the sequence, or kept as a zero-content
/// placeholder that still occupies a position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ColdInputPolicy {
    #[default]
    Drop,
    OovToken,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub num_blocks: usize,
    pub num_heads: usize,
    pub dropout: f64,
    pub max_seq_len: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    #[serde(default)]
    pub cold_input_policy: ColdInputPolicy,
    #[serde(default)]
    pub filter_seen: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            embedding_dim: 64,
            num_blocks: 2,
            num_heads: 1,
            dropout: 0.3,
            max_seq_len: 64,
            batch_size: 128,
            learning_rate: 1e-3,
            max_epochs: 200,
            patience: 10,
            seed: 0,
            cold_input_policy: ColdInputPolicy::Drop,
            filter_seen: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument { context: msg });
        if self.embedding_dim == 0 {
            return fail("embedding_dim must be positive".into());
        }
        if self.num_heads == 0 || self.embedding_dim % self.num_heads != 0 {
            return fail(format!(
                "embedding_dim {} not divisible by num_heads {}",
                self.embedding_dim, self.num_heads
            ));
        }
        if self.max_seq_len < 2 {
            return fail(format!("max_seq_len must be >= 2, got {}", self.max_seq_len));
        }
        if self.num_blocks == 0 {
            return fail("num_blocks must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must be in [0, 1), got {}", self.dropout));
        }
        if self.learning_rate <= 0.0 {
            return fail(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if self.max_epochs == 0 {
            return fail("max_epochs must be positive".into());
        }
        Ok(())
    }
}

struct LayerNormParams {
    gamma: Tensor,
    beta: Tensor,
}

impl LayerNormParams {
    fn new(dim: usize) -> Self {
        LayerNormParams {
            gamma: Tensor::full(vec![dim], 1.0).requires_grad(),
            beta: Tensor::zeros(vec![dim]).requires_grad(),
        }
    }
}

struct Block {
    wq: Tensor,
    bq: Tensor,
    wk: Tensor,
    bk: Tensor,
    wv: Tensor,
    bv: Tensor,
    wo: Tensor,
    bo: Tensor,
    norm_attn: LayerNormParams,
    ffn_w1: Tensor,
    ffn_b1: Tensor,
    ffn_w2: Tensor,
    ffn_b2: Tensor,
    norm_ffn: LayerNormParams,
}

pub struct SeqModel {
    config: ModelConfig,
    table: EmbeddingTable,
    positional: Tensor,
    blocks: Vec<Block>,
    final_norm: LayerNormParams,
    warm_items: Vec<usize>,
    is_warm: Vec<bool>,
}

impl SeqModel {
    /// Fresh model with randomly initialized transformer weights, zero
    /// positional rows, and the given item table.
    pub fn new(
        table: EmbeddingTable,
        config: ModelConfig,
        warm_items: &BTreeSet<usize>,
    ) -> Result<SeqModel> {
        config.validate()?;
        if table.dim() != config.embedding_dim {
            return Err(Error::DimMismatch {
                context: "model init",
                expected: config.embedding_dim,
                got: table.dim(),
            });
        }
        let m = config.embedding_dim;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut weight = |rows: usize, cols: usize| -> Tensor {
            let scale = 1.0 / (rows as f64).sqrt();
            let values: Vec<f64> = (0..rows * cols)
                .map(|_| truncated_normal(&mut rng) * scale)
                .collect();
            Tensor::new(vec![rows, cols], values)
                .expect("shape matches values")
                .requires_grad()
        };

        let blocks = (0..config.num_blocks)
            .map(|_| Block {
                wq: weight(m, m),
                bq: Tensor::zeros(vec![m]).requires_grad(),
                wk: weight(m, m),
                bk: Tensor::zeros(vec![m]).requires_grad(),
                wv: weight(m, m),
                bv: Tensor::zeros(vec![m]).requires_grad(),
                wo: weight(m, m),
                bo: Tensor::zeros(vec![m]).requires_grad(),
                norm_attn: LayerNormParams::new(m),
                ffn_w1: weight(m, m),
                ffn_b1: Tensor::zeros(vec![m]).requires_grad(),
                ffn_w2: weight(m, m),
                ffn_b2: Tensor::zeros(vec![m]).requires_grad(),
                norm_ffn: LayerNormParams::new(m),
            })
            .collect();

        let mut is_warm = vec![false; table.num_items()];
        for &item in warm_items {
            if item >= table.num_items() {
                return Err(Error::IndexOutOfRange {
                    index: item,
                    len: table.num_items(),
                });
            }
            is_warm[item] = true;
        }

        Ok(SeqModel {
            positional: Tensor::zeros(vec![config.max_seq_len, m]).requires_grad(),
            final_norm: LayerNormParams::new(m),
            blocks,
            table,
            warm_items: warm_items.iter().copied().collect(),
            is_warm,
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn table(&self) -> &EmbeddingTable {
        &self.table
    }

    pub fn warm_items(&self) -> &[usize] {
        &self.warm_items
    }

    /// Trainable parameters with stable names, item table first.
    pub fn trainable_parameters(&self) -> Vec<(String, Tensor)> {
        let mut params = self.table.trainable_parameters();
        params.push(("positional".into(), self.positional.clone()));
        for (i, block) in self.blocks.iter().enumerate() {
            let mut push = |suffix: &str, tensor: &Tensor| {
                params.push((format!("block{i}.{suffix}"), tensor.clone()));
            };
            push("attn.wq", &block.wq);
            push("attn.bq", &block.bq);
            push("attn.wk", &block.wk);
            push("attn.bk", &block.bk);
            push("attn.wv", &block.wv);
            push("attn.bv", &block.bv);
            push("attn.wo", &block.wo);
            push("attn.bo", &block.bo);
            push("norm_attn.gamma", &block.norm_attn.gamma);
            push("norm_attn.beta", &block.norm_attn.beta);
            push("ffn.w1", &block.ffn_w1);
            push("ffn.b1", &block.ffn_b1);
            push("ffn.w2", &block.ffn_w2);
            push("ffn.b2", &block.ffn_b2);
            push("norm_ffn.gamma", &block.norm_ffn.gamma);
            push("norm_ffn.beta", &block.norm_ffn.beta);
        }
        params.push(("final_norm.gamma".into(), self.final_norm.gamma.clone()));
        params.push(("final_norm.beta".into(), self.final_norm.beta.clone()));
        params
    }

    /// Every tensor needed to reconstruct the model, including the frozen
    /// base matrix.
    pub fn named_tensors(&self) -> Vec<(String, Tensor)> {
        let mut tensors = vec![("item_table.base".to_string(), self.table.base().clone())];
        if let Some(delta) = self.table.delta() {
            tensors.push(("item_table.delta".into(), delta.clone()));
        }
        for (name, tensor) in self.trainable_parameters() {
            if !name.starts_with("item_table.") {
                tensors.push((name, tensor));
            }
        }
        tensors
    }

    /// Rebuilds a model from checkpointed tensors; `values` maps the names
    /// produced by [`SeqModel::named_tensors`] minus the item table, which
    /// arrives preassembled.
    pub fn assemble(
        table: EmbeddingTable,
        config: ModelConfig,
        warm_items: &BTreeSet<usize>,
        values: &HashMap<String, Vec<f64>>,
    ) -> Result<SeqModel> {
        let model = SeqModel::new(table, config, warm_items)?;
        for (name, tensor) in model.named_tensors() {
            if name.starts_with("item_table.") {
                continue;
            }
            let stored = values.get(&name).ok_or_else(|| Error::InvalidArgument {
                context: format!("checkpoint missing tensor '{name}'"),
            })?;
            tensor.set_values(stored)?;
        }
        Ok(model)
    }

    /// Forward pass over a right-padded index batch; `None` marks padding.
    /// Dropout fires only when a generator is supplied.
    pub(crate) fn forward(
        &self,
        indices: &[Option<usize>],
        batch: usize,
        len: usize,
        mut dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Tensor> {
        debug_assert_eq!(indices.len(), batch * len);
        let m = self.config.embedding_dim;
        let heads = self.config.num_heads;
        let head_dim = m / heads;

        let drop = |x: &Tensor, rng: &mut Option<&mut ChaCha8Rng>| -> Result<Tensor> {
            match rng {
                Some(rng) => ops::dropout(x, self.config.dropout, *rng),
                None => Ok(x.clone()),
            }
        };

        let emb = self.table.gather(indices)?;
        let emb = ops::scale(&emb, (m as f64).sqrt());
        let emb = ops::reshape(&emb, vec![batch, len, m])?;
        let positions: Vec<Option<usize>> = (0..len).map(Some).collect();
        let pos = ops::gather_rows(&self.positional, &positions)?;
        let mut x = ops::add(&emb, &pos)?;
        x = drop(&x, &mut dropout_rng)?;

        for block in &self.blocks {
            // Attention sublayer, pre-norm residual wiring.
            let normed = ops::layer_norm(&x, &block.norm_attn.gamma, &block.norm_attn.beta, LAYER_NORM_EPS)?;
            let flat = ops::reshape(&normed, vec![batch * len, m])?;
            let q = ops::add(&ops::matmul(&flat, &block.wq)?, &block.bq)?;
            let k = ops::add(&ops::matmul(&flat, &block.wk)?, &block.bk)?;
            let v = ops::add(&ops::matmul(&flat, &block.wv)?, &block.bv)?;
            let q = ops::reshape(&q, vec![batch, len, m])?;
            let k = ops::reshape(&k, vec![batch, len, m])?;
            let v = ops::reshape(&v, vec![batch, len, m])?;

            let mut head_outputs = Vec::with_capacity(heads);
            for h in 0..heads {
                let (qh, kh, vh) = if heads == 1 {
                    (q.clone(), k.clone(), v.clone())
                } else {
                    (
                        ops::narrow_last(&q, h * head_dim, head_dim)?,
                        ops::narrow_last(&k, h * head_dim, head_dim)?,
                        ops::narrow_last(&v, h * head_dim, head_dim)?,
                    )
                };
                let scores = ops::bmm(&qh, &kh, true)?;
                let scores = ops::scale(&scores, 1.0 / (head_dim as f64).sqrt());
                let masked = ops::causal_mask_fill(&scores)?;
                let weights = ops::softmax_last(&masked)?;
                head_outputs.push(ops::bmm(&weights, &vh, false)?);
            }
            let context = if heads == 1 {
                head_outputs.pop().expect("one head")
            } else {
                ops::concat_last(&head_outputs)?
            };
            let context = ops::reshape(&context, vec![batch * len, m])?;
            let attn_out = ops::add(&ops::matmul(&context, &block.wo)?, &block.bo)?;
            let attn_out = ops::reshape(&attn_out, vec![batch, len, m])?;
            let attn_out = drop(&attn_out, &mut dropout_rng)?;
            x = ops::add(&x, &attn_out)?;

            // Position-wise feed-forward sublayer.
            let normed = ops::layer_norm(&x, &block.norm_ffn.gamma, &block.norm_ffn.beta, LAYER_NORM_EPS)?;
            let flat = ops::reshape(&normed, vec![batch * len, m])?;
            let hidden = ops::relu(&ops::add(&ops::matmul(&flat, &block.ffn_w1)?, &block.ffn_b1)?);
            let ffn_out = ops::add(&ops::matmul(&hidden, &block.ffn_w2)?, &block.ffn_b2)?;
            let ffn_out = ops::reshape(&ffn_out, vec![batch, len, m])?;
            let ffn_out = drop(&ffn_out, &mut dropout_rng)?;
            x = ops::add(&x, &ffn_out)?;
        }

        ops::layer_norm(&x, &self.final_norm.gamma, &self.final_norm.beta, LAYER_NORM_EPS)
    }

    /// Hidden states for every position of a single sequence, in eval mode.
    pub fn encode_positions(&self, input: &[usize]) -> Result<Vec<Vec<f64>>> {
        if input.is_empty() {
            return Err(Error::EmptyInput { context: "encode" });
        }
        let start = input.len().saturating_sub(self.config.max_seq_len);
        let window: Vec<Option<usize>> = input[start..].iter().map(|&i| Some(i)).collect();
        self.encode_window(&window)
    }

    fn encode_window(&self, window: &[Option<usize>]) -> Result<Vec<Vec<f64>>> {
        let len = window.len();
        let m = self.config.embedding_dim;
        let hidden = no_grad(|| self.forward(window, 1, len, None))?;
        let values = hidden.to_vec();
        Ok(values.chunks_exact(m).map(|row| row.to_vec()).collect())
    }

    /// User representation: the hidden state at the last position of the
    /// truncated input, computed without dropout.
    pub fn encode(&self, input: &[usize]) -> Result<Vec<f64>> {
        Ok(self
            .encode_positions(input)?
            .pop()
            .expect("non-empty input"))
    }

    /// Inner-product relevance scores for the candidate items.
    pub fn score_items(&self, user_repr: &[f64], candidates: &[usize]) -> Result<Vec<f64>> {
        if user_repr.len() != self.config.embedding_dim {
            return Err(Error::DimMismatch {
                context: "score_items",
                expected: self.config.embedding_dim,
                got: user_repr.len(),
            });
        }
        candidates
            .iter()
            .map(|&item| {
                let row = self.table.lookup(item)?;
                Ok(row.iter().zip(user_repr).map(|(a, b)| a * b).sum())
            })
            .collect()
    }

    /// The candidate set this variant is allowed to rank: content-backed
    /// variants score every item, the id-learned baseline scores only items
    /// it has trained rows for.
    pub fn scoring_candidates(&self) -> Vec<usize> {
        match self.table.variant() {
            EmbeddingVariant::IdLearned => self.warm_items.clone(),
            _ => (0..self.table.num_items()).collect(),
        }
    }

    /// Applies the cold-input policy: content variants keep every item;
    /// the id-learned baseline drops unknown items or blanks them out,
    /// depending on configuration.
    pub fn apply_input_policy(&self, input: &[usize]) -> Vec<Option<usize>> {
        match self.table.variant() {
            EmbeddingVariant::IdLearned => input
                .iter()
                .filter_map(|&item| {
                    let known = self.is_warm.get(item).copied().unwrap_or(false);
                    match (known, self.config.cold_input_policy) {
                        (true, _) => Some(Some(item)),
                        (false, ColdInputPolicy::Drop) => None,
                        (false, ColdInputPolicy::OovToken) => Some(None),
                    }
                })
                .collect(),
            _ => input.iter().map(|&i| Some(i)).collect(),
        }
    }

    /// Top-`k` recommendation with deterministic tie-breaking by ascending
    /// item index. Returns every candidate when `k` exceeds the candidate
    /// count.
    pub fn recommend(&self, input: &[usize], k: usize) -> Result<Vec<usize>> {
        if k == 0 {
            return Err(Error::InvalidArgument {
                context: "recommend requires k >= 1".into(),
            });
        }
        let window = self.apply_input_policy(input);
        if window.is_empty() {
            return Err(Error::EmptyInput { context: "recommend" });
        }
        let start = window.len().saturating_sub(self.config.max_seq_len);
        let user_repr = self
            .encode_window(&window[start..])?
            .pop()
            .expect("non-empty window");

        let mut candidates = self.scoring_candidates();
        if self.config.filter_seen {
            let seen: std::collections::HashSet<usize> = input.iter().copied().collect();
            candidates.retain(|item| !seen.contains(item));
        }
        let scores = self.score_items(&user_repr, &candidates)?;
        let mut ranked: Vec<(usize, f64)> = candidates.into_iter().zip(scores).collect();
        ranked.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        Ok(ranked.into_iter().take(k).map(|(item, _)| item).collect())
    }
}

fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::EmbeddingVariant;

    pub(super) fn id_model(num_items: usize, warm: &[usize], config: ModelConfig) -> SeqModel {
        let table = EmbeddingTable::init(
            EmbeddingVariant::IdLearned,
            None,
            num_items,
            config.embedding_dim,
            None,
            config.seed,
        )
        .unwrap();
        SeqModel::new(table, config, &warm.iter().copied().collect()).unwrap()
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            embedding_dim: 8,
            num_blocks: 1,
            num_heads: 2,
            dropout: 0.0,
            max_seq_len: 6,
            batch_size: 4,
            max_epochs: 5,
            patience: 2,
            seed: 3,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation_catches_bad_values() {
        let mut config = ModelConfig::default();
        config.num_heads = 3;
        config.embedding_dim = 64;
        assert!(config.validate().is_err());
        let mut config = ModelConfig::default();
        config.max_seq_len = 1;
        assert!(config.validate().is_err());
        let mut config = ModelConfig::default();
        config.dropout = 1.0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn encode_rejects_empty_input() {
        let model = id_model(5, &[0, 1, 2, 3, 4], small_config());
        assert!(matches!(
            model.encode(&[]),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn eval_mode_is_bit_deterministic() {
        let model = id_model(6, &[0, 1, 2, 3, 4, 5], small_config());
        let a = model.encode(&[0, 3, 5, 1]).unwrap();
        let b = model.encode(&[0, 3, 5, 1]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn long_input_equals_truncated_input() {
        let model = id_model(10, &(0..10).collect::<Vec<_>>(), small_config());
        let long: Vec<usize> = vec![9, 8, 7, 0, 1, 2, 3, 4, 5, 6];
        let truncated: Vec<usize> = long[long.len() - 6..].to_vec();
        assert_eq!(
            model.encode(&long).unwrap(),
            model.encode(&truncated).unwrap()
        );
    }

    #[test]
    fn causality_perturbation_only_affects_later_positions() {
        let model = id_model(10, &(0..10).collect::<Vec<_>>(), small_config());
        let base = model.encode_positions(&[1, 2, 3, 4, 5]).unwrap();
        let perturbed = model.encode_positions(&[1, 2, 9, 4, 5]).unwrap();
        for t in 0..2 {
            assert_eq!(base[t], perturbed[t], "position {t} changed");
        }
        assert_ne!(base[2], perturbed[2]);
    }

    #[test]
    fn scoring_matches_brute_force_sort() {
        let model = id_model(5, &[0, 1, 2, 3, 4], small_config());
        let ranked = model.recommend(&[2, 0], 10).unwrap();
        assert_eq!(ranked.len(), 5);
        let h = model.encode(&[2, 0]).unwrap();
        let scores = model.score_items(&h, &[0, 1, 2, 3, 4]).unwrap();
        let mut expected: Vec<(usize, f64)> = (0..5).zip(scores).collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let expected: Vec<usize> = expected.into_iter().map(|(i, _)| i).collect();
        assert_eq!(ranked, expected);
    }

    #[test]
    fn recommend_tie_break_is_ascending_index() {
        // A zero user representation scores every candidate identically.
        let model = id_model(4, &[0, 1, 2, 3], small_config());
        let zero = vec![0.0; 8];
        let scores = model.score_items(&zero, &[0, 1, 2, 3]).unwrap();
        assert!(scores.iter().all(|&s| s == 0.0));
        let mut ranked: Vec<(usize, f64)> = (0..4).zip(scores).collect();
        ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let order: Vec<usize> = ranked.into_iter().map(|(i, _)| i).collect();
        assert_eq!(order, vec![0, 1, 2, 3]);
    }

    #[test]
    fn id_learned_scores_warm_items_only() {
        let model = id_model(6, &[0, 2, 4], small_config());
        assert_eq!(model.scoring_candidates(), vec![0, 2, 4]);
        let ranked = model.recommend(&[0, 2], 10).unwrap();
        for item in ranked {
            assert!([0usize, 2, 4].contains(&item));
        }
    }

    #[test]
    fn input_policy_drops_or_blanks_cold_items() {
        let mut config = small_config();
        let model = id_model(6, &[0, 1, 2], config.clone());
        assert_eq!(
            model.apply_input_policy(&[0, 5, 1]),
            vec![Some(0), Some(1)]
        );
        config.cold_input_policy = ColdInputPolicy::OovToken;
        let model = id_model(6, &[0, 1, 2], config);
        assert_eq!(
            model.apply_input_policy(&[0, 5, 1]),
            vec![Some(0), None, Some(1)]
        );
    }

    #[test]
    fn fully_cold_input_under_drop_policy_is_empty() {
        let model = id_model(6, &[0, 1], small_config());
        assert!(matches!(
            model.recommend(&[4, 5], 3),
            Err(Error::EmptyInput { .. })
        ));
    }
}
