//! Item representation providers.
//!
//! Three variants share one table shape:
//! - `IdLearned`: classic fully trainable rows from random init.
//! - `ContentInit`: rows start from unit-norm content vectors, then train
//!   freely.
//! - `FrozenDelta`: rows are a frozen unit-norm content vector plus a small
//!   trainable correction whose norm is clipped to `delta_max` after every
//!   optimizer step, which bounds how far a representation can rotate away
//!   from its content anchor.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::ContentMatrix;
use crate::error::{Error, Result};
use crate::numerics::ops;
use crate::numerics::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingVariant {
    IdLearned,
    ContentInit,
    FrozenDelta,
}

impl std::fmt::Display for EmbeddingVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            EmbeddingVariant::IdLearned => "id_learned",
            EmbeddingVariant::ContentInit => "content_init",
            EmbeddingVariant::FrozenDelta => "frozen_delta",
        };
        f.write_str(name)
    }
}

#[derive(Debug)]
pub struct EmbeddingTable {
    variant: EmbeddingVariant,
    base: Tensor,
    delta: Option<Tensor>,
    delta_max: Option<f64>,
    /// Rows of `base` that stay trainable under `FrozenDelta` because no
    /// content vector covers them. Empty for the other variants.
    fallback_rows: Vec<usize>,
    covered: Vec<bool>,
    num_items: usize,
    dim: usize,
}

impl EmbeddingTable {
    /// Builds a table for `num_items` items of width `dim`.
    ///
    /// Content is required for the content-backed variants; rows it covers
    /// start as the (unit-norm) content vectors, uncovered rows fall back to
    /// the same random init the id-learned variant uses.
    pub fn init(
        variant: EmbeddingVariant,
        content: Option<&ContentMatrix>,
        num_items: usize,
        dim: usize,
        delta_max: Option<f64>,
        seed: u64,
    ) -> Result<EmbeddingTable> {
        if matches!(
            variant,
            EmbeddingVariant::ContentInit | EmbeddingVariant::FrozenDelta
        ) && content.is_none()
        {
            return Err(Error::InvalidArgument {
                context: format!("variant {variant} requires a content matrix"),
            });
        }
        if let Some(content) = content {
            if content.dim != dim {
                return Err(Error::DimMismatch {
                    context: "embedding init",
                    expected: dim,
                    got: content.dim,
                });
            }
        }
        let delta_max = match variant {
            EmbeddingVariant::FrozenDelta => {
                let value = delta_max.ok_or_else(|| Error::InvalidArgument {
                    context: "frozen_delta requires delta_max".into(),
                })?;
                if !(0.0..1.0).contains(&value) {
                    return Err(Error::InvalidArgument {
                        context: format!("delta_max must be in [0, 1), got {value}"),
                    });
                }
                Some(value)
            }
            _ => None,
        };

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut base = random_rows(num_items, dim, &mut rng);
        let mut covered = vec![false; num_items];
        if let Some(content) = content {
            for &item in &content.coverage {
                covered[item] = true;
                base[item * dim..(item + 1) * dim]
                    .copy_from_slice(content.row(item).expect("covered row"));
            }
        }

        let (base, delta, fallback_rows) = match variant {
            EmbeddingVariant::IdLearned | EmbeddingVariant::ContentInit => (
                Tensor::new(vec![num_items, dim], base)?.requires_grad(),
                None,
                Vec::new(),
            ),
            EmbeddingVariant::FrozenDelta => {
                let fallback_rows: Vec<usize> =
                    (0..num_items).filter(|&i| !covered[i]).collect();
                let base = Tensor::new(vec![num_items, dim], base)?;
                // The whole matrix only becomes a parameter when some rows
                // lack content; covered rows then have their gradients
                // masked out before each step.
                let base = if fallback_rows.is_empty() {
                    base
                } else {
                    base.requires_grad()
                };
                let delta = Tensor::zeros(vec![num_items, dim]).requires_grad();
                (base, Some(delta), fallback_rows)
            }
        };

        Ok(EmbeddingTable {
            variant,
            base,
            delta,
            delta_max,
            fallback_rows,
            covered,
            num_items,
            dim,
        })
    }

    pub fn variant(&self) -> EmbeddingVariant {
        self.variant
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn delta_max(&self) -> Option<f64> {
        self.delta_max
    }

    pub fn base(&self) -> &Tensor {
        &self.base
    }

    pub fn delta(&self) -> Option<&Tensor> {
        self.delta.as_ref()
    }

    pub fn is_covered(&self, item: usize) -> bool {
        self.covered.get(item).copied().unwrap_or(false)
    }

    /// Rows that fell back to learned embeddings under a content variant.
    pub fn fallback_rows(&self) -> &[usize] {
        &self.fallback_rows
    }

    /// The effective representation of one item, outside any graph.
    pub fn lookup(&self, item: usize) -> Result<Vec<f64>> {
        if item >= self.num_items {
            return Err(Error::IndexOutOfRange {
                index: item,
                len: self.num_items,
            });
        }
        let base = self.base.values();
        let mut row = base[item * self.dim..(item + 1) * self.dim].to_vec();
        if let Some(delta) = &self.delta {
            let dv = delta.values();
            for (r, d) in row.iter_mut().zip(&dv[item * self.dim..(item + 1) * self.dim]) {
                *r += d;
            }
        }
        Ok(row)
    }

    /// Graph-recorded row gather used by the model; `None` rows are padding.
    pub fn gather(&self, indices: &[Option<usize>]) -> Result<Tensor> {
        let gathered = ops::gather_rows(&self.base, indices)?;
        match &self.delta {
            Some(delta) => ops::add(&gathered, &ops::gather_rows(delta, indices)?),
            None => Ok(gathered),
        }
    }

    /// Parameters that participate in optimization, with stable names.
    pub fn trainable_parameters(&self) -> Vec<(String, Tensor)> {
        let mut params = Vec::new();
        if self.base.is_trainable() {
            params.push(("item_table.base".to_string(), self.base.clone()));
        }
        if let Some(delta) = &self.delta {
            params.push(("item_table.delta".to_string(), delta.clone()));
        }
        params
    }

    /// Zeroes gradient rows of the frozen part of `base` so an optimizer
    /// step cannot move content-covered rows. No-op unless the table mixes
    /// frozen and fallback rows.
    pub fn mask_frozen_gradients(&self) {
        if self.variant != EmbeddingVariant::FrozenDelta || self.fallback_rows.is_empty() {
            return;
        }
        let dim = self.dim;
        if let Some(mut grad) = self.base.grad() {
            for item in 0..self.num_items {
                if self.covered[item] {
                    grad[item * dim..(item + 1) * dim].fill(0.0);
                }
            }
            self.base.clear_grad();
            self.base.accumulate_grad(&grad);
        }
    }

    /// Projects every correction row back inside the `delta_max` ball;
    /// invoked after each optimizer step.
    pub fn clip_deltas(&self) {
        let (Some(delta), Some(max)) = (&self.delta, self.delta_max) else {
            return;
        };
        let dim = self.dim;
        delta.update_values(|values| {
            for row in values.chunks_exact_mut(dim) {
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > max {
                    let factor = max / norm;
                    for v in row.iter_mut() {
                        *v *= factor;
                    }
                }
            }
        });
    }

    /// Largest correction norm across items; 0 when no delta exists.
    pub fn max_delta_norm(&self) -> f64 {
        match &self.delta {
            None => 0.0,
            Some(delta) => delta
                .values()
                .chunks_exact(self.dim)
                .map(|row| row.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        }
    }

    /// Reassembles a table from checkpointed pieces.
    pub fn from_parts(
        variant: EmbeddingVariant,
        base: Tensor,
        delta: Option<Tensor>,
        delta_max: Option<f64>,
        covered: Vec<bool>,
        num_items: usize,
        dim: usize,
    ) -> Result<EmbeddingTable> {
        if base.shape() != vec![num_items, dim] {
            return Err(Error::InvalidShape {
                op: "embedding_from_parts",
                detail: format!("base shape {:?}", base.shape()),
            });
        }
        let fallback_rows = match variant {
            EmbeddingVariant::FrozenDelta => (0..num_items).filter(|&i| !covered[i]).collect(),
            _ => Vec::new(),
        };
        Ok(EmbeddingTable {
            variant,
            base,
            delta,
            delta_max,
            fallback_rows,
            covered,
            num_items,
            dim,
        })
    }

    pub fn covered_flags(&self) -> &[bool] {
        &self.covered
    }
}

fn random_rows(rows: usize, dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let scale = 1.0 / (dim as f64).sqrt();
    (0..rows * dim).map(|_| truncated_normal(rng) * scale).collect()
}

/// Standard normal resampled until it lands within two standard deviations.
fn truncated_normal(rng: &mut ChaCha8Rng) -> f64 {
    loop {
        let z: f64 = StandardNormal.sample(rng);
        if z.abs() <= 2.0 {
            return z;
        }
    }
}

/// Lower bound on the cosine between a unit content vector and its adjusted
/// form when the correction norm is capped at `delta_max`.
pub fn min_cosine_similarity(delta_max: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta_max) {
        return Err(Error::InvalidArgument {
            context: format!("delta_max must be in [0, 1), got {delta_max}"),
        });
    }
    Ok((1.0 - delta_max * delta_max).sqrt())
}

/// Cosine between a unit vector and its adjusted form when the correction
/// has norm `delta_norm` and sits at interior angle `theta`.
pub fn adjusted_similarity(delta_norm: f64, theta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&delta_norm) {
        return Err(Error::InvalidArgument {
            context: format!("delta_norm must be in [0, 1), got {delta_norm}"),
        });
    }
    let s = delta_norm * theta.sin();
    Ok((1.0 - s * s).sqrt())
}

/// Triangle relating a unit content vector, a correction of norm
/// `delta_norm` at interior angle `theta`, and the implied rotation `gamma`
/// of the adjusted representation.
#[derive(Clone, Copy, Debug)]
pub struct GeometryBound {
    pub delta_norm: f64,
    pub theta: f64,
    pub gamma: f64,
}

impl GeometryBound {
    pub fn new(delta_norm: f64, theta: f64) -> Result<GeometryBound> {
        if !(0.0..1.0).contains(&delta_norm) {
            return Err(Error::InvalidArgument {
                context: format!("delta_norm must be in [0, 1), got {delta_norm}"),
            });
        }
        if !(0.0..=std::f64::consts::PI).contains(&theta) {
            return Err(Error::InvalidArgument {
                context: format!("theta must be in [0, pi], got {theta}"),
            });
        }
        // Law of sines: sin(gamma) = delta_norm * sin(theta).
        let gamma = (delta_norm * theta.sin()).asin();
        Ok(GeometryBound {
            delta_norm,
            theta,
            gamma,
        })
    }

    pub fn similarity(&self) -> f64 {
        self.gamma.cos()
    }
}
