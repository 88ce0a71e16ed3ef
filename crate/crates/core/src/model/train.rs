//! Next-item training: full cross-entropy over warm items, Adam updates,
//! per-step delta clipping, and early stopping on validation NDCG@10.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::SplitDataset;
use crate::embeddings::EmbeddingTable;
use crate::error::{Error, Result};
use crate::eval::{ndcg_at_k, rank_of};
use crate::model::SeqModel;
use crate::numerics::autograd::backward;
use crate::numerics::ops;
use crate::numerics::optim::AdamState;
use crate::numerics::tensor::Tensor;

const SHUFFLE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;
const DROPOUT_SALT: u64 = 0xd1b5_4a32_d192_ed03;

/// Callbacks fired during training; default implementations do nothing.
pub trait TrainObserver {
    fn on_step(&mut self, _step: usize, _loss: f64, _table: &EmbeddingTable) {}
    fn on_epoch(&mut self, _epoch: usize, _step: usize, _mean_loss: f64, _val_ndcg: f64) {}
}

pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainStats {
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_ndcg: f64,
    pub total_steps: usize,
}

struct Window {
    input: Vec<usize>,
    targets: Vec<usize>,
}

impl SeqModel {
    /// Trains in place and leaves the parameters of the best validation
    /// epoch loaded. Without validation cases the final epoch wins.
    pub fn train(
        &mut self,
        split: &SplitDataset,
        observer: &mut dyn TrainObserver,
    ) -> Result<TrainStats> {
        let config = self.config.clone();
        let max_len = config.max_seq_len;
        let windows: Vec<Window> = split
            .train_sequences
            .iter()
            .filter(|seq| seq.len() >= 2)
            .map(|seq| {
                let tail = &seq[seq.len().saturating_sub(max_len + 1)..];
                Window {
                    input: tail[..tail.len() - 1].to_vec(),
                    targets: tail[1..].to_vec(),
                }
            })
            .collect();
        if windows.is_empty() {
            return Err(Error::InvalidArgument {
                context: "no training sequences of length >= 2".into(),
            });
        }

        // Scoring space for the loss: every warm item, by table position.
        let candidates: Vec<Option<usize>> = self.warm_items.iter().map(|&i| Some(i)).collect();
        let mut candidate_pos: Vec<Option<usize>> = vec![None; self.table.num_items()];
        for (pos, &item) in self.warm_items.iter().enumerate() {
            candidate_pos[item] = Some(pos);
        }

        let mut adam = AdamState::new(self.trainable_parameters(), config.learning_rate);
        let mut shuffle_rng = ChaCha8Rng::seed_from_u64(config.seed ^ SHUFFLE_SALT);
        let mut dropout_rng = ChaCha8Rng::seed_from_u64(config.seed ^ DROPOUT_SALT);

        let has_validation = !split.validation_cases.is_empty();
        let mut best_val = f64::NEG_INFINITY;
        let mut best_epoch = 0usize;
        let mut best_snapshot: Option<Vec<(Tensor, Vec<f64>)>> = None;
        let mut epochs_without_improvement = 0usize;
        let mut global_step = 0usize;
        let mut epochs_run = 0usize;

        let mut order: Vec<usize> = (0..windows.len()).collect();
        for epoch in 1..=config.max_epochs {
            epochs_run = epoch;
            order.shuffle(&mut shuffle_rng);
            let mut loss_sum = 0.0;
            let mut batches = 0usize;
            for chunk in order.chunks(config.batch_size) {
                let rows = chunk.len();
                let len = chunk
                    .iter()
                    .map(|&w| windows[w].input.len())
                    .max()
                    .expect("non-empty chunk");
                let mut indices: Vec<Option<usize>> = Vec::with_capacity(rows * len);
                let mut targets: Vec<Option<usize>> = Vec::with_capacity(rows * len);
                for &w in chunk {
                    let window = &windows[w];
                    for t in 0..len {
                        if t < window.input.len() {
                            indices.push(Some(window.input[t]));
                            let target = window.targets[t];
                            targets.push(candidate_pos[target]);
                        } else {
                            indices.push(None);
                            targets.push(None);
                        }
                    }
                }

                let hidden = self.forward(&indices, rows, len, Some(&mut dropout_rng))?;
                let hidden = ops::reshape(&hidden, vec![rows * len, config.embedding_dim])?;
                let warm_matrix = self.table.gather(&candidates)?;
                let logits = ops::matmul(&hidden, &ops::transpose2d(&warm_matrix)?)?;
                let loss = ops::cross_entropy(&logits, &targets)?;
                let loss_value = loss.item()?;
                if !loss_value.is_finite() {
                    return Err(Error::Divergence {
                        epoch,
                        step: global_step + 1,
                    });
                }
                backward(&loss)?;
                self.table.mask_frozen_gradients();
                adam.step()?;
                self.table.clip_deltas();
                global_step += 1;
                loss_sum += loss_value;
                batches += 1;
                observer.on_step(global_step, loss_value, &self.table);
            }

            let val_ndcg = if has_validation {
                self.validation_ndcg(split, 10)?
            } else {
                f64::NAN
            };
            observer.on_epoch(epoch, global_step, loss_sum / batches as f64, val_ndcg);

            if has_validation {
                if val_ndcg > best_val {
                    best_val = val_ndcg;
                    best_epoch = epoch;
                    best_snapshot = Some(self.snapshot_trainables());
                    epochs_without_improvement = 0;
                } else {
                    epochs_without_improvement += 1;
                    if epochs_without_improvement >= config.patience {
                        break;
                    }
                }
            } else {
                best_epoch = epoch;
            }
        }

        if let Some(snapshot) = best_snapshot {
            for (tensor, values) in snapshot {
                tensor.set_values(&values)?;
                tensor.clear_grad();
            }
        }

        Ok(TrainStats {
            epochs_run,
            best_epoch,
            best_val_ndcg: best_val,
            total_steps: global_step,
        })
    }

    fn snapshot_trainables(&self) -> Vec<(Tensor, Vec<f64>)> {
        self.trainable_parameters()
            .into_iter()
            .map(|(_, tensor)| {
                let values = tensor.to_vec();
                (tensor, values)
            })
            .collect()
    }

    /// Mean NDCG@k over validation cases under this variant's input and
    /// candidate policies.
    pub fn validation_ndcg(&self, split: &SplitDataset, k: usize) -> Result<f64> {
        if split.validation_cases.is_empty() {
            return Err(Error::EmptyInput {
                context: "validation",
            });
        }
        let mut total = 0.0;
        let mut counted = 0usize;
        for case in &split.validation_cases {
            match self.recommend(&case.input, k) {
                Ok(list) => {
                    total += ndcg_at_k(rank_of(&list, case.ground_truth), k);
                    counted += 1;
                }
                Err(Error::EmptyInput { .. }) => continue,
                Err(other) => return Err(other),
            }
        }
        if counted == 0 {
            return Err(Error::EmptyInput {
                context: "validation",
            });
        }
        Ok(total / counted as f64)
    }
}
