//! Interaction-log ingestion, preprocessing, temporal splitting, and content
//! embedding loading.

mod content;
mod load;
mod preprocess;
mod split;

pub use content::{load_content, write_content_binary, write_content_text, PcaSpec};
pub use load::{load_interactions, ColumnSchema};
pub use preprocess::{preprocess, PreprocessOptions, UserSample};
pub use split::temporal_split;

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

/// One timestamped event, stored with dense user/item indices.
#[derive(Clone, Debug, PartialEq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub timestamp: i64,
    pub weight: Option<f64>,
}

/// The full event stream, globally sorted by `(timestamp, file order)`, with
/// dense contiguous user and item indices.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionLog {
    pub interactions: Vec<Interaction>,
    pub user_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub user_index: HashMap<String, usize>,
    pub item_index: HashMap<String, usize>,
}

impl InteractionLog {
    pub fn num_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_ids.len()
    }

    /// Builds a log from raw events keyed by string ids. Events are sorted
    /// stably by timestamp; dense indices follow first appearance in that
    /// order.
    pub fn from_events(mut events: Vec<(String, String, i64, Option<f64>)>) -> Self {
        events.sort_by_key(|e| e.2);
        let mut user_ids = Vec::new();
        let mut item_ids = Vec::new();
        let mut user_index = HashMap::new();
        let mut item_index = HashMap::new();
        let mut interactions = Vec::with_capacity(events.len());
        for (user_id, item_id, timestamp, weight) in events {
            let user = *user_index.entry(user_id.clone()).or_insert_with(|| {
                user_ids.push(user_id);
                user_ids.len() - 1
            });
            let item = *item_index.entry(item_id.clone()).or_insert_with(|| {
                item_ids.push(item_id);
                item_ids.len() - 1
            });
            interactions.push(Interaction {
                user,
                item,
                timestamp,
                weight,
            });
        }
        InteractionLog {
            interactions,
            user_ids,
            item_ids,
            user_index,
            item_index,
        }
    }

    /// Compacts a filtered set of interactions back into a dense log,
    /// keeping ids and re-deriving indices by first appearance.
    pub(crate) fn compact(&self, kept: Vec<Interaction>) -> InteractionLog {
        let events: Vec<(String, String, i64, Option<f64>)> = kept
            .into_iter()
            .map(|i| {
                (
                    self.user_ids[i.user].clone(),
                    self.item_ids[i.item].clone(),
                    i.timestamp,
                    i.weight,
                )
            })
            .collect();
        InteractionLog::from_events(events)
    }

    /// Per-user ordered item sequences, indexed by user.
    pub fn user_sequences(&self) -> Vec<Vec<usize>> {
        let mut sequences = vec![Vec::new(); self.num_users()];
        for i in &self.interactions {
            sequences[i.user].push(i.item);
        }
        sequences
    }

}

/// A validation or test instance: the model sees `input` and must rank
/// `ground_truth`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub user: usize,
    pub input: Vec<usize>,
    pub ground_truth: usize,
}

/// Train/validation/test material produced by the global temporal split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    /// Pre-boundary item sequence per user index; empty when the user has no
    /// training-period events.
    pub train_sequences: Vec<Vec<usize>>,
    pub validation_cases: Vec<CaseRecord>,
    pub test_cases: Vec<CaseRecord>,
    pub warm_items: BTreeSet<usize>,
    pub cold_items: BTreeSet<usize>,
    pub boundary_timestamp: i64,
    pub num_items: usize,
    pub num_users: usize,
}

impl SplitDataset {
    /// How often each item occurs across training sequences.
    pub fn train_frequencies(&self) -> Vec<usize> {
        let mut freq = vec![0usize; self.num_items];
        for seq in &self.train_sequences {
            for &item in seq {
                freq[item] += 1;
            }
        }
        freq
    }
}

/// Item-aligned content vectors, already projected to the model dimension
/// and normalized to unit length. Uncovered items hold zero rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentMatrix {
    pub vectors: Vec<f64>,
    pub dim: usize,
    pub source_dim: usize,
    pub coverage: BTreeSet<usize>,
    pub num_items: usize,
}

impl ContentMatrix {
    pub fn row(&self, item: usize) -> Option<&[f64]> {
        if self.coverage.contains(&item) {
            Some(&self.vectors[item * self.dim..(item + 1) * self.dim])
        } else {
            None
        }
    }
}
