//! Interaction-log preprocessing: positive-weight filtering, seeded user
//! sampling, consecutive-duplicate removal, and iterative n-core filtering.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Interaction, InteractionLog};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSample {
    pub size: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    /// Keep only interactions with weight >= this threshold; rows without a
    /// weight are dropped when the threshold is set.
    pub min_weight: Option<f64>,
    pub dedup_consecutive: bool,
    /// Users and items below this interaction count are removed, alternating
    /// until stable. Values <= 1 disable the filter.
    pub n_core: usize,
    pub user_sample: Option<UserSample>,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions {
            min_weight: None,
            dedup_consecutive: true,
            n_core: 3,
            user_sample: None,
        }
    }
}

/// Applies, in order: weight threshold, uniform user sampling, consecutive
/// dedup, and n-core filtering. Dedup participates in the n-core fixed point
/// so that the whole pipeline is idempotent: removing low-count items can
/// make previously separated duplicates adjacent again.
pub fn preprocess(log: &InteractionLog, opts: &PreprocessOptions) -> Result<InteractionLog> {
    let mut kept: Vec<Interaction> = log.interactions.clone();

    if let Some(threshold) = opts.min_weight {
        kept.retain(|i| i.weight.is_some_and(|w| w >= threshold));
        if kept.is_empty() {
            return Err(Error::EmptyDataset {
                stage: "weight-threshold",
            });
        }
    }

    if let Some(sample) = opts.user_sample {
        let mut users: Vec<usize> = {
            let mut seen = vec![false; log.num_users()];
            for i in &kept {
                seen[i.user] = true;
            }
            seen.iter()
                .enumerate()
                .filter_map(|(u, &s)| s.then_some(u))
                .collect()
        };
        users.sort_unstable();
        if sample.size < users.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(sample.seed);
            let chosen = rand::seq::index::sample(&mut rng, users.len(), sample.size);
            let mut selected = vec![false; log.num_users()];
            for pos in chosen.iter() {
                selected[users[pos]] = true;
            }
            kept.retain(|i| selected[i.user]);
        }
        if kept.is_empty() {
            return Err(Error::EmptyDataset {
                stage: "user-sample",
            });
        }
    }

    loop {
        let before = kept.len();
        if opts.dedup_consecutive {
            kept = dedup_consecutive(kept);
        }
        if opts.n_core > 1 {
            kept = drop_below_count(kept, opts.n_core, |i| i.user);
            kept = drop_below_count(kept, opts.n_core, |i| i.item);
        }
        if kept.is_empty() {
            return Err(Error::EmptyDataset { stage: "n-core" });
        }
        if kept.len() == before {
            break;
        }
    }

    Ok(log.compact(kept))
}

/// Removes repeats that are adjacent within a user's time-ordered sequence,
/// keeping the first event of each run. Non-consecutive repeats stay.
fn dedup_consecutive(interactions: Vec<Interaction>) -> Vec<Interaction> {
    let mut last_item: HashMap<usize, usize> = HashMap::new();
    interactions
        .into_iter()
        .filter(|i| {
            let repeat = last_item.get(&i.user) == Some(&i.item);
            last_item.insert(i.user, i.item);
            !repeat
        })
        .collect()
}

fn drop_below_count(
    interactions: Vec<Interaction>,
    n: usize,
    key: impl Fn(&Interaction) -> usize,
) -> Vec<Interaction> {
    let mut counts: HashMap<usize, usize> = HashMap::new();
    for i in &interactions {
        *counts.entry(key(i)).or_default() += 1;
    }
    interactions
        .into_iter()
        .filter(|i| counts[&key(i)] >= n)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn log_from(events: &[(&str, &str, i64)]) -> InteractionLog {
        InteractionLog::from_events(
            events
                .iter()
                .map(|(u, i, t)| (u.to_string(), i.to_string(), *t, None))
                .collect(),
        )
    }

    fn item_names(log: &InteractionLog, user: &str) -> Vec<String> {
        let u = log.user_index[user];
        log.user_sequences()[u]
            .iter()
            .map(|&i| log.item_ids[i].clone())
            .collect()
    }

    #[test]
    fn consecutive_duplicates_removed_non_consecutive_kept() {
        let log = log_from(&[("u", "A", 1), ("u", "A", 2), ("u", "B", 3), ("u", "A", 4)]);
        let opts = PreprocessOptions {
            n_core: 0,
            ..Default::default()
        };
        let out = preprocess(&log, &opts).unwrap();
        assert_eq!(item_names(&out, "u"), vec!["A", "B", "A"]);
    }

    #[test]
    fn one_core_is_identity_when_everything_appears_once() {
        let log = log_from(&[("u1", "A", 1), ("u2", "B", 2), ("u3", "C", 3)]);
        let opts = PreprocessOptions {
            n_core: 1,
            dedup_consecutive: false,
            ..Default::default()
        };
        let out = preprocess(&log, &opts).unwrap();
        assert_eq!(out, log);
    }

    #[test]
    fn n_core_matches_brute_force_fixed_point() {
        // 5 users with uneven activity; n=3 should keep only the dense core.
        let log = log_from(&[
            ("u1", "A", 1),
            ("u1", "B", 2),
            ("u1", "C", 3),
            ("u2", "A", 4),
            ("u2", "B", 5),
            ("u2", "C", 6),
            ("u3", "A", 7),
            ("u3", "B", 8),
            ("u3", "C", 9),
            ("u4", "D", 10),
            ("u4", "A", 11),
            ("u4", "B", 12),
            ("u5", "D", 13),
        ]);
        let opts = PreprocessOptions {
            n_core: 3,
            dedup_consecutive: false,
            ..Default::default()
        };
        let out = preprocess(&log, &opts).unwrap();

        // Brute-force oracle: rescan and filter until nothing changes.
        let mut pairs: Vec<(usize, usize, i64)> = log
            .interactions
            .iter()
            .map(|i| (i.user, i.item, i.timestamp))
            .collect();
        loop {
            let count =
                |key: fn(&(usize, usize, i64)) -> usize, pairs: &[(usize, usize, i64)]| {
                    let mut m = HashMap::new();
                    for p in pairs {
                        *m.entry(key(p)).or_insert(0usize) += 1;
                    }
                    m
                };
            let before = pairs.len();
            let users = count(|p| p.0, &pairs);
            pairs.retain(|p| users[&p.0] >= 3);
            let items = count(|p| p.1, &pairs);
            pairs.retain(|p| items[&p.1] >= 3);
            if pairs.len() == before {
                break;
            }
        }
        let expected_events: Vec<(String, String, i64)> = pairs
            .iter()
            .map(|&(u, i, t)| (log.user_ids[u].clone(), log.item_ids[i].clone(), t))
            .collect();
        let actual_events: Vec<(String, String, i64)> = out
            .interactions
            .iter()
            .map(|i| {
                (
                    out.user_ids[i.user].clone(),
                    out.item_ids[i.item].clone(),
                    i.timestamp,
                )
            })
            .collect();
        assert_eq!(actual_events, expected_events);
    }

    #[test]
    fn weight_threshold_runs_first() {
        let log = InteractionLog::from_events(vec![
            ("u".into(), "A".into(), 1, Some(70.0)),
            ("u".into(), "B".into(), 2, Some(30.0)),
            ("u".into(), "C".into(), 3, None),
        ]);
        let opts = PreprocessOptions {
            min_weight: Some(60.0),
            dedup_consecutive: true,
            n_core: 0,
            user_sample: None,
        };
        let out = preprocess(&log, &opts).unwrap();
        assert_eq!(out.interactions.len(), 1);
        assert_eq!(out.item_ids, vec!["A".to_string()]);
    }

    #[test]
    fn n_core_emptying_everything_names_the_stage() {
        let log = log_from(&[("u", "A", 1), ("u", "B", 2)]);
        let opts = PreprocessOptions {
            n_core: 5,
            ..Default::default()
        };
        assert_eq!(
            preprocess(&log, &opts).unwrap_err(),
            Error::EmptyDataset { stage: "n-core" }
        );
    }

    #[test]
    fn same_seed_samples_same_users() {
        let events: Vec<(&str, &str, i64)> = vec![
            ("a", "X", 1),
            ("b", "X", 2),
            ("c", "X", 3),
            ("d", "X", 4),
            ("e", "X", 5),
        ];
        let log = log_from(&events);
        let opts = PreprocessOptions {
            user_sample: Some(UserSample { size: 2, seed: 9 }),
            dedup_consecutive: false,
            n_core: 0,
            min_weight: None,
        };
        let first = preprocess(&log, &opts).unwrap();
        let second = preprocess(&log, &opts).unwrap();
        assert_eq!(first.user_ids, second.user_ids);
        assert_eq!(first.user_ids.len(), 2);
    }
}
