//! Global temporal train/test split with a seeded validation sample.

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{CaseRecord, InteractionLog, SplitDataset};
use crate::error::{Error, Result};

/// Splits the log at a single global timestamp so that roughly
/// `train_fraction` of interactions land in the training period.
///
/// The boundary is the timestamp of the first interaction past the training
/// prefix in `(timestamp, file order)` order; training keeps strictly earlier
/// interactions, so interactions sharing the boundary timestamp all fall on
/// the test side. Each user with a test-period interaction yields one test
/// case: ground truth is their last interaction, input is everything before
/// it. Validation cases come from a seeded sample of training users, using
/// their last pre-boundary interaction as ground truth.
pub fn temporal_split(
    log: &InteractionLog,
    train_fraction: f64,
    validation_user_fraction: f64,
    seed: u64,
) -> Result<SplitDataset> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::InvalidArgument {
            context: format!("train_fraction must be in (0, 1), got {train_fraction}"),
        });
    }
    if !(validation_user_fraction > 0.0 && validation_user_fraction < 1.0) {
        return Err(Error::InvalidArgument {
            context: format!(
                "validation_user_fraction must be in (0, 1), got {validation_user_fraction}"
            ),
        });
    }

    let total = log.interactions.len();
    let prefix = ceil_fraction(train_fraction, total);
    if prefix >= total {
        return Err(Error::NoPostBoundary);
    }
    let boundary_timestamp = log.interactions[prefix].timestamp;

    let num_users = log.num_users();
    let num_items = log.num_items();
    let mut train_sequences: Vec<Vec<usize>> = vec![Vec::new(); num_users];
    let mut full_sequences: Vec<Vec<usize>> = vec![Vec::new(); num_users];
    let mut has_test_period = vec![false; num_users];
    for i in &log.interactions {
        full_sequences[i.user].push(i.item);
        if i.timestamp < boundary_timestamp {
            train_sequences[i.user].push(i.item);
        } else {
            has_test_period[i.user] = true;
        }
    }
    if train_sequences.iter().all(|s| s.is_empty()) {
        return Err(Error::NoPreBoundary);
    }

    let mut warm_items: BTreeSet<usize> = BTreeSet::new();
    for seq in &train_sequences {
        warm_items.extend(seq.iter().copied());
    }
    let cold_items: BTreeSet<usize> = (0..num_items)
        .filter(|i| !warm_items.contains(i))
        .collect();

    let mut test_cases = Vec::new();
    for user in 0..num_users {
        if !has_test_period[user] {
            continue;
        }
        let seq = &full_sequences[user];
        // A lone post-boundary event gives the model nothing to condition on.
        if seq.len() < 2 {
            continue;
        }
        test_cases.push(CaseRecord {
            user,
            input: seq[..seq.len() - 1].to_vec(),
            ground_truth: seq[seq.len() - 1],
        });
    }
    if test_cases.is_empty() {
        return Err(Error::NoPostBoundary);
    }

    // Validation ground truth stays inside the training period so model
    // selection never reads test-range data.
    let candidates: Vec<usize> = (0..num_users)
        .filter(|&u| train_sequences[u].len() >= 2)
        .collect();
    let mut validation_cases = Vec::new();
    if !candidates.is_empty() {
        let count = ceil_fraction(validation_user_fraction, candidates.len()).max(1);
        let mut selected: Vec<usize> = if count >= candidates.len() {
            candidates.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rand::seq::index::sample(&mut rng, candidates.len(), count)
                .iter()
                .map(|pos| candidates[pos])
                .collect()
        };
        selected.sort_unstable();
        for user in selected {
            let seq = &train_sequences[user];
            validation_cases.push(CaseRecord {
                user,
                input: seq[..seq.len() - 1].to_vec(),
                ground_truth: seq[seq.len() - 1],
            });
        }
    }

    Ok(SplitDataset {
        train_sequences,
        validation_cases,
        test_cases,
        warm_items,
        cold_items,
        boundary_timestamp,
        num_items,
        num_users,
    })
}

/// `ceil(fraction * count)` guarded against representation noise such as
/// `0.9 * 10` landing a hair above 9.
fn ceil_fraction(fraction: f64, count: usize) -> usize {
    ((fraction * count as f64) - 1e-9).ceil().max(0.0) as usize
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

    #[test]
    fn ten_interactions_at_ninety_percent_split_after_ninth() {
        let events: Vec<(String, String, i64)> = (0..10)
            .map(|i| (format!("u{}", i % 3), format!("i{i}"), i as i64))
            .collect();
        let log = InteractionLog::from_events(
            events.into_iter().map(|(u, i, t)| (u, i, t, None)).collect(),
        );
        let split = temporal_split(&log, 0.9, 0.5, 1).unwrap();
        assert_eq!(split.boundary_timestamp, 9);
        // Only the user of the 10th interaction gets a test case.
        assert_eq!(split.test_cases.len(), 1);
        assert_eq!(split.test_cases[0].user, log.user_index["u0"]);
        let train_total: usize = split.train_sequences.iter().map(Vec::len).sum();
        assert_eq!(train_total, 9);
    }

    #[test]
    fn item_only_after_boundary_is_cold() {
        let log = log_from(&[
            ("u1", "A", 1),
            ("u1", "B", 2),
            ("u2", "A", 3),
            ("u2", "B", 4),
            ("u1", "NEW", 100),
        ]);
        let split = temporal_split(&log, 0.8, 0.5, 7).unwrap();
        let new_idx = log.item_index["NEW"];
        assert!(split.cold_items.contains(&new_idx));
        assert!(!split.warm_items.contains(&new_idx));
        assert!(split
            .test_cases
            .iter()
            .any(|c| c.ground_truth == new_idx));
    }

    #[test]
    fn warm_cold_partition_matches_set_algebra_on_random_log() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let events: Vec<(String, String, i64, Option<f64>)> = (0..200)
            .map(|i| {
                (
                    format!("u{}", rng.random_range(0..20)),
                    format!("i{}", rng.random_range(0..40)),
                    i as i64,
                    None,
                )
            })
            .collect();
        let log = InteractionLog::from_events(events);
        let split = temporal_split(&log, 0.9, 0.1, 3).unwrap();

        // Brute-force oracle straight from the boundary definition.
        let mut pre = BTreeSet::new();
        let mut post = BTreeSet::new();
        for i in &log.interactions {
            if i.timestamp < split.boundary_timestamp {
                pre.insert(i.item);
            } else {
                post.insert(i.item);
            }
        }
        let expected_cold: BTreeSet<usize> = post.difference(&pre).copied().collect();
        assert_eq!(split.warm_items, pre);
        assert_eq!(split.cold_items, expected_cold);
        assert!(split.warm_items.is_disjoint(&split.cold_items));
        for case in &split.test_cases {
            assert!(
                split.warm_items.contains(&case.ground_truth)
                    || split.cold_items.contains(&case.ground_truth)
            );
            assert!(!case.input.is_empty());
        }
    }

    #[test]
    fn validation_sample_is_seed_stable_and_pre_boundary() {
        let mut events = Vec::new();
        for u in 0..30 {
            for k in 0..5 {
                events.push((format!("u{u}"), format!("i{}", u % 7 + k), (u * 5 + k) as i64, None));
            }
        }
        let log = InteractionLog::from_events(events);
        let a = temporal_split(&log, 0.9, 0.2, 5).unwrap();
        let b = temporal_split(&log, 0.9, 0.2, 5).unwrap();
        assert_eq!(a.validation_cases, b.validation_cases);
        let c = temporal_split(&log, 0.9, 0.2, 6).unwrap();
        assert!(!c.validation_cases.is_empty());
        for case in &a.validation_cases {
            assert!(a.warm_items.contains(&case.ground_truth));
        }
    }

    #[test]
    fn all_post_boundary_fails() {
        let log = log_from(&[("u", "A", 5), ("u", "B", 5), ("u", "C", 5)]);
        // Every timestamp equals the boundary, so nothing lands in training.
        assert_eq!(
            temporal_split(&log, 0.5, 0.5, 1).unwrap_err(),
            Error::NoPreBoundary
        );
    }

    #[test]
    fn single_interaction_log_has_no_test_period() {
        let log = log_from(&[("u", "A", 5)]);
        assert_eq!(
            temporal_split(&log, 0.9, 0.5, 1).unwrap_err(),
            Error::NoPostBoundary
        );
    }

    #[test]
    fn fraction_bounds_are_validated() {
        let log = log_from(&[("u", "A", 1), ("u", "B", 2)]);
        assert!(matches!(
            temporal_split(&log, 0.0, 0.5, 1),
            Err(Error::InvalidArgument { .. })
        ));
        assert!(matches!(
            temporal_split(&log, 0.9, 1.0, 1),
            Err(Error::InvalidArgument { .. })
        ));
    }
}
