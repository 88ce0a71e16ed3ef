//! Ranking metrics with cold/warm segmentation and stratified breakdowns.

mod report;

pub use report::{
    aggregate_runs, format_mean_std, AggregateCell, MetricsReport, RunSummary, SegmentMetrics,
};

use serde::{Deserialize, Serialize};

use crate::data::{ContentMatrix, SplitDataset};
use crate::error::{Error, Result};

/// Hit rate for a single ground-truth item: 1 when it ranked within the top
/// `k`, else 0. `rank` is 1-based; `None` means it was absent from the list.
pub fn hr_at_k(rank: Option<usize>, k: usize) -> f64 {
    match rank {
        Some(r) if r <= k => 1.0,
        _ => 0.0,
    }
}

/// Discounted gain for a single ground-truth item; the ideal DCG is 1, so
/// this is already normalized.
pub fn ndcg_at_k(rank: Option<usize>, k: usize) -> f64 {
    match rank {
        Some(r) if r <= k => 1.0 / ((r as f64) + 1.0).log2(),
        _ => 0.0,
    }
}

/// 1-based position of `target` in a ranked list, if present.
pub fn rank_of(list: &[usize], target: usize) -> Option<usize> {
    list.iter().position(|&i| i == target).map(|p| p + 1)
}

/// One test instance plus the metadata used for segmentation.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalCase {
    pub user: usize,
    pub input: Vec<usize>,
    pub ground_truth: usize,
    pub gt_is_cold: bool,
    /// Share of input items that are cold, before any input policy.
    pub cold_input_fraction: f64,
    pub gt_train_frequency: usize,
}

/// Projects split test cases into eval cases with segmentation metadata.
pub fn build_eval_cases(split: &SplitDataset) -> Vec<EvalCase> {
    let frequencies = split.train_frequencies();
    split
        .test_cases
        .iter()
        .map(|case| {
            let cold_in_input = case
                .input
                .iter()
                .filter(|item| split.cold_items.contains(item))
                .count();
            let gt_train_frequency = frequencies[case.ground_truth];
            let gt_is_cold = split.cold_items.contains(&case.ground_truth);
            debug_assert_eq!(gt_is_cold, gt_train_frequency == 0);
            EvalCase {
                user: case.user,
                input: case.input.clone(),
                ground_truth: case.ground_truth,
                gt_is_cold,
                cold_input_fraction: cold_in_input as f64 / case.input.len() as f64,
                gt_train_frequency,
            }
        })
        .collect()
}

/// How stratified segments are bucketed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentationSpec {
    /// Upper edges of the cold-input-fraction bins. Fraction 0 is its own
    /// bin; edge `e_i` covers `(e_{i-1}, e_i]`.
    pub cold_input_bin_edges: Vec<f64>,
    /// Inclusive frequency ranges; `None` upper bound means unbounded.
    pub freq_buckets: Vec<(usize, Option<usize>)>,
}

impl Default for SegmentationSpec {
    fn default() -> Self {
        SegmentationSpec {
            cold_input_bin_edges: vec![0.25, 0.5, 0.75, 1.0],
            freq_buckets: vec![
                (0, Some(0)),
                (1, Some(2)),
                (3, Some(5)),
                (6, Some(10)),
                (11, Some(20)),
                (21, Some(50)),
                (51, None),
            ],
        }
    }
}

impl SegmentationSpec {
    /// Segment names in report order.
    pub fn segment_names(&self) -> Vec<String> {
        let mut names = vec!["total".to_string(), "cold_gt".into(), "warm_gt".into()];
        for i in 0..=self.cold_input_bin_edges.len() {
            names.push(format!("cold_input_bin_{i}"));
        }
        for bucket in &self.freq_buckets {
            names.push(format!("freq_bucket_{}", freq_label(*bucket)));
        }
        names
    }

    fn cold_input_bin(&self, fraction: f64) -> usize {
        if fraction == 0.0 {
            return 0;
        }
        for (i, &edge) in self.cold_input_bin_edges.iter().enumerate() {
            if fraction <= edge {
                return i + 1;
            }
        }
        self.cold_input_bin_edges.len()
    }

    fn freq_bucket(&self, frequency: usize) -> Option<usize> {
        self.freq_buckets
            .iter()
            .position(|&(lo, hi)| frequency >= lo && hi.is_none_or(|h| frequency <= h))
    }

    /// Segment indices (into `segment_names`) a case belongs to.
    fn segments_of(&self, case: &EvalCase) -> Vec<usize> {
        let mut segments = vec![0, if case.gt_is_cold { 1 } else { 2 }];
        segments.push(3 + self.cold_input_bin(case.cold_input_fraction));
        if let Some(bucket) = self.freq_bucket(case.gt_train_frequency) {
            segments.push(3 + self.cold_input_bin_edges.len() + 1 + bucket);
        }
        segments
    }
}

fn freq_label(bucket: (usize, Option<usize>)) -> String {
    match bucket {
        (lo, Some(hi)) if lo == hi => format!("{lo}"),
        (lo, Some(hi)) => format!("{lo}_{hi}"),
        (lo, None) => format!("{lo}_plus"),
    }
}

/// Result of running the recommender on one case: either a ranked list rank
/// or an exclusion (the recommender could not produce a list, e.g. after its
/// input policy emptied the sequence).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CaseOutcome {
    Ranked(Option<usize>),
    Excluded,
}

/// Runs the recommender over every case and aggregates per-segment metrics.
/// The recommender returns the ranked top-`k` item list, or `None` to
/// exclude the case.
pub fn evaluate<F>(
    mut recommend: F,
    cases: &[EvalCase],
    k: usize,
    spec: &SegmentationSpec,
    seed: u64,
) -> Result<MetricsReport>
where
    F: FnMut(&EvalCase) -> Option<Vec<usize>>,
{
    let outcomes: Vec<CaseOutcome> = cases
        .iter()
        .map(|case| match recommend(case) {
            Some(list) => CaseOutcome::Ranked(rank_of(&list, case.ground_truth)),
            None => CaseOutcome::Excluded,
        })
        .collect();
    aggregate_outcomes(cases, &outcomes, k, spec, seed)
}

/// Deterministic fold of per-case outcomes into a report; exposed separately
/// so callers may compute outcomes in parallel and still aggregate in case
/// order.
pub fn aggregate_outcomes(
    cases: &[EvalCase],
    outcomes: &[CaseOutcome],
    k: usize,
    spec: &SegmentationSpec,
    seed: u64,
) -> Result<MetricsReport> {
    if cases.len() != outcomes.len() {
        return Err(Error::InvalidArgument {
            context: format!(
                "{} outcomes for {} cases",
                outcomes.len(),
                cases.len()
            ),
        });
    }
    let names = spec.segment_names();
    let mut hr_sums = vec![0.0; names.len()];
    let mut ndcg_sums = vec![0.0; names.len()];
    let mut counts = vec![0usize; names.len()];
    let mut excluded = 0usize;
    for (case, outcome) in cases.iter().zip(outcomes) {
        let rank = match outcome {
            CaseOutcome::Excluded => {
                excluded += 1;
                continue;
            }
            CaseOutcome::Ranked(rank) => *rank,
        };
        let hr = hr_at_k(rank, k);
        let ndcg = ndcg_at_k(rank, k);
        debug_assert!(ndcg <= hr);
        for segment in spec.segments_of(case) {
            hr_sums[segment] += hr;
            ndcg_sums[segment] += ndcg;
            counts[segment] += 1;
        }
    }

    let segments: Vec<(String, SegmentMetrics)> = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let metrics = if counts[i] == 0 {
                SegmentMetrics {
                    hr: None,
                    ndcg: None,
                    case_count: 0,
                }
            } else {
                SegmentMetrics {
                    hr: Some(hr_sums[i] / counts[i] as f64),
                    ndcg: Some(ndcg_sums[i] / counts[i] as f64),
                    case_count: counts[i],
                }
            };
            (name, metrics)
        })
        .collect();

    let report = MetricsReport {
        k,
        seed,
        segments,
        excluded_cases: excluded,
    };
    report.assert_consistent();
    Ok(report)
}

/// Ranks content-covered items by cosine similarity to the mean content
/// vector of the input sequence. Uncovered input items are skipped; an input
/// with no covered items cannot form a profile.
pub fn knn_baseline(content: &ContentMatrix, input: &[usize], k: usize) -> Result<Vec<usize>> {
    let dim = content.dim;
    let mut profile = vec![0.0; dim];
    let mut used = 0usize;
    for &item in input {
        if let Some(row) = content.row(item) {
            for (p, v) in profile.iter_mut().zip(row) {
                *p += v;
            }
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::EmptyInput {
            context: "knn profile",
        });
    }
    for p in profile.iter_mut() {
        *p /= used as f64;
    }
    let profile_norm = profile.iter().map(|v| v * v).sum::<f64>().sqrt();
    if profile_norm == 0.0 {
        return Err(Error::EmptyInput {
            context: "knn profile",
        });
    }

    let mut scored: Vec<(usize, f64)> = content
        .coverage
        .iter()
        .map(|&item| {
            let row = content.row(item).expect("covered");
            let dot: f64 = row.iter().zip(&profile).map(|(a, b)| a * b).sum();
            let row_norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            (item, dot / (profile_norm * row_norm))
        })
        .collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.0.cmp(&b.0))
    });
    Ok(scored.into_iter().take(k).map(|(item, _)| item).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    #[test]
    fn hit_rate_values() {
        assert_eq!(hr_at_k(Some(1), 10), 1.0);
        assert_eq!(hr_at_k(Some(11), 10), 0.0);
        assert_eq!(hr_at_k(None, 10), 0.0);
    }

    #[test]
    fn ndcg_values() {
        assert_eq!(ndcg_at_k(Some(1), 10), 1.0);
        assert!((ndcg_at_k(Some(3), 10) - 0.5).abs() < 1e-15);
        assert_eq!(ndcg_at_k(Some(11), 10), 0.0);
        assert_eq!(ndcg_at_k(None, 10), 0.0);
    }

    fn case(gt: usize, cold: bool, fraction: f64, freq: usize) -> EvalCase {
        EvalCase {
            user: 0,
            input: vec![0],
            ground_truth: gt,
            gt_is_cold: cold,
            cold_input_fraction: fraction,
            gt_train_frequency: freq,
        }
    }

    #[test]
    fn two_cases_average_to_half() {
        let cases = vec![case(5, false, 0.0, 3), case(6, true, 0.0, 0)];
        let spec = SegmentationSpec::default();
        let report = evaluate(
            |c| {
                if c.ground_truth == 5 {
                    Some(vec![5, 1, 2])
                } else {
                    Some(vec![1, 2, 3])
                }
            },
            &cases,
            10,
            &spec,
            0,
        )
        .unwrap();
        let total = report.segment("total").unwrap();
        assert_eq!(total.hr, Some(0.5));
        assert_eq!(total.ndcg, Some(0.5));
        assert_eq!(total.case_count, 2);
    }

    #[test]
    fn cold_ground_truth_with_warm_only_recommender_scores_zero() {
        let cases: Vec<EvalCase> = (0..10).map(|i| case(100 + i, true, 0.5, 0)).collect();
        let spec = SegmentationSpec::default();
        // Recommender only ever returns warm items 0..10.
        let report = evaluate(
            |_| Some((0..10).collect()),
            &cases,
            10,
            &spec,
            0,
        )
        .unwrap();
        let cold = report.segment("cold_gt").unwrap();
        assert_eq!(cold.hr, Some(0.0));
        assert_eq!(cold.ndcg, Some(0.0));
        assert_eq!(report.segment("warm_gt").unwrap().case_count, 0);
        assert_eq!(report.segment("warm_gt").unwrap().hr, None);
    }

    #[test]
    fn random_scorer_matches_brute_force_recompute() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let spec = SegmentationSpec::default();
        let cases: Vec<EvalCase> = (0..20)
            .map(|_| {
                let freq = rng.random_range(0..30);
                case(
                    rng.random_range(0..15),
                    freq == 0,
                    rng.random::<f64>(),
                    freq,
                )
            })
            .collect();
        let lists: Vec<Vec<usize>> = (0..20)
            .map(|_| {
                let mut items: Vec<usize> = (0..15).collect();
                for i in (1..items.len()).rev() {
                    let j = rng.random_range(0..=i);
                    items.swap(i, j);
                }
                items.truncate(10);
                items
            })
            .collect();
        let mut next = 0;
        let report = evaluate(
            |_| {
                let list = lists[next].clone();
                next += 1;
                Some(list)
            },
            &cases,
            10,
            &spec,
            0,
        )
        .unwrap();

        // Independent recomputation with explicit loops.
        let mut want_hr = 0.0;
        let mut want_ndcg = 0.0;
        for (c, list) in cases.iter().zip(&lists) {
            if let Some(pos) = list.iter().position(|&i| i == c.ground_truth) {
                let rank = pos + 1;
                if rank <= 10 {
                    want_hr += 1.0;
                    want_ndcg += 1.0 / ((rank as f64) + 1.0).log2();
                }
            }
        }
        let total = report.segment("total").unwrap();
        assert!((total.hr.unwrap() - want_hr / 20.0).abs() < 1e-12);
        assert!((total.ndcg.unwrap() - want_ndcg / 20.0).abs() < 1e-12);
    }

    #[test]
    fn excluded_cases_are_counted_and_skipped() {
        let cases = vec![case(1, false, 0.0, 5), case(2, false, 0.0, 5)];
        let spec = SegmentationSpec::default();
        let report = evaluate(
            |c| {
                if c.ground_truth == 1 {
                    None
                } else {
                    Some(vec![2])
                }
            },
            &cases,
            10,
            &spec,
            0,
        )
        .unwrap();
        assert_eq!(report.excluded_cases, 1);
        assert_eq!(report.segment("total").unwrap().case_count, 1);
        assert_eq!(report.segment("total").unwrap().hr, Some(1.0));
    }

    fn toy_content(rows: Vec<Vec<f64>>) -> ContentMatrix {
        let dim = rows[0].len();
        let num_items = rows.len();
        let mut vectors = Vec::new();
        let mut coverage = BTreeSet::new();
        for (i, row) in rows.iter().enumerate() {
            vectors.extend_from_slice(row);
            coverage.insert(i);
        }
        ContentMatrix {
            vectors,
            dim,
            source_dim: dim,
            coverage,
            num_items,
        }
    }

    #[test]
    fn knn_orthogonal_catalog_puts_self_first() {
        let content = toy_content(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(knn_baseline(&content, &[0], 2).unwrap(), vec![0, 1]);
        assert_eq!(knn_baseline(&content, &[1], 2).unwrap(), vec![1, 0]);
    }

    #[test]
    fn knn_exact_profile_match_wins() {
        let d = 4;
        let mut rows = Vec::new();
        for i in 0..5 {
            let mut row = vec![0.1; d];
            row[i % d] = 1.0;
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            rows.push(row.into_iter().map(|v| v / norm).collect());
        }
        let content = toy_content(rows);
        let top = knn_baseline(&content, &[2], 1).unwrap();
        assert_eq!(top, vec![2]);
    }

    #[test]
    fn knn_matches_brute_force_cosine_sort() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dim = 6;
        let rows: Vec<Vec<f64>> = (0..30)
            .map(|_| {
                let row: Vec<f64> = (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row.into_iter().map(|v| v / norm).collect()
            })
            .collect();
        let content = toy_content(rows.clone());
        let input = vec![3, 7, 21];
        let got = knn_baseline(&content, &input, 30).unwrap();

        let mut profile = vec![0.0; dim];
        for &i in &input {
            for (p, v) in profile.iter_mut().zip(&rows[i]) {
                *p += v / 3.0;
            }
        }
        let pnorm = profile.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut expected: Vec<(usize, f64)> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                let dot: f64 = row.iter().zip(&profile).map(|(a, b)| a * b).sum();
                (i, dot / pnorm)
            })
            .collect();
        expected.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        let expected: Vec<usize> = expected.into_iter().map(|(i, _)| i).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn knn_profile_scale_invariance() {
        // Doubling every input row's weight cannot change ranking; the
        // profile only enters through cosine.
        let content = toy_content(vec![
            vec![0.6, 0.8],
            vec![0.8, 0.6],
            vec![-1.0, 0.0],
        ]);
        let base = knn_baseline(&content, &[0], 3).unwrap();
        let doubled = knn_baseline(&content, &[0, 0], 3).unwrap();
        assert_eq!(base, doubled);
    }

    #[test]
    fn knn_without_covered_input_fails() {
        let mut content = toy_content(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        content.coverage.remove(&0);
        assert!(matches!(
            knn_baseline(&content, &[0], 1),
            Err(Error::EmptyInput { .. })
        ));
    }

    #[test]
    fn segmentation_bins_and_buckets() {
        let spec = SegmentationSpec::default();
        assert_eq!(spec.cold_input_bin(0.0), 0);
        assert_eq!(spec.cold_input_bin(0.1), 1);
        assert_eq!(spec.cold_input_bin(0.25), 1);
        assert_eq!(spec.cold_input_bin(0.26), 2);
        assert_eq!(spec.cold_input_bin(1.0), 4);
        assert_eq!(spec.freq_bucket(0), Some(0));
        assert_eq!(spec.freq_bucket(2), Some(1));
        assert_eq!(spec.freq_bucket(55), Some(6));
        let names = spec.segment_names();
        assert!(names.contains(&"freq_bucket_51_plus".to_string()));
        assert!(names.contains(&"cold_input_bin_4".to_string()));
    }
}
