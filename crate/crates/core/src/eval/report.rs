//! Metric reports, their CSV/JSON forms, and multi-run aggregation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentMetrics {
    /// `None` when the segment holds no cases; absent segments must not be
    /// conflated with a measured zero.
    pub hr: Option<f64>,
    pub ndcg: Option<f64>,
    pub case_count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub k: usize,
    pub seed: u64,
    /// Segments in canonical order: total, cold_gt, warm_gt, then strata.
    pub segments: Vec<(String, SegmentMetrics)>,
    pub excluded_cases: usize,
}

impl MetricsReport {
    pub fn segment(&self, name: &str) -> Option<&SegmentMetrics> {
        self.segments
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
    }

    /// Internal consistency: metric bounds, per-segment NDCG <= HR, and the
    /// total being the case-weighted mean of the cold/warm partition.
    pub fn assert_consistent(&self) {
        for (name, m) in &self.segments {
            if let (Some(hr), Some(ndcg)) = (m.hr, m.ndcg) {
                assert!((0.0..=1.0).contains(&hr), "{name}: hr {hr} out of range");
                assert!(
                    (0.0..=1.0).contains(&ndcg),
                    "{name}: ndcg {ndcg} out of range"
                );
                assert!(ndcg <= hr + 1e-12, "{name}: ndcg {ndcg} exceeds hr {hr}");
            }
        }
        let (total, cold, warm) = (
            self.segment("total"),
            self.segment("cold_gt"),
            self.segment("warm_gt"),
        );
        if let (Some(total), Some(cold), Some(warm)) = (total, cold, warm) {
            assert_eq!(total.case_count, cold.case_count + warm.case_count);
            for pick in [
                |m: &SegmentMetrics| m.hr,
                |m: &SegmentMetrics| m.ndcg,
            ] {
                if let Some(t) = pick(total) {
                    let weighted = pick(cold).unwrap_or(0.0) * cold.case_count as f64
                        + pick(warm).unwrap_or(0.0) * warm.case_count as f64;
                    assert!(
                        (t * total.case_count as f64 - weighted).abs() < 1e-12,
                        "segment additivity violated"
                    );
                }
            }
        }
    }

    /// CSV form: `segment,metric,k,value,count,seed`; absent metrics leave
    /// the value field empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("segment,metric,k,value,count,seed\n");
        for (name, m) in &self.segments {
            for (metric, value) in [("hr", m.hr), ("ndcg", m.ndcg)] {
                let rendered = value.map_or(String::new(), |v| format!("{v:.6}"));
                out.push_str(&format!(
                    "{name},{metric},{},{rendered},{},{}\n",
                    self.k, m.case_count, self.seed
                ));
            }
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<MetricsReport> {
        let mut lines = text.lines();
        let header = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty metrics csv".into(),
        })?;
        if header.trim() != "segment,metric,k,value,count,seed" {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected header '{header}'"),
            });
        }
        let mut k = None;
        let mut seed = 0u64;
        let mut segments: Vec<(String, SegmentMetrics)> = Vec::new();
        for (idx, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let line_no = (idx + 2) as u64;
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected 6 fields, got {}", fields.len()),
                });
            }
            let bad = |what: &str| Error::Parse {
                line: line_no,
                message: format!("bad {what}"),
            };
            let segment = fields[0].to_string();
            let metric = fields[1];
            k = Some(fields[2].parse::<usize>().map_err(|_| bad("k"))?);
            let value = if fields[3].is_empty() {
                None
            } else {
                Some(fields[3].parse::<f64>().map_err(|_| bad("value"))?)
            };
            let count = fields[4].parse::<usize>().map_err(|_| bad("count"))?;
            seed = fields[5].parse::<u64>().map_err(|_| bad("seed"))?;

            if segments.last().map(|(n, _)| n.as_str()) != Some(segment.as_str()) {
                segments.push((
                    segment,
                    SegmentMetrics {
                        hr: None,
                        ndcg: None,
                        case_count: count,
                    },
                ));
            }
            let entry = &mut segments.last_mut().expect("just pushed").1;
            match metric {
                "hr" => entry.hr = value,
                "ndcg" => entry.ndcg = value,
                other => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("unknown metric '{other}'"),
                    })
                }
            }
        }
        Ok(MetricsReport {
            k: k.ok_or(Error::Parse {
                line: 1,
                message: "no data rows".into(),
            })?,
            seed,
            segments,
            excluded_cases: 0,
        })
    }

    /// JSON form mirroring the segment mapping; keys are sorted by
    /// serde_json, which keeps output deterministic.
    pub fn to_json(&self) -> serde_json::Value {
        let mut segments = serde_json::Map::new();
        for (name, m) in &self.segments {
            segments.insert(
                name.clone(),
                serde_json::json!({
                    "hr": m.hr,
                    "ndcg": m.ndcg,
                    "case_count": m.case_count,
                }),
            );
        }
        serde_json::json!({
            "k": self.k,
            "seed": self.seed,
            "excluded_cases": self.excluded_cases,
            "segments": segments,
        })
    }
}

/// Mean and sample standard deviation of one metric across runs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AggregateCell {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
    pub mean_count: f64,
}

impl AggregateCell {
    fn from_values(values: &[f64], counts: &[usize]) -> AggregateCell {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
        };
        AggregateCell {
            mean,
            std,
            runs: values.len(),
            mean_count: counts.iter().sum::<usize>() as f64 / counts.len() as f64,
        }
    }

    pub fn formatted(&self) -> String {
        format_mean_std(self.mean, self.std)
    }
}

pub fn format_mean_std(mean: f64, std: f64) -> String {
    format!("{mean:.3}\u{b1}{std:.3}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    pub k: usize,
    pub segments: Vec<(String, Option<AggregateCell>, Option<AggregateCell>)>,
}

impl RunSummary {
    pub fn segment(&self, name: &str) -> Option<(&Option<AggregateCell>, &Option<AggregateCell>)> {
        self.segments
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|(_, hr, ndcg)| (hr, ndcg))
    }
}

/// Aggregates reports from repeated seeded runs into `mean±std` per segment
/// and metric. All reports must share the same `k` and segmentation; absent
/// segments are skipped per run and stay absent if no run measured them.
pub fn aggregate_runs(reports: &[MetricsReport]) -> Result<RunSummary> {
    if reports.len() < 2 {
        return Err(Error::InvalidArgument {
            context: format!("aggregate_runs needs >= 2 reports, got {}", reports.len()),
        });
    }
    let k = reports[0].k;
    let names: Vec<&String> = reports[0].segments.iter().map(|(n, _)| n).collect();
    for report in &reports[1..] {
        let other: Vec<&String> = report.segments.iter().map(|(n, _)| n).collect();
        if report.k != k || other != names {
            return Err(Error::InvalidArgument {
                context: "reports have mismatched k or segmentation".into(),
            });
        }
    }

    let mut segments = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let mut hr_values = Vec::new();
        let mut ndcg_values = Vec::new();
        let mut counts = Vec::new();
        for report in reports {
            let m = &report.segments[i].1;
            if let Some(hr) = m.hr {
                hr_values.push(hr);
            }
            if let Some(ndcg) = m.ndcg {
                ndcg_values.push(ndcg);
            }
            counts.push(m.case_count);
        }
        let hr = (!hr_values.is_empty()).then(|| AggregateCell::from_values(&hr_values, &counts));
        let ndcg =
            (!ndcg_values.is_empty()).then(|| AggregateCell::from_values(&ndcg_values, &counts));
        segments.push(((*name).clone(), hr, ndcg));
    }
    Ok(RunSummary { k, segments })
}
