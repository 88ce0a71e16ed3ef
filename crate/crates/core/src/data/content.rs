//! Content-embedding ingestion: parse, standardize + project with PCA fit on
//! warm items, and normalize every row to unit length.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::data::{ContentMatrix, InteractionLog, SplitDataset};
use crate::error::{Error, Result};
use crate::numerics::pca::PcaModel;
use crate::numerics::tensor::Tensor;
use crate::numerics::fit_pca;

const BINARY_MAGIC: &[u8; 4] = b"CEM1";

/// Whether to fit projection statistics from warm items or reuse a fit.
pub enum PcaSpec<'a> {
    Fit { target_dim: usize },
    Model(&'a PcaModel),
}

/// Loads per-item content vectors and projects them to the model dimension.
///
/// Statistics (standardization and principal directions) are fitted on warm
/// items only, mirroring deployment where cold items arrive after training.
/// Every cold item must be covered; other items may fall back to learned
/// rows.
pub fn load_content(
    path: &Path,
    pca: PcaSpec,
    log: &InteractionLog,
    split: &SplitDataset,
) -> Result<(ContentMatrix, PcaModel)> {
    let raw = parse_content_file(path)?;
    let source_dim = raw.dim;

    // Keep rows for items that exist in the log; remember their indices.
    let mut covered: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut seen: BTreeSet<usize> = BTreeSet::new();
    for (id, vector) in raw.rows {
        if let Some(&item) = log.item_index.get(&id) {
            if !seen.insert(item) {
                return Err(Error::Parse {
                    line: 0,
                    message: format!("duplicate content row for item {id}"),
                });
            }
            covered.push((item, vector));
        }
    }
    covered.sort_by_key(|(item, _)| *item);

    let missing_cold: Vec<String> = split
        .cold_items
        .iter()
        .filter(|item| !seen.contains(item))
        .map(|&item| log.item_ids[item].clone())
        .collect();
    if !missing_cold.is_empty() {
        return Err(Error::MissingContent {
            item_ids: missing_cold,
        });
    }

    let model = match pca {
        PcaSpec::Model(model) => model.clone(),
        PcaSpec::Fit { target_dim } => {
            let warm_rows: Vec<Vec<f64>> = covered
                .iter()
                .filter(|(item, _)| split.warm_items.contains(item))
                .map(|(_, v)| v.clone())
                .collect();
            if warm_rows.is_empty() {
                return Err(Error::Pca {
                    message: "no warm items have content vectors to fit on".into(),
                });
            }
            fit_pca(&Tensor::from_rows(&warm_rows)?, target_dim)?
        }
    };

    let dim = model.output_dim;
    let mut vectors = vec![0.0; log.num_items() * dim];
    let mut coverage = BTreeSet::new();
    for (item, vector) in covered {
        let mut projected = model.transform(&vector)?;
        let norm = projected.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm < 1e-12 {
            return Err(Error::DegenerateContent {
                item_id: log.item_ids[item].clone(),
            });
        }
        for v in projected.iter_mut() {
            *v /= norm;
        }
        vectors[item * dim..(item + 1) * dim].copy_from_slice(&projected);
        coverage.insert(item);
    }

    Ok((
        ContentMatrix {
            vectors,
            dim,
            source_dim,
            coverage,
            num_items: log.num_items(),
        },
        model,
    ))
}

struct RawContent {
    dim: usize,
    rows: Vec<(String, Vec<f64>)>,
}

fn parse_content_file(path: &Path) -> Result<RawContent> {
    let bytes = fs::read(path).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    if bytes.starts_with(BINARY_MAGIC) {
        parse_binary(&bytes)
    } else {
        parse_text(&bytes)
    }
}

fn parse_text(bytes: &[u8]) -> Result<RawContent> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::Parse {
        line: 0,
        message: format!("content file is not UTF-8: {e}"),
    })?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty content file".into(),
    })?;
    let mut parts = header.split_whitespace();
    let count: usize = parts
        .next()
        .and_then(|p| p.parse().ok())
        .ok_or(Error::Parse {
            line: 1,
            message: "header must be '<num_items> <dim>'".into(),
        })?;
    let dim: usize = parts
        .next()
        .and_then(|p| p.parse().ok())
        .ok_or(Error::Parse {
            line: 1,
            message: "header must be '<num_items> <dim>'".into(),
        })?;

    let mut rows = Vec::with_capacity(count);
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let line_no = (idx + 1) as u64;
        let mut fields = line.split_whitespace();
        let id = fields
            .next()
            .ok_or(Error::Parse {
                line: line_no,
                message: "missing item id".into(),
            })?
            .to_string();
        let values: Vec<f64> = fields
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("bad number '{f}'"),
                })
            })
            .collect::<Result<_>>()?;
        if values.len() != dim {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected {dim} values, got {}", values.len()),
            });
        }
        rows.push((id, values));
    }
    if rows.len() != count {
        return Err(Error::Parse {
            line: 1,
            message: format!("header promised {count} rows, found {}", rows.len()),
        });
    }
    Ok(RawContent { dim, rows })
}

fn parse_binary(bytes: &[u8]) -> Result<RawContent> {
    let mut cursor = BINARY_MAGIC.len();
    let take = |cursor: &mut usize, n: usize| -> Result<&[u8]> {
        let slice = bytes.get(*cursor..*cursor + n).ok_or(Error::Parse {
            line: 0,
            message: "truncated binary content file".into(),
        })?;
        *cursor += n;
        Ok(slice)
    };
    let read_u32 = |cursor: &mut usize| -> Result<u32> {
        Ok(u32::from_le_bytes(take(cursor, 4)?.try_into().unwrap()))
    };
    let count = read_u32(&mut cursor)? as usize;
    let dim = read_u32(&mut cursor)? as usize;
    let mut rows = Vec::with_capacity(count);
    for _ in 0..count {
        let id_len = read_u32(&mut cursor)? as usize;
        let id = std::str::from_utf8(take(&mut cursor, id_len)?)
            .map_err(|e| Error::Parse {
                line: 0,
                message: format!("item id is not UTF-8: {e}"),
            })?
            .to_string();
        let mut values = Vec::with_capacity(dim);
        for _ in 0..dim {
            values.push(f64::from_le_bytes(take(&mut cursor, 8)?.try_into().unwrap()));
        }
        rows.push((id, values));
    }
    Ok(RawContent { dim, rows })
}

/// Writes the text content format: `<num_items> <dim>` then one id + vector
/// per line.
pub fn write_content_text(path: &Path, rows: &[(String, Vec<f64>)], dim: usize) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("{} {}\n", rows.len(), dim));
    for (id, values) in rows {
        out.push_str(id);
        for v in values {
            out.push(' ');
            out.push_str(&format!("{v:?}"));
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })
}

/// Writes the binary content format: magic `CEM1`, little-endian counts,
/// then length-prefixed ids with 64-bit little-endian values.
pub fn write_content_binary(path: &Path, rows: &[(String, Vec<f64>)], dim: usize) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::Parse {
        line: 0,
        message: format!("{}: {e}", path.display()),
    })?;
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(BINARY_MAGIC);
    buf.extend_from_slice(&(rows.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(dim as u32).to_le_bytes());
    for (id, values) in rows {
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for v in values {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    file.write_all(&buf).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::temporal_split;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A toy log where item "new" only appears in the test period.
    fn toy_log_and_split() -> (InteractionLog, SplitDataset) {
        let mut events = Vec::new();
        for u in 0..6 {
            for k in 0..4 {
                events.push((
                    format!("u{u}"),
                    format!("w{}", (u + k) % 5),
                    (u * 4 + k) as i64,
                    None,
                ));
            }
        }
        events.push(("u0".into(), "new".into(), 1000, None));
        let log = InteractionLog::from_events(events);
        let split = temporal_split(&log, 0.9, 0.3, 1).unwrap();
        (log, split)
    }

    fn random_rows(log: &InteractionLog, dim: usize, seed: u64) -> Vec<(String, Vec<f64>)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        log.item_ids
            .iter()
            .map(|id| {
                (
                    id.clone(),
                    (0..dim).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect(),
                )
            })
            .collect()
    }

    #[test]
    fn loaded_rows_have_unit_norm() {
        let (log, split) = toy_log_and_split();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("content.txt");
        write_content_text(&path, &random_rows(&log, 7, 3), 7).unwrap();
        let (content, _) =
            load_content(&path, PcaSpec::Fit { target_dim: 3 }, &log, &split).unwrap();
        for &item in &content.coverage {
            let row = content.row(item).unwrap();
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-9);
        }
        assert!(content.coverage.is_superset(&split.cold_items));
        assert_eq!(content.source_dim, 7);
    }

    #[test]
    fn missing_cold_content_lists_item_ids() {
        let (log, split) = toy_log_and_split();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("content.txt");
        let rows: Vec<(String, Vec<f64>)> = random_rows(&log, 4, 3)
            .into_iter()
            .filter(|(id, _)| id != "new")
            .collect();
        write_content_text(&path, &rows, 4).unwrap();
        match load_content(&path, PcaSpec::Fit { target_dim: 2 }, &log, &split).unwrap_err() {
            Error::MissingContent { item_ids } => assert_eq!(item_ids, vec!["new".to_string()]),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn binary_and_text_forms_load_identically() {
        let (log, split) = toy_log_and_split();
        let dir = tempfile::tempdir().unwrap();
        let rows = random_rows(&log, 6, 8);
        let text = dir.path().join("c.txt");
        let binary = dir.path().join("c.bin");
        write_content_text(&text, &rows, 6).unwrap();
        write_content_binary(&binary, &rows, 6).unwrap();
        let (from_text, _) =
            load_content(&text, PcaSpec::Fit { target_dim: 4 }, &log, &split).unwrap();
        let (from_binary, _) =
            load_content(&binary, PcaSpec::Fit { target_dim: 4 }, &log, &split).unwrap();
        assert_eq!(from_text, from_binary);
    }

    #[test]
    fn items_outside_log_are_ignored_and_coverage_is_bookkept() {
        let (log, split) = toy_log_and_split();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("content.txt");
        let mut rows = random_rows(&log, 5, 2);
        rows.push(("unknown_item".into(), vec![0.5; 5]));
        // Drop one warm item's row: it falls back to a learned embedding.
        let dropped = log.item_ids[0].clone();
        rows.retain(|(id, _)| *id != dropped);
        write_content_text(&path, &rows, 5).unwrap();
        let (content, _) =
            load_content(&path, PcaSpec::Fit { target_dim: 3 }, &log, &split).unwrap();
        assert!(!content.coverage.contains(&0));
        assert!(content.row(0).is_none());
        assert_eq!(content.coverage.len(), log.num_items() - 1);
    }

    #[test]
    fn square_projection_returns_normalized_standardized_input() {
        // With dim == target and decorrelated coordinates the projection is a
        // signed permutation, so the output must equal the standardized input
        // up to that permutation; verify via inverse transform instead.
        let (log, split) = toy_log_and_split();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("content.txt");
        let rows = random_rows(&log, 3, 21);
        write_content_text(&path, &rows, 3).unwrap();
        let (content, model) =
            load_content(&path, PcaSpec::Fit { target_dim: 3 }, &log, &split).unwrap();
        for (id, original) in &rows {
            let item = log.item_index[id];
            let row = content.row(item).unwrap();
            // Undo normalization, then invert the orthogonal projection.
            let projected = model.transform(original).unwrap();
            let norm = projected.iter().map(|v| v * v).sum::<f64>().sqrt();
            let unnormalized: Vec<f64> = row.iter().map(|v| v * norm).collect();
            let reconstructed = model.inverse_transform(&unnormalized).unwrap();
            for (a, b) in original.iter().zip(reconstructed) {
                assert!((a - b).abs() < 1e-6);
            }
        }
    }
}
