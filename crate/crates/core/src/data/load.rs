//! CSV interaction-log loading.

use std::path::Path;

use crate::data::InteractionLog;
use crate::error::{Error, Result};

/// Column names for the interactions CSV. The weight column is used when
/// present in the header and ignored otherwise.
#[derive(Clone, Debug, serde::Serialize, serde::Deserialize)]
pub struct ColumnSchema {
    pub user: String,
    pub item: String,
    pub timestamp: String,
    pub weight: String,
}

impl Default for ColumnSchema {
    fn default() -> Self {
        ColumnSchema {
            user: "user_id".into(),
            item: "item_id".into(),
            timestamp: "timestamp".into(),
            weight: "weight".into(),
        }
    }
}

/// Reads a UTF-8 CSV with header into an [`InteractionLog`]. Duplicate
/// `(user, item, timestamp)` rows are kept; real logs contain them.
pub fn load_interactions(path: &Path, schema: &ColumnSchema) -> Result<InteractionLog> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::Parse {
            line: 0,
            message: format!("{}: {e}", path.display()),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let position = |name: &str| headers.iter().position(|h| h == name);
    let user_col = position(&schema.user).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing column '{}'", schema.user),
    })?;
    let item_col = position(&schema.item).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing column '{}'", schema.item),
    })?;
    let ts_col = position(&schema.timestamp).ok_or_else(|| Error::Parse {
        line: 1,
        message: format!("missing column '{}'", schema.timestamp),
    })?;
    let weight_col = position(&schema.weight);

    let mut events = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |col: usize| {
            record.get(col).ok_or(Error::Parse {
                line,
                message: format!("missing field {col}"),
            })
        };
        let user = field(user_col)?.to_string();
        let item = field(item_col)?.to_string();
        let ts_raw = field(ts_col)?;
        let timestamp: i64 = ts_raw.trim().parse().map_err(|_| Error::Parse {
            line,
            message: format!("bad timestamp '{ts_raw}'"),
        })?;
        if timestamp < 0 {
            return Err(Error::Parse {
                line,
                message: format!("negative timestamp {timestamp}"),
            });
        }
        let weight = match weight_col {
            Some(col) => {
                let raw = record.get(col).unwrap_or("").trim();
                if raw.is_empty() {
                    None
                } else {
                    Some(raw.parse::<f64>().map_err(|_| Error::Parse {
                        line,
                        message: format!("bad weight '{raw}'"),
                    })?)
                }
            }
            None => None,
        };
        events.push((user, item, timestamp, weight));
    }
    if events.is_empty() {
        return Err(Error::EmptyLog);
    }
    Ok(InteractionLog::from_events(events))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_csv(content: &str) -> tempfile::NamedTempFile {
        let mut file = tempfile::NamedTempFile::new().unwrap();
        file.write_all(content.as_bytes()).unwrap();
        file
    }

    #[test]
    fn loads_two_users_with_per_user_ordering() {
        let file = write_csv("user_id,item_id,timestamp\nu1,a,10\nu2,b,5\nu1,c,7\n");
        let log = load_interactions(file.path(), &ColumnSchema::default()).unwrap();
        assert_eq!(log.num_users(), 2);
        assert_eq!(log.num_items(), 3);
        let sequences = log.user_sequences();
        let u1 = log.user_index["u1"];
        let c = log.item_index["c"];
        let a = log.item_index["a"];
        assert_eq!(sequences[u1], vec![c, a]);
    }

    #[test]
    fn empty_file_fails_with_no_interactions() {
        let file = write_csv("user_id,item_id,timestamp\n");
        assert_eq!(
            load_interactions(file.path(), &ColumnSchema::default()).unwrap_err(),
            Error::EmptyLog
        );
    }

    #[test]
    fn unsorted_timestamps_are_sorted_per_user() {
        let file = write_csv("user_id,item_id,timestamp\nu,x,30\nu,y,10\nu,z,20\n");
        let log = load_interactions(file.path(), &ColumnSchema::default()).unwrap();
        let seq = &log.user_sequences()[0];
        let names: Vec<&str> = seq.iter().map(|&i| log.item_ids[i].as_str()).collect();
        assert_eq!(names, vec!["y", "z", "x"]);
        // Oracle: timestamps along the stored stream are non-decreasing.
        let stamps: Vec<i64> = log.interactions.iter().map(|i| i.timestamp).collect();
        let mut sorted = stamps.clone();
        sorted.sort();
        assert_eq!(stamps, sorted);
    }

    #[test]
    fn malformed_row_reports_line_number() {
        let file = write_csv("user_id,item_id,timestamp\nu,a,5\nu,b,notatime\n");
        match load_interactions(file.path(), &ColumnSchema::default()).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_rows_are_kept_and_weights_parsed() {
        let file = write_csv("user_id,item_id,timestamp,weight\nu,a,5,4.5\nu,a,5,4.5\nu,b,6,\n");
        let log = load_interactions(file.path(), &ColumnSchema::default()).unwrap();
        assert_eq!(log.interactions.len(), 3);
        assert_eq!(log.interactions[0].weight, Some(4.5));
        assert_eq!(log.interactions[2].weight, None);
    }

    #[test]
    fn ties_keep_file_order() {
        let file = write_csv("user_id,item_id,timestamp\nu,a,5\nu,b,5\nu,c,5\n");
        let log = load_interactions(file.path(), &ColumnSchema::default()).unwrap();
        let names: Vec<&str> = log
            .interactions
            .iter()
            .map(|i| log.item_ids[i.item].as_str())
            .collect();
        assert_eq!(names, vec!["a", "b", "c"]);
    }
}
