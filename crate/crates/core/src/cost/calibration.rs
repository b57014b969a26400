//! Measured-cost lookup tables.
//!
//! A table replaces the analytical retrieval-time model with profiled
//! seconds, keyed by operation name and positive size parameters. Queries
//! off the measured grid are answered per the table's interpolation mode:
//! `nearest` takes the entry with the smallest log-space euclidean key
//! distance (ties to the lexicographically smallest key vector), and
//! `log_linear` interpolates geometrically along one axis, requiring every
//! other key to match an entry exactly and the query to be bracketed.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterpolationMode {
    #[default]
    Nearest,
    LogLinear,
}

#[derive(Debug, Clone, PartialEq)]
struct CalEntry {
    keys: Vec<f64>,
    seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    mode: InterpolationMode,
    key_arity: usize,
    ops: BTreeMap<String, Vec<CalEntry>>,
}

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("calibration CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("calibration header must be op,key1,...,seconds; got {found:?}")]
    Header { found: String },
    #[error("calibration row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("duplicate calibration key {keys:?} for op {op:?}")]
    DuplicateKey { op: String, keys: Vec<f64> },
    #[error("calibration table has no entries for op {0:?}")]
    UnknownOp(String),
    #[error("query has {got} keys, table keys have {expected}")]
    KeyArity { expected: usize, got: usize },
    #[error(
        "log-linear interpolation impossible for op {op:?} at keys {keys:?}: \
             need all but one key matched exactly and the free key bracketed"
    )]
    Interpolation { op: String, keys: Vec<f64> },
}

fn key_bits(keys: &[f64]) -> Vec<u64> {
    keys.iter().map(|k| k.to_bits()).collect()
}

/// Parses and validates a calibration CSV.
pub fn load_calibration(
    text: &str,
    mode: InterpolationMode,
) -> Result<CalibrationTable, CalibError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    let cols: Vec<&str> = headers.iter().collect();
    if cols.len() < 3 || cols.first() != Some(&"op") || cols.last() != Some(&"seconds") {
        return Err(CalibError::Header {
            found: cols.join(","),
        });
    }
    let key_arity = cols.len() - 2;

    let mut ops: BTreeMap<String, Vec<CalEntry>> = BTreeMap::new();
    let mut seen: BTreeMap<(String, Vec<u64>), ()> = BTreeMap::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 2; // 1-based, after the header line
        let record = record?;
        if record.len() != cols.len() {
            return Err(CalibError::Row {
                row,
                message: format!("expected {} fields, got {}", cols.len(), record.len()),
            });
        }
        let op = record[0].to_string();
        if op.is_empty() {
            return Err(CalibError::Row {
                row,
                message: "op must be non-empty".into(),
            });
        }
        let mut keys = Vec::with_capacity(key_arity);
        for k in 1..=key_arity {
            let value: f64 = record[k].parse().map_err(|_| CalibError::Row {
                row,
                message: format!("{} is not a number: {:?}", cols[k], &record[k]),
            })?;
            if value <= 0.0 || !value.is_finite() {
                return Err(CalibError::Row {
                    row,
                    message: format!("{} must be positive and finite, got {value}", cols[k]),
                });
            }
            keys.push(value);
        }
        let seconds: f64 = record[key_arity + 1].parse().map_err(|_| CalibError::Row {
            row,
            message: format!("seconds is not a number: {:?}", &record[key_arity + 1]),
        })?;
        if seconds <= 0.0 || !seconds.is_finite() {
            return Err(CalibError::Row {
                row,
                message: format!("seconds must be positive and finite, got {seconds}"),
            });
        }
        if seen.insert((op.clone(), key_bits(&keys)), ()).is_some() {
            return Err(CalibError::DuplicateKey { op, keys });
        }
        ops.entry(op).or_default().push(CalEntry { keys, seconds });
    }

    // Sort entries per op so distance ties resolve to the lexicographically
    // smallest key vector.
    for entries in ops.values_mut() {
        entries.sort_by(|a, b| {
            a.keys
                .partial_cmp(&b.keys)
                .expect("finite keys are totally ordered")
        });
    }
    Ok(CalibrationTable {
        mode,
        key_arity,
        ops,
    })
}

impl CalibrationTable {
    pub fn mode(&self) -> InterpolationMode {
        self.mode
    }

    pub fn key_arity(&self) -> usize {
        self.key_arity
    }

    /// Measured (or interpolated) seconds for one operation instance.
    /// Exact key matches return the measured value verbatim under either
    /// mode.
    pub fn lookup(&self, op: &str, keys: &[f64]) -> Result<f64, CalibError> {
        if keys.len() != self.key_arity {
            return Err(CalibError::KeyArity {
                expected: self.key_arity,
                got: keys.len(),
            });
        }
        let entries = self
            .ops
            .get(op)
            .ok_or_else(|| CalibError::UnknownOp(op.to_string()))?;
        if let Some(hit) = entries.iter().find(|e| e.keys == keys) {
            return Ok(hit.seconds);
        }
        match self.mode {
            InterpolationMode::Nearest => Ok(self.nearest(entries, keys)),
            InterpolationMode::LogLinear => self.log_linear(op, entries, keys),
        }
    }

    fn nearest(&self, entries: &[CalEntry], keys: &[f64]) -> f64 {
        let mut best: Option<(f64, f64)> = None; // (distance, seconds)
        for e in entries {
            let d: f64 = e
                .keys
                .iter()
                .zip(keys)
                .map(|(k, q)| {
                    let diff = q.ln() - k.ln();
                    diff * diff
                })
                .sum();
            if best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, e.seconds));
            }
        }
        best.expect("ops map never holds empty entry lists").1
    }

    fn log_linear(&self, op: &str, entries: &[CalEntry], keys: &[f64]) -> Result<f64, CalibError> {
        for free in 0..self.key_arity {
            let matching = |e: &&CalEntry| {
                e.keys
                    .iter()
                    .zip(keys)
                    .enumerate()
                    .all(|(i, (k, q))| i == free || k == q)
            };
            let lower = entries
                .iter()
                .filter(matching)
                .filter(|e| e.keys[free] < keys[free])
                .max_by(|a, b| a.keys[free].partial_cmp(&b.keys[free]).unwrap());
            let upper = entries
                .iter()
                .filter(matching)
                .filter(|e| e.keys[free] > keys[free])
                .min_by(|a, b| a.keys[free].partial_cmp(&b.keys[free]).unwrap());
            if let (Some(lo), Some(hi)) = (lower, upper) {
                let x = keys[free].ln();
                let (x0, x1) = (lo.keys[free].ln(), hi.keys[free].ln());
                let (y0, y1) = (lo.seconds.ln(), hi.seconds.ln());
                let t = (x - x0) / (x1 - x0);
                return Ok((y0 + t * (y1 - y0)).exp());
            }
        }
        Err(CalibError::Interpolation {
            op: op.to_string(),
            keys: keys.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    const TABLE: &str = "\
op,key1,seconds
ivf_probe,1000,0.01
ivf_probe,4000,0.04
flat_scan,500,0.2
";

    #[test]
    fn exact_key_returns_measured_value_verbatim() {
        for mode in [InterpolationMode::Nearest, InterpolationMode::LogLinear] {
            let table = load_calibration(TABLE, mode).unwrap();
            assert_eq!(table.lookup("ivf_probe", &[1000.0]).unwrap(), 0.01);
            assert_eq!(table.lookup("flat_scan", &[500.0]).unwrap(), 0.2);
        }
    }

    #[test]
    fn log_linear_interpolates_geometrically() {
        let table = load_calibration(TABLE, InterpolationMode::LogLinear).unwrap();
        // 2000 sits halfway between 1000 and 4000 in log space; times 0.01
        // and 0.04 interpolate to 0.02.
        let t = table.lookup("ivf_probe", &[2000.0]).unwrap();
        assert_relative_eq!(t, 0.02, max_relative = 1e-12);
    }

    #[test]
    fn log_linear_requires_a_bracket() {
        let table = load_calibration(TABLE, InterpolationMode::LogLinear).unwrap();
        assert!(matches!(
            table.lookup("ivf_probe", &[8000.0]),
            Err(CalibError::Interpolation { .. })
        ));
    }

    #[test]
    fn nearest_picks_log_space_neighbor() {
        let table = load_calibration(TABLE, InterpolationMode::Nearest).unwrap();
        // 1900 is nearer 1000 than 4000 in log space (ratio 1.9 vs 2.1).
        assert_eq!(table.lookup("ivf_probe", &[1900.0]).unwrap(), 0.01);
        assert_eq!(table.lookup("ivf_probe", &[2100.0]).unwrap(), 0.04);
    }

    #[test]
    fn nearest_tie_breaks_to_smallest_key() {
        let table = load_calibration(TABLE, InterpolationMode::Nearest).unwrap();
        // 2000 is equidistant in log space; the smaller key wins.
        assert_eq!(table.lookup("ivf_probe", &[2000.0]).unwrap(), 0.01);
    }

    #[test]
    fn missing_op_is_an_error() {
        let table = load_calibration(TABLE, InterpolationMode::Nearest).unwrap();
        assert!(matches!(
            table.lookup("hnsw", &[100.0]),
            Err(CalibError::UnknownOp(_))
        ));
    }

    #[test]
    fn duplicate_keys_are_rejected() {
        let text = "op,key1,seconds\na,10,0.1\na,10,0.2\n";
        assert!(matches!(
            load_calibration(text, InterpolationMode::Nearest),
            Err(CalibError::DuplicateKey { .. })
        ));
    }

    #[test]
    fn non_positive_times_are_rejected() {
        let text = "op,key1,seconds\na,10,0\n";
        assert!(load_calibration(text, InterpolationMode::Nearest).is_err());
        let text = "op,key1,seconds\na,10,-0.5\n";
        assert!(load_calibration(text, InterpolationMode::Nearest).is_err());
    }

    #[test]
    fn header_and_arity_are_enforced() {
        assert!(matches!(
            load_calibration("kind,key1,seconds\na,1,0.1\n", InterpolationMode::Nearest),
            Err(CalibError::Header { .. })
        ));
        let table = load_calibration(TABLE, InterpolationMode::Nearest).unwrap();
        assert!(matches!(
            table.lookup("ivf_probe", &[1.0, 2.0]),
            Err(CalibError::KeyArity {
                expected: 1,
                got: 2
            })
        ));
    }

    #[test]
    fn multi_key_log_linear_matches_fixed_axes() {
        let text = "\
op,key1,key2,seconds
probe,1000,128,0.01
probe,4000,128,0.04
probe,1000,256,0.03
";
        let table = load_calibration(text, InterpolationMode::LogLinear).unwrap();
        let t = table.lookup("probe", &[2000.0, 128.0]).unwrap();
        assert_relative_eq!(t, 0.02, max_relative = 1e-12);
        // key2=200 matches no entry exactly on the other axis.
        assert!(table.lookup("probe", &[2000.0, 200.0]).is_err());
    }
}
