//! Quality evaluation seams.
//!
//! Quality is whatever the caller measured offline, keyed by canonical
//! config ([`QualityTable`]), or a documented synthetic surface
//! ([`SyntheticSurface`]) used as a deterministic stand-in when no
//! measurements exist.

use crate::space::{AlgoConfig, Integration};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualitySource {
    Table,
    Synthetic,
}

/// A scalar generation-quality score in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityScore {
    pub value: f64,
    pub source: QualitySource,
}

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("quality table: {0}")]
    Csv(#[from] csv::Error),
    #[error("quality table header must be `config_key,quality`")]
    Header,
    #[error("quality table row {row}: {message}")]
    Row { row: usize, message: String },
    #[error("quality table: duplicate config_key {0:?}")]
    DuplicateKey(String),
    #[error("no quality measurement for config key {key}")]
    Miss { key: String },
}

/// Offline quality measurements, keyed by the canonical config key.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QualityTable {
    scores: BTreeMap<String, f64>,
}

impl QualityTable {
    /// Parses the `config_key,quality` CSV form.
    pub fn parse(text: &str) -> Result<QualityTable, QualityError> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let header = reader.headers()?.clone();
        if header.len() != 2 || &header[0] != "config_key" || &header[1] != "quality" {
            return Err(QualityError::Header);
        }
        let mut scores = BTreeMap::new();
        for (i, record) in reader.records().enumerate() {
            let row = i + 2; // header occupies line 1
            let record = record?;
            if record.len() != 2 {
                return Err(QualityError::Row {
                    row,
                    message: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let key = record[0].to_string();
            let quality: f64 = record[1].parse().map_err(|e| QualityError::Row {
                row,
                message: format!("quality {:?}: {e}", &record[1]),
            })?;
            if !(0.0..=1.0).contains(&quality) {
                return Err(QualityError::Row {
                    row,
                    message: format!("quality {quality} outside [0, 1]"),
                });
            }
            if scores.insert(key.clone(), quality).is_some() {
                return Err(QualityError::DuplicateKey(key));
            }
        }
        Ok(QualityTable { scores })
    }

    /// Builds a table from already-validated pairs; rejects the same
    /// violations as [`QualityTable::parse`].
    pub fn from_entries(
        entries: impl IntoIterator<Item = (String, f64)>,
    ) -> Result<QualityTable, QualityError> {
        let mut scores = BTreeMap::new();
        for (i, (key, quality)) in entries.into_iter().enumerate() {
            if !(0.0..=1.0).contains(&quality) {
                return Err(QualityError::Row {
                    row: i + 1,
                    message: format!("quality {quality} outside [0, 1]"),
                });
            }
            if scores.insert(key.clone(), quality).is_some() {
                return Err(QualityError::DuplicateKey(key));
            }
        }
        Ok(QualityTable { scores })
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.scores.get(key).copied()
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Exact-match lookup; a missing key is an explicit miss the exploration
/// loop logs and skips rather than a fatal error.
pub fn eval_table(table: &QualityTable, a: &AlgoConfig) -> Result<QualityScore, QualityError> {
    let key = a.config_key();
    match table.get(&key) {
        Some(value) => Ok(QualityScore {
            value,
            source: QualitySource::Table,
        }),
        None => Err(QualityError::Miss { key }),
    }
}

/// A deterministic logistic quality surface over the config knobs.
///
/// The score is `sigmoid(w0 + w1 ln(top_k) + w2 quality_req + w3 [reranker]
/// + w4 ln(main params) - w5 [kv_cache_insert] - w6 [speculative])`. More
/// retrieved context, stricter recall targets, reranking and larger
/// generators help; the two latency co-design flags carry quality
/// penalties. Weights come from one seeded generator in this fixed draw
/// order, so a seed pins the surface on every platform.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSurface {
    weights: [f64; 7],
}

impl SyntheticSurface {
    pub fn from_seed(seed: u64) -> SyntheticSurface {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = [
            rng.gen_range(-6.0..0.0),
            rng.gen_range(0.1..0.6),
            rng.gen_range(0.5..2.5),
            rng.gen_range(0.2..1.0),
            rng.gen_range(0.05..0.25),
            rng.gen_range(0.2..1.0),
            rng.gen_range(0.2..1.0),
        ];
        SyntheticSurface { weights }
    }

    pub fn eval(&self, a: &AlgoConfig) -> QualityScore {
        let [w0, w1, w2, w3, w4, w5, w6] = self.weights;
        let mut z = w0;
        z += w1 * (a.top_k as f64).ln();
        z += w2 * a.quality_req;
        if a.reranker.is_some() {
            z += w3;
        }
        z += w4 * (a.main_llm.params as f64).ln();
        if a.integration == Integration::KvCacheInsert {
            z -= w5;
        }
        if a.speculative {
            z -= w6;
        }
        QualityScore {
            value: logistic(z),
            source: QualitySource::Synthetic,
        }
    }
}

pub fn eval_synthetic(seed: u64, a: &AlgoConfig) -> QualityScore {
    SyntheticSurface::from_seed(seed).eval(a)
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}
