//! The run-config document: estimator constants, placement-search knobs,
//! objectives, strategy parameters and seeds in one versioned file. Every
//! field has a default, so `{"schema": "rag-cm/1"}` is a valid document.

use crate::cost::{CostConstants, InterpolationMode, RecallPoint, RecallTable, RecallTableError};
use crate::explore::{EvolutionParams, ObjectiveSpec};
use crate::space::DocParseError;
use crate::violation::{ValidationReport, ViolationCode};
use serde::{Deserialize, Serialize};

pub const RUN_SCHEMA: &str = "rag-cm/1";

/// Points at a calibration CSV on disk; the path is resolved relative to
/// the run-config file's own directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrationRef {
    pub path: String,
    #[serde(default)]
    pub mode: InterpolationMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: String,
    #[serde(default)]
    pub constants: CostConstants,
    #[serde(default)]
    pub ttft_slo: Option<f64>,
    #[serde(default = "default_batch_cap")]
    pub batch_cap: u32,
    #[serde(default = "default_exhaustive_limit")]
    pub exhaustive_limit: u64,
    #[serde(default)]
    pub strict: bool,
    #[serde(default)]
    pub objectives: ObjectiveSpec,
    #[serde(default)]
    pub evolution: EvolutionParams,
    #[serde(default)]
    pub calibration: Option<CalibrationRef>,
    /// Measured recall-to-nprobe curve; empty means the analytical
    /// surrogate applies.
    #[serde(default)]
    pub recall_table: Vec<RecallPoint>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub quality_seed: u64,
}

fn default_batch_cap() -> u32 {
    64
}

fn default_exhaustive_limit() -> u64 {
    100_000
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            schema: RUN_SCHEMA.to_string(),
            constants: CostConstants::default(),
            ttft_slo: None,
            batch_cap: default_batch_cap(),
            exhaustive_limit: default_exhaustive_limit(),
            strict: false,
            objectives: ObjectiveSpec::default(),
            evolution: EvolutionParams::default(),
            calibration: None,
            recall_table: Vec::new(),
            seed: 0,
            quality_seed: 0,
        }
    }
}

impl RunConfig {
    /// Builds the recall curve lookup, if one is configured.
    pub fn build_recall_table(&self) -> Result<Option<RecallTable>, RecallTableError> {
        if self.recall_table.is_empty() {
            return Ok(None);
        }
        RecallTable::new(self.recall_table.clone()).map(Some)
    }
}

pub fn load_run_config(doc: &str) -> Result<RunConfig, DocParseError> {
    let cfg: RunConfig = serde_json::from_str(doc)?;
    if cfg.schema != RUN_SCHEMA {
        return Err(DocParseError::SchemaVersion {
            found: cfg.schema,
            expected: RUN_SCHEMA,
        });
    }
    Ok(cfg)
}

pub fn validate_run_config(cfg: &RunConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut invalid = |path: &str, message: String| {
        report.push(path, ViolationCode::InvalidField, message);
    };

    let positive = [
        (
            "constants.weight_bytes_per_param",
            cfg.constants.weight_bytes_per_param,
        ),
        (
            "constants.kv_bytes_per_element",
            cfg.constants.kv_bytes_per_element,
        ),
        (
            "constants.vector_bytes_per_element",
            cfg.constants.vector_bytes_per_element,
        ),
        ("constants.recall_gamma", cfg.constants.recall_gamma),
    ];
    for (path, v) in positive {
        if !(v.is_finite() && v > 0.0) {
            invalid(path, format!("must be positive and finite, got {v}"));
        }
    }
    let eff = cfg.constants.efficiency;
    if !(eff.is_finite() && eff > 0.0 && eff <= 1.0) {
        invalid(
            "constants.efficiency",
            format!("must be in (0, 1], got {eff}"),
        );
    }
    if let Some(slo) = cfg.ttft_slo {
        if !(slo.is_finite() && slo > 0.0) {
            invalid(
                "ttft_slo",
                format!("must be positive and finite, got {slo}"),
            );
        }
    }
    if cfg.batch_cap == 0 {
        invalid("batch_cap", "must be at least 1".to_string());
    }
    if let Err(e) = cfg.objectives.validate() {
        invalid("objectives", e.to_string());
    }
    let p = cfg.evolution.mutation_p;
    if !(p.is_finite() && (0.0..=1.0).contains(&p)) {
        invalid(
            "evolution.mutation_p",
            format!("must be in [0, 1], got {p}"),
        );
    }
    let lambdas = [
        ("evolution.lambda_rebuild", cfg.evolution.lambda_rebuild),
        ("evolution.lambda_medium", cfg.evolution.lambda_medium),
        ("evolution.lambda_cheap", cfg.evolution.lambda_cheap),
    ];
    for (path, v) in lambdas {
        if !(v.is_finite() && v >= 0.0) {
            invalid(path, format!("must be non-negative and finite, got {v}"));
        }
    }
    if let Some(cal) = &cfg.calibration {
        if cal.path.is_empty() {
            invalid("calibration.path", "must be non-empty".to_string());
        }
    }
    if let Err(e) = cfg.build_recall_table() {
        invalid("recall_table", e.to_string());
    }
    report
}
