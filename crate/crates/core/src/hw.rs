//! Hardware pool documents: the devices a plan may be placed on.

use crate::canon::to_canonical_json;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use thiserror::Error;

/// Schema tag required at the top of every pool document.
pub const HW_SCHEMA: &str = "rag-hw/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Device {
    pub id: String,
    /// Free-form device family label, e.g. "gpu-a" or "cpu".
    pub kind: String,
    /// Peak compute in FLOP/s.
    pub peak_flops: f64,
    /// Memory bandwidth in bytes/s.
    pub mem_bw: f64,
    /// Memory capacity in bytes.
    pub mem_capacity: f64,
    /// Price of one unit for one hour.
    pub cost_per_hour: f64,
    /// Units of this device available in the pool.
    pub count: u32,
    /// Fraction of peak this device sustains; overrides the run-wide
    /// efficiency constant when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardwarePool {
    pub schema: String,
    pub devices: Vec<Device>,
    /// Cross-device link bandwidth in bytes/s, applied to every edge whose
    /// endpoints sit on different devices.
    pub interconnect_bw: f64,
}

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("pool document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {found:?}, expected {HW_SCHEMA:?}")]
    SchemaVersion { found: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("allocation references unknown device {0:?}")]
    UnknownDevice(String),
    #[error("allocation of {requested} units of {device:?} exceeds its count {available}")]
    OverAllocated {
        device: String,
        requested: u32,
        available: u32,
    },
}

impl HardwarePool {
    pub fn device(&self, id: &str) -> Option<&Device> {
        self.devices.iter().find(|d| d.id == id)
    }
}

/// Canonical text of a pool document.
pub fn serialize_pool(pool: &HardwarePool) -> String {
    to_canonical_json(pool)
}

/// Strict parse plus invariant checks; the first violated invariant is
/// reported with its field path.
pub fn load_pool(doc: &str) -> Result<HardwarePool, PoolError> {
    let pool: HardwarePool = serde_json::from_str(doc)?;
    if pool.schema != HW_SCHEMA {
        return Err(PoolError::SchemaVersion { found: pool.schema });
    }
    let invalid = |path: String, message: String| PoolError::Invalid { path, message };
    if pool.devices.is_empty() {
        return Err(invalid(
            "devices".into(),
            "pool must contain at least one device".into(),
        ));
    }
    if pool.interconnect_bw <= 0.0 || !pool.interconnect_bw.is_finite() {
        return Err(invalid(
            "interconnect_bw".into(),
            format!(
                "interconnect_bw {} must be positive and finite",
                pool.interconnect_bw
            ),
        ));
    }
    let mut ids = HashSet::new();
    for (i, d) in pool.devices.iter().enumerate() {
        let base = format!("devices[{i}]");
        if !ids.insert(d.id.clone()) {
            return Err(invalid(
                format!("{base}.id"),
                format!("device id {:?} appears more than once", d.id),
            ));
        }
        for (value, field) in [
            (d.peak_flops, "peak_flops"),
            (d.mem_bw, "mem_bw"),
            (d.mem_capacity, "mem_capacity"),
            (d.cost_per_hour, "cost_per_hour"),
        ] {
            if value <= 0.0 || !value.is_finite() {
                return Err(invalid(
                    format!("{base}.{field}"),
                    format!("{field} {value} must be positive and finite"),
                ));
            }
        }
        if d.count == 0 {
            return Err(invalid(
                format!("{base}.count"),
                "count must be at least 1".into(),
            ));
        }
        if let Some(eff) = d.efficiency {
            if !(eff > 0.0 && eff <= 1.0) {
                return Err(invalid(
                    format!("{base}.efficiency"),
                    format!("efficiency {eff} is outside (0, 1]"),
                ));
            }
        }
    }
    Ok(pool)
}

/// Hourly price of an allocation, given as device-id to unit count.
///
/// An empty allocation is free; requesting more units than a device has is
/// an error.
pub fn pool_cost(
    pool: &HardwarePool,
    allocation: &BTreeMap<String, u32>,
) -> Result<f64, PoolError> {
    let mut total = 0.0;
    for (id, &units) in allocation {
        let device = pool
            .device(id)
            .ok_or_else(|| PoolError::UnknownDevice(id.clone()))?;
        if units > device.count {
            return Err(PoolError::OverAllocated {
                device: id.clone(),
                requested: units,
                available: device.count,
            });
        }
        total += f64::from(units) * device.cost_per_hour;
    }
    Ok(total)
}
