//! Analytical per-node costs under a roofline device model.
//!
//! Every analytical time is `max(flops / peak_flops, mem_bytes / mem_bw) ×
//! (1 / efficiency)`: whichever of compute and memory traffic dominates
//! sets the time, derated by the fraction of peak the device sustains.

use super::calibration::{CalibError, CalibrationTable};
use crate::hw::Device;
use crate::ir::{IndexConfig, ModelNode, RetrievalNode};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Unit-cost constants, overridable per run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConstants {
    /// Bytes per model weight (2 = fp16/bf16).
    pub weight_bytes_per_param: f64,
    /// Bytes per KV-cache element.
    pub kv_bytes_per_element: f64,
    /// Bytes per database vector element (4 = f32).
    pub vector_bytes_per_element: f64,
    /// Fraction of device peak sustained; a device's own `efficiency`
    /// field overrides this.
    pub efficiency: f64,
    /// Exponent of the recall -> nprobe surrogate.
    pub recall_gamma: f64,
}

impl Default for CostConstants {
    fn default() -> Self {
        CostConstants {
            weight_bytes_per_param: 2.0,
            kv_bytes_per_element: 2.0,
            vector_bytes_per_element: 4.0,
            efficiency: 0.5,
            recall_gamma: 4.0,
        }
    }
}

/// Cost of running one node once (one batch through one stage).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeCost {
    pub flops: f64,
    pub mem_bytes: f64,
    pub time_s: f64,
    /// Capacity footprint while the stage is deployed; not part of the
    /// roofline time.
    pub mem_resident_bytes: f64,
}

impl NodeCost {
    /// The defining constructor: `time_s = max(flops/peak, mem/bw) ×
    /// (1/efficiency)`.
    pub fn roofline(
        flops: f64,
        mem_bytes: f64,
        mem_resident_bytes: f64,
        device: &Device,
        constants: &CostConstants,
    ) -> NodeCost {
        let efficiency = device.efficiency.unwrap_or(constants.efficiency);
        let time_s =
            f64::max(flops / device.peak_flops, mem_bytes / device.mem_bw) * (1.0 / efficiency);
        NodeCost {
            flops,
            mem_bytes,
            time_s,
            mem_resident_bytes,
        }
    }

    pub fn zero() -> NodeCost {
        NodeCost {
            flops: 0.0,
            mem_bytes: 0.0,
            time_s: 0.0,
            mem_resident_bytes: 0.0,
        }
    }
}

/// Decode-phase cost: one token at a time, `out_tokens` times.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodeCost {
    pub per_token: NodeCost,
    pub total_time_s: f64,
}

/// Retrieval cost split by scan phase; `total` covers all iterations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCost {
    pub total: NodeCost,
    pub per_iteration_s: f64,
    pub iterations: u64,
    /// Index shape the cost was computed for (derived when the node does
    /// not pin one).
    pub resolved_index: IndexConfig,
    pub breakdown: ScanBreakdown,
}

/// Per-iteration analytical scan terms; all zero for calibrated indexes.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScanBreakdown {
    pub coarse_flops: f64,
    pub fine_flops: f64,
    pub select_flops: f64,
    pub coarse_mem_bytes: f64,
    pub fine_mem_bytes: f64,
}

#[derive(Debug, Error)]
pub enum CostError {
    #[error(
        "node {node:?}: IVF shape must satisfy 1 <= nprobe <= nlist <= num_rows \
         (nlist {nlist}, nprobe {nprobe}, num_rows {num_rows})"
    )]
    InvalidIvf {
        node: String,
        nlist: u64,
        nprobe: u64,
        num_rows: u64,
    },
    #[error("node {node:?} references calibration table {table_ref:?} but no table was supplied")]
    CalibrationUnavailable { node: String, table_ref: String },
    #[error("node {node:?}: {source}")]
    Calibration { node: String, source: CalibError },
}

/// One point of a measured recall curve for an IVF index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecallPoint {
    pub recall: f64,
    pub nprobe: u64,
}

/// Measured recall -> nprobe curve; must be monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct RecallTable {
    points: Vec<RecallPoint>, // sorted by recall ascending
}

#[derive(Debug, Error)]
pub enum RecallTableError {
    #[error("recall table must be non-empty")]
    Empty,
    #[error("recall {0} is outside (0, 1]")]
    RecallRange(f64),
    #[error("duplicate recall value {0}")]
    DuplicateRecall(f64),
    #[error("nprobe must be positive (recall {0})")]
    ZeroProbe(f64),
    #[error(
        "recall table is not monotone: recall {hi_recall} maps to nprobe {hi_probe}, \
         below nprobe {lo_probe} at recall {lo_recall}"
    )]
    NonMonotone {
        lo_recall: f64,
        lo_probe: u64,
        hi_recall: f64,
        hi_probe: u64,
    },
}

impl RecallTable {
    pub fn new(mut points: Vec<RecallPoint>) -> Result<RecallTable, RecallTableError> {
        if points.is_empty() {
            return Err(RecallTableError::Empty);
        }
        for p in &points {
            if !(p.recall > 0.0 && p.recall <= 1.0) {
                return Err(RecallTableError::RecallRange(p.recall));
            }
            if p.nprobe == 0 {
                return Err(RecallTableError::ZeroProbe(p.recall));
            }
        }
        points.sort_by(|a, b| a.recall.partial_cmp(&b.recall).expect("finite recalls"));
        for pair in points.windows(2) {
            if pair[0].recall == pair[1].recall {
                return Err(RecallTableError::DuplicateRecall(pair[0].recall));
            }
            if pair[1].nprobe < pair[0].nprobe {
                return Err(RecallTableError::NonMonotone {
                    lo_recall: pair[0].recall,
                    lo_probe: pair[0].nprobe,
                    hi_recall: pair[1].recall,
                    hi_probe: pair[1].nprobe,
                });
            }
        }
        Ok(RecallTable { points })
    }

    /// Smallest tabulated nprobe reaching `recall`, or None when the table
    /// tops out below it.
    fn invert(&self, recall: f64) -> Option<u64> {
        self.points
            .iter()
            .find(|p| p.recall >= recall)
            .map(|p| p.nprobe)
    }
}

/// Probes needed to hit a recall requirement on an `nlist`-cell IVF index.
///
/// With a measured recall curve the curve is inverted (smallest tabulated
/// nprobe whose recall meets the requirement, full scan when the table
/// tops out below it). Otherwise the analytic surrogate `ceil(nlist ×
/// quality_req^gamma)` applies, clamped to [1, nlist].
pub fn recall_to_nprobe(
    quality_req: f64,
    nlist: u64,
    num_rows: u64,
    gamma: f64,
    table: Option<&RecallTable>,
) -> u64 {
    let nlist = nlist.min(num_rows).max(1);
    if let Some(table) = table {
        return table.invert(quality_req).unwrap_or(nlist).clamp(1, nlist);
    }
    let raw = (nlist as f64 * quality_req.powf(gamma)).ceil();
    (raw as u64).clamp(1, nlist)
}

fn kv_bytes(n: &ModelNode, len_tokens: f64, constants: &CostConstants) -> f64 {
    match &n.arch {
        Some(arch) => {
            2.0 * arch.n_layers as f64
                * arch.d_model as f64
                * len_tokens
                * constants.kv_bytes_per_element
        }
        None => 0.0,
    }
}

fn attention_flops(n: &ModelNode, len_a: f64, len_b: f64) -> f64 {
    match &n.arch {
        Some(arch) => 4.0 * arch.n_layers as f64 * arch.d_model as f64 * len_a * len_b,
        None => 0.0,
    }
}

/// Deployed footprint of a model stage: weights plus the KV cache of a full
/// batch at maximum context.
pub(crate) fn model_resident_bytes(n: &ModelNode, batch: u64, constants: &CostConstants) -> f64 {
    let full_context = (n.input_len + n.output_len) as f64;
    n.params as f64 * constants.weight_bytes_per_param
        + batch as f64 * kv_bytes(n, full_context, constants)
}

/// Deployed footprint of a retrieval stage: the vector table plus, for an
/// IVF index (pinned or derived), its centroid table.
pub(crate) fn retrieval_resident_bytes(
    n: &RetrievalNode,
    constants: &CostConstants,
    recall_table: Option<&RecallTable>,
) -> Result<f64, CostError> {
    let resolved = resolve_index(n, constants, recall_table)?;
    let dim = n.dim as f64;
    let vb = constants.vector_bytes_per_element;
    let mut resident = n.num_rows as f64 * dim * vb;
    if let IndexConfig::Ivf { nlist, .. } = &resolved {
        resident += *nlist as f64 * dim * vb;
    }
    Ok(resident)
}

/// Prompt-processing cost of one batch.
///
/// Compute covers only the `input_len - reused_tokens` suffix that lacks a
/// precomputed KV cache; memory covers the weights, the full prompt's KV
/// cache (written), and, under KV reuse, the reused entries (loaded).
pub fn model_prefill_cost(
    n: &ModelNode,
    d: &Device,
    batch: u64,
    constants: &CostConstants,
) -> NodeCost {
    let batch_f = batch as f64;
    let effective_len = n.input_len.saturating_sub(n.reused_tokens) as f64;
    let flops = batch_f
        * (2.0 * n.params as f64 * effective_len
            + attention_flops(n, effective_len, effective_len));
    let mut mem_bytes = n.params as f64 * constants.weight_bytes_per_param
        + batch_f * kv_bytes(n, n.input_len as f64, constants);
    if n.kv_cache_reuse {
        mem_bytes += batch_f * kv_bytes(n, n.reused_tokens as f64, constants);
    }
    NodeCost::roofline(
        flops,
        mem_bytes,
        model_resident_bytes(n, batch, constants),
        d,
        constants,
    )
}

/// Token-generation cost of one batch; the context length is approximated
/// by its mean over the decode, `input_len + out_tokens / 2`.
pub fn model_decode_cost(
    n: &ModelNode,
    d: &Device,
    batch: u64,
    constants: &CostConstants,
) -> DecodeCost {
    let out_tokens = n.output_len;
    if out_tokens == 0 {
        return DecodeCost {
            per_token: NodeCost {
                mem_resident_bytes: model_resident_bytes(n, batch, constants),
                ..NodeCost::zero()
            },
            total_time_s: 0.0,
        };
    }
    let batch_f = batch as f64;
    let context = n.input_len as f64 + out_tokens as f64 / 2.0;
    let flops = batch_f * (2.0 * n.params as f64 + attention_flops(n, 1.0, context));
    let mem_bytes = n.params as f64 * constants.weight_bytes_per_param
        + batch_f * kv_bytes(n, context, constants);
    let per_token = NodeCost::roofline(
        flops,
        mem_bytes,
        model_resident_bytes(n, batch, constants),
        d,
        constants,
    );
    DecodeCost {
        per_token,
        total_time_s: out_tokens as f64 * per_token.time_s,
    }
}

/// Rows a probe scans. When nprobe equals nlist the scan covers the whole
/// index; computing that case as `num_rows` (not `nprobe × num_rows /
/// nlist`) makes the flat-scan identity exact in f64.
fn scanned_rows(num_rows: u64, nlist: u64, nprobe: u64) -> f64 {
    if nprobe == nlist {
        num_rows as f64
    } else {
        nprobe as f64 * (num_rows as f64 / nlist as f64)
    }
}

/// Index shape the cost model will price for a node: the node's own
/// configuration when pinned, else an IVF index derived from the corpus
/// size (`nlist = ceil(sqrt(num_rows))`, a standard sizing rule) with
/// nprobe from the recall requirement.
pub fn resolve_index(
    n: &RetrievalNode,
    constants: &CostConstants,
    recall_table: Option<&RecallTable>,
) -> Result<IndexConfig, CostError> {
    match &n.index_config {
        Some(IndexConfig::Ivf { nlist, nprobe }) => {
            if *nlist == 0 || *nprobe == 0 || nprobe > nlist || *nlist > n.num_rows {
                return Err(CostError::InvalidIvf {
                    node: n.id.clone(),
                    nlist: *nlist,
                    nprobe: *nprobe,
                    num_rows: n.num_rows,
                });
            }
            Ok(IndexConfig::Ivf {
                nlist: *nlist,
                nprobe: *nprobe,
            })
        }
        Some(other) => Ok(other.clone()),
        None => {
            let nlist = ((n.num_rows as f64).sqrt().ceil() as u64).clamp(1, n.num_rows);
            let nprobe = recall_to_nprobe(
                n.quality_req,
                nlist,
                n.num_rows,
                constants.recall_gamma,
                recall_table,
            );
            Ok(IndexConfig::Ivf { nlist, nprobe })
        }
    }
}

/// Cost of one retrieval node for one request (all iterations, batch 1).
///
/// Analytical path: coarse scan `2·dim·nlist` flops over the centroid table
/// (IVF only), fine scan `2·dim·scanned_rows` flops over `vector_bytes·dim`
/// -sized rows, plus a `scanned_rows × log2(top_k)` selection term counted
/// as flops. Calibrated path: per-iteration seconds looked up under keys
/// `[num_rows, dim, top_k]`.
pub fn retrieval_cost(
    n: &RetrievalNode,
    d: &Device,
    constants: &CostConstants,
    calibration: Option<&CalibrationTable>,
    recall_table: Option<&RecallTable>,
) -> Result<RetrievalCost, CostError> {
    let resolved = resolve_index(n, constants, recall_table)?;
    let resident = retrieval_resident_bytes(n, constants, recall_table)?;
    let iterations = n.iterations.max(1);
    let iters_f = iterations as f64;
    let dim = n.dim as f64;
    let vb = constants.vector_bytes_per_element;

    if let IndexConfig::Calibrated { table_ref } = &resolved {
        let table = calibration.ok_or_else(|| CostError::CalibrationUnavailable {
            node: n.id.clone(),
            table_ref: table_ref.clone(),
        })?;
        let keys = [n.num_rows as f64, dim, n.top_k as f64];
        let per_iteration_s =
            table
                .lookup(table_ref, &keys)
                .map_err(|source| CostError::Calibration {
                    node: n.id.clone(),
                    source,
                })?;
        return Ok(RetrievalCost {
            total: NodeCost {
                flops: 0.0,
                mem_bytes: 0.0,
                time_s: iters_f * per_iteration_s,
                mem_resident_bytes: resident,
            },
            per_iteration_s,
            iterations,
            resolved_index: resolved,
            breakdown: ScanBreakdown::default(),
        });
    }

    let (coarse_flops, coarse_mem, scanned) = match &resolved {
        IndexConfig::Flat => (0.0, 0.0, n.num_rows as f64),
        IndexConfig::Ivf { nlist, nprobe } => {
            let nlist_f = *nlist as f64;
            (
                2.0 * dim * nlist_f,
                vb * dim * nlist_f,
                scanned_rows(n.num_rows, *nlist, *nprobe),
            )
        }
        IndexConfig::Calibrated { .. } => unreachable!("handled above"),
    };
    let breakdown = ScanBreakdown {
        coarse_flops,
        fine_flops: 2.0 * dim * scanned,
        select_flops: scanned * (n.top_k as f64).log2(),
        coarse_mem_bytes: coarse_mem,
        fine_mem_bytes: vb * dim * scanned,
    };
    let flops = breakdown.coarse_flops + breakdown.fine_flops + breakdown.select_flops;
    let mem_bytes = breakdown.coarse_mem_bytes + breakdown.fine_mem_bytes;
    let per_iteration = NodeCost::roofline(flops, mem_bytes, resident, d, constants);
    let total = NodeCost::roofline(iters_f * flops, iters_f * mem_bytes, resident, d, constants);
    Ok(RetrievalCost {
        total,
        per_iteration_s: per_iteration.time_s,
        iterations,
        resolved_index: resolved,
        breakdown,
    })
}

/// Transfer seconds for an edge between devices; edges whose endpoints
/// share a device are free.
pub fn edge_cost(bytes: u64, interconnect_bw: f64, same_device: bool) -> f64 {
    if same_device {
        0.0
    } else {
        bytes as f64 / interconnect_bw
    }
}

/// The node-cost seam: anything producing these three costs can replace
/// the analytical model (e.g. a learned regressor).
pub trait NodeCostEstimator {
    fn prefill(&self, n: &ModelNode, d: &Device, batch: u64) -> NodeCost;
    fn decode(&self, n: &ModelNode, d: &Device, batch: u64) -> DecodeCost;
    fn retrieval(&self, n: &RetrievalNode, d: &Device) -> Result<RetrievalCost, CostError>;
}

/// The default estimator: roofline formulas plus optional calibration.
pub struct AnalyticalEstimator<'a> {
    pub constants: &'a CostConstants,
    pub calibration: Option<&'a CalibrationTable>,
    pub recall_table: Option<&'a RecallTable>,
}

impl NodeCostEstimator for AnalyticalEstimator<'_> {
    fn prefill(&self, n: &ModelNode, d: &Device, batch: u64) -> NodeCost {
        model_prefill_cost(n, d, batch, self.constants)
    }

    fn decode(&self, n: &ModelNode, d: &Device, batch: u64) -> DecodeCost {
        model_decode_cost(n, d, batch, self.constants)
    }

    fn retrieval(&self, n: &RetrievalNode, d: &Device) -> Result<RetrievalCost, CostError> {
        retrieval_cost(n, d, self.constants, self.calibration, self.recall_table)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ir::{ModelArch, ModelRole};
    use approx::assert_relative_eq;

    fn device(peak: f64, bw: f64, efficiency: Option<f64>) -> Device {
        Device {
            id: "d0".into(),
            kind: "gpu".into(),
            peak_flops: peak,
            mem_bw: bw,
            mem_capacity: 1e12,
            cost_per_hour: 1.0,
            count: 1,
            efficiency,
        }
    }

    fn llm() -> ModelNode {
        ModelNode {
            id: "llm".into(),
            role: ModelRole::MainLlm,
            params: 7_000_000_000,
            arch: None,
            input_len: 1000,
            output_len: 256,
            kv_cache_reuse: false,
            reused_tokens: 0,
        }
    }

    fn index(num_rows: u64, dim: u64) -> RetrievalNode {
        RetrievalNode {
            id: "r".into(),
            num_rows,
            dim,
            top_k: 10,
            quality_req: 0.9,
            index_config: None,
            speculative: false,
            iterations: 1,
        }
    }

    #[test]
    fn roofline_takes_the_slower_leg() {
        // flops/peak = 2 s, mem/bw = 3 s, efficiency 1 -> 3 s.
        let d = device(1.0, 1.0, Some(1.0));
        let c = NodeCost::roofline(2.0, 3.0, 0.0, &d, &CostConstants::default());
        assert_eq!(c.time_s, 3.0);
    }

    #[test]
    fn efficiency_derates_time() {
        let d = device(1.0, 1.0, None); // run-config default 0.5
        let c = NodeCost::roofline(2.0, 3.0, 0.0, &d, &CostConstants::default());
        assert_eq!(c.time_s, 6.0);
        let d = device(1.0, 1.0, Some(0.25)); // device override wins
        let c = NodeCost::roofline(2.0, 3.0, 0.0, &d, &CostConstants::default());
        assert_eq!(c.time_s, 12.0);
    }

    #[test]
    fn prefill_flops_match_hand_arithmetic() {
        // 2 x 7e9 params x 1000 tokens, batch 1, no attention term.
        let d = device(1e15, 3e12, Some(1.0));
        let c = model_prefill_cost(&llm(), &d, 1, &CostConstants::default());
        assert_eq!(c.flops, 1.4e13);
    }

    #[test]
    fn full_reuse_zeroes_compute_but_not_memory() {
        let mut n = llm();
        n.arch = Some(ModelArch {
            n_layers: 32,
            d_model: 4096,
        });
        n.kv_cache_reuse = true;
        n.reused_tokens = n.input_len;
        let d = device(1e15, 3e12, Some(1.0));
        let c = model_prefill_cost(&n, &d, 1, &CostConstants::default());
        assert_eq!(c.flops, 0.0);
        assert!(c.mem_bytes > 0.0);
    }

    #[test]
    fn reuse_off_equals_zero_reused_tokens_exactly() {
        let mut with_flag = llm();
        with_flag.arch = Some(ModelArch {
            n_layers: 32,
            d_model: 4096,
        });
        with_flag.kv_cache_reuse = true;
        with_flag.reused_tokens = 0;
        let mut without = with_flag.clone();
        without.kv_cache_reuse = false;
        let d = device(1e15, 3e12, None);
        let constants = CostConstants::default();
        assert_eq!(
            model_prefill_cost(&with_flag, &d, 4, &constants),
            model_prefill_cost(&without, &d, 4, &constants)
        );
    }

    #[test]
    fn decode_is_memory_bound_at_small_batch() {
        // Weights 1.4e10 B: max(1.4e10/1e15, 1.4e10/3e12) = 4.67e-3 s.
        let d = device(1e15, 3e12, Some(1.0));
        let c = model_decode_cost(&llm(), &d, 1, &CostConstants::default());
        assert_relative_eq!(c.per_token.time_s, 1.4e10 / 3e12, max_relative = 1e-15);
        assert_relative_eq!(c.per_token.time_s, 4.67e-3, max_relative = 1e-2);
        assert_eq!(c.total_time_s, 256.0 * c.per_token.time_s);
    }

    #[test]
    fn batching_amortizes_memory_bound_decode() {
        let d = device(1e15, 3e12, Some(1.0));
        let constants = CostConstants::default();
        let t1 = model_decode_cost(&llm(), &d, 1, &constants)
            .per_token
            .time_s;
        let t8 = model_decode_cost(&llm(), &d, 8, &constants)
            .per_token
            .time_s;
        // No arch: KV terms absent, so per-token time is identical while
        // throughput scales with the batch.
        assert_relative_eq!(t8 / t1, 1.0, max_relative = 1e-12);
        assert!(8.0 / t8 > 7.9 / t1);
    }

    #[test]
    fn zero_output_decodes_for_free() {
        let mut n = llm();
        n.role = ModelRole::Encoder;
        n.output_len = 0;
        let d = device(1e15, 3e12, None);
        let c = model_decode_cost(&n, &d, 4, &CostConstants::default());
        assert_eq!(c.total_time_s, 0.0);
        assert_eq!(c.per_token.flops, 0.0);
    }

    #[test]
    fn ivf_scan_terms_match_hand_arithmetic() {
        let mut n = index(1_000_000, 128);
        n.index_config = Some(IndexConfig::Ivf {
            nlist: 1000,
            nprobe: 10,
        });
        let d = device(1e12, 1e11, None);
        let rc = retrieval_cost(&n, &d, &CostConstants::default(), None, None).unwrap();
        assert_eq!(rc.breakdown.fine_flops, 2.56e6); // 2 x 128 x 10 x 1000
        assert_eq!(rc.breakdown.coarse_flops, 2.56e5); // 2 x 128 x 1000
    }

    #[test]
    fn flat_scan_of_one_row_costs_two_dim_flops() {
        let mut n = index(1, 64);
        n.top_k = 1;
        n.index_config = Some(IndexConfig::Flat);
        let d = device(1e12, 1e11, None);
        let rc = retrieval_cost(&n, &d, &CostConstants::default(), None, None).unwrap();
        assert_eq!(rc.total.flops, 2.0 * 64.0);
    }

    #[test]
    fn full_probe_equals_flat_scan_exactly() {
        let mut ivf = index(999_983, 128); // prime: rows/nlist is inexact
        ivf.index_config = Some(IndexConfig::Ivf {
            nlist: 137,
            nprobe: 137,
        });
        let mut flat = ivf.clone();
        flat.index_config = Some(IndexConfig::Flat);
        let d = device(1e12, 1e11, None);
        let constants = CostConstants::default();
        let rc_ivf = retrieval_cost(&ivf, &d, &constants, None, None).unwrap();
        let rc_flat = retrieval_cost(&flat, &d, &constants, None, None).unwrap();
        assert_eq!(rc_ivf.breakdown.fine_flops, rc_flat.breakdown.fine_flops);
        assert_eq!(
            rc_ivf.breakdown.fine_mem_bytes,
            rc_flat.breakdown.fine_mem_bytes
        );
        assert_eq!(
            rc_ivf.breakdown.select_flops,
            rc_flat.breakdown.select_flops
        );
    }

    #[test]
    fn iterations_scale_the_whole_cost() {
        let mut n = index(100_000, 128);
        n.iterations = 4;
        let d = device(1e12, 1e11, None);
        let rc = retrieval_cost(&n, &d, &CostConstants::default(), None, None).unwrap();
        let mut once = n.clone();
        once.iterations = 1;
        let rc1 = retrieval_cost(&once, &d, &CostConstants::default(), None, None).unwrap();
        assert_eq!(rc.total.flops, 4.0 * rc1.total.flops);
        assert_eq!(rc.per_iteration_s, rc1.per_iteration_s);
    }

    #[test]
    fn surrogate_probe_count_matches_hand_arithmetic() {
        // ceil(1000 x 0.5^4) = ceil(62.5) = 63.
        assert_eq!(recall_to_nprobe(0.5, 1000, 1_000_000, 4.0, None), 63);
        // Exact recall forces a full probe.
        assert_eq!(recall_to_nprobe(1.0, 1000, 1_000_000, 4.0, None), 1000);
        // Clamped below.
        assert_eq!(recall_to_nprobe(0.01, 1000, 1_000_000, 4.0, None), 1);
    }

    #[test]
    fn recall_table_inversion_picks_smallest_sufficient_probe() {
        let table = RecallTable::new(vec![
            RecallPoint {
                recall: 0.9,
                nprobe: 32,
            },
            RecallPoint {
                recall: 0.95,
                nprobe: 64,
            },
        ])
        .unwrap();
        assert_eq!(
            recall_to_nprobe(0.93, 1000, 1_000_000, 4.0, Some(&table)),
            64
        );
        assert_eq!(
            recall_to_nprobe(0.9, 1000, 1_000_000, 4.0, Some(&table)),
            32
        );
        // Above the table's best recall: fall back to a full probe.
        assert_eq!(
            recall_to_nprobe(0.99, 1000, 1_000_000, 4.0, Some(&table)),
            1000
        );
    }

    #[test]
    fn non_monotone_recall_table_fails_to_load() {
        let err = RecallTable::new(vec![
            RecallPoint {
                recall: 0.9,
                nprobe: 64,
            },
            RecallPoint {
                recall: 0.95,
                nprobe: 32,
            },
        ])
        .unwrap_err();
        assert!(matches!(err, RecallTableError::NonMonotone { .. }));
    }

    #[test]
    fn calibrated_retrieval_uses_the_table() {
        use super::super::calibration::{load_calibration, InterpolationMode};
        let table = load_calibration(
            "op,key1,key2,key3,seconds\nmy_index,100000,128,10,0.002\n",
            InterpolationMode::Nearest,
        )
        .unwrap();
        let mut n = index(100_000, 128);
        n.index_config = Some(IndexConfig::Calibrated {
            table_ref: "my_index".into(),
        });
        n.iterations = 4;
        let d = device(1e12, 1e11, None);
        let rc = retrieval_cost(&n, &d, &CostConstants::default(), Some(&table), None).unwrap();
        assert_eq!(rc.per_iteration_s, 0.002);
        assert_eq!(rc.total.time_s, 4.0 * 0.002);
        // Without a table the reference cannot resolve.
        let err = retrieval_cost(&n, &d, &CostConstants::default(), None, None).unwrap_err();
        assert!(matches!(err, CostError::CalibrationUnavailable { .. }));
    }

    #[test]
    fn invalid_ivf_shape_is_an_error() {
        let mut n = index(1000, 128);
        n.index_config = Some(IndexConfig::Ivf {
            nlist: 100,
            nprobe: 200,
        });
        let d = device(1e12, 1e11, None);
        assert!(matches!(
            retrieval_cost(&n, &d, &CostConstants::default(), None, None),
            Err(CostError::InvalidIvf { .. })
        ));
    }

    #[test]
    fn edge_cost_rules() {
        assert_eq!(edge_cost(3_000_000_000, 1e10, false), 0.3);
        assert_eq!(edge_cost(3_000_000_000, 1e10, true), 0.0);
        assert_eq!(edge_cost(0, 1e10, false), 0.0);
    }
}
