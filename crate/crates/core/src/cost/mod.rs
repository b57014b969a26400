//! The performance model: price a workload IR on a hardware pool.
//!
//! [`estimate`] evaluates one placement; [`map_resources`] searches
//! placements. Per-node math lives in [`node`], measured-cost tables in
//! [`calibration`].

pub mod calibration;
pub mod node;
mod placement;

pub use calibration::{load_calibration, CalibError, CalibrationTable, InterpolationMode};
pub use node::{
    edge_cost, model_decode_cost, model_prefill_cost, recall_to_nprobe, resolve_index,
    retrieval_cost, AnalyticalEstimator, CostConstants, CostError, DecodeCost, NodeCost,
    NodeCostEstimator, RecallPoint, RecallTable, RecallTableError, RetrievalCost, ScanBreakdown,
};
pub use placement::{map_resources, PlaceError, PlaceOutcome, PlanOptions, SearchMode};

use crate::hw::{pool_cost, HardwarePool};
use crate::ir::{GraphError, ModelRole, Node, RagIr};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use thiserror::Error;

/// Where one IR stage runs: a device and how many identical units of it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceAssignment {
    pub device: String,
    pub units: u32,
}

/// A complete deployment decision for an IR: every node-id mapped to a
/// device, plus the batch size all stages run in lockstep.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Placement {
    pub assignment: BTreeMap<String, DeviceAssignment>,
    pub batch_size: u32,
}

impl Placement {
    /// Units requested per device, summed over stages.
    pub fn allocation(&self) -> BTreeMap<String, u32> {
        let mut alloc: BTreeMap<String, u32> = BTreeMap::new();
        for a in self.assignment.values() {
            *alloc.entry(a.device.clone()).or_insert(0) += a.units;
        }
        alloc
    }
}

/// Predicted serving metrics for one (IR, pool, placement) triple.
///
/// `per_stage` holds each stage's expected per-batch cost: flops, bytes and
/// time are phase sums (prefill + decode, or all retrieval iterations)
/// scaled to the batch and weighted across the mixture, while
/// `mem_resident_bytes` is the worst case across graphs. The roofline time
/// law applies to the single-phase costs these aggregates are built from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerfEstimate {
    /// Expected time to first token, weighted across the mixture.
    pub ttft_s: f64,
    /// Expected time per output token, including amortized stalls of
    /// non-speculative iterative retrieval.
    pub tpot_s: f64,
    /// End-to-end requests per second: the bottleneck stage's throughput.
    pub rps: f64,
    pub req_per_dollar: f64,
    pub pool_cost_per_hour: f64,
    pub per_stage: BTreeMap<String, NodeCost>,
    pub placement: Placement,
    pub warnings: Vec<String>,
}

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("placement batch_size must be at least 1")]
    ZeroBatch,
    #[error("node {0:?} has no device assignment")]
    MissingAssignment(String),
    #[error("assignment for node {node:?} references unknown device {device:?}")]
    UnknownDevice { node: String, device: String },
    #[error("node {0:?} is assigned zero units")]
    ZeroUnits(String),
    #[error("device {device:?}: stages request {requested} units but only {available} exist")]
    UnitsExceeded {
        device: String,
        requested: u64,
        available: u32,
    },
    #[error(
        "device {device:?}: resident {required:.6e} bytes exceed {available:.6e} bytes \
         across {units} allocated units"
    )]
    CapacityExceeded {
        device: String,
        required: f64,
        available: f64,
        units: u32,
    },
    #[error("graph {graph:?} has {count} main-llm nodes; at most one is supported")]
    MultipleMainLlm { graph: String, count: usize },
    #[error("node {0:?} appears as different node kinds across the mixture")]
    StageKindMismatch(String),
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Inputs to [`estimate`] beyond the documents themselves.
#[derive(Default)]
pub struct EstimateOptions<'a> {
    pub constants: CostConstants,
    pub calibration: Option<&'a CalibrationTable>,
    pub recall_table: Option<&'a RecallTable>,
    /// Record warnings for nodes the analytical model prices incompletely
    /// (missing arch drops attention and KV terms).
    pub strict: bool,
}

/// Prices an IR on a pool under a fixed placement with the analytical
/// estimator.
///
/// Expects an IR that passes [`crate::ir::validate`]; placement
/// consistency (assignments, units, capacity) is checked here.
pub fn estimate(
    ir: &RagIr,
    pool: &HardwarePool,
    placement: &Placement,
    opts: &EstimateOptions,
) -> Result<PerfEstimate, EstimateError> {
    let estimator = AnalyticalEstimator {
        constants: &opts.constants,
        calibration: opts.calibration,
        recall_table: opts.recall_table,
    };
    estimate_with(ir, pool, placement, &estimator, opts.strict)
}

#[derive(Default)]
struct StageAccum {
    expected_flops: f64,
    expected_mem: f64,
    expected_time: f64,
    resident_max: f64,
    is_model: Option<bool>,
}

struct NodeEval {
    /// Whole-node time for one batch: prefill + full decode, or all
    /// retrieval iterations.
    full_time: f64,
    /// Time until this node's output first becomes available to a
    /// downstream consumer: full time for models, one iteration for
    /// retrieval.
    first_output_time: f64,
    decode_per_token: f64,
    /// Per-token decode stall this node imposes on the generator: batch x
    /// per-iteration time x iterations, later divided by out_tokens.
    /// Zero for speculative or once-only retrieval.
    stall_total: f64,
    is_main_llm: bool,
    prefill_time: f64,
}

/// [`estimate`] with a caller-supplied node-cost implementation.
pub fn estimate_with(
    ir: &RagIr,
    pool: &HardwarePool,
    placement: &Placement,
    estimator: &dyn NodeCostEstimator,
    strict: bool,
) -> Result<PerfEstimate, EstimateError> {
    if placement.batch_size == 0 {
        return Err(EstimateError::ZeroBatch);
    }
    let batch = u64::from(placement.batch_size);
    let batch_f = batch as f64;

    let device_of = |node: &str| -> Result<(&str, u32), EstimateError> {
        let a = placement
            .assignment
            .get(node)
            .ok_or_else(|| EstimateError::MissingAssignment(node.to_string()))?;
        if a.units == 0 {
            return Err(EstimateError::ZeroUnits(node.to_string()));
        }
        if pool.device(&a.device).is_none() {
            return Err(EstimateError::UnknownDevice {
                node: node.to_string(),
                device: a.device.clone(),
            });
        }
        Ok((a.device.as_str(), a.units))
    };

    // Placement-only audits need no pricing: every assignment must name a
    // real device with at least one unit, and the units drawn from one
    // device across all assignments must not exceed its count. Checked
    // first so placement search discards overdrawn combos cheaply.
    let mut per_device_units: BTreeMap<&str, u64> = BTreeMap::new();
    for (node, a) in &placement.assignment {
        if a.units == 0 {
            return Err(EstimateError::ZeroUnits(node.clone()));
        }
        if pool.device(&a.device).is_none() {
            return Err(EstimateError::UnknownDevice {
                node: node.clone(),
                device: a.device.clone(),
            });
        }
        *per_device_units.entry(a.device.as_str()).or_insert(0) += u64::from(a.units);
    }
    for (device_id, &requested) in &per_device_units {
        let device = pool.device(device_id).expect("checked above");
        if requested > u64::from(device.count) {
            return Err(EstimateError::UnitsExceeded {
                device: device_id.to_string(),
                requested,
                available: device.count,
            });
        }
    }

    let mut stages: BTreeMap<String, StageAccum> = BTreeMap::new();
    let mut warnings: Vec<String> = Vec::new();
    let mut ttft = 0.0;
    let mut tpot = 0.0;

    for wg in &ir.graphs {
        let g = &wg.graph;
        let w = wg.weight;
        let mut evals: BTreeMap<&str, NodeEval> = BTreeMap::new();

        let main_llms: Vec<&str> = g
            .nodes
            .iter()
            .filter_map(|n| n.as_model())
            .filter(|m| m.role == ModelRole::MainLlm)
            .map(|m| m.id.as_str())
            .collect();
        if main_llms.len() > 1 {
            return Err(EstimateError::MultipleMainLlm {
                graph: g.name.clone(),
                count: main_llms.len(),
            });
        }
        let out_tokens = main_llms
            .first()
            .and_then(|id| g.nodes.iter().find(|n| n.id() == *id))
            .and_then(|n| n.as_model())
            .map_or(0, |m| m.output_len);

        for n in &g.nodes {
            let (device_id, _) = device_of(n.id())?;
            let device = pool.device(device_id).expect("checked by device_of");
            let accum = stages.entry(n.id().to_string()).or_default();

            let (eval, flops, mem, resident, is_model) = match n {
                Node::Model(m) => {
                    if strict && m.arch.is_none() {
                        warnings.push(format!(
                            "graph {:?}: node {:?} has no arch; attention and KV terms dropped",
                            g.name, m.id
                        ));
                    }
                    let pre = estimator.prefill(m, device, batch);
                    let dec = estimator.decode(m, device, batch);
                    let out_f = m.output_len as f64;
                    let full_time = pre.time_s + dec.total_time_s;
                    (
                        NodeEval {
                            full_time,
                            first_output_time: full_time,
                            decode_per_token: dec.per_token.time_s,
                            stall_total: 0.0,
                            is_main_llm: m.role == ModelRole::MainLlm,
                            prefill_time: pre.time_s,
                        },
                        pre.flops + dec.per_token.flops * out_f,
                        pre.mem_bytes + dec.per_token.mem_bytes * out_f,
                        pre.mem_resident_bytes,
                        true,
                    )
                }
                Node::Retrieval(r) => {
                    let rc = estimator.retrieval(r, device)?;
                    let stalls = !r.speculative && rc.iterations >= 2;
                    (
                        NodeEval {
                            full_time: batch_f * rc.total.time_s,
                            first_output_time: batch_f * rc.per_iteration_s,
                            decode_per_token: 0.0,
                            stall_total: if stalls {
                                batch_f * rc.per_iteration_s * rc.iterations as f64
                            } else {
                                0.0
                            },
                            is_main_llm: false,
                            prefill_time: 0.0,
                        },
                        batch_f * rc.total.flops,
                        batch_f * rc.total.mem_bytes,
                        rc.total.mem_resident_bytes,
                        false,
                    )
                }
            };

            match accum.is_model {
                None => accum.is_model = Some(is_model),
                Some(kind) if kind != is_model => {
                    return Err(EstimateError::StageKindMismatch(n.id().to_string()));
                }
                _ => {}
            }
            accum.expected_flops += w * flops;
            accum.expected_mem += w * mem;
            accum.expected_time += w * eval.full_time;
            accum.resident_max = accum.resident_max.max(resident);
            evals.insert(n.id(), eval);
        }

        // Edge payloads between node pairs, summed over parallel edges.
        let mut edge_bytes: BTreeMap<(&str, &str), u64> = BTreeMap::new();
        for e in &g.edges {
            *edge_bytes
                .entry((e.from.as_str(), e.to.as_str()))
                .or_insert(0) += e.bytes;
        }
        let path_edge_cost = |path: &[String]| -> f64 {
            let mut total = 0.0;
            for pair in path.windows(2) {
                let bytes = edge_bytes
                    .get(&(pair[0].as_str(), pair[1].as_str()))
                    .copied();
                let from_dev = placement.assignment[&pair[0]].device.as_str();
                let to_dev = placement.assignment[&pair[1]].device.as_str();
                total += edge_cost(bytes.unwrap_or(0), pool.interconnect_bw, from_dev == to_dev);
            }
            total
        };

        // Graph latency: with a main-llm, TTFT follows the slowest path
        // into it (upstream models run to completion, retrieval delivers
        // its first iteration, the llm prefills). Without one, TTFT is the
        // full critical path and there is no token stream to measure TPOT
        // on.
        let graph_ttft = if let Some(&llm) = main_llms.first() {
            let targets = BTreeSet::from([llm]);
            let paths = crate::ir::paths_to(g, &targets)?;
            let mut worst = 0.0f64;
            for path in &paths {
                let mut t = path_edge_cost(path);
                for id in &path[..path.len() - 1] {
                    t += evals[id.as_str()].first_output_time;
                }
                t += evals[llm].prefill_time;
                worst = worst.max(t);
            }
            worst
        } else {
            let paths = crate::ir::critical_paths(g)?;
            let mut worst = 0.0f64;
            for path in &paths {
                let mut t = path_edge_cost(path);
                for id in path {
                    t += evals[id.as_str()].full_time;
                }
                worst = worst.max(t);
            }
            worst
        };

        let graph_tpot = if out_tokens > 0 {
            let decode = evals
                .values()
                .find(|e| e.is_main_llm)
                .map_or(0.0, |e| e.decode_per_token);
            let stalls: f64 =
                evals.values().map(|e| e.stall_total).sum::<f64>() / out_tokens as f64;
            decode + stalls
        } else {
            0.0
        };

        ttft += w * graph_ttft;
        tpot += w * graph_tpot;
    }

    // Capacity audit: per device, the stages it hosts must fit in the
    // units allocated to it.
    let mut per_device_resident: BTreeMap<&str, f64> = BTreeMap::new();
    for (node, accum) in &stages {
        let (device_id, _) = device_of(node)?;
        *per_device_resident.entry(device_id).or_insert(0.0) += accum.resident_max;
    }
    for (device_id, &required) in &per_device_resident {
        let device = pool.device(device_id).expect("checked by device_of");
        let units = u32::try_from(per_device_units[device_id]).expect("requested <= count: u32");
        let available = f64::from(units) * device.mem_capacity;
        if required > available {
            return Err(EstimateError::CapacityExceeded {
                device: device_id.to_string(),
                required,
                available,
                units,
            });
        }
    }

    // Throughput: each stage completes units x batch requests per expected
    // batch time; the pipeline is gated by its slowest stage.
    let mut rps = f64::INFINITY;
    for (node, accum) in &stages {
        let (_, units) = device_of(node)?;
        let throughput = f64::from(units) * batch_f / accum.expected_time;
        rps = rps.min(throughput);
    }
    if stages.is_empty() {
        rps = 0.0;
    }

    let pool_cost_per_hour =
        pool_cost(pool, &placement.allocation()).expect("allocation audited above");
    let req_per_dollar = if pool_cost_per_hour > 0.0 {
        rps * 3600.0 / pool_cost_per_hour
    } else {
        0.0
    };

    let per_stage = stages
        .into_iter()
        .map(|(node, accum)| {
            (
                node,
                NodeCost {
                    flops: accum.expected_flops,
                    mem_bytes: accum.expected_mem,
                    time_s: accum.expected_time,
                    mem_resident_bytes: accum.resident_max,
                },
            )
        })
        .collect();

    Ok(PerfEstimate {
        ttft_s: ttft,
        tpot_s: tpot,
        rps,
        req_per_dollar,
        pool_cost_per_hour,
        per_stage,
        placement: placement.clone(),
        warnings,
    })
}

/// Union of node ids across all graphs of an IR: the deployable stages.
pub fn stage_ids(ir: &RagIr) -> BTreeSet<String> {
    let mut ids = BTreeSet::new();
    for wg in &ir.graphs {
        for n in &wg.graph.nodes {
            ids.insert(n.id().to_string());
        }
    }
    ids
}

/// Worst-case resident bytes per stage at a given batch size, used for
/// capacity feasibility checks before any placement exists. Matches the
/// footprints the estimator charges, including derived index structures.
pub fn stage_resident_bytes(
    ir: &RagIr,
    batch: u32,
    constants: &CostConstants,
    recall_table: Option<&RecallTable>,
) -> Result<BTreeMap<String, f64>, CostError> {
    let mut resident: BTreeMap<String, f64> = BTreeMap::new();
    for wg in &ir.graphs {
        for n in &wg.graph.nodes {
            let bytes = match n {
                Node::Model(m) => node::model_resident_bytes(m, u64::from(batch), constants),
                Node::Retrieval(r) => node::retrieval_resident_bytes(r, constants, recall_table)?,
            };
            let entry = resident.entry(n.id().to_string()).or_insert(0.0);
            *entry = entry.max(bytes);
        }
    }
    Ok(resident)
}
