//! Placement search: which device runs each stage, with how many units,
//! at what batch size.

use super::node::{AnalyticalEstimator, NodeCostEstimator};
use super::{
    estimate, stage_resident_bytes, CostError, DeviceAssignment, EstimateError, EstimateOptions,
    PerfEstimate, Placement,
};
use crate::hw::HardwarePool;
use crate::ir::{Node, RagIr};
use std::collections::BTreeMap;
use thiserror::Error;

/// How [`map_resources`] explores the candidate space. `Auto` follows the
/// option-count threshold; the explicit modes exist for tests and for
/// reproducing one search strategy regardless of instance size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SearchMode {
    #[default]
    Auto,
    Exhaustive,
    Greedy,
}

/// Search knobs. Batch sizes are the powers of two up to `batch_cap`; the
/// search is exhaustive while the discrete option count stays at or below
/// `exhaustive_limit`, greedy beyond it.
pub struct PlanOptions<'a> {
    pub ttft_slo: Option<f64>,
    pub batch_cap: u32,
    pub exhaustive_limit: u64,
    pub search: SearchMode,
    pub estimate: EstimateOptions<'a>,
}

impl Default for PlanOptions<'_> {
    fn default() -> Self {
        PlanOptions {
            ttft_slo: None,
            batch_cap: 64,
            exhaustive_limit: 100_000,
            search: SearchMode::Auto,
            estimate: EstimateOptions::default(),
        }
    }
}

/// A chosen placement with its predicted metrics. `slo_met` is false when
/// no candidate satisfied the TTFT target and the result is the best-effort
/// minimum-TTFT placement instead.
#[derive(Debug, Clone)]
pub struct PlaceOutcome {
    pub placement: Placement,
    pub estimate: PerfEstimate,
    pub slo_met: bool,
}

#[derive(Debug, Error)]
pub enum PlaceError {
    #[error("no device can hold these nodes even alone at batch 1: {0:?}")]
    Oversized(Vec<String>),
    #[error("no feasible placement exists on this pool")]
    NoFeasible,
    #[error(transparent)]
    Cost(#[from] CostError),
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

struct Candidate {
    placement: Placement,
    estimate: PerfEstimate,
    slo_met: bool,
}

/// Lexicographic objective: meet the SLO first, then maximize RPS; among
/// placements that all miss the SLO, minimize TTFT. Strict comparison, so
/// the first candidate found in enumeration order wins ties.
fn better(new: &Candidate, best: &Candidate) -> bool {
    if new.slo_met != best.slo_met {
        return new.slo_met;
    }
    if new.slo_met {
        new.estimate.rps > best.estimate.rps
    } else {
        new.estimate.ttft_s < best.estimate.ttft_s
    }
}

fn power_of_two_batches(batch_cap: u32) -> Vec<u32> {
    let cap = batch_cap.max(1);
    let mut batches = Vec::new();
    let mut b = 1u32;
    while b <= cap {
        batches.push(b);
        match b.checked_mul(2) {
            Some(next) => b = next,
            None => break,
        }
    }
    batches
}

/// Evaluates one placement, treating resource overflow as "candidate does
/// not exist" and anything else as a real failure.
fn try_candidate(
    ir: &RagIr,
    pool: &HardwarePool,
    placement: Placement,
    opts: &PlanOptions,
) -> Result<Option<Candidate>, PlaceError> {
    match estimate(ir, pool, &placement, &opts.estimate) {
        Ok(est) => {
            let slo_met = opts.ttft_slo.is_none_or(|slo| est.ttft_s <= slo);
            Ok(Some(Candidate {
                placement,
                estimate: est,
                slo_met,
            }))
        }
        Err(EstimateError::CapacityExceeded { .. }) | Err(EstimateError::UnitsExceeded { .. }) => {
            Ok(None)
        }
        Err(e) => Err(PlaceError::Estimate(e)),
    }
}

/// Searches device assignments, unit counts and batch sizes for the
/// placement maximizing RPS subject to an optional TTFT SLO.
///
/// Enumeration order (batch ascending; stages in node-id order, each
/// cycling devices by id then units ascending) pins which candidate wins
/// ties, so results are reproducible across runs and machines.
pub fn map_resources(
    ir: &RagIr,
    pool: &HardwarePool,
    opts: &PlanOptions,
) -> Result<PlaceOutcome, PlaceError> {
    let stages: Vec<String> = super::stage_ids(ir).into_iter().collect();
    let mut devices: Vec<&crate::hw::Device> = pool.devices.iter().collect();
    devices.sort_by(|a, b| a.id.cmp(&b.id));

    // A node no device can hold alone is hopeless at any batch size;
    // report all of them at once.
    let resident_floor =
        stage_resident_bytes(ir, 1, &opts.estimate.constants, opts.estimate.recall_table)?;
    let oversized: Vec<String> = stages
        .iter()
        .filter(|s| {
            let need = resident_floor[*s];
            !devices
                .iter()
                .any(|d| f64::from(d.count) * d.mem_capacity >= need)
        })
        .cloned()
        .collect();
    if !oversized.is_empty() {
        return Err(PlaceError::Oversized(oversized));
    }

    let batches = power_of_two_batches(opts.batch_cap);
    let per_stage_options: u64 = devices.iter().map(|d| u64::from(d.count)).sum();
    let mut total_options: u64 = batches.len() as u64;
    for _ in &stages {
        total_options = total_options.saturating_mul(per_stage_options);
    }

    let exhaustive = match opts.search {
        SearchMode::Exhaustive => true,
        SearchMode::Greedy => false,
        SearchMode::Auto => total_options <= opts.exhaustive_limit,
    };

    let best = if exhaustive {
        search_exhaustive(ir, pool, &stages, &devices, &batches, opts)?
    } else {
        search_greedy(ir, pool, &stages, &devices, &batches, opts)?
    };
    match best {
        Some(c) => Ok(PlaceOutcome {
            placement: c.placement,
            estimate: c.estimate,
            slo_met: c.slo_met,
        }),
        None => Err(PlaceError::NoFeasible),
    }
}

fn search_exhaustive(
    ir: &RagIr,
    pool: &HardwarePool,
    stages: &[String],
    devices: &[&crate::hw::Device],
    batches: &[u32],
    opts: &PlanOptions,
) -> Result<Option<Candidate>, PlaceError> {
    // (device, units) choices for one stage, in tie-break order.
    let mut choices: Vec<(usize, u32)> = Vec::new();
    for (di, d) in devices.iter().enumerate() {
        for units in 1..=d.count {
            choices.push((di, units));
        }
    }

    let mut best: Option<Candidate> = None;
    for &batch in batches {
        let mut cursor = vec![0usize; stages.len()];
        loop {
            let assignment: BTreeMap<String, DeviceAssignment> = stages
                .iter()
                .zip(&cursor)
                .map(|(s, &c)| {
                    let (di, units) = choices[c];
                    (
                        s.clone(),
                        DeviceAssignment {
                            device: devices[di].id.clone(),
                            units,
                        },
                    )
                })
                .collect();
            let placement = Placement {
                assignment,
                batch_size: batch,
            };
            if let Some(c) = try_candidate(ir, pool, placement, opts)? {
                if best.as_ref().is_none_or(|b| better(&c, b)) {
                    best = Some(c);
                }
            }

            // Odometer step, last stage fastest.
            let mut pos = stages.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                cursor[pos] += 1;
                if cursor[pos] < choices.len() {
                    break;
                }
                cursor[pos] = 0;
            }
            if cursor.iter().all(|&c| c == 0) {
                break;
            }
        }
        if stages.is_empty() {
            break;
        }
    }
    Ok(best)
}

struct GreedyTables {
    /// Mixture-weighted batch seconds per stage per device. Matches the
    /// per-stage expected time [`estimate`] reports, so a pipeline RPS
    /// computed from these tables equals the estimator's.
    time: Vec<Vec<f64>>,
    /// Peak bytes a stage keeps resident; independent of the device.
    resident: Vec<f64>,
}

fn greedy_tables(
    ir: &RagIr,
    stages: &[String],
    devices: &[&crate::hw::Device],
    batch: u32,
    opts: &PlanOptions,
) -> Result<GreedyTables, PlaceError> {
    let estimator = AnalyticalEstimator {
        constants: &opts.estimate.constants,
        calibration: opts.estimate.calibration,
        recall_table: opts.estimate.recall_table,
    };
    let index_of: BTreeMap<&str, usize> = stages
        .iter()
        .enumerate()
        .map(|(i, s)| (s.as_str(), i))
        .collect();
    let mut time = vec![vec![0.0f64; devices.len()]; stages.len()];
    let mut resident = vec![0.0f64; stages.len()];
    let batch_u = u64::from(batch);
    let batch_f = f64::from(batch);

    for wg in &ir.graphs {
        for n in &wg.graph.nodes {
            let si = index_of[n.id()];
            for (di, d) in devices.iter().enumerate() {
                let (batch_time, res) = match n {
                    Node::Model(m) => {
                        let pre = estimator.prefill(m, d, batch_u);
                        let dec = estimator.decode(m, d, batch_u);
                        (pre.time_s + dec.total_time_s, pre.mem_resident_bytes)
                    }
                    Node::Retrieval(r) => {
                        let rc = estimator.retrieval(r, d).map_err(PlaceError::Cost)?;
                        (batch_f * rc.total.time_s, rc.total.mem_resident_bytes)
                    }
                };
                time[si][di] += wg.weight * batch_time;
                resident[si] = resident[si].max(res);
            }
        }
    }
    Ok(GreedyTables { time, resident })
}

/// Vectors-to-enumerate ceiling below which the greedy search checks every
/// stage-to-device assignment instead of local moves. Unit counts are never
/// enumerated: they are solved exactly per vector by [`waterfill`].
const VECTOR_ENUM_BOUND: u64 = 1024;

/// Safety valve on unit-by-unit grants for pools with enormous unit counts.
const GRANT_CAP: u32 = 100_000;

/// Exact unit allocation for one stage-to-device vector. Every stage starts
/// at one unit; units are added first until each device's summed resident
/// bytes fit (mirroring the estimator's capacity audit), then granted to the
/// pipeline bottleneck until its device runs dry. Throughput is linear in
/// units and TTFT ignores them, so no other allocation for this vector beats
/// the returned one. None when the vector exceeds unit budgets or capacity.
fn waterfill(
    vector: &[usize],
    tables: &GreedyTables,
    devices: &[&crate::hw::Device],
    batch: u32,
) -> Option<(Vec<u32>, f64)> {
    let batch_f = f64::from(batch);
    let mut units = vec![1u32; vector.len()];
    let mut used = vec![0u32; devices.len()];
    for &di in vector {
        used[di] += 1;
    }
    if used.iter().zip(devices).any(|(&u, d)| u > d.count) {
        return None;
    }

    let throughput = |si: usize, u: u32| f64::from(u) * batch_f / tables.time[si][vector[si]];

    let mut grants = 0u32;
    for di in 0..devices.len() {
        let needed: f64 = (0..vector.len())
            .filter(|&si| vector[si] == di)
            .map(|si| tables.resident[si])
            .sum();
        while needed > f64::from(used[di]) * devices[di].mem_capacity {
            if used[di] >= devices[di].count || grants >= GRANT_CAP {
                return None;
            }
            // The extra unit must land somewhere; give it to the slowest of
            // this device's stages so it helps throughput too.
            let si = (0..vector.len())
                .filter(|&si| vector[si] == di)
                .min_by(|&a, &b| throughput(a, units[a]).total_cmp(&throughput(b, units[b])))?;
            units[si] += 1;
            used[di] += 1;
            grants += 1;
        }
    }

    while grants < GRANT_CAP {
        let mut bott = usize::MAX;
        let mut worst = f64::INFINITY;
        for (si, &u) in units.iter().enumerate() {
            let t = throughput(si, u);
            if t < worst {
                worst = t;
                bott = si;
            }
        }
        if bott == usize::MAX || used[vector[bott]] >= devices[vector[bott]].count {
            break;
        }
        units[bott] += 1;
        used[vector[bott]] += 1;
        grants += 1;
    }

    let rps = (0..vector.len())
        .map(|si| throughput(si, units[si]))
        .fold(f64::INFINITY, f64::min);
    Some((units, rps))
}

fn vector_placement(
    stages: &[String],
    devices: &[&crate::hw::Device],
    vector: &[usize],
    units: &[u32],
    batch: u32,
) -> Placement {
    let assignment: BTreeMap<String, DeviceAssignment> = stages
        .iter()
        .enumerate()
        .map(|(si, s)| {
            (
                s.clone(),
                DeviceAssignment {
                    device: devices[vector[si]].id.clone(),
                    units: units[si],
                },
            )
        })
        .collect();
    Placement {
        assignment,
        batch_size: batch,
    }
}

/// One batch size of the greedy search over stage-to-device vectors, each
/// scored with its exact per-vector unit allocation. Small vector spaces are
/// swept completely (so tiny instances recover the exhaustive optimum);
/// larger ones start from a throughput-greedy vector and move one stage at a
/// time to a fixed point.
fn greedy_for_batch(
    ir: &RagIr,
    pool: &HardwarePool,
    stages: &[String],
    devices: &[&crate::hw::Device],
    batch: u32,
    opts: &PlanOptions,
) -> Result<Option<Candidate>, PlaceError> {
    let tables = greedy_tables(ir, stages, devices, batch, opts)?;
    let n_vectors = (devices.len() as u64)
        .checked_pow(u32::try_from(stages.len()).unwrap_or(u32::MAX))
        .unwrap_or(u64::MAX);

    if n_vectors <= VECTOR_ENUM_BOUND {
        // With a TTFT target the objective needs real estimates (TTFT is not
        // in the tables); without one, table RPS decides and only the winner
        // is re-estimated.
        let mut best: Option<Candidate> = None;
        let mut best_internal: Option<(Vec<usize>, Vec<u32>, f64)> = None;
        let mut vector = vec![0usize; stages.len()];
        loop {
            if let Some((units, rps)) = waterfill(&vector, &tables, devices, batch) {
                if opts.ttft_slo.is_some() {
                    let placement = vector_placement(stages, devices, &vector, &units, batch);
                    if let Some(c) = try_candidate(ir, pool, placement, opts)? {
                        if best.as_ref().is_none_or(|b| better(&c, b)) {
                            best = Some(c);
                        }
                    }
                } else if best_internal.as_ref().is_none_or(|(_, _, b)| rps > *b) {
                    best_internal = Some((vector.clone(), units, rps));
                }
            }

            // Odometer step, last stage fastest.
            let mut pos = vector.len();
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                vector[pos] += 1;
                if vector[pos] < devices.len() {
                    break;
                }
                vector[pos] = 0;
            }
            if vector.iter().all(|&d| d == 0) {
                break;
            }
        }
        if opts.ttft_slo.is_some() {
            return Ok(best);
        }
        let Some((vector, units, _)) = best_internal else {
            return Ok(None);
        };
        let placement = vector_placement(stages, devices, &vector, &units, batch);
        return try_candidate(ir, pool, placement, opts);
    }

    // Construction: stages in id order each take the device giving them the
    // best one-unit throughput from the budget left over.
    let mut remaining: Vec<u32> = devices.iter().map(|d| d.count).collect();
    let mut vector = Vec::with_capacity(stages.len());
    for si in 0..stages.len() {
        let pick = (0..devices.len())
            .filter(|&di| remaining[di] > 0)
            .max_by(|&a, &b| {
                (f64::from(batch) / tables.time[si][a])
                    .total_cmp(&(f64::from(batch) / tables.time[si][b]))
            });
        let Some(di) = pick else { return Ok(None) };
        remaining[di] -= 1;
        vector.push(di);
    }

    let Some((mut units, mut current)) = waterfill(&vector, &tables, devices, batch) else {
        return Ok(None);
    };

    // Local search: move one stage to another device whenever the refilled
    // pipeline RPS strictly improves; fixed order keeps this deterministic.
    for _ in 0..64 {
        let mut improved = false;
        for si in 0..vector.len() {
            let old = vector[si];
            let mut best_move: Option<(usize, Vec<u32>, f64)> = None;
            for di in 0..devices.len() {
                if di == old {
                    continue;
                }
                vector[si] = di;
                if let Some((u, rps)) = waterfill(&vector, &tables, devices, batch) {
                    if rps > current && best_move.as_ref().is_none_or(|(_, _, b)| rps > *b) {
                        best_move = Some((di, u, rps));
                    }
                }
            }
            vector[si] = old;
            if let Some((di, u, rps)) = best_move {
                vector[si] = di;
                units = u;
                current = rps;
                improved = true;
            }
        }
        if !improved {
            break;
        }
    }

    let placement = vector_placement(stages, devices, &vector, &units, batch);
    try_candidate(ir, pool, placement, opts)
}

fn search_greedy(
    ir: &RagIr,
    pool: &HardwarePool,
    stages: &[String],
    devices: &[&crate::hw::Device],
    batches: &[u32],
    opts: &PlanOptions,
) -> Result<Option<Candidate>, PlaceError> {
    let mut best: Option<Candidate> = None;
    for &batch in batches {
        if let Some(c) = greedy_for_batch(ir, pool, stages, devices, batch, opts)? {
            if best.as_ref().is_none_or(|b| better(&c, b)) {
                best = Some(c);
            }
        }
    }
    Ok(best)
}
