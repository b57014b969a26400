//! The exploration loop: propose a configuration, score its quality,
//! compile and price it, update the Pareto frontier, repeat under an
//! iteration budget.

pub mod pareto;

pub use pareto::{
    dominates, dominates_directed, hypervolume, Direction, EvaluatedPoint, ObjectiveError,
    ObjectiveSpec, ParetoSet, PerfMetric, PerfObjective,
};

use crate::cost::{map_resources, PerfEstimate, PlanOptions};
use crate::hw::HardwarePool;
use crate::quality::{eval_table, QualityError, QualityScore, QualityTable, SyntheticSurface};
use crate::space::{
    assign_knob, copy_knob, knob_class, lower, validate_profile, validate_space, AlgoConfig,
    ConfigSpace, CostClass, DocParseError, WorkloadProfile, KNOBS,
};
use crate::violation::ValidationReport;
use num_bigint::{BigUint, RandBigInt};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub const PARETO_SCHEMA: &str = "rag-pareto/1";

/// Knobs of the evolutionary candidate generator. `mutation_p` is the base
/// per-knob mutation probability; the lambda factors scale it by the price
/// class of the proposed change, biasing the search toward alterations
/// that would be cheap to apply to a deployed pipeline. The default base
/// rate is deliberately high: with budgets of a few dozen evaluations the
/// offspring must keep enough spread to cover the frontier, and the price
/// scaling alone preserves the inheritance of expensive knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolutionParams {
    pub mutation_p: f64,
    pub lambda_rebuild: f64,
    pub lambda_medium: f64,
    pub lambda_cheap: f64,
    pub retries: u32,
}

impl Default for EvolutionParams {
    fn default() -> Self {
        EvolutionParams {
            mutation_p: 0.7,
            lambda_rebuild: 0.2,
            lambda_medium: 0.5,
            lambda_cheap: 1.0,
            retries: 16,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Enumeration order walk.
    Grid,
    /// Uniform over unexplored configs.
    Random,
    /// NSGA-style tournament selection with change-cost-aware mutation.
    Evolutionary(EvolutionParams),
    /// Declared interface slot; not implemented.
    ReinforcementLearning,
}

/// Where quality scores come from during exploration.
pub enum QualityEvaluator<'a> {
    Table(&'a QualityTable),
    Synthetic(SyntheticSurface),
}

impl QualityEvaluator<'_> {
    fn eval(&self, a: &AlgoConfig) -> Result<QualityScore, QualityError> {
        match self {
            QualityEvaluator::Table(t) => eval_table(t, a),
            QualityEvaluator::Synthetic(s) => Ok(s.eval(a)),
        }
    }
}

/// One loop iteration as recorded for reproducibility. Failed evaluations
/// (quality miss, lowering or placement error) keep their slot with the
/// error text and no metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceEntry {
    pub iteration: u64,
    pub config_key: String,
    pub config: AlgoConfig,
    pub quality: Option<QualityScore>,
    pub perf: Option<PerfEstimate>,
    pub objectives: Option<Vec<f64>>,
    pub on_frontier: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploreOutcome {
    pub frontier: ParetoSet,
    pub trace: Vec<TraceEntry>,
}

/// The persisted exploration result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoDocument {
    pub schema: String,
    pub objectives: ObjectiveSpec,
    pub frontier: ParetoSet,
    pub trace: Vec<TraceEntry>,
}

impl ParetoDocument {
    pub fn new(objectives: ObjectiveSpec, outcome: ExploreOutcome) -> ParetoDocument {
        ParetoDocument {
            schema: PARETO_SCHEMA.to_string(),
            objectives,
            frontier: outcome.frontier,
            trace: outcome.trace,
        }
    }
}

pub fn load_pareto(doc: &str) -> Result<ParetoDocument, DocParseError> {
    let parsed: ParetoDocument = serde_json::from_str(doc)?;
    if parsed.schema != PARETO_SCHEMA {
        return Err(DocParseError::SchemaVersion {
            found: parsed.schema,
            expected: PARETO_SCHEMA,
        });
    }
    Ok(parsed)
}

#[derive(Debug, Error)]
pub enum ExploreError {
    #[error("iteration budget must be at least 1")]
    ZeroBudget,
    #[error("configuration space failed validation:\n{0}")]
    InvalidSpace(ValidationReport),
    #[error("workload profile failed validation:\n{0}")]
    InvalidProfile(ValidationReport),
    #[error(transparent)]
    Objectives(#[from] ObjectiveError),
    #[error("unsupported strategy {0:?}")]
    UnsupportedStrategy(String),
}

/// Uniform draw over the unexplored remainder of the space by rank
/// selection over the complement of the explored index set. Callers
/// guarantee at least one config remains.
fn random_unexplored(
    space: &ConfigSpace,
    size: &BigUint,
    explored: &BTreeSet<BigUint>,
    rng: &mut ChaCha8Rng,
) -> AlgoConfig {
    let remaining = size - BigUint::from(explored.len());
    let mut target = rng.gen_biguint_below(&remaining);
    for e in explored {
        if *e <= target {
            target += 1u32;
        } else {
            break;
        }
    }
    space
        .config_at(&target)
        .expect("rank stays below the space size")
}

/// Non-domination depth per point: 0 for the frontier of the whole set,
/// 1 for the frontier of the rest, and so on.
fn non_domination_ranks(history: &[EvaluatedPoint], dirs: &[Direction]) -> Vec<u32> {
    let n = history.len();
    let mut rank = vec![u32::MAX; n];
    let mut assigned = 0;
    let mut layer = 0u32;
    while assigned < n {
        let members: Vec<usize> = (0..n)
            .filter(|&i| rank[i] == u32::MAX)
            .filter(|&i| {
                !(0..n).any(|j| {
                    j != i
                        && rank[j] == u32::MAX
                        && dominates_directed(&history[j].objectives, &history[i].objectives, dirs)
                })
            })
            .collect();
        for &i in &members {
            rank[i] = layer;
        }
        assigned += members.len();
        layer += 1;
    }
    rank
}

/// NSGA-II crowding distance, computed within each rank layer. Boundary
/// points get infinite distance so extremes survive selection.
fn crowding_distances(history: &[EvaluatedPoint], ranks: &[u32], arity: usize) -> Vec<f64> {
    let n = history.len();
    let mut crowd = vec![0.0f64; n];
    let max_rank = ranks.iter().copied().max().unwrap_or(0);
    for layer in 0..=max_rank {
        let members: Vec<usize> = (0..n).filter(|&i| ranks[i] == layer).collect();
        if members.len() <= 2 {
            for &i in &members {
                crowd[i] = f64::INFINITY;
            }
            continue;
        }
        for d in 0..arity {
            let mut sorted = members.clone();
            sorted.sort_by(|&a, &b| {
                history[a].objectives[d]
                    .total_cmp(&history[b].objectives[d])
                    .then(a.cmp(&b))
            });
            let lo = history[sorted[0]].objectives[d];
            let hi = history[*sorted.last().expect("non-empty layer")].objectives[d];
            crowd[sorted[0]] = f64::INFINITY;
            crowd[*sorted.last().expect("non-empty layer")] = f64::INFINITY;
            if hi == lo {
                continue;
            }
            for w in 1..sorted.len() - 1 {
                crowd[sorted[w]] += (history[sorted[w + 1]].objectives[d]
                    - history[sorted[w - 1]].objectives[d])
                    / (hi - lo);
            }
        }
    }
    crowd
}

/// Binary tournament over history indices: lower rank wins, then larger
/// crowding distance, then the lower index.
fn tournament(rng: &mut ChaCha8Rng, ranks: &[u32], crowd: &[f64]) -> usize {
    let a = rng.gen_range(0..ranks.len());
    let b = rng.gen_range(0..ranks.len());
    if ranks[a] != ranks[b] {
        if ranks[a] < ranks[b] {
            a
        } else {
            b
        }
    } else if crowd[a] != crowd[b] {
        if crowd[a] > crowd[b] {
            a
        } else {
            b
        }
    } else {
        a.min(b)
    }
}

/// Uniform crossover followed by change-cost-scaled mutation.
///
/// The generator stream is consumed in a fixed order: one crossover coin
/// per knob, then per knob with a multi-valued domain one candidate draw
/// and one mutation coin whose probability is `mutation_p` scaled by the
/// candidate change's price class. A rebuild-class lambda of zero
/// therefore makes rebuild-class deviations impossible while leaving the
/// draw sequence intact.
pub fn evolve_offspring(
    p1: &AlgoConfig,
    p2: &AlgoConfig,
    space: &ConfigSpace,
    params: &EvolutionParams,
    rng: &mut ChaCha8Rng,
) -> AlgoConfig {
    let mut child = p1.clone();
    for knob in KNOBS {
        if rng.gen_bool(0.5) {
            copy_knob(&mut child, p2, knob);
        }
    }
    let sizes = space.domain_sizes();
    for (knob, len) in KNOBS.into_iter().zip(sizes) {
        if len <= 1 {
            continue;
        }
        let idx = rng.gen_range(0..len);
        let mut candidate = child.clone();
        assign_knob(&mut candidate, space, knob, idx);
        let class = knob_class(knob, &child, &candidate);
        let lambda = match class {
            Some(CostClass::Rebuild) => params.lambda_rebuild,
            Some(CostClass::Medium) => params.lambda_medium,
            // A candidate equal to the current value mutates to itself;
            // the coin is still drawn to keep the stream order fixed.
            Some(CostClass::Cheap) | None => params.lambda_cheap,
        };
        let p = (params.mutation_p * lambda).clamp(0.0, 1.0);
        if rng.gen_bool(p) && class.is_some() {
            copy_knob(&mut child, &candidate, knob);
        }
    }
    child
}

fn evaluate_one(
    config: &AlgoConfig,
    quality: &QualityEvaluator,
    pool: &HardwarePool,
    profile: &WorkloadProfile,
    plan: &PlanOptions,
) -> Result<(QualityScore, PerfEstimate), String> {
    let score = quality.eval(config).map_err(|e| e.to_string())?;
    let ir = lower(config, profile).map_err(|e| e.to_string())?;
    let outcome = map_resources(&ir, pool, plan).map_err(|e| e.to_string())?;
    Ok((score, outcome.estimate))
}

/// Runs the exploration loop for at most `budget` evaluations and returns
/// the frontier with the full per-iteration trace.
///
/// Proposals that were already evaluated are never re-evaluated (cache on
/// the canonical config key). Failed evaluations consume their iteration,
/// carry the error in the trace and are logged as warnings. The loop stops
/// early when the space is exhausted.
#[allow(clippy::too_many_arguments)]
pub fn explore(
    space: &ConfigSpace,
    budget: u64,
    strategy: &Strategy,
    quality: &QualityEvaluator,
    pool: &HardwarePool,
    profile: &WorkloadProfile,
    objectives: &ObjectiveSpec,
    plan: &PlanOptions,
    seed: u64,
) -> Result<ExploreOutcome, ExploreError> {
    if budget == 0 {
        return Err(ExploreError::ZeroBudget);
    }
    objectives.validate()?;
    let report = validate_space(space);
    if !report.is_ok() {
        return Err(ExploreError::InvalidSpace(report));
    }
    let report = validate_profile(profile);
    if !report.is_ok() {
        return Err(ExploreError::InvalidProfile(report));
    }
    if matches!(strategy, Strategy::ReinforcementLearning) {
        return Err(ExploreError::UnsupportedStrategy("rl".to_string()));
    }

    let size = space.size();
    let dirs = objectives.directions();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut explored_keys: BTreeSet<String> = BTreeSet::new();
    let mut explored_indices: BTreeSet<BigUint> = BTreeSet::new();
    let mut history: Vec<EvaluatedPoint> = Vec::new();
    let mut frontier = ParetoSet::default();
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut grid_cursor = BigUint::from(0u32);

    for iteration in 0..budget {
        if BigUint::from(explored_indices.len()) == size {
            break;
        }
        let config = match strategy {
            Strategy::Grid => {
                let mut found = None;
                while grid_cursor < size {
                    if !explored_indices.contains(&grid_cursor) {
                        found = space.config_at(&grid_cursor);
                        grid_cursor += 1u32;
                        break;
                    }
                    grid_cursor += 1u32;
                }
                match found {
                    Some(c) => c,
                    None => break,
                }
            }
            Strategy::Random => random_unexplored(space, &size, &explored_indices, &mut rng),
            Strategy::Evolutionary(params) => {
                if history.is_empty() {
                    random_unexplored(space, &size, &explored_indices, &mut rng)
                } else {
                    let ranks = non_domination_ranks(&history, &dirs);
                    let crowd = crowding_distances(&history, &ranks, objectives.arity());
                    let p1 = tournament(&mut rng, &ranks, &crowd);
                    let p2 = tournament(&mut rng, &ranks, &crowd);
                    let mut chosen = None;
                    for _ in 0..=params.retries {
                        let off = evolve_offspring(
                            &history[p1].config,
                            &history[p2].config,
                            space,
                            params,
                            &mut rng,
                        );
                        if !explored_keys.contains(&off.config_key()) {
                            chosen = Some(off);
                            break;
                        }
                    }
                    chosen.unwrap_or_else(|| {
                        random_unexplored(space, &size, &explored_indices, &mut rng)
                    })
                }
            }
            Strategy::ReinforcementLearning => unreachable!("rejected before the loop"),
        };

        let config_key = config.config_key();
        explored_keys.insert(config_key.clone());
        if let Some(ix) = space.index_of(&config) {
            explored_indices.insert(ix);
        }

        let mut entry = TraceEntry {
            iteration,
            config_key: config_key.clone(),
            config: config.clone(),
            quality: None,
            perf: None,
            objectives: None,
            on_frontier: false,
            error: None,
        };
        match evaluate_one(&config, quality, pool, profile, plan) {
            Ok((score, est)) => {
                let objs = objectives.extract(score.value, &est);
                entry.quality = Some(score);
                entry.perf = Some(est.clone());
                entry.objectives = Some(objs.clone());
                let point = EvaluatedPoint {
                    config_key,
                    config,
                    quality: score,
                    perf: est,
                    objectives: objs,
                };
                history.push(point.clone());
                entry.on_frontier = frontier.update(point, objectives)?;
            }
            Err(message) => {
                log::warn!("iteration {iteration}: config {config_key} skipped: {message}");
                entry.error = Some(message);
            }
        }
        trace.push(entry);
    }

    Ok(ExploreOutcome { frontier, trace })
}
