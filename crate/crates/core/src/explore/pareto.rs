//! Dominance, frontier maintenance and hypervolume.

use crate::cost::PerfEstimate;
use crate::quality::QualityScore;
use crate::space::AlgoConfig;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PerfMetric {
    Ttft,
    Tpot,
    Rps,
    ReqPerDollar,
}

impl PerfMetric {
    pub fn extract(&self, p: &PerfEstimate) -> f64 {
        match self {
            PerfMetric::Ttft => p.ttft_s,
            PerfMetric::Tpot => p.tpot_s,
            PerfMetric::Rps => p.rps,
            PerfMetric::ReqPerDollar => p.req_per_dollar,
        }
    }

    /// The direction that makes the metric better: latencies shrink,
    /// rates grow.
    pub fn natural_direction(&self) -> Direction {
        match self {
            PerfMetric::Ttft | PerfMetric::Tpot => Direction::Minimize,
            PerfMetric::Rps | PerfMetric::ReqPerDollar => Direction::Maximize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Maximize,
    Minimize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerfObjective {
    pub metric: PerfMetric,
    pub direction: Direction,
}

/// The objective vector layout: quality first (always maximized), then the
/// declared performance metrics. Defaults to the two-dimensional quality
/// versus requests-per-dollar trade-off.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub perf: Vec<PerfObjective>,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        ObjectiveSpec {
            perf: vec![PerfObjective {
                metric: PerfMetric::ReqPerDollar,
                direction: Direction::Maximize,
            }],
        }
    }
}

impl ObjectiveSpec {
    pub fn arity(&self) -> usize {
        1 + self.perf.len()
    }

    pub fn directions(&self) -> Vec<Direction> {
        let mut dirs = Vec::with_capacity(self.arity());
        dirs.push(Direction::Maximize);
        dirs.extend(self.perf.iter().map(|o| o.direction));
        dirs
    }

    pub fn extract(&self, quality: f64, perf: &PerfEstimate) -> Vec<f64> {
        let mut values = Vec::with_capacity(self.arity());
        values.push(quality);
        values.extend(self.perf.iter().map(|o| o.metric.extract(perf)));
        values
    }

    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.perf.is_empty() {
            return Err(ObjectiveError::NoPerfObjective);
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ObjectiveError {
    #[error("objective vectors have arities {a} and {b}, expected {expected}")]
    ArityMismatch { a: usize, b: usize, expected: usize },
    #[error("at least one performance objective is required besides quality")]
    NoPerfObjective,
    #[error("hypervolume supports 2 or 3 objectives, got {0}")]
    UnsupportedArity(usize),
    #[error("reference point has arity {reference}, objectives have {arity}")]
    ReferenceArity { reference: usize, arity: usize },
}

/// Strict Pareto dominance under the spec's directions: at least as good
/// everywhere and strictly better somewhere.
pub fn dominates(a: &[f64], b: &[f64], spec: &ObjectiveSpec) -> Result<bool, ObjectiveError> {
    if a.len() != spec.arity() || b.len() != spec.arity() {
        return Err(ObjectiveError::ArityMismatch {
            a: a.len(),
            b: b.len(),
            expected: spec.arity(),
        });
    }
    Ok(dominates_directed(a, b, &spec.directions()))
}

/// Dominance with an explicit per-coordinate direction vector; callers
/// guarantee matching lengths.
pub fn dominates_directed(a: &[f64], b: &[f64], directions: &[Direction]) -> bool {
    let mut strictly_better = false;
    for ((&x, &y), dir) in a.iter().zip(b).zip(directions) {
        let (better, worse) = match dir {
            Direction::Maximize => (x > y, x < y),
            Direction::Minimize => (x < y, x > y),
        };
        if worse {
            return false;
        }
        if better {
            strictly_better = true;
        }
    }
    strictly_better
}

/// One explored configuration with everything needed to reproduce its spot
/// on the frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluatedPoint {
    pub config_key: String,
    pub config: AlgoConfig,
    pub quality: QualityScore,
    pub perf: PerfEstimate,
    pub objectives: Vec<f64>,
}

/// A mutually non-dominated set, insertion-ordered among incomparable
/// points.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoSet {
    pub points: Vec<EvaluatedPoint>,
}

impl ParetoSet {
    /// Inserts a point unless a member dominates it, evicting members the
    /// point dominates. Returns whether the point joined the set.
    pub fn update(
        &mut self,
        point: EvaluatedPoint,
        spec: &ObjectiveSpec,
    ) -> Result<bool, ObjectiveError> {
        for member in &self.points {
            if dominates(&member.objectives, &point.objectives, spec)? {
                return Ok(false);
            }
        }
        let dirs = spec.directions();
        self.points
            .retain(|m| !dominates_directed(&point.objectives, &m.objectives, &dirs));
        self.points.push(point);
        Ok(true)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Verifies mutual non-dominance; test support.
    pub fn is_consistent(&self, spec: &ObjectiveSpec) -> bool {
        let dirs = spec.directions();
        self.points.iter().enumerate().all(|(i, a)| {
            self.points
                .iter()
                .enumerate()
                .all(|(j, b)| i == j || !dominates_directed(&a.objectives, &b.objectives, &dirs))
        })
    }
}

/// Direction-adjusted extents over the reference point; None when the point
/// fails to dominate the reference (its box is empty).
fn extents(objectives: &[f64], reference: &[f64], dirs: &[Direction]) -> Option<Vec<f64>> {
    let mut out = Vec::with_capacity(objectives.len());
    for ((&v, &r), dir) in objectives.iter().zip(reference).zip(dirs) {
        let extent = match dir {
            Direction::Maximize => v - r,
            Direction::Minimize => r - v,
        };
        if extent <= 0.0 {
            return None;
        }
        out.push(extent);
    }
    Some(out)
}

/// Area of the union of origin-anchored rectangles, by a descending-x
/// sweep over the 2D points.
fn union_area_2d(points: &mut [[f64; 2]]) -> f64 {
    points.sort_by(|a, b| b[0].total_cmp(&a[0]).then(b[1].total_cmp(&a[1])));
    let mut area = 0.0;
    let mut max_y = 0.0f64;
    for p in points.iter() {
        if p[1] > max_y {
            area += p[0] * (p[1] - max_y);
            max_y = p[1];
        }
    }
    area
}

/// Volume of the union of origin-anchored boxes: slice along z, sweeping
/// the accumulated xy footprint per slab.
fn union_volume_3d(points: &mut [[f64; 3]]) -> f64 {
    points.sort_by(|a, b| b[2].total_cmp(&a[2]));
    let mut volume = 0.0;
    let mut footprint: Vec<[f64; 2]> = Vec::new();
    let mut i = 0;
    while i < points.len() {
        let z_top = points[i][2];
        while i < points.len() && points[i][2] == z_top {
            footprint.push([points[i][0], points[i][1]]);
            i += 1;
        }
        let z_bottom = if i < points.len() { points[i][2] } else { 0.0 };
        let mut slab = footprint.clone();
        volume += union_area_2d(&mut slab) * (z_top - z_bottom);
    }
    volume
}

/// Dominated hypervolume of a frontier with respect to a reference point,
/// exact for 2 and 3 objectives. Points that do not dominate the reference
/// contribute nothing.
pub fn hypervolume(
    set: &ParetoSet,
    reference: &[f64],
    spec: &ObjectiveSpec,
) -> Result<f64, ObjectiveError> {
    let arity = spec.arity();
    if reference.len() != arity {
        return Err(ObjectiveError::ReferenceArity {
            reference: reference.len(),
            arity,
        });
    }
    if !(2..=3).contains(&arity) {
        return Err(ObjectiveError::UnsupportedArity(arity));
    }
    let dirs = spec.directions();
    for p in &set.points {
        if p.objectives.len() != arity {
            return Err(ObjectiveError::ArityMismatch {
                a: p.objectives.len(),
                b: arity,
                expected: arity,
            });
        }
    }
    if arity == 2 {
        let mut pts: Vec<[f64; 2]> = set
            .points
            .iter()
            .filter_map(|p| extents(&p.objectives, reference, &dirs))
            .map(|e| [e[0], e[1]])
            .collect();
        Ok(union_area_2d(&mut pts))
    } else {
        let mut pts: Vec<[f64; 3]> = set
            .points
            .iter()
            .filter_map(|p| extents(&p.objectives, reference, &dirs))
            .map(|e| [e[0], e[1], e[2]])
            .collect();
        Ok(union_volume_3d(&mut pts))
    }
}
