//! Workload IR: a weighted mixture of per-request dataflow graphs.
//!
//! One document describes how a pipeline serves one request population.
//! Each [`RequestGraph`] is a DAG whose nodes are model invocations or
//! vector-index probes and whose edges carry payload sizes; the mixture
//! weights give the probability a request follows each graph. Documents
//! round-trip through the canonical JSON form in [`crate::canon`].

use crate::canon::to_canonical_json;
use crate::violation::{ValidationReport, ViolationCode};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, HashSet};
use thiserror::Error;

/// Schema tag required at the top of every IR document.
pub const IR_SCHEMA: &str = "rag-ir/1";

/// Mixture weights must sum to 1 within this tolerance.
pub const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

/// Path enumeration aborts past this many paths; request DAGs are small and
/// anything larger indicates a malformed document.
const MAX_PATHS: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RagIr {
    pub schema: String,
    pub name: String,
    pub graphs: Vec<WeightedGraph>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedGraph {
    /// Probability a request follows this graph, in [0, 1].
    pub weight: f64,
    pub graph: RequestGraph,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RequestGraph {
    pub name: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub entry: String,
    pub exits: BTreeSet<String>,
}

/// A dataflow node. The `kind` tag selects the variant; unknown fields in
/// either variant are deserialization errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Node {
    #[serde(rename = "model")]
    Model(ModelNode),
    #[serde(rename = "retrieval")]
    Retrieval(RetrievalNode),
}

impl Node {
    pub fn id(&self) -> &str {
        match self {
            Node::Model(m) => &m.id,
            Node::Retrieval(r) => &r.id,
        }
    }

    pub fn as_model(&self) -> Option<&ModelNode> {
        match self {
            Node::Model(m) => Some(m),
            Node::Retrieval(_) => None,
        }
    }

    pub fn as_retrieval(&self) -> Option<&RetrievalNode> {
        match self {
            Node::Retrieval(r) => Some(r),
            Node::Model(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelRole {
    #[serde(rename = "rewriter")]
    Rewriter,
    #[serde(rename = "reranker")]
    Reranker,
    #[serde(rename = "main-llm")]
    MainLlm,
    #[serde(rename = "encoder")]
    Encoder,
}

/// Transformer shape; when absent the cost model drops the quadratic
/// attention term and all KV-cache terms for the node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArch {
    pub n_layers: u64,
    pub d_model: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelNode {
    pub id: String,
    pub role: ModelRole,
    /// Parameter count.
    pub params: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ModelArch>,
    /// Prompt length in tokens.
    pub input_len: u64,
    /// Generated length in tokens; 0 for models that only encode.
    pub output_len: u64,
    /// True when part of the prompt arrives with a precomputed KV cache.
    #[serde(default)]
    pub kv_cache_reuse: bool,
    /// Prompt tokens covered by the reused cache; requires `kv_cache_reuse`.
    #[serde(default)]
    pub reused_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalNode {
    pub id: String,
    /// Vectors in the index.
    pub num_rows: u64,
    /// Vector dimensionality.
    pub dim: u64,
    /// Results returned per probe.
    pub top_k: u64,
    /// Required recall in (0, 1]; drives probe sizing when no explicit
    /// index configuration is given.
    pub quality_req: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index_config: Option<IndexConfig>,
    /// Probes overlapped with decoding rather than stalling it.
    #[serde(default)]
    pub speculative: bool,
    /// Probes issued per request; 1 for retrieve-once pipelines.
    #[serde(default = "default_iterations")]
    pub iterations: u64,
}

fn default_iterations() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IndexConfig {
    Flat,
    Ivf {
        nlist: u64,
        nprobe: u64,
    },
    /// Cost comes from a measured table instead of the analytical model.
    Calibrated {
        table_ref: String,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Edge {
    pub from: String,
    pub to: String,
    /// Payload transferred, in bytes.
    pub bytes: u64,
}

#[derive(Debug, Error)]
pub enum IrParseError {
    #[error("IR document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {found:?}, expected {IR_SCHEMA:?}")]
    SchemaVersion { found: String },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("graph {graph:?} contains a cycle through {node:?}")]
    Cycle { graph: String, node: String },
    #[error("graph {graph:?} references unknown node {node:?}")]
    UnknownNode { graph: String, node: String },
    #[error("graph {graph:?} has more than {MAX_PATHS} paths")]
    TooManyPaths { graph: String },
}

/// Canonical text of an IR document. Structurally equal IRs serialize to
/// byte-identical text.
pub fn serialize(ir: &RagIr) -> String {
    to_canonical_json(ir)
}

/// Strict parse: unknown fields, missing required fields, and schema
/// mismatches are errors. Structural invariants are checked separately by
/// [`validate`].
pub fn deserialize(doc: &str) -> Result<RagIr, IrParseError> {
    let ir: RagIr = serde_json::from_str(doc)?;
    if ir.schema != IR_SCHEMA {
        return Err(IrParseError::SchemaVersion { found: ir.schema });
    }
    Ok(ir)
}

/// Checks every IR invariant and reports all violations with paths into the
/// document.
pub fn validate(ir: &RagIr) -> ValidationReport {
    let mut report = ValidationReport::default();
    if ir.graphs.is_empty() {
        report.push(
            "graphs",
            ViolationCode::EmptyGraphs,
            "at least one graph is required",
        );
        return report;
    }

    let mut weight_sum = 0.0;
    let mut names = HashSet::new();
    for (gi, wg) in ir.graphs.iter().enumerate() {
        let base = format!("graphs[{gi}]");
        if !(0.0..=1.0).contains(&wg.weight) || !wg.weight.is_finite() {
            report.push(
                format!("{base}.weight"),
                ViolationCode::WeightRange,
                format!("weight {} is outside [0, 1]", wg.weight),
            );
        }
        weight_sum += wg.weight;
        if !names.insert(wg.graph.name.clone()) {
            report.push(
                format!("{base}.graph.name"),
                ViolationCode::DuplicateGraphName,
                format!("graph name {:?} appears more than once", wg.graph.name),
            );
        }
        validate_graph(&wg.graph, &format!("{base}.graph"), &mut report);
    }
    if (weight_sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
        report.push(
            "graphs",
            ViolationCode::WeightSum,
            format!("mixture weights sum to {weight_sum}, expected 1"),
        );
    }
    report
}

fn validate_graph(g: &RequestGraph, base: &str, report: &mut ValidationReport) {
    let mut ids = HashSet::new();
    for (ni, node) in g.nodes.iter().enumerate() {
        if !ids.insert(node.id().to_string()) {
            report.push(
                format!("{base}.nodes[{ni}].id"),
                ViolationCode::DuplicateNodeId,
                format!("node id {:?} appears more than once", node.id()),
            );
        }
        validate_node(node, &format!("{base}.nodes[{ni}]"), report);
    }

    if !ids.contains(&g.entry) {
        report.push(
            format!("{base}.entry"),
            ViolationCode::MissingEntry,
            format!("entry {:?} is not a node in the graph", g.entry),
        );
    }
    for exit in &g.exits {
        if !ids.contains(exit) {
            report.push(
                format!("{base}.exits"),
                ViolationCode::MissingExit,
                format!("exit {exit:?} is not a node in the graph"),
            );
        }
    }

    let mut dangling = false;
    for (ei, edge) in g.edges.iter().enumerate() {
        for (end, label) in [(&edge.from, "from"), (&edge.to, "to")] {
            if !ids.contains(end.as_str()) {
                dangling = true;
                report.push(
                    format!("{base}.edges[{ei}].{label}"),
                    ViolationCode::DanglingEdge,
                    format!("edge endpoint {end:?} is not a node in the graph"),
                );
            }
        }
    }

    // Cycle and reachability checks need a well-formed edge list.
    if dangling || !ids.contains(&g.entry) {
        return;
    }

    if let Some(node) = find_cycle(g) {
        report.push(
            format!("{base}.edges"),
            ViolationCode::Cycle,
            format!("cycle through node {node:?}"),
        );
        return;
    }

    let reachable = reachable_from(g, &g.entry);
    for (ni, node) in g.nodes.iter().enumerate() {
        if !reachable.contains(node.id()) {
            report.push(
                format!("{base}.nodes[{ni}]"),
                ViolationCode::Unreachable,
                format!(
                    "node {:?} is not reachable from entry {:?}",
                    node.id(),
                    g.entry
                ),
            );
        }
    }
}

fn validate_node(node: &Node, base: &str, report: &mut ValidationReport) {
    let invalid = |report: &mut ValidationReport, field: &str, message: String| {
        report.push(
            format!("{base}.{field}"),
            ViolationCode::InvalidField,
            message,
        );
    };
    match node {
        Node::Model(m) => {
            if m.params == 0 {
                invalid(report, "params", "params must be positive".into());
            }
            if m.input_len == 0 {
                invalid(report, "input_len", "input_len must be at least 1".into());
            }
            if m.role == ModelRole::MainLlm && m.output_len == 0 {
                invalid(
                    report,
                    "output_len",
                    "main-llm must generate at least 1 token".into(),
                );
            }
            if m.reused_tokens > m.input_len {
                invalid(
                    report,
                    "reused_tokens",
                    format!(
                        "reused_tokens {} exceeds input_len {}",
                        m.reused_tokens, m.input_len
                    ),
                );
            }
            if !m.kv_cache_reuse && m.reused_tokens > 0 {
                invalid(
                    report,
                    "reused_tokens",
                    "reused_tokens requires kv_cache_reuse".into(),
                );
            }
            if let Some(arch) = &m.arch {
                if arch.n_layers == 0 || arch.d_model == 0 {
                    invalid(
                        report,
                        "arch",
                        "n_layers and d_model must be positive".into(),
                    );
                }
            }
        }
        Node::Retrieval(r) => {
            if r.num_rows == 0 {
                invalid(
                    report,
                    "num_rows",
                    "index must contain at least one row".into(),
                );
            }
            if r.dim == 0 {
                invalid(report, "dim", "dim must be positive".into());
            }
            if r.top_k == 0 {
                invalid(report, "top_k", "top_k must be at least 1".into());
            }
            if r.top_k > r.num_rows {
                invalid(
                    report,
                    "top_k",
                    format!("top_k {} exceeds num_rows {}", r.top_k, r.num_rows),
                );
            }
            if !(r.quality_req > 0.0 && r.quality_req <= 1.0) {
                invalid(
                    report,
                    "quality_req",
                    format!("quality_req {} is outside (0, 1]", r.quality_req),
                );
            }
            if r.iterations == 0 {
                invalid(report, "iterations", "iterations must be at least 1".into());
            }
            if let Some(IndexConfig::Ivf { nlist, nprobe }) = &r.index_config {
                if *nlist == 0 || *nprobe == 0 || nprobe > nlist || *nlist > r.num_rows {
                    invalid(
                        report,
                        "index_config",
                        format!(
                            "IVF shape must satisfy 1 <= nprobe <= nlist <= num_rows \
                             (nlist {nlist}, nprobe {nprobe}, num_rows {})",
                            r.num_rows
                        ),
                    );
                }
            }
            if let Some(IndexConfig::Calibrated { table_ref }) = &r.index_config {
                if table_ref.is_empty() {
                    invalid(report, "index_config", "table_ref must be non-empty".into());
                }
            }
        }
    }
}

fn adjacency(g: &RequestGraph) -> BTreeMap<&str, Vec<&str>> {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for node in &g.nodes {
        adj.entry(node.id()).or_default();
    }
    for edge in &g.edges {
        adj.entry(edge.from.as_str())
            .or_default()
            .push(edge.to.as_str());
    }
    adj
}

fn find_cycle(g: &RequestGraph) -> Option<String> {
    let adj = adjacency(g);
    let mut state: BTreeMap<&str, u8> = BTreeMap::new(); // 0 new, 1 open, 2 done
                                                         // Iterative DFS with an explicit stack; frame = (node, next child index).
    for start in adj.keys() {
        if state.get(start).copied().unwrap_or(0) != 0 {
            continue;
        }
        let mut stack: Vec<(&str, usize)> = vec![(start, 0)];
        state.insert(start, 1);
        while let Some((node, child)) = stack.pop() {
            let children = &adj[node];
            if child < children.len() {
                stack.push((node, child + 1));
                let next = children[child];
                match state.get(next).copied().unwrap_or(0) {
                    0 => {
                        state.insert(next, 1);
                        stack.push((next, 0));
                    }
                    1 => return Some(next.to_string()),
                    _ => {}
                }
            } else {
                state.insert(node, 2);
            }
        }
    }
    None
}

fn reachable_from<'g>(g: &'g RequestGraph, start: &str) -> HashSet<&'g str> {
    let adj = adjacency(g);
    let mut seen: HashSet<&str> = HashSet::new();
    let Some((start_key, _)) = adj.get_key_value(start) else {
        return seen;
    };
    let mut stack = vec![*start_key];
    seen.insert(start_key);
    while let Some(node) = stack.pop() {
        for &next in &adj[node] {
            if seen.insert(next) {
                stack.push(next);
            }
        }
    }
    seen
}

/// All entry-to-exit paths of `g`, each as a node-id sequence.
///
/// Deterministic: successors are explored in edge declaration order, so the
/// result order is a function of the document alone. A single-node graph
/// whose entry is also an exit yields one single-element path.
pub fn critical_paths(g: &RequestGraph) -> Result<Vec<Vec<String>>, GraphError> {
    let targets: BTreeSet<&str> = g.exits.iter().map(String::as_str).collect();
    paths_to(g, &targets)
}

/// All simple paths from the graph entry to any node in `targets`.
pub fn paths_to(
    g: &RequestGraph,
    targets: &BTreeSet<&str>,
) -> Result<Vec<Vec<String>>, GraphError> {
    let adj = adjacency(g);
    if !adj.contains_key(g.entry.as_str()) {
        return Err(GraphError::UnknownNode {
            graph: g.name.clone(),
            node: g.entry.clone(),
        });
    }
    for &t in targets {
        if !adj.contains_key(t) {
            return Err(GraphError::UnknownNode {
                graph: g.name.clone(),
                node: t.to_string(),
            });
        }
    }

    let mut paths = Vec::new();
    let mut path: Vec<&str> = vec![g.entry.as_str()];
    let mut on_path: HashSet<&str> = HashSet::from([g.entry.as_str()]);
    // Frame = index of the next successor of path[depth] to try.
    let mut cursor: Vec<usize> = vec![0];

    loop {
        let node = *path.last().expect("path is never empty");
        let next_child = *cursor.last().expect("cursor tracks path");
        if next_child == 0 && targets.contains(node) {
            paths.push(path.iter().map(|s| s.to_string()).collect());
            if paths.len() > MAX_PATHS {
                return Err(GraphError::TooManyPaths {
                    graph: g.name.clone(),
                });
            }
        }
        let children = &adj[node];
        if next_child < children.len() {
            *cursor.last_mut().unwrap() += 1;
            let next = children[next_child];
            if on_path.contains(next) {
                return Err(GraphError::Cycle {
                    graph: g.name.clone(),
                    node: next.to_string(),
                });
            }
            path.push(next);
            on_path.insert(next);
            cursor.push(0);
        } else {
            on_path.remove(node);
            path.pop();
            cursor.pop();
            if path.is_empty() {
                return Ok(paths);
            }
        }
    }
}
