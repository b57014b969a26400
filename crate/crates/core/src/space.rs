//! Pipeline configuration space: knobs, enumeration, lowering to IR, and
//! change-cost classification.
//!
//! An [`AlgoConfig`] fixes every knob of one RAG pipeline; a [`ConfigSpace`]
//! lists the allowed values per knob. [`lower`] turns a configuration plus a
//! [`WorkloadProfile`] into the dataflow IR that the cost model prices.
//! [`change_cost`] classifies how expensive it is to move between two
//! configurations of a live deployment, which the evolutionary search uses
//! to bias mutation away from index rebuilds.

use crate::canon::{canonical_key, to_canonical_json};
use crate::ir::{
    Edge, IndexConfig, ModelArch, ModelNode, ModelRole, Node, RagIr, RequestGraph, RetrievalNode,
    WeightedGraph, IR_SCHEMA,
};
use crate::violation::{ValidationReport, ViolationCode};
use num_bigint::BigUint;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use thiserror::Error;

pub const ALGO_SCHEMA: &str = "rag-algo/1";
pub const SPACE_SCHEMA: &str = "rag-space/1";
pub const PROFILE_SCHEMA: &str = "rag-profile/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSpec {
    pub id: String,
    pub params: u64,
    /// Output vector dimensionality; also the index row width.
    pub dim: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewriterSpec {
    pub params: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ModelArch>,
    /// Length of the rewritten query in tokens.
    pub out_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankerSpec {
    pub params: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ModelArch>,
    /// Candidates fetched from the index for the reranker to narrow to top_k.
    pub rerank_candidates: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MainLlmSpec {
    pub params: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arch: Option<ModelArch>,
    /// Tokens generated per response.
    pub out_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RetrievalFrequency {
    /// One probe before generation starts.
    Once,
    /// Re-retrieve every `n` generated tokens (iterative pipelines).
    EveryNTokens { n: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integration {
    /// Retrieved chunks are spliced into the prompt and prefilled.
    Prompt,
    /// Retrieved chunks arrive with precomputed KV entries; prefill skips
    /// them.
    KvCacheInsert,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMethod {
    #[default]
    Vector,
    Bm25,
    Hybrid,
}

impl RetrievalMethod {
    fn is_vector(&self) -> bool {
        *self == RetrievalMethod::Vector
    }
}

fn is_false(b: &bool) -> bool {
    !*b
}

/// One fully specified pipeline configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgoConfig {
    pub schema: String,
    pub num_docs: u64,
    pub chunk_tokens: u64,
    pub chunk_overlap: u64,
    pub embedding_model: EmbeddingSpec,
    /// Chunks placed in the main-llm context.
    pub top_k: u64,
    /// Required retrieval recall in (0, 1].
    pub quality_req: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rewriter: Option<RewriterSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reranker: Option<RerankerSpec>,
    pub main_llm: MainLlmSpec,
    pub retrieval_frequency: RetrievalFrequency,
    pub integration: Integration,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub index: Option<IndexConfig>,
    #[serde(default)]
    pub speculative: bool,
    /// Only `vector` is supported; other values fail validation.
    #[serde(default, skip_serializing_if = "RetrievalMethod::is_vector")]
    pub retrieval_method: RetrievalMethod,
    /// Not supported; `true` fails validation.
    #[serde(default, skip_serializing_if = "is_false")]
    pub relevance_filtering: bool,
}

impl AlgoConfig {
    /// Content key: sha256 of the canonical JSON text. Used to memoize
    /// evaluations and to join quality tables.
    pub fn config_key(&self) -> String {
        canonical_key(self)
    }
}

/// Request-population parameters that lowering needs but that are not
/// pipeline knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadProfile {
    pub schema: String,
    pub query_tokens: u64,
    /// Fraction of requests routed through the rewriter when one is
    /// configured; drives the IR mixture weights.
    #[serde(default = "default_rewriter_prob")]
    pub rewriter_prob: f64,
    #[serde(default = "default_bytes_per_token")]
    pub bytes_per_token: u64,
    /// Corpus document length used to derive the chunk count.
    #[serde(default = "default_doc_tokens")]
    pub doc_tokens: u64,
}

fn default_rewriter_prob() -> f64 {
    1.0
}

fn default_bytes_per_token() -> u64 {
    2
}

fn default_doc_tokens() -> u64 {
    1024
}

fn default_none_rewriter() -> Vec<Option<RewriterSpec>> {
    vec![None]
}

fn default_none_reranker() -> Vec<Option<RerankerSpec>> {
    vec![None]
}

fn default_none_index() -> Vec<Option<IndexConfig>> {
    vec![None]
}

fn default_overlap_domain() -> Vec<u64> {
    vec![0]
}

fn default_frequency_domain() -> Vec<RetrievalFrequency> {
    vec![RetrievalFrequency::Once]
}

fn default_integration_domain() -> Vec<Integration> {
    vec![Integration::Prompt]
}

fn default_speculative_domain() -> Vec<bool> {
    vec![false]
}

/// Allowed values per knob. The cartesian product of all domains is the
/// search space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigSpace {
    pub schema: String,
    pub num_docs: Vec<u64>,
    pub chunk_tokens: Vec<u64>,
    #[serde(default = "default_overlap_domain")]
    pub chunk_overlap: Vec<u64>,
    pub embedding_model: Vec<EmbeddingSpec>,
    pub top_k: Vec<u64>,
    pub quality_req: Vec<f64>,
    #[serde(default = "default_none_rewriter")]
    pub rewriter: Vec<Option<RewriterSpec>>,
    #[serde(default = "default_none_reranker")]
    pub reranker: Vec<Option<RerankerSpec>>,
    pub main_llm: Vec<MainLlmSpec>,
    #[serde(default = "default_frequency_domain")]
    pub retrieval_frequency: Vec<RetrievalFrequency>,
    #[serde(default = "default_integration_domain")]
    pub integration: Vec<Integration>,
    #[serde(default = "default_none_index")]
    pub index: Vec<Option<IndexConfig>>,
    #[serde(default = "default_speculative_domain")]
    pub speculative: Vec<bool>,
}

/// Knob identity, in enumeration order: the first knob is the most
/// significant digit of the enumeration odometer and the last varies
/// fastest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Knob {
    NumDocs,
    ChunkTokens,
    ChunkOverlap,
    EmbeddingModel,
    TopK,
    QualityReq,
    Rewriter,
    Reranker,
    MainLlm,
    RetrievalFrequency,
    Integration,
    Index,
    Speculative,
}

pub const KNOBS: [Knob; 13] = [
    Knob::NumDocs,
    Knob::ChunkTokens,
    Knob::ChunkOverlap,
    Knob::EmbeddingModel,
    Knob::TopK,
    Knob::QualityReq,
    Knob::Rewriter,
    Knob::Reranker,
    Knob::MainLlm,
    Knob::RetrievalFrequency,
    Knob::Integration,
    Knob::Index,
    Knob::Speculative,
];

/// Deployment-mutation price class of a knob change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CostClass {
    Cheap,
    Medium,
    Rebuild,
}

/// Knob-change counts between two configurations, bucketed by price class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct ChangeCost {
    pub cheap: u32,
    pub medium: u32,
    pub rebuild: u32,
}

impl ChangeCost {
    pub fn total(&self) -> u32 {
        self.cheap + self.medium + self.rebuild
    }
}

#[derive(Debug, Error)]
pub enum DocParseError {
    #[error("document is not valid JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported schema {found:?}, expected {expected:?}")]
    SchemaVersion {
        found: String,
        expected: &'static str,
    },
}

#[derive(Debug, Error)]
pub enum LowerError {
    #[error("configuration failed validation:\n{0}")]
    InvalidConfig(ValidationReport),
    #[error("workload profile failed validation:\n{0}")]
    InvalidProfile(ValidationReport),
    #[error("top_k {top_k} exceeds the derived corpus size {num_rows}")]
    TopKExceedsRows { top_k: u64, num_rows: u64 },
    #[error("rerank_candidates {candidates} exceeds the derived corpus size {num_rows}")]
    CandidatesExceedRows { candidates: u64, num_rows: u64 },
    #[error("index nlist {nlist} exceeds the derived corpus size {num_rows}")]
    NlistExceedsRows { nlist: u64, num_rows: u64 },
    #[error("corpus size arithmetic overflowed u64")]
    Overflow,
}

fn check_schema(found: &str, expected: &'static str) -> Result<(), DocParseError> {
    if found != expected {
        return Err(DocParseError::SchemaVersion {
            found: found.to_string(),
            expected,
        });
    }
    Ok(())
}

pub fn load_config(doc: &str) -> Result<AlgoConfig, DocParseError> {
    let cfg: AlgoConfig = serde_json::from_str(doc)?;
    check_schema(&cfg.schema, ALGO_SCHEMA)?;
    Ok(cfg)
}

pub fn load_space(doc: &str) -> Result<ConfigSpace, DocParseError> {
    let space: ConfigSpace = serde_json::from_str(doc)?;
    check_schema(&space.schema, SPACE_SCHEMA)?;
    Ok(space)
}

pub fn load_profile(doc: &str) -> Result<WorkloadProfile, DocParseError> {
    let profile: WorkloadProfile = serde_json::from_str(doc)?;
    check_schema(&profile.schema, PROFILE_SCHEMA)?;
    Ok(profile)
}

pub fn serialize_config(cfg: &AlgoConfig) -> String {
    to_canonical_json(cfg)
}

pub fn serialize_space(space: &ConfigSpace) -> String {
    to_canonical_json(space)
}

pub fn serialize_profile(profile: &WorkloadProfile) -> String {
    to_canonical_json(profile)
}

fn check_arch(arch: &Option<ModelArch>, path: &str, report: &mut ValidationReport) {
    if let Some(a) = arch {
        if a.n_layers == 0 || a.d_model == 0 {
            report.push(
                format!("{path}.arch"),
                ViolationCode::InvalidField,
                "n_layers and d_model must be positive",
            );
        }
    }
}

fn check_positive(value: u64, path: &str, report: &mut ValidationReport) {
    if value == 0 {
        report.push(path, ViolationCode::InvalidField, "must be positive");
    }
}

fn check_embedding(e: &EmbeddingSpec, path: &str, report: &mut ValidationReport) {
    check_positive(e.params, &format!("{path}.params"), report);
    check_positive(e.dim, &format!("{path}.dim"), report);
    if e.id.is_empty() {
        report.push(
            format!("{path}.id"),
            ViolationCode::InvalidField,
            "id must be non-empty",
        );
    }
}

fn check_rewriter(r: &RewriterSpec, path: &str, report: &mut ValidationReport) {
    check_positive(r.params, &format!("{path}.params"), report);
    check_positive(r.out_tokens, &format!("{path}.out_tokens"), report);
    check_arch(&r.arch, path, report);
}

fn check_reranker(r: &RerankerSpec, path: &str, report: &mut ValidationReport) {
    check_positive(r.params, &format!("{path}.params"), report);
    check_positive(
        r.rerank_candidates,
        &format!("{path}.rerank_candidates"),
        report,
    );
    check_arch(&r.arch, path, report);
}

fn check_main_llm(m: &MainLlmSpec, path: &str, report: &mut ValidationReport) {
    check_positive(m.params, &format!("{path}.params"), report);
    check_positive(m.out_tokens, &format!("{path}.out_tokens"), report);
    check_arch(&m.arch, path, report);
}

fn check_quality_req(q: f64, path: &str, report: &mut ValidationReport) {
    if !(q > 0.0 && q <= 1.0) {
        report.push(
            path,
            ViolationCode::InvalidField,
            format!("quality_req {q} is outside (0, 1]"),
        );
    }
}

fn check_frequency(f: &RetrievalFrequency, path: &str, report: &mut ValidationReport) {
    if let RetrievalFrequency::EveryNTokens { n: 0 } = f {
        report.push(
            path,
            ViolationCode::InvalidField,
            "every_n_tokens requires n >= 1",
        );
    }
}

fn check_index(index: &IndexConfig, path: &str, report: &mut ValidationReport) {
    match index {
        IndexConfig::Flat => {}
        IndexConfig::Ivf { nlist, nprobe } => {
            if *nlist == 0 || *nprobe == 0 || nprobe > nlist {
                report.push(
                    path,
                    ViolationCode::InvalidField,
                    format!("IVF shape must satisfy 1 <= nprobe <= nlist (nlist {nlist}, nprobe {nprobe})"),
                );
            }
        }
        IndexConfig::Calibrated { table_ref } => {
            if table_ref.is_empty() {
                report.push(
                    path,
                    ViolationCode::InvalidField,
                    "table_ref must be non-empty",
                );
            }
        }
    }
}

/// Checks every single-configuration invariant; cross-checks against the
/// corpus (top_k vs derived rows, nlist vs rows) happen in [`lower`]
/// because they need the workload profile.
pub fn validate_config(cfg: &AlgoConfig) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_positive(cfg.num_docs, "num_docs", &mut report);
    check_positive(cfg.chunk_tokens, "chunk_tokens", &mut report);
    if cfg.chunk_overlap >= cfg.chunk_tokens {
        report.push(
            "chunk_overlap",
            ViolationCode::InvalidField,
            format!(
                "chunk_overlap {} must be smaller than chunk_tokens {}",
                cfg.chunk_overlap, cfg.chunk_tokens
            ),
        );
    }
    check_embedding(&cfg.embedding_model, "embedding_model", &mut report);
    check_positive(cfg.top_k, "top_k", &mut report);
    check_quality_req(cfg.quality_req, "quality_req", &mut report);
    if let Some(rw) = &cfg.rewriter {
        check_rewriter(rw, "rewriter", &mut report);
    }
    if let Some(rr) = &cfg.reranker {
        check_reranker(rr, "reranker", &mut report);
        if rr.rerank_candidates < cfg.top_k {
            report.push(
                "reranker.rerank_candidates",
                ViolationCode::InvalidField,
                format!(
                    "rerank_candidates {} must be at least top_k {}",
                    rr.rerank_candidates, cfg.top_k
                ),
            );
        }
    }
    check_main_llm(&cfg.main_llm, "main_llm", &mut report);
    check_frequency(&cfg.retrieval_frequency, "retrieval_frequency", &mut report);
    if let Some(index) = &cfg.index {
        check_index(index, "index", &mut report);
    }
    if cfg.retrieval_method != RetrievalMethod::Vector {
        report.push(
            "retrieval_method",
            ViolationCode::UnsupportedKnob,
            format!(
                "retrieval method {:?} is not supported; only vector search is",
                cfg.retrieval_method
            ),
        );
    }
    if cfg.relevance_filtering {
        report.push(
            "relevance_filtering",
            ViolationCode::UnsupportedKnob,
            "relevance filtering is not supported",
        );
    }
    report
}

pub fn validate_profile(profile: &WorkloadProfile) -> ValidationReport {
    let mut report = ValidationReport::default();
    check_positive(profile.query_tokens, "query_tokens", &mut report);
    check_positive(profile.bytes_per_token, "bytes_per_token", &mut report);
    check_positive(profile.doc_tokens, "doc_tokens", &mut report);
    if !(0.0..=1.0).contains(&profile.rewriter_prob) || !profile.rewriter_prob.is_finite() {
        report.push(
            "rewriter_prob",
            ViolationCode::InvalidField,
            format!("rewriter_prob {} is outside [0, 1]", profile.rewriter_prob),
        );
    }
    report
}

/// Checks that every domain is non-empty, duplicate-free, and contains only
/// individually valid values. Cross-knob feasibility of particular
/// combinations is still a lowering concern.
pub fn validate_space(space: &ConfigSpace) -> ValidationReport {
    let mut report = ValidationReport::default();

    fn check_domain<T: Serialize>(
        values: &[T],
        path: &str,
        report: &mut ValidationReport,
        mut check_value: impl FnMut(&T, &str, &mut ValidationReport),
    ) {
        if values.is_empty() {
            report.push(path, ViolationCode::EmptyDomain, "domain must be non-empty");
            return;
        }
        let mut seen = BTreeSet::new();
        for (i, v) in values.iter().enumerate() {
            let vpath = format!("{path}[{i}]");
            if !seen.insert(to_canonical_json(v)) {
                report.push(
                    &*vpath,
                    ViolationCode::InvalidField,
                    "duplicate domain value",
                );
            }
            check_value(v, &vpath, report);
        }
    }

    check_domain(&space.num_docs, "num_docs", &mut report, |v, p, r| {
        check_positive(*v, p, r)
    });
    check_domain(
        &space.chunk_tokens,
        "chunk_tokens",
        &mut report,
        |v, p, r| check_positive(*v, p, r),
    );
    check_domain(
        &space.chunk_overlap,
        "chunk_overlap",
        &mut report,
        |_, _, _| {},
    );
    check_domain(
        &space.embedding_model,
        "embedding_model",
        &mut report,
        check_embedding,
    );
    check_domain(&space.top_k, "top_k", &mut report, |v, p, r| {
        check_positive(*v, p, r)
    });
    check_domain(&space.quality_req, "quality_req", &mut report, |v, p, r| {
        check_quality_req(*v, p, r)
    });
    check_domain(&space.rewriter, "rewriter", &mut report, |v, p, r| {
        if let Some(rw) = v {
            check_rewriter(rw, p, r);
        }
    });
    check_domain(&space.reranker, "reranker", &mut report, |v, p, r| {
        if let Some(rr) = v {
            check_reranker(rr, p, r);
        }
    });
    check_domain(&space.main_llm, "main_llm", &mut report, |v, p, r| {
        check_main_llm(v, p, r)
    });
    check_domain(
        &space.retrieval_frequency,
        "retrieval_frequency",
        &mut report,
        check_frequency,
    );
    check_domain(&space.integration, "integration", &mut report, |_, _, _| {});
    check_domain(&space.index, "index", &mut report, |v, p, r| {
        if let Some(ix) = v {
            check_index(ix, p, r);
        }
    });
    check_domain(&space.speculative, "speculative", &mut report, |_, _, _| {});
    report
}

impl ConfigSpace {
    /// Domain cardinality per knob, in [`KNOBS`] order.
    pub fn domain_sizes(&self) -> [usize; KNOBS.len()] {
        [
            self.num_docs.len(),
            self.chunk_tokens.len(),
            self.chunk_overlap.len(),
            self.embedding_model.len(),
            self.top_k.len(),
            self.quality_req.len(),
            self.rewriter.len(),
            self.reranker.len(),
            self.main_llm.len(),
            self.retrieval_frequency.len(),
            self.integration.len(),
            self.index.len(),
            self.speculative.len(),
        ]
    }

    /// Total number of configurations; may exceed u64, hence BigUint.
    pub fn size(&self) -> BigUint {
        let mut n = BigUint::from(1u32);
        for s in self.domain_sizes() {
            n *= BigUint::from(s);
        }
        n
    }

    fn config_from_indices(&self, idx: &[usize; KNOBS.len()]) -> AlgoConfig {
        AlgoConfig {
            schema: ALGO_SCHEMA.to_string(),
            num_docs: self.num_docs[idx[0]],
            chunk_tokens: self.chunk_tokens[idx[1]],
            chunk_overlap: self.chunk_overlap[idx[2]],
            embedding_model: self.embedding_model[idx[3]].clone(),
            top_k: self.top_k[idx[4]],
            quality_req: self.quality_req[idx[5]],
            rewriter: self.rewriter[idx[6]].clone(),
            reranker: self.reranker[idx[7]].clone(),
            main_llm: self.main_llm[idx[8]].clone(),
            retrieval_frequency: self.retrieval_frequency[idx[9]].clone(),
            integration: self.integration[idx[10]],
            index: self.index[idx[11]].clone(),
            speculative: self.speculative[idx[12]],
            retrieval_method: RetrievalMethod::Vector,
            relevance_filtering: false,
        }
    }

    /// Configuration at a lexicographic position: position 0 takes every
    /// knob's first value, and the last knob varies fastest.
    pub fn config_at(&self, index: &BigUint) -> Option<AlgoConfig> {
        if *index >= self.size() {
            return None;
        }
        let mut rest = index.clone();
        let sizes = self.domain_sizes();
        let mut idx = [0usize; KNOBS.len()];
        for k in (0..KNOBS.len()).rev() {
            let base = BigUint::from(sizes[k]);
            let digit = &rest % &base;
            rest /= &base;
            idx[k] = usize::try_from(digit).expect("digit < domain size fits usize");
        }
        Some(self.config_from_indices(&idx))
    }

    /// Walks the whole space in [`config_at`] index order.
    pub fn enumerate(&self) -> ConfigIter<'_> {
        let sizes = self.domain_sizes();
        ConfigIter {
            space: self,
            counters: [0; KNOBS.len()],
            done: sizes.contains(&0),
        }
    }

    /// Inverse of [`config_at`] for configs assembled from this space's
    /// domain values; None when some knob value is foreign to the space.
    pub fn index_of(&self, cfg: &AlgoConfig) -> Option<BigUint> {
        fn position<T: PartialEq>(domain: &[T], value: &T) -> Option<usize> {
            domain.iter().position(|v| v == value)
        }
        let digits = [
            position(&self.num_docs, &cfg.num_docs)?,
            position(&self.chunk_tokens, &cfg.chunk_tokens)?,
            position(&self.chunk_overlap, &cfg.chunk_overlap)?,
            position(&self.embedding_model, &cfg.embedding_model)?,
            position(&self.top_k, &cfg.top_k)?,
            position(&self.quality_req, &cfg.quality_req)?,
            position(&self.rewriter, &cfg.rewriter)?,
            position(&self.reranker, &cfg.reranker)?,
            position(&self.main_llm, &cfg.main_llm)?,
            position(&self.retrieval_frequency, &cfg.retrieval_frequency)?,
            position(&self.integration, &cfg.integration)?,
            position(&self.index, &cfg.index)?,
            position(&self.speculative, &cfg.speculative)?,
        ];
        let sizes = self.domain_sizes();
        let mut index = BigUint::from(0u32);
        for (digit, size) in digits.iter().zip(sizes) {
            index = index * BigUint::from(size) + BigUint::from(*digit);
        }
        Some(index)
    }
}

/// Copies `src`'s value for one knob into `dst`.
pub fn copy_knob(dst: &mut AlgoConfig, src: &AlgoConfig, knob: Knob) {
    match knob {
        Knob::NumDocs => dst.num_docs = src.num_docs,
        Knob::ChunkTokens => dst.chunk_tokens = src.chunk_tokens,
        Knob::ChunkOverlap => dst.chunk_overlap = src.chunk_overlap,
        Knob::EmbeddingModel => dst.embedding_model = src.embedding_model.clone(),
        Knob::TopK => dst.top_k = src.top_k,
        Knob::QualityReq => dst.quality_req = src.quality_req,
        Knob::Rewriter => dst.rewriter = src.rewriter.clone(),
        Knob::Reranker => dst.reranker = src.reranker.clone(),
        Knob::MainLlm => dst.main_llm = src.main_llm.clone(),
        Knob::RetrievalFrequency => dst.retrieval_frequency = src.retrieval_frequency.clone(),
        Knob::Integration => dst.integration = src.integration,
        Knob::Index => dst.index = src.index.clone(),
        Knob::Speculative => dst.speculative = src.speculative,
    }
}

/// Writes the `idx`-th domain value for one knob into `cfg`.
///
/// Panics when `idx` is out of the domain's range; callers draw indices
/// from `domain_sizes`.
pub fn assign_knob(cfg: &mut AlgoConfig, space: &ConfigSpace, knob: Knob, idx: usize) {
    match knob {
        Knob::NumDocs => cfg.num_docs = space.num_docs[idx],
        Knob::ChunkTokens => cfg.chunk_tokens = space.chunk_tokens[idx],
        Knob::ChunkOverlap => cfg.chunk_overlap = space.chunk_overlap[idx],
        Knob::EmbeddingModel => cfg.embedding_model = space.embedding_model[idx].clone(),
        Knob::TopK => cfg.top_k = space.top_k[idx],
        Knob::QualityReq => cfg.quality_req = space.quality_req[idx],
        Knob::Rewriter => cfg.rewriter = space.rewriter[idx].clone(),
        Knob::Reranker => cfg.reranker = space.reranker[idx].clone(),
        Knob::MainLlm => cfg.main_llm = space.main_llm[idx].clone(),
        Knob::RetrievalFrequency => {
            cfg.retrieval_frequency = space.retrieval_frequency[idx].clone()
        }
        Knob::Integration => cfg.integration = space.integration[idx],
        Knob::Index => cfg.index = space.index[idx].clone(),
        Knob::Speculative => cfg.speculative = space.speculative[idx],
    }
}

pub struct ConfigIter<'s> {
    space: &'s ConfigSpace,
    counters: [usize; KNOBS.len()],
    done: bool,
}

impl Iterator for ConfigIter<'_> {
    type Item = AlgoConfig;

    fn next(&mut self) -> Option<AlgoConfig> {
        if self.done {
            return None;
        }
        let cfg = self.space.config_from_indices(&self.counters);
        let sizes = self.space.domain_sizes();
        self.done = true;
        for k in (0..KNOBS.len()).rev() {
            self.counters[k] += 1;
            if self.counters[k] < sizes[k] {
                self.done = false;
                break;
            }
            self.counters[k] = 0;
        }
        Some(cfg)
    }
}

fn index_kind(index: &Option<IndexConfig>) -> u8 {
    match index {
        None => 0,
        Some(IndexConfig::Flat) => 1,
        Some(IndexConfig::Ivf { .. }) => 2,
        Some(IndexConfig::Calibrated { .. }) => 3,
    }
}

/// Price class of changing `knob` from its value in `a` to its value in
/// `b`, or `None` when the values are equal.
///
/// Corpus and embedding knobs (`num_docs`, `chunk_tokens`, `chunk_overlap`,
/// `embedding_model`) force a re-embed and re-index, as does changing the
/// index kind. Re-tuning the same index kind or the recall requirement is a
/// parameter sweep on a live index. Everything else is a serving-side swap.
pub fn knob_class(knob: Knob, a: &AlgoConfig, b: &AlgoConfig) -> Option<CostClass> {
    let changed_class = |changed: bool, class: CostClass| changed.then_some(class);
    match knob {
        Knob::NumDocs => changed_class(a.num_docs != b.num_docs, CostClass::Rebuild),
        Knob::ChunkTokens => changed_class(a.chunk_tokens != b.chunk_tokens, CostClass::Rebuild),
        Knob::ChunkOverlap => changed_class(a.chunk_overlap != b.chunk_overlap, CostClass::Rebuild),
        Knob::EmbeddingModel => {
            changed_class(a.embedding_model != b.embedding_model, CostClass::Rebuild)
        }
        Knob::TopK => changed_class(a.top_k != b.top_k, CostClass::Cheap),
        Knob::QualityReq => changed_class(a.quality_req != b.quality_req, CostClass::Medium),
        Knob::Rewriter => changed_class(a.rewriter != b.rewriter, CostClass::Cheap),
        Knob::Reranker => changed_class(a.reranker != b.reranker, CostClass::Cheap),
        Knob::MainLlm => changed_class(a.main_llm != b.main_llm, CostClass::Cheap),
        Knob::RetrievalFrequency => changed_class(
            a.retrieval_frequency != b.retrieval_frequency,
            CostClass::Cheap,
        ),
        Knob::Integration => changed_class(a.integration != b.integration, CostClass::Cheap),
        Knob::Index => {
            if a.index == b.index {
                None
            } else if index_kind(&a.index) == index_kind(&b.index) {
                Some(CostClass::Medium)
            } else {
                Some(CostClass::Rebuild)
            }
        }
        Knob::Speculative => changed_class(a.speculative != b.speculative, CostClass::Cheap),
    }
}

/// Counts the knob changes between two configurations per price class.
/// Symmetric in its arguments.
pub fn change_cost(a: &AlgoConfig, b: &AlgoConfig) -> ChangeCost {
    let mut cost = ChangeCost::default();
    for knob in KNOBS {
        match knob_class(knob, a, b) {
            Some(CostClass::Cheap) => cost.cheap += 1,
            Some(CostClass::Medium) => cost.medium += 1,
            Some(CostClass::Rebuild) => cost.rebuild += 1,
            None => {}
        }
    }
    cost
}

fn ceil_div(a: u64, b: u64) -> u64 {
    a.div_ceil(b)
}

/// Chunk rows the corpus lowers to: `num_docs x ceil(doc_tokens / stride)`
/// with stride `chunk_tokens - chunk_overlap`.
pub fn derived_num_rows(cfg: &AlgoConfig, profile: &WorkloadProfile) -> Result<u64, LowerError> {
    let stride = cfg.chunk_tokens - cfg.chunk_overlap;
    let rows_per_doc = ceil_div(profile.doc_tokens, stride);
    cfg.num_docs
        .checked_mul(rows_per_doc)
        .ok_or(LowerError::Overflow)
}

/// Probes the retrieval node issues per request.
pub fn derived_iterations(cfg: &AlgoConfig) -> u64 {
    match cfg.retrieval_frequency {
        RetrievalFrequency::Once => 1,
        RetrievalFrequency::EveryNTokens { n } => ceil_div(cfg.main_llm.out_tokens, n),
    }
}

/// Lowers one configuration to its weighted dataflow IR.
///
/// Node ids are stable across the mixture templates ("rewriter", "encoder",
/// "retrieval", "reranker", "main_llm"), so a template pair shares its
/// deployed stages. When a rewriter is configured and `rewriter_prob < 1`,
/// the result is a two-graph mixture; otherwise a single graph.
pub fn lower(cfg: &AlgoConfig, profile: &WorkloadProfile) -> Result<RagIr, LowerError> {
    let report = validate_config(cfg);
    if !report.is_ok() {
        return Err(LowerError::InvalidConfig(report));
    }
    let report = validate_profile(profile);
    if !report.is_ok() {
        return Err(LowerError::InvalidProfile(report));
    }

    let num_rows = derived_num_rows(cfg, profile)?;
    let fetch_k = cfg
        .reranker
        .as_ref()
        .map_or(cfg.top_k, |r| r.rerank_candidates);
    if cfg.top_k > num_rows {
        return Err(LowerError::TopKExceedsRows {
            top_k: cfg.top_k,
            num_rows,
        });
    }
    if fetch_k > num_rows {
        return Err(LowerError::CandidatesExceedRows {
            candidates: fetch_k,
            num_rows,
        });
    }
    if let Some(IndexConfig::Ivf { nlist, .. }) = &cfg.index {
        if *nlist > num_rows {
            return Err(LowerError::NlistExceedsRows {
                nlist: *nlist,
                num_rows,
            });
        }
    }

    let iterations = derived_iterations(cfg);
    let bpt = profile.bytes_per_token;

    let template = |with_rewriter: bool| -> RequestGraph {
        let mut nodes = Vec::new();
        let mut edges = Vec::new();

        if with_rewriter {
            let rw = cfg
                .rewriter
                .as_ref()
                .expect("rewriter template requires a rewriter");
            nodes.push(Node::Model(ModelNode {
                id: "rewriter".into(),
                role: ModelRole::Rewriter,
                params: rw.params,
                arch: rw.arch,
                input_len: profile.query_tokens,
                output_len: rw.out_tokens,
                kv_cache_reuse: false,
                reused_tokens: 0,
            }));
            edges.push(Edge {
                from: "rewriter".into(),
                to: "encoder".into(),
                bytes: rw.out_tokens * bpt,
            });
        }

        nodes.push(Node::Model(ModelNode {
            id: "encoder".into(),
            role: ModelRole::Encoder,
            params: cfg.embedding_model.params,
            arch: None,
            input_len: profile.query_tokens,
            output_len: 0,
            kv_cache_reuse: false,
            reused_tokens: 0,
        }));
        edges.push(Edge {
            from: "encoder".into(),
            to: "retrieval".into(),
            bytes: cfg.embedding_model.dim * 4,
        });

        nodes.push(Node::Retrieval(RetrievalNode {
            id: "retrieval".into(),
            num_rows,
            dim: cfg.embedding_model.dim,
            top_k: fetch_k,
            quality_req: cfg.quality_req,
            index_config: cfg.index.clone(),
            speculative: cfg.speculative,
            iterations,
        }));

        let docs_to_llm = cfg.top_k * cfg.chunk_tokens * bpt;
        if let Some(rr) = &cfg.reranker {
            nodes.push(Node::Model(ModelNode {
                id: "reranker".into(),
                role: ModelRole::Reranker,
                params: rr.params,
                arch: rr.arch,
                input_len: profile.query_tokens + rr.rerank_candidates * cfg.chunk_tokens,
                output_len: 0,
                kv_cache_reuse: false,
                reused_tokens: 0,
            }));
            edges.push(Edge {
                from: "retrieval".into(),
                to: "reranker".into(),
                bytes: rr.rerank_candidates * cfg.chunk_tokens * bpt,
            });
            edges.push(Edge {
                from: "reranker".into(),
                to: "main_llm".into(),
                bytes: docs_to_llm,
            });
        } else {
            edges.push(Edge {
                from: "retrieval".into(),
                to: "main_llm".into(),
                bytes: docs_to_llm,
            });
        }

        let rewriter_tokens = if with_rewriter {
            cfg.rewriter.as_ref().unwrap().out_tokens
        } else {
            0
        };
        let context_tokens = cfg.top_k * cfg.chunk_tokens;
        let kv_insert = cfg.integration == Integration::KvCacheInsert;
        nodes.push(Node::Model(ModelNode {
            id: "main_llm".into(),
            role: ModelRole::MainLlm,
            params: cfg.main_llm.params,
            arch: cfg.main_llm.arch,
            input_len: profile.query_tokens + rewriter_tokens + context_tokens,
            output_len: cfg.main_llm.out_tokens,
            kv_cache_reuse: kv_insert,
            reused_tokens: if kv_insert { context_tokens } else { 0 },
        }));
        if with_rewriter {
            edges.push(Edge {
                from: "rewriter".into(),
                to: "main_llm".into(),
                bytes: rewriter_tokens * bpt,
            });
        }

        RequestGraph {
            name: if with_rewriter {
                "with-rewriter".into()
            } else {
                "direct".into()
            },
            nodes,
            edges,
            entry: if with_rewriter {
                "rewriter".into()
            } else {
                "encoder".into()
            },
            exits: BTreeSet::from(["main_llm".to_string()]),
        }
    };

    let graphs = match &cfg.rewriter {
        None => vec![WeightedGraph {
            weight: 1.0,
            graph: template(false),
        }],
        Some(_) if profile.rewriter_prob >= 1.0 => {
            vec![WeightedGraph {
                weight: 1.0,
                graph: template(true),
            }]
        }
        Some(_) if profile.rewriter_prob <= 0.0 => {
            vec![WeightedGraph {
                weight: 1.0,
                graph: template(false),
            }]
        }
        Some(_) => vec![
            WeightedGraph {
                weight: profile.rewriter_prob,
                graph: template(true),
            },
            WeightedGraph {
                weight: 1.0 - profile.rewriter_prob,
                graph: template(false),
            },
        ],
    };

    Ok(RagIr {
        schema: IR_SCHEMA.into(),
        name: format!("algo-{}", &cfg.config_key()[..12]),
        graphs,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::ir::validate;

    pub(crate) fn base_config() -> AlgoConfig {
        AlgoConfig {
            schema: ALGO_SCHEMA.into(),
            num_docs: 1000,
            chunk_tokens: 256,
            chunk_overlap: 51,
            embedding_model: EmbeddingSpec {
                id: "emb-small".into(),
                params: 100_000_000,
                dim: 128,
            },
            top_k: 8,
            quality_req: 0.9,
            rewriter: None,
            reranker: None,
            main_llm: MainLlmSpec {
                params: 7_000_000_000,
                arch: None,
                out_tokens: 256,
            },
            retrieval_frequency: RetrievalFrequency::Once,
            integration: Integration::Prompt,
            index: None,
            speculative: false,
            retrieval_method: RetrievalMethod::Vector,
            relevance_filtering: false,
        }
    }

    pub(crate) fn base_profile() -> WorkloadProfile {
        WorkloadProfile {
            schema: PROFILE_SCHEMA.into(),
            query_tokens: 64,
            rewriter_prob: 1.0,
            bytes_per_token: 2,
            doc_tokens: 1024,
        }
    }

    fn small_space() -> ConfigSpace {
        ConfigSpace {
            schema: SPACE_SCHEMA.into(),
            num_docs: vec![1000],
            chunk_tokens: vec![128, 256],
            chunk_overlap: vec![0],
            embedding_model: vec![EmbeddingSpec {
                id: "emb-small".into(),
                params: 100_000_000,
                dim: 128,
            }],
            top_k: vec![4, 8, 16],
            quality_req: vec![0.8, 0.95],
            rewriter: vec![None],
            reranker: vec![None],
            main_llm: vec![MainLlmSpec {
                params: 7_000_000_000,
                arch: None,
                out_tokens: 256,
            }],
            retrieval_frequency: vec![RetrievalFrequency::Once],
            integration: vec![Integration::Prompt],
            index: vec![None],
            speculative: vec![false],
        }
    }

    #[test]
    fn corpus_chunking_matches_hand_computation() {
        // 1000 docs of 1024 tokens, stride 256-51=205: ceil(1024/205)=5 rows
        // per doc.
        let rows = derived_num_rows(&base_config(), &base_profile()).unwrap();
        assert_eq!(rows, 5000);
    }

    #[test]
    fn iteration_count_matches_hand_computation() {
        let mut cfg = base_config();
        cfg.retrieval_frequency = RetrievalFrequency::EveryNTokens { n: 64 };
        assert_eq!(derived_iterations(&cfg), 4);
        cfg.retrieval_frequency = RetrievalFrequency::EveryNTokens { n: 100 };
        assert_eq!(derived_iterations(&cfg), 3);
        cfg.retrieval_frequency = RetrievalFrequency::Once;
        assert_eq!(derived_iterations(&cfg), 1);
    }

    #[test]
    fn lowered_ir_passes_validation() {
        let ir = lower(&base_config(), &base_profile()).unwrap();
        let report = validate(&ir);
        assert!(report.is_ok(), "{report}");
        assert_eq!(ir.graphs.len(), 1);
        assert_eq!(ir.graphs[0].graph.name, "direct");
    }

    #[test]
    fn main_llm_prompt_length_sums_query_rewrite_and_context() {
        let mut cfg = base_config();
        cfg.rewriter = Some(RewriterSpec {
            params: 1_000_000_000,
            arch: None,
            out_tokens: 32,
        });
        let ir = lower(&cfg, &base_profile()).unwrap();
        let g = &ir.graphs[0].graph;
        let llm = g
            .nodes
            .iter()
            .find_map(|n| n.as_model().filter(|m| m.role == ModelRole::MainLlm))
            .unwrap();
        assert_eq!(llm.input_len, 64 + 32 + 8 * 256);
    }

    #[test]
    fn rewriter_mixture_splits_by_probability() {
        let mut cfg = base_config();
        cfg.rewriter = Some(RewriterSpec {
            params: 1_000_000_000,
            arch: None,
            out_tokens: 32,
        });
        let mut profile = base_profile();
        profile.rewriter_prob = 0.25;
        let ir = lower(&cfg, &profile).unwrap();
        assert_eq!(ir.graphs.len(), 2);
        assert_eq!(ir.graphs[0].graph.name, "with-rewriter");
        assert_eq!(ir.graphs[0].weight, 0.25);
        assert_eq!(ir.graphs[1].graph.name, "direct");
        assert_eq!(ir.graphs[1].weight, 0.75);
        assert!(validate(&ir).is_ok());
        // The rewritten template is a diamond: rewriter feeds both the
        // encoder and the main-llm prompt.
        let g = &ir.graphs[0].graph;
        assert!(g
            .edges
            .iter()
            .any(|e| e.from == "rewriter" && e.to == "main_llm"));
        assert_eq!(g.entry, "rewriter");
    }

    #[test]
    fn reranker_widens_retrieval_fanout() {
        let mut cfg = base_config();
        cfg.reranker = Some(RerankerSpec {
            params: 300_000_000,
            arch: None,
            rerank_candidates: 50,
        });
        let ir = lower(&cfg, &base_profile()).unwrap();
        let g = &ir.graphs[0].graph;
        let retrieval = g.nodes.iter().find_map(|n| n.as_retrieval()).unwrap();
        assert_eq!(retrieval.top_k, 50);
        let llm = g
            .nodes
            .iter()
            .find_map(|n| n.as_model().filter(|m| m.role == ModelRole::MainLlm))
            .unwrap();
        assert_eq!(llm.input_len, 64 + 8 * 256);
    }

    #[test]
    fn kv_cache_insert_marks_reused_context() {
        let mut cfg = base_config();
        cfg.integration = Integration::KvCacheInsert;
        let ir = lower(&cfg, &base_profile()).unwrap();
        let llm = ir.graphs[0]
            .graph
            .nodes
            .iter()
            .find_map(|n| n.as_model().filter(|m| m.role == ModelRole::MainLlm))
            .unwrap();
        assert!(llm.kv_cache_reuse);
        assert_eq!(llm.reused_tokens, 8 * 256);
    }

    #[test]
    fn capacity_conflicts_are_named() {
        let mut cfg = base_config();
        cfg.top_k = 6000; // derived corpus is 5000 rows
        assert!(matches!(
            lower(&cfg, &base_profile()),
            Err(LowerError::TopKExceedsRows {
                top_k: 6000,
                num_rows: 5000
            })
        ));

        let mut cfg = base_config();
        cfg.reranker = Some(RerankerSpec {
            params: 300_000_000,
            arch: None,
            rerank_candidates: 5001,
        });
        assert!(matches!(
            lower(&cfg, &base_profile()),
            Err(LowerError::CandidatesExceedRows {
                candidates: 5001,
                ..
            })
        ));

        let mut cfg = base_config();
        cfg.index = Some(IndexConfig::Ivf {
            nlist: 8192,
            nprobe: 10,
        });
        assert!(matches!(
            lower(&cfg, &base_profile()),
            Err(LowerError::NlistExceedsRows { nlist: 8192, .. })
        ));
    }

    #[test]
    fn unsupported_knobs_are_rejected_by_name() {
        let mut cfg = base_config();
        cfg.retrieval_method = RetrievalMethod::Bm25;
        let report = validate_config(&cfg);
        assert!(report
            .violations
            .iter()
            .any(|v| v.path == "retrieval_method" && v.code == ViolationCode::UnsupportedKnob));

        let mut cfg = base_config();
        cfg.relevance_filtering = true;
        let report = validate_config(&cfg);
        assert!(report
            .violations
            .iter()
            .any(|v| v.path == "relevance_filtering" && v.code == ViolationCode::UnsupportedKnob));
    }

    #[test]
    fn enumeration_is_lexicographic_with_last_knob_fastest() {
        let mut space = small_space();
        space.chunk_tokens = vec![128, 256];
        space.top_k = vec![4, 8];
        space.quality_req = vec![0.9];
        let got: Vec<(u64, u64)> = space
            .enumerate()
            .map(|c| (c.chunk_tokens, c.top_k))
            .collect();
        assert_eq!(got, vec![(128, 4), (128, 8), (256, 4), (256, 8)]);
    }

    #[test]
    fn enumeration_count_matches_size_and_keys_are_distinct() {
        let space = small_space();
        let size = space.size();
        let keys: BTreeSet<String> = space.enumerate().map(|c| c.config_key()).collect();
        assert_eq!(BigUint::from(keys.len()), size);
    }

    #[test]
    fn config_at_agrees_with_enumeration() {
        let space = small_space();
        for (i, cfg) in space.enumerate().enumerate() {
            let by_index = space.config_at(&BigUint::from(i)).unwrap();
            assert_eq!(by_index, cfg);
        }
        assert!(space.config_at(&space.size()).is_none());
    }

    #[test]
    fn change_cost_classifies_and_is_symmetric() {
        let a = base_config();

        let mut b = a.clone();
        b.chunk_tokens = 128;
        assert_eq!(
            change_cost(&a, &b),
            ChangeCost {
                cheap: 0,
                medium: 0,
                rebuild: 1
            }
        );

        let mut b = a.clone();
        b.top_k = 16;
        b.quality_req = 0.5;
        assert_eq!(
            change_cost(&a, &b),
            ChangeCost {
                cheap: 1,
                medium: 1,
                rebuild: 0
            }
        );
        assert_eq!(change_cost(&a, &b), change_cost(&b, &a));

        assert_eq!(change_cost(&a, &a).total(), 0);
    }

    #[test]
    fn index_changes_split_kind_vs_parameter() {
        let mut a = base_config();
        a.index = Some(IndexConfig::Ivf {
            nlist: 100,
            nprobe: 10,
        });

        let mut b = a.clone();
        b.index = Some(IndexConfig::Ivf {
            nlist: 100,
            nprobe: 20,
        });
        assert_eq!(
            change_cost(&a, &b),
            ChangeCost {
                cheap: 0,
                medium: 1,
                rebuild: 0
            }
        );

        let mut b = a.clone();
        b.index = Some(IndexConfig::Flat);
        assert_eq!(
            change_cost(&a, &b),
            ChangeCost {
                cheap: 0,
                medium: 0,
                rebuild: 1
            }
        );

        let mut b = a.clone();
        b.index = None;
        assert_eq!(
            change_cost(&a, &b),
            ChangeCost {
                cheap: 0,
                medium: 0,
                rebuild: 1
            }
        );
    }

    #[test]
    fn space_validation_flags_empty_and_duplicate_domains() {
        let mut space = small_space();
        space.top_k = vec![];
        let report = validate_space(&space);
        assert!(report
            .violations
            .iter()
            .any(|v| v.path == "top_k" && v.code == ViolationCode::EmptyDomain));

        let mut space = small_space();
        space.quality_req = vec![0.9, 0.9];
        assert!(!validate_space(&space).is_ok());
    }

    #[test]
    fn config_documents_round_trip() {
        let cfg = base_config();
        let doc = serialize_config(&cfg);
        assert_eq!(load_config(&doc).unwrap(), cfg);

        let profile = base_profile();
        let doc = serialize_profile(&profile);
        assert_eq!(load_profile(&doc).unwrap(), profile);

        let space = small_space();
        let doc = serialize_space(&space);
        assert_eq!(load_space(&doc).unwrap(), space);
    }

    #[test]
    fn overlap_must_be_smaller_than_chunk() {
        let mut cfg = base_config();
        cfg.chunk_overlap = 256;
        assert!(matches!(
            lower(&cfg, &base_profile()),
            Err(LowerError::InvalidConfig(_))
        ));
    }

    #[test]
    fn config_key_is_stable_and_content_sensitive() {
        let a = base_config();
        assert_eq!(a.config_key(), a.config_key());
        let mut b = a.clone();
        b.top_k = 9;
        assert_ne!(a.config_key(), b.config_key());
        assert_eq!(a.config_key().len(), 64);
    }
}
