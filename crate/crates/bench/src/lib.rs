//! Shared fixtures for the benchmark targets.
//!
//! Everything is produced through the public lowering path so the
//! benchmarked inputs stay representative of what the CLI feeds the
//! estimator: a rewriter-mixture IR with an IVF index, a reranker and
//! iterative retrieval, plus a three-knob space for the search loops.

use ragplan_core::cost::{EstimateOptions, PlanOptions, SearchMode};
use ragplan_core::hw::{Device, HardwarePool, HW_SCHEMA};
use ragplan_core::ir::{IndexConfig, ModelArch, RagIr};
use ragplan_core::space::{
    lower, AlgoConfig, ConfigSpace, EmbeddingSpec, Integration, MainLlmSpec, RerankerSpec,
    RetrievalFrequency, RewriterSpec, WorkloadProfile, ALGO_SCHEMA, PROFILE_SCHEMA, SPACE_SCHEMA,
};

/// Eight interconnected accelerators of one kind.
pub fn pool() -> HardwarePool {
    HardwarePool {
        schema: HW_SCHEMA.to_string(),
        devices: vec![Device {
            id: "acc-a".into(),
            kind: "gpu".into(),
            peak_flops: 2.0e14,
            mem_bw: 1.0e12,
            mem_capacity: 8.0e10,
            cost_per_hour: 2.5,
            count: 8,
            efficiency: None,
        }],
        interconnect_bw: 1.0e11,
    }
}

pub fn profile() -> WorkloadProfile {
    WorkloadProfile {
        schema: PROFILE_SCHEMA.to_string(),
        query_tokens: 64,
        rewriter_prob: 0.35,
        bytes_per_token: 2,
        doc_tokens: 1024,
    }
}

/// A full-featured pipeline: rewriter, IVF retrieval re-probed during
/// generation, cross-encoder reranker and a 7B generator.
pub fn config() -> AlgoConfig {
    AlgoConfig {
        schema: ALGO_SCHEMA.to_string(),
        num_docs: 100_000,
        chunk_tokens: 128,
        chunk_overlap: 0,
        embedding_model: EmbeddingSpec {
            id: "emb-a".into(),
            params: 110_000_000,
            dim: 384,
        },
        top_k: 16,
        quality_req: 0.9,
        rewriter: Some(RewriterSpec {
            params: 1_000_000_000,
            arch: Some(ModelArch {
                n_layers: 16,
                d_model: 2048,
            }),
            out_tokens: 48,
        }),
        reranker: Some(RerankerSpec {
            params: 300_000_000,
            arch: Some(ModelArch {
                n_layers: 24,
                d_model: 1024,
            }),
            rerank_candidates: 128,
        }),
        main_llm: MainLlmSpec {
            params: 7_000_000_000,
            arch: Some(ModelArch {
                n_layers: 32,
                d_model: 4096,
            }),
            out_tokens: 256,
        },
        retrieval_frequency: RetrievalFrequency::EveryNTokens { n: 64 },
        integration: Integration::Prompt,
        index: Some(IndexConfig::Ivf {
            nlist: 1024,
            nprobe: 64,
        }),
        speculative: false,
        retrieval_method: Default::default(),
        relevance_filtering: false,
    }
}

pub fn ir() -> RagIr {
    lower(&config(), &profile()).expect("fixture config lowers")
}

pub fn plan(search: SearchMode, batch_cap: u32) -> PlanOptions<'static> {
    PlanOptions {
        ttft_slo: None,
        batch_cap,
        exhaustive_limit: 100_000,
        search,
        estimate: EstimateOptions::default(),
    }
}

/// 6 x 6 x 6 grid over context size, recall requirement and generator
/// scale; the remaining knobs are pinned.
pub fn space() -> ConfigSpace {
    let llm = |params: u64| MainLlmSpec {
        params,
        arch: None,
        out_tokens: 128,
    };
    ConfigSpace {
        schema: SPACE_SCHEMA.to_string(),
        num_docs: vec![2000],
        chunk_tokens: vec![128],
        chunk_overlap: vec![0],
        embedding_model: vec![EmbeddingSpec {
            id: "emb-a".into(),
            params: 110_000_000,
            dim: 384,
        }],
        top_k: vec![2, 4, 8, 16, 32, 64],
        quality_req: vec![0.8, 0.84, 0.88, 0.92, 0.96, 0.99],
        rewriter: vec![None],
        reranker: vec![None],
        main_llm: vec![
            llm(1_000_000_000),
            llm(2_000_000_000),
            llm(4_000_000_000),
            llm(7_000_000_000),
            llm(13_000_000_000),
            llm(30_000_000_000),
        ],
        retrieval_frequency: vec![RetrievalFrequency::Once],
        integration: vec![Integration::Prompt],
        index: vec![None],
        speculative: vec![false],
    }
}
