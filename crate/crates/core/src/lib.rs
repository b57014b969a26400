//! Planning toolkit for retrieval-augmented LLM serving.
//!
//! The pipeline is: describe a configuration space of RAG pipelines
//! ([`space`]), lower a configuration to a weighted dataflow IR ([`ir`]),
//! price the IR on a hardware pool with a roofline cost model ([`cost`]),
//! attach a quality score ([`quality`]), and search the space for the
//! quality/performance Pareto frontier ([`explore`]).

pub mod canon;
pub mod cost;
pub mod explore;
pub mod hw;
pub mod ir;
pub mod quality;
pub mod runcfg;
pub mod space;
pub mod violation;

pub use cost::{
    estimate, map_resources, CostConstants, EstimateOptions, NodeCost, PerfEstimate, Placement,
    PlanOptions, SearchMode,
};
pub use explore::{
    explore, EvolutionParams, ExploreOutcome, ObjectiveSpec, ParetoDocument, ParetoSet,
    QualityEvaluator, Strategy,
};
pub use hw::{load_pool, Device, HardwarePool};
pub use ir::{RagIr, RequestGraph};
pub use quality::{QualityScore, QualityTable, SyntheticSurface};
pub use runcfg::{load_run_config, validate_run_config, RunConfig};
pub use space::{lower, AlgoConfig, ConfigSpace, WorkloadProfile};
