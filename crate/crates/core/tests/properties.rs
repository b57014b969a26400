//! Randomized behavioral properties of the public API: document round-trips,
//! enumeration integrity, frontier maintenance, cost-model identities, and
//! the greedy-vs-exhaustive placement guarantee.

use proptest::collection::vec;
use proptest::prelude::*;
use ragplan_core::cost::{
    estimate, map_resources, CostConstants, EstimateOptions, NodeCost, PlaceError, PlanOptions,
    SearchMode,
};
use ragplan_core::cost::{DeviceAssignment, Placement};
use ragplan_core::explore::{
    dominates_directed, Direction, EvaluatedPoint, ObjectiveSpec, ParetoSet,
};
use ragplan_core::hw::{load_pool, pool_cost, serialize_pool, Device, HardwarePool, HW_SCHEMA};
use ragplan_core::ir::{
    self, Edge, IndexConfig, IrParseError, ModelArch, ModelNode, ModelRole, Node, RagIr,
    RequestGraph, RetrievalNode, WeightedGraph, IR_SCHEMA,
};
use ragplan_core::quality::{
    eval_table, QualityError, QualityScore, QualitySource, QualityTable, SyntheticSurface,
};
use ragplan_core::space::{
    change_cost, load_config, load_profile, load_space, lower, serialize_config, serialize_profile,
    serialize_space, AlgoConfig, ConfigSpace, EmbeddingSpec, Integration, MainLlmSpec,
    RerankerSpec, RetrievalFrequency, RewriterSpec, ALGO_SCHEMA, PROFILE_SCHEMA, SPACE_SCHEMA,
};
use ragplan_core::space::{RetrievalMethod, WorkloadProfile};
use std::collections::{BTreeMap, BTreeSet};

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs())
}

// ---------------------------------------------------------------- fixtures

fn profile() -> WorkloadProfile {
    WorkloadProfile {
        schema: PROFILE_SCHEMA.into(),
        query_tokens: 64,
        rewriter_prob: 1.0,
        bytes_per_token: 2,
        doc_tokens: 1024,
    }
}

fn arb_arch() -> impl Strategy<Value = Option<ModelArch>> {
    prop_oneof![
        2 => Just(None),
        3 => (1u64..=40, 64u64..=2048)
            .prop_map(|(n_layers, d_model)| Some(ModelArch { n_layers, d_model })),
    ]
}

fn arb_rewriter() -> impl Strategy<Value = Option<RewriterSpec>> {
    prop_oneof![
        2 => Just(None),
        1 => (1_000_000u64..=500_000_000, arb_arch(), 8u64..=128).prop_map(
            |(params, arch, out_tokens)| Some(RewriterSpec { params, arch, out_tokens })
        ),
    ]
}

prop_compose! {
    /// A configuration that passes validation and lowers cleanly under the
    /// fixed test profile (top_k and rerank_candidates stay far below the
    /// derived corpus size).
    fn arb_config()(
        num_docs in 50u64..=2000,
        chunk_tokens in 64u64..=512,
        overlap_num in 0u64..=3,
        emb_params in 1_000_000u64..=500_000_000,
        dim in 16u64..=512,
        top_k in 1u64..=16,
        quality_req in 0.5f64..=0.99,
        llm_params in 100_000_000u64..=20_000_000_000,
        llm_arch in arb_arch(),
        out_tokens in 1u64..=512,
        every_n in prop::option::of(8u64..=128),
        kv_insert in any::<bool>(),
        speculative in any::<bool>(),
        rewriter in arb_rewriter(),
        reranker in prop::option::of((1_000_000u64..=500_000_000, arb_arch(), 0u64..=32)),
    ) -> AlgoConfig {
        AlgoConfig {
            schema: ALGO_SCHEMA.into(),
            num_docs,
            chunk_tokens,
            chunk_overlap: chunk_tokens / 4 * overlap_num.min(3) / 3,
            embedding_model: EmbeddingSpec { id: "emb".into(), params: emb_params, dim },
            top_k,
            quality_req,
            rewriter,
            reranker: reranker.map(|(params, arch, extra)| RerankerSpec {
                params,
                arch,
                rerank_candidates: top_k + extra,
            }),
            main_llm: MainLlmSpec { params: llm_params, arch: llm_arch, out_tokens },
            retrieval_frequency: match every_n {
                None => RetrievalFrequency::Once,
                Some(n) => RetrievalFrequency::EveryNTokens { n },
            },
            integration: if kv_insert { Integration::KvCacheInsert } else { Integration::Prompt },
            index: None,
            speculative,
            retrieval_method: RetrievalMethod::Vector,
            relevance_filtering: false,
        }
    }
}

fn arb_device(id: &'static str, ample: bool) -> impl Strategy<Value = Device> {
    (
        1e12f64..=1e15,
        1e11f64..=1e13,
        0.5f64..=8.0,
        1u32..=3,
        prop::option::of(0.3f64..=1.0),
    )
        .prop_map(
            move |(peak_flops, mem_bw, cost_per_hour, count, efficiency)| Device {
                id: id.into(),
                kind: "gpu".into(),
                peak_flops,
                mem_bw,
                mem_capacity: if ample { 1e18 } else { 1e11 },
                cost_per_hour,
                count,
                efficiency,
            },
        )
}

prop_compose! {
    /// One ample device plus an optional second, so every three-stage chain
    /// is placeable and the option count stays under a thousand.
    fn arb_pool()(
        first in arb_device("dev-a", true),
        second in prop::option::of(arb_device("dev-b", false)),
        interconnect_bw in 1e9f64..=1e11,
    ) -> HardwarePool {
        let mut first = first;
        first.count = first.count.max(3);
        let mut devices = vec![first];
        devices.extend(second);
        HardwarePool { schema: HW_SCHEMA.into(), devices, interconnect_bw }
    }
}

prop_compose! {
    /// An encoder -> retrieval -> main-llm chain built directly, bypassing
    /// lowering, so node parameters can range freely. The index selector and
    /// fraction pair map onto {derived, flat, ivf} with nlist <= min(rows, 64)
    /// and 1 <= nprobe <= nlist.
    fn arb_chain_ir()(
        enc_params in 1_000_000u64..=500_000_000,
        input_len in 16u64..=2048,
        num_rows in 100u64..=100_000,
        dim in 16u64..=512,
        top_k in 1u64..=32,
        iterations in 1u64..=8,
        speculative in any::<bool>(),
        llm_params in 100_000_000u64..=20_000_000_000,
        llm_arch in arb_arch(),
        output_len in 1u64..=512,
        reuse in prop::option::of(0u64..=16),
        edge_a in 0u64..=1_000_000,
        edge_b in 0u64..=1_000_000,
        index_sel in 0u32..3,
        nlist_frac in 0.0f64..=1.0,
        nprobe_frac in 0.0f64..=1.0,
    ) -> RagIr {
        let max_nlist = num_rows.min(64);
        let nlist = 1 + (nlist_frac * (max_nlist - 1) as f64) as u64;
        let nprobe = 1 + (nprobe_frac * (nlist - 1) as f64) as u64;
        let index = match index_sel {
            0 => None,
            1 => Some(IndexConfig::Flat),
            _ => Some(IndexConfig::Ivf { nlist, nprobe }),
        };
        let graph = RequestGraph {
            name: "direct".into(),
            nodes: vec![
                Node::Model(ModelNode {
                    id: "encoder".into(),
                    role: ModelRole::Encoder,
                    params: enc_params,
                    arch: None,
                    input_len,
                    output_len: 0,
                    kv_cache_reuse: false,
                    reused_tokens: 0,
                }),
                Node::Retrieval(RetrievalNode {
                    id: "retrieval".into(),
                    num_rows,
                    dim,
                    top_k,
                    quality_req: 0.9,
                    index_config: index,
                    speculative,
                    iterations,
                }),
                Node::Model(ModelNode {
                    id: "main_llm".into(),
                    role: ModelRole::MainLlm,
                    params: llm_params,
                    arch: llm_arch,
                    input_len,
                    output_len,
                    kv_cache_reuse: reuse.is_some(),
                    reused_tokens: reuse.unwrap_or(0).min(input_len),
                }),
            ],
            edges: vec![
                Edge { from: "encoder".into(), to: "retrieval".into(), bytes: edge_a },
                Edge { from: "retrieval".into(), to: "main_llm".into(), bytes: edge_b },
            ],
            entry: "encoder".into(),
            exits: BTreeSet::from(["main_llm".to_string()]),
        };
        RagIr {
            schema: IR_SCHEMA.into(),
            name: "chain".into(),
            graphs: vec![WeightedGraph { weight: 1.0, graph }],
        }
    }
}

/// Every stage on the pool's first device, one unit each.
fn place_on_first(ir: &RagIr, pool: &HardwarePool, batch: u32) -> Placement {
    let device = pool.devices[0].id.clone();
    let assignment = ragplan_core::cost::stage_ids(ir)
        .into_iter()
        .map(|id| {
            (
                id,
                DeviceAssignment {
                    device: device.clone(),
                    units: 1,
                },
            )
        })
        .collect();
    Placement {
        assignment,
        batch_size: batch,
    }
}

// ----------------------------------------------------- document round-trips

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn config_documents_round_trip(cfg in arb_config()) {
        let text = serialize_config(&cfg);
        let back = load_config(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(serialize_config(&back), text);

        let prof = profile();
        let text = serialize_profile(&prof);
        prop_assert_eq!(load_profile(&text).unwrap(), prof);
    }

    #[test]
    fn ir_documents_round_trip_and_reject_schema_corruption(cfg in arb_config()) {
        let ir = lower(&cfg, &profile()).unwrap();
        let text = ir::serialize(&ir);
        let back = ir::deserialize(&text).unwrap();
        prop_assert_eq!(&back, &ir);
        prop_assert_eq!(&ir::serialize(&back), &text);

        let corrupted = text.replace(IR_SCHEMA, "rag-ir/999");
        let rejected = matches!(
            ir::deserialize(&corrupted),
            Err(IrParseError::SchemaVersion { .. })
        );
        prop_assert!(rejected);
    }

    #[test]
    fn lowered_irs_pass_validation(cfg in arb_config()) {
        let ir = lower(&cfg, &profile()).unwrap();
        let report = ir::validate(&ir);
        prop_assert!(report.is_ok(), "lowered IR failed validation:\n{}", report);
    }

    #[test]
    fn pool_documents_round_trip_and_cost_is_linear(
        pool in arb_pool(),
        units_a in vec(0u32..=2, 2),
        units_b in vec(0u32..=1, 2),
    ) {
        let text = serialize_pool(&pool);
        let back = load_pool(&text).unwrap();
        prop_assert_eq!(&back, &pool);
        prop_assert_eq!(serialize_pool(&back), text);

        // Linearity: billing a merged allocation equals the sum of billing
        // its parts, as long as the merge stays within device counts.
        let mut a = BTreeMap::new();
        let mut b = BTreeMap::new();
        let mut merged = BTreeMap::new();
        for (i, d) in pool.devices.iter().enumerate() {
            let ua = units_a[i].min(d.count);
            let ub = units_b[i].min(d.count - ua.min(d.count));
            if ua > 0 { a.insert(d.id.clone(), ua); }
            if ub > 0 { b.insert(d.id.clone(), ub); }
            if ua + ub > 0 { merged.insert(d.id.clone(), ua + ub); }
        }
        let lhs = pool_cost(&pool, &merged).unwrap();
        let rhs = pool_cost(&pool, &a).unwrap() + pool_cost(&pool, &b).unwrap();
        prop_assert!(rel_close(lhs, rhs, 1e-12), "{lhs} vs {rhs}");
    }
}

// -------------------------------------------------------- space enumeration

prop_compose! {
    fn arb_space()(
        num_docs in prop::collection::btree_set(100u64..=2000, 1..=2),
        chunk_tokens in prop::collection::btree_set(64u64..=512, 1..=2),
        top_k in prop::collection::btree_set(1u64..=16, 1..=3),
        quality_req in prop::collection::btree_set(1u32..=99, 1..=3),
        llm_params in prop::collection::btree_set(100_000_000u64..=20_000_000_000, 1..=3),
        speculative in prop_oneof![Just(vec![false]), Just(vec![false, true])],
    ) -> ConfigSpace {
        ConfigSpace {
            schema: SPACE_SCHEMA.into(),
            num_docs: num_docs.into_iter().collect(),
            chunk_tokens: chunk_tokens.into_iter().collect(),
            chunk_overlap: vec![0],
            embedding_model: vec![EmbeddingSpec { id: "emb".into(), params: 100_000_000, dim: 128 }],
            top_k: top_k.into_iter().collect(),
            quality_req: quality_req.into_iter().map(|q| f64::from(q) / 100.0).collect(),
            rewriter: vec![None],
            reranker: vec![None],
            main_llm: llm_params
                .into_iter()
                .map(|params| MainLlmSpec { params, arch: None, out_tokens: 128 })
                .collect(),
            retrieval_frequency: vec![RetrievalFrequency::Once],
            integration: vec![Integration::Prompt],
            index: vec![None],
            speculative,
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn enumeration_is_complete_distinct_and_invertible(space in arb_space()) {
        let size = space.size();
        let configs: Vec<AlgoConfig> = space.enumerate().collect();
        prop_assert_eq!(num_bigint::BigUint::from(configs.len()), size);

        let keys: BTreeSet<String> = configs.iter().map(|c| c.config_key()).collect();
        prop_assert_eq!(keys.len(), configs.len(), "config keys collide");

        for (i, cfg) in configs.iter().enumerate() {
            let index = space.index_of(cfg).expect("enumerated config indexes back");
            prop_assert_eq!(index, num_bigint::BigUint::from(i));
        }

        let text = serialize_space(&space);
        let back = load_space(&text).unwrap();
        prop_assert_eq!(back, space);
    }

    #[test]
    fn change_cost_is_symmetric_and_zero_on_identity(
        a in arb_config(),
        b in arb_config(),
    ) {
        prop_assert_eq!(change_cost(&a, &b), change_cost(&b, &a));
        prop_assert_eq!(change_cost(&a, &a).total(), 0);
        prop_assert_eq!(change_cost(&b, &b).total(), 0);
    }
}

// ------------------------------------------------------ frontier invariants

fn dummy_point(key: String, objectives: Vec<f64>) -> EvaluatedPoint {
    let perf = ragplan_core::cost::PerfEstimate {
        ttft_s: 0.0,
        tpot_s: 0.0,
        rps: 0.0,
        req_per_dollar: 0.0,
        pool_cost_per_hour: 0.0,
        per_stage: BTreeMap::new(),
        placement: Placement {
            assignment: BTreeMap::new(),
            batch_size: 1,
        },
        warnings: Vec::new(),
    };
    EvaluatedPoint {
        config_key: key,
        config: AlgoConfig {
            schema: ALGO_SCHEMA.into(),
            num_docs: 1,
            chunk_tokens: 64,
            chunk_overlap: 0,
            embedding_model: EmbeddingSpec {
                id: "emb".into(),
                params: 1,
                dim: 1,
            },
            top_k: 1,
            quality_req: 0.9,
            rewriter: None,
            reranker: None,
            main_llm: MainLlmSpec {
                params: 1,
                arch: None,
                out_tokens: 1,
            },
            retrieval_frequency: RetrievalFrequency::Once,
            integration: Integration::Prompt,
            index: None,
            speculative: false,
            retrieval_method: RetrievalMethod::Vector,
            relevance_filtering: false,
        },
        quality: QualityScore {
            value: 0.5,
            source: QualitySource::Synthetic,
        },
        perf,
        objectives,
    }
}

fn arb_objective_stream() -> impl Strategy<Value = (ObjectiveSpec, Vec<Vec<f64>>)> {
    use ragplan_core::explore::{PerfMetric, PerfObjective};
    let spec2 = ObjectiveSpec::default();
    let spec3 = ObjectiveSpec {
        perf: vec![
            PerfObjective {
                metric: PerfMetric::ReqPerDollar,
                direction: Direction::Maximize,
            },
            PerfObjective {
                metric: PerfMetric::Ttft,
                direction: Direction::Minimize,
            },
        ],
    };
    prop_oneof![Just(spec2), Just(spec3)].prop_flat_map(|spec| {
        let arity = spec.arity();
        // A handful of discrete levels per axis provokes plenty of exact
        // ties and duplicate vectors.
        let coord = (0u32..=5).prop_map(f64::from);
        let point = vec(coord, arity);
        vec(point, 1..40).prop_map(move |points| (spec.clone(), points))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn frontier_updates_preserve_mutual_non_dominance(
        (spec, stream) in arb_objective_stream(),
    ) {
        let mut frontier = ParetoSet::default();
        for (i, objectives) in stream.into_iter().enumerate() {
            frontier.update(dummy_point(format!("p{i}"), objectives), &spec).unwrap();
            prop_assert!(frontier.is_consistent(&spec));
        }
    }

    #[test]
    fn frontier_is_insertion_order_insensitive(
        (spec, stream) in arb_objective_stream(),
        seed in any::<u64>(),
    ) {
        let forward: Vec<EvaluatedPoint> = stream
            .iter()
            .enumerate()
            .map(|(i, o)| dummy_point(format!("p{i}"), o.clone()))
            .collect();

        // A deterministic shuffle driven by the seed.
        let mut shuffled = forward.clone();
        let mut state = seed;
        for i in (1..shuffled.len()).rev() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let j = (state >> 33) as usize % (i + 1);
            shuffled.swap(i, j);
        }

        let mut a = ParetoSet::default();
        for p in forward {
            a.update(p, &spec).unwrap();
        }
        let mut b = ParetoSet::default();
        for p in shuffled {
            b.update(p, &spec).unwrap();
        }
        let keys_a: BTreeSet<&String> = a.points.iter().map(|p| &p.config_key).collect();
        let keys_b: BTreeSet<&String> = b.points.iter().map(|p| &p.config_key).collect();
        prop_assert_eq!(keys_a, keys_b);
    }

    #[test]
    fn frontier_members_are_never_dominated_by_history(
        (spec, stream) in arb_objective_stream(),
    ) {
        let dirs = spec.directions();
        let points: Vec<EvaluatedPoint> = stream
            .iter()
            .enumerate()
            .map(|(i, o)| dummy_point(format!("p{i}"), o.clone()))
            .collect();
        let mut frontier = ParetoSet::default();
        for p in &points {
            frontier.update(p.clone(), &spec).unwrap();
        }
        for member in &frontier.points {
            for p in &points {
                prop_assert!(!dominates_directed(&p.objectives, &member.objectives, &dirs));
            }
        }
    }
}

// ------------------------------------------------------ cost-model identities

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn roofline_is_the_defining_time_contract(
        flops in 0.0f64..=1e18,
        mem_bytes in 0.0f64..=1e15,
        peak in 1e9f64..=1e16,
        bw in 1e8f64..=1e13,
        efficiency in prop::option::of(0.05f64..=1.0),
    ) {
        let device = Device {
            id: "d".into(),
            kind: "gpu".into(),
            peak_flops: peak,
            mem_bw: bw,
            mem_capacity: 1e12,
            cost_per_hour: 1.0,
            count: 1,
            efficiency,
        };
        let constants = CostConstants::default();
        let cost = NodeCost::roofline(flops, mem_bytes, 0.0, &device, &constants);
        let eff = efficiency.unwrap_or(constants.efficiency);
        let expected = f64::max(flops / peak, mem_bytes / bw);
        prop_assert_eq!(cost.time_s, expected * (1.0 / eff));
        prop_assert!(rel_close(cost.time_s * eff, expected, 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn mixture_metrics_are_weight_linear(
        cfg in arb_config(),
        pool in arb_pool(),
        w_percent in 1u32..=99,
    ) {
        // Force a two-graph mixture: a rewriter must exist and requests
        // must split between the two templates.
        let mut cfg = cfg;
        if cfg.rewriter.is_none() {
            cfg.rewriter = Some(RewriterSpec { params: 50_000_000, arch: None, out_tokens: 32 });
        }
        let mut prof = profile();
        prof.rewriter_prob = f64::from(w_percent) / 100.0;
        let ir = lower(&cfg, &prof).unwrap();
        prop_assert_eq!(ir.graphs.len(), 2);

        // The mixture can deploy up to five stages; give the hosting device
        // enough units for one each.
        let mut pool = pool;
        let stage_count = ragplan_core::cost::stage_ids(&ir).len() as u32;
        pool.devices[0].count = pool.devices[0].count.max(stage_count);

        let placement = place_on_first(&ir, &pool, 2);
        let opts = EstimateOptions::default();
        let mixed = estimate(&ir, &pool, &placement, &opts).unwrap();

        let mut parts = Vec::new();
        for wg in &ir.graphs {
            let single = RagIr {
                schema: ir.schema.clone(),
                name: ir.name.clone(),
                graphs: vec![WeightedGraph { weight: 1.0, graph: wg.graph.clone() }],
            };
            let est = estimate(&single, &pool, &placement, &opts).unwrap();
            parts.push((wg.weight, est));
        }
        let ttft: f64 = parts.iter().map(|(w, e)| w * e.ttft_s).sum();
        let tpot: f64 = parts.iter().map(|(w, e)| w * e.tpot_s).sum();
        prop_assert!(rel_close(mixed.ttft_s, ttft, 1e-12), "{} vs {}", mixed.ttft_s, ttft);
        prop_assert!(rel_close(mixed.tpot_s, tpot, 1e-12), "{} vs {}", mixed.tpot_s, tpot);
    }

    #[test]
    fn req_per_dollar_matches_rps_over_pool_cost(
        ir in arb_chain_ir(),
        pool in arb_pool(),
        batch in 1u32..=8,
    ) {
        let placement = place_on_first(&ir, &pool, batch);
        let est = estimate(&ir, &pool, &placement, &EstimateOptions::default()).unwrap();
        let cost = pool_cost(&pool, &placement.allocation()).unwrap();
        prop_assert_eq!(est.pool_cost_per_hour, cost);
        prop_assert!(cost > 0.0);
        prop_assert!(
            rel_close(est.req_per_dollar * cost, est.rps * 3600.0, 1e-12),
            "{} vs {}",
            est.req_per_dollar * cost,
            est.rps * 3600.0
        );
    }

    #[test]
    fn greedy_placement_never_loses_to_exhaustive(
        ir in arb_chain_ir(),
        pool in arb_pool(),
        slo_exp in prop::option::of(-4i32..=1),
    ) {
        let ttft_slo = slo_exp.map(|e| 10f64.powi(e));
        let mk_opts = |search| PlanOptions {
            ttft_slo,
            batch_cap: 2,
            search,
            ..Default::default()
        };

        // Bound the instance so exhaustive stays under the property's
        // option budget: 3 stages, <= 6 units total, 2 batch sizes.
        let per_stage: u64 = pool.devices.iter().map(|d| u64::from(d.count)).sum();
        let options = 2 * per_stage.pow(3);
        prop_assert!(options <= 1000, "generator produced {options} options");

        let exhaustive = map_resources(&ir, &pool, &mk_opts(SearchMode::Exhaustive));
        let greedy = map_resources(&ir, &pool, &mk_opts(SearchMode::Greedy));
        match (exhaustive, greedy) {
            (Ok(ex), Ok(gr)) => {
                if ex.slo_met {
                    prop_assert!(gr.slo_met, "greedy missed an attainable SLO");
                    prop_assert!(
                        gr.estimate.rps >= ex.estimate.rps,
                        "greedy rps {} < exhaustive rps {}",
                        gr.estimate.rps,
                        ex.estimate.rps
                    );
                } else {
                    prop_assert!(!gr.slo_met);
                    prop_assert!(
                        gr.estimate.ttft_s <= ex.estimate.ttft_s,
                        "greedy ttft {} > exhaustive ttft {}",
                        gr.estimate.ttft_s,
                        ex.estimate.ttft_s
                    );
                }
            }
            (Err(PlaceError::NoFeasible), Err(PlaceError::NoFeasible)) => {}
            (Err(PlaceError::Oversized(_)), Err(PlaceError::Oversized(_))) => {}
            (ex, gr) => prop_assert!(false, "search modes disagree: {ex:?} vs {gr:?}"),
        }
    }
}

// ----------------------------------------------------------- quality surface

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn synthetic_quality_is_deterministic_and_bounded(
        seed in any::<u64>(),
        cfg in arb_config(),
    ) {
        let surface = SyntheticSurface::from_seed(seed);
        let a = surface.eval(&cfg);
        let b = SyntheticSurface::from_seed(seed).eval(&cfg);
        prop_assert_eq!(a, b);
        prop_assert!(a.value > 0.0 && a.value < 1.0);
    }

    #[test]
    fn quality_table_lookups_are_verbatim(
        cfg in arb_config(),
        value_percent in 0u32..=100,
    ) {
        let value = f64::from(value_percent) / 100.0;
        let table = QualityTable::from_entries(vec![(cfg.config_key(), value)]).unwrap();
        let score = eval_table(&table, &cfg).unwrap();
        prop_assert_eq!(score.value, value);
        prop_assert_eq!(score.source, QualitySource::Table);

        let mut other = cfg.clone();
        other.top_k += 1;
        let missed = matches!(eval_table(&table, &other), Err(QualityError::Miss { .. }));
        prop_assert!(missed);
    }
}
