//! Command-line front end: compile configs to IR, estimate placements,
//! explore spaces, render reports.
//!
//! Exit codes: 0 success, 2 input error (bad flags, unparsable or invalid
//! documents), 3 infeasible (no placement fits, or every placement misses
//! the TTFT target). All output is deterministic for fixed inputs and
//! flags; log level comes from `RAGPLAN_LOG`.

use clap::{Parser, Subcommand, ValueEnum};
use ragplan_core::cost::{CalibrationTable, PlaceError, RecallTable};
use ragplan_core::explore::{
    explore, Direction, EvaluatedPoint, ObjectiveSpec, ParetoDocument, PerfMetric, PerfObjective,
    QualityEvaluator, Strategy,
};
use ragplan_core::hw::load_pool;
use ragplan_core::quality::{QualityTable, SyntheticSurface};
use ragplan_core::runcfg::{load_run_config, validate_run_config, RunConfig};
use ragplan_core::space::{load_config, load_profile, load_space, lower};
use ragplan_core::{cost, ir, PerfEstimate, PlanOptions};
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ragplan",
    version,
    about = "Plan RAG pipelines against hardware pools"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Lower an algorithm configuration into its request-graph IR.
    Compile {
        /// Algorithm configuration document (rag-algo/1).
        config: PathBuf,
        /// Workload profile document (rag-profile/1).
        profile: PathBuf,
        /// Output path; `-` writes to stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Search placements for an IR on a pool and print the best estimate.
    Estimate {
        /// IR document (rag-ir/1).
        ir: PathBuf,
        /// Hardware pool document (rag-hw/1).
        hw: PathBuf,
        /// Run-config document (rag-cm/1) with constants, SLO and seeds.
        #[arg(long)]
        run_config: Option<PathBuf>,
        /// Output path; `-` writes to stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Explore a configuration space and emit the frontier plus trace.
    Explore {
        /// Configuration space document (rag-space/1).
        space: PathBuf,
        /// Hardware pool document (rag-hw/1).
        hw: PathBuf,
        /// Workload profile document (rag-profile/1).
        profile: PathBuf,
        /// Iteration budget.
        #[arg(long)]
        iters: u64,
        /// Candidate generator: grid, random or evolutionary.
        #[arg(long)]
        strategy: String,
        /// Overrides the run-config exploration seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Measured quality CSV (`config_key,quality`); defaults to the
        /// synthetic surface seeded by the run-config quality_seed.
        #[arg(long)]
        quality_table: Option<PathBuf>,
        /// Performance objectives, e.g. `req_per_dollar` or `rps:max,ttft:min`;
        /// quality is always the first, maximized objective.
        #[arg(long)]
        objectives: Option<String>,
        /// Run-config document (rag-cm/1).
        #[arg(long)]
        run_config: Option<PathBuf>,
        /// Output path; `-` writes to stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
    /// Render a saved exploration result as CSV or SVG.
    Report {
        /// Exploration result document (rag-pareto/1).
        pareto: PathBuf,
        #[arg(long, value_enum)]
        format: ReportFormat,
        /// Output path; `-` writes to stdout.
        #[arg(long, default_value = "-")]
        out: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReportFormat {
    Csv,
    Svg,
}

enum CliError {
    /// Unreadable, unparsable or invalid inputs.
    Input(String),
    /// Valid inputs that no placement can satisfy.
    Infeasible(String),
}

impl CliError {
    fn input(message: impl Into<String>) -> CliError {
        CliError::Input(message.into())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Infeasible(m) => m,
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RAGPLAN_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("ragplan: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Compile {
            config,
            profile,
            out,
        } => cmd_compile(&config, &profile, &out),
        Command::Estimate {
            ir,
            hw,
            run_config,
            out,
        } => cmd_estimate(&ir, &hw, run_config.as_deref(), &out),
        Command::Explore {
            space,
            hw,
            profile,
            iters,
            strategy,
            seed,
            quality_table,
            objectives,
            run_config,
            out,
        } => cmd_explore(ExploreArgs {
            space: &space,
            hw: &hw,
            profile: &profile,
            iters,
            strategy: &strategy,
            seed,
            quality_table: quality_table.as_deref(),
            objectives: objectives.as_deref(),
            run_config: run_config.as_deref(),
            out: &out,
        }),
        Command::Report {
            pareto,
            format,
            out,
        } => cmd_report(&pareto, format, &out),
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn write_out(out: &str, content: &str) -> Result<(), CliError> {
    if out == "-" {
        std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(|e| CliError::input(format!("stdout: {e}")))
    } else {
        std::fs::write(out, content).map_err(|e| CliError::input(format!("{out}: {e}")))
    }
}

// ------------------------------------------------------------------ compile

fn cmd_compile(config: &Path, profile: &Path, out: &str) -> Result<(), CliError> {
    let cfg = load_config(&read_file(config)?)
        .map_err(|e| CliError::input(format!("{}: {e}", config.display())))?;
    let prof = load_profile(&read_file(profile)?)
        .map_err(|e| CliError::input(format!("{}: {e}", profile.display())))?;
    let ir = lower(&cfg, &prof).map_err(|e| CliError::input(e.to_string()))?;
    write_out(out, &ir::serialize(&ir))
}

// ----------------------------------------------------------------- estimate

/// A run-config with its referenced lookup tables loaded, the borrows of
/// which feed [`PlanOptions`].
struct Session {
    run: RunConfig,
    calibration: Option<CalibrationTable>,
    recall: Option<RecallTable>,
}

impl Session {
    fn load(path: Option<&Path>) -> Result<Session, CliError> {
        let run = match path {
            None => RunConfig::default(),
            Some(p) => {
                let run = load_run_config(&read_file(p)?)
                    .map_err(|e| CliError::input(format!("{}: {e}", p.display())))?;
                let report = validate_run_config(&run);
                if !report.is_ok() {
                    return Err(CliError::input(format!(
                        "{}: invalid run-config:\n{report}",
                        p.display()
                    )));
                }
                run
            }
        };
        let calibration = match &run.calibration {
            None => None,
            Some(cal) => {
                // Relative calibration paths resolve against the run-config
                // file's directory, not the working directory.
                let base = path.and_then(Path::parent).unwrap_or(Path::new(""));
                let table_path = base.join(&cal.path);
                let text = read_file(&table_path)?;
                let table = cost::load_calibration(&text, cal.mode)
                    .map_err(|e| CliError::input(format!("{}: {e}", table_path.display())))?;
                Some(table)
            }
        };
        let recall = run
            .build_recall_table()
            .map_err(|e| CliError::input(format!("recall_table: {e}")))?;
        Ok(Session {
            run,
            calibration,
            recall,
        })
    }

    fn plan_options(&self) -> PlanOptions<'_> {
        PlanOptions {
            ttft_slo: self.run.ttft_slo,
            batch_cap: self.run.batch_cap,
            exhaustive_limit: self.run.exhaustive_limit,
            search: cost::SearchMode::Auto,
            estimate: cost::EstimateOptions {
                constants: self.run.constants,
                calibration: self.calibration.as_ref(),
                recall_table: self.recall.as_ref(),
                strict: self.run.strict,
            },
        }
    }
}

fn cmd_estimate(
    ir_path: &Path,
    hw: &Path,
    run_config: Option<&Path>,
    out: &str,
) -> Result<(), CliError> {
    let ir = ir::deserialize(&read_file(ir_path)?)
        .map_err(|e| CliError::input(format!("{}: {e}", ir_path.display())))?;
    let report = ir::validate(&ir);
    if !report.is_ok() {
        return Err(CliError::input(format!(
            "{}: invalid IR:\n{report}",
            ir_path.display()
        )));
    }
    let pool = load_pool(&read_file(hw)?)
        .map_err(|e| CliError::input(format!("{}: {e}", hw.display())))?;
    let session = Session::load(run_config)?;
    let opts = session.plan_options();

    let outcome = cost::map_resources(&ir, &pool, &opts).map_err(|e| match e {
        PlaceError::Oversized(_) | PlaceError::NoFeasible => CliError::Infeasible(e.to_string()),
        other => CliError::input(other.to_string()),
    })?;

    eprint!("{}", estimate_table(&outcome.estimate));
    write_out(
        out,
        &ragplan_core::canon::to_canonical_json(&outcome.estimate),
    )?;
    if !outcome.slo_met {
        let slo = session.run.ttft_slo.unwrap_or(f64::NAN);
        return Err(CliError::Infeasible(format!(
            "no placement meets the {slo}s TTFT target; reported the minimum-TTFT placement",
        )));
    }
    Ok(())
}

/// Human-readable summary printed to stderr alongside the JSON document.
fn estimate_table(est: &PerfEstimate) -> String {
    let mut t = String::new();
    let _ = writeln!(t, "placement (batch {})", est.placement.batch_size);
    let _ = writeln!(
        t,
        "  {:<12} {:<10} {:>5} {:>12}",
        "stage", "device", "units", "time/batch"
    );
    for (stage, a) in &est.placement.assignment {
        let time = est.per_stage.get(stage).map_or(f64::NAN, |c| c.time_s);
        let _ = writeln!(
            t,
            "  {:<12} {:<10} {:>5} {:>10.3e} s",
            stage, a.device, a.units, time
        );
    }
    let _ = writeln!(t, "metrics");
    let _ = writeln!(t, "  {:<18} {:.3e} s", "ttft", est.ttft_s);
    let _ = writeln!(t, "  {:<18} {:.3e} s", "tpot", est.tpot_s);
    let _ = writeln!(t, "  {:<18} {:.3}", "rps", est.rps);
    let _ = writeln!(t, "  {:<18} {:.3}", "req per dollar", est.req_per_dollar);
    let _ = writeln!(
        t,
        "  {:<18} {:.3}",
        "pool cost per h", est.pool_cost_per_hour
    );
    for w in &est.warnings {
        let _ = writeln!(t, "warning: {w}");
    }
    t
}

// ------------------------------------------------------------------ explore

struct ExploreArgs<'a> {
    space: &'a Path,
    hw: &'a Path,
    profile: &'a Path,
    iters: u64,
    strategy: &'a str,
    seed: Option<u64>,
    quality_table: Option<&'a Path>,
    objectives: Option<&'a str>,
    run_config: Option<&'a Path>,
    out: &'a str,
}

fn parse_strategy(name: &str, session: &Session) -> Result<Strategy, CliError> {
    match name {
        "grid" => Ok(Strategy::Grid),
        "random" => Ok(Strategy::Random),
        "evolutionary" => Ok(Strategy::Evolutionary(session.run.evolution.clone())),
        "rl" => Ok(Strategy::ReinforcementLearning),
        other => Err(CliError::input(format!(
            "unsupported strategy {other:?} (expected grid, random or evolutionary)"
        ))),
    }
}

/// `metric[:max|min]` pairs, comma separated; direction defaults to the
/// metric's natural one.
fn parse_objectives(text: &str) -> Result<ObjectiveSpec, CliError> {
    let mut perf = Vec::new();
    for part in text.split(',') {
        let (name, dir) = match part.split_once(':') {
            Some((n, d)) => (n.trim(), Some(d.trim())),
            None => (part.trim(), None),
        };
        let metric = match name {
            "ttft" => PerfMetric::Ttft,
            "tpot" => PerfMetric::Tpot,
            "rps" => PerfMetric::Rps,
            "req_per_dollar" => PerfMetric::ReqPerDollar,
            other => {
                return Err(CliError::input(format!(
                    "unknown metric {other:?} (expected ttft, tpot, rps or req_per_dollar)"
                )))
            }
        };
        let direction = match dir {
            None => metric.natural_direction(),
            Some("max") => Direction::Maximize,
            Some("min") => Direction::Minimize,
            Some(other) => {
                return Err(CliError::input(format!(
                    "unknown direction {other:?} for {name} (expected max or min)"
                )))
            }
        };
        perf.push(PerfObjective { metric, direction });
    }
    let spec = ObjectiveSpec { perf };
    spec.validate()
        .map_err(|e| CliError::input(e.to_string()))?;
    Ok(spec)
}

fn cmd_explore(args: ExploreArgs) -> Result<(), CliError> {
    let space = load_space(&read_file(args.space)?)
        .map_err(|e| CliError::input(format!("{}: {e}", args.space.display())))?;
    let pool = load_pool(&read_file(args.hw)?)
        .map_err(|e| CliError::input(format!("{}: {e}", args.hw.display())))?;
    let profile = load_profile(&read_file(args.profile)?)
        .map_err(|e| CliError::input(format!("{}: {e}", args.profile.display())))?;
    let session = Session::load(args.run_config)?;

    let strategy = parse_strategy(args.strategy, &session)?;
    let objectives = match args.objectives {
        Some(text) => parse_objectives(text)?,
        None => session.run.objectives.clone(),
    };
    let seed = args.seed.unwrap_or(session.run.seed);

    let table;
    let quality = match args.quality_table {
        Some(path) => {
            table = QualityTable::parse(&read_file(path)?)
                .map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
            QualityEvaluator::Table(&table)
        }
        None => QualityEvaluator::Synthetic(SyntheticSurface::from_seed(session.run.quality_seed)),
    };

    let plan = session.plan_options();
    let outcome = explore(
        &space,
        args.iters,
        &strategy,
        &quality,
        &pool,
        &profile,
        &objectives,
        &plan,
        seed,
    )
    .map_err(|e| CliError::input(e.to_string()))?;

    let doc = ParetoDocument::new(objectives, outcome);
    write_out(args.out, &ragplan_core::canon::to_canonical_json(&doc))
}

// ------------------------------------------------------------------- report

fn cmd_report(pareto: &Path, format: ReportFormat, out: &str) -> Result<(), CliError> {
    let doc = ragplan_core::explore::load_pareto(&read_file(pareto)?)
        .map_err(|e| CliError::input(format!("{}: {e}", pareto.display())))?;
    if doc.objectives.validate().is_err() {
        return Err(CliError::input(format!(
            "{}: document declares no performance objective",
            pareto.display()
        )));
    }
    let rendered = match format {
        ReportFormat::Csv => render_csv(&doc),
        ReportFormat::Svg => render_svg(&doc),
    };
    write_out(out, &rendered)
}

/// Shortest round-trip float text, matching the JSON documents digit for
/// digit.
fn fmt_f64(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

/// Frontier rows sorted by quality, best first; key order breaks ties.
fn render_csv(doc: &ParetoDocument) -> String {
    let mut points: Vec<&EvaluatedPoint> = doc.frontier.points.iter().collect();
    points.sort_by(|a, b| {
        b.quality
            .value
            .total_cmp(&a.quality.value)
            .then_with(|| a.config_key.cmp(&b.config_key))
    });
    let mut csv = String::from(
        "config_key,quality,ttft_s,tpot_s,rps,req_per_dollar,pool_cost_per_hour,batch_size\n",
    );
    for p in points {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            p.config_key,
            fmt_f64(p.quality.value),
            fmt_f64(p.perf.ttft_s),
            fmt_f64(p.perf.tpot_s),
            fmt_f64(p.perf.rps),
            fmt_f64(p.perf.req_per_dollar),
            fmt_f64(p.perf.pool_cost_per_hour),
            p.perf.placement.batch_size,
        );
    }
    csv
}

const SVG_WIDTH: f64 = 640.0;
const SVG_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 20.0;
const MARGIN_BOTTOM: f64 = 50.0;

fn xml_escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Padded data range for one axis; a degenerate span still gets visible
/// extent.
fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return (0.0, 1.0);
    }
    let pad = if hi > lo {
        (hi - lo) * 0.05
    } else {
        (hi.abs() * 0.05).max(0.5)
    };
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-3) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Self-contained scatter of the trade-off: the first performance objective
/// on x, quality on y. Evaluated trace points are grey, frontier members
/// highlighted on top. Hovering a point shows its config key.
fn render_svg(doc: &ParetoDocument) -> String {
    let x_name = serde_json::to_value(doc.objectives.perf[0].metric)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_else(|| "objective".to_string());

    let evaluated: Vec<(&str, f64, f64)> = doc
        .trace
        .iter()
        .filter_map(|e| {
            let objs = e.objectives.as_ref()?;
            Some((e.config_key.as_str(), *objs.get(1)?, *objs.first()?))
        })
        .collect();
    let frontier: Vec<(&str, f64, f64)> = doc
        .frontier
        .points
        .iter()
        .filter_map(|p| {
            Some((
                p.config_key.as_str(),
                *p.objectives.get(1)?,
                *p.objectives.first()?,
            ))
        })
        .collect();

    let all_points = evaluated.iter().chain(&frontier);
    let (x_lo, x_hi) = axis_range(all_points.clone().map(|p| p.1));
    let (y_lo, y_hi) = axis_range(all_points.map(|p| p.2));
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| SVG_HEIGHT - MARGIN_BOTTOM - (y - y_lo) / (y_hi - y_lo) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_WIDTH}" height="{SVG_HEIGHT}" viewBox="0 0 {SVG_WIDTH} {SVG_HEIGHT}" font-family="monospace" font-size="11">"#
    );
    let _ = writeln!(
        svg,
        r##"<rect width="{SVG_WIDTH}" height="{SVG_HEIGHT}" fill="#ffffff"/>"##
    );

    // Axes with five ticks each.
    let x0 = MARGIN_LEFT;
    let y0 = SVG_HEIGHT - MARGIN_BOTTOM;
    let _ = writeln!(
        svg,
        r##"<g stroke="#333333" stroke-width="1"><line x1="{x0}" y1="{y0}" x2="{:.2}" y2="{y0}"/><line x1="{x0}" y1="{y0}" x2="{x0}" y2="{MARGIN_TOP}"/></g>"##,
        SVG_WIDTH - MARGIN_RIGHT
    );
    for i in 0..=4 {
        let f = f64::from(i) / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let yv = y_lo + f * (y_hi - y_lo);
        let xs = sx(xv);
        let ys = sy(yv);
        let _ = writeln!(
            svg,
            r##"<line x1="{xs:.2}" y1="{y0}" x2="{xs:.2}" y2="{:.2}" stroke="#333333"/>"##,
            y0 + 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{xs:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            y0 + 16.0,
            xml_escape(&tick_label(xv))
        );
        let _ = writeln!(
            svg,
            r##"<line x1="{:.2}" y1="{ys:.2}" x2="{x0}" y2="{ys:.2}" stroke="#333333"/>"##,
            x0 - 4.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            ys + 4.0,
            xml_escape(&tick_label(yv))
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        SVG_HEIGHT - 10.0,
        xml_escape(&x_name)
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{:.2}" text-anchor="middle" transform="rotate(-90 14 {:.2})">quality</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0
    );

    for (key, x, y) in &evaluated {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="3" fill="#bbbbbb"><title>{}</title></circle>"##,
            sx(*x),
            sy(*y),
            xml_escape(key)
        );
    }
    for (key, x, y) in &frontier {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="4" fill="#d62728"><title>{}</title></circle>"##,
            sx(*x),
            sy(*y),
            xml_escape(key)
        );
    }
    svg.push_str("</svg>\n");
    svg
}
