use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use snlab::config::RunConfig;
use snlab::diagnostics::{classify_direction, geometric_grid, profile_defect, ClassifyOptions, Verdict};
use snlab::export::{csv_string, svg_plot, SvgSeries, SvgStyle};
use snlab::geodesic_flow::{integrate_geodesic, GeodesicState, OrbitClass, DEFAULT_STEP};
use snlab::loop_minimizer::LatticeVector;
use snlab::rotational_oracle::RotationalOracle;
use snlab::stable_norm::{auto_source, build_table, StableNormTable, TableOptions};
use snlab::{diagnostics, Error, MetricSpec, Vec2, SCHEMA};

#[derive(Parser)]
#[command(name = "snlab", version, about = "Stable norms of Finsler and Riemannian metrics on the 2-torus")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Metric and run configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    /// Cutoff |z| ≤ Q for tabulated classes.
    #[arg(long = "Q", global = true)]
    q: Option<f64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Exit with status 3 when some, but not all, computations fail.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Tabulate σ over primitive classes.
    Table,
    /// Unit sphere {σ = 1} as CSV and SVG.
    Circle,
    /// KAM-like / hyperbolic-like verdicts for the configured directions.
    Classify,
    /// Floquet data for the periodic minimizers of the configured classes.
    Floquet,
    /// Convexity-defect profiles along transverse rays.
    Defect,
    /// Quadrature oracle for rotational metrics.
    Oracle,
}

enum Failure {
    Config(String),
    Compute(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } | Error::InvalidMetric(_) => Failure::Config(e.to_string()),
            other => Failure::Compute(other.to_string()),
        }
    }
}

/// Outcome of a subcommand: how many units of work ran and how many failed.
struct Tally {
    total: usize,
    failed: usize,
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    q: Option<f64>,
    seed: u64,
}

impl Ctx {
    fn table_opts(&self) -> TableOptions {
        let mut opts = TableOptions { restarts: self.cfg.run.restarts.unwrap_or(8), seed: self.seed, ..TableOptions::default() };
        if !self.cfg.run.n_list.is_empty() {
            opts.n_list = self.cfg.run.n_list.clone();
        }
        opts
    }

    fn cutoff(&self, default: f64) -> f64 {
        self.q.or(self.cfg.run.q).unwrap_or(default)
    }

    fn write(&self, name: &str, body: &str) -> Result<(), Failure> {
        let p = self.out.join(name);
        std::fs::write(&p, body).map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display())))
    }

    fn write_json(&self, name: &str, v: &Value) -> Result<(), Failure> {
        let mut s = serde_json::to_string_pretty(v).expect("json value");
        s.push('\n');
        self.write(name, &s)
    }

    fn envelope(&self, command: &str, results: Value) -> Value {
        json!({
            "schema": SCHEMA,
            "command": command,
            "metric_hash": self.cfg.metric.hash_hex(),
            "metric": self.cfg.metric,
            "seed": self.seed,
            "results": results,
        })
    }

    fn directions(&self) -> Vec<Vec2> {
        if self.cfg.run.directions.is_empty() {
            let g = (5f64.sqrt() - 1.0) / 2.0;
            vec![Vec2::new(1.0, 0.0), Vec2::new(0.0, 1.0), Vec2::new(g, 1.0)]
        } else {
            self.cfg.run.directions.clone()
        }
    }

    fn needs_table(&self) -> bool {
        matches!(&self.cfg.metric, MetricSpec::Conformal { factor } if !factor.is_constant())
    }

    fn table(&self, default_q: f64) -> Result<StableNormTable, Failure> {
        Ok(build_table(&self.cfg.metric, self.cutoff(default_q), &self.table_opts())?)
    }
}

fn cmd_table(ctx: &Ctx) -> Result<Tally, Failure> {
    let t = ctx.table(7.0)?;
    let mut s = t.to_json()?;
    s.push('\n');
    ctx.write("table.json", &s)?;
    println!("{:>8} {:>8} {:>18} {:>6} {:>10}", "z1", "z2", "sigma", "count", "floquet");
    for e in &t.entries {
        let fl = e.floquet.as_ref().map_or("-".to_string(), |f| format!("{:?}", f.classification).to_lowercase());
        if e.ok() {
            println!("{:>8} {:>8} {:>18.12} {:>6} {:>10}", e.z.a(), e.z.b(), e.sigma, e.count, fl);
        } else {
            println!("{:>8} {:>8} {:>18} {:>6} {:>10}", e.z.a(), e.z.b(), "failed", "-", "-");
            eprintln!("warning: class {} failed: {}", e.z, e.error.as_deref().unwrap_or("unknown"));
        }
    }
    eprintln!("{} entries, {} failed, {} unconverged", t.diagnostics.entries, t.diagnostics.failures, t.diagnostics.unconverged);
    Ok(Tally { total: t.entries.len(), failed: t.diagnostics.failures })
}

fn cmd_circle(ctx: &Ctx) -> Result<Tally, Failure> {
    let t = ctx.table(7.0)?;
    ctx.write("circle.csv", &t.unit_circle_csv())?;
    let mut overlays = Vec::new();
    if let MetricSpec::Rotational { factor } = &ctx.cfg.metric {
        let curve = RotationalOracle::new(factor)?.unit_circle(ctx.cfg.run.samples.unwrap_or(400))?;
        let gap = t.unit_points().iter().map(|p| curve.distance_to(p.1)).fold(0.0, f64::max);
        eprintln!("max gap between tabulated points and oracle curve: {gap:.3e}");
        ctx.write("oracle_circle.csv", &curve.to_csv())?;
        overlays.push(curve.svg_series("oracle", "#2ca02c"));
    }
    ctx.write("circle.svg", &t.unit_circle_svg(&overlays))?;
    eprintln!("{} points on the unit sphere", t.unit_points().len());
    Ok(Tally { total: t.entries.len(), failed: t.diagnostics.failures })
}

fn source_table(ctx: &Ctx) -> Result<Option<StableNormTable>, Failure> {
    if ctx.needs_table() {
        Ok(Some(ctx.table(5.0)?))
    } else {
        Ok(None)
    }
}

fn cmd_classify(ctx: &Ctx) -> Result<Tally, Failure> {
    let table = source_table(ctx)?;
    let src = auto_source(&ctx.cfg.metric, table.as_ref(), &ctx.table_opts())?;
    let opts = ClassifyOptions { table: ctx.table_opts(), ..ClassifyOptions::default() };
    let dirs = ctx.directions();
    let results: Vec<Result<diagnostics::Classification, Error>> =
        dirs.par_iter().map(|xi| classify_direction(&ctx.cfg.metric, src.as_ref(), *xi, &opts)).collect();
    let mut out = Vec::new();
    let mut failed = 0;
    println!("{:>14} {:>14}  {:<16} reason", "xi1", "xi2", "verdict");
    for (xi, r) in dirs.iter().zip(results) {
        match r {
            Ok(c) => {
                let v = match c.verdict {
                    Verdict::KamLike => "kam-like",
                    Verdict::HyperbolicLike => "hyperbolic-like",
                    Verdict::Undetermined => "undetermined",
                };
                println!("{:>14.9} {:>14.9}  {:<16} {}", xi[0], xi[1], v, c.reason);
                out.push(serde_json::to_value(&c).map_err(Error::from)?);
            }
            Err(e) => {
                failed += 1;
                eprintln!("warning: direction ({}, {}) failed: {e}", xi[0], xi[1]);
                out.push(json!({ "xi": xi, "error": e.to_string() }));
            }
        }
    }
    ctx.write_json("classify.json", &ctx.envelope("classify", Value::Array(out)))?;
    Ok(Tally { total: dirs.len(), failed })
}

fn lattice_classes(ctx: &Ctx) -> Result<Vec<LatticeVector>, Failure> {
    let mut out = Vec::new();
    for d in ctx.directions() {
        if d[0].fract() != 0.0 || d[1].fract() != 0.0 {
            return Err(Failure::Config(format!("floquet needs integer classes, got ({}, {})", d[0], d[1])));
        }
        let z = LatticeVector::new(d[0] as i64, d[1] as i64)?;
        out.push(z.primitive_part().0);
    }
    Ok(out)
}

fn cmd_floquet(ctx: &Ctx) -> Result<Tally, Failure> {
    let classes = if ctx.cfg.run.directions.is_empty() {
        vec![LatticeVector::new(1, 0)?, LatticeVector::new(0, 1)?, LatticeVector::new(1, 1)?]
    } else {
        lattice_classes(ctx)?
    };
    let opts = ctx.table_opts();
    let results: Vec<_> = classes.par_iter().map(|z| diagnostics::floquet_of_class(&ctx.cfg.metric, *z, &opts)).collect();
    let mut rows = Vec::new();
    let mut out = Vec::new();
    let mut failed = 0;
    for (z, r) in classes.iter().zip(results) {
        match r {
            Ok(f) => {
                let code = match f.classification {
                    OrbitClass::Hyperbolic => 0.0,
                    OrbitClass::Parabolic => 1.0,
                    OrbitClass::Elliptic => 2.0,
                    OrbitClass::Degenerate => 3.0,
                };
                rows.push([z.a() as f64, z.b() as f64, f.period, f.mu(), f.lyapunov.unwrap_or(0.0), f.det_residual, code]);
                println!("{z}: {:?}, |mu| = {:.9}, period {:.9}", f.classification, f.mu(), f.period);
                out.push(json!({ "z": z, "floquet": f }));
            }
            Err(e) => {
                failed += 1;
                eprintln!("warning: class {z} failed: {e}");
                out.push(json!({ "z": z, "error": e.to_string() }));
            }
        }
    }
    ctx.write_json("floquet.json", &ctx.envelope("floquet", Value::Array(out)))?;
    ctx.write("floquet.csv", &csv_string(&["z1", "z2", "period", "mu", "lyapunov", "det_residual", "class"], &rows))?;
    if let Some(duration) = ctx.cfg.run.duration {
        // a sample trajectory for inspection, started along the first class
        let z = classes[0].to_vec2();
        let traj = integrate_geodesic(&ctx.cfg.metric, GeodesicState::new(Vec2::zeros(), z / z.norm()), duration, DEFAULT_STEP)?;
        ctx.write("trajectory.csv", &traj.to_csv(&ctx.cfg.metric))?;
    }
    Ok(Tally { total: classes.len(), failed })
}

fn cmd_defect(ctx: &Ctx) -> Result<Tally, Failure> {
    let table = source_table(ctx)?;
    let src = auto_source(&ctx.cfg.metric, table.as_ref(), &ctx.table_opts())?;
    let dirs = ctx.directions();
    let run = &ctx.cfg.run;
    let mut out = Vec::new();
    let mut failed = 0;
    for (i, xi) in dirs.iter().enumerate() {
        let grid = geometric_grid(run.t0.unwrap_or(0.2) * xi.norm(), run.t_ratio.unwrap_or(0.5), run.t_count.unwrap_or(9));
        let across = Vec2::new(-xi[1], xi[0]);
        match profile_defect(src.as_ref(), *xi, across, &grid) {
            Ok(p) => {
                let fit = diagnostics::fit_models(&p);
                ctx.write(&format!("defect_{i}.csv"), &p.to_csv())?;
                println!("({}, {}): {:?} ({})", xi[0], xi[1], fit.model, fit.reason);
                out.push(json!({ "profile": p, "fit": fit }));
            }
            Err(e) => {
                failed += 1;
                eprintln!("warning: direction ({}, {}) failed: {e}", xi[0], xi[1]);
                out.push(json!({ "xi": xi, "error": e.to_string() }));
            }
        }
    }
    ctx.write_json("defect.json", &ctx.envelope("defect", Value::Array(out)))?;
    Ok(Tally { total: dirs.len(), failed })
}

fn cmd_oracle(ctx: &Ctx) -> Result<Tally, Failure> {
    let MetricSpec::Rotational { factor } = &ctx.cfg.metric else {
        return Err(Failure::Config("oracle needs a rotational metric".into()));
    };
    let oracle = RotationalOracle::new(factor)?;
    let curve = oracle.unit_circle(ctx.cfg.run.samples.unwrap_or(400))?;
    let slope = oracle.corner_slope()?;
    let sigmas: Vec<Value> = ctx
        .directions()
        .iter()
        .map(|xi| match oracle.sigma(*xi) {
            Ok(s) => json!({ "xi": xi, "sigma": s }),
            Err(e) => json!({ "xi": xi, "error": e.to_string() }),
        })
        .collect();
    println!("min f = {:.15}, corner slope = {:.15}", oracle.min_f(), slope);
    ctx.write("oracle.csv", &curve.to_csv())?;
    ctx.write(
        "oracle.svg",
        &svg_plot(
            "unit sphere from quadrature",
            &[
                curve.svg_series("oracle", "#2ca02c"),
                SvgSeries {
                    label: "corners".into(),
                    color: "#d62728".into(),
                    style: SvgStyle::Markers,
                    points: vec![Vec2::new(1.0, 0.0) / oracle.min_f().sqrt(), Vec2::new(-1.0, 0.0) / oracle.min_f().sqrt()],
                },
            ],
        ),
    )?;
    let results = json!({
        "min_f": oracle.min_f(),
        "argmin": oracle.argmin(),
        "corner_slope": slope,
        "convex": curve.is_convex(),
        "sigma": sigmas,
        "curve": curve,
    });
    ctx.write_json("oracle.json", &ctx.envelope("oracle", results))?;
    Ok(Tally { total: 1, failed: 0 })
}

fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
    let path = path.ok_or_else(|| Failure::Config("--config is required".into()))?;
    let cfg = RunConfig::load(path).map_err(|e| match e {
        Error::Io(io) => Failure::Config(format!("cannot read {}: {io}", path.display())),
        other => Failure::Config(other.to_string()),
    })?;
    let report = cfg.metric.validate().map_err(|e| Failure::Config(e.to_string()))?;
    eprintln!("metric: {}", report.message);
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<Tally, Failure> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Config(format!("thread pool: {e}")))?;
    }
    let cfg = load(cli.config.as_deref())?;
    if let Some(q) = cli.q.or(cfg.run.q) {
        if !(q >= 3.0) {
            return Err(Failure::Config(format!("Q must be at least 3, got {q}")));
        }
    }
    std::fs::create_dir_all(&cli.out).map_err(|e| Failure::Config(format!("cannot create {}: {e}", cli.out.display())))?;
    let ctx = Ctx { seed: cli.seed.or(cfg.run.seed).unwrap_or(0), q: cli.q, out: cli.out.clone(), cfg };
    match cli.command {
        Command::Table => cmd_table(&ctx),
        Command::Circle => cmd_circle(&ctx),
        Command::Classify => cmd_classify(&ctx),
        Command::Floquet => cmd_floquet(&ctx),
        Command::Defect => cmd_defect(&ctx),
        Command::Oracle => cmd_oracle(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(t) if t.total > 0 && t.failed == t.total => {
            eprintln!("error: every computation failed");
            ExitCode::from(2)
        }
        Ok(t) if t.failed > 0 && cli.strict => {
            eprintln!("error: {} of {} computations failed", t.failed, t.total);
            ExitCode::from(3)
        }
        Ok(_) => ExitCode::SUCCESS,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Compute(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
