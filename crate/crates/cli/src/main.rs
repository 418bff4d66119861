//! Command-line front end: `run`, `compare`, `bench` and `demo-brain`.
//!
//! Exit codes: 0 success, 1 I/O or other failure, 2 parse or configuration
//! error, 3 time step above the critical step, 4 element inversion,
//! 5 divergence.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use djtled::bench::{linear_fit, render_csv, run_bench, step_rate, BenchRow};
use djtled::config::{EngineChoice, Outcome, Problem, RunConfig, RunOptions, Threads};
use djtled::demo::{run_demo, DemoSpec};
use djtled::forces::InversionPolicy;
use djtled::materials::Material;
use djtled::mesh::export_field;
use djtled::metrics::{flatten, nre, rmse_fields, NreHistogram};
use djtled::solver::{Engine, Progress};
use djtled::{Error, Real, Result, Vec3, PRECISION};

#[derive(Parser)]
#[command(name = "djtled", version, about = "Direct-Jacobian TLED hyperelastic explicit dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Assembly threads: a count or `auto`. Overrides the configuration.
    #[arg(long, global = true)]
    threads: Option<Threads>,
    /// Floating-point width; must match the build.
    #[arg(long, global = true, value_parser = ["single", "double"])]
    precision: Option<String>,
    /// What to do when an element inverts.
    #[arg(long = "on-inversion", global = true, default_value = "abort")]
    on_inversion: InversionPolicy,
    /// Run with a time step above the critical step.
    #[arg(long = "allow-unstable", global = true)]
    allow_unstable: bool,
    /// Suppress progress output.
    #[arg(long, short, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run a configuration with its engine(s), export fields and a report.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run both engines on the same problem and compare the fields.
    Compare {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Time both engines over a ladder of generated box meshes.
    Bench {
        config: PathBuf,
        /// CSV output path; standard output when omitted.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Ellipsoid with a fixed base and a displaced surface patch.
    DemoBrain {
        #[command(flatten)]
        demo: DemoArgs,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct DemoArgs {
    /// Grid cells along the longest ellipsoid axis.
    #[arg(long)]
    resolution: Option<usize>,
    /// Patch displacement `x,y,z` in metres.
    #[arg(long, value_delimiter = ',', num_args = 3, allow_negative_numbers = true)]
    displacement: Option<Vec<Real>>,
    #[arg(long)]
    patch_radius: Option<Real>,
    #[arg(long)]
    ramp: Option<Real>,
    #[arg(long)]
    t_end: Option<Real>,
    #[arg(long)]
    mu: Option<Real>,
    #[arg(long)]
    kappa: Option<Real>,
    #[arg(long)]
    density: Option<Real>,
    /// Export the DJ-TLED field here.
    #[arg(long)]
    field: Option<PathBuf>,
    /// Write the report here as well as to standard output.
    #[arg(long)]
    report: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run { config, common } => cmd_run(&config, &common),
        Command::Compare { config, common } => cmd_compare(&config, &common),
        Command::Bench { config, csv, common } => cmd_bench(&config, csv.as_deref(), &common),
        Command::DemoBrain { demo, common } => cmd_demo(&demo, &common),
    }
}

fn check_precision(common: &Common) -> Result<()> {
    match &common.precision {
        Some(p) if p != PRECISION => Err(Error::Config(format!(
            "this binary was built for {PRECISION} precision; rebuild {} the `single` feature for {p}",
            if p == "single" { "with" } else { "without" }
        ))),
        _ => Ok(()),
    }
}

fn options(cfg_threads: Threads, common: &Common, frame_stride: usize) -> Result<RunOptions> {
    check_precision(common)?;
    Ok(RunOptions {
        parallelism: common.threads.unwrap_or(cfg_threads).parallelism()?,
        policy: common.on_inversion,
        allow_unstable: common.allow_unstable,
        frame_stride,
    })
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// `out.vtk` → `out_<tag>.vtk`.
fn tagged(path: &Path, tag: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}_{tag}.{}", ext.to_string_lossy()),
        None => format!("{stem}_{tag}"),
    };
    path.with_file_name(name)
}

/// Prints roughly ten progress lines per run.
fn progress_printer(quiet: bool, engine: Engine, total: usize) -> impl FnMut(&Progress) {
    let every = (total / 10).max(1);
    move |p: &Progress| {
        if !quiet && (p.step.is_multiple_of(every) || p.step == total) {
            eprintln!(
                "[{engine}] step {}/{total}  t = {:.6} s  max |u| = {:.6e} m  {:.1} us/step",
                p.step,
                p.t,
                p.max_displacement,
                p.step_seconds * 1e6
            );
        }
    }
}

fn run_engine(problem: &Problem, engine: Engine, opts: &RunOptions, quiet: bool, field: Option<&Path>) -> Result<Outcome> {
    let sim = problem.simulation(engine, opts)?;
    let total = djtled::solver::steps_for(problem.t_end, sim.dt())?;
    drop(sim);
    problem.run(engine, opts, progress_printer(quiet, engine, total), |step, u| match field {
        Some(path) => write(&tagged(path, &format!("{step:06}")), &export_field(&problem.mesh, u)?),
        None => Ok(()),
    })
}

fn outcome_lines(out: &mut String, o: &Outcome) {
    let s = &o.summary;
    let _ = writeln!(out, "engine: {}", o.engine);
    let _ = writeln!(out, "  steps: {}", s.steps);
    let _ = writeln!(out, "  dt: {:e} s (critical {:e} s)", s.dt, o.critical_dt);
    let _ = writeln!(out, "  t_end: {} s", s.t_end);
    let _ = writeln!(out, "  damping: {} 1/s", o.damping);
    let _ = writeln!(out, "  precompute: {:.6} s", o.precompute_seconds);
    let _ = writeln!(out, "  wall-clock total: {:.6} s", s.total_seconds);
    let _ = writeln!(out, "  wall-clock mean per step: {:.3} us", s.mean_step_seconds * 1e6);
    let _ = writeln!(out, "  max displacement: {:e} m", s.max_displacement);
    if s.inversions > 0 {
        let _ = writeln!(out, "  inverted element evaluations: {}", s.inversions);
    }
}

fn header(problem: &Problem) -> String {
    format!(
        "mesh: {} {} nodes, {} elements, {} dofs\nmaterial: {}\nprecision: {PRECISION}\n",
        problem.mesh.kind,
        problem.mesh.nodes.len(),
        problem.mesh.elements.len(),
        problem.mesh.dofs(),
        problem.material.tag()
    )
}

fn emit_report(report: &str, path: Option<&Path>) -> Result<()> {
    print!("{report}");
    match path {
        Some(p) => write(p, report),
        None => Ok(()),
    }
}

fn cmd_run(config: &Path, common: &Common) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let opts = options(cfg.threads, common, cfg.output.frame_stride)?;
    let problem = cfg.problem()?;
    let engines = cfg.engine.engines();
    let mut report = header(&problem);
    for &engine in &engines {
        let field_path = cfg.output.field.as_ref().map(|p| if engines.len() > 1 { tagged(p, &engine.to_string()) } else { p.clone() });
        let frames = field_path.as_deref().filter(|_| opts.frame_stride > 0);
        let o = run_engine(&problem, engine, &opts, common.quiet, frames)?;
        if let Some(path) = &field_path {
            write(path, &export_field(&problem.mesh, &o.field)?)?;
        }
        outcome_lines(&mut report, &o);
    }
    emit_report(&report, cfg.output.report.as_deref())
}

fn cmd_compare(config: &Path, common: &Common) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    if let EngineChoice::One(e) = cfg.engine {
        if !common.quiet {
            eprintln!("note: compare runs both engines; ignoring `engine = {e}`");
        }
    }
    let opts = options(cfg.threads, common, 0)?;
    let problem = cfg.problem()?;
    let dj = run_engine(&problem, Engine::Djtled, &opts, common.quiet, None)?;
    let tl = run_engine(&problem, Engine::Tled, &opts, common.quiet, None)?;
    if let Some(path) = &cfg.output.field {
        for o in [&dj, &tl] {
            write(&tagged(path, &o.engine.to_string()), &export_field(&problem.mesh, &o.field)?)?;
        }
    }
    let mut report = header(&problem);
    outcome_lines(&mut report, &dj);
    outcome_lines(&mut report, &tl);
    report.push_str(&comparison(&dj.field, &tl.field, &dj, &tl)?);
    emit_report(&report, cfg.output.report.as_deref())
}

fn comparison(a: &[Vec3], b: &[Vec3], dj: &Outcome, tl: &Outcome) -> Result<String> {
    let mut out = String::new();
    let _ = writeln!(out, "dofs: {}", a.len() * 3);
    let _ = writeln!(out, "rmse: {:e} m", rmse_fields(a, b)?);
    let ratio = dj.summary.mean_step_seconds / tl.summary.mean_step_seconds;
    let _ = writeln!(out, "ratio djtled/tled: {ratio:.4}");
    match nre(&flatten(a), &flatten(b)) {
        Ok(v) => {
            let h = NreHistogram::new(&v);
            let _ = writeln!(out, "nre histogram ({} dofs):", h.total());
            out.push_str(&h.render());
        }
        Err(e) => {
            let _ = writeln!(out, "nre: {e}");
        }
    }
    Ok(out)
}

fn cmd_bench(config: &Path, csv: Option<&Path>, common: &Common) -> Result<()> {
    check_precision(common)?;
    let cfg = RunConfig::load(config)?;
    let mut settings = cfg.bench.clone();
    if let Some(t) = common.threads {
        let n = t.parallelism()?.count();
        settings.threads = if n == 1 { vec![1] } else { vec![1, n] };
    }
    let quiet = common.quiet;
    let rows = run_bench(&settings, |r| {
        if !quiet {
            eprintln!("{}", r.csv());
        }
    })?;
    let text = render_csv(&rows);
    match csv {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    if !quiet {
        eprint!("{}", bench_summary(&rows));
    }
    Ok(())
}

/// Linear fits per configuration and the step rates at the largest size.
fn bench_summary(rows: &[BenchRow]) -> String {
    let mut out = String::new();
    let mut keys: Vec<(String, &str, Engine, usize)> = Vec::new();
    for r in rows {
        let k = (r.kind.to_string(), r.material, r.engine, r.threads);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    for (kind, material, engine, threads) in keys {
        let sel: Vec<&BenchRow> = rows
            .iter()
            .filter(|r| r.kind.to_string() == kind && r.material == material && r.engine == engine && r.threads == threads)
            .collect();
        let x: Vec<f64> = sel.iter().map(|r| r.dofs as f64).collect();
        let y: Vec<f64> = sel.iter().map(|r| r.mean_step_us).collect();
        let last = sel.last().expect("at least one row per key");
        let fit = if x.len() >= 2 { format!("r2 {:.4}", linear_fit(&x, &y).2) } else { "r2 n/a".into() };
        let _ = writeln!(
            out,
            "{kind} {material} {engine} {threads}t: {fit}, {:.0} Hz at {} dofs (30 Hz: {}, 500 Hz: {})",
            step_rate(last.mean_step_us),
            last.dofs,
            if step_rate(last.mean_step_us) >= 30.0 { "yes" } else { "no" },
            if step_rate(last.mean_step_us) >= 500.0 { "yes" } else { "no" },
        );
    }
    out
}

fn cmd_demo(args: &DemoArgs, common: &Common) -> Result<()> {
    let opts = options(common.threads.unwrap_or(Threads(Some(1))), common, 0)?;
    let mut spec = DemoSpec::default();
    if let Some(r) = args.resolution {
        spec.resolution = r;
    }
    if let Some(d) = &args.displacement {
        spec.displacement = Vec3::new(d[0], d[1], d[2]);
    }
    if let Some(r) = args.patch_radius {
        spec.patch_radius = r;
    }
    if let Some(r) = args.ramp {
        spec.ramp = r;
    }
    if let Some(t) = args.t_end {
        spec.t_end = t;
    }
    if args.mu.is_some() || args.kappa.is_some() || args.density.is_some() {
        let (mu, kappa, rho) = (args.mu.unwrap_or(1006.712), args.kappa.unwrap_or(50000.0), args.density.unwrap_or(1060.0));
        spec.material = Material::neo_hookean(mu, kappa, rho)?;
    }
    if !(spec.ramp > 0.0) {
        return Err(Error::Config("ramp must be positive".into()));
    }
    let report = run_demo(&spec, &opts)?;
    if let Some(path) = &args.field {
        let mesh = spec.problem()?.mesh;
        write(path, &export_field(&mesh, &report.djtled.field)?)?;
    }
    emit_report(&report.render(), args.report.as_deref())
}
