//! Run configuration: a line-oriented `key = value` format with `[section]`
//! headers, plus the driver that turns a configuration into simulations.
//!
//! ```text
//! [mesh]
//! generate = box            # or: file = brain.mesh
//! extent = 0.1 0.1 0.1
//! divisions = 6 6 6
//! kind = h8
//!
//! [material]
//! model = nh                # nh | ti | ot | mr
//! mu = 6567
//! kappa = 326210
//! density = 1060
//!
//! [bc]
//! fix = zmin xyz            # selector, axes
//! prescribe = zmax z 0.05 1 # selector, axis, target (m), ramp time (s)
//!
//! [time]
//! dt = auto                 # or a value in seconds
//! t_end = 1
//! damping = 0               # α in 1/s, or `relaxation`
//! ```
//!
//! `#` starts a comment. Unknown sections and keys are rejected, as are keys
//! given twice (except the repeatable `fix` and `prescribe`).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::bench::BenchSettings;
use crate::element::ElementKind;
use crate::forces::{InversionPolicy, Parallelism};
use crate::materials::{Material, MaterialModel};
use crate::mesh::{generate_box, load_mesh, Axis, BoundaryConditions, Mesh, Selector};
use crate::solver::{relaxation_damping, steps_for, Engine, Model, Progress, RunSummary, Simulation, TimeSettings};
use crate::{Error, Real, Result, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub enum MeshSource {
    Box { extent: [Real; 3], divisions: [usize; 3], kind: ElementKind },
    File(PathBuf),
}

impl MeshSource {
    pub fn load(&self) -> Result<Mesh> {
        match self {
            MeshSource::Box { extent, divisions, kind } => generate_box(*extent, *divisions, *kind),
            MeshSource::File(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::config(format!("cannot read mesh file {}: {e}", path.display())))?;
                load_mesh(&text)
            }
        }
    }
}

/// `fix = <selector> <axes>`.
#[derive(Debug, Clone, PartialEq)]
pub struct FixRule {
    pub selector: Selector,
    pub axes: Vec<Axis>,
}

/// `prescribe = <selector> <axis> <target> <ramp>`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrescribeRule {
    pub selector: Selector,
    pub axis: Axis,
    pub target: Real,
    pub ramp: Real,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeStep {
    /// `safety · critical_dt`.
    Auto { safety: Real },
    Fixed(Real),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Damping {
    Value(Real),
    /// [`relaxation_damping`] for the mesh and material.
    Relaxation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineChoice {
    One(Engine),
    Both,
}

impl EngineChoice {
    pub fn engines(self) -> Vec<Engine> {
        match self {
            EngineChoice::One(e) => vec![e],
            EngineChoice::Both => Engine::ALL.to_vec(),
        }
    }
}

impl FromStr for EngineChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(EngineChoice::Both),
            other => other.parse().map(EngineChoice::One),
        }
    }
}

/// Thread count for assembly. `None` means one per available core.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Threads(pub Option<usize>);

impl Threads {
    pub fn parallelism(self) -> Result<Parallelism> {
        match self.0 {
            None => Parallelism::auto(),
            Some(n) => Parallelism::threads(n),
        }
    }
}

impl FromStr for Threads {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(Threads(None));
        }
        match s.parse::<usize>() {
            Ok(n) if n > 0 => Ok(Threads(Some(n))),
            _ => Err(Error::config(format!("threads must be a positive integer or `auto`, got `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct OutputConfig {
    pub field: Option<PathBuf>,
    pub report: Option<PathBuf>,
    /// Write an intermediate field every this many steps. `0` disables frames.
    pub frame_stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mesh: MeshSource,
    pub material: Material,
    pub hourglass: Real,
    pub fix: Vec<FixRule>,
    pub prescribe: Vec<PrescribeRule>,
    pub dt: TimeStep,
    pub t_end: Real,
    pub damping: Damping,
    pub engine: EngineChoice,
    pub threads: Threads,
    pub output: OutputConfig,
    pub bench: BenchSettings,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("mesh", &["generate", "file", "extent", "divisions", "kind"]),
    (
        "material",
        &["model", "mu", "kappa", "density", "eta_a", "eta_b", "c10", "c01", "fibre_a", "fibre_b", "hourglass"],
    ),
    ("bc", &["fix", "prescribe"]),
    ("time", &["dt", "safety", "t_end", "damping"]),
    ("run", &["engine", "threads"]),
    ("output", &["field", "report", "frame_stride"]),
    ("bench", &["sizes", "kinds", "materials", "steps", "warmup", "threads", "batch"]),
];

const REPEATABLE: &[&str] = &["fix", "prescribe"];

/// Raw `(section, key) → [(line, value)]` entries.
type Entries = BTreeMap<(String, String), Vec<(usize, String)>>;

fn tokenize(text: &str) -> Result<Entries> {
    let mut entries = Entries::new();
    let mut section: Option<&str> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| Error::Parse { line: line_no, message };
        if let Some(name) = line.strip_prefix('[') {
            let name = name.strip_suffix(']').ok_or_else(|| err(format!("malformed section header `{line}`")))?.trim();
            let known = SECTIONS.iter().find(|(s, _)| *s == name).map(|(s, _)| *s);
            section = Some(known.ok_or_else(|| err(format!("unknown section [{name}]")))?);
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        let sec = section.ok_or_else(|| err(format!("key `{key}` appears before any [section]")))?;
        let keys = SECTIONS.iter().find(|(s, _)| *s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !keys.contains(&key) {
            return Err(err(format!("unknown key `{key}` in [{sec}]")));
        }
        if value.is_empty() {
            return Err(err(format!("key `{key}` has no value")));
        }
        let slot = entries.entry((sec.to_string(), key.to_string())).or_default();
        if !slot.is_empty() && !REPEATABLE.contains(&key) {
            return Err(err(format!("key `{key}` given twice in [{sec}]")));
        }
        slot.push((line_no, value.to_string()));
    }
    Ok(entries)
}

struct Reader {
    entries: Entries,
}

impl Reader {
    fn raw(&self, sec: &str, key: &str) -> Option<(usize, &str)> {
        self.entries.get(&(sec.into(), key.into())).and_then(|v| v.first()).map(|(l, s)| (*l, s.as_str()))
    }

    fn all(&self, sec: &str, key: &str) -> Vec<(usize, &str)> {
        self.entries
            .get(&(sec.into(), key.into()))
            .map(|v| v.iter().map(|(l, s)| (*l, s.as_str())).collect())
            .unwrap_or_default()
    }

    fn get<T: FromStr>(&self, sec: &str, key: &str) -> Result<Option<T>> {
        match self.raw(sec, key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Parse { line, message: format!("cannot parse `{v}` for {key}") }),
        }
    }

    fn require<T: FromStr>(&self, sec: &str, key: &str) -> Result<T> {
        self.get(sec, key)?.ok_or_else(|| Error::config(format!("[{sec}] is missing `{key}`")))
    }

    fn list<T: FromStr>(&self, sec: &str, key: &str) -> Result<Option<Vec<T>>> {
        match self.raw(sec, key) {
            None => Ok(None),
            Some((line, v)) => v
                .split_whitespace()
                .map(|t| t.parse().map_err(|_| Error::Parse { line, message: format!("cannot parse `{t}` in {key}") }))
                .collect::<Result<Vec<T>>>()
                .map(Some),
        }
    }

    fn triple<T: FromStr + Copy>(&self, sec: &str, key: &str) -> Result<Option<[T; 3]>> {
        match self.list::<T>(sec, key)? {
            None => Ok(None),
            Some(v) if v.len() == 3 => Ok(Some([v[0], v[1], v[2]])),
            Some(_) => Err(Error::Parse { line: self.raw(sec, key).map_or(0, |r| r.0), message: format!("{key} needs 3 values") }),
        }
    }
}

fn parse_axes(s: &str, line: usize) -> Result<Vec<Axis>> {
    let axes: Option<Vec<Axis>> = s.chars().map(Axis::from_char).collect();
    match axes {
        Some(a) if !a.is_empty() => Ok(a),
        _ => Err(Error::Parse { line, message: format!("axes must be letters from `xyz`, got `{s}`") }),
    }
}

/// Splits a rule value into its selector (which may contain spaces inside
/// `sphere(...)`) and the remaining whitespace-separated fields.
fn split_rule(v: &str, fields: usize, line: usize) -> Result<(Selector, Vec<&str>)> {
    let tokens: Vec<&str> = v.split_whitespace().collect();
    if tokens.len() < fields + 1 {
        return Err(Error::Parse { line, message: format!("expected a selector and {fields} more fields in `{v}`") });
    }
    let (sel, rest) = tokens.split_at(tokens.len() - fields);
    let selector = sel.join("").parse().map_err(|e: Error| Error::Parse { line, message: e.to_string() })?;
    Ok((selector, rest.to_vec()))
}

fn parse_real(s: &str, line: usize) -> Result<Real> {
    s.parse().map_err(|_| Error::Parse { line, message: format!("cannot parse `{s}` as a number") })
}

fn unit(v: [Real; 3], name: &str) -> Result<Vec3> {
    let v = Vec3::from(v);
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::config(format!("{name} must be a non-zero vector")));
    }
    Ok(v / n)
}

fn material_section(r: &Reader) -> Result<Material> {
    let model: String = r.require("material", "model")?;
    let density: Real = r.require("material", "density")?;
    let kappa: Real = r.require("material", "kappa")?;
    let allowed: &[&str] = match model.as_str() {
        "nh" => &["mu"],
        "ti" => &["mu", "eta_a", "fibre_a"],
        "ot" => &["mu", "eta_a", "eta_b", "fibre_a", "fibre_b"],
        "mr" => &["c10", "c01"],
        other => return Err(Error::config(format!("unknown material model `{other}` (nh, ti, ot, mr)"))),
    };
    for key in ["mu", "eta_a", "eta_b", "c10", "c01", "fibre_a", "fibre_b"] {
        if !allowed.contains(&key) {
            if let Some((line, _)) = r.raw("material", key) {
                return Err(Error::Parse { line, message: format!("`{key}` does not apply to model {model}") });
            }
        }
    }
    let fibre = |key: &str| -> Result<Vec3> {
        unit(r.triple("material", key)?.ok_or_else(|| Error::config(format!("[material] is missing `{key}`")))?, key)
    };
    let m = match model.as_str() {
        "nh" => MaterialModel::NeoHookean { mu: r.require("material", "mu")?, kappa },
        "ti" => MaterialModel::TransverselyIsotropic {
            mu: r.require("material", "mu")?,
            eta_a: r.require("material", "eta_a")?,
            kappa,
            a: fibre("fibre_a")?,
        },
        "ot" => MaterialModel::Orthotropic {
            mu: r.require("material", "mu")?,
            eta_a: r.require("material", "eta_a")?,
            eta_b: r.require("material", "eta_b")?,
            kappa,
            a: fibre("fibre_a")?,
            b: fibre("fibre_b")?,
        },
        _ => MaterialModel::MooneyRivlin { c10: r.require("material", "c10")?, c01: r.require("material", "c01")?, kappa },
    };
    Material::new(m, density)
}

fn bench_section(r: &Reader) -> Result<BenchSettings> {
    let mut b = BenchSettings::default();
    if let Some(v) = r.list("bench", "sizes")? {
        b.sizes = v;
    }
    if let Some(v) = r.list("bench", "kinds")? {
        b.kinds = v;
    }
    if let Some(tags) = r.list::<String>("bench", "materials")? {
        b.materials = tags
            .iter()
            .map(|t| {
                Material::reference_set()
                    .into_iter()
                    .find(|m| m.tag().eq_ignore_ascii_case(t))
                    .ok_or_else(|| Error::config(format!("unknown bench material `{t}` (nh, ti, ot, mr)")))
            })
            .collect::<Result<_>>()?;
    }
    if let Some(v) = r.get("bench", "steps")? {
        b.steps = v;
    }
    if let Some(v) = r.get("bench", "warmup")? {
        b.warmup = v;
    }
    if let Some(v) = r.get("bench", "batch")? {
        b.batch = v;
    }
    if let Some(v) = r.list::<Threads>("bench", "threads")? {
        b.threads = v.iter().map(|t| t.parallelism().map(|p| p.count())).collect::<Result<_>>()?;
    }
    if b.sizes.is_empty() || b.kinds.is_empty() || b.materials.is_empty() || b.threads.is_empty() {
        return Err(Error::config("bench lists must not be empty"));
    }
    if b.sizes.contains(&0) || b.steps == 0 || b.batch == 0 {
        return Err(Error::config("bench sizes, steps and batch must be positive"));
    }
    Ok(b)
}

impl RunConfig {
    /// Parses configuration text. Relative file paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let r = Reader { entries: tokenize(text)? };
        let resolve = |p: String| base.join(p);

        let mesh = match (r.raw("mesh", "generate"), r.raw("mesh", "file")) {
            (Some(_), Some((line, _))) => {
                return Err(Error::Parse { line, message: "give either `generate` or `file`, not both".into() })
            }
            (None, Some(_)) => {
                for key in ["extent", "divisions", "kind"] {
                    if let Some((line, _)) = r.raw("mesh", key) {
                        return Err(Error::Parse { line, message: format!("`{key}` only applies to generated meshes") });
                    }
                }
                MeshSource::File(resolve(r.require("mesh", "file")?))
            }
            (Some((line, g)), None) => {
                if g != "box" {
                    return Err(Error::Parse { line, message: format!("unknown generator `{g}` (box)") });
                }
                let extent = r.triple::<Real>("mesh", "extent")?.ok_or_else(|| Error::config("[mesh] is missing `extent`"))?;
                let divisions =
                    r.triple::<usize>("mesh", "divisions")?.ok_or_else(|| Error::config("[mesh] is missing `divisions`"))?;
                MeshSource::Box { extent, divisions, kind: r.get("mesh", "kind")?.unwrap_or(ElementKind::H8) }
            }
            (None, None) => return Err(Error::config("[mesh] needs `generate` or `file`")),
        };

        let material = material_section(&r)?;
        let hourglass = r.get("material", "hourglass")?.unwrap_or(0.1);
        if !(hourglass >= 0.0) {
            return Err(Error::config("hourglass coefficient must be non-negative"));
        }

        let mut fix = Vec::new();
        for (line, v) in r.all("bc", "fix") {
            let (selector, rest) = split_rule(v, 1, line)?;
            fix.push(FixRule { selector, axes: parse_axes(rest[0], line)? });
        }
        let mut prescribe = Vec::new();
        for (line, v) in r.all("bc", "prescribe") {
            let (selector, rest) = split_rule(v, 3, line)?;
            let axis = match parse_axes(rest[0], line)?.as_slice() {
                [a] => *a,
                _ => return Err(Error::Parse { line, message: "prescribe takes a single axis".into() }),
            };
            let ramp = parse_real(rest[2], line)?;
            if !(ramp > 0.0) {
                return Err(Error::Parse { line, message: "ramp time must be positive".into() });
            }
            prescribe.push(PrescribeRule { selector, axis, target: parse_real(rest[1], line)?, ramp });
        }

        let safety: Real = r.get("time", "safety")?.unwrap_or(0.8);
        if !(safety > 0.0 && safety <= 1.0) {
            return Err(Error::config(format!("safety must lie in (0, 1], got {safety}")));
        }
        let dt = match r.raw("time", "dt") {
            None | Some((_, "auto")) => TimeStep::Auto { safety },
            Some((line, v)) => {
                if r.raw("time", "safety").is_some() {
                    return Err(Error::Parse { line, message: "`safety` only applies to `dt = auto`".into() });
                }
                let dt = parse_real(v, line)?;
                if !(dt > 0.0) || !dt.is_finite() {
                    return Err(Error::Parse { line, message: "dt must be positive".into() });
                }
                TimeStep::Fixed(dt)
            }
        };
        let t_end: Real = r.require("time", "t_end")?;
        if !(t_end >= 0.0) || !t_end.is_finite() {
            return Err(Error::config("t_end must be non-negative"));
        }
        let damping = match r.raw("time", "damping") {
            None => return Err(Error::config("[time] is missing `damping` (a value in 1/s, or `relaxation`)")),
            Some((_, "relaxation")) => Damping::Relaxation,
            Some((line, v)) => {
                let a = parse_real(v, line)?;
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::Parse { line, message: "damping must be non-negative".into() });
                }
                Damping::Value(a)
            }
        };

        let output = OutputConfig {
            field: r.get::<String>("output", "field")?.map(resolve),
            report: r.get::<String>("output", "report")?.map(resolve),
            frame_stride: r.get("output", "frame_stride")?.unwrap_or(0),
        };

        Ok(RunConfig {
            mesh,
            material,
            hourglass,
            fix,
            prescribe,
            dt,
            t_end,
            damping,
            engine: r.get("run", "engine")?.unwrap_or(EngineChoice::One(Engine::Djtled)),
            threads: r.get("run", "threads")?.unwrap_or(Threads(Some(1))),
            output,
            bench: bench_section(&r)?,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read configuration {}: {e}", path.display())))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Builds the mesh and boundary conditions. Every selector must match at
    /// least one node.
    pub fn problem(&self) -> Result<Problem> {
        let mesh = self.mesh.load()?;
        let mut bcs = BoundaryConditions::default();
        for rule in &self.fix {
            bcs.fix(non_empty(&rule.selector, &mesh)?, &rule.axes);
        }
        for rule in &self.prescribe {
            bcs.prescribe(non_empty(&rule.selector, &mesh)?, rule.axis, rule.target, rule.ramp);
        }
        bcs.validate(&mesh)?;
        Ok(Problem {
            mesh,
            material: self.material,
            bcs,
            hourglass: self.hourglass,
            dt: self.dt,
            t_end: self.t_end,
            damping: self.damping,
        })
    }
}

fn non_empty(selector: &Selector, mesh: &Mesh) -> Result<Vec<usize>> {
    let nodes = selector.select(mesh);
    if nodes.is_empty() {
        return Err(Error::config(format!("selector {selector:?} matches no nodes")));
    }
    Ok(nodes)
}

/// A fully resolved problem, independent of how it was described.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub mesh: Mesh,
    pub material: Material,
    pub bcs: BoundaryConditions,
    pub hourglass: Real,
    pub dt: TimeStep,
    pub t_end: Real,
    pub damping: Damping,
}

/// Engine-independent run options.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub parallelism: Parallelism,
    pub policy: InversionPolicy,
    pub allow_unstable: bool,
    pub frame_stride: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            parallelism: Parallelism::serial(),
            policy: InversionPolicy::Abort,
            allow_unstable: false,
            frame_stride: 0,
        }
    }
}

/// One engine's result.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub engine: Engine,
    pub field: Vec<Vec3>,
    pub summary: RunSummary,
    pub critical_dt: Real,
    pub damping: Real,
    pub precompute_seconds: f64,
}

impl Problem {
    pub fn time_settings(&self, model: &Model, allow_unstable: bool) -> TimeSettings {
        let dt = match self.dt {
            TimeStep::Auto { safety } => safety * model.critical_dt(),
            TimeStep::Fixed(dt) => dt,
        };
        let damping = match self.damping {
            Damping::Value(a) => a,
            Damping::Relaxation => relaxation_damping(&self.mesh, &self.material),
        };
        TimeSettings { dt, damping, allow_unstable }
    }

    pub fn simulation(&self, engine: Engine, opts: &RunOptions) -> Result<Simulation> {
        let model = Model::build(&self.mesh, &self.material, engine, self.hourglass)?;
        let settings = self.time_settings(&model, opts.allow_unstable);
        Ok(Simulation::new(model, self.bcs.clone(), settings)?
            .with_parallelism(opts.parallelism.clone())
            .with_inversion_policy(opts.policy))
    }

    /// Runs one engine to `t_end`. `frame` receives `(step, field)` every
    /// `frame_stride` steps.
    pub fn run(
        &self,
        engine: Engine,
        opts: &RunOptions,
        mut progress: impl FnMut(&Progress),
        mut frame: impl FnMut(usize, &[Vec3]) -> Result<()>,
    ) -> Result<Outcome> {
        let mut sim = self.simulation(engine, opts)?;
        let critical_dt = sim.model().critical_dt();
        let precompute_seconds = sim.model().precompute_seconds();
        let damping = match self.damping {
            Damping::Value(a) => a,
            Damping::Relaxation => relaxation_damping(&self.mesh, &self.material),
        };
        let stride = opts.frame_stride;
        let summary = if stride == 0 {
            sim.run(self.t_end, &mut progress)?
        } else {
            let total = steps_for(self.t_end, sim.dt())?;
            let mut stepped = 0.0;
            let mut peak_step = 0;
            while sim.steps() < total {
                let chunk = stride.min(total - sim.steps());
                let t0 = std::time::Instant::now();
                for _ in 0..chunk {
                    sim.step()?;
                }
                stepped += t0.elapsed().as_secs_f64();
                peak_step = sim.steps();
                progress(&Progress {
                    step: sim.steps(),
                    t: sim.time(),
                    max_displacement: sim.max_displacement(),
                    step_seconds: t0.elapsed().as_secs_f64() / chunk as f64,
                });
                frame(sim.steps(), sim.displacements())?;
            }
            RunSummary {
                steps: peak_step,
                dt: sim.dt(),
                t_end: sim.time(),
                total_seconds: stepped,
                mean_step_seconds: if peak_step > 0 { stepped / peak_step as f64 } else { 0.0 },
                max_displacement: sim.max_displacement(),
                inversions: sim.inversions(),
            }
        };
        Ok(Outcome {
            engine,
            field: sim.displacements().to_vec(),
            summary,
            critical_dt,
            damping,
            precompute_seconds,
        })
    }
}
