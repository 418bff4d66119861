//! Per-step timing of both engines over a ladder of generated box meshes.
//!
//! Each case drives the same ramped-extension problem through a DJ-TLED and
//! a TLED simulation. Steps are timed in interleaved batches and the median
//! batch mean is reported, so slow drifts in machine load hit both engines
//! alike.

use std::fmt::Write as _;
use std::str::FromStr;
use std::time::Instant;

use crate::element::ElementKind;
use crate::forces::Parallelism;
use crate::materials::Material;
use crate::mesh::{generate_box, Axis, BoundaryConditions, Mesh, Selector};
use crate::solver::{relaxation_damping, Engine, Model, Simulation, TimeSettings};
use crate::{Error, Real, Result};

pub const CSV_HEADER: &str = "dofs,kind,material,engine,threads,mean_step_us,ratio";

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSettings {
    /// Divisions per box side, one ladder rung each.
    pub sizes: Vec<usize>,
    pub kinds: Vec<ElementKind>,
    pub materials: Vec<Material>,
    pub steps: usize,
    pub warmup: usize,
    pub threads: Vec<usize>,
    /// Steps per timed batch.
    pub batch: usize,
    pub hourglass: Real,
}

impl Default for BenchSettings {
    fn default() -> Self {
        BenchSettings {
            sizes: vec![6, 9, 12, 15],
            kinds: vec![ElementKind::T4, ElementKind::H8],
            materials: Material::reference_set().to_vec(),
            steps: 1000,
            warmup: 100,
            threads: vec![1],
            batch: 10,
            hourglass: 0.1,
        }
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub dofs: usize,
    pub kind: ElementKind,
    pub material: &'static str,
    pub engine: Engine,
    pub threads: usize,
    pub mean_step_us: f64,
    /// DJ-TLED over TLED mean step time for the same case.
    pub ratio: f64,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3},{:.4}",
            self.dofs, self.kind, self.material, self.engine, self.threads, self.mean_step_us, self.ratio
        )
    }
}

pub fn render_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(out, "{}", r.csv());
    }
    out
}

/// Unit box with `d` divisions per side: `zmin` fixed, `zmax` pulled 20 %
/// along `z` over the whole timed run.
pub fn bench_problem(d: usize, kind: ElementKind) -> Result<(Mesh, BoundaryConditions)> {
    if d == 0 {
        return Err(Error::config("bench size must be at least 1"));
    }
    let mesh = generate_box([0.1; 3], [d; 3], kind)?;
    let mut bcs = BoundaryConditions::default();
    bcs.fix(Selector::from_str("zmin")?.select(&mesh), &Axis::ALL);
    bcs.prescribe(Selector::from_str("zmax")?.select(&mesh), Axis::Z, 0.02, 1.0);
    Ok((mesh, bcs))
}

fn simulation(
    mesh: &Mesh,
    bcs: &BoundaryConditions,
    material: &Material,
    engine: Engine,
    threads: usize,
    c_hg: Real,
    total_steps: usize,
) -> Result<Simulation> {
    let model = Model::build(mesh, material, engine, c_hg)?;
    let dt = 0.8 * model.critical_dt();
    let mut bcs = bcs.clone();
    for p in &mut bcs.prescribed {
        p.ramp = dt * total_steps.max(1) as Real;
    }
    let settings = TimeSettings { dt, damping: relaxation_damping(mesh, material), allow_unstable: false };
    Ok(Simulation::new(model, bcs, settings)?.with_parallelism(Parallelism::threads(threads)?))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Mean seconds per step of several simulations, timed in interleaved
/// batches after a warm-up.
pub fn time_interleaved(sims: &mut [Simulation], steps: usize, warmup: usize, batch: usize) -> Result<Vec<f64>> {
    let batch = batch.max(1);
    for sim in sims.iter_mut() {
        for _ in 0..warmup {
            sim.step()?;
        }
    }
    let mut samples = vec![Vec::new(); sims.len()];
    let mut done = 0;
    while done < steps {
        let n = batch.min(steps - done);
        for (k, sim) in sims.iter_mut().enumerate() {
            let t0 = Instant::now();
            for _ in 0..n {
                sim.step()?;
            }
            samples[k].push(t0.elapsed().as_secs_f64() / n as f64);
        }
        done += n;
    }
    Ok(samples.into_iter().map(median).collect())
}

/// Times both engines on one case.
pub fn bench_case(
    d: usize,
    kind: ElementKind,
    material: &Material,
    threads: usize,
    settings: &BenchSettings,
) -> Result<[BenchRow; 2]> {
    let (mesh, bcs) = bench_problem(d, kind)?;
    let total = settings.steps + settings.warmup;
    let mut sims = Engine::ALL
        .iter()
        .map(|&e| simulation(&mesh, &bcs, material, e, threads, settings.hourglass, total))
        .collect::<Result<Vec<_>>>()?;
    let means = time_interleaved(&mut sims, settings.steps, settings.warmup, settings.batch)?;
    let ratio = means[0] / means[1];
    Ok(std::array::from_fn(|k| BenchRow {
        dofs: mesh.dofs(),
        kind,
        material: material.tag(),
        engine: Engine::ALL[k],
        threads,
        mean_step_us: means[k] * 1e6,
        ratio,
    }))
}

/// Full ladder in a fixed row order: kind, material, threads, size, engine.
pub fn run_bench(settings: &BenchSettings, mut progress: impl FnMut(&BenchRow)) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::new();
    for &kind in &settings.kinds {
        for material in &settings.materials {
            for &threads in &settings.threads {
                for &d in &settings.sizes {
                    for row in bench_case(d, kind, material, threads, settings)? {
                        progress(&row);
                        rows.push(row);
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Least-squares line `y = a + b x` and its coefficient of determination.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (my - slope * mx, slope, r2)
}

/// Step rate in Hz for a mean step time in microseconds.
pub fn step_rate(mean_step_us: f64) -> f64 {
    1e6 / mean_step_us
}
