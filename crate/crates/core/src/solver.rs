//! Central-difference time integration with lumped mass, mass-proportional
//! damping and strongly imposed displacement boundary conditions.
//!
//! Per free DOF:
//!
//! ```text
//! u⁺ = [Δt²(R − F)/m + 2u − (1 − αΔt/2) u⁻] / (1 + αΔt/2)
//! ```

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;

use crate::element::ElementKind;
use crate::forces::{assemble, connectivity, hourglass_critical_dt, Adjacency, DjtledElements, ElementForces, InversionPolicy, InversionSummary, Parallelism};
use crate::materials::Material;
use crate::mesh::{Axis, BoundaryConditions, Mesh};
use crate::precompute::{critical_dt_current, critical_dt_with, element_volumes, lump_mass};
use crate::tled::TledElements;
use crate::{Error, Real, Result, Vec3};

/// Which force formulation drives the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Engine {
    Djtled,
    Tled,
}

impl Engine {
    pub const ALL: [Engine; 2] = [Engine::Djtled, Engine::Tled];
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Engine::Djtled => "djtled",
            Engine::Tled => "tled",
        })
    }
}

impl FromStr for Engine {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "djtled" | "dj-tled" => Ok(Engine::Djtled),
            "tled" => Ok(Engine::Tled),
            other => Err(Error::config(format!("unknown engine '{other}'"))),
        }
    }
}

struct Assembly<const N: usize, K> {
    kernel: K,
    adjacency: Adjacency,
    rows: Vec<ElementForces<N>>,
}

impl<const N: usize, K: crate::forces::ElementKernel<N>> Assembly<N, K> {
    fn new(mesh: &Mesh, kernel: K) -> Result<Self> {
        let conn = connectivity::<N>(mesh)?;
        Ok(Assembly { adjacency: Adjacency::build(mesh.nodes.len(), &conn), kernel, rows: Vec::new() })
    }

    fn run(&mut self, u: &[Vec3], f: &mut [Vec3], par: &Parallelism) -> InversionSummary {
        assemble(&self.kernel, &self.adjacency, u, &mut self.rows, f, par)
    }

    fn hourglass_dt(&self, volumes: &[Real], density: Real) -> Real {
        hourglass_critical_dt(self.kernel.hourglass(), volumes, density)
    }
}

enum Kernel {
    DjT4(Assembly<4, DjtledElements<4>>),
    DjH8(Assembly<8, DjtledElements<8>>),
    TlT4(Assembly<4, TledElements<4>>),
    TlH8(Assembly<8, TledElements<8>>),
}

/// A mesh, material and engine with all precomputed data.
pub struct Model {
    mesh: Mesh,
    material: Material,
    engine: Engine,
    kernel: Kernel,
    masses: Vec<Real>,
    critical_dt: Real,
    hourglass_dt: Real,
    precompute_seconds: f64,
}

impl fmt::Debug for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Model")
            .field("engine", &self.engine)
            .field("kind", &self.mesh.kind)
            .field("nodes", &self.mesh.nodes.len())
            .field("elements", &self.mesh.elements.len())
            .finish()
    }
}

impl Model {
    /// Runs the precomputation. `c_hg` scales the H8 hourglass stiffness
    /// (ignored for T4; zero disables it).
    pub fn build(mesh: &Mesh, material: &Material, engine: Engine, c_hg: Real) -> Result<Self> {
        if !(c_hg >= 0.0) {
            return Err(Error::config(format!("hourglass coefficient must be non-negative, got {c_hg}")));
        }
        let start = Instant::now();
        let volumes = element_volumes(mesh)?;
        let masses = lump_mass(mesh, material.density, &volumes);
        let wave_dt = critical_dt_with(mesh, material, &volumes)?;
        let kernel = match (engine, mesh.kind) {
            (Engine::Djtled, ElementKind::T4) => Kernel::DjT4(Assembly::new(mesh, DjtledElements::build(mesh, material, c_hg)?)?),
            (Engine::Djtled, ElementKind::H8) => Kernel::DjH8(Assembly::new(mesh, DjtledElements::build(mesh, material, c_hg)?)?),
            (Engine::Tled, ElementKind::T4) => Kernel::TlT4(Assembly::new(mesh, TledElements::build(mesh, material, c_hg)?)?),
            (Engine::Tled, ElementKind::H8) => Kernel::TlH8(Assembly::new(mesh, TledElements::build(mesh, material, c_hg)?)?),
        };
        let hourglass_dt = match &kernel {
            Kernel::DjH8(a) => a.hourglass_dt(&volumes, material.density),
            Kernel::TlH8(a) => a.hourglass_dt(&volumes, material.density),
            Kernel::DjT4(_) | Kernel::TlT4(_) => Real::INFINITY,
        };
        let critical_dt = wave_dt.min(hourglass_dt);
        Ok(Model {
            mesh: mesh.clone(),
            material: *material,
            engine,
            kernel,
            masses,
            critical_dt,
            hourglass_dt,
            precompute_seconds: start.elapsed().as_secs_f64(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn engine(&self) -> Engine {
        self.engine
    }

    pub fn masses(&self) -> &[Real] {
        &self.masses
    }

    /// Stability limit `min L_e / c`, lowered to the hourglass spring limit
    /// when that is smaller.
    pub fn critical_dt(&self) -> Real {
        self.critical_dt
    }

    /// The stability limit on the current configuration `X + u`. Hourglass
    /// springs act on `u` with reference constants, so their limit is fixed.
    pub fn current_critical_dt(&self, u: &[Vec3]) -> Result<Real> {
        Ok(critical_dt_current(&self.mesh, &self.material, u)?.min(self.hourglass_dt))
    }

    pub fn precompute_seconds(&self) -> f64 {
        self.precompute_seconds
    }

    /// Global internal nodal forces for nodal displacements `u`.
    pub fn internal_forces_unchecked(&mut self, u: &[Vec3], f: &mut [Vec3], par: &Parallelism) -> InversionSummary {
        assert_eq!(u.len(), self.mesh.nodes.len(), "displacement length must equal the node count");
        assert_eq!(f.len(), u.len(), "force length must equal the node count");
        match &mut self.kernel {
            Kernel::DjT4(a) => a.run(u, f, par),
            Kernel::DjH8(a) => a.run(u, f, par),
            Kernel::TlT4(a) => a.run(u, f, par),
            Kernel::TlH8(a) => a.run(u, f, par),
        }
    }

    /// As [`Model::internal_forces_unchecked`], failing on inversion under
    /// [`InversionPolicy::Abort`].
    pub fn internal_forces(
        &mut self,
        u: &[Vec3],
        f: &mut [Vec3],
        par: &Parallelism,
        policy: InversionPolicy,
    ) -> Result<InversionSummary> {
        if u.len() != self.mesh.nodes.len() || f.len() != u.len() {
            return Err(Error::invalid("field length does not match the node count"));
        }
        let s = self.internal_forces_unchecked(u, f, par);
        match (policy, s.first) {
            (InversionPolicy::Abort, Some((element, j))) => Err(Error::Inversion { element, det: j as f64, step: 0 }),
            _ => Ok(s),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Dof {
    Free,
    Fixed,
    Prescribed(u32),
}

/// Time-stepping parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeSettings {
    pub dt: Real,
    /// Mass-proportional damping coefficient `α` (1/s).
    pub damping: Real,
    /// Accept `dt` above the critical step.
    pub allow_unstable: bool,
}

/// Progress record passed to the reporting hook after each step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub step: usize,
    pub t: Real,
    pub max_displacement: Real,
    pub step_seconds: f64,
}

/// Outcome of [`Simulation::run`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub steps: usize,
    pub dt: Real,
    pub t_end: Real,
    pub total_seconds: f64,
    pub mean_step_seconds: f64,
    pub max_displacement: Real,
    pub inversions: usize,
}

/// Simulation state: two displacement levels, forces, clock.
pub struct Simulation {
    model: Model,
    bcs: BoundaryConditions,
    dofs: Vec<[Dof; 3]>,
    inv_mass: Vec<Real>,
    u_curr: Vec<Vec3>,
    u_prev: Vec<Vec3>,
    u_next: Vec<Vec3>,
    f_int: Vec<Vec3>,
    r_ext: Vec<Vec3>,
    t: Real,
    step: usize,
    settings: TimeSettings,
    par: Parallelism,
    policy: InversionPolicy,
    inversions: usize,
    guard: Real,
}

impl fmt::Debug for Simulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Simulation").field("model", &self.model).field("t", &self.t).field("step", &self.step).finish()
    }
}

impl Simulation {
    /// Starts at rest at `t = 0`. Fails when `dt` exceeds the critical step
    /// unless `allow_unstable` is set.
    pub fn new(model: Model, bcs: BoundaryConditions, settings: TimeSettings) -> Result<Self> {
        bcs.validate(model.mesh())?;
        if !(settings.dt > 0.0) || !settings.dt.is_finite() {
            return Err(Error::config(format!("time step must be positive, got {}", settings.dt)));
        }
        if !(settings.damping >= 0.0) || !settings.damping.is_finite() {
            return Err(Error::config(format!("damping must be non-negative, got {}", settings.damping)));
        }
        if settings.dt > model.critical_dt() && !settings.allow_unstable {
            return Err(Error::Stability { dt: settings.dt as f64, critical: model.critical_dt() as f64 });
        }
        let n = model.mesh().nodes.len();
        let mut dofs = vec![[Dof::Free; 3]; n];
        for &(node, axis) in &bcs.fixed {
            dofs[node][axis.index()] = Dof::Fixed;
        }
        for (k, p) in bcs.prescribed.iter().enumerate() {
            for &node in &p.nodes {
                dofs[node][p.axis.index()] = Dof::Prescribed(k as u32);
            }
        }
        let (lo, hi) = model.mesh().bounds();
        let target = bcs.prescribed.iter().map(|p| p.target.abs()).fold(0.0, Real::max);
        let guard = 100.0 * ((hi - lo).norm() + target);
        let inv_mass = model.masses().iter().map(|m| 1.0 / m).collect();
        Ok(Simulation {
            model,
            bcs,
            dofs,
            inv_mass,
            u_curr: vec![Vec3::zeros(); n],
            u_prev: vec![Vec3::zeros(); n],
            u_next: vec![Vec3::zeros(); n],
            f_int: vec![Vec3::zeros(); n],
            r_ext: vec![Vec3::zeros(); n],
            t: 0.0,
            step: 0,
            settings,
            par: Parallelism::serial(),
            policy: InversionPolicy::Abort,
            inversions: 0,
            guard,
        })
    }

    pub fn with_parallelism(mut self, par: Parallelism) -> Self {
        self.par = par;
        self
    }

    pub fn with_inversion_policy(mut self, policy: InversionPolicy) -> Self {
        self.policy = policy;
        self
    }

    /// Constant external nodal forces `R`.
    pub fn set_external_forces(&mut self, r: Vec<Vec3>) -> Result<()> {
        if r.len() != self.u_curr.len() {
            return Err(Error::invalid("external force length does not match the node count"));
        }
        self.r_ext = r;
        Ok(())
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn model_mut(&mut self) -> &mut Model {
        &mut self.model
    }

    pub fn displacements(&self) -> &[Vec3] {
        &self.u_curr
    }

    pub fn previous_displacements(&self) -> &[Vec3] {
        &self.u_prev
    }

    /// Internal forces from the most recent step (evaluated at the state the
    /// step started from).
    pub fn internal_forces(&self) -> &[Vec3] {
        &self.f_int
    }

    pub fn time(&self) -> Real {
        self.t
    }

    pub fn steps(&self) -> usize {
        self.step
    }

    pub fn dt(&self) -> Real {
        self.settings.dt
    }

    pub fn inversions(&self) -> usize {
        self.inversions
    }

    pub fn boundary_conditions(&self) -> &BoundaryConditions {
        &self.bcs
    }

    /// `Σ m |u − u⁻|² / Δt²`.
    pub fn kinetic_proxy(&self) -> Real {
        let dt2 = self.settings.dt * self.settings.dt;
        self.u_curr
            .iter()
            .zip(&self.u_prev)
            .zip(self.model.masses())
            .map(|((a, b), m)| m * (a - b).norm_squared())
            .sum::<Real>()
            / dt2
    }

    pub fn max_displacement(&self) -> Real {
        self.u_curr.iter().map(|u| u.norm()).fold(0.0, Real::max)
    }

    /// Sum over `nodes` of the internal force component along `axis` at the
    /// current displacements: the support reaction at steady state.
    pub fn reaction(&mut self, nodes: &[usize], axis: Axis) -> Result<Real> {
        let mut f = vec![Vec3::zeros(); self.u_curr.len()];
        self.model.internal_forces(&self.u_curr, &mut f, &self.par, InversionPolicy::Abort)?;
        Ok(nodes.iter().map(|&n| f[n][axis.index()]).sum())
    }

    /// Advances by one `Δt`.
    pub fn step(&mut self) -> Result<()> {
        let summary = self.model.internal_forces_unchecked(&self.u_curr, &mut self.f_int, &self.par);
        if let Some((element, j)) = summary.first {
            match self.policy {
                InversionPolicy::Abort => {
                    return Err(Error::Inversion { element, det: j as f64, step: self.step + 1 });
                }
                InversionPolicy::Report => self.inversions += summary.count,
            }
        }
        let dt = self.settings.dt;
        let t_next = self.t + dt;
        let half = 0.5 * self.settings.damping * dt;
        let (c_next, c_prev) = (1.0 / (1.0 + half), 1.0 - half);
        let dt2 = dt * dt;
        let targets: Vec<Real> = self.bcs.prescribed.iter().map(|p| p.value_at(t_next)).collect();
        let update = |(i, next): (usize, &mut Vec3)| {
            let accel = (self.r_ext[i] - self.f_int[i]) * (dt2 * self.inv_mass[i]);
            let free = (accel + self.u_curr[i] * 2.0 - self.u_prev[i] * c_prev) * c_next;
            for k in 0..3 {
                next[k] = match self.dofs[i][k] {
                    Dof::Free => free[k],
                    Dof::Fixed => 0.0,
                    Dof::Prescribed(p) => targets[p as usize],
                };
            }
        };
        match self.par.pool() {
            None => self.u_next.iter_mut().enumerate().for_each(update),
            Some(pool) => pool.install(|| self.u_next.par_iter_mut().enumerate().with_min_len(1024).for_each(update)),
        }
        let guard = self.guard;
        if self.u_next.iter().any(|u| !(u.x.abs() <= guard && u.y.abs() <= guard && u.z.abs() <= guard)) {
            return Err(Error::Divergence { step: self.step + 1 });
        }
        std::mem::swap(&mut self.u_prev, &mut self.u_curr);
        std::mem::swap(&mut self.u_curr, &mut self.u_next);
        self.t = t_next;
        self.step += 1;
        Ok(())
    }

    /// Steps until `t_end` (rounded to a whole number of steps).
    pub fn run(&mut self, t_end: Real, mut hook: impl FnMut(&Progress)) -> Result<RunSummary> {
        let steps = steps_for(t_end, self.settings.dt)?;
        let start = Instant::now();
        for _ in 0..steps {
            let t0 = Instant::now();
            self.step()?;
            hook(&Progress {
                step: self.step,
                t: self.t,
                max_displacement: self.max_displacement(),
                step_seconds: t0.elapsed().as_secs_f64(),
            });
        }
        let total = start.elapsed().as_secs_f64();
        Ok(RunSummary {
            steps,
            dt: self.settings.dt,
            t_end: self.t,
            total_seconds: total,
            mean_step_seconds: if steps > 0 { total / steps as f64 } else { 0.0 },
            max_displacement: self.max_displacement(),
            inversions: self.inversions,
        })
    }
}

/// Number of steps covering `t_end`, tolerant of rounding in `t_end/dt`.
pub fn steps_for(t_end: Real, dt: Real) -> Result<usize> {
    if !(t_end >= 0.0) || !t_end.is_finite() {
        return Err(Error::config(format!("end time must be non-negative, got {t_end}")));
    }
    let n = t_end / dt;
    Ok((n - 1e-9 * n.max(1.0)).ceil().max(0.0) as usize)
}

/// Heavy damping for driving a problem to steady state: `α = 2ω₀` with
/// `ω₀ = (π/2) sqrt(E/ρ) / L` the fundamental bar frequency over the longest
/// box extent.
pub fn relaxation_damping(mesh: &Mesh, material: &Material) -> Real {
    let (lo, hi) = mesh.bounds();
    let length = (hi - lo).max();
    let omega = std::f64::consts::PI as Real / 2.0 * (material.youngs_modulus() / material.density).sqrt() / length;
    2.0 * omega
}
