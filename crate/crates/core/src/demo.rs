//! A scripted end-to-end example on a synthetic brain-like geometry: an
//! ellipsoid carved from a T4 box, a fixed base, and a localised surface
//! patch pulled by a prescribed displacement. Both engines run to steady
//! state and the fields are compared.

use std::fmt::Write as _;

use crate::config::{Damping, Outcome, Problem, RunOptions, TimeStep};
use crate::element::ElementKind;
use crate::materials::Material;
use crate::mesh::{generate_box, Axis, BoundaryConditions, Mesh, Selector};
use crate::metrics::{flatten, nre, rmse_fields, NreHistogram};
use crate::solver::Engine;
use crate::{Error, Real, Result, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct DemoSpec {
    /// Ellipsoid semi-axes (m).
    pub semi_axes: [Real; 3],
    /// Grid cells along the longest axis of the carving box.
    pub resolution: usize,
    /// Nodes in the lowest `base_fraction` of the height are fixed.
    pub base_fraction: Real,
    /// Patch sphere centre, relative to the ellipsoid centre (m).
    pub patch_offset: Vec3,
    pub patch_radius: Real,
    /// Final patch displacement (m).
    pub displacement: Vec3,
    pub material: Material,
    /// Ramp duration of the patch displacement (s).
    pub ramp: Real,
    pub t_end: Real,
    pub damping: Damping,
}

impl Default for DemoSpec {
    fn default() -> Self {
        let semi_axes = [0.07, 0.085, 0.06];
        DemoSpec {
            semi_axes,
            resolution: 24,
            base_fraction: 0.15,
            patch_offset: Vec3::new(0.0, 0.0, semi_axes[2]),
            patch_radius: 0.025,
            displacement: Vec3::new(-0.009, 0.009, -0.007),
            material: Material::neo_hookean(1006.712, 50000.0, 1060.0).unwrap(),
            ramp: 1.0,
            t_end: 2.0,
            damping: Damping::Relaxation,
        }
    }
}

/// The ellipsoid mesh: the T4 split of every box cell whose centre lies
/// inside the ellipsoid. The ellipsoid centre sits at the semi-axes.
pub fn ellipsoid_mesh(semi_axes: [Real; 3], resolution: usize) -> Result<Mesh> {
    if semi_axes.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::config("ellipsoid semi-axes must be positive"));
    }
    if resolution < 2 {
        return Err(Error::config("demo resolution must be at least 2"));
    }
    let longest = semi_axes.iter().cloned().fold(0.0, Real::max);
    let cell = 2.0 * longest / resolution as Real;
    let divisions = semi_axes.map(|a| ((2.0 * a / cell).round() as usize).max(1));
    let extent = semi_axes.map(|a| 2.0 * a);
    let centre = Vec3::from(semi_axes);
    let scale = Vec3::from(semi_axes).map(|a| 1.0 / a);
    generate_box(extent, divisions, ElementKind::T4)?.retain_elements(|x| {
        // every tetrahedron of a cell spans the cell's main diagonal
        let mid = (x[0] + x[3]) / 2.0 - centre;
        mid.component_mul(&scale).norm_squared() <= 1.0
    })
}

impl DemoSpec {
    pub fn centre(&self) -> Vec3 {
        Vec3::from(self.semi_axes)
    }

    /// Mesh, fixed base and patch, checked for a non-empty patch disjoint
    /// from the base.
    pub fn problem(&self) -> Result<Problem> {
        let mesh = ellipsoid_mesh(self.semi_axes, self.resolution)?;
        let (lo, hi) = mesh.bounds();
        let cut = lo.z + self.base_fraction * (hi.z - lo.z);
        let base: Vec<usize> = (0..mesh.nodes.len()).filter(|&i| mesh.nodes[i].z <= cut).collect();
        let patch = Selector::All(vec![
            Selector::Boundary,
            Selector::Sphere { centre: self.centre() + self.patch_offset, radius: self.patch_radius },
        ])
        .select(&mesh);
        if base.is_empty() {
            return Err(Error::config("demo base selection is empty"));
        }
        if patch.is_empty() {
            return Err(Error::config("demo patch selection is empty"));
        }
        if patch.iter().any(|p| base.binary_search(p).is_ok()) {
            return Err(Error::config("demo patch overlaps the fixed base"));
        }
        let mut bcs = BoundaryConditions::default();
        bcs.fix(base, &Axis::ALL);
        for axis in Axis::ALL {
            bcs.prescribe(patch.clone(), axis, self.displacement[axis.index()], self.ramp);
        }
        bcs.validate(&mesh)?;
        Ok(Problem {
            mesh,
            material: self.material,
            bcs,
            hourglass: 0.0,
            dt: TimeStep::Auto { safety: 0.8 },
            t_end: self.t_end,
            damping: self.damping,
        })
    }
}

/// Both engines' results and their comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct DemoReport {
    pub nodes: usize,
    pub elements: usize,
    pub patch_nodes: usize,
    pub fixed_nodes: usize,
    pub djtled: Outcome,
    pub tled: Outcome,
    pub rmse: Real,
    /// `None` when the reference field is uniform (e.g. zero displacement).
    pub histogram: Option<NreHistogram>,
}

impl DemoReport {
    pub fn ratio(&self) -> f64 {
        self.djtled.summary.mean_step_seconds / self.tled.summary.mean_step_seconds
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let s = &self.djtled.summary;
        let _ = writeln!(out, "demo-brain: ellipsoid T4 mesh, {} nodes, {} elements", self.nodes, self.elements);
        let _ = writeln!(out, "fixed base nodes: {}, patch nodes: {}", self.fixed_nodes, self.patch_nodes);
        let _ = writeln!(out, "steps: {}  dt: {:e} s  t_end: {} s  damping: {} 1/s", s.steps, s.dt, s.t_end, self.djtled.damping);
        for o in [&self.djtled, &self.tled] {
            let _ = writeln!(
                out,
                "{:>6}: total {:.3} s, mean step {:.3} us, precompute {:.3} s, max |u| {:e} m",
                o.engine.to_string(),
                o.summary.total_seconds,
                o.summary.mean_step_seconds * 1e6,
                o.precompute_seconds,
                o.summary.max_displacement
            );
        }
        let _ = writeln!(out, "ratio djtled/tled: {:.3}", self.ratio());
        let _ = writeln!(out, "rmse: {:e} m", self.rmse);
        match &self.histogram {
            Some(h) => {
                let _ = writeln!(out, "nre histogram ({} dofs):", h.total());
                out.push_str(&h.render());
            }
            None => out.push_str("nre histogram: reference field is uniform\n"),
        }
        out
    }
}

pub fn run_demo(spec: &DemoSpec, opts: &RunOptions) -> Result<DemoReport> {
    let problem = spec.problem()?;
    let run = |engine| problem.run(engine, opts, |_| {}, |_, _| Ok(()));
    let djtled = run(Engine::Djtled)?;
    let tled = run(Engine::Tled)?;
    let rmse = rmse_fields(&djtled.field, &tled.field)?;
    let histogram = nre(&flatten(&djtled.field), &flatten(&tled.field)).ok().map(|v| NreHistogram::new(&v));
    let fixed_nodes = problem.bcs.fixed.iter().map(|(n, _)| *n).collect::<std::collections::BTreeSet<_>>().len();
    Ok(DemoReport {
        nodes: problem.mesh.nodes.len(),
        elements: problem.mesh.elements.len(),
        patch_nodes: problem.bcs.prescribed.first().map_or(0, |p| p.nodes.len()),
        fixed_nodes,
        djtled,
        tled,
        rmse,
        histogram,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> DemoSpec {
        DemoSpec { resolution: 6, t_end: 0.3, ramp: 0.2, ..Default::default() }
    }

    #[test]
    fn ellipsoid_is_inside_its_box() {
        let spec = DemoSpec::default();
        let mesh = ellipsoid_mesh(spec.semi_axes, 8).unwrap();
        let (lo, hi) = mesh.bounds();
        assert!(lo.iter().all(|&v| v >= 0.0));
        assert!(hi.iter().zip(spec.semi_axes).all(|(&h, a)| h <= 2.0 * a + 1e-12));
        let volume: Real = crate::precompute::element_volumes(&mesh).unwrap().iter().sum();
        let exact = 4.0 / 3.0 * std::f64::consts::PI as Real * spec.semi_axes.iter().product::<Real>();
        assert!((volume / exact - 1.0).abs() < 0.25, "{volume} vs {exact}");
    }

    #[test]
    fn default_selection_is_valid() {
        let p = DemoSpec::default().problem().unwrap();
        assert_eq!(p.bcs.prescribed.len(), 3);
        assert!(!p.bcs.prescribed[0].nodes.is_empty());
    }

    #[test]
    fn zero_displacement_gives_zero_field() {
        let spec = DemoSpec { displacement: Vec3::zeros(), ..small() };
        let r = run_demo(&spec, &RunOptions::default()).unwrap();
        assert!(r.djtled.field.iter().all(|u| *u == Vec3::zeros()));
        assert_eq!(r.rmse, 0.0);
        assert!(r.histogram.is_none());
    }

    #[test]
    fn doubling_the_patch_displacement_is_not_linear() {
        let spec = small();
        let p = spec.problem().unwrap();
        let constrained: std::collections::BTreeSet<usize> =
            p.bcs.fixed.iter().map(|(n, _)| *n).chain(p.bcs.prescribed[0].nodes.iter().copied()).collect();
        let peak = |spec: &DemoSpec| {
            let r = run_demo(spec, &RunOptions::default()).unwrap();
            (0..r.nodes).filter(|n| !constrained.contains(n)).map(|n| r.djtled.field[n].norm()).fold(0.0, Real::max)
        };
        let single = peak(&spec);
        let double = peak(&DemoSpec { displacement: spec.displacement * 2.0, ..spec.clone() });
        assert!(single > 0.0);
        assert!((double / (2.0 * single) - 1.0).abs() > 1e-6, "{single} {double}");
    }

    #[test]
    fn patch_and_base_hold_their_values() {
        let spec = small();
        let p = spec.problem().unwrap();
        let r = run_demo(&spec, &RunOptions::default()).unwrap();
        for q in &p.bcs.prescribed {
            for &n in &q.nodes {
                assert_eq!(r.djtled.field[n][q.axis.index()], q.target);
            }
        }
        for &(n, a) in &p.bcs.fixed {
            assert_eq!(r.djtled.field[n][a.index()], 0.0);
        }
        assert!(r.rmse < 1e-9);
    }
}
