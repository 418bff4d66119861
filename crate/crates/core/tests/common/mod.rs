//! Independent oracles and random element states shared by the test targets.
#![allow(dead_code)]

use djtled::element::{ElementKind, HEX8_CORNERS};
use djtled::kinematics::{InvariantNeeds, Invariants};
use djtled::materials::{EnergyDerivatives, Material, StrainEnergy};
use djtled::mesh::Mesh;
use djtled::prelude::*;
use djtled::Mat3;
use rand::Rng;

/// Invariants `I₁…I₇` and `J` from an explicitly formed `C = XᵀX`.
#[derive(Debug, Clone, Copy)]
pub struct Explicit {
    pub j: f64,
    pub i: [f64; 7],
}

/// `X = ᵗJᵀ ⁰J⁻ᵀ`, so that `C = ⁰J⁻¹ ᵗJ ᵗJᵀ ⁰J⁻ᵀ`.
pub fn deformation_gradient(j0: &Mat3, jt: &Mat3) -> Mat3 {
    let j0_inv = j0.try_inverse().expect("invertible reference Jacobian");
    jt.transpose() * j0_inv.transpose()
}

pub fn explicit_invariants(x: &Mat3, a: &Vec3, b: &Vec3) -> Explicit {
    let c = x.transpose() * x;
    let c2 = c * c;
    let i1 = c.trace();
    Explicit {
        j: x.determinant(),
        i: [
            i1,
            0.5 * (i1 * i1 - c2.trace()),
            c.determinant(),
            a.dot(&(c * a)),
            a.dot(&(c2 * a)),
            b.dot(&(c * b)),
            b.dot(&(c2 * b)),
        ],
    }
}

pub fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

pub fn random_matrix(rng: &mut impl Rng, spread: f64) -> Mat3 {
    Mat3::from_fn(|_, _| rng.gen_range(-spread..spread))
}

pub fn random_unit(rng: &mut impl Rng) -> Vec3 {
    loop {
        let v = Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.2 && n <= 1.0 {
            return v / n;
        }
    }
}

/// A deformation gradient with `det X ≥ 0.3`, up to roughly 50 % strain.
pub fn random_gradient(rng: &mut impl Rng) -> Mat3 {
    loop {
        let x = Mat3::identity() + random_matrix(rng, 0.4);
        if x.determinant() >= 0.3 {
            return x;
        }
    }
}

/// Node coordinates of a distorted element of size `h` near the origin.
pub fn random_coords<const N: usize>(rng: &mut impl Rng, h: f64) -> [Vec3; N] {
    loop {
        let coords: [Vec3; N] = std::array::from_fn(|a| {
            let base = if N == 4 {
                [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()][a]
            } else {
                (Vec3::from(HEX8_CORNERS[a]) + Vec3::repeat(1.0)) * 0.5
            };
            let jitter = Vec3::new(rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15), rng.gen_range(-0.15..0.15));
            (base + jitter) * h
        });
        if single_element(&coords).is_ok() {
            return coords;
        }
    }
}

pub fn kind_of<const N: usize>() -> ElementKind {
    if N == 4 {
        ElementKind::T4
    } else {
        ElementKind::H8
    }
}

pub fn single_element<const N: usize>(coords: &[Vec3; N]) -> djtled::Result<Mesh> {
    Mesh::new(coords.to_vec(), vec![(0..N).collect()], kind_of::<N>())
}

/// An affine displacement `(X − I)x` plus a small non-affine part.
pub fn random_displacement<const N: usize>(rng: &mut impl Rng, coords: &[Vec3; N], h: f64) -> [Vec3; N] {
    let x = random_gradient(rng);
    std::array::from_fn(|a| {
        let noise = Vec3::new(rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03), rng.gen_range(-0.03..0.03));
        (x - Mat3::identity()) * coords[a] + noise * h
    })
}

/// Internal nodal forces of a one-element model without hourglass control.
pub fn model_forces<const N: usize>(
    coords: &[Vec3; N],
    u: &[Vec3; N],
    material: &Material,
    engine: Engine,
) -> djtled::Result<Vec<Vec3>> {
    let mesh = single_element(coords)?;
    let mut model = Model::build(&mesh, material, engine, 0.0)?;
    let mut f = vec![Vec3::zeros(); N];
    model.internal_forces(u, &mut f, &Parallelism::serial(), InversionPolicy::Abort)?;
    Ok(f)
}

/// Largest nodal difference relative to the largest nodal force.
pub fn force_mismatch(a: &[Vec3], b: &[Vec3]) -> f64 {
    let scale = a.iter().chain(b).map(|v| v.norm()).fold(0.0, f64::max);
    let diff = a.iter().zip(b).map(|(p, q)| (p - q).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Element strain energy `⁰V Ψ` with the invariants taken from an
/// explicitly formed `C`.
pub fn element_energy<const N: usize>(coords: &[Vec3; N], u: &[Vec3; N], material: &impl StrainEnergy) -> f64 {
    let d = djtled::element::ElementKind::natural_derivatives(kind_of::<N>());
    let (mut j0, mut jt) = (Mat3::zeros(), Mat3::zeros());
    for a in 0..N {
        j0 += d[a] * coords[a].transpose();
        jt += d[a] * (coords[a] + u[a]).transpose();
    }
    let volume = match N {
        4 => j0.determinant() / 6.0,
        _ => j0.determinant() * 8.0,
    };
    let x = deformation_gradient(&j0, &jt);
    let (a, b) = material.fibres();
    let e = explicit_invariants(&x, &a.unwrap_or(Vec3::x()), &b.unwrap_or(Vec3::y()));
    let needs = material.needs();
    let on = |want: bool, v: f64| want.then_some(v);
    let inv = Invariants::from_raw(
        e.j,
        e.i[0],
        on(needs.i2, e.i[1]),
        on(needs.i4, e.i[3]),
        on(needs.i5, e.i[4]),
        on(needs.i6, e.i[5]),
        on(needs.i7, e.i[6]),
    );
    volume * material.energy(&inv)
}

/// Central-difference gradient of [`element_energy`].
pub fn energy_gradient<const N: usize>(
    coords: &[Vec3; N],
    u: &[Vec3; N],
    material: &impl StrainEnergy,
    step: f64,
) -> Vec<Vec3> {
    let mut out = vec![Vec3::zeros(); N];
    for a in 0..N {
        for k in 0..3 {
            let mut up = *u;
            let mut down = *u;
            up[a][k] += step;
            down[a][k] -= step;
            out[a][k] = (element_energy(coords, &up, material) - element_energy(coords, &down, material)) / (2.0 * step);
        }
    }
    out
}

/// An energy using every modified invariant, with hand-written derivatives:
/// `Ψ = c₁(Ī₁−3) + c₂(Ī₂−3) + Σ c_k(Ī_k−1)² (k = 4…7) + κ/2 (J−1)²`.
#[derive(Debug, Clone, Copy)]
pub struct AllInvariants {
    pub c1: f64,
    pub c2: f64,
    pub c: [f64; 4],
    pub kappa: f64,
    pub a: Vec3,
    pub b: Vec3,
}

impl StrainEnergy for AllInvariants {
    fn needs(&self) -> InvariantNeeds {
        InvariantNeeds::all()
    }

    fn fibres(&self) -> (Option<Vec3>, Option<Vec3>) {
        (Some(self.a), Some(self.b))
    }

    fn energy(&self, inv: &Invariants) -> f64 {
        let bars = [inv.i4_bar, inv.i5_bar, inv.i6_bar, inv.i7_bar].map(|v| v.unwrap() - 1.0);
        self.c1 * (inv.i1_bar - 3.0)
            + self.c2 * (inv.i2_bar.unwrap() - 3.0)
            + (0..4).map(|k| self.c[k] * bars[k] * bars[k]).sum::<f64>()
            + 0.5 * self.kappa * (inv.j - 1.0).powi(2)
    }

    fn derivatives(&self, inv: &Invariants) -> EnergyDerivatives {
        let bars = [inv.i4_bar, inv.i5_bar, inv.i6_bar, inv.i7_bar].map(|v| v.unwrap() - 1.0);
        EnergyDerivatives {
            d_i1: self.c1,
            d_i2: Some(self.c2),
            d_i4: Some(2.0 * self.c[0] * bars[0]),
            d_i5: Some(2.0 * self.c[1] * bars[1]),
            d_i6: Some(2.0 * self.c[2] * bars[2]),
            d_i7: Some(2.0 * self.c[3] * bars[3]),
            d_j: self.kappa * (inv.j - 1.0),
        }
    }
}

/// Box of side `side` with `d` cells per axis: `zmin` on rollers pinned
/// against rigid motion, `zmax` ramped to `target` along `z`.
pub fn roller_box(
    extent: [f64; 3],
    divisions: [usize; 3],
    kind: ElementKind,
    target: f64,
    ramp: f64,
) -> (Mesh, BoundaryConditions) {
    use djtled::mesh::{Axis, Selector};
    let mesh = generate_box(extent, divisions, kind).unwrap();
    let sel = |s: &str| s.parse::<Selector>().unwrap().select(&mesh);
    let mut bcs = BoundaryConditions::default();
    bcs.fix(sel("zmin"), &[Axis::Z]);
    bcs.fix(sel("zmin & x=0"), &[Axis::X]);
    bcs.fix(sel("zmin & y=0"), &[Axis::Y]);
    bcs.prescribe(sel("zmax"), Axis::Z, target, ramp);
    (mesh, bcs)
}

/// Hourglass vectors of every element of an H8 mesh.
pub fn mesh_gammas(mesh: &Mesh) -> Vec<[[f64; 8]; 4]> {
    use djtled::element::{jacobian0, ElementShape, ShapeDerivatives};
    let d = ShapeDerivatives::<8>::natural();
    (0..mesh.elements.len())
        .map(|e| {
            let x: [Vec3; 8] = mesh.element_coords(e);
            let j0 = jacobian0(&x, &d).unwrap();
            djtled::precompute::hourglass_vectors(&x, &d, &j0.inv)
        })
        .collect()
}

/// Largest `|γ_m · u|` over elements, modes and components.
pub fn hourglass_amplitude(mesh: &Mesh, gammas: &[[[f64; 8]; 4]], u: &[Vec3]) -> f64 {
    let mut worst = 0.0f64;
    for (conn, gamma) in mesh.elements.iter().zip(gammas) {
        for g in gamma {
            let q: Vec3 = (0..8).map(|a| u[conn[a]] * g[a]).sum();
            worst = worst.max(q.amax());
        }
    }
    worst
}

/// `2/ω_max` of the constrained, linearised system at rest, from power
/// iteration on `M⁻¹K` with `K v` taken as a central difference of the
/// internal forces.
pub fn linearised_critical_dt(model: &mut Model, bcs: &BoundaryConditions, iterations: usize) -> f64 {
    let n = model.mesh().nodes.len();
    let m = model.masses().to_vec();
    let mut held = vec![[false; 3]; n];
    for &(i, a) in &bcs.fixed {
        held[i][a.index()] = true;
    }
    for p in &bcs.prescribed {
        for &i in &p.nodes {
            held[i][p.axis.index()] = true;
        }
    }
    let mut v: Vec<Vec3> =
        (0..n).map(|i| Vec3::new(((i * 7) % 5) as f64 - 2.0, ((i * 3) % 7) as f64 - 3.0, ((i * 11) % 3) as f64 - 1.0)).collect();
    let eps = 1e-9;
    let (mut fu, mut fd) = (vec![Vec3::zeros(); n], vec![Vec3::zeros(); n]);
    let mut lambda = 0.0;
    for _ in 0..iterations {
        for i in 0..n {
            for k in 0..3 {
                if held[i][k] {
                    v[i][k] = 0.0;
                }
            }
        }
        let norm = v.iter().map(|x| x.norm_squared()).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        let up: Vec<Vec3> = v.iter().map(|x| x * eps).collect();
        let down: Vec<Vec3> = v.iter().map(|x| -x * eps).collect();
        model.internal_forces_unchecked(&up, &mut fu, &Parallelism::serial());
        model.internal_forces_unchecked(&down, &mut fd, &Parallelism::serial());
        let w: Vec<Vec3> = (0..n).map(|i| (fu[i] - fd[i]) / (2.0 * eps * m[i])).collect();
        lambda = w.iter().zip(&v).map(|(a, b)| a.dot(b)).sum();
        v = w;
    }
    2.0 / lambda.sqrt()
}

/// T4 nodes whose natural Jacobian is `j`: `x₀ = 0`, `x_{i+1}` = row `i`.
pub fn tet_from_jacobian(j: &Mat3) -> [Vec3; 4] {
    [Vec3::zeros(), j.row(0).transpose(), j.row(1).transpose(), j.row(2).transpose()]
}
