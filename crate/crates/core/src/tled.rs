//! Conventional TLED forces `F = V₀ X S ⁰B`: the deformation gradient, the
//! right Cauchy-Green tensor, its inverse and the second Piola-Kirchhoff
//! stress are formed for every element at every step.

use crate::element::{det_and_inverse, ElementShape, ShapeDerivatives};
use crate::forces::{
    add_hourglass_force, all_constants, connectivity, hourglass_blocks, ElementForces, ElementKernel, Hourglass,
};
use crate::kinematics::{j_scalings, InvariantNeeds, Invariants};
use crate::materials::{EnergyDerivatives, Material, StrainEnergy};
use crate::mesh::Mesh;
use crate::precompute::FibreDirections;
use crate::{Mat3, Real, Result, Vec3};

/// Gradient operator rows `b_a = ⁰J⁻¹ d_a` and the initial volume.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TledConstants<const N: usize> {
    pub b0: [Vec3; N],
    pub v0: Real,
}

impl<const N: usize> TledConstants<N> {
    pub fn new(j0_inv: &Mat3, d: &ShapeDerivatives<N>, v0: Real) -> Self {
        TledConstants { b0: std::array::from_fn(|a| j0_inv * d.column(a)), v0 }
    }
}

/// `X = I + Σ_a u_a b_aᵀ`.
#[inline(always)]
pub fn deformation_gradient<const N: usize>(u: &[Vec3; N], b0: &[Vec3; N]) -> Mat3 {
    let mut x = Mat3::identity();
    for a in 0..N {
        x += u[a] * b0[a].transpose();
    }
    x
}

/// `X`, `C = XᵀX`, `C⁻¹` and `J = det X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeformationState {
    pub x: Mat3,
    pub c: Mat3,
    pub c_inv: Mat3,
    pub j: Real,
}

impl DeformationState {
    #[inline(always)]
    pub fn new(x: Mat3) -> Self {
        let c = x.tr_mul(&x);
        let (_, c_inv) = det_and_inverse(&c);
        let j = x.determinant();
        DeformationState { x, c, c_inv, j }
    }
}

/// Invariants of `C` with the conventional trace formulas.
#[inline(always)]
pub fn invariants_from_c(state: &DeformationState, fibres: Option<&FibreDirections>, needs: InvariantNeeds) -> Invariants {
    let c = &state.c;
    let i1 = c.trace();
    let i2 = needs.i2.then(|| 0.5 * (i1 * i1 - c.component_mul(c).sum()));
    let ca = fibres.map(|f| c * f.a);
    let cb = fibres.and_then(|f| f.b).map(|b| c * b);
    let a = fibres.map(|f| f.a);
    let b = fibres.and_then(|f| f.b);
    Invariants::from_raw(
        state.j,
        i1,
        i2,
        if needs.i4 { a.zip(ca).map(|(a, ca)| a.dot(&ca)) } else { None },
        if needs.i5 { ca.map(|v| v.dot(&v)) } else { None },
        if needs.i6 { b.zip(cb).map(|(b, cb)| b.dot(&cb)) } else { None },
        if needs.i7 { cb.map(|v| v.dot(&v)) } else { None },
    )
}

/// `S = 2 ∂Ψ/∂C` for an energy of the modified invariants and `J`.
#[inline(always)]
pub fn stress_from_derivatives(
    state: &DeformationState,
    inv: &Invariants,
    dv: &EnergyDerivatives,
    fibres: Option<&FibreDirections>,
) -> Mat3 {
    let (s23, s43) = j_scalings(inv.j);
    let mut iso = Mat3::identity() * dv.d_i1;
    let mut quad = Mat3::zeros();
    let mut dev = dv.d_i1 * inv.i1_bar;
    if let Some(d) = dv.d_i2 {
        quad += (Mat3::identity() * inv.i1 - state.c) * d;
        dev += 2.0 * d * inv.i2_bar.unwrap_or(0.0);
    }
    if let Some(f) = fibres {
        let a = f.a_tensor();
        if let Some(d) = dv.d_i4 {
            iso += a * d;
            dev += d * inv.i4_bar.unwrap_or(0.0);
        }
        if let Some(d) = dv.d_i5 {
            quad += (a * state.c + state.c * a) * d;
            dev += 2.0 * d * inv.i5_bar.unwrap_or(0.0);
        }
        if let Some(b) = f.b_tensor() {
            if let Some(d) = dv.d_i6 {
                iso += b * d;
                dev += d * inv.i6_bar.unwrap_or(0.0);
            }
            if let Some(d) = dv.d_i7 {
                quad += (b * state.c + state.c * b) * d;
                dev += 2.0 * d * inv.i7_bar.unwrap_or(0.0);
            }
        }
    }
    let s = -2.0 / 3.0 * dev + inv.j * dv.d_j;
    iso * (2.0 * s23) + quad * (2.0 * s43) + state.c_inv * s
}

/// Second Piola-Kirchhoff stress of a material at a deformation state.
pub fn second_pk_stress(material: &impl StrainEnergy, state: &DeformationState) -> Mat3 {
    let fibres = FibreDirections::of(material);
    let inv = invariants_from_c(state, fibres.as_ref(), material.needs());
    stress_from_derivatives(state, &inv, &material.derivatives(&inv), fibres.as_ref())
}

/// `F_a = V₀ X S b_a`.
#[inline(always)]
pub fn tled_element_force<const N: usize>(x: &Mat3, s: &Mat3, b0: &[Vec3; N], v0: Real) -> ElementForces<N> {
    let p = x * s * v0;
    std::array::from_fn(|a| p * b0[a])
}

/// The TLED element kernel.
#[derive(Debug, Clone)]
pub struct TledElements<const N: usize> {
    conn: Vec<[u32; N]>,
    constants: Vec<TledConstants<N>>,
    hourglass: Vec<Hourglass<N>>,
    material: Material,
    fibres: Option<FibreDirections>,
    needs: InvariantNeeds,
}

impl<const N: usize> TledElements<N>
where
    ShapeDerivatives<N>: ElementShape,
{
    pub fn build(mesh: &Mesh, material: &Material, c_hg: Real) -> Result<Self> {
        let conn = connectivity::<N>(mesh)?;
        let all = all_constants::<N>(mesh, material)?;
        let hourglass = hourglass_blocks(&all, material.bulk_modulus(), c_hg);
        let constants = all.iter().map(|c| TledConstants::new(&c.j0.inv, &c.d, c.v0)).collect();
        Ok(TledElements {
            conn,
            constants,
            hourglass,
            material: *material,
            fibres: FibreDirections::of(material),
            needs: material.needs(),
        })
    }
}

impl<const N: usize> ElementKernel<N> for TledElements<N> {
    fn connectivity(&self) -> &[[u32; N]] {
        &self.conn
    }

    fn hourglass(&self) -> &[Hourglass<N>] {
        &self.hourglass
    }

    #[inline]
    fn element(&self, e: usize, u: &[Vec3; N], out: &mut ElementForces<N>) -> Real {
        let t = &self.constants[e];
        let state = DeformationState::new(deformation_gradient(u, &t.b0));
        let inv = invariants_from_c(&state, self.fibres.as_ref(), self.needs);
        let dv = self.material.derivatives(&inv);
        let s = stress_from_derivatives(&state, &inv, &dv, self.fibres.as_ref());
        *out = tled_element_force(&state.x, &s, &t.b0, t.v0);
        if let Some(h) = self.hourglass.get(e) {
            add_hourglass_force(&h.gamma, u, h.k, out);
        }
        state.j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::jacobian0;

    fn nh() -> Material {
        Material::neo_hookean(6567.0, 326210.0, 1060.0).unwrap()
    }

    #[test]
    fn rest_and_translation_give_identity() {
        let d = ShapeDerivatives::<4>::natural();
        let x = [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let j0 = jacobian0(&x, &d).unwrap();
        let t = TledConstants::new(&j0.inv, &d, 1.0 / 6.0);
        assert_eq!(deformation_gradient(&[Vec3::zeros(); 4], &t.b0), Mat3::identity());
        let x1 = deformation_gradient(&[Vec3::new(0.3, -0.1, 2.0); 4], &t.b0);
        assert!((x1 - Mat3::identity()).norm() < 1e-15);
    }

    #[test]
    fn gradient_matches_jacobian_form() {
        let d = ShapeDerivatives::<8>::natural();
        let x: [Vec3; 8] = std::array::from_fn(|a| {
            Vec3::from(crate::element::HEX8_CORNERS[a]) * 0.1 + Vec3::new(0.01 * a as Real, 0.0, 0.002)
        });
        let u: [Vec3; 8] = std::array::from_fn(|a| Vec3::new(0.01 * (a % 3) as Real, -0.004 * a as Real, 0.003));
        let j0 = jacobian0(&x, &d).unwrap();
        let t = TledConstants::new(&j0.inv, &d, 1.0);
        let jt = j0.j + d.times_nodal(&u);
        let oracle = jt.transpose() * j0.inv.transpose();
        assert!((deformation_gradient(&u, &t.b0) - oracle).norm() < 1e-13);
    }

    #[test]
    fn neo_hookean_stress_vanishes_at_rest() {
        let s = second_pk_stress(&nh(), &DeformationState::new(Mat3::identity()));
        assert!(s.norm() < 1e-10);
    }

    #[test]
    fn stress_matches_energy_finite_differences() {
        let x = Mat3::new(1.1, 0.05, 0.0, 0.02, 0.97, 0.01, -0.03, 0.0, 1.02);
        for m in Material::reference_set() {
            let m = match m.model {
                crate::materials::MaterialModel::TransverselyIsotropic { mu, eta_a, kappa, .. } => {
                    Material::transversely_isotropic(mu, eta_a, kappa, Vec3::new(0.0, 1.0, 0.0), m.density).unwrap()
                }
                _ => m,
            };
            let state = DeformationState::new(x);
            let s = second_pk_stress(&m, &state);
            assert_eq!(s, s.transpose(), "{}", m.tag());
            let f = FibreDirections::of(&m);
            let energy = |c: Mat3| {
                let xs = c.cholesky().unwrap().l().transpose();
                let st = DeformationState::new(xs);
                m.energy(&invariants_from_c(&st, f.as_ref(), m.needs()))
            };
            let h = 1e-7;
            for i in 0..3 {
                for k in 0..3 {
                    let mut dc = Mat3::zeros();
                    dc[(i, k)] += h / 2.0;
                    dc[(k, i)] += h / 2.0;
                    let fd = (energy(state.c + dc) - energy(state.c - dc)) / (2.0 * h);
                    assert!((2.0 * fd - s[(i, k)]).abs() <= 1e-5 * s.norm(), "{} S[{i}][{k}]", m.tag());
                }
            }
        }
    }

    #[test]
    fn rigid_rotation_gives_zero_force() {
        let r = nalgebra::Rotation3::from_euler_angles(1.0, 0.2, -0.7).into_inner();
        let m = Material::neo_hookean(1.0, 1.0, 1.0).unwrap();
        let state = DeformationState::new(r);
        let s = second_pk_stress(&m, &state);
        let b0 = [Vec3::new(-1.0, -1.0, -1.0), Vec3::x(), Vec3::y(), Vec3::z()];
        for f in tled_element_force(&r, &s, &b0, 1.0 / 6.0) {
            assert!(f.norm() < 1e-9);
        }
    }
}
