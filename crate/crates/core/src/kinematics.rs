//! Run-time element kinematics: the current Jacobian `ᵗJ = ⁰J + D·U`, the
//! volume ratio, the six-component vector `ĝ` of `ᵗJ ᵗJᵀ` and the strain
//! invariants evaluated from `ĝ` and the precomputed trace tensors.

use crate::element::{det_and_inverse, ShapeDerivatives};
use crate::precompute::{ConstantsView, LinearBlock, QuadraticBlock, Sym6};
use crate::{Error, Mat3, Real, Result, Vec3, Vec6};

/// Which invariants besides `I₁`, `I₃` and `J` must be evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct InvariantNeeds {
    pub i2: bool,
    pub i4: bool,
    pub i5: bool,
    pub i6: bool,
    pub i7: bool,
}

impl InvariantNeeds {
    pub fn all() -> Self {
        InvariantNeeds { i2: true, i4: true, i5: true, i6: true, i7: true }
    }

    pub fn fibre_a(&self) -> bool {
        self.i4 || self.i5
    }

    pub fn fibre_b(&self) -> bool {
        self.i6 || self.i7
    }
}

/// Strain invariants and their modified (isochoric) forms. Entries that were
/// not requested are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Invariants {
    pub j: Real,
    pub i1: Real,
    pub i2: Option<Real>,
    pub i3: Real,
    pub i4: Option<Real>,
    pub i5: Option<Real>,
    pub i6: Option<Real>,
    pub i7: Option<Real>,
    pub i1_bar: Real,
    pub i2_bar: Option<Real>,
    pub i4_bar: Option<Real>,
    pub i5_bar: Option<Real>,
    pub i6_bar: Option<Real>,
    pub i7_bar: Option<Real>,
}

impl Invariants {
    /// Builds the record from raw invariants; `I₃ = J²`.
    #[inline]
    pub fn from_raw(
        j: Real,
        i1: Real,
        i2: Option<Real>,
        i4: Option<Real>,
        i5: Option<Real>,
        i6: Option<Real>,
        i7: Option<Real>,
    ) -> Self {
        let (s23, s43) = j_scalings(j);
        Invariants {
            j,
            i1,
            i2,
            i3: j * j,
            i4,
            i5,
            i6,
            i7,
            i1_bar: s23 * i1,
            i2_bar: i2.map(|v| s43 * v),
            i4_bar: i4.map(|v| s23 * v),
            i5_bar: i5.map(|v| s43 * v),
            i6_bar: i6.map(|v| s23 * v),
            i7_bar: i7.map(|v| s43 * v),
        }
    }

    /// Builds the record from modified invariants.
    pub fn from_modified(
        j: Real,
        i1_bar: Real,
        i2_bar: Option<Real>,
        i4_bar: Option<Real>,
        i5_bar: Option<Real>,
        i6_bar: Option<Real>,
        i7_bar: Option<Real>,
    ) -> Self {
        let (s23, s43) = j_scalings(j);
        Invariants {
            j,
            i1: i1_bar / s23,
            i2: i2_bar.map(|v| v / s43),
            i3: j * j,
            i4: i4_bar.map(|v| v / s23),
            i5: i5_bar.map(|v| v / s43),
            i6: i6_bar.map(|v| v / s23),
            i7: i7_bar.map(|v| v / s43),
            i1_bar,
            i2_bar,
            i4_bar,
            i5_bar,
            i6_bar,
            i7_bar,
        }
    }

    /// The undeformed state `C = I` for unit fibres.
    pub fn rest(needs: InvariantNeeds) -> Self {
        let on = |b: bool, v: Real| b.then_some(v);
        Invariants::from_raw(
            1.0,
            3.0,
            on(needs.i2, 3.0),
            on(needs.i4, 1.0),
            on(needs.i5, 1.0),
            on(needs.i6, 1.0),
            on(needs.i7, 1.0),
        )
    }
}

/// `(J^{-2/3}, J^{-4/3})`. `cbrt` keeps the value finite for inverted states
/// so a continue-and-report run can still evaluate forces.
#[inline(always)]
pub fn j_scalings(j: Real) -> (Real, Real) {
    let c = j.cbrt();
    let s23 = 1.0 / (c * c);
    (s23, s23 * s23)
}

/// Run-time state of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElementKinematics {
    pub jt: Mat3,
    pub jt_inv: Mat3,
    pub j: Real,
    pub g_hat: Vec6,
    pub inv: Invariants,
}

/// `ᵗJ = ⁰J + D·U`, its determinant and inverse. Fails when `det ᵗJ ≤ 0`.
#[inline(always)]
pub fn update_jacobian<const N: usize>(
    j0: &Mat3,
    u: &[Vec3; N],
    d: &ShapeDerivatives<N>,
) -> Result<(Mat3, Real, Mat3)> {
    let (jt, det, inv) = current_jacobian(j0, u, d);
    if det > 0.0 {
        Ok((jt, det, inv))
    } else {
        Err(Error::invalid(format!("inverted element (det J = {det:e})")))
    }
}

/// Unchecked form of [`update_jacobian`]; the caller inspects the determinant.
#[inline(always)]
pub(crate) fn current_jacobian<const N: usize>(
    j0: &Mat3,
    u: &[Vec3; N],
    d: &ShapeDerivatives<N>,
) -> (Mat3, Real, Mat3) {
    let jt = if N == 4 {
        // rows of D are (-1, e_i): ᵗJ row i gains u_{i+1} - u_0
        let mut jt = *j0;
        for i in 0..3 {
            let du = u[i + 1] - u[0];
            jt[(i, 0)] += du.x;
            jt[(i, 1)] += du.y;
            jt[(i, 2)] += du.z;
        }
        jt
    } else {
        j0 + d.times_nodal(u)
    };
    let (det, inv) = det_and_inverse(&jt);
    (jt, det, inv)
}

/// `J = det ᵗJ / det ⁰J`.
#[inline(always)]
pub fn volume_ratio(det_jt: Real, det_j0: Real) -> Real {
    det_jt / det_j0
}

/// `ĝ = (g₁₁, g₂₂, g₃₃, g₁₂, g₁₃, g₂₃)` of `ᵗJ ᵗJᵀ`.
#[inline(always)]
pub fn g_vector(jt: &Mat3) -> Vec6 {
    let r0 = Vec3::new(jt[(0, 0)], jt[(0, 1)], jt[(0, 2)]);
    let r1 = Vec3::new(jt[(1, 0)], jt[(1, 1)], jt[(1, 2)]);
    let r2 = Vec3::new(jt[(2, 0)], jt[(2, 1)], jt[(2, 2)]);
    Vec6::new(r0.dot(&r0), r1.dot(&r1), r2.dot(&r2), r0.dot(&r1), r0.dot(&r2), r1.dot(&r2))
}

/// `ĝᵀMĝ` for a symmetric 6×6 `M` held as its upper triangle.
#[inline(always)]
pub fn quadratic_form(m: &Sym6, g: &Vec6) -> Real {
    let mut acc = 0.0;
    let mut k = 0;
    for p in 0..6 {
        let mut row = 0.5 * m[k] * g[p];
        k += 1;
        for q in (p + 1)..6 {
            row += m[k] * g[q];
            k += 1;
        }
        acc += g[p] * row;
    }
    2.0 * acc
}

/// Evaluates the requested invariants from `ĝ`, `J` and the trace tensors.
pub fn invariants(g: &Vec6, j: Real, c: &ConstantsView<'_>, needs: InvariantNeeds) -> Result<Invariants> {
    let missing = |name: &str| Error::config(format!("trace tensor for {name} was not precomputed"));
    let lin = |want: bool, b: Option<&LinearBlock>, name: &str| -> Result<Option<Real>> {
        match want {
            true => Ok(Some(g.dot(&b.ok_or_else(|| missing(name))?.m))),
            false => Ok(None),
        }
    };
    let quad = |want: bool, b: Option<&QuadraticBlock>, name: &str| -> Result<Option<Real>> {
        match want {
            true => Ok(Some(quadratic_form(&b.ok_or_else(|| missing(name))?.m, g))),
            false => Ok(None),
        }
    };
    Ok(Invariants::from_raw(
        j,
        g.dot(&c.base.m1),
        quad(needs.i2, c.q2, "I2")?,
        lin(needs.i4, c.l4, "I4")?,
        quad(needs.i5, c.q5, "I5")?,
        lin(needs.i6, c.l6, "I6")?,
        quad(needs.i7, c.q7, "I7")?,
    ))
}

/// Full kinematic update of one element.
pub fn element_kinematics<const N: usize>(
    c: &ConstantsView<'_>,
    u: &[Vec3; N],
    d: &ShapeDerivatives<N>,
    needs: InvariantNeeds,
) -> Result<ElementKinematics> {
    let (jt, det, jt_inv) = update_jacobian(&c.base.j0, u, d)?;
    let j = det * c.base.inv_det_j0;
    let g_hat = g_vector(&jt);
    let inv = invariants(&g_hat, j, c, needs)?;
    Ok(ElementKinematics { jt, jt_inv, j, g_hat, inv })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::{jacobian0, ElementShape, HEX8_CORNERS};

    #[test]
    fn g_vector_of_identity_and_diagonal() {
        assert_eq!(g_vector(&Mat3::identity()), Vec6::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0));
        let d = Mat3::from_diagonal(&Vec3::new(2.0, 3.0, 0.5));
        assert_eq!(g_vector(&d), Vec6::new(4.0, 9.0, 0.25, 0.0, 0.0, 0.0));
    }

    #[test]
    fn g_vector_matches_explicit_product() {
        let jt = Mat3::new(1.2, -0.3, 0.4, 0.1, 0.9, -0.2, 0.5, 0.25, 1.1);
        let p = jt * jt.transpose();
        let g = g_vector(&jt);
        let expected = [p[(0, 0)], p[(1, 1)], p[(2, 2)], p[(0, 1)], p[(0, 2)], p[(1, 2)]];
        for k in 0..6 {
            assert!((g[k] - expected[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn translation_leaves_jacobian_unchanged() {
        let d = ShapeDerivatives::<8>::natural();
        let x: [Vec3; 8] = std::array::from_fn(|a| Vec3::from(HEX8_CORNERS[a]) * 0.5);
        let j0 = jacobian0(&x, &d).unwrap();
        let shift = [Vec3::new(0.3, -0.2, 0.7); 8];
        let (jt, _, _) = update_jacobian(&j0.j, &shift, &d).unwrap();
        assert!((jt - j0.j).norm() < 1e-15);
        let (jt, _, _) = update_jacobian(&j0.j, &[Vec3::zeros(); 8], &d).unwrap();
        assert_eq!(jt, j0.j);
    }

    #[test]
    fn uniaxial_stretch_scales_the_volume() {
        // u_x = (λ - 1) x on a unit cube: the mapped x-derivative is λ.
        let lambda = 1.3;
        let d = ShapeDerivatives::<8>::natural();
        let x: [Vec3; 8] = std::array::from_fn(|a| (Vec3::from(HEX8_CORNERS[a]) + Vec3::repeat(1.0)) * 0.5);
        let u: [Vec3; 8] = std::array::from_fn(|a| Vec3::new((lambda - 1.0) * x[a].x, 0.0, 0.0));
        let j0 = jacobian0(&x, &d).unwrap();
        let (jt, det, _) = update_jacobian(&j0.j, &u, &d).unwrap();
        // finite differences of the mapped coordinates along ξ give λ/2 on (0,0)
        assert!((jt[(0, 0)] - lambda / 2.0).abs() < 1e-15);
        assert!((volume_ratio(det, j0.det) - lambda).abs() < 1e-14);
    }

    #[test]
    fn isotropic_stretch_cubes_the_ratio() {
        let d = ShapeDerivatives::<4>::natural();
        let x = [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let u: [Vec3; 4] = std::array::from_fn(|a| x[a] * 0.2);
        let j0 = jacobian0(&x, &d).unwrap();
        let (_, det, _) = update_jacobian(&j0.j, &u, &d).unwrap();
        assert!((volume_ratio(det, j0.det) - 1.2_f64.powi(3) as Real).abs() < 1e-14);
    }

    #[test]
    fn inversion_is_detected() {
        let d = ShapeDerivatives::<4>::natural();
        let u = [Vec3::zeros(), Vec3::new(-2.0, 0.0, 0.0), Vec3::zeros(), Vec3::zeros()];
        assert!(update_jacobian(&Mat3::identity(), &u, &d).is_err());
    }

    #[test]
    fn quadratic_form_matches_dense_product() {
        let mut m = crate::Mat6::from_fn(|p, q| ((p * 7 + q * 3) % 5) as Real - 2.0);
        m = m + m.transpose();
        let g = Vec6::new(0.3, -1.2, 2.0, 0.7, -0.4, 1.1);
        let packed = crate::precompute::sym6(&m);
        assert!((quadratic_form(&packed, &g) - (g.transpose() * m * g)[(0, 0)]).abs() < 1e-12);
    }

    #[test]
    fn j_scalings_handle_negative_ratios() {
        let (a, b) = j_scalings(-8.0);
        assert!((a - 0.25).abs() < 1e-15 && (b - 0.0625).abs() < 1e-15);
    }
}
