//! Isoparametric kernels for the 4-node tetrahedron and the 8-node hexahedron,
//! both integrated with a single point.
//!
//! Derivatives are stored as a 3×n matrix `D[i][a] = ∂h_a/∂ξ_i`, so the
//! Jacobian operator is `J = D·X` with `J[i][j] = ∂x_j/∂ξ_i` and the current
//! Jacobian follows as `ᵗJ = ⁰J + D·U`.

use std::fmt;
use std::str::FromStr;

use crate::{Error, Mat3, Real, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ElementKind {
    T4,
    H8,
}

impl ElementKind {
    pub const fn nodes(self) -> usize {
        match self {
            ElementKind::T4 => 4,
            ElementKind::H8 => 8,
        }
    }

    /// Legacy VTK cell type code.
    pub const fn vtk_cell_type(self) -> u8 {
        match self {
            ElementKind::T4 => 10,
            ElementKind::H8 => 12,
        }
    }

    /// Columns `∂h_a/∂ξ` of the natural-derivative matrix, one per node.
    pub fn natural_derivatives(self) -> Vec<Vec3> {
        match self {
            ElementKind::T4 => ShapeDerivatives::<4>::natural().columns().to_vec(),
            ElementKind::H8 => ShapeDerivatives::<8>::natural().columns().to_vec(),
        }
    }
}

impl fmt::Display for ElementKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ElementKind::T4 => "T4",
            ElementKind::H8 => "H8",
        })
    }
}

impl FromStr for ElementKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "T4" | "t4" => Ok(ElementKind::T4),
            "H8" | "h8" => Ok(ElementKind::H8),
            other => Err(Error::invalid(format!("unknown element kind `{other}`"))),
        }
    }
}

/// Natural coordinates of the H8 corners in the adopted ordering.
pub const HEX8_CORNERS: [[Real; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Natural derivatives `D[i][a] = ∂h_a/∂ξ_i` at the single integration point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShapeDerivatives<const N: usize> {
    pub d: [[Real; N]; 3],
}

/// Implemented for the two supported node counts.
pub trait ElementShape: Sized {
    const KIND: ElementKind;
    fn natural() -> Self;
}

impl ElementShape for ShapeDerivatives<4> {
    const KIND: ElementKind = ElementKind::T4;

    fn natural() -> Self {
        // h1 = 1 - ξ - η - ζ, h2 = ξ, h3 = η, h4 = ζ
        ShapeDerivatives {
            d: [
                [-1.0, 1.0, 0.0, 0.0],
                [-1.0, 0.0, 1.0, 0.0],
                [-1.0, 0.0, 0.0, 1.0],
            ],
        }
    }
}

impl ElementShape for ShapeDerivatives<8> {
    const KIND: ElementKind = ElementKind::H8;

    fn natural() -> Self {
        // trilinear h_a = (1 + ξ_a ξ)(1 + η_a η)(1 + ζ_a ζ)/8 at the centre
        let mut d = [[0.0; 8]; 3];
        for (a, corner) in HEX8_CORNERS.iter().enumerate() {
            for i in 0..3 {
                d[i][a] = corner[i] / 8.0;
            }
        }
        ShapeDerivatives { d }
    }
}

impl<const N: usize> ShapeDerivatives<N> {
    /// Column `a`, i.e. `∂h_a/∂ξ`.
    #[inline(always)]
    pub fn column(&self, a: usize) -> Vec3 {
        Vec3::new(self.d[0][a], self.d[1][a], self.d[2][a])
    }

    pub fn columns(&self) -> [Vec3; N] {
        std::array::from_fn(|a| self.column(a))
    }

    /// `D·U` for nodal vectors `U` (n×3), a 3×3 matrix.
    #[inline(always)]
    pub fn times_nodal(&self, u: &[Vec3; N]) -> Mat3 {
        let mut out = Mat3::zeros();
        for a in 0..N {
            for i in 0..3 {
                let w = self.d[i][a];
                out[(i, 0)] += w * u[a].x;
                out[(i, 1)] += w * u[a].y;
                out[(i, 2)] += w * u[a].z;
            }
        }
        out
    }
}

/// A Jacobian operator with its determinant and inverse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jacobian {
    pub j: Mat3,
    pub det: Real,
    pub inv: Mat3,
}

impl Jacobian {
    /// Fails when the matrix is singular or inverted (`det ≤ 0`).
    pub fn new(j: Mat3) -> Result<Self> {
        let (det, inv) = det_and_inverse(&j);
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::invalid(format!(
                "singular or inverted element (det J = {det:e})"
            )));
        }
        Ok(Jacobian { j, det, inv })
    }
}

/// Determinant and adjugate-based inverse of a 3×3 matrix. The inverse is
/// non-finite when the determinant is zero.
#[inline(always)]
pub fn det_and_inverse(m: &Mat3) -> (Real, Mat3) {
    let c00 = m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)];
    let c01 = m[(1, 2)] * m[(2, 0)] - m[(1, 0)] * m[(2, 2)];
    let c02 = m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)];
    let det = m[(0, 0)] * c00 + m[(0, 1)] * c01 + m[(0, 2)] * c02;
    let r = 1.0 / det;
    let inv = Mat3::new(
        c00 * r,
        (m[(0, 2)] * m[(2, 1)] - m[(0, 1)] * m[(2, 2)]) * r,
        (m[(0, 1)] * m[(1, 2)] - m[(0, 2)] * m[(1, 1)]) * r,
        c01 * r,
        (m[(0, 0)] * m[(2, 2)] - m[(0, 2)] * m[(2, 0)]) * r,
        (m[(0, 2)] * m[(1, 0)] - m[(0, 0)] * m[(1, 2)]) * r,
        c02 * r,
        (m[(0, 1)] * m[(2, 0)] - m[(0, 0)] * m[(2, 1)]) * r,
        (m[(0, 0)] * m[(1, 1)] - m[(0, 1)] * m[(1, 0)]) * r,
    );
    (det, inv)
}

/// Reference Jacobian `⁰J = D·X⁰` of one element.
pub fn jacobian0<const N: usize>(coords: &[Vec3; N], d: &ShapeDerivatives<N>) -> Result<Jacobian> {
    Jacobian::new(d.times_nodal(coords))
}

/// Initial volume from the 1-point rule: `det⁰J/6` for T4, `8·det⁰J` for H8.
pub fn volume0(j0: &Jacobian, kind: ElementKind) -> Result<Real> {
    let v = match kind {
        ElementKind::T4 => j0.det / 6.0,
        ElementKind::H8 => 8.0 * j0.det,
    };
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::invalid(format!("non-positive element volume {v:e}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tet() -> [Vec3; 4] {
        [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()]
    }

    fn cube(side: Real) -> [Vec3; 8] {
        std::array::from_fn(|a| {
            let c = HEX8_CORNERS[a];
            Vec3::new(c[0], c[1], c[2]) * (side / 2.0)
        })
    }

    #[test]
    fn tet_rows_sum_to_zero() {
        let d = ShapeDerivatives::<4>::natural();
        for row in d.d {
            assert_eq!(row.iter().sum::<Real>(), 0.0);
        }
    }

    #[test]
    fn hex_entries_are_one_eighth() {
        let d = ShapeDerivatives::<8>::natural();
        for row in d.d {
            assert!(row.iter().all(|v| v.abs() == 0.125));
            assert_eq!(row.iter().sum::<Real>(), 0.0);
        }
    }

    #[test]
    fn hex_xi_row_matches_symbolic_derivative() {
        // ∂/∂ξ of (1+ξ_a ξ)(1+η_a η)(1+ζ_a ζ)/8 at the origin is ξ_a/8.
        let signs = [-1.0, 1.0, 1.0, -1.0, -1.0, 1.0, 1.0, -1.0];
        let d = ShapeDerivatives::<8>::natural();
        for a in 0..8 {
            assert_eq!(d.d[0][a], signs[a] / 8.0);
        }
    }

    #[test]
    fn unit_tet_jacobian_is_identity() {
        let j = jacobian0(&unit_tet(), &ShapeDerivatives::<4>::natural()).unwrap();
        assert_eq!(j.j, Mat3::identity());
        assert_eq!(volume0(&j, ElementKind::T4).unwrap(), 1.0 / 6.0);
    }

    #[test]
    fn natural_cube_jacobian_is_identity() {
        let j = jacobian0(&cube(2.0), &ShapeDerivatives::<8>::natural()).unwrap();
        assert_eq!(j.j, Mat3::identity());
    }

    #[test]
    fn cube_jacobian_matches_finite_difference_of_trilinear_map() {
        let side = 0.37;
        let nodes = cube(side);
        let j = jacobian0(&nodes, &ShapeDerivatives::<8>::natural()).unwrap();
        let map = |xi: [Real; 3]| -> Vec3 {
            let mut x = Vec3::zeros();
            for (a, c) in HEX8_CORNERS.iter().enumerate() {
                let h = (1.0 + c[0] * xi[0]) * (1.0 + c[1] * xi[1]) * (1.0 + c[2] * xi[2]) / 8.0;
                x += nodes[a] * h;
            }
            x
        };
        let h = 1e-6;
        for i in 0..3 {
            let mut p = [0.0; 3];
            let mut m = [0.0; 3];
            p[i] = h;
            m[i] = -h;
            let dx = (map(p) - map(m)) / (2.0 * h);
            for k in 0..3 {
                assert!((j.j[(i, k)] - dx[k]).abs() < 1e-9);
            }
        }
        assert!((j.j - Mat3::identity() * (side / 2.0)).norm() < 1e-15);
        let v = volume0(&j, ElementKind::H8).unwrap();
        assert!((v - side.powi(3)).abs() < 1e-15);
    }

    #[test]
    fn inverted_tet_is_rejected() {
        let mut t = unit_tet();
        t.swap(1, 2);
        assert!(jacobian0(&t, &ShapeDerivatives::<4>::natural()).is_err());
    }

    #[test]
    fn affine_tet_volume_matches_triple_product() {
        let p = [
            Vec3::new(0.1, -0.2, 0.3),
            Vec3::new(1.3, 0.1, 0.2),
            Vec3::new(0.2, 0.9, -0.1),
            Vec3::new(0.05, 0.3, 1.1),
        ];
        let j = jacobian0(&p, &ShapeDerivatives::<4>::natural()).unwrap();
        let triple = (p[1] - p[0]).dot(&(p[2] - p[0]).cross(&(p[3] - p[0]))).abs() / 6.0;
        let v = volume0(&j, ElementKind::T4).unwrap();
        assert!((v - triple).abs() <= 1e-12 * triple);
    }

    #[test]
    fn inverse_round_trips() {
        let m = Mat3::new(2.0, 0.3, -0.1, 0.2, 1.5, 0.4, -0.3, 0.1, 0.9);
        let j = Jacobian::new(m).unwrap();
        assert!((j.j * j.inv - Mat3::identity()).norm() < 1e-14);
        assert!((j.det - m.determinant()).abs() < 1e-14);
    }
}
