//! Time-invariant per-element tensors, lumped masses and the critical time
//! step.
//!
//! [`ElementConstants`] is the full record with dense matrices. The engines
//! store [`PackedConstants`], which keeps only the populated blocks with
//! symmetric storage: a [`Sym3`] holds `(xx, yy, zz, xy, xz, yz)` (the same
//! ordering as `ĝ`) and a [`Sym6`] holds the upper triangle row by row.

use crate::element::{jacobian0, volume0, ElementKind, ElementShape, Jacobian, ShapeDerivatives};
use crate::kinematics::InvariantNeeds;
use crate::materials::{Material, StrainEnergy};
use crate::mesh::Mesh;
use crate::{Error, Mat3, Mat6, Real, Result, SixPack, Vec3, Vec6};

pub type Sym3 = [Real; 6];
pub type Sym6 = [Real; 21];

/// `(row, col)` of each `ĝ` component.
pub const VOIGT: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

pub fn sym3(m: &Mat3) -> Sym3 {
    VOIGT.map(|(i, j)| 0.5 * (m[(i, j)] + m[(j, i)]))
}

pub fn sym3_to_mat(s: &Sym3) -> Mat3 {
    Mat3::new(s[0], s[3], s[4], s[3], s[1], s[5], s[4], s[5], s[2])
}

pub fn sym6(m: &Mat6) -> Sym6 {
    let mut out = [0.0; 21];
    let mut k = 0;
    for p in 0..6 {
        for q in p..6 {
            out[k] = 0.5 * (m[(p, q)] + m[(q, p)]);
            k += 1;
        }
    }
    out
}

pub fn sym6_to_mat(s: &Sym6) -> Mat6 {
    let mut m = Mat6::zeros();
    let mut k = 0;
    for p in 0..6 {
        for q in p..6 {
            m[(p, q)] = s[k];
            m[(q, p)] = s[k];
            k += 1;
        }
    }
    m
}

/// Unit fibre directions `a` and optionally `b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FibreDirections {
    pub a: Vec3,
    pub b: Option<Vec3>,
}

impl FibreDirections {
    pub fn new(a: Vec3, b: Option<Vec3>) -> Result<Self> {
        let unit = |v: &Vec3| (v.norm() - 1.0).abs() <= 1e-12;
        if !unit(&a) || !b.as_ref().is_none_or(unit) {
            return Err(Error::config("fibre directions must be unit vectors"));
        }
        Ok(FibreDirections { a, b })
    }

    /// Fibres of a material, if it has any.
    pub fn of(material: &impl StrainEnergy) -> Option<Self> {
        match material.fibres() {
            (Some(a), b) => Some(FibreDirections { a, b }),
            _ => None,
        }
    }

    pub fn a_tensor(&self) -> Mat3 {
        self.a * self.a.transpose()
    }

    pub fn b_tensor(&self) -> Option<Mat3> {
        self.b.map(|b| b * b.transpose())
    }
}

/// `G_kl = ⁰J⁻¹ E_kl ⁰J⁻ᵀ` in `ĝ` order.
pub fn g_matrices(j0_inv: &Mat3) -> SixPack {
    let c = [j0_inv.column(0).into_owned(), j0_inv.column(1).into_owned(), j0_inv.column(2).into_owned()];
    VOIGT.map(|(k, l)| {
        if k == l {
            c[k] * c[k].transpose()
        } else {
            c[k] * c[l].transpose() + c[l] * c[k].transpose()
        }
    })
}

fn traces(g: &SixPack, w: Option<&Mat3>) -> Vec6 {
    Vec6::from_fn(|p, _| match w {
        Some(a) => (a * g[p]).trace(),
        None => g[p].trace(),
    })
}

/// `m₁`, and `m₄`/`m₆` when the corresponding invariant is needed.
pub fn trace_vectors(
    g: &SixPack,
    fibres: Option<&FibreDirections>,
    needs: InvariantNeeds,
) -> (Vec6, Option<Vec6>, Option<Vec6>) {
    let m1 = traces(g, None);
    let m4 = fibres.filter(|_| needs.i4).map(|f| traces(g, Some(&f.a_tensor())));
    let m6 = fibres
        .and_then(|f| f.b_tensor())
        .filter(|_| needs.i6)
        .map(|b| traces(g, Some(&b)));
    (m1, m4, m6)
}

/// `W[p][q] = tr(G_p G_q)`.
pub fn w_matrix(g: &SixPack) -> Mat6 {
    Mat6::from_fn(|p, q| (g[p].transpose() * g[q]).trace())
}

fn weighted_products(g: &SixPack, a: &Mat3) -> Mat6 {
    Mat6::from_fn(|p, q| (a * g[p].transpose() * g[q]).trace())
}

/// Trace matrices `M₂ = ½(m₁m₁ᵀ − W)`, `M₅`, `M₇`, each only when needed.
pub fn trace_matrices(
    g: &SixPack,
    m1: &Vec6,
    fibres: Option<&FibreDirections>,
    needs: InvariantNeeds,
) -> (Option<Mat6>, Option<Mat6>, Option<Mat6>) {
    let m2 = needs.i2.then(|| 0.5 * (m1 * m1.transpose() - w_matrix(g)));
    let m5 = fibres.filter(|_| needs.i5).map(|f| weighted_products(g, &f.a_tensor()));
    let m7 = fibres
        .and_then(|f| f.b_tensor())
        .filter(|_| needs.i7)
        .map(|b| weighted_products(g, &b));
    (m2, m5, m7)
}

/// The constant force tensors `I₁m … I₇m`.
#[derive(Debug, Clone, PartialEq)]
pub struct ITensors {
    pub i1m: Mat3,
    pub i2m: Option<SixPack>,
    pub i4m: Option<Mat3>,
    pub i5m: Option<SixPack>,
    pub i6m: Option<Mat3>,
    pub i7m: Option<SixPack>,
}

pub fn i_tensors(
    j0: &Jacobian,
    v0: Real,
    g: &SixPack,
    fibres: Option<&FibreDirections>,
    needs: InvariantNeeds,
) -> ITensors {
    let wrap = |k: &Mat3| 2.0 * v0 * j0.inv.transpose() * k * j0.inv;
    let a = fibres.filter(|_| needs.fibre_a()).map(|f| f.a_tensor());
    let b = fibres.and_then(|f| f.b_tensor()).filter(|_| needs.fibre_b());
    let anti = |w: &Mat3| g.map(|gk| wrap(&(w * gk + gk * w)));
    ITensors {
        i1m: wrap(&Mat3::identity()),
        i2m: needs.i2.then(|| g.map(|gk| wrap(&(Mat3::identity() * gk.trace() - gk)))),
        i4m: a.filter(|_| needs.i4).map(|a| wrap(&a)),
        i5m: a.filter(|_| needs.i5).map(|a| anti(&a)),
        i6m: b.filter(|_| needs.i6).map(|b| wrap(&b)),
        i7m: b.filter(|_| needs.i7).map(|b| anti(&b)),
    }
}

/// The four hourglass base vectors `ξη, ηζ, ζξ, ξηζ` for the H8 ordering.
pub const HOURGLASS_BASE: [[Real; 8]; 4] = [
    [1.0, -1.0, 1.0, -1.0, 1.0, -1.0, 1.0, -1.0],
    [1.0, 1.0, -1.0, -1.0, -1.0, -1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0, 1.0, -1.0, 1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0, 1.0, 1.0, -1.0, 1.0, -1.0],
];

/// `γ_a = h_a − Σ_j (h_aᵀ x_j) b_j` with `b_j` the gradient-operator columns.
pub fn hourglass_vectors(coords: &[Vec3; 8], d: &ShapeDerivatives<8>, j0_inv: &Mat3) -> [[Real; 8]; 4] {
    let grads: [Vec3; 8] = std::array::from_fn(|n| j0_inv * d.column(n));
    HOURGLASS_BASE.map(|h| {
        let hx: Vec3 = (0..8).fold(Vec3::zeros(), |acc, n| acc + coords[n] * h[n]);
        std::array::from_fn(|n| h[n] - hx.dot(&grads[n]))
    })
}

/// Every precomputed quantity of one element, with dense matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementConstants<const N: usize> {
    pub j0: Jacobian,
    pub v0: Real,
    pub d: ShapeDerivatives<N>,
    pub g: SixPack,
    pub m1: Vec6,
    pub m2: Option<Mat6>,
    pub m4: Option<Vec6>,
    pub m5: Option<Mat6>,
    pub m6: Option<Vec6>,
    pub m7: Option<Mat6>,
    pub tensors: ITensors,
    pub hourglass: Option<[[Real; N]; 4]>,
}

impl<const N: usize> ElementConstants<N>
where
    ShapeDerivatives<N>: ElementShape,
{
    /// Populates exactly the blocks listed in `needs`.
    pub fn compute(coords: &[Vec3; N], needs: InvariantNeeds, fibres: Option<&FibreDirections>) -> Result<Self> {
        if (needs.fibre_a() && fibres.is_none())
            || (needs.fibre_b() && fibres.and_then(|f| f.b).is_none())
        {
            return Err(Error::config("material needs fibre directions that were not supplied"));
        }
        let d = ShapeDerivatives::<N>::natural();
        let kind = <ShapeDerivatives<N> as ElementShape>::KIND;
        let j0 = jacobian0(coords, &d)?;
        let v0 = volume0(&j0, kind)?;
        let g = g_matrices(&j0.inv);
        let (m1, m4, m6) = trace_vectors(&g, fibres, needs);
        let (m2, m5, m7) = trace_matrices(&g, &m1, fibres, needs);
        let tensors = i_tensors(&j0, v0, &g, fibres, needs);
        let hourglass = (N == 8).then(|| {
            let c8: [Vec3; 8] = std::array::from_fn(|i| coords[i]);
            let d8 = ShapeDerivatives::<8>::natural();
            let h = hourglass_vectors(&c8, &d8, &j0.inv);
            std::array::from_fn(|m| std::array::from_fn(|a| h[m][a]))
        });
        Ok(ElementConstants { j0, v0, d, g, m1, m2, m4, m5, m6, m7, tensors, hourglass })
    }

    pub fn for_material(coords: &[Vec3; N], material: &impl StrainEnergy) -> Result<Self> {
        Self::compute(coords, material.needs(), FibreDirections::of(material).as_ref())
    }

    /// Compact storage used by the run-time kernels.
    pub fn packed(&self) -> PackedConstants {
        let t = &self.tensors;
        let lin = |m: Option<Vec6>, i: Option<Mat3>| m.zip(i).map(|(m, i)| LinearBlock { m, i: sym3(&i) });
        let quad = |m: Option<Mat6>, i: &Option<SixPack>| {
            m.zip(i.as_ref()).map(|(m, i)| QuadraticBlock { m: sym6(&m), i: i.map(|x| sym3(&x)) })
        };
        PackedConstants {
            base: BaseBlock {
                j0: self.j0.j,
                inv_det_j0: 1.0 / self.j0.det,
                v0: self.v0,
                m1: self.m1,
                i1m: sym3(&t.i1m),
            },
            q2: quad(self.m2, &t.i2m),
            l4: lin(self.m4, t.i4m),
            q5: quad(self.m5, &t.i5m),
            l6: lin(self.m6, t.i6m),
            q7: quad(self.m7, &t.i7m),
        }
    }
}

/// Blocks every element carries.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseBlock {
    pub j0: Mat3,
    pub inv_det_j0: Real,
    pub v0: Real,
    pub m1: Vec6,
    pub i1m: Sym3,
}

/// Trace vector and force tensor of a first-order pseudo-invariant (`I₄`, `I₆`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearBlock {
    pub m: Vec6,
    pub i: Sym3,
}

/// Trace matrix and force tensors of a quadratic invariant (`I₂`, `I₅`, `I₇`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticBlock {
    pub m: Sym6,
    pub i: [Sym3; 6],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PackedConstants {
    pub base: BaseBlock,
    pub q2: Option<QuadraticBlock>,
    pub l4: Option<LinearBlock>,
    pub q5: Option<QuadraticBlock>,
    pub l6: Option<LinearBlock>,
    pub q7: Option<QuadraticBlock>,
}

impl PackedConstants {
    pub fn view(&self) -> ConstantsView<'_> {
        ConstantsView {
            base: &self.base,
            q2: self.q2.as_ref(),
            l4: self.l4.as_ref(),
            q5: self.q5.as_ref(),
            l6: self.l6.as_ref(),
            q7: self.q7.as_ref(),
        }
    }
}

/// Borrowed view of one element's packed constants.
#[derive(Debug, Clone, Copy)]
pub struct ConstantsView<'a> {
    pub base: &'a BaseBlock,
    pub q2: Option<&'a QuadraticBlock>,
    pub l4: Option<&'a LinearBlock>,
    pub q5: Option<&'a QuadraticBlock>,
    pub l6: Option<&'a LinearBlock>,
    pub q7: Option<&'a QuadraticBlock>,
}

/// Initial volumes of every element.
pub fn element_volumes(mesh: &Mesh) -> Result<Vec<Real>> {
    fn go<const N: usize>(mesh: &Mesh) -> Result<Vec<Real>>
    where
        ShapeDerivatives<N>: ElementShape,
    {
        let d = ShapeDerivatives::<N>::natural();
        (0..mesh.elements.len())
            .map(|e| {
                let j0 = jacobian0(&mesh.element_coords::<N>(e), &d).map_err(|err| err.at_element(e))?;
                volume0(&j0, mesh.kind).map_err(|err| err.at_element(e))
            })
            .collect()
    }
    match mesh.kind {
        ElementKind::T4 => go::<4>(mesh),
        ElementKind::H8 => go::<8>(mesh),
    }
}

/// Equal split of each element mass `ρ⁰V` among its nodes.
pub fn lump_mass(mesh: &Mesh, density: Real, volumes: &[Real]) -> Vec<Real> {
    let mut mass = vec![0.0; mesh.nodes.len()];
    let n = mesh.kind.nodes() as Real;
    for (conn, v) in mesh.elements.iter().zip(volumes) {
        for &i in conn {
            mass[i] += density * v / n;
        }
    }
    mass
}

/// Largest face area of an element. Quadrilateral faces use half the cross
/// product of their diagonals.
fn max_face_area(coords: &[Vec3], kind: ElementKind) -> Real {
    match kind {
        ElementKind::T4 => [[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]
            .iter()
            .map(|f| 0.5 * (coords[f[1]] - coords[f[0]]).cross(&(coords[f[2]] - coords[f[0]])).norm())
            .fold(0.0, Real::max),
        ElementKind::H8 => [[0, 1, 2, 3], [4, 5, 6, 7], [0, 1, 5, 4], [1, 2, 6, 5], [2, 3, 7, 6], [3, 0, 4, 7]]
            .iter()
            .map(|f| 0.5 * (coords[f[2]] - coords[f[0]]).cross(&(coords[f[3]] - coords[f[1]])).norm())
            .fold(0.0, Real::max),
    }
}

/// `3⁰V / A_max` for T4 (minimum altitude), `⁰V / A_max` for H8.
pub fn characteristic_length(coords: &[Vec3], kind: ElementKind, v0: Real) -> Real {
    let area = max_face_area(coords, kind);
    match kind {
        ElementKind::T4 => 3.0 * v0 / area,
        ElementKind::H8 => v0 / area,
    }
}

/// `Δt_max = min L_e / c` with `c = sqrt((κ + 4μ/3)/ρ)`.
pub fn critical_dt(mesh: &Mesh, material: &Material) -> Result<Real> {
    let volumes = element_volumes(mesh)?;
    critical_dt_with(mesh, material, &volumes)
}

pub fn critical_dt_with(mesh: &Mesh, material: &Material, volumes: &[Real]) -> Result<Real> {
    let mut min_len = Real::INFINITY;
    for (e, (conn, &v)) in mesh.elements.iter().zip(volumes).enumerate() {
        let coords: Vec<Vec3> = conn.iter().map(|&i| mesh.nodes[i]).collect();
        let len = characteristic_length(&coords, mesh.kind, v);
        if !(len > 0.0) || !len.is_finite() {
            return Err(Error::InvalidElement { element: e, message: "degenerate characteristic length".into() });
        }
        min_len = min_len.min(len);
    }
    if !min_len.is_finite() {
        return Err(Error::invalid("mesh has no elements"));
    }
    Ok(min_len / material.wave_speed())
}

/// [`critical_dt`] evaluated on the current configuration `X + u`. The
/// stable step of a total Lagrangian run shrinks as elements thin or flatten.
pub fn critical_dt_current(mesh: &Mesh, material: &Material, u: &[Vec3]) -> Result<Real> {
    if u.len() != mesh.nodes.len() {
        return Err(Error::invalid("displacement length must equal the node count"));
    }
    let mut current = mesh.clone();
    for (x, d) in current.nodes.iter_mut().zip(u) {
        *x += d;
    }
    critical_dt(&current, material)
}
