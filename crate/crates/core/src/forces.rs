//! Nodal forces from the Jacobian operator, hourglass control for H8, and
//! deterministic element-parallel assembly.
//!
//! Each element force is `F_a = B·d_a` where `d_a` is column `a` of the
//! natural derivative matrix and the 3×3 bracket is
//!
//! ```text
//! B = J^{-2/3} ᵗJᵀ (ψ₁I₁m + ψ₄I₄m + ψ₆I₆m + J^{-2/3}(ψ₂ ĝ·I₂m + ψ₅ ĝ·I₅m + ψ₇ ĝ·I₇m))
//!   + s ⁰V ᵗJ⁻¹,
//! s = −2/3 (ψ₁Ī₁ + ψ₄Ī₄ + ψ₆Ī₆ + 2ψ₂Ī₂ + 2ψ₅Ī₅ + 2ψ₇Ī₇) + J ψ_J
//! ```
//!
//! with `ψ_k = ∂Ψ/∂Ī_k`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::element::{det_and_inverse, ElementShape, ShapeDerivatives};
use crate::kinematics::{g_vector, j_scalings, ElementKinematics, Invariants};
use crate::materials::{EnergyDerivatives, Material, StrainEnergy};
use crate::mesh::Mesh;
use crate::precompute::{
    sym3_to_mat, BaseBlock, ConstantsView, ElementConstants, FibreDirections, LinearBlock, QuadraticBlock, Sym3, Sym6,
};
use crate::{Error, Mat3, Real, Result, SixPack, Vec3, Vec6};

/// Nodal forces of one element, in connectivity order.
pub type ElementForces<const N: usize> = [Vec3; N];

/// `Σ_k ĝ_k M_k`.
pub fn contract_ghat(g: &Vec6, pack: &SixPack) -> Mat3 {
    let mut out = Mat3::zeros();
    for k in 0..6 {
        out += pack[k] * g[k];
    }
    out
}

#[inline(always)]
fn contract_sym(g: &Vec6, pack: &[Sym3; 6], scale: Real, acc: &mut Sym3) {
    for k in 0..6 {
        let w = scale * g[k];
        for c in 0..6 {
            acc[c] += w * pack[k][c];
        }
    }
}

#[inline(always)]
fn axpy_sym(w: Real, s: &Sym3, acc: &mut Sym3) {
    for c in 0..6 {
        acc[c] += w * s[c];
    }
}

/// The 3×3 bracket that maps natural derivative columns to nodal forces.
#[inline(always)]
pub fn force_bracket(
    c: &ConstantsView<'_>,
    jt: &Mat3,
    jt_inv: &Mat3,
    g: &Vec6,
    inv: &Invariants,
    dv: &EnergyDerivatives,
) -> Mat3 {
    let (s23, _) = j_scalings(inv.j);
    let mut k = [0.0; 6];
    axpy_sym(dv.d_i1, &c.base.i1m, &mut k);
    let mut dev = dv.d_i1 * inv.i1_bar;
    let linear = |d: Option<Real>, b: Option<&LinearBlock>, bar: Option<Real>, k: &mut Sym3, dev: &mut Real| {
        if let (Some(d), Some(b)) = (d, b) {
            axpy_sym(d, &b.i, k);
            *dev += d * bar.unwrap_or(0.0);
        }
    };
    let quadratic = |d: Option<Real>, b: Option<&QuadraticBlock>, bar: Option<Real>, k: &mut Sym3, dev: &mut Real| {
        if let (Some(d), Some(b)) = (d, b) {
            contract_sym(g, &b.i, s23 * d, k);
            *dev += 2.0 * d * bar.unwrap_or(0.0);
        }
    };
    linear(dv.d_i4, c.l4, inv.i4_bar, &mut k, &mut dev);
    linear(dv.d_i6, c.l6, inv.i6_bar, &mut k, &mut dev);
    quadratic(dv.d_i2, c.q2, inv.i2_bar, &mut k, &mut dev);
    quadratic(dv.d_i5, c.q5, inv.i5_bar, &mut k, &mut dev);
    quadratic(dv.d_i7, c.q7, inv.i7_bar, &mut k, &mut dev);
    let s = -2.0 / 3.0 * dev + inv.j * dv.d_j;
    jt.tr_mul(&sym3_to_mat(&k)) * s23 + jt_inv * (s * c.base.v0)
}

/// `F_a = B·d_a`. T4 computes three columns and sets node 0 to their
/// negated sum.
#[inline(always)]
pub fn distribute<const N: usize>(bracket: &Mat3, d: &ShapeDerivatives<N>) -> ElementForces<N> {
    if N == 4 {
        let c0 = bracket.column(0).into_owned();
        let c1 = bracket.column(1).into_owned();
        let c2 = bracket.column(2).into_owned();
        let mut f = [Vec3::zeros(); N];
        f[0] = -(c0 + c1 + c2);
        f[1] = c0;
        f[2] = c1;
        f[3] = c2;
        f
    } else {
        distribute_full(bracket, d)
    }
}

/// `F_a = B·d_a` for every node, without shortcuts.
pub fn distribute_full<const N: usize>(bracket: &Mat3, d: &ShapeDerivatives<N>) -> ElementForces<N> {
    std::array::from_fn(|a| bracket * d.column(a))
}

/// Nodal forces of one element from its kinematic state.
pub fn element_force<const N: usize>(
    c: &ConstantsView<'_>,
    kin: &ElementKinematics,
    dv: &EnergyDerivatives,
    d: &ShapeDerivatives<N>,
) -> ElementForces<N> {
    let b = force_bracket(c, &kin.jt, &kin.jt_inv, &kin.g_hat, &kin.inv, dv);
    distribute(&b, d)
}

/// `f_i = k Σ_a γ_a (γ_aᵀ u_i)`, added to `out`.
#[inline(always)]
pub fn add_hourglass_force<const N: usize>(gamma: &[[Real; N]; 4], u: &[Vec3; N], k: Real, out: &mut [Vec3; N]) {
    for g in gamma {
        let mut q = Vec3::zeros();
        for a in 0..N {
            q += u[a] * g[a];
        }
        q *= k;
        for a in 0..N {
            out[a] += q * g[a];
        }
    }
}

pub fn hourglass_force(gamma: &[[Real; 8]; 4], u: &[Vec3; 8], k: Real) -> ElementForces<8> {
    let mut out = [Vec3::zeros(); 8];
    add_hourglass_force(gamma, u, k, &mut out);
    out
}

/// Hourglass vectors and stiffness `k = c_hg κ ⁰V^{1/3}` of one element.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hourglass<const N: usize> {
    pub gamma: [[Real; N]; 4],
    pub k: Real,
}

/// `ᵗJ = ⁰J + D·U` for the natural derivative matrices. For H8 the ±1/8
/// pattern reduces to sums of antipodal node differences.
#[inline(always)]
pub(crate) fn natural_jacobian<const N: usize>(j0: &Mat3, u: &[Vec3; N]) -> Mat3 {
    let mut jt = *j0;
    let mut add_row = |i: usize, v: Vec3| {
        jt[(i, 0)] += v.x;
        jt[(i, 1)] += v.y;
        jt[(i, 2)] += v.z;
    };
    if N == 4 {
        for i in 0..3 {
            add_row(i, u[i + 1] - u[0]);
        }
    } else {
        let a = u[6] - u[0];
        let b = u[5] - u[3];
        let c = u[1] - u[7];
        let d = u[2] - u[4];
        add_row(0, (a + b + c + d) * 0.125);
        add_row(1, (a - b - c + d) * 0.125);
        add_row(2, (a + b - c - d) * 0.125);
    }
    jt
}

/// Transposed counterpart of [`natural_jacobian`] for the force columns.
#[inline(always)]
pub(crate) fn natural_distribute<const N: usize>(bracket: &Mat3) -> ElementForces<N> {
    let p0 = bracket.column(0).into_owned();
    let p1 = bracket.column(1).into_owned();
    let p2 = bracket.column(2).into_owned();
    let mut f = [Vec3::zeros(); N];
    if N == 4 {
        f[0] = -(p0 + p1 + p2);
        f[1] = p0;
        f[2] = p1;
        f[3] = p2;
    } else {
        let (p0, p1, p2) = (p0 * 0.125, p1 * 0.125, p2 * 0.125);
        let n6 = p0 + p1 + p2;
        let n1 = p0 - p1 - p2;
        let n2 = p0 + p1 - p2;
        let n3 = p1 - p0 - p2;
        f[0] = -n6;
        f[1] = n1;
        f[2] = n2;
        f[3] = n3;
        f[4] = -n2;
        f[5] = -n3;
        f[6] = n6;
        f[7] = -n1;
    }
    f
}

/// How element work is spread over threads.
#[derive(Clone)]
pub struct Parallelism {
    pool: Option<Arc<rayon::ThreadPool>>,
    threads: usize,
}

impl std::fmt::Debug for Parallelism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Parallelism({} threads)", self.threads)
    }
}

impl Parallelism {
    pub fn serial() -> Self {
        Parallelism { pool: None, threads: 1 }
    }

    /// A dedicated pool of `n` threads; `n = 1` runs inline.
    pub fn threads(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("thread count must be at least 1"));
        }
        if n == 1 {
            return Ok(Self::serial());
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::config(format!("cannot start thread pool: {e}")))?;
        Ok(Parallelism { pool: Some(Arc::new(pool)), threads: n })
    }

    /// One thread per available core.
    pub fn auto() -> Result<Self> {
        Self::threads(std::thread::available_parallelism().map_or(1, |n| n.get()))
    }

    pub fn count(&self) -> usize {
        self.threads
    }

    pub(crate) fn pool(&self) -> Option<&rayon::ThreadPool> {
        self.pool.as_deref()
    }
}

/// What to do when an element inverts (`J ≤ 0`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InversionPolicy {
    #[default]
    Abort,
    /// Keep computing with the signed `J` and count the events.
    Report,
}

impl std::str::FromStr for InversionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abort" => Ok(InversionPolicy::Abort),
            "report" => Ok(InversionPolicy::Report),
            other => Err(Error::config(format!("unknown inversion policy '{other}'"))),
        }
    }
}

/// Inverted elements found during one assembly.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InversionSummary {
    /// Lowest inverted element index and its volume ratio.
    pub first: Option<(usize, Real)>,
    pub count: usize,
}

impl InversionSummary {
    fn merge(self, other: Self) -> Self {
        let first = match (self.first, other.first) {
            (Some(a), Some(b)) => Some(if a.0 <= b.0 { a } else { b }),
            (a, b) => a.or(b),
        };
        InversionSummary { first, count: self.count + other.count }
    }

    fn single(e: usize, j: Real) -> Self {
        InversionSummary { first: Some((e, j)), count: 1 }
    }
}

/// Node → element-row incidence in ascending element order.
#[derive(Debug, Clone, PartialEq)]
pub struct Adjacency {
    offsets: Vec<u32>,
    slots: Vec<u32>,
}

impl Adjacency {
    /// `slots` index the flattened per-element buffer (`e·N + a`).
    pub fn build<const N: usize>(nodes: usize, conn: &[[u32; N]]) -> Self {
        let mut counts = vec![0u32; nodes + 1];
        for c in conn {
            for &n in c {
                counts[n as usize + 1] += 1;
            }
        }
        for i in 0..nodes {
            counts[i + 1] += counts[i];
        }
        let offsets = counts.clone();
        let mut next = counts;
        let mut slots = vec![0u32; conn.len() * N];
        for (e, c) in conn.iter().enumerate() {
            for (a, &n) in c.iter().enumerate() {
                let at = &mut next[n as usize];
                slots[*at as usize] = (e * N + a) as u32;
                *at += 1;
            }
        }
        Adjacency { offsets, slots }
    }

    pub fn incident(&self, node: usize) -> &[u32] {
        &self.slots[self.offsets[node] as usize..self.offsets[node + 1] as usize]
    }

    /// Sums element rows into nodal forces in fixed order.
    pub fn gather(&self, rows: &[Vec3], out: &mut [Vec3], par: &Parallelism) {
        let sum = |(node, f): (usize, &mut Vec3)| {
            let mut acc = Vec3::zeros();
            for &s in self.incident(node) {
                acc += rows[s as usize];
            }
            *f = acc;
        };
        match par.pool() {
            None => out.iter_mut().enumerate().for_each(sum),
            Some(pool) => pool.install(|| out.par_iter_mut().enumerate().with_min_len(1024).for_each(sum)),
        }
    }
}

/// A per-element force kernel over one connectivity array.
pub trait ElementKernel<const N: usize>: Sync {
    fn connectivity(&self) -> &[[u32; N]];

    /// Writes the element forces and returns the volume ratio `J`.
    fn element(&self, e: usize, u: &[Vec3; N], out: &mut ElementForces<N>) -> Real;

    /// Hourglass blocks, empty when control is off.
    fn hourglass(&self) -> &[Hourglass<N>] {
        &[]
    }
}

/// Element-parallel evaluation followed by the ordered node gather.
pub fn assemble<const N: usize, K: ElementKernel<N>>(
    kernel: &K,
    adjacency: &Adjacency,
    u: &[Vec3],
    rows: &mut Vec<ElementForces<N>>,
    f: &mut [Vec3],
    par: &Parallelism,
) -> InversionSummary {
    let conn = kernel.connectivity();
    rows.resize(conn.len(), [Vec3::zeros(); N]);
    let run = |(e, (c, out)): (usize, (&[u32; N], &mut ElementForces<N>))| {
        let ue: [Vec3; N] = std::array::from_fn(|a| u[c[a] as usize]);
        // the reference state is stress-free; skip roundoff-level residuals
        if ue.iter().all(|v| *v == Vec3::zeros()) {
            *out = [Vec3::zeros(); N];
            return InversionSummary::default();
        }
        let j = kernel.element(e, &ue, out);
        if j > 0.0 {
            InversionSummary::default()
        } else {
            InversionSummary::single(e, j)
        }
    };
    let summary = match par.pool() {
        None => conn
            .iter()
            .zip(rows.iter_mut())
            .enumerate()
            .map(run)
            .fold(InversionSummary::default(), InversionSummary::merge),
        Some(pool) => pool.install(|| {
            conn.par_iter()
                .zip(rows.par_iter_mut())
                .enumerate()
                .with_min_len(256)
                .map(run)
                .reduce(InversionSummary::default, InversionSummary::merge)
        }),
    };
    adjacency.gather(rows.as_flattened(), f, par);
    summary
}

/// Connectivity as fixed-size `u32` arrays. `N` must match the mesh kind.
pub fn connectivity<const N: usize>(mesh: &Mesh) -> Result<Vec<[u32; N]>> {
    if mesh.kind.nodes() != N || mesh.nodes.len() > u32::MAX as usize {
        return Err(Error::invalid("connectivity size does not match the mesh"));
    }
    Ok(mesh.elements.iter().map(|c| std::array::from_fn(|a| c[a] as u32)).collect())
}

/// Hourglass records for every element of an H8 mesh, or none when `c_hg = 0`.
pub(crate) fn hourglass_blocks<const N: usize>(
    constants: &[ElementConstants<N>],
    kappa: Real,
    c_hg: Real,
) -> Vec<Hourglass<N>> {
    if c_hg == 0.0 {
        return Vec::new();
    }
    constants
        .iter()
        .filter_map(|c| c.hourglass.map(|gamma| Hourglass { gamma, k: c_hg * kappa * c.v0.cbrt() }))
        .collect()
}

/// Stable step of the hourglass springs alone: `min 2/ω_e` with
/// `ω_e² = 8 k_e max_a |γ_a|² / (ρ ⁰V_e)`, exact for the checkerboard mode of
/// a uniform box. Infinite without control.
pub fn hourglass_critical_dt<const N: usize>(blocks: &[Hourglass<N>], volumes: &[Real], density: Real) -> Real {
    blocks
        .iter()
        .zip(volumes)
        .map(|(h, &v)| {
            let g2 = h.gamma.iter().map(|g| g.iter().map(|x| x * x).sum::<Real>()).fold(0.0, Real::max);
            let w2 = 8.0 * h.k * g2 / (density * v);
            if w2 > 0.0 { 2.0 / w2.sqrt() } else { Real::INFINITY }
        })
        .fold(Real::INFINITY, Real::min)
}

/// Per-element precompute for a whole mesh.
pub(crate) fn all_constants<const N: usize>(mesh: &Mesh, material: &Material) -> Result<Vec<ElementConstants<N>>>
where
    ShapeDerivatives<N>: ElementShape,
{
    let needs = material.needs();
    let fibres = FibreDirections::of(material);
    (0..mesh.elements.len())
        .map(|e| {
            ElementConstants::compute(&mesh.element_coords::<N>(e), needs, fibres.as_ref())
                .map_err(|err| err.at_element(e))
        })
        .collect()
}

/// `w = M ĝ` for a packed symmetric `M`.
#[inline(always)]
pub(crate) fn sym6_apply(m: &Sym6, g: &Vec6) -> Vec6 {
    let mut w = [0.0; 6];
    let mut k = 0;
    for p in 0..6 {
        w[p] += m[k] * g[p];
        k += 1;
        for q in (p + 1)..6 {
            w[p] += m[k] * g[q];
            w[q] += m[k] * g[p];
            k += 1;
        }
    }
    Vec6::from(w)
}

/// Adds `scale · unpack(w)` where the diagonal of the unpacked tensor is `2w`
/// and the off-diagonal entries are `w`. With `w = M ĝ` this equals
/// `scale/(2⁰V) · ĝ·I_m` for the matching quadratic invariant.
#[inline(always)]
fn axpy_trace_gradient(scale: Real, w: &Vec6, acc: &mut Sym3) {
    for c in 0..3 {
        acc[c] += 2.0 * scale * w[c];
    }
    for c in 3..6 {
        acc[c] += scale * w[c];
    }
}

/// The DJ-TLED element kernel.
///
/// Quadratic invariants keep only their trace matrices: `ĝ·I_m` is
/// recovered from `w = M ĝ`, which the invariant `ĝ·w` needs anyway.
#[derive(Debug, Clone)]
pub struct DjtledElements<const N: usize> {
    conn: Vec<[u32; N]>,
    base: Vec<BaseBlock>,
    q2: Vec<Sym6>,
    l4: Vec<LinearBlock>,
    q5: Vec<Sym6>,
    l6: Vec<LinearBlock>,
    q7: Vec<Sym6>,
    hourglass: Vec<Hourglass<N>>,
    material: Material,
}

impl<const N: usize> DjtledElements<N>
where
    ShapeDerivatives<N>: ElementShape,
{
    pub fn build(mesh: &Mesh, material: &Material, c_hg: Real) -> Result<Self> {
        let conn = connectivity::<N>(mesh)?;
        let constants = all_constants::<N>(mesh, material)?;
        let hourglass = hourglass_blocks(&constants, material.bulk_modulus(), c_hg);
        let mut out = DjtledElements {
            conn,
            base: Vec::with_capacity(constants.len()),
            q2: Vec::new(),
            l4: Vec::new(),
            q5: Vec::new(),
            l6: Vec::new(),
            q7: Vec::new(),
            hourglass,
            material: *material,
        };
        for c in &constants {
            let p = c.packed();
            out.base.push(p.base);
            out.q2.extend(p.q2.map(|q| q.m));
            out.l4.extend(p.l4);
            out.q5.extend(p.q5.map(|q| q.m));
            out.l6.extend(p.l6);
            out.q7.extend(p.q7.map(|q| q.m));
        }
        Ok(out)
    }
}

impl<const N: usize> ElementKernel<N> for DjtledElements<N> {
    fn connectivity(&self) -> &[[u32; N]] {
        &self.conn
    }

    fn hourglass(&self) -> &[Hourglass<N>] {
        &self.hourglass
    }

    #[inline]
    fn element(&self, e: usize, u: &[Vec3; N], out: &mut ElementForces<N>) -> Real {
        let base = &self.base[e];
        let (l4, l6) = (self.l4.get(e), self.l6.get(e));
        let jt = natural_jacobian::<N>(&base.j0, u);
        let (det, jt_inv) = det_and_inverse(&jt);
        let j = det * base.inv_det_j0;
        let g = g_vector(&jt);
        let w2 = self.q2.get(e).map(|m| sym6_apply(m, &g));
        let w5 = self.q5.get(e).map(|m| sym6_apply(m, &g));
        let w7 = self.q7.get(e).map(|m| sym6_apply(m, &g));
        let inv = Invariants::from_raw(
            j,
            g.dot(&base.m1),
            w2.map(|w| g.dot(&w)),
            l4.map(|b| g.dot(&b.m)),
            w5.map(|w| g.dot(&w)),
            l6.map(|b| g.dot(&b.m)),
            w7.map(|w| g.dot(&w)),
        );
        let dv = self.material.derivatives(&inv);
        let (s23, _) = j_scalings(j);
        let mut k = [0.0; 6];
        axpy_sym(dv.d_i1, &base.i1m, &mut k);
        let mut dev = dv.d_i1 * inv.i1_bar;
        for (d, b, bar) in [(dv.d_i4, l4, inv.i4_bar), (dv.d_i6, l6, inv.i6_bar)] {
            if let (Some(d), Some(b)) = (d, b) {
                axpy_sym(d, &b.i, &mut k);
                dev += d * bar.unwrap_or(0.0);
            }
        }
        let quad = 2.0 * base.v0 * s23;
        for (d, w, bar) in [(dv.d_i2, w2, inv.i2_bar), (dv.d_i5, w5, inv.i5_bar), (dv.d_i7, w7, inv.i7_bar)] {
            if let (Some(d), Some(w)) = (d, w) {
                axpy_trace_gradient(quad * d, &w, &mut k);
                dev += 2.0 * d * bar.unwrap_or(0.0);
            }
        }
        let s = -2.0 / 3.0 * dev + j * dv.d_j;
        let bracket = jt.tr_mul(&sym3_to_mat(&k)) * s23 + jt_inv * (s * base.v0);
        *out = natural_distribute::<N>(&bracket);
        if let Some(h) = self.hourglass.get(e) {
            add_hourglass_force(&h.gamma, u, h.k, out);
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::element::HEX8_CORNERS;
    use crate::kinematics::{element_kinematics, update_jacobian};
    use crate::mesh::generate_box;
    use crate::precompute::{sym3, HOURGLASS_BASE};

    fn tet() -> [Vec3; 4] {
        [Vec3::new(0.0, 0.0, 0.0), Vec3::new(1.0, 0.1, 0.0), Vec3::new(0.1, 0.9, 0.05), Vec3::new(0.05, 0.1, 1.1)]
    }

    fn hex() -> [Vec3; 8] {
        std::array::from_fn(|a| {
            let c = Vec3::from(HEX8_CORNERS[a]);
            c * 0.05 + Vec3::new(0.003 * c.y * c.z, -0.002 * c.x, 0.001 * c.x * c.y)
        })
    }

    fn forces<const N: usize>(x: &[Vec3; N], u: &[Vec3; N], m: &Material) -> ElementForces<N>
    where
        ShapeDerivatives<N>: ElementShape,
    {
        let c = ElementConstants::for_material(x, m).unwrap();
        let p = c.packed();
        let kin = element_kinematics(&p.view(), u, &c.d, m.needs()).unwrap();
        element_force(&p.view(), &kin, &m.derivatives(&kin.inv), &c.d)
    }

    #[test]
    fn contract_ghat_selects_and_sums() {
        let pack: SixPack = std::array::from_fn(|k| Mat3::from_fn(|i, j| (k * 9 + i * 3 + j) as Real));
        let e0 = Vec6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(contract_ghat(&e0, &pack), pack[0]);
        assert_eq!(contract_ghat(&Vec6::zeros(), &pack), Mat3::zeros());
        let g = Vec6::new(0.5, -1.0, 2.0, 0.25, 3.0, -0.75);
        let naive = pack[0] * 0.5 - pack[1] + pack[2] * 2.0 + pack[3] * 0.25 + pack[4] * 3.0 - pack[5] * 0.75;
        assert!((contract_ghat(&g, &pack) - naive).norm() < 1e-12);
        let spack = pack.map(|m| sym3(&(m + m.transpose())));
        let mut acc = [0.0; 6];
        contract_sym(&g, &spack, 1.0, &mut acc);
        let dense = contract_ghat(&g, &pack.map(|m| m + m.transpose()));
        assert!((sym3_to_mat(&acc) - dense).norm() < 1e-12);
    }

    #[test]
    fn zero_displacement_gives_zero_force() {
        for m in Material::reference_set() {
            for f in forces(&tet(), &[Vec3::zeros(); 4], &m) {
                assert!(f.norm() < 1e-10, "{}", m.tag());
            }
            for f in forces(&hex(), &[Vec3::zeros(); 8], &m) {
                assert!(f.norm() < 1e-10, "{}", m.tag());
            }
        }
    }

    #[test]
    fn rigid_rotation_gives_zero_force() {
        let m = Material::neo_hookean(1.0, 1.0, 1.0).unwrap();
        let r = nalgebra::Rotation3::from_euler_angles(0.4, -0.9, 1.3);
        let x = [Vec3::zeros(), Vec3::x(), Vec3::y(), Vec3::z()];
        let u: [Vec3; 4] = std::array::from_fn(|a| r * x[a] - x[a] + Vec3::new(0.2, 0.3, -0.1));
        for f in forces(&x, &u, &m) {
            assert!(f.norm() < 1e-9);
        }
    }

    #[test]
    fn rows_sum_to_zero_and_t4_shortcut_is_exact() {
        let [_, ti, ..] = Material::reference_set();
        let x = tet();
        let u = [Vec3::new(0.01, 0.0, 0.02), Vec3::new(0.05, -0.02, 0.0), Vec3::zeros(), Vec3::new(0.0, 0.03, 0.08)];
        let c = ElementConstants::for_material(&x, &ti).unwrap();
        let p = c.packed();
        let kin = element_kinematics(&p.view(), &u, &c.d, ti.needs()).unwrap();
        let b = force_bracket(&p.view(), &kin.jt, &kin.jt_inv, &kin.g_hat, &kin.inv, &ti.derivatives(&kin.inv));
        let fast = distribute(&b, &c.d);
        let full = distribute_full(&b, &c.d);
        let scale = full.iter().map(|v| v.norm()).fold(0.0, Real::max);
        for a in 0..4 {
            assert!((fast[a] - full[a]).norm() <= 1e-12 * scale);
        }
        assert!(full.iter().sum::<Vec3>().norm() <= 1e-10 * scale);
    }

    #[test]
    fn natural_shortcuts_match_general_products() {
        let d = ShapeDerivatives::<8>::natural();
        let u: [Vec3; 8] = std::array::from_fn(|a| Vec3::new(a as Real * 0.01, (a * a) as Real * 0.001, -0.02 * a as Real));
        let j0 = Mat3::new(1.0, 0.1, 0.2, 0.0, 0.9, -0.1, 0.3, 0.0, 1.2);
        let (general, _, _) = update_jacobian(&j0, &u, &d).unwrap();
        assert!((natural_jacobian::<8>(&j0, &u) - general).norm() < 1e-14);
        let b = Mat3::new(0.3, -1.0, 2.0, 0.5, 0.25, -0.75, 1.5, 0.1, -0.2);
        let (fast, full) = (natural_distribute::<8>(&b), distribute_full(&b, &d));
        for a in 0..8 {
            assert!((fast[a] - full[a]).norm() < 1e-15);
        }
        let d4 = ShapeDerivatives::<4>::natural();
        let u4 = [u[0], u[1], u[2], u[3]];
        let (g4, _, _) = update_jacobian(&j0, &u4, &d4).unwrap();
        assert_eq!(natural_jacobian::<4>(&j0, &u4), g4);
    }

    #[test]
    fn hourglass_force_vanishes_on_affine_fields() {
        let x = hex();
        let c = ElementConstants::<8>::compute(&x, Default::default(), None).unwrap();
        let gamma = c.hourglass.unwrap();
        let w = Mat3::new(0.1, -0.2, 0.3, 0.05, 0.0, 0.4, -0.1, 0.2, 0.0);
        let u: [Vec3; 8] = std::array::from_fn(|a| w * x[a] + Vec3::new(1.0, 2.0, 3.0));
        for f in hourglass_force(&gamma, &u, 10.0) {
            assert!(f.norm() < 1e-12);
        }
        let u0: [Vec3; 8] = std::array::from_fn(|a| Vec3::x() * gamma[0][a]);
        assert!(hourglass_force(&gamma, &u0, 0.0).iter().all(|f| f.norm() == 0.0));
    }

    #[test]
    fn hourglass_force_resists_its_mode() {
        // aligned cube: γ are the base vectors and mutually orthogonal
        let x: [Vec3; 8] = std::array::from_fn(|a| Vec3::from(HEX8_CORNERS[a]));
        let c = ElementConstants::<8>::compute(&x, Default::default(), None).unwrap();
        let gamma = c.hourglass.unwrap();
        assert_eq!(gamma, HOURGLASS_BASE);
        let u: [Vec3; 8] = std::array::from_fn(|a| Vec3::x() * gamma[0][a]);
        let f = hourglass_force(&gamma, &u, 2.0);
        for a in 0..8 {
            // gradient of k/2 Σ (γᵀu)²: k (γᵀu) γ = 2 · 8 · γ
            assert_eq!(f[a], Vec3::x() * 16.0 * gamma[0][a]);
            assert!(f[a].dot(&u[a]) > 0.0);
        }
    }

    #[test]
    fn adjacency_is_ascending_and_complete() {
        let conn: Vec<[u32; 4]> = vec![[0, 1, 2, 3], [1, 2, 3, 4]];
        let adj = Adjacency::build(5, &conn);
        assert_eq!(adj.incident(0), &[0]);
        assert_eq!(adj.incident(1), &[1, 4]);
        assert_eq!(adj.incident(3), &[3, 6]);
        assert_eq!(adj.incident(4), &[7]);
    }

    #[test]
    fn two_element_assembly_matches_hand_sum() {
        let mesh = generate_box([0.1, 0.05, 0.05], [2, 1, 1], crate::element::ElementKind::H8).unwrap();
        let m = Material::neo_hookean(6567.0, 326210.0, 1060.0).unwrap();
        let k = DjtledElements::<8>::build(&mesh, &m, 0.1).unwrap();
        let conn = connectivity::<8>(&mesh).unwrap();
        let adj = Adjacency::build(mesh.nodes.len(), &conn);
        let u: Vec<Vec3> = mesh.nodes.iter().map(|p| Vec3::new(0.1 * p.x * p.y, 0.0, 0.2 * p.z * p.x)).collect();
        let mut rows = Vec::new();
        let mut f = vec![Vec3::zeros(); mesh.nodes.len()];
        let s = assemble(&k, &adj, &u, &mut rows, &mut f, &Parallelism::serial());
        assert_eq!(s.count, 0);
        let mut hand = vec![Vec3::zeros(); mesh.nodes.len()];
        for (e, c) in conn.iter().enumerate() {
            let ue: [Vec3; 8] = std::array::from_fn(|a| u[c[a] as usize]);
            let mut out = [Vec3::zeros(); 8];
            k.element(e, &ue, &mut out);
            for a in 0..8 {
                hand[c[a] as usize] += out[a];
            }
        }
        for (a, b) in f.iter().zip(&hand) {
            assert!((a - b).norm() <= 1e-14 * b.norm().max(1e-12));
        }
    }

    #[test]
    fn inversion_reports_lowest_element() {
        let mesh = generate_box([1.0, 1.0, 1.0], [1, 1, 1], crate::element::ElementKind::T4).unwrap();
        let m = Material::neo_hookean(1.0, 1.0, 1.0).unwrap();
        let k = DjtledElements::<4>::build(&mesh, &m, 0.0).unwrap();
        let conn = connectivity::<4>(&mesh).unwrap();
        let adj = Adjacency::build(mesh.nodes.len(), &conn);
        let mut u = vec![Vec3::zeros(); mesh.nodes.len()];
        // pull the far corner, shared by all six tets, through the box
        let far = mesh.nodes.iter().position(|p| *p == Vec3::repeat(1.0)).unwrap();
        u[far] = Vec3::new(-3.0, -3.0, -3.0);
        let mut rows = Vec::new();
        let mut f = vec![Vec3::zeros(); mesh.nodes.len()];
        let s = assemble(&k, &adj, &u, &mut rows, &mut f, &Parallelism::serial());
        assert_eq!(s.count, 6);
        assert_eq!(s.first.unwrap().0, 0);
    }

    #[test]
    fn policy_parses() {
        assert_eq!("report".parse::<InversionPolicy>().unwrap(), InversionPolicy::Report);
        assert!("maybe".parse::<InversionPolicy>().is_err());
    }
}
