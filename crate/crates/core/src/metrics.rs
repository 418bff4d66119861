//! Field comparison metrics: RMSE over all DOFs and normalised relative
//! errors with a decade histogram.

use crate::{Error, Real, Result, Vec3};

/// Flattens nodal vectors into DOF order `(x₀, y₀, z₀, x₁, …)`.
pub fn flatten(field: &[Vec3]) -> Vec<Real> {
    field.iter().flat_map(|v| [v.x, v.y, v.z]).collect()
}

/// `sqrt(Σ (a_i − b_i)² / N)`.
pub fn rmse(a: &[Real], b: &[Real]) -> Result<Real> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("field lengths differ ({} vs {})", a.len(), b.len())));
    }
    if a.is_empty() {
        return Err(Error::invalid("cannot compare empty fields"));
    }
    let sum: Real = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok((sum / a.len() as Real).sqrt())
}

pub fn rmse_fields(a: &[Vec3], b: &[Vec3]) -> Result<Real> {
    rmse(&flatten(a), &flatten(b))
}

/// `|a_i − b_i| / (max b − min b)` per DOF. `b` is the reference.
pub fn nre(a: &[Real], b: &[Real]) -> Result<Vec<Real>> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!("field lengths differ ({} vs {})", a.len(), b.len())));
    }
    let lo = b.iter().cloned().fold(Real::INFINITY, Real::min);
    let hi = b.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::invalid("reference field is uniform; NRE denominator is zero"));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y).abs() / range).collect())
}

/// Decade buckets: `[0]` exact zeros, then `< 1e-16`, `[1e-16, 1e-15)`, …,
/// `[1e-2, 1e-1)`, `≥ 1e-1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NreHistogram {
    pub zero: usize,
    /// `(upper bound, count)` with bounds `1e-16 … 1e-1`.
    pub decades: Vec<(Real, usize)>,
    pub above: usize,
}

impl NreHistogram {
    pub const LOWEST_EXPONENT: i32 = -16;

    pub fn new(values: &[Real]) -> Self {
        let bounds: Vec<Real> = (Self::LOWEST_EXPONENT..=-1).map(|e| (10.0 as Real).powi(e)).collect();
        let mut decades: Vec<(Real, usize)> = bounds.iter().map(|&b| (b, 0)).collect();
        let (mut zero, mut above) = (0, 0);
        for &v in values {
            if v == 0.0 {
                zero += 1;
            } else if let Some(slot) = decades.iter_mut().find(|(b, _)| v < *b) {
                slot.1 += 1;
            } else {
                above += 1;
            }
        }
        NreHistogram { zero, decades, above }
    }

    pub fn total(&self) -> usize {
        self.zero + self.above + self.decades.iter().map(|d| d.1).sum::<usize>()
    }

    /// One line per non-empty bucket.
    pub fn render(&self) -> String {
        let mut out = String::new();
        if self.zero > 0 {
            out.push_str(&format!("  nre = 0        : {}\n", self.zero));
        }
        let mut lower: Option<Real> = None;
        for &(upper, count) in &self.decades {
            if count > 0 {
                match lower {
                    None => out.push_str(&format!("  (0, {upper:.0e})     : {count}\n")),
                    Some(lo) => out.push_str(&format!("  [{lo:.0e}, {upper:.0e}) : {count}\n")),
                }
            }
            lower = Some(upper);
        }
        if self.above > 0 {
            out.push_str(&format!("  >= 1e-1       : {}\n", self.above));
        }
        out
    }
}
