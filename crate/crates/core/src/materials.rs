//! Hyperelastic strain energies written in the uncoupled form
//! `Ψ(Ī₁, Ī₂, Ī₄, Ī₅, Ī₆, Ī₇) + Ψ(J)`.
//!
//! The force kernels only see a material through [`StrainEnergy`], so any
//! energy of the modified invariants can be plugged in. Derivatives that are
//! structurally zero are reported as `None` and the kernels skip the whole
//! corresponding term.

use crate::kinematics::{InvariantNeeds, Invariants};
use crate::{Error, Real, Result, Vec3};

/// Partial derivatives of `Ψ` with respect to the modified invariants and `J`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyDerivatives {
    pub d_i1: Real,
    pub d_i2: Option<Real>,
    pub d_i4: Option<Real>,
    pub d_i5: Option<Real>,
    pub d_i6: Option<Real>,
    pub d_i7: Option<Real>,
    pub d_j: Real,
}

/// A strain energy density of the modified invariants and the volume ratio.
pub trait StrainEnergy: Sync {
    /// Invariants the energy depends on besides `Ī₁` and `J`.
    fn needs(&self) -> InvariantNeeds;

    /// Preferred fibre directions `a` and `b`, when the energy uses them.
    fn fibres(&self) -> (Option<Vec3>, Option<Vec3>);

    fn energy(&self, inv: &Invariants) -> Real;

    fn derivatives(&self, inv: &Invariants) -> EnergyDerivatives;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MaterialModel {
    NeoHookean { mu: Real, kappa: Real },
    TransverselyIsotropic { mu: Real, eta_a: Real, kappa: Real, a: Vec3 },
    Orthotropic { mu: Real, eta_a: Real, eta_b: Real, kappa: Real, a: Vec3, b: Vec3 },
    MooneyRivlin { c10: Real, c01: Real, kappa: Real },
}

/// A material model together with its mass density (kg/m³).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    pub model: MaterialModel,
    pub density: Real,
}

impl Material {
    pub fn new(model: MaterialModel, density: Real) -> Result<Self> {
        let m = Material { model, density };
        m.validate()?;
        Ok(m)
    }

    pub fn neo_hookean(mu: Real, kappa: Real, density: Real) -> Result<Self> {
        Self::new(MaterialModel::NeoHookean { mu, kappa }, density)
    }

    pub fn transversely_isotropic(mu: Real, eta_a: Real, kappa: Real, a: Vec3, density: Real) -> Result<Self> {
        Self::new(MaterialModel::TransverselyIsotropic { mu, eta_a, kappa, a }, density)
    }

    pub fn orthotropic(
        mu: Real,
        eta_a: Real,
        eta_b: Real,
        kappa: Real,
        a: Vec3,
        b: Vec3,
        density: Real,
    ) -> Result<Self> {
        Self::new(MaterialModel::Orthotropic { mu, eta_a, eta_b, kappa, a, b }, density)
    }

    pub fn mooney_rivlin(c10: Real, c01: Real, kappa: Real, density: Real) -> Result<Self> {
        Self::new(MaterialModel::MooneyRivlin { c10, c01, kappa }, density)
    }

    /// The four models with the parameter sets of the cube extension study.
    pub fn reference_set() -> [Material; 4] {
        let (mu, kappa, rho) = (6567.0, 326210.0, 1060.0);
        [
            Material::neo_hookean(mu, kappa, rho).unwrap(),
            Material::transversely_isotropic(mu, 2.0 * mu, kappa, Vec3::x(), rho).unwrap(),
            Material::orthotropic(mu, 2.0 * mu, 2.0 * mu, kappa, Vec3::x(), Vec3::y(), rho).unwrap(),
            Material::mooney_rivlin(mu / 2.0, 3000.0, kappa, rho).unwrap(),
        ]
    }

    pub fn tag(&self) -> &'static str {
        match self.model {
            MaterialModel::NeoHookean { .. } => "NH",
            MaterialModel::TransverselyIsotropic { .. } => "TI",
            MaterialModel::Orthotropic { .. } => "OT",
            MaterialModel::MooneyRivlin { .. } => "MR",
        }
    }

    pub fn bulk_modulus(&self) -> Real {
        match self.model {
            MaterialModel::NeoHookean { kappa, .. }
            | MaterialModel::TransverselyIsotropic { kappa, .. }
            | MaterialModel::Orthotropic { kappa, .. }
            | MaterialModel::MooneyRivlin { kappa, .. } => kappa,
        }
    }

    /// Small-strain shear modulus; `2(C₁₀ + C₀₁)` for Mooney-Rivlin.
    pub fn shear_modulus(&self) -> Real {
        match self.model {
            MaterialModel::NeoHookean { mu, .. }
            | MaterialModel::TransverselyIsotropic { mu, .. }
            | MaterialModel::Orthotropic { mu, .. } => mu,
            MaterialModel::MooneyRivlin { c10, c01, .. } => 2.0 * (c10 + c01),
        }
    }

    /// Small-strain Young's modulus `9κμ/(3κ + μ)`.
    pub fn youngs_modulus(&self) -> Real {
        let (k, m) = (self.bulk_modulus(), self.shear_modulus());
        9.0 * k * m / (3.0 * k + m)
    }

    /// Dilatational wave speed `sqrt((κ + 4μ/3)/ρ)`.
    pub fn wave_speed(&self) -> Real {
        ((self.bulk_modulus() + 4.0 * self.shear_modulus() / 3.0) / self.density).sqrt()
    }

    fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: Real| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be positive, got {v}")))
            }
        };
        let non_negative = |name: &str, v: Real| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::config(format!("{name} must be non-negative, got {v}")))
            }
        };
        let unit = |name: &str, v: &Vec3| {
            if (v.norm() - 1.0).abs() <= 1e-12 {
                Ok(())
            } else {
                Err(Error::config(format!("fibre {name} must be a unit vector, |{name}| = {}", v.norm())))
            }
        };
        positive("density", self.density)?;
        match &self.model {
            MaterialModel::NeoHookean { mu, kappa } => {
                positive("mu", *mu)?;
                positive("kappa", *kappa)
            }
            MaterialModel::TransverselyIsotropic { mu, eta_a, kappa, a } => {
                positive("mu", *mu)?;
                non_negative("eta_a", *eta_a)?;
                positive("kappa", *kappa)?;
                unit("a", a)
            }
            MaterialModel::Orthotropic { mu, eta_a, eta_b, kappa, a, b } => {
                positive("mu", *mu)?;
                non_negative("eta_a", *eta_a)?;
                non_negative("eta_b", *eta_b)?;
                positive("kappa", *kappa)?;
                unit("a", a)?;
                unit("b", b)
            }
            MaterialModel::MooneyRivlin { c10, c01, kappa } => {
                non_negative("c10", *c10)?;
                non_negative("c01", *c01)?;
                positive("kappa", *kappa)?;
                if *c10 + *c01 > 0.0 {
                    Ok(())
                } else {
                    Err(Error::config("c10 + c01 must be positive"))
                }
            }
        }
    }
}

fn need(v: Option<Real>, name: &str) -> Real {
    v.unwrap_or_else(|| panic!("invariant {name} was not computed for this material"))
}

impl StrainEnergy for Material {
    fn needs(&self) -> InvariantNeeds {
        let mut n = InvariantNeeds::default();
        match self.model {
            MaterialModel::NeoHookean { .. } => {}
            MaterialModel::TransverselyIsotropic { .. } => n.i4 = true,
            MaterialModel::Orthotropic { .. } => {
                n.i4 = true;
                n.i6 = true;
            }
            MaterialModel::MooneyRivlin { .. } => n.i2 = true,
        }
        n
    }

    fn fibres(&self) -> (Option<Vec3>, Option<Vec3>) {
        match self.model {
            MaterialModel::TransverselyIsotropic { a, .. } => (Some(a), None),
            MaterialModel::Orthotropic { a, b, .. } => (Some(a), Some(b)),
            _ => (None, None),
        }
    }

    fn energy(&self, inv: &Invariants) -> Real {
        let vol = |kappa: Real| kappa / 2.0 * (inv.j - 1.0).powi(2);
        match self.model {
            MaterialModel::NeoHookean { mu, kappa } => mu / 2.0 * (inv.i1_bar - 3.0) + vol(kappa),
            MaterialModel::TransverselyIsotropic { mu, eta_a, kappa, .. } => {
                mu / 2.0 * (inv.i1_bar - 3.0)
                    + eta_a / 2.0 * (need(inv.i4_bar, "I4") - 1.0).powi(2)
                    + vol(kappa)
            }
            MaterialModel::Orthotropic { mu, eta_a, eta_b, kappa, .. } => {
                mu / 2.0 * (inv.i1_bar - 3.0)
                    + eta_a / 2.0 * (need(inv.i4_bar, "I4") - 1.0).powi(2)
                    + eta_b / 2.0 * (need(inv.i6_bar, "I6") - 1.0).powi(2)
                    + vol(kappa)
            }
            MaterialModel::MooneyRivlin { c10, c01, kappa } => {
                c10 * (inv.i1_bar - 3.0) + c01 * (need(inv.i2_bar, "I2") - 3.0) + vol(kappa)
            }
        }
    }

    #[inline]
    fn derivatives(&self, inv: &Invariants) -> EnergyDerivatives {
        match self.model {
            MaterialModel::NeoHookean { mu, kappa } => EnergyDerivatives {
                d_i1: mu / 2.0,
                d_j: kappa * (inv.j - 1.0),
                ..Default::default()
            },
            MaterialModel::TransverselyIsotropic { mu, eta_a, kappa, .. } => EnergyDerivatives {
                d_i1: mu / 2.0,
                d_i4: Some(eta_a * (need(inv.i4_bar, "I4") - 1.0)),
                d_j: kappa * (inv.j - 1.0),
                ..Default::default()
            },
            MaterialModel::Orthotropic { mu, eta_a, eta_b, kappa, .. } => EnergyDerivatives {
                d_i1: mu / 2.0,
                d_i4: Some(eta_a * (need(inv.i4_bar, "I4") - 1.0)),
                d_i6: Some(eta_b * (need(inv.i6_bar, "I6") - 1.0)),
                d_j: kappa * (inv.j - 1.0),
                ..Default::default()
            },
            MaterialModel::MooneyRivlin { c10, c01, kappa } => EnergyDerivatives {
                d_i1: c10,
                d_i2: Some(c01),
                d_j: kappa * (inv.j - 1.0),
                ..Default::default()
            },
        }
    }
}
