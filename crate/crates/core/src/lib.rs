//! Direct-Jacobian total Lagrangian explicit dynamics (DJ-TLED) for
//! hyperelastic solids.
//!
//! Nodal forces are evaluated from the element Jacobian operator alone: the
//! deformation gradient, right Cauchy-Green tensor and stress never appear in
//! the run-time kernel. A conventional TLED path ([`tled`]) computes the same
//! forces through `X`, `C` and `S` and serves both as a differential oracle
//! and as a benchmark baseline.
//!
//! The crate is organised bottom-up:
//!
//! - [`mesh`]: mesh model, text format, box generation, VTK export
//! - [`element`]: shape-function derivatives and the reference Jacobian
//! - [`precompute`]: all time-invariant per-element tensors, masses, `Δt`
//! - [`kinematics`]: run-time Jacobian, `ĝ` and strain invariants
//! - [`materials`]: NH, TI, OT and MR strain energies
//! - [`forces`]: the DJ-TLED force kernel, hourglass control, assembly
//! - [`tled`]: the reference TLED force path
//! - [`solver`]: central-difference time integration
//! - [`metrics`], [`config`], [`bench`], [`demo`]: command-line support
//!
//! ```
//! use djtled::prelude::*;
//!
//! let mesh = generate_box([0.1, 0.1, 0.1], [2, 2, 2], ElementKind::H8).unwrap();
//! let material = Material::neo_hookean(6567.0, 326210.0, 1060.0).unwrap();
//! let mut model = Model::build(&mesh, &material, Engine::Djtled, 0.1).unwrap();
//! let u = vec![Vec3::zeros(); mesh.nodes.len()];
//! let mut f = vec![Vec3::zeros(); mesh.nodes.len()];
//! model.internal_forces(&u, &mut f, &Parallelism::serial(), InversionPolicy::Abort).unwrap();
//! assert!(f.iter().all(|v| v.norm() == 0.0));
//! ```

pub mod bench;
pub mod config;
pub mod demo;
pub mod element;
pub mod error;
pub mod forces;
pub mod kinematics;
pub mod materials;
pub mod mesh;
pub mod metrics;
pub mod precompute;
pub mod solver;
pub mod tled;

pub use error::{Error, Result};

/// Scalar type used throughout. `f64` unless built with the `single` feature.
#[cfg(not(feature = "single"))]
pub type Real = f64;
#[cfg(feature = "single")]
pub type Real = f32;

pub type Vec3 = nalgebra::Vector3<Real>;
pub type Mat3 = nalgebra::Matrix3<Real>;
pub type Vec6 = nalgebra::Vector6<Real>;
pub type Mat6 = nalgebra::Matrix6<Real>;

/// Six 3×3 matrices indexed in `ĝ` order (11, 22, 33, 12, 13, 23).
pub type SixPack = [Mat3; 6];

/// Name of the compiled floating-point width, as accepted by `--precision`.
pub const PRECISION: &str = if cfg!(feature = "single") { "single" } else { "double" };

pub mod prelude {
    pub use crate::element::{ElementKind, Jacobian, ShapeDerivatives};
    pub use crate::forces::{InversionPolicy, Parallelism};
    pub use crate::materials::{Material, MaterialModel};
    pub use crate::mesh::{generate_box, load_mesh, BoundaryConditions, Mesh};
    pub use crate::solver::{Engine, Model, Simulation};
    pub use crate::{Mat3, Real, Vec3, Vec6};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/jacobian.md")]
    mod jacobian {}
    #[doc = include_str!("../../../book/src/invariants.md")]
    mod invariants {}
    #[doc = include_str!("../../../book/src/tensors.md")]
    mod tensors {}
    #[doc = include_str!("../../../book/src/forces.md")]
    mod forces {}
    #[doc = include_str!("../../../book/src/tled.md")]
    mod tled {}
    #[doc = include_str!("../../../book/src/integration.md")]
    mod integration {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
