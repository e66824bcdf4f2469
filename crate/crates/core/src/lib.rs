//! Laurent families of flat `SL(2,ℂ)` connections on discretized surfaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`surface_grid`]: grids, matrix-valued forms, derivatives, wedge, quadrature;
//! * [`lambda_families`]: Laurent series in λ of connection forms and gauges;
//! * [`harmonic_builders`]: flat families from conformal-factor / Hopf-differential data;
//! * [`transforms`]: kernel splittings, twisting, dual surfaces, line degrees;
//! * [`energy_residue`]: the energy functional and flat hyper-Kähler model quantities;
//! * [`lightcone_frames`]: parallel frames, holonomy, lightcone geometry and Willmore integrands.

pub mod energy_residue;
pub mod error;
pub mod harmonic_builders;
pub mod lambda_families;
pub mod lightcone_frames;
pub mod surface_grid;
pub mod transforms;

pub use error::{Error, Result};
pub use lambda_families::{GaugeFamily, Involution, LambdaFamily};
pub use surface_grid::{Domain, DomainKind, FormDegree, GridField, Mat2, Reduce, C64};
