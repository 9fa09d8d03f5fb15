//! Numerical toolkit for steady transonic potential flow: gas relations,
//! hodograph phase-plane analysis, entropy pairs, and a viscous
//! regularization solver on Cartesian grids.

pub mod banded;
pub mod config;
pub mod elliptic;
pub mod diagnostics;
pub mod entropy;
pub mod error;
pub mod gas;
pub mod mesh;
pub mod ode;
pub mod phaseplane;
pub mod quadrature;
pub mod run;
pub mod solver;
pub mod verify;
pub mod table;

pub use error::{Error, Result};
pub use gas::GasModel;
