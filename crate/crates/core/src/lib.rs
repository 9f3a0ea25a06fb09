//! Fuchsian linear q-difference systems `X(qz) = A(z)X(z)` on the Riemann sphere:
//! special functions, canonical local solutions, Birkhoff connection matrices and
//! the confluence `q → 1` that recovers the monodromy of the limiting differential system.

pub mod cmatrix;
pub mod confluence;
pub mod connect;
pub mod error;
pub mod localsolve;
pub mod qcalc;
pub mod ratfun;
pub mod systems;

pub use cmatrix::CMatrix;
pub use error::{QError, Result};
pub use qcalc::QContext;
