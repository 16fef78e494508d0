//! Numerical laboratory for travelling fronts of reaction-diffusion
//! equations `∂ₜu − Δu = f(u)`.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowdown;
pub mod config;
pub mod error;
pub mod hamilton_jacobi;
pub mod io;
pub mod levelset;
pub mod nonlinearity;
pub mod numerics;
pub mod ode;
pub mod rd_solver;
pub mod verify;
pub mod wave1d;

pub use error::{Error, Result};
