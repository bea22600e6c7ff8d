//! Relative heat traces `trace(e^{-tP_V} − e^{-tP_0})` of Schrödinger operators
//! `P_V = −Δ + V` on flat tori.
//!
//! The trace is computed three ways: Fourier–Galerkin eigenvalues, the Duhamel
//! series, and the flat parametrix form of its second term. Small-time expansion
//! coefficients are fitted from the samples and compared with closed forms, and
//! the Sobolev regularity of `V` is read off from the remainders.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod duhamel;
pub mod error;
pub mod galerkin;
pub mod gaussian;
pub mod io;
pub mod potential;
pub mod quadrature;
pub mod regularity;
pub mod sample;
pub mod torus;

pub use error::{Error, Result};
pub use potential::FourierPotential;
pub use sample::{Method, TraceSample};
pub use torus::{Frequency, TorusSpec};
