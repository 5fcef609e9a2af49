//! Invariant tori of reversible, quasi-periodically forced vector fields.
//!
//! The crate covers the model layer (systems, involutions, reversibility
//! checks), Diophantine arithmetic on frequency vectors, a Fourier-Galerkin
//! Newton solver for invariant tori, Floquet reduction of the linearized flow
//! and an experiment harness tying these together.

pub mod diophantine;
pub mod error;
pub mod floquet;
pub mod fourier;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod ode;
pub mod torus;
pub mod trig;

pub use error::{Error, Result};
