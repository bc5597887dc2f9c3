//! Ising-Holstein chain simulator: a spin-1/2 Ising chain in transverse and
//! longitudinal fields whose sites each couple to a local dispersionless
//! phonon mode.
//!
//! The crate provides exact time evolution on truncated Fock spaces with a
//! matrix-free Krylov propagator, a coherent-state (Davydov) semiclassical
//! solver, domain-wall and magnetization observables for an initial string
//! of down spins, and a detector for the string-breaking time.

pub mod error;
pub mod hamiltonian;
pub mod observables;
pub mod oracle;
pub mod params;
pub mod propagator;
pub mod runner;
pub mod sbt;
pub mod semiclassical;
pub mod space;

pub use error::{Error, Result};
pub use hamiltonian::{HamiltonianOperator, LinearOperator, Variant};
pub use params::{Boundary, SystemParams};
pub use runner::{Backend, RunConfig};
pub use semiclassical::SemiclassicalState;
pub use space::{build_initial_state, HilbertSpace, PhononInit, Spin, StateVector};
