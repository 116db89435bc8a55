//! Geometric phases of non-Markovian open two-level systems.
//!
//! Trajectories of the linear non-Markovian quantum-state-diffusion (QSD)
//! equation are driven by colored Gaussian noise with a Lorentzian bath
//! correlation function. Pancharatnam phases are extracted per trajectory
//! and over ensembles, and every result can be checked against closed-form
//! expressions and brute-force simulations of the full system–bath
//! Hamiltonian (see [`oracle`]).
//!
//! Two models are exactly solvable and supported end to end:
//!
//! - dissipative: `H = ωσ_z/2`, `L = λσ₋`, `Ō(t) = F(t)σ₋`
//! - dephasing:   `H = ωσ_z/2`, `L = λσ_z`, `Ō(t) = λ∫α(t,s)ds σ_z`
//!
//! Units have `ħ = 1`; times are measured on the scale set by `ω`.

pub mod ensemble;
pub mod error;
pub mod figures;
pub mod noise;
pub mod oracle;
pub mod phase;
pub mod qsd;
pub mod stats;
pub mod types;
pub mod validate;

pub use error::{Error, Result};
pub use types::{
    bloch_vector, initial_state, BathSpectrum, BlochPath, CouplingKind, DensityMatrix, PureState, SystemModel,
    TimeGrid, C64,
};
