//! Independent ground truth: closed-form phases of the solvable models and
//! brute-force simulations of the full system–bath Hamiltonian.

pub mod analytic;
pub mod bath;
pub mod quadrature;

pub use analytic::{
    dephasing_large_gamma, dephasing_markov_value, dephasing_phase_analytic, dephasing_phase_at_period,
    dephasing_shift, dissipative_density_analytic, dissipative_markov_value, dissipative_phases_analytic,
    dissipative_strong_memory_value, g_integral,
};
pub use bath::{
    brute_force_dephasing_coherence, brute_force_dissipative_density, decoherence_exponent,
    discretized_dephasing_coherence, DiscretizedBath,
};
