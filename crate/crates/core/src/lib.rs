//! Quantum Fokker–Planck master equation in a truncated Fock basis.
//!
//! The crate builds the GKSL generator of the QFP model, evolves and solves
//! for steady states, maps states to phase space through the Wigner
//! transform, and checks the Lyapunov inequalities behind steady-state
//! existence.

pub mod dump;
pub mod dynamics;
pub mod error;
pub mod fock;
pub mod gksl;
pub mod linalg;
pub mod lyapunov;
pub mod quadrature;
pub mod steady;
pub mod wigner;

pub use dynamics::{evolve, evolve_with, trace_distance, DensityMatrix, EvolveOptions, Integrator, StateTag, Trajectory};
pub use error::{QfpError, Result};
pub use fock::{build_canonical, build_ladder, build_potential, CanonicalOps, FockOperator, PotentialSpec};
pub use gksl::{
    apply_dual, apply_generator, build_hamiltonian, build_lindblad_ops, build_superoperator, validate_params,
    Classification, Generator, LindbladCheck, QfpParams, Superoperator,
};
pub use lyapunov::{
    build_x, build_y, certify, check_drift, check_markov_bound, check_positivity_lemma, choose_certificate,
    LyapunovCertificate, LyapunovReport,
};
pub use steady::{
    gaussian_reference, purity_conditions, purity_identity_check, solve_steady, solve_steady_for, stationary_moments,
    GaussianSteady, PurityClass, SteadyReport, StationaryMoments,
};
pub use wigner::{
    characteristic_function, density_kernel, dictionary_moments, wfp_residual, wigner_transform, GridSpec,
    UniformAxis, WignerGrid,
};
