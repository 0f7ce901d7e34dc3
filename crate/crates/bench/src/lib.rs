//! Shared fixtures for the benchmarks.

use num_complex::Complex64;
use qfp_core::{DensityMatrix, GridSpec, PotentialSpec, QfpParams};

pub fn canonical() -> QfpParams {
    QfpParams::harmonic(1.0, 0.5, 1.0, 0.5, 0.0)
}

pub fn cosine() -> QfpParams {
    canonical().with_potential(PotentialSpec::Cosine { lambda: 0.5, k: 1.0 })
}

pub fn coherent(n: usize) -> DensityMatrix {
    DensityMatrix::coherent(n, Complex64::new(1.0, 0.5)).expect("coherent state")
}

pub fn grid() -> GridSpec {
    GridSpec::symmetric(9.0, 181, 9.0, 181).expect("grid")
}
