//! Hermite functions and Gauss–Hermite quadrature.
//!
//! The Hermite functions ψ_k are the position-space eigenfunctions of the
//! number operator, so they map Fock-basis matrices to integral kernels and
//! back.

use ndarray::Array2;

use crate::error::Result;
use crate::linalg::eigh_real;

/// Values ψ_0(x), …, ψ_{n-1}(x) by the stable three-term recurrence
/// ψ_{k+1} = √(2/(k+1)) x ψ_k − √(k/(k+1)) ψ_{k−1}.
pub fn hermite_functions(n: usize, x: f64) -> Vec<f64> {
    let mut out = vec![0.0; n];
    fill_hermite(&mut out, x);
    out
}

fn fill_hermite(out: &mut [f64], x: f64) {
    let n = out.len();
    if n == 0 {
        return;
    }
    out[0] = std::f64::consts::PI.powf(-0.25) * (-0.5 * x * x).exp();
    if n > 1 {
        out[1] = std::f64::consts::SQRT_2 * x * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * x * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

/// Table with entry `[k, i] = ψ_k(xs[i])`.
pub fn hermite_table(n: usize, xs: &[f64]) -> Array2<f64> {
    let mut table = Array2::zeros((n, xs.len()));
    let mut column = vec![0.0; n];
    for (i, &x) in xs.iter().enumerate() {
        fill_hermite(&mut column, x);
        for k in 0..n {
            table[[k, i]] = column[k];
        }
    }
    table
}

/// Gauss–Hermite rule in "function" form: ∫ f(x) dx ≈ Σ w_i f(x_i).
///
/// Weights already carry the e^{x²} factor, so the rule integrates
/// ψ_j ψ_k exactly for j + k < 2·count.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Nodes are the eigenvalues of the Jacobi matrix with off-diagonal
    /// √(k/2); weights come from the Christoffel function 1/Σ_k ψ_k(x_i)².
    pub fn new(count: usize) -> Result<Self> {
        let mut jacobi = Array2::<f64>::zeros((count, count));
        for k in 1..count {
            let b = (k as f64 / 2.0).sqrt();
            jacobi[[k - 1, k]] = b;
            jacobi[[k, k - 1]] = b;
        }
        let (nodes, _) = eigh_real(&jacobi)?;
        let nodes: Vec<f64> = nodes.to_vec();
        let table = hermite_table(count, &nodes);
        let weights = (0..count)
            .map(|i| 1.0 / table.column(i).iter().map(|v| v * v).sum::<f64>())
            .collect();
        Ok(Self { nodes, weights })
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}
