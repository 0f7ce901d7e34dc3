//! Truncated Fock-basis matrices for the canonical operators and potentials.
//!
//! All matrices act on the span of the first `n` number states e_0 … e_{n−1}.
//! Products of truncated matrices differ from the truncation of the exact
//! product near the top level; identities such as `[q, p] = i` therefore only
//! hold on the interior block, and every accuracy claim in this crate is made
//! on states with negligible weight near level `n − 1`.

use std::ops::{Add, Mul, Neg, Sub};

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QfpError, Result};
use crate::linalg::{self, CMatrix, I, ONE};

/// Dense complex `n × n` operator in the truncated number basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    entries: CMatrix,
}

impl FockOperator {
    pub fn new(entries: CMatrix) -> Result<Self> {
        let (rows, cols) = entries.dim();
        if rows == 0 || rows != cols {
            return Err(QfpError::InvalidDimension {
                dim: rows.max(cols),
                reason: "operator matrix must be square and non-empty",
            });
        }
        Ok(Self { entries })
    }

    pub(crate) fn from_matrix(entries: CMatrix) -> Self {
        debug_assert_eq!(entries.nrows(), entries.ncols());
        Self { entries }
    }

    pub fn from_real(entries: &Array2<f64>) -> Result<Self> {
        Self::new(entries.mapv(|x| Complex64::new(x, 0.0)))
    }

    pub fn zeros(n: usize) -> Self {
        Self::from_matrix(CMatrix::zeros((n, n)))
    }

    pub fn identity(n: usize) -> Self {
        Self::from_matrix(CMatrix::eye(n))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let d = Array1::from_iter(diag.iter().map(|&x| Complex64::new(x, 0.0)));
        Self::from_matrix(CMatrix::from_diag(&d))
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn adjoint(&self) -> Self {
        Self::from_matrix(linalg::dagger(&self.entries))
    }

    /// max |A − A†| entrywise.
    pub fn hermiticity_defect(&self) -> f64 {
        linalg::max_abs(&(&self.entries - &linalg::dagger(&self.entries)))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn dot(&self, other: &Self) -> Self {
        Self::from_matrix(self.entries.dot(&other.entries))
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.entries)
    }

    pub fn commutator(&self, other: &Self) -> Self {
        Self::from_matrix(linalg::commutator(&self.entries, &other.entries))
    }

    pub fn anticommutator(&self, other: &Self) -> Self {
        Self::from_matrix(linalg::anticommutator(&self.entries, &other.entries))
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self::from_matrix(self.entries.mapv(|z| z * c))
    }

    pub fn max_abs(&self) -> f64 {
        linalg::max_abs(&self.entries)
    }

    /// max |A_jk − B_jk| over `j, k < keep`.
    pub fn max_abs_diff_leading(&self, other: &Self, keep: usize) -> f64 {
        let keep = keep.min(self.dim()).min(other.dim());
        let mut m = 0.0_f64;
        for j in 0..keep {
            for k in 0..keep {
                m = m.max((self.entries[[j, k]] - other.entries[[j, k]]).norm());
            }
        }
        m
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues_hermitian(&self) -> Result<Vec<f64>> {
        linalg::eigvalsh(&linalg::hermitian_part(&self.entries))
    }

    /// ⟨u, A u⟩.
    pub fn expectation(&self, u: &Array1<Complex64>) -> Complex64 {
        let au = self.entries.dot(u);
        u.iter().zip(au.iter()).map(|(x, y)| x.conj() * y).sum()
    }
}

impl Add for &FockOperator {
    type Output = FockOperator;
    fn add(self, rhs: &FockOperator) -> FockOperator {
        FockOperator::from_matrix(&self.entries + &rhs.entries)
    }
}

impl Add for FockOperator {
    type Output = FockOperator;
    fn add(self, rhs: FockOperator) -> FockOperator {
        FockOperator::from_matrix(self.entries + rhs.entries)
    }
}

impl Sub for &FockOperator {
    type Output = FockOperator;
    fn sub(self, rhs: &FockOperator) -> FockOperator {
        FockOperator::from_matrix(&self.entries - &rhs.entries)
    }
}

impl Sub for FockOperator {
    type Output = FockOperator;
    fn sub(self, rhs: FockOperator) -> FockOperator {
        FockOperator::from_matrix(self.entries - rhs.entries)
    }
}

impl Neg for &FockOperator {
    type Output = FockOperator;
    fn neg(self) -> FockOperator {
        FockOperator::from_matrix(self.entries.mapv(|z| -z))
    }
}

impl Mul<f64> for &FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: f64) -> FockOperator {
        FockOperator::from_matrix(self.entries.mapv(|z| z * rhs))
    }
}

impl Mul<Complex64> for &FockOperator {
    type Output = FockOperator;
    fn mul(self, rhs: Complex64) -> FockOperator {
        self.scale(rhs)
    }
}

/// Sub-quadratic perturbation potentials V(x).
///
/// Every variant has a closed-form growth bound |V′(x)| ≤ g_V (1 + x²)^{α/2}
/// with α ∈ [0, 1), which the Lyapunov certificates need.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    None,
    /// λ cos(k x)
    Cosine { lambda: f64, k: f64 },
    /// λ √(1 + x²)
    SoftLinear { lambda: f64 },
    /// λ (1 + x²)^{β/2}, β < 2
    Power { lambda: f64, beta: f64 },
}

impl PotentialSpec {
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(QfpError::InvalidPotential(format!("{name} must be finite, got {v}")))
            }
        };
        match *self {
            PotentialSpec::None => Ok(()),
            PotentialSpec::Cosine { lambda, k } => {
                finite("lambda", lambda)?;
                finite("k", k)
            }
            PotentialSpec::SoftLinear { lambda } => finite("lambda", lambda),
            PotentialSpec::Power { lambda, beta } => {
                finite("lambda", lambda)?;
                finite("beta", beta)?;
                if beta >= 2.0 {
                    return Err(QfpError::InvalidPotential(format!(
                        "power potential needs beta < 2 (sub-quadratic), got {beta}"
                    )));
                }
                Ok(())
            }
        }
    }

    pub fn is_none(&self) -> bool {
        matches!(self, PotentialSpec::None)
    }

    /// g_V in |V′(x)| ≤ g_V (1 + x²)^{α/2}.
    pub fn growth_bound(&self) -> f64 {
        match *self {
            PotentialSpec::None => 0.0,
            PotentialSpec::Cosine { lambda, k } => (lambda * k).abs(),
            PotentialSpec::SoftLinear { lambda } => lambda.abs(),
            // |λβ x (1+x²)^{β/2−1}| ≤ |λβ| (1+x²)^{(β−1)/2}
            PotentialSpec::Power { lambda, beta } => (lambda * beta).abs(),
        }
    }

    /// α in |V′(x)| ≤ g_V (1 + x²)^{α/2}.
    pub fn exponent(&self) -> f64 {
        match *self {
            PotentialSpec::Power { beta, .. } => (beta - 1.0).max(0.0),
            _ => 0.0,
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::None => 0.0,
            PotentialSpec::Cosine { lambda, k } => lambda * (k * x).cos(),
            PotentialSpec::SoftLinear { lambda } => lambda * (1.0 + x * x).sqrt(),
            PotentialSpec::Power { lambda, beta } => lambda * (1.0 + x * x).powf(0.5 * beta),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            PotentialSpec::None => 0.0,
            PotentialSpec::Cosine { lambda, k } => -lambda * k * (k * x).sin(),
            PotentialSpec::SoftLinear { lambda } => lambda * x / (1.0 + x * x).sqrt(),
            PotentialSpec::Power { lambda, beta } => lambda * beta * x * (1.0 + x * x).powf(0.5 * beta - 1.0),
        }
    }
}

fn check_dim(n: usize) -> Result<()> {
    if n < 2 {
        return Err(QfpError::InvalidDimension {
            dim: n,
            reason: "at least two Fock levels are required",
        });
    }
    Ok(())
}

/// Annihilation and creation operators: a e_{j+1} = √(j+1) e_j.
pub fn build_ladder(n: usize) -> Result<(FockOperator, FockOperator)> {
    check_dim(n)?;
    let mut a = CMatrix::zeros((n, n));
    for j in 0..n - 1 {
        a[[j, j + 1]] = Complex64::new(((j + 1) as f64).sqrt(), 0.0);
    }
    let a_dag = a.t().to_owned();
    Ok((FockOperator::from_matrix(a), FockOperator::from_matrix(a_dag)))
}

/// Canonical operators of one truncation, all derived from the same ladder pair.
#[derive(Debug, Clone)]
pub struct CanonicalOps {
    pub a: FockOperator,
    pub a_dag: FockOperator,
    /// q = (a + a†)/√2
    pub q: FockOperator,
    /// p = i(a† − a)/√2, i.e. −i d/dx in position space
    pub p: FockOperator,
    /// N = a†a
    pub number: FockOperator,
}

impl CanonicalOps {
    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    pub fn q2(&self) -> FockOperator {
        self.q.dot(&self.q)
    }

    pub fn p2(&self) -> FockOperator {
        self.p.dot(&self.p)
    }

    /// pq + qp
    pub fn pq_sym(&self) -> FockOperator {
        self.p.anticommutator(&self.q)
    }
}

pub fn build_canonical(n: usize) -> Result<CanonicalOps> {
    let (a, a_dag) = build_ladder(n)?;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let q = &(&a + &a_dag) * s;
    let p = &(&a_dag - &a) * (I * s);
    let number = a_dag.dot(&a);
    Ok(CanonicalOps { a, a_dag, q, p, number })
}

/// f(q) by spectral calculus on the truncated position operator.
///
/// The eigenvalues of the truncated q are the Gauss–Hermite nodes, so the
/// matrix elements of f(q) are Gauss–Hermite quadratures of ∫ f ψ_j ψ_k.
pub fn spectral_function_of_q(n: usize, f: impl Fn(f64) -> f64) -> Result<FockOperator> {
    check_dim(n)?;
    let mut q = Array2::<f64>::zeros((n, n));
    for j in 0..n - 1 {
        let v = ((j + 1) as f64 / 2.0).sqrt();
        q[[j, j + 1]] = v;
        q[[j + 1, j]] = v;
    }
    let (nodes, vecs) = linalg::eigh_real(&q)?;
    let mut out = Array2::<f64>::zeros((n, n));
    for (i, &x) in nodes.iter().enumerate() {
        let fx = f(x);
        if fx == 0.0 {
            continue;
        }
        let col = vecs.column(i);
        for j in 0..n {
            let cj = fx * col[j];
            for k in 0..n {
                out[[j, k]] += cj * col[k];
            }
        }
    }
    // symmetrize away roundoff
    let sym = (&out + &out.t()) * 0.5;
    FockOperator::from_real(&sym)
}

/// V(q) for the given potential.
pub fn build_potential(spec: &PotentialSpec, n: usize) -> Result<FockOperator> {
    spec.validate()?;
    check_dim(n)?;
    if spec.is_none() {
        return Ok(FockOperator::zeros(n));
    }
    let spec = *spec;
    spectral_function_of_q(n, move |x| spec.value(x))
}

/// V′(q) for the given potential.
pub fn build_potential_derivative(spec: &PotentialSpec, n: usize) -> Result<FockOperator> {
    spec.validate()?;
    check_dim(n)?;
    if spec.is_none() {
        return Ok(FockOperator::zeros(n));
    }
    let spec = *spec;
    spectral_function_of_q(n, move |x| spec.derivative(x))
}

/// Unit vector e_j in C^n.
pub fn basis_vector(n: usize, j: usize) -> Array1<Complex64> {
    let mut v = Array1::zeros(n);
    v[j] = ONE;
    v
}
