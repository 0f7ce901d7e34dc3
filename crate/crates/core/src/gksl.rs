//! The quantum Fokker–Planck Lindbladian in GKSL form.
//!
//! The generator is assembled from the truncated Hamiltonian and Lindblad
//! operators ("truncate, then build"), so for every `n` it is an honest
//! finite-dimensional GKSL generator: exactly trace-annihilating and
//! Hermiticity-preserving. It agrees with the truncation of the infinite
//! generator away from the top Fock levels.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::DensityMatrix;
use crate::error::{QfpError, Result};
use crate::fock::{build_canonical, build_potential, CanonicalOps, FockOperator, PotentialSpec};
use crate::linalg::{self, CMatrix, I, ZERO};

/// Tolerance on Δ used to classify parameter sets.
pub const LINDBLAD_TOL: f64 = 1e-12;

/// Largest truncation for which a dense superoperator is built.
pub const MAX_SUPEROPERATOR_DIM: usize = 128;

/// Physical parameters of the QFP model (ħ = m = 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QfpParams {
    /// confinement frequency ω
    pub omega: f64,
    /// friction γ
    pub gamma: f64,
    pub d_pp: f64,
    pub d_qq: f64,
    pub d_pq: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Classification {
    StrictLindblad,
    LimitingCase,
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LindbladCheck {
    pub delta: f64,
    pub classification: Classification,
}

impl QfpParams {
    pub fn harmonic(omega: f64, gamma: f64, d_pp: f64, d_qq: f64, d_pq: f64) -> Self {
        Self {
            omega,
            gamma,
            d_pp,
            d_qq,
            d_pq,
            potential: PotentialSpec::None,
        }
    }

    pub fn with_potential(mut self, potential: PotentialSpec) -> Self {
        self.potential = potential;
        self
    }

    /// Δ = D_pp D_qq − D_pq² − γ²/4
    pub fn delta(&self) -> f64 {
        self.d_pp * self.d_qq - self.d_pq * self.d_pq - 0.25 * self.gamma * self.gamma
    }

    pub fn classification(&self) -> Classification {
        classify(self.delta())
    }

    /// Returns the classification, refusing parameter sets that violate the
    /// Lindblad condition.
    pub fn require_admissible(&self) -> Result<LindbladCheck> {
        let check = validate_params(self)?;
        if check.classification == Classification::Invalid {
            return Err(QfpError::InvalidLindblad { delta: check.delta });
        }
        Ok(check)
    }
}

fn classify(delta: f64) -> Classification {
    if delta > LINDBLAD_TOL {
        Classification::StrictLindblad
    } else if delta >= -LINDBLAD_TOL {
        Classification::LimitingCase
    } else {
        Classification::Invalid
    }
}

/// Domain checks plus Δ and its classification.
pub fn validate_params(params: &QfpParams) -> Result<LindbladCheck> {
    let fields = [
        ("omega", params.omega),
        ("gamma", params.gamma),
        ("d_pp", params.d_pp),
        ("d_qq", params.d_qq),
        ("d_pq", params.d_pq),
    ];
    for (name, v) in fields {
        if !v.is_finite() {
            return Err(QfpError::ParameterDomain(format!("{name} must be finite, got {v}")));
        }
    }
    if params.omega <= 0.0 {
        return Err(QfpError::ParameterDomain(format!("omega must be positive, got {}", params.omega)));
    }
    if params.gamma < 0.0 {
        return Err(QfpError::ParameterDomain(format!(
            "gamma must be nonnegative, got {}",
            params.gamma
        )));
    }
    // L1 and L2 divide by sqrt(2 D_pp)
    if params.d_pp <= 0.0 {
        return Err(QfpError::ParameterDomain(format!("d_pp must be positive, got {}", params.d_pp)));
    }
    if params.d_qq < 0.0 {
        return Err(QfpError::ParameterDomain(format!(
            "d_qq must be nonnegative, got {}",
            params.d_qq
        )));
    }
    params.potential.validate()?;
    let delta = params.delta();
    Ok(LindbladCheck {
        delta,
        classification: classify(delta),
    })
}

/// H = ½(p² + ω²q² + γ(pq + qp)) + V(q)
pub fn build_hamiltonian(params: &QfpParams, n: usize) -> Result<FockOperator> {
    let ops = build_canonical(n)?;
    hamiltonian_from(params, &ops)
}

fn hamiltonian_from(params: &QfpParams, ops: &CanonicalOps) -> Result<FockOperator> {
    let w2 = params.omega * params.omega;
    let kinetic = &(&ops.p2() + &(&ops.q2() * w2)) + &(&ops.pq_sym() * params.gamma);
    let v = build_potential(&params.potential, ops.dim())?;
    Ok(&(&kinetic * 0.5) + &v)
}

/// Coefficient of p in L₂, 2√Δ/√(2D_pp); continuous in Δ → 0⁺.
pub fn l2_coefficient(params: &QfpParams) -> f64 {
    2.0 * params.delta().max(0.0).sqrt() / (2.0 * params.d_pp).sqrt()
}

/// L₁ = ((−2D_pq + iγ)/√(2D_pp)) p + √(2D_pp) q and, when Δ > 0,
/// L₂ = (2√Δ/√(2D_pp)) p.
pub fn build_lindblad_ops(params: &QfpParams, n: usize) -> Result<Vec<FockOperator>> {
    let ops = build_canonical(n)?;
    lindblad_from(params, &ops)
}

fn lindblad_from(params: &QfpParams, ops: &CanonicalOps) -> Result<Vec<FockOperator>> {
    let check = params.require_admissible()?;
    let root = (2.0 * params.d_pp).sqrt();
    let p_coeff = Complex64::new(-2.0 * params.d_pq, params.gamma) / root;
    let l1 = &(&ops.p * p_coeff) + &(&ops.q * root);
    let mut out = vec![l1];
    if check.classification == Classification::StrictLindblad {
        out.push(&ops.p * l2_coefficient(params));
    }
    Ok(out)
}

/// The QFP generator for one truncation, with its building blocks cached.
#[derive(Debug, Clone)]
pub struct Generator {
    params: QfpParams,
    check: LindbladCheck,
    hamiltonian: FockOperator,
    lindblad: Vec<FockOperator>,
    lindblad_dag: Vec<FockOperator>,
    // G = −½ Σ L†L − iH
    g: CMatrix,
    g_dag: CMatrix,
}

impl Generator {
    pub fn new(params: &QfpParams, n: usize) -> Result<Self> {
        let check = params.require_admissible()?;
        let ops = build_canonical(n)?;
        let hamiltonian = hamiltonian_from(params, &ops)?;
        let lindblad = lindblad_from(params, &ops)?;
        let lindblad_dag: Vec<_> = lindblad.iter().map(FockOperator::adjoint).collect();
        let mut g = hamiltonian.entries().mapv(|z| -I * z);
        for (l, ld) in lindblad.iter().zip(&lindblad_dag) {
            g = g - ld.entries().dot(l.entries()).mapv(|z| z * 0.5);
        }
        let g_dag = linalg::dagger(&g);
        Ok(Self {
            params: *params,
            check,
            hamiltonian,
            lindblad,
            lindblad_dag,
            g,
            g_dag,
        })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn params(&self) -> &QfpParams {
        &self.params
    }

    pub fn check(&self) -> LindbladCheck {
        self.check
    }

    pub fn hamiltonian(&self) -> &FockOperator {
        &self.hamiltonian
    }

    pub fn lindblad_ops(&self) -> &[FockOperator] {
        &self.lindblad
    }

    /// G = −½ Σ L†L − iH, the drift part of the generator.
    pub fn g_operator(&self) -> FockOperator {
        FockOperator::from_matrix(self.g.clone())
    }

    fn check_dim(&self, found: usize) -> Result<()> {
        if found != self.dim() {
            return Err(QfpError::DimensionMismatch {
                expected: self.dim(),
                found,
            });
        }
        Ok(())
    }

    /// ℒ_*(ρ) = Gρ + ρG† + Σ LρL†, on raw matrices.
    pub(crate) fn apply_raw(&self, rho: &CMatrix) -> CMatrix {
        let mut out = self.g.dot(rho) + rho.dot(&self.g_dag);
        for (l, ld) in self.lindblad.iter().zip(&self.lindblad_dag) {
            out = out + l.entries().dot(rho).dot(ld.entries());
        }
        out
    }

    /// ℒ_*(ρ) for any operator ρ of matching dimension.
    pub fn apply(&self, rho: &FockOperator) -> Result<FockOperator> {
        self.check_dim(rho.dim())?;
        Ok(FockOperator::from_matrix(self.apply_raw(rho.entries())))
    }

    /// Dual generator ℒ(A) = G†A + AG + Σ L†AL.
    pub fn apply_dual(&self, a: &FockOperator) -> Result<FockOperator> {
        self.check_dim(a.dim())?;
        let a = a.entries();
        let mut out = self.g_dag.dot(a) + a.dot(&self.g);
        for (l, ld) in self.lindblad.iter().zip(&self.lindblad_dag) {
            out = out + ld.entries().dot(a).dot(l.entries());
        }
        Ok(FockOperator::from_matrix(out))
    }

    /// Dense matrix of ℒ_* acting on column-major vec(ρ).
    pub fn superoperator(&self) -> Result<Superoperator> {
        let n = self.dim();
        if n > MAX_SUPEROPERATOR_DIM {
            return Err(QfpError::DimensionGuard {
                n,
                max: MAX_SUPEROPERATOR_DIM,
            });
        }
        let nn = n * n;
        let mut m = CMatrix::zeros((nn, nn));
        // vec(AXB) = (Bᵀ ⊗ A) vec(X), index(i, j) = i + j n
        for j in 0..n {
            for i in 0..n {
                let row = i + j * n;
                for k in 0..n {
                    // G ρ
                    m[[row, k + j * n]] += self.g[[i, k]];
                    // ρ G†
                    m[[row, i + k * n]] += self.g_dag[[k, j]];
                }
            }
        }
        for l in &self.lindblad {
            let l = l.entries();
            for j in 0..n {
                for lcol in 0..n {
                    let b = l[[j, lcol]].conj();
                    if b == ZERO {
                        continue;
                    }
                    for i in 0..n {
                        let row = i + j * n;
                        for k in 0..n {
                            let a = l[[i, k]];
                            if a != ZERO {
                                m[[row, k + lcol * n]] += a * b;
                            }
                        }
                    }
                }
            }
        }
        Ok(Superoperator { n, entries: m })
    }
}

/// ℒ_*(ρ) for a density matrix.
pub fn apply_generator(params: &QfpParams, rho: &DensityMatrix) -> Result<FockOperator> {
    Generator::new(params, rho.dim())?.apply(rho.op())
}

/// ℒ(A), the Heisenberg-picture generator.
pub fn apply_dual(params: &QfpParams, a: &FockOperator) -> Result<FockOperator> {
    Generator::new(params, a.dim())?.apply_dual(a)
}

pub fn build_superoperator(params: &QfpParams, n: usize) -> Result<Superoperator> {
    if n > MAX_SUPEROPERATOR_DIM {
        return Err(QfpError::DimensionGuard {
            n,
            max: MAX_SUPEROPERATOR_DIM,
        });
    }
    Generator::new(params, n)?.superoperator()
}

/// Column-major vec(A).
pub fn vectorize(a: &CMatrix) -> ndarray::Array1<Complex64> {
    let n = a.nrows();
    ndarray::Array1::from_shape_fn(n * a.ncols(), |idx| a[[idx % n, idx / n]])
}

/// Inverse of [`vectorize`] for square matrices.
pub fn devectorize(v: &ndarray::ArrayView1<Complex64>, n: usize) -> CMatrix {
    assert_eq!(v.len(), n * n, "vector length must be n²");
    CMatrix::from_shape_fn((n, n), |(i, j)| v[i + j * n])
}

/// n² × n² matrix of ℒ_* on column-major vectorized operators.
#[derive(Debug, Clone)]
pub struct Superoperator {
    n: usize,
    entries: CMatrix,
}

impl Superoperator {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn apply(&self, rho: &FockOperator) -> Result<FockOperator> {
        if rho.dim() != self.n {
            return Err(QfpError::DimensionMismatch {
                expected: self.n,
                found: rho.dim(),
            });
        }
        let v = self.entries.dot(&vectorize(rho.entries()));
        Ok(FockOperator::from_matrix(devectorize(&v.view(), self.n)))
    }

    /// max_k |(vec(𝟙)† M)_k|.
    pub fn trace_annihilation_defect(&self) -> f64 {
        let n = self.n;
        let mut worst = 0.0_f64;
        for col in 0..n * n {
            let s: Complex64 = (0..n).map(|i| self.entries[[i + i * n, col]]).sum();
            worst = worst.max(s.norm());
        }
        worst
    }
}

/// Random harmonic parameter sets with Δ ≥ 0, reproducible from `seed`.
///
/// ω ∈ [0.3, 3), γ ∈ [0.05, 2), D_pp ∈ [0.1, 3), D_pq ∈ [−1, 1), and D_qq
/// puts Δ uniformly in [0, 1/D_pp).
pub fn sample_admissible(count: usize, seed: u64) -> Vec<QfpParams> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let omega = rng.gen_range(0.3..3.0);
            let gamma = rng.gen_range(0.05..2.0);
            let d_pp = rng.gen_range(0.1..3.0);
            let d_pq = rng.gen_range(-1.0..1.0);
            let slack: f64 = rng.gen_range(0.0..1.0);
            let d_qq = (d_pq * d_pq + gamma * gamma / 4.0 + slack) / d_pp;
            QfpParams::harmonic(omega, gamma, d_pp, d_qq, d_pq)
        })
        .collect()
}
