//! Steady states: numerical null vectors of the superoperator, the closed-form
//! Gaussian state for V = 0 and its purity classification.

use std::io::Write;

use ndarray::{Array1, Array2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dynamics::{csv_err, DensityMatrix, StateTag};
use crate::error::{QfpError, Result};
use crate::gksl::{build_superoperator, devectorize, vectorize, validate_params, QfpParams, Superoperator, LINDBLAD_TOL};
use crate::linalg::{self, CMatrix, Lu, ONE, ZERO};
use crate::quadrature::{hermite_table, GaussHermite};

/// Largest truncation solved by a dense SVD in [`SteadyMethod::Auto`].
pub const SVD_MAX_DIM: usize = 48;
/// Singular values below this fraction of σ_max count towards the kernel.
pub const KERNEL_REL_TOL: f64 = 1e-10;
/// Minimum eigenvalue above this fraction of the largest one is "faithful".
pub const FAITHFUL_REL_TOL: f64 = 1e-12;
/// Steady states with an eigenvalue below this are rejected as unphysical.
pub const NEGATIVITY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SteadyMethod {
    /// SVD up to [`SVD_MAX_DIM`], inverse iteration above.
    Auto,
    Svd,
    InverseIteration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Faithfulness {
    NumericallyFaithful,
    NumericallyRankDeficient,
}

#[derive(Debug, Clone)]
pub struct SteadyReport {
    pub rho_ss: DensityMatrix,
    pub kernel_dim_estimate: usize,
    /// Second-smallest singular value of the superoperator.
    pub spectral_gap: f64,
    pub sigma_min: f64,
    /// Exact for the SVD path, a power-iteration estimate otherwise.
    pub sigma_max: f64,
    /// Smallest singular values found, ascending (all of them for the SVD
    /// path, three for inverse iteration).
    pub smallest_singular_values: Vec<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub purity: f64,
    pub faithfulness: Faithfulness,
    /// ‖M vec(ρ_ss)‖ / σ_max
    pub residual: f64,
    pub method: SteadyMethod,
}

/// Scalar part of a [`SteadyReport`] for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadySummary {
    pub n: usize,
    pub kernel_dim_estimate: usize,
    pub spectral_gap: f64,
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub smallest_singular_values: Vec<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
    pub purity: f64,
    pub faithfulness: Faithfulness,
    pub residual: f64,
    pub method: SteadyMethod,
    pub matrix_path: Option<String>,
}

impl SteadyReport {
    pub fn summary(&self, matrix_path: Option<String>) -> SteadySummary {
        SteadySummary {
            n: self.rho_ss.dim(),
            kernel_dim_estimate: self.kernel_dim_estimate,
            spectral_gap: self.spectral_gap,
            sigma_min: self.sigma_min,
            sigma_max: self.sigma_max,
            smallest_singular_values: self.smallest_singular_values.clone(),
            min_eigenvalue: self.min_eigenvalue,
            max_eigenvalue: self.max_eigenvalue,
            purity: self.purity,
            faithfulness: self.faithfulness,
            residual: self.residual,
            method: self.method,
            matrix_path,
        }
    }

    /// σ₂ / σ₁, infinite for an exactly singular superoperator.
    pub fn gap_ratio(&self) -> f64 {
        if self.sigma_min == 0.0 {
            f64::INFINITY
        } else {
            self.spectral_gap / self.sigma_min
        }
    }
}

pub fn solve_steady(superop: &Superoperator) -> Result<SteadyReport> {
    solve_steady_with(superop, SteadyMethod::Auto)
}

/// Builds the superoperator and solves for its steady state.
pub fn solve_steady_for(params: &QfpParams, n: usize) -> Result<SteadyReport> {
    solve_steady(&build_superoperator(params, n)?)
}

pub fn solve_steady_with(superop: &Superoperator, method: SteadyMethod) -> Result<SteadyReport> {
    let n = superop.dim();
    let m = superop.entries();
    let method = match method {
        SteadyMethod::Auto if n <= SVD_MAX_DIM => SteadyMethod::Svd,
        SteadyMethod::Auto => SteadyMethod::InverseIteration,
        other => other,
    };
    let (mut sigmas_asc, sigma_max, start) = match method {
        SteadyMethod::Svd => {
            let (sigmas, v) = linalg::svd_right(m)?;
            let last = v.ncols() - 1;
            let start = v.column(last).to_owned();
            let sigma_max = sigmas[0];
            (sigmas.into_iter().rev().collect::<Vec<_>>(), sigma_max, start)
        }
        _ => {
            let sigma_max = largest_singular_value(m, 100);
            (Vec::new(), sigma_max, vectorize(&CMatrix::eye(n)))
        }
    };
    let threshold = KERNEL_REL_TOL * sigma_max;

    // inverse iteration towards the eigenvalue-zero eigenvector
    let shift = 1e-9 * sigma_max;
    let mut shifted = m.clone();
    for k in 0..shifted.nrows() {
        shifted[[k, k]] -= Complex64::new(shift, 0.0);
    }
    let lu = Lu::new(&shifted);
    let mut x = normalized(&start);
    for _ in 0..3 {
        x = normalized(&lu.solve(&x));
    }

    if method == SteadyMethod::InverseIteration {
        sigmas_asc = smallest_singular_values(m, &lu, &x, 3, 30)?;
    }
    let sigma_min = sigmas_asc[0];
    if sigma_min > threshold {
        return Err(QfpError::NoKernel { sigma_min, threshold });
    }
    let kernel_dim_estimate = sigmas_asc.iter().take_while(|&&s| s < threshold).count();
    let spectral_gap = sigmas_asc.get(1).copied().unwrap_or(f64::NAN);

    let kernel = devectorize(&x.view(), n);
    let tr = linalg::trace(&kernel);
    if tr.norm() <= 1e-8 * linalg::frobenius(&kernel) {
        return Err(QfpError::DegenerateKernel { trace: tr.norm() });
    }
    let rho = DensityMatrix::corrected(&kernel.mapv(|z| z / tr), StateTag::custom("steady"));
    let eig = rho.eigenvalues()?;
    let (min_eigenvalue, max_eigenvalue) = (eig[0], eig[eig.len() - 1]);
    if min_eigenvalue < -NEGATIVITY_TOL {
        return Err(QfpError::InvalidState(format!(
            "steady state has eigenvalue {min_eigenvalue:e}; increase the truncation"
        )));
    }
    let residual = norm(&m.dot(&vectorize(rho.matrix()))) / sigma_max;
    let faithfulness = if min_eigenvalue > FAITHFUL_REL_TOL * max_eigenvalue {
        Faithfulness::NumericallyFaithful
    } else {
        Faithfulness::NumericallyRankDeficient
    };
    if sigmas_asc.len() > 8 {
        sigmas_asc.truncate(8);
    }
    Ok(SteadyReport {
        purity: rho.purity(),
        rho_ss: rho,
        kernel_dim_estimate,
        spectral_gap,
        sigma_min,
        sigma_max,
        smallest_singular_values: sigmas_asc,
        min_eigenvalue,
        max_eigenvalue,
        faithfulness,
        residual,
        method,
    })
}

fn norm(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn normalized(v: &Array1<Complex64>) -> Array1<Complex64> {
    let s = norm(v);
    v.mapv(|z| z / s)
}

/// Power iteration on M†M.
fn largest_singular_value(m: &CMatrix, iters: usize) -> f64 {
    let mut x = Array1::from_elem(m.ncols(), ONE);
    x = normalized(&x);
    let md = linalg::dagger(m);
    let mut sigma = 0.0;
    for _ in 0..iters {
        let y = md.dot(&m.dot(&x));
        let s = norm(&y);
        if s == 0.0 {
            return 0.0;
        }
        sigma = s.sqrt();
        x = y.mapv(|z| z / s);
    }
    sigma
}

/// Block inverse iteration on (M†M)⁻¹ in the complement of `kernel`, followed
/// by Rayleigh–Ritz with the unshifted M. Returns `block` values ascending.
fn smallest_singular_values(
    m: &CMatrix,
    lu: &Lu,
    kernel: &Array1<Complex64>,
    block: usize,
    iters: usize,
) -> Result<Vec<f64>> {
    let dim = m.nrows();
    let mut cols: Vec<Array1<Complex64>> = vec![kernel.clone()];
    for b in 1..block {
        // deterministic, generic starting vectors
        cols.push(Array1::from_shape_fn(dim, |k| {
            let t = (k * (2 * b + 1)) as f64 * 0.618_033_988_75;
            Complex64::new((t * 6.283).sin(), (t * 2.718).cos())
        }));
    }
    orthonormalize(&mut cols);
    for _ in 0..iters {
        // the null vector stays fixed; singular vectors of the shifted
        // matrix would miss it by O(shift)
        for c in cols.iter_mut().skip(1) {
            *c = lu.solve(&lu.solve_adjoint(c));
        }
        orthonormalize(&mut cols);
    }
    let y = CMatrix::from_shape_fn((dim, block), |(k, b)| cols[b][k]);
    let my = m.dot(&y);
    let mut s = linalg::singular_values(&my)?;
    s.reverse();
    Ok(s)
}

fn orthonormalize(cols: &mut [Array1<Complex64>]) {
    for j in 0..cols.len() {
        for _ in 0..2 {
            for i in 0..j {
                let proj: Complex64 = cols[i].iter().zip(cols[j].iter()).map(|(a, b)| a.conj() * b).sum();
                let ci = cols[i].clone();
                cols[j].scaled_add(-proj, &ci);
            }
        }
        cols[j] = normalized(&cols[j]);
    }
}

/// Parameters of the closed-form V = 0 steady state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSteady {
    pub omega: f64,
    pub gamma: f64,
    pub q11: f64,
    pub q12: f64,
    pub q22: f64,
    pub big_q: f64,
    /// Width constant of the pure state e^{−cx²}, only at a purity point.
    pub c: Option<Complex64>,
    /// tr ρ with the stated prefactor γω/(π√(γQ₂₂)); comes out as π^{−1/2}
    /// rather than 1, so projections are renormalized instead.
    pub stated_prefactor_trace: f64,
}

impl GaussianSteady {
    pub fn new(params: &QfpParams) -> Result<Self> {
        require_harmonic_friction(params)?;
        params.require_admissible()?;
        let (w, g) = (params.omega, params.gamma);
        let q11 = params.d_pp + w * w * params.d_qq;
        let q12 = 2.0 * w * g * params.d_qq;
        let q22 = q11 + 4.0 * g * (params.d_pq + g * params.d_qq);
        let big_q = q11 * q22 - q12 * q12;
        let c = match purity_conditions(params)? {
            PurityClass::PureSteady { .. } => Some(pure_width(w, g)),
            _ => None,
        };
        // ∫ρ(x,x)dx = √(π γ Q₂₂)/(γω) for the bare kernel
        let diagonal_mass = (std::f64::consts::PI * g * q22).sqrt() / (g * w);
        let stated_prefactor = g * w / (std::f64::consts::PI * (g * q22).sqrt());
        Ok(Self {
            omega: w,
            gamma: g,
            q11,
            q12,
            q22,
            big_q,
            c,
            stated_prefactor_trace: stated_prefactor * diagonal_mass,
        })
    }

    /// Kernel ρ(x, y) without the prefactor.
    pub fn kernel(&self, x: f64, y: f64) -> Complex64 {
        let (w, g) = (self.omega, self.gamma);
        let s = x + y;
        let d = x - y;
        let re = -(g * g * w * w * s * s + self.big_q * d * d) / (4.0 * g * self.q22);
        let phase = -w * (self.q12 / self.q22) * (x * x - y * y) / 2.0;
        Complex64::from_polar(re.exp(), phase)
    }

    /// CSV with header `x,y,re,im` over the square grid `xs × xs`, kernel
    /// normalized so that its diagonal integrates to one.
    pub fn write_kernel_csv<W: Write>(&self, out: W, xs: &[f64]) -> Result<()> {
        // ∫ρ(x,x)dx = √(π γ Q₂₂)/(γω)
        let norm = (self.gamma * self.omega) / (std::f64::consts::PI * self.gamma * self.q22).sqrt();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "y", "re", "im"]).map_err(csv_err)?;
        for &x in xs {
            for &y in xs {
                let k = self.kernel(x, y) * norm;
                w.write_record([x.to_string(), y.to_string(), format!("{:e}", k.re), format!("{:e}", k.im)])
                    .map_err(csv_err)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn require_harmonic_friction(params: &QfpParams) -> Result<()> {
    if !params.potential.is_none() {
        return Err(QfpError::Unsupported(
            "the closed-form steady state exists only without a potential".into(),
        ));
    }
    if !(params.gamma > 0.0) {
        return Err(QfpError::Unsupported("the closed-form steady state needs gamma > 0".into()));
    }
    Ok(())
}

/// Stationary second moments of the V = 0 model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryMoments {
    /// ⟨q²⟩
    pub q2: f64,
    /// ⟨p²⟩
    pub p2: f64,
    /// ⟨pq + qp⟩
    pub pq_sym: f64,
}

/// Fixed point of the closed moment equations ℒ(q²), ℒ(p²), ℒ(pq+qp).
pub fn stationary_moments(params: &QfpParams) -> Result<StationaryMoments> {
    require_harmonic_friction(params)?;
    let (w, g) = (params.omega, params.gamma);
    let pq_sym = -2.0 * params.d_qq;
    let p2 = (params.d_pp + w * w * params.d_qq) / (2.0 * g);
    let q2 = (p2 + 2.0 * g * params.d_qq + 2.0 * params.d_pq) / (w * w);
    Ok(StationaryMoments { q2, p2, pq_sym })
}

/// c = ½(√(ω² − γ²) + iγ)
pub fn pure_width(omega: f64, gamma: f64) -> Complex64 {
    Complex64::new(0.5 * (omega * omega - gamma * gamma).sqrt(), 0.5 * gamma)
}

/// Quadrature nodes used by [`gaussian_reference`] for truncation `n`.
pub fn default_quadrature_nodes(n: usize) -> usize {
    4 * n
}

/// Closed-form steady state projected onto the first `n` Fock levels and
/// renormalized to unit trace.
pub fn gaussian_reference(params: &QfpParams, n: usize) -> Result<(GaussianSteady, DensityMatrix)> {
    gaussian_reference_with(params, n, default_quadrature_nodes(n))
}

pub fn gaussian_reference_with(params: &QfpParams, n: usize, nodes: usize) -> Result<(GaussianSteady, DensityMatrix)> {
    let g = GaussianSteady::new(params)?;
    if n < 2 || nodes < 4 * n {
        return Err(QfpError::InvalidDimension {
            dim: nodes,
            reason: "need n >= 2 and at least 4n quadrature nodes",
        });
    }
    let kernel = project_kernel(n, nodes, |x, y| g.kernel(x, y))?;
    let rho = DensityMatrix::from_unnormalized(&kernel, StateTag::custom("gaussian_reference"))?;
    Ok((g, rho))
}

/// ρ_jk = ∫∫ ψ_j(x) K(x, y) ψ_k(y) dx dy by a tensor Gauss–Hermite rule.
pub fn project_kernel(n: usize, nodes: usize, k: impl Fn(f64, f64) -> Complex64) -> Result<CMatrix> {
    let rule = GaussHermite::new(nodes)?;
    let psi = hermite_table(n, &rule.nodes);
    let a = Array2::from_shape_fn((n, nodes), |(j, i)| Complex64::new(psi[[j, i]] * rule.weights[i], 0.0));
    let kmat = CMatrix::from_shape_fn((nodes, nodes), |(i, l)| k(rule.nodes[i], rule.nodes[l]));
    Ok(a.dot(&kmat).dot(&a.t()))
}

/// Fock coefficients of ψ(x) = e^{−cx²}, normalized.
pub fn pure_gaussian_state(n: usize, c: Complex64) -> Result<Array1<Complex64>> {
    if !(c.re > 0.0) {
        return Err(QfpError::InvalidState(format!("Re c must be positive, got {c}")));
    }
    let nodes = default_quadrature_nodes(n).max(64);
    let rule = GaussHermite::new(nodes)?;
    let psi = hermite_table(n, &rule.nodes);
    let mut u = Array1::from_elem(n, ZERO);
    for (i, &x) in rule.nodes.iter().enumerate() {
        let f = (-c * x * x).exp() * rule.weights[i];
        for j in 0..n {
            u[j] += f * psi[[j, i]];
        }
    }
    Ok(normalized(&u))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case")]
pub enum PurityClass {
    /// Pure steady state; carries the forced D_qq = γ/(2√(ω² − γ²)).
    PureSteady { d_qq_forced: f64 },
    MixedSteady,
    NoPurePossible { reason: String },
}

/// Whether the V = 0 steady state is pure, from the three conditions
/// Δ = 0, D_pq = −γD_qq, D_pp = ω²D_qq together with γ < ω.
pub fn purity_conditions(params: &QfpParams) -> Result<PurityClass> {
    require_harmonic_friction(params)?;
    let check = validate_params(params)?;
    let (w, g) = (params.omega, params.gamma);
    if g == w {
        return Ok(PurityClass::NoPurePossible {
            reason: "gamma = omega: Q - gamma^2 omega^2 is a quadratic in omega with no real zero".into(),
        });
    }
    if g > w {
        return Ok(PurityClass::NoPurePossible {
            reason: "gamma > omega: Q - gamma^2 omega^2 >= gamma^2 (gamma^2 - omega^2) > 0".into(),
        });
    }
    let tol = LINDBLAD_TOL;
    let pure = check.delta.abs() <= tol
        && (params.d_pq + g * params.d_qq).abs() <= tol
        && (params.d_pp - w * w * params.d_qq).abs() <= tol;
    Ok(if pure {
        PurityClass::PureSteady {
            d_qq_forced: g / (2.0 * (w * w - g * g).sqrt()),
        }
    } else {
        PurityClass::MixedSteady
    })
}

/// Parameters of the pure steady state for given ω > γ > 0.
pub fn purity_point(omega: f64, gamma: f64) -> QfpParams {
    let d_qq = gamma / (2.0 * (omega * omega - gamma * gamma).sqrt());
    QfpParams::harmonic(omega, gamma, omega * omega * d_qq, d_qq, -gamma * d_qq)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PurityIdentity {
    /// Q − γ²ω²
    pub lhs: f64,
    /// (1 − γ²/ω²)(D_pp − D_qqω²)² + (γ²/ω²)(D_pp + 2D_pqω²/γ + D_qqω²)² + 4ω²Δ
    pub first_form: f64,
    /// (D_pp + 2D_pqγ + D_qqω²)² + 4γ²Δ + γ²(γ² − ω²)
    pub second_form: f64,
    /// Largest of the two discrepancies, relative to max(1, |lhs|).
    pub residual: f64,
}

/// Evaluates both decompositions of Q − γ²ω² independently of the Q's.
pub fn purity_identity_check(params: &QfpParams) -> Result<PurityIdentity> {
    require_harmonic_friction(params)?;
    let g = GaussianSteady::new(params)?;
    let (w, gm) = (params.omega, params.gamma);
    let (dpp, dqq, dpq) = (params.d_pp, params.d_qq, params.d_pq);
    let delta = params.delta();
    let lhs = g.big_q - gm * gm * w * w;
    let r = gm * gm / (w * w);
    let first_form = (1.0 - r) * (dpp - dqq * w * w).powi(2)
        + r * (dpp + 2.0 * dpq * w * w / gm + dqq * w * w).powi(2)
        + 4.0 * w * w * delta;
    let second_form = (dpp + 2.0 * dpq * gm + dqq * w * w).powi(2) + 4.0 * gm * gm * delta + gm * gm * (gm * gm - w * w);
    let scale = lhs.abs().max(1.0);
    let residual = (lhs - first_form).abs().max((lhs - second_form).abs()) / scale;
    Ok(PurityIdentity {
        lhs,
        first_form,
        second_form,
        residual,
    })
}
