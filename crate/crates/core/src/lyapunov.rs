//! Lyapunov certificates for steady-state existence and Markovianity.
//!
//! With X = rp² + (pq+qp) + sq² and Y = c₆(p²+q²) − c₇ the checks here
//! evaluate the drift inequality ⟨u, ℒ(X)u⟩ ≤ −⟨u, Yu⟩ and the Markov bound
//! ⟨u, ℒ(X)u⟩ ≤ b⟨u, Xu⟩ on random vectors supported in the lower half of
//! the truncated Fock space, where the truncated dual generator agrees with
//! the untruncated one.

use std::path::Path;

use ndarray::{s, Array1};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dump::write_json;
use crate::error::{QfpError, Result};
use crate::fock::{build_canonical, build_potential_derivative, FockOperator};
use crate::gksl::{Generator, QfpParams};
use crate::linalg::{self, CMatrix};

/// Truncation used to compute the Markov constant b; the generalized
/// Rayleigh quotient is taken over the leading half of it.
pub const MARKOV_REFERENCE_DIM: usize = 128;

/// Fraction of Fock levels carrying test vectors.
pub const INTERIOR_FRACTION: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LyapunovCertificate {
    pub r: f64,
    pub s: f64,
    pub epsilon: f64,
    pub c5: f64,
    pub c6: f64,
    pub c7: f64,
    pub alpha: f64,
    pub g_v: f64,
    /// Markov constant, c₅ times the largest ⟨u,(2N+3)u⟩/⟨u,Xu⟩ on the
    /// leading `b_levels` Fock levels.
    pub b: f64,
    pub b_levels: usize,
}

impl LyapunovCertificate {
    pub fn rs(&self) -> f64 {
        self.r * self.s
    }
}

/// 2rD_pp + 4D_pq + 2sD_qq, the constant term of ℒ(X).
fn diffusion_constant(params: &QfpParams, r: f64, s: f64) -> f64 {
    2.0 * r * params.d_pp + 4.0 * params.d_pq + 2.0 * s * params.d_qq
}

pub fn choose_certificate(params: &QfpParams) -> Result<LyapunovCertificate> {
    crate::gksl::validate_params(params)?;
    let gamma = params.gamma;
    if gamma <= 0.0 {
        return Err(QfpError::Unsupported(format!(
            "Lyapunov certificate needs gamma > 0, got {gamma}"
        )));
    }
    let omega2 = params.omega * params.omega;
    let r = 1.0 / (2.0 * gamma) + 1.0;
    let s = 2.0 * gamma + omega2 * r;
    let g_v = params.potential.growth_bound();
    let alpha = params.potential.exponent();
    let g2 = g_v * g_v;

    let budget = 2.0 * (2.0 * gamma * r - 1.0).min(omega2);
    let epsilon = 0.5 * budget / (1.0 + alpha * g2);
    let c6 = budget - (1.0 + alpha * g2) * epsilon;

    let d = diffusion_constant(params, r, s);
    let r21 = r * r + 1.0;
    let c7 = d
        + g2 * (1.0 - alpha) * r21.powf(1.0 / (1.0 - alpha)) / epsilon.powf((1.0 + alpha) / (1.0 - alpha))
        + g2 * r21 / epsilon;
    let c5 = (r * r).max(2.0 * g2 + 1.0).max(d);

    let levels = MARKOV_REFERENCE_DIM / 2;
    let x = build_x_raw(r, s, MARKOV_REFERENCE_DIM)?;
    let ops = build_canonical(MARKOV_REFERENCE_DIM)?;
    let two_n_3 = &(&ops.number * 2.0) + &(&FockOperator::identity(MARKOV_REFERENCE_DIM) * 3.0);
    let (ratio, _) = generalized_max(&two_n_3, &x, levels)?;

    let cert = LyapunovCertificate {
        r,
        s,
        epsilon,
        c5,
        c6,
        c7,
        alpha,
        g_v,
        b: c5 * ratio,
        b_levels: levels,
    };
    let finite = [cert.r, cert.s, cert.epsilon, cert.c5, cert.c6, cert.c7, cert.b]
        .iter()
        .all(|v| v.is_finite());
    if !finite {
        return Err(QfpError::ParameterDomain(format!("certificate constants are not finite: {cert:?}")));
    }
    Ok(cert)
}

fn build_x_raw(r: f64, s: f64, n: usize) -> Result<FockOperator> {
    let ops = build_canonical(n)?;
    Ok(&(&(&ops.p2() * r) + &ops.pq_sym()) + &(&ops.q2() * s))
}

/// X = rp² + (pq+qp) + sq².
pub fn build_x(cert: &LyapunovCertificate, n: usize) -> Result<FockOperator> {
    build_x_raw(cert.r, cert.s, n)
}

/// Y = c₆(2N+1) − c₇, the untruncated p²+q² restricted to n levels.
pub fn build_y(cert: &LyapunovCertificate, n: usize) -> Result<FockOperator> {
    if n < 2 {
        return Err(QfpError::InvalidDimension {
            dim: n,
            reason: "at least two Fock levels are required",
        });
    }
    let diag: Vec<f64> = (0..n).map(|j| cert.c6 * (2 * j + 1) as f64 - cert.c7).collect();
    Ok(FockOperator::from_diagonal(&diag))
}

/// #{j < n : c₆(2j+1) − c₇ ≤ Λ}.
pub fn y_count_below(cert: &LyapunovCertificate, n: usize, lambda: f64) -> usize {
    (0..n)
        .filter(|&j| cert.c6 * (2 * j + 1) as f64 - cert.c7 <= lambda)
        .count()
}

/// Smallest eigenvalue of rp² + sign·(pq+qp) + sq² on n levels.
pub fn check_positivity_lemma(r: f64, s: f64, sign: f64, n: usize) -> Result<f64> {
    if !(r > 0.0 && s > 0.0) {
        return Err(QfpError::ParameterDomain(format!("need r, s > 0, got r = {r}, s = {s}")));
    }
    let ops = build_canonical(n)?;
    let op = &(&(&ops.p2() * r) + &(&ops.pq_sym() * sign.signum())) + &(&ops.q2() * s);
    Ok(op.eigenvalues_hermitian()?[0])
}

/// Largest λ with A u = λ X u on the leading `levels` levels (X > 0 there),
/// and the maximizing vector padded to the full dimension.
fn generalized_max(a: &FockOperator, x: &FockOperator, levels: usize) -> Result<(f64, Array1<Complex64>)> {
    let n = a.dim();
    let a_in = a.entries().slice(s![..levels, ..levels]).to_owned();
    let x_in = x.entries().slice(s![..levels, ..levels]).to_owned();
    let (xv, xu) = linalg::eigh(&x_in)?;
    if xv[0] <= 0.0 {
        return Err(QfpError::Linalg(format!("X is not positive on the interior: {:e}", xv[0])));
    }
    let scaled = CMatrix::from_shape_fn((levels, levels), |(j, k)| xu[[j, k]] / xv[k].sqrt());
    let w = scaled.dot(&linalg::dagger(&xu));
    let m = linalg::hermitian_part(&w.dot(&a_in).dot(&w));
    let (mv, mu) = linalg::eigh(&m)?;
    let top = mv[levels - 1];
    let v = w.dot(&mu.column(levels - 1));
    let mut full = Array1::zeros(n);
    full.slice_mut(s![..levels]).assign(&v);
    let norm = full.iter().map(|z: &Complex64| z.norm_sqr()).sum::<f64>().sqrt();
    Ok((top, full.mapv(|z| z / norm)))
}

pub fn interior_levels(n: usize) -> usize {
    (n as f64 * INTERIOR_FRACTION).floor() as usize
}

/// Unit vectors with standard complex Gaussian coordinates on the first
/// `interior_levels(n)` levels.
pub fn interior_vectors(n: usize, count: usize, seed: u64) -> Vec<Array1<Complex64>> {
    let m = interior_levels(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut u = Array1::<Complex64>::zeros(n);
            for j in 0..m {
                u[j] = Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            }
            let norm = u.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            u.mapv(|z| z / norm)
        })
        .collect()
}

fn check_interior(n: usize) -> Result<()> {
    if interior_levels(n) < 2 {
        return Err(QfpError::InvalidDimension {
            dim: n,
            reason: "Lyapunov checks need at least four Fock levels",
        });
    }
    Ok(())
}

fn max_form(op: &FockOperator, vectors: &[Array1<Complex64>]) -> f64 {
    vectors
        .par_iter()
        .map(|u| op.expectation(u).re)
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// ℒ(X) on n levels.
pub fn dual_of_x(params: &QfpParams, cert: &LyapunovCertificate, n: usize) -> Result<FockOperator> {
    let generator = Generator::new(params, n)?;
    generator.apply_dual(&build_x(cert, n)?)
}

/// max_u ⟨u, (ℒ(X) + Y)u⟩ over `n_vectors` random interior unit vectors.
pub fn check_drift(
    params: &QfpParams,
    cert: &LyapunovCertificate,
    n: usize,
    n_vectors: usize,
    seed: u64,
) -> Result<f64> {
    check_interior(n)?;
    let op = &dual_of_x(params, cert, n)? + &build_y(cert, n)?;
    Ok(max_form(&op, &interior_vectors(n, n_vectors, seed)))
}

/// max_u ⟨u, (ℒ(X) − bX)u⟩ over random interior unit vectors.
pub fn check_markov_bound(
    params: &QfpParams,
    cert: &LyapunovCertificate,
    n: usize,
    n_vectors: usize,
    seed: u64,
) -> Result<f64> {
    markov_violation(params, cert, cert.b, n, &interior_vectors(n, n_vectors, seed))
}

fn markov_violation(
    params: &QfpParams,
    cert: &LyapunovCertificate,
    b: f64,
    n: usize,
    vectors: &[Array1<Complex64>],
) -> Result<f64> {
    check_interior(n)?;
    if interior_levels(n) > cert.b_levels {
        return Err(QfpError::Unsupported(format!(
            "Markov constant was computed on {} levels but the interior has {}",
            cert.b_levels,
            interior_levels(n)
        )));
    }
    let op = &dual_of_x(params, cert, n)? - &(&build_x(cert, n)? * b);
    Ok(max_form(&op, vectors))
}

/// Smallest b with ⟨u, ℒ(X)u⟩ ≤ b⟨u, Xu⟩ on the interior, with its extremal vector.
pub fn sharp_markov_constant(
    params: &QfpParams,
    cert: &LyapunovCertificate,
    n: usize,
) -> Result<(f64, Array1<Complex64>)> {
    check_interior(n)?;
    generalized_max(&dual_of_x(params, cert, n)?, &build_x(cert, n)?, interior_levels(n))
}

/// Max interior deviation between ℒ(X) and its closed-form expansion
/// −2(2γr−1)p² − 2ω²q² + (s−2γ−ω²r)(pq+qp) − r(pV′+V′p) − 2qV′ + const.
pub fn expansion_residual(params: &QfpParams, cert: &LyapunovCertificate, n: usize) -> Result<f64> {
    check_interior(n)?;
    let ops = build_canonical(n)?;
    let vp = build_potential_derivative(&params.potential, n)?;
    let (r, s, gamma) = (cert.r, cert.s, params.gamma);
    let omega2 = params.omega * params.omega;
    let quadratic = &(&(&ops.p2() * (-2.0 * (2.0 * gamma * r - 1.0))) + &(&ops.q2() * (-2.0 * omega2)))
        + &(&ops.pq_sym() * (s - 2.0 * gamma - omega2 * r));
    let potential = &(&ops.p.anticommutator(&vp) * r) + &ops.q.anticommutator(&vp);
    let constant = &FockOperator::identity(n) * diffusion_constant(params, r, s);
    let expansion = &(&quadratic - &potential) + &constant;
    let lx = dual_of_x(params, cert, n)?;
    Ok(lx.max_abs_diff_leading(&expansion, interior_levels(n)))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovReport {
    pub seed: u64,
    pub n: usize,
    pub interior_fraction: f64,
    pub interior_levels: usize,
    pub n_vectors: usize,
    pub certificate: LyapunovCertificate,
    pub rs: f64,
    pub x_min_eigenvalue: f64,
    pub drift_max_violation: f64,
    pub markov_max_violation: f64,
    pub sharp_b: f64,
    /// ⟨v, (ℒ(X) − (b*/2)X)v⟩ at the extremal vector of the sharp constant b*.
    pub halved_sharp_violation: f64,
    /// Random-vector violation with the certificate's b halved.
    pub halved_b_violation: f64,
    pub expansion_residual: f64,
}

impl LyapunovReport {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }
}

/// Runs every certificate check on one parameter set.
pub fn certify(params: &QfpParams, n: usize, n_vectors: usize, seed: u64) -> Result<LyapunovReport> {
    let cert = choose_certificate(params)?;
    let vectors = interior_vectors(n, n_vectors, seed);
    let (sharp_b, extremal) = sharp_markov_constant(params, &cert, n)?;
    Ok(LyapunovReport {
        seed,
        n,
        interior_fraction: INTERIOR_FRACTION,
        interior_levels: interior_levels(n),
        n_vectors,
        certificate: cert,
        rs: cert.rs(),
        x_min_eigenvalue: build_x(&cert, n)?.eigenvalues_hermitian()?[0],
        drift_max_violation: check_drift(params, &cert, n, n_vectors, seed)?,
        markov_max_violation: markov_violation(params, &cert, cert.b, n, &vectors)?,
        sharp_b,
        halved_sharp_violation: markov_violation(params, &cert, 0.5 * sharp_b, n, &[extremal])?,
        halved_b_violation: markov_violation(params, &cert, 0.5 * cert.b, n, &vectors)?,
        expansion_residual: expansion_residual(params, &cert, n)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{basis_vector, PotentialSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn canonical() -> QfpParams {
        QfpParams::harmonic(1.0, 0.5, 1.0, 0.5, 0.0)
    }

    #[test]
    fn canonical_certificate() {
        let c = choose_certificate(&canonical()).unwrap();
        assert_abs_diff_eq!(c.r, 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.s, 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.epsilon, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(c.c6, 1.0, epsilon = 1e-15);
        // 2·2·1 + 0 + 2·3·0.5
        assert_abs_diff_eq!(c.c7, 7.0, epsilon = 1e-14);
        assert_abs_diff_eq!(c.c5, 7.0, epsilon = 1e-14);
        assert!(c.b > c.c5);
    }

    #[test]
    fn gamma_zero_is_unsupported() {
        let p = QfpParams::harmonic(1.0, 0.0, 1.0, 1.0, 0.0);
        assert!(matches!(choose_certificate(&p), Err(QfpError::Unsupported(_))));
    }

    #[test]
    fn small_alpha_limit_is_continuous() {
        let base = canonical();
        let lin = choose_certificate(&base.with_potential(PotentialSpec::Cosine { lambda: 0.5, k: 1.0 })).unwrap();
        // λβ = 0.5 keeps g_V fixed while α = β − 1 → 0
        let beta = 1.0 + 1e-9;
        let pow = choose_certificate(&base.with_potential(PotentialSpec::Power { lambda: 0.5 / beta, beta })).unwrap();
        assert_abs_diff_eq!(lin.c7, pow.c7, epsilon = 1e-6);
        let r21 = lin.r * lin.r + 1.0;
        let d = 2.0 * lin.r * 1.0 + 2.0 * lin.s * 0.5;
        assert_abs_diff_eq!(lin.c7, d + 2.0 * 0.25 * r21 / lin.epsilon, epsilon = 1e-12);
    }

    #[test]
    fn x_positive_and_boundary_square() {
        let c = choose_certificate(&canonical()).unwrap();
        assert!(build_x(&c, 60).unwrap().eigenvalues_hermitian().unwrap()[0] > 0.0);
        assert!(check_positivity_lemma(1.0, 1.0, -1.0, 60).unwrap() >= -1e-8);
    }

    #[test]
    fn positivity_lemma_examples() {
        let minus = check_positivity_lemma(2.0, 2.0, -1.0, 60).unwrap();
        let plus = check_positivity_lemma(2.0, 2.0, 1.0, 60).unwrap();
        assert!(minus > 0.0);
        assert_abs_diff_eq!(minus, plus, epsilon = 1e-10);
        assert!(check_positivity_lemma(2.0, 0.4, -1.0, 60).unwrap() < 0.0);
        assert!(check_positivity_lemma(0.0, 1.0, 1.0, 10).is_err());
    }

    #[test]
    fn y_spectrum_and_counts() {
        let mut c = choose_certificate(&canonical()).unwrap();
        c.c6 = 1.0;
        c.c7 = 5.0;
        let ev = build_y(&c, 20).unwrap().eigenvalues_hermitian().unwrap();
        for (j, v) in ev.iter().enumerate() {
            assert_abs_diff_eq!(*v, (2 * j + 1) as f64 - 5.0, epsilon = 1e-14);
        }
        assert!(ev[0] >= -c.c7 + 1.0 - 1e-14);
        for lambda in [-4.0, 0.0, 3.5, 30.0] {
            let direct = ev.iter().filter(|&&v| v <= lambda).count();
            assert_eq!(y_count_below(&c, 20, lambda), direct);
        }
    }

    // ℒ(p²) = −4γp² − ω²(pq+qp) + 2D_pp, ℒ(q²) = (pq+qp) + 2D_qq,
    // ℒ(pq+qp) = 2(p² − ω²q²) − 2γ(pq+qp) + 4D_pq; at e₀, ⟨p²⟩ = ⟨q²⟩ = ½ and ⟨pq+qp⟩ = 0.
    fn ground_state_dual_x(p: &QfpParams, c: &LyapunovCertificate) -> f64 {
        let w2 = p.omega * p.omega;
        let lp2 = -4.0 * p.gamma * 0.5 + 2.0 * p.d_pp;
        let lq2 = 2.0 * p.d_qq;
        let lpq = 2.0 * (0.5 - w2 * 0.5) + 4.0 * p.d_pq;
        c.r * lp2 + lpq + c.s * lq2
    }

    #[test]
    fn ground_state_drift_by_hand() {
        let p = canonical();
        let c = choose_certificate(&p).unwrap();
        let e0 = basis_vector(40, 0);
        let lx = dual_of_x(&p, &c, 40).unwrap();
        let hand = ground_state_dual_x(&p, &c);
        assert_abs_diff_eq!(hand, 5.0, epsilon = 1e-14);
        assert_abs_diff_eq!(lx.expectation(&e0).re, hand, epsilon = 1e-10);
        let drift = hand + c.c6 - c.c7;
        assert_abs_diff_eq!(drift, -1.0, epsilon = 1e-14);
        let y = build_y(&c, 40).unwrap();
        assert_abs_diff_eq!((&lx + &y).expectation(&e0).re, drift, epsilon = 1e-10);
        // ⟨X⟩₀ = (r + s)/2
        let x0 = build_x(&c, 40).unwrap().expectation(&e0).re;
        assert_abs_diff_eq!(x0, 2.5, epsilon = 1e-12);
        assert!(hand - c.b * x0 < 0.0);
    }

    #[test]
    fn drift_and_markov_hold() {
        let base = canonical();
        for v in [
            PotentialSpec::None,
            PotentialSpec::Cosine { lambda: 0.5, k: 1.0 },
            PotentialSpec::SoftLinear { lambda: 0.3 },
        ] {
            let p = base.with_potential(v);
            let c = choose_certificate(&p).unwrap();
            assert!(check_drift(&p, &c, 60, 200, 7).unwrap() <= 1e-8, "{v:?}");
            assert!(check_markov_bound(&p, &c, 60, 200, 7).unwrap() <= 1e-8, "{v:?}");
        }
    }

    #[test]
    fn halved_sharp_constant_is_violated() {
        let p = canonical();
        let c = choose_certificate(&p).unwrap();
        let (b, v) = sharp_markov_constant(&p, &c, 60).unwrap();
        assert!(b > 0.0 && b <= c.b);
        let at = markov_violation(&p, &c, b, 60, &[v.clone()]).unwrap();
        assert_abs_diff_eq!(at, 0.0, epsilon = 1e-8);
        assert!(markov_violation(&p, &c, 0.5 * b, 60, &[v]).unwrap() > 0.0);
    }

    #[test]
    fn expansion_matches_dual() {
        let base = canonical();
        for v in [PotentialSpec::None, PotentialSpec::Cosine { lambda: 0.5, k: 1.0 }] {
            let p = base.with_potential(v);
            let c = choose_certificate(&p).unwrap();
            assert!(expansion_residual(&p, &c, 60).unwrap() <= 1e-8, "{v:?}");
        }
    }

    #[test]
    fn soft_linear_expansion_converges() {
        let p = canonical().with_potential(PotentialSpec::SoftLinear { lambda: 0.3 });
        let c = choose_certificate(&p).unwrap();
        let coarse = expansion_residual(&p, &c, 40).unwrap();
        let fine = expansion_residual(&p, &c, 90).unwrap();
        assert!(fine < 0.1 * coarse, "{coarse:e} {fine:e}");
    }

    #[test]
    fn markov_interior_guard() {
        let p = canonical();
        let c = choose_certificate(&p).unwrap();
        assert!(check_markov_bound(&p, &c, 140, 4, 1).is_err());
        assert!(check_drift(&p, &c, 3, 4, 1).is_err());
    }

    #[test]
    fn report_is_deterministic() {
        let p = canonical();
        let a = serde_json::to_string(&certify(&p, 30, 20, 11).unwrap()).unwrap();
        let b = serde_json::to_string(&certify(&p, 30, 20, 11).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn recipe_satisfies_invariants(omega in 0.2f64..3.0, gamma in 0.05f64..2.0, lambda in -1.0f64..1.0) {
            let d_pp = 1.0;
            let d_qq = (gamma * gamma / 4.0 + 0.1) / d_pp;
            let p = QfpParams::harmonic(omega, gamma, d_pp, d_qq, 0.0)
                .with_potential(PotentialSpec::Cosine { lambda, k: 1.0 });
            let c = choose_certificate(&p).unwrap();
            prop_assert!(c.r > 1.0 / (2.0 * gamma));
            prop_assert!(c.rs() > 1.0 + omega * omega / (4.0 * gamma * gamma));
            prop_assert!(c.c6 > 0.0);
            prop_assert!(c.epsilon > 0.0);
        }

        #[test]
        fn drift_holds_on_random_params(omega in 0.5f64..2.0, gamma in 0.2f64..1.5, seed in 0u64..1000) {
            let p = QfpParams::harmonic(omega, gamma, 1.0, gamma * gamma / 4.0 + 0.2, 0.1);
            let c = choose_certificate(&p).unwrap();
            prop_assert!(check_drift(&p, &c, 40, 20, seed).unwrap() <= 1e-8);
        }
    }
}
