//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on failure.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use num_complex::Complex64;

use qfp_core::fock::PotentialSpec;
use qfp_core::gksl::sample_admissible;
use qfp_core::lyapunov::{self, check_positivity_lemma};
use qfp_core::steady::{pure_gaussian_state, pure_width, purity_point, solve_steady_for};
use qfp_core::wigner::wigner_from_characteristic;
use qfp_core::{
    certify, dictionary_moments, evolve, gaussian_reference, purity_conditions, purity_identity_check,
    trace_distance, wfp_residual, wigner_transform, Classification, DensityMatrix, GridSpec, PurityClass,
    QfpParams, Result,
};

struct Outcome {
    passed: bool,
    detail: String,
}

impl Outcome {
    fn new(passed: bool, detail: impl Into<String>) -> Self {
        Self {
            passed,
            detail: detail.into(),
        }
    }
}

fn canonical() -> QfpParams {
    QfpParams::harmonic(1.0, 0.5, 1.0, 0.5, 0.0)
}

/// Admissible parameter sets with Δ > 0.
fn strict_sets() -> Vec<(&'static str, QfpParams)> {
    vec![
        ("canonical", canonical()),
        ("underdamped", QfpParams::harmonic(2.0, 0.3, 1.0, 0.2, 0.1)),
        ("overdamped", QfpParams::harmonic(1.0, 1.2, 1.0, 0.5, 0.1)),
        (
            "cosine",
            canonical().with_potential(PotentialSpec::Cosine { lambda: 0.5, k: 1.0 }),
        ),
    ]
}

fn initial_states(n: usize) -> Result<Vec<DensityMatrix>> {
    Ok(vec![
        DensityMatrix::fock(n, 2)?,
        DensityMatrix::coherent(n, Complex64::new(1.0, 0.5))?,
        DensityMatrix::random(n, 4, 17)?,
    ])
}

fn gaussian_steady_agreement() -> Result<Outcome> {
    let params = canonical();
    let start = Instant::now();
    let report = solve_steady_for(&params, 40)?;
    let seconds = start.elapsed().as_secs_f64();
    let (_, reference) = gaussian_reference(&params, 40)?;
    let d = trace_distance(&report.rho_ss, &reference)?;
    Ok(Outcome::new(
        d <= 1e-3 && seconds <= 60.0,
        format!("n=40 trace distance {d:.3e} (<= 1e-3), solve time {seconds:.1} s (<= 60 s)"),
    ))
}

fn purity_point_state() -> Result<Outcome> {
    let params = purity_point(1.0, 0.6);
    let forced = [(params.d_qq, 0.375), (params.d_pq, -0.225), (params.d_pp, 0.375)];
    let forced_ok = forced.iter().all(|(a, b)| (a - b).abs() <= 1e-14);
    let report = solve_steady_for(&params, 40)?;
    let c = pure_width(1.0, 0.6);
    let c_ok = (c - Complex64::new(0.4, 0.3)).norm() <= 1e-14;
    let fidelity = report.rho_ss.fidelity_with_pure(&pure_gaussian_state(40, c)?)?;
    Ok(Outcome::new(
        forced_ok && c_ok && report.purity >= 0.999 && fidelity >= 0.999,
        format!(
            "purity {:.8} (>= 0.999), fidelity with exp(-c x^2), c = {:.1}+{:.1}i: {fidelity:.8} (>= 0.999)",
            report.purity, c.re, c.im
        ),
    ))
}

fn no_pure_regimes() -> Result<Outcome> {
    let equal = purity_conditions(&QfpParams::harmonic(1.0, 1.0, 1.0, 0.5, 0.0))?;
    let over = purity_conditions(&QfpParams::harmonic(1.0, 1.5, 1.0, 1.0, 0.0))?;
    let classes_ok = matches!(equal, PurityClass::NoPurePossible { .. }) && matches!(over, PurityClass::NoPurePossible { .. });

    let mut worst = 0.0_f64;
    for p in sample_admissible(20, 3) {
        worst = worst.max(purity_identity_check(&p)?.residual);
    }
    Ok(Outcome::new(
        classes_ok && worst <= 1e-10,
        format!("gamma=omega and gamma>omega classified as no-pure: {classes_ok}; identity residual max {worst:.2e} over 20 sets (<= 1e-10)"),
    ))
}

fn markovianity() -> Result<Outcome> {
    let n = 24;
    let sets = [
        canonical(),
        purity_point(1.0, 0.6),
        canonical().with_potential(PotentialSpec::SoftLinear { lambda: 0.3 }),
    ];
    let grid: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
    let mut worst = 0.0_f64;
    for params in &sets {
        for rho in initial_states(n)? {
            worst = worst.max(evolve(params, &rho, &grid, 1e-9)?.max_trace_error());
        }
    }
    Ok(Outcome::new(
        worst <= 1e-8,
        format!("n={n}, t in [0,10], rtol 1e-9: max pre-correction trace drift {worst:.2e} (<= 1e-8) over 3x3 runs"),
    ))
}

fn convergence() -> Result<Outcome> {
    let n = 24;
    let params = canonical();
    let steady = solve_steady_for(&params, n)?.rho_ss;
    let grid: Vec<f64> = (0..=80).map(|k| 0.5 * k as f64).collect();
    let transient = 1.0;
    let slack = 1e-7;
    let mut finals = Vec::new();
    let mut monotone = true;
    for rho in initial_states(n)? {
        let traj = evolve(&params, &rho, &grid, 1e-9)?;
        let d = traj.distances_to(&steady)?;
        for k in 1..d.len() {
            if grid[k - 1] >= transient && d[k] > d[k - 1] + slack {
                monotone = false;
            }
        }
        finals.push(*d.last().unwrap());
    }
    let worst = finals.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome::new(
        worst < 1e-4 && monotone,
        format!(
            "n={n}, t in [0,40]: final trace distances {:?} (< 1e-4), monotone after t={transient} with slack {slack:e}: {monotone}",
            finals.iter().map(|d| format!("{d:.1e}")).collect::<Vec<_>>()
        ),
    ))
}

fn uniqueness_faithfulness() -> Result<Outcome> {
    let n = 24;
    let mut ok = true;
    let mut parts = Vec::new();
    for (name, params) in strict_sets() {
        if params.classification() != Classification::StrictLindblad {
            ok = false;
        }
        let r = solve_steady_for(&params, n)?;
        ok &= r.kernel_dim_estimate == 1 && r.min_eigenvalue > 0.0;
        parts.push(format!("{name}: dim {} min eig {:.1e}", r.kernel_dim_estimate, r.min_eigenvalue));
    }
    let pure = solve_steady_for(&purity_point(1.0, 0.6), 40)?;
    ok &= pure.min_eigenvalue <= 1e-6;
    parts.push(format!("purity point n=40 min eig {:.1e} (<= 1e-6)", pure.min_eigenvalue));
    Ok(Outcome::new(ok, parts.join("; ")))
}

fn dictionary_and_wigner() -> Result<Outcome> {
    let n = 40;
    let steady = gaussian_reference(&canonical(), n)?.1;
    let states = [
        ("thermal", DensityMatrix::thermal(n, 1.0, 1.0)?),
        ("coherent", DensityMatrix::coherent(n, Complex64::new(1.0, -0.5))?),
        ("fock1", DensityMatrix::fock(n, 1)?),
        ("gaussian", steady),
    ];
    let spec = GridSpec::symmetric(9.0, 181, 9.0, 181)?;
    let (mut mass, mut dict, mut pipe) = (0.0_f64, 0.0_f64, 0.0_f64);
    for (_, rho) in &states {
        let w = wigner_transform(rho, &spec)?;
        mass = mass.max((w.mass - 1.0).abs());
        dict = dict.max(dictionary_moments(rho, &w)?.max_residual);
        let a = wigner_from_characteristic(rho, 64, 10.0)?;
        let b = wigner_transform(rho, &GridSpec { x: a.x, v: a.v })?;
        pipe = pipe.max(a.interior_max_diff(&b)?);
    }
    let origin = wigner_transform(&DensityMatrix::fock(n, 1)?, &GridSpec::symmetric(8.0, 161, 8.0, 161)?)?.values[[80, 80]];
    let origin_err = (origin + 1.0 / PI).abs();
    Ok(Outcome::new(
        mass <= 1e-4 && dict <= 1e-4 && pipe <= 1e-4 && origin_err <= 1e-4,
        format!(
            "mass error {mass:.1e}, dictionary residual {dict:.1e}, pipeline gap {pipe:.1e} (all <= 1e-4); |1><1| at origin {origin:.10} (error {origin_err:.1e})"
        ),
    ))
}

fn wfp_cross_check() -> Result<Outcome> {
    let params = canonical();
    let rho = solve_steady_for(&params, 40)?.rho_ss;
    let half = 8.0;
    let steps = [0.4_f64, 0.2, 0.1, 0.05];
    let mut rel = Vec::new();
    for h in steps {
        let count = 2 * (half / h).round() as usize + 1;
        let w = wigner_transform(&rho, &GridSpec::symmetric(half, count, half, count)?)?;
        rel.push(wfp_residual(&w, &params)?.relative);
    }
    let at_default = rel[2];
    // Each halving must gain at least a factor 8 until the residual reaches the
    // floor set by the truncation, taken as ten times the smallest value seen.
    let floor = 10.0 * rel.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut refinements = 0;
    let mut order_ok = true;
    for k in 0..rel.len() - 1 {
        if rel[k] > floor {
            refinements += 1;
            order_ok &= rel[k] / rel[k + 1] >= 8.0;
        }
    }
    let ratios: Vec<String> = rel.windows(2).map(|w| format!("{:.1}", w[0] / w[1])).collect();
    Ok(Outcome::new(
        at_default <= 1e-3 && order_ok && refinements >= 1,
        format!(
            "relative residual at h=0.1: {at_default:.2e} (<= 1e-3); h = {steps:?} -> {:?}, ratios {ratios:?}",
            rel.iter().map(|r| format!("{r:.1e}")).collect::<Vec<_>>()
        ),
    ))
}

fn lyapunov_certificates() -> Result<Outcome> {
    let n = 60;
    let above = [
        (2.0, 2.0),
        (1.1, 1.0),
        (0.5, 2.5),
        (3.0, 0.4),
        (1.0, 1.01),
        (10.0, 0.2),
        (0.2, 10.0),
        (5.0, 5.0),
        (2.0, 3.0),
        (0.7, 1.5),
    ];
    let below = [(2.0, 0.4), (0.5, 1.0), (0.3, 0.3)];
    let mut pos_min = f64::INFINITY;
    let mut neg_max = f64::NEG_INFINITY;
    for (r, s) in above {
        for sign in [-1.0, 1.0] {
            pos_min = pos_min.min(check_positivity_lemma(r, s, sign, n)?);
        }
    }
    for (r, s) in below {
        neg_max = neg_max.max(check_positivity_lemma(r, s, -1.0, n)?);
    }

    let potentials = [
        ("none", PotentialSpec::None),
        ("cosine", PotentialSpec::Cosine { lambda: 0.5, k: 1.0 }),
        ("soft_linear", PotentialSpec::SoftLinear { lambda: 0.3 }),
    ];
    let (mut drift, mut markov, mut control) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::INFINITY);
    let mut expansion = Vec::new();
    for (name, v) in potentials {
        let rep = certify(&canonical().with_potential(v), n, 200, 2024)?;
        drift = drift.max(rep.drift_max_violation);
        markov = markov.max(rep.markov_max_violation);
        control = control.min(rep.halved_sharp_violation);
        expansion.push(format!("{name} {:.1e}", rep.expansion_residual));
    }
    let levels = lyapunov::interior_levels(n);
    Ok(Outcome::new(
        pos_min > 0.0 && neg_max < 0.0 && drift <= 1e-8 && markov <= 1e-8 && control > 0.0,
        format!(
            "positivity min over rs>1: {pos_min:.2e} (> 0), max over rs<1: {neg_max:.2e} (< 0); n={n}, 200 vectors on {levels} levels: drift {drift:.2e}, Markov {markov:.2e} (<= 1e-8); halved sharp b violation {control:.2e} (> 0); expansion residuals {}",
            expansion.join(", ")
        ),
    ))
}

fn zero_delta_evidence() -> Result<Outcome> {
    let n = 24;
    let base = QfpParams::harmonic(1.0, 0.5, 0.5, 0.125, 0.0);
    let mut parts = vec![format!("delta = {:.1e}", base.delta())];
    for (name, v) in [
        ("cosine", PotentialSpec::Cosine { lambda: 0.5, k: 1.0 }),
        ("soft_linear", PotentialSpec::SoftLinear { lambda: 0.3 }),
    ] {
        let r = solve_steady_for(&base.with_potential(v), n)?;
        parts.push(format!(
            "{name}: kernel dim {}, min eig {:.2e}, gap ratio {:.1e}",
            r.kernel_dim_estimate,
            r.min_eigenvalue,
            r.gap_ratio()
        ));
    }
    Ok(Outcome::new(base.classification() == Classification::LimitingCase, parts.join("; ")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("gaussian steady state", gaussian_steady_agreement),
        ("purity point", purity_point_state),
        ("no pure steady state", no_pure_regimes),
        ("trace preservation", markovianity),
        ("convergence", convergence),
        ("uniqueness and faithfulness", uniqueness_faithfulness),
        ("dictionary and wigner", dictionary_and_wigner),
        ("wigner fokker-planck residual", wfp_cross_check),
        ("lyapunov certificates", lyapunov_certificates),
        ("zero delta evidence", zero_delta_evidence),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check().unwrap_or_else(|e| Outcome::new(false, format!("error: {e}")));
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        if !outcome.passed {
            failures += 1;
        }
        println!(
            "{tag} {:>2} {name}: {} [{:.1} s]",
            k + 1,
            outcome.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
