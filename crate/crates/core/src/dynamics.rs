//! Density matrices and their time evolution under the QFP generator.

use std::io::Write;
use std::path::Path;

use ndarray::Array1;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dump::{write_json, MatrixDump, StatesDump};
use crate::error::{QfpError, Result};
use crate::fock::FockOperator;
use crate::gksl::{vectorize, devectorize, Generator, QfpParams};
use crate::linalg::{self, CMatrix, ZERO};

/// Tolerances enforced by [`DensityMatrix::new`].
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Largest truncation for the superoperator-exponential propagator.
pub const MAX_EXPM_DIM: usize = 24;

/// Where a density matrix came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateTag {
    Fock { level: usize },
    Coherent { re: f64, im: f64 },
    Thermal { beta: f64, omega: f64 },
    Random { seed: u64, support: usize },
    Custom { label: String },
}

impl StateTag {
    pub fn custom(label: impl Into<String>) -> Self {
        Self::Custom { label: label.into() }
    }
}

/// Hermitian, positive semidefinite, unit-trace operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    op: FockOperator,
    tag: StateTag,
}

impl DensityMatrix {
    /// Checks Hermiticity, unit trace and positivity.
    pub fn new(op: FockOperator, tag: StateTag) -> Result<Self> {
        let herm = op.hermiticity_defect();
        if herm > HERMITIAN_TOL {
            return Err(QfpError::InvalidState(format!("not Hermitian (defect {herm:e})")));
        }
        let tr = op.trace();
        if (tr - 1.0).norm() > TRACE_TOL {
            return Err(QfpError::InvalidState(format!("trace {tr} is not 1")));
        }
        let min = op.eigenvalues_hermitian()?[0];
        if min < -POSITIVITY_TOL {
            return Err(QfpError::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { op, tag })
    }

    /// Hermitizes and trace-normalizes `a`, then validates the result.
    pub fn from_unnormalized(a: &CMatrix, tag: StateTag) -> Result<Self> {
        let tr = linalg::trace(a).re;
        if !(tr.is_finite() && tr > 0.0) {
            return Err(QfpError::InvalidState(format!("trace {tr} is not positive")));
        }
        Self::new(FockOperator::new(linalg::hermitian_part(a).mapv(|z| z / tr))?, tag)
    }

    /// Hermitized and renormalized without the positivity check; used for
    /// integrator output whose positivity is tracked separately.
    pub(crate) fn corrected(a: &CMatrix, tag: StateTag) -> Self {
        let h = linalg::hermitian_part(a);
        let tr = linalg::trace(&h).re;
        Self {
            op: FockOperator::from_matrix(h.mapv(|z| z / tr)),
            tag,
        }
    }

    /// |u⟩⟨u| / ⟨u, u⟩.
    pub fn pure(u: &Array1<Complex64>, tag: StateTag) -> Result<Self> {
        let norm2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        if !(norm2.is_finite() && norm2 > 0.0) {
            return Err(QfpError::InvalidState("zero vector".into()));
        }
        let n = u.len();
        let m = CMatrix::from_shape_fn((n, n), |(j, k)| u[j] * u[k].conj() / norm2);
        // exact Hermitian by construction up to roundoff in the product
        Ok(Self {
            op: FockOperator::new(linalg::hermitian_part(&m))?,
            tag,
        })
    }

    pub fn fock(n: usize, level: usize) -> Result<Self> {
        if n < 2 || level >= n {
            return Err(QfpError::InvalidDimension {
                dim: n,
                reason: "Fock level must lie below the truncation",
            });
        }
        let mut m = CMatrix::zeros((n, n));
        m[[level, level]] = Complex64::new(1.0, 0.0);
        Ok(Self {
            op: FockOperator::from_matrix(m),
            tag: StateTag::Fock { level },
        })
    }

    /// Displaced vacuum with amplitudes e^{−|α|²/2} αʲ/√j!, renormalized on
    /// the truncated space.
    pub fn coherent(n: usize, alpha: Complex64) -> Result<Self> {
        if n < 2 {
            return Err(QfpError::InvalidDimension {
                dim: n,
                reason: "truncation must be at least 2",
            });
        }
        let mut u = Array1::<Complex64>::zeros(n);
        u[0] = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
        for j in 1..n {
            u[j] = u[j - 1] * alpha / (j as f64).sqrt();
        }
        Self::pure(&u, StateTag::Coherent { re: alpha.re, im: alpha.im })
    }

    /// Gibbs state exp(−βω(N + ½))/Z on the truncated space.
    pub fn thermal(n: usize, beta: f64, omega: f64) -> Result<Self> {
        if n < 2 {
            return Err(QfpError::InvalidDimension {
                dim: n,
                reason: "truncation must be at least 2",
            });
        }
        if !(beta > 0.0 && omega > 0.0 && beta.is_finite() && omega.is_finite()) {
            return Err(QfpError::InvalidState(format!(
                "thermal state needs positive beta and omega, got {beta}, {omega}"
            )));
        }
        let w: Vec<f64> = (0..n).map(|j| (-beta * omega * j as f64).exp()).collect();
        let z: f64 = w.iter().sum();
        let d: Vec<f64> = w.iter().map(|x| x / z).collect();
        Ok(Self {
            op: FockOperator::from_diagonal(&d),
            tag: StateTag::Thermal { beta, omega },
        })
    }

    /// B B† / tr(B B†) with B a standard complex Gaussian matrix whose rows
    /// beyond `support` are zero.
    pub fn random(n: usize, support: usize, seed: u64) -> Result<Self> {
        if n < 2 || support == 0 || support > n {
            return Err(QfpError::InvalidDimension {
                dim: n,
                reason: "random state support must lie in 1..=n",
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = CMatrix::zeros((n, n));
        for j in 0..support {
            for k in 0..n {
                b[[j, k]] = Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng));
            }
        }
        let bb = b.dot(&linalg::dagger(&b));
        Self::from_unnormalized(&bb, StateTag::Random { seed, support })
    }

    /// Rebuilds a library state from its tag; custom states have no recipe.
    pub fn from_tag(n: usize, tag: &StateTag) -> Result<Self> {
        match *tag {
            StateTag::Fock { level } => Self::fock(n, level),
            StateTag::Coherent { re, im } => Self::coherent(n, Complex64::new(re, im)),
            StateTag::Thermal { beta, omega } => Self::thermal(n, beta, omega),
            StateTag::Random { seed, support } => Self::random(n, support, seed),
            StateTag::Custom { ref label } => Err(QfpError::InvalidState(format!(
                "custom state '{label}' cannot be rebuilt from its tag"
            ))),
        }
    }

    pub fn maximally_mixed(n: usize) -> Self {
        Self {
            op: FockOperator::from_diagonal(&vec![1.0 / n as f64; n]),
            tag: StateTag::custom("maximally_mixed"),
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn op(&self) -> &FockOperator {
        &self.op
    }

    pub fn matrix(&self) -> &CMatrix {
        self.op.entries()
    }

    pub fn tag(&self) -> &StateTag {
        &self.tag
    }

    pub fn with_tag(mut self, tag: StateTag) -> Self {
        self.tag = tag;
        self
    }

    /// tr(ρ²)
    pub fn purity(&self) -> f64 {
        self.matrix().iter().map(|z| z.norm_sqr()).sum()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.op.eigenvalues_hermitian()
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    /// Re tr(ρA).
    pub fn expectation(&self, a: &FockOperator) -> Result<f64> {
        if a.dim() != self.dim() {
            return Err(QfpError::DimensionMismatch {
                expected: self.dim(),
                found: a.dim(),
            });
        }
        Ok(self.op.dot(a).trace().re)
    }

    /// ⟨u, ρ u⟩ / ⟨u, u⟩.
    pub fn fidelity_with_pure(&self, u: &Array1<Complex64>) -> Result<f64> {
        if u.len() != self.dim() {
            return Err(QfpError::DimensionMismatch {
                expected: self.dim(),
                found: u.len(),
            });
        }
        let norm2: f64 = u.iter().map(|z| z.norm_sqr()).sum();
        Ok(self.op.expectation(u).re / norm2)
    }

    pub fn to_dump(&self) -> MatrixDump {
        MatrixDump::from_matrix(self.matrix())
    }
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(QfpError::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

/// ½ Σ |eigenvalues of (A − B)| for Hermitian A, B.
pub(crate) fn trace_distance_raw(a: &CMatrix, b: &CMatrix) -> Result<f64> {
    let d = linalg::hermitian_part(&(a - b));
    Ok(0.5 * linalg::eigvalsh(&d)?.iter().map(|l| l.abs()).sum::<f64>())
}

pub fn trace_distance(rho1: &DensityMatrix, rho2: &DensityMatrix) -> Result<f64> {
    check_same_dim(rho1.dim(), rho2.dim())?;
    trace_distance_raw(rho1.matrix(), rho2.matrix())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Dormand–Prince 5(4) with adaptive steps.
    Dopri5,
    /// Exact propagator exp(tM) of the dense superoperator, n ≤ 24.
    Expm,
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub rtol: f64,
    /// Absolute tolerance; defaults to `rtol`.
    pub atol: Option<f64>,
    pub integrator: Integrator,
    pub reference: Option<DensityMatrix>,
    pub max_steps: usize,
    /// Fail when the pre-correction minimum eigenvalue drops below this.
    pub positivity_floor: f64,
}

impl EvolveOptions {
    pub fn new(rtol: f64) -> Self {
        Self {
            rtol,
            atol: None,
            integrator: Integrator::Dopri5,
            reference: None,
            max_steps: 10_000_000,
            positivity_floor: -1e-6,
        }
    }

    pub fn with_reference(mut self, reference: DensityMatrix) -> Self {
        self.reference = Some(reference);
        self
    }

    pub fn with_integrator(mut self, integrator: Integrator) -> Self {
        self.integrator = integrator;
        self
    }
}

/// Diagnostics of the raw integrator state before re-Hermitization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepDiagnostics {
    pub trace_error: f64,
    pub min_eigenvalue: f64,
    pub trace_distance_to_ref: Option<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegratorStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
    pub diagnostics: Vec<StepDiagnostics>,
    pub stats: IntegratorStats,
}

impl Trajectory {
    pub fn max_trace_error(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.trace_error).fold(0.0, f64::max)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.min_eigenvalue).fold(f64::INFINITY, f64::min)
    }

    pub fn final_state(&self) -> &DensityMatrix {
        self.states.last().expect("trajectory is never empty")
    }

    /// Trace distance of every emitted state to `reference`.
    pub fn distances_to(&self, reference: &DensityMatrix) -> Result<Vec<f64>> {
        self.states.iter().map(|s| trace_distance(s, reference)).collect()
    }

    /// CSV with header `t,trace_error,min_eig,trace_dist_to_ref`; the last
    /// column is empty when no reference was given.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t", "trace_error", "min_eig", "trace_dist_to_ref"])
            .map_err(csv_err)?;
        for (t, d) in self.times.iter().zip(&self.diagnostics) {
            let dist = d.trace_distance_to_ref.map(|x| format!("{x:e}")).unwrap_or_default();
            w.write_record([format!("{t}"), format!("{:e}", d.trace_error), format!("{:e}", d.min_eigenvalue), dist])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))
    }

    pub fn to_dump(&self) -> StatesDump {
        StatesDump {
            format: "qfp-states-v1".into(),
            n: self.states[0].dim(),
            times: self.times.clone(),
            states: self.states.iter().map(DensityMatrix::to_dump).collect(),
        }
    }

    pub fn save_states_json(&self, path: &Path) -> Result<()> {
        write_json(path, &self.to_dump())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> QfpError {
    QfpError::Io(std::io::Error::other(e))
}

fn validate_time_grid(t_grid: &[f64]) -> Result<()> {
    match t_grid.first() {
        None => return Err(QfpError::InvalidTimeGrid("empty time grid".into())),
        Some(&t0) if t0 != 0.0 => {
            return Err(QfpError::InvalidTimeGrid(format!("time grid must start at 0, got {t0}")))
        }
        _ => {}
    }
    if t_grid.iter().any(|t| !t.is_finite()) {
        return Err(QfpError::InvalidTimeGrid("non-finite time".into()));
    }
    if t_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(QfpError::InvalidTimeGrid("times must be strictly increasing".into()));
    }
    Ok(())
}

/// Solves dρ/dt = ℒ_*(ρ) and emits states at `t_grid`.
pub fn evolve(params: &QfpParams, rho0: &DensityMatrix, t_grid: &[f64], rtol: f64) -> Result<Trajectory> {
    evolve_with(params, rho0, t_grid, &EvolveOptions::new(rtol))
}

pub fn evolve_with(
    params: &QfpParams,
    rho0: &DensityMatrix,
    t_grid: &[f64],
    opts: &EvolveOptions,
) -> Result<Trajectory> {
    validate_time_grid(t_grid)?;
    if !(1e-12..=1e-4).contains(&opts.rtol) {
        return Err(QfpError::ParameterDomain(format!(
            "rtol must lie in [1e-12, 1e-4], got {}",
            opts.rtol
        )));
    }
    if let Some(r) = &opts.reference {
        check_same_dim(rho0.dim(), r.dim())?;
    }
    let gen = Generator::new(params, rho0.dim())?;
    let mut recorder = Recorder::new(rho0.tag().clone(), opts);
    match opts.integrator {
        Integrator::Dopri5 => {
            let mut stepper = Dopri5::new(&gen, opts);
            let mut y = rho0.matrix().clone();
            recorder.push(0.0, &y)?;
            for w in t_grid.windows(2) {
                y = stepper.advance(y, w[0], w[1])?;
                recorder.push(w[1], &y)?;
            }
            Ok(recorder.finish(stepper.stats))
        }
        Integrator::Expm => {
            let n = rho0.dim();
            if n > MAX_EXPM_DIM {
                return Err(QfpError::DimensionGuard { n, max: MAX_EXPM_DIM });
            }
            let m = gen.superoperator()?;
            let mut v = vectorize(rho0.matrix());
            recorder.push(0.0, rho0.matrix())?;
            let mut cached: Option<(f64, CMatrix)> = None;
            for w in t_grid.windows(2) {
                let dt = w[1] - w[0];
                let prop = match &cached {
                    Some((h, p)) if *h == dt => p,
                    _ => {
                        let p = linalg::expm(&m.entries().mapv(|z| z * dt));
                        &cached.insert((dt, p)).1
                    }
                };
                v = prop.dot(&v);
                recorder.push(w[1], &devectorize(&v.view(), n))?;
            }
            Ok(recorder.finish(IntegratorStats::default()))
        }
    }
}

struct Recorder<'a> {
    tag: StateTag,
    opts: &'a EvolveOptions,
    times: Vec<f64>,
    states: Vec<DensityMatrix>,
    diagnostics: Vec<StepDiagnostics>,
}

impl<'a> Recorder<'a> {
    fn new(tag: StateTag, opts: &'a EvolveOptions) -> Self {
        Self {
            tag,
            opts,
            times: Vec::new(),
            states: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    fn push(&mut self, t: f64, raw: &CMatrix) -> Result<()> {
        let trace_error = (linalg::trace(raw) - 1.0).norm();
        let min_eigenvalue = linalg::eigvalsh(&linalg::hermitian_part(raw))?[0];
        if min_eigenvalue < self.opts.positivity_floor {
            return Err(QfpError::TruncationTooSmall { t, min_eigenvalue });
        }
        let trace_distance_to_ref = match &self.opts.reference {
            Some(r) => Some(trace_distance_raw(raw, r.matrix())?),
            None => None,
        };
        self.times.push(t);
        self.states.push(DensityMatrix::corrected(raw, self.tag.clone()));
        self.diagnostics.push(StepDiagnostics {
            trace_error,
            min_eigenvalue,
            trace_distance_to_ref,
        });
        Ok(())
    }

    fn finish(self, stats: IntegratorStats) -> Trajectory {
        Trajectory {
            times: self.times,
            states: self.states,
            diagnostics: self.diagnostics,
            stats,
        }
    }
}

// Dormand–Prince 5(4) tableau.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// fifth-order weights minus embedded fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

struct Dopri5<'a> {
    gen: &'a Generator,
    rtol: f64,
    atol: f64,
    max_steps: usize,
    h: Option<f64>,
    // derivative at the current state (first-same-as-last)
    k1: Option<CMatrix>,
    stats: IntegratorStats,
}

impl<'a> Dopri5<'a> {
    fn new(gen: &'a Generator, opts: &EvolveOptions) -> Self {
        Self {
            gen,
            rtol: opts.rtol,
            atol: opts.atol.unwrap_or(opts.rtol),
            max_steps: opts.max_steps,
            h: None,
            k1: None,
            stats: IntegratorStats::default(),
        }
    }

    fn f(&mut self, y: &CMatrix) -> CMatrix {
        self.stats.evaluations += 1;
        self.gen.apply_raw(y)
    }

    fn error_norm(&self, y: &CMatrix, y_new: &CMatrix, err: &CMatrix) -> f64 {
        let mut acc = 0.0;
        for ((a, b), e) in y.iter().zip(y_new.iter()).zip(err.iter()) {
            let scale = self.atol + self.rtol * a.norm().max(b.norm());
            acc += (e.norm() / scale).powi(2);
        }
        (acc / y.len() as f64).sqrt()
    }

    fn rms(&self, a: &CMatrix, y: &CMatrix) -> f64 {
        let mut acc = 0.0;
        for (z, w) in a.iter().zip(y.iter()) {
            acc += (z.norm() / (self.atol + self.rtol * w.norm())).powi(2);
        }
        (acc / a.len() as f64).sqrt()
    }

    fn advance(&mut self, mut y: CMatrix, t0: f64, t1: f64) -> Result<CMatrix> {
        let mut t = t0;
        if self.k1.is_none() {
            let k = self.f(&y);
            self.k1 = Some(k);
        }
        if self.h.is_none() {
            let k1 = self.k1.as_ref().unwrap();
            let d0 = self.rms(&y, &y);
            let d1 = self.rms(k1, &y);
            let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
            self.h = Some(h0.min(t1 - t0));
        }
        while t < t1 {
            if self.stats.accepted + self.stats.rejected >= self.max_steps {
                return Err(QfpError::Stiffness { t, h: self.h.unwrap() });
            }
            let remaining = t1 - t;
            let h_ctrl = self.h.unwrap();
            let last = h_ctrl >= remaining;
            let h = if last { remaining } else { h_ctrl };
            let h_min = 16.0 * f64::EPSILON * t.abs().max(1.0);
            if h < h_min && !last {
                return Err(QfpError::Stiffness { t, h });
            }

            let mut k: Vec<CMatrix> = Vec::with_capacity(7);
            k.push(self.k1.clone().unwrap());
            for s in 1..7 {
                let mut ys = y.clone();
                for (j, kj) in k.iter().enumerate() {
                    let a = A[s][j];
                    if a != 0.0 {
                        ys.scaled_add(Complex64::new(h * a, 0.0), kj);
                    }
                }
                let ks = self.f(&ys);
                if s == 6 {
                    // stage 7 is evaluated at the fifth-order solution
                    let mut err = CMatrix::from_elem(y.raw_dim(), ZERO);
                    for (j, kj) in k.iter().chain(std::iter::once(&ks)).enumerate() {
                        if E[j] != 0.0 {
                            err.scaled_add(Complex64::new(h * E[j], 0.0), kj);
                        }
                    }
                    let en = self.error_norm(&y, &ys, &err);
                    let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
                    if en <= 1.0 {
                        self.stats.accepted += 1;
                        t = if last { t1 } else { t + h };
                        y = ys;
                        self.k1 = Some(ks);
                        // keep the controller's step when the last step was clipped
                        self.h = Some(if last { h_ctrl.max(h * factor.min(1.0)) } else { h * factor });
                    } else {
                        self.stats.rejected += 1;
                        self.h = Some(h * factor.min(1.0));
                        if h * factor < h_min {
                            return Err(QfpError::Stiffness { t, h: h * factor });
                        }
                    }
                    break;
                }
                k.push(ks);
            }
        }
        Ok(y)
    }
}
