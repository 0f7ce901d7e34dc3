//! Scenario configuration, TOML or JSON.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use qfp_core::dynamics::Integrator;
use qfp_core::steady::SteadyMethod;
use qfp_core::{stationary_moments, validate_params, GridSpec, QfpParams, StateTag};
use serde::{Deserialize, Serialize};

pub const MIN_N: usize = 8;
pub const MAX_N: usize = 128;

/// Tasks in the order they run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    Validate,
    Steady,
    Evolve,
    Wigner,
    Lyapunov,
    Report,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Defaults to the config file stem.
    #[serde(default)]
    pub name: Option<String>,
    pub params: QfpParams,
    pub n: usize,
    #[serde(default)]
    pub seed: u64,
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Defaults to `GridSpec::for_truncation(n)`.
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default)]
    pub time: TimeConfig,
    #[serde(default = "default_states")]
    pub initial_states: Vec<StateTag>,
    #[serde(default)]
    pub validate: ValidateConfig,
    #[serde(default)]
    pub steady: SteadyConfig,
    #[serde(default)]
    pub wigner: WignerConfig,
    #[serde(default)]
    pub lyapunov: LyapunovConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn default_states() -> Vec<StateTag> {
    vec![
        StateTag::Fock { level: 2 },
        StateTag::Coherent { re: 1.0, im: 0.5 },
        StateTag::Random { seed: 17, support: 4 },
    ]
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub x_max: f64,
    pub nx: usize,
    pub v_max: f64,
    pub nv: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeConfig {
    pub t_max: f64,
    /// Spacing of the output grid.
    pub stride: f64,
    pub rtol: f64,
    pub integrator: Integrator,
}

impl Default for TimeConfig {
    fn default() -> Self {
        Self {
            t_max: 10.0,
            stride: 0.5,
            rtol: 1e-9,
            integrator: Integrator::Dopri5,
        }
    }
}

impl TimeConfig {
    pub fn grid(&self) -> Vec<f64> {
        let steps = (self.t_max / self.stride).round() as usize;
        (0..=steps).map(|k| (k as f64 * self.stride).min(self.t_max)).collect()
    }
}

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateConfig {
    /// Random admissible parameter sets for the purity identity check.
    pub identity_samples: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SteadyConfig {
    pub method: SteadyMethod,
    pub write_matrix: bool,
    pub write_kernel: bool,
}

impl Default for SteadyConfig {
    fn default() -> Self {
        Self {
            method: SteadyMethod::Auto,
            write_matrix: true,
            write_kernel: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WignerConfig {
    /// State to transform; the steady state when unset.
    pub state: Option<StateTag>,
    /// Points per axis of the characteristic-function pipeline; skipped when unset.
    pub pipeline_points: Option<usize>,
    pub pipeline_half_width: f64,
    /// Grid spacings for the residual refinement study; skipped when empty.
    pub refinement_steps: Vec<f64>,
    pub write_csv: bool,
    pub write_binary: bool,
}

impl Default for WignerConfig {
    fn default() -> Self {
        Self {
            state: None,
            pipeline_points: None,
            pipeline_half_width: 10.0,
            refinement_steps: Vec::new(),
            write_csv: true,
            write_binary: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapunovConfig {
    /// Truncation for the certificate checks; the scenario n when unset.
    pub n: Option<usize>,
    pub vectors: usize,
    /// (r, s) pairs for the positivity lemma; the expected sign follows rs > 1.
    pub positivity_pairs: Vec<[f64; 2]>,
}

impl Default for LyapunovConfig {
    fn default() -> Self {
        Self {
            n: None,
            vectors: 200,
            positivity_pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PurityClassName {
    PureSteady,
    MixedSteady,
    NoPurePossible,
}

/// Pass/fail thresholds. Optional entries are only checked when set.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    /// Record every check but pass unless a task errors.
    pub evidence_only: bool,
    pub identity_residual_max: f64,
    pub expect_purity_class: Option<PurityClassName>,
    pub expect_classification: Option<qfp_core::Classification>,
    /// Trace distance to the closed-form Gaussian (V = 0, γ > 0 only).
    pub steady_reference_distance_max: Option<f64>,
    pub steady_runtime_max_s: Option<f64>,
    pub kernel_dim: Option<usize>,
    /// Steady-state min eigenvalue must exceed this.
    pub min_eigenvalue_above: Option<f64>,
    /// Steady-state min eigenvalue must not exceed this.
    pub min_eigenvalue_at_most: Option<f64>,
    pub purity_min: Option<f64>,
    /// Fidelity with the pure Gaussian state, checked at a purity point.
    pub fidelity_min: Option<f64>,
    pub trace_drift_max: f64,
    /// Final trace distance to the steady state, with monotone decay after the transient.
    pub convergence_distance_max: Option<f64>,
    pub monotone_slack: f64,
    pub transient_time: f64,
    pub wigner_mass_tol: f64,
    pub dictionary_max: f64,
    pub pipeline_max: f64,
    pub wigner_origin: Option<f64>,
    pub wigner_origin_tol: f64,
    pub wfp_relative_max: f64,
    pub wfp_min_order_ratio: f64,
    pub wfp_floor_factor: f64,
    pub drift_violation_max: f64,
    pub markov_violation_max: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            evidence_only: false,
            identity_residual_max: 1e-10,
            expect_purity_class: None,
            expect_classification: None,
            steady_reference_distance_max: None,
            steady_runtime_max_s: None,
            kernel_dim: None,
            min_eigenvalue_above: None,
            min_eigenvalue_at_most: None,
            purity_min: None,
            fidelity_min: None,
            trace_drift_max: 1e-8,
            convergence_distance_max: None,
            monotone_slack: 1e-7,
            transient_time: 1.0,
            wigner_mass_tol: 1e-4,
            dictionary_max: 1e-4,
            pipeline_max: 1e-4,
            wigner_origin: None,
            wigner_origin_tol: 1e-4,
            wfp_relative_max: 1e-3,
            wfp_min_order_ratio: 8.0,
            wfp_floor_factor: 10.0,
            drift_violation_max: 1e-8,
            markov_violation_max: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub n: Option<usize>,
}

impl ScenarioConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg: ScenarioConfig = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
            _ => toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?,
        };
        if cfg.name.is_none() {
            cfg.name = path.file_stem().map(|s| s.to_string_lossy().into_owned());
        }
        Ok(cfg)
    }

    pub fn apply(&mut self, overrides: Overrides) {
        if let Some(seed) = overrides.seed {
            self.seed = seed;
        }
        if let Some(n) = overrides.n {
            self.n = n;
        }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or("scenario")
    }

    pub fn has(&self, task: Task) -> bool {
        self.tasks.contains(&task)
    }

    /// Tasks deduplicated in execution order.
    pub fn ordered_tasks(&self) -> Vec<Task> {
        let mut t = self.tasks.clone();
        t.sort();
        t.dedup();
        t
    }

    pub fn grid_spec(&self) -> anyhow::Result<GridSpec> {
        Ok(match self.grid {
            Some(g) => GridSpec::symmetric(g.x_max, g.nx, g.v_max, g.nv).context("field `grid`")?,
            None => GridSpec::for_truncation(self.n)?,
        })
    }

    /// 6·√max(⟨q²⟩, ⟨p²⟩) from the harmonic part of the model.
    pub fn min_grid_extent(&self) -> Option<f64> {
        let mut harmonic = self.params;
        harmonic.potential = Default::default();
        let m = stationary_moments(&harmonic).ok()?;
        Some(6.0 * m.q2.max(m.p2).sqrt())
    }

    /// Field-level checks that do not need any numerics beyond parameter validation.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.tasks.is_empty() {
            bail!("field `tasks`: at least one task is required");
        }
        if !(MIN_N..=MAX_N).contains(&self.n) {
            bail!("field `n`: {} is outside [{MIN_N}, {MAX_N}]", self.n);
        }
        if let Err(e) = validate_params(&self.params) {
            // an inadmissible Δ is a result, not a config error
            if !matches!(e, qfp_core::QfpError::InvalidLindblad { .. }) {
                bail!("field `params`: {e}");
            }
        }
        let t = &self.time;
        if !(t.t_max > 0.0 && t.stride > 0.0 && t.stride <= t.t_max) {
            bail!("field `time`: need t_max > 0 and 0 < stride <= t_max");
        }
        if !(1e-12..=1e-4).contains(&t.rtol) {
            bail!("field `time.rtol`: {} is outside [1e-12, 1e-4]", t.rtol);
        }
        if self.has(Task::Evolve) && self.initial_states.is_empty() {
            bail!("field `initial_states`: the evolve task needs at least one state");
        }
        if self.has(Task::Wigner) {
            if self.wigner.state.is_none() && !self.has(Task::Steady) {
                bail!("field `wigner.state`: required when tasks do not include `steady`");
            }
            let spec = self.grid_spec()?;
            if let Some(extent) = self.min_grid_extent() {
                let have = spec.x.max().min(spec.v.max());
                if have < extent {
                    bail!("field `grid`: half width {have} is below 6 standard deviations of the steady state ({extent:.3})");
                }
            }
            if let Some(p) = self.wigner.pipeline_points {
                if p < 8 || p % 4 != 0 {
                    bail!("field `wigner.pipeline_points`: {p} is not a multiple of 4 (>= 8)");
                }
            }
            if self.wigner.refinement_steps.iter().any(|&h| !(h > 0.0)) {
                bail!("field `wigner.refinement_steps`: spacings must be positive");
            }
        }
        if self.has(Task::Lyapunov) {
            let n = self.lyapunov_n();
            if !(MIN_N..=MAX_N).contains(&n) {
                bail!("field `lyapunov.n`: {n} is outside [{MIN_N}, {MAX_N}]");
            }
            if self.lyapunov.vectors == 0 {
                bail!("field `lyapunov.vectors`: must be positive");
            }
            if self.lyapunov.positivity_pairs.iter().any(|[r, s]| !(*r > 0.0 && *s > 0.0)) {
                bail!("field `lyapunov.positivity_pairs`: r and s must be positive");
            }
        }
        Ok(())
    }

    pub fn lyapunov_n(&self) -> usize {
        self.lyapunov.n.unwrap_or(self.n)
    }
}
