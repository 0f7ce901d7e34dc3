//! report.json, timing.json and the matrix summary.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use qfp_core::lyapunov::LyapunovReport;
use qfp_core::steady::SteadySummary;
use qfp_core::wigner::DictionaryReport;
use qfp_core::{GaussianSteady, LindbladCheck, PurityClass, QfpParams};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::Task;

pub const REPORT_SCHEMA: &str = "qfp-report/1";
pub const TIMING_SCHEMA: &str = "qfp-timing/1";
pub const MATRIX_SCHEMA: &str = "qfp-matrix/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: Value,
    pub expected: String,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: &str, value: f64, limit: f64) -> Self {
        Self::numeric(name, value, format!("<= {limit:e}"), value <= limit)
    }

    pub fn above(name: &str, value: f64, limit: f64) -> Self {
        Self::numeric(name, value, format!("> {limit:e}"), value > limit)
    }

    pub fn below(name: &str, value: f64, limit: f64) -> Self {
        Self::numeric(name, value, format!("< {limit:e}"), value < limit)
    }

    pub fn at_least(name: &str, value: f64, limit: f64) -> Self {
        Self::numeric(name, value, format!(">= {limit:e}"), value >= limit)
    }

    pub fn equals<T: Serialize + PartialEq>(name: &str, value: T, expected: T) -> Self {
        let passed = value == expected;
        Self {
            name: name.into(),
            value: serde_json::to_value(&value).unwrap_or(Value::Null),
            expected: match serde_json::to_value(&expected) {
                Ok(Value::String(s)) => s,
                Ok(v) => v.to_string(),
                Err(_) => String::new(),
            },
            passed,
        }
    }

    fn numeric(name: &str, value: f64, expected: String, passed: bool) -> Self {
        Self {
            name: name.into(),
            value: serde_json::json!(value),
            expected,
            passed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ValidateSection {
    pub lindblad: LindbladCheck,
    pub purity_class: Option<PurityClass>,
    pub identity_residual: Option<f64>,
    pub identity_samples: usize,
    pub identity_sample_max_residual: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SteadySection {
    #[serde(flatten)]
    pub summary: SteadySummary,
    /// Closed-form Q parameters, V = 0 and γ > 0 only.
    pub reference: Option<GaussianSteady>,
    pub reference_trace_distance: Option<f64>,
    pub pure_state_fidelity: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectorySection {
    pub initial_state: qfp_core::StateTag,
    pub csv: String,
    pub states: String,
    pub max_trace_error: f64,
    pub min_eigenvalue: f64,
    pub final_distance_to_steady: Option<f64>,
    pub monotone_after_transient: Option<bool>,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvolveSection {
    pub times: usize,
    pub t_max: f64,
    pub trajectories: Vec<TrajectorySection>,
    pub max_pairwise_final_distance: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RefinementRow {
    pub step: f64,
    pub relative: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WignerSection {
    pub source: String,
    pub nx: usize,
    pub nv: usize,
    pub x_max: f64,
    pub v_max: f64,
    pub mass: f64,
    pub min_value: f64,
    pub max_value: f64,
    pub imag_residue: f64,
    pub origin_value: Option<f64>,
    pub dictionary: DictionaryReport,
    pub pipeline_max_diff: Option<f64>,
    pub wfp_relative: Option<f64>,
    pub wfp_stencil_gap: Option<f64>,
    pub refinement: Vec<RefinementRow>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PositivityRow {
    pub r: f64,
    pub s: f64,
    pub min_eigenvalue_minus: f64,
    pub min_eigenvalue_plus: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LyapunovSection {
    pub file: String,
    #[serde(flatten)]
    pub report: LyapunovReport,
    pub positivity: Vec<PositivityRow>,
}

/// Everything in here is a deterministic function of the config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Report {
    pub schema: String,
    pub scenario: String,
    pub n: usize,
    pub seed: u64,
    pub params: QfpParams,
    pub tasks: Vec<Task>,
    pub validate: Option<ValidateSection>,
    pub steady: Option<SteadySection>,
    pub evolve: Option<EvolveSection>,
    pub wigner: Option<WignerSection>,
    pub lyapunov: Option<LyapunovSection>,
    pub artifacts: Vec<String>,
    pub checks: Vec<Check>,
    pub evidence_only: bool,
    pub passed: bool,
    pub error: Option<String>,
}

impl Report {
    pub fn new(scenario: &str, n: usize, seed: u64, params: QfpParams, tasks: Vec<Task>, evidence_only: bool) -> Self {
        Self {
            schema: REPORT_SCHEMA.into(),
            scenario: scenario.into(),
            n,
            seed,
            params,
            tasks,
            validate: None,
            steady: None,
            evolve: None,
            wigner: None,
            lyapunov: None,
            artifacts: Vec::new(),
            checks: Vec::new(),
            evidence_only,
            passed: false,
            error: None,
        }
    }

    pub fn failed_checks(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    pub fn finish(&mut self) {
        self.passed = self.error.is_none() && (self.evidence_only || self.failed_checks() == 0);
    }

    pub fn markdown(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# {}\n", self.scenario);
        let _ = writeln!(s, "n = {}, seed = {}, passed = {}\n", self.n, self.seed, self.passed);
        if let Some(e) = &self.error {
            let _ = writeln!(s, "error: {e}\n");
        }
        let _ = writeln!(s, "| check | value | expected | result |");
        let _ = writeln!(s, "|---|---|---|---|");
        for c in &self.checks {
            let tag = if c.passed { "pass" } else { "FAIL" };
            let _ = writeln!(s, "| {} | {} | {} | {tag} |", c.name, c.value, c.expected);
        }
        s
    }
}

/// Wall-clock data, kept apart from the deterministic report.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub schema: String,
    pub scenario: String,
    pub started_unix_s: f64,
    pub seconds: BTreeMap<String, f64>,
    pub total_s: f64,
    pub checks: Vec<Check>,
}

impl Timing {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixRow {
    pub scenario: String,
    pub passed: bool,
    pub failed_checks: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MatrixSummary {
    pub schema: String,
    pub scenarios: Vec<MatrixRow>,
    pub failures: usize,
}

impl MatrixSummary {
    pub fn table(&self) -> String {
        let width = self.scenarios.iter().map(|r| r.scenario.len()).max().unwrap_or(8).max(8);
        let mut s = String::new();
        for r in &self.scenarios {
            let tag = if r.passed { "PASS" } else { "FAIL" };
            let detail = match &r.error {
                Some(e) => e.clone(),
                None => format!("{} failed checks", r.failed_checks),
            };
            let _ = writeln!(s, "{tag}  {:<width$}  {detail}", r.scenario);
        }
        let _ = writeln!(s, "{} of {} scenarios passed", self.scenarios.len() - self.failures, self.scenarios.len());
        s
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}
