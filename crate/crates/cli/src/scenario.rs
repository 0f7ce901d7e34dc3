//! One scenario: validate → steady → evolve → wigner → lyapunov → report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use anyhow::Context;
use qfp_core::dynamics::EvolveOptions;
use qfp_core::gksl::sample_admissible;
use qfp_core::lyapunov::check_positivity_lemma;
use qfp_core::steady::{pure_gaussian_state, pure_width, solve_steady_with};
use qfp_core::wigner::wigner_from_characteristic;
use qfp_core::{
    build_superoperator, certify, dictionary_moments, evolve_with, gaussian_reference, purity_conditions,
    purity_identity_check, trace_distance, wfp_residual, wigner_transform, Classification, DensityMatrix, GridSpec,
    LindbladCheck, PurityClass, StateTag,
};

use crate::config::{PurityClassName, ScenarioConfig, Task};
use crate::report::{
    write_json, Check, EvolveSection, LyapunovSection, PositivityRow, RefinementRow, Report, SteadySection, Timing,
    TrajectorySection, ValidateSection, WignerSection, TIMING_SCHEMA,
};

pub struct Outcome {
    pub report: Report,
    pub timing: Timing,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.report.passed && self.timing.passed()
    }
}

struct Runner<'a> {
    cfg: &'a ScenarioConfig,
    out: &'a Path,
    report: Report,
    timing: Timing,
    steady: Option<DensityMatrix>,
}

/// Runs every requested task, writing artifacts into `out` as they appear.
///
/// Numerical failures end up in `report.error`; only I/O problems are
/// returned as errors.
pub fn run(cfg: &ScenarioConfig, out: &Path) -> anyhow::Result<Outcome> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
    let t0 = Instant::now();
    let mut runner = Runner {
        cfg,
        out,
        report: Report::new(
            cfg.name(),
            cfg.n,
            cfg.seed,
            cfg.params,
            cfg.ordered_tasks(),
            cfg.thresholds.evidence_only,
        ),
        timing: Timing {
            schema: TIMING_SCHEMA.into(),
            scenario: cfg.name().into(),
            started_unix_s: started,
            seconds: BTreeMap::new(),
            total_s: 0.0,
            checks: Vec::new(),
        },
        steady: None,
    };
    for task in cfg.ordered_tasks() {
        let start = Instant::now();
        let result = match task {
            Task::Validate => runner.validate(),
            Task::Steady => runner.steady(),
            Task::Evolve => runner.evolve(),
            Task::Wigner => runner.wigner(),
            Task::Lyapunov => runner.lyapunov(),
            Task::Report => Ok(()),
        };
        let name = serde_json::to_value(task)?.as_str().unwrap_or_default().to_string();
        runner.timing.seconds.insert(name.clone(), start.elapsed().as_secs_f64());
        if let Err(e) = result {
            runner.report.error = Some(format!("{name}: {e:#}"));
            break;
        }
    }
    let Runner {
        mut report, mut timing, ..
    } = runner;
    report.finish();
    timing.total_s = t0.elapsed().as_secs_f64();
    if cfg.has(Task::Report) {
        std::fs::write(out.join("report.md"), report.markdown())?;
        report.artifacts.push("report.md".into());
    }
    write_json(&out.join("timing.json"), &timing)?;
    write_json(&out.join("report.json"), &report)?;
    Ok(Outcome { report, timing })
}

impl Runner<'_> {
    fn check(&mut self, c: Check) {
        self.report.checks.push(c);
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.report.artifacts.push(name.into());
        self.out.join(name)
    }

    fn harmonic_with_friction(&self) -> bool {
        self.cfg.params.potential.is_none() && self.cfg.params.gamma > 0.0
    }

    fn validate(&mut self) -> anyhow::Result<()> {
        let params = self.cfg.params;
        let th = &self.cfg.thresholds;
        let lindblad = LindbladCheck {
            delta: params.delta(),
            classification: params.classification(),
        };
        let classification_check = match th.expect_classification {
            Some(expected) => Check::equals("classification", lindblad.classification, expected),
            None => Check::equals("lindblad_admissible", lindblad.classification != Classification::Invalid, true),
        };
        self.check(classification_check);

        let admissible = lindblad.classification != Classification::Invalid;
        let (mut purity_class, mut identity_residual) = (None, None);
        if self.harmonic_with_friction() && admissible {
            let class = purity_conditions(&params)?;
            if let Some(expected) = th.expect_purity_class {
                let found = match class {
                    PurityClass::PureSteady { .. } => PurityClassName::PureSteady,
                    PurityClass::MixedSteady => PurityClassName::MixedSteady,
                    PurityClass::NoPurePossible { .. } => PurityClassName::NoPurePossible,
                };
                self.check(Check::equals("purity_class", found, expected));
            }
            purity_class = Some(class);
            let r = purity_identity_check(&params)?.residual;
            self.check(Check::at_most("purity_identity_residual", r, th.identity_residual_max));
            identity_residual = Some(r);
        } else if th.expect_purity_class.is_some() {
            self.check(Check::equals("purity_class_available", false, true));
        }

        let samples = self.cfg.validate.identity_samples;
        let mut sample_max = None;
        if samples > 0 {
            let mut worst = 0.0_f64;
            for p in sample_admissible(samples, self.cfg.seed) {
                worst = worst.max(purity_identity_check(&p)?.residual);
            }
            self.check(Check::at_most("purity_identity_sample_residual", worst, th.identity_residual_max));
            sample_max = Some(worst);
        }
        self.report.validate = Some(ValidateSection {
            lindblad,
            purity_class,
            identity_residual,
            identity_samples: samples,
            identity_sample_max_residual: sample_max,
        });
        Ok(())
    }

    fn steady(&mut self) -> anyhow::Result<()> {
        let (params, n) = (self.cfg.params, self.cfg.n);
        let th = self.cfg.thresholds.clone();
        let start = Instant::now();
        let superop = build_superoperator(&params, n)?;
        let solved = solve_steady_with(&superop, self.cfg.steady.method)?;
        let seconds = start.elapsed().as_secs_f64();
        if let Some(limit) = th.steady_runtime_max_s {
            self.timing.checks.push(Check::at_most("steady_runtime_s", seconds, limit));
        }

        let matrix_path = if self.cfg.steady.write_matrix {
            let p = self.path("steady_matrix.json");
            write_json(&p, &solved.rho_ss.to_dump())?;
            Some("steady_matrix.json".to_string())
        } else {
            None
        };

        let mut reference_distance = None;
        let mut reference = None;
        let mut fidelity = None;
        if self.harmonic_with_friction() {
            let (gaussian, projected) = gaussian_reference(&params, n)?;
            let d = trace_distance(&solved.rho_ss, &projected)?;
            if let Some(limit) = th.steady_reference_distance_max {
                self.check(Check::at_most("steady_reference_distance", d, limit));
            }
            reference_distance = Some(d);
            if self.cfg.steady.write_kernel {
                let xs = self.cfg.grid_spec()?.x.nodes();
                let p = self.path("gaussian_kernel.csv");
                gaussian.write_kernel_csv(std::io::BufWriter::new(std::fs::File::create(p)?), &xs)?;
            }
            if let PurityClass::PureSteady { .. } = purity_conditions(&params)? {
                let u = pure_gaussian_state(n, pure_width(params.omega, params.gamma))?;
                fidelity = Some(solved.rho_ss.fidelity_with_pure(&u)?);
            }
            reference = Some(gaussian);
        }
        if let Some(dim) = th.kernel_dim {
            self.check(Check::equals("kernel_dim", solved.kernel_dim_estimate, dim));
        }
        if let Some(limit) = th.min_eigenvalue_above {
            self.check(Check::above("steady_min_eigenvalue", solved.min_eigenvalue, limit));
        }
        if let Some(limit) = th.min_eigenvalue_at_most {
            self.check(Check::at_most("steady_min_eigenvalue", solved.min_eigenvalue, limit));
        }
        if let Some(limit) = th.purity_min {
            self.check(Check::at_least("steady_purity", solved.purity, limit));
        }
        if let Some(limit) = th.fidelity_min {
            match fidelity {
                Some(f) => self.check(Check::at_least("pure_state_fidelity", f, limit)),
                None => self.check(Check::equals("pure_state_available", false, true)),
            }
        }

        let summary = solved.summary(matrix_path);
        let p = self.path("steady.json");
        write_json(&p, &summary)?;
        self.report.steady = Some(SteadySection {
            summary,
            reference,
            reference_trace_distance: reference_distance,
            pure_state_fidelity: fidelity,
        });
        self.steady = Some(solved.rho_ss);
        Ok(())
    }

    fn evolve(&mut self) -> anyhow::Result<()> {
        let (params, n) = (self.cfg.params, self.cfg.n);
        let th = self.cfg.thresholds.clone();
        let time = self.cfg.time;
        let grid = time.grid();
        let mut opts = EvolveOptions::new(time.rtol).with_integrator(time.integrator);
        if let Some(s) = &self.steady {
            opts = opts.with_reference(s.clone());
        }
        let mut sections = Vec::new();
        let mut finals = Vec::new();
        for (k, tag) in self.cfg.initial_states.iter().enumerate() {
            let rho0 = DensityMatrix::from_tag(n, tag)?;
            let traj = evolve_with(&params, &rho0, &grid, &opts)?;
            let csv = format!("trajectory_{k}.csv");
            let states = format!("states_{k}.json");
            let p = self.path(&csv);
            traj.save_csv(&p)?;
            let p = self.path(&states);
            traj.save_states_json(&p)?;

            let (final_distance, monotone) = match &self.steady {
                Some(s) => {
                    let d = traj.distances_to(s)?;
                    let monotone = (1..d.len())
                        .filter(|&i| grid[i - 1] >= th.transient_time)
                        .all(|i| d[i] <= d[i - 1] + th.monotone_slack);
                    (d.last().copied(), Some(monotone))
                }
                None => (None, None),
            };
            sections.push(TrajectorySection {
                initial_state: tag.clone(),
                csv,
                states,
                max_trace_error: traj.max_trace_error(),
                min_eigenvalue: traj.min_eigenvalue(),
                final_distance_to_steady: final_distance,
                monotone_after_transient: monotone,
                accepted_steps: traj.stats.accepted,
                rejected_steps: traj.stats.rejected,
            });
            finals.push(traj.final_state().clone());
        }
        let mut pairwise = 0.0_f64;
        for i in 0..finals.len() {
            for j in i + 1..finals.len() {
                pairwise = pairwise.max(trace_distance(&finals[i], &finals[j])?);
            }
        }

        let drift = sections.iter().map(|s| s.max_trace_error).fold(0.0, f64::max);
        self.check(Check::at_most("trace_drift", drift, th.trace_drift_max));
        if let Some(limit) = th.convergence_distance_max {
            self.check(Check::at_most("pairwise_final_distance", pairwise, limit));
            if self.steady.is_some() {
                let worst = sections
                    .iter()
                    .filter_map(|s| s.final_distance_to_steady)
                    .fold(0.0, f64::max);
                self.check(Check::at_most("final_distance_to_steady", worst, limit));
                let monotone = sections.iter().all(|s| s.monotone_after_transient == Some(true));
                self.check(Check::equals("monotone_after_transient", monotone, true));
            }
        }
        self.report.evolve = Some(EvolveSection {
            times: grid.len(),
            t_max: time.t_max,
            trajectories: sections,
            max_pairwise_final_distance: pairwise,
        });
        Ok(())
    }

    fn wigner(&mut self) -> anyhow::Result<()> {
        let (params, n) = (self.cfg.params, self.cfg.n);
        let th = self.cfg.thresholds.clone();
        let wc = self.cfg.wigner.clone();
        let (rho, source) = match &wc.state {
            Some(tag) => (DensityMatrix::from_tag(n, tag)?, state_label(tag)),
            None => (
                self.steady.clone().context("no steady state to transform")?,
                "steady".to_string(),
            ),
        };
        let spec = self.cfg.grid_spec()?;
        let w = wigner_transform(&rho, &spec)?;
        if wc.write_csv {
            let p = self.path("wigner.csv");
            w.write_csv(std::io::BufWriter::new(std::fs::File::create(p)?))?;
        }
        if wc.write_binary {
            let bin = self.path("wigner.bin");
            let json = self.path("wigner.json");
            w.save_binary(&bin, &json)?;
        }

        self.check(Check::at_most("wigner_mass_error", (w.mass - 1.0).abs(), th.wigner_mass_tol));
        let dictionary = dictionary_moments(&rho, &w)?;
        self.check(Check::at_most("dictionary_residual", dictionary.max_residual, th.dictionary_max));

        let origin_value = origin_index(&spec).map(|(i, j)| w.values[[i, j]]);
        if let Some(target) = th.wigner_origin {
            match origin_value {
                Some(v) => self.check(Check::at_most("wigner_origin_error", (v - target).abs(), th.wigner_origin_tol)),
                None => self.check(Check::equals("grid_has_origin", false, true)),
            }
        }

        let pipeline = match wc.pipeline_points {
            Some(points) => {
                let a = wigner_from_characteristic(&rho, points, wc.pipeline_half_width)?;
                let b = wigner_transform(&rho, &GridSpec { x: a.x, v: a.v })?;
                let d = a.interior_max_diff(&b)?;
                self.check(Check::at_most("pipeline_max_diff", d, th.pipeline_max));
                Some(d)
            }
            None => None,
        };

        let (mut wfp_relative, mut wfp_gap, mut refinement) = (None, None, Vec::new());
        if params.potential.is_none() && wc.state.is_none() {
            let r = wfp_residual(&w, &params)?;
            self.check(Check::at_most("wfp_relative_residual", r.relative, th.wfp_relative_max));
            wfp_relative = Some(r.relative);
            wfp_gap = Some(r.stencil_gap);
            for &h in &wc.refinement_steps {
                let nx = 2 * (spec.x.max() / h).round() as usize + 1;
                let nv = 2 * (spec.v.max() / h).round() as usize + 1;
                let g = GridSpec::symmetric(spec.x.max(), nx, spec.v.max(), nv)?;
                let relative = wfp_residual(&wigner_transform(&rho, &g)?, &params)?.relative;
                refinement.push(RefinementRow { step: h, relative });
            }
            if refinement.len() >= 2 {
                let floor = th.wfp_floor_factor * refinement.iter().map(|r| r.relative).fold(f64::INFINITY, f64::min);
                let mut worst_ratio = f64::INFINITY;
                for pair in refinement.windows(2) {
                    if pair[0].relative > floor {
                        worst_ratio = worst_ratio.min(pair[0].relative / pair[1].relative);
                    }
                }
                // no step above the floor means nothing was resolved
                let ratio = if worst_ratio.is_finite() { worst_ratio } else { 0.0 };
                self.check(Check::at_least("wfp_refinement_ratio", ratio, th.wfp_min_order_ratio));
            }
        }

        let (min_value, max_value) = w
            .values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        self.report.wigner = Some(WignerSection {
            source,
            nx: spec.x.count,
            nv: spec.v.count,
            x_max: spec.x.max(),
            v_max: spec.v.max(),
            mass: w.mass,
            min_value,
            max_value,
            imag_residue: w.imag_residue,
            origin_value,
            dictionary,
            pipeline_max_diff: pipeline,
            wfp_relative,
            wfp_stencil_gap: wfp_gap,
            refinement,
        });
        Ok(())
    }

    fn lyapunov(&mut self) -> anyhow::Result<()> {
        let params = self.cfg.params;
        let th = self.cfg.thresholds.clone();
        let n = self.cfg.lyapunov_n();
        let report = certify(&params, n, self.cfg.lyapunov.vectors, self.cfg.seed)?;
        self.check(Check::at_most("drift_violation", report.drift_max_violation, th.drift_violation_max));
        self.check(Check::at_most("markov_violation", report.markov_max_violation, th.markov_violation_max));
        self.check(Check::above("halved_sharp_b_violation", report.halved_sharp_violation, 0.0));

        let mut positivity = Vec::new();
        for &[r, s] in &self.cfg.lyapunov.positivity_pairs {
            let minus = check_positivity_lemma(r, s, -1.0, n)?;
            let plus = check_positivity_lemma(r, s, 1.0, n)?;
            let name = format!("positivity_r{r}_s{s}");
            if r * s > 1.0 {
                self.check(Check::above(&name, minus.min(plus), 0.0));
            } else if r * s < 1.0 {
                self.check(Check::below(&name, minus.max(plus), 0.0));
            }
            positivity.push(PositivityRow {
                r,
                s,
                min_eigenvalue_minus: minus,
                min_eigenvalue_plus: plus,
            });
        }
        let section = LyapunovSection {
            file: "lyapunov.json".into(),
            report,
            positivity,
        };
        let p = self.path("lyapunov.json");
        write_json(&p, &section)?;
        self.report.lyapunov = Some(section);
        Ok(())
    }
}

fn state_label(tag: &StateTag) -> String {
    serde_json::to_string(tag).unwrap_or_else(|_| "state".into())
}

/// Node indices of (0, 0) when both axes contain it.
fn origin_index(spec: &GridSpec) -> Option<(usize, usize)> {
    let find = |axis: &qfp_core::UniformAxis| {
        let k = (-axis.min / axis.step).round();
        (k >= 0.0 && (k as usize) < axis.count && (axis.min + k * axis.step).abs() <= 1e-12 * axis.step.max(1.0))
            .then_some(k as usize)
    };
    Some((find(&spec.x)?, find(&spec.v)?))
}
