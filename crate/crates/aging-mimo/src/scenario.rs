//! Scenario configuration: TOML-backed experiment descriptions, sweep
//! expansion, and the built-in figure presets.
//!
//! A [`Scenario`] fully determines a run: the system dimensions, the user
//! population, which receivers to evaluate, the Monte Carlo budget and seed,
//! and an optional one-dimensional parameter sweep. [`Scenario::points`]
//! expands the sweep into concrete per-point systems and user parameter
//! sets; the simulation layer never re-reads the sweep description.

use crate::channel::{SystemConfig, UserParams};
use crate::pilot::PilotOptProblem;
use crate::receivers::ReceiverKind;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};

/// Noise scale of the built-in presets, in units of `alpha^2`.
///
/// All presets use `sigma_p^2 = sigma_d^2 = alpha^2 *` this constant, which
/// calibrates the reference operating point so that a single-user,
/// single-antenna, perfect-CSI link at pilot power 100 sees a -8 dB data
/// SNR per antenna. Defined by the formula rather than a decimal literal so
/// it is exactly reproducible.
pub fn preset_noise_scale() -> f64 {
    150.0 / 11.0 * 10f64.powf(0.8)
}

/// Path loss of every preset user, in dB.
pub const PRESET_ALPHA_DB: f64 = 90.0;

/// Per-user template from which [`UserParams`] are built.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserTemplate {
    /// Path loss in dB; the amplitude gain is `10^(-alpha_db / 20)`.
    pub alpha_db: f64,
    /// AR(1) aging coefficient, `|a| < 1`.
    pub a: f64,
    /// Stationary per-antenna fading variance.
    pub c: f64,
    /// Pilot power.
    pub p_p: f64,
}

impl UserTemplate {
    fn validate(&self, what: &str) -> Result<()> {
        if !self.alpha_db.is_finite() {
            return Err(Error::Config(format!("{what}: alpha_db must be finite")));
        }
        if !self.a.is_finite() || self.a.abs() >= 1.0 {
            return Err(Error::Config(format!(
                "{what}: aging coefficient must satisfy |a| < 1, got {}",
                self.a
            )));
        }
        if !self.c.is_finite() || self.c <= 0.0 {
            return Err(Error::Config(format!(
                "{what}: fading variance must be positive, got {}",
                self.c
            )));
        }
        if !self.p_p.is_finite() || self.p_p <= 0.0 {
            return Err(Error::Config(format!(
                "{what}: pilot power must be positive, got {}",
                self.p_p
            )));
        }
        Ok(())
    }

    fn build(&self, cfg: &SystemConfig) -> Result<UserParams> {
        UserParams::from_pathloss_db(self.alpha_db, self.a, self.c, self.p_p, cfg)
    }
}

/// Which scenario parameter a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVar {
    /// Pilot power of every user.
    #[serde(rename = "P_p")]
    PilotPower,
    /// AR(1) aging coefficient of every user.
    #[serde(rename = "a")]
    Aging,
    /// Number of users (requires the shared `[user]` template).
    #[serde(rename = "K")]
    Users,
    /// Number of receive antennas.
    #[serde(rename = "N_r")]
    Antennas,
}

impl SweepVar {
    /// Column label used in result rows.
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVar::PilotPower => "P_p",
            SweepVar::Aging => "a",
            SweepVar::Users => "K",
            SweepVar::Antennas => "N_r",
        }
    }
}

/// One-dimensional parameter sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Swept parameter.
    pub var: SweepVar,
    /// Values visited, in order.
    pub values: Vec<f64>,
    /// For user-count sweeps only: scale the antenna count as
    /// `n_r = round(n_r_per_k * K)` at each point.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_r_per_k: Option<f64>,
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    /// System dimensions, budget, and noise levels.
    pub system: SystemConfig,
    /// Shared template applied to all `k` users. Exactly one of `user` and
    /// `users` must be present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub user: Option<UserTemplate>,
    /// Per-user templates; the list length must equal `system.k`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub users: Option<Vec<UserTemplate>>,
    /// Receivers to evaluate, in output order.
    pub receivers: Vec<ReceiverKind>,
    /// Aging coefficient the receivers assume when filtering, if it differs
    /// from the true one (mismatch studies). `None` means matched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assumed_a: Option<f64>,
    /// Monte Carlo trials per sweep point; 0 selects analysis-only output.
    #[serde(default)]
    pub trials: u64,
    /// Master seed for the deterministic per-trial RNG streams.
    #[serde(default)]
    pub master_seed: u64,
    /// Optional parameter sweep.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    /// Also collect per-receiver SINR distribution quantiles.
    #[serde(default)]
    pub cdf: bool,
    /// Skip Monte Carlo entirely and emit deterministic-equivalent rows.
    #[serde(default)]
    pub analysis_only: bool,
}

/// One concrete point of an expanded scenario.
#[derive(Debug, Clone)]
pub struct SweepPoint {
    /// Sweep column label (`"none"` when nothing is swept).
    pub sweep_var: String,
    /// Swept value at this point (0 when nothing is swept).
    pub sweep_value: f64,
    /// Human-readable point label for diagnostics.
    pub label: String,
    /// System configuration at this point.
    pub system: SystemConfig,
    /// Fully built per-user parameters; empty when `budget_error` is set.
    pub users: Vec<UserParams>,
    /// Mismatched aging coefficient assumed by the receivers, if any.
    pub assumed_a: Option<f64>,
    /// Error-marker name when the point's pilot power is infeasible under
    /// the energy budget (pilot-power sweeps only).
    pub budget_error: Option<String>,
}

impl Scenario {
    /// Parses a scenario from TOML text. Unknown keys are rejected.
    ///
    /// # Errors
    ///
    /// [`Error::Config`] on syntax errors, unknown keys, or semantic
    /// validation failures.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let scenario: Scenario =
            toml::from_str(text).map_err(|e| Error::Config(format!("invalid scenario: {e}")))?;
        scenario.validate()?;
        Ok(scenario)
    }

    /// Reads and parses a scenario file.
    ///
    /// # Errors
    ///
    /// [`Error::Io`] when the file cannot be read, otherwise as
    /// [`Scenario::from_toml_str`].
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    /// Whether this run produces deterministic-equivalent rows only.
    pub fn is_analysis_only(&self) -> bool {
        self.analysis_only || self.trials == 0
    }

    /// Semantic validation beyond what deserialization enforces.
    ///
    /// # Errors
    ///
    /// [`Error::Config`] describing the first violated constraint.
    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        match (&self.user, &self.users) {
            (Some(user), None) => user.validate("user")?,
            (None, Some(users)) => {
                if users.len() != self.system.k as usize {
                    return Err(Error::Config(format!(
                        "users list has {} entries but the system has k = {}",
                        users.len(),
                        self.system.k
                    )));
                }
                for (i, u) in users.iter().enumerate() {
                    u.validate(&format!("users[{i}]"))?;
                }
            }
            (Some(_), Some(_)) => {
                return Err(Error::Config(
                    "specify either a shared [user] template or a [[users]] list, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::Config(
                    "a shared [user] template or a [[users]] list is required".into(),
                ))
            }
        }
        if self.receivers.is_empty() {
            return Err(Error::Config("at least one receiver is required".into()));
        }
        if let Some(a) = self.assumed_a {
            if !a.is_finite() || a.abs() >= 1.0 {
                return Err(Error::Config(format!(
                    "assumed_a must satisfy |a| < 1, got {a}"
                )));
            }
        }
        if let Some(sweep) = &self.sweep {
            self.validate_sweep(sweep)?;
        }
        Ok(())
    }

    fn validate_sweep(&self, sweep: &SweepSpec) -> Result<()> {
        if sweep.values.is_empty() {
            return Err(Error::Config("sweep.values must not be empty".into()));
        }
        if sweep.n_r_per_k.is_some() && sweep.var != SweepVar::Users {
            return Err(Error::Config(
                "sweep.n_r_per_k only applies to user-count sweeps".into(),
            ));
        }
        for &v in &sweep.values {
            if !v.is_finite() {
                return Err(Error::Config(format!("sweep value {v} is not finite")));
            }
            match sweep.var {
                SweepVar::PilotPower => {
                    if v <= 0.0 {
                        return Err(Error::Config(format!(
                            "swept pilot power must be positive, got {v}"
                        )));
                    }
                }
                SweepVar::Aging => {
                    if v.abs() >= 1.0 {
                        return Err(Error::Config(format!(
                            "swept aging coefficient must satisfy |a| < 1, got {v}"
                        )));
                    }
                }
                SweepVar::Users | SweepVar::Antennas => {
                    if v.fract() != 0.0 || v < 1.0 || v > u32::MAX as f64 {
                        return Err(Error::Config(format!(
                            "swept {} must be a positive integer, got {v}",
                            sweep.var.as_str()
                        )));
                    }
                }
            }
        }
        if sweep.var == SweepVar::Users {
            if self.users.is_some() {
                return Err(Error::Config(
                    "user-count sweeps require the shared [user] template".into(),
                ));
            }
            if let Some(r) = sweep.n_r_per_k {
                if !r.is_finite() || r <= 0.0 {
                    return Err(Error::Config(format!(
                        "sweep.n_r_per_k must be positive, got {r}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Non-fatal configuration observations, one message each.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = self.system.warnings();
        if self.cdf && self.is_analysis_only() {
            out.push(
                "cdf output requested but the run is analysis-only; no samples will be collected"
                    .into(),
            );
        }
        out
    }

    fn templates(&self) -> Vec<UserTemplate> {
        match (&self.user, &self.users) {
            (Some(user), None) => vec![*user; self.system.k as usize],
            (None, Some(users)) => users.clone(),
            // validate() rejects the remaining shapes.
            _ => Vec::new(),
        }
    }

    fn build_point(
        &self,
        sweep_var: &str,
        sweep_value: f64,
        label: String,
        system: SystemConfig,
        templates: &[UserTemplate],
        infeasible_is_marker: bool,
    ) -> Result<SweepPoint> {
        let mut users = Vec::with_capacity(templates.len());
        for t in templates {
            match t.build(&system) {
                Ok(u) => users.push(u),
                Err(e @ Error::InfeasibleBudget(_)) if infeasible_is_marker => {
                    return Ok(SweepPoint {
                        sweep_var: sweep_var.into(),
                        sweep_value,
                        label,
                        system,
                        users: Vec::new(),
                        assumed_a: self.assumed_a,
                        budget_error: Some(e.name().into()),
                    });
                }
                Err(e) => return Err(e),
            }
        }
        Ok(SweepPoint {
            sweep_var: sweep_var.into(),
            sweep_value,
            label,
            system,
            users,
            assumed_a: self.assumed_a,
            budget_error: None,
        })
    }

    /// Expands the scenario into concrete per-point configurations.
    ///
    /// Pilot-power sweep points that violate the energy budget are returned
    /// with `budget_error` set rather than failing the whole run; a
    /// non-swept infeasible configuration is an error.
    ///
    /// # Errors
    ///
    /// [`Error::Config`] / [`Error::InfeasibleBudget`] on invalid
    /// configurations.
    pub fn points(&self) -> Result<Vec<SweepPoint>> {
        self.validate()?;
        let templates = self.templates();
        let Some(sweep) = &self.sweep else {
            let point = self.build_point(
                "none",
                0.0,
                "single point".into(),
                self.system,
                &templates,
                false,
            )?;
            return Ok(vec![point]);
        };
        let mut points = Vec::with_capacity(sweep.values.len());
        for &value in &sweep.values {
            let label = format!("{}={}", sweep.var.as_str(), value);
            let point = match sweep.var {
                SweepVar::PilotPower => {
                    let templates: Vec<UserTemplate> = templates
                        .iter()
                        .map(|t| UserTemplate { p_p: value, ..*t })
                        .collect();
                    self.build_point(
                        sweep.var.as_str(),
                        value,
                        label,
                        self.system,
                        &templates,
                        true,
                    )?
                }
                SweepVar::Aging => {
                    let templates: Vec<UserTemplate> = templates
                        .iter()
                        .map(|t| UserTemplate { a: value, ..*t })
                        .collect();
                    self.build_point(
                        sweep.var.as_str(),
                        value,
                        label,
                        self.system,
                        &templates,
                        false,
                    )?
                }
                SweepVar::Users => {
                    let k = value as u32;
                    let mut system = SystemConfig { k, ..self.system };
                    if let Some(r) = sweep.n_r_per_k {
                        let n_r = (r * k as f64).round();
                        if n_r < 1.0 || n_r > u32::MAX as f64 {
                            return Err(Error::Config(format!(
                                "n_r_per_k = {r} gives an invalid antenna count at K = {k}"
                            )));
                        }
                        system.n_r = n_r as u32;
                    }
                    let template = self.user.expect("validated: shared template");
                    let templates = vec![template; k as usize];
                    self.build_point(sweep.var.as_str(), value, label, system, &templates, false)?
                }
                SweepVar::Antennas => {
                    let system = SystemConfig {
                        n_r: value as u32,
                        ..self.system
                    };
                    self.build_point(sweep.var.as_str(), value, label, system, &templates, false)?
                }
            };
            points.push(point);
        }
        Ok(points)
    }
}

/// A named scenario within a figure preset.
#[derive(Debug, Clone)]
pub struct PresetRun {
    /// Filename-safe run identifier, unique within the preset.
    pub slug: String,
    /// The scenario to run.
    pub scenario: Scenario,
}

/// What a figure preset computes.
#[derive(Debug, Clone)]
pub enum PresetKind {
    /// One or more Monte Carlo / analysis scenarios.
    Scenarios(Vec<PresetRun>),
    /// Optimal pilot power as a function of aging, one curve per user count.
    PilotOptSweep {
        /// Aging grid.
        a_values: Vec<f64>,
        /// User counts, one output curve each.
        k_values: Vec<u32>,
    },
    /// Symmetric deterministic-equivalent SINR at the optimal pilot power
    /// as a function of aging, one curve per (users, antennas) combination.
    PilotOptSinr {
        /// Aging grid.
        a_values: Vec<f64>,
        /// `(k, n_r)` combinations, one output curve each.
        combos: Vec<(u32, u32)>,
    },
}

/// A built-in figure preset.
#[derive(Debug, Clone)]
pub struct FigurePreset {
    /// Preset name (`fig1` .. `fig9`).
    pub name: String,
    /// One-line description of what the figure shows.
    pub note: String,
    /// The work the preset performs.
    pub kind: PresetKind,
}

fn preset_system(k: u32, n_r: u32) -> SystemConfig {
    let alpha = 10f64.powf(-PRESET_ALPHA_DB / 20.0);
    let noise = alpha * alpha * preset_noise_scale();
    SystemConfig {
        k,
        n_r,
        tau_p: 1,
        tau_d: 11,
        p_tot: 250.0,
        sigma_p2: noise,
        sigma_d2: noise,
    }
}

fn preset_user(a: f64, p_p: f64) -> UserTemplate {
    UserTemplate {
        alpha_db: PRESET_ALPHA_DB,
        a,
        c: 1.0,
        p_p,
    }
}

/// The preset pilot optimization instance for `k` symmetric users at aging
/// coefficient `a` (used by the pilot-optimization figures and CLI).
pub fn preset_pilot_problem(k: u32, a: f64) -> PilotOptProblem {
    let system = preset_system(k, 1);
    let alpha = 10f64.powf(-PRESET_ALPHA_DB / 20.0);
    PilotOptProblem {
        k,
        tau_p: system.tau_p,
        tau_d: system.tau_d,
        p_tot: system.p_tot,
        alpha,
        a,
        c: 1.0,
        sigma_p2: system.sigma_p2,
        sigma_d2: system.sigma_d2,
    }
}

fn preset_a_grid() -> Vec<f64> {
    (0..20).map(|i| i as f64 * 0.05).collect()
}

fn range_f64(start: f64, step: f64, end_inclusive: f64) -> Vec<f64> {
    let n = ((end_inclusive - start) / step).round() as usize;
    (0..=n).map(|i| start + step * i as f64).collect()
}

/// Looks up a built-in figure preset by name (`fig1` through `fig9`).
///
/// # Errors
///
/// [`Error::UnknownPreset`] for any other name.
pub fn figure_preset(name: &str) -> Result<FigurePreset> {
    let scenario = |system, user, receivers: &[ReceiverKind], seed: u64| Scenario {
        system,
        user: Some(user),
        users: None,
        receivers: receivers.to_vec(),
        assumed_a: None,
        trials: 10_000,
        master_seed: seed,
        sweep: None,
        cdf: false,
        analysis_only: false,
    };
    let run = |slug: &str, scenario| PresetRun {
        slug: slug.into(),
        scenario,
    };
    let preset = |note: &str, kind| FigurePreset {
        name: name.into(),
        note: note.into(),
        kind,
    };
    match name {
        "fig1" => {
            let mut sc = scenario(
                preset_system(5, 100),
                preset_user(0.9, 100.0),
                &ReceiverKind::ALL,
                1001,
            );
            sc.cdf = true;
            Ok(preset(
                "SINR distribution of all receivers at the reference operating point",
                PresetKind::Scenarios(vec![run("main", sc)]),
            ))
        }
        "fig2" => {
            let mut sc = scenario(
                preset_system(5, 100),
                preset_user(0.9, 100.0),
                &[
                    ReceiverKind::Proposed,
                    ReceiverKind::ArAwareCov,
                    ReceiverKind::ConventionalInst,
                ],
                1002,
            );
            sc.sweep = Some(SweepSpec {
                var: SweepVar::PilotPower,
                values: range_f64(40.0, 20.0, 240.0),
                n_r_per_k: None,
            });
            Ok(preset(
                "average SINR vs pilot power, Monte Carlo against the deterministic equivalent",
                PresetKind::Scenarios(vec![run("main", sc)]),
            ))
        }
        "fig3" => {
            let mut sc = scenario(
                preset_system(5, 100),
                preset_user(0.0, 100.0),
                &[
                    ReceiverKind::Proposed,
                    ReceiverKind::ConventionalInst,
                    ReceiverKind::ArAwareCov,
                    ReceiverKind::ConventionalCov,
                ],
                1003,
            );
            let mut values = range_f64(0.0, 0.1, 0.9);
            values.push(0.95);
            sc.sweep = Some(SweepSpec {
                var: SweepVar::Aging,
                values,
                n_r_per_k: None,
            });
            Ok(preset(
                "average SINR vs aging coefficient for the main receivers",
                PresetKind::Scenarios(vec![run("main", sc)]),
            ))
        }
        "fig4" => Ok(preset(
            "optimal pilot power vs aging coefficient, one curve per user count",
            PresetKind::PilotOptSweep {
                a_values: preset_a_grid(),
                k_values: vec![1, 3, 10, 20, 50],
            },
        )),
        "fig5" => Ok(preset(
            "best achievable average SINR vs aging coefficient at the optimal pilot power",
            PresetKind::PilotOptSinr {
                a_values: preset_a_grid(),
                combos: vec![(10, 20), (50, 100)],
            },
        )),
        "fig6" => {
            let mut runs = Vec::new();
            for &a in &[0.0, 0.5, 0.95] {
                for &factor in &[2u32, 3] {
                    let mut sc = scenario(
                        preset_system(5, 10),
                        preset_user(a, 100.0),
                        &[ReceiverKind::Proposed],
                        1006,
                    );
                    sc.sweep = Some(SweepSpec {
                        var: SweepVar::Users,
                        values: vec![5.0, 10.0, 20.0],
                        n_r_per_k: Some(factor as f64),
                    });
                    runs.push(run(&format!("a{:03}_x{factor}", (a * 100.0) as u32), sc));
                }
            }
            Ok(preset(
                "average SINR when antennas scale with the user count",
                PresetKind::Scenarios(runs),
            ))
        }
        "fig7" => {
            let mut runs = Vec::new();
            for i in 0..10 {
                let assumed = i as f64 * 0.1;
                let mut sc = scenario(
                    preset_system(5, 20),
                    preset_user(0.0, 100.0),
                    &[ReceiverKind::Proposed, ReceiverKind::ConventionalInst],
                    1007,
                );
                sc.assumed_a = Some(assumed);
                sc.sweep = Some(SweepSpec {
                    var: SweepVar::Aging,
                    values: range_f64(0.0, 0.1, 0.9),
                    n_r_per_k: None,
                });
                runs.push(run(&format!("ahat{:02}", i), sc));
            }
            Ok(preset(
                "sensitivity of the receivers to a mismatched aging coefficient",
                PresetKind::Scenarios(runs),
            ))
        }
        "fig8" | "fig9" => {
            let a = if name == "fig8" { 0.0 } else { 0.95 };
            let seed = if name == "fig8" { 1008 } else { 1009 };
            let mut runs = Vec::new();
            for &k in &[1u32, 10] {
                for &n_r in &[10u32, 50, 100] {
                    let mut sc = scenario(
                        preset_system(k, n_r),
                        preset_user(a, 100.0),
                        &[ReceiverKind::Proposed],
                        seed,
                    );
                    sc.trials = 0;
                    sc.analysis_only = true;
                    sc.sweep = Some(SweepSpec {
                        var: SweepVar::PilotPower,
                        values: range_f64(10.0, 10.0, 240.0),
                        n_r_per_k: None,
                    });
                    runs.push(run(&format!("k{:02}_nr{:03}", k, n_r), sc));
                }
            }
            Ok(preset(
                if name == "fig8" {
                    "deterministic-equivalent SINR vs pilot power for a block-static channel"
                } else {
                    "deterministic-equivalent SINR vs pilot power under fast aging"
                },
                PresetKind::Scenarios(runs),
            ))
        }
        other => Err(Error::UnknownPreset(format!(
            "unknown figure preset '{other}' (expected fig1 through fig9)"
        ))),
    }
}
