//! Experiment configuration: a TOML file with the tables `[problem]`,
//! `[grid]`, `[coefficients]`, `[diffusion]`, `[time]`, `[initial]`, `[run]`,
//! `[monitors]`, `[regularity]` and `[outputs]`. Only `[problem]` is
//! required; see the README for the grammar and defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::covariance::{CovarianceKind, CovarianceModel};
use crate::noise::GridSpec;
use crate::solvability::{check_admissible, gamma_star, AdmissibilityReport, ProblemSpec};
use crate::solver::{
    check_assumptions, AssumptionReport, BesselMonitor, CoefficientPreset, Coefficients, DiffusionForm,
    DiffusionSpec, Field, NamedLipschitz, OperatorForm, DEFAULT_TRUNCATION,
};

/// Fraction of `γ*` used when `problem.gamma` is omitted.
pub const DEFAULT_GAMMA_FRACTION: f64 = 0.9;
/// `γ` used when omitted and no condition applies at any `γ`.
pub const FALLBACK_GAMMA: f64 = 0.25;
/// `p = P_FACTOR·(d+2)/γ` when `problem.p` is omitted.
pub const DEFAULT_P_FACTOR: f64 = 2.0;
/// Records per path when `monitors.record_every` is omitted.
pub const DEFAULT_RECORDS: usize = 100;

fn default_one() -> f64 {
    1.0
}
fn default_paths() -> usize {
    1
}
fn default_every() -> usize {
    1
}
fn default_substeps() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_white() -> CovarianceKind {
    CovarianceKind::White
}
fn default_n() -> usize {
    256
}
fn default_length() -> f64 {
    10.0
}
fn default_dt() -> f64 {
    1e-4
}
fn default_horizon() -> f64 {
    0.1
}
fn default_truncation() -> f64 {
    DEFAULT_TRUNCATION
}
fn default_multiples() -> Vec<f64> {
    (1..=10).map(|k| (1u32 << k) as f64).collect()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    problem: RawProblem,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    coefficients: RawCoefficients,
    #[serde(default)]
    diffusion: RawDiffusion,
    #[serde(default)]
    time: RawTime,
    #[serde(default)]
    initial: InitialCondition,
    #[serde(default)]
    run: RawRun,
    #[serde(default)]
    monitors: RawMonitors,
    #[serde(default)]
    regularity: RegularitySettings,
    #[serde(default)]
    outputs: OutputSettings,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    d: usize,
    #[serde(default)]
    lambda: f64,
    #[serde(default = "default_white")]
    covariance: CovarianceKind,
    gamma: Option<f64>,
    p: Option<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    d: Option<usize>,
    #[serde(default = "default_n")]
    n: usize,
    #[serde(default = "default_length")]
    length: f64,
}

impl Default for RawGrid {
    fn default() -> Self {
        Self {
            d: None,
            n: default_n(),
            length: default_length(),
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCoefficients {
    preset: Option<CoefficientPreset>,
    xi: Option<f64>,
    form: Option<OperatorForm>,
    inline: Option<InlineCoefficients>,
}

/// Coefficients given term by term. `a` is row-major `d×d` and defaults to
/// the identity; `b` defaults to zero, `c` to zero and `xi` to one.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct InlineCoefficients {
    #[serde(default)]
    a: Vec<Field>,
    #[serde(default)]
    b: Vec<Field>,
    c: Option<Field>,
    xi: Option<Field>,
    kappa0: f64,
    k: f64,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum RawDiffusionForm {
    #[default]
    TruncatedPower,
    LipschitzH,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDiffusion {
    #[serde(default)]
    form: RawDiffusionForm,
    #[serde(default = "default_true")]
    truncate: bool,
    #[serde(default = "default_truncation")]
    truncation: f64,
    h: Option<NamedLipschitz>,
    #[serde(default = "default_one")]
    constant: f64,
}

impl Default for RawDiffusion {
    fn default() -> Self {
        Self {
            form: RawDiffusionForm::TruncatedPower,
            truncate: true,
            truncation: DEFAULT_TRUNCATION,
            h: None,
            constant: 1.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    #[serde(default = "default_dt")]
    dt: f64,
    #[serde(default = "default_horizon")]
    horizon: f64,
}

impl Default for RawTime {
    fn default() -> Self {
        Self {
            dt: default_dt(),
            horizon: default_horizon(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    #[serde(default = "default_paths")]
    paths: usize,
    #[serde(default)]
    seed: u64,
    #[serde(default = "default_substeps")]
    noise_substeps: usize,
}

impl Default for RawRun {
    fn default() -> Self {
        Self {
            paths: 1,
            seed: 0,
            noise_substeps: 1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMonitors {
    record_every: Option<usize>,
    #[serde(default = "default_multiples")]
    threshold_multiples: Vec<f64>,
    bessel: Option<BesselMonitor>,
    #[serde(default)]
    snapshot_times: Vec<f64>,
    probes: Option<ProbeSettings>,
}

impl Default for RawMonitors {
    fn default() -> Self {
        Self {
            record_every: None,
            threshold_multiples: default_multiples(),
            bessel: None,
            snapshot_times: Vec::new(),
            probes: None,
        }
    }
}

/// Initial field `u₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `height·(1 − |x−center|²/width²)²` inside the ball, zero outside.
    Bump {
        #[serde(default = "default_one")]
        height: f64,
        #[serde(default = "default_one")]
        width: f64,
        /// Defaults to the origin.
        #[serde(default)]
        center: Vec<f64>,
    },
    Constant { value: f64 },
    /// `constant + amplitude·sin(2π m·(x + L/2)/L)`.
    Sine {
        #[serde(default)]
        constant: f64,
        amplitude: f64,
        mode: Vec<i64>,
    },
    Zero,
}

impl Default for InitialCondition {
    fn default() -> Self {
        InitialCondition::Bump {
            height: 1.0,
            width: 1.0,
            center: Vec::new(),
        }
    }
}

impl InitialCondition {
    pub fn sample(&self, grid: &GridSpec) -> Vec<f64> {
        let d = grid.d;
        (0..grid.cells())
            .map(|flat| {
                let p = grid.point(flat);
                let x = &p[..d];
                match self {
                    InitialCondition::Bump { height, width, center } => {
                        let r2: f64 = (0..d)
                            .map(|i| {
                                let c = center.get(i).copied().unwrap_or(0.0);
                                (x[i] - c).powi(2)
                            })
                            .sum();
                        let s = 1.0 - r2 / (width * width);
                        if s > 0.0 {
                            height * s * s
                        } else {
                            0.0
                        }
                    }
                    InitialCondition::Constant { value } => *value,
                    InitialCondition::Sine { constant, amplitude, mode } => {
                        let phase: f64 = (0..d)
                            .map(|i| {
                                2.0 * std::f64::consts::PI * mode[i] as f64 * (x[i] + grid.length / 2.0) / grid.length
                            })
                            .sum();
                        constant + amplitude * phase.sin()
                    }
                    InitialCondition::Zero => 0.0,
                }
            })
            .collect()
    }

    fn validate(&self, d: usize) -> Result<(), (String, String)> {
        match self {
            InitialCondition::Bump { height, width, center } => {
                if !(height.is_finite() && *width > 0.0 && width.is_finite()) {
                    return Err(("initial.width".into(), "bump needs a finite height and a positive width".into()));
                }
                if !center.is_empty() && center.len() != d {
                    return Err(("initial.center".into(), format!("center has {} entries but d = {d}", center.len())));
                }
            }
            InitialCondition::Constant { value } if !value.is_finite() => {
                return Err(("initial.value".into(), "value must be finite".into()));
            }
            InitialCondition::Sine { constant, amplitude, mode } => {
                if mode.len() != d {
                    return Err(("initial.mode".into(), format!("mode has {} entries but d = {d}", mode.len())));
                }
                if !(constant.is_finite() && amplitude.is_finite()) {
                    return Err(("initial.amplitude".into(), "constant and amplitude must be finite".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Probe points for temporal increments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSettings {
    /// Number of grid points, spread evenly over the flat index range.
    pub count: usize,
    #[serde(default = "default_every")]
    pub every: usize,
    #[serde(default)]
    pub start_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonitorSettings {
    pub record_every: usize,
    /// Thresholds as multiples of `‖u₀‖_∞` (of 1 when `u₀ ≡ 0`).
    pub threshold_multiples: Vec<f64>,
    pub bessel: Option<BesselMonitor>,
    pub snapshot_times: Vec<f64>,
    pub probes: Option<ProbeSettings>,
}

fn default_epsilon() -> f64 {
    0.05
}
fn default_tolerance() -> f64 {
    0.02
}
fn default_q() -> f64 {
    2.0
}
fn default_lag_count() -> usize {
    10
}
fn default_confidence() -> f64 {
    0.95
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularitySettings {
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_lag_count")]
    pub lag_count: usize,
    #[serde(default = "default_confidence")]
    pub confidence: f64,
}

impl Default for RegularitySettings {
    fn default() -> Self {
        Self {
            epsilon: default_epsilon(),
            tolerance: default_tolerance(),
            q: default_q(),
            lag_count: default_lag_count(),
            confidence: default_confidence(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordFormat {
    Csv,
    Json,
}

fn default_formats() -> Vec<RecordFormat> {
    vec![RecordFormat::Csv, RecordFormat::Json]
}
fn default_dir() -> String {
    "out".into()
}

/// The output directory is not part of the echoed configuration so that
/// artifacts do not depend on where they are written.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    #[serde(default = "default_dir", skip_serializing)]
    pub dir: String,
    /// Per-path record formats.
    #[serde(default = "default_formats")]
    pub formats: Vec<RecordFormat>,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: default_dir(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionStatus {
    pub satisfied: bool,
    pub report: Option<AssumptionReport>,
    pub violation: Option<String>,
    /// Times at which the coefficients were checked.
    pub times: Vec<f64>,
}

/// A validated configuration with its admissibility and coefficient reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub coefficients: Coefficients,
    pub diffusion: DiffusionSpec,
    pub dt: f64,
    pub horizon: f64,
    pub initial: InitialCondition,
    pub paths: usize,
    pub seed: u64,
    pub noise_substeps: usize,
    pub monitors: MonitorSettings,
    pub regularity: RegularitySettings,
    pub outputs: OutputSettings,
    pub admissibility: AdmissibilityReport,
    pub assumptions: AssumptionStatus,
    /// Fields filled by defaults that depend on other fields.
    pub derived_defaults: Vec<String>,
}

impl ExperimentConfig {
    pub fn steps(&self) -> usize {
        (self.horizon / self.dt).round() as usize
    }

    /// Why the run should not proceed without `--force`.
    pub fn rejection(&self) -> Option<String> {
        let mut reasons = Vec::new();
        if !self.admissibility.admissible {
            reasons.push(format!("not admissible: {}", self.admissibility.rejection_reason));
        }
        if let Some(v) = &self.assumptions.violation {
            reasons.push(format!("coefficient assumptions: {v}"));
        }
        (!reasons.is_empty()).then(|| reasons.join("; "))
    }

    /// Re-run admissibility and assumption checks after a field was changed.
    pub fn refresh_reports(&mut self) -> Result<(), HarnessError> {
        self.admissibility = check_admissible(&self.problem).map_err(|e| HarnessError::Config {
            path: String::new(),
            line: None,
            fields: vec!["problem".into()],
            message: e.to_string(),
        })?;
        self.assumptions = assumption_status(&self.coefficients, &self.grid, self.horizon);
        Ok(())
    }
}

fn assumption_status(coeffs: &Coefficients, grid: &GridSpec, horizon: f64) -> AssumptionStatus {
    let times: Vec<f64> = (0..=4).map(|k| horizon * k as f64 / 4.0).collect();
    match check_assumptions(coeffs, grid, &times) {
        Ok(report) => AssumptionStatus {
            satisfied: true,
            report: Some(report),
            violation: None,
            times,
        },
        Err(e) => AssumptionStatus {
            satisfied: false,
            report: None,
            violation: Some(e.to_string()),
            times,
        },
    }
}

/// `γ` and `p` used when the configuration omits them.
pub fn default_gamma_p(d: usize, lambda: f64, model: &CovarianceModel, gamma: Option<f64>) -> (f64, f64) {
    let gamma = gamma.unwrap_or_else(|| match gamma_star(d, lambda, model) {
        Some(star) => DEFAULT_GAMMA_FRACTION * star,
        None => FALLBACK_GAMMA,
    });
    (gamma, DEFAULT_P_FACTOR * (d as f64 + 2.0) / gamma)
}

/// 1-based line and column of a byte offset.
pub fn line_column(source: &str, offset: usize) -> (usize, usize) {
    let offset = offset.min(source.len());
    let before = &source[..offset];
    let line = before.matches('\n').count() + 1;
    let column = before.rfind('\n').map_or(offset, |i| offset - i - 1) + 1;
    (line, column)
}

/// Line of `key` inside `[table]`, or of the table header when the key is
/// absent.
pub fn locate_key(source: &str, table: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header_line = None;
    for (i, raw) in source.lines().enumerate() {
        let line = raw.trim();
        if line.starts_with('[') {
            current = line.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            if current == table {
                header_line = Some(i + 1);
            }
            continue;
        }
        if current == table {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(i + 1);
                }
            }
        }
    }
    header_line
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, HarnessError> {
    let source = std::fs::read_to_string(path).map_err(|e| HarnessError::Config {
        path: path.display().to_string(),
        line: None,
        fields: Vec::new(),
        message: format!("cannot read configuration: {e}"),
    })?;
    parse_config(&source, &path.display().to_string())
}

pub fn parse_config(source: &str, label: &str) -> Result<ExperimentConfig, HarnessError> {
    let raw: RawConfig = toml::from_str(source).map_err(|e| {
        let (line, column) = e.span().map_or((1, 1), |s| line_column(source, s.start));
        HarnessError::Parse {
            path: label.to_string(),
            line,
            column,
            message: e.message().trim().to_string(),
        }
    })?;
    Resolver { source, label }.resolve(raw)
}

struct Resolver<'a> {
    source: &'a str,
    label: &'a str,
}

impl Resolver<'_> {
    /// Inconsistency naming `fields` (dotted `table.key`); the line is that
    /// of the first field.
    fn error(&self, fields: &[&str], message: impl Into<String>) -> HarnessError {
        let line = fields.first().and_then(|f| {
            let (table, key) = f.rsplit_once('.').unwrap_or((f, ""));
            locate_key(self.source, table, key)
        });
        HarnessError::Config {
            path: self.label.to_string(),
            line,
            fields: fields.iter().map(|f| f.to_string()).collect(),
            message: message.into(),
        }
    }

    fn resolve(&self, raw: RawConfig) -> Result<ExperimentConfig, HarnessError> {
        let d = raw.problem.d;
        let mut derived_defaults = Vec::new();
        if !(1..=3).contains(&d) {
            return Err(self.error(&["problem.d"], format!("dimension must be 1, 2 or 3 (got {d})")));
        }
        if let Some(gd) = raw.grid.d {
            if gd != d {
                return Err(self.error(&["grid.d", "problem.d"], format!("grid dimension {gd} differs from problem dimension {d}")));
            }
        }
        let model = CovarianceModel::new(raw.problem.covariance, d)
            .map_err(|e| self.error(&["problem.covariance", "problem.d"], e.to_string()))?;
        if !(raw.problem.lambda >= 0.0 && raw.problem.lambda.is_finite()) {
            return Err(self.error(&["problem.lambda"], format!("λ must be finite and ≥ 0 (got {})", raw.problem.lambda)));
        }
        let (gamma, p_default) = default_gamma_p(d, raw.problem.lambda, &model, raw.problem.gamma);
        if raw.problem.gamma.is_none() {
            derived_defaults.push("problem.gamma".into());
        }
        let p = match raw.problem.p {
            Some(p) => p,
            None => {
                derived_defaults.push("problem.p".into());
                p_default
            }
        };
        let problem = ProblemSpec {
            d,
            lambda: raw.problem.lambda,
            model,
            gamma,
            p,
        };
        problem
            .validate()
            .map_err(|e| self.error(&["problem.gamma", "problem.p"], e.to_string()))?;
        let admissibility =
            check_admissible(&problem).map_err(|e| self.error(&["problem"], e.to_string()))?;

        let grid = GridSpec::new(d, raw.grid.n, raw.grid.length)
            .map_err(|e| self.error(&["grid.n", "grid.length"], e.to_string()))?;

        let coefficients = self.coefficients(&raw.coefficients, d, grid.length)?;

        let diffusion = DiffusionSpec {
            lambda: raw.problem.lambda,
            truncation: raw.diffusion.truncate.then_some(raw.diffusion.truncation),
            form: match raw.diffusion.form {
                RawDiffusionForm::TruncatedPower => DiffusionForm::TruncatedPower,
                RawDiffusionForm::LipschitzH => DiffusionForm::LipschitzH {
                    h: raw
                        .diffusion
                        .h
                        .ok_or_else(|| self.error(&["diffusion.h", "diffusion.form"], "lipschitz_h needs h = \"linear\", \"sine\" or \"tanh\""))?,
                    constant: raw.diffusion.constant,
                },
            },
        };
        diffusion
            .validate()
            .map_err(|e| self.error(&["diffusion.truncation", "diffusion.constant"], e.to_string()))?;

        let (dt, horizon) = (raw.time.dt, raw.time.horizon);
        if !(dt > 0.0 && horizon.is_finite() && dt < horizon) {
            return Err(self.error(&["time.dt", "time.horizon"], format!("need 0 < dt < horizon (got dt = {dt}, horizon = {horizon})")));
        }
        let steps = (horizon / dt).round();
        if (steps * dt - horizon).abs() > 1e-9 * horizon {
            return Err(self.error(&["time.horizon", "time.dt"], format!("horizon {horizon} is not a whole number of steps of {dt}")));
        }
        let steps = steps as usize;

        raw.initial
            .validate(d)
            .map_err(|(field, msg)| self.error(&[field.as_str()], msg))?;
        if raw.run.paths == 0 {
            return Err(self.error(&["run.paths"], "paths must be at least 1"));
        }
        if raw.run.noise_substeps == 0 {
            return Err(self.error(&["run.noise_substeps"], "noise_substeps must be at least 1"));
        }

        let monitors = self.monitors(raw.monitors, dt, horizon, steps, &grid, &mut derived_defaults)?;

        let reg = &raw.regularity;
        if !(reg.epsilon > 0.0 && reg.tolerance >= 0.0 && reg.q > 0.0 && reg.confidence > 0.0 && reg.confidence < 1.0) {
            return Err(self.error(
                &["regularity.epsilon", "regularity.tolerance", "regularity.q", "regularity.confidence"],
                "need epsilon > 0, tolerance ≥ 0, q > 0 and confidence in (0, 1)",
            ));
        }
        if reg.lag_count < crate::regularity::MIN_LAGS {
            return Err(self.error(&["regularity.lag_count"], format!("need at least {} lags", crate::regularity::MIN_LAGS)));
        }
        if raw.outputs.formats.is_empty() {
            return Err(self.error(&["outputs.formats"], "at least one record format is required"));
        }

        let assumptions = assumption_status(&coefficients, &grid, horizon);
        Ok(ExperimentConfig {
            problem,
            grid,
            coefficients,
            diffusion,
            dt,
            horizon,
            initial: raw.initial,
            paths: raw.run.paths,
            seed: raw.run.seed,
            noise_substeps: raw.run.noise_substeps,
            monitors,
            regularity: raw.regularity,
            outputs: raw.outputs,
            admissibility,
            assumptions,
            derived_defaults,
        })
    }

    fn coefficients(&self, raw: &RawCoefficients, d: usize, length: f64) -> Result<Coefficients, HarnessError> {
        let mut coeffs = match (&raw.preset, &raw.inline) {
            (Some(_), Some(_)) => {
                return Err(self.error(&["coefficients.preset", "coefficients.inline"], "give either a preset or inline coefficients"))
            }
            (_, Some(inline)) => {
                if raw.xi.is_some() {
                    return Err(self.error(&["coefficients.xi", "coefficients.inline"], "with inline coefficients set xi inside [coefficients.inline]"));
                }
                let a = if inline.a.is_empty() {
                    (0..d * d)
                        .map(|k| Field::constant(if k / d == k % d { 1.0 } else { 0.0 }))
                        .collect()
                } else {
                    inline.a.clone()
                };
                let b = if inline.b.is_empty() {
                    vec![Field::constant(0.0); d]
                } else {
                    inline.b.clone()
                };
                Coefficients {
                    d,
                    a,
                    b,
                    c: inline.c.clone().unwrap_or_else(|| Field::constant(0.0)),
                    xi: inline.xi.clone().unwrap_or_else(|| Field::constant(1.0)),
                    kappa0: inline.kappa0,
                    k: inline.k,
                    form: OperatorForm::NonDivergence,
                }
            }
            (preset, None) => Coefficients::preset(preset.unwrap_or(CoefficientPreset::Heat), d, length, raw.xi.unwrap_or(1.0)),
        };
        if let Some(form) = raw.form {
            coeffs.form = form;
        }
        coeffs
            .validate()
            .map_err(|e| self.error(&["coefficients.inline", "coefficients.preset"], e.to_string()))?;
        Ok(coeffs)
    }

    fn monitors(
        &self,
        raw: RawMonitors,
        dt: f64,
        horizon: f64,
        steps: usize,
        grid: &GridSpec,
        derived: &mut Vec<String>,
    ) -> Result<MonitorSettings, HarnessError> {
        let record_every = match raw.record_every {
            Some(0) => return Err(self.error(&["monitors.record_every"], "record_every must be at least 1")),
            Some(k) => k,
            None => {
                derived.push("monitors.record_every".into());
                (steps / DEFAULT_RECORDS).max(1)
            }
        };
        if raw.threshold_multiples.iter().any(|m| !(*m > 0.0 && m.is_finite())) {
            return Err(self.error(&["monitors.threshold_multiples"], "threshold multiples must be positive and finite"));
        }
        if let Some(b) = raw.bessel {
            if !(b.gamma >= 0.0 && b.gamma.is_finite() && b.p >= 1.0) {
                return Err(self.error(&["monitors.bessel"], "Bessel monitor needs gamma ≥ 0 and p ≥ 1"));
            }
        }
        for &t in &raw.snapshot_times {
            let k = (t / dt).round();
            if !(t > 0.0 && t <= horizon * (1.0 + 1e-12)) || (k * dt - t).abs() > 1e-9 * horizon {
                return Err(self.error(&["monitors.snapshot_times"], format!("snapshot time {t} is not a step time in (0, {horizon}]")));
            }
        }
        if raw.snapshot_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(self.error(&["monitors.snapshot_times"], "snapshot times must be increasing"));
        }
        if let Some(p) = &raw.probes {
            if p.count == 0 || p.count > grid.cells() || p.every == 0 {
                return Err(self.error(&["monitors.probes"], format!("need 1 ≤ count ≤ {} and every ≥ 1", grid.cells())));
            }
            if !(p.start_time >= 0.0 && p.start_time < horizon) {
                return Err(self.error(&["monitors.probes"], format!("start_time must lie in [0, {horizon})")));
            }
        }
        Ok(MonitorSettings {
            record_every,
            threshold_multiples: raw.threshold_multiples,
            bessel: raw.bessel,
            snapshot_times: raw.snapshot_times,
            probes: raw.probes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solvability::Condition;

    #[test]
    fn minimal_config_fills_gamma_and_p() {
        let cfg = parse_config("[problem]\nd = 1\n", "min.toml").unwrap();
        assert_eq!(cfg.problem.gamma, 0.45);
        assert!((cfg.admissibility.p_min - 3.0 / cfg.problem.gamma).abs() < 1e-12);
        assert!(cfg.problem.p > cfg.admissibility.p_min);
        assert!(cfg.admissibility.admissible);
        assert_eq!(cfg.admissibility.matched_condition, Condition::I);
        assert!(cfg.assumptions.satisfied);
        assert!(cfg.rejection().is_none());
        assert_eq!(cfg.steps(), 1000);
        assert_eq!(cfg.monitors.record_every, 10);
    }

    #[test]
    fn large_lambda_loads_but_is_rejected() {
        let cfg = parse_config("[problem]\nd = 1\nlambda = 0.7\n", "x.toml").unwrap();
        assert!(!cfg.admissibility.admissible);
        assert!(cfg.rejection().unwrap().contains("not admissible"));
    }

    #[test]
    fn malformed_number_reports_line() {
        let src = "[problem]\nd = 1\nlambda = 0.2.5\n";
        match parse_config(src, "bad.toml") {
            Err(HarnessError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_key_reports_line() {
        let src = "[problem]\nd = 1\n\n[time]\ndt = 1e-3\nhorizn = 1.0\n";
        match parse_config(src, "bad.toml") {
            Err(HarnessError::Parse { line, message, .. }) => {
                assert_eq!(line, 6);
                assert!(message.contains("horizn"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn inconsistency_names_fields() {
        let src = "[problem]\nd = 1\n\n[grid]\nd = 2\nn = 64\n";
        match parse_config(src, "c.toml") {
            Err(HarnessError::Config { line, fields, .. }) => {
                assert_eq!(line, Some(5));
                assert_eq!(fields, vec!["grid.d", "problem.d"]);
            }
            other => panic!("{other:?}"),
        }
        let src = "[problem]\nd = 1\n[time]\ndt = 0.5\nhorizon = 0.1\n";
        match parse_config(src, "c.toml") {
            Err(HarnessError::Config { line, fields, .. }) => {
                assert_eq!(line, Some(4));
                assert!(fields.contains(&"time.horizon".to_string()));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn white_noise_needs_d1() {
        let err = parse_config("[problem]\nd = 2\n", "w.toml").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("problem.covariance"), "{err}");
    }

    #[test]
    fn full_config_round_trips() {
        let src = r#"
[problem]
d = 2
lambda = 0.4
covariance = { kind = "gaussian", c = 1.0 }
gamma = 0.1
p = 100

[grid]
n = 32
length = 8.0

[coefficients]
preset = "varying_diffusion"
xi = 0.5
form = "divergence"

[diffusion]
truncation = 50.0

[time]
dt = 1e-3
horizon = 0.01

[initial]
shape = "constant"
value = 1.0

[run]
paths = 3
seed = 7

[monitors]
record_every = 2
threshold_multiples = [2, 4]
snapshot_times = [0.005, 0.01]
bessel = { gamma = 0.1, p = 100 }
probes = { count = 8, every = 1, start_time = 0.005 }

[outputs]
dir = "somewhere"
formats = ["csv"]
"#;
        let cfg = parse_config(src, "full.toml").unwrap();
        assert_eq!(cfg.grid.d, 2);
        assert_eq!(cfg.coefficients.form, OperatorForm::Divergence);
        assert_eq!(cfg.diffusion.truncation, Some(50.0));
        assert!(cfg.derived_defaults.is_empty());
        assert_eq!(cfg.outputs.dir, "somewhere");
        let json = serde_json::to_string(&cfg).unwrap();
        assert!(!json.contains("somewhere"));
        let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(back.problem, cfg.problem);
        assert_eq!(back.monitors, cfg.monitors);
        assert_eq!(back.coefficients, cfg.coefficients);
    }

    #[test]
    fn inline_coefficients_and_violations() {
        let src = "[problem]\nd = 1\n[coefficients.inline]\nc = 10.0\nkappa0 = 1.0\nk = 1.0\n";
        let cfg = parse_config(src, "v.toml").unwrap();
        assert!(!cfg.assumptions.satisfied);
        assert!(cfg.rejection().unwrap().contains("coefficient assumptions"));
        let both = "[problem]\nd = 1\n[coefficients]\npreset = \"heat\"\n[coefficients.inline]\nkappa0 = 1.0\nk = 1.0\n";
        let err = parse_config(both, "v.toml").unwrap_err();
        assert!(err.to_string().contains("coefficients.preset"));
    }

    #[test]
    fn bump_is_nonnegative_and_peaks_at_center() {
        let grid = GridSpec::new(1, 64, 4.0).unwrap();
        let u = InitialCondition::default().sample(&grid);
        assert!(u.iter().all(|&v| v >= 0.0));
        assert_eq!(u[32], 1.0);
        assert_eq!(u[0], 0.0);
    }

    #[test]
    fn locate_key_falls_back_to_header() {
        let src = "[a]\nx = 1\n[b]\ny = 2\n";
        assert_eq!(locate_key(src, "b", "y"), Some(4));
        assert_eq!(locate_key(src, "b", "z"), Some(3));
        assert_eq!(locate_key(src, "c", "z"), None);
        assert_eq!(line_column(src, 6), (2, 3));
    }
}
