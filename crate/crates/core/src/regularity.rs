//! Hölder exponents from structure functions `S_q(h) = mean |u(·+h) − u(·)|^q`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fft::unravel;
use crate::noise::GridSpec;
use crate::solvability::{holder_targets, ProblemSpec};
use crate::stats::{least_squares, standard_error, t_quantile};

/// Smallest admissible lag in cells or steps.
pub const MIN_LAG: usize = 4;
/// Largest admissible lag as a fraction of the box or horizon.
pub const MAX_LAG_FRACTION: f64 = 1.0 / 8.0;
pub const MIN_INCREMENTS: usize = 32;
pub const MIN_LAGS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegularityError {
    #[error("degenerate data: {0}")]
    Degenerate(String),
    #[error("invalid lags: {0}")]
    InvalidLags(String),
    #[error("not enough data: {0}")]
    InsufficientData(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Space,
    Time,
}

/// Equally spaced series grouped by replicate (path). Spatial data are the
/// periodic lines of the snapshots; temporal data are the probe series.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceSet {
    pub spacing: f64,
    pub periodic: bool,
    pub replicates: Vec<Vec<Vec<f64>>>,
}

impl SequenceSet {
    /// Every grid line along every axis of every snapshot, grouped by path.
    pub fn from_snapshots(grid: &GridSpec, per_path: &[Vec<Vec<f64>>]) -> Self {
        let replicates = per_path
            .iter()
            .map(|fields| fields.iter().flat_map(|f| grid_lines(grid, f)).collect())
            .collect();
        Self {
            spacing: grid.dx(),
            periodic: true,
            replicates,
        }
    }

    /// Probe time series grouped by path.
    pub fn from_time_series(spacing: f64, per_path: Vec<Vec<Vec<f64>>>) -> Self {
        Self {
            spacing,
            periodic: false,
            replicates: per_path,
        }
    }

    fn min_len(&self) -> usize {
        self.replicates
            .iter()
            .flatten()
            .map(Vec::len)
            .min()
            .unwrap_or(0)
    }
}

/// The `n^{d−1}·d` lines of a field, one per axis and transverse index.
pub fn grid_lines(grid: &GridSpec, field: &[f64]) -> Vec<Vec<f64>> {
    let (n, d) = (grid.n, grid.d);
    let mut out = Vec::with_capacity(d * grid.cells() / n);
    let mut idx = [0usize; 3];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        for flat in 0..grid.cells() {
            unravel(flat, n, d, &mut idx[..d]);
            if idx[axis] != 0 {
                continue;
            }
            out.push((0..n).map(|k| field[flat + k * stride]).collect());
        }
    }
    out
}

/// Geometric lags from [`MIN_LAG`] to `len/8`, deduplicated.
pub fn default_lags(len: usize, count: usize) -> Vec<usize> {
    let hi = (len as f64 * MAX_LAG_FRACTION).floor() as usize;
    if hi < MIN_LAG || count < 2 {
        return Vec::new();
    }
    let ratio = (hi as f64 / MIN_LAG as f64).powf(1.0 / (count - 1) as f64);
    let mut lags: Vec<usize> = (0..count)
        .map(|i| (MIN_LAG as f64 * ratio.powi(i as i32)).round() as usize)
        .map(|l| l.clamp(MIN_LAG, hi))
        .collect();
    lags.dedup();
    lags
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureFunction {
    pub direction: Direction,
    pub q: f64,
    /// Lags in cells or steps.
    pub lag_steps: Vec<usize>,
    /// Lags in physical units.
    pub lags: Vec<f64>,
    /// Pooled over all replicates.
    pub values: Vec<f64>,
    /// One row per replicate.
    pub per_replicate: Vec<Vec<f64>>,
    pub increments: Vec<usize>,
}

pub fn structure_function(
    data: &SequenceSet,
    direction: Direction,
    q: f64,
    lags: &[usize],
) -> Result<StructureFunction, RegularityError> {
    if !(q > 0.0) {
        return Err(RegularityError::InvalidLags(format!("moment order must be positive (got {q})")));
    }
    if data.replicates.is_empty() || data.replicates.iter().any(Vec::is_empty) {
        return Err(RegularityError::InsufficientData("every replicate needs at least one series".into()));
    }
    let len = data.min_len();
    // the box has n cells; a series of N samples spans N − 1 steps
    let extent = if data.periodic { len } else { len.saturating_sub(1) };
    let hi = extent as f64 * MAX_LAG_FRACTION;
    if lags.windows(2).any(|w| w[0] >= w[1]) {
        return Err(RegularityError::InvalidLags("lags must be strictly increasing".into()));
    }
    if let Some(&bad) = lags.iter().find(|&&l| l < MIN_LAG || l as f64 > hi) {
        return Err(RegularityError::InvalidLags(format!(
            "lag {bad} is outside [{MIN_LAG}, {hi}] (1/8 of the extent {extent})"
        )));
    }
    let mut per_replicate = Vec::with_capacity(data.replicates.len());
    let mut pooled_sum = vec![0.0; lags.len()];
    let mut increments = vec![0usize; lags.len()];
    for rep in &data.replicates {
        let mut row = Vec::with_capacity(lags.len());
        for (k, &lag) in lags.iter().enumerate() {
            let mut sum = 0.0;
            let mut count = 0usize;
            for s in rep {
                let n = s.len();
                let stop = if data.periodic { n } else { n - lag };
                for i in 0..stop {
                    let j = if data.periodic { (i + lag) % n } else { i + lag };
                    sum += (s[j] - s[i]).abs().powf(q);
                }
                count += stop;
            }
            pooled_sum[k] += sum;
            increments[k] += count;
            row.push(sum / count as f64);
        }
        per_replicate.push(row);
    }
    if let Some(k) = increments.iter().position(|&c| c < MIN_INCREMENTS) {
        return Err(RegularityError::InsufficientData(format!(
            "lag {} has {} increments; need at least {MIN_INCREMENTS}",
            lags[k], increments[k]
        )));
    }
    let values: Vec<f64> = pooled_sum.iter().zip(&increments).map(|(s, &c)| s / c as f64).collect();
    if values.iter().any(|&v| !(v > 0.0)) {
        return Err(RegularityError::Degenerate(
            "increments vanish at some lag (constant field)".into(),
        ));
    }
    Ok(StructureFunction {
        direction,
        q,
        lag_steps: lags.to_vec(),
        lags: lags.iter().map(|&l| l as f64 * data.spacing).collect(),
        values,
        per_replicate,
        increments,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    pub direction: Direction,
    pub exponent: f64,
    pub confidence_interval: (f64, f64),
    pub confidence: f64,
    /// Standard error of the exponent.
    pub standard_error: f64,
    pub replicates: usize,
    /// `S_q` is not increasing over the lag window.
    pub inconclusive: bool,
}

/// Slope of `log S_q` against `log h`, divided by `q`. With several
/// replicates the interval comes from the spread of the per-replicate slopes
/// (t with `R − 1` degrees of freedom); with one, from the regression residuals.
pub fn estimate_holder(sf: &StructureFunction, confidence: f64) -> Result<HolderEstimate, RegularityError> {
    if sf.lags.len() < MIN_LAGS {
        return Err(RegularityError::InsufficientData(format!(
            "need at least {MIN_LAGS} lags (got {})",
            sf.lags.len()
        )));
    }
    let log_h: Vec<f64> = sf.lags.iter().map(|h| h.ln()).collect();
    let fit = least_squares(&log_h, &sf.values.iter().map(|v| v.ln()).collect::<Vec<_>>());
    let exponent = fit.slope / sf.q;
    let inconclusive = sf.values.windows(2).any(|w| !(w[1] > w[0]));
    let replicates = sf.per_replicate.len();
    let (se, dof) = if replicates >= 2 {
        let mut slopes = Vec::with_capacity(replicates);
        for row in &sf.per_replicate {
            if row.iter().any(|&v| !(v > 0.0)) {
                return Err(RegularityError::Degenerate("a replicate has vanishing increments".into()));
            }
            let ys: Vec<f64> = row.iter().map(|v| v.ln()).collect();
            slopes.push(least_squares(&log_h, &ys).slope / sf.q);
        }
        (standard_error(&slopes), (replicates - 1) as f64)
    } else {
        (fit.slope_se / sf.q, (sf.lags.len() - 2) as f64)
    };
    let half = t_quantile(confidence, dof) * se;
    Ok(HolderEstimate {
        direction: sf.direction,
        exponent,
        confidence_interval: (exponent - half, exponent + half),
        confidence,
        standard_error: se,
        replicates,
        inconclusive,
    })
}

/// Mean of the per-replicate exponents; used to check the pooled fit.
pub fn replicate_exponents(sf: &StructureFunction) -> Vec<f64> {
    let log_h: Vec<f64> = sf.lags.iter().map(|h| h.ln()).collect();
    sf.per_replicate
        .iter()
        .map(|row| least_squares(&log_h, &row.iter().map(|v| v.ln()).collect::<Vec<_>>()).slope / sf.q)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Meets,
    Below,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegularityReport {
    pub space_exponent: Option<HolderEstimate>,
    pub time_exponent: Option<HolderEstimate>,
    pub target_space: f64,
    pub target_time: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub detail: String,
}

/// One-sided comparison: an estimate meets its target when the lower edge of
/// its interval is at least `target − tolerance`. Exceeding the target is
/// never penalised.
pub fn compare_to_theory(
    space: Option<&HolderEstimate>,
    time: Option<&HolderEstimate>,
    spec: &ProblemSpec,
    epsilon: f64,
    tolerance: f64,
) -> RegularityReport {
    let mut report = RegularityReport {
        space_exponent: space.cloned(),
        time_exponent: time.cloned(),
        target_space: f64::NAN,
        target_time: f64::NAN,
        epsilon,
        tolerance,
        verdict: Verdict::Inconclusive,
        detail: String::new(),
    };
    let (ts, tt) = match holder_targets(spec, epsilon) {
        Ok(t) => t,
        Err(e) => {
            report.detail = e.to_string();
            return report;
        }
    };
    report.target_space = ts;
    report.target_time = tt;
    let estimates: Vec<(&HolderEstimate, f64)> = [(space, ts), (time, tt)]
        .into_iter()
        .filter_map(|(e, t)| e.map(|e| (e, t)))
        .collect();
    if estimates.is_empty() {
        report.detail = "no estimates supplied".into();
        return report;
    }
    let mut notes = Vec::new();
    let mut below = false;
    let mut inconclusive = false;
    for (e, target) in estimates {
        let lower = e.confidence_interval.0;
        let name = match e.direction {
            Direction::Space => "space",
            Direction::Time => "time",
        };
        if e.inconclusive || !lower.is_finite() {
            inconclusive = true;
            notes.push(format!("{name}: structure function not increasing over the lag window"));
        } else if lower >= target - tolerance {
            notes.push(format!("{name}: lower edge {lower:.4} ≥ {target:.4} − {tolerance}"));
        } else {
            below = true;
            notes.push(format!("{name}: lower edge {lower:.4} < {target:.4} − {tolerance}"));
        }
    }
    report.verdict = if inconclusive {
        Verdict::Inconclusive
    } else if below {
        Verdict::Below
    } else {
        Verdict::Meets
    };
    report.detail = notes.join("; ");
    report
}
