//! Exact admissibility conditions for `(d, λ, γ, p, f)` and the Hölder
//! exponents they guarantee.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{CovarianceKind, CovarianceModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolvabilityError {
    #[error("invalid problem: {0}")]
    InvalidSpec(String),
    #[error("not applicable: {0}")]
    NotApplicable(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub d: usize,
    pub lambda: f64,
    pub model: CovarianceModel,
    pub gamma: f64,
    pub p: f64,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<(), SolvabilityError> {
        self.model
            .validate()
            .map_err(|e| SolvabilityError::InvalidSpec(e.to_string()))?;
        if self.model.d != self.d {
            return Err(SolvabilityError::InvalidSpec(format!(
                "covariance dimension {} differs from problem dimension {}",
                self.model.d, self.d
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SolvabilityError::InvalidSpec(format!("λ must be a finite nonnegative real (got {})", self.lambda)));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(SolvabilityError::InvalidSpec(format!("γ must lie in (0, 1) (got {})", self.gamma)));
        }
        if !(self.p > 2.0 && self.p.is_finite()) {
            return Err(SolvabilityError::InvalidSpec(format!("p must be a finite real above 2 (got {})", self.p)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Condition {
    I,
    Ii,
    Iii,
    None,
}

impl std::fmt::Display for Condition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Condition::I => "i",
            Condition::Ii => "ii",
            Condition::Iii => "iii",
            Condition::None => "none",
        })
    }
}

/// Ranges for the Hölder exponents: `1/p < α < β < γ/2 − d/(2p)` and
/// `0 ≤ δ < γ − 2β − d/p` (largest as β → 1/p).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HolderWindow {
    pub alpha_range: (f64, f64),
    pub beta_range: (f64, f64),
    pub delta_max: f64,
    pub nonempty: bool,
}

impl HolderWindow {
    pub fn new(d: usize, gamma: f64, p: f64) -> Self {
        let lo = 1.0 / p;
        let hi = gamma / 2.0 - d as f64 / (2.0 * p);
        Self {
            alpha_range: (lo, hi),
            beta_range: (lo, hi),
            delta_max: gamma - (d as f64 + 2.0) / p,
            nonempty: hi > lo,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub admissible: bool,
    pub matched_condition: Condition,
    pub all_matching: Vec<Condition>,
    pub gamma0: f64,
    pub gamma1: f64,
    /// Supremum of admissible γ; never attained.
    pub gamma_star: Option<f64>,
    pub gamma_star_attained: bool,
    pub p_min: f64,
    pub holder_window: HolderWindow,
    /// Informational `s = 1/(2λ)` (absent for λ = 0).
    pub s_heuristic: Option<f64>,
    pub rejection_reason: String,
}

/// `½ − 2d(λ − 1/(4d))·1{λ > 1/(4d)}`.
pub fn gamma0(d: usize, lambda: f64) -> f64 {
    let d = d as f64;
    let threshold = 1.0 / (4.0 * d);
    if lambda > threshold {
        0.5 - 2.0 * d * (lambda - threshold)
    } else {
        0.5
    }
}

/// `½ − d(λ − 1/(2d))·1{λ > 1/(2d)}`.
pub fn gamma1(d: usize, lambda: f64) -> f64 {
    let d = d as f64;
    let threshold = 1.0 / (2.0 * d);
    if lambda > threshold {
        0.5 - d * (lambda - threshold)
    } else {
        0.5
    }
}

/// `1 − 2λd − α(1 − 2λ)`: the Riesz integrability bound on γ.
fn riesz_gamma_bound(d: usize, lambda: f64, alpha: f64) -> f64 {
    1.0 - 2.0 * lambda * d as f64 - alpha * (1.0 - 2.0 * lambda)
}

/// Supremum of the admissible γ, or `None` when no condition applies at any γ.
pub fn gamma_star(d: usize, lambda: f64, model: &CovarianceModel) -> Option<f64> {
    let df = d as f64;
    if model.is_bounded_continuous() {
        return (lambda < 1.0 / df).then(|| gamma1(d, lambda));
    }
    if d == 1 {
        return (lambda < 0.5).then_some(0.5 - lambda);
    }
    match model.kind {
        CovarianceKind::Riesz { alpha } if lambda < 1.0 / (2.0 * df) => {
            let value = gamma0(d, lambda).min(riesz_gamma_bound(d, lambda, alpha));
            (value > 0.0).then_some(value)
        }
        _ => None,
    }
}

/// The integrability clause `∫_{|x|<1} |x|^{(1−γ−d)/(1−2λ)} μ(dx) < ∞`,
/// decided by comparing exponents.
fn integrability_holds(spec: &ProblemSpec) -> bool {
    let d = spec.d as f64;
    let e = (1.0 - spec.gamma - d) / (1.0 - 2.0 * spec.lambda);
    match spec.model.kind {
        CovarianceKind::Riesz { alpha } => e - alpha + d > 0.0,
        CovarianceKind::Gaussian { .. } => e + d > 0.0,
        // point mass at the origin; the exponent is negative for γ > 0
        CovarianceKind::White => e >= 0.0,
    }
}

fn check_condition(spec: &ProblemSpec, condition: Condition) -> Result<(), Vec<String>> {
    let (d, lambda, gamma, p) = (spec.d, spec.lambda, spec.gamma, spec.p);
    let df = d as f64;
    let mut failures = Vec::new();
    let p_bound = (df + 2.0) / gamma;
    match condition {
        Condition::I => {
            if lambda >= 0.5 {
                failures.push(format!("λ = {lambda} ≥ 1/2"));
            }
            if gamma >= 0.5 - lambda {
                failures.push(format!("γ = {gamma} ≥ 1/2 − λ = {}", 0.5 - lambda));
            }
        }
        Condition::Ii => {
            if lambda >= 1.0 / (2.0 * df) {
                failures.push(format!("λ = {lambda} ≥ 1/(2d) = {}", 1.0 / (2.0 * df)));
            }
            let g0 = gamma0(d, lambda);
            if gamma >= g0 {
                failures.push(format!("γ = {gamma} ≥ γ₀ = {g0}"));
            }
            if lambda < 0.5 && !integrability_holds(spec) {
                let e = (1.0 - gamma - df) / (1.0 - 2.0 * lambda);
                failures.push(format!(
                    "∫_{{|x|<1}} |x|^{e:.6} μ(dx) diverges for {}",
                    spec.model.label()
                ));
            }
        }
        Condition::Iii => {
            if lambda >= 1.0 / df {
                failures.push(format!("λ = {lambda} ≥ 1/d = {}", 1.0 / df));
            }
            let g1 = gamma1(d, lambda);
            if gamma >= g1 {
                failures.push(format!("γ = {gamma} ≥ γ₁ = {g1}"));
            }
        }
        Condition::None => unreachable!("not a condition"),
    }
    if p <= p_bound {
        failures.push(format!("p = {p} ≤ (d+2)/γ = {p_bound}"));
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(failures)
    }
}

/// Conditions whose structural requirements (dimension, covariance class)
/// the problem meets, in preference order.
fn candidate_conditions(spec: &ProblemSpec) -> Vec<Condition> {
    let mut out = Vec::new();
    if spec.model.is_bounded_continuous() {
        out.push(Condition::Iii);
    }
    if spec.d == 1 {
        out.push(Condition::I);
    } else {
        out.push(Condition::Ii);
    }
    out
}

pub fn check_admissible(spec: &ProblemSpec) -> Result<AdmissibilityReport, SolvabilityError> {
    spec.validate()?;
    let mut all_matching = Vec::new();
    let mut reasons = Vec::new();
    for condition in candidate_conditions(spec) {
        match check_condition(spec, condition) {
            Ok(()) => all_matching.push(condition),
            Err(failures) => reasons.push(format!("({condition}) {}", failures.join(", "))),
        }
    }
    let matched_condition = all_matching.first().copied().unwrap_or(Condition::None);
    let admissible = matched_condition != Condition::None;
    Ok(AdmissibilityReport {
        admissible,
        matched_condition,
        all_matching,
        gamma0: gamma0(spec.d, spec.lambda),
        gamma1: gamma1(spec.d, spec.lambda),
        gamma_star: gamma_star(spec.d, spec.lambda, &spec.model),
        gamma_star_attained: false,
        p_min: (spec.d as f64 + 2.0) / spec.gamma,
        holder_window: HolderWindow::new(spec.d, spec.gamma, spec.p),
        s_heuristic: (spec.lambda > 0.0).then(|| 1.0 / (2.0 * spec.lambda)),
        rejection_reason: if admissible { String::new() } else { reasons.join("; ") },
    })
}

/// `(γ* − ε, γ*/2 − ε)`.
pub fn holder_targets(spec: &ProblemSpec, epsilon: f64) -> Result<(f64, f64), SolvabilityError> {
    let star = gamma_star(spec.d, spec.lambda, &spec.model).ok_or_else(|| {
        SolvabilityError::NotApplicable(format!(
            "no admissible γ for d = {}, λ = {}, {}",
            spec.d,
            spec.lambda,
            spec.model.label()
        ))
    })?;
    if !(epsilon > 0.0 && epsilon < star / 2.0) {
        return Err(SolvabilityError::NotApplicable(format!(
            "ε must lie in (0, γ*/2) = (0, {}) (got {epsilon})",
            star / 2.0
        )));
    }
    Ok((star - epsilon, star / 2.0 - epsilon))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(d: usize, lambda: f64, model: CovarianceModel, gamma: f64, p: f64) -> ProblemSpec {
        ProblemSpec {
            d,
            lambda,
            model,
            gamma,
            p,
        }
    }

    #[test]
    fn gamma_definitions() {
        assert_eq!(gamma0(1, 0.0), 0.5);
        assert!((gamma0(2, 0.2) - 0.2).abs() < 1e-15);
        assert!((gamma1(3, 0.3) - 0.1).abs() < 1e-15);
        assert_eq!(gamma1(2, 0.1), 0.5);
        for d in 1..=3 {
            for i in 0..10 {
                let l = 0.05 * i as f64;
                assert!((gamma0(d, l) - 0.5f64.min(1.0 - 2.0 * l * d as f64)).abs() < 1e-14);
                assert!((gamma1(d, l) - 0.5f64.min(1.0 - l * d as f64)).abs() < 1e-14);
                assert!(gamma0(d, l) <= gamma1(d, l));
            }
        }
    }

    #[test]
    fn gamma_star_examples() {
        assert_eq!(gamma_star(1, 0.25, &CovarianceModel::white()), Some(0.25));
        let g = CovarianceModel::gaussian(1.0, 2).unwrap();
        assert!((gamma_star(2, 0.4, &g).unwrap() - 0.2).abs() < 1e-15);
        let r = CovarianceModel::riesz(0.5, 2).unwrap();
        assert_eq!(gamma_star(2, 0.0, &r), Some(0.5));
        assert_eq!(gamma_star(1, 0.5, &CovarianceModel::white()), None);
        assert_eq!(gamma_star(2, 0.5, &g), None);
    }

    #[test]
    fn rejection_for_large_lambda() {
        let r = check_admissible(&spec(1, 0.6, CovarianceModel::white(), 0.1, 40.0)).unwrap();
        assert!(!r.admissible);
        assert_eq!(r.matched_condition, Condition::None);
        assert!(r.rejection_reason.contains("λ = 0.6 ≥ 1/2"), "{}", r.rejection_reason);
    }

    #[test]
    fn riesz_integrability_failure() {
        let m = CovarianceModel::riesz(1.9, 2).unwrap();
        let r = check_admissible(&spec(2, 0.2, m, 0.1, 30.0)).unwrap();
        assert!(!r.admissible);
        assert!(r.rejection_reason.contains("diverges"), "{}", r.rejection_reason);
    }

    #[test]
    fn white_noise_condition_one() {
        let r = check_admissible(&spec(1, 0.0, CovarianceModel::white(), 0.4, 10.0)).unwrap();
        assert!(r.admissible);
        assert_eq!(r.matched_condition, Condition::I);
        assert!((r.p_min - 7.5).abs() < 1e-12);
        assert!(r.holder_window.nonempty);
    }

    #[test]
    fn gaussian_prefers_condition_three() {
        let g = CovarianceModel::gaussian(1.0, 2).unwrap();
        let r = check_admissible(&spec(2, 0.0, g, 0.3, 20.0)).unwrap();
        assert_eq!(r.matched_condition, Condition::Iii);
        assert_eq!(r.all_matching, vec![Condition::Iii, Condition::Ii]);
    }

    #[test]
    fn targets() {
        let w = spec(1, 0.0, CovarianceModel::white(), 0.4, 10.0);
        let (s, t) = holder_targets(&w, 0.05).unwrap();
        assert!((s - 0.45).abs() < 1e-15 && (t - 0.2).abs() < 1e-15);
        let g = spec(2, 0.4, CovarianceModel::gaussian(1.0, 2).unwrap(), 0.1, 50.0);
        let (s, t) = holder_targets(&g, 0.05).unwrap();
        assert!((s - 0.15).abs() < 1e-12 && (t - 0.05).abs() < 1e-12);
        assert!(holder_targets(&g, 0.1).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(check_admissible(&spec(1, -0.1, CovarianceModel::white(), 0.4, 10.0)).is_err());
        assert!(check_admissible(&spec(1, 0.0, CovarianceModel::white(), 1.0, 10.0)).is_err());
        assert!(check_admissible(&spec(2, 0.0, CovarianceModel::white(), 0.4, 10.0)).is_err());
    }
}
