//! The constants `A = ∫(1+|x|²)^{-k/2} μ(dx)` and
//! `I = ∫ (R_{1−γ}^r ∗ R_{1−γ}^r)(x) (1+|x|²)^{k(r−1)/2} μ(dx)`.

use serde::{Deserialize, Serialize};

use super::{sphere_area, CovarianceError, CovarianceKind, KernelValue, MuRepresentation, NearOrigin, SelfConvolution, SpectralMeasure};
use crate::quadrature::{integrate_log_scale, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralValue {
    Finite(f64),
    /// The near-origin exponent test fails, so finiteness is not certified.
    Infinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsEstimate {
    pub a: f64,
    pub i: IntegralValue,
    /// Conjugate exponent `r = s/(s−1)`.
    pub r: f64,
    /// `r(1−γ−d)`, the near-origin exponent of `R_{1−γ}^r`.
    pub kernel_exponent: f64,
    /// `R_{1−γ}^r ∈ L₂`, which makes the self-convolution bounded.
    pub bounded_convolution: bool,
}

const TOL: Tolerance = Tolerance {
    abs: 1e-300,
    rel: 1e-6,
    max_subdivisions: 4000,
};

fn tempering_mass(spec: &SpectralMeasure) -> Result<f64, CovarianceError> {
    let model = spec.model;
    let d = model.d;
    let k = spec.tempering_exponent;
    let area = sphere_area(d);
    match model.kind {
        CovarianceKind::White => Ok(1.0),
        CovarianceKind::Gaussian { c } => {
            let upper = (60.0 / c).sqrt();
            let q = integrate_log_scale(
                |r| r.powi(d as i32 - 1) * (1.0 + r * r).powf(-k / 2.0) * (-c * r * r).exp(),
                1e-12,
                upper,
                TOL,
            )?;
            Ok(area * q.value)
        }
        CovarianceKind::Riesz { alpha } => {
            let df = d as f64;
            if k <= df - alpha {
                return Err(CovarianceError::InvariantViolation(format!(
                    "tempering exponent k = {k} leaves ∫(1+|x|²)^(-k/2)|x|^(-{alpha}) dx divergent; need k > {}",
                    df - alpha
                )));
            }
            // (0, 1] directly; [1, ∞) through ρ = 1/t
            let inner = integrate_log_scale(
                |r| r.powf(df - 1.0 - alpha) * (1.0 + r * r).powf(-k / 2.0),
                1e-300,
                1.0,
                TOL,
            )?;
            let outer = integrate_log_scale(
                |t| t.powf(k - df - 1.0 + alpha) * (1.0 + t * t).powf(-k / 2.0),
                1e-300,
                1.0,
                TOL,
            )?;
            Ok(area * (inner.value + outer.value))
        }
    }
}

/// Computes `A` and classifies `I` for the kernel order `1 − γ` and
/// `r = s/(s−1)` (`s = ∞` gives `r = 1`).
///
/// `I` is reported finite when the self-convolution is bounded
/// (`2r(1−γ−d) > −d`, which covers the point mass at the origin) or when
/// `∫_{|x|<1} |x|^{r(1−γ−d)} μ(dx) < ∞`; otherwise it is [`IntegralValue::Infinite`].
pub fn estimate_constants(
    spec: &SpectralMeasure,
    gamma: f64,
    s: f64,
    d: usize,
) -> Result<ConstantsEstimate, CovarianceError> {
    spec.model.validate()?;
    if spec.model.d != d {
        return Err(CovarianceError::DimensionMismatch {
            expected: spec.model.d,
            got: d,
        });
    }
    if !(0.0..1.0).contains(&gamma) {
        return Err(CovarianceError::ParameterDomain(format!("γ must lie in [0, 1) (got {gamma})")));
    }
    if !(s > 1.0) {
        return Err(CovarianceError::ParameterDomain(format!("s must exceed 1 (got {s})")));
    }
    let r = if s.is_infinite() { 1.0 } else { s / (s - 1.0) };
    let a = tempering_mass(spec)?;
    let df = d as f64;
    let order = 1.0 - gamma;
    let kernel_exponent = r * NearOrigin::classify(order, d).exponent();
    let bounded_convolution = 2.0 * kernel_exponent > -df;

    let finite = kernel_exponent > -df
        && (bounded_convolution
            || spec
                .mu_origin_exponent()
                .is_some_and(|e| kernel_exponent + e > -df));
    if !finite {
        return Ok(ConstantsEstimate {
            a,
            i: IntegralValue::Infinite,
            r,
            kernel_exponent,
            bounded_convolution,
        });
    }

    let conv = SelfConvolution::new(order, r, d)?;
    let i = match spec.mu_representation() {
        MuRepresentation::PointMass { weight } => match conv.value_at(0.0)? {
            KernelValue::Finite(v) => weight * v,
            KernelValue::Singular => {
                return Err(CovarianceError::InvariantViolation(
                    "self-convolution singular at the origin despite a bounded classification".into(),
                ))
            }
        },
        MuRepresentation::Density => {
            let k = spec.tempering_exponent;
            let mut failure = None;
            let q = integrate_log_scale(
                |x| {
                    let c = match conv.value_at(x) {
                        Ok(v) => v.finite().unwrap_or(0.0),
                        Err(e) => {
                            failure.get_or_insert(e);
                            0.0
                        }
                    };
                    let mu = spec.mu_density_radial(x).finite().unwrap_or(0.0);
                    x.powi(d as i32 - 1) * c * (1.0 + x * x).powf(k * (r - 1.0) / 2.0) * mu
                },
                1e-9,
                60.0,
                TOL,
            )?;
            if let Some(e) = failure {
                return Err(e);
            }
            sphere_area(d) * q.value
        }
    };
    Ok(ConstantsEstimate {
        a,
        i: IntegralValue::Finite(i),
        r,
        kernel_exponent,
        bounded_convolution,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::covariance::CovarianceModel;
    use statrs::function::gamma::gamma as gamma_fn;

    #[test]
    fn gaussian_mass_is_sqrt_pi() {
        let spec = SpectralMeasure::new(CovarianceModel::gaussian(1.0, 1).unwrap()).unwrap();
        let est = estimate_constants(&spec, 0.2, f64::INFINITY, 1).unwrap();
        assert!((est.a - std::f64::consts::PI.sqrt()).abs() < 1e-7);
    }

    #[test]
    fn riesz_example_is_infinite() {
        let spec = SpectralMeasure::new(CovarianceModel::riesz(0.5, 2).unwrap()).unwrap();
        let est = estimate_constants(&spec, 0.3, 4.0, 2).unwrap();
        assert_eq!(est.i, IntegralValue::Infinite);
        assert!((est.r - 4.0 / 3.0).abs() < 1e-15);
        assert!((est.kernel_exponent + 1.733_333_333_333_333).abs() < 1e-12);
    }

    #[test]
    fn white_noise_integral_is_squared_norm() {
        // ‖R_{0.8}‖² = R_{1.6}(0) = (4π)^{-1/2} Γ(0.3)/Γ(0.8)
        let spec = SpectralMeasure::new(CovarianceModel::white()).unwrap();
        let est = estimate_constants(&spec, 0.2, f64::INFINITY, 1).unwrap();
        let expected = (4.0 * std::f64::consts::PI).powf(-0.5) * gamma_fn(0.3) / gamma_fn(0.8);
        match est.i {
            IntegralValue::Finite(v) => assert!((v / expected - 1.0).abs() < 1e-4, "{v} vs {expected}"),
            IntegralValue::Infinite => panic!("expected finite"),
        }
        assert_eq!(est.a, 1.0);
    }

    #[test]
    fn riesz_mass_against_beta_function() {
        // d = 1, α = 1/2, k = 1: ∫ |x|^{-1/2} (1+x²)^{-1/2} dx = B(1/4, 1/4)
        let spec = SpectralMeasure::with_tempering(CovarianceModel::riesz(0.5, 1).unwrap(), 1.0).unwrap();
        let est = estimate_constants(&spec, 0.1, 3.0, 1).unwrap();
        let beta = gamma_fn(0.25) * gamma_fn(0.25) / gamma_fn(0.5);
        assert!((est.a / beta - 1.0).abs() < 1e-6, "{} vs {beta}", est.a);
    }

    #[test]
    fn wrong_tempering_is_an_invariant_violation() {
        let spec = SpectralMeasure::with_tempering(CovarianceModel::riesz(0.5, 2).unwrap(), 1.0).unwrap();
        assert!(matches!(
            estimate_constants(&spec, 0.1, 3.0, 2),
            Err(CovarianceError::InvariantViolation(_))
        ));
    }

    #[test]
    fn finite_riesz_integral_in_one_dimension() {
        let spec = SpectralMeasure::new(CovarianceModel::riesz(0.5, 1).unwrap()).unwrap();
        let est = estimate_constants(&spec, 0.2, f64::INFINITY, 1).unwrap();
        // r = 1: I = ∫ R_{1.6}(x)|x|^{-1/2} dx
        let oracle = integrate_log_scale(
            |x| {
                2.0 * crate::covariance::bessel_kernel_radial(1.6, 1, x).unwrap().finite().unwrap() * x.powf(-0.5)
            },
            1e-12,
            60.0,
            Tolerance::new(1e-12, 1e-9),
        )
        .unwrap()
        .value;
        match est.i {
            IntegralValue::Finite(v) => assert!((v / oracle - 1.0).abs() < 1e-4, "{v} vs {oracle}"),
            IntegralValue::Infinite => panic!("expected finite"),
        }
    }
}
