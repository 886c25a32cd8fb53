//! Spatial covariance kernels, their spectral measures, and Bessel potential
//! kernels.
//!
//! Fourier transforms use the symmetric convention
//! `F(f)(ξ) = (2π)^{-d/2} ∫ e^{-iξ·x} f(x) dx`, under which the Bessel kernel
//! `R_γ` has transform `(2π)^{-d/2} (1 + |ξ|²)^{-γ/2}` and unit mass.

mod bessel;
mod constants;
mod convolution;
pub mod verify;

pub use bessel::{
    bessel_kernel, bessel_kernel_radial, default_table_radii, near_origin_constant,
    sample_bessel_on_grid, tabulate_bessel, KernelTable, NearOrigin, RadialProfile,
    KERNEL_TOLERANCE,
};
pub use constants::{estimate_constants, ConstantsEstimate, IntegralValue};
pub use convolution::{kernel_self_convolution, SelfConvolution, SelfConvolutionTable};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;
use thiserror::Error;

use crate::quadrature::QuadratureError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CovarianceError {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),
    #[error("point has dimension {got}, model has dimension {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("kernel is singular at the requested point")]
    Singular,
    #[error(transparent)]
    Quadrature(#[from] QuadratureError),
    #[error("invariant violated: {0}")]
    InvariantViolation(String),
}

/// A kernel evaluation. Poles are expected (Riesz at the origin, white noise
/// everywhere), so they are values rather than errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelValue {
    Finite(f64),
    Singular,
}

impl KernelValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            KernelValue::Finite(v) => Some(v),
            KernelValue::Singular => None,
        }
    }

    pub fn is_singular(self) -> bool {
        matches!(self, KernelValue::Singular)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovarianceKind {
    /// `f = δ₀`; only meaningful on the line.
    White,
    /// `f(x) = |x|^{-α}` with `0 < α < d`.
    Riesz { alpha: f64 },
    /// `f(x) = exp(-c|x|²)` with `c > 0`.
    Gaussian { c: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovarianceModel {
    pub kind: CovarianceKind,
    pub d: usize,
}

impl CovarianceModel {
    pub fn new(kind: CovarianceKind, d: usize) -> Result<Self, CovarianceError> {
        let model = Self { kind, d };
        model.validate()?;
        Ok(model)
    }

    pub fn white() -> Self {
        Self {
            kind: CovarianceKind::White,
            d: 1,
        }
    }

    pub fn riesz(alpha: f64, d: usize) -> Result<Self, CovarianceError> {
        Self::new(CovarianceKind::Riesz { alpha }, d)
    }

    pub fn gaussian(c: f64, d: usize) -> Result<Self, CovarianceError> {
        Self::new(CovarianceKind::Gaussian { c }, d)
    }

    pub fn validate(&self) -> Result<(), CovarianceError> {
        if self.d == 0 {
            return Err(CovarianceError::ParameterDomain("dimension must be positive".into()));
        }
        match self.kind {
            CovarianceKind::White if self.d != 1 => Err(CovarianceError::ParameterDomain(format!(
                "white noise is only defined for d = 1 (got d = {})",
                self.d
            ))),
            CovarianceKind::Riesz { alpha } if !(alpha > 0.0 && alpha < self.d as f64) => {
                Err(CovarianceError::ParameterDomain(format!(
                    "Riesz exponent must satisfy 0 < alpha < d = {} (got {alpha})",
                    self.d
                )))
            }
            CovarianceKind::Gaussian { c } if !(c > 0.0 && c.is_finite()) => Err(
                CovarianceError::ParameterDomain(format!("Gaussian rate must be positive (got {c})")),
            ),
            _ => Ok(()),
        }
    }

    /// Bounded continuous covariances admit the widest λ range.
    pub fn is_bounded_continuous(&self) -> bool {
        matches!(self.kind, CovarianceKind::Gaussian { .. })
    }

    pub fn label(&self) -> String {
        match self.kind {
            CovarianceKind::White => "white".to_string(),
            CovarianceKind::Riesz { alpha } => format!("riesz(alpha={alpha})"),
            CovarianceKind::Gaussian { c } => format!("gaussian(c={c})"),
        }
    }

    /// `f` as a function of `|x|`.
    pub fn eval_radial(&self, r: f64) -> KernelValue {
        match self.kind {
            CovarianceKind::White => KernelValue::Singular,
            CovarianceKind::Riesz { alpha } => {
                if r == 0.0 {
                    KernelValue::Singular
                } else {
                    KernelValue::Finite(r.abs().powf(-alpha))
                }
            }
            CovarianceKind::Gaussian { c } => KernelValue::Finite((-c * r * r).exp()),
        }
    }

    /// Density of ν (the measure of `F(f)`) as a function of `|ξ|`.
    pub fn spectral_density_radial(&self, rho: f64) -> KernelValue {
        let d = self.d as f64;
        match self.kind {
            CovarianceKind::White => KernelValue::Finite((2.0 * PI).powf(-0.5)),
            CovarianceKind::Gaussian { c } => {
                KernelValue::Finite((2.0 * c).powf(-d / 2.0) * (-rho * rho / (4.0 * c)).exp())
            }
            CovarianceKind::Riesz { alpha } => {
                if rho == 0.0 {
                    KernelValue::Singular
                } else {
                    KernelValue::Finite(riesz_dual_constant(alpha, self.d) * rho.abs().powf(alpha - d))
                }
            }
        }
    }

    fn check_point(&self, x: &[f64]) -> Result<f64, CovarianceError> {
        if x.len() != self.d {
            return Err(CovarianceError::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(CovarianceError::ParameterDomain("point must be finite".into()));
        }
        Ok(norm(x))
    }
}

/// Constant in `F(|x|^{-α}) = C |ξ|^{α-d}` under the symmetric convention.
pub fn riesz_dual_constant(alpha: f64, d: usize) -> f64 {
    let d = d as f64;
    ((d / 2.0 - alpha) * 2f64.ln() + ln_gamma((d - alpha) / 2.0) - ln_gamma(alpha / 2.0)).exp()
}

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Surface area of the unit sphere in ℝ^d (2 for d = 1).
pub fn sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * (h * PI.ln() - ln_gamma(h)).exp()
}

/// Evaluates the covariance `f(x)`.
pub fn eval_covariance(model: &CovarianceModel, x: &[f64]) -> Result<KernelValue, CovarianceError> {
    model.validate()?;
    let r = model.check_point(x)?;
    Ok(model.eval_radial(r))
}

/// Density of ν at frequency `xi`. Riesz duals are singular at `ξ = 0`.
pub fn spectral_density(model: &CovarianceModel, xi: &[f64]) -> Result<KernelValue, CovarianceError> {
    model.validate()?;
    let rho = model.check_point(xi)?;
    Ok(model.spectral_density_radial(rho))
}

/// How μ (the measure representing `f` itself) is stored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MuRepresentation {
    PointMass { weight: f64 },
    Density,
}

/// The pair (μ, ν) attached to a covariance model together with a tempering
/// exponent `k` for which `∫(1+|x|²)^{-k/2} μ(dx) < ∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralMeasure {
    pub model: CovarianceModel,
    pub tempering_exponent: f64,
}

impl SpectralMeasure {
    /// Uses the default exponent: 0 for white noise and Gaussian kernels,
    /// `d - α + 1/2` for Riesz kernels.
    pub fn new(model: CovarianceModel) -> Result<Self, CovarianceError> {
        model.validate()?;
        let k = match model.kind {
            CovarianceKind::White | CovarianceKind::Gaussian { .. } => 0.0,
            CovarianceKind::Riesz { alpha } => model.d as f64 - alpha + 0.5,
        };
        Ok(Self {
            model,
            tempering_exponent: k,
        })
    }

    pub fn with_tempering(model: CovarianceModel, k: f64) -> Result<Self, CovarianceError> {
        model.validate()?;
        if !(k >= 0.0 && k.is_finite()) {
            return Err(CovarianceError::ParameterDomain(format!(
                "tempering exponent must be a nonnegative real (got {k})"
            )));
        }
        Ok(Self {
            model,
            tempering_exponent: k,
        })
    }

    pub fn mu_representation(&self) -> MuRepresentation {
        match self.model.kind {
            CovarianceKind::White => MuRepresentation::PointMass { weight: 1.0 },
            _ => MuRepresentation::Density,
        }
    }

    /// Radial density of μ. For continuous `f` this is `f` itself; for the
    /// Riesz kernel it is `|x|^{-α}`; white noise has no density.
    pub fn mu_density_radial(&self, r: f64) -> KernelValue {
        self.model.eval_radial(r)
    }

    pub fn nu_density_radial(&self, rho: f64) -> KernelValue {
        self.model.spectral_density_radial(rho)
    }

    /// Power of `|x|` governing μ near the origin (`μ(dx) ≈ |x|^e dx`).
    pub fn mu_origin_exponent(&self) -> Option<f64> {
        match self.model.kind {
            CovarianceKind::White => None,
            CovarianceKind::Riesz { alpha } => Some(-alpha),
            CovarianceKind::Gaussian { .. } => Some(0.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::{integrate, Tolerance};

    #[test]
    fn model_domains() {
        assert!(CovarianceModel::new(CovarianceKind::White, 2).is_err());
        assert!(CovarianceModel::riesz(1.0, 1).is_err());
        assert!(CovarianceModel::riesz(0.0, 2).is_err());
        assert!(CovarianceModel::riesz(1.9, 2).is_ok());
        assert!(CovarianceModel::gaussian(0.0, 1).is_err());
        assert!(CovarianceModel::gaussian(-1.0, 3).is_err());
    }

    #[test]
    fn eval_examples() {
        let g = CovarianceModel::gaussian(1.0, 1).unwrap();
        assert_eq!(eval_covariance(&g, &[0.0]).unwrap(), KernelValue::Finite(1.0));
        let r = CovarianceModel::riesz(0.5, 1).unwrap();
        assert_eq!(eval_covariance(&r, &[4.0]).unwrap(), KernelValue::Finite(0.5));
        assert_eq!(eval_covariance(&r, &[-4.0]).unwrap(), KernelValue::Finite(0.5));
        assert_eq!(eval_covariance(&r, &[0.0]).unwrap(), KernelValue::Singular);
        assert_eq!(eval_covariance(&CovarianceModel::white(), &[0.3]).unwrap(), KernelValue::Singular);
        assert!(matches!(
            eval_covariance(&g, &[0.0, 1.0]),
            Err(CovarianceError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn invalid_model_is_a_domain_error() {
        let bad = CovarianceModel {
            kind: CovarianceKind::Riesz { alpha: 3.0 },
            d: 2,
        };
        assert!(matches!(eval_covariance(&bad, &[1.0, 0.0]), Err(CovarianceError::ParameterDomain(_))));
    }

    #[test]
    fn white_density_is_constant() {
        let w = CovarianceModel::white();
        for xi in [-3.0, 0.0, 17.0] {
            let v = spectral_density(&w, &[xi]).unwrap().finite().unwrap();
            assert!((v - (2.0 * PI).powf(-0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn gaussian_density_matches_quadrature() {
        // oracle: (2π)^{-1/2} ∫ e^{-x²} cos(ξx) dx
        let g = CovarianceModel::gaussian(1.0, 1).unwrap();
        for xi in [0.0, 0.7, 2.5] {
            let q = integrate(
                |x: f64| (-x * x).exp() * (xi * x).cos(),
                -15.0,
                15.0,
                Tolerance::new(1e-14, 1e-13),
            )
            .unwrap();
            let expected = q.value / (2.0 * PI).sqrt();
            let got = spectral_density(&g, &[xi]).unwrap().finite().unwrap();
            assert!((got - expected).abs() < 1e-12, "xi={xi}: {got} vs {expected}");
        }
        let at_zero = spectral_density(&g, &[0.0]).unwrap().finite().unwrap();
        assert!((at_zero - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn riesz_dual_homogeneity() {
        let r = CovarianceModel::riesz(0.5, 1).unwrap();
        for xi in [0.3, 1.0, 7.0] {
            let a = spectral_density(&r, &[2.0 * xi]).unwrap().finite().unwrap();
            let b = spectral_density(&r, &[xi]).unwrap().finite().unwrap();
            assert!((a / b - 2f64.powf(-0.5)).abs() < 1e-14);
        }
        assert!(spectral_density(&r, &[0.0]).unwrap().is_singular());
    }

    #[test]
    fn riesz_dual_constant_against_oscillatory_quadrature() {
        // ∫ |x|^{-1/2} cos(x) dx over ℝ equals sqrt(2π): F(|x|^{-1/2})(1) = 1 in d = 1.
        assert!((riesz_dual_constant(0.5, 1) - 1.0).abs() < 1e-14);
        // d = 3, α = 2: F(|x|^{-2}) = sqrt(π/2) |ξ|^{-1}
        assert!((riesz_dual_constant(2.0, 3) - (PI / 2.0).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn sphere_areas() {
        assert!((sphere_area(1) - 2.0).abs() < 1e-14);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-13);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-13);
    }

    #[test]
    fn default_tempering_exponents() {
        let r = SpectralMeasure::new(CovarianceModel::riesz(0.5, 2).unwrap()).unwrap();
        assert!((r.tempering_exponent - 2.0).abs() < 1e-15);
        let w = SpectralMeasure::new(CovarianceModel::white()).unwrap();
        assert_eq!(w.mu_representation(), MuRepresentation::PointMass { weight: 1.0 });
        assert!(SpectralMeasure::with_tempering(CovarianceModel::white(), -1.0).is_err());
    }
}
