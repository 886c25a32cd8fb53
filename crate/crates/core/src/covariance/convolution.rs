//! Self-convolution `R_γ^r ∗ R_γ^r` of powers of Bessel kernels.
//!
//! Both factors are radial, so the convolution at `|x| = s` is computed by
//! nested quadrature. The half space `{|y| < |x − y|}` carries exactly half the
//! integral, and on it the only singularity sits at `y = 0`, which the
//! logarithmic substitution in `|y|` absorbs.

use serde::{Deserialize, Serialize};

use super::{sphere_area, CovarianceError, KernelTable, KernelValue, NearOrigin, RadialProfile};
use crate::quadrature::{integrate, integrate_log_scale, Tolerance};

const INNER: Tolerance = Tolerance {
    abs: 1e-300,
    rel: 1e-8,
    max_subdivisions: 4000,
};
const OUTER: Tolerance = Tolerance {
    abs: 1e-300,
    rel: 1e-7,
    max_subdivisions: 4000,
};
const FLOOR: f64 = 1e-12;

/// Evaluator for `R_γ^r ∗ R_γ^r` in dimension `d`.
#[derive(Debug, Clone)]
pub struct SelfConvolution {
    pub gamma: f64,
    pub power: f64,
    pub d: usize,
    profile: RadialProfile,
}

impl SelfConvolution {
    pub fn new(gamma: f64, power: f64, d: usize) -> Result<Self, CovarianceError> {
        if !(power >= 1.0 && power.is_finite()) {
            return Err(CovarianceError::ParameterDomain(format!("power must satisfy r ≥ 1 (got {power})")));
        }
        let near = NearOrigin::classify(gamma, d);
        if power * near.exponent() <= -(d as f64) {
            return Err(CovarianceError::ParameterDomain(format!(
                "R_{gamma}^{power} is not integrable in d = {d}: r(γ − d) = {} ≤ −d",
                power * near.exponent()
            )));
        }
        let profile = RadialProfile::new(gamma, d, power)?;
        Ok(Self {
            gamma,
            power,
            d,
            profile,
        })
    }

    fn f(&self, r: f64) -> f64 {
        self.profile.eval(r)
    }

    /// Near-origin exponent β of `R^r` (0 when `γ ≥ d`).
    pub fn envelope_exponent(&self) -> f64 {
        self.profile.origin_exponent()
    }

    /// Nonincreasing radial envelope `h` with `R^r ≤ N·h`.
    pub fn envelope(&self, r: f64) -> f64 {
        match self.profile.near_origin {
            NearOrigin::Algebraic { .. } => r.abs().powf(self.envelope_exponent()),
            NearOrigin::Logarithmic { .. } => (1.0 + (1.0 / r.abs()).ln().max(0.0)).powf(self.power),
            NearOrigin::Bounded { .. } => 1.0,
        }
    }

    /// `N = sup R^r / h`, taken over the interpolation nodes and the limit at
    /// the origin.
    pub fn sup_ratio(&self) -> f64 {
        let limit = match self.profile.near_origin {
            NearOrigin::Algebraic { constant, .. } => constant.powf(self.power),
            NearOrigin::Logarithmic { slope } => slope.powf(self.power),
            NearOrigin::Bounded { value } => value.powf(self.power),
        };
        let lo = RadialProfile::LOWER.ln();
        let hi = RadialProfile::UPPER.ln();
        (0..=8000)
            .map(|i| (lo + (hi - lo) * i as f64 / 8000.0).exp())
            .map(|r| self.f(r) / self.envelope(r))
            .fold(limit, f64::max)
    }

    /// Mass of the tail `∫_{|y|<ε} |y|^{d-1} R^r(y)` by the power-law form.
    fn origin_tail(&self, eps: f64) -> f64 {
        let d = self.d as f64;
        self.f(eps) * eps.powf(d) / (d + self.envelope_exponent())
    }

    /// `‖R^r‖_{L₁}`.
    pub fn l1_norm(&self) -> Result<f64, CovarianceError> {
        let d = self.d as i32;
        let q = integrate_log_scale(
            |r| r.powi(d - 1) * self.f(r),
            FLOOR,
            self.profile.upper(),
            OUTER,
        )?;
        Ok(sphere_area(self.d) * (q.value + self.origin_tail(FLOOR)))
    }

    /// `(R^r ∗ R^r)(x)` at `|x| = s`.
    pub fn value_at(&self, s: f64) -> Result<KernelValue, CovarianceError> {
        let s = s.abs();
        let upper = self.profile.upper();
        let d = self.d as f64;
        if s == 0.0 {
            if 2.0 * self.envelope_exponent() <= -d {
                return Ok(KernelValue::Singular);
            }
            let q = integrate_log_scale(|r| r.powi(self.d as i32 - 1) * self.f(r).powi(2), FLOOR, upper, OUTER)?;
            let tail = self.f(FLOOR).powi(2) * FLOOR.powf(d) / (d + 2.0 * self.envelope_exponent());
            return Ok(KernelValue::Finite(sphere_area(self.d) * (q.value + tail)));
        }
        let eps = FLOOR * s.min(1.0);
        let fs = self.f(s);
        if self.d == 1 {
            let near = integrate_log_scale(|y| self.f(y) * self.f(s - y), eps, s / 2.0, INNER)?;
            let far = integrate_log_scale(|y| self.f(y) * self.f(s + y), eps, upper, INNER)?;
            let tail = 2.0 * fs * self.origin_tail(eps);
            return Ok(KernelValue::Finite(2.0 * (near.value + far.value + tail)));
        }

        let mut failure = None;
        let mut inner = |theta: f64| -> f64 {
            let cos = theta.cos();
            let rho_max = if cos > 0.0 { (s / (2.0 * cos)).min(upper + s) } else { upper + s };
            let integrand = |rho: f64| {
                let dist = (rho * rho + s * s - 2.0 * rho * s * cos).max(0.0).sqrt();
                rho.powi(self.d as i32 - 1) * self.f(rho) * self.f(dist)
            };
            match integrate_log_scale(integrand, eps, rho_max, INNER) {
                Ok(q) => q.value + fs * self.origin_tail(eps),
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        };
        let angular = sphere_area(self.d - 1);
        let weight = |theta: f64| angular * theta.sin().powi(self.d as i32 - 2);
        let half = std::f64::consts::FRAC_PI_2;
        let a = integrate(|t| weight(t) * inner(t), 0.0, half, OUTER)?;
        let b = integrate(|t| weight(t) * inner(t), half, std::f64::consts::PI, OUTER)?;
        if let Some(e) = failure {
            return Err(e.into());
        }
        Ok(KernelValue::Finite(2.0 * (a.value + b.value)))
    }
}

/// Tabulated self-convolution with its envelope and decay diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelfConvolutionTable {
    pub table: KernelTable,
    pub power: f64,
    /// β in the envelope `h(x) = |x|^β` (0 when the kernel is bounded).
    pub envelope_exponent: f64,
    /// `sup R^r / h`.
    pub sup_ratio: f64,
    pub l1_norm: f64,
    /// `N′ = 2·N·‖R^r‖_{L₁}`, for which `R^r ∗ R^r ≤ N′ h(x/2)` holds pointwise.
    pub n_prime: f64,
    /// Largest `value / (N′ h(x/2))` over the table; at most 1 when the
    /// envelope holds.
    pub envelope_ratio: f64,
    /// Fraction of tabulated radii satisfying the envelope.
    pub envelope_fraction: f64,
    /// Least-squares decay rate of `ln value` for radii ≥ 6.
    pub tail_decay_rate: Option<f64>,
    /// Values strictly decrease beyond radius 6 with rate at least `r/6`.
    pub decays_exponentially: bool,
}

impl SelfConvolutionTable {
    pub fn to_csv(&self) -> String {
        self.table.to_csv()
    }
}

pub const DECAY_RADIUS: f64 = 6.0;

/// Tabulates `R_γ^r ∗ R_γ^r` at the given radii (a pole at 0 is skipped) and
/// checks it against the envelope and the exponential decay.
pub fn kernel_self_convolution(
    gamma: f64,
    power: f64,
    d: usize,
    radii: &[f64],
) -> Result<SelfConvolutionTable, CovarianceError> {
    let conv = SelfConvolution::new(gamma, power, d)?;
    let mut samples = Vec::with_capacity(radii.len());
    for &r in radii {
        if let KernelValue::Finite(v) = conv.value_at(r)? {
            samples.push((r.abs(), v));
        }
    }
    let sup_ratio = conv.sup_ratio();
    let l1_norm = conv.l1_norm()?;
    let n_prime = 2.0 * sup_ratio * l1_norm;
    let ratios: Vec<f64> = samples
        .iter()
        .map(|&(r, v)| v / (n_prime * conv.envelope(r / 2.0)))
        .collect();
    let envelope_ratio = ratios.iter().copied().fold(0.0, f64::max);
    let envelope_fraction = if ratios.is_empty() {
        0.0
    } else {
        ratios.iter().filter(|&&q| q <= 1.0).count() as f64 / ratios.len() as f64
    };

    let mut tail: Vec<(f64, f64)> = samples.iter().copied().filter(|&(r, _)| r >= DECAY_RADIUS).collect();
    tail.sort_by(|a, b| a.0.total_cmp(&b.0));
    let tail_decay_rate = if tail.len() >= 3 {
        let xs: Vec<f64> = tail.iter().map(|t| t.0).collect();
        let ys: Vec<f64> = tail.iter().map(|t| t.1.ln()).collect();
        Some(-crate::stats::least_squares(&xs, &ys).slope)
    } else {
        None
    };
    let decays_exponentially = tail.windows(2).all(|w| w[1].1 < w[0].1)
        && tail_decay_rate.is_some_and(|rate| rate >= power / DECAY_RADIUS);

    Ok(SelfConvolutionTable {
        table: KernelTable {
            gamma,
            d,
            samples,
            quadrature_tolerance: INNER.rel,
            near_origin: NearOrigin::classify(gamma, d),
        },
        power,
        envelope_exponent: conv.envelope_exponent(),
        sup_ratio,
        l1_norm,
        n_prime,
        envelope_ratio,
        envelope_fraction,
        tail_decay_rate,
        decays_exponentially,
    })
}
