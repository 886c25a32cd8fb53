//! Bessel potential kernels `R_γ`, the kernels of `(1 − Δ)^{-γ/2}`.
//!
//! `R_γ(x) = c(γ,d) ∫_0^∞ t^{(γ−d)/2} e^{-t − |x|²/(4t)} dt/t` with
//! `c(γ,d) = (4π)^{-d/2} / Γ(γ/2)`, which gives `∫ R_γ = 1`. The integral is
//! evaluated after `t = e^u`, centred on the maximum of the exponent.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use super::{norm, CovarianceError, KernelValue};
use crate::quadrature::{integrate, integrate_log_scale, Tolerance};

/// Tolerance used for every kernel evaluation. The integrand is rescaled by
/// its maximum, so the absolute part acts as a relative floor.
pub const KERNEL_TOLERANCE: Tolerance = Tolerance {
    abs: 1e-13,
    rel: 1e-11,
    max_subdivisions: 2000,
};

// exp(-46) ≈ 1e-20 relative to the peak is dropped
const LOG_CUTOFF: f64 = 46.0;

fn ln_normalization(gamma: f64, d: usize) -> f64 {
    -(d as f64 / 2.0) * (4.0 * PI).ln() - ln_gamma(gamma / 2.0)
}

fn check_order(gamma: f64, d: usize) -> Result<(), CovarianceError> {
    if d == 0 {
        return Err(CovarianceError::ParameterDomain("dimension must be positive".into()));
    }
    if !(gamma > 0.0 && gamma <= d as f64 + 2.0) {
        return Err(CovarianceError::ParameterDomain(format!(
            "Bessel order must lie in (0, d + 2] = (0, {}] (got {gamma})",
            d + 2
        )));
    }
    Ok(())
}

/// `ln R_γ(r)` for `r > 0`.
fn ln_kernel_positive(gamma: f64, d: usize, r: f64) -> Result<f64, CovarianceError> {
    let a = (gamma - d as f64) / 2.0;
    let b = r * r / 4.0;
    let phi = |u: f64| a * u - u.exp() - b * (-u).exp();
    // stationary point: e^{2u} − a e^u − b = 0
    let disc = (a * a + 4.0 * b).sqrt();
    let peak = if a >= 0.0 { (a + disc) / 2.0 } else { 2.0 * b / (disc - a) };
    let u_star = peak.ln();
    let phi_max = phi(u_star);

    let bracket = |direction: f64| {
        let mut step = 1.0;
        let mut u = u_star + direction * step;
        while phi(u) > phi_max - LOG_CUTOFF {
            step *= 2.0;
            u = u_star + direction * step;
        }
        u
    };
    let lo = bracket(-1.0);
    let hi = bracket(1.0);
    let integrand = |u: f64| (phi(u) - phi_max).exp();
    let left = integrate(integrand, lo, u_star, KERNEL_TOLERANCE)?;
    let right = integrate(integrand, u_star, hi, KERNEL_TOLERANCE)?;
    Ok(ln_normalization(gamma, d) + phi_max + (left.value + right.value).ln())
}

/// `R_γ` as a function of `|x|`.
pub fn bessel_kernel_radial(gamma: f64, d: usize, r: f64) -> Result<KernelValue, CovarianceError> {
    check_order(gamma, d)?;
    if !(r.is_finite()) {
        return Err(CovarianceError::ParameterDomain("radius must be finite".into()));
    }
    let r = r.abs();
    if r == 0.0 {
        let a = (gamma - d as f64) / 2.0;
        if a <= 0.0 {
            return Ok(KernelValue::Singular);
        }
        // the integral reduces to Γ(a)
        return Ok(KernelValue::Finite((ln_normalization(gamma, d) + ln_gamma(a)).exp()));
    }
    Ok(KernelValue::Finite(ln_kernel_positive(gamma, d, r)?.exp()))
}

/// Evaluates `R_γ(x)`. Returns [`KernelValue::Singular`] at the origin when
/// `γ ≤ d`.
pub fn bessel_kernel(gamma: f64, d: usize, x: &[f64]) -> Result<KernelValue, CovarianceError> {
    if x.len() != d {
        return Err(CovarianceError::DimensionMismatch {
            expected: d,
            got: x.len(),
        });
    }
    bessel_kernel_radial(gamma, d, norm(x))
}

/// `lim_{x→0} R_γ(x)|x|^{d−γ}` for `0 < γ < d`.
pub fn near_origin_constant(gamma: f64, d: usize) -> f64 {
    let d = d as f64;
    (-(d / 2.0) * PI.ln() - gamma * 2f64.ln() + ln_gamma((d - gamma) / 2.0) - ln_gamma(gamma / 2.0)).exp()
}

/// Behaviour of `R_γ` at the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NearOrigin {
    /// `R_γ(x) ~ constant · |x|^{exponent}` with `exponent = γ − d < 0`.
    Algebraic { exponent: f64, constant: f64 },
    /// `R_γ(x) ~ slope · ln(1/|x|)` (γ = d).
    Logarithmic { slope: f64 },
    /// `R_γ` is continuous at the origin.
    Bounded { value: f64 },
}

impl NearOrigin {
    pub fn classify(gamma: f64, d: usize) -> Self {
        let df = d as f64;
        if gamma < df {
            NearOrigin::Algebraic {
                exponent: gamma - df,
                constant: near_origin_constant(gamma, d),
            }
        } else if gamma == df {
            NearOrigin::Logarithmic {
                slope: 2.0 * (ln_normalization(gamma, d)).exp(),
            }
        } else {
            let a = (gamma - df) / 2.0;
            NearOrigin::Bounded {
                value: (ln_normalization(gamma, d) + ln_gamma(a)).exp(),
            }
        }
    }

    /// Power of `|x|` in the near-origin envelope (0 when not algebraic).
    pub fn exponent(&self) -> f64 {
        match self {
            NearOrigin::Algebraic { exponent, .. } => *exponent,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelTable {
    pub gamma: f64,
    pub d: usize,
    pub samples: Vec<(f64, f64)>,
    pub quadrature_tolerance: f64,
    pub near_origin: NearOrigin,
}

impl KernelTable {
    pub fn radii(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.1)
    }

    pub fn all_positive(&self) -> bool {
        self.values().all(|v| v > 0.0)
    }

    pub fn is_nonincreasing(&self) -> bool {
        self.samples.windows(2).all(|w| w[1].1 <= w[0].1)
    }

    /// Whether the tabulated radii reach down to `lo` and up to `hi`.
    pub fn covers(&self, lo: f64, hi: f64) -> bool {
        let min = self.radii().fold(f64::INFINITY, f64::min);
        let max = self.radii().fold(0.0, f64::max);
        min <= lo && max >= hi
    }

    pub fn max_value(&self) -> f64 {
        self.values().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("radius,value\n");
        for (r, v) in &self.samples {
            out.push_str(&format!("{r:.17e},{v:.17e}\n"));
        }
        out
    }
}

/// Log-spaced radii from 10⁻³ to 10, twenty per decade.
pub fn default_table_radii() -> Vec<f64> {
    (0..=80).map(|i| 10f64.powf(-3.0 + i as f64 / 20.0)).collect()
}

/// Tabulates `R_γ` at the given radii, skipping a pole at the origin.
pub fn tabulate_bessel(gamma: f64, d: usize, radii: &[f64]) -> Result<KernelTable, CovarianceError> {
    check_order(gamma, d)?;
    let mut samples = Vec::with_capacity(radii.len());
    for &r in radii {
        if let KernelValue::Finite(v) = bessel_kernel_radial(gamma, d, r)? {
            samples.push((r, v));
        }
    }
    Ok(KernelTable {
        gamma,
        d,
        samples,
        quadrature_tolerance: KERNEL_TOLERANCE.rel,
        near_origin: NearOrigin::classify(gamma, d),
    })
}

/// Fast evaluation of `R_γ^power` by log-log interpolation on a dense
/// log-spaced node set, with asymptotic extension outside it.
#[derive(Debug, Clone)]
pub struct RadialProfile {
    pub gamma: f64,
    pub d: usize,
    pub power: f64,
    pub near_origin: NearOrigin,
    ln_lo: f64,
    step: f64,
    ln_values: Vec<f64>,
}

impl RadialProfile {
    pub const LOWER: f64 = 1e-6;
    pub const UPPER: f64 = 80.0;
    const NODES: usize = 4000;

    pub fn new(gamma: f64, d: usize, power: f64) -> Result<Self, CovarianceError> {
        check_order(gamma, d)?;
        if !(power > 0.0 && power.is_finite()) {
            return Err(CovarianceError::ParameterDomain(format!("power must be positive (got {power})")));
        }
        let ln_lo = Self::LOWER.ln();
        let step = (Self::UPPER.ln() - ln_lo) / (Self::NODES - 1) as f64;
        let mut ln_values = Vec::with_capacity(Self::NODES);
        for i in 0..Self::NODES {
            let r = (ln_lo + step * i as f64).exp();
            ln_values.push(power * ln_kernel_positive(gamma, d, r)?);
        }
        Ok(Self {
            gamma,
            d,
            power,
            near_origin: NearOrigin::classify(gamma, d),
            ln_lo,
            step,
            ln_values,
        })
    }

    /// Envelope exponent of `R_γ^power` at the origin.
    pub fn origin_exponent(&self) -> f64 {
        self.power * self.near_origin.exponent()
    }

    pub fn upper(&self) -> f64 {
        Self::UPPER
    }

    /// `R_γ(r)^power`; `+∞` at a pole.
    pub fn eval(&self, r: f64) -> f64 {
        let r = r.abs();
        if r == 0.0 {
            return match self.near_origin {
                NearOrigin::Bounded { value } => value.powf(self.power),
                _ => f64::INFINITY,
            };
        }
        let lr = r.ln();
        let pos = (lr - self.ln_lo) / self.step;
        let last = self.ln_values.len() - 1;
        if pos < 0.0 {
            let v0 = self.ln_values[0];
            return match self.near_origin {
                NearOrigin::Algebraic { exponent, .. } => (v0 + self.power * exponent * (lr - self.ln_lo)).exp(),
                NearOrigin::Logarithmic { slope } => {
                    let base = (v0 / self.power).exp();
                    (base + slope * (self.ln_lo - lr)).powf(self.power)
                }
                NearOrigin::Bounded { .. } => v0.exp(),
            };
        }
        if pos >= last as f64 {
            // exponential tail: ln v linear in r through the last two nodes
            let r1 = (self.ln_lo + self.step * (last - 1) as f64).exp();
            let r2 = (self.ln_lo + self.step * last as f64).exp();
            let slope = (self.ln_values[last] - self.ln_values[last - 1]) / (r2 - r1);
            return (self.ln_values[last] + slope * (r - r2)).exp();
        }
        let i = pos.floor() as usize;
        let w = pos - i as f64;
        if i == 0 || i + 1 == last {
            return ((1.0 - w) * self.ln_values[i] + w * self.ln_values[i + 1]).exp();
        }
        // cubic Lagrange through nodes i-1..=i+2
        let [y0, y1, y2, y3] = [
            self.ln_values[i - 1],
            self.ln_values[i],
            self.ln_values[i + 1],
            self.ln_values[i + 2],
        ];
        let ln_v = -w * (w - 1.0) * (w - 2.0) / 6.0 * y0 + (w + 1.0) * (w - 1.0) * (w - 2.0) / 2.0 * y1
            - (w + 1.0) * w * (w - 2.0) / 2.0 * y2
            + (w + 1.0) * w * (w - 1.0) / 6.0 * y3;
        ln_v.exp()
    }
}

/// Cell averages of `R_γ` (d = 1) on the periodic grid with `n` cells of width
/// `L/n`, cell `j` centred at `signed(j)·L/n`. The origin cell is averaged
/// exactly through the log substitution, so the result is finite for every
/// `γ > 0`; its DFT times `Δx` approximates `(1+ξ²)^{-γ/2}·sinc(ξΔx/2)`.
pub fn sample_bessel_on_grid(gamma: f64, n: usize, length: f64) -> Result<Vec<f64>, CovarianceError> {
    check_order(gamma, 1)?;
    if n < 2 || !(length > 0.0) {
        return Err(CovarianceError::ParameterDomain("grid needs n ≥ 2 and L > 0".into()));
    }
    let dx = length / n as f64;
    let tol = Tolerance::new(1e-14, 1e-10);
    let kernel = |x: f64| bessel_kernel_radial(gamma, 1, x).map(|v| v.finite().unwrap_or(0.0));

    let mut half = vec![0.0; n / 2 + 1];
    // origin cell: (2/Δx) ∫_0^{Δx/2} R
    let mut failure = None;
    let floor = 1e-14 * dx;
    let q = integrate_log_scale(
        |x| match kernel(x) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        },
        floor,
        dx / 2.0,
        tol,
    )?;
    if let Some(e) = failure.take() {
        return Err(e);
    }
    half[0] = 2.0 * q.value / dx;
    for (j, slot) in half.iter_mut().enumerate().skip(1) {
        let centre = j as f64 * dx;
        let q = integrate(
            |x| match kernel(x) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            centre - dx / 2.0,
            centre + dx / 2.0,
            tol,
        )?;
        if let Some(e) = failure.take() {
            return Err(e);
        }
        *slot = q.value / dx;
    }
    Ok((0..n)
        .map(|j| {
            let k = crate::fft::signed_index(j, n).unsigned_abs() as usize;
            half[k]
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn value(gamma: f64, d: usize, r: f64) -> f64 {
        bessel_kernel_radial(gamma, d, r).unwrap().finite().unwrap()
    }

    #[test]
    fn closed_forms_in_one_and_three_dimensions() {
        for r in [0.01f64, 0.3, 1.0, 4.0, 20.0] {
            let one = (-r).exp() / 2.0;
            assert!((value(2.0, 1, r) - one).abs() <= 1e-10 * one, "d=1 r={r}");
            let three = (-r).exp() / (4.0 * PI * r);
            assert!((value(2.0, 3, r) - three).abs() <= 1e-10 * three, "d=3 r={r}");
        }
        assert!((value(2.0, 1, 0.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn unit_mass() {
        for (gamma, d) in [(0.5, 1), (1.0, 1), (1.5, 2), (0.7, 3)] {
            let profile_mass = integrate_log_scale(
                |r| super::super::sphere_area(d) * r.powi(d as i32 - 1) * value(gamma, d, r),
                1e-40,
                60.0,
                Tolerance::new(1e-12, 1e-9),
            )
            .unwrap()
            .value;
            assert!((profile_mass - 1.0).abs() < 1e-6, "γ={gamma} d={d}: {profile_mass}");
        }
    }

    #[test]
    fn origin_behaviour() {
        assert!(bessel_kernel_radial(0.5, 1, 0.0).unwrap().is_singular());
        assert!(bessel_kernel_radial(1.0, 1, 0.0).unwrap().is_singular());
        let c = near_origin_constant(0.5, 1);
        let close = value(0.5, 1, 1e-8) * 1e-4;
        assert!((close / c - 1.0).abs() < 1e-3, "{close} vs {c}");
    }

    #[test]
    fn order_domain() {
        assert!(bessel_kernel_radial(0.0, 1, 1.0).is_err());
        assert!(bessel_kernel_radial(3.5, 1, 1.0).is_err());
        assert!(bessel_kernel(1.0, 2, &[1.0]).is_err());
    }

    #[test]
    fn symmetric_in_x() {
        let a = bessel_kernel(0.7, 2, &[0.3, -1.2]).unwrap();
        let b = bessel_kernel(0.7, 2, &[-0.3, 1.2]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tables_are_monotone_and_cover_range() {
        for (gamma, d) in [(0.5, 1), (1.0, 1), (0.5, 2), (2.0, 2)] {
            let t = tabulate_bessel(gamma, d, &default_table_radii()).unwrap();
            assert!(t.all_positive() && t.is_nonincreasing());
            assert!(t.covers(1e-3, 10.0));
        }
        let csv = tabulate_bessel(1.0, 1, &[1.0, 2.0]).unwrap().to_csv();
        assert!(csv.starts_with("radius,value\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    #[test]
    fn profile_tracks_direct_evaluation() {
        let p = RadialProfile::new(0.5, 2, 1.5).unwrap();
        for r in [2e-6, 1e-3, 0.37, 5.0, 42.0] {
            let direct = value(0.5, 2, r).powf(1.5);
            assert!((p.eval(r) / direct - 1.0).abs() < 1e-4, "r={r}");
        }
        let below = value(0.5, 2, 1e-8).powf(1.5);
        assert!((p.eval(1e-8) / below - 1.0).abs() < 1e-3);
        let log = RadialProfile::new(1.0, 1, 1.0).unwrap();
        assert!((log.eval(1e-9) / value(1.0, 1, 1e-9) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn grid_cells_sum_to_unit_mass() {
        let n = 256;
        let l = 40.0;
        let cells = sample_bessel_on_grid(0.5, n, l).unwrap();
        let mass: f64 = cells.iter().sum::<f64>() * l / n as f64;
        assert!((mass - 1.0).abs() < 1e-7, "{mass}");
        assert_eq!(cells[1], cells[n - 1]);
    }
}
