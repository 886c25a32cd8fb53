//! Globally adaptive Gauss–Kronrod (7/15) quadrature on finite intervals.
//!
//! Subintervals are kept in a max-heap keyed by their error estimate and the
//! worst one is bisected until the summed estimate meets the tolerance.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use thiserror::Error;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Absolute and relative targets for [`integrate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs: f64,
    pub rel: f64,
    pub max_subdivisions: usize,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs: 1e-8,
            rel: 1e-6,
            max_subdivisions: 2000,
        }
    }
}

impl Tolerance {
    pub fn new(abs: f64, rel: f64) -> Self {
        Self {
            abs,
            rel,
            ..Self::default()
        }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs.max(self.rel * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub abs_error: f64,
    pub evaluations: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadratureError {
    #[error("quadrature did not converge: estimated error {achieved:.3e} exceeds target {requested:.3e} after {subdivisions} subdivisions")]
    NoConvergence {
        value: f64,
        achieved: f64,
        requested: f64,
        subdivisions: usize,
    },
    #[error("integrand returned a non-finite value at x = {at}")]
    NonFinite { at: f64 },
}

#[derive(Debug)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> Result<(f64, f64), QuadratureError> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    if !fc.is_finite() {
        return Err(QuadratureError::NonFinite { at: center });
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (j, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let dx = half * x;
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        if !f1.is_finite() {
            return Err(QuadratureError::NonFinite { at: center - dx });
        }
        if !f2.is_finite() {
            return Err(QuadratureError::NonFinite { at: center + dx });
        }
        kronrod += w * (f1 + f2);
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let value = kronrod * half;
    let error = ((kronrod - gauss) * half).abs();
    Ok((value, error))
}

/// Integrates `f` over `[a, b]`.
///
/// The integrand is never evaluated at the endpoints, so integrable endpoint
/// singularities are allowed (convergence is then algebraic).
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: Tolerance,
) -> Result<Quadrature, QuadratureError> {
    if a == b {
        return Ok(Quadrature {
            value: 0.0,
            abs_error: 0.0,
            evaluations: 0,
        });
    }
    if b < a {
        let q = integrate(f, b, a, tol)?;
        return Ok(Quadrature {
            value: -q.value,
            ..q
        });
    }

    let (value, error) = kronrod15(&mut f, a, b)?;
    let mut evaluations = 15;
    let mut total = value;
    let mut total_err = error;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });

    let mut subdivisions = 0;
    while total_err > tol.target(total) {
        if subdivisions >= tol.max_subdivisions {
            return Err(QuadratureError::NoConvergence {
                value: total,
                achieved: total_err,
                requested: tol.target(total),
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap never empties");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval can no longer be split in floating point
            heap.push(worst);
            return Err(QuadratureError::NoConvergence {
                value: total,
                achieved: total_err,
                requested: tol.target(total),
                subdivisions,
            });
        }
        let (v1, e1) = kronrod15(&mut f, worst.a, mid)?;
        let (v2, e2) = kronrod15(&mut f, mid, worst.b)?;
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        subdivisions += 1;
    }

    // Re-sum from the segments to shed accumulated cancellation error.
    let (mut value, mut abs_error) = (0.0, 0.0);
    for seg in heap.iter() {
        value += seg.value;
        abs_error += seg.error;
    }
    Ok(Quadrature {
        value,
        abs_error,
        evaluations,
    })
}

/// Integrates `f` over `(0, upper]` through the substitution `x = e^u`,
/// which turns an algebraic singularity `x^β` (β > -1) at the origin into an
/// exponentially decaying tail. The piece below `floor` is dropped, so callers
/// pick `floor` small enough for the neglected mass to be irrelevant.
pub fn integrate_log_scale<F: FnMut(f64) -> f64>(
    mut f: F,
    floor: f64,
    upper: f64,
    tol: Tolerance,
) -> Result<Quadrature, QuadratureError> {
    debug_assert!(floor > 0.0 && upper > floor);
    integrate(
        |u| {
            let x = u.exp();
            x * f(x)
        },
        floor.ln(),
        upper.ln(),
        tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let q = integrate(|x| 3.0 * x * x, 0.0, 2.0, Tolerance::default()).unwrap();
        assert!((q.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn gaussian_integral() {
        let q = integrate(|x: f64| (-x * x).exp(), -12.0, 12.0, Tolerance::new(1e-13, 1e-13)).unwrap();
        assert!((q.value - std::f64::consts::PI.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity_converges() {
        // ∫_0^1 x^{-1/2} dx = 2
        let q = integrate(|x: f64| x.powf(-0.5), 0.0, 1.0, Tolerance::new(1e-9, 1e-9)).unwrap();
        assert!((q.value - 2.0).abs() < 1e-8, "{}", q.value);
    }

    #[test]
    fn log_scale_handles_strong_singularity() {
        // ∫_0^1 x^{-0.9} dx = 10
        let q = integrate_log_scale(|x: f64| x.powf(-0.9), 1e-200, 1.0, Tolerance::new(1e-12, 1e-12)).unwrap();
        assert!((q.value - 10.0).abs() < 1e-9, "{}", q.value);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let q = integrate(|x| x, 1.0, 0.0, Tolerance::default()).unwrap();
        assert!((q.value + 0.5).abs() < 1e-14);
    }

    #[test]
    fn reports_non_convergence() {
        let tol = Tolerance {
            abs: 1e-15,
            rel: 0.0,
            max_subdivisions: 3,
        };
        let err = integrate(|x: f64| (1.0 / x).sin(), 0.0, 1.0, tol).unwrap_err();
        assert!(matches!(err, QuadratureError::NoConvergence { .. }));
    }

    #[test]
    fn non_finite_integrand_is_an_error() {
        let err = integrate(|x: f64| if x > 0.5 { f64::NAN } else { 1.0 }, 0.0, 1.0, Tolerance::default()).unwrap_err();
        assert!(matches!(err, QuadratureError::NonFinite { .. }));
    }
}
