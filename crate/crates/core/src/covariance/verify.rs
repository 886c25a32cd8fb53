//! Numerical invariant suite for the covariance module: Fourier pairs on
//! periodic grids, closed forms, monotone tables, and the self-convolution
//! envelope.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{
    bessel_kernel_radial, default_table_radii, kernel_self_convolution, near_origin_constant,
    sample_bessel_on_grid, sphere_area, tabulate_bessel, CovarianceError, CovarianceKind, CovarianceModel,
    KernelValue,
};
use crate::fft::{signed_index, unravel, FftNd};
use crate::quadrature::{integrate_log_scale, Tolerance};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    /// `<=` or `>=`: how `value` is compared with `threshold`.
    pub relation: String,
    pub threshold: f64,
    pub detail: String,
}

impl CheckOutcome {
    fn at_most(name: impl Into<String>, value: f64, threshold: f64, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed: value <= threshold,
            value,
            relation: "<=".into(),
            threshold,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralComparison {
    pub max_rel_error: f64,
    pub worst_frequency: f64,
    pub frequencies_checked: usize,
}

fn track(cmp: &mut SpectralComparison, xi: f64, got: f64, expected: f64) {
    let err = (got - expected).abs() / expected.abs();
    cmp.frequencies_checked += 1;
    if err > cmp.max_rel_error {
        cmp.max_rel_error = err;
        cmp.worst_frequency = xi;
    }
}

/// Compares `Δx·DFT` of the cell-averaged `R_γ` (d = 1) against
/// `(1+ξ²)^{-γ/2}` at angular frequencies `ξ = 2πm/L` with `|ξ| ≤ xi_max`.
/// Both sides carry the common factor `(2π)^{-1/2}`.
pub fn bessel_fourier_identity(
    gamma: f64,
    n: usize,
    length: f64,
    xi_max: f64,
) -> Result<SpectralComparison, CovarianceError> {
    let cells = sample_bessel_on_grid(gamma, n, length)?;
    let dx = length / n as f64;
    let mut data: Vec<Complex64> = cells.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftNd::new(n, 1).forward(&mut data);
    let mut cmp = SpectralComparison {
        max_rel_error: 0.0,
        worst_frequency: 0.0,
        frequencies_checked: 0,
    };
    for (m, value) in data.iter().enumerate() {
        let xi = 2.0 * PI * signed_index(m, n) as f64 / length;
        if xi.abs() > xi_max {
            continue;
        }
        track(&mut cmp, xi, value.re * dx, (1.0 + xi * xi).powf(-gamma / 2.0));
    }
    Ok(cmp)
}

/// Fourier round trip for a covariance on a periodic grid: `(2π)^{-d/2}Δx^d`
/// times the DFT of the sampled `f` against the density of ν.
///
/// Gaussian kernels are point-sampled and compared wherever the density
/// exceeds 10⁻⁶ of its peak. Riesz kernels (d = 1 only) are multiplied by a
/// Gaussian window of width `L/8`, cell-averaged, and compared on
/// `2 ≤ |ξ| ≤ min(25, πn/(2L))`, where the window's smoothing is below 1%.
pub fn covariance_round_trip(
    model: &CovarianceModel,
    n: usize,
    length: f64,
) -> Result<SpectralComparison, CovarianceError> {
    model.validate()?;
    let d = model.d;
    let dx = length / n as f64;
    let fft = FftNd::new(n, d);
    let mut data = vec![Complex64::default(); fft.len()];
    let mut idx = [0usize; 3];
    let band: (f64, f64);
    match model.kind {
        CovarianceKind::White => {
            return Err(CovarianceError::ParameterDomain(
                "white noise has no pointwise covariance to sample".into(),
            ))
        }
        CovarianceKind::Gaussian { c } => {
            for (flat, slot) in data.iter_mut().enumerate() {
                unravel(flat, n, d, &mut idx[..d]);
                let r2: f64 = idx[..d].iter().map(|&k| (signed_index(k, n) as f64 * dx).powi(2)).sum();
                *slot = Complex64::new((-c * r2).exp(), 0.0);
            }
            band = (0.0, f64::INFINITY);
        }
        CovarianceKind::Riesz { alpha } => {
            if d != 1 {
                return Err(CovarianceError::ParameterDomain(
                    "the Riesz round trip is implemented for d = 1".into(),
                ));
            }
            let sigma = length / 8.0;
            let antiderivative = |x: f64| x.powf(1.0 - alpha) / (1.0 - alpha);
            for (j, slot) in data.iter_mut().enumerate() {
                let centre = (signed_index(j, n) as f64 * dx).abs();
                let average = if centre == 0.0 {
                    2.0 * antiderivative(dx / 2.0) / dx
                } else {
                    (antiderivative(centre + dx / 2.0) - antiderivative(centre - dx / 2.0)) / dx
                };
                let window = (-centre * centre / (2.0 * sigma * sigma)).exp();
                *slot = Complex64::new(average * window, 0.0);
            }
            band = (2.0, 25f64.min(PI * n as f64 / (2.0 * length)));
        }
    }
    fft.forward(&mut data);
    let scale = (2.0 * PI).powf(-(d as f64) / 2.0) * dx.powi(d as i32);
    let peak = model.spectral_density_radial(0.0).finite().unwrap_or(f64::INFINITY);
    let mut cmp = SpectralComparison {
        max_rel_error: 0.0,
        worst_frequency: 0.0,
        frequencies_checked: 0,
    };
    for (flat, value) in data.iter().enumerate() {
        unravel(flat, n, d, &mut idx[..d]);
        let rho = idx[..d]
            .iter()
            .map(|&k| (2.0 * PI * signed_index(k, n) as f64 / length).powi(2))
            .sum::<f64>()
            .sqrt();
        if rho < band.0 || rho > band.1 {
            continue;
        }
        let KernelValue::Finite(expected) = model.spectral_density_radial(rho) else {
            continue;
        };
        if peak.is_finite() && expected < 1e-6 * peak {
            continue;
        }
        track(&mut cmp, rho, value.re * scale, expected);
    }
    Ok(cmp)
}

fn closed_form_checks(d: usize, out: &mut Vec<CheckOutcome>) -> Result<(), CovarianceError> {
    let value = |gamma: f64, r: f64| bessel_kernel_radial(gamma, d, r).map(|v| v.finite().unwrap_or(f64::NAN));
    match d {
        1 => {
            let at0 = value(2.0, 0.0)?;
            out.push(CheckOutcome::at_most("bessel R_2(0) = 1/2", (at0 - 0.5).abs(), 1e-6, format!("{at0:.12}")));
            let at1 = value(2.0, 1.0)?;
            let expected = (-1f64).exp() / 2.0;
            out.push(CheckOutcome::at_most(
                "bessel R_2(1) = e^-1/2",
                (at1 - expected).abs(),
                1e-6,
                format!("{at1:.12} vs {expected:.12}"),
            ));
        }
        3 => {
            let mut worst: f64 = 0.0;
            for r in [0.1f64, 1.0, 3.0] {
                let expected = (-r).exp() / (4.0 * PI * r);
                worst = worst.max((value(2.0, r)? / expected - 1.0).abs());
            }
            out.push(CheckOutcome::at_most("bessel R_2 = e^-r/(4πr)", worst, 1e-6, "relative error"));
        }
        _ => {}
    }
    for gamma in [0.5, 1.5] {
        let mass = integrate_log_scale(
            |r| sphere_area(d) * r.powi(d as i32 - 1) * value(gamma, r).unwrap_or(f64::NAN),
            1e-40,
            60.0,
            Tolerance::new(1e-12, 1e-9),
        )?
        .value;
        out.push(CheckOutcome::at_most(
            format!("bessel unit mass γ={gamma}"),
            (mass - 1.0).abs(),
            1e-6,
            format!("∫R = {mass:.10}"),
        ));
    }
    let gamma = d as f64 - 0.5;
    let c = near_origin_constant(gamma, d);
    let r = 1e-8;
    let ratio = value(gamma, r)? * r.powf(d as f64 - gamma) / c;
    out.push(CheckOutcome::at_most(
        format!("bessel near-origin constant γ={gamma}"),
        (ratio - 1.0).abs(),
        1e-3,
        format!("R(x)|x|^(d-γ)/C = {ratio:.8}"),
    ));
    Ok(())
}

/// Runs the whole suite for dimension `d` (1, 2 or 3).
pub fn run_kernel_suite(d: usize) -> Result<Vec<CheckOutcome>, CovarianceError> {
    if !(1..=3).contains(&d) {
        return Err(CovarianceError::ParameterDomain(format!("suite covers d ∈ {{1,2,3}} (got {d})")));
    }
    let mut out = Vec::new();
    closed_form_checks(d, &mut out)?;

    for gamma in [0.5, 1.0, 2.0] {
        let table = tabulate_bessel(gamma, d, &default_table_radii())?;
        let ok = table.all_positive() && table.is_nonincreasing() && table.covers(1e-3, 10.0);
        out.push(CheckOutcome {
            name: format!("bessel table monotone γ={gamma}"),
            passed: ok,
            value: if ok { 0.0 } else { 1.0 },
            relation: "<=".into(),
            threshold: 0.0,
            detail: format!("{} radii in [1e-3, 10]", table.samples.len()),
        });
    }

    if d == 1 {
        for gamma in [0.5, 1.0, 2.0] {
            let cmp = bessel_fourier_identity(gamma, 4096, 40.0, 25.0)?;
            out.push(CheckOutcome::at_most(
                format!("bessel Fourier identity γ={gamma}"),
                cmp.max_rel_error,
                0.02,
                format!("n=4096 L=40 |ξ|≤25, worst at ξ={:.3}", cmp.worst_frequency),
            ));
        }
        let riesz = covariance_round_trip(&CovarianceModel::riesz(0.5, 1)?, 4096, 40.0)?;
        out.push(CheckOutcome::at_most(
            "riesz α=0.5 Fourier round trip",
            riesz.max_rel_error,
            0.02,
            format!("{} frequencies", riesz.frequencies_checked),
        ));
    }
    let (n, length) = match d {
        1 => (256, 40.0),
        2 => (128, 24.0),
        _ => (48, 16.0),
    };
    let gauss = covariance_round_trip(&CovarianceModel::gaussian(1.0, d)?, n, length)?;
    out.push(CheckOutcome::at_most(
        "gaussian c=1 Fourier round trip",
        gauss.max_rel_error,
        0.02,
        format!("n={n} L={length}, {} frequencies", gauss.frequencies_checked),
    ));

    let mut radii = vec![0.0];
    radii.extend(default_table_radii());
    let cases: &[(f64, f64)] = match d {
        1 => &[(0.8, 1.0), (0.7, 4.0 / 3.0)],
        2 => &[(0.5, 1.0)],
        _ => &[(1.0, 1.0)],
    };
    for &(gamma, r) in cases {
        let table = kernel_self_convolution(gamma, r, d, &radii)?;
        out.push(CheckOutcome::at_most(
            format!("self-convolution envelope γ={gamma} r={r:.4}"),
            1.0 - table.envelope_fraction,
            0.0,
            format!("N'={:.4e}, max ratio {:.4}", table.n_prime, table.envelope_ratio),
        ));
        out.push(CheckOutcome {
            name: format!("self-convolution decay γ={gamma} r={r:.4}"),
            passed: table.decays_exponentially,
            value: table.tail_decay_rate.unwrap_or(f64::NAN),
            relation: ">=".into(),
            threshold: r / 6.0,
            detail: "fitted rate beyond radius 6".into(),
        });
        if r == 1.0 {
            // semigroup: R_γ ∗ R_γ = R_{2γ}
            let mut worst: f64 = 0.0;
            for &(x, v) in &table.table.samples {
                if let KernelValue::Finite(e) = bessel_kernel_radial(2.0 * gamma, d, x)? {
                    worst = worst.max((v / e - 1.0).abs());
                }
            }
            out.push(CheckOutcome::at_most(
                format!("self-convolution semigroup γ={gamma}"),
                worst,
                1e-3,
                "max relative deviation from R_2γ",
            ));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fourier_identity_is_tight_for_smooth_kernel() {
        // cell averaging multiplies the transform by sinc(ξΔx/2)
        let (n, l, xi_max) = (1024, 40.0, 10.0);
        let cmp = bessel_fourier_identity(2.0, n, l, xi_max).unwrap();
        let half = cmp.worst_frequency.abs() * l / n as f64 / 2.0;
        let deficit = 1.0 - half.sin() / half;
        assert!((cmp.max_rel_error - deficit).abs() < 1e-4, "{cmp:?} vs {deficit}");
    }

    #[test]
    fn gaussian_round_trip_two_dimensions() {
        let cmp = covariance_round_trip(&CovarianceModel::gaussian(1.0, 2).unwrap(), 64, 20.0).unwrap();
        assert!(cmp.max_rel_error < 1e-6, "{cmp:?}");
        assert!(cmp.frequencies_checked > 100);
    }

    #[test]
    fn white_round_trip_is_rejected() {
        assert!(covariance_round_trip(&CovarianceModel::white(), 64, 10.0).is_err());
    }
}
