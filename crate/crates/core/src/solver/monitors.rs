//! Diagnostics on fields and trajectory records.

use rustfft::num_complex::Complex64;

use super::coefficients::Coefficients;
use super::{SolverError, TrajectoryRecord};
use crate::fft::FftNd;
use crate::noise::GridSpec;
use crate::stats::{mean, standard_error};

/// `ψ_k(x) = sech(|x|/k)` with its gradient and Hessian.
fn sech_weight(k: f64, x: &[f64]) -> (f64, [f64; 3], [[f64; 3]; 3]) {
    let d = x.len();
    let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let s = 1.0 / (r / k).cosh();
    let th = (r / k).tanh();
    // g'(r)/r and g''(r) for g(r) = sech(r/k)
    let g1_over_r = if r > 1e-8 { -s * th / (k * r) } else { -s / (k * k) };
    let g2 = s * (th * th - s * s) / (k * k);
    let mut grad = [0.0; 3];
    let mut hess = [[0.0; 3]; 3];
    for i in 0..d {
        grad[i] = g1_over_r * x[i];
        for j in 0..d {
            let (ui, uj) = if r > 1e-8 { (x[i] / r, x[j] / r) } else { (0.0, 0.0) };
            let delta = if i == j { 1.0 } else { 0.0 };
            hess[i][j] = if r > 1e-8 {
                g2 * ui * uj + g1_over_r * (delta - ui * uj)
            } else {
                g1_over_r * delta
            };
        }
    }
    (s, grad, hess)
}

/// Residual of
/// `aⁱʲψ_{xⁱxʲ} + (2aⁱʲ_{xʲ} − bⁱ)ψ_{xⁱ} + (aⁱʲ_{xⁱxʲ} − bⁱ_{xⁱ} + c − 4K)ψ`
/// with `ψ = ψ_k` at every grid point.
pub fn lyapunov_residuals(coeffs: &Coefficients, k: u32, grid: &GridSpec, t: f64) -> Vec<f64> {
    let d = grid.d;
    let kf = k as f64;
    (0..grid.cells())
        .map(|flat| {
            let p = grid.point(flat);
            let x = &p[..d];
            let (psi, grad, hess) = sech_weight(kf, x);
            let mut res = (coeffs.c.value(t, x) - 4.0 * coeffs.k) * psi;
            for i in 0..d {
                let mut first = -coeffs.b[i].value(t, x);
                res -= coeffs.b[i].derivative(t, x, i) * psi;
                for j in 0..d {
                    let a = &coeffs.a[i * d + j];
                    res += a.value(t, x) * hess[i][j];
                    first += 2.0 * a.derivative(t, x, j);
                    res += a.second_derivative(t, x, i, j) * psi;
                }
                res += first * grad[i];
            }
            res
        })
        .collect()
}

/// Largest residual over the grid; `≤ 0` certifies the inequality there.
pub fn lyapunov_check(coeffs: &Coefficients, k: u32, grid: &GridSpec, t: f64) -> f64 {
    lyapunov_residuals(coeffs, k, grid, t)
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `‖(1−Δ)^{γ/2}u‖_{L_p}` with the multiplier `(1+|ξ|²)^{γ/2}` on the
/// discrete dual lattice and the cell-weighted grid norm.
pub fn discrete_bessel_norm(field: &[f64], gamma: f64, p: f64, grid: &GridSpec) -> f64 {
    let cells = grid.cells();
    let filtered: Vec<f64> = if gamma == 0.0 {
        field.to_vec()
    } else {
        let fft = FftNd::new(grid.n, grid.d);
        let mut buf: Vec<Complex64> = field.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft.forward(&mut buf);
        for (m, z) in buf.iter_mut().enumerate() {
            let xi = grid.frequency(m);
            let xi2: f64 = xi[..grid.d].iter().map(|v| v * v).sum();
            *z *= (1.0 + xi2).powf(gamma / 2.0) / cells as f64;
        }
        fft.inverse(&mut buf);
        buf.iter().map(|z| z.re).collect()
    };
    let cell = grid.cell_volume();
    if p.is_infinite() {
        return filtered.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    (cell * filtered.iter().map(|v| v.abs().powf(p)).sum::<f64>()).powf(1.0 / p)
}

/// Mean and standard error over paths of `l1_mass(t) − l1_mass(0)`.
pub fn mass_martingale_stat(records: &[TrajectoryRecord], t: f64) -> Result<(f64, f64), SolverError> {
    let first = records
        .first()
        .ok_or_else(|| SolverError::Statistics("no records".into()))?;
    if records.len() < 2 {
        return Err(SolverError::Statistics("need at least two records".into()));
    }
    for r in records {
        if r.fingerprint != first.fingerprint || r.times != first.times {
            return Err(SolverError::Statistics(format!(
                "record of stream {} has a different configuration or time grid",
                r.stream
            )));
        }
    }
    let tol = 1e-9 * t.abs().max(first.dt);
    let idx = first
        .times
        .iter()
        .position(|&s| (s - t).abs() <= tol)
        .ok_or_else(|| SolverError::Statistics(format!("time {t} is not a recorded time")))?;
    let drifts: Vec<f64> = records.iter().map(|r| r.l1_mass[idx] - r.l1_mass[0]).collect();
    Ok((mean(&drifts), standard_error(&drifts)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::coefficients::{CoefficientPreset, Field};
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    #[test]
    fn heat_residual_at_origin() {
        let grid = GridSpec::new(1, 64, 10.0).unwrap();
        let coeffs = Coefficients::preset(CoefficientPreset::Heat, 1, grid.length, 1.0);
        let res = lyapunov_residuals(&coeffs, 1, &grid, 0.0);
        // x = 0 sits at index n/2
        assert!((res[32] + 5.0).abs() < 1e-14);
        assert!(lyapunov_check(&coeffs, 1, &grid, 0.0) <= 0.0);
    }

    #[test]
    fn violating_preset_is_positive() {
        let grid = GridSpec::new(1, 64, 10.0).unwrap();
        let coeffs = Coefficients::preset(CoefficientPreset::Violating, 1, grid.length, 1.0);
        assert!(lyapunov_check(&coeffs, 1, &grid, 0.0) > 0.0);
    }

    #[test]
    fn sech_derivatives_match_differences() {
        let h = 1e-5;
        for x in [[0.3, -0.7], [2.0, 1.0], [1e-3, 0.0]] {
            let (_, g, hs) = sech_weight(2.0, &x);
            let f = |y: [f64; 2]| sech_weight(2.0, &y).0;
            let gx = (f([x[0] + h, x[1]]) - f([x[0] - h, x[1]])) / (2.0 * h);
            assert!((gx - g[0]).abs() < 1e-8, "{gx} vs {}", g[0]);
            let gy = |y: [f64; 2]| sech_weight(2.0, &y).1[0];
            let hxy = (gy([x[0], x[1] + h]) - gy([x[0], x[1] - h])) / (2.0 * h);
            assert!((hxy - hs[0][1]).abs() < 1e-6, "{hxy} vs {}", hs[0][1]);
        }
    }

    #[test]
    fn bessel_norm_identity_and_single_mode() {
        let grid = GridSpec::new(1, 64, 10.0).unwrap();
        let u: Vec<f64> = (0..64).map(|j| (2.0 * PI * grid.coordinate(j) / grid.length).cos()).collect();
        let l2 = discrete_bessel_norm(&u, 0.0, 2.0, &grid);
        let direct = (grid.dx() * u.iter().map(|v| v * v).sum::<f64>()).sqrt();
        assert!((l2 - direct).abs() < 1e-14);
        let g = discrete_bessel_norm(&u, 1.3, 2.0, &grid);
        let factor = (1.0 + (2.0 * PI / grid.length).powi(2)).powf(0.65);
        assert!((g - factor * direct).abs() < 1e-12);
    }

    #[test]
    fn bessel_norm_matches_dense_multiplier() {
        let grid = GridSpec::new(1, 64, 7.0).unwrap();
        let n = 64;
        let u: Vec<f64> = (0..n).map(|j| ((j * 7919) % 97) as f64 / 97.0 - 0.5).collect();
        // M = F⁻¹ diag(m) F as a real matrix
        let (gamma, p) = (0.7, 3.0);
        let m = DMatrix::from_fn(n, n, |j, l| {
            (0..n)
                .map(|k| {
                    let s = crate::fft::signed_index(k, n) as f64;
                    let xi = 2.0 * PI * s / grid.length;
                    (1.0 + xi * xi).powf(gamma / 2.0) * (2.0 * PI * s * (j as f64 - l as f64) / n as f64).cos()
                })
                .sum::<f64>()
                / n as f64
        });
        let v = m * DVector::from_vec(u.clone());
        let oracle = (grid.dx() * v.iter().map(|x| x.abs().powf(p)).sum::<f64>()).powf(1.0 / p);
        assert!((discrete_bessel_norm(&u, gamma, p, &grid) - oracle).abs() < 1e-10);
    }

    #[test]
    fn varying_coefficients_certify() {
        let grid = GridSpec::new(1, 256, 8.0 * PI).unwrap();
        for preset in [CoefficientPreset::VaryingDiffusion, CoefficientPreset::Drift] {
            let coeffs = Coefficients::preset(preset, 1, grid.length, 1.0);
            for k in [1, 2, 4] {
                assert!(lyapunov_check(&coeffs, k, &grid, 0.0) <= 0.0, "{preset:?} k={k}");
            }
        }
        let mut big_c = Coefficients::preset(CoefficientPreset::Heat, 1, grid.length, 1.0);
        big_c.c = Field::constant(10.0);
        assert!(lyapunov_check(&big_c, 2, &grid, 0.0) > 0.0);
    }
}
