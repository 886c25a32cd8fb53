//! Second-order centered differences on the periodic grid and the implicit
//! solve `(I − dt·𝓛)v = r`.

use rustfft::num_complex::Complex64;

use super::coefficients::{Coefficients, OperatorForm};
use super::SolverError;
use crate::fft::{unravel, FftNd};
use crate::noise::GridSpec;

/// Relative residual at which the iterative solve stops.
pub const SOLVE_TOLERANCE: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

#[derive(Debug, Clone)]
struct Neighbours {
    n: usize,
    strides: [usize; 3],
}

impl Neighbours {
    fn new(grid: &GridSpec) -> Self {
        let mut strides = [0; 3];
        for (axis, s) in strides.iter_mut().enumerate().take(grid.d) {
            *s = grid.n.pow((grid.d - 1 - axis) as u32);
        }
        Self { n: grid.n, strides }
    }

    #[inline]
    fn plus(&self, flat: usize, axis: usize) -> usize {
        let s = self.strides[axis];
        if (flat / s) % self.n == self.n - 1 {
            flat + s - self.n * s
        } else {
            flat + s
        }
    }

    #[inline]
    fn minus(&self, flat: usize, axis: usize) -> usize {
        let s = self.strides[axis];
        if (flat / s) % self.n == 0 {
            flat + self.n * s - s
        } else {
            flat - s
        }
    }
}

/// Coefficients frozen at one time.
#[derive(Debug, Clone)]
enum Frozen {
    Constant {
        a: Vec<f64>,
        b: Vec<f64>,
        c: f64,
    },
    Variable {
        /// `a_ii` at `x + ½Δx eᵢ` (divergence form) or at `x`.
        diag: Vec<Vec<f64>>,
        /// `a_ij`, `i < j`, at the nodes, in `(i, j)` order.
        mixed: Vec<Vec<f64>>,
        b: Vec<Vec<f64>>,
        c: Vec<f64>,
    },
}

/// The frozen operator `𝓛_t` on one grid.
#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub grid: GridSpec,
    pub form: OperatorForm,
    frozen: Frozen,
    nb: Neighbours,
    fft: FftNd,
    /// Mean coefficients used for the FFT solve (exact when constant).
    mean: (Vec<f64>, Vec<f64>, f64),
    scratch: Vec<Complex64>,
    /// `(dt, 1/(N(1 − dt·symbol)))` for the last `dt` used.
    inverse_symbol: Option<(f64, Vec<Complex64>)>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

impl DiscreteOperator {
    pub fn new(coeffs: &Coefficients, grid: &GridSpec, t: f64) -> Result<Self, SolverError> {
        coeffs.validate()?;
        if coeffs.d != grid.d {
            return Err(SolverError::InvalidCoefficients(format!(
                "coefficient dimension {} differs from grid dimension {}",
                coeffs.d, grid.d
            )));
        }
        if !coeffs.is_periodic_on(grid) {
            return Err(SolverError::InvalidCoefficients(
                "coefficient wavevectors must be multiples of 2π/L on the periodic box".into(),
            ));
        }
        let mut op = Self {
            grid: *grid,
            form: coeffs.form,
            frozen: Frozen::Constant {
                a: vec![],
                b: vec![],
                c: 0.0,
            },
            nb: Neighbours::new(grid),
            fft: FftNd::new(grid.n, grid.d),
            mean: (vec![], vec![], 0.0),
            scratch: vec![Complex64::default(); grid.cells()],
            inverse_symbol: None,
        };
        op.refreeze(coeffs, t);
        Ok(op)
    }

    /// Re-evaluates the coefficients at time `t`.
    pub fn refreeze(&mut self, coeffs: &Coefficients, t: f64) {
        self.inverse_symbol = None;
        let grid = self.grid;
        let d = grid.d;
        let origin = vec![0.0; d];
        if coeffs.is_spatially_constant() {
            let a: Vec<f64> = coeffs.a.iter().map(|f| f.value(t, &origin)).collect();
            let b: Vec<f64> = coeffs.b.iter().map(|f| f.value(t, &origin)).collect();
            let c = coeffs.c.value(t, &origin);
            self.mean = (a.clone(), b.clone(), c);
            self.frozen = Frozen::Constant { a, b, c };
            return;
        }
        let cells = grid.cells();
        let half = grid.dx() / 2.0;
        let nodes: Vec<[f64; 3]> = (0..cells).map(|f| grid.point(f)).collect();
        let sample = |f: &super::coefficients::Field, shift: Option<usize>| -> Vec<f64> {
            nodes
                .iter()
                .map(|p| {
                    let mut x = *p;
                    if let Some(axis) = shift {
                        x[axis] += half;
                    }
                    f.value(t, &x[..d])
                })
                .collect()
        };
        let staggered = self.form == OperatorForm::Divergence;
        let diag: Vec<Vec<f64>> = (0..d)
            .map(|i| sample(&coeffs.a[i * d + i], staggered.then_some(i)))
            .collect();
        let mut mixed = Vec::new();
        for i in 0..d {
            for j in i + 1..d {
                mixed.push(sample(&coeffs.a[i * d + j], None));
            }
        }
        let b: Vec<Vec<f64>> = coeffs.b.iter().map(|f| sample(f, None)).collect();
        let c = sample(&coeffs.c, None);
        let mut mean_a = vec![0.0; d * d];
        let mut k = 0;
        for i in 0..d {
            mean_a[i * d + i] = mean(&diag[i]);
            for j in i + 1..d {
                mean_a[i * d + j] = mean(&mixed[k]);
                mean_a[j * d + i] = mean_a[i * d + j];
                k += 1;
            }
        }
        self.mean = (mean_a, b.iter().map(|v| mean(v)).collect(), mean(&c));
        self.frozen = Frozen::Variable { diag, mixed, b, c };
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.frozen, Frozen::Constant { .. })
    }

    /// `out = 𝓛u`.
    pub fn apply(&self, u: &[f64], out: &mut [f64]) {
        let d = self.grid.d;
        let h = self.grid.dx();
        let (h2, h4, h2c) = (1.0 / (h * h), 1.0 / (4.0 * h * h), 1.0 / (2.0 * h));
        let nb = &self.nb;
        match &self.frozen {
            Frozen::Constant { a, b, c } => {
                for (x, o) in out.iter_mut().enumerate() {
                    let mut acc = c * u[x];
                    for i in 0..d {
                        let (p, m) = (nb.plus(x, i), nb.minus(x, i));
                        acc += a[i * d + i] * (u[p] - 2.0 * u[x] + u[m]) * h2;
                        acc += b[i] * (u[p] - u[m]) * h2c;
                        for j in i + 1..d {
                            acc += 2.0 * a[i * d + j] * mixed_difference(nb, u, x, i, j) * h4;
                        }
                    }
                    *o = acc;
                }
            }
            Frozen::Variable { diag, mixed, b, c } => match self.form {
                OperatorForm::NonDivergence => {
                    for (x, o) in out.iter_mut().enumerate() {
                        let mut acc = c[x] * u[x];
                        let mut k = 0;
                        for i in 0..d {
                            let (p, m) = (nb.plus(x, i), nb.minus(x, i));
                            acc += diag[i][x] * (u[p] - 2.0 * u[x] + u[m]) * h2;
                            acc += b[i][x] * (u[p] - u[m]) * h2c;
                            for j in i + 1..d {
                                acc += 2.0 * mixed[k][x] * mixed_difference(nb, u, x, i, j) * h4;
                                k += 1;
                            }
                        }
                        *o = acc;
                    }
                }
                OperatorForm::Divergence => {
                    for (x, o) in out.iter_mut().enumerate() {
                        let mut acc = c[x] * u[x];
                        let mut k = 0;
                        for i in 0..d {
                            let (p, m) = (nb.plus(x, i), nb.minus(x, i));
                            acc += (diag[i][x] * (u[p] - u[x]) - diag[i][m] * (u[x] - u[m])) * h2;
                            acc += (b[i][p] * u[p] - b[i][m] * u[m]) * h2c;
                            for j in i + 1..d {
                                // D_i(a D_j u) + D_j(a D_i u) with centered D
                                let a = &mixed[k];
                                let flux = |y: usize, axis: usize| a[y] * (u[nb.plus(y, axis)] - u[nb.minus(y, axis)]);
                                acc += (flux(p, j) - flux(m, j)) * h4;
                                let (pj, mj) = (nb.plus(x, j), nb.minus(x, j));
                                acc += (flux(pj, i) - flux(mj, i)) * h4;
                                k += 1;
                            }
                        }
                        *o = acc;
                    }
                }
            },
        }
    }

    /// Symbol of the mean-coefficient operator at DFT bin `flat`.
    fn symbol(&self, flat: usize) -> Complex64 {
        let d = self.grid.d;
        let n = self.grid.n;
        let h = self.grid.dx();
        let (a, b, c) = &self.mean;
        let mut idx = [0usize; 3];
        unravel(flat, n, d, &mut idx[..d]);
        let theta: Vec<f64> = idx[..d]
            .iter()
            .map(|&m| 2.0 * std::f64::consts::PI * m as f64 / n as f64)
            .collect();
        let mut re = *c;
        let mut im = 0.0;
        for i in 0..d {
            re -= a[i * d + i] * 4.0 * (theta[i] / 2.0).sin().powi(2) / (h * h);
            im += b[i] * theta[i].sin() / h;
            for j in 0..d {
                if j != i {
                    re -= a[i * d + j] * theta[i].sin() * theta[j].sin() / (h * h);
                }
            }
        }
        Complex64::new(re, im)
    }

    /// Solves `(I − dt·𝓛̄)v = r` with the mean coefficients by FFT.
    fn fft_solve(&mut self, dt: f64, r: &[f64], v: &mut [f64]) {
        let mut buf = std::mem::take(&mut self.scratch);
        for (z, &x) in buf.iter_mut().zip(r) {
            *z = Complex64::new(x, 0.0);
        }
        self.fft.forward(&mut buf);
        if self.inverse_symbol.as_ref().is_none_or(|(cached, _)| *cached != dt) {
            let norm = 1.0 / buf.len() as f64;
            let table = (0..buf.len())
                .map(|m| norm / (Complex64::new(1.0, 0.0) - self.symbol(m) * dt))
                .collect();
            self.inverse_symbol = Some((dt, table));
        }
        let (_, table) = self.inverse_symbol.as_ref().expect("filled above");
        for (z, w) in buf.iter_mut().zip(table) {
            *z *= w;
        }
        self.fft.inverse(&mut buf);
        for (o, z) in v.iter_mut().zip(&buf) {
            *o = z.re;
        }
        self.scratch = buf;
    }

    /// `out = (I − dt·𝓛)u`.
    pub fn apply_implicit(&self, dt: f64, u: &[f64], out: &mut [f64]) {
        self.apply(u, out);
        for (o, &x) in out.iter_mut().zip(u) {
            *o = x - dt * *o;
        }
    }

    /// Solves `(I − dt·𝓛)v = r`. Exact FFT diagonalisation for constant
    /// coefficients; otherwise BiCGSTAB preconditioned by the
    /// mean-coefficient FFT solve, to relative residual [`SOLVE_TOLERANCE`].
    pub fn solve(&mut self, dt: f64, r: &[f64], v: &mut [f64]) -> Result<SolveStats, SolverError> {
        if self.is_constant() {
            self.fft_solve(dt, r, v);
            return Ok(SolveStats::default());
        }
        self.bicgstab(dt, r, v)
    }

    fn bicgstab(&mut self, dt: f64, rhs: &[f64], x: &mut [f64]) -> Result<SolveStats, SolverError> {
        let n = rhs.len();
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p * q).sum::<f64>();
        let norm_b = dot(rhs, rhs).sqrt();
        if norm_b == 0.0 {
            x.iter_mut().for_each(|v| *v = 0.0);
            return Ok(SolveStats::default());
        }
        // initial guess from the preconditioner
        self.fft_solve(dt, rhs, x);
        let mut r = vec![0.0; n];
        self.apply_implicit(dt, x, &mut r);
        for (ri, &b) in r.iter_mut().zip(rhs) {
            *ri = b - *ri;
        }
        let r_hat = r.clone();
        let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
        let mut v = vec![0.0; n];
        let mut p = vec![0.0; n];
        let mut y = vec![0.0; n];
        let mut z = vec![0.0; n];
        let mut s = vec![0.0; n];
        let mut t = vec![0.0; n];
        let mut residual = dot(&r, &r).sqrt() / norm_b;
        for it in 0..MAX_ITERATIONS {
            if residual <= SOLVE_TOLERANCE {
                return Ok(SolveStats {
                    iterations: it,
                    relative_residual: residual,
                });
            }
            let rho_new = dot(&r_hat, &r);
            if rho_new == 0.0 || !rho_new.is_finite() {
                break;
            }
            let beta = (rho_new / rho) * (alpha / omega);
            rho = rho_new;
            for i in 0..n {
                p[i] = r[i] + beta * (p[i] - omega * v[i]);
            }
            self.fft_solve(dt, &p, &mut y);
            self.apply_implicit(dt, &y, &mut v);
            alpha = rho / dot(&r_hat, &v);
            for i in 0..n {
                s[i] = r[i] - alpha * v[i];
            }
            let s_norm = dot(&s, &s).sqrt() / norm_b;
            if s_norm <= SOLVE_TOLERANCE {
                for i in 0..n {
                    x[i] += alpha * y[i];
                }
                return Ok(SolveStats {
                    iterations: it + 1,
                    relative_residual: s_norm,
                });
            }
            self.fft_solve(dt, &s, &mut z);
            self.apply_implicit(dt, &z, &mut t);
            omega = dot(&t, &s) / dot(&t, &t);
            for i in 0..n {
                x[i] += alpha * y[i] + omega * z[i];
                r[i] = s[i] - omega * t[i];
            }
            residual = dot(&r, &r).sqrt() / norm_b;
            if !residual.is_finite() || omega == 0.0 {
                break;
            }
        }
        // recompute the true residual for the report
        self.apply_implicit(dt, x, &mut r);
        let true_res = r.iter().zip(rhs).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm_b;
        if true_res <= SOLVE_TOLERANCE {
            return Ok(SolveStats {
                iterations: MAX_ITERATIONS,
                relative_residual: true_res,
            });
        }
        Err(SolverError::LinearSolve {
            residual: true_res,
            iterations: MAX_ITERATIONS,
        })
    }
}

#[inline]
fn mixed_difference(nb: &Neighbours, u: &[f64], x: usize, i: usize, j: usize) -> f64 {
    let (p, m) = (nb.plus(x, i), nb.minus(x, i));
    u[nb.plus(p, j)] - u[nb.minus(p, j)] - u[nb.plus(m, j)] + u[nb.minus(m, j)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solver::coefficients::{CoefficientPreset, Field};
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::PI;

    fn dense(op: &DiscreteOperator, dt: f64) -> DMatrix<f64> {
        let n = op.grid.cells();
        let mut m = DMatrix::zeros(n, n);
        let mut e = vec![0.0; n];
        let mut col = vec![0.0; n];
        for k in 0..n {
            e[k] = 1.0;
            op.apply_implicit(dt, &e, &mut col);
            e[k] = 0.0;
            for i in 0..n {
                m[(i, k)] = col[i];
            }
        }
        m
    }

    fn check_against_dense(coeffs: &Coefficients, grid: &GridSpec, dt: f64) {
        let mut op = DiscreteOperator::new(coeffs, grid, 0.0).unwrap();
        let n = grid.cells();
        let r: Vec<f64> = (0..n).map(|i| ((i * 7919) % 31) as f64 / 31.0 - 0.4).collect();
        let mut v = vec![0.0; n];
        op.solve(dt, &r, &mut v).unwrap();
        let oracle = dense(&op, dt).lu().solve(&DVector::from_vec(r)).unwrap();
        for i in 0..n {
            assert!((v[i] - oracle[i]).abs() < 1e-10, "{i}: {} vs {}", v[i], oracle[i]);
        }
    }

    #[test]
    fn single_mode_decays_by_discrete_symbol() {
        let grid = GridSpec::new(1, 64, 2.0 * PI).unwrap();
        let coeffs = Coefficients::preset(CoefficientPreset::Heat, 1, grid.length, 0.0);
        let mut op = DiscreteOperator::new(&coeffs, &grid, 0.0).unwrap();
        let u: Vec<f64> = (0..64).map(|j| grid.coordinate(j).sin()).collect();
        let mut v = vec![0.0; 64];
        let dt = 0.01;
        op.solve(dt, &u, &mut v).unwrap();
        let h = grid.dx();
        let factor = 1.0 / (1.0 + dt * 4.0 * (h / 2.0).sin().powi(2) / (h * h));
        for j in 0..64 {
            assert!((v[j] - factor * u[j]).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_solve_matches_dense_in_two_dimensions() {
        let grid = GridSpec::new(2, 16, 5.0).unwrap();
        let mut coeffs = Coefficients::preset(CoefficientPreset::Heat, 2, grid.length, 0.0);
        coeffs.a[1] = Field::constant(0.3);
        coeffs.a[2] = Field::constant(0.3);
        coeffs.b[1] = Field::constant(0.5);
        coeffs.c = Field::constant(-0.2);
        coeffs.k = 3.0;
        check_against_dense(&coeffs, &grid, 0.05);
    }

    #[test]
    fn variable_solve_matches_dense() {
        let grid = GridSpec::new(1, 32, 4.0 * PI).unwrap();
        for form in [OperatorForm::NonDivergence, OperatorForm::Divergence] {
            for preset in [CoefficientPreset::VaryingDiffusion, CoefficientPreset::Drift] {
                let mut coeffs = Coefficients::preset(preset, 1, grid.length, 0.0);
                coeffs.form = form;
                check_against_dense(&coeffs, &grid, 0.1);
            }
        }
    }

    #[test]
    fn variable_two_dimensional_mixed_terms() {
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let mut coeffs = Coefficients::preset(CoefficientPreset::VaryingDiffusion, 2, grid.length, 0.0);
        coeffs.a[1] = Field::sine(0.1, 0.05, vec![0.0, 1.0]);
        coeffs.a[2] = coeffs.a[1].clone();
        coeffs.k = 5.0;
        for form in [OperatorForm::NonDivergence, OperatorForm::Divergence] {
            coeffs.form = form;
            check_against_dense(&coeffs, &grid, 0.02);
        }
    }

    #[test]
    fn divergence_form_conserves_sum() {
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        let mut coeffs = Coefficients::preset(CoefficientPreset::VaryingDiffusion, 2, grid.length, 0.0);
        coeffs.a[1] = Field::sine(0.1, 0.05, vec![1.0, 1.0]);
        coeffs.a[2] = coeffs.a[1].clone();
        coeffs.b[0] = Field::sine(0.0, 0.2, vec![0.0, 1.0]);
        coeffs.form = OperatorForm::Divergence;
        let op = DiscreteOperator::new(&coeffs, &grid, 0.0).unwrap();
        let u: Vec<f64> = (0..grid.cells()).map(|i| ((i * 37) % 13) as f64).collect();
        let mut out = vec![0.0; u.len()];
        op.apply(&u, &mut out);
        assert!(out.iter().sum::<f64>().abs() < 1e-9);
    }

    #[test]
    fn non_periodic_coefficients_are_rejected() {
        let grid = GridSpec::new(1, 32, 5.0).unwrap();
        let mut coeffs = Coefficients::preset(CoefficientPreset::Heat, 1, grid.length, 0.0);
        coeffs.c = Field::sine(0.0, 0.1, vec![1.0]);
        assert!(DiscreteOperator::new(&coeffs, &grid, 0.0).is_err());
    }
}
