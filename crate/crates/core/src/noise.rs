//! White-in-time, spatially homogeneous Gaussian noise on periodic grids.
//!
//! The covariance of the cell values is a circulant matrix `C`, diagonalised
//! by the DFT with eigenvalues `λ_m`. An increment over `dt` is
//! `sqrt(dt) · Σ_m sqrt(λ_m/N) ζ_m e^{2πi m·j/n}` with `ζ` Hermitian
//! symmetric and built from exactly `N = n^d` independent standard normals,
//! so the map from normals to increments is an explicit linear operator.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{CovarianceError, CovarianceKind, CovarianceModel};
use crate::fft::{negated_index, signed_index, unravel, FftNd};
use crate::quadrature::{integrate, Tolerance};
use crate::stats::mean;

/// Largest admissible clamped-mass fraction for a circulant construction.
pub const MAX_CLAMPED_FRACTION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NoiseError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error(transparent)]
    Model(#[from] CovarianceError),
    #[error("grid too coarse for the covariance: clamped spectral mass fraction {clamped_fraction:.3e} ≥ {MAX_CLAMPED_FRACTION:e}; refine the grid")]
    Resolution { clamped_fraction: f64 },
    #[error("statistics error: {0}")]
    Statistics(String),
}

/// Periodic cubic grid `[-L/2, L/2)^d` with `n` points per axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub length: f64,
}

impl GridSpec {
    pub fn new(d: usize, n: usize, length: f64) -> Result<Self, NoiseError> {
        let grid = Self { d, n, length };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<(), NoiseError> {
        if !(1..=3).contains(&self.d) {
            return Err(NoiseError::Grid(format!("dimension must be 1, 2 or 3 (got {})", self.d)));
        }
        if self.n < 16 || !self.n.is_power_of_two() {
            return Err(NoiseError::Grid(format!("n must be a power of two ≥ 16 (got {})", self.n)));
        }
        if !(self.length > 0.0 && self.length.is_finite()) {
            return Err(NoiseError::Grid(format!("box length must be positive (got {})", self.length)));
        }
        if (self.n as u128).pow(self.d as u32) > 1 << 24 {
            return Err(NoiseError::Grid(format!("n^d = {}^{} exceeds 2^24 cells", self.n, self.d)));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        self.length / self.n as f64
    }

    pub fn cells(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Physical coordinate `-L/2 + j·Δx` of grid index `j` on one axis.
    pub fn coordinate(&self, j: usize) -> f64 {
        -self.length / 2.0 + j as f64 * self.dx()
    }

    /// Coordinates of the point with flat row-major index `flat`.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let mut idx = [0usize; 3];
        unravel(flat, self.n, self.d, &mut idx[..self.d]);
        let mut x = [0.0; 3];
        for axis in 0..self.d {
            x[axis] = self.coordinate(idx[axis]);
        }
        x
    }

    /// Minimum-image displacement of the lag with flat index `flat`.
    pub fn lag_vector(&self, flat: usize) -> [f64; 3] {
        let mut idx = [0usize; 3];
        unravel(flat, self.n, self.d, &mut idx[..self.d]);
        let mut x = [0.0; 3];
        for axis in 0..self.d {
            x[axis] = signed_index(idx[axis], self.n) as f64 * self.dx();
        }
        x
    }

    /// Angular frequency vector `2πm/L` of DFT bin `flat`.
    pub fn frequency(&self, flat: usize) -> [f64; 3] {
        let mut idx = [0usize; 3];
        unravel(flat, self.n, self.d, &mut idx[..self.d]);
        let mut xi = [0.0; 3];
        for axis in 0..self.d {
            xi[axis] = 2.0 * PI * signed_index(idx[axis], self.n) as f64 / self.length;
        }
        xi
    }

    /// Flat index of the lag with the given per-axis offsets (wrapped).
    pub fn lag_index(&self, offsets: &[i64]) -> usize {
        let n = self.n as i64;
        offsets.iter().fold(0usize, |acc, &o| acc * self.n + o.rem_euclid(n) as usize)
    }
}

/// How the circulant eigenvalues were obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthesisRoute {
    /// Alias sums of the spectral density on the dual lattice.
    Spectral,
    /// DFT of the covariance sampled at minimum-image lags, with the origin
    /// cell replaced by its cell average.
    Circulant,
}

/// 64-bit finaliser of the splitmix generator.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of stream `stream` under master seed `master`.
pub fn derive_stream_seed(master: u64, stream: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream))
}

/// Cell average of `|x|^{-α}` over the cube of side `h` centred at the origin,
/// from `∫_{[-a,a]^d}|x|^{-α} = a^{d-α}·2d/(d-α)·∫_{[-1,1]^{d-1}}(1+|y|²)^{-α/2}dy`.
pub fn riesz_origin_cell_average(alpha: f64, d: usize, h: f64) -> Result<f64, CovarianceError> {
    let df = d as f64;
    let tol = Tolerance::new(1e-14, 1e-12);
    let face = match d {
        1 => 1.0,
        2 => integrate(|y: f64| (1.0 + y * y).powf(-alpha / 2.0), -1.0, 1.0, tol)?.value,
        3 => {
            let mut failure = None;
            let q = integrate(
                |y1: f64| match integrate(|y2: f64| (1.0 + y1 * y1 + y2 * y2).powf(-alpha / 2.0), -1.0, 1.0, tol) {
                    Ok(q) => q.value,
                    Err(e) => {
                        failure.get_or_insert(e);
                        0.0
                    }
                },
                -1.0,
                1.0,
                tol,
            )?;
            if let Some(e) = failure {
                return Err(e.into());
            }
            q.value
        }
        _ => return Err(CovarianceError::ParameterDomain(format!("unsupported dimension {d}"))),
    };
    let a = h / 2.0;
    let integral = a.powf(df - alpha) * 2.0 * df / (df - alpha) * face;
    Ok(integral / h.powf(df))
}

/// Unnormalised covariance of the cell values at each lag (per unit time),
/// and the route that produced the eigenvalues.
fn circulant_eigenvalues(model: &CovarianceModel, grid: &GridSpec) -> Result<(Vec<f64>, SynthesisRoute), NoiseError> {
    let cells = grid.cells();
    let d = grid.d;
    match model.kind {
        CovarianceKind::White => Ok((vec![1.0 / grid.cell_volume(); cells], SynthesisRoute::Spectral)),
        CovarianceKind::Gaussian { c } => {
            // λ_m = Δx^{-d} Σ_{k ≡ m} (2π)^{d/2} ν(2πk/L); the aliases beyond
            // the first few are below double precision.
            let scale = (2.0 * PI).powf(d as f64 / 2.0) / grid.cell_volume();
            let period = 2.0 * PI * grid.n as f64 / grid.length;
            let reach = ((4.0 * c * 750.0).sqrt() / period).ceil() as i64 + 1;
            let mut out = vec![0.0; cells];
            let mut shifts = [0i64; 3];
            for (flat, slot) in out.iter_mut().enumerate() {
                let base = grid.frequency(flat);
                let mut total = 0.0;
                let width = 2 * reach as usize + 1;
                for s in 0..width.pow(d as u32) {
                    let mut rest = s;
                    for shift in shifts.iter_mut().take(d) {
                        *shift = (rest % width) as i64 - reach;
                        rest /= width;
                    }
                    let rho2: f64 = (0..d).map(|a| (base[a] + shifts[a] as f64 * period).powi(2)).sum();
                    total += model.spectral_density_radial(rho2.sqrt()).finite().unwrap_or(0.0);
                }
                *slot = scale * total;
            }
            Ok((out, SynthesisRoute::Spectral))
        }
        CovarianceKind::Riesz { alpha } => {
            let fft = FftNd::new(grid.n, d);
            let origin = riesz_origin_cell_average(alpha, d, grid.dx())?;
            let mut data: Vec<Complex64> = (0..cells)
                .map(|flat| {
                    let x = grid.lag_vector(flat);
                    let r = x[..d].iter().map(|v| v * v).sum::<f64>().sqrt();
                    Complex64::new(if flat == 0 { origin } else { r.powf(-alpha) }, 0.0)
                })
                .collect();
            fft.forward(&mut data);
            Ok((data.iter().map(|z| z.re).collect(), SynthesisRoute::Circulant))
        }
    }
}

/// Stateful generator of increments for one stream.
#[derive(Debug, Clone)]
pub struct NoiseSampler {
    pub grid: GridSpec,
    pub model: CovarianceModel,
    pub seed: u64,
    pub stream: u64,
    pub route: SynthesisRoute,
    /// Circulant eigenvalues after clamping negatives to zero.
    pub eigenvalues: Vec<f64>,
    /// `sqrt(λ_m / N)`, indexed like the DFT bins.
    pub amplitudes: Vec<f64>,
    /// Negative spectral mass removed, relative to the total absolute mass.
    pub clamped_fraction: f64,
    rng: ChaCha8Rng,
    fft: FftNd,
    /// `(m, −m)` for each self-conjugate bin (`m == −m`) or conjugate pair
    /// (`m < −m`), in the order normals are consumed.
    packing: Vec<(usize, usize)>,
    normals: Vec<f64>,
    spectrum: Vec<Complex64>,
}

/// Builds a sampler for `(seed, stream)`. Identical inputs give identical
/// samplers and identical increment sequences.
pub fn build_sampler(model: &CovarianceModel, grid: &GridSpec, seed: u64, stream: u64) -> Result<NoiseSampler, NoiseError> {
    model.validate()?;
    grid.validate()?;
    if model.d != grid.d {
        return Err(NoiseError::Grid(format!(
            "covariance dimension {} differs from grid dimension {}",
            model.d, grid.d
        )));
    }
    let (raw, route) = circulant_eigenvalues(model, grid)?;
    let negative: f64 = raw.iter().filter(|&&v| v < 0.0).map(|v| -v).sum();
    let total: f64 = raw.iter().map(|v| v.abs()).sum();
    let clamped_fraction = if total > 0.0 { negative / total } else { 0.0 };
    if clamped_fraction >= MAX_CLAMPED_FRACTION {
        return Err(NoiseError::Resolution { clamped_fraction });
    }
    let eigenvalues: Vec<f64> = raw.iter().map(|&v| v.max(0.0)).collect();
    let cells = grid.cells() as f64;
    let amplitudes = eigenvalues.iter().map(|&v| (v / cells).sqrt()).collect();
    Ok(NoiseSampler {
        grid: *grid,
        model: *model,
        seed,
        stream,
        route,
        eigenvalues,
        amplitudes,
        clamped_fraction,
        rng: ChaCha8Rng::seed_from_u64(derive_stream_seed(seed, stream)),
        fft: FftNd::new(grid.n, grid.d),
        packing: (0..grid.cells())
            .map(|m| (m, negated_index(m, grid.n, grid.d)))
            .filter(|&(m, c)| m <= c)
            .collect(),
        normals: vec![0.0; grid.cells()],
        spectrum: vec![Complex64::default(); grid.cells()],
    })
}

/// One increment `F(t + dt) − F(t)` sampled on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseIncrement {
    pub values: Vec<f64>,
    pub dt: f64,
}

impl NoiseSampler {
    /// Draws `N` independent standard normals from the stream.
    pub fn draw_normals(&mut self, out: &mut [f64]) {
        for z in out.iter_mut() {
            *z = self.rng.sample(StandardNormal);
        }
    }

    /// Maps `N` standard normals to an increment over `dt`. Linear in `z`.
    pub fn synthesize_into(&mut self, z: &[f64], dt: f64, out: &mut [f64]) {
        assert_eq!(z.len(), self.grid.cells());
        assert_eq!(out.len(), self.grid.cells());
        let mut next = 0;
        for &(m, conj) in &self.packing {
            if conj == m {
                self.spectrum[m] = Complex64::new(self.amplitudes[m] * z[next], 0.0);
                next += 1;
            } else {
                let zeta = Complex64::new(z[next], z[next + 1]) * FRAC_1_SQRT_2;
                next += 2;
                self.spectrum[m] = zeta * self.amplitudes[m];
                self.spectrum[conj] = zeta.conj() * self.amplitudes[conj];
            }
        }
        debug_assert_eq!(next, z.len());
        self.fft.inverse(&mut self.spectrum);
        let root = dt.sqrt();
        for (o, s) in out.iter_mut().zip(&self.spectrum) {
            *o = root * s.re;
        }
    }

    pub fn synthesize(&mut self, z: &[f64], dt: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.cells()];
        self.synthesize_into(z, dt, &mut out);
        out
    }

    /// Draws the next increment into `out`.
    pub fn sample_into(&mut self, dt: f64, out: &mut [f64]) {
        let mut normals = std::mem::take(&mut self.normals);
        self.draw_normals(&mut normals);
        self.synthesize_into(&normals, dt, out);
        self.normals = normals;
    }

    pub fn sample_increment(&mut self, dt: f64) -> NoiseIncrement {
        let mut values = vec![0.0; self.grid.cells()];
        self.sample_into(dt, &mut values);
        NoiseIncrement { values, dt }
    }

    /// Covariance per unit time between cells separated by the lag with flat
    /// index `lag`, as realised by the (clamped) eigenvalues.
    pub fn implied_covariance(&self, lag: usize) -> f64 {
        let n = self.grid.cells() as f64;
        let mut total = 0.0;
        for (m, &lam) in self.eigenvalues.iter().enumerate() {
            let xi = self.grid.frequency(m);
            let x = self.grid.lag_vector(lag);
            let phase: f64 = (0..self.grid.d).map(|a| xi[a] * x[a]).sum();
            total += lam * phase.cos();
        }
        total / n
    }
}

/// Estimate of the covariance at one lag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceEstimate {
    pub lag: Vec<i64>,
    pub estimate: f64,
    pub standard_error: f64,
}

/// Spatially averaged products `W(x)W(x+h)` per sample, averaged over
/// samples; standard errors by the delete-one jackknife over samples.
pub fn empirical_covariance(
    samples: &[NoiseIncrement],
    grid: &GridSpec,
    lags: &[Vec<i64>],
) -> Result<Vec<CovarianceEstimate>, NoiseError> {
    if samples.len() < 100 {
        return Err(NoiseError::Statistics(format!(
            "empirical covariance needs at least 100 samples (got {})",
            samples.len()
        )));
    }
    let cells = grid.cells();
    if samples.iter().any(|s| s.values.len() != cells) {
        return Err(NoiseError::Statistics("sample size does not match the grid".into()));
    }
    let mut out = Vec::with_capacity(lags.len());
    let mut idx = [0usize; 3];
    for lag in lags {
        if lag.len() != grid.d {
            return Err(NoiseError::Statistics(format!("lag {lag:?} has wrong dimension")));
        }
        let per_sample: Vec<f64> = samples
            .iter()
            .map(|s| {
                let mut acc = 0.0;
                for flat in 0..cells {
                    unravel(flat, grid.n, grid.d, &mut idx[..grid.d]);
                    let shifted: Vec<i64> = (0..grid.d).map(|a| idx[a] as i64 + lag[a]).collect();
                    acc += s.values[flat] * s.values[grid.lag_index(&shifted)];
                }
                acc / cells as f64
            })
            .collect();
        let (estimate, standard_error) = jackknife_mean(&per_sample);
        out.push(CovarianceEstimate {
            lag: lag.clone(),
            estimate,
            standard_error,
        });
    }
    Ok(out)
}

/// Mean and delete-one jackknife standard error.
pub fn jackknife_mean(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let total: f64 = xs.iter().sum();
    let theta = total / n;
    let leave_out: Vec<f64> = xs.iter().map(|x| (total - x) / (n - 1.0)).collect();
    let centre = mean(&leave_out);
    let var = (n - 1.0) / n * leave_out.iter().map(|t| (t - centre).powi(2)).sum::<f64>();
    (theta, var.sqrt())
}

/// Lags along the first axis, `(k, 0, …)` for each `k`.
pub fn axis_lags(d: usize, ks: &[i64]) -> Vec<Vec<i64>> {
    ks.iter()
        .map(|&k| {
            let mut lag = vec![0; d];
            lag[0] = k;
            lag
        })
        .collect()
}

/// JSON sidecar of a flat binary field file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSidecar {
    pub grid: GridSpec,
    pub dt: f64,
    pub seed: u64,
    pub stream: u64,
    pub model: CovarianceModel,
    /// Number of fields stored back to back.
    pub count: usize,
    /// Simulation time of each stored field, when the fields are snapshots.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub times: Vec<f64>,
}

/// Little-endian `f64` values, row-major, no header.
pub fn encode_flat(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_flat(bytes: &[u8]) -> Result<Vec<f64>, NoiseError> {
    if bytes.len() % 8 != 0 {
        return Err(NoiseError::Statistics(format!(
            "flat binary length {} is not a multiple of 8",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss_grid() -> (CovarianceModel, GridSpec) {
        (CovarianceModel::gaussian(1.0, 1).unwrap(), GridSpec::new(1, 256, 40.0).unwrap())
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(1, 100, 1.0).is_err());
        assert!(GridSpec::new(1, 8, 1.0).is_err());
        assert!(GridSpec::new(4, 16, 1.0).is_err());
        assert!(GridSpec::new(3, 512, 1.0).is_err());
        assert!(GridSpec::new(2, 64, 0.0).is_err());
        let g = GridSpec::new(1, 16, 8.0).unwrap();
        assert_eq!(g.coordinate(0), -4.0);
        assert_eq!(g.lag_index(&[-1]), 15);
    }

    #[test]
    fn white_noise_amplitudes_are_flat() {
        let grid = GridSpec::new(1, 64, 10.0).unwrap();
        let s = build_sampler(&CovarianceModel::white(), &grid, 1, 0).unwrap();
        let first = s.amplitudes[0];
        assert!(s.amplitudes.iter().all(|&a| (a - first).abs() < 1e-15));
        assert!((s.implied_covariance(0) - 1.0 / grid.dx()).abs() < 1e-9);
    }

    #[test]
    fn gaussian_amplitude_peaks_at_zero() {
        let (m, g) = gauss_grid();
        let s = build_sampler(&m, &g, 1, 0).unwrap();
        assert!(s.amplitudes.iter().all(|&a| a <= s.amplitudes[0]));
        for k in 0..g.cells() {
            assert_eq!(s.amplitudes[k], s.amplitudes[negated_index(k, g.n, 1)]);
        }
    }

    #[test]
    fn determinism_and_stream_separation() {
        let (m, g) = gauss_grid();
        let a = build_sampler(&m, &g, 42, 3).unwrap().sample_increment(0.1);
        let b = build_sampler(&m, &g, 42, 3).unwrap().sample_increment(0.1);
        assert_eq!(a, b);
        let c = build_sampler(&m, &g, 42, 4).unwrap().sample_increment(0.1);
        assert_ne!(a, c);
    }

    #[test]
    fn synthesis_is_linear_and_real() {
        let grid = GridSpec::new(2, 16, 6.0).unwrap();
        let mut s = build_sampler(&CovarianceModel::gaussian(2.0, 2).unwrap(), &grid, 5, 0).unwrap();
        let mut z1 = vec![0.0; grid.cells()];
        let mut z2 = vec![0.0; grid.cells()];
        s.draw_normals(&mut z1);
        s.draw_normals(&mut z2);
        let w1 = s.synthesize(&z1, 1.0);
        let w2 = s.synthesize(&z2, 1.0);
        let sum: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| a + b).collect();
        let w = s.synthesize(&sum, 1.0);
        for i in 0..w.len() {
            assert!((w[i] - w1[i] - w2[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn gaussian_cell_covariance_is_periodized_kernel() {
        let (m, g) = gauss_grid();
        let s = build_sampler(&m, &g, 0, 0).unwrap();
        for k in [0usize, 3, 10, 40] {
            let x = k as f64 * g.dx();
            let expected: f64 = (-3..=3).map(|q| (-(x + q as f64 * g.length).powi(2)).exp()).sum();
            assert!((s.implied_covariance(k) - expected).abs() < 1e-12, "lag {k}");
        }
    }

    #[test]
    fn riesz_origin_average_one_dimension() {
        let h = 0.1;
        let v = riesz_origin_cell_average(0.5, 1, h).unwrap();
        let exact = 2.0 * (h / 2.0f64).sqrt() / 0.5 / h;
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn riesz_origin_average_against_direct_quadrature() {
        // d = 2 cell average by nested quadrature in polar-free form
        let (alpha, h) = (0.8, 0.2);
        let tol = Tolerance::new(1e-13, 1e-11);
        let direct = integrate(
            |x: f64| {
                integrate(|y: f64| (x * x + y * y).powf(-alpha / 2.0), 0.0, h / 2.0, tol)
                    .unwrap()
                    .value
            },
            0.0,
            h / 2.0,
            tol,
        )
        .unwrap()
        .value
            * 4.0
            / (h * h);
        let v = riesz_origin_cell_average(alpha, 2, h).unwrap();
        assert!((v / direct - 1.0).abs() < 1e-8, "{v} vs {direct}");
    }

    #[test]
    fn riesz_sampler_builds_with_small_clamp() {
        let grid = GridSpec::new(1, 256, 20.0).unwrap();
        let s = build_sampler(&CovarianceModel::riesz(0.5, 1).unwrap(), &grid, 0, 0).unwrap();
        assert_eq!(s.route, SynthesisRoute::Circulant);
        assert!(s.clamped_fraction < MAX_CLAMPED_FRACTION);
    }

    #[test]
    fn too_few_samples() {
        let (m, g) = gauss_grid();
        let mut s = build_sampler(&m, &g, 0, 0).unwrap();
        let samples: Vec<_> = (0..10).map(|_| s.sample_increment(1.0)).collect();
        assert!(matches!(
            empirical_covariance(&samples, &g, &axis_lags(1, &[0])),
            Err(NoiseError::Statistics(_))
        ));
    }

    #[test]
    fn jackknife_of_mean_matches_standard_error() {
        let xs: Vec<f64> = (0..50).map(|i| ((i * 37) % 11) as f64).collect();
        let (m, se) = jackknife_mean(&xs);
        assert!((m - mean(&xs)).abs() < 1e-12);
        assert!((se - crate::stats::standard_error(&xs)).abs() < 1e-12);
    }

    #[test]
    fn dense_law_matches_periodized_covariance() {
        // columns of A are the images of unit normals; A Aᵀ must be dt·C_per
        let grid = GridSpec::new(1, 32, 8.0).unwrap();
        let model = CovarianceModel::gaussian(0.7, 1).unwrap();
        let mut s = build_sampler(&model, &grid, 0, 0).unwrap();
        let n = grid.cells();
        let dt = 0.3;
        let mut a = vec![vec![0.0; n]; n];
        for k in 0..n {
            let mut z = vec![0.0; n];
            z[k] = 1.0;
            let col = s.synthesize(&z, dt);
            for i in 0..n {
                a[i][k] = col[i];
            }
        }
        for i in 0..n {
            for j in 0..n {
                let aat: f64 = (0..n).map(|k| a[i][k] * a[j][k]).sum();
                let x = (i as f64 - j as f64) * grid.dx();
                let c: f64 = (-6..=6).map(|q| (-0.7 * (x + q as f64 * grid.length).powi(2)).exp()).sum();
                assert!((aat - dt * c).abs() < 1e-10, "({i},{j}): {aat} vs {}", dt * c);
            }
        }
    }

    #[test]
    fn empirical_covariance_recovers_target() {
        let grid = GridSpec::new(1, 64, 16.0).unwrap();
        let model = CovarianceModel::gaussian(1.0, 1).unwrap();
        let mut s = build_sampler(&model, &grid, 9, 0).unwrap();
        let samples: Vec<_> = (0..400).map(|_| s.sample_increment(0.5)).collect();
        let est = empirical_covariance(&samples, &grid, &axis_lags(1, &[0, 2, 4])).unwrap();
        for e in &est {
            let target = 0.5 * s.implied_covariance(grid.lag_index(&e.lag));
            assert!((e.estimate - target).abs() < 5.0 * e.standard_error, "{e:?} vs {target}");
        }
    }

    #[test]
    fn matched_increments_add_up() {
        let (m, g) = gauss_grid();
        let mut s = build_sampler(&m, &g, 2, 0).unwrap();
        let mut z1 = vec![0.0; g.cells()];
        let mut z2 = vec![0.0; g.cells()];
        s.draw_normals(&mut z1);
        s.draw_normals(&mut z2);
        let fine1 = s.synthesize(&z1, 0.05);
        let fine2 = s.synthesize(&z2, 0.05);
        let z: Vec<f64> = z1.iter().zip(&z2).map(|(a, b)| (a + b) * FRAC_1_SQRT_2).collect();
        let coarse = s.synthesize(&z, 0.1);
        for i in 0..coarse.len() {
            assert!((coarse[i] - fine1[i] - fine2[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn flat_binary_round_trip() {
        let v = vec![1.5, -0.0, f64::MAX, 3e-300];
        let bytes = encode_flat(&v);
        assert_eq!(bytes.len(), 32);
        assert_eq!(&bytes[..8], &1.5f64.to_le_bytes());
        assert_eq!(decode_flat(&bytes).unwrap(), v);
        assert!(decode_flat(&bytes[..7]).is_err());
    }
}
