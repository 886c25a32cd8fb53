//! Coefficient fields `aⁱʲ, bⁱ, c, ξ` as finite trigonometric sums, so that
//! every derivative is available in closed form.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::SolverError;
use crate::noise::GridSpec;

/// One term `amplitude · sin(k·x + ω t + phase)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigTerm {
    pub amplitude: f64,
    pub wavevector: Vec<f64>,
    #[serde(default)]
    pub frequency: f64,
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum FieldRepr {
    Constant(f64),
    Full {
        #[serde(default)]
        constant: f64,
        #[serde(default)]
        terms: Vec<TrigTerm>,
    },
}

/// `constant + Σ amplitude·sin(k·x + ωt + phase)`. Deserialises from a bare
/// number or from a table with `constant` and `terms`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "FieldRepr")]
pub struct Field {
    pub constant: f64,
    pub terms: Vec<TrigTerm>,
}

impl From<FieldRepr> for Field {
    fn from(r: FieldRepr) -> Self {
        match r {
            FieldRepr::Constant(constant) => Field::constant(constant),
            FieldRepr::Full { constant, terms } => Field { constant, terms },
        }
    }
}

impl Field {
    pub fn constant(value: f64) -> Self {
        Self {
            constant: value,
            terms: Vec::new(),
        }
    }

    pub fn sine(constant: f64, amplitude: f64, wavevector: Vec<f64>) -> Self {
        Self {
            constant,
            terms: vec![TrigTerm {
                amplitude,
                wavevector,
                frequency: 0.0,
                phase: 0.0,
            }],
        }
    }

    pub fn is_spatially_constant(&self) -> bool {
        self.terms
            .iter()
            .all(|t| t.amplitude == 0.0 || t.wavevector.iter().all(|&k| k == 0.0))
    }

    pub fn is_time_independent(&self) -> bool {
        self.terms.iter().all(|t| t.amplitude == 0.0 || t.frequency == 0.0)
    }

    fn angle(term: &TrigTerm, t: f64, x: &[f64]) -> f64 {
        term.wavevector.iter().zip(x).map(|(k, v)| k * v).sum::<f64>() + term.frequency * t + term.phase
    }

    pub fn value(&self, t: f64, x: &[f64]) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|term| term.amplitude * Self::angle(term, t, x).sin())
                .sum::<f64>()
    }

    pub fn derivative(&self, t: f64, x: &[f64], axis: usize) -> f64 {
        self.terms
            .iter()
            .map(|term| term.amplitude * term.wavevector[axis] * Self::angle(term, t, x).cos())
            .sum()
    }

    pub fn second_derivative(&self, t: f64, x: &[f64], i: usize, j: usize) -> f64 {
        -self
            .terms
            .iter()
            .map(|term| term.amplitude * term.wavevector[i] * term.wavevector[j] * Self::angle(term, t, x).sin())
            .sum::<f64>()
    }

    fn check_dimension(&self, d: usize, name: &str) -> Result<(), SolverError> {
        match self.terms.iter().find(|t| t.wavevector.len() != d) {
            Some(t) => Err(SolverError::InvalidCoefficients(format!(
                "{name}: wavevector {:?} has length {} but d = {d}",
                t.wavevector,
                t.wavevector.len()
            ))),
            None => Ok(()),
        }
    }

    /// Every wavevector is a multiple of `2π/L` on each axis.
    pub fn is_periodic_on(&self, grid: &GridSpec) -> bool {
        let base = 2.0 * PI / grid.length;
        self.terms.iter().all(|t| {
            t.wavevector.iter().all(|&k| {
                let q = k / base;
                (q - q.round()).abs() < 1e-9
            })
        })
    }
}

/// Form of the discrete drift operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorForm {
    /// `aⁱʲu_{xⁱxʲ} + bⁱu_{xⁱ} + cu`.
    #[default]
    NonDivergence,
    /// `(aⁱʲu_{xʲ})_{xⁱ} + (bⁱu)_{xⁱ} + cu`, which conserves `Σu` when `c = 0`.
    Divergence,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub d: usize,
    /// Row-major `d × d`.
    pub a: Vec<Field>,
    pub b: Vec<Field>,
    pub c: Field,
    pub xi: Field,
    pub kappa0: f64,
    /// The bound `K`.
    pub k: f64,
    #[serde(default)]
    pub form: OperatorForm,
}

/// Named coefficient sets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoefficientPreset {
    /// `a = I`, `b = c = 0`, `κ₀ = K = 1`.
    Heat,
    /// `a = (1 + ¼ sin(ω x₁)) I`.
    VaryingDiffusion,
    /// `a = I`, `b₁ = 0.3 cos(ω x₁)`, `c = 0.2`.
    Drift,
    /// `a = I`, `c = 1`; total mass grows like `eᵗ`.
    Reaction,
    /// `a = I`, `c = 10K` with `K = 1`; breaks the C² bound.
    Violating,
}

impl CoefficientPreset {
    pub const ALL: [CoefficientPreset; 5] = [
        CoefficientPreset::Heat,
        CoefficientPreset::VaryingDiffusion,
        CoefficientPreset::Drift,
        CoefficientPreset::Reaction,
        CoefficientPreset::Violating,
    ];
}

/// Smallest wavenumber compatible with the box that is at least 1, or the
/// fundamental `2π/L` when the box is shorter than `2π`.
pub fn preset_wavenumber(length: f64) -> f64 {
    let base = 2.0 * PI / length;
    base * (1.0 / base).round().max(1.0)
}

fn diagonal(d: usize, f: impl Fn() -> Field) -> Vec<Field> {
    (0..d * d)
        .map(|k| if k / d == k % d { f() } else { Field::constant(0.0) })
        .collect()
}

impl Coefficients {
    pub fn preset(preset: CoefficientPreset, d: usize, length: f64, xi: f64) -> Self {
        let omega = preset_wavenumber(length);
        let e1 = |s: f64| {
            let mut k = vec![0.0; d];
            k[0] = s;
            k
        };
        let zero_b = || vec![Field::constant(0.0); d];
        let mut out = Self {
            d,
            a: diagonal(d, || Field::constant(1.0)),
            b: zero_b(),
            c: Field::constant(0.0),
            xi: Field::constant(xi),
            kappa0: 1.0,
            k: 1.0,
            form: OperatorForm::NonDivergence,
        };
        match preset {
            CoefficientPreset::Heat => {}
            CoefficientPreset::VaryingDiffusion => {
                out.a = diagonal(d, || Field::sine(1.0, 0.25, e1(omega)));
                out.kappa0 = 0.75;
            }
            CoefficientPreset::Drift => {
                let mut b = zero_b();
                b[0] = Field {
                    constant: 0.0,
                    terms: vec![TrigTerm {
                        amplitude: 0.3,
                        wavevector: e1(omega),
                        frequency: 0.0,
                        phase: PI / 2.0,
                    }],
                };
                out.b = b;
                out.c = Field::constant(0.2);
            }
            CoefficientPreset::Reaction => out.c = Field::constant(1.0),
            CoefficientPreset::Violating => {
                out.c = Field::constant(10.0);
                return out;
            }
        }
        // smallest K meeting every bound
        out.k = out
            .c2_norm_analytic()
            .max(xi.abs())
            .max(out.a.iter().map(|f| f.constant.abs() + f.terms.iter().map(|t| t.amplitude.abs()).sum::<f64>()).fold(0.0, f64::max));
        out
    }

    /// Upper bound on the C² norm from amplitudes and wavevectors.
    fn c2_norm_analytic(&self) -> f64 {
        let field_norm = |f: &Field| {
            let mut total = f.constant.abs() + f.terms.iter().map(|t| t.amplitude.abs()).sum::<f64>();
            for i in 0..self.d {
                total += f.terms.iter().map(|t| (t.amplitude * t.wavevector[i]).abs()).sum::<f64>();
                for j in i..self.d {
                    total += f
                        .terms
                        .iter()
                        .map(|t| (t.amplitude * t.wavevector[i] * t.wavevector[j]).abs())
                        .sum::<f64>();
                }
            }
            total
        };
        let a = self.a.iter().map(field_norm).fold(0.0, f64::max);
        let b = self.b.iter().map(field_norm).fold(0.0, f64::max);
        a + b + field_norm(&self.c)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let d = self.d;
        if !(1..=3).contains(&d) {
            return Err(SolverError::InvalidCoefficients(format!("dimension must be 1, 2 or 3 (got {d})")));
        }
        if self.a.len() != d * d || self.b.len() != d {
            return Err(SolverError::InvalidCoefficients(format!(
                "expected {} entries of a and {d} of b (got {} and {})",
                d * d,
                self.a.len(),
                self.b.len()
            )));
        }
        for i in 0..d {
            for j in 0..d {
                self.a[i * d + j].check_dimension(d, &format!("a[{i}][{j}]"))?;
                if self.a[i * d + j] != self.a[j * d + i] {
                    return Err(SolverError::InvalidCoefficients(format!("a is not symmetric at ({i}, {j})")));
                }
            }
            self.b[i].check_dimension(d, &format!("b[{i}]"))?;
        }
        self.c.check_dimension(d, "c")?;
        self.xi.check_dimension(d, "xi")?;
        if !(self.kappa0 > 0.0 && self.k > 0.0 && self.kappa0 <= self.k) {
            return Err(SolverError::InvalidCoefficients(format!(
                "need 0 < kappa0 ≤ K (got kappa0 = {}, K = {})",
                self.kappa0, self.k
            )));
        }
        Ok(())
    }

    pub fn is_spatially_constant(&self) -> bool {
        self.fields().all(Field::is_spatially_constant)
    }

    pub fn is_time_independent(&self) -> bool {
        self.fields().all(Field::is_time_independent)
    }

    pub fn is_periodic_on(&self, grid: &GridSpec) -> bool {
        self.fields().all(|f| f.is_periodic_on(grid))
    }

    fn fields(&self) -> impl Iterator<Item = &Field> {
        self.a.iter().chain(&self.b).chain([&self.c, &self.xi])
    }

    /// `a(t, x)` as a matrix.
    pub fn a_matrix(&self, t: f64, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.d, self.d, |i, j| self.a[i * self.d + j].value(t, x))
    }
}

/// Worst margins of the coefficient assumptions over the sampled points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// `min λ_min(a) − κ₀`.
    pub ellipticity_lower_margin: f64,
    /// `K − max λ_max(a)`.
    pub ellipticity_upper_margin: f64,
    /// `|a|_{C²} + |b|_{C²} + |c|_{C²}` on the grid.
    pub c2_norm: f64,
    pub c2_margin: f64,
    pub xi_sup: f64,
    pub xi_margin: f64,
    /// Coefficients are periodic on the box, as the solver requires.
    pub periodic: bool,
    pub points_checked: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct SupTracker {
    value: f64,
    point: [f64; 3],
    t: f64,
}

impl SupTracker {
    fn update(&mut self, v: f64, x: &[f64], t: f64) {
        if v > self.value {
            self.value = v;
            self.point[..x.len()].copy_from_slice(x);
            self.t = t;
        }
    }
}

/// Checks ellipticity, the C² bound and `‖ξ‖_∞ ≤ K` at every grid point and
/// sample time.
///
/// Matrix and vector C² norms are the largest per-component norm, and a
/// scalar norm is `Σ_{|β|≤2} sup|D^β f|` over the grid points.
pub fn check_assumptions(coeffs: &Coefficients, grid: &GridSpec, times: &[f64]) -> Result<AssumptionReport, SolverError> {
    coeffs.validate()?;
    if coeffs.d != grid.d {
        return Err(SolverError::InvalidCoefficients(format!(
            "coefficient dimension {} differs from grid dimension {}",
            coeffs.d, grid.d
        )));
    }
    let d = coeffs.d;
    let times = if times.is_empty() { &[0.0][..] } else { times };
    let mut lambda_min = f64::INFINITY;
    let mut lambda_min_at = SupTracker::default();
    let mut lambda_max = SupTracker {
        value: f64::NEG_INFINITY,
        ..Default::default()
    };
    let mut xi_sup = SupTracker::default();
    // sup |D^β f| per field and multi-index
    let n_beta = 1 + d + d * (d + 1) / 2;
    let fields: Vec<&Field> = coeffs.a.iter().chain(&coeffs.b).chain([&coeffs.c]).collect();
    let mut sups = vec![SupTracker::default(); fields.len() * n_beta];
    let mut points = 0;
    for &t in times {
        for flat in 0..grid.cells() {
            let p = grid.point(flat);
            let x = &p[..d];
            points += 1;
            let a = coeffs.a_matrix(t, x);
            let (lo, hi) = if d == 1 {
                (a[(0, 0)], a[(0, 0)])
            } else {
                let eig = SymmetricEigen::new(a).eigenvalues;
                (eig.min(), eig.max())
            };
            if lo < lambda_min {
                lambda_min = lo;
                lambda_min_at.point[..d].copy_from_slice(x);
                lambda_min_at.t = t;
            }
            lambda_max.update(hi, x, t);
            xi_sup.update(coeffs.xi.value(t, x).abs(), x, t);
            for (fi, f) in fields.iter().enumerate() {
                let base = fi * n_beta;
                sups[base].update(f.value(t, x).abs(), x, t);
                let mut slot = base + 1;
                for i in 0..d {
                    sups[slot].update(f.derivative(t, x, i).abs(), x, t);
                    slot += 1;
                }
                for i in 0..d {
                    for j in i..d {
                        sups[slot].update(f.second_derivative(t, x, i, j).abs(), x, t);
                        slot += 1;
                    }
                }
            }
        }
    }
    let field_norm = |fi: usize| -> (f64, SupTracker) {
        let chunk = &sups[fi * n_beta..(fi + 1) * n_beta];
        let worst = *chunk.iter().max_by(|a, b| a.value.total_cmp(&b.value)).expect("nonempty");
        (chunk.iter().map(|s| s.value).sum(), worst)
    };
    let group = |range: std::ops::Range<usize>| {
        range
            .map(field_norm)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .unwrap_or((0.0, SupTracker::default()))
    };
    let (a_norm, a_at) = group(0..d * d);
    let (b_norm, b_at) = group(d * d..d * d + d);
    let (c_norm, c_at) = field_norm(d * d + d);
    let c2_norm = a_norm + b_norm + c_norm;
    let k = coeffs.k;
    let violation = |clause: &str, at: &SupTracker, value: f64, bound: f64| SolverError::AssumptionViolation {
        clause: clause.to_string(),
        point: at.point[..d].to_vec(),
        t: at.t,
        value,
        bound,
    };
    let tol = 1e-12 * k.max(1.0);
    if lambda_min < coeffs.kappa0 - tol {
        return Err(violation("ellipticity lower bound κ₀", &lambda_min_at, lambda_min, coeffs.kappa0));
    }
    if lambda_max.value > k + tol {
        return Err(violation("ellipticity upper bound K", &lambda_max, lambda_max.value, k));
    }
    if c2_norm > k + tol {
        let at = [(a_norm, a_at), (b_norm, b_at), (c_norm, c_at)]
            .into_iter()
            .max_by(|x, y| x.0.total_cmp(&y.0))
            .expect("three groups")
            .1;
        return Err(violation("|a|_C² + |b|_C² + |c|_C² ≤ K", &at, c2_norm, k));
    }
    if xi_sup.value > k + tol {
        return Err(violation("‖ξ‖_∞ ≤ K", &xi_sup, xi_sup.value, k));
    }
    Ok(AssumptionReport {
        ellipticity_lower_margin: lambda_min - coeffs.kappa0,
        ellipticity_upper_margin: k - lambda_max.value,
        c2_norm,
        c2_margin: k - c2_norm,
        xi_sup: xi_sup.value,
        xi_margin: k - xi_sup.value,
        periodic: coeffs.is_periodic_on(grid),
        points_checked: points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid1() -> GridSpec {
        GridSpec::new(1, 64, 2.0 * PI).unwrap()
    }

    #[test]
    fn identity_passes_with_zero_margins() {
        let c = Coefficients::preset(CoefficientPreset::Heat, 1, 2.0 * PI, 1.0);
        let r = check_assumptions(&c, &grid1(), &[0.0, 1.0]).unwrap();
        assert_eq!(r.ellipticity_lower_margin, 0.0);
        assert_eq!(r.ellipticity_upper_margin, 0.0);
        assert_eq!(r.c2_margin, 0.0);
        assert!(r.periodic);
    }

    #[test]
    fn diag_two_breaks_upper_bound() {
        let mut c = Coefficients::preset(CoefficientPreset::Heat, 2, 2.0 * PI, 1.0);
        c.a[0] = Field::constant(2.0);
        c.a[3] = Field::constant(2.0);
        let grid = GridSpec::new(2, 16, 2.0 * PI).unwrap();
        match check_assumptions(&c, &grid, &[0.0]) {
            Err(SolverError::AssumptionViolation { clause, value, .. }) => {
                assert!(clause.contains("upper"));
                assert_eq!(value, 2.0);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn two_sine_reaction_breaks_c2_bound() {
        let mut c = Coefficients::preset(CoefficientPreset::Heat, 1, 2.0 * PI, 1.0);
        c.c = Field::sine(0.0, 2.0, vec![1.0]);
        assert!(matches!(
            check_assumptions(&c, &grid1(), &[0.0]),
            Err(SolverError::AssumptionViolation { .. })
        ));
    }

    #[test]
    fn presets_satisfy_their_bounds() {
        for preset in CoefficientPreset::ALL {
            let c = Coefficients::preset(preset, 1, 20.0 * PI, 1.0);
            let r = check_assumptions(&c, &GridSpec::new(1, 256, 20.0 * PI).unwrap(), &[0.0]);
            assert_eq!(r.is_ok(), preset != CoefficientPreset::Violating, "{preset:?}: {r:?}");
        }
    }

    #[test]
    fn analytic_derivatives_match_differences() {
        let f = Field {
            constant: 0.5,
            terms: vec![TrigTerm {
                amplitude: 0.7,
                wavevector: vec![1.3, -0.4],
                frequency: 2.0,
                phase: 0.3,
            }],
        };
        let (t, x) = (0.2, [0.4, -1.1]);
        let h = 1e-5;
        let fd = (f.value(t, &[x[0] + h, x[1]]) - f.value(t, &[x[0] - h, x[1]])) / (2.0 * h);
        assert!((fd - f.derivative(t, &x, 0)).abs() < 1e-8);
        let fd2 = (f.derivative(t, &[x[0], x[1] + h], 0) - f.derivative(t, &[x[0], x[1] - h], 0)) / (2.0 * h);
        assert!((fd2 - f.second_derivative(t, &x, 0, 1)).abs() < 1e-8);
    }

    #[test]
    fn field_parses_from_number_or_table() {
        let f: Field = serde_json::from_str("2.5").unwrap();
        assert_eq!(f, Field::constant(2.5));
        let g: Field = serde_json::from_str(r#"{"constant": 1, "terms": [{"amplitude": 0.1, "wavevector": [1.0]}]}"#).unwrap();
        assert_eq!(g.terms.len(), 1);
        assert!(!g.is_spatially_constant());
    }
}
