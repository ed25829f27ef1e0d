//! Reflection matrices, model constructors and derived convergence parameters.
//!
//! A model is `RBM(Σ, μ, R)` on the positive orthant with `R = I − Pᵀ` for a
//! substochastic transient routing matrix `P`. `(R⁻¹)ᵢⱼ` is the expected number
//! of visits to `i` starting from `j` of the Markov chain with kernel `P`
//! killed on leaving `{1, …, d}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Power iteration cap for the spectral radius test.
pub const POWER_ITERATIONS: usize = 10_000;
/// A routing matrix is transient iff its spectral radius estimate is at most `1 − TRANSIENCE_GAP`.
pub const TRANSIENCE_GAP: f64 = 1e-8;
/// Entries of `b⁽ᵏ⁾` must exceed this to count as positive.
pub const B_POSITIVITY: f64 = 1e-12;
/// Relative slack used when checking the inequalities of the assumptions.
pub const CHECK_REL_TOL: f64 = 1e-10;

const ROW_SUM_TOL: f64 = 1e-12;
const FACTOR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandInfo {
    pub j0: usize,
    pub alpha_prime: f64,
}

/// Parameters of one reflected Brownian motion. Immutable once validated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RbmSpecDoc", into = "RbmSpecDoc")]
pub struct RbmSpec {
    d: usize,
    mu: Vec<f64>,
    p: Matrix,
    sigma: Matrix,
    noise: Matrix,
    label: String,
    band: Option<BandInfo>,
}

impl RbmSpec {
    /// Validates and builds a model. Without an explicit noise factor the
    /// lower-triangular Cholesky factor of `sigma` is used.
    pub fn new(
        label: impl Into<String>,
        mu: Vec<f64>,
        p: Matrix,
        sigma: Matrix,
        noise: Option<Matrix>,
    ) -> Result<Self> {
        let d = mu.len();
        if d == 0 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        if p.shape() != (d, d) || sigma.shape() != (d, d) {
            return Err(Error::InvalidModel(format!(
                "P is {:?} and Sigma is {:?}, expected ({d}, {d})",
                p.shape(),
                sigma.shape()
            )));
        }
        if mu.iter().chain(p.iter()).chain(sigma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("non-finite parameter".into()));
        }
        validate_routing(&p)?;
        let rho = spectral_radius(&p);
        if rho > 1.0 - TRANSIENCE_GAP {
            return Err(Error::NotTransient { spectral_radius: rho });
        }

        let scale = sigma.amax().max(1.0);
        if (&sigma - sigma.transpose()).amax() > 1e-12 * scale {
            return Err(Error::InvalidModel("Sigma is not symmetric".into()));
        }
        let min_eig = sigma.clone().symmetric_eigenvalues().min();
        if min_eig <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "Sigma is not positive definite (smallest eigenvalue {min_eig:e})"
            )));
        }

        let noise = match noise {
            Some(f) => f,
            None => sigma
                .clone()
                .cholesky()
                .ok_or_else(|| Error::InvalidModel("Cholesky factorisation of Sigma failed".into()))?
                .l(),
        };
        if noise.nrows() != d || noise.ncols() < d {
            return Err(Error::InvalidModel(format!(
                "noise factor is {:?}, expected {d} rows and at least {d} columns",
                noise.shape()
            )));
        }
        let err = (&noise * noise.transpose() - &sigma).amax();
        if err > FACTOR_TOL {
            return Err(Error::InvalidModel(format!("|D·Dᵀ − Sigma|_max = {err:e}")));
        }

        Ok(RbmSpec {
            d,
            mu,
            p,
            sigma,
            noise,
            label: label.into(),
            band: None,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// Routing matrix `P`.
    pub fn routing(&self) -> &Matrix {
        &self.p
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    /// Noise factor `D` (d × m) with `D·Dᵀ = Σ`.
    pub fn noise_factor(&self) -> &Matrix {
        &self.noise
    }

    /// Number of scalar Brownian motions driving the model.
    pub fn noise_dim(&self) -> usize {
        self.noise.ncols()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn band(&self) -> Option<BandInfo> {
        self.band
    }

    /// `R = I − Pᵀ`.
    pub fn reflection(&self) -> Matrix {
        reflection_matrix(&self.p)
    }

    /// `R⁻¹`, computed by a direct solve.
    pub fn r_inverse(&self) -> Matrix {
        invert_reflection(&self.p).expect("validated spec has an invertible reflection matrix")
    }

    /// `σᵢ = √Σᵢᵢ`.
    pub fn sigmas(&self) -> Vec<f64> {
        (0..self.d).map(|i| self.sigma[(i, i)].sqrt()).collect()
    }

    /// The `k`-dimensional model with parameters `μ|ₖ`, the first `k` rows of `D`, and `P|ₖ`.
    pub fn restrict(&self, k: usize) -> Result<RbmSpec> {
        if k == 0 || k > self.d {
            return Err(Error::IndexOutOfRange { index: k, max: self.d });
        }
        let p = self.p.view((0, 0), (k, k)).into_owned();
        let sigma = self.sigma.view((0, 0), (k, k)).into_owned();
        let noise = self.noise.rows(0, k).into_owned();
        Ok(RbmSpec {
            d: k,
            mu: self.mu[..k].to_vec(),
            p,
            sigma,
            noise,
            label: format!("{}|{k}", self.label),
            band: None,
        })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }
}

/// On-disk form: dense row-major matrices.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct RbmSpecDoc {
    d: usize,
    mu: Vec<f64>,
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
    label: String,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    noise: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    band: Option<BandInfo>,
}

fn matrix_from_rows(rows: &[Vec<f64>], what: &str) -> Result<Matrix> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidModel(format!("{what} has ragged rows")));
    }
    Ok(Matrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

fn matrix_to_rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl TryFrom<RbmSpecDoc> for RbmSpec {
    type Error = Error;

    fn try_from(doc: RbmSpecDoc) -> Result<Self> {
        if doc.mu.len() != doc.d {
            return Err(Error::InvalidModel(format!(
                "d = {} but mu has {} entries",
                doc.d,
                doc.mu.len()
            )));
        }
        let p = matrix_from_rows(&doc.p, "P")?;
        let sigma = matrix_from_rows(&doc.sigma, "sigma")?;
        let noise = doc.noise.as_deref().map(|r| matrix_from_rows(r, "D")).transpose()?;
        let mut spec = RbmSpec::new(doc.label, doc.mu, p, sigma, noise)?;
        if let Some(band) = doc.band {
            spec.band = Some(check_band(&spec.p, band.j0)?);
        }
        Ok(spec)
    }
}

impl From<RbmSpec> for RbmSpecDoc {
    fn from(s: RbmSpec) -> Self {
        RbmSpecDoc {
            d: s.d,
            mu: s.mu,
            p: matrix_to_rows(&s.p),
            sigma: matrix_to_rows(&s.sigma),
            label: s.label,
            noise: Some(matrix_to_rows(&s.noise)),
            band: s.band,
        }
    }
}

fn validate_routing(p: &Matrix) -> Result<()> {
    for i in 0..p.nrows() {
        let mut sum = 0.0;
        for j in 0..p.ncols() {
            let v = p[(i, j)];
            if v < 0.0 {
                return Err(Error::InvalidModel(format!(
                    "P[{},{}] = {v} is negative",
                    i + 1,
                    j + 1
                )));
            }
            sum += v;
        }
        if sum > 1.0 + ROW_SUM_TOL {
            return Err(Error::InvalidModel(format!(
                "row {} of P sums to {sum} > 1",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Perron root of a nonnegative matrix by power iteration on the lazy matrix
/// `(I + P)/2`, which has the same Perron vector and no periodicity.
pub fn spectral_radius(p: &Matrix) -> f64 {
    let n = p.nrows();
    if n == 0 {
        return 0.0;
    }
    let nz: Vec<(usize, usize, f64)> = (0..n)
        .flat_map(|i| (0..n).map(move |j| (i, j)))
        .filter_map(|(i, j)| {
            let v = p[(i, j)];
            (v != 0.0).then_some((i, j, v))
        })
        .collect();
    if nz.is_empty() {
        return 0.0;
    }
    let mut v = vec![1.0 / n as f64; n];
    let mut w = vec![0.0; n];
    let mut est = f64::NAN;
    for _ in 0..POWER_ITERATIONS {
        w.iter_mut().zip(&v).for_each(|(w, v)| *w = 0.5 * v);
        for &(i, j, pij) in &nz {
            w[i] += 0.5 * pij * v[j];
        }
        let norm: f64 = w.iter().sum();
        v.iter_mut().zip(&w).for_each(|(v, w)| *v = w / norm);
        let done = (norm - est).abs() < 1e-15;
        est = norm;
        if done {
            break;
        }
    }
    2.0 * est - 1.0
}

pub fn reflection_matrix(p: &Matrix) -> Matrix {
    Matrix::identity(p.nrows(), p.ncols()) - p.transpose()
}

/// `(I − Pᵀ)⁻¹` without the transience test. Tiny negative round-off is
/// clamped since every entry is a sum of nonnegative terms.
fn invert_reflection(p: &Matrix) -> Result<Matrix> {
    let r = reflection_matrix(p);
    let n = r.nrows();
    let mut inv = r
        .lu()
        .solve(&Matrix::identity(n, n))
        .ok_or_else(|| Error::Numerical("reflection matrix is singular".into()))?;
    for v in inv.iter_mut() {
        if *v < 0.0 && *v > -1e-12 {
            *v = 0.0;
        }
    }
    Ok(inv)
}

/// `R⁻¹ = (I − Pᵀ)⁻¹ = Σₙ (Pᵀ)ⁿ` by direct solve, after checking transience.
pub fn r_inverse(p: &Matrix) -> Result<Matrix> {
    if !p.is_square() {
        return Err(Error::InvalidArgument("P must be square".into()));
    }
    validate_routing(p)?;
    let rho = spectral_radius(p);
    if rho > 1.0 - TRANSIENCE_GAP {
        return Err(Error::NotTransient { spectral_radius: rho });
    }
    invert_reflection(p)
}

pub fn symmetric_atlas_routing(d: usize) -> Matrix {
    Matrix::from_fn(d, d, |i, j| if i.abs_diff(j) == 1 { 0.5 } else { 0.0 })
}

pub fn asymmetric_atlas_routing(d: usize, p: f64) -> Matrix {
    Matrix::from_fn(d, d, |i, j| {
        if j == i + 1 {
            p
        } else if i == j + 1 {
            1.0 - p
        } else {
            0.0
        }
    })
}

/// Gap covariance of the Atlas family: 2 on the diagonal, −1 next to it.
pub fn atlas_sigma(d: usize) -> Matrix {
    Matrix::from_fn(d, d, |i, j| match i.abs_diff(j) {
        0 => 2.0,
        1 => -1.0,
        _ => 0.0,
    })
}

/// The d × (d+1) particle-difference factor: gap `i` is particle `i+1` minus particle `i`.
pub fn atlas_difference_factor(d: usize) -> Matrix {
    Matrix::from_fn(d, d + 1, |i, j| {
        if j == i {
            -1.0
        } else if j == i + 1 {
            1.0
        } else {
            0.0
        }
    })
}

fn atlas_mu(d: usize) -> Vec<f64> {
    let mut mu = vec![0.0; d];
    mu[0] = -1.0;
    mu
}

/// Gap process of the Symmetric Atlas model with `d + 1` particles.
pub fn build_symmetric_atlas(d: usize) -> Result<RbmSpec> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    RbmSpec::new(
        format!("symmetric_atlas_d{d}"),
        atlas_mu(d),
        symmetric_atlas_routing(d),
        atlas_sigma(d),
        Some(atlas_difference_factor(d)),
    )
}

/// Gap process of the Asymmetric Atlas model, `p ∈ (1/2, 1)`.
pub fn build_asymmetric_atlas(d: usize, p: f64) -> Result<RbmSpec> {
    if d == 0 {
        return Err(Error::InvalidArgument("d must be at least 1".into()));
    }
    if !(p > 0.5 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} is not in (1/2, 1)")));
    }
    RbmSpec::new(
        format!("asymmetric_atlas_d{d}_p{p}"),
        atlas_mu(d),
        asymmetric_atlas_routing(d, p),
        atlas_sigma(d),
        Some(atlas_difference_factor(d)),
    )
}

fn check_band(p: &Matrix, j0: usize) -> Result<BandInfo> {
    let d = p.nrows();
    for i in 0..d {
        for j in 0..d {
            if i.abs_diff(j) > j0 && p[(i, j)] != 0.0 {
                return Err(Error::InvalidModel(format!(
                    "band violation: P[{},{}] = {} with band width {j0}",
                    i + 1,
                    j + 1,
                    p[(i, j)]
                )));
            }
        }
    }
    let mut alpha_prime = 0.0_f64;
    for j in 0..d {
        let col: f64 = p.column(j).sum();
        if col >= 1.0 {
            return Err(Error::InvalidModel(format!(
                "column-sum violation: column {} of P sums to {col} (must be < 1)",
                j + 1
            )));
        }
        alpha_prime = alpha_prime.max(col);
    }
    Ok(BandInfo { j0, alpha_prime })
}

/// Band-matrix model with column sums bounded away from one.
pub fn build_band_model(
    d: usize,
    j0: usize,
    p: Matrix,
    mu: Vec<f64>,
    sigma: Matrix,
) -> Result<RbmSpec> {
    if p.shape() != (d, d) || mu.len() != d {
        return Err(Error::InvalidModel(format!("dimension mismatch for d = {d}")));
    }
    let band = check_band(&p, j0)?;
    let mut spec = RbmSpec::new(format!("band_d{d}_j{j0}"), mu, p, sigma, None)?;
    spec.band = Some(band);
    Ok(spec)
}

fn check_indices(d: usize, i: usize, j: usize) -> Result<()> {
    for idx in [i, j] {
        if idx == 0 || idx > d {
            return Err(Error::IndexOutOfRange { index: idx, max: d });
        }
    }
    Ok(())
}

/// `(R⁻¹)ᵢⱼ` for the Symmetric Atlas model (1-based indices).
pub fn closed_form_rinv_sym(d: usize, i: usize, j: usize) -> Result<f64> {
    check_indices(d, i, j)?;
    let (lo, hi) = if i <= j { (i, j) } else { (j, i) };
    Ok(2.0 * lo as f64 * (1.0 - hi as f64 / (d as f64 + 1.0)))
}

/// `(R⁻¹)ᵢⱼ` for the Asymmetric Atlas model (1-based indices).
///
/// The `j < i` branch is evaluated with powers of `q/p` instead of `p/q`;
/// the two forms are algebraically identical and this one cannot overflow.
pub fn closed_form_rinv_asym(d: usize, p: f64, i: usize, j: usize) -> Result<f64> {
    check_indices(d, i, j)?;
    if !(p > 0.5 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("p = {p} is not in (1/2, 1)")));
    }
    let q = 1.0 - p;
    let a = q / p;
    let n = d as i32 + 1;
    let (i, j) = (i as i32, j as i32);
    let denom = 1.0 - a.powi(n);
    let v = if i <= j {
        a.powi(j - i) / (p - q) * (1.0 - a.powi(i)) * (1.0 - a.powi(n - j)) / denom
    } else {
        (1.0 - a.powi(j)) * (1.0 - a.powi(n - i)) / ((p - q) * denom)
    };
    Ok(v)
}

/// Parameters of the projected `k`-dimensional system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub k: usize,
    /// `b⁽ᵏ⁾ = −(R|ₖ)⁻¹ μ|ₖ`.
    pub b_k: Vec<f64>,
    pub b_low_k: f64,
    pub a_k: f64,
    /// `T⁽ᵏ⁾ = 1 + a² log(2k)`.
    pub t_k: f64,
    /// `Λ⁽ᵏ⁾ = a⁻²`.
    pub lambda_k: f64,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

pub fn derived_params(spec: &RbmSpec, k: usize) -> Result<DerivedParams> {
    if k == 0 || k > spec.d() {
        return Err(Error::IndexOutOfRange { index: k, max: spec.d() });
    }
    let pk = spec.routing().view((0, 0), (k, k)).into_owned();
    let rinv = invert_reflection(&pk)?;
    let mu = spec.mu();
    let b_k: Vec<f64> = (0..k)
        .map(|i| -(0..k).map(|j| rinv[(i, j)] * mu[j]).sum::<f64>())
        .collect();
    if let Some((idx, &v)) = b_k.iter().enumerate().find(|(_, &v)| v <= B_POSITIVITY) {
        return Err(Error::Unstable {
            k,
            index: idx + 1,
            value: v,
        });
    }
    let sig = spec.sigmas();
    let a_k = (0..k)
        .map(|i| (0..k).map(|j| rinv[(i, j)] * sig[j]).sum::<f64>() / b_k[i])
        .fold(0.0_f64, f64::max);
    let b_low_k = b_k.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(DerivedParams {
        k,
        b_low_k,
        a_k,
        t_k: 1.0 + a_k * a_k * (2.0 * k as f64).ln(),
        lambda_k: 1.0 / (a_k * a_k),
        sigma_lo: sig.iter().copied().fold(f64::INFINITY, f64::min),
        sigma_hi: sig.iter().copied().fold(0.0, f64::max),
        b_k,
    })
}

/// `sup_i b̲⁽ⁱ⁾ ‖x|ᵢ‖_∞`: the smallest `B` with `x ∈ 𝒮(b, B)`.
pub fn start_set_radius(spec: &RbmSpec, x: &[f64]) -> Result<f64> {
    let mut running_max = 0.0_f64;
    let mut radius = 0.0_f64;
    for i in 1..=spec.d() {
        running_max = running_max.max(x[i - 1].abs());
        radius = radius.max(derived_params(spec, i)?.b_low_k * running_max);
    }
    Ok(radius)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AssumptionMode {
    #[default]
    Main,
    BoundedRow,
}

/// Candidate `d`-independent constants for the convergence assumptions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssumptionConstants {
    #[serde(rename = "C")]
    pub c: f64,
    pub alpha: f64,
    #[serde(rename = "M")]
    pub m: f64,
    pub b0: f64,
    pub r_star: f64,
    pub k0: usize,
    pub sigma_lo: f64,
    pub sigma_hi: f64,
}

impl AssumptionConstants {
    /// The constants printed for the Asymmetric Atlas family.
    pub fn asymmetric_atlas(p: f64) -> Self {
        let q = 1.0 - p;
        AssumptionConstants {
            c: 1.0 / (p - q),
            alpha: q / p,
            m: 1.0 / (p - q),
            b0: (p - q) / (p * p),
            r_star: 0.0,
            k0: 2,
            sigma_lo: std::f64::consts::SQRT_2,
            sigma_hi: std::f64::consts::SQRT_2,
        }
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} is not in (0, 1)", self.alpha));
        }
        if !(self.c >= 1.0 && self.m >= 1.0) {
            return bad(format!("C = {} and M = {} must be at least 1", self.c, self.m));
        }
        if !(self.b0 > 0.0 && self.r_star >= 0.0 && self.k0 >= 1) {
            return bad("b0 > 0, r_star >= 0 and k0 >= 1 are required".into());
        }
        if !(self.sigma_lo > 0.0 && self.sigma_hi >= self.sigma_lo) {
            return bad("0 < sigma_lo <= sigma_hi is required".into());
        }
        Ok(())
    }
}

/// Location and slack of the tightest instance of a condition. A negative
/// margin is a violation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub i: usize,
    pub j: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub holds: bool,
    pub worst: Option<Witness>,
}

impl ConditionCheck {
    fn vacuous() -> Self {
        ConditionCheck {
            holds: true,
            worst: None,
        }
    }
}

#[derive(Default)]
struct Tightest(Option<Witness>);

impl Tightest {
    /// Records `value ≤ bound` at `(i, j)`.
    fn le(&mut self, i: usize, j: usize, value: f64, bound: f64) {
        let margin = bound - value;
        if self.0.is_none_or(|w| margin < w.margin) {
            self.0 = Some(Witness { i, j, margin });
        }
    }

    fn finish(self, scale: f64) -> ConditionCheck {
        let tol = CHECK_REL_TOL * scale.abs().max(1.0);
        ConditionCheck {
            holds: self.0.is_none_or(|w| w.margin >= -tol),
            worst: self.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub label: String,
    pub d: usize,
    pub mode: AssumptionMode,
    #[serde(rename = "holds_I")]
    pub holds_i: ConditionCheck,
    #[serde(rename = "holds_II")]
    pub holds_ii: ConditionCheck,
    #[serde(rename = "holds_III")]
    pub holds_iii: ConditionCheck,
    #[serde(rename = "holds_IV")]
    pub holds_iv: ConditionCheck,
    #[serde(rename = "holds_IIprime")]
    pub holds_iiprime: ConditionCheck,
    /// All conditions required by `mode` hold.
    pub holds: bool,
    pub constants: AssumptionConstants,
    #[serde(rename = "L1")]
    pub l1: f64,
    #[serde(rename = "L2")]
    pub l2: Option<f64>,
    pub beta: f64,
    pub delta: f64,
    pub lambda: f64,
    #[serde(rename = "C_prime")]
    pub c_prime: f64,
    #[serde(rename = "C_tilde")]
    pub c_tilde: f64,
    #[serde(rename = "C_tilde_prime")]
    pub c_tilde_prime: f64,
}

/// Explicit constants of the local contraction estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContractionConstants {
    pub c_tilde: f64,
    pub c_tilde_prime: f64,
    pub c_prime: f64,
    pub lambda: f64,
}

/// `β ∈ (α, 1)`, `δ ∈ (β, 1)` defaults: `β = √α`, `δ = α^{1/4}`.
pub fn default_beta_delta(alpha: f64) -> (f64, f64) {
    (alpha.sqrt(), alpha.powf(0.25))
}

pub fn contraction_constants(c: f64, m: f64, alpha: f64, beta: f64, delta: f64) -> Result<ContractionConstants> {
    if !(beta > alpha && beta < 1.0) {
        return Err(Error::InvalidArgument(format!("beta = {beta} is not in (alpha = {alpha}, 1)")));
    }
    if !(delta > beta && delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta = {delta} is not in (beta = {beta}, 1)")));
    }
    let bd = beta / delta;
    let ad = alpha / delta;
    let c_tilde = m / ((1.0 - delta) * (1.0 - bd)) + c * ad / ((1.0 - ad) * (1.0 - bd));
    let c_tilde_prime = (c / (1.0 - alpha / beta) + m * beta / (1.0 - beta)).max(1.0);
    Ok(ContractionConstants {
        c_tilde,
        c_tilde_prime,
        c_prime: 2.0 * c_tilde_prime * c_tilde,
        lambda: 1.0 - 1.0 / (2.0 * c_tilde_prime),
    })
}

pub fn l1_constant(k0: usize, r_star: f64, alpha: f64, d: usize) -> f64 {
    (k0 as f64).powf(r_star + 1.0)
        + (k0..=d)
            .map(|i| (i as f64).powf(3.0 + r_star) * alpha.powf(i as f64 / 8.0))
            .sum::<f64>()
}

pub fn l2_constant(k0: usize, r_star: f64, alpha: f64, d: usize) -> f64 {
    (k0 as f64).powf(r_star)
        + (k0..=d)
            .map(|i| (i as f64).powf(2.0 + r_star) * alpha.powf(i as f64 / 8.0))
            .sum::<f64>()
}

/// Verifies the convergence assumptions against caller-supplied constants.
/// `beta_delta` defaults to `(√α, α^{1/4})`.
pub fn check_assumptions(
    spec: &RbmSpec,
    constants: &AssumptionConstants,
    mode: AssumptionMode,
    beta_delta: Option<(f64, f64)>,
) -> Result<AssumptionReport> {
    constants.validate()?;
    let (beta, delta) = beta_delta.unwrap_or_else(|| default_beta_delta(constants.alpha));
    let cc = contraction_constants(constants.c, constants.m, constants.alpha, beta, delta)?;

    let d = spec.d();
    let rinv = spec.r_inverse();

    let mut cond_i = Tightest::default();
    let mut cond_ii = Tightest::default();
    let mut cond_iip = Tightest::default();
    for i in 0..d {
        for j in 0..d {
            let v = rinv[(i, j)];
            if i <= j {
                cond_i.le(i + 1, j + 1, v, constants.c * constants.alpha.powi((j - i) as i32));
            }
            cond_ii.le(i + 1, j + 1, v, constants.m);
        }
        let row: f64 = rinv.row(i).sum();
        cond_iip.le(i + 1, 0, row, constants.m);
    }

    let holds_iii = if constants.k0 > d {
        ConditionCheck::vacuous()
    } else {
        let mut cond_iii = Tightest::default();
        let mut failed_stability = None;
        for k in constants.k0..=d {
            match derived_params(spec, k) {
                Ok(dp) => {
                    let bound = constants.b0 * (k as f64).powf(-constants.r_star);
                    // b̲ ≥ bound, recorded as −b̲ ≤ −bound
                    cond_iii.le(k, 0, -dp.b_low_k, -bound);
                }
                Err(Error::Unstable { k, index, value }) => {
                    failed_stability = Some(Witness {
                        i: k,
                        j: index,
                        margin: value - constants.b0,
                    });
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        match failed_stability {
            Some(w) => ConditionCheck {
                holds: false,
                worst: Some(w),
            },
            None => cond_iii.finish(constants.b0),
        }
    };

    let mut cond_iv = Tightest::default();
    for (i, s) in spec.sigmas().into_iter().enumerate() {
        cond_iv.le(i + 1, 0, s, constants.sigma_hi);
        cond_iv.le(i + 1, 0, -s, -constants.sigma_lo);
    }

    let holds_i = cond_i.finish(constants.c);
    let holds_ii = cond_ii.finish(constants.m);
    let holds_iiprime = cond_iip.finish(constants.m);
    let holds_iv = cond_iv.finish(constants.sigma_hi);
    let main = holds_i.holds && holds_ii.holds && holds_iii.holds && holds_iv.holds;
    let holds = match mode {
        AssumptionMode::Main => main,
        AssumptionMode::BoundedRow => main && holds_iiprime.holds,
    };

    Ok(AssumptionReport {
        label: spec.label().to_string(),
        d,
        mode,
        holds_i,
        holds_ii,
        holds_iii,
        holds_iv,
        holds_iiprime,
        holds,
        constants: *constants,
        l1: l1_constant(constants.k0, constants.r_star, constants.alpha, d),
        l2: holds_iiprime
            .holds
            .then(|| l2_constant(constants.k0, constants.r_star, constants.alpha, d)),
        beta,
        delta,
        lambda: cc.lambda,
        c_prime: cc.c_prime,
        c_tilde: cc.c_tilde,
        c_tilde_prime: cc.c_tilde_prime,
    })
}

/// Heuristic constants for a model: `α` from a log-linear fit of the decay of
/// the largest entry on each superdiagonal of `R⁻¹`, the rest as the tightest
/// values compatible with that `α`. A convenience, not a verification.
pub fn suggest_constants(spec: &RbmSpec) -> Result<AssumptionConstants> {
    let d = spec.d();
    let rinv = spec.r_inverse();
    let points: Vec<(f64, f64)> = (0..d)
        .filter_map(|off| {
            let m = (0..d - off).map(|i| rinv[(i, i + off)]).fold(0.0_f64, f64::max);
            (m > 0.0).then(|| (off as f64, m.ln()))
        })
        .collect();
    let alpha = if points.len() >= 2 {
        let n = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
        let my = points.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxy / sxx).exp()
    } else {
        0.5
    }
    .clamp(1e-6, 1.0 - 1e-6);

    let mut c = 1.0_f64;
    let mut m = 1.0_f64;
    for i in 0..d {
        for j in 0..d {
            let v = rinv[(i, j)];
            m = m.max(v);
            if i <= j {
                c = c.max(v / alpha.powi((j - i) as i32));
            }
        }
    }
    let mut b0 = f64::INFINITY;
    for k in 1..=d {
        b0 = b0.min(derived_params(spec, k)?.b_low_k);
    }
    let sig = spec.sigmas();
    Ok(AssumptionConstants {
        c,
        alpha,
        m,
        b0,
        r_star: 0.0,
        k0: d.clamp(1, 2),
        sigma_lo: sig.iter().copied().fold(f64::INFINITY, f64::min),
        sigma_hi: sig.iter().copied().fold(0.0, f64::max),
    })
}

/// Largest integer `k ≥ 0` with `k^root ≤ t`, robust to rounding in `t^{1/root}`.
pub fn floor_root(t: f64, root: f64) -> usize {
    if !(t >= 1.0) {
        return 0;
    }
    let mut k = t.powf(1.0 / root).floor() as usize;
    while ((k + 1) as f64).powf(root) <= t {
        k += 1;
    }
    while k > 0 && (k as f64).powf(root) > t {
        k -= 1;
    }
    k
}

/// Number of tracked coordinates `ℓ(t)`.
pub fn schedule_ell(t: f64, d: usize, r_star: f64, mode: AssumptionMode) -> usize {
    let root = match mode {
        AssumptionMode::Main => 3.0 + 2.0 * r_star,
        AssumptionMode::BoundedRow => 1.0 + 2.0 * r_star,
    };
    d.min(floor_root(t, root))
}

/// Number of tracked coordinates `d(t)` used for the stationary arm.
pub fn schedule_dt(t: f64, d: usize, r_star: f64, mode: AssumptionMode) -> usize {
    let root = match mode {
        AssumptionMode::Main => 4.0 + 2.0 * r_star,
        AssumptionMode::BoundedRow => 1.0 + 2.0 * r_star,
    };
    d.min(floor_root(t, root))
}

/// True when `P` is the Symmetric Atlas routing matrix.
pub fn is_symmetric_atlas_routing(p: &Matrix) -> bool {
    let d = p.nrows();
    p.is_square()
        && (0..d).all(|i| {
            (0..d).all(|j| {
                let want = if i.abs_diff(j) == 1 { 0.5 } else { 0.0 };
                p[(i, j)] == want
            })
        })
}
