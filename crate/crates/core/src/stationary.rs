//! Stationary starts: the exact Symmetric Atlas law, perturbations of it, and
//! burn-in for models without a closed form.

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{derived_params, floor_root, RbmSpec};
use crate::seeds::rng_from;
use crate::skorokhod::{simulate, BrownianDriver};
use crate::stats::mean_stderr;

/// Growth exponent below which a caller-supplied schedule is admissible.
pub const SCHEDULE_EXPONENT_CAP: f64 = 3.0 / 32.0;

/// Distribution of one coordinate of a finite random perturbation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "snake_case")]
pub enum Sampler {
    Exponential { mean: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

impl Sampler {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Sampler::Exponential { mean } => mean > 0.0 && mean.is_finite(),
            Sampler::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Sampler::Constant { value } => value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid sampler {self:?}")))
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match *self {
            Sampler::Exponential { mean } => Exp::new(1.0 / mean).expect("validated").sample(rng),
            Sampler::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
            Sampler::Constant { value } => value,
        }
    }

    /// `E|Y|`.
    pub fn mean_abs(&self) -> f64 {
        match *self {
            Sampler::Exponential { mean } => mean,
            Sampler::Uniform { lo, hi } => {
                if lo >= 0.0 {
                    0.5 * (lo + hi)
                } else if hi <= 0.0 {
                    -0.5 * (lo + hi)
                } else {
                    (lo * lo + hi * hi) / (2.0 * (hi - lo))
                }
            }
            Sampler::Constant { value } => value.abs(),
        }
    }
}

/// `n(t) = max(1, ⌊c·t^γ⌋)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSchedule {
    pub c: f64,
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbationKind {
    /// A fixed vector; entries past its length are 0.
    Constant {
        values: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        schedule: Option<PowerSchedule>,
    },
    /// `m` independent coordinates with the given samplers; the rest are 0.
    Finite { m: usize, samplers: Vec<Sampler> },
    /// `Yᵢ ~ Exp` with mean `i^{−(1+β)}`.
    ExpRates { beta_exp: f64 },
}

/// A random perturbation of a stationary start, with its declared class parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    #[serde(flatten)]
    pub kind: PerturbationKind,
    #[serde(rename = "P1", default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(rename = "P2", default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl PerturbationSpec {
    pub fn constant(values: Vec<f64>) -> Self {
        let l1: f64 = values.iter().map(|v| v.abs()).sum();
        let sup = values.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
        PerturbationSpec {
            kind: PerturbationKind::Constant { values, schedule: None },
            p1: Some(l1 * l1),
            p2: Some(sup.exp()),
            delta: Some(1.0),
        }
    }

    /// Exponential rates with the class parameters `P1 = Σi^{−2(1+β)} + (Σi^{−(1+β)})²`,
    /// `P2 = 1 + Σi^{−(1+β)}`, `δ = 1/2`.
    pub fn exp_rates(beta_exp: f64) -> Self {
        let s1 = power_tail(1.0 + beta_exp, 0);
        let s2 = power_tail(2.0 * (1.0 + beta_exp), 0);
        PerturbationSpec {
            kind: PerturbationKind::ExpRates { beta_exp },
            p1: Some(s2 + s1 * s1),
            p2: Some(1.0 + s1),
            delta: Some(0.5),
        }
    }

    pub fn finite(samplers: Vec<Sampler>) -> Self {
        PerturbationSpec {
            kind: PerturbationKind::Finite {
                m: samplers.len(),
                samplers,
            },
            p1: None,
            p2: None,
            delta: None,
        }
    }

    pub fn with_schedule(mut self, s: PowerSchedule) -> Self {
        if let PerturbationKind::Constant { schedule, .. } = &mut self.kind {
            *schedule = Some(s);
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            PerturbationKind::Constant { values, schedule } => {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidArgument("constant perturbation has a non-finite entry".into()));
                }
                if let Some(s) = schedule {
                    if !(s.c > 0.0 && s.gamma >= 0.0 && s.gamma < SCHEDULE_EXPONENT_CAP) {
                        return Err(Error::InvalidArgument(format!(
                            "schedule needs c > 0 and 0 <= gamma < 3/32, got {s:?}"
                        )));
                    }
                }
            }
            PerturbationKind::Finite { m, samplers } => {
                if *m == 0 || samplers.len() != *m {
                    return Err(Error::InvalidArgument(format!(
                        "finite perturbation needs m >= 1 samplers, got m = {m} and {} samplers",
                        samplers.len()
                    )));
                }
                samplers.iter().try_for_each(Sampler::validate)?;
            }
            PerturbationKind::ExpRates { beta_exp } => {
                if !(*beta_exp > 0.0 && beta_exp.is_finite()) {
                    return Err(Error::InvalidArgument(format!("beta_exp = {beta_exp} must be positive")));
                }
            }
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return Err(Error::InvalidArgument(format!("delta = {d} must be positive")));
            }
        }
        Ok(())
    }
}

/// `Σ_{i>n} i^{−s}` for `s > 1`, with an Euler–Maclaurin tail past a cutoff.
pub fn power_tail(s: f64, n: usize) -> f64 {
    const CUTOFF: usize = 1000;
    let start = n + 1;
    let big = start.max(CUTOFF);
    let head: f64 = (start..big).map(|i| (i as f64).powf(-s)).sum();
    let nn = big as f64;
    let f = nn.powf(-s);
    let f1 = -s * nn.powf(-s - 1.0);
    let f3 = -s * (s + 1.0) * (s + 2.0) * nn.powf(-s - 3.0);
    let tail = nn.powf(1.0 - s) / (s - 1.0) + 0.5 * f - f1 / 12.0 + f3 / 720.0;
    head + tail
}

/// Independent exponentials with rates `2(1 − i/(d+1))`.
pub fn sample_atlas_stationary(d: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from(seed);
    sample_atlas_stationary_with(d, &mut rng)
}

pub fn sample_atlas_stationary_with<R: Rng>(d: usize, rng: &mut R) -> Vec<f64> {
    (1..=d)
        .map(|i| {
            let rate = atlas_stationary_rate(d, i);
            Exp::new(rate).expect("positive rate").sample(rng)
        })
        .collect()
}

/// Rate of gap `i` (1-based) under the Symmetric Atlas stationary law.
pub fn atlas_stationary_rate(d: usize, i: usize) -> f64 {
    2.0 * (1.0 - i as f64 / (d as f64 + 1.0))
}

pub fn atlas_stationary_mean(d: usize) -> Vec<f64> {
    (1..=d).map(|i| 1.0 / atlas_stationary_rate(d, i)).collect()
}

/// The first `d` coordinates of a perturbation draw.
pub fn sample_perturbation(pspec: &PerturbationSpec, d: usize, seed: u64) -> Result<Vec<f64>> {
    pspec.validate()?;
    let mut rng = rng_from(seed);
    Ok(sample_perturbation_with(pspec, d, &mut rng))
}

pub fn sample_perturbation_with<R: Rng>(pspec: &PerturbationSpec, d: usize, rng: &mut R) -> Vec<f64> {
    match &pspec.kind {
        PerturbationKind::Constant { values, .. } => (0..d).map(|i| values.get(i).copied().unwrap_or(0.0)).collect(),
        PerturbationKind::Finite { samplers, .. } => (0..d)
            .map(|i| samplers.get(i).map_or(0.0, |s| s.sample(rng)))
            .collect(),
        PerturbationKind::ExpRates { beta_exp } => (1..=d)
            .map(|i| {
                let rate = (i as f64).powf(1.0 + beta_exp);
                Exp::new(rate).expect("positive rate").sample(rng)
            })
            .collect(),
    }
}

/// Entrywise positive part of `x_inf + y`.
pub fn perturbed_start(x_inf: &[f64], y: &[f64]) -> Vec<f64> {
    x_inf.iter().zip(y).map(|(a, b)| (a + b).max(0.0)).collect()
}

/// `E Σ_{i>n} |Yᵢ|`.
pub fn alpha_y(pspec: &PerturbationSpec, n: usize) -> Result<f64> {
    pspec.validate()?;
    let v = match &pspec.kind {
        PerturbationKind::Constant { values, .. } => values.iter().skip(n).map(|v| v.abs()).sum(),
        PerturbationKind::Finite { samplers, .. } => samplers.iter().skip(n).map(Sampler::mean_abs).sum(),
        PerturbationKind::ExpRates { beta_exp } => power_tail(1.0 + beta_exp, n),
    };
    if !v.is_finite() {
        return Err(Error::Numerical("perturbation tail sum diverges".into()));
    }
    Ok(v)
}

/// Number of perturbed coordinates tracked at time `t`.
pub fn n_schedule(pspec: &PerturbationSpec, t: f64) -> Result<usize> {
    pspec.validate()?;
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("t = {t} must be nonnegative")));
    }
    match &pspec.kind {
        PerturbationKind::Finite { m, .. } => Ok(*m),
        PerturbationKind::ExpRates { beta_exp } => {
            let root = 32.0 * (1.0 + beta_exp) / 3.0;
            Ok(floor_root(t, root).max(1))
        }
        PerturbationKind::Constant { schedule, .. } => {
            let s = schedule.ok_or_else(|| {
                Error::InvalidArgument("constant perturbations need a caller-supplied schedule".into())
            })?;
            Ok(((s.c * t.powf(s.gamma)).floor() as usize).max(1))
        }
    }
}

/// Checks on a grid that the schedule is at least 1 and non-decreasing.
pub fn validate_schedule(pspec: &PerturbationSpec, grid: &[f64]) -> Result<Vec<usize>> {
    let ns = grid.iter().map(|&t| n_schedule(pspec, t)).collect::<Result<Vec<_>>>()?;
    if ns.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidArgument("schedule n(t) decreases on the grid".into()));
    }
    Ok(ns)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    /// Estimate of `E‖Y‖₁²` over the first `truncation` coordinates.
    pub l1_sq: f64,
    pub l1_sq_stderr: f64,
    pub truncation: usize,
    /// Upper bound on what the neglected coordinates add to `E‖Y‖₁²`.
    pub truncation_bound: f64,
    /// Estimate of `max_{m ≤ m_max} E exp(δ m^{−2} ‖Y|ₘ‖_∞)`.
    pub exp_moment: f64,
    pub exp_moment_stderr: f64,
    pub argmax_m: usize,
    pub p1_ok: Option<bool>,
    /// `None` when no `P2` is declared or the estimate overflowed.
    pub p2_ok: Option<bool>,
    pub p2_inconclusive: bool,
    pub note: String,
}

/// Monte Carlo check of the declared class parameters `P1`, `P2`, `δ`
/// (exact for constant perturbations). The supremum over `m` is taken up to `m_max`.
pub fn class_check(pspec: &PerturbationSpec, m_max: usize, n_mc: usize, seed: u64) -> Result<ClassReport> {
    pspec.validate()?;
    if m_max == 0 || n_mc < 2 {
        return Err(Error::InvalidArgument("m_max >= 1 and n_mc >= 2 are required".into()));
    }
    let delta = pspec.delta.unwrap_or(1.0);
    let note = "sup over m checked for m <= m_max only".to_string();

    if let PerturbationKind::Constant { values, .. } = &pspec.kind {
        let l1: f64 = values.iter().map(|v| v.abs()).sum();
        let mut running = 0.0_f64;
        let mut best = (1.0_f64, 1usize);
        for m in 1..=m_max.max(values.len()) {
            running = running.max(values.get(m - 1).map_or(0.0, |v| v.abs()));
            let v = (delta * running / (m * m) as f64).exp();
            if v > best.0 {
                best = (v, m);
            }
        }
        let l1_sq = l1 * l1;
        return Ok(ClassReport {
            l1_sq,
            l1_sq_stderr: 0.0,
            truncation: values.len(),
            truncation_bound: 0.0,
            exp_moment: best.0,
            exp_moment_stderr: 0.0,
            argmax_m: best.1,
            p1_ok: pspec.p1.map(|p| l1_sq <= p * (1.0 + 1e-12)),
            p2_ok: pspec.p2.map(|p| best.0 <= p * (1.0 + 1e-12)),
            p2_inconclusive: !best.0.is_finite(),
            note,
        });
    }

    let len = match &pspec.kind {
        PerturbationKind::Finite { m, .. } => (*m).max(m_max),
        _ => m_max,
    };
    let mut rng = rng_from(seed);
    let mut l1_sq = Vec::with_capacity(n_mc);
    let mut l1 = Vec::with_capacity(n_mc);
    let mut sums = vec![0.0; m_max];
    let mut sq = vec![0.0; m_max];
    for _ in 0..n_mc {
        let y = sample_perturbation_with(pspec, len, &mut rng);
        let s: f64 = y.iter().map(|v| v.abs()).sum();
        l1.push(s);
        l1_sq.push(s * s);
        let mut running = 0.0_f64;
        for m in 1..=m_max {
            running = running.max(y[m - 1].abs());
            let v = (delta * running / (m * m) as f64).exp();
            sums[m - 1] += v;
            sq[m - 1] += v * v;
        }
    }
    let (l1_sq_mean, l1_sq_se) = mean_stderr(&l1_sq);
    let (l1_mean, _) = mean_stderr(&l1);
    let truncation_bound = match &pspec.kind {
        PerturbationKind::ExpRates { beta_exp } => {
            let s = 1.0 + beta_exp;
            let a = power_tail(s, len);
            2.0 * l1_mean * a + power_tail(2.0 * s, len) + a * a
        }
        _ => 0.0,
    };
    let n = n_mc as f64;
    let mut best = (f64::NEG_INFINITY, 0.0, 1usize);
    for m in 0..m_max {
        let mean = sums[m] / n;
        let var = (sq[m] / n - mean * mean).max(0.0) * n / (n - 1.0);
        if mean > best.0 {
            best = (mean, (var / n).sqrt(), m + 1);
        }
    }
    let inconclusive = !best.0.is_finite() || !best.1.is_finite();
    Ok(ClassReport {
        l1_sq: l1_sq_mean,
        l1_sq_stderr: l1_sq_se,
        truncation: len,
        truncation_bound,
        exp_moment: best.0,
        exp_moment_stderr: best.1,
        argmax_m: best.2,
        p1_ok: pspec.p1.map(|p| l1_sq_mean + truncation_bound <= p + 3.0 * l1_sq_se),
        p2_ok: if inconclusive {
            None
        } else {
            pspec.p2.map(|p| best.0 <= p + 3.0 * best.1)
        },
        p2_inconclusive: inconclusive,
        note,
    })
}

/// Endpoint of a path run for `t_burn` from `(1/b̲)·1`, where `b̲` is the
/// smallest entry of `−R⁻¹μ`.
pub fn burnin_stationary(spec: &RbmSpec, t_burn: f64, h: f64, seed: u64) -> Result<Vec<f64>> {
    let start = burnin_start(spec)?;
    let mut drv = BrownianDriver::new(seed, spec.noise_dim(), h);
    let path = simulate(spec, &start, t_burn, &mut drv)?;
    Ok(path.x_end().to_vec())
}

pub fn burnin_start(spec: &RbmSpec) -> Result<Vec<f64>> {
    let dp = derived_params(spec, spec.d())?;
    Ok(vec![1.0 / dp.b_low_k; spec.d()])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_symmetric_atlas;

    #[test]
    fn stationary_rates() {
        assert_eq!(atlas_stationary_rate(1, 1), 1.0);
        let r: Vec<f64> = (1..=3).map(|i| atlas_stationary_rate(3, i)).collect();
        assert_eq!(r, vec![1.5, 1.0, 0.5]);
        assert_eq!(sample_atlas_stationary(4, 9), sample_atlas_stationary(4, 9));
    }

    #[test]
    fn stationary_sample_means() {
        let n = 100_000;
        let mut rng = rng_from(1);
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_atlas_stationary_with(3, &mut rng)).collect();
        for (i, want) in [2.0 / 3.0, 1.0, 2.0].into_iter().enumerate() {
            let col: Vec<f64> = draws.iter().map(|v| v[i]).collect();
            let (m, se) = mean_stderr(&col);
            assert!((m - want).abs() <= 3.0 * se, "coord {i}: {m} vs {want}");
        }
    }

    #[test]
    fn perturbed_start_clips() {
        let x = vec![0.5, 1.0, 2.0];
        assert_eq!(perturbed_start(&x, &[0.0; 3]), x);
        let y = sample_perturbation(&PerturbationSpec::constant(vec![-10.0]), 3, 0).unwrap();
        assert_eq!(perturbed_start(&x, &y), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn exp_rates_sample_means() {
        let ps = PerturbationSpec::exp_rates(1.0);
        let n = 100_000;
        let mut rng = rng_from(4);
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sample_perturbation_with(&ps, 4, &mut rng)).collect();
        for i in 0..4 {
            let col: Vec<f64> = draws.iter().map(|v| v[i]).collect();
            let (m, se) = mean_stderr(&col);
            let want = 1.0 / ((i + 1) * (i + 1)) as f64;
            assert!((m - want).abs() <= 3.0 * se, "coord {i}: {m} vs {want}");
        }
    }

    #[test]
    fn alpha_y_values() {
        let fin = PerturbationSpec::finite(vec![Sampler::Exponential { mean: 1.0 }; 4]);
        assert_eq!(alpha_y(&fin, 4).unwrap(), 0.0);
        assert_eq!(alpha_y(&fin, 7).unwrap(), 0.0);
        assert_eq!(alpha_y(&fin, 2).unwrap(), 2.0);
        assert_eq!(alpha_y(&PerturbationSpec::constant(vec![1.0, 0.5]), 1).unwrap(), 0.5);

        // partial-sum oracle: Σ_{i≤N} i^{−2} + 1/N − 1/(2N²) + 1/(6N³) is accurate to O(N^{−5})
        let n_terms = 200_000usize;
        let partial: f64 = (1..=n_terms).rev().map(|i| 1.0 / (i as f64 * i as f64)).sum();
        let nf = n_terms as f64;
        let zeta2 = partial + 1.0 / nf - 0.5 / (nf * nf) + 1.0 / (6.0 * nf * nf * nf);
        assert!((zeta2 - std::f64::consts::PI.powi(2) / 6.0).abs() < 1e-14);
        let got = alpha_y(&PerturbationSpec::exp_rates(1.0), 1).unwrap();
        assert!((got - (zeta2 - 1.0)).abs() < 1e-12, "{got}");
        assert!((got - 0.644934).abs() < 1e-6);
    }

    #[test]
    fn alpha_y_is_non_increasing() {
        let ps = [
            PerturbationSpec::exp_rates(0.5),
            PerturbationSpec::constant(vec![1.0, -2.0, 0.0, 3.0]),
            PerturbationSpec::finite(vec![Sampler::Uniform { lo: -1.0, hi: 2.0 }; 3]),
        ];
        for p in &ps {
            let v: Vec<f64> = (0..20).map(|n| alpha_y(p, n).unwrap()).collect();
            assert!(v.windows(2).all(|w| w[1] <= w[0]), "{p:?}");
        }
        assert!(alpha_y(&ps[0], 1_000_000).unwrap() < 2.1e-3);
    }

    #[test]
    fn uniform_mean_abs_straddling_zero() {
        // E|U| for U ~ Uniform(−1, 3) is (1 + 9)/8
        assert_eq!(Sampler::Uniform { lo: -1.0, hi: 3.0 }.mean_abs(), 1.25);
    }

    #[test]
    fn schedules() {
        let e = PerturbationSpec::exp_rates(1.0);
        assert_eq!(n_schedule(&e, 2f64.powi(32)).unwrap(), 2);
        assert_eq!(n_schedule(&e, 0.0).unwrap(), 1);
        let f = PerturbationSpec::finite(vec![Sampler::Constant { value: 1.0 }; 4]);
        assert_eq!(n_schedule(&f, 123.0).unwrap(), 4);
        let c = PerturbationSpec::constant(vec![1.0]);
        assert!(n_schedule(&c, 1.0).is_err());
        let c = c.with_schedule(PowerSchedule { c: 2.0, gamma: 0.05 });
        assert_eq!(validate_schedule(&c, &[1.0, 10.0, 1e6]).unwrap(), vec![2, 2, 3]);
        let bad = PerturbationSpec::constant(vec![1.0]).with_schedule(PowerSchedule { c: 1.0, gamma: 0.2 });
        assert!(bad.validate().is_err());
    }

    #[test]
    fn class_check_constant_and_zero() {
        let c = PerturbationSpec::constant(vec![1.0, -0.5, 0.25]);
        let r = class_check(&c, 200, 10, 1).unwrap();
        assert_eq!(r.l1_sq, 1.75 * 1.75);
        assert_eq!(r.p1_ok, Some(true));
        assert_eq!(r.p2_ok, Some(true));

        let z = PerturbationSpec::constant(vec![0.0; 5]);
        assert_eq!(z.p1, Some(0.0));
        assert_eq!(z.p2, Some(1.0));
        let r = class_check(&z, 50, 10, 1).unwrap();
        assert_eq!(r.exp_moment, 1.0);
        assert_eq!((r.p1_ok, r.p2_ok), (Some(true), Some(true)));
    }

    #[test]
    fn class_check_exp_rates() {
        let e = PerturbationSpec::exp_rates(1.0);
        let r = class_check(&e, 200, 20_000, 3).unwrap();
        assert_eq!(r.p1_ok, Some(true), "{r:?}");
        assert_eq!(r.p2_ok, Some(true), "{r:?}");
        // m = 1 gives E exp(Y₁/2) = 2 for Y₁ ~ Exp(1)
        assert!(r.exp_moment > 1.9 && r.exp_moment < 2.1, "{r:?}");
    }

    #[test]
    fn perturbation_json() {
        let doc = r#"{"kind":"exp_rates","beta_exp":1.0,"P1":2.0,"P2":2.6,"delta":0.5}"#;
        let p: PerturbationSpec = serde_json::from_str(doc).unwrap();
        assert_eq!(p.kind, PerturbationKind::ExpRates { beta_exp: 1.0 });
        let doc = r#"{"kind":"finite","m":2,"samplers":[{"dist":"exponential","mean":1.0},{"dist":"constant","value":-1.0}]}"#;
        let p: PerturbationSpec = serde_json::from_str(doc).unwrap();
        p.validate().unwrap();
        let back: PerturbationSpec = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn burnin_basics() {
        let spec = build_symmetric_atlas(3).unwrap();
        let start = burnin_start(&spec).unwrap();
        assert!(start.iter().all(|&v| (v - 2.0).abs() < 1e-12));
        assert_eq!(burnin_stationary(&spec, 0.0, 0.01, 1).unwrap(), start);
        assert_eq!(
            burnin_stationary(&spec, 1.0, 0.01, 5).unwrap(),
            burnin_stationary(&spec, 1.0, 0.01, 5).unwrap()
        );
    }
}
