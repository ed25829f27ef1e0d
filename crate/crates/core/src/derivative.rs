//! Sensitivity of the path to its start point.
//!
//! Between face crossings the derivative with respect to `x_{i0}` is constant;
//! at a crossing of face `i` the vector `S` loses its `i`-th entry along the
//! `i`-th column of `R`. For the Symmetric Atlas model this is a symmetric
//! random walk on `{0, …, d+1}` whose clock is the crossing sequence, and the
//! derivative equals the walk's quenched law.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::coupling::{crossing_log, CrossingLog};
use crate::error::{Error, Result};
use crate::model::{is_symmetric_atlas_routing, Matrix, RbmSpec};
use crate::seeds::{purpose_seed, rng_from, sub_seed, Purpose};
use crate::skorokhod::{simulate, BrownianDriver};
use crate::stats::mean_stderr;

pub const DEFAULT_EPS: f64 = 1e-4;
pub const DEFAULT_N_GRID: usize = 16;

fn is_atlas_reflection(r: &Matrix) -> bool {
    let p = Matrix::identity(r.nrows(), r.ncols()) - r.transpose();
    is_symmetric_atlas_routing(&p)
}

/// Derivative vector after `k` crossings, with the mass absorbed at the two
/// ends when the reflection matrix is the Symmetric Atlas one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeState {
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    pub w0: Option<f64>,
    pub wdp1: Option<f64>,
    pub k: usize,
}

impl DerivativeState {
    pub fn start(d: usize, i0: usize, track_absorption: bool) -> Result<Self> {
        if i0 == 0 || i0 > d {
            return Err(Error::IndexOutOfRange { index: i0, max: d });
        }
        let mut s = vec![0.0; d];
        s[i0 - 1] = 1.0;
        let (w0, wdp1) = if track_absorption {
            (Some(0.0), Some(0.0))
        } else {
            (None, None)
        };
        Ok(DerivativeState { s, w0, wdp1, k: 0 })
    }

    /// Total mass including the absorbed parts, when tracked.
    pub fn total_mass(&self) -> f64 {
        self.s.iter().sum::<f64>() + self.w0.unwrap_or(0.0) + self.wdp1.unwrap_or(0.0)
    }

    /// `1 − w0`: probability the walk has not been absorbed at 0.
    pub fn survival(&self) -> Option<f64> {
        self.w0.map(|w| 1.0 - w)
    }

    /// Mass at each site `0..=d+1`.
    pub fn site_masses(&self) -> Option<Vec<f64>> {
        let (w0, wd) = (self.w0?, self.wdp1?);
        let mut out = Vec::with_capacity(self.s.len() + 2);
        out.push(w0);
        out.extend_from_slice(&self.s);
        out.push(wd);
        Some(out)
    }

    /// Applies one crossing of face `coord` (1-based) with reflection columns `cols`.
    fn apply(&mut self, coord: usize, cols: &[Vec<(usize, f64)>]) -> Result<()> {
        let d = self.s.len();
        if coord == 0 || coord > d {
            return Err(Error::IndexOutOfRange { index: coord, max: d });
        }
        let i = coord - 1;
        let c = self.s[i];
        if let Some(w0) = self.w0.as_mut().filter(|_| i == 0) {
            *w0 += 0.5 * c;
        }
        if let Some(wd) = self.wdp1.as_mut().filter(|_| i == d - 1) {
            *wd += 0.5 * c;
        }
        for &(j, r) in &cols[i] {
            if j == i && r == 1.0 {
                self.s[j] = 0.0;
            } else {
                self.s[j] -= c * r;
            }
        }
        self.k += 1;
        Ok(())
    }
}

fn sparse_columns(r: &Matrix) -> Vec<Vec<(usize, f64)>> {
    (0..r.ncols())
        .map(|i| {
            (0..r.nrows())
                .filter_map(|j| {
                    let v = r[(j, i)];
                    (v != 0.0).then_some((j, v))
                })
                .collect()
        })
        .collect()
}

/// Runs the recursion over the crossings with `τ ≤ t`, calling `each` after every event.
pub fn derivative_trace(
    log: &CrossingLog,
    i0: usize,
    r: &Matrix,
    t: f64,
    mut each: impl FnMut(&DerivativeState),
) -> Result<DerivativeState> {
    let d = r.nrows();
    if log.d != d {
        return Err(Error::InvalidArgument(format!(
            "log is for d = {}, reflection matrix for d = {d}",
            log.d
        )));
    }
    let cols = sparse_columns(r);
    let mut state = DerivativeState::start(d, i0, is_atlas_reflection(r))?;
    for e in log.up_to(t) {
        state.apply(e.coord, &cols)?;
        each(&state);
    }
    Ok(state)
}

/// Derivative of `X(·, t)` in direction `e_{i0}` read off the crossing log.
pub fn derivative_evolve(log: &CrossingLog, i0: usize, r: &Matrix, t: f64) -> Result<DerivativeState> {
    derivative_trace(log, i0, r, t, |_| {})
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WalkState {
    pub position: usize,
    /// Number of jumps made by time `t`.
    pub jumps: usize,
    pub absorbed: bool,
    pub min_position: usize,
    pub max_position: usize,
}

/// Crossing events indexed by coordinate for fast walk sampling.
#[derive(Debug, Clone)]
pub struct Environment {
    d: usize,
    /// `by_coord[i]`: indices into the event list of crossings of face `i + 1`.
    by_coord: Vec<Vec<usize>>,
}

impl Environment {
    /// Keeps the events with `τ ≤ t`.
    pub fn new(log: &CrossingLog, t: f64) -> Self {
        let mut by_coord = vec![Vec::new(); log.d];
        for (k, e) in log.up_to(t).iter().enumerate() {
            by_coord[e.coord - 1].push(k);
        }
        Environment { d: log.d, by_coord }
    }

    pub fn sample<R: Rng>(&self, i0: usize, rng: &mut R) -> WalkState {
        let mut pos = i0;
        let mut last: Option<usize> = None;
        let mut jumps = 0;
        let (mut lo, mut hi) = (i0, i0);
        while pos >= 1 && pos <= self.d {
            let list = &self.by_coord[pos - 1];
            let k = match last {
                None => 0,
                Some(l) => list.partition_point(|&e| e <= l),
            };
            let Some(&event) = list.get(k) else { break };
            last = Some(event);
            pos = if rng.random_bool(0.5) { pos + 1 } else { pos - 1 };
            jumps += 1;
            lo = lo.min(pos);
            hi = hi.max(pos);
        }
        WalkState {
            position: pos,
            jumps,
            absorbed: pos == 0 || pos == self.d + 1,
            min_position: lo,
            max_position: hi,
        }
    }
}

/// One walk in the environment `log` started at `i0`, observed at time `t`.
pub fn rw_sample(log: &CrossingLog, i0: usize, t: f64, seed: u64) -> Result<WalkState> {
    if i0 == 0 || i0 > log.d {
        return Err(Error::IndexOutOfRange { index: i0, max: log.d });
    }
    Ok(Environment::new(log, t).sample(i0, &mut rng_from(seed)))
}

/// Empirical law of the walk position at time `t` over sites `0..=d+1`.
pub fn rw_distribution_mc(log: &CrossingLog, i0: usize, t: f64, n_samples: usize, seed: u64) -> Result<Vec<f64>> {
    if i0 == 0 || i0 > log.d {
        return Err(Error::IndexOutOfRange { index: i0, max: log.d });
    }
    if n_samples == 0 {
        return Err(Error::InvalidArgument("n_samples must be positive".into()));
    }
    let env = Environment::new(log, t);
    let mut rng = rng_from(seed);
    let mut counts = vec![0usize; log.d + 2];
    for _ in 0..n_samples {
        counts[env.sample(i0, &mut rng).position] += 1;
    }
    Ok(counts.into_iter().map(|c| c as f64 / n_samples as f64).collect())
}

/// Per-site agreement of an empirical law with exact masses at `3σ` binomial error.
/// Returns the number of agreeing sites. A site with exact mass 0 or 1 agrees
/// only if the empirical mass equals it.
pub fn sites_within_3_sigma(empirical: &[f64], exact: &[f64], n: usize) -> usize {
    empirical
        .iter()
        .zip(exact)
        .filter(|(&e, &p)| {
            let sd = (p * (1.0 - p) / n as f64).max(0.0).sqrt();
            (e - p).abs() <= 3.0 * sd + 1e-12
        })
        .count()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FiniteDiffResult {
    pub finite_diff: Vec<f64>,
    pub recursion: DerivativeState,
    /// The perturbed path crossed faces in a different order by time `T`.
    pub divergent: bool,
    /// `‖finite_diff − S‖_∞`.
    pub gap: f64,
}

/// Finite-difference derivative on a shared driver against the recursion on the base path.
pub fn finite_diff_derivative(
    spec: &RbmSpec,
    x: &[f64],
    i0: usize,
    eps: f64,
    horizon: f64,
    h: f64,
    seed: u64,
) -> Result<FiniteDiffResult> {
    let d = spec.d();
    if i0 == 0 || i0 > d {
        return Err(Error::IndexOutOfRange { index: i0, max: d });
    }
    if x.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("start must be strictly positive".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps = {eps} must be positive")));
    }
    let mut xp = x.to_vec();
    xp[i0 - 1] += eps;
    let m = spec.noise_dim();
    let base = simulate(spec, x, horizon, &mut BrownianDriver::new(seed, m, h))?;
    let pert = simulate(spec, &xp, horizon, &mut BrownianDriver::new(seed, m, h))?;
    let log_b = crossing_log(&base, i0)?;
    let log_p = crossing_log(&pert, i0)?;
    let divergent = log_b.coords_up_to(horizon) != log_p.coords_up_to(horizon);
    let recursion = derivative_evolve(&log_b, i0, &spec.reflection(), horizon)?;
    let finite_diff: Vec<f64> = base
        .x_end()
        .iter()
        .zip(pert.x_end())
        .map(|(a, b)| (b - a) / eps)
        .collect();
    let gap = finite_diff
        .iter()
        .zip(&recursion.s)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(FiniteDiffResult {
        finite_diff,
        recursion,
        divergent,
        gap,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WassersteinEstimate {
    pub lhs: f64,
    pub lhs_stderr: f64,
    pub rhs: f64,
    pub rhs_stderr: f64,
    /// Standard error of the mean of the per-replication difference `lhs − rhs`.
    pub combined_stderr: f64,
    pub n: usize,
    /// `lhs ≤ rhs + 3·combined_stderr`.
    pub holds: bool,
}

/// Monte Carlo check of the bound
/// `E‖X(x̃,t) − X(x,t)‖₁ ≤ Σᵢ |x̃ − x|ᵢ ∫₀¹ P(walk from i survives 0 past t) du`
/// along the segment from `x` to `x̃`, with `n_reps` driver replications and a
/// midpoint rule on `n_grid` points. Survival comes from the recursion.
#[allow(clippy::too_many_arguments)]
pub fn wasserstein_bound_estimate(
    spec: &RbmSpec,
    x: &[f64],
    x_tilde: &[f64],
    t: f64,
    h: f64,
    n_grid: usize,
    n_reps: usize,
    seed: u64,
) -> Result<WassersteinEstimate> {
    let d = spec.d();
    let r = spec.reflection();
    if !is_atlas_reflection(&r) {
        return Err(Error::InvalidArgument("the walk bound is defined for the Symmetric Atlas model".into()));
    }
    if x.len() != d || x_tilde.len() != d {
        return Err(Error::InvalidArgument("start vectors must have length d".into()));
    }
    if x.iter().any(|&v| !(v > 0.0)) || x_tilde.iter().any(|&v| !(v >= 0.0)) {
        return Err(Error::InvalidArgument("need x > 0 and x̃ ≥ 0".into()));
    }
    if n_grid == 0 || n_reps == 0 {
        return Err(Error::InvalidArgument("n_grid and n_reps must be positive".into()));
    }
    let diff: Vec<f64> = x_tilde.iter().zip(x).map(|(a, b)| a - b).collect();
    let dirs: Vec<usize> = (0..d).filter(|&i| diff[i] != 0.0).collect();
    let m = spec.noise_dim();

    let per_rep: Vec<(f64, f64)> = (0..n_reps)
        .into_par_iter()
        .map(|rep| -> Result<(f64, f64)> {
            let s = purpose_seed(sub_seed(seed, rep as u64), Purpose::Driver);
            let drv = BrownianDriver::new(s, m, h);
            let a = simulate(spec, x, t, &mut drv.clone())?;
            let b = simulate(spec, x_tilde, t, &mut drv.clone())?;
            let lhs: f64 = a.x_end().iter().zip(b.x_end()).map(|(p, q)| (p - q).abs()).sum();
            let mut rhs = 0.0;
            if !dirs.is_empty() {
                let mut surv = vec![0.0; d];
                for g in 0..n_grid {
                    let u = (g as f64 + 0.5) / n_grid as f64;
                    let start: Vec<f64> = x.iter().zip(&diff).map(|(xi, di)| xi + u * di).collect();
                    let path = simulate(spec, &start, t, &mut drv.clone())?;
                    let log = crossing_log(&path, 1)?;
                    for &i in &dirs {
                        let st = derivative_evolve(&log, i + 1, &r, t)?;
                        surv[i] += st.survival().expect("atlas ledger") / n_grid as f64;
                    }
                }
                rhs = dirs.iter().map(|&i| diff[i].abs() * surv[i]).sum();
            }
            Ok((lhs, rhs))
        })
        .collect::<Result<Vec<_>>>()?;

    let lhs: Vec<f64> = per_rep.iter().map(|p| p.0).collect();
    let rhs: Vec<f64> = per_rep.iter().map(|p| p.1).collect();
    let dd: Vec<f64> = per_rep.iter().map(|p| p.0 - p.1).collect();
    let (lm, ls) = mean_stderr(&lhs);
    let (rm, rs) = mean_stderr(&rhs);
    let (dm, ds) = mean_stderr(&dd);
    Ok(WassersteinEstimate {
        lhs: lm,
        lhs_stderr: ls,
        rhs: rm,
        rhs_stderr: rs,
        combined_stderr: ds,
        n: n_reps,
        holds: dm <= 3.0 * ds + 1e-12,
    })
}
