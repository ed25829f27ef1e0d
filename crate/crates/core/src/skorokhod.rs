//! Euler stepping with an exact per-step reflection.
//!
//! Each step forms the free candidate `x + μh + DΔB` and projects it onto the
//! orthant by solving the complementarity problem
//! `x_new = cand + (I − Pᵀ)Δℓ ≥ 0`, `Δℓ ≥ 0`, `Δℓᵢ·x_newᵢ = 0`.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{spectral_radius, Matrix, RbmSpec, TRANSIENCE_GAP};
use crate::seeds::rng_from;

pub const LCP_MAX_ITER: usize = 100_000;
pub const LCP_TOL: f64 = 1e-13;

/// A stream of Brownian increments, one block of `m` values per step,
/// consumed step-major and coordinate-minor.
pub trait IncrementSource {
    fn m(&self) -> usize;
    fn h(&self) -> f64;
    fn next_step(&mut self, out: &mut [f64]);
}

/// `Normal(0, h)` increments from a seeded ChaCha8 stream.
#[derive(Debug, Clone)]
pub struct BrownianDriver {
    seed: u64,
    m: usize,
    h: f64,
    sqrt_h: f64,
    rng: ChaCha8Rng,
}

impl BrownianDriver {
    pub fn new(seed: u64, m: usize, h: f64) -> Self {
        BrownianDriver {
            seed,
            m,
            h,
            sqrt_h: h.sqrt(),
            rng: rng_from(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Draws `n_steps` steps into a buffer, advancing the stream.
    pub fn record(&mut self, n_steps: usize) -> Vec<f64> {
        let mut out = vec![0.0; n_steps * self.m];
        for chunk in out.chunks_mut(self.m.max(1)) {
            self.next_step(chunk);
        }
        out
    }
}

impl IncrementSource for BrownianDriver {
    fn m(&self) -> usize {
        self.m
    }

    fn h(&self) -> f64 {
        self.h
    }

    fn next_step(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            *v = z * self.sqrt_h;
        }
    }
}

/// No noise at all.
#[derive(Debug, Clone, Copy)]
pub struct ZeroDriver {
    pub m: usize,
    pub h: f64,
}

impl IncrementSource for ZeroDriver {
    fn m(&self) -> usize {
        self.m
    }

    fn h(&self) -> f64 {
        self.h
    }

    fn next_step(&mut self, out: &mut [f64]) {
        out.fill(0.0);
    }
}

/// Replays a stored increment buffer. Past the end it yields zeros.
#[derive(Debug, Clone)]
pub struct RecordedDriver {
    m: usize,
    h: f64,
    data: Vec<f64>,
    pos: usize,
}

impl RecordedDriver {
    pub fn new(m: usize, h: f64, data: Vec<f64>) -> Self {
        RecordedDriver { m, h, data, pos: 0 }
    }

    /// Sums `factor` consecutive steps, giving the same Brownian path on a grid `factor` times coarser.
    pub fn coarsened(&self, factor: usize) -> RecordedDriver {
        let n = self.data.len() / self.m.max(1);
        let coarse_n = n / factor;
        let mut data = vec![0.0; coarse_n * self.m];
        for s in 0..coarse_n * factor {
            for c in 0..self.m {
                data[(s / factor) * self.m + c] += self.data[s * self.m + c];
            }
        }
        RecordedDriver::new(self.m, self.h * factor as f64, data)
    }

    pub fn rewind(&mut self) {
        self.pos = 0;
    }
}

impl IncrementSource for RecordedDriver {
    fn m(&self) -> usize {
        self.m
    }

    fn h(&self) -> f64 {
        self.h
    }

    fn next_step(&mut self, out: &mut [f64]) {
        for v in out.iter_mut() {
            *v = self.data.get(self.pos).copied().unwrap_or(0.0);
            self.pos += 1;
        }
    }
}

fn sparse_rows(m: &Matrix) -> Vec<Vec<(usize, f64)>> {
    (0..m.nrows())
        .map(|i| {
            (0..m.ncols())
                .filter_map(|j| {
                    let v = m[(i, j)];
                    (v != 0.0).then_some((j, v))
                })
                .collect()
        })
        .collect()
}

/// Complementarity solver for a fixed routing matrix.
#[derive(Debug, Clone)]
pub struct Reflector {
    d: usize,
    /// Row `i` of `Pᵀ`: the pairs `(j, P_ji)`.
    pt_rows: Vec<Vec<(usize, f64)>>,
    p_diag: Vec<f64>,
    next: Vec<f64>,
    active: Vec<usize>,
}

impl Reflector {
    /// Assumes `p` is substochastic and transient.
    pub fn new(p: &Matrix) -> Self {
        let d = p.nrows();
        Reflector {
            d,
            pt_rows: sparse_rows(&p.transpose()),
            p_diag: (0..d).map(|i| p[(i, i)]).collect(),
            next: vec![0.0; d],
            active: Vec::with_capacity(d),
        }
    }

    fn pt_dot(&self, i: usize, ell: &[f64]) -> f64 {
        self.pt_rows[i].iter().map(|&(j, v)| v * ell[j]).sum()
    }

    /// Solves the complementarity problem for `cand`, writing the increment to
    /// `dl` and the projected point to `x`.
    pub fn solve(&mut self, cand: &[f64], dl: &mut [f64], x: &mut [f64]) -> Result<()> {
        let d = self.d;
        dl.fill(0.0);
        if cand.iter().all(|&c| c >= 0.0) {
            x.copy_from_slice(cand);
            return Ok(());
        }

        let mut last_update = f64::INFINITY;
        let mut converged = false;
        for _ in 0..LCP_MAX_ITER {
            let mut update = 0.0_f64;
            for i in 0..d {
                let v = (self.pt_dot(i, dl) - cand[i]).max(0.0);
                if v < dl[i] {
                    return Err(Error::LcpNonMonotone { coord: i + 1 });
                }
                update = update.max(v - dl[i]);
                self.next[i] = v;
            }
            dl.copy_from_slice(&self.next);
            last_update = update;
            if update < LCP_TOL {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::LcpNoConvergence {
                iterations: LCP_MAX_ITER,
                last_update,
            });
        }

        self.polish(cand, dl);
        for i in 0..d {
            x[i] = (cand[i] - self.pt_dot(i, dl)).max(0.0);
        }
        for &i in &self.active {
            x[i] = 0.0;
        }
        Ok(())
    }

    /// Replaces the iterate on its support `A` by the exact solution of
    /// `(I − Pᵀ)_AA Δℓ_A = −cand_A` when that solution is consistent.
    fn polish(&mut self, cand: &[f64], dl: &mut [f64]) {
        self.active.clear();
        self.active.extend((0..self.d).filter(|&i| dl[i] > 0.0));
        let a = &self.active;
        let exact: Vec<f64> = if a.len() == 1 {
            let i = a[0];
            vec![-cand[i] / (1.0 - self.p_diag[i])]
        } else {
            let n = a.len();
            let mut m = DMatrix::<f64>::identity(n, n);
            for (r, &i) in a.iter().enumerate() {
                for &(j, v) in &self.pt_rows[i] {
                    if let Some(c) = a.iter().position(|&k| k == j) {
                        m[(r, c)] -= v;
                    }
                }
            }
            let rhs = DVector::from_iterator(n, a.iter().map(|&i| -cand[i]));
            match m.lu().solve(&rhs) {
                Some(s) => s.iter().copied().collect(),
                None => return,
            }
        };
        let scale = a.iter().map(|&i| dl[i]).fold(1.0_f64, f64::max);
        let close = a
            .iter()
            .zip(&exact)
            .all(|(&i, &v)| v >= 0.0 && (v - dl[i]).abs() <= 1e-9 * scale);
        if close {
            for (&i, &v) in a.iter().zip(&exact) {
                dl[i] = v;
            }
        }
    }
}

/// One reflection of `candidate` with routing matrix `p`: returns `(x_new, Δℓ)`.
pub fn lcp_reflect(candidate: &[f64], p: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = candidate.len();
    if p.shape() != (d, d) {
        return Err(Error::InvalidArgument(format!(
            "P is {:?}, candidate has length {d}",
            p.shape()
        )));
    }
    if p.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidModel("P has a negative entry".into()));
    }
    let rho = spectral_radius(p);
    if rho > 1.0 - TRANSIENCE_GAP {
        return Err(Error::NotTransient { spectral_radius: rho });
    }
    let mut r = Reflector::new(p);
    let mut x = vec![0.0; d];
    let mut dl = vec![0.0; d];
    r.solve(candidate, &mut dl, &mut x)?;
    Ok((x, dl))
}

/// Streaming simulator state for one path.
#[derive(Debug, Clone)]
pub struct Stepper {
    d: usize,
    h: f64,
    mu_h: Vec<f64>,
    noise_rows: Vec<Vec<(usize, f64)>>,
    reflector: Reflector,
    x: Vec<f64>,
    l: Vec<f64>,
    cand: Vec<f64>,
    dl: Vec<f64>,
    hits: Vec<usize>,
    steps: usize,
}

impl Stepper {
    pub fn new(spec: &RbmSpec, x0: &[f64], h: f64) -> Result<Self> {
        let d = spec.d();
        if x0.len() != d {
            return Err(Error::InvalidArgument(format!(
                "start has length {}, model dimension is {d}",
                x0.len()
            )));
        }
        if x0.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument("start must be finite and nonnegative".into()));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidArgument(format!("step size h = {h} must be positive")));
        }
        Ok(Stepper {
            d,
            h,
            mu_h: spec.mu().iter().map(|m| m * h).collect(),
            noise_rows: sparse_rows(spec.noise_factor()),
            reflector: Reflector::new(spec.routing()),
            x: x0.to_vec(),
            l: vec![0.0; d],
            cand: vec![0.0; d],
            dl: vec![0.0; d],
            hits: Vec::with_capacity(d),
            steps: 0,
        })
    }

    /// Advances one step using the increments `db` (length `m`).
    pub fn advance(&mut self, db: &[f64]) -> Result<()> {
        for i in 0..self.d {
            let noise: f64 = self.noise_rows[i].iter().map(|&(j, v)| v * db[j]).sum();
            self.cand[i] = self.x[i] + self.mu_h[i] + noise;
        }
        self.reflector.solve(&self.cand, &mut self.dl, &mut self.x)?;
        self.hits.clear();
        for i in 0..self.d {
            if self.dl[i] > 0.0 {
                self.l[i] += self.dl[i];
                self.hits.push(i);
            }
        }
        self.steps += 1;
        Ok(())
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    pub fn l(&self) -> &[f64] {
        &self.l
    }

    /// Local-time increment of the last step.
    pub fn last_dl(&self) -> &[f64] {
        &self.dl
    }

    /// 0-based coordinates whose local time grew in the last step.
    pub fn last_hits(&self) -> &[usize] {
        &self.hits
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn t(&self) -> f64 {
        self.steps as f64 * self.h
    }
}

/// Number of steps of size `h` in `[0, horizon]`, requiring `horizon` to be a multiple of `h`.
pub fn steps_for(horizon: f64, h: f64) -> Result<usize> {
    if !(h > 0.0) || !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon {horizon} and step {h} must be nonnegative and positive")));
    }
    let n = (horizon / h).round();
    if (n * h - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::InvalidArgument(format!(
            "horizon {horizon} is not a multiple of step {h}"
        )));
    }
    Ok(n as usize)
}

/// One realized path on the grid `t_j = j·h`, `j = 0..=n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmPath {
    pub d: usize,
    pub h: f64,
    pub n_steps: usize,
    pub x0: Vec<f64>,
    x: Vec<f64>,
    l: Vec<f64>,
    hit_offsets: Vec<usize>,
    hit_coords: Vec<usize>,
}

impl RbmPath {
    pub fn t(&self, j: usize) -> f64 {
        j as f64 * self.h
    }

    pub fn horizon(&self) -> f64 {
        self.t(self.n_steps)
    }

    pub fn x_at(&self, j: usize) -> &[f64] {
        &self.x[j * self.d..(j + 1) * self.d]
    }

    pub fn l_at(&self, j: usize) -> &[f64] {
        &self.l[j * self.d..(j + 1) * self.d]
    }

    pub fn x_end(&self) -> &[f64] {
        self.x_at(self.n_steps)
    }

    /// 0-based coordinates whose local time grew during step `j` (from `t_{j−1}` to `t_j`).
    pub fn hits_at(&self, j: usize) -> &[usize] {
        if j == 0 || j > self.n_steps {
            return &[];
        }
        &self.hit_coords[self.hit_offsets[j - 1]..self.hit_offsets[j]]
    }

    /// All hits as `(step, coordinate)` in step order, coordinates ascending within a step.
    pub fn hits(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..=self.n_steps).flat_map(move |j| self.hits_at(j).iter().map(move |&i| (j, i)))
    }

    pub fn hit_count(&self) -> usize {
        self.hit_coords.len()
    }

    /// Long-format dump with header `step,t,i,X,L` and 1-based `i`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["step", "t", "i", "X", "L"])?;
        for j in 0..=self.n_steps {
            let t = self.t(j);
            for i in 0..self.d {
                w.write_record([
                    j.to_string(),
                    t.to_string(),
                    (i + 1).to_string(),
                    self.x_at(j)[i].to_string(),
                    self.l_at(j)[i].to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Simulates the model from `x0` on `[0, horizon]`.
pub fn simulate<S: IncrementSource>(
    spec: &RbmSpec,
    x0: &[f64],
    horizon: f64,
    driver: &mut S,
) -> Result<RbmPath> {
    let h = driver.h();
    let n_steps = steps_for(horizon, h)?;
    if driver.m() != spec.noise_dim() {
        return Err(Error::InvalidArgument(format!(
            "driver has {} components, model needs {}",
            driver.m(),
            spec.noise_dim()
        )));
    }
    let d = spec.d();
    let mut stepper = Stepper::new(spec, x0, h)?;
    let mut x = Vec::with_capacity((n_steps + 1) * d);
    let mut l = Vec::with_capacity((n_steps + 1) * d);
    x.extend_from_slice(x0);
    l.extend(std::iter::repeat_n(0.0, d));
    let mut hit_offsets = Vec::with_capacity(n_steps + 1);
    hit_offsets.push(0);
    let mut hit_coords = Vec::new();
    let mut db = vec![0.0; driver.m()];
    for _ in 0..n_steps {
        driver.next_step(&mut db);
        stepper.advance(&db)?;
        x.extend_from_slice(stepper.x());
        l.extend_from_slice(stepper.l());
        hit_coords.extend_from_slice(stepper.last_hits());
        hit_offsets.push(hit_coords.len());
    }
    Ok(RbmPath {
        d,
        h,
        n_steps,
        x0: x0.to_vec(),
        x,
        l,
        hit_offsets,
        hit_coords,
    })
}

/// Particle positions and their sorted gaps on the grid `t_j = j·h`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRun {
    pub n_particles: usize,
    pub h: f64,
    pub n_steps: usize,
    particles: Vec<f64>,
    gaps: Vec<f64>,
}

impl ParticleRun {
    pub fn particles_at(&self, j: usize) -> &[f64] {
        &self.particles[j * self.n_particles..(j + 1) * self.n_particles]
    }

    pub fn gaps_at(&self, j: usize) -> &[f64] {
        let g = self.n_particles.saturating_sub(1);
        &self.gaps[j * g..(j + 1) * g]
    }
}

fn sorted_gaps(z: &[f64], scratch: &mut Vec<f64>, out: &mut Vec<f64>) {
    scratch.clear();
    scratch.extend_from_slice(z);
    scratch.sort_by(f64::total_cmp);
    out.extend(scratch.windows(2).map(|w| w[1] - w[0]));
}

/// Rank-based Atlas particles: the currently lowest particle gets drift 1, every
/// particle gets its own Brownian increment. Only `p = 1/2` is supported.
pub fn simulate_atlas_particles<S: IncrementSource>(
    d: usize,
    p: f64,
    z0: &[f64],
    horizon: f64,
    driver: &mut S,
) -> Result<ParticleRun> {
    if !(0.5..1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!("p = {p} is not in [1/2, 1)")));
    }
    if p != 0.5 {
        return Err(Error::InvalidArgument(
            "asymmetric collisions are not modelled at particle level; use the gap-level model".into(),
        ));
    }
    let n = d + 1;
    if z0.len() != n {
        return Err(Error::InvalidArgument(format!(
            "expected {n} particle positions, got {}",
            z0.len()
        )));
    }
    if driver.m() != n {
        return Err(Error::InvalidArgument(format!(
            "driver has {} components, need {n}",
            driver.m()
        )));
    }
    let h = driver.h();
    let n_steps = steps_for(horizon, h)?;
    let mut z = z0.to_vec();
    let mut particles = Vec::with_capacity((n_steps + 1) * n);
    let mut gaps = Vec::with_capacity((n_steps + 1) * d);
    let mut scratch = Vec::with_capacity(n);
    particles.extend_from_slice(&z);
    sorted_gaps(&z, &mut scratch, &mut gaps);
    let mut db = vec![0.0; n];
    for _ in 0..n_steps {
        driver.next_step(&mut db);
        let lowest = (0..n)
            .min_by(|&a, &b| z[a].total_cmp(&z[b]))
            .expect("at least one particle");
        for k in 0..n {
            z[k] += db[k];
        }
        z[lowest] += h;
        particles.extend_from_slice(&z);
        sorted_gaps(&z, &mut scratch, &mut gaps);
    }
    Ok(ParticleRun {
        n_particles: n,
        h,
        n_steps,
        particles,
        gaps,
    })
}
