//! Declarative experiments: configuration documents, seeded parallel
//! replication, aggregation into result tables, and run manifests.
//!
//! Every replication derives its own seeds from the master seed and its index,
//! and results are folded in index order, so outputs do not depend on the
//! number of worker threads.

use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{crossing_log, weighted_l1, OnlineHitCounter};
use crate::derivative::{derivative_evolve, finite_diff_derivative, rw_distribution_mc, sites_within_3_sigma};
use crate::error::{Error, Result};
use crate::model::{
    atlas_sigma, build_asymmetric_atlas, build_symmetric_atlas, check_assumptions, is_symmetric_atlas_routing,
    start_set_radius, suggest_constants, AssumptionConstants, AssumptionMode, AssumptionReport, Matrix, RbmSpec,
};
use crate::seeds::{purpose_seed, sub_seed, Purpose};
use crate::skorokhod::{simulate, steps_for, BrownianDriver, IncrementSource, Stepper};
use crate::stationary::{
    alpha_y, burnin_stationary, n_schedule, perturbed_start, sample_atlas_stationary, sample_perturbation,
    PerturbationKind, PerturbationSpec,
};
use crate::stats::mean_stderr;

/// Relative slack when testing a start against its declared start-set bound.
const START_SET_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Decay,
    Perturbation,
    DerivativeValidation,
    AssumptionCheck,
}

/// A model either built from a named family or given inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "builder", rename_all = "snake_case")]
pub enum ModelRef {
    SymmetricAtlas { d: usize },
    AsymmetricAtlas { d: usize, p: f64 },
    Inline { spec: RbmSpec },
}

impl ModelRef {
    pub fn build(&self) -> Result<RbmSpec> {
        match self {
            ModelRef::SymmetricAtlas { d } => build_symmetric_atlas(*d),
            ModelRef::AsymmetricAtlas { d, p } => build_asymmetric_atlas(*d, *p),
            ModelRef::Inline { spec } => Ok(spec.clone()),
        }
    }
}

/// How a replication's start point is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum StartPolicy {
    Fixed { x: Vec<f64> },
    /// The all-ones vector.
    Ones,
    Zero,
    /// A stationary draw, shared by every arm of the replication that asks for one.
    Stationary,
    /// The shared stationary draw plus a perturbation, clipped at 0.
    StationaryPerturbed { perturbation: PerturbationSpec },
}

impl StartPolicy {
    fn needs_stationary(&self) -> bool {
        matches!(self, StartPolicy::Stationary | StartPolicy::StationaryPerturbed { .. })
    }

    fn fixed_point(&self, d: usize) -> Option<Vec<f64>> {
        match self {
            StartPolicy::Fixed { x } => Some(x.clone()),
            StartPolicy::Ones => Some(vec![1.0; d]),
            StartPolicy::Zero => Some(vec![0.0; d]),
            _ => None,
        }
    }
}

/// Burn-in used for stationary draws when no exact sampler exists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BurnIn {
    pub t_burn: f64,
    /// Step size of the burn-in run; defaults to the experiment step.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DerivativeSettings {
    /// 1-based coordinate whose start is perturbed.
    #[serde(default = "default_i0")]
    pub i0: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_one")]
    pub horizon: f64,
    /// Walk samples per run; 0 disables the walk arm.
    #[serde(default)]
    pub n_walk: usize,
    /// Sup-norm tolerance between finite differences and the recursion.
    #[serde(default = "default_tol")]
    pub tol: f64,
}

impl Default for DerivativeSettings {
    fn default() -> Self {
        DerivativeSettings {
            i0: default_i0(),
            eps: default_eps(),
            horizon: default_one(),
            n_walk: 0,
            tol: default_tol(),
        }
    }
}

fn default_i0() -> usize {
    1
}
fn default_eps() -> f64 {
    crate::derivative::DEFAULT_EPS
}
fn default_one() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    0.05
}
fn default_h() -> f64 {
    0.01
}
fn default_reps() -> usize {
    1
}

/// A complete experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelRef,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<StartPolicy>,
    /// Defaults to `stationary`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub comparison: Option<StartPolicy>,
    #[serde(default)]
    pub t_grid: Vec<f64>,
    #[serde(default = "default_h")]
    pub h: f64,
    #[serde(default = "default_reps")]
    pub n_reps: usize,
    /// Weight base of the weighted norms; defaults to `√α`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// Track boundary-hit cycles of the first `d_prime` coordinates of the primary arm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_prime: Option<usize>,
    /// Also run an arm from 0 and report `u_beta` and `u_pi`.
    #[serde(default)]
    pub zero_arm: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<BurnIn>,
    /// Declared bound `B` of the start set; defaults to the fixed start's own radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start_bound: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<AssumptionConstants>,
    #[serde(default)]
    pub mode: AssumptionMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub derivative: Option<DerivativeSettings>,
}

impl ExperimentConfig {
    /// Parses and validates a config document. Errors carry the offending field path.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ExperimentConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::config(path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config(path.display().to_string(), format!("cannot read config: {e}")))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Largest grid time.
    pub fn horizon(&self) -> f64 {
        self.t_grid.last().copied().unwrap_or(0.0)
    }

    pub fn comparison_policy(&self) -> StartPolicy {
        self.comparison.clone().unwrap_or(StartPolicy::Stationary)
    }

    pub fn derivative_settings(&self) -> DerivativeSettings {
        self.derivative.unwrap_or_default()
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |path: &str, e: Error| Error::config(path, e.to_string());
        if !(self.h > 0.0 && self.h.is_finite()) {
            return Err(Error::config("h", format!("step size must be positive, got {}", self.h)));
        }
        if self.n_reps == 0 {
            return Err(Error::config("n_reps", "at least one replication is required"));
        }
        if self.workers == Some(0) {
            return Err(Error::config("workers", "at least one worker is required"));
        }
        for (i, &t) in self.t_grid.iter().enumerate() {
            let path = format!("t_grid[{i}]");
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::config(path, format!("time {t} must be finite and nonnegative")));
            }
            if i > 0 && t <= self.t_grid[i - 1] {
                return Err(Error::config(path, "grid must be strictly increasing"));
            }
            steps_for(t, self.h).map_err(|e| cfg_err(&path, e))?;
        }
        if let Some(b) = self.beta {
            if !(b > 0.0 && b <= 1.0) {
                return Err(Error::config("beta", format!("weight base {b} is not in (0, 1]")));
            }
        }
        if let Some(b) = self.start_bound {
            if !(b >= 0.0 && b.is_finite()) {
                return Err(Error::config("start_bound", format!("bound {b} must be finite and nonnegative")));
            }
        }
        let spec = self.model.build().map_err(|e| cfg_err("model", e))?;
        let d = spec.d();
        if let Some(dp) = self.d_prime {
            if dp == 0 || dp > d {
                return Err(Error::config("d_prime", format!("{dp} is not in 1..={d}")));
            }
        }
        let comparison = self.comparison_policy();
        for (name, policy) in [("start", self.start.as_ref()), ("comparison", Some(&comparison))] {
            if let Some(p) = policy {
                validate_policy(name, p, d)?;
            }
        }
        let wants_stationary = self.start.as_ref().is_some_and(StartPolicy::needs_stationary)
            || (matches!(self.experiment, ExperimentKind::Decay | ExperimentKind::Perturbation)
                && comparison.needs_stationary());
        if let Some(b) = &self.burn_in {
            let hb = b.h.unwrap_or(self.h);
            if !(hb > 0.0) {
                return Err(Error::config("burn_in.h", format!("step size must be positive, got {hb}")));
            }
            steps_for(b.t_burn, hb).map_err(|e| cfg_err("burn_in.t_burn", e))?;
        } else if wants_stationary && !has_exact_stationary(&spec) {
            return Err(Error::config(
                "burn_in",
                "stationary starts for this model need a burn_in section (no exact sampler)",
            ));
        }
        match self.experiment {
            ExperimentKind::Decay => {
                if self.start.is_none() {
                    return Err(Error::config("start", "decay experiments need a primary start policy"));
                }
                if self.t_grid.is_empty() {
                    return Err(Error::config("t_grid", "grid must not be empty"));
                }
            }
            ExperimentKind::Perturbation => {
                if !has_exact_stationary(&spec) {
                    return Err(Error::config("model", "perturbation experiments need the Symmetric Atlas model"));
                }
                if !matches!(self.start, Some(StartPolicy::StationaryPerturbed { .. })) {
                    return Err(Error::config("start", "perturbation experiments need a stationary_perturbed start"));
                }
                if self.t_grid.is_empty() {
                    return Err(Error::config("t_grid", "grid must not be empty"));
                }
            }
            ExperimentKind::DerivativeValidation => {
                if !is_symmetric_atlas_routing(spec.routing()) {
                    return Err(Error::config("model", "derivative validation needs the Symmetric Atlas routing"));
                }
                let ds = self.derivative_settings();
                if ds.i0 == 0 || ds.i0 > d {
                    return Err(Error::config("derivative.i0", format!("{} is not in 1..={d}", ds.i0)));
                }
                if !(ds.eps > 0.0) {
                    return Err(Error::config("derivative.eps", "must be positive"));
                }
                if !(ds.tol >= 0.0) {
                    return Err(Error::config("derivative.tol", "must be nonnegative"));
                }
                steps_for(ds.horizon, self.h).map_err(|e| cfg_err("derivative.horizon", e))?;
                if let Some(StartPolicy::Fixed { .. } | StartPolicy::Zero) = &self.start {
                    if self.start_point_fixed(d).is_some_and(|x| x.iter().any(|&v| v <= 0.0)) {
                        return Err(Error::config("start", "derivative runs need a strictly positive start"));
                    }
                }
            }
            ExperimentKind::AssumptionCheck => {}
        }
        Ok(())
    }

    fn start_point_fixed(&self, d: usize) -> Option<Vec<f64>> {
        self.start.as_ref().and_then(|p| p.fixed_point(d))
    }

    /// Weight base: the configured one, else `√α` for the model's constants.
    pub fn resolved_beta(&self, spec: &RbmSpec) -> Result<f64> {
        if let Some(b) = self.beta {
            return Ok(b);
        }
        Ok(self.resolved_constants(spec)?.alpha.sqrt())
    }

    /// Configured constants, the printed family constants, or a heuristic suggestion.
    pub fn resolved_constants(&self, spec: &RbmSpec) -> Result<AssumptionConstants> {
        if let Some(c) = self.constants {
            return Ok(c);
        }
        match &self.model {
            ModelRef::AsymmetricAtlas { p, .. } => Ok(AssumptionConstants::asymmetric_atlas(*p)),
            _ => suggest_constants(spec),
        }
    }
}

fn validate_policy(name: &str, p: &StartPolicy, d: usize) -> Result<()> {
    match p {
        StartPolicy::Fixed { x } => {
            if x.len() != d {
                return Err(Error::config(
                    format!("{name}.x"),
                    format!("start has length {}, model dimension is {d}", x.len()),
                ));
            }
            if let Some(i) = x.iter().position(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(Error::config(format!("{name}.x[{i}]"), "entries must be finite and nonnegative"));
            }
        }
        StartPolicy::StationaryPerturbed { perturbation } => {
            perturbation
                .validate()
                .map_err(|e| Error::config(format!("{name}.perturbation"), e.to_string()))?;
        }
        _ => {}
    }
    Ok(())
}

/// True when the model is the Symmetric Atlas gap process, whose stationary law is sampled exactly.
pub fn has_exact_stationary(spec: &RbmSpec) -> bool {
    let d = spec.d();
    let mut mu = vec![0.0; d];
    mu[0] = -1.0;
    is_symmetric_atlas_routing(spec.routing()) && spec.mu() == mu.as_slice() && *spec.sigma() == atlas_sigma(d)
}

/// One line of the result table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub t: f64,
    pub metric: String,
    pub mean: f64,
    pub stderr: f64,
    pub n_effective: usize,
    pub model: String,
    pub d: usize,
    pub seed: u64,
}

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: std::io::Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut rd = csv::Reader::from_reader(input);
    rd.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Whether a fixed start lies in the start set with the declared bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartSetRecord {
    pub arm: String,
    pub radius: f64,
    pub bound: f64,
    pub inside: bool,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ExperimentOutput {
    pub rows: Vec<ResultRow>,
    pub report: Option<serde_json::Value>,
    pub start_set: Vec<StartSetRecord>,
    pub warnings: Vec<String>,
}

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: ExperimentConfig,
    pub seed: u64,
    pub workers: Option<usize>,
    pub wall_time_seconds: f64,
    pub outputs: Vec<String>,
    pub start_set: Vec<StartSetRecord>,
    pub warnings: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &ExperimentConfig, output: &ExperimentOutput, wall: f64) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: config.clone(),
            seed: config.seed,
            workers: config.workers,
            wall_time_seconds: wall,
            outputs: Vec::new(),
            start_set: output.start_set.clone(),
            warnings: output.warnings.clone(),
        }
    }
}

/// `run.csv` → `run.manifest.json`.
pub fn manifest_path(output: &Path) -> PathBuf {
    output.with_extension("manifest.json")
}

/// Runs `f(rep)` for every replication, on `workers` threads if given, and
/// returns the results in replication order.
pub fn replicate<T, F>(n_reps: usize, workers: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let run = || (0..n_reps).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match workers {
        Some(w) => rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("cannot start {w} workers: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Per-replication start resolution with a lazily drawn, shared stationary point.
struct Starts<'a> {
    spec: &'a RbmSpec,
    cfg: &'a ExperimentConfig,
    exact: bool,
    rep_seed: u64,
    stationary: Option<Vec<f64>>,
}

impl<'a> Starts<'a> {
    fn new(spec: &'a RbmSpec, cfg: &'a ExperimentConfig, rep_seed: u64) -> Self {
        Starts {
            spec,
            cfg,
            exact: has_exact_stationary(spec),
            rep_seed,
            stationary: None,
        }
    }

    fn stationary(&mut self) -> Result<Vec<f64>> {
        if self.stationary.is_none() {
            let x = if self.exact {
                sample_atlas_stationary(self.spec.d(), purpose_seed(self.rep_seed, Purpose::Stationary))
            } else {
                let b = self
                    .cfg
                    .burn_in
                    .ok_or_else(|| Error::config("burn_in", "required for stationary starts of this model"))?;
                burnin_stationary(
                    self.spec,
                    b.t_burn,
                    b.h.unwrap_or(self.cfg.h),
                    purpose_seed(self.rep_seed, Purpose::BurnIn),
                )?
            };
            self.stationary = Some(x);
        }
        Ok(self.stationary.clone().expect("drawn above"))
    }

    fn resolve(&mut self, policy: &StartPolicy) -> Result<Vec<f64>> {
        if let Some(x) = policy.fixed_point(self.spec.d()) {
            return Ok(x);
        }
        let x_inf = self.stationary()?;
        match policy {
            StartPolicy::StationaryPerturbed { perturbation } => {
                let y = sample_perturbation(
                    perturbation,
                    self.spec.d(),
                    purpose_seed(self.rep_seed, Purpose::Perturbation),
                )?;
                Ok(perturbed_start(&x_inf, &y))
            }
            _ => Ok(x_inf),
        }
    }
}

/// Start points of replication `rep` for the given arms; stationary arms share one draw.
pub fn replication_starts(
    spec: &RbmSpec,
    cfg: &ExperimentConfig,
    policies: &[StartPolicy],
    rep: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut starts = Starts::new(spec, cfg, sub_seed(cfg.seed, rep as u64));
    policies.iter().map(|p| starts.resolve(p)).collect()
}

/// Start-set records and warnings for the fixed arms of a config.
fn start_set_guard(spec: &RbmSpec, cfg: &ExperimentConfig, out: &mut ExperimentOutput) -> Result<()> {
    let d = spec.d();
    let arms = [("start", cfg.start.clone()), ("comparison", Some(cfg.comparison_policy()))];
    for (arm, policy) in arms {
        let Some(x) = policy.and_then(|p| p.fixed_point(d)) else {
            continue;
        };
        let radius = start_set_radius(spec, &x)?;
        let bound = cfg.start_bound.unwrap_or(radius);
        let inside = radius <= bound * (1.0 + START_SET_SLACK);
        if !inside {
            out.warnings.push(format!(
                "{arm}: fixed start has start-set radius {radius} above the declared bound {bound}"
            ));
        }
        out.start_set.push(StartSetRecord {
            arm: arm.to_string(),
            radius,
            bound,
            inside,
        });
    }
    Ok(())
}

/// States of several arms on one shared driver, recorded at grid steps.
struct ArmSnapshots {
    /// `[grid index][arm]` → state.
    x: Vec<Vec<Vec<f64>>>,
    /// Completed hit cycles of arm 0 at each grid point.
    cycles: Vec<usize>,
}

fn run_arms(
    spec: &RbmSpec,
    starts: &[Vec<f64>],
    h: f64,
    grid_steps: &[usize],
    driver_seed: u64,
    d_prime: Option<usize>,
) -> Result<ArmSnapshots> {
    let mut arms = starts
        .iter()
        .map(|x| Stepper::new(spec, x, h))
        .collect::<Result<Vec<_>>>()?;
    let mut driver = BrownianDriver::new(driver_seed, spec.noise_dim(), h);
    let mut db = vec![0.0; driver.m()];
    let mut counter = d_prime.map(|dp| OnlineHitCounter::new(dp, h));
    let mut snaps = ArmSnapshots {
        x: Vec::with_capacity(grid_steps.len()),
        cycles: Vec::with_capacity(grid_steps.len()),
    };
    let mut j = 0;
    for &target in grid_steps {
        while j < target {
            driver.next_step(&mut db);
            for a in arms.iter_mut() {
                a.advance(&db)?;
            }
            j += 1;
            if let Some(c) = counter.as_mut() {
                c.observe(j, arms[0].last_hits());
            }
        }
        snaps.x.push(arms.iter().map(|a| a.x().to_vec()).collect());
        snaps.cycles.push(counter.as_ref().map_or(0, OnlineHitCounter::count));
    }
    Ok(snaps)
}

fn grid_steps(cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    cfg.t_grid.iter().map(|&t| steps_for(t, cfg.h)).collect()
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn r_inv_weighted(r_inv: &Matrix, v: &[f64], beta: f64) -> f64 {
    let y: Vec<f64> = (0..v.len())
        .map(|i| r_inv.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
        .collect();
    weighted_l1(&y, beta)
}

/// Folds per-replication metric vectors (`[rep][grid][metric]`) into rows, in order.
fn aggregate(
    cfg: &ExperimentConfig,
    spec: &RbmSpec,
    names: &[&str],
    per_rep: &[Vec<Vec<f64>>],
) -> Vec<ResultRow> {
    let mut rows = Vec::with_capacity(cfg.t_grid.len() * names.len());
    for (g, &t) in cfg.t_grid.iter().enumerate() {
        for (m, name) in names.iter().enumerate() {
            let vals: Vec<f64> = per_rep.iter().map(|r| r[g][m]).filter(|v| v.is_finite()).collect();
            let (mean, stderr) = mean_stderr(&vals);
            rows.push(ResultRow {
                t,
                metric: name.to_string(),
                mean,
                stderr,
                n_effective: vals.len(),
                model: spec.label().to_string(),
                d: spec.d(),
                seed: cfg.seed,
            });
        }
    }
    rows
}

/// Synchronous-coupling estimate of the distance between the primary and the
/// comparison arm at each grid time.
pub fn run_decay_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let spec = cfg.model.build()?;
    let primary = cfg
        .start
        .clone()
        .ok_or_else(|| Error::config("start", "decay experiments need a primary start policy"))?;
    let comparison = cfg.comparison_policy();
    let beta = cfg.resolved_beta(&spec)?;
    let r_inv = spec.r_inverse();
    let steps = grid_steps(cfg)?;
    let mut out = ExperimentOutput::default();
    start_set_guard(&spec, cfg, &mut out)?;

    let mut names = vec!["l1", "weighted_l1_beta"];
    if cfg.zero_arm {
        names.extend(["u_beta", "u_pi"]);
    }
    if cfg.d_prime.is_some() {
        names.push("N_dprime");
    }
    let per_rep = replicate(cfg.n_reps, cfg.workers, |rep| {
        let rep_seed = sub_seed(cfg.seed, rep as u64);
        let mut starts = Starts::new(&spec, cfg, rep_seed);
        let mut arms = vec![starts.resolve(&primary)?, starts.resolve(&comparison)?];
        if cfg.zero_arm {
            arms.push(vec![0.0; spec.d()]);
        }
        let snaps = run_arms(&spec, &arms, cfg.h, &steps, purpose_seed(rep_seed, Purpose::Driver), cfg.d_prime)?;
        Ok(snaps
            .x
            .iter()
            .zip(&snaps.cycles)
            .map(|(xs, &cycles)| {
                let dx = diff(&xs[0], &xs[1]);
                let mut v = vec![dx.iter().map(|e| e.abs()).sum(), weighted_l1(&dx, beta)];
                if cfg.zero_arm {
                    v.push(r_inv_weighted(&r_inv, &diff(&xs[0], &xs[2]), beta));
                    v.push(r_inv_weighted(&r_inv, &diff(&xs[1], &xs[2]), beta));
                }
                if cfg.d_prime.is_some() {
                    v.push(cycles as f64);
                }
                v
            })
            .collect::<Vec<_>>())
    })?;
    out.rows = aggregate(cfg, &spec, &names, &per_rep);
    Ok(out)
}

/// Distance between a perturbed and an unperturbed stationary start on shared
/// drivers, with the schedule overlays `n_t`, `alpha_Y_nt`, `shape_term`
/// (`n(t)·t^{−3/32}`) and, for exponential rates, `alpha_bound`. Overlay rows
/// carry `stderr = 0` and `n_effective = 0`.
pub fn run_perturbation_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let spec = cfg.model.build()?;
    let primary = cfg.start.clone().unwrap_or(StartPolicy::Stationary);
    let StartPolicy::StationaryPerturbed { perturbation } = &primary else {
        return Err(Error::config("start", "perturbation experiments need a stationary_perturbed start"));
    };
    let comparison = cfg.comparison_policy();
    let steps = grid_steps(cfg)?;
    let mut out = ExperimentOutput::default();
    start_set_guard(&spec, cfg, &mut out)?;

    let per_rep = replicate(cfg.n_reps, cfg.workers, |rep| {
        let rep_seed = sub_seed(cfg.seed, rep as u64);
        let mut starts = Starts::new(&spec, cfg, rep_seed);
        let arms = vec![starts.resolve(&primary)?, starts.resolve(&comparison)?];
        let snaps = run_arms(&spec, &arms, cfg.h, &steps, purpose_seed(rep_seed, Purpose::Driver), None)?;
        Ok(snaps
            .x
            .iter()
            .map(|xs| vec![xs[0].iter().zip(&xs[1]).map(|(a, b)| (a - b).abs()).sum()])
            .collect::<Vec<_>>())
    })?;
    let measured = aggregate(cfg, &spec, &["l1"], &per_rep);

    let has_schedule = !matches!(perturbation.kind, PerturbationKind::Constant { schedule: None, .. });
    if !has_schedule {
        out.warnings
            .push("constant perturbation without a schedule: overlay columns omitted".to_string());
    }
    let overlay = |t: f64, metric: &str, value: f64| ResultRow {
        t,
        metric: metric.to_string(),
        mean: value,
        stderr: 0.0,
        n_effective: 0,
        model: spec.label().to_string(),
        d: spec.d(),
        seed: cfg.seed,
    };
    for (g, &t) in cfg.t_grid.iter().enumerate() {
        out.rows.push(measured[g].clone());
        if !has_schedule {
            continue;
        }
        let n = n_schedule(perturbation, t)?;
        out.rows.push(overlay(t, "n_t", n as f64));
        out.rows.push(overlay(t, "alpha_Y_nt", alpha_y(perturbation, n)?));
        if t > 0.0 {
            out.rows.push(overlay(t, "shape_term", n as f64 * t.powf(-3.0 / 32.0)));
            if let PerturbationKind::ExpRates { beta_exp } = perturbation.kind {
                let bound = 2.0 / beta_exp * t.powf(-(beta_exp / (1.0 + beta_exp)) * 3.0 / 32.0);
                out.rows.push(overlay(t, "alpha_bound", bound));
            }
        }
    }
    Ok(out)
}

/// Outcome of one derivative-validation run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeRun {
    pub divergent: bool,
    pub gap: f64,
    pub mass_error: f64,
    pub survival: f64,
    pub walk_sites: usize,
    pub walk_sites_agree: usize,
    pub finite_diff: Vec<f64>,
    #[serde(rename = "S")]
    pub s: Vec<f64>,
    pub w0: Option<f64>,
    pub wdp1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DerivativeSummary {
    pub runs: usize,
    pub divergent: usize,
    pub exclusion_rate: f64,
    pub tol: f64,
    pub non_divergent_within_tol: usize,
    pub max_gap_non_divergent: f64,
    pub max_mass_error: f64,
    pub n_walk: usize,
    pub walk_sites: usize,
    pub walk_sites_agree: usize,
    pub walk_agree_fraction: Option<f64>,
}

impl DerivativeSummary {
    pub fn from_runs(runs: &[DerivativeRun], tol: f64, n_walk: usize) -> Self {
        let divergent = runs.iter().filter(|r| r.divergent).count();
        let kept: Vec<&DerivativeRun> = runs.iter().filter(|r| !r.divergent).collect();
        let walk_sites = runs.iter().map(|r| r.walk_sites).sum();
        let walk_sites_agree = runs.iter().map(|r| r.walk_sites_agree).sum();
        DerivativeSummary {
            runs: runs.len(),
            divergent,
            exclusion_rate: divergent as f64 / runs.len().max(1) as f64,
            tol,
            non_divergent_within_tol: kept.iter().filter(|r| r.gap <= tol).count(),
            max_gap_non_divergent: kept.iter().map(|r| r.gap).fold(0.0, f64::max),
            max_mass_error: runs.iter().map(|r| r.mass_error).fold(0.0, f64::max),
            n_walk,
            walk_sites,
            walk_sites_agree,
            walk_agree_fraction: (walk_sites > 0).then(|| walk_sites_agree as f64 / walk_sites as f64),
        }
    }
}

/// One derivative-validation run from `x` on replication seed `rep_seed`.
pub fn derivative_run(
    spec: &RbmSpec,
    x: &[f64],
    settings: &DerivativeSettings,
    h: f64,
    rep_seed: u64,
) -> Result<DerivativeRun> {
    let driver_seed = purpose_seed(rep_seed, Purpose::Driver);
    let fd = finite_diff_derivative(spec, x, settings.i0, settings.eps, settings.horizon, h, driver_seed)?;
    let state = &fd.recursion;
    let (mut walk_sites, mut walk_sites_agree) = (0, 0);
    if settings.n_walk > 0 {
        let mut drv = BrownianDriver::new(driver_seed, spec.noise_dim(), h);
        let path = simulate(spec, x, settings.horizon, &mut drv)?;
        let log = crossing_log(&path, settings.i0)?;
        let exact = derivative_evolve(&log, settings.i0, &spec.reflection(), settings.horizon)?
            .site_masses()
            .ok_or_else(|| Error::InvalidModel("walk arm needs the Symmetric Atlas reflection".into()))?;
        let emp = rw_distribution_mc(
            &log,
            settings.i0,
            settings.horizon,
            settings.n_walk,
            purpose_seed(rep_seed, Purpose::Walk),
        )?;
        walk_sites = exact.len();
        walk_sites_agree = sites_within_3_sigma(&emp, &exact, settings.n_walk);
    }
    Ok(DerivativeRun {
        divergent: fd.divergent,
        gap: fd.gap,
        mass_error: (state.total_mass() - 1.0).abs(),
        survival: state.survival().unwrap_or(f64::NAN),
        walk_sites,
        walk_sites_agree,
        finite_diff: fd.finite_diff.clone(),
        s: state.s.clone(),
        w0: state.w0,
        wdp1: state.wdp1,
    })
}

/// Batch comparison of finite differences, the recursion and the walk law.
pub fn run_derivative_validation(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    let (out, _) = derivative_validation_runs(cfg)?;
    Ok(out)
}

/// Like [`run_derivative_validation`], also returning the individual runs.
pub fn derivative_validation_runs(cfg: &ExperimentConfig) -> Result<(ExperimentOutput, Vec<DerivativeRun>)> {
    cfg.validate()?;
    let spec = cfg.model.build()?;
    let settings = cfg.derivative_settings();
    let policy = cfg.start.clone().unwrap_or(StartPolicy::Stationary);
    let mut out = ExperimentOutput::default();
    start_set_guard(&spec, cfg, &mut out)?;
    let runs = replicate(cfg.n_reps, cfg.workers, |rep| {
        let rep_seed = sub_seed(cfg.seed, rep as u64);
        let x = Starts::new(&spec, cfg, rep_seed).resolve(&policy)?;
        derivative_run(&spec, &x, &settings, cfg.h, rep_seed)
    })?;
    let summary = DerivativeSummary::from_runs(&runs, settings.tol, settings.n_walk);
    let survival: Vec<f64> = runs.iter().map(|r| r.survival).collect();
    let per_rep: Vec<Vec<Vec<f64>>> = survival.iter().map(|&s| vec![vec![s]]).collect();
    let mut grid_cfg = cfg.clone();
    grid_cfg.t_grid = vec![settings.horizon];
    out.rows = aggregate(&grid_cfg, &spec, &["survival"], &per_rep);
    out.report = Some(serde_json::to_value(&summary)?);
    Ok((out, runs))
}

/// Assumption report for the configured model and constants.
pub fn run_assumption_check(cfg: &ExperimentConfig) -> Result<AssumptionReport> {
    cfg.validate()?;
    let spec = cfg.model.build()?;
    let consts = cfg.resolved_constants(&spec)?;
    let beta_delta = cfg.beta.zip(cfg.delta);
    check_assumptions(&spec, &consts, cfg.mode, beta_delta)
}

/// Dispatches on the experiment kind.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    match cfg.experiment {
        ExperimentKind::Decay => run_decay_experiment(cfg),
        ExperimentKind::Perturbation => run_perturbation_experiment(cfg),
        ExperimentKind::DerivativeValidation => run_derivative_validation(cfg),
        ExperimentKind::AssumptionCheck => {
            let report = run_assumption_check(cfg)?;
            Ok(ExperimentOutput {
                report: Some(serde_json::to_value(report)?),
                ..Default::default()
            })
        }
    }
}
