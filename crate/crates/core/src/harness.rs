//! Monte Carlo experiments: repeated runs on one problem instance, NMSE and bias metrics,
//! aggregated learning curves and theory-vs-simulation comparison.
//!
//! Trials are independent: trial `i` derives its scheduling and noise streams from
//! `(seed, i)`, all variants of one trial share them, and aggregation always reduces in
//! trial-index order, so results do not depend on thread count or execution order.
//!
//! Curves average the linear NMSE over trials before converting to dB. The standard error
//! in dB is the delta-method image of the linear one.

use std::ops::ControlFlow;
use std::path::Path;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::algorithms::{run_with, RunConfig, ServerInit, Variant};
use crate::channel::{ChannelConfig, SchedulerConfig};
use crate::dataset::{generate_problem, DataGenConfig, Prepared};
use crate::error::{Error, Result};
use crate::rng;
use crate::theory::{SteadyStateAnalysis, TheoryOptions, TheoryReport};

/// Reported instead of −∞ when every client sits exactly at the optimum.
pub const NMSE_FLOOR_DB: f64 = -320.0;

pub fn to_db(x: f64) -> f64 {
    if x > 0.0 {
        (10.0 * x.log10()).max(NMSE_FLOOR_DB)
    } else {
        NMSE_FLOOR_DB
    }
}

/// `(1/K) Σ_k ‖w_k − w★‖² / ‖w★‖²`, linear.
pub fn nmse_linear<'a>(models: impl IntoIterator<Item = &'a DVector<f64>>, w_star: &DVector<f64>) -> Result<f64> {
    let ref_sq = w_star.norm_squared();
    if ref_sq == 0.0 {
        return Err(Error::Degenerate("NMSE is undefined for w★ = 0".into()));
    }
    let mut acc = 0.0;
    let mut k = 0usize;
    for w in models {
        if w.len() != w_star.len() {
            return Err(Error::Dimension(format!("model of length {} vs w★ of length {}", w.len(), w_star.len())));
        }
        acc += (w - w_star).norm_squared();
        k += 1;
    }
    if k == 0 {
        return Err(Error::Dimension("no client models".into()));
    }
    Ok(acc / k as f64 / ref_sq)
}

/// NMSE in dB, floored at [`NMSE_FLOOR_DB`].
pub fn nmse<'a>(models: impl IntoIterator<Item = &'a DVector<f64>>, w_star: &DVector<f64>) -> Result<f64> {
    nmse_linear(models, w_star).map(to_db)
}

/// `(1/L)‖w̄ − w★‖²` for the trial-averaged global model `w̄`.
pub fn bias_metric(mean_w: &DVector<f64>, w_star: &DVector<f64>) -> f64 {
    (mean_w - w_star).norm_squared() / w_star.len() as f64
}

/// Mean of the first `m` vectors.
pub fn trial_mean(ws: &[DVector<f64>], m: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(ws[0].len());
    for w in &ws[..m] {
        acc += w;
    }
    acc / m as f64
}

fn default_rho() -> f64 {
    1.0
}
fn default_trials() -> usize {
    100
}
fn default_rounds() -> u64 {
    1000
}
fn default_window() -> f64 {
    0.1
}
fn default_divergence() -> f64 {
    100.0
}
fn default_variants() -> Vec<Variant> {
    vec![Variant::RerceFed]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DataGenConfig,
    #[serde(default)]
    pub channel: ChannelConfig,
    /// Defaults to full participation.
    #[serde(default)]
    pub scheduler: Option<SchedulerConfig>,
    #[serde(default = "default_variants")]
    pub variants: Vec<Variant>,
    #[serde(default = "default_rho")]
    pub rho: f64,
    #[serde(default = "default_rounds")]
    pub num_rounds: u64,
    #[serde(default = "default_trials")]
    pub num_trials: usize,
    /// Master seed for scheduling and link noise; the problem instance uses `dataset.seed`.
    #[serde(default)]
    pub seed: u64,
    /// Steady state is the mean over this final fraction of rounds.
    #[serde(default = "default_window")]
    pub window_fraction: f64,
    #[serde(default)]
    pub init: ServerInit,
    /// Record the trial-averaged global model every round for the bias metric.
    #[serde(default)]
    pub track_bias: bool,
    /// NMSE above this stops a trial and marks it divergent.
    #[serde(default = "default_divergence")]
    pub divergence_db: f64,
}

impl ExperimentConfig {
    pub fn new(dataset: DataGenConfig, channel: ChannelConfig, scheduler: SchedulerConfig, num_rounds: u64) -> Self {
        ExperimentConfig {
            dataset,
            channel,
            scheduler: Some(scheduler),
            variants: default_variants(),
            rho: default_rho(),
            num_rounds,
            num_trials: default_trials(),
            seed: 0,
            window_fraction: default_window(),
            init: ServerInit::Zero,
            track_bias: false,
            divergence_db: default_divergence(),
        }
    }

    pub fn with_variants(mut self, v: &[Variant]) -> Self {
        self.variants = v.to_vec();
        self
    }

    pub fn with_trials(mut self, m: usize) -> Self {
        self.num_trials = m;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn scheduler(&self) -> SchedulerConfig {
        self.scheduler
            .unwrap_or_else(|| SchedulerConfig::fixed(self.dataset.num_clients))
    }

    /// Number of final rounds averaged for the steady state (at least one).
    pub fn window_rounds(&self) -> u64 {
        ((self.window_fraction * self.num_rounds as f64).ceil() as u64).clamp(1, self.num_rounds.max(1))
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out: Vec<String> = self.dataset.violations().into_iter().map(|s| format!("dataset.{s}")).collect();
        let k = self.dataset.num_clients;
        out.extend(self.channel.violations(k).into_iter().map(|s| format!("channel.{s}")));
        out.extend(self.scheduler().violations(k).into_iter().map(|s| format!("scheduler.{s}")));
        if self.variants.is_empty() {
            out.push("variants must not be empty".into());
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            out.push(format!("rho = {} must be positive", self.rho));
        }
        if self.num_trials == 0 {
            out.push("num_trials must be at least 1".into());
        }
        if !(self.window_fraction > 0.0 && self.window_fraction <= 1.0) {
            out.push(format!("window_fraction = {} must lie in (0, 1]", self.window_fraction));
        }
        if !self.divergence_db.is_finite() {
            out.push("divergence_db must be finite".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(v.join("; ")))
        }
    }

    pub fn prepare(&self) -> Result<Prepared> {
        self.validate()?;
        Prepared::new(&generate_problem(&self.dataset)?, self.rho)
    }

    /// Run configuration of trial `trial` for `variant`.
    pub fn run_config(&self, variant: Variant, trial: usize) -> RunConfig {
        let mut channel = self.channel.clone();
        channel.seed = rng::derive_seed(self.seed, &[rng::TAG_UPLINK, self.channel.seed]);
        let sched = self.scheduler();
        let sched = sched.with_seed(rng::derive_seed(self.seed, &[rng::TAG_SCHEDULE, sched.seed]));
        RunConfig {
            variant,
            num_rounds: self.num_rounds,
            init: self.init,
            channel,
            scheduler: sched,
            trial_seed: trial as u64,
        }
    }
}

/// Outcome of one trial of one variant.
#[derive(Clone, Debug)]
pub struct TrialResult {
    /// Linear NMSE for rounds `0..=n` actually run (shorter if the trial diverged).
    pub nmse: Vec<f64>,
    pub diverged_at: Option<u64>,
    /// Mean linear NMSE over the steady-state window (`None` if diverged).
    pub steady: Option<f64>,
    /// Global model after the last round.
    pub final_w: DVector<f64>,
    /// Global model per round (only when bias tracking is on).
    pub server_w: Option<Vec<DVector<f64>>>,
}

pub fn run_trial(prep: &Prepared, cfg: &ExperimentConfig, variant: Variant, trial: usize) -> Result<TrialResult> {
    let rc = cfg.run_config(variant, trial);
    let cutoff = 10f64.powf(cfg.divergence_db / 10.0);
    let start = cfg.num_rounds + 1 - cfg.window_rounds().min(cfg.num_rounds + 1);
    let mut nmse = Vec::with_capacity(cfg.num_rounds as usize + 1);
    let mut server_w = cfg.track_bias.then(Vec::new);
    let mut diverged_at = None;
    let mut err = None;
    let state = run_with(prep, &rc, |s| {
        let v = match nmse_linear(s.client_models(), &prep.w_star) {
            Ok(v) => v,
            Err(e) => {
                err = Some(e);
                return ControlFlow::Break(());
            }
        };
        nmse.push(v);
        if let Some(sw) = server_w.as_mut() {
            sw.push(s.server.w.clone());
        }
        if !(v <= cutoff) {
            diverged_at = Some(s.round);
            return ControlFlow::Break(());
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    let steady = diverged_at.is_none().then(|| {
        let w = &nmse[start as usize..];
        w.iter().sum::<f64>() / w.len() as f64
    });
    Ok(TrialResult {
        nmse,
        diverged_at,
        steady,
        final_w: state.server.w,
        server_w,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct SteadyState {
    pub nmse_db: f64,
    pub stderr_db: f64,
    /// Mean of the per-trial window averages, linear.
    pub nmse_linear: f64,
    pub trials: usize,
    pub diverged: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct LearningCurve {
    pub variant: Variant,
    pub trials: usize,
    /// dB of the trial-averaged linear NMSE, rounds `0..=num_rounds`. Only trials that have
    /// not diverged by a round contribute to it.
    pub nmse_db: Vec<f64>,
    pub stderr_db: Vec<f64>,
    /// Trials diverged at or before each round.
    pub diverged: Vec<usize>,
    pub steady: SteadyState,
    /// Per-trial steady-state linear NMSE, `None` for diverged trials.
    pub trial_steady: Vec<Option<f64>>,
    /// Per-round bias metric of the trial-averaged global model.
    pub bias: Option<Vec<f64>>,
    /// Final global model of every trial, in trial order.
    #[serde(skip)]
    pub final_w: Vec<DVector<f64>>,
}

fn mean_and_se_db(values: &[f64]) -> (f64, f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let se = if n > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        (var / n as f64).sqrt()
    } else {
        0.0
    };
    let se_db = if mean > 0.0 { 10.0 / std::f64::consts::LN_10 * se / mean } else { 0.0 };
    (to_db(mean), se_db, mean)
}

/// Aggregates trials given in trial-index order.
pub fn aggregate(variant: Variant, num_rounds: u64, trials: Vec<TrialResult>, w_star: &DVector<f64>) -> LearningCurve {
    let rounds = num_rounds as usize + 1;
    let mut nmse_db = Vec::with_capacity(rounds);
    let mut stderr_db = Vec::with_capacity(rounds);
    let mut diverged = Vec::with_capacity(rounds);
    let mut column = Vec::with_capacity(trials.len());
    for n in 0..rounds {
        column.clear();
        let mut dead = 0;
        for t in &trials {
            match t.diverged_at {
                Some(d) if d as usize <= n => dead += 1,
                _ => column.push(t.nmse[n]),
            }
        }
        let (m, se, _) = mean_and_se_db(&column);
        nmse_db.push(m);
        stderr_db.push(se);
        diverged.push(dead);
    }
    let steady_vals: Vec<f64> = trials.iter().filter_map(|t| t.steady).collect();
    let (sdb, sse, slin) = mean_and_se_db(&steady_vals);
    let bias = if trials.iter().all(|t| t.server_w.is_some()) && !trials.is_empty() {
        let upto = trials.iter().map(|t| t.server_w.as_ref().unwrap().len()).min().unwrap_or(0);
        Some(
            (0..upto)
                .map(|n| {
                    let mut acc = DVector::zeros(w_star.len());
                    for t in &trials {
                        acc += &t.server_w.as_ref().unwrap()[n];
                    }
                    bias_metric(&(acc / trials.len() as f64), w_star)
                })
                .collect(),
        )
    } else {
        None
    };
    LearningCurve {
        variant,
        trials: trials.len(),
        nmse_db,
        stderr_db,
        diverged,
        steady: SteadyState {
            nmse_db: sdb,
            stderr_db: sse,
            nmse_linear: slin,
            trials: trials.len(),
            diverged: trials.len() - steady_vals.len(),
        },
        trial_steady: trials.iter().map(|t| t.steady).collect(),
        bias,
        final_w: trials.into_iter().map(|t| t.final_w).collect(),
    }
}

/// All variants of `cfg` over `cfg.num_trials` trials on a prepared problem.
pub fn run_monte_carlo_prepared(prep: &Prepared, cfg: &ExperimentConfig) -> Result<Vec<LearningCurve>> {
    cfg.validate()?;
    if prep.num_clients() != cfg.dataset.num_clients || prep.dim() != cfg.dataset.model_dim {
        return Err(Error::Dimension("prepared problem does not match the dataset section".into()));
    }
    cfg.variants
        .iter()
        .map(|&v| {
            let trials = (0..cfg.num_trials)
                .into_par_iter()
                .map(|i| run_trial(prep, cfg, v, i))
                .collect::<Result<Vec<_>>>()?;
            Ok(aggregate(v, cfg.num_rounds, trials, &prep.w_star))
        })
        .collect()
}

/// Generates the problem of `cfg.dataset` and runs every variant.
pub fn run_monte_carlo(cfg: &ExperimentConfig) -> Result<Vec<LearningCurve>> {
    let prep = cfg.prepare()?;
    run_monte_carlo_prepared(&prep, cfg)
}

/// First round at which the curve stays within `margin_db` of its steady state.
pub fn rounds_to_plateau(curve: &LearningCurve, margin_db: f64) -> Option<u64> {
    let target = curve.steady.nmse_db + margin_db;
    let mut last_bad = None;
    for (n, &v) in curve.nmse_db.iter().enumerate() {
        if !(v <= target) {
            last_bad = Some(n);
        }
    }
    match last_bad {
        None => Some(0),
        Some(n) if n + 1 < curve.nmse_db.len() => Some(n as u64 + 1),
        _ => None,
    }
}

/// One point of a theory-vs-simulation sweep.
#[derive(Clone, Debug, Serialize)]
pub struct ComparisonRow {
    pub sweep_param: f64,
    pub theory_db: f64,
    pub sim_db: f64,
    pub sim_stderr_db: f64,
    pub gap_db: f64,
    /// `ℰ` plus the unit-eigenspace growth up to the middle of the simulation window.
    pub theory_horizon_db: f64,
    pub diverged: usize,
    pub theory: TheoryReport,
    #[serde(skip)]
    pub curve: LearningCurve,
}

#[derive(Clone, Debug, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    /// Theory ℰ is divided by this (`2K‖w★‖²`) to match the per-client NMSE.
    pub normalization: f64,
    pub normalization_note: &'static str,
    pub config: ExperimentConfig,
}

pub const NORMALIZATION_NOTE: &str = "theory MSE covers 2K blocks (current and lagged models); \
    dividing by 2K·‖w★‖² gives the per-client NMSE averaged by the simulation";

/// Runs RERCE-Fed for every `(sweep_param, channel)` point and compares its steady-state
/// NMSE with the theory. The scheduler must be fixed-cardinality.
pub fn compare_theory_sim(
    prep: &Prepared,
    cfg: &ExperimentConfig,
    points: &[(f64, ChannelConfig)],
    opts: TheoryOptions,
) -> Result<ComparisonReport> {
    let c = match cfg.scheduler().mode {
        crate::channel::SchedulerMode::FixedCardinality { cardinality } => cardinality,
        _ => return Err(Error::Config("theory comparison needs fixed-cardinality scheduling".into())),
    };
    if (prep.rho - cfg.rho).abs() > 0.0 {
        return Err(Error::Config("prepared problem and config disagree on rho".into()));
    }
    let analysis = SteadyStateAnalysis::new(prep, c, opts)?;
    let mut rows = Vec::with_capacity(points.len());
    for (param, channel) in points {
        let theory = analysis.report(prep, channel)?;
        let mut run = cfg.clone();
        run.channel = channel.clone();
        run.variants = vec![Variant::RerceFed];
        let curve = run_monte_carlo_prepared(prep, &run)?.remove(0);
        rows.push(ComparisonRow {
            sweep_param: *param,
            theory_db: theory.nmse_db,
            sim_db: curve.steady.nmse_db,
            sim_stderr_db: curve.steady.stderr_db,
            gap_db: curve.steady.nmse_db - theory.nmse_db,
            theory_horizon_db: theory.nmse_db_at(run.num_rounds as f64 - run.window_rounds() as f64 / 2.0),
            diverged: curve.steady.diverged,
            theory,
            curve,
        });
    }
    Ok(ComparisonReport {
        rows,
        normalization: 2.0 * prep.num_clients() as f64 * prep.w_star.norm_squared(),
        normalization_note: NORMALIZATION_NOTE,
        config: cfg.clone(),
    })
}

/// Bias metric of the global model against the number of trials averaged.
#[derive(Clone, Debug, Serialize)]
pub struct BiasCurves {
    /// Rounds at which the metric is recorded.
    pub rounds: Vec<u64>,
    /// `(M, metric per recorded round)` for the first `M` trials.
    pub curves: Vec<(usize, Vec<f64>)>,
}

/// Bias curves for nested trial prefixes `M ∈ trial_counts` of the first variant in `cfg`.
/// Trials run in chunks, so memory stays bounded for `M` in the hundreds of thousands.
pub fn bias_curves(prep: &Prepared, cfg: &ExperimentConfig, trial_counts: &[usize], stride: u64) -> Result<BiasCurves> {
    cfg.validate()?;
    let mut counts = trial_counts.to_vec();
    counts.sort_unstable();
    counts.dedup();
    let total = *counts.last().ok_or_else(|| Error::Config("no trial counts".into()))?;
    if counts[0] == 0 {
        return Err(Error::Config("trial counts must be positive".into()));
    }
    let variant = *cfg.variants.first().ok_or_else(|| Error::Config("no variant".into()))?;
    let stride = stride.max(1);
    let rounds: Vec<u64> = (0..=cfg.num_rounds)
        .filter(|n| n % stride == 0 || *n == cfg.num_rounds)
        .collect();
    let l = prep.dim();
    let mut sums = vec![DVector::<f64>::zeros(l); rounds.len()];
    let mut curves = Vec::new();
    let mut next = 0usize;
    const CHUNK: usize = 512;
    let mut done = 0usize;
    while done < total {
        let end = (done + CHUNK).min(total);
        let trajs = (done..end)
            .into_par_iter()
            .map(|i| {
                let rc = cfg.run_config(variant, i);
                let mut out = Vec::with_capacity(rounds.len());
                let mut idx = 0;
                run_with(prep, &rc, |s| {
                    if idx < rounds.len() && s.round == rounds[idx] {
                        out.push(s.server.w.clone());
                        idx += 1;
                    }
                    ControlFlow::Continue(())
                })?;
                Ok(out)
            })
            .collect::<Result<Vec<_>>>()?;
        for (t, traj) in trajs.into_iter().enumerate() {
            for (acc, w) in sums.iter_mut().zip(&traj) {
                *acc += w;
            }
            let m = done + t + 1;
            if next < counts.len() && m == counts[next] {
                let c = sums.iter().map(|s| bias_metric(&(s / m as f64), &prep.w_star)).collect();
                curves.push((m, c));
                next += 1;
            }
        }
        done = end;
    }
    Ok(BiasCurves { rounds, curves })
}

/// `round,num_trials,bias`.
pub fn write_bias_csv(b: &BiasCurves, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["round", "num_trials", "bias"])?;
    for (m, c) in &b.curves {
        for (n, v) in b.rounds.iter().zip(c) {
            w.write_record([n.to_string(), m.to_string(), format!("{v:e}")])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn fmt_num(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.6}")
    } else if x.is_nan() {
        "NaN".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// `round,variant,nmse_db_mean,nmse_db_stderr,diverged_count`; every `stride`-th round
/// plus the last one.
pub fn write_curves_csv(curves: &[LearningCurve], stride: u64, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["round", "variant", "nmse_db_mean", "nmse_db_stderr", "diverged_count"])?;
    let stride = stride.max(1) as usize;
    for c in curves {
        let last = c.nmse_db.len().saturating_sub(1);
        for n in (0..c.nmse_db.len()).filter(|n| n % stride == 0 || *n == last) {
            w.write_record([
                n.to_string(),
                c.variant.name().to_string(),
                fmt_num(c.nmse_db[n]),
                fmt_num(c.stderr_db[n]),
                c.diverged[n].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `sweep_param,theory_db,sim_db,gap_db`.
pub fn write_comparison_csv(report: &ComparisonReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["sweep_param", "theory_db", "sim_db", "gap_db"])?;
    for r in &report.rows {
        w.write_record([format!("{:e}", r.sweep_param), fmt_num(r.theory_db), fmt_num(r.sim_db), fmt_num(r.gap_db)])?;
    }
    w.flush()?;
    Ok(())
}
