//! Random client scheduling and additive Gaussian link noise.

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dataset::PerClient;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    #[serde(default)]
    pub uplink_variances: PerClient,
    #[serde(default)]
    pub downlink_variances: PerClient,
    #[serde(default)]
    pub seed: u64,
}

impl ChannelConfig {
    pub fn noiseless() -> Self {
        Self::default()
    }

    /// The same variance on every uplink and downlink.
    pub fn symmetric(variance: f64) -> Self {
        Self::new(variance, variance)
    }

    pub fn new(uplink: f64, downlink: f64) -> Self {
        ChannelConfig {
            uplink_variances: PerClient::Uniform(uplink),
            downlink_variances: PerClient::Uniform(downlink),
            seed: 0,
        }
    }

    pub fn violations(&self, k: usize) -> Vec<String> {
        let mut out = Vec::new();
        for (name, p) in [("uplink_variances", &self.uplink_variances), ("downlink_variances", &self.downlink_variances)] {
            match p.resolve(k) {
                Err(e) => out.push(format!("{name}: {e}")),
                Ok(v) => {
                    for (i, s) in v.iter().enumerate() {
                        if !(s.is_finite() && *s >= 0.0) {
                            out.push(format!("{name}[{i}] = {s} must be a nonnegative number"));
                        }
                    }
                }
            }
        }
        out
    }

    /// Resolves per-client variances for `k` clients, using `seed` for the noise streams.
    pub fn links(&self, k: usize, seed: u64) -> Result<GaussianLinks> {
        let v = self.violations(k);
        if !v.is_empty() {
            return Err(Error::Config(v.join("; ")));
        }
        Ok(GaussianLinks {
            uplink: self.uplink_variances.resolve(k)?,
            downlink: self.downlink_variances.resolve(k)?,
            seed,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum SchedulerMode {
    /// Exactly `cardinality` clients per round, drawn uniformly without replacement.
    FixedCardinality { cardinality: usize },
    /// Each client participates independently with probability `participation_prob`.
    Bernoulli { participation_prob: f64 },
}

/// Unknown keys are rejected by the flattened mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    #[serde(flatten)]
    pub mode: SchedulerMode,
    #[serde(default)]
    pub seed: u64,
}

impl SchedulerConfig {
    pub fn fixed(c: usize) -> Self {
        SchedulerConfig {
            mode: SchedulerMode::FixedCardinality { cardinality: c },
            seed: 0,
        }
    }

    pub fn bernoulli(p: f64) -> Self {
        SchedulerConfig {
            mode: SchedulerMode::Bernoulli { participation_prob: p },
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    /// The per-round participation probability ā.
    pub fn a_bar(&self, k: usize) -> f64 {
        match self.mode {
            SchedulerMode::FixedCardinality { cardinality } => cardinality as f64 / k as f64,
            SchedulerMode::Bernoulli { participation_prob } => participation_prob,
        }
    }

    /// The nominal number of participants per round (`ā K` for Bernoulli).
    pub fn nominal_cardinality(&self, k: usize) -> f64 {
        self.a_bar(k) * k as f64
    }

    pub fn violations(&self, k: usize) -> Vec<String> {
        match self.mode {
            SchedulerMode::FixedCardinality { cardinality } if cardinality < 1 || cardinality > k => {
                vec![format!("cardinality {cardinality} must lie in 1..={k}")]
            }
            SchedulerMode::Bernoulli { participation_prob: p } if !(p > 0.0 && p <= 1.0) => {
                vec![format!("participation_prob {p} must lie in (0, 1]")]
            }
            _ => Vec::new(),
        }
    }
}

/// Participation indicators `a_{k,n}` of one round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RoundSchedule {
    pub a: Vec<bool>,
}

impl RoundSchedule {
    pub fn all(k: usize) -> Self {
        RoundSchedule { a: vec![true; k] }
    }

    pub fn from_indices(k: usize, selected: &[usize]) -> Self {
        let mut a = vec![false; k];
        for &i in selected {
            a[i] = true;
        }
        RoundSchedule { a }
    }

    pub fn count(&self) -> usize {
        self.a.iter().filter(|&&x| x).count()
    }

    pub fn selected(&self) -> impl Iterator<Item = usize> + '_ {
        self.a.iter().enumerate().filter(|(_, &x)| x).map(|(i, _)| i)
    }

    pub fn indicators(&self) -> Vec<f64> {
        self.a.iter().map(|&x| if x { 1.0 } else { 0.0 }).collect()
    }
}

/// The schedule of round `n`; a pure function of `(cfg.seed, n)`.
pub fn draw_schedule(k: usize, cfg: &SchedulerConfig, n: u64) -> Result<RoundSchedule> {
    let v = cfg.violations(k);
    if !v.is_empty() {
        return Err(Error::Config(v.join("; ")));
    }
    let mut r = rng::stream(cfg.seed, &[rng::TAG_SCHEDULE, n]);
    Ok(match cfg.mode {
        SchedulerMode::FixedCardinality { cardinality } => {
            if cardinality == k {
                RoundSchedule::all(k)
            } else {
                let idx = rand::seq::index::sample(&mut r, k, cardinality);
                RoundSchedule::from_indices(k, &idx.into_vec())
            }
        }
        SchedulerMode::Bernoulli { participation_prob } => RoundSchedule {
            a: (0..k).map(|_| r.random_bool(participation_prob)).collect(),
        },
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Link {
    Uplink,
    Downlink,
}

/// Identifies one transmission: direction, client and round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NoiseTag {
    pub link: Link,
    pub client: usize,
    pub round: u64,
}

/// Round index used for the pre-loop exchange in which every client sends `ŵ_k`.
pub const BOOTSTRAP_ROUND: u64 = u64::MAX;

fn add_noise(v: &mut DVector<f64>, variance: f64, seed: u64, tag: NoiseTag) {
    if variance == 0.0 {
        return;
    }
    let dir = match tag.link {
        Link::Uplink => rng::TAG_UPLINK,
        Link::Downlink => rng::TAG_DOWNLINK,
    };
    let mut r = rng::stream(seed, &[dir, tag.client as u64, tag.round]);
    let sd = variance.sqrt();
    for x in v.iter_mut() {
        *x += sd * r.sample::<f64, _>(StandardNormal);
    }
}

/// `v + g` with `g` i.i.d. `Normal(0, variance)`, reproducible from `(seed, tag)`.
pub fn corrupt(v: &DVector<f64>, variance: f64, seed: u64, tag: NoiseTag) -> DVector<f64> {
    let mut out = v.clone();
    add_noise(&mut out, variance, seed, tag);
    out
}

/// What a transmission does to a vector. Implemented by the Gaussian channel and by test doubles.
pub trait LinkNoise {
    fn apply(&mut self, v: &mut DVector<f64>, tag: NoiseTag);
}

/// Exact transmission on every link.
#[derive(Clone, Copy, Debug, Default)]
pub struct Noiseless;

impl LinkNoise for Noiseless {
    fn apply(&mut self, _: &mut DVector<f64>, _: NoiseTag) {}
}

/// Independent Gaussian noise per (direction, client, round).
#[derive(Clone, Debug)]
pub struct GaussianLinks {
    pub uplink: Vec<f64>,
    pub downlink: Vec<f64>,
    pub seed: u64,
}

impl LinkNoise for GaussianLinks {
    fn apply(&mut self, v: &mut DVector<f64>, tag: NoiseTag) {
        let var = match tag.link {
            Link::Uplink => self.uplink[tag.client],
            Link::Downlink => self.downlink[tag.client],
        };
        add_noise(v, var, self.seed, tag);
    }
}
