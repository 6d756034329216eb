//! Round transitions of the four algorithm variants and full runs.
//!
//! All variants share the same client-side quantities from [`Prepared`]:
//! `N_k`, `ŵ_k` and ρ. A round reads a [`RoundSchedule`] and sends every
//! transmitted vector through a [`LinkNoise`] implementation, so tests can
//! force both the schedule and the noise realizations.

use std::fmt;
use std::ops::ControlFlow;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::channel::{
    draw_schedule, ChannelConfig, Link, LinkNoise, NoiseTag, RoundSchedule, SchedulerConfig, SchedulerMode,
    BOOTSTRAP_ROUND,
};
use crate::dataset::Prepared;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    /// Consensus ADMM with explicit duals.
    AdmmBaseline,
    /// ADMM after eliminating the duals, driven by `s_n = 2w_n − w_{n−1}`.
    DualFree,
    /// Dual-free ADMM with random scheduling; only the selected clients step.
    RerceFed,
    /// RERCE-Fed with continual local updates on stale copies.
    RerceFedClu,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::AdmmBaseline,
        Variant::DualFree,
        Variant::RerceFed,
        Variant::RerceFedClu,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::AdmmBaseline => "admm",
            Variant::DualFree => "dual-free",
            Variant::RerceFed => "rerce",
            Variant::RerceFedClu => "rerce-clu",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace(['_', ' '], "-");
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == norm || format!("{v:?}").to_ascii_lowercase() == norm.replace('-', ""))
            .ok_or_else(|| Error::Config(format!("unknown variant {s:?} (expected admm, dual-free, rerce, rerce-clu)")))
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.name().to_string()
    }
}

/// Server-side initialization.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ServerInit {
    /// `w_0 = w_{−1} = 0`.
    #[default]
    Zero,
    /// `w_0` is the average of the (uplink-corrupted) `ŵ_k` shared by all clients before the
    /// first round, `w_{−1} = 0`. This is the initialization under which the dual-free
    /// recursion reproduces the ADMM iterates exactly.
    ClientMean,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientState {
    pub w: DVector<f64>,
    pub z: Option<DVector<f64>>,
    pub stored_s: Option<DVector<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServerState {
    pub w: DVector<f64>,
    pub w_prev: DVector<f64>,
    pub s: DVector<f64>,
    pub stored_t: Option<Vec<DVector<f64>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct State {
    pub variant: Variant,
    pub server: ServerState,
    pub clients: Vec<ClientState>,
    /// Index of the next round to run.
    pub round: u64,
}

impl State {
    pub fn client_models(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.clients.iter().map(|c| &c.w)
    }
}

fn bootstrap_uploads(prep: &Prepared, noise: &mut dyn LinkNoise) -> Vec<DVector<f64>> {
    prep.clients
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let mut v = c.w_hat.clone();
            noise.apply(
                &mut v,
                NoiseTag {
                    link: Link::Uplink,
                    client: k,
                    round: BOOTSTRAP_ROUND,
                },
            );
            v
        })
        .collect()
}

fn mean(vs: &[DVector<f64>], l: usize) -> DVector<f64> {
    let mut acc = DVector::zeros(l);
    for v in vs {
        acc += v;
    }
    acc / vs.len() as f64
}

/// Clients start from `ŵ_k`; the server from [`ServerInit`].
pub fn init_states(prep: &Prepared, variant: Variant, init: ServerInit, noise: &mut dyn LinkNoise) -> State {
    let l = prep.dim();
    let zero = DVector::<f64>::zeros(l);
    let needs_uploads = variant == Variant::RerceFedClu || init == ServerInit::ClientMean;
    let uploads = if needs_uploads {
        bootstrap_uploads(prep, noise)
    } else {
        Vec::new()
    };
    let w0 = match init {
        ServerInit::Zero => zero.clone(),
        ServerInit::ClientMean => mean(&uploads, l),
    };
    let clients = prep
        .clients
        .iter()
        .map(|c| ClientState {
            w: c.w_hat.clone(),
            z: (variant == Variant::AdmmBaseline).then(|| zero.clone()),
            stored_s: (variant == Variant::RerceFedClu).then(|| zero.clone()),
        })
        .collect();
    State {
        variant,
        server: ServerState {
            s: &w0 * 2.0,
            w: w0,
            w_prev: zero,
            stored_t: (variant == Variant::RerceFedClu).then_some(uploads),
        },
        clients,
        round: 0,
    }
}

fn tag(link: Link, client: usize, round: u64) -> NoiseTag {
    NoiseTag { link, client, round }
}

fn check_round(state: &State, prep: &Prepared, schedule: &RoundSchedule, expected: Variant) -> Result<()> {
    if state.variant != expected {
        return Err(Error::Config(format!(
            "state belongs to {}, round operation is for {expected}",
            state.variant
        )));
    }
    if schedule.a.len() != prep.num_clients() {
        return Err(Error::Dimension(format!(
            "schedule has {} entries for {} clients",
            schedule.a.len(),
            prep.num_clients()
        )));
    }
    if schedule.count() == 0 {
        return Err(Error::EmptySchedule { round: state.round });
    }
    Ok(())
}

/// `w ← (I − ρN)w + ρN·target`.
fn local_step(w: &mut DVector<f64>, n: &nalgebra::DMatrix<f64>, rho: f64, target: &DVector<f64>) {
    let diff = &*w - target;
    w.gemv(-rho, n, &diff, 1.0);
}

fn aggregate(server: &mut ServerState, w_new: DVector<f64>) {
    server.s = &w_new * 2.0 - &server.w;
    server.w_prev = std::mem::replace(&mut server.w, w_new);
}

/// Baseline ADMM: selected clients update `z` then `w`, and upload `w + z/ρ`.
pub fn admm_baseline_round(
    state: &mut State,
    prep: &Prepared,
    schedule: &RoundSchedule,
    noise: &mut dyn LinkNoise,
) -> Result<()> {
    check_round(state, prep, schedule, Variant::AdmmBaseline)?;
    let rho = prep.rho;
    let n = state.round;
    let mut acc = DVector::zeros(prep.dim());
    for k in schedule.selected() {
        let pc = &prep.clients[k];
        let c = &mut state.clients[k];
        let mut wbar = state.server.w.clone();
        noise.apply(&mut wbar, tag(Link::Downlink, k, n));
        let z = c.z.as_mut().expect("baseline client carries a dual");
        z.axpy(rho, &c.w, 1.0);
        z.axpy(-rho, &wbar, 1.0);
        let mut inner = z.clone();
        inner.axpy(-rho, &wbar, 1.0);
        c.w.copy_from(&pc.w_hat);
        c.w.gemv(-1.0, &pc.n, &inner, 1.0);
        let mut up = c.w.clone();
        up.axpy(1.0 / rho, z, 1.0);
        noise.apply(&mut up, tag(Link::Uplink, k, n));
        acc += up;
    }
    aggregate(&mut state.server, acc / schedule.count() as f64);
    state.round += 1;
    Ok(())
}

fn primal_round(state: &mut State, prep: &Prepared, schedule: &RoundSchedule, noise: &mut dyn LinkNoise) {
    let rho = prep.rho;
    let n = state.round;
    let mut acc = DVector::zeros(prep.dim());
    for k in schedule.selected() {
        let c = &mut state.clients[k];
        let mut s = state.server.s.clone();
        noise.apply(&mut s, tag(Link::Downlink, k, n));
        local_step(&mut c.w, &prep.clients[k].n, rho, &s);
        let mut up = c.w.clone();
        noise.apply(&mut up, tag(Link::Uplink, k, n));
        acc += up;
    }
    aggregate(&mut state.server, acc / schedule.count() as f64);
    state.round += 1;
}

/// Dual-free ADMM: selected clients take one primal step towards the received `s̃`;
/// the server averages what it receives and extrapolates `s = 2w_{n+1} − w_n`.
pub fn dual_free_round(
    state: &mut State,
    prep: &Prepared,
    schedule: &RoundSchedule,
    noise: &mut dyn LinkNoise,
) -> Result<()> {
    check_round(state, prep, schedule, Variant::DualFree)?;
    primal_round(state, prep, schedule, noise);
    Ok(())
}

/// One RERCE-Fed round. The server divides by the number of participants, which is `C` under
/// fixed-cardinality scheduling; the transition coincides with [`dual_free_round`].
pub fn rerce_round(state: &mut State, prep: &Prepared, schedule: &RoundSchedule, noise: &mut dyn LinkNoise) -> Result<()> {
    check_round(state, prep, schedule, Variant::RerceFed)?;
    primal_round(state, prep, schedule, noise);
    Ok(())
}

/// One CLU round. Every client steps; non-selected ones reuse their stored `s̃`. The server
/// averages the newest `t̃_k = 2w_{k,n+1} − w_{k,n}` it holds from each client. Its `w` is the
/// estimate implied by `s = 2w − w_prev`.
pub fn rerce_clu_round(
    state: &mut State,
    prep: &Prepared,
    schedule: &RoundSchedule,
    noise: &mut dyn LinkNoise,
) -> Result<()> {
    check_round(state, prep, schedule, Variant::RerceFedClu)?;
    let rho = prep.rho;
    let n = state.round;
    let stored_t = state.server.stored_t.as_mut().expect("CLU server stores t");
    for (k, c) in state.clients.iter_mut().enumerate() {
        let stored = c.stored_s.as_mut().expect("CLU client stores s");
        if schedule.a[k] {
            stored.copy_from(&state.server.s);
            noise.apply(stored, tag(Link::Downlink, k, n));
        }
        let w_old = c.w.clone();
        local_step(&mut c.w, &prep.clients[k].n, rho, stored);
        if schedule.a[k] {
            let mut t = &c.w * 2.0 - w_old;
            noise.apply(&mut t, tag(Link::Uplink, k, n));
            stored_t[k] = t;
        }
    }
    let s_new = mean(stored_t, prep.dim());
    let w_new = (&s_new + &state.server.w) * 0.5;
    state.server.w_prev = std::mem::replace(&mut state.server.w, w_new);
    state.server.s = s_new;
    state.round += 1;
    Ok(())
}

/// Dispatches to the round operation of `state.variant`.
pub fn step(state: &mut State, prep: &Prepared, schedule: &RoundSchedule, noise: &mut dyn LinkNoise) -> Result<()> {
    match state.variant {
        Variant::AdmmBaseline => admm_baseline_round(state, prep, schedule, noise),
        Variant::DualFree => dual_free_round(state, prep, schedule, noise),
        Variant::RerceFed => rerce_round(state, prep, schedule, noise),
        Variant::RerceFedClu => rerce_clu_round(state, prep, schedule, noise),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub variant: Variant,
    pub num_rounds: u64,
    #[serde(default)]
    pub init: ServerInit,
    pub channel: ChannelConfig,
    pub scheduler: SchedulerConfig,
    #[serde(default)]
    pub trial_seed: u64,
}

impl RunConfig {
    pub fn new(variant: Variant, num_rounds: u64, channel: ChannelConfig, scheduler: SchedulerConfig) -> Self {
        RunConfig {
            variant,
            num_rounds,
            init: ServerInit::Zero,
            channel,
            scheduler,
            trial_seed: 0,
        }
    }

    /// Scheduler with its seed specialized to this trial.
    pub fn trial_scheduler(&self) -> SchedulerConfig {
        self.scheduler
            .with_seed(rng::derive_seed(self.scheduler.seed, &[rng::TAG_TRIAL, self.trial_seed]))
    }

    pub fn trial_noise_seed(&self) -> u64 {
        rng::derive_seed(self.channel.seed, &[rng::TAG_TRIAL, self.trial_seed])
    }
}

/// Runs `config.num_rounds` rounds, calling `observe` on the initial state and after every
/// round. `observe` may stop the run early. Under Bernoulli scheduling a round in which no
/// client is drawn leaves the state unchanged apart from the round counter.
pub fn run_with(
    prep: &Prepared,
    config: &RunConfig,
    mut observe: impl FnMut(&State) -> ControlFlow<()>,
) -> Result<State> {
    let k = prep.num_clients();
    let sched = config.trial_scheduler();
    let mut noise = config.channel.links(k, config.trial_noise_seed())?;
    let mut state = init_states(prep, config.variant, config.init, &mut noise);
    if observe(&state).is_break() {
        return Ok(state);
    }
    for n in 0..config.num_rounds {
        let schedule = draw_schedule(k, &sched, n)?;
        if schedule.count() == 0 && matches!(sched.mode, SchedulerMode::Bernoulli { .. }) {
            state.round += 1;
        } else {
            step(&mut state, prep, &schedule, &mut noise)?;
        }
        if observe(&state).is_break() {
            break;
        }
    }
    Ok(state)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub server: ServerState,
    pub client_w: Vec<DVector<f64>>,
}

/// Full trajectory, initial state included (`num_rounds + 1` snapshots).
pub fn run(prep: &Prepared, config: &RunConfig) -> Result<Vec<Snapshot>> {
    let mut out = Vec::with_capacity(config.num_rounds as usize + 1);
    run_with(prep, config, |s| {
        out.push(Snapshot {
            server: s.server.clone(),
            client_w: s.clients.iter().map(|c| c.w.clone()).collect(),
        });
        ControlFlow::Continue(())
    })?;
    Ok(out)
}

/// Debug dump: one CSV row per (round, client) with the entries of `w_{k,n}`.
pub fn write_snapshots_csv(trajectory: &[Snapshot], path: impl AsRef<Path>) -> Result<()> {
    let mut wtr = csv::Writer::from_path(path)?;
    let l = trajectory.first().map_or(0, |s| s.server.w.len());
    let mut header = vec!["round".to_string(), "client".to_string()];
    header.extend((0..l).map(|i| format!("w{i}")));
    wtr.write_record(&header)?;
    for (n, snap) in trajectory.iter().enumerate() {
        for (k, w) in snap.client_w.iter().enumerate() {
            let mut row = vec![n.to_string(), k.to_string()];
            row.extend(w.iter().map(|x| format!("{x:e}")));
            wtr.write_record(&row)?;
        }
    }
    wtr.flush()?;
    Ok(())
}
