//! Synthetic federated WLS problems and the per-client quantities derived from them.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// A per-client real parameter given either once for all clients or client by client.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerClient {
    Uniform(f64),
    Each(Vec<f64>),
}

impl PerClient {
    pub fn resolve(&self, k: usize) -> Result<Vec<f64>> {
        match self {
            PerClient::Uniform(v) => Ok(vec![*v; k]),
            PerClient::Each(v) if v.len() == k => Ok(v.clone()),
            PerClient::Each(v) => Err(Error::Config(format!(
                "per-client list has {} entries, expected {k}",
                v.len()
            ))),
        }
    }

    pub fn scaled(&self, factor: f64) -> PerClient {
        match self {
            PerClient::Uniform(v) => PerClient::Uniform(v * factor),
            PerClient::Each(v) => PerClient::Each(v.iter().map(|x| x * factor).collect()),
        }
    }
}

impl Default for PerClient {
    fn default() -> Self {
        PerClient::Uniform(0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub enum WeightMode {
    /// `W_k = σ_{ν_k}^{-2} I`, the inverse covariance of `y_k` given `X_k`.
    #[default]
    InverseObsCovariance,
    /// `W_k = I` (ordinary least squares).
    Identity,
    /// A dense random SPD matrix `σ_{ν_k}^{-2}(I + G Gᵀ/d_k)` per client, drawn from the client stream.
    ExplicitSpd,
}

fn default_rows() -> (usize, usize) {
    (50, 90)
}
fn default_mean() -> (f64, f64) {
    (-0.5, 0.5)
}
fn default_var() -> (f64, f64) {
    (0.5, 1.5)
}
fn default_obs() -> PerClient {
    PerClient::Uniform(1e-2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataGenConfig {
    pub num_clients: usize,
    pub model_dim: usize,
    #[serde(default = "default_rows")]
    pub rows_range: (usize, usize),
    #[serde(default = "default_mean")]
    pub feature_mean_range: (f64, f64),
    #[serde(default = "default_var")]
    pub feature_var_range: (f64, f64),
    #[serde(default = "default_obs")]
    pub obs_noise_variances: PerClient,
    #[serde(default)]
    pub weight_mode: WeightMode,
    #[serde(default)]
    pub seed: u64,
}

impl DataGenConfig {
    /// The §V protocol for `k` clients and dimension `l` with default observation noise.
    pub fn new(k: usize, l: usize) -> Self {
        DataGenConfig {
            num_clients: k,
            model_dim: l,
            rows_range: default_rows(),
            feature_mean_range: default_mean(),
            feature_var_range: default_var(),
            obs_noise_variances: default_obs(),
            weight_mode: WeightMode::default(),
            seed: 0,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_obs_noise(mut self, variance: f64) -> Self {
        self.obs_noise_variances = PerClient::Uniform(variance);
        self
    }

    /// Every violated invariant, one message per field.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.num_clients == 0 {
            out.push("num_clients must be positive".into());
        }
        if self.model_dim == 0 {
            out.push("model_dim must be positive".into());
        }
        let (dlo, dhi) = self.rows_range;
        if dlo < 1 || dhi < dlo {
            out.push(format!("rows_range ({dlo}, {dhi}) must satisfy 1 <= lo <= hi"));
        }
        let (mlo, mhi) = self.feature_mean_range;
        if !(mlo.is_finite() && mhi.is_finite() && mlo <= mhi) {
            out.push(format!("feature_mean_range ({mlo}, {mhi}) must satisfy lo <= hi"));
        }
        let (vlo, vhi) = self.feature_var_range;
        if !(vlo > 0.0 && vhi >= vlo && vhi.is_finite()) {
            out.push(format!("feature_var_range ({vlo}, {vhi}) must satisfy 0 < lo <= hi"));
        }
        match self.obs_noise_variances.resolve(self.num_clients) {
            Err(e) => out.push(format!("obs_noise_variances: {e}")),
            Ok(v) => {
                let needs_positive = self.weight_mode != WeightMode::Identity;
                for (k, s) in v.iter().enumerate() {
                    if !(s.is_finite() && *s >= 0.0) || (needs_positive && *s <= 0.0) {
                        out.push(format!(
                            "obs_noise_variances[{k}] = {s} is invalid for weight mode {:?}",
                            self.weight_mode
                        ));
                    }
                }
            }
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
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClientData {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub w: DMatrix<f64>,
}

impl ClientData {
    pub fn rows(&self) -> usize {
        self.x.nrows()
    }

    /// `X_kᵀ W_k X_k` and `X_kᵀ W_k y_k`.
    pub fn normal_terms(&self) -> (DMatrix<f64>, DVector<f64>) {
        let xtw = self.x.transpose() * &self.w;
        (&xtw * &self.x, &xtw * &self.y)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WlsProblem {
    pub clients: Vec<ClientData>,
    pub omega: DVector<f64>,
    pub config: Option<DataGenConfig>,
}

impl WlsProblem {
    /// Assembles a problem from explicit data and checks its invariants.
    pub fn from_parts(clients: Vec<ClientData>, omega: DVector<f64>) -> Result<Self> {
        let p = WlsProblem {
            clients,
            omega,
            config: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.omega.len()
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.dim();
        if self.clients.is_empty() || l == 0 {
            return Err(Error::Dimension("problem needs at least one client and L >= 1".into()));
        }
        for (k, c) in self.clients.iter().enumerate() {
            let d = c.x.nrows();
            if c.x.ncols() != l || c.y.len() != d || c.w.shape() != (d, d) {
                return Err(Error::Dimension(format!(
                    "client {k}: X is {:?}, y has {}, W is {:?}, L = {l}",
                    c.x.shape(),
                    c.y.len(),
                    c.w.shape()
                )));
            }
            check_spd(&c.w).map_err(|_| Error::NotSpd { client: k })?;
        }
        optimal_wls(self).map(|_| ())
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let file = ProblemFile::from(self);
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, &file)?;
        Ok(())
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let file: ProblemFile = serde_json::from_reader(f)?;
        file.into_problem()
    }
}

fn check_spd(w: &DMatrix<f64>) -> std::result::Result<(), ()> {
    let scale = w.amax().max(f64::MIN_POSITIVE);
    if (w - w.transpose()).amax() > 1e-12 * scale {
        return Err(());
    }
    let chol = w.clone().cholesky().ok_or(())?;
    let diag = chol.l_dirty().diagonal();
    let min = diag.iter().fold(f64::INFINITY, |a, &b| a.min(b * b));
    if min > 1e-14 * scale {
        Ok(())
    } else {
        Err(())
    }
}

/// Draws a problem following the §V protocol. Client `k` uses its own random stream.
pub fn generate_problem(config: &DataGenConfig) -> Result<WlsProblem> {
    config.validate()?;
    let k_total = config.num_clients;
    let l = config.model_dim;
    let obs = config.obs_noise_variances.resolve(k_total)?;
    let mut orng = rng::stream(config.seed, &[rng::TAG_OMEGA]);
    let omega = DVector::from_iterator(l, (0..l).map(|_| orng.sample::<f64, _>(StandardNormal)));

    let clients = (0..k_total)
        .map(|k| {
            let mut r = rng::stream(config.seed, &[rng::TAG_CLIENT, k as u64]);
            let mu = uniform(&mut r, config.feature_mean_range);
            let var = uniform(&mut r, config.feature_var_range);
            let d = r.random_range(config.rows_range.0..=config.rows_range.1);
            let feat = Normal::new(mu, var.sqrt()).expect("validated variance");
            let x = DMatrix::from_row_iterator(d, l, (0..d * l).map(|_| feat.sample(&mut r)));
            let sd = obs[k].sqrt();
            let nu = DVector::from_iterator(d, (0..d).map(|_| sd * r.sample::<f64, _>(StandardNormal)));
            let y = &x * &omega + nu;
            let w = match config.weight_mode {
                WeightMode::Identity => DMatrix::identity(d, d),
                WeightMode::InverseObsCovariance => DMatrix::identity(d, d) / obs[k],
                WeightMode::ExplicitSpd => {
                    let g = DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
                    let mut w = (DMatrix::identity(d, d) + &g * g.transpose() / d as f64) / obs[k];
                    w = (&w + w.transpose()) * 0.5;
                    w
                }
            };
            ClientData { x, y, w }
        })
        .collect();

    let p = WlsProblem {
        clients,
        omega,
        config: Some(config.clone()),
    };
    optimal_wls(&p)?;
    Ok(p)
}

fn uniform(r: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new(lo, hi).expect("validated range").sample(r)
    }
}

/// The federated WLS optimum `w★ = (Σ XᵀWX)⁻¹ Σ XᵀWy`.
pub fn optimal_wls(problem: &WlsProblem) -> Result<DVector<f64>> {
    let l = problem.dim();
    let mut h = DMatrix::zeros(l, l);
    let mut b = DVector::zeros(l);
    for c in &problem.clients {
        let (hk, bk) = c.normal_terms();
        h += hk;
        b += bk;
    }
    let scale = h.amax();
    let chol = h
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("Σ XᵀWX is not positive definite".into()))?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v * v), hi.max(v * v)));
    if !(lo > 1e-13 * hi) || scale == 0.0 {
        return Err(Error::Degenerate(format!(
            "Σ XᵀWX is numerically singular (pivot ratio {:.3e})",
            lo / hi
        )));
    }
    Ok(chol.solve(&b))
}

/// `N_k` and `ŵ_k` for one client.
#[derive(Clone, Debug, PartialEq)]
pub struct ClientPrecompute {
    pub n: DMatrix<f64>,
    pub w_hat: DVector<f64>,
}

/// `N_k = (2XᵀWX + ρI)⁻¹` and `ŵ_k = 2 N_k XᵀW y`.
pub fn precompute_client(problem: &WlsProblem, k: usize, rho: f64) -> Result<ClientPrecompute> {
    if !(rho > 0.0 && rho.is_finite()) {
        return Err(Error::Config(format!("rho must be positive, got {rho}")));
    }
    let c = problem
        .clients
        .get(k)
        .ok_or_else(|| Error::Dimension(format!("client {k} out of range")))?;
    check_spd(&c.w).map_err(|_| Error::NotSpd { client: k })?;
    let l = problem.dim();
    let (h, b) = c.normal_terms();
    let m = h * 2.0 + DMatrix::identity(l, l) * rho;
    let chol = m
        .cholesky()
        .ok_or_else(|| Error::Degenerate(format!("2XᵀWX + ρI of client {k} not invertible")))?;
    let n = chol.inverse();
    let n = (&n + n.transpose()) * 0.5;
    let w_hat = &n * b * 2.0;
    Ok(ClientPrecompute { n, w_hat })
}

/// Everything the algorithms and the theory read from a problem at a given ρ.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub rho: f64,
    pub clients: Vec<ClientPrecompute>,
    pub w_star: DVector<f64>,
}

impl Prepared {
    pub fn new(problem: &WlsProblem, rho: f64) -> Result<Self> {
        let clients = (0..problem.num_clients())
            .map(|k| precompute_client(problem, k, rho))
            .collect::<Result<Vec<_>>>()?;
        Ok(Prepared {
            rho,
            clients,
            w_star: optimal_wls(problem)?,
        })
    }

    pub fn num_clients(&self) -> usize {
        self.clients.len()
    }

    pub fn dim(&self) -> usize {
        self.w_star.len()
    }

    pub fn n_mats(&self) -> Vec<DMatrix<f64>> {
        self.clients.iter().map(|c| c.n.clone()).collect()
    }
}

#[derive(Serialize, Deserialize)]
struct ClientFile {
    rows: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ProblemFile {
    format: String,
    version: u32,
    layout: String,
    config: Option<DataGenConfig>,
    model_dim: usize,
    omega: Vec<f64>,
    clients: Vec<ClientFile>,
}

const FORMAT: &str = "rercefed-problem";

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl From<&WlsProblem> for ProblemFile {
    fn from(p: &WlsProblem) -> Self {
        ProblemFile {
            format: FORMAT.into(),
            version: 1,
            layout: "row-major".into(),
            config: p.config.clone(),
            model_dim: p.dim(),
            omega: p.omega.as_slice().to_vec(),
            clients: p
                .clients
                .iter()
                .map(|c| ClientFile {
                    rows: c.rows(),
                    x: row_major(&c.x),
                    y: c.y.as_slice().to_vec(),
                    w: row_major(&c.w),
                })
                .collect(),
        }
    }
}

impl ProblemFile {
    fn into_problem(self) -> Result<WlsProblem> {
        if self.format != FORMAT || self.version != 1 || self.layout != "row-major" {
            return Err(Error::Config(format!(
                "unsupported problem file (format {:?}, version {}, layout {:?})",
                self.format, self.version, self.layout
            )));
        }
        let l = self.model_dim;
        if self.omega.len() != l {
            return Err(Error::Dimension("omega length differs from model_dim".into()));
        }
        let mut clients = Vec::with_capacity(self.clients.len());
        for (k, c) in self.clients.into_iter().enumerate() {
            let d = c.rows;
            if c.x.len() != d * l || c.y.len() != d || c.w.len() != d * d {
                return Err(Error::Dimension(format!("client {k} arrays do not match rows = {d}")));
            }
            clients.push(ClientData {
                x: DMatrix::from_row_slice(d, l, &c.x),
                y: DVector::from_vec(c.y),
                w: DMatrix::from_row_slice(d, d, &c.w),
            });
        }
        let p = WlsProblem {
            clients,
            omega: DVector::from_vec(self.omega),
            config: self.config,
        };
        p.validate()?;
        Ok(p)
    }
}
