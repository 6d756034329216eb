//! Second moments of the extended link-noise stacks.
//!
//! Both covariances are block diagonal with client blocks proportional to `N_k²` and a
//! zero lagged half, so they are carried as per-client scale factors and only
//! materialized on request.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::kron::bvec;
use crate::channel::ChannelConfig;
use crate::dataset::Prepared;
use crate::error::{Error, Result};

/// `E[ζζᵀ] = bdiag{d_k N_k²}` and `E[ηηᵀ] = bdiag{u_k N_k²}` with
/// `d_k = āρ²σ²_{ζ_k}` and `u_k = (5ρ²/K²) Σ_j σ²_{η_j}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NoiseScales {
    pub downlink: Vec<f64>,
    pub uplink: Vec<f64>,
}

impl NoiseScales {
    pub fn new(prep: &Prepared, c: usize, channel: &ChannelConfig) -> Result<Self> {
        let k = prep.num_clients();
        if c < 1 || c > k {
            return Err(Error::Config(format!("cardinality {c} must lie in 1..={k}")));
        }
        let v = channel.violations(k);
        if !v.is_empty() {
            return Err(Error::Config(v.join("; ")));
        }
        let a_bar = c as f64 / k as f64;
        let rho2 = prep.rho * prep.rho;
        let down = channel.downlink_variances.resolve(k)?;
        let up_total: f64 = channel.uplink_variances.resolve(k)?.iter().sum();
        let u = 5.0 * rho2 / (k * k) as f64 * up_total;
        Ok(NoiseScales {
            downlink: down.iter().map(|s| a_bar * rho2 * s).collect(),
            uplink: vec![u; k],
        })
    }

    pub fn total(&self) -> Vec<f64> {
        self.downlink.iter().zip(&self.uplink).map(|(d, u)| d + u).collect()
    }
}

/// Extended block-diagonal matrix `bdiag{s_1 N_1², …, s_K N_K², 0, …, 0}`.
pub fn extended_covariance(prep: &Prepared, scales: &[f64]) -> DMatrix<f64> {
    let k = prep.num_clients();
    let l = prep.dim();
    let mut m = DMatrix::zeros(2 * k * l, 2 * k * l);
    for (i, (c, s)) in prep.clients.iter().zip(scales).enumerate() {
        m.view_mut((i * l, i * l), (l, l)).copy_from(&(&c.n * &c.n * *s));
    }
    m
}

#[derive(Clone, Debug)]
pub struct NoiseMoments {
    pub phi: DVector<f64>,
    pub varphi: DVector<f64>,
    pub psi: DVector<f64>,
    pub scales: NoiseScales,
}

pub fn noise_moments(prep: &Prepared, c: usize, channel: &ChannelConfig) -> Result<NoiseMoments> {
    let scales = NoiseScales::new(prep, c, channel)?;
    let l = prep.dim();
    let phi = bvec(&extended_covariance(prep, &scales.downlink), l)?;
    let varphi = bvec(&extended_covariance(prep, &scales.uplink), l)?;
    let psi = &phi + &varphi;
    Ok(NoiseMoments {
        phi,
        varphi,
        psi,
        scales,
    })
}
