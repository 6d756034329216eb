//! Monte Carlo of the recursion the analysis actually models:
//! `w̃_{e,n+1} = 𝒜_n w̃_{e,n} + g_n` with every `𝒜_n` built from a fresh, independent
//! schedule triplet and `g_n` Gaussian with the block-diagonal covariance of the noise
//! moments. Agreement with [`super::steady_state_mse`] isolates implementation errors from
//! the modeling assumptions; disagreement with the algorithm measures those assumptions.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use super::noise::NoiseScales;
use super::steady::{initial_deviation, InitialDeviation};
use super::transition::sample_transition;
use crate::channel::ChannelConfig;
use crate::dataset::Prepared;
use crate::error::{Error, Result};
use crate::rng;

const TAG_SURROGATE: u64 = 0x7375_7272;

#[derive(Clone, Debug, Serialize)]
pub struct SurrogateEstimate {
    /// Mean over trials of the window-averaged `‖w̃_e‖² / (2K‖w★‖²)`.
    pub nmse_linear: f64,
    pub nmse_db: f64,
    pub stderr_db: f64,
    pub trials: usize,
    pub rounds: u64,
}

fn draw(r: &mut impl Rng, k: usize, c: usize) -> Vec<bool> {
    let mut a = vec![false; k];
    for i in sample(r, k, c) {
        a[i] = true;
    }
    a
}

#[allow(clippy::too_many_arguments)]
pub fn surrogate_mse(
    prep: &Prepared,
    c: usize,
    channel: &ChannelConfig,
    start: InitialDeviation,
    rounds: u64,
    window: u64,
    trials: usize,
    seed: u64,
) -> Result<SurrogateEstimate> {
    let k = prep.num_clients();
    let l = prep.dim();
    if trials == 0 || window == 0 || window > rounds {
        return Err(Error::Config(format!(
            "surrogate needs trials >= 1 and 1 <= window <= rounds, got {trials}, {window}, {rounds}"
        )));
    }
    let scales = NoiseScales::new(prep, c, channel)?.total();
    // g_k = sqrt(s_k) N_k z
    let factors: Vec<DMatrix<f64>> = prep.clients.iter().zip(&scales).map(|(cl, s)| &cl.n * s.sqrt()).collect();
    let x0 = initial_deviation(prep, start);
    let norm = 2.0 * k as f64 * prep.w_star.norm_squared();

    let per_trial: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut r = rng::stream(seed, &[TAG_SURROGATE, t as u64]);
            let mut x = x0.clone();
            let mut acc = 0.0;
            let mut z = DVector::zeros(l);
            for n in 0..rounds {
                let a = [draw(&mut r, k, c), draw(&mut r, k, c), draw(&mut r, k, c)];
                let m = sample_transition(prep, c as f64, &a[0], &a[1], &a[2]).expect("valid schedule");
                x = m * x;
                for (i, f) in factors.iter().enumerate() {
                    z.iter_mut().for_each(|v| *v = r.sample(StandardNormal));
                    let mut blk = x.rows_mut(i * l, l);
                    blk.gemv(1.0, f, &z, 1.0);
                }
                if n + window >= rounds {
                    acc += x.norm_squared();
                }
            }
            acc / window as f64 / norm
        })
        .collect();

    let m = per_trial.len() as f64;
    let mean = per_trial.iter().sum::<f64>() / m;
    let var = if per_trial.len() > 1 {
        per_trial.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)
    } else {
        0.0
    };
    Ok(SurrogateEstimate {
        nmse_linear: mean,
        nmse_db: 10.0 * mean.log10(),
        stderr_db: 10.0 / std::f64::consts::LN_10 * (var / m).sqrt() / mean,
        trials,
        rounds,
    })
}
