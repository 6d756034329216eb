//! Extended-state transition `w̃_{e,n+1} = 𝒜_n w̃_{e,n} + noise` and its mean.
//!
//! The extended state stacks the current client models on top of the previous ones,
//! `w_e = col{w_{1,n}, …, w_{K,n}, w_{1,n−1}, …, w_{K,n−1}}`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dataset::Prepared;
use crate::error::{Error, Result};

/// `1_{2K} ⊗ w★`.
pub fn extended_optimum(prep: &Prepared) -> DVector<f64> {
    let k = prep.num_clients();
    let l = prep.dim();
    DVector::from_fn(2 * k * l, |i, _| prep.w_star[i % l])
}

/// `col{w_1, …, w_K, w_1', …, w_K'}` from current and previous client models.
pub fn extended_state(current: &[DVector<f64>], previous: &[DVector<f64>]) -> DVector<f64> {
    let parts: Vec<f64> = current.iter().chain(previous).flat_map(|v| v.iter().copied()).collect();
    DVector::from_vec(parts)
}

fn check_schedule(a: &[bool], k: usize, which: &str) -> Result<()> {
    if a.len() != k {
        return Err(Error::Dimension(format!("{which} has {} entries for {k} clients", a.len())));
    }
    Ok(())
}

/// One realization of `𝒜_n` for the schedules `a_n`, `a_{n−1}`, `a_{n−2}`. `divisor` is the
/// server's averaging constant `C`.
pub fn sample_transition(prep: &Prepared, divisor: f64, a_n: &[bool], a_n1: &[bool], a_n2: &[bool]) -> Result<DMatrix<f64>> {
    let k = prep.num_clients();
    let l = prep.dim();
    check_schedule(a_n, k, "a_n")?;
    check_schedule(a_n1, k, "a_(n-1)")?;
    check_schedule(a_n2, k, "a_(n-2)")?;
    if !(divisor > 0.0) {
        return Err(Error::Config(format!("averaging constant must be positive, got {divisor}")));
    }
    let kl = k * l;
    let rho = prep.rho;
    let g = rho / divisor;
    let mut a = DMatrix::zeros(2 * kl, 2 * kl);
    for i in 0..k {
        let ni = &prep.clients[i].n;
        let r0 = i * l;
        for d in 0..l {
            a[(r0 + d, r0 + d)] = 1.0;
            a[(kl + r0 + d, r0 + d)] = 1.0;
        }
        if !a_n[i] {
            continue;
        }
        let mut v = a.view_mut((r0, r0), (l, l));
        v -= ni * rho;
        for j in 0..k {
            if a_n1[j] {
                let mut v = a.view_mut((r0, j * l), (l, l));
                v += ni * (2.0 * g);
            }
            if a_n2[j] {
                let mut v = a.view_mut((r0, kl + j * l), (l, l));
                v -= ni * g;
            }
        }
    }
    Ok(a)
}

/// `Ā = E[𝒜_n]` together with its blocks `𝒪 = āρ bdiag{N_k}` and `𝒫 = (āρ/K)(1ᵀ ⊗ bcol{N_k})`.
#[derive(Clone, Debug)]
pub struct MeanTransition {
    pub a_bar: DMatrix<f64>,
    pub o_cal: DMatrix<f64>,
    pub p_cal: DMatrix<f64>,
    pub participation: f64,
}

pub fn mean_transition(prep: &Prepared, a_bar: f64) -> Result<MeanTransition> {
    if !(a_bar > 0.0 && a_bar <= 1.0) {
        return Err(Error::Config(format!("participation probability {a_bar} must lie in (0, 1]")));
    }
    let k = prep.num_clients();
    let l = prep.dim();
    let kl = k * l;
    let rho = prep.rho;
    let mut o = DMatrix::zeros(kl, kl);
    let mut p = DMatrix::zeros(kl, kl);
    for (i, c) in prep.clients.iter().enumerate() {
        o.view_mut((i * l, i * l), (l, l)).copy_from(&(&c.n * (a_bar * rho)));
        let blk = &c.n * (a_bar * rho / k as f64);
        for j in 0..k {
            p.view_mut((i * l, j * l), (l, l)).copy_from(&blk);
        }
    }
    let mut a = DMatrix::zeros(2 * kl, 2 * kl);
    a.view_mut((0, 0), (kl, kl))
        .copy_from(&(DMatrix::identity(kl, kl) - &o + &p * 2.0));
    a.view_mut((0, kl), (kl, kl)).copy_from(&(-&p));
    a.view_mut((kl, 0), (kl, kl)).fill_with_identity();
    Ok(MeanTransition {
        a_bar: a,
        o_cal: o,
        p_cal: p,
        participation: a_bar,
    })
}

/// Long-run mean of the extended state started from `col{ŵ_e, 0}`.
#[derive(Clone, Debug, Serialize)]
pub struct MeanLimit {
    /// `Āⁿ col{ŵ_e, 0}` at `n = n_max`.
    pub power: Vec<f64>,
    /// `Σᵢ uᵢ v_{i,1}ᵀ ŵ_e` with the closed-form left vectors (equals `1 ⊗ w★`).
    pub eigen_prediction: Vec<f64>,
    /// `U (VᵀU)⁻¹ Vᵀ col{ŵ_e, 0}`: the same vectors after enforcing `vᵢᵀuⱼ = δᵢⱼ`.
    pub normalized_prediction: Vec<f64>,
    /// `max |v_{i,1}ᵀ(I − 𝒪 + 𝒫) − v_{i,1}ᵀ|`.
    pub left_eigen_residual: f64,
    /// `max |v_{i,2}ᵀ + v_{i,1}ᵀ𝒫|`.
    pub second_block_residual: f64,
    /// `max |vᵢᵀuⱼ − δᵢⱼ|` for the closed-form vectors.
    pub normalization_residual: f64,
    /// `‖power − 1 ⊗ w★‖ / ‖1 ⊗ w★‖`.
    pub relative_bias: f64,
    pub n_max: u64,
}

/// Closed-form left unit eigenvectors: rows of `v1` are `v_{i,1}ᵀ = ½ εᵢᵀ H⁻¹ [N₁⁻¹, …, N_K⁻¹]`
/// with `H = Σ XᵀWX = ½(Σ N_k⁻¹ − KρI)`; rows of `v2` are `−v_{i,1}ᵀ𝒫`.
pub fn closed_form_left_vectors(prep: &Prepared, mean: &MeanTransition) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    let k = prep.num_clients();
    let l = prep.dim();
    let mut n_inv = Vec::with_capacity(k);
    let mut h = DMatrix::identity(l, l) * (-(k as f64) * prep.rho);
    for c in &prep.clients {
        let inv = c
            .n
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("N_k not invertible".into()))?;
        h += &inv;
        n_inv.push(inv);
    }
    h *= 0.5;
    let h_inv = h
        .try_inverse()
        .ok_or_else(|| Error::Degenerate("Σ XᵀWX not invertible".into()))?;
    let mut v1 = DMatrix::zeros(l, k * l);
    for (j, inv) in n_inv.iter().enumerate() {
        v1.view_mut((0, j * l), (l, l)).copy_from(&(&h_inv * inv * 0.5));
    }
    let v2 = -(&v1 * &mean.p_cal);
    Ok((v1, v2))
}

pub fn mean_limit(prep: &Prepared, a_bar: f64, n_max: u64) -> Result<MeanLimit> {
    let k = prep.num_clients();
    let l = prep.dim();
    let kl = k * l;
    let mean = mean_transition(prep, a_bar)?;
    let mut x = DVector::zeros(2 * kl);
    for (i, c) in prep.clients.iter().enumerate() {
        x.rows_mut(i * l, l).copy_from(&c.w_hat);
    }
    let start = x.clone();
    let mut tmp = DVector::zeros(2 * kl);
    for _ in 0..n_max {
        tmp.gemv(1.0, &mean.a_bar, &x, 0.0);
        std::mem::swap(&mut x, &mut tmp);
    }

    let (v1, v2) = closed_form_left_vectors(prep, &mean)?;
    let mut v = DMatrix::zeros(l, 2 * kl);
    v.view_mut((0, 0), (l, kl)).copy_from(&v1);
    v.view_mut((0, kl), (l, kl)).copy_from(&v2);
    // uᵢ = col{εᵢ, …, εᵢ}
    let u = DMatrix::from_fn(2 * kl, l, |r, c| if r % l == c { 1.0 } else { 0.0 });

    let lhs = &v1 * (DMatrix::identity(kl, kl) - &mean.o_cal + &mean.p_cal);
    let left_eigen_residual = (lhs - &v1).amax();
    let second_block_residual = (&v2 + &v1 * &mean.p_cal).amax();
    let vu = &v * &u;
    let normalization_residual = (&vu - DMatrix::identity(l, l)).amax();

    let what = start.rows(0, kl).into_owned();
    let eigen_prediction = &u * (&v1 * &what);
    let vu_inv = vu
        .try_inverse()
        .ok_or_else(|| Error::Eigen("left/right unit eigenvectors are not biorthogonalizable".into()))?;
    let normalized_prediction = &u * (vu_inv * (&v * &start));

    let target = extended_optimum(prep);
    let relative_bias = (&x - &target).norm() / target.norm();
    Ok(MeanLimit {
        power: x.as_slice().to_vec(),
        eigen_prediction: eigen_prediction.as_slice().to_vec(),
        normalized_prediction: normalized_prediction.as_slice().to_vec(),
        left_eigen_residual,
        second_block_residual,
        normalization_residual,
        relative_bias,
        n_max,
    })
}
