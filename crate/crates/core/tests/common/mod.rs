#![allow(dead_code)]

use nalgebra::DMatrix;
use rercefed::dataset::{generate_problem, DataGenConfig, Prepared, WlsProblem};
use rercefed::theory::sample_transition;

pub fn problem(k: usize, l: usize, seed: u64, obs: f64) -> WlsProblem {
    generate_problem(&DataGenConfig::new(k, l).with_seed(seed).with_obs_noise(obs)).unwrap()
}

pub fn prep(k: usize, l: usize, seed: u64, obs: f64) -> Prepared {
    Prepared::new(&problem(k, l, seed, obs), 1.0).unwrap()
}

/// Tracy–Singh product straight from the definition, one entry at a time.
pub fn tracy_singh(a: &DMatrix<f64>, b: &DMatrix<f64>, l: usize) -> DMatrix<f64> {
    let (pa, qa) = (a.nrows() / l, a.ncols() / l);
    let (pb, qb) = (b.nrows() / l, b.ncols() / l);
    let mut out = DMatrix::zeros(pa * pb * l * l, qa * qb * l * l);
    for i in 0..pa {
        for j in 0..qa {
            for k in 0..pb {
                for m in 0..qb {
                    for r1 in 0..l {
                        for c1 in 0..l {
                            for r2 in 0..l {
                                for c2 in 0..l {
                                    let row = (i * pb + k) * l * l + r1 * l + r2;
                                    let col = (j * qb + m) * l * l + c1 * l + c2;
                                    out[(row, col)] = a[(i * l + r1, j * l + c1)] * b[(k * l + r2, m * l + c2)];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

/// All `c`-subsets of `0..k` as indicator vectors.
pub fn subsets(k: usize, c: usize) -> Vec<Vec<bool>> {
    (0u32..1 << k)
        .filter(|m| m.count_ones() as usize == c)
        .map(|m| (0..k).map(|i| m >> i & 1 == 1).collect())
        .collect()
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}

/// Exact `E[𝒜ᵀ ⊗_b 𝒜ᵀ]` over every equally likely schedule triplet.
pub fn enumerated_q(p: &Prepared, c: usize) -> DMatrix<f64> {
    let k = p.num_clients();
    let l = p.dim();
    let sets = subsets(k, c);
    let w = 1.0 / (sets.len() as f64).powi(3);
    let dim = (2 * k * l).pow(2);
    let mut q = DMatrix::zeros(dim, dim);
    for a0 in &sets {
        for a1 in &sets {
            for a2 in &sets {
                let a = sample_transition(p, c as f64, a0, a1, a2).unwrap();
                q += tracy_singh(&a.transpose(), &a.transpose(), l) * w;
            }
        }
    }
    q
}
