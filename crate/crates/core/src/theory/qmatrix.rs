//! Second-moment matrix `Q = E[𝒜ᵀ ⊗_b 𝒜ᵀ]`, in closed form and by sampling.
//!
//! Only `Qᵀ = E[𝒜 ⊗_b 𝒜]` is ever assembled directly; its block `((i,l),(j,m))` is
//! `E[𝒜_ij ⊗ 𝒜_lm]`, a combination of `I`, `N_i ⊗ I`, `I ⊗ N_l` and `N_i ⊗ N_l`.

use std::collections::HashMap;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::kron::block_kronecker;
use super::transition::sample_transition;
use crate::channel::{SchedulerConfig, SchedulerMode};
use crate::dataset::Prepared;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum QConstruction {
    ClosedForm,
    MonteCarlo { samples: usize },
}

#[derive(Clone, Debug)]
pub struct QMatrix {
    pub q: DMatrix<f64>,
    pub construction: QConstruction,
    /// Entrywise standard error of `q` (sampled construction only).
    pub stderr: Option<DMatrix<f64>>,
}

/// Participation moments of fixed-cardinality scheduling: `ā = C/K` and
/// `ă = (C/K)(C−1)/(K−1)`, the probability that two given clients are both drawn.
pub fn participation_moments(k: usize, c: usize) -> (f64, f64) {
    let a_bar = c as f64 / k as f64;
    let a_breve = if c < 2 || k < 2 {
        0.0
    } else {
        a_bar * (c - 1) as f64 / (k - 1) as f64
    };
    (a_bar, a_breve)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Kind {
    /// current row, same client's current column
    Diag,
    /// current row, another client's current column
    Cross,
    /// current row, lagged column
    Lag,
    /// lagged row copying its own client's current block
    Shift,
}

/// Coefficients `(c_I, c_{i0}, c_{0l}, c_{il})` of `E[𝒜_ij ⊗ 𝒜_lm]` on
/// `I`, `N_i ⊗ I`, `I ⊗ N_l`, `N_i ⊗ N_l`; `None` for structurally zero blocks.
/// Indices run over `0..2K`; `i, l` index the client of the row when current.
pub(crate) struct CaseTable {
    k: usize,
    rho: f64,
    c: f64,
    ab: f64,
    ar: f64,
}

impl CaseTable {
    pub(crate) fn new(k: usize, c: usize, rho: f64) -> Self {
        let (ab, ar) = participation_moments(k, c);
        CaseTable { k, rho, c: c as f64, ab, ar }
    }

    fn kind(&self, row: usize, col: usize) -> Option<Kind> {
        let k = self.k;
        if row >= k {
            return (col + k == row).then_some(Kind::Shift);
        }
        Some(if col == row {
            Kind::Diag
        } else if col < k {
            Kind::Cross
        } else {
            Kind::Lag
        })
    }

    pub(crate) fn coeffs(&self, i: usize, j: usize, l: usize, m: usize) -> Option<[f64; 4]> {
        use Kind::*;
        let (p, c, ab, ar) = (self.rho, self.c, self.ab, self.ar);
        let p2 = p * p;
        let c2 = c * c;
        let k1 = self.kind(i, j)?;
        let k2 = self.kind(l, m)?;
        let same_row = i == l;
        let same_col = j == m;
        // first-order coefficient of a diagonal block
        let d1 = -p * ab + 2.0 * p * ab * ab / c;
        let x1 = 2.0 * p * ab * ab / c;
        let g1 = -p * ab * ab / c;
        let pick4 = |both: f64, row_only: f64, col_only: f64, neither: f64| match (same_row, same_col) {
            (true, true) => both,
            (true, false) => row_only,
            (false, true) => col_only,
            (false, false) => neither,
        };
        Some(match (k1, k2) {
            (Diag, Diag) => {
                let q = if same_row {
                    p2 * ab - 4.0 * p2 * ab * ab / c + 4.0 * p2 * ab * ab / c2
                } else {
                    p2 * ar - 4.0 * p2 * ab * ar / c + 4.0 * p2 * ar * ar / c2
                };
                [1.0, d1, d1, q]
            }
            (Diag, Cross) => {
                let q = if same_row {
                    -2.0 * p2 * ab * ab / c + 4.0 * p2 * ab * ar / c2
                } else if same_col {
                    -2.0 * p2 * ab * ar / c + 4.0 * p2 * ar * ab / c2
                } else {
                    -2.0 * p2 * ab * ar / c + 4.0 * p2 * ar * ar / c2
                };
                [0.0, 0.0, x1, q]
            }
            (Diag, Lag) => {
                let q = if same_row {
                    p2 * ab * ab / c - 2.0 * p2 * ab * ab * ab / c2
                } else {
                    p2 * ar * ab / c - 2.0 * p2 * ar * ab * ab / c2
                };
                [0.0, 0.0, g1, q]
            }
            (Diag, Shift) => [1.0, d1, 0.0, 0.0],
            (Cross, Diag) => {
                let q = if same_row {
                    -2.0 * p2 * ab * ab / c + 4.0 * p2 * ab * ar / c2
                } else if same_col {
                    -2.0 * p2 * ar * ab / c + 4.0 * p2 * ar * ab / c2
                } else {
                    -2.0 * p2 * ar * ab / c + 4.0 * p2 * ar * ar / c2
                };
                [0.0, x1, 0.0, q]
            }
            (Cross, Cross) => {
                let f = 4.0 * p2 / c2;
                [0.0, 0.0, 0.0, f * pick4(ab * ab, ab * ar, ar * ab, ar * ar)]
            }
            (Cross, Lag) | (Lag, Cross) => {
                let q = if same_row {
                    -2.0 * p2 * ab * ab * ab / c2
                } else {
                    -2.0 * p2 * ar * ab * ab / c2
                };
                [0.0, 0.0, 0.0, q]
            }
            (Cross, Shift) => [0.0, x1, 0.0, 0.0],
            (Lag, Diag) => {
                let q = if same_row {
                    p2 * ab * ab / c - 2.0 * p2 * ab * ab * ab / c2
                } else {
                    p2 * ar * ab / c - 2.0 * p2 * ar * ab * ab / c2
                };
                [0.0, g1, 0.0, q]
            }
            (Lag, Lag) => {
                let f = p2 / c2;
                [0.0, 0.0, 0.0, f * pick4(ab * ab, ab * ar, ar * ab, ar * ar)]
            }
            (Lag, Shift) => [0.0, g1, 0.0, 0.0],
            (Shift, Diag) => [1.0, 0.0, d1, 0.0],
            (Shift, Cross) => [0.0, 0.0, x1, 0.0],
            (Shift, Lag) => [0.0, 0.0, g1, 0.0],
            (Shift, Shift) => [1.0, 0.0, 0.0, 0.0],
        })
    }
}

fn check_cardinality(k: usize, c: usize) -> Result<()> {
    if c < 1 || c > k {
        return Err(Error::Config(format!("cardinality {c} must lie in 1..={k}")));
    }
    Ok(())
}

/// Closed-form `Qᵀ`, assembled column-block by column-block.
pub(crate) fn closed_form_qt(prep: &Prepared, c: usize) -> Result<DMatrix<f64>> {
    let k = prep.num_clients();
    check_cardinality(k, c)?;
    let l = prep.dim();
    let p = 2 * k;
    let l2 = l * l;
    let dim = p * p * l2;
    let table = CaseTable::new(k, c, prep.rho);
    let ns: Vec<&DMatrix<f64>> = prep.clients.iter().map(|c| &c.n).collect();

    let mut qt = DMatrix::<f64>::zeros(dim, dim);
    // Column block (j, m) is a contiguous slab of l2 columns in column-major storage.
    qt.as_mut_slice()
        .par_chunks_mut(l2 * dim)
        .enumerate()
        .for_each(|(cb, slab)| {
            let (j, m) = (cb / p, cb % p);
            for i in 0..p {
                for li in 0..p {
                    let Some([ci, ci0, c0l, cil]) = table.coeffs(i, j, li, m) else {
                        continue;
                    };
                    let rb = (i * p + li) * l2;
                    let ni = (i < k).then(|| ns[i]);
                    let nl = (li < k).then(|| ns[li]);
                    for a in 0..l {
                        for b in 0..l {
                            let row = rb + a * l + b;
                            for cc in 0..l {
                                for d in 0..l {
                                    let col = cc * l + d;
                                    let mut v = 0.0;
                                    if a == cc && b == d {
                                        v += ci;
                                    }
                                    if let Some(ni) = ni {
                                        if b == d {
                                            v += ci0 * ni[(a, cc)];
                                        }
                                        if let Some(nl) = nl {
                                            v += cil * ni[(a, cc)] * nl[(b, d)];
                                        }
                                    }
                                    if let Some(nl) = nl {
                                        if a == cc {
                                            v += c0l * nl[(b, d)];
                                        }
                                    }
                                    if v != 0.0 {
                                        slab[col * dim + row] = v;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        });
    Ok(qt)
}

/// `Q` from the per-case moment table under fixed-cardinality scheduling.
pub fn build_q_closed_form(prep: &Prepared, c: usize) -> Result<QMatrix> {
    let qt = closed_form_qt(prep, c)?;
    Ok(QMatrix {
        q: qt.transpose(),
        construction: QConstruction::ClosedForm,
        stderr: None,
    })
}

fn draw(k: usize, mode: SchedulerMode, r: &mut impl Rng) -> Vec<bool> {
    match mode {
        SchedulerMode::FixedCardinality { cardinality } => {
            let mut a = vec![false; k];
            for i in rand::seq::index::sample(r, k, cardinality) {
                a[i] = true;
            }
            a
        }
        SchedulerMode::Bernoulli { participation_prob } => (0..k).map(|_| r.random_bool(participation_prob)).collect(),
    }
}

/// Sample mean of `𝒜ᵀ ⊗_b 𝒜ᵀ` over independent schedule triplets. The averaging constant
/// in `𝒜` is the nominal cardinality `āK`. Repeated triplets are tallied and their
/// products formed once, so small `K` stays cheap for large sample counts.
pub fn build_q_monte_carlo(prep: &Prepared, scheduler: &SchedulerConfig, samples: usize) -> Result<QMatrix> {
    let k = prep.num_clients();
    let l = prep.dim();
    let v = scheduler.violations(k);
    if !v.is_empty() {
        return Err(Error::Config(v.join("; ")));
    }
    if samples == 0 {
        return Err(Error::Config("at least one sample is required".into()));
    }
    let divisor = scheduler.nominal_cardinality(k);
    let mut r = rng::stream(scheduler.seed, &[rng::TAG_SCHEDULE, u64::MAX]);
    let mut tally: HashMap<Vec<bool>, usize> = HashMap::new();
    for _ in 0..samples {
        let mut key = draw(k, scheduler.mode, &mut r);
        key.extend(draw(k, scheduler.mode, &mut r));
        key.extend(draw(k, scheduler.mode, &mut r));
        *tally.entry(key).or_default() += 1;
    }
    let dim = (2 * k * l).pow(2);
    let mut sum = DMatrix::zeros(dim, dim);
    let mut sum_sq = DMatrix::zeros(dim, dim);
    for (key, count) in tally {
        let a = sample_transition(prep, divisor, &key[..k], &key[k..2 * k], &key[2 * k..])?;
        let x = block_kronecker(&a.transpose(), &a.transpose(), l)?;
        let w = count as f64;
        sum_sq.zip_apply(&x, |s, v| *s += w * v * v);
        sum += x * w;
    }
    let s = samples as f64;
    let mean = sum / s;
    let stderr = if samples > 1 {
        let mut var = sum_sq / s;
        var.zip_apply(&mean, |v, m| *v = (*v - m * m).max(0.0) * s / (s - 1.0));
        var.map(|v| (v / s).sqrt())
    } else {
        DMatrix::zeros(dim, dim)
    };
    Ok(QMatrix {
        q: mean,
        construction: QConstruction::MonteCarlo { samples },
        stderr: Some(stderr),
    })
}
