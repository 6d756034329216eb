//! Steady-state mean-square error of RERCE-Fed.
//!
//! With `σ = bvec(I)` and the weighting recursion `bvec(Σ') = Q bvec(Σ)`,
//!
//! * `ℰ_ν = w̃ᵀ Σ_∞ w̃` with `bvec(Σ_∞) = Π σ`, `Π` the spectral projector of `Q` on its unit
//!   eigenvalue, and
//! * `ℰ_ψ = ψᵀ Σ_{μ≠1} (1 − μ)⁻¹ (spectral projector) σ = ψᵀ (I − Q)^# σ`.
//!
//! The left unit eigenvectors of `Q` are known in closed form: `W_ab = bvec(1 1ᵀ ⊗ E_ab)`,
//! because `Qᵀ` is block right-stochastic. With `G = I − Q + W Wᵀ/(4K²)` (nonsingular
//! when the unit eigenvalue is semisimple) we get `Π = R (WᵀR)⁻¹ Wᵀ` for `R = G⁻¹W`
//! and `(I − Q)^# σ = G⁻¹ (I − Π) σ`. One LU factorization of `Gᵀ` serves every
//! channel configuration, since `ψ` is a per-client combination of `bvec(E_kk ⊗ N_k²)`.
//!
//! On small instances the same quantities are also computed from a full eigen-decomposition
//! of `Q`, term by term.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::kron::{bvec_index, bvec_inv};
use super::noise::NoiseScales;
use super::qmatrix::closed_form_qt;
use super::transition::{extended_optimum, mean_limit};
use crate::channel::ChannelConfig;
use crate::dataset::Prepared;
use crate::error::{Error, Result};

/// Which deterministic `w̃_{e,1}` enters `ℰ_ν`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialDeviation {
    /// One noiseless full-participation round from the zero server state:
    /// `col{(I − ρN_k)ŵ_k, ŵ_k} − 1 ⊗ w★`.
    #[default]
    OneRound,
    /// `col{ŵ_e, 0} − 1 ⊗ w★`.
    Raw,
}

impl InitialDeviation {
    pub const ALL: [InitialDeviation; 2] = [InitialDeviation::OneRound, InitialDeviation::Raw];
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryOptions {
    /// `|μ − 1|` below this counts as a unit eigenvalue.
    pub eigen_tolerance: f64,
    /// Largest admissible `2KL`.
    pub max_extended_dim: usize,
    /// Power iterations used to bound the sub-unit spectrum.
    pub power_iterations: usize,
    /// Run the full eigen-decomposition route when `(2KL)²` is at most this.
    pub eigen_route_max_dim: usize,
    /// Eigenvalues closer than this are treated as one cluster in the eigen route.
    pub cluster_tolerance: f64,
    pub initial_deviation: InitialDeviation,
}

impl Default for TheoryOptions {
    fn default() -> Self {
        TheoryOptions {
            eigen_tolerance: 1e-8,
            max_extended_dim: 128,
            power_iterations: 100,
            eigen_route_max_dim: 1296,
            cluster_tolerance: 1e-5,
            initial_deviation: InitialDeviation::OneRound,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct NoiseFloor {
    pub mode: InitialDeviation,
    pub value: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClusterTerm {
    pub re: f64,
    pub im: f64,
    pub multiplicity: usize,
    /// `‖S‖·‖S⁻¹‖` for `S = VᴴU` of the cluster; large values flag a defective eigenvalue.
    pub condition: f64,
    /// Contribution to `ℰ_ψ` (real part; the conjugate partner carries the conjugate).
    pub contribution: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenRoute {
    pub unit_count: usize,
    pub spectral_radius: f64,
    pub largest_subunit_modulus: f64,
    pub link_noise: f64,
    pub imaginary_residue: f64,
    /// `|ψᵀ Π σ| / (‖ψ‖‖σ‖)` with `Π` built from the computed eigenvectors.
    pub unit_residual: f64,
    /// Clusters whose condition number exceeds `1e8`.
    pub defective_clusters: usize,
    pub terms: Vec<ClusterTerm>,
    /// Top 64 by modulus, then any unit eigenvalues not already listed.
    pub eigenvalues: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TheoryReport {
    pub num_clients: usize,
    pub dim: usize,
    pub cardinality: usize,
    pub initial_deviation: InitialDeviation,
    /// `ℰ = ℰ_ν + ℰ_ψ`.
    pub steady_state_mse: f64,
    pub noise_floor: f64,
    pub link_noise: f64,
    pub link_noise_uplink: f64,
    pub link_noise_downlink: f64,
    pub noise_floor_by_mode: Vec<NoiseFloor>,
    /// `2K‖w★‖²`: dividing `ℰ` by this gives the NMSE reported by simulations.
    pub normalization: f64,
    pub nmse_db: f64,
    pub noise_floor_db: f64,
    pub link_noise_db: f64,
    pub uplink_db: f64,
    pub downlink_db: f64,
    /// `|ψᵀ Π σ| / (‖ψ‖‖σ‖)`, summed over the unit eigenspace.
    pub unit_residual_total: f64,
    /// `ψᵀ Π σ`: the growth of `E‖w̃_{e,n}‖²` per round that the unit eigenspace picks up
    /// from the link noise. When it is nonzero, `ℰ` is only the
    /// bounded part and the MSE keeps growing linearly.
    pub unit_leakage: f64,
    /// Largest single-direction term `|ψᵀ r̃ᵢ wᵢᵀ σ| / (‖ψ‖‖σ‖)` in the biorthogonal basis.
    pub unit_residual_max: f64,
    /// `‖Qᵀ W − W‖_max`.
    pub left_unit_residual: f64,
    /// Power-iteration estimate of the largest sub-unit eigenvalue modulus of `Q`.
    pub subunit_radius: f64,
    /// Mean limit of the extended state from `col{ŵ_e, 0}` with biorthonormalized eigenvectors.
    pub mean_limit: Vec<f64>,
    pub eigen: Option<EigenRoute>,
    #[serde(skip)]
    pub sigma_inf: DMatrix<f64>,
}

impl TheoryReport {
    /// `ℰ + n·ψᵀΠσ` in NMSE dB: the large-`n` mean-square error including the linear growth
    /// through the unit eigenspace.
    pub fn nmse_db_at(&self, n: f64) -> f64 {
        db((self.steady_state_mse + n * self.unit_leakage) / self.normalization)
    }

    /// JSON with `Σ_∞` included as nested rows.
    pub fn to_json(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        let rows: Vec<Vec<f64>> = self
            .sigma_inf
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        v["sigma_infinity"] = serde_json::to_value(rows)?;
        Ok(v)
    }
}

fn db(x: f64) -> f64 {
    crate::harness::to_db(x)
}

struct EigenCluster {
    mu: Complex<f64>,
    multiplicity: usize,
    unit: bool,
    condition: f64,
    /// `ψ_kᵀ U S⁻¹ Vᴴ σ` per client.
    alpha: Vec<Complex<f64>>,
}

/// Everything in the steady-state formulas that does not depend on the link variances.
pub struct SteadyStateAnalysis {
    k: usize,
    l: usize,
    c: usize,
    rho: f64,
    opts: TheoryOptions,
    /// `bvec(E_kk ⊗ N_k²)ᵀ (I − Q)^# σ`
    e_client: Vec<f64>,
    /// `bvec(E_kk ⊗ N_k²)ᵀ Π σ`
    p_client: Vec<f64>,
    /// `bvec(E_kk ⊗ N_k²)ᵀ r̃ᵢ (wᵢᵀσ)` per unit direction
    p_dir: Vec<Vec<f64>>,
    nsq_fro: Vec<f64>,
    sigma_inf: DMatrix<f64>,
    floors: Vec<NoiseFloor>,
    normalization: f64,
    left_unit_residual: f64,
    subunit_radius: f64,
    mean_limit: Vec<f64>,
    eigen: Option<(Vec<EigenCluster>, Vec<[f64; 2]>)>,
}

/// `Wᵀx` for the unit left basis: sums each block position over all blocks.
fn w_t(x: &DVector<f64>, l2: usize) -> DVector<f64> {
    let mut out = DVector::zeros(l2);
    for (i, v) in x.iter().enumerate() {
        out[i % l2] += v;
    }
    out
}

fn unit_left_basis(dim: usize, l2: usize) -> DMatrix<f64> {
    DMatrix::from_fn(dim, l2, |r, c| if r % l2 == c { 1.0 } else { 0.0 })
}

/// The initial extended deviation for each mode.
pub fn initial_deviation(prep: &Prepared, mode: InitialDeviation) -> DVector<f64> {
    let k = prep.num_clients();
    let l = prep.dim();
    let kl = k * l;
    let mut x = DVector::zeros(2 * kl);
    for (i, c) in prep.clients.iter().enumerate() {
        match mode {
            InitialDeviation::OneRound => {
                let mut w1 = c.w_hat.clone();
                w1.gemv(-prep.rho, &c.n, &c.w_hat, 1.0);
                x.rows_mut(i * l, l).copy_from(&w1);
                x.rows_mut(kl + i * l, l).copy_from(&c.w_hat);
            }
            InitialDeviation::Raw => x.rows_mut(i * l, l).copy_from(&c.w_hat),
        }
    }
    x - extended_optimum(prep)
}

impl SteadyStateAnalysis {
    pub fn new(prep: &Prepared, c: usize, opts: TheoryOptions) -> Result<Self> {
        let k = prep.num_clients();
        let l = prep.dim();
        let p = 2 * k;
        if p * l > opts.max_extended_dim {
            return Err(Error::Config(format!(
                "2KL = {} exceeds the analysis cap {}: Q would be {}×{} dense ({:.1} GB); \
                 raise max_extended_dim to proceed",
                p * l,
                opts.max_extended_dim,
                (p * l).pow(2),
                (p * l).pow(2),
                ((p * l).pow(4) * 8) as f64 / 1e9
            )));
        }
        let l2 = l * l;
        let qt = closed_form_qt(prep, c)?;
        let dim = qt.nrows();
        let wb = unit_left_basis(dim, l2);
        let left_unit_residual = (&qt * &wb - &wb).amax();

        let mut g = -qt.clone();
        for i in 0..dim {
            g[(i, i)] += 1.0;
        }
        let s = 1.0 / (p * p) as f64;
        for col in 0..dim {
            for row in (col % l2..dim).step_by(l2) {
                g[(row, col)] += s;
            }
        }
        let lu = nalgebra_lapack::LU::new(g);
        let solve = |b: &DMatrix<f64>| -> Result<DMatrix<f64>> {
            lu.solve_transpose(b)
                .ok_or_else(|| Error::Eigen("unit eigenvalue of Q is defective or repeated beyond L²".into()))
        };
        let r = solve(&wb)?;
        let m = (wb.transpose() * &r)
            .try_inverse()
            .ok_or_else(|| Error::Eigen("unit eigenvectors of Q are not biorthogonalizable".into()))?;
        let rt = &r * m;
        drop(r);
        let proj = |x: &DVector<f64>| &rt * w_t(x, l2);

        // σ = bvec(I)
        let mut sigma = DVector::zeros(dim);
        for b in 0..p {
            for a in 0..l {
                sigma[bvec_index(p, l, b, b, a, a)] = 1.0;
            }
        }
        let wt_sigma = w_t(&sigma, l2);
        let pi_sigma = proj(&sigma);
        let rhs = &sigma - &pi_sigma;
        let y = solve(&DMatrix::from_column_slice(dim, 1, rhs.as_slice()))?.column(0).into_owned();
        let z = &y - proj(&y);

        let sigma_inf = bvec_inv(&pi_sigma, l)?;
        let floors = InitialDeviation::ALL
            .iter()
            .map(|&mode| {
                let x = initial_deviation(prep, mode);
                NoiseFloor {
                    mode,
                    value: (x.transpose() * &sigma_inf * &x)[(0, 0)],
                }
            })
            .collect();

        let nsq: Vec<DMatrix<f64>> = prep.clients.iter().map(|cl| &cl.n * &cl.n).collect();
        let dot_client = |kk: usize, v: &dyn Fn(usize) -> f64| -> f64 {
            let mut acc = 0.0;
            for a in 0..l {
                for b in 0..l {
                    acc += nsq[kk][(a, b)] * v(bvec_index(p, l, kk, kk, a, b));
                }
            }
            acc
        };
        let e_client = (0..k).map(|kk| dot_client(kk, &|i| z[i])).collect();
        let p_client = (0..k).map(|kk| dot_client(kk, &|i| pi_sigma[i])).collect();
        let p_dir = (0..k)
            .map(|kk| (0..l2).map(|d| dot_client(kk, &|i| rt[(i, d)]) * wt_sigma[d]).collect())
            .collect();

        // Largest sub-unit modulus of Q by power iteration on (I − Π)Q.
        let mut x = DVector::from_fn(dim, |i, _| 1.0 + ((i * 7919) % 101) as f64 / 101.0);
        x -= proj(&x);
        x /= x.norm();
        let iters = opts.power_iterations;
        let mut log_growth = Vec::with_capacity(iters);
        for _ in 0..iters {
            let mut y = qt.tr_mul(&x);
            y -= proj(&y);
            let nrm = y.norm();
            if nrm == 0.0 {
                log_growth.push(f64::NEG_INFINITY);
                break;
            }
            log_growth.push(nrm.ln());
            x = y / nrm;
        }
        let tail = &log_growth[log_growth.len() / 2..];
        let subunit_radius = if tail.is_empty() {
            0.0
        } else {
            (tail.iter().sum::<f64>() / tail.len() as f64).exp()
        };
        if subunit_radius > 1.0 + 1e-6 {
            return Err(Error::Unstable(subunit_radius));
        }

        let eigen = if dim <= opts.eigen_route_max_dim {
            Some(eigen_route(qt.transpose(), &sigma, &nsq, p, l, &opts)?)
        } else {
            None
        };
        if let Some((clusters, _)) = &eigen {
            if let Some(worst) = clusters
                .iter()
                .filter(|c| !c.unit)
                .map(|c| c.mu.norm())
                .reduce(f64::max)
            {
                if worst >= 1.0 {
                    return Err(Error::Unstable(worst));
                }
            }
        }

        let limit = mean_limit(prep, c as f64 / k as f64, 0)?;
        Ok(SteadyStateAnalysis {
            k,
            l,
            c,
            rho: prep.rho,
            opts,
            e_client,
            p_client,
            p_dir,
            nsq_fro: nsq.iter().map(|m| m.norm()).collect(),
            sigma_inf,
            floors,
            normalization: 2.0 * k as f64 * prep.w_star.norm_squared(),
            left_unit_residual,
            subunit_radius,
            mean_limit: limit.normalized_prediction,
            eigen,
        })
    }

    pub fn options(&self) -> &TheoryOptions {
        &self.opts
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn noise_floor(&self, mode: InitialDeviation) -> f64 {
        self.floors.iter().find(|f| f.mode == mode).map_or(f64::NAN, |f| f.value)
    }

    /// Link-noise term for explicit per-client scales of `N_k²` in `E[ζζᵀ] + E[ηηᵀ]`.
    pub fn link_noise_for(&self, scales: &[f64]) -> f64 {
        scales.iter().zip(&self.e_client).map(|(s, e)| s * e).sum()
    }

    pub fn report(&self, prep: &Prepared, channel: &ChannelConfig) -> Result<TheoryReport> {
        if prep.num_clients() != self.k || prep.dim() != self.l {
            return Err(Error::Dimension("analysis was built for a different problem".into()));
        }
        let scales = NoiseScales::new(prep, self.c, channel)?;
        let total = scales.total();
        let down = self.link_noise_for(&scales.downlink);
        let up = self.link_noise_for(&scales.uplink);
        let psi_norm = total
            .iter()
            .zip(&self.nsq_fro)
            .map(|(s, f)| (s * f).powi(2))
            .sum::<f64>()
            .sqrt();
        let sigma_norm = ((2 * self.k * self.l) as f64).sqrt();
        let scale = psi_norm * sigma_norm;
        let rel = |x: f64| if scale > 0.0 { x.abs() / scale } else { 0.0 };
        let unit_total = rel(total.iter().zip(&self.p_client).map(|(s, p)| s * p).sum());
        let unit_max = (0..self.l * self.l)
            .map(|d| rel(total.iter().zip(&self.p_dir).map(|(s, p)| s * p[d]).sum()))
            .fold(0.0, f64::max);

        let mode = self.opts.initial_deviation;
        let floor = self.noise_floor(mode);
        let link = down + up;
        let mse = floor + link;
        let norm = self.normalization;

        let eigen = self.eigen.as_ref().map(|(clusters, eigs)| {
            let mut acc = Complex::new(0.0, 0.0);
            let mut unit_acc = Complex::new(0.0, 0.0);
            let mut terms = Vec::new();
            for cl in clusters {
                let a: Complex<f64> = total.iter().zip(&cl.alpha).map(|(s, a)| a * *s).sum();
                if cl.unit {
                    unit_acc += a;
                    continue;
                }
                let t = a / (Complex::new(1.0, 0.0) - cl.mu);
                acc += t;
                terms.push(ClusterTerm {
                    re: cl.mu.re,
                    im: cl.mu.im,
                    multiplicity: cl.multiplicity,
                    condition: cl.condition,
                    contribution: t.re,
                });
            }
            let unit_count = clusters.iter().filter(|c| c.unit).map(|c| c.multiplicity).sum();
            let moduli = |unit: bool| clusters.iter().filter(move |c| c.unit == unit).map(|c| c.mu.norm());
            EigenRoute {
                unit_count,
                spectral_radius: moduli(true).chain(moduli(false)).fold(0.0, f64::max),
                largest_subunit_modulus: moduli(false).fold(0.0, f64::max),
                link_noise: acc.re,
                imaginary_residue: acc.im.abs(),
                unit_residual: rel(unit_acc.norm()),
                defective_clusters: clusters.iter().filter(|c| c.condition > 1e8).count(),
                terms,
                eigenvalues: eigs.clone(),
            }
        });

        Ok(TheoryReport {
            num_clients: self.k,
            dim: self.l,
            cardinality: self.c,
            initial_deviation: mode,
            steady_state_mse: mse,
            noise_floor: floor,
            link_noise: link,
            link_noise_uplink: up,
            link_noise_downlink: down,
            noise_floor_by_mode: self.floors.clone(),
            normalization: norm,
            nmse_db: db(mse / norm),
            noise_floor_db: db(floor / norm),
            link_noise_db: db(link / norm),
            uplink_db: db(up / norm),
            downlink_db: db(down / norm),
            unit_residual_total: unit_total,
            unit_residual_max: unit_max,
            unit_leakage: total.iter().zip(&self.p_client).map(|(s, p)| s * p).sum(),
            left_unit_residual: self.left_unit_residual,
            subunit_radius: self.subunit_radius,
            mean_limit: self.mean_limit.clone(),
            eigen,
            sigma_inf: self.sigma_inf.clone(),
        })
    }
}

/// Splits LAPACK's packed real eigenvector output into complex columns.
fn unpack(vals_im: &[f64], vecs: &DMatrix<f64>) -> DMatrix<Complex<f64>> {
    let n = vecs.nrows();
    let mut out = DMatrix::from_element(n, n, Complex::new(0.0, 0.0));
    let mut j = 0;
    while j < n {
        if vals_im[j] == 0.0 || j + 1 == n {
            for r in 0..n {
                out[(r, j)] = Complex::new(vecs[(r, j)], 0.0);
            }
            j += 1;
        } else {
            for r in 0..n {
                let (re, im) = (vecs[(r, j)], vecs[(r, j + 1)]);
                out[(r, j)] = Complex::new(re, im);
                out[(r, j + 1)] = Complex::new(re, -im);
            }
            j += 2;
        }
    }
    out
}

fn eigen_route(
    q: DMatrix<f64>,
    sigma: &DVector<f64>,
    nsq: &[DMatrix<f64>],
    p: usize,
    l: usize,
    opts: &TheoryOptions,
) -> Result<(Vec<EigenCluster>, Vec<[f64; 2]>)> {
    let n = q.nrows();
    let e = nalgebra_lapack::Eigen::new(q, true, true)
        .ok_or_else(|| Error::Eigen("eigen-decomposition of Q did not converge".into()))?;
    let re: Vec<f64> = e.eigenvalues_re.iter().copied().collect();
    let im: Vec<f64> = e.eigenvalues_im.iter().copied().collect();
    let u = unpack(&im, e.eigenvectors.as_ref().expect("right eigenvectors requested"));
    let v = unpack(&im, e.left_eigenvectors.as_ref().expect("left eigenvectors requested"));
    let mu: Vec<Complex<f64>> = re.iter().zip(&im).map(|(&a, &b)| Complex::new(a, b)).collect();

    let mut groups: Vec<(bool, Vec<usize>)> = Vec::new();
    let mut unit = Vec::new();
    for (i, z) in mu.iter().enumerate() {
        if (z - Complex::new(1.0, 0.0)).norm() < opts.eigen_tolerance {
            unit.push(i);
            continue;
        }
        match groups
            .iter_mut()
            .find(|(_, g)| (mu[g[0]] - z).norm() < opts.cluster_tolerance)
        {
            Some((_, g)) => g.push(i),
            None => groups.push((false, vec![i])),
        }
    }
    if !unit.is_empty() {
        groups.insert(0, (true, unit));
    }

    let sigma_c = sigma.map(|x| Complex::new(x, 0.0));
    let mut clusters = Vec::with_capacity(groups.len());
    for (is_unit, idx) in groups {
        let m = idx.len();
        let uc = DMatrix::from_fn(n, m, |r, c| u[(r, idx[c])]);
        let vc = DMatrix::from_fn(n, m, |r, c| v[(r, idx[c])]);
        let s = vc.adjoint() * &uc;
        let s_inv = s.clone().try_inverse();
        let (condition, t) = match s_inv {
            Some(si) => (s.norm() * si.norm(), si * (vc.adjoint() * &sigma_c)),
            None => (f64::INFINITY, DVector::from_element(m, Complex::new(0.0, 0.0))),
        };
        let x = &uc * t;
        let alpha = nsq
            .iter()
            .enumerate()
            .map(|(kk, n2)| {
                let mut acc = Complex::new(0.0, 0.0);
                for a in 0..l {
                    for b in 0..l {
                        acc += x[bvec_index(p, l, kk, kk, a, b)] * n2[(a, b)];
                    }
                }
                acc
            })
            .collect();
        let mean = idx.iter().map(|&i| mu[i]).sum::<Complex<f64>>() / m as f64;
        clusters.push(EigenCluster {
            mu: mean,
            multiplicity: m,
            unit: is_unit,
            condition,
            alpha,
        });
    }

    let mut listed: Vec<usize> = (0..n).collect();
    listed.sort_by(|&a, &b| mu[b].norm().total_cmp(&mu[a].norm()));
    let mut shown: Vec<usize> = listed.iter().copied().take(64).collect();
    for &i in &listed[shown.len()..] {
        if (mu[i] - Complex::new(1.0, 0.0)).norm() < opts.eigen_tolerance {
            shown.push(i);
        }
    }
    let eigs = shown.iter().map(|&i| [mu[i].re, mu[i].im]).collect();
    Ok((clusters, eigs))
}

/// One-shot analysis for a single channel configuration.
pub fn steady_state_mse(prep: &Prepared, c: usize, channel: &ChannelConfig, opts: TheoryOptions) -> Result<TheoryReport> {
    SteadyStateAnalysis::new(prep, c, opts)?.report(prep, channel)
}
