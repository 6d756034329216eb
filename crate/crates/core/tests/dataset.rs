mod common;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rercefed::dataset::{
    generate_problem, optimal_wls, precompute_client, ClientData, DataGenConfig, PerClient, Prepared, WeightMode,
    WlsProblem,
};
use rercefed::Error;

fn rel(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

fn noiseless(k: usize, l: usize, seed: u64) -> WlsProblem {
    let mut cfg = DataGenConfig::new(k, l).with_seed(seed).with_obs_noise(0.0);
    cfg.weight_mode = WeightMode::Identity;
    generate_problem(&cfg).unwrap()
}

#[test]
fn large_protocol_shapes() {
    let p = generate_problem(&DataGenConfig::new(100, 128)).unwrap();
    assert_eq!(p.num_clients(), 100);
    assert_eq!(p.dim(), 128);
    assert_eq!(p.omega.len(), 128);
    for c in &p.clients {
        assert!((50..=90).contains(&c.rows()));
        assert_eq!(c.x.ncols(), 128);
        assert_eq!(c.y.len(), c.rows());
        assert_eq!(c.w.shape(), (c.rows(), c.rows()));
    }
}

#[test]
fn zero_observation_noise_gives_exact_responses() {
    let mut cfg = DataGenConfig::new(1, 2).with_obs_noise(0.0);
    cfg.rows_range = (4, 4);
    cfg.weight_mode = WeightMode::Identity;
    let p = generate_problem(&cfg).unwrap();
    let c = &p.clients[0];
    assert_eq!(c.rows(), 4);
    assert_eq!(c.y, &c.x * &p.omega);
}

#[test]
fn generation_is_bit_identical_per_seed() {
    let cfg = DataGenConfig::new(5, 7).with_seed(11);
    let (a, b) = (generate_problem(&cfg).unwrap(), generate_problem(&cfg).unwrap());
    assert_eq!(a.omega, b.omega);
    for (x, y) in a.clients.iter().zip(&b.clients) {
        assert_eq!(x, y);
    }
    let c = generate_problem(&cfg.clone().with_seed(12)).unwrap();
    assert_ne!(a.omega, c.omega);
}

#[test]
fn adding_clients_keeps_existing_ones() {
    let small = generate_problem(&DataGenConfig::new(3, 4).with_seed(5)).unwrap();
    let big = generate_problem(&DataGenConfig::new(6, 4).with_seed(5)).unwrap();
    assert_eq!(small.omega, big.omega);
    assert_eq!(small.clients[..], big.clients[..3]);
}

#[test]
fn row_range_includes_both_endpoints() {
    let mut cfg = DataGenConfig::new(200, 1);
    cfg.rows_range = (2, 3);
    let p = generate_problem(&cfg).unwrap();
    let rows: Vec<usize> = p.clients.iter().map(|c| c.rows()).collect();
    assert!(rows.contains(&2) && rows.contains(&3));
    assert!(rows.iter().all(|d| (2..=3).contains(d)));
}

#[test]
fn feature_entries_follow_configured_moments() {
    let mut cfg = DataGenConfig::new(40, 10);
    cfg.feature_mean_range = (0.3, 0.3);
    cfg.feature_var_range = (2.0, 2.0);
    let p = generate_problem(&cfg).unwrap();
    let xs: Vec<f64> = p.clients.iter().flat_map(|c| c.x.iter().copied()).collect();
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((mean - 0.3).abs() < 3.0 * (2.0 / n).sqrt(), "mean {mean}");
    // Var of the sample variance for a Gaussian is 2σ⁴/(n−1).
    assert!((var - 2.0).abs() < 3.0 * (8.0 / (n - 1.0)).sqrt(), "var {var}");
}

#[test]
fn inverse_covariance_weights() {
    let cfg = DataGenConfig::new(3, 2).with_obs_noise(0.25);
    let p = generate_problem(&cfg).unwrap();
    for c in &p.clients {
        assert_eq!(c.w, DMatrix::identity(c.rows(), c.rows()) * 4.0);
    }
}

#[test]
fn explicit_spd_weights_are_spd() {
    let mut cfg = DataGenConfig::new(3, 3);
    cfg.weight_mode = WeightMode::ExplicitSpd;
    let p = generate_problem(&cfg).unwrap();
    for c in &p.clients {
        assert_eq!(c.w, c.w.transpose());
        assert!(c.w.clone().symmetric_eigenvalues().min() > 0.0);
    }
}

#[test]
fn config_violations_are_listed_per_field() {
    let mut cfg = DataGenConfig::new(0, 0);
    cfg.rows_range = (3, 2);
    cfg.feature_var_range = (0.0, 1.0);
    let v = cfg.violations();
    assert_eq!(v.len(), 4, "{v:?}");
    assert!(matches!(generate_problem(&cfg), Err(Error::Config(_))));
    let mut per = DataGenConfig::new(3, 2);
    per.obs_noise_variances = PerClient::Each(vec![1.0, -1.0, 1.0]);
    assert_eq!(per.violations().len(), 1);
}

#[test]
fn noiseless_optimum_recovers_ground_truth() {
    for (k, l, seed) in [(1, 2, 0), (3, 4, 1), (10, 8, 2), (6, 6, 3)] {
        let p = noiseless(k, l, seed);
        let w = optimal_wls(&p).unwrap();
        assert!(rel(&w, &p.omega) < 1e-10, "K={k} L={l}: {}", rel(&w, &p.omega));
    }
}

#[test]
fn diagonal_hand_case() {
    let c = ClientData {
        x: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
        y: DVector::from_vec(vec![1.0, 4.0]),
        w: DMatrix::identity(2, 2),
    };
    let p = WlsProblem::from_parts(vec![c], DVector::zeros(2)).unwrap();
    let w = optimal_wls(&p).unwrap();
    assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 2.0).abs() < 1e-14);
}

/// Stacks every client into one tall system and solves the weighted normal equations with
/// a dense LU, independently of the per-client accumulation.
fn stacked_oracle(p: &WlsProblem) -> DVector<f64> {
    let rows: usize = p.clients.iter().map(|c| c.rows()).sum();
    let l = p.dim();
    let mut x = DMatrix::zeros(rows, l);
    let mut y = DVector::zeros(rows);
    let mut w = DMatrix::zeros(rows, rows);
    let mut at = 0;
    for c in &p.clients {
        let d = c.rows();
        x.view_mut((at, 0), (d, l)).copy_from(&c.x);
        y.rows_mut(at, d).copy_from(&c.y);
        w.view_mut((at, at), (d, d)).copy_from(&c.w);
        at += d;
    }
    let xt_w = x.transpose() * w;
    (&xt_w * &x).lu().solve(&(xt_w * y)).unwrap()
}

#[test]
fn optimum_matches_stacked_solve() {
    for mode in [WeightMode::InverseObsCovariance, WeightMode::ExplicitSpd] {
        let mut cfg = DataGenConfig::new(3, 4).with_seed(9).with_obs_noise(0.5);
        cfg.weight_mode = mode;
        let p = generate_problem(&cfg).unwrap();
        let w = optimal_wls(&p).unwrap();
        assert!(rel(&w, &stacked_oracle(&p)) < 1e-10, "{mode:?}");
    }
}

#[test]
fn rank_deficient_problem_is_degenerate() {
    let mut cfg = DataGenConfig::new(1, 4);
    cfg.rows_range = (2, 2);
    assert!(matches!(generate_problem(&cfg), Err(Error::Degenerate(_))));
}

#[test]
fn zero_features_give_rho_only_inverse() {
    let c = ClientData {
        x: DMatrix::zeros(3, 2),
        y: DVector::from_vec(vec![1.0, 2.0, 3.0]),
        w: DMatrix::identity(3, 3),
    };
    let full = ClientData {
        x: DMatrix::identity(2, 2),
        y: DVector::from_vec(vec![1.0, 1.0]),
        w: DMatrix::identity(2, 2),
    };
    let p = WlsProblem::from_parts(vec![c, full], DVector::zeros(2)).unwrap();
    let pc = precompute_client(&p, 0, 1.0).unwrap();
    assert_eq!(pc.n, DMatrix::identity(2, 2));
    assert_eq!(pc.w_hat, DVector::zeros(2));
}

#[test]
fn local_estimate_minimizes_regularized_objective() {
    let p = common::problem(1, 5, 4, 0.1);
    let rho = 1.0;
    let pc = precompute_client(&p, 0, rho).unwrap();
    let c = &p.clients[0];
    // J(w) = ‖y − Xw‖²_W + (ρ/2)‖w‖²; its minimizer solves (2XᵀWX + ρI) w = 2XᵀWy.
    let lhs = c.x.transpose() * &c.w * &c.x * 2.0 + DMatrix::identity(5, 5) * rho;
    let rhs = c.x.transpose() * &c.w * &c.y * 2.0;
    let direct = lhs.lu().solve(&rhs).unwrap();
    assert!(rel(&pc.w_hat, &direct) < 1e-10);

    let j = |w: &DVector<f64>| {
        let r = &c.y - &c.x * w;
        (r.transpose() * &c.w * &r)[(0, 0)] + 0.5 * rho * w.norm_squared()
    };
    let h = 1e-6;
    for i in 0..5 {
        let mut e = DVector::zeros(5);
        e[i] = h;
        let g = (j(&(&pc.w_hat + &e)) - j(&(&pc.w_hat - &e))) / (2.0 * h);
        assert!(g.abs() < 1e-3 * j(&pc.w_hat).max(1.0), "grad[{i}] = {g}");
    }
}

#[test]
fn precompute_rejects_bad_inputs() {
    let p = common::problem(2, 3, 0, 1e-2);
    assert!(matches!(precompute_client(&p, 0, 0.0), Err(Error::Config(_))));
    assert!(matches!(precompute_client(&p, 0, -1.0), Err(Error::Config(_))));
    assert!(matches!(precompute_client(&p, 5, 1.0), Err(Error::Dimension(_))));

    let mut bad = p.clone();
    let d = bad.clients[1].rows();
    bad.clients[1].w = -DMatrix::identity(d, d);
    assert!(matches!(precompute_client(&bad, 1, 1.0), Err(Error::NotSpd { client: 1 })));
    assert!(bad.validate().is_err());
}

#[test]
fn json_round_trip_is_exact() {
    let mut cfg = DataGenConfig::new(3, 4).with_seed(2);
    cfg.weight_mode = WeightMode::ExplicitSpd;
    let p = generate_problem(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("problem.json");
    p.save_json(&path).unwrap();
    let q = WlsProblem::load_json(&path).unwrap();
    assert_eq!(p.omega, q.omega);
    assert_eq!(p.clients, q.clients);
    assert_eq!(p.config, q.config);
}

#[test]
fn loader_validates_invariants() {
    let p = common::problem(2, 3, 0, 1e-2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("problem.json");
    p.save_json(&path).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["omega"].as_array_mut().unwrap().pop();
    std::fs::write(&path, v.to_string()).unwrap();
    assert!(WlsProblem::load_json(&path).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn optimum_satisfies_normal_equations(seed in 0u64..10_000, k in 1usize..6, l in 1usize..6) {
        let p = common::problem(k, l, seed, 0.05);
        let w = optimal_wls(&p).unwrap();
        let mut resid = DVector::zeros(l);
        let mut b = DVector::zeros(l);
        for c in &p.clients {
            let xt_w = c.x.transpose() * &c.w;
            resid += &xt_w * (&c.y - &c.x * &w);
            b += xt_w * &c.y;
        }
        prop_assert!(resid.norm() < 1e-8 * b.norm());
    }

    #[test]
    fn n_is_the_inverse_with_spectrum_in_unit_interval(seed in 0u64..10_000, rho in 0.05f64..20.0) {
        let p = common::problem(3, 4, seed, 0.1);
        let prep = Prepared::new(&p, rho).unwrap();
        for (c, pc) in p.clients.iter().zip(&prep.clients) {
            let m = c.x.transpose() * &c.w * &c.x * 2.0 + DMatrix::identity(4, 4) * rho;
            let resid = (&pc.n * &m - DMatrix::identity(4, 4)).norm();
            prop_assert!(resid < 1e-10 * m.norm() * pc.n.norm());
            let eig = pc.n.clone().symmetric_eigenvalues();
            prop_assert!(eig.min() > 0.0);
            prop_assert!(eig.max() <= 1.0 / rho * (1.0 + 1e-12));
        }
    }
}
