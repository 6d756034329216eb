//! Generate a synthetic federated WLS instance, solve for the global optimum and save it.

use rercefed::dataset::{generate_problem, DataGenConfig, Prepared, WlsProblem};

fn main() -> rercefed::Result<()> {
    let cfg = DataGenConfig::new(8, 5).with_seed(3).with_obs_noise(1e-2);
    let problem = generate_problem(&cfg)?;
    for (k, c) in problem.clients.iter().enumerate() {
        println!("client {k}: {} rows", c.x.nrows());
    }

    let prep = Prepared::new(&problem, 1.0)?;
    println!("generating model ω = {:.4}", problem.omega.transpose());
    println!("WLS optimum   w★ = {:.4}", prep.w_star.transpose());

    let path = std::env::temp_dir().join("rercefed_problem.json");
    problem.save_json(&path)?;
    let back = WlsProblem::load_json(&path)?;
    assert_eq!(back.omega, problem.omega);
    println!("saved and reloaded {}", path.display());
    Ok(())
}
