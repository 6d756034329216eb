//! Monte Carlo learning curves for all four algorithms under partial participation.
//!
//! Baseline ADMM keeps its duals on idle clients and drifts; the dual-free recursions do not.

use rercefed::algorithms::Variant;
use rercefed::channel::{ChannelConfig, SchedulerConfig};
use rercefed::dataset::DataGenConfig;
use rercefed::harness::{run_monte_carlo, write_curves_csv, ExperimentConfig};

fn main() -> rercefed::Result<()> {
    let mut cfg = ExperimentConfig::new(
        DataGenConfig::new(20, 8).with_obs_noise(1e-2),
        ChannelConfig::symmetric(1e-3),
        SchedulerConfig::fixed(5),
        600,
    )
    .with_variants(&Variant::ALL)
    .with_trials(20);
    cfg.divergence_db = 20.0;

    let curves = run_monte_carlo(&cfg)?;
    for c in &curves {
        println!(
            "{:<10} steady {:>7.2} ± {:.2} dB   diverged {}/{}",
            c.variant.name(),
            c.steady.nmse_db,
            c.steady.stderr_db,
            c.steady.diverged,
            c.steady.trials
        );
    }
    let path = std::env::temp_dir().join("rercefed_curves.csv");
    write_curves_csv(&curves, 10, &path)?;
    println!("curves in {}", path.display());
    Ok(())
}
