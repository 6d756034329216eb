//! Theory against simulation over an uplink-variance sweep.

use rercefed::channel::{ChannelConfig, SchedulerConfig};
use rercefed::dataset::DataGenConfig;
use rercefed::harness::{compare_theory_sim, ExperimentConfig};
use rercefed::theory::{InitialDeviation, TheoryOptions};

fn main() -> rercefed::Result<()> {
    let cfg = ExperimentConfig::new(
        DataGenConfig::new(4, 3).with_obs_noise(1.0),
        ChannelConfig::noiseless(),
        SchedulerConfig::fixed(2),
        3000,
    )
    .with_trials(40);
    let prep = cfg.prepare()?;
    let points: Vec<_> = [1e-4, 1e-3, 1e-2].iter().map(|&v| (v, ChannelConfig::new(v, 1e-4))).collect();
    let opts = TheoryOptions { initial_deviation: InitialDeviation::Raw, ..TheoryOptions::default() };

    let rep = compare_theory_sim(&prep, &cfg, &points, opts)?;
    println!("{}", rep.normalization_note);
    println!("uplink σ²   theory    sim     gap");
    for r in &rep.rows {
        println!("{:<9.0e} {:>7.2} {:>7.2} {:>6.2}", r.sweep_param, r.theory_db, r.sim_db, r.gap_db);
    }
    Ok(())
}
