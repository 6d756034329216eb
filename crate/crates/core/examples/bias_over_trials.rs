//! Bias of the trial-averaged global model as the number of trials grows.

use rercefed::channel::{ChannelConfig, SchedulerConfig};
use rercefed::dataset::DataGenConfig;
use rercefed::harness::{bias_curves, ExperimentConfig};

fn main() -> rercefed::Result<()> {
    let cfg = ExperimentConfig::new(
        DataGenConfig::new(6, 6).with_obs_noise(1.0),
        ChannelConfig::symmetric(1e-4),
        SchedulerConfig::fixed(3),
        2000,
    );
    let prep = cfg.prepare()?;
    let b = bias_curves(&prep, &cfg, &[10, 100, 1000], 500)?;
    print!("{:>6}", "M");
    for n in &b.rounds {
        print!("{n:>11}");
    }
    println!();
    for (m, curve) in &b.curves {
        print!("{m:>6}");
        for v in curve {
            print!("{v:>11.3e}");
        }
        println!();
    }
    Ok(())
}
