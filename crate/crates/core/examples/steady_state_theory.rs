//! Steady-state MSE prediction and its uplink/downlink split for each cardinality.

use rercefed::channel::{ChannelConfig, SchedulerConfig};
use rercefed::dataset::DataGenConfig;
use rercefed::harness::ExperimentConfig;
use rercefed::theory::{InitialDeviation, SteadyStateAnalysis, TheoryOptions};

fn main() -> rercefed::Result<()> {
    let k = 4;
    let exp = ExperimentConfig::new(DataGenConfig::new(k, 3).with_obs_noise(1.0), ChannelConfig::noiseless(), SchedulerConfig::fixed(k), 0);
    let prep = exp.prepare()?;
    let opts = TheoryOptions { initial_deviation: InitialDeviation::Raw, ..TheoryOptions::default() };
    let channel = ChannelConfig::symmetric(1e-3);

    println!(" C   total    floor   uplink  downlink  (dB, normalized NMSE)");
    for c in 1..=k {
        let rep = SteadyStateAnalysis::new(&prep, c, opts.clone())?.report(&prep, &channel)?;
        println!(
            "{c:>2} {:>7.2} {:>8.2} {:>8.2} {:>9.2}",
            rep.nmse_db, rep.noise_floor_db, rep.uplink_db, rep.downlink_db
        );
    }
    Ok(())
}
