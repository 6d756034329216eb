//! One RERCE-Fed run: learning curve of a single trial.

use rercefed::algorithms::{run, RunConfig, Variant};
use rercefed::channel::{ChannelConfig, SchedulerConfig};
use rercefed::dataset::{generate_problem, DataGenConfig, Prepared};
use rercefed::harness::nmse;

fn main() -> rercefed::Result<()> {
    let problem = generate_problem(&DataGenConfig::new(10, 6).with_obs_noise(1.0))?;
    let prep = Prepared::new(&problem, 1.0)?;
    let cfg = RunConfig::new(Variant::RerceFed, 2000, ChannelConfig::symmetric(1e-3), SchedulerConfig::fixed(4));

    let traj = run(&prep, &cfg)?;
    for n in (0..traj.len()).step_by(250) {
        println!("round {n:>5}  NMSE {:>7.2} dB", nmse(&traj[n].client_w, &prep.w_star)?);
    }
    Ok(())
}
