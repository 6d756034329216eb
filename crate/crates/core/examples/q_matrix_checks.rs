//! Second-moment operator Q: closed form against sampling, and its unit spectrum.

use rercefed::channel::SchedulerConfig;
use rercefed::dataset::{generate_problem, DataGenConfig, Prepared};
use rercefed::theory::{build_q_closed_form, build_q_monte_carlo, check_spectral_properties};

fn main() -> rercefed::Result<()> {
    let (k, l, c) = (3, 2, 2);
    let prep = Prepared::new(&generate_problem(&DataGenConfig::new(k, l))?, 1.0)?;
    let closed = build_q_closed_form(&prep, c)?;
    let mc = build_q_monte_carlo(&prep, &SchedulerConfig::fixed(c).with_seed(1), 200_000)?;
    let se = mc.stderr.as_ref().expect("sampled Q carries standard errors");
    let z = (&mc.q - &closed.q).zip_map(se, |d, s| if s > 0.0 { d.abs() / s } else { 0.0 }).amax();
    println!("Q is {}x{}; largest sampling z-score {z:.2}", closed.q.nrows(), closed.q.ncols());

    let spectrum = check_spectral_properties(&closed.q, 1e-8)?;
    println!(
        "unit eigenvalues {} (L² = {}), largest sub-unit modulus {:.6}",
        spectrum.unit_count,
        l * l,
        spectrum.largest_subunit_modulus
    );
    Ok(())
}
