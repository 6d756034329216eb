//! Random client scheduling and the additive Gaussian link model.

use nalgebra::DVector;
use rercefed::channel::{corrupt, draw_schedule, Link, NoiseTag, SchedulerConfig};

fn main() -> rercefed::Result<()> {
    let k = 10;
    let fixed = SchedulerConfig::fixed(3).with_seed(1);
    let coin = SchedulerConfig::bernoulli(0.3).with_seed(1);
    for n in 0..5 {
        let a: Vec<_> = draw_schedule(k, &fixed, n)?.selected().collect();
        let b: Vec<_> = draw_schedule(k, &coin, n)?.selected().collect();
        println!("round {n}: fixed C=3 {a:?}   bernoulli p=0.3 {b:?}");
    }

    // Every transmission gets its own reproducible noise draw.
    let w = DVector::from_element(4, 1.0);
    let tag = NoiseTag { link: Link::Uplink, client: 2, round: 7 };
    let received = corrupt(&w, 1e-2, 42, tag);
    println!("sent {:.3}", w.transpose());
    println!("recv {:.3}", received.transpose());
    assert_eq!(received, corrupt(&w, 1e-2, 42, tag));
    Ok(())
}
