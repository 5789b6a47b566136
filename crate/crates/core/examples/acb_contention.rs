//! Contention on a set of shared channels: the analytic number of sole
//! selections against simulation, and how one barring round resolves a
//! collided channel.
//!
//! cargo run --example acb_contention

use hybrid_ra::acb::{acb_check, expected_success, optimal_acb};
use hybrid_ra::rng::stream;
use rand::Rng;

fn main() {
    let l = 54u32;
    let mut rng = stream(7, 0);
    println!("devices  expected successes  simulated   (L = {l})");
    for k in [5u32, 10, 27, 54, 108, 216] {
        let trials = 20_000;
        let mut hits = 0u64;
        let mut load = vec![0u32; l as usize];
        for _ in 0..trials {
            load.iter_mut().for_each(|x| *x = 0);
            for _ in 0..k {
                load[rng.random_range(0..l) as usize] += 1;
            }
            hits += load.iter().filter(|&&n| n == 1).count() as u64;
        }
        println!(
            "{k:>7}  {:>18.3}  {:>9.3}",
            expected_success(k, l).unwrap(),
            hits as f64 / trials as f64
        );
    }

    println!();
    println!("colliders  factor  P(exactly one passes)");
    for n in [2u32, 3, 5, 10] {
        for p in [1.0, 0.6, optimal_acb(f64::from(n))] {
            let trials = 100_000;
            let resolved = (0..trials)
                .filter(|_| (0..n).filter(|_| acb_check(p, &mut rng)).count() == 1)
                .count();
            println!("{n:>9}  {p:>6.3}  {:.3}", resolved as f64 / trials as f64);
        }
    }
}
