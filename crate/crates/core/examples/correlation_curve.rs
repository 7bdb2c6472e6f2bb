//! Monte Carlo estimate of C(θ) against −cos 2θ.

use std::f64::consts::PI;

use bellsim::correlate::{correlation, TrialSampler};
use bellsim::detector::{DetectorArray, DistKind};
use bellsim::rng::derive_seed;

fn main() -> bellsim::Result<()> {
    let detectors = DetectorArray::haar(7, [8; 4], DistKind::Uniform)?;
    println!(
        "{:>8} {:>10} {:>9} {:>10} {:>6}",
        "theta", "estimate", "stderr", "-cos2t", "z"
    );
    for k in 0..9u64 {
        let theta = PI / 16.0 * k as f64;
        let trials = TrialSampler::new(0.0, theta, &detectors)?.run(100_000, derive_seed(7, k));
        let c = correlation(&trials)?;
        let z = if c.std_error > 0.0 {
            (c.mean_product - c.theory) / c.std_error
        } else {
            0.0
        };
        println!(
            "{theta:>8.4} {:>10.5} {:>9.5} {:>10.5} {z:>6.2}",
            c.mean_product, c.std_error, c.theory
        );
    }
    Ok(())
}
