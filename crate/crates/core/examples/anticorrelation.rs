//! Parallel analyzers: every trial gives opposite readings.

use bellsim::correlate::TrialSampler;
use bellsim::detector::{DetectorArray, DistKind};

fn main() -> bellsim::Result<()> {
    let detectors = DetectorArray::haar(1, [8, 8, 8, 8], DistKind::Uniform)?;
    let trials = TrialSampler::new(0.3, 0.3, &detectors)?.run(100_000, 1);
    let same = trials.iter().filter(|t| t.clara_product == 1).count();
    println!("{} trials, {} with equal readings", trials.len(), same);
    for t in trials.iter().take(5) {
        println!(
            "  trial {}: branch {} internal {:?} -> Z_L = {:+}, Z_R = {:+}",
            t.trial_index, t.branch, t.internal, t.z_left, t.z_right
        );
    }
    Ok(())
}
