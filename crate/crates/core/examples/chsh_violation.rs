//! The CHSH combination at the optimal settings exceeds the classical bound of 2.

use bellsim::correlate::{chsh, ChshSettings};
use bellsim::detector::{DetectorArray, DistKind};

fn main() -> bellsim::Result<()> {
    let detectors = DetectorArray::haar(4, [8; 4], DistKind::Gibbs { beta: 2.0 })?;
    let est = chsh(ChshSettings::canonical(), 100_000, &detectors, 4)?;
    for (c, label) in est
        .correlations
        .iter()
        .zip(["(a,b)", "(a,b')", "(a',b)", "(a',b')"])
    {
        println!(
            "C{label:<8} = {:+.5} ± {:.5}  (theory {:+.5})",
            c.mean_product, c.std_error, c.theory
        );
    }
    println!(
        "S = {:+.5} ± {:.5}, theory {:+.5}",
        est.s, est.std_error, est.theory
    );
    println!("|S| > 2: {}", est.exceeds_classical_bound);
    Ok(())
}
