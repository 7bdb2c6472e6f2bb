//! Random detector absorption unitaries and their decoherence factors.

use bellsim::detector::{make_detector, DetectorId, DistKind};
use bellsim::haar::unitarity_error;

fn main() -> bellsim::Result<()> {
    for kind in [
        DistKind::Uniform,
        DistKind::Gibbs { beta: 4.0 },
        DistKind::Gibbs {
            beta: f64::INFINITY,
        },
    ] {
        println!("internal distribution {kind}");
        for m in [2, 8, 32] {
            let d = make_detector(DetectorId::LV, m, kind, 2024)?;
            let f = d.decoherence_factor();
            println!(
                "  M={m:>2}  purity {:.4}  |f| = {:.4e}  unitarity error {:.1e}",
                d.dist().purity(),
                f.norm(),
                unitarity_error(d.absorption()),
            );
        }
    }
    Ok(())
}
