//! The reduced density matrix of the pointer states, built from the four
//! decoherence factors and cross-checked against the full dense state.

use std::f64::consts::PI;

use bellsim::chain::{build_branches, reduced_density_dense_oracle, reduced_density_structured};
use bellsim::detector::{DetectorArray, DistKind};

fn main() -> bellsim::Result<()> {
    let theta = PI / 8.0;
    let branches = build_branches(theta);
    println!("branches at theta = pi/8:");
    for (config, amp) in branches.branches() {
        println!("  {config}: {amp:.6}");
    }

    for m in [1, 3, 16] {
        let detectors = DetectorArray::haar(5, [m; 4], DistKind::Uniform)?;
        let rho = reduced_density_structured(&branches, &detectors);
        rho.validate()?;
        println!("\nM = {m}: diagonal {:?}", rho.diagonal());
        println!(
            "largest off-diagonal magnitude {:.3e}",
            rho.offdiagonal_norm()
        );
        if m <= 3 {
            let dense = reduced_density_dense_oracle(&branches, &detectors)?;
            println!("dense oracle agrees to {:.1e}", rho.max_deviation(&dense)?);
        }
    }
    Ok(())
}
