//! Tensor products and partial traces on small composite systems.

use bellsim::photon::PhotonPairState;
use bellsim::qstate::{DensityMatrix, Ket};
use num_complex::Complex64;

fn main() -> bellsim::Result<()> {
    let pair = PhotonPairState::singlet().to_ket();
    let rho = DensityMatrix::pure(&pair)?;
    let left = rho.partial_trace(&[0])?;
    println!("one photon of the singlet:\n{}", left.entries());

    // attach an environment qutrit in |2⟩; tracing it out recovers the pair
    let env = Ket::basis(3, 2)?;
    let joint = pair.tensor(&env)?;
    println!("joint dims {:?}, {} amplitudes", joint.dims(), joint.len());
    let back = joint.reduced(&[0, 1])?;
    let diff = (back.entries() - rho.entries())
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    println!("pair recovered after tracing the environment: max deviation {diff:.1e}");

    // a product state stays pure under partial trace
    let plus = Ket::from_amps(vec![Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)])?;
    let product = DensityMatrix::pure(&plus.tensor(&Ket::basis(2, 1)?)?)?;
    let eig = product.partial_trace(&[0])?.operator().eigenvalues();
    println!("eigenvalues of a product-state marginal: {eig:?}");
    Ok(())
}
