//! The singlet written in rotated analyzer bases.
//!
//! Rotating both analyzers together leaves the state unchanged; rotating only
//! one splits the weight into sin²θ for similar and cos²θ for opposite outcomes.

use std::f64::consts::PI;

use bellsim::photon::{expand_in_settings, PhotonPairState};

fn main() {
    let singlet = PhotonPairState::singlet();
    let show = |s: &PhotonPairState| s.amps().map(|a| format!("{:+.4}", a.re)).join(" ");
    println!("singlet over (VV, VH, HV, HH): {}", show(&singlet));
    println!(
        "both analyzers at 0.4 rad:     {}",
        show(&singlet.rotate(0.4, 0.4))
    );

    println!(
        "\n{:>8} {:>12} {:>12} {:>12}",
        "theta", "P(similar)", "sin^2", "P(opposite)"
    );
    for k in 0..=4 {
        let theta = PI / 8.0 * k as f64;
        let a = expand_in_settings(&singlet, theta);
        let a = a.amps();
        let similar = a[0].norm_sqr() + a[3].norm_sqr();
        let opposite = a[1].norm_sqr() + a[2].norm_sqr();
        println!(
            "{theta:>8.4} {similar:>12.6} {:>12.6} {opposite:>12.6}",
            theta.sin().powi(2)
        );
    }
}
