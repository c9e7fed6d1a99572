//! The photon-pair state and its figures of merit.
//!
//! Builds the state that reproduces the measured H/V and D/A visibilities,
//! prints its density matrix, and compares the visibility-based fidelity
//! estimate with the exact overlap.
//!
//! Run with: `cargo run --example entangled_state`

use dlcz_sim::entangle::{
    fidelity_estimate, fidelity_exact, noise_from_visibilities, state_at, visibilities,
    VisibilityPair,
};
use dlcz_sim::qstate::{correlation, BlochVector, PhaseAngle};

fn main() {
    let measured = VisibilityPair::reference();
    println!(
        "measured visibilities (averages over the first second): V_HV = {}, V_DA = {}\n",
        measured.v_hv(),
        measured.v_da()
    );

    let noise = noise_from_visibilities(&measured).unwrap();
    println!(
        "inverted noise model: white-noise weight p = {:.3}, coherence damping d = {:.4}\n",
        noise.white_noise_weight(),
        noise.damping()
    );

    let rho = state_at(0.0, &measured).unwrap();
    println!("density matrix in the {{HH, HV, VH, VV}} basis (real parts):");
    for i in 0..4 {
        let row: Vec<String> = (0..4).map(|j| format!("{:+.4}", rho.entry(i, j).re)).collect();
        println!("  [ {} ]", row.join("  "));
    }

    let v = visibilities(&rho);
    println!("\nround-trip visibilities: V_HV = {:.4}, V_DA = {:.4}, V_RL = {:.4}", v.v_hv, v.v_da, v.v_rl);
    println!("(the model ties the unmeasured circular-basis visibility to V_DA)");

    println!("\ncorrelations:");
    println!("  E(z, z) = {:+.4}", correlation(&rho, BlochVector::Z, BlochVector::Z));
    println!("  E(x, x) = {:+.4}", correlation(&rho, BlochVector::X, BlochVector::X));

    let estimate = fidelity_estimate(&measured);
    let exact = fidelity_exact(&rho, PhaseAngle::ZERO);
    println!("\nfidelity estimate (1 + V_HV + 2 V_DA)/4 = {estimate:.5}");
    println!("exact overlap with the ideal pair        = {exact:.5}");
    println!("(the estimate is exact on this noise family, where V_RL = V_DA)");

    // the plateau model holds the state constant through the first second
    let late = state_at(900.0, &measured).unwrap();
    let v_late = visibilities(&late);
    println!("\nafter 900 ms of storage: V_HV = {:.4}, V_DA = {:.4} (plateau)", v_late.v_hv, v_late.v_da);
}
