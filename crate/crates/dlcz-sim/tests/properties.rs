//! Cross-module invariant sweeps over randomly sampled states and settings.

mod common;

use common::{random_bloch, random_density_matrix, random_product_state, random_su2};
use dlcz_sim::bell::{brute_force_chsh, chsh_value, optimal_chsh, TSIRELSON_BOUND};
use dlcz_sim::entangle::{noise_from_visibilities, state_at, visibilities, VisibilityPair};
use dlcz_sim::qstate::{apply_noise, correlation, make_entangled_pair, PhaseAngle};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;

#[test]
fn chsh_optimum_never_exceeds_the_quantum_bound() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    for _ in 0..300 {
        let rho = random_density_matrix(&mut rng);
        let s = optimal_chsh(&rho).s;
        assert!(s <= TSIRELSON_BOUND + 1e-9, "S = {s}");
        assert!(s >= -1e-12);
    }
}

#[test]
fn chsh_optimum_is_invariant_under_local_rotations() {
    let mut rng = ChaCha12Rng::seed_from_u64(103);
    for _ in 0..40 {
        let rho = random_density_matrix(&mut rng);
        let rotated = rho
            .conjugate_by_local(&random_su2(&mut rng), &random_su2(&mut rng))
            .unwrap();
        let s = optimal_chsh(&rho).s;
        let s_rot = optimal_chsh(&rotated).s;
        assert!((s - s_rot).abs() <= 1e-9, "S changed under local rotation: {s} -> {s_rot}");
    }
}

#[test]
fn product_states_respect_the_classical_bound() {
    let mut rng = ChaCha12Rng::seed_from_u64(107);
    for _ in 0..200 {
        let rho = random_product_state(&mut rng);
        let s = optimal_chsh(&rho).s;
        assert!(s <= 2.0 + 1e-9, "product state with S = {s}");
    }
}

#[test]
fn brute_force_is_a_lower_bound_that_the_settings_realize() {
    let mut rng = ChaCha12Rng::seed_from_u64(109);
    for _ in 0..5 {
        let rho = random_density_matrix(&mut rng);
        let eigen_route = optimal_chsh(&rho);
        let scan = brute_force_chsh(&rho, 0.05).unwrap();
        assert!(scan.s <= eigen_route.s + 1e-9);
        // coarse grid: still within a few parts in a thousand
        assert!(eigen_route.s - scan.s <= 8e-3, "gap {}", eigen_route.s - scan.s);
        let realized = chsh_value(&rho, &scan.settings);
        assert!((realized.abs() - scan.s).abs() <= 1e-9);
    }
}

#[test]
fn optimal_settings_realize_the_eigen_value_on_random_states() {
    let mut rng = ChaCha12Rng::seed_from_u64(113);
    for _ in 0..100 {
        let rho = random_density_matrix(&mut rng);
        let result = optimal_chsh(&rho);
        let realized = chsh_value(&rho, &result.settings);
        assert!(
            (realized.abs() - result.s).abs() <= 1e-9,
            "settings realize {realized} but formula says {}",
            result.s
        );
    }
}

#[test]
fn noise_inversion_is_the_identity_on_the_model_family() {
    for i in 1..=10 {
        for j in 0..=10 {
            let v_hv = i as f64 / 10.0;
            let v_da = v_hv * j as f64 / 10.0;
            let pair = VisibilityPair::new(v_hv, v_da).unwrap();
            let rho = state_at(0.0, &pair).unwrap();
            let vis = visibilities(&rho);
            assert!((vis.v_hv - v_hv).abs() <= 1e-12);
            assert!((vis.v_da - v_da).abs() <= 1e-12);

            let noise = noise_from_visibilities(&pair).unwrap();
            let rebuilt = apply_noise(&make_entangled_pair(PhaseAngle::ZERO), &noise).unwrap();
            let dev = (rebuilt.matrix() - rho.matrix())
                .iter()
                .map(|e| e.norm())
                .fold(0.0, f64::max);
            assert!(dev <= 1e-12);
        }
    }
}

#[test]
fn correlations_stay_bounded_on_random_inputs() {
    let mut rng = ChaCha12Rng::seed_from_u64(127);
    for _ in 0..200 {
        let rho = random_density_matrix(&mut rng);
        let a = random_bloch(&mut rng);
        let b = random_bloch(&mut rng);
        let e = correlation(&rho, a, b);
        assert!(e.abs() <= 1.0 + 1e-10);
    }
}
