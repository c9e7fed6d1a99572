use dlcz_sim::qstate::{BlochVector, DensityMatrix};
use nalgebra::{Matrix2, Matrix4};
use num_complex::Complex64;
use rand::prelude::*;

/// Random full-rank density matrix via GG†/Tr(GG†).
pub fn random_density_matrix(rng: &mut impl Rng) -> DensityMatrix {
    let g = Matrix4::from_fn(|_, _| {
        Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
    });
    let m = g * g.adjoint();
    let norm = m.trace().re;
    DensityMatrix::from_matrix(m.map(|e| e / norm)).expect("GG†/Tr is a valid state")
}

/// Random pure product state |ψ_a⟩⟨ψ_a| ⊗ |ψ_b⟩⟨ψ_b|.
pub fn random_product_state(rng: &mut impl Rng) -> DensityMatrix {
    let qubit = |rng: &mut dyn RngCore| {
        let theta = rng.random::<f64>() * std::f64::consts::PI;
        let phi = rng.random::<f64>() * std::f64::consts::TAU;
        [
            Complex64::new((theta / 2.0).cos(), 0.0),
            Complex64::from_polar((theta / 2.0).sin(), phi),
        ]
    };
    let a = qubit(rng);
    let b = qubit(rng);
    let mut amps = [Complex64::new(0.0, 0.0); 4];
    for i in 0..2 {
        for j in 0..2 {
            amps[2 * i + j] = a[i] * b[j];
        }
    }
    let m = Matrix4::from_fn(|r, c| amps[r] * amps[c].conj());
    DensityMatrix::from_matrix(m).expect("pure product state is valid")
}

/// Uniform-ish random unit Bloch vector.
pub fn random_bloch(rng: &mut impl Rng) -> BlochVector {
    loop {
        let x = rng.random::<f64>() * 2.0 - 1.0;
        let y = rng.random::<f64>() * 2.0 - 1.0;
        let z = rng.random::<f64>() * 2.0 - 1.0;
        if x * x + y * y + z * z > 1e-6 {
            return BlochVector::normalized(x, y, z).unwrap();
        }
    }
}

/// Random SU(2) element `cos(θ/2)·I - i sin(θ/2)·(n·σ)`.
pub fn random_su2(rng: &mut impl Rng) -> Matrix2<Complex64> {
    let n = random_bloch(rng);
    let half = rng.random::<f64>() * std::f64::consts::PI;
    let (s, c) = half.sin_cos();
    let i = Complex64::new(0.0, 1.0);
    Matrix2::identity().map(|e: Complex64| e * Complex64::new(c, 0.0))
        - n.observable().map(|e| e * i * Complex64::new(s, 0.0))
}
