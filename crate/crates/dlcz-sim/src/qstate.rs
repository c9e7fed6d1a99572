//! Two-qubit polarization states and measurements.
//!
//! Everything here works in the fixed product basis `{|HH⟩, |HV⟩, |VH⟩, |VV⟩}`
//! (write-out photon first, read-out photon second), with the Bloch-sphere
//! convention H ↔ +z, D ↔ +x, right-circular ↔ +y.

use nalgebra::{Matrix2, Matrix4, Vector3};
use num_complex::Complex64;
use thiserror::Error;

/// Basis index of `|HH⟩`.
pub const HH: usize = 0;
/// Basis index of `|HV⟩`.
pub const HV: usize = 1;
/// Basis index of `|VH⟩`.
pub const VH: usize = 2;
/// Basis index of `|VV⟩`.
pub const VV: usize = 3;

const TRACE_TOL: f64 = 1e-12;
const HERMITICITY_TOL: f64 = 1e-12;
const EIGENVALUE_TOL: f64 = -1e-10;
const BLOCH_NORM_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("trace must be 1, got {0}")]
    NonUnitTrace(f64),
    #[error("matrix is not Hermitian: max |ρ - ρ†| entry = {0:.3e}")]
    NotHermitian(f64),
    #[error("matrix is not positive semidefinite: smallest eigenvalue = {0:.3e}")]
    NotPositive(f64),
    #[error("Bloch vector must have unit norm, got {0}")]
    NotUnitVector(f64),
    #[error("phase angle must be finite")]
    NonFinitePhase,
    #[error("noise parameter {name} = {value} outside [0, 1]")]
    NoiseOutOfRange { name: &'static str, value: f64 },
    #[error("phase-noise width must be finite and non-negative, got {0}")]
    BadPhaseWidth(f64),
}

/// A unit vector on the Bloch sphere, naming the ±1-valued polarization
/// observable `x·σx + y·σy + z·σz`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BlochVector {
    x: f64,
    y: f64,
    z: f64,
}

impl BlochVector {
    /// D/A analyzer axis.
    pub const X: BlochVector = BlochVector { x: 1.0, y: 0.0, z: 0.0 };
    /// R/L analyzer axis.
    pub const Y: BlochVector = BlochVector { x: 0.0, y: 1.0, z: 0.0 };
    /// H/V analyzer axis.
    pub const Z: BlochVector = BlochVector { x: 0.0, y: 0.0, z: 1.0 };

    /// Accepts a vector whose norm is already 1 within `1e-9`.
    pub fn new(x: f64, y: f64, z: f64) -> Result<Self, StateError> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > BLOCH_NORM_TOL {
            return Err(StateError::NotUnitVector(norm));
        }
        Ok(Self { x, y, z })
    }

    /// Rescales an arbitrary non-zero vector onto the unit sphere.
    pub fn normalized(x: f64, y: f64, z: f64) -> Result<Self, StateError> {
        let norm = (x * x + y * y + z * z).sqrt();
        if !norm.is_finite() || norm < 1e-300 {
            return Err(StateError::NotUnitVector(norm));
        }
        Ok(Self { x: x / norm, y: y / norm, z: z / norm })
    }

    /// Unit vector at polar angle `theta` from +z and azimuth `phi` from +x.
    pub fn from_angles(theta: f64, phi: f64) -> Self {
        Self {
            x: theta.sin() * phi.cos(),
            y: theta.sin() * phi.sin(),
            z: theta.cos(),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }

    pub fn z(&self) -> f64 {
        self.z
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.z)
    }

    /// The observable `a·σ` as a 2×2 Hermitian matrix.
    pub fn observable(&self) -> Matrix2<Complex64> {
        let c = Complex64::new;
        Matrix2::new(
            c(self.z, 0.0),
            c(self.x, -self.y),
            c(self.x, self.y),
            c(-self.z, 0.0),
        )
    }
}

/// Interferometer phase entering the entangled-pair coherence, in radians.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PhaseAngle(f64);

impl PhaseAngle {
    /// The stabilized operating point: write and read phases summing to zero.
    pub const ZERO: PhaseAngle = PhaseAngle(0.0);

    pub fn new(radians: f64) -> Result<Self, StateError> {
        if !radians.is_finite() {
            return Err(StateError::NonFinitePhase);
        }
        Ok(Self(radians))
    }

    pub fn radians(&self) -> f64 {
        self.0
    }
}

/// Phenomenological noise channel acting on the photon-pair state: white-noise
/// admixture `p`, damping `d` of the `|HV⟩⟨VH|` coherence, a residual phase
/// offset `phi0`, and a Gaussian phase-noise width `sigma_phi` that folds into
/// the effective damping as `e^{-σ²/2}`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoiseParams {
    p: f64,
    d: f64,
    phi0: f64,
    sigma_phi: f64,
}

impl NoiseParams {
    pub fn new(p: f64, d: f64, phi0: f64, sigma_phi: f64) -> Result<Self, StateError> {
        if !(0.0..=1.0).contains(&p) || !p.is_finite() {
            return Err(StateError::NoiseOutOfRange { name: "p", value: p });
        }
        if !(0.0..=1.0).contains(&d) || !d.is_finite() {
            return Err(StateError::NoiseOutOfRange { name: "d", value: d });
        }
        if !phi0.is_finite() {
            return Err(StateError::NonFinitePhase);
        }
        if !sigma_phi.is_finite() || sigma_phi < 0.0 {
            return Err(StateError::BadPhaseWidth(sigma_phi));
        }
        Ok(Self { p, d, phi0, sigma_phi })
    }

    /// Channel with no white noise, no damping, no phase error.
    pub fn identity() -> Self {
        Self { p: 0.0, d: 1.0, phi0: 0.0, sigma_phi: 0.0 }
    }

    pub fn white_noise_weight(&self) -> f64 {
        self.p
    }

    pub fn damping(&self) -> f64 {
        self.d
    }

    pub fn phase_offset(&self) -> f64 {
        self.phi0
    }

    pub fn phase_width(&self) -> f64 {
        self.sigma_phi
    }

    /// Coherence damping with the Gaussian phase jitter folded in.
    pub fn effective_damping(&self) -> f64 {
        self.d * (-0.5 * self.sigma_phi * self.sigma_phi).exp()
    }
}

/// Joint polarization state of the write-out/read-out photon pair as a 4×4
/// density matrix. Construction validates unit trace, Hermiticity, and
/// positive semidefiniteness.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: Matrix4<Complex64>,
}

impl DensityMatrix {
    pub fn from_matrix(m: Matrix4<Complex64>) -> Result<Self, StateError> {
        let trace = m.trace();
        if (trace.re - 1.0).abs() > TRACE_TOL || trace.im.abs() > TRACE_TOL {
            return Err(StateError::NonUnitTrace(trace.re));
        }
        let dev = (m - m.adjoint()).iter().map(|e| e.norm()).fold(0.0, f64::max);
        if dev > 2.0 * HERMITICITY_TOL {
            return Err(StateError::NotHermitian(dev / 2.0));
        }
        let state = Self { m };
        let lambda_min = state.eigenvalues()[0];
        if lambda_min < EIGENVALUE_TOL {
            return Err(StateError::NotPositive(lambda_min));
        }
        Ok(state)
    }

    /// The fully depolarized state I/4.
    pub fn maximally_mixed() -> Self {
        Self { m: Matrix4::<Complex64>::identity().map(|e| e * Complex64::new(0.25, 0.0)) }
    }

    pub fn matrix(&self) -> &Matrix4<Complex64> {
        &self.m
    }

    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        self.m[(row, col)]
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> [f64; 4] {
        let eig = self.m.symmetric_eigen();
        let mut vals = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2], eig.eigenvalues[3]];
        vals.sort_by(|a, b| a.total_cmp(b));
        vals
    }

    pub fn purity(&self) -> f64 {
        (self.m * self.m).trace().re
    }

    /// Conjugation by a local product unitary `(U_w ⊗ U_r) ρ (U_w ⊗ U_r)†`.
    pub fn conjugate_by_local(
        &self,
        u_write: &Matrix2<Complex64>,
        u_read: &Matrix2<Complex64>,
    ) -> Result<Self, StateError> {
        let u = u_write.kronecker(u_read);
        Self::from_matrix(u * self.m * u.adjoint())
    }
}

/// Joint outcome probabilities for a pair of ±1-valued analyzer settings.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct OutcomeProbabilities {
    pub pp: f64,
    pub pm: f64,
    pub mp: f64,
    pub mm: f64,
}

impl OutcomeProbabilities {
    pub fn as_array(&self) -> [f64; 4] {
        [self.pp, self.pm, self.mp, self.mm]
    }

    /// `p++ + p-- - p+- - p-+`, the correlation these probabilities imply.
    pub fn correlation(&self) -> f64 {
        self.pp + self.mm - self.pm - self.mp
    }
}

/// The photon-pair state `(|HV⟩ + e^{-iφ}|VH⟩)/√2` produced by reading out the
/// heralded collective excitation, as a density matrix.
pub fn make_entangled_pair(phase: PhaseAngle) -> DensityMatrix {
    let mut m = Matrix4::zeros();
    let half = Complex64::new(0.5, 0.0);
    // amplitude vector (0, 1, e^{-iφ}, 0)/√2; ρ[HV,VH] = e^{+iφ}/2
    let coh = Complex64::from_polar(0.5, phase.radians());
    m[(HV, HV)] = half;
    m[(VH, VH)] = half;
    m[(HV, VH)] = coh;
    m[(VH, HV)] = coh.conj();
    DensityMatrix { m }
}

/// Applies the phenomenological channel: damp the `|HV⟩⟨VH|` coherences by the
/// effective damping, rotate their phase by `phi0`, then mix in white noise
/// with weight `p`.
pub fn apply_noise(rho: &DensityMatrix, noise: &NoiseParams) -> Result<DensityMatrix, StateError> {
    let mut m = rho.m;
    let rot = Complex64::from_polar(noise.effective_damping(), noise.phase_offset());
    m[(HV, VH)] *= rot;
    m[(VH, HV)] *= rot.conj();
    let p = noise.white_noise_weight();
    let damped = m.map(|e| e * Complex64::new(1.0 - p, 0.0));
    let mixed =
        damped + Matrix4::<Complex64>::identity().map(|e| e * Complex64::new(0.25 * p, 0.0));
    DensityMatrix::from_matrix(mixed)
}

/// Correlation function `E(a, b) = Tr(ρ (a·σ)⊗(b·σ))`.
pub fn correlation(rho: &DensityMatrix, a: BlochVector, b: BlochVector) -> f64 {
    let obs = a.observable().kronecker(&b.observable());
    let val = (rho.m * obs).trace();
    debug_assert!(val.im.abs() < 1e-10, "correlation has imaginary part {}", val.im);
    val.re
}

/// Probabilities of the four (±, ±) outcomes when the write-out photon is
/// analyzed along `a` and the read-out photon along `b`.
pub fn outcome_probabilities(rho: &DensityMatrix, a: BlochVector, b: BlochVector) -> OutcomeProbabilities {
    let half = Complex64::new(0.5, 0.0);
    let id = Matrix2::identity().map(|e: Complex64| e * half);
    let proj = |v: BlochVector, sign: f64| -> Matrix2<Complex64> {
        id + v.observable().map(|e| e * Complex64::new(0.5 * sign, 0.0))
    };
    let prob = |sa: f64, sb: f64| -> f64 {
        let op = proj(a, sa).kronecker(&proj(b, sb));
        let p = (rho.m * op).trace().re;
        p.clamp(0.0, 1.0)
    };
    OutcomeProbabilities {
        pp: prob(1.0, 1.0),
        pm: prob(1.0, -1.0),
        mp: prob(-1.0, 1.0),
        mm: prob(-1.0, -1.0),
    }
}
