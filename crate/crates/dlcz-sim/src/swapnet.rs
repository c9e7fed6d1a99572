//! Composition of two memory nodes into a heralded remote entangled pair: the
//! write-out photons from both nodes meet at a Bell-state measurement, which
//! projects the two read-out qubits into an entangled joint state. This whole
//! module is an extension beyond the single-node measurements; every default
//! is labeled as such in the emitted reports.

use crate::entangle::{state_at, EntangleError, VisibilityPair};
use crate::memory::{efficiency_at, DecayParams, MemoryError};
use crate::qstate::{DensityMatrix, StateError};
use crate::sequencer::{SequenceConfig, SequencerError};
use nalgebra::{DMatrix, Matrix2, Matrix4};
use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SwapError {
    #[error("link transmission {0} outside [0, 1]")]
    BadTransmission(f64),
    #[error("interference visibility {0} outside [0, 1]")]
    BadInterferenceVisibility(f64),
    #[error("Bell projection has zero weight: write-out photons never coincide")]
    DegenerateProjection,
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Entangle(#[from] EntangleError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error(transparent)]
    Sequencer(#[from] SequencerError),
}

/// One memory node as seen by the swapping station.
#[derive(Debug, Clone)]
pub struct NodeSpec {
    pub decay: DecayParams,
    pub visib: VisibilityPair,
    pub seq: SequenceConfig,
    pub link_transmission: f64,
}

impl NodeSpec {
    pub fn validate(&self) -> Result<(), SwapError> {
        if !(0.0..=1.0).contains(&self.link_transmission) || !self.link_transmission.is_finite() {
            return Err(SwapError::BadTransmission(self.link_transmission));
        }
        self.seq.validate()?;
        Ok(())
    }

    /// Node with the measured dual-mode decay and visibilities and the
    /// default sequence timings.
    pub fn paper_default() -> Self {
        Self {
            decay: DecayParams::dual_mode_reference(),
            visib: VisibilityPair::reference(),
            seq: SequenceConfig::default(),
            link_transmission: 1.0,
        }
    }

    /// Lossless node with perfect visibilities, unit retrieval efficiency,
    /// instant loading, and certain write-out detection.
    pub fn ideal() -> Self {
        Self {
            decay: DecayParams::new(0.0, 1.0, 1.0, 1e15).expect("valid"),
            visib: VisibilityPair::new(1.0, 1.0).expect("valid"),
            seq: SequenceConfig {
                loading_time_s: 0.0,
                p_writeout: 1.0,
                storage_time_ms: 0.0,
                ..SequenceConfig::default()
            },
            link_transmission: 1.0,
        }
    }
}

/// Which Bell outcomes the measurement station can herald. Linear optics
/// distinguishes only the two Ψ outcomes, capping the success probability at
/// one half; an idealized measurement resolves all four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BsmMode {
    LinearOptics,
    Ideal,
}

impl BsmMode {
    pub fn success_ceiling(&self) -> f64 {
        match self {
            BsmMode::LinearOptics => 0.5,
            BsmMode::Ideal => 1.0,
        }
    }
}

/// Station-side knobs for the swap.
#[derive(Debug, Clone, Copy)]
pub struct SwapOptions {
    pub bsm: BsmMode,
    /// Two-photon interference visibility; scales the coherences created by
    /// the Bell projection. 1 means perfectly indistinguishable photons.
    pub interference_visibility: f64,
}

impl Default for SwapOptions {
    fn default() -> Self {
        Self { bsm: BsmMode::LinearOptics, interference_visibility: 1.0 }
    }
}

/// Result of composing two nodes at a given storage time.
#[derive(Debug, Clone)]
pub struct SwapOutcome {
    /// Probability that one joint write-herald converts into a delivered
    /// entangled pair: BSM ceiling × link transmissions × retrieval
    /// efficiencies × detector efficiencies.
    pub success_prob: f64,
    /// Read-pair state conditioned on a heralded Bell outcome, after the
    /// standard Pauli correction.
    pub joint_state: DensityMatrix,
    /// Expected delivered pairs per second including loading.
    pub end_to_end_rate_hz: f64,
}

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

// Bell amplitudes on the two write-out photons, indexed by 2·w_A + w_B,
// paired with the Pauli correction on the second read qubit that maps the
// heralded read-pair state onto the Ψ⁺ target.
fn bell_outcomes(mode: BsmMode) -> Vec<([Complex64; 4], Matrix2<Complex64>)> {
    let r = |x: f64| Complex64::new(x, 0.0);
    let id = Matrix2::identity();
    let sx = Matrix2::new(r(0.0), r(1.0), r(1.0), r(0.0));
    let sz = Matrix2::new(r(1.0), r(0.0), r(0.0), r(-1.0));
    let psi_plus = [r(0.0), r(INV_SQRT2), r(INV_SQRT2), r(0.0)];
    let psi_minus = [r(0.0), r(INV_SQRT2), r(-INV_SQRT2), r(0.0)];
    let phi_plus = [r(INV_SQRT2), r(0.0), r(0.0), r(INV_SQRT2)];
    let phi_minus = [r(INV_SQRT2), r(0.0), r(0.0), r(-INV_SQRT2)];
    match mode {
        BsmMode::LinearOptics => vec![(psi_plus, id), (psi_minus, sz)],
        BsmMode::Ideal => vec![
            (psi_plus, id),
            (psi_minus, sz),
            (phi_plus, sx),
            (phi_minus, sx * sz),
        ],
    }
}

/// Projects the two write-out photons of `ρ_A ⊗ ρ_B` onto the heralded Bell
/// outcomes and returns the normalized, Pauli-corrected read-pair state along
/// with the total heralding fraction. This is the direct 16×16 tensor-product
/// computation; no factorization shortcut is assumed.
pub fn bsm_project(
    rho_a: &DensityMatrix,
    rho_b: &DensityMatrix,
    opts: &SwapOptions,
) -> Result<(DensityMatrix, f64), SwapError> {
    let zeta = opts.interference_visibility;
    if !(0.0..=1.0).contains(&zeta) || !zeta.is_finite() {
        return Err(SwapError::BadInterferenceVisibility(zeta));
    }

    let a_dyn = DMatrix::from_fn(4, 4, |i, j| rho_a.entry(i, j));
    let b_dyn = DMatrix::from_fn(4, 4, |i, j| rho_b.entry(i, j));
    // index layout: 8·w_A + 4·r_A + 2·w_B + r_B
    let full = a_dyn.kronecker(&b_dyn);

    let mut accumulated = Matrix4::<Complex64>::zeros();
    let mut total_weight = 0.0;
    for (bell, correction) in bell_outcomes(opts.bsm) {
        let mut projected = Matrix4::<Complex64>::zeros();
        for wa in 0..2usize {
            for wb in 0..2usize {
                let amp = bell[2 * wa + wb].conj();
                if amp.norm_sqr() == 0.0 {
                    continue;
                }
                for wa2 in 0..2usize {
                    for wb2 in 0..2usize {
                        let amp2 = bell[2 * wa2 + wb2];
                        if amp2.norm_sqr() == 0.0 {
                            continue;
                        }
                        // distinct which-path components only interfere up to ζ
                        let weight = if (wa, wb) == (wa2, wb2) { 1.0 } else { zeta };
                        let factor = amp * amp2 * Complex64::new(weight, 0.0);
                        for ra in 0..2usize {
                            for rb in 0..2usize {
                                for ra2 in 0..2usize {
                                    for rb2 in 0..2usize {
                                        let row = 8 * wa + 4 * ra + 2 * wb + rb;
                                        let col = 8 * wa2 + 4 * ra2 + 2 * wb2 + rb2;
                                        projected[(2 * ra + rb, 2 * ra2 + rb2)] +=
                                            factor * full[(row, col)];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        let weight = projected.trace().re;
        let u = Matrix2::identity().kronecker(&correction);
        accumulated += u * projected * u.adjoint();
        total_weight += weight;
    }

    if total_weight <= 1e-300 {
        return Err(SwapError::DegenerateProjection);
    }
    let normalized = accumulated.map(|e| e / Complex64::new(total_weight, 0.0));
    Ok((DensityMatrix::from_matrix(normalized)?, total_weight))
}

/// Swap with default station options (linear-optics BSM, perfect photon
/// indistinguishability).
pub fn swap(a: &NodeSpec, b: &NodeSpec, t_store_ms: f64) -> Result<SwapOutcome, SwapError> {
    swap_with(a, b, t_store_ms, &SwapOptions::default())
}

/// Full swap: builds each node's stored state at `t_store_ms`, projects the
/// write-out photons onto the heralded Bell outcomes, and accounts for losses.
/// A fully lossy link yields `success_prob` and rate of zero rather than an
/// error.
pub fn swap_with(
    a: &NodeSpec,
    b: &NodeSpec,
    t_store_ms: f64,
    opts: &SwapOptions,
) -> Result<SwapOutcome, SwapError> {
    a.validate()?;
    b.validate()?;
    let rho_a = state_at(t_store_ms, &a.visib)?;
    let rho_b = state_at(t_store_ms, &b.visib)?;
    let (joint_state, _herald_fraction) = bsm_project(&rho_a, &rho_b, opts)?;
    let success_prob = success_probability(a, b, t_store_ms, opts)?;
    let end_to_end_rate_hz = end_to_end_rate_with(a, b, t_store_ms, opts)?;
    Ok(SwapOutcome { success_prob, joint_state, end_to_end_rate_hz })
}

/// `ceiling × T_A·T_B × η_A(t)·η_B(t) × detector factors`.
fn success_probability(
    a: &NodeSpec,
    b: &NodeSpec,
    t_store_ms: f64,
    opts: &SwapOptions,
) -> Result<f64, SwapError> {
    let eta_a = efficiency_at(t_store_ms, &a.decay)?;
    let eta_b = efficiency_at(t_store_ms, &b.decay)?;
    Ok(opts.bsm.success_ceiling()
        * a.link_transmission
        * b.link_transmission
        * eta_a
        * eta_b
        * a.seq.detector_efficiency
        * b.seq.detector_efficiency)
}

/// Expected delivered pairs per second with default station options.
pub fn end_to_end_rate(a: &NodeSpec, b: &NodeSpec, t_store_ms: f64) -> Result<f64, SwapError> {
    end_to_end_rate_with(a, b, t_store_ms, &SwapOptions::default())
}

/// Delivered-pair rate: both nodes load in parallel, attempt writes in
/// lockstep until both write-out photons coincide in the same slot, store for
/// `t_store_ms`, and retrieve. The joint-herald cycle statistics follow the
/// truncated-geometric attempt model of the single-node sequencer.
pub fn end_to_end_rate_with(
    a: &NodeSpec,
    b: &NodeSpec,
    t_store_ms: f64,
    opts: &SwapOptions,
) -> Result<f64, SwapError> {
    a.validate()?;
    b.validate()?;
    let q = a.seq.p_writeout * b.seq.p_writeout;
    if q == 0.0 {
        return Ok(0.0);
    }
    let attempts = a.seq.max_attempts.min(b.seq.max_attempts);
    let p_joint = 1.0 - (1.0 - q).powi(attempts as i32);
    let expected_slots = p_joint / q;
    let period_s = a.seq.write_period_us.max(b.seq.write_period_us) * 1e-6;
    let loading_s = a.seq.loading_time_s.max(b.seq.loading_time_s);
    let relock_ms = if t_store_ms > 100.0 {
        a.seq.relock_pause_ms.max(b.seq.relock_pause_ms)
    } else {
        0.0
    };
    let cycle_s = loading_s + expected_slots * period_s + p_joint * (t_store_ms + relock_ms) * 1e-3;
    Ok(p_joint / cycle_s * success_probability(a, b, t_store_ms, opts)?)
}
