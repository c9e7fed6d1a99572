//! Time-dependent entangled state of the memory node: measured visibilities,
//! the noise parameters that reproduce them, and fidelity with respect to the
//! ideal photon-pair state.

use crate::qstate::{
    apply_noise, correlation, make_entangled_pair, BlochVector, DensityMatrix, NoiseParams,
    PhaseAngle, StateError,
};
use thiserror::Error;

/// Storage time up to which the measured visibilities hold as a plateau.
pub const PLATEAU_END_MS: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum EntangleError {
    #[error("visibility {name} = {value} outside [0, 1]")]
    VisibilityOutOfRange { name: &'static str, value: f64 },
    #[error("v_da = {v_da} exceeds v_hv = {v_hv}: outside the noise-model family")]
    InconsistentVisibilities { v_hv: f64, v_da: f64 },
    #[error("storage time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Coincidence contrast in the H/V and D/A analyzer bases.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VisibilityPair {
    v_hv: f64,
    v_da: f64,
}

impl VisibilityPair {
    pub fn new(v_hv: f64, v_da: f64) -> Result<Self, EntangleError> {
        if !(0.0..=1.0).contains(&v_hv) || !v_hv.is_finite() {
            return Err(EntangleError::VisibilityOutOfRange { name: "v_hv", value: v_hv });
        }
        if !(0.0..=1.0).contains(&v_da) || !v_da.is_finite() {
            return Err(EntangleError::VisibilityOutOfRange { name: "v_da", value: v_da });
        }
        Ok(Self { v_hv, v_da })
    }

    /// Averages measured over the first second of storage: 0.935 and 0.879.
    pub fn reference() -> Self {
        Self { v_hv: 0.935, v_da: 0.879 }
    }

    pub fn v_hv(&self) -> f64 {
        self.v_hv
    }

    pub fn v_da(&self) -> f64 {
        self.v_da
    }
}

/// Visibilities in all three analyzer bases. The circular-basis value is not
/// independently measured; in the noise-model family it equals the D/A value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct Visibilities {
    pub v_hv: f64,
    pub v_da: f64,
    pub v_rl: f64,
}

impl Visibilities {
    pub fn pair(&self) -> Result<VisibilityPair, EntangleError> {
        VisibilityPair::new(self.v_hv, self.v_da)
    }
}

/// Coincidence visibilities of a state in the H/V, D/A, and R/L bases; each
/// equals `|E(a, a)|` for the corresponding analyzer axis.
pub fn visibilities(rho: &DensityMatrix) -> Visibilities {
    Visibilities {
        v_hv: correlation(rho, BlochVector::Z, BlochVector::Z).abs(),
        v_da: correlation(rho, BlochVector::X, BlochVector::X).abs(),
        v_rl: correlation(rho, BlochVector::Y, BlochVector::Y).abs(),
    }
}

/// Inverts the noise model: `p = 1 - V_HV`, `d = V_DA/V_HV`, no phase offset.
/// Fails when `V_DA > V_HV`, which the model family cannot represent. The
/// fully depolarized corner `(0, 0)` maps to `p = 1` with the (then
/// irrelevant) damping pinned at zero.
pub fn noise_from_visibilities(v: &VisibilityPair) -> Result<NoiseParams, EntangleError> {
    if v.v_da > v.v_hv {
        return Err(EntangleError::InconsistentVisibilities { v_hv: v.v_hv, v_da: v.v_da });
    }
    let d = if v.v_hv > 0.0 { v.v_da / v.v_hv } else { 0.0 };
    Ok(NoiseParams::new(1.0 - v.v_hv, d, 0.0, 0.0)?)
}

/// Entanglement-fidelity estimate `(1 + V_HV + 2·V_DA)/4` from the two
/// measured visibilities. Exact on the noise-model family, where the circular
/// visibility equals the D/A one.
pub fn fidelity_estimate(v: &VisibilityPair) -> f64 {
    (1.0 + v.v_hv + 2.0 * v.v_da) / 4.0
}

/// Exact overlap `⟨Ψ(φ)|ρ|Ψ(φ)⟩` with the ideal pair state at phase `φ`.
pub fn fidelity_exact(rho: &DensityMatrix, phase: PhaseAngle) -> f64 {
    let target = make_entangled_pair(phase);
    (target.matrix() * rho.matrix()).trace().re
}

/// State of the photon pair after `t_ms` of storage under the plateau model:
/// the visibilities are constant for the first second. Beyond the plateau the
/// default model keeps them constant as well (no extra noise ramp).
pub fn state_at(t_ms: f64, v: &VisibilityPair) -> Result<DensityMatrix, EntangleError> {
    Ok(state_at_with_ramp(t_ms, v, 0.0)?.0)
}

/// Plateau-model state with a configurable white-noise ramp past one second,
/// standing in for the signal-to-noise degradation seen there. The ramp adds
/// white-noise weight `ramp_per_s · (t - 1 s)` (clamped to 1). The returned
/// flag is true when `t` lies beyond the plateau, where the model is an
/// extrapolation.
pub fn state_at_with_ramp(
    t_ms: f64,
    v: &VisibilityPair,
    ramp_per_s: f64,
) -> Result<(DensityMatrix, bool), EntangleError> {
    if !t_ms.is_finite() || t_ms < 0.0 {
        return Err(EntangleError::NegativeTime(t_ms));
    }
    let noise = noise_from_visibilities(v)?;
    let plateau = apply_noise(&make_entangled_pair(PhaseAngle::ZERO), &noise)?;
    if t_ms <= PLATEAU_END_MS {
        return Ok((plateau, false));
    }
    let extra = (ramp_per_s * (t_ms - PLATEAU_END_MS) / 1000.0).clamp(0.0, 1.0);
    let ramped = apply_noise(&plateau, &NoiseParams::new(extra, 1.0, 0.0, 0.0)?)?;
    Ok((ramped, true))
}
