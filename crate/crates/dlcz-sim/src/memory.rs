//! Retrieval-efficiency models for the cavity-assisted memory and the
//! double-exponential decay of efficiency with storage time.

use nalgebra::Matrix4;
use std::f64::consts::PI;
use thiserror::Error;

/// Ring-cavity finesse for H-polarized light; the model curves default to
/// this value.
pub const FINESSE_H: f64 = 43.4;
/// Ring-cavity finesse for V-polarized light.
pub const FINESSE_V: f64 = 44.3;

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("finesse must be positive, got {0}")]
    NonPositiveFinesse(f64),
    #[error("cooperativity must be non-negative, got {0}")]
    NegativeCooperativity(f64),
    #[error("single-mode efficiency must lie in (0, 1), got {0}")]
    EfficiencyOutOfRange(f64),
    #[error("decay amplitude must be non-negative, got {0}")]
    NegativeAmplitude(f64),
    #[error("decay time constant must be positive, got {0}")]
    NonPositiveTau(f64),
    #[error("decay amplitudes sum to {0}, above 1 beyond the 3σ allowance")]
    AmplitudeSumTooLarge(f64),
    #[error("storage time must be non-negative, got {0}")]
    NegativeTime(f64),
    #[error("calibration table needs at least 2 points with strictly increasing trap power")]
    BadCalibration,
}

/// Cavity finesse and ensemble cooperativity for one polarization mode.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MemoryParams {
    finesse: f64,
    cooperativity: f64,
}

impl MemoryParams {
    pub fn new(finesse: f64, cooperativity: f64) -> Result<Self, MemoryError> {
        if !finesse.is_finite() || finesse <= 0.0 {
            return Err(MemoryError::NonPositiveFinesse(finesse));
        }
        if !cooperativity.is_finite() || cooperativity < 0.0 {
            return Err(MemoryError::NegativeCooperativity(cooperativity));
        }
        Ok(Self { finesse, cooperativity })
    }

    pub fn finesse(&self) -> f64 {
        self.finesse
    }

    pub fn cooperativity(&self) -> f64 {
        self.cooperativity
    }

    /// The cavity enhancement factor `2F/π`.
    pub fn cavity_factor(&self) -> f64 {
        2.0 * self.finesse / PI
    }
}

/// Cavity enhancement factor `2F/π` for a given finesse.
pub fn cavity_factor(finesse: f64) -> Result<f64, MemoryError> {
    if !finesse.is_finite() || finesse <= 0.0 {
        return Err(MemoryError::NonPositiveFinesse(finesse));
    }
    Ok(2.0 * finesse / PI)
}

/// Free-space retrieval efficiency `C/(C+1)`.
pub fn free_space_efficiency(cooperativity: f64) -> Result<f64, MemoryError> {
    if !cooperativity.is_finite() || cooperativity < 0.0 {
        return Err(MemoryError::NegativeCooperativity(cooperativity));
    }
    Ok(cooperativity / (cooperativity + 1.0))
}

/// Single-control-mode retrieval efficiency `C_F·C/(C_F·C + 1)` with the
/// cavity enhancement `C_F = 2F/π`.
pub fn single_mode_efficiency(params: &MemoryParams) -> f64 {
    let cfc = params.cavity_factor() * params.cooperativity();
    cfc / (cfc + 1.0)
}

/// Dual-control-mode retrieval efficiency `C_F·C/(C_F·C + C + 2)`: the three
/// denominator terms are retrieval into the cavity mode, into the other
/// phase-matched direction, and spontaneous emission into random directions.
pub fn double_mode_efficiency(params: &MemoryParams) -> f64 {
    let c = params.cooperativity();
    let cfc = params.cavity_factor() * c;
    cfc / (cfc + c + 2.0)
}

/// Dual-mode efficiency from a measured single-mode efficiency at the same
/// trap power: `1/(1 + π/(2F) + 2(1-R_sg)/R_sg)`.
pub fn double_from_single(r_single: f64, finesse: f64) -> Result<f64, MemoryError> {
    if !finesse.is_finite() || finesse <= 0.0 {
        return Err(MemoryError::NonPositiveFinesse(finesse));
    }
    if !r_single.is_finite() || r_single <= 0.0 || r_single >= 1.0 {
        return Err(MemoryError::EfficiencyOutOfRange(r_single));
    }
    Ok(1.0 / (1.0 + PI / (2.0 * finesse) + 2.0 * (1.0 - r_single) / r_single))
}

/// Fitted double-exponential decay `η(t) = A₁e^{-t/τ₁} + A₂e^{-t/τ₂}` with
/// times in milliseconds, optionally carrying the 4×4 fit covariance over
/// `(A₁, A₂, τ₁, τ₂)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayParams {
    a1: f64,
    a2: f64,
    tau1_ms: f64,
    tau2_ms: f64,
    covariance: Option<Matrix4<f64>>,
}

impl DecayParams {
    pub fn new(a1: f64, a2: f64, tau1_ms: f64, tau2_ms: f64) -> Result<Self, MemoryError> {
        Self::with_covariance(a1, a2, tau1_ms, tau2_ms, None)
    }

    pub fn with_covariance(
        a1: f64,
        a2: f64,
        tau1_ms: f64,
        tau2_ms: f64,
        covariance: Option<Matrix4<f64>>,
    ) -> Result<Self, MemoryError> {
        for a in [a1, a2] {
            if !a.is_finite() || a < 0.0 {
                return Err(MemoryError::NegativeAmplitude(a));
            }
        }
        for tau in [tau1_ms, tau2_ms] {
            if !tau.is_finite() || tau <= 0.0 {
                return Err(MemoryError::NonPositiveTau(tau));
            }
        }
        // amplitude sum may exceed 1 only within 3σ of the fitted uncertainty
        let allowance = covariance
            .map(|c| 3.0 * (c[(0, 0)] + c[(1, 1)] + 2.0 * c[(0, 1)]).max(0.0).sqrt())
            .unwrap_or(0.0);
        if a1 + a2 > 1.0 + allowance + 1e-12 {
            return Err(MemoryError::AmplitudeSumTooLarge(a1 + a2));
        }
        Ok(Self { a1, a2, tau1_ms, tau2_ms, covariance })
    }

    /// Dual-control-mode fit parameters for the long-lived lattice memory.
    pub fn dual_mode_reference() -> Self {
        Self::new(0.17, 0.41, 0.060, 703.0).expect("reference parameters are valid")
    }

    /// Single-control-mode fit parameters for the long-lived lattice memory.
    pub fn single_mode_reference() -> Self {
        Self::new(0.26, 0.51, 0.047, 697.0).expect("reference parameters are valid")
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn a2(&self) -> f64 {
        self.a2
    }

    pub fn tau1_ms(&self) -> f64 {
        self.tau1_ms
    }

    pub fn tau2_ms(&self) -> f64 {
        self.tau2_ms
    }

    pub fn covariance(&self) -> Option<&Matrix4<f64>> {
        self.covariance.as_ref()
    }

    /// Initial retrieval efficiency `η(0) = A₁ + A₂`.
    pub fn initial_efficiency(&self) -> f64 {
        self.a1 + self.a2
    }

    /// Re-labels the components so that `τ₁ ≤ τ₂`, permuting the covariance
    /// accordingly.
    pub fn canonicalized(&self) -> Self {
        if self.tau1_ms <= self.tau2_ms {
            return self.clone();
        }
        let covariance = self.covariance.map(|c| {
            // swap (A1,τ1) ↔ (A2,τ2): permutation (0 1)(2 3) on rows and columns
            let perm = [1usize, 0, 3, 2];
            Matrix4::from_fn(|i, j| c[(perm[i], perm[j])])
        });
        Self {
            a1: self.a2,
            a2: self.a1,
            tau1_ms: self.tau2_ms,
            tau2_ms: self.tau1_ms,
            covariance,
        }
    }
}

/// Retrieval efficiency after storing for `t_ms` milliseconds.
pub fn efficiency_at(t_ms: f64, decay: &DecayParams) -> Result<f64, MemoryError> {
    if !t_ms.is_finite() || t_ms < 0.0 {
        return Err(MemoryError::NegativeTime(t_ms));
    }
    Ok(decay.a1 * (-t_ms / decay.tau1_ms).exp() + decay.a2 * (-t_ms / decay.tau2_ms).exp())
}

/// Storage time at which the efficiency has fallen to `η(0)/e`, found by
/// bisection on `[0, 10·max(τ₁, τ₂)]` to relative tolerance 1e-9. The decay is
/// strictly monotone, so the root is unique.
pub fn one_over_e_lifetime(decay: &DecayParams) -> f64 {
    let eta0 = decay.initial_efficiency();
    assert!(eta0 > 0.0, "decay with zero initial efficiency has no 1/e lifetime");
    let target = eta0 / std::f64::consts::E;
    let eta = |t: f64| {
        decay.a1 * (-t / decay.tau1_ms).exp() + decay.a2 * (-t / decay.tau2_ms).exp()
    };
    let mut lo = 0.0;
    let mut hi = 10.0 * decay.tau1_ms.max(decay.tau2_ms);
    debug_assert!(eta(hi) < target);
    while hi - lo > 1e-12 * hi.max(1.0) {
        let mid = 0.5 * (lo + hi);
        if eta(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// User-supplied calibration mapping lattice trap power to cooperativity.
/// Lookup is by linear interpolation between the tabulated points.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CooperativityCalibration {
    points: Vec<(f64, f64)>,
}

impl CooperativityCalibration {
    pub fn new(mut points: Vec<(f64, f64)>) -> Result<Self, MemoryError> {
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        let increasing = points.windows(2).all(|w| w[0].0 < w[1].0);
        let valid = points.iter().all(|&(p, c)| p.is_finite() && c.is_finite() && c >= 0.0);
        if points.len() < 2 || !increasing || !valid {
            return Err(MemoryError::BadCalibration);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Interpolated cooperativity, or `None` outside the tabulated range.
    pub fn cooperativity_at(&self, trap_power: f64) -> Option<f64> {
        let (first, last) = (self.points[0], *self.points.last().unwrap());
        if trap_power < first.0 || trap_power > last.0 {
            return None;
        }
        let idx = self.points.partition_point(|&(p, _)| p <= trap_power);
        if idx == 0 {
            return Some(first.1);
        }
        if idx == self.points.len() {
            return Some(last.1);
        }
        let (p0, c0) = self.points[idx - 1];
        let (p1, c1) = self.points[idx];
        let w = (trap_power - p0) / (p1 - p0);
        Some(c0 + w * (c1 - c0))
    }
}
