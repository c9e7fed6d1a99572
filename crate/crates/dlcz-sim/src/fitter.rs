//! Weighted nonlinear least-squares fitting of the double-exponential decay
//! model, with Levenberg-style damping and parameter covariance from the
//! Gauss-Newton normal matrix.

use crate::memory::DecayParams;
use nalgebra::{Matrix4, Vector4};
use thiserror::Error;

const INITIAL_LAMBDA: f64 = 1e-3;
const LAMBDA_ACCEPT_FACTOR: f64 = 0.1;
const LAMBDA_REJECT_FACTOR: f64 = 10.0;
const MAX_LAMBDA: f64 = 1e15;
const MAX_ITERATIONS: usize = 500;
const RELATIVE_CHI2_TOL: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("dataset needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("storage times must be strictly increasing")]
    NonIncreasingTimes,
    #[error("every point needs a positive finite standard error")]
    BadSigma,
    #[error("point has non-finite coordinates")]
    NonFinitePoint,
    #[error("initial guess must have positive time constants")]
    BadInitialGuess,
    #[error("normal matrix is singular: dataset does not constrain the model")]
    SingularNormalMatrix,
    #[error("fitted amplitudes are unphysical: {0}")]
    UnphysicalResult(#[from] crate::memory::MemoryError),
}

/// One measured efficiency point: storage time, efficiency, standard error.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct DataPoint {
    pub t_ms: f64,
    pub eta: f64,
    pub sigma: f64,
}

/// Efficiency-versus-storage-time data with per-point errors.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayDataset {
    points: Vec<DataPoint>,
}

impl DecayDataset {
    pub fn new(points: Vec<DataPoint>) -> Result<Self, FitError> {
        if points.len() < 5 {
            return Err(FitError::TooFewPoints(points.len()));
        }
        if points
            .iter()
            .any(|p| !p.t_ms.is_finite() || !p.eta.is_finite() || !p.sigma.is_finite())
        {
            return Err(FitError::NonFinitePoint);
        }
        if points.windows(2).any(|w| w[0].t_ms >= w[1].t_ms) {
            return Err(FitError::NonIncreasingTimes);
        }
        if points.iter().any(|p| p.sigma <= 0.0) {
            return Err(FitError::BadSigma);
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Outcome of a fit. `converged` is false when the iteration budget ran out
/// before the relative χ² change fell below tolerance; the parameters then
/// hold the best point found.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: DecayParams,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn reduced_chi2(&self) -> f64 {
        self.chi2 / self.dof.max(1) as f64
    }
}

/// `Σ((η(tᵢ) - ηᵢ)/σᵢ)²` for the given parameters.
pub fn chi_square(data: &DecayDataset, params: &DecayParams) -> f64 {
    data.points
        .iter()
        .map(|p| {
            let model = params.a1() * (-p.t_ms / params.tau1_ms()).exp()
                + params.a2() * (-p.t_ms / params.tau2_ms()).exp();
            let r = (model - p.eta) / p.sigma;
            r * r
        })
        .sum()
}

// Internal parameter vector (A1, A2, ln τ1, ln τ2). Optimizing log-times keeps
// the constants positive; amplitudes are clamped at zero after each step.
#[derive(Clone, Copy)]
struct FitVector {
    a1: f64,
    a2: f64,
    ln_tau1: f64,
    ln_tau2: f64,
}

impl FitVector {
    fn from_params(p: &DecayParams) -> Self {
        Self {
            a1: p.a1(),
            a2: p.a2(),
            ln_tau1: p.tau1_ms().ln(),
            ln_tau2: p.tau2_ms().ln(),
        }
    }

    fn stepped(&self, delta: &Vector4<f64>) -> Self {
        Self {
            a1: (self.a1 + delta[0]).max(0.0),
            a2: (self.a2 + delta[1]).max(0.0),
            ln_tau1: self.ln_tau1 + delta[2],
            ln_tau2: self.ln_tau2 + delta[3],
        }
    }

    fn tau1(&self) -> f64 {
        self.ln_tau1.exp()
    }

    fn tau2(&self) -> f64 {
        self.ln_tau2.exp()
    }

    fn chi2(&self, data: &DecayDataset) -> f64 {
        let (t1, t2) = (self.tau1(), self.tau2());
        data.points
            .iter()
            .map(|p| {
                let model = self.a1 * (-p.t_ms / t1).exp() + self.a2 * (-p.t_ms / t2).exp();
                let r = (model - p.eta) / p.sigma;
                r * r
            })
            .sum()
    }

    /// Normal matrix JᵀJ and gradient side Jᵀr of the weighted residuals in
    /// the internal parameterization.
    fn normal_equations(&self, data: &DecayDataset) -> (Matrix4<f64>, Vector4<f64>) {
        let (t1, t2) = (self.tau1(), self.tau2());
        let mut jtj = Matrix4::zeros();
        let mut jtr = Vector4::zeros();
        for p in &data.points {
            let e1 = (-p.t_ms / t1).exp();
            let e2 = (-p.t_ms / t2).exp();
            let model = self.a1 * e1 + self.a2 * e2;
            let r = (model - p.eta) / p.sigma;
            // ∂model/∂(A, ln τ) = (e^{-t/τ}, A e^{-t/τ} t/τ)
            let j = Vector4::new(
                e1 / p.sigma,
                e2 / p.sigma,
                self.a1 * e1 * (p.t_ms / t1) / p.sigma,
                self.a2 * e2 * (p.t_ms / t2) / p.sigma,
            );
            jtj += j * j.transpose();
            jtr += j * r;
        }
        (jtj, jtr)
    }
}

/// Fits `η(t) = A₁e^{-t/τ₁} + A₂e^{-t/τ₂}` to the dataset by damped least
/// squares from the given starting point. The result is canonicalized to
/// `τ₁ ≤ τ₂` and carries the covariance `(JᵀWJ)⁻¹ · χ²/(N-4)` in the natural
/// `(A₁, A₂, τ₁, τ₂)` parameters when the normal matrix is invertible.
pub fn fit_double_exponential(data: &DecayDataset, init: &DecayParams) -> Result<FitResult, FitError> {
    if init.tau1_ms() <= 0.0 || init.tau2_ms() <= 0.0 {
        return Err(FitError::BadInitialGuess);
    }

    let mut x = FitVector::from_params(init);
    let mut chi2 = x.chi2(data);
    let mut lambda = INITIAL_LAMBDA;
    let mut converged = false;
    let mut iterations = 0;
    let mut ever_solved = false;

    for iter in 1..=MAX_ITERATIONS {
        iterations = iter;
        let (jtj, jtr) = x.normal_equations(data);
        let diag_max = (0..4).map(|k| jtj[(k, k)]).fold(0.0, f64::max);
        if diag_max <= 0.0 || !diag_max.is_finite() {
            return Err(FitError::SingularNormalMatrix);
        }

        // inner loop: raise damping until a step is accepted or damping tops out
        let mut accepted = false;
        while lambda <= MAX_LAMBDA {
            let mut damped = jtj;
            for k in 0..4 {
                // Marquardt scaling with a floor so zero-curvature directions stay solvable
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12 * diag_max);
            }
            let step = match damped.cholesky() {
                Some(ch) => ch.solve(&(-jtr)),
                None => match damped.lu().solve(&(-jtr)) {
                    Some(s) => s,
                    None => {
                        lambda *= LAMBDA_REJECT_FACTOR;
                        continue;
                    }
                },
            };
            ever_solved = true;
            let candidate = x.stepped(&step);
            let new_chi2 = candidate.chi2(data);
            if new_chi2.is_finite() && new_chi2 < chi2 {
                let rel_drop = (chi2 - new_chi2) / chi2.max(f64::MIN_POSITIVE);
                x = candidate;
                chi2 = new_chi2;
                lambda = (lambda * LAMBDA_ACCEPT_FACTOR).max(1e-15);
                accepted = true;
                if rel_drop < RELATIVE_CHI2_TOL {
                    converged = true;
                }
                break;
            }
            lambda *= LAMBDA_REJECT_FACTOR;
        }

        if !accepted {
            if !ever_solved {
                return Err(FitError::SingularNormalMatrix);
            }
            // no downhill step exists at any damping: we are at the optimum
            converged = true;
        }
        if converged {
            break;
        }
    }

    let covariance = covariance_at(data, &x, chi2);
    let params =
        DecayParams::with_covariance(x.a1, x.a2, x.tau1(), x.tau2(), covariance)?.canonicalized();
    Ok(FitResult {
        params,
        chi2,
        dof: data.len().saturating_sub(4),
        iterations,
        converged,
    })
}

/// Covariance in natural `(A₁, A₂, τ₁, τ₂)` units, or `None` when the normal
/// matrix is too degenerate to invert (e.g. a vanishing amplitude).
fn covariance_at(data: &DecayDataset, x: &FitVector, chi2: f64) -> Option<Matrix4<f64>> {
    let (t1, t2) = (x.tau1(), x.tau2());
    let mut jtj = Matrix4::zeros();
    for p in &data.points {
        let e1 = (-p.t_ms / t1).exp();
        let e2 = (-p.t_ms / t2).exp();
        // ∂model/∂(A, τ) = (e^{-t/τ}, A e^{-t/τ} t/τ²)
        let j = Vector4::new(
            e1 / p.sigma,
            e2 / p.sigma,
            x.a1 * e1 * p.t_ms / (t1 * t1) / p.sigma,
            x.a2 * e2 * p.t_ms / (t2 * t2) / p.sigma,
        );
        jtj += j * j.transpose();
    }
    let dof = data.len().saturating_sub(4).max(1) as f64;
    jtj.try_inverse().map(|inv| inv * (chi2 / dof))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::memory::efficiency_at;
    use approx::assert_abs_diff_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha12Rng;

    fn log_spaced(n: usize, lo: f64, hi: f64) -> Vec<f64> {
        let (l0, l1) = (lo.ln(), hi.ln());
        (0..n)
            .map(|i| (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp())
            .collect()
    }

    pub(crate) fn synthetic_dataset(truth: &DecayParams, sigma: f64, noise_seed: Option<u64>) -> DecayDataset {
        let mut rng = noise_seed.map(ChaCha12Rng::seed_from_u64);
        let points = log_spaced(20, 0.005, 2000.0)
            .into_iter()
            .map(|t| {
                let mut eta = efficiency_at(t, truth).unwrap();
                if let Some(rng) = rng.as_mut() {
                    // Box-Muller normal draw
                    let u1: f64 = rng.random::<f64>().max(1e-12);
                    let u2: f64 = rng.random();
                    eta += sigma * (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
                }
                DataPoint { t_ms: t, eta, sigma }
            })
            .collect();
        DecayDataset::new(points).unwrap()
    }

    fn generic_init() -> DecayParams {
        DecayParams::new(0.3, 0.3, 0.5, 300.0).unwrap()
    }

    #[test]
    fn dataset_validation() {
        let good = synthetic_dataset(&DecayParams::dual_mode_reference(), 0.01, None);
        assert_eq!(good.len(), 20);

        let mut pts: Vec<_> = good.points().to_vec();
        pts.truncate(3);
        assert!(matches!(DecayDataset::new(pts), Err(FitError::TooFewPoints(3))));

        let mut pts: Vec<_> = good.points().to_vec();
        pts[3].t_ms = pts[2].t_ms;
        assert!(matches!(DecayDataset::new(pts), Err(FitError::NonIncreasingTimes)));

        let mut pts: Vec<_> = good.points().to_vec();
        pts[0].sigma = 0.0;
        assert!(matches!(DecayDataset::new(pts), Err(FitError::BadSigma)));
    }

    #[test]
    fn chi_square_of_generating_params_is_zero() {
        let truth = DecayParams::dual_mode_reference();
        let data = synthetic_dataset(&truth, 0.01, None);
        assert!(chi_square(&data, &truth) < 1e-18);
    }

    #[test]
    fn chi_square_of_one_sigma_offset_is_one() {
        let truth = DecayParams::dual_mode_reference();
        let data = synthetic_dataset(&truth, 0.01, None);
        let mut pts = data.points().to_vec();
        pts[7].eta += pts[7].sigma;
        let shifted = DecayDataset::new(pts).unwrap();
        assert_abs_diff_eq!(chi_square(&shifted, &truth), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn noiseless_fit_recovers_generating_parameters() {
        let truth = DecayParams::dual_mode_reference();
        let data = synthetic_dataset(&truth, 0.01, None);
        let fit = fit_double_exponential(&data, &generic_init()).unwrap();
        assert!(fit.converged);
        let p = &fit.params;
        assert_abs_diff_eq!(p.a1() / truth.a1(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.a2() / truth.a2(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.tau1_ms() / truth.tau1_ms(), 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(p.tau2_ms() / truth.tau2_ms(), 1.0, epsilon = 1e-6);
        assert!(p.covariance().is_some());
    }

    #[test]
    fn noisy_fit_covers_the_long_time_constant() {
        // 1σ coverage of τ₂ should hold in roughly 68% of repetitions; demand ≥ 60%.
        let truth = DecayParams::dual_mode_reference();
        let mut covered = 0;
        let runs = 100;
        for seed in 0..runs {
            let data = synthetic_dataset(&truth, 0.01, Some(seed));
            let fit = fit_double_exponential(&data, &generic_init()).unwrap();
            let cov = fit.params.covariance().expect("covariance available");
            let sigma_tau2 = cov[(3, 3)].sqrt();
            if (fit.params.tau2_ms() - truth.tau2_ms()).abs() <= sigma_tau2 {
                covered += 1;
            }
        }
        assert!(covered >= 60, "τ₂ covered in only {covered}/{runs} runs");
    }

    #[test]
    fn nested_single_exponential_model_is_recovered() {
        let truth = DecayParams::new(0.0, 0.58, 1.0, 500.0).unwrap();
        let data = synthetic_dataset(&truth, 0.005, None);
        let init = DecayParams::new(0.05, 0.5, 0.5, 300.0).unwrap();
        let fit = fit_double_exponential(&data, &init).unwrap();
        assert!(fit.params.a1() <= 0.01, "A1 = {}", fit.params.a1());
        assert_abs_diff_eq!(fit.params.tau2_ms() / 500.0, 1.0, epsilon = 0.01);
    }

    #[test]
    fn reduced_chi_square_is_near_one_for_matched_noise() {
        let truth = DecayParams::dual_mode_reference();
        for seed in [101, 202, 303, 404, 505] {
            let data = synthetic_dataset(&truth, 0.01, Some(seed));
            let fit = fit_double_exponential(&data, &generic_init()).unwrap();
            let reduced = fit.reduced_chi2();
            assert!((0.2..=3.0).contains(&reduced), "seed {seed}: χ²/dof = {reduced}");
        }
    }

    #[test]
    fn fit_is_invariant_under_time_rescaling() {
        let truth = DecayParams::dual_mode_reference();
        let data = synthetic_dataset(&truth, 0.01, Some(42));
        let fit = fit_double_exponential(&data, &generic_init()).unwrap();

        let k = 1000.0;
        let scaled_pts = data
            .points()
            .iter()
            .map(|p| DataPoint { t_ms: p.t_ms * k, ..*p })
            .collect();
        let scaled_data = DecayDataset::new(scaled_pts).unwrap();
        let scaled_init =
            DecayParams::new(0.3, 0.3, 0.5 * k, 300.0 * k).unwrap();
        let scaled_fit = fit_double_exponential(&scaled_data, &scaled_init).unwrap();

        assert_abs_diff_eq!(scaled_fit.params.a1(), fit.params.a1(), epsilon = 1e-7);
        assert_abs_diff_eq!(scaled_fit.params.a2(), fit.params.a2(), epsilon = 1e-7);
        assert_abs_diff_eq!(scaled_fit.params.tau2_ms() / k, fit.params.tau2_ms(), epsilon = 1e-4 * fit.params.tau2_ms());
        assert_abs_diff_eq!(scaled_fit.chi2, fit.chi2, epsilon = 1e-6 * fit.chi2.max(1.0));
    }

    #[test]
    fn swapped_init_labels_give_the_same_canonical_fit() {
        let truth = DecayParams::dual_mode_reference();
        let data = synthetic_dataset(&truth, 0.01, Some(7));
        let fit_a = fit_double_exponential(&data, &DecayParams::new(0.3, 0.3, 0.5, 300.0).unwrap()).unwrap();
        let fit_b = fit_double_exponential(&data, &DecayParams::new(0.3, 0.3, 300.0, 0.5).unwrap()).unwrap();
        assert!(fit_a.params.tau1_ms() <= fit_a.params.tau2_ms());
        assert!(fit_b.params.tau1_ms() <= fit_b.params.tau2_ms());
        assert_abs_diff_eq!(fit_a.params.tau2_ms(), fit_b.params.tau2_ms(), epsilon = 1e-5 * fit_a.params.tau2_ms());
        assert_abs_diff_eq!(fit_a.params.a1(), fit_b.params.a1(), epsilon = 1e-6);
    }

    #[test]
    fn degenerate_dataset_reports_singular_matrix() {
        // every exponential underflows to zero at these times, so the model
        // is completely insensitive to all four parameters
        let points = (0..6)
            .map(|i| DataPoint { t_ms: 1e7 + i as f64, eta: 0.5, sigma: 1.0 })
            .collect();
        let data = DecayDataset::new(points).unwrap();
        let init = DecayParams::new(0.1, 0.1, 1e-3, 1e-2).unwrap();
        assert!(matches!(
            fit_double_exponential(&data, &init),
            Err(FitError::SingularNormalMatrix)
        ));
    }
}
