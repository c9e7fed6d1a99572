//! Seeded Monte Carlo simulation of the experimental cycle: atom loading,
//! alternating pump/write attempts until a write-out photon heralds storage,
//! a programmable storage delay, cavity-assisted read-out, detection with
//! optional dark counts, and coincidence tallies with wall-clock accounting.

use crate::bell::{ChshSettings, CoincidenceTable};
use crate::entangle::{state_at, EntangleError, VisibilityPair};
use crate::memory::{efficiency_at, DecayParams, MemoryError};
use crate::qstate::{outcome_probabilities, BlochVector, OutcomeProbabilities};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use std::io::Write;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SequencerError {
    #[error("{name} = {value} is not a valid probability")]
    InvalidProbability { name: &'static str, value: f64 },
    #[error("{name} = {value} must be non-negative")]
    NegativeTime { name: &'static str, value: f64 },
    #[error("max_attempts must be at least 1")]
    ZeroAttempts,
    #[error("n_trials must be at least 1")]
    ZeroTrials,
    #[error("event log is empty")]
    EmptyLog,
    #[error(transparent)]
    Entangle(#[from] EntangleError),
    #[error(transparent)]
    Memory(#[from] MemoryError),
    #[error("failed to write event log: {0}")]
    Io(#[from] std::io::Error),
}

/// Analyzer basis applied to both photons of a coincidence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarizationBasis {
    Hv,
    Da,
    Rl,
}

impl PolarizationBasis {
    pub fn axis(&self) -> BlochVector {
        match self {
            PolarizationBasis::Hv => BlochVector::Z,
            PolarizationBasis::Da => BlochVector::X,
            PolarizationBasis::Rl => BlochVector::Y,
        }
    }
}

/// What the analyzers measure: a fixed basis pair, or the four CHSH setting
/// pairs chosen uniformly at random per heralded trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeasurementPlan {
    Basis(PolarizationBasis),
    Chsh(ChshSettings),
}

impl MeasurementPlan {
    fn setting_pairs(&self) -> Vec<(BlochVector, BlochVector)> {
        match self {
            MeasurementPlan::Basis(basis) => vec![(basis.axis(), basis.axis())],
            MeasurementPlan::Chsh(settings) => settings
                .pairs()
                .iter()
                .map(|&(a, b, _)| (a, b))
                .collect(),
        }
    }
}

/// Full parameter set for a simulation run. Times follow the quoted units:
/// loading in seconds, write period in microseconds, storage and relock pause
/// in milliseconds.
#[derive(Debug, Clone)]
pub struct SequenceConfig {
    pub loading_time_s: f64,
    pub write_period_us: f64,
    pub p_writeout: f64,
    pub max_attempts: u32,
    pub storage_time_ms: f64,
    pub relock_pause_ms: f64,
    pub detector_efficiency: f64,
    pub dark_count_prob: f64,
    pub decay: DecayParams,
    pub visib: VisibilityPair,
    pub plan: MeasurementPlan,
    pub seed: u64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            loading_time_s: 1.5,
            write_period_us: 5.0,
            p_writeout: 0.004,
            max_attempts: 400,
            storage_time_ms: 0.005,
            relock_pause_ms: 3.0,
            detector_efficiency: 1.0,
            dark_count_prob: 0.0,
            decay: DecayParams::dual_mode_reference(),
            visib: VisibilityPair::reference(),
            plan: MeasurementPlan::Basis(PolarizationBasis::Hv),
            seed: 0,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<(), SequencerError> {
        for (name, value) in [
            ("p_writeout", self.p_writeout),
            ("detector_efficiency", self.detector_efficiency),
        ] {
            if !(0.0..=1.0).contains(&value) || !value.is_finite() {
                return Err(SequencerError::InvalidProbability { name, value });
            }
        }
        if !(0.0..1.0).contains(&self.dark_count_prob) || !self.dark_count_prob.is_finite() {
            return Err(SequencerError::InvalidProbability {
                name: "dark_count_prob",
                value: self.dark_count_prob,
            });
        }
        for (name, value) in [
            ("loading_time_s", self.loading_time_s),
            ("write_period_us", self.write_period_us),
            ("storage_time_ms", self.storage_time_ms),
            ("relock_pause_ms", self.relock_pause_ms),
        ] {
            if !value.is_finite() || value < 0.0 {
                return Err(SequencerError::NegativeTime { name, value });
            }
        }
        if self.max_attempts == 0 {
            return Err(SequencerError::ZeroAttempts);
        }
        Ok(())
    }

    /// Relock pause is inserted only for long storage, per the locking scheme.
    fn effective_relock_ms(&self) -> f64 {
        if self.storage_time_ms > 100.0 {
            self.relock_pause_ms
        } else {
            0.0
        }
    }
}

/// ±1 analyzer outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Plus,
    Minus,
}

/// Everything recorded about one loading cycle. Timestamps are simulated wall
/// clock in milliseconds from the start of the run and are monotone within
/// the trial. A `read_outcome` of `None` means the read-out was lost; when it
/// is present, `read_genuine` distinguishes a real photon click from a dark
/// count accepted as an outcome.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrialRecord {
    pub trial: u64,
    pub n_attempts: u32,
    pub heralded: bool,
    pub t_start_ms: f64,
    pub t_herald_ms: Option<f64>,
    pub t_read_ms: Option<f64>,
    pub t_end_ms: f64,
    pub setting_index: Option<u8>,
    pub write_outcome: Option<Sign>,
    pub read_outcome: Option<Sign>,
    pub read_genuine: bool,
    pub dark_plus: bool,
    pub dark_minus: bool,
}

/// Record of a full simulation run.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EventLog {
    pub seed: u64,
    pub loading_time_ms: f64,
    pub write_period_ms: f64,
    pub n_settings: usize,
    pub trials: Vec<TrialRecord>,
}

fn draw_outcome(probs: &OutcomeProbabilities, rng: &mut impl Rng) -> (Sign, Sign) {
    let draw: f64 = rng.random();
    let p = probs.as_array();
    let mut acc = 0.0;
    let mut bucket = 3;
    for (k, pk) in p.iter().enumerate() {
        acc += pk;
        if draw < acc {
            bucket = k;
            break;
        }
    }
    match bucket {
        0 => (Sign::Plus, Sign::Plus),
        1 => (Sign::Plus, Sign::Minus),
        2 => (Sign::Minus, Sign::Plus),
        _ => (Sign::Minus, Sign::Minus),
    }
}

/// Runs `n_trials` loading cycles. Each trial draws from its own counter-mode
/// RNG stream derived from the seed, so the log is bit-identical for a given
/// `(config, n_trials)` and independent of execution order.
pub fn run_trials(cfg: &SequenceConfig, n_trials: u64) -> Result<EventLog, SequencerError> {
    cfg.validate()?;
    if n_trials == 0 {
        return Err(SequencerError::ZeroTrials);
    }

    // the joint outcome statistics depend only on the stored state, so the
    // per-setting distributions are computed once up front
    let rho = state_at(cfg.storage_time_ms, &cfg.visib)?;
    let eta = efficiency_at(cfg.storage_time_ms, &cfg.decay)?;
    let setting_probs: Vec<OutcomeProbabilities> = cfg
        .plan
        .setting_pairs()
        .iter()
        .map(|&(a, b)| outcome_probabilities(&rho, a, b))
        .collect();

    let loading_ms = cfg.loading_time_s * 1e3;
    let period_ms = cfg.write_period_us * 1e-3;
    let relock_ms = cfg.effective_relock_ms();

    let mut trials = Vec::with_capacity(n_trials as usize);
    let mut clock_ms = 0.0;
    for trial in 0..n_trials {
        let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
        rng.set_stream(trial.wrapping_add(1));

        let t_start_ms = clock_ms;
        let mut t = t_start_ms + loading_ms;

        let mut heralded = false;
        let mut n_attempts = 0;
        while n_attempts < cfg.max_attempts {
            n_attempts += 1;
            t += period_ms;
            if rng.random_bool(cfg.p_writeout) {
                heralded = true;
                break;
            }
        }

        let mut record = TrialRecord {
            trial,
            n_attempts,
            heralded,
            t_start_ms,
            t_herald_ms: None,
            t_read_ms: None,
            t_end_ms: t,
            setting_index: None,
            write_outcome: None,
            read_outcome: None,
            read_genuine: false,
            dark_plus: false,
            dark_minus: false,
        };

        if heralded {
            record.t_herald_ms = Some(t);
            let setting = if setting_probs.len() > 1 {
                rng.random_range(0..setting_probs.len())
            } else {
                0
            };
            record.setting_index = Some(setting as u8);
            let (w, r) = draw_outcome(&setting_probs[setting], &mut rng);
            record.write_outcome = Some(w);

            t += cfg.storage_time_ms + relock_ms;
            record.t_read_ms = Some(t);

            let retrieved = rng.random_bool(eta);
            let detected = retrieved && rng.random_bool(cfg.detector_efficiency);
            record.dark_plus = rng.random_bool(cfg.dark_count_prob);
            record.dark_minus = rng.random_bool(cfg.dark_count_prob);

            let click_plus = (detected && r == Sign::Plus) || record.dark_plus;
            let click_minus = (detected && r == Sign::Minus) || record.dark_minus;
            // a single fired port gives the outcome; both or neither is a loss
            record.read_outcome = match (click_plus, click_minus) {
                (true, false) => Some(Sign::Plus),
                (false, true) => Some(Sign::Minus),
                _ => None,
            };
            record.read_genuine = detected && record.read_outcome == Some(r);
            record.t_end_ms = t;
        }

        clock_ms = record.t_end_ms;
        trials.push(record);
    }

    Ok(EventLog {
        seed: cfg.seed,
        loading_time_ms: loading_ms,
        write_period_ms: period_ms,
        n_settings: setting_probs.len(),
        trials,
    })
}

/// Heralds per second of write-phase time, or per second of total wall-clock
/// time when `include_loading` is set.
pub fn production_rate(log: &EventLog, include_loading: bool) -> Result<f64, SequencerError> {
    if log.trials.is_empty() {
        return Err(SequencerError::EmptyLog);
    }
    let heralds = log.trials.iter().filter(|t| t.heralded).count() as f64;
    let elapsed_ms: f64 = if include_loading {
        log.trials.iter().map(|t| t.t_end_ms - t.t_start_ms).sum()
    } else {
        log.trials
            .iter()
            .map(|t| t.n_attempts as f64 * log.write_period_ms)
            .sum()
    };
    Ok(heralds / (elapsed_ms * 1e-3))
}

/// Coincidence counts per setting pair: trials contribute when both the
/// write-out outcome and a read-out click were recorded.
pub fn tally_coincidences(log: &EventLog) -> Vec<CoincidenceTable> {
    let mut tables = vec![CoincidenceTable::default(); log.n_settings.max(1)];
    for trial in &log.trials {
        let (Some(setting), Some(w), Some(r)) =
            (trial.setting_index, trial.write_outcome, trial.read_outcome)
        else {
            continue;
        };
        let table = &mut tables[setting as usize];
        match (w, r) {
            (Sign::Plus, Sign::Plus) => table.n_pp += 1,
            (Sign::Plus, Sign::Minus) => table.n_pm += 1,
            (Sign::Minus, Sign::Plus) => table.n_mp += 1,
            (Sign::Minus, Sign::Minus) => table.n_mm += 1,
        }
    }
    tables
}

/// Headline numbers for a run.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunSummary {
    pub n_trials: u64,
    pub heralds: u64,
    pub herald_fraction: f64,
    pub attempts_per_herald: f64,
    pub rate_excluding_loading_hz: f64,
    pub rate_including_loading_hz: f64,
    pub coincidences: u64,
    pub visibility: Option<f64>,
}

pub fn summarize(log: &EventLog) -> Result<RunSummary, SequencerError> {
    let heralds = log.trials.iter().filter(|t| t.heralded).count() as u64;
    let attempts: u64 = log.trials.iter().map(|t| t.n_attempts as u64).sum();
    let tables = tally_coincidences(log);
    let coincidences: u64 = tables.iter().map(|t| t.total()).sum();
    // Eq.-style visibility only meaningful for a single fixed basis
    let visibility = (log.n_settings == 1 && tables[0].total() > 0)
        .then(|| tables[0].visibility());
    Ok(RunSummary {
        n_trials: log.trials.len() as u64,
        heralds,
        herald_fraction: heralds as f64 / log.trials.len() as f64,
        attempts_per_herald: attempts as f64 / heralds.max(1) as f64,
        rate_excluding_loading_hz: production_rate(log, false)?,
        rate_including_loading_hz: production_rate(log, true)?,
        coincidences,
        visibility,
    })
}

/// One CSV row per trial, with a fixed header and empty cells for absent
/// optional fields.
pub fn write_trial_csv<W: Write>(log: &EventLog, writer: W) -> Result<(), SequencerError> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record([
        "trial",
        "n_attempts",
        "heralded",
        "t_start_ms",
        "t_herald_ms",
        "t_read_ms",
        "t_end_ms",
        "setting",
        "write_outcome",
        "read_outcome",
        "read_genuine",
        "dark_plus",
        "dark_minus",
    ])?;
    let sign = |s: Option<Sign>| match s {
        Some(Sign::Plus) => "+".to_string(),
        Some(Sign::Minus) => "-".to_string(),
        None => String::new(),
    };
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for t in &log.trials {
        out.write_record([
            t.trial.to_string(),
            t.n_attempts.to_string(),
            t.heralded.to_string(),
            t.t_start_ms.to_string(),
            opt(t.t_herald_ms),
            opt(t.t_read_ms),
            t.t_end_ms.to_string(),
            t.setting_index.map(|s| s.to_string()).unwrap_or_default(),
            sign(t.write_outcome),
            sign(t.read_outcome),
            t.read_genuine.to_string(),
            t.dark_plus.to_string(),
            t.dark_minus.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

impl From<csv::Error> for SequencerError {
    fn from(e: csv::Error) -> Self {
        SequencerError::Io(std::io::Error::other(e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bell::optimal_chsh;
    use approx::assert_abs_diff_eq;

    fn base_config(seed: u64) -> SequenceConfig {
        SequenceConfig { seed, ..SequenceConfig::default() }
    }

    #[test]
    fn identical_seed_reproduces_the_log_exactly() {
        let cfg = base_config(99);
        let a = run_trials(&cfg, 500).unwrap();
        let b = run_trials(&cfg, 500).unwrap();
        assert_eq!(a, b);

        let c = run_trials(&base_config(100), 500).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn herald_probability_matches_truncated_geometric() {
        let cfg = base_config(1);
        let n = 100_000u64;
        let log = run_trials(&cfg, n).unwrap();
        let heralds = log.trials.iter().filter(|t| t.heralded).count() as f64;
        let expected = 1.0 - (1.0 - cfg.p_writeout).powi(cfg.max_attempts as i32);
        assert_abs_diff_eq!(expected, 0.798, epsilon = 1e-3);
        let sigma = (expected * (1.0 - expected) / n as f64).sqrt();
        assert!(
            (heralds / n as f64 - expected).abs() <= 3.0 * sigma,
            "herald fraction {} vs expected {expected}",
            heralds / n as f64
        );
    }

    #[test]
    fn unconditional_attempts_per_herald_is_inverse_probability() {
        let cfg = base_config(2);
        let log = run_trials(&cfg, 100_000).unwrap();
        let summary = summarize(&log).unwrap();
        // 1/p = 250 write pulses per herald on average
        assert!(
            (summary.attempts_per_herald - 250.0).abs() < 2.5,
            "attempts/herald = {}",
            summary.attempts_per_herald
        );
    }

    #[test]
    fn certain_writeout_heralds_on_first_attempt() {
        let cfg = SequenceConfig { p_writeout: 1.0, ..base_config(3) };
        let log = run_trials(&cfg, 200).unwrap();
        assert!(log.trials.iter().all(|t| t.heralded && t.n_attempts == 1));

        // one herald per write period: 200 kHz with loading excluded
        let rate = production_rate(&log, false).unwrap();
        assert_abs_diff_eq!(rate, 200_000.0, epsilon = 1e-6);
    }

    #[test]
    fn production_rate_excluding_loading_is_near_800_hz() {
        let cfg = base_config(4);
        let log = run_trials(&cfg, 100_000).unwrap();
        let rate = production_rate(&log, false).unwrap();
        assert!((rate - 800.0).abs() <= 0.05 * 800.0, "rate = {rate} Hz");
    }

    #[test]
    fn production_rate_including_loading_is_dominated_by_loading() {
        let cfg = base_config(5);
        let log = run_trials(&cfg, 50_000).unwrap();
        let rate = production_rate(&log, true).unwrap();
        // 0.798 heralds / (1.5 s + ~1 ms of write attempts + storage)
        assert!((rate - 0.53).abs() <= 0.02, "rate = {rate} Hz");
    }

    #[test]
    fn noiseless_pair_has_no_correlated_hv_coincidences() {
        let cfg = SequenceConfig {
            visib: VisibilityPair::new(1.0, 1.0).unwrap(),
            ..base_config(6)
        };
        let log = run_trials(&cfg, 20_000).unwrap();
        let tables = tally_coincidences(&log);
        assert_eq!(tables.len(), 1);
        assert_eq!(tables[0].n_pp, 0);
        assert_eq!(tables[0].n_mm, 0);
        assert!(tables[0].total() > 0);
        assert_abs_diff_eq!(tables[0].visibility(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn tallied_visibility_converges_to_the_analytic_value() {
        // storage at 5 µs on the plateau; H/V visibility 0.935
        let cfg = base_config(7);
        let log = run_trials(&cfg, 400_000).unwrap();
        let tables = tally_coincidences(&log);
        let total = tables[0].total();
        assert!(total > 100_000, "only {total} coincidences");
        let sigma = (1.0 - 0.935f64.powi(2)) / (total as f64).sqrt();
        assert!(
            (tables[0].visibility() - 0.935).abs() <= 4.0 * sigma + 1e-3,
            "visibility {} vs 0.935",
            tables[0].visibility()
        );
    }

    #[test]
    fn pure_dark_counts_destroy_visibility() {
        let cfg = SequenceConfig {
            dark_count_prob: 0.5,
            detector_efficiency: 0.0,
            ..base_config(8)
        };
        let log = run_trials(&cfg, 50_000).unwrap();
        let tables = tally_coincidences(&log);
        assert!(tables[0].total() > 1000);
        assert!(tables[0].visibility() < 0.05, "visibility = {}", tables[0].visibility());
    }

    #[test]
    fn dark_counts_monotonically_degrade_visibility() {
        let mut previous = f64::INFINITY;
        for dark in [0.0, 0.02, 0.05, 0.1, 0.2] {
            let cfg = SequenceConfig {
                dark_count_prob: dark,
                detector_efficiency: 0.6,
                ..base_config(9)
            };
            let log = run_trials(&cfg, 150_000).unwrap();
            let v = tally_coincidences(&log)[0].visibility();
            assert!(
                v < previous + 0.01,
                "visibility rose from {previous} to {v} at dark = {dark}"
            );
            previous = v;
        }
    }

    #[test]
    fn chsh_plan_splits_trials_across_settings() {
        let rho = state_at(0.0, &VisibilityPair::reference()).unwrap();
        let settings = optimal_chsh(&rho).settings;
        let cfg = SequenceConfig {
            plan: MeasurementPlan::Chsh(settings),
            ..base_config(10)
        };
        let log = run_trials(&cfg, 40_000).unwrap();
        assert_eq!(log.n_settings, 4);
        let tables = tally_coincidences(&log);
        assert_eq!(tables.len(), 4);
        for table in &tables {
            assert!(table.total() > 4_000);
        }

        let counts: [CoincidenceTable; 4] = [tables[0], tables[1], tables[2], tables[3]];
        let (s, sigma) = crate::bell::chsh_from_counts(&counts).unwrap();
        let expected = optimal_chsh(&rho).s;
        assert!(
            (s - expected).abs() <= 4.0 * sigma,
            "S = {s} ± {sigma}, expected {expected}"
        );
    }

    #[test]
    fn relock_pause_extends_only_long_storage_trials() {
        let herald_to_read = |storage_ms: f64| -> f64 {
            let cfg = SequenceConfig { storage_time_ms: storage_ms, ..base_config(11) };
            let log = run_trials(&cfg, 200).unwrap();
            let t = log.trials.iter().find(|t| t.heralded).expect("some herald");
            t.t_read_ms.unwrap() - t.t_herald_ms.unwrap()
        };
        // at or below 100 ms the locking beams stay off: storage only
        assert_abs_diff_eq!(herald_to_read(50.0), 50.0, epsilon = 1e-9);
        // above 100 ms the 3 ms relock pause is added to the wall clock
        assert_abs_diff_eq!(herald_to_read(200.0), 203.0, epsilon = 1e-9);
    }

    #[test]
    fn timestamps_are_monotone_within_trials() {
        let cfg = SequenceConfig { storage_time_ms: 120.0, ..base_config(12) };
        let log = run_trials(&cfg, 2_000).unwrap();
        for t in &log.trials {
            assert!(t.t_end_ms >= t.t_start_ms);
            if let Some(h) = t.t_herald_ms {
                assert!(h > t.t_start_ms);
                assert!(t.t_read_ms.unwrap() >= h);
                assert!(t.t_end_ms >= t.t_read_ms.unwrap());
            }
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(SequenceConfig { p_writeout: 1.5, ..base_config(0) }.validate().is_err());
        assert!(SequenceConfig { dark_count_prob: 1.0, ..base_config(0) }.validate().is_err());
        assert!(SequenceConfig { max_attempts: 0, ..base_config(0) }.validate().is_err());
        assert!(SequenceConfig { loading_time_s: -1.0, ..base_config(0) }.validate().is_err());
        assert!(run_trials(&base_config(0), 0).is_err());
    }

    #[test]
    fn csv_summary_has_one_row_per_trial() {
        let log = run_trials(&base_config(13), 50).unwrap();
        let mut buf = Vec::new();
        write_trial_csv(&log, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 51);
        assert!(text.starts_with("trial,n_attempts,heralded"));
    }
}
