//! Synthetic episode oracle.
//!
//! Stands in for a physics simulator: computes an analytic success
//! probability for a configuration, samples the binary outcome from a seeded
//! stream, and assigns a failure mode and cycle time. The parallel-jaw oracle
//! models success as a logistic in raw friction and mass with a
//! friction-mass interaction, plus three smaller standardized terms. The
//! suction-gripper oracle is a logistic in mass and IK noise whose only
//! failure mode is a grasp miss.
//!
//! Standardization constants for the extra terms are the analytic moments of
//! each feature's marginal under uniform LHS over the 8-D space (log-uniform
//! for friction and mass, uniform otherwise); see [`OracleParams::franka`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::param_space::ScenarioConfig;
use crate::rng::SplitMix64;

/// Hard episode cutoff; timeout outcomes carry exactly this cycle time.
pub const TIMEOUT_SECONDS: f64 = 15.0;

/// Cycle-time range for successful episodes (successes terminate faster).
pub const SUCCESS_CYCLE_RANGE: (f64, f64) = (1.0, 6.0);
/// Cycle-time range for non-timeout failures.
pub const FAILURE_CYCLE_RANGE: (f64, f64) = (1.0, 14.9);

/// Raw-scale logistic coefficients of the parallel-jaw oracle:
/// `logit = B0 + B1*friction + B2*mass + B3*friction*mass`.
pub const FRANKA_BASE_COEFFS: [f64; 4] = [-1.469, 3.691, -0.419, -1.400];

/// Suction-gripper oracle: `logit = C0 + C1*mass + C2*ik_noise`. The
/// constants are calibrated so the expected success rate under uniform LHS
/// over the 5-D space is approximately 74%, and so mass at its range minimum
/// with zero IK noise clears 0.9.
pub const UR5E_COEFFS: [f64; 3] = [3.2, -1.93, -40.0];

/// Probabilities are clamped away from 0 and 1 by this margin.
pub const PROB_CLAMP: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("configuration missing feature '{0}'")]
    MissingFeature(String),
    #[error("friction {0} outside [0.05, 1.2]")]
    FrictionOutOfRange(f64),
    #[error("mode-mix row [{0}, {1}] does not sum to 1")]
    BadMixRow(f64, f64),
    #[error("standardization sd for '{0}' must be > 0")]
    BadStandardization(String),
}

/// Failure taxonomy. `None` is reserved for successful episodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureType {
    None,
    Timeout,
    Collision,
    GripLoss,
    GraspMiss,
}

impl FailureType {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureType::None => "none",
            FailureType::Timeout => "timeout",
            FailureType::Collision => "collision",
            FailureType::GripLoss => "grip_loss",
            FailureType::GraspMiss => "grasp_miss",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "none" => FailureType::None,
            "timeout" => FailureType::Timeout,
            "collision" => FailureType::Collision,
            "grip_loss" => FailureType::GripLoss,
            "grasp_miss" => FailureType::GraspMiss,
            _ => return None,
        })
    }
}

/// Draw order of failure modes in a mode-mix row.
pub const FAILURE_MODES: [FailureType; 4] = [
    FailureType::Timeout,
    FailureType::Collision,
    FailureType::GripLoss,
    FailureType::GraspMiss,
];

/// A feature referenced by an extra oracle term, evaluated on standardized
/// components.
#[derive(Debug, Clone, PartialEq)]
pub enum OracleFeature {
    Raw(&'static str),
    Product(&'static str, &'static str),
}

#[derive(Debug, Clone)]
pub struct ExtraTerm {
    pub feature: OracleFeature,
    pub coefficient: f64,
}

/// Categorical failure-mode distribution for one friction bin.
#[derive(Debug, Clone)]
pub struct ModeMixRow {
    pub lo: f64,
    pub hi: f64,
    /// Weights in [`FAILURE_MODES`] order; sums to 1.
    pub weights: [f64; 4],
}

/// Parameters of the parallel-jaw episode oracle.
#[derive(Debug, Clone)]
pub struct OracleParams {
    pub base: [f64; 4],
    pub extras: Vec<ExtraTerm>,
    /// Per-feature (mean, sd) used to standardize extra-term components.
    pub standardization: BTreeMap<&'static str, (f64, f64)>,
    pub mode_mix: Vec<ModeMixRow>,
    pub timeout_seconds: f64,
}

/// Analytic (mean, sd) of a log-uniform marginal on `[lo, hi]`.
pub fn log_uniform_moments(lo: f64, hi: f64) -> (f64, f64) {
    let l = (hi / lo).ln();
    let mean = (hi - lo) / l;
    let ex2 = (hi * hi - lo * lo) / (2.0 * l);
    (mean, (ex2 - mean * mean).sqrt())
}

/// Analytic (mean, sd) of a uniform marginal on `[lo, hi]`.
pub fn uniform_moments(lo: f64, hi: f64) -> (f64, f64) {
    ((lo + hi) / 2.0, (hi - lo) / 12f64.sqrt())
}

/// Analytic (mean, sd) of a uniform integer marginal on `{lo..=hi}`.
pub fn uniform_int_moments(lo: i64, hi: i64) -> (f64, f64) {
    let n = (hi - lo + 1) as f64;
    ((lo + hi) as f64 / 2.0, ((n * n - 1.0) / 12.0).sqrt())
}

/// Dominant failure mode and share per friction bin; the bin edges run
/// {0.050, 0.108, 0.165, 0.280, 0.450, 0.625, 0.768, 1.200}.
const DOMINANT_MODE_BY_BIN: [(f64, f64, FailureType, f64); 7] = [
    (0.050, 0.108, FailureType::Timeout, 0.391),
    (0.108, 0.165, FailureType::Timeout, 0.443),
    (0.165, 0.280, FailureType::Timeout, 0.420),
    (0.280, 0.450, FailureType::Timeout, 0.385),
    (0.450, 0.625, FailureType::GripLoss, 0.331),
    (0.625, 0.768, FailureType::Timeout, 0.312),
    (0.768, 1.200, FailureType::Collision, 0.428),
];

/// Aggregate failure-mode shares across the whole parallel-jaw campaign,
/// used to split the non-dominant mass of each bin.
const GLOBAL_FAILURE_SHARES: [(FailureType, f64); 4] = [
    (FailureType::Timeout, 0.381),
    (FailureType::GripLoss, 0.266),
    (FailureType::Collision, 0.204),
    (FailureType::GraspMiss, 0.149),
];

/// Non-dominant modes are kept at least this far below the dominant share so
/// the dominant mode stays modal in every bin.
const DOMINANT_MARGIN: f64 = 0.02;

fn mode_index(mode: FailureType) -> usize {
    FAILURE_MODES.iter().position(|&m| m == mode).unwrap()
}

fn build_mix_row(lo: f64, hi: f64, dominant: FailureType, share: f64) -> ModeMixRow {
    let cap = share - DOMINANT_MARGIN;
    let mut weights = [0.0; 4];
    weights[mode_index(dominant)] = share;
    let mut pool: Vec<(usize, f64)> = GLOBAL_FAILURE_SHARES
        .iter()
        .filter(|(m, _)| *m != dominant)
        .map(|(m, g)| (mode_index(*m), *g))
        .collect();
    let mut remaining = 1.0 - share;
    // Proportional split of the remaining mass; any mode that would overtake
    // the dominant is clamped and the rest redistributed.
    loop {
        let total: f64 = pool.iter().map(|(_, g)| g).sum();
        if let Some(pos) = pool
            .iter()
            .position(|(_, g)| remaining * g / total > cap)
        {
            let (idx, _) = pool.swap_remove(pos);
            weights[idx] = cap;
            remaining -= cap;
        } else {
            for (idx, g) in &pool {
                weights[*idx] = remaining * g / total;
            }
            break;
        }
    }
    ModeMixRow { lo, hi, weights }
}

impl OracleParams {
    /// The built-in parallel-jaw oracle.
    pub fn franka() -> Self {
        let mut standardization = BTreeMap::new();
        standardization.insert("friction", log_uniform_moments(0.05, 1.2));
        standardization.insert("mass", log_uniform_moments(0.05, 2.0));
        standardization.insert("ik_noise", uniform_moments(0.0, 0.04));
        standardization.insert("size", uniform_moments(0.02, 0.12));
        standardization.insert("obstacles", uniform_int_moments(0, 5));
        let extras = vec![
            ExtraTerm {
                feature: OracleFeature::Raw("ik_noise"),
                coefficient: -0.288,
            },
            ExtraTerm {
                feature: OracleFeature::Product("friction", "size"),
                coefficient: 0.190,
            },
            ExtraTerm {
                feature: OracleFeature::Product("mass", "obstacles"),
                coefficient: 0.079,
            },
        ];
        let mode_mix = DOMINANT_MODE_BY_BIN
            .iter()
            .map(|&(lo, hi, dom, share)| build_mix_row(lo, hi, dom, share))
            .collect();
        let params = Self {
            base: FRANKA_BASE_COEFFS,
            extras,
            standardization,
            mode_mix,
            timeout_seconds: TIMEOUT_SECONDS,
        };
        params.validate().expect("built-in params are valid");
        params
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        for row in &self.mode_mix {
            let sum: f64 = row.weights.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(OracleError::BadMixRow(row.lo, row.hi));
            }
        }
        for (name, (_, sd)) in &self.standardization {
            if *sd <= 0.0 {
                return Err(OracleError::BadStandardization(name.to_string()));
            }
        }
        Ok(())
    }

    fn standardized(&self, cfg: &ScenarioConfig, name: &str) -> Result<f64, OracleError> {
        let raw = cfg
            .f64_value(name)
            .ok_or_else(|| OracleError::MissingFeature(name.to_string()))?;
        let (mean, sd) = self
            .standardization
            .get(name)
            .ok_or_else(|| OracleError::MissingFeature(name.to_string()))?;
        Ok((raw - mean) / sd)
    }
}

/// Sigmoid with the oracle's probability clamp.
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Analytic success probability of the parallel-jaw oracle for a
/// configuration, clamped to `[1e-9, 1 - 1e-9]`.
pub fn success_probability(
    params: &OracleParams,
    cfg: &ScenarioConfig,
) -> Result<f64, OracleError> {
    let mu = cfg
        .f64_value("friction")
        .ok_or_else(|| OracleError::MissingFeature("friction".into()))?;
    let m = cfg
        .f64_value("mass")
        .ok_or_else(|| OracleError::MissingFeature("mass".into()))?;
    let [b0, b1, b2, b3] = params.base;
    let mut logit = b0 + b1 * mu + b2 * m + b3 * mu * m;
    for term in &params.extras {
        let z = match &term.feature {
            OracleFeature::Raw(name) => params.standardized(cfg, name)?,
            OracleFeature::Product(a, b) => {
                params.standardized(cfg, a)? * params.standardized(cfg, b)?
            }
        };
        logit += term.coefficient * z;
    }
    Ok(sigmoid(logit).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

/// Analytic success probability of the suction-gripper oracle.
pub fn ur5e_success_probability(cfg: &ScenarioConfig) -> Result<f64, OracleError> {
    let m = cfg
        .f64_value("mass")
        .ok_or_else(|| OracleError::MissingFeature("mass".into()))?;
    let ik = cfg
        .f64_value("ik_noise")
        .ok_or_else(|| OracleError::MissingFeature("ik_noise".into()))?;
    let [c0, c1, c2] = UR5E_COEFFS;
    Ok(sigmoid(c0 + c1 * m + c2 * ik).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP))
}

/// Outcome of one episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeOutcome {
    pub success: bool,
    pub failure_type: FailureType,
    pub cycle_time: f64,
    pub collision: bool,
    pub drop: bool,
    pub grasp_miss: bool,
    /// Analytic failure probability of the configuration, exactly
    /// `1 - success_probability`.
    pub fail_prob: f64,
}

impl EpisodeOutcome {
    fn from_mode(mode: FailureType, cycle_time: f64, fail_prob: f64) -> Self {
        Self {
            success: mode == FailureType::None,
            failure_type: mode,
            cycle_time,
            collision: mode == FailureType::Collision,
            // The drop flag mirrors grip loss: a lost grip is a dropped object.
            drop: mode == FailureType::GripLoss,
            grasp_miss: mode == FailureType::GraspMiss,
            fail_prob,
        }
    }

    /// Checks the outcome's internal consistency rules.
    pub fn validate(&self) -> Result<(), String> {
        if self.success {
            if self.failure_type != FailureType::None {
                return Err("success with non-none failure_type".into());
            }
            if self.collision || self.drop || self.grasp_miss {
                return Err("success with a failure flag set".into());
            }
        } else if self.failure_type == FailureType::None {
            return Err("failure with failure_type none".into());
        }
        if self.failure_type == FailureType::Timeout && self.cycle_time != TIMEOUT_SECONDS {
            return Err(format!(
                "timeout outcome must have cycle_time {TIMEOUT_SECONDS}, got {}",
                self.cycle_time
            ));
        }
        if self.collision != (self.failure_type == FailureType::Collision) {
            return Err("collision flag inconsistent with failure_type".into());
        }
        if self.drop != (self.failure_type == FailureType::GripLoss) {
            return Err("drop flag inconsistent with failure_type".into());
        }
        if self.grasp_miss != (self.failure_type == FailureType::GraspMiss) {
            return Err("grasp_miss flag inconsistent with failure_type".into());
        }
        if !(0.0..=1.0).contains(&self.fail_prob) {
            return Err(format!("fail_prob {} outside [0, 1]", self.fail_prob));
        }
        if !self.cycle_time.is_finite() || self.cycle_time < 0.0 {
            return Err(format!("bad cycle_time {}", self.cycle_time));
        }
        Ok(())
    }
}

/// Draws the failure mode for an already-failed episode from the friction
/// bin's categorical mix. Consumes exactly one draw from the stream.
pub fn assign_failure_mode(
    params: &OracleParams,
    cfg: &ScenarioConfig,
    stream: &mut SplitMix64,
) -> Result<FailureType, OracleError> {
    let mu = cfg
        .f64_value("friction")
        .ok_or_else(|| OracleError::MissingFeature("friction".into()))?;
    let first = params.mode_mix.first().expect("non-empty mix");
    let last = params.mode_mix.last().expect("non-empty mix");
    if mu < first.lo || mu > last.hi {
        return Err(OracleError::FrictionOutOfRange(mu));
    }
    let row = params
        .mode_mix
        .iter()
        .find(|r| mu >= r.lo && (mu < r.hi || std::ptr::eq(*r, last)))
        .expect("bins cover the range");
    let u = stream.next_f64();
    let mut acc = 0.0;
    for (mode, w) in FAILURE_MODES.iter().zip(row.weights) {
        acc += w;
        if u < acc {
            return Ok(*mode);
        }
    }
    Ok(FAILURE_MODES[3])
}

/// Runs one parallel-jaw episode. Deterministic for a fixed stream.
pub fn run_episode(
    params: &OracleParams,
    cfg: &ScenarioConfig,
    stream: &mut SplitMix64,
) -> Result<EpisodeOutcome, OracleError> {
    let p = success_probability(params, cfg)?;
    let fail_prob = 1.0 - p;
    let outcome = if stream.next_f64() < p {
        let cycle = stream.next_range(SUCCESS_CYCLE_RANGE.0, SUCCESS_CYCLE_RANGE.1);
        EpisodeOutcome::from_mode(FailureType::None, cycle, fail_prob)
    } else {
        let mode = assign_failure_mode(params, cfg, stream)?;
        let cycle = if mode == FailureType::Timeout {
            params.timeout_seconds
        } else {
            stream.next_range(FAILURE_CYCLE_RANGE.0, FAILURE_CYCLE_RANGE.1)
        };
        EpisodeOutcome::from_mode(mode, cycle, fail_prob)
    };
    debug_assert!(outcome.validate().is_ok());
    Ok(outcome)
}

/// Runs one suction-gripper episode; every failure is a grasp miss.
pub fn ur5e_episode(
    cfg: &ScenarioConfig,
    stream: &mut SplitMix64,
) -> Result<EpisodeOutcome, OracleError> {
    let p = ur5e_success_probability(cfg)?;
    let fail_prob = 1.0 - p;
    let outcome = if stream.next_f64() < p {
        let cycle = stream.next_range(SUCCESS_CYCLE_RANGE.0, SUCCESS_CYCLE_RANGE.1);
        EpisodeOutcome::from_mode(FailureType::None, cycle, fail_prob)
    } else {
        let cycle = stream.next_range(FAILURE_CYCLE_RANGE.0, FAILURE_CYCLE_RANGE.1);
        EpisodeOutcome::from_mode(FailureType::GraspMiss, cycle, fail_prob)
    };
    debug_assert!(outcome.validate().is_ok());
    Ok(outcome)
}
