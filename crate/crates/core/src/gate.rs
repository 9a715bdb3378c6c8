//! Five-metric validation gate and confidence score.
//!
//! A policy passes the gate only when all five metrics meet their thresholds
//! simultaneously: success rate >= 0.92, mean cycle time <= 1.1x baseline,
//! zero collisions, drop rate <= 0.03, and grasp-miss rate <= 1.2x baseline.
//! The confidence score is a 0-100 weighted combination of normalized metric
//! scores with a floor of 1; the collision component is all-or-nothing, so
//! any collision caps the score at 75.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{EpisodeOutcome, FailureType};

pub const SR_THRESHOLD: f64 = 0.92;
pub const CYCLE_BASELINE_FACTOR: f64 = 1.1;
pub const DROP_RATE_THRESHOLD: f64 = 0.03;
pub const MISS_BASELINE_FACTOR: f64 = 1.2;

pub const CONFIDENCE_FLOOR: f64 = 1.0;

#[derive(Debug, Error)]
pub enum GateError {
    #[error("no episodes to evaluate")]
    EmptyEpisodes,
    #[error("edge flags length {0} does not match episode count {1}")]
    EdgeFlagMismatch(usize, usize),
    #[error("baseline cycle time must be > 0, got {0}")]
    BadBaselineCycle(f64),
}

/// Reference statistics of the baseline controller.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct BaselineStats {
    pub cycle_time: f64,
    pub miss_rate: f64,
    pub sr: f64,
}

/// The five gated metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    SuccessRate,
    CycleTime,
    CollisionCount,
    DropRate,
    GraspMissRate,
}

pub const METRICS: [Metric; 5] = [
    Metric::SuccessRate,
    Metric::CycleTime,
    Metric::CollisionCount,
    Metric::DropRate,
    Metric::GraspMissRate,
];

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::SuccessRate => "success_rate",
            Metric::CycleTime => "cycle_time",
            Metric::CollisionCount => "collision_count",
            Metric::DropRate => "drop_rate",
            Metric::GraspMissRate => "grasp_miss_rate",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Measured metric values plus the baseline references they are judged
/// against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub sr: f64,
    pub mean_cycle: f64,
    pub baseline_cycle: f64,
    pub collisions: u64,
    pub drop_rate: f64,
    pub miss_rate: f64,
    pub baseline_miss_rate: f64,
    /// Success rate over the edge-flagged episodes.
    pub edge_sr: f64,
    pub baseline_sr: f64,
}

/// Pass/fail verdict per metric, all thresholds inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdicts {
    pub success_rate: bool,
    pub cycle_time: bool,
    pub collision_count: bool,
    pub drop_rate: bool,
    pub grasp_miss_rate: bool,
}

impl Verdicts {
    pub fn all_pass(&self) -> bool {
        self.success_rate
            && self.cycle_time
            && self.collision_count
            && self.drop_rate
            && self.grasp_miss_rate
    }

    pub fn failing(&self) -> Vec<Metric> {
        METRICS
            .iter()
            .zip([
                self.success_rate,
                self.cycle_time,
                self.collision_count,
                self.drop_rate,
                self.grasp_miss_rate,
            ])
            .filter(|(_, pass)| !pass)
            .map(|(m, _)| *m)
            .collect()
    }
}

impl MetricReport {
    pub fn verdicts(&self) -> Verdicts {
        Verdicts {
            success_rate: self.sr >= SR_THRESHOLD,
            cycle_time: self.mean_cycle <= CYCLE_BASELINE_FACTOR * self.baseline_cycle,
            collision_count: self.collisions == 0,
            drop_rate: self.drop_rate <= DROP_RATE_THRESHOLD,
            grasp_miss_rate: self.miss_rate <= MISS_BASELINE_FACTOR * self.baseline_miss_rate,
        }
    }
}

/// Computes the metric report for a batch of episodes. `edge` flags which
/// episodes belong to edge-case scenarios; when none are flagged the edge
/// success rate falls back to the overall rate.
pub fn evaluate_metrics(
    episodes: &[EpisodeOutcome],
    edge: &[bool],
    baseline: &BaselineStats,
) -> Result<MetricReport, GateError> {
    if episodes.is_empty() {
        return Err(GateError::EmptyEpisodes);
    }
    if edge.len() != episodes.len() {
        return Err(GateError::EdgeFlagMismatch(edge.len(), episodes.len()));
    }
    if baseline.cycle_time <= 0.0 {
        return Err(GateError::BadBaselineCycle(baseline.cycle_time));
    }
    let n = episodes.len() as f64;
    let successes = episodes.iter().filter(|e| e.success).count() as f64;
    let collisions = episodes
        .iter()
        .filter(|e| e.failure_type == FailureType::Collision)
        .count() as u64;
    let drops = episodes
        .iter()
        .filter(|e| e.failure_type == FailureType::GripLoss)
        .count() as f64;
    let misses = episodes
        .iter()
        .filter(|e| e.failure_type == FailureType::GraspMiss)
        .count() as f64;
    let mean_cycle = episodes.iter().map(|e| e.cycle_time).sum::<f64>() / n;
    let edge_total = edge.iter().filter(|&&e| e).count();
    let edge_sr = if edge_total == 0 {
        successes / n
    } else {
        let edge_successes = episodes
            .iter()
            .zip(edge)
            .filter(|(ep, &is_edge)| is_edge && ep.success)
            .count();
        edge_successes as f64 / edge_total as f64
    };
    Ok(MetricReport {
        sr: successes / n,
        mean_cycle,
        baseline_cycle: baseline.cycle_time,
        collisions,
        drop_rate: drops / n,
        miss_rate: misses / n,
        baseline_miss_rate: baseline.miss_rate,
        edge_sr,
        baseline_sr: baseline.sr,
    })
}

/// Weighted 0-100 confidence score.
///
/// Components: success rate 30 x min(1, sr/0.92); cycle time
/// 20 x max(0, 1 - |dt|/baseline); collisions 25 all-or-nothing; edge-case
/// success 15 x edge_sr; baseline delta 10 x clamp(1 + (sr - baseline_sr)).
/// Component scores are normalized to [0, 1] before weighting, and the total
/// is floored at 1.
pub fn confidence_score(report: &MetricReport) -> Result<f64, GateError> {
    if report.baseline_cycle <= 0.0 {
        return Err(GateError::BadBaselineCycle(report.baseline_cycle));
    }
    let sr_component = 30.0 * (report.sr / SR_THRESHOLD).min(1.0);
    let ct_component = 20.0
        * (1.0 - (report.mean_cycle - report.baseline_cycle).abs() / report.baseline_cycle)
            .max(0.0);
    let cc_component = if report.collisions == 0 { 25.0 } else { 0.0 };
    let ec_component = 15.0 * report.edge_sr.clamp(0.0, 1.0);
    let delta_component = 10.0 * (1.0 + (report.sr - report.baseline_sr)).clamp(0.0, 1.0);
    let total = sr_component + ct_component + cc_component + ec_component + delta_component;
    Ok(total.clamp(CONFIDENCE_FLOOR, 100.0))
}

/// Gate verdict with confidence attached.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub pass: bool,
    pub confidence: f64,
    pub failing: Vec<Metric>,
}

pub fn gate_decision(report: &MetricReport) -> Result<GateDecision, GateError> {
    let verdicts = report.verdicts();
    Ok(GateDecision {
        pass: verdicts.all_pass(),
        confidence: confidence_score(report)?,
        failing: verdicts.failing(),
    })
}

/// Machine-readable gate report mirroring the metric table plus the
/// decision.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GateReport {
    pub metrics: MetricReport,
    pub verdicts: Verdicts,
    pub confidence: f64,
    pub pass: bool,
    pub failing: Vec<Metric>,
}

impl GateReport {
    pub fn new(report: MetricReport) -> Result<Self, GateError> {
        let decision = gate_decision(&report)?;
        Ok(Self {
            metrics: report,
            verdicts: report.verdicts(),
            confidence: decision.confidence,
            pass: decision.pass,
            failing: decision.failing,
        })
    }

    /// Human-readable rendering, one row per metric.
    pub fn render_text(&self) -> String {
        let m = &self.metrics;
        let v = &self.verdicts;
        let row = |name: &str, value: String, threshold: String, pass: bool| {
            format!(
                "{name:<18} {value:>12} {threshold:>22} {}\n",
                if pass { "PASS" } else { "FAIL" }
            )
        };
        let mut out = format!(
            "{:<18} {:>12} {:>22} verdict\n",
            "metric", "value", "threshold"
        );
        out.push_str(&row(
            "success_rate",
            format!("{:.4}", m.sr),
            format!(">= {SR_THRESHOLD}"),
            v.success_rate,
        ));
        out.push_str(&row(
            "cycle_time",
            format!("{:.3}s", m.mean_cycle),
            format!("<= {:.3}s", CYCLE_BASELINE_FACTOR * m.baseline_cycle),
            v.cycle_time,
        ));
        out.push_str(&row(
            "collision_count",
            m.collisions.to_string(),
            "= 0".to_string(),
            v.collision_count,
        ));
        out.push_str(&row(
            "drop_rate",
            format!("{:.4}", m.drop_rate),
            format!("<= {DROP_RATE_THRESHOLD}"),
            v.drop_rate,
        ));
        out.push_str(&row(
            "grasp_miss_rate",
            format!("{:.4}", m.miss_rate),
            format!("<= {:.4}", MISS_BASELINE_FACTOR * m.baseline_miss_rate),
            v.grasp_miss_rate,
        ));
        out.push_str(&format!(
            "confidence {:.1}/100, gate {}\n",
            self.confidence,
            if self.pass { "PASS" } else { "FAIL" }
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn success_episode(cycle: f64) -> EpisodeOutcome {
        EpisodeOutcome {
            success: true,
            failure_type: FailureType::None,
            cycle_time: cycle,
            collision: false,
            drop: false,
            grasp_miss: false,
            fail_prob: 0.1,
        }
    }

    fn failure_episode(mode: FailureType) -> EpisodeOutcome {
        EpisodeOutcome {
            success: false,
            failure_type: mode,
            cycle_time: if mode == FailureType::Timeout { 15.0 } else { 5.0 },
            collision: mode == FailureType::Collision,
            drop: mode == FailureType::GripLoss,
            grasp_miss: mode == FailureType::GraspMiss,
            fail_prob: 0.9,
        }
    }

    fn baseline() -> BaselineStats {
        BaselineStats {
            cycle_time: 4.0,
            miss_rate: 0.02,
            sr: 1.0,
        }
    }

    /// A report with every metric exactly at its passing value.
    fn passing_report() -> MetricReport {
        MetricReport {
            sr: 1.0,
            mean_cycle: 4.0,
            baseline_cycle: 4.0,
            collisions: 0,
            drop_rate: 0.0,
            miss_rate: 0.0,
            baseline_miss_rate: 0.02,
            edge_sr: 1.0,
            baseline_sr: 1.0,
        }
    }

    #[test]
    fn all_success_passes_every_metric() {
        let episodes: Vec<EpisodeOutcome> = (0..50).map(|_| success_episode(4.0)).collect();
        let edge = vec![false; 50];
        let report = evaluate_metrics(&episodes, &edge, &baseline()).unwrap();
        assert!(report.verdicts().all_pass());
        assert_eq!(report.sr, 1.0);
    }

    #[test]
    fn one_collision_fails_only_the_collision_metric() {
        let mut episodes: Vec<EpisodeOutcome> = (0..49).map(|_| success_episode(4.0)).collect();
        episodes.push(failure_episode(FailureType::Collision));
        let edge = vec![false; 50];
        let report = evaluate_metrics(&episodes, &edge, &baseline()).unwrap();
        let verdicts = report.verdicts();
        assert!(!verdicts.collision_count);
        assert!(verdicts.drop_rate);
        assert!(verdicts.grasp_miss_rate);
        // 49/50 = 0.98 still clears the SR threshold.
        assert!(verdicts.success_rate);
        let decision = gate_decision(&report).unwrap();
        assert!(!decision.pass);
        assert_eq!(decision.failing, vec![Metric::CollisionCount]);
        assert!(decision.confidence <= 75.0);
    }

    #[test]
    fn sr_just_below_threshold_fails() {
        let mut report = passing_report();
        report.sr = 0.91;
        assert!(!report.verdicts().success_rate);
        report.sr = 0.92;
        assert!(report.verdicts().success_rate);
    }

    #[test]
    fn thresholds_are_inclusive() {
        let mut report = passing_report();
        report.mean_cycle = 1.1 * report.baseline_cycle;
        report.drop_rate = 0.03;
        report.miss_rate = 1.2 * report.baseline_miss_rate;
        let verdicts = report.verdicts();
        assert!(verdicts.cycle_time);
        assert!(verdicts.drop_rate);
        assert!(verdicts.grasp_miss_rate);
    }

    #[test]
    fn drop_rate_counts_grip_loss() {
        let mut episodes: Vec<EpisodeOutcome> = (0..8).map(|_| success_episode(3.0)).collect();
        episodes.push(failure_episode(FailureType::GripLoss));
        episodes.push(failure_episode(FailureType::GraspMiss));
        let edge = vec![false; 10];
        let report = evaluate_metrics(&episodes, &edge, &baseline()).unwrap();
        assert!((report.drop_rate - 0.1).abs() < 1e-12);
        assert!((report.miss_rate - 0.1).abs() < 1e-12);
    }

    #[test]
    fn edge_sr_uses_flagged_episodes() {
        let episodes = vec![
            success_episode(3.0),
            success_episode(3.0),
            failure_episode(FailureType::Timeout),
            success_episode(3.0),
        ];
        let edge = vec![true, false, true, false];
        let report = evaluate_metrics(&episodes, &edge, &baseline()).unwrap();
        assert!((report.edge_sr - 0.5).abs() < 1e-12);
        // No edge flags: falls back to overall SR.
        let report = evaluate_metrics(&episodes, &[false; 4], &baseline()).unwrap();
        assert!((report.edge_sr - 0.75).abs() < 1e-12);
    }

    #[test]
    fn confidence_worked_examples() {
        // Perfect policy: every component at its maximum.
        let report = passing_report();
        assert_eq!(confidence_score(&report).unwrap(), 100.0);

        // Everything at its worst: floor of 1.
        let worst = MetricReport {
            sr: 0.0,
            mean_cycle: 40.0,
            baseline_cycle: 4.0,
            collisions: 10,
            drop_rate: 1.0,
            miss_rate: 1.0,
            baseline_miss_rate: 0.02,
            edge_sr: 0.0,
            baseline_sr: 1.0,
        };
        assert_eq!(confidence_score(&worst).unwrap(), 1.0);

        // Zero SR, zero collisions, baseline cycle time: 20 + 25 = 45.
        let mid = MetricReport {
            sr: 0.0,
            mean_cycle: 4.0,
            baseline_cycle: 4.0,
            collisions: 0,
            drop_rate: 0.0,
            miss_rate: 1.0,
            baseline_miss_rate: 0.02,
            edge_sr: 0.0,
            baseline_sr: 1.0,
        };
        assert_eq!(confidence_score(&mid).unwrap(), 45.0);
    }

    #[test]
    fn collision_caps_confidence_at_75() {
        // Even a policy that beats its baseline everywhere else cannot
        // exceed 75 with a collision on the books.
        let mut report = passing_report();
        report.collisions = 1;
        report.baseline_sr = 0.0;
        let c = confidence_score(&report).unwrap();
        assert!(c <= 75.0, "confidence {c}");
        assert_eq!(c, 75.0);
    }

    #[test]
    fn confidence_monotone_in_sr_and_edge_sr() {
        let mut lower = passing_report();
        let mut higher = passing_report();
        lower.sr = 0.5;
        higher.sr = 0.6;
        assert!(confidence_score(&lower).unwrap() <= confidence_score(&higher).unwrap());
        lower = passing_report();
        higher = passing_report();
        lower.edge_sr = 0.2;
        higher.edge_sr = 0.9;
        assert!(confidence_score(&lower).unwrap() <= confidence_score(&higher).unwrap());
    }

    #[test]
    fn errors_on_degenerate_inputs() {
        assert!(matches!(
            evaluate_metrics(&[], &[], &baseline()),
            Err(GateError::EmptyEpisodes)
        ));
        let episodes = vec![success_episode(3.0)];
        assert!(matches!(
            evaluate_metrics(&episodes, &[], &baseline()),
            Err(GateError::EdgeFlagMismatch(0, 1))
        ));
        let bad = BaselineStats {
            cycle_time: 0.0,
            miss_rate: 0.0,
            sr: 1.0,
        };
        assert!(matches!(
            evaluate_metrics(&episodes, &[false], &bad),
            Err(GateError::BadBaselineCycle(_))
        ));
        let mut report = passing_report();
        report.baseline_cycle = -1.0;
        assert!(confidence_score(&report).is_err());
    }

    #[test]
    fn gate_report_renders_rows() {
        let report = GateReport::new(passing_report()).unwrap();
        let text = report.render_text();
        assert!(text.contains("success_rate"));
        assert!(text.contains("grasp_miss_rate"));
        assert!(text.contains("gate PASS"));
        let json = serde_json::to_string(&report).unwrap();
        assert!(json.contains("\"confidence\":100.0"));
    }
}
