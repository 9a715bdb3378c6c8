//! Interpretable logistic risk model.
//!
//! Fits a ridge-stabilized logistic regression by iteratively reweighted
//! least squares on (optionally standardized) features with pairwise
//! interactions, and derives everything the validation reports need from it:
//! Wald z-scores and p-values, failure-probability predictions, ROC/AUC,
//! the closed-form two-parameter decision boundary, and bootstrap estimates
//! of 50%-crossing thresholds.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::dictionary::Dataset;
use crate::param_space::{ParamValue, ScenarioConfig};
use crate::rng;

/// Default ridge penalty on non-intercept coefficients. Keeps near-separable
/// subsets (boundary-focused regions can be close to separable) from
/// diverging while perturbing well-identified fits below statistical noise.
pub const DEFAULT_RIDGE: f64 = 1e-6;

pub const MAX_IRLS_ITERATIONS: usize = 100;
pub const IRLS_TOLERANCE: f64 = 1e-8;

/// Bootstrap iterations whose fitted slope is smaller than this are
/// discarded as unidentifiable.
pub const SLOPE_IDENTIFIABILITY_FLOOR: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum RiskError {
    #[error("missing feature '{0}'")]
    MissingFeature(String),
    #[error("feature '{0}' is not numeric; use its penalty encoding")]
    NotNumeric(String),
    #[error("unknown category '{label}' for feature '{feature}'")]
    UnknownCategory { feature: String, label: String },
    #[error("design matrix has no rows")]
    EmptyDesign,
    #[error("labels contain a single class")]
    SingleClass,
    #[error("singular system; increase the ridge penalty")]
    SingularSystem,
    #[error("coefficients diverged")]
    Diverged,
    #[error("model did not converge")]
    NotConverged,
    #[error("zero variance for coefficient '{0}'")]
    ZeroVariance(String),
    #[error("boundary curve singular at mass {0}")]
    BoundarySingularity(f64),
    #[error("threshold unidentifiable: {discarded}/{total} iterations discarded")]
    ThresholdUnidentifiable { discarded: usize, total: usize },
    #[error("model artifact: {0}")]
    Artifact(String),
}

/// Ordinal encoding of the object shape by grasp difficulty.
const SHAPE_PENALTY: [(&str, f64); 4] = [
    ("box", 0.0),
    ("cylinder", 1.0),
    ("sphere", 2.0),
    ("irregular", 3.0),
];

/// Ordinal encoding of the placement label: center positions 0-3 by angle,
/// edge positions 4-7 by angle.
const PLACEMENT_PENALTY: [(&str, f64); 8] = [
    ("center_0", 0.0),
    ("center_45", 1.0),
    ("center_90", 2.0),
    ("center_135", 3.0),
    ("edge_0", 4.0),
    ("edge_45", 5.0),
    ("edge_90", 6.0),
    ("edge_135", 7.0),
];

/// Resolves a feature name against a configuration's values. Numeric
/// dimensions resolve directly; `shape_penalty` and `placement_penalty`
/// resolve through their ordinal encodings.
pub fn extract_feature(
    values: &BTreeMap<String, ParamValue>,
    name: &str,
) -> Result<f64, RiskError> {
    let lookup = |table: &[(&str, f64)], source: &str| -> Result<f64, RiskError> {
        let label = values
            .get(source)
            .ok_or_else(|| RiskError::MissingFeature(source.to_string()))?
            .as_label()
            .ok_or_else(|| RiskError::NotNumeric(source.to_string()))?
            .to_string();
        table
            .iter()
            .find(|(l, _)| *l == label)
            .map(|(_, v)| *v)
            .ok_or(RiskError::UnknownCategory {
                feature: name.to_string(),
                label,
            })
    };
    match name {
        "shape_penalty" => lookup(&SHAPE_PENALTY, "shape"),
        "placement_penalty" => lookup(&PLACEMENT_PENALTY, "placement"),
        _ => {
            let v = values
                .get(name)
                .ok_or_else(|| RiskError::MissingFeature(name.to_string()))?;
            v.as_f64().ok_or_else(|| RiskError::NotNumeric(name.to_string()))
        }
    }
}

/// Declares the model's features: base features plus pairwise interactions,
/// computed on standardized components when `standardize` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub base: Vec<String>,
    pub interactions: Vec<(String, String)>,
    pub standardize: bool,
}

impl FeatureSpec {
    pub fn new(base: &[&str], interactions: &[(&str, &str)], standardize: bool) -> Self {
        Self {
            base: base.iter().map(|s| s.to_string()).collect(),
            interactions: interactions
                .iter()
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .collect(),
            standardize,
        }
    }

    /// Expanded column names: base features, then `a*b` per interaction.
    pub fn feature_names(&self) -> Vec<String> {
        let mut names = self.base.clone();
        names.extend(self.interactions.iter().map(|(a, b)| format!("{a}*{b}")));
        names
    }

    /// Every raw feature the spec reads, base and interaction components.
    fn referenced(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for name in self
            .base
            .iter()
            .chain(self.interactions.iter().flat_map(|(a, b)| [a, b]))
        {
            if seen.insert(name.clone()) {
                out.push(name.clone());
            }
        }
        out
    }
}

/// Design rows and labels built from a dataset, plus the standardization
/// constants the rows were built with.
#[derive(Debug, Clone)]
pub struct DesignMatrix {
    pub spec: FeatureSpec,
    pub feature_names: Vec<String>,
    pub standardization: BTreeMap<String, (f64, f64)>,
    pub rows: Vec<Vec<f64>>,
    /// Episode success as the binary label.
    pub labels: Vec<bool>,
}

/// Builds the design matrix for a dataset. Standardization constants are the
/// dataset's own moments; constant features standardize with sd 1 so they
/// contribute a zero column rather than an error.
pub fn build_features(ds: &Dataset, spec: &FeatureSpec) -> Result<DesignMatrix, RiskError> {
    let referenced = spec.referenced();
    let n = ds.records.len();
    let mut raw: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for name in &referenced {
        let mut column = Vec::with_capacity(n);
        for rec in &ds.records {
            column.push(extract_feature(&rec.values, name)?);
        }
        raw.insert(name.clone(), column);
    }
    let mut standardization = BTreeMap::new();
    for name in &referenced {
        let (mean, sd) = if spec.standardize && n > 0 {
            let column = &raw[name];
            let mean = column.iter().sum::<f64>() / n as f64;
            let var = column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            (mean, if sd < 1e-12 { 1.0 } else { sd })
        } else {
            (0.0, 1.0)
        };
        standardization.insert(name.clone(), (mean, sd));
    }
    let z = |name: &str, i: usize| -> f64 {
        let (mean, sd) = standardization[name];
        (raw[name][i] - mean) / sd
    };
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (i, rec) in ds.records.iter().enumerate() {
        let mut row = Vec::with_capacity(spec.base.len() + spec.interactions.len());
        for name in &spec.base {
            row.push(z(name, i));
        }
        for (a, b) in &spec.interactions {
            row.push(z(a, i) * z(b, i));
        }
        rows.push(row);
        labels.push(rec.outcome.success);
    }
    Ok(DesignMatrix {
        spec: spec.clone(),
        feature_names: spec.feature_names(),
        standardization,
        rows,
        labels,
    })
}

/// Raw output of one IRLS fit.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// (p+1)x(p+1) covariance, intercept first.
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Maximizes the ridge-penalized log-likelihood by iteratively reweighted
/// least squares. The intercept is unpenalized. Convergence is declared when
/// the largest coefficient change drops below [`IRLS_TOLERANCE`]; a model
/// that runs out of iterations is returned with `converged = false`.
pub fn fit_matrix(
    rows: &[Vec<f64>],
    labels: &[bool],
    ridge: f64,
) -> Result<FitResult, RiskError> {
    let n = rows.len();
    if n == 0 || labels.len() != n {
        return Err(RiskError::EmptyDesign);
    }
    let p = rows[0].len() + 1;
    let mut x = DMatrix::zeros(n, p);
    for (i, row) in rows.iter().enumerate() {
        x[(i, 0)] = 1.0;
        for (j, v) in row.iter().enumerate() {
            x[(i, j + 1)] = *v;
        }
    }
    let y = DVector::from_iterator(n, labels.iter().map(|&b| if b { 1.0 } else { 0.0 }));
    let mut beta: DVector<f64> = DVector::zeros(p);
    let mut xw = DMatrix::zeros(n, p);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 1..=MAX_IRLS_ITERATIONS {
        iterations = iter;
        let eta = &x * &beta;
        let mut wz = DVector::zeros(n);
        for i in 0..n {
            let mu = sigmoid(eta[i]);
            let w = (mu * (1.0 - mu)).max(1e-10);
            let z = eta[i] + (y[i] - mu) / w;
            for j in 0..p {
                xw[(i, j)] = x[(i, j)] * w;
            }
            wz[i] = w * z;
        }
        let mut a = x.tr_mul(&xw);
        for j in 1..p {
            a[(j, j)] += ridge;
        }
        let b = x.tr_mul(&wz);
        let chol = a.cholesky().ok_or(RiskError::SingularSystem)?;
        let next = chol.solve(&b);
        if next.iter().any(|v| !v.is_finite()) {
            return Err(RiskError::Diverged);
        }
        let delta = (&next - &beta).amax();
        beta = next;
        if delta < IRLS_TOLERANCE {
            converged = true;
            break;
        }
    }
    // Penalized observed information at the final coefficients.
    let eta = &x * &beta;
    for i in 0..n {
        let mu = sigmoid(eta[i]);
        let w = (mu * (1.0 - mu)).max(1e-10);
        for j in 0..p {
            xw[(i, j)] = x[(i, j)] * w;
        }
    }
    let mut info = x.tr_mul(&xw);
    for j in 1..p {
        info[(j, j)] += ridge;
    }
    let cov = info
        .cholesky()
        .ok_or(RiskError::SingularSystem)?
        .inverse();
    let covariance: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| (cov[(i, j)] + cov[(j, i)]) / 2.0).collect())
        .collect();
    Ok(FitResult {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        covariance,
        converged,
        iterations,
    })
}

/// A fitted risk model: coefficients on the spec's features, the
/// standardization constants they were trained with, and the coefficient
/// covariance for Wald inference. The linear predictor models the success
/// probability; failure probability is its complement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskModel {
    pub version: u32,
    /// Sign convention marker: the linear predictor targets this label.
    pub target: String,
    pub spec: FeatureSpec,
    pub feature_names: Vec<String>,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub standardization: BTreeMap<String, (f64, f64)>,
    pub covariance: Vec<Vec<f64>>,
    pub converged: bool,
    pub iterations: usize,
}

/// Fits a [`RiskModel`] from built features.
pub fn fit_logistic(design: &DesignMatrix, ridge: f64) -> Result<RiskModel, RiskError> {
    let fit = fit_matrix(&design.rows, &design.labels, ridge)?;
    Ok(RiskModel {
        version: 1,
        target: "success".to_string(),
        spec: design.spec.clone(),
        feature_names: design.feature_names.clone(),
        intercept: fit.intercept,
        coefficients: fit.coefficients,
        standardization: design.standardization.clone(),
        covariance: fit.covariance,
        converged: fit.converged,
        iterations: fit.iterations,
    })
}

/// Convenience: build features and fit in one step.
pub fn fit(ds: &Dataset, spec: &FeatureSpec, ridge: f64) -> Result<RiskModel, RiskError> {
    fit_logistic(&build_features(ds, spec)?, ridge)
}

impl RiskModel {
    fn z(&self, values: &BTreeMap<String, ParamValue>, name: &str) -> Result<f64, RiskError> {
        let raw = extract_feature(values, name)?;
        let (mean, sd) = self
            .standardization
            .get(name)
            .copied()
            .unwrap_or((0.0, 1.0));
        Ok((raw - mean) / sd)
    }

    /// Linear predictor for a configuration's values.
    pub fn linear_predictor(
        &self,
        values: &BTreeMap<String, ParamValue>,
    ) -> Result<f64, RiskError> {
        let mut lp = self.intercept;
        let mut idx = 0;
        for name in &self.spec.base {
            lp += self.coefficients[idx] * self.z(values, name)?;
            idx += 1;
        }
        for (a, b) in &self.spec.interactions {
            lp += self.coefficients[idx] * self.z(values, a)? * self.z(values, b)?;
            idx += 1;
        }
        Ok(lp)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, RiskError> {
        serde_json::from_str(text).map_err(|e| RiskError::Artifact(e.to_string()))
    }
}

/// Predicted failure probability for a configuration.
pub fn predict_fail_prob(model: &RiskModel, cfg: &ScenarioConfig) -> Result<f64, RiskError> {
    predict_fail_prob_values(model, &cfg.values)
}

pub fn predict_fail_prob_values(
    model: &RiskModel,
    values: &BTreeMap<String, ParamValue>,
) -> Result<f64, RiskError> {
    let lp = model.linear_predictor(values)?;
    Ok((1.0 - sigmoid(lp)).clamp(0.0, 1.0))
}

/// Wald statistic of one coefficient.
#[derive(Debug, Clone, PartialEq)]
pub struct WaldStat {
    pub name: String,
    pub coefficient: f64,
    pub z: f64,
    pub p: f64,
}

/// Per-coefficient Wald z-scores and two-sided p-values, intercept first.
pub fn wald_stats(model: &RiskModel) -> Result<Vec<WaldStat>, RiskError> {
    if !model.converged {
        return Err(RiskError::NotConverged);
    }
    let normal = Normal::standard();
    let mut names = vec!["intercept".to_string()];
    names.extend(model.feature_names.iter().cloned());
    let mut coefs = vec![model.intercept];
    coefs.extend(model.coefficients.iter().copied());
    let mut out = Vec::with_capacity(coefs.len());
    for (i, (name, coefficient)) in names.into_iter().zip(coefs).enumerate() {
        let var = model.covariance[i][i];
        if var <= 0.0 {
            return Err(RiskError::ZeroVariance(name));
        }
        let z = coefficient / var.sqrt();
        let p = 2.0 * normal.cdf(-z.abs());
        out.push(WaldStat {
            name,
            coefficient,
            z,
            p,
        });
    }
    Ok(out)
}

/// Renders Wald rows as an aligned text table, largest |z| first after the
/// intercept.
pub fn format_wald_table(rows: &[WaldStat]) -> String {
    let mut sorted: Vec<&WaldStat> = rows.iter().collect();
    sorted.sort_by(|a, b| {
        (b.name == "intercept")
            .cmp(&(a.name == "intercept"))
            .then(b.z.abs().partial_cmp(&a.z.abs()).unwrap())
    });
    let mut out = format!(
        "{:<24} {:>10} {:>9} {:>12}\n",
        "feature", "coeff", "z", "p"
    );
    for row in sorted {
        out.push_str(&format!(
            "{:<24} {:>10.3} {:>9.2} {:>12.3e}\n",
            row.name, row.coefficient, row.z, row.p
        ));
    }
    out
}

/// One point of a ROC curve; `threshold` is the score at or above which a
/// case is called positive.
#[derive(Debug, Clone, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub auc: f64,
    pub points: Vec<RocPoint>,
}

/// Rank-statistic AUC with half credit for ties, plus the (FPR, TPR) curve
/// at every distinct score threshold. `labels` marks positives; scores rank
/// positives high.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, RiskError> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(RiskError::SingleClass);
    }
    // Midranks over ascending scores.
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // Average rank of the tie group, 1-based.
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &idx in &order[i..j] {
            if labels[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    let auc = u / (n_pos as f64 * n_neg as f64);

    // Curve swept from the highest score down.
    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = order.len();
    while i > 0 {
        let mut j = i;
        let score = scores[order[i - 1]];
        while j > 0 && scores[order[j - 1]] == score {
            if labels[order[j - 1]] {
                tp += 1;
            } else {
                fp += 1;
            }
            j -= 1;
        }
        points.push(RocPoint {
            threshold: score,
            fpr: fp as f64 / n_neg as f64,
            tpr: tp as f64 / n_pos as f64,
        });
        i = j;
    }
    Ok(RocCurve { auc, points })
}

/// Friction value where the two-parameter interaction logit crosses zero:
/// `mu*(m) = -(b0 + b2 m) / (b1 + b3 m)`.
pub fn boundary_curve(coeffs: [f64; 4], mass: f64) -> Result<f64, RiskError> {
    let [b0, b1, b2, b3] = coeffs;
    let denom = b1 + b3 * mass;
    if denom.abs() < 1e-12 {
        return Err(RiskError::BoundarySingularity(mass));
    }
    Ok(-(b0 + b2 * mass) / denom)
}

/// Bootstrap estimate of the 50% success crossing of one dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEstimate {
    pub dim: String,
    pub threshold: f64,
    pub ci95: (f64, f64),
    pub se: f64,
    /// Iterations retained after discarding unidentifiable fits.
    pub iterations: usize,
    pub discarded: usize,
}

impl ThresholdEstimate {
    /// One report row, e.g. `friction 0.492 [0.450, 0.545] 0.031`.
    pub fn format_row(&self) -> String {
        format!(
            "{} {:.3} [{:.3}, {:.3}] {:.3}",
            self.dim, self.threshold, self.ci95.0, self.ci95.1, self.se
        )
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Estimates where the per-dimension univariate logistic crosses 50%
/// success by resampling records with replacement `iters` times. The
/// estimate is the median over iterations; the interval is the 2.5/97.5
/// percentile band. Iterations with an unidentifiable slope are discarded;
/// more than half discarded is an error.
pub fn bootstrap_threshold(
    ds: &Dataset,
    dim: &str,
    iters: usize,
    seed: u64,
) -> Result<ThresholdEstimate, RiskError> {
    if ds.records.is_empty() {
        return Err(RiskError::EmptyDesign);
    }
    let xs: Vec<f64> = ds
        .records
        .iter()
        .map(|r| {
            r.f64_value(dim)
                .ok_or_else(|| RiskError::MissingFeature(dim.to_string()))
        })
        .collect::<Result<_, _>>()?;
    let ys: Vec<bool> = ds.records.iter().map(|r| r.outcome.success).collect();
    if ys.iter().all(|&y| y) || ys.iter().all(|&y| !y) {
        return Err(RiskError::SingleClass);
    }
    let n = xs.len();
    let estimates: Vec<Option<f64>> = (0..iters as u64)
        .into_par_iter()
        .map(|iter| {
            let mut stream = rng::stream(seed, "bootstrap-threshold", iter);
            let mut rows = Vec::with_capacity(n);
            let mut labels = Vec::with_capacity(n);
            for _ in 0..n {
                let idx = stream.next_below(n as u64) as usize;
                rows.push(vec![xs[idx]]);
                labels.push(ys[idx]);
            }
            match fit_matrix(&rows, &labels, DEFAULT_RIDGE) {
                Ok(fit)
                    if fit.converged
                        && fit.coefficients[0].abs() > SLOPE_IDENTIFIABILITY_FLOOR =>
                {
                    Some(-fit.intercept / fit.coefficients[0])
                }
                _ => None,
            }
        })
        .collect();
    let mut kept: Vec<f64> = estimates.into_iter().flatten().collect();
    let discarded = iters - kept.len();
    if discarded * 2 > iters {
        return Err(RiskError::ThresholdUnidentifiable {
            discarded,
            total: iters,
        });
    }
    kept.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let threshold = quantile(&kept, 0.5);
    let ci95 = (quantile(&kept, 0.025), quantile(&kept, 0.975));
    let mean = kept.iter().sum::<f64>() / kept.len() as f64;
    let se = (kept.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
        / (kept.len() - 1) as f64)
        .sqrt();
    Ok(ThresholdEstimate {
        dim: dim.to_string(),
        threshold,
        ci95,
        se,
        iterations: kept.len(),
        discarded,
    })
}
