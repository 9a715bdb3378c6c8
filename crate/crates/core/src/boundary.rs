//! Per-parameter binning and boundary-region detection.
//!
//! For each continuous dimension the full range is split into equal-width
//! bins (on raw values, also for log-scaled dimensions) and the per-bin
//! success rate computed. Bins whose success rate falls inside the detection
//! window define that dimension's boundary range; when none qualify the
//! dimension falls back to its declared fallback range.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dictionary::Dataset;
use crate::param_space::ParamSpace;
use crate::sampler::{Comparator, EmphasisSpec, EmphasisTerm};

pub const DEFAULT_SR_WINDOW: (f64, f64) = (0.30, 0.70);
pub const DEFAULT_BINS: usize = 10;

#[derive(Debug, Error)]
pub enum BoundaryError {
    #[error("dimension '{0}' is not a continuous dimension")]
    NotContinuous(String),
    #[error("unknown dimension '{0}'")]
    UnknownDim(String),
    #[error("bin count must be >= 2")]
    TooFewBins,
    #[error("record missing value for dimension '{0}'")]
    MissingValue(String),
}

/// Index of the equal-width bin containing `v`; bins are right-open except
/// the last, which is closed at `hi`.
pub(crate) fn bin_index(v: f64, lo: f64, hi: f64, k: usize) -> usize {
    let t = (v - lo) / (hi - lo);
    ((t * k as f64).floor() as usize).min(k - 1)
}

/// Success-rate statistics of one bin.
#[derive(Debug, Clone, PartialEq)]
pub struct BinStat {
    pub dim: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub n_success: usize,
    /// `None` for empty bins, where the rate is undefined.
    pub sr: Option<f64>,
}

/// Per-bin success rates of one continuous dimension over its full range.
pub fn bin_success_rates(
    ds: &Dataset,
    space: &ParamSpace,
    dim: &str,
    k: usize,
) -> Result<Vec<BinStat>, BoundaryError> {
    let def = space
        .dim(dim)
        .ok_or_else(|| BoundaryError::UnknownDim(dim.to_string()))?;
    if !def.kind.is_continuous() {
        return Err(BoundaryError::NotContinuous(dim.to_string()));
    }
    if k < 2 {
        return Err(BoundaryError::TooFewBins);
    }
    let width = (def.hi - def.lo) / k as f64;
    let mut stats: Vec<BinStat> = (0..k)
        .map(|i| BinStat {
            dim: dim.to_string(),
            lo: def.lo + i as f64 * width,
            hi: if i == k - 1 {
                def.hi
            } else {
                def.lo + (i + 1) as f64 * width
            },
            n: 0,
            n_success: 0,
            sr: None,
        })
        .collect();
    for rec in &ds.records {
        let v = rec
            .f64_value(dim)
            .ok_or_else(|| BoundaryError::MissingValue(dim.to_string()))?;
        let idx = bin_index(v, def.lo, def.hi, k);
        stats[idx].n += 1;
        if rec.outcome.success {
            stats[idx].n_success += 1;
        }
    }
    for s in &mut stats {
        if s.n > 0 {
            s.sr = Some(s.n_success as f64 / s.n as f64);
        }
    }
    Ok(stats)
}

/// Whether a dimension's narrowed range came from qualifying bins or from
/// the fallback range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Detected,
    Fallback,
}

impl std::fmt::Display for Provenance {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Provenance::Detected => write!(f, "detected"),
            Provenance::Fallback => write!(f, "fallback"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRange {
    pub lo: f64,
    pub hi: f64,
    pub provenance: Provenance,
}

/// Narrowed per-dimension ranges for Stage-2 sampling.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BoundaryRegion {
    ranges: BTreeMap<String, BoundaryRange>,
}

impl BoundaryRegion {
    pub fn insert(&mut self, dim: &str, range: BoundaryRange) {
        self.ranges.insert(dim.to_string(), range);
    }

    pub fn range(&self, dim: &str) -> Option<&BoundaryRange> {
        self.ranges.get(dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BoundaryRange)> {
        self.ranges.iter()
    }

    /// Plain-text rendering, one `range <dim> <lo> <hi> <provenance>` line
    /// per dimension.
    pub fn to_text(&self, space: &str) -> String {
        let mut out = format!("boundaryregion v1 {space}\n");
        for (dim, r) in &self.ranges {
            out.push_str(&format!(
                "range {dim} {} {} {}\n",
                r.lo, r.hi, r.provenance
            ));
        }
        out
    }
}

/// Detects the boundary region of a dataset: per continuous dimension, the
/// interval hull of bins whose success rate lies inside `[sr_lo, sr_hi]`
/// (inclusive both ends); the fallback range when no bin qualifies. Empty
/// bins neither qualify nor disqualify.
pub fn detect_boundary(
    ds: &Dataset,
    space: &ParamSpace,
    bins: usize,
    sr_lo: f64,
    sr_hi: f64,
) -> Result<BoundaryRegion, BoundaryError> {
    let mut region = BoundaryRegion::default();
    for def in space.continuous_dims() {
        let stats = bin_success_rates(ds, space, &def.name, bins)?;
        let qualifying: Vec<&BinStat> = stats
            .iter()
            .filter(|s| s.sr.is_some_and(|sr| sr >= sr_lo && sr <= sr_hi))
            .collect();
        let range = if qualifying.is_empty() {
            let (lo, hi) = space.fallback_range(def);
            BoundaryRange {
                lo,
                hi,
                provenance: Provenance::Fallback,
            }
        } else {
            // Interval hull: min lo to max hi over qualifying bins, even when
            // they are non-contiguous.
            let lo = qualifying.iter().map(|s| s.lo).fold(f64::INFINITY, f64::min);
            let hi = qualifying
                .iter()
                .map(|s| s.hi)
                .fold(f64::NEG_INFINITY, f64::max);
            BoundaryRange {
                lo,
                hi,
                provenance: Provenance::Detected,
            }
        };
        region.insert(&def.name, range);
    }
    Ok(region)
}

/// The fixed Stage-2 emphasis sub-region: low friction with moderate-to-high
/// mass, which carries the steepest success-rate gradient, allocated 30% of
/// the batch.
pub fn emphasis_for_franka() -> EmphasisSpec {
    EmphasisSpec::new(
        vec![
            EmphasisTerm {
                dim: "friction".into(),
                cmp: Comparator::Lt,
                threshold: 0.3,
            },
            EmphasisTerm {
                dim: "mass".into(),
                cmp: Comparator::Ge,
                threshold: 0.5,
            },
        ],
        0.30,
    )
    .expect("fixed spec is valid")
}
