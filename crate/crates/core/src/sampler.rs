//! Two-stage sampling: uniform Latin Hypercube exploration and
//! boundary-focused refinement with an emphasis sub-region.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::boundary::BoundaryRegion;
use crate::param_space::{
    scale_in_range, scale_to_value, validate_config, ParamKind, ParamSpace, ScenarioConfig,
};
use crate::rng;

#[derive(Debug, Error)]
pub enum SamplerError {
    #[error("sample count must be >= 1")]
    EmptySampleCount,
    #[error("dimension count must be >= 1")]
    EmptyDimCount,
    #[error("emphasis fraction {0} outside [0, 1]")]
    BadFraction(f64),
    #[error("emphasis region empty")]
    EmptyEmphasisRegion,
    #[error("emphasis dimension '{0}' is not a continuous dimension of the region")]
    BadEmphasisDim(String),
    #[error("boundary region missing continuous dimension '{0}'")]
    RegionMissingDim(String),
    #[error("obstacle minimum {0} exceeds dimension maximum {1}")]
    BadObstacleMin(i64, i64),
    #[error(transparent)]
    ParamSpace(#[from] crate::param_space::ParamSpaceError),
}

/// Sampling stage provenance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Stage1,
    Stage2,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Stage1 => write!(f, "stage1"),
            Stage::Stage2 => write!(f, "stage2"),
        }
    }
}

/// An ordered batch of configurations produced by one sampling call.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub space: String,
    pub configs: Vec<ScenarioConfig>,
    pub seed: u64,
    pub stage: Stage,
}

/// Comparator in an emphasis predicate term.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Comparator {
    Lt,
    Le,
    Gt,
    Ge,
}

impl Comparator {
    pub fn matches(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
            Comparator::Gt => value > threshold,
            Comparator::Ge => value >= threshold,
        }
    }
}

/// One term of an emphasis predicate, e.g. `friction < 0.3`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmphasisTerm {
    pub dim: String,
    pub cmp: Comparator,
    pub threshold: f64,
}

/// A conjunction of threshold terms plus the fraction of the batch that must
/// be drawn from inside the predicate region.
#[derive(Debug, Clone, PartialEq)]
pub struct EmphasisSpec {
    pub terms: Vec<EmphasisTerm>,
    pub fraction: f64,
}

impl EmphasisSpec {
    pub fn new(terms: Vec<EmphasisTerm>, fraction: f64) -> Result<Self, SamplerError> {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(SamplerError::BadFraction(fraction));
        }
        Ok(Self { terms, fraction })
    }

    /// Empty predicate with fraction zero: plain LHS over the region.
    pub fn none() -> Self {
        Self {
            terms: Vec::new(),
            fraction: 0.0,
        }
    }

    pub fn matches(&self, cfg: &ScenarioConfig) -> bool {
        self.terms.iter().all(|t| {
            cfg.f64_value(&t.dim)
                .is_some_and(|v| t.cmp.matches(v, t.threshold))
        })
    }
}

fn next_up(v: f64) -> f64 {
    // Positive finite floats only, which is all this module produces.
    f64::from_bits(v.to_bits() + 1)
}

fn next_down(v: f64) -> f64 {
    f64::from_bits(v.to_bits() - 1)
}

/// Value inside stratum `k` of `n`, nudged so that `floor(v * n) == k` holds
/// exactly in f64 arithmetic (plain `(k + r) / n` can land one stratum off
/// after the division/multiplication round trip).
fn stratum_value(k: usize, r: f64, n: usize) -> f64 {
    let nf = n as f64;
    let mut v = (k as f64 + r) / nf;
    while v * nf < k as f64 {
        v = next_up(v);
    }
    while v * nf >= (k + 1) as f64 {
        v = next_down(v);
    }
    v
}

/// Latin Hypercube sample of `n` points in `d` unit-interval dimensions.
///
/// Each column places exactly one point in each of the `n` equal strata
/// `[k/n, (k+1)/n)`: strata are assigned by a seeded per-column permutation
/// and jittered uniformly within the stratum. Deterministic for a fixed
/// `(n, d, seed)` triple.
pub fn lhs_unit(n: usize, d: usize, seed: u64) -> Result<Vec<Vec<f64>>, SamplerError> {
    if n == 0 {
        return Err(SamplerError::EmptySampleCount);
    }
    if d == 0 {
        return Err(SamplerError::EmptyDimCount);
    }
    let mut rows = vec![vec![0.0; d]; n];
    for col in 0..d {
        let mut perm: Vec<usize> = (0..n).collect();
        let mut perm_rng = rng::stream(seed, "lhs-perm", col as u64);
        // Fisher-Yates
        for i in (1..n).rev() {
            let j = perm_rng.next_below(i as u64 + 1) as usize;
            perm.swap(i, j);
        }
        let mut jitter_rng = rng::stream(seed, "lhs-jitter", col as u64);
        for (row, stratum) in perm.into_iter().enumerate() {
            rows[row][col] = stratum_value(stratum, jitter_rng.next_f64(), n);
        }
    }
    Ok(rows)
}

/// Uniform Stage-1 batch: continuous dimensions through LHS (log dimensions
/// uniform in log space), discrete dimensions from independent per-config
/// streams.
pub fn sample_stage1(
    space: &ParamSpace,
    n: usize,
    seed: u64,
) -> Result<SampleBatch, SamplerError> {
    let continuous: Vec<&crate::param_space::ParamDef> = space.continuous_dims().collect();
    let lhs = if continuous.is_empty() {
        Vec::new()
    } else {
        lhs_unit(n, continuous.len(), seed)?
    };
    if n == 0 {
        return Err(SamplerError::EmptySampleCount);
    }
    let mut configs = Vec::with_capacity(n);
    for i in 0..n {
        let mut values = std::collections::BTreeMap::new();
        for (col, def) in continuous.iter().enumerate() {
            values.insert(def.name.clone(), scale_to_value(def, lhs[i][col])?);
        }
        for def in space.dims.iter().filter(|d| !d.kind.is_continuous()) {
            let tag = format!("stage1-discrete-{}", def.name);
            let u = rng::stream(seed, &tag, i as u64).next_f64();
            values.insert(def.name.clone(), scale_to_value(def, u)?);
        }
        configs.push(ScenarioConfig {
            space: space.name.clone(),
            values,
            sample_idx: i as u64,
        });
    }
    debug_assert!(configs
        .iter()
        .all(|c| validate_config(space, c).is_empty()));
    Ok(SampleBatch {
        space: space.name.clone(),
        configs,
        seed,
        stage: Stage::Stage1,
    })
}

/// Narrowed `[lo, hi]` for a continuous dimension after intersecting the
/// boundary region with the emphasis predicate terms naming it.
fn clip_range(
    lo: f64,
    hi: f64,
    dim: &str,
    terms: &[EmphasisTerm],
) -> Result<(f64, f64), SamplerError> {
    let (mut lo, mut hi) = (lo, hi);
    for t in terms.iter().filter(|t| t.dim == dim) {
        match t.cmp {
            Comparator::Lt | Comparator::Le => hi = hi.min(t.threshold),
            Comparator::Ge => lo = lo.max(t.threshold),
            Comparator::Gt => {
                if t.threshold >= lo {
                    lo = next_up(t.threshold);
                }
            }
        }
    }
    if lo >= hi {
        return Err(SamplerError::EmptyEmphasisRegion);
    }
    Ok((lo, hi))
}

/// Boundary-focused Stage-2 batch.
///
/// `round(fraction * n)` configurations are drawn by a separate LHS over the
/// intersection of the region with the emphasis predicate (emphasis block
/// first), the remainder by LHS over the full region. Obstacle counts are
/// drawn from `[obstacle_min, hi]`; other discrete dimensions from their full
/// domains.
pub fn sample_stage2(
    space: &ParamSpace,
    region: &BoundaryRegion,
    n: usize,
    seed: u64,
    emphasis: &EmphasisSpec,
    obstacle_min: i64,
) -> Result<SampleBatch, SamplerError> {
    if n == 0 {
        return Err(SamplerError::EmptySampleCount);
    }
    let continuous: Vec<&crate::param_space::ParamDef> = space.continuous_dims().collect();
    // Region must cover every continuous dimension.
    let mut ranges = Vec::with_capacity(continuous.len());
    for def in &continuous {
        let r = region
            .range(&def.name)
            .ok_or_else(|| SamplerError::RegionMissingDim(def.name.clone()))?;
        ranges.push((r.lo, r.hi));
    }
    // Emphasis terms must name continuous dimensions.
    for t in &emphasis.terms {
        if !continuous.iter().any(|d| d.name == t.dim) {
            return Err(SamplerError::BadEmphasisDim(t.dim.clone()));
        }
    }
    let n_emph = (emphasis.fraction * n as f64).round_ties_even() as usize;
    let n_emph = n_emph.min(n);

    // Clipped sub-ranges for the emphasis block (validates non-emptiness even
    // when the block is empty by rounding).
    let mut emph_ranges = Vec::with_capacity(continuous.len());
    for (def, (lo, hi)) in continuous.iter().zip(&ranges) {
        emph_ranges.push(clip_range(*lo, *hi, &def.name, &emphasis.terms)?);
    }

    let blocks = [
        (n_emph, &emph_ranges, rng::derive_seed(seed, "stage2-emphasis")),
        (n - n_emph, &ranges, rng::derive_seed(seed, "stage2-rest")),
    ];
    let mut configs = Vec::with_capacity(n);
    for (count, block_ranges, block_seed) in blocks {
        if count == 0 {
            continue;
        }
        let lhs = if continuous.is_empty() {
            Vec::new()
        } else {
            lhs_unit(count, continuous.len(), block_seed)?
        };
        for row in 0..count {
            let idx = configs.len() as u64;
            let mut values = std::collections::BTreeMap::new();
            for (col, def) in continuous.iter().enumerate() {
                let (lo, hi) = block_ranges[col];
                values.insert(def.name.clone(), scale_in_range(def, lo, hi, lhs[row][col]));
            }
            for def in space.dims.iter().filter(|d| !d.kind.is_continuous()) {
                let tag = format!("stage2-discrete-{}", def.name);
                let u = rng::stream(seed, &tag, idx).next_f64();
                let value = if def.kind == ParamKind::Integer && def.name == "obstacles" {
                    let lo = obstacle_min.max(def.lo as i64);
                    let hi = def.hi as i64;
                    if lo > hi {
                        return Err(SamplerError::BadObstacleMin(obstacle_min, hi));
                    }
                    scale_in_range(def, lo as f64, hi as f64, u)
                } else {
                    scale_to_value(def, u)?
                };
                values.insert(def.name.clone(), value);
            }
            configs.push(ScenarioConfig {
                space: space.name.clone(),
                values,
                sample_idx: idx,
            });
        }
    }
    debug_assert!(configs
        .iter()
        .all(|c| validate_config(space, c).is_empty()));
    Ok(SampleBatch {
        space: space.name.clone(),
        configs,
        seed,
        stage: Stage::Stage2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::{BoundaryRange, BoundaryRegion, Provenance};
    use crate::param_space::franka_space;

    fn full_region(space: &ParamSpace) -> BoundaryRegion {
        let mut region = BoundaryRegion::default();
        for def in space.continuous_dims() {
            region.insert(
                &def.name,
                BoundaryRange {
                    lo: def.lo,
                    hi: def.hi,
                    provenance: Provenance::Detected,
                },
            );
        }
        region
    }

    #[test]
    fn lhs_strata_are_exact() {
        for n in [1usize, 4, 10, 137] {
            let rows = lhs_unit(n, 3, 2026).unwrap();
            for col in 0..3 {
                let mut strata: Vec<usize> = rows
                    .iter()
                    .map(|r| (r[col] * n as f64).floor() as usize)
                    .collect();
                strata.sort_unstable();
                assert_eq!(strata, (0..n).collect::<Vec<_>>(), "n={n} col={col}");
            }
        }
    }

    #[test]
    fn lhs_awkward_stratum_counts() {
        // n = 49 exercises the (k / n) * n < k rounding hazard.
        let rows = lhs_unit(49, 2, 7).unwrap();
        for col in 0..2 {
            let mut strata: Vec<usize> = rows
                .iter()
                .map(|r| (r[col] * 49.0).floor() as usize)
                .collect();
            strata.sort_unstable();
            assert_eq!(strata, (0..49).collect::<Vec<_>>());
        }
    }

    #[test]
    fn lhs_single_row_and_quartiles() {
        let row = lhs_unit(1, 3, 5).unwrap();
        assert_eq!(row.len(), 1);
        assert!(row[0].iter().all(|v| (0.0..1.0).contains(v)));

        let rows = lhs_unit(4, 1, 99).unwrap();
        let mut quartiles: Vec<usize> =
            rows.iter().map(|r| (r[0] * 4.0).floor() as usize).collect();
        quartiles.sort_unstable();
        assert_eq!(quartiles, vec![0, 1, 2, 3]);
    }

    #[test]
    fn lhs_is_deterministic() {
        let a = lhs_unit(1000, 5, 2026).unwrap();
        let b = lhs_unit(1000, 5, 2026).unwrap();
        assert_eq!(a, b);
        let c = lhs_unit(1000, 5, 2027).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn lhs_rejects_degenerate_shapes() {
        assert!(lhs_unit(0, 3, 1).is_err());
        assert!(lhs_unit(3, 0, 1).is_err());
    }

    #[test]
    fn stage1_configs_valid_and_deterministic() {
        let space = franka_space();
        let batch = sample_stage1(&space, 500, 2026).unwrap();
        assert_eq!(batch.configs.len(), 500);
        assert_eq!(batch.stage, Stage::Stage1);
        for (i, cfg) in batch.configs.iter().enumerate() {
            assert_eq!(cfg.sample_idx, i as u64);
            assert!(validate_config(&space, cfg).is_empty());
            let f = cfg.f64_value("friction").unwrap();
            assert!((0.05..=1.2).contains(&f));
        }
        let again = sample_stage1(&space, 500, 2026).unwrap();
        assert_eq!(batch.configs, again.configs);
    }

    #[test]
    fn stage1_deciles_are_exact() {
        let space = franka_space();
        let n = 1000;
        let batch = sample_stage1(&space, n, 2026).unwrap();
        for def in space.continuous_dims() {
            // Decile edges in value space are the images of the u-deciles.
            let edges: Vec<f64> = (0..=10)
                .map(|k| {
                    scale_to_value(def, k as f64 / 10.0)
                        .unwrap()
                        .as_f64()
                        .unwrap()
                })
                .collect();
            let mut counts = [0usize; 10];
            for cfg in &batch.configs {
                let v = cfg.f64_value(&def.name).unwrap();
                let k = edges[1..10].iter().filter(|&&e| v >= e).count();
                counts[k] += 1;
            }
            assert!(
                counts.iter().all(|&c| c == n / 10),
                "{}: {counts:?}",
                def.name
            );
        }
    }

    #[test]
    fn stage2_emphasis_block_exact() {
        let space = franka_space();
        let region = full_region(&space);
        let emphasis = EmphasisSpec::new(
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
        .unwrap();
        let batch = sample_stage2(&space, &region, 10, 41, &emphasis, 1).unwrap();
        assert_eq!(batch.configs.len(), 10);
        // The emphasis block is the first round(0.3 * 10) = 3 configs.
        for cfg in &batch.configs[..3] {
            assert!(emphasis.matches(cfg));
        }
        let total = batch.configs.iter().filter(|c| emphasis.matches(c)).count();
        assert!(total >= 3);
    }

    #[test]
    fn stage2_respects_obstacle_min() {
        let space = franka_space();
        let region = full_region(&space);
        let batch =
            sample_stage2(&space, &region, 200, 11, &EmphasisSpec::none(), 1).unwrap();
        for cfg in &batch.configs {
            let obstacles = cfg.value("obstacles").unwrap().as_i64().unwrap();
            assert!((1..=5).contains(&obstacles));
        }
    }

    #[test]
    fn stage2_zero_fraction_is_plain_lhs() {
        let space = franka_space();
        let region = full_region(&space);
        let batch =
            sample_stage2(&space, &region, 50, 3, &EmphasisSpec::none(), 0).unwrap();
        assert_eq!(batch.configs.len(), 50);
        for (i, cfg) in batch.configs.iter().enumerate() {
            assert_eq!(cfg.sample_idx, i as u64);
            assert!(validate_config(&space, cfg).is_empty());
        }
        let again = sample_stage2(&space, &region, 50, 3, &EmphasisSpec::none(), 0).unwrap();
        assert_eq!(batch.configs, again.configs);
    }

    #[test]
    fn stage2_stays_inside_region() {
        let space = franka_space();
        let mut region = full_region(&space);
        region.insert(
            "friction",
            BoundaryRange {
                lo: 0.2,
                hi: 0.6,
                provenance: Provenance::Detected,
            },
        );
        let batch =
            sample_stage2(&space, &region, 300, 17, &EmphasisSpec::none(), 1).unwrap();
        for cfg in &batch.configs {
            let f = cfg.f64_value("friction").unwrap();
            assert!((0.2..=0.6).contains(&f));
        }
    }

    #[test]
    fn stage2_empty_emphasis_intersection_errors() {
        let space = franka_space();
        let mut region = full_region(&space);
        region.insert(
            "friction",
            BoundaryRange {
                lo: 0.4,
                hi: 0.6,
                provenance: Provenance::Detected,
            },
        );
        let emphasis = EmphasisSpec::new(
            vec![EmphasisTerm {
                dim: "friction".into(),
                cmp: Comparator::Lt,
                threshold: 0.3,
            }],
            0.30,
        )
        .unwrap();
        let err = sample_stage2(&space, &region, 10, 1, &emphasis, 1).unwrap_err();
        assert!(matches!(err, SamplerError::EmptyEmphasisRegion));
    }

    #[test]
    fn emphasis_fraction_validated() {
        assert!(EmphasisSpec::new(Vec::new(), 1.5).is_err());
        assert!(EmphasisSpec::new(Vec::new(), -0.1).is_err());
    }
}
