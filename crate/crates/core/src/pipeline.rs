//! Pipeline orchestration: the stage runs, analysis bundle, and gate
//! evaluation behind the command-line interface.
//!
//! Episode execution fans out across a worker pool; each episode draws from
//! a stream derived from `(seed, "episode", sample_idx)`, so results are
//! identical for any worker count and reproducible from the run manifest.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::boundary::{detect_boundary, emphasis_for_franka, BoundaryError, BoundaryRegion};
use crate::dictionary::{
    label_zones, zone_from_sr, CellSpec, Dataset, DictionaryError, ExperimentRecord,
};
use crate::gate::{evaluate_metrics, BaselineStats, GateError, GateReport};
use crate::oracle::{
    run_episode, success_probability, ur5e_episode, ur5e_success_probability, EpisodeOutcome,
    OracleError, OracleParams,
};
use crate::param_space::{
    builtin_space, ParamSpace, ParamSpaceError, ScenarioConfig, FRANKA_SPACE, UR5E_SPACE,
};
use crate::remote::{RemoteError, RemoteOracle};
use crate::risk::{
    bootstrap_threshold, boundary_curve, fit, predict_fail_prob_values, roc_auc, wald_stats,
    FeatureSpec, RiskError, RiskModel, RocCurve, ThresholdEstimate, WaldStat, DEFAULT_RIDGE,
};
use crate::rng;
use crate::sampler::{sample_stage1, sample_stage2, EmphasisSpec, SamplerError, Stage};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    ParamSpace(#[from] ParamSpaceError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Dictionary(#[from] DictionaryError),
    #[error(transparent)]
    Boundary(#[from] BoundaryError),
    #[error(transparent)]
    Risk(#[from] RiskError),
    #[error(transparent)]
    Gate(#[from] GateError),
    #[error(transparent)]
    Remote(#[from] RemoteError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("no input datasets")]
    NoInputs,
    #[error("builtin oracle has no model for space '{0}'")]
    NoOracleForSpace(String),
}

/// Where episode outcomes come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OracleMode {
    Builtin,
    /// `host:port` of a remote oracle server speaking the wire protocol.
    Remote(String),
}

impl OracleMode {
    pub fn parse(s: &str) -> Option<Self> {
        if s == "builtin" {
            return Some(OracleMode::Builtin);
        }
        s.strip_prefix("tcp:").map(|ep| OracleMode::Remote(ep.to_string()))
    }
}

impl std::fmt::Display for OracleMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleMode::Builtin => write!(f, "builtin"),
            OracleMode::Remote(ep) => write!(f, "tcp:{ep}"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub oracle: OracleMode,
    /// Worker threads for episode execution; `None` uses the default pool.
    pub workers: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            oracle: OracleMode::Builtin,
            workers: None,
        }
    }
}

/// Deterministic description of a run, embedded in the output dataset
/// header. Wall-clock timestamps live in the sidecar manifest only, so
/// re-running a manifest reproduces the dataset byte for byte.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub command: String,
    pub space: String,
    pub n: usize,
    pub seed: u64,
    pub inputs: Vec<String>,
    pub output: String,
    pub oracle: String,
}

impl RunManifest {
    pub fn to_value(&self) -> Value {
        let mut map = Map::new();
        map.insert("command".into(), Value::from(self.command.as_str()));
        map.insert("space".into(), Value::from(self.space.as_str()));
        map.insert("n".into(), Value::from(self.n as u64));
        map.insert("seed".into(), Value::from(self.seed));
        map.insert(
            "inputs".into(),
            Value::from(
                self.inputs
                    .iter()
                    .map(|s| Value::from(s.as_str()))
                    .collect::<Vec<_>>(),
            ),
        );
        map.insert("output".into(), Value::from(self.output.as_str()));
        map.insert("oracle".into(), Value::from(self.oracle.as_str()));
        Value::Object(map)
    }
}

fn robot_label(space: &str) -> String {
    match space {
        FRANKA_SPACE => "franka".to_string(),
        UR5E_SPACE => "ur5e".to_string(),
        other => other.to_string(),
    }
}

/// Analytic failure probability of the built-in oracle for a configuration.
pub fn analytic_fail_prob(
    params: &OracleParams,
    space: &str,
    cfg: &ScenarioConfig,
) -> Result<f64, PipelineError> {
    let p = match space {
        FRANKA_SPACE => success_probability(params, cfg)?,
        UR5E_SPACE => ur5e_success_probability(cfg)?,
        other => return Err(PipelineError::NoOracleForSpace(other.to_string())),
    };
    Ok(1.0 - p)
}

fn with_pool<T: Send>(
    workers: Option<usize>,
    f: impl FnOnce() -> T + Send,
) -> Result<T, PipelineError> {
    match workers {
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| {
                    PipelineError::Io(std::io::Error::other(e.to_string()))
                })?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Runs one episode per configuration, in parallel and order-independent.
fn run_episodes(
    space: &str,
    configs: &[ScenarioConfig],
    seed: u64,
    opts: &RunOptions,
) -> Result<Vec<EpisodeOutcome>, PipelineError> {
    let params = OracleParams::franka();
    match &opts.oracle {
        OracleMode::Builtin => with_pool(opts.workers, || {
            configs
                .par_iter()
                .map(|cfg| -> Result<EpisodeOutcome, PipelineError> {
                    let mut stream = rng::stream(seed, "episode", cfg.sample_idx);
                    let outcome = match space {
                        FRANKA_SPACE => run_episode(&params, cfg, &mut stream)?,
                        UR5E_SPACE => ur5e_episode(cfg, &mut stream)?,
                        other => {
                            return Err(PipelineError::NoOracleForSpace(other.to_string()))
                        }
                    };
                    Ok(outcome)
                })
                .collect::<Result<Vec<_>, _>>()
        })?,
        OracleMode::Remote(endpoint) => {
            let endpoint = endpoint.clone();
            with_pool(opts.workers, move || {
                configs
                    .par_iter()
                    .map_init(
                        || None::<RemoteOracle>,
                        |conn, cfg| -> Result<EpisodeOutcome, PipelineError> {
                            if conn.is_none() {
                                *conn = Some(RemoteOracle::connect(&endpoint)?);
                            }
                            let client = conn.as_mut().expect("connected above");
                            let mut outcome = client.episode(space, cfg)?;
                            // fail_prob is out of band: fill it analytically.
                            outcome.fail_prob = analytic_fail_prob(&params, space, cfg)?;
                            Ok(outcome)
                        },
                    )
                    .collect::<Result<Vec<_>, _>>()
            })?
        }
    }
}

/// Default zone-labeling cells: the first two continuous dimensions, 10 bins
/// each (friction x mass on the 8-D space).
pub fn default_cell_spec(space: &ParamSpace) -> CellSpec {
    let dims: Vec<&str> = space
        .continuous_dims()
        .take(2)
        .map(|d| d.name.as_str())
        .collect();
    match dims.as_slice() {
        [a, b] => CellSpec::two(a, b, 10),
        [a] => CellSpec::one(a, 10),
        _ => CellSpec { dims: Vec::new() },
    }
}

fn assemble_dataset(
    space: &ParamSpace,
    configs: Vec<ScenarioConfig>,
    outcomes: Vec<EpisodeOutcome>,
    stage: Stage,
    seed: u64,
) -> Result<Dataset, PipelineError> {
    let robot = robot_label(&space.name);
    let records = configs
        .into_iter()
        .zip(outcomes)
        .map(|(cfg, outcome)| {
            // Provisional analytic zone; cell-based labeling follows.
            let zone = zone_from_sr(1.0 - outcome.fail_prob);
            ExperimentRecord {
                values: cfg.values,
                outcome,
                zone,
                sample_idx: cfg.sample_idx,
                robot: robot.clone(),
                stage: stage.to_string(),
                seed,
            }
        })
        .collect();
    let ds = Dataset {
        space: space.name.clone(),
        dims: space.dim_names(),
        robot: Some(robot),
        stage: Some(stage.to_string()),
        seed: Some(seed),
        manifest: None,
        records,
    };
    let spec = default_cell_spec(space);
    if spec.dims.is_empty() {
        return Ok(ds);
    }
    Ok(label_zones(&ds, space, &spec)?)
}

/// Stage 1: uniform exploration of a built-in space.
pub fn run_stage1(
    space_name: &str,
    n: usize,
    seed: u64,
    opts: &RunOptions,
) -> Result<Dataset, PipelineError> {
    let space = builtin_space(space_name)?;
    let batch = sample_stage1(&space, n, seed)?;
    let outcomes = run_episodes(&space.name, &batch.configs, seed, opts)?;
    assemble_dataset(&space, batch.configs, outcomes, Stage::Stage1, seed)
}

#[derive(Debug, Clone)]
pub struct Stage2Options {
    pub bins: usize,
    pub sr_window: (f64, f64),
    pub emphasis_fraction: f64,
    pub obstacle_min: i64,
}

impl Default for Stage2Options {
    fn default() -> Self {
        Self {
            bins: crate::boundary::DEFAULT_BINS,
            sr_window: crate::boundary::DEFAULT_SR_WINDOW,
            emphasis_fraction: 0.30,
            obstacle_min: 1,
        }
    }
}

/// Stage 2: boundary detection on the Stage-1 dataset, then focused
/// sampling inside the detected region.
pub fn run_stage2(
    stage1: &Dataset,
    n: usize,
    seed: u64,
    stage2: &Stage2Options,
    opts: &RunOptions,
) -> Result<(BoundaryRegion, Dataset), PipelineError> {
    let space = builtin_space(&stage1.space)?;
    let region = detect_boundary(
        stage1,
        &space,
        stage2.bins,
        stage2.sr_window.0,
        stage2.sr_window.1,
    )?;
    let emphasis = if stage1.space == FRANKA_SPACE {
        EmphasisSpec {
            fraction: stage2.emphasis_fraction,
            ..emphasis_for_franka()
        }
    } else {
        EmphasisSpec::none()
    };
    let batch = sample_stage2(&space, &region, n, seed, &emphasis, stage2.obstacle_min)?;
    let outcomes = run_episodes(&space.name, &batch.configs, seed, opts)?;
    let ds = assemble_dataset(&space, batch.configs, outcomes, Stage::Stage2, seed)?;
    Ok((region, ds))
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    pub bins: usize,
    pub bootstrap_iters: usize,
    pub seed: u64,
    pub ridge: f64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            bins: crate::boundary::DEFAULT_BINS,
            bootstrap_iters: 1000,
            seed: 2026,
            ridge: DEFAULT_RIDGE,
        }
    }
}

/// The two-parameter boundary fit plus sampled curve points.
#[derive(Debug, Clone)]
pub struct BoundaryFit {
    /// `[intercept, friction, mass, friction*mass]` on raw scales.
    pub coefficients: [f64; 4],
    pub wald: Vec<WaldStat>,
    /// `(mass, mu_star, inside_range)` samples.
    pub curve: Vec<(f64, f64, bool)>,
}

#[derive(Debug, Clone)]
pub struct HeatmapCell {
    pub ix: usize,
    pub iy: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub n: usize,
    pub sr: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Heatmap {
    pub dim_x: String,
    pub dim_y: String,
    pub cells: Vec<HeatmapCell>,
}

#[derive(Debug, Clone)]
pub struct ZoneSummary {
    pub safe: usize,
    pub boundary: usize,
    pub danger: usize,
}

/// Everything the analyze command emits.
pub struct AnalysisBundle {
    pub merged: Dataset,
    pub interaction_model: RiskModel,
    pub interaction_wald: Vec<WaldStat>,
    pub boundary_fit: Option<BoundaryFit>,
    pub thresholds: Vec<Result<ThresholdEstimate, RiskError>>,
    pub risk_model: RiskModel,
    pub roc: RocCurve,
    pub heatmap: Heatmap,
    pub zones: ZoneSummary,
}

/// Feature set of the interaction analysis for a space.
pub fn interaction_feature_spec(space: &ParamSpace) -> FeatureSpec {
    let mut base: Vec<&str> = space
        .continuous_dims()
        .map(|d| d.name.as_str())
        .collect();
    if space.dim("obstacles").is_some() {
        base.push("obstacles");
    }
    let mut interactions = Vec::new();
    for (a, b) in [
        ("friction", "mass"),
        ("friction", "size"),
        ("mass", "obstacles"),
    ] {
        if space.dim(a).is_some() && space.dim(b).is_some() {
            interactions.push((a, b));
        }
    }
    FeatureSpec::new(&base, &interactions, true)
}

/// Feature set of the deployment risk model for a space: continuous
/// dimensions, obstacle count, and the categorical penalty encodings.
pub fn risk_feature_spec(space: &ParamSpace) -> FeatureSpec {
    let mut base: Vec<&str> = space
        .continuous_dims()
        .map(|d| d.name.as_str())
        .collect();
    if space.dim("obstacles").is_some() {
        base.push("obstacles");
    }
    if space.dim("shape").is_some() {
        base.push("shape_penalty");
    }
    if space.dim("placement").is_some() {
        base.push("placement_penalty");
    }
    FeatureSpec::new(&base, &[], true)
}

fn build_heatmap(ds: &Dataset, space: &ParamSpace, bins: usize) -> Heatmap {
    let dims: Vec<&crate::param_space::ParamDef> = if space.dim("friction").is_some()
        && space.dim("mass").is_some()
    {
        vec![space.dim("friction").unwrap(), space.dim("mass").unwrap()]
    } else {
        space.continuous_dims().take(2).collect()
    };
    let (dx, dy) = (dims[0], dims[1]);
    let mut counts = vec![(0usize, 0usize); bins * bins];
    for rec in &ds.records {
        let (Some(x), Some(y)) = (rec.f64_value(&dx.name), rec.f64_value(&dy.name)) else {
            continue;
        };
        let ix = crate::boundary::bin_index(x, dx.lo, dx.hi, bins);
        let iy = crate::boundary::bin_index(y, dy.lo, dy.hi, bins);
        let cell = &mut counts[iy * bins + ix];
        cell.0 += 1;
        if rec.outcome.success {
            cell.1 += 1;
        }
    }
    let wx = (dx.hi - dx.lo) / bins as f64;
    let wy = (dy.hi - dy.lo) / bins as f64;
    let cells = (0..bins * bins)
        .map(|i| {
            let (ix, iy) = (i % bins, i / bins);
            let (n, s) = counts[i];
            HeatmapCell {
                ix,
                iy,
                x_range: (dx.lo + ix as f64 * wx, dx.lo + (ix + 1) as f64 * wx),
                y_range: (dy.lo + iy as f64 * wy, dy.lo + (iy + 1) as f64 * wy),
                n,
                sr: (n > 0).then(|| s as f64 / n as f64),
            }
        })
        .collect();
    Heatmap {
        dim_x: dx.name.clone(),
        dim_y: dy.name.clone(),
        cells,
    }
}

/// Merges the inputs and produces the full analysis bundle.
pub fn run_analyze(
    datasets: &[Dataset],
    opts: &AnalysisOptions,
) -> Result<AnalysisBundle, PipelineError> {
    let mut iter = datasets.iter();
    let first = iter.next().ok_or(PipelineError::NoInputs)?;
    let mut merged = first.clone();
    for ds in iter {
        merged = crate::dictionary::merge_datasets(&merged, ds)?;
    }
    let space = builtin_space(&merged.space)?;

    let interaction_model = fit(&merged, &interaction_feature_spec(&space), opts.ridge)?;
    let interaction_wald = wald_stats(&interaction_model)?;

    let boundary_fit = if space.dim("friction").is_some() && space.dim("mass").is_some() {
        let spec = FeatureSpec::new(&["friction", "mass"], &[("friction", "mass")], false);
        let model = fit(&merged, &spec, opts.ridge)?;
        let coefficients = [
            model.intercept,
            model.coefficients[0],
            model.coefficients[1],
            model.coefficients[2],
        ];
        let wald = wald_stats(&model)?;
        let mass_dim = space.dim("mass").unwrap();
        let friction_dim = space.dim("friction").unwrap();
        let samples = 100;
        let mut curve = Vec::with_capacity(samples);
        for i in 0..samples {
            let m = mass_dim.lo + (mass_dim.hi - mass_dim.lo) * i as f64 / (samples - 1) as f64;
            if let Ok(mu) = boundary_curve(coefficients, m) {
                let inside = mu >= friction_dim.lo && mu <= friction_dim.hi;
                curve.push((m, mu, inside));
            }
        }
        Some(BoundaryFit {
            coefficients,
            wald,
            curve,
        })
    } else {
        None
    };

    let thresholds = space
        .continuous_dims()
        .map(|d| bootstrap_threshold(&merged, &d.name, opts.bootstrap_iters, opts.seed))
        .collect();

    let risk_model = fit(&merged, &risk_feature_spec(&space), opts.ridge)?;
    let scores: Vec<f64> = merged
        .records
        .iter()
        .map(|rec| predict_fail_prob_values(&risk_model, &rec.values))
        .collect::<Result<_, _>>()?;
    let labels: Vec<bool> = merged.records.iter().map(|r| !r.outcome.success).collect();
    let roc = roc_auc(&scores, &labels)?;

    let heatmap = build_heatmap(&merged, &space, opts.bins);
    let mut zones = ZoneSummary {
        safe: 0,
        boundary: 0,
        danger: 0,
    };
    for rec in &merged.records {
        match rec.zone {
            crate::dictionary::Zone::Safe => zones.safe += 1,
            crate::dictionary::Zone::Boundary => zones.boundary += 1,
            crate::dictionary::Zone::Danger => zones.danger += 1,
        }
    }
    Ok(AnalysisBundle {
        merged,
        interaction_model,
        interaction_wald,
        boundary_fit,
        thresholds,
        risk_model,
        roc,
        heatmap,
        zones,
    })
}

/// Evaluates the gate over a dataset. Episodes whose placement label starts
/// with `edge_prefix` count as edge cases.
pub fn run_gate(
    ds: &Dataset,
    baseline: &BaselineStats,
    edge_prefix: &str,
) -> Result<GateReport, PipelineError> {
    let episodes: Vec<EpisodeOutcome> = ds.records.iter().map(|r| r.outcome.clone()).collect();
    let edge: Vec<bool> = ds
        .records
        .iter()
        .map(|r| {
            r.values
                .get("placement")
                .and_then(|v| v.as_label())
                .is_some_and(|l| l.starts_with(edge_prefix))
        })
        .collect();
    let report = evaluate_metrics(&episodes, &edge, baseline)?;
    Ok(GateReport::new(report)?)
}

// ---------------------------------------------------------------------------
// Report writing
// ---------------------------------------------------------------------------

pub fn write_roc_csv<W: Write>(w: &mut W, roc: &RocCurve) -> std::io::Result<()> {
    writeln!(w, "threshold,fpr,tpr")?;
    for p in &roc.points {
        writeln!(w, "{},{},{}", p.threshold, p.fpr, p.tpr)?;
    }
    Ok(())
}

pub fn write_heatmap_csv<W: Write>(w: &mut W, heatmap: &Heatmap) -> std::io::Result<()> {
    writeln!(
        w,
        "{}_bin,{}_bin,{}_lo,{}_hi,{}_lo,{}_hi,n,sr",
        heatmap.dim_x, heatmap.dim_y, heatmap.dim_x, heatmap.dim_x, heatmap.dim_y, heatmap.dim_y
    )?;
    for c in &heatmap.cells {
        let sr = c.sr.map(|v| v.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            c.ix, c.iy, c.x_range.0, c.x_range.1, c.y_range.0, c.y_range.1, c.n, sr
        )?;
    }
    Ok(())
}

pub fn write_boundary_curve_csv<W: Write>(
    w: &mut W,
    fit: &BoundaryFit,
) -> std::io::Result<()> {
    writeln!(w, "mass,mu_star,inside_range")?;
    for (m, mu, inside) in &fit.curve {
        writeln!(w, "{m},{mu},{inside}")?;
    }
    Ok(())
}

/// Seeded subsample of up to `limit` records for the boundary scatter
/// figure.
pub fn write_boundary_scatter_csv<W: Write>(
    w: &mut W,
    ds: &Dataset,
    heatmap_dims: (&str, &str),
    limit: usize,
    seed: u64,
) -> std::io::Result<()> {
    let (dx, dy) = heatmap_dims;
    writeln!(w, "{dx},{dy},success")?;
    let n = ds.records.len();
    let mut indices: Vec<usize> = (0..n).collect();
    if n > limit {
        // Partial Fisher-Yates: the first `limit` entries form the sample.
        let mut stream = rng::stream(seed, "figure-scatter", 0);
        for i in 0..limit {
            let j = i + stream.next_below((n - i) as u64) as usize;
            indices.swap(i, j);
        }
        indices.truncate(limit);
        indices.sort_unstable();
    }
    for idx in indices {
        let rec = &ds.records[idx];
        let (Some(x), Some(y)) = (rec.f64_value(dx), rec.f64_value(dy)) else {
            continue;
        };
        writeln!(w, "{x},{y},{}", rec.outcome.success)?;
    }
    Ok(())
}

/// Writes the full analysis bundle into a directory.
pub fn write_analysis(dir: &Path, bundle: &AnalysisBundle) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    let counts = bundle.merged.counts();
    let mut summary = String::new();
    summary.push_str(&format!(
        "space: {}\nrecords: {} ({} success / {} fail, SR {:.4})\n",
        bundle.merged.space,
        counts.n,
        counts.n_success,
        counts.n_fail,
        bundle.merged.success_rate()
    ));
    summary.push_str(&format!(
        "zones: safe {} ({:.2}%), boundary {} ({:.2}%), danger {} ({:.2}%)\n",
        bundle.zones.safe,
        100.0 * bundle.zones.safe as f64 / counts.n.max(1) as f64,
        bundle.zones.boundary,
        100.0 * bundle.zones.boundary as f64 / counts.n.max(1) as f64,
        bundle.zones.danger,
        100.0 * bundle.zones.danger as f64 / counts.n.max(1) as f64,
    ));
    summary.push_str(&format!("risk model AUC: {:.4}\n", bundle.roc.auc));
    if let Some(fit) = &bundle.boundary_fit {
        let [b0, b1, b2, b3] = fit.coefficients;
        summary.push_str(&format!(
            "boundary logit: {b0:.4} + {b1:.4}*friction + {b2:.4}*mass + {b3:.4}*friction*mass\n"
        ));
    }
    std::fs::write(dir.join("summary.txt"), summary)?;

    std::fs::write(
        dir.join("interaction_model.txt"),
        crate::risk::format_wald_table(&bundle.interaction_wald),
    )?;

    let mut thresholds = String::new();
    for t in &bundle.thresholds {
        match t {
            Ok(est) => thresholds.push_str(&format!("{}\n", est.format_row())),
            Err(e) => thresholds.push_str(&format!("unavailable: {e}\n")),
        }
    }
    std::fs::write(dir.join("thresholds.txt"), thresholds)?;

    std::fs::write(dir.join("risk_model.json"), bundle.risk_model.to_json())?;

    let mut roc_file = std::fs::File::create(dir.join("roc.csv"))?;
    write_roc_csv(&mut roc_file, &bundle.roc)?;

    let mut heatmap_file = std::fs::File::create(dir.join("heatmap.csv"))?;
    write_heatmap_csv(&mut heatmap_file, &bundle.heatmap)?;

    if let Some(fit) = &bundle.boundary_fit {
        std::fs::write(
            dir.join("boundary_fit.txt"),
            crate::risk::format_wald_table(&fit.wald),
        )?;
        let mut curve_file = std::fs::File::create(dir.join("boundary_curve.csv"))?;
        write_boundary_curve_csv(&mut curve_file, fit)?;
    }
    Ok(())
}

/// Writes the figure-data CSVs (heatmap, ROC, boundary curve and scatter).
pub fn write_figures(
    dir: &Path,
    bundle: &AnalysisBundle,
    scatter_limit: usize,
    seed: u64,
) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir)?;
    let mut roc_file = std::fs::File::create(dir.join("roc.csv"))?;
    write_roc_csv(&mut roc_file, &bundle.roc)?;
    let mut heatmap_file = std::fs::File::create(dir.join("heatmap.csv"))?;
    write_heatmap_csv(&mut heatmap_file, &bundle.heatmap)?;
    if let Some(fit) = &bundle.boundary_fit {
        let mut curve_file = std::fs::File::create(dir.join("boundary_curve.csv"))?;
        write_boundary_curve_csv(&mut curve_file, fit)?;
    }
    let mut scatter_file = std::fs::File::create(dir.join("boundary_scatter.csv"))?;
    write_boundary_scatter_csv(
        &mut scatter_file,
        &bundle.merged,
        (&bundle.heatmap.dim_x, &bundle.heatmap.dim_y),
        scatter_limit,
        seed,
    )?;
    let mut records_file = std::fs::File::create(dir.join("records.csv"))?;
    crate::dictionary::export_csv(&mut records_file, &bundle.merged)?;
    Ok(())
}

/// Writes a dataset with its manifest embedded, atomically: the file appears
/// only if the full write succeeds.
pub fn write_dataset_with_manifest(
    path: &Path,
    ds: &Dataset,
    manifest: &RunManifest,
) -> Result<(), PipelineError> {
    let mut with_manifest = ds.clone();
    with_manifest.manifest = Some(manifest.to_value());
    let tmp = path.with_extension("tmp");
    let result = crate::dictionary::write_dataset(&tmp, &with_manifest);
    match result {
        Ok(()) => {
            std::fs::rename(&tmp, path)?;
            Ok(())
        }
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e.into())
        }
    }
}
