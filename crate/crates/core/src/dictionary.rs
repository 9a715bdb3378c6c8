//! Failure-dictionary datasets: persistence, validation, merging, and
//! zone labeling.
//!
//! On disk a dataset is a header object followed by one record object per
//! line, streamable at any record count and diff-friendly. The header names
//! the space and its dimension order plus dataset-level provenance; each
//! record carries the configuration values, outcome fields, derived fields,
//! and its own robot/stage/seed provenance so merged datasets stay
//! self-describing.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::boundary::bin_index;
use crate::oracle::{EpisodeOutcome, FailureType};
use crate::param_space::{ParamSpace, ParamValue, ScenarioConfig};

/// Cells with fewer records than this are labeled from the analytic failure
/// probability instead of the empirical cell success rate, which keeps the
/// SR standard error of empirical labels below ~0.22.
pub const MIN_CELL_RECORDS: usize = 5;

pub const SAFE_SR_CUTOFF: f64 = 0.70;
pub const DANGER_SR_CUTOFF: f64 = 0.30;

const FORMAT_NAME: &str = "riskgate-dataset";
const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error)]
pub enum DictionaryError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("bad header: {0}")]
    Header(String),
    #[error("record {index}: field '{field}': {msg}")]
    Record {
        index: usize,
        field: String,
        msg: String,
    },
    #[error("space mismatch: '{0}' vs '{1}'")]
    SpaceMismatch(String, String),
    #[error("unknown dimension '{0}'")]
    UnknownDim(String),
    #[error("cell spec must name one or two continuous dimensions")]
    BadCellSpec,
}

/// Zone label from success-rate cutoffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Zone {
    Safe,
    Boundary,
    Danger,
}

impl Zone {
    pub fn as_str(self) -> &'static str {
        match self {
            Zone::Safe => "safe",
            Zone::Boundary => "boundary",
            Zone::Danger => "danger",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "safe" => Zone::Safe,
            "boundary" => Zone::Boundary,
            "danger" => Zone::Danger,
            _ => return None,
        })
    }
}

impl fmt::Display for Zone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// safe for SR >= 0.70, boundary for 0.30 <= SR < 0.70, danger below.
pub fn zone_from_sr(sr: f64) -> Zone {
    if sr >= SAFE_SR_CUTOFF {
        Zone::Safe
    } else if sr >= DANGER_SR_CUTOFF {
        Zone::Boundary
    } else {
        Zone::Danger
    }
}

/// One failure-dictionary row.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub values: BTreeMap<String, ParamValue>,
    pub outcome: EpisodeOutcome,
    pub zone: Zone,
    pub sample_idx: u64,
    pub robot: String,
    pub stage: String,
    pub seed: u64,
}

impl ExperimentRecord {
    pub fn f64_value(&self, dim: &str) -> Option<f64> {
        self.values.get(dim).and_then(ParamValue::as_f64)
    }

    /// View of the record's configuration as a scenario config.
    pub fn config(&self, space: &str) -> ScenarioConfig {
        ScenarioConfig {
            space: space.to_string(),
            values: self.values.clone(),
            sample_idx: self.sample_idx,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Counts {
    pub n: usize,
    pub n_success: usize,
    pub n_fail: usize,
}

/// An in-memory dataset: records plus the header metadata needed to write
/// them back byte-identically.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub space: String,
    /// Serialization order of the configuration fields.
    pub dims: Vec<String>,
    pub robot: Option<String>,
    pub stage: Option<String>,
    pub seed: Option<u64>,
    /// Deterministic run manifest embedded verbatim in the header.
    pub manifest: Option<Value>,
    pub records: Vec<ExperimentRecord>,
}

impl Dataset {
    pub fn counts(&self) -> Counts {
        let n_success = self.records.iter().filter(|r| r.outcome.success).count();
        Counts {
            n: self.records.len(),
            n_success,
            n_fail: self.records.len() - n_success,
        }
    }

    pub fn success_rate(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.counts().n_success as f64 / self.records.len() as f64
    }
}

fn param_value_to_json(v: &ParamValue) -> Value {
    match v {
        ParamValue::Int(i) => Value::from(*i),
        ParamValue::Float(f) => Value::from(*f),
        ParamValue::Label(l) => Value::from(l.as_str()),
    }
}

fn json_to_param_value(v: &Value) -> Option<ParamValue> {
    match v {
        Value::Number(n) if n.is_i64() => Some(ParamValue::Int(n.as_i64().unwrap())),
        Value::Number(n) => n.as_f64().map(ParamValue::Float),
        Value::String(s) => Some(ParamValue::Label(s.clone())),
        _ => None,
    }
}

fn record_to_json(rec: &ExperimentRecord, dims: &[String]) -> Map<String, Value> {
    let mut map = Map::new();
    for dim in dims {
        if let Some(v) = rec.values.get(dim) {
            map.insert(dim.clone(), param_value_to_json(v));
        }
    }
    map.insert("success".into(), Value::from(rec.outcome.success));
    map.insert(
        "failure_type".into(),
        Value::from(rec.outcome.failure_type.as_str()),
    );
    map.insert("cycle_time".into(), Value::from(rec.outcome.cycle_time));
    map.insert("collision".into(), Value::from(rec.outcome.collision));
    map.insert("drop".into(), Value::from(rec.outcome.drop));
    map.insert("grasp_miss".into(), Value::from(rec.outcome.grasp_miss));
    map.insert("fail_prob".into(), Value::from(rec.outcome.fail_prob));
    map.insert("zone".into(), Value::from(rec.zone.as_str()));
    map.insert("sample_idx".into(), Value::from(rec.sample_idx));
    map.insert("robot".into(), Value::from(rec.robot.as_str()));
    map.insert("stage".into(), Value::from(rec.stage.as_str()));
    map.insert("seed".into(), Value::from(rec.seed));
    map
}

struct FieldReader<'a> {
    index: usize,
    map: &'a Map<String, Value>,
}

impl<'a> FieldReader<'a> {
    fn err(&self, field: &str, msg: impl Into<String>) -> DictionaryError {
        DictionaryError::Record {
            index: self.index,
            field: field.to_string(),
            msg: msg.into(),
        }
    }

    fn get(&self, field: &str) -> Result<&'a Value, DictionaryError> {
        self.map.get(field).ok_or_else(|| self.err(field, "missing"))
    }

    fn bool(&self, field: &str) -> Result<bool, DictionaryError> {
        self.get(field)?
            .as_bool()
            .ok_or_else(|| self.err(field, "expected a boolean"))
    }

    fn f64(&self, field: &str) -> Result<f64, DictionaryError> {
        self.get(field)?
            .as_f64()
            .ok_or_else(|| self.err(field, "expected a number"))
    }

    fn u64(&self, field: &str) -> Result<u64, DictionaryError> {
        self.get(field)?
            .as_u64()
            .ok_or_else(|| self.err(field, "expected a non-negative integer"))
    }

    fn string(&self, field: &str) -> Result<String, DictionaryError> {
        Ok(self
            .get(field)?
            .as_str()
            .ok_or_else(|| self.err(field, "expected a string"))?
            .to_string())
    }
}

const OUTCOME_FIELDS: [&str; 13] = [
    "success",
    "failure_type",
    "cycle_time",
    "collision",
    "drop",
    "grasp_miss",
    "fail_prob",
    "zone",
    "sample_idx",
    "robot",
    "stage",
    "seed",
    // reserved header key, never a dimension name
    "format",
];

fn record_from_json(
    index: usize,
    map: &Map<String, Value>,
) -> Result<ExperimentRecord, DictionaryError> {
    let r = FieldReader { index, map };
    let failure_str = r.string("failure_type")?;
    let failure_type = FailureType::parse(&failure_str)
        .ok_or_else(|| r.err("failure_type", format!("unknown failure type '{failure_str}'")))?;
    let zone_str = r.string("zone")?;
    let zone = Zone::parse(&zone_str)
        .ok_or_else(|| r.err("zone", format!("unknown zone '{zone_str}' at record {index}")))?;
    let outcome = EpisodeOutcome {
        success: r.bool("success")?,
        failure_type,
        cycle_time: r.f64("cycle_time")?,
        collision: r.bool("collision")?,
        drop: r.bool("drop")?,
        grasp_miss: r.bool("grasp_miss")?,
        fail_prob: r.f64("fail_prob")?,
    };
    outcome
        .validate()
        .map_err(|msg| r.err("outcome", msg))?;
    let mut values = BTreeMap::new();
    for (key, value) in map {
        if OUTCOME_FIELDS.contains(&key.as_str()) {
            continue;
        }
        let pv = json_to_param_value(value)
            .ok_or_else(|| r.err(key, "expected a number or string"))?;
        values.insert(key.clone(), pv);
    }
    Ok(ExperimentRecord {
        values,
        outcome,
        zone,
        sample_idx: r.u64("sample_idx")?,
        robot: r.string("robot")?,
        stage: r.string("stage")?,
        seed: r.u64("seed")?,
    })
}

/// Writes a dataset: one header object, then one record object per line.
pub fn write_dataset(path: &Path, ds: &Dataset) -> Result<(), DictionaryError> {
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    write_dataset_to(&mut w, ds)?;
    w.flush()?;
    Ok(())
}

pub fn write_dataset_to<W: Write>(w: &mut W, ds: &Dataset) -> Result<(), DictionaryError> {
    let mut header = Map::new();
    header.insert("format".into(), Value::from(FORMAT_NAME));
    header.insert("version".into(), Value::from(FORMAT_VERSION));
    header.insert("space".into(), Value::from(ds.space.as_str()));
    header.insert(
        "dims".into(),
        Value::from(ds.dims.iter().map(|d| Value::from(d.as_str())).collect::<Vec<_>>()),
    );
    if let Some(robot) = &ds.robot {
        header.insert("robot".into(), Value::from(robot.as_str()));
    }
    if let Some(stage) = &ds.stage {
        header.insert("stage".into(), Value::from(stage.as_str()));
    }
    if let Some(seed) = ds.seed {
        header.insert("seed".into(), Value::from(seed));
    }
    if let Some(manifest) = &ds.manifest {
        header.insert("manifest".into(), manifest.clone());
    }
    serde_json::to_writer(&mut *w, &Value::Object(header))
        .map_err(|e| DictionaryError::Header(e.to_string()))?;
    w.write_all(b"\n")?;
    for rec in &ds.records {
        let map = record_to_json(rec, &ds.dims);
        serde_json::to_writer(&mut *w, &Value::Object(map))
            .map_err(|e| DictionaryError::Header(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a dataset, validating every record; errors name the record index
/// and offending field.
pub fn read_dataset(path: &Path) -> Result<Dataset, DictionaryError> {
    let file = File::open(path)?;
    read_dataset_from(BufReader::new(file))
}

pub fn read_dataset_from<R: BufRead>(r: R) -> Result<Dataset, DictionaryError> {
    let mut lines = r.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| DictionaryError::Header("empty file".into()))??;
    let header: Value = serde_json::from_str(&header_line)
        .map_err(|e| DictionaryError::Header(e.to_string()))?;
    let header = header
        .as_object()
        .ok_or_else(|| DictionaryError::Header("header is not an object".into()))?;
    match header.get("format").and_then(Value::as_str) {
        Some(FORMAT_NAME) => {}
        other => {
            return Err(DictionaryError::Header(format!(
                "unexpected format marker {other:?}"
            )))
        }
    }
    match header.get("version").and_then(Value::as_u64) {
        Some(FORMAT_VERSION) => {}
        other => {
            return Err(DictionaryError::Header(format!(
                "unsupported version {other:?}"
            )))
        }
    }
    let space = header
        .get("space")
        .and_then(Value::as_str)
        .ok_or_else(|| DictionaryError::Header("missing space".into()))?
        .to_string();
    let dims: Vec<String> = header
        .get("dims")
        .and_then(Value::as_array)
        .ok_or_else(|| DictionaryError::Header("missing dims".into()))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(str::to_string)
                .ok_or_else(|| DictionaryError::Header("dims must be strings".into()))
        })
        .collect::<Result<_, _>>()?;
    let robot = header.get("robot").and_then(Value::as_str).map(str::to_string);
    let stage = header.get("stage").and_then(Value::as_str).map(str::to_string);
    let seed = header.get("seed").and_then(Value::as_u64);
    let manifest = header.get("manifest").cloned();

    let mut records = Vec::new();
    for (index, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| DictionaryError::Record {
            index,
            field: "<json>".into(),
            msg: e.to_string(),
        })?;
        let map = value.as_object().ok_or_else(|| DictionaryError::Record {
            index,
            field: "<json>".into(),
            msg: "record is not an object".into(),
        })?;
        let rec = record_from_json(index, map)?;
        for dim in &dims {
            if !rec.values.contains_key(dim) {
                return Err(DictionaryError::Record {
                    index,
                    field: dim.clone(),
                    msg: "missing".into(),
                });
            }
        }
        records.push(rec);
    }
    Ok(Dataset {
        space,
        dims,
        robot,
        stage,
        seed,
        manifest,
        records,
    })
}

/// Concatenates two datasets of the same space, preserving per-record
/// provenance. Differing dataset-level stage becomes "combined".
pub fn merge_datasets(a: &Dataset, b: &Dataset) -> Result<Dataset, DictionaryError> {
    if a.space != b.space {
        return Err(DictionaryError::SpaceMismatch(
            a.space.clone(),
            b.space.clone(),
        ));
    }
    let mut records = a.records.clone();
    records.extend(b.records.iter().cloned());
    let keep = |x: &Option<String>, y: &Option<String>| if x == y { x.clone() } else { None };
    let stage = if a.stage == b.stage {
        a.stage.clone()
    } else {
        Some("combined".to_string())
    };
    Ok(Dataset {
        space: a.space.clone(),
        dims: a.dims.clone(),
        robot: keep(&a.robot, &b.robot),
        stage,
        seed: if a.seed == b.seed { a.seed } else { None },
        manifest: None,
        records,
    })
}

/// Equal-width binning of one or two continuous dimensions for zone
/// labeling.
#[derive(Debug, Clone)]
pub struct CellSpec {
    pub dims: Vec<(String, usize)>,
}

impl CellSpec {
    pub fn one(dim: &str, bins: usize) -> Self {
        Self {
            dims: vec![(dim.to_string(), bins)],
        }
    }

    pub fn two(a: &str, b: &str, bins: usize) -> Self {
        Self {
            dims: vec![(a.to_string(), bins), (b.to_string(), bins)],
        }
    }
}

/// Relabels every record's zone from the empirical success rate of its cell.
/// Cells with fewer than [`MIN_CELL_RECORDS`] records fall back to the
/// analytic failure probability.
pub fn label_zones(
    ds: &Dataset,
    space: &ParamSpace,
    spec: &CellSpec,
) -> Result<Dataset, DictionaryError> {
    if spec.dims.is_empty() || spec.dims.len() > 2 {
        return Err(DictionaryError::BadCellSpec);
    }
    let mut axes = Vec::new();
    for (name, bins) in &spec.dims {
        let def = space
            .dim(name)
            .ok_or_else(|| DictionaryError::UnknownDim(name.clone()))?;
        if !def.kind.is_continuous() || *bins == 0 {
            return Err(DictionaryError::BadCellSpec);
        }
        axes.push((name.clone(), def.lo, def.hi, *bins));
    }
    let cell_of = |rec: &ExperimentRecord| -> Result<usize, DictionaryError> {
        let mut cell = 0usize;
        for (name, lo, hi, bins) in &axes {
            let v = rec
                .f64_value(name)
                .ok_or_else(|| DictionaryError::UnknownDim(name.clone()))?;
            cell = cell * bins + bin_index(v, *lo, *hi, *bins);
        }
        Ok(cell)
    };
    let mut stats: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for rec in &ds.records {
        let entry = stats.entry(cell_of(rec)?).or_insert((0, 0));
        entry.0 += 1;
        if rec.outcome.success {
            entry.1 += 1;
        }
    }
    let mut out = ds.clone();
    for rec in &mut out.records {
        let (n, n_success) = stats[&cell_of(rec)?];
        rec.zone = if n >= MIN_CELL_RECORDS {
            zone_from_sr(n_success as f64 / n as f64)
        } else {
            zone_from_sr(1.0 - rec.outcome.fail_prob)
        };
    }
    Ok(out)
}

/// Flat CSV export of the records for figure tooling.
pub fn export_csv<W: Write>(w: &mut W, ds: &Dataset) -> Result<(), DictionaryError> {
    let mut header: Vec<&str> = ds.dims.iter().map(String::as_str).collect();
    header.extend([
        "success",
        "failure_type",
        "cycle_time",
        "collision",
        "drop",
        "grasp_miss",
        "fail_prob",
        "zone",
        "sample_idx",
        "robot",
        "stage",
        "seed",
    ]);
    writeln!(w, "{}", header.join(","))?;
    for rec in &ds.records {
        let mut row: Vec<String> = ds
            .dims
            .iter()
            .map(|d| rec.values.get(d).map(|v| v.to_string()).unwrap_or_default())
            .collect();
        row.push(rec.outcome.success.to_string());
        row.push(rec.outcome.failure_type.as_str().to_string());
        row.push(rec.outcome.cycle_time.to_string());
        row.push(rec.outcome.collision.to_string());
        row.push(rec.outcome.drop.to_string());
        row.push(rec.outcome.grasp_miss.to_string());
        row.push(rec.outcome.fail_prob.to_string());
        row.push(rec.zone.as_str().to_string());
        row.push(rec.sample_idx.to_string());
        row.push(rec.robot.clone());
        row.push(rec.stage.clone());
        row.push(rec.seed.to_string());
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param_space::franka_space;

    pub(crate) fn make_record(
        friction: f64,
        mass: f64,
        success: bool,
        sample_idx: u64,
    ) -> ExperimentRecord {
        let mut values = BTreeMap::new();
        values.insert("friction".into(), ParamValue::Float(friction));
        values.insert("mass".into(), ParamValue::Float(mass));
        values.insert("com_offset".into(), ParamValue::Float(0.2));
        values.insert("size".into(), ParamValue::Float(0.07));
        values.insert("ik_noise".into(), ParamValue::Float(0.01));
        values.insert("obstacles".into(), ParamValue::Int(2));
        values.insert("shape".into(), ParamValue::Label("box".into()));
        values.insert("placement".into(), ParamValue::Label("center_0".into()));
        let outcome = EpisodeOutcome {
            success,
            failure_type: if success {
                FailureType::None
            } else {
                FailureType::Timeout
            },
            cycle_time: if success { 3.5 } else { 15.0 },
            collision: false,
            drop: false,
            grasp_miss: false,
            fail_prob: 0.4,
        };
        ExperimentRecord {
            values,
            outcome,
            zone: zone_from_sr(if success { 1.0 } else { 0.0 }),
            sample_idx,
            robot: "franka".into(),
            stage: "stage1".into(),
            seed: 2026,
        }
    }

    fn make_dataset(records: Vec<ExperimentRecord>) -> Dataset {
        Dataset {
            space: "franka-8d".into(),
            dims: franka_space().dim_names(),
            robot: Some("franka".into()),
            stage: Some("stage1".into()),
            seed: Some(2026),
            manifest: None,
            records,
        }
    }

    #[test]
    fn zone_cutoffs_are_exact() {
        assert_eq!(zone_from_sr(0.70), Zone::Safe);
        assert_eq!(zone_from_sr(0.30), Zone::Boundary);
        assert_eq!(zone_from_sr(0.299), Zone::Danger);
        assert_eq!(zone_from_sr(0.299999), Zone::Danger);
        assert_eq!(zone_from_sr(0.699999), Zone::Boundary);
        assert_eq!(zone_from_sr(1.0), Zone::Safe);
        assert_eq!(zone_from_sr(0.0), Zone::Danger);
    }

    #[test]
    fn empty_dataset_round_trips() {
        let ds = make_dataset(Vec::new());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("empty.jsonl");
        write_dataset(&path, &ds).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
        assert_eq!(back.counts().n, 0);
    }

    #[test]
    fn records_round_trip_identically() {
        let ds = make_dataset(vec![
            make_record(0.3, 0.5, true, 0),
            make_record(0.1, 1.5, false, 1),
            make_record(1.0, 0.05, true, 2),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        write_dataset(&path, &ds).unwrap();
        let back = read_dataset(&path).unwrap();
        assert_eq!(back, ds);
        // Writing again is byte-identical.
        let path2 = dir.path().join("ds2.jsonl");
        write_dataset(&path2, &back).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn unknown_zone_is_rejected_with_record_index() {
        let ds = make_dataset(vec![make_record(0.3, 0.5, true, 0)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        write_dataset(&path, &ds).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"safe\"", "\"hazard\"");
        std::fs::write(&path, text).unwrap();
        let err = read_dataset(&path).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("unknown zone 'hazard'"), "{msg}");
        assert!(msg.contains("record 0"), "{msg}");
    }

    #[test]
    fn timeout_cycle_invariant_enforced_on_read() {
        let ds = make_dataset(vec![make_record(0.3, 0.5, false, 0)]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ds.jsonl");
        write_dataset(&path, &ds).unwrap();
        let text = std::fs::read_to_string(&path)
            .unwrap()
            .replace("\"cycle_time\":15.0", "\"cycle_time\":12.0");
        std::fs::write(&path, text).unwrap();
        assert!(read_dataset(&path).is_err());
    }

    #[test]
    fn merge_concatenates_and_recounts() {
        let a = make_dataset(vec![make_record(0.3, 0.5, true, 0)]);
        let mut b = make_dataset(vec![
            make_record(0.1, 1.5, false, 0),
            make_record(0.2, 1.0, true, 1),
        ]);
        b.stage = Some("stage2".into());
        b.seed = Some(2024);
        for rec in &mut b.records {
            rec.stage = "stage2".into();
            rec.seed = 2024;
        }
        let merged = merge_datasets(&a, &b).unwrap();
        assert_eq!(merged.counts(), Counts { n: 3, n_success: 2, n_fail: 1 });
        assert_eq!(merged.stage.as_deref(), Some("combined"));
        assert_eq!(merged.seed, None);
        // Per-record provenance preserved.
        assert_eq!(merged.records[0].stage, "stage1");
        assert_eq!(merged.records[1].stage, "stage2");
    }

    #[test]
    fn merge_with_empty_is_identity_on_records() {
        let a = make_dataset(vec![make_record(0.3, 0.5, true, 0)]);
        let empty = make_dataset(Vec::new());
        let merged = merge_datasets(&a, &empty).unwrap();
        assert_eq!(merged.records, a.records);
    }

    #[test]
    fn merge_rejects_space_mismatch() {
        let a = make_dataset(Vec::new());
        let mut b = make_dataset(Vec::new());
        b.space = "ur5e-5d".into();
        assert!(matches!(
            merge_datasets(&a, &b),
            Err(DictionaryError::SpaceMismatch(_, _))
        ));
    }

    #[test]
    fn merge_is_associative_in_records() {
        let a = make_dataset(vec![make_record(0.3, 0.5, true, 0)]);
        let b = make_dataset(vec![make_record(0.1, 1.5, false, 0)]);
        let c = make_dataset(vec![make_record(0.9, 0.2, true, 0)]);
        let left = merge_datasets(&merge_datasets(&a, &b).unwrap(), &c).unwrap();
        let right = merge_datasets(&a, &merge_datasets(&b, &c).unwrap()).unwrap();
        assert_eq!(left.records, right.records);
        assert_eq!(left.counts(), right.counts());
    }

    #[test]
    fn label_zones_uses_cell_success_rates() {
        let space = franka_space();
        // 10 records in one friction bin: 7 successes -> safe (SR = 0.7).
        let mut records = Vec::new();
        for i in 0..10 {
            records.push(make_record(0.1, 0.5, i < 7, i));
        }
        // 10 records in a distant bin: 3 successes -> boundary (SR = 0.3).
        for i in 0..10 {
            records.push(make_record(1.1, 0.5, i < 3, 10 + i));
        }
        let ds = make_dataset(records);
        let labeled = label_zones(&ds, &space, &CellSpec::one("friction", 10)).unwrap();
        for rec in &labeled.records[..10] {
            assert_eq!(rec.zone, Zone::Safe);
        }
        for rec in &labeled.records[10..] {
            assert_eq!(rec.zone, Zone::Boundary);
        }
        // Relabeling is idempotent.
        let again = label_zones(&labeled, &space, &CellSpec::one("friction", 10)).unwrap();
        assert_eq!(again, labeled);
    }

    #[test]
    fn label_zones_low_count_cells_use_analytic_fallback() {
        let space = franka_space();
        // 3 records in a cell (< MIN_CELL_RECORDS): analytic zone from
        // 1 - fail_prob = 0.6 -> boundary, regardless of outcomes.
        let records = vec![
            make_record(0.1, 0.5, false, 0),
            make_record(0.1, 0.5, false, 1),
            make_record(0.1, 0.5, false, 2),
        ];
        let ds = make_dataset(records);
        let labeled = label_zones(&ds, &space, &CellSpec::one("friction", 10)).unwrap();
        for rec in &labeled.records {
            assert_eq!(rec.zone, Zone::Boundary);
        }
    }

    #[test]
    fn label_zones_rejects_unknown_or_discrete_dims() {
        let space = franka_space();
        let ds = make_dataset(vec![make_record(0.3, 0.5, true, 0)]);
        assert!(label_zones(&ds, &space, &CellSpec::one("wind", 10)).is_err());
        assert!(label_zones(&ds, &space, &CellSpec::one("shape", 10)).is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let ds = make_dataset(vec![
            make_record(0.3, 0.5, true, 0),
            make_record(0.1, 1.5, false, 1),
        ]);
        let mut buf = Vec::new();
        export_csv(&mut buf, &ds).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].starts_with("friction,mass,"));
        assert_eq!(lines[0].split(',').count(), 8 + 12);
        assert!(lines[1].contains("center_0"));
    }
}
