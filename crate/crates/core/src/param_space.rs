//! Operational parameter spaces.
//!
//! A [`ParamSpace`] names the dimensions an episode can vary over: continuous
//! dimensions on a linear or log scale, integer counts, and categorical
//! labels. Two built-in spaces ship with the crate, an 8-D parallel-jaw
//! pick-and-place space ([`franka_space`]) and a reduced 5-D suction-gripper
//! space ([`ur5e_space`]). Custom spaces can be declared through the
//! plain-text format understood by [`ParamSpace::from_text`].

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const FRANKA_SPACE: &str = "franka-8d";
pub const UR5E_SPACE: &str = "ur5e-5d";

/// The eight placement labels shared by both built-in spaces: four angular
/// positions at the workspace center and four at its edge.
pub const PLACEMENT_LABELS: [&str; 8] = [
    "center_0", "center_45", "center_90", "center_135", "edge_0", "edge_45", "edge_90",
    "edge_135",
];

pub const SHAPE_LABELS: [&str; 4] = ["box", "cylinder", "sphere", "irregular"];

#[derive(Debug, Error)]
pub enum ParamSpaceError {
    #[error("dimension '{0}': lo must be < hi")]
    EmptyRange(String),
    #[error("dimension '{0}': log-scaled range requires lo > 0")]
    NonPositiveLogRange(String),
    #[error("dimension '{0}': categories must be non-empty and duplicate-free")]
    BadCategories(String),
    #[error("duplicate dimension name '{0}'")]
    DuplicateDim(String),
    #[error("unknown dimension '{0}'")]
    UnknownDim(String),
    #[error("fallback range for '{0}' must lie inside its full range")]
    FallbackOutsideRange(String),
    #[error("unit-interval input {0} outside [0, 1]")]
    UnitIntervalOutOfRange(f64),
    #[error("unknown space '{0}'")]
    UnknownSpace(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

/// Scaling kind of one dimension.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParamKind {
    ContinuousLinear,
    ContinuousLog,
    Integer,
    Categorical,
}

impl ParamKind {
    pub fn is_continuous(self) -> bool {
        matches!(self, ParamKind::ContinuousLinear | ParamKind::ContinuousLog)
    }
}

/// One sampled value. Continuous dimensions carry `Float`, integer dimensions
/// `Int`, categorical dimensions `Label`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Int(i64),
    Float(f64),
    Label(String),
}

impl ParamValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ParamValue::Float(v) => Some(*v),
            ParamValue::Int(v) => Some(*v as f64),
            ParamValue::Label(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            ParamValue::Int(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<&str> {
        match self {
            ParamValue::Label(l) => Some(l),
            _ => None,
        }
    }
}

impl fmt::Display for ParamValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParamValue::Int(v) => write!(f, "{v}"),
            ParamValue::Float(v) => write!(f, "{v}"),
            ParamValue::Label(l) => write!(f, "{l}"),
        }
    }
}

/// Definition of one dimension: its name, scaling kind, and domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamDef {
    pub name: String,
    pub kind: ParamKind,
    pub lo: f64,
    pub hi: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
}

impl ParamDef {
    pub fn linear(name: &str, lo: f64, hi: f64) -> Result<Self, ParamSpaceError> {
        Self::continuous(name, ParamKind::ContinuousLinear, lo, hi)
    }

    pub fn log(name: &str, lo: f64, hi: f64) -> Result<Self, ParamSpaceError> {
        Self::continuous(name, ParamKind::ContinuousLog, lo, hi)
    }

    fn continuous(name: &str, kind: ParamKind, lo: f64, hi: f64) -> Result<Self, ParamSpaceError> {
        if !(lo < hi) {
            return Err(ParamSpaceError::EmptyRange(name.to_string()));
        }
        if kind == ParamKind::ContinuousLog && lo <= 0.0 {
            return Err(ParamSpaceError::NonPositiveLogRange(name.to_string()));
        }
        Ok(Self {
            name: name.to_string(),
            kind,
            lo,
            hi,
            categories: Vec::new(),
        })
    }

    pub fn integer(name: &str, lo: i64, hi: i64) -> Result<Self, ParamSpaceError> {
        if lo >= hi {
            return Err(ParamSpaceError::EmptyRange(name.to_string()));
        }
        Ok(Self {
            name: name.to_string(),
            kind: ParamKind::Integer,
            lo: lo as f64,
            hi: hi as f64,
            categories: Vec::new(),
        })
    }

    pub fn categorical(name: &str, categories: &[&str]) -> Result<Self, ParamSpaceError> {
        let mut seen = std::collections::BTreeSet::new();
        if categories.is_empty() || !categories.iter().all(|c| seen.insert(*c)) {
            return Err(ParamSpaceError::BadCategories(name.to_string()));
        }
        Ok(Self {
            name: name.to_string(),
            kind: ParamKind::Categorical,
            lo: 0.0,
            hi: (categories.len() - 1) as f64,
            categories: categories.iter().map(|c| c.to_string()).collect(),
        })
    }

    /// Checks a single value against this dimension's domain.
    pub fn contains(&self, value: &ParamValue) -> bool {
        match (self.kind, value) {
            (ParamKind::ContinuousLinear | ParamKind::ContinuousLog, ParamValue::Float(v)) => {
                *v >= self.lo && *v <= self.hi
            }
            (ParamKind::Integer, ParamValue::Int(v)) => {
                *v >= self.lo as i64 && *v <= self.hi as i64
            }
            (ParamKind::Categorical, ParamValue::Label(l)) => {
                self.categories.iter().any(|c| c == l)
            }
            _ => false,
        }
    }
}

/// Maps a unit-interval coordinate onto a dimension's domain.
///
/// Continuous dimensions interpolate linearly (or in log space); integer and
/// categorical dimensions partition [0, 1] into equal-width cells with the
/// upper cell closed at u = 1.
pub fn scale_to_value(def: &ParamDef, u: f64) -> Result<ParamValue, ParamSpaceError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(ParamSpaceError::UnitIntervalOutOfRange(u));
    }
    Ok(scale_in_range(def, def.lo, def.hi, u))
}

/// Same mapping as [`scale_to_value`] but over a narrowed `[lo, hi]`
/// sub-range, used by boundary-focused sampling. The caller guarantees
/// `def.lo <= lo < hi <= def.hi` and `u` in [0, 1].
pub(crate) fn scale_in_range(def: &ParamDef, lo: f64, hi: f64, u: f64) -> ParamValue {
    match def.kind {
        // Clamped so rounding can never place a value outside the range, and
        // so u = 0 and u = 1 hit the endpoints exactly.
        ParamKind::ContinuousLinear => ParamValue::Float((lo + u * (hi - lo)).clamp(lo, hi)),
        ParamKind::ContinuousLog => {
            let v = if u == 0.0 {
                lo
            } else if u == 1.0 {
                hi
            } else {
                (lo.ln() + u * (hi.ln() - lo.ln())).exp()
            };
            ParamValue::Float(v.clamp(lo, hi))
        }
        ParamKind::Integer => {
            let (lo, hi) = (lo as i64, hi as i64);
            let n = (hi - lo + 1) as f64;
            let idx = ((u * n).floor() as i64).min(hi - lo);
            ParamValue::Int(lo + idx)
        }
        ParamKind::Categorical => {
            let n = def.categories.len();
            let idx = ((u * n as f64).floor() as usize).min(n - 1);
            ParamValue::Label(def.categories[idx].clone())
        }
    }
}

/// An ordered set of dimensions plus optional per-dimension fallback ranges
/// used by boundary detection when no bin qualifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSpace {
    pub name: String,
    pub dims: Vec<ParamDef>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub fallback_ranges: BTreeMap<String, (f64, f64)>,
}

impl ParamSpace {
    pub fn new(
        name: &str,
        dims: Vec<ParamDef>,
        fallback_ranges: &[(&str, f64, f64)],
    ) -> Result<Self, ParamSpaceError> {
        let mut seen = std::collections::BTreeSet::new();
        for d in &dims {
            if !seen.insert(d.name.clone()) {
                return Err(ParamSpaceError::DuplicateDim(d.name.clone()));
            }
        }
        let mut fb = BTreeMap::new();
        for (dim, lo, hi) in fallback_ranges {
            let def = dims
                .iter()
                .find(|d| d.name == *dim)
                .ok_or_else(|| ParamSpaceError::UnknownDim(dim.to_string()))?;
            if *lo < def.lo || *hi > def.hi || lo >= hi {
                return Err(ParamSpaceError::FallbackOutsideRange(dim.to_string()));
            }
            fb.insert(dim.to_string(), (*lo, *hi));
        }
        Ok(Self {
            name: name.to_string(),
            dims,
            fallback_ranges: fb,
        })
    }

    pub fn dim(&self, name: &str) -> Option<&ParamDef> {
        self.dims.iter().find(|d| d.name == name)
    }

    pub fn continuous_dims(&self) -> impl Iterator<Item = &ParamDef> {
        self.dims.iter().filter(|d| d.kind.is_continuous())
    }

    pub fn dim_names(&self) -> Vec<String> {
        self.dims.iter().map(|d| d.name.clone()).collect()
    }

    /// Fallback range for a dimension; the full range when none was declared.
    pub fn fallback_range(&self, dim: &ParamDef) -> (f64, f64) {
        self.fallback_ranges
            .get(&dim.name)
            .copied()
            .unwrap_or((dim.lo, dim.hi))
    }

    /// Renders the space in the versioned plain-text description format.
    pub fn to_text(&self) -> String {
        let mut out = format!("paramspace v1 {}\n", self.name);
        for d in &self.dims {
            match d.kind {
                ParamKind::ContinuousLinear => {
                    out.push_str(&format!("dim {} linear {} {}\n", d.name, d.lo, d.hi))
                }
                ParamKind::ContinuousLog => {
                    out.push_str(&format!("dim {} log {} {}\n", d.name, d.lo, d.hi))
                }
                ParamKind::Integer => out.push_str(&format!(
                    "dim {} int {} {}\n",
                    d.name, d.lo as i64, d.hi as i64
                )),
                ParamKind::Categorical => out.push_str(&format!(
                    "dim {} cat {}\n",
                    d.name,
                    d.categories.join(" ")
                )),
            }
            if let Some((lo, hi)) = self.fallback_ranges.get(&d.name) {
                out.push_str(&format!("fallback {} {} {}\n", d.name, lo, hi));
            }
        }
        out
    }

    /// Parses the plain-text description produced by [`ParamSpace::to_text`].
    pub fn from_text(text: &str) -> Result<Self, ParamSpaceError> {
        let parse_err = |line: usize, msg: &str| ParamSpaceError::Parse {
            line,
            msg: msg.to_string(),
        };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty description"))?;
        let head: Vec<&str> = header.split_whitespace().collect();
        if head.len() != 3 || head[0] != "paramspace" || head[1] != "v1" {
            return Err(parse_err(1, "expected header 'paramspace v1 <name>'"));
        }
        let name = head[2];
        let mut dims: Vec<ParamDef> = Vec::new();
        let mut fallbacks: Vec<(String, f64, f64)> = Vec::new();
        for (idx, raw) in lines {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            match tok[0] {
                "dim" if tok.len() >= 4 => {
                    let (dim, kind) = (tok[1], tok[2]);
                    let num = |s: &str| {
                        s.parse::<f64>()
                            .map_err(|_| parse_err(line_no, &format!("bad number '{s}'")))
                    };
                    let def = match kind {
                        "linear" => ParamDef::linear(dim, num(tok[3])?, num(tok[4])?),
                        "log" => ParamDef::log(dim, num(tok[3])?, num(tok[4])?),
                        "int" => ParamDef::integer(
                            dim,
                            num(tok[3])? as i64,
                            num(tok[4])? as i64,
                        ),
                        "cat" => ParamDef::categorical(dim, &tok[3..]),
                        other => {
                            return Err(parse_err(line_no, &format!("unknown kind '{other}'")))
                        }
                    };
                    dims.push(def.map_err(|e| parse_err(line_no, &e.to_string()))?);
                }
                "fallback" if tok.len() == 4 => {
                    let lo = tok[2].parse::<f64>();
                    let hi = tok[3].parse::<f64>();
                    match (lo, hi) {
                        (Ok(lo), Ok(hi)) => fallbacks.push((tok[1].to_string(), lo, hi)),
                        _ => return Err(parse_err(line_no, "bad fallback range")),
                    }
                }
                _ => return Err(parse_err(line_no, "expected 'dim' or 'fallback' line")),
            }
        }
        let fb: Vec<(&str, f64, f64)> = fallbacks
            .iter()
            .map(|(d, lo, hi)| (d.as_str(), *lo, *hi))
            .collect();
        ParamSpace::new(name, dims, &fb)
    }
}

/// One point in a parameter space, the input to a single episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub space: String,
    pub values: BTreeMap<String, ParamValue>,
    pub sample_idx: u64,
}

impl ScenarioConfig {
    pub fn value(&self, dim: &str) -> Option<&ParamValue> {
        self.values.get(dim)
    }

    pub fn f64_value(&self, dim: &str) -> Option<f64> {
        self.values.get(dim).and_then(ParamValue::as_f64)
    }
}

/// One validation failure for a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub dim: String,
    pub reason: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.dim, self.reason)
    }
}

/// Checks a configuration against a space; the returned list is empty iff the
/// configuration is valid.
pub fn validate_config(space: &ParamSpace, cfg: &ScenarioConfig) -> Vec<Violation> {
    let mut violations = Vec::new();
    for def in &space.dims {
        match cfg.values.get(&def.name) {
            None => violations.push(Violation {
                dim: def.name.clone(),
                reason: "missing value".to_string(),
            }),
            Some(v) if !def.contains(v) => {
                let reason = match def.kind {
                    ParamKind::Categorical => match v.as_label() {
                        Some(l) => format!("unknown category '{l}'"),
                        None => "expected a category label".to_string(),
                    },
                    ParamKind::Integer => format!(
                        "value {v} out of [{}, {}]",
                        def.lo as i64, def.hi as i64
                    ),
                    _ => format!("value {v} out of [{}, {}]", def.lo, def.hi),
                };
                violations.push(Violation {
                    dim: def.name.clone(),
                    reason,
                });
            }
            Some(_) => {}
        }
    }
    for name in cfg.values.keys() {
        if space.dim(name).is_none() {
            violations.push(Violation {
                dim: name.clone(),
                reason: "not a dimension of this space".to_string(),
            });
        }
    }
    violations
}

/// The 8-D parallel-jaw pick-and-place space, with boundary-detection
/// fallback ranges reflecting typical industrial conditions.
pub fn franka_space() -> ParamSpace {
    let dims = vec![
        ParamDef::log("friction", 0.05, 1.2).unwrap(),
        ParamDef::log("mass", 0.05, 2.0).unwrap(),
        ParamDef::linear("com_offset", 0.0, 0.4).unwrap(),
        ParamDef::linear("size", 0.02, 0.12).unwrap(),
        ParamDef::linear("ik_noise", 0.0, 0.04).unwrap(),
        ParamDef::integer("obstacles", 0, 5).unwrap(),
        ParamDef::categorical("shape", &SHAPE_LABELS).unwrap(),
        ParamDef::categorical("placement", &PLACEMENT_LABELS).unwrap(),
    ];
    // The size fallback is clipped to the dimension's own lower bound so it
    // stays inside the sampled range.
    ParamSpace::new(
        FRANKA_SPACE,
        dims,
        &[
            ("friction", 0.05, 0.40),
            ("mass", 0.3, 2.0),
            ("com_offset", 0.1, 0.4),
            ("size", 0.02, 0.05),
            ("ik_noise", 0.01, 0.04),
        ],
    )
    .unwrap()
}

/// The 5-D suction-gripper space. Friction, size, shape, and COM offset are
/// irrelevant to a suction gripper and are not sampled. No fallback ranges
/// are declared; boundary detection falls back to full ranges.
pub fn ur5e_space() -> ParamSpace {
    let dims = vec![
        ParamDef::linear("ik_noise", 0.0, 0.02).unwrap(),
        ParamDef::log("mass", 0.05, 3.0).unwrap(),
        ParamDef::linear("grip_threshold", 0.005, 0.02).unwrap(),
        ParamDef::integer("obstacles", 0, 3).unwrap(),
        ParamDef::categorical("placement", &PLACEMENT_LABELS).unwrap(),
    ];
    ParamSpace::new(UR5E_SPACE, dims, &[]).unwrap()
}

/// Resolves a built-in space by name.
pub fn builtin_space(name: &str) -> Result<ParamSpace, ParamSpaceError> {
    match name {
        FRANKA_SPACE => Ok(franka_space()),
        UR5E_SPACE => Ok(ur5e_space()),
        other => Err(ParamSpaceError::UnknownSpace(other.to_string())),
    }
}
