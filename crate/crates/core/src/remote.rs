//! Remote-oracle wire protocol and client.
//!
//! Line-delimited JSON over a stream socket, one object per line. A request
//! is `{"cmd":"episode","space":...,"config":{...},"sample_idx":N}` or
//! `{"cmd":"ping"}`; a reply is the six outcome fields, `{"ok":true}`, or an
//! `{"error":...}` object. Failure probability is not carried on the wire;
//! callers fill it in from the analytic formula.

use std::collections::BTreeMap;
use std::io::{self, BufRead, BufReader, Write};
use std::net::TcpStream;
use std::time::Duration;

use serde_json::{Map, Value};
use thiserror::Error;

use crate::oracle::{EpisodeOutcome, FailureType};
use crate::param_space::{ParamValue, ScenarioConfig};

/// Default per-request timeout.
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

#[derive(Debug, Error)]
pub enum RemoteError {
    #[error("connect to '{endpoint}' failed: {source}")]
    Connect {
        endpoint: String,
        source: io::Error,
    },
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("request timed out")]
    Timeout,
    #[error("connection closed by peer")]
    ConnectionClosed,
    #[error("malformed reply: {msg}; offending line: {line:?}")]
    MalformedReply { msg: String, line: String },
    #[error("server error: {0}")]
    ServerError(String),
    #[error("reply violates outcome invariants: {msg}; offending line: {line:?}")]
    InvariantViolation { msg: String, line: String },
}

fn param_value_to_json(v: &ParamValue) -> Value {
    match v {
        ParamValue::Int(i) => Value::from(*i),
        ParamValue::Float(f) => Value::from(*f),
        ParamValue::Label(l) => Value::from(l.as_str()),
    }
}

pub(crate) fn json_to_param_value(v: &Value) -> Option<ParamValue> {
    match v {
        Value::Number(n) if n.is_i64() => Some(ParamValue::Int(n.as_i64().unwrap())),
        Value::Number(n) => n.as_f64().map(ParamValue::Float),
        Value::String(s) => Some(ParamValue::Label(s.clone())),
        _ => None,
    }
}

/// Encodes an episode request line (no trailing newline).
pub fn encode_episode_request(space: &str, cfg: &ScenarioConfig) -> String {
    let mut map = Map::new();
    map.insert("cmd".into(), Value::from("episode"));
    map.insert("space".into(), Value::from(space));
    let config: Map<String, Value> = cfg
        .values
        .iter()
        .map(|(k, v)| (k.clone(), param_value_to_json(v)))
        .collect();
    map.insert("config".into(), Value::Object(config));
    map.insert("sample_idx".into(), Value::from(cfg.sample_idx));
    Value::Object(map).to_string()
}

/// Encodes an outcome reply line (no trailing newline). `fail_prob` stays
/// local to each side.
pub fn encode_outcome(outcome: &EpisodeOutcome) -> String {
    let mut map = Map::new();
    map.insert("success".into(), Value::from(outcome.success));
    map.insert(
        "failure_type".into(),
        Value::from(outcome.failure_type.as_str()),
    );
    map.insert("cycle_time".into(), Value::from(outcome.cycle_time));
    map.insert("collision".into(), Value::from(outcome.collision));
    map.insert("drop".into(), Value::from(outcome.drop));
    map.insert("grasp_miss".into(), Value::from(outcome.grasp_miss));
    Value::Object(map).to_string()
}

/// Parses and validates an outcome reply line. The returned outcome carries
/// `fail_prob = 0`; callers replace it with the analytic value.
pub fn decode_outcome(line: &str) -> Result<EpisodeOutcome, RemoteError> {
    let malformed = |msg: &str| RemoteError::MalformedReply {
        msg: msg.to_string(),
        line: line.to_string(),
    };
    let value: Value =
        serde_json::from_str(line).map_err(|e| malformed(&format!("invalid JSON: {e}")))?;
    let map = value.as_object().ok_or_else(|| malformed("not an object"))?;
    if let Some(err) = map.get("error") {
        return Err(RemoteError::ServerError(
            err.as_str().unwrap_or("unknown").to_string(),
        ));
    }
    let get_bool = |field: &str| {
        map.get(field)
            .and_then(Value::as_bool)
            .ok_or_else(|| malformed(&format!("missing boolean '{field}'")))
    };
    let failure_str = map
        .get("failure_type")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed("missing string 'failure_type'"))?;
    let failure_type = FailureType::parse(failure_str)
        .ok_or_else(|| malformed(&format!("unknown failure_type '{failure_str}'")))?;
    let outcome = EpisodeOutcome {
        success: get_bool("success")?,
        failure_type,
        cycle_time: map
            .get("cycle_time")
            .and_then(Value::as_f64)
            .ok_or_else(|| malformed("missing number 'cycle_time'"))?,
        collision: get_bool("collision")?,
        drop: get_bool("drop")?,
        grasp_miss: get_bool("grasp_miss")?,
        fail_prob: 0.0,
    };
    outcome
        .validate()
        .map_err(|msg| RemoteError::InvariantViolation {
            msg,
            line: line.to_string(),
        })?;
    Ok(outcome)
}

/// A persistent client connection; one in-flight request at a time.
#[derive(Debug)]
pub struct RemoteOracle {
    reader: BufReader<TcpStream>,
    writer: TcpStream,
}

impl RemoteOracle {
    pub fn connect(endpoint: &str) -> Result<Self, RemoteError> {
        Self::connect_with_timeout(endpoint, DEFAULT_TIMEOUT)
    }

    pub fn connect_with_timeout(
        endpoint: &str,
        timeout: Duration,
    ) -> Result<Self, RemoteError> {
        let stream = TcpStream::connect(endpoint).map_err(|source| RemoteError::Connect {
            endpoint: endpoint.to_string(),
            source,
        })?;
        stream.set_read_timeout(Some(timeout))?;
        stream.set_write_timeout(Some(timeout))?;
        stream.set_nodelay(true)?;
        let writer = stream.try_clone()?;
        Ok(Self {
            reader: BufReader::new(stream),
            writer,
        })
    }

    fn round_trip(&mut self, request: &str) -> Result<String, RemoteError> {
        self.writer.write_all(request.as_bytes())?;
        self.writer.write_all(b"\n")?;
        self.writer.flush()?;
        let mut line = String::new();
        match self.reader.read_line(&mut line) {
            Ok(0) => Err(RemoteError::ConnectionClosed),
            Ok(_) => Ok(line.trim_end().to_string()),
            Err(e)
                if e.kind() == io::ErrorKind::WouldBlock
                    || e.kind() == io::ErrorKind::TimedOut =>
            {
                Err(RemoteError::Timeout)
            }
            Err(e) => Err(e.into()),
        }
    }

    /// Liveness check: `{"cmd":"ping"}` -> `{"ok":true}`.
    pub fn ping(&mut self) -> Result<(), RemoteError> {
        let line = self.round_trip("{\"cmd\":\"ping\"}")?;
        let value: Value =
            serde_json::from_str(&line).map_err(|e| RemoteError::MalformedReply {
                msg: format!("invalid JSON: {e}"),
                line: line.clone(),
            })?;
        if value.get("ok").and_then(Value::as_bool) == Some(true) {
            Ok(())
        } else if let Some(err) = value.get("error").and_then(Value::as_str) {
            Err(RemoteError::ServerError(err.to_string()))
        } else {
            Err(RemoteError::MalformedReply {
                msg: "expected {\"ok\":true}".to_string(),
                line,
            })
        }
    }

    /// Runs one episode remotely; the reply is validated against the outcome
    /// invariants.
    pub fn episode(
        &mut self,
        space: &str,
        cfg: &ScenarioConfig,
    ) -> Result<EpisodeOutcome, RemoteError> {
        let line = self.round_trip(&encode_episode_request(space, cfg))?;
        decode_outcome(&line)
    }
}

/// One-shot episode over a fresh connection.
pub fn remote_episode(
    endpoint: &str,
    space: &str,
    cfg: &ScenarioConfig,
    timeout: Duration,
) -> Result<EpisodeOutcome, RemoteError> {
    let mut client = RemoteOracle::connect_with_timeout(endpoint, timeout)?;
    client.episode(space, cfg)
}

/// Decodes a request line server-side.
pub(crate) enum Request {
    Ping,
    Episode {
        space: String,
        values: BTreeMap<String, ParamValue>,
        sample_idx: u64,
    },
}

pub(crate) fn decode_request(line: &str) -> Result<Request, String> {
    let value: Value = serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let map = value.as_object().ok_or("request is not an object")?;
    match map.get("cmd").and_then(Value::as_str) {
        Some("ping") => Ok(Request::Ping),
        Some("episode") => {
            let space = map
                .get("space")
                .and_then(Value::as_str)
                .ok_or("missing string 'space'")?
                .to_string();
            let config = map
                .get("config")
                .and_then(Value::as_object)
                .ok_or("missing object 'config'")?;
            let mut values = BTreeMap::new();
            for (k, v) in config {
                let pv = json_to_param_value(v)
                    .ok_or_else(|| format!("config field '{k}' must be a number or string"))?;
                values.insert(k.clone(), pv);
            }
            let sample_idx = map
                .get("sample_idx")
                .and_then(Value::as_u64)
                .ok_or("missing non-negative integer 'sample_idx'")?;
            Ok(Request::Episode {
                space,
                values,
                sample_idx,
            })
        }
        Some(other) => Err(format!("unknown cmd '{other}'")),
        None => Err("missing 'cmd'".to_string()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_codec_round_trips() {
        let outcome = EpisodeOutcome {
            success: false,
            failure_type: FailureType::GripLoss,
            cycle_time: 7.25,
            collision: false,
            drop: true,
            grasp_miss: false,
            fail_prob: 0.0,
        };
        let line = encode_outcome(&outcome);
        let back = decode_outcome(&line).unwrap();
        assert_eq!(back, outcome);
    }

    #[test]
    fn decode_rejects_invariant_violations_with_line() {
        // A timeout outcome must carry cycle_time 15 exactly.
        let line = r#"{"success":false,"failure_type":"timeout","cycle_time":10.0,"collision":false,"drop":false,"grasp_miss":false}"#;
        match decode_outcome(line) {
            Err(RemoteError::InvariantViolation { line: l, .. }) => {
                assert!(l.contains("10.0"))
            }
            other => panic!("expected invariant violation, got {other:?}"),
        }
    }

    #[test]
    fn decode_rejects_malformed_lines() {
        assert!(matches!(
            decode_outcome("not json"),
            Err(RemoteError::MalformedReply { .. })
        ));
        assert!(matches!(
            decode_outcome("{\"success\":true}"),
            Err(RemoteError::MalformedReply { .. })
        ));
        assert!(matches!(
            decode_outcome("{\"error\":\"boom\"}"),
            Err(RemoteError::ServerError(_))
        ));
    }

    #[test]
    fn request_codec() {
        let mut values = BTreeMap::new();
        values.insert("friction".to_string(), ParamValue::Float(0.3));
        values.insert("obstacles".to_string(), ParamValue::Int(2));
        values.insert("shape".to_string(), ParamValue::Label("box".into()));
        let cfg = ScenarioConfig {
            space: "franka-8d".into(),
            values,
            sample_idx: 42,
        };
        let line = encode_episode_request("franka-8d", &cfg);
        match decode_request(&line).unwrap() {
            Request::Episode {
                space,
                values,
                sample_idx,
            } => {
                assert_eq!(space, "franka-8d");
                assert_eq!(sample_idx, 42);
                assert_eq!(values["friction"], ParamValue::Float(0.3));
                assert_eq!(values["obstacles"], ParamValue::Int(2));
                assert_eq!(values["shape"], ParamValue::Label("box".into()));
            }
            _ => panic!("expected episode request"),
        }
        assert!(matches!(
            decode_request("{\"cmd\":\"ping\"}").unwrap(),
            Request::Ping
        ));
        assert!(decode_request("{\"cmd\":\"reset\"}").is_err());
        assert!(decode_request("garbage").is_err());
    }
}
