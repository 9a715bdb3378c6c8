//! Reference oracle server.
//!
//! Serves the built-in episode oracle over the line-delimited protocol so an
//! external process can drive sampling against it, and doubles as the test
//! peer for the remote client. Request seeds derive server-side from the
//! sample index, which keeps clients stateless and replies reproducible.

use std::io::{BufRead, BufReader, Write};
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;

use thiserror::Error;

use crate::oracle::{run_episode, ur5e_episode, OracleParams};
use crate::param_space::{builtin_space, validate_config, ScenarioConfig, FRANKA_SPACE, UR5E_SPACE};
use crate::remote::{decode_request, encode_outcome, Request};
use crate::rng;

#[derive(Debug, Error)]
pub enum ServerError {
    #[error("bind '{addr}' failed: {source}")]
    Bind {
        addr: String,
        source: std::io::Error,
    },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("max_connections must be >= 1")]
    BadConcurrencyLimit,
}

#[derive(Debug, Clone)]
pub struct ServerConfig {
    /// Bind address, e.g. "127.0.0.1:5555"; port 0 picks an ephemeral port.
    pub bind: String,
    /// Base seed; per-request streams derive from (seed, "episode",
    /// sample_idx), matching the local episode runner.
    pub seed: u64,
    /// When set, only requests for this space are served.
    pub space: Option<String>,
    pub max_connections: usize,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:5555".to_string(),
            seed: 2026,
            space: None,
            max_connections: 64,
        }
    }
}

/// A bound oracle server, not yet accepting.
pub struct OracleServer {
    listener: TcpListener,
    config: ServerConfig,
    params: Arc<OracleParams>,
    stop: Arc<AtomicBool>,
}

/// Handle to a server running on a background thread.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Arc<AtomicBool>,
    join: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// Stops the accept loop and joins the server thread. Live connections
    /// finish their current request and close.
    pub fn shutdown(self) {
        self.stop.store(true, Ordering::SeqCst);
        // Unblock the accept call.
        let _ = TcpStream::connect(self.addr);
        let _ = self.join.join();
    }
}

impl OracleServer {
    pub fn bind(config: ServerConfig) -> Result<Self, ServerError> {
        if config.max_connections == 0 {
            return Err(ServerError::BadConcurrencyLimit);
        }
        let listener = TcpListener::bind(&config.bind).map_err(|source| ServerError::Bind {
            addr: config.bind.clone(),
            source,
        })?;
        Ok(Self {
            listener,
            config,
            params: Arc::new(OracleParams::franka()),
            stop: Arc::new(AtomicBool::new(false)),
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, ServerError> {
        Ok(self.listener.local_addr()?)
    }

    /// Binds and serves on a background thread; returns a shutdown handle.
    pub fn spawn(config: ServerConfig) -> Result<ServerHandle, ServerError> {
        let server = Self::bind(config)?;
        let addr = server.local_addr()?;
        let stop = server.stop.clone();
        let join = std::thread::spawn(move || {
            let _ = server.run();
        });
        Ok(ServerHandle { addr, stop, join })
    }

    /// Accept loop; runs until the stop flag is raised. Per-request errors
    /// are answered with an error object and never take the server down.
    pub fn run(&self) -> Result<(), ServerError> {
        let active = Arc::new(AtomicUsize::new(0));
        for incoming in self.listener.incoming() {
            if self.stop.load(Ordering::SeqCst) {
                break;
            }
            let stream = match incoming {
                Ok(s) => s,
                Err(_) => continue,
            };
            // Backpressure: refuse connections beyond the limit.
            if active.load(Ordering::SeqCst) >= self.config.max_connections {
                drop(stream);
                continue;
            }
            active.fetch_add(1, Ordering::SeqCst);
            let params = self.params.clone();
            let config = self.config.clone();
            let active = active.clone();
            let stop = self.stop.clone();
            std::thread::spawn(move || {
                let _ = handle_connection(stream, &params, &config, &stop);
                active.fetch_sub(1, Ordering::SeqCst);
            });
        }
        Ok(())
    }
}

fn handle_connection(
    stream: TcpStream,
    params: &OracleParams,
    config: &ServerConfig,
    stop: &AtomicBool,
) -> std::io::Result<()> {
    stream.set_nodelay(true)?;
    let mut writer = stream.try_clone()?;
    let reader = BufReader::new(stream);
    for line in reader.lines() {
        if stop.load(Ordering::SeqCst) {
            break;
        }
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let reply = serve_line(&line, params, config);
        writer.write_all(reply.as_bytes())?;
        writer.write_all(b"\n")?;
        writer.flush()?;
    }
    Ok(())
}

fn error_reply(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

/// Serves one request line; always returns exactly one reply line.
fn serve_line(line: &str, params: &OracleParams, config: &ServerConfig) -> String {
    let request = match decode_request(line) {
        Ok(r) => r,
        Err(msg) => return error_reply(&format!("malformed request: {msg}")),
    };
    match request {
        Request::Ping => "{\"ok\":true}".to_string(),
        Request::Episode {
            space,
            values,
            sample_idx,
        } => {
            if let Some(expected) = &config.space {
                if *expected != space {
                    return error_reply(&format!("server only serves space '{expected}'"));
                }
            }
            let space_def = match builtin_space(&space) {
                Ok(s) => s,
                Err(e) => return error_reply(&e.to_string()),
            };
            let cfg = ScenarioConfig {
                space: space.clone(),
                values,
                sample_idx,
            };
            let violations = validate_config(&space_def, &cfg);
            if !violations.is_empty() {
                let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
                return error_reply(&format!("invalid config: {}", list.join("; ")));
            }
            let mut stream = rng::stream(config.seed, "episode", sample_idx);
            let outcome = match space.as_str() {
                FRANKA_SPACE => run_episode(params, &cfg, &mut stream),
                UR5E_SPACE => ur5e_episode(&cfg, &mut stream),
                other => return error_reply(&format!("no oracle for space '{other}'")),
            };
            match outcome {
                Ok(o) => encode_outcome(&o),
                Err(e) => error_reply(&e.to_string()),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::success_probability;
    use crate::remote::{RemoteOracle, RemoteError};
    use crate::sampler::sample_stage1;
    use std::time::Duration;

    fn spawn_server(seed: u64) -> ServerHandle {
        OracleServer::spawn(ServerConfig {
            bind: "127.0.0.1:0".to_string(),
            seed,
            space: None,
            max_connections: 8,
        })
        .unwrap()
    }

    #[test]
    fn ping_round_trip() {
        let handle = spawn_server(1);
        let mut client = RemoteOracle::connect(&handle.addr().to_string()).unwrap();
        client.ping().unwrap();
        handle.shutdown();
    }

    #[test]
    fn episode_matches_local_oracle() {
        let seed = 2026;
        let handle = spawn_server(seed);
        let mut client = RemoteOracle::connect(&handle.addr().to_string()).unwrap();
        let space = crate::param_space::franka_space();
        let params = OracleParams::franka();
        let batch = sample_stage1(&space, 20, seed).unwrap();
        for cfg in &batch.configs {
            let mut stream = rng::stream(seed, "episode", cfg.sample_idx);
            let mut local = run_episode(&params, cfg, &mut stream).unwrap();
            let p = success_probability(&params, cfg).unwrap();
            let mut remote = client.episode(FRANKA_SPACE, cfg).unwrap();
            // fail_prob travels out of band.
            remote.fail_prob = 1.0 - p;
            local.fail_prob = 1.0 - p;
            assert_eq!(local, remote, "sample {}", cfg.sample_idx);
        }
        handle.shutdown();
    }

    #[test]
    fn repeated_sample_idx_gives_identical_replies() {
        let handle = spawn_server(7);
        let mut client = RemoteOracle::connect(&handle.addr().to_string()).unwrap();
        let space = crate::param_space::franka_space();
        let cfg = sample_stage1(&space, 1, 3).unwrap().configs.remove(0);
        let a = client.episode(FRANKA_SPACE, &cfg).unwrap();
        let b = client.episode(FRANKA_SPACE, &cfg).unwrap();
        assert_eq!(a, b);
        handle.shutdown();
    }

    #[test]
    fn malformed_line_gets_error_and_connection_survives() {
        let handle = spawn_server(5);
        let addr = handle.addr().to_string();
        let stream = TcpStream::connect(&addr).unwrap();
        stream
            .set_read_timeout(Some(Duration::from_secs(5)))
            .unwrap();
        let mut writer = stream.try_clone().unwrap();
        let mut reader = BufReader::new(stream);
        writer.write_all(b"this is not json\n").unwrap();
        writer.flush().unwrap();
        let mut line = String::new();
        reader.read_line(&mut line).unwrap();
        assert!(line.contains("error"), "{line}");
        assert!(line.contains("malformed request"), "{line}");
        // Same connection still serves valid requests.
        writer.write_all(b"{\"cmd\":\"ping\"}\n").unwrap();
        writer.flush().unwrap();
        line.clear();
        reader.read_line(&mut line).unwrap();
        assert!(line.contains("\"ok\":true"), "{line}");
        handle.shutdown();
    }

    #[test]
    fn invalid_config_gets_error_reply() {
        let handle = spawn_server(5);
        let mut client = RemoteOracle::connect(&handle.addr().to_string()).unwrap();
        let space = crate::param_space::franka_space();
        let mut cfg = sample_stage1(&space, 1, 3).unwrap().configs.remove(0);
        cfg.values.insert(
            "friction".into(),
            crate::param_space::ParamValue::Float(9.0),
        );
        match client.episode(FRANKA_SPACE, &cfg) {
            Err(RemoteError::ServerError(msg)) => assert!(msg.contains("friction"), "{msg}"),
            other => panic!("expected server error, got {other:?}"),
        }
        handle.shutdown();
    }

    #[test]
    fn space_filter_rejects_other_spaces() {
        let handle = OracleServer::spawn(ServerConfig {
            bind: "127.0.0.1:0".to_string(),
            seed: 1,
            space: Some(UR5E_SPACE.to_string()),
            max_connections: 4,
        })
        .unwrap();
        let mut client = RemoteOracle::connect(&handle.addr().to_string()).unwrap();
        let space = crate::param_space::franka_space();
        let cfg = sample_stage1(&space, 1, 3).unwrap().configs.remove(0);
        assert!(matches!(
            client.episode(FRANKA_SPACE, &cfg),
            Err(RemoteError::ServerError(_))
        ));
        handle.shutdown();
    }

    #[test]
    fn unreachable_endpoint_is_a_connect_error() {
        // Bind then drop to get an address nobody listens on.
        let addr = {
            let listener = TcpListener::bind("127.0.0.1:0").unwrap();
            listener.local_addr().unwrap()
        };
        match RemoteOracle::connect(&addr.to_string()) {
            Err(RemoteError::Connect { .. }) => {}
            other => panic!("expected connect error, got {other:?}"),
        }
    }

    #[test]
    fn serves_a_thousand_sequential_requests() {
        let handle = spawn_server(11);
        let mut client = RemoteOracle::connect(&handle.addr().to_string()).unwrap();
        let space = crate::param_space::franka_space();
        let batch = sample_stage1(&space, 1000, 11).unwrap();
        let mut successes = 0;
        for cfg in &batch.configs {
            let outcome = client.episode(FRANKA_SPACE, cfg).unwrap();
            outcome.validate().unwrap();
            if outcome.success {
                successes += 1;
            }
        }
        assert!(successes > 0);
        handle.shutdown();
    }
}
