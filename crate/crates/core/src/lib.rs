//! Deployment-risk validation toolkit.
//!
//! The crate covers the full pre-deployment loop for a binary-outcome
//! episode process: two-stage adaptive sampling of an operational parameter
//! space, synthetic (or remote) episode execution, failure-dictionary
//! persistence, boundary-region detection, an interpretable logistic risk
//! model, a five-metric validation gate with a confidence score, and a
//! post-deployment drift monitor.

pub mod boundary;
pub mod dictionary;
pub mod gate;
pub mod monitor;
pub mod oracle;
pub mod param_space;
pub mod pipeline;
pub mod remote;
pub mod risk;
pub mod rng;
pub mod sampler;
pub mod server;
