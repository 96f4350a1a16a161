//! Run reports emitted by the command line front end.
//!
//! A [`RunReport`] records, for one invocation, which checks ran, their
//! residuals and verdicts, and enough provenance (config hash, seed,
//! versions, quadrature sizes) to reproduce the run bit for bit.

use serde::Serialize;
use sha2::{Digest, Sha256};

/// One named verification with its residual and verdict. `detail` carries
/// the check-specific sub-report as free-form JSON.
#[derive(Debug, Clone, Serialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub max_residual: f64,
    pub tol: f64,
    pub detail: serde_json::Value,
}

impl CheckOutcome {
    pub fn new(name: impl Into<String>, pass: bool, max_residual: f64, tol: f64) -> Self {
        Self { name: name.into(), pass, max_residual, tol, detail: serde_json::Value::Null }
    }

    pub fn with_detail<T: Serialize>(mut self, detail: &T) -> Self {
        self.detail = serde_json::to_value(detail).unwrap_or(serde_json::Value::Null);
        self
    }
}

/// Full provenance-carrying report of a `verify` or `simulate` run.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: String,
    pub config_sha256: String,
    pub seed: u64,
    pub crate_version: String,
    /// Quadrature node counts per averaging axis, empty when no averaging
    /// was involved.
    pub quadrature_nodes: Vec<usize>,
    pub checks: Vec<CheckOutcome>,
    pub all_pass: bool,
}

impl RunReport {
    pub fn new(scenario: impl Into<String>, config_bytes: &[u8], seed: u64) -> Self {
        Self {
            scenario: scenario.into(),
            config_sha256: sha256_hex(config_bytes),
            seed,
            crate_version: env!("CARGO_PKG_VERSION").to_string(),
            quadrature_nodes: Vec::new(),
            checks: Vec::new(),
            all_pass: true,
        }
    }

    pub fn push(&mut self, outcome: CheckOutcome) {
        self.all_pass = self.all_pass && outcome.pass;
        self.checks.push(outcome);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Lowercase hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
