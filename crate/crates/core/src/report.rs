//! Structured pass/fail records.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grade {
    /// A property the theory guarantees; a failure is a defect.
    Assertion,
    /// An empirical estimate reported for inspection.
    Diagnostic,
    /// The check could not be decided on the available samples.
    Inconclusive,
}

/// One inequality check `lhs <= rhs + tolerance`, with `margin = rhs - lhs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub lemma: String,
    pub grade: Grade,
    #[serde(default)]
    pub scenario: String,
    pub inputs_digest: String,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl CheckReport {
    pub fn new(
        lemma: impl Into<String>,
        grade: Grade,
        lhs: f64,
        rhs: f64,
        tolerance: f64,
        inputs: &[f64],
    ) -> Self {
        let pass = lhs <= rhs + tolerance;
        CheckReport {
            lemma: lemma.into(),
            grade,
            scenario: String::new(),
            inputs_digest: digest_f64s(inputs),
            lhs,
            rhs,
            margin: rhs - lhs,
            tolerance,
            pass,
            detail: None,
        }
    }

    pub fn inconclusive(lemma: impl Into<String>, inputs: &[f64], why: impl Into<String>) -> Self {
        CheckReport {
            lemma: lemma.into(),
            grade: Grade::Inconclusive,
            scenario: String::new(),
            inputs_digest: digest_f64s(inputs),
            lhs: f64::NAN,
            rhs: f64::NAN,
            margin: f64::NAN,
            tolerance: 0.0,
            pass: false,
            detail: Some(why.into()),
        }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Self {
        self.detail = Some(detail.into());
        self
    }

    pub fn with_scenario(mut self, scenario: &str) -> Self {
        self.scenario = scenario.to_string();
        self
    }

    /// True only for failed assertion-grade checks.
    pub fn is_failure(&self) -> bool {
        self.grade == Grade::Assertion && !self.pass
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("report serialization is infallible")
    }
}

/// First 16 hex characters of SHA-256 over the little-endian bytes.
pub fn digest_f64s(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

pub fn digest_bytes(bytes: &[u8]) -> String {
    hex::encode(&Sha256::digest(bytes)[..8])
}

pub fn to_jsonl(reports: &[CheckReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&r.to_json_line());
        out.push('\n');
    }
    out
}
