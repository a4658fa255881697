//! The JSON check-report record shared by the verification layer and the
//! CLI.

use serde::{Deserialize, Serialize};

/// One verifier outcome. `params` is free-form structured detail; the
/// record is what the CLI serialises into artifacts and what the summary
/// command aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub check: String,
    pub model: String,
    pub params: serde_json::Value,
    pub statistic: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(
        check: impl Into<String>,
        model: impl Into<String>,
        params: serde_json::Value,
        statistic: f64,
        threshold: f64,
        pass: bool,
    ) -> Self {
        CheckReport {
            check: check.into(),
            model: model.into(),
            params,
            statistic,
            threshold,
            pass,
        }
    }
}
