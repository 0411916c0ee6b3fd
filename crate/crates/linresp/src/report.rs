//! Serializable check reports shared by the identity checks and the command-line harness.

use serde::Serialize;

/// One identity check: `{check, params, lhs, rhs, residual, tolerance, pass}`.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CheckReport {
    pub check: String,
    pub params: Vec<(String, String)>,
    pub lhs: [f64; 2],
    pub rhs: [f64; 2],
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckReport {
    pub fn new(check: &str, lhs: crate::C64, rhs: crate::C64, residual: f64, tolerance: f64) -> Self {
        Self {
            check: check.to_string(),
            params: Vec::new(),
            lhs: [lhs.re, lhs.im],
            rhs: [rhs.re, rhs.im],
            residual,
            tolerance,
            pass: residual.is_finite() && residual <= tolerance,
        }
    }

    pub fn param(mut self, key: &str, value: impl ToString) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }
}
