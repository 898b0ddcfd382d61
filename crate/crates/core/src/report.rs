//! Pass/fail records shared by the verification routines and scenario reports.

use serde::{Deserialize, Serialize};

/// Direction of a threshold comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// `value <= threshold`.
    AtMost,
    /// `value >= threshold`.
    AtLeast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub bound: Bound,
    pub pass: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            bound: Bound::AtMost,
            pass: value <= threshold,
        }
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Check {
            name: name.into(),
            value,
            threshold,
            bound: Bound::AtLeast,
            pass: value >= threshold,
        }
    }

    /// A boolean outcome recorded as `1 >= 1` or `0 >= 1`.
    pub fn flag(name: impl Into<String>, ok: bool) -> Self {
        Check::at_least(name, if ok { 1.0 } else { 0.0 }, 1.0)
    }
}

pub fn all_pass(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.pass)
}
