use std::fmt;

use serde::{Deserialize, Serialize};

/// Absolute round-off allowance used by every inequality check.
pub const CHECK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Pass,
    Fail,
    /// The bound carries no information (e.g. a nonpositive lower bound).
    Vacuous,
    /// An existence constant was fitted rather than assumed.
    Fitted,
}

impl Verdict {
    pub fn is_failure(self) -> bool {
        self == Verdict::Fail
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Vacuous => "VACUOUS",
            Verdict::Fitted => "FITTED",
        })
    }
}

/// Measured value against a bound; `slack` is positive when the inequality holds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub measured: f64,
    pub bound: f64,
    pub slack: f64,
    pub verdict: Verdict,
}

impl BoundCheck {
    /// `measured <= bound`.
    pub fn upper(measured: f64, bound: f64) -> Self {
        let slack = bound - measured;
        let verdict = if slack >= -CHECK_TOL { Verdict::Pass } else { Verdict::Fail };
        Self { measured, bound, slack, verdict }
    }

    /// `measured >= bound`; vacuous when the bound is not positive.
    pub fn lower(measured: f64, bound: f64) -> Self {
        let slack = measured - bound;
        let verdict = if !(bound > 0.0) {
            Verdict::Vacuous
        } else if slack >= -CHECK_TOL {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        Self { measured, bound, slack, verdict }
    }
}
