//! Numerical estimation of omega-limit sets for autonomous ODE systems
//! `x' = f(x)`, together with certificate-style checks of the invariance
//! hypotheses that locate those limit sets inside invariant sets.
//!
//! The crate is organised around a small pipeline:
//!
//! * [`expr`] — parse, evaluate and symbolically differentiate scalar
//!   expressions over state variables `x1..xn`, so that vector fields,
//!   auxiliary functions `V` and Lie derivatives `∇V·f` are all computable.
//! * [`odeint`] — adaptive Dormand–Prince 5(4) integration with dense output,
//!   backward flow and finite-escape (blow-up) detection.
//! * [`regions`] — tolerance-based membership, distance estimation and grid
//!   sampling for sets given as zero sets, sublevel sets or point sets.
//! * [`omega`] — omega-limit set estimation from trajectory tails with
//!   settledness diagnostics.
//! * [`invariance`] — numerical tests for positive/negative invariance and a
//!   finite-horizon estimate of the largest invariant set in a container.
//! * [`certify`] — end-to-end certificates combining the pieces above into
//!   structured PASS/FAIL/INCONCLUSIVE reports.
//! * [`system`] / [`cli`] — JSON system specifications, built-in examples and
//!   the command-line front end.
//!
//! See the `examples/` directory for one runnable program per capability.

pub mod certify;
pub mod cli;
pub mod expr;
pub mod invariance;
pub mod odeint;
pub mod omega;
pub mod regions;
pub mod schemas;
pub mod system;

pub(crate) mod vecmath;

use serde::{Deserialize, Serialize};

/// Outcome of a numerical certificate or sub-check.
///
/// `Inconclusive` is a first-class verdict: an unsettled omega estimate or an
/// empty sample cloud never produces a certified failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "PASS")]
    Pass,
    #[serde(rename = "FAIL")]
    Fail,
    #[serde(rename = "INCONCLUSIVE")]
    Inconclusive,
}

impl Verdict {
    /// Combine sub-verdicts: any FAIL dominates, then any INCONCLUSIVE.
    pub fn combine(verdicts: impl IntoIterator<Item = Verdict>) -> Verdict {
        let mut out = Verdict::Pass;
        for v in verdicts {
            match v {
                Verdict::Fail => return Verdict::Fail,
                Verdict::Inconclusive => out = Verdict::Inconclusive,
                Verdict::Pass => {}
            }
        }
        out
    }

    pub fn is_pass(self) -> bool {
        self == Verdict::Pass
    }

    /// Process exit code used by the CLI: 0 = PASS, 3 = FAIL, 4 = INCONCLUSIVE.
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Pass => 0,
            Verdict::Fail => 3,
            Verdict::Inconclusive => 4,
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Pass => write!(f, "PASS"),
            Verdict::Fail => write!(f, "FAIL"),
            Verdict::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}
