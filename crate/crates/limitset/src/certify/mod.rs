//! Certificate-style checks: run the hypotheses and conclusions of the
//! limit-set location theorems as numerical tests and emit structured
//! PASS/FAIL/INCONCLUSIVE reports.
//!
//! Two certificates are provided. [`check_theorem1`] verifies, for a
//! positively invariant compact set `Ω`, that `∇V·f` does not vanish on
//! `Ω∖A` (condition i), that `A` is negatively invariant (condition ii), and
//! that every estimated limit set lands inside the largest invariant set of
//! `Ā∩Ω`. [`check_theorem2`] needs no special `V`: it checks that every
//! bounded trajectory's limit set meets `S = {∇V·f = 0}`.
//!
//! All `|∇V·f|` verdicts compare values normalized by the sample-set maximum
//! of `|∇V|·|f|`, so scaling `V` by a positive constant never changes a
//! verdict.

mod theorem1;
mod theorem2;

pub use theorem1::{check_theorem1, Thm1Params, Thm1Report};
pub use theorem2::{
    check_theorem2, weak_attractor_sweep, SweepParams, SweepPoint, SweepSummary, Thm2Params,
    Thm2PerX0, Thm2Report,
};

use crate::expr::{lie_derivative, Expression, ExprError};
use crate::invariance::InvarianceError;
use crate::odeint::{OdeError, Trajectory};
use crate::omega::OmegaError;
use crate::regions::RegionError;
use crate::vecmath::{dist, linspace};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CertifyError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Ode(#[from] OdeError),
    #[error(transparent)]
    Omega(#[from] OmegaError),
    #[error(transparent)]
    Invariance(#[from] InvarianceError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// The sign signal `p(t) = ∇V(φ(t))·f(φ(t))` along a trajectory.
///
/// Under the first theorem's hypotheses `p` never reaches zero, so its sign
/// cannot change; a sign change in the sampled signal falsifies them.
#[derive(Debug, Clone, Serialize)]
pub struct LieSignal {
    pub samples: Vec<(f64, f64)>,
    /// Sign alternations among probes with `|p|` above `threshold`.
    pub sign_changes: usize,
    pub min_abs: f64,
    pub max_abs: f64,
    pub threshold: f64,
}

/// Sample `p(t) = ∇V·f` along the trajectory at `probe_count` equispaced
/// times. Probes with `|p| <= threshold` are treated as sign-free.
pub fn lie_signal(
    traj: &Trajectory,
    v: &Expression,
    field: &[Expression],
    probe_count: usize,
    threshold: f64,
) -> Result<LieSignal, CertifyError> {
    if probe_count < 2 {
        return Err(CertifyError::InvalidParams(
            "probe_count must be at least 2".into(),
        ));
    }
    let lie = lie_derivative(v, field)?;
    let times = linspace(0.0, traj.last_time(), probe_count);
    let mut samples = Vec::with_capacity(times.len());
    let mut sign_changes = 0usize;
    let mut last_sign = 0i8;
    let mut min_abs = f64::INFINITY;
    let mut max_abs = 0.0_f64;
    for &t in &times {
        let state = traj.sample_at(t)?;
        let p = lie.evaluate(&state)?;
        samples.push((t, p));
        min_abs = min_abs.min(p.abs());
        max_abs = max_abs.max(p.abs());
        if p.abs() > threshold {
            let sign = if p > 0.0 { 1i8 } else { -1i8 };
            if last_sign != 0 && sign != last_sign {
                sign_changes += 1;
            }
            last_sign = sign;
        }
    }
    Ok(LieSignal {
        samples,
        sign_changes,
        min_abs,
        max_abs,
        threshold,
    })
}

/// Normalization scale for `|∇V·f|` comparisons: the maximum of
/// `|∇V(x)|·|f(x)|` over the reference points. Scaling `V` by `c > 0`
/// scales both this and every Lie value by `c`, keeping normalized
/// quantities fixed. Zero scale (an equilibrium set, or `∇V ≡ 0`) makes
/// every normalized value zero.
pub(crate) fn lie_scale<'a>(
    grad_v: &[Expression],
    field: &[Expression],
    points: impl Iterator<Item = &'a [f64]>,
) -> f64 {
    let mut scale = 0.0_f64;
    for x in points {
        let mut grad_sq = 0.0;
        let mut field_sq = 0.0;
        let mut ok = true;
        for g in grad_v {
            match g.evaluate(x) {
                Ok(v) => grad_sq += v * v,
                Err(_) => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            for f in field {
                match f.evaluate(x) {
                    Ok(v) => field_sq += v * v,
                    Err(_) => {
                        ok = false;
                        break;
                    }
                }
            }
        }
        if ok {
            scale = scale.max(grad_sq.sqrt() * field_sq.sqrt());
        }
    }
    scale
}

pub(crate) fn normalized(value: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        value / scale
    } else {
        0.0
    }
}

pub(crate) fn gradient_of(v: &Expression) -> Result<Vec<Expression>, ExprError> {
    (1..=v.dimension()).map(|i| v.differentiate(i)).collect()
}

/// Greedy deduplication: keep points in order, dropping any within `radius`
/// of an already-kept point.
pub(crate) fn dedup_points(points: Vec<Vec<f64>>, radius: f64) -> Vec<Vec<f64>> {
    let mut kept: Vec<Vec<f64>> = Vec::new();
    for p in points {
        if kept.iter().all(|q| dist(&p, q) > radius) {
            kept.push(p);
        }
    }
    kept
}

#[cfg(test)]
mod tests;
