//! First certificate: limit sets of a positively invariant compact set `Ω`
//! are located inside the largest invariant set of `Ā∩Ω`, provided `∇V·f`
//! does not vanish on `Ω∖A` and `A` is negatively invariant.

use super::{dedup_points, gradient_of, lie_scale, normalized, CertifyError};
use crate::expr::{lie_derivative, Expression};
use crate::invariance::{
    estimate_largest_invariant_set, test_negative_invariance, test_positive_invariance,
    InvarianceReport,
};
use crate::odeint::{integrate, IntegratorConfig, Termination};
use crate::omega::{estimate_omega, OmegaParams};
use crate::regions::{Region, RegionKind};
use crate::vecmath::min_dist_to;
use crate::Verdict;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Thm1Params {
    /// Horizon for the per-state limit-set estimates.
    pub t_end: f64,
    pub omega: OmegaParams,
    /// Per-axis grid resolution used to sample `Ω`.
    pub sample_resolution: usize,
    /// Condition (i) excludes samples closer than `delta_factor · A.tol`
    /// to `A`; the nonvanishing requirement is compatible with `∇V·f`
    /// decaying toward `A`.
    pub delta_factor: f64,
    /// Condition (i) threshold on the normalized minimum of `|∇V·f|`.
    pub eps_margin: f64,
    /// Inclusion tolerance for limit-set representatives against the
    /// invariant-set estimate.
    pub incl_tol: f64,
    /// Number of initial states drawn from `Ω` for the conclusion check.
    pub initial_count: usize,
    /// Samples and horizon for the positive-invariance spot check of `Ω`.
    pub invariance_sample_count: usize,
    pub invariance_horizon: f64,
    /// Membership excess allowed during the spot check, in `g`-units;
    /// `None` derives `max(2·Ω.tol, 1e-4)`.
    pub spot_escape_tol: Option<f64>,
    /// Horizon and outside-margin for the negative-invariance test of `A`.
    pub negative_horizon: f64,
    pub entry_tol: f64,
    /// Flow-filter horizon and escape tolerance for the largest-invariant-set
    /// estimate.
    pub m_horizon: f64,
    pub m_escape_tol: f64,
}

impl Default for Thm1Params {
    fn default() -> Self {
        Thm1Params {
            t_end: 200.0,
            omega: OmegaParams::default(),
            sample_resolution: 401,
            delta_factor: 10.0,
            eps_margin: 1e-8,
            incl_tol: 1e-2,
            initial_count: 12,
            invariance_sample_count: 40,
            invariance_horizon: 20.0,
            spot_escape_tol: None,
            negative_horizon: 5.0,
            entry_tol: 1e-2,
            m_horizon: 20.0,
            m_escape_tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolvedThm1Params {
    pub t_end: f64,
    pub omega: OmegaParams,
    pub sample_resolution: usize,
    pub delta: f64,
    pub eps_margin: f64,
    pub incl_tol: f64,
    pub initial_count: usize,
    pub invariance_sample_count: usize,
    pub invariance_horizon: f64,
    pub spot_escape_tol: f64,
    pub negative_horizon: f64,
    pub entry_tol: f64,
    pub m_horizon: f64,
    pub m_escape_tol: f64,
}

/// Condition (i): minimum of `|∇V·f|` over `Ω` samples at distance `>= δ`
/// from `A`. The verdict compares the normalized minimum (see module docs)
/// against `eps_margin`. An empty sample set after exclusion means `Ω∖A` is
/// empty at this resolution, for which the theorem holds trivially.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionI {
    pub verdict: Verdict,
    pub samples_used: usize,
    pub excluded_near_a: usize,
    pub min_abs_lie: f64,
    pub max_abs_lie: f64,
    pub normalization: f64,
    pub normalized_min: f64,
    pub delta: f64,
    pub worst_point: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MHatSummary {
    pub points: Vec<Vec<f64>>,
    pub container_size: usize,
    pub horizon: f64,
    pub escape_tol: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct X0Conclusion {
    pub x0: Vec<f64>,
    pub representatives: Vec<Vec<f64>>,
    pub settled: bool,
    pub gap: f64,
    /// Worst distance from a representative to the invariant-set estimate.
    pub max_dist_to_m: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct Conclusion {
    pub verdict: Verdict,
    pub per_x0: Vec<X0Conclusion>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Thm1Report {
    pub overall: Verdict,
    /// Spot check of the hypothesis that `Ω` is positively invariant.
    pub omega_invariance: InvarianceReport,
    pub condition_i: ConditionI,
    /// Negative-invariance test of `A`.
    pub condition_ii: InvarianceReport,
    pub m_hat: MHatSummary,
    pub conclusion: Conclusion,
    pub params: ResolvedThm1Params,
}

/// Run the full first-theorem certificate for `x' = f(x)` with candidate
/// function `V`, positively invariant region `omega_region` and negatively
/// invariant region `a_region`.
pub fn check_theorem1(
    field: &[Expression],
    v: &Expression,
    omega_region: &Region,
    a_region: &Region,
    params: &Thm1Params,
) -> Result<Thm1Report, CertifyError> {
    let spot_escape_tol = params
        .spot_escape_tol
        .unwrap_or_else(|| (2.0 * omega_region.tol()).max(1e-4));
    let delta = params.delta_factor * a_region.tol();
    let resolved = ResolvedThm1Params {
        t_end: params.t_end,
        omega: params.omega.clone(),
        sample_resolution: params.sample_resolution,
        delta,
        eps_margin: params.eps_margin,
        incl_tol: params.incl_tol,
        initial_count: params.initial_count,
        invariance_sample_count: params.invariance_sample_count,
        invariance_horizon: params.invariance_horizon,
        spot_escape_tol,
        negative_horizon: params.negative_horizon,
        entry_tol: params.entry_tol,
        m_horizon: params.m_horizon,
        m_escape_tol: params.m_escape_tol,
    };

    // (a) Hypothesis spot check: Ω positively invariant.
    let omega_invariance = test_positive_invariance(
        omega_region,
        field,
        params.invariance_sample_count,
        params.invariance_horizon,
        spot_escape_tol,
    )?;

    // Refined Ω samples: grid capture, then projection onto the surface for
    // implicit kinds so the cloud sits on Ω itself rather than on the
    // capture band.
    let omega_samples = refined_region_samples(omega_region, params.sample_resolution)?;

    // Geometric distance to A for the exclusion zone and the container.
    let a_cloud = match a_region.kind() {
        RegionKind::PointSet(points) => points.clone(),
        RegionKind::WholeSpace => Vec::new(),
        _ => a_region.sample(101).map(|c| c.points).unwrap_or_default(),
    };
    let dist_to_a = |x: &[f64]| -> f64 {
        let coarse = min_dist_to(x, &a_cloud).unwrap_or(f64::INFINITY);
        if matches!(a_region.kind(), RegionKind::WholeSpace) {
            return 0.0;
        }
        if coarse < 0.1 {
            if let Some(projected) = a_region.project(x) {
                return coarse.min(crate::vecmath::dist(x, &projected));
            }
        }
        coarse
    };

    // (b) Condition (i): nonvanishing Lie derivative away from A.
    let lie = lie_derivative(v, field)?;
    let grad_v = gradient_of(v)?;
    let mut kept: Vec<&Vec<f64>> = Vec::new();
    let mut excluded = 0usize;
    for x in &omega_samples {
        if dist_to_a(x) >= delta {
            kept.push(x);
        } else {
            excluded += 1;
        }
    }
    let normalization = lie_scale(&grad_v, field, kept.iter().map(|p| p.as_slice()));
    let mut min_abs_lie = f64::INFINITY;
    let mut max_abs_lie = 0.0_f64;
    let mut worst_point: Option<Vec<f64>> = None;
    for x in &kept {
        let value = lie.evaluate(x)?.abs();
        if value < min_abs_lie {
            min_abs_lie = value;
            worst_point = Some((*x).clone());
        }
        max_abs_lie = max_abs_lie.max(value);
    }
    let condition_i = if kept.is_empty() {
        // Ω∖A empty at this resolution: the conclusion is trivial.
        ConditionI {
            verdict: if omega_samples.is_empty() {
                Verdict::Inconclusive
            } else {
                Verdict::Pass
            },
            samples_used: 0,
            excluded_near_a: excluded,
            min_abs_lie: 0.0,
            max_abs_lie: 0.0,
            normalization: 0.0,
            normalized_min: 0.0,
            delta,
            worst_point: None,
        }
    } else {
        let normalized_min = normalized(min_abs_lie, normalization);
        ConditionI {
            verdict: if normalized_min > params.eps_margin {
                Verdict::Pass
            } else {
                Verdict::Fail
            },
            samples_used: kept.len(),
            excluded_near_a: excluded,
            min_abs_lie,
            max_abs_lie,
            normalization,
            normalized_min,
            delta,
            worst_point,
        }
    };

    // (c) Condition (ii): A negatively invariant.
    let condition_ii = test_negative_invariance(
        a_region,
        field,
        params.invariance_sample_count,
        params.negative_horizon,
        params.entry_tol,
    )?;

    // (d) Largest invariant set inside the tolerance closure of A within Ω:
    // flow-filter the Ω samples that sit within δ of A.
    let container_points: Vec<Vec<f64>> = omega_samples
        .iter()
        .filter(|x| dist_to_a(x) < delta)
        .cloned()
        .collect();
    let container_size = container_points.len();
    let m_hat_points = if container_points.is_empty() {
        Vec::new()
    } else {
        let container = Region::point_set(container_points, dimension_of(field))
            .map_err(CertifyError::Region)?
            .with_tol(params.m_escape_tol);
        estimate_largest_invariant_set(&container, field, 2, params.m_horizon, params.m_escape_tol)?
            .points
    };
    let m_hat = MHatSummary {
        points: m_hat_points.clone(),
        container_size,
        horizon: params.m_horizon,
        escape_tol: params.m_escape_tol,
    };

    // (e) Conclusion: every estimated limit set lies in the invariant-set
    // estimate.
    let initial_states = stride_select(&omega_samples, params.initial_count);
    let config = IntegratorConfig {
        t_end: params.t_end,
        ..Default::default()
    };
    let per_x0: Vec<Result<X0Conclusion, CertifyError>> = initial_states
        .par_iter()
        .map(|x0| {
            let traj = integrate(field, x0, &config)?;
            if traj.termination() != Termination::Horizon {
                return Ok(X0Conclusion {
                    x0: x0.clone(),
                    representatives: Vec::new(),
                    settled: false,
                    gap: f64::INFINITY,
                    max_dist_to_m: f64::INFINITY,
                    verdict: Verdict::Fail,
                });
            }
            let estimate = estimate_omega(&traj, &params.omega)?;
            let max_dist_to_m = estimate
                .representatives
                .iter()
                .map(|rep| min_dist_to(rep, &m_hat_points).unwrap_or(f64::INFINITY))
                .fold(0.0, f64::max);
            let verdict = if !estimate.settled {
                Verdict::Inconclusive
            } else if m_hat_points.is_empty() {
                Verdict::Inconclusive
            } else if max_dist_to_m <= params.incl_tol {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            Ok(X0Conclusion {
                x0: x0.clone(),
                representatives: estimate.representatives,
                settled: estimate.settled,
                gap: estimate.gap,
                max_dist_to_m,
                verdict,
            })
        })
        .collect();
    let mut conclusions = Vec::with_capacity(per_x0.len());
    for c in per_x0 {
        conclusions.push(c?);
    }
    let conclusion_verdict = if conclusions.is_empty() {
        Verdict::Inconclusive
    } else {
        Verdict::combine(conclusions.iter().map(|c| c.verdict))
    };
    let conclusion = Conclusion {
        verdict: conclusion_verdict,
        per_x0: conclusions,
    };

    let overall = Verdict::combine([
        omega_invariance.verdict,
        condition_i.verdict,
        condition_ii.verdict,
        conclusion.verdict,
    ]);

    Ok(Thm1Report {
        overall,
        omega_invariance,
        condition_i,
        condition_ii,
        m_hat,
        conclusion,
        params: resolved,
    })
}

fn dimension_of(field: &[Expression]) -> usize {
    field.first().map(|e| e.dimension()).unwrap_or(0)
}

/// Grid-sample a region and, for implicit kinds, Newton-project the captured
/// band onto the surface, deduplicating at half the grid spacing.
pub(crate) fn refined_region_samples(
    region: &Region,
    resolution: usize,
) -> Result<Vec<Vec<f64>>, CertifyError> {
    let cloud = region.sample(resolution)?;
    match region.kind() {
        RegionKind::ZeroSet(_) => {
            let spacing = region
                .bounds()
                .map(|b| {
                    b.iter()
                        .map(|&[lo, hi]| (hi - lo) / (resolution - 1) as f64)
                        .fold(0.0, f64::max)
                })
                .unwrap_or(0.0);
            let mut projected = Vec::with_capacity(cloud.points.len());
            for p in cloud.points {
                match region.project(&p) {
                    Some(q) => projected.push(q),
                    None => projected.push(p),
                }
            }
            Ok(dedup_points(projected, spacing / 2.0))
        }
        _ => Ok(cloud.points),
    }
}

pub(crate) fn stride_select(points: &[Vec<f64>], count: usize) -> Vec<Vec<f64>> {
    if points.len() <= count {
        return points.to_vec();
    }
    (0..count)
        .map(|i| points[i * points.len() / count].clone())
        .collect()
}
