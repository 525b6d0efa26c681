//! Second certificate: for any `V`, the limit set of every bounded
//! trajectory intersects `S = {x : ∇V(x)·f(x) = 0}`. The sweep variant runs
//! the intersection check over a grid of initial states, probing the reading
//! of `S` as a global weak attractor.

use super::{gradient_of, lie_scale, lie_signal, normalized, CertifyError};
use crate::expr::{lie_derivative, Expression};
use crate::invariance::estimate_largest_invariant_set;
use crate::odeint::{integrate, IntegratorConfig, Termination, Trajectory};
use crate::omega::{estimate_omega, OmegaEstimate, OmegaParams};
use crate::regions::Region;
use crate::vecmath::min_dist_to;
use crate::Verdict;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Thm2Params {
    pub t_end: f64,
    /// Boundedness surrogate: the trajectory's max norm must stay below this.
    pub bound: f64,
    /// Intersection threshold on the normalized `|∇V·f|` at representatives
    /// (`g`-units check); the geometric fallback accepts representatives
    /// within `omega.cluster_eps` of `S`.
    pub s_tol: f64,
    pub omega: OmegaParams,
    /// Probes for the Lie signal along each trajectory.
    pub probe_count: usize,
    /// Bounding box for geometric distances to `S`; without it only the
    /// `g`-units check runs.
    pub s_box: Option<Vec<[f64; 2]>>,
    /// Optional reachability grid: initial states checked for hitting `S`
    /// (sub-threshold `|p|` or a sign change of `p`). Hit points feed a
    /// box-relative largest-invariant-set estimate and an inclusion check.
    pub reach_grid: Option<Vec<Vec<f64>>>,
    pub m_horizon: f64,
    pub m_escape_tol: f64,
    pub incl_tol: f64,
}

impl Default for Thm2Params {
    fn default() -> Self {
        Thm2Params {
            t_end: 200.0,
            bound: 1e6,
            s_tol: 1e-6,
            omega: OmegaParams::default(),
            probe_count: 1000,
            s_box: None,
            reach_grid: None,
            m_horizon: 20.0,
            m_escape_tol: 1e-3,
            incl_tol: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Thm2PerX0 {
    pub x0: Vec<f64>,
    pub boundedness: Verdict,
    pub max_norm: f64,
    pub settled: bool,
    pub gap: f64,
    pub representatives: Vec<Vec<f64>>,
    /// Minimum `|∇V·f|` over the representatives, raw and normalized by the
    /// trajectory's `|∇V|·|f|` scale.
    pub s_min_abs_lie: f64,
    pub s_normalized_min: f64,
    /// Geometric distance from the best representative to `S`, when a box
    /// was supplied.
    pub s_distance: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReachCheck {
    /// `(x0, hit)` for every grid point.
    pub hits: Vec<(Vec<f64>, bool)>,
    pub fraction_hitting: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MInclusion {
    /// Box-relative estimate: flow-filtered hit points of the reach grid.
    pub m_hat: Vec<Vec<f64>>,
    pub per_x0_max_dist: Vec<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Serialize)]
pub struct Thm2Report {
    pub overall: Verdict,
    /// Printed form of the Lie derivative whose zero set is `S`.
    pub s_description: String,
    pub per_x0: Vec<Thm2PerX0>,
    pub reach: Option<ReachCheck>,
    pub m_inclusion: Option<MInclusion>,
    pub params: Thm2Params,
}

/// Check, for each initial state, that the trajectory is bounded and that
/// its estimated limit set meets `S = {∇V·f = 0}`. Blow-up fails the
/// boundedness leg; an unsettled limit-set estimate is inconclusive, never a
/// certified failure.
pub fn check_theorem2(
    field: &[Expression],
    v: &Expression,
    x0s: &[Vec<f64>],
    params: &Thm2Params,
) -> Result<Thm2Report, CertifyError> {
    if x0s.is_empty() {
        return Err(CertifyError::InvalidParams(
            "at least one initial state is required".into(),
        ));
    }
    let lie = lie_derivative(v, field)?;
    let grad_v = gradient_of(v)?;
    let s_region = params.s_box.as_ref().map(|b| {
        Region::zero_set(lie.clone())
            .with_tol(params.s_tol)
            .with_bounds(b.clone())
    });
    let config = IntegratorConfig {
        t_end: params.t_end,
        ..Default::default()
    };

    let outcomes: Vec<Result<Thm2PerX0, CertifyError>> = x0s
        .par_iter()
        .map(|x0| {
            let traj = integrate(field, x0, &config)?;
            per_x0_check(
                x0, &traj, &lie, &grad_v, field, s_region.as_ref(), params,
            )
        })
        .collect();
    let mut per_x0 = Vec::with_capacity(outcomes.len());
    for o in outcomes {
        per_x0.push(o?);
    }

    // Optional reachability grid: which starts reach S at all, and does the
    // inclusion into the invariant set of their closure hold.
    let reach = match &params.reach_grid {
        None => None,
        Some(grid) => {
            let hits: Vec<Result<(Vec<f64>, bool), CertifyError>> = grid
                .par_iter()
                .map(|x0| {
                    let traj = integrate(field, x0, &config)?;
                    if traj.termination() != Termination::Horizon {
                        return Ok((x0.clone(), false));
                    }
                    let signal =
                        lie_signal(&traj, v, field, params.probe_count, params.s_tol)?;
                    let scale = lie_scale(
                        &grad_v,
                        field,
                        traj.states().iter().map(|s| s.as_slice()),
                    );
                    let hit = signal.sign_changes > 0
                        || normalized(signal.min_abs, scale) <= params.s_tol;
                    Ok((x0.clone(), hit))
                })
                .collect();
            let mut resolved = Vec::with_capacity(hits.len());
            for h in hits {
                resolved.push(h?);
            }
            let hit_count = resolved.iter().filter(|(_, hit)| *hit).count();
            let fraction_hitting = hit_count as f64 / resolved.len().max(1) as f64;
            Some(ReachCheck {
                hits: resolved,
                fraction_hitting,
            })
        }
    };

    let m_inclusion = match &reach {
        None => None,
        Some(check) => {
            let hit_points: Vec<Vec<f64>> = check
                .hits
                .iter()
                .filter(|(_, hit)| *hit)
                .map(|(p, _)| p.clone())
                .collect();
            if hit_points.is_empty() {
                Some(MInclusion {
                    m_hat: Vec::new(),
                    per_x0_max_dist: Vec::new(),
                    verdict: Verdict::Inconclusive,
                })
            } else {
                let dimension = field.first().map(|e| e.dimension()).unwrap_or(0);
                let container = Region::point_set(hit_points, dimension)
                    .map_err(CertifyError::Region)?
                    .with_tol(params.m_escape_tol);
                let m_hat = estimate_largest_invariant_set(
                    &container,
                    field,
                    2,
                    params.m_horizon,
                    params.m_escape_tol,
                )?
                .points;
                let per_x0_max_dist: Vec<f64> = per_x0
                    .iter()
                    .map(|entry| {
                        entry
                            .representatives
                            .iter()
                            .map(|rep| min_dist_to(rep, &m_hat).unwrap_or(f64::INFINITY))
                            .fold(0.0, f64::max)
                    })
                    .collect();
                let verdict = if m_hat.is_empty() {
                    Verdict::Inconclusive
                } else if per_x0_max_dist.iter().all(|&d| d <= params.incl_tol) {
                    Verdict::Pass
                } else {
                    Verdict::Fail
                };
                Some(MInclusion {
                    m_hat,
                    per_x0_max_dist,
                    verdict,
                })
            }
        }
    };

    let mut verdicts: Vec<Verdict> = per_x0.iter().map(|e| e.verdict).collect();
    if let Some(m) = &m_inclusion {
        verdicts.push(m.verdict);
    }
    let overall = Verdict::combine(verdicts);

    Ok(Thm2Report {
        overall,
        s_description: format!("{lie}"),
        per_x0,
        reach,
        m_inclusion,
        params: params.clone(),
    })
}

fn per_x0_check(
    x0: &[f64],
    traj: &Trajectory,
    lie: &Expression,
    grad_v: &[Expression],
    field: &[Expression],
    s_region: Option<&Region>,
    params: &Thm2Params,
) -> Result<Thm2PerX0, CertifyError> {
    let max_norm = traj.max_norm();
    let bounded =
        traj.termination() == Termination::Horizon && max_norm < params.bound;
    if !bounded {
        return Ok(Thm2PerX0 {
            x0: x0.to_vec(),
            boundedness: Verdict::Fail,
            max_norm,
            settled: false,
            gap: f64::INFINITY,
            representatives: Vec::new(),
            s_min_abs_lie: f64::INFINITY,
            s_normalized_min: f64::INFINITY,
            s_distance: None,
            verdict: Verdict::Fail,
        });
    }
    let estimate = estimate_omega(traj, &params.omega)?;
    let (s_min_abs_lie, s_normalized_min, s_distance) =
        intersection_metrics(&estimate, lie, grad_v, field, s_region, traj)?;
    let s_hit = s_normalized_min <= params.s_tol
        || s_distance.is_some_and(|d| d <= params.omega.cluster_eps);
    let verdict = if !estimate.settled {
        Verdict::Inconclusive
    } else if s_hit {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(Thm2PerX0 {
        x0: x0.to_vec(),
        boundedness: Verdict::Pass,
        max_norm,
        settled: estimate.settled,
        gap: estimate.gap,
        representatives: estimate.representatives,
        s_min_abs_lie,
        s_normalized_min,
        s_distance,
        verdict,
    })
}

/// Minimum `|∇V·f|` over representatives (raw and normalized by the
/// trajectory's Lie scale) plus the geometric distance to `S` when a box is
/// available.
fn intersection_metrics(
    estimate: &OmegaEstimate,
    lie: &Expression,
    grad_v: &[Expression],
    field: &[Expression],
    s_region: Option<&Region>,
    traj: &Trajectory,
) -> Result<(f64, f64, Option<f64>), CertifyError> {
    let mut min_abs = f64::INFINITY;
    let mut best_rep: Option<&Vec<f64>> = None;
    for rep in &estimate.representatives {
        let value = lie.evaluate(rep)?.abs();
        if value < min_abs {
            min_abs = value;
            best_rep = Some(rep);
        }
    }
    let scale = lie_scale(grad_v, field, traj.states().iter().map(|s| s.as_slice()));
    let normalized_min = normalized(min_abs, scale);
    let distance = match (s_region, best_rep) {
        (Some(region), Some(rep)) => region.distance_estimate(rep).ok(),
        _ => None,
    };
    Ok((min_abs, normalized_min, distance))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepParams {
    pub t_end: f64,
    pub bound: f64,
    pub s_tol: f64,
    pub omega: OmegaParams,
    pub s_box: Option<Vec<[f64; 2]>>,
}

impl Default for SweepParams {
    fn default() -> Self {
        SweepParams {
            t_end: 200.0,
            bound: 1e6,
            s_tol: 1e-6,
            omega: OmegaParams::default(),
            s_box: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub x0: Vec<f64>,
    pub verdict: Verdict,
    pub blowup: bool,
    pub min_abs_lie: f64,
    pub normalized_min: f64,
    pub s_distance: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub verdict: Verdict,
    /// Fraction of non-blow-up grid points whose limit-set estimate meets
    /// `S`.
    pub fraction_passing: f64,
    /// Largest per-point minimum of `|∇V·f|` over representatives: the
    /// worst witness for the intersection claim.
    pub worst_min_abs_lie: f64,
    pub worst_normalized_min: f64,
    pub blowup_count: usize,
    pub points: Vec<SweepPoint>,
    pub params: SweepParams,
}

/// Run the limit-set/`S` intersection check for every grid point. Per-point
/// failures are recorded and the sweep continues; blow-up points are
/// excluded from the passing fraction.
pub fn weak_attractor_sweep(
    field: &[Expression],
    v: &Expression,
    grid: &[Vec<f64>],
    params: &SweepParams,
) -> Result<SweepSummary, CertifyError> {
    if grid.is_empty() {
        return Err(CertifyError::InvalidParams("empty sweep grid".into()));
    }
    let lie = lie_derivative(v, field)?;
    let grad_v = gradient_of(v)?;
    let s_region = params.s_box.as_ref().map(|b| {
        Region::zero_set(lie.clone())
            .with_tol(params.s_tol)
            .with_bounds(b.clone())
    });
    let config = IntegratorConfig {
        t_end: params.t_end,
        ..Default::default()
    };

    let points: Vec<Result<SweepPoint, CertifyError>> = grid
        .par_iter()
        .map(|x0| {
            let traj = integrate(field, x0, &config)?;
            let bounded = traj.termination() == Termination::Horizon
                && traj.max_norm() < params.bound;
            if !bounded {
                return Ok(SweepPoint {
                    x0: x0.clone(),
                    verdict: Verdict::Fail,
                    blowup: true,
                    min_abs_lie: f64::INFINITY,
                    normalized_min: f64::INFINITY,
                    s_distance: None,
                });
            }
            let estimate = estimate_omega(&traj, &params.omega)?;
            let mut min_abs = f64::INFINITY;
            let mut best_rep: Option<&Vec<f64>> = None;
            for rep in &estimate.representatives {
                let value = lie.evaluate(rep)?.abs();
                if value < min_abs {
                    min_abs = value;
                    best_rep = Some(rep);
                }
            }
            let scale =
                lie_scale(&grad_v, field, traj.states().iter().map(|s| s.as_slice()));
            let normalized_min = normalized(min_abs, scale);
            let s_distance = match (&s_region, best_rep) {
                (Some(region), Some(rep)) => region.distance_estimate(rep).ok(),
                _ => None,
            };
            let hit = normalized_min <= params.s_tol
                || s_distance.is_some_and(|d| d <= params.omega.cluster_eps);
            let verdict = if !estimate.settled {
                Verdict::Inconclusive
            } else if hit {
                Verdict::Pass
            } else {
                Verdict::Fail
            };
            Ok(SweepPoint {
                x0: x0.clone(),
                verdict,
                blowup: false,
                min_abs_lie: min_abs,
                normalized_min,
                s_distance,
            })
        })
        .collect();
    let mut resolved = Vec::with_capacity(points.len());
    for p in points {
        resolved.push(p?);
    }

    let blowup_count = resolved.iter().filter(|p| p.blowup).count();
    let valid: Vec<&SweepPoint> = resolved.iter().filter(|p| !p.blowup).collect();
    let passing = valid.iter().filter(|p| p.verdict.is_pass()).count();
    let fraction_passing = if valid.is_empty() {
        0.0
    } else {
        passing as f64 / valid.len() as f64
    };
    let worst_min_abs_lie = valid
        .iter()
        .map(|p| p.min_abs_lie)
        .fold(0.0, f64::max);
    let worst_normalized_min = valid
        .iter()
        .map(|p| p.normalized_min)
        .fold(0.0, f64::max);
    let verdict = if valid.is_empty() {
        Verdict::Inconclusive
    } else {
        Verdict::combine(valid.iter().map(|p| p.verdict))
    };

    Ok(SweepSummary {
        verdict,
        fraction_passing,
        worst_min_abs_lie,
        worst_normalized_min,
        blowup_count,
        points: resolved,
        params: params.clone(),
    })
}
