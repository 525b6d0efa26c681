//! Numerical invariance tests for regions under a vector field, and a
//! finite-horizon estimate of the largest invariant set inside a container.
//!
//! Positive invariance is tested directly: trajectories started inside the
//! region must stay members. Negative invariance is tested in contrapositive
//! form: trajectories started clearly outside must never reach the region's
//! tolerance-shrunk core (quantifying over all of space is impossible, so
//! outside samples come from the region's bounding box and every report is
//! box-relative). All verdicts are sampling-based evidence, not proofs.

use crate::expr::Expression;
use crate::odeint::{integrate, integrate_backward, IntegratorConfig, Termination, Trajectory};
use crate::regions::{Region, RegionError, RegionKind, SampleCloud};
use crate::vecmath::linspace;
use crate::Verdict;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

/// Dense probes per trajectory, in addition to the accepted knots.
const PROBE_COUNT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum InvarianceMode {
    Positive,
    Negative,
}

/// An observed violation: the worst escape (positive mode) or the first
/// entry event (negative mode).
#[derive(Debug, Clone, Serialize)]
pub struct ViolationEvent {
    /// Sample whose trajectory produced the event.
    pub x0: Vec<f64>,
    pub t: f64,
    pub point: Vec<f64>,
    /// Geometric distance from `point` to the region (membership excess in
    /// `g`-units when no geometric estimate is available).
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BlowupEvent {
    pub x0: Vec<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportedParams {
    pub region_kind: String,
    pub region_tol: f64,
    pub sample_count: usize,
    pub horizon: f64,
    /// `escape_tol` (positive mode) or `entry_tol` (negative mode).
    pub tolerance: f64,
    /// Core shrink margin, negative mode only.
    pub margin: Option<f64>,
    pub probe_count: usize,
    pub bounding_box: Option<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InvarianceReport {
    pub mode: InvarianceMode,
    pub verdict: Verdict,
    pub samples_tested: usize,
    pub violation: Option<ViolationEvent>,
    /// Blow-ups fail a positive test outright; in negative mode they only
    /// truncate the probe and are reported here.
    pub blowups: Vec<BlowupEvent>,
    pub params: ReportedParams,
}

#[derive(Debug, Error)]
pub enum InvarianceError {
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Ode(#[from] crate::odeint::OdeError),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Smallest per-axis grid resolution whose full grid reaches `sample_count`
/// points.
fn grid_resolution(sample_count: usize, dimension: usize) -> usize {
    let target = (sample_count as f64).powf(1.0 / dimension as f64).ceil() as usize;
    target.max(2)
}

/// Capture resolution for sampling implicit regions. Zero sets are thin:
/// membership at the region tolerance only catches grid points close to the
/// surface, so the grid must be fine; the requested sample count is then
/// stride-selected from the captured cloud.
fn capture_resolution(region: &Region, sample_count: usize) -> usize {
    let coarse = grid_resolution(sample_count, region.dimension());
    match region.kind() {
        RegionKind::ZeroSet(_) | RegionKind::Sublevel(_) => {
            let dense = match region.dimension() {
                1 => 1001,
                2 => 401,
                3 => 61,
                4 => 21,
                _ => 7,
            };
            coarse.max(dense)
        }
        _ => coarse,
    }
}

/// Deterministic stride selection of at most `count` cloud points.
fn select_samples(cloud: &SampleCloud, count: usize) -> Vec<Vec<f64>> {
    if cloud.len() <= count {
        return cloud.points.clone();
    }
    (0..count)
        .map(|i| cloud.points[i * cloud.len() / count].clone())
        .collect()
}

fn probe_times(traj: &Trajectory) -> Vec<f64> {
    let mut times: Vec<f64> = traj.times().to_vec();
    times.extend(linspace(0.0, traj.last_time(), PROBE_COUNT));
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

/// Membership excess in the region's own units: how far outside `tol` the
/// point sits (non-positive means member).
fn membership_excess(region: &Region, x: &[f64], tol: f64) -> Result<f64, RegionError> {
    match region.kind() {
        RegionKind::ZeroSet(g) => Ok(g.evaluate(x).map(|v| v.abs() - tol)?),
        RegionKind::Sublevel(g) => Ok(g.evaluate(x).map(|v| v - tol)?),
        RegionKind::PointSet(points) => Ok(crate::vecmath::min_dist_to(x, points)
            .map(|d| d - tol)
            .unwrap_or(f64::INFINITY)),
        RegionKind::WholeSpace => Ok(f64::NEG_INFINITY),
    }
}

fn geometric_distance(region: &Region, x: &[f64], fallback: f64) -> f64 {
    region.distance_estimate(x).unwrap_or(fallback)
}

enum SampleOutcome {
    Clean,
    Violation(ViolationEvent),
    Blowup(BlowupEvent),
    Error(InvarianceError),
}

/// Test positive invariance: every sample of the region must stay a member
/// (at `escape_tol`) along its forward trajectory over `horizon`.
pub fn test_positive_invariance(
    region: &Region,
    field: &[Expression],
    sample_count: usize,
    horizon: f64,
    escape_tol: f64,
) -> Result<InvarianceReport, InvarianceError> {
    if escape_tol <= region.tol() {
        return Err(InvarianceError::InvalidParams(
            "escape_tol must exceed the region's membership tolerance".into(),
        ));
    }
    let resolution = capture_resolution(region, sample_count);
    let cloud = region.sample(resolution)?;
    let samples = select_samples(&cloud, sample_count);
    let params = ReportedParams {
        region_kind: region.kind().name().into(),
        region_tol: region.tol(),
        sample_count,
        horizon,
        tolerance: escape_tol,
        margin: None,
        probe_count: PROBE_COUNT,
        bounding_box: region.bounds().map(|b| b.to_vec()),
    };
    if samples.is_empty() {
        return Ok(InvarianceReport {
            mode: InvarianceMode::Positive,
            verdict: Verdict::Inconclusive,
            samples_tested: 0,
            violation: None,
            blowups: Vec::new(),
            params,
        });
    }

    let config = IntegratorConfig::with_t_end(horizon);
    let outcomes: Vec<SampleOutcome> = samples
        .par_iter()
        .map(|x0| match integrate(field, x0, &config) {
            Err(e) => SampleOutcome::Error(e.into()),
            Ok(traj) => {
                if let Termination::Blowup { t } = traj.termination() {
                    return SampleOutcome::Blowup(BlowupEvent { x0: x0.clone(), t });
                }
                match worst_escape(region, &traj, escape_tol) {
                    Err(e) => SampleOutcome::Error(e.into()),
                    Ok(Some((t, point, excess))) => {
                        let distance = geometric_distance(region, &point, excess);
                        SampleOutcome::Violation(ViolationEvent {
                            x0: x0.clone(),
                            t,
                            point,
                            distance,
                        })
                    }
                    Ok(None) => SampleOutcome::Clean,
                }
            }
        })
        .collect();

    let mut worst: Option<ViolationEvent> = None;
    let mut blowups = Vec::new();
    for outcome in outcomes {
        match outcome {
            SampleOutcome::Clean => {}
            SampleOutcome::Blowup(b) => blowups.push(b),
            SampleOutcome::Violation(v) => {
                if worst.as_ref().is_none_or(|w| v.distance > w.distance) {
                    worst = Some(v);
                }
            }
            SampleOutcome::Error(e) => return Err(e),
        }
    }
    let verdict = if worst.is_some() || !blowups.is_empty() {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    Ok(InvarianceReport {
        mode: InvarianceMode::Positive,
        verdict,
        samples_tested: samples.len(),
        violation: worst,
        blowups,
        params,
    })
}

/// Worst probe outside the region, as `(t, point, excess)`.
fn worst_escape(
    region: &Region,
    traj: &Trajectory,
    escape_tol: f64,
) -> Result<Option<(f64, Vec<f64>, f64)>, RegionError> {
    let mut worst: Option<(f64, Vec<f64>, f64)> = None;
    for t in probe_times(traj) {
        let point = traj.sample_at(t).expect("probe time within range");
        let excess = membership_excess(region, &point, escape_tol)?;
        if excess > 0.0 && worst.as_ref().is_none_or(|w| excess > w.2) {
            worst = Some((t, point, excess));
        }
    }
    Ok(worst)
}

/// Test negative invariance in contrapositive form: grid samples from the
/// bounding box with `dist > entry_tol` from the region must never reach the
/// region's tolerance-shrunk core (`region.tol - margin`, `margin =
/// region.tol / 2`). For implicit regions, transversal core crossings
/// between probes are caught by sign-change bisection on the dense output.
pub fn test_negative_invariance(
    region: &Region,
    field: &[Expression],
    sample_count: usize,
    horizon: f64,
    entry_tol: f64,
) -> Result<InvarianceReport, InvarianceError> {
    if entry_tol <= region.tol() {
        return Err(InvarianceError::InvalidParams(
            "entry_tol must exceed the region's membership tolerance".into(),
        ));
    }
    let margin = region.tol() / 2.0;
    let core_tol = region.tol() - margin;
    let params = ReportedParams {
        region_kind: region.kind().name().into(),
        region_tol: region.tol(),
        sample_count,
        horizon,
        tolerance: entry_tol,
        margin: Some(margin),
        probe_count: PROBE_COUNT,
        bounding_box: region.bounds().map(|b| b.to_vec()),
    };

    // Everything is a member of the whole space; negative invariance holds
    // vacuously.
    if matches!(region.kind(), RegionKind::WholeSpace) {
        return Ok(InvarianceReport {
            mode: InvarianceMode::Negative,
            verdict: Verdict::Pass,
            samples_tested: 0,
            violation: None,
            blowups: Vec::new(),
            params,
        });
    }

    let bounds = region
        .bounds()
        .ok_or(RegionError::MissingBox)?
        .to_vec();
    let resolution = grid_resolution(sample_count, region.dimension());
    let axes: Vec<Vec<f64>> = bounds
        .iter()
        .map(|&[lo, hi]| linspace(lo, hi, resolution))
        .collect();
    // Approximate region geometry once for the outside-sample filter.
    let region_cloud = region_surface_cloud(region)?;
    let mut outside: Vec<Vec<f64>> = Vec::new();
    for point in grid_points(&axes) {
        let far_enough = match crate::vecmath::min_dist_to(&point, &region_cloud) {
            Some(d) => d > entry_tol,
            None => true,
        };
        if far_enough && !region.member(&point, entry_tol)? {
            outside.push(point);
        }
    }
    let samples = {
        let cloud = SampleCloud {
            points: outside,
            resolution,
        };
        select_samples(&cloud, sample_count)
    };
    if samples.is_empty() {
        return Ok(InvarianceReport {
            mode: InvarianceMode::Negative,
            verdict: Verdict::Inconclusive,
            samples_tested: 0,
            violation: None,
            blowups: Vec::new(),
            params,
        });
    }

    let config = IntegratorConfig::with_t_end(horizon);
    let outcomes: Vec<SampleOutcome> = samples
        .par_iter()
        .map(|x0| match integrate(field, x0, &config) {
            Err(e) => SampleOutcome::Error(e.into()),
            Ok(traj) => {
                let blowup = match traj.termination() {
                    Termination::Blowup { t } => Some(BlowupEvent { x0: x0.clone(), t }),
                    _ => None,
                };
                match first_entry(region, &traj, core_tol) {
                    Err(e) => SampleOutcome::Error(e.into()),
                    Ok(Some((t, point))) => {
                        let distance = geometric_distance(region, &point, 0.0);
                        SampleOutcome::Violation(ViolationEvent {
                            x0: x0.clone(),
                            t,
                            point,
                            distance,
                        })
                    }
                    Ok(None) => match blowup {
                        Some(b) => SampleOutcome::Blowup(b),
                        None => SampleOutcome::Clean,
                    },
                }
            }
        })
        .collect();

    let mut first: Option<ViolationEvent> = None;
    let mut blowups = Vec::new();
    for outcome in outcomes {
        match outcome {
            SampleOutcome::Clean => {}
            SampleOutcome::Blowup(b) => blowups.push(b),
            SampleOutcome::Violation(v) => {
                if first.is_none() {
                    first = Some(v);
                }
            }
            SampleOutcome::Error(e) => return Err(e),
        }
    }
    let verdict = if first.is_some() {
        Verdict::Fail
    } else {
        Verdict::Pass
    };
    Ok(InvarianceReport {
        mode: InvarianceMode::Negative,
        verdict,
        samples_tested: samples.len(),
        violation: first,
        blowups,
        params,
    })
}

/// Point cloud standing in for the region surface when filtering outside
/// samples. Implicit kinds sample at a fixed resolution.
fn region_surface_cloud(region: &Region) -> Result<Vec<Vec<f64>>, RegionError> {
    match region.kind() {
        RegionKind::PointSet(points) => Ok(points.clone()),
        RegionKind::WholeSpace => Ok(Vec::new()),
        _ => Ok(region.sample(101).map(|c| c.points).unwrap_or_default()),
    }
}

fn grid_points(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut points = vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(points.len() * axis.len());
        for p in &points {
            for &v in axis {
                let mut q = p.clone();
                q.push(v);
                next.push(q);
            }
        }
        points = next;
    }
    points
}

/// Earliest event where the trajectory reaches the region's core. Probes at
/// knots plus a dense schedule; for implicit kinds, sign changes of the
/// core-shifted level function between consecutive probes are refined by
/// bisection.
fn first_entry(
    region: &Region,
    traj: &Trajectory,
    core_tol: f64,
) -> Result<Option<(f64, Vec<f64>)>, RegionError> {
    let times = probe_times(traj);
    let level = |x: &[f64]| membership_excess(region, x, core_tol);
    let mut prev: Option<(f64, f64)> = None;
    for &t in &times {
        let point = traj.sample_at(t).expect("probe time within range");
        let excess = level(&point)?;
        if excess <= 0.0 {
            return Ok(Some((t, point)));
        }
        if let Some((t_prev, excess_prev)) = prev {
            // A transversal dip below the core between probes shows up as a
            // sign change of g for zero sets; bisect toward the crossing.
            if let RegionKind::ZeroSet(g) = region.kind() {
                let a = g.evaluate(&traj.sample_at(t_prev).expect("probe"))?;
                let b = g.evaluate(&point)?;
                if a.signum() != b.signum() && a != 0.0 && b != 0.0 {
                    if let Some(hit) = bisect_zero(g, traj, t_prev, t, core_tol)? {
                        return Ok(Some(hit));
                    }
                }
            }
            let _ = excess_prev;
        }
        prev = Some((t, excess));
    }
    Ok(None)
}

fn bisect_zero(
    g: &Expression,
    traj: &Trajectory,
    mut lo: f64,
    mut hi: f64,
    core_tol: f64,
) -> Result<Option<(f64, Vec<f64>)>, RegionError> {
    let mut g_lo = g.evaluate(&traj.sample_at(lo).expect("probe"))?;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        let point = traj.sample_at(mid).expect("probe");
        let g_mid = g.evaluate(&point)?;
        if g_mid.abs() <= core_tol {
            return Ok(Some((mid, point)));
        }
        if g_mid.signum() == g_lo.signum() {
            lo = mid;
            g_lo = g_mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 * traj.last_time().max(1.0) {
            break;
        }
    }
    Ok(None)
}

/// Finite-horizon estimate of the largest invariant set in `container`:
/// grid-sample the container and keep exactly the points whose forward and
/// backward trajectories both stay members (at `escape_tol`) over `horizon`.
/// Blow-up counts as escape. Points may still escape beyond the horizon, so
/// the result is an over-approximation filtered by evidence; the horizon is
/// part of every downstream report.
pub fn estimate_largest_invariant_set(
    container: &Region,
    field: &[Expression],
    resolution: usize,
    horizon: f64,
    escape_tol: f64,
) -> Result<SampleCloud, InvarianceError> {
    let cloud = container.sample(resolution)?;
    let config = IntegratorConfig::with_t_end(horizon);
    let survivors: Vec<Result<Option<Vec<f64>>, InvarianceError>> = cloud
        .points
        .par_iter()
        .map(|x0| {
            for backward in [false, true] {
                let traj = if backward {
                    integrate_backward(field, x0, &config)?
                } else {
                    integrate(field, x0, &config)?
                };
                if traj.termination() != Termination::Horizon {
                    return Ok(None);
                }
                if worst_escape(container, &traj, escape_tol)
                    .map_err(InvarianceError::from)?
                    .is_some()
                {
                    return Ok(None);
                }
            }
            Ok(Some(x0.clone()))
        })
        .collect();
    let mut points = Vec::new();
    for s in survivors {
        if let Some(p) = s? {
            points.push(p);
        }
    }
    Ok(SampleCloud {
        points,
        resolution: cloud.resolution,
    })
}
