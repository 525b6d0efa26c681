//! Omega-limit set estimation from the tail of a bounded trajectory.
//!
//! The limit set is approximated by sampling the final stretch of a
//! horizon-terminated trajectory and clustering the samples greedily into
//! epsilon balls. The estimate never claims convergence on its own: the
//! `settled` flag compares the clouds of the two halves of the tail window
//! and is reported alongside the representatives.

use crate::odeint::{OdeError, Termination, Trajectory};
use crate::vecmath::{dist, linspace, min_dist_to};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Serialize)]
pub struct OmegaParams {
    /// Fraction of the horizon used as the sampling window.
    pub tail_fraction: f64,
    /// Number of equispaced tail samples.
    pub sample_count: usize,
    /// Cluster scale: every tail sample ends up within this distance of a
    /// representative.
    pub cluster_eps: f64,
}

impl Default for OmegaParams {
    fn default() -> Self {
        OmegaParams {
            tail_fraction: 0.25,
            sample_count: 2000,
            cluster_eps: 1e-2,
        }
    }
}

/// Finite representation of an omega-limit set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OmegaEstimate {
    /// Cluster centroids.
    pub representatives: Vec<Vec<f64>>,
    /// Maximum member-to-centroid distance per cluster.
    pub radii: Vec<f64>,
    /// Tail window `[t_a, t_b]` that produced the estimate.
    pub window: [f64; 2],
    /// Whether the two half-window clouds agree to within the cluster scale.
    pub settled: bool,
    /// Symmetric Hausdorff distance between the half-window clouds.
    pub gap: f64,
}

impl OmegaEstimate {
    /// Distance from `x` to the representative set.
    pub fn distance_to(&self, x: &[f64]) -> f64 {
        min_dist_to(x, &self.representatives).expect("estimates hold at least one representative")
    }
}

#[derive(Debug, Error)]
pub enum OmegaError {
    #[error(
        "omega estimation requires a bounded, horizon-terminated trajectory; \
         integration ended with {0:?}"
    )]
    UnboundedTrajectory(Termination),
    #[error("invalid omega parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Ode(#[from] OdeError),
}

/// Ball radius around a cluster seed, as a fraction of `cluster_eps`. Small
/// enough that centroids carry no visible curvature bias (a centroid of
/// points spread `δ` along a curve sits `O(δ²)` off it), while every sample
/// still lands well within `cluster_eps` of its centroid.
const SEED_RADIUS_FRACTION: f64 = 0.125;

/// Estimate the omega-limit set of the trajectory's initial state.
///
/// Samples `sample_count` equispaced times in the final `tail_fraction` of
/// the horizon and clusters them first-fit in time order: a sample joins the
/// first cluster whose seed lies within `cluster_eps / 8`, so every sample
/// is within `cluster_eps / 4` of its cluster centroid. Trajectories that
/// blew up or underflowed are refused — the estimator's guarantees need a
/// bounded positive orbit.
pub fn estimate_omega(
    traj: &Trajectory,
    params: &OmegaParams,
) -> Result<OmegaEstimate, OmegaError> {
    if traj.termination() != Termination::Horizon {
        return Err(OmegaError::UnboundedTrajectory(traj.termination()));
    }
    if !(params.tail_fraction > 0.0 && params.tail_fraction < 1.0) {
        return Err(OmegaError::InvalidParams(
            "tail_fraction must lie in (0, 1)".into(),
        ));
    }
    if params.sample_count < 2 {
        return Err(OmegaError::InvalidParams(
            "sample_count must be at least 2".into(),
        ));
    }
    if !(params.cluster_eps > 0.0) {
        return Err(OmegaError::InvalidParams(
            "cluster_eps must be positive".into(),
        ));
    }

    let t_end = traj.last_time();
    let t_a = t_end * (1.0 - params.tail_fraction);
    let times = linspace(t_a, t_end, params.sample_count);
    let mut samples = Vec::with_capacity(times.len());
    for &t in &times {
        samples.push(traj.sample_at(t)?);
    }

    let clusters = cluster_first_fit(&samples, params.cluster_eps * SEED_RADIUS_FRACTION);
    let mut representatives = Vec::with_capacity(clusters.len());
    let mut radii = Vec::with_capacity(clusters.len());
    for members in &clusters {
        let centroid = centroid(members.iter().map(|&i| samples[i].as_slice()));
        let radius = members
            .iter()
            .map(|&i| dist(&samples[i], &centroid))
            .fold(0.0, f64::max);
        representatives.push(centroid);
        radii.push(radius);
    }

    // Settledness: the clouds of the two tail halves must agree.
    let mid = samples.len() / 2;
    let gap = hausdorff(&samples[..mid], &samples[mid..]);
    let settled = gap <= params.cluster_eps;

    Ok(OmegaEstimate {
        representatives,
        radii,
        window: [t_a, t_end],
        settled,
        gap,
    })
}

/// Greedy first-fit clustering in sample order: each point joins the first
/// cluster whose seed (first member) is within `seed_radius`, else starts a
/// new cluster. Deterministic in the input order.
fn cluster_first_fit(samples: &[Vec<f64>], seed_radius: f64) -> Vec<Vec<usize>> {
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    'next: for (i, sample) in samples.iter().enumerate() {
        for members in clusters.iter_mut() {
            let seed = &samples[members[0]];
            if dist(sample, seed) <= seed_radius {
                members.push(i);
                continue 'next;
            }
        }
        clusters.push(vec![i]);
    }
    clusters
}

fn centroid<'a>(points: impl Iterator<Item = &'a [f64]>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for p in points {
        if acc.is_empty() {
            acc = vec![0.0; p.len()];
        }
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
        count += 1;
    }
    for a in acc.iter_mut() {
        *a /= count as f64;
    }
    acc
}

/// Symmetric Hausdorff distance between finite clouds.
pub fn hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    directed_hausdorff(a, b).max(directed_hausdorff(b, a))
}

fn directed_hausdorff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .map(|p| min_dist_to(p, b).unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max)
}

/// Distances from equispaced trajectory probes to the representative set,
/// with the running suffix maximum as a monotone envelope. The profile is
/// the attraction diagnostic: for a sound estimate it decays toward zero.
#[derive(Debug, Clone, Serialize)]
pub struct AttractionProfile {
    /// `(t, dist)` pairs over the whole trajectory.
    pub samples: Vec<(f64, f64)>,
    /// `envelope[i] = max(dist[i..])`.
    pub envelope: Vec<f64>,
}

pub fn attraction_profile(
    traj: &Trajectory,
    estimate: &OmegaEstimate,
    probe_count: usize,
) -> Result<AttractionProfile, OmegaError> {
    if probe_count < 2 {
        return Err(OmegaError::InvalidParams(
            "probe_count must be at least 2".into(),
        ));
    }
    let times = linspace(0.0, traj.last_time(), probe_count);
    let mut samples = Vec::with_capacity(times.len());
    for &t in &times {
        let state = traj.sample_at(t)?;
        samples.push((t, estimate.distance_to(&state)));
    }
    let mut envelope = vec![0.0; samples.len()];
    let mut running = 0.0_f64;
    for (i, &(_, d)) in samples.iter().enumerate().rev() {
        running = running.max(d);
        envelope[i] = running;
    }
    Ok(AttractionProfile { samples, envelope })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use crate::odeint::{integrate, IntegratorConfig};

    fn kinked_rotation() -> Vec<Expression> {
        vec![
            Expression::parse("-abs(x2)*x2", 2).unwrap(),
            Expression::parse("abs(x2)*x1", 2).unwrap(),
        ]
    }

    fn harmonic() -> Vec<Expression> {
        vec![
            Expression::parse("x2", 2).unwrap(),
            Expression::parse("-x1", 2).unwrap(),
        ]
    }

    fn run(field: &[Expression], x0: &[f64], t_end: f64) -> Trajectory {
        integrate(field, x0, &IntegratorConfig::with_t_end(t_end)).unwrap()
    }

    #[test]
    fn upper_half_start_converges_to_negative_pole() {
        // From (3,4) the limit set is the single point (-5, 0).
        let traj = run(&kinked_rotation(), &[3.0, 4.0], 200.0);
        let est = estimate_omega(&traj, &OmegaParams::default()).unwrap();
        assert_eq!(est.representatives.len(), 1);
        let rep = &est.representatives[0];
        assert!(dist(rep, &[-5.0, 0.0]) <= 1e-2, "rep = {rep:?}");
        assert!(est.settled, "gap = {}", est.gap);
    }

    #[test]
    fn equilibrium_estimate_is_exact() {
        // Points on the x1-axis are equilibria of the kinked rotation.
        let traj = run(&kinked_rotation(), &[2.0, 0.0], 200.0);
        let est = estimate_omega(&traj, &OmegaParams::default()).unwrap();
        assert_eq!(est.representatives.len(), 1);
        assert_eq!(est.representatives[0], vec![2.0, 0.0]);
        assert_eq!(est.radii[0], 0.0);
        assert!(est.settled);
        assert_eq!(est.gap, 0.0);
    }

    #[test]
    fn periodic_orbit_estimate_covers_the_circle() {
        let traj = run(&harmonic(), &[1.0, 0.0], 200.0);
        let params = OmegaParams::default();
        let est = estimate_omega(&traj, &params).unwrap();
        assert!(est.settled, "gap = {}", est.gap);
        for rep in &est.representatives {
            let r = crate::vecmath::norm(rep);
            assert!((r - 1.0).abs() <= 1e-6, "representative radius {r}");
        }
        // Every point of the analytic circle is near a representative.
        for k in 0..3600 {
            let theta = std::f64::consts::TAU * k as f64 / 3600.0;
            let p = [theta.cos(), theta.sin()];
            assert!(
                est.distance_to(&p) <= params.cluster_eps,
                "uncovered angle {theta}"
            );
        }
        // Cluster members stay within the advertised scale of the centroid.
        for radius in &est.radii {
            assert!(*radius <= params.cluster_eps);
        }
    }

    #[test]
    fn blowup_trajectory_is_refused() {
        let field = vec![Expression::parse("x1^2", 1).unwrap()];
        let traj = integrate(&field, &[1.0], &IntegratorConfig::with_t_end(5.0)).unwrap();
        assert!(matches!(
            estimate_omega(&traj, &OmegaParams::default()),
            Err(OmegaError::UnboundedTrajectory(_))
        ));
    }

    #[test]
    fn estimate_is_insensitive_to_time_shift() {
        // The limit set of phi(T, x0) equals that of x0.
        let params = OmegaParams::default();
        let traj = run(&kinked_rotation(), &[3.0, 4.0], 200.0);
        let est1 = estimate_omega(&traj, &params).unwrap();
        let shifted_start = traj.sample_at(10.0).unwrap();
        let traj2 = run(&kinked_rotation(), &shifted_start, 200.0);
        let est2 = estimate_omega(&traj2, &params).unwrap();
        let gap = hausdorff(&est1.representatives, &est2.representatives);
        assert!(gap <= 2.0 * params.cluster_eps, "gap = {gap}");
    }

    #[test]
    fn representatives_respect_radius_conservation() {
        // All representatives of the kinked rotation live on the starting
        // circle and at the sign-correct pole.
        for (x0, pole) in [
            ([3.0, 4.0], [-5.0, 0.0]),
            ([3.0, -4.0], [5.0, 0.0]),
            ([0.0, 1.0], [-1.0, 0.0]),
        ] {
            let r0 = crate::vecmath::norm(&x0);
            let traj = run(&kinked_rotation(), &x0, 200.0);
            let est = estimate_omega(&traj, &OmegaParams::default()).unwrap();
            for rep in &est.representatives {
                assert!((crate::vecmath::norm(rep) - r0).abs() <= 1e-3);
                assert!(dist(rep, &pole) <= 1e-2);
            }
        }
    }

    #[test]
    fn longer_horizon_does_not_worsen_settledness_on_convergent_cases() {
        for x0 in [[3.0, 4.0], [0.0, 1.0], [2.0, 0.0]] {
            let short = run(&kinked_rotation(), &x0, 200.0);
            let long = run(&kinked_rotation(), &x0, 400.0);
            let g_short = estimate_omega(&short, &OmegaParams::default()).unwrap().gap;
            let g_long = estimate_omega(&long, &OmegaParams::default()).unwrap().gap;
            assert!(
                g_long <= g_short + 1e-12,
                "gap grew from {g_short:.3e} to {g_long:.3e} for {x0:?}"
            );
        }
    }

    #[test]
    fn attraction_profile_of_equilibrium_is_zero() {
        let traj = run(&kinked_rotation(), &[2.0, 0.0], 50.0);
        let est = estimate_omega(&traj, &OmegaParams::default()).unwrap();
        let profile = attraction_profile(&traj, &est, 100).unwrap();
        for &(_, d) in &profile.samples {
            assert_eq!(d, 0.0);
        }
        assert!(profile.envelope.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn attraction_profile_decays_for_convergent_start() {
        let traj = run(&kinked_rotation(), &[0.0, 1.0], 200.0);
        let est = estimate_omega(&traj, &OmegaParams::default()).unwrap();
        let profile = attraction_profile(&traj, &est, 400).unwrap();
        // Final quarter of the profile is already converged.
        for &(t, d) in profile.samples.iter().skip(300) {
            assert!(d <= 1e-2, "d({t}) = {d}");
        }
        // The suffix envelope is non-increasing by construction.
        for pair in profile.envelope.windows(2) {
            assert!(pair[0] >= pair[1]);
        }
    }

    #[test]
    fn attraction_profile_of_periodic_orbit_stays_within_cluster_scale() {
        let params = OmegaParams::default();
        let traj = run(&harmonic(), &[1.0, 0.0], 200.0);
        let est = estimate_omega(&traj, &params).unwrap();
        let profile = attraction_profile(&traj, &est, 500).unwrap();
        for &(t, d) in &profile.samples {
            assert!(d <= params.cluster_eps, "d({t}) = {d}");
        }
    }

    #[test]
    fn hausdorff_basics() {
        let a = vec![vec![0.0, 0.0], vec![1.0, 0.0]];
        let b = vec![vec![0.0, 0.0]];
        assert_eq!(hausdorff(&a, &b), 1.0);
        assert_eq!(hausdorff(&a, &a), 0.0);
    }
}
