use super::*;
use crate::expr::Expression;
use crate::odeint::{integrate, IntegratorConfig};
use crate::regions::Region;
use crate::vecmath::dist;
use crate::Verdict;

fn e2(text: &str) -> Expression {
    Expression::parse(text, 2).unwrap()
}

fn kinked_rotation() -> Vec<Expression> {
    vec![e2("-abs(x2)*x2"), e2("abs(x2)*x1")]
}

fn harmonic() -> Vec<Expression> {
    vec![e2("x2"), e2("-x1")]
}

fn box2() -> Vec<[f64; 2]> {
    vec![[-2.0, 2.0], [-2.0, 2.0]]
}

fn unit_circle() -> Region {
    Region::zero_set(e2("x1^2 + x2^2 - 1"))
        .with_tol(2e-2)
        .with_bounds(box2())
}

fn horizontal_axis() -> Region {
    Region::zero_set(e2("x2")).with_bounds(box2())
}

fn grid(n: usize, half: f64) -> Vec<Vec<f64>> {
    let axis = crate::vecmath::linspace(-half, half, n);
    let mut points = Vec::new();
    for &a in &axis {
        for &b in &axis {
            points.push(vec![a, b]);
        }
    }
    points
}

#[test]
fn lie_signal_keeps_one_sign_on_descending_orbit() {
    // V = x1 along the kinked rotation: p(t) = -|x2|x2 < 0 until the orbit
    // parks at the pole, with no sign change above threshold.
    let field = kinked_rotation();
    let traj = integrate(&field, &[0.0, 1.0], &IntegratorConfig::with_t_end(200.0)).unwrap();
    let signal = lie_signal(&traj, &e2("x1"), &field, 1000, 1e-9).unwrap();
    assert_eq!(signal.sign_changes, 0);
    assert!(signal.samples[0].1 < 0.0);
}

#[test]
fn lie_signal_of_zero_field_is_identically_zero() {
    let field = vec![Expression::constant(0.0, 2), Expression::constant(0.0, 2)];
    let traj = integrate(&field, &[1.0, 2.0], &IntegratorConfig::with_t_end(10.0)).unwrap();
    let signal = lie_signal(&traj, &e2("x1 + x2^2"), &field, 100, 1e-9).unwrap();
    assert_eq!(signal.max_abs, 0.0);
    assert_eq!(signal.sign_changes, 0);
}

#[test]
fn lie_signal_alternates_on_periodic_orbit() {
    // V = x1 on the oscillator: p(t) = x2(t) = -sin t, one change per half
    // period.
    let field = harmonic();
    let traj = integrate(&field, &[1.0, 0.0], &IntegratorConfig::with_t_end(200.0)).unwrap();
    let signal = lie_signal(&traj, &e2("x1"), &field, 1000, 1e-9).unwrap();
    let half_periods = (200.0 / std::f64::consts::PI) as usize;
    assert!(
        signal.sign_changes >= half_periods - 2,
        "got {} sign changes",
        signal.sign_changes
    );
}

#[test]
fn theorem1_certificate_passes_on_the_reference_system() {
    let field = kinked_rotation();
    let report = check_theorem1(
        &field,
        &e2("x1"),
        &unit_circle(),
        &horizontal_axis(),
        &Thm1Params::default(),
    )
    .unwrap();
    assert_eq!(report.overall, Verdict::Pass, "{report:?}");
    // The invariant-set estimate is the pole pair.
    assert_eq!(report.m_hat.points.len(), 2);
    for pole in [[-1.0, 0.0], [1.0, 0.0]] {
        assert!(report
            .m_hat
            .points
            .iter()
            .any(|p| dist(p, &pole) <= 1e-3));
    }
    for p in &report.m_hat.points {
        assert!(
            dist(p, &[-1.0, 0.0]).min(dist(p, &[1.0, 0.0])) <= 1e-3,
            "stray invariant point {p:?}"
        );
    }
    // Each limit-set estimate sits at the sign-correct pole.
    assert_eq!(report.conclusion.per_x0.len(), 12);
    for entry in &report.conclusion.per_x0 {
        let expected = if entry.x0[1] > 0.0 {
            vec![-1.0, 0.0]
        } else if entry.x0[1] < 0.0 {
            vec![1.0, 0.0]
        } else {
            entry.x0.clone()
        };
        for rep in &entry.representatives {
            assert!(
                dist(rep, &expected) <= 1e-2,
                "x0 {:?} converged to {:?}, expected {:?}",
                entry.x0,
                rep,
                expected
            );
        }
        assert!(entry.settled);
        assert!(entry.max_dist_to_m <= 1e-2);
    }
}

#[test]
fn theorem1_detects_the_radial_function_obstruction() {
    // V = x1^2 + x2^2 has identically vanishing Lie derivative: condition
    // (i) must fail with an essentially zero normalized minimum.
    let field = kinked_rotation();
    let report = check_theorem1(
        &field,
        &e2("x1^2 + x2^2"),
        &unit_circle(),
        &horizontal_axis(),
        &Thm1Params::default(),
    )
    .unwrap();
    assert_eq!(report.condition_i.verdict, Verdict::Fail);
    assert!(
        report.condition_i.normalized_min <= 1e-12,
        "normalized min = {:e}",
        report.condition_i.normalized_min
    );
    assert_eq!(report.overall, Verdict::Fail);
}

#[test]
fn theorem1_detects_a_non_negatively_invariant_region() {
    // The vertical axis is crossed by the rotation: condition (ii) fails
    // with a recorded entry event.
    let field = kinked_rotation();
    let vertical = Region::zero_set(e2("x1")).with_bounds(box2());
    let report = check_theorem1(
        &field,
        &e2("x1"),
        &unit_circle(),
        &vertical,
        &Thm1Params::default(),
    )
    .unwrap();
    assert_eq!(report.condition_ii.verdict, Verdict::Fail);
    assert!(report.condition_ii.violation.is_some());
    assert_eq!(report.overall, Verdict::Fail);
}

#[test]
fn theorem1_verdicts_are_invariant_under_scaling_v() {
    let field = kinked_rotation();
    let a = check_theorem1(
        &field,
        &e2("x1"),
        &unit_circle(),
        &horizontal_axis(),
        &Thm1Params::default(),
    )
    .unwrap();
    let b = check_theorem1(
        &field,
        &e2("5*x1"),
        &unit_circle(),
        &horizontal_axis(),
        &Thm1Params::default(),
    )
    .unwrap();
    assert_eq!(a.overall, b.overall);
    assert_eq!(a.condition_i.verdict, b.condition_i.verdict);
    assert!((a.condition_i.normalized_min - b.condition_i.normalized_min).abs() <= 1e-12);
}

#[test]
fn theorem2_certificate_passes_on_the_reference_starts() {
    let field = kinked_rotation();
    let params = Thm2Params {
        s_box: Some(box2()),
        ..Default::default()
    };
    let x0s = vec![vec![3.0, 4.0], vec![0.0, 1.0], vec![-1.0, -1.0]];
    let report = check_theorem2(&field, &e2("x1"), &x0s, &params).unwrap();
    assert_eq!(report.overall, Verdict::Pass, "{report:?}");
    for entry in &report.per_x0 {
        assert_eq!(entry.boundedness, Verdict::Pass);
        assert!(
            entry.s_min_abs_lie <= 1e-6,
            "x0 {:?}: min |∇V·f| = {:e}",
            entry.x0,
            entry.s_min_abs_lie
        );
        assert!(entry.settled);
    }
}

#[test]
fn theorem2_accepts_any_function_at_an_equilibrium() {
    // The Lie derivative vanishes wherever f does.
    let field = kinked_rotation();
    let report = check_theorem2(
        &field,
        &e2("exp(x1)*sin(x2) + x1^3"),
        &[vec![2.0, 0.0]],
        &Thm2Params::default(),
    )
    .unwrap();
    assert_eq!(report.overall, Verdict::Pass);
    assert_eq!(report.per_x0[0].s_min_abs_lie, 0.0);
}

#[test]
fn theorem2_is_trivial_when_the_lie_derivative_cancels() {
    // V = x1^2 + x2^2 along the oscillator: ∇V·f = 2x1x2 - 2x2x1 = 0.
    let field = harmonic();
    let report = check_theorem2(
        &field,
        &e2("x1^2 + x2^2"),
        &[vec![1.0, 0.0]],
        &Thm2Params::default(),
    )
    .unwrap();
    assert_eq!(report.overall, Verdict::Pass);
    assert_eq!(report.per_x0[0].s_min_abs_lie, 0.0);
}

#[test]
fn theorem2_fails_boundedness_on_blowup_without_crashing() {
    let field = vec![Expression::parse("x1^2", 1).unwrap()];
    let v = Expression::parse("x1", 1).unwrap();
    let report = check_theorem2(
        &field,
        &v,
        &[vec![1.0]],
        &Thm2Params {
            t_end: 5.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(report.per_x0[0].boundedness, Verdict::Fail);
    assert_eq!(report.overall, Verdict::Fail);
}

#[test]
fn theorem2_verdicts_are_invariant_under_scaling_v() {
    let field = kinked_rotation();
    let x0s = vec![vec![3.0, 4.0], vec![0.0, 1.0]];
    let a = check_theorem2(&field, &e2("x1"), &x0s, &Thm2Params::default()).unwrap();
    let b = check_theorem2(&field, &e2("100*x1"), &x0s, &Thm2Params::default()).unwrap();
    assert_eq!(a.overall, b.overall);
    for (ea, eb) in a.per_x0.iter().zip(&b.per_x0) {
        assert_eq!(ea.verdict, eb.verdict);
        assert!((ea.s_normalized_min - eb.s_normalized_min).abs() <= 1e-12);
    }
}

#[test]
fn theorem2_reach_grid_flags_hits_and_checks_inclusion() {
    let field = kinked_rotation();
    let params = Thm2Params {
        s_box: Some(box2()),
        reach_grid: Some(grid(3, 1.0)),
        ..Default::default()
    };
    let report =
        check_theorem2(&field, &e2("x1"), &[vec![0.0, 1.0]], &params).unwrap();
    let reach = report.reach.expect("reach grid requested");
    // Every orbit of this system reaches the axis where ∇V·f = 0.
    assert_eq!(reach.fraction_hitting, 1.0);
    let inclusion = report.m_inclusion.expect("inclusion check requested");
    assert_eq!(inclusion.verdict, Verdict::Pass, "{inclusion:?}");
}

#[test]
fn weak_attractor_sweep_passes_everywhere_on_the_reference_system() {
    let field = kinked_rotation();
    let params = SweepParams {
        s_box: Some(box2()),
        ..Default::default()
    };
    let summary = weak_attractor_sweep(&field, &e2("x1"), &grid(5, 2.0), &params).unwrap();
    assert_eq!(summary.fraction_passing, 1.0, "{summary:?}");
    assert_eq!(summary.verdict, Verdict::Pass);
    assert_eq!(summary.blowup_count, 0);
}

#[test]
fn weak_attractor_sweep_on_a_single_equilibrium() {
    let field = kinked_rotation();
    let summary = weak_attractor_sweep(
        &field,
        &e2("x1"),
        &[vec![1.5, 0.0]],
        &SweepParams::default(),
    )
    .unwrap();
    assert_eq!(summary.fraction_passing, 1.0);
}

#[test]
fn weak_attractor_sweep_covers_periodic_orbits() {
    // Every oscillator orbit crosses S = {x2 = 0}; the finite estimate
    // witnesses the intersection geometrically.
    let field = harmonic();
    let params = SweepParams {
        s_box: Some(box2()),
        ..Default::default()
    };
    let summary = weak_attractor_sweep(&field, &e2("x1"), &grid(5, 1.0), &params).unwrap();
    assert_eq!(summary.fraction_passing, 1.0, "{summary:?}");
}

#[test]
fn sweep_records_blowups_and_continues() {
    let field = vec![Expression::parse("x1^2", 1).unwrap()];
    let v = Expression::parse("x1", 1).unwrap();
    let grid = vec![vec![-1.0], vec![1.0]]; // x0 = -1 creeps to 0 like -1/t, x0 = 1 blows up
    let summary = weak_attractor_sweep(
        &field,
        &v,
        &grid,
        &SweepParams {
            t_end: 400.0,
            s_box: Some(vec![[-2.0, 2.0]]),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(summary.blowup_count, 1);
    assert_eq!(summary.fraction_passing, 1.0);
}
