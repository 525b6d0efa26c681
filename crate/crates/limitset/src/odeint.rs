//! Adaptive Dormand–Prince 5(4) integration of `x' = f(x)`.
//!
//! The solver produces a [`Trajectory`]: the accepted knots plus fourth-order
//! dense-output coefficients for every step, so downstream analyses can probe
//! the solution at arbitrary times. Finite escape is detected by a norm
//! threshold; a persistent inability to take a step within tolerance is
//! reported as step underflow in the termination reason, not as an error.

use crate::expr::{ExprError, Expression};
use crate::vecmath::norm;
use serde::Serialize;
use std::io::{self, Write};
use thiserror::Error;

/// Tolerances and limits for one integration run.
#[derive(Debug, Clone, Serialize)]
pub struct IntegratorConfig {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; `None` selects one automatically.
    pub initial_step: Option<f64>,
    /// Upper bound on the step size; `None` leaves it uncapped.
    pub max_step: Option<f64>,
    /// Underflow guard: a required step below this terminates the run.
    pub min_step: f64,
    /// Integration horizon.
    pub t_end: f64,
    /// State norm at which the trajectory is declared blown up.
    pub blowup_norm: f64,
    pub max_steps: usize,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            rel_tol: 1e-9,
            abs_tol: 1e-12,
            initial_step: None,
            max_step: None,
            min_step: 1e-13,
            t_end: 200.0,
            blowup_norm: 1e8,
            max_steps: 10_000_000,
        }
    }
}

impl IntegratorConfig {
    pub fn with_t_end(t_end: f64) -> Self {
        IntegratorConfig {
            t_end,
            ..Default::default()
        }
    }

    fn validate(&self) -> Result<(), OdeError> {
        let bad = |msg: &str| Err(OdeError::InvalidConfig(msg.into()));
        if !(self.rel_tol > 0.0) || !(self.abs_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.t_end > 0.0) {
            return bad("t_end must be positive");
        }
        if !(self.blowup_norm > 0.0) {
            return bad("blowup_norm must be positive");
        }
        if !(self.min_step > 0.0) {
            return bad("min_step must be positive");
        }
        if self.max_steps == 0 {
            return bad("max_steps must be positive");
        }
        Ok(())
    }
}

/// Why an integration stopped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Termination {
    /// Reached `t_end`; the last stored time equals the horizon.
    Horizon,
    /// State norm crossed `blowup_norm`; `t` is an upper estimate of the
    /// escape time.
    Blowup { t: f64 },
    /// The controller required a step below `min_step` (or exhausted the
    /// step budget) at time `t`.
    StepUnderflow { t: f64 },
}

#[derive(Debug, Error)]
pub enum OdeError {
    #[error("field has {field} components but the initial state has {state}")]
    DimensionMismatch { field: usize, state: usize },
    #[error("field component {index} is bound to dimension {got}, expected {expected}")]
    ComponentDimension {
        index: usize,
        expected: usize,
        got: usize,
    },
    #[error("invalid integrator configuration: {0}")]
    InvalidConfig(String),
    #[error("initial state must be finite")]
    NonFiniteInitialState,
    #[error("sample time {t} outside the stored range [0, {t_last}]")]
    SampleOutOfRange { t: f64, t_last: f64 },
}

/// Dense-output coefficients for one accepted step.
#[derive(Debug, Clone)]
struct DenseSegment {
    t0: f64,
    h: f64,
    /// Five interpolation coefficient vectors, one `f64` per component.
    cont: [Vec<f64>; 5],
}

impl DenseSegment {
    fn interpolate(&self, t: f64, out: &mut Vec<f64>) {
        let theta = (t - self.t0) / self.h;
        let theta1 = 1.0 - theta;
        out.clear();
        let [c1, c2, c3, c4, c5] = &self.cont;
        for i in 0..c1.len() {
            out.push(
                c1[i] + theta * (c2[i] + theta1 * (c3[i] + theta * (c4[i] + theta1 * c5[i]))),
            );
        }
    }
}

/// Time-ordered samples of the flow from one initial state, with dense
/// interpolation between knots. Immutable once returned.
#[derive(Debug, Clone)]
pub struct Trajectory {
    dimension: usize,
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    segments: Vec<DenseSegment>,
    termination: Termination,
}

impl Trajectory {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[Vec<f64>] {
        &self.states
    }

    pub fn termination(&self) -> Termination {
        self.termination
    }

    pub fn last_time(&self) -> f64 {
        *self.times.last().expect("trajectory holds the initial knot")
    }

    pub fn last_state(&self) -> &[f64] {
        self.states.last().expect("trajectory holds the initial knot")
    }

    /// Largest state norm over the stored knots.
    pub fn max_norm(&self) -> f64 {
        self.states
            .iter()
            .map(|s| norm(s))
            .fold(0.0, f64::max)
    }

    /// Solution at time `t` in `[0, last_time]`. Stored knots are returned
    /// bit-for-bit; interior times use the fourth-order dense output.
    pub fn sample_at(&self, t: f64) -> Result<Vec<f64>, OdeError> {
        let t_last = self.last_time();
        if !(0.0..=t_last).contains(&t) {
            return Err(OdeError::SampleOutOfRange { t, t_last });
        }
        // Exact knots short-circuit the interpolant.
        let idx = self.times.partition_point(|&k| k < t);
        if self.times.get(idx) == Some(&t) {
            return Ok(self.states[idx].clone());
        }
        let seg = idx
            .checked_sub(1)
            .and_then(|i| self.segments.get(i))
            .expect("interior time has a segment");
        let mut out = Vec::with_capacity(self.dimension);
        seg.interpolate(t, &mut out);
        Ok(out)
    }

    /// CSV dump: header `t,x1,...,xn`, one row per stored knot, 17
    /// significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "t")?;
        for i in 1..=self.dimension {
            write!(w, ",x{i}")?;
        }
        writeln!(w)?;
        for (t, state) in self.times.iter().zip(&self.states) {
            write!(w, "{t:.16e}")?;
            for v in state {
                write!(w, ",{v:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

// Dormand–Prince 5(4) tableau. Stage times are irrelevant: the systems are
// autonomous.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Embedded error coefficients (5th minus 4th order weights).
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense-output weights.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI step controller constants (Lund stabilization).
const SAFE: f64 = 0.9;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const FAC_SHRINK_MAX: f64 = 5.0; // largest shrink factor per attempt
const FAC_GROW_MAX: f64 = 10.0; // largest growth factor per step

/// Upper bound on `h·λ` (λ estimated from the last two stages). Keeps all
/// stage values of a decaying component on the correct side of zero even
/// when the error estimate is dominated by `abs_tol`; without it, components
/// decaying toward an invariant manifold overshoot and flip sign once they
/// fall below the absolute tolerance. For this tableau the stage values of
/// `y' = -λy` stay positive up to `h·λ ≈ 1.1`.
const STABILITY_MARGIN: f64 = 0.8;

struct Field<'a> {
    components: &'a [Expression],
}

impl Field<'_> {
    /// Evaluate `f` at `y`. Any domain error or non-finite component is
    /// reported so the caller can shrink the step.
    fn eval(&self, y: &[f64], out: &mut Vec<f64>) -> Result<(), ExprError> {
        out.clear();
        for component in self.components {
            out.push(component.evaluate(y)?);
        }
        Ok(())
    }
}

/// Integrate `x' = f(x)` forward from `x0` over `[0, config.t_end]`.
///
/// Local error per step is controlled to `rel_tol·|x| + abs_tol`
/// componentwise by the embedded 5(4) pair with a PI controller.
pub fn integrate(
    field: &[Expression],
    x0: &[f64],
    config: &IntegratorConfig,
) -> Result<Trajectory, OdeError> {
    config.validate()?;
    let n = x0.len();
    if field.is_empty() || field.len() != n {
        return Err(OdeError::DimensionMismatch {
            field: field.len(),
            state: n,
        });
    }
    for (index, component) in field.iter().enumerate() {
        if component.dimension() != n {
            return Err(OdeError::ComponentDimension {
                index,
                expected: n,
                got: component.dimension(),
            });
        }
    }
    if x0.iter().any(|v| !v.is_finite()) {
        return Err(OdeError::NonFiniteInitialState);
    }

    let f = Field { components: field };
    let mut traj = Trajectory {
        dimension: n,
        times: vec![0.0],
        states: vec![x0.to_vec()],
        segments: Vec::new(),
        termination: Termination::Horizon,
    };

    let mut t = 0.0_f64;
    let mut y = x0.to_vec();
    let mut k1 = Vec::with_capacity(n);
    if f.eval(&y, &mut k1).is_err() {
        // The field is undefined at the initial state; no step can be taken.
        traj.termination = Termination::StepUnderflow { t: 0.0 };
        return Ok(traj);
    }

    let h_cap = config.max_step.unwrap_or(f64::INFINITY).min(config.t_end);
    let mut h = match config.initial_step {
        Some(h0) => h0.clamp(config.min_step, h_cap),
        None => initial_step(&f, &y, &k1, config).min(h_cap),
    };

    let mut k2 = Vec::new();
    let mut k3 = Vec::new();
    let mut k4 = Vec::new();
    let mut k5 = Vec::new();
    let mut k6 = Vec::new();
    let mut k7 = Vec::new();
    let mut y_stage = vec![0.0; n];
    let mut y_new = vec![0.0; n];
    let mut facold = 1e-4_f64;
    let mut steps = 0usize;

    loop {
        if steps >= config.max_steps {
            traj.termination = Termination::StepUnderflow { t };
            break;
        }
        steps += 1;

        let last = h >= config.t_end - t;
        if last {
            h = config.t_end - t;
        }

        // Stages (FSAL: k1 carries over from the previous step).
        let stages_ok = (|| -> Result<(), ExprError> {
            for i in 0..n {
                y_stage[i] = y[i] + h * (A21 * k1[i]);
            }
            f.eval(&y_stage, &mut k2)?;
            for i in 0..n {
                y_stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
            }
            f.eval(&y_stage, &mut k3)?;
            for i in 0..n {
                y_stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
            }
            f.eval(&y_stage, &mut k4)?;
            for i in 0..n {
                y_stage[i] =
                    y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
            }
            f.eval(&y_stage, &mut k5)?;
            for i in 0..n {
                y_stage[i] = y[i]
                    + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i]
                        + A65 * k5[i]);
            }
            f.eval(&y_stage, &mut k6)?;
            for i in 0..n {
                y_new[i] = y[i]
                    + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i]
                        + A76 * k6[i]);
            }
            f.eval(&y_new, &mut k7)
        })();

        if stages_ok.is_err() {
            // Derivative undefined somewhere inside the step: shrink and retry.
            h *= 0.5;
            if h < config.min_step {
                traj.termination = Termination::StepUnderflow { t };
                break;
            }
            continue;
        }

        // Weighted RMS error over the embedded difference.
        let mut err_sq = 0.0;
        for i in 0..n {
            let e = h
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i]
                    + E7 * k7[i]);
            let scale = config.abs_tol + config.rel_tol * y[i].abs().max(y_new[i].abs());
            err_sq += (e / scale) * (e / scale);
        }
        let err = (err_sq / n as f64).sqrt();

        if !err.is_finite() {
            h *= 0.5;
            if h < config.min_step {
                traj.termination = Termination::StepUnderflow { t };
                break;
            }
            continue;
        }

        if err <= 1.0 {
            // Local rate estimate from the final stage pair (y_stage still
            // holds the sixth-stage input). Infinity norms: squared norms
            // would underflow for deeply decayed components and silently
            // disable the cap.
            let mut st_num = 0.0_f64;
            let mut st_den = 0.0_f64;
            for i in 0..n {
                st_num = st_num.max((k7[i] - k6[i]).abs());
                st_den = st_den.max((y_new[i] - y_stage[i]).abs());
            }
            let lambda = if st_num > 0.0 && st_den > 0.0 {
                st_num / st_den
            } else {
                0.0
            };

            // Accepted: record the knot and its dense-output coefficients.
            let t_new = if last { config.t_end } else { t + h };
            let h_seg = t_new - t;
            let mut cont = [
                Vec::with_capacity(n),
                Vec::with_capacity(n),
                Vec::with_capacity(n),
                Vec::with_capacity(n),
                Vec::with_capacity(n),
            ];
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = h * k1[i] - ydiff;
                cont[0].push(y[i]);
                cont[1].push(ydiff);
                cont[2].push(bspl);
                cont[3].push(ydiff - h * k7[i] - bspl);
                cont[4].push(
                    h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i]
                        + D7 * k7[i]),
                );
            }
            traj.segments.push(DenseSegment {
                t0: t,
                h: h_seg,
                cont,
            });
            traj.times.push(t_new);
            traj.states.push(y_new.clone());

            std::mem::swap(&mut y, &mut y_new);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;

            // Subnormal components flush to zero: decay below the smallest
            // normal magnitude cannot be tracked, and its rounding noise
            // re-amplifies along repelling directions.
            let mut flushed = false;
            for v in y.iter_mut() {
                if *v != 0.0 && v.abs() < f64::MIN_POSITIVE {
                    *v = 0.0;
                    flushed = true;
                }
            }
            if flushed {
                *traj.states.last_mut().expect("knot just pushed") = y.clone();
                if f.eval(&y, &mut k1).is_err() {
                    traj.termination = Termination::StepUnderflow { t };
                    break;
                }
            }

            if norm(&y) >= config.blowup_norm {
                traj.termination = Termination::Blowup { t };
                break;
            }
            if last {
                traj.termination = Termination::Horizon;
                break;
            }

            let fac11 = err.powf(EXPO1);
            let fac = (fac11 / facold.powf(BETA) / SAFE)
                .clamp(1.0 / FAC_GROW_MAX, FAC_SHRINK_MAX);
            h = (h / fac).min(h_cap);
            if lambda > 0.0 {
                h = h.min(STABILITY_MARGIN / lambda);
            }
            facold = err.max(1e-4);
        } else {
            // Rejected: shrink, bounded per attempt.
            let fac11 = err.powf(EXPO1);
            h /= (fac11 / SAFE).min(FAC_SHRINK_MAX);
            if h < config.min_step {
                traj.termination = Termination::StepUnderflow { t };
                break;
            }
        }
    }

    Ok(traj)
}

/// Integrate the time-reversed flow: forward integration of `-f`. Returned
/// times are backward elapsed times `τ ≥ 0`.
pub fn integrate_backward(
    field: &[Expression],
    x0: &[f64],
    config: &IntegratorConfig,
) -> Result<Trajectory, OdeError> {
    let negated: Vec<Expression> = field.iter().map(Expression::negated).collect();
    integrate(&negated, x0, config)
}

/// Step-size guess from the scaled derivative magnitudes plus one Euler probe.
fn initial_step(field: &Field, y: &[f64], k1: &[f64], config: &IntegratorConfig) -> f64 {
    let n = y.len();
    let sk: Vec<f64> = y
        .iter()
        .map(|v| config.abs_tol + config.rel_tol * v.abs())
        .collect();
    let d0 = (y
        .iter()
        .zip(&sk)
        .map(|(v, s)| (v / s) * (v / s))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let d1 = (k1
        .iter()
        .zip(&sk)
        .map(|(v, s)| (v / s) * (v / s))
        .sum::<f64>()
        / n as f64)
        .sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * (d0 / d1)
    };
    let h0 = h0.min(config.t_end).max(config.min_step);

    let probe: Vec<f64> = y.iter().zip(k1).map(|(v, k)| v + h0 * k).collect();
    let mut f1 = Vec::with_capacity(n);
    if field.eval(&probe, &mut f1).is_err() {
        return h0;
    }
    let d2 = (f1
        .iter()
        .zip(k1)
        .zip(&sk)
        .map(|((a, b), s)| ((a - b) / s) * ((a - b) / s))
        .sum::<f64>()
        / n as f64)
        .sqrt()
        / h0;
    let dm = d1.max(d2);
    let h1 = if dm <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / dm).powf(0.2)
    };
    (100.0 * h0).min(h1).min(config.t_end)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expression;
    use std::f64::consts::PI;

    fn field2(fx: &str, fy: &str) -> Vec<Expression> {
        vec![
            Expression::parse(fx, 2).unwrap(),
            Expression::parse(fy, 2).unwrap(),
        ]
    }

    fn harmonic() -> Vec<Expression> {
        field2("x2", "-x1")
    }

    fn kinked_rotation() -> Vec<Expression> {
        field2("-abs(x2)*x2", "abs(x2)*x1")
    }

    #[test]
    fn zero_field_is_constant() {
        let field = field2("0", "0");
        let config = IntegratorConfig::with_t_end(10.0);
        let traj = integrate(&field, &[1.0, 2.0], &config).unwrap();
        assert_eq!(traj.termination(), Termination::Horizon);
        assert_eq!(traj.last_time(), 10.0);
        for state in traj.states() {
            assert_eq!(state.as_slice(), &[1.0, 2.0]);
        }
    }

    #[test]
    fn harmonic_oscillator_full_period() {
        // Closed form from (1,0): (cos t, -sin t); one period returns home.
        let config = IntegratorConfig::with_t_end(2.0 * PI);
        let traj = integrate(&harmonic(), &[1.0, 0.0], &config).unwrap();
        assert_eq!(traj.termination(), Termination::Horizon);
        let last = traj.last_state();
        assert!((last[0] - 1.0).abs() < 1e-7, "x1 = {}", last[0]);
        assert!(last[1].abs() < 1e-7, "x2 = {}", last[1]);
    }

    #[test]
    fn quadratic_blowup_detected_near_time_one() {
        // x' = x^2 from 1 has x(t) = 1/(1-t), escaping at t = 1.
        let field = vec![Expression::parse("x1^2", 1).unwrap()];
        let config = IntegratorConfig {
            t_end: 5.0,
            ..Default::default()
        };
        let traj = integrate(&field, &[1.0], &config).unwrap();
        match traj.termination() {
            Termination::Blowup { t } => assert!((t - 1.0).abs() < 1e-2, "t = {t}"),
            other => panic!("expected blow-up, got {other:?}"),
        }
        assert!(norm(traj.last_state()) >= config.blowup_norm);
    }

    #[test]
    fn backward_of_zero_field_is_constant() {
        let field = field2("0", "0");
        let config = IntegratorConfig::with_t_end(4.0);
        let traj = integrate_backward(&field, &[-3.0, 7.0], &config).unwrap();
        for state in traj.states() {
            assert_eq!(state.as_slice(), &[-3.0, 7.0]);
        }
    }

    #[test]
    fn forward_then_backward_returns_to_start() {
        let config = IntegratorConfig::with_t_end(5.0);
        let fwd = integrate(&harmonic(), &[1.0, 0.0], &config).unwrap();
        let bwd = integrate_backward(&harmonic(), fwd.last_state(), &config).unwrap();
        let back = bwd.last_state();
        assert!((back[0] - 1.0).abs() < 1e-6);
        assert!(back[1].abs() < 1e-6);
    }

    #[test]
    fn backward_flow_preserves_radius_on_kinked_rotation() {
        let config = IntegratorConfig::with_t_end(20.0);
        let traj = integrate_backward(&kinked_rotation(), &[0.0, 1.0], &config).unwrap();
        for state in traj.states() {
            assert!((norm(state) - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn sample_at_endpoints_and_knots_is_exact() {
        let config = IntegratorConfig::with_t_end(3.0);
        let traj = integrate(&harmonic(), &[1.0, 0.0], &config).unwrap();
        assert_eq!(traj.sample_at(0.0).unwrap(), vec![1.0, 0.0]);
        // Knots reproduce stored states bit-for-bit.
        for (i, &t) in traj.times().iter().enumerate() {
            assert_eq!(traj.sample_at(t).unwrap(), traj.states()[i]);
        }
        assert!(traj.sample_at(-0.1).is_err());
        assert!(traj.sample_at(3.1).is_err());
    }

    #[test]
    fn sample_at_zero_field_any_time() {
        let field = field2("0", "0");
        let traj = integrate(&field, &[1.0, 2.0], &IntegratorConfig::with_t_end(10.0)).unwrap();
        assert_eq!(traj.sample_at(4.321).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn dense_output_matches_closed_form() {
        let config = IntegratorConfig::with_t_end(2.0 * PI);
        let traj = integrate(&harmonic(), &[1.0, 0.0], &config).unwrap();
        let quarter = traj.sample_at(PI / 2.0).unwrap();
        assert!((quarter[0]).abs() < 1e-6, "x1 = {}", quarter[0]);
        assert!((quarter[1] + 1.0).abs() < 1e-6, "x2 = {}", quarter[1]);
        // Dense probe everywhere against (cos t, -sin t).
        for i in 0..=200 {
            let t = 2.0 * PI * i as f64 / 200.0;
            let s = traj.sample_at(t).unwrap();
            assert!((s[0] - t.cos()).abs() < 1e-6);
            assert!((s[1] + t.sin()).abs() < 1e-6);
        }
    }

    #[test]
    fn halving_rel_tol_does_not_worsen_final_error() {
        let exact = [(2.0_f64).cos(), -(2.0_f64).sin()];
        let mut rel_tol = 1e-4;
        let mut prev = f64::INFINITY;
        for _ in 0..10 {
            let config = IntegratorConfig {
                rel_tol,
                abs_tol: 1e-14,
                t_end: 2.0,
                ..Default::default()
            };
            let traj = integrate(&harmonic(), &[1.0, 0.0], &config).unwrap();
            let last = traj.last_state();
            let err = ((last[0] - exact[0]).powi(2) + (last[1] - exact[1]).powi(2)).sqrt();
            assert!(
                err <= prev,
                "error grew from {prev:.3e} to {err:.3e} at rel_tol {rel_tol:.1e}"
            );
            prev = err;
            rel_tol /= 2.0;
        }
    }

    #[test]
    fn kinked_rotation_conserves_radius_over_long_horizon() {
        let config = IntegratorConfig::with_t_end(200.0);
        let traj = integrate(&kinked_rotation(), &[3.0, 4.0], &config).unwrap();
        assert_eq!(traj.termination(), Termination::Horizon);
        let mut worst = 0.0_f64;
        for state in traj.states() {
            worst = worst.max((norm(state) - 5.0).abs());
        }
        for i in 0..=5000 {
            let t = 200.0 * i as f64 / 5000.0;
            let s = traj.sample_at(t).unwrap();
            worst = worst.max((norm(&s) - 5.0).abs());
        }
        assert!(worst <= 1e-6, "radius drift {worst:.3e}");
    }

    #[test]
    fn times_strictly_increase_and_states_stay_finite() {
        let config = IntegratorConfig::with_t_end(50.0);
        let traj = integrate(&kinked_rotation(), &[0.1, 0.1], &config).unwrap();
        for pair in traj.times().windows(2) {
            assert!(pair[0] < pair[1]);
        }
        for state in traj.states() {
            assert!(state.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn step_underflow_at_a_derivative_singularity() {
        // x' = -1/x from 1 reaches x = 0 at t = 0.5 with unbounded slope.
        let field = vec![Expression::parse("-1/x1", 1).unwrap()];
        let config = IntegratorConfig::with_t_end(1.0);
        let traj = integrate(&field, &[1.0], &config).unwrap();
        match traj.termination() {
            Termination::StepUnderflow { t } => {
                assert!((t - 0.5).abs() < 0.05, "underflow at t = {t}")
            }
            other => panic!("expected step underflow, got {other:?}"),
        }
    }

    #[test]
    fn dimension_checks() {
        let field = field2("x2", "-x1");
        assert!(matches!(
            integrate(&field, &[1.0], &IntegratorConfig::default()),
            Err(OdeError::DimensionMismatch { .. })
        ));
        let field3 = vec![
            Expression::parse("x1", 3).unwrap(),
            Expression::parse("x2", 3).unwrap(),
        ];
        assert!(matches!(
            integrate(&field3, &[1.0, 2.0], &IntegratorConfig::default()),
            Err(OdeError::ComponentDimension { .. })
        ));
    }

    #[test]
    fn csv_dump_has_header_and_full_precision() {
        let field = field2("0", "0");
        let traj = integrate(
            &field,
            &[1.0, -0.5],
            &IntegratorConfig::with_t_end(1.0),
        )
        .unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2");
        let first = lines.next().unwrap();
        let fields: Vec<&str> = first.split(',').collect();
        assert_eq!(fields.len(), 3);
        assert_eq!(fields[1].parse::<f64>().unwrap(), 1.0);
        // 17 significant digits in the mantissa.
        assert!(fields[1].starts_with("1.0000000000000000e"));
    }
}
