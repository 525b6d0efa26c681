//! State-space sets with tolerance-based membership.
//!
//! A [`Region`] is a zero set `{g = 0}`, a sublevel set `{g <= 0}`, a finite
//! point set, or the whole space. Implicit kinds carry a bounding box for
//! sampling; membership tolerances for them are in `g`-units, while
//! [`Region::distance_estimate`] reports geometric (Euclidean) distances.
//! Topological closure is realized downstream as tolerance inflation:
//! membership at an inflated tolerance stands in for membership in the
//! closure.

use crate::expr::{ExprError, Expression};
use crate::vecmath::{dist, linspace};
use thiserror::Error;

pub const DEFAULT_TOL: f64 = 1e-6;

/// Grid resolution used when a distance query has to generate its own
/// surface samples.
const DISTANCE_RESOLUTION: usize = 101;

/// Accuracy target of the projected-gradient distance refinement; reported
/// alongside distances in certificate output.
pub const REFINEMENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub enum RegionKind {
    ZeroSet(Expression),
    Sublevel(Expression),
    PointSet(Vec<Vec<f64>>),
    WholeSpace,
}

impl RegionKind {
    pub fn name(&self) -> &'static str {
        match self {
            RegionKind::ZeroSet(_) => "zero_set",
            RegionKind::Sublevel(_) => "sublevel",
            RegionKind::PointSet(_) => "point_set",
            RegionKind::WholeSpace => "whole_space",
        }
    }
}

#[derive(Debug, Clone)]
pub struct Region {
    kind: RegionKind,
    dimension: usize,
    /// Membership tolerance; `g`-units for implicit kinds, Euclidean for
    /// point sets.
    tol: f64,
    /// Per-axis intervals; required for sampling implicit kinds.
    bounds: Option<Vec<[f64; 2]>>,
}

/// Finite surrogate for a region: the grid samples that passed membership.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCloud {
    pub points: Vec<Vec<f64>>,
    /// Points per axis of the generating grid.
    pub resolution: usize,
}

impl SampleCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, Error)]
pub enum RegionError {
    #[error(transparent)]
    Expr(#[from] ExprError),
    #[error("region needs a bounding box for this operation")]
    MissingBox,
    #[error("sampling resolution must be at least 2")]
    InvalidResolution,
    #[error("region has no samples in its box; distance is undefined")]
    UndefinedDistance,
    #[error("region is {region}-dimensional but the point has {point} components")]
    DimensionMismatch { region: usize, point: usize },
    #[error("point {index} has {got} components, expected {expected}")]
    BadPoint {
        index: usize,
        expected: usize,
        got: usize,
    },
}

impl Region {
    pub fn zero_set(g: Expression) -> Region {
        let dimension = g.dimension();
        Region {
            kind: RegionKind::ZeroSet(g),
            dimension,
            tol: DEFAULT_TOL,
            bounds: None,
        }
    }

    pub fn sublevel(g: Expression) -> Region {
        let dimension = g.dimension();
        Region {
            kind: RegionKind::Sublevel(g),
            dimension,
            tol: DEFAULT_TOL,
            bounds: None,
        }
    }

    pub fn point_set(points: Vec<Vec<f64>>, dimension: usize) -> Result<Region, RegionError> {
        for (index, p) in points.iter().enumerate() {
            if p.len() != dimension {
                return Err(RegionError::BadPoint {
                    index,
                    expected: dimension,
                    got: p.len(),
                });
            }
        }
        Ok(Region {
            kind: RegionKind::PointSet(points),
            dimension,
            tol: DEFAULT_TOL,
            bounds: None,
        })
    }

    pub fn whole_space(dimension: usize) -> Region {
        Region {
            kind: RegionKind::WholeSpace,
            dimension,
            tol: DEFAULT_TOL,
            bounds: None,
        }
    }

    pub fn with_tol(mut self, tol: f64) -> Region {
        self.tol = tol;
        self
    }

    pub fn with_bounds(mut self, bounds: Vec<[f64; 2]>) -> Region {
        self.bounds = Some(bounds);
        self
    }

    pub fn kind(&self) -> &RegionKind {
        &self.kind
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn bounds(&self) -> Option<&[[f64; 2]]> {
        self.bounds.as_deref()
    }

    fn check_point(&self, x: &[f64]) -> Result<(), RegionError> {
        if x.len() != self.dimension {
            return Err(RegionError::DimensionMismatch {
                region: self.dimension,
                point: x.len(),
            });
        }
        Ok(())
    }

    /// Tolerance-based membership. Zero sets test `|g(x)| <= tol`, sublevel
    /// sets `g(x) <= tol`, point sets the minimum Euclidean distance, and
    /// the whole space accepts everything. Monotone in `tol` by
    /// construction.
    pub fn member(&self, x: &[f64], tol: f64) -> Result<bool, RegionError> {
        self.check_point(x)?;
        match &self.kind {
            RegionKind::ZeroSet(g) => Ok(g.evaluate(x)?.abs() <= tol),
            RegionKind::Sublevel(g) => Ok(g.evaluate(x)? <= tol),
            RegionKind::PointSet(points) => Ok(points.iter().any(|p| dist(x, p) <= tol)),
            RegionKind::WholeSpace => Ok(true),
        }
    }

    /// Membership at the region's own tolerance.
    pub fn contains(&self, x: &[f64]) -> Result<bool, RegionError> {
        self.member(x, self.tol)
    }

    /// Uniform grid over the bounding box (`resolution` points per axis,
    /// endpoints included), retaining points that pass membership at the
    /// region's own tolerance. A point set returns its own points; the
    /// result may legitimately be empty. Deterministic in its inputs.
    pub fn sample(&self, resolution: usize) -> Result<SampleCloud, RegionError> {
        if resolution < 2 {
            return Err(RegionError::InvalidResolution);
        }
        if let RegionKind::PointSet(points) = &self.kind {
            return Ok(SampleCloud {
                points: points.clone(),
                resolution,
            });
        }
        let bounds = self.bounds.as_ref().ok_or(RegionError::MissingBox)?;
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .map(|&[lo, hi]| linspace(lo, hi, resolution))
            .collect();
        let mut points = Vec::new();
        for point in GridIter::new(&axes) {
            if self.member(&point, self.tol)? {
                points.push(point);
            }
        }
        Ok(SampleCloud { points, resolution })
    }

    /// Geometric distance from `x` to the region.
    ///
    /// Point sets are exact; implicit kinds take the nearest grid-generated
    /// surface sample and refine it with projected-gradient descent of
    /// `|y - x|^2` along the surface, accurate to about [`REFINEMENT_TOL`]
    /// for smooth `g`. Results are box-relative: nothing outside the
    /// bounding box is seen.
    pub fn distance_estimate(&self, x: &[f64]) -> Result<f64, RegionError> {
        self.check_point(x)?;
        match &self.kind {
            RegionKind::WholeSpace => Ok(0.0),
            RegionKind::PointSet(points) => crate::vecmath::min_dist_to(x, points)
                .ok_or(RegionError::UndefinedDistance),
            RegionKind::Sublevel(g) => {
                if g.evaluate(x)? <= 0.0 {
                    return Ok(0.0);
                }
                self.distance_to_surface(g, x)
            }
            RegionKind::ZeroSet(g) => self.distance_to_surface(g, x),
        }
    }

    fn distance_to_surface(&self, g: &Expression, x: &[f64]) -> Result<f64, RegionError> {
        let seeds = self.surface_seeds(g)?;
        if seeds.is_empty() {
            return Err(RegionError::UndefinedDistance);
        }
        // Refine from the few nearest seeds; branches of the surface closer
        // in g-value need not be closer in space.
        let mut order: Vec<usize> = (0..seeds.len()).collect();
        order.sort_by(|&a, &b| dist(x, &seeds[a]).total_cmp(&dist(x, &seeds[b])));
        let mut best = f64::INFINITY;
        for &i in order.iter().take(4) {
            let refined = refine_closest_point(g, x, &seeds[i]);
            best = best.min(dist(x, &refined));
        }
        Ok(best)
    }

    /// Candidate surface points: grid samples passing membership plus
    /// midpoints of grid edges where `g` changes sign (these capture
    /// surfaces that thread between lattice points).
    fn surface_seeds(&self, g: &Expression) -> Result<Vec<Vec<f64>>, RegionError> {
        let bounds = self.bounds.as_ref().ok_or(RegionError::MissingBox)?;
        let axes: Vec<Vec<f64>> = bounds
            .iter()
            .map(|&[lo, hi]| linspace(lo, hi, DISTANCE_RESOLUTION))
            .collect();
        let grid: Vec<Vec<f64>> = GridIter::new(&axes).collect();
        let values: Vec<Option<f64>> = grid.iter().map(|p| g.evaluate(p).ok()).collect();

        let mut seeds = Vec::new();
        for (p, v) in grid.iter().zip(&values) {
            if let Some(v) = v {
                if v.abs() <= self.tol {
                    seeds.push(p.clone());
                }
            }
        }
        // Strides for neighbor lookup in the row-major grid.
        let n = axes.len();
        let mut strides = vec![1usize; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * DISTANCE_RESOLUTION;
        }
        for (idx, p) in grid.iter().enumerate() {
            let Some(v) = values[idx] else { continue };
            for axis in 0..n {
                let coord = (idx / strides[axis]) % DISTANCE_RESOLUTION;
                if coord + 1 >= DISTANCE_RESOLUTION {
                    continue;
                }
                let Some(w) = values[idx + strides[axis]] else {
                    continue;
                };
                if v.signum() != w.signum() && v != 0.0 && w != 0.0 {
                    let mut mid = p.clone();
                    mid[axis] += (axes[axis][coord + 1] - axes[axis][coord]) / 2.0;
                    seeds.push(mid);
                }
            }
        }
        Ok(seeds)
    }

    /// Newton-project `x` onto the zero set of this region's defining
    /// expression. `None` for non-implicit kinds or when projection fails.
    pub fn project(&self, x: &[f64]) -> Option<Vec<f64>> {
        let g = match &self.kind {
            RegionKind::ZeroSet(g) | RegionKind::Sublevel(g) => g,
            _ => return None,
        };
        let mut y = x.to_vec();
        if newton_project(g, &mut y) {
            Some(y)
        } else {
            None
        }
    }
}

/// Newton iteration toward `g(y) = 0` along the gradient. Returns whether it
/// converged to a surface point.
fn newton_project(g: &Expression, y: &mut [f64]) -> bool {
    let grad: Vec<Expression> = match gradient(g) {
        Some(v) => v,
        None => return false,
    };
    for _ in 0..50 {
        let value = match g.evaluate(y) {
            Ok(v) => v,
            Err(_) => return false,
        };
        let scale = y.iter().map(|v| v.abs()).fold(1.0, f64::max);
        if value.abs() <= 1e-14 * scale {
            return true;
        }
        let mut gv = Vec::with_capacity(y.len());
        for d in &grad {
            match d.evaluate(y) {
                Ok(v) => gv.push(v),
                Err(_) => return false,
            }
        }
        let norm_sq: f64 = gv.iter().map(|v| v * v).sum();
        if norm_sq < 1e-30 {
            return false;
        }
        for (yi, gi) in y.iter_mut().zip(&gv) {
            *yi -= value * gi / norm_sq;
        }
    }
    g.evaluate(y).map(|v| v.abs() <= 1e-9).unwrap_or(false)
}

fn gradient(g: &Expression) -> Option<Vec<Expression>> {
    (1..=g.dimension())
        .map(|i| g.differentiate(i).ok())
        .collect()
}

/// Minimize `|y - x|^2` over `{g = 0}` starting from `seed`: alternate
/// tangential moves toward `x` with Newton re-projection, backtracking when
/// a move does not pay off.
fn refine_closest_point(g: &Expression, x: &[f64], seed: &[f64]) -> Vec<f64> {
    let mut y = seed.to_vec();
    if !newton_project(g, &mut y) {
        return seed.to_vec();
    }
    let grad = match gradient(g) {
        Some(v) => v,
        None => return y,
    };
    let mut best = y.clone();
    let mut best_dist = dist(x, &y);
    for _ in 0..100 {
        let mut gv = Vec::with_capacity(y.len());
        for d in &grad {
            match d.evaluate(&y) {
                Ok(v) => gv.push(v),
                Err(_) => return best,
            }
        }
        let gnorm_sq: f64 = gv.iter().map(|v| v * v).sum();
        if gnorm_sq < 1e-30 {
            return best;
        }
        let diff: Vec<f64> = x.iter().zip(&y).map(|(a, b)| a - b).collect();
        let along: f64 = diff.iter().zip(&gv).map(|(d, g)| d * g).sum::<f64>() / gnorm_sq;
        let tangent: Vec<f64> = diff
            .iter()
            .zip(&gv)
            .map(|(d, g)| d - along * g)
            .collect();
        let tnorm = crate::vecmath::norm(&tangent);
        if tnorm <= REFINEMENT_TOL * 1e-3 * (1.0 + best_dist) {
            break;
        }
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..20 {
            let mut trial: Vec<f64> = y
                .iter()
                .zip(&tangent)
                .map(|(yi, ti)| yi + step * ti)
                .collect();
            if newton_project(g, &mut trial) {
                let d = dist(x, &trial);
                if d < best_dist {
                    y = trial;
                    best_dist = d;
                    best = y.clone();
                    improved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !improved {
            break;
        }
    }
    best
}

/// Row-major iterator over the product of per-axis coordinate lists.
struct GridIter<'a> {
    axes: &'a [Vec<f64>],
    index: Vec<usize>,
    done: bool,
}

impl<'a> GridIter<'a> {
    fn new(axes: &'a [Vec<f64>]) -> GridIter<'a> {
        let done = axes.is_empty() || axes.iter().any(|a| a.is_empty());
        GridIter {
            axes,
            index: vec![0; axes.len()],
            done,
        }
    }
}

impl Iterator for GridIter<'_> {
    type Item = Vec<f64>;

    fn next(&mut self) -> Option<Vec<f64>> {
        if self.done {
            return None;
        }
        let point: Vec<f64> = self
            .index
            .iter()
            .zip(self.axes)
            .map(|(&i, axis)| axis[i])
            .collect();
        // Odometer increment, last axis fastest.
        for axis in (0..self.axes.len()).rev() {
            self.index[axis] += 1;
            if self.index[axis] < self.axes[axis].len() {
                return Some(point);
            }
            self.index[axis] = 0;
        }
        self.done = true;
        Some(point)
    }
}
