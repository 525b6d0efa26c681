//! Small vector helpers shared across modules. States are plain `&[f64]`.

pub fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(u, v)| (u - v) * (u - v))
        .sum::<f64>()
        .sqrt()
}

/// Minimum Euclidean distance from `x` to a finite point cloud.
/// Returns `None` for an empty cloud.
pub fn min_dist_to(x: &[f64], cloud: &[Vec<f64>]) -> Option<f64> {
    cloud
        .iter()
        .map(|p| dist(x, p))
        .min_by(|a, b| a.total_cmp(b))
}

/// `count` equally spaced values covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    assert!(count >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (count - 1) as f64;
    (0..count)
        .map(|i| if i + 1 == count { hi } else { lo + step * i as f64 })
        .collect()
}
