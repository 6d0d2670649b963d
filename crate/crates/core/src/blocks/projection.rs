use crate::{CVector, C64};

/// Euclidean projection onto `{x : ‖x‖ ≤ radius}`; an infinite radius
/// returns `v` unchanged.
pub fn project_to_ball(v: &CVector, radius: f64) -> CVector {
    let n = v.norm();
    if n <= radius {
        v.clone()
    } else {
        v * C64::new(radius / n, 0.0)
    }
}

/// Projection onto `{x ≥ 0, Σx ≤ budget}` and the budget multiplier `2τ`
/// for the Lagrangian `Σ(x − c)² + κ(Σx − budget)`.
pub fn project_capped_simplex(centers: &[f64], budget: f64) -> (Vec<f64>, f64) {
    let clipped_sum: f64 = centers.iter().map(|c| c.max(0.0)).sum();
    if clipped_sum <= budget {
        return (centers.iter().map(|c| c.max(0.0)).collect(), 0.0);
    }
    // Σ max(c − τ, 0) = budget has a unique root τ > 0 found from the sorted
    // breakpoints.
    let mut sorted: Vec<f64> = centers.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut prefix = 0.0;
    let mut tau = 0.0;
    for (i, c) in sorted.iter().enumerate() {
        prefix += c;
        let t = (prefix - budget) / (i + 1) as f64;
        let next = sorted.get(i + 1).copied().unwrap_or(f64::NEG_INFINITY);
        if t >= next && t < *c {
            tau = t;
            break;
        }
    }
    (centers.iter().map(|c| (c - tau).max(0.0)).collect(), 2.0 * tau)
}
