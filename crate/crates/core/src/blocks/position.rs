//! Per-antenna position updates.
//!
//! With every other antenna fixed, the AL terms touching antenna `n` are
//!
//! `Σ_i |exp(j(w_i·p + o_i)) − c_i|² + Σ_j ‖p − t_j‖²`
//!
//! where `i` runs over the paths of every response matrix containing the
//! antenna (`c_i = B − κλ`) and `j` over the pair auxiliaries it belongs to.

use nalgebra::{Matrix2, Vector2};

use crate::linalg::wrap_angle;
use crate::scenario::Region;
use crate::{Position, C64};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseTerm {
    /// `(2π/λ)·(cosϑ cosψ, cosϑ sinψ)`
    pub wave: Vector2<f64>,
    /// Position-independent phase (height term).
    pub offset: f64,
    pub target: C64,
}

/// Pair term `‖p − target‖²`.
pub type PairTerm = Position;

#[derive(Clone, Debug, PartialEq)]
pub struct AntennaTerms {
    pub phases: Vec<PhaseTerm>,
    pub pairs: Vec<PairTerm>,
    pub region: Region,
}

impl AntennaTerms {
    /// The AL terms of this antenna at `p`.
    pub fn objective(&self, p: &Position) -> f64 {
        let phase: f64 = self
            .phases
            .iter()
            .map(|t| (C64::from_polar(1.0, t.wave.dot(p) + t.offset) - t.target).norm_sqr())
            .sum();
        phase + self.pairs.iter().map(|t| (p - t).norm_squared()).sum::<f64>()
    }

    /// Target angle of the position-dependent phase `w·p`: the principal
    /// angle of `c·e^{−jo}`, or its branch nearest `w·reference`.
    fn target_angle(t: &PhaseTerm, reference: Option<&Position>) -> f64 {
        let principal = (t.target * C64::from_polar(1.0, -t.offset)).arg();
        match reference {
            None => principal,
            Some(r) => {
                let at = t.wave.dot(r);
                at + wrap_angle(principal - at)
            }
        }
    }

    /// Phase-matching surrogate `Σ_i (w_i·p − θ_i)² + Σ_j ‖p − t_j‖²`.
    pub fn phase_matching_objective(&self, p: &Position, reference: Option<&Position>) -> f64 {
        let phase: f64 = self
            .phases
            .iter()
            .map(|t| (t.wave.dot(p) - Self::target_angle(t, reference)).powi(2))
            .sum();
        phase + self.pairs.iter().map(|t| (p - t).norm_squared()).sum::<f64>()
    }
}

fn quad_value(h: &Matrix2<f64>, g: &Vector2<f64>, p: &Position) -> f64 {
    0.5 * p.dot(&(h * p)) - g.dot(p)
}

/// Exact minimizer of `½pᵀHp − gᵀp` over the square `|x|, |y| ≤ half` for
/// symmetric PSD `H`: interior stationary point, then the four edges, then
/// the corners.
pub fn box_qp(h: &Matrix2<f64>, g: &Vector2<f64>, half: f64) -> Position {
    let mut cands: Vec<Position> = Vec::with_capacity(13);
    let det = h[(0, 0)] * h[(1, 1)] - h[(0, 1)] * h[(1, 0)];
    if det > 1e-14 * (h[(0, 0)] * h[(1, 1)]).max(f64::MIN_POSITIVE) {
        if let Some(inv) = h.try_inverse() {
            let p = inv * g;
            if p.x.abs() <= half && p.y.abs() <= half {
                cands.push(p);
            }
        }
    }
    for fixed in [-half, half] {
        // x fixed
        if h[(1, 1)] > 0.0 {
            let y = ((g.y - h[(1, 0)] * fixed) / h[(1, 1)]).clamp(-half, half);
            cands.push(Position::new(fixed, y));
        }
        // y fixed
        if h[(0, 0)] > 0.0 {
            let x = ((g.x - h[(0, 1)] * fixed) / h[(0, 0)]).clamp(-half, half);
            cands.push(Position::new(x, fixed));
        }
        cands.push(Position::new(fixed, -half));
        cands.push(Position::new(fixed, half));
    }
    cands
        .into_iter()
        .filter(|p| p.x.is_finite() && p.y.is_finite())
        .min_by(|a, b| quad_value(h, g, a).total_cmp(&quad_value(h, g, b)))
        .unwrap_or_else(Position::zeros)
}

/// Minimizer of the phase-matching surrogate over the region.
pub fn phase_matching_position(terms: &AntennaTerms, reference: Option<&Position>) -> Position {
    let mut h = Matrix2::zeros();
    let mut g = Vector2::zeros();
    for t in &terms.phases {
        h += 2.0 * t.wave * t.wave.transpose();
        g += 2.0 * t.wave * AntennaTerms::target_angle(t, reference);
    }
    for t in &terms.pairs {
        h += 2.0 * Matrix2::identity();
        g += 2.0 * t;
    }
    box_qp(&h, &g, terms.region.half_side)
}

/// One majorize-minimize step: each phase term is replaced by its quadratic
/// upper bound with curvature `2|c|` in the phase, tight at `p0`.
fn mm_step(terms: &AntennaTerms, p0: &Position) -> Position {
    let mut h = Matrix2::zeros();
    let mut g = Vector2::zeros();
    for t in &terms.phases {
        let r = t.target.norm();
        let phi = t.wave.dot(p0) + t.offset;
        let slope = 2.0 * r * (phi - t.target.arg()).sin();
        h += 2.0 * r * t.wave * t.wave.transpose();
        g += 2.0 * r * t.wave * t.wave.dot(p0) - slope * t.wave;
    }
    for t in &terms.pairs {
        h += 2.0 * Matrix2::identity();
        g += 2.0 * t;
    }
    box_qp(&h, &g, terms.region.half_side)
}

/// Descent step on the exact AL terms of one antenna.
///
/// Starts from the best of the current position and the two phase-matching
/// minimizers, then runs `mm_iters` majorize-minimize steps.  The result
/// never has a larger objective than `current`.
pub fn update_antenna_position(terms: &AntennaTerms, current: &Position, mm_iters: usize) -> Position {
    let current = terms.region.clamp(current);
    let starts = [
        current,
        phase_matching_position(terms, Some(&current)),
        phase_matching_position(terms, None),
    ];
    let mut best = starts[0];
    let mut best_val = terms.objective(&best);
    for s in &starts[1..] {
        let v = terms.objective(s);
        if v < best_val {
            best = *s;
            best_val = v;
        }
    }
    for _ in 0..mm_iters {
        let next = mm_step(terms, &best);
        let v = terms.objective(&next);
        if v < best_val {
            let moved = (next - best).norm();
            best = next;
            best_val = v;
            if moved <= 1e-15 {
                break;
            }
        } else {
            break;
        }
    }
    best
}
