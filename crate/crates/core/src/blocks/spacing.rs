use crate::Position;

/// Projects `center` onto the half-plane `n·p̃ ≥ d` with `n = anchor/‖anchor‖`,
/// the supporting-hyperplane restriction of `‖p̃‖ ≥ d` at the anchor.
///
/// Returns the projection and the multiplier of `d − n·p̃ ≤ 0`.
pub fn update_spacing_aux(center: &Position, anchor: &Position, d: f64) -> (Position, f64) {
    let norm = anchor.norm();
    let n = if norm > 0.0 {
        anchor / norm
    } else {
        Position::new(1.0, 0.0)
    };
    let gap = d - n.dot(center);
    if gap <= 0.0 {
        (*center, 0.0)
    } else {
        (center + n * gap, 2.0 * gap)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn examples() {
        let (p, k) = update_spacing_aux(&Position::zeros(), &Position::new(1.0, 0.0), 0.05);
        assert!((p - Position::new(0.05, 0.0)).norm() < 1e-15);
        assert!(k > 0.0);
        let c = Position::new(0.2, 0.1);
        assert_eq!(update_spacing_aux(&c, &Position::new(1.0, 1.0), 0.05), (c, 0.0));
    }

    proptest! {
        #[test]
        fn equals_half_plane_projection(cx in -1.0..1.0f64, cy in -1.0..1.0f64, ax in -1.0..1.0f64, ay in -1.0..1.0f64, d in 0.01..0.5f64) {
            let anchor = Position::new(ax, ay);
            prop_assume!(anchor.norm() > 1e-3);
            let c = Position::new(cx, cy);
            let (p, k) = update_spacing_aux(&c, &anchor, d);
            let n = anchor.normalize();
            prop_assert!(n.dot(&p) >= d - 1e-12);
            prop_assert!(k >= 0.0);
            prop_assert!((k * (d - n.dot(&p))).abs() <= 1e-8);
            // stationarity: 2(p − c) = κ n
            prop_assert!((2.0 * (p - c) - n * k).norm() < 1e-12);
        }
    }
}
