//! Scalar sub-blocks: global delay, offload ratio, rate slacks, MEC shares
//! and the rate variable.

use super::projection::project_capped_simplex;
use crate::{Error, Result};

/// Minimizer of `γ + (1/2κ)Σ_k[(γ − c_k)² + (γ − c̃_k)²]` with centers
/// `c_k = γ_k − κλ_k`, `c̃_k = γ̃_k − κλ̃_k`:
/// `γ = (Σc_k + Σc̃_k − κ)/(2K)`.
pub fn update_global_delay(
    gamma_link: &[f64],
    gamma_local: &[f64],
    dual_link: &[f64],
    dual_local: &[f64],
    kappa: f64,
) -> f64 {
    let k = gamma_link.len() as f64;
    let s: f64 = gamma_link
        .iter()
        .zip(dual_link)
        .chain(gamma_local.iter().zip(dual_local))
        .map(|(g, l)| g - kappa * l)
        .sum();
    (s - kappa) / (2.0 * k)
}

/// Mean of the three centers `x − κλ`, clamped to `[0, 1]`.
pub fn update_offload_ratio(copies: [f64; 3], duals: [f64; 3], kappa: f64) -> f64 {
    let m = copies
        .iter()
        .zip(&duals)
        .map(|(x, l)| x - kappa * l)
        .sum::<f64>()
        / 3.0;
    m.clamp(0.0, 1.0)
}

/// MEC shares: projection of `Ψ̃ − κλ` onto `{Ψ ≥ 0, ΣΨ ≤ budget}`.
/// Returns the shares and the budget multiplier.
pub fn update_compute_alloc(compute_aux: &[f64], duals: &[f64], kappa: f64, budget: f64) -> (Vec<f64>, f64) {
    let centers: Vec<f64> = compute_aux
        .iter()
        .zip(duals)
        .map(|(x, l)| x - kappa * l)
        .collect();
    project_capped_simplex(&centers, budget)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSlackInput {
    /// `α̃₁ − κλ_{α₁}`
    pub alpha1_center: f64,
    /// `α̃₂ − κλ_{α₂}`
    pub alpha2_center: f64,
    /// `ν̃ − κλ_ν`
    pub sinr_center: f64,
    pub offload_bar: f64,
    pub compute_aux: f64,
    pub offload_tilde: f64,
    pub rate: f64,
    pub rate_aux: f64,
    pub offload_load: f64,
    pub comm_load: f64,
    /// AM-GM weight of the offload-time bound.
    pub offload_scale: f64,
    /// AM-GM weight of the transmission-time bound.
    pub rate_scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateSlackOutput {
    pub alpha1: f64,
    pub alpha2: f64,
    pub sinr: f64,
    pub multipliers: [f64; 3],
}

/// Lower bound on `2α₁` implied by the offload-time constraint.
pub fn offload_bound(delta_bar: f64, compute: f64, load: f64, scale: f64) -> f64 {
    scale * delta_bar * delta_bar + load * load / (scale * compute * compute)
}

/// Each slack is the larger of its center and its lower bound:
/// `α₁ ≥ (s₁δ̄² + a²/(s₁Ψ̃²))/2`, `α₂ ≥ (s₂δ̃² + b²/(s₂Γ²))/2`,
/// `ν ≥ 2^Γ̃ − 1`.
pub fn update_rate_slack(input: &RateSlackInput) -> RateSlackOutput {
    let i = input;
    let b1 = offload_bound(i.offload_bar, i.compute_aux, i.offload_load, i.offload_scale) / 2.0;
    let b2 = offload_bound(i.offload_tilde, i.rate, i.comm_load, i.rate_scale) / 2.0;
    let b3 = i.rate_aux.exp2() - 1.0;
    let pick = |c: f64, b: f64| (c.max(b), 2.0 * (b - c).max(0.0));
    let (alpha1, k7) = pick(i.alpha1_center, b1);
    let (alpha2, k8) = pick(i.alpha2_center, b2);
    let (sinr, k9) = pick(i.sinr_center, b3);
    RateSlackOutput {
        alpha1,
        alpha2,
        sinr,
        multipliers: [k7, k8, k9],
    }
}

/// Projection of `center` onto `Γ ≥ b/√(s₂(2α₂ − s₂δ̃²))`; returns `Γ` and the
/// multiplier of `s₂δ̃² + b²/(s₂Γ²) − 2α₂ ≤ 0`.
pub fn update_rate_var(
    center: f64,
    comm_load: f64,
    offload_tilde: f64,
    alpha2: f64,
    rate_scale: f64,
) -> Result<(f64, f64)> {
    let room = 2.0 * alpha2 - rate_scale * offload_tilde * offload_tilde;
    if !(room > 0.0) {
        return Err(Error::numeric(
            "rate variable",
            format!("no rate satisfies the transmission-time bound (2α₂ − s₂δ̃² = {room})"),
        ));
    }
    let bound = comm_load / (rate_scale * room).sqrt();
    if center >= bound {
        Ok((center, 0.0))
    } else {
        let kappa = (bound - center) * rate_scale * bound.powi(3) / (comm_load * comm_load);
        Ok((bound, kappa))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn global_delay_examples() {
        // with the penalty weight κ the stationary point sits κ/(2·2K) below the mean
        let kappa = 0.4;
        let g = update_global_delay(&[3.0], &[3.0], &[0.0], &[0.0], kappa);
        assert!((g - (3.0 - kappa / 2.0)).abs() < 1e-15);
        let g = update_global_delay(&[3.0; 2], &[3.0; 2], &[0.0; 2], &[0.0; 2], 1e-12);
        assert!((g - 3.0).abs() < 1e-12);
    }

    #[test]
    fn offload_examples() {
        assert_eq!(update_offload_ratio([0.5; 3], [0.0; 3], 1.0), 0.5);
        assert_eq!(update_offload_ratio([1.4; 3], [0.0; 3], 1.0), 1.0);
        assert_eq!(update_offload_ratio([-0.2; 3], [0.0; 3], 1.0), 0.0);
    }

    #[test]
    fn compute_alloc_example() {
        let (x, k) = update_compute_alloc(&[0.6e8, 0.6e8], &[0.0, 0.0], 1.0, 1e8);
        assert!((x[0] - 0.5e8).abs() < 1e-6 && (x[1] - 0.5e8).abs() < 1e-6);
        assert!((k - 0.2e8).abs() < 1e-6);
        let (x, k) = update_compute_alloc(&[0.3, 0.2], &[0.0, 0.0], 1.0, 1.0);
        assert_eq!((x, k), (vec![0.3, 0.2], 0.0));
    }

    #[test]
    fn rate_var_examples() {
        let b = 1e7 / 5e7;
        let (g, k) = update_rate_var(0.01, b, 0.0, 2.0, 1.0).unwrap();
        assert!((g - 0.1).abs() < 1e-15);
        assert!(k > 0.0);
        assert_eq!(update_rate_var(0.5, b, 0.0, 2.0, 1.0).unwrap(), (0.5, 0.0));
        assert!(matches!(
            update_rate_var(0.5, b, 1.0, 0.25, 1.0),
            Err(Error::NumericFailure { .. })
        ));
    }

    fn slack_input(c: f64) -> RateSlackInput {
        RateSlackInput {
            alpha1_center: c,
            alpha2_center: c,
            sinr_center: c * 100.0,
            offload_bar: 0.5,
            compute_aux: 0.5,
            offload_tilde: 0.5,
            rate: 4.0,
            rate_aux: 4.0,
            offload_load: 0.1,
            comm_load: 0.2,
            offload_scale: 1.0,
            rate_scale: 1.0,
        }
    }

    #[test]
    fn rate_slack_examples() {
        let out = update_rate_slack(&slack_input(10.0));
        assert_eq!(out.multipliers, [0.0; 3]);
        assert_eq!((out.alpha1, out.alpha2, out.sinr), (10.0, 10.0, 1000.0));
        let out = update_rate_slack(&slack_input(0.0));
        assert!((out.alpha1 - (0.25 + 0.01 / 0.25) / 2.0).abs() < 1e-15);
        assert!(out.multipliers.iter().all(|&m| m > 0.0));
        assert!((out.sinr - 15.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn global_delay_matches_grid(c in prop::collection::vec(0.0..3.0f64, 4), kappa in 0.01..2.0f64) {
            let (a, b) = c.split_at(2);
            let g = update_global_delay(a, b, &[0.0; 2], &[0.0; 2], kappa);
            let obj = |x: f64| x + c.iter().map(|ci| (x - ci).powi(2)).sum::<f64>() / (2.0 * kappa);
            let best = (0..=100_000).map(|i| -2.0 + 6.0 * i as f64 / 1e5).map(obj).fold(f64::INFINITY, f64::min);
            prop_assert!(obj(g) <= best + 1e-9);
        }

        #[test]
        fn offload_matches_grid(c in prop::collection::vec(-1.0..2.0f64, 3), l in prop::collection::vec(-1.0..1.0f64, 3), kappa in 0.1..2.0f64) {
            let d = update_offload_ratio([c[0], c[1], c[2]], [l[0], l[1], l[2]], kappa);
            let eps = |x: f64| (0..3).map(|i| (x - c[i] + kappa * l[i]).powi(2)).sum::<f64>();
            let best = (0..=100_000).map(|i| i as f64 / 1e5).map(eps).fold(f64::INFINITY, f64::min);
            prop_assert!(eps(d) <= best + 1e-9);
        }

        #[test]
        fn rate_var_matches_grid(center in 0.0..1.0f64, dt in -0.5..0.5f64, a2 in 0.2..2.0f64, s in 0.5..2.0f64) {
            prop_assume!(2.0 * a2 - s * dt * dt > 1e-3);
            let b = 0.2;
            let (g, k) = update_rate_var(center, b, dt, a2, s).unwrap();
            let cons = |x: f64| s * dt * dt + b * b / (s * x * x) - 2.0 * a2;
            prop_assert!(cons(g) <= 1e-12);
            prop_assert!(k >= 0.0 && (k * cons(g)).abs() <= 1e-8);
            let best = (1..=100_000).map(|i| 5.0 * i as f64 / 1e5).filter(|&x| cons(x) <= 0.0)
                .map(|x| (x - center).powi(2)).fold(f64::INFINITY, f64::min);
            prop_assert!((g - center).powi(2) <= best + 1e-9);
        }
    }
}
