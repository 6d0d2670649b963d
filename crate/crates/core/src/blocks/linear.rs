//! Unconstrained quadratic sub-blocks solved from their normal equations.

use crate::linalg::{solve_hpd, solve_identity_plus_gram};
use crate::{CMatrix, CVector, C64};

/// Minimizer of `‖x − center‖² + Σ_i |a_iᴴ x − t_i|²`.
pub fn solve_coupled(center: &CVector, couplings: &[(&CVector, C64)]) -> CVector {
    let mut rhs = center.clone();
    for (a, t) in couplings {
        rhs.axpy(*t, a, C64::new(1.0, 0.0));
    }
    let terms: Vec<&CVector> = couplings.iter().map(|(a, _)| *a).collect();
    solve_identity_plus_gram(&terms, rhs)
}

/// Combiner `f_k`: minimizer of `‖f − center‖² + Σ_i |fᴴ a_i − t_i|²`, where
/// the couplings are `(u_J, u_k + κλ)` and `(μ̃_{k'}, ũ_{k,k'} + κλ)`.
pub fn update_receive_combiner(center: &CVector, couplings: &[(&CVector, C64)]) -> CVector {
    let conj: Vec<(&CVector, C64)> = couplings.iter().map(|(a, t)| (*a, t.conj())).collect();
    solve_coupled(center, &conj)
}

/// `μ_k`: minimizer of `‖μ − center‖² + ‖G μ − target‖²`.
pub fn update_effective_channel(center: &CVector, g: &CMatrix, target: &CVector) -> CVector {
    let n = center.len();
    let m = CMatrix::identity(n, n) + g.adjoint() * g;
    solve_hpd(m, center + g.adjoint() * target)
}

/// `w̃_k`: minimizer of `‖B w̃ − mu_target‖² + ‖w̃ − center‖²`.
pub fn update_precoder_aux(b: &CMatrix, mu_target: &CVector, center: &CVector) -> CVector {
    update_effective_channel(center, b, mu_target)
}

/// `μ̃_{k'}`: minimizer of `‖μ̃ − center‖² + Σ_k |f_kᴴ μ̃ − t_k|²`.
pub fn update_mu_tilde(center: &CVector, couplings: &[(&CVector, C64)]) -> CVector {
    solve_coupled(center, couplings)
}

/// `u_J`: minimizer of `‖u_J − center‖² + Σ_k |f_kᴴ u_J − t_k|²`.
pub fn update_jam_vector(center: &CVector, couplings: &[(&CVector, C64)]) -> CVector {
    solve_coupled(center, couplings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn rv(rng: &mut ChaCha8Rng, n: usize) -> CVector {
        CVector::from_fn(n, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
    }

    #[test]
    fn combiner_examples() {
        let center = CVector::from_vec(vec![c(0.3, 0.1), c(-0.2, 0.5)]);
        let zero = CVector::zeros(2);
        assert_eq!(update_receive_combiner(&center, &[(&zero, c(1.0, 0.0))]), center);
        let e1 = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let f = update_receive_combiner(&zero, &[(&e1, c(1.0, 0.0))]);
        assert!((f - &e1 * c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn effective_channel_examples() {
        let center = CVector::from_vec(vec![c(0.3, 0.1), c(-0.2, 0.5)]);
        let g = CMatrix::zeros(3, 2);
        assert!((update_effective_channel(&center, &g, &CVector::zeros(3)) - &center).norm() < 1e-15);
        let one = CVector::from_element(1, c(1.0, 0.0));
        let mu = update_effective_channel(&one, &CMatrix::from_element(1, 1, c(1.0, 0.0)), &one);
        assert!((mu[0] - c(1.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn precoder_aux_fixed_point() {
        // orthonormal columns and consistent couplings
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = CMatrix::from_fn(4, 2, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .qr()
            .q();
        let w = rv(&mut rng, 2);
        let mu = &q * &w;
        assert!((update_precoder_aux(&q, &mu, &w) - &w).norm() < 1e-12);
    }

    #[test]
    fn jam_vector_without_coupling_is_center() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let center = rv(&mut rng, 5);
        let zero = CVector::zeros(5);
        assert!((update_jam_vector(&center, &[(&zero, c(2.0, 1.0))]) - &center).norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn coupled_gradient_vanishes(seed in 0u64..10_000, n in 1usize..8, m in 0usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let center = rv(&mut rng, n);
            let a: Vec<CVector> = (0..m).map(|_| rv(&mut rng, n)).collect();
            let t: Vec<C64> = (0..m).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let pairs: Vec<(&CVector, C64)> = a.iter().zip(&t).map(|(x, y)| (x, *y)).collect();
            let x = solve_coupled(&center, &pairs);
            let mut grad = &x - &center;
            for (ai, ti) in a.iter().zip(&t) {
                grad += ai * (ai.dotc(&x) - ti);
            }
            prop_assert!(grad.norm() <= 1e-10);
            let f = update_receive_combiner(&center, &pairs);
            let mut grad = &f - &center;
            for (ai, ti) in a.iter().zip(&t) {
                grad += ai * (f.dotc(ai) - ti).conj();
            }
            prop_assert!(grad.norm() <= 1e-10);
        }

        #[test]
        fn effective_channel_gradient_vanishes(seed in 0u64..10_000, l in 1usize..4, n in 1usize..8) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let center = rv(&mut rng, l);
            let target = rv(&mut rng, n);
            let g = CMatrix::from_fn(n, l, |_, _| c(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)));
            let mu = update_effective_channel(&center, &g, &target);
            let grad = (&mu - &center) + g.adjoint() * (&g * &mu - &target);
            prop_assert!(grad.norm() <= 1e-10 * (1.0 + g.norm().powi(2)));
        }
    }
}
