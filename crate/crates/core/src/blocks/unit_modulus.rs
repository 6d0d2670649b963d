//! Entry-wise block coordinate descent over unit-modulus matrices for
//! `tr(Bᴴ E B D) − 2 Re tr(Bᴴ C)` with Hermitian PSD `E`, `D`.

use crate::{CMatrix, C64};

/// `tr(Bᴴ E B D) − 2 Re tr(Bᴴ C)`; `left = None` means `E = I`.
pub fn unit_modulus_objective(left: Option<&CMatrix>, d: &CMatrix, c: &CMatrix, b: &CMatrix) -> f64 {
    let eb = match left {
        Some(e) => e * b,
        None => b.clone(),
    };
    let quad = (b.adjoint() * eb * d).trace().re;
    quad - 2.0 * b.dotc(c).re
}

/// One or more cyclic sweeps with `E = I`.
pub fn update_unit_modulus(d: &CMatrix, c: &CMatrix, b_init: &CMatrix, sweeps: usize) -> CMatrix {
    update_unit_modulus_weighted(None, d, c, b_init, sweeps)
}

/// Cyclic entry updates `b_ij ← (C_ij − q_ij)/|C_ij − q_ij|`, where
/// `q_ij = (E B D)_ij − E_ii D_jj b_ij` collects every other entry's
/// contribution.  A zero numerator keeps the previous entry.
pub fn update_unit_modulus_weighted(
    left: Option<&CMatrix>,
    d: &CMatrix,
    c: &CMatrix,
    b_init: &CMatrix,
    sweeps: usize,
) -> CMatrix {
    let mut b = b_init.clone();
    let (rows, cols) = b.shape();
    // M = E B D is kept in sync with rank-one corrections.
    let mut m = match left {
        Some(e) => e * &b * d,
        None => &b * d,
    };
    for _ in 0..sweeps {
        for j in 0..cols {
            for i in 0..rows {
                let e_ii = left.map_or(C64::new(1.0, 0.0), |e| e[(i, i)]);
                let q = m[(i, j)] - e_ii * d[(j, j)] * b[(i, j)];
                let num = c[(i, j)] - q;
                let r = num.norm();
                if r == 0.0 || !r.is_finite() {
                    continue;
                }
                let new = num / r;
                let delta = new - b[(i, j)];
                if delta == C64::new(0.0, 0.0) {
                    continue;
                }
                b[(i, j)] = new;
                for a in 0..rows {
                    let ea = match left {
                        Some(e) => e[(a, i)],
                        None if a == i => C64::new(1.0, 0.0),
                        None => continue,
                    };
                    for bcol in 0..cols {
                        m[(a, bcol)] += ea * delta * d[(j, bcol)];
                    }
                }
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> CMatrix {
        let a = CMatrix::from_fn(n, n, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        &a * a.adjoint()
    }

    fn random_c(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| C64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
    }

    fn random_unit(rng: &mut ChaCha8Rng, r: usize, c: usize) -> CMatrix {
        CMatrix::from_fn(r, c, |_, _| C64::from_polar(1.0, rng.random_range(-3.2..3.2)))
    }

    #[test]
    fn identity_weight_aligns_with_c() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = random_c(&mut rng, 3, 4);
        let b0 = random_unit(&mut rng, 3, 4);
        let b = update_unit_modulus(&CMatrix::identity(4, 4), &c, &b0, 1);
        for (x, y) in b.iter().zip(c.iter()) {
            assert!((x - y / y.norm()).norm() < 1e-14);
        }
        let u = random_unit(&mut rng, 3, 4);
        let fixed = update_unit_modulus(&CMatrix::identity(4, 4), &u, &u, 1);
        assert!((fixed - u).norm() < 1e-14);
    }

    #[test]
    fn zero_numerator_keeps_entry() {
        let d = CMatrix::identity(1, 1);
        let c = CMatrix::zeros(1, 1);
        let b0 = CMatrix::from_element(1, 1, C64::from_polar(1.0, 0.7));
        assert_eq!(update_unit_modulus(&d, &c, &b0, 1), b0);
    }

    #[test]
    fn one_by_two_matches_phase_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let d = random_psd(&mut rng, 2);
            let c = random_c(&mut rng, 1, 2);
            let b0 = random_unit(&mut rng, 1, 2);
            let b = update_unit_modulus(&d, &c, &b0, 1);
            // each entry is the exact minimizer given the other: compare to a
            // 4096-point phase grid on the last updated entry
            let f = |bb: &CMatrix| unit_modulus_objective(None, &d, &c, bb);
            let got = f(&b);
            let mut best = f64::INFINITY;
            for t in 0..4096 {
                let mut trial = b.clone();
                trial[(0, 1)] = C64::from_polar(1.0, t as f64 * std::f64::consts::TAU / 4096.0);
                best = best.min(f(&trial));
            }
            assert!(got <= best + 1e-3, "{got} vs {best}");
        }
    }

    proptest! {
        #[test]
        fn sweep_never_increases_objective(seed in 0u64..10_000, rows in 1usize..4, cols in 1usize..5, weighted: bool) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = random_psd(&mut rng, cols);
            let e = random_psd(&mut rng, rows);
            let c = random_c(&mut rng, rows, cols);
            let b0 = random_unit(&mut rng, rows, cols);
            let left = weighted.then_some(&e);
            let before = unit_modulus_objective(left, &d, &c, &b0);
            let b = update_unit_modulus_weighted(left, &d, &c, &b0, 1);
            let after = unit_modulus_objective(left, &d, &c, &b);
            prop_assert!(after <= before + 1e-9 * (1.0 + before.abs()));
            for z in b.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
