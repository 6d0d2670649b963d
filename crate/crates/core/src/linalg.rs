//! Small dense helpers on top of nalgebra.

use nalgebra::{Cholesky, Dyn};

use crate::{CMatrix, CVector, C64};

/// Solves `(I + Σ a_i a_iᴴ) x = rhs` for a list of rank-one terms.
///
/// The system matrix is Hermitian positive definite, so Cholesky always
/// succeeds for finite inputs.
pub fn solve_identity_plus_gram(terms: &[&CVector], rhs: CVector) -> CVector {
    let n = rhs.len();
    let mut m = CMatrix::identity(n, n);
    for a in terms {
        m.ger(C64::new(1.0, 0.0), a, &a.conjugate(), C64::new(1.0, 0.0));
    }
    solve_hpd(m, rhs)
}

/// Solves `M x = rhs` for Hermitian positive definite `M`.
pub fn solve_hpd(m: CMatrix, rhs: CVector) -> CVector {
    match Cholesky::<C64, Dyn>::new(m.clone()) {
        Some(ch) => ch.solve(&rhs),
        None => m
            .lu()
            .solve(&rhs)
            .expect("identity-plus-PSD system is nonsingular"),
    }
}

/// Infinity norm over the moduli of the entries.
pub fn max_abs(v: &[C64]) -> f64 {
    v.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

/// `Σ |z|²` over the entries.
pub fn norm_sqr(v: &[C64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

/// Wraps an angle to `(-π, π]`.
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    let mut y = x.rem_euclid(2.0 * PI);
    if y > PI {
        y -= 2.0 * PI;
    }
    y
}
