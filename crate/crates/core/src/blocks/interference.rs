//! SINR auxiliaries of one UE: the row `ũ_{k,·}`, `f̃_k`, `ν̃_k` and `u_k` under
//! the linearized SINR constraint
//!
//! `Σ_{k'≠k}|ũ_{k,k'}|² + σ²‖f̃_k‖² + |u_k|² − 2Re(ũ⁰*ũ_{k,k})/ν̃⁰ + |ũ⁰|²ν̃/(ν̃⁰)² ≤ 0`
//!
//! where `(ũ⁰, ν̃⁰)` is the anchor.  Given the multiplier `κ₆` every variable
//! has a closed form, and the constraint value is decreasing in `κ₆`.

use crate::{CVector, Error, Result, C64};

/// Lower bound kept on `ν̃` so the next anchor stays positive.
pub const SINR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct InterferenceInput {
    pub own: usize,
    /// Proximal centers of `ũ_{k,k'}` for every `k'`.
    pub cross_centers: Vec<C64>,
    pub sinr_center: f64,
    pub jam_center: C64,
    /// Proximal center of the receive combiner copy `f̃_k`.
    pub combiner_center: CVector,
    pub noise_power: f64,
    pub anchor_signal: C64,
    pub anchor_sinr: f64,
    pub sinr_floor: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InterferenceOutput {
    pub cross: Vec<C64>,
    pub sinr_aux: f64,
    pub jam_inner: C64,
    pub combiner_aux: CVector,
    pub multiplier: f64,
}

impl InterferenceInput {
    /// Linearized SINR constraint value at `(cross, f̃, ν̃, u)`.
    pub fn constraint(&self, cross: &[C64], combiner: &CVector, sinr_aux: f64, jam_inner: C64) -> f64 {
        let others: f64 = cross
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != self.own)
            .map(|(_, z)| z.norm_sqr())
            .sum();
        let a = self.anchor_signal;
        let v0 = self.anchor_sinr;
        others + self.noise_power * combiner.norm_squared() + jam_inner.norm_sqr() - 2.0 * (a.conj() * cross[self.own]).re / v0
            + a.norm_sqr() * sinr_aux / (v0 * v0)
    }

    pub fn objective(&self, out: &InterferenceOutput) -> f64 {
        out.cross
            .iter()
            .zip(&self.cross_centers)
            .map(|(x, c)| (x - c).norm_sqr())
            .sum::<f64>()
            + (out.sinr_aux - self.sinr_center).powi(2)
            + (out.jam_inner - self.jam_center).norm_sqr()
            + (&out.combiner_aux - &self.combiner_center).norm_squared()
    }

    fn at(&self, mu: f64) -> InterferenceOutput {
        let a = self.anchor_signal;
        let v0 = self.anchor_sinr;
        let cross = self
            .cross_centers
            .iter()
            .enumerate()
            .map(|(j, c)| {
                if j == self.own {
                    c + a * (mu / v0)
                } else {
                    c / (1.0 + mu)
                }
            })
            .collect();
        InterferenceOutput {
            cross,
            sinr_aux: (self.sinr_center - mu * a.norm_sqr() / (2.0 * v0 * v0)).max(self.sinr_floor),
            jam_inner: self.jam_center / (1.0 + mu),
            combiner_aux: self.combiner_center.unscale(1.0 + mu * self.noise_power),
            multiplier: mu,
        }
    }

    fn value(&self, out: &InterferenceOutput) -> f64 {
        self.constraint(&out.cross, &out.combiner_aux, out.sinr_aux, out.jam_inner)
    }
}

/// Closed forms at `κ₆ = 0` when they satisfy the constraint, otherwise the
/// root of the constraint value in `κ₆` by bracketed bisection.
pub fn update_interference_aux(input: &InterferenceInput) -> Result<InterferenceOutput> {
    if !(input.anchor_sinr > 0.0) {
        return Err(Error::numeric(
            "interference auxiliaries",
            format!("SINR anchor must be positive, got {}", input.anchor_sinr),
        ));
    }
    let free = input.at(0.0);
    if input.value(&free) <= 0.0 {
        return Ok(free);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while input.value(&input.at(hi)) > 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 60 {
            return Err(Error::numeric(
                "interference auxiliaries",
                "no sign change of the SINR constraint after 60 doublings",
            ));
        }
    }
    let mut out = input.at(hi);
    for _ in 0..400 {
        let q = input.value(&out);
        if q <= 0.0 && q.abs() * hi.max(1.0) <= 1e-10 {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let trial = input.at(mid);
        if input.value(&trial) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            out = trial;
        }
    }
    Ok(out)
}
