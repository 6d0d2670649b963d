//! The split problem: every primal variable and auxiliary copy, the coupling
//! residuals, the augmented-Lagrangian objective and the dual/penalty step.
//!
//! Internally everything is scaled so that quantities are O(1):
//!
//! - precoders are divided by `√P_k` (unit power budget),
//! - path gains are multiplied by `√P_k/σ` (UE links) or divided by `σ`
//!   (jammer link), so the noise power is 1,
//! - MEC allocations are divided by `Ψ_max` (unit budget),
//! - delays stay in seconds with per-UE loads `a = Δ/Ψ_max`, `b = Δ/B` and
//!   `c = Δ/Ψ₂`.
//!
//! SINR, rates and delays are invariant under this scaling.

use serde::{Deserialize, Serialize};

use crate::channel::{response_matrix, AntennaLayout, PathSet};
use crate::scenario::{Region, Scenario};
use crate::{CMatrix, CVector, Error, Position, Result, C64};

/// Normalized problem data derived from a [`Scenario`].
#[derive(Clone, Debug)]
pub struct Model {
    pub num_ues: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub wavelength: f64,
    pub bs_height: f64,
    pub ue_paths: Vec<PathSet>,
    pub rx_paths: Vec<PathSet>,
    pub jam_rx_paths: PathSet,
    /// Scaled path gains `g_k·√P_k/σ` of each UE link.
    pub ue_gains: Vec<CVector>,
    /// `diag(g̃/σ)·Ã_J·z`, the jamming signal before the BS array.
    pub jam_source: CVector,
    /// `Δ_k/Ψ_max` in seconds.
    pub offload_load: Vec<f64>,
    /// `Δ_k/B` in seconds.
    pub comm_load: Vec<f64>,
    /// `Δ_k/Ψ_{2,k}` in seconds.
    pub local_time: Vec<f64>,
    pub tx_region: Region,
    pub rx_region: Region,
    pub min_spacing: f64,
    /// Physical power budgets `P_k` (mW).
    pub power: Vec<f64>,
    pub mec_budget: f64,
}

impl Model {
    pub fn new(s: &Scenario) -> Self {
        let c = &s.config;
        let sigma = c.noise_power_mw.sqrt();
        let k = c.num_ues;
        let ue_gains = s
            .ue_paths
            .iter()
            .map(|p| {
                let scale = c.ue_power_mw.sqrt() / sigma;
                CVector::from_iterator(p.len(), p.gains().iter().map(|g| g * scale))
            })
            .collect();
        let jg = CVector::from_iterator(
            s.jam_rx_paths.len(),
            s.jam_rx_paths.gains().iter().map(|g| g / sigma),
        );
        let jam_source = (&s.jam_tx_response * &s.jam_signal).component_mul(&jg);
        let t = &s.tasks;
        Self {
            num_ues: k,
            tx_antennas: c.tx_antennas,
            rx_antennas: c.rx_antennas,
            wavelength: c.wavelength_m,
            bs_height: c.bs_height_m,
            ue_paths: s.ue_paths.clone(),
            rx_paths: s.rx_paths.clone(),
            jam_rx_paths: s.jam_rx_paths.clone(),
            ue_gains,
            jam_source,
            offload_load: t.task_bits.iter().map(|d| d / t.mec_budget).collect(),
            comm_load: t.task_bits.iter().map(|d| d / c.bandwidth_hz).collect(),
            local_time: t
                .task_bits
                .iter()
                .zip(&t.local_rate)
                .map(|(d, r)| d / r)
                .collect(),
            tx_region: c.tx_region(),
            rx_region: c.rx_region(),
            min_spacing: c.min_spacing_m,
            power: vec![c.ue_power_mw; k],
            mec_budget: t.mec_budget,
        }
    }

    /// `A(p_k)`, `L × N_t`.
    pub fn ue_response(&self, k: usize, positions: &[Position]) -> CMatrix {
        response_matrix(positions, 0.0, &self.ue_paths[k], self.wavelength)
    }

    /// Receive-side response of link `k`, `L × N_r`.
    pub fn bs_response(&self, k: usize, positions: &[Position]) -> CMatrix {
        response_matrix(positions, self.bs_height, &self.rx_paths[k], self.wavelength)
    }

    /// Receive-side response of the jammer link, `L̃ × N_r`.
    pub fn jam_response(&self, positions: &[Position]) -> CMatrix {
        response_matrix(positions, self.bs_height, &self.jam_rx_paths, self.wavelength)
    }

    /// `G_k = B_{r,k}ᴴ diag(g'_k)`, mapping path amplitudes to the BS array.
    pub fn path_to_array(&self, k: usize, bs_response: &CMatrix) -> CMatrix {
        let mut g = bs_response.adjoint();
        for (l, gain) in self.ue_gains[k].iter().enumerate() {
            for v in g.column_mut(l).iter_mut() {
                *v *= gain;
            }
        }
        g
    }

    /// Received signal vectors (per UE) and received jamming at the BS.
    pub fn received(&self, layout: &AntennaLayout, precoders: &[CVector]) -> (Vec<CVector>, CVector) {
        let signals = (0..self.num_ues)
            .map(|k| {
                let b = self.bs_response(k, &layout.bs_positions);
                let mu = self.ue_response(k, &layout.ue_positions[k]) * &precoders[k];
                self.path_to_array(k, &b) * mu
            })
            .collect();
        let jam = self.jam_response(&layout.bs_positions).adjoint() * &self.jam_source;
        (signals, jam)
    }

    /// SINR of every UE with normalized precoders and unit noise.
    pub fn sinr(&self, layout: &AntennaLayout, precoders: &[CVector], combiners: &[CVector]) -> Vec<f64> {
        let (rx, jam) = self.received(layout, precoders);
        (0..self.num_ues)
            .map(|k| {
                let f = &combiners[k];
                let fn2 = f.norm_squared();
                if fn2 == 0.0 {
                    return 0.0;
                }
                let interference: f64 = (0..self.num_ues)
                    .filter(|&j| j != k)
                    .map(|j| f.dotc(&rx[j]).norm_sqr())
                    .sum();
                f.dotc(&rx[k]).norm_sqr() / (interference + fn2 + f.dotc(&jam).norm_sqr())
            })
            .collect()
    }

    /// Per-UE delay in seconds from normalized physical variables.
    pub fn delays(&self, offload: &[f64], compute: &[f64], rates: &[f64]) -> Vec<f64> {
        (0..self.num_ues)
            .map(|k| {
                let d = offload[k];
                let local = (1.0 - d) * self.local_time[k];
                if d <= 0.0 {
                    local
                } else if compute[k] <= 0.0 || rates[k] <= 0.0 {
                    f64::INFINITY
                } else {
                    (d * (self.offload_load[k] / compute[k] + self.comm_load[k] / rates[k])).max(local)
                }
            })
            .collect()
    }
}

/// Unordered antenna pairs `(a, b)` with `a < b`.
pub fn pairs(n: usize) -> Vec<(usize, usize)> {
    (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect()
}

/// Every variable of the split problem, in normalized units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrimalState {
    pub gamma: f64,
    pub gamma_link: Vec<f64>,
    pub gamma_local: Vec<f64>,
    pub alpha1: Vec<f64>,
    pub alpha2: Vec<f64>,
    pub alpha1_aux: Vec<f64>,
    pub alpha2_aux: Vec<f64>,
    pub offload: Vec<f64>,
    pub offload_bar: Vec<f64>,
    pub offload_hat: Vec<f64>,
    pub offload_tilde: Vec<f64>,
    pub compute: Vec<f64>,
    pub compute_aux: Vec<f64>,
    pub rate: Vec<f64>,
    pub rate_aux: Vec<f64>,
    pub sinr: Vec<f64>,
    pub sinr_aux: Vec<f64>,
    /// `ũ_{k,k'}` copies of `f_kᴴ μ̃_{k'}`.
    pub interference: CMatrix,
    /// `u_k` copies of `f_kᴴ u_J`.
    pub jam_inner: Vec<C64>,
    pub precoder: Vec<CVector>,
    pub precoder_aux: Vec<CVector>,
    pub combiner: Vec<CVector>,
    pub combiner_aux: Vec<CVector>,
    /// `μ_k = B_k w̃_k`, length `L`.
    pub mu: Vec<CVector>,
    /// `μ̃_k = G_k μ_k`, length `N_r`.
    pub mu_tilde: Vec<CVector>,
    /// `u_J = B_Jᴴ·(jammer source)`, length `N_r`.
    pub jam_vector: CVector,
    pub ue_pairs: Vec<Vec<Position>>,
    pub bs_pairs: Vec<Position>,
    pub ue_response: Vec<CMatrix>,
    pub bs_response: Vec<CMatrix>,
    pub jam_response: CMatrix,
    pub layout: AntennaLayout,
}

impl PrimalState {
    /// Builds a state with every coupling satisfied exactly from physical
    /// variables (normalized precoders, combiners, offload ratios and MEC
    /// shares).  Rates and SINRs are evaluated from the channel; the delay
    /// variables are set to the resulting worst-case delay.
    pub fn consistent(
        model: &Model,
        layout: AntennaLayout,
        precoder: Vec<CVector>,
        combiner: Vec<CVector>,
        offload: Vec<f64>,
        compute: Vec<f64>,
    ) -> Result<Self> {
        let k = model.num_ues;
        let sinr = model.sinr(&layout, &precoder, &combiner);
        let rate: Vec<f64> = sinr.iter().map(|s| (1.0 + s).log2()).collect();
        let mut alpha1 = vec![0.0; k];
        let mut alpha2 = vec![0.0; k];
        let mut gamma = f64::NEG_INFINITY;
        for i in 0..k {
            if offload[i] > 0.0 && (compute[i] <= 0.0 || rate[i] <= 0.0) {
                return Err(Error::numeric(
                    "initialization",
                    format!("UE {i} offloads with zero rate or zero MEC share"),
                ));
            }
            alpha1[i] = offload[i] * model.offload_load[i] / compute[i].max(f64::MIN_POSITIVE);
            alpha2[i] = offload[i] * model.comm_load[i] / rate[i].max(f64::MIN_POSITIVE);
            let local = (1.0 - offload[i]) * model.local_time[i];
            gamma = gamma.max(alpha1[i] + alpha2[i]).max(local);
        }
        let ue_response: Vec<CMatrix> = (0..k)
            .map(|i| model.ue_response(i, &layout.ue_positions[i]))
            .collect();
        let bs_response: Vec<CMatrix> = (0..k)
            .map(|i| model.bs_response(i, &layout.bs_positions))
            .collect();
        let jam_response = model.jam_response(&layout.bs_positions);
        let mu: Vec<CVector> = (0..k).map(|i| &ue_response[i] * &precoder[i]).collect();
        let mu_tilde: Vec<CVector> = (0..k)
            .map(|i| model.path_to_array(i, &bs_response[i]) * &mu[i])
            .collect();
        let jam_vector = jam_response.adjoint() * &model.jam_source;
        let interference = CMatrix::from_fn(k, k, |a, b| combiner[a].dotc(&mu_tilde[b]));
        let jam_inner = (0..k).map(|i| combiner[i].dotc(&jam_vector)).collect();
        let ue_pairs = layout.ue_positions.iter().map(|p| pair_differences(p)).collect();
        let bs_pairs = pair_differences(&layout.bs_positions);
        Ok(Self {
            gamma,
            gamma_link: vec![gamma; k],
            gamma_local: vec![gamma; k],
            alpha1_aux: alpha1.clone(),
            alpha2_aux: alpha2.clone(),
            alpha1,
            alpha2,
            offload_bar: offload.clone(),
            offload_hat: offload.clone(),
            offload_tilde: offload.clone(),
            offload,
            compute_aux: compute.clone(),
            compute,
            rate_aux: rate.clone(),
            rate,
            sinr_aux: sinr.clone(),
            sinr,
            interference,
            jam_inner,
            precoder_aux: precoder.clone(),
            precoder,
            combiner_aux: combiner.clone(),
            combiner,
            mu,
            mu_tilde,
            jam_vector,
            ue_pairs,
            bs_pairs,
            ue_response,
            bs_response,
            jam_response,
            layout,
        })
    }

    pub fn num_ues(&self) -> usize {
        self.gamma_link.len()
    }
}

/// `p_a − p_b` for every unordered pair.
pub fn pair_differences(positions: &[Position]) -> Vec<Position> {
    pairs(positions.len())
        .into_iter()
        .map(|(a, b)| positions[a] - positions[b])
        .collect()
}

/// A residual-shaped value: residuals and their multipliers share one type.
pub trait Field: Sized {
    /// Largest entry modulus (vector entries count per coordinate).
    fn max_abs(&self) -> f64;
    /// `Σ |r + κλ|²` with `self = r`.
    fn shifted_norm_sqr(&self, dual: &Self, kappa: f64) -> f64;
    /// `self += scale·other`.
    fn add_scaled(&mut self, scale: f64, other: &Self);
    fn zeros_like(&self) -> Self;
}

impl Field for f64 {
    fn max_abs(&self) -> f64 {
        self.abs()
    }
    fn shifted_norm_sqr(&self, dual: &Self, kappa: f64) -> f64 {
        (self + kappa * dual).powi(2)
    }
    fn add_scaled(&mut self, scale: f64, other: &Self) {
        *self += scale * other;
    }
    fn zeros_like(&self) -> Self {
        0.0
    }
}

impl Field for C64 {
    fn max_abs(&self) -> f64 {
        self.norm()
    }
    fn shifted_norm_sqr(&self, dual: &Self, kappa: f64) -> f64 {
        (self + dual * kappa).norm_sqr()
    }
    fn add_scaled(&mut self, scale: f64, other: &Self) {
        *self += other * scale;
    }
    fn zeros_like(&self) -> Self {
        C64::new(0.0, 0.0)
    }
}

impl Field for Position {
    fn max_abs(&self) -> f64 {
        self.amax()
    }
    fn shifted_norm_sqr(&self, dual: &Self, kappa: f64) -> f64 {
        (self + dual * kappa).norm_squared()
    }
    fn add_scaled(&mut self, scale: f64, other: &Self) {
        *self += other * scale;
    }
    fn zeros_like(&self) -> Self {
        Position::zeros()
    }
}

macro_rules! dense_field {
    ($t:ty) => {
        impl Field for $t {
            fn max_abs(&self) -> f64 {
                self.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
            }
            fn shifted_norm_sqr(&self, dual: &Self, kappa: f64) -> f64 {
                self.iter()
                    .zip(dual.iter())
                    .map(|(r, l)| (r + l * kappa).norm_sqr())
                    .sum()
            }
            fn add_scaled(&mut self, scale: f64, other: &Self) {
                for (a, b) in self.iter_mut().zip(other.iter()) {
                    *a += b * scale;
                }
            }
            fn zeros_like(&self) -> Self {
                Self::zeros_generic(self.shape_generic().0, self.shape_generic().1)
            }
        }
    };
}

dense_field!(CVector);
dense_field!(CMatrix);

impl<T: Field> Field for Vec<T> {
    fn max_abs(&self) -> f64 {
        self.iter().fold(0.0_f64, |m, x| m.max(x.max_abs()))
    }
    fn shifted_norm_sqr(&self, dual: &Self, kappa: f64) -> f64 {
        self.iter()
            .zip(dual)
            .map(|(r, l)| r.shifted_norm_sqr(l, kappa))
            .sum()
    }
    fn add_scaled(&mut self, scale: f64, other: &Self) {
        for (a, b) in self.iter_mut().zip(other) {
            a.add_scaled(scale, b);
        }
    }
    fn zeros_like(&self) -> Self {
        self.iter().map(Field::zeros_like).collect()
    }
}

macro_rules! couplings {
    ($($(#[$doc:meta])* $name:ident : $ty:ty,)*) => {
        /// One entry per coupling equality; used both for residuals
        /// (`primal − copy`) and for their Lagrange multipliers.
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        pub struct Couplings {
            $($(#[$doc])* pub $name: $ty,)*
        }

        impl Couplings {
            /// Coupling names in declaration order.
            pub const NAMES: &'static [&'static str] = &[$(stringify!($name)),*];

            /// Largest entry modulus of each coupling.
            pub fn max_abs_by_name(&self) -> Vec<(&'static str, f64)> {
                vec![$((stringify!($name), self.$name.max_abs())),*]
            }
        }

        impl Field for Couplings {
            fn max_abs(&self) -> f64 {
                0.0_f64$(.max(self.$name.max_abs()))*
            }
            fn shifted_norm_sqr(&self, dual: &Self, kappa: f64) -> f64 {
                0.0 $(+ self.$name.shifted_norm_sqr(&dual.$name, kappa))*
            }
            fn add_scaled(&mut self, scale: f64, other: &Self) {
                $(self.$name.add_scaled(scale, &other.$name);)*
            }
            fn zeros_like(&self) -> Self {
                Self { $($name: self.$name.zeros_like(),)* }
            }
        }
    };
}

couplings! {
    /// `γ − γ_k`
    delay_link: Vec<f64>,
    /// `γ − γ̃_k`
    delay_local: Vec<f64>,
    /// `α₁ − α̃₁`
    offload_slack: Vec<f64>,
    /// `α₂ − α̃₂`
    rate_slack: Vec<f64>,
    /// `δ − δ̄`
    offload_bar: Vec<f64>,
    /// `δ − δ̂`
    offload_hat: Vec<f64>,
    /// `δ − δ̃`
    offload_tilde: Vec<f64>,
    /// `Ψ − Ψ̃`
    compute: Vec<f64>,
    /// `Γ − Γ̃`
    rate: Vec<f64>,
    /// `ν − ν̃`
    sinr: Vec<f64>,
    /// `ũ_{k,k'} − f_kᴴ μ̃_{k'}`
    interference: CMatrix,
    /// `μ_k − B_k w̃_k`
    mu: Vec<CVector>,
    /// `μ̃_k − G_k μ_k`
    mu_tilde: Vec<CVector>,
    /// `w_k − w̃_k`
    precoder: Vec<CVector>,
    /// `f_k − f̃_k`
    combiner: Vec<CVector>,
    /// `u_k − f_kᴴ u_J`
    jam_inner: Vec<C64>,
    /// `u_J − B_Jᴴ·(jammer source)`
    jam_vector: CVector,
    /// `p̃ − (p_a − p_b)` per UE array
    ue_pairs: Vec<Vec<Position>>,
    /// `p̃ − (p_a − p_b)` for the BS array
    bs_pairs: Vec<Position>,
    /// `A(p_k) − B_k`
    ue_response: Vec<CMatrix>,
    /// `A_k(p_r) − B_{r,k}`
    bs_response: Vec<CMatrix>,
    /// `A_J(p_r) − B_J`
    jam_response: CMatrix,
}

/// Lagrange multipliers, shaped like the residuals.
pub type DualState = Couplings;

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Every coupling residual of `primal`.
pub fn residuals(primal: &PrimalState, model: &Model) -> Couplings {
    let x = primal;
    let k = x.num_ues();
    let lay = &x.layout;
    let g = x.gamma;
    Couplings {
        delay_link: x.gamma_link.iter().map(|v| g - v).collect(),
        delay_local: x.gamma_local.iter().map(|v| g - v).collect(),
        offload_slack: sub(&x.alpha1, &x.alpha1_aux),
        rate_slack: sub(&x.alpha2, &x.alpha2_aux),
        offload_bar: sub(&x.offload, &x.offload_bar),
        offload_hat: sub(&x.offload, &x.offload_hat),
        offload_tilde: sub(&x.offload, &x.offload_tilde),
        compute: sub(&x.compute, &x.compute_aux),
        rate: sub(&x.rate, &x.rate_aux),
        sinr: sub(&x.sinr, &x.sinr_aux),
        interference: CMatrix::from_fn(k, k, |a, b| {
            x.interference[(a, b)] - x.combiner[a].dotc(&x.mu_tilde[b])
        }),
        mu: (0..k)
            .map(|i| &x.mu[i] - &x.ue_response[i] * &x.precoder_aux[i])
            .collect(),
        mu_tilde: (0..k)
            .map(|i| &x.mu_tilde[i] - model.path_to_array(i, &x.bs_response[i]) * &x.mu[i])
            .collect(),
        precoder: (0..k).map(|i| &x.precoder[i] - &x.precoder_aux[i]).collect(),
        combiner: (0..k).map(|i| &x.combiner[i] - &x.combiner_aux[i]).collect(),
        jam_inner: (0..k)
            .map(|i| x.jam_inner[i] - x.combiner[i].dotc(&x.jam_vector))
            .collect(),
        jam_vector: &x.jam_vector - x.jam_response.adjoint() * &model.jam_source,
        ue_pairs: (0..k)
            .map(|i| {
                let d = pair_differences(&lay.ue_positions[i]);
                x.ue_pairs[i].iter().zip(d).map(|(p, q)| p - q).collect()
            })
            .collect(),
        bs_pairs: x
            .bs_pairs
            .iter()
            .zip(pair_differences(&lay.bs_positions))
            .map(|(p, q)| p - q)
            .collect(),
        ue_response: (0..k)
            .map(|i| model.ue_response(i, &lay.ue_positions[i]) - &x.ue_response[i])
            .collect(),
        bs_response: (0..k)
            .map(|i| model.bs_response(i, &lay.bs_positions) - &x.bs_response[i])
            .collect(),
        jam_response: model.jam_response(&lay.bs_positions) - &x.jam_response,
    }
}

/// Infinity norm over all coupling residuals.
pub fn violation(primal: &PrimalState, model: &Model) -> f64 {
    residuals(primal, model).max_abs()
}

/// `γ + (1/2κ)·Σ ‖r + κλ‖²`.
pub fn al_objective(primal: &PrimalState, duals: &DualState, kappa: f64, model: &Model) -> f64 {
    al_from_residuals(primal.gamma, &residuals(primal, model), duals, kappa)
}

pub fn al_from_residuals(gamma: f64, residuals: &Couplings, duals: &DualState, kappa: f64) -> f64 {
    gamma + residuals.shifted_norm_sqr(duals, kappa) / (2.0 * kappa)
}

/// Penalty parameter and violation-threshold schedule of the outer loop.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PenaltySchedule {
    pub kappa: f64,
    pub shrink: f64,
    pub kappa_min: f64,
    pub eps2: f64,
    pub eps2_shrink: f64,
    pub eps1: f64,
}

impl Default for PenaltySchedule {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            shrink: 0.6,
            kappa_min: 1e-8,
            eps2: 0.1,
            eps2_shrink: 0.7,
            eps1: 1e-3,
        }
    }
}

impl PenaltySchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = self.shrink > 0.0
            && self.shrink < 1.0
            && self.eps2_shrink > 0.0
            && self.eps2_shrink < 1.0
            && self.kappa_min > 0.0
            && self.kappa >= self.kappa_min
            && self.eps2 > 0.0
            && self.eps1 > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid penalty schedule {self:?}")))
        }
    }
}

/// Which branch [`dual_or_penalty_step`] took.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OuterStep {
    Dual,
    Penalty,
}

/// Dual ascent when the violation is below `ε₂` (and `ε₂` shrinks),
/// otherwise the penalty parameter shrinks.
pub fn dual_or_penalty_step(
    primal: &PrimalState,
    duals: &DualState,
    schedule: &PenaltySchedule,
    model: &Model,
) -> (DualState, PenaltySchedule, OuterStep) {
    step_from_residuals(&residuals(primal, model), duals, schedule)
}

pub fn step_from_residuals(
    residuals: &Couplings,
    duals: &DualState,
    schedule: &PenaltySchedule,
) -> (DualState, PenaltySchedule, OuterStep) {
    let mut s = *schedule;
    let mut d = duals.clone();
    if residuals.max_abs() <= schedule.eps2 {
        d.add_scaled(1.0 / schedule.kappa, residuals);
        s.eps2 *= schedule.eps2_shrink;
        (d, s, OuterStep::Dual)
    } else {
        s.kappa = (schedule.kappa * schedule.shrink).max(schedule.kappa_min);
        (d, s, OuterStep::Penalty)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_scenario, SystemConfig, TaskProfile};
    use crate::solver::{initialize, SolverOptions};
    use proptest::prelude::*;

    fn fixture() -> (Model, PrimalState, DualState) {
        let cfg = SystemConfig {
            rx_antennas: 4,
            ..SystemConfig::default()
        };
        let s = generate_scenario(&cfg, &TaskProfile::reference(2), 11).unwrap();
        initialize(&s, &SolverOptions::default()).unwrap()
    }

    fn nonzero(r: &Couplings) -> Vec<(&'static str, f64)> {
        r.max_abs_by_name().into_iter().filter(|(_, v)| *v > 1e-12).collect()
    }

    #[test]
    fn consistent_state_has_zero_residuals() {
        let (m, x, y) = fixture();
        assert!(violation(&x, &m) < 1e-12);
        assert!((al_objective(&x, &y, 0.5, &m) - x.gamma).abs() < 1e-12);
    }

    #[test]
    fn single_perturbation_hits_single_residual() {
        let (m, x, _) = fixture();
        let eps = 0.3;
        let cases: Vec<(&str, Box<dyn Fn(&mut PrimalState)>)> = vec![
            ("offload_slack", Box::new(move |x| x.alpha1_aux[0] += eps)),
            ("rate", Box::new(move |x| x.rate_aux[1] += eps)),
            ("interference", Box::new(move |x| x.interference[(0, 1)] += C64::new(0.0, eps))),
            ("jam_inner", Box::new(move |x| x.jam_inner[1] -= eps)),
            ("ue_pairs", Box::new(move |x| x.ue_pairs[1][2].y += eps)),
            ("combiner", Box::new(move |x| x.combiner_aux[0][1] += eps)),
            ("delay_local", Box::new(move |x| x.gamma_local[0] += eps)),
        ];
        for (name, perturb) in cases {
            let mut p = x.clone();
            perturb(&mut p);
            let r = residuals(&p, &m);
            let hit = nonzero(&r);
            assert_eq!(hit.len(), 1, "{name}: {hit:?}");
            assert_eq!(hit[0].0, name);
            assert!((hit[0].1 - eps).abs() < 1e-12);
            assert!((violation(&p, &m) - eps).abs() < 1e-12);
        }
    }

    #[test]
    fn residuals_match_defining_expressions() {
        let (m, mut x, _) = fixture();
        x.mu[0][1] += C64::new(0.2, -0.1);
        x.precoder_aux[1][0] += C64::new(-0.3, 0.0);
        x.layout.bs_positions[2].x += 0.01;
        let r = residuals(&x, &m);
        let mu = &x.mu[0] - &x.ue_response[0] * &x.precoder_aux[0];
        assert!((&r.mu[0] - mu).norm() < 1e-14);
        let mt = &x.mu_tilde[1] - m.path_to_array(1, &x.bs_response[1]) * &x.mu[1];
        assert!((&r.mu_tilde[1] - mt).norm() < 1e-14);
        let br = m.bs_response(0, &x.layout.bs_positions) - &x.bs_response[0];
        assert!((&r.bs_response[0] - br).norm() < 1e-14);
        assert!(r.bs_response[0].column(2).norm() > 1e-3);
        assert!(r.bs_response[0].column(1).norm() < 1e-14);
        let d = x.layout.bs_positions[0] - x.layout.bs_positions[2];
        let j = pairs(x.layout.bs_positions.len()).iter().position(|&p| p == (0, 2)).unwrap();
        assert!((r.bs_pairs[j] - (x.bs_pairs[j] - d)).norm() < 1e-14);
    }

    #[test]
    fn multipliers_alone_add_half_kappa_norm() {
        let (m, x, mut y) = fixture();
        y.delay_link[0] = 0.5;
        y.mu[1][0] = C64::new(0.3, 0.4);
        let kappa = 0.8;
        let expected = x.gamma + kappa / 2.0 * (0.25 + 0.25);
        assert!((al_objective(&x, &y, kappa, &m) - expected).abs() < 1e-12);
    }

    #[test]
    fn dual_step_examples() {
        let (m, x, y) = fixture();
        let s = PenaltySchedule::default();
        let (ny, ns, step) = dual_or_penalty_step(&x, &y, &s, &m);
        assert_eq!(step, OuterStep::Dual);
        assert_eq!(ny, y);
        assert!((ns.eps2 - 0.07).abs() < 1e-15);
        assert_eq!(ns.kappa, 2.0);

        let mut p = x.clone();
        p.sinr_aux[0] -= 1.0;
        let (ny, ns, step) = dual_or_penalty_step(&p, &y, &s, &m);
        assert_eq!(step, OuterStep::Penalty);
        assert_eq!(ny, y);
        assert!((ns.kappa - 1.2).abs() < 1e-15);
        assert_eq!(ns.eps2, 0.1);

        let mut p = x.clone();
        p.rate_aux[1] -= 0.04;
        let s1 = PenaltySchedule { kappa: 1.0, ..s };
        let (ny, _, step) = dual_or_penalty_step(&p, &y, &s1, &m);
        assert_eq!(step, OuterStep::Dual);
        assert!((ny.rate[1] - 0.04).abs() < 1e-15);
        // duals never feed residuals
        assert_eq!(residuals(&p, &m), residuals(&p, &m));
    }

    #[test]
    fn kappa_floor_holds() {
        let (m, mut x, y) = fixture();
        x.gamma_link[0] += 5.0;
        let s = PenaltySchedule { kappa: 1e-8, ..PenaltySchedule::default() };
        let (_, ns, _) = dual_or_penalty_step(&x, &y, &s, &m);
        assert_eq!(ns.kappa, 1e-8);
    }

    proptest! {
        #[test]
        fn penalty_is_nonnegative_and_monotone(
            da in -1.0..1.0f64,
            db in -1.0..1.0f64,
            kappa in 1e-3..10.0f64,
            grow in 1.01..3.0f64,
        ) {
            let (m, mut x, y) = fixture();
            x.alpha2_aux[0] += da;
            x.offload_hat[1] += db;
            let gap = al_objective(&x, &y, kappa, &m) - x.gamma;
            prop_assert!(gap >= 0.0);
            prop_assert_eq!(gap == 0.0, violation(&x, &m) == 0.0);
            if da != 0.0 {
                let mut z = x.clone();
                z.alpha2_aux[0] += da * (grow - 1.0);
                prop_assert!(al_objective(&z, &y, kappa, &m) > al_objective(&x, &y, kappa, &m));
            }
        }
    }
}
