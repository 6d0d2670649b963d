//! Exact minimizers of the sub-blocks visited by one inner sweep.
//!
//! Each function solves a small strongly convex problem: a proximal quadratic
//! centered at the current coupling targets, subject to the (linearized)
//! constraints owned by that block.  Multipliers are reported for the
//! Lagrangian `Σ (x − x°)² + Σ κ_i g_i(x)`.

pub mod interference;
pub mod linear;
pub mod position;
pub mod projection;
pub mod scalar;
pub mod spacing;
pub mod timing;
pub mod unit_modulus;

pub use interference::{update_interference_aux, InterferenceInput, InterferenceOutput};
pub use linear::{
    update_effective_channel, update_jam_vector, update_mu_tilde, update_precoder_aux,
    update_receive_combiner,
};
pub use position::{
    phase_matching_position, update_antenna_position, AntennaTerms, PairTerm, PhaseTerm,
};
pub use projection::{project_capped_simplex, project_to_ball};
pub use scalar::{
    update_compute_alloc, update_global_delay, update_offload_ratio, update_rate_slack,
    update_rate_var, RateSlackInput, RateSlackOutput,
};
pub use spacing::update_spacing_aux;
pub use timing::{
    update_rate_pair, update_time_bound, update_timing_aux, RatePairInput, RatePairOutput,
    TimeBoundInput, TimeBoundOutput, TimingInput, TimingOutput,
};
pub use unit_modulus::{unit_modulus_objective, update_unit_modulus, update_unit_modulus_weighted};
