//! Penalty-dual outer loop around block-coordinate inner sweeps.

use std::fmt;
use std::str::FromStr;

use nalgebra::SymmetricEigen;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::al::{
    al_from_residuals, pair_differences, pairs, residuals, step_from_residuals, DualState, Field, Model,
    PenaltySchedule, PrimalState,
};
use crate::blocks::interference::SINR_FLOOR;
use crate::blocks::{
    project_to_ball, update_antenna_position, update_compute_alloc, update_effective_channel,
    update_global_delay, update_interference_aux, update_jam_vector, update_mu_tilde,
    update_offload_ratio, update_precoder_aux, update_rate_slack, update_rate_var,
    update_receive_combiner, update_spacing_aux, update_timing_aux, update_time_bound, update_rate_pair, update_unit_modulus_weighted,
    AntennaTerms, InterferenceInput, PhaseTerm, RatePairInput, RateSlackInput, TimeBoundInput, TimingInput,
};
use crate::blocks::timing::TimingDuals;
use crate::channel::AntennaLayout;
use crate::linalg::solve_hpd;
use crate::scenario::{delay_objective, validate_solution, Scenario, Solution, SPACING_TOL};
use crate::{CMatrix, CVector, Error, Position, Result, C64};

/// Which variables the solver may move.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// UE and BS antenna positions are optimized.
    FullMa,
    /// All antennas stay on their initial grid.
    Fpa,
    /// Only the BS antennas move.
    ReceiveOnlyMa,
    /// No offloading: every task is computed locally.
    LocalOnly,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::FullMa, Mode::Fpa, Mode::ReceiveOnlyMa, Mode::LocalOnly];

    pub fn name(self) -> &'static str {
        match self {
            Mode::FullMa => "full-ma",
            Mode::Fpa => "fpa",
            Mode::ReceiveOnlyMa => "receive-only-ma",
            Mode::LocalOnly => "local-only",
        }
    }

    fn moves_ues(self) -> bool {
        self == Mode::FullMa
    }

    fn moves_bs(self) -> bool {
        matches!(self, Mode::FullMa | Mode::ReceiveOnlyMa)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidConfig(format!(
                    "unknown mode '{s}' (expected one of full-ma, fpa, receive-only-ma, local-only)"
                ))
            })
    }
}

/// Starting antenna layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialLayout {
    /// Centered grids with spacing `min(λ/2, side/(cols−1))`.
    Grid,
    /// Uniform positions with min-distance rejection, seeded by `seed`.
    Random,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_outer: usize,
    pub max_inner: usize,
    /// Relative AL change that ends the inner loop.
    pub inner_tol: f64,
    /// Coupling violation required for convergence.
    pub violation_tol: f64,
    pub schedule: PenaltySchedule,
    pub mode: Mode,
    pub seed: u64,
    pub initial_layout: InitialLayout,
    /// Cyclic passes of the unit-modulus update per sweep.
    pub unit_modulus_sweeps: usize,
    /// Majorize-minimize steps per antenna position update.
    pub position_mm_iters: usize,
    /// Independent runs per solve: the configured initial layout plus
    /// `starts − 1` random layouts.  The best feasible result is kept.
    pub starts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_outer: 200,
            max_inner: 50,
            inner_tol: 1e-4,
            violation_tol: 1e-5,
            schedule: PenaltySchedule::default(),
            mode: Mode::FullMa,
            seed: 0,
            initial_layout: InitialLayout::Grid,
            unit_modulus_sweeps: 1,
            position_mm_iters: 10,
            starts: 1,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.max_outer == 0 || self.max_inner == 0 || self.unit_modulus_sweeps == 0 || self.starts == 0 {
            return Err(Error::InvalidConfig("iteration counts must be at least 1".into()));
        }
        if !(self.inner_tol > 0.0 && self.violation_tol > 0.0) {
            return Err(Error::InvalidConfig("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// One outer iteration.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub inner_iters: usize,
    pub al_objective: f64,
    pub gamma: f64,
    pub max_delay: f64,
    pub violation: f64,
    pub kappa: f64,
    pub eps2: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    pub rows: Vec<TraceRow>,
}

impl ConvergenceTrace {
    pub const HEADER: &'static str =
        "outer_iter,inner_iters,al_objective,gamma,max_delay,violation,kappa,eps2";

    pub fn to_csv(&self) -> String {
        let mut s = String::from(Self::HEADER);
        s.push('\n');
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                r.outer_iter, r.inner_iters, r.al_objective, r.gamma, r.max_delay, r.violation, r.kappa, r.eps2
            ));
        }
        s
    }
}

/// Linearization data, refreshed once per sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct Anchors {
    /// AM-GM weights of the offload-time bounds.
    pub offload_scale: Vec<f64>,
    /// AM-GM weights of the transmission-time bounds.
    pub rate_scale: Vec<f64>,
    /// `ũ_{k,k}` at the anchor.
    pub signal: Vec<C64>,
    /// `ν̃_k` at the anchor.
    pub sinr_aux: Vec<f64>,
    pub ue_pairs: Vec<Vec<Position>>,
    pub bs_pairs: Vec<Position>,
}

const SCALE_MIN: f64 = 1e-8;
const SCALE_MAX: f64 = 1e8;

/// AM-GM weight for `x·y ≤ (s x² + y²/s)/2`: the tight value `y/|x|`
/// (clamped), unless `previous` gives a smaller bound.
fn refresh_scale(x: f64, y: f64, previous: Option<f64>) -> f64 {
    let bound = |s: f64| s * x * x + y * y / s;
    let tight = if x.abs() > 0.0 {
        (y / x.abs()).clamp(SCALE_MIN, SCALE_MAX)
    } else {
        SCALE_MAX
    };
    match previous {
        Some(p) if bound(p) < bound(tight) => p,
        _ => tight,
    }
}

fn pair_anchor(current: &Position, fallback: &Position) -> Position {
    if current.norm() > 0.0 {
        *current
    } else if fallback.norm() > 0.0 {
        *fallback
    } else {
        Position::new(1.0, 0.0)
    }
}

impl Anchors {
    pub fn at(x: &PrimalState, model: &Model, previous: Option<&Anchors>) -> Self {
        let k = x.num_ues();
        let offload_scale = (0..k)
            .map(|i| {
                refresh_scale(
                    x.offload_bar[i],
                    model.offload_load[i] / x.compute_aux[i],
                    previous.map(|p| p.offload_scale[i]),
                )
            })
            .collect();
        let rate_scale = (0..k)
            .map(|i| {
                refresh_scale(
                    x.offload_tilde[i],
                    model.comm_load[i] / x.rate[i],
                    previous.map(|p| p.rate_scale[i]),
                )
            })
            .collect();
        let ue_pairs = (0..k)
            .map(|i| {
                let diffs = pair_differences(&x.layout.ue_positions[i]);
                x.ue_pairs[i]
                    .iter()
                    .zip(&diffs)
                    .map(|(p, d)| pair_anchor(p, d))
                    .collect()
            })
            .collect();
        let diffs = pair_differences(&x.layout.bs_positions);
        let bs_pairs = x
            .bs_pairs
            .iter()
            .zip(&diffs)
            .map(|(p, d)| pair_anchor(p, d))
            .collect();
        Self {
            offload_scale,
            rate_scale,
            signal: (0..k).map(|i| x.interference[(i, i)]).collect(),
            sinr_aux: x.sinr_aux.iter().map(|v| v.max(SINR_FLOOR)).collect(),
            ue_pairs,
            bs_pairs,
        }
    }
}

/// Dominant right singular vector of `h` (unit norm).
fn dominant_right_singular(h: &CMatrix) -> CVector {
    let gram = h.adjoint() * h;
    let eig = SymmetricEigen::new(gram);
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best });
    let v = eig.eigenvectors.column(idx).into_owned();
    let n = v.norm();
    if n > 0.0 {
        v.unscale(n)
    } else {
        let mut e = CVector::zeros(h.ncols());
        e[0] = C64::new(1.0, 0.0);
        e
    }
}

fn initial_layout(scenario: &Scenario, options: &SolverOptions) -> Result<AntennaLayout> {
    match (options.mode, options.initial_layout) {
        (Mode::FullMa | Mode::ReceiveOnlyMa, InitialLayout::Random) => {
            let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
            let random = scenario.random_layout(&mut rng)?;
            if options.mode == Mode::ReceiveOnlyMa {
                let grid = scenario.grid_layout()?;
                Ok(AntennaLayout {
                    ue_positions: grid.ue_positions,
                    ..random
                })
            } else {
                Ok(random)
            }
        }
        _ => scenario.grid_layout(),
    }
}

/// Grid or random layout, dominant-eigenmode precoders at full power, MMSE
/// combiners, `δ = 0.5`, equal MEC shares; every auxiliary is propagated so
/// the initial violation is zero and the duals start at zero.
pub fn initialize(scenario: &Scenario, options: &SolverOptions) -> Result<(Model, PrimalState, DualState)> {
    let model = Model::new(scenario);
    let layout = initial_layout(scenario, options)?;
    let k = model.num_ues;
    let precoder: Vec<CVector> = (0..k)
        .map(|i| {
            let b = model.bs_response(i, &layout.bs_positions);
            let h = model.path_to_array(i, &b) * model.ue_response(i, &layout.ue_positions[i]);
            dominant_right_singular(&h)
        })
        .collect();
    let (rx, jam) = model.received(&layout, &precoder);
    let mut cov = CMatrix::identity(model.rx_antennas, model.rx_antennas) + &jam * jam.adjoint();
    for r in &rx {
        cov += r * r.adjoint();
    }
    let combiner = rx
        .iter()
        .map(|r| {
            let f = solve_hpd(cov.clone(), r.clone());
            let n = f.norm();
            if n > 0.0 {
                f.unscale(n)
            } else {
                f
            }
        })
        .collect();
    let primal = PrimalState::consistent(
        &model,
        layout,
        precoder,
        combiner,
        vec![0.5; k],
        vec![1.0 / k as f64; k],
    )?;
    let duals = residuals(&primal, &model).zeros_like();
    Ok((model, primal, duals))
}

fn tag(block: &'static str, e: Error) -> Error {
    match e {
        Error::NumericFailure { block: inner, reason } => Error::NumericFailure {
            block,
            reason: format!("{inner}: {reason}"),
        },
        other => other,
    }
}

type StepFn = fn(&mut PrimalState, &DualState, f64, &Model, &Anchors, &SolverOptions) -> Result<()>;

/// One sub-block of the inner sweep.
#[derive(Clone, Copy)]
pub struct SweepStep {
    pub name: &'static str,
    run: StepFn,
}

impl SweepStep {
    pub fn apply(
        &self,
        x: &mut PrimalState,
        y: &DualState,
        kappa: f64,
        model: &Model,
        anchors: &Anchors,
        options: &SolverOptions,
    ) -> Result<()> {
        (self.run)(x, y, kappa, model, anchors, options).map_err(|e| tag(self.name, e))
    }
}

impl fmt::Debug for SweepStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name)
    }
}

/// Sub-blocks in sweep order.  The three delay-bound groups and the SINR
/// auxiliaries are updated jointly with the primal variables their
/// constraints involve, so every constraint lives inside one sub-block.
pub const SWEEP: &[SweepStep] = &[
    SweepStep { name: "precoders", run: step_precoders },
    SweepStep { name: "combiner copies", run: step_combiner_copies },
    SweepStep { name: "UE response copies", run: step_ue_responses },
    SweepStep { name: "BS response copies", run: step_bs_responses },
    SweepStep { name: "jammer response copy", run: step_jam_response },
    SweepStep { name: "timing auxiliaries", run: step_timing },
    SweepStep { name: "offload-time bounds", run: step_offload_time },
    SweepStep { name: "transmission-time bounds", run: step_transmission_time },
    SweepStep { name: "rate bounds", run: step_rate_pair },
    SweepStep { name: "spacing auxiliaries", run: step_spacing },
    SweepStep { name: "interference auxiliaries", run: step_interference },
    SweepStep { name: "global delay", run: step_global_delay },
    SweepStep { name: "offload ratios", run: step_offload },
    SweepStep { name: "rate slacks", run: step_rate_slack },
    SweepStep { name: "MEC shares", run: step_compute },
    SweepStep { name: "combiners", run: step_combiners },
    SweepStep { name: "effective channels", run: step_effective_channels },
    SweepStep { name: "UE positions", run: step_ue_positions },
    SweepStep { name: "BS positions", run: step_bs_positions },
    SweepStep { name: "precoder copies", run: step_precoder_aux },
    SweepStep { name: "array-side products", run: step_mu_tilde },
    SweepStep { name: "jamming vector", run: step_jam_vector },
    SweepStep { name: "rate variables", run: step_rates },
];

/// One pass over [`SWEEP`]; SCA anchors are fixed at the state on entry.
pub fn inner_sweep(
    x: &mut PrimalState,
    y: &DualState,
    kappa: f64,
    model: &Model,
    anchors: &Anchors,
    options: &SolverOptions,
) -> Result<()> {
    for step in SWEEP {
        step.apply(x, y, kappa, model, anchors, options)?;
    }
    Ok(())
}

fn re(v: f64) -> C64 {
    C64::new(v, 0.0)
}

fn step_precoders(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    for i in 0..model.num_ues {
        let center = &x.precoder_aux[i] - &y.precoder[i] * re(kappa);
        x.precoder[i] = project_to_ball(&center, 1.0);
    }
    Ok(())
}

fn step_combiner_copies(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, anchors: &Anchors, _: &SolverOptions) -> Result<()> {
    let k = model.num_ues;
    for i in 0..k {
        let a = anchors.signal[i];
        let v0 = anchors.sinr_aux[i];
        let others: f64 = (0..k)
            .filter(|&j| j != i)
            .map(|j| x.interference[(i, j)].norm_sqr())
            .sum();
        let room = 2.0 * (a.conj() * x.interference[(i, i)]).re / v0 - a.norm_sqr() * x.sinr_aux[i] / (v0 * v0)
            - others
            - x.jam_inner[i].norm_sqr();
        let center = &x.combiner[i] + &y.combiner[i] * re(kappa);
        x.combiner_aux[i] = project_to_ball(&center, room.max(0.0).sqrt());
    }
    Ok(())
}

fn step_ue_responses(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, options: &SolverOptions) -> Result<()> {
    let kc = re(kappa);
    for i in 0..model.num_ues {
        let w = &x.precoder_aux[i];
        let d = w * w.adjoint();
        let target = &x.mu[i] + &y.mu[i] * kc;
        let c = &target * w.adjoint() + model.ue_response(i, &x.layout.ue_positions[i]) + &y.ue_response[i] * kc;
        x.ue_response[i] = update_unit_modulus_weighted(None, &d, &c, &x.ue_response[i], options.unit_modulus_sweeps);
    }
    Ok(())
}

fn step_bs_responses(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, options: &SolverOptions) -> Result<()> {
    let kc = re(kappa);
    let ident = CMatrix::identity(model.rx_antennas, model.rx_antennas);
    for i in 0..model.num_ues {
        let v = x.mu[i].component_mul(&model.ue_gains[i]);
        let e = &v * v.adjoint();
        let target = &x.mu_tilde[i] + &y.mu_tilde[i] * kc;
        let c = &v * target.adjoint() + model.bs_response(i, &x.layout.bs_positions) + &y.bs_response[i] * kc;
        x.bs_response[i] = update_unit_modulus_weighted(Some(&e), &ident, &c, &x.bs_response[i], options.unit_modulus_sweeps);
    }
    Ok(())
}

fn step_jam_response(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, options: &SolverOptions) -> Result<()> {
    let kc = re(kappa);
    let ident = CMatrix::identity(model.rx_antennas, model.rx_antennas);
    let v = &model.jam_source;
    let e = v * v.adjoint();
    let target = &x.jam_vector + &y.jam_vector * kc;
    let c = v * target.adjoint() + model.jam_response(&x.layout.bs_positions) + &y.jam_response * kc;
    x.jam_response = update_unit_modulus_weighted(Some(&e), &ident, &c, &x.jam_response, options.unit_modulus_sweeps);
    Ok(())
}

fn step_timing(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, anchors: &Anchors, _: &SolverOptions) -> Result<()> {
    for i in 0..model.num_ues {
        let input = TimingInput {
            gamma: x.gamma,
            alpha1: x.alpha1[i],
            alpha2: x.alpha2[i],
            offload: x.offload[i],
            compute: x.compute[i],
            rate: x.rate[i],
            sinr: x.sinr[i],
            duals: TimingDuals {
                delay_link: y.delay_link[i],
                delay_local: y.delay_local[i],
                offload_slack: y.offload_slack[i],
                rate_slack: y.rate_slack[i],
                offload_bar: y.offload_bar[i],
                offload_hat: y.offload_hat[i],
                offload_tilde: y.offload_tilde[i],
                compute: y.compute[i],
                rate: y.rate[i],
            },
            kappa,
            offload_scale: anchors.offload_scale[i],
            rate_scale: anchors.rate_scale[i],
            offload_load: model.offload_load[i],
            comm_load: model.comm_load[i],
            local_time: model.local_time[i],
        };
        let out = update_timing_aux(&input)?;
        x.gamma_link[i] = out.gamma_link;
        x.gamma_local[i] = out.gamma_local;
        x.alpha1_aux[i] = out.alpha1_aux;
        x.alpha2_aux[i] = out.alpha2_aux;
        x.offload_bar[i] = out.offload_bar;
        x.offload_hat[i] = out.offload_hat;
        x.offload_tilde[i] = out.offload_tilde;
        x.compute_aux[i] = out.compute_aux;
        x.rate_aux[i] = out.rate_aux;
    }
    Ok(())
}

fn step_offload_time(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, anchors: &Anchors, _: &SolverOptions) -> Result<()> {
    for i in 0..model.num_ues {
        let out = update_time_bound(&TimeBoundInput {
            alpha_center: x.alpha1_aux[i] - kappa * y.offload_slack[i],
            delta_center: x.offload[i] + kappa * y.offload_bar[i],
            rate_center: x.compute[i] + kappa * y.compute[i],
            load: model.offload_load[i],
            scale: anchors.offload_scale[i],
        })?;
        x.alpha1[i] = out.alpha;
        x.offload_bar[i] = out.delta;
        x.compute_aux[i] = out.rate;
    }
    Ok(())
}

fn step_transmission_time(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, anchors: &Anchors, _: &SolverOptions) -> Result<()> {
    for i in 0..model.num_ues {
        let out = update_time_bound(&TimeBoundInput {
            alpha_center: x.alpha2_aux[i] - kappa * y.rate_slack[i],
            delta_center: x.offload[i] + kappa * y.offload_tilde[i],
            rate_center: x.rate_aux[i] - kappa * y.rate[i],
            load: model.comm_load[i],
            scale: anchors.rate_scale[i],
        })?;
        x.alpha2[i] = out.alpha;
        x.offload_tilde[i] = out.delta;
        x.rate[i] = out.rate;
    }
    Ok(())
}

fn step_rate_pair(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    for i in 0..model.num_ues {
        let out = update_rate_pair(&RatePairInput {
            rate_center: x.rate[i] + kappa * y.rate[i],
            sinr_center: x.sinr_aux[i] - kappa * y.sinr[i],
        })?;
        x.rate_aux[i] = out.rate_aux;
        x.sinr[i] = out.sinr;
    }
    Ok(())
}

fn step_spacing(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, anchors: &Anchors, _: &SolverOptions) -> Result<()> {
    let d = model.min_spacing;
    for i in 0..model.num_ues {
        let diffs = pair_differences(&x.layout.ue_positions[i]);
        for (j, diff) in diffs.iter().enumerate() {
            let center = diff - y.ue_pairs[i][j] * kappa;
            x.ue_pairs[i][j] = update_spacing_aux(&center, &anchors.ue_pairs[i][j], d).0;
        }
    }
    let diffs = pair_differences(&x.layout.bs_positions);
    for (j, diff) in diffs.iter().enumerate() {
        let center = diff - y.bs_pairs[j] * kappa;
        x.bs_pairs[j] = update_spacing_aux(&center, &anchors.bs_pairs[j], d).0;
    }
    Ok(())
}

fn step_interference(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, anchors: &Anchors, _: &SolverOptions) -> Result<()> {
    let k = model.num_ues;
    for i in 0..k {
        let input = InterferenceInput {
            own: i,
            cross_centers: (0..k)
                .map(|j| x.combiner[i].dotc(&x.mu_tilde[j]) - y.interference[(i, j)] * kappa)
                .collect(),
            sinr_center: x.sinr[i] + kappa * y.sinr[i],
            jam_center: x.combiner[i].dotc(&x.jam_vector) - y.jam_inner[i] * kappa,
            combiner_center: &x.combiner[i] + &y.combiner[i] * re(kappa),
            noise_power: 1.0,
            anchor_signal: anchors.signal[i],
            anchor_sinr: anchors.sinr_aux[i],
            sinr_floor: SINR_FLOOR,
        };
        let out = update_interference_aux(&input)?;
        for j in 0..k {
            x.interference[(i, j)] = out.cross[j];
        }
        x.sinr_aux[i] = out.sinr_aux;
        x.jam_inner[i] = out.jam_inner;
        x.combiner_aux[i] = out.combiner_aux;
    }
    Ok(())
}

fn step_global_delay(x: &mut PrimalState, y: &DualState, kappa: f64, _: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    x.gamma = update_global_delay(&x.gamma_link, &x.gamma_local, &y.delay_link, &y.delay_local, kappa);
    Ok(())
}

fn step_offload(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    for i in 0..model.num_ues {
        x.offload[i] = update_offload_ratio(
            [x.offload_bar[i], x.offload_hat[i], x.offload_tilde[i]],
            [y.offload_bar[i], y.offload_hat[i], y.offload_tilde[i]],
            kappa,
        );
    }
    Ok(())
}

fn step_rate_slack(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, anchors: &Anchors, _: &SolverOptions) -> Result<()> {
    for i in 0..model.num_ues {
        let out = update_rate_slack(&RateSlackInput {
            alpha1_center: x.alpha1_aux[i] - kappa * y.offload_slack[i],
            alpha2_center: x.alpha2_aux[i] - kappa * y.rate_slack[i],
            sinr_center: x.sinr_aux[i] - kappa * y.sinr[i],
            offload_bar: x.offload_bar[i],
            compute_aux: x.compute_aux[i],
            offload_tilde: x.offload_tilde[i],
            rate: x.rate[i],
            rate_aux: x.rate_aux[i],
            offload_load: model.offload_load[i],
            comm_load: model.comm_load[i],
            offload_scale: anchors.offload_scale[i],
            rate_scale: anchors.rate_scale[i],
        });
        x.alpha1[i] = out.alpha1;
        x.alpha2[i] = out.alpha2;
        x.sinr[i] = out.sinr;
    }
    Ok(())
}

fn step_compute(x: &mut PrimalState, y: &DualState, kappa: f64, _: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    x.compute = update_compute_alloc(&x.compute_aux, &y.compute, kappa, 1.0).0;
    Ok(())
}

fn step_combiners(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    let k = model.num_ues;
    for i in 0..k {
        let center = &x.combiner_aux[i] - &y.combiner[i] * re(kappa);
        let mut couplings = vec![(&x.jam_vector, x.jam_inner[i] + y.jam_inner[i] * kappa)];
        for j in 0..k {
            couplings.push((&x.mu_tilde[j], x.interference[(i, j)] + y.interference[(i, j)] * kappa));
        }
        x.combiner[i] = update_receive_combiner(&center, &couplings);
    }
    Ok(())
}

fn step_effective_channels(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    let kc = re(kappa);
    for i in 0..model.num_ues {
        let center = &x.ue_response[i] * &x.precoder_aux[i] - &y.mu[i] * kc;
        let g = model.path_to_array(i, &x.bs_response[i]);
        let target = &x.mu_tilde[i] + &y.mu_tilde[i] * kc;
        x.mu[i] = update_effective_channel(&center, &g, &target);
    }
    Ok(())
}

fn step_ue_positions(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, options: &SolverOptions) -> Result<()> {
    if options.mode.moves_ues() {
        update_ue_positions(x, y, kappa, model, options);
    }
    Ok(())
}

fn step_bs_positions(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, options: &SolverOptions) -> Result<()> {
    if options.mode.moves_bs() {
        update_bs_positions(x, y, kappa, model, options);
    }
    Ok(())
}

fn step_precoder_aux(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    let kc = re(kappa);
    for i in 0..model.num_ues {
        let target = &x.mu[i] + &y.mu[i] * kc;
        let center = &x.precoder[i] + &y.precoder[i] * kc;
        x.precoder_aux[i] = update_precoder_aux(&x.ue_response[i], &target, &center);
    }
    Ok(())
}

fn step_mu_tilde(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    let k = model.num_ues;
    for j in 0..k {
        let center = model.path_to_array(j, &x.bs_response[j]) * &x.mu[j] - &y.mu_tilde[j] * re(kappa);
        let couplings: Vec<(&CVector, C64)> = (0..k)
            .map(|i| (&x.combiner[i], x.interference[(i, j)] + y.interference[(i, j)] * kappa))
            .collect();
        x.mu_tilde[j] = update_mu_tilde(&center, &couplings);
    }
    Ok(())
}

fn step_jam_vector(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, _: &Anchors, _: &SolverOptions) -> Result<()> {
    let center = x.jam_response.adjoint() * &model.jam_source - &y.jam_vector * re(kappa);
    let couplings: Vec<(&CVector, C64)> = (0..model.num_ues)
        .map(|i| (&x.combiner[i], x.jam_inner[i] + y.jam_inner[i] * kappa))
        .collect();
    x.jam_vector = update_jam_vector(&center, &couplings);
    Ok(())
}

fn step_rates(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, anchors: &Anchors, _: &SolverOptions) -> Result<()> {
    for i in 0..model.num_ues {
        let center = x.rate_aux[i] - kappa * y.rate[i];
        x.rate[i] = update_rate_var(
            center,
            model.comm_load[i],
            x.offload_tilde[i],
            x.alpha2[i],
            anchors.rate_scale[i],
        )?
        .0;
    }
    Ok(())
}

/// Rescales each combiner to unit norm together with everything that is
/// homogeneous in it (`f̃_k`, `ũ_{k,·}`, `u_k` and their duals).  The SINR
/// does not depend on this scale, but the penalty terms do and would
/// otherwise drag `f_k` toward zero.
pub fn normalize_combiners(x: &mut PrimalState, y: &mut DualState) {
    for i in 0..x.num_ues() {
        let n = x.combiner[i].norm();
        if !(n > 0.0) || !n.is_finite() {
            continue;
        }
        let t = 1.0 / n;
        let tc = C64::new(t, 0.0);
        x.combiner[i] *= tc;
        x.combiner_aux[i] *= tc;
        y.combiner[i] *= tc;
        x.jam_inner[i] *= t;
        y.jam_inner[i] *= t;
        for j in 0..x.num_ues() {
            x.interference[(i, j)] *= t;
            y.interference[(i, j)] *= t;
        }
    }
}

fn pair_terms(n: usize, positions: &[Position], aux: &[Position], duals: &[Position], kappa: f64) -> Vec<Position> {
    pairs(positions.len())
        .into_iter()
        .enumerate()
        .filter_map(|(j, (a, b))| {
            let shift = aux[j] + duals[j] * kappa;
            if a == n {
                Some(positions[b] + shift)
            } else if b == n {
                Some(positions[a] - shift)
            } else {
                None
            }
        })
        .collect()
}

fn phase_terms(
    model_paths: &crate::channel::PathSet,
    height: f64,
    wavelength: f64,
    copy: &CMatrix,
    dual: &CMatrix,
    column: usize,
    kappa: f64,
) -> Vec<PhaseTerm> {
    model_paths
        .wave_vectors(height, wavelength)
        .into_iter()
        .enumerate()
        .map(|(l, (wave, offset))| PhaseTerm {
            wave,
            offset,
            target: copy[(l, column)] - dual[(l, column)] * kappa,
        })
        .collect()
}

fn update_ue_positions(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, options: &SolverOptions) {
    for i in 0..model.num_ues {
        for n in 0..model.tx_antennas {
            let terms = AntennaTerms {
                phases: phase_terms(&model.ue_paths[i], 0.0, model.wavelength, &x.ue_response[i], &y.ue_response[i], n, kappa),
                pairs: pair_terms(n, &x.layout.ue_positions[i], &x.ue_pairs[i], &y.ue_pairs[i], kappa),
                region: model.tx_region,
            };
            x.layout.ue_positions[i][n] =
                update_antenna_position(&terms, &x.layout.ue_positions[i][n], options.position_mm_iters);
        }
    }
}

fn update_bs_positions(x: &mut PrimalState, y: &DualState, kappa: f64, model: &Model, options: &SolverOptions) {
    let h = model.bs_height;
    for m in 0..model.rx_antennas {
        let mut phases = Vec::new();
        for i in 0..model.num_ues {
            phases.extend(phase_terms(&model.rx_paths[i], h, model.wavelength, &x.bs_response[i], &y.bs_response[i], m, kappa));
        }
        phases.extend(phase_terms(&model.jam_rx_paths, h, model.wavelength, &x.jam_response, &y.jam_response, m, kappa));
        let terms = AntennaTerms {
            phases,
            pairs: pair_terms(m, &x.layout.bs_positions, &x.bs_pairs, &y.bs_pairs, kappa),
            region: model.rx_region,
        };
        x.layout.bs_positions[m] = update_antenna_position(&terms, &x.layout.bs_positions[m], options.position_mm_iters);
    }
}

/// Result of [`solve`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub solution: Solution,
    pub trace: ConvergenceTrace,
    pub converged: bool,
    pub outer_iterations: usize,
    pub final_violation: f64,
}

/// Pushes violating pairs apart inside the region; `None` if that fails.
fn repair_spacing(positions: &[Position], region: &crate::scenario::Region, d: f64) -> Option<Vec<Position>> {
    let mut p: Vec<Position> = positions.iter().map(|q| region.clamp(q)).collect();
    let target = d + 4.0 * SPACING_TOL;
    for _ in 0..200 {
        let mut clean = true;
        for (a, b) in pairs(p.len()) {
            let diff = p[a] - p[b];
            let dist = diff.norm();
            if dist < d - SPACING_TOL {
                clean = false;
                let dir = if dist > 0.0 { diff / dist } else { Position::new(1.0, 0.0) };
                let push = dir * ((target - dist) / 2.0);
                p[a] = region.clamp(&(p[a] + push));
                p[b] = region.clamp(&(p[b] - push));
            }
        }
        if clean {
            return Some(p);
        }
    }
    None
}

/// Physical solution from the primal iterate: positions are snapped into
/// their regions (spacing repaired, or the fallback layout used), precoders
/// are rescaled to mW, and rates and delays are recomputed from the channel.
pub fn extract_solution(
    scenario: &Scenario,
    model: &Model,
    x: &PrimalState,
    fallback: &AntennaLayout,
) -> Result<Solution> {
    let c = &scenario.config;
    let mut layout = x.layout.clone();
    let mut ok = true;
    for pos in layout.ue_positions.iter_mut() {
        match repair_spacing(pos, &c.tx_region(), c.min_spacing_m) {
            Some(p) => *pos = p,
            None => ok = false,
        }
    }
    match repair_spacing(&layout.bs_positions, &c.rx_region(), c.min_spacing_m) {
        Some(p) => layout.bs_positions = p,
        None => ok = false,
    }
    if !ok {
        layout = fallback.clone();
    }
    let precoders: Vec<CVector> = x
        .precoder
        .iter()
        .zip(&model.power)
        .map(|(w, p)| {
            let w = project_to_ball(w, 1.0);
            w * C64::new(p.sqrt(), 0.0)
        })
        .collect();
    let quality = scenario.link_quality(&layout, &precoders, &x.combiner)?;
    let rates: Vec<f64> = quality.iter().map(|q| q.rate).collect();
    let offload_ratios: Vec<f64> = x.offload.iter().map(|d| d.clamp(0.0, 1.0)).collect();
    let mec_alloc: Vec<f64> = x.compute.iter().map(|v| v.max(0.0) * model.mec_budget).collect();
    let (per_ue_delay, max_delay) =
        delay_objective(&scenario.tasks, &rates, c.bandwidth_hz, &offload_ratios, &mec_alloc);
    Ok(Solution {
        layout,
        precoders,
        combiners: x.combiner.clone(),
        offload_ratios,
        mec_alloc,
        rates,
        per_ue_delay,
        max_delay,
    })
}

fn local_only(scenario: &Scenario, options: &SolverOptions) -> Result<SolveOutcome> {
    let (model, x, _) = initialize(scenario, options)?;
    let k = model.num_ues;
    let mut solution = extract_solution(scenario, &model, &x, &x.layout)?;
    solution.offload_ratios = vec![0.0; k];
    solution.mec_alloc = vec![0.0; k];
    let (per, max) = delay_objective(
        &scenario.tasks,
        &solution.rates,
        scenario.config.bandwidth_hz,
        &solution.offload_ratios,
        &solution.mec_alloc,
    );
    solution.per_ue_delay = per;
    solution.max_delay = max;
    Ok(SolveOutcome {
        solution,
        trace: ConvergenceTrace::default(),
        converged: true,
        outer_iterations: 0,
        final_violation: 0.0,
    })
}

/// Runs the penalty-dual loop `options.starts` times and keeps the run with
/// the smallest feasible max delay (the first start on ties).
///
/// A run converges when the change of `γ` between outer iterations is below
/// `ε₁` and the coupling violation is below `violation_tol`; otherwise the
/// best feasible iterate seen is returned with `converged = false`.
pub fn solve(scenario: &Scenario, options: &SolverOptions) -> Result<SolveOutcome> {
    options.validate()?;
    if options.mode == Mode::LocalOnly {
        return local_only(scenario, options);
    }
    let mut best = solve_once(scenario, options)?;
    // fixed-position runs start from the same grid every time
    if options.mode == Mode::Fpa {
        return Ok(best);
    }
    for r in 1..options.starts {
        let run = SolverOptions {
            initial_layout: InitialLayout::Random,
            seed: start_seed(options.seed, r),
            ..options.clone()
        };
        let outcome = solve_once(scenario, &run)?;
        let feasible = |o: &SolveOutcome| validate_solution(scenario, &o.solution).is_empty();
        if feasible(&outcome) && (!feasible(&best) || outcome.solution.max_delay < best.solution.max_delay) {
            best = outcome;
        }
    }
    Ok(best)
}

fn start_seed(seed: u64, start: usize) -> u64 {
    seed ^ (start as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

fn solve_once(scenario: &Scenario, options: &SolverOptions) -> Result<SolveOutcome> {
    let (model, mut x, mut y) = initialize(scenario, options)?;
    let fallback = x.layout.clone();
    let mut schedule = options.schedule;
    let mut trace = ConvergenceTrace::default();
    let mut best: Option<Solution> = None;
    let mut anchors: Option<Anchors> = None;
    let mut prev_gamma = x.gamma;
    let mut converged = false;
    let mut violation = 0.0;

    for outer in 1..=options.max_outer {
        let kappa = schedule.kappa;
        let mut al = al_from_residuals(x.gamma, &residuals(&x, &model), &y, kappa);
        let mut inner_used = 0;
        let mut r = residuals(&x, &model);
        for _ in 0..options.max_inner {
            // Gauge step between sweeps; each sweep itself is monotone.
            normalize_combiners(&mut x, &mut y);
            al = al_from_residuals(x.gamma, &residuals(&x, &model), &y, kappa);
            let a = Anchors::at(&x, &model, anchors.as_ref());
            inner_sweep(&mut x, &y, kappa, &model, &a, options)?;
            anchors = Some(a);
            inner_used += 1;
            r = residuals(&x, &model);
            let next = al_from_residuals(x.gamma, &r, &y, kappa);
            let change = (al - next).abs() / al.abs().max(1e-12);
            al = next;
            if change < options.inner_tol {
                break;
            }
        }
        violation = r.max_abs();
        let solution = extract_solution(scenario, &model, &x, &fallback)?;
        let row = TraceRow {
            outer_iter: outer,
            inner_iters: inner_used,
            al_objective: al,
            gamma: x.gamma,
            max_delay: solution.max_delay,
            violation,
            kappa,
            eps2: schedule.eps2,
        };
        trace.rows.push(row);
        if validate_solution(scenario, &solution).is_empty()
            && best.as_ref().is_none_or(|b| solution.max_delay < b.max_delay)
        {
            best = Some(solution);
        }
        let gamma_change = (x.gamma - prev_gamma).abs();
        prev_gamma = x.gamma;
        if violation < options.violation_tol && gamma_change < schedule.eps1 {
            converged = true;
            break;
        }
        let (ny, ns, _) = step_from_residuals(&r, &y, &schedule);
        y = ny;
        schedule = ns;
    }

    let outer_iterations = trace.rows.len();
    let solution = if converged {
        extract_solution(scenario, &model, &x, &fallback)?
    } else {
        match best {
            Some(b) => b,
            None => extract_solution(scenario, &model, &x, &fallback)?,
        }
    };
    Ok(SolveOutcome {
        solution,
        trace,
        converged,
        outer_iterations,
        final_violation: violation,
    })
}
