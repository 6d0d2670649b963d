//! Property checks on random solver states: per-step descent of the
//! augmented Lagrangian and feasibility of every sub-block's own constraints.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::al::{al_objective, residuals, DualState, Field, Model, PrimalState};
use crate::blocks::timing::{RatePairInput, TimeBoundInput};
use crate::blocks::InterferenceInput;
use crate::scenario::{generate_scenario, Scenario, SystemConfig, TaskProfile};
use crate::solver::{Anchors, SolverOptions, SWEEP};
use crate::{CMatrix, CVector, Result, C64};

/// Largest tolerated AL increase of a single sub-block update.
pub const STEP_TOL: f64 = 1e-9;
/// Largest tolerated AL increase of a full sweep.
pub const SWEEP_TOL: f64 = 1e-8;
/// Largest tolerated value of a sub-block constraint after its update.
pub const FEASIBILITY_TOL: f64 = 1e-8;

pub(crate) fn cgauss<R: Rng>(rng: &mut R) -> C64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re, im) / std::f64::consts::SQRT_2
}

pub(crate) fn cvec<R: Rng>(rng: &mut R, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| cgauss(rng))
}

fn jitter<R: Rng>(rng: &mut R, v: &mut CVector, scale: f64) {
    for z in v.iter_mut() {
        *z += cgauss(rng) * scale;
    }
}

fn rotate<R: Rng>(rng: &mut R, m: &mut CMatrix, spread: f64) {
    for z in m.iter_mut() {
        *z *= C64::from_polar(1.0, rng.random_range(-spread..spread));
    }
}

/// A state whose couplings are violated but whose sub-block constraints all
/// hold at anchors taken at the state itself, with random multipliers and
/// penalty.
pub fn random_state<R: Rng>(scenario: &Scenario, rng: &mut R) -> Result<(Model, PrimalState, DualState, f64)> {
    let model = Model::new(scenario);
    let k = model.num_ues;
    let layout = scenario.random_layout(rng)?;
    let precoder = (0..k)
        .map(|_| {
            let w = cvec(rng, model.tx_antennas);
            let n = w.norm();
            w * C64::new(rng.random_range(0.3..1.0) / n, 0.0)
        })
        .collect();
    let combiner = (0..k)
        .map(|_| {
            let f = cvec(rng, model.rx_antennas);
            let n = f.norm();
            f.unscale(n)
        })
        .collect();
    let offload = (0..k).map(|_| rng.random_range(0.05..0.95)).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let fill = rng.random_range(0.5..1.0);
    let compute = raw.iter().map(|v| v / total * fill).collect();
    let base = PrimalState::consistent(&model, layout, precoder, combiner, offload, compute)?;

    let mut x = base.clone();
    perturb(&mut x, &model, rng);
    let mut other = base;
    perturb(&mut other, &model, rng);
    let mut y = residuals(&x, &model).zeros_like();
    y.add_scaled(rng.random_range(-1.0..1.0), &residuals(&other, &model));
    let kappa = 10f64.powf(rng.random_range(-1.5..0.3));
    Ok((model, x, y, kappa))
}

/// Moves every variable in a direction that keeps its sub-block constraints
/// satisfied.
fn perturb<R: Rng>(x: &mut PrimalState, model: &Model, rng: &mut R) {
    let k = model.num_ues;
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    x.gamma += u(0.0, 0.1);
    for i in 0..k {
        x.gamma_link[i] += u(0.0, 0.1);
        x.gamma_local[i] += u(0.0, 0.1);
        x.alpha1[i] *= u(1.0, 1.2);
        x.alpha2[i] *= u(1.0, 1.2);
        x.alpha1_aux[i] *= u(0.8, 1.0);
        x.alpha2_aux[i] *= u(0.8, 1.0);
        x.offload[i] = (x.offload[i] + u(-0.05, 0.05)).clamp(0.0, 1.0);
        x.offload_hat[i] = (x.offload_hat[i] + u(0.0, 0.05)).min(1.0);
        x.compute[i] *= u(0.8, 1.0);
        x.compute_aux[i] *= u(1.0, 1.1);
        x.rate[i] *= u(1.0, 1.2);
        x.rate_aux[i] *= u(0.8, 1.0);
        x.sinr[i] *= u(1.0, 1.3);
        x.sinr_aux[i] *= u(0.7, 1.0);
        x.jam_inner[i] *= u(0.8, 1.0);
        x.combiner_aux[i] *= C64::new(u(0.8, 1.0), 0.0);
        for j in 0..k {
            if j != i {
                x.interference[(i, j)] *= u(0.8, 1.0);
            }
        }
        for p in x.ue_pairs[i].iter_mut() {
            *p *= u(1.0, 1.2);
        }
    }
    for p in x.bs_pairs.iter_mut() {
        *p *= u(1.0, 1.2);
    }
    for i in 0..k {
        jitter(rng, &mut x.mu[i], 0.05);
        jitter(rng, &mut x.mu_tilde[i], 0.05);
        jitter(rng, &mut x.precoder_aux[i], 0.05);
        jitter(rng, &mut x.combiner[i], 0.05);
        rotate(rng, &mut x.ue_response[i], 0.2);
        rotate(rng, &mut x.bs_response[i], 0.2);
        let r = model.tx_region;
        for p in x.layout.ue_positions[i].iter_mut() {
            p.x += rng.random_range(-0.01..0.01) * model.wavelength;
            p.y += rng.random_range(-0.01..0.01) * model.wavelength;
            *p = r.clamp(p);
        }
    }
    jitter(rng, &mut x.jam_vector, 0.05);
    rotate(rng, &mut x.jam_response, 0.2);
    for p in x.layout.bs_positions.iter_mut() {
        p.x += rng.random_range(-0.01..0.01) * model.wavelength;
        p.y += rng.random_range(-0.01..0.01) * model.wavelength;
        *p = model.rx_region.clamp(p);
    }
}

/// Largest value of every sub-block constraint family at `x` (feasible iff
/// all are ≤ 0), with SCA constraints linearized at `anchors`.
pub fn constraint_values(x: &PrimalState, model: &Model, anchors: &Anchors) -> Vec<(&'static str, f64)> {
    let k = model.num_ues;
    let mut out = Vec::new();
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    out.push(("power", max(&mut x.precoder.iter().map(|w| w.norm_squared() - 1.0))));
    out.push((
        "delay link",
        max(&mut (0..k).map(|i| x.alpha1_aux[i] + x.alpha2_aux[i] - x.gamma_link[i])),
    ));
    out.push((
        "delay local",
        max(&mut (0..k).map(|i| (1.0 - x.offload_hat[i]) * model.local_time[i] - x.gamma_local[i])),
    ));
    out.push((
        "offload time",
        max(&mut (0..k).map(|i| {
            TimeBoundInput {
                alpha_center: 0.0,
                delta_center: 0.0,
                rate_center: 0.0,
                load: model.offload_load[i],
                scale: anchors.offload_scale[i],
            }
            .constraint(x.alpha1[i], x.offload_bar[i], x.compute_aux[i])
        })),
    ));
    out.push((
        "transmission time",
        max(&mut (0..k).map(|i| {
            TimeBoundInput {
                alpha_center: 0.0,
                delta_center: 0.0,
                rate_center: 0.0,
                load: model.comm_load[i],
                scale: anchors.rate_scale[i],
            }
            .constraint(x.alpha2[i], x.offload_tilde[i], x.rate[i])
        })),
    ));
    out.push((
        "rate",
        max(&mut (0..k).map(|i| {
            RatePairInput {
                rate_center: 0.0,
                sinr_center: 0.0,
            }
            .constraint(x.rate_aux[i], x.sinr[i])
        })),
    ));
    out.push((
        "sinr",
        max(&mut (0..k).map(|i| {
            let cross: Vec<C64> = (0..k).map(|j| x.interference[(i, j)]).collect();
            InterferenceInput {
                own: i,
                cross_centers: cross.clone(),
                sinr_center: 0.0,
                jam_center: C64::new(0.0, 0.0),
                combiner_center: x.combiner_aux[i].clone(),
                noise_power: 1.0,
                anchor_signal: anchors.signal[i],
                anchor_sinr: anchors.sinr_aux[i],
                sinr_floor: 0.0,
            }
            .constraint(&cross, &x.combiner_aux[i], x.sinr_aux[i], x.jam_inner[i])
        })),
    ));
    out.push((
        "offload range",
        max(&mut x.offload.iter().map(|d| (-d).max(d - 1.0))),
    ));
    out.push(("MEC budget", x.compute.iter().sum::<f64>() - 1.0));
    out.push(("MEC sign", max(&mut x.compute.iter().map(|v| -v))));
    let spacing = |p: &crate::Position, a: &crate::Position| model.min_spacing - a.dot(p) / a.norm();
    let ue = (0..k).flat_map(|i| {
        x.ue_pairs[i]
            .iter()
            .zip(&anchors.ue_pairs[i])
            .map(|(p, a)| spacing(p, a))
            .collect::<Vec<_>>()
    });
    let bs = x.bs_pairs.iter().zip(&anchors.bs_pairs).map(|(p, a)| spacing(p, a));
    out.push(("spacing", max(&mut ue.chain(bs))));
    let modulus = |m: &CMatrix| max(&mut m.iter().map(|z| (z.norm() - 1.0).abs()));
    let um = x
        .ue_response
        .iter()
        .chain(&x.bs_response)
        .map(modulus)
        .fold(modulus(&x.jam_response), f64::max);
    out.push(("unit modulus", um));
    let region = |ps: &[crate::Position], r: &crate::scenario::Region| {
        max(&mut ps.iter().map(|p| p.x.abs().max(p.y.abs()) - r.half_side))
    };
    let reg = x
        .layout
        .ue_positions
        .iter()
        .map(|p| region(p, &model.tx_region))
        .fold(region(&x.layout.bs_positions, &model.rx_region), f64::max);
    out.push(("region", reg));
    out
}

/// Outcome of an invariant run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct InvariantReport {
    pub states: usize,
    pub sweeps: usize,
    /// Largest AL increase of any single sub-block update.
    pub worst_step_increase: f64,
    /// Largest AL increase of any full sweep.
    pub worst_sweep_increase: f64,
    /// Largest sub-block constraint value after a sweep.
    pub worst_constraint: f64,
    pub failures: Vec<String>,
}

impl InvariantReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs `sweeps` inner sweeps from `x`, certifying each sub-block update.
pub fn check_descent(
    model: &Model,
    x: &mut PrimalState,
    y: &DualState,
    kappa: f64,
    sweeps: usize,
    options: &SolverOptions,
    label: &str,
    report: &mut InvariantReport,
) -> Result<()> {
    let mut anchors: Option<Anchors> = None;
    for sweep in 0..sweeps {
        let a = Anchors::at(x, model, anchors.as_ref());
        for (name, v) in constraint_values(x, model, &a) {
            if v > FEASIBILITY_TOL {
                report
                    .failures
                    .push(format!("{label} sweep {sweep}: entry state violates {name} by {v:e}"));
            }
        }
        let start = al_objective(x, y, kappa, model);
        let mut before = start;
        for step in SWEEP {
            step.apply(x, y, kappa, model, &a, options)?;
            let after = al_objective(x, y, kappa, model);
            let inc = after - before;
            report.worst_step_increase = report.worst_step_increase.max(inc);
            if inc > STEP_TOL {
                report
                    .failures
                    .push(format!("{label} sweep {sweep}: {} raised the AL by {inc:e}", step.name));
            }
            before = after;
        }
        let inc = before - start;
        report.worst_sweep_increase = report.worst_sweep_increase.max(inc);
        if inc > SWEEP_TOL {
            report
                .failures
                .push(format!("{label} sweep {sweep}: AL rose by {inc:e}"));
        }
        for (name, v) in constraint_values(x, model, &a) {
            report.worst_constraint = report.worst_constraint.max(v);
            if v > FEASIBILITY_TOL {
                report
                    .failures
                    .push(format!("{label} sweep {sweep}: {name} violated by {v:e} after the sweep"));
            }
        }
        report.sweeps += 1;
        anchors = Some(a);
    }
    Ok(())
}

/// Descent and feasibility on `states` random states of `config`, three
/// sweeps each.
pub fn run_invariant_suite(config: &SystemConfig, tasks: &TaskProfile, states: usize, seed: u64) -> Result<InvariantReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = InvariantReport::default();
    let options = SolverOptions::default();
    for s in 0..states {
        let scenario = generate_scenario(config, tasks, seed.wrapping_add(s as u64))?;
        let (model, mut x, y, kappa) = random_state(&scenario, &mut rng)?;
        check_descent(&model, &mut x, &y, kappa, 3, &options, &format!("state {s}"), &mut report)?;
        report.states += 1;
    }
    Ok(report)
}
