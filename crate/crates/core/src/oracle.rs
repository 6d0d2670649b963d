//! Reference computations that share no code with the production path:
//! a scalar triple-loop channel sum, a log-barrier Newton solver for the
//! constrained sub-blocks, stacked least squares for the quadratic ones, and
//! grid or sampling searches for the one-dimensional and positional ones.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::blocks::position::{phase_matching_position, update_antenna_position, AntennaTerms, PhaseTerm};
use crate::blocks::{
    project_to_ball, unit_modulus_objective, update_compute_alloc, update_effective_channel,
    update_global_delay, update_interference_aux, update_jam_vector, update_mu_tilde,
    update_offload_ratio, update_precoder_aux, update_rate_pair, update_rate_slack, update_rate_var,
    update_receive_combiner, update_spacing_aux, update_time_bound, update_timing_aux,
    update_unit_modulus_weighted, InterferenceInput, RatePairInput, RateSlackInput, TimeBoundInput,
    TimingInput,
};
use crate::blocks::timing::TimingDuals;
use crate::channel::{jammer_channel, uplink_channel, AntennaLayout, PathSet};
use crate::invariants::{cgauss, cvec};
use crate::scenario::Region;
use crate::{CMatrix, CVector, Position, Result, C64};

/// Relative Frobenius tolerance of the channel comparison.
pub const CHANNEL_TOL: f64 = 1e-12;
/// Objective gap tolerance, relative to `max(1, |oracle objective|)`.
pub const OBJECTIVE_TOL: f64 = 1e-6;
/// Bound on `|κ·g|` and on any constraint violation.
pub const SLACKNESS_TOL: f64 = 1e-8;

// ---------------------------------------------------------------- channels

fn path_phase(p: &Position, height: f64, elevation: f64, azimuth: f64, wavelength: f64) -> f64 {
    let k = 2.0 * PI / wavelength;
    k * (p.x * elevation.cos() * azimuth.cos() + p.y * elevation.cos() * azimuth.sin() + height * elevation.sin())
}

/// `H[m, n] = Σ_l conj(a_r,l(m)) g_l a_t,l(n)` summed entry by entry.
pub fn triple_loop_uplink(
    tx: &[Position],
    rx: &[Position],
    height: f64,
    ue_paths: &PathSet,
    rx_paths: &PathSet,
    wavelength: f64,
) -> CMatrix {
    let mut h = CMatrix::zeros(rx.len(), tx.len());
    for m in 0..rx.len() {
        for n in 0..tx.len() {
            let mut s = C64::new(0.0, 0.0);
            for l in 0..ue_paths.len() {
                let r = path_phase(&rx[m], height, rx_paths.elevations()[l], rx_paths.azimuths()[l], wavelength);
                let t = path_phase(&tx[n], 0.0, ue_paths.elevations()[l], ue_paths.azimuths()[l], wavelength);
                s += C64::from_polar(1.0, -r) * ue_paths.gains()[l] * C64::from_polar(1.0, t);
            }
            h[(m, n)] = s;
        }
    }
    h
}

/// `H[m, j] = Σ_l conj(a_r,l(m)) g̃_l Ã[l, j]`.
pub fn triple_loop_jammer(
    rx: &[Position],
    height: f64,
    paths: &PathSet,
    jam_tx: &CMatrix,
    wavelength: f64,
) -> CMatrix {
    let mut h = CMatrix::zeros(rx.len(), jam_tx.ncols());
    for m in 0..rx.len() {
        for j in 0..jam_tx.ncols() {
            let mut s = C64::new(0.0, 0.0);
            for l in 0..paths.len() {
                let r = path_phase(&rx[m], height, paths.elevations()[l], paths.azimuths()[l], wavelength);
                s += C64::from_polar(1.0, -r) * paths.gains()[l] * jam_tx[(l, j)];
            }
            h[(m, j)] = s;
        }
    }
    h
}

#[derive(Clone, Debug, Serialize)]
pub struct ChannelOracleReport {
    pub instances: usize,
    pub max_uplink_error: f64,
    pub max_jammer_error: f64,
    pub elapsed_secs: f64,
}

impl ChannelOracleReport {
    pub fn passed(&self) -> bool {
        self.max_uplink_error <= CHANNEL_TOL && self.max_jammer_error <= CHANNEL_TOL
    }
}

fn relative_error(a: &CMatrix, reference: &CMatrix) -> f64 {
    (a - reference).norm() / reference.norm().max(f64::MIN_POSITIVE)
}

fn random_paths<R: Rng>(rng: &mut R, n: usize) -> Result<PathSet> {
    PathSet::new(
        (0..n).map(|_| rng.random_range(0.0..=PI)).collect(),
        (0..n).map(|_| rng.random_range(0.0..=PI)).collect(),
        (0..n).map(|_| cgauss(rng)).collect(),
    )
}

/// Compares the production channels against the triple-loop sums on
/// `instances` random layouts and path sets.
pub fn channel_oracle(instances: usize, seed: u64) -> Result<ChannelOracleReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = Instant::now();
    let (mut up, mut jam) = (0.0_f64, 0.0_f64);
    for _ in 0..instances {
        let wavelength = rng.random_range(0.005..0.2);
        let half = wavelength * rng.random_range(0.5..3.0);
        let pts = |n: usize, rng: &mut ChaCha8Rng| -> Vec<Position> {
            (0..n)
                .map(|_| Position::new(rng.random_range(-half..half), rng.random_range(-half..half)))
                .collect()
        };
        let nt = rng.random_range(1..=6);
        let nr = rng.random_range(1..=16);
        let nj = rng.random_range(1..=4);
        let tx = pts(nt, &mut rng);
        let rx = pts(nr, &mut rng);
        let height = wavelength * rng.random_range(0.0..10.0);
        let l = rng.random_range(1..=8);
        let ue_paths = random_paths(&mut rng, l)?;
        let rx_paths = random_paths(&mut rng, l)?.with_gains(vec![C64::new(1.0, 0.0); l])?;
        let lj = rng.random_range(1..=8);
        let jam_paths = random_paths(&mut rng, lj)?;
        let jam_tx = CMatrix::from_fn(lj, nj, |_, _| C64::from_polar(1.0, rng.random_range(-PI..PI)));
        let layout = AntennaLayout {
            ue_positions: vec![tx.clone()],
            bs_positions: rx.clone(),
            bs_height: height,
        };
        let h = uplink_channel(&layout, 0, &ue_paths, &rx_paths, wavelength)?;
        up = up.max(relative_error(&h, &triple_loop_uplink(&tx, &rx, height, &ue_paths, &rx_paths, wavelength)));
        let hj = jammer_channel(&layout, &jam_paths, &jam_tx, wavelength)?;
        jam = jam.max(relative_error(&hj, &triple_loop_jammer(&rx, height, &jam_paths, &jam_tx, wavelength)));
    }
    Ok(ChannelOracleReport {
        instances,
        max_uplink_error: up,
        max_jammer_error: jam,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

// ---------------------------------------------------------- generic solvers

/// Value, gradient and Hessian of a smooth convex constraint `g(x) ≤ 0`.
pub type Constraint<'a> = Box<dyn Fn(&DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) + 'a>;

/// Minimizes `‖x − center‖²` over `{g_i(x) ≤ 0}` with a log-barrier Newton
/// method from the strictly feasible `start`.  The barrier weight grows
/// until the duality-gap bound `m/t` is below `1e-11`.
pub fn barrier_projection(center: &DVector<f64>, constraints: &[Constraint<'_>], start: DVector<f64>) -> DVector<f64> {
    let n = center.len();
    let m = constraints.len() as f64;
    let phi = |x: &DVector<f64>, t: f64| -> f64 {
        let mut v = t * (x - center).norm_squared();
        for g in constraints {
            let gv = g(x).0;
            if !(gv < 0.0) {
                return f64::INFINITY;
            }
            v -= (-gv).ln();
        }
        v
    };
    let mut x = start;
    let mut t = 1.0;
    loop {
        for _ in 0..100 {
            let mut grad = (&x - center) * (2.0 * t);
            let mut hess = DMatrix::<f64>::identity(n, n) * (2.0 * t);
            for g in constraints {
                let (v, dg, h) = g(&x);
                grad += &dg / (-v);
                hess += &dg * dg.transpose() / (v * v) + h / (-v);
            }
            let Some(ch) = hess.cholesky() else { break };
            let step = ch.solve(&(-&grad));
            let decrement = -grad.dot(&step);
            if !(decrement > 1e-20) {
                break;
            }
            let f0 = phi(&x, t);
            let mut s = 1.0;
            let mut moved = false;
            while s > 1e-14 {
                let next = &x + &step * s;
                let f = phi(&next, t);
                // near the minimizer roundoff in φ hides the Armijo decrease
                if f <= f0 - 0.25 * s * decrement || (decrement < 1e-6 && f.is_finite()) {
                    x = next;
                    moved = true;
                    break;
                }
                s *= 0.5;
            }
            if !moved || decrement < 1e-16 {
                break;
            }
        }
        if m / t < 1e-11 {
            return x;
        }
        t *= 8.0;
    }
}

fn linear(grad: DVector<f64>) -> Constraint<'static> {
    let n = grad.len();
    Box::new(move |x: &DVector<f64>| (grad.dot(x), grad.clone(), DMatrix::zeros(n, n)))
}

fn affine(grad: DVector<f64>, offset: f64) -> Constraint<'static> {
    let n = grad.len();
    Box::new(move |x: &DVector<f64>| (grad.dot(x) + offset, grad.clone(), DMatrix::zeros(n, n)))
}

fn unit(n: usize, i: usize, v: f64) -> DVector<f64> {
    let mut e = DVector::zeros(n);
    e[i] = v;
    e
}

/// Golden-section minimum of a unimodal `f` on `[lo, hi]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = (5.0_f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo <= 1e-15 * (1.0 + lo.abs().max(hi.abs())) {
            break;
        }
        if fa <= fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    if fa <= fb {
        a
    } else {
        b
    }
}

/// Least-squares solution of the stacked complex system `M x ≈ rhs` by SVD.
fn stacked_least_squares(m: CMatrix, rhs: CVector) -> CVector {
    m.svd(true, true)
        .solve(&rhs, 1e-14)
        .expect("both singular-vector sets were requested")
}

/// Stacked system `[I; a_1ᴴ; …] x ≈ [center; t_1; …]`.
fn coupled_oracle(center: &CVector, couplings: &[(&CVector, C64)]) -> CVector {
    let n = center.len();
    let mut m = CMatrix::zeros(n + couplings.len(), n);
    let mut rhs = CVector::zeros(n + couplings.len());
    m.view_mut((0, 0), (n, n)).fill_with_identity();
    rhs.rows_mut(0, n).copy_from(center);
    for (i, (a, t)) in couplings.iter().enumerate() {
        m.row_mut(n + i).copy_from(&a.adjoint());
        rhs[n + i] = *t;
    }
    stacked_least_squares(m, rhs)
}

fn coupled_objective(x: &CVector, center: &CVector, couplings: &[(&CVector, C64)]) -> f64 {
    (x - center).norm_squared() + couplings.iter().map(|(a, t)| (a.dotc(x) - t).norm_sqr()).sum::<f64>()
}

// ------------------------------------------------------------ report rows

/// Worst-case comparison of one sub-block update against its oracle.
#[derive(Clone, Debug, Serialize)]
pub struct OracleRow {
    pub op: &'static str,
    pub oracle: &'static str,
    pub instances: usize,
    /// `max |f_update − f_oracle| / max(1, |f_oracle|)`.
    pub max_objective_gap: f64,
    /// Smallest returned multiplier (`None` if the update has none).
    pub min_multiplier: Option<f64>,
    /// `max |κ·g|` over returned multipliers.
    pub max_slackness: f64,
    /// `max g⁺` over the update's own constraints.
    pub max_violation: f64,
}

impl OracleRow {
    fn new(op: &'static str, oracle: &'static str) -> Self {
        Self {
            op,
            oracle,
            instances: 0,
            max_objective_gap: 0.0,
            min_multiplier: None,
            max_slackness: 0.0,
            max_violation: 0.0,
        }
    }

    fn objective(&mut self, update: f64, oracle: f64) {
        let gap = (update - oracle).abs() / oracle.abs().max(1.0);
        self.max_objective_gap = self.max_objective_gap.max(if gap.is_nan() { f64::INFINITY } else { gap });
    }

    /// Records a gap that only counts when the update is worse.
    fn no_worse(&mut self, update: f64, reference: f64) {
        let gap = (update - reference).max(0.0) / reference.abs().max(1.0);
        self.max_objective_gap = self.max_objective_gap.max(if gap.is_nan() { f64::INFINITY } else { gap });
    }

    fn kkt(&mut self, multiplier: f64, g: f64) {
        self.min_multiplier = Some(self.min_multiplier.map_or(multiplier, |m| m.min(multiplier)));
        self.max_slackness = self.max_slackness.max((multiplier * g).abs());
        self.violation(g);
    }

    fn violation(&mut self, g: f64) {
        self.max_violation = self.max_violation.max(if g.is_nan() { f64::INFINITY } else { g.max(0.0) });
    }

    pub fn passed(&self) -> bool {
        self.instances > 0
            && self.max_objective_gap <= OBJECTIVE_TOL
            && self.min_multiplier.is_none_or(|m| m >= 0.0)
            && self.max_slackness <= SLACKNESS_TOL
            && self.max_violation <= SLACKNESS_TOL
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BlockOracleReport {
    pub rows: Vec<OracleRow>,
    pub elapsed_secs: f64,
}

impl BlockOracleReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(OracleRow::passed)
    }
}

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

fn unit_modulus_matrix<R: Rng>(rng: &mut R, r: usize, c: usize) -> CMatrix {
    CMatrix::from_fn(r, c, |_, _| C64::from_polar(1.0, rng.random_range(-PI..PI)))
}

fn random_psd<R: Rng>(rng: &mut R, n: usize) -> CMatrix {
    let x = CMatrix::from_fn(n, n, |_, _| cgauss(rng));
    &x * x.adjoint() + CMatrix::identity(n, n) * C64::new(rng.random_range(0.0..0.5), 0.0)
}

fn real_of(v: &CVector) -> Vec<f64> {
    v.iter().flat_map(|z| [z.re, z.im]).collect()
}

fn complex_of(x: &[f64]) -> CVector {
    CVector::from_iterator(x.len() / 2, x.chunks(2).map(|p| C64::new(p[0], p[1])))
}

// -------------------------------------------------------------- per-op runs

fn ball_row(rng: &mut ChaCha8Rng, instances: usize) -> OracleRow {
    let mut row = OracleRow::new("project_to_ball", "log-barrier Newton");
    for _ in 0..instances {
        let n = rng.random_range(1..=6);
        let v = cvec(rng, n) * C64::new(log_uniform(rng, 0.1, 5.0), 0.0);
        let radius = rng.random_range(0.2..2.0);
        let out = project_to_ball(&v, radius);
        let center = DVector::from_vec(real_of(&v));
        let r2 = radius * radius;
        let cons: Vec<Constraint> = vec![Box::new(move |x: &DVector<f64>| {
            (x.norm_squared() - r2, x * 2.0, DMatrix::identity(x.len(), x.len()) * 2.0)
        })];
        let x = complex_of(barrier_projection(&center, &cons, DVector::zeros(2 * n)).as_slice());
        row.objective((&out - &v).norm_squared(), (&x - &v).norm_squared());
        row.violation(out.norm_squared() - r2);
        row.instances += 1;
    }
    row
}

fn unit_modulus_row(rng: &mut ChaCha8Rng, instances: usize) -> OracleRow {
    let mut row = OracleRow::new("update_unit_modulus", "phase grid per entry");
    for _ in 0..instances {
        let (r, c) = (rng.random_range(1..=4), rng.random_range(1..=4));
        let left = rng.random_bool(0.5).then(|| random_psd(rng, r));
        let d = random_psd(rng, c);
        let cm = CMatrix::from_fn(r, c, |_, _| cgauss(rng) * 2.0);
        let b0 = unit_modulus_matrix(rng, r, c);
        let out = update_unit_modulus_weighted(left.as_ref(), &d, &cm, &b0, 1);
        // replay the same column-major entry order, each entry by search
        let mut b = b0.clone();
        for j in 0..c {
            for i in 0..r {
                let f = |theta: f64| {
                    let mut t = b.clone();
                    t[(i, j)] = C64::from_polar(1.0, theta);
                    unit_modulus_objective(left.as_ref(), &d, &cm, &t)
                };
                let grid = 720;
                let h = 2.0 * PI / grid as f64;
                let best = (0..grid)
                    .map(|g| -PI + g as f64 * h)
                    .min_by(|a, b| f(*a).total_cmp(&f(*b)))
                    .unwrap_or(0.0);
                // with |b_ij| = 1 the objective is A + X cos θ + Y sin θ in θ;
                // fit it from four samples and keep the fit only if the grid
                // agrees, else fall back to golden section
                let x = (f(0.0) - f(PI)) / 2.0;
                let y = (f(PI / 2.0) - f(-PI / 2.0)) / 2.0;
                let fitted = (-y).atan2(-x);
                let theta = if f(fitted) <= f(best) + 1e-12 {
                    fitted
                } else {
                    golden_section(f, best - h, best + h)
                };
                if f(theta) < f(b[(i, j)].arg()) {
                    b[(i, j)] = C64::from_polar(1.0, theta);
                }
            }
        }
        row.objective(
            unit_modulus_objective(left.as_ref(), &d, &cm, &out),
            unit_modulus_objective(left.as_ref(), &d, &cm, &b),
        );
        row.violation(out.iter().map(|z| (z.norm() - 1.0).abs()).fold(0.0, f64::max));
        row.instances += 1;
    }
    row
}

fn random_timing(rng: &mut ChaCha8Rng) -> TimingInput {
    let comm_load: f64 = rng.random_range(0.01..1.0);
    let rate = log_uniform(rng, 0.1, 5.0);
    let rate_scale = log_uniform(rng, 0.1, 10.0);
    let mut d = || rng.random_range(-1.0..1.0);
    let duals = TimingDuals {
        delay_link: d(),
        delay_local: d(),
        offload_slack: d(),
        rate_slack: d(),
        offload_bar: d(),
        offload_hat: d(),
        offload_tilde: d(),
        compute: d(),
        rate: d(),
    };
    TimingInput {
        gamma: rng.random_range(0.0..3.0),
        alpha1: rng.random_range(0.01..2.0),
        alpha2: comm_load.powi(2) / (2.0 * rate_scale * rate * rate) * rng.random_range(1.05..4.0),
        offload: rng.random_range(0.0..1.0),
        compute: rng.random_range(0.05..1.0),
        rate,
        sinr: rng.random_range(0.0..20.0),
        duals,
        kappa: log_uniform(rng, 0.01, 2.0),
        offload_scale: log_uniform(rng, 0.1, 10.0),
        rate_scale,
        offload_load: rng.random_range(0.01..1.0),
        comm_load,
        local_time: rng.random_range(0.5..5.0),
    }
}

fn timing_row(rng: &mut ChaCha8Rng, instances: usize) -> Result<OracleRow> {
    let mut row = OracleRow::new("update_timing_aux", "log-barrier Newton");
    for _ in 0..instances {
        let input = random_timing(rng);
        let out = update_timing_aux(&input)?;
        let (s1, s2, a, b) = (input.offload_scale, input.rate_scale, input.offload_load, input.comm_load);
        let (al1, al2, c, gam, nu) = (input.alpha1, input.alpha2, input.local_time, input.rate, input.sinr);
        let cons: Vec<Constraint> = vec![
            linear(DVector::from_vec(vec![-1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0])),
            Box::new(move |x: &DVector<f64>| {
                let (db, p) = (x[4], x[7]);
                let v = s1 * db * db + a * a / (s1 * p * p) - 2.0 * al1;
                let mut g = DVector::zeros(9);
                g[4] = 2.0 * s1 * db;
                g[7] = -2.0 * a * a / (s1 * p.powi(3));
                let mut h = DMatrix::zeros(9, 9);
                h[(4, 4)] = 2.0 * s1;
                h[(7, 7)] = 6.0 * a * a / (s1 * p.powi(4));
                (v, g, h)
            }),
            linear(unit(9, 7, -1.0)),
            Box::new(move |x: &DVector<f64>| {
                let dt = x[6];
                let v = s2 * dt * dt + b * b / (s2 * gam * gam) - 2.0 * al2;
                let mut h = DMatrix::zeros(9, 9);
                h[(6, 6)] = 2.0 * s2;
                (v, unit(9, 6, 2.0 * s2 * dt), h)
            }),
            affine(DVector::from_vec(vec![0.0, -1.0, 0.0, 0.0, 0.0, -c, 0.0, 0.0, 0.0]), c),
            affine(unit(9, 8, 1.0), -(1.0 + nu).log2()),
        ];
        let start = DVector::from_vec(vec![
            1.0,
            1.0,
            0.0,
            0.0,
            0.0,
            1.0,
            0.0,
            2.0 * a / (2.0 * al1 * s1).sqrt(),
            (1.0 + nu).log2() - 1.0,
        ]);
        let center = DVector::from_vec(input.centers().to_vec());
        let x = barrier_projection(&center, &cons, start);
        row.objective(input.objective(&out), (&x - &center).norm_squared());
        for (k, g) in out.multipliers.iter().zip(input.constraints(&out)) {
            row.kkt(*k, g);
        }
        row.instances += 1;
    }
    Ok(row)
}

fn time_bound_row(rng: &mut ChaCha8Rng, instances: usize) -> Result<OracleRow> {
    let mut row = OracleRow::new("update_time_bound", "log-barrier Newton");
    for _ in 0..instances {
        let input = TimeBoundInput {
            alpha_center: rng.random_range(-0.5..1.0),
            delta_center: rng.random_range(-0.5..1.5),
            rate_center: rng.random_range(-1.0..5.0),
            load: rng.random_range(0.01..1.0),
            scale: log_uniform(rng, 0.1, 10.0),
        };
        let out = update_time_bound(&input)?;
        let (s, l) = (input.scale, input.load);
        let cons: Vec<Constraint> = vec![
            Box::new(move |x: &DVector<f64>| {
                let (d, r) = (x[1], x[2]);
                let v = s * d * d + l * l / (s * r * r) - 2.0 * x[0];
                let g = DVector::from_vec(vec![-2.0, 2.0 * s * d, -2.0 * l * l / (s * r.powi(3))]);
                let h = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 2.0 * s, 6.0 * l * l / (s * r.powi(4))]));
                (v, g, h)
            }),
            linear(unit(3, 2, -1.0)),
        ];
        let start = DVector::from_vec(vec![l * l / (2.0 * s) + 1.0, 0.0, 1.0]);
        let center = DVector::from_vec(vec![input.alpha_center, input.delta_center, input.rate_center]);
        let x = barrier_projection(&center, &cons, start);
        row.objective(input.objective(&out), (&x - &center).norm_squared());
        row.kkt(out.multiplier, input.constraint(out.alpha, out.delta, out.rate));
        row.instances += 1;
    }
    Ok(row)
}

fn rate_pair_row(rng: &mut ChaCha8Rng, instances: usize) -> Result<OracleRow> {
    let mut row = OracleRow::new("update_rate_pair", "log-barrier Newton");
    for _ in 0..instances {
        let input = RatePairInput {
            rate_center: rng.random_range(-1.0..8.0),
            sinr_center: rng.random_range(-0.9..30.0),
        };
        let out = update_rate_pair(&input)?;
        let cons: Vec<Constraint> = vec![
            Box::new(|x: &DVector<f64>| {
                let q = 1.0 + x[1];
                let ln2 = std::f64::consts::LN_2;
                let g = DVector::from_vec(vec![1.0, -1.0 / (q * ln2)]);
                let h = DMatrix::from_diagonal(&DVector::from_vec(vec![0.0, 1.0 / (q * q * ln2)]));
                (x[0] - q.log2(), g, h)
            }),
            affine(unit(2, 1, -1.0), -1.0),
        ];
        let nu = input.sinr_center.max(0.0) + 1.0;
        let start = DVector::from_vec(vec![(1.0 + nu).log2() - 1.0, nu]);
        let center = DVector::from_vec(vec![input.rate_center, input.sinr_center]);
        let x = barrier_projection(&center, &cons, start);
        row.objective(input.objective(&out), (&x - &center).norm_squared());
        row.kkt(out.multiplier, input.constraint(out.rate_aux, out.sinr));
        row.instances += 1;
    }
    Ok(row)
}

fn spacing_row(rng: &mut ChaCha8Rng, instances: usize) -> OracleRow {
    let mut row = OracleRow::new("update_spacing_aux", "log-barrier Newton");
    for _ in 0..instances {
        let center = Position::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let mut anchor = Position::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        if anchor.norm() < 1e-3 {
            anchor = Position::new(1.0, 0.0);
        }
        let d = rng.random_range(0.01..0.5);
        let (p, k) = update_spacing_aux(&center, &anchor, d);
        let n = anchor / anchor.norm();
        let cons = vec![affine(DVector::from_vec(vec![-n.x, -n.y]), d)];
        let c = DVector::from_vec(vec![center.x, center.y]);
        let start = DVector::from_vec(vec![n.x * (d + 1.0), n.y * (d + 1.0)]);
        let x = barrier_projection(&c, &cons, start);
        row.objective((p - center).norm_squared(), (&x - &c).norm_squared());
        row.kkt(k, d - n.dot(&p));
        row.instances += 1;
    }
    row
}

fn interference_row(rng: &mut ChaCha8Rng, instances: usize) -> Result<OracleRow> {
    let mut row = OracleRow::new("update_interference_aux", "log-barrier Newton");
    for _ in 0..instances {
        let k = rng.random_range(1..=3);
        let n = rng.random_range(1..=4);
        let input = InterferenceInput {
            own: rng.random_range(0..k),
            cross_centers: (0..k).map(|_| cgauss(rng)).collect(),
            sinr_center: rng.random_range(0.0..5.0),
            jam_center: cgauss(rng),
            combiner_center: cvec(rng, n),
            noise_power: rng.random_range(0.5..2.0),
            anchor_signal: cgauss(rng) + C64::new(0.05, 0.0),
            anchor_sinr: rng.random_range(0.1..5.0),
            sinr_floor: crate::blocks::interference::SINR_FLOOR,
        };
        let out = update_interference_aux(&input)?;
        // x = [cross (2k), ν̃, u (2), f̃ (2n)]
        let dim = 2 * k + 3 + 2 * n;
        let (own, a, v0, sig, floor) = (
            input.own,
            input.anchor_signal,
            input.anchor_sinr,
            input.noise_power,
            input.sinr_floor,
        );
        let cons: Vec<Constraint> = vec![
            Box::new(move |x: &DVector<f64>| {
                let mut v = 0.0;
                let mut g = DVector::zeros(dim);
                let mut h = DMatrix::zeros(dim, dim);
                for j in 0..k {
                    let (re, im) = (x[2 * j], x[2 * j + 1]);
                    if j == own {
                        v -= 2.0 * (a.re * re + a.im * im) / v0;
                        g[2 * j] = -2.0 * a.re / v0;
                        g[2 * j + 1] = -2.0 * a.im / v0;
                    } else {
                        v += re * re + im * im;
                        g[2 * j] = 2.0 * re;
                        g[2 * j + 1] = 2.0 * im;
                        h[(2 * j, 2 * j)] = 2.0;
                        h[(2 * j + 1, 2 * j + 1)] = 2.0;
                    }
                }
                v += a.norm_sqr() * x[2 * k] / (v0 * v0);
                g[2 * k] = a.norm_sqr() / (v0 * v0);
                for i in 2 * k + 1..dim {
                    let w = if i >= 2 * k + 3 { sig } else { 1.0 };
                    v += w * x[i] * x[i];
                    g[i] = 2.0 * w * x[i];
                    h[(i, i)] = 2.0 * w;
                }
                (v, g, h)
            }),
            affine(unit(dim, 2 * k, -1.0), floor),
        ];
        let mut start = DVector::zeros(dim);
        let tau = 1.0 + floor / v0;
        start[2 * own] = a.re * tau;
        start[2 * own + 1] = a.im * tau;
        start[2 * k] = 2.0 * floor;
        let mut center = Vec::with_capacity(dim);
        for z in &input.cross_centers {
            center.extend([z.re, z.im]);
        }
        center.push(input.sinr_center);
        center.extend([input.jam_center.re, input.jam_center.im]);
        center.extend(real_of(&input.combiner_center));
        let center = DVector::from_vec(center);
        let x = barrier_projection(&center, &cons, start);
        row.objective(input.objective(&out), (&x - &center).norm_squared());
        row.kkt(
            out.multiplier,
            input.constraint(&out.cross, &out.combiner_aux, out.sinr_aux, out.jam_inner),
        );
        row.violation(floor - out.sinr_aux);
        row.instances += 1;
    }
    Ok(row)
}

fn global_delay_row(rng: &mut ChaCha8Rng, instances: usize) -> OracleRow {
    let mut row = OracleRow::new("update_global_delay", "golden-section search");
    for _ in 0..instances {
        let k = rng.random_range(1..=4);
        let mut v = |n: usize, lo: f64, hi: f64| -> Vec<f64> { (0..n).map(|_| rng.random_range(lo..hi)).collect() };
        let (gl, gc, dl, dc) = (v(k, 0.0, 3.0), v(k, 0.0, 3.0), v(k, -1.0, 1.0), v(k, -1.0, 1.0));
        let kappa = log_uniform(rng, 0.01, 2.0);
        let f = |g: f64| {
            g + (0..k)
                .map(|i| (g - gl[i] + kappa * dl[i]).powi(2) + (g - gc[i] + kappa * dc[i]).powi(2))
                .sum::<f64>()
                / (2.0 * kappa)
        };
        let out = update_global_delay(&gl, &gc, &dl, &dc, kappa);
        let best = golden_section(f, -20.0, 20.0);
        row.objective(f(out), f(best));
        row.instances += 1;
    }
    row
}

fn offload_ratio_row(rng: &mut ChaCha8Rng, instances: usize) -> OracleRow {
    let mut row = OracleRow::new("update_offload_ratio", "10^5-point grid");
    for _ in 0..instances {
        let copies = [0; 3].map(|_| rng.random_range(-0.5..1.5));
        let duals = [0; 3].map(|_| rng.random_range(-1.0..1.0));
        let kappa = log_uniform(rng, 0.01, 2.0);
        let f = |d: f64| (0..3).map(|i| (d - copies[i] + kappa * duals[i]).powi(2)).sum::<f64>();
        let out = update_offload_ratio(copies, duals, kappa);
        let grid = (0..=100_000).map(|j| f(j as f64 / 100_000.0)).fold(f64::INFINITY, f64::min);
        row.objective(f(out), grid);
        row.violation((-out).max(out - 1.0));
        row.instances += 1;
    }
    row
}

fn rate_slack_row(rng: &mut ChaCha8Rng, instances: usize) -> OracleRow {
    let mut row = OracleRow::new("update_rate_slack", "log-barrier Newton");
    for _ in 0..instances {
        let input = RateSlackInput {
            alpha1_center: rng.random_range(-0.5..2.0),
            alpha2_center: rng.random_range(-0.5..2.0),
            sinr_center: rng.random_range(-1.0..20.0),
            offload_bar: rng.random_range(-0.5..1.5),
            compute_aux: rng.random_range(0.05..1.0),
            offload_tilde: rng.random_range(-0.5..1.5),
            rate: rng.random_range(0.1..5.0),
            rate_aux: rng.random_range(-1.0..5.0),
            offload_load: rng.random_range(0.01..1.0),
            comm_load: rng.random_range(0.01..1.0),
            offload_scale: log_uniform(rng, 0.1, 10.0),
            rate_scale: log_uniform(rng, 0.1, 10.0),
        };
        let out = update_rate_slack(&input);
        let i = &input;
        let bounds = [
            (i.offload_scale * i.offload_bar.powi(2) + i.offload_load.powi(2) / (i.offload_scale * i.compute_aux.powi(2))) / 2.0,
            (i.rate_scale * i.offload_tilde.powi(2) + i.comm_load.powi(2) / (i.rate_scale * i.rate.powi(2))) / 2.0,
            2.0_f64.powf(i.rate_aux) - 1.0,
        ];
        let centers = [i.alpha1_center, i.alpha2_center, i.sinr_center];
        let cons: Vec<Constraint> = (0..3).map(|j| affine(unit(3, j, -1.0), bounds[j])).collect();
        let start = DVector::from_fn(3, |j, _| centers[j].max(bounds[j]) + 1.0);
        let c = DVector::from_vec(centers.to_vec());
        let x = barrier_projection(&c, &cons, start);
        let vals = [out.alpha1, out.alpha2, out.sinr];
        let f: f64 = (0..3).map(|j| (vals[j] - centers[j]).powi(2)).sum();
        row.objective(f, (&x - &c).norm_squared());
        for j in 0..3 {
            row.kkt(out.multipliers[j], bounds[j] - vals[j]);
        }
        row.instances += 1;
    }
    row
}

fn compute_alloc_row(rng: &mut ChaCha8Rng, instances: usize) -> OracleRow {
    let mut row = OracleRow::new("update_compute_alloc", "log-barrier Newton");
    for _ in 0..instances {
        let k = rng.random_range(1..=6);
        let aux: Vec<f64> = (0..k).map(|_| rng.random_range(-0.3..1.0)).collect();
        let duals: Vec<f64> = (0..k).map(|_| rng.random_range(-1.0..1.0)).collect();
        let kappa = log_uniform(rng, 0.01, 2.0);
        let budget = 1.0;
        let (out, k10) = update_compute_alloc(&aux, &duals, kappa, budget);
        let c = DVector::from_fn(k, |i, _| aux[i] - kappa * duals[i]);
        let mut cons: Vec<Constraint> = vec![affine(DVector::from_element(k, 1.0), -budget)];
        cons.extend((0..k).map(|i| linear(unit(k, i, -1.0))));
        let x = barrier_projection(&c, &cons, DVector::from_element(k, budget / (2.0 * k as f64)));
        let y = DVector::from_vec(out.clone());
        row.objective((&y - &c).norm_squared(), (&x - &c).norm_squared());
        row.kkt(k10, out.iter().sum::<f64>() - budget);
        for v in &out {
            row.violation(-v);
        }
        row.instances += 1;
    }
    row
}

fn linear_rows(rng: &mut ChaCha8Rng, instances: usize) -> [OracleRow; 3] {
    let mut comb = OracleRow::new("update_receive_combiner", "stacked least squares (SVD)");
    let mut eff = OracleRow::new("update_effective_channels", "stacked least squares (SVD)");
    let mut prec = OracleRow::new("update_precoder_aux / mu_tilde / u_J", "stacked least squares (SVD)");
    for _ in 0..instances {
        let n = rng.random_range(1..=8);
        let m = rng.random_range(1..=4);
        let center = cvec(rng, n);
        let vecs: Vec<CVector> = (0..m).map(|_| cvec(rng, n)).collect();
        let targets: Vec<C64> = (0..m).map(|_| cgauss(rng)).collect();

        // f ↦ ‖f − c‖² + Σ|fᴴa − t|², i.e. rows aᴴ with targets t̄
        let couplings: Vec<(&CVector, C64)> = vecs.iter().zip(&targets).map(|(a, t)| (a, *t)).collect();
        let f = update_receive_combiner(&center, &couplings);
        let conj: Vec<(&CVector, C64)> = couplings.iter().map(|(a, t)| (*a, t.conj())).collect();
        let reference = coupled_oracle(&center, &conj);
        comb.objective(coupled_objective(&f, &center, &conj), coupled_objective(&reference, &center, &conj));
        comb.instances += 1;

        // μ ↦ ‖μ − c‖² + ‖Gμ − t‖²
        let l = rng.random_range(1..=6);
        let c = cvec(rng, l);
        let g = CMatrix::from_fn(n, l, |_, _| cgauss(rng));
        let t = cvec(rng, n);
        let mu = update_effective_channel(&c, &g, &t);
        let mut stacked = CMatrix::zeros(l + n, l);
        stacked.view_mut((0, 0), (l, l)).fill_with_identity();
        stacked.view_mut((l, 0), (n, l)).copy_from(&g);
        let mut rhs = CVector::zeros(l + n);
        rhs.rows_mut(0, l).copy_from(&c);
        rhs.rows_mut(l, n).copy_from(&t);
        let reference = stacked_least_squares(stacked, rhs);
        let obj = |x: &CVector| (x - &c).norm_squared() + (&g * x - &t).norm_squared();
        eff.objective(obj(&mu), obj(&reference));
        eff.instances += 1;

        // w̃ through B, then μ̃ and u_J through their combiner couplings
        let w = update_precoder_aux(&g, &t, &c);
        prec.objective(obj(&w), obj(&reference));
        for x in [update_mu_tilde(&center, &couplings), update_jam_vector(&center, &couplings)] {
            let reference = coupled_oracle(&center, &couplings);
            prec.objective(coupled_objective(&x, &center, &couplings), coupled_objective(&reference, &center, &couplings));
        }
        prec.instances += 1;
    }
    [comb, eff, prec]
}

fn position_row(rng: &mut ChaCha8Rng, instances: usize) -> OracleRow {
    let mut row = OracleRow::new("update_antenna_positions", "10^4 in-region samples");
    for _ in 0..instances {
        let wavelength = 1.0;
        let k = 2.0 * PI / wavelength;
        let region = Region { half_side: rng.random_range(0.5..3.0) };
        let hs = region.half_side;
        let phases = (0..rng.random_range(1..=8))
            .map(|_| {
                let (e, a) = (rng.random_range(0.0..PI), rng.random_range(0.0..PI));
                PhaseTerm {
                    wave: Vector2::new(e.cos() * a.cos(), e.cos() * a.sin()) * k,
                    offset: rng.random_range(-PI..PI),
                    target: cgauss(rng) * rng.random_range(0.2..2.0),
                }
            })
            .collect();
        let pairs = (0..rng.random_range(0..=3))
            .map(|_| Position::new(rng.random_range(-hs..hs), rng.random_range(-hs..hs)))
            .collect();
        let terms = AntennaTerms { phases, pairs, region };
        let surrogate = phase_matching_position(&terms, None);
        let sampled = (0..10_000)
            .map(|_| {
                let p = Position::new(rng.random_range(-hs..=hs), rng.random_range(-hs..=hs));
                terms.phase_matching_objective(&p, None)
            })
            .fold(f64::INFINITY, f64::min);
        row.no_worse(terms.phase_matching_objective(&surrogate, None), sampled);
        let current = Position::new(rng.random_range(-hs..hs), rng.random_range(-hs..hs));
        let next = update_antenna_position(&terms, &current, 5);
        row.no_worse(terms.objective(&next), terms.objective(&current));
        row.violation((next.x.abs().max(next.y.abs()) - hs).max(surrogate.x.abs().max(surrogate.y.abs()) - hs));
        row.instances += 1;
    }
    row
}

fn rate_var_row(rng: &mut ChaCha8Rng, instances: usize) -> Result<OracleRow> {
    let mut row = OracleRow::new("update_rate_var", "log-barrier Newton");
    for _ in 0..instances {
        let center = rng.random_range(-1.0..5.0);
        let b = rng.random_range(0.01..1.0);
        let s = log_uniform(rng, 0.1, 10.0);
        let dt = rng.random_range(-1.0..1.0);
        let alpha2 = s * dt * dt / 2.0 + rng.random_range(0.01..1.0);
        let (gam, k) = update_rate_var(center, b, dt, alpha2, s)?;
        let g = move |r: f64| s * dt * dt + b * b / (s * r * r) - 2.0 * alpha2;
        let cons: Vec<Constraint> = vec![
            Box::new(move |x: &DVector<f64>| {
                let r = x[0];
                (
                    g(r),
                    DVector::from_element(1, -2.0 * b * b / (s * r.powi(3))),
                    DMatrix::from_element(1, 1, 6.0 * b * b / (s * r.powi(4))),
                )
            }),
            linear(DVector::from_element(1, -1.0)),
        ];
        let mut start = 1.0;
        while !(g(start) < 0.0) {
            start *= 2.0;
        }
        let x = barrier_projection(&DVector::from_element(1, center), &cons, DVector::from_element(1, start));
        row.objective((gam - center).powi(2), (x[0] - center).powi(2));
        row.kkt(k, g(gam));
        row.instances += 1;
    }
    Ok(row)
}

/// Runs every sub-block update on `instances` random subproblems and
/// compares it with its oracle.
pub fn block_oracles(instances: usize, seed: u64) -> Result<BlockOracleReport> {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut rows = vec![
        ball_row(r, instances),
        unit_modulus_row(r, instances),
        timing_row(r, instances)?,
        spacing_row(r, instances),
        interference_row(r, instances)?,
        global_delay_row(r, instances),
        offload_ratio_row(r, instances),
        rate_slack_row(r, instances),
        compute_alloc_row(r, instances),
    ];
    rows.extend(linear_rows(r, instances));
    rows.push(position_row(r, instances));
    rows.push(rate_var_row(r, instances)?);
    rows.push(time_bound_row(r, instances)?);
    rows.push(rate_pair_row(r, instances)?);
    Ok(BlockOracleReport {
        rows,
        elapsed_secs: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barrier_matches_ball_projection_by_hand() {
        let c = DVector::from_vec(vec![3.0, 4.0]);
        let cons: Vec<Constraint> = vec![Box::new(|x: &DVector<f64>| {
            (x.norm_squared() - 1.0, x * 2.0, DMatrix::identity(2, 2) * 2.0)
        })];
        let x = barrier_projection(&c, &cons, DVector::zeros(2));
        assert!((x - DVector::from_vec(vec![0.6, 0.8])).norm() < 1e-9);
    }

    #[test]
    fn barrier_keeps_interior_center() {
        let c = DVector::from_vec(vec![0.1, -0.2]);
        let cons = vec![affine(DVector::from_vec(vec![1.0, 1.0]), -1.0)];
        let x = barrier_projection(&c, &cons, DVector::zeros(2));
        assert!((x - c).norm() < 1e-9);
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let x = golden_section(|x| (x - 0.3).powi(2), -5.0, 5.0);
        assert!((x - 0.3).abs() < 1e-7);
    }

    #[test]
    fn triple_loop_single_path_by_hand() {
        // one broadside path: every phase is zero, so H = g everywhere
        let paths = PathSet::new(vec![PI / 2.0], vec![0.0], vec![C64::new(0.5, -0.25)]).unwrap();
        let rx = [Position::new(0.1, 0.2), Position::new(-0.3, 0.0)];
        let tx = [Position::new(0.0, 0.0)];
        let h = triple_loop_uplink(&tx, &rx, 0.0, &paths, &paths, 0.1);
        for z in h.iter() {
            assert!((z - C64::new(0.5, -0.25)).norm() < 1e-12);
        }
    }

    #[test]
    fn channel_oracle_small_run() {
        let rep = channel_oracle(50, 3).unwrap();
        assert!(rep.passed(), "{rep:?}");
    }

    #[test]
    fn block_oracles_small_run() {
        let rep = block_oracles(10, 5).unwrap();
        for row in &rep.rows {
            assert!(row.passed(), "{row:?}");
        }
    }
}
