//! Problem instances: system configuration, task profiles, random scenario
//! generation, the delay objective and solution feasibility checks.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::channel::{jammer_channel, response_matrix, sinr_and_rate, uplink_channel};
use crate::channel::{AntennaLayout, LinkQuality, PathSet};
use crate::{CMatrix, CVector, Error, Position, Result, C64};

/// Absolute tolerance on `‖w_k‖² ≤ P_k` (mW).
pub const POWER_TOL: f64 = 1e-9;
/// Absolute tolerance on the pairwise antenna spacing (m).
pub const SPACING_TOL: f64 = 1e-9;
/// Absolute tolerance on `Σ Ψ_{1,k} ≤ Ψ_max` (bits/s).
pub const BUDGET_TOL: f64 = 1e-6;
/// Rejection-sampling budget for random layouts.
pub const LAYOUT_ATTEMPTS: usize = 100_000;

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Physical and array parameters shared by all UEs.  Powers are linear mW.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    pub num_ues: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub jammer_antennas: usize,
    pub ue_paths: usize,
    pub jammer_paths: usize,
    pub ue_power_mw: f64,
    pub jammer_power_mw: f64,
    pub noise_power_mw: f64,
    pub bandwidth_hz: f64,
    pub wavelength_m: f64,
    pub region_side_tx_m: f64,
    pub region_side_rx_m: f64,
    pub min_spacing_m: f64,
    pub bs_height_m: f64,
    pub pathloss_exponent: f64,
    pub ref_gain: f64,
    pub ue_distance_m: f64,
    pub jammer_distance_m: f64,
}

impl Default for SystemConfig {
    /// Two UEs with 4 transmit antennas, a 16-antenna BS and a 2-antenna
    /// jammer; 20 dBm per UE, 5 dBm jamming, 2λ × 2λ regions at 3 GHz.
    fn default() -> Self {
        let wavelength = 0.1;
        Self {
            num_ues: 2,
            tx_antennas: 4,
            rx_antennas: 16,
            jammer_antennas: 2,
            ue_paths: 2,
            jammer_paths: 8,
            ue_power_mw: dbm_to_mw(20.0),
            jammer_power_mw: dbm_to_mw(5.0),
            noise_power_mw: 1e-5,
            bandwidth_hz: 50e6,
            wavelength_m: wavelength,
            region_side_tx_m: 2.0 * wavelength,
            region_side_rx_m: 2.0 * wavelength,
            min_spacing_m: wavelength / 4.0,
            bs_height_m: 10.0,
            pathloss_exponent: 2.8,
            ref_gain: 1e-4,
            ue_distance_m: 60.0,
            jammer_distance_m: 30.0,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        for (name, v) in [
            ("num_ues", self.num_ues),
            ("tx_antennas", self.tx_antennas),
            ("rx_antennas", self.rx_antennas),
            ("jammer_antennas", self.jammer_antennas),
            ("ue_paths", self.ue_paths),
            ("jammer_paths", self.jammer_paths),
        ] {
            if v == 0 {
                return bad(format!("{name} must be at least 1"));
            }
        }
        for (name, v) in [
            ("ue_power_mw", self.ue_power_mw),
            ("jammer_power_mw", self.jammer_power_mw),
            ("noise_power_mw", self.noise_power_mw),
            ("bandwidth_hz", self.bandwidth_hz),
            ("wavelength_m", self.wavelength_m),
            ("region_side_tx_m", self.region_side_tx_m),
            ("region_side_rx_m", self.region_side_rx_m),
            ("min_spacing_m", self.min_spacing_m),
            ("pathloss_exponent", self.pathloss_exponent),
            ("ref_gain", self.ref_gain),
            ("ue_distance_m", self.ue_distance_m),
            ("jammer_distance_m", self.jammer_distance_m),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.bs_height_m.is_finite() && self.bs_height_m >= 0.0) {
            return bad(format!("bs_height_m must be nonnegative, got {}", self.bs_height_m));
        }
        for (n, side) in [
            (self.tx_antennas, self.region_side_tx_m),
            (self.rx_antennas, self.region_side_rx_m),
        ] {
            if n > 1 && self.min_spacing_m >= side * std::f64::consts::SQRT_2 {
                return bad(format!(
                    "min_spacing_m {} does not fit two antennas in a {side} m region",
                    self.min_spacing_m
                ));
            }
            grid_positions(n, side, self.wavelength_m / 2.0, self.min_spacing_m)?;
        }
        Ok(())
    }

    pub fn tx_region(&self) -> Region {
        Region::new(self.region_side_tx_m)
    }

    pub fn rx_region(&self) -> Region {
        Region::new(self.region_side_rx_m)
    }
}

/// Per-UE task sizes and computing rates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskProfile {
    /// bits per UE
    pub task_bits: Vec<f64>,
    /// MEC computing budget, bits/s
    pub mec_budget: f64,
    /// local computing rate per UE, bits/s
    pub local_rate: Vec<f64>,
}

impl TaskProfile {
    pub fn uniform(num_ues: usize, task_bits: f64, mec_budget: f64, local_rate: f64) -> Self {
        Self {
            task_bits: vec![task_bits; num_ues],
            mec_budget,
            local_rate: vec![local_rate; num_ues],
        }
    }

    /// 10⁷-bit tasks, a 10⁸ bits/s server and 0.4·10⁷ bits/s local CPUs.
    pub fn reference(num_ues: usize) -> Self {
        Self::uniform(num_ues, 1e7, 1e8, 0.4e7)
    }

    /// Truncates or extends (repeating the last entry) to `num_ues` UEs.
    pub fn resized(&self, num_ues: usize) -> Self {
        let fit = |v: &[f64]| -> Vec<f64> {
            let last = v.last().copied().unwrap_or(0.0);
            (0..num_ues).map(|i| v.get(i).copied().unwrap_or(last)).collect()
        };
        Self {
            task_bits: fit(&self.task_bits),
            mec_budget: self.mec_budget,
            local_rate: fit(&self.local_rate),
        }
    }

    pub fn validate(&self, num_ues: usize) -> Result<()> {
        if self.task_bits.len() != num_ues || self.local_rate.len() != num_ues {
            return Err(Error::InvalidConfig(format!(
                "task profile lists {} task sizes and {} local rates for {num_ues} UEs",
                self.task_bits.len(),
                self.local_rate.len()
            )));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.task_bits.iter().chain(&self.local_rate).all(|&v| positive(v))
            || !positive(self.mec_budget)
        {
            return Err(Error::InvalidConfig(
                "task sizes and computing rates must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Square mobile region centered at the array reference point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Region {
    pub half_side: f64,
}

impl Region {
    pub fn new(side: f64) -> Self {
        Self {
            half_side: side / 2.0,
        }
    }

    pub fn contains(&self, p: &Position, tol: f64) -> bool {
        p.x.abs() <= self.half_side + tol && p.y.abs() <= self.half_side + tol
    }

    pub fn clamp(&self, p: &Position) -> Position {
        let h = self.half_side;
        Position::new(p.x.clamp(-h, h), p.y.clamp(-h, h))
    }
}

/// Centered rectangular grid of `n` antennas with spacing
/// `min(preferred, side/(cols−1))`.
pub fn grid_positions(n: usize, side: f64, preferred: f64, min_spacing: f64) -> Result<Vec<Position>> {
    let cols = (n as f64).sqrt().ceil() as usize;
    let rows = n.div_ceil(cols.max(1));
    let span = cols.max(rows);
    let spacing = if span > 1 {
        preferred.min(side / (span - 1) as f64)
    } else {
        preferred
    };
    if n > 1 && spacing < min_spacing - SPACING_TOL {
        return Err(Error::InfeasibleRegion {
            antennas: n,
            spacing: min_spacing,
            side,
        });
    }
    let cx = (cols as f64 - 1.0) / 2.0;
    let cy = (rows as f64 - 1.0) / 2.0;
    Ok((0..n)
        .map(|i| {
            let (r, c) = (i / cols, i % cols);
            Position::new((c as f64 - cx) * spacing, (r as f64 - cy) * spacing)
        })
        .collect())
}

/// Uniform positions in the region with min-distance rejection.  Dense
/// regions where sequential rejection jams fall back to a region-filling
/// grid with per-antenna jitter of at most `(spacing − d)/2` per axis.
pub fn random_positions<R: Rng>(
    rng: &mut R,
    n: usize,
    side: f64,
    min_spacing: f64,
) -> Result<Vec<Position>> {
    let h = side / 2.0;
    let mut out: Vec<Position> = Vec::with_capacity(n);
    let mut attempts = 0;
    while out.len() < n && attempts < LAYOUT_ATTEMPTS {
        attempts += 1;
        let p = Position::new(rng.random_range(-h..=h), rng.random_range(-h..=h));
        if out.iter().all(|q| (q - p).norm() >= min_spacing) {
            out.push(p);
        }
    }
    if out.len() == n {
        return Ok(out);
    }
    let cols = (n as f64).sqrt().ceil() as usize;
    let span = cols.max(n.div_ceil(cols));
    let grid = grid_positions(n, side, side, min_spacing)?;
    let spacing = if span > 1 { side / (span - 1) as f64 } else { side };
    let jitter = ((spacing - min_spacing) / 2.0).clamp(0.0, h);
    let region = Region::new(side);
    Ok(grid
        .into_iter()
        .map(|p| {
            if jitter > 0.0 {
                region.clamp(&(p + Position::new(rng.random_range(-jitter..=jitter), rng.random_range(-jitter..=jitter))))
            } else {
                p
            }
        })
        .collect())
}

/// A fully specified problem instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub config: SystemConfig,
    pub tasks: TaskProfile,
    pub ue_paths: Vec<PathSet>,
    pub rx_paths: Vec<PathSet>,
    pub jam_rx_paths: PathSet,
    pub jam_tx_response: CMatrix,
    pub jam_signal: CVector,
    pub ue_distances: Vec<f64>,
    pub jam_distance: f64,
    pub rng_seed: u64,
}

fn complex_gaussian<R: Rng>(rng: &mut R, variance: f64) -> C64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

fn random_paths<R: Rng>(rng: &mut R, count: usize, variance: f64) -> PathSet {
    let angles = random_angles(rng, count);
    let gains = (0..count).map(|_| complex_gaussian(rng, variance)).collect();
    angles.with_gains(gains).expect("one gain per path")
}

/// Uniform angles with unit gains (angle-only path sets).
fn random_angles<R: Rng>(rng: &mut R, count: usize) -> PathSet {
    let elevations = (0..count).map(|_| rng.random_range(0.0..=PI)).collect();
    let azimuths = (0..count).map(|_| rng.random_range(0.0..=PI)).collect();
    PathSet::new(elevations, azimuths, vec![C64::new(1.0, 0.0); count])
        .expect("generated angles are in range")
}

/// Draws a scenario: UEs on a circle of radius `ue_distance_m`, the jammer at
/// `jammer_distance_m`, uniform path angles, Rayleigh path gains with
/// per-path variance `g0·d^{−α}/L`, and a jammer signal of power `P_J` along
/// a uniformly random direction.
pub fn generate_scenario(config: &SystemConfig, tasks: &TaskProfile, seed: u64) -> Result<Scenario> {
    config.validate()?;
    tasks.validate(config.num_ues)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = config.num_ues;
    let mean_gain = |d: f64| config.ref_gain * d.powf(-config.pathloss_exponent);

    let ue_distances = vec![config.ue_distance_m; k];
    let mut ue_paths = Vec::with_capacity(k);
    let mut rx_paths = Vec::with_capacity(k);
    for &d in &ue_distances {
        let var = mean_gain(d) / config.ue_paths as f64;
        ue_paths.push(random_paths(&mut rng, config.ue_paths, var));
        rx_paths.push(random_angles(&mut rng, config.ue_paths));
    }
    let jam_distance = config.jammer_distance_m;
    let jam_rx_paths = random_paths(
        &mut rng,
        config.jammer_paths,
        mean_gain(jam_distance) / config.jammer_paths as f64,
    );
    let jam_tx_angles = random_angles(&mut rng, config.jammer_paths);
    let ula: Vec<Position> = (0..config.jammer_antennas)
        .map(|n| Position::new(n as f64 * config.wavelength_m / 2.0, 0.0))
        .collect();
    let jam_tx_response = response_matrix(&ula, 0.0, &jam_tx_angles, config.wavelength_m);

    let mut dir = CVector::from_fn(config.jammer_antennas, |_, _| complex_gaussian(&mut rng, 1.0));
    while dir.norm() == 0.0 {
        dir = CVector::from_fn(config.jammer_antennas, |_, _| complex_gaussian(&mut rng, 1.0));
    }
    let jam_signal = dir.unscale(dir.norm()) * C64::new(config.jammer_power_mw.sqrt(), 0.0);

    Ok(Scenario {
        config: config.clone(),
        tasks: tasks.clone(),
        ue_paths,
        rx_paths,
        jam_rx_paths,
        jam_tx_response,
        jam_signal,
        ue_distances,
        jam_distance,
        rng_seed: seed,
    })
}

impl Scenario {
    pub fn num_ues(&self) -> usize {
        self.config.num_ues
    }

    pub fn channels(&self, layout: &AntennaLayout) -> Result<Vec<CMatrix>> {
        (0..self.num_ues())
            .map(|k| {
                uplink_channel(
                    layout,
                    k,
                    &self.ue_paths[k],
                    &self.rx_paths[k],
                    self.config.wavelength_m,
                )
            })
            .collect()
    }

    pub fn jammer_channel(&self, layout: &AntennaLayout) -> Result<CMatrix> {
        jammer_channel(
            layout,
            &self.jam_rx_paths,
            &self.jam_tx_response,
            self.config.wavelength_m,
        )
    }

    pub fn link_quality(
        &self,
        layout: &AntennaLayout,
        precoders: &[CVector],
        combiners: &[CVector],
    ) -> Result<Vec<LinkQuality>> {
        Ok(sinr_and_rate(
            &self.channels(layout)?,
            &self.jammer_channel(layout)?,
            precoders,
            combiners,
            &self.jam_signal,
            self.config.noise_power_mw,
        ))
    }

    /// Regular grids in both regions (fixed-position arrays).
    pub fn grid_layout(&self) -> Result<AntennaLayout> {
        let c = &self.config;
        let half = c.wavelength_m / 2.0;
        let ue = grid_positions(c.tx_antennas, c.region_side_tx_m, half, c.min_spacing_m)?;
        Ok(AntennaLayout {
            ue_positions: vec![ue; c.num_ues],
            bs_positions: grid_positions(c.rx_antennas, c.region_side_rx_m, half, c.min_spacing_m)?,
            bs_height: c.bs_height_m,
        })
    }

    /// Uniform random positions with min-distance rejection.
    pub fn random_layout<R: Rng>(&self, rng: &mut R) -> Result<AntennaLayout> {
        let c = &self.config;
        let ue_positions = (0..c.num_ues)
            .map(|_| random_positions(rng, c.tx_antennas, c.region_side_tx_m, c.min_spacing_m))
            .collect::<Result<Vec<_>>>()?;
        Ok(AntennaLayout {
            ue_positions,
            bs_positions: random_positions(rng, c.rx_antennas, c.region_side_rx_m, c.min_spacing_m)?,
            bs_height: c.bs_height_m,
        })
    }
}

/// Physical decision variables of one solved instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub layout: AntennaLayout,
    pub precoders: Vec<CVector>,
    pub combiners: Vec<CVector>,
    pub offload_ratios: Vec<f64>,
    /// bits/s
    pub mec_alloc: Vec<f64>,
    /// bits/s/Hz
    pub rates: Vec<f64>,
    /// seconds
    pub per_ue_delay: Vec<f64>,
    /// seconds
    pub max_delay: f64,
}

/// Per-UE delay `max(δΔ(1/Ψ₁ + 1/(BΓ)), (1−δ)Δ/Ψ₂)` and its maximum.
///
/// Offloading with zero MEC allocation or zero rate yields `f64::INFINITY`.
pub fn delay_objective(
    tasks: &TaskProfile,
    rates: &[f64],
    bandwidth: f64,
    offload_ratios: &[f64],
    mec_alloc: &[f64],
) -> (Vec<f64>, f64) {
    let per_ue: Vec<f64> = (0..offload_ratios.len())
        .map(|k| {
            let (delta, bits) = (offload_ratios[k], tasks.task_bits[k]);
            let local = (1.0 - delta) * bits / tasks.local_rate[k];
            if delta <= 0.0 {
                return local;
            }
            if mec_alloc[k] <= 0.0 || rates[k] <= 0.0 {
                return f64::INFINITY;
            }
            let offload = delta * bits * (1.0 / mec_alloc[k] + 1.0 / (bandwidth * rates[k]));
            offload.max(local)
        })
        .collect();
    let max = per_ue.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (per_ue, max)
}

/// Which antenna array a spacing or region record refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayId {
    Ue(usize),
    BaseStation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ConstraintViolation {
    Power { ue: usize, power: f64, budget: f64 },
    Budget { total: f64, budget: f64 },
    OffloadRange { ue: usize, value: f64 },
    NegativeAllocation { ue: usize, value: f64 },
    Region { array: ArrayId, antenna: usize },
    Spacing { array: ArrayId, first: usize, second: usize, distance: f64 },
}

/// Every violated constraint of `solution`; empty means feasible.
pub fn validate_solution(scenario: &Scenario, solution: &Solution) -> Vec<ConstraintViolation> {
    let c = &scenario.config;
    let mut out = Vec::new();
    for (k, w) in solution.precoders.iter().enumerate() {
        let power = w.norm_squared();
        if power > c.ue_power_mw + POWER_TOL {
            out.push(ConstraintViolation::Power {
                ue: k,
                power,
                budget: c.ue_power_mw,
            });
        }
    }
    let total: f64 = solution.mec_alloc.iter().sum();
    if total > scenario.tasks.mec_budget + BUDGET_TOL {
        out.push(ConstraintViolation::Budget {
            total,
            budget: scenario.tasks.mec_budget,
        });
    }
    for (k, &v) in solution.mec_alloc.iter().enumerate() {
        if v < 0.0 {
            out.push(ConstraintViolation::NegativeAllocation { ue: k, value: v });
        }
    }
    for (k, &d) in solution.offload_ratios.iter().enumerate() {
        if !(0.0..=1.0).contains(&d) {
            out.push(ConstraintViolation::OffloadRange { ue: k, value: d });
        }
    }
    let arrays = solution
        .layout
        .ue_positions
        .iter()
        .enumerate()
        .map(|(k, p)| (ArrayId::Ue(k), p.as_slice(), c.tx_region()))
        .chain(std::iter::once((
            ArrayId::BaseStation,
            solution.layout.bs_positions.as_slice(),
            c.rx_region(),
        )));
    for (array, positions, region) in arrays {
        for (n, p) in positions.iter().enumerate() {
            if !region.contains(p, 1e-12) {
                out.push(ConstraintViolation::Region { array, antenna: n });
            }
        }
        for a in 0..positions.len() {
            for b in a + 1..positions.len() {
                let distance = (positions[a] - positions[b]).norm();
                if distance < c.min_spacing_m - SPACING_TOL {
                    out.push(ConstraintViolation::Spacing {
                        array,
                        first: a,
                        second: b,
                        distance,
                    });
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dbm_conversions() {
        assert_eq!(dbm_to_mw(0.0), 1.0);
        assert!((dbm_to_mw(25.0) - 316.2278).abs() < 1e-4);
        assert!((dbm_to_mw(-5.0) - 0.3162).abs() < 1e-4);
        assert!((mw_to_dbm(dbm_to_mw(17.0)) - 17.0).abs() < 1e-12);
    }

    #[test]
    fn reference_delays() {
        let t = TaskProfile::reference(1);
        let (_, d) = delay_objective(&t, &[1.0], 1e8, &[0.0], &[1e8]);
        assert!((d - 2.5).abs() < 1e-12);
        let (_, d) = delay_objective(&t, &[1.0], 1e8, &[1.0], &[1e8]);
        assert!((d - 0.2).abs() < 1e-12);
        let (_, d) = delay_objective(&t, &[1.0], 1e8, &[0.5], &[1e8]);
        assert!((d - 1.25).abs() < 1e-12);
    }

    #[test]
    fn offloading_without_resources_is_infinite() {
        let t = TaskProfile::reference(2);
        let (per, max) = delay_objective(&t, &[0.0, 1.0], 1e8, &[0.3, 0.3], &[1e8, 0.0]);
        assert!(per[0].is_infinite() && per[1].is_infinite());
        assert!(max > 1e300);
    }

    #[test]
    fn same_seed_same_scenario() {
        let cfg = SystemConfig::default();
        let t = TaskProfile::reference(cfg.num_ues);
        let a = generate_scenario(&cfg, &t, 11).unwrap();
        let b = generate_scenario(&cfg, &t, 11).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let c = generate_scenario(&cfg, &t, 12).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn jammer_power_is_exact() {
        let cfg = SystemConfig::default();
        let s = generate_scenario(&cfg, &TaskProfile::reference(2), 3).unwrap();
        assert!((s.jam_signal.norm_squared() - cfg.jammer_power_mw).abs() < 1e-12 * cfg.jammer_power_mw);
        assert_eq!(s.jam_tx_response.shape(), (cfg.jammer_paths, cfg.jammer_antennas));
    }

    #[test]
    fn empirical_path_power_matches_pathloss() {
        let cfg = SystemConfig {
            num_ues: 1,
            ..SystemConfig::default()
        };
        let t = TaskProfile::reference(1);
        let draws = 10_000;
        let mean: f64 = (0..draws)
            .map(|s| {
                let sc = generate_scenario(&cfg, &t, s).unwrap();
                sc.ue_paths[0].gains().iter().map(|g| g.norm_sqr()).sum::<f64>()
            })
            .sum::<f64>()
            / draws as f64;
        let want = 1e-4 * 60f64.powf(-2.8);
        assert!((mean - want).abs() / want < 0.05, "{mean} vs {want}");
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg: SystemConfig = serde_json::from_str(r#"{"num_ues": 3}"#).unwrap();
        assert_eq!(cfg.num_ues, 3);
        assert_eq!(cfg.rx_antennas, 16);
        let back: SystemConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<SystemConfig>(r#"{"bogus": 1}"#).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SystemConfig::default().validate().is_ok());
        let bad = SystemConfig {
            num_ues: 0,
            ..SystemConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::InvalidConfig(_))));
        let cramped = SystemConfig {
            region_side_rx_m: 0.05,
            ..SystemConfig::default()
        };
        assert!(cramped.validate().is_err());
        let t = TaskProfile::reference(3);
        assert!(t.validate(2).is_err());
        assert_eq!(t.resized(2).task_bits.len(), 2);
    }

    #[test]
    fn grid_respects_region_and_spacing() {
        for side in [0.1, 0.2, 0.4, 0.6] {
            let g = grid_positions(16, side, 0.05, 0.025).unwrap();
            let r = Region::new(side);
            assert!(g.iter().all(|p| r.contains(p, 1e-12)));
            for a in 0..16 {
                for b in a + 1..16 {
                    assert!((g[a] - g[b]).norm() >= 0.025 - 1e-12);
                }
            }
        }
        assert!(matches!(
            grid_positions(16, 0.05, 0.05, 0.025),
            Err(Error::InfeasibleRegion { .. })
        ));
    }

    #[test]
    fn random_layout_fails_when_overcrowded() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_positions(&mut rng, 4, 0.2, 0.05).is_ok());
        assert!(random_positions(&mut rng, 50, 0.1, 0.05).is_err());
    }

    #[test]
    fn dense_random_layout_keeps_spacing() {
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_positions(&mut rng, 16, 0.1, 0.025).unwrap();
            let region = Region::new(0.1);
            for (i, a) in p.iter().enumerate() {
                assert!(region.contains(a, 1e-15));
                for b in &p[i + 1..] {
                    assert!((a - b).norm() >= 0.025 - 1e-12);
                }
            }
        }
    }

    fn feasible_solution(s: &Scenario) -> Solution {
        let layout = s.grid_layout().unwrap();
        let k = s.num_ues();
        Solution {
            layout,
            precoders: vec![CVector::from_element(s.config.tx_antennas, C64::new(1.0, 0.0)); k],
            combiners: vec![CVector::from_element(s.config.rx_antennas, C64::new(1.0, 0.0)); k],
            offload_ratios: vec![0.5; k],
            mec_alloc: vec![s.tasks.mec_budget / k as f64; k],
            rates: vec![1.0; k],
            per_ue_delay: vec![1.0; k],
            max_delay: 1.0,
        }
    }

    #[test]
    fn validation_records() {
        let s = generate_scenario(&SystemConfig::default(), &TaskProfile::reference(2), 1).unwrap();
        let mut sol = feasible_solution(&s);
        assert!(validate_solution(&s, &sol).is_empty());
        sol.precoders[1] *= C64::new(10.0, 0.0);
        let v = validate_solution(&s, &sol);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], ConstraintViolation::Power { ue: 1, .. }));
        let mut sol = feasible_solution(&s);
        sol.layout.bs_positions[3] = sol.layout.bs_positions[0];
        let v = validate_solution(&s, &sol);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], ConstraintViolation::Spacing { first: 0, second: 3, .. }));
    }

    proptest! {
        #[test]
        fn delay_monotonicity(
            rate in 0.1..10.0f64, psi in 1e6..1e8f64, local in 1e6..1e7f64,
            bits in 1e6..1e8f64, delta in 0.0..1.0f64, up in 1.0..3.0f64,
        ) {
            let t = TaskProfile::uniform(1, bits, 1e8, local);
            let (_, d0) = delay_objective(&t, &[rate], 5e7, &[delta], &[psi]);
            let (_, d1) = delay_objective(&t, &[rate * up], 5e7, &[delta], &[psi]);
            let (_, d2) = delay_objective(&t, &[rate], 5e7, &[delta], &[psi * up]);
            let t3 = TaskProfile::uniform(1, bits, 1e8, local * up);
            let (_, d3) = delay_objective(&t3, &[rate], 5e7, &[delta], &[psi]);
            let t4 = TaskProfile::uniform(1, bits * up, 1e8, local);
            let (_, d4) = delay_objective(&t4, &[rate], 5e7, &[delta], &[psi]);
            prop_assert!(d1 <= d0 && d2 <= d0 && d3 <= d0 && d4 >= d0);
        }

        #[test]
        fn best_split_beats_extremes(rate in 0.1..10.0f64, psi in 1e6..1e8f64, local in 1e6..1e7f64) {
            let t = TaskProfile::uniform(1, 1e7, 1e8, local);
            let at = |d: f64| delay_objective(&t, &[rate], 5e7, &[d], &[psi]).1;
            let best = (0..=1000).map(|i| at(i as f64 / 1000.0)).fold(f64::INFINITY, f64::min);
            prop_assert!(best <= at(0.0).min(at(1.0)));
        }

        #[test]
        fn generated_scenarios_satisfy_invariants(seed in 0u64..1000) {
            let cfg = SystemConfig::default();
            let s = generate_scenario(&cfg, &TaskProfile::reference(2), seed).unwrap();
            prop_assert!((s.jam_signal.norm_squared() - cfg.jammer_power_mw).abs() < 1e-9);
            for p in s.ue_paths.iter().chain(&s.rx_paths).chain(std::iter::once(&s.jam_rx_paths)) {
                for &a in p.elevations().iter().chain(p.azimuths()) {
                    prop_assert!((0.0..=PI).contains(&a));
                }
            }
            prop_assert_eq!(s.ue_paths.len(), 2);
            prop_assert_eq!(s.rx_paths.len(), 2);
        }
    }
}
