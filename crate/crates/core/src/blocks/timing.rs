//! Delay-bound auxiliaries: `γ_k, γ̃_k, α̃₁, α̃₂, δ̄, δ̂, δ̃, Ψ̃, Γ̃` of one UE.
//!
//! The proximal objective is separable into five independent groups, each
//! with a single constraint:
//!
//! 1. `α̃₁ + α̃₂ ≤ γ_k`
//! 2. `s₁δ̄² + a²/(s₁Ψ̃²) ≤ 2α₁`
//! 3. `s₂δ̃² + b²/(s₂Γ²) ≤ 2α₂`
//! 4. `(1 − δ̂)c ≤ γ̃_k`
//! 5. `Γ̃ ≤ log₂(1 + ν)`

use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TimingDuals {
    pub delay_link: f64,
    pub delay_local: f64,
    pub offload_slack: f64,
    pub rate_slack: f64,
    pub offload_bar: f64,
    pub offload_hat: f64,
    pub offload_tilde: f64,
    pub compute: f64,
    pub rate: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingInput {
    pub gamma: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub offload: f64,
    pub compute: f64,
    pub rate: f64,
    pub sinr: f64,
    pub duals: TimingDuals,
    pub kappa: f64,
    pub offload_scale: f64,
    pub rate_scale: f64,
    pub offload_load: f64,
    pub comm_load: f64,
    pub local_time: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimingOutput {
    pub gamma_link: f64,
    pub gamma_local: f64,
    pub alpha1_aux: f64,
    pub alpha2_aux: f64,
    pub offload_bar: f64,
    pub offload_hat: f64,
    pub offload_tilde: f64,
    pub compute_aux: f64,
    pub rate_aux: f64,
    /// Multipliers of constraints 1–5 in module order, for the Lagrangian
    /// `Σ(x − x°)² + Σ κ_i g_i`.
    pub multipliers: [f64; 5],
}

impl TimingInput {
    /// Proximal centers in output field order.
    pub fn centers(&self) -> [f64; 9] {
        let (d, k) = (&self.duals, self.kappa);
        [
            self.gamma + k * d.delay_link,
            self.gamma + k * d.delay_local,
            self.alpha1 + k * d.offload_slack,
            self.alpha2 + k * d.rate_slack,
            self.offload + k * d.offload_bar,
            self.offload + k * d.offload_hat,
            self.offload + k * d.offload_tilde,
            self.compute + k * d.compute,
            self.rate + k * d.rate,
        ]
    }

    /// Proximal objective `Σ (x − x°)²` at `out`.
    pub fn objective(&self, out: &TimingOutput) -> f64 {
        self.centers()
            .iter()
            .zip(out.values())
            .map(|(c, x)| (x - c).powi(2))
            .sum()
    }

    /// Constraint values `g_i(out)` (feasible iff all ≤ 0).
    pub fn constraints(&self, out: &TimingOutput) -> [f64; 5] {
        [
            out.alpha1_aux + out.alpha2_aux - out.gamma_link,
            self.offload_scale * out.offload_bar.powi(2)
                + self.offload_load.powi(2) / (self.offload_scale * out.compute_aux.powi(2))
                - 2.0 * self.alpha1,
            self.rate_scale * out.offload_tilde.powi(2)
                + self.comm_load.powi(2) / (self.rate_scale * self.rate.powi(2))
                - 2.0 * self.alpha2,
            (1.0 - out.offload_hat) * self.local_time - out.gamma_local,
            out.rate_aux - (1.0 + self.sinr).log2(),
        ]
    }
}

impl TimingOutput {
    pub fn values(&self) -> [f64; 9] {
        [
            self.gamma_link,
            self.gamma_local,
            self.alpha1_aux,
            self.alpha2_aux,
            self.offload_bar,
            self.offload_hat,
            self.offload_tilde,
            self.compute_aux,
            self.rate_aux,
        ]
    }

    pub fn from_values(v: [f64; 9], multipliers: [f64; 5]) -> Self {
        Self {
            gamma_link: v[0],
            gamma_local: v[1],
            alpha1_aux: v[2],
            alpha2_aux: v[3],
            offload_bar: v[4],
            offload_hat: v[5],
            offload_tilde: v[6],
            compute_aux: v[7],
            rate_aux: v[8],
            multipliers,
        }
    }
}

pub fn update_timing_aux(input: &TimingInput) -> Result<TimingOutput> {
    let [cg, cgl, ca1, ca2, cdb, cdh, cdt, cp, cr] = input.centers();

    // 1. half-space {α̃₁ + α̃₂ − γ_k ≤ 0}
    let k1 = (2.0 * (ca1 + ca2 - cg) / 3.0).max(0.0);
    let (gamma_link, alpha1_aux, alpha2_aux) = (cg + k1 / 2.0, ca1 - k1 / 2.0, ca2 - k1 / 2.0);

    // 2. {s₁δ̄² + a²/(s₁Ψ̃²) ≤ 2α₁}
    let (offload_bar, compute_aux, k2) = offload_time_projection(
        cdb,
        cp,
        input.offload_load,
        input.offload_scale,
        input.alpha1,
    )?;

    // 3. interval |δ̃| ≤ r
    let s2 = input.rate_scale;
    let room = 2.0 * input.alpha2 - input.comm_load.powi(2) / (s2 * input.rate.powi(2));
    if !(room >= 0.0) {
        return Err(Error::numeric(
            "timing auxiliaries",
            format!("transmission-time bound leaves no room for δ̃ (2α₂ − b²/(s₂Γ²) = {room})"),
        ));
    }
    let r = (room / s2).sqrt();
    let offload_tilde = cdt.clamp(-r, r);
    let k3 = if cdt.abs() > r && r > 0.0 {
        (cdt.abs() / r - 1.0) / s2
    } else {
        0.0
    };

    // 4. half-space {(1 − δ̂)c − γ̃_k ≤ 0}
    let c = input.local_time;
    let k4 = (2.0 * (c * (1.0 - cdh) - cgl) / (1.0 + c * c)).max(0.0);
    let (gamma_local, offload_hat) = (cgl + k4 / 2.0, cdh + k4 * c / 2.0);

    // 5. upper bound on Γ̃
    let cap = (1.0 + input.sinr).log2();
    let (rate_aux, k5) = if cr > cap { (cap, 2.0 * (cr - cap)) } else { (cr, 0.0) };

    Ok(TimingOutput {
        gamma_link,
        gamma_local,
        alpha1_aux,
        alpha2_aux,
        offload_bar,
        offload_hat,
        offload_tilde,
        compute_aux,
        rate_aux,
        multipliers: [k1, k2, k3, k4, k5],
    })
}

/// Positive root of `p⁴ − c p³ − m = 0` (`m > 0`) by Newton from above.
fn quartic_root(c: f64, m: f64) -> f64 {
    let mut p = c.max(0.0) + m.powf(0.25);
    for _ in 0..200 {
        let h = p * p * p * (p - c) - m;
        let dh = p * p * (4.0 * p - 3.0 * c);
        let step = h / dh;
        if !step.is_finite() {
            break;
        }
        let next = p - step;
        if next >= p || step.abs() <= 1e-16 * p {
            p = next.min(p);
            break;
        }
        p = next;
    }
    p
}

/// Projection of `(δ°, Ψ°)` onto `{s δ² + a²/(s Ψ²) ≤ 2α}` with its
/// multiplier.  `δ(μ) = δ°/(1 + μs)` and `Ψ(μ)` solves
/// `Ψ⁴ − Ψ°Ψ³ − μa²/s = 0`; the constraint value is decreasing in `μ`.
fn offload_time_projection(
    cd: f64,
    cp: f64,
    load: f64,
    scale: f64,
    alpha: f64,
) -> Result<(f64, f64, f64)> {
    let at = |mu: f64| -> (f64, f64, f64) {
        let d = cd / (1.0 + mu * scale);
        let p = if mu == 0.0 {
            cp
        } else {
            quartic_root(cp, mu * load * load / scale)
        };
        let g = scale * d * d + load * load / (scale * p * p) - 2.0 * alpha;
        (d, p, if p > 0.0 { g } else { f64::INFINITY })
    };
    if at(0.0).2 > 0.0 && !(alpha > 0.0) {
        return Err(Error::numeric(
            "timing auxiliaries",
            format!("offload-time bound is infeasible for α₁ = {alpha}"),
        ));
    }
    let hi = decreasing_root(|mu| at(mu).2, "offload-time")?;
    let (d, p, _) = at(hi);
    Ok((d, p, hi))
}

/// Proximal centers and data of a time-bound group `{α, δ, r}` under
/// `s δ² + L²/(s r²) ≤ 2α`.  With `(α, δ, r) = (α₁, δ̄, Ψ̃)` and `L = a` this is
/// the offload-time bound; with `(α₂, δ̃, Γ)` and `L = b` the
/// transmission-time bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBoundInput {
    pub alpha_center: f64,
    pub delta_center: f64,
    pub rate_center: f64,
    pub load: f64,
    pub scale: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeBoundOutput {
    pub alpha: f64,
    pub delta: f64,
    pub rate: f64,
    pub multiplier: f64,
}

impl TimeBoundInput {
    pub fn constraint(&self, alpha: f64, delta: f64, rate: f64) -> f64 {
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        self.scale * delta * delta + self.load * self.load / (self.scale * rate * rate) - 2.0 * alpha
    }

    pub fn objective(&self, out: &TimeBoundOutput) -> f64 {
        (out.alpha - self.alpha_center).powi(2)
            + (out.delta - self.delta_center).powi(2)
            + (out.rate - self.rate_center).powi(2)
    }

    fn at(&self, mu: f64) -> TimeBoundOutput {
        let rate = if mu == 0.0 {
            self.rate_center
        } else {
            quartic_root(self.rate_center, mu * self.load * self.load / self.scale)
        };
        TimeBoundOutput {
            alpha: self.alpha_center + mu,
            delta: self.delta_center / (1.0 + mu * self.scale),
            rate,
            multiplier: mu,
        }
    }
}

/// Joint projection onto a time bound: `α = α° + μ`, `δ = δ°/(1 + μs)`,
/// `r⁴ − r°r³ − μL²/s = 0`, with `μ` the root of the decreasing constraint
/// value.  Always feasible.
pub fn update_time_bound(input: &TimeBoundInput) -> Result<TimeBoundOutput> {
    let g = |o: &TimeBoundOutput| input.constraint(o.alpha, o.delta, o.rate);
    let mu = decreasing_root(|mu| g(&input.at(mu)), "time bound")?;
    Ok(input.at(mu))
}

/// Proximal centers of `{Γ̃, ν}` under `Γ̃ ≤ log₂(1 + ν)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePairInput {
    pub rate_center: f64,
    pub sinr_center: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RatePairOutput {
    pub rate_aux: f64,
    pub sinr: f64,
    pub multiplier: f64,
}

impl RatePairInput {
    pub fn constraint(&self, rate_aux: f64, sinr: f64) -> f64 {
        if sinr <= -1.0 {
            return f64::INFINITY;
        }
        rate_aux - (1.0 + sinr).log2()
    }

    pub fn objective(&self, out: &RatePairOutput) -> f64 {
        (out.rate_aux - self.rate_center).powi(2) + (out.sinr - self.sinr_center).powi(2)
    }

    fn at(&self, kappa: f64) -> RatePairOutput {
        // (ν − ν°)(1 + ν) = κ/(2 ln 2)
        let m = kappa / (2.0 * std::f64::consts::LN_2);
        let c = self.sinr_center;
        let sinr = (c - 1.0 + ((1.0 + c).powi(2) + 4.0 * m).sqrt()) / 2.0;
        RatePairOutput {
            rate_aux: self.rate_center - kappa / 2.0,
            sinr,
            multiplier: kappa,
        }
    }
}

/// Joint projection of `(Γ̃, ν)` onto `Γ̃ ≤ log₂(1 + ν)`.
pub fn update_rate_pair(input: &RatePairInput) -> Result<RatePairOutput> {
    let mu = decreasing_root(|k| {
        let o = input.at(k);
        input.constraint(o.rate_aux, o.sinr)
    }, "rate pair")?;
    Ok(input.at(mu))
}

/// Smallest `μ ≥ 0` with `g(μ) ≤ 0` for a decreasing `g`, accurate to the
/// point where `μ·|g(μ)|` is negligible.
fn decreasing_root(g: impl Fn(f64) -> f64, what: &str) -> Result<f64> {
    if g(0.0) <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    let mut doublings = 0;
    while g(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
        doublings += 1;
        if doublings > 200 {
            return Err(Error::numeric(
                "timing auxiliaries",
                format!("no multiplier bracket for the {what} constraint"),
            ));
        }
    }
    for _ in 0..300 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = g(mid);
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
            if -v * hi <= 1e-14 {
                break;
            }
        }
    }
    Ok(hi)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn consistent_input() -> TimingInput {
        // δ = 0.5, Ψ = 0.5, Γ = 4, ν = 15, a = 0.1, b = 0.2, c = 2.5
        let (d, p, r) = (0.5, 0.5, 4.0);
        let (a, b, c) = (0.1, 0.2, 2.5);
        let alpha1 = d * a / p;
        let alpha2 = d * b / r;
        TimingInput {
            gamma: 2.0,
            alpha1: alpha1 * 1.5,
            alpha2: alpha2 * 1.5,
            offload: d,
            compute: p,
            rate: r - 0.5,
            sinr: 15.0,
            duals: TimingDuals::default(),
            kappa: 1.0,
            offload_scale: (a / p) / d,
            rate_scale: (b / r) / d,
            offload_load: a,
            comm_load: b,
            local_time: c,
        }
    }

    #[test]
    fn slack_constraints_give_fixed_point() {
        let mut input = consistent_input();
        input.gamma = 3.0;
        let out = update_timing_aux(&input).unwrap();
        assert_eq!(out.multipliers, [0.0; 5]);
        assert_eq!(out.values(), input.centers());
        assert_eq!(out.gamma_link, input.gamma);
    }

    #[test]
    fn violated_delay_link_becomes_active() {
        let mut input = consistent_input();
        input.alpha1 = 2.0;
        input.alpha2 = 2.0;
        let out = update_timing_aux(&input).unwrap();
        assert!(out.multipliers[0] > 0.0);
        assert!((out.alpha1_aux + out.alpha2_aux - out.gamma_link).abs() < 1e-12);
    }

    #[test]
    fn infeasible_offload_bound_is_reported() {
        let mut input = consistent_input();
        input.alpha1 = 0.0;
        input.duals.offload_bar = 0.3;
        let err = update_timing_aux(&input).unwrap_err();
        assert!(err.to_string().contains("timing auxiliaries"));
    }

    #[test]
    fn quartic_root_solves() {
        for (c, m) in [(1.0, 0.5), (-2.0, 3.0), (0.0, 1e-6), (5.0, 1e4)] {
            let p = quartic_root(c, m);
            assert!(p > 0.0);
            assert!((p.powi(3) * (p - c) - m).abs() <= 1e-10 * m.max(1.0));
        }
    }

    #[test]
    fn time_bound_keeps_feasible_centers() {
        let input = TimeBoundInput {
            alpha_center: 1.0,
            delta_center: 0.5,
            rate_center: 0.5,
            load: 0.1,
            scale: 1.0,
        };
        let out = update_time_bound(&input).unwrap();
        assert_eq!(out.multiplier, 0.0);
        assert_eq!((out.alpha, out.delta, out.rate), (1.0, 0.5, 0.5));
    }

    #[test]
    fn time_bound_active_is_tight_and_stationary() {
        let input = TimeBoundInput {
            alpha_center: 0.01,
            delta_center: 0.9,
            rate_center: 0.2,
            load: 0.2,
            scale: 0.7,
        };
        let out = update_time_bound(&input).unwrap();
        let g = input.constraint(out.alpha, out.delta, out.rate);
        assert!(out.multiplier > 0.0);
        assert!(g <= 0.0 && g.abs() * out.multiplier <= 1e-8);
        // ∇ of Σ(x − x°)² + κ·g vanishes
        let mu = out.multiplier;
        let ga = 2.0 * (out.alpha - input.alpha_center) - 2.0 * mu;
        let gd = 2.0 * (out.delta - input.delta_center) + 2.0 * mu * input.scale * out.delta;
        let gr = 2.0 * (out.rate - input.rate_center)
            - 2.0 * mu * input.load.powi(2) / (input.scale * out.rate.powi(3));
        assert!(ga.abs() < 1e-9 && gd.abs() < 1e-9 && gr.abs() < 1e-9, "{ga} {gd} {gr}");
    }

    #[test]
    fn rate_pair_projects_onto_log_curve() {
        let input = RatePairInput {
            rate_center: 3.0,
            sinr_center: 1.0,
        };
        let out = update_rate_pair(&input).unwrap();
        assert!(out.multiplier > 0.0);
        assert!(input.constraint(out.rate_aux, out.sinr).abs() < 1e-10);
        assert!(out.rate_aux < 3.0 && out.sinr > 1.0);
        let free = update_rate_pair(&RatePairInput {
            rate_center: 0.5,
            sinr_center: 1.0,
        })
        .unwrap();
        assert_eq!((free.rate_aux, free.sinr, free.multiplier), (0.5, 1.0, 0.0));
    }
}
