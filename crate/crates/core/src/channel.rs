//! Field-response channel model for planar movable-antenna arrays.
//!
//! A path with elevation `ϑ` and azimuth `ψ` contributes the phase
//! `(2π/λ)·(x cosϑ cosψ + y cosϑ sinψ + h sinϑ)` at antenna coordinate
//! `(x, y)`, where the height term `h` is only nonzero on the base-station
//! side.  Channels are `A(p_r)ᴴ Σ A(p_t)` with one row of `A` per path.

use std::f64::consts::PI;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::{CMatrix, CVector, Error, Position, Result, C64};

/// Angles and complex gains of a set of propagation paths.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathSet {
    elevations: Vec<f64>,
    azimuths: Vec<f64>,
    gains: Vec<C64>,
}

impl PathSet {
    pub fn new(elevations: Vec<f64>, azimuths: Vec<f64>, gains: Vec<C64>) -> Result<Self> {
        if elevations.len() != azimuths.len() || gains.len() != elevations.len() {
            return Err(Error::InvalidGeometry(format!(
                "path set lengths differ: {} elevations, {} azimuths, {} gains",
                elevations.len(),
                azimuths.len(),
                gains.len()
            )));
        }
        if elevations.is_empty() {
            return Err(Error::InvalidGeometry("path set is empty".into()));
        }
        for &a in elevations.iter().chain(&azimuths) {
            if !(0.0..=PI).contains(&a) {
                return Err(Error::InvalidGeometry(format!(
                    "path angle {a} outside [0, π]"
                )));
            }
        }
        Ok(Self {
            elevations,
            azimuths,
            gains,
        })
    }

    pub fn len(&self) -> usize {
        self.gains.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gains.is_empty()
    }

    pub fn elevations(&self) -> &[f64] {
        &self.elevations
    }

    pub fn azimuths(&self) -> &[f64] {
        &self.azimuths
    }

    pub fn gains(&self) -> &[C64] {
        &self.gains
    }

    /// Same angles with every gain multiplied by `scale`.
    pub fn with_scaled_gains(&self, scale: C64) -> Self {
        Self {
            gains: self.gains.iter().map(|g| g * scale).collect(),
            ..self.clone()
        }
    }

    /// Same angles with new gains.
    pub fn with_gains(&self, gains: Vec<C64>) -> Result<Self> {
        Self::new(self.elevations.clone(), self.azimuths.clone(), gains)
    }

    /// In-plane direction `(cosϑ cosψ, cosϑ sinψ)` of path `l`.
    pub fn direction(&self, l: usize) -> Vector2<f64> {
        let (e, a) = (self.elevations[l], self.azimuths[l]);
        Vector2::new(e.cos() * a.cos(), e.cos() * a.sin())
    }

    /// Per-path phase data scaled by `2π/λ`: in-plane wave vector and the
    /// position-independent offset from `height_term`.
    pub fn wave_vectors(&self, height_term: f64, wavelength: f64) -> Vec<(Vector2<f64>, f64)> {
        let k = 2.0 * PI / wavelength;
        (0..self.len())
            .map(|l| {
                (
                    self.direction(l) * k,
                    k * height_term * self.elevations[l].sin(),
                )
            })
            .collect()
    }
}

/// Antenna coordinates of every UE array and of the base-station array.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AntennaLayout {
    pub ue_positions: Vec<Vec<Position>>,
    pub bs_positions: Vec<Position>,
    pub bs_height: f64,
}

/// Field-response vector `a(p)`: entry `l` is `exp(j·(2π/λ)·phase_l(p))`.
pub fn field_response_vector(
    position: &Position,
    height_term: f64,
    paths: &PathSet,
    wavelength: f64,
) -> CVector {
    CVector::from_iterator(
        paths.len(),
        paths
            .wave_vectors(height_term, wavelength)
            .into_iter()
            .map(|(d, o)| C64::from_polar(1.0, d.dot(position) + o)),
    )
}

/// Field-response matrix with one column per antenna (`L × N`).
pub fn response_matrix(
    positions: &[Position],
    height_term: f64,
    paths: &PathSet,
    wavelength: f64,
) -> CMatrix {
    let waves = paths.wave_vectors(height_term, wavelength);
    CMatrix::from_fn(paths.len(), positions.len(), |l, n| {
        let (d, o) = waves[l];
        C64::from_polar(1.0, d.dot(&positions[n]) + o)
    })
}

/// `A(p_r)ᴴ diag(g) A(p_k)` for UE `ue_index`; gains come from `ue_paths`.
pub fn uplink_channel(
    layout: &AntennaLayout,
    ue_index: usize,
    ue_paths: &PathSet,
    rx_paths: &PathSet,
    wavelength: f64,
) -> Result<CMatrix> {
    if ue_paths.len() != rx_paths.len() {
        return Err(Error::InvalidGeometry(format!(
            "transmit side has {} paths, receive side has {}",
            ue_paths.len(),
            rx_paths.len()
        )));
    }
    let tx = layout.ue_positions.get(ue_index).ok_or_else(|| {
        Error::InvalidGeometry(format!("layout has no UE with index {ue_index}"))
    })?;
    let a_t = response_matrix(tx, 0.0, ue_paths, wavelength);
    let a_r = response_matrix(&layout.bs_positions, layout.bs_height, rx_paths, wavelength);
    Ok(sandwich(&a_r, ue_paths.gains(), &a_t))
}

/// `A_J(p_r)ᴴ diag(g̃) Ã_J` where `Ã_J` is the fixed jammer-side response.
pub fn jammer_channel(
    layout: &AntennaLayout,
    jam_rx_paths: &PathSet,
    jam_tx_response: &CMatrix,
    wavelength: f64,
) -> Result<CMatrix> {
    if jam_tx_response.nrows() != jam_rx_paths.len() {
        return Err(Error::InvalidGeometry(format!(
            "jammer response has {} rows for {} paths",
            jam_tx_response.nrows(),
            jam_rx_paths.len()
        )));
    }
    let a_r = response_matrix(
        &layout.bs_positions,
        layout.bs_height,
        jam_rx_paths,
        wavelength,
    );
    Ok(sandwich(&a_r, jam_rx_paths.gains(), jam_tx_response))
}

fn sandwich(a_r: &CMatrix, gains: &[C64], a_t: &CMatrix) -> CMatrix {
    let mut scaled = a_t.clone();
    for (l, g) in gains.iter().enumerate() {
        for v in scaled.row_mut(l).iter_mut() {
            *v *= g;
        }
    }
    a_r.adjoint() * scaled
}

/// SINR and spectral efficiency of one uplink stream.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkQuality {
    pub sinr: f64,
    /// bits/s/Hz
    pub rate: f64,
    /// The combiner was identically zero; SINR reported as 0.
    pub degenerate: bool,
}

/// Post-combining SINR of every UE with linear interference, noise and
/// beamformed jamming in the denominator.
pub fn sinr_and_rate(
    channels: &[CMatrix],
    jam: &CMatrix,
    precoders: &[CVector],
    combiners: &[CVector],
    jam_signal: &CVector,
    noise_power: f64,
) -> Vec<LinkQuality> {
    let received: Vec<CVector> = channels
        .iter()
        .zip(precoders)
        .map(|(h, w)| h * w)
        .collect();
    let jam_rx = jam * jam_signal;
    combiners
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let f_norm = f.norm_squared();
            if f_norm == 0.0 {
                return LinkQuality {
                    sinr: 0.0,
                    rate: 0.0,
                    degenerate: true,
                };
            }
            let signal = f.dotc(&received[k]).norm_sqr();
            let interference: f64 = received
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != k)
                .map(|(_, r)| f.dotc(r).norm_sqr())
                .sum();
            let denom = interference + f_norm * noise_power + f.dotc(&jam_rx).norm_sqr();
            let sinr = signal / denom;
            LinkQuality {
                sinr,
                rate: (1.0 + sinr).log2(),
                degenerate: false,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn paths(e: &[f64], a: &[f64], g: &[C64]) -> PathSet {
        PathSet::new(e.to_vec(), a.to_vec(), g.to_vec()).unwrap()
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn origin_gives_all_ones() {
        let p = paths(&[0.3, 1.2], &[2.0, 0.1], &[c(1.0, 0.0), c(0.5, 0.5)]);
        let a = field_response_vector(&Position::zeros(), 0.0, &p, 0.1);
        for z in a.iter() {
            assert!((z - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn vertical_path_ignores_position() {
        let p = paths(&[PI / 2.0], &[0.7], &[c(1.0, 0.0)]);
        let a = field_response_vector(&Position::new(0.37, -1.4), 0.0, &p, 0.1);
        assert!((a[0] - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn rejects_mismatched_lengths_and_bad_angles() {
        assert!(PathSet::new(vec![0.1], vec![0.1, 0.2], vec![c(1.0, 0.0)]).is_err());
        assert!(PathSet::new(vec![4.0], vec![0.1], vec![c(1.0, 0.0)]).is_err());
        assert!(PathSet::new(vec![], vec![], vec![]).is_err());
    }

    #[test]
    fn single_path_at_origin_is_rank_one_ones() {
        let p = paths(&[0.4], &[1.0], &[c(1.0, 0.0)]);
        let layout = AntennaLayout {
            ue_positions: vec![vec![Position::zeros(); 3]],
            bs_positions: vec![Position::zeros(); 4],
            bs_height: 0.0,
        };
        let h = uplink_channel(&layout, 0, &p, &p, 0.1).unwrap();
        assert_eq!(h.shape(), (4, 3));
        for z in h.iter() {
            assert!((z - c(1.0, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn path_count_mismatch_is_an_error() {
        let p1 = paths(&[0.4], &[1.0], &[c(1.0, 0.0)]);
        let p2 = paths(&[0.4, 0.2], &[1.0, 0.3], &[c(1.0, 0.0); 2]);
        let layout = AntennaLayout {
            ue_positions: vec![vec![Position::zeros()]],
            bs_positions: vec![Position::zeros()],
            bs_height: 0.0,
        };
        assert!(matches!(
            uplink_channel(&layout, 0, &p1, &p2, 0.1),
            Err(Error::InvalidGeometry(_))
        ));
        let bad = CMatrix::from_element(2, 2, c(1.0, 0.0));
        assert!(jammer_channel(&layout, &p1, &bad, 0.1).is_err());
    }

    #[test]
    fn jammer_channel_with_ones_sums_paths() {
        let lj = 8;
        let p = paths(&vec![0.5; lj], &vec![1.0; lj], &vec![c(1.0, 0.0); lj]);
        let layout = AntennaLayout {
            ue_positions: vec![],
            bs_positions: vec![Position::zeros(); 3],
            bs_height: 0.0,
        };
        let tx = CMatrix::from_element(lj, 2, c(1.0, 0.0));
        let h = jammer_channel(&layout, &p, &tx, 0.1).unwrap();
        for z in h.iter() {
            assert!((z - c(lj as f64, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn scalar_sinr() {
        let one = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let v = CVector::from_element(1, c(1.0, 0.0));
        let q = sinr_and_rate(
            &[one.clone()],
            &one,
            &[v.clone()],
            &[v.clone()],
            &CVector::zeros(1),
            1.0,
        );
        assert!((q[0].sinr - 1.0).abs() < 1e-15);
        assert!((q[0].rate - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_combiner_is_degenerate() {
        let one = CMatrix::from_element(1, 1, c(1.0, 0.0));
        let q = sinr_and_rate(
            &[one.clone()],
            &one,
            &[CVector::from_element(1, c(1.0, 0.0))],
            &[CVector::zeros(1)],
            &CVector::zeros(1),
            1.0,
        );
        assert!(q[0].degenerate);
        assert_eq!(q[0].sinr, 0.0);
    }

    fn angle() -> impl Strategy<Value = f64> {
        0.0..=PI
    }

    fn cplx() -> impl Strategy<Value = C64> {
        (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| c(a, b))
    }

    fn path_set(l: usize) -> impl Strategy<Value = PathSet> {
        (
            prop::collection::vec(angle(), l),
            prop::collection::vec(angle(), l),
            prop::collection::vec(cplx(), l),
        )
            .prop_map(|(e, a, g)| PathSet::new(e, a, g).unwrap())
    }

    fn positions(n: usize) -> impl Strategy<Value = Vec<Position>> {
        prop::collection::vec(
            (-0.2..0.2f64, -0.2..0.2f64).prop_map(|(x, y)| Position::new(x, y)),
            n,
        )
    }

    proptest! {
        #[test]
        fn entries_are_unit_modulus(p in path_set(4), pos in positions(5), h in 0.0..20.0f64) {
            let a = response_matrix(&pos, h, &p, 0.1);
            for z in a.iter() {
                prop_assert!((z.norm() - 1.0).abs() < 1e-15);
            }
        }

        #[test]
        fn vector_matches_scalar_phase(p in path_set(3), pos in positions(1), h in 0.0..20.0f64) {
            let a = field_response_vector(&pos[0], h, &p, 0.1);
            for l in 0..3 {
                let (e, az) = (p.elevations()[l], p.azimuths()[l]);
                let ph = pos[0].x * e.cos() * az.cos() + pos[0].y * e.cos() * az.sin() + h * e.sin();
                let want = C64::from_polar(1.0, 2.0 * PI / 0.1 * ph);
                prop_assert!((a[l] - want).norm() < 1e-12);
            }
        }

        #[test]
        fn channel_is_linear_in_gains(tp in path_set(2), rp in path_set(2), t in positions(3), r in positions(4), s in cplx()) {
            let layout = AntennaLayout { ue_positions: vec![t], bs_positions: r, bs_height: 10.0 };
            let h = uplink_channel(&layout, 0, &tp, &rp, 0.1).unwrap();
            let hs = uplink_channel(&layout, 0, &tp.with_scaled_gains(s), &rp, 0.1).unwrap();
            prop_assert!((hs - h * s).norm() < 1e-12);
        }

        #[test]
        fn reversed_link_is_hermitian_transpose(tp in path_set(2), rp in path_set(2), t in positions(3), r in positions(4)) {
            let fwd = AntennaLayout { ue_positions: vec![t.clone()], bs_positions: r.clone(), bs_height: 0.0 };
            let h = uplink_channel(&fwd, 0, &tp, &rp, 0.1).unwrap();
            // swap roles: the receive array transmits through conjugated gains
            let conj: Vec<C64> = tp.gains().iter().map(|g| g.conj()).collect();
            let rev_tx = rp.with_gains(conj).unwrap();
            let rev = AntennaLayout { ue_positions: vec![r], bs_positions: t, bs_height: 0.0 };
            let hr = uplink_channel(&rev, 0, &rev_tx, &tp, 0.1).unwrap();
            prop_assert!((hr.adjoint() - h).norm() < 1e-12);
        }

        #[test]
        fn channel_is_lipschitz_in_position(tp in path_set(2), rp in path_set(2), t in positions(2), r in positions(3), eps in 1e-7..1e-5f64) {
            let mut layout = AntennaLayout { ue_positions: vec![t], bs_positions: r, bs_height: 10.0 };
            let h0 = uplink_channel(&layout, 0, &tp, &rp, 0.1).unwrap();
            layout.bs_positions[1].x += eps;
            let h1 = uplink_channel(&layout, 0, &tp, &rp, 0.1).unwrap();
            let gmax = tp.gains().iter().fold(0.0f64, |m, g| m.max(g.norm()));
            let bound = 2.0 * PI * 2.0 * gmax / 0.1;
            for (a, b) in h0.iter().zip(h1.iter()) {
                prop_assert!((a - b).norm() / eps <= bound * (1.0 + 1e-6));
            }
        }

        #[test]
        fn sinr_invariant_to_combiner_scaling(tp in path_set(2), rp in path_set(2), jp in path_set(3), t in positions(2), r in positions(3), s in cplx()) {
            prop_assume!(s.norm() > 1e-3);
            let layout = AntennaLayout { ue_positions: vec![t.clone(), t], bs_positions: r, bs_height: 10.0 };
            let hs = vec![
                uplink_channel(&layout, 0, &tp, &rp, 0.1).unwrap(),
                uplink_channel(&layout, 1, &rp, &tp, 0.1).unwrap(),
            ];
            let ajt = CMatrix::from_element(3, 2, c(1.0, 0.0));
            let hj = jammer_channel(&layout, &jp, &ajt, 0.1).unwrap();
            let w = vec![CVector::from_element(2, c(1.0, 0.0)), CVector::from_element(2, c(0.0, 1.0))];
            let f = vec![CVector::from_fn(3, |i, _| c(i as f64 + 1.0, 0.5)), CVector::from_element(3, c(1.0, -1.0))];
            let z = CVector::from_element(2, c(0.3, 0.1));
            let q0 = sinr_and_rate(&hs, &hj, &w, &f, &z, 1e-2);
            let fs: Vec<CVector> = f.iter().map(|v| v * s).collect();
            let q1 = sinr_and_rate(&hs, &hj, &w, &fs, &z, 1e-2);
            for (a, b) in q0.iter().zip(&q1) {
                prop_assert!((a.sinr - b.sinr).abs() <= 1e-9 * a.sinr.max(1e-12));
            }
            // stronger jamming strictly lowers every SINR when it reaches the combiner
            let z2 = &z * c(2.0, 0.0);
            let q2 = sinr_and_rate(&hs, &hj, &w, &f, &z2, 1e-2);
            let hz = &hj * &z;
            for k in 0..2 {
                if f[k].dotc(&hz).norm() > 1e-9 && q0[k].sinr > 0.0 {
                    prop_assert!(q2[k].sinr < q0[k].sinr);
                }
            }
        }
    }
}
