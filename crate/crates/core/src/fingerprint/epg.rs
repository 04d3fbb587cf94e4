//! Extended phase graph simulation of a gradient-spoiled FISP train.
//!
//! Configuration states are stored as `F+_k`, `F-_k` and `Z_k` for
//! `k = 0..=d0+1`. RF pulses are applied about the y axis (phase 90 deg),
//! which keeps every state real, so the simulation runs in real arithmetic
//! and the sampled `F+_0` is the recorded signal. Each TR ends with an ideal
//! spoiler that shifts all F states by one dephasing order.

use num_complex::Complex64;

use super::schedule::{SequenceSchedule, TissueParams};
use crate::error::{domain, Result};

/// RF phase used for every pulse, in degrees.
pub const RF_PHASE_DEG: f64 = 90.0;

/// Per-voxel signal time series.
#[derive(Clone, Debug, PartialEq)]
pub struct Fingerprint {
    pub values: Vec<f64>,
}

/// State-mixing matrix of an instantaneous RF pulse acting on `(F+, F-, Z)`.
///
/// Follows the usual EPG transition matrix for flip `alpha` and phase
/// `phi`; here `phi` is fixed at [`RF_PHASE_DEG`].
pub fn rf_rotation(alpha_deg: f64) -> Result<[[Complex64; 3]; 3]> {
    if !(0.0..=180.0).contains(&alpha_deg) {
        return domain(format!("flip angle {alpha_deg} deg outside [0, 180]"));
    }
    let a = alpha_deg.to_radians();
    let phi = RF_PHASE_DEG.to_radians();
    let c2 = (a / 2.0).cos().powi(2);
    let s2 = (a / 2.0).sin().powi(2);
    let sa = a.sin();
    let e = |k: f64| Complex64::from_polar(1.0, k * phi);
    let i = Complex64::i();
    Ok([
        [c2.into(), e(2.0) * s2, -i * e(1.0) * sa],
        [e(-2.0) * s2, c2.into(), i * e(-1.0) * sa],
        [
            -i * 0.5 * e(-1.0) * sa,
            i * 0.5 * e(1.0) * sa,
            a.cos().into(),
        ],
    ])
}

/// Real form of [`rf_rotation`] at phase 90 deg, with the exact zeros that
/// the complex form only reaches up to rounding.
fn real_rotation(alpha_deg: f64) -> [[f64; 3]; 3] {
    if alpha_deg == 180.0 {
        return [[0.0, -1.0, 0.0], [-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]];
    }
    let a = alpha_deg.to_radians();
    let c2 = (a / 2.0).cos().powi(2);
    let s2 = (a / 2.0).sin().powi(2);
    let sa = a.sin();
    [
        [c2, -s2, sa],
        [-s2, c2, sa],
        [-0.5 * sa, -0.5 * sa, a.cos()],
    ]
}

struct EpgState {
    fp: Vec<f64>,
    fm: Vec<f64>,
    z: Vec<f64>,
    /// Number of possibly non-zero orders.
    active: usize,
}

impl EpgState {
    fn equilibrium(max_order: usize) -> Self {
        let mut z = vec![0.0; max_order + 1];
        z[0] = 1.0;
        Self {
            fp: vec![0.0; max_order + 1],
            fm: vec![0.0; max_order + 1],
            z,
            active: 1,
        }
    }

    fn rotate(&mut self, r: &[[f64; 3]; 3]) {
        for k in 0..self.active {
            let (p, m, z) = (self.fp[k], self.fm[k], self.z[k]);
            self.fp[k] = r[0][0] * p + r[0][1] * m + r[0][2] * z;
            self.fm[k] = r[1][0] * p + r[1][1] * m + r[1][2] * z;
            self.z[k] = r[2][0] * p + r[2][1] * m + r[2][2] * z;
        }
    }

    fn relax(&mut self, e1: f64, e2: f64) {
        for k in 0..self.active {
            self.fp[k] *= e2;
            self.fm[k] *= e2;
            self.z[k] *= e1;
        }
        self.z[0] += 1.0 - e1;
    }

    fn spoil(&mut self) {
        let n = self.active;
        let top = self.fp.len() - 1;
        // F+ orders move up, F- orders move down towards (and through) zero.
        let upper = n.min(top);
        for k in (1..=upper).rev() {
            self.fp[k] = self.fp[k - 1];
        }
        for k in 0..upper {
            self.fm[k] = self.fm[k + 1];
        }
        self.fm[upper] = 0.0;
        self.fp[0] = self.fm[0];
        self.active = (n + 1).min(self.fp.len());
    }
}

/// Simulates the FISP signal sampled at TE after every excitation.
pub fn simulate_fingerprint(schedule: &SequenceSchedule, tissue: &TissueParams) -> Fingerprint {
    let mut values = simulate_unit(schedule, tissue.t1_ms, tissue.t2_ms);
    if tissue.pd != 1.0 {
        values.iter_mut().for_each(|v| *v *= tissue.pd);
    }
    Fingerprint { values }
}

/// Signal for unit proton density.
pub(crate) fn simulate_unit(schedule: &SequenceSchedule, t1_ms: f64, t2_ms: f64) -> Vec<f64> {
    let d0 = schedule.d0();
    let te = schedule.te_ms();
    let mut state = EpgState::equilibrium(d0 + 1);
    let decay = |dt: f64| ((-dt / t1_ms).exp(), (-dt / t2_ms).exp());

    let delay = schedule.inversion_delay_ms();
    if delay > 0.0 {
        state.rotate(&real_rotation(180.0));
        let (e1, e2) = decay(delay);
        state.relax(e1, e2);
    }

    let (e1_te, e2_te) = decay(te);
    let mut cached_tr = f64::NAN;
    let mut rest = (0.0, 0.0);
    let mut cached_alpha = f64::NAN;
    let mut rot = real_rotation(0.0);
    let mut out = Vec::with_capacity(d0);
    for (&alpha, &tr) in schedule.flip_angles_deg().iter().zip(schedule.tr_ms()) {
        if alpha != cached_alpha {
            rot = real_rotation(alpha);
            cached_alpha = alpha;
        }
        if tr != cached_tr {
            rest = decay(tr - te);
            cached_tr = tr;
        }
        state.rotate(&rot);
        state.relax(e1_te, e2_te);
        out.push(state.fp[0]);
        state.relax(rest.0, rest.1);
        state.spoil();
    }
    out
}
