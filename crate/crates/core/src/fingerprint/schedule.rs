use std::f64::consts::PI;

use crate::error::{domain, Result};

/// The excitation train of a FISP acquisition: one flip angle and one
/// repetition time per acquired time point.
#[derive(Clone, Debug, PartialEq)]
pub struct SequenceSchedule {
    flip_angles_deg: Vec<f64>,
    tr_ms: Vec<f64>,
    te_ms: f64,
    inversion_delay_ms: f64,
}

impl SequenceSchedule {
    pub fn new(
        flip_angles_deg: Vec<f64>,
        tr_ms: Vec<f64>,
        te_ms: f64,
        inversion_delay_ms: f64,
    ) -> Result<Self> {
        if flip_angles_deg.is_empty() {
            return domain("schedule must contain at least one excitation");
        }
        if flip_angles_deg.len() != tr_ms.len() {
            return domain(format!(
                "{} flip angles but {} repetition times",
                flip_angles_deg.len(),
                tr_ms.len()
            ));
        }
        if !(te_ms.is_finite() && te_ms >= 0.0) {
            return domain(format!("te_ms must be finite and >= 0, got {te_ms}"));
        }
        if !(inversion_delay_ms.is_finite() && inversion_delay_ms >= 0.0) {
            return domain(format!(
                "inversion_delay_ms must be >= 0, got {inversion_delay_ms}"
            ));
        }
        for (i, &a) in flip_angles_deg.iter().enumerate() {
            if !(0.0..=180.0).contains(&a) {
                return domain(format!("flip angle {i} = {a} deg outside [0, 180]"));
            }
        }
        for (i, &tr) in tr_ms.iter().enumerate() {
            if !(tr.is_finite() && tr > te_ms) {
                return domain(format!("tr_ms[{i}] = {tr} must exceed te_ms = {te_ms}"));
            }
        }
        Ok(Self {
            flip_angles_deg,
            tr_ms,
            te_ms,
            inversion_delay_ms,
        })
    }

    /// Inversion-prepared train with constant TR and flip angles following
    /// four half-sine lobes of decreasing amplitude, peaking at `flip_max_deg`.
    pub fn sinusoidal(
        d0: usize,
        flip_max_deg: f64,
        tr_ms: f64,
        te_ms: f64,
        inversion_delay_ms: f64,
    ) -> Result<Self> {
        if d0 == 0 {
            return domain("d0 must be positive");
        }
        const LOBES: [f64; 4] = [1.0, 0.55, 0.85, 0.35];
        let flips = (0..d0)
            .map(|n| {
                let pos = (n as f64 + 0.5) / d0 as f64 * LOBES.len() as f64;
                let lobe = (pos.floor() as usize).min(LOBES.len() - 1);
                flip_max_deg * LOBES[lobe] * (PI * pos.fract()).sin()
            })
            .collect();
        Self::new(flips, vec![tr_ms; d0], te_ms, inversion_delay_ms)
    }

    pub fn d0(&self) -> usize {
        self.flip_angles_deg.len()
    }

    pub fn flip_angles_deg(&self) -> &[f64] {
        &self.flip_angles_deg
    }

    pub fn tr_ms(&self) -> &[f64] {
        &self.tr_ms
    }

    pub fn te_ms(&self) -> f64 {
        self.te_ms
    }

    pub fn inversion_delay_ms(&self) -> f64 {
        self.inversion_delay_ms
    }
}

impl Default for SequenceSchedule {
    /// 200 excitations, 18 ms inversion delay, flips in [0, 70] deg, TR 12 ms, TE 2 ms.
    fn default() -> Self {
        Self::sinusoidal(200, 70.0, 12.0, 2.0, 18.0).expect("default schedule is valid")
    }
}

/// Relaxation times and proton density of one tissue.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TissueParams {
    pub t1_ms: f64,
    pub t2_ms: f64,
    pub pd: f64,
}

impl TissueParams {
    pub fn new(t1_ms: f64, t2_ms: f64, pd: f64) -> Result<Self> {
        if !(t1_ms.is_finite() && t1_ms > 0.0) || !(t2_ms.is_finite() && t2_ms > 0.0) {
            return domain(format!(
                "relaxation times must be positive: t1={t1_ms}, t2={t2_ms}"
            ));
        }
        if t2_ms > t1_ms {
            return domain(format!("t2 ({t2_ms}) exceeds t1 ({t1_ms})"));
        }
        if !(pd.is_finite() && pd >= 0.0) {
            return domain(format!("pd must be >= 0, got {pd}"));
        }
        Ok(Self { t1_ms, t2_ms, pd })
    }
}
