//! Four-parameter quantum-beat fit with a multi-start over the splitting.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{fit_least_squares, FitResult, Observation, ParamSpec};
use crate::correlation::{beat_pattern, BeatCoefficients, CoherenceParams};
use crate::error::{Error, Result};
use crate::histogram::{BinnedSeries, TauRange};
use crate::model::GateWindow;

/// Starting splittings [GHz]: 0.5 to 1.5 in steps of 0.05.
pub const SPLITTING_GRID_GHZ: (f64, f64, f64) = (0.5, 1.5, 0.05);

/// Fixed inputs of the beat fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatFitSetup {
    /// Γ [ns⁻¹].
    pub decay_rate: f64,
    /// γ [ns⁻¹].
    pub coherence_decay: f64,
    pub c2_over_c1: f64,
    pub c3_over_c1: f64,
    #[serde(default = "GateWindow::open")]
    pub gate: GateWindow,
    /// Moving-average order applied to the data; replicated in the model.
    pub smoothing: usize,
    /// Starting value for σ_det [ns].
    #[serde(default = "default_sigma")]
    pub sigma_det_init: f64,
}

fn default_sigma() -> f64 {
    0.15
}

fn splitting_starts() -> Vec<f64> {
    let (lo, hi, step) = SPLITTING_GRID_GHZ;
    let n = ((hi - lo) / step).round() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

/// Fits c₁, t₀, δν and σ_det of the beat model to a binned series (already
/// smoothed with `setup.smoothing`). Weights are Poisson, σ = √max(y, 1).
/// Every start on the splitting grid is fitted and the lowest χ² wins.
pub fn fit_beat<H: BinnedSeries + ?Sized>(hist: &H, setup: &BeatFitSetup) -> Result<FitResult> {
    let y = hist.values();
    let bw = hist.bin_width();
    let tau_min = hist.tau_min();
    let range = TauRange::new(tau_min, tau_min + y.len() as f64 * bw)?;
    let data: Vec<Observation> = y
        .iter()
        .enumerate()
        .map(|(i, &v)| Observation::new(hist.bin_center(i), v, v.max(1.0).sqrt()))
        .collect();
    if y.iter().all(|v| *v <= 0.0) {
        return Err(Error::Degenerate("beat histogram is empty".into()));
    }

    let pattern = |p: &[f64]| -> Result<Vec<f64>> {
        let cp = CoherenceParams::new(setup.decay_rate, setup.coherence_decay, p[2])?;
        let bc = BeatCoefficients {
            c1: p[0],
            c2: p[0] * setup.c2_over_c1,
            c3: p[0] * setup.c3_over_c1,
            t0: p[1],
            sigma_det: p[3],
        };
        beat_pattern(range, &cp, &bc, &setup.gate, bw, setup.smoothing)
    };
    let model = |p: &[f64], _xs: &[f64]| pattern(p);

    let attempts: Vec<Result<FitResult>> = splitting_starts()
        .into_par_iter()
        .map(|nu| {
            let unit = pattern(&[1.0, 0.0, nu, setup.sigma_det_init])?;
            let (num, den) = unit
                .iter()
                .zip(&y)
                .fold((0.0, 0.0), |(n, d), (m, v)| (n + m * v, d + m * m));
            let c1 = if den > 0.0 { num / den } else { 1.0 };
            let specs = [
                ParamSpec::new("c1", c1, c1.abs().max(1.0)).bounded(0.0, f64::INFINITY),
                ParamSpec::new("t0", 0.0, 0.1),
                ParamSpec::new("splitting_ghz", nu, 1.0).bounded(0.0, f64::INFINITY),
                ParamSpec::new("sigma_det", setup.sigma_det_init, 0.1).bounded(0.0, f64::INFINITY),
            ];
            fit_least_squares(&model, &data, &specs)
        })
        .collect();

    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for a in attempts {
        match a {
            Ok(r) => {
                if best.as_ref().is_none_or(|b| r.chi_square < b.chi_square) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.unwrap())
}
