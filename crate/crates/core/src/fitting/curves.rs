//! Saturation, gated-visibility, vibronic-dephasing and Rabi fits.

use serde::{Deserialize, Serialize};

use super::{fit_least_squares, FitResult, Observation, ParamSpec};
use crate::correlation::{gated_visibility, CoherenceParams};
use crate::dephasing::{dephasing_rate, VibronicParams};
use crate::error::{Error, Result};
use crate::spin::{flipped_population, SpinParams};
use crate::spectroscopy::saturation_intensity;

/// Fits I(E) = I₀(1 − e^{−E/E₀}); parameters `i0` and `e0` [pJ].
pub fn fit_saturation(points: &[Observation]) -> Result<FitResult> {
    let y_max = points.iter().map(|o| o.y).fold(f64::NEG_INFINITY, f64::max);
    if !(y_max > 0.0) {
        return Err(Error::Degenerate("saturation data contain no positive counts".into()));
    }
    let i0 = 1.2 * y_max;
    // first energy reaching 1 − 1/e of the plateau estimate
    let e0 = points
        .iter()
        .filter(|o| o.y >= 0.632 * i0)
        .map(|o| o.x)
        .fold(f64::INFINITY, f64::min);
    let e0 = if e0.is_finite() && e0 > 0.0 {
        e0
    } else {
        points.iter().map(|o| o.x).fold(0.0, f64::max).max(1e-3)
    };
    let model = |p: &[f64], xs: &[f64]| -> Result<Vec<f64>> {
        xs.iter().map(|&e| saturation_intensity(e, p[1], p[0])).collect()
    };
    let specs = [
        ParamSpec::new("i0", i0, i0).bounded(0.0, f64::INFINITY),
        ParamSpec::new("e0", e0, e0).bounded(1e-9, f64::INFINITY),
    ];
    fit_least_squares(&model, points, &specs)
}

/// One-parameter fit of the gated visibility for windows of width x = Δt [ns]
/// to measured visibilities; returns `gamma` [ns⁻¹].
pub fn fit_gamma_from_visibility(points: &[Observation], decay_rate: f64) -> Result<FitResult> {
    if points.len() < 2 {
        return Err(Error::param("points", "need at least 2 visibility points"));
    }
    if let Some(o) = points.iter().find(|o| !(o.y > 0.0 && o.y <= 1.0)) {
        return Err(Error::param("points", format!("visibility must lie in (0, 1], got {}", o.y)));
    }
    if !(decay_rate > 0.0) {
        return Err(Error::param("decay_rate", "must be > 0"));
    }
    // ungated asymptote V = Γ/(Γ + γ) at the widest window
    let widest = points.iter().max_by(|a, b| a.x.total_cmp(&b.x)).unwrap();
    let init = decay_rate * (1.0 / widest.y - 1.0);
    let model = |p: &[f64], xs: &[f64]| -> Result<Vec<f64>> {
        let cp = CoherenceParams::new(decay_rate, p[0], 0.0)?;
        xs.iter().map(|&w| gated_visibility(&cp, w)).collect()
    };
    let specs = [ParamSpec::new("gamma", init, init.max(0.01 * decay_rate)).bounded(0.0, f64::INFINITY)];
    fit_least_squares(&model, points, &specs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibronicRow {
    pub temperature_k: f64,
    /// γ′ [ns⁻¹].
    pub rate: f64,
    /// Standard error of γ′ [ns⁻¹].
    pub sigma: f64,
}

/// Least-squares A in γ′(T) = A·ΔE³/(e^{ΔE/k_BT} − 1) at fixed ΔE. With
/// `weighted = false` every row gets unit weight.
pub fn fit_vibronic_prefactor(rows: &[VibronicRow], gap_mev: f64, weighted: bool) -> Result<FitResult> {
    if rows.is_empty() {
        return Err(Error::param("rows", "need at least one row"));
    }
    let probe = VibronicParams { prefactor: 1.0, gap_mev };
    probe.validate()?;
    let data: Vec<Observation> = rows
        .iter()
        .map(|r| Observation::new(r.temperature_k, r.rate, if weighted { r.sigma } else { 1.0 }))
        .collect();
    let first = &rows[0];
    let init = first.rate / probe.thermal_factor(first.temperature_k);
    let model = |p: &[f64], xs: &[f64]| -> Result<Vec<f64>> {
        let vp = VibronicParams { prefactor: p[0], gap_mev };
        Ok(xs.iter().map(|&t| dephasing_rate(&vp, t)).collect())
    };
    let init = if init.is_finite() && init > 0.0 { init } else { 1.0 };
    fit_least_squares(&model, &data, &[ParamSpec::new("prefactor", init, init)])
}

/// Flip curves for both initial subspaces at common pulse durations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RabiCurves {
    pub durations_ns: Vec<f64>,
    pub from_half: Vec<f64>,
    pub from_three_half: Vec<f64>,
}

fn normalize(v: &[f64]) -> Option<Vec<f64>> {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(m > 0.0) || m - lo < 1e-9 {
        return None;
    }
    Some(v.iter().map(|x| x / m).collect())
}

impl RabiCurves {
    /// Simulated curves at the given spin parameters.
    pub fn simulate(sp: &SpinParams, durations_ns: &[f64]) -> Result<Self> {
        Ok(Self {
            durations_ns: durations_ns.to_vec(),
            from_half: flipped_population(sp, durations_ns, false)?,
            from_three_half: flipped_population(sp, durations_ns, true)?,
        })
    }
}

/// Joint fit of (Ω, B_z) to both flip curves, each normalized to its own
/// maximum (data and model alike). Other spin parameters come from `base`,
/// which also supplies the starting point.
pub fn fit_rabi(curves: &RabiCurves, base: &SpinParams) -> Result<FitResult> {
    base.validate()?;
    let n = curves.durations_ns.len();
    if curves.from_half.len() != n || curves.from_three_half.len() != n {
        return Err(Error::param("curves", "curve lengths differ from durations"));
    }
    let (Some(a), Some(b)) = (normalize(&curves.from_half), normalize(&curves.from_three_half)) else {
        return Err(Error::Degenerate("flat Rabi curve: no population transfer to fit".into()));
    };
    // x encodes (curve, duration index) as index + curve·n
    let data: Vec<Observation> = a
        .iter()
        .chain(&b)
        .enumerate()
        .map(|(i, &y)| Observation::new(i as f64, y, 1.0))
        .collect();
    let durations = curves.durations_ns.clone();
    let model = |p: &[f64], _xs: &[f64]| -> Result<Vec<f64>> {
        let mut sp = *base;
        sp.rabi = p[0];
        sp.field_mt = p[1];
        let fa = flipped_population(&sp, &durations, false)?;
        let fb = flipped_population(&sp, &durations, true)?;
        match (normalize(&fa), normalize(&fb)) {
            (Some(mut x), Some(y)) => {
                x.extend(y);
                Ok(x)
            }
            _ => Err(Error::Degenerate("model curve is flat at the trial point".into())),
        }
    };
    let specs = [
        ParamSpec::new("rabi", base.rabi, base.rabi.max(1e-3)).bounded(1e-6, f64::INFINITY),
        ParamSpec::new("field_mt", base.field_mt, base.field_mt.abs().max(1e-3)),
    ];
    fit_least_squares(&model, &data, &specs)
}
