//! Analytic two-photon coincidence densities, gated HOM visibility and the
//! three-component quantum-beat pattern.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::{moving_average, TauRange};
use crate::model::{EmitterParams, GateWindow};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoherenceParams {
    /// Γ [ns⁻¹].
    pub decay_rate: f64,
    /// Total coherence decay γ [ns⁻¹].
    pub coherence_decay: f64,
    /// Line splitting δν [GHz].
    pub splitting_ghz: f64,
}

impl CoherenceParams {
    pub fn new(decay_rate: f64, coherence_decay: f64, splitting_ghz: f64) -> Result<Self> {
        if !(decay_rate > 0.0) {
            return Err(Error::param("decay_rate", format!("must be > 0, got {decay_rate}")));
        }
        if !(coherence_decay >= 0.0) {
            return Err(Error::param("coherence_decay", format!("must be >= 0, got {coherence_decay}")));
        }
        Ok(Self {
            decay_rate,
            coherence_decay,
            splitting_ghz,
        })
    }

    /// γ = Γ′₀(1 − e^{−(δt/τ_c)²}) + 2γ′.
    pub fn from_components(
        decay_rate: f64,
        diffusion_amplitude: f64,
        diffusion_time_ns: f64,
        pure_dephasing: f64,
        delay_ns: f64,
        splitting_ghz: f64,
    ) -> Result<Self> {
        let x = delay_ns / diffusion_time_ns;
        let gamma = -diffusion_amplitude * (-x * x).exp_m1() + 2.0 * pure_dephasing;
        Self::new(decay_rate, gamma, splitting_ghz)
    }

    pub fn from_emitter(e: &EmitterParams, delay_ns: f64) -> Result<Self> {
        Self::new(e.decay_rate(), e.coherence_decay(delay_ns), e.splitting_ghz)
    }

    /// e^{−γ|τ|}, safe for γ = ∞.
    fn coherence(&self, tau: f64) -> f64 {
        if self.coherence_decay.is_infinite() {
            return if tau == 0.0 { 1.0 } else { 0.0 };
        }
        (-self.coherence_decay * tau.abs()).exp()
    }
}

/// Which coincidence density [`g2_density`] returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityKind {
    /// Interfering pair, suppressed at τ = 0.
    Hom,
    /// Distinguishable reference with the coherence factor dropped.
    Normalization,
}

/// Coincidence rate density for a photon pair, first click at t_D, delay τ:
/// Γ²(1 − e^{−γτ})e^{−Γ(2t_D + τ)}.
pub fn g2_density(t_d: f64, tau: f64, cp: &CoherenceParams, kind: DensityKind) -> f64 {
    let g = cp.decay_rate;
    let env = g * g * (-g * (2.0 * t_d + tau)).exp();
    match kind {
        DensityKind::Hom => env * (1.0 - cp.coherence(tau)),
        DensityKind::Normalization => env,
    }
}

/// HOM visibility for detection windows of width Δt:
///
/// V = (1 − e^{−ΓΔt})⁻² [Γ/(Γ+γ) + Γ/(Γ−γ)e^{−2ΓΔt} − 2Γ²/(Γ²−γ²)e^{−(Γ+γ)Δt}]
///
/// The last two terms each diverge as γ → Γ. They are evaluated in a
/// regrouped form that stays accurate near Γ, and within |γ − Γ| < 1e-6·Γ a
/// second order expansion in (γ − Γ) is used.
pub fn gated_visibility(cp: &CoherenceParams, width_ns: f64) -> Result<f64> {
    if !(width_ns > 0.0) {
        return Err(Error::param("gate width", format!("must be > 0, got {width_ns}")));
    }
    let g = cp.decay_rate;
    let c = cp.coherence_decay;
    if c == 0.0 {
        return Ok(1.0);
    }
    let norm = -(-g * width_ns).exp_m1();
    let norm2 = if width_ns.is_infinite() { 1.0 } else { norm * norm };
    if c.is_infinite() {
        return Ok(0.0);
    }
    if width_ns.is_infinite() {
        return Ok(g / (g + c));
    }
    let d = c - g;
    let bracket = if (d / g).abs() < 1e-6 {
        let x = width_ns;
        let b = 1.0 / (2.0 * g);
        let cc = x + b;
        let e = b * b / 2.0;
        let k = b * b * b / 3.0;
        let h = cc - (e + cc * cc / 2.0) * d + (k + cc * e + cc * cc * cc / 6.0) * d * d;
        g / (g + c) - g * (-2.0 * g * x).exp() * h
    } else {
        // the last two terms regrouped as −e^{−2ΓΔt}[1/2 + Γ(1 − e^{−dΔt})/d]/(1 + d/2Γ)
        // so no 1/d cancellation remains
        let x = width_ns;
        let k = if -d * x < 700.0 {
            g * (-2.0 * g * x).exp() * -(-d * x).exp_m1() / d
        } else {
            g * ((-(g + c) * x).exp() - (-2.0 * g * x).exp()) / -d
        };
        g / (g + c) - (0.5 * (-2.0 * g * x).exp() + k) / (1.0 + d / (2.0 * g))
    };
    Ok(bracket / norm2)
}

/// Component of the quantum-beat model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeatKind {
    /// Photons from different lines, beating at δν.
    Beating,
    /// Photons from the same line.
    SameLine,
    /// At least one noise photon; no coherence term.
    Noise,
}

fn beat_factor(tau: f64, cp: &CoherenceParams, kind: BeatKind) -> f64 {
    match kind {
        BeatKind::Beating => 1.0 + (2.0 * PI * cp.splitting_ghz * tau + PI).cos() * cp.coherence(tau),
        BeatKind::SameLine => 1.0 - cp.coherence(tau),
        BeatKind::Noise => 1.0,
    }
}

/// Pair density of a beat-model component at first click t_D and delay τ ≥ 0.
pub fn beat_density(t_d: f64, tau: f64, cp: &CoherenceParams, kind: BeatKind) -> f64 {
    let g = cp.decay_rate;
    g * g * beat_factor(tau, cp, kind) * (-g * (2.0 * t_d + tau)).exp()
}

/// Component density integrated over first-click times inside the gate,
/// ∫_{t_start}^{t_stop − τ} G(t_D, τ) dt_D, for τ ≥ 0 (zero for τ ≥ Δt).
pub fn gated_beat_density(tau: f64, cp: &CoherenceParams, gate: &GateWindow, kind: BeatKind) -> f64 {
    let tau = tau.abs();
    if tau >= gate.width() {
        return 0.0;
    }
    let g = cp.decay_rate;
    let upper = if gate.t_stop().is_finite() {
        (-2.0 * g * (gate.t_stop() - tau)).exp()
    } else {
        0.0
    };
    let env = 0.5 * g * (-g * tau).exp() * ((-2.0 * g * gate.t_start()).exp() - upper);
    beat_factor(tau, cp, kind) * env
}

/// Normalized density of u = t₂ − t₁ for two independent emissions with
/// rate Γ, both accepted by `gate`. Integrates to one over u.
pub fn gated_pair_shape(u: f64, decay_rate: f64, gate: &GateWindow) -> f64 {
    let cp = CoherenceParams {
        decay_rate,
        coherence_decay: 0.0,
        splitting_ghz: 0.0,
    };
    let acc = gate.acceptance(decay_rate);
    gated_beat_density(u, &cp, gate, BeatKind::Noise) / (acc * acc)
}

/// Weights and timing of the quantum-beat model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BeatCoefficients {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    /// Detector time offset t₀ [ns].
    pub t0: f64,
    /// Combined detection jitter [ns].
    pub sigma_det: f64,
}

/// Sub-bin oversampling factor used for convolution and bin integration.
pub const OVERSAMPLE: usize = 10;

/// Bin averages of f ⊛ N(0, σ²) on `n_bins` bins starting at `tau_min`.
///
/// f is sampled at sub-bin midpoints, convolved with a ±6σ Gaussian kernel
/// renormalized to unit sum, then averaged per bin.
pub fn binned_profile<F>(f: F, tau_min: f64, bin_width: f64, n_bins: usize, sigma: f64) -> Vec<f64>
where
    F: Fn(f64) -> f64,
{
    let os = OVERSAMPLE;
    let h = bin_width / os as f64;
    let half = if sigma > 0.0 { (6.0 * sigma / h).ceil() as usize } else { 0 };
    let n_sub = n_bins * os;
    // extended lattice: index 0 sits `half` sub-cells left of tau_min
    let samples: Vec<f64> = (0..n_sub + 2 * half)
        .map(|i| f(tau_min + (i as f64 - half as f64 + 0.5) * h))
        .collect();
    let conv: Vec<f64> = if half == 0 {
        samples
    } else {
        let mut w: Vec<f64> = (0..=2 * half)
            .map(|j| {
                let x = (j as f64 - half as f64) * h;
                (-x * x / (2.0 * sigma * sigma)).exp()
            })
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        (0..n_sub)
            .map(|i| {
                let window = &samples[i..i + 2 * half + 1];
                window.iter().zip(w.iter().rev()).map(|(a, b)| a * b).sum()
            })
            .collect()
    };
    conv.chunks(os).map(|c| c.iter().sum::<f64>() / os as f64).collect()
}

/// Expected beat-model values per bin: Σ cᵢ·Ḡᵢ(|τ − t₀|), convolved with the
/// detector response, averaged over each bin, then smoothed.
pub fn beat_pattern(
    range: TauRange,
    cp: &CoherenceParams,
    bc: &BeatCoefficients,
    gate: &GateWindow,
    bin_width: f64,
    smoothing: usize,
) -> Result<Vec<f64>> {
    if !(bc.sigma_det >= 0.0) {
        return Err(Error::param("sigma_det", format!("must be >= 0, got {}", bc.sigma_det)));
    }
    if !(bin_width > 0.0) {
        return Err(Error::param("bin_width", "must be > 0"));
    }
    if smoothing == 0 || smoothing.is_multiple_of(2) {
        return Err(Error::param("smoothing", "must be a positive odd integer"));
    }
    let n_bins = ((range.max - range.min) / bin_width).round() as usize;
    let f = |tau: f64| {
        let u = (tau - bc.t0).abs();
        bc.c1 * gated_beat_density(u, cp, gate, BeatKind::Beating)
            + bc.c2 * gated_beat_density(u, cp, gate, BeatKind::SameLine)
            + bc.c3 * gated_beat_density(u, cp, gate, BeatKind::Noise)
    };
    let binned = binned_profile(f, range.min, bin_width, n_bins, bc.sigma_det);
    Ok(moving_average(&binned, smoothing))
}
