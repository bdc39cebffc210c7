//! Imperfection algebra linking raw and corrected HOM visibilities: noise
//! photons, unbalanced splitters, fringe contrast and arrival jitter.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Estimate, InterferometerParams};

/// Signal and noise photon probabilities per laser pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub p: f64,
    pub q: f64,
}

impl NoiseModel {
    pub fn new(p: f64, q: f64) -> Result<Self> {
        for (name, v) in [("noise.p", p), ("noise.q", q)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
            }
        }
        Ok(Self { p, q })
    }

    /// Noise model with signal probability `p` and ratio SN = p/q.
    pub fn from_signal_to_noise(p: f64, sn: f64) -> Result<Self> {
        if !(sn > 0.0) {
            return Err(Error::param("noise.signal_to_noise", format!("must be > 0, got {sn}")));
        }
        Self::new(p, p / sn)
    }

    pub fn p0(&self) -> f64 {
        (1.0 - self.p) * (1.0 - self.q)
    }

    pub fn p1(&self) -> f64 {
        self.p * (1.0 - self.q) + (1.0 - self.p) * self.q
    }

    pub fn p2(&self) -> f64 {
        self.p * self.q
    }

    /// SN = p/q (infinite for q = 0).
    pub fn signal_to_noise(&self) -> f64 {
        self.p / self.q
    }

    /// g = 2p₂/(p₁ + 2p₂)².
    pub fn g(&self) -> f64 {
        let m = self.p1() + 2.0 * self.p2();
        2.0 * self.p2() / (m * m)
    }

    /// Mean photon number per pulse, p₁ + 2p₂.
    pub fn mean_photons(&self) -> f64 {
        self.p1() + 2.0 * self.p2()
    }
}

/// g = 2·SN/(SN+1)², the smallest g compatible with a given SN.
pub fn g_lower_bound(sn: f64) -> f64 {
    if sn.is_infinite() {
        return 0.0;
    }
    2.0 * sn / ((sn + 1.0) * (sn + 1.0))
}

/// (SN/(SN+1))², the probability that both photons of a pair are signal.
pub fn signal_pair_fraction(sn: f64) -> f64 {
    if sn.is_infinite() {
        return 1.0;
    }
    let s = sn / (sn + 1.0);
    s * s
}

/// Overlap reduction from Gaussian arrival jitter σ on an exponential
/// wavepacket of lifetime τ: exp(x²)·erfc(x) with x = σ/(√2 τ).
pub fn jitter_factor(sigma_ns: f64, lifetime_ns: f64) -> f64 {
    let x = sigma_ns / (std::f64::consts::SQRT_2 * lifetime_ns);
    if x > 20.0 {
        // asymptotic form avoids exp overflow times erfc underflow
        return 1.0 / (x * std::f64::consts::PI.sqrt()) * (1.0 - 0.5 / (x * x));
    }
    (x * x).exp() * libm::erfc(x)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectionInputs {
    pub raw_visibility: Estimate,
    pub signal_to_noise: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub fringe_deficit: f64,
    pub jitter_factor: f64,
    pub g: f64,
}

impl CorrectionInputs {
    /// Inputs with g at its lower bound for the given SN.
    pub fn new(
        raw_visibility: Estimate,
        sn: f64,
        ifm: &InterferometerParams,
        jitter_factor: f64,
    ) -> Self {
        Self {
            raw_visibility,
            signal_to_noise: sn,
            alpha1: ifm.alpha1(),
            alpha2: ifm.alpha2(),
            fringe_deficit: ifm.fringe_deficit,
            jitter_factor,
            g: g_lower_bound(sn),
        }
    }

    fn validate(&self) -> Result<()> {
        let v0 = self.raw_visibility.value;
        if !(-1.0..=1.0).contains(&v0) {
            return Err(Error::param("raw_visibility", format!("must lie in [-1, 1], got {v0}")));
        }
        if !(self.signal_to_noise > 0.0) {
            return Err(Error::param("signal_to_noise", "must be > 0"));
        }
        if self.alpha1 < 1.0 - 1e-12 || self.alpha2 < 1.0 - 1e-12 {
            return Err(Error::param("alpha", "splitter imbalance factors must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.fringe_deficit) {
            return Err(Error::param("fringe_deficit", "must satisfy 0 <= eps < 1"));
        }
        if !(self.jitter_factor > 0.0 && self.jitter_factor <= 1.0) {
            return Err(Error::param("jitter_factor", "must lie in (0, 1]"));
        }
        if !(self.g >= 0.0) {
            return Err(Error::param("g", "must be >= 0"));
        }
        Ok(())
    }
}

/// Corrected overlap with a flag for results above 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectedVisibility {
    pub visibility: Estimate,
    /// Set when the corrected value exceeds 1; the inputs are then mutually
    /// inconsistent (e.g. SN underestimated).
    pub over_corrected: bool,
}

/// Extracts the two-photon overlap V from a raw visibility V₀:
///
/// V = [α₂ + gα₁ − (1 − V₀)(α₁ + gα₂)] / [s²(1−ε)²β],  s² = (SN/(SN+1))².
///
/// With g = 2SN/(SN+1)² this is the usual SN-only expression, and β = 1
/// removes the jitter correction.
pub fn correct_visibility(inputs: &CorrectionInputs) -> Result<CorrectedVisibility> {
    inputs.validate()?;
    let c = &inputs;
    let s2 = signal_pair_fraction(c.signal_to_noise);
    let fringe = (1.0 - c.fringe_deficit).powi(2);
    let denom = s2 * fringe * c.jitter_factor;
    let slope = c.alpha1 + c.g * c.alpha2;
    let v0 = c.raw_visibility.value;
    let v = (c.alpha2 + c.g * c.alpha1 - (1.0 - v0) * slope) / denom;
    let sigma = c.raw_visibility.sigma * slope / denom;
    Ok(CorrectedVisibility {
        visibility: Estimate::new(v, sigma),
        over_corrected: v > 1.0 + 1e-9,
    })
}

/// Raw visibility reached by a perfect emitter (V = 1) for the given SN,
/// interferometer and jitter factor.
pub fn max_raw_visibility(sn: f64, ifm: &InterferometerParams, beta: f64) -> Result<f64> {
    if !(sn > 0.0) {
        return Err(Error::param("signal_to_noise", format!("must be > 0, got {sn}")));
    }
    let g = g_lower_bound(sn);
    let (a1, a2) = (ifm.alpha1(), ifm.alpha2());
    let s2 = signal_pair_fraction(sn);
    let fringe = (1.0 - ifm.fringe_deficit).powi(2);
    Ok(1.0 - (a2 + g * a1 - s2 * fringe * beta) / (a1 + g * a2))
}

/// V_during / V_before with first-order error propagation.
pub fn normalized_visibility(during: Estimate, before: Estimate) -> Result<Estimate> {
    if !(before.value > 0.0) {
        return Err(Error::param(
            "v_before",
            format!("reference visibility must be > 0, got {}", before.value),
        ));
    }
    let r = during.value / before.value;
    let rel_d = if during.value != 0.0 { during.sigma / during.value } else { 0.0 };
    let rel_b = before.sigma / before.value;
    let sigma = if during.value != 0.0 {
        r.abs() * (rel_d * rel_d + rel_b * rel_b).sqrt()
    } else {
        during.sigma / before.value
    };
    Ok(Estimate::new(r, sigma))
}

/// Weight ratios of the three beat-model components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeatRatios {
    /// c₂/c₁ with uncertainty propagated from V_norm.
    pub c2_over_c1: Estimate,
    pub c3_over_c1: f64,
}

/// c₂/c₁ = V/(1 − V) and c₃/c₁ = (1 + c₂/c₁)·[(α₂ + 2α₁g)/(s²(1−ε)²) − 1].
pub fn beat_coefficient_ratios(
    v_norm: Estimate,
    sn: f64,
    g: f64,
    fringe_deficit: f64,
    alpha1: f64,
    alpha2: f64,
) -> Result<BeatRatios> {
    let v = v_norm.value;
    if !(v > 0.0 && v < 1.0) {
        return Err(Error::param(
            "v_norm",
            format!("must lie strictly between 0 and 1, got {v}"),
        ));
    }
    if !(sn > 0.0) {
        return Err(Error::param("signal_to_noise", "must be > 0"));
    }
    let r21 = v / (1.0 - v);
    let sigma21 = v_norm.sigma / ((1.0 - v) * (1.0 - v));
    let s2 = signal_pair_fraction(sn);
    let fringe = (1.0 - fringe_deficit).powi(2);
    let c3 = (1.0 + r21) * ((alpha2 + 2.0 * alpha1 * g) / (s2 * fringe) - 1.0);
    Ok(BeatRatios {
        c2_over_c1: Estimate::new(r21, sigma21),
        c3_over_c1: c3,
    })
}

/// Splitter ratios and fringe-contrast limit from single-photon counts in
/// early/late bins: N₁₁ = η₁T₁R₂, N₁₂ = η₁R₁T₂, N₂₁ = η₂T₁T₂, N₂₂ = η₂R₁R₂.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitterCharacterization {
    pub t1_over_r1: f64,
    pub t2_over_r2: f64,
    pub fringe_bound: f64,
}

pub fn characterize_beamsplitters(n11: f64, n12: f64, n21: f64, n22: f64) -> Result<SplitterCharacterization> {
    for (name, v) in [("n11", n11), ("n12", n12), ("n21", n21), ("n22", n22)] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::param(name, format!("counts must be > 0, got {v}")));
        }
    }
    let x1 = ((n11 * n21) / (n12 * n22)).sqrt();
    let x2 = ((n12 * n21) / (n11 * n22)).sqrt();
    Ok(SplitterCharacterization {
        t1_over_r1: x1,
        t2_over_r2: x2,
        fringe_bound: fringe_bound(x1, x2),
    })
}

/// 2(√(T₁T₂/R₁R₂) + √(R₁R₂/T₁T₂))⁻¹ from the two T/R ratios.
pub fn fringe_bound(t1_over_r1: f64, t2_over_r2: f64) -> f64 {
    let k = (t1_over_r1 * t2_over_r2).sqrt();
    2.0 / (k + 1.0 / k)
}
