//! Five-peak analysis of two-pulse HOM histograms.

use serde::{Deserialize, Serialize};

use crate::correlation::{binned_profile, gated_pair_shape, gated_visibility, CoherenceParams};
use crate::corrections::{jitter_factor, signal_pair_fraction, NoiseModel};
use crate::error::{Error, Result};
use crate::histogram::{BinnedSeries, PredictedHistogram, TauRange};
use crate::model::{Estimate, GateWindow, InterferometerParams};

/// Integrated peak areas at τ = 0, ±δt, ±2δt.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PeakAreas {
    pub minus2: f64,
    pub minus1: f64,
    pub zero: f64,
    pub plus1: f64,
    pub plus2: f64,
}

impl PeakAreas {
    pub fn as_array(&self) -> [f64; 5] {
        [self.minus2, self.minus1, self.zero, self.plus1, self.plus2]
    }

    pub fn scaled(&self, k: f64) -> PeakAreas {
        PeakAreas {
            minus2: self.minus2 * k,
            minus1: self.minus1 * k,
            zero: self.zero * k,
            plus1: self.plus1 * k,
            plus2: self.plus2 * k,
        }
    }
}

/// Default peak integration half-width [ns].
pub const DEFAULT_HALFWIDTH_NS: f64 = 20.0;

/// Sum of bin values whose centers lie in [center − hw, center + hw).
fn window_sum<H: BinnedSeries + ?Sized>(h: &H, values: &[f64], center: f64, hw: f64) -> f64 {
    values
        .iter()
        .enumerate()
        .filter(|(i, _)| {
            let c = h.bin_center(*i);
            c >= center - hw && c < center + hw
        })
        .map(|(_, v)| v)
        .sum()
}

pub fn extract_peak_areas<H: BinnedSeries + ?Sized>(h: &H, delay_ns: f64, halfwidth_ns: f64) -> Result<PeakAreas> {
    if !(delay_ns > 0.0) {
        return Err(Error::param("delay_ns", "must be > 0"));
    }
    if !(halfwidth_ns > 0.0) || halfwidth_ns >= delay_ns / 2.0 {
        return Err(Error::param(
            "integration_halfwidth",
            format!("windows overlap: need 0 < halfwidth < δt/2 = {}", delay_ns / 2.0),
        ));
    }
    let span = 2.0 * delay_ns + halfwidth_ns;
    let tol = 1e-9 * span;
    if h.tau_min() > -span + tol || h.tau_end() < span - tol {
        return Err(Error::param(
            "histogram",
            format!("must span at least [-{span}, {span}] ns"),
        ));
    }
    let v = h.values();
    let a = |c: f64| window_sum(h, &v, c, halfwidth_ns);
    Ok(PeakAreas {
        minus2: a(-2.0 * delay_ns),
        minus1: a(-delay_ns),
        zero: a(0.0),
        plus1: a(delay_ns),
        plus2: a(2.0 * delay_ns),
    })
}

/// V₀ = 1 − 2A₀/(A₋δt + A₊δt) with Poisson errors on every area.
pub fn raw_visibility(areas: &PeakAreas) -> Result<Estimate> {
    let s = areas.minus1 + areas.plus1;
    if !(s > 0.0) {
        return Err(Error::UndefinedVisibility);
    }
    let a0 = areas.zero;
    let v = 1.0 - 2.0 * a0 / s;
    let var = 4.0 * a0 / (s * s) + 4.0 * a0 * a0 / (s * s * s);
    Ok(Estimate::new(v, var.sqrt()))
}

/// Zero-delay peak area over the mean side-peak area of a pulsed
/// autocorrelation histogram. Side peaks sit at multiples of the repetition
/// period; with double-pulse sequences the integration window is limited
/// by the intra-sequence spacing.
pub fn g2_zero<H: BinnedSeries + ?Sized>(h: &H, repetition_period_ns: f64, pulse_spacing_ns: f64) -> Result<Estimate> {
    if !(repetition_period_ns > 0.0) {
        return Err(Error::param("repetition_period", "must be > 0"));
    }
    let spacing = if pulse_spacing_ns > 0.0 && pulse_spacing_ns < repetition_period_ns {
        pulse_spacing_ns
    } else {
        repetition_period_ns
    };
    let hw = 0.5 * spacing;
    let v = h.values();
    let lo = h.tau_min();
    let hi = h.tau_end();
    let kmax = (hi.abs().max(lo.abs()) / repetition_period_ns).ceil() as i64;
    let mut sides = Vec::new();
    for k in -kmax..=kmax {
        if k == 0 {
            continue;
        }
        let c = k as f64 * repetition_period_ns;
        if c - hw >= lo - 1e-9 && c + hw <= hi + 1e-9 {
            sides.push(window_sum(h, &v, c, hw));
        }
    }
    if sides.len() < 2 {
        return Err(Error::param(
            "histogram",
            format!("only {} side peaks inside the histogram range, need 2", sides.len()),
        ));
    }
    let a0 = window_sum(h, &v, 0.0, hw);
    let total: f64 = sides.iter().sum();
    let mean = total / sides.len() as f64;
    if !(mean > 0.0) {
        return Err(Error::UndefinedVisibility);
    }
    let r = a0 / mean;
    let sigma = if a0 > 0.0 {
        r * (1.0 / a0 + 1.0 / total).sqrt()
    } else {
        1.0 / mean
    };
    Ok(Estimate::new(r, sigma))
}

fn check_visibility_inputs(ifm: &InterferometerParams, g: f64, v: f64) -> Result<()> {
    ifm.validate()?;
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param("visibility", format!("must lie in [0, 1], got {v}")));
    }
    if !(g >= 0.0) {
        return Err(Error::param("g", "must be >= 0"));
    }
    Ok(())
}

fn areas_with_weight(noise: &NoiseModel, ifm: &InterferometerParams, g: f64, v: f64, n0: f64, w: f64) -> PeakAreas {
    let m = noise.mean_photons();
    let x = m * m * ifm.eta1 * ifm.eta2 * n0;
    let (t1, r1, t2, r2) = (ifm.t1, ifm.r1, ifm.t2, ifm.r2);
    let s2 = signal_pair_fraction(noise.signal_to_noise());
    let fringe = (1.0 - ifm.fringe_deficit).powi(2);
    let arms = t1 * t1 + r1 * r1;
    PeakAreas {
        zero: x * (t1 * r1 * ((t2 * t2 + r2 * r2) - 2.0 * s2 * fringe * t2 * r2 * v) + w * g * arms * t2 * r2),
        plus1: x * (arms * t2 * r2 + 2.0 * g * t1 * r1 * t2 * t2),
        minus1: x * (arms * t2 * r2 + 2.0 * g * t1 * r1 * r2 * r2),
        plus2: x * t1 * r1 * t2 * t2,
        minus2: x * t1 * r1 * r2 * r2,
    }
}

/// Closed-form five-peak areas for N₀ repetitions.
///
/// `visibility` is the effective overlap seen at the second splitter; pass
/// V·β to include arrival jitter. The same-pulse term of A₀ carries weight
/// g·(T₁² + R₁²)T₂R₂, which makes [`crate::corrections::correct_visibility`]
/// its exact inverse. [`predict_peak_areas_photon_level`] gives the variant
/// with 2g that follows from independent noise photons.
pub fn predict_peak_areas(noise: &NoiseModel, ifm: &InterferometerParams, g: f64, visibility: f64, n0: f64) -> Result<PeakAreas> {
    check_visibility_inputs(ifm, g, visibility)?;
    Ok(areas_with_weight(noise, ifm, g, visibility, n0, 1.0))
}

/// Five-peak areas with the photon-level zero-delay weight 2g.
pub fn predict_peak_areas_photon_level(
    noise: &NoiseModel,
    ifm: &InterferometerParams,
    g: f64,
    visibility: f64,
    n0: f64,
) -> Result<PeakAreas> {
    check_visibility_inputs(ifm, g, visibility)?;
    Ok(areas_with_weight(noise, ifm, g, visibility, n0, 2.0))
}

/// Analytic histogram: every peak has the gated pair-delay shape; the
/// interfering part of the central peak is additionally weighted by e^{−γ|τ|}.
#[derive(Debug, Clone, Copy)]
pub struct PeakShapeModel {
    pub noise: NoiseModel,
    pub ifm: InterferometerParams,
    pub g: f64,
    pub coherence: CoherenceParams,
    pub gate: GateWindow,
    pub repetitions: f64,
}

impl PeakShapeModel {
    /// Effective overlap V·β for this gate.
    pub fn effective_visibility(&self) -> Result<f64> {
        let v = gated_visibility(&self.coherence, self.gate.width())?;
        let beta = jitter_factor(self.ifm.sigma_arrival_ns, 1.0 / self.coherence.decay_rate);
        Ok(v * beta)
    }

    /// Areas of the gated histogram.
    pub fn areas(&self) -> Result<PeakAreas> {
        let acc = self.gate.acceptance(self.coherence.decay_rate);
        Ok(predict_peak_areas(&self.noise, &self.ifm, self.g, self.effective_visibility()?, self.repetitions)?
            .scaled(acc * acc))
    }
}

pub fn predict_peak_shape(model: &PeakShapeModel, range: TauRange, bin_width: f64) -> Result<PredictedHistogram> {
    if !(bin_width > 0.0) {
        return Err(Error::param("bin_width", "must be > 0"));
    }
    let cp = &model.coherence;
    let gate = model.gate;
    let acc = gate.acceptance(cp.decay_rate);
    let distinguishable = predict_peak_areas(&model.noise, &model.ifm, model.g, 0.0, model.repetitions)?
        .scaled(acc * acc);
    let total = model.areas()?;
    let v_eff = model.effective_visibility()?;
    let v_gated = gated_visibility(cp, gate.width())?;
    // interference weight D with A₀ = A₀(V=0) − D·V_eff
    let dip = if v_eff > 0.0 { (distinguishable.zero - total.zero) / v_eff } else { 0.0 };
    let beta = if v_gated > 0.0 { v_eff / v_gated } else { 0.0 };
    let d = model.ifm.delay_ns;
    let g = cp.decay_rate;
    let shape = |u: f64| gated_pair_shape(u, g, &gate);
    let coh = |u: f64| {
        if cp.coherence_decay.is_infinite() {
            0.0
        } else {
            (-cp.coherence_decay * u.abs()).exp()
        }
    };
    let f = |tau: f64| {
        distinguishable.minus2 * shape(tau + 2.0 * d)
            + distinguishable.minus1 * shape(tau + d)
            + distinguishable.zero * shape(tau)
            - dip * beta * shape(tau) * coh(tau)
            + distinguishable.plus1 * shape(tau - d)
            + distinguishable.plus2 * shape(tau - 2.0 * d)
    };
    let n_bins = ((range.max - range.min) / bin_width).round() as usize;
    let sigma = (2.0 * model.ifm.sigma_det_ns.powi(2) + model.ifm.sigma_arrival_ns.powi(2)).sqrt();
    let values = binned_profile(f, range.min, bin_width, n_bins, sigma)
        .into_iter()
        .map(|x| x * bin_width)
        .collect();
    Ok(PredictedHistogram {
        tau_min: range.min,
        bin_width,
        values,
    })
}
