//! Domain types shared by every module, and the rate/frequency convention.
//!
//! Rates are angular, in ns⁻¹, as they appear in `exp(-r t)`. The
//! corresponding "r/2π" frequency in MHz is `r * 1000 / 2π`.

use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Converts an angular rate [ns⁻¹] to its r/2π value in MHz.
pub fn rate_to_mhz(rate: f64) -> f64 {
    rate * 1000.0 / TAU
}

/// Converts an r/2π frequency in MHz to an angular rate in ns⁻¹.
pub fn mhz_to_rate(mhz: f64) -> f64 {
    mhz * TAU / 1000.0
}

/// Angular rate [rad/ns] of an oscillation at `ghz`.
pub fn ghz_to_rate(ghz: f64) -> f64 {
    2.0 * PI * ghz
}

/// A value with a one-standard-deviation uncertainty.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub sigma: f64,
}

impl Estimate {
    pub fn new(value: f64, sigma: f64) -> Self {
        Self { value, sigma }
    }

    pub fn exact(value: f64) -> Self {
        Self { value, sigma: 0.0 }
    }
}

fn check_finite_nonneg(name: &'static str, v: f64) -> Result<()> {
    if !v.is_finite() || v < 0.0 {
        return Err(Error::param(name, format!("must be finite and >= 0, got {v}")));
    }
    Ok(())
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if !(v > 0.0) || v.is_nan() {
        return Err(Error::param(name, format!("must be > 0, got {v}")));
    }
    Ok(())
}

fn check_probability(name: &'static str, v: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&v) {
        return Err(Error::param(name, format!("must lie in [0, 1], got {v}")));
    }
    Ok(())
}

/// Optical constants of the emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmitterParams {
    /// Excited-state lifetime τ_ES [ns].
    pub lifetime_ns: f64,
    /// Pure dephasing rate γ′ [ns⁻¹].
    pub pure_dephasing: f64,
    /// Spectral-diffusion amplitude Γ′₀ [ns⁻¹].
    pub diffusion_amplitude: f64,
    /// Spectral-diffusion correlation time τ_c [ns].
    pub diffusion_time_ns: f64,
    /// A₁–A₂ splitting δν [GHz].
    pub splitting_ghz: f64,
    /// Saturation pulse energy E₀ [pJ].
    pub saturation_energy_pj: f64,
    /// Metastable-state lifetime [ns].
    pub metastable_lifetime_ns: f64,
    /// Intersystem-crossing probability per optical cycle.
    pub isc_probability: f64,
}

impl EmitterParams {
    /// Emitter at 5.0 K: γ′/2π = 3.2 MHz, Γ′₀/2π = 32.7 MHz with τ_c far
    /// beyond the interferometer delay, δν = 0.966 GHz.
    pub fn reference_5k() -> Self {
        Self {
            lifetime_ns: 6.0,
            pure_dephasing: mhz_to_rate(3.2),
            diffusion_amplitude: mhz_to_rate(32.7),
            diffusion_time_ns: 1.0e6,
            splitting_ghz: 0.966,
            saturation_energy_pj: 4.0,
            metastable_lifetime_ns: 100.0,
            isc_probability: 0.3,
        }
    }

    /// Γ = 1/τ_ES.
    pub fn decay_rate(&self) -> f64 {
        1.0 / self.lifetime_ns
    }

    /// Total coherence decay γ = Γ′₀(1 − e^{−(δt/τ_c)²}) + 2γ′ seen across a
    /// delay δt.
    pub fn coherence_decay(&self, delay_ns: f64) -> f64 {
        let x = delay_ns / self.diffusion_time_ns;
        -self.diffusion_amplitude * (-x * x).exp_m1() + 2.0 * self.pure_dephasing
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("emitter.lifetime_ns", self.lifetime_ns)?;
        check_finite_nonneg("emitter.pure_dephasing", self.pure_dephasing)?;
        check_finite_nonneg("emitter.diffusion_amplitude", self.diffusion_amplitude)?;
        check_positive("emitter.diffusion_time_ns", self.diffusion_time_ns)?;
        check_finite_nonneg("emitter.splitting_ghz", self.splitting_ghz)?;
        check_positive("emitter.saturation_energy_pj", self.saturation_energy_pj)?;
        check_positive("emitter.metastable_lifetime_ns", self.metastable_lifetime_ns)?;
        check_probability("emitter.isc_probability", self.isc_probability)?;
        Ok(())
    }
}

/// Unbalanced Mach-Zehnder interferometer and detectors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterferometerParams {
    /// Long-arm extra travel time δt [ns].
    pub delay_ns: f64,
    pub t1: f64,
    pub r1: f64,
    pub t2: f64,
    pub r2: f64,
    /// Fringe-contrast deficit ε.
    pub fringe_deficit: f64,
    pub eta1: f64,
    pub eta2: f64,
    /// Per-detector timing jitter, one standard deviation [ns].
    pub sigma_det_ns: f64,
    /// Laser (photon arrival) jitter, one standard deviation [ns].
    pub sigma_arrival_ns: f64,
}

impl InterferometerParams {
    /// Builds an interferometer from intensity ratios T/R of both splitters.
    /// Efficiencies default to 1 and jitters to 0.
    pub fn from_ratios(delay_ns: f64, t1_over_r1: f64, t2_over_r2: f64, fringe_deficit: f64) -> Self {
        let t1 = t1_over_r1 / (1.0 + t1_over_r1);
        let t2 = t2_over_r2 / (1.0 + t2_over_r2);
        Self {
            delay_ns,
            t1,
            r1: 1.0 - t1,
            t2,
            r2: 1.0 - t2,
            fringe_deficit,
            eta1: 1.0,
            eta2: 1.0,
            sigma_det_ns: 0.0,
            sigma_arrival_ns: 0.0,
        }
    }

    /// Balanced, perfect interferometer with delay `delay_ns`.
    pub fn ideal(delay_ns: f64) -> Self {
        Self::from_ratios(delay_ns, 1.0, 1.0, 0.0)
    }

    /// Measured setup: δt = 48.7 ns, T₁/R₁ = 1.129, T₂/R₂ = 1.046,
    /// 1 − ε = 0.995, 60 ps laser jitter. The per-detector jitter is chosen so
    /// that two detectors combine to 0.16 ns.
    pub fn reference() -> Self {
        Self {
            eta1: 0.9,
            eta2: 0.9,
            sigma_det_ns: 0.16 / std::f64::consts::SQRT_2,
            sigma_arrival_ns: 0.06,
            ..Self::from_ratios(48.7, 1.129, 1.046, 0.005)
        }
    }

    /// α₁ = ½(T₁/R₁ + R₁/T₁).
    pub fn alpha1(&self) -> f64 {
        splitter_alpha(self.t1, self.r1)
    }

    /// α₂ = ½(T₂/R₂ + R₂/T₂).
    pub fn alpha2(&self) -> f64 {
        splitter_alpha(self.t2, self.r2)
    }

    pub fn validate(&self) -> Result<()> {
        check_positive("interferometer.delay_ns", self.delay_ns)?;
        for (name, v) in [
            ("interferometer.t1", self.t1),
            ("interferometer.r1", self.r1),
            ("interferometer.t2", self.t2),
            ("interferometer.r2", self.r2),
        ] {
            check_probability(name, v)?;
        }
        if (self.t1 + self.r1 - 1.0).abs() > 1e-9 {
            return Err(Error::param("interferometer.t1", "T1 + R1 must equal 1"));
        }
        if (self.t2 + self.r2 - 1.0).abs() > 1e-9 {
            return Err(Error::param("interferometer.t2", "T2 + R2 must equal 1"));
        }
        if !(0.0..1.0).contains(&self.fringe_deficit) {
            return Err(Error::param(
                "interferometer.fringe_deficit",
                format!("must satisfy 0 <= eps < 1, got {}", self.fringe_deficit),
            ));
        }
        for (name, v) in [("interferometer.eta1", self.eta1), ("interferometer.eta2", self.eta2)] {
            if !(v > 0.0 && v <= 1.0) {
                return Err(Error::param(name, format!("must lie in (0, 1], got {v}")));
            }
        }
        check_finite_nonneg("interferometer.sigma_det_ns", self.sigma_det_ns)?;
        check_finite_nonneg("interferometer.sigma_arrival_ns", self.sigma_arrival_ns)?;
        Ok(())
    }
}

/// ½(T/R + R/T) for one splitter.
pub fn splitter_alpha(t: f64, r: f64) -> f64 {
    0.5 * (t / r + r / t)
}

/// Software acceptance window relative to the most recent sync marker.
/// `t_stop = +inf` means no upper gate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GateRepr", into = "GateRepr")]
pub struct GateWindow {
    t_start: f64,
    t_stop: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GateRepr {
    t_start: f64,
    #[serde(default)]
    t_stop: Option<f64>,
}

impl TryFrom<GateRepr> for GateWindow {
    type Error = Error;
    fn try_from(r: GateRepr) -> Result<Self> {
        GateWindow::new(r.t_start, r.t_stop.unwrap_or(f64::INFINITY))
    }
}

impl From<GateWindow> for GateRepr {
    fn from(g: GateWindow) -> Self {
        GateRepr {
            t_start: g.t_start,
            t_stop: g.t_stop.is_finite().then_some(g.t_stop),
        }
    }
}

impl GateWindow {
    pub fn new(t_start: f64, t_stop: f64) -> Result<Self> {
        if !(t_start >= 0.0) || !t_start.is_finite() {
            return Err(Error::param("gate.t_start", format!("must be >= 0, got {t_start}")));
        }
        if !(t_stop > t_start) {
            return Err(Error::param(
                "gate.t_stop",
                format!("must exceed t_start = {t_start}, got {t_stop}"),
            ));
        }
        Ok(Self { t_start, t_stop })
    }

    /// Gate that accepts every click at or after its sync.
    pub fn open() -> Self {
        Self {
            t_start: 0.0,
            t_stop: f64::INFINITY,
        }
    }

    pub fn t_start(&self) -> f64 {
        self.t_start
    }

    pub fn t_stop(&self) -> f64 {
        self.t_stop
    }

    /// Δt = t_stop − t_start.
    pub fn width(&self) -> f64 {
        self.t_stop - self.t_start
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t_start && t <= self.t_stop
    }

    /// Probability that an exponential(Γ) emission time falls in the gate.
    pub fn acceptance(&self, decay_rate: f64) -> f64 {
        (-decay_rate * self.t_start).exp() - (-decay_rate * self.t_stop).exp()
    }
}
