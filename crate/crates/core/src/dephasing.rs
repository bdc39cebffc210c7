//! Phonon-induced pure dephasing, linewidth bookkeeping and the two limiting
//! interpretations of a fitted coherence decay γ.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{mhz_to_rate, rate_to_mhz};

/// Boltzmann constant [meV/K].
pub const BOLTZMANN_MEV_PER_K: f64 = 0.0861733;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VibronicParams {
    /// Prefactor A [rad/ns per meV³].
    pub prefactor: f64,
    /// Gap ΔE to the vibronically coupled state [meV].
    pub gap_mev: f64,
}

impl VibronicParams {
    /// A = 2π·365 MHz/meV³, ΔE = 4.4 meV.
    pub fn reference() -> Self {
        Self {
            prefactor: mhz_to_rate(365.0),
            gap_mev: 4.4,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.prefactor >= 0.0) {
            return Err(Error::param("vibronic.prefactor", "must be >= 0"));
        }
        if !(self.gap_mev > 0.0) {
            return Err(Error::param("vibronic.gap_mev", "must be > 0"));
        }
        Ok(())
    }

    /// ΔE³·n(ΔE, T), the temperature dependence multiplying A.
    pub fn thermal_factor(&self, temperature_k: f64) -> f64 {
        let x = self.gap_mev / (BOLTZMANN_MEV_PER_K * temperature_k);
        self.gap_mev.powi(3) / x.exp_m1()
    }
}

/// γ′(T) = A·ΔE³/(e^{ΔE/k_BT} − 1) [ns⁻¹].
pub fn dephasing_rate(vp: &VibronicParams, temperature_k: f64) -> f64 {
    if temperature_k <= 0.0 {
        return 0.0;
    }
    vp.prefactor * vp.thermal_factor(temperature_k)
}

/// Optical FWHM (Γ + Γ′₀ + γ′)/2π in MHz.
pub fn linewidth_mhz(decay_rate: f64, diffusion_amplitude: f64, pure_dephasing: f64) -> f64 {
    rate_to_mhz(decay_rate + diffusion_amplitude + pure_dephasing)
}

/// Interpretation where the HOM contrast is limited by pure dephasing
/// (τ_c ≫ δt): γ = 2γ′_max.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingLimited {
    /// γ′_max [ns⁻¹].
    pub pure_dephasing_max: f64,
    /// Γ′₀ [ns⁻¹].
    pub diffusion_amplitude: f64,
}

pub fn extract_dephasing_limited(gamma_fit: f64, linewidth_mhz: f64, decay_rate: f64) -> Result<DephasingLimited> {
    if !(gamma_fit >= 0.0) {
        return Err(Error::param("gamma_fit", "must be >= 0"));
    }
    let pure = gamma_fit / 2.0;
    let diffusion = mhz_to_rate(linewidth_mhz) - decay_rate - pure;
    if diffusion < 0.0 {
        return Err(Error::Unphysical(format!(
            "linewidth {linewidth_mhz} MHz leaves negative spectral-diffusion amplitude ({} MHz)",
            rate_to_mhz(diffusion)
        )));
    }
    Ok(DephasingLimited {
        pure_dephasing_max: pure,
        diffusion_amplitude: diffusion,
    })
}

/// Minimum correlation time; unbounded when no decay is left to explain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationTime {
    Finite(f64),
    Unbounded,
}

impl CorrelationTime {
    pub fn finite(&self) -> Option<f64> {
        match self {
            CorrelationTime::Finite(t) => Some(*t),
            CorrelationTime::Unbounded => None,
        }
    }
}

/// Interpretation with no pure dephasing: Γ′₀ as large as the linewidth
/// allows and the shortest τ_c that reproduces γ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionLimited {
    /// Γ′₀,max [ns⁻¹].
    pub diffusion_amplitude_max: f64,
    pub correlation_time_min: CorrelationTime,
}

/// Solves γ = Γ′₀,max(1 − e^{−(δt/τ_c)²}) for τ_c. The left side is monotone
/// in τ_c, and the root has the closed form δt/√(−ln(1 − γ/Γ′₀,max)).
pub fn extract_diffusion_limited(gamma_fit: f64, linewidth_mhz: f64, decay_rate: f64, delay_ns: f64) -> Result<DiffusionLimited> {
    if !(gamma_fit >= 0.0) {
        return Err(Error::param("gamma_fit", "must be >= 0"));
    }
    if !(delay_ns > 0.0) {
        return Err(Error::param("delay_ns", "must be > 0"));
    }
    let amp = mhz_to_rate(linewidth_mhz) - decay_rate;
    if amp < 0.0 {
        return Err(Error::Unphysical(format!(
            "linewidth {linewidth_mhz} MHz is below the transform limit {} MHz",
            rate_to_mhz(decay_rate)
        )));
    }
    if gamma_fit >= amp {
        return Err(Error::NoSolution(format!(
            "gamma {} MHz reaches the saturation bound Γ′₀,max = {} MHz",
            rate_to_mhz(gamma_fit),
            rate_to_mhz(amp)
        )));
    }
    let tau = if gamma_fit == 0.0 {
        CorrelationTime::Unbounded
    } else {
        let s = -(-gamma_fit / amp).ln_1p();
        CorrelationTime::Finite(delay_ns / s.sqrt())
    };
    Ok(DiffusionLimited {
        diffusion_amplitude_max: amp,
        correlation_time_min: tau,
    })
}

/// Temperature at which γ′ = Γ/2, i.e. where the coherence time
/// 1/(Γ/2 + γ′) drops to half of 2/Γ. Closed-form inversion of the Bose law.
pub fn critical_temperature(vp: &VibronicParams, decay_rate: f64) -> Result<f64> {
    if !(vp.prefactor > 0.0) {
        return Err(Error::param("vibronic.prefactor", "must be > 0"));
    }
    vp.validate()?;
    let ratio = vp.prefactor * vp.gap_mev.powi(3) / (decay_rate / 2.0);
    Ok(vp.gap_mev / (BOLTZMANN_MEV_PER_K * ratio.ln_1p()))
}

/// One row of the temperature study, all rates in ns⁻¹.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingRow {
    pub temperature_k: f64,
    pub linewidth_mhz: f64,
    pub gamma_fit: f64,
    pub dephasing_limited: DephasingLimited,
    pub diffusion_limited: DiffusionLimited,
}

impl DephasingRow {
    pub fn evaluate(temperature_k: f64, linewidth_mhz: f64, gamma_fit: f64, decay_rate: f64, delay_ns: f64) -> Result<Self> {
        Ok(Self {
            temperature_k,
            linewidth_mhz,
            gamma_fit,
            dephasing_limited: extract_dephasing_limited(gamma_fit, linewidth_mhz, decay_rate)?,
            diffusion_limited: extract_diffusion_limited(gamma_fit, linewidth_mhz, decay_rate, delay_ns)?,
        })
    }
}

/// Reference temperature-study inputs: (T [K], PLE linewidth [MHz],
/// γ′_max/2π [MHz], its quoted error [MHz]). The fitted γ values were not
/// reported, so γ = 2γ′_max is reconstructed from the table.
pub const TEMPERATURE_STUDY: [(f64, f64, f64, f64); 3] = [
    (5.0, 62.4, 3.2, 0.4),
    (5.9, 70.1, 6.7, 0.8),
    (6.8, 82.4, 16.6, 2.4),
];

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const G: f64 = 1.0 / 6.0;

    #[test]
    fn rate_values() {
        let vp = VibronicParams::reference();
        assert_eq!(dephasing_rate(&vp, 0.0), 0.0);
        assert!(dephasing_rate(&vp, 0.05) < 1e-100);
        let r = rate_to_mhz(dephasing_rate(&vp, 6.8));
        assert!((r - 17.1).abs() < 0.05, "{r}");
        assert!((r - 16.6).abs() < 1.0);
    }

    #[test]
    fn bose_form() {
        let vp = VibronicParams { prefactor: 1.3, gap_mev: 4.4 };
        for t in [1.0, 5.0, 30.0, 300.0] {
            let x = 4.4 / (BOLTZMANN_MEV_PER_K * t);
            let bose = 1.0 / (x.exp() - 1.0);
            let r = dephasing_rate(&vp, t);
            assert!((r - 1.3 * 4.4f64.powi(3) * bose).abs() <= 1e-12 * r);
        }
    }

    #[test]
    fn linewidth_values() {
        assert!((linewidth_mhz(G, 0.0, 0.0) - 26.5).abs() < 0.05);
        let lw = linewidth_mhz(G, mhz_to_rate(32.7), mhz_to_rate(3.2));
        assert!((lw - 62.4).abs() < 0.05);
        let (a, b, c) = (0.2, 0.3, 0.05);
        let sum = linewidth_mhz(a, 0.0, 0.0) + linewidth_mhz(0.0, b, 0.0) + linewidth_mhz(0.0, 0.0, c);
        assert!((linewidth_mhz(a, b, c) - sum).abs() < 1e-12);
    }

    #[test]
    fn dephasing_branch_rows() {
        let r = extract_dephasing_limited(mhz_to_rate(6.4), 62.4, G).unwrap();
        assert!((rate_to_mhz(r.pure_dephasing_max) - 3.2).abs() < 1e-9);
        assert!((rate_to_mhz(r.diffusion_amplitude) - 32.7).abs() < 0.1);
        let r = extract_dephasing_limited(mhz_to_rate(13.4), 70.1, G).unwrap();
        assert!((rate_to_mhz(r.pure_dephasing_max) - 6.7).abs() < 1e-9);
        assert!((rate_to_mhz(r.diffusion_amplitude) - 36.9).abs() < 0.1);
        let r = extract_dephasing_limited(0.0, 62.4, G).unwrap();
        assert_eq!(r.pure_dephasing_max, 0.0);
        assert!((rate_to_mhz(r.diffusion_amplitude) - (62.4 - rate_to_mhz(G))).abs() < 1e-9);
        assert!(extract_dephasing_limited(mhz_to_rate(10.0), 27.0, G).is_err());
    }

    /// Bisection on the monotone map τ_c ↦ Γ′₀(1 − e^{−(δt/τ_c)²}).
    fn bisect_tau(gamma: f64, amp: f64, delay: f64) -> f64 {
        let f = |t: f64| amp * (1.0 - (-(delay / t).powi(2)).exp()) - gamma;
        let (mut lo, mut hi): (f64, f64) = (1e-3, 1e9);
        for _ in 0..400 {
            let mid = (lo * hi).sqrt();
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (lo * hi).sqrt()
    }

    #[test]
    fn diffusion_branch_rows() {
        let expect = [(35.9, 109.0), (43.6, 81.0), (55.9, 51.0)];
        for (&(t, lw, gp, _), (amp_e, tau_e)) in TEMPERATURE_STUDY.iter().zip(expect) {
            let gamma = mhz_to_rate(2.0 * gp);
            let r = extract_diffusion_limited(gamma, lw, G, 48.7).unwrap();
            assert!((rate_to_mhz(r.diffusion_amplitude_max) - amp_e).abs() < 0.1, "{t}");
            let tau = r.correlation_time_min.finite().unwrap();
            assert!((tau - tau_e).abs() < 3.0, "{t}: {tau}");
            let oracle = bisect_tau(gamma, r.diffusion_amplitude_max, 48.7);
            assert!(((tau - oracle) / oracle).abs() < 1e-10);
            let resid = gamma - r.diffusion_amplitude_max * -(-(48.7 / tau).powi(2)).exp_m1();
            assert!(resid.abs() < 1e-12 * gamma);
        }
        let r = extract_diffusion_limited(0.0, 62.4, G, 48.7).unwrap();
        assert_eq!(r.correlation_time_min, CorrelationTime::Unbounded);
        let err = extract_diffusion_limited(mhz_to_rate(40.0), 62.4, G, 48.7).unwrap_err();
        assert!(err.to_string().contains("saturation bound"), "{err}");
    }

    /// Bisection for γ′(T) = Γ/2 to 1e-6 K.
    fn bisect_tcrit(vp: &VibronicParams, decay: f64) -> f64 {
        let (mut lo, mut hi) = (0.01, 1000.0);
        while hi - lo > 1e-6 {
            let mid = 0.5 * (lo + hi);
            if dephasing_rate(vp, mid) > decay / 2.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn critical_temperature_values() {
        let vp = VibronicParams::reference();
        let t = critical_temperature(&vp, G).unwrap();
        assert!((t - 6.58).abs() < 0.01, "{t}");
        assert!((t - bisect_tcrit(&vp, G)).abs() < 1e-5);
        let doubled = VibronicParams { prefactor: 2.0 * vp.prefactor, ..vp };
        assert!(critical_temperature(&doubled, G).unwrap() < t);
        assert!(critical_temperature(&vp, G / 10.0).unwrap() < t);
        assert!(critical_temperature(&VibronicParams { prefactor: 0.0, gap_mev: 4.4 }, G).is_err());
    }

    proptest! {
        #[test]
        fn rate_increasing(t in 0.5f64..50.0, dt in 0.01f64..5.0, a in 0.01f64..10.0) {
            let vp = VibronicParams { prefactor: a, gap_mev: 4.4 };
            prop_assert!(dephasing_rate(&vp, t + dt) > dephasing_rate(&vp, t));
            let vp2 = VibronicParams { prefactor: a * 1.1, gap_mev: 4.4 };
            prop_assert!(dephasing_rate(&vp2, t) > dephasing_rate(&vp, t));
        }

        #[test]
        fn branches_reproduce_linewidth(lw in 30.0f64..200.0, frac in 0.0f64..0.95) {
            let excess = mhz_to_rate(lw) - G;
            let gamma = frac * excess;
            let d = extract_dephasing_limited(gamma, lw, G).unwrap();
            let back = linewidth_mhz(G, d.diffusion_amplitude, d.pure_dephasing_max);
            prop_assert!((back - lw).abs() < 0.05);
            let s = extract_diffusion_limited(gamma, lw, G, 48.7).unwrap();
            let back = linewidth_mhz(G, s.diffusion_amplitude_max, 0.0);
            prop_assert!((back - lw).abs() < 0.05);
        }
    }
}
