//! Pulsed saturation and Lorentzian linewidth deconvolution.

use crate::error::{Error, Result};
use crate::model::Estimate;

/// Excitation probability per pulse, 1 − e^{−E/E₀}.
pub fn saturation_probability(energy_pj: f64, saturation_energy_pj: f64) -> Result<f64> {
    if !(energy_pj >= 0.0) {
        return Err(Error::param("pulse_energy", format!("must be >= 0, got {energy_pj}")));
    }
    if !(saturation_energy_pj > 0.0) {
        return Err(Error::param("saturation_energy", format!("must be > 0, got {saturation_energy_pj}")));
    }
    Ok(-(-energy_pj / saturation_energy_pj).exp_m1())
}

/// Emission rate I₀(1 − e^{−E/E₀}).
pub fn saturation_intensity(energy_pj: f64, saturation_energy_pj: f64, i0: f64) -> Result<f64> {
    Ok(i0 * saturation_probability(energy_pj, saturation_energy_pj)?)
}

/// Intrinsic FWHM from a measured Lorentzian FWHM and the instrument
/// Lorentzian FWHM. Widths add under convolution; errors add in quadrature.
pub fn deconvolve_lorentzian(measured: Estimate, instrument: Estimate) -> Result<Estimate> {
    if !(instrument.value >= 0.0) {
        return Err(Error::param("instrument_fwhm", "must be >= 0"));
    }
    if measured.value < instrument.value {
        return Err(Error::Unphysical(format!(
            "measured FWHM {} below instrument FWHM {}",
            measured.value, instrument.value
        )));
    }
    Ok(Estimate::new(
        measured.value - instrument.value,
        measured.sigma.hypot(instrument.sigma),
    ))
}
