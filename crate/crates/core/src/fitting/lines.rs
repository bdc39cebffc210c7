//! Sum-of-Lorentzians spectral fit with instrument deconvolution.

use serde::Serialize;

use super::{fit_least_squares, FitResult, Observation, ParamSpec};
use crate::error::{Error, Result};
use crate::model::Estimate;
use crate::spectroscopy::deconvolve_lorentzian;

#[derive(Debug, Clone, Serialize)]
pub struct LineEstimate {
    pub amplitude: Estimate,
    pub center: Estimate,
    /// Fitted FWHM, same unit as the frequency axis.
    pub fwhm: Estimate,
    /// FWHM after removing the instrument width; `None` when the fitted
    /// line is narrower than the instrument.
    pub deconvolved_fwhm: Option<Estimate>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LorentzianFit {
    pub background: Estimate,
    /// Lines sorted by center.
    pub lines: Vec<LineEstimate>,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

/// Peak-normalized Lorentzian a·(w/2)²/((ν − c)² + (w/2)²).
pub fn lorentzian(nu: f64, amplitude: f64, center: f64, fwhm: f64) -> f64 {
    let h = 0.5 * fwhm;
    amplitude * h * h / ((nu - center).powi(2) + h * h)
}

fn line_model(p: &[f64], xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| p[0] + p[1..].chunks(3).map(|l| lorentzian(x, l[0], l[1], l[2])).sum::<f64>())
        .collect()
}

/// Greedy initial guesses: take the highest remaining point, estimate its
/// width from the half-maximum crossings, subtract, repeat.
fn initial_guess(xs: &[f64], ys: &[f64], n_lines: usize) -> Vec<f64> {
    let bg = ys.iter().cloned().fold(f64::INFINITY, f64::min);
    let span = xs[xs.len() - 1] - xs[0];
    let spacing = span / (xs.len() - 1).max(1) as f64;
    let mut resid: Vec<f64> = ys.iter().map(|y| y - bg).collect();
    let mut p = vec![bg];
    let mut last_width = 0.1 * span;
    for _ in 0..n_lines {
        let (i, &amp) = resid
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap();
        let half = 0.5 * amp;
        let right = (i..xs.len()).find(|&k| resid[k] < half).map(|k| xs[k]);
        let left = (0..=i).rev().find(|&k| resid[k] < half).map(|k| xs[k]);
        let width = match (left, right) {
            (Some(l), Some(r)) => r - l,
            (Some(l), None) => 2.0 * (xs[i] - l),
            (None, Some(r)) => 2.0 * (r - xs[i]),
            (None, None) => last_width,
        };
        let width = if amp > 0.0 && width > 0.0 { width.max(2.0 * spacing) } else { last_width };
        last_width = width;
        let amp = amp.max(0.0);
        for (r, &x) in resid.iter_mut().zip(xs) {
            *r -= lorentzian(x, amp, xs[i], width);
        }
        p.extend([amp, xs[i], width]);
    }
    p
}

/// Fits `n_lines` Lorentzians plus a constant background to a spectrum given
/// as (frequency, counts, σ) points on a monotone grid, then deconvolves each
/// width by the instrument FWHM.
///
/// Lines closer than their mean FWHM are flagged as unresolved and their
/// uncertainties inflated by (w₁ + w₂)/(2|c₁ − c₂|).
pub fn fit_lorentzian_lines(spectrum: &[Observation], n_lines: usize, instrument_fwhm: Estimate) -> Result<LorentzianFit> {
    if n_lines == 0 {
        return Err(Error::param("n_lines", "must be >= 1"));
    }
    if spectrum.len() < 2 || spectrum.windows(2).any(|w| !(w[1].x > w[0].x)) {
        return Err(Error::param("spectrum", "frequency grid must be strictly increasing"));
    }
    let xs: Vec<f64> = spectrum.iter().map(|o| o.x).collect();
    let ys: Vec<f64> = spectrum.iter().map(|o| o.y).collect();
    let init = initial_guess(&xs, &ys, n_lines);
    let span = xs[xs.len() - 1] - xs[0];
    let amp_scale = ys.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);

    let mut specs = vec![ParamSpec::new("background", init[0], amp_scale)];
    for k in 0..n_lines {
        let l = &init[1 + 3 * k..4 + 3 * k];
        specs.push(ParamSpec::new(&format!("amplitude_{k}"), l[0], amp_scale).bounded(0.0, f64::INFINITY));
        specs.push(ParamSpec::new(&format!("center_{k}"), l[1], span));
        specs.push(ParamSpec::new(&format!("fwhm_{k}"), l[2], l[2]).bounded(1e-9 * span, f64::INFINITY));
    }
    let model = |p: &[f64], xs: &[f64]| -> Result<Vec<f64>> { Ok(line_model(p, xs)) };
    let fit = fit_least_squares(&model, spectrum, &specs)?;

    let est = |j: usize| Estimate::new(fit.params[j], fit.uncertainties[j]);
    let mut lines: Vec<LineEstimate> = (0..n_lines)
        .map(|k| LineEstimate {
            amplitude: est(1 + 3 * k),
            center: est(2 + 3 * k),
            fwhm: est(3 + 3 * k),
            deconvolved_fwhm: None,
        })
        .collect();
    let mut warnings = fit.warnings.clone();

    let strong: Vec<usize> = (0..n_lines).filter(|&k| lines[k].amplitude.value > 0.0).collect();
    for (a, &i) in strong.iter().enumerate() {
        for &j in &strong[a + 1..] {
            let dc = (lines[i].center.value - lines[j].center.value).abs();
            let w = 0.5 * (lines[i].fwhm.value + lines[j].fwhm.value);
            if dc < w {
                warnings.push(format!("lines {i} and {j} are not resolved (separation {dc:.4} < mean FWHM {w:.4})"));
                let inflate = if dc > 0.0 { w / dc } else { f64::INFINITY };
                for k in [i, j] {
                    let l = &mut lines[k];
                    for e in [&mut l.amplitude, &mut l.center, &mut l.fwhm] {
                        e.sigma *= inflate;
                    }
                }
            }
        }
    }
    for (k, l) in lines.iter_mut().enumerate() {
        if l.amplitude.value == 0.0 {
            warnings.push(format!("line {k} collapsed to zero amplitude"));
            continue;
        }
        match deconvolve_lorentzian(l.fwhm, instrument_fwhm) {
            Ok(d) => l.deconvolved_fwhm = Some(d),
            Err(_) => warnings.push(format!("line {k} is narrower than the instrument response")),
        }
    }
    lines.sort_by(|a, b| a.center.value.total_cmp(&b.center.value));
    Ok(LorentzianFit {
        background: est(0),
        lines,
        fit,
        warnings,
    })
}
