//! The `homsim` command line.
//!
//! Exit codes: 0 on success, 1 for invalid input or configuration, 2 when a
//! numerical procedure fails on valid input. `HOMSIM_THREADS` caps the size
//! of the worker pool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::corrections::{correct_visibility, CorrectionInputs};
use crate::dephasing::{DephasingRow, TEMPERATURE_STUDY};
use crate::error::{Error, Result};
use crate::fitting::{
    fit_beat, fit_gamma_from_visibility, fit_lorentzian_lines, fit_rabi, fit_saturation, fit_vibronic_prefactor,
    BeatFitSetup, RabiCurves, VibronicRow,
};
use crate::histogram::{build_coincidence_histogram, CoincidenceHistogram, TauRange};
use crate::io::{self, RunConfig, Sidecar};
use crate::model::{mhz_to_rate, rate_to_mhz, Estimate, GateWindow};
use crate::montecarlo::{
    central_peak_weights, gated_jitter_factor, mc_vs_model_report, simulate_timetags, ExperimentConfig, ReportBinning,
};
use crate::peaks::{extract_peak_areas, raw_visibility};
use crate::spin::flipped_population;

#[derive(Debug, Parser)]
#[command(name = "homsim", version, about = "Two-photon interference simulation and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Clone, Default)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; results go to stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone, Default)]
struct Binning {
    /// Gate start after each sync [ns].
    #[arg(long)]
    t_start: Option<f64>,
    /// Gate end after each sync [ns].
    #[arg(long)]
    t_stop: Option<f64>,
    #[arg(long)]
    bin_width: Option<f64>,
    /// Moving-average order (odd).
    #[arg(long)]
    smoothing: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Monte Carlo run to a time-tag CSV.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cycles: Option<u64>,
    },
    /// Coincidence histogram from a time-tag CSV.
    Hist {
        tags: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        binning: Binning,
    },
    /// Raw and corrected visibility of a histogram CSV.
    Visibility {
        histogram: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        binning: Binning,
    },
    /// Phase-averaged flip curves from the spin model.
    Rabi {
        #[command(flatten)]
        common: Common,
        /// Longest pulse [ns].
        #[arg(long, default_value_t = 100.0)]
        max_duration: f64,
        /// Duration step [ns].
        #[arg(long, default_value_t = 0.5)]
        step: f64,
    },
    /// Least-squares fit of one model to a data file.
    Fit {
        #[arg(value_enum)]
        model: FitModel,
        data: PathBuf,
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        binning: Binning,
    },
    /// Both dephasing interpretations of temperature-study rows.
    Dephasing {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        temperature: Option<f64>,
        /// PLE linewidth [MHz].
        #[arg(long)]
        linewidth: Option<f64>,
        /// Fitted γ/2π [MHz].
        #[arg(long)]
        gamma: Option<f64>,
        /// Excited-state lifetime [ns].
        #[arg(long, default_value_t = 6.0)]
        lifetime: f64,
        /// Interferometer delay [ns].
        #[arg(long, default_value_t = 48.7)]
        delay: f64,
    },
    /// Monte Carlo against the analytic expectation.
    Report {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        binning: Binning,
        #[arg(long)]
        cycles: Option<u64>,
        /// Configuration whose analytic model is compared (defaults to --config).
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum FitModel {
    /// energy_pj,counts[,sigma]
    Saturation,
    /// window_ns,visibility[,sigma]
    Gamma,
    /// temperature_k,gamma_prime_mhz,sigma_mhz
    Vibronic,
    /// duration_ns,from_half,from_three_half
    Rabi,
    /// histogram CSV around the central peak
    Beat,
    /// frequency_mhz,counts[,sigma]
    Lines,
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    configure_threads();
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_numerical() {
                2
            } else {
                1
            }
        }
    }
}

fn configure_threads() {
    if let Some(n) = std::env::var("HOMSIM_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // a pool built earlier in the same process is left as is
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig {
            experiment: ExperimentConfig::reference_setup(1_000_000, 0),
            analysis: Default::default(),
            output: Default::default(),
        },
    };
    if let Some(s) = common.seed {
        cfg.experiment.seed = s;
    }
    Ok(cfg)
}

fn apply_binning(cfg: &mut RunConfig, b: &Binning) -> Result<()> {
    let a = &mut cfg.analysis;
    if b.t_start.is_some() || b.t_stop.is_some() {
        let start = b.t_start.unwrap_or(a.gate.t_start());
        let stop = b.t_stop.unwrap_or(a.gate.t_stop());
        a.gate = GateWindow::new(start, stop)?;
    }
    if let Some(w) = b.bin_width {
        a.bin_width = w;
    }
    if let Some(s) = b.smoothing {
        a.smoothing = s;
    }
    cfg.validate()
}

/// Writes `value` as JSON to `out` (plus sidecar) or prints it.
fn emit_json<T: Serialize>(common: &Common, command: &str, provenance: &str, seed: Option<u64>, value: &T) -> Result<()> {
    match &common.out {
        Some(p) => {
            io::write_json(p, value)?;
            io::write_sidecar(p, &Sidecar::new(command, provenance, seed))
        }
        None => {
            print_json(value);
            Ok(())
        }
    }
}

/// Prints pretty JSON; a closed stdout (e.g. piped into `head`) is not an error.
fn print_json<T: Serialize>(value: &T) {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    let _ = writeln!(std::io::stdout().lock(), "{text}");
}

fn require_out<'a>(common: &'a Common, command: &str) -> Result<&'a Path> {
    common
        .out
        .as_deref()
        .ok_or_else(|| Error::param("out", format!("`{command}` writes a CSV file and needs --out")))
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Simulate { common, cycles } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = cycles {
                cfg.experiment.n_cycles = n;
            }
            cfg.validate()?;
            let out = require_out(&common, "simulate")?;
            let tags = simulate_timetags(&cfg.experiment)?;
            io::write_timetags(out, &tags)?;
            io::write_sidecar(out, &Sidecar::new("simulate", &cfg.to_json(), Some(cfg.experiment.seed)))
        }
        Command::Hist { tags, common, binning } => {
            let mut cfg = load_config(&common)?;
            apply_binning(&mut cfg, &binning)?;
            let stream = io::read_timetags(&tags)?;
            let a = &cfg.analysis;
            let range = TauRange::five_peak(cfg.experiment.interferometer.delay_ns, a.halfwidth_ns);
            let h = build_coincidence_histogram(&stream, &a.gate, range, a.bin_width, a.smoothing)?;
            let summary = visibility_summary(&cfg, &h)?;
            if let Some(out) = &common.out {
                io::write_histogram(out, &h)?;
                io::write_sidecar(out, &Sidecar::new("hist", &cfg.to_json(), None))?;
            }
            print_json(&summary);
            Ok(())
        }
        Command::Visibility { histogram, common, binning } => {
            let mut cfg = load_config(&common)?;
            apply_binning(&mut cfg, &binning)?;
            let h = io::read_histogram(&histogram, 1)?;
            let summary = visibility_summary(&cfg, &h)?;
            emit_json(&common, "visibility", &cfg.to_json(), None, &summary)
        }
        Command::Rabi { common, max_duration, step } => {
            let cfg = load_config(&common)?;
            if !(step > 0.0 && max_duration >= 0.0) {
                return Err(Error::param("step", "need step > 0 and max_duration >= 0"));
            }
            let out = require_out(&common, "rabi")?;
            let n = (max_duration / step).floor() as usize;
            let durations: Vec<f64> = (0..=n).map(|i| i as f64 * step).collect();
            let sp = &cfg.experiment.spin;
            let half = flipped_population(sp, &durations, false)?;
            let three = flipped_population(sp, &durations, true)?;
            io::write_columns(out, &["duration_ns", "from_half", "from_three_half"], &[durations, half, three])?;
            let provenance = json!({"spin": sp, "max_duration": max_duration, "step": step}).to_string();
            io::write_sidecar(out, &Sidecar::new("rabi", &provenance, None))
        }
        Command::Fit {
            model,
            data,
            common,
            binning,
        } => {
            let mut cfg = load_config(&common)?;
            apply_binning(&mut cfg, &binning)?;
            run_fit(model, &data, &cfg, &common)
        }
        Command::Dephasing {
            common,
            temperature,
            linewidth,
            gamma,
            lifetime,
            delay,
        } => {
            let rows: Vec<(f64, f64, f64)> = match (temperature, linewidth, gamma) {
                (Some(t), Some(l), Some(g)) => vec![(t, l, g)],
                (None, None, None) => TEMPERATURE_STUDY.iter().map(|r| (r.0, r.1, 2.0 * r.2)).collect(),
                _ => {
                    return Err(Error::param(
                        "dephasing",
                        "give all of --temperature, --linewidth and --gamma, or none for the built-in table",
                    ))
                }
            };
            if !(lifetime > 0.0) {
                return Err(Error::param("lifetime", "must be > 0"));
            }
            let out: Vec<_> = rows
                .iter()
                .map(|&(t, l, g)| dephasing_json(t, l, g, 1.0 / lifetime, delay))
                .collect::<Result<_>>()?;
            let provenance = json!({"rows": rows, "lifetime": lifetime, "delay": delay}).to_string();
            emit_json(&common, "dephasing", &provenance, None, &out)
        }
        Command::Report {
            common,
            binning,
            cycles,
            model,
        } => {
            let mut cfg = load_config(&common)?;
            if let Some(n) = cycles {
                cfg.experiment.n_cycles = n;
            }
            apply_binning(&mut cfg, &binning)?;
            let model_cfg = match &model {
                Some(p) => RunConfig::load(p)?.experiment,
                None => cfg.experiment.clone(),
            };
            let a = &cfg.analysis;
            let bins = ReportBinning {
                range: TauRange::five_peak(cfg.experiment.interferometer.delay_ns, a.halfwidth_ns),
                bin_width: a.bin_width,
            };
            let r = mc_vs_model_report(&cfg.experiment, &model_cfg, &a.gate, bins)?;
            emit_json(&common, "report", &cfg.to_json(), Some(cfg.experiment.seed), &r)
        }
    }
}

#[derive(Debug, Serialize)]
struct VisibilitySummary {
    areas: [f64; 5],
    raw_visibility: Estimate,
    signal_to_noise: f64,
    jitter_factor: f64,
    corrected_visibility: Estimate,
    over_corrected: bool,
}

fn visibility_summary(cfg: &RunConfig, h: &CoincidenceHistogram) -> Result<VisibilitySummary> {
    let e = &cfg.experiment;
    let a = extract_peak_areas(h, e.interferometer.delay_ns, cfg.analysis.halfwidth_ns)?;
    let raw = raw_visibility(&a)?;
    let sn = e.noise_model()?.signal_to_noise();
    let beta = gated_jitter_factor(e.interferometer.sigma_arrival_ns, e.emitter.decay_rate(), &cfg.analysis.gate);
    let c = correct_visibility(&CorrectionInputs::new(raw, sn, &e.interferometer, beta))?;
    Ok(VisibilitySummary {
        areas: a.as_array(),
        raw_visibility: raw,
        signal_to_noise: sn,
        jitter_factor: beta,
        corrected_visibility: c.visibility,
        over_corrected: c.over_corrected,
    })
}

fn dephasing_json(t: f64, linewidth: f64, gamma_mhz: f64, decay_rate: f64, delay: f64) -> Result<serde_json::Value> {
    let row = DephasingRow::evaluate(t, linewidth, mhz_to_rate(gamma_mhz), decay_rate, delay)?;
    let dl = &row.dephasing_limited;
    let fl = &row.diffusion_limited;
    Ok(json!({
        "temperature_k": t,
        "linewidth_mhz": linewidth,
        "gamma_mhz": gamma_mhz,
        "dephasing_limited": {
            "pure_dephasing_max_mhz": rate_to_mhz(dl.pure_dephasing_max),
            "diffusion_amplitude_mhz": rate_to_mhz(dl.diffusion_amplitude),
        },
        "diffusion_limited": {
            "diffusion_amplitude_max_mhz": rate_to_mhz(fl.diffusion_amplitude_max),
            "correlation_time_min_ns": fl.correlation_time_min.finite(),
        },
    }))
}

fn columns(data: &Path, n: usize) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(data).map_err(|e| Error::Io {
        path: data.display().to_string(),
        source: e,
    })?;
    let mut cols = vec![Vec::new(); n];
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line.split(',').filter_map(|s| s.trim().parse().ok()).collect();
        if vals.len() != n {
            return Err(Error::Parse {
                path: data.display().to_string(),
                line: i + 1,
                message: format!("expected {n} numeric columns"),
            });
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v);
        }
    }
    Ok(cols)
}

fn run_fit(model: FitModel, data: &Path, cfg: &RunConfig, common: &Common) -> Result<()> {
    let e = &cfg.experiment;
    let a = &cfg.analysis;
    let value = match model {
        FitModel::Saturation => serde_json::to_value(fit_saturation(&io::read_xy_csv(data)?)?),
        FitModel::Gamma => serde_json::to_value(fit_gamma_from_visibility(&io::read_xy_csv(data)?, e.emitter.decay_rate())?),
        FitModel::Vibronic => {
            let c = columns(data, 3)?;
            let rows: Vec<VibronicRow> = (0..c[0].len())
                .map(|i| VibronicRow {
                    temperature_k: c[0][i],
                    rate: mhz_to_rate(c[1][i]),
                    sigma: mhz_to_rate(c[2][i]),
                })
                .collect();
            let r = fit_vibronic_prefactor(&rows, a.vibronic_gap_mev, a.weighted)?;
            let p = r.get("prefactor").expect("prefactor is fitted");
            serde_json::to_value(json!({
                "prefactor_mhz_per_mev3": rate_to_mhz(p.value),
                "prefactor_sigma_mhz_per_mev3": rate_to_mhz(p.sigma),
                "fit": r,
            }))
        }
        FitModel::Rabi => {
            let c = columns(data, 3)?;
            let curves = RabiCurves {
                durations_ns: c[0].clone(),
                from_half: c[1].clone(),
                from_three_half: c[2].clone(),
            };
            serde_json::to_value(fit_rabi(&curves, &e.spin)?)
        }
        FitModel::Beat => {
            let h = io::read_histogram(data, a.smoothing)?;
            let w = central_peak_weights(e, &a.gate)?;
            let [c1, c2, c3] = w.beat_coefficients();
            if !(c1 > 0.0) {
                return Err(Error::param("experiment.rf", "beat fit needs an RF pulse that mixes the colours"));
            }
            let setup = BeatFitSetup {
                decay_rate: e.emitter.decay_rate(),
                coherence_decay: e.emitter.coherence_decay(e.interferometer.delay_ns),
                c2_over_c1: c2 / c1,
                c3_over_c1: c3 / c1,
                gate: a.gate,
                smoothing: a.smoothing,
                sigma_det_init: 0.15,
            };
            serde_json::to_value(fit_beat(&h, &setup)?)
        }
        FitModel::Lines => {
            let spectrum = io::read_xy_csv(data)?;
            serde_json::to_value(fit_lorentzian_lines(&spectrum, a.lines, Estimate::exact(a.instrument_fwhm_mhz))?)
        }
    }
    .expect("fit result serializes");
    let provenance = json!({"model": model, "config": cfg}).to_string();
    emit_json(common, "fit", &provenance, None, &value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn command_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(run(["homsim", "--help"]), 0);
        assert_eq!(run(["homsim", "bogus"]), 1);
        assert_eq!(run(["homsim", "dephasing", "--temperature", "5.0"]), 1);
        // γ beyond the saturation bound has no diffusion-limited solution
        assert_eq!(run(["homsim", "dephasing", "--temperature", "5", "--linewidth", "62.4", "--gamma", "50"]), 2);
        assert_eq!(run(["homsim", "dephasing"]), 0);
    }
}
