//! File formats: time-tag and histogram CSV, run configuration JSON and the
//! provenance sidecar written next to every output.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::histogram::{BinnedSeries, CoincidenceHistogram};
use crate::model::GateWindow;
use crate::montecarlo::ExperimentConfig;
use crate::peaks::DEFAULT_HALFWIDTH_NS;
use crate::timetags::{Channel, TimeTag, TimeTagStream};

pub const TIMETAG_HEADER: &str = "channel,time_ps";
pub const HISTOGRAM_HEADER: &str = "tau_ns,count";

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

/// Formats a double with 17 significant digits, enough for an exact round
/// trip.
pub fn format_f64(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=16).contains(&exp) {
        let decimals = (16 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.16e}")
    }
}

pub fn write_timetags(path: &Path, stream: &TimeTagStream) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{TIMETAG_HEADER}")?;
        for r in &stream.records {
            writeln!(w, "{},{}", r.channel.index(), r.time_ps)?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

/// Reads a time-tag CSV. Line numbers in errors are 1-based and count the
/// header.
pub fn read_timetags(path: &Path) -> Result<TimeTagStream> {
    let file = fs::File::open(path).map_err(|e| io_err(path, e))?;
    let mut lines = BufReader::new(file).lines();
    match lines.next() {
        Some(Ok(h)) if h.trim() == TIMETAG_HEADER => {}
        Some(Ok(h)) => return Err(parse_err(path, 1, format!("expected header `{TIMETAG_HEADER}`, found `{h}`"))),
        Some(Err(e)) => return Err(io_err(path, e)),
        None => return Err(parse_err(path, 1, "missing header")),
    }
    let mut records = Vec::new();
    let mut last: Option<i64> = None;
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        let line = line.map_err(|e| io_err(path, e))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (ch, t) = line
            .split_once(',')
            .ok_or_else(|| parse_err(path, n, "expected two comma-separated fields"))?;
        let ch: u8 = ch
            .trim()
            .parse()
            .map_err(|_| parse_err(path, n, format!("channel `{ch}` is not an integer")))?;
        let channel =
            Channel::from_index(ch).ok_or_else(|| parse_err(path, n, format!("unknown channel {ch}, expected 0, 1 or 2")))?;
        let t = t.trim();
        let time_ps: i64 = t
            .parse()
            .map_err(|_| parse_err(path, n, format!("time `{t}` is not an integer number of picoseconds")))?;
        if last.is_some_and(|l| time_ps < l) {
            return Err(parse_err(path, n, format!("timestamp {time_ps} is earlier than the previous record")));
        }
        last = Some(time_ps);
        records.push(TimeTag::new(channel, time_ps));
    }
    Ok(TimeTagStream { records })
}

/// Writes `tau_ns,count` per bin center; with smoothing the smoothed values
/// follow in a third column.
pub fn write_histogram(path: &Path, h: &CoincidenceHistogram) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let smoothed = (h.smoothing > 1).then(|| h.values());
    let mut emit = || -> std::io::Result<()> {
        if smoothed.is_some() {
            writeln!(w, "{HISTOGRAM_HEADER},smoothed")?;
        } else {
            writeln!(w, "{HISTOGRAM_HEADER}")?;
        }
        for (i, c) in h.counts.iter().enumerate() {
            let tau = format_f64(h.bin_center(i));
            match &smoothed {
                Some(s) => writeln!(w, "{tau},{c},{}", format_f64(s[i]))?,
                None => writeln!(w, "{tau},{c}")?,
            }
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

/// Reads a histogram CSV written by [`write_histogram`]. The bin width is
/// taken from the spacing of the centers; any smoothed column is ignored
/// and `smoothing` is applied afresh.
pub fn read_histogram(path: &Path, smoothing: usize) -> Result<CoincidenceHistogram> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    if !header.trim().starts_with(HISTOGRAM_HEADER) {
        return Err(parse_err(path, 1, format!("expected header `{HISTOGRAM_HEADER}`")));
    }
    let mut taus = Vec::new();
    let mut counts = Vec::new();
    for (i, line) in lines.enumerate() {
        let n = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut f = line.split(',');
        let tau: f64 = f
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err(path, n, "tau_ns is not a number"))?;
        let c: u64 = f
            .next()
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| parse_err(path, n, "count is not a non-negative integer"))?;
        taus.push(tau);
        counts.push(c);
    }
    if taus.len() < 2 {
        return Err(parse_err(path, 2, "need at least two bins"));
    }
    let bw = (taus[taus.len() - 1] - taus[0]) / (taus.len() - 1) as f64;
    if !(bw > 0.0) {
        return Err(parse_err(path, 2, "bin centers must increase"));
    }
    let tau_min = taus[0] - 0.5 * bw;
    let h = CoincidenceHistogram {
        tau_min,
        tau_max: tau_min + bw * counts.len() as f64,
        bin_width: bw,
        counts,
        smoothing: 1,
    };
    h.with_smoothing(smoothing)
}

/// Reads `x,y[,sigma]` rows with a header line. A missing σ column becomes
/// Poisson weights √max(y, 1).
pub fn read_xy_csv(path: &Path) -> Result<Vec<crate::fitting::Observation>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| parse_err(path, n, "expected numeric fields"))?;
        let obs = match vals.as_slice() {
            [x, y] => crate::fitting::Observation::new(*x, *y, y.max(1.0).sqrt()),
            [x, y, s] => crate::fitting::Observation::new(*x, *y, *s),
            _ => return Err(parse_err(path, n, "expected 2 or 3 columns")),
        };
        out.push(obs);
    }
    Ok(out)
}

/// Writes columns with a header; values use [`format_f64`].
pub fn write_columns(path: &Path, header: &[&str], columns: &[Vec<f64>]) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
    let mut w = BufWriter::new(file);
    let rows = columns.first().map_or(0, Vec::len);
    let mut emit = || -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for i in 0..rows {
            let row: Vec<String> = columns.iter().map(|c| format_f64(c[i])).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    };
    emit().map_err(|e| io_err(path, e))
}

fn default_bin_width() -> f64 {
    0.1
}
fn default_smoothing() -> usize {
    1
}
fn default_halfwidth() -> f64 {
    DEFAULT_HALFWIDTH_NS
}
fn default_lines() -> usize {
    1
}
fn default_instrument() -> f64 {
    40.0
}
fn default_gap() -> f64 {
    4.4
}

/// Analysis settings shared by the subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "GateWindow::open")]
    pub gate: GateWindow,
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    #[serde(default = "default_smoothing")]
    pub smoothing: usize,
    /// Peak integration half-width [ns].
    #[serde(default = "default_halfwidth")]
    pub halfwidth_ns: f64,
    /// Fits run by the `fit` subcommand when no model is named.
    #[serde(default)]
    pub fits: Vec<String>,
    /// Number of Lorentzian lines for spectral fits.
    #[serde(default = "default_lines")]
    pub lines: usize,
    /// Instrument FWHM for spectral deconvolution [MHz].
    #[serde(default = "default_instrument")]
    pub instrument_fwhm_mhz: f64,
    /// Vibronic gap ΔE [meV].
    #[serde(default = "default_gap")]
    pub vibronic_gap_mev: f64,
    /// Weight vibronic rows by their quoted errors.
    #[serde(default)]
    pub weighted: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all analysis fields have defaults")
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default)]
    pub timetags: Option<PathBuf>,
    #[serde(default)]
    pub histogram: Option<PathBuf>,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

/// Complete run description loaded from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses and validates a configuration. Errors name the offending key.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| Error::Config {
            key: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |prefix: &str, e: Error| match e {
            Error::InvalidParameter { name, reason } => Error::Config {
                key: format!("{prefix}.{name}"),
                message: reason,
            },
            other => other,
        };
        self.experiment.validate().map_err(|e| wrap("experiment", e))?;
        let a = &self.analysis;
        if !(a.bin_width > 0.0) {
            return Err(Error::Config {
                key: "analysis.bin_width".into(),
                message: format!("must be > 0, got {}", a.bin_width),
            });
        }
        if a.smoothing == 0 || a.smoothing.is_multiple_of(2) {
            return Err(Error::Config {
                key: "analysis.smoothing".into(),
                message: format!("must be a positive odd integer, got {}", a.smoothing),
            });
        }
        let d = self.experiment.interferometer.delay_ns;
        if !(a.halfwidth_ns > 0.0 && a.halfwidth_ns < 0.5 * d) {
            return Err(Error::Config {
                key: "analysis.halfwidth_ns".into(),
                message: format!("must lie in (0, δt/2 = {}), got {}", 0.5 * d, a.halfwidth_ns),
            });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}

/// Provenance record stored as `<output>.meta.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub command: String,
    /// SHA-256 of the canonical configuration JSON, hex encoded.
    pub config_sha256: String,
    pub seed: Option<u64>,
    pub version: String,
}

impl Sidecar {
    pub fn new(command: &str, config_json: &str, seed: Option<u64>) -> Self {
        Self {
            command: command.to_string(),
            config_sha256: sha256_hex(config_json.as_bytes()),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sidecar_path(output: &Path) -> PathBuf {
    let mut s = output.as_os_str().to_owned();
    s.push(".meta.json");
    PathBuf::from(s)
}

pub fn write_sidecar(output: &Path, meta: &Sidecar) -> Result<()> {
    let path = sidecar_path(output);
    write_json(&path, meta)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("value serializes");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}
