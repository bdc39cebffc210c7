//! Seeded time-tag simulation of the two-pulse interference experiment and
//! its comparison against the analytic coincidence model.
//!
//! A run is split in two passes. The emitter state chain (availability,
//! metastable dwell, spin label, RF flips) is inherently sequential and is
//! walked cycle by cycle. Photon timing, routing and detection only depend on
//! the per-cycle emissions and run in parallel. Every cycle owns two ChaCha
//! streams (2c for the state chain, 2c + 1 for the photons), so the output is
//! identical for any number of worker threads.

use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corrections::{jitter_factor, NoiseModel};
use crate::correlation::{binned_profile, gated_pair_shape};
use crate::error::{Error, Result};
use crate::histogram::{build_coincidence_histogram, BinnedSeries, CoincidenceHistogram, PredictedHistogram, TauRange};
use crate::model::{EmitterParams, Estimate, GateWindow, InterferometerParams};
use crate::peaks::{extract_peak_areas, raw_visibility, PeakAreas, DEFAULT_HALFWIDTH_NS};
use crate::spectroscopy::saturation_probability;
use crate::spin::{flipped_population, SpinParams};
use crate::timetags::{Channel, TimeTag, TimeTagStream};

/// Minimum expected count in the weakest side peak for a meaningful report.
pub const MIN_PEAK_COUNTS: f64 = 100.0;

/// Bins with fewer expected counts are left out of the χ² sums.
pub const MIN_BIN_EXPECTATION: f64 = 5.0;

/// Ground-state spin subspace; decides the optical line (colour) a photon is
/// emitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpinLabel {
    Half,
    ThreeHalf,
}

impl SpinLabel {
    pub fn flipped(self) -> Self {
        match self {
            SpinLabel::Half => SpinLabel::ThreeHalf,
            SpinLabel::ThreeHalf => SpinLabel::Half,
        }
    }

    fn index(self) -> usize {
        match self {
            SpinLabel::Half => 0,
            SpinLabel::ThreeHalf => 1,
        }
    }

    fn random<R: Rng>(rng: &mut R) -> Self {
        if rng.random_bool(0.5) {
            SpinLabel::Half
        } else {
            SpinLabel::ThreeHalf
        }
    }
}

/// RF pulse applied once per cycle, `start_ns` after the first laser pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RfPulse {
    #[serde(default = "default_rf_start")]
    pub start_ns: f64,
    pub duration_ns: f64,
    /// Overrides the spin-dynamics flip probability when set.
    #[serde(default)]
    pub flip_probability: Option<f64>,
}

fn default_rf_start() -> f64 {
    18.0
}

impl RfPulse {
    pub fn new(duration_ns: f64) -> Self {
        Self {
            start_ns: default_rf_start(),
            duration_ns,
            flip_probability: None,
        }
    }

    /// Pulse that flips with probability `p` regardless of the spin model.
    pub fn with_flip_probability(duration_ns: f64, p: f64) -> Self {
        Self {
            flip_probability: Some(p),
            ..Self::new(duration_ns)
        }
    }
}

/// Excitation sequence of one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sequence {
    /// Two pulses δt apart into the unbalanced interferometer.
    #[default]
    TwoPulse,
    /// One pulse per cycle sent straight onto the second splitter, i.e. an
    /// autocorrelation measurement.
    Autocorrelation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub emitter: EmitterParams,
    pub interferometer: InterferometerParams,
    /// Noise photon probability q per laser pulse.
    pub noise_probability: f64,
    #[serde(default = "SpinParams::reference")]
    pub spin: SpinParams,
    #[serde(default)]
    pub rf: Option<RfPulse>,
    #[serde(default)]
    pub sequence: Sequence,
    pub pulse_energy_pj: f64,
    /// Repetition period in units of δt.
    #[serde(default = "default_repetition_factor")]
    pub repetition_factor: f64,
    pub n_cycles: u64,
    pub seed: u64,
}

fn default_repetition_factor() -> f64 {
    10.0
}

impl ExperimentConfig {
    /// Measured-setup configuration at 5.0 K: 5.5 pJ pulses, no RF, and a
    /// noise probability chosen so that the mean signal-to-noise ratio is 28.
    pub fn reference_setup(n_cycles: u64, seed: u64) -> Self {
        let mut cfg = Self {
            emitter: EmitterParams::reference_5k(),
            interferometer: InterferometerParams::reference(),
            noise_probability: 0.0,
            spin: SpinParams::reference(),
            rf: None,
            sequence: Sequence::TwoPulse,
            pulse_energy_pj: 5.5,
            repetition_factor: default_repetition_factor(),
            n_cycles,
            seed,
        };
        cfg.set_signal_to_noise(28.0);
        cfg
    }

    /// Noiseless, lossless, perfectly coherent source with no ISC.
    pub fn ideal(n_cycles: u64, seed: u64) -> Self {
        let mut emitter = EmitterParams::reference_5k();
        emitter.pure_dephasing = 0.0;
        emitter.diffusion_amplitude = 0.0;
        emitter.isc_probability = 0.0;
        Self {
            emitter,
            interferometer: InterferometerParams::ideal(48.7),
            noise_probability: 0.0,
            spin: SpinParams::reference(),
            rf: None,
            sequence: Sequence::TwoPulse,
            pulse_energy_pj: 5.5,
            repetition_factor: default_repetition_factor(),
            n_cycles,
            seed,
        }
    }

    /// Sets q so that mean signal probability / q equals `sn`.
    pub fn set_signal_to_noise(&mut self, sn: f64) {
        let s = EmissionStatistics::from_config(self).mean_signal();
        self.noise_probability = if sn.is_infinite() { 0.0 } else { s / sn };
    }

    pub fn repetition_period_ns(&self) -> f64 {
        self.repetition_factor * self.interferometer.delay_ns
    }

    fn pulses_per_cycle(&self) -> usize {
        match self.sequence {
            Sequence::TwoPulse => 2,
            Sequence::Autocorrelation => 1,
        }
    }

    /// Signal/noise probabilities per pulse for the correction algebra.
    pub fn noise_model(&self) -> Result<NoiseModel> {
        NoiseModel::new(EmissionStatistics::from_config(self).mean_signal(), self.noise_probability)
    }

    pub fn validate(&self) -> Result<()> {
        self.emitter.validate()?;
        self.interferometer.validate()?;
        if !(0.0..=1.0).contains(&self.noise_probability) {
            return Err(Error::param(
                "noise_probability",
                format!("must lie in [0, 1], got {}", self.noise_probability),
            ));
        }
        if !(self.pulse_energy_pj >= 0.0) || !self.pulse_energy_pj.is_finite() {
            return Err(Error::param("pulse_energy_pj", "must be finite and >= 0"));
        }
        if self.n_cycles == 0 {
            return Err(Error::param("n_cycles", "must be >= 1"));
        }
        // each cycle must hold all its slots plus ten lifetimes of emission
        let slots = match self.sequence {
            Sequence::TwoPulse => 2.0 * self.interferometer.delay_ns,
            Sequence::Autocorrelation => 0.0,
        };
        let needed = slots + 10.0 * self.emitter.lifetime_ns;
        if !(self.repetition_period_ns() > needed) {
            return Err(Error::param(
                "repetition_factor",
                format!("period {} ns must exceed {needed} ns", self.repetition_period_ns()),
            ));
        }
        if let Some(rf) = &self.rf {
            if !(rf.start_ns >= 0.0 && rf.start_ns < self.interferometer.delay_ns) {
                return Err(Error::param("rf.start_ns", "must lie between the two laser pulses"));
            }
            if !(rf.duration_ns >= 0.0) || !rf.duration_ns.is_finite() {
                return Err(Error::param("rf.duration_ns", "must be finite and >= 0"));
            }
            match rf.flip_probability {
                Some(p) if !(0.0..=1.0).contains(&p) => {
                    return Err(Error::param("rf.flip_probability", format!("must lie in [0, 1], got {p}")));
                }
                Some(_) => {}
                None => self.spin.validate()?,
            }
        }
        Ok(())
    }

    /// Flip probability of the RF pulse for an emitter starting in each
    /// subspace, indexed by [`SpinLabel`]. Zero without RF.
    pub fn flip_probabilities(&self) -> Result<[f64; 2]> {
        let Some(rf) = &self.rf else { return Ok([0.0; 2]) };
        if let Some(p) = rf.flip_probability {
            return Ok([p, p]);
        }
        let half = flipped_population(&self.spin, &[rf.duration_ns], false)?[0];
        let three = flipped_population(&self.spin, &[rf.duration_ns], true)?[0];
        Ok([half.clamp(0.0, 1.0), three.clamp(0.0, 1.0)])
    }
}

/// Stationary per-pulse emission probabilities of the state chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EmissionStatistics {
    pub excitation_probability: f64,
    /// Probability of a ZPL photon given the emitter is available.
    pub emission_given_available: f64,
    /// Probability the emitter is out of the metastable state at each pulse.
    pub availability: [f64; 2],
    /// Signal photon probability at each pulse.
    pub signal: [f64; 2],
    /// Probability of a signal photon at both pulses of one cycle.
    pub signal_pair: f64,
    pub noise: f64,
}

impl EmissionStatistics {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        let e = &cfg.emitter;
        let p_exc = saturation_probability(cfg.pulse_energy_pj, e.saturation_energy_pj).unwrap_or(0.0);
        let em = p_exc * (1.0 - e.isc_probability);
        let u = 1.0 - p_exc * e.isc_probability;
        let period = cfg.repetition_period_ns();
        let ret = |dt: f64| -(-dt / e.metastable_lifetime_ns).exp_m1();
        let (a0, a1) = match cfg.sequence {
            Sequence::TwoPulse => {
                let r1 = ret(cfg.interferometer.delay_ns);
                let r9 = ret(period - cfg.interferometer.delay_ns);
                let a0 = (r9 + u * (1.0 - r9) * r1) / (1.0 - u * u * (1.0 - r1) * (1.0 - r9));
                (a0, r1 + a0 * u * (1.0 - r1))
            }
            Sequence::Autocorrelation => {
                let r = ret(period);
                let a = r / (1.0 - u * (1.0 - r));
                (a, 0.0)
            }
        };
        Self {
            excitation_probability: p_exc,
            emission_given_available: em,
            availability: [a0, a1],
            signal: [a0 * em, a1 * em],
            signal_pair: a0 * em * em,
            noise: cfg.noise_probability,
        }
    }

    /// Signal probability averaged over the pulses of a cycle.
    pub fn mean_signal(&self) -> f64 {
        if self.availability[1] == 0.0 && self.signal[1] == 0.0 {
            self.signal[0]
        } else {
            0.5 * (self.signal[0] + self.signal[1])
        }
    }
}

/// A ZPL photon emitted after a laser pulse.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Emission {
    /// Emission delay after the laser pulse [ns].
    pub delay_ns: f64,
    pub label: SpinLabel,
}

/// Emitter output of one cycle; the second entry is always `None` for the
/// autocorrelation sequence.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CycleEmissions {
    pub pulses: [Option<Emission>; 2],
}

fn cycle_rng(base: &ChaCha8Rng, stream: u64) -> ChaCha8Rng {
    let mut r = base.clone();
    r.set_stream(stream);
    r.set_word_pos(0);
    r
}

/// Walks the emitter state chain: excitation, intersystem crossing with a
/// metastable dwell, spin-label re-randomization on return, and the RF flip.
pub fn simulate_emissions(cfg: &ExperimentConfig) -> Result<Vec<CycleEmissions>> {
    cfg.validate()?;
    let stats = EmissionStatistics::from_config(cfg);
    let flips = cfg.flip_probabilities()?;
    let e = &cfg.emitter;
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    let emit = Exp::new(e.decay_rate()).map_err(|_| Error::param("emitter.lifetime_ns", "invalid"))?;
    let dwell = Exp::new(1.0 / e.metastable_lifetime_ns)
        .map_err(|_| Error::param("emitter.metastable_lifetime_ns", "invalid"))?;
    let period = cfg.repetition_period_ns();
    let delay = cfg.interferometer.delay_ns;
    let n_pulses = cfg.pulses_per_cycle();

    let mut init = cycle_rng(&base, u64::MAX);
    let mut available = true;
    let mut dark_until = 0.0;
    let mut label = SpinLabel::random(&mut init);
    let mut out = Vec::with_capacity(cfg.n_cycles as usize);
    for c in 0..cfg.n_cycles {
        let mut rng = cycle_rng(&base, 2 * c);
        let t_cycle = c as f64 * period;
        let mut cyc = CycleEmissions::default();
        for k in 0..n_pulses {
            let t_pulse = t_cycle + k as f64 * delay;
            if !available && dark_until <= t_pulse {
                available = true;
                label = SpinLabel::random(&mut rng);
            }
            if available && rng.random::<f64>() < stats.excitation_probability {
                if rng.random::<f64>() < e.isc_probability {
                    available = false;
                    dark_until = t_pulse + dwell.sample(&mut rng);
                } else {
                    cyc.pulses[k] = Some(Emission {
                        delay_ns: emit.sample(&mut rng),
                        label,
                    });
                }
            }
            if k == 0 && n_pulses == 2 {
                if let Some(rf) = &cfg.rf {
                    let t_rf = t_cycle + rf.start_ns;
                    if !available && dark_until <= t_rf {
                        available = true;
                        label = SpinLabel::random(&mut rng);
                    }
                    // the drive only acts on the ground state
                    let excited = cyc.pulses[0].is_some_and(|em| em.delay_ns > rf.start_ns);
                    if available && !excited && rng.random::<f64>() < flips[label.index()] {
                        label = label.flipped();
                    }
                }
            }
        }
        out.push(cyc);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct Photon {
    /// Arrival slot at the second splitter, in units of δt.
    slot: usize,
    long_arm: bool,
    /// Arrival time within the cycle [ns], including laser jitter.
    arrival: f64,
    /// Start of the wavepacket (laser pulse time plus jitter) [ns].
    start: f64,
    /// Colour of a signal photon; `None` for noise.
    label: Option<SpinLabel>,
}

struct Routing<'a> {
    cfg: &'a ExperimentConfig,
    gamma: f64,
    fringe: f64,
    emit: Exp<f64>,
    laser: Normal<f64>,
    det: Normal<f64>,
    delay_ps: i64,
    period_ps: i64,
}

impl Routing<'_> {
    /// Overlap factor (1 − ε)²·M·𝟙 of an interfering signal pair.
    fn overlap(&self, short: &Photon, long: &Photon) -> f64 {
        // both detection orderings must be allowed by the wavepacket supports
        if long.arrival < short.start || short.arrival < long.start {
            return 0.0;
        }
        let tau = long.arrival - short.arrival;
        let mut m = (-self.gamma * tau.abs()).exp();
        if short.label != long.label {
            m *= (2.0 * PI * self.cfg.emitter.splitting_ghz * tau).cos();
        }
        self.fringe * m
    }

    fn detect(&self, rng: &mut ChaCha8Rng, p: &Photon, to_d1: bool, cycle_ps: i64, out: &mut Vec<TimeTag>) {
        let ifm = &self.cfg.interferometer;
        let eta = if to_d1 { ifm.eta1 } else { ifm.eta2 };
        let keep = rng.random::<f64>() < eta;
        let jitter = self.det.sample(rng);
        if keep {
            let rel = p.arrival - p.slot as f64 * ifm.delay_ns + jitter;
            let t = cycle_ps + p.slot as i64 * self.delay_ps + (rel * 1e3).round() as i64;
            out.push(TimeTag::new(if to_d1 { Channel::D1 } else { Channel::D2 }, t));
        }
    }

    fn single(&self, rng: &mut ChaCha8Rng, p: &Photon, cycle_ps: i64, out: &mut Vec<TimeTag>) {
        let t2 = self.cfg.interferometer.t2;
        let transmitted = rng.random::<f64>() < t2;
        // short arm transmits to D1, long arm transmits to D2
        let to_d1 = transmitted != p.long_arm;
        self.detect(rng, p, to_d1, cycle_ps, out);
    }

    fn cycle(&self, rng: &mut ChaCha8Rng, c: u64, em: &CycleEmissions, out: &mut Vec<TimeTag>) {
        let ifm = &self.cfg.interferometer;
        let cycle_ps = c as i64 * self.period_ps;
        let n_pulses = self.cfg.pulses_per_cycle();
        // one marker per arrival slot, so the long-arm copy of the second
        // pulse is gated relative to its own reference
        let n_slots = if n_pulses == 2 { 3 } else { 1 };
        for k in 0..n_slots {
            out.push(TimeTag::new(Channel::Sync, cycle_ps + k as i64 * self.delay_ps));
        }
        let mut photons: Vec<Photon> = Vec::with_capacity(4);
        for (k, emission) in em.pulses.iter().enumerate().take(n_pulses) {
            let jitter = self.laser.sample(rng);
            let noise = (rng.random::<f64>() < self.cfg.noise_probability).then(|| self.emit.sample(rng));
            let sources = emission.map(|e| (e.delay_ns, Some(e.label))).into_iter().chain(noise.map(|u| (u, None)));
            for (u, label) in sources {
                let long_arm = n_pulses == 2 && rng.random::<f64>() >= ifm.t1;
                let slot = k + long_arm as usize;
                let start = slot as f64 * ifm.delay_ns + jitter;
                photons.push(Photon {
                    slot,
                    long_arm,
                    arrival: start + u,
                    start,
                    label,
                });
            }
        }

        let pair = photons
            .iter()
            .position(|p| p.slot == 1 && !p.long_arm && p.label.is_some())
            .zip(photons.iter().position(|p| p.slot == 1 && p.long_arm && p.label.is_some()));
        for (i, p) in photons.iter().enumerate() {
            match pair {
                Some((s, l)) if i == s || i == l => {
                    if i == s {
                        self.interfere(rng, &photons[s], &photons[l], cycle_ps, out);
                    }
                }
                _ => self.single(rng, p, cycle_ps, out),
            }
        }
    }

    /// Joint outcome for two signal photons meeting at the second splitter.
    fn interfere(&self, rng: &mut ChaCha8Rng, short: &Photon, long: &Photon, cycle_ps: i64, out: &mut Vec<TimeTag>) {
        let (t, r) = (self.cfg.interferometer.t2, self.cfg.interferometer.r2);
        let k = self.overlap(short, long);
        let mut p_normal = t * t - t * r * k;
        let mut p_swapped = r * r - t * r * k;
        if p_normal < 0.0 || p_swapped < 0.0 {
            let split = t * t + r * r - 2.0 * t * r * k;
            p_normal = split * t * t / (t * t + r * r);
            p_swapped = split - p_normal;
        }
        let p_bunch_d1 = t * r * (1.0 + k);
        let x = rng.random::<f64>();
        let (short_d1, long_d1) = if x < p_normal {
            (true, false)
        } else if x < p_normal + p_swapped {
            (false, true)
        } else if x < p_normal + p_swapped + p_bunch_d1 {
            (true, true)
        } else {
            (false, false)
        };
        self.detect(rng, short, short_d1, cycle_ps, out);
        self.detect(rng, long, long_d1, cycle_ps, out);
    }
}

/// Runs the full experiment and returns the sorted time-tag stream. The
/// two-pulse sequence carries sync markers at 0, δt and 2δt of every cycle.
pub fn simulate_timetags(cfg: &ExperimentConfig) -> Result<TimeTagStream> {
    let emissions = simulate_emissions(cfg)?;
    let ifm = &cfg.interferometer;
    let normal = |s: f64| Normal::new(0.0, s).map_err(|_| Error::param("interferometer", "invalid jitter"));
    let routing = Routing {
        cfg,
        gamma: cfg.emitter.coherence_decay(ifm.delay_ns),
        fringe: (1.0 - ifm.fringe_deficit).powi(2),
        emit: Exp::new(cfg.emitter.decay_rate()).map_err(|_| Error::param("emitter.lifetime_ns", "invalid"))?,
        // each pulse carries half the variance of the relative arrival jitter
        laser: normal(ifm.sigma_arrival_ns / SQRT_2)?,
        det: normal(ifm.sigma_det_ns)?,
        delay_ps: (ifm.delay_ns * 1e3).round() as i64,
        period_ps: (cfg.repetition_period_ns() * 1e3).round() as i64,
    };
    let base = ChaCha8Rng::seed_from_u64(cfg.seed);
    const CHUNK: usize = 4096;
    let chunks: Vec<Vec<TimeTag>> = emissions
        .par_chunks(CHUNK)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut out = Vec::with_capacity(chunk.len() * 4);
            for (j, em) in chunk.iter().enumerate() {
                let c = (ci * CHUNK + j) as u64;
                let mut rng = cycle_rng(&base, 2 * c + 1);
                routing.cycle(&mut rng, c, em, &mut out);
            }
            out
        })
        .collect();
    let mut records: Vec<TimeTag> = chunks.into_iter().flatten().collect();
    // equal records are indistinguishable, so an unstable sort stays deterministic
    records.par_sort_unstable();
    Ok(TimeTagStream { records })
}

/// Decomposition of the analytic central peak used to seed the beat fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CentralPeakWeights {
    /// Total central-peak area without interference.
    pub classical: f64,
    /// Area removed by two-photon interference at full coherence, including
    /// fringe contrast and arrival jitter.
    pub dip: f64,
    /// Fraction of interfering pairs with opposite colours.
    pub opposite_fraction: f64,
}

impl CentralPeakWeights {
    /// Beat-model weights (c₁, c₂, c₃) in the same units.
    pub fn beat_coefficients(&self) -> [f64; 3] {
        let c1 = self.dip * self.opposite_fraction;
        let c2 = self.dip * (1.0 - self.opposite_fraction);
        [c1, c2, self.classical - self.dip]
    }
}

struct Component {
    center: f64,
    weight: f64,
    same_pulse: bool,
}

struct AnalyticModel {
    components: Vec<Component>,
    central: CentralPeakWeights,
    decay_rate: f64,
    gamma: f64,
    splitting: f64,
}

fn analytic_model(cfg: &ExperimentConfig, gate: &GateWindow) -> Result<AnalyticModel> {
    cfg.validate()?;
    if cfg.sequence != Sequence::TwoPulse {
        return Err(Error::param("sequence", "analytic comparison needs the two-pulse sequence"));
    }
    let st = EmissionStatistics::from_config(cfg);
    let ifm = &cfg.interferometer;
    let g = cfg.emitter.decay_rate();
    let acc = gate.acceptance(g);
    let scale = acc * acc * ifm.eta1 * ifm.eta2;
    let (s0, s1, q) = (st.signal[0], st.signal[1], st.noise);
    // (weight, pulse x, pulse y, both signal)
    let pairs = [
        (st.signal_pair, 0usize, 1usize, true),
        (s0 * q, 0, 1, false),
        (q * s1, 0, 1, false),
        (q * q, 0, 1, false),
        (s0 * q, 0, 0, false),
        (s1 * q, 1, 1, false),
    ];
    let (t2, r2) = (ifm.t2, ifm.r2);
    // probability that a photon from the given arm reaches D1 or D2
    let route = |long: bool, d1: bool| if long != d1 { t2 } else { r2 };
    let mut components = Vec::new();
    let mut dip = 0.0;
    for &(w, px, py, signal) in &pairs {
        for ax in [false, true] {
            for ay in [false, true] {
                let p_arm = (if ax { ifm.r1 } else { ifm.t1 }) * (if ay { ifm.r1 } else { ifm.t1 });
                let (sx, sy) = (px + ax as usize, py + ay as usize);
                let base = w * p_arm * scale;
                for x_d1 in [true, false] {
                    let p = route(ax, x_d1) * route(ay, !x_d1);
                    let (s_d1, s_d2) = if x_d1 { (sx, sy) } else { (sy, sx) };
                    components.push(Component {
                        center: (s_d2 as f64 - s_d1 as f64) * ifm.delay_ns,
                        weight: base * p,
                        same_pulse: px == py,
                    });
                }
                if signal && sx == sy && ax != ay {
                    dip += base * 2.0 * t2 * r2;
                }
            }
        }
    }
    let beta = gated_jitter_factor(ifm.sigma_arrival_ns, g, gate);
    dip *= (1.0 - ifm.fringe_deficit).powi(2) * beta;
    let classical = components.iter().filter(|c| c.center == 0.0).map(|c| c.weight).sum();

    let flips = cfg.flip_probabilities()?;
    let opposite_fraction = match &cfg.rf {
        None => 0.0,
        Some(rf) => {
            // the first photon must have left the excited state before the RF pulse
            let before = GateWindow::new(gate.t_start(), gate.t_stop().min(rf.start_ns).max(gate.t_start() + 1e-12))?;
            let ground = if rf.start_ns > gate.t_start() { before.acceptance(g) / acc } else { 0.0 };
            0.5 * (flips[0] + flips[1]) * ground
        }
    };
    Ok(AnalyticModel {
        components,
        central: CentralPeakWeights {
            classical,
            dip,
            opposite_fraction,
        },
        decay_rate: g,
        gamma: cfg.emitter.coherence_decay(ifm.delay_ns),
        splitting: cfg.emitter.splitting_ghz,
    })
}

/// Overlap reduction from relative arrival jitter σ for gated photons.
///
/// Two wavepackets offset by Δ only interfere when each photon is emitted
/// at least |Δ| after its own pulse, so the factor is the gated probability
/// of that, averaged over Δ ~ N(0, σ²). For an open gate it equals
/// [`jitter_factor`].
pub fn gated_jitter_factor(sigma_ns: f64, decay_rate: f64, gate: &GateWindow) -> f64 {
    if sigma_ns == 0.0 {
        return 1.0;
    }
    if gate.t_start() == 0.0 && gate.t_stop().is_infinite() {
        return jitter_factor(sigma_ns, 1.0 / decay_rate);
    }
    let acc = gate.acceptance(decay_rate);
    let kept = |d: f64| {
        let lo = gate.t_start().max(d);
        if lo >= gate.t_stop() {
            0.0
        } else {
            ((-decay_rate * lo).exp() - (-decay_rate * gate.t_stop()).exp()) / acc
        }
    };
    // Δ ≥ 0 half-line by Simpson's rule over 10σ
    let n = 2000;
    let h = 10.0 * sigma_ns / n as f64;
    let mut sum = 0.0;
    for i in 0..=n {
        let d = i as f64 * h;
        let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * kept(d) * (-0.5 * (d / sigma_ns).powi(2)).exp();
    }
    // quadrature error can push an almost-untouched gate just above 1
    (2.0 * sum * h / 3.0 / (sigma_ns * (2.0 * PI).sqrt())).min(1.0)
}

/// Central-peak decomposition per cycle for `cfg` and `gate`.
pub fn central_peak_weights(cfg: &ExperimentConfig, gate: &GateWindow) -> Result<CentralPeakWeights> {
    Ok(analytic_model(cfg, gate)?.central)
}

/// Expected coincidence counts per bin for `cfg.n_cycles` cycles.
///
/// Every pair of photons in a cycle contributes the gated delay shape at
/// its slot offset. The interfering signal pair additionally removes
/// dip·e^{−γ|τ|}·[(1 − f) + f·cos(2πδν τ)] with f the opposite-colour
/// fraction. Pairs from different pulses are blurred by detector and laser
/// jitter, same-pulse pairs by detector jitter only.
pub fn analytic_expectation(cfg: &ExperimentConfig, gate: &GateWindow, range: TauRange, bin_width: f64) -> Result<PredictedHistogram> {
    if !(bin_width > 0.0) {
        return Err(Error::param("bin_width", "must be > 0"));
    }
    let m = analytic_model(cfg, gate)?;
    let ifm = &cfg.interferometer;
    let shape = |u: f64| gated_pair_shape(u, m.decay_rate, gate);
    let cp = &m.central;
    let sum_of = |same: bool| {
        let comps: Vec<&Component> = m.components.iter().filter(|c| c.same_pulse == same).collect();
        move |tau: f64| {
            let mut v: f64 = comps.iter().map(|c| c.weight * shape(tau - c.center)).sum();
            if !same && cp.dip > 0.0 {
                let coh = (-m.gamma * tau.abs()).exp();
                let colour = 1.0 - cp.opposite_fraction + cp.opposite_fraction * (2.0 * PI * m.splitting * tau).cos();
                v -= cp.dip * coh * colour * shape(tau);
            }
            v
        }
    };
    let n_bins = ((range.max - range.min) / bin_width).round() as usize;
    let sd = ifm.sigma_det_ns;
    let sigma_diff = (2.0 * sd * sd + ifm.sigma_arrival_ns.powi(2)).sqrt();
    let diff = binned_profile(sum_of(false), range.min, bin_width, n_bins, sigma_diff);
    let same = binned_profile(sum_of(true), range.min, bin_width, n_bins, SQRT_2 * sd);
    let k = cfg.n_cycles as f64 * bin_width;
    Ok(PredictedHistogram {
        tau_min: range.min,
        bin_width,
        values: diff.iter().zip(&same).map(|(a, b)| (a + b).max(0.0) * k).collect(),
    })
}

/// Histogram binning of a report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportBinning {
    pub range: TauRange,
    pub bin_width: f64,
}

impl ReportBinning {
    /// Five-peak range with the default integration half-width.
    pub fn five_peak(delay_ns: f64, bin_width: f64) -> Self {
        Self {
            range: TauRange::five_peak(delay_ns, DEFAULT_HALFWIDTH_NS),
            bin_width,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeakDivergence {
    /// Peak center in units of δt.
    pub order: i32,
    pub observed: f64,
    pub expected: f64,
    /// χ² per bin over the bins of this peak.
    pub reduced_chi_square: f64,
    pub bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinDivergence {
    pub tau_ns: f64,
    pub observed: f64,
    pub expected: f64,
    /// Pearson residual (o − e)/√e.
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub total_counts: f64,
    pub reduced_chi_square: f64,
    pub dof: usize,
    pub peaks: Vec<PeakDivergence>,
    /// Bins that entered the χ² sum.
    pub bins: Vec<BinDivergence>,
    pub raw_visibility_observed: Estimate,
    pub raw_visibility_expected: f64,
}

fn peak_areas_of<H: BinnedSeries + ?Sized>(h: &H, delay: f64) -> Result<PeakAreas> {
    extract_peak_areas(h, delay, DEFAULT_HALFWIDTH_NS.min(0.499 * delay))
}

/// Pearson χ² between an observed histogram and an expectation scaled to the
/// same total. Bins with expectation below [`MIN_BIN_EXPECTATION`] are
/// skipped.
pub fn divergence_report(observed: &CoincidenceHistogram, expected: &PredictedHistogram, delay_ns: f64) -> Result<DivergenceReport> {
    let obs = observed.values();
    if obs.len() != expected.values.len() {
        return Err(Error::param("expected", "binning differs from the observed histogram"));
    }
    let total_obs: f64 = obs.iter().sum();
    let total_exp: f64 = expected.values.iter().sum();
    if !(total_obs > 0.0 && total_exp > 0.0) {
        return Err(Error::Degenerate("no coincidences to compare".into()));
    }
    let k = total_obs / total_exp;
    let hw = DEFAULT_HALFWIDTH_NS.min(0.499 * delay_ns);
    let mut bins = Vec::new();
    let mut peak_acc = [(0.0, 0.0, 0.0, 0usize); 5];
    for (i, (&o, &e)) in obs.iter().zip(&expected.values).enumerate() {
        let e = e * k;
        let tau = observed.bin_center(i);
        let order = (tau / delay_ns).round();
        let in_peak = order.abs() <= 2.0 && (tau - order * delay_ns).abs() <= hw;
        if in_peak {
            let a = &mut peak_acc[(order + 2.0) as usize];
            a.0 += o;
            a.1 += e;
        }
        if e >= MIN_BIN_EXPECTATION {
            let residual = (o - e) / e.sqrt();
            if in_peak {
                let a = &mut peak_acc[(order + 2.0) as usize];
                a.2 += residual * residual;
                a.3 += 1;
            }
            bins.push(BinDivergence {
                tau_ns: tau,
                observed: o,
                expected: e,
                residual,
            });
        }
    }
    if bins.len() < 2 {
        return Err(Error::Degenerate("fewer than two bins with enough expected counts".into()));
    }
    let chi: f64 = bins.iter().map(|b| b.residual * b.residual).sum();
    let dof = bins.len() - 1;
    let peaks = peak_acc
        .iter()
        .enumerate()
        .map(|(i, &(o, e, c, n))| PeakDivergence {
            order: i as i32 - 2,
            observed: o,
            expected: e,
            reduced_chi_square: if n > 0 { c / n as f64 } else { 0.0 },
            bins: n,
        })
        .collect();
    let raw_visibility_observed = raw_visibility(&peak_areas_of(observed, delay_ns)?)?;
    let raw_visibility_expected = raw_visibility(&peak_areas_of(expected, delay_ns)?)?.value;
    Ok(DivergenceReport {
        total_counts: total_obs,
        reduced_chi_square: chi / dof as f64,
        dof,
        peaks,
        bins,
        raw_visibility_observed,
        raw_visibility_expected,
    })
}

/// Simulates `simulated` and compares it with the analytic expectation for
/// `model`, which may differ from the simulated configuration.
pub fn mc_vs_model_report(
    simulated: &ExperimentConfig,
    model: &ExperimentConfig,
    gate: &GateWindow,
    bins: ReportBinning,
) -> Result<DivergenceReport> {
    simulated.validate()?;
    let st = EmissionStatistics::from_config(simulated);
    if st.signal_pair == 0.0 && st.signal.iter().all(|s| *s == 0.0) && st.noise == 0.0 {
        return Err(Error::Degenerate("configuration emits no photons (p = q = 0)".into()));
    }
    let delay = simulated.interferometer.delay_ns;
    let expected = analytic_expectation(simulated, gate, bins.range, bins.bin_width)?;
    let areas = peak_areas_of(&expected, delay)?;
    let weakest = areas.minus2.min(areas.plus2);
    if weakest < MIN_PEAK_COUNTS {
        let per_cycle = weakest / simulated.n_cycles as f64;
        let required_cycles = if per_cycle > 0.0 {
            (MIN_PEAK_COUNTS / per_cycle).ceil() as u64
        } else {
            u64::MAX
        };
        return Err(Error::Undersampled {
            expected: weakest,
            needed: MIN_PEAK_COUNTS,
            required_cycles,
        });
    }
    let tags = simulate_timetags(simulated)?;
    let hist = build_coincidence_histogram(&tags, gate, bins.range, bins.bin_width, 1)?;
    let model_cfg = ExperimentConfig {
        n_cycles: simulated.n_cycles,
        ..model.clone()
    };
    let model_expected = analytic_expectation(&model_cfg, gate, bins.range, bins.bin_width)?;
    divergence_report(&hist, &model_expected, delay)
}

/// Monte Carlo run of `cfg` against its own analytic expectation.
pub fn mc_vs_analytic_report(cfg: &ExperimentConfig, gate: &GateWindow, bins: ReportBinning) -> Result<DivergenceReport> {
    mc_vs_model_report(cfg, cfg, gate, bins)
}
