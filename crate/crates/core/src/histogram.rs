//! Coincidence histograms with software time gating.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::GateWindow;
use crate::timetags::{Channel, TimeTagStream};

/// Read access to a uniformly binned τ axis. Implemented by measured
/// histograms and by analytic predictions so the peak analysis can run on
/// either.
pub trait BinnedSeries {
    fn tau_min(&self) -> f64;
    fn bin_width(&self) -> f64;
    /// Per-bin values after any smoothing.
    fn values(&self) -> Vec<f64>;

    fn bin_center(&self, i: usize) -> f64 {
        self.tau_min() + (i as f64 + 0.5) * self.bin_width()
    }

    /// Upper edge of the last bin.
    fn tau_end(&self) -> f64 {
        self.tau_min() + self.values().len() as f64 * self.bin_width()
    }
}

/// τ = t(D₂) − t(D₁) range covered by a histogram [ns].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TauRange {
    pub min: f64,
    pub max: f64,
}

impl TauRange {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(max > min) || !min.is_finite() || !max.is_finite() {
            return Err(Error::param("tau_range", format!("need min < max, got [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    /// Symmetric range wide enough for all five peaks at delay δt.
    pub fn five_peak(delay_ns: f64, halfwidth_ns: f64) -> Self {
        let m = 2.0 * delay_ns + halfwidth_ns;
        Self { min: -m, max: m }
    }
}

/// Binned D₁×D₂ time differences.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceHistogram {
    pub tau_min: f64,
    pub tau_max: f64,
    pub bin_width: f64,
    pub counts: Vec<u64>,
    /// Centered moving-average order; 1 means no smoothing.
    pub smoothing: usize,
}

fn validate_geometry(range: &TauRange, bin_width: f64, smoothing: usize) -> Result<usize> {
    if !(bin_width > 0.0) || !bin_width.is_finite() {
        return Err(Error::param("bin_width", format!("must be > 0, got {bin_width}")));
    }
    if smoothing == 0 || smoothing.is_multiple_of(2) {
        return Err(Error::param("smoothing", format!("must be a positive odd integer, got {smoothing}")));
    }
    let n = ((range.max - range.min) / bin_width).round();
    if n < 1.0 {
        return Err(Error::param("bin_width", "wider than the τ range"));
    }
    Ok(n as usize)
}

impl CoincidenceHistogram {
    /// Empty histogram over `range`.
    pub fn empty(range: TauRange, bin_width: f64, smoothing: usize) -> Result<Self> {
        let n = validate_geometry(&range, bin_width, smoothing)?;
        Ok(Self {
            tau_min: range.min,
            tau_max: range.max,
            bin_width,
            counts: vec![0; n],
            smoothing,
        })
    }

    pub fn n_bins(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Index of the bin containing τ, or `None` outside [τ_min, τ_max].
    pub fn bin_index(&self, tau: f64) -> Option<usize> {
        if tau < self.tau_min || tau > self.tau_max {
            return None;
        }
        // tiny offset so that τ exactly on an edge lands in the upper bin
        let x = ((tau - self.tau_min) / self.bin_width + 1e-9).floor();
        let i = x as usize;
        Some(i.min(self.counts.len() - 1))
    }

    /// Bin-wise addition of a histogram with identical geometry.
    pub fn merge(&mut self, other: &CoincidenceHistogram) -> Result<()> {
        if self.counts.len() != other.counts.len()
            || self.tau_min != other.tau_min
            || self.bin_width != other.bin_width
        {
            return Err(Error::param("histogram", "cannot merge histograms with different binning"));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }

    /// Same counts with a different smoothing order.
    pub fn with_smoothing(mut self, smoothing: usize) -> Result<Self> {
        validate_geometry(
            &TauRange { min: self.tau_min, max: self.tau_max },
            self.bin_width,
            smoothing,
        )?;
        self.smoothing = smoothing;
        Ok(self)
    }
}

impl BinnedSeries for CoincidenceHistogram {
    fn tau_min(&self) -> f64 {
        self.tau_min
    }
    fn bin_width(&self) -> f64 {
        self.bin_width
    }
    fn values(&self) -> Vec<f64> {
        let raw: Vec<f64> = self.counts.iter().map(|&c| c as f64).collect();
        moving_average(&raw, self.smoothing)
    }
}

/// Real-valued binned series, used for analytic expectations.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictedHistogram {
    pub tau_min: f64,
    pub bin_width: f64,
    pub values: Vec<f64>,
}

impl BinnedSeries for PredictedHistogram {
    fn tau_min(&self) -> f64 {
        self.tau_min
    }
    fn bin_width(&self) -> f64 {
        self.bin_width
    }
    fn values(&self) -> Vec<f64> {
        self.values.clone()
    }
}

/// Centered moving average of odd `order`. At the edges the window is
/// truncated; the result is rescaled so its sum equals the input sum.
pub fn moving_average(values: &[f64], order: usize) -> Vec<f64> {
    if order <= 1 || values.is_empty() {
        return values.to_vec();
    }
    let half = order / 2;
    let n = values.len();
    let mut out: Vec<f64> = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(n - 1);
            values[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let before: f64 = values.iter().sum();
    let after: f64 = out.iter().sum();
    if after > 0.0 {
        let s = before / after;
        out.iter_mut().for_each(|v| *v *= s);
    }
    out
}

/// Detector clicks that pass the gate, split by detector, in ps.
fn gated_clicks(tags: &TimeTagStream, gate: &GateWindow) -> Result<(Vec<i64>, Vec<i64>)> {
    tags.validate()?;
    let mut last_sync: Option<i64> = None;
    let mut d1 = Vec::new();
    let mut d2 = Vec::new();
    let mut saw_sync = false;
    for r in &tags.records {
        match r.channel {
            Channel::Sync => {
                last_sync = Some(r.time_ps);
                saw_sync = true;
            }
            ch => {
                // clicks before the first sync cannot be referenced
                let Some(s) = last_sync else { continue };
                let rel = (r.time_ps - s) as f64 * 1e-3;
                if gate.contains(rel) {
                    if ch == Channel::D1 {
                        d1.push(r.time_ps);
                    } else {
                        d2.push(r.time_ps);
                    }
                }
            }
        }
    }
    if !saw_sync {
        return Err(Error::NoSync);
    }
    Ok((d1, d2))
}

/// Drops detector clicks outside `gate`; sync markers are kept.
pub fn gate_stream(tags: &TimeTagStream, gate: &GateWindow) -> Result<TimeTagStream> {
    tags.validate()?;
    if tags.count(Channel::Sync) == 0 {
        return Err(Error::NoSync);
    }
    let mut last_sync: Option<i64> = None;
    let mut out = Vec::with_capacity(tags.len());
    for r in &tags.records {
        match r.channel {
            Channel::Sync => {
                last_sync = Some(r.time_ps);
                out.push(*r);
            }
            _ => {
                if let Some(s) = last_sync {
                    if gate.contains((r.time_ps - s) as f64 * 1e-3) {
                        out.push(*r);
                    }
                }
            }
        }
    }
    Ok(TimeTagStream { records: out })
}

/// Histogram of τ = t₂ − t₁ over all gated D₁×D₂ pairs with τ in `range`.
pub fn build_coincidence_histogram(
    tags: &TimeTagStream,
    gate: &GateWindow,
    range: TauRange,
    bin_width: f64,
    smoothing: usize,
) -> Result<CoincidenceHistogram> {
    let mut hist = CoincidenceHistogram::empty(range, bin_width, smoothing)?;
    let (d1, d2) = gated_clicks(tags, gate)?;
    if d1.is_empty() || d2.is_empty() {
        return Ok(hist);
    }
    let template = hist.clone();
    let partials: Vec<Vec<u64>> = d1
        .par_chunks(1 << 15)
        .map(|chunk| {
            let mut counts = vec![0u64; template.counts.len()];
            let first = chunk[0];
            // skip D₂ clicks that are too early for the first D₁ of the chunk
            let mut lo = d2.partition_point(|&t2| ((t2 - first) as f64) * 1e-3 < range.min);
            for &t1 in chunk {
                while lo < d2.len() && ((d2[lo] - t1) as f64) * 1e-3 < range.min {
                    lo += 1;
                }
                let mut j = lo;
                while j < d2.len() {
                    let tau = (d2[j] - t1) as f64 * 1e-3;
                    if tau > range.max {
                        break;
                    }
                    if let Some(b) = template.bin_index(tau) {
                        counts[b] += 1;
                    }
                    j += 1;
                }
            }
            counts
        })
        .collect();
    for p in partials {
        for (a, b) in hist.counts.iter_mut().zip(p) {
            *a += b;
        }
    }
    Ok(hist)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timetags::TimeTag;
    use proptest::prelude::*;

    fn stream(recs: &[(Channel, i64)]) -> TimeTagStream {
        TimeTagStream::new(recs.iter().map(|&(c, t)| TimeTag::new(c, t)).collect()).unwrap()
    }

    #[test]
    fn single_pair() {
        let s = stream(&[(Channel::Sync, 0), (Channel::D1, 2_000), (Channel::D2, 7_000)]);
        let h = build_coincidence_histogram(
            &s,
            &GateWindow::open(),
            TauRange::new(-125.0, 125.0).unwrap(),
            0.1,
            1,
        )
        .unwrap();
        assert_eq!(h.total(), 1);
        let b = h.counts.iter().position(|&c| c == 1).unwrap();
        let lo = h.tau_min + b as f64 * h.bin_width;
        assert!(lo <= 5.0 && 5.0 < lo + h.bin_width);
    }

    #[test]
    fn gate_rejects_early_click() {
        let s = stream(&[(Channel::Sync, 0), (Channel::D2, 1_000), (Channel::D1, 5_000)]);
        let gate = GateWindow::new(3.5, 20.0).unwrap();
        let h = build_coincidence_histogram(&s, &gate, TauRange::new(-50.0, 50.0).unwrap(), 0.1, 1)
            .unwrap();
        assert_eq!(h.total(), 0);
    }

    #[test]
    fn errors() {
        let no_sync = stream(&[(Channel::D1, 0), (Channel::D2, 10)]);
        let r = TauRange::new(-1.0, 1.0).unwrap();
        assert!(matches!(
            build_coincidence_histogram(&no_sync, &GateWindow::open(), r, 0.1, 1),
            Err(Error::NoSync)
        ));
        let ok = stream(&[(Channel::Sync, 0)]);
        assert!(build_coincidence_histogram(&ok, &GateWindow::open(), r, 0.0, 1).is_err());
        assert!(build_coincidence_histogram(&ok, &GateWindow::open(), r, -0.1, 1).is_err());
        let mut unsorted = stream(&[(Channel::Sync, 0), (Channel::D1, 10)]);
        unsorted.records.push(TimeTag::new(Channel::D2, 5));
        assert!(matches!(
            build_coincidence_histogram(&unsorted, &GateWindow::open(), r, 0.1, 1),
            Err(Error::UnsortedStream { .. })
        ));
    }

    #[test]
    fn bin_count_rounds() {
        let h = CoincidenceHistogram::empty(TauRange::new(-1.0, 1.0).unwrap(), 0.3, 1).unwrap();
        assert_eq!(h.n_bins(), 7);
        let h = CoincidenceHistogram::empty(TauRange::new(-125.0, 125.0).unwrap(), 0.1, 3).unwrap();
        assert_eq!(h.n_bins(), 2500);
    }

    #[test]
    fn moving_average_three_points() {
        let v = [0.0, 3.0, 0.0, 0.0, 6.0];
        let m = moving_average(&v, 3);
        assert!((m.iter().sum::<f64>() - 9.0).abs() < 1e-12);
        // interior bins are plain three-point means up to the global rescale
        let raw_mid = 1.0;
        let scale = m[2] / raw_mid;
        assert!((m[1] / scale - 1.0).abs() < 1e-12);
    }

    fn random_stream(seed: u64, n_cycles: usize) -> TimeTagStream {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut recs = Vec::new();
        for c in 0..n_cycles as i64 {
            let base = c * 100_000;
            recs.push(TimeTag::new(Channel::Sync, base));
            let mut clicks: Vec<TimeTag> = (0..rng.random_range(0..4))
                .map(|_| {
                    let ch = if rng.random_bool(0.5) { Channel::D1 } else { Channel::D2 };
                    TimeTag::new(ch, base + rng.random_range(0..40_000))
                })
                .collect();
            clicks.sort();
            recs.extend(clicks);
        }
        TimeTagStream::new(recs).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn gating_is_idempotent(seed in any::<u64>(), start in 0.0f64..20.0, width in 0.5f64..30.0) {
            let s = random_stream(seed, 200);
            let g = GateWindow::new(start, start + width).unwrap();
            let once = gate_stream(&s, &g).unwrap();
            let twice = gate_stream(&once, &g).unwrap();
            prop_assert_eq!(&once, &twice);
            let r = TauRange::new(-60.0, 60.0).unwrap();
            let h1 = build_coincidence_histogram(&s, &g, r, 0.5, 1).unwrap();
            let h2 = build_coincidence_histogram(&once, &g, r, 0.5, 1).unwrap();
            prop_assert_eq!(h1, h2);
        }

        #[test]
        fn smoothing_preserves_total(seed in any::<u64>(), order in prop::sample::select(vec![1usize, 3, 5, 7])) {
            let s = random_stream(seed, 300);
            let h = build_coincidence_histogram(&s, &GateWindow::open(), TauRange::new(-40.0, 40.0).unwrap(), 0.5, order).unwrap();
            let total: f64 = h.values().iter().sum();
            prop_assert!((total - h.total() as f64).abs() < 1e-9 * (1.0 + total));
        }

        #[test]
        fn segments_merge_to_whole(seed in any::<u64>(), split in 1usize..299) {
            let s = random_stream(seed, 300);
            // cut on a sync marker; no pair spans 100 ns cycles at |τ| <= 40 ns
            let cut = s.records.iter().enumerate().filter(|(_, r)| r.channel == Channel::Sync).nth(split).unwrap().0;
            let a = TimeTagStream::new(s.records[..cut].to_vec()).unwrap();
            let b = TimeTagStream::new(s.records[cut..].to_vec()).unwrap();
            let r = TauRange::new(-40.0, 40.0).unwrap();
            let g = GateWindow::open();
            let whole = build_coincidence_histogram(&s, &g, r, 0.25, 1).unwrap();
            let mut merged = build_coincidence_histogram(&a, &g, r, 0.25, 1).unwrap();
            merged.merge(&build_coincidence_histogram(&b, &g, r, 0.25, 1).unwrap()).unwrap();
            prop_assert_eq!(whole, merged);
        }
    }
}
