//! Non-RWA dynamics of the spin-3/2 ground-state quartet under a pulsed RF
//! drive, phase-averaged subspace populations and pulse calibration.
//!
//! Basis order is {|+3/2⟩, |+1/2⟩, |−1/2⟩, |−3/2⟩}; all frequencies in
//! rad/ns except the RF frequency, which is in GHz.

use std::f64::consts::PI;

use nalgebra::{Complex, Matrix4, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::mhz_to_rate;

type C = Complex<f64>;
pub type CMatrix4 = Matrix4<C>;

const M_VALUES: [f64; 4] = [1.5, 0.5, -0.5, -1.5];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpinParams {
    /// Zero-field-splitting parameter D [rad/ns].
    pub zfs: f64,
    /// Gyromagnetic ratio γ_e [rad/(ns·mT)].
    pub gyro: f64,
    /// Static field B_z [mT].
    pub field_mt: f64,
    /// Drive amplitude Ω [rad/ns].
    pub rabi: f64,
    /// RF frequency f [GHz].
    pub rf_frequency_ghz: f64,
    /// Integration step [ns].
    pub dt_ns: f64,
    pub n_phase: usize,
}

impl SpinParams {
    /// D = 2π·2.25 MHz, γ_e = 2π·28 MHz/mT, B_z = 0.919 mT,
    /// Ω = 2π·14.4 MHz, f = 30.26911 MHz.
    pub fn reference() -> Self {
        Self {
            zfs: mhz_to_rate(2.25),
            gyro: mhz_to_rate(28.0),
            field_mt: 0.919,
            rabi: mhz_to_rate(14.4),
            rf_frequency_ghz: 0.030_269_11,
            dt_ns: 0.1,
            n_phase: 32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("spin.zfs", self.zfs), ("spin.gyro", self.gyro), ("spin.field_mt", self.field_mt)] {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
        }
        if !(self.rabi >= 0.0 && self.rabi.is_finite()) {
            return Err(Error::param("spin.rabi", format!("must be >= 0, got {}", self.rabi)));
        }
        if !(self.rf_frequency_ghz >= 0.0 && self.rf_frequency_ghz.is_finite()) {
            return Err(Error::param("spin.rf_frequency_ghz", "must be >= 0"));
        }
        let dt_max = if self.rf_frequency_ghz > 0.0 {
            0.5f64.min(1.0 / (20.0 * self.rf_frequency_ghz))
        } else {
            0.5
        };
        if !(self.dt_ns > 0.0 && self.dt_ns <= dt_max) {
            return Err(Error::param("spin.dt_ns", format!("must lie in (0, {dt_max}], got {}", self.dt_ns)));
        }
        if self.n_phase == 0 {
            return Err(Error::param("spin.n_phase", "must be >= 1"));
        }
        Ok(())
    }

    /// 2D + γ_e·B_z, the |+3/2⟩↔|+1/2⟩ splitting [rad/ns].
    pub fn transition_rate(&self) -> f64 {
        2.0 * self.zfs + self.gyro * self.field_mt
    }

    /// Transition frequency in GHz.
    pub fn transition_frequency_ghz(&self) -> f64 {
        self.transition_rate() / (2.0 * PI)
    }
}

/// Real S_z and S_x for spin 3/2.
pub fn spin_operators() -> (Matrix4<f64>, Matrix4<f64>) {
    let sz = Matrix4::from_diagonal(&Vector4::from(M_VALUES));
    let mut sx = Matrix4::zeros();
    // ⟨m+1|S₊|m⟩ = √(s(s+1) − m(m+1)), S_x = (S₊ + S₋)/2
    for i in 0..3 {
        let m = M_VALUES[i + 1];
        let e = (3.75 - m * (m + 1.0)).sqrt() / 2.0;
        sx[(i, i + 1)] = e;
        sx[(i + 1, i)] = e;
    }
    (sz, sx)
}

/// H₀ = D·S_z² + γ_e·B_z·S_z [rad/ns].
pub fn build_static_hamiltonian(sp: &SpinParams) -> Matrix4<f64> {
    let diag = M_VALUES.map(|m| sp.zfs * m * m + sp.gyro * sp.field_mt * m);
    Matrix4::from_diagonal(&Vector4::from(diag))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityMatrix4(CMatrix4);

impl DensityMatrix4 {
    const TOL: f64 = 1e-10;

    pub fn new(m: CMatrix4) -> Result<Self> {
        let rho = Self(m);
        rho.validate()?;
        Ok(rho)
    }

    /// Equal mixture of the two states of one Kramers pair; `three_half`
    /// selects ±3/2 instead of ±1/2.
    pub fn subspace(three_half: bool) -> Self {
        let idx = if three_half { [0, 3] } else { [1, 2] };
        let mut m = CMatrix4::zeros();
        for i in idx {
            m[(i, i)] = C::new(0.5, 0.0);
        }
        Self(m)
    }

    pub fn matrix(&self) -> &CMatrix4 {
        &self.0
    }

    pub fn trace(&self) -> C {
        self.0.trace()
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_modulus(&(self.0 - self.0.adjoint()))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (self.0 + self.0.adjoint()).scale(0.5);
        h.symmetric_eigenvalues().iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if self.hermiticity_error() > Self::TOL {
            return Err(Error::param("rho0", "density matrix is not Hermitian"));
        }
        let tr = self.trace();
        if (tr.re - 1.0).abs() > Self::TOL || tr.im.abs() > Self::TOL {
            return Err(Error::param("rho0", format!("trace must be 1, got {tr}")));
        }
        if self.min_eigenvalue() < -Self::TOL {
            return Err(Error::param("rho0", "density matrix has a negative eigenvalue"));
        }
        Ok(())
    }

    /// Diagonal populations in basis order.
    pub fn populations(&self) -> [f64; 4] {
        [0, 1, 2, 3].map(|i| self.0[(i, i)].re)
    }

    pub fn subspace_populations(&self) -> SubspacePopulations {
        let p = self.populations();
        SubspacePopulations {
            half: p[1] + p[2],
            three_half: p[0] + p[3],
        }
    }

    fn evolve(&self, u: &CMatrix4) -> Self {
        Self(u * self.0 * u.adjoint())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubspacePopulations {
    /// p_{±1/2}
    pub half: f64,
    /// p_{±3/2}
    pub three_half: f64,
}

/// Largest entry modulus.
pub fn max_modulus(m: &CMatrix4) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// exp(−iHh) for real symmetric H by eigendecomposition.
fn step_propagator(h: &Matrix4<f64>, step: f64) -> CMatrix4 {
    let eig = h.symmetric_eigen();
    let v = eig.eigenvectors;
    let phases = eig.eigenvalues.map(|l| C::from_polar(1.0, -l * step));
    let mut u = CMatrix4::zeros();
    for a in 0..4 {
        for b in 0..4 {
            let mut s = C::new(0.0, 0.0);
            for k in 0..4 {
                s += phases[k] * (v[(a, k)] * v[(b, k)]);
            }
            u[(a, b)] = s;
        }
    }
    u
}

struct Stepper {
    h0: Matrix4<f64>,
    sx: Matrix4<f64>,
    rabi: f64,
    omega_rf: f64,
    phase: f64,
}

impl Stepper {
    fn new(sp: &SpinParams, phase: f64) -> Self {
        Self {
            h0: build_static_hamiltonian(sp),
            sx: spin_operators().1,
            rabi: sp.rabi,
            omega_rf: 2.0 * PI * sp.rf_frequency_ghz,
            phase,
        }
    }

    /// Propagator over [t, t + h] with the Hamiltonian frozen at the midpoint.
    fn step(&self, t: f64, h: f64) -> CMatrix4 {
        let drive = self.rabi * (self.omega_rf * (t + 0.5 * h) + self.phase).cos();
        step_propagator(&(self.h0 + self.sx * drive), h)
    }
}

/// Propagators U(d) for sorted durations, sharing the dt grid from t = 0 so
/// each U(d) is identical to a standalone propagation to d.
fn propagators_sorted(sp: &SpinParams, phase: f64, durations: &[f64]) -> Vec<CMatrix4> {
    let st = Stepper::new(sp, phase);
    let dt = sp.dt_ns;
    let mut out = Vec::with_capacity(durations.len());
    let mut u_grid = CMatrix4::identity();
    let mut k = 0usize;
    for &d in durations {
        let n_full = (d / dt).floor() as usize;
        while k < n_full {
            u_grid = st.step(k as f64 * dt, dt) * u_grid;
            k += 1;
        }
        let t_grid = n_full as f64 * dt;
        let rem = d - t_grid;
        if rem > 1e-12 {
            out.push(st.step(t_grid, rem) * u_grid);
        } else {
            out.push(u_grid);
        }
    }
    out
}

/// Unitary evolution operator for a pulse of `duration` at drive phase φ.
pub fn evolution_operator(sp: &SpinParams, duration_ns: f64, phase: f64) -> Result<CMatrix4> {
    sp.validate()?;
    if !(duration_ns >= 0.0) {
        return Err(Error::param("pulse_duration", "must be >= 0"));
    }
    Ok(propagators_sorted(sp, phase, &[duration_ns])[0])
}

/// ρ(t) = U ρ₀ U† under H₀ + Ω cos(2πf t + φ) S_x.
pub fn propagate(rho0: &DensityMatrix4, sp: &SpinParams, duration_ns: f64, phase: f64) -> Result<DensityMatrix4> {
    rho0.validate()?;
    if duration_ns == 0.0 {
        return Ok(*rho0);
    }
    let u = evolution_operator(sp, duration_ns, phase)?;
    Ok(rho0.evolve(&u))
}

fn check_durations(durations: &[f64]) -> Result<()> {
    if let Some(d) = durations.iter().find(|d| !(**d >= 0.0 && d.is_finite())) {
        return Err(Error::param("durations", format!("must be finite and >= 0, got {d}")));
    }
    Ok(())
}

/// Subspace populations averaged over φ_k = 2πk/n_phase, one entry per
/// requested duration (in input order).
pub fn phase_averaged_populations(
    rho0: &DensityMatrix4,
    sp: &SpinParams,
    durations: &[f64],
) -> Result<Vec<SubspacePopulations>> {
    rho0.validate()?;
    sp.validate()?;
    check_durations(durations)?;
    let mut order: Vec<usize> = (0..durations.len()).collect();
    order.sort_by(|&a, &b| durations[a].total_cmp(&durations[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| durations[i]).collect();

    let n = sp.n_phase;
    let per_phase: Vec<Vec<SubspacePopulations>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let phase = 2.0 * PI * k as f64 / n as f64;
            propagators_sorted(sp, phase, &sorted)
                .iter()
                .zip(&sorted)
                .map(|(u, &d)| {
                    if d == 0.0 {
                        rho0.subspace_populations()
                    } else {
                        rho0.evolve(u).subspace_populations()
                    }
                })
                .collect()
        })
        .collect();

    // fixed summation order over phases
    let mut acc = vec![SubspacePopulations { half: 0.0, three_half: 0.0 }; sorted.len()];
    for row in &per_phase {
        for (a, p) in acc.iter_mut().zip(row) {
            a.half += p.half;
            a.three_half += p.three_half;
        }
    }
    let mut out = vec![SubspacePopulations { half: 0.0, three_half: 0.0 }; durations.len()];
    for (j, &i) in order.iter().enumerate() {
        out[i] = SubspacePopulations {
            half: acc[j].half / n as f64,
            three_half: acc[j].three_half / n as f64,
        };
    }
    Ok(out)
}

/// Phase-averaged population transferred out of the initial subspace.
pub fn flipped_population(sp: &SpinParams, durations: &[f64], from_three_half: bool) -> Result<Vec<f64>> {
    let rho0 = DensityMatrix4::subspace(from_three_half);
    let pops = phase_averaged_populations(&rho0, sp, durations)?;
    Ok(pops
        .iter()
        .map(|p| if from_three_half { p.half } else { p.three_half })
        .collect())
}

/// Scan resolution and range used to locate the first flip maximum.
const CAL_SCAN_STEP_NS: f64 = 0.25;
const CAL_SCAN_MAX_NS: f64 = 400.0;

/// Shortest pulse whose phase-averaged flip from ±1/2 equals `target_flip`.
///
/// The flip curve is scanned up to its first local maximum; the root is then
/// bisected on that rising segment.
pub fn calibrate_pulse(sp: &SpinParams, target_flip: f64) -> Result<f64> {
    sp.validate()?;
    if !(target_flip >= 0.0) {
        return Err(Error::param("target_flip", "must be >= 0"));
    }
    if target_flip == 0.0 {
        return Ok(0.0);
    }
    let n = (CAL_SCAN_MAX_NS / CAL_SCAN_STEP_NS) as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * CAL_SCAN_STEP_NS).collect();
    let flips = flipped_population(sp, &grid, false)?;
    let mut peak = flips.len() - 1;
    for i in 1..flips.len() - 1 {
        if flips[i] >= flips[i - 1] && flips[i] > flips[i + 1] {
            peak = i;
            break;
        }
    }
    let max_flip = flips[peak];
    if target_flip >= max_flip {
        return Err(Error::UnreachableFlip { target: target_flip, max_flip });
    }
    let hi_idx = flips[..=peak].iter().position(|&f| f >= target_flip).unwrap();
    let (mut lo, mut hi) = (grid[hi_idx - 1], grid[hi_idx]);
    let flip_at = |t: f64| flipped_population(sp, &[t], false).map(|v| v[0]);
    while hi - lo > 1e-6 {
        let mid = 0.5 * (lo + hi);
        if flip_at(mid)? < target_flip {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unitarity_error(u: &CMatrix4) -> f64 {
        max_modulus(&(u.adjoint() * u - CMatrix4::identity()))
    }

    #[test]
    fn static_hamiltonian() {
        let mut sp = SpinParams::reference();
        sp.zfs = 0.0;
        sp.field_mt = 0.0;
        assert_eq!(build_static_hamiltonian(&sp), Matrix4::zeros());
        let mut sp = SpinParams::reference();
        sp.field_mt = 0.0;
        let h = build_static_hamiltonian(&sp);
        assert_eq!(h[(0, 0)], h[(3, 3)]);
        assert_eq!(h[(1, 1)], h[(2, 2)]);
        let zfs_mhz = (h[(0, 0)] - h[(1, 1)]) / (2.0 * PI) * 1e3;
        assert!((zfs_mhz - 4.5).abs() < 1e-12);
        let f = SpinParams::reference().transition_frequency_ghz();
        assert!((f * 1e3 - 30.232).abs() < 1e-3);
        assert!(((f - 0.030_269_11) / 0.030_269_11).abs() < 2e-3);
    }

    #[test]
    fn spin_algebra() {
        let (sz, sx) = spin_operators();
        // S_x² + S_y² + S_z² = 15/4 with S_y from the commutator
        let sy_sq_trace = 3.75 * 4.0 - (sx * sx).trace() - (sz * sz).trace();
        assert!((sy_sq_trace - (sx * sx).trace()).abs() < 1e-12);
        assert!(((sx * sx).trace() - 5.0).abs() < 1e-12);
        assert!((sx[(0, 1)] - 3f64.sqrt() / 2.0).abs() < 1e-15);
        assert!((sx[(1, 2)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn trivial_propagation() {
        let rho = DensityMatrix4::subspace(false);
        let sp = SpinParams::reference();
        assert_eq!(propagate(&rho, &sp, 0.0, 0.3).unwrap(), rho);
        let mut off = sp;
        off.rabi = 0.0;
        let r = propagate(&rho, &off, 37.3, 1.1).unwrap();
        for (a, b) in r.populations().iter().zip(rho.populations()) {
            assert!((a - b).abs() < 1e-12);
        }
        let bad = DensityMatrix4(CMatrix4::identity());
        assert!(propagate(&bad, &sp, 1.0, 0.0).is_err());
    }

    #[test]
    fn unitarity_and_invariants() {
        let sp = SpinParams::reference();
        for (d, phi) in [(0.05, 0.0), (19.0, 0.7), (60.0, 2.0), (123.45, 5.5)] {
            let u = evolution_operator(&sp, d, phi).unwrap();
            assert!(unitarity_error(&u) < 1e-8, "{d}");
        }
        let mut rho = DensityMatrix4::subspace(true);
        for i in 0..100 {
            rho = propagate(&rho, &sp, 19.0, 0.1 * i as f64).unwrap();
        }
        assert!(rho.hermiticity_error() < 1e-9);
        assert!((rho.trace().re - 1.0).abs() < 1e-9);
        assert!(rho.min_eigenvalue() > -1e-9);
    }

    #[test]
    fn populations_sum_and_zero_duration() {
        let sp = SpinParams::reference();
        let rho = DensityMatrix4::subspace(false);
        let durs = [30.0, 0.0, 7.3, 19.0, 19.0];
        let p = phase_averaged_populations(&rho, &sp, &durs).unwrap();
        assert_eq!(p[1], SubspacePopulations { half: 1.0, three_half: 0.0 });
        assert_eq!(p[3], p[4]);
        for q in &p {
            assert!((q.half + q.three_half - 1.0).abs() < 1e-9);
        }
        // order-independence: each duration equals its standalone propagation
        let single = phase_averaged_populations(&rho, &sp, &[7.3]).unwrap();
        assert_eq!(single[0], p[2]);
    }

    #[test]
    fn flip_at_pulse_table_times() {
        let sp = SpinParams::reference();
        let p = flipped_population(&sp, &[19.0], false).unwrap()[0];
        assert!((p - 0.39).abs() < 0.10, "{p}");
        let q = flipped_population(&sp, &[19.0], true).unwrap()[0];
        assert!((p - q).abs() < 0.05, "{p} vs {q}");
    }

    #[test]
    fn fine_step_oracle() {
        let sp = SpinParams::reference();
        let mut fine = sp;
        fine.dt_ns = 0.01;
        let grid: Vec<f64> = (0..=60).map(|i| i as f64).collect();
        let a = flipped_population(&sp, &grid, false).unwrap();
        let b = flipped_population(&fine, &grid, false).unwrap();
        let dev = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        assert!(dev < 0.01, "{dev}");
    }

    #[test]
    fn step_and_phase_convergence() {
        let sp = SpinParams::reference();
        let grid: Vec<f64> = (0..=12).map(|i| 5.0 * i as f64).collect();
        let base = flipped_population(&sp, &grid, false).unwrap();
        let mut half = sp;
        half.dt_ns = 0.05;
        let mut dbl = sp;
        dbl.n_phase = 64;
        for (other, tol) in [(half, 1e-3), (dbl, 5e-3)] {
            let o = flipped_population(&other, &grid, false).unwrap();
            let dev = base.iter().zip(&o).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            assert!(dev < tol, "{dev}");
        }
    }

    #[test]
    fn resonance_matches_level_splitting() {
        let mut sp = SpinParams::reference();
        sp.rabi = mhz_to_rate(0.5);
        sp.dt_ns = 0.5;
        sp.n_phase = 8;
        let f0 = sp.transition_frequency_ghz();
        let mut best = (0.0, f64::NEG_INFINITY);
        for i in -40..=40 {
            let f = f0 + i as f64 * 5e-5;
            sp.rf_frequency_ghz = f;
            let p = flipped_population(&sp, &[300.0], false).unwrap()[0];
            if p > best.1 {
                best = (f, p);
            }
        }
        assert!((best.0 - f0).abs() < 5e-4, "{} vs {}", best.0, f0);
    }

    #[test]
    fn calibration() {
        let sp = SpinParams::reference();
        assert_eq!(calibrate_pulse(&sp, 0.0).unwrap(), 0.0);
        let t_small = calibrate_pulse(&sp, 1e-4).unwrap();
        assert!(t_small < 0.5, "{t_small}");
        let t = calibrate_pulse(&sp, 0.39).unwrap();
        assert!((t - 19.0).abs() < 3.0, "{t}");
        let p = flipped_population(&sp, &[t], false).unwrap()[0];
        assert!((p - 0.39).abs() < 1e-6);
        // scan oracle for the first maximum
        let grid: Vec<f64> = (0..=800).map(|i| i as f64 * 0.1).collect();
        let f = flipped_population(&sp, &grid, false).unwrap();
        let i = (1..f.len() - 1).find(|&i| f[i] >= f[i - 1] && f[i] > f[i + 1]).unwrap();
        let t_pi = calibrate_pulse(&sp, f[i] - 1e-3).unwrap();
        assert!((t_pi / (2.0 * t) - 1.0).abs() < 0.2, "{t_pi} vs {t}");
        match calibrate_pulse(&sp, 0.99) {
            Err(Error::UnreachableFlip { max_flip, .. }) => assert!((max_flip - f[i]).abs() < 0.02),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn validation() {
        let mut sp = SpinParams::reference();
        sp.dt_ns = 0.6;
        assert!(sp.validate().is_err());
        sp.dt_ns = 0.1;
        sp.n_phase = 0;
        assert!(sp.validate().is_err());
        sp.n_phase = 1;
        sp.rabi = -1.0;
        assert!(sp.validate().is_err());
    }
}
