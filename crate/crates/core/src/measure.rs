//! Homodyne photocurrent synthesis and spin readout.

use crate::integrate::TrajectoryResult;
use crate::model::PhysParams;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Confidence reported when the noise floor is zero.
pub const CONFIDENCE_CAP: f64 = 1e12;
/// Decisions need an amplitude of at least this many noise-floor units.
pub const DECISION_THRESHOLD: f64 = 3.0;
/// Minimum number of modulation periods in a demodulation window.
pub const MIN_WINDOW_PERIODS: f64 = 5.0;
/// |⟨S_z'⟩| threshold for collapse, as a fraction of ħ/2.
pub const COLLAPSE_FRACTION: f64 = 0.9;
/// Confirmation horizon for collapse, in units of 1/ω_m.
pub const COLLAPSE_HORIZON: f64 = 10.0;

#[derive(Debug, Error)]
pub enum MeasureError {
    #[error("trajectory carries no measurement-channel record")]
    MissingRecord,
    #[error("bin width {bin_width} is shorter than the record spacing {record_dt}")]
    BinTooNarrow { bin_width: f64, record_dt: f64 },
    #[error("window [{t0}, {t1}] spans {periods:.2} periods; at least 5 are needed")]
    WindowTooShort { t0: f64, t1: f64, periods: f64 },
    #[error("window [{t0}, {t1}] contains no bins")]
    EmptyWindow { t0: f64, t1: f64 },
    #[error("input series lengths differ")]
    Length,
}

/// Binned homodyne current `I = β(−(8e_dκE/γ_c)⟨Z⟩ − √(γ_c e_d) dW/dt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhotocurrentRecord {
    pub t_start: f64,
    pub bin_width: f64,
    pub samples: Vec<f64>,
    pub beta: f64,
    /// Signal and noise parts of each sample.
    pub signal: Vec<f64>,
    pub noise: Vec<f64>,
    /// Expected white-noise variance per bin, `β²γ_c e_d / bin_width`.
    pub noise_variance: f64,
}

impl PhotocurrentRecord {
    /// A record from given samples, for synthetic signals.
    pub fn from_samples(
        t_start: f64,
        bin_width: f64,
        samples: Vec<f64>,
        noise_variance: f64,
    ) -> Self {
        let n = samples.len();
        Self {
            t_start,
            bin_width,
            signal: samples.clone(),
            noise: vec![0.0; n],
            samples,
            beta: 1.0,
            noise_variance,
        }
    }

    pub fn bin_center(&self, k: usize) -> f64 {
        self.t_start + (k as f64 + 0.5) * self.bin_width
    }

    pub fn bin_centers(&self) -> Vec<f64> {
        (0..self.samples.len())
            .map(|k| self.bin_center(k))
            .collect()
    }

    /// The same record scaled by `c`.
    pub fn scaled(&self, c: f64) -> Self {
        let s = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
        Self {
            t_start: self.t_start,
            bin_width: self.bin_width,
            samples: s(&self.samples),
            beta: self.beta * c,
            signal: s(&self.signal),
            noise: s(&self.noise),
            noise_variance: self.noise_variance * c * c,
        }
    }
}

/// Photocurrent from a trajectory's ⟨Z⟩ and measurement-channel increments.
pub fn photocurrent(
    traj: &TrajectoryResult,
    params: &PhysParams,
    bin_width: f64,
) -> Result<PhotocurrentRecord, MeasureError> {
    let dw = traj
        .measurement_record()
        .ok_or(MeasureError::MissingRecord)?;
    photocurrent_from_series(&traj.times, &traj.z, dw, traj.record_dt, params, bin_width)
}

/// Photocurrent from recorded `⟨Z⟩(t_k)` and increments `dw[k]` over
/// `(t_{k−1}, t_k]`. Each interval uses ⟨Z⟩ at its start. `bin_width` is
/// rounded to the nearest multiple of `record_dt`; the record stores the
/// width actually used.
pub fn photocurrent_from_series(
    times: &[f64],
    z: &[f64],
    dw: &[f64],
    record_dt: f64,
    params: &PhysParams,
    bin_width: f64,
) -> Result<PhotocurrentRecord, MeasureError> {
    if times.len() != z.len() || z.len() != dw.len() || times.is_empty() {
        return Err(MeasureError::Length);
    }
    if bin_width < record_dt * (1.0 - 1e-9) {
        return Err(MeasureError::BinTooNarrow {
            bin_width,
            record_dt,
        });
    }
    let per_bin = ((bin_width / record_dt).round() as usize).max(1);
    let bw = per_bin as f64 * record_dt;
    let n_intervals = times.len() - 1;
    let n_bins = n_intervals / per_bin;
    let beta = params.beta;
    let gain = -beta * params.e_d * params.signal_multiplier();
    let noise_gain = -beta * (params.gamma_c * params.e_d).sqrt();
    let mut signal = Vec::with_capacity(n_bins);
    let mut noise = Vec::with_capacity(n_bins);
    for b in 0..n_bins {
        let mut zs = 0.0;
        let mut ws = 0.0;
        for j in 1 + b * per_bin..=(b + 1) * per_bin {
            zs += z[j - 1];
            ws += dw[j];
        }
        signal.push(gain * zs / per_bin as f64);
        noise.push(noise_gain * ws / bw);
    }
    let samples = signal.iter().zip(&noise).map(|(s, n)| s + n).collect();
    Ok(PhotocurrentRecord {
        t_start: times[0],
        bin_width: bw,
        samples,
        beta,
        signal,
        noise,
        noise_variance: beta * beta * params.gamma_c * params.e_d / bw,
    })
}

/// Quadratures of a record over a window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quadrature {
    pub x_c: f64,
    pub x_s: f64,
    /// `atan2(−X_s, X_c)`: the record is ≈ `amplitude·cos(ωt + phase)`.
    pub phase: f64,
    pub amplitude: f64,
    /// Standard deviation of each quadrature under the record's white noise.
    pub noise_floor: f64,
    pub n_bins: usize,
    pub window: (f64, f64),
}

/// `X_c = (2/T)∫I cos ωt dt`, `X_s = (2/T)∫I sin ωt dt` over the bins whose
/// centers fall in `window`.
pub fn quadrature_demod(
    record: &PhotocurrentRecord,
    omega: f64,
    window: (f64, f64),
) -> Result<Quadrature, MeasureError> {
    let (t0, t1) = window;
    let periods = (t1 - t0) * omega / (2.0 * PI);
    if !(periods >= MIN_WINDOW_PERIODS * (1.0 - 1e-9)) {
        return Err(MeasureError::WindowTooShort { t0, t1, periods });
    }
    let mut xc = 0.0;
    let mut xs = 0.0;
    let mut n = 0usize;
    for (k, v) in record.samples.iter().enumerate() {
        let t = record.bin_center(k);
        if t < t0 || t > t1 {
            continue;
        }
        let (s, c) = (omega * t).sin_cos();
        xc += v * c;
        xs += v * s;
        n += 1;
    }
    if n == 0 {
        return Err(MeasureError::EmptyWindow { t0, t1 });
    }
    let nf = n as f64;
    xc *= 2.0 / nf;
    xs *= 2.0 / nf;
    Ok(Quadrature {
        x_c: xc,
        x_s: xs,
        phase: (-xs).atan2(xc),
        amplitude: xc.hypot(xs),
        noise_floor: (2.0 * record.noise_variance / nf).sqrt(),
        n_bins: n,
        window,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpinOutcome {
    Up,
    Down,
    /// Amplitude below the decision threshold.
    NoDecision,
}

impl SpinOutcome {
    /// `+1/2`, `−1/2`, or `None`.
    pub fn spin(&self) -> Option<f64> {
        match self {
            SpinOutcome::Up => Some(0.5),
            SpinOutcome::Down => Some(-0.5),
            SpinOutcome::NoDecision => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutDecision {
    pub outcome: SpinOutcome,
    pub phase_estimate: f64,
    pub amplitude: f64,
    /// Amplitude over the quadrature noise floor, capped at `CONFIDENCE_CAP`.
    pub confidence: f64,
    pub window: (f64, f64),
}

/// Sign of the in-phase quadrature relative to `reference_phase`, which is
/// the demodulated phase of a known spin-up record.
pub fn classify_spin(
    record: &PhotocurrentRecord,
    omega_m: f64,
    reference_phase: f64,
    window: (f64, f64),
) -> Result<ReadoutDecision, MeasureError> {
    let q = quadrature_demod(record, omega_m, window)?;
    let confidence = if q.noise_floor > 0.0 {
        (q.amplitude / q.noise_floor).min(CONFIDENCE_CAP)
    } else if q.amplitude > 0.0 {
        CONFIDENCE_CAP
    } else {
        0.0
    };
    let outcome = if confidence < DECISION_THRESHOLD {
        SpinOutcome::NoDecision
    } else if (q.phase - reference_phase).cos() > 0.0 {
        SpinOutcome::Up
    } else {
        SpinOutcome::Down
    };
    Ok(ReadoutDecision {
        outcome,
        phase_estimate: q.phase,
        amplitude: q.amplitude,
        confidence,
        window,
    })
}

/// Default decision window: from the end of the drive ramp plus ten
/// cantilever periods to `t_end`.
pub fn default_window(ramp_end: f64, omega_m: f64, t_end: f64) -> (f64, f64) {
    (ramp_end + 10.0 * 2.0 * PI / omega_m, t_end)
}

/// First recorded time at which |⟨S_z'⟩| exceeds `threshold` and stays
/// above it for `horizon` (or until the record ends).
pub fn collapse_time(times: &[f64], sz: &[f64], threshold: f64, horizon: f64) -> Option<f64> {
    let n = times.len().min(sz.len());
    let mut k = 0;
    while k < n {
        if sz[k].abs() > threshold {
            let t = times[k];
            let mut j = k;
            while j < n && times[j] <= t + horizon && sz[j].abs() > threshold {
                j += 1;
            }
            if j == n || times[j] > t + horizon {
                return Some(t);
            }
            k = j + 1;
        } else {
            k += 1;
        }
    }
    None
}

/// `collapse_time` with threshold 0.45ħ and a 10/ω_m horizon.
pub fn collapse_time_default(traj: &TrajectoryResult, params: &PhysParams) -> Option<f64> {
    collapse_time(
        &traj.times,
        &traj.sz,
        COLLAPSE_FRACTION * 0.5 * params.hbar,
        COLLAPSE_HORIZON / params.omega_m,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};

    fn params() -> PhysParams {
        let mut p = PhysParams::unit_oscillator();
        p.kappa = 0.5;
        p.E_drive = 5.0;
        p.gamma_c = 100.0;
        p.beta = 2.0;
        p.e_d = 0.8;
        p
    }

    fn grid(n: usize, dt: f64) -> Vec<f64> {
        (0..n).map(|k| k as f64 * dt).collect()
    }

    #[test]
    fn noiseless_current_is_the_scaled_position() {
        let p = params();
        let dt = 0.01;
        let t = grid(1001, dt);
        let z: Vec<f64> = t.iter().map(|t| t.sin()).collect();
        let dw = vec![0.0; t.len()];
        let r = photocurrent_from_series(&t, &z, &dw, dt, &p, 0.05).unwrap();
        assert_eq!(r.samples.len(), 200);
        let g = -p.beta * 8.0 * p.e_d * p.kappa * p.E_drive / p.gamma_c;
        for b in 0..r.samples.len() {
            let mean_z = (0..5).map(|j| z[b * 5 + j]).sum::<f64>() / 5.0;
            assert!((r.samples[b] - g * mean_z).abs() < 1e-12);
            assert_eq!(r.samples[b], r.signal[b]);
        }
    }

    #[test]
    fn signal_multiplier_at_reference_coefficients() {
        // κE/γ_c = 237.5 gives 8κE/γ_c = 1900
        let mut p = PhysParams::unit_oscillator();
        p.gamma_c = 9.2092e7;
        p.E_drive = 0.73684 * p.gamma_c;
        p.kappa = 237.5 / 0.73684;
        assert!((p.signal_multiplier() - 1.9e3).abs() < 1e-6 * 1.9e3);
    }

    #[test]
    fn white_noise_variance_per_bin() {
        let mut p = params();
        p.e_d = 1.0;
        let dt: f64 = 0.01;
        let n_bins = 10_000;
        let per = 4;
        let n = n_bins * per + 1;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dw: Vec<f64> = (0..n)
            .map(|k| {
                if k == 0 {
                    0.0
                } else {
                    dt.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng)
                }
            })
            .collect();
        let r = photocurrent_from_series(&grid(n, dt), &vec![0.0; n], &dw, dt, &p, per as f64 * dt)
            .unwrap();
        let m = r.samples.iter().sum::<f64>() / n_bins as f64;
        let var = r.samples.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n_bins - 1) as f64;
        let want = p.beta.powi(2) * p.gamma_c / r.bin_width;
        assert!((var / want - 1.0).abs() < 0.05, "{var} {want}");
        assert!((r.noise_variance - want).abs() < 1e-9 * want);
    }

    #[test]
    fn missing_record_and_narrow_bins_are_rejected() {
        let p = params();
        let t = grid(11, 0.1);
        assert!(matches!(
            photocurrent_from_series(&t, &[0.0; 11], &[0.0; 11], 0.1, &p, 0.05),
            Err(MeasureError::BinTooNarrow { .. })
        ));
    }

    fn cosine(a: f64, omega: f64, phase: f64, bw: f64, n: usize) -> PhotocurrentRecord {
        let s = (0..n)
            .map(|k| a * (omega * (k as f64 + 0.5) * bw + phase).cos())
            .collect();
        PhotocurrentRecord::from_samples(0.0, bw, s, 0.0)
    }

    #[test]
    fn demodulates_a_cosine() {
        let omega = 1.0;
        let bw = 2.0 * PI / 40.0;
        let r = cosine(1.7, omega, 0.0, bw, 400);
        let q = quadrature_demod(&r, omega, (0.0, 20.0 * PI)).unwrap();
        assert!((q.x_c - 1.7).abs() < 1e-10);
        assert!(q.x_s.abs() < 1e-10);
        assert!(q.phase.abs() < 1e-10);
        assert!((q.amplitude - 1.7).abs() < 1e-10);
        let flipped = cosine(1.7, omega, PI, bw, 400);
        let q = quadrature_demod(&flipped, omega, (0.0, 20.0 * PI)).unwrap();
        assert!((q.phase.abs() - PI).abs() < 1e-10);
        assert!(matches!(
            quadrature_demod(&r, omega, (0.0, 4.0 * 2.0 * PI)),
            Err(MeasureError::WindowTooShort { .. })
        ));
    }

    #[test]
    fn white_noise_amplitude_sits_at_the_floor() {
        let bw = 2.0 * PI / 20.0;
        let n = 400;
        let v: f64 = 3.0;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut below = 0;
        let mut mean_sq = 0.0;
        for _ in 0..100 {
            let s = (0..n)
                .map(|_| v.sqrt() * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect();
            let r = PhotocurrentRecord::from_samples(0.0, bw, s, v);
            let q = quadrature_demod(&r, 1.0, (0.0, n as f64 * bw)).unwrap();
            let sigma2 = 2.0 * v / n as f64;
            assert!((q.noise_floor.powi(2) - sigma2).abs() < 1e-12);
            below += (q.amplitude < 3.0 * q.noise_floor) as usize;
            mean_sq += q.amplitude.powi(2) / (2.0 * sigma2) / 100.0;
        }
        // amplitude² / 2σ² is Exp(1): mean 1, P(amp > 3σ) = e^{−4.5}
        assert!(below >= 95, "{below}");
        assert!((mean_sq - 1.0).abs() < 0.3, "{mean_sq}");
    }

    #[test]
    fn classification_follows_the_reference() {
        let omega = 1.0;
        let bw = 2.0 * PI / 40.0;
        let up = cosine(1.0, omega, 0.3, bw, 400);
        let w = (0.0, 20.0 * PI);
        let reference = quadrature_demod(&up, omega, w).unwrap().phase;
        let d = classify_spin(&up, omega, reference, w).unwrap();
        assert_eq!(d.outcome, SpinOutcome::Up);
        assert_eq!(d.confidence, CONFIDENCE_CAP);
        let down = cosine(1.0, omega, 0.3 + PI, bw, 400);
        assert_eq!(
            classify_spin(&down, omega, reference, w).unwrap().outcome,
            SpinOutcome::Down
        );
        let mut weak = cosine(1e-3, omega, 0.3, bw, 400);
        weak.noise_variance = 1.0;
        assert_eq!(
            classify_spin(&weak, omega, reference, w).unwrap().outcome,
            SpinOutcome::NoDecision
        );
    }

    #[test]
    fn collapse_detection() {
        let t = grid(2001, 0.01);
        assert_eq!(collapse_time(&t, &vec![0.5; 2001], 0.45, 10.0), Some(0.0));
        assert_eq!(collapse_time(&t, &vec![0.0; 2001], 0.45, 10.0), None);
        // brief excursion is not confirmed
        let sz: Vec<f64> = t
            .iter()
            .map(|&t| {
                if (2.0..3.0).contains(&t) || t >= 8.0 {
                    -0.49
                } else {
                    0.1
                }
            })
            .collect();
        let c = collapse_time(&t, &sz, 0.45, 5.0).unwrap();
        assert!((c - 8.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn photocurrent_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0, seed in 0u64..1000) {
            let p = params();
            let dt = 0.02;
            let n = 201;
            let t = grid(n, dt);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut draw = || (0..n).map(|_| StandardNormal.sample(&mut rng)).collect::<Vec<f64>>();
            let (z1, w1, z2, w2) = (draw(), draw(), draw(), draw());
            let comb = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| a * u + b * v).collect::<Vec<_>>();
            let r1 = photocurrent_from_series(&t, &z1, &w1, dt, &p, 0.1).unwrap();
            let r2 = photocurrent_from_series(&t, &z2, &w2, dt, &p, 0.1).unwrap();
            let r = photocurrent_from_series(&t, &comb(&z1, &z2), &comb(&w1, &w2), dt, &p, 0.1).unwrap();
            for k in 0..r.samples.len() {
                prop_assert!((r.samples[k] - a * r1.samples[k] - b * r2.samples[k]).abs() < 1e-9 * (1.0 + r.samples[k].abs()));
            }
        }

        #[test]
        fn classification_is_scale_invariant(c in 0.01f64..100.0, phase in -3.0f64..3.0) {
            let bw = 2.0 * PI / 40.0;
            let s: Vec<f64> = (0..400).map(|k| ((k as f64 + 0.5) * bw + phase).cos() + 0.3 * ((k * 7919 % 13) as f64 - 6.0) / 6.0).collect();
            let r = PhotocurrentRecord::from_samples(0.0, bw, s, 0.01);
            let w = (0.0, 20.0 * PI);
            let a = classify_spin(&r, 1.0, 0.2, w).unwrap();
            let b = classify_spin(&r.scaled(c), 1.0, 0.2, w).unwrap();
            prop_assert_eq!(a.outcome, b.outcome);
            prop_assert!((a.phase_estimate - b.phase_estimate).abs() < 1e-9);
            prop_assert!((a.confidence - b.confidence).abs() < 1e-6 * a.confidence.max(1.0));
        }
    }
}
