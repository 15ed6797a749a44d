//! Digital lock-in detection of frame stacks and point waveforms, plus the
//! narrow-band filter used for frequency mapping.
//!
//! Phase convention: a pixel oscillating as `A·sin(ωt + φ)` against a
//! reference `sin(ωt + φ_ref)` reports amplitude `A` (peak, not RMS) and
//! phase `φ − φ_ref`, wrapped to (−π, π].

use std::f64::consts::PI;

use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frames::FrameStack;
use crate::thermal::wrap_phase;

#[derive(Debug, Clone, PartialEq)]
pub struct LockInResult {
    pub amplitude: Array2<f64>,
    pub phase: Array2<f64>,
    /// In-phase component, `A·cos(φ)`.
    pub in_phase: Array2<f64>,
    /// Quadrature component, `A·sin(φ)`.
    pub quadrature: Array2<f64>,
    pub ref_frequency_hz: f64,
    pub n_frames_integrated: usize,
    pub periods_integrated: f64,
}

/// Largest frame count `<= n_frames` spanning a whole number of periods.
pub fn whole_period_frames(n_frames: usize, fps: f64, frequency_hz: f64) -> usize {
    let periods = (n_frames as f64 * frequency_hz / fps + 1e-9).floor();
    ((periods * fps / frequency_hz).round() as usize).min(n_frames)
}

fn check_sampling(n_frames: usize, fps: f64, frequency_hz: f64) -> Result<()> {
    if !(frequency_hz > 0.0) {
        return Err(Error::invalid("reference frequency must be > 0"));
    }
    if !(fps > 2.0 * frequency_hz) {
        return Err(Error::Nyquist {
            rate_hz: fps,
            frequency_hz,
        });
    }
    let periods = n_frames as f64 * frequency_hz / fps;
    if periods < 4.0 - 1e-9 {
        return Err(Error::TooFewPeriods { periods });
    }
    Ok(())
}

/// Running correlation sums; frames can be pushed as they are produced.
#[derive(Debug, Clone)]
pub struct LockInAccumulator {
    shape: (usize, usize),
    omega: f64,
    ref_phase: f64,
    fps: f64,
    t0: f64,
    ref_frequency_hz: f64,
    n_target: usize,
    pushed: usize,
    /// First frame; later frames are integrated relative to it so a static
    /// scene cancels exactly.
    offset: Vec<f64>,
    sum: Vec<f64>,
    sum_sin: Vec<f64>,
    sum_cos: Vec<f64>,
    ref_sin: f64,
    ref_cos: f64,
}

impl LockInAccumulator {
    /// Prepares to integrate the whole-period prefix of an `n_frames` stack.
    pub fn new(
        shape: (usize, usize),
        n_frames: usize,
        fps: f64,
        t0: f64,
        ref_frequency_hz: f64,
        ref_phase_rad: f64,
    ) -> Result<Self> {
        check_sampling(n_frames, fps, ref_frequency_hz)?;
        let len = shape.0 * shape.1;
        Ok(LockInAccumulator {
            shape,
            omega: 2.0 * PI * ref_frequency_hz,
            ref_phase: ref_phase_rad,
            fps,
            t0,
            ref_frequency_hz,
            n_target: whole_period_frames(n_frames, fps, ref_frequency_hz),
            pushed: 0,
            offset: Vec::new(),
            sum: vec![0.0; len],
            sum_sin: vec![0.0; len],
            sum_cos: vec![0.0; len],
            ref_sin: 0.0,
            ref_cos: 0.0,
        })
    }

    /// Frames beyond the whole-period window are ignored.
    pub fn push(&mut self, frame: ArrayView2<'_, f64>) -> Result<()> {
        if frame.dim() != self.shape {
            return Err(Error::DimensionMismatch(format!(
                "frame {:?} does not match {:?}",
                frame.dim(),
                self.shape
            )));
        }
        if self.pushed >= self.n_target {
            self.pushed += 1;
            return Ok(());
        }
        let t = self.t0 + self.pushed as f64 / self.fps;
        let (s, c) = (self.omega * t + self.ref_phase).sin_cos();
        self.ref_sin += s;
        self.ref_cos += c;
        if self.offset.is_empty() {
            self.offset = frame.iter().copied().collect();
        }
        for (i, &v) in frame.iter().enumerate() {
            let v = v - self.offset[i];
            self.sum[i] += v;
            self.sum_sin[i] += v * s;
            self.sum_cos[i] += v * c;
        }
        self.pushed += 1;
        Ok(())
    }

    pub fn finish(self) -> Result<LockInResult> {
        let n = self.pushed.min(self.n_target);
        if n < self.n_target {
            return Err(Error::invalid(format!(
                "{} frames pushed, {} required",
                self.pushed, self.n_target
            )));
        }
        let nf = n as f64;
        let len = self.sum.len();
        let mut in_phase = Vec::with_capacity(len);
        let mut quadrature = Vec::with_capacity(len);
        for i in 0..len {
            let mean = self.sum[i] / nf;
            in_phase.push(2.0 / nf * (self.sum_sin[i] - mean * self.ref_sin));
            quadrature.push(2.0 / nf * (self.sum_cos[i] - mean * self.ref_cos));
        }
        let in_phase = Array2::from_shape_vec(self.shape, in_phase).expect("shape");
        let quadrature = Array2::from_shape_vec(self.shape, quadrature).expect("shape");
        let amplitude = ndarray::Zip::from(&in_phase)
            .and(&quadrature)
            .map_collect(|&i, &q| i.hypot(q));
        let phase = ndarray::Zip::from(&in_phase)
            .and(&quadrature)
            .map_collect(|&i, &q| wrap_phase(q.atan2(i)));
        Ok(LockInResult {
            amplitude,
            phase,
            in_phase,
            quadrature,
            ref_frequency_hz: self.ref_frequency_hz,
            n_frames_integrated: n,
            periods_integrated: nf * self.ref_frequency_hz / self.fps,
        })
    }
}

/// Demodulates every pixel of a frame stack against `sin(ωt + φ_ref)`.
pub fn lockin_demodulate(
    fs: &FrameStack,
    ref_frequency_hz: f64,
    ref_phase_rad: f64,
) -> Result<LockInResult> {
    let mut acc = LockInAccumulator::new(
        (fs.height, fs.width),
        fs.n_frames(),
        fs.fps,
        fs.t0,
        ref_frequency_hz,
        ref_phase_rad,
    )?;
    for k in 0..acc.n_target {
        acc.push(fs.frame(k))?;
    }
    acc.finish()
}

/// Point-mode demodulation of one time series. Returns `(amplitude, phase)`.
pub fn demodulate_series(
    samples: &[f64],
    fps: f64,
    ref_frequency_hz: f64,
    ref_phase_rad: f64,
) -> Result<(f64, f64)> {
    let fs = FrameStack::new(1, 1, fps, 0.0, samples.to_vec())?;
    let r = lockin_demodulate(&fs, ref_frequency_hz, ref_phase_rad)?;
    Ok((r.amplitude[[0, 0]], r.phase[[0, 0]]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandFilterSpec {
    pub center_frequency_hz: f64,
    pub bandwidth_hz: f64,
}

impl BandFilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth_hz > 0.0 && self.bandwidth_hz < self.center_frequency_hz) {
            return Err(Error::invalid(
                "band filter needs 0 < bandwidth_hz < center_frequency_hz",
            ));
        }
        Ok(())
    }
}

const FILTER_STAGES: usize = 3;

/// Amplitude of the signal content inside `band`.
///
/// The series is mixed down by the center frequency and low-passed by three
/// cascaded moving averages of length `fs/(2·bw)` (about −3 dB at `bw/2`,
/// nulls at multiples of `2·bw`); the settled magnitude is then averaged.
pub fn eofm_point_filter(samples: &[f64], fs_hz: f64, band: &BandFilterSpec) -> Result<f64> {
    band.validate()?;
    let top = band.center_frequency_hz + band.bandwidth_hz / 2.0;
    if !(fs_hz > 2.0 * top) {
        return Err(Error::Nyquist {
            rate_hz: fs_hz,
            frequency_hz: top,
        });
    }
    let len = ((fs_hz / (2.0 * band.bandwidth_hz)).round() as usize).max(1);
    let settle = FILTER_STAGES * (len - 1);
    if samples.len() <= settle {
        return Err(Error::invalid(format!(
            "{} samples cannot settle a {}-tap filter",
            samples.len(),
            len
        )));
    }
    let omega = 2.0 * PI * band.center_frequency_hz / fs_hz;
    let mut z: Vec<Complex64> = samples
        .iter()
        .enumerate()
        .map(|(k, &x)| Complex64::from_polar(x, -omega * k as f64))
        .collect();
    for _ in 0..FILTER_STAGES {
        z = moving_average(&z, len);
    }
    let settled = &z[settle..];
    Ok(2.0 * settled.iter().map(|v| v.norm()).sum::<f64>() / settled.len() as f64)
}

/// Causal moving average; the first `len - 1` outputs use a zero history.
fn moving_average(x: &[Complex64], len: usize) -> Vec<Complex64> {
    let mut acc = Complex64::new(0.0, 0.0);
    let scale = 1.0 / len as f64;
    x.iter()
        .enumerate()
        .map(|(k, &v)| {
            acc += v;
            if k >= len {
                acc -= x[k - len];
            }
            acc * scale
        })
        .collect()
}

/// Predicted amplitude-noise improvement from integrating `n_frames_b`
/// instead of `n_frames_a` frames.
pub fn snr_gain(n_frames_a: usize, n_frames_b: usize) -> Result<f64> {
    if n_frames_a == 0 || n_frames_b == 0 {
        return Err(Error::invalid("frame counts must be >= 1"));
    }
    Ok((n_frames_b as f64 / n_frames_a as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tone(n: usize, fps: f64, f: f64, amp: f64, phase: f64, offset: f64) -> Vec<f64> {
        (0..n)
            .map(|k| amp * (2.0 * PI * f * k as f64 / fps + phase).sin() + offset)
            .collect()
    }

    #[test]
    fn recovers_sine_exactly() {
        let (a, ph) = demodulate_series(&tone(1000, 200.0, 50.0, 3.7, 0.6, 12.0), 200.0, 50.0, 0.0).unwrap();
        assert!((a / 3.7 - 1.0).abs() < 1e-9);
        assert!((ph - 0.6).abs() < 1e-9);
    }

    #[test]
    fn constant_series_has_zero_amplitude() {
        let (a, _) = demodulate_series(&[5.0; 400], 100.0, 10.0, 0.0).unwrap();
        assert!(a.abs() < 1e-12);
    }

    #[test]
    fn trailing_partial_period_dropped() {
        let r = lockin_demodulate(
            &FrameStack::new(1, 1, 100.0, 0.0, tone(437, 100.0, 10.0, 1.0, 0.0, 0.0)).unwrap(),
            10.0,
            0.0,
        )
        .unwrap();
        assert_eq!(r.n_frames_integrated, 430);
        assert!((r.periods_integrated - 43.0).abs() < 1e-9);
        assert!((r.amplitude[[0, 0]] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn sampling_preconditions() {
        assert!(matches!(
            demodulate_series(&[0.0; 100], 100.0, 50.0, 0.0),
            Err(Error::Nyquist { .. })
        ));
        assert!(matches!(
            demodulate_series(&[0.0; 30], 100.0, 10.0, 0.0),
            Err(Error::TooFewPeriods { .. })
        ));
    }

    #[test]
    fn snr_gain_values() {
        assert_eq!(snr_gain(100, 400).unwrap(), 2.0);
        assert_eq!(snr_gain(7, 7).unwrap(), 1.0);
        assert!(snr_gain(0, 4).is_err());
    }

    #[test]
    fn eofm_passes_center_tone() {
        let band = BandFilterSpec {
            center_frequency_hz: 10_000.0,
            bandwidth_hz: 100.0,
        };
        let fs = 100_000.0;
        let x = tone(100_000, fs, 10_000.0, 2.0, 0.3, 0.0);
        let a = eofm_point_filter(&x, fs, &band).unwrap();
        assert!((a / 2.0 - 1.0).abs() < 0.01, "{a}");
        assert_eq!(eofm_point_filter(&vec![0.0; 100_000], fs, &band).unwrap(), 0.0);
    }

    #[test]
    fn eofm_rejects_invalid_band() {
        let bad = BandFilterSpec {
            center_frequency_hz: 10.0,
            bandwidth_hz: 20.0,
        };
        assert!(eofm_point_filter(&[0.0; 10], 100.0, &bad).is_err());
        let ok = BandFilterSpec {
            center_frequency_hz: 100.0,
            bandwidth_hz: 10.0,
        };
        assert!(matches!(
            eofm_point_filter(&[0.0; 1000], 150.0, &ok),
            Err(Error::Nyquist { .. })
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn amplitude_linear_and_phase_covariant(amp in 0.1f64..10.0, phase in -3.0f64..3.0,
                                                 c in 0.1f64..50.0, shift in -3.0f64..3.0) {
            let x = tone(800, 200.0, 25.0, amp, phase, 1.0);
            let scaled: Vec<f64> = x.iter().map(|v| v * c).collect();
            let (a0, p0) = demodulate_series(&x, 200.0, 25.0, 0.0).unwrap();
            let (a1, p1) = demodulate_series(&scaled, 200.0, 25.0, 0.0).unwrap();
            let (a2, p2) = demodulate_series(&x, 200.0, 25.0, shift).unwrap();
            prop_assert!((a1 - c * a0).abs() <= 1e-9 * c * a0);
            prop_assert!(wrap_phase(p1 - p0).abs() < 1e-9);
            prop_assert!((a2 - a0).abs() <= 1e-9 * a0);
            prop_assert!(wrap_phase(p2 - (p0 - shift)).abs() < 1e-9);
        }

        #[test]
        fn off_frequency_tone_rejected(df_units in 10.0f64..40.0) {
            // integration T = 2 s, offset >= 10/T
            let fps = 400.0;
            let n = 800;
            let f_ref = 50.0;
            let x = tone(n, fps, f_ref + df_units / 2.0, 1.0, 0.4, 0.0);
            let (a, _) = demodulate_series(&x, fps, f_ref, 0.0).unwrap();
            prop_assert!(a < 0.05, "{}", a);
        }
    }
}
