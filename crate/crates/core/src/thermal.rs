//! Thermography physics: rail-selective dissipation, thermal-wave spreading
//! and rendering of noisy IR camera frames.
//!
//! Heat spreading is modelled as a linear shift-invariant response with the
//! complex thermal-wave kernel `K(r) = C·exp(-r/µ)·exp(-i·r/µ)` truncated at
//! `r = 8µ`, where `µ = sqrt(α/(π f))`.

use std::f64::consts::PI;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::floorplan::{Floorplan, MaterialParams};
use crate::frames::{FrameHeader, FrameStack};
use crate::stimulus::ModulationSpec;

/// Kernel truncation radius in diffusion lengths.
pub const KERNEL_TRUNCATION: f64 = 8.0;

/// Kernels with more taps than this are applied through the FFT.
const DIRECT_TAP_LIMIT: usize = 2_000;

#[derive(Debug, Clone)]
pub struct PowerMap {
    /// µW/µm² per pixel.
    pub density: Array2<f64>,
    pub rail_id: String,
    pub spec: ModulationSpec,
    pub pitch_um: f64,
}

pub fn build_power_map(fp: &Floorplan, rail_id: &str, spec: &ModulationSpec) -> Result<PowerMap> {
    let density = fp.footprint_values(rail_id, |r| r.power_density_uw_per_um2)?;
    Ok(PowerMap {
        density,
        rail_id: rail_id.to_string(),
        spec: *spec,
        pitch_um: fp.die.grid_pitch_um,
    })
}

#[derive(Debug, Clone)]
pub struct ThermalResponse {
    /// µK at the modulation fundamental.
    pub amplitude: Array2<f64>,
    /// Radians in (-π, π]; negative values lag the stimulus.
    pub phase: Array2<f64>,
    pub frequency_hz: f64,
    pub diffusion_length_um: f64,
}

impl ThermalResponse {
    pub fn zeros(shape: (usize, usize), frequency_hz: f64, diffusion_length_um: f64) -> Self {
        ThermalResponse {
            amplitude: Array2::zeros(shape),
            phase: Array2::zeros(shape),
            frequency_hz,
            diffusion_length_um,
        }
    }
}

/// Thermal-wave kernel sampled on the pixel grid, `(2R+1)²` taps centered on
/// the origin. `K(0) = gain`.
pub fn thermal_kernel(mu_um: f64, pitch_um: f64, gain: f64) -> Array2<Complex64> {
    let reach = KERNEL_TRUNCATION * mu_um;
    let radius = (reach / pitch_um).floor() as isize;
    let n = (2 * radius + 1) as usize;
    Array2::from_shape_fn((n, n), |(i, j)| {
        let dy = (i as isize - radius) as f64 * pitch_um;
        let dx = (j as isize - radius) as f64 * pitch_um;
        let r = dx.hypot(dy);
        if r > reach {
            Complex64::new(0.0, 0.0)
        } else {
            let s = r / mu_um;
            Complex64::from_polar(gain * (-s).exp(), -s)
        }
    })
}

/// Complex steady-state response of a source map to the thermal kernel.
pub fn convolve_kernel(source: &Array2<f64>, kernel: &Array2<Complex64>) -> Array2<Complex64> {
    if kernel.len() <= DIRECT_TAP_LIMIT {
        convolve_direct(source, kernel)
    } else {
        convolve_fft(source, kernel)
    }
}

pub(crate) fn convolve_direct(source: &Array2<f64>, kernel: &Array2<Complex64>) -> Array2<Complex64> {
    let (rows, cols) = source.dim();
    let radius = (kernel.nrows() / 2) as isize;
    let mut out = Array2::from_elem((rows, cols), Complex64::new(0.0, 0.0));
    for ((r, c), &p) in source.indexed_iter() {
        if p == 0.0 {
            continue;
        }
        let r0 = (r as isize - radius).max(0) as usize;
        let r1 = ((r as isize + radius) as usize).min(rows - 1);
        let c0 = (c as isize - radius).max(0) as usize;
        let c1 = ((c as isize + radius) as usize).min(cols - 1);
        for rr in r0..=r1 {
            let kr = (rr as isize - r as isize + radius) as usize;
            for cc in c0..=c1 {
                let kc = (cc as isize - c as isize + radius) as usize;
                out[[rr, cc]] += kernel[[kr, kc]] * p;
            }
        }
    }
    out
}

pub(crate) fn convolve_fft(source: &Array2<f64>, kernel: &Array2<Complex64>) -> Array2<Complex64> {
    let (rows, cols) = source.dim();
    let radius = kernel.nrows() / 2;
    let (pr, pc) = (rows + 2 * radius, cols + 2 * radius);

    let mut a = Array2::from_elem((pr, pc), Complex64::new(0.0, 0.0));
    for ((r, c), &v) in source.indexed_iter() {
        a[[r, c]] = Complex64::new(v, 0.0);
    }
    let mut k = Array2::from_elem((pr, pc), Complex64::new(0.0, 0.0));
    for ((i, j), &v) in kernel.indexed_iter() {
        // wrap so the kernel center sits at index (0, 0)
        let ii = (i + pr - radius) % pr;
        let jj = (j + pc - radius) % pc;
        k[[ii, jj]] = v;
    }

    let mut planner = FftPlanner::new();
    fft2(&mut a, &mut planner, false);
    fft2(&mut k, &mut planner, false);
    Zip::from(&mut a).and(&k).for_each(|x, &y| *x *= y);
    fft2(&mut a, &mut planner, true);
    let scale = 1.0 / (pr * pc) as f64;
    Array2::from_shape_fn((rows, cols), |(r, c)| a[[r, c]] * scale)
}

fn fft2(data: &mut Array2<Complex64>, planner: &mut FftPlanner<f64>, inverse: bool) {
    let (rows, cols) = data.dim();
    let row_fft = if inverse {
        planner.plan_fft_inverse(cols)
    } else {
        planner.plan_fft_forward(cols)
    };
    for mut row in data.rows_mut() {
        let mut buf: Vec<Complex64> = row.to_vec();
        row_fft.process(&mut buf);
        row.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
    let col_fft = if inverse {
        planner.plan_fft_inverse(rows)
    } else {
        planner.plan_fft_forward(rows)
    };
    for mut col in data.columns_mut() {
        let mut buf: Vec<Complex64> = col.to_vec();
        col_fft.process(&mut buf);
        col.iter_mut().zip(buf).for_each(|(d, s)| *d = s);
    }
}

/// Periodic steady-state temperature response at the modulation fundamental.
pub fn thermal_response(
    pm: &PowerMap,
    material: &MaterialParams,
    gain_uk_per_uw: f64,
) -> Result<ThermalResponse> {
    let f = pm.spec.frequency_hz;
    if !(f > 0.0) {
        return Err(Error::invalid("modulation frequency must be > 0"));
    }
    let mu = material.diffusion_length_um(f);
    if pm.density.iter().all(|&p| p == 0.0) {
        return Ok(ThermalResponse::zeros(pm.density.dim(), f, mu));
    }
    let kernel = thermal_kernel(mu, pm.pitch_um, gain_uk_per_uw);
    let complex = convolve_kernel(&pm.density, &kernel);
    let amplitude = complex.mapv(|z| z.norm());
    let phase = complex.mapv(|z| if z.norm() > 0.0 { wrap_phase(z.arg()) } else { 0.0 });
    Ok(ThermalResponse {
        amplitude,
        phase,
        frequency_hz: f,
        diffusion_length_um: mu,
    })
}

/// Maps an angle into (-π, π].
pub fn wrap_phase(phi: f64) -> f64 {
    let mut p = phi.rem_euclid(2.0 * PI);
    if p > PI {
        p -= 2.0 * PI;
    }
    p
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderParams {
    pub n_frames: usize,
    pub fps: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub dc_background: f64,
    pub t0: f64,
}

impl Default for RenderParams {
    fn default() -> Self {
        RenderParams {
            n_frames: 1000,
            fps: 200.0,
            noise_sigma: 2.0,
            seed: 0,
            dc_background: 1000.0,
            t0: 0.0,
        }
    }
}

/// Generates IR frames on demand so long acquisitions need not be held in
/// memory. Frame `k` depends only on the inputs and `(seed, k)`.
pub struct IrFrameSource {
    /// `ε·dc`, `ε·A·cos φ` and `ε·A·sin φ` per pixel.
    base: Array2<f64>,
    in_phase: Array2<f64>,
    quadrature: Array2<f64>,
    omega: f64,
    stim_phase: f64,
    params: RenderParams,
    /// Modulation periods covered by the acquisition.
    pub periods: f64,
}

impl IrFrameSource {
    pub fn new(
        tr: &ThermalResponse,
        emissivity: Array2<f64>,
        spec: &ModulationSpec,
        params: RenderParams,
    ) -> Result<Self> {
        if !(params.fps > 2.0 * spec.frequency_hz) {
            return Err(Error::Nyquist {
                rate_hz: params.fps,
                frequency_hz: spec.frequency_hz,
            });
        }
        let periods = params.n_frames as f64 * spec.frequency_hz / params.fps;
        if periods < 4.0 - 1e-9 {
            return Err(Error::TooFewPeriods { periods });
        }
        if emissivity.dim() != tr.amplitude.dim() {
            return Err(Error::DimensionMismatch(
                "emissivity map and thermal response differ in size".into(),
            ));
        }
        if !(params.noise_sigma >= 0.0) {
            return Err(Error::invalid("noise_sigma must be >= 0"));
        }
        let dc = params.dc_background;
        let base = emissivity.mapv(|e| e * dc);
        let in_phase = Zip::from(&emissivity)
            .and(&tr.amplitude)
            .and(&tr.phase)
            .map_collect(|&e, &a, &ph| e * a * ph.cos());
        let quadrature = Zip::from(&emissivity)
            .and(&tr.amplitude)
            .and(&tr.phase)
            .map_collect(|&e, &a, &ph| e * a * ph.sin());
        Ok(IrFrameSource {
            base,
            in_phase,
            quadrature,
            omega: spec.angular_frequency(),
            stim_phase: spec.phase_rad,
            params,
            periods,
        })
    }

    pub fn header(&self) -> FrameHeader {
        let (h, w) = self.base.dim();
        FrameHeader {
            width: w as u32,
            height: h as u32,
            n_frames: self.params.n_frames as u32,
            fps: self.params.fps,
            t0: self.params.t0,
        }
    }

    pub fn n_frames(&self) -> usize {
        self.params.n_frames
    }

    pub fn fps(&self) -> f64 {
        self.params.fps
    }

    pub fn t0(&self) -> f64 {
        self.params.t0
    }

    pub fn integer_periods(&self) -> bool {
        (self.periods - self.periods.round()).abs() < 1e-9
    }

    pub fn frame(&self, k: usize) -> Array2<f64> {
        let mut frame = Array2::zeros(self.base.dim());
        self.frame_into(k, &mut frame);
        frame
    }

    /// Writes frame `k` into `out`, which must match the raster shape.
    pub fn frame_into(&self, k: usize, out: &mut Array2<f64>) {
        let t = self.params.t0 + k as f64 / self.params.fps;
        let (s, c) = (self.omega * t + self.stim_phase).sin_cos();
        Zip::from(&mut *out)
            .and(&self.base)
            .and(&self.in_phase)
            .and(&self.quadrature)
            .for_each(|o, &b, &i, &q| *o = b + i * s + q * c);
        if self.params.noise_sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(self.params.seed);
            rng.set_stream(k as u64);
            let sigma = self.params.noise_sigma;
            for v in out.iter_mut() {
                let n: f64 = StandardNormal.sample(&mut rng);
                *v += sigma * n;
            }
        }
    }

    pub fn collect(&self) -> Result<FrameStack> {
        let frames: Vec<Array2<f64>> = (0..self.params.n_frames).map(|k| self.frame(k)).collect();
        FrameStack::from_frames(&frames, self.params.fps, self.params.t0)
    }
}

#[derive(Debug, Clone)]
pub struct RenderedFrames {
    pub stack: FrameStack,
    pub periods: f64,
    /// False when the stack ends part-way through a modulation period.
    pub integer_periods: bool,
}

/// Renders `emissivity ⊙ (dc + A·sin(ωt + φ_stim + φ)) + noise` frames. Square
/// stimuli contribute only their fundamental, which the amplitude map already
/// describes.
pub fn render_ir_frames(
    tr: &ThermalResponse,
    fp: &Floorplan,
    spec: &ModulationSpec,
    params: RenderParams,
) -> Result<RenderedFrames> {
    let source = IrFrameSource::new(tr, fp.render_emissivity_map(), spec, params)?;
    Ok(RenderedFrames {
        stack: source.collect()?,
        periods: source.periods,
        integer_periods: source.integer_periods(),
    })
}
