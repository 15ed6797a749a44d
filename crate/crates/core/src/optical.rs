//! Laser scanning acquisition for supply-modulated reflectance imaging:
//! modulation depth per pixel, lens-dependent tiling, noisy tile scans and
//! stitching back to a whole-die map.
//!
//! Tiles are sampled on the die raster. A lens only sets the field of view
//! (`tile_px × px_pitch_um`) and the spot size.

use std::path::Path;

use ndarray::{s, Array2, Zip};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, PixelBox, Result};
use crate::floorplan::{Die, Floorplan};
use crate::frames::{read_map, write_map};
use crate::stimulus::{ModulationSpec, Waveform};

/// Full width at half maximum of a Gaussian in units of its sigma.
const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum Magnification {
    X5,
    X20,
    X50,
}

impl TryFrom<u32> for Magnification {
    type Error = String;
    fn try_from(v: u32) -> std::result::Result<Self, String> {
        match v {
            5 => Ok(Magnification::X5),
            20 => Ok(Magnification::X20),
            50 => Ok(Magnification::X50),
            _ => Err(format!("unsupported magnification {v}, expected 5, 20 or 50")),
        }
    }
}

impl From<Magnification> for u32 {
    fn from(m: Magnification) -> u32 {
        match m {
            Magnification::X5 => 5,
            Magnification::X20 => 20,
            Magnification::X50 => 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LensSpec {
    pub magnification: Magnification,
    pub spot_size_um: f64,
    pub tile_width_px: u32,
    pub tile_height_px: u32,
    pub px_pitch_um: f64,
}

impl LensSpec {
    /// 512×512 px tiles with 2000/471/188 µm fields for 5×/20×/50×.
    pub fn preset(magnification: Magnification) -> Self {
        let (field_um, spot_um) = match magnification {
            Magnification::X5 => (2000.0, 10.0),
            Magnification::X20 => (471.0, 2.5),
            Magnification::X50 => (188.0, 1.0),
        };
        LensSpec {
            magnification,
            spot_size_um: spot_um,
            tile_width_px: 512,
            tile_height_px: 512,
            px_pitch_um: field_um / 512.0,
        }
    }

    pub fn field_width_um(&self) -> f64 {
        self.tile_width_px as f64 * self.px_pitch_um
    }

    pub fn field_height_um(&self) -> f64 {
        self.tile_height_px as f64 * self.px_pitch_um
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.spot_size_um > 0.0) {
            return Err(Error::validation("lens.spot_size_um", "must be > 0"));
        }
        if self.tile_width_px == 0 || self.tile_height_px == 0 || !(self.px_pitch_um > 0.0) {
            return Err(Error::validation("lens", "tile size and pixel pitch must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ModulationDepthMap {
    /// Reflected-light AC/DC ratio at the modulation frequency.
    pub depth: Array2<f64>,
    pub rail_id: String,
    pub frequency_hz: f64,
    pub pitch_um: f64,
}

/// `depth = reflect_sensitivity · (Vpp/2) / V_nominal` on the rail footprint.
pub fn modulation_depth_map(
    fp: &Floorplan,
    rail_id: &str,
    spec: &ModulationSpec,
) -> Result<ModulationDepthMap> {
    if spec.waveform != Waveform::Sine {
        return Err(Error::UnsupportedStimulus(
            "reflectance imaging requires a sine modulation".into(),
        ));
    }
    let nominal = fp.rail(rail_id)?.nominal_voltage_v;
    let ripple = spec.amplitude_vpp / 2.0 / nominal;
    let depth = fp.footprint_values(rail_id, |r| r.reflect_sensitivity * ripple)?;
    Ok(ModulationDepthMap {
        depth,
        rail_id: rail_id.to_string(),
        frequency_hz: spec.frequency_hz,
        pitch_um: fp.die.grid_pitch_um,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileOrigin {
    pub x_um: f64,
    pub y_um: f64,
}

/// Pixel rectangle of the die raster, `[col, col+width) × [row, row+height)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelWindow {
    pub col: usize,
    pub row: usize,
    pub width: usize,
    pub height: usize,
}

fn axis_origins(extent: f64, field: f64, overlap: f64) -> Vec<f64> {
    if field >= extent {
        return vec![(extent - field) / 2.0];
    }
    let step = field * (1.0 - overlap);
    let n = ((extent - field) / step - 1e-9).ceil() as usize + 1;
    (0..n).map(|i| (i as f64 * step).min(extent - field)).collect()
}

/// Row-major tile origins covering the die. The last tile of each axis is
/// pulled back to end on the die edge; a field larger than the die yields one
/// centered tile on that axis.
pub fn plan_tiles(die: &Die, lens: &LensSpec, overlap_fraction: f64) -> Result<Vec<TileOrigin>> {
    lens.validate()?;
    if !(0.0..0.5).contains(&overlap_fraction) {
        return Err(Error::invalid("overlap_fraction must lie in [0, 0.5)"));
    }
    let xs = axis_origins(die.width_um, lens.field_width_um(), overlap_fraction);
    let ys = axis_origins(die.height_um, lens.field_height_um(), overlap_fraction);
    Ok(ys
        .iter()
        .flat_map(|&y| xs.iter().map(move |&x| TileOrigin { x_um: x, y_um: y }))
        .collect())
}

fn axis_span(origin: f64, field: f64, extent: f64, pitch: f64, n: usize) -> (usize, usize) {
    let lo = (origin / pitch - 0.5 - 1e-9).ceil().max(0.0) as usize;
    let hi = if origin + field >= extent - 1e-9 {
        n
    } else {
        ((origin + field) / pitch - 0.5 - 1e-9).ceil().max(0.0) as usize
    };
    (lo.min(n), hi.min(n))
}

/// Die pixels whose centers fall inside the tile field.
pub fn tile_window(die: &Die, lens: &LensSpec, origin: TileOrigin) -> Result<PixelWindow> {
    let (rows, cols) = die.shape();
    let fw = lens.field_width_um();
    let fh = lens.field_height_um();
    if origin.x_um >= die.width_um
        || origin.y_um >= die.height_um
        || origin.x_um + fw <= 0.0
        || origin.y_um + fh <= 0.0
    {
        return Err(Error::OriginOutsideDie {
            x_um: origin.x_um,
            y_um: origin.y_um,
        });
    }
    let (c0, c1) = axis_span(origin.x_um, fw, die.width_um, die.grid_pitch_um, cols);
    let (r0, r1) = axis_span(origin.y_um, fh, die.height_um, die.grid_pitch_um, rows);
    if c1 <= c0 || r1 <= r0 {
        return Err(Error::OriginOutsideDie {
            x_um: origin.x_um,
            y_um: origin.y_um,
        });
    }
    Ok(PixelWindow {
        col: c0,
        row: r0,
        width: c1 - c0,
        height: r1 - r0,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileScan {
    pub origin: TileOrigin,
    pub window: PixelWindow,
    /// Narrow-band amplitude per pixel (detector units).
    pub amplitude: Array2<f64>,
    /// Samples averaged into each pixel.
    pub sample_count: Array2<u32>,
    pub dwell_time_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcquireParams {
    pub dwell_samples: u32,
    pub noise_sigma: f64,
    /// Reflected DC level in detector units.
    pub laser_dc: f64,
    pub sample_period_s: f64,
    pub seed: u64,
}

impl Default for AcquireParams {
    fn default() -> Self {
        AcquireParams {
            dwell_samples: 100,
            noise_sigma: 10.0,
            laser_dc: 1000.0,
            sample_period_s: 1e-6,
            seed: 0,
        }
    }
}

/// Normalized Gaussian spot profile with the given FWHM in pixels, truncated
/// at three FWHM.
pub fn spot_kernel(fwhm_px: f64) -> Vec<f64> {
    let sigma = fwhm_px / FWHM_PER_SIGMA;
    let radius = (3.0 * fwhm_px).floor() as isize;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|d| (-(d as f64).powi(2) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Separable spot blur of `map` evaluated only inside `window`.
fn blur_window(map: &Array2<f64>, window: PixelWindow, fwhm_px: f64) -> Array2<f64> {
    let kernel = spot_kernel(fwhm_px);
    let radius = kernel.len() / 2;
    let (rows, cols) = map.dim();
    let r_lo = window.row.saturating_sub(radius);
    let r_hi = (window.row + window.height + radius).min(rows);

    // horizontal pass over the rows the vertical pass will need
    let mut horiz = Array2::zeros((r_hi - r_lo, window.width));
    for (i, r) in (r_lo..r_hi).enumerate() {
        for j in 0..window.width {
            let c = window.col + j;
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                let cc = c as isize + k as isize - radius as isize;
                if cc >= 0 && (cc as usize) < cols {
                    acc += w * map[[r, cc as usize]];
                }
            }
            horiz[[i, j]] = acc;
        }
    }
    Array2::from_shape_fn((window.height, window.width), |(i, j)| {
        let r = window.row + i;
        kernel
            .iter()
            .enumerate()
            .filter_map(|(k, &w)| {
                let rr = r as isize + k as isize - radius as isize;
                (rr >= r_lo as isize && rr < r_hi as isize)
                    .then(|| w * horiz[[(rr as usize) - r_lo, j]])
            })
            .sum()
    })
}

/// Scans one tile: spot-blurred depth times the DC reflection, plus
/// narrow-band detector noise whose per-quadrature sigma falls as
/// `1/√dwell_samples`. The reported amplitude is the magnitude of the noisy
/// phasor, so it is never negative.
pub fn acquire_tile(
    depth: &ModulationDepthMap,
    die: &Die,
    origin: TileOrigin,
    lens: &LensSpec,
    params: &AcquireParams,
) -> Result<TileScan> {
    if params.dwell_samples == 0 {
        return Err(Error::invalid("dwell_samples must be >= 1"));
    }
    if depth.depth.dim() != die.shape() {
        return Err(Error::DimensionMismatch("depth map does not match the die raster".into()));
    }
    let window = tile_window(die, lens, origin)?;
    let fwhm_px = lens.spot_size_um / depth.pitch_um;
    let mut amplitude = blur_window(&depth.depth, window, fwhm_px);
    amplitude.mapv_inplace(|d| d * params.laser_dc);
    let sigma = params.noise_sigma / (params.dwell_samples as f64).sqrt();
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        for v in amplitude.iter_mut() {
            let ni: f64 = StandardNormal.sample(&mut rng);
            let nq: f64 = StandardNormal.sample(&mut rng);
            *v = (*v + sigma * ni).hypot(sigma * nq);
        }
    }
    Ok(TileScan {
        origin,
        window,
        sample_count: Array2::from_elem(amplitude.dim(), params.dwell_samples),
        amplitude,
        dwell_time_s: params.dwell_samples as f64 * params.sample_period_s,
    })
}

#[derive(Debug, Clone)]
pub struct StitchedMap {
    pub amplitude: Array2<f64>,
    /// Number of tiles covering each pixel.
    pub coverage: Array2<u32>,
}

/// Mean of all tile samples covering each die pixel.
pub fn stitch_tiles(tiles: &[TileScan], die: &Die) -> Result<StitchedMap> {
    let shape = die.shape();
    let mut sum = Array2::<f64>::zeros(shape);
    let mut coverage = Array2::<u32>::zeros(shape);
    for tile in tiles {
        let w = tile.window;
        if w.row + w.height > shape.0 || w.col + w.width > shape.1 {
            return Err(Error::DimensionMismatch(format!(
                "tile window {w:?} exceeds the {}x{} raster",
                shape.1, shape.0
            )));
        }
        if tile.amplitude.dim() != (w.height, w.width) {
            return Err(Error::DimensionMismatch("tile samples do not match its window".into()));
        }
        let region = s![w.row..w.row + w.height, w.col..w.col + w.width];
        Zip::from(sum.slice_mut(region))
            .and(coverage.slice_mut(region))
            .and(&tile.amplitude)
            .for_each(|s, c, &v| {
                *s += v;
                *c += 1;
            });
    }
    let gaps = uncovered_boxes(&coverage);
    if !gaps.is_empty() {
        return Err(Error::CoverageGap { boxes: gaps });
    }
    let amplitude = Zip::from(&sum)
        .and(&coverage)
        .map_collect(|&s, &c| s / c as f64);
    Ok(StitchedMap {
        amplitude,
        coverage,
    })
}

fn uncovered_boxes(coverage: &Array2<u32>) -> Vec<PixelBox> {
    let mask = coverage.mapv(|c| c == 0);
    crate::analysis::connected_components(&mask, false)
        .1
        .into_iter()
        .map(|c| c.bbox)
        .collect()
}

/// Index document written next to the tile files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileSetIndex {
    pub lens: LensSpec,
    pub dwell_samples: u32,
    pub dwell_time_s: f64,
    pub noise_sigma: f64,
    pub laser_dc: f64,
    pub seed: u64,
    pub die: Die,
    pub tiles: Vec<TileEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TileEntry {
    pub file: String,
    pub origin_x_um: f64,
    pub origin_y_um: f64,
    pub col: usize,
    pub row: usize,
    pub width_px: usize,
    pub height_px: usize,
    pub seed: u64,
}

pub const TILE_INDEX_FILE: &str = "tiles.toml";

/// Writes `tile_NNNN.mfrs` files plus the index document into `dir`.
pub fn write_tile_set(
    dir: &Path,
    tiles: &[TileScan],
    tile_seeds: &[u64],
    lens: &LensSpec,
    die: &Die,
    params: &AcquireParams,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut entries = Vec::with_capacity(tiles.len());
    for (i, tile) in tiles.iter().enumerate() {
        let file = format!("tile_{i:04}.mfrs");
        write_map(dir.join(&file), &tile.amplitude)?;
        entries.push(TileEntry {
            file,
            origin_x_um: tile.origin.x_um,
            origin_y_um: tile.origin.y_um,
            col: tile.window.col,
            row: tile.window.row,
            width_px: tile.window.width,
            height_px: tile.window.height,
            seed: tile_seeds.get(i).copied().unwrap_or(params.seed),
        });
    }
    let index = TileSetIndex {
        lens: *lens,
        dwell_samples: params.dwell_samples,
        dwell_time_s: params.dwell_samples as f64 * params.sample_period_s,
        noise_sigma: params.noise_sigma,
        laser_dc: params.laser_dc,
        seed: params.seed,
        die: *die,
        tiles: entries,
    };
    let text = toml::to_string(&index).map_err(|e| Error::Format(e.to_string()))?;
    let path = dir.join(TILE_INDEX_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

pub fn read_tile_set(dir: &Path) -> Result<(TileSetIndex, Vec<TileScan>)> {
    let path = dir.join(TILE_INDEX_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let index: TileSetIndex = toml::from_str(&text).map_err(|e| Error::Syntax(e.to_string()))?;
    let mut tiles = Vec::with_capacity(index.tiles.len());
    for entry in &index.tiles {
        let amplitude = read_map(dir.join(&entry.file))?;
        if amplitude.dim() != (entry.height_px, entry.width_px) {
            return Err(Error::Format(format!(
                "{}: size differs from its index entry",
                entry.file
            )));
        }
        tiles.push(TileScan {
            origin: TileOrigin {
                x_um: entry.origin_x_um,
                y_um: entry.origin_y_um,
            },
            window: PixelWindow {
                col: entry.col,
                row: entry.row,
                width: entry.width_px,
                height: entry.height_px,
            },
            sample_count: Array2::from_elem(amplitude.dim(), index.dwell_samples),
            amplitude,
            dwell_time_s: index.dwell_time_s,
        });
    }
    Ok((index, tiles))
}
