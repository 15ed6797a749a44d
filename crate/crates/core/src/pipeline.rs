//! End-to-end orchestration: simulate an acquisition into an output
//! directory, then demodulate, classify and report on it.

use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    detect_affected, label_texture, rayleigh_threshold, scan_time, ClassificationResult, Component, ComponentLabel,
    ScanPlan, TextureParams,
};
use crate::config::{AnalysisParams, PipelineConfig, Technique};
use crate::error::{Error, Result};
use crate::export::{render_overlay, write_png};
use crate::floorplan::{parse_floorplan, Floorplan};
use crate::frames::{read_map, write_map, FrameReader, FrameWriter};
use crate::hash::substream;
use crate::lockin::{LockInAccumulator, LockInResult};
use crate::optical::{
    acquire_tile, modulation_depth_map, plan_tiles, read_tile_set, stitch_tiles, write_tile_set,
    StitchedMap, TileScan,
};
use crate::thermal::{build_power_map, thermal_response, IrFrameSource};

pub const INDEX_FILE: &str = "index.toml";
pub const REPORT_FILE: &str = "report.toml";
pub const FLOORPLAN_COPY: &str = "floorplan.fp";
pub const FRAMES_FILE: &str = "frames.mfrs";
pub const AMPLITUDE_FILE: &str = "amplitude.mfrs";
pub const PHASE_FILE: &str = "phase.mfrs";
pub const BASE_FILE: &str = "base.mfrs";
pub const MASK_FILE: &str = "mask.mfrs";
pub const OVERLAY_FILE: &str = "overlay.png";
pub const TILE_DIR: &str = "tiles";

/// Everything a simulation run used and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationIndex {
    pub technique: Technique,
    pub rail_id: String,
    pub raster_width: usize,
    pub raster_height: usize,
    pub pitch_um: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diffusion_length_um: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub periods_integrated: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integer_periods: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_tiles: Option<usize>,
    pub files: Vec<String>,
    pub config: PipelineConfig,
}

impl SimulationIndex {
    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(INDEX_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| Error::Syntax(format!("{}: {e}", path.display())))
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_text(&dir.join(INDEX_FILE), &toml::to_string(self).map_err(format_err)?)
    }
}

fn format_err(e: impl std::fmt::Display) -> Error {
    Error::Format(e.to_string())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Thermography acquisition with on-line lock-in demodulation. Frames are
/// generated one at a time and optionally streamed to `frames_path`.
pub fn run_lit(fp: &Floorplan, cfg: &PipelineConfig, frames_path: Option<&Path>) -> Result<(LockInResult, f64, f64)> {
    let spec = cfg.modulation_spec();
    let pm = build_power_map(fp, &cfg.rail_id, &spec)?;
    let tr = thermal_response(&pm, &fp.material, cfg.lit.gain)?;
    let source = IrFrameSource::new(&tr, fp.render_emissivity_map(), &spec, cfg.lit.render_params())?;
    let mut acc = LockInAccumulator::new(
        fp.shape(),
        source.n_frames(),
        source.fps(),
        source.t0(),
        spec.frequency_hz,
        spec.phase_rad,
    )?;
    let mut writer = frames_path
        .map(|p| FrameWriter::create(p, source.header()))
        .transpose()?;
    let mut frame = Array2::zeros(fp.shape());
    for k in 0..source.n_frames() {
        source.frame_into(k, &mut frame);
        if let Some(w) = writer.as_mut() {
            w.push(frame.view())?;
        }
        acc.push(frame.view())?;
    }
    if let Some(w) = writer {
        w.finish()?;
    }
    Ok((acc.finish()?, tr.diffusion_length_um, source.periods))
}

/// Reflectance-imaging acquisition: one narrow-band scan per planned tile,
/// each with its own noise substream.
pub fn run_llsi(fp: &Floorplan, cfg: &PipelineConfig) -> Result<(Vec<TileScan>, Vec<u64>)> {
    let spec = cfg.modulation_spec();
    let depth = modulation_depth_map(fp, &cfg.rail_id, &spec)?;
    let lens = cfg.llsi.lens_spec();
    let origins = plan_tiles(&fp.die, &lens, cfg.llsi.overlap)?;
    let mut tiles = Vec::with_capacity(origins.len());
    let mut seeds = Vec::with_capacity(origins.len());
    for (i, origin) in origins.into_iter().enumerate() {
        let seed = substream(cfg.llsi.seed, i as u64);
        let params = cfg.llsi.acquire_params(seed);
        tiles.push(acquire_tile(&depth, &fp.die, origin, &lens, &params)?);
        seeds.push(seed);
    }
    Ok((tiles, seeds))
}

/// Base image for overlays: emitted radiance (thermography) or reflected
/// DC light (reflectance imaging).
pub fn base_image(fp: &Floorplan, cfg: &PipelineConfig) -> Array2<f64> {
    let scale = match cfg.technique {
        Technique::Lit => cfg.lit.dc_background,
        Technique::Llsi => cfg.llsi.laser_dc,
    };
    fp.render_emissivity_map().mapv(|e| e * scale)
}

/// Runs the configured acquisition and writes its artifacts plus an index
/// into `cfg.output`.
pub fn simulate(cfg: &PipelineConfig) -> Result<SimulationIndex> {
    cfg.validate()?;
    let text = std::fs::read_to_string(&cfg.floorplan).map_err(|e| Error::io(&cfg.floorplan, e))?;
    let fp = parse_floorplan(&text)?;
    fp.rail(&cfg.rail_id)?;
    let out = cfg.output.as_path();
    create_dir(out)?;
    write_text(&out.join(FLOORPLAN_COPY), &text)?;
    write_map(out.join(BASE_FILE), &base_image(&fp, cfg))?;

    let (rows, cols) = fp.shape();
    let mut index = SimulationIndex {
        technique: cfg.technique,
        rail_id: cfg.rail_id.clone(),
        raster_width: cols,
        raster_height: rows,
        pitch_um: fp.die.grid_pitch_um,
        diffusion_length_um: None,
        periods_integrated: None,
        integer_periods: None,
        n_tiles: None,
        files: vec![FLOORPLAN_COPY.into(), BASE_FILE.into()],
        config: cfg.clone(),
    };
    match cfg.technique {
        Technique::Lit => {
            let frames = cfg.lit.save_frames.then(|| out.join(FRAMES_FILE));
            let (lockin, mu, periods) = run_lit(&fp, cfg, frames.as_deref())?;
            write_map(out.join(AMPLITUDE_FILE), &lockin.amplitude)?;
            write_map(out.join(PHASE_FILE), &lockin.phase)?;
            if frames.is_some() {
                index.files.push(FRAMES_FILE.into());
            }
            index.files.extend([AMPLITUDE_FILE.into(), PHASE_FILE.into()]);
            index.diffusion_length_um = Some(mu);
            index.periods_integrated = Some(periods);
            index.integer_periods = Some((periods - periods.round()).abs() < 1e-9);
        }
        Technique::Llsi => {
            let (tiles, seeds) = run_llsi(&fp, cfg)?;
            let params = cfg.llsi.acquire_params(cfg.llsi.seed);
            write_tile_set(&out.join(TILE_DIR), &tiles, &seeds, &cfg.llsi.lens_spec(), &fp.die, &params)?;
            index.n_tiles = Some(tiles.len());
            index.files.push(format!("{TILE_DIR}/{}", crate::optical::TILE_INDEX_FILE));
        }
    }
    index.write(out)?;
    Ok(index)
}

/// Demodulates a frame stack file without loading it whole.
pub fn demodulate_file(path: &Path, ref_frequency_hz: f64, ref_phase_rad: f64) -> Result<LockInResult> {
    let mut reader = FrameReader::open(path)?;
    let h = reader.header;
    let mut acc = LockInAccumulator::new(
        (h.height as usize, h.width as usize),
        h.n_frames as usize,
        h.fps,
        h.t0,
        ref_frequency_hz,
        ref_phase_rad,
    )?;
    while let Some(frame) = reader.next_frame()? {
        acc.push(frame.view())?;
    }
    acc.finish()
}

/// Overlap of a detected mask with the known rail footprints.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthMetrics {
    pub footprint_fraction: f64,
    /// Disk radius used to widen the footprint by the response blur.
    pub dilation_px: usize,
    pub iou: f64,
    pub other_rail_pixels: usize,
    pub false_positive_pixels: usize,
    pub false_positive_rate: f64,
}

fn dilate_disk(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    if radius == 0 {
        return mask.clone();
    }
    let (rows, cols) = mask.dim();
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dy, dx)))
        .filter(|(dy, dx)| dy * dy + dx * dx <= r * r)
        .collect();
    let mut out = Array2::from_elem((rows, cols), false);
    for ((y, x), &m) in mask.indexed_iter() {
        if !m {
            continue;
        }
        for &(dy, dx) in &offsets {
            let (yy, xx) = (y as isize + dy, x as isize + dx);
            if yy >= 0 && xx >= 0 && (yy as usize) < rows && (xx as usize) < cols {
                out[[yy as usize, xx as usize]] = true;
            }
        }
    }
    out
}

pub fn ground_truth_metrics(
    fp: &Floorplan,
    rail_id: &str,
    mask: &Array2<bool>,
    dilation_px: usize,
) -> Result<GroundTruthMetrics> {
    if mask.dim() != fp.shape() {
        return Err(Error::DimensionMismatch("mask does not match the floorplan raster".into()));
    }
    let footprint = fp.rasterize_rail_footprint(rail_id)?;
    let truth = dilate_disk(&footprint, dilation_px);
    let (mut inter, mut union) = (0usize, 0usize);
    for (&t, &m) in truth.iter().zip(mask.iter()) {
        inter += (t && m) as usize;
        union += (t || m) as usize;
    }
    let mut others = Array2::from_elem(fp.shape(), false);
    for rail in fp.rails.iter().filter(|r| r.id != rail_id) {
        let f = fp.rasterize_rail_footprint(&rail.id)?;
        ndarray::Zip::from(&mut others).and(&f).for_each(|o, &v| *o |= v);
    }
    let other_rail_pixels = others.iter().filter(|&&b| b).count();
    let false_positive_pixels = others.iter().zip(mask.iter()).filter(|(&o, &m)| o && m).count();
    Ok(GroundTruthMetrics {
        footprint_fraction: footprint.iter().filter(|&&b| b).count() as f64 / footprint.len() as f64,
        dilation_px,
        iou: if union == 0 { 1.0 } else { inter as f64 / union as f64 },
        other_rail_pixels,
        false_positive_pixels,
        false_positive_rate: if other_rail_pixels == 0 {
            0.0
        } else {
            false_positive_pixels as f64 / other_rail_pixels as f64
        },
    })
}

/// Threshold, connect and texture-label an amplitude map.
pub fn classify_map(amplitude: &Array2<f64>, pitch_um: f64, params: &AnalysisParams) -> Result<ClassificationResult> {
    params.validate()?;
    let detected = detect_affected(amplitude, params.k_sigma)?;
    label_texture(
        &detected,
        amplitude,
        &TextureParams {
            window_um: params.window_um,
            fill_cutoff: params.fill_cutoff,
            pitch_um,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub technique: Technique,
    pub rail_id: String,
    pub raster_width: usize,
    pub raster_height: usize,
    pub pitch_um: f64,
    pub k_sigma: f64,
    pub strong_sigma: f64,
    pub window_um: f64,
    pub fill_cutoff: f64,
    pub noise_sigma_est: f64,
    pub noise_floor: f64,
    pub threshold_value: f64,
    pub strong_threshold_value: f64,
    pub affected_pixels: usize,
    pub affected_fraction: f64,
    pub search_space_reduction: f64,
    pub refined_fraction: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masked_speedup: Option<f64>,
    pub n_components: usize,
    pub supply_pixels: usize,
    pub logic_pixels: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<GroundTruthMetrics>,
    pub components: Vec<Component>,
}

impl AnalysisReport {
    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Syntax(format!("{}: {e}", path.display())))
    }
}

/// Everything produced by one analysis.
pub struct Analysis {
    pub report: AnalysisReport,
    pub amplitude: Array2<f64>,
    pub phase: Option<Array2<f64>>,
    pub classification: ClassificationResult,
}

/// Demodulated (or stitched) amplitude of a simulation directory.
pub fn load_amplitude(dir: &Path, index: &SimulationIndex) -> Result<(Array2<f64>, Option<Array2<f64>>)> {
    match index.technique {
        Technique::Lit => {
            let frames = dir.join(FRAMES_FILE);
            if frames.exists() {
                let spec = index.config.modulation_spec();
                let r = demodulate_file(&frames, spec.frequency_hz, spec.phase_rad)?;
                Ok((r.amplitude, Some(r.phase)))
            } else {
                Ok((read_map(dir.join(AMPLITUDE_FILE))?, Some(read_map(dir.join(PHASE_FILE))?)))
            }
        }
        Technique::Llsi => {
            let (tile_index, tiles) = read_tile_set(&dir.join(TILE_DIR))?;
            let StitchedMap { amplitude, .. } = stitch_tiles(&tiles, &tile_index.die)?;
            Ok((amplitude, None))
        }
    }
}

fn dilation_for(index: &SimulationIndex) -> usize {
    let blur_um = match index.technique {
        Technique::Lit => index.diffusion_length_um.unwrap_or(0.0),
        Technique::Llsi => index.config.llsi.lens_spec().spot_size_um,
    };
    (blur_um / index.pitch_um).round() as usize
}

/// Analyzes a simulation directory and, when `out` is given, writes the
/// maps, mask, overlay image and report there.
pub fn analyze(dir: &Path, params: Option<AnalysisParams>, out: Option<&Path>) -> Result<Analysis> {
    let index = SimulationIndex::read(dir)?;
    let params = params.unwrap_or(index.config.analysis);
    let fp = Floorplan::from_path(dir.join(FLOORPLAN_COPY))?;
    let (amplitude, phase) = load_amplitude(dir, &index)?;
    if amplitude.dim() != fp.shape() {
        return Err(Error::DimensionMismatch("amplitude map does not match the floorplan raster".into()));
    }
    let classification = classify_map(&amplitude, index.pitch_um, &params)?;
    let truth = ground_truth_metrics(&fp, &index.rail_id, &classification.affected_mask, dilation_for(&index))?;

    let count = |label| {
        classification
            .components
            .iter()
            .filter(|c| c.label == label)
            .map(|c| c.pixel_count)
            .sum::<usize>()
    };
    let c = &classification;
    let strong_threshold_value = rayleigh_threshold(c.noise_sigma_est, params.strong_sigma);
    let report = AnalysisReport {
        technique: index.technique,
        rail_id: index.rail_id.clone(),
        raster_width: index.raster_width,
        raster_height: index.raster_height,
        pitch_um: index.pitch_um,
        k_sigma: params.k_sigma,
        strong_sigma: params.strong_sigma,
        window_um: params.window_um,
        fill_cutoff: params.fill_cutoff,
        noise_sigma_est: c.noise_sigma_est,
        noise_floor: c.noise_floor,
        threshold_value: c.threshold_value,
        strong_threshold_value,
        affected_pixels: c.affected_mask.iter().filter(|&&b| b).count(),
        affected_fraction: c.affected_fraction,
        search_space_reduction: c.search_space_reduction,
        refined_fraction: c.refined_fraction.unwrap_or(0.0),
        masked_speedup: crate::analysis::masked_speedup(c.affected_fraction).ok(),
        n_components: c.components.len(),
        supply_pixels: count(ComponentLabel::Supply),
        logic_pixels: count(ComponentLabel::Logic),
        ground_truth: Some(truth),
        components: c.components.clone(),
    };

    if let Some(out) = out {
        create_dir(out)?;
        write_map(out.join(AMPLITUDE_FILE), &amplitude)?;
        if let Some(phase) = &phase {
            write_map(out.join(PHASE_FILE), phase)?;
        }
        write_map(out.join(MASK_FILE), &c.affected_mask.mapv(|m| m as u8 as f64))?;
        let base = read_map(dir.join(BASE_FILE))?;
        let img = render_overlay(&base, &amplitude, &c.affected_mask, strong_threshold_value)?;
        write_png(out.join(OVERLAY_FILE), &img)?;
        write_text(&out.join(REPORT_FILE), &toml::to_string(&report).map_err(format_err)?)?;
    }
    Ok(Analysis {
        report,
        amplitude,
        phase,
        classification: classification.clone(),
    })
}

/// Scan budget with an optional mask restricting the campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub summary: String,
    pub positions: u64,
    pub t_scan_s: f64,
    pub t_scan_days: f64,
    pub plan: ScanPlan,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub masked: Option<MaskedPlan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskedPlan {
    pub affected_fraction: f64,
    pub t_masked_s: f64,
    pub t_masked_days: f64,
    pub speedup: f64,
}

pub fn humanize_days(days: f64) -> String {
    format!("{days:.1} days")
}

pub fn plan_report(plan: &ScanPlan, affected_fraction: Option<f64>) -> Result<PlanReport> {
    let plan = scan_time(plan)?;
    let days = plan.t_scan_days();
    let masked = affected_fraction
        .map(|f| -> Result<MaskedPlan> {
            let t = plan.masked_time_s(f)?;
            Ok(MaskedPlan {
                affected_fraction: f,
                t_masked_s: t,
                t_masked_days: t / crate::analysis::SECONDS_PER_DAY,
                speedup: plan.masked_speedup(f)?,
            })
        })
        .transpose()?;
    let mut summary = format!(
        "{} positions, {} s, {}",
        plan.positions,
        plan.t_scan_s,
        humanize_days(days)
    );
    if let Some(m) = &masked {
        summary.push_str(&format!(
            "; masked to {:.1}% of the area: {}, {:.2}x faster",
            100.0 * m.affected_fraction,
            humanize_days(m.t_masked_days),
            m.speedup
        ));
    }
    Ok(PlanReport {
        summary,
        positions: plan.positions,
        t_scan_s: plan.t_scan_s,
        t_scan_days: days,
        plan,
        masked,
    })
}

impl PlanReport {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan report always serializes")
    }
}

/// Fraction of true pixels in a 0/1 mask file.
pub fn mask_fraction(path: &Path) -> Result<f64> {
    let mask = read_map(path)?;
    Ok(mask.iter().filter(|&&v| v > 0.5).count() as f64 / mask.len() as f64)
}

/// Stitches a tile directory into one map file.
pub fn stitch_dir(tile_dir: &Path, out: &Path) -> Result<StitchedMap> {
    let (index, tiles) = read_tile_set(tile_dir)?;
    let stitched = stitch_tiles(&tiles, &index.die)?;
    write_map(out, &stitched.amplitude)?;
    Ok(stitched)
}

/// Resolves `path` against `base` unless it is absolute.
pub fn resolve(base: &Path, path: &Path) -> PathBuf {
    if path.is_absolute() {
        path.to_path_buf()
    } else {
        base.join(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Technique;

    const SMALL: &str = include_str!("../../../scenarios/small.fp");

    fn setup(technique: Technique, rail: &str) -> (tempfile::TempDir, PipelineConfig) {
        let dir = tempfile::tempdir().unwrap();
        let fp = dir.path().join("small.fp");
        std::fs::write(&fp, SMALL).unwrap();
        let mut cfg = PipelineConfig::new(fp, technique, rail);
        cfg.output = dir.path().join("sim");
        cfg.lit.n_frames = 200;
        cfg.analysis.window_um = 50.0;
        if technique == Technique::Llsi {
            cfg.llsi.lens = Some(crate::optical::LensSpec {
                magnification: crate::optical::Magnification::X20,
                spot_size_um: 2.5,
                tile_width_px: 100,
                tile_height_px: 100,
                px_pitch_um: 1.0,
            });
        }
        (dir, cfg)
    }

    #[test]
    fn lit_simulate_writes_configured_stack() {
        let (_dir, cfg) = setup(Technique::Lit, "aux");
        let index = simulate(&cfg).unwrap();
        let reader = FrameReader::open(cfg.output.join(FRAMES_FILE)).unwrap();
        assert_eq!((reader.header.width, reader.header.height), (20, 16));
        assert_eq!(reader.header.n_frames, 200);
        assert_eq!(reader.header.fps, 200.0);
        assert_eq!(SimulationIndex::read(&cfg.output).unwrap(), index);
    }

    #[test]
    fn llsi_single_tile_die() {
        let (_dir, mut cfg) = setup(Technique::Llsi, "core");
        cfg.llsi.lens.as_mut().unwrap().tile_width_px = 400;
        cfg.llsi.lens.as_mut().unwrap().tile_height_px = 400;
        let index = simulate(&cfg).unwrap();
        assert_eq!(index.n_tiles, Some(1));
        let (_, tiles) = read_tile_set(&cfg.output.join(TILE_DIR)).unwrap();
        assert_eq!(tiles.len(), 1);
    }

    #[test]
    fn invalid_rail_lists_valid_ones() {
        let (_dir, cfg) = setup(Technique::Lit, "vcc_ghost");
        let err = simulate(&cfg).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("vcc_ghost") && msg.contains("core") && msg.contains("aux"), "{msg}");
    }

    #[test]
    fn analysis_is_reproducible_and_readable() {
        let (dir, cfg) = setup(Technique::Lit, "core");
        simulate(&cfg).unwrap();
        let a = dir.path().join("a");
        let b = dir.path().join("b");
        let first = analyze(&cfg.output, None, Some(&a)).unwrap();
        analyze(&cfg.output, None, Some(&b)).unwrap();
        for f in [REPORT_FILE, MASK_FILE, AMPLITUDE_FILE, PHASE_FILE, OVERLAY_FILE] {
            assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
        }
        assert_eq!(AnalysisReport::read(&a.join(REPORT_FILE)).unwrap(), first.report);
        let mask = read_map(a.join(MASK_FILE)).unwrap();
        assert_eq!(mask.mapv(|v| v > 0.5), first.classification.affected_mask);
        let truth = first.report.ground_truth.unwrap();
        assert!(truth.iou > 0.9, "{truth:?}");
    }

    #[test]
    fn zero_signal_gives_empty_mask() {
        let (_dir, mut cfg) = setup(Technique::Lit, "core");
        cfg.lit.noise_sigma = 0.0;
        cfg.lit.save_frames = false;
        cfg.modulation = Some(crate::stimulus::ModulationSpec {
            amplitude_vpp: 0.0,
            ..crate::stimulus::ModulationSpec::lit_default()
        });
        // an unpowered rail: zero power density everywhere
        let text = SMALL.replace("power_density_uw_per_um2 = 2.0", "power_density_uw_per_um2 = 0.0");
        std::fs::write(&cfg.floorplan, text).unwrap();
        simulate(&cfg).unwrap();
        let r = analyze(&cfg.output, None, None).unwrap().report;
        assert_eq!(r.affected_fraction, 0.0);
        assert_eq!(r.search_space_reduction, 1.0);
        assert_eq!(r.n_components, 0);
    }

    #[test]
    fn plan_report_quotes_days() {
        let plan = ScanPlan::new(8000.0, 12000.0, 1.0, 1.0, 1, 0.1, 1);
        let r = plan_report(&plan, Some(0.189)).unwrap();
        assert_eq!(r.positions, 96_000_000);
        assert!(r.summary.contains("111.1 days"), "{}", r.summary);
        assert!((r.masked.unwrap().speedup - 5.291).abs() < 1e-3);
        let back: PlanReport = toml::from_str(&r.to_toml()).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn disk_dilation() {
        let mut m = Array2::from_elem((7, 7), false);
        m[[3, 3]] = true;
        let d = dilate_disk(&m, 2);
        assert_eq!(d.iter().filter(|&&b| b).count(), 13);
        assert_eq!(dilate_disk(&m, 0), m);
    }
}
