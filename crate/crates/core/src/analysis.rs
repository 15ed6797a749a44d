//! Evaluation chain on demodulated amplitude maps: noise estimation,
//! threshold classification, connected regions, solid-vs-speckled texture
//! labeling, rail overlays, and the scan-time model for localized attacks.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, PixelBox, Result};

/// Scale from median absolute deviation to a Gaussian sigma.
pub const MAD_TO_SIGMA: f64 = 1.4826;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ComponentLabel {
    Supply,
    Logic,
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub id: u32,
    pub pixel_count: usize,
    pub bbox: PixelBox,
    pub label: ComponentLabel,
    /// Texture group the component was merged into, once labeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<u32>,
    /// Windowed fill ratio of its group, once labeled.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fill_ratio: Option<f64>,
    #[serde(default)]
    pub mean_amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationResult {
    pub affected_mask: Array2<bool>,
    /// Component id per pixel, 0 for unaffected pixels.
    pub component_map: Array2<u32>,
    /// Amplitude above which a pixel counts as affected.
    pub threshold_value: f64,
    pub noise_sigma_est: f64,
    /// Median amplitude of the background pixels.
    pub noise_floor: f64,
    pub components: Vec<Component>,
    pub affected_fraction: f64,
    pub search_space_reduction: f64,
    /// Logic-labeled area over total area, once labeled.
    pub refined_fraction: Option<f64>,
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

fn background_values(amplitude: &Array2<f64>, background: Option<&Array2<bool>>) -> Result<Vec<f64>> {
    if amplitude.is_empty() {
        return Err(Error::invalid("amplitude map is empty"));
    }
    let values: Vec<f64> = match background {
        Some(mask) => {
            if mask.dim() != amplitude.dim() {
                return Err(Error::DimensionMismatch("background mask does not match map".into()));
            }
            amplitude
                .iter()
                .zip(mask.iter())
                .filter_map(|(&v, &m)| m.then_some(v))
                .collect()
        }
        None => amplitude.iter().copied().collect(),
    };
    if values.is_empty() {
        return Err(Error::AllMasked);
    }
    Ok(values)
}

/// Robust sigma `1.4826·median(|x − median(x)|)` over the background pixels,
/// or the whole map when no mask is given.
pub fn estimate_noise_sigma(amplitude: &Array2<f64>, background: Option<&Array2<bool>>) -> Result<f64> {
    let mut values = background_values(amplitude, background)?;
    let m = median(&mut values);
    let mut dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    Ok(MAD_TO_SIGMA * median(&mut dev))
}

/// Median of the background pixels.
pub fn estimate_noise_floor(amplitude: &Array2<f64>, background: Option<&Array2<bool>>) -> Result<f64> {
    let mut values = background_values(amplitude, background)?;
    Ok(median(&mut values))
}

/// Labels connected true pixels (8- or 4-connectivity). Returns the id map
/// (0 = background, ids start at 1) and components in raster-scan order.
pub fn connected_components(mask: &Array2<bool>, eight: bool) -> (Array2<u32>, Vec<Component>) {
    let (rows, cols) = mask.dim();
    let mut labels = Array2::<u32>::zeros((rows, cols));
    let mut components = Vec::new();
    let mut stack = Vec::new();
    let offsets: &[(isize, isize)] = if eight {
        &[(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]
    } else {
        &[(-1, 0), (0, -1), (0, 1), (1, 0)]
    };
    for r in 0..rows {
        for c in 0..cols {
            if !mask[[r, c]] || labels[[r, c]] != 0 {
                continue;
            }
            let id = components.len() as u32 + 1;
            labels[[r, c]] = id;
            stack.push((r, c));
            let mut count = 0;
            let mut bbox = PixelBox {
                col_min: c,
                row_min: r,
                col_max: c,
                row_max: r,
            };
            while let Some((pr, pc)) = stack.pop() {
                count += 1;
                bbox.col_min = bbox.col_min.min(pc);
                bbox.col_max = bbox.col_max.max(pc);
                bbox.row_min = bbox.row_min.min(pr);
                bbox.row_max = bbox.row_max.max(pr);
                for &(dr, dc) in offsets {
                    let nr = pr as isize + dr;
                    let nc = pc as isize + dc;
                    if nr < 0 || nc < 0 || nr >= rows as isize || nc >= cols as isize {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if mask[[nr, nc]] && labels[[nr, nc]] == 0 {
                        labels[[nr, nc]] = id;
                        stack.push((nr, nc));
                    }
                }
            }
            components.push(Component {
                id,
                pixel_count: count,
                bbox,
                label: ComponentLabel::Unlabeled,
                group: None,
                fill_ratio: None,
                mean_amplitude: 0.0,
            });
        }
    }
    (labels, components)
}

/// `mask = amplitude > k_sigma·sigma`, 8-connected components, area metrics.
pub fn classify_threshold(amplitude: &Array2<f64>, k_sigma: f64, sigma: f64) -> Result<ClassificationResult> {
    if !(k_sigma > 0.0) {
        return Err(Error::invalid("k_sigma must be > 0"));
    }
    if !(sigma >= 0.0) {
        return Err(Error::invalid("sigma must be >= 0"));
    }
    let threshold = k_sigma * sigma;
    let mask = amplitude.mapv(|v| v > threshold);
    let (component_map, mut components) = connected_components(&mask, true);
    let mut sums = vec![0.0; components.len()];
    for (&id, &v) in component_map.iter().zip(amplitude.iter()) {
        if id != 0 {
            sums[id as usize - 1] += v;
        }
    }
    for (c, s) in components.iter_mut().zip(sums) {
        c.mean_amplitude = s / c.pixel_count as f64;
    }
    let affected = components.iter().map(|c| c.pixel_count).sum::<usize>();
    let affected_fraction = affected as f64 / mask.len() as f64;
    Ok(ClassificationResult {
        affected_mask: mask,
        component_map,
        threshold_value: threshold,
        noise_sigma_est: sigma,
        noise_floor: 0.0,
        components,
        affected_fraction,
        search_space_reduction: 1.0 - affected_fraction,
        refined_fraction: None,
    })
}

/// Amplitude that a Rayleigh background with per-quadrature sigma `sigma_q`
/// exceeds as rarely as a Gaussian exceeds `k_sigma` standard deviations.
pub fn rayleigh_threshold(sigma_q: f64, k_sigma: f64) -> f64 {
    let tail = 0.5 * libm::erfc(k_sigma / std::f64::consts::SQRT_2);
    sigma_q * (-2.0 * tail.ln()).sqrt()
}

/// Detection on a demodulated amplitude map, whose noise-only pixels are
/// Rayleigh distributed rather than Gaussian.
///
/// The quadrature noise sigma follows from the background median
/// (`median = σ·√(2 ln 2)`); pixels above [`rayleigh_threshold`] are affected.
/// The background is re-estimated twice with the detections excluded.
pub fn detect_affected(amplitude: &Array2<f64>, k_sigma: f64) -> Result<ClassificationResult> {
    if !(k_sigma > 0.0) {
        return Err(Error::invalid("k_sigma must be > 0"));
    }
    let median_to_sigma = 1.0 / (2.0 * std::f64::consts::LN_2).sqrt();
    let mut floor = estimate_noise_floor(amplitude, None)?;
    for _ in 0..2 {
        let thr = rayleigh_threshold(floor * median_to_sigma, k_sigma);
        let background = amplitude.mapv(|v| v <= thr);
        if !background.iter().any(|&b| b) {
            break;
        }
        floor = estimate_noise_floor(amplitude, Some(&background))?;
    }
    let sigma_q = floor * median_to_sigma;
    let threshold = rayleigh_threshold(sigma_q, k_sigma);
    let mut result = classify_threshold(amplitude, 1.0, threshold)?;
    result.noise_sigma_est = sigma_q;
    result.noise_floor = floor;
    Ok(result)
}

/// Summed-area table with a zero guard row and column.
struct Integral {
    sums: Array2<u32>,
    rows: isize,
    cols: isize,
}

impl Integral {
    fn new(mask: &Array2<bool>) -> Self {
        let (rows, cols) = mask.dim();
        let mut sums = Array2::<u32>::zeros((rows + 1, cols + 1));
        for r in 0..rows {
            let mut run = 0;
            for c in 0..cols {
                run += mask[[r, c]] as u32;
                sums[[r + 1, c + 1]] = sums[[r, c + 1]] + run;
            }
        }
        Integral {
            sums,
            rows: rows as isize,
            cols: cols as isize,
        }
    }

    /// True pixels in the window of half-width `radius` centered at `(r, c)`,
    /// clipped to the array.
    fn window(&self, r: isize, c: isize, radius: isize) -> u32 {
        let r0 = (r - radius).clamp(0, self.rows) as usize;
        let r1 = (r + radius + 1).clamp(0, self.rows) as usize;
        let c0 = (c - radius).clamp(0, self.cols) as usize;
        let c1 = (c + radius + 1).clamp(0, self.cols) as usize;
        self.sums[[r1, c1]] + self.sums[[r0, c0]] - self.sums[[r0, c1]] - self.sums[[r1, c0]]
    }
}

fn dilate(mask: &Array2<bool>, radius: isize) -> Array2<bool> {
    let sat = Integral::new(mask);
    Array2::from_shape_fn(mask.dim(), |(r, c)| sat.window(r as isize, c as isize, radius) > 0)
}

/// Pixels whose whole window lies inside the array and inside `mask`.
fn erode(mask: &Array2<bool>, radius: isize) -> Array2<bool> {
    let sat = Integral::new(mask);
    let full = ((2 * radius + 1) * (2 * radius + 1)) as u32;
    Array2::from_shape_fn(mask.dim(), |(r, c)| sat.window(r as isize, c as isize, radius) == full)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextureParams {
    pub window_um: f64,
    pub fill_cutoff: f64,
    pub pitch_um: f64,
}

/// Labels each component supply (solid) or logic (speckled).
///
/// Components closer than one window are merged into a group. Each group is
/// morphologically closed; the fill ratio is the mean fraction of group
/// pixels in windows lying entirely inside the closed outline. Groups too
/// small to hold a window use their own pixel count over the closed area.
pub fn label_texture(
    result: &ClassificationResult,
    amplitude: &Array2<f64>,
    params: &TextureParams,
) -> Result<ClassificationResult> {
    if amplitude.dim() != result.affected_mask.dim() {
        return Err(Error::DimensionMismatch("amplitude map does not match the mask".into()));
    }
    let window_px = (params.window_um / params.pitch_um).round() as usize;
    if window_px < 4 {
        return Err(Error::invalid(format!(
            "texture window of {} µm is {window_px} px across, at least 4 are required",
            params.window_um
        )));
    }
    let radius = (window_px / 2) as isize;
    let (rows, cols) = result.affected_mask.dim();

    let merged = dilate(&result.affected_mask, radius);
    let (group_map, groups) = connected_components(&merged, true);

    // per group: mask pixels and their bounding box
    let mut members: Vec<Vec<(usize, usize)>> = vec![Vec::new(); groups.len()];
    for ((r, c), &m) in result.affected_mask.indexed_iter() {
        if m {
            members[group_map[[r, c]] as usize - 1].push((r, c));
        }
    }

    let mut group_fill = vec![None; groups.len()];
    for (g, pixels) in members.iter().enumerate() {
        if pixels.is_empty() {
            continue;
        }
        group_fill[g] = Some(group_fill_ratio(pixels, radius, rows, cols));
    }

    let mut out = result.clone();
    let mut logic_pixels = 0usize;
    for comp in &mut out.components {
        let (r, c) = (comp.bbox.row_min, comp.bbox.col_min);
        // the bbox corner may be background; find a member pixel
        let g = (r..=comp.bbox.row_max)
            .flat_map(|rr| (comp.bbox.col_min..=comp.bbox.col_max).map(move |cc| (rr, cc)))
            .find(|&(rr, cc)| result.component_map[[rr, cc]] == comp.id)
            .map(|(rr, cc)| group_map[[rr, cc]])
            .unwrap_or(group_map[[r, c]]);
        let fill = group_fill[g as usize - 1].unwrap_or(1.0);
        comp.group = Some(g);
        comp.fill_ratio = Some(fill);
        comp.label = if fill >= params.fill_cutoff {
            ComponentLabel::Supply
        } else {
            logic_pixels += comp.pixel_count;
            ComponentLabel::Logic
        };
    }
    out.refined_fraction = Some(logic_pixels as f64 / (rows * cols) as f64);
    Ok(out)
}

fn group_fill_ratio(pixels: &[(usize, usize)], radius: isize, rows: usize, cols: usize) -> f64 {
    let pad = 2 * radius as usize;
    let r_min = pixels.iter().map(|p| p.0).min().unwrap();
    let r_max = pixels.iter().map(|p| p.0).max().unwrap();
    let c_min = pixels.iter().map(|p| p.1).min().unwrap();
    let c_max = pixels.iter().map(|p| p.1).max().unwrap();
    let (h, w) = (r_max - r_min + 1 + 2 * pad, c_max - c_min + 1 + 2 * pad);
    // local frame: local (i, j) is global (r_min - pad + i, c_min - pad + j)
    let mut local = Array2::from_elem((h, w), false);
    for &(r, c) in pixels {
        local[[r - r_min + pad, c - c_min + pad]] = true;
    }
    let closed = erode(&dilate(&local, radius), radius);
    let interior = erode(&closed, radius);
    let sat = Integral::new(&local);
    let area = ((2 * radius + 1) * (2 * radius + 1)) as f64;

    let mut total = 0.0;
    let mut count = 0usize;
    for ((i, j), &inside) in interior.indexed_iter() {
        if !inside {
            continue;
        }
        let gr = (r_min + i) as isize - pad as isize;
        let gc = (c_min + j) as isize - pad as isize;
        if gr < radius || gc < radius || gr + radius >= rows as isize || gc + radius >= cols as isize {
            continue;
        }
        total += sat.window(i as isize, j as isize, radius) as f64 / area;
        count += 1;
    }
    if count > 0 {
        total / count as f64
    } else {
        let closed_area = closed.iter().filter(|&&b| b).count().max(pixels.len());
        pixels.len() as f64 / closed_area as f64
    }
}

/// Per-pixel rail attribution from co-registered classification masks.
#[derive(Debug, Clone)]
pub struct RailOverlay {
    pub rails: Vec<String>,
    /// Index into `rails`, or `NONE` / `CONFLICT`.
    pub attribution: Array2<i32>,
    pub conflicts: usize,
    pub attributed: usize,
}

impl RailOverlay {
    pub const NONE: i32 = -1;
    pub const CONFLICT: i32 = -2;

    /// Conflicting pixels over all pixels claimed by at least one rail.
    pub fn conflict_fraction(&self) -> f64 {
        let claimed = self.conflicts + self.attributed;
        if claimed == 0 {
            0.0
        } else {
            self.conflicts as f64 / claimed as f64
        }
    }
}

pub fn overlay_rails(results: &[(&str, &ClassificationResult)]) -> Result<RailOverlay> {
    let first = results
        .first()
        .ok_or_else(|| Error::invalid("overlay needs at least one result"))?;
    let shape = first.1.affected_mask.dim();
    let mut attribution = Array2::from_elem(shape, RailOverlay::NONE);
    for (idx, (rail, res)) in results.iter().enumerate() {
        if res.affected_mask.dim() != shape {
            return Err(Error::DimensionMismatch(format!(
                "mask for rail '{rail}' is {:?}, expected {:?}",
                res.affected_mask.dim(),
                shape
            )));
        }
        ndarray::Zip::from(&mut attribution)
            .and(&res.affected_mask)
            .for_each(|a, &m| {
                if m {
                    *a = if *a == RailOverlay::NONE {
                        idx as i32
                    } else {
                        RailOverlay::CONFLICT
                    };
                }
            });
    }
    let conflicts = attribution.iter().filter(|&&a| a == RailOverlay::CONFLICT).count();
    let attributed = attribution.iter().filter(|&&a| a >= 0).count();
    Ok(RailOverlay {
        rails: results.iter().map(|(r, _)| r.to_string()).collect(),
        attribution,
        conflicts,
        attributed,
    })
}

/// Grid-scan budget of a localized fault-injection campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanPlan {
    pub area_width_um: f64,
    pub area_height_um: f64,
    pub step_x_um: f64,
    pub step_y_um: f64,
    pub n_attempts_per_position: u64,
    pub t_attempt_s: f64,
    pub comb_params: u64,
    #[serde(default)]
    pub positions: u64,
    #[serde(default)]
    pub t_scan_s: f64,
}

pub const SECONDS_PER_DAY: f64 = 86_400.0;

impl ScanPlan {
    pub fn new(
        area_width_um: f64,
        area_height_um: f64,
        step_x_um: f64,
        step_y_um: f64,
        n_attempts_per_position: u64,
        t_attempt_s: f64,
        comb_params: u64,
    ) -> Self {
        ScanPlan {
            area_width_um,
            area_height_um,
            step_x_um,
            step_y_um,
            n_attempts_per_position,
            t_attempt_s,
            comb_params,
            positions: 0,
            t_scan_s: 0.0,
        }
    }

    pub fn t_scan_days(&self) -> f64 {
        self.t_scan_s / SECONDS_PER_DAY
    }

    /// Time for a campaign restricted to the affected area.
    pub fn masked_time_s(&self, fraction: f64) -> Result<f64> {
        check_fraction(fraction)?;
        Ok(self.t_scan_s * fraction)
    }

    pub fn masked_speedup(&self, fraction: f64) -> Result<f64> {
        masked_speedup(fraction)
    }
}

fn check_fraction(fraction: f64) -> Result<()> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::UndefinedSpeedup(fraction));
    }
    Ok(())
}

/// `positions = ⌈w/sx⌉·⌈h/sy⌉`, `t_scan = positions · n · t_attempt · comb`.
pub fn scan_time(plan: &ScanPlan) -> Result<ScanPlan> {
    let positive = [
        plan.area_width_um,
        plan.area_height_um,
        plan.step_x_um,
        plan.step_y_um,
        plan.t_attempt_s,
    ];
    if positive.iter().any(|v| !(v.is_finite() && *v > 0.0))
        || plan.n_attempts_per_position == 0
        || plan.comb_params == 0
    {
        return Err(Error::invalid("all scan plan inputs must be > 0"));
    }
    let across = (plan.area_width_um / plan.step_x_um - 1e-9).ceil() as u64;
    let down = (plan.area_height_um / plan.step_y_um - 1e-9).ceil() as u64;
    let positions = across * down;
    let t_scan_s = positions as f64
        * plan.n_attempts_per_position as f64
        * plan.t_attempt_s
        * plan.comb_params as f64;
    Ok(ScanPlan {
        positions,
        t_scan_s,
        ..*plan
    })
}

/// Speed-up of a campaign restricted to `fraction` of the area.
pub fn masked_speedup(fraction: f64) -> Result<f64> {
    check_fraction(fraction)?;
    Ok(1.0 / fraction)
}
