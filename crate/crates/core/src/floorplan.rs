//! Synthetic die description: geometry, isolated voltage rails, the regions
//! each rail powers, and the static emissivity pattern.
//!
//! All maps in the crate share one raster convention: origin top-left,
//! row-major `[row, col]` indexing, x to the right, y downward, lengths in µm.
//! A pixel belongs to a shape when its center lies inside the shape.

use std::collections::HashSet;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hash::{mix64, unit_f64};

const NO_REGION: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Die {
    pub width_um: f64,
    pub height_um: f64,
    pub grid_pitch_um: f64,
}

impl Die {
    pub fn cols(&self) -> usize {
        (self.width_um / self.grid_pitch_um - 1e-9).ceil() as usize
    }

    pub fn rows(&self) -> usize {
        (self.height_um / self.grid_pitch_um - 1e-9).ceil() as usize
    }

    /// Raster shape as `(rows, cols)`.
    pub fn shape(&self) -> (usize, usize) {
        (self.rows(), self.cols())
    }

    pub fn area_um2(&self) -> f64 {
        self.width_um * self.height_um
    }

    /// Center of pixel `(row, col)` in µm.
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.grid_pitch_um,
            (row as f64 + 0.5) * self.grid_pitch_um,
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("width_um", self.width_um),
            ("height_um", self.height_um),
            ("grid_pitch_um", self.grid_pitch_um),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::validation(format!("die.{name}"), "must be > 0"));
            }
        }
        let (rows, cols) = self.shape();
        if rows < 8 || cols < 8 {
            return Err(Error::validation(
                "die",
                format!("raster is {cols}x{rows} pixels, at least 8x8 is required"),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rail {
    pub id: String,
    pub name: String,
    pub nominal_voltage_v: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegionKind {
    Supply,
    Logic,
}

/// Region outline in µm. Polygons use even-odd fill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum Shape {
    Rect {
        x_um: f64,
        y_um: f64,
        width_um: f64,
        height_um: f64,
    },
    Polygon {
        points_um: Vec<[f64; 2]>,
    },
}

impl Shape {
    /// `(x_min, y_min, x_max, y_max)` in µm.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        match self {
            Shape::Rect {
                x_um,
                y_um,
                width_um,
                height_um,
            } => (*x_um, *y_um, x_um + width_um, y_um + height_um),
            Shape::Polygon { points_um } => points_um.iter().fold(
                (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
                |(a, b, c, d), p| (a.min(p[0]), b.min(p[1]), c.max(p[0]), d.max(p[1])),
            ),
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        match self {
            Shape::Rect {
                x_um,
                y_um,
                width_um,
                height_um,
            } => x >= *x_um && x < x_um + width_um && y >= *y_um && y < y_um + height_um,
            Shape::Polygon { points_um } => {
                let n = points_um.len();
                let mut inside = false;
                let mut j = n - 1;
                for i in 0..n {
                    let [xi, yi] = points_um[i];
                    let [xj, yj] = points_um[j];
                    if (yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi {
                        inside = !inside;
                    }
                    j = i;
                }
                inside
            }
        }
    }

    fn validate(&self, element: &str, die: &Die) -> Result<()> {
        const EPS: f64 = 1e-9;
        if let Shape::Rect {
            width_um, height_um, ..
        } = self
        {
            if !(*width_um > 0.0 && *height_um > 0.0) {
                return Err(Error::validation(element, "rectangle must have positive size"));
            }
        }
        if let Shape::Polygon { points_um } = self {
            if points_um.len() < 3 {
                return Err(Error::validation(element, "polygon needs at least 3 points"));
            }
        }
        let (x0, y0, x1, y1) = self.bounds();
        if ![x0, y0, x1, y1].iter().all(|v| v.is_finite()) {
            return Err(Error::validation(element, "non-finite coordinate"));
        }
        if x0 < -EPS || y0 < -EPS || x1 > die.width_um + EPS || y1 > die.height_um + EPS {
            return Err(Error::validation(
                element,
                format!(
                    "shape [{x0}, {y0}]..[{x1}, {y1}] µm extends outside the {}x{} µm die",
                    die.width_um, die.height_um
                ),
            ));
        }
        Ok(())
    }
}

fn default_fill() -> f64 {
    1.0
}

fn default_speckle_pitch() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Region {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub rail_id: String,
    pub kind: RegionKind,
    pub shape: Shape,
    pub power_density_uw_per_um2: f64,
    pub reflect_sensitivity: f64,
    #[serde(default = "default_fill")]
    pub speckle_fill: f64,
    #[serde(default = "default_speckle_pitch")]
    pub speckle_pitch_um: f64,
}

impl Region {
    /// Occupied-cell probability; supply regions are always solid.
    pub fn effective_fill(&self) -> f64 {
        match self.kind {
            RegionKind::Supply => 1.0,
            RegionKind::Logic => self.speckle_fill,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialParams {
    /// Effective thermal diffusivity α in µm²/s.
    pub diffusivity_um2_per_s: f64,
    pub emissivity_contrast: f64,
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams {
            diffusivity_um2_per_s: 1400.0,
            emissivity_contrast: 0.3,
        }
    }
}

impl MaterialParams {
    /// Thermal diffusion length µ(f) = sqrt(α / (π f)) in µm.
    pub fn diffusion_length_um(&self, frequency_hz: f64) -> f64 {
        (self.diffusivity_um2_per_s / (std::f64::consts::PI * frequency_hz)).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if !(self.diffusivity_um2_per_s.is_finite() && self.diffusivity_um2_per_s > 0.0) {
            return Err(Error::validation(
                "material.diffusivity_um2_per_s",
                "must be > 0",
            ));
        }
        if !(0.0..=1.0).contains(&self.emissivity_contrast) {
            return Err(Error::validation(
                "material.emissivity_contrast",
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// On-disk layout of a floorplan document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FloorplanDoc {
    #[serde(default)]
    emissivity_map_seed: u64,
    die: Die,
    #[serde(default)]
    material: MaterialParams,
    rails: Vec<Rail>,
    #[serde(default)]
    regions: Vec<Region>,
}

/// Pixel ownership computed once at construction.
#[derive(Debug, Clone)]
struct Raster {
    /// First region whose shape contains the pixel center, or `NO_REGION`.
    owner: Array2<u32>,
    /// Pixel lies in an occupied speckle cell of some containing region.
    occupied: Array2<bool>,
}

/// A validated synthetic die. Immutable once built.
#[derive(Debug, Clone)]
pub struct Floorplan {
    pub die: Die,
    pub rails: Vec<Rail>,
    pub regions: Vec<Region>,
    pub emissivity_map_seed: u64,
    pub material: MaterialParams,
    raster: Raster,
}

impl Floorplan {
    pub fn new(
        die: Die,
        rails: Vec<Rail>,
        regions: Vec<Region>,
        emissivity_map_seed: u64,
        material: MaterialParams,
    ) -> Result<Self> {
        die.validate()?;
        material.validate()?;

        let mut seen = HashSet::new();
        for (i, rail) in rails.iter().enumerate() {
            let element = format!("rails[{i}] ('{}')", rail.id);
            if !seen.insert(rail.id.as_str()) {
                return Err(Error::validation(element, "duplicate rail id"));
            }
            if !(rail.nominal_voltage_v.is_finite() && rail.nominal_voltage_v > 0.0) {
                return Err(Error::validation(element, "nominal_voltage_v must be > 0"));
            }
        }

        for (i, region) in regions.iter().enumerate() {
            let element = region_element(i, region);
            if !seen.contains(region.rail_id.as_str()) {
                return Err(Error::validation(
                    element,
                    format!("rail_id '{}' is not declared", region.rail_id),
                ));
            }
            region.shape.validate(&element, &die)?;
            if !(region.power_density_uw_per_um2 >= 0.0) {
                return Err(Error::validation(element, "power_density_uw_per_um2 must be >= 0"));
            }
            if !(region.reflect_sensitivity >= 0.0) {
                return Err(Error::validation(element, "reflect_sensitivity must be >= 0"));
            }
            if region.kind == RegionKind::Logic {
                if !(region.speckle_fill > 0.0 && region.speckle_fill <= 1.0) {
                    return Err(Error::validation(element, "speckle_fill must lie in (0, 1]"));
                }
                if !(region.speckle_pitch_um > 0.0) {
                    return Err(Error::validation(element, "speckle_pitch_um must be > 0"));
                }
            }
        }

        let raster = rasterize(&die, &regions, emissivity_map_seed)?;
        Ok(Floorplan {
            die,
            rails,
            regions,
            emissivity_map_seed,
            material,
            raster,
        })
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_floorplan(&text)
    }

    /// Serializes back to the floorplan document format.
    pub fn to_toml(&self) -> String {
        let doc = FloorplanDoc {
            emissivity_map_seed: self.emissivity_map_seed,
            die: self.die,
            material: self.material,
            rails: self.rails.clone(),
            regions: self.regions.clone(),
        };
        toml::to_string(&doc).expect("floorplan document always serializes")
    }

    pub fn rail(&self, rail_id: &str) -> Result<&Rail> {
        self.rails
            .iter()
            .find(|r| r.id == rail_id)
            .ok_or_else(|| self.unknown_rail(rail_id))
    }

    pub(crate) fn unknown_rail(&self, rail_id: &str) -> Error {
        Error::UnknownRail {
            rail: rail_id.to_string(),
            valid: self.rails.iter().map(|r| r.id.clone()).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.die.shape()
    }

    /// Region owning pixel `(row, col)`: first region whose shape contains it.
    pub fn region_at(&self, row: usize, col: usize) -> Option<&Region> {
        match self.raster.owner[[row, col]] {
            NO_REGION => None,
            i => Some(&self.regions[i as usize]),
        }
    }

    /// Index of the owning region, if the pixel is part of a rail footprint.
    pub(crate) fn footprint_region(&self, row: usize, col: usize) -> Option<usize> {
        let owner = self.raster.owner[[row, col]];
        (owner != NO_REGION && self.raster.occupied[[row, col]]).then_some(owner as usize)
    }

    /// Per-pixel map of a region property over the footprint of `rail_id`;
    /// zero elsewhere.
    pub(crate) fn footprint_values(
        &self,
        rail_id: &str,
        value: impl Fn(&Region) -> f64,
    ) -> Result<Array2<f64>> {
        self.rail(rail_id)?;
        let (rows, cols) = self.shape();
        Ok(Array2::from_shape_fn((rows, cols), |(r, c)| {
            match self.footprint_region(r, c) {
                Some(i) if self.regions[i].rail_id == rail_id => value(&self.regions[i]),
                _ => 0.0,
            }
        }))
    }

    pub fn rasterize_rail_footprint(&self, rail_id: &str) -> Result<Array2<bool>> {
        self.rail(rail_id)?;
        let (rows, cols) = self.shape();
        Ok(Array2::from_shape_fn((rows, cols), |(r, c)| {
            self.footprint_region(r, c)
                .is_some_and(|i| self.regions[i].rail_id == rail_id)
        }))
    }

    /// Fraction of die pixels in the rail footprint.
    pub fn footprint_fraction(&self, rail_id: &str) -> Result<f64> {
        let fp = self.rasterize_rail_footprint(rail_id)?;
        Ok(fp.iter().filter(|&&b| b).count() as f64 / fp.len() as f64)
    }

    /// Footprint pixel count of every region, in declaration order.
    pub fn region_footprint_pixels(&self) -> Vec<usize> {
        let mut counts = vec![0; self.regions.len()];
        let (rows, cols) = self.shape();
        for r in 0..rows {
            for c in 0..cols {
                if let Some(i) = self.footprint_region(r, c) {
                    counts[i] += 1;
                }
            }
        }
        counts
    }

    pub fn render_emissivity_map(&self) -> Array2<f64> {
        render_emissivity(self)
    }
}

fn region_element(index: usize, region: &Region) -> String {
    match &region.name {
        Some(name) => format!("regions[{index}] ('{name}')"),
        None => format!("regions[{index}]"),
    }
}

pub fn parse_floorplan(text: &str) -> Result<Floorplan> {
    let doc: FloorplanDoc = toml::from_str(text).map_err(|e| Error::Syntax(e.to_string()))?;
    Floorplan::new(
        doc.die,
        doc.rails,
        doc.regions,
        doc.emissivity_map_seed,
        doc.material,
    )
}

/// Seed for the speckle generator of one region.
pub(crate) fn region_seed(emissivity_map_seed: u64, region_index: usize) -> u64 {
    mix64(emissivity_map_seed ^ mix64(region_index as u64 + 0x5eed))
}

/// Uniform draw in `[0, 1)` for speckle cell `(cx, cy)` of a region. A cell is
/// occupied when the draw is below the fill, which makes occupancy monotone in
/// the fill for a fixed seed.
pub fn speckle_draw(seed: u64, cx: i64, cy: i64) -> f64 {
    unit_f64(mix64(seed ^ mix64((cx as u64).wrapping_mul(0x9e37_79b9) ^ (cy as u64).rotate_left(32))))
}

fn speckle_occupied(region: &Region, seed: u64, x: f64, y: f64) -> bool {
    if region.kind == RegionKind::Supply || region.speckle_fill >= 1.0 {
        return true;
    }
    let (x0, y0, _, _) = region.shape.bounds();
    let cx = ((x - x0) / region.speckle_pitch_um).floor() as i64;
    let cy = ((y - y0) / region.speckle_pitch_um).floor() as i64;
    speckle_draw(seed, cx, cy) < region.speckle_fill
}

/// Pixel index range `[start, end)` whose centers fall in `[lo, hi)`.
fn pixel_span(lo: f64, hi: f64, pitch: f64, n: usize) -> (usize, usize) {
    let start = (lo / pitch - 0.5 - 1e-9).ceil().max(0.0) as usize;
    let end = (hi / pitch - 0.5 - 1e-9).ceil().max(0.0) as usize;
    (start.min(n), end.min(n))
}

fn rasterize(die: &Die, regions: &[Region], seed: u64) -> Result<Raster> {
    let (rows, cols) = die.shape();
    let pitch = die.grid_pitch_um;
    let mut owner = Array2::from_elem((rows, cols), NO_REGION);
    let mut occupied = Array2::from_elem((rows, cols), false);

    for (i, region) in regions.iter().enumerate() {
        let rseed = region_seed(seed, i);
        let (x0, y0, x1, y1) = region.shape.bounds();
        let (c0, c1) = pixel_span(x0, x1, pitch, cols);
        let (r0, r1) = pixel_span(y0, y1, pitch, rows);
        for r in r0..r1 {
            for c in c0..c1 {
                let (x, y) = die.pixel_center(r, c);
                if !region.shape.contains(x, y) {
                    continue;
                }
                let current = owner[[r, c]];
                if current == NO_REGION {
                    owner[[r, c]] = i as u32;
                } else if regions[current as usize].rail_id != region.rail_id {
                    let other = &regions[current as usize];
                    return Err(Error::validation(
                        region_element(i, region),
                        format!(
                            "overlaps {} of rail '{}' at pixel ({c}, {r})",
                            region_element(current as usize, other),
                            other.rail_id
                        ),
                    ));
                }
                if !occupied[[r, c]] && speckle_occupied(region, rseed, x, y) {
                    occupied[[r, c]] = true;
                }
            }
        }
    }
    Ok(Raster { owner, occupied })
}

const TEXTURE_PITCH_PX: usize = 6;

fn render_emissivity(fp: &Floorplan) -> Array2<f64> {
    let (rows, cols) = fp.shape();
    let contrast = fp.material.emissivity_contrast;
    if contrast == 0.0 {
        return Array2::from_elem((rows, cols), 1.0);
    }
    let seed = fp.emissivity_map_seed;
    let background = unit_f64(mix64(seed ^ 0xb4c6_0e1d));
    let base: Vec<f64> = (0..fp.regions.len())
        .map(|i| 0.15 + 0.7 * unit_f64(mix64(region_seed(seed, i) ^ 0xe111)))
        .collect();

    // bilinear value noise on a coarse lattice
    let lattice = |lx: usize, ly: usize| {
        unit_f64(mix64(seed ^ mix64(((lx as u64) << 32) | ly as u64 ^ 0x7e47)))
    };
    Array2::from_shape_fn((rows, cols), |(r, c)| {
        let fx = c as f64 / TEXTURE_PITCH_PX as f64;
        let fy = r as f64 / TEXTURE_PITCH_PX as f64;
        let (lx, ly) = (fx.floor() as usize, fy.floor() as usize);
        let (tx, ty) = (fx - lx as f64, fy - ly as f64);
        let top = lattice(lx, ly) * (1.0 - tx) + lattice(lx + 1, ly) * tx;
        let bottom = lattice(lx, ly + 1) * (1.0 - tx) + lattice(lx + 1, ly + 1) * tx;
        let texture = top * (1.0 - ty) + bottom * ty;
        let b = match fp.raster.owner[[r, c]] {
            NO_REGION => background,
            i => base[i as usize],
        };
        let t = (0.6 * b + 0.4 * texture).clamp(0.0, 1.0);
        1.0 - contrast * t
    })
}
