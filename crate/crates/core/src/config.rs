//! Scan configuration documents for the simulate/analyze pipelines.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optical::{AcquireParams, LensSpec, Magnification};
use crate::stimulus::{ModulationSpec, Waveform};
use crate::thermal::RenderParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Technique {
    Lit,
    Llsi,
}

impl Technique {
    pub fn as_str(self) -> &'static str {
        match self {
            Technique::Lit => "lit",
            Technique::Llsi => "llsi",
        }
    }
}

impl std::str::FromStr for Technique {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lit" => Ok(Technique::Lit),
            "llsi" => Ok(Technique::Llsi),
            _ => Err(Error::invalid(format!("unknown technique '{s}', expected lit or llsi"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LitAcquisition {
    pub n_frames: usize,
    pub fps: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    /// Radiance of the unmodulated die in detector units.
    pub dc_background: f64,
    /// Temperature amplitude per unit dissipated power density, µK per µW/µm².
    pub gain: f64,
    /// Allowed stimulus band for thermography.
    pub min_frequency_hz: f64,
    pub max_frequency_hz: f64,
    /// Also write the raw frame stack next to the demodulated maps.
    pub save_frames: bool,
}

impl Default for LitAcquisition {
    fn default() -> Self {
        let r = RenderParams::default();
        LitAcquisition {
            n_frames: r.n_frames,
            fps: r.fps,
            noise_sigma: r.noise_sigma,
            seed: r.seed,
            dc_background: r.dc_background,
            gain: 1.0,
            min_frequency_hz: 1.0,
            max_frequency_hz: 100.0,
            save_frames: true,
        }
    }
}

impl LitAcquisition {
    pub fn render_params(&self) -> RenderParams {
        RenderParams {
            n_frames: self.n_frames,
            fps: self.fps,
            noise_sigma: self.noise_sigma,
            seed: self.seed,
            dc_background: self.dc_background,
            t0: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LlsiAcquisition {
    pub magnification: Magnification,
    /// Replaces the magnification preset when given.
    pub lens: Option<LensSpec>,
    pub dwell_samples: u32,
    pub overlap: f64,
    pub noise_sigma: f64,
    pub laser_dc: f64,
    pub sample_period_s: f64,
    pub seed: u64,
}

impl Default for LlsiAcquisition {
    fn default() -> Self {
        let a = AcquireParams::default();
        LlsiAcquisition {
            magnification: Magnification::X20,
            lens: None,
            dwell_samples: a.dwell_samples,
            overlap: 0.1,
            noise_sigma: a.noise_sigma,
            laser_dc: a.laser_dc,
            sample_period_s: a.sample_period_s,
            seed: a.seed,
        }
    }
}

impl LlsiAcquisition {
    pub fn lens_spec(&self) -> LensSpec {
        self.lens.unwrap_or_else(|| LensSpec::preset(self.magnification))
    }

    pub fn acquire_params(&self, seed: u64) -> AcquireParams {
        AcquireParams {
            dwell_samples: self.dwell_samples,
            noise_sigma: self.noise_sigma,
            laser_dc: self.laser_dc,
            sample_period_s: self.sample_period_s,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisParams {
    pub k_sigma: f64,
    pub window_um: f64,
    pub fill_cutoff: f64,
    /// Sigma multiple above which affected pixels count as strong.
    pub strong_sigma: f64,
}

impl Default for AnalysisParams {
    fn default() -> Self {
        AnalysisParams {
            k_sigma: 3.0,
            window_um: 25.0,
            fill_cutoff: 0.9,
            strong_sigma: 6.0,
        }
    }
}

impl AnalysisParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.k_sigma > 0.0) {
            return Err(Error::validation("analysis.k_sigma", "must be > 0"));
        }
        if !(self.window_um > 0.0) {
            return Err(Error::validation("analysis.window_um", "must be > 0"));
        }
        if !(0.0..=1.0).contains(&self.fill_cutoff) {
            return Err(Error::validation("analysis.fill_cutoff", "must lie in [0, 1]"));
        }
        if !(self.strong_sigma >= self.k_sigma) {
            return Err(Error::validation("analysis.strong_sigma", "must be >= k_sigma"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub floorplan: PathBuf,
    pub technique: Technique,
    pub rail_id: String,
    /// Defaults to the technique's standard stimulus.
    #[serde(default)]
    pub modulation: Option<ModulationSpec>,
    #[serde(default)]
    pub lit: LitAcquisition,
    #[serde(default)]
    pub llsi: LlsiAcquisition,
    #[serde(default)]
    pub analysis: AnalysisParams,
    #[serde(default = "default_output")]
    pub output: PathBuf,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl PipelineConfig {
    pub fn new(floorplan: impl Into<PathBuf>, technique: Technique, rail_id: impl Into<String>) -> Self {
        PipelineConfig {
            floorplan: floorplan.into(),
            technique,
            rail_id: rail_id.into(),
            modulation: None,
            lit: LitAcquisition::default(),
            llsi: LlsiAcquisition::default(),
            analysis: AnalysisParams::default(),
            output: default_output(),
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Syntax(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file; relative paths inside it resolve against its
    /// directory.
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        if cfg.floorplan.is_relative() {
            cfg.floorplan = base.join(&cfg.floorplan);
        }
        if cfg.output.is_relative() {
            cfg.output = base.join(&cfg.output);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn modulation_spec(&self) -> ModulationSpec {
        self.modulation.unwrap_or_else(|| match self.technique {
            Technique::Lit => ModulationSpec::lit_default(),
            Technique::Llsi => ModulationSpec::llsi_default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        let spec = self.modulation_spec();
        spec.validate()?;
        match self.technique {
            Technique::Lit => {
                if spec.waveform != Waveform::Square {
                    return Err(Error::UnsupportedStimulus(
                        "thermography expects a square-wave modulation".into(),
                    ));
                }
                let (lo, hi) = (self.lit.min_frequency_hz, self.lit.max_frequency_hz);
                if !(spec.frequency_hz >= lo && spec.frequency_hz <= hi) {
                    return Err(Error::UnsupportedStimulus(format!(
                        "thermography frequency {} Hz lies outside the {lo}–{hi} Hz band",
                        spec.frequency_hz
                    )));
                }
                if !(self.lit.gain > 0.0) {
                    return Err(Error::validation("lit.gain", "must be > 0"));
                }
            }
            Technique::Llsi => {
                if spec.waveform != Waveform::Sine {
                    return Err(Error::UnsupportedStimulus(
                        "reflectance imaging expects a sine modulation".into(),
                    ));
                }
                self.llsi.lens_spec().validate()?;
            }
        }
        self.analysis.validate()
    }
}
