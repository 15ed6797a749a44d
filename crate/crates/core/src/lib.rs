//! Simulation and analysis of power-rail side-channel imaging: lock-in
//! thermography of supply-voltage modulation and laser logic-state imaging of
//! reflectivity modulation, plus the evaluation chain that turns demodulated
//! amplitude maps into rail masks and attack search-space estimates.

pub mod analysis;
pub mod config;
pub mod error;
pub mod export;
pub mod floorplan;
pub mod frames;
pub mod hash;
pub mod lockin;
pub mod optical;
pub mod pipeline;
pub mod stimulus;
pub mod thermal;

pub use analysis::{
    classify_threshold, connected_components, detect_affected, estimate_noise_sigma, label_texture,
    masked_speedup, overlay_rails, scan_time, ClassificationResult, Component, ComponentLabel,
    RailOverlay, ScanPlan, TextureParams,
};
pub use config::{AnalysisParams, LitAcquisition, LlsiAcquisition, PipelineConfig, Technique};
pub use error::{Error, PixelBox, Result};
pub use floorplan::{parse_floorplan, Die, Floorplan, MaterialParams, Rail, Region, RegionKind, Shape};
pub use frames::FrameStack;
pub use lockin::{eofm_point_filter, lockin_demodulate, snr_gain, BandFilterSpec, LockInAccumulator, LockInResult};
pub use optical::{
    acquire_tile, modulation_depth_map, plan_tiles, stitch_tiles, AcquireParams, LensSpec, Magnification,
    ModulationDepthMap, StitchedMap, TileOrigin, TileScan,
};
pub use stimulus::{power_waveform, sample_waveform, ModulationSpec, Waveform};
pub use thermal::{build_power_map, render_ir_frames, thermal_response, IrFrameSource, PowerMap, RenderParams, ThermalResponse};
