use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use railscope::config::{AnalysisParams, PipelineConfig, Technique};
use railscope::optical::Magnification;
use railscope::pipeline::{self, plan_report};
use railscope::{Error, Floorplan, Result, ScanPlan};

#[derive(Parser)]
#[command(name = "railscope", version, about = "Per-rail modulation imaging of synthetic dies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an acquisition and write frames or tiles plus an index.
    Simulate(SimulateArgs),
    /// Demodulate, classify and report on a simulation directory.
    Analyze(AnalyzeArgs),
    /// Estimate the time of a grid-scanning fault-injection campaign.
    Plan(PlanArgs),
    /// Stitch a tile directory into one amplitude map.
    Stitch(StitchArgs),
    /// Parse a floorplan and print its rail footprints.
    ValidateFloorplan(ValidateArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// Scan configuration file; explicit flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    floorplan: Option<PathBuf>,
    #[arg(long)]
    technique: Option<Technique>,
    #[arg(long)]
    rail: Option<String>,
    #[arg(long, short)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n_frames: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    noise_sigma: Option<f64>,
    /// Skip writing the raw frame stack (thermography).
    #[arg(long)]
    no_frames: bool,
    #[arg(long, value_parser = parse_magnification)]
    magnification: Option<Magnification>,
    #[arg(long)]
    dwell_samples: Option<u32>,
    #[arg(long)]
    overlap: Option<f64>,
}

#[derive(Args, Clone, Copy)]
struct AnalysisFlags {
    #[arg(long)]
    k_sigma: Option<f64>,
    #[arg(long)]
    window_um: Option<f64>,
    #[arg(long)]
    fill_cutoff: Option<f64>,
    #[arg(long)]
    strong_sigma: Option<f64>,
}

impl AnalysisFlags {
    fn apply(&self, params: &mut AnalysisParams) {
        if let Some(v) = self.k_sigma {
            params.k_sigma = v;
        }
        if let Some(v) = self.window_um {
            params.window_um = v;
        }
        if let Some(v) = self.fill_cutoff {
            params.fill_cutoff = v;
        }
        if let Some(v) = self.strong_sigma {
            params.strong_sigma = v;
        }
    }
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Directory written by `simulate`.
    input: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
    #[command(flatten)]
    analysis: AnalysisFlags,
}

#[derive(Args)]
struct PlanArgs {
    #[arg(long, default_value_t = 8000.0)]
    width_um: f64,
    #[arg(long, default_value_t = 12000.0)]
    height_um: f64,
    #[arg(long, default_value_t = 1.0)]
    step_x_um: f64,
    #[arg(long, default_value_t = 1.0)]
    step_y_um: f64,
    #[arg(long, default_value_t = 1)]
    attempts: u64,
    #[arg(long, default_value_t = 0.1)]
    t_attempt_s: f64,
    #[arg(long, default_value_t = 1)]
    comb: u64,
    /// 0/1 mask map restricting the campaign to its affected area.
    #[arg(long)]
    mask: Option<PathBuf>,
    /// Affected fraction restricting the campaign, instead of a mask.
    #[arg(long, conflicts_with = "mask")]
    fraction: Option<f64>,
    /// Also write the report to this file.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct StitchArgs {
    /// Tile directory holding tiles.toml.
    tiles: PathBuf,
    #[arg(long, short)]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    floorplan: PathBuf,
}

fn parse_magnification(s: &str) -> std::result::Result<Magnification, String> {
    let digits = s.trim_end_matches(['x', 'X']);
    let v: u32 = digits.parse().map_err(|_| format!("invalid magnification '{s}'"))?;
    Magnification::try_from(v)
}

fn simulate_config(args: &SimulateArgs) -> Result<PipelineConfig> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_path(path)?,
        None => {
            let missing = |what: &str| Error::InvalidArgument(format!("--{what} is required without --config"));
            PipelineConfig::new(
                args.floorplan.clone().ok_or_else(|| missing("floorplan"))?,
                args.technique.ok_or_else(|| missing("technique"))?,
                args.rail.clone().ok_or_else(|| missing("rail"))?,
            )
        }
    };
    if let Some(v) = &args.floorplan {
        cfg.floorplan = v.clone();
    }
    if let Some(v) = args.technique {
        cfg.technique = v;
    }
    if let Some(v) = &args.rail {
        cfg.rail_id = v.clone();
    }
    if let Some(v) = &args.out {
        cfg.output = v.clone();
    }
    if let Some(v) = args.seed {
        cfg.lit.seed = v;
        cfg.llsi.seed = v;
    }
    if let Some(v) = args.n_frames {
        cfg.lit.n_frames = v;
    }
    if let Some(v) = args.fps {
        cfg.lit.fps = v;
    }
    if let Some(v) = args.noise_sigma {
        cfg.lit.noise_sigma = v;
        cfg.llsi.noise_sigma = v;
    }
    if args.no_frames {
        cfg.lit.save_frames = false;
    }
    if let Some(v) = args.magnification {
        cfg.llsi.magnification = v;
        cfg.llsi.lens = None;
    }
    if let Some(v) = args.dwell_samples {
        cfg.llsi.dwell_samples = v;
    }
    if let Some(v) = args.overlap {
        cfg.llsi.overlap = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate(args) => {
            let cfg = simulate_config(&args)?;
            let index = pipeline::simulate(&cfg)?;
            println!(
                "{} simulation of rail '{}' ({}x{} px) written to {}",
                index.technique.as_str(),
                index.rail_id,
                index.raster_width,
                index.raster_height,
                cfg.output.display()
            );
            if let Some(n) = index.n_tiles {
                println!("tiles: {n}");
            }
            if let Some(p) = index.periods_integrated {
                println!("periods integrated: {p}");
            }
        }
        Command::Analyze(args) => {
            let index = pipeline::SimulationIndex::read(&args.input)?;
            let mut params = index.config.analysis;
            args.analysis.apply(&mut params);
            let r = pipeline::analyze(&args.input, Some(params), Some(&args.out))?.report;
            println!("affected_fraction = {:.4}", r.affected_fraction);
            println!("search_space_reduction = {:.4}", r.search_space_reduction);
            println!("refined_fraction = {:.4}", r.refined_fraction);
            println!("components = {}", r.n_components);
            if let Some(t) = r.ground_truth {
                println!("ground_truth_iou = {:.4}", t.iou);
                println!("false_positive_rate = {:.5}", t.false_positive_rate);
            }
        }
        Command::Plan(args) => {
            let plan = ScanPlan::new(
                args.width_um,
                args.height_um,
                args.step_x_um,
                args.step_y_um,
                args.attempts,
                args.t_attempt_s,
                args.comb,
            );
            let fraction = match &args.mask {
                Some(path) => Some(pipeline::mask_fraction(path)?),
                None => args.fraction,
            };
            let report = plan_report(&plan, fraction)?;
            let text = report.to_toml();
            if let Some(out) = &args.out {
                std::fs::write(out, &text).map_err(|e| Error::Io {
                    path: out.display().to_string(),
                    source: e,
                })?;
            }
            print!("{text}");
        }
        Command::Stitch(args) => {
            let map = pipeline::stitch_dir(&args.tiles, &args.out)?;
            let (rows, cols) = map.amplitude.dim();
            println!("stitched {cols}x{rows} px into {}", args.out.display());
        }
        Command::ValidateFloorplan(args) => {
            let fp = Floorplan::from_path(&args.floorplan)?;
            let (rows, cols) = fp.shape();
            println!(
                "die {} x {} µm, pitch {} µm, raster {cols}x{rows}",
                fp.die.width_um, fp.die.height_um, fp.die.grid_pitch_um
            );
            for rail in &fp.rails {
                println!(
                    "rail {:<12} {:>6.3} V  footprint {:.4}",
                    rail.id,
                    rail.nominal_voltage_v,
                    fp.footprint_fraction(&rail.id)?
                );
            }
            for (region, px) in fp.regions.iter().zip(fp.region_footprint_pixels()) {
                println!(
                    "region {:<14} rail {:<12} {:?} {px} px",
                    region.name.as_deref().unwrap_or("-"),
                    region.rail_id,
                    region.kind
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
