//! `vamct`: deterministic parallel-beam tomography pipelines. Phantom
//! synthesis, projection, motion injection, fixed-point tracking, virtual
//! alignment, filtered back-projection and sub-pixel metrology, with a
//! content-hash manifest written for every run.

mod commands;
mod config;
mod outdir;

use std::path::PathBuf;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use commands::*;
use config::Config;
use outdir::OutDir;
use vamct_core::align::AlignMode;
use vamct_core::motion::MotionMode;
use vamct_core::recon::FilterKind;
use vamct_core::tracker::TrackMethod;

#[derive(Parser)]
#[command(name = "vamct", version, about = "Parallel-beam tomography toolkit with virtual alignment")]
struct Cli {
    /// Worker threads (0 = auto); VAMCT_THREADS is the fallback.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// TOML file supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rasterize a phantom spec into a VAMV volume (optionally with an
    /// analytic oracle sinogram of one slice).
    Phantom(PhantomArgs),
    /// Forward-project a volume into a VAMP set (or one slice into a VAMS),
    /// optionally simulating raw frames with flat/dark profiles.
    Project(ProjectArgs),
    /// Inject per-projection rigid-motion errors from a seeded schedule.
    Perturb(PerturbArgs),
    /// Track a fixed point across all projections into a CSV.
    Track(TrackArgs),
    /// Apply the virtual alignment method and write the aligned set.
    Align(AlignArgs),
    /// Filtered back-projection of a projection set or sinogram.
    Reconstruct(ReconstructArgs),
    /// Flat-field correction of raw frames (optionally to attenuation).
    Flatfield(FlatfieldArgs),
    /// Segment a volume, measure max extents on both grids, compare.
    Measure(MeasureArgs),
    /// Compare two sinograms or two volumes (optionally registered).
    Compare(CompareArgs),
    /// Self-contained end-to-end scenario emitting before/after sinogram and
    /// reconstruction graymaps plus alignment reports.
    Demo(DemoArgs),
}

#[derive(Args)]
struct AngleArgs {
    /// First projection angle in degrees.
    #[arg(long)]
    angle_start: Option<f64>,
    /// Angular step in degrees.
    #[arg(long)]
    angle_step: Option<f64>,
    /// Number of projections.
    #[arg(long)]
    angle_count: Option<usize>,
}

impl AngleArgs {
    fn resolve(&self, cfg: &Config) -> AngleParams {
        AngleParams {
            start: self.angle_start.or(cfg.angles.start).unwrap_or(0.0),
            step: self.angle_step.or(cfg.angles.step).unwrap_or(0.5),
            count: self.angle_count.or(cfg.angles.count).unwrap_or(360),
        }
    }
}

#[derive(Args)]
struct TrackerArgs {
    /// Fixed-point detector: apex, centroid or marker.
    #[arg(long)]
    method: Option<String>,
    /// Background threshold (default: 5% of each frame's maximum).
    #[arg(long)]
    tau_bg: Option<f64>,
    /// Window side for the marker centroid.
    #[arg(long)]
    marker_window: Option<usize>,
}

impl TrackerArgs {
    fn resolve(&self, cfg: &Config, default_method: Option<&str>) -> Result<TrackerOpts> {
        let name = self
            .method
            .clone()
            .or_else(|| cfg.tracker.method.clone())
            .or_else(|| default_method.map(str::to_string))
            .ok_or_else(|| anyhow!("--method is required (apex, centroid or marker)"))?;
        Ok(TrackerOpts {
            method: TrackMethod::from_str(&name)?,
            tau_bg: self.tau_bg.or(cfg.tracker.tau_bg),
            marker_window: self.marker_window.or(cfg.tracker.marker_window).unwrap_or(9),
        })
    }
}

#[derive(Args)]
struct FilterArgs {
    /// Reconstruction filter: ram-lak, shepp-logan or hann.
    #[arg(long)]
    filter: Option<String>,
    /// Filter cutoff as a fraction of Nyquist, in (0, 1].
    #[arg(long)]
    cutoff: Option<f64>,
}

impl FilterArgs {
    fn resolve(&self, cfg: &Config) -> Result<(FilterKind, f64)> {
        let name = self
            .filter
            .clone()
            .or_else(|| cfg.recon.filter.clone())
            .unwrap_or_else(|| "ram-lak".to_string());
        Ok((
            FilterKind::from_str(&name)?,
            self.cutoff.or(cfg.recon.cutoff).unwrap_or(1.0),
        ))
    }
}

#[derive(Args)]
struct PhantomArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Phantom spec file (see README for the grammar).
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Built-in phantom: tooth or tooth-marker.
    #[arg(long)]
    builtin: Option<String>,
    #[arg(long)]
    nx: Option<usize>,
    #[arg(long)]
    ny: Option<usize>,
    #[arg(long)]
    nz: Option<usize>,
    #[arg(long)]
    spacing_um: Option<f64>,
    /// Also write the analytic oracle sinogram of this axial level.
    #[arg(long)]
    analytic_slice: Option<usize>,
    #[command(flatten)]
    angles: AngleArgs,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input VAMV volume.
    #[arg(long)]
    volume: PathBuf,
    #[command(flatten)]
    angles: AngleArgs,
    /// Project a single axial level into a VAMS sinogram.
    #[arg(long)]
    slice: Option<usize>,
    /// Also synthesize raw count frames plus flats and darks.
    #[arg(long)]
    simulate_raw: bool,
    #[arg(long, default_value_t = 10000.0)]
    flat_level: f64,
    /// Relative left-right gain slope of the flat profile.
    #[arg(long, default_value_t = 0.2)]
    flat_gradient: f64,
    #[arg(long, default_value_t = 100.0)]
    dark_level: f64,
    #[arg(long, default_value_t = 5)]
    n_flats: usize,
    #[arg(long, default_value_t = 5)]
    n_darks: usize,
    /// Apply Poisson noise to every raw frame with this seed.
    #[arg(long)]
    noise_seed: Option<u64>,
}

#[derive(Args)]
struct PerturbArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    projections: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// world (tx, ty, tz) or detector (du, dv) schedule entries.
    #[arg(long)]
    mode: Option<String>,
    /// Uniform range per axis as "lo,hi" (world: tx/ty/tz; detector: du uses
    /// tx, dv uses tz).
    #[arg(long, value_parser = parse_range)]
    range_tx: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_range)]
    range_ty: Option<(f64, f64)>,
    #[arg(long, value_parser = parse_range)]
    range_tz: Option<(f64, f64)>,
    /// Shorthand: all three ranges become (-px, px).
    #[arg(long)]
    max_shift: Option<f64>,
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    projections: PathBuf,
    #[command(flatten)]
    tracker: TrackerArgs,
}

#[derive(Args)]
struct AlignArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    projections: PathBuf,
    #[command(flatten)]
    tracker: TrackerArgs,
    /// ideal (fixed point onto the fitted trajectory) or virtual-cor (onto
    /// the center column).
    #[arg(long)]
    mode: Option<String>,
    /// Row the fixed point is moved to vertically (default: median of the
    /// valid track rows).
    #[arg(long)]
    target_row: Option<f64>,
}

#[derive(Args)]
struct ReconstructArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    /// Input VAMP projection set (reconstructs every level, or one with --level).
    #[arg(long)]
    projections: Option<PathBuf>,
    /// Input VAMS sinogram (reconstructs one slice).
    #[arg(long)]
    sinogram: Option<PathBuf>,
    #[arg(long)]
    level: Option<usize>,
    #[command(flatten)]
    filter: FilterArgs,
    /// Pixel spacing of the input in micrometers (VAMP/VAMS carry none).
    #[arg(long)]
    spacing_um: Option<f64>,
    /// Also export a graymap preview of the (middle) slice.
    #[arg(long)]
    pgm: bool,
}

#[derive(Args)]
struct FlatfieldArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    raw: PathBuf,
    #[arg(long)]
    flats: PathBuf,
    #[arg(long)]
    darks: PathBuf,
    /// Also write -ln(normalized) attenuation projections.
    #[arg(long)]
    attenuation: bool,
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    volume: PathBuf,
    #[arg(long)]
    projections: PathBuf,
    /// Density threshold for the volume mask.
    #[arg(long)]
    tau_volume: Option<f64>,
    /// Silhouette threshold for the projection frames.
    #[arg(long)]
    tau_projection: Option<f64>,
    #[arg(long)]
    open_radius: Option<usize>,
    #[arg(long)]
    close_radius: Option<usize>,
    /// Pass/fail tolerance on |volume - projection| in pixels.
    #[arg(long)]
    tolerance_px: Option<f64>,
}

#[derive(Args)]
struct CompareArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    a: PathBuf,
    #[arg(long)]
    b: PathBuf,
    /// Axial level for volume comparisons (default: middle).
    #[arg(long)]
    level: Option<usize>,
    /// Register translation by cross-correlation before the RMSE.
    #[arg(long)]
    register: bool,
    #[arg(long, default_value_t = 0.03)]
    max_rmse: f64,
    #[arg(long, default_value_t = 0.05)]
    max_nrmse: f64,
    #[arg(long, default_value_t = 0.99)]
    min_pearson: f64,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    nx: Option<usize>,
    /// Number of axial levels (detector rows).
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    spacing_um: Option<f64>,
    #[command(flatten)]
    angles: AngleArgs,
    /// Injected motion: uniform in (-px, px) on all three axes.
    #[arg(long)]
    max_shift: Option<f64>,
    #[command(flatten)]
    tracker: TrackerArgs,
    #[arg(long)]
    target_row: Option<f64>,
    /// Axial level shown in the sinogram/reconstruction images.
    #[arg(long)]
    layer: Option<usize>,
    #[command(flatten)]
    filter: FilterArgs,
    /// Keep the VAMV/VAMP intermediates instead of deleting them at the end.
    #[arg(long)]
    keep_intermediates: bool,
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected \"lo,hi\", got {s:?}"));
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| format!("bad number {:?}", parts[0]))?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| format!("bad number {:?}", parts[1]))?;
    Ok((lo, hi))
}

fn resolve_out(flag: &Option<PathBuf>, cfg: &Config) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.out.clone())
        .ok_or_else(|| anyhow!("--out is required (or set `out` in the config)"))
}

fn init_threads(flag: Option<usize>, cfg: &Config) {
    let n = flag
        .or(cfg.threads)
        .or_else(|| std::env::var("VAMCT_THREADS").ok().and_then(|v| v.parse().ok()))
        .unwrap_or(0);
    if n > 0 {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn main() {
    let cli = Cli::parse();
    let stage = match &cli.command {
        Command::Phantom(_) => "phantom",
        Command::Project(_) => "project",
        Command::Perturb(_) => "perturb",
        Command::Track(_) => "track",
        Command::Align(_) => "align",
        Command::Reconstruct(_) => "reconstruct",
        Command::Flatfield(_) => "flatfield",
        Command::Measure(_) => "measure",
        Command::Compare(_) => "compare",
        Command::Demo(_) => "demo",
    };
    if let Err(e) = run(cli) {
        eprintln!("{stage}: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = config::load(cli.config.as_deref())?;
    init_threads(cli.threads, &cfg);
    match cli.command {
        Command::Phantom(a) => {
            let params = PhantomParams {
                spec_path: a.spec.clone().or_else(|| cfg.phantom.spec.clone()),
                builtin: a.builtin.clone().or_else(|| cfg.phantom.builtin.clone()),
                nx: a.nx.or(cfg.grid.nx).unwrap_or(256),
                ny: a.ny.or(a.nx).or(cfg.grid.ny).or(cfg.grid.nx).unwrap_or(256),
                nz: a.nz.or(cfg.grid.nz).unwrap_or(128),
                spacing_um: a.spacing_um.or(cfg.grid.spacing_um).unwrap_or(1.0),
                analytic_slice: a.analytic_slice,
                angles: a.angles.resolve(&cfg),
            };
            dispatch("phantom", &resolve_out(&a.out, &cfg)?, |out| run_phantom(&params, out))
        }
        Command::Project(a) => {
            let params = ProjectParams {
                volume: a.volume.clone(),
                angles: a.angles.resolve(&cfg),
                slice: a.slice,
                simulate_raw: a.simulate_raw,
                flat_level: a.flat_level,
                flat_gradient: a.flat_gradient,
                dark_level: a.dark_level,
                n_flats: a.n_flats,
                n_darks: a.n_darks,
                noise_seed: a.noise_seed,
            };
            dispatch("project", &resolve_out(&a.out, &cfg)?, |out| run_project(&params, out))
        }
        Command::Perturb(a) => {
            let mode = match a.mode.clone().or_else(|| cfg.motion.mode.clone()).as_deref() {
                None | Some("world") => MotionMode::World,
                Some("detector") => MotionMode::Detector,
                Some(other) => bail!("unknown motion mode {other:?}"),
            };
            let pick = |flag: Option<(f64, f64)>, c: Option<[f64; 2]>| -> (f64, f64) {
                if let Some(px) = a.max_shift {
                    (-px, px)
                } else {
                    flag.or(c.map(|r| (r[0], r[1]))).unwrap_or((0.0, 0.0))
                }
            };
            let params = PerturbParams {
                projections: a.projections.clone(),
                seed: a.seed.or(cfg.seed).unwrap_or(0),
                mode,
                range_tx: pick(a.range_tx, cfg.motion.range_tx),
                range_ty: pick(a.range_ty, cfg.motion.range_ty),
                range_tz: pick(a.range_tz, cfg.motion.range_tz),
            };
            dispatch("perturb", &resolve_out(&a.out, &cfg)?, |out| run_perturb(&params, out))
        }
        Command::Track(a) => {
            let params = TrackParams {
                projections: a.projections.clone(),
                tracker: a.tracker.resolve(&cfg, None)?,
            };
            dispatch("track", &resolve_out(&a.out, &cfg)?, |out| run_track(&params, out))
        }
        Command::Align(a) => {
            let mode_name = a
                .mode
                .clone()
                .or_else(|| cfg.align.mode.clone())
                .ok_or_else(|| anyhow!("--mode is required (ideal or virtual-cor)"))?;
            let params = AlignParams {
                projections: a.projections.clone(),
                tracker: a.tracker.resolve(&cfg, None)?,
                mode: AlignMode::from_str(&mode_name)?,
                target_row: a.target_row.or(cfg.align.target_row),
                stem: "aligned".to_string(),
            };
            dispatch("align", &resolve_out(&a.out, &cfg)?, |out| run_align(&params, out))
        }
        Command::Reconstruct(a) => {
            let (filter, cutoff) = a.filter.resolve(&cfg)?;
            let params = ReconstructParams {
                projections: a.projections.clone(),
                sinogram: a.sinogram.clone(),
                level: a.level,
                filter,
                cutoff,
                spacing_um: a.spacing_um.or(cfg.grid.spacing_um).unwrap_or(1.0),
                export_pgm: a.pgm,
                stem: "recon".to_string(),
            };
            dispatch("reconstruct", &resolve_out(&a.out, &cfg)?, |out| run_reconstruct(&params, out))
        }
        Command::Flatfield(a) => {
            let params = FlatfieldParams {
                raw: a.raw.clone(),
                flats: a.flats.clone(),
                darks: a.darks.clone(),
                attenuation: a.attenuation,
            };
            dispatch("flatfield", &resolve_out(&a.out, &cfg)?, |out| run_flatfield(&params, out))
        }
        Command::Measure(a) => {
            let params = MeasureParams {
                volume: a.volume.clone(),
                projections: a.projections.clone(),
                tau_volume: a.tau_volume.or(cfg.metrology.tau_volume).unwrap_or(0.5),
                tau_projection: a.tau_projection.or(cfg.metrology.tau_projection).unwrap_or(1.0),
                open_radius: a.open_radius.or(cfg.metrology.open_radius).unwrap_or(0),
                close_radius: a.close_radius.or(cfg.metrology.close_radius).unwrap_or(0),
                tolerance_px: a.tolerance_px.or(cfg.metrology.tolerance_px).unwrap_or(1.0),
            };
            dispatch("measure", &resolve_out(&a.out, &cfg)?, |out| run_measure(&params, out))
        }
        Command::Compare(a) => {
            let params = CompareParams {
                a: a.a.clone(),
                b: a.b.clone(),
                level: a.level,
                register: a.register,
                max_rmse: a.max_rmse,
                max_nrmse: a.max_nrmse,
                min_pearson: a.min_pearson,
            };
            dispatch("compare", &resolve_out(&a.out, &cfg)?, |out| run_compare(&params, out))
        }
        Command::Demo(a) => {
            let (filter, cutoff) = a.filter.resolve(&cfg)?;
            let params = DemoParams {
                seed: a.seed.or(cfg.seed).unwrap_or(7),
                nx: a.nx.or(cfg.grid.nx).unwrap_or(256),
                levels: a.levels.or(cfg.grid.nz).unwrap_or(128),
                spacing_um: a.spacing_um.or(cfg.grid.spacing_um).unwrap_or(1.0),
                angles: a.angles.resolve(&cfg),
                max_shift: a.max_shift.unwrap_or(15.0),
                tracker: a.tracker.resolve(&cfg, Some("marker"))?,
                target_row: a.target_row.or(cfg.align.target_row),
                layer: a.layer,
                filter,
                cutoff,
                keep_intermediates: a.keep_intermediates,
            };
            dispatch("demo", &resolve_out(&a.out, &cfg)?, |out| run_demo(&params, out))
        }
    }
}

fn dispatch<F>(name: &str, out_dir: &std::path::Path, body: F) -> Result<()>
where
    F: FnOnce(&mut OutDir) -> Result<CommandOutcome>,
{
    let mut out = OutDir::create(out_dir)?;
    match body(&mut out) {
        Ok(outcome) => {
            out.write_manifest(name, outcome.seed, outcome.parameters, outcome.results)
                .context("writing manifest")?;
            Ok(())
        }
        Err(e) => {
            out.cleanup();
            Err(e)
        }
    }
}
