//! Implementations of the subcommands. Each `run_*` takes resolved
//! parameters, reads/writes files through the [`OutDir`] bookkeeping and
//! returns what belongs in the manifest; `demo` chains the same functions
//! in-process, so its artifacts are byte-identical to running the
//! subcommands separately.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde_json::json;

use vamct_core::align::{vam_align, vertical_align, AlignMode};
use vamct_core::grid::{shift_subpixel, Slice, Volume};
use vamct_core::io;
use vamct_core::metrology::{
    compare_extents, max_extent_projections, max_extent_volume, registration_offset,
    segment_threshold_volume, sinogram_similarity, MorphParams,
};
use vamct_core::motion::{apply_motion, sample_schedule, schedule_to_csv, MotionMode};
use vamct_core::phantom::{
    analytic_sinogram, format_spec, generate_phantom, parse_spec, tooth_spec,
    tooth_spec_with_marker, PhantomSpec,
};
use vamct_core::projector::{
    flat_field_correct, forward_project_slice, forward_project_volume, simulate_raw, to_attenuation,
    ProjectionSet, RawFrameSet, RawSignal, Sinogram,
};
use vamct_core::recon::{fbp_slice, fbp_volume, FilterKind, FilterSpec};
use vamct_core::tracker::{track_fixed_points, track_from_csv, track_to_csv, TrackMethod, TrackerParams};

use crate::outdir::OutDir;

pub struct CommandOutcome {
    pub seed: Option<u64>,
    pub parameters: serde_json::Value,
    pub results: serde_json::Value,
}

#[derive(Debug, Clone, Copy)]
pub struct AngleParams {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl AngleParams {
    pub fn angles(&self) -> Result<Vec<f64>> {
        if self.count < 2 {
            bail!("need at least 2 angles, got {}", self.count);
        }
        if self.step <= 0.0 {
            bail!("angle step must be positive");
        }
        let last = self.start + self.step * (self.count - 1) as f64;
        if self.start < 0.0 || last >= 180.0 {
            bail!("angles [{}, {last}] must stay inside [0, 180)", self.start);
        }
        Ok((0..self.count).map(|i| self.start + i as f64 * self.step).collect())
    }

    fn to_json(self) -> serde_json::Value {
        json!({"start": self.start, "step": self.step, "count": self.count})
    }
}

#[derive(Debug, Clone)]
pub struct TrackerOpts {
    pub method: TrackMethod,
    pub tau_bg: Option<f64>,
    pub marker_window: usize,
}

impl TrackerOpts {
    fn params(&self) -> TrackerParams {
        TrackerParams { tau_bg: self.tau_bg, marker_window: self.marker_window }
    }

    fn to_json(&self) -> serde_json::Value {
        json!({
            "method": method_name(self.method),
            "tau_bg": self.tau_bg,
            "marker_window": self.marker_window,
        })
    }
}

pub fn method_name(m: TrackMethod) -> &'static str {
    match m {
        TrackMethod::Apex => "apex",
        TrackMethod::Centroid => "centroid",
        TrackMethod::Marker => "marker",
    }
}

pub fn mode_name(m: AlignMode) -> &'static str {
    match m {
        AlignMode::Ideal => "ideal",
        AlignMode::VirtualCor => "virtual-cor",
    }
}

fn read_projections_with_spacing(path: &Path, spacing_um: f64) -> Result<ProjectionSet> {
    let mut set = io::read_projections(path).with_context(|| format!("reading {}", path.display()))?;
    set.spacing_um = spacing_um;
    Ok(set)
}

// --- phantom ---------------------------------------------------------------

pub struct PhantomParams {
    pub spec_path: Option<PathBuf>,
    pub builtin: Option<String>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub spacing_um: f64,
    pub analytic_slice: Option<usize>,
    pub angles: AngleParams,
}

fn resolve_spec(p: &PhantomParams, out: &OutDir) -> Result<(PhantomSpec, String)> {
    match (&p.spec_path, &p.builtin) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading phantom spec {}", path.display()))?;
            Ok((parse_spec(&text)?, out.rel_name(path)))
        }
        (None, Some(name)) => {
            let spec = match name.as_str() {
                "tooth" => tooth_spec(p.nx, p.ny, p.nz),
                "tooth-marker" => tooth_spec_with_marker(p.nx, p.ny, p.nz),
                other => bail!("unknown builtin phantom {other:?}; expected tooth or tooth-marker"),
            };
            Ok((spec, format!("builtin:{name}")))
        }
        (None, None) => Ok((tooth_spec(p.nx, p.ny, p.nz), "builtin:tooth".to_string())),
        (Some(_), Some(_)) => bail!("give either --spec or --builtin, not both"),
    }
}

pub fn run_phantom(p: &PhantomParams, out: &mut OutDir) -> Result<CommandOutcome> {
    let (spec, origin) = resolve_spec(p, out)?;
    let volume = generate_phantom(&spec, p.nx, p.ny, p.nz, p.spacing_um)?;
    io::write_volume(&out.path("phantom.vamv"), &volume)?;
    out.record_output("phantom.vamv")?;
    std::fs::write(out.path("phantom.spec.txt"), format_spec(&spec))?;
    out.record_output("phantom.spec.txt")?;
    let mut results = json!({});
    if let Some(z) = p.analytic_slice {
        let angles = p.angles.angles()?;
        let sino = analytic_sinogram(&spec, p.nx, p.ny, p.nz, z, &angles)?;
        io::write_sinogram(&out.path("analytic.vams"), &sino)?;
        out.record_output("analytic.vams")?;
        results = json!({"analytic_slice": z});
    }
    Ok(CommandOutcome {
        seed: None,
        parameters: json!({
            "spec": origin,
            "nx": p.nx, "ny": p.ny, "nz": p.nz,
            "spacing_um": p.spacing_um,
            "analytic_slice": p.analytic_slice,
            "angles": p.angles.to_json(),
        }),
        results,
    })
}

// --- project ---------------------------------------------------------------

pub struct ProjectParams {
    pub volume: PathBuf,
    pub angles: AngleParams,
    pub slice: Option<usize>,
    pub simulate_raw: bool,
    pub flat_level: f64,
    pub flat_gradient: f64,
    pub dark_level: f64,
    pub n_flats: usize,
    pub n_darks: usize,
    pub noise_seed: Option<u64>,
}

pub fn run_project(p: &ProjectParams, out: &mut OutDir) -> Result<CommandOutcome> {
    out.record_input(&p.volume)?;
    let volume = io::read_volume(&p.volume)?;
    let angles = p.angles.angles()?;
    let mut results = json!({});
    if let Some(z) = p.slice {
        if z >= volume.nz {
            bail!("slice {z} outside 0..{}", volume.nz);
        }
        let sino = forward_project_slice(&volume.axial_slice(z), &angles)?;
        io::write_sinogram(&out.path("sinogram.vams"), &sino)?;
        out.record_output("sinogram.vams")?;
    } else {
        let set = forward_project_volume(&volume, &angles)?;
        io::write_projections(&out.path("projections.vamp"), &set)?;
        out.record_output("projections.vamp")?;
        if p.simulate_raw {
            let (nu, nv) = (set.nu(), set.nv());
            let flat_data: Vec<f64> = (0..nu * nv)
                .map(|i| {
                    let u = (i % nu) as f64 / (nu.max(2) - 1) as f64;
                    p.flat_level * (1.0 + p.flat_gradient * (u - 0.5))
                })
                .collect();
            let flat = Slice::new(nu, nv, set.spacing_um, flat_data)?;
            let dark = Slice::new(nu, nv, set.spacing_um, vec![p.dark_level; nu * nv])?;
            let raw = simulate_raw(
                &set,
                &flat,
                &dark,
                RawSignal::Attenuation,
                p.n_flats,
                p.n_darks,
                p.noise_seed,
            )?;
            io::write_projections(&out.path("raw.vamp"), &raw.projections)?;
            out.record_output("raw.vamp")?;
            write_frames_as_vamp(&out.path("flats.vamp"), &raw.flats)?;
            out.record_output("flats.vamp")?;
            write_frames_as_vamp(&out.path("darks.vamp"), &raw.darks)?;
            out.record_output("darks.vamp")?;
            results = json!({"raw_frames": raw.projections.n_angles(), "flats": p.n_flats, "darks": p.n_darks});
        }
    }
    Ok(CommandOutcome {
        seed: p.noise_seed,
        parameters: json!({
            "volume": out.rel_name(&p.volume),
            "angles": p.angles.to_json(),
            "slice": p.slice,
            "simulate_raw": p.simulate_raw,
            "flat_level": p.flat_level,
            "flat_gradient": p.flat_gradient,
            "dark_level": p.dark_level,
            "n_flats": p.n_flats,
            "n_darks": p.n_darks,
        }),
        results,
    })
}

/// Reference frames carry no acquisition angle; they are stored as a VAMP
/// stack with frame indices in the angle slots.
fn write_frames_as_vamp(path: &Path, frames: &[Slice]) -> Result<()> {
    let (nu, nv) = (frames[0].nx, frames[0].ny);
    let angles: Vec<f64> = (0..frames.len()).map(|i| i as f64).collect();
    let mut data = Vec::with_capacity(frames.len() * nu * nv);
    for f in frames {
        data.extend_from_slice(f.data());
    }
    let stack = ProjectionSet::new(angles, nu, nv, frames[0].spacing_um, data)?;
    io::write_projections(path, &stack)?;
    Ok(())
}

fn read_frames_from_vamp(path: &Path) -> Result<Vec<Slice>> {
    let stack = io::read_projections(path)?;
    Ok((0..stack.n_angles()).map(|i| stack.frame_slice(i)).collect())
}

// --- perturb ---------------------------------------------------------------

pub struct PerturbParams {
    pub projections: PathBuf,
    pub seed: u64,
    pub mode: MotionMode,
    pub range_tx: (f64, f64),
    pub range_ty: (f64, f64),
    pub range_tz: (f64, f64),
}

pub fn run_perturb(p: &PerturbParams, out: &mut OutDir) -> Result<CommandOutcome> {
    out.record_input(&p.projections)?;
    let set = io::read_projections(&p.projections)?;
    let schedule = sample_schedule(
        p.seed,
        set.angles(),
        [p.range_tx, p.range_ty, p.range_tz],
        p.mode,
    )?;
    let perturbed = apply_motion(&set, &schedule)?;
    io::write_projections(&out.path("perturbed.vamp"), &perturbed)?;
    out.record_output("perturbed.vamp")?;
    std::fs::write(out.path("schedule.csv"), schedule_to_csv(&schedule))?;
    out.record_output("schedule.csv")?;
    Ok(CommandOutcome {
        seed: Some(p.seed),
        parameters: json!({
            "projections": out.rel_name(&p.projections),
            "mode": match p.mode { MotionMode::World => "world", MotionMode::Detector => "detector" },
            "range_tx": [p.range_tx.0, p.range_tx.1],
            "range_ty": [p.range_ty.0, p.range_ty.1],
            "range_tz": [p.range_tz.0, p.range_tz.1],
        }),
        results: json!({}),
    })
}

// --- track -------------------------------------------------------------------

pub struct TrackParams {
    pub projections: PathBuf,
    pub tracker: TrackerOpts,
}

pub fn run_track(p: &TrackParams, out: &mut OutDir) -> Result<CommandOutcome> {
    out.record_input(&p.projections)?;
    let set = io::read_projections(&p.projections)?;
    let track = track_fixed_points(&set, p.tracker.method, &p.tracker.params())?;
    std::fs::write(out.path("track.csv"), track_to_csv(&track))?;
    out.record_output("track.csv")?;
    Ok(CommandOutcome {
        seed: None,
        parameters: json!({
            "projections": out.rel_name(&p.projections),
            "tracker": p.tracker.to_json(),
        }),
        results: json!({"valid": track.valid_count(), "total": track.len()}),
    })
}

// --- align -------------------------------------------------------------------

pub struct AlignParams {
    pub projections: PathBuf,
    pub tracker: TrackerOpts,
    pub mode: AlignMode,
    pub target_row: Option<f64>,
    /// Output file stem; the demo uses distinct stems per mode.
    pub stem: String,
}

pub fn run_align(p: &AlignParams, out: &mut OutDir) -> Result<CommandOutcome> {
    out.record_input(&p.projections)?;
    let set = io::read_projections(&p.projections)?;
    let (aligned, report) = vam_align(&set, p.tracker.method, &p.tracker.params(), p.mode, p.target_row)?;
    let vamp = format!("{}.vamp", p.stem);
    io::write_projections(&out.path(&vamp), &aligned)?;
    out.record_output(&vamp)?;
    let csv = format!("{}.csv", p.stem);
    std::fs::write(out.path(&csv), report.to_csv())?;
    out.record_output(&csv)?;
    let txt = format!("{}.txt", p.stem);
    std::fs::write(out.path(&txt), report.summary())?;
    out.record_output(&txt)?;
    Ok(CommandOutcome {
        seed: None,
        parameters: json!({
            "projections": out.rel_name(&p.projections),
            "tracker": p.tracker.to_json(),
            "mode": mode_name(p.mode),
            "target_row": p.target_row,
        }),
        results: json!({
            "target_row": report.target_row,
            "trajectory_amplitude": report.model.amplitude,
            "trajectory_phase_deg": report.model.phase_deg,
            "trajectory_center": report.model.center,
            "fit_rms": report.model.rms_residual,
            "post_align_rms": report.final_rms,
        }),
    })
}

// --- reconstruct -----------------------------------------------------------

pub struct ReconstructParams {
    pub projections: Option<PathBuf>,
    pub sinogram: Option<PathBuf>,
    pub level: Option<usize>,
    pub filter: FilterKind,
    pub cutoff: f64,
    pub spacing_um: f64,
    pub export_pgm: bool,
    pub stem: String,
}

pub fn run_reconstruct(p: &ReconstructParams, out: &mut OutDir) -> Result<CommandOutcome> {
    let filter = FilterSpec { kind: p.filter, cutoff: p.cutoff };
    let vamv = format!("{}.vamv", p.stem);
    let preview: Slice;
    match (&p.projections, &p.sinogram) {
        (Some(path), None) => {
            out.record_input(path)?;
            let set = read_projections_with_spacing(path, p.spacing_um)?;
            if let Some(level) = p.level {
                let sino = set.sinogram_at_row(level)?;
                let slice = fbp_slice(&sino, &filter)?;
                let volume = Volume::new(slice.nx, slice.ny, 1, p.spacing_um, slice.data().to_vec())?;
                io::write_volume(&out.path(&vamv), &volume)?;
                preview = slice;
            } else {
                let volume = fbp_volume(&set, &filter)?;
                io::write_volume(&out.path(&vamv), &volume)?;
                preview = volume.axial_slice(volume.nz / 2);
            }
        }
        (None, Some(path)) => {
            out.record_input(path)?;
            let sino = io::read_sinogram(path)?;
            let slice = fbp_slice(&sino, &filter)?;
            let volume = Volume::new(slice.nx, slice.ny, 1, p.spacing_um, slice.data().to_vec())?;
            io::write_volume(&out.path(&vamv), &volume)?;
            preview = slice;
        }
        _ => bail!("give exactly one of --projections or --sinogram"),
    }
    out.record_output(&vamv)?;
    if p.export_pgm {
        let pgm = format!("{}.pgm", p.stem);
        io::write_pgm16(&out.path(&pgm), preview.data(), preview.nx, preview.ny)?;
        out.record_output(&pgm)?;
        out.record_output(&format!("{pgm}.txt"))?;
    }
    Ok(CommandOutcome {
        seed: None,
        parameters: json!({
            "projections": p.projections.as_ref().map(|p| out.rel_name(p)),
            "sinogram": p.sinogram.as_ref().map(|p| out.rel_name(p)),
            "level": p.level,
            "filter": match p.filter { FilterKind::RamLak => "ram-lak", FilterKind::SheppLogan => "shepp-logan", FilterKind::Hann => "hann" },
            "cutoff": p.cutoff,
            "spacing_um": p.spacing_um,
        }),
        results: json!({}),
    })
}

// --- flatfield ---------------------------------------------------------------

pub struct FlatfieldParams {
    pub raw: PathBuf,
    pub flats: PathBuf,
    pub darks: PathBuf,
    pub attenuation: bool,
}

pub fn run_flatfield(p: &FlatfieldParams, out: &mut OutDir) -> Result<CommandOutcome> {
    out.record_input(&p.raw)?;
    out.record_input(&p.flats)?;
    out.record_input(&p.darks)?;
    let projections = io::read_projections(&p.raw)?;
    let flats = read_frames_from_vamp(&p.flats)?;
    let darks = read_frames_from_vamp(&p.darks)?;
    let raw = RawFrameSet::new(projections, flats, darks)?;
    let (normalized, ff_report) = flat_field_correct(&raw)?;
    io::write_projections(&out.path("normalized.vamp"), &normalized)?;
    out.record_output("normalized.vamp")?;
    let mut results = json!({"denominator_clamps": ff_report.clamped});
    if p.attenuation {
        let (atten, log_report) = to_attenuation(&normalized)?;
        io::write_projections(&out.path("attenuation.vamp"), &atten)?;
        out.record_output("attenuation.vamp")?;
        results = json!({
            "denominator_clamps": ff_report.clamped,
            "log_clamps": log_report.clamped,
        });
    }
    Ok(CommandOutcome {
        seed: None,
        parameters: json!({
            "raw": out.rel_name(&p.raw),
            "flats": out.rel_name(&p.flats),
            "darks": out.rel_name(&p.darks),
            "attenuation": p.attenuation,
        }),
        results,
    })
}

// --- measure -----------------------------------------------------------------

pub struct MeasureParams {
    pub volume: PathBuf,
    pub projections: PathBuf,
    pub tau_volume: f64,
    pub tau_projection: f64,
    pub open_radius: usize,
    pub close_radius: usize,
    pub tolerance_px: f64,
}

pub fn run_measure(p: &MeasureParams, out: &mut OutDir) -> Result<CommandOutcome> {
    out.record_input(&p.volume)?;
    out.record_input(&p.projections)?;
    let volume = io::read_volume(&p.volume)?;
    let set = io::read_projections(&p.projections)?;
    let morph = MorphParams { open_radius: p.open_radius, close_radius: p.close_radius };
    let mask = segment_threshold_volume(&volume, p.tau_volume, &morph)?;
    let vol_extent = max_extent_volume(&mask)?;
    let proj_extent = max_extent_projections(&set, p.tau_projection)?;
    let report = compare_extents(&vol_extent, &proj_extent, volume.spacing_um, p.tolerance_px);
    std::fs::write(out.path("measure.txt"), format!("{report}"))?;
    out.record_output("measure.txt")?;
    std::fs::write(out.path("measure.csv"), report.to_csv())?;
    out.record_output("measure.csv")?;
    print!("{report}");
    Ok(CommandOutcome {
        seed: None,
        parameters: json!({
            "volume": out.rel_name(&p.volume),
            "projections": out.rel_name(&p.projections),
            "tau_volume": p.tau_volume,
            "tau_projection": p.tau_projection,
            "open_radius": p.open_radius,
            "close_radius": p.close_radius,
            "tolerance_px": p.tolerance_px,
        }),
        results: json!({
            "volume_length_px": report.volume_length_px,
            "projection_length_px": report.projection_length_px,
            "projection_angle_deg": report.projection_angle_deg,
            "difference_px": report.difference_px,
            "pass": report.pass,
        }),
    })
}

// --- compare -----------------------------------------------------------------

pub struct CompareParams {
    pub a: PathBuf,
    pub b: PathBuf,
    pub level: Option<usize>,
    pub register: bool,
    pub max_rmse: f64,
    pub max_nrmse: f64,
    pub min_pearson: f64,
}

fn file_magic(path: &Path) -> Result<[u8; 4]> {
    use std::io::Read;
    let mut f = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut magic = [0u8; 4];
    f.read_exact(&mut magic)?;
    Ok(magic)
}

fn volume_level_slice(path: &Path, level: Option<usize>) -> Result<(Slice, usize)> {
    let volume = io::read_volume(path)?;
    let z = level.unwrap_or(volume.nz / 2);
    if z >= volume.nz {
        bail!("level {z} outside 0..{}", volume.nz);
    }
    Ok((volume.axial_slice(z), z))
}

/// RMSE between two slices as a fraction of the reference's dynamic range,
/// measured inside the inscribed circle eroded by the shift magnitude.
pub fn registered_rmse(reference: &Slice, other: &Slice, du: f64, dv: f64) -> Result<f64> {
    let shifted = shift_subpixel(reference, du, dv)?;
    let n = reference.nx.min(reference.ny);
    let c = (n as f64 - 1.0) / 2.0;
    let margin = du.abs().max(dv.abs()).ceil() + 2.0;
    let radius = (n as f64 - 1.0) / 2.0 - margin;
    if radius <= 2.0 {
        bail!("images too small for a registered comparison");
    }
    let mut mse = 0.0;
    let mut count = 0usize;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for y in 0..reference.ny {
        for x in 0..reference.nx {
            let (dx, dy) = (x as f64 - c, y as f64 - c);
            if dx * dx + dy * dy <= radius * radius {
                let d = shifted.at(x, y) - other.at(x, y);
                mse += d * d;
                count += 1;
                lo = lo.min(other.at(x, y));
                hi = hi.max(other.at(x, y));
            }
        }
    }
    if count == 0 || hi <= lo {
        bail!("registered comparison region is empty or flat");
    }
    Ok((mse / count as f64).sqrt() / (hi - lo))
}

pub fn run_compare(p: &CompareParams, out: &mut OutDir) -> Result<CommandOutcome> {
    out.record_input(&p.a)?;
    out.record_input(&p.b)?;
    let (magic_a, magic_b) = (file_magic(&p.a)?, file_magic(&p.b)?);
    if magic_a != magic_b {
        bail!("cannot compare {:?} with {:?}", magic_a, magic_b);
    }
    let mut lines = Vec::new();
    lines.push(format!("a: {}", p.a.display()));
    lines.push(format!("b: {}", p.b.display()));
    let (results, pass) = match &magic_a {
        b"VAMS" => {
            let a = io::read_sinogram(&p.a)?;
            let b = io::read_sinogram(&p.b)?;
            let sim = sinogram_similarity(&a, &b)?;
            lines.push(format!("nrmse: {:?}", sim.nrmse));
            lines.push(format!("pearson_r: {:?}", sim.pearson_r));
            let pass = sim.nrmse.is_some_and(|v| v <= p.max_nrmse)
                && sim.pearson_r.is_some_and(|v| v >= p.min_pearson);
            (
                json!({"nrmse": sim.nrmse, "pearson_r": sim.pearson_r}),
                pass,
            )
        }
        b"VAMV" => {
            let (a, za) = volume_level_slice(&p.a, p.level)?;
            let (b, _zb) = volume_level_slice(&p.b, p.level)?;
            lines.push(format!("level: {za}"));
            let (du, dv) = if p.register {
                registration_offset(&a, &b).map_err(|e| anyhow!("{e}"))?
            } else {
                (0.0, 0.0)
            };
            lines.push(format!("offset_du: {du}"));
            lines.push(format!("offset_dv: {dv}"));
            let rmse = registered_rmse(&a, &b, du, dv)?;
            lines.push(format!("rmse_fraction: {rmse}"));
            (
                json!({"offset_du": du, "offset_dv": dv, "rmse_fraction": rmse}),
                rmse <= p.max_rmse,
            )
        }
        other => bail!("unsupported file magic {other:?}"),
    };
    lines.push(if pass { "pass".to_string() } else { "FAIL".to_string() });
    let text = lines.join("\n") + "\n";
    std::fs::write(out.path("compare.txt"), &text)?;
    out.record_output("compare.txt")?;
    print!("{text}");
    let mut results = results;
    results["pass"] = json!(pass);
    Ok(CommandOutcome {
        seed: None,
        parameters: json!({
            "a": out.rel_name(&p.a),
            "b": out.rel_name(&p.b),
            "level": p.level,
            "register": p.register,
            "max_rmse": p.max_rmse,
            "max_nrmse": p.max_nrmse,
            "min_pearson": p.min_pearson,
        }),
        results,
    })
}

// --- demo --------------------------------------------------------------------

pub struct DemoParams {
    pub seed: u64,
    pub nx: usize,
    pub levels: usize,
    pub spacing_um: f64,
    pub angles: AngleParams,
    pub max_shift: f64,
    pub tracker: TrackerOpts,
    pub target_row: Option<f64>,
    pub layer: Option<usize>,
    pub filter: FilterKind,
    pub cutoff: f64,
    pub keep_intermediates: bool,
}

/// The full scenario in one command: phantom → project → perturb →
/// align (both modes) → reconstruct, emitting sinogram and reconstruction
/// graymaps before/after alignment plus the alignment reports. Chains the
/// same functions as the separate subcommands, through the same files.
pub fn run_demo(p: &DemoParams, out: &mut OutDir) -> Result<CommandOutcome> {
    let phantom = PhantomParams {
        spec_path: None,
        builtin: Some("tooth-marker".to_string()),
        nx: p.nx,
        ny: p.nx,
        nz: p.levels,
        spacing_um: p.spacing_um,
        analytic_slice: None,
        angles: p.angles,
    };
    let phantom_outcome = run_phantom(&phantom, out)?;
    let project = ProjectParams {
        volume: out.path("phantom.vamv"),
        angles: p.angles,
        slice: None,
        simulate_raw: false,
        flat_level: 10000.0,
        flat_gradient: 0.0,
        dark_level: 100.0,
        n_flats: 5,
        n_darks: 5,
        noise_seed: None,
    };
    let project_outcome = run_project(&project, out)?;
    let perturb = PerturbParams {
        projections: out.path("projections.vamp"),
        seed: p.seed,
        mode: MotionMode::World,
        range_tx: (-p.max_shift, p.max_shift),
        range_ty: (-p.max_shift, p.max_shift),
        range_tz: (-p.max_shift, p.max_shift),
    };
    let perturb_outcome = run_perturb(&perturb, out)?;
    let track = TrackParams {
        projections: out.path("perturbed.vamp"),
        tracker: p.tracker.clone(),
    };
    let track_outcome = run_track(&track, out)?;
    let mut align_outcomes = Vec::new();
    for (mode, stem) in [
        (AlignMode::Ideal, "aligned_ideal"),
        (AlignMode::VirtualCor, "aligned_virtual_cor"),
    ] {
        let align = AlignParams {
            projections: out.path("perturbed.vamp"),
            tracker: p.tracker.clone(),
            mode,
            target_row: p.target_row,
            stem: stem.to_string(),
        };
        align_outcomes.push(run_align(&align, out)?);
    }
    // Reconstructions of the common layer: reference (never perturbed),
    // ideal-mode and virtual-COR-mode.
    let target_row = align_outcomes[0].results["target_row"]
        .as_f64()
        .ok_or_else(|| anyhow!("missing target row in alignment results"))?;
    let layer = p.layer.unwrap_or_else(|| {
        // A crown layer: structured and away from the detector edges.
        ((p.levels as f64 * 0.30).round() as usize).min(p.levels - 1)
    });
    for (input, stem) in [
        ("projections.vamp", "recon_reference"),
        ("aligned_ideal.vamp", "recon_ideal"),
        ("aligned_virtual_cor.vamp", "recon_virtual_cor"),
    ] {
        let reconstruct = ReconstructParams {
            projections: Some(out.path(input)),
            sinogram: None,
            level: Some(layer),
            filter: p.filter,
            cutoff: p.cutoff,
            spacing_um: p.spacing_um,
            export_pgm: false,
            stem: stem.to_string(),
        };
        run_reconstruct(&reconstruct, out)?;
    }
    // Sinogram and reconstruction graymaps.
    let perturbed = io::read_projections(&out.path("perturbed.vamp"))?;
    let sino_misaligned = perturbed.sinogram_at_row(layer)?;
    write_sino_pgm(out, "sino_misaligned.pgm", &sino_misaligned)?;
    let track0 = track_from_csv(&std::fs::read_to_string(out.path("track.csv"))?)?;
    let (vset, _, _) = vertical_align(&perturbed, &track0, p.target_row)?;
    write_sino_pgm(out, "sino_common_layer.pgm", &vset.sinogram_at_row(layer)?)?;
    let ideal = io::read_projections(&out.path("aligned_ideal.vamp"))?;
    write_sino_pgm(out, "sino_ideal.pgm", &ideal.sinogram_at_row(layer)?)?;
    let vcor = io::read_projections(&out.path("aligned_virtual_cor.vamp"))?;
    write_sino_pgm(out, "sino_virtual_cor.pgm", &vcor.sinogram_at_row(layer)?)?;
    for stem in ["recon_reference", "recon_ideal", "recon_virtual_cor"] {
        let volume = io::read_volume(&out.path(&format!("{stem}.vamv")))?;
        let slice = volume.axial_slice(0);
        let pgm = format!("{stem}.pgm");
        io::write_pgm16(&out.path(&pgm), slice.data(), slice.nx, slice.ny)?;
        out.record_output(&pgm)?;
        out.record_output(&format!("{pgm}.txt"))?;
    }
    if !p.keep_intermediates {
        for name in [
            "phantom.vamv",
            "projections.vamp",
            "perturbed.vamp",
            "aligned_ideal.vamp",
            "aligned_virtual_cor.vamp",
        ] {
            out.discard_file(name)?;
        }
    }
    Ok(CommandOutcome {
        seed: Some(p.seed),
        parameters: json!({
            "nx": p.nx,
            "levels": p.levels,
            "spacing_um": p.spacing_um,
            "angles": p.angles.to_json(),
            "max_shift": p.max_shift,
            "tracker": p.tracker.to_json(),
            "target_row": p.target_row,
            "layer": layer,
            "filter": match p.filter { FilterKind::RamLak => "ram-lak", FilterKind::SheppLogan => "shepp-logan", FilterKind::Hann => "hann" },
            "cutoff": p.cutoff,
            "keep_intermediates": p.keep_intermediates,
            "stages": {
                "phantom": phantom_outcome.parameters,
                "project": project_outcome.parameters,
                "perturb": perturb_outcome.parameters,
                "track": track_outcome.parameters,
            },
        }),
        results: json!({
            "target_row": target_row,
            "ideal": align_outcomes[0].results,
            "virtual_cor": align_outcomes[1].results,
            "track": track_outcome.results,
        }),
    })
}

fn write_sino_pgm(out: &mut OutDir, name: &str, sino: &Sinogram) -> Result<()> {
    io::write_pgm16(&out.path(name), sino.data(), sino.nu(), sino.n_angles())?;
    out.record_output(name)?;
    out.record_output(&format!("{name}.txt"))?;
    Ok(())
}
