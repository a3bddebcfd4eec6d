//! Discrete parallel-beam forward projection (Radon transform) of slices and
//! volumes, plus raw-frame simulation and flat-field correction.
//!
//! The projector is ray-driven: each detector value is the sum of bilinear
//! samples taken at unit-pixel steps along its ray, zero outside the slice.
//! Sampling phase is fixed so that t = 0 (the closest point to the rotation
//! axis) is always a sample, which keeps the operator symmetric under
//! detector reflection.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::{center_coord, detector_axis, ray_direction, GridGeometry, Slice, Volume};

/// One axial level's (angle × detector-column) matrix of line integrals.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    angles: Vec<f64>,
    nu: usize,
    data: Vec<f64>,
}

impl Sinogram {
    pub fn new(angles: Vec<f64>, nu: usize, data: Vec<f64>) -> Result<Self> {
        if angles.len() < 2 {
            return Err(Error::InvalidArgument("sinogram needs at least 2 angles".into()));
        }
        GridGeometry::validate_angles(&angles)?;
        if nu == 0 {
            return Err(Error::InvalidArgument("sinogram needs nu > 0".into()));
        }
        if data.len() != angles.len() * nu {
            return Err(Error::DimensionMismatch(format!(
                "sinogram data length {} != {} angles x {nu}",
                data.len(),
                angles.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("sinogram contains NaN/Inf".into()));
        }
        Ok(Sinogram { angles, nu, data })
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.nu)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.nu..(i + 1) * self.nu]
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Ordered stack of 2D projection images with per-image angle. Raw,
/// perturbed and aligned states all share this type.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSet {
    angles: Vec<f64>,
    nu: usize,
    nv: usize,
    /// Micrometers per detector pixel.
    pub spacing_um: f64,
    data: Vec<f64>,
}

impl ProjectionSet {
    pub fn new(angles: Vec<f64>, nu: usize, nv: usize, spacing_um: f64, data: Vec<f64>) -> Result<Self> {
        GridGeometry::validate_angles(&angles)?;
        if nu == 0 || nv == 0 {
            return Err(Error::InvalidArgument("projection set needs nu, nv > 0".into()));
        }
        if spacing_um <= 0.0 || !spacing_um.is_finite() {
            return Err(Error::InvalidArgument(format!("spacing {spacing_um} must be > 0")));
        }
        if data.len() != angles.len() * nu * nv {
            return Err(Error::DimensionMismatch(format!(
                "projection data length {} != {} frames x {nv}x{nu}",
                data.len(),
                angles.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("projection set contains NaN/Inf".into()));
        }
        Ok(ProjectionSet { angles, nu, nv, spacing_um, data })
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn geometry(&self) -> GridGeometry {
        GridGeometry::new(self.nu)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn frame(&self, i: usize) -> &[f64] {
        let n = self.nu * self.nv;
        &self.data[i * n..(i + 1) * n]
    }

    pub fn frame_slice(&self, i: usize) -> Slice {
        Slice::new(self.nu, self.nv, self.spacing_um, self.frame(i).to_vec())
            .expect("frame data is validated at construction")
    }

    /// Extract detector row `v` across all angles as a sinogram.
    pub fn sinogram_at_row(&self, v: usize) -> Result<Sinogram> {
        if v >= self.nv {
            return Err(Error::InvalidArgument(format!("row {v} outside 0..{}", self.nv)));
        }
        let mut data = Vec::with_capacity(self.n_angles() * self.nu);
        for i in 0..self.n_angles() {
            let frame = self.frame(i);
            data.extend_from_slice(&frame[v * self.nu..(v + 1) * self.nu]);
        }
        Sinogram::new(self.angles.clone(), self.nu, data)
    }

    /// Apply a per-frame image transform, keeping angles and spacing.
    pub fn map_frames<F>(&self, f: F) -> Result<ProjectionSet>
    where
        F: Fn(usize, &[f64]) -> Vec<f64> + Sync,
    {
        let n = self.nu * self.nv;
        let frames: Vec<Vec<f64>> = (0..self.n_angles())
            .into_par_iter()
            .map(|i| f(i, self.frame(i)))
            .collect();
        let mut data = Vec::with_capacity(self.data.len());
        for (i, fr) in frames.into_iter().enumerate() {
            if fr.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "mapped frame {i} has length {} != {n}",
                    fr.len()
                )));
            }
            data.extend_from_slice(&fr);
        }
        ProjectionSet::new(self.angles.clone(), self.nu, self.nv, self.spacing_um, data)
    }

    /// Block-average every frame by an integer factor (both axes).
    pub fn rebin(&self, factor: usize) -> Result<ProjectionSet> {
        if factor == 0 || self.nu % factor != 0 || self.nv % factor != 0 {
            return Err(Error::DimensionMismatch(format!(
                "rebin factor {factor} does not divide {}x{}",
                self.nu, self.nv
            )));
        }
        let frames: Vec<Vec<f64>> = (0..self.n_angles())
            .into_par_iter()
            .map(|i| {
                let s = Slice::new(self.nu, self.nv, self.spacing_um, self.frame(i).to_vec())
                    .expect("frame data is validated at construction");
                crate::grid::rebin(&s, factor)
                    .expect("divisibility checked above")
                    .into_data()
            })
            .collect();
        ProjectionSet::new(
            self.angles.clone(),
            self.nu / factor,
            self.nv / factor,
            self.spacing_um * factor as f64,
            frames.concat(),
        )
    }
}

/// Raw detector frames: projection counts plus open-beam (flat) and
/// closed-shutter (dark) reference frames of the same dimensions.
#[derive(Debug, Clone)]
pub struct RawFrameSet {
    pub projections: ProjectionSet,
    pub flats: Vec<Slice>,
    pub darks: Vec<Slice>,
}

impl RawFrameSet {
    pub fn new(projections: ProjectionSet, flats: Vec<Slice>, darks: Vec<Slice>) -> Result<Self> {
        if flats.is_empty() || darks.is_empty() {
            return Err(Error::InvalidArgument("need at least one flat and one dark frame".into()));
        }
        let (nu, nv) = (projections.nu(), projections.nv());
        for (what, frames) in [("flat", &flats), ("dark", &darks)] {
            for f in frames.iter() {
                if f.nx != nu || f.ny != nv {
                    return Err(Error::DimensionMismatch(format!(
                        "{what} frame is {}x{}, projections are {nu}x{nv}",
                        f.nx, f.ny
                    )));
                }
            }
        }
        let nonneg = |d: &[f64]| d.iter().all(|&v| v >= 0.0);
        if !nonneg(projections.data())
            || !flats.iter().all(|f| nonneg(f.data()))
            || !darks.iter().all(|f| nonneg(f.data()))
        {
            return Err(Error::InvalidData("raw frame counts must be >= 0".into()));
        }
        Ok(RawFrameSet { projections, flats, darks })
    }
}

/// How `simulate_raw` interprets its input values.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawSignal {
    /// Input is attenuation line integrals p; transmission is exp(-p).
    Attenuation,
    /// Input is already-normalized transmission n.
    Normalized,
}

/// Clamp statistics from operations that floor a denominator or argument.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClampReport {
    pub clamped: usize,
}

fn bilinear(data: &[f64], n: usize, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let ix = x0 as i64;
    let iy = y0 as i64;
    let ni = n as i64;
    if ix >= 0 && iy >= 0 && ix + 1 < ni && iy + 1 < ni {
        let i = iy as usize * n + ix as usize;
        let top = data[i] + fx * (data[i + 1] - data[i]);
        let bot = data[i + n] + fx * (data[i + n + 1] - data[i + n]);
        top + fy * (bot - top)
    } else {
        let fetch = |u: i64, v: i64| -> f64 {
            if u < 0 || v < 0 || u >= ni || v >= ni {
                0.0
            } else {
                data[v as usize * n + u as usize]
            }
        };
        let a = fetch(ix, iy);
        let b = fetch(ix + 1, iy);
        let c = fetch(ix, iy + 1);
        let d = fetch(ix + 1, iy + 1);
        let top = a + fx * (b - a);
        let bot = c + fx * (d - c);
        top + fy * (bot - top)
    }
}

/// Clip the ray parameter range to [lo, hi] along one axis.
fn clip_axis(base: f64, dir: f64, lo: f64, hi: f64, t0: &mut f64, t1: &mut f64) -> bool {
    if dir.abs() < 1e-12 {
        base >= lo && base <= hi
    } else {
        let (mut ta, mut tb) = ((lo - base) / dir, (hi - base) / dir);
        if ta > tb {
            std::mem::swap(&mut ta, &mut tb);
        }
        *t0 = t0.max(ta);
        *t1 = t1.min(tb);
        *t0 <= *t1
    }
}

/// Forward-project one square n×n plane at the given angles.
/// Returns angle-major rows of length n.
pub(crate) fn project_plane(data: &[f64], n: usize, angles: &[f64]) -> Vec<f64> {
    let c = center_coord(n);
    let bound = n as f64;
    let mut out = vec![0.0; angles.len() * n];
    for (ai, &theta) in angles.iter().enumerate() {
        let (au, av) = detector_axis(theta);
        let (rx, ry) = ray_direction(theta);
        let row = &mut out[ai * n..(ai + 1) * n];
        for (u, value) in row.iter_mut().enumerate() {
            let s = u as f64 - c;
            let bx = s * au + c;
            let by = s * av + c;
            // Clip to the slice bounding box inflated by one pixel; the
            // bilinear read is identically zero beyond it.
            let mut t0 = f64::NEG_INFINITY;
            let mut t1 = f64::INFINITY;
            if !clip_axis(bx, rx, -1.0, bound, &mut t0, &mut t1)
                || !clip_axis(by, ry, -1.0, bound, &mut t0, &mut t1)
            {
                continue;
            }
            let k0 = t0.ceil() as i64;
            let k1 = t1.floor() as i64;
            let mut x = bx + k0 as f64 * rx;
            let mut y = by + k0 as f64 * ry;
            let mut sum = 0.0;
            for _ in k0..=k1 {
                sum += bilinear(data, n, x, y);
                x += rx;
                y += ry;
            }
            *value = sum;
        }
    }
    out
}

fn pad_to_square(slice: &Slice) -> (Vec<f64>, usize) {
    if slice.nx == slice.ny {
        return (slice.data().to_vec(), slice.nx);
    }
    let n = slice.nx.max(slice.ny);
    let (ox, oy) = ((n - slice.nx) / 2, (n - slice.ny) / 2);
    let mut data = vec![0.0; n * n];
    for y in 0..slice.ny {
        let src = slice.row(y);
        data[(y + oy) * n + ox..(y + oy) * n + ox + slice.nx].copy_from_slice(src);
    }
    (data, n)
}

/// Radon transform of a slice: `p(θ, s)` sampled on the detector grid.
/// Non-square slices are zero-padded to the enclosing centered square.
pub fn forward_project_slice(slice: &Slice, angles: &[f64]) -> Result<Sinogram> {
    GridGeometry::validate_angles(angles)?;
    if angles.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 angles".into()));
    }
    let (data, n) = pad_to_square(slice);
    let rows = if angles.len() >= 8 {
        // Chunk angles so frames parallelize without changing per-element results.
        let chunk = angles.len().div_ceil(rayon::current_num_threads().max(1) * 4);
        let parts: Vec<Vec<f64>> = angles
            .par_chunks(chunk)
            .map(|part| project_plane(&data, n, part))
            .collect();
        parts.concat()
    } else {
        project_plane(&data, n, angles)
    };
    Sinogram::new(angles.to_vec(), n, rows)
}

/// Project a volume at every angle: row v of each projection is the Radon
/// row of axial slice z = v, so nv = nz.
pub fn forward_project_volume(volume: &Volume, angles: &[f64]) -> Result<ProjectionSet> {
    if volume.nx != volume.ny {
        return Err(Error::DimensionMismatch(format!(
            "volume must have nx == ny, got {}x{}",
            volume.nx, volume.ny
        )));
    }
    GridGeometry::validate_angles(angles)?;
    if angles.len() < 2 {
        return Err(Error::InvalidArgument("need at least 2 angles".into()));
    }
    let n = volume.nx;
    let per_slice: Vec<Vec<f64>> = (0..volume.nz)
        .into_par_iter()
        .map(|z| project_plane(volume.plane(z), n, angles))
        .collect();
    let (nu, nv) = (n, volume.nz);
    let mut data = vec![0.0; angles.len() * nu * nv];
    for (z, rows) in per_slice.iter().enumerate() {
        for ai in 0..angles.len() {
            let dst = (ai * nv + z) * nu;
            data[dst..dst + nu].copy_from_slice(&rows[ai * nu..(ai + 1) * nu]);
        }
    }
    ProjectionSet::new(angles.to_vec(), nu, nv, volume.spacing_um, data)
}

/// Synthesize raw detector frames from projections and detector profiles:
/// `raw = dark + (flat - dark) · T` with transmission `T = exp(-p)` in
/// attenuation mode or the input itself in normalized mode. With a seed,
/// every frame (projections, flats, darks) gets per-pixel Poisson noise.
pub fn simulate_raw(
    proj: &ProjectionSet,
    flat_profile: &Slice,
    dark_level: &Slice,
    mode: RawSignal,
    n_flats: usize,
    n_darks: usize,
    noise_seed: Option<u64>,
) -> Result<RawFrameSet> {
    if flat_profile.nx != proj.nu()
        || flat_profile.ny != proj.nv()
        || dark_level.nx != proj.nu()
        || dark_level.ny != proj.nv()
    {
        return Err(Error::DimensionMismatch(
            "flat/dark profiles must match the projection dimensions".into(),
        ));
    }
    if n_flats == 0 || n_darks == 0 {
        return Err(Error::InvalidArgument("need at least one flat and one dark frame".into()));
    }
    let flat = flat_profile.data();
    let dark = dark_level.data();
    if flat.iter().zip(dark).any(|(&f, &d)| f <= d) {
        return Err(Error::InvalidArgument(
            "non-positive gain: flat profile must exceed dark level everywhere".into(),
        ));
    }
    if dark.iter().any(|&d| d < 0.0) {
        return Err(Error::InvalidData("dark level must be >= 0".into()));
    }
    let npx = proj.nu() * proj.nv();
    let mut frames = Vec::with_capacity(proj.n_angles() * npx);
    for i in 0..proj.n_angles() {
        let p = proj.frame(i);
        for j in 0..npx {
            let t = match mode {
                RawSignal::Attenuation => (-p[j]).exp(),
                RawSignal::Normalized => p[j],
            };
            frames.push(dark[j] + (flat[j] - dark[j]) * t);
        }
    }
    let mut flats: Vec<Vec<f64>> = (0..n_flats).map(|_| flat.to_vec()).collect();
    let mut darks: Vec<Vec<f64>> = (0..n_darks).map(|_| dark.to_vec()).collect();
    if let Some(seed) = noise_seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut apply = |values: &mut [f64]| {
            for v in values.iter_mut() {
                if *v > 0.0 {
                    let poisson = Poisson::new(*v).expect("positive finite mean");
                    *v = poisson.sample(&mut rng);
                }
            }
        };
        apply(&mut frames);
        for f in flats.iter_mut() {
            apply(f);
        }
        for d in darks.iter_mut() {
            apply(d);
        }
    }
    let projections = ProjectionSet::new(
        proj.angles().to_vec(),
        proj.nu(),
        proj.nv(),
        proj.spacing_um,
        frames,
    )?;
    let to_slices = |vs: Vec<Vec<f64>>| -> Result<Vec<Slice>> {
        vs.into_iter()
            .map(|d| Slice::new(proj.nu(), proj.nv(), proj.spacing_um, d))
            .collect()
    };
    RawFrameSet::new(projections, to_slices(flats)?, to_slices(darks)?)
}

fn mean_frame(frames: &[Slice]) -> Vec<f64> {
    let n = frames[0].data().len();
    let mut mean = vec![0.0; n];
    for f in frames {
        for (m, &v) in mean.iter_mut().zip(f.data()) {
            *m += v;
        }
    }
    let scale = 1.0 / frames.len() as f64;
    for m in mean.iter_mut() {
        *m *= scale;
    }
    mean
}

/// Flat-field correction: `n = (proj - mean(darks)) / (mean(flats) - mean(darks))`.
///
/// Denominator pixels below the floor ε = 1e-6 × median(mean flat) are
/// clamped to ε; the clamp count is reported, never silent.
pub fn flat_field_correct(raw: &RawFrameSet) -> Result<(ProjectionSet, ClampReport)> {
    let flat = mean_frame(&raw.flats);
    let dark = mean_frame(&raw.darks);
    let mut sorted = flat.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let eps = (1e-6 * median).max(f64::MIN_POSITIVE);
    let mut clamped = 0usize;
    let denom: Vec<f64> = flat
        .iter()
        .zip(&dark)
        .map(|(&f, &d)| {
            let g = f - d;
            if g < eps {
                clamped += 1;
                eps
            } else {
                g
            }
        })
        .collect();
    if clamped == denom.len() {
        return Err(Error::InvalidData(
            "flats and darks are identical everywhere; the denominator vanishes".into(),
        ));
    }
    let proj = &raw.projections;
    let npx = proj.nu() * proj.nv();
    let mut data = Vec::with_capacity(proj.n_angles() * npx);
    for i in 0..proj.n_angles() {
        let p = proj.frame(i);
        for j in 0..npx {
            data.push((p[j] - dark[j]) / denom[j]);
        }
    }
    let set = ProjectionSet::new(proj.angles().to_vec(), proj.nu(), proj.nv(), proj.spacing_um, data)?;
    Ok((set, ClampReport { clamped }))
}

/// Pixelwise `-ln(n)` with values floored at ε = 1e-6 before the log;
/// the clamp count is reported.
pub fn to_attenuation(normalized: &ProjectionSet) -> Result<(ProjectionSet, ClampReport)> {
    const EPS: f64 = 1e-6;
    let mut clamped = 0usize;
    let data: Vec<f64> = normalized
        .data()
        .iter()
        .map(|&v| {
            let x = if v < EPS {
                clamped += 1;
                EPS
            } else {
                v
            };
            -x.ln()
        })
        .collect();
    let set = ProjectionSet::new(
        normalized.angles().to_vec(),
        normalized.nu(),
        normalized.nv(),
        normalized.spacing_um,
        data,
    )?;
    Ok((set, ClampReport { clamped }))
}
