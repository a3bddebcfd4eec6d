//! Measurement suite: threshold segmentation with box morphology,
//! maximum-extent metrology on volumes and projection sets, density
//! profiles, sinogram similarity and sub-pixel translation registration.
//!
//! Extents are measured between voxel/pixel centers in pixels; micrometers
//! are derived via the grid spacing, never primary. Reports always label
//! which grid each number came from.

use rayon::prelude::*;
use rustfft::num_complex::Complex;

use crate::error::{Error, Result};
use crate::fft::fft_2d;
use crate::grid::{Slice, Volume};
use crate::projector::{ProjectionSet, Sinogram};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2 {
    pub nx: usize,
    pub ny: usize,
    pub data: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub data: Vec<bool>,
}

impl Mask3 {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

impl Mask2 {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

/// Box structuring-element radii for the post-threshold cleanup; radius 0
/// skips the step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MorphParams {
    pub open_radius: usize,
    pub close_radius: usize,
}

/// One erosion (all = true) or dilation (any = true) pass along one axis
/// with window half-width r; out-of-grid counts as background.
fn axis_pass(data: &[bool], dims: [usize; 3], axis: usize, r: usize, erode: bool) -> Vec<bool> {
    let [nx, ny, nz] = dims;
    let stride = [1usize, nx, nx * ny];
    let len = dims[axis] as i64;
    let mut out = vec![false; data.len()];
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let pos = [x, y, z];
                let idx = x + y * nx + z * nx * ny;
                let p = pos[axis] as i64;
                let mut acc = erode;
                for d in -(r as i64)..=(r as i64) {
                    let q = p + d;
                    let value = if q < 0 || q >= len {
                        false
                    } else {
                        data[(idx as i64 + (q - p) * stride[axis] as i64) as usize]
                    };
                    if erode {
                        acc &= value;
                        if !acc {
                            break;
                        }
                    } else {
                        acc |= value;
                        if acc {
                            break;
                        }
                    }
                }
                out[idx] = acc;
            }
        }
    }
    out
}

/// Erosion/dilation with a box of half-width r, decomposed into per-axis
/// passes (exact for box structuring elements). Axes of length 1 are left
/// alone so 2D masks are not wiped out by the degenerate axis.
fn morph(data: Vec<bool>, dims: [usize; 3], r: usize, erode: bool) -> Vec<bool> {
    if r == 0 {
        return data;
    }
    let mut current = data;
    for axis in 0..3 {
        if dims[axis] > 1 {
            current = axis_pass(&current, dims, axis, r, erode);
        }
    }
    current
}

fn open_close(data: Vec<bool>, dims: [usize; 3], morph_params: &MorphParams) -> Vec<bool> {
    let mut m = data;
    if morph_params.open_radius > 0 {
        m = morph(m, dims, morph_params.open_radius, true);
        m = morph(m, dims, morph_params.open_radius, false);
    }
    if morph_params.close_radius > 0 {
        m = morph(m, dims, morph_params.close_radius, false);
        m = morph(m, dims, morph_params.close_radius, true);
    }
    m
}

/// Threshold a volume at τ (mask = data ≥ τ), then open/close with box
/// structuring elements. An empty mask is allowed.
pub fn segment_threshold_volume(volume: &Volume, tau: f64, morph_params: &MorphParams) -> Result<Mask3> {
    if !tau.is_finite() {
        return Err(Error::InvalidArgument("threshold must be finite".into()));
    }
    let data: Vec<bool> = volume.data().iter().map(|&v| v >= tau).collect();
    let dims = [volume.nx, volume.ny, volume.nz];
    Ok(Mask3 {
        nx: volume.nx,
        ny: volume.ny,
        nz: volume.nz,
        data: open_close(data, dims, morph_params),
    })
}

/// 2D variant of [`segment_threshold_volume`].
pub fn segment_threshold_slice(slice: &Slice, tau: f64, morph_params: &MorphParams) -> Result<Mask2> {
    if !tau.is_finite() {
        return Err(Error::InvalidArgument("threshold must be finite".into()));
    }
    let data: Vec<bool> = slice.data().iter().map(|&v| v >= tau).collect();
    let dims = [slice.nx, slice.ny, 1];
    Ok(Mask2 { nx: slice.nx, ny: slice.ny, data: open_close(data, dims, morph_params) })
}

// --- farthest-pair machinery ---------------------------------------------
//
// The maximum extent is an exact all-pairs search, made tractable by two
// loss-free reductions:
//  1. only boundary voxels can achieve the maximum (an interior voxel can
//     always be moved one step away from its partner, strictly increasing
//     the distance);
//  2. of each axis-aligned row of candidates, only the two extremes can
//     achieve it (squared distance is strictly convex along the row);
// plus a conservative prune: with centroid m and R(p) = |p - m|, a pair
// (p, q) satisfies |p - q| <= R(p) + R(q), so any point with
// R(p) + max R < best known distance cannot beat that bound.

fn dist2<const N: usize>(a: [i64; N], b: [i64; N]) -> i64 {
    let mut acc = 0;
    for i in 0..N {
        let d = a[i] - b[i];
        acc += d * d;
    }
    acc
}

/// Keep only the per-row extremes: for points grouped by all coordinates but
/// `axis`, the minimum and maximum along `axis`.
fn row_extremes<const N: usize>(points: &[[i64; N]], axis: usize) -> Vec<[i64; N]> {
    use std::collections::HashMap;
    let mut rows: HashMap<[i64; N], ([i64; N], [i64; N])> = HashMap::new();
    for &p in points {
        let mut key = p;
        key[axis] = 0;
        rows.entry(key)
            .and_modify(|(lo, hi)| {
                if p[axis] < lo[axis] {
                    *lo = p;
                }
                if p[axis] > hi[axis] {
                    *hi = p;
                }
            })
            .or_insert((p, p));
    }
    let mut out = Vec::with_capacity(rows.len() * 2);
    for (lo, hi) in rows.into_values() {
        out.push(lo);
        if hi != lo {
            out.push(hi);
        }
    }
    out
}

/// Exact farthest pair with deterministic lexicographic tie-break:
/// maximal d², then smallest (p1, p2) with p1 <= p2.
fn farthest_pair<const N: usize>(candidates: &[[i64; N]]) -> (i64, [i64; N], [i64; N]) {
    assert!(!candidates.is_empty());
    if candidates.len() == 1 {
        return (0, candidates[0], candidates[0]);
    }
    // Lower bound by iterated farthest-point from a few extreme seeds.
    let mut seeds: Vec<[i64; N]> = Vec::new();
    for axis in 0..N {
        seeds.push(*candidates.iter().min_by_key(|p| p[axis]).unwrap());
        seeds.push(*candidates.iter().max_by_key(|p| p[axis]).unwrap());
    }
    let farthest_from = |p: [i64; N]| -> [i64; N] {
        *candidates
            .iter()
            .max_by(|&&a, &&b| dist2(p, a).cmp(&dist2(p, b)))
            .unwrap()
    };
    let mut best = 0i64;
    for seed in seeds {
        let mut p = seed;
        for _ in 0..6 {
            let q = farthest_from(p);
            let d = dist2(p, q);
            if d > best {
                best = d;
            } else {
                break;
            }
            p = q;
        }
    }
    // Prune against the centroid-radius bound.
    let mut centroid = [0.0f64; N];
    for p in candidates {
        for i in 0..N {
            centroid[i] += p[i] as f64;
        }
    }
    for c in centroid.iter_mut() {
        *c /= candidates.len() as f64;
    }
    let radius = |p: &[i64; N]| -> f64 {
        let mut acc = 0.0;
        for i in 0..N {
            let d = p[i] as f64 - centroid[i];
            acc += d * d;
        }
        acc.sqrt()
    };
    let r_max = candidates.iter().map(|p| radius(p)).fold(0.0, f64::max);
    let bound = (best as f64).sqrt() - 1e-6;
    let survivors: Vec<[i64; N]> = candidates
        .iter()
        .copied()
        .filter(|p| radius(p) + r_max >= bound)
        .collect();
    // Exact all-pairs over the survivors.
    let reduce = |lhs: (i64, [i64; N], [i64; N]), rhs: (i64, [i64; N], [i64; N])| {
        match lhs.0.cmp(&rhs.0) {
            std::cmp::Ordering::Greater => lhs,
            std::cmp::Ordering::Less => rhs,
            std::cmp::Ordering::Equal => {
                if (lhs.1, lhs.2) <= (rhs.1, rhs.2) {
                    lhs
                } else {
                    rhs
                }
            }
        }
    };
    survivors
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            let mut local = (0i64, p, p);
            for &q in &survivors[i + 1..] {
                let d = dist2(p, q);
                let (lo, hi) = if p <= q { (p, q) } else { (q, p) };
                local = reduce(local, (d, lo, hi));
            }
            local
        })
        .reduce(|| (0, survivors[0], survivors[0]), reduce)
}

fn boundary_voxels(mask: &Mask3) -> Vec<[i64; 3]> {
    let (nx, ny, nz) = (mask.nx, mask.ny, mask.nz);
    let at = |x: i64, y: i64, z: i64| -> bool {
        if x < 0 || y < 0 || z < 0 || x >= nx as i64 || y >= ny as i64 || z >= nz as i64 {
            false
        } else {
            mask.data[(z as usize * ny + y as usize) * nx + x as usize]
        }
    };
    let mut out = Vec::new();
    for z in 0..nz as i64 {
        for y in 0..ny as i64 {
            for x in 0..nx as i64 {
                if at(x, y, z)
                    && !(at(x - 1, y, z)
                        && at(x + 1, y, z)
                        && at(x, y - 1, z)
                        && at(x, y + 1, z)
                        && at(x, y, z - 1)
                        && at(x, y, z + 1))
                {
                    out.push([x, y, z]);
                }
            }
        }
    }
    out
}

fn boundary_pixels(data: &[f64], nx: usize, ny: usize, tau: f64) -> Vec<[i64; 2]> {
    let at = |x: i64, y: i64| -> bool {
        if x < 0 || y < 0 || x >= nx as i64 || y >= ny as i64 {
            false
        } else {
            data[y as usize * nx + x as usize] >= tau
        }
    };
    let mut out = Vec::new();
    for y in 0..ny as i64 {
        for x in 0..nx as i64 {
            if at(x, y) && !(at(x - 1, y) && at(x + 1, y) && at(x, y - 1) && at(x, y + 1)) {
                out.push([x, y]);
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeExtent {
    pub length_px: f64,
    pub p1: [usize; 3],
    pub p2: [usize; 3],
}

/// Maximum Euclidean distance between boundary voxels of the mask, exact,
/// ties broken by the lexicographically smallest (p1, p2).
pub fn max_extent_volume(mask: &Mask3) -> Result<VolumeExtent> {
    let boundary = boundary_voxels(mask);
    if boundary.is_empty() {
        return Err(Error::Empty("mask has no voxels".into()));
    }
    let candidates = row_extremes(&boundary, 0);
    let (d2, p1, p2) = farthest_pair(&candidates);
    let to_usize = |p: [i64; 3]| [p[0] as usize, p[1] as usize, p[2] as usize];
    Ok(VolumeExtent {
        length_px: (d2 as f64).sqrt(),
        p1: to_usize(p1),
        p2: to_usize(p2),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionExtent {
    pub length_px: f64,
    pub angle_deg: f64,
    pub angle_index: usize,
    pub p1: [usize; 2],
    pub p2: [usize; 2],
}

/// Per-frame silhouette (≥ τ) maximum extent, returning the frame that
/// maximizes it; ties go to the smallest angle.
pub fn max_extent_projections(set: &ProjectionSet, tau: f64) -> Result<ProjectionExtent> {
    let per_frame: Vec<Option<(i64, [i64; 2], [i64; 2])>> = (0..set.n_angles())
        .into_par_iter()
        .map(|i| {
            let boundary = boundary_pixels(set.frame(i), set.nu(), set.nv(), tau);
            if boundary.is_empty() {
                return None;
            }
            let candidates = row_extremes(&boundary, 0);
            Some(farthest_pair(&candidates))
        })
        .collect();
    let mut best: Option<(i64, usize, [i64; 2], [i64; 2])> = None;
    for (i, entry) in per_frame.into_iter().enumerate() {
        if let Some((d2, p1, p2)) = entry {
            let better = match &best {
                None => true,
                Some((bd2, ..)) => d2 > *bd2,
            };
            if better {
                best = Some((d2, i, p1, p2));
            }
        }
    }
    let (d2, idx, p1, p2) = best.ok_or_else(|| {
        Error::Empty(format!("no frame has pixels >= {tau}"))
    })?;
    Ok(ProjectionExtent {
        length_px: (d2 as f64).sqrt(),
        angle_deg: set.angles()[idx],
        angle_index: idx,
        p1: [p1[0] as usize, p1[1] as usize],
        p2: [p2[0] as usize, p2[1] as usize],
    })
}

/// Side-by-side report of the two extent measurements; `pass` compares the
/// absolute pixel difference against the caller's tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementReport {
    pub volume_length_px: f64,
    pub volume_length_um: f64,
    pub volume_p1: [usize; 3],
    pub volume_p2: [usize; 3],
    pub projection_length_px: f64,
    pub projection_length_um: f64,
    pub projection_angle_deg: f64,
    pub projection_p1: [usize; 2],
    pub projection_p2: [usize; 2],
    pub difference_px: f64,
    pub tolerance_px: f64,
    pub pass: bool,
}

pub fn compare_extents(
    vol: &VolumeExtent,
    proj: &ProjectionExtent,
    spacing_um: f64,
    tolerance_px: f64,
) -> MeasurementReport {
    let difference_px = (vol.length_px - proj.length_px).abs();
    MeasurementReport {
        volume_length_px: vol.length_px,
        volume_length_um: vol.length_px * spacing_um,
        volume_p1: vol.p1,
        volume_p2: vol.p2,
        projection_length_px: proj.length_px,
        projection_length_um: proj.length_px * spacing_um,
        projection_angle_deg: proj.angle_deg,
        projection_p1: proj.p1,
        projection_p2: proj.p2,
        difference_px,
        tolerance_px,
        pass: difference_px <= tolerance_px,
    }
}

impl std::fmt::Display for MeasurementReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "volume grid:     max extent {:.4} px ({:.2} um) between {:?} and {:?}",
            self.volume_length_px, self.volume_length_um, self.volume_p1, self.volume_p2
        )?;
        writeln!(
            f,
            "projection grid: max extent {:.4} px ({:.2} um) at angle {} deg between {:?} and {:?}",
            self.projection_length_px,
            self.projection_length_um,
            self.projection_angle_deg,
            self.projection_p1,
            self.projection_p2
        )?;
        writeln!(
            f,
            "difference:      {:.4} px (tolerance {} px) -> {}",
            self.difference_px,
            self.tolerance_px,
            if self.pass { "pass" } else { "FAIL" }
        )
    }
}

impl MeasurementReport {
    pub fn to_csv(&self) -> String {
        format!(
            "quantity,value\nvolume_length_px,{}\nvolume_length_um,{}\nprojection_length_px,{}\nprojection_length_um,{}\nprojection_angle_deg,{}\ndifference_px,{}\ntolerance_px,{}\npass,{}\n",
            self.volume_length_px,
            self.volume_length_um,
            self.projection_length_px,
            self.projection_length_um,
            self.projection_angle_deg,
            self.difference_px,
            self.tolerance_px,
            if self.pass { 1 } else { 0 }
        )
    }
}

/// One detector column top-to-bottom.
pub fn density_profile(image: &Slice, u: usize) -> Result<Vec<f64>> {
    if u >= image.nx {
        return Err(Error::InvalidArgument(format!("column {u} outside 0..{}", image.nx)));
    }
    Ok((0..image.ny).map(|v| image.at(u, v)).collect())
}

pub fn profile_to_csv(profile: &[f64]) -> String {
    let mut out = String::from("row,value\n");
    for (i, v) in profile.iter().enumerate() {
        out.push_str(&format!("{i},{v}\n"));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityReport {
    /// RMSE normalized by the reference's dynamic range; `None` when the
    /// reference is constant.
    pub nrmse: Option<f64>,
    /// Pearson correlation; `None` when either input has zero variance.
    pub pearson_r: Option<f64>,
}

/// Element-wise similarity of two sinograms of identical shape. `b` is the
/// reference for the NRMSE normalization.
pub fn sinogram_similarity(a: &Sinogram, b: &Sinogram) -> Result<SimilarityReport> {
    if a.n_angles() != b.n_angles() || a.nu() != b.nu() {
        return Err(Error::DimensionMismatch(format!(
            "sinograms are {}x{} vs {}x{}",
            a.n_angles(),
            a.nu(),
            b.n_angles(),
            b.nu()
        )));
    }
    let n = a.data().len() as f64;
    let (sa, sb) = (
        a.data().iter().sum::<f64>() / n,
        b.data().iter().sum::<f64>() / n,
    );
    let mut sq_diff = 0.0;
    let mut cov = 0.0;
    let mut var_a = 0.0;
    let mut var_b = 0.0;
    let mut min_b = f64::INFINITY;
    let mut max_b = f64::NEG_INFINITY;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        let d = x - y;
        sq_diff += d * d;
        cov += (x - sa) * (y - sb);
        var_a += (x - sa) * (x - sa);
        var_b += (y - sb) * (y - sb);
        min_b = min_b.min(y);
        max_b = max_b.max(y);
    }
    let range = max_b - min_b;
    let nrmse = if range > 0.0 {
        Some((sq_diff / n).sqrt() / range)
    } else {
        None
    };
    let pearson_r = if var_a > 0.0 && var_b > 0.0 {
        Some(cov / (var_a.sqrt() * var_b.sqrt()))
    } else {
        None
    };
    Ok(SimilarityReport { nrmse, pearson_r })
}

/// Translation (du, dv) such that shifting `a` by it best matches `b`:
/// integer argmax of the FFT cross-correlation of the mean-subtracted
/// images, refined per axis by a 3-point parabolic fit.
pub fn registration_offset(a: &Slice, b: &Slice) -> Result<(f64, f64)> {
    if a.nx != b.nx || a.ny != b.ny {
        return Err(Error::DimensionMismatch(format!(
            "images are {}x{} vs {}x{}",
            a.nx, a.ny, b.nx, b.ny
        )));
    }
    let n = (a.nx * a.ny) as f64;
    let mean_a = a.data().iter().sum::<f64>() / n;
    let mean_b = b.data().iter().sum::<f64>() / n;
    let var = |d: &[f64], m: f64| d.iter().map(|&v| (v - m) * (v - m)).sum::<f64>();
    if var(a.data(), mean_a) == 0.0 || var(b.data(), mean_b) == 0.0 {
        return Err(Error::InvalidData("cannot register flat images".into()));
    }
    let (nx, ny) = (a.nx, a.ny);
    let mut fa: Vec<Complex<f64>> = a.data().iter().map(|&v| Complex::new(v - mean_a, 0.0)).collect();
    let mut fb: Vec<Complex<f64>> = b.data().iter().map(|&v| Complex::new(v - mean_b, 0.0)).collect();
    fft_2d(&mut fa, nx, ny, false);
    fft_2d(&mut fb, nx, ny, false);
    let mut cross: Vec<Complex<f64>> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
    fft_2d(&mut cross, nx, ny, true);
    let corr: Vec<f64> = cross.iter().map(|c| c.re).collect();
    let (mut best, mut best_idx) = (f64::NEG_INFINITY, 0usize);
    for (i, &v) in corr.iter().enumerate() {
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    let (px, py) = (best_idx % nx, best_idx / nx);
    let wrap = |i: i64, len: usize| -> usize { i.rem_euclid(len as i64) as usize };
    let refine = |prev: f64, curr: f64, next: f64| -> f64 {
        let denom = prev - 2.0 * curr + next;
        if denom.abs() < 1e-12 * curr.abs().max(1.0) {
            return 0.0;
        }
        let delta = ((prev - next) / (2.0 * denom)).clamp(-0.5, 0.5);
        // Below FFT rounding noise the refinement is meaningless; keep
        // integer-shift results exact.
        if delta.abs() < 1e-9 {
            0.0
        } else {
            delta
        }
    };
    let dx = refine(
        corr[py * nx + wrap(px as i64 - 1, nx)],
        corr[py * nx + px],
        corr[py * nx + wrap(px as i64 + 1, nx)],
    );
    let dy = refine(
        corr[wrap(py as i64 - 1, ny) * nx + px],
        corr[py * nx + px],
        corr[wrap(py as i64 + 1, ny) * nx + px],
    );
    let lag = |idx: usize, len: usize| -> f64 {
        if idx <= len / 2 {
            idx as f64
        } else {
            idx as f64 - len as f64
        }
    };
    Ok((lag(px, nx) + dx, lag(py, ny) + dy))
}
