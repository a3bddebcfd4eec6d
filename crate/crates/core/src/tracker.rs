//! Fixed-point detection and tracking across a projection set.
//!
//! Three detectors:
//! - `apex`: the sample's top, i.e. the smallest row with any pixel above the
//!   background threshold, with the supra-threshold intensity centroid of
//!   that row as the column (a single-pixel argmax is unstable under
//!   interpolation; the centroid is the deterministic tie-break).
//! - `centroid`: intensity-weighted centroid of the whole frame (the
//!   attenuation center).
//! - `marker`: centroid of a small window around the global maximum after
//!   3×3 mean smoothing, for a dense bead.

use rayon::prelude::*;

use crate::linalg::solve3;

use crate::error::{Error, Result};
use crate::grid::Slice;
use crate::projector::ProjectionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackMethod {
    Apex,
    Centroid,
    Marker,
}

impl std::str::FromStr for TrackMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apex" => Ok(TrackMethod::Apex),
            "centroid" => Ok(TrackMethod::Centroid),
            "marker" => Ok(TrackMethod::Marker),
            other => Err(Error::InvalidArgument(format!(
                "unknown tracker method {other:?}; expected apex, centroid or marker"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerParams {
    /// Background threshold. `None` uses 5% of the frame's maximum, which
    /// survives exposure changes.
    pub tau_bg: Option<f64>,
    /// Side length of the centroid window around the marker maximum.
    pub marker_window: usize,
}

impl Default for TrackerParams {
    fn default() -> Self {
        TrackerParams { tau_bg: None, marker_window: 9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    pub u: f64,
    pub v: f64,
    pub valid: bool,
}

impl TrackPoint {
    fn invalid() -> Self {
        TrackPoint { u: f64::NAN, v: f64::NAN, valid: false }
    }
}

/// Per-angle detector coordinates of one tracked fixed point.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointTrack {
    pub method: TrackMethod,
    pub angles: Vec<f64>,
    pub points: Vec<TrackPoint>,
}

impl FixedPointTrack {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.points.iter().filter(|p| p.valid).count()
    }

    pub fn valid_entries(&self) -> impl Iterator<Item = (f64, &TrackPoint)> + '_ {
        self.angles
            .iter()
            .zip(&self.points)
            .filter(|(_, p)| p.valid)
            .map(|(&a, p)| (a, p))
    }
}

fn resolve_tau(image: &Slice, params: &TrackerParams) -> f64 {
    params.tau_bg.unwrap_or_else(|| 0.05 * image.max_value())
}

fn detect_apex(image: &Slice, tau: f64) -> Option<(f64, f64)> {
    for v in 0..image.ny {
        let row = image.row(v);
        let mut mass = 0.0;
        let mut moment = 0.0;
        for (u, &value) in row.iter().enumerate() {
            if value > tau {
                mass += value;
                moment += u as f64 * value;
            }
        }
        if mass > 0.0 {
            return Some((moment / mass, v as f64));
        }
    }
    None
}

fn detect_centroid(image: &Slice, tau: f64) -> Option<(f64, f64)> {
    if !image.data().iter().any(|&v| v > tau) {
        return None;
    }
    let mut mass = 0.0;
    let mut mu = 0.0;
    let mut mv = 0.0;
    for v in 0..image.ny {
        for (u, &value) in image.row(v).iter().enumerate() {
            mass += value;
            mu += u as f64 * value;
            mv += v as f64 * value;
        }
    }
    if mass <= 0.0 {
        return None;
    }
    Some((mu / mass, mv / mass))
}

/// 3×3 mean with the kernel renormalized at the borders.
fn smooth_3x3(image: &Slice) -> Vec<f64> {
    let (nx, ny) = (image.nx, image.ny);
    let mut out = vec![0.0; nx * ny];
    for v in 0..ny as i64 {
        for u in 0..nx as i64 {
            let mut sum = 0.0;
            let mut count = 0.0;
            for dv in -1..=1 {
                for du in -1..=1 {
                    let (uu, vv) = (u + du, v + dv);
                    if uu >= 0 && vv >= 0 && uu < nx as i64 && vv < ny as i64 {
                        sum += image.at(uu as usize, vv as usize);
                        count += 1.0;
                    }
                }
            }
            out[(v * nx as i64 + u) as usize] = sum / count;
        }
    }
    out
}

/// Plane-subtracted centroid of the window centered at (mu, mv).
///
/// The window sits on whatever the rest of the sample projects there; a
/// constant or sloped pedestal would drag a plain centroid by tenths of a
/// pixel, so a plane fitted to the window's border ring (which the bead
/// does not reach) is subtracted first, negatives clamped to zero.
fn window_centroid(
    smoothed: &[f64],
    nx: usize,
    ny: usize,
    mu: usize,
    mv: usize,
    window: usize,
) -> Option<(f64, f64)> {
    let half = (window.max(1) / 2) as i64;
    let u0 = (mu as i64 - half).max(0) as usize;
    let u1 = ((mu as i64 + half) as usize).min(nx - 1);
    let v0 = (mv as i64 - half).max(0) as usize;
    let v1 = ((mv as i64 + half) as usize).min(ny - 1);
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for v in v0..=v1 {
        for u in u0..=u1 {
            if u != u0 && u != u1 && v != v0 && v != v1 {
                continue;
            }
            let basis = [1.0, (u as f64) - mu as f64, (v as f64) - mv as f64];
            let value = smoothed[v * nx + u];
            for i in 0..3 {
                for j in 0..3 {
                    m[i][j] += basis[i] * basis[j];
                }
                rhs[i] += basis[i] * value;
            }
        }
    }
    let background = solve3(m, rhs).unwrap_or([0.0, 0.0, 0.0]);
    let mut mass = 0.0;
    let mut sum_u = 0.0;
    let mut sum_v = 0.0;
    for v in v0..=v1 {
        for u in u0..=u1 {
            let plane = background[0]
                + background[1] * ((u as f64) - mu as f64)
                + background[2] * ((v as f64) - mv as f64);
            let value = (smoothed[v * nx + u] - plane).max(0.0);
            mass += value;
            sum_u += u as f64 * value;
            sum_v += v as f64 * value;
        }
    }
    if mass <= 0.0 {
        return None;
    }
    Some((sum_u / mass, sum_v / mass))
}

fn detect_marker(image: &Slice, tau: f64, window: usize) -> Option<(f64, f64)> {
    let (nx, ny) = (image.nx, image.ny);
    let smoothed = smooth_3x3(image);
    let (mut best, mut best_idx) = (f64::NEG_INFINITY, 0usize);
    for (i, &v) in smoothed.iter().enumerate() {
        if v > best {
            best = v;
            best_idx = i;
        }
    }
    if best <= tau {
        return None;
    }
    let (mu, mv) = (best_idx % nx, best_idx / nx);
    let (u, v) = window_centroid(&smoothed, nx, ny, mu, mv, window)?;
    // Re-center the window on the first estimate: the argmax pixel
    // quantizes the window placement, which otherwise couples the pedestal
    // into a sub-pixel sawtooth along the orbit.
    let (ru, rv) = (u.round().clamp(0.0, (nx - 1) as f64), v.round().clamp(0.0, (ny - 1) as f64));
    window_centroid(&smoothed, nx, ny, ru as usize, rv as usize, window)
}

/// Locate the fixed point in one frame. A frame with nothing above the
/// background threshold yields `None` (flagged, not fatal).
pub fn detect_fixed_point(
    image: &Slice,
    method: TrackMethod,
    params: &TrackerParams,
) -> Option<(f64, f64)> {
    let tau = resolve_tau(image, params);
    if !tau.is_finite() {
        return None;
    }
    match method {
        TrackMethod::Apex => detect_apex(image, tau),
        TrackMethod::Centroid => detect_centroid(image, tau),
        TrackMethod::Marker => detect_marker(image, tau, params.marker_window),
    }
}

/// Run the detector on every frame. Invalid frames are flagged; if fewer
/// than half the frames are valid the track is rejected with counts.
pub fn track_fixed_points(
    set: &ProjectionSet,
    method: TrackMethod,
    params: &TrackerParams,
) -> Result<FixedPointTrack> {
    let points: Vec<TrackPoint> = (0..set.n_angles())
        .into_par_iter()
        .map(|i| {
            let frame = set.frame_slice(i);
            match detect_fixed_point(&frame, method, params) {
                Some((u, v)) => TrackPoint { u, v, valid: true },
                None => TrackPoint::invalid(),
            }
        })
        .collect();
    let valid = points.iter().filter(|p| p.valid).count();
    let total = points.len();
    if valid * 2 < total {
        return Err(Error::TrackRejected(format!(
            "only {valid} of {total} frames produced a fixed point"
        )));
    }
    Ok(FixedPointTrack { method, angles: set.angles().to_vec(), points })
}

/// Track CSV: `index,angle_deg,u,v,valid`. Invalid rows carry NaN coordinates.
pub fn track_to_csv(track: &FixedPointTrack) -> String {
    let method = match track.method {
        TrackMethod::Apex => "apex",
        TrackMethod::Centroid => "centroid",
        TrackMethod::Marker => "marker",
    };
    let mut out = format!("method,{method}\nindex,angle_deg,u,v,valid\n");
    for (i, (a, p)) in track.angles.iter().zip(&track.points).enumerate() {
        out.push_str(&format!(
            "{i},{a},{},{},{}\n",
            p.u,
            p.v,
            if p.valid { 1 } else { 0 }
        ));
    }
    out
}

pub fn track_from_csv(text: &str) -> Result<FixedPointTrack> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty track file".into()))?;
    let method = match header.trim() {
        "method,apex" => TrackMethod::Apex,
        "method,centroid" => TrackMethod::Centroid,
        "method,marker" => TrackMethod::Marker,
        other => return Err(Error::Format(format!("bad track header {other:?}"))),
    };
    let _columns = lines
        .next()
        .ok_or_else(|| Error::Format("track missing column header".into()))?;
    let mut angles = Vec::new();
    let mut points = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Format(format!("track row {}: expected 5 fields", n + 1)));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::Format(format!("track row {}: bad number {s:?}", n + 1)))
        };
        angles.push(num(fields[1])?);
        let valid = match fields[4].trim() {
            "1" => true,
            "0" => false,
            other => return Err(Error::Format(format!("track row {}: bad flag {other:?}", n + 1))),
        };
        points.push(TrackPoint { u: num(fields[2])?, v: num(fields[3])?, valid });
    }
    Ok(FixedPointTrack { method, angles, points })
}
