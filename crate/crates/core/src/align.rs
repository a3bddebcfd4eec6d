//! The virtual alignment method: vertical common-layer alignment, sinusoid
//! trajectory fitting, and horizontal realignment to either the fitted ideal
//! trajectory or the virtual center of rotation.
//!
//! An ideally aligned fixed point traces `u(θ) = c + A·cos(θ + φ)` across
//! projection angles (equivalently `c + a·cos θ + b·sin θ` with
//! `a = A·cos φ`, `b = -A·sin φ`). Aligning every frame so the measured
//! fixed point lands back on that sinusoid removes per-frame translation
//! errors; aligning it onto the constant center column instead makes the
//! fixed point itself play the rotation axis (the virtual COR), which
//! translates the reconstruction by the fixed point's slice coordinates.
//!
//! One caveat is inherent: any injected error of the form
//! `a·cos θ + b·sin θ + c` is itself a valid trajectory and is absorbed into
//! the fit, so recovered shifts are meaningful up to a global translation.
//! Verification therefore compares reconstructions after translation
//! registration rather than raw shifts.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::shift_image;
use crate::projector::ProjectionSet;
use crate::tracker::{track_fixed_points, FixedPointTrack, TrackMethod, TrackerParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlignMode {
    /// Fixed point lands on the fitted sinusoid.
    Ideal,
    /// Fixed point lands on the constant center column c0.
    VirtualCor,
}

impl std::str::FromStr for AlignMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(AlignMode::Ideal),
            "virtual-cor" | "virtual_cor" | "vcor" => Ok(AlignMode::VirtualCor),
            other => Err(Error::InvalidArgument(format!(
                "unknown alignment mode {other:?}; expected ideal or virtual-cor"
            ))),
        }
    }
}

/// Fitted sinusoid trajectory `u(θ) = c + A·cos(θ + φ)`, φ in degrees
/// normalized to (-180, 180].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryModel {
    pub amplitude: f64,
    pub phase_deg: f64,
    pub center: f64,
    pub rms_residual: f64,
    pub max_residual: f64,
}

impl TrajectoryModel {
    pub fn u_at(&self, theta_deg: f64) -> f64 {
        self.center + self.amplitude * (theta_deg + self.phase_deg).to_radians().cos()
    }

    /// The equivalent (a, b) of `c + a·cos θ + b·sin θ`.
    pub fn cos_sin_coefficients(&self) -> (f64, f64) {
        let phi = self.phase_deg.to_radians();
        (self.amplitude * phi.cos(), -self.amplitude * phi.sin())
    }
}

use crate::linalg::solve3;

/// Least-squares fit of `u(θ) ≈ c + a·cos θ + b·sin θ` over the valid track
/// entries. Needs at least 3 valid points spanning at least 90° of angular
/// range, otherwise the three basis functions are not separable.
pub fn fit_trajectory(track: &FixedPointTrack) -> Result<TrajectoryModel> {
    let samples: Vec<(f64, f64)> = track.valid_entries().map(|(a, p)| (a, p.u)).collect();
    if samples.len() < 3 {
        return Err(Error::FitRejected(format!(
            "{} valid points; the sinusoid fit needs at least 3",
            samples.len()
        )));
    }
    let span = samples.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max)
        - samples.iter().map(|s| s.0).fold(f64::INFINITY, f64::min);
    if span < 90.0 {
        return Err(Error::FitRejected(format!(
            "valid points span only {span:.1} degrees; need at least 90"
        )));
    }
    let mut m = [[0.0f64; 3]; 3];
    let mut rhs = [0.0f64; 3];
    for &(theta, u) in &samples {
        let r = theta.to_radians();
        let basis = [1.0, r.cos(), r.sin()];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            rhs[i] += basis[i] * u;
        }
    }
    let [c, a, b] =
        solve3(m, rhs).ok_or_else(|| Error::FitRejected("rank-deficient normal equations".into()))?;
    let amplitude = a.hypot(b);
    let phase_deg = if amplitude == 0.0 { 0.0 } else { (-b).atan2(a).to_degrees() };
    let mut sq = 0.0;
    let mut max = 0.0f64;
    for &(theta, u) in &samples {
        let r = theta.to_radians();
        let res = (u - (c + a * r.cos() + b * r.sin())).abs();
        sq += res * res;
        max = max.max(res);
    }
    Ok(TrajectoryModel {
        amplitude,
        phase_deg,
        center: c,
        rms_residual: (sq / samples.len() as f64).sqrt(),
        max_residual: max,
    })
}

/// Linearly interpolate values for invalid entries from their valid angular
/// neighbors; ends clamp to the nearest valid value.
fn fill_invalid_by_angle(angles: &[f64], values: &[Option<f64>]) -> Result<Vec<f64>> {
    let valid: Vec<usize> = (0..values.len()).filter(|&i| values[i].is_some()).collect();
    if valid.is_empty() {
        return Err(Error::Empty("no valid entries to interpolate from".into()));
    }
    let mut out = Vec::with_capacity(values.len());
    for i in 0..values.len() {
        if let Some(v) = values[i] {
            out.push(v);
            continue;
        }
        let next = valid.partition_point(|&j| j < i);
        let filled = if next == 0 {
            values[valid[0]].unwrap()
        } else if next == valid.len() {
            values[*valid.last().unwrap()].unwrap()
        } else {
            let (j, k) = (valid[next - 1], valid[next]);
            let (vj, vk) = (values[j].unwrap(), values[k].unwrap());
            let t = (angles[i] - angles[j]) / (angles[k] - angles[j]);
            vj + (vk - vj) * t
        };
        out.push(filled);
    }
    Ok(out)
}

fn shift_frames(set: &ProjectionSet, du: &[f64], dv: &[f64]) -> Result<ProjectionSet> {
    set.map_frames(|i, frame| shift_image(frame, set.nu(), set.nv(), du[i], dv[i]))
}

/// Shift every projection vertically so the fixed point lands on
/// `target_row` (default: the median of the valid rows, which minimizes the
/// total shift and is outlier-robust). Returns the aligned set, the updated
/// track (constant v on valid entries) and the applied per-angle dv.
pub fn vertical_align(
    set: &ProjectionSet,
    track: &FixedPointTrack,
    target_row: Option<f64>,
) -> Result<(ProjectionSet, FixedPointTrack, Vec<f64>)> {
    if track.len() != set.n_angles() {
        return Err(Error::DimensionMismatch(format!(
            "track has {} entries for {} projections",
            track.len(),
            set.n_angles()
        )));
    }
    if track.valid_count() * 2 < track.len() {
        return Err(Error::TrackRejected(format!(
            "only {} of {} track entries are valid",
            track.valid_count(),
            track.len()
        )));
    }
    let target = match target_row {
        Some(t) => t,
        None => {
            // Lower median: outlier-robust, and for the apex tracker's
            // integer rows it keeps the target (and so the shifts) integer,
            // which preserves exact row alignment.
            let mut vs: Vec<f64> = track.points.iter().filter(|p| p.valid).map(|p| p.v).collect();
            vs.sort_by(f64::total_cmp);
            vs[(vs.len() - 1) / 2]
        }
    };
    let wanted: Vec<Option<f64>> = track
        .points
        .iter()
        .map(|p| p.valid.then_some(target - p.v))
        .collect();
    let dv = fill_invalid_by_angle(&track.angles, &wanted)?;
    let du = vec![0.0; dv.len()];
    let aligned = shift_frames(set, &du, &dv)?;
    let mut new_track = track.clone();
    for p in new_track.points.iter_mut().filter(|p| p.valid) {
        p.v = target;
    }
    Ok((aligned, new_track, dv))
}

/// Shift every projection horizontally so the fixed point lands on the mode's
/// target: the fitted trajectory (`Ideal`) or the constant center column
/// (`VirtualCor`). Invalid frames receive shifts interpolated in angle.
pub fn horizontal_align(
    set: &ProjectionSet,
    track: &FixedPointTrack,
    model: &TrajectoryModel,
    mode: AlignMode,
) -> Result<(ProjectionSet, Vec<f64>)> {
    if track.len() != set.n_angles() {
        return Err(Error::DimensionMismatch(format!(
            "track has {} entries for {} projections",
            track.len(),
            set.n_angles()
        )));
    }
    let c0 = set.geometry().center_column();
    let wanted: Vec<Option<f64>> = track
        .points
        .iter()
        .zip(&track.angles)
        .map(|(p, &theta)| {
            p.valid.then(|| match mode {
                AlignMode::Ideal => model.u_at(theta) - p.u,
                AlignMode::VirtualCor => c0 - p.u,
            })
        })
        .collect();
    let du = fill_invalid_by_angle(&track.angles, &wanted)?;
    let dv = vec![0.0; du.len()];
    let aligned = shift_frames(set, &du, &dv)?;
    Ok((aligned, du))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignmentEntry {
    pub angle_deg: f64,
    pub du: f64,
    pub dv: f64,
    /// Whether both shifts came from direct measurements (false means the
    /// frame's shifts were interpolated from angular neighbors).
    pub valid: bool,
}

/// Audit trail of one VAM run: every applied shift and the fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentReport {
    pub mode: AlignMode,
    pub method: TrackMethod,
    pub target_row: f64,
    pub model: TrajectoryModel,
    pub entries: Vec<AlignmentEntry>,
    /// RMS/max of the re-measured fixed point against the mode's target,
    /// after alignment.
    pub final_rms: f64,
    pub final_max: f64,
}

fn tag_stage(stage: &str, e: Error) -> Error {
    use Error::*;
    match e {
        DimensionMismatch(m) => DimensionMismatch(format!("{stage}: {m}")),
        InvalidArgument(m) => InvalidArgument(format!("{stage}: {m}")),
        InvalidData(m) => InvalidData(format!("{stage}: {m}")),
        TrackRejected(m) => TrackRejected(format!("{stage}: {m}")),
        FitRejected(m) => FitRejected(format!("{stage}: {m}")),
        Empty(m) => Empty(format!("{stage}: {m}")),
        Format(m) => Format(format!("{stage}: {m}")),
        Io(e) => Io(e),
    }
}

/// The full method: track → vertical align → re-track → fit trajectory →
/// horizontal align, with a complete report. The horizontal fit deliberately
/// uses the post-vertical re-track: vertical motion can perturb detection,
/// so the fit must see vertically clean frames.
pub fn vam_align(
    set: &ProjectionSet,
    method: TrackMethod,
    params: &TrackerParams,
    mode: AlignMode,
    target_row: Option<f64>,
) -> Result<(ProjectionSet, AlignmentReport)> {
    let track0 =
        track_fixed_points(set, method, params).map_err(|e| tag_stage("track", e))?;
    let (vset, _vtrack, dv) =
        vertical_align(set, &track0, target_row).map_err(|e| tag_stage("vertical-align", e))?;
    let target = track0
        .points
        .iter()
        .zip(&dv)
        .find(|(p, _)| p.valid)
        .map(|(p, d)| p.v + d)
        .expect("vertical_align guarantees at least one valid entry");
    let track2 =
        track_fixed_points(&vset, method, params).map_err(|e| tag_stage("re-track", e))?;
    let model = fit_trajectory(&track2).map_err(|e| tag_stage("fit", e))?;
    let (hset, du) =
        horizontal_align(&vset, &track2, &model, mode).map_err(|e| tag_stage("horizontal-align", e))?;
    // Re-measure against the mode's target for the report.
    let track3 =
        track_fixed_points(&hset, method, params).map_err(|e| tag_stage("verify-track", e))?;
    let c0 = set.geometry().center_column();
    let residuals: Vec<f64> = track3
        .valid_entries()
        .map(|(theta, p)| {
            let want = match mode {
                AlignMode::Ideal => model.u_at(theta),
                AlignMode::VirtualCor => c0,
            };
            (p.u - want).abs()
        })
        .collect();
    let final_rms = if residuals.is_empty() {
        f64::NAN
    } else {
        (residuals.iter().map(|r| r * r).sum::<f64>() / residuals.len() as f64).sqrt()
    };
    let final_max = residuals.iter().cloned().fold(0.0, f64::max);
    let entries: Vec<AlignmentEntry> = (0..set.n_angles())
        .into_par_iter()
        .map(|i| AlignmentEntry {
            angle_deg: set.angles()[i],
            du: du[i],
            dv: dv[i],
            valid: track0.points[i].valid && track2.points[i].valid,
        })
        .collect();
    let report = AlignmentReport {
        mode,
        method,
        target_row: target,
        model,
        entries,
        final_rms,
        final_max,
    };
    Ok((hset, report))
}

impl AlignmentReport {
    /// Per-angle shifts as CSV: `index,angle_deg,du,dv,valid`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("index,angle_deg,du,dv,valid\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!(
                "{i},{},{},{},{}\n",
                e.angle_deg,
                e.du,
                e.dv,
                if e.valid { 1 } else { 0 }
            ));
        }
        out
    }

    /// Human-readable summary of the run.
    pub fn summary(&self) -> String {
        let mode = match self.mode {
            AlignMode::Ideal => "ideal",
            AlignMode::VirtualCor => "virtual-cor",
        };
        let method = match self.method {
            TrackMethod::Apex => "apex",
            TrackMethod::Centroid => "centroid",
            TrackMethod::Marker => "marker",
        };
        format!(
            "mode: {mode}\nmethod: {method}\ntarget_row: {}\n\
             trajectory: u(theta) = {} + {}*cos(theta + {} deg)\n\
             fit residual: rms {} px, max {} px\n\
             post-align fixed point vs target: rms {} px, max {} px\n\
             frames: {} total, {} measured directly\n",
            self.target_row,
            self.model.center,
            self.model.amplitude,
            self.model.phase_deg,
            self.model.rms_residual,
            self.model.max_residual,
            self.final_rms,
            self.final_max,
            self.entries.len(),
            self.entries.iter().filter(|e| e.valid).count(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tracker::TrackPoint;

    fn synthetic_track(angles: Vec<f64>, us: Vec<f64>, vs: Vec<f64>) -> FixedPointTrack {
        let points = us
            .iter()
            .zip(&vs)
            .map(|(&u, &v)| TrackPoint { u, v, valid: true })
            .collect();
        FixedPointTrack { method: TrackMethod::Marker, angles, points }
    }

    #[test]
    fn fit_recovers_exact_sinusoid() {
        let angles: Vec<f64> = (0..360).map(|i| i as f64 * 0.5).collect();
        let (c, a_true, phi_true) = (100.0, 121.0, -24.0);
        let us: Vec<f64> = angles
            .iter()
            .map(|t| c + a_true * (t + phi_true).to_radians().cos())
            .collect();
        let track = synthetic_track(angles.clone(), us, vec![0.0; angles.len()]);
        let model = fit_trajectory(&track).unwrap();
        assert!((model.amplitude - a_true).abs() < 1e-9, "A = {}", model.amplitude);
        assert!((model.phase_deg - phi_true).abs() < 1e-9, "phi = {}", model.phase_deg);
        assert!((model.center - c).abs() < 1e-9);
        assert!(model.rms_residual < 1e-9);
    }

    #[test]
    fn fit_constant_track_is_zero_amplitude() {
        let angles: Vec<f64> = (0..40).map(|i| i as f64 * 4.5).collect();
        let track = synthetic_track(angles.clone(), vec![63.5; 40], vec![0.0; 40]);
        let model = fit_trajectory(&track).unwrap();
        assert!(model.amplitude < 1e-9);
        assert!((model.center - 63.5).abs() < 1e-9);
    }

    #[test]
    fn fit_rejects_degenerate_input() {
        // Too few points.
        let track = synthetic_track(vec![0.0, 100.0], vec![1.0, 2.0], vec![0.0, 0.0]);
        assert!(matches!(fit_trajectory(&track), Err(Error::FitRejected(_))));
        // Narrow angular span.
        let angles: Vec<f64> = (0..20).map(|i| i as f64).collect();
        let track = synthetic_track(angles.clone(), vec![5.0; 20], vec![0.0; 20]);
        assert!(matches!(fit_trajectory(&track), Err(Error::FitRejected(_))));
    }

    #[test]
    fn fit_beats_dense_grid_search_under_noise() {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let angles: Vec<f64> = (0..180).map(|i| i as f64).collect();
        let (c_true, a_true, b_true) = (80.0, 9.0, -4.0);
        let us: Vec<f64> = angles
            .iter()
            .map(|t| {
                let r = t.to_radians();
                c_true + a_true * r.cos() + b_true * r.sin() + rng.random_range(-0.5..=0.5)
            })
            .collect();
        let track = synthetic_track(angles.clone(), us.clone(), vec![0.0; angles.len()]);
        let model = fit_trajectory(&track).unwrap();
        let sse = |c: f64, a: f64, b: f64| -> f64 {
            angles
                .iter()
                .zip(&us)
                .map(|(t, &u)| {
                    let r = t.to_radians();
                    let d = u - (c + a * r.cos() + b * r.sin());
                    d * d
                })
                .sum()
        };
        let (a_fit, b_fit) = model.cos_sin_coefficients();
        let fit_sse = sse(model.center, a_fit, b_fit);
        // Dense grid around the truth; least squares must beat every node.
        let step = 0.1;
        let mut best = f64::INFINITY;
        let mut best_params = (0.0, 0.0, 0.0);
        for ci in -10..=10 {
            for ai in -10..=10 {
                for bi in -10..=10 {
                    let (c, a, b) = (
                        c_true + ci as f64 * step,
                        a_true + ai as f64 * step,
                        b_true + bi as f64 * step,
                    );
                    let s = sse(c, a, b);
                    if s < best {
                        best = s;
                        best_params = (c, a, b);
                    }
                }
            }
        }
        assert!(fit_sse <= best + 1e-9, "LSQ {fit_sse} worse than grid {best}");
        assert!((model.center - best_params.0).abs() <= step);
        assert!((a_fit - best_params.1).abs() <= step);
        assert!((b_fit - best_params.2).abs() <= step);
    }

    fn tiny_set(n_angles: usize, nu: usize, nv: usize) -> ProjectionSet {
        let angles: Vec<f64> = (0..n_angles).map(|i| i as f64 * 180.0 / n_angles as f64).collect();
        let mut data = vec![0.0; n_angles * nu * nv];
        for i in 0..n_angles {
            data[i * nu * nv + (nv / 2) * nu + nu / 2] = 1.0;
        }
        ProjectionSet::new(angles, nu, nv, 1.0, data).unwrap()
    }

    #[test]
    fn vertical_align_constant_track_is_identity() {
        let set = tiny_set(6, 16, 12);
        let track = synthetic_track(
            set.angles().to_vec(),
            vec![8.0; 6],
            vec![6.0; 6],
        );
        let (aligned, new_track, dv) = vertical_align(&set, &track, None).unwrap();
        assert!(dv.iter().all(|&d| d == 0.0));
        assert_eq!(aligned.data(), set.data());
        assert!(new_track.points.iter().all(|p| p.v == 6.0));
    }

    #[test]
    fn vertical_align_arithmetic() {
        let set = tiny_set(3, 16, 32);
        let track = synthetic_track(
            set.angles().to_vec(),
            vec![8.0; 3],
            vec![10.0, 12.0, 11.0],
        );
        let (_aligned, _track, dv) = vertical_align(&set, &track, Some(10.0)).unwrap();
        assert_eq!(dv, vec![0.0, -2.0, -1.0]);
    }

    #[test]
    fn invalid_entries_interpolate_in_angle() {
        let angles = vec![0.0, 10.0, 30.0, 40.0];
        let values = vec![Some(1.0), None, None, Some(5.0)];
        let filled = fill_invalid_by_angle(&angles, &values).unwrap();
        assert_eq!(filled, vec![1.0, 2.0, 4.0, 5.0]);
        // Clamping at the ends.
        let values = vec![None, Some(2.0), Some(4.0), None];
        let filled = fill_invalid_by_angle(&angles, &values).unwrap();
        assert_eq!(filled, vec![2.0, 2.0, 4.0, 4.0]);
    }

    #[test]
    fn horizontal_align_on_model_is_identity() {
        let set = tiny_set(8, 16, 12);
        let model = TrajectoryModel {
            amplitude: 3.0,
            phase_deg: 30.0,
            center: 7.5,
            rms_residual: 0.0,
            max_residual: 0.0,
        };
        let us: Vec<f64> = set.angles().iter().map(|&t| model.u_at(t)).collect();
        let track = synthetic_track(set.angles().to_vec(), us, vec![6.0; 8]);
        let (aligned, du) = horizontal_align(&set, &track, &model, AlignMode::Ideal).unwrap();
        assert!(du.iter().all(|&d| d.abs() < 1e-12));
        assert_eq!(aligned.data(), set.data());
    }

    #[test]
    fn virtual_cor_targets_center_column() {
        let set = tiny_set(8, 17, 12);
        let track = synthetic_track(
            set.angles().to_vec(),
            (0..8).map(|i| 5.0 + i as f64).collect(),
            vec![6.0; 8],
        );
        let model = fit_trajectory(&track).unwrap();
        let (_aligned, du) = horizontal_align(&set, &track, &model, AlignMode::VirtualCor).unwrap();
        for (i, &d) in du.iter().enumerate() {
            assert!((d - (8.0 - (5.0 + i as f64))).abs() < 1e-12);
        }
    }
}
