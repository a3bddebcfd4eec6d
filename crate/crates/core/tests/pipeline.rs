//! Cross-module behavior: motion injection seen through the tracker, shift
//! recovery by the alignment stages, and the self-consistency of the full
//! method on sets with known ground truth.

use std::sync::OnceLock;

use vamct_core::align::{fit_trajectory, vam_align, vertical_align, AlignMode};
use vamct_core::grid::{center_coord, Volume};
use vamct_core::motion::{
    apply_motion, induced_detector_shift, sample_schedule, MotionMode, MotionSchedule,
    ScheduleEntries,
};
use vamct_core::phantom::{generate_phantom, tooth_spec_with_marker};
use vamct_core::projector::{forward_project_volume, ProjectionSet};
use vamct_core::tracker::{track_fixed_points, FixedPointTrack, TrackMethod, TrackerParams};

const N: usize = 128;
const LEVELS: usize = 64;
const VIEWS: usize = 180;

fn angles() -> Vec<f64> {
    (0..VIEWS).map(|i| i as f64 * 180.0 / VIEWS as f64).collect()
}

fn phantom() -> &'static Volume {
    static VOLUME: OnceLock<Volume> = OnceLock::new();
    VOLUME.get_or_init(|| {
        generate_phantom(&tooth_spec_with_marker(N, N, LEVELS), N, N, LEVELS, 1.0).unwrap()
    })
}

fn clean_set() -> &'static ProjectionSet {
    static SET: OnceLock<ProjectionSet> = OnceLock::new();
    SET.get_or_init(|| forward_project_volume(phantom(), &angles()).unwrap())
}

fn marker_track(set: &ProjectionSet) -> FixedPointTrack {
    track_fixed_points(set, TrackMethod::Marker, &TrackerParams::default()).unwrap()
}

fn rms(values: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = values.collect();
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

#[test]
fn marker_track_follows_analytic_bead_orbit() {
    let spec = tooth_spec_with_marker(N, N, LEVELS);
    let marker = spec.marker.unwrap();
    let track = marker_track(clean_set());
    assert_eq!(track.valid_count(), VIEWS);
    let c0 = center_coord(N);
    let cz = center_coord(LEVELS);
    for (theta, p) in track.valid_entries() {
        let r = theta.to_radians();
        let expected_u = c0 + marker.center[0] * r.cos() + marker.center[1] * r.sin();
        let expected_v = cz + marker.center[2];
        assert!(
            (p.u - expected_u).abs() <= 0.5,
            "u at {theta}: {} vs {expected_u}",
            p.u
        );
        assert!(
            (p.v - expected_v).abs() <= 0.5,
            "v at {theta}: {} vs {expected_v}",
            p.v
        );
    }
}

#[test]
fn constant_world_motion_shifts_track_by_a_sinusoid() {
    let (tx, ty) = (6.0, -4.5);
    let schedule = MotionSchedule {
        angles: angles(),
        entries: ScheduleEntries::World(vec![[tx, ty, 0.0]; VIEWS]),
    };
    let moved = apply_motion(clean_set(), &schedule).unwrap();
    let base = marker_track(clean_set());
    let shifted = marker_track(&moved);
    // The track difference is a pure sinusoid of amplitude hypot(tx, ty).
    let diff: Vec<f64> = base
        .points
        .iter()
        .zip(&shifted.points)
        .map(|(a, b)| b.u - a.u)
        .collect();
    let diff_track = FixedPointTrack {
        method: TrackMethod::Marker,
        angles: angles(),
        points: diff
            .iter()
            .map(|&u| vamct_core::tracker::TrackPoint { u, v: 0.0, valid: true })
            .collect(),
    };
    let model = fit_trajectory(&diff_track).unwrap();
    assert!(model.rms_residual <= 0.2, "rms {}", model.rms_residual);
    assert!((model.amplitude - tx.hypot(ty)).abs() <= 0.2, "A = {}", model.amplitude);
    assert!(model.center.abs() <= 0.2);
}

#[test]
fn detector_schedule_shifts_track_entries_exactly() {
    let schedule = sample_schedule(21, &angles(), [(-6.0, 6.0); 3], MotionMode::Detector).unwrap();
    let moved = apply_motion(clean_set(), &schedule).unwrap();
    let base = marker_track(clean_set());
    let shifted = marker_track(&moved);
    for i in 0..VIEWS {
        let (du, dv) = schedule.detector_shift(i);
        assert!(
            (shifted.points[i].u - base.points[i].u - du).abs() <= 0.2,
            "frame {i} du"
        );
        assert!(
            (shifted.points[i].v - base.points[i].v - dv).abs() <= 0.2,
            "frame {i} dv"
        );
    }
}

#[test]
fn vertical_align_recovers_axial_motion() {
    // Fractional up-down motion, recovered sub-pixel via the marker.
    let schedule = sample_schedule(33, &angles(), [(0.0, 0.0), (0.0, 0.0), (-9.0, 9.0)], MotionMode::World).unwrap();
    let ScheduleEntries::World(entries) = &schedule.entries else { panic!() };
    let moved = apply_motion(clean_set(), &schedule).unwrap();
    let track = marker_track(&moved);
    let base = marker_track(clean_set());
    let target = base.points[0].v;
    let (_aligned, _t, dv) = vertical_align(&moved, &track, Some(target)).unwrap();
    for i in 0..VIEWS {
        // dv = target - v_perturbed; with v_perturbed = v_clean + tz the
        // recovered shift cancels tz up to detection error.
        let expected = target - base.points[i].v - entries[i][2];
        assert!(
            (dv[i] - expected).abs() <= 0.3,
            "frame {i}: dv {} vs expected {expected}",
            dv[i]
        );
    }
}

#[test]
fn vertical_align_with_apex_is_exact_for_integer_motion() {
    let tz: Vec<f64> = (0..VIEWS).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
    let schedule = MotionSchedule {
        angles: angles(),
        entries: ScheduleEntries::World(tz.iter().map(|&z| [0.0, 0.0, z]).collect()),
    };
    let moved = apply_motion(clean_set(), &schedule).unwrap();
    let track = track_fixed_points(&moved, TrackMethod::Apex, &TrackerParams::default()).unwrap();
    let base = track_fixed_points(clean_set(), TrackMethod::Apex, &TrackerParams::default()).unwrap();
    let target = base.points[0].v;
    let (_aligned, _t, dv) = vertical_align(&moved, &track, Some(target)).unwrap();
    for i in 0..VIEWS {
        assert_eq!(dv[i], -(tz[i]) + (target - base.points[i].v), "frame {i}");
    }
}

#[test]
fn unperturbed_set_needs_no_correction() {
    for mode in [AlignMode::Ideal, AlignMode::VirtualCor] {
        let (_aligned, report) = vam_align(
            clean_set(),
            TrackMethod::Marker,
            &TrackerParams::default(),
            mode,
            None,
        )
        .unwrap();
        let dv_rms = rms(report.entries.iter().map(|e| e.dv));
        assert!(dv_rms <= 0.2, "{mode:?} dv rms {dv_rms}");
        if mode == AlignMode::Ideal {
            let du_rms = rms(report.entries.iter().map(|e| e.du));
            assert!(du_rms <= 0.2, "ideal du rms {du_rms}");
        }
        assert!(report.final_rms <= 0.2, "{mode:?} final rms {}", report.final_rms);
    }
}

fn perturbed_set() -> &'static (ProjectionSet, f64) {
    static SET: OnceLock<(ProjectionSet, f64)> = OnceLock::new();
    SET.get_or_init(|| {
        let schedule = sample_schedule(5, &angles(), [(-10.0, 10.0); 3], MotionMode::World).unwrap();
        let moved = apply_motion(clean_set(), &schedule).unwrap();
        let base = marker_track(clean_set());
        let mut vs: Vec<f64> = base.points.iter().map(|p| p.v).collect();
        vs.sort_by(f64::total_cmp);
        (moved, vs[vs.len() / 2])
    })
}

#[test]
fn post_align_track_sits_on_mode_target() {
    let (moved, target) = perturbed_set();
    for mode in [AlignMode::Ideal, AlignMode::VirtualCor] {
        let (aligned, report) = vam_align(
            moved,
            TrackMethod::Marker,
            &TrackerParams::default(),
            mode,
            Some(*target),
        )
        .unwrap();
        assert!(
            report.final_rms <= 0.2,
            "{mode:?} re-measured rms {}",
            report.final_rms
        );
        if mode == AlignMode::VirtualCor {
            // The fixed point must sit on the center column.
            let track = marker_track(&aligned);
            let c0 = aligned.geometry().center_column();
            let residual = rms(track.valid_entries().map(|(_, p)| p.u - c0));
            assert!(residual <= 0.2, "virtual-cor u residual {residual}");
        }
    }
}

#[test]
fn vam_align_is_idempotent_within_tolerance() {
    let (moved, target) = perturbed_set();
    let (aligned, _) = vam_align(
        moved,
        TrackMethod::Marker,
        &TrackerParams::default(),
        AlignMode::Ideal,
        Some(*target),
    )
    .unwrap();
    let (_again, report) = vam_align(
        &aligned,
        TrackMethod::Marker,
        &TrackerParams::default(),
        AlignMode::Ideal,
        Some(*target),
    )
    .unwrap();
    let du_rms = rms(report.entries.iter().map(|e| e.du));
    let dv_rms = rms(report.entries.iter().map(|e| e.dv));
    assert!(du_rms <= 0.2, "second-pass du rms {du_rms}");
    assert!(dv_rms <= 0.2, "second-pass dv rms {dv_rms}");
}

#[test]
fn apex_row_is_constant_after_vertical_stage() {
    let (moved, _) = perturbed_set();
    let track = track_fixed_points(moved, TrackMethod::Apex, &TrackerParams::default()).unwrap();
    let (aligned, _, _) = vertical_align(moved, &track, None).unwrap();
    let re_track = track_fixed_points(&aligned, TrackMethod::Apex, &TrackerParams::default()).unwrap();
    let vs: Vec<f64> = re_track.valid_entries().map(|(_, p)| p.v).collect();
    let (min, max) = (
        vs.iter().cloned().fold(f64::INFINITY, f64::min),
        vs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    );
    assert!(max - min <= 0.5, "apex rows span {min}..{max}");
}

#[test]
fn world_mode_null_space_is_invisible_at_its_angle() {
    // A translation along the beam at the acquisition angle leaves that
    // frame untouched.
    let set = clean_set();
    let theta = set.angles()[40];
    let r = theta.to_radians();
    let along_beam = [-r.sin(), r.cos()];
    let (du, dv) = induced_detector_shift([along_beam[0], along_beam[1], 0.0], theta);
    assert!(du.abs() < 1e-12 && dv == 0.0);
}
