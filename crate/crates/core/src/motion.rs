//! Per-projection rigid-motion injection.
//!
//! World-frame schedules carry a translation (tx, ty, tz) in detector pixels
//! per angle (tx left-right, ty front-back along the beam at θ = 0, tz
//! up-down); the parallel geometry maps those onto the detector as
//! `du = tx·cos θ + ty·sin θ`, `dv = tz`, so the along-beam component is
//! invisible at that angle. Detector-frame schedules store (du, dv) directly.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::grid::shift_image;
use crate::projector::ProjectionSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionMode {
    World,
    Detector,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScheduleEntries {
    /// (tx, ty, tz) per angle, detector pixels.
    World(Vec<[f64; 3]>),
    /// (du, dv) per angle, detector pixels.
    Detector(Vec<[f64; 2]>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSchedule {
    pub angles: Vec<f64>,
    pub entries: ScheduleEntries,
}

/// Detector shift induced by a world translation at projection angle θ.
/// The component of (tx, ty) parallel to the beam contributes nothing.
pub fn induced_detector_shift(t: [f64; 3], theta_deg: f64) -> (f64, f64) {
    let r = theta_deg.to_radians();
    (t[0] * r.cos() + t[1] * r.sin(), t[2])
}

impl MotionSchedule {
    pub fn len(&self) -> usize {
        match &self.entries {
            ScheduleEntries::World(v) => v.len(),
            ScheduleEntries::Detector(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn mode(&self) -> MotionMode {
        match &self.entries {
            ScheduleEntries::World(_) => MotionMode::World,
            ScheduleEntries::Detector(_) => MotionMode::Detector,
        }
    }

    /// The (du, dv) detector shift this schedule applies at entry `i`.
    pub fn detector_shift(&self, i: usize) -> (f64, f64) {
        match &self.entries {
            ScheduleEntries::World(v) => induced_detector_shift(v[i], self.angles[i]),
            ScheduleEntries::Detector(v) => (v[i][0], v[i][1]),
        }
    }

    /// Schedule applying the exact opposite shifts.
    pub fn negated(&self) -> MotionSchedule {
        let entries = match &self.entries {
            ScheduleEntries::World(v) => {
                ScheduleEntries::World(v.iter().map(|t| [-t[0], -t[1], -t[2]]).collect())
            }
            ScheduleEntries::Detector(v) => {
                ScheduleEntries::Detector(v.iter().map(|d| [-d[0], -d[1]]).collect())
            }
        };
        MotionSchedule { angles: self.angles.clone(), entries }
    }
}

/// Draw an i.i.d. uniform schedule, one entry per angle, reproducible for a
/// fixed seed. `ranges` are per-axis (lo, hi) bounds in pixels; detector mode
/// draws du from the first axis and dv from the third (up-down) axis.
pub fn sample_schedule(
    seed: u64,
    angles: &[f64],
    ranges: [(f64, f64); 3],
    mode: MotionMode,
) -> Result<MotionSchedule> {
    for (lo, hi) in ranges {
        if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad motion range ({lo}, {hi})")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |axis: usize| -> f64 {
        let (lo, hi) = ranges[axis];
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..=hi)
        }
    };
    let entries = match mode {
        MotionMode::World => ScheduleEntries::World(
            (0..angles.len()).map(|_| [draw(0), draw(1), draw(2)]).collect(),
        ),
        MotionMode::Detector => ScheduleEntries::Detector(
            (0..angles.len()).map(|_| [draw(0), draw(2)]).collect(),
        ),
    };
    Ok(MotionSchedule { angles: angles.to_vec(), entries })
}

/// Shift every projection by its schedule entry (world entries first map
/// through [`induced_detector_shift`]); angles are unchanged.
pub fn apply_motion(set: &ProjectionSet, schedule: &MotionSchedule) -> Result<ProjectionSet> {
    if schedule.len() != set.n_angles() {
        return Err(Error::DimensionMismatch(format!(
            "schedule has {} entries for {} projections",
            schedule.len(),
            set.n_angles()
        )));
    }
    for (i, (&a, &b)) in schedule.angles.iter().zip(set.angles()).enumerate() {
        if (a - b).abs() > 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "schedule angle {a} != projection angle {b} at index {i}"
            )));
        }
    }
    set.map_frames(|i, frame| {
        let (du, dv) = schedule.detector_shift(i);
        shift_image(frame, set.nu(), set.nv(), du, dv)
    })
}

/// Persist a schedule as CSV. The header names the frame the entries live in:
///
/// ```text
/// mode,world
/// index,angle_deg,tx,ty,tz
/// 0,0,1.5,-3,0.25
/// ```
pub fn schedule_to_csv(schedule: &MotionSchedule) -> String {
    let mut out = String::new();
    match &schedule.entries {
        ScheduleEntries::World(v) => {
            out.push_str("mode,world\nindex,angle_deg,tx,ty,tz\n");
            for (i, (a, t)) in schedule.angles.iter().zip(v).enumerate() {
                out.push_str(&format!("{i},{a},{},{},{}\n", t[0], t[1], t[2]));
            }
        }
        ScheduleEntries::Detector(v) => {
            out.push_str("mode,detector\nindex,angle_deg,du,dv\n");
            for (i, (a, d)) in schedule.angles.iter().zip(v).enumerate() {
                out.push_str(&format!("{i},{a},{},{}\n", d[0], d[1]));
            }
        }
    }
    out
}

pub fn schedule_from_csv(text: &str) -> Result<MotionSchedule> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Format("empty schedule file".into()))?;
    let mode = match header.trim() {
        "mode,world" => MotionMode::World,
        "mode,detector" => MotionMode::Detector,
        other => return Err(Error::Format(format!("bad schedule header {other:?}"))),
    };
    let _columns = lines
        .next()
        .ok_or_else(|| Error::Format("schedule missing column header".into()))?;
    let mut angles = Vec::new();
    let mut world = Vec::new();
    let mut detector = Vec::new();
    for (n, line) in lines.enumerate() {
        let fields: Vec<&str> = line.trim().split(',').collect();
        let want = if mode == MotionMode::World { 5 } else { 4 };
        if fields.len() != want {
            return Err(Error::Format(format!(
                "schedule row {}: expected {want} fields, got {}",
                n + 1,
                fields.len()
            )));
        }
        let num = |s: &str| -> Result<f64> {
            s.trim()
                .parse()
                .map_err(|_| Error::Format(format!("schedule row {}: bad number {s:?}", n + 1)))
        };
        angles.push(num(fields[1])?);
        match mode {
            MotionMode::World => world.push([num(fields[2])?, num(fields[3])?, num(fields[4])?]),
            MotionMode::Detector => detector.push([num(fields[2])?, num(fields[3])?]),
        }
    }
    let entries = match mode {
        MotionMode::World => ScheduleEntries::World(world),
        MotionMode::Detector => ScheduleEntries::Detector(detector),
    };
    Ok(MotionSchedule { angles, entries })
}
