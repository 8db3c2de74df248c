//! Survey flight planning and the time-parameterized pose trajectory.

use nalgebra::{UnitQuaternion, Vector3};
use thiserror::Error;

use crate::ortho::nadir_orientation;
use crate::utm::{Hemisphere, UtmPoint};

#[derive(Debug, Error)]
pub enum FlightError {
    #[error("altitude must be positive, got {0}")]
    BadAltitude(f64),
    #[error("speed must be positive, got {0}")]
    BadSpeed(f64),
    #[error("overlap fraction must be < 1, got {0}")]
    BadOverlap(f64),
    #[error("track spacing must be positive, got {0}")]
    BadSpacing(f64),
    #[error("survey rectangle is empty")]
    EmptyRect,
    #[error("turn rate must be positive, got {0}")]
    BadTurnRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlightPattern {
    Lawnmower,
    /// Lawnmower plus the same pattern rotated 90 degrees.
    Crosshatch,
}

/// Track spacing, either direct or derived from image overlap.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TrackSpacing {
    Meters(f64),
    /// Fraction of the lateral footprint shared between adjacent tracks.
    Overlap(f64),
}

/// Survey mission description over a UTM-aligned rectangle.
#[derive(Debug, Clone)]
pub struct FlightPlan {
    pub min_easting_m: f64,
    pub min_northing_m: f64,
    pub max_easting_m: f64,
    pub max_northing_m: f64,
    pub zone: u8,
    pub hemisphere: Hemisphere,
    /// Ground altitude (plane the AGL height is measured from).
    pub ground_alt_m: f64,
    pub altitude_agl_m: f64,
    pub speed_mps: f64,
    pub spacing: TrackSpacing,
    pub pattern: FlightPattern,
    /// Peak angular rate of the stop-and-turn profile at waypoints.
    pub peak_turn_rate_rad_s: f64,
}

impl FlightPlan {
    fn validate(&self) -> Result<(), FlightError> {
        if !(self.altitude_agl_m > 0.0) {
            return Err(FlightError::BadAltitude(self.altitude_agl_m));
        }
        if !(self.speed_mps > 0.0) {
            return Err(FlightError::BadSpeed(self.speed_mps));
        }
        if !(self.peak_turn_rate_rad_s > 0.0) {
            return Err(FlightError::BadTurnRate(self.peak_turn_rate_rad_s));
        }
        if self.max_easting_m <= self.min_easting_m || self.max_northing_m <= self.min_northing_m {
            return Err(FlightError::EmptyRect);
        }
        Ok(())
    }
}

/// Lateral camera footprint width on the ground: 2 h tan(fov/2).
pub fn footprint_width_m(altitude_agl_m: f64, fov_lateral_deg: f64) -> f64 {
    2.0 * altitude_agl_m * (fov_lateral_deg.to_radians() / 2.0).tan()
}

/// Resolves the plan's spacing: s = footprint x (1 - overlap).
pub fn track_spacing_m(plan: &FlightPlan, fov_lateral_deg: f64) -> Result<f64, FlightError> {
    let s = match plan.spacing {
        TrackSpacing::Meters(m) => m,
        TrackSpacing::Overlap(o) => {
            if o >= 1.0 {
                return Err(FlightError::BadOverlap(o));
            }
            footprint_width_m(plan.altitude_agl_m, fov_lateral_deg) * (1.0 - o)
        }
    };
    if !(s > 0.0) {
        return Err(FlightError::BadSpacing(s));
    }
    Ok(s)
}

/// One trajectory piece; times in seconds from mission start.
#[derive(Debug, Clone)]
enum Segment {
    /// Constant-velocity straight leg.
    Leg {
        t0: f64,
        t1: f64,
        start_e: f64,
        start_n: f64,
        ve: f64,
        vn: f64,
        yaw: f64,
    },
    /// Stop-and-turn at a waypoint: triangular angular-rate profile.
    Turn {
        t0: f64,
        t1: f64,
        e: f64,
        n: f64,
        yaw0: f64,
        dyaw: f64,
    },
}

impl Segment {
    fn t1(&self) -> f64 {
        match self {
            Segment::Leg { t1, .. } | Segment::Turn { t1, .. } => *t1,
        }
    }
}

/// Camera-to-body rotation of the rigid nadir mount. The camera looks down
/// with image "up" along the vehicle heading, so the wide image axis spans
/// across-track (the lateral footprint that sets track spacing).
pub fn camera_mount() -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(&Vector3::z_axis(), -std::f64::consts::FRAC_PI_2)
        * nadir_orientation()
}

/// Instantaneous vehicle state.
#[derive(Debug, Clone)]
pub struct PoseSample {
    pub position: UtmPoint,
    /// Heading, radians CCW from east.
    pub yaw_rad: f64,
    /// Body angular rate about the vertical axis.
    pub omega_z_rad_s: f64,
    /// World-frame linear acceleration (gravity excluded).
    pub accel_world: Vector3<f64>,
}

impl PoseSample {
    /// Camera-to-world rotation of the rigidly mounted nadir camera:
    /// body orientation composed with the fixed mount.
    pub fn camera_orientation(&self) -> UnitQuaternion<f64> {
        self.body_orientation() * camera_mount()
    }

    /// Body-to-world rotation reported by the IMU.
    pub fn body_orientation(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.yaw_rad)
    }
}

/// Piecewise-analytic trajectory: legs and turns with exact poses at any time.
#[derive(Debug, Clone)]
pub struct Trajectory {
    segments: Vec<Segment>,
    altitude_m: f64,
    zone: u8,
    hemisphere: Hemisphere,
    /// [start, end) of every turn, seconds.
    turn_windows: Vec<(f64, f64)>,
}

impl Trajectory {
    pub fn duration_s(&self) -> f64 {
        self.segments.last().map(|s| s.t1()).unwrap_or(0.0)
    }

    pub fn turn_windows_s(&self) -> &[(f64, f64)] {
        &self.turn_windows
    }

    /// Pose at `t` seconds, clamped to the mission span.
    pub fn pose(&self, t_s: f64) -> PoseSample {
        let t = t_s.clamp(0.0, self.duration_s());
        let seg = self
            .segments
            .iter()
            .find(|s| t < s.t1())
            .unwrap_or_else(|| self.segments.last().expect("non-empty trajectory"));
        let (e, n, yaw, omega) = match *seg {
            Segment::Leg {
                t0,
                t1,
                start_e,
                start_n,
                ve,
                vn,
                yaw,
            } => {
                let dt = (t - t0).min(t1 - t0);
                (start_e + ve * dt, start_n + vn * dt, yaw, 0.0)
            }
            Segment::Turn {
                t0,
                t1,
                e,
                n,
                yaw0,
                dyaw,
            } => {
                let duration = t1 - t0;
                let s = (t - t0).clamp(0.0, duration);
                let peak = 2.0 * dyaw.abs() / duration;
                let half = duration / 2.0;
                // triangular |omega|: ramp up to peak at mid-turn, back down
                let (progress, omega_mag) = if s <= half {
                    (peak * s * s / duration, peak * s / half)
                } else {
                    let r = duration - s;
                    (dyaw.abs() - peak * r * r / duration, peak * r / half)
                };
                let sign = dyaw.signum();
                (e, n, yaw0 + sign * progress, sign * omega_mag)
            }
        };
        PoseSample {
            position: UtmPoint {
                easting_m: e,
                northing_m: n,
                zone: self.zone,
                hemisphere: self.hemisphere,
                altitude_m: self.altitude_m,
            },
            yaw_rad: yaw,
            omega_z_rad_s: omega,
            accel_world: Vector3::zeros(),
        }
    }
}

fn wrap_angle(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut a = a % two_pi;
    if a > std::f64::consts::PI {
        a -= two_pi;
    } else if a < -std::f64::consts::PI {
        a += two_pi;
    }
    a
}

/// Waypoint list for one lawnmower pass over the rectangle. `axis_east` legs
/// run east-west stepping north; otherwise north-south stepping east.
fn lawnmower_waypoints(plan: &FlightPlan, spacing: f64, axis_east: bool) -> Vec<(f64, f64)> {
    let mut wp = Vec::new();
    if axis_east {
        let mut n = plan.min_northing_m;
        let mut west_to_east = true;
        while n <= plan.max_northing_m + 1e-9 {
            let (a, b) = if west_to_east {
                (plan.min_easting_m, plan.max_easting_m)
            } else {
                (plan.max_easting_m, plan.min_easting_m)
            };
            wp.push((a, n));
            wp.push((b, n));
            west_to_east = !west_to_east;
            n += spacing;
        }
    } else {
        let mut e = plan.min_easting_m;
        let mut south_to_north = true;
        while e <= plan.max_easting_m + 1e-9 {
            let (a, b) = if south_to_north {
                (plan.min_northing_m, plan.max_northing_m)
            } else {
                (plan.max_northing_m, plan.min_northing_m)
            };
            wp.push((e, a));
            wp.push((e, b));
            south_to_north = !south_to_north;
            e += spacing;
        }
    }
    wp
}

/// Builds the time-parameterized trajectory: constant-velocity legs joined by
/// stop-and-turn segments whose peak angular rate is `plan.peak_turn_rate_rad_s`.
pub fn plan_flight(plan: &FlightPlan, fov_lateral_deg: f64) -> Result<Trajectory, FlightError> {
    plan.validate()?;
    let spacing = track_spacing_m(plan, fov_lateral_deg)?;
    let mut waypoints = lawnmower_waypoints(plan, spacing, true);
    if plan.pattern == FlightPattern::Crosshatch {
        waypoints.extend(lawnmower_waypoints(plan, spacing, false));
    }
    debug_assert!(waypoints.len() >= 2);

    let mut segments = Vec::new();
    let mut turn_windows = Vec::new();
    let mut t = 0.0f64;
    let mut yaw = {
        let (dx, dy) = (waypoints[1].0 - waypoints[0].0, waypoints[1].1 - waypoints[0].1);
        dy.atan2(dx)
    };
    for i in 0..waypoints.len() - 1 {
        let (e0, n0) = waypoints[i];
        let (e1, n1) = waypoints[i + 1];
        let dist = ((e1 - e0).powi(2) + (n1 - n0).powi(2)).sqrt();
        if dist < 1e-9 {
            continue;
        }
        let leg_yaw = (n1 - n0).atan2(e1 - e0);
        let dyaw = wrap_angle(leg_yaw - yaw);
        if dyaw.abs() > 1e-9 {
            let duration = 2.0 * dyaw.abs() / plan.peak_turn_rate_rad_s;
            segments.push(Segment::Turn {
                t0: t,
                t1: t + duration,
                e: e0,
                n: n0,
                yaw0: yaw,
                dyaw,
            });
            turn_windows.push((t, t + duration));
            t += duration;
        }
        let duration = dist / plan.speed_mps;
        segments.push(Segment::Leg {
            t0: t,
            t1: t + duration,
            start_e: e0,
            start_n: n0,
            ve: (e1 - e0) / duration,
            vn: (n1 - n0) / duration,
            yaw: leg_yaw,
        });
        t += duration;
        yaw = leg_yaw;
    }
    Ok(Trajectory {
        segments,
        altitude_m: plan.ground_alt_m + plan.altitude_agl_m,
        zone: plan.zone,
        hemisphere: plan.hemisphere,
        turn_windows,
    })
}
