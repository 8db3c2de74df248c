//! Data filtering: rotation gating, altitude gating, and keyframe selection.

use thiserror::Error;

use crate::recording::{GnssFix, GnssFixQuality, ImuSample, RangeSample};
use crate::timeline::ValidityTimeline;
use crate::utm::{latlon_to_utm_zone, zone_for, UtmError, UtmPoint};

pub const DEFAULT_OMEGA_MAX_RAD_S: f64 = 0.4;
pub const DEFAULT_HOLD_MS: f64 = 100.0;
pub const DEFAULT_MIN_AGL_M: f64 = 20.0;
pub const DEFAULT_KEYFRAME_SPACING_M: f64 = 2.0;
pub const RANGE_MEDIAN_WINDOW: usize = 5;

#[derive(Debug, Error)]
pub enum GatingError {
    #[error("empty IMU stream")]
    EmptyImu,
    #[error("range stream carries no valid returns")]
    AllRangeInvalid,
    #[error("no valid GNSS fixes inside the timeline")]
    NoValidGnss,
    #[error(transparent)]
    Utm(#[from] UtmError),
}

/// Marks time invalid while the angular rate norm is at or above
/// `threshold_rad_s`, and for `hold_ms` after each violating sample.
pub fn rotation_gate(
    imu: &[ImuSample],
    threshold_rad_s: f64,
    hold_ms: f64,
) -> Result<ValidityTimeline, GatingError> {
    if imu.is_empty() {
        return Err(GatingError::EmptyImu);
    }
    let hold_ns = (hold_ms * 1e6).round() as u64;
    let span = (imu[0].t_ns, imu[imu.len() - 1].t_ns);
    let mut invalid = Vec::new();
    for s in imu {
        if s.angular_velocity.norm() >= threshold_rad_s {
            invalid.push((s.t_ns, s.t_ns + hold_ns));
        }
    }
    let invalid = ValidityTimeline::from_intervals(invalid);
    Ok(invalid.complement(span.0, span.1))
}

fn median(window: &mut [f64]) -> f64 {
    window.sort_by(|a, b| a.partial_cmp(b).unwrap());
    window[window.len() / 2]
}

/// Median-filtered range values, same length as the valid input samples.
/// Window is centered and clamped at the ends.
pub fn median_filtered_range(values: &[f64], window: usize) -> Vec<f64> {
    let half = window / 2;
    (0..values.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half + 1).min(values.len());
            let mut w: Vec<f64> = values[lo..hi].to_vec();
            median(&mut w)
        })
        .collect()
}

/// Marks time invalid where the median-filtered range is below `min_agl_m`.
/// Invalid range returns are discarded before filtering. Each sample covers
/// the span up to the next sample.
pub fn altitude_gate(
    range: &[RangeSample],
    min_agl_m: f64,
) -> Result<ValidityTimeline, GatingError> {
    let valid: Vec<&RangeSample> = range.iter().filter(|s| s.is_valid()).collect();
    if valid.is_empty() {
        return Err(GatingError::AllRangeInvalid);
    }
    let values: Vec<f64> = valid.iter().map(|s| s.range_m).collect();
    let filtered = median_filtered_range(&values, RANGE_MEDIAN_WINDOW);
    let mut intervals = Vec::new();
    for i in 0..valid.len() {
        if filtered[i] >= min_agl_m {
            let start = valid[i].t_host_ns;
            let end = if i + 1 < valid.len() {
                valid[i + 1].t_host_ns
            } else {
                start
            };
            if end > start {
                intervals.push((start, end));
            }
        }
    }
    // An empty timeline (entire duration below the floor) is a legitimate result.
    Ok(ValidityTimeline::from_intervals(intervals))
}

/// Converts a fix to UTM in a fixed zone.
pub fn fix_to_utm(fix: &GnssFix, zone: u8) -> Result<UtmPoint, UtmError> {
    latlon_to_utm_zone(fix.latitude_deg, fix.longitude_deg, fix.altitude_msl_m, zone)
}

/// Greedy keyframe selection: emit the first valid fix, then the first valid
/// fix at least `spacing_m` of horizontal UTM distance from the last emitted
/// one. Fixes outside `timeline` or without a position fix are skipped.
pub fn select_keyframes(
    gnss: &[GnssFix],
    timeline: &ValidityTimeline,
    spacing_m: f64,
) -> Result<Vec<u64>, GatingError> {
    let mut keyframes = Vec::new();
    let mut last: Option<UtmPoint> = None;
    let mut zone: Option<u8> = None;
    for fix in gnss {
        if fix.fix_quality == GnssFixQuality::None || !timeline.contains(fix.t_ns) {
            continue;
        }
        let z = *zone.get_or_insert_with(|| zone_for(fix.latitude_deg, fix.longitude_deg));
        let p = fix_to_utm(fix, z)?;
        let emit = match &last {
            None => true,
            Some(prev) => prev.horizontal_distance(&p) >= spacing_m,
        };
        if emit {
            keyframes.push(fix.t_ns);
            last = Some(p);
        }
    }
    if keyframes.is_empty() {
        return Err(GatingError::NoValidGnss);
    }
    Ok(keyframes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};

    fn imu_at(t_ns: u64, w: (f64, f64, f64)) -> ImuSample {
        ImuSample {
            t_ns,
            angular_velocity: Vector3::new(w.0, w.1, w.2),
            linear_acceleration: Vector3::zeros(),
            orientation: UnitQuaternion::identity(),
            elapsed_since_pulse_ns: 0,
        }
    }

    #[test]
    fn rotation_threshold_arithmetic() {
        // |(0.3,0.2,0.2)| ~ 0.412 >= 0.4 -> invalid
        let samples = vec![imu_at(0, (0.3, 0.2, 0.2)), imu_at(1_000_000_000, (0.0, 0.0, 0.0))];
        let t = rotation_gate(&samples, 0.4, 100.0).unwrap();
        assert!(!t.contains(0));
        assert!(t.contains(500_000_000));

        // |(0.2,0.2,0.2)| ~ 0.346 -> valid
        let samples = vec![imu_at(0, (0.2, 0.2, 0.2)), imu_at(1_000_000_000, (0.0, 0.0, 0.0))];
        let t = rotation_gate(&samples, 0.4, 100.0).unwrap();
        assert!(t.contains(0));
    }

    #[test]
    fn rotation_square_wave_matches_brute_force() {
        // 0.5 rad/s on odd seconds, 0 on even; 100 Hz sampling, 10 s total.
        let rate_hz = 100u64;
        let total_s = 10u64;
        let hold_ms = 100.0;
        let threshold = 0.4;
        let samples: Vec<ImuSample> = (0..total_s * rate_hz)
            .map(|i| {
                let t_ns = i * 1_000_000_000 / rate_hz;
                let sec = t_ns / 1_000_000_000;
                let w = if sec % 2 == 1 { 0.5 } else { 0.0 };
                imu_at(t_ns, (w, 0.0, 0.0))
            })
            .collect();
        let timeline = rotation_gate(&samples, threshold, hold_ms).unwrap();

        // brute force: evaluate validity on a dense 1 ms grid
        let hold_ns = 100_000_000u64;
        let span_end = samples.last().unwrap().t_ns;
        for t in (0..span_end).step_by(1_000_000) {
            let violated = samples.iter().any(|s| {
                s.angular_velocity.norm() >= threshold && s.t_ns <= t && t < s.t_ns + hold_ns
            });
            assert_eq!(
                timeline.contains(t),
                !violated,
                "disagreement at t = {t} ns"
            );
        }
    }

    #[test]
    fn rotation_gate_monotone_in_threshold() {
        let samples: Vec<ImuSample> = (0..200)
            .map(|i| imu_at(i * 10_000_000, ((i % 7) as f64 * 0.1, 0.0, 0.0)))
            .collect();
        let lo = rotation_gate(&samples, 0.3, 100.0).unwrap();
        let hi = rotation_gate(&samples, 0.5, 100.0).unwrap();
        // raising the threshold never shrinks the valid timeline
        assert_eq!(lo.intersect(&hi), lo);
    }

    fn range_at(t_s: f64, r: f64) -> RangeSample {
        RangeSample {
            t_host_ns: (t_s * 1e9) as u64,
            range_m: r,
        }
    }

    #[test]
    fn altitude_constant_cases() {
        let high: Vec<RangeSample> = (0..100).map(|i| range_at(i as f64 * 0.1, 40.0)).collect();
        let t = altitude_gate(&high, 20.0).unwrap();
        assert_eq!(t.total_ns(), 9_900_000_000);

        let low: Vec<RangeSample> = (0..100).map(|i| range_at(i as f64 * 0.1, 15.0)).collect();
        let t = altitude_gate(&low, 20.0).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn altitude_ramp_matches_brute_force() {
        // 0 -> 40 m over 80 s at 10 Hz
        let samples: Vec<RangeSample> = (0..800)
            .map(|i| range_at(i as f64 * 0.1, 0.05 * i as f64 + 0.01))
            .collect();
        let timeline = altitude_gate(&samples, 20.0).unwrap();

        let values: Vec<f64> = samples.iter().map(|s| s.range_m).collect();
        let filtered = median_filtered_range(&values, RANGE_MEDIAN_WINDOW);
        for i in 0..samples.len() - 1 {
            let mid = (samples[i].t_host_ns + samples[i + 1].t_host_ns) / 2;
            assert_eq!(
                timeline.contains(mid),
                filtered[i] >= 20.0,
                "sample {i}"
            );
        }
    }

    #[test]
    fn altitude_monotone_in_floor() {
        let samples: Vec<RangeSample> = (0..300)
            .map(|i| range_at(i as f64 * 0.1, 10.0 + (i as f64 * 0.37).sin() * 8.0 + i as f64 * 0.05))
            .collect();
        let lo = altitude_gate(&samples, 15.0).unwrap();
        let hi = altitude_gate(&samples, 25.0).unwrap();
        // raising min_agl never grows the valid timeline
        assert_eq!(lo.intersect(&hi), hi);
    }

    #[test]
    fn all_invalid_range_errors() {
        let samples = vec![range_at(0.0, -1.0), range_at(0.1, 0.0)];
        assert!(matches!(altitude_gate(&samples, 20.0), Err(GatingError::AllRangeInvalid)));
    }

    fn fix_at(t_ns: u64, lat: f64, lon: f64) -> GnssFix {
        GnssFix {
            t_ns,
            latitude_deg: lat,
            longitude_deg: lon,
            altitude_msl_m: 50.0,
            fix_quality: GnssFixQuality::Fix3d,
        }
    }

    #[test]
    fn keyframes_greedy_walk() {
        // eastings ~ 0,1,2,3,4.1 m apart along the equator near zone 31 CM.
        // 1 m of longitude at the equator is about 8.993e-6 deg (scaled 0.9996).
        let m_deg = 1.0 / (111_319.49 * 0.9996);
        let positions = [0.0, 1.0, 2.0, 3.0, 4.1];
        let fixes: Vec<GnssFix> = positions
            .iter()
            .enumerate()
            .map(|(i, &e)| fix_at(i as u64 * 200_000_000, 0.0, 3.0 + e * m_deg))
            .collect();
        let timeline = ValidityTimeline::from_intervals(vec![(0, u64::MAX)]);
        let kf = select_keyframes(&fixes, &timeline, 2.0).unwrap();
        assert_eq!(kf, vec![0, 400_000_000, 800_000_000]);
    }

    #[test]
    fn keyframes_identical_positions() {
        let fixes: Vec<GnssFix> = (0..10).map(|i| fix_at(i * 200_000_000, 40.0, -75.0)).collect();
        let timeline = ValidityTimeline::from_intervals(vec![(0, u64::MAX)]);
        let kf = select_keyframes(&fixes, &timeline, 2.0).unwrap();
        assert_eq!(kf.len(), 1);
    }

    #[test]
    fn keyframes_respect_timeline() {
        let m_deg = 1.0 / (111_319.49 * 0.9996);
        let fixes: Vec<GnssFix> = (0..20)
            .map(|i| fix_at(i * 1_000_000_000, 0.0, 3.0 + i as f64 * 3.0 * m_deg))
            .collect();
        let timeline = ValidityTimeline::from_intervals(vec![(5_000_000_000, 10_000_000_000)]);
        let kf = select_keyframes(&fixes, &timeline, 2.0).unwrap();
        assert!(kf.iter().all(|&t| timeline.contains(t)));
    }
}
