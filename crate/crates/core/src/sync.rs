//! Post-hoc multi-sensor time synchronization.
//!
//! A shared trigger line carries a periodic pulse train with predefined
//! silence gaps at the start (the marker). Each sensor records the local
//! timestamps at which it saw pulses. Decoding the gap signature aligns every
//! sensor to a common pulse numbering; a least-squares affine fit then maps
//! each sensor clock onto the global clock. Pulse 0 defines global t = 0.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::config::KeyValueFile;
use crate::recording::{ImuSample, Recording, TriggerObservations};

#[derive(Debug, Error)]
pub enum SyncError {
    #[error("pattern: {0}")]
    BadPattern(String),
    #[error("sensor {sensor}: {message}")]
    Match { sensor: String, message: String },
    #[error("sensor {sensor}: clock fit failed: {message}")]
    Fit { sensor: String, message: String },
    #[error("recording missing trigger observations for sensor {0}")]
    MissingTriggers(String),
    #[error("imu sample {index}: elapsed {elapsed_ns} ns exceeds expected pulse gap {expected_ns} ns (missed pulse)")]
    MissedPulse {
        index: usize,
        elapsed_ns: u64,
        expected_ns: u64,
    },
    #[error("imu sample {index} precedes the first observed pulse")]
    BeforeFirstPulse { index: usize },
    #[error("{0}")]
    Recording(#[from] crate::recording::RecordingError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// The pulse-gap pattern shared by the trigger board and the decoder.
///
/// `bursts` is an ordered list of `(pulse_count, trailing_skipped_slots)`
/// pairs; every burst but the last must skip at least one slot, and the last
/// burst (0 skips) opens the continuous run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PulsePattern {
    pub nominal_period_ns: u64,
    pub bursts: Vec<(u32, u32)>,
    /// Fast-to-slow channel ratio (50 Hz / 1 Hz).
    pub slow_channel_ratio: u32,
}

impl Default for PulsePattern {
    fn default() -> Self {
        Self {
            nominal_period_ns: 20_000_000,
            bursts: vec![(9, 2), (6, 1), (1, 0)],
            slow_channel_ratio: 50,
        }
    }
}

impl PulsePattern {
    pub fn validate(&self) -> Result<(), SyncError> {
        if self.nominal_period_ns == 0 {
            return Err(SyncError::BadPattern("zero period".into()));
        }
        if self.bursts.is_empty() {
            return Err(SyncError::BadPattern("empty burst list".into()));
        }
        for (i, &(count, skips)) in self.bursts.iter().enumerate() {
            if count < 1 {
                return Err(SyncError::BadPattern(format!("burst {i}: zero pulses")));
            }
            let last = i == self.bursts.len() - 1;
            if last && skips != 0 {
                return Err(SyncError::BadPattern("last burst must have 0 trailing skips".into()));
            }
            if !last && skips < 1 {
                return Err(SyncError::BadPattern(format!("burst {i}: marker burst needs >= 1 skipped slot")));
            }
        }
        if self.slow_channel_ratio < 1 {
            return Err(SyncError::BadPattern("slow ratio must be >= 1".into()));
        }
        Ok(())
    }

    /// Parses the manifest form, e.g. `9:2,6:1,run`.
    pub fn parse_spec(spec: &str) -> Result<Vec<(u32, u32)>, SyncError> {
        let mut bursts = Vec::new();
        for part in spec.split(',') {
            let part = part.trim();
            if part == "run" {
                bursts.push((1, 0));
            } else if let Some((c, s)) = part.split_once(':') {
                let count = c.trim().parse::<u32>().map_err(|_| {
                    SyncError::BadPattern(format!("bad burst count {c:?}"))
                })?;
                let skips = s.trim().parse::<u32>().map_err(|_| {
                    SyncError::BadPattern(format!("bad skip count {s:?}"))
                })?;
                bursts.push((count, skips));
            } else {
                return Err(SyncError::BadPattern(format!("bad pattern element {part:?}")));
            }
        }
        Ok(bursts)
    }

    pub fn from_manifest(kv: &KeyValueFile) -> Result<Self, SyncError> {
        let mut p = PulsePattern::default();
        if let Some(spec) = kv.raw("sync.pattern") {
            p.bursts = Self::parse_spec(spec)?;
        }
        if let Some(period) = kv.raw("sync.period_ns") {
            p.nominal_period_ns = period.parse().map_err(|_| {
                SyncError::BadPattern(format!("bad sync.period_ns {period:?}"))
            })?;
        }
        if let Some(ratio) = kv.raw("sync.slow_ratio") {
            p.slow_channel_ratio = ratio.parse().map_err(|_| {
                SyncError::BadPattern(format!("bad sync.slow_ratio {ratio:?}"))
            })?;
        }
        p.validate()?;
        Ok(p)
    }

    pub fn spec_string(&self) -> String {
        let mut parts = Vec::new();
        for (i, &(count, skips)) in self.bursts.iter().enumerate() {
            if i == self.bursts.len() - 1 {
                parts.push("run".to_string());
            } else {
                parts.push(format!("{count}:{skips}"));
            }
        }
        parts.join(",")
    }

    /// Pulses in the marker (all bursts before the run).
    pub fn marker_pulse_count(&self) -> u64 {
        self.bursts[..self.bursts.len() - 1]
            .iter()
            .map(|&(c, _)| c as u64)
            .sum()
    }

    /// Global slot index of pulse `k`. Slot s nominally occurs at
    /// t = s * nominal_period.
    pub fn slot_of_pulse(&self, k: u64) -> u64 {
        let mut pulses_before = 0u64;
        let mut slot_base = 0u64;
        for (i, &(count, skips)) in self.bursts.iter().enumerate() {
            let last = i == self.bursts.len() - 1;
            if last || k < pulses_before + count as u64 {
                return slot_base + (k - pulses_before);
            }
            pulses_before += count as u64;
            slot_base += count as u64 + skips as u64;
        }
        unreachable!("last burst consumes all remaining pulses");
    }

    /// Nominal global time of pulse `k`.
    pub fn pulse_time_ns(&self, k: u64) -> i64 {
        (self.slot_of_pulse(k) * self.nominal_period_ns) as i64
    }

    /// First `n` slot indices carrying a pulse.
    pub fn template_slots(&self, n: usize) -> Vec<u64> {
        (0..n as u64).map(|k| self.slot_of_pulse(k)).collect()
    }
}

/// Affine map between a sensor clock and the global clock:
/// `t_sensor = scale * t_global + offset_ns`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClockModel {
    pub scale: f64,
    pub offset_ns: f64,
    pub rms_residual_ns: f64,
}

impl ClockModel {
    pub fn identity() -> Self {
        Self {
            scale: 1.0,
            offset_ns: 0.0,
            rms_residual_ns: 0.0,
        }
    }

    pub fn to_sensor(&self, t_global_ns: f64) -> f64 {
        self.scale * t_global_ns + self.offset_ns
    }

    pub fn to_global(&self, t_sensor_ns: f64) -> f64 {
        (t_sensor_ns - self.offset_ns) / self.scale
    }

    pub fn to_global_ns(&self, t_sensor_ns: u64) -> i64 {
        self.to_global(t_sensor_ns as f64).round() as i64
    }
}

/// Per-sensor alignment result.
#[derive(Debug, Clone)]
pub struct SensorSync {
    pub model: ClockModel,
    /// Global pulse index of the first observed pulse.
    pub first_pulse_index: u64,
}

/// Joint synchronization solution. Global time base: pulse 0 at t = 0.
#[derive(Debug, Clone, Default)]
pub struct SyncSolution {
    pub sensors: BTreeMap<String, SensorSync>,
}

impl SyncSolution {
    pub fn model(&self, sensor: &str) -> Option<&ClockModel> {
        self.sensors.get(sensor).map(|s| &s.model)
    }
}

/// Maximum allowed distance of a quantized interval from an integer slot
/// count, in slots.
const QUANTIZE_TOLERANCE_SLOTS: f64 = 0.3;

/// Locates the observed pulses inside the pattern and returns the global
/// pulse index of the first observation.
///
/// Intervals between observations are quantized to integer slot counts using
/// the sensor's apparent period (median inter-pulse interval, robust to the
/// marker gaps), then the gap signature is matched against the template at
/// every candidate offset.
pub fn match_pattern(obs: &TriggerObservations, pattern: &PulsePattern) -> Result<u64, SyncError> {
    pattern.validate()?;
    let sensor = obs.sensor_id.clone();
    let times = &obs.pulse_times_ns;
    if times.len() < 2 {
        return Err(SyncError::Match {
            sensor,
            message: format!("need at least 2 pulse observations, got {}", times.len()),
        });
    }

    let mut intervals: Vec<f64> = times.windows(2).map(|w| (w[1] - w[0]) as f64).collect();
    let mut sorted = intervals.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let apparent_period = sorted[sorted.len() / 2];
    if apparent_period <= 0.0 {
        return Err(SyncError::Match {
            sensor,
            message: "duplicate pulse observations".to_string(),
        });
    }

    // Quantize to slot counts.
    let mut slot_diffs = Vec::with_capacity(intervals.len());
    for (i, d) in intervals.iter_mut().enumerate() {
        let slots = *d / apparent_period;
        let rounded = slots.round();
        if (slots - rounded).abs() >= QUANTIZE_TOLERANCE_SLOTS || rounded < 1.0 {
            return Err(SyncError::Match {
                sensor,
                message: format!(
                    "interval {i} quantizes to {slots:.3} slots (>= {QUANTIZE_TOLERANCE_SLOTS} from integer); clock too noisy"
                ),
            });
        }
        slot_diffs.push(rounded as u64);
    }

    let has_gap = slot_diffs.iter().any(|&s| s > 1);
    let has_marker = pattern.bursts.len() > 1;
    if !has_gap {
        if !has_marker {
            // Pattern without marker: index 0 by convention (slow channel).
            return Ok(0);
        }
        return Err(SyncError::Match {
            sensor,
            message: "no silence gap observed; marker not found".to_string(),
        });
    }

    // Cumulative observed slots relative to the first observation.
    let mut cum = Vec::with_capacity(times.len());
    let mut acc = 0u64;
    cum.push(0u64);
    for &s in &slot_diffs {
        acc += s;
        cum.push(acc);
    }

    // A gap can only be explained inside the marker, so candidate start
    // indices range over the marker pulses.
    let max_start = pattern.marker_pulse_count();
    let mut matches = Vec::new();
    'cand: for k in 0..=max_start {
        let base = pattern.slot_of_pulse(k);
        for (i, &c) in cum.iter().enumerate() {
            if pattern.slot_of_pulse(k + i as u64) - base != c {
                continue 'cand;
            }
        }
        matches.push(k);
    }

    match matches.len() {
        0 => Err(SyncError::Match {
            sensor,
            message: "observed gap signature does not match the pattern".to_string(),
        }),
        1 => Ok(matches[0]),
        n => Err(SyncError::Match {
            sensor,
            message: format!("pattern is ambiguous: {n} candidate offsets {matches:?}"),
        }),
    }
}

/// Default residual threshold flagging a mis-association, ns (1 ms).
pub const FIT_RESIDUAL_THRESHOLD_NS: f64 = 1_000_000.0;

/// Least-squares fit of `t_sensor = scale * t_global + offset` over matched
/// pulse pairs `(global_pulse_time_ns, sensor_time_ns)`.
pub fn fit_clock(pairs: &[(i64, i64)]) -> Result<ClockModel, SyncError> {
    if pairs.len() < 2 {
        return Err(SyncError::Fit {
            sensor: String::new(),
            message: format!("need at least 2 matched pairs, got {}", pairs.len()),
        });
    }
    let n = pairs.len() as f64;
    let mean_g = pairs.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let mean_s = pairs.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for &(g, s) in pairs {
        let dg = g as f64 - mean_g;
        let ds = s as f64 - mean_s;
        sxx += dg * dg;
        sxy += dg * ds;
    }
    if sxx == 0.0 {
        return Err(SyncError::Fit {
            sensor: String::new(),
            message: "all global times identical; cannot fit drift".to_string(),
        });
    }
    let scale = sxy / sxx;
    let offset_ns = mean_s - scale * mean_g;
    let mut sq = 0.0;
    for &(g, s) in pairs {
        let r = s as f64 - (scale * g as f64 + offset_ns);
        sq += r * r;
    }
    let rms_residual_ns = (sq / n).sqrt();
    Ok(ClockModel {
        scale,
        offset_ns,
        rms_residual_ns,
    })
}

/// Largest absolute fit residual over the matched pairs, ns.
pub fn max_abs_residual_ns(pairs: &[(i64, i64)], model: &ClockModel) -> f64 {
    pairs
        .iter()
        .map(|&(g, s)| (s as f64 - model.to_sensor(g as f64)).abs())
        .fold(0.0, f64::max)
}

/// Matches and fits one sensor's trigger channel against the fast pattern.
pub fn align_sensor(
    obs: &TriggerObservations,
    pattern: &PulsePattern,
) -> Result<SensorSync, SyncError> {
    let first = match_pattern(obs, pattern)?;
    let pairs: Vec<(i64, i64)> = obs
        .pulse_times_ns
        .iter()
        .enumerate()
        .map(|(i, &t)| (pattern.pulse_time_ns(first + i as u64), t as i64))
        .collect();
    let model = fit_clock(&pairs).map_err(|e| match e {
        SyncError::Fit { message, .. } => SyncError::Fit {
            sensor: obs.sensor_id.clone(),
            message,
        },
        other => other,
    })?;
    // A single bad association shows up in the max residual long before it
    // dominates the rms.
    let worst = max_abs_residual_ns(&pairs, &model);
    if model.rms_residual_ns > FIT_RESIDUAL_THRESHOLD_NS || worst > FIT_RESIDUAL_THRESHOLD_NS {
        return Err(SyncError::Fit {
            sensor: obs.sensor_id.clone(),
            message: format!(
                "residual (rms {:.0} ns, max {:.0} ns) exceeds {:.0} ns; probable mis-association",
                model.rms_residual_ns, worst, FIT_RESIDUAL_THRESHOLD_NS
            ),
        });
    }
    Ok(SensorSync {
        model,
        first_pulse_index: first,
    })
}

/// Aligns the slow (1 Hz) channel. Slow pulse k coincides with fast pulse
/// `k * slow_ratio`; the channel carries no marker and is assumed complete
/// from slow pulse 0.
pub fn align_slow_sensor(
    obs: &TriggerObservations,
    pattern: &PulsePattern,
) -> Result<SensorSync, SyncError> {
    let ratio = pattern.slow_channel_ratio as u64;
    let pairs: Vec<(i64, i64)> = obs
        .pulse_times_ns
        .iter()
        .enumerate()
        .map(|(i, &t)| (pattern.pulse_time_ns(i as u64 * ratio), t as i64))
        .collect();
    if pairs.len() < 2 {
        return Err(SyncError::Match {
            sensor: obs.sensor_id.clone(),
            message: format!("need at least 2 slow pulses, got {}", pairs.len()),
        });
    }
    let model = fit_clock(&pairs).map_err(|e| match e {
        SyncError::Fit { message, .. } => SyncError::Fit {
            sensor: obs.sensor_id.clone(),
            message,
        },
        other => other,
    })?;
    Ok(SensorSync {
        model,
        first_pulse_index: 0,
    })
}

/// Default tolerance on the elapsed-since-pulse channel, ns.
pub const ELAPSED_TOLERANCE_NS: u64 = 1_000_000;

/// Rewrites IMU sample times to the global clock using each sample's
/// elapsed-since-pulse counter and the IMU's matched pulse indices.
pub fn resolve_imu_times(
    imu: &[ImuSample],
    obs: &TriggerObservations,
    sync: &SensorSync,
    pattern: &PulsePattern,
) -> Result<Vec<ImuSample>, SyncError> {
    let times = &obs.pulse_times_ns;
    let mut out = Vec::with_capacity(imu.len());
    for (index, s) in imu.iter().enumerate() {
        // Reference pulse: last observed pulse at or before the sample.
        let pos = times.partition_point(|&t| t <= s.t_ns);
        if pos == 0 {
            return Err(SyncError::BeforeFirstPulse { index });
        }
        let local_ordinal = (pos - 1) as u64;
        let global_pulse = sync.first_pulse_index + local_ordinal;
        // Legitimate elapsed can span a marker gap; bound it by the template
        // distance to the next pulse.
        let gap_slots =
            pattern.slot_of_pulse(global_pulse + 1) - pattern.slot_of_pulse(global_pulse);
        let expected_ns = gap_slots * pattern.nominal_period_ns + ELAPSED_TOLERANCE_NS;
        if s.elapsed_since_pulse_ns > expected_ns {
            return Err(SyncError::MissedPulse {
                index,
                elapsed_ns: s.elapsed_since_pulse_ns,
                expected_ns,
            });
        }
        let t_global = pattern.pulse_time_ns(global_pulse) + s.elapsed_since_pulse_ns as i64;
        out.push(ImuSample {
            t_ns: t_global.max(0) as u64,
            ..*s
        });
    }
    Ok(out)
}

/// Sensors that must expose a trigger channel for full synchronization.
pub const REQUIRED_SENSORS: [&str; 4] = ["event", "rgb", "imu", "gnss"];

/// Synchronizes a whole recording: decodes every trigger channel, fits clock
/// models, and rewrites all hardware-synchronized streams onto the global
/// clock. The range stream is shifted by the configured host-clock offset.
pub fn synchronize_recording(
    rec: &Recording,
    pattern: &PulsePattern,
    out_dir: &std::path::Path,
) -> Result<(Recording, SyncSolution), SyncError> {
    pattern.validate()?;
    let mut solution = SyncSolution::default();
    for sensor in REQUIRED_SENSORS {
        let obs = rec
            .triggers_for(sensor)
            .ok_or_else(|| SyncError::MissingTriggers(sensor.to_string()))?;
        let aligned = if sensor == "gnss" {
            align_slow_sensor(obs, pattern)?
        } else {
            align_sensor(obs, pattern)?
        };
        solution.sensors.insert(sensor.to_string(), aligned);
    }

    let range_offset_ns: i64 = rec
        .manifest_extra
        .get_or("sync.range_offset_ns", 0i64)
        .unwrap_or(0);

    // `root` stays at the source until after writing so frame images are
    // copied from the original directory.
    let mut out = rec.clone();
    out.events_path = out_dir.join("events.bin");

    // Event stream: affine remap, dropping any pre-global-zero prefix.
    std::fs::create_dir_all(out_dir)?;
    let event_model = solution.sensors["event"].model;
    let mut writer = crate::recording::EventWriter::create(&out.events_path)?;
    let mut dropped: u64 = 0;
    for chunk in rec.events(1 << 16)? {
        for mut e in chunk? {
            let t = event_model.to_global_ns(e.t_ns);
            if t < 0 {
                dropped += 1;
                continue;
            }
            e.t_ns = t as u64;
            writer.write(&e)?;
        }
    }
    writer.finish()?;
    if dropped > 0 {
        out.manifest_extra.set("sync.events_dropped_pre_zero", dropped);
    }

    // RGB frames: pulse-indexed; exposure midpoint on the global clock.
    let rgb = &solution.sensors["rgb"];
    for f in &mut out.frames {
        let global_pulse = rgb.first_pulse_index + f.pulse_index;
        let t = pattern.pulse_time_ns(global_pulse) + (f.exposure_us as i64 * 1000) / 2;
        f.pulse_index = global_pulse;
        f.t_ns = t.max(0) as u64;
    }

    // IMU: elapsed-since-pulse channel.
    let imu_obs = rec.triggers_for("imu").unwrap();
    out.imu = resolve_imu_times(&rec.imu, imu_obs, &solution.sensors["imu"], pattern)?;

    // GNSS: affine remap via the slow channel.
    let gnss_model = solution.sensors["gnss"].model;
    for g in &mut out.gnss {
        g.t_ns = gnss_model.to_global_ns(g.t_ns).max(0) as u64;
    }

    // Range: fixed configurable host offset.
    for r in &mut out.range {
        r.t_host_ns = (r.t_host_ns as i64 + range_offset_ns).max(0) as u64;
    }

    out.manifest_extra.set("sync.applied", "true");
    out.manifest_extra.set("sync.pattern", pattern.spec_string());
    out.manifest_extra.set("sync.period_ns", pattern.nominal_period_ns);
    out.manifest_extra.set("sync.slow_ratio", pattern.slow_channel_ratio);
    crate::recording::write_recording(&out, out_dir)?;
    out.root = out_dir.to_path_buf();
    Ok((out, solution))
}
