//! Synthetic recording generator: textured ground plane, survey flight,
//! ideal event camera, triggered RGB frames, and IMU/GNSS/range streams with
//! configurable per-sensor clock drift and jitter.

mod flight;
mod scene;

pub use flight::{
    camera_mount, footprint_width_m, plan_flight, track_spacing_m, FlightError, FlightPattern,
    FlightPlan, PoseSample, TrackSpacing, Trajectory,
};
pub use scene::{builtin_texture, SceneError, ScenePlane};

use std::path::Path;

use image::RgbImage;
use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::recording::{
    self, CameraCalibration, Event, FrameRecord, GnssFix, GnssFixQuality, ImuSample, Polarity,
    RangeSample, Recording, RecordingError, TriggerObservations,
};
use crate::sync::PulsePattern;
use crate::utm::{utm_to_latlon, Hemisphere, UtmError, UtmPoint};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Flight(#[from] FlightError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error("camera at {0} m is not above ground at {1} m")]
    CameraBelowGround(f64, f64),
    #[error("supersample rate must be >= 1000 Hz, got {0}")]
    SupersampleTooCoarse(f64),
    #[error("contrast threshold must be positive, got {0}")]
    BadContrast(f64),
    #[error(transparent)]
    Recording(#[from] RecordingError),
    #[error(transparent)]
    Utm(#[from] UtmError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
}

/// Gravitational acceleration reported by a resting IMU, m/s².
const GRAVITY_MPS2: f64 = 9.81;

// ---------------------------------------------------------------------------
// Rendering

/// Accumulates one ray-plane render into `accum` (RGB triplets, row-major).
fn render_accum(
    scene: &ScenePlane,
    position: &UtmPoint,
    orientation: &UnitQuaternion<f64>,
    rays: &[Vector3<f64>],
    accum: &mut [f64],
) {
    let rot = orientation.to_rotation_matrix();
    let ground = scene.ground_alt_m();
    for (i, ray_cam) in rays.iter().enumerate() {
        let ray = rot * ray_cam;
        if ray.z >= -1e-12 {
            continue; // above the horizon: contributes black
        }
        let s = (ground - position.altitude_m) / ray.z;
        let e = position.easting_m + s * ray.x;
        let n = position.northing_m + s * ray.y;
        let rgb = scene.sample(e, n);
        for c in 0..3 {
            accum[3 * i + c] += rgb[c];
        }
    }
}

/// Per-pixel camera rays (undistorted, z = 1), row-major.
fn pixel_rays(calib: &CameraCalibration) -> Vec<Vector3<f64>> {
    let mut rays = Vec::with_capacity((calib.width * calib.height) as usize);
    for y in 0..calib.height {
        for x in 0..calib.width {
            rays.push(calib.unproject(x as f64, y as f64));
        }
    }
    rays
}

/// Renders one frame by ray-plane intersection and bilinear texture sampling.
pub fn render_rgb(
    scene: &ScenePlane,
    calib: &CameraCalibration,
    position: &UtmPoint,
    orientation: &UnitQuaternion<f64>,
) -> Result<RgbImage, SimError> {
    if position.altitude_m <= scene.ground_alt_m() {
        return Err(SimError::CameraBelowGround(position.altitude_m, scene.ground_alt_m()));
    }
    let rays = pixel_rays(calib);
    let mut accum = vec![0.0f64; rays.len() * 3];
    render_accum(scene, position, orientation, &rays, &mut accum);
    Ok(accum_to_image(&accum, calib.width, calib.height, 1.0))
}

/// Renders a motion-blurred frame: the average of `blur_samples` renders at
/// sub-exposure times centered on the sample midpoints.
pub fn render_rgb_blurred(
    scene: &ScenePlane,
    calib: &CameraCalibration,
    trajectory: &Trajectory,
    t_start_s: f64,
    exposure_s: f64,
    blur_samples: usize,
) -> Result<RgbImage, SimError> {
    let n = blur_samples.max(1);
    let rays = pixel_rays(calib);
    let mut accum = vec![0.0f64; rays.len() * 3];
    for i in 0..n {
        let t = t_start_s + exposure_s * (i as f64 + 0.5) / n as f64;
        let pose = trajectory.pose(t);
        if pose.position.altitude_m <= scene.ground_alt_m() {
            return Err(SimError::CameraBelowGround(
                pose.position.altitude_m,
                scene.ground_alt_m(),
            ));
        }
        render_accum(scene, &pose.position, &pose.camera_orientation(), &rays, &mut accum);
    }
    Ok(accum_to_image(&accum, calib.width, calib.height, n as f64))
}

fn accum_to_image(accum: &[f64], width: u32, height: u32, divisor: f64) -> RgbImage {
    let mut img = RgbImage::new(width, height);
    for (i, p) in img.pixels_mut().enumerate() {
        for c in 0..3 {
            p.0[c] = (accum[3 * i + c] / divisor).round().clamp(0.0, 255.0) as u8;
        }
    }
    img
}

// ---------------------------------------------------------------------------
// Event generation

/// Ideal event-camera model parameters.
#[derive(Debug, Clone)]
pub struct EventGenConfig {
    /// Contrast threshold C on log luminance.
    pub contrast: f64,
    /// Internal supersampling rate; must be at least 1 kHz.
    pub supersample_hz: f64,
    /// Global event-rate cap, events per second; excess events are dropped
    /// deterministically in time order.
    pub rate_cap_per_s: u64,
}

impl Default for EventGenConfig {
    fn default() -> Self {
        Self {
            contrast: 0.1,
            supersample_hz: 1000.0,
            rate_cap_per_s: u64::MAX,
        }
    }
}

fn log_luminance(lum: f64) -> f64 {
    (lum + 1.0).ln()
}

/// Ideal event generation: per pixel, log luminance of the rendered scene is
/// tracked at `supersample_hz`; an event is emitted each time accumulated
/// change crosses ±C, timestamped by linear interpolation between samples.
/// Returns the time-sorted stream and the number of events dropped by the
/// rate cap.
pub fn generate_events(
    scene: &ScenePlane,
    calib: &CameraCalibration,
    trajectory: &Trajectory,
    t_start_s: f64,
    t_end_s: f64,
    cfg: &EventGenConfig,
) -> Result<(Vec<Event>, u64), SimError> {
    if cfg.supersample_hz < 1000.0 {
        return Err(SimError::SupersampleTooCoarse(cfg.supersample_hz));
    }
    if !(cfg.contrast > 0.0) {
        return Err(SimError::BadContrast(cfg.contrast));
    }
    let steps = (((t_end_s - t_start_s) * cfg.supersample_hz).ceil() as usize).max(1);
    let dt = (t_end_s - t_start_s) / steps as f64;

    // Precompute per-step camera poses; shared read-only across pixel rows.
    let poses: Vec<(UtmPoint, Rotation3<f64>)> = (0..=steps)
        .map(|i| {
            let pose = trajectory.pose(t_start_s + i as f64 * dt);
            (pose.position, pose.camera_orientation().to_rotation_matrix())
        })
        .collect();
    for (p, _) in &poses {
        if p.altitude_m <= scene.ground_alt_m() {
            return Err(SimError::CameraBelowGround(p.altitude_m, scene.ground_alt_m()));
        }
    }

    let ground = scene.ground_alt_m();
    let contrast = cfg.contrast;

    // Single-channel luminance grid of the texture; the inner loop only needs
    // brightness, not color.
    let tex_w = scene.texture.width() as usize;
    let tex_h = scene.texture.height() as usize;
    let luma_grid: Vec<f64> = scene
        .texture
        .pixels()
        .map(|p| 0.299 * p.0[0] as f64 + 0.587 * p.0[1] as f64 + 0.114 * p.0[2] as f64)
        .collect();
    let inv_mpt = 1.0 / scene.meters_per_texel;
    let origin_e = scene.origin.easting_m;
    let origin_n = scene.origin.northing_m;
    let sample_lum = move |luma: &[f64], e: f64, n: f64| -> f64 {
        let tx = ((e - origin_e) * inv_mpt).clamp(0.0, (tex_w - 1) as f64);
        let ty = ((origin_n - n) * inv_mpt).clamp(0.0, (tex_h - 1) as f64);
        let x0 = tx as usize;
        let y0 = ty as usize;
        let x1 = (x0 + 1).min(tex_w - 1);
        let y1 = (y0 + 1).min(tex_h - 1);
        let fx = tx - x0 as f64;
        let fy = ty - y0 as f64;
        let top = luma[y0 * tex_w + x0] * (1.0 - fx) + luma[y0 * tex_w + x1] * fx;
        let bot = luma[y1 * tex_w + x0] * (1.0 - fx) + luma[y1 * tex_w + x1] * fx;
        top * (1.0 - fy) + bot * fy
    };

    // The orientation is constant on straight legs; the rotated ray is reused
    // until the pose rotation actually changes.
    let rot_changed: Vec<bool> = std::iter::once(false)
        .chain(poses.windows(2).map(|w| w[0].1 != w[1].1))
        .collect();

    let mut events: Vec<Event> = (0..calib.height)
        .into_par_iter()
        .flat_map_iter(|y| {
            let mut row_events = Vec::new();
            let rays: Vec<Vector3<f64>> =
                (0..calib.width).map(|x| calib.unproject(x as f64, y as f64)).collect();
            let ground_lum = |pos: &UtmPoint, r: &Vector3<f64>| -> f64 {
                if r.z >= -1e-12 {
                    return 0.0;
                }
                let s = (ground - pos.altitude_m) / r.z;
                sample_lum(&luma_grid, pos.easting_m + s * r.x, pos.northing_m + s * r.y)
            };
            for (xi, ray) in rays.iter().enumerate() {
                let mut r = poses[0].1 * ray;
                let mut prev_lum = ground_lum(&poses[0].0, &r);
                let mut reference = log_luminance(prev_lum);
                // Crossing thresholds expressed in the luminance domain, so
                // the hot path needs no logarithm.
                let mut lum_hi = (reference + contrast).exp() - 1.0;
                let mut lum_lo = (reference - contrast).exp() - 1.0;
                for (i, pose) in poses.iter().enumerate().skip(1) {
                    if rot_changed[i] {
                        r = pose.1 * ray;
                    }
                    let cur_lum = ground_lum(&pose.0, &r);
                    if cur_lum > lum_lo && cur_lum < lum_hi {
                        prev_lum = cur_lum;
                        continue;
                    }
                    let cur = log_luminance(cur_lum);
                    let prev = log_luminance(prev_lum);
                    let seg_t0 = t_start_s + (i - 1) as f64 * dt;
                    // emit every threshold crossing inside this supersample
                    loop {
                        let (next_level, polarity) = if cur - reference >= contrast {
                            (reference + contrast, Polarity::On)
                        } else if reference - cur >= contrast {
                            (reference - contrast, Polarity::Off)
                        } else {
                            break;
                        };
                        let frac = if (cur - prev).abs() > 1e-300 {
                            ((next_level - prev) / (cur - prev)).clamp(0.0, 1.0)
                        } else {
                            1.0
                        };
                        let t = seg_t0 + frac * dt;
                        row_events.push(Event {
                            t_ns: (t * 1e9).round().max(0.0) as u64,
                            x: xi as u16,
                            y: y as u16,
                            polarity,
                        });
                        reference = next_level;
                    }
                    lum_hi = (reference + contrast).exp() - 1.0;
                    lum_lo = (reference - contrast).exp() - 1.0;
                    prev_lum = cur_lum;
                }
            }
            row_events
        })
        .collect();

    events.par_sort_unstable_by_key(|e| (e.t_ns, e.y, e.x, e.polarity.as_byte()));

    // Deterministic rate cap: sliding 1-second window in time order.
    let mut dropped = 0u64;
    if cfg.rate_cap_per_s != u64::MAX {
        let mut kept: Vec<Event> = Vec::with_capacity(events.len());
        let mut window_start = 0usize;
        for e in events.into_iter() {
            while window_start < kept.len() && kept[window_start].t_ns + 1_000_000_000 <= e.t_ns {
                window_start += 1;
            }
            if (kept.len() - window_start) as u64 >= cfg.rate_cap_per_s {
                dropped += 1;
            } else {
                kept.push(e);
            }
        }
        events = kept;
    }
    Ok((events, dropped))
}

// ---------------------------------------------------------------------------
// Sensor streams and recording assembly

/// Affine sensor clock `t_local = scale * t_global + offset_ns`, plus trigger
/// observation jitter and an optional dropped pulse prefix.
#[derive(Debug, Clone)]
pub struct ClockSpec {
    pub scale: f64,
    pub offset_ns: f64,
    pub jitter_sigma_ns: f64,
    pub dropped_prefix: usize,
}

/// Sensors time-stamp with an arbitrary local epoch; a large positive base
/// keeps local u64 times positive for any configured offset within ±10 s.
pub const SENSOR_EPOCH_NS: f64 = 100_000_000_000.0;

impl Default for ClockSpec {
    fn default() -> Self {
        Self {
            scale: 1.0,
            offset_ns: SENSOR_EPOCH_NS,
            jitter_sigma_ns: 0.0,
            dropped_prefix: 0,
        }
    }
}

impl ClockSpec {
    pub fn to_local(&self, t_global_ns: f64) -> f64 {
        self.scale * t_global_ns + self.offset_ns
    }
}

/// Full simulation configuration.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub pattern: PulsePattern,
    pub clock_event: ClockSpec,
    pub clock_rgb: ClockSpec,
    pub clock_imu: ClockSpec,
    pub clock_gnss: ClockSpec,
    /// Host-clock offset of the (unsynchronized) range sensor:
    /// `t_global = t_host + offset`.
    pub range_offset_ns: i64,
    pub calib_event: CameraCalibration,
    pub calib_rgb: CameraCalibration,
    pub imu_rate_hz: f64,
    pub gnss_rate_hz: f64,
    pub range_rate_hz: f64,
    pub exposure_us: u32,
    /// Render an RGB frame for every Nth observed trigger.
    pub frame_divisor: u64,
    pub blur_samples: usize,
    pub events: EventGenConfig,
    pub gnss_noise_m: f64,
    pub range_noise_m: f64,
    pub sequence: String,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            pattern: PulsePattern::default(),
            clock_event: ClockSpec::default(),
            clock_rgb: ClockSpec::default(),
            clock_imu: ClockSpec::default(),
            clock_gnss: ClockSpec::default(),
            range_offset_ns: 0,
            // IMX636 aspect at quarter scale; full 1280x720 via config.
            calib_event: CameraCalibration::ideal(320, 180, 64.0, 39.0),
            calib_rgb: CameraCalibration::ideal(640, 360, 71.0, 56.0),
            imu_rate_hz: 400.0,
            gnss_rate_hz: 5.0,
            range_rate_hz: 60.0,
            exposure_us: 2000,
            frame_divisor: 10,
            blur_samples: 5,
            events: EventGenConfig::default(),
            gnss_noise_m: 0.0,
            range_noise_m: 0.0,
            sequence: "SIM".to_string(),
        }
    }
}

/// Ground truth retained from a simulation run, for oracle-based tests.
#[derive(Debug, Clone)]
pub struct SimTruth {
    pub trajectory: Trajectory,
    pub events_dropped: u64,
    /// Global times (ns) of every emitted fast pulse.
    pub pulse_times_ns: Vec<i64>,
}

/// Standard normal via Box-Muller; two uniforms per sample.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn stream_rng(seed: u64, salt: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(salt))
}

/// Observed trigger times for one sensor: true pulse times through the
/// sensor's clock plus jitter, with the configured prefix dropped.
fn observe_triggers(
    pulse_times_ns: &[i64],
    clock: &ClockSpec,
    rng: &mut ChaCha8Rng,
) -> Vec<u64> {
    pulse_times_ns
        .iter()
        .skip(clock.dropped_prefix)
        .map(|&t| {
            let local = clock.to_local(t as f64) + clock.jitter_sigma_ns * gaussian(rng);
            local.round().max(0.0) as u64
        })
        .collect()
}

/// Runs the full simulation and writes a complete recording directory.
/// A fixed seed yields a bit-identical recording.
pub fn simulate_recording(
    scene: &ScenePlane,
    plan: &FlightPlan,
    cfg: &SimConfig,
    out_dir: &Path,
) -> Result<(Recording, SimTruth), SimError> {
    let fov_lateral_deg =
        2.0 * ((cfg.calib_event.width as f64 / 2.0) / cfg.calib_event.fx).atan().to_degrees();
    let trajectory = plan_flight(plan, fov_lateral_deg)?;
    let duration_ns = (trajectory.duration_s() * 1e9) as i64;

    std::fs::create_dir_all(out_dir)?;
    std::fs::create_dir_all(out_dir.join("frames"))?;

    // Fast pulse train: pattern slots from pulse 0 until the flight ends.
    let mut pulse_times_ns = Vec::new();
    let mut k = 0u64;
    loop {
        let t = cfg.pattern.pulse_time_ns(k);
        if t > duration_ns {
            break;
        }
        pulse_times_ns.push(t);
        k += 1;
    }

    let mut triggers = Vec::new();
    let mut rng_trig = stream_rng(cfg.seed, 1);
    let obs_event = observe_triggers(&pulse_times_ns, &cfg.clock_event, &mut rng_trig);
    let obs_rgb = observe_triggers(&pulse_times_ns, &cfg.clock_rgb, &mut rng_trig);
    let obs_imu = observe_triggers(&pulse_times_ns, &cfg.clock_imu, &mut rng_trig);
    // Slow (1 Hz) channel: every `slow_ratio`-th pulse, complete from slow
    // pulse 0, observed by the GNSS receiver.
    let ratio = cfg.pattern.slow_channel_ratio as u64;
    let slow_times: Vec<i64> = (0..)
        .map(|j| cfg.pattern.pulse_time_ns(j * ratio))
        .take_while(|&t| t <= duration_ns)
        .collect();
    let mut gnss_clock = cfg.clock_gnss.clone();
    gnss_clock.dropped_prefix = 0;
    let obs_gnss = observe_triggers(&slow_times, &gnss_clock, &mut rng_trig);
    for (sensor, times) in [
        ("event", &obs_event),
        ("rgb", &obs_rgb),
        ("imu", &obs_imu),
        ("gnss", &obs_gnss),
    ] {
        triggers.push(TriggerObservations {
            sensor_id: sensor.to_string(),
            pulse_times_ns: times.clone(),
        });
    }

    // Event stream in the event camera's local clock.
    let (global_events, events_dropped) = generate_events(
        scene,
        &cfg.calib_event,
        &trajectory,
        0.0,
        trajectory.duration_s(),
        &cfg.events,
    )?;
    let events_path = out_dir.join("events.bin");
    let mut writer = recording::EventWriter::create(&events_path)?;
    for e in &global_events {
        let mut local = *e;
        local.t_ns = cfg.clock_event.to_local(e.t_ns as f64).round().max(0.0) as u64;
        writer.write(&local)?;
    }
    writer.finish()?;
    drop(global_events);

    // RGB frames at every Nth observed trigger, blurred across the exposure.
    let exposure_s = cfg.exposure_us as f64 * 1e-6;
    let mut frames = Vec::new();
    for (j, &local_t) in obs_rgb.iter().enumerate() {
        if j as u64 % cfg.frame_divisor != 0 {
            continue;
        }
        let global_pulse = cfg.clock_rgb.dropped_prefix + j;
        let t_trigger_s = pulse_times_ns[global_pulse] as f64 * 1e-9;
        let img = render_rgb_blurred(
            scene,
            &cfg.calib_rgb,
            &trajectory,
            t_trigger_s,
            exposure_s,
            cfg.blur_samples,
        )?;
        let rel = format!("frames/frame_{j:05}.png");
        img.save(out_dir.join(&rel))
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))?;
        frames.push(FrameRecord {
            pulse_index: j as u64,
            t_ns: local_t,
            exposure_us: cfg.exposure_us,
            image_path: rel.into(),
        });
    }

    // IMU stream: starts after the first observed IMU pulse so every sample
    // has a reference pulse; elapsed counts from the observed (jittered)
    // pulse in the IMU's local clock.
    let imu_first_global_ns = pulse_times_ns[cfg.clock_imu.dropped_prefix] as f64;
    let imu_step_ns = 1e9 / cfg.imu_rate_hz;
    let mut imu = Vec::new();
    let mut t = imu_first_global_ns + imu_step_ns / 2.0;
    while t <= duration_ns as f64 {
        let pose = trajectory.pose(t * 1e-9);
        let local = cfg.clock_imu.to_local(t).round() as u64;
        let pos = obs_imu.partition_point(|&p| p <= local);
        debug_assert!(pos > 0);
        let elapsed = local - obs_imu[pos - 1];
        imu.push(ImuSample {
            t_ns: local,
            angular_velocity: Vector3::new(0.0, 0.0, pose.omega_z_rad_s),
            linear_acceleration: pose.body_orientation().inverse()
                * (pose.accel_world + Vector3::new(0.0, 0.0, GRAVITY_MPS2)),
            orientation: pose.body_orientation(),
            elapsed_since_pulse_ns: elapsed,
        });
        t += imu_step_ns;
    }

    // GNSS fixes on the receiver's clock, positions via inverse UTM.
    let mut rng_gnss = stream_rng(cfg.seed, 2);
    let gnss_step_ns = 1e9 / cfg.gnss_rate_hz;
    let mut gnss = Vec::new();
    let mut t = 0.0f64;
    while t <= duration_ns as f64 {
        let pose = trajectory.pose(t * 1e-9);
        let mut p = pose.position;
        p.easting_m += cfg.gnss_noise_m * gaussian(&mut rng_gnss);
        p.northing_m += cfg.gnss_noise_m * gaussian(&mut rng_gnss);
        p.altitude_m += cfg.gnss_noise_m * gaussian(&mut rng_gnss);
        let (lat, lon) = utm_to_latlon(&p)?;
        gnss.push(GnssFix {
            t_ns: cfg.clock_gnss.to_local(t).round().max(0.0) as u64,
            latitude_deg: lat,
            longitude_deg: lon,
            altitude_msl_m: p.altitude_m,
            fix_quality: GnssFixQuality::Rtk,
        });
        t += gnss_step_ns;
    }

    // Range stream on the host clock: nadir sensor, AGL divided by cos(tilt)
    // (tilt is zero for this rigid nadir mount).
    let mut rng_range = stream_rng(cfg.seed, 3);
    let range_step_ns = 1e9 / cfg.range_rate_hz;
    let mut range = Vec::new();
    let mut t = 0.0f64;
    while t <= duration_ns as f64 {
        let pose = trajectory.pose(t * 1e-9);
        let agl = pose.position.altitude_m - scene.ground_alt_m();
        let value = agl + cfg.range_noise_m * gaussian(&mut rng_range);
        let host = (t - cfg.range_offset_ns as f64).round().max(0.0) as u64;
        range.push(RangeSample {
            t_host_ns: host,
            range_m: value,
        });
        t += range_step_ns;
    }

    // Calibrations carry the camera-to-body mount so downstream consumers can
    // recover camera pose from the IMU orientation.
    let mut calib_event = cfg.calib_event.clone();
    calib_event.extrinsic_rotation = flight::camera_mount();
    let mut calib_rgb = cfg.calib_rgb.clone();
    calib_rgb.extrinsic_rotation = flight::camera_mount();
    let mut rec = recording::empty_recording(out_dir, calib_event, calib_rgb);
    rec.meta.sequence = cfg.sequence.clone();
    rec.meta.area = "SIM".to_string();
    rec.meta.flight_height_m = plan.altitude_agl_m;
    rec.meta.speed_mps = plan.speed_mps;
    rec.meta.overlap_pct = match plan.spacing {
        TrackSpacing::Overlap(o) => o * 100.0,
        TrackSpacing::Meters(_) => 0.0,
    };
    rec.meta.bias = "0/0".to_string();
    rec.meta.illumination = "synthetic".to_string();
    rec.frames = frames;
    rec.imu = imu;
    rec.gnss = gnss;
    rec.range = range;
    rec.triggers = triggers;
    rec.manifest_extra.set("sync.pattern", cfg.pattern.spec_string());
    rec.manifest_extra.set("sync.period_ns", cfg.pattern.nominal_period_ns);
    rec.manifest_extra.set("sync.slow_ratio", cfg.pattern.slow_channel_ratio);
    rec.manifest_extra.set("sync.range_offset_ns", cfg.range_offset_ns);
    rec.manifest_extra.set("sim.seed", cfg.seed);
    recording::write_recording(&rec, out_dir)?;

    Ok((
        rec,
        SimTruth {
            trajectory,
            events_dropped,
            pulse_times_ns,
        },
    ))
}

/// Named mission presets; heights, speeds and overlaps follow the published
/// flight campaign table. The `-small` suffix shrinks the survey rectangle to
/// a desk-scale run of roughly a minute.
pub fn preset(name: &str) -> Result<(FlightPlan, SimConfig), SimError> {
    let (base, small) = match name.strip_suffix("-small") {
        Some(base) => (base, true),
        None => (name, false),
    };
    let (height, speed, overlap, pattern) = match base {
        "F1.D.1" | "F1.D.2" | "F3.D.2" => (40.0, 3.0, 0.82, FlightPattern::Lawnmower),
        "F2.D.1" | "F2.D.2" | "F2.D.3" | "F2.D.4" => (40.0, 3.0, 0.64, FlightPattern::Lawnmower),
        "F3.D.1" => (35.0, 3.0, 0.80, FlightPattern::Crosshatch),
        "F3.D.3" => (35.0, 6.0, 0.80, FlightPattern::Lawnmower),
        "F3.D.4" => (35.0, 9.0, 0.80, FlightPattern::Lawnmower),
        _ => return Err(SimError::UnknownPreset(name.to_string())),
    };
    let (width_m, depth_m) = if small { (60.0, 18.0) } else { (150.0, 80.0) };
    let plan = FlightPlan {
        min_easting_m: 500_000.0,
        min_northing_m: 4_400_000.0,
        max_easting_m: 500_000.0 + width_m,
        max_northing_m: 4_400_000.0 + depth_m,
        zone: 18,
        hemisphere: Hemisphere::North,
        ground_alt_m: 100.0,
        altitude_agl_m: height,
        speed_mps: speed,
        spacing: TrackSpacing::Overlap(overlap),
        pattern,
        peak_turn_rate_rad_s: 0.6,
    };
    let cfg = SimConfig {
        sequence: name.to_string(),
        ..SimConfig::default()
    };
    Ok((plan, cfg))
}

/// Default scene sized to surround a plan's rectangle with margin for the
/// camera footprint.
pub fn scene_for_plan(plan: &FlightPlan, meters_per_texel: f64) -> Result<ScenePlane, SimError> {
    let margin = footprint_width_m(plan.altitude_agl_m, 75.0);
    let width_m = plan.max_easting_m - plan.min_easting_m + 2.0 * margin;
    let height_m = plan.max_northing_m - plan.min_northing_m + 2.0 * margin;
    let size = (width_m.max(height_m) / meters_per_texel).ceil() as u32;
    let texture = builtin_texture(size, (4.0 / meters_per_texel).round().max(1.0) as u32);
    let origin = UtmPoint {
        easting_m: plan.min_easting_m - margin,
        northing_m: plan.max_northing_m + margin,
        zone: plan.zone,
        hemisphere: plan.hemisphere,
        altitude_m: plan.ground_alt_m,
    };
    Ok(ScenePlane::new(texture, meters_per_texel, origin)?)
}
