use nalgebra::{Matrix3, UnitQuaternion, Vector3};

/// Sign of a brightness change at an event pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Off = 0,
    On = 1,
}

impl Polarity {
    pub fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Polarity::Off),
            1 => Some(Polarity::On),
            _ => None,
        }
    }

    pub fn as_byte(self) -> u8 {
        self as u8
    }

    /// +1 for ON, -1 for OFF.
    pub fn sign(self) -> f64 {
        match self {
            Polarity::On => 1.0,
            Polarity::Off => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Polarity::On => Polarity::Off,
            Polarity::Off => Polarity::On,
        }
    }
}

/// One asynchronous polarity change at a pixel. The atomic unit of the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Event {
    pub t_ns: u64,
    pub x: u16,
    pub y: u16,
    pub polarity: Polarity,
}

/// One inertial measurement with the elapsed-since-pulse timestamping channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImuSample {
    pub t_ns: u64,
    /// rad/s
    pub angular_velocity: Vector3<f64>,
    /// m/s^2
    pub linear_acceleration: Vector3<f64>,
    /// Gravity-aligned attitude estimate, body-to-world.
    pub orientation: UnitQuaternion<f64>,
    /// Time since the last sync pulse seen by the IMU, ns.
    pub elapsed_since_pulse_ns: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnssFixQuality {
    None,
    Fix2d,
    Fix3d,
    Rtk,
}

impl GnssFixQuality {
    pub fn as_str(self) -> &'static str {
        match self {
            GnssFixQuality::None => "none",
            GnssFixQuality::Fix2d => "fix2d",
            GnssFixQuality::Fix3d => "fix3d",
            GnssFixQuality::Rtk => "rtk",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(GnssFixQuality::None),
            "fix2d" => Some(GnssFixQuality::Fix2d),
            "fix3d" => Some(GnssFixQuality::Fix3d),
            "rtk" => Some(GnssFixQuality::Rtk),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GnssFix {
    pub t_ns: u64,
    pub latitude_deg: f64,
    pub longitude_deg: f64,
    pub altitude_msl_m: f64,
    pub fix_quality: GnssFixQuality,
}

/// Single-point range measurement. Host-timestamped; the range sensor has no
/// hardware synchronization channel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSample {
    pub t_host_ns: u64,
    /// Distance to ground, meters. Non-positive values mark an invalid return.
    pub range_m: f64,
}

impl RangeSample {
    pub fn is_valid(&self) -> bool {
        self.range_m > 0.0
    }
}

/// One RGB exposure referenced from `frames/index.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    /// Trigger pulse that exposed this frame.
    pub pulse_index: u64,
    /// Exposure-midpoint timestamp.
    pub t_ns: u64,
    pub exposure_us: u32,
    /// Relative path inside the recording directory.
    pub image_path: String,
}

/// Local sensor timestamps at which sync pulses were observed.
#[derive(Debug, Clone, PartialEq)]
pub struct TriggerObservations {
    pub sensor_id: String,
    pub pulse_times_ns: Vec<u64>,
}

/// Pinhole + radial-tangential calibration with camera-to-rig extrinsics.
///
/// Rig convention: camera frame has z forward (optical axis), x right, y down;
/// `extrinsic_rotation` maps camera coordinates into the rig frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraCalibration {
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// k1, k2, p1, p2
    pub distortion: [f64; 4],
    pub extrinsic_rotation: UnitQuaternion<f64>,
    pub extrinsic_translation: Vector3<f64>,
}

impl CameraCalibration {
    /// Ideal pinhole covering `fov_x_deg` x `fov_y_deg` at the given geometry,
    /// zero distortion, identity extrinsics.
    pub fn ideal(width: u32, height: u32, fov_x_deg: f64, fov_y_deg: f64) -> Self {
        let fx = width as f64 / 2.0 / (fov_x_deg.to_radians() / 2.0).tan();
        let fy = height as f64 / 2.0 / (fov_y_deg.to_radians() / 2.0).tan();
        Self {
            width,
            height,
            fx,
            fy,
            cx: (width as f64 - 1.0) / 2.0,
            cy: (height as f64 - 1.0) / 2.0,
            distortion: [0.0; 4],
            extrinsic_rotation: UnitQuaternion::identity(),
            extrinsic_translation: Vector3::zeros(),
        }
    }

    pub fn intrinsic_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Projects a camera-frame point (z > 0) to pixel coordinates, applying
    /// radial-tangential distortion on normalized coordinates.
    pub fn project(&self, p: &Vector3<f64>) -> Option<(f64, f64)> {
        if p.z <= 0.0 {
            return None;
        }
        let xn = p.x / p.z;
        let yn = p.y / p.z;
        let (xd, yd) = self.distort(xn, yn);
        Some((self.fx * xd + self.cx, self.fy * yd + self.cy))
    }

    /// Applies the distortion model to normalized coordinates.
    pub fn distort(&self, xn: f64, yn: f64) -> (f64, f64) {
        let [k1, k2, p1, p2] = self.distortion;
        let r2 = xn * xn + yn * yn;
        let radial = 1.0 + k1 * r2 + k2 * r2 * r2;
        let xd = xn * radial + 2.0 * p1 * xn * yn + p2 * (r2 + 2.0 * xn * xn);
        let yd = yn * radial + p1 * (r2 + 2.0 * yn * yn) + 2.0 * p2 * xn * yn;
        (xd, yd)
    }

    /// Inverts the distortion model by fixed-point iteration.
    pub fn undistort(&self, xd: f64, yd: f64) -> (f64, f64) {
        let mut xn = xd;
        let mut yn = yd;
        for _ in 0..10 {
            let (xdd, ydd) = self.distort(xn, yn);
            xn -= xdd - xd;
            yn -= ydd - yd;
        }
        (xn, yn)
    }

    /// Ray in camera frame through pixel (u, v), undistorted, unit z.
    pub fn unproject(&self, u: f64, v: f64) -> Vector3<f64> {
        let xd = (u - self.cx) / self.fx;
        let yd = (v - self.cy) / self.fy;
        let (xn, yn) = self.undistort(xd, yd);
        Vector3::new(xn, yn, 1.0)
    }
}

/// Table-of-contents metadata for one flight.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RecordingMeta {
    pub sequence: String,
    pub area: String,
    pub flight_height_m: f64,
    pub speed_mps: f64,
    pub bias: String,
    pub overlap_pct: f64,
    pub illumination: String,
}

/// In-memory recording. The event stream stays on disk; `Recording` holds the
/// path and side streams, and hands out chunked event readers on demand.
#[derive(Debug, Clone)]
pub struct Recording {
    pub meta: RecordingMeta,
    /// Extra manifest keys (sync pattern, pipeline defaults) carried verbatim.
    pub manifest_extra: crate::config::KeyValueFile,
    pub events_path: std::path::PathBuf,
    pub frames: Vec<FrameRecord>,
    pub imu: Vec<ImuSample>,
    pub gnss: Vec<GnssFix>,
    pub range: Vec<RangeSample>,
    pub triggers: Vec<TriggerObservations>,
    pub calib_event: CameraCalibration,
    pub calib_rgb: CameraCalibration,
    /// Directory the recording was opened from.
    pub root: std::path::PathBuf,
}

impl Recording {
    pub fn triggers_for(&self, sensor: &str) -> Option<&TriggerObservations> {
        self.triggers.iter().find(|t| t.sensor_id == sensor)
    }

    /// Chunked event iterator. Chunk size is in records.
    pub fn events(&self, chunk_size: usize) -> std::io::Result<EventChunkReader> {
        EventChunkReader::open(&self.events_path, chunk_size)
    }

    pub fn event_count(&self) -> std::io::Result<u64> {
        let len = std::fs::metadata(&self.events_path)?.len();
        Ok(len / EVENT_RECORD_SIZE as u64)
    }
}

use super::events::{EventChunkReader, EVENT_RECORD_SIZE};
