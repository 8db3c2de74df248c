//! Reading, writing, and validating recording directories.

use std::path::Path;

use nalgebra::{UnitQuaternion, Quaternion, Vector3};
use thiserror::Error;

use crate::config::{ConfigError, KeyValueFile};

use super::types::*;

#[derive(Debug, Error)]
pub enum RecordingError {
    #[error("missing file: {0}")]
    MissingFile(String),
    #[error("{file}: {source}")]
    Io {
        file: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: {source}")]
    Config {
        file: String,
        #[source]
        source: ConfigError,
    },
    #[error("{file} row {row}: {message}")]
    MalformedRecord {
        file: String,
        row: usize,
        message: String,
    },
    #[error("{file}: non-monotonic timestamps at record {offset} ({prev} then {next})")]
    NonMonotonic {
        file: String,
        offset: usize,
        prev: u64,
        next: u64,
    },
    #[error("recording invariant violated: {0}")]
    Invariant(String),
}

fn io_err(file: &Path, source: std::io::Error) -> RecordingError {
    RecordingError::Io {
        file: file.display().to_string(),
        source,
    }
}

/// One validation finding: stream, record offset, violated rule.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub stream: String,
    pub offset: usize,
    pub rule: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {} at index {}", self.stream, self.rule, self.offset)
    }
}

pub fn read_recording(root: &Path) -> Result<Recording, RecordingError> {
    let manifest_path = root.join("manifest.txt");
    if !manifest_path.exists() {
        return Err(RecordingError::MissingFile(manifest_path.display().to_string()));
    }
    let manifest = KeyValueFile::load(&manifest_path).map_err(|source| RecordingError::Config {
        file: manifest_path.display().to_string(),
        source,
    })?;

    let meta = RecordingMeta {
        sequence: manifest.raw("meta.sequence").unwrap_or("").to_string(),
        area: manifest.raw("meta.area").unwrap_or("").to_string(),
        flight_height_m: manifest.get_or("meta.height_m", 0.0).unwrap_or(0.0),
        speed_mps: manifest.get_or("meta.speed_mps", 0.0).unwrap_or(0.0),
        bias: manifest.raw("meta.bias").unwrap_or("").to_string(),
        overlap_pct: manifest.get_or("meta.overlap_pct", 0.0).unwrap_or(0.0),
        illumination: manifest.raw("meta.illumination").unwrap_or("").to_string(),
    };
    let mut manifest_extra = KeyValueFile::new();
    for key in manifest.keys() {
        if !key.starts_with("meta.") {
            manifest_extra.set(key, manifest.raw(key).unwrap());
        }
    }

    let calib_event = read_calibration(&root.join("calib_event.txt"))?;
    let calib_rgb = read_calibration(&root.join("calib_rgb.txt"))?;

    let events_path = root.join("events.bin");
    if !events_path.exists() {
        return Err(RecordingError::MissingFile(events_path.display().to_string()));
    }

    let frames = read_frame_index(&root.join("frames").join("index.csv"))?;
    let imu = read_imu(&root.join("imu.csv"))?;
    let gnss = read_gnss(&root.join("gnss.csv"))?;
    let range = read_range(&root.join("range.csv"))?;

    let mut triggers = Vec::new();
    let mut names: Vec<_> = std::fs::read_dir(root)
        .map_err(|e| io_err(root, e))?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|n| n.starts_with("triggers_") && n.ends_with(".csv"))
        .collect();
    names.sort();
    for name in names {
        let sensor = name["triggers_".len()..name.len() - ".csv".len()].to_string();
        let pulse_times_ns = read_triggers(&root.join(&name))?;
        triggers.push(TriggerObservations {
            sensor_id: sensor,
            pulse_times_ns,
        });
    }

    Ok(Recording {
        meta,
        manifest_extra,
        events_path,
        frames,
        imu,
        gnss,
        range,
        triggers,
        calib_event,
        calib_rgb,
        root: root.to_path_buf(),
    })
}

pub fn write_recording(rec: &Recording, root: &Path) -> Result<(), RecordingError> {
    std::fs::create_dir_all(root).map_err(|e| io_err(root, e))?;
    std::fs::create_dir_all(root.join("frames")).map_err(|e| io_err(root, e))?;

    // Refuse unsorted side streams up front; the event stream is copied with
    // order checked record by record.
    check_sorted("imu", rec.imu.iter().map(|s| s.t_ns))?;
    check_sorted("gnss", rec.gnss.iter().map(|s| s.t_ns))?;
    check_sorted("range", rec.range.iter().map(|s| s.t_host_ns))?;
    for t in &rec.triggers {
        check_strictly_sorted(&format!("triggers_{}", t.sensor_id), t.pulse_times_ns.iter().copied())?;
    }

    let mut manifest = rec.manifest_extra.clone();
    manifest.set("meta.sequence", &rec.meta.sequence);
    manifest.set("meta.area", &rec.meta.area);
    manifest.set("meta.height_m", rec.meta.flight_height_m);
    manifest.set("meta.speed_mps", rec.meta.speed_mps);
    manifest.set("meta.bias", &rec.meta.bias);
    manifest.set("meta.overlap_pct", rec.meta.overlap_pct);
    manifest.set("meta.illumination", &rec.meta.illumination);
    let manifest_path = root.join("manifest.txt");
    manifest.save(&manifest_path).map_err(|source| RecordingError::Config {
        file: manifest_path.display().to_string(),
        source,
    })?;

    write_calibration(&rec.calib_event, &root.join("calib_event.txt"))?;
    write_calibration(&rec.calib_rgb, &root.join("calib_rgb.txt"))?;

    let dst_events = root.join("events.bin");
    if rec.events_path != dst_events {
        copy_events_checked(&rec.events_path, &dst_events)?;
    }

    write_frame_index(&rec.frames, &root.join("frames").join("index.csv"))?;
    // Frame images travel with the index; copy any that live elsewhere.
    for f in &rec.frames {
        let dst = root.join(&f.image_path);
        let src = rec.root.join(&f.image_path);
        if src != dst && src.exists() {
            if let Some(parent) = dst.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
            std::fs::copy(&src, &dst).map_err(|e| io_err(&src, e))?;
        }
    }

    write_imu(&rec.imu, &root.join("imu.csv"))?;
    write_gnss(&rec.gnss, &root.join("gnss.csv"))?;
    write_range(&rec.range, &root.join("range.csv"))?;
    for t in &rec.triggers {
        write_triggers(&t.pulse_times_ns, &root.join(format!("triggers_{}.csv", t.sensor_id)))?;
    }
    Ok(())
}

fn check_sorted(stream: &str, times: impl Iterator<Item = u64>) -> Result<(), RecordingError> {
    let mut prev: Option<u64> = None;
    for (i, t) in times.enumerate() {
        if let Some(p) = prev {
            if t < p {
                return Err(RecordingError::NonMonotonic {
                    file: stream.to_string(),
                    offset: i,
                    prev: p,
                    next: t,
                });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

fn check_strictly_sorted(stream: &str, times: impl Iterator<Item = u64>) -> Result<(), RecordingError> {
    let mut prev: Option<u64> = None;
    for (i, t) in times.enumerate() {
        if let Some(p) = prev {
            if t <= p {
                return Err(RecordingError::NonMonotonic {
                    file: stream.to_string(),
                    offset: i,
                    prev: p,
                    next: t,
                });
            }
        }
        prev = Some(t);
    }
    Ok(())
}

fn copy_events_checked(src: &Path, dst: &Path) -> Result<(), RecordingError> {
    let reader = super::events::EventChunkReader::open(src, 1 << 16).map_err(|e| io_err(src, e))?;
    let mut writer = super::events::EventWriter::create(dst).map_err(|e| io_err(dst, e))?;
    for chunk in reader {
        let chunk = chunk.map_err(|e| io_err(src, e))?;
        writer.write_all(&chunk).map_err(|e| io_err(dst, e))?;
    }
    writer.finish().map_err(|e| io_err(dst, e))?;
    Ok(())
}

/// Checks every type invariant and returns the findings. Pure: repeated calls
/// on the same recording yield identical results.
pub fn validate_recording(rec: &Recording) -> Vec<Violation> {
    let mut out = Vec::new();
    let push = |out: &mut Vec<Violation>, stream: &str, offset: usize, rule: String| {
        out.push(Violation {
            stream: stream.to_string(),
            offset,
            rule,
        })
    };

    let w = rec.calib_event.width as u16;
    let h = rec.calib_event.height as u16;
    match rec.events(1 << 16) {
        Ok(reader) => {
            let mut prev_t: Option<u64> = None;
            let mut idx = 0usize;
            for chunk in reader {
                match chunk {
                    Ok(events) => {
                        for e in events {
                            if e.x >= w {
                                push(&mut out, "events", idx, format!("x out of bounds ({} >= {w})", e.x));
                            }
                            if e.y >= h {
                                push(&mut out, "events", idx, format!("y out of bounds ({} >= {h})", e.y));
                            }
                            if let Some(p) = prev_t {
                                if e.t_ns < p {
                                    push(&mut out, "events", idx, "non-monotonic timestamp".to_string());
                                }
                            }
                            prev_t = Some(e.t_ns);
                            idx += 1;
                        }
                    }
                    Err(e) => {
                        push(&mut out, "events", idx, format!("read error: {e}"));
                        break;
                    }
                }
            }
        }
        Err(e) => push(&mut out, "events", 0, format!("cannot open: {e}")),
    }

    for (i, s) in rec.imu.iter().enumerate() {
        let norm = s.orientation.quaternion().norm();
        if (norm - 1.0).abs() > 1e-6 {
            push(&mut out, "imu", i, format!("non-unit quaternion (norm {norm})"));
        }
    }
    for pair in rec.imu.windows(2) {
        if pair[1].t_ns < pair[0].t_ns {
            push(&mut out, "imu", 1, "non-monotonic timestamp".to_string());
            break;
        }
    }

    for (i, g) in rec.gnss.iter().enumerate() {
        if g.latitude_deg.abs() > 90.0 {
            push(&mut out, "gnss", i, format!("latitude out of range ({})", g.latitude_deg));
        }
        if g.longitude_deg.abs() > 180.0 {
            push(&mut out, "gnss", i, format!("longitude out of range ({})", g.longitude_deg));
        }
    }

    for (i, f) in rec.frames.iter().enumerate() {
        if !rec.root.join(&f.image_path).exists() {
            push(&mut out, "frames", i, format!("missing image file {}", f.image_path));
        }
    }

    for t in &rec.triggers {
        let stream = format!("triggers_{}", t.sensor_id);
        for (i, pair) in t.pulse_times_ns.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                push(&mut out, &stream, i + 1, "not strictly increasing".to_string());
            }
        }
    }

    out
}

// --- calibration files -----------------------------------------------------

fn read_calibration(path: &Path) -> Result<CameraCalibration, RecordingError> {
    let kv = KeyValueFile::load(path).map_err(|source| RecordingError::Config {
        file: path.display().to_string(),
        source,
    })?;
    let file = path.display().to_string();
    let get = |k: &str| -> Result<f64, RecordingError> {
        kv.require_parsed::<f64>(k).map_err(|source| RecordingError::Config {
            file: file.clone(),
            source,
        })
    };
    let calib = CameraCalibration {
        width: get("width")? as u32,
        height: get("height")? as u32,
        fx: get("fx")?,
        fy: get("fy")?,
        cx: get("cx")?,
        cy: get("cy")?,
        distortion: [get("k1")?, get("k2")?, get("p1")?, get("p2")?],
        extrinsic_rotation: UnitQuaternion::from_quaternion(Quaternion::new(
            get("qw")?,
            get("qx")?,
            get("qy")?,
            get("qz")?,
        )),
        extrinsic_translation: Vector3::new(get("tx")?, get("ty")?, get("tz")?),
    };
    if calib.fx <= 0.0 || calib.fy <= 0.0 {
        return Err(RecordingError::Invariant(format!("{file}: non-positive focal length")));
    }
    if calib.cx < 0.0 || calib.cx >= calib.width as f64 || calib.cy < 0.0 || calib.cy >= calib.height as f64 {
        return Err(RecordingError::Invariant(format!("{file}: principal point outside image")));
    }
    Ok(calib)
}

fn write_calibration(c: &CameraCalibration, path: &Path) -> Result<(), RecordingError> {
    let mut kv = KeyValueFile::new();
    kv.set("width", c.width);
    kv.set("height", c.height);
    kv.set("fx", format!("{:.17e}", c.fx));
    kv.set("fy", format!("{:.17e}", c.fy));
    kv.set("cx", format!("{:.17e}", c.cx));
    kv.set("cy", format!("{:.17e}", c.cy));
    for (name, v) in ["k1", "k2", "p1", "p2"].iter().zip(c.distortion.iter()) {
        kv.set(*name, format!("{v:.17e}"));
    }
    let q = c.extrinsic_rotation.quaternion();
    kv.set("qw", format!("{:.17e}", q.w));
    kv.set("qx", format!("{:.17e}", q.i));
    kv.set("qy", format!("{:.17e}", q.j));
    kv.set("qz", format!("{:.17e}", q.k));
    kv.set("tx", format!("{:.17e}", c.extrinsic_translation.x));
    kv.set("ty", format!("{:.17e}", c.extrinsic_translation.y));
    kv.set("tz", format!("{:.17e}", c.extrinsic_translation.z));
    kv.save(path).map_err(|source| RecordingError::Config {
        file: path.display().to_string(),
        source,
    })
}

// --- CSV streams -----------------------------------------------------------

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, RecordingError> {
    if !path.exists() {
        return Err(RecordingError::MissingFile(path.display().to_string()));
    }
    let file = std::fs::File::open(path).map_err(|e| io_err(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).from_reader(file))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, RecordingError> {
    let file = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    Ok(csv::WriterBuilder::new().from_writer(file))
}

fn field<T: std::str::FromStr>(
    rec: &csv::StringRecord,
    idx: usize,
    file: &Path,
    row: usize,
) -> Result<T, RecordingError> {
    let raw = rec.get(idx).ok_or_else(|| RecordingError::MalformedRecord {
        file: file.display().to_string(),
        row,
        message: format!("missing column {idx}"),
    })?;
    raw.parse::<T>().map_err(|_| RecordingError::MalformedRecord {
        file: file.display().to_string(),
        row,
        message: format!("cannot parse {raw:?} in column {idx}"),
    })
}

fn read_imu(path: &Path) -> Result<Vec<ImuSample>, RecordingError> {
    let mut out = Vec::new();
    let mut prev_t: Option<u64> = None;
    for (row, rec) in open_csv(path)?.records().enumerate() {
        let rec = rec.map_err(|e| RecordingError::MalformedRecord {
            file: path.display().to_string(),
            row,
            message: e.to_string(),
        })?;
        let t_ns: u64 = field(&rec, 0, path, row)?;
        if let Some(p) = prev_t {
            if t_ns < p {
                return Err(RecordingError::NonMonotonic {
                    file: path.display().to_string(),
                    offset: row,
                    prev: p,
                    next: t_ns,
                });
            }
        }
        prev_t = Some(t_ns);
        out.push(ImuSample {
            t_ns,
            angular_velocity: Vector3::new(
                field(&rec, 1, path, row)?,
                field(&rec, 2, path, row)?,
                field(&rec, 3, path, row)?,
            ),
            linear_acceleration: Vector3::new(
                field(&rec, 4, path, row)?,
                field(&rec, 5, path, row)?,
                field(&rec, 6, path, row)?,
            ),
            orientation: UnitQuaternion::from_quaternion(Quaternion::new(
                field(&rec, 7, path, row)?,
                field(&rec, 8, path, row)?,
                field(&rec, 9, path, row)?,
                field(&rec, 10, path, row)?,
            )),
            elapsed_since_pulse_ns: field(&rec, 11, path, row)?,
        });
    }
    Ok(out)
}

fn write_imu(samples: &[ImuSample], path: &Path) -> Result<(), RecordingError> {
    let mut w = csv_writer(path)?;
    let hdr = ["t_ns", "wx", "wy", "wz", "ax", "ay", "az", "qw", "qx", "qy", "qz", "elapsed_ns"];
    w.write_record(hdr).map_err(|e| csv_err(path, e))?;
    for s in samples {
        let q = s.orientation.quaternion();
        w.write_record(&[
            s.t_ns.to_string(),
            fmt_f64(s.angular_velocity.x),
            fmt_f64(s.angular_velocity.y),
            fmt_f64(s.angular_velocity.z),
            fmt_f64(s.linear_acceleration.x),
            fmt_f64(s.linear_acceleration.y),
            fmt_f64(s.linear_acceleration.z),
            fmt_f64(q.w),
            fmt_f64(q.i),
            fmt_f64(q.j),
            fmt_f64(q.k),
            s.elapsed_since_pulse_ns.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_gnss(path: &Path) -> Result<Vec<GnssFix>, RecordingError> {
    let mut out = Vec::new();
    for (row, rec) in open_csv(path)?.records().enumerate() {
        let rec = rec.map_err(|e| RecordingError::MalformedRecord {
            file: path.display().to_string(),
            row,
            message: e.to_string(),
        })?;
        let fix_raw: String = field(&rec, 4, path, row)?;
        let fix_quality = GnssFixQuality::parse(&fix_raw).ok_or_else(|| RecordingError::MalformedRecord {
            file: path.display().to_string(),
            row,
            message: format!("unknown fix quality {fix_raw:?}"),
        })?;
        out.push(GnssFix {
            t_ns: field(&rec, 0, path, row)?,
            latitude_deg: field(&rec, 1, path, row)?,
            longitude_deg: field(&rec, 2, path, row)?,
            altitude_msl_m: field(&rec, 3, path, row)?,
            fix_quality,
        });
    }
    Ok(out)
}

fn write_gnss(fixes: &[GnssFix], path: &Path) -> Result<(), RecordingError> {
    let mut w = csv_writer(path)?;
    w.write_record(["t_ns", "lat_deg", "lon_deg", "alt_m", "fix"]).map_err(|e| csv_err(path, e))?;
    for g in fixes {
        w.write_record(&[
            g.t_ns.to_string(),
            fmt_f64(g.latitude_deg),
            fmt_f64(g.longitude_deg),
            fmt_f64(g.altitude_msl_m),
            g.fix_quality.as_str().to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_range(path: &Path) -> Result<Vec<RangeSample>, RecordingError> {
    let mut out = Vec::new();
    for (row, rec) in open_csv(path)?.records().enumerate() {
        let rec = rec.map_err(|e| RecordingError::MalformedRecord {
            file: path.display().to_string(),
            row,
            message: e.to_string(),
        })?;
        out.push(RangeSample {
            t_host_ns: field(&rec, 0, path, row)?,
            range_m: field(&rec, 1, path, row)?,
        });
    }
    Ok(out)
}

fn write_range(samples: &[RangeSample], path: &Path) -> Result<(), RecordingError> {
    let mut w = csv_writer(path)?;
    w.write_record(["t_host_ns", "range_m"]).map_err(|e| csv_err(path, e))?;
    for s in samples {
        w.write_record(&[s.t_host_ns.to_string(), fmt_f64(s.range_m)])
            .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_triggers(path: &Path) -> Result<Vec<u64>, RecordingError> {
    let mut out = Vec::new();
    for (row, rec) in open_csv(path)?.records().enumerate() {
        let rec = rec.map_err(|e| RecordingError::MalformedRecord {
            file: path.display().to_string(),
            row,
            message: e.to_string(),
        })?;
        out.push(field(&rec, 0, path, row)?);
    }
    Ok(out)
}

fn write_triggers(times: &[u64], path: &Path) -> Result<(), RecordingError> {
    let mut w = csv_writer(path)?;
    w.write_record(["pulse_local_time_ns"]).map_err(|e| csv_err(path, e))?;
    for t in times {
        w.write_record(&[t.to_string()]).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_frame_index(path: &Path) -> Result<Vec<FrameRecord>, RecordingError> {
    let mut out = Vec::new();
    for (row, rec) in open_csv(path)?.records().enumerate() {
        let rec = rec.map_err(|e| RecordingError::MalformedRecord {
            file: path.display().to_string(),
            row,
            message: e.to_string(),
        })?;
        out.push(FrameRecord {
            pulse_index: field(&rec, 0, path, row)?,
            t_ns: field(&rec, 1, path, row)?,
            exposure_us: field(&rec, 2, path, row)?,
            image_path: format!("frames/{}", field::<String>(&rec, 3, path, row)?),
        });
    }
    Ok(out)
}

fn write_frame_index(frames: &[FrameRecord], path: &Path) -> Result<(), RecordingError> {
    let mut w = csv_writer(path)?;
    w.write_record(["pulse_index", "t_ns", "exposure_us", "filename"]).map_err(|e| csv_err(path, e))?;
    for f in frames {
        let filename = f
            .image_path
            .strip_prefix("frames/")
            .unwrap_or(&f.image_path)
            .to_string();
        w.write_record(&[
            f.pulse_index.to_string(),
            f.t_ns.to_string(),
            f.exposure_us.to_string(),
            filename,
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> RecordingError {
    RecordingError::MalformedRecord {
        file: path.display().to_string(),
        row: 0,
        message: e.to_string(),
    }
}

fn fmt_f64(v: f64) -> String {
    // Shortest representation that round-trips.
    let mut s = format!("{v}");
    if !s.contains('.') && !s.contains('e') && !s.contains("inf") && !s.contains("NaN") {
        s.push_str(".0");
    }
    s
}

/// Builds an empty skeleton recording rooted at `root` (streams empty, ideal
/// calibrations). Useful as a starting point for writers and tests.
pub fn empty_recording(root: &Path, calib_event: CameraCalibration, calib_rgb: CameraCalibration) -> Recording {
    Recording {
        meta: RecordingMeta::default(),
        manifest_extra: KeyValueFile::new(),
        events_path: root.join("events.bin"),
        frames: Vec::new(),
        imu: Vec::new(),
        gnss: Vec::new(),
        range: Vec::new(),
        triggers: Vec::new(),
        calib_event,
        calib_rgb,
        root: root.to_path_buf(),
    }
}
