//! Stage orchestration: sync → gating → keyframes → reconstruct → fuse →
//! export → (optional) planar orthoproject.
//!
//! Every stage reads its inputs from the output directory and writes its own
//! artifacts back there, so running `run_pipeline` is exactly equivalent to
//! chaining the individual stages. Stage image outputs use the same
//! `index.csv` layout as recording frame directories, keeping every
//! intermediate inspectable with the same tooling.

use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::UnitQuaternion;
use thiserror::Error;

use crate::config::{ConfigError, KeyValueFile};
use crate::fusion::{self, FusionMethod};
use crate::gating;
use crate::ortho::{self, CameraPose, OrthoInput};
use crate::recon::{KeyframeReconstructor, ReconConfig};
use crate::recording::{self, FrameRecord, Recording};
use crate::sync::{self, PulsePattern, SyncSolution};
use crate::timeline::ValidityTimeline;
use crate::utm::{latlon_to_utm_zone, zone_for};

/// Marker file left in the output directory while a run is in progress;
/// removed on success, so its presence flags partial outputs.
pub const PARTIAL_MARKER: &str = ".partial";
/// Line-delimited structured stage log.
pub const LOG_FILE: &str = "pipeline.log";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no valid data")]
    NoValidData,
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("missing artifact {0}: run the {1} stage first")]
    MissingArtifact(PathBuf, &'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn stage_err<E: std::error::Error + Send + Sync + 'static>(
    stage: &'static str,
) -> impl FnOnce(E) -> PipelineError {
    move |source| PipelineError::Stage {
        stage,
        source: Box::new(source),
    }
}

/// All pipeline knobs with their defaults, parsed from the shared
/// `key = value` config format. Unknown keys are rejected.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub input: PathBuf,
    pub output: PathBuf,
    pub gate_omega_max_rad_s: f64,
    pub gate_hold_ms: f64,
    pub gate_min_agl_m: f64,
    pub keyframe_spacing_m: f64,
    pub recon: ReconConfig,
    pub fusion_method: FusionMethod,
    pub ortho_enable: bool,
    pub ortho_resolution_m_per_px: f64,
    /// Pattern overrides; when absent the recording manifest is authoritative.
    pub sync_pattern: Option<String>,
    pub sync_period_ns: Option<u64>,
    pub sync_slow_ratio: Option<u32>,
}

/// Every key the pipeline config accepts.
pub const CONFIG_KEYS: [&str; 18] = [
    "input",
    "output",
    "sync.pattern",
    "sync.period_ns",
    "sync.slow_ratio",
    "gate.omega_max",
    "gate.hold_ms",
    "gate.min_agl",
    "keyframe.spacing_m",
    "recon.contrast_on",
    "recon.contrast_off",
    "recon.tau_s",
    "recon.window_ns",
    "recon.tone_lo_pct",
    "recon.tone_hi_pct",
    "fusion.method",
    "ortho.enable",
    "ortho.resolution",
];

impl PipelineConfig {
    pub fn from_kv(kv: &KeyValueFile) -> Result<Self, PipelineError> {
        kv.check_known(&CONFIG_KEYS, &[])?;
        let recon_defaults = ReconConfig::default();
        let method = match kv.raw("fusion.method") {
            Some(s) => FusionMethod::parse(s).map_err(|_| ConfigError::BadValue {
                key: "fusion.method".to_string(),
                value: s.to_string(),
                ty: "fusion method",
            })?,
            None => FusionMethod::Brovey,
        };
        Ok(Self {
            input: PathBuf::from(kv.require("input")?),
            output: PathBuf::from(kv.require("output")?),
            gate_omega_max_rad_s: kv.get_or("gate.omega_max", gating::DEFAULT_OMEGA_MAX_RAD_S)?,
            gate_hold_ms: kv.get_or("gate.hold_ms", gating::DEFAULT_HOLD_MS)?,
            gate_min_agl_m: kv.get_or("gate.min_agl", gating::DEFAULT_MIN_AGL_M)?,
            keyframe_spacing_m: kv
                .get_or("keyframe.spacing_m", gating::DEFAULT_KEYFRAME_SPACING_M)?,
            recon: ReconConfig {
                contrast_on: kv.get_or("recon.contrast_on", recon_defaults.contrast_on)?,
                contrast_off: kv.get_or("recon.contrast_off", recon_defaults.contrast_off)?,
                tau_s: kv.get_or("recon.tau_s", recon_defaults.tau_s)?,
                window_ns: kv.get_or("recon.window_ns", recon_defaults.window_ns)?,
                tone_lo_pct: kv.get_or("recon.tone_lo_pct", recon_defaults.tone_lo_pct)?,
                tone_hi_pct: kv.get_or("recon.tone_hi_pct", recon_defaults.tone_hi_pct)?,
            },
            fusion_method: method,
            ortho_enable: kv.get_or("ortho.enable", true)?,
            ortho_resolution_m_per_px: kv.get_or("ortho.resolution", 0.05)?,
            sync_pattern: kv.get("sync.pattern")?,
            sync_period_ns: kv.get("sync.period_ns")?,
            sync_slow_ratio: kv.get("sync.slow_ratio")?,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        Ok(Self::from_kv(&KeyValueFile::load(path)?)?)
    }

    /// The pulse pattern for a recording: manifest values overridden by any
    /// `sync.*` config keys.
    pub fn pattern_for(&self, rec: &Recording) -> Result<PulsePattern, sync::SyncError> {
        let mut kv = rec.manifest_extra.clone();
        if let Some(spec) = &self.sync_pattern {
            kv.set("sync.pattern", spec);
        }
        if let Some(p) = self.sync_period_ns {
            kv.set("sync.period_ns", p);
        }
        if let Some(r) = self.sync_slow_ratio {
            kv.set("sync.slow_ratio", r);
        }
        PulsePattern::from_manifest(&kv)
    }

    pub fn synced_dir(&self) -> PathBuf {
        self.output.join("synced")
    }

    pub fn timeline_path(&self) -> PathBuf {
        self.output.join("timeline.csv")
    }

    pub fn keyframes_path(&self) -> PathBuf {
        self.output.join("keyframes.csv")
    }

    pub fn recon_dir(&self) -> PathBuf {
        self.output.join("recon")
    }

    pub fn fused_dir(&self) -> PathBuf {
        self.output.join("fused")
    }

    pub fn export_dir(&self) -> PathBuf {
        self.output.join("export")
    }

    pub fn ortho_path(&self) -> PathBuf {
        self.output.join("ortho.png")
    }
}

/// Appends `stage=... key=value` records to the pipeline log and echoes them
/// to standard error.
pub struct StageLogger {
    file: Option<std::fs::File>,
    echo: bool,
}

impl StageLogger {
    /// Logger writing into `<output>/pipeline.log`, creating the directory.
    pub fn for_output(output: &Path, echo: bool) -> std::io::Result<Self> {
        std::fs::create_dir_all(output)?;
        let file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(output.join(LOG_FILE))?;
        Ok(Self {
            file: Some(file),
            echo,
        })
    }

    /// Logger that discards everything; for library callers running stages as
    /// plain functions.
    pub fn sink() -> Self {
        Self {
            file: None,
            echo: false,
        }
    }

    pub fn log(&mut self, stage: &str, fields: &[(&str, String)]) {
        let mut line = format!("stage={stage}");
        for (k, v) in fields {
            line.push_str(&format!(" {k}={v}"));
        }
        if let Some(f) = &mut self.file {
            let _ = writeln!(f, "{line}");
        }
        if self.echo {
            eprintln!("{line}");
        }
    }
}

/// Writes `timeline.csv`: `start_ns,end_ns`, one valid interval per row.
pub fn write_timeline(path: &Path, t: &ValidityTimeline) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "start_ns,end_ns")?;
    for &(s, e) in t.intervals() {
        writeln!(f, "{s},{e}")?;
    }
    Ok(())
}

pub fn read_timeline(path: &Path) -> Result<ValidityTimeline, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path.to_path_buf(), "gate"));
    }
    let text = std::fs::read_to_string(path)?;
    let mut intervals = Vec::new();
    for line in text.lines().skip(1) {
        let Some((s, e)) = line.split_once(',') else {
            continue;
        };
        let s = s.trim().parse::<u64>().map_err(|_| {
            PipelineError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad timeline row {line:?}"),
            ))
        })?;
        let e = e.trim().parse::<u64>().map_err(|_| {
            PipelineError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad timeline row {line:?}"),
            ))
        })?;
        intervals.push((s, e));
    }
    Ok(ValidityTimeline::from_intervals(intervals))
}

/// Writes `keyframes.csv`: `t_ns`, one keyframe time per row.
pub fn write_keyframes(path: &Path, keyframes: &[u64]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "t_ns")?;
    for t in keyframes {
        writeln!(f, "{t}")?;
    }
    Ok(())
}

pub fn read_keyframes(path: &Path) -> Result<Vec<u64>, PipelineError> {
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(
            path.to_path_buf(),
            "keyframes",
        ));
    }
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let t = line.trim().parse::<u64>().map_err(|_| {
            PipelineError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad keyframe row {line:?}"),
            ))
        })?;
        out.push(t);
    }
    Ok(out)
}

/// Writes an image-set index in the recording frame layout
/// (`pulse_index,t_ns,exposure_us,filename`); stage outputs reuse the
/// keyframe ordinal as pulse index and a zero exposure.
fn write_image_index(dir: &Path, records: &[FrameRecord]) -> std::io::Result<()> {
    let mut f = std::fs::File::create(dir.join("index.csv"))?;
    writeln!(f, "pulse_index,t_ns,exposure_us,filename")?;
    for r in records {
        writeln!(f, "{},{},{},{}", r.pulse_index, r.t_ns, r.exposure_us, r.image_path)?;
    }
    Ok(())
}

fn read_image_index(dir: &Path, producer: &'static str) -> Result<Vec<FrameRecord>, PipelineError> {
    let path = dir.join("index.csv");
    if !path.exists() {
        return Err(PipelineError::MissingArtifact(path, producer));
    }
    let text = std::fs::read_to_string(&path)?;
    let mut out = Vec::new();
    for line in text.lines().skip(1) {
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 4 {
            return Err(PipelineError::Io(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("bad index row {line:?}"),
            )));
        }
        let parse_u64 = |s: &str| {
            s.trim().parse::<u64>().map_err(|_| {
                PipelineError::Io(std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("bad index row {line:?}"),
                ))
            })
        };
        out.push(FrameRecord {
            pulse_index: parse_u64(parts[0])?,
            t_ns: parse_u64(parts[1])?,
            exposure_us: parse_u64(parts[2])? as u32,
            image_path: parts[3].trim().to_string(),
        });
    }
    Ok(out)
}

fn open_synced(cfg: &PipelineConfig) -> Result<Recording, PipelineError> {
    let dir = cfg.synced_dir();
    if !dir.join("manifest.txt").exists() {
        return Err(PipelineError::MissingArtifact(dir, "sync"));
    }
    recording::read_recording(&dir).map_err(stage_err("sync"))
}

/// Synchronizes the input recording onto the global clock; writes
/// `<output>/synced/`.
pub fn stage_sync(
    cfg: &PipelineConfig,
    log: &mut StageLogger,
) -> Result<(Recording, SyncSolution), PipelineError> {
    let rec = recording::read_recording(&cfg.input).map_err(stage_err("sync"))?;
    let pattern = cfg.pattern_for(&rec).map_err(stage_err("sync"))?;
    let (synced, solution) =
        sync::synchronize_recording(&rec, &pattern, &cfg.synced_dir()).map_err(stage_err("sync"))?;
    let mut fields = vec![(
        "events",
        synced.event_count().map_err(PipelineError::Io)?.to_string(),
    )];
    for (sensor, s) in &solution.sensors {
        fields.push((
            match sensor.as_str() {
                "event" => "rms_event_ns",
                "rgb" => "rms_rgb_ns",
                "imu" => "rms_imu_ns",
                "gnss" => "rms_gnss_ns",
                _ => "rms_other_ns",
            },
            format!("{:.0}", s.model.rms_residual_ns),
        ));
    }
    log.log("sync", &fields);
    Ok((synced, solution))
}

/// Intersects the rotation and altitude gates; writes `timeline.csv`.
/// An empty result is the "no valid data" halt.
pub fn stage_gate(
    cfg: &PipelineConfig,
    log: &mut StageLogger,
) -> Result<ValidityTimeline, PipelineError> {
    let rec = open_synced(cfg)?;
    let rotation = gating::rotation_gate(&rec.imu, cfg.gate_omega_max_rad_s, cfg.gate_hold_ms)
        .map_err(stage_err("gate"))?;
    let altitude =
        gating::altitude_gate(&rec.range, cfg.gate_min_agl_m).map_err(stage_err("gate"))?;
    let timeline = rotation.intersect(&altitude);
    let span_ns = rec.imu.last().map(|s| s.t_ns).unwrap_or(0);
    let dropped = ValidityTimeline::from_intervals(vec![(0, span_ns)])
        .intersect(&timeline.complement(0, span_ns));
    log.log(
        "gate",
        &[
            ("valid_intervals", timeline.intervals().len().to_string()),
            ("valid_s", format!("{:.2}", timeline.total_ns() as f64 * 1e-9)),
            ("dropped_intervals", dropped.intervals().len().to_string()),
            ("dropped_s", format!("{:.2}", dropped.total_ns() as f64 * 1e-9)),
        ],
    );
    write_timeline(&cfg.timeline_path(), &timeline)?;
    if timeline.is_empty() {
        return Err(PipelineError::NoValidData);
    }
    Ok(timeline)
}

/// Selects spaced keyframes inside the valid timeline; writes `keyframes.csv`.
pub fn stage_keyframes(
    cfg: &PipelineConfig,
    log: &mut StageLogger,
) -> Result<Vec<u64>, PipelineError> {
    let rec = open_synced(cfg)?;
    let timeline = read_timeline(&cfg.timeline_path())?;
    let keyframes = gating::select_keyframes(&rec.gnss, &timeline, cfg.keyframe_spacing_m)
        .map_err(stage_err("keyframes"))?;
    log.log("keyframes", &[("count", keyframes.len().to_string())]);
    write_keyframes(&cfg.keyframes_path(), &keyframes)?;
    Ok(keyframes)
}

/// Reconstructs a grayscale frame at every keyframe; writes `recon/`.
pub fn stage_reconstruct(
    cfg: &PipelineConfig,
    log: &mut StageLogger,
) -> Result<Vec<FrameRecord>, PipelineError> {
    let rec = open_synced(cfg)?;
    let keyframes = read_keyframes(&cfg.keyframes_path())?;
    let (w, h) = (rec.calib_event.width, rec.calib_event.height);
    let mut recon = KeyframeReconstructor::new(w, h, keyframes.clone(), cfg.recon)
        .map_err(stage_err("reconstruct"))?;
    let mut events_in: u64 = 0;
    for chunk in rec.events(1 << 16).map_err(PipelineError::Io)? {
        let chunk = chunk.map_err(PipelineError::Io)?;
        events_in += chunk.len() as u64;
        recon.push_events(&chunk).map_err(stage_err("reconstruct"))?;
    }
    let frames = recon.finish().map_err(stage_err("reconstruct"))?;

    let dir = cfg.recon_dir();
    std::fs::create_dir_all(&dir)?;
    let mut records = Vec::with_capacity(frames.len());
    let mut neutral = 0u64;
    for (i, f) in frames.iter().enumerate() {
        if f.neutral {
            neutral += 1;
        }
        let name = format!("kf_{i:05}.png");
        let img = image::GrayImage::from_raw(w, h, f.pixels.clone())
            .expect("reconstruction buffer matches calibration size");
        img.save(dir.join(&name))
            .map_err(|e| stage_err("reconstruct")(std::io::Error::new(
                std::io::ErrorKind::Other,
                e.to_string(),
            )))?;
        records.push(FrameRecord {
            pulse_index: i as u64,
            t_ns: f.t_ns,
            exposure_us: 0,
            image_path: name,
        });
    }
    write_image_index(&dir, &records)?;
    log.log(
        "reconstruct",
        &[
            ("events_in", events_in.to_string()),
            ("frames", records.len().to_string()),
            ("neutral_frames", neutral.to_string()),
        ],
    );
    Ok(records)
}

fn nearest_frame<'a>(frames: &'a [FrameRecord], t_ns: u64) -> Option<&'a FrameRecord> {
    frames.iter().min_by_key(|f| f.t_ns.abs_diff(t_ns))
}

/// Remaps the nearest RGB frame into event-camera geometry at every keyframe
/// and fuses it with the reconstruction; writes `fused/`.
pub fn stage_fuse(
    cfg: &PipelineConfig,
    log: &mut StageLogger,
) -> Result<Vec<FrameRecord>, PipelineError> {
    let rec = open_synced(cfg)?;
    let recon_frames = read_image_index(&cfg.recon_dir(), "reconstruct")?;
    if rec.frames.is_empty() {
        return Err(PipelineError::Stage {
            stage: "fuse",
            source: "recording has no RGB frames".into(),
        });
    }
    let table =
        fusion::compute_remap(&rec.calib_event, &rec.calib_rgb).map_err(stage_err("fuse"))?;
    let dir = cfg.fused_dir();
    std::fs::create_dir_all(&dir)?;
    let (w, h) = (rec.calib_event.width, rec.calib_event.height);
    let mut records = Vec::with_capacity(recon_frames.len());
    for (i, kf) in recon_frames.iter().enumerate() {
        let rgb_frame = nearest_frame(&rec.frames, kf.t_ns).unwrap();
        let rgb = image::open(rec.root.join(&rgb_frame.image_path))
            .map_err(|e| stage_err("fuse")(std::io::Error::new(
                std::io::ErrorKind::Other,
                e.to_string(),
            )))?
            .to_rgb8();
        let remapped =
            fusion::remap_image(&rgb, &table, &rec.calib_rgb).map_err(stage_err("fuse"))?;
        let pan = image::open(cfg.recon_dir().join(&kf.image_path))
            .map_err(|e| stage_err("fuse")(std::io::Error::new(
                std::io::ErrorKind::Other,
                e.to_string(),
            )))?
            .to_luma8();
        let fused = fusion::pansharpen(&remapped, pan.as_raw(), w, h, cfg.fusion_method)
            .map_err(stage_err("fuse"))?;
        let name = format!("kf_{i:05}.png");
        fused.save(dir.join(&name)).map_err(|e| {
            stage_err("fuse")(std::io::Error::new(std::io::ErrorKind::Other, e.to_string()))
        })?;
        records.push(FrameRecord {
            pulse_index: i as u64,
            t_ns: kf.t_ns,
            exposure_us: 0,
            image_path: name,
        });
    }
    write_image_index(&dir, &records)?;
    log.log(
        "fuse",
        &[
            ("method", cfg.fusion_method.as_str().to_string()),
            ("frames", records.len().to_string()),
        ],
    );
    Ok(records)
}

/// Copies fused keyframes with interpolated GNSS positions into `export/`
/// with a `geo.csv`.
pub fn stage_export(cfg: &PipelineConfig, log: &mut StageLogger) -> Result<(), PipelineError> {
    let rec = open_synced(cfg)?;
    let fused = read_image_index(&cfg.fused_dir(), "fuse")?;
    let keyframes: Vec<(u64, PathBuf)> = fused
        .iter()
        .map(|f| (f.t_ns, cfg.fused_dir().join(&f.image_path)))
        .collect();
    let rows = ortho::export_geotagged(&keyframes, &rec.gnss, &cfg.export_dir())
        .map_err(stage_err("export"))?;
    log.log("export", &[("images", rows.len().to_string())]);
    Ok(())
}

/// Camera pose at a keyframe: interpolated GNSS position and the nearest IMU
/// attitude composed with the camera-to-rig mount.
fn keyframe_pose(
    rec: &Recording,
    t_ns: u64,
    zone: u8,
) -> Result<CameraPose, ortho::OrthoError> {
    let (lat, lon, alt) = ortho::interpolate_gnss(&rec.gnss, t_ns)?;
    let position = latlon_to_utm_zone(lat, lon, alt, zone)?;
    let imu = rec
        .imu
        .iter()
        .min_by_key(|s| s.t_ns.abs_diff(t_ns))
        .map(|s| s.orientation)
        .unwrap_or_else(UnitQuaternion::identity);
    Ok(CameraPose {
        position,
        orientation: imu * rec.calib_event.extrinsic_rotation,
    })
}

/// Composes the fused keyframes into a flat-ground orthomosaic; writes
/// `ortho.png`, its world file, and `odm_params.txt`.
pub fn stage_orthoproject(
    cfg: &PipelineConfig,
    log: &mut StageLogger,
) -> Result<(), PipelineError> {
    let rec = open_synced(cfg)?;
    let fused = read_image_index(&cfg.fused_dir(), "fuse")?;
    let ground_alt =
        ortho::ground_altitude(&rec.gnss, &rec.range).map_err(stage_err("orthoproject"))?;
    let first = rec.gnss.first().ok_or_else(|| PipelineError::Stage {
        stage: "orthoproject",
        source: "recording has no GNSS fixes".into(),
    })?;
    let zone = zone_for(first.latitude_deg, first.longitude_deg);
    let mut inputs = Vec::with_capacity(fused.len());
    for f in &fused {
        let image = image::open(cfg.fused_dir().join(&f.image_path))
            .map_err(|e| stage_err("orthoproject")(std::io::Error::new(
                std::io::ErrorKind::Other,
                e.to_string(),
            )))?
            .to_rgb8();
        let pose = keyframe_pose(&rec, f.t_ns, zone).map_err(stage_err("orthoproject"))?;
        inputs.push(OrthoInput {
            image,
            calib: rec.calib_event.clone(),
            pose,
            t_ns: f.t_ns,
            label: f.image_path.clone(),
        });
    }
    let raster = ortho::planar_orthoproject(&inputs, ground_alt, cfg.ortho_resolution_m_per_px)
        .map_err(stage_err("orthoproject"))?;
    let (_, covered) = ortho::coverage_mask(&raster);
    ortho::save_orthomosaic(&raster, &cfg.ortho_path()).map_err(stage_err("orthoproject"))?;
    ortho::write_odm_params(&cfg.output.join("odm_params.txt"))
        .map_err(stage_err("orthoproject"))?;
    log.log(
        "orthoproject",
        &[
            ("images", inputs.len().to_string()),
            ("ground_alt_m", format!("{ground_alt:.2}")),
            ("raster", format!("{}x{}", raster.width, raster.height)),
            ("covered_px", covered.to_string()),
        ],
    );
    Ok(())
}

/// Runs every stage in order. Partial outputs are flagged by a `.partial`
/// marker that is removed only on success.
pub fn run_pipeline(cfg: &PipelineConfig, log: &mut StageLogger) -> Result<(), PipelineError> {
    std::fs::create_dir_all(&cfg.output)?;
    let marker = cfg.output.join(PARTIAL_MARKER);
    std::fs::write(&marker, "pipeline in progress\n")?;
    stage_sync(cfg, log)?;
    stage_gate(cfg, log)?;
    stage_keyframes(cfg, log)?;
    stage_reconstruct(cfg, log)?;
    stage_fuse(cfg, log)?;
    stage_export(cfg, log)?;
    if cfg.ortho_enable {
        stage_orthoproject(cfg, log)?;
    }
    std::fs::remove_file(&marker)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let kv = KeyValueFile::parse("input = /a\noutput = /b\ngate.omega_max = 0.5\n").unwrap();
        let cfg = PipelineConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.gate_omega_max_rad_s, 0.5);
        assert_eq!(cfg.gate_min_agl_m, gating::DEFAULT_MIN_AGL_M);
        assert_eq!(cfg.keyframe_spacing_m, gating::DEFAULT_KEYFRAME_SPACING_M);
        assert_eq!(cfg.fusion_method, FusionMethod::Brovey);
        assert!(cfg.ortho_enable);
    }

    #[test]
    fn unknown_key_rejected() {
        let kv = KeyValueFile::parse("input = /a\noutput = /b\ngate.omga_max = 0.5\n").unwrap();
        match PipelineConfig::from_kv(&kv) {
            Err(PipelineError::Config(ConfigError::UnknownKey(k))) => {
                assert_eq!(k, "gate.omga_max")
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn missing_required_key_rejected() {
        let kv = KeyValueFile::parse("output = /b\n").unwrap();
        assert!(matches!(
            PipelineConfig::from_kv(&kv),
            Err(PipelineError::Config(ConfigError::MissingKey(_)))
        ));
    }

    #[test]
    fn timeline_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("timeline.csv");
        let t = ValidityTimeline::from_intervals(vec![(10, 20), (40, 90)]);
        write_timeline(&path, &t).unwrap();
        assert_eq!(read_timeline(&path).unwrap(), t);
    }

    #[test]
    fn keyframes_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("keyframes.csv");
        let kf = vec![5u64, 1_000_000_007, 2_000_000_014];
        write_keyframes(&path, &kf).unwrap();
        assert_eq!(read_keyframes(&path).unwrap(), kf);
    }

    #[test]
    fn image_index_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            FrameRecord {
                pulse_index: 0,
                t_ns: 123,
                exposure_us: 0,
                image_path: "kf_00000.png".into(),
            },
            FrameRecord {
                pulse_index: 1,
                t_ns: 456,
                exposure_us: 0,
                image_path: "kf_00001.png".into(),
            },
        ];
        write_image_index(dir.path(), &records).unwrap();
        assert_eq!(read_image_index(dir.path(), "reconstruct").unwrap(), records);
    }

    #[test]
    fn missing_artifact_names_producer() {
        let dir = tempfile::tempdir().unwrap();
        match read_keyframes(&dir.path().join("keyframes.csv")) {
            Err(PipelineError::MissingArtifact(_, stage)) => assert_eq!(stage, "keyframes"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
