//! Event-to-frame reconstruction with a per-pixel leaky log-intensity
//! integrator, sampled over fixed event windows at keyframe times.

use thiserror::Error;

use crate::recording::{Event, Polarity};

#[derive(Debug, Error)]
pub enum ReconError {
    #[error("event at ({x},{y}) outside {width}x{height} sensor")]
    OutOfBounds {
        x: u16,
        y: u16,
        width: u32,
        height: u32,
    },
    #[error("time regression at pixel ({x},{y}): {t_ns} before {t_last_ns}")]
    TimeRegression {
        x: u16,
        y: u16,
        t_ns: u64,
        t_last_ns: u64,
    },
    #[error("event stream not sorted: {t_ns} after {prev_ns}")]
    Unsorted { t_ns: u64, prev_ns: u64 },
    #[error("invalid config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconConfig {
    /// Log-intensity step per ON event.
    pub contrast_on: f64,
    /// Log-intensity step per OFF event.
    pub contrast_off: f64,
    /// Leak time constant, seconds.
    pub tau_s: f64,
    /// Event accumulation window before each keyframe, ns.
    pub window_ns: u64,
    /// Robust normalization percentiles for tone mapping.
    pub tone_lo_pct: f64,
    pub tone_hi_pct: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            contrast_on: 0.1,
            contrast_off: 0.1,
            tau_s: 0.1,
            window_ns: 5_000_000,
            tone_lo_pct: 1.0,
            tone_hi_pct: 99.0,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<(), ReconError> {
        if self.contrast_on <= 0.0 || self.contrast_off <= 0.0 {
            return Err(ReconError::BadConfig("contrasts must be positive".into()));
        }
        if self.tau_s <= 0.0 {
            return Err(ReconError::BadConfig("tau must be positive".into()));
        }
        if !(0.0 <= self.tone_lo_pct && self.tone_lo_pct < self.tone_hi_pct && self.tone_hi_pct <= 100.0)
        {
            return Err(ReconError::BadConfig("percentiles must satisfy 0 <= lo < hi <= 100".into()));
        }
        Ok(())
    }
}

/// Per-pixel leaky accumulator. Decay is applied lazily at update time and
/// globally when a frame is sampled, so the cost is O(events + pixels/frame).
#[derive(Debug, Clone)]
pub struct ReconState {
    width: u32,
    height: u32,
    log_intensity: Vec<f64>,
    t_last_ns: Vec<u64>,
}

impl ReconState {
    pub fn new(width: u32, height: u32) -> Self {
        let n = (width * height) as usize;
        Self {
            width,
            height,
            log_intensity: vec![0.0; n],
            t_last_ns: vec![0; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    fn index(&self, x: u16, y: u16) -> usize {
        y as usize * self.width as usize + x as usize
    }

    /// Applies one event: decays the pixel to the event time, then steps the
    /// log intensity by the polarity's contrast.
    #[inline]
    pub fn update(&mut self, e: &Event, cfg: &ReconConfig) -> Result<(), ReconError> {
        if e.x as u32 >= self.width || e.y as u32 >= self.height {
            return Err(ReconError::OutOfBounds {
                x: e.x,
                y: e.y,
                width: self.width,
                height: self.height,
            });
        }
        let idx = self.index(e.x, e.y);
        let t_last = self.t_last_ns[idx];
        if e.t_ns < t_last {
            return Err(ReconError::TimeRegression {
                x: e.x,
                y: e.y,
                t_ns: e.t_ns,
                t_last_ns: t_last,
            });
        }
        let dt_s = (e.t_ns - t_last) as f64 * 1e-9;
        let decay = (-dt_s / cfg.tau_s).exp();
        let step = match e.polarity {
            Polarity::On => cfg.contrast_on,
            Polarity::Off => -cfg.contrast_off,
        };
        self.log_intensity[idx] = self.log_intensity[idx] * decay + step;
        self.t_last_ns[idx] = e.t_ns;
        Ok(())
    }

    /// Decays every pixel to `t_ns` and returns the log-intensity raster.
    /// The state advances: subsequent updates decay from `t_ns`.
    pub fn sample_at(&mut self, t_ns: u64, cfg: &ReconConfig) -> Vec<f64> {
        for idx in 0..self.log_intensity.len() {
            let t_last = self.t_last_ns[idx];
            if t_ns > t_last {
                let dt_s = (t_ns - t_last) as f64 * 1e-9;
                self.log_intensity[idx] *= (-dt_s / cfg.tau_s).exp();
                self.t_last_ns[idx] = t_ns;
            }
        }
        self.log_intensity.clone()
    }
}

/// Applies a time-ordered window of events ending at `t_frame_ns`, then
/// decays every pixel to the frame time and returns the raster.
pub fn synthesize_frame(
    state: &mut ReconState,
    events_in_window: &[Event],
    t_frame_ns: u64,
    cfg: &ReconConfig,
) -> Result<Vec<f64>, ReconError> {
    let mut prev: Option<u64> = None;
    for e in events_in_window {
        if let Some(p) = prev {
            if e.t_ns < p {
                return Err(ReconError::Unsorted {
                    t_ns: e.t_ns,
                    prev_ns: p,
                });
            }
        }
        prev = Some(e.t_ns);
        state.update(e, cfg)?;
    }
    Ok(state.sample_at(t_frame_ns, cfg))
}

/// Value below which `p` percent of the raster lies (linear interpolation
/// between order statistics).
fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = p / 100.0 * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Affine tone map: the lo percentile goes to 0, the hi percentile to 255,
/// clamped. A constant raster maps to neutral gray 128.
pub fn tone_map(raster: &[f64], cfg: &ReconConfig) -> Vec<u8> {
    let mut sorted = raster.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = percentile(&sorted, cfg.tone_lo_pct);
    let hi = percentile(&sorted, cfg.tone_hi_pct);
    if hi - lo <= f64::EPSILON {
        return vec![128u8; raster.len()];
    }
    let scale = 255.0 / (hi - lo);
    raster
        .iter()
        .map(|&v| ((v - lo) * scale).round().clamp(0.0, 255.0) as u8)
        .collect()
}

/// One tone-mapped frame per keyframe, windowed reconstruction.
#[derive(Debug, Clone)]
pub struct ReconFrame {
    pub t_ns: u64,
    pub pixels: Vec<u8>,
    /// True when no event fell in the frame's window and the state carried no
    /// information (neutral frame).
    pub neutral: bool,
}

/// Streaming reconstruction at keyframe times.
///
/// Events are pushed in arbitrary chunk sizes; output frames are bit-identical
/// regardless of chunking. Events outside every keyframe window are dropped
/// without touching the state.
pub struct KeyframeReconstructor {
    state: ReconState,
    cfg: ReconConfig,
    keyframes: Vec<u64>,
    next_keyframe: usize,
    frames: Vec<ReconFrame>,
    any_event_applied: bool,
    prev_t: Option<u64>,
}

impl KeyframeReconstructor {
    pub fn new(
        width: u32,
        height: u32,
        keyframes: Vec<u64>,
        cfg: ReconConfig,
    ) -> Result<Self, ReconError> {
        cfg.validate()?;
        if keyframes.windows(2).any(|w| w[1] < w[0]) {
            return Err(ReconError::BadConfig("keyframe times must be sorted".into()));
        }
        Ok(Self {
            state: ReconState::new(width, height),
            cfg,
            keyframes,
            next_keyframe: 0,
            frames: Vec::new(),
            any_event_applied: false,
            prev_t: None,
        })
    }

    fn emit_frames_before(&mut self, t_ns: u64) -> Result<(), ReconError> {
        while self.next_keyframe < self.keyframes.len() && self.keyframes[self.next_keyframe] <= t_ns
        {
            let kf = self.keyframes[self.next_keyframe];
            let raster = self.state.sample_at(kf, &self.cfg);
            let neutral = !self.any_event_applied;
            self.frames.push(ReconFrame {
                t_ns: kf,
                pixels: tone_map(&raster, &self.cfg),
                neutral,
            });
            self.next_keyframe += 1;
        }
        Ok(())
    }

    pub fn push_events(&mut self, events: &[Event]) -> Result<(), ReconError> {
        for e in events {
            if let Some(p) = self.prev_t {
                if e.t_ns < p {
                    return Err(ReconError::Unsorted {
                        t_ns: e.t_ns,
                        prev_ns: p,
                    });
                }
            }
            self.prev_t = Some(e.t_ns);
            self.emit_frames_before(e.t_ns)?;
            // Only events inside the pending keyframe's window update the state.
            if let Some(&kf) = self.keyframes.get(self.next_keyframe) {
                let window_start = kf.saturating_sub(self.cfg.window_ns);
                if e.t_ns >= window_start && e.t_ns < kf {
                    self.state.update(e, &self.cfg)?;
                    self.any_event_applied = true;
                }
            }
        }
        Ok(())
    }

    /// Emits any keyframes past the final event and returns all frames.
    pub fn finish(mut self) -> Result<Vec<ReconFrame>, ReconError> {
        self.emit_frames_before(u64::MAX)?;
        Ok(self.frames)
    }
}

/// Convenience wrapper: reconstruct from an in-memory sorted event slice.
pub fn reconstruct_at_keyframes(
    events: &[Event],
    keyframes: &[u64],
    width: u32,
    height: u32,
    cfg: &ReconConfig,
) -> Result<Vec<ReconFrame>, ReconError> {
    let mut r = KeyframeReconstructor::new(width, height, keyframes.to_vec(), *cfg)?;
    r.push_events(events)?;
    r.finish()
}
