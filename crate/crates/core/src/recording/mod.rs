//! Sensor data model and the on-disk recording container.
//!
//! A recording is a directory with a `manifest.txt`, a fixed-layout binary
//! event stream, CSV side streams, and per-frame image files:
//!
//! ```text
//! manifest.txt   calib_event.txt   calib_rgb.txt
//! events.bin     frames/index.csv  frames/*.png
//! imu.csv        gnss.csv          range.csv
//! triggers_<sensor>.csv
//! ```

mod events;
mod io;
mod types;

pub use events::{EventChunkReader, EventWriter, EVENT_RECORD_SIZE};
pub use io::{
    empty_recording, read_recording, validate_recording, write_recording, RecordingError,
    Violation,
};
pub use types::{
    CameraCalibration, Event, FrameRecord, GnssFix, GnssFixQuality, ImuSample, Polarity,
    RangeSample, Recording, RecordingMeta, TriggerObservations,
};
