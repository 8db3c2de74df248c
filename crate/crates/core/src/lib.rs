//! Offline pipeline turning synchronized aerial multi-sensor recordings
//! (events, RGB, IMU, GNSS, range) into fused, geotagged image sets and
//! planar orthomosaics.

pub mod config;
pub mod eval;
pub mod fusion;
pub mod gating;
pub mod ortho;
pub mod pipeline;
pub mod recon;
pub mod recording;
pub mod sim;
pub mod sync;
pub mod timeline;
pub mod utm;

pub use fusion::FusionMethod;
pub use recon::ReconConfig;
pub use recording::{Event, Polarity, Recording};
pub use timeline::ValidityTimeline;
pub use utm::UtmPoint;
