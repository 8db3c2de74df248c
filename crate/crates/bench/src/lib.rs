//! Shared fixtures for the criterion benchmarks.

use evortho_core::recording::{Event, Polarity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Time-sorted synthetic event stream spread uniformly over `duration_ns`.
pub fn synthetic_events(count: usize, width: u16, height: u16, duration_ns: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let step = duration_ns / count as u64;
    (0..count)
        .map(|i| Event {
            t_ns: i as u64 * step + rng.gen_range(0..step.max(1)),
            x: rng.gen_range(0..width),
            y: rng.gen_range(0..height),
            polarity: if rng.gen_bool(0.5) {
                Polarity::On
            } else {
                Polarity::Off
            },
        })
        .collect()
}

/// Keyframe times spaced `spacing_ns` apart across `duration_ns`.
pub fn keyframe_times(duration_ns: u64, spacing_ns: u64) -> Vec<u64> {
    (1..=duration_ns / spacing_ns).map(|i| i * spacing_ns).collect()
}
