//! Detection systems wired onto the fold harness: the matched-filter bank,
//! the neural-network frame classifiers, and the sinusoid-feature system
//! with its post-processing schemes.

pub mod combined_sys;
pub mod nn_sys;
pub mod nonmodel_sys;

pub use combined_sys::{CombinedFrozen, CombinedSystem, PostScheme};
pub use nn_sys::{NnFrozen, NnInput, NnSystem};
pub use nonmodel_sys::{NonModelSystem, NonModelThresholds};

/// Grid frame whose window start lies nearest the given time.
pub fn onset_frame(onset_s: f64, hop: usize, sample_rate: u32) -> usize {
    let f = onset_s * sample_rate as f64 / hop as f64;
    f.round().max(0.0) as usize
}

/// Window-start time of a grid frame.
pub fn frame_onset_s(frame: usize, hop: usize, sample_rate: u32) -> f64 {
    frame as f64 * hop as f64 / sample_rate as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn onset_frame_round_trips_on_the_grid() {
        for frame in [0usize, 1, 7, 240] {
            let t = frame_onset_s(frame, 1024, 24000);
            assert_eq!(onset_frame(t, 1024, 24000), frame);
        }
        // Off-grid onsets snap to the nearest frame start.
        assert_eq!(onset_frame(0.021, 1024, 24000), 0);
        assert_eq!(onset_frame(0.022, 1024, 24000), 1);
    }
}
