//! Fixed-length segment extraction.
//!
//! The network consumes fixed-length waveforms. Longer recordings are
//! cropped — at a seeded random offset in training so different epochs see
//! different windows, from the head in evaluation so scores are
//! reproducible. Shorter recordings are tiled end-to-end until they reach
//! the target length.

use crate::error::Error;
use crate::layers::Mode;
use crate::rng::Rng;
use crate::Result;

use super::wav::Waveform;

/// Return a waveform of exactly `target` samples derived from `w`.
pub fn fix_length(w: &Waveform, target: usize, mode: Mode, rng: &mut Rng) -> Result<Waveform> {
    if target == 0 {
        return Err(Error::config("target segment length must be positive"));
    }
    if w.is_empty() {
        return Err(Error::data("cannot fix the length of an empty waveform"));
    }
    let len = w.len();
    let src = &w.samples;
    let out: Vec<f64> = if len >= target {
        let offset = match mode {
            Mode::Train => rng.index(len - target + 1),
            Mode::Eval => 0,
        };
        src[offset..offset + target].to_vec()
    } else {
        (0..target).map(|i| src[i % len]).collect()
    };
    Ok(Waveform::new(out, w.sample_rate))
}
