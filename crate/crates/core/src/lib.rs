//! Raw-waveform anti-spoofing with a time-frequency separable convolution
//! backbone ("RawTFNet").
//!
//! The crate is self-contained: an `f64` tensor core with hand-written
//! reverse-mode gradients, the model layers (learnable band-pass sinc
//! frontend, depthwise-separable SE-Res2 blocks, time/frequency dual-branch
//! blocks), a deterministic training engine (Adam, weighted cross-entropy,
//! checkpoint averaging), waveform augmentation, and spoofing-countermeasure
//! metrics (EER, min t-DCF, DET curves).
//!
//! Everything is deterministic for a fixed seed: random streams come from a
//! seeded ChaCha8 generator, and all cross-sample reductions happen in a
//! fixed order regardless of thread count.

pub mod audio;
pub mod complexity;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod model;
pub mod par;
pub mod param;
pub mod rng;
pub mod synth;
pub mod tensor;
pub mod tfconv;
pub mod train;

pub use error::Error;
pub use tensor::Tensor;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;
