//! Audio ingestion and the data pipeline: WAV files, protocol lists,
//! fixed-length segmenting, waveform augmentation, and batch planning.

mod augment;
mod batch;
mod protocol;
mod segment;
mod wav;

pub use augment::{rawboost_series, AugmentConfig};
pub use batch::{make_batches, BatchItem};
pub use protocol::{
    emit_protocol, parse_protocol, parse_protocol_str, resolve_audio_path, Label, ProtocolEntry,
};
pub use segment::fix_length;
pub use wav::{read_wav, write_wav, Waveform, SAMPLE_RATE};
