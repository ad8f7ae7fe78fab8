//! Training: loss, optimizer, epoch loop, checkpoints, and scoring.

mod checkpoint;
mod engine;
mod loss;
mod optim;
mod scores;

pub use checkpoint::{select_and_average, Checkpoint};
pub use engine::{
    fit, score_entries, train_epoch, validate_model, DataSource, EpochReport, EpochStats,
    FitReport, ScoringOutcome, TrainConfig, ValMetric,
};
pub use loss::{weighted_cross_entropy, ClassWeights, DEFAULT_CLASS_WEIGHTS};
pub use optim::{AdamConfig, OptimState};
pub use scores::{format_score_lines, parse_score_file, parse_score_str, write_score_file};
