//! Deterministic batch planning.
//!
//! Training iterates over the trial list in seeded-shuffled order, split
//! into fixed-size batches with the final partial batch kept. The plan is a
//! pure function of (n_entries, batch_size, seed, epoch): every epoch
//! reshuffles, and re-running with the same inputs reproduces the same
//! order exactly.

use crate::error::Error;
use crate::rng::Rng;
use crate::Result;

use super::protocol::Label;
use super::wav::Waveform;

/// One loaded training/evaluation example.
#[derive(Debug, Clone)]
pub struct BatchItem {
    pub utt_id: String,
    pub label: Label,
    pub wave: Waveform,
    /// Duration of the source recording in seconds, measured before any
    /// cropping or tiling (used for duration-bucketed reporting).
    pub duration_s: f64,
}

/// Plan one epoch: shuffled entry indices grouped into batches.
pub fn make_batches(
    n_entries: usize,
    batch_size: usize,
    seed: u64,
    epoch: usize,
) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be positive"));
    }
    if n_entries == 0 {
        return Err(Error::data("cannot batch an empty trial list"));
    }
    let mut order: Vec<usize> = (0..n_entries).collect();
    const BATCH_STREAM: u64 = 0x62617463; // stream tag, distinct from other rng uses
    let mut rng = Rng::new(seed).derive(&[BATCH_STREAM, epoch as u64]);
    rng.shuffle(&mut order);
    Ok(order.chunks(batch_size).map(|c| c.to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_final_batch_is_kept() {
        let plan = make_batches(65, 32, 1, 0).unwrap();
        let sizes: Vec<usize> = plan.iter().map(|b| b.len()).collect();
        assert_eq!(sizes, vec![32, 32, 1]);
    }

    #[test]
    fn every_index_appears_exactly_once() {
        for epoch in 0..3 {
            let plan = make_batches(100, 7, 9, epoch).unwrap();
            let mut seen: Vec<usize> = plan.into_iter().flatten().collect();
            seen.sort_unstable();
            assert_eq!(seen, (0..100).collect::<Vec<_>>());
        }
    }

    #[test]
    fn same_inputs_same_plan() {
        assert_eq!(
            make_batches(50, 8, 3, 2).unwrap(),
            make_batches(50, 8, 3, 2).unwrap()
        );
    }

    #[test]
    fn epochs_reshuffle() {
        let e0 = make_batches(200, 200, 5, 0).unwrap();
        let e1 = make_batches(200, 200, 5, 1).unwrap();
        assert_ne!(e0[0], e1[0]);
    }

    #[test]
    fn seeds_reshuffle() {
        let a = make_batches(200, 200, 5, 0).unwrap();
        let b = make_batches(200, 200, 6, 0).unwrap();
        assert_ne!(a[0], b[0]);
    }

    #[test]
    fn degenerate_inputs_error() {
        assert!(matches!(make_batches(10, 0, 1, 0), Err(Error::Config(_))));
        assert!(matches!(make_batches(0, 4, 1, 0), Err(Error::Data(_))));
    }

    #[test]
    fn single_entry_single_batch() {
        let plan = make_batches(1, 32, 1, 0).unwrap();
        assert_eq!(plan, vec![vec![0]]);
    }
}
