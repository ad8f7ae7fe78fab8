//! Detection metrics: equal error rate, minimum normalized tandem detection
//! cost, DET operating points, and duration-bucketed EER.
//!
//! All metrics share one threshold sweep: the midpoints between consecutive
//! distinct sorted scores, guarded by one threshold below the minimum and
//! one above the maximum. At a threshold `t`:
//! `FRR(t)` = fraction of bonafide scores `< t` (false rejections),
//! `FAR(t)` = fraction of spoof scores `>= t` (false acceptances).
//! This covers every achievable operating point exactly.

use crate::error::Error;
use crate::Result;

/// Scores grouped by ground truth. Higher score = more bonafide-like.
#[derive(Debug, Clone, Default)]
pub struct ScoreSet {
    pub bonafide: Vec<f64>,
    pub spoof: Vec<f64>,
}

impl ScoreSet {
    pub fn new(bonafide: Vec<f64>, spoof: Vec<f64>) -> Result<Self> {
        if bonafide.is_empty() || spoof.is_empty() {
            return Err(Error::data(
                "score set needs at least one bonafide and one spoof score",
            ));
        }
        if bonafide
            .iter()
            .chain(spoof.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::numeric("score set contains a non-finite score"));
        }
        Ok(ScoreSet { bonafide, spoof })
    }
}

/// Cost coefficients of the constrained tandem detection cost
/// `C0 + C1·Pmiss + C2·Pfa`, normalized by `C0 + min(C1, C2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdcfCosts {
    pub c0: f64,
    pub c1: f64,
    pub c2: f64,
}

impl TdcfCosts {
    pub fn validate(&self) -> Result<()> {
        if !(self.c0 >= 0.0 && self.c1 >= 0.0 && self.c2 >= 0.0) {
            return Err(Error::config("t-DCF costs must be nonnegative"));
        }
        if self.c0 + self.c1.min(self.c2) <= 0.0 {
            return Err(Error::config(
                "t-DCF normalizer C0 + min(C1, C2) must be positive",
            ));
        }
        Ok(())
    }

    fn normalizer(&self) -> f64 {
        self.c0 + self.c1.min(self.c2)
    }
}

/// The sweep thresholds: below-min guard, midpoints of consecutive distinct
/// scores, above-max guard.
fn sweep_thresholds(s: &ScoreSet) -> Vec<f64> {
    let mut all: Vec<f64> = s.bonafide.iter().chain(s.spoof.iter()).copied().collect();
    all.sort_by(|a, b| a.partial_cmp(b).expect("scores are finite"));
    all.dedup();
    let mut ts = Vec::with_capacity(all.len() + 1);
    ts.push(all[0] - 1.0);
    for pair in all.windows(2) {
        ts.push(0.5 * (pair[0] + pair[1]));
    }
    ts.push(all[all.len() - 1] + 1.0);
    ts
}

/// One operating point per sweep threshold: `(threshold, FAR, FRR)`.
fn operating_points(s: &ScoreSet) -> Vec<(f64, f64, f64)> {
    let n_bon = s.bonafide.len() as f64;
    let n_spf = s.spoof.len() as f64;
    sweep_thresholds(s)
        .into_iter()
        .map(|t| {
            let frr = s.bonafide.iter().filter(|&&v| v < t).count() as f64 / n_bon;
            let far = s.spoof.iter().filter(|&&v| v >= t).count() as f64 / n_spf;
            (t, far, frr)
        })
        .collect()
}

/// Equal error rate and its crossing threshold. The crossing is found where
/// the sign of `FAR − FRR` flips along the sweep and linearly interpolated
/// between the two adjacent operating points.
pub fn compute_eer(s: &ScoreSet) -> Result<(f64, f64)> {
    if s.bonafide.is_empty() || s.spoof.is_empty() {
        return Err(Error::data("EER needs both classes present"));
    }
    let pts = operating_points(s);
    // FAR−FRR starts at +1 and ends at −1; find the first sign flip
    for pair in pts.windows(2) {
        let (t1, f1, r1) = pair[0];
        let (t2, f2, r2) = pair[1];
        let d1 = f1 - r1;
        let d2 = f2 - r2;
        if d1 == 0.0 {
            return Ok((f1, t1));
        }
        if d1 > 0.0 && d2 < 0.0 {
            let alpha = d1 / (d1 - d2);
            let eer = f1 + alpha * (f2 - f1);
            let threshold = t1 + alpha * (t2 - t1);
            return Ok((eer, threshold));
        }
    }
    let (t, f, r) = *pts.last().expect("sweep is nonempty");
    debug_assert!(f - r <= 0.0);
    Ok((f.max(r).min(1.0), t)) // d never crossed: degenerate all-equal case
}

/// Minimum normalized t-DCF over the sweep and the threshold achieving it.
pub fn compute_min_tdcf(s: &ScoreSet, costs: &TdcfCosts) -> Result<(f64, f64)> {
    costs.validate()?;
    if s.bonafide.is_empty() || s.spoof.is_empty() {
        return Err(Error::data("min t-DCF needs both classes present"));
    }
    let norm = costs.normalizer();
    let mut best = f64::INFINITY;
    let mut best_t = f64::NAN;
    for (t, far, frr) in operating_points(s) {
        let cost = (costs.c0 + costs.c1 * frr + costs.c2 * far) / norm;
        if cost < best {
            best = cost;
            best_t = t;
        }
    }
    Ok((best, best_t))
}

/// All DET operating points `(FAR, FRR)` along the sweep, low threshold
/// first: starts at `(1, 0)`, ends at `(0, 1)`.
pub fn det_points(s: &ScoreSet) -> Result<Vec<(f64, f64)>> {
    if s.bonafide.is_empty() || s.spoof.is_empty() {
        return Err(Error::data("DET points need both classes present"));
    }
    Ok(operating_points(s)
        .into_iter()
        .map(|(_, far, frr)| (far, frr))
        .collect())
}

/// One scored utterance with its ground truth and source duration.
#[derive(Debug, Clone)]
pub struct LabeledScore {
    pub utt_id: String,
    pub score: f64,
    /// true = bonafide, false = spoof.
    pub bonafide: bool,
    pub duration_s: f64,
}

/// One duration bucket: `[lo, hi)` in seconds, utterance count, and the
/// bucket EER (`None` when a class is missing — "undefined", not 0).
#[derive(Debug, Clone)]
pub struct DurationBucket {
    pub lo_s: f64,
    pub hi_s: f64,
    pub n: usize,
    pub eer: Option<f64>,
}

/// Default bucket edges in seconds; the last bucket is open-ended.
pub const DEFAULT_BUCKET_EDGES_S: [f64; 5] = [0.0, 2.0, 4.0, 6.0, 8.0];

/// Partition records by source duration into right-open buckets
/// `[e0,e1), [e1,e2), …, [e_last, ∞)` and compute a per-bucket EER.
pub fn duration_bucketed_eer(
    records: &[LabeledScore],
    edges_s: &[f64],
) -> Result<Vec<DurationBucket>> {
    if edges_s.len() < 2 && edges_s.is_empty() {
        return Err(Error::config("need at least one bucket edge"));
    }
    for r in records {
        if r.duration_s < 0.0 || !r.duration_s.is_finite() {
            return Err(Error::data(format!(
                "utterance {} has invalid duration {}",
                r.utt_id, r.duration_s
            )));
        }
    }
    let mut buckets: Vec<(f64, f64, Vec<&LabeledScore>)> = Vec::new();
    for (i, &lo) in edges_s.iter().enumerate() {
        let hi = edges_s.get(i + 1).copied().unwrap_or(f64::INFINITY);
        buckets.push((lo, hi, Vec::new()));
    }
    for r in records {
        if let Some(slot) = buckets
            .iter_mut()
            .find(|(lo, hi, _)| r.duration_s >= *lo && r.duration_s < *hi)
        {
            slot.2.push(r);
        }
    }
    buckets
        .into_iter()
        .map(|(lo, hi, rs)| {
            let bonafide: Vec<f64> = rs.iter().filter(|r| r.bonafide).map(|r| r.score).collect();
            let spoof: Vec<f64> = rs.iter().filter(|r| !r.bonafide).map(|r| r.score).collect();
            let eer = if bonafide.is_empty() || spoof.is_empty() {
                None
            } else {
                Some(compute_eer(&ScoreSet { bonafide, spoof })?.0)
            };
            Ok(DurationBucket {
                lo_s: lo,
                hi_s: hi,
                n: rs.len(),
                eer,
            })
        })
        .collect()
}

/// Render the bucket table in the machine format `bucket<TAB>n<TAB>eer`
/// (EER as a fraction with 6 decimals, or `undefined`).
pub fn render_buckets_machine(buckets: &[DurationBucket]) -> String {
    let mut out = String::new();
    for b in buckets {
        let range = if b.hi_s.is_infinite() {
            format!("{}+", b.lo_s)
        } else {
            format!("{}-{}", b.lo_s, b.hi_s)
        };
        let eer = match b.eer {
            Some(e) => format!("{e:.6}"),
            None => "undefined".to_string(),
        };
        out.push_str(&format!("{range}\t{}\t{eer}\n", b.n));
    }
    out
}

/// Render the bucket table for humans: `range  n  EER%`.
pub fn render_buckets_table(buckets: &[DurationBucket]) -> String {
    let mut out = String::from("duration      n      EER\n");
    for b in buckets {
        let range = if b.hi_s.is_infinite() {
            format!("[{:>2}s,  ∞)", b.lo_s)
        } else {
            format!("[{:>2}s,{:>2}s)", b.lo_s, b.hi_s)
        };
        let eer = match b.eer {
            Some(e) => format!("{:7.3}%", e * 100.0),
            None => "   undefined".to_string(),
        };
        out.push_str(&format!("{range}  {:>5}  {eer}\n", b.n));
    }
    out
}
