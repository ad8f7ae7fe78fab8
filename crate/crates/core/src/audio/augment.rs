//! Waveform-domain training augmentation.
//!
//! Three independently switchable corruption stages applied in series, all
//! driven by one seeded RNG stream so a (seed, config) pair always produces
//! the same output:
//!
//! 1. **Convolutive** — the signal is filtered by a random multi-notch FIR:
//!    a handful of Gaussian dips at random centers/widths/depths, realized
//!    as a 65-tap Hamming-windowed linear-phase filter (frequency-sampling
//!    design), applied with same-length convolution and renormalized to the
//!    input's peak level.
//! 2. **Impulsive** — signal-dependent clicks: a random number of positions
//!    (density drawn per utterance, expressed per 1000 samples) each get a
//!    random-sign perturbation proportional to the local sample magnitude.
//! 3. **Stationary** — colored additive noise: white Gaussian noise shaped
//!    by a short random FIR, scaled so the resulting SNR equals a value
//!    drawn uniformly from the configured range. Silent inputs skip this
//!    stage (no finite SNR exists).
//!
//! After any enabled stage runs, the result is clipped to [−1, 1]. With all
//! stages disabled the input is returned unchanged.

use crate::error::Error;
use crate::rng::Rng;
use crate::Result;

use super::wav::Waveform;

const FIR_TAPS: usize = 65;
const FREQ_GRID: usize = 256;
const NOTCH_DEPTH_RANGE: (f64, f64) = (0.3, 1.0);
const COLOR_TAPS: usize = 10;

/// Switches and ranges for the augmentation series.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentConfig {
    pub convolutive: bool,
    pub impulsive: bool,
    pub stationary: bool,
    /// Number of notch dips in the convolutive filter.
    pub n_notch_bands: usize,
    /// Full width (Hz) range each notch is drawn from.
    pub notch_width_hz: (f64, f64),
    /// Impulse density range, in impulses per 1000 samples.
    pub impulses_per_1000: (f64, f64),
    /// SNR range (dB) for the stationary noise stage.
    pub snr_db: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            convolutive: true,
            impulsive: true,
            stationary: true,
            n_notch_bands: 5,
            notch_width_hz: (20.0, 1000.0),
            impulses_per_1000: (0.0, 10.0),
            snr_db: (10.0, 40.0),
        }
    }
}

impl AugmentConfig {
    /// No-op configuration: every stage disabled.
    pub fn disabled() -> Self {
        AugmentConfig {
            convolutive: false,
            impulsive: false,
            stationary: false,
            ..AugmentConfig::default()
        }
    }

    pub fn any_enabled(&self) -> bool {
        self.convolutive || self.impulsive || self.stationary
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let bad = |field: &str, why: String| Err(Error::config(format!("{field}: {why}")));
        let nyquist = sample_rate as f64 / 2.0;
        if self.convolutive {
            if self.n_notch_bands == 0 {
                return bad("n_notch_bands", "must be at least 1".into());
            }
            let (lo, hi) = self.notch_width_hz;
            if !(lo > 0.0 && hi >= lo) {
                return bad("notch_width_hz", format!("invalid range ({lo}, {hi})"));
            }
            if hi >= nyquist / 2.0 {
                return bad(
                    "notch_width_hz",
                    format!("upper bound {hi} too wide for nyquist {nyquist}"),
                );
            }
        }
        if self.impulsive {
            let (lo, hi) = self.impulses_per_1000;
            if !(lo >= 0.0 && hi >= lo) {
                return bad("impulses_per_1000", format!("invalid range ({lo}, {hi})"));
            }
        }
        if self.stationary {
            let (lo, hi) = self.snr_db;
            if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
                return bad("snr_db", format!("invalid range ({lo}, {hi})"));
            }
        }
        Ok(())
    }
}

/// Design a linear-phase FIR whose magnitude response carries one Gaussian
/// dip per `(center_hz, width_hz, depth)` band, via frequency sampling and
/// a Hamming window. `width_hz` is the dip's full width at half its depth.
fn design_notch_fir(bands: &[(f64, f64, f64)], sample_rate: f64) -> Vec<f64> {
    let nyquist = sample_rate / 2.0;
    // desired zero-phase amplitude on a uniform grid over [0, nyquist]
    let amplitude = |f: f64| -> f64 {
        let mut a = 1.0;
        for &(center, width, depth) in bands {
            // FWHM = 2*sqrt(2 ln 2) * sigma
            let sigma = width / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
            let z = (f - center) / sigma;
            a *= 1.0 - depth * (-0.5 * z * z).exp();
        }
        a.max(0.0)
    };
    let k = FREQ_GRID;
    let grid: Vec<f64> = (0..=k).map(|i| amplitude(i as f64 / k as f64 * nyquist)).collect();
    let half = (FIR_TAPS - 1) as isize / 2;
    let mut taps = Vec::with_capacity(FIR_TAPS);
    for n in 0..FIR_TAPS {
        let m = n as isize - half;
        // inverse DTFT of the real even spectrum, trapezoidal rule
        let mut acc = grid[0] / 2.0 + grid[k] / 2.0 * (std::f64::consts::PI * m as f64).cos();
        for (i, &a) in grid.iter().enumerate().take(k).skip(1) {
            acc += a * (std::f64::consts::PI * i as f64 * m as f64 / k as f64).cos();
        }
        let ideal = acc / k as f64;
        let window = 0.54
            - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / (FIR_TAPS - 1) as f64).cos();
        taps.push(ideal * window);
    }
    taps
}

/// Same-length convolution with the kernel centered (zero padding at edges).
fn convolve_same(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let half = taps.len() as isize / 2;
    let n = x.len() as isize;
    (0..n)
        .map(|i| {
            let mut acc = 0.0;
            for (t, &h) in taps.iter().enumerate() {
                let j = i + t as isize - half;
                if j >= 0 && j < n {
                    acc += h * x[j as usize];
                }
            }
            acc
        })
        .collect()
}

fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0_f64, |m, &v| m.max(v.abs()))
}

fn stage_convolutive(x: &mut Vec<f64>, cfg: &AugmentConfig, sample_rate: f64, rng: &mut Rng) {
    let nyquist = sample_rate / 2.0;
    let mut bands = Vec::with_capacity(cfg.n_notch_bands);
    for _ in 0..cfg.n_notch_bands {
        let width = rng.uniform(cfg.notch_width_hz.0, cfg.notch_width_hz.1);
        let center = rng.uniform(width, nyquist - width);
        let depth = rng.uniform(NOTCH_DEPTH_RANGE.0, NOTCH_DEPTH_RANGE.1);
        bands.push((center, width, depth));
    }
    let taps = design_notch_fir(&bands, sample_rate);
    let before = peak(x);
    let mut y = convolve_same(x, &taps);
    let after = peak(&y);
    if before > 0.0 && after > 0.0 {
        let gain = before / after;
        for v in &mut y {
            *v *= gain;
        }
    }
    *x = y;
}

fn stage_impulsive(x: &mut [f64], cfg: &AugmentConfig, rng: &mut Rng) {
    if x.is_empty() {
        return;
    }
    let density = rng.uniform(cfg.impulses_per_1000.0, cfg.impulses_per_1000.1);
    let count = (density * x.len() as f64 / 1000.0).round() as usize;
    for _ in 0..count {
        let p = rng.index(x.len());
        let sign = if rng.uniform(0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
        let gain = rng.uniform(0.0, 1.0);
        x[p] += sign * gain * x[p].abs();
    }
}

/// Add FIR-colored Gaussian noise at exactly `snr_db` relative to the
/// current signal power. Silent input is returned unchanged.
fn add_stationary_noise(x: &mut [f64], snr_db: f64, rng: &mut Rng) {
    let n = x.len();
    if n == 0 {
        return;
    }
    let p_sig: f64 = x.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if p_sig <= 0.0 {
        return;
    }
    let white: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
    let color: Vec<f64> = (0..COLOR_TAPS).map(|_| rng.uniform(-1.0, 1.0)).collect();
    // causal FIR coloring, zero initial state
    let mut noise = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for (j, &c) in color.iter().enumerate() {
            if i >= j {
                acc += c * white[i - j];
            }
        }
        noise[i] = acc;
    }
    let p_noise: f64 = noise.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if p_noise <= 0.0 {
        return;
    }
    let scale = (p_sig / (10.0_f64.powf(snr_db / 10.0) * p_noise)).sqrt();
    for (xv, nv) in x.iter_mut().zip(&noise) {
        *xv += scale * nv;
    }
}

fn stage_stationary(x: &mut [f64], cfg: &AugmentConfig, rng: &mut Rng) {
    let snr_db = rng.uniform(cfg.snr_db.0, cfg.snr_db.1);
    add_stationary_noise(x, snr_db, rng);
}

/// Apply the enabled stages in series (convolutive → impulsive →
/// stationary), then clip to [−1, 1]. With every stage disabled the input
/// waveform is returned unchanged.
pub fn rawboost_series(w: &Waveform, cfg: &AugmentConfig, rng: &mut Rng) -> Result<Waveform> {
    cfg.validate(w.sample_rate)?;
    if !cfg.any_enabled() || w.is_empty() {
        return Ok(w.clone());
    }
    let sample_rate = w.sample_rate as f64;
    let mut x = w.samples.clone();
    if cfg.convolutive {
        stage_convolutive(&mut x, cfg, sample_rate, rng);
    }
    if cfg.impulsive {
        stage_impulsive(&mut x, cfg, rng);
    }
    if cfg.stationary {
        stage_stationary(&mut x, cfg, rng);
    }
    for v in &mut x {
        *v = v.clamp(-1.0, 1.0);
    }
    Ok(Waveform::new(x, w.sample_rate))
}
