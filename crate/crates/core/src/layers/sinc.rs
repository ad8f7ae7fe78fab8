//! Learnable band-pass sinc filter bank.
//!
//! Each filter is parameterized by a lower band edge and a bandwidth (in Hz),
//! the only trainable scalars. The impulse response of filter k with
//! normalized edges f₁ < f₂ (cycles/sample) is
//!
//! ```text
//! h_k[m] = (2·f₂·sincf(2π·f₂·m) − 2·f₁·sincf(2π·f₁·m)) · ham[m]
//! ```
//!
//! over zero-centered taps m, with a Hamming window `ham`. Band edges are
//! made valid by construction: f₁ = min(|low|, Nyquist), f₂ = min(f₁ +
//! |band|, Nyquist), so no learned value can produce an invalid band.
//! Initialization spaces the bands on the mel scale over (0, Nyquist].
//!
//! Output is a valid-mode cross-correlation of the waveform with every
//! filter: row k has length `T − kernel_len + 1`.

use crate::error::Error;
use crate::par::{self, ExecMode};
use crate::param::{Grads, ParamId, ParamStore};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::Result;

pub fn mel(f_hz: f64) -> f64 {
    2595.0 * (1.0 + f_hz / 700.0).log10()
}

pub fn mel_inv(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// sin(x)/x with the removable singularity filled in.
fn sincf(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        x.sin() / x
    }
}

/// Effective (clamped) normalized band edges and the clamp indicators needed
/// for the chain rule: `df1/d|low|` is 1 unless the low edge hit Nyquist,
/// `df2/d(f1+|band|)` is 1 unless the high edge hit Nyquist.
struct Band {
    f1: f64,
    f2: f64,
    low_active: bool,
    high_active: bool,
}

#[derive(Debug, Clone)]
pub struct SincBank {
    pub f_low: ParamId,
    pub f_band: ParamId,
    pub n_filters: usize,
    pub kernel_len: usize,
    pub sample_rate: f64,
}

#[derive(Debug)]
pub struct SincCache {
    pub wave: Tensor,
    pub out_len: usize,
}

impl SincBank {
    /// Mel-spaced initialization: edges e_k = mel⁻¹(mel(f_min) + k·Δ) over
    /// (f_min, Nyquist], filter k = (e_k, e_{k+1} − e_k). The generator
    /// argument is accepted for signature uniformity with other layers; the
    /// initialization itself is deterministic.
    pub fn new(
        ps: &mut ParamStore,
        name: impl Into<String>,
        n_filters: usize,
        kernel_len: usize,
        sample_rate: f64,
        _rng: &mut Rng,
    ) -> Result<Self> {
        if n_filters == 0 {
            return Err(Error::config("sinc bank: n_filters must be >= 1"));
        }
        if kernel_len % 2 == 0 {
            return Err(Error::config(format!(
                "sinc bank: kernel_len must be odd, got {kernel_len}"
            )));
        }
        let name = name.into();
        let nyquist = sample_rate / 2.0;
        let f_min = 30.0;
        let (m_lo, m_hi) = (mel(f_min), mel(nyquist));
        let step = (m_hi - m_lo) / n_filters as f64;
        let edges: Vec<f64> = (0..=n_filters)
            .map(|k| mel_inv(m_lo + k as f64 * step))
            .collect();
        let lows: Vec<f64> = edges[..n_filters].to_vec();
        let bands: Vec<f64> = (0..n_filters).map(|k| edges[k + 1] - edges[k]).collect();
        let f_low = ps.register(
            format!("{name}.f_low"),
            Tensor::from_vec(&[n_filters], lows)?,
            true,
        );
        let f_band = ps.register(
            format!("{name}.f_band"),
            Tensor::from_vec(&[n_filters], bands)?,
            true,
        );
        Ok(SincBank {
            f_low,
            f_band,
            n_filters,
            kernel_len,
            sample_rate,
        })
    }

    fn hamming(&self, n: usize) -> f64 {
        let l = (self.kernel_len - 1) as f64;
        0.54 - 0.46 * (2.0 * std::f64::consts::PI * n as f64 / l).cos()
    }

    fn band(&self, ps: &ParamStore, k: usize) -> Band {
        let ny = self.sample_rate / 2.0;
        let low_hz = ps.get(self.f_low).data()[k].abs();
        let band_hz = ps.get(self.f_band).data()[k].abs();
        let low_active = low_hz < ny;
        let f1_hz = if low_active { low_hz } else { ny };
        let high_active = f1_hz + band_hz < ny;
        let f2_hz = if high_active { f1_hz + band_hz } else { ny };
        Band {
            f1: f1_hz / self.sample_rate,
            f2: f2_hz / self.sample_rate,
            low_active,
            high_active,
        }
    }

    /// Materialize the filter bank `[n_filters, kernel_len]`.
    pub fn build_filters(&self, ps: &ParamStore) -> Tensor {
        let k_len = self.kernel_len;
        let center = (k_len - 1) as isize / 2;
        let mut filters = Tensor::zeros(&[self.n_filters, k_len]);
        for k in 0..self.n_filters {
            let band = self.band(ps, k);
            let row = &mut filters.data_mut()[k * k_len..(k + 1) * k_len];
            for (n, slot) in row.iter_mut().enumerate() {
                let m = (n as isize - center) as f64;
                let hi = 2.0 * band.f2 * sincf(2.0 * std::f64::consts::PI * band.f2 * m);
                let lo = 2.0 * band.f1 * sincf(2.0 * std::f64::consts::PI * band.f1 * m);
                *slot = (hi - lo) * self.hamming(n);
            }
        }
        filters
    }

    pub fn out_len(&self, wave_len: usize) -> Result<usize> {
        if wave_len < self.kernel_len {
            return Err(Error::dim(format!(
                "sinc bank: wave length {wave_len} shorter than kernel {}",
                self.kernel_len
            )));
        }
        Ok(wave_len - self.kernel_len + 1)
    }

    pub fn forward(&self, ps: &ParamStore, wave: &Tensor) -> Result<(Tensor, SincCache)> {
        let y = self.infer(ps, wave)?;
        let out_len = y.shape()[1];
        Ok((
            y,
            SincCache {
                wave: wave.clone(),
                out_len,
            },
        ))
    }

    pub fn infer(&self, ps: &ParamStore, wave: &Tensor) -> Result<Tensor> {
        if wave.ndim() != 1 {
            return Err(Error::dim(format!(
                "sinc bank expects a 1D waveform, got {:?}",
                wave.shape()
            )));
        }
        let t_out = self.out_len(wave.numel())?;
        let filters = self.build_filters(ps);
        let k_len = self.kernel_len;
        let wdata = wave.data();
        let fdata = filters.data();
        let mut out = Tensor::zeros(&[self.n_filters, t_out]);
        let mode = ExecMode::auto(self.n_filters * t_out);
        par::fill_chunks(out.data_mut(), t_out, mode, |k, chunk| {
            let h = &fdata[k * k_len..(k + 1) * k_len];
            for (t, slot) in chunk.iter_mut().enumerate() {
                let seg = &wdata[t..t + k_len];
                *slot = seg.iter().zip(h).map(|(&x, &w)| x * w).sum();
            }
        });
        Ok(out)
    }

    pub fn backward(
        &self,
        ps: &ParamStore,
        cache: &SincCache,
        dy: &Tensor,
        grads: &mut Grads,
    ) -> Result<Tensor> {
        if dy.shape() != [self.n_filters, cache.out_len] {
            return Err(Error::dim(format!(
                "sinc backward: upstream grad {:?}, expected [{}, {}]",
                dy.shape(),
                self.n_filters,
                cache.out_len
            )));
        }
        let k_len = self.kernel_len;
        let center = (k_len - 1) as isize / 2;
        let wdata = cache.wave.data();
        let filters = self.build_filters(ps);
        let mut dwave = Tensor::zeros(cache.wave.shape());
        let mut dlow = vec![0.0; self.n_filters];
        let mut dband = vec![0.0; self.n_filters];

        for k in 0..self.n_filters {
            // dL/dh_k[n] = Σ_t dy[k,t]·wave[t+n]
            let gy = &dy.data()[k * cache.out_len..(k + 1) * cache.out_len];
            let mut dh = vec![0.0; k_len];
            for (t, &g) in gy.iter().enumerate() {
                if g == 0.0 {
                    continue;
                }
                let seg = &wdata[t..t + k_len];
                for (n, &x) in seg.iter().enumerate() {
                    dh[n] += g * x;
                }
                let h = &filters.data()[k * k_len..(k + 1) * k_len];
                let dseg = &mut dwave.data_mut()[t..t + k_len];
                for (d, &w) in dseg.iter_mut().zip(h) {
                    *d += g * w;
                }
            }
            // Chain through the filter construction to the band edges.
            let band = self.band(ps, k);
            let mut g_f1n = 0.0; // dL/d f1 (normalized)
            let mut g_f2n = 0.0;
            for (n, &gh) in dh.iter().enumerate() {
                if gh == 0.0 {
                    continue;
                }
                let m = (n as isize - center) as f64;
                let w = self.hamming(n);
                // d/df [2f·sincf(2πfm)] = 2·cos(2πfm) for every m (m=0 included)
                g_f2n += gh * w * 2.0 * (2.0 * std::f64::consts::PI * band.f2 * m).cos();
                g_f1n -= gh * w * 2.0 * (2.0 * std::f64::consts::PI * band.f1 * m).cos();
            }
            // Normalized → Hz → raw parameters (through |·| and the clamps).
            let raw_low = ps.get(self.f_low).data()[k];
            let raw_band = ps.get(self.f_band).data()[k];
            let sgn = |v: f64| {
                if v > 0.0 {
                    1.0
                } else if v < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            };
            let d_f1hz_d_low = if band.low_active { sgn(raw_low) } else { 0.0 };
            let d_f2hz_d_band = if band.high_active { sgn(raw_band) } else { 0.0 };
            // f2 also moves when f1 moves (f2 = f1 + |band|, unless clamped).
            let d_f2hz_d_low = if band.high_active { d_f1hz_d_low } else { 0.0 };
            let inv_sr = 1.0 / self.sample_rate;
            dlow[k] = (g_f1n * d_f1hz_d_low + g_f2n * d_f2hz_d_low) * inv_sr;
            dband[k] = g_f2n * d_f2hz_d_band * inv_sr;
        }
        grads.accumulate(self.f_low, &Tensor::from_vec(&[self.n_filters], dlow)?);
        grads.accumulate(self.f_band, &Tensor::from_vec(&[self.n_filters], dband)?);
        Ok(dwave)
    }

    pub fn param_count(&self, ps: &ParamStore) -> u64 {
        (ps.get(self.f_low).numel() + ps.get(self.f_band).numel()) as u64
    }

    /// MACs for a given input length: n_filters·kernel_len·out_len.
    pub fn macs(&self, wave_len: usize) -> Result<u64> {
        Ok(self.n_filters as u64 * self.kernel_len as u64 * self.out_len(wave_len)? as u64)
    }
}
