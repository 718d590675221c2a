//! Short-time spectra and mel cepstra.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::MetricError;

/// Magnitude floor applied before taking logarithms.
pub const MAGNITUDE_FLOOR: f64 = 1e-10;
/// Mel-energy floor applied before taking logarithms.
pub const MEL_ENERGY_FLOOR: f64 = 1e-10;

pub const LSD_FRAME: usize = 2048;
pub const LSD_HOP: usize = 512;
pub const MCD_FRAME: usize = 1024;
pub const MCD_HOP: usize = 512;
pub const MEL_BANDS: usize = 20;
/// Cepstral coefficients 1..=16; the zeroth is dropped.
pub const CEPSTRAL_COEFFS: usize = 16;

/// Periodic Hann window.
pub fn hann(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Number of full frames; no padding at either end.
pub fn frame_count(len: usize, frame_len: usize, hop: usize) -> Result<usize, MetricError> {
    if len < frame_len {
        return Err(MetricError::TooShort { len, frame_len });
    }
    Ok(1 + (len - frame_len) / hop)
}

struct Stft {
    fft: Arc<dyn Fft<f64>>,
    window: Vec<f64>,
    buf: Vec<Complex<f64>>,
}

impl Stft {
    fn new(frame_len: usize) -> Self {
        Self {
            fft: FftPlanner::new().plan_fft_forward(frame_len),
            window: hann(frame_len),
            buf: vec![Complex::default(); frame_len],
        }
    }

    /// Squared magnitudes of bins `0..=frame_len/2` for one frame.
    fn power(&mut self, frame: &[f64]) -> Vec<f64> {
        for ((b, &x), &w) in self.buf.iter_mut().zip(frame).zip(&self.window) {
            *b = Complex::new(x * w, 0.0);
        }
        self.fft.process(&mut self.buf);
        self.buf[..=frame.len() / 2]
            .iter()
            .map(|c| c.norm_sqr())
            .collect()
    }
}

/// Per-frame magnitude spectra `|Y_m[k]|`, `k = 0..=frame_len/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralFrames {
    pub magnitudes: Vec<Vec<f64>>,
    pub frame_len: usize,
    pub hop: usize,
}

pub fn spectral_frames(
    x: &[f64],
    frame_len: usize,
    hop: usize,
) -> Result<SpectralFrames, MetricError> {
    let frames = frame_count(x.len(), frame_len, hop)?;
    let mut stft = Stft::new(frame_len);
    let magnitudes = (0..frames)
        .map(|m| {
            stft.power(&x[m * hop..m * hop + frame_len])
                .into_iter()
                .map(f64::sqrt)
                .collect()
        })
        .collect();
    Ok(SpectralFrames {
        magnitudes,
        frame_len,
        hop,
    })
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular unit-peak filters equally spaced on the HTK mel scale from 0 Hz
/// to Nyquist, evaluated at the FFT bin frequencies. One row per band.
pub fn mel_filterbank(bands: usize, frame_len: usize, sample_rate: u32) -> Vec<Vec<f64>> {
    let nyquist = sample_rate as f64 / 2.0;
    let top = hz_to_mel(nyquist);
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(top * i as f64 / (bands + 1) as f64))
        .collect();
    let bins = frame_len / 2 + 1;
    (0..bands)
        .map(|j| {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            (0..bins)
                .map(|k| {
                    let f = k as f64 * sample_rate as f64 / frame_len as f64;
                    let rise = (f - lo) / (mid - lo);
                    let fall = (hi - f) / (hi - mid);
                    rise.min(fall).max(0.0)
                })
                .collect()
        })
        .collect()
}

/// Orthonormal DCT-II.
pub fn dct2(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    (0..x.len())
        .map(|i| {
            let scale = if i == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale
                * x.iter()
                    .enumerate()
                    .map(|(j, v)| v * (PI * i as f64 * (j as f64 + 0.5) / n).cos())
                    .sum::<f64>()
        })
        .collect()
}

/// Per-frame MFCCs `C_m[1..=16]` from 1024-sample Hann frames, 20 mel bands.
#[derive(Debug, Clone, PartialEq)]
pub struct CepstralFrames {
    pub coefficients: Vec<[f64; CEPSTRAL_COEFFS]>,
    pub frame_len: usize,
    pub mel_bands: usize,
}

pub fn cepstral_frames(x: &[f64], sample_rate: u32) -> Result<CepstralFrames, MetricError> {
    let frames = frame_count(x.len(), MCD_FRAME, MCD_HOP)?;
    let bank = mel_filterbank(MEL_BANDS, MCD_FRAME, sample_rate);
    let mut stft = Stft::new(MCD_FRAME);
    let coefficients = (0..frames)
        .map(|m| {
            let power = stft.power(&x[m * MCD_HOP..m * MCD_HOP + MCD_FRAME]);
            let log_mel: Vec<f64> = bank
                .iter()
                .map(|filter| {
                    let e: f64 = filter.iter().zip(&power).map(|(h, p)| h * p).sum();
                    e.max(MEL_ENERGY_FLOOR).ln()
                })
                .collect();
            let cep = dct2(&log_mel);
            let mut c = [0.0; CEPSTRAL_COEFFS];
            c.copy_from_slice(&cep[1..=CEPSTRAL_COEFFS]);
            c
        })
        .collect();
    Ok(CepstralFrames {
        coefficients,
        frame_len: MCD_FRAME,
        mel_bands: MEL_BANDS,
    })
}
