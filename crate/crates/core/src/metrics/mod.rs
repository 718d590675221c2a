//! Objective quality metrics between a clean reference `y` and an enhanced
//! estimate `ŷ` of equal length.
//!
//! | metric | definition |
//! |--------|------------|
//! | MSE    | `(1/N) Σ (y - ŷ)²` |
//! | SDR    | `10 log10(‖y‖² / ‖y - ŷ‖²)` |
//! | SI-SDR | `10 log10(‖αy‖² / ‖αy - ŷ‖²)`, `α = ŷᵀy / ‖y‖²` |
//! | LSD    | mean over 2048-sample Hann frames (hop 512) of the RMS difference of `log10 |Y|²` over all 1025 bins |
//! | MCD    | mean over 1024-sample Hann frames (hop 512) of the Euclidean distance between MFCCs 1..=16 |
//!
//! LSD squares the per-bin log difference and averages over the K+1 bins it
//! sums. Magnitudes are floored at 1e-10 before logarithms. MFCCs use 20
//! triangular unit-peak filters on the HTK mel scale (0 Hz to Nyquist), the
//! natural log of mel energies (floored at 1e-10) and an orthonormal DCT-II.
//!
//! A perfect estimate makes SDR and SI-SDR `+inf`. Ratios above 200 dB are
//! below the rounding noise of the arithmetic and are reported as `+inf` too.

pub mod spectral;

use serde::{Deserialize, Serialize};

use crate::audio_io::Waveform;
use spectral::{cepstral_frames, spectral_frames, LSD_FRAME, LSD_HOP, MAGNITUDE_FLOOR};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("length mismatch: reference {reference}, estimate {estimate}")]
    LengthMismatch { reference: usize, estimate: usize },
    #[error("sample rate mismatch: reference {reference} Hz, estimate {estimate} Hz")]
    RateMismatch { reference: u32, estimate: u32 },
    #[error("reference is all zeros")]
    ZeroReference,
    #[error("estimate is all zeros")]
    ZeroEstimate,
    #[error("{len} samples is shorter than one {frame_len}-sample frame")]
    TooShort { len: usize, frame_len: usize },
}

fn check_pair(y: &[f64], est: &[f64]) -> Result<(), MetricError> {
    if y.len() != est.len() {
        return Err(MetricError::LengthMismatch {
            reference: y.len(),
            estimate: est.len(),
        });
    }
    Ok(())
}

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// Ratios beyond this are indistinguishable from a perfect estimate.
pub const PERFECT_RATIO_DB: f64 = 200.0;

/// `10 log10(signal / distortion)`, `+inf` when the distortion vanishes.
fn ratio_db(signal: f64, distortion: f64) -> f64 {
    if distortion <= signal * 10f64.powf(-PERFECT_RATIO_DB / 10.0) {
        f64::INFINITY
    } else {
        10.0 * (signal / distortion).log10()
    }
}

pub fn mse(y: &[f64], est: &[f64]) -> Result<f64, MetricError> {
    check_pair(y, est)?;
    if y.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = y.iter().zip(est).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / y.len() as f64)
}

pub fn sdr(y: &[f64], est: &[f64]) -> Result<f64, MetricError> {
    check_pair(y, est)?;
    let signal = energy(y);
    if signal == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let distortion: f64 = y.iter().zip(est).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(ratio_db(signal, distortion))
}

/// Optimal scaling of the reference onto the estimate.
pub fn si_sdr_alpha(y: &[f64], est: &[f64]) -> Result<f64, MetricError> {
    check_pair(y, est)?;
    let ref_energy = energy(y);
    if ref_energy == 0.0 {
        return Err(MetricError::ZeroReference);
    }
    let dot: f64 = y.iter().zip(est).map(|(a, b)| a * b).sum();
    Ok(dot / ref_energy)
}

pub fn si_sdr(y: &[f64], est: &[f64]) -> Result<f64, MetricError> {
    let alpha = si_sdr_alpha(y, est)?;
    if est.iter().all(|&v| v == 0.0) {
        return Err(MetricError::ZeroEstimate);
    }
    let target = alpha * alpha * energy(y);
    let distortion: f64 = y
        .iter()
        .zip(est)
        .map(|(a, b)| (alpha * a - b) * (alpha * a - b))
        .sum();
    Ok(ratio_db(target, distortion))
}

pub fn lsd(y: &[f64], est: &[f64]) -> Result<f64, MetricError> {
    check_pair(y, est)?;
    let reference = spectral_frames(y, LSD_FRAME, LSD_HOP)?;
    let estimate = spectral_frames(est, LSD_FRAME, LSD_HOP)?;
    let log_power = |m: f64| 2.0 * m.max(MAGNITUDE_FLOOR).log10();
    let frames = reference.magnitudes.len();
    let total: f64 = reference
        .magnitudes
        .iter()
        .zip(&estimate.magnitudes)
        .map(|(r, e)| {
            let mean_sq = r
                .iter()
                .zip(e)
                .map(|(&a, &b)| (log_power(a) - log_power(b)).powi(2))
                .sum::<f64>()
                / r.len() as f64;
            mean_sq.sqrt()
        })
        .sum();
    Ok(total / frames as f64)
}

pub fn mcd(y: &[f64], est: &[f64], sample_rate: u32) -> Result<f64, MetricError> {
    check_pair(y, est)?;
    let reference = cepstral_frames(y, sample_rate)?;
    let estimate = cepstral_frames(est, sample_rate)?;
    let frames = reference.coefficients.len();
    let total: f64 = reference
        .coefficients
        .iter()
        .zip(&estimate.coefficients)
        .map(|(a, b)| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .sum();
    Ok(total / frames as f64)
}

/// All five metrics for one clip.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mse: f64,
    pub sdr_db: f64,
    pub si_sdr_db: f64,
    pub lsd: f64,
    pub mcd: f64,
    pub si_sdr_alpha: f64,
}

/// Metric identifiers in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    Mse,
    Sdr,
    SiSdr,
    Lsd,
    Mcd,
}

impl Metric {
    pub const ALL: [Metric; 5] = [Self::Mse, Self::Sdr, Self::SiSdr, Self::Lsd, Self::Mcd];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mse => "mse",
            Self::Sdr => "sdr_db",
            Self::SiSdr => "si_sdr_db",
            Self::Lsd => "lsd",
            Self::Mcd => "mcd",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, Self::Sdr | Self::SiSdr)
    }
}

impl MetricReport {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Mse => self.mse,
            Metric::Sdr => self.sdr_db,
            Metric::SiSdr => self.si_sdr_db,
            Metric::Lsd => self.lsd,
            Metric::Mcd => self.mcd,
        }
    }
}

/// Evaluates every metric on the same reference/estimate pair.
///
/// An all-zero estimate has no defined SI-SDR; it is reported as `-inf`
/// (with `alpha = 0`) so that anchor clips still get a full report.
pub fn evaluate_clip(
    reference: &Waveform,
    estimate: &Waveform,
) -> Result<MetricReport, MetricError> {
    if reference.sample_rate != estimate.sample_rate {
        return Err(MetricError::RateMismatch {
            reference: reference.sample_rate,
            estimate: estimate.sample_rate,
        });
    }
    let (y, est) = (&reference.samples[..], &estimate.samples[..]);
    let si_sdr_db = match si_sdr(y, est) {
        Err(MetricError::ZeroEstimate) => f64::NEG_INFINITY,
        other => other?,
    };
    Ok(MetricReport {
        mse: mse(y, est)?,
        sdr_db: sdr(y, est)?,
        si_sdr_db,
        lsd: lsd(y, est)?,
        mcd: mcd(y, est, reference.sample_rate)?,
        si_sdr_alpha: si_sdr_alpha(y, est)?,
    })
}
