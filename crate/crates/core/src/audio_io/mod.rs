//! Challenge-format audio: mono 16-bit PCM WAV at 44.1 kHz, packet grids,
//! silence measurement and export resampling.

mod resample;
mod wav;

pub use resample::resample;
pub use wav::{decode_wav, encode_wav, read_wav, write_wav};

use crate::PACKET_SIZE;

#[derive(Debug, thiserror::Error)]
pub enum AudioError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed wav: {0}")]
    Malformed(String),
    #[error("unsupported channel count {0} (expected mono)")]
    UnsupportedChannels(u16),
    #[error("unsupported bit depth {0} (expected 16-bit PCM)")]
    UnsupportedBitDepth(u16),
    #[error("unsupported wav format tag {0:#06x} (expected PCM)")]
    UnsupportedFormat(u16),
    #[error("sample {index} out of range: {value}")]
    OutOfRange { index: usize, value: f64 },
    #[error("empty waveform")]
    Empty,
}

/// Mono waveform with real-valued samples nominally in [-1.0, 1.0].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn silent(len: usize, sample_rate: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn grid(&self) -> PacketGrid {
        packet_grid(self)
    }

    /// Samples of packet `index` (must be a whole packet).
    pub fn packet(&self, index: usize) -> &[f64] {
        &self.samples[index * PACKET_SIZE..(index + 1) * PACKET_SIZE]
    }

    /// Index and value of the first sample that is non-finite or outside [-1, 1].
    pub fn first_out_of_range(&self) -> Option<(usize, f64)> {
        self.samples
            .iter()
            .copied()
            .enumerate()
            .find(|&(_, s)| !s.is_finite() || !(-1.0..=1.0).contains(&s))
    }
}

/// Partition of a waveform into whole 512-sample packets plus a tail that no
/// trace digit covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PacketGrid {
    pub packet_size: usize,
    pub whole_packets: usize,
    pub tail_samples: usize,
}

impl PacketGrid {
    pub fn for_len(len: usize) -> Self {
        Self {
            packet_size: PACKET_SIZE,
            whole_packets: len / PACKET_SIZE,
            tail_samples: len % PACKET_SIZE,
        }
    }

    /// Number of samples covered by whole packets.
    pub fn covered(&self) -> usize {
        self.whole_packets * self.packet_size
    }

    pub fn total(&self) -> usize {
        self.covered() + self.tail_samples
    }
}

pub fn packet_grid(w: &Waveform) -> PacketGrid {
    PacketGrid::for_len(w.len())
}

/// RMS threshold of a silent analysis window (-60 dBFS).
pub const SILENCE_THRESHOLD_DBFS: f64 = -60.0;

/// Fraction of 20 ms analysis windows (10 ms hop) whose RMS is below -60 dBFS.
///
/// Clips shorter than one window are measured as a single window.
pub fn silence_ratio(w: &Waveform) -> Result<f64, AudioError> {
    if w.is_empty() {
        return Err(AudioError::Empty);
    }
    let rate = w.sample_rate as f64;
    let win = ((0.020 * rate).round() as usize).max(1);
    let hop = ((0.010 * rate).round() as usize).max(1);
    let threshold = 10f64.powf(SILENCE_THRESHOLD_DBFS / 20.0);

    let n = w.len();
    let starts: Vec<usize> = if n <= win {
        vec![0]
    } else {
        (0..=(n - win) / hop).map(|i| i * hop).collect()
    };
    let silent = starts
        .iter()
        .filter(|&&start| {
            let frame = &w.samples[start..(start + win).min(n)];
            let power = frame.iter().map(|s| s * s).sum::<f64>() / frame.len() as f64;
            power.sqrt() < threshold
        })
        .count();
    Ok(silent as f64 / starts.len() as f64)
}
