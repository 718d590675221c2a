//! Zero-fill degradation and blind-set corpus assembly.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio_io::{silence_ratio, AudioError, Waveform};
use crate::rng::derive_seed;
use crate::trace_model::{
    realize_plan, sample_trace_plan, PacketTrace, TraceError, TracePlan, TracePools,
};
use crate::PACKET_SIZE;

/// Clips with more silence than this are discarded.
pub const MAX_SILENCE_RATIO: f64 = 0.30;

/// 11.6 s at 44.1 kHz.
pub const CLIP_SAMPLES: usize = 511_560;

#[derive(Debug, thiserror::Error)]
pub enum DegradeError {
    #[error("trace has {trace} packets but the clip has {packets} whole packets")]
    TraceMismatch { trace: usize, packets: usize },
    #[error("clip rejected: silence ratio {ratio:.3} exceeds {MAX_SILENCE_RATIO}")]
    TooSilent { ratio: f64 },
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("manifest error: {0}")]
    Manifest(#[from] csv::Error),
}

/// A clean clip with its lost packets replaced by silence.
#[derive(Debug, Clone, PartialEq)]
pub struct LossyClip {
    pub audio: Waveform,
    pub trace: PacketTrace,
    pub origin: String,
    pub plan: Option<TracePlan>,
}

impl LossyClip {
    pub fn with_origin(mut self, origin: impl Into<String>) -> Self {
        self.origin = origin.into();
        self
    }
}

/// Zeroes every packet the trace marks lost. Received packets and the
/// partial tail are copied verbatim.
pub fn apply_zero_fill(clean: &Waveform, trace: &PacketTrace) -> Result<LossyClip, DegradeError> {
    let packets = clean.grid().whole_packets;
    if trace.len() != packets {
        return Err(DegradeError::TraceMismatch {
            trace: trace.len(),
            packets,
        });
    }
    let mut audio = clean.clone();
    for (chunk, &lost) in audio
        .samples
        .chunks_exact_mut(PACKET_SIZE)
        .zip(&trace.flags)
    {
        if lost {
            chunk.fill(0.0);
        }
    }
    Ok(LossyClip {
        audio,
        trace: trace.clone(),
        origin: String::new(),
        plan: None,
    })
}

/// Energy of `clean` inside the packets the trace marks lost.
pub fn lost_energy(clean: &Waveform, trace: &PacketTrace) -> f64 {
    clean
        .samples
        .chunks_exact(PACKET_SIZE)
        .zip(&trace.flags)
        .filter(|(_, &lost)| lost)
        .flat_map(|(chunk, _)| chunk.iter())
        .map(|s| s * s)
        .sum()
}

/// Samples a trace plan covering the clip and zero-fills it. The clean clip
/// must pass the silence gate.
pub fn build_blind_item(
    clean: &Waveform,
    pools: &TracePools,
    seed: u64,
) -> Result<LossyClip, DegradeError> {
    let ratio = silence_ratio(clean)?;
    if ratio > MAX_SILENCE_RATIO {
        return Err(DegradeError::TooSilent { ratio });
    }
    let plan = sample_trace_plan(clean.grid().whole_packets, pools, seed)?;
    let trace = realize_plan(&plan);
    let mut item = apply_zero_fill(clean, &trace)?;
    item.plan = Some(plan);
    Ok(item)
}

/// Cuts a recording into consecutive non-overlapping 11.6 s clips; a final
/// partial window is dropped.
pub fn segment_recording(w: &Waveform) -> Vec<Waveform> {
    w.samples
        .chunks_exact(CLIP_SAMPLES)
        .map(|c| Waveform::new(c.to_vec(), w.sample_rate))
        .collect()
}

/// One manifest line per blind item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub clip_id: String,
    pub source_file: String,
    pub seed: u64,
    /// `trace_id:count` segments joined by `;`.
    pub trace_plan: String,
    pub silence_ratio: f64,
    /// Subset numbers of the drawn traces joined by `;`.
    pub subset_draws: String,
}

/// Input clip for a corpus build.
#[derive(Debug, Clone)]
pub struct SourceClip {
    pub clip_id: String,
    pub source_file: String,
    pub audio: Waveform,
}

#[derive(Debug, Default)]
pub struct CorpusBuild {
    pub items: Vec<LossyClip>,
    pub manifest: Vec<ManifestRow>,
    /// Clips that failed the silence gate, with their silence ratio.
    pub discarded: Vec<(String, f64)>,
}

/// Builds a blind corpus. Clip `i` uses seed `seed ^ mix64(i)`, so the result
/// does not depend on processing order.
pub fn build_corpus(
    clips: &[SourceClip],
    pools: &TracePools,
    seed: u64,
) -> Result<CorpusBuild, DegradeError> {
    let results: Vec<_> = clips
        .par_iter()
        .enumerate()
        .map(|(i, clip)| {
            let clip_seed = derive_seed(seed, i as u64);
            let ratio = silence_ratio(&clip.audio)?;
            match build_blind_item(&clip.audio, pools, clip_seed) {
                Ok(item) => Ok(Some((
                    item.with_origin(clip.clip_id.clone()),
                    clip_seed,
                    ratio,
                ))),
                Err(DegradeError::TooSilent { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_, DegradeError>>()?;

    let mut build = CorpusBuild::default();
    for (clip, result) in clips.iter().zip(results) {
        match result {
            Some((item, clip_seed, ratio)) => {
                let plan = item.plan.as_ref().expect("blind items carry a plan");
                build.manifest.push(ManifestRow {
                    clip_id: clip.clip_id.clone(),
                    source_file: clip.source_file.clone(),
                    seed: clip_seed,
                    trace_plan: plan.segments_field(),
                    silence_ratio: ratio,
                    subset_draws: plan
                        .subset_draws()
                        .iter()
                        .map(|s| s.number().to_string())
                        .collect::<Vec<_>>()
                        .join(";"),
                });
                build.items.push(item);
            }
            None => {
                let ratio = silence_ratio(&clip.audio)?;
                build.discarded.push((clip.clip_id.clone(), ratio));
            }
        }
    }
    Ok(build)
}

pub fn write_manifest(rows: &[ManifestRow], path: impl AsRef<Path>) -> Result<(), DegradeError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn read_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestRow>, DegradeError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use crate::trace_model::parse_trace;
    use proptest::prelude::*;

    fn noise(len: usize, seed: u64) -> Waveform {
        let mut rng = SeededRng::new(seed);
        Waveform::new((0..len).map(|_| 0.5 * rng.symmetric()).collect(), 44_100)
    }

    #[test]
    fn zero_fills_lost_packets_only() {
        let clean = noise(2 * PACKET_SIZE, 1);
        let lossy = apply_zero_fill(&clean, &parse_trace("01").unwrap()).unwrap();
        assert_eq!(lossy.audio.packet(0), clean.packet(0));
        assert!(lossy.audio.packet(1).iter().all(|&s| s == 0.0));
    }

    #[test]
    fn all_received_is_identity() {
        let clean = noise(5 * PACKET_SIZE + 17, 2);
        let lossy = apply_zero_fill(&clean, &parse_trace("00000").unwrap()).unwrap();
        assert_eq!(lossy.audio, clean);
    }

    #[test]
    fn tail_is_untouched() {
        let clean = noise(2 * PACKET_SIZE + 40, 3);
        let lossy = apply_zero_fill(&clean, &parse_trace("11").unwrap()).unwrap();
        assert_eq!(
            lossy.audio.samples[2 * PACKET_SIZE..],
            clean.samples[2 * PACKET_SIZE..]
        );
        assert_eq!(lossy.audio.len(), clean.len());
    }

    #[test]
    fn mismatched_trace_is_rejected() {
        let clean = noise(3 * PACKET_SIZE, 4);
        assert!(matches!(
            apply_zero_fill(&clean, &parse_trace("01").unwrap()),
            Err(DegradeError::TraceMismatch {
                trace: 2,
                packets: 3
            })
        ));
    }

    #[test]
    fn removed_energy_equals_lost_energy() {
        let clean = noise(8 * PACKET_SIZE, 5);
        let trace = parse_trace("01100101").unwrap();
        let lossy = apply_zero_fill(&clean, &trace).unwrap();
        let diff: f64 = clean
            .samples
            .iter()
            .zip(&lossy.audio.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        assert_eq!(diff, lost_energy(&clean, &trace));
    }

    fn pools() -> TracePools {
        TracePools::classify([
            parse_trace("0010000100").unwrap().with_id("s1a"),
            parse_trace("0000000").unwrap().with_id("s1b"),
            parse_trace("0011111111000").unwrap().with_id("s2a"),
        ])
        .0
    }

    #[test]
    fn silence_gate_rejects_quiet_clips() {
        // 31% of windows silent
        let mut clean = noise(44_100, 6);
        let cut = (0.31 * 44_100.0) as usize + 441;
        clean.samples[..cut].fill(0.0);
        let ratio = silence_ratio(&clean).unwrap();
        assert!(ratio > 0.30 && ratio < 0.33, "{ratio}");
        assert!(matches!(
            build_blind_item(&clean, &pools(), 1),
            Err(DegradeError::TooSilent { .. })
        ));
    }

    #[test]
    fn blind_item_is_deterministic() {
        let clean = noise(40 * PACKET_SIZE, 7);
        let a = build_blind_item(&clean, &pools(), 99).unwrap();
        let b = build_blind_item(&clean, &pools(), 99).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trace.len(), 40);
        assert!(a.plan.unwrap().is_valid());
    }

    #[test]
    fn corpus_emits_one_record_per_kept_clip() {
        let mut clips: Vec<SourceClip> = (0..162)
            .map(|i| SourceClip {
                clip_id: format!("clip{i:03}"),
                source_file: "session.wav".into(),
                audio: noise(20 * PACKET_SIZE, i),
            })
            .collect();
        let build = build_corpus(&clips, &pools(), 2024).unwrap();
        assert_eq!(build.manifest.len(), 162);
        assert_eq!(build.items.len(), 162);

        clips.push(SourceClip {
            clip_id: "quiet".into(),
            source_file: "session.wav".into(),
            audio: Waveform::silent(20 * PACKET_SIZE, 44_100),
        });
        let again = build_corpus(&clips, &pools(), 2024).unwrap();
        assert_eq!(again.manifest[..], build.manifest[..]);
        assert_eq!(again.discarded, vec![("quiet".to_string(), 1.0)]);
    }

    #[test]
    fn manifest_round_trip() {
        let clips: Vec<SourceClip> = (0..3)
            .map(|i| SourceClip {
                clip_id: format!("c{i}"),
                source_file: "x.wav".into(),
                audio: noise(30 * PACKET_SIZE, i),
            })
            .collect();
        let build = build_corpus(&clips, &pools(), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("manifest.csv");
        write_manifest(&build.manifest, &path).unwrap();
        assert_eq!(read_manifest(&path).unwrap(), build.manifest);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("clip_id,source_file,seed,trace_plan,silence_ratio,subset_draws"));
    }

    #[test]
    fn segmentation_drops_partial_window() {
        let w = Waveform::silent(2 * CLIP_SAMPLES + 1000, 44_100);
        let clips = segment_recording(&w);
        assert_eq!(clips.len(), 2);
        assert!(clips.iter().all(|c| c.len() == CLIP_SAMPLES));
    }

    proptest! {
        #[test]
        fn zero_fill_is_idempotent(flags in prop::collection::vec(any::<bool>(), 1..12), seed in any::<u64>()) {
            let clean = noise(flags.len() * PACKET_SIZE + 3, seed);
            let trace = PacketTrace::new(flags);
            let once = apply_zero_fill(&clean, &trace).unwrap();
            let twice = apply_zero_fill(&once.audio, &trace).unwrap();
            prop_assert_eq!(once.audio, twice.audio);
        }
    }
}
