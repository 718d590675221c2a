//! Toolkit for music packet loss concealment experiments.
//!
//! The pipeline mirrors a blind-set challenge: clean clips are degraded by
//! zero-filling the packets marked lost in measured traces, a strictly causal
//! engine conceals the gaps, objective metrics score the result against the
//! clean reference, and MUSHRA ratings decide the final ranking.
//!
//! All audio is mono, 44.1 kHz, and segmented into 512-sample packets.

pub mod audio_io;
pub mod conceal;
pub mod degrade;
pub mod harness;
pub mod metrics;
pub mod mushra;
pub mod rng;
pub mod trace_model;

pub use audio_io::{PacketGrid, Waveform};
pub use conceal::{ConcealEngine, ConcealerKind, EngineConfig};
pub use degrade::LossyClip;
pub use metrics::MetricReport;

pub use trace_model::{BurstStats, PacketTrace, SubsetLabel, TracePlan};

/// Samples per packet.
pub const PACKET_SIZE: usize = 512;

/// Sample rate of every challenge-pipeline input and output.
pub const CHALLENGE_SAMPLE_RATE: u32 = 44_100;

/// Toolkit version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Version tag of the line-oriented trace-plan format.
pub const TRACE_PLAN_FORMAT: &str = "trace-plan/1";

/// Version tag of the JSON-lines rating store format.
pub const RATINGS_FORMAT: &str = "ratings/1";

/// Version tag of the corpus manifest CSV.
pub const MANIFEST_FORMAT: &str = "manifest/1";
