//! Packet-loss traces: parsing, burst statistics, subset classification and
//! the seeded sampling used to cover a clip with up to three traces.
//!
//! A trace is a string of binary digits, one per 512-sample packet: `0` for a
//! received packet, `1` for a lost one. Whitespace is ignored.

use std::fmt;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

/// Longest burst a trace may contain and still belong to a subset.
pub const MAX_CLASSIFIED_BURST: usize = 50;

/// Most traces concatenated to cover one clip.
pub const MAX_PLAN_SEGMENTS: usize = 3;

#[derive(Debug, thiserror::Error)]
pub enum TraceError {
    #[error("invalid character {found:?} at offset {offset}")]
    Parse { offset: usize, found: char },
    #[error("trace contains no packet digits")]
    Empty,
    #[error("max burst {0} exceeds {MAX_CLASSIFIED_BURST} packets")]
    BurstOutOfRange(usize),
    #[error("trace pool for {0} is empty")]
    EmptyPool(SubsetLabel),
    #[error("malformed trace plan: {0}")]
    MalformedPlan(String),
    #[error("unknown trace id {0:?}")]
    UnknownTrace(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketTrace {
    /// `true` marks a lost packet.
    pub flags: Vec<bool>,
    pub source_id: Option<String>,
}

impl PacketTrace {
    pub fn new(flags: Vec<bool>) -> Self {
        Self {
            flags,
            source_id: None,
        }
    }

    pub fn with_id(mut self, id: impl Into<String>) -> Self {
        self.source_id = Some(id.into());
        self
    }

    pub fn len(&self) -> usize {
        self.flags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flags.is_empty()
    }

    pub fn lost_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// Identifier used in plan files; anonymous traces serialize as their digits.
    pub fn id(&self) -> String {
        self.source_id.clone().unwrap_or_else(|| self.to_digits())
    }

    pub fn to_digits(&self) -> String {
        self.flags
            .iter()
            .map(|&f| if f { '1' } else { '0' })
            .collect()
    }

    pub fn burst_stats(&self) -> BurstStats {
        burst_stats(self)
    }
}

impl fmt::Display for PacketTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_digits())
    }
}

impl std::str::FromStr for PacketTrace {
    type Err = TraceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_trace(s)
    }
}

pub fn parse_trace(text: &str) -> Result<PacketTrace, TraceError> {
    let mut flags = Vec::with_capacity(text.len());
    for (offset, c) in text.chars().enumerate() {
        match c {
            '0' => flags.push(false),
            '1' => flags.push(true),
            c if c.is_whitespace() => {}
            found => return Err(TraceError::Parse { offset, found }),
        }
    }
    if flags.is_empty() {
        return Err(TraceError::Empty);
    }
    Ok(PacketTrace::new(flags))
}

/// Loss statistics of a trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BurstStats {
    pub loss_rate: f64,
    /// Lengths of maximal runs of lost packets, left to right.
    pub burst_lengths: Vec<usize>,
    pub max_burst: usize,
}

pub fn burst_stats(t: &PacketTrace) -> BurstStats {
    let mut bursts = Vec::new();
    let mut run = 0;
    for &lost in &t.flags {
        if lost {
            run += 1;
        } else if run > 0 {
            bursts.push(run);
            run = 0;
        }
    }
    if run > 0 {
        bursts.push(run);
    }
    let lost: usize = bursts.iter().sum();
    BurstStats {
        loss_rate: if t.is_empty() {
            0.0
        } else {
            lost as f64 / t.len() as f64
        },
        max_burst: bursts.iter().copied().max().unwrap_or(0),
        burst_lengths: bursts,
    }
}

/// Trace subsets keyed on the longest loss burst: 0-6, 7-16 and 17-50 packets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubsetLabel {
    Subset1,
    Subset2,
    Subset3,
}

impl SubsetLabel {
    pub fn for_max_burst(max_burst: usize) -> Result<Self, TraceError> {
        match max_burst {
            0..=6 => Ok(Self::Subset1),
            7..=16 => Ok(Self::Subset2),
            17..=MAX_CLASSIFIED_BURST => Ok(Self::Subset3),
            n => Err(TraceError::BurstOutOfRange(n)),
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::Subset1 => 1,
            Self::Subset2 => 2,
            Self::Subset3 => 3,
        }
    }
}

impl fmt::Display for SubsetLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "subset{}", self.number())
    }
}

pub fn classify_subset(s: &BurstStats) -> Result<SubsetLabel, TraceError> {
    SubsetLabel::for_max_burst(s.max_burst)
}

/// Traces grouped by subset.
#[derive(Debug, Clone, Default)]
pub struct TracePools {
    pub subset1: Vec<PacketTrace>,
    pub subset2: Vec<PacketTrace>,
    pub subset3: Vec<PacketTrace>,
}

impl TracePools {
    /// Classifies each trace into its pool. Traces with bursts longer than 50
    /// packets belong to no subset and are returned separately.
    pub fn classify(traces: impl IntoIterator<Item = PacketTrace>) -> (Self, Vec<PacketTrace>) {
        let mut pools = Self::default();
        let mut rejected = Vec::new();
        for t in traces {
            match classify_subset(&t.burst_stats()) {
                Ok(label) => pools.pool_mut(label).push(t),
                Err(_) => rejected.push(t),
            }
        }
        (pools, rejected)
    }

    pub fn pool(&self, label: SubsetLabel) -> &[PacketTrace] {
        match label {
            SubsetLabel::Subset1 => &self.subset1,
            SubsetLabel::Subset2 => &self.subset2,
            SubsetLabel::Subset3 => &self.subset3,
        }
    }

    fn pool_mut(&mut self, label: SubsetLabel) -> &mut Vec<PacketTrace> {
        match label {
            SubsetLabel::Subset1 => &mut self.subset1,
            SubsetLabel::Subset2 => &mut self.subset2,
            SubsetLabel::Subset3 => &mut self.subset3,
        }
    }

    pub fn find(&self, id: &str) -> Option<&PacketTrace> {
        self.subset1
            .iter()
            .chain(&self.subset2)
            .chain(&self.subset3)
            .find(|t| t.id() == id)
    }
}

/// Probability of drawing from Subset 1 vs Subset 2. Subset 3 is never drawn.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SubsetWeights {
    pub subset1: f64,
    pub subset2: f64,
}

impl Default for SubsetWeights {
    fn default() -> Self {
        Self {
            subset1: 0.9,
            subset2: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanSegment {
    pub trace: PacketTrace,
    pub subset: SubsetLabel,
    /// Packets taken from the trace. May exceed the trace length only on the
    /// final segment, in which case the trace is cycled.
    pub packets: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePlan {
    pub clip_packets: usize,
    pub segments: Vec<PlanSegment>,
    pub rng_seed: u64,
}

impl TracePlan {
    pub fn consumed(&self) -> usize {
        self.segments.iter().map(|s| s.packets).sum()
    }

    pub fn is_valid(&self) -> bool {
        self.consumed() == self.clip_packets
            && self.segments.len() <= MAX_PLAN_SEGMENTS
            && self.segments.iter().all(|s| !s.trace.is_empty())
    }

    pub fn subset_draws(&self) -> Vec<SubsetLabel> {
        self.segments.iter().map(|s| s.subset).collect()
    }

    /// `seed, clip_packets, trace_id:count, ...`
    pub fn to_line(&self) -> String {
        let mut line = format!("{}, {}", self.rng_seed, self.clip_packets);
        for s in &self.segments {
            line.push_str(&format!(", {}:{}", s.trace.id(), s.packets));
        }
        line
    }

    /// Segments as `trace_id:count` joined by `;`, for CSV cells.
    pub fn segments_field(&self) -> String {
        self.segments
            .iter()
            .map(|s| format!("{}:{}", s.trace.id(), s.packets))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// A parsed plan line whose trace ids are not yet resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlanRecord {
    pub seed: u64,
    pub clip_packets: usize,
    pub segments: Vec<(String, usize)>,
}

impl PlanRecord {
    pub fn parse(line: &str) -> Result<Self, TraceError> {
        let bad = |msg: &str| TraceError::MalformedPlan(format!("{msg} in {line:?}"));
        let mut fields = line.split(',').map(str::trim);
        let seed = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("bad seed"))?;
        let clip_packets = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| bad("bad clip_packets"))?;
        let segments = fields
            .filter(|f| !f.is_empty())
            .map(|f| {
                let (id, count) = f
                    .rsplit_once(':')
                    .ok_or_else(|| bad("segment without count"))?;
                let count = count.parse().map_err(|_| bad("bad segment count"))?;
                Ok((id.to_string(), count))
            })
            .collect::<Result<Vec<_>, _>>()?;
        if segments.len() > MAX_PLAN_SEGMENTS {
            return Err(bad("more than three segments"));
        }
        if segments.iter().map(|s| s.1).sum::<usize>() != clip_packets {
            return Err(bad("segment counts do not sum to clip_packets"));
        }
        Ok(Self {
            seed,
            clip_packets,
            segments,
        })
    }

    pub fn resolve(&self, pools: &TracePools) -> Result<TracePlan, TraceError> {
        let segments = self
            .segments
            .iter()
            .map(|(id, packets)| {
                let trace = match pools.find(id) {
                    Some(t) => t.clone(),
                    // anonymous traces are stored by their digits
                    None => parse_trace(id).map_err(|_| TraceError::UnknownTrace(id.clone()))?,
                };
                let subset = classify_subset(&trace.burst_stats())?;
                Ok(PlanSegment {
                    trace,
                    subset,
                    packets: *packets,
                })
            })
            .collect::<Result<Vec<_>, TraceError>>()?;
        Ok(TracePlan {
            clip_packets: self.clip_packets,
            segments,
            rng_seed: self.seed,
        })
    }
}

pub fn sample_trace_plan(
    clip_packets: usize,
    pools: &TracePools,
    seed: u64,
) -> Result<TracePlan, TraceError> {
    sample_trace_plan_weighted(clip_packets, pools, SubsetWeights::default(), seed)
}

/// Draws traces i.i.d. (subset by weight, then uniform within the pool) and
/// concatenates them until the clip is covered, truncating the last one.
/// If three traces fall short, the third is cycled to cover the remainder.
pub fn sample_trace_plan_weighted(
    clip_packets: usize,
    pools: &TracePools,
    weights: SubsetWeights,
    seed: u64,
) -> Result<TracePlan, TraceError> {
    for (label, w) in [
        (SubsetLabel::Subset1, weights.subset1),
        (SubsetLabel::Subset2, weights.subset2),
    ] {
        if w > 0.0 && pools.pool(label).is_empty() {
            return Err(TraceError::EmptyPool(label));
        }
    }
    let p1 = weights.subset1 / (weights.subset1 + weights.subset2);

    let mut rng = SeededRng::new(seed);
    let mut segments: Vec<PlanSegment> = Vec::new();
    let mut remaining = clip_packets;
    while remaining > 0 && segments.len() < MAX_PLAN_SEGMENTS {
        let subset = if rng.unit_f64() < p1 {
            SubsetLabel::Subset1
        } else {
            SubsetLabel::Subset2
        };
        let pool = pools.pool(subset);
        let trace = &pool[rng.below(pool.len() as u64) as usize];
        let packets = trace.len().min(remaining);
        remaining -= packets;
        segments.push(PlanSegment {
            trace: trace.clone(),
            subset,
            packets,
        });
    }
    if let Some(last) = segments.last_mut() {
        last.packets += remaining;
    }
    Ok(TracePlan {
        clip_packets,
        segments,
        rng_seed: seed,
    })
}

/// Flattens a plan into one trace of exactly `clip_packets` flags.
pub fn realize_plan(p: &TracePlan) -> PacketTrace {
    let mut flags = Vec::with_capacity(p.clip_packets);
    for seg in &p.segments {
        flags.extend(seg.trace.flags.iter().copied().cycle().take(seg.packets));
    }
    flags.truncate(p.clip_packets);
    PacketTrace::new(flags)
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<PacketTrace, TraceError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(parse_trace(&text)?.with_id(id))
}

pub fn write_trace(t: &PacketTrace, path: impl AsRef<Path>) -> Result<(), TraceError> {
    let path = path.as_ref();
    fs::write(path, t.to_digits() + "\n").map_err(|source| TraceError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads every `*.txt` trace in a directory, sorted by file name.
pub fn read_trace_dir(dir: impl AsRef<Path>) -> Result<Vec<PacketTrace>, TraceError> {
    let dir = dir.as_ref();
    let io = |source| TraceError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(io)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    paths.iter().map(read_trace).collect()
}
