//! Strictly causal packet loss concealment.
//!
//! [`ConcealEngine`] consumes one packet event at a time and emits exactly one
//! packet of output per event. Nothing after the current event is visible to
//! it. Lost packets are synthesized by the selected concealer; predictions
//! carry a surplus tail that is crossfaded into whatever packet comes next,
//! received or predicted.

mod lpc;

pub use lpc::{
    autocorrelation, fit_ar, fit_ar_windowed, levinson_durbin, predict_packet, AnalysisWindow,
    ArModel, LevinsonSolution,
};

use std::fmt;
use std::str::FromStr;

use crate::audio_io::Waveform;
use crate::trace_model::PacketTrace;
use crate::PACKET_SIZE;

#[derive(Debug, thiserror::Error)]
pub enum ConcealError {
    #[error("invalid engine configuration: {0}")]
    InvalidConfig(String),
    #[error("context of {len} samples is too short for order {order} (need {})", 2 * order)]
    ContextTooShort { len: usize, order: usize },
    #[error("non-finite sample at context index {0}")]
    NonFinite(usize),
    #[error("crossfade of {fade} samples exceeds input of {available}")]
    FadeTooLong { fade: usize, available: usize },
    #[error("event {got} out of order (expected {expected})")]
    OutOfOrder { expected: u64, got: u64 },
    #[error("payload of {got} samples (expected {expected})")]
    PayloadLength { expected: usize, got: usize },
    #[error("residual predictor returned {got} samples (expected {expected})")]
    ResidualLength { expected: usize, got: usize },
    #[error("trace has {trace} packets but the clip has {packets}")]
    TraceMismatch { trace: usize, packets: usize },
    #[error("unknown concealer {0:?} (expected zero, repeat or ar)")]
    UnknownConcealer(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub packet_size: usize,
    /// Packets of past output used as AR fitting context.
    pub context_packets: usize,
    pub ar_order: usize,
    /// Surplus prediction beyond the packet, consumed by the next crossfade.
    pub extra_pred: usize,
    pub crossfade_len: usize,
    /// Relative diagonal loading of the zero-lag autocorrelation.
    pub noise_comp: f64,
    /// Taper applied to the context before fitting.
    pub ar_window: AnalysisWindow,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            packet_size: PACKET_SIZE,
            context_packets: 8,
            ar_order: 256,
            extra_pred: 256,
            crossfade_len: 256,
            noise_comp: 1e-6,
            ar_window: AnalysisWindow::Hann,
        }
    }
}

impl EngineConfig {
    pub fn context_len(&self) -> usize {
        self.context_packets * self.packet_size
    }

    /// Samples produced per prediction.
    pub fn horizon(&self) -> usize {
        self.packet_size + self.extra_pred
    }

    /// Same configuration with the crossfade (and its surplus tail) disabled.
    pub fn without_crossfade(mut self) -> Self {
        self.extra_pred = 0;
        self.crossfade_len = 0;
        self
    }

    pub fn validate(&self) -> Result<(), ConcealError> {
        let bad = |m: String| Err(ConcealError::InvalidConfig(m));
        if self.packet_size == 0 {
            return bad("packet size must be positive".into());
        }
        if self.ar_order == 0 || self.ar_order >= self.context_len() {
            return bad(format!(
                "AR order {} must be in 1..{}",
                self.ar_order,
                self.context_len()
            ));
        }
        if 2 * self.ar_order > self.context_len() {
            return bad(format!(
                "context of {} samples is too short for order {}",
                self.context_len(),
                self.ar_order
            ));
        }
        if self.extra_pred != self.crossfade_len {
            return bad(format!(
                "extra prediction ({}) must equal crossfade length ({})",
                self.extra_pred, self.crossfade_len
            ));
        }
        if self.crossfade_len > self.packet_size {
            return bad("crossfade longer than a packet".into());
        }
        if self.noise_comp.is_nan() || self.noise_comp < 0.0 {
            return bad("noise compensation must be non-negative".into());
        }
        Ok(())
    }
}

/// Built-in concealment strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ConcealerKind {
    /// Silence; the listening-test anchor.
    ZeroFill,
    /// Repetition of the last packet before the loss. The k-th repeat is
    /// scaled by the least-squares gain of the context at a k-packet lag.
    Repeat,
    /// Autoregressive extrapolation from the recent output.
    Ar,
}

impl ConcealerKind {
    pub const ALL: [ConcealerKind; 3] = [Self::ZeroFill, Self::Repeat, Self::Ar];

    pub fn name(self) -> &'static str {
        match self {
            Self::ZeroFill => "zero",
            Self::Repeat => "repeat",
            Self::Ar => "ar",
        }
    }
}

impl fmt::Display for ConcealerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConcealerKind {
    type Err = ConcealError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" | "zero_fill" | "zero-fill" => Ok(Self::ZeroFill),
            "repeat" => Ok(Self::Repeat),
            "ar" => Ok(Self::Ar),
            other => Err(ConcealError::UnknownConcealer(other.to_string())),
        }
    }
}

/// One packet slot of the incoming stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketEvent {
    pub index: u64,
    /// `None` when the packet was lost.
    pub payload: Option<Vec<f64>>,
}

impl PacketEvent {
    pub fn received(index: u64, payload: Vec<f64>) -> Self {
        Self {
            index,
            payload: Some(payload),
        }
    }

    pub fn lost(index: u64) -> Self {
        Self {
            index,
            payload: None,
        }
    }

    pub fn is_lost(&self) -> bool {
        self.payload.is_none()
    }
}

/// Additive correction to the AR prediction, e.g. a neural residual model.
///
/// Receives the same context the AR model sees and must return exactly
/// `horizon` samples.
pub trait ResidualPredictor: Send {
    fn predict_residual(&mut self, packet_index: u64, context: &[f64], horizon: usize) -> Vec<f64>;
}

/// Default residual: pure AR concealment.
#[derive(Debug, Default, Clone, Copy)]
pub struct ZeroResidual;

impl ResidualPredictor for ZeroResidual {
    fn predict_residual(&mut self, _: u64, _: &[f64], horizon: usize) -> Vec<f64> {
        vec![0.0; horizon]
    }
}

/// Raised-cosine crossfade from `tail` into `incoming` over `fade_len` samples.
///
/// Output has the length of `incoming`; samples past the fade are copied.
/// Ramps are complementary, so identical inputs pass through exactly.
pub fn crossfade(
    tail: &[f64],
    incoming: &[f64],
    fade_len: usize,
) -> Result<Vec<f64>, ConcealError> {
    let available = tail.len().min(incoming.len());
    if fade_len > available {
        return Err(ConcealError::FadeTooLong {
            fade: fade_len,
            available,
        });
    }
    let mut out = incoming.to_vec();
    for (n, (o, &t)) in out.iter_mut().zip(tail).take(fade_len).enumerate() {
        let fade_in = fade_in_weight(n, fade_len);
        *o += (1.0 - fade_in) * (t - *o);
    }
    Ok(out)
}

/// Weight of the incoming signal at fade position `n`, strictly inside (0, 1).
fn fade_in_weight(n: usize, fade_len: usize) -> f64 {
    let x = (n + 1) as f64 / (fade_len + 1) as f64;
    0.5 - 0.5 * (std::f64::consts::PI * x).cos()
}

/// Pre-burst context for packet repetition.
struct RepeatBurst {
    context: Vec<f64>,
    lost: usize,
}

pub struct ConcealEngine {
    config: EngineConfig,
    kind: ConcealerKind,
    /// Last `context_len` output samples, oldest first.
    history: Vec<f64>,
    pending_tail: Option<Vec<f64>>,
    model: Option<ArModel>,
    repeat_burst: Option<RepeatBurst>,
    residual: Box<dyn ResidualPredictor>,
    next_index: u64,
}

impl fmt::Debug for ConcealEngine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ConcealEngine")
            .field("config", &self.config)
            .field("kind", &self.kind)
            .field("next_index", &self.next_index)
            .finish_non_exhaustive()
    }
}

impl ConcealEngine {
    pub fn new(config: EngineConfig, kind: ConcealerKind) -> Result<Self, ConcealError> {
        config.validate()?;
        Ok(Self {
            history: vec![0.0; config.context_len()],
            config,
            kind,
            pending_tail: None,
            model: None,
            repeat_burst: None,
            residual: Box::new(ZeroResidual),
            next_index: 0,
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn kind(&self) -> ConcealerKind {
        self.kind
    }

    /// Replaces the residual predictor added to AR predictions.
    pub fn attach_residual(&mut self, predictor: Box<dyn ResidualPredictor>) {
        self.residual = predictor;
    }

    /// Processes the next event and returns one packet of output.
    pub fn process(&mut self, event: &PacketEvent) -> Result<Vec<f64>, ConcealError> {
        if event.index != self.next_index {
            return Err(ConcealError::OutOfOrder {
                expected: self.next_index,
                got: event.index,
            });
        }
        let size = self.config.packet_size;
        let out = match &event.payload {
            Some(payload) => {
                if payload.len() != size {
                    return Err(ConcealError::PayloadLength {
                        expected: size,
                        got: payload.len(),
                    });
                }
                self.model = None;
                self.repeat_burst = None;
                match self.pending_tail.take() {
                    Some(tail) => crossfade(&tail, payload, self.config.crossfade_len)?,
                    None => payload.clone(),
                }
            }
            None => {
                let prediction = self.predict(event.index)?;
                let (head, tail) = prediction.split_at(size);
                let out = match self.pending_tail.take() {
                    Some(prev) => crossfade(&prev, head, self.config.crossfade_len)?,
                    None => head.to_vec(),
                };
                if !tail.is_empty() {
                    self.pending_tail = Some(tail.to_vec());
                }
                out
            }
        };
        self.history.drain(..size);
        self.history.extend_from_slice(&out);
        self.next_index += 1;
        Ok(out)
    }

    /// `packet_size + extra_pred` samples continuing the current history. The
    /// zero-fill anchor returns a bare silent packet, so it never crossfades.
    fn predict(&mut self, index: u64) -> Result<Vec<f64>, ConcealError> {
        let size = self.config.packet_size;
        let horizon = self.config.horizon();
        let mut prediction = match self.kind {
            ConcealerKind::ZeroFill => return Ok(vec![0.0; size]),
            ConcealerKind::Repeat => {
                // the k-th lost packet of a burst repeats the last packet
                // before the burst, which lies k packets back
                let burst = self.repeat_burst.get_or_insert_with(|| RepeatBurst {
                    context: self.history.clone(),
                    lost: 0,
                });
                burst.lost += 1;
                let gain = repetition_gain(&burst.context, burst.lost * size);
                let last = &burst.context[burst.context.len() - size..];
                last.iter()
                    .cycle()
                    .take(horizon)
                    .map(|s| gain * s)
                    .collect()
            }
            ConcealerKind::Ar => {
                // refit once per burst, then free-run on the growing history
                if self.model.is_none() {
                    self.model = Some(fit_ar_windowed(
                        &self.history,
                        self.config.ar_order,
                        self.config.noise_comp,
                        self.config.ar_window,
                    )?);
                }
                let model = self.model.as_ref().expect("fitted above");
                let mut pred = model.extrapolate(&self.history, horizon);
                let residual = self
                    .residual
                    .predict_residual(index, &self.history, horizon);
                if residual.len() != horizon {
                    return Err(ConcealError::ResidualLength {
                        expected: horizon,
                        got: residual.len(),
                    });
                }
                pred.iter_mut().zip(&residual).for_each(|(p, r)| *p += r);
                pred
            }
        };
        for s in &mut prediction {
            *s = if s.is_finite() {
                s.clamp(-1.0, 1.0)
            } else {
                0.0
            };
        }
        Ok(prediction)
    }
}

/// Least-squares gain for predicting `history` from itself one `lag` earlier,
/// clamped to [0, 1].
pub fn repetition_gain(history: &[f64], lag: usize) -> f64 {
    if history.len() <= lag {
        return 0.0;
    }
    let (dot, energy) = history[lag..]
        .iter()
        .zip(history)
        .fold((0.0, 0.0), |(d, e), (x, past)| {
            (d + x * past, e + past * past)
        });
    if energy > 0.0 {
        (dot / energy).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Runs a whole event stream through a fresh engine.
pub fn process_stream(
    events: &[PacketEvent],
    config: &EngineConfig,
    kind: ConcealerKind,
    sample_rate: u32,
) -> Result<Waveform, ConcealError> {
    let mut engine = ConcealEngine::new(config.clone(), kind)?;
    run_events(&mut engine, events, sample_rate)
}

/// Runs events through an existing engine (e.g. one with a residual attached).
pub fn run_events(
    engine: &mut ConcealEngine,
    events: &[PacketEvent],
    sample_rate: u32,
) -> Result<Waveform, ConcealError> {
    let mut samples = Vec::with_capacity(events.len() * engine.config.packet_size);
    for e in events {
        samples.extend(engine.process(e)?);
    }
    Ok(Waveform::new(samples, sample_rate))
}

/// Splits a lossy clip into packet events following its trace.
pub fn events_from_clip(
    lossy: &Waveform,
    trace: &PacketTrace,
    packet_size: usize,
) -> Result<Vec<PacketEvent>, ConcealError> {
    let packets = lossy.len() / packet_size;
    if trace.len() != packets {
        return Err(ConcealError::TraceMismatch {
            trace: trace.len(),
            packets,
        });
    }
    Ok(lossy
        .samples
        .chunks_exact(packet_size)
        .zip(&trace.flags)
        .enumerate()
        .map(|(i, (chunk, &lost))| {
            if lost {
                PacketEvent::lost(i as u64)
            } else {
                PacketEvent::received(i as u64, chunk.to_vec())
            }
        })
        .collect())
}

/// Conceals a zero-filled clip. The partial tail after the last whole packet
/// is copied through unchanged.
pub fn conceal_clip(
    lossy: &Waveform,
    trace: &PacketTrace,
    config: &EngineConfig,
    kind: ConcealerKind,
) -> Result<Waveform, ConcealError> {
    let mut engine = ConcealEngine::new(config.clone(), kind)?;
    conceal_clip_with(&mut engine, lossy, trace)
}

pub fn conceal_clip_with(
    engine: &mut ConcealEngine,
    lossy: &Waveform,
    trace: &PacketTrace,
) -> Result<Waveform, ConcealError> {
    let size = engine.config.packet_size;
    let events = events_from_clip(lossy, trace, size)?;
    let mut out = run_events(engine, &events, lossy.sample_rate)?;
    out.samples
        .extend_from_slice(&lossy.samples[events.len() * size..]);
    Ok(out)
}
