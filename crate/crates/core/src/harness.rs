//! Corpus-level evaluation of concealment systems.
//!
//! Plays the organizer: every system's output for every clip is scored
//! against the private clean reference, then per-metric means are compared
//! across systems.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio_io::{read_wav, resample, write_wav, AudioError, Waveform};
use crate::conceal::{conceal_clip, ConcealError, ConcealerKind, EngineConfig};
use crate::degrade::{read_manifest, DegradeError, LossyClip};
use crate::metrics::{evaluate_clip, Metric, MetricError, MetricReport};
use crate::trace_model::{read_trace, write_trace, TraceError};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("system {system}: no enhanced file for clip {clip_id} ({path})")]
    MissingEnhanced {
        system: String,
        clip_id: String,
        path: String,
    },
    #[error(
        "system {system}, clip {clip_id}: {got} Hz does not match the reference's {expected} Hz"
    )]
    RateMismatch {
        system: String,
        clip_id: String,
        expected: u32,
        got: u32,
    },
    #[error("system {system}, clip {clip_id}: {got} samples but the lossy input has {expected}")]
    LengthMismatch {
        system: String,
        clip_id: String,
        expected: usize,
        got: usize,
    },
    #[error("reports cover different corpora ({0} vs {1})")]
    CorpusMismatch(String, String),
    #[error("clip {clip_id}: {source}")]
    Metric {
        clip_id: String,
        source: MetricError,
    },
    #[error("clip {clip_id}: {source}")]
    Conceal {
        clip_id: String,
        source: ConcealError,
    },
    #[error("{path}: {source}")]
    Audio { path: String, source: AudioError },
    #[error(transparent)]
    Degrade(#[from] DegradeError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Where a system's enhanced clips come from.
#[derive(Debug, Clone)]
pub enum SystemSource {
    /// Run a built-in concealer through the causal engine.
    BuiltIn(ConcealerKind),
    /// A submission: one `<clip_id>.wav` per clip.
    Directory(PathBuf),
    /// Pre-computed outputs keyed by clip id.
    InMemory(BTreeMap<String, Waveform>),
}

#[derive(Debug, Clone)]
pub struct SystemUnderTest {
    pub name: String,
    pub source: SystemSource,
}

impl SystemUnderTest {
    pub fn built_in(kind: ConcealerKind) -> Self {
        Self {
            name: kind.name().to_string(),
            source: SystemSource::BuiltIn(kind),
        }
    }

    pub fn directory(name: impl Into<String>, dir: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            source: SystemSource::Directory(dir.into()),
        }
    }
}

/// A clean reference with its degraded counterpart.
#[derive(Debug, Clone)]
pub struct CorpusItem {
    pub clip_id: String,
    pub clean: Waveform,
    pub lossy: LossyClip,
}

/// One `per_clip.csv` line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRow {
    pub clip_id: String,
    pub system: String,
    pub mse: f64,
    pub sdr_db: f64,
    pub si_sdr_db: f64,
    pub lsd: f64,
    pub mcd: f64,
}

impl ClipRow {
    fn new(clip_id: &str, system: &str, r: &MetricReport) -> Self {
        Self {
            clip_id: clip_id.to_string(),
            system: system.to_string(),
            mse: r.mse,
            sdr_db: r.sdr_db,
            si_sdr_db: r.si_sdr_db,
            lsd: r.lsd,
            mcd: r.mcd,
        }
    }

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

/// Per-metric values in [`Metric::ALL`] order.
pub type PerMetric<T> = [T; 5];

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusReport {
    pub system: String,
    pub per_clip: Vec<ClipRow>,
    /// Means over finite values; NaN when a metric has none.
    pub means: PerMetric<f64>,
    /// Number of infinite values excluded from each mean.
    pub infinite_counts: PerMetric<usize>,
    /// Processing time over audio duration, for built-in systems.
    pub rtf: Option<f64>,
}

impl CorpusReport {
    pub fn from_rows(system: impl Into<String>, per_clip: Vec<ClipRow>, rtf: Option<f64>) -> Self {
        let mut means = [f64::NAN; 5];
        let mut infinite_counts = [0; 5];
        for (i, metric) in Metric::ALL.iter().enumerate() {
            let values: Vec<f64> = per_clip.iter().map(|r| r.get(*metric)).collect();
            let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
            infinite_counts[i] = values.iter().filter(|v| v.is_infinite()).count();
            if !finite.is_empty() {
                means[i] = finite.iter().sum::<f64>() / finite.len() as f64;
            }
        }
        Self {
            system: system.into(),
            per_clip,
            means,
            infinite_counts,
            rtf,
        }
    }

    pub fn mean(&self, metric: Metric) -> f64 {
        self.means[metric_index(metric)]
    }

    fn clip_ids(&self) -> BTreeSet<&str> {
        self.per_clip.iter().map(|r| r.clip_id.as_str()).collect()
    }
}

fn metric_index(metric: Metric) -> usize {
    Metric::ALL
        .iter()
        .position(|m| *m == metric)
        .expect("listed")
}

/// Produces the system's enhanced clip and, for built-ins, the seconds spent.
fn enhance(
    sut: &SystemUnderTest,
    item: &CorpusItem,
    config: &EngineConfig,
) -> Result<(Waveform, Option<f64>), HarnessError> {
    let clip_id = &item.clip_id;
    let (estimate, elapsed) = match &sut.source {
        SystemSource::BuiltIn(kind) => {
            let start = Instant::now();
            let out = conceal_clip(&item.lossy.audio, &item.lossy.trace, config, *kind).map_err(
                |source| HarnessError::Conceal {
                    clip_id: clip_id.clone(),
                    source,
                },
            )?;
            (out, Some(start.elapsed().as_secs_f64()))
        }
        SystemSource::Directory(dir) => {
            let path = dir.join(format!("{clip_id}.wav"));
            if !path.exists() {
                return Err(HarnessError::MissingEnhanced {
                    system: sut.name.clone(),
                    clip_id: clip_id.clone(),
                    path: path.display().to_string(),
                });
            }
            let w = read_wav(&path).map_err(|source| HarnessError::Audio {
                path: path.display().to_string(),
                source,
            })?;
            (w, None)
        }
        SystemSource::InMemory(map) => {
            let w = map
                .get(clip_id)
                .cloned()
                .ok_or_else(|| HarnessError::MissingEnhanced {
                    system: sut.name.clone(),
                    clip_id: clip_id.clone(),
                    path: "<memory>".into(),
                })?;
            (w, None)
        }
    };
    if estimate.sample_rate != item.clean.sample_rate {
        return Err(HarnessError::RateMismatch {
            system: sut.name.clone(),
            clip_id: clip_id.clone(),
            expected: item.clean.sample_rate,
            got: estimate.sample_rate,
        });
    }
    if estimate.len() != item.lossy.audio.len() {
        return Err(HarnessError::LengthMismatch {
            system: sut.name.clone(),
            clip_id: clip_id.clone(),
            expected: item.lossy.audio.len(),
            got: estimate.len(),
        });
    }
    Ok((estimate, elapsed))
}

/// Scores one system on every clip. `jobs > 1` evaluates clips in parallel;
/// each clip is still concealed on a single thread.
pub fn evaluate_system(
    sut: &SystemUnderTest,
    corpus: &[CorpusItem],
    config: &EngineConfig,
    jobs: usize,
) -> Result<CorpusReport, HarnessError> {
    if corpus.is_empty() {
        return Err(HarnessError::EmptyCorpus);
    }
    let score = |item: &CorpusItem| -> Result<(ClipRow, Option<f64>), HarnessError> {
        let (estimate, elapsed) = enhance(sut, item, config)?;
        let report =
            evaluate_clip(&item.clean, &estimate).map_err(|source| HarnessError::Metric {
                clip_id: item.clip_id.clone(),
                source,
            })?;
        Ok((ClipRow::new(&item.clip_id, &sut.name, &report), elapsed))
    };
    let results: Vec<(ClipRow, Option<f64>)> = if jobs > 1 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .expect("thread pool")
            .install(|| corpus.par_iter().map(score).collect::<Result<_, _>>())?
    } else {
        corpus.iter().map(score).collect::<Result<_, _>>()?
    };

    let rtf = matches!(sut.source, SystemSource::BuiltIn(_)).then(|| {
        let busy: f64 = results.iter().filter_map(|r| r.1).sum();
        let audio: f64 = corpus.iter().map(|c| c.lossy.audio.duration()).sum();
        busy / audio
    });
    let mut rows: Vec<ClipRow> = results.into_iter().map(|r| r.0).collect();
    rows.sort_by(|a, b| a.clip_id.cmp(&b.clip_id));
    Ok(CorpusReport::from_rows(sut.name.clone(), rows, rtf))
}

/// Wall-clock time to conceal `clip` divided by its duration; median of 3 runs.
pub fn measure_rtf(
    kind: ConcealerKind,
    clip: &LossyClip,
    config: &EngineConfig,
) -> Result<f64, ConcealError> {
    let mut runs = Vec::with_capacity(3);
    for _ in 0..3 {
        let start = Instant::now();
        conceal_clip(&clip.audio, &clip.trace, config, kind)?;
        runs.push(start.elapsed().as_secs_f64() / clip.audio.duration());
    }
    runs.sort_by(f64::total_cmp);
    Ok(runs[1])
}

pub fn format_rtf(rtf: f64) -> String {
    format!("{rtf:.3}")
}

/// Systems side by side, one row per system.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<CorpusReport>,
    /// Row index of the best mean for each metric.
    pub best: PerMetric<Option<usize>>,
}

pub fn aggregate(reports: &[CorpusReport]) -> Result<ComparisonTable, HarnessError> {
    if let Some(first) = reports.first() {
        let ids = first.clip_ids();
        for r in &reports[1..] {
            if r.clip_ids() != ids || r.per_clip.len() != first.per_clip.len() {
                return Err(HarnessError::CorpusMismatch(
                    first.system.clone(),
                    r.system.clone(),
                ));
            }
        }
    }
    let mut best = [None; 5];
    for (i, metric) in Metric::ALL.iter().enumerate() {
        best[i] = reports
            .iter()
            .enumerate()
            .filter(|(_, r)| !r.means[i].is_nan())
            .max_by(|(_, a), (_, b)| {
                let ord = a.means[i].total_cmp(&b.means[i]);
                if metric.higher_is_better() {
                    ord
                } else {
                    ord.reverse()
                }
            })
            .map(|(idx, _)| idx);
    }
    Ok(ComparisonTable {
        rows: reports.to_vec(),
        best,
    })
}

#[derive(Debug, Serialize)]
struct SummaryRow<'a> {
    system: &'a str,
    clips: usize,
    mse: f64,
    sdr_db: f64,
    si_sdr_db: f64,
    lsd: f64,
    mcd: f64,
    inf_sdr: usize,
    inf_si_sdr: usize,
    rtf: String,
}

impl ComparisonTable {
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.rows {
            w.serialize(SummaryRow {
                system: &r.system,
                clips: r.per_clip.len(),
                mse: r.means[0],
                sdr_db: r.means[1],
                si_sdr_db: r.means[2],
                lsd: r.means[3],
                mcd: r.means[4],
                inf_sdr: r.infinite_counts[1],
                inf_si_sdr: r.infinite_counts[2],
                rtf: r.rtf.map(format_rtf).unwrap_or_default(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    /// Markdown table of means; the best value per column is bold.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| system | MSE | SDR (dB) | SI-SDR (dB) | LSD | MCD | RTF |\n");
        out.push_str("|---|---|---|---|---|---|---|\n");
        for (row_idx, r) in self.rows.iter().enumerate() {
            let _ = write!(out, "| {} ", r.system);
            for (i, metric) in Metric::ALL.iter().enumerate() {
                let v = r.means[i];
                let cell = match metric {
                    Metric::Mse => format!("{v:.3e}"),
                    _ => format!("{v:.3}"),
                };
                if self.best[i] == Some(row_idx) {
                    let _ = write!(out, "| **{cell}** ");
                } else {
                    let _ = write!(out, "| {cell} ");
                }
            }
            let rtf = r.rtf.map(format_rtf).unwrap_or_else(|| "-".into());
            let _ = writeln!(out, "| {rtf} |");
        }
        out
    }
}

pub fn write_per_clip_csv(
    reports: &[CorpusReport],
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    for row in reports.iter().flat_map(|r| &r.per_clip) {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_per_clip_csv(path: impl AsRef<Path>) -> Result<Vec<ClipRow>, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

/// Scores from external tools (e.g. PEAQ ODG, PLCMOS) keyed by (clip_id, system).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ExternalScores {
    pub columns: Vec<String>,
    pub values: BTreeMap<(String, String), Vec<String>>,
}

/// Reads a CSV with `clip_id,system` followed by any number of score columns.
pub fn read_external_scores(path: impl AsRef<Path>) -> Result<ExternalScores, HarnessError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let columns = headers.iter().skip(2).map(str::to_string).collect();
    let mut values = BTreeMap::new();
    for rec in r.records() {
        let rec = rec?;
        let key = (
            rec.get(0).unwrap_or("").to_string(),
            rec.get(1).unwrap_or("").to_string(),
        );
        values.insert(key, rec.iter().skip(2).map(str::to_string).collect());
    }
    Ok(ExternalScores { columns, values })
}

/// Writes `per_clip.csv` with the external score columns appended (blank when
/// a tool has no score for a row).
pub fn write_per_clip_with_external(
    reports: &[CorpusReport],
    external: &ExternalScores,
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = [
        "clip_id",
        "system",
        "mse",
        "sdr_db",
        "si_sdr_db",
        "lsd",
        "mcd",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend(external.columns.iter().cloned());
    w.write_record(&header)?;
    for row in reports.iter().flat_map(|r| &r.per_clip) {
        let mut rec = vec![
            row.clip_id.clone(),
            row.system.clone(),
            row.mse.to_string(),
            row.sdr_db.to_string(),
            row.si_sdr_db.to_string(),
            row.lsd.to_string(),
            row.mcd.to_string(),
        ];
        let extra = external
            .values
            .get(&(row.clip_id.clone(), row.system.clone()));
        for i in 0..external.columns.len() {
            rec.push(extra.and_then(|e| e.get(i)).cloned().unwrap_or_default());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// On-disk corpus layout shared by `degrade` and `eval`:
/// `manifest.csv`, `clean/<id>.wav`, `lossy/<id>.wav`, `traces/<id>.txt`.
#[derive(Debug, Clone)]
pub struct CorpusLayout {
    pub root: PathBuf,
}

impl CorpusLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.csv")
    }

    pub fn clean(&self, clip_id: &str) -> PathBuf {
        self.root.join("clean").join(format!("{clip_id}.wav"))
    }

    pub fn lossy(&self, clip_id: &str) -> PathBuf {
        self.root.join("lossy").join(format!("{clip_id}.wav"))
    }

    pub fn trace(&self, clip_id: &str) -> PathBuf {
        self.root.join("traces").join(format!("{clip_id}.txt"))
    }

    /// Writes one item's files (not the manifest).
    pub fn write_item(
        &self,
        clip_id: &str,
        clean: &Waveform,
        lossy: &LossyClip,
    ) -> Result<(), HarnessError> {
        for sub in ["clean", "lossy", "traces"] {
            std::fs::create_dir_all(self.root.join(sub))?;
        }
        let audio_err = |path: PathBuf| {
            move |source| HarnessError::Audio {
                path: path.display().to_string(),
                source,
            }
        };
        write_wav(clean, self.clean(clip_id)).map_err(audio_err(self.clean(clip_id)))?;
        write_wav(&lossy.audio, self.lossy(clip_id)).map_err(audio_err(self.lossy(clip_id)))?;
        write_trace(&lossy.trace, self.trace(clip_id))?;
        Ok(())
    }

    /// Loads every clip listed in the manifest, in manifest order.
    pub fn load(&self) -> Result<Vec<CorpusItem>, HarnessError> {
        let rows = read_manifest(self.manifest())?;
        if rows.is_empty() {
            return Err(HarnessError::EmptyCorpus);
        }
        rows.par_iter()
            .map(|row| {
                let id = &row.clip_id;
                let read = |path: PathBuf| {
                    read_wav(&path).map_err(|source| HarnessError::Audio {
                        path: path.display().to_string(),
                        source,
                    })
                };
                let clean = read(self.clean(id))?;
                let audio = read(self.lossy(id))?;
                let trace = read_trace(self.trace(id))?;
                Ok(CorpusItem {
                    clip_id: id.clone(),
                    clean,
                    lossy: LossyClip {
                        audio,
                        trace,
                        origin: row.source_file.clone(),
                        plan: None,
                    },
                })
            })
            .collect()
    }
}

/// Sample rates expected by the external PEAQ and PLCMOS tools.
pub const EXPORT_RATES: [u32; 2] = [48_000, 16_000];

/// Writes `<dir>/<rate>/<clip_id>.wav` for each export rate and returns the paths.
pub fn export_for_external_tools(
    w: &Waveform,
    clip_id: &str,
    dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>, HarnessError> {
    let mut paths = Vec::new();
    for rate in EXPORT_RATES {
        let sub = dir.as_ref().join(rate.to_string());
        std::fs::create_dir_all(&sub)?;
        let path = sub.join(format!("{clip_id}.wav"));
        let mut out = resample(w, rate);
        // Resampling can overshoot full scale slightly on clipped material.
        for s in &mut out.samples {
            *s = s.clamp(-1.0, 1.0);
        }
        write_wav(&out, &path).map_err(|source| HarnessError::Audio {
            path: path.display().to_string(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}
