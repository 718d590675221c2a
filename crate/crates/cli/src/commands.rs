use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context};
use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use plc_lab::audio_io::{read_wav, resample, write_wav};
use plc_lab::conceal::{conceal_clip, ConcealerKind, EngineConfig};
use plc_lab::degrade::{
    apply_zero_fill, build_corpus, segment_recording, write_manifest, SourceClip, CLIP_SAMPLES,
};
use plc_lab::harness::{
    aggregate, evaluate_system, export_for_external_tools, read_external_scores,
    write_per_clip_csv, write_per_clip_with_external, CorpusItem, CorpusLayout, SystemUnderTest,
};
use plc_lab::mushra::{
    compute_ranking, read_ratings_csv, screen_assessors, write_ranking_csv, write_ratings_csv,
    write_trial_table_csv, RankingResult, RatingStore, SessionConfig, StimulusCatalog,
    StoredRating,
};
use plc_lab::rng::{derive_seed, SeededRng};
use plc_lab::trace_model::{read_trace, read_trace_dir, sample_trace_plan, TracePools};
use plc_lab::{PacketTrace, Waveform, CHALLENGE_SAMPLE_RATE};

use crate::config::effective_line;
use crate::server::{self, AppState, RESULTS_KEY_ENV};

#[derive(Debug, Parser)]
#[command(
    name = "plc-lab",
    about = "Music packet loss concealment lab",
    disable_version_flag = true
)]
pub struct Cli {
    /// key = value file mirroring the long flags; explicit flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Zero-fill clean audio with packet traces (one file, or a whole blind set).
    Degrade(DegradeArgs),
    /// Conceal lost packets in a zero-filled clip.
    Conceal(ConcealArgs),
    /// Score systems against clean references.
    Eval(EvalArgs),
    /// Rank systems from listening-test ratings.
    Rank(RankArgs),
    /// Classify traces into subsets and optionally sample trace plans.
    Traces(TracesArgs),
    /// Write a listening-test session definition.
    MushraBuild(MushraBuildArgs),
    /// Serve sessions, stimuli and rating submission over HTTP.
    MushraServe(MushraServeArgs),
    /// Export ratings, ranking and the per-trial table.
    MushraReport(MushraReportArgs),
}

#[derive(Debug, Args, Serialize)]
pub struct DegradeArgs {
    /// Clean WAV file, or a directory of them.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Single trace to apply to a single file.
    #[arg(long, conflicts_with = "traces")]
    pub trace: Option<PathBuf>,
    /// Directory of `.txt` traces to sample blind-set plans from.
    #[arg(long)]
    pub traces: Option<PathBuf>,
    /// Output WAV (with --trace) or corpus directory (with --traces).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct EngineArgs {
    #[arg(long, default_value_t = 8)]
    pub context_packets: usize,
    #[arg(long, default_value_t = 256)]
    pub ar_order: usize,
    #[arg(long, default_value_t = 256)]
    pub extra_pred: usize,
    #[arg(long, default_value_t = 256)]
    pub crossfade: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub noise_comp: f64,
}

impl EngineArgs {
    fn config(&self) -> anyhow::Result<EngineConfig> {
        let cfg = EngineConfig {
            context_packets: self.context_packets,
            ar_order: self.ar_order,
            extra_pred: self.extra_pred,
            crossfade_len: self.crossfade,
            noise_comp: self.noise_comp,
            ..EngineConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ConcealArgs {
    /// Zero-filled WAV (or, with --corpus, ignored).
    #[arg(long = "in", required_unless_present = "corpus")]
    pub input: Option<PathBuf>,
    #[arg(long, required_unless_present = "corpus")]
    pub trace: Option<PathBuf>,
    /// Conceal every lossy clip of a corpus directory into --out.
    #[arg(long, conflicts_with_all = ["input", "trace"])]
    pub corpus: Option<PathBuf>,
    /// zero, repeat or ar.
    #[arg(long, default_value = "ar")]
    pub method: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write 48 kHz and 16 kHz copies for external metrics.
    #[arg(long)]
    pub export: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct EvalArgs {
    /// Corpus directory written by `degrade`.
    #[arg(long, required_unless_present = "reference")]
    pub corpus: Option<PathBuf>,
    /// Directory of clean references (when no corpus directory is available).
    #[arg(long = "ref", conflicts_with = "corpus")]
    pub reference: Option<PathBuf>,
    /// Enhanced outputs: `NAME=DIR` or just `DIR` (named after the directory).
    #[arg(long)]
    pub est: Vec<String>,
    /// Built-in concealers to run (needs --corpus). Defaults to all three when
    /// no --est is given.
    #[arg(long)]
    pub method: Vec<String>,
    #[arg(long, default_value = "per_clip.csv")]
    pub out: PathBuf,
    #[arg(long)]
    pub summary: Option<PathBuf>,
    #[arg(long)]
    pub markdown: Option<PathBuf>,
    /// CSV of external scores (`clip_id,system,...`) to append to per-clip rows.
    #[arg(long)]
    pub external: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub engine: EngineArgs,
}

#[derive(Debug, Args, Serialize)]
pub struct RankArgs {
    /// `ratings.csv`, or a `.jsonl` rating store.
    #[arg(long)]
    pub ratings: PathBuf,
    /// Drop assessors who rate the hidden reference below 90 in more than 15% of trials.
    #[arg(long)]
    pub screen: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trial_table: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct TracesArgs {
    #[arg(long)]
    pub dir: PathBuf,
    /// Number of trace plans to sample.
    #[arg(long, default_value_t = 0)]
    pub sample: usize,
    /// Clip length in packets for sampled plans.
    #[arg(long, default_value_t = 999)]
    pub packets: usize,
}

#[derive(Debug, Args, Serialize)]
pub struct MushraBuildArgs {
    /// Clean clips (hidden reference).
    #[arg(long = "reference")]
    pub reference: PathBuf,
    /// Zero-filled clips (anchor).
    #[arg(long)]
    pub anchor: PathBuf,
    /// `NAME=DIR`, exactly four times.
    #[arg(long, required = true)]
    pub system: Vec<String>,
    /// Trial clip ids (10). Drawn with --seed from the reference directory if omitted.
    #[arg(long, value_delimiter = ',')]
    pub trials: Vec<String>,
    /// Training clip ids (2).
    #[arg(long, value_delimiter = ',')]
    pub training: Vec<String>,
    #[arg(long, default_value = "session.json")]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct MushraServeArgs {
    #[arg(long, default_value = "session.json")]
    pub session: PathBuf,
    #[arg(long, default_value = "ratings.jsonl")]
    pub ratings: PathBuf,
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub addr: String,
}

#[derive(Debug, Args, Serialize)]
pub struct MushraReportArgs {
    #[arg(long, default_value = "session.json")]
    pub session: PathBuf,
    #[arg(long, default_value = "ratings.jsonl")]
    pub ratings: PathBuf,
    /// Directory for ratings.csv, ranking.csv and trials.csv.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub screen: bool,
}

#[derive(Serialize)]
struct WithSeed<'a, T: Serialize> {
    seed: u64,
    #[serde(flatten)]
    args: &'a T,
}

fn echo<T: Serialize>(name: &str, seed: u64, args: &T) {
    eprintln!(
        "effective config: {}",
        effective_line(name, &WithSeed { seed, args })
    );
}

pub fn dispatch(cli: Cli) -> anyhow::Result<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Degrade(a) => {
            echo("degrade", seed, &a);
            degrade(&a, seed)
        }
        Command::Conceal(a) => {
            echo("conceal", seed, &a);
            conceal(&a)
        }
        Command::Eval(a) => {
            echo("eval", seed, &a);
            eval(&a)
        }
        Command::Rank(a) => {
            echo("rank", seed, &a);
            rank(&a)
        }
        Command::Traces(a) => {
            echo("traces", seed, &a);
            traces(&a, seed)
        }
        Command::MushraBuild(a) => {
            echo("mushra-build", seed, &a);
            mushra_build(&a, seed)
        }
        Command::MushraServe(a) => {
            echo("mushra-serve", seed, &a);
            mushra_serve(&a)
        }
        Command::MushraReport(a) => {
            echo("mushra-report", seed, &a);
            mushra_report(&a)
        }
    }
}

fn read(path: &Path) -> anyhow::Result<Waveform> {
    read_wav(path).with_context(|| format!("reading {}", path.display()))
}

fn write(w: &Waveform, path: &Path) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    write_wav(w, path).with_context(|| format!("writing {}", path.display()))
}

fn wav_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")))
        .collect();
    out.sort();
    Ok(out)
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn degrade(a: &DegradeArgs, seed: u64) -> anyhow::Result<()> {
    if let Some(trace_path) = &a.trace {
        let clean = read(&a.input)?;
        let trace = read_trace(trace_path)?;
        let lossy = apply_zero_fill(&clean, &trace)?;
        write(&lossy.audio, &a.out)?;
        println!(
            "{}: {} of {} packets lost",
            a.out.display(),
            trace.lost_count(),
            trace.len()
        );
        return Ok(());
    }
    let Some(trace_dir) = &a.traces else {
        bail!("either --trace or --traces is required");
    };
    let (pools, rejected) = TracePools::classify(read_trace_dir(trace_dir)?);
    for t in &rejected {
        log::warn!(
            "trace {} exceeds the longest classifiable burst; ignored",
            t.id()
        );
    }

    let files = if a.input.is_dir() {
        wav_files(&a.input)?
    } else {
        vec![a.input.clone()]
    };
    ensure!(!files.is_empty(), "no WAV files in {}", a.input.display());
    let mut sources = Vec::new();
    for f in &files {
        let mut w = read(f)?;
        if w.sample_rate != CHALLENGE_SAMPLE_RATE {
            log::info!(
                "{}: resampling {} Hz to {CHALLENGE_SAMPLE_RATE} Hz",
                f.display(),
                w.sample_rate
            );
            w = resample(&w, CHALLENGE_SAMPLE_RATE);
        }
        let name = f
            .file_name()
            .unwrap_or_default()
            .to_string_lossy()
            .into_owned();
        let clips = if w.len() >= CLIP_SAMPLES {
            segment_recording(&w)
        } else {
            vec![w]
        };
        let many = clips.len() > 1;
        for (i, audio) in clips.into_iter().enumerate() {
            let clip_id = if many {
                format!("{}_{i:03}", stem(f))
            } else {
                stem(f)
            };
            sources.push(SourceClip {
                clip_id,
                source_file: name.clone(),
                audio,
            });
        }
    }

    let build = build_corpus(&sources, &pools, seed)?;
    let layout = CorpusLayout::new(&a.out);
    std::fs::create_dir_all(&a.out)?;
    for (row, item) in build.manifest.iter().zip(&build.items) {
        let clean = &sources
            .iter()
            .find(|s| s.clip_id == row.clip_id)
            .expect("built from sources")
            .audio;
        layout.write_item(&row.clip_id, clean, item)?;
    }
    write_manifest(&build.manifest, layout.manifest())?;
    for (id, ratio) in &build.discarded {
        println!("discarded {id}: silence ratio {ratio:.3}");
    }
    println!("{} clips written to {}", build.items.len(), a.out.display());
    Ok(())
}

fn conceal(a: &ConcealArgs) -> anyhow::Result<()> {
    let kind: ConcealerKind = a.method.parse()?;
    let cfg = a.engine.config()?;
    let mut jobs: Vec<(String, Waveform, PacketTrace, PathBuf)> = Vec::new();
    if let Some(dir) = &a.corpus {
        let layout = CorpusLayout::new(dir);
        for item in layout.load()? {
            let out = a.out.join(format!("{}.wav", item.clip_id));
            jobs.push((item.clip_id, item.lossy.audio, item.lossy.trace, out));
        }
    } else {
        let input = a.input.as_ref().expect("required by clap");
        let trace = read_trace(a.trace.as_ref().expect("required by clap"))?;
        jobs.push((stem(&a.out), read(input)?, trace, a.out.clone()));
    }
    for (id, lossy, trace, out) in jobs {
        let fixed = conceal_clip(&lossy, &trace, &cfg, kind)?;
        write(&fixed, &out)?;
        if let Some(dir) = &a.export {
            export_for_external_tools(&fixed, &id, dir)?;
        }
    }
    Ok(())
}

fn split_named(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((name, dir)) => (name.to_string(), PathBuf::from(dir)),
        None => {
            let p = PathBuf::from(spec);
            let name = p
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string());
            (name, p)
        }
    }
}

fn eval(a: &EvalArgs) -> anyhow::Result<()> {
    let cfg = a.engine.config()?;
    let corpus: Vec<CorpusItem> = match (&a.corpus, &a.reference) {
        (Some(dir), _) => CorpusLayout::new(dir).load()?,
        (None, Some(refs)) => {
            ensure!(
                a.method.is_empty(),
                "built-in --method needs --corpus (lossy clips and traces)"
            );
            let mut items = Vec::new();
            for f in wav_files(refs)? {
                let clean = read(&f)?;
                // Without the lossy clips, lengths are checked against the reference.
                let trace = PacketTrace::new(vec![false; clean.grid().whole_packets]);
                let lossy = apply_zero_fill(&clean, &trace)?;
                items.push(CorpusItem {
                    clip_id: stem(&f),
                    clean,
                    lossy,
                });
            }
            items
        }
        (None, None) => unreachable!("clap requires one of --corpus/--ref"),
    };
    ensure!(!corpus.is_empty(), "empty corpus");

    let mut systems: Vec<SystemUnderTest> = Vec::new();
    let methods: Vec<String> = if a.method.is_empty() && a.est.is_empty() {
        ConcealerKind::ALL
            .iter()
            .map(|k| k.name().to_string())
            .collect()
    } else {
        a.method.clone()
    };
    for m in &methods {
        systems.push(SystemUnderTest::built_in(m.parse()?));
    }
    for spec in &a.est {
        let (name, dir) = split_named(spec);
        systems.push(SystemUnderTest::directory(name, dir));
    }

    let reports = systems
        .iter()
        .map(|s| evaluate_system(s, &corpus, &cfg, a.jobs.max(1)))
        .collect::<Result<Vec<_>, _>>()?;
    let table = aggregate(&reports)?;
    match &a.external {
        Some(ext) => write_per_clip_with_external(&reports, &read_external_scores(ext)?, &a.out)?,
        None => write_per_clip_csv(&reports, &a.out)?,
    }
    if let Some(p) = &a.summary {
        table.write_summary_csv(p)?;
    }
    let md = table.to_markdown();
    if let Some(p) = &a.markdown {
        std::fs::write(p, &md)?;
    }
    print!("{md}");
    Ok(())
}

fn load_ratings(path: &Path) -> anyhow::Result<Vec<StoredRating>> {
    if path.extension().is_some_and(|x| x == "jsonl") {
        ensure!(path.exists(), "rating store {} not found", path.display());
        Ok(RatingStore::open(path)?.ratings())
    } else {
        Ok(read_ratings_csv(path).with_context(|| format!("reading {}", path.display()))?)
    }
}

fn print_ranking(r: &RankingResult) {
    println!(
        "{:<5} {:<20} {:>5} {:>8} {:>8}",
        "rank", "system", "wins", "mean", "ci95"
    );
    for s in &r.ranking {
        let ci = s
            .ci95
            .map(|c| format!("{c:.2}"))
            .unwrap_or_else(|| "-".into());
        println!(
            "{:<5} {:<20} {:>5} {:>8.2} {:>8}",
            s.rank, s.system, s.wins, s.mean, ci
        );
    }
}

fn screened(ratings: Vec<StoredRating>, screen: bool) -> Vec<StoredRating> {
    if !screen {
        return ratings;
    }
    let (kept, excluded) = screen_assessors(&ratings, 90, 0.15);
    for id in excluded {
        log::warn!("post-screening excluded assessor {id}");
    }
    kept
}

fn rank(a: &RankArgs) -> anyhow::Result<()> {
    let ratings = screened(load_ratings(&a.ratings)?, a.screen);
    let trials: Vec<String> = ratings
        .iter()
        .map(|r| r.rating.trial_id.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let systems: Vec<String> = ratings
        .iter()
        .filter_map(|r| r.condition.system().map(str::to_string))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    ensure!(
        !systems.is_empty(),
        "no system ratings in {}",
        a.ratings.display()
    );
    let result = compute_ranking(&ratings, &trials, &systems)?;
    print_ranking(&result);
    if let Some(p) = &a.out {
        write_ranking_csv(&result, p)?;
    }
    if let Some(p) = &a.trial_table {
        write_trial_table_csv(&result, p)?;
    }
    Ok(())
}

fn traces(a: &TracesArgs, seed: u64) -> anyhow::Result<()> {
    let all = read_trace_dir(&a.dir)?;
    println!(
        "{:<24} {:>7} {:>9} {:>9}",
        "trace", "subset", "loss", "max_burst"
    );
    for t in &all {
        let s = t.burst_stats();
        let subset = plc_lab::trace_model::classify_subset(&s)
            .map(|l| l.number().to_string())
            .unwrap_or_else(|_| "-".into());
        println!(
            "{:<24} {:>7} {:>9.4} {:>9}",
            t.id(),
            subset,
            s.loss_rate,
            s.max_burst
        );
    }
    let (pools, rejected) = TracePools::classify(all);
    println!(
        "subset sizes: 1={} 2={} 3={} rejected={}",
        pools.subset1.len(),
        pools.subset2.len(),
        pools.subset3.len(),
        rejected.len()
    );
    for i in 0..a.sample {
        let plan = sample_trace_plan(a.packets, &pools, derive_seed(seed, i as u64))?;
        println!("{}", plan.to_line());
    }
    Ok(())
}

fn mushra_build(a: &MushraBuildArgs, seed: u64) -> anyhow::Result<()> {
    let system_dirs = a.system.iter().map(|s| split_named(s)).collect();
    let mut trials = a.trials.clone();
    let mut training = a.training.clone();
    if trials.is_empty() {
        let mut ids: Vec<String> = wav_files(&a.reference)?.iter().map(|p| stem(p)).collect();
        SeededRng::new(seed).shuffle(&mut ids);
        trials = ids.iter().take(10).cloned().collect();
        if training.is_empty() {
            training = ids.iter().skip(10).take(2).cloned().collect();
        }
    }
    if training.is_empty() {
        training = trials.iter().take(2).cloned().collect();
    }
    let config = SessionConfig {
        trial_clips: trials,
        training_clips: training,
        systems: a.system.iter().map(|s| split_named(s).0).collect(),
        master_seed: seed,
        catalog: StimulusCatalog {
            reference_dir: a.reference.clone(),
            anchor_dir: a.anchor.clone(),
            system_dirs,
        },
    };
    // Building one session checks cardinalities and that every stimulus exists.
    config.session_for("validation")?;
    std::fs::write(&a.out, serde_json::to_string_pretty(&config)?)?;
    println!("session written to {}", a.out.display());
    Ok(())
}

fn load_session(path: &Path) -> anyhow::Result<SessionConfig> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(serde_json::from_str(&text)?)
}

fn mushra_serve(a: &MushraServeArgs) -> anyhow::Result<()> {
    let config = load_session(&a.session)?;
    config.session_for("validation")?;
    let store = RatingStore::open(&a.ratings)?;
    let key = std::env::var(RESULTS_KEY_ENV)
        .ok()
        .filter(|k| !k.is_empty());
    if key.is_none() {
        log::warn!("{RESULTS_KEY_ENV} not set; /api/results is disabled");
    }
    let state = Arc::new(AppState::new(config, store, key));
    tokio::runtime::Runtime::new()?.block_on(server::serve(state, &a.addr))
}

fn mushra_report(a: &MushraReportArgs) -> anyhow::Result<()> {
    let config = load_session(&a.session)?;
    let ratings = screened(load_ratings(&a.ratings)?, a.screen);
    std::fs::create_dir_all(&a.out)?;
    write_ratings_csv(&ratings, a.out.join("ratings.csv"))?;
    let result = compute_ranking(&ratings, &config.trial_clips, &config.systems)?;
    write_ranking_csv(&result, a.out.join("ranking.csv"))?;
    write_trial_table_csv(&result, a.out.join("trials.csv"))?;
    print_ranking(&result);
    Ok(())
}
