//! BS.1534-style listening sessions: building randomized sessions, storing
//! ratings, and turning ratings into the challenge ranking.

mod ranking;
mod store;

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::rng::{derive_seed, hash_label, SeededRng};

pub use ranking::{
    compute_ranking, confidence_interval, screen_assessors, trial_winner, write_ranking_csv,
    write_trial_table_csv, RankedSystem, RankingResult, TrialSummary,
};
pub use store::{read_ratings_csv, write_ratings_csv, RatingStore, StoredRating};

/// Trials per session.
pub const TRIALS: usize = 10;
/// Systems under test per trial (plus hidden reference and anchor).
pub const SYSTEMS: usize = 4;
/// Clean/anchor pairs played during training.
pub const TRAINING_PAIRS: usize = 2;
pub const MAX_SCORE: i64 = 100;

#[derive(Debug, thiserror::Error)]
pub enum MushraError {
    #[error("expected exactly {expected} {what}, got {got}")]
    Cardinality {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("duplicate {what}: {name}")]
    Duplicate { what: &'static str, name: String },
    #[error("missing stimulus file {0}")]
    MissingStimulus(PathBuf),
    #[error("score {0} outside 0..=100")]
    ScoreOutOfRange(i64),
    #[error("unknown trial {0}")]
    UnknownTrial(String),
    #[error("condition token {token} is not part of trial {trial_id}")]
    UnknownToken { trial_id: String, token: String },
    #[error("trial has no ratings for any system")]
    EmptyTrial,
    #[error("need at least 2 scores for a confidence interval, got {0}")]
    TooFewScores(usize),
    #[error("trials without complete ratings: {}", .0.join(", "))]
    IncompleteTrials(Vec<String>),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("rating store line {line}: {source}")]
    Corrupt {
        line: usize,
        source: serde_json::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// What a condition token stands for. Never sent to assessors.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionRole {
    Reference,
    Anchor,
    System(String),
}

impl ConditionRole {
    pub fn system(&self) -> Option<&str> {
        match self {
            ConditionRole::System(name) => Some(name),
            _ => None,
        }
    }
}

impl std::str::FromStr for ConditionRole {
    type Err = std::convert::Infallible;

    /// Inverse of `Display`: anything other than the two reserved labels is a system.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "reference" => ConditionRole::Reference,
            "anchor" => ConditionRole::Anchor,
            other => ConditionRole::System(other.to_string()),
        })
    }
}

impl fmt::Display for ConditionRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConditionRole::Reference => f.write_str("reference"),
            ConditionRole::Anchor => f.write_str("anchor"),
            ConditionRole::System(name) => f.write_str(name),
        }
    }
}

/// Where stimuli live on disk: `reference/<clip>.wav` (clean),
/// `anchor/<clip>.wav` (zero-filled) and one directory per system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StimulusCatalog {
    pub reference_dir: PathBuf,
    pub anchor_dir: PathBuf,
    pub system_dirs: BTreeMap<String, PathBuf>,
}

impl StimulusCatalog {
    pub fn path(&self, role: &ConditionRole, clip_id: &str) -> Option<PathBuf> {
        let dir = match role {
            ConditionRole::Reference => &self.reference_dir,
            ConditionRole::Anchor => &self.anchor_dir,
            ConditionRole::System(name) => self.system_dirs.get(name)?,
        };
        Some(dir.join(format!("{clip_id}.wav")))
    }
}

/// Everything needed to build any assessor's session.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionConfig {
    pub trial_clips: Vec<String>,
    pub training_clips: Vec<String>,
    pub systems: Vec<String>,
    pub master_seed: u64,
    pub catalog: StimulusCatalog,
}

impl SessionConfig {
    /// Seed for one assessor; distinct assessors get distinct permutations.
    pub fn assessor_seed(&self, assessor_id: &str) -> u64 {
        self.master_seed ^ hash_label(assessor_id)
    }

    pub fn session_for(&self, assessor_id: &str) -> Result<MushraSession, MushraError> {
        build_session(self, self.assessor_seed(assessor_id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub token: String,
    pub role: ConditionRole,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    /// Stable across assessors: the clip id.
    pub trial_id: String,
    pub conditions: Vec<Condition>,
}

impl Trial {
    pub fn condition(&self, token: &str) -> Option<&Condition> {
        self.conditions.iter().find(|c| c.token == token)
    }

    pub fn reference(&self) -> &Condition {
        self.conditions
            .iter()
            .find(|c| c.role == ConditionRole::Reference)
            .expect("every trial has a reference")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingItem {
    pub clip_id: String,
    pub condition: Condition,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MushraSession {
    pub assessor_seed: u64,
    /// In presentation order.
    pub trials: Vec<Trial>,
    pub training_items: Vec<TrainingItem>,
}

impl MushraSession {
    pub fn trial(&self, trial_id: &str) -> Option<&Trial> {
        self.trials.iter().find(|t| t.trial_id == trial_id)
    }

    /// Every token in the session with the file it plays.
    pub fn token_paths(&self) -> BTreeMap<String, PathBuf> {
        let trial = self.trials.iter().flat_map(|t| &t.conditions);
        let training = self.training_items.iter().map(|t| &t.condition);
        trial
            .chain(training)
            .map(|c| (c.token.clone(), c.path.clone()))
            .collect()
    }

    /// The assessor-facing view: roles and paths stripped.
    pub fn public_view(&self, audio_prefix: &str) -> SessionView {
        let url = |c: &Condition| format!("{audio_prefix}{}", c.token);
        SessionView {
            trials: self
                .trials
                .iter()
                .map(|t| TrialView {
                    trial_id: t.trial_id.clone(),
                    reference_url: url(t.reference()),
                    conditions: t
                        .conditions
                        .iter()
                        .map(|c| ConditionView {
                            condition_id: c.token.clone(),
                            url: url(c),
                        })
                        .collect(),
                })
                .collect(),
            training_items: self
                .training_items
                .iter()
                .map(|t| TrainingView {
                    label: match t.condition.role {
                        ConditionRole::Reference => "reference".into(),
                        _ => "degraded".into(),
                    },
                    url: url(&t.condition),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub trials: Vec<TrialView>,
    pub training_items: Vec<TrainingView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub trial_id: String,
    /// The open (labelled) reference; the hidden one is among `conditions`.
    pub reference_url: String,
    pub conditions: Vec<ConditionView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionView {
    pub condition_id: String,
    pub url: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingView {
    pub label: String,
    pub url: String,
}

fn check_unique(what: &'static str, names: &[String]) -> Result<(), MushraError> {
    let mut seen = std::collections::BTreeSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(MushraError::Duplicate {
                what,
                name: n.clone(),
            });
        }
    }
    Ok(())
}

fn stimulus(
    catalog: &StimulusCatalog,
    role: ConditionRole,
    clip_id: &str,
    tokens: &mut SeededRng,
) -> Result<Condition, MushraError> {
    let path = catalog.path(&role, clip_id).ok_or_else(|| {
        MushraError::MissingStimulus(PathBuf::from(format!("<no directory for {role}>")))
    })?;
    if !path.is_file() {
        return Err(MushraError::MissingStimulus(path));
    }
    Ok(Condition {
        token: tokens.token(),
        role,
        path,
    })
}

/// Builds one assessor's session. Trial order and condition order are
/// permutations drawn from `assessor_seed`; tokens come from an independent
/// stream so they carry no information about the permutation.
pub fn build_session(
    config: &SessionConfig,
    assessor_seed: u64,
) -> Result<MushraSession, MushraError> {
    let cardinality = |what, expected, got| {
        if got == expected {
            Ok(())
        } else {
            Err(MushraError::Cardinality {
                what,
                expected,
                got,
            })
        }
    };
    cardinality("trial clips", TRIALS, config.trial_clips.len())?;
    cardinality("systems", SYSTEMS, config.systems.len())?;
    cardinality(
        "training clips",
        TRAINING_PAIRS,
        config.training_clips.len(),
    )?;
    check_unique("trial clip", &config.trial_clips)?;
    check_unique("system", &config.systems)?;
    if let Some(name) = config
        .systems
        .iter()
        .find(|s| *s == "reference" || *s == "anchor")
    {
        return Err(MushraError::Duplicate {
            what: "condition name",
            name: name.clone(),
        });
    }

    let mut order = SeededRng::new(derive_seed(assessor_seed, 0));
    let mut tokens = SeededRng::new(derive_seed(assessor_seed, 1));

    let mut roles = vec![ConditionRole::Reference, ConditionRole::Anchor];
    roles.extend(config.systems.iter().cloned().map(ConditionRole::System));

    let mut trials = Vec::with_capacity(TRIALS);
    for clip in &config.trial_clips {
        let conditions = roles
            .iter()
            .map(|role| stimulus(&config.catalog, role.clone(), clip, &mut tokens))
            .collect::<Result<Vec<_>, _>>()?;
        trials.push(Trial {
            trial_id: clip.clone(),
            conditions,
        });
    }
    order.shuffle(&mut trials);
    for t in &mut trials {
        order.shuffle(&mut t.conditions);
    }

    let mut training_items = Vec::with_capacity(2 * TRAINING_PAIRS);
    for clip in &config.training_clips {
        for role in [ConditionRole::Reference, ConditionRole::Anchor] {
            training_items.push(TrainingItem {
                clip_id: clip.clone(),
                condition: stimulus(&config.catalog, role, clip, &mut tokens)?,
            });
        }
    }

    Ok(MushraSession {
        assessor_seed,
        trials,
        training_items,
    })
}

/// One assessor's score for one condition, as submitted by the client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rating {
    pub assessor_id: String,
    pub trial_id: String,
    pub condition_id: String,
    pub score: i64,
}

/// Checks bounds and resolves the token against the assessor's session.
pub fn validate_rating(session: &MushraSession, r: &Rating) -> Result<ConditionRole, MushraError> {
    if !(0..=MAX_SCORE).contains(&r.score) {
        return Err(MushraError::ScoreOutOfRange(r.score));
    }
    let trial = session
        .trial(&r.trial_id)
        .ok_or_else(|| MushraError::UnknownTrial(r.trial_id.clone()))?;
    let cond = trial
        .condition(&r.condition_id)
        .ok_or_else(|| MushraError::UnknownToken {
            trial_id: r.trial_id.clone(),
            token: r.condition_id.clone(),
        })?;
    Ok(cond.role.clone())
}

#[cfg(test)]
mod tests;
