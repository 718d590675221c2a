use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{validate_rating, ConditionRole, MushraError, MushraSession, Rating};

/// A rating with its token resolved. Only the store sees `condition`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredRating {
    #[serde(flatten)]
    pub rating: Rating,
    pub condition: ConditionRole,
}

type Key = (String, String, String);

/// Append-only JSON-lines rating store with an in-memory index.
/// Re-submitting a (assessor, trial, condition) triple replaces the old score.
#[derive(Debug, Default)]
pub struct RatingStore {
    path: Option<PathBuf>,
    file: Option<File>,
    index: BTreeMap<Key, StoredRating>,
}

fn key(r: &Rating) -> Key {
    (
        r.assessor_id.clone(),
        r.trial_id.clone(),
        r.condition_id.clone(),
    )
}

impl RatingStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (creating if needed) a store file and replays it.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, MushraError> {
        let path = path.as_ref().to_path_buf();
        let mut index = BTreeMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let r: StoredRating =
                    serde_json::from_str(&line).map_err(|source| MushraError::Corrupt {
                        line: i + 1,
                        source,
                    })?;
                index.insert(key(&r.rating), r);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path: Some(path),
            file: Some(file),
            index,
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn record(&mut self, session: &MushraSession, r: Rating) -> Result<(), MushraError> {
        self.record_batch(session, vec![r])
    }

    /// Validates every rating first; nothing is stored unless all pass.
    pub fn record_batch(
        &mut self,
        session: &MushraSession,
        batch: Vec<Rating>,
    ) -> Result<(), MushraError> {
        let resolved = batch
            .into_iter()
            .map(|rating| {
                let condition = validate_rating(session, &rating)?;
                Ok(StoredRating { rating, condition })
            })
            .collect::<Result<Vec<_>, MushraError>>()?;
        if let Some(file) = &mut self.file {
            let mut buf = String::new();
            for r in &resolved {
                buf.push_str(&serde_json::to_string(r)?);
                buf.push('\n');
            }
            file.write_all(buf.as_bytes())?;
            file.flush()?;
        }
        for r in resolved {
            self.index.insert(key(&r.rating), r);
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    /// Current ratings, sorted by (assessor, trial, token).
    pub fn ratings(&self) -> Vec<StoredRating> {
        self.index.values().cloned().collect()
    }
}

#[derive(Serialize, Deserialize)]
struct RatingCsvRow {
    assessor_id: String,
    trial_id: String,
    condition_id: String,
    condition: String,
    score: i64,
}

pub fn write_ratings_csv(
    ratings: &[StoredRating],
    path: impl AsRef<Path>,
) -> Result<(), MushraError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in ratings {
        w.serialize(RatingCsvRow {
            assessor_id: r.rating.assessor_id.clone(),
            trial_id: r.rating.trial_id.clone(),
            condition_id: r.rating.condition_id.clone(),
            condition: r.condition.to_string(),
            score: r.rating.score,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Reads ratings written by [`write_ratings_csv`] (or prepared by hand), so a
/// ranking can be computed without running the listening service.
pub fn read_ratings_csv(path: impl AsRef<Path>) -> Result<Vec<StoredRating>, MushraError> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for row in r.deserialize() {
        let row: RatingCsvRow = row?;
        if !(0..=super::MAX_SCORE).contains(&row.score) {
            return Err(MushraError::ScoreOutOfRange(row.score));
        }
        out.push(StoredRating {
            condition: row.condition.parse().expect("infallible"),
            rating: Rating {
                assessor_id: row.assessor_id,
                trial_id: row.trial_id,
                condition_id: row.condition_id,
                score: row.score,
            },
        });
    }
    Ok(out)
}
