use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::{ConditionRole, MushraError, StoredRating};

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Half-width of the two-sided 95% t-interval: t(0.975, n-1) * s / sqrt(n).
pub fn confidence_interval(scores: &[f64]) -> Result<f64, MushraError> {
    let n = scores.len();
    if n < 2 {
        return Err(MushraError::TooFewScores(n));
    }
    let m = mean(scores);
    let var = scores.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(0.0);
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975);
    Ok(t * var.sqrt() / (n as f64).sqrt())
}

/// The system with the highest mean score. Reference and anchor never win.
/// Exact ties go to the lexicographically first name, with a warning.
pub fn trial_winner(scores: &[(ConditionRole, f64)]) -> Result<String, MushraError> {
    let mut by_system: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for (role, s) in scores {
        if let Some(name) = role.system() {
            by_system.entry(name).or_default().push(*s);
        }
    }
    let means: Vec<(&str, f64)> = by_system.iter().map(|(k, v)| (*k, mean(v))).collect();
    let best = means
        .iter()
        .map(|(_, m)| *m)
        .max_by(f64::total_cmp)
        .ok_or(MushraError::EmptyTrial)?;
    let tied: Vec<&str> = means
        .iter()
        .filter(|(_, m)| *m == best)
        .map(|(k, _)| *k)
        .collect();
    if tied.len() > 1 {
        log::warn!(
            "exact tie at mean {best} between {}; picking {}",
            tied.join(", "),
            tied[0]
        );
    }
    Ok(tied[0].to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedSystem {
    pub rank: usize,
    pub system: String,
    pub wins: usize,
    pub mean: f64,
    pub ci95: Option<f64>,
}

/// Per-trial statistics for every condition, keyed by role label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trial_id: String,
    pub winner: String,
    pub counts: BTreeMap<String, usize>,
    pub means: BTreeMap<String, f64>,
    pub ci95: BTreeMap<String, Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    /// Best first: wins descending, then overall mean descending.
    pub ranking: Vec<RankedSystem>,
    pub wins: BTreeMap<String, usize>,
    pub overall_means: BTreeMap<String, f64>,
    pub ci95: BTreeMap<String, Option<f64>>,
    /// In the order the trial ids were given.
    pub per_trial: Vec<TrialSummary>,
}

impl RankingResult {
    /// `per_trial_means[trial][system]` in ranking order of systems.
    pub fn per_trial_means(&self) -> Vec<Vec<f64>> {
        self.per_trial
            .iter()
            .map(|t| self.ranking.iter().map(|r| t.means[&r.system]).collect())
            .collect()
    }
}

/// Counts trial wins per system and orders systems by wins, breaking ties by
/// overall mean. Every trial must have at least one rating per system.
pub fn compute_ranking(
    ratings: &[StoredRating],
    trial_ids: &[String],
    systems: &[String],
) -> Result<RankingResult, MushraError> {
    let known: BTreeSet<&str> = trial_ids.iter().map(String::as_str).collect();
    let mut per_trial: BTreeMap<&str, Vec<(ConditionRole, f64)>> = BTreeMap::new();
    for r in ratings {
        let t = r.rating.trial_id.as_str();
        if !known.contains(t) {
            return Err(MushraError::UnknownTrial(t.to_string()));
        }
        per_trial
            .entry(t)
            .or_default()
            .push((r.condition.clone(), r.rating.score as f64));
    }

    let incomplete: Vec<String> = trial_ids
        .iter()
        .filter(|t| {
            let rated: BTreeSet<&str> = per_trial
                .get(t.as_str())
                .map(|v| v.iter().filter_map(|(role, _)| role.system()).collect())
                .unwrap_or_default();
            systems.iter().any(|s| !rated.contains(s.as_str()))
        })
        .cloned()
        .collect();
    if !incomplete.is_empty() {
        return Err(MushraError::IncompleteTrials(incomplete));
    }

    let mut wins: BTreeMap<String, usize> = systems.iter().map(|s| (s.clone(), 0)).collect();
    let mut all_scores: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut summaries = Vec::with_capacity(trial_ids.len());
    for t in trial_ids {
        let scores: Vec<(ConditionRole, f64)> = per_trial[t.as_str()]
            .iter()
            .filter(|(role, _)| role.system().is_none_or(|s| wins.contains_key(s)))
            .cloned()
            .collect();
        let winner = trial_winner(&scores)?;
        *wins.get_mut(&winner).expect("winner is a listed system") += 1;

        let mut grouped: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (role, s) in &scores {
            grouped.entry(role.to_string()).or_default().push(*s);
            if let Some(name) = role.system() {
                all_scores.entry(name.to_string()).or_default().push(*s);
            }
        }
        summaries.push(TrialSummary {
            trial_id: t.clone(),
            winner,
            counts: grouped.iter().map(|(k, v)| (k.clone(), v.len())).collect(),
            means: grouped.iter().map(|(k, v)| (k.clone(), mean(v))).collect(),
            ci95: grouped
                .iter()
                .map(|(k, v)| (k.clone(), confidence_interval(v).ok()))
                .collect(),
        });
    }

    let overall_means: BTreeMap<String, f64> = all_scores
        .iter()
        .map(|(k, v)| (k.clone(), mean(v)))
        .collect();
    let ci95: BTreeMap<String, Option<f64>> = all_scores
        .iter()
        .map(|(k, v)| (k.clone(), confidence_interval(v).ok()))
        .collect();

    let mut order: Vec<&String> = systems.iter().collect();
    order.sort_by(|a, b| {
        wins[*b]
            .cmp(&wins[*a])
            .then(overall_means[*b].total_cmp(&overall_means[*a]))
            .then(a.cmp(b))
    });
    let ranking = order
        .into_iter()
        .enumerate()
        .map(|(i, s)| RankedSystem {
            rank: i + 1,
            system: s.clone(),
            wins: wins[s],
            mean: overall_means[s],
            ci95: ci95[s],
        })
        .collect();

    Ok(RankingResult {
        ranking,
        wins,
        overall_means,
        ci95,
        per_trial: summaries,
    })
}

/// Optional post-screening: drops assessors who rated the hidden reference
/// below `threshold` in more than `max_fraction` of the trials they rated.
/// Returns the kept ratings and the excluded assessor ids.
pub fn screen_assessors(
    ratings: &[StoredRating],
    threshold: i64,
    max_fraction: f64,
) -> (Vec<StoredRating>, Vec<String>) {
    let mut stats: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for r in ratings
        .iter()
        .filter(|r| r.condition == ConditionRole::Reference)
    {
        let e = stats.entry(&r.rating.assessor_id).or_default();
        e.0 += 1;
        if r.rating.score < threshold {
            e.1 += 1;
        }
    }
    let excluded: BTreeSet<&str> = stats
        .iter()
        .filter(|(_, (n, low))| *low as f64 > max_fraction * *n as f64)
        .map(|(id, _)| *id)
        .collect();
    let kept = ratings
        .iter()
        .filter(|r| !excluded.contains(r.rating.assessor_id.as_str()))
        .cloned()
        .collect();
    (kept, excluded.into_iter().map(str::to_string).collect())
}

fn fmt_ci(ci: Option<f64>) -> String {
    ci.map(|c| format!("{c:.2}")).unwrap_or_default()
}

pub fn write_ranking_csv(
    result: &RankingResult,
    path: impl AsRef<Path>,
) -> Result<(), MushraError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["rank", "system", "wins", "mean", "ci95"])?;
    for r in &result.ranking {
        w.write_record([
            r.rank.to_string(),
            r.system.clone(),
            r.wins.to_string(),
            format!("{:.2}", r.mean),
            fmt_ci(r.ci95),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-trial mean and 95% CI for every condition.
pub fn write_trial_table_csv(
    result: &RankingResult,
    path: impl AsRef<Path>,
) -> Result<(), MushraError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial_id", "condition", "n", "mean", "ci95", "winner"])?;
    for t in &result.per_trial {
        for (cond, m) in &t.means {
            w.write_record([
                t.trial_id.clone(),
                cond.clone(),
                t.counts[cond].to_string(),
                format!("{m:.2}"),
                fmt_ci(t.ci95[cond]),
                (cond == &t.winner).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
