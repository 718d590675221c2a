use super::*;
use crate::audio_io::{write_wav, Waveform};
use std::collections::BTreeSet;
use tempfile::TempDir;

const SYS: [&str; 4] = ["ar", "repeat", "teamA", "teamB"];

fn fixture() -> (TempDir, SessionConfig) {
    let dir = tempfile::tempdir().unwrap();
    let w = Waveform::silent(64, 44_100);
    let clips: Vec<String> = (0..12).map(|i| format!("clip{i:02}")).collect();
    let mut system_dirs = BTreeMap::new();
    let mut dirs = vec![dir.path().join("reference"), dir.path().join("anchor")];
    for s in SYS {
        let d = dir.path().join("systems").join(s);
        system_dirs.insert(s.to_string(), d.clone());
        dirs.push(d);
    }
    for d in &dirs {
        std::fs::create_dir_all(d).unwrap();
        for c in &clips {
            write_wav(&w, d.join(format!("{c}.wav"))).unwrap();
        }
    }
    let config = SessionConfig {
        trial_clips: clips[..10].to_vec(),
        training_clips: clips[10..].to_vec(),
        systems: SYS.iter().map(|s| s.to_string()).collect(),
        master_seed: 7,
        catalog: StimulusCatalog {
            reference_dir: dirs[0].clone(),
            anchor_dir: dirs[1].clone(),
            system_dirs,
        },
    };
    (dir, config)
}

fn trial_order(s: &MushraSession) -> Vec<&str> {
    s.trials.iter().map(|t| t.trial_id.as_str()).collect()
}

#[test]
fn session_shape() {
    let (_d, cfg) = fixture();
    let s = build_session(&cfg, 1).unwrap();
    assert_eq!(s.trials.len(), 10);
    assert_eq!(s.training_items.len(), 4);
    for t in &s.trials {
        assert_eq!(t.conditions.len(), 6);
        let roles: BTreeSet<_> = t.conditions.iter().map(|c| c.role.clone()).collect();
        assert_eq!(roles.len(), 6);
        assert!(roles.contains(&ConditionRole::Reference));
        assert!(roles.contains(&ConditionRole::Anchor));
    }
    let tokens = s.token_paths();
    assert_eq!(tokens.len(), 64);
    assert!(tokens.keys().all(|t| t.len() == 32));
}

#[test]
fn sessions_are_deterministic_per_seed() {
    let (_d, cfg) = fixture();
    let a = build_session(&cfg, 11).unwrap();
    assert_eq!(a, build_session(&cfg, 11).unwrap());
    let b = build_session(&cfg, 12).unwrap();
    assert_ne!(trial_order(&a), trial_order(&b));
    let mut sa: Vec<_> = trial_order(&a);
    let mut sb: Vec<_> = trial_order(&b);
    sa.sort();
    sb.sort();
    assert_eq!(sa, sb);
    assert_ne!(
        cfg.session_for("alice").unwrap().trials,
        cfg.session_for("bob").unwrap().trials
    );
}

#[test]
fn public_view_hides_identity() {
    let (_d, cfg) = fixture();
    let s = build_session(&cfg, 3).unwrap();
    let json = serde_json::to_string(&s.public_view("/api/audio/")).unwrap();
    for name in SYS {
        assert!(!json.contains(name), "{name} leaked");
    }
    assert!(!json.contains("anchor"));
    assert!(!json.contains(".wav"));
}

#[test]
fn cardinality_and_missing_files() {
    let (d, cfg) = fixture();
    let mut nine = cfg.clone();
    nine.trial_clips.pop();
    assert!(matches!(
        build_session(&nine, 1),
        Err(MushraError::Cardinality {
            expected: 10,
            got: 9,
            ..
        })
    ));
    let mut three = cfg.clone();
    three.systems.pop();
    assert!(matches!(
        build_session(&three, 1),
        Err(MushraError::Cardinality { .. })
    ));
    let mut reserved = cfg.clone();
    reserved.systems[0] = "anchor".into();
    assert!(matches!(
        build_session(&reserved, 1),
        Err(MushraError::Duplicate { .. })
    ));

    std::fs::remove_file(d.path().join("systems/teamB/clip04.wav")).unwrap();
    assert!(matches!(
        build_session(&cfg, 1),
        Err(MushraError::MissingStimulus(_))
    ));
}

fn rating(s: &MushraSession, trial: usize, role: &ConditionRole, score: i64) -> Rating {
    let t = &s.trials[trial];
    Rating {
        assessor_id: "a1".into(),
        trial_id: t.trial_id.clone(),
        condition_id: t
            .conditions
            .iter()
            .find(|c| &c.role == role)
            .unwrap()
            .token
            .clone(),
        score,
    }
}

#[test]
fn rating_validation_and_last_write_wins() {
    let (d, cfg) = fixture();
    let s = build_session(&cfg, 5).unwrap();
    let path = d.path().join("ratings.jsonl");
    let mut store = RatingStore::open(&path).unwrap();
    store
        .record(&s, rating(&s, 0, &ConditionRole::Reference, 100))
        .unwrap();
    assert!(matches!(
        store.record(&s, rating(&s, 0, &ConditionRole::Anchor, 101)),
        Err(MushraError::ScoreOutOfRange(101))
    ));
    assert!(matches!(
        store.record(&s, rating(&s, 0, &ConditionRole::Anchor, -1)),
        Err(MushraError::ScoreOutOfRange(-1))
    ));
    let mut wrong = rating(&s, 0, &ConditionRole::Anchor, 10);
    wrong.condition_id = s.trials[1].conditions[0].token.clone();
    assert!(matches!(
        store.record(&s, wrong),
        Err(MushraError::UnknownToken { .. })
    ));

    let sys = ConditionRole::System("ar".into());
    store.record(&s, rating(&s, 0, &sys, 40)).unwrap();
    store.record(&s, rating(&s, 0, &sys, 70)).unwrap();
    assert_eq!(store.len(), 2);

    // A batch with one bad rating stores nothing.
    let batch = vec![
        rating(&s, 1, &sys, 50),
        rating(&s, 1, &ConditionRole::Anchor, 200),
    ];
    assert!(store.record_batch(&s, batch).is_err());
    assert_eq!(store.len(), 2);
    drop(store);

    let reopened = RatingStore::open(&path).unwrap();
    let rows = reopened.ratings();
    assert_eq!(rows.len(), 2);
    let ar = rows.iter().find(|r| r.condition == sys).unwrap();
    assert_eq!(ar.rating.score, 70);

    let csv_path = d.path().join("ratings.csv");
    write_ratings_csv(&rows, &csv_path).unwrap();
    let text = std::fs::read_to_string(csv_path).unwrap();
    assert!(text.starts_with("assessor_id,trial_id,condition_id,condition,score\n"));
    let mut back = read_ratings_csv(d.path().join("ratings.csv")).unwrap();
    back.sort_by(|a, b| a.rating.condition_id.cmp(&b.rating.condition_id));
    let mut rows = rows;
    rows.sort_by(|a, b| a.rating.condition_id.cmp(&b.rating.condition_id));
    assert_eq!(back, rows);
}

fn sys(name: &str) -> ConditionRole {
    ConditionRole::System(name.into())
}

#[test]
fn winner_rules() {
    let scores = vec![
        (sys("A"), 70.0),
        (sys("B"), 80.0),
        (ConditionRole::Anchor, 20.0),
        (ConditionRole::Reference, 98.0),
    ];
    assert_eq!(trial_winner(&scores).unwrap(), "B");
    let tie = vec![(sys("b"), 50.0), (sys("a"), 50.0), (sys("c"), 50.0)];
    assert_eq!(trial_winner(&tie).unwrap(), "a");
    let anchor_high = vec![
        (sys("A"), 10.0),
        (sys("B"), 5.0),
        (ConditionRole::Anchor, 90.0),
    ];
    assert_eq!(trial_winner(&anchor_high).unwrap(), "A");
    assert!(matches!(
        trial_winner(&[(ConditionRole::Reference, 100.0)]),
        Err(MushraError::EmptyTrial)
    ));
}

#[test]
fn confidence_intervals() {
    assert_eq!(confidence_interval(&[70.0, 70.0, 70.0]).unwrap(), 0.0);
    let h = confidence_interval(&[80.0, 90.0, 100.0]).unwrap();
    assert!((h - 24.84).abs() < 0.01, "{h}");
    let doubled = confidence_interval(&[80.0, 80.0, 90.0, 90.0, 100.0, 100.0]).unwrap();
    assert!(doubled < h);
    assert!(matches!(
        confidence_interval(&[1.0]),
        Err(MushraError::TooFewScores(1))
    ));
}

fn synthetic(
    trials: &[String],
    scores: impl Fn(usize, &str, usize) -> i64,
    assessors: usize,
) -> Vec<StoredRating> {
    let mut out = Vec::new();
    for a in 0..assessors {
        for (ti, t) in trials.iter().enumerate() {
            let roles = [
                ConditionRole::Reference,
                ConditionRole::Anchor,
                sys("s1"),
                sys("s2"),
                sys("s3"),
                sys("s4"),
            ];
            for role in roles {
                let label = role.to_string();
                out.push(StoredRating {
                    rating: Rating {
                        assessor_id: format!("as{a}"),
                        trial_id: t.clone(),
                        condition_id: format!("{t}-{label}"),
                        score: scores(ti, &label, a),
                    },
                    condition: role,
                });
            }
        }
    }
    out
}

fn names() -> Vec<String> {
    ["s1", "s2", "s3", "s4"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn trials() -> Vec<String> {
    (0..10).map(|i| format!("t{i}")).collect()
}

#[test]
fn nine_one_zero_zero() {
    let score = |t: usize, label: &str, a: usize| -> i64 {
        let noise = (a % 3) as i64;
        match label {
            "reference" => 95 + noise,
            "anchor" => 15 + noise,
            "s1" => (if t == 4 { 60 } else { 80 }) + noise,
            "s2" => (if t == 4 { 75 } else { 55 }) + noise,
            "s3" => 40 + noise,
            _ => 30 + noise,
        }
    };
    let r = compute_ranking(&synthetic(&trials(), score, 12), &trials(), &names()).unwrap();
    let wins: Vec<usize> = r.ranking.iter().map(|x| x.wins).collect();
    assert_eq!(wins, vec![9, 1, 0, 0]);
    assert_eq!(r.ranking[0].system, "s1");
    assert_eq!(r.wins.values().sum::<usize>(), 10);
    assert_eq!(r.per_trial_means().len(), 10);
    assert_eq!(r.per_trial[4].winner, "s2");

    let dir = tempfile::tempdir().unwrap();
    write_ranking_csv(&r, dir.path().join("ranking.csv")).unwrap();
    write_trial_table_csv(&r, dir.path().join("trials.csv")).unwrap();
    let table = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 60);
}

#[test]
fn tie_in_wins_uses_mean() {
    let score = |t: usize, label: &str, _a: usize| -> i64 {
        match (label, t < 5) {
            ("s1", true) => 90,
            ("s1", false) => 50,
            ("s2", true) => 40,
            ("s2", false) => 60,
            _ => 10,
        }
    };
    let r = compute_ranking(&synthetic(&trials(), score, 3), &trials(), &names()).unwrap();
    assert_eq!(r.ranking[0].system, "s1");
    assert_eq!((r.ranking[0].wins, r.ranking[1].wins), (5, 5));
    assert_eq!(r.overall_means["s1"], 70.0);
    assert_eq!(r.overall_means["s2"], 50.0);
}

#[test]
fn ranking_invariances() {
    let score = |t: usize, label: &str, a: usize| -> i64 {
        ((t * 7 + label.len() * 13 + a * 5) % 60) as i64 + 10
    };
    let base = synthetic(&trials(), score, 5);
    let r = compute_ranking(&base, &trials(), &names()).unwrap();

    let mut reversed = base.clone();
    reversed.reverse();
    assert_eq!(compute_ranking(&reversed, &trials(), &names()).unwrap(), r);

    let shifted: Vec<StoredRating> = base
        .iter()
        .map(|x| {
            let mut y = x.clone();
            y.rating.score += 25;
            y
        })
        .collect();
    let rs = compute_ranking(&shifted, &trials(), &names()).unwrap();
    assert_eq!(
        rs.ranking
            .iter()
            .map(|x| (&x.system, x.wins))
            .collect::<Vec<_>>(),
        r.ranking
            .iter()
            .map(|x| (&x.system, x.wins))
            .collect::<Vec<_>>()
    );
    for s in names() {
        assert!((rs.overall_means[&s] - r.overall_means[&s] - 25.0).abs() < 1e-9);
    }
}

#[test]
fn incomplete_trials_are_listed() {
    let score = |_t: usize, _l: &str, _a: usize| 50;
    let all = synthetic(&trials(), score, 2);
    let partial: Vec<_> = all
        .into_iter()
        .filter(|r| {
            !(r.rating.trial_id == "t3" && r.condition == sys("s2")) && r.rating.trial_id != "t7"
        })
        .collect();
    match compute_ranking(&partial, &trials(), &names()) {
        Err(MushraError::IncompleteTrials(ids)) => assert_eq!(ids, vec!["t3", "t7"]),
        other => panic!("{other:?}"),
    }
}

#[test]
fn post_screening() {
    let score = |t: usize, label: &str, a: usize| -> i64 {
        if label == "reference" && a == 1 && t < 2 {
            60
        } else {
            50
        }
    };
    // Assessor 2 rates the reference low in one trial: 10% is tolerated.
    let mut ratings = synthetic(&trials(), score, 3);
    for r in &mut ratings {
        if r.rating.assessor_id == "as2"
            && r.rating.trial_id == "t0"
            && r.condition == ConditionRole::Reference
        {
            r.rating.score = 10;
        }
    }
    let (kept, excluded) = screen_assessors(&ratings, 90, 0.15);
    // Everyone rates the reference at 50 or 60, so all fall below 90.
    assert_eq!(excluded, vec!["as0", "as1", "as2"]);
    assert!(kept.is_empty());

    for r in &mut ratings {
        if r.condition == ConditionRole::Reference && r.rating.score == 50 {
            r.rating.score = 100;
        }
    }
    let (kept, excluded) = screen_assessors(&ratings, 90, 0.15);
    assert_eq!(excluded, vec!["as1"]);
    assert_eq!(kept.len(), 120);
}
