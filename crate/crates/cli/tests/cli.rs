mod common;

use common::{plc_lab, stimuli, write_digits, write_tone};
use plc_lab::audio_io::read_wav;

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &std::process::Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn version_lists_formats() {
    let o = plc_lab(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains(plc_lab::VERSION));
    assert!(s.contains("trace-plan/1") && s.contains("manifest/1") && s.contains("ratings/1"));
}

#[test]
fn exit_codes() {
    assert_eq!(plc_lab(&["conceal", "--bogus"]).status.code(), Some(2));
    assert_eq!(plc_lab(&[]).status.code(), Some(2));
    let o = plc_lab(&[
        "conceal",
        "--in",
        "/nonexistent.wav",
        "--trace",
        "/nonexistent.txt",
        "--out",
        "/tmp/x.wav",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("error:"));
    assert_eq!(plc_lab(&["conceal", "--help"]).status.code(), Some(0));
}

#[test]
fn single_file_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_tone(&d.join("refs/a.wav"), 20, 330.0);
    write_digits(&d.join("t.txt"), "00001100000001000000");

    let o = plc_lab(&[
        "degrade",
        "--in",
        d.join("refs/a.wav").to_str().unwrap(),
        "--trace",
        d.join("t.txt").to_str().unwrap(),
        "--out",
        d.join("lossy.wav").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let o = plc_lab(&[
        "conceal",
        "--in",
        d.join("lossy.wav").to_str().unwrap(),
        "--trace",
        d.join("t.txt").to_str().unwrap(),
        "--method",
        "ar",
        "--out",
        d.join("subs/a.wav").to_str().unwrap(),
        "--export",
        d.join("export").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("effective config: conceal"));
    let fixed = read_wav(d.join("subs/a.wav")).unwrap();
    assert_eq!(fixed.len(), 20 * 512 + 100);
    assert_eq!(
        read_wav(d.join("export/16000/a.wav")).unwrap().sample_rate,
        16_000
    );
    assert_eq!(
        read_wav(d.join("export/48000/a.wav")).unwrap().sample_rate,
        48_000
    );

    let o = plc_lab(&[
        "eval",
        "--ref",
        d.join("refs").to_str().unwrap(),
        "--est",
        d.join("subs").to_str().unwrap(),
        "--out",
        d.join("per_clip.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = std::fs::read_to_string(d.join("per_clip.csv")).unwrap();
    assert!(csv.starts_with("clip_id,system,mse,sdr_db,si_sdr_db,lsd,mcd\n"));
    assert!(csv.contains("a,subs,"));
    assert!(stdout(&o).contains("| subs "));
}

#[test]
fn corpus_pipeline_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for (i, f) in [220.0, 330.0, 440.0].iter().enumerate() {
        write_tone(&d.join(format!("clean/c{i}.wav")), 30, *f);
    }
    write_digits(
        &d.join("traces/t1.txt"),
        "0001000011000000010000000001000000",
    );
    write_digits(
        &d.join("traces/t2.txt"),
        "0000000011111111000000000000000000",
    );

    let degrade = |out: &str, seed: &str| {
        plc_lab(&[
            "degrade",
            "--in",
            d.join("clean").to_str().unwrap(),
            "--traces",
            d.join("traces").to_str().unwrap(),
            "--out",
            d.join(out).to_str().unwrap(),
            "--seed",
            seed,
        ])
    };
    let o = degrade("corpus", "5");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("3 clips"));
    assert_eq!(degrade("corpus2", "5").status.code(), Some(0));
    let m1 = std::fs::read_to_string(d.join("corpus/manifest.csv")).unwrap();
    let m2 = std::fs::read_to_string(d.join("corpus2/manifest.csv")).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(m1.lines().count(), 4);

    let eval = |out: &str, jobs: &str| {
        plc_lab(&[
            "eval",
            "--corpus",
            d.join("corpus").to_str().unwrap(),
            "--jobs",
            jobs,
            "--out",
            d.join(out).to_str().unwrap(),
            "--summary",
            d.join("summary.csv").to_str().unwrap(),
        ])
    };
    let o = eval("a.csv", "1");
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(eval("b.csv", "3").status.code(), Some(0));
    let a = std::fs::read_to_string(d.join("a.csv")).unwrap();
    assert_eq!(a, std::fs::read_to_string(d.join("b.csv")).unwrap());
    assert_eq!(a.lines().count(), 1 + 3 * 3);
    let summary = std::fs::read_to_string(d.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);

    let o = plc_lab(&[
        "conceal",
        "--corpus",
        d.join("corpus").to_str().unwrap(),
        "--method",
        "repeat",
        "--out",
        d.join("fixed").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(d.join("fixed/c1.wav").exists());
}

#[test]
fn config_file_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_tone(&d.join("lossy.wav"), 10, 300.0);
    write_digits(&d.join("t.txt"), "0001100000");
    let conf = d.join("run.conf");
    std::fs::write(
        &conf,
        format!(
            "# defaults for this run\nmethod = zero\nseed = 42\nout = {}\ntrace = {}\n",
            d.join("from_conf.wav").display(),
            d.join("t.txt").display()
        ),
    )
    .unwrap();
    let o = plc_lab(&[
        "--config",
        conf.to_str().unwrap(),
        "conceal",
        "--in",
        d.join("lossy.wav").to_str().unwrap(),
        "--method",
        "repeat",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let err = stderr(&o);
    assert!(err.contains("method=repeat"), "{err}");
    assert!(err.contains("seed=42"), "{err}");
    assert!(d.join("from_conf.wav").exists());
}

#[test]
fn traces_and_rank() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_digits(&d.join("tr/a.txt"), "0100110000");
    write_digits(&d.join("tr/b.txt"), "0111111111000");
    let o = plc_lab(&[
        "traces",
        "--dir",
        d.join("tr").to_str().unwrap(),
        "--sample",
        "2",
        "--packets",
        "20",
        "--seed",
        "3",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = stdout(&o);
    assert!(s.contains("subset sizes: 1=1 2=1 3=0 rejected=0"), "{s}");
    assert_eq!(s.lines().filter(|l| l.contains(", 20, ")).count(), 2, "{s}");

    let mut csv = String::from("assessor_id,trial_id,condition_id,condition,score\n");
    for a in 0..3 {
        for t in 0..10 {
            for (c, cond, score) in [
                (0, "reference", 95),
                (1, "anchor", 10),
                (2, "parcnet", if t == 3 { 50 } else { 80 }),
                (3, "team_a", if t == 3 { 70 } else { 60 }),
                (4, "team_b", 40),
                (5, "team_c", 30),
            ] {
                csv.push_str(&format!(
                    "as{a},trial{t},tok{a}{t}{c},{cond},{}\n",
                    score + a
                ));
            }
        }
    }
    std::fs::write(d.join("ratings.csv"), csv).unwrap();
    let o = plc_lab(&[
        "rank",
        "--ratings",
        d.join("ratings.csv").to_str().unwrap(),
        "--out",
        d.join("ranking.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert!(
        lines[1].contains("parcnet") && lines[1].contains(" 9 "),
        "{lines:?}"
    );
    assert!(
        lines[2].contains("team_a") && lines[2].contains(" 1 "),
        "{lines:?}"
    );
    let ranking = std::fs::read_to_string(d.join("ranking.csv")).unwrap();
    assert!(ranking.starts_with("rank,system,wins,mean,ci95\n1,parcnet,9,"));
}

#[test]
fn mushra_build_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let (reference, anchor, systems) = stimuli(d);
    let session = d.join("session.json");
    let mut args = vec![
        "mushra-build".to_string(),
        "--reference".into(),
        reference.display().to_string(),
        "--anchor".into(),
        anchor.display().to_string(),
        "--out".into(),
        session.display().to_string(),
        "--seed".into(),
        "9".into(),
    ];
    for s in &systems {
        args.push("--system".into());
        args.push(s.clone());
    }
    let argv: Vec<&str> = args.iter().map(String::as_str).collect();
    let o = plc_lab(&argv);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let cfg: plc_lab::mushra::SessionConfig =
        serde_json::from_str(&std::fs::read_to_string(&session).unwrap()).unwrap();
    assert_eq!(cfg.trial_clips.len(), 10);
    assert_eq!(cfg.training_clips.len(), 2);

    // Three systems only: rejected.
    let short: Vec<&str> = argv[..argv.len() - 2].to_vec();
    assert_eq!(plc_lab(&short).status.code(), Some(1));

    // Fill a rating store through the library and report on it.
    let store_path = d.join("ratings.jsonl");
    let mut store = plc_lab::mushra::RatingStore::open(&store_path).unwrap();
    for assessor in ["x", "y"] {
        let s = cfg.session_for(assessor).unwrap();
        for t in &s.trials {
            let batch = t
                .conditions
                .iter()
                .map(|c| plc_lab::mushra::Rating {
                    assessor_id: assessor.into(),
                    trial_id: t.trial_id.clone(),
                    condition_id: c.token.clone(),
                    score: match c.role.system() {
                        Some("teamA") => 90,
                        Some(_) => 50,
                        None => 100,
                    },
                })
                .collect();
            store.record_batch(&s, batch).unwrap();
        }
    }
    drop(store);
    let o = plc_lab(&[
        "mushra-report",
        "--session",
        session.to_str().unwrap(),
        "--ratings",
        store_path.to_str().unwrap(),
        "--out",
        d.join("report").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().nth(1).unwrap().contains("teamA"));
    for f in ["ratings.csv", "ranking.csv", "trials.csv"] {
        assert!(d.join("report").join(f).exists(), "{f}");
    }
    let o = plc_lab(&[
        "rank",
        "--ratings",
        d.join("report/ratings.csv").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}
