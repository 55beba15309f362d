//! End-to-end runs of the `mcsa` binary: subcommand wiring, exit codes,
//! and reproducibility of the full pipeline.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn mcsa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mcsa"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_corpus(dir: &Path) -> (String, String, String) {
    let blocks = [["Int-C", "KS", "ALR"], ["CM", "Int-B", "MR"], ["GSP", "KM", "FC"]];
    let mut rows = vec!["session_id,unit_index,actor_id,modality,codes".to_string()];
    let mut sid = 0;
    for (cluster, size) in [(0, 3), (1, 4), (2, 3)] {
        for _ in 0..size {
            for t in 0..15 {
                let b = blocks[cluster];
                rows.push(format!("g{sid:02},{t},a1,verbal,{}|{}", b[t % 3], b[(t + 1) % 3]));
            }
            sid += 1;
        }
    }
    let events = dir.join("events.csv");
    fs::write(&events, rows.join("\n") + "\n").unwrap();

    let mut scores = vec!["session_id,propositions,hierarchies,examples".to_string()];
    for i in 0..10 {
        scores.push(format!("g{i:02},{},{},{}", 10 + i, 2 + i % 3, i));
    }
    let scores_path = dir.join("scores.csv");
    fs::write(&scores_path, scores.join("\n") + "\n").unwrap();

    let ratings = dir.join("ratings.csv");
    fs::write(
        &ratings,
        "unit,channel,r1,r2\nu0,Cognitive,KS,KS\nu1,Cognitive,KM,KM\nu2,Cognitive,KS,KM\nu3,Cognitive,KD,KD\n",
    )
    .unwrap();

    (
        events.to_string_lossy().into_owned(),
        scores_path.to_string_lossy().into_owned(),
        ratings.to_string_lossy().into_owned(),
    )
}

#[test]
fn stagewise_flow_matches_pipeline() {
    let dir = tempdir().unwrap();
    let (events, _, _) = write_corpus(dir.path());
    let matrix = dir.path().join("matrix.csv");
    let clust = dir.path().join("clust");

    let out = mcsa(&["distances", "--events", &events, "--out", matrix.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = mcsa(&[
        "cluster",
        "--distances",
        matrix.to_str().unwrap(),
        "--k",
        "3",
        "--k-range",
        "2:5",
        "--out-dir",
        clust.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(clust.join("partition.csv").exists());
    assert!(clust.join("dendrogram.svg").exists());

    let stats = dir.path().join("stats.csv");
    let out = mcsa(&[
        "stats",
        "--events",
        &events,
        "--partition",
        clust.join("partition.csv").to_str().unwrap(),
        "--out",
        stats.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let stats_text = fs::read_to_string(&stats).unwrap();
    assert!(stats_text.starts_with("code,cluster1_mean,cluster1_sd"));
    // 14 default codes + header
    assert_eq!(stats_text.lines().count(), 15);
}

#[test]
fn ingest_reports_and_round_trips() {
    let dir = tempdir().unwrap();
    let (events, _, _) = write_corpus(dir.path());
    let out_path = dir.path().join("seqs.csv");
    let out = mcsa(&["ingest", "--events", &events, "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success());
    let summary = String::from_utf8_lossy(&out.stderr);
    assert!(summary.contains("10 sessions"), "{summary}");

    // canonical form re-ingests cleanly
    let out = mcsa(&["ingest", "--events", out_path.to_str().unwrap()]);
    assert!(out.status.success());
}

#[test]
fn reliability_emits_alpha_json() {
    let dir = tempdir().unwrap();
    let (_, _, ratings) = write_corpus(dir.path());
    let out = mcsa(&["reliability", "--ratings", &ratings]);
    assert!(out.status.success());
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let alpha = json["pooled"]["alpha"].as_f64().unwrap();
    assert!((-1.0..=1.0).contains(&alpha));
    assert!(json["pooled"]["coincidence"].is_array());
}

#[test]
fn conflict_policy_flag() {
    let dir = tempdir().unwrap();
    let events = dir.path().join("bad.csv");
    fs::write(
        &events,
        "session_id,unit_index,actor_id,modality,codes\ns1,0,a,verbal,KS|KM\ns1,1,a,verbal,Int-C\n",
    )
    .unwrap();
    let out = mcsa(&["ingest", "--events", events.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let msg = String::from_utf8_lossy(&out.stderr);
    assert!(msg.contains("s1") && msg.contains("Cognitive"), "{msg}");

    let out = mcsa(&[
        "ingest",
        "--events",
        events.to_str().unwrap(),
        "--on-conflict",
        "first",
    ]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("KS"));
}

#[test]
fn missing_input_exits_one_with_stage() {
    let dir = tempdir().unwrap();
    let out = mcsa(&[
        "run",
        "--events",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ingest"));
}

#[test]
fn no_cooccurrence_exits_two() {
    let dir = tempdir().unwrap();
    // single lone code per event: nothing ever co-occurs within the window
    let events = dir.path().join("solo.csv");
    fs::write(
        &events,
        "session_id,unit_index,actor_id,modality,codes\n\
         s1,0,a,verbal,KS\ns2,0,a,verbal,KS\ns3,0,a,verbal,KS\n",
    )
    .unwrap();
    let partition = dir.path().join("p.csv");
    fs::write(&partition, "session_id,cluster\ns1,1\ns2,1\ns3,2\n").unwrap();
    let out = mcsa(&[
        "ena",
        "--events",
        events.to_str().unwrap(),
        "--partition",
        partition.to_str().unwrap(),
        "--out-dir",
        dir.path().join("ena").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no co-occurrence structure"));
}

#[test]
fn full_run_reproduces_bytes_in_place() {
    let dir = tempdir().unwrap();
    let (events, scores, ratings) = write_corpus(dir.path());
    let out_dir = dir.path().join("out");
    let args = |workers: &str| {
        vec![
            "run".to_string(),
            "--events".into(),
            events.clone(),
            "--scores".into(),
            scores.clone(),
            "--ratings".into(),
            ratings.clone(),
            "--out-dir".into(),
            out_dir.to_string_lossy().into_owned(),
            "--k".into(),
            "3".into(),
            "--states".into(),
            "2:3".into(),
            "--restarts".into(),
            "2".into(),
            "--seed".into(),
            "11".into(),
            "--max-iter".into(),
            "40".into(),
            "--workers".into(),
            workers.to_string(),
        ]
    };
    let run = |workers: &str| {
        let argv = args(workers);
        let out = mcsa(&argv.iter().map(String::as_str).collect::<Vec<_>>());
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut snapshot = std::collections::BTreeMap::new();
        for entry in fs::read_dir(&out_dir).unwrap() {
            let entry = entry.unwrap();
            snapshot.insert(
                entry.file_name().to_string_lossy().into_owned(),
                fs::read(entry.path()).unwrap(),
            );
        }
        snapshot
    };
    let first = run("1");
    let second = run("1");
    assert_eq!(first, second, "same-seed runs differ");
    let parallel = run("4");
    assert_eq!(first, parallel, "worker count changed output bytes");
}

#[test]
fn score_subcommand_reports() {
    let dir = tempdir().unwrap();
    let (events, scores, _) = write_corpus(dir.path());
    let matrix = dir.path().join("m.csv");
    let clust = dir.path().join("c");
    assert!(mcsa(&["distances", "--events", &events, "--out", matrix.to_str().unwrap()])
        .status
        .success());
    assert!(mcsa(&[
        "cluster",
        "--distances",
        matrix.to_str().unwrap(),
        "--k",
        "3",
        "--k-range",
        "2:4",
        "--out-dir",
        clust.to_str().unwrap()
    ])
    .status
    .success());
    let out = mcsa(&[
        "score",
        "--scores",
        &scores,
        "--partition",
        clust.join("partition.csv").to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("cluster,n,mean,sd"));
}
