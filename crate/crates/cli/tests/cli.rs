use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn kmf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kmf"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = kmf(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Synthetic dataset, topics and a short config under `dir`.
fn setup(dir: &Path) {
    let data = dir.join("data");
    ok(&[
        "--seed",
        "2",
        "synth",
        "--nodes-per-class",
        "30",
        "-o",
        p(&data),
    ]);
    ok(&[
        "topics",
        "build",
        "--kg",
        p(&data.join("kg.tsv")),
        "--labels",
        p(&data.join("labels.tsv")),
        "--emb",
        p(&data.join("emb.txt")),
        "-R",
        "2",
        "-P",
        "25",
        "-o",
        p(&dir.join("topics.jsonl")),
    ]);
    fs::write(
        dir.join("cfg.toml"),
        "epochs = 5\nlearning_rate = 0.01\nmin_count = 2\n\n[split]\ntrain = 4\nunseen = 2\n",
    )
    .unwrap();
}

fn inputs(dir: &Path) -> Vec<String> {
    let data = dir.join("data");
    [
        "--dataset",
        p(&data),
        "--topics",
        p(&dir.join("topics.jsonl")),
        "--emb",
        p(&data.join("emb.txt")),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

fn train(dir: &Path, run: &str) -> serde_json::Value {
    let run = dir.join(run);
    let mut args = vec![
        "--config".to_string(),
        p(&dir.join("cfg.toml")).to_string(),
        "--out".into(),
        p(&run).into(),
        "train".into(),
    ];
    args.extend(inputs(dir));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    serde_json::from_str(&ok(&refs)).unwrap()
}

#[test]
fn full_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    let data = dir.join("data");
    for f in ["nodes.tsv", "edges.tsv", "kg.tsv", "labels.tsv", "emb.txt"] {
        assert!(data.join(f).exists(), "{f}");
    }
    assert_eq!(
        fs::read_to_string(dir.join("topics.jsonl"))
            .unwrap()
            .lines()
            .count(),
        6
    );

    let prep = dir.join("prep");
    ok(&[
        "--config",
        p(&dir.join("cfg.toml")),
        "prep",
        "--dataset",
        p(&data),
        "--topics",
        p(&dir.join("topics.jsonl")),
        "-o",
        p(&prep),
    ]);
    assert_eq!(
        fs::read_to_string(prep.join("overlaps.jsonl"))
            .unwrap()
            .lines()
            .count(),
        180
    );
    let facets = dir.join("facets");
    ok(&[
        "facets",
        "--overlaps",
        p(&prep),
        "--emb",
        p(&data.join("emb.txt")),
        "-o",
        p(&facets),
        "--tau",
        "10",
    ]);
    assert!(fs::read(facets.join("facets.bin"))
        .unwrap()
        .starts_with(b"KMFT"));
    assert_eq!(
        fs::read_to_string(facets.join("composed.tsv"))
            .unwrap()
            .lines()
            .count(),
        180
    );

    let summary = train(dir, "run");
    assert_eq!(summary["unseen_classes"].as_array().unwrap().len(), 2);
    let metrics = fs::read_to_string(dir.join("run/metrics.jsonl")).unwrap();
    assert_eq!(metrics.lines().count(), 5);
    let first: serde_json::Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    for key in ["epoch", "L_c", "L_cl", "L_d", "L_r", "L"] {
        assert!(first.get(key).is_some(), "{key}");
    }
    let ckpt = dir.join("run/checkpoint.kmf");
    assert!(fs::read(&ckpt).unwrap().starts_with(b"KMF1"));

    let with_ckpt = |verb: &str, extra: &[&str]| {
        let mut args = vec![verb.to_string()];
        args.extend(inputs(dir));
        args.extend(["--checkpoint".to_string(), p(&ckpt).to_string()]);
        args.extend(extra.iter().map(|s| s.to_string()));
        let refs: Vec<&str> = args.iter().map(String::as_str).collect();
        ok(&refs)
    };
    let eval: serde_json::Value = serde_json::from_str(&with_ckpt("eval", &[])).unwrap();
    assert_eq!(eval["test_nodes"], 60);
    let acc = eval["accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let predictions = with_ckpt("predict", &[]);
    assert_eq!(predictions.lines().count(), 60);
    let unseen: Vec<&str> = summary["unseen_classes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert!(predictions
        .lines()
        .all(|l| unseen.contains(&l.split('\t').nth(1).unwrap())));
    assert_eq!(
        with_ckpt("predict", &["--targets", "all"]).lines().count(),
        180
    );

    let rec: serde_json::Value = serde_json::from_str(&with_ckpt(
        "recsys",
        &["--class", "topic0", "--neg-pool", "domain"],
    ))
    .unwrap();
    for split in ["train", "test"] {
        for m in ["auc", "hit_rate", "mrr"] {
            let v = rec[split][m].as_f64().unwrap();
            assert!((0.0..=1.0).contains(&v), "{split} {m} {v}");
        }
    }

    let emb = dir.join("emb.tsv");
    with_ckpt("export-emb", &["-o", p(&emb)]);
    let rows = fs::read_to_string(&emb).unwrap();
    assert_eq!(rows.lines().count(), 180);
    assert_eq!(rows.lines().next().unwrap().split('\t').count(), 2 + 32);
}

#[test]
fn training_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    let a = train(dir, "a");
    let b = train(dir, "b");
    assert_eq!(a["hash"], b["hash"]);
    assert_eq!(
        fs::read(dir.join("a/metrics.jsonl")).unwrap(),
        fs::read(dir.join("b/metrics.jsonl")).unwrap()
    );
    assert_eq!(
        fs::read(dir.join("a/checkpoint.kmf")).unwrap(),
        fs::read(dir.join("b/checkpoint.kmf")).unwrap()
    );
}

#[test]
fn gradcheck_passes() {
    let out: serde_json::Value = serde_json::from_str(&ok(&["gradcheck", "--seed", "4"])).unwrap();
    assert_eq!(out["pass"], true);
    assert!(out["max_relative_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn bad_inputs_fail_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    setup(dir);
    fs::write(dir.join("bad.toml"), "no_such_key = 1\n").unwrap();
    let mut args = vec![
        "--config".to_string(),
        p(&dir.join("bad.toml")).to_string(),
        "train".into(),
    ];
    args.extend(inputs(dir));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = kmf(&refs);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));

    let mut args = vec!["train".to_string(), "--variant".into(), "KMF-Z".into()];
    args.extend(inputs(dir));
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    assert!(!kmf(&refs).status.success());

    let out = kmf(&[
        "eval",
        "--dataset",
        "/nonexistent",
        "--topics",
        "x",
        "--emb",
        "y",
        "--checkpoint",
        "z",
    ]);
    assert!(!out.status.success());
}
