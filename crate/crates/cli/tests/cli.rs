use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn expsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_expsum"))
        .args(args)
        .env("RUST_LOG", "warn")
        .env_remove("EXPSUM_CONFIG")
        .env_remove("OPENAI_API_KEY")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn lines(p: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(p).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(code(&expsum(&["--help"])), 0);
    assert_eq!(code(&expsum(&["extract", "--bogus"])), 1);
    assert_eq!(code(&expsum(&["--jobs", "0", "stats", "--in", "x.jsonl"])), 1);
    let corpus = fixture("e2e/corpus.jsonl");
    let o = expsum(&["plan", "--in", s(&corpus), "--pairs", "p", "--strategy", "middle-3", "--out", "o"]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn extract_rule_writes_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pairs.jsonl");
    let o = expsum(&["extract", "--method", "rule", "--in", s(&fixture("e2e/corpus.jsonl")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = lines(&out);
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[0]["provenance"], "rule-based");
}

#[test]
fn malformed_corpus_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "{\"id\":\"a\",\"document\":\"D.\",\"summary\":\"S.\",\"split\":\"test\"}\nnot json\n").unwrap();
    let out = dir.path().join("pairs.jsonl");
    assert_eq!(code(&expsum(&["extract", "--in", s(&bad), "--out", s(&out)])), 2);
    // Skipping keeps the good record.
    assert_eq!(code(&expsum(&["extract", "--in", s(&bad), "--skip-bad", "--out", s(&out)])), 0);
    assert_eq!(lines(&out).len(), 1);
}

#[test]
fn gateway_failure_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let empty_stub = dir.path().join("stub");
    fs::create_dir(&empty_stub).unwrap();
    let out = dir.path().join("s.jsonl");
    let corpus = fixture("e2e/corpus.jsonl");
    let o = expsum(&["--stub-gateway", s(&empty_stub), "summarize", "--in", s(&corpus), "--mode", "zero-shot", "--out", s(&out)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn missing_api_key_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s.jsonl");
    let o = expsum(&["summarize", "--in", s(&fixture("e2e/corpus.jsonl")), "--mode", "zero-shot", "--out", s(&out)]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stderr).contains("OPENAI_API_KEY"));
}

#[test]
fn augment_perturb_and_delete() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let corpus = fixture("e2e/corpus.jsonl");
    let stub = fixture("e2e/stub");
    let o = expsum(&["--stub-gateway", s(&stub), "augment", "--in", s(&corpus), "--out", s(&p("aug.jsonl"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let aug = lines(&p("aug.jsonl"));
    let total: usize = aug.iter().map(|r| r["plan"]["questions"].as_array().unwrap().len()).sum();
    assert_eq!(total, 8);

    let o = expsum(&["perturb", "--in", s(&p("aug.jsonl")), "--delete", "comparison", "--out", s(&p("del.jsonl"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let left: Vec<String> = lines(&p("del.jsonl"))
        .iter()
        .flat_map(|r| r["plan"]["questions"].as_array().unwrap().clone())
        .map(|q| q["category"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(left.len(), 6);
    assert!(!left.contains(&"Comparison".to_string()));

    fs::write(p("pool.txt"), "Is the moon made of cheese\nWhy do cats purr?\n").unwrap();
    let (aug_path, pool) = (p("aug.jsonl"), p("pool.txt"));
    let args = ["--seed", "9", "perturb", "--in", s(&aug_path), "--mode", "frr", "--pool", s(&pool), "--out"];
    let o = expsum(&[&args[..], &[s(&p("frr.jsonl"))]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for r in lines(&p("frr.jsonl")) {
        for q in r["plan"]["questions"].as_array().unwrap() {
            let t = q["text"].as_str().unwrap();
            assert!(t == "Is the moon made of cheese?" || t == "Why do cats purr?", "{t}");
        }
    }
    // Same seed, same bytes.
    expsum(&[&args[..], &[s(&p("frr2.jsonl"))]].concat());
    assert_eq!(fs::read(p("frr.jsonl")).unwrap(), fs::read(p("frr2.jsonl")).unwrap());
}

#[test]
fn edu_level_rr_keeps_targets() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let corpus = fixture("e2e/corpus.jsonl");
    assert_eq!(code(&expsum(&["extract", "--in", s(&corpus), "--out", s(&p("pairs.jsonl"))])), 0);
    let o = expsum(&["perturb", "--level", "edu", "--mode", "rr", "--count", "1", "--in", s(&p("pairs.jsonl")), "--out", s(&p("rr.jsonl"))]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for (a, b) in lines(&p("pairs.jsonl")).iter().zip(lines(&p("rr.jsonl"))) {
        let targets = |v: &serde_json::Value| -> Vec<u64> {
            let mut t: Vec<u64> = v["pairs"].as_array().unwrap().iter().map(|p| p["target_edu"].as_u64().unwrap()).collect();
            t.sort();
            t
        };
        assert_eq!(targets(a), targets(&b));
        assert_eq!(a["units"], b["units"]);
    }
}

#[test]
fn consistency_and_metrics_merge() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let corpus = fixture("e2e/corpus.jsonl");
    fs::write(
        p("cands.jsonl"),
        "{\"id\":\"sn-001\",\"summary\":\"The Cerebellum coordinates movement. Mice stumbled when cells were silenced.\"}\n",
    )
    .unwrap();
    let o = expsum(&[
        "consistency", "--candidates", s(&p("cands.jsonl")), "--corpus", s(&corpus), "--out", s(&p("c.jsonl")),
        "--star", "--retrieval-dir", s(&fixture("retrieval")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let c = &lines(&p("c.jsonl"))[0];
    let (conv, star) = (c["summac"].as_f64().unwrap(), c["summac_star"].as_f64().unwrap());
    assert!(star >= conv);
    assert_eq!(c["sentences"][0]["retrieved_scores"][0]["title"], "Cerebellum");

    let o = expsum(&[
        "metrics", "--candidates", s(&p("cands.jsonl")), "--corpus", s(&corpus), "--out", s(&p("m.jsonl")),
        "--consistency", s(&p("c.jsonl")), "--aggregate", s(&p("agg.tsv")),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&p("m.jsonl"))[0]["summac_star"].as_f64().unwrap(), star);
    let agg = fs::read_to_string(p("agg.tsv")).unwrap();
    assert!(agg.lines().nth(1).unwrap().ends_with(&format!("{:.2}/{:.2}", conv * 100.0, star * 100.0)), "{agg}");
}

#[test]
fn stats_table() {
    let o = expsum(&["stats", "--in", s(&fixture("e2e/corpus.jsonl")), "--name", "fixture"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = out.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(&row[..4], ["fixture", "0", "0", "5"]);
}

#[test]
fn config_file_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "seed = 5\nprofile = \"plos\"\n").unwrap();
    let corpus = fixture("e2e/corpus.jsonl");
    let stub = fixture("e2e/stub");
    let run = |extra: &[&str], out: &str| {
        let out = dir.path().join(out);
        let base = ["--config", s(&cfg), "--stub-gateway", s(&stub)];
        let rest = ["augment", "--in", s(&corpus), "--strategy", "random-k", "--out", s(&out)];
        let o = expsum(&[&base[..], extra, &rest[..]].concat());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        lines(&out)
    };
    // plos: K = 2.
    for r in run(&[], "a.jsonl") {
        assert_eq!(r["plan"]["questions"].as_array().unwrap().len(), 2);
    }
    let seeds = |v: &[serde_json::Value]| v.iter().map(|r| r["plan"]["seed"].clone()).collect::<Vec<_>>();
    let (a, b) = (run(&[], "a.jsonl"), run(&["--seed", "6"], "b.jsonl"));
    assert_ne!(seeds(&a), seeds(&b));
}
