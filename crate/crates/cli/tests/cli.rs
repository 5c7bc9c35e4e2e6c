use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_infoalign"));
    c.env_remove("INFOALIGN_CONFIG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// Small synthetic graph shared by the training tests.
fn small_graph(dir: &Path) -> PathBuf {
    let d = dir.join("data");
    ok(&["synth", "--molecules-per-cluster", "6", "--morphology-dim", "12", "--expression-dim", "6", "--out", s(&d)]);
    ok(&["build-graph", "--config", s(&d.join("config.json"))]);
    d
}

const NODES: &str = "id\tkind\tsource_tag\tvalues\n\
m1\tmolecule\tchem\tCCO\n\
m2\tmolecule\tchem\tc1ccccc1O\n\
c1\tcell_morphology\tjump\t0.2\t0.9\t0.4\n\
g1\tgene\thet\n\
g2\tgene\thet\n";
const EDGES: &str = "src_id\tdst_id\trelation\tweight\n\
m1\tc1\tperturbation\t0.3\n\
m2\tc1\tperturbation\t1\n\
m1\tg1\tgene_molecule\t0.5\n\
g1\tg2\tgene_gene\t0.7\n";

#[test]
fn build_graph_reports_exact_counts_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let (n, e) = (dir.path().join("n.tsv"), dir.path().join("e.tsv"));
    fs::write(&n, NODES).unwrap();
    fs::write(&e, EDGES).unwrap();
    let g1 = dir.path().join("one/g.ctxg");
    let g2 = dir.path().join("two.ctxg");
    ok(&["build-graph", "--nodes", s(&n), "--edges", s(&e), "--out", s(&g1)]);
    ok(&["build-graph", "--nodes", s(&n), "--edges", s(&e), "--out", s(&g2)]);
    assert_eq!(fs::read(&g1).unwrap(), fs::read(&g2).unwrap());
    assert_eq!(&fs::read(&g1).unwrap()[..4], b"CTXG");

    let stats = json(&dir.path().join("one/g.ctxg.stats.json"));
    let st = &stats["stats"];
    assert_eq!(st["node_count"], 5);
    assert_eq!(st["edge_count"], 4);
    assert_eq!(st["nodes_per_kind"]["molecule"], 2);
    assert_eq!(st["nodes_per_kind"]["cell_morphology"], 1);
    assert_eq!(st["nodes_per_kind"]["gene"], 2);
    assert_eq!(st["edges_per_relation"]["perturbation"], 2);
    assert_eq!(st["edges_per_relation"]["gene_molecule"], 1);
    assert_eq!(st["edges_per_relation"]["gene_gene"], 1);
    assert_eq!(stats["checksum"].as_str().unwrap().len(), 16);
}

#[test]
fn malformed_tables_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let (n, e) = (dir.path().join("n.tsv"), dir.path().join("e.tsv"));
    fs::write(&n, NODES).unwrap();
    fs::write(&e, EDGES.replace("0.5", "heavy")).unwrap();
    let out = run(&["build-graph", "--nodes", s(&n), "--edges", s(&e), "--out", s(&dir.path().join("g"))]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 4"), "{err}");
    assert!(!dir.path().join("g").exists());
}

#[test]
fn synth_writes_planted_tables() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", s(dir.path())]);
    let nodes = fs::read_to_string(dir.path().join("nodes.tsv")).unwrap();
    let count = |k: &str| nodes.lines().filter(|l| l.split('\t').nth(1) == Some(k)).count();
    assert_eq!(count("molecule"), 200);
    assert_eq!(count("cell_morphology"), 200);
    let labels = fs::read_to_string(dir.path().join("labels.tsv")).unwrap();
    assert_eq!(labels.lines().count(), 201);
    let cfg = json(&dir.path().join("config.json"));
    assert_eq!(cfg["paths"]["nodes"], "nodes.tsv");
    assert_eq!(cfg["synth"]["noise"], 0.1);

    let quiet = dir.path().join("quiet");
    ok(&["synth", "--noise", "0", "--molecules-per-cluster", "5", "--out", s(&quiet)]);
    let nodes = fs::read_to_string(quiet.join("nodes.tsv")).unwrap();
    let mut profiles: Vec<&str> = nodes
        .lines()
        .filter(|l| l.split('\t').nth(1) == Some("cell_morphology"))
        .map(|l| l.split_once("synth\t").unwrap().1)
        .collect();
    profiles.sort();
    profiles.dedup();
    assert_eq!(profiles.len(), 2);
}

#[test]
fn pretrain_logs_resumes_and_sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let d = small_graph(dir.path());
    let cfg = d.join("config.json");
    let run5 = dir.path().join("run5");
    ok(&["pretrain", "--config", s(&cfg), "--epochs", "5", "--latent-dim", "8", "--out", s(&run5)]);
    let log = fs::read_to_string(run5.join("loss.tsv")).unwrap();
    assert_eq!(log.lines().count(), 1 + 5);
    assert!(log.starts_with("epoch\tsteps\ttotal\trecon\tkl\tbeta\twalk_length"));
    assert_eq!(&fs::read(run5.join("checkpoint.iapt")).unwrap()[..4], b"IAPT");

    // Two epochs, then three more from the checkpoint, equals five straight.
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["pretrain", "--config", s(&cfg), "--epochs", "2", "--latent-dim", "8", "--out", s(&a)]);
    ok(&[
        "pretrain", "--config", s(&cfg), "--epochs", "5", "--latent-dim", "8",
        "--resume", s(&a.join("checkpoint.iapt")), "--out", s(&b),
    ]);
    let resumed = fs::read_to_string(b.join("loss.tsv")).unwrap();
    let steps = |t: &str| -> Vec<u64> { t.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap().parse().unwrap()).collect() };
    let first = steps(&fs::read_to_string(a.join("loss.tsv")).unwrap());
    let later = steps(&resumed);
    assert_eq!(later.len(), 3);
    assert!(later[0] > *first.last().unwrap());
    assert_eq!(later, steps(&log)[2..]);
    assert_eq!(fs::read(b.join("checkpoint.iapt")).unwrap(), fs::read(run5.join("checkpoint.iapt")).unwrap());

    let sweep = dir.path().join("sweep");
    ok(&[
        "pretrain", "--config", s(&cfg), "--epochs", "1", "--latent-dim", "8",
        "--sweep-beta", "1e-9,1e-5,1e-1,1", "--out", s(&sweep),
    ]);
    let runs: Vec<_> = fs::read_dir(&sweep)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    assert_eq!(runs.len(), 4);
    for r in &runs {
        assert!(r.join("checkpoint.iapt").is_file() && r.join("loss.tsv").is_file());
    }
    assert_eq!(fs::read_to_string(sweep.join("sweep.tsv")).unwrap().lines().count(), 5);
}

#[test]
fn echoed_config_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let d = small_graph(dir.path());
    let first = dir.path().join("first");
    ok(&[
        "pretrain", "--config", s(&d.join("config.json")), "--seed", "4", "--epochs", "2",
        "--beta", "0.01", "--latent-dim", "8", "--out", s(&first),
    ]);
    let echo = first.join("config.json");
    assert_eq!(json(&echo)["train"]["beta"], 0.01);
    // Relative paths in the echo would resolve against `first/`, so pass the graph.
    let again = dir.path().join("again");
    ok(&["pretrain", "--config", s(&echo), "--graph", s(&d.join("graph.ctxg")), "--out", s(&again)]);
    assert_eq!(
        fs::read(first.join("checkpoint.iapt")).unwrap(),
        fs::read(again.join("checkpoint.iapt")).unwrap()
    );
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = small_graph(dir.path());
    let cfg = d.join("config.json");
    let graph2 = dir.path().join("g2.ctxg");
    ok(&["build-graph", "--config", s(&cfg), "--out", s(&graph2)]);
    assert_eq!(fs::read(d.join("graph.ctxg")).unwrap(), fs::read(&graph2).unwrap());

    let mut ckpts = Vec::new();
    let mut embeds = Vec::new();
    for r in ["r1", "r2"] {
        let out = dir.path().join(r);
        ok(&["pretrain", "--config", s(&cfg), "--epochs", "2", "--latent-dim", "8", "--out", s(&out)]);
        ckpts.push(fs::read(out.join("checkpoint.iapt")).unwrap());
        let e = ok(&["embed", "--checkpoint", s(&out.join("checkpoint.iapt")), "--graph", s(&d.join("graph.ctxg"))]);
        embeds.push(e.stdout);
    }
    assert_eq!(ckpts[0], ckpts[1]);
    assert_eq!(embeds[0], embeds[1]);

    let a = ok(&["mi-bench", "--exact", "--joints", "4"]).stdout;
    let b = ok(&["mi-bench", "--exact", "--joints", "4"]).stdout;
    assert_eq!(a, b);
}

#[test]
fn embed_eval_and_match() {
    let dir = tempfile::tempdir().unwrap();
    let d = small_graph(dir.path());
    let run = dir.path().join("run");
    ok(&["pretrain", "--config", s(&d.join("config.json")), "--epochs", "1", "--latent-dim", "8", "--out", s(&run)]);
    let ckpt = run.join("checkpoint.iapt");

    let smi = dir.path().join("three.smi");
    fs::write(&smi, "# three molecules\nCCO\nq1\tc1ccccc1N\n\nCC(=O)O\n").unwrap();
    let out = ok(&["embed", "--checkpoint", s(&ckpt), "--smiles", s(&smi)]);
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0][0], "id");
    assert_eq!(rows[2][0], "q1");
    assert!(rows.iter().all(|r| r.len() == 1 + 8));

    let emb = dir.path().join("emb.tsv");
    ok(&["embed", "--checkpoint", s(&ckpt), "--graph", s(&d.join("graph.ctxg")), "--out", s(&emb)]);
    let report = dir.path().join("eval.json");
    let head = dir.path().join("head.json");
    ok(&[
        "eval", "--embeddings", s(&emb), "--labels", s(&d.join("labels.tsv")),
        "--save-head", s(&head), "--out", s(&report),
    ]);
    let r = json(&report);
    assert_eq!(r["split"]["train"].as_u64().unwrap() + r["split"]["valid"].as_u64().unwrap() + r["split"]["test"].as_u64().unwrap(), 12);
    let auc = r["test"]["auc_avg"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&auc));
    assert!(r["test"].get("auc_above_80").is_some());
    assert!(head.is_file());

    // Queries are two graph molecules; candidates are their morphology rows.
    let nodes = fs::read_to_string(d.join("nodes.tsv")).unwrap();
    let find = |id: &str| nodes.lines().find(|l| l.starts_with(&format!("{id}\t"))).unwrap().to_string();
    let smiles = |id: &str| find(id).split('\t').nth(3).unwrap().to_string();
    let features = |id: &str| find(id).split('\t').skip(3).collect::<Vec<_>>().join("\t");
    let q = dir.path().join("q.tsv");
    let c = dir.path().join("c.tsv");
    let t = dir.path().join("t.tsv");
    fs::write(&q, format!("mol0000\t{}\nmol0001\t{}\n", smiles("mol0000"), smiles("mol0001"))).unwrap();
    fs::write(&c, format!("morph0000\t{}\nmorph0001\t{}\n", features("morph0000"), features("morph0001"))).unwrap();
    fs::write(&t, "query_id\tcandidate_id\nmol0000\tmorph0000\nmol0001\tmorph0001\n").unwrap();
    let out = ok(&[
        "match", "--checkpoint", s(&ckpt), "--queries", s(&q), "--candidates", s(&c),
        "--truth", s(&t), "--ks", "1,2",
    ]);
    let m: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(m["rankings"].as_array().unwrap().len(), 2);
    assert_eq!(m["hit"]["2"], 1.0);
    assert!(m["ndcg"]["1"].as_f64().is_some());
}

#[test]
fn walk_and_fingerprint_tables() {
    let dir = tempfile::tempdir().unwrap();
    let d = small_graph(dir.path());
    let out = ok(&["walk", "--config", s(&d.join("config.json")), "--starts", "mol0000,mol0003", "--walks", "3", "--length", "5"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("start_id\tposition\tnode_id\talpha"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 2 * 3 * 5);
    for r in &rows {
        let alpha: f64 = r[3].parse().unwrap();
        assert!(alpha > 0.0 && alpha <= 1.0);
        if r[1] == "0" {
            assert_eq!(r[0], r[2]);
            assert_eq!(alpha, 1.0);
        }
    }
    assert!(run(&["walk", "--config", s(&d.join("config.json")), "--starts", "nobody"]).status.code() == Some(1));

    let smi = dir.path().join("in.smi");
    fs::write(&smi, "CCO\n#skip\nc1ccccc1\n").unwrap();
    let out = ok(&["fingerprint", s(&smi), "--nbits", "256"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().all(|l| l.len() == 256 / 4 && l.chars().all(|c| c.is_ascii_hexdigit())));

    fs::write(&smi, "CCO\nC1CC\n").unwrap();
    let out = run(&["fingerprint", s(&smi)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains(":2:"));
}

#[test]
fn mi_bench_reports_no_violations() {
    let out = ok(&["mi-bench", "--exact"]);
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["violations"], 0);
    assert_eq!(r["pass"], true);
    assert_eq!(r["mode"], "exact");
    assert!(r["configs"].as_array().unwrap().len() >= 60);
    assert_eq!(r["config"]["ks"], serde_json::json!([2, 8, 32]));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["pretrain", "--no-such-flag"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["embed", "--smiles", "x.smi"]).status.code(), Some(2));
    assert_eq!(run(&["pretrain", "--beta", "-1", "--graph", "g", "--out", "o"]).status.code(), Some(2));
    assert_eq!(run(&["embed", "--checkpoint", "/nonexistent.iapt", "--smiles", "x"]).status.code(), Some(1));
    assert_eq!(run(&["mi-bench", "--exact", "--trials", "10"]).status.code(), Some(2));
}

#[test]
fn config_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"mi": {"joints": 2, "ks": [2]}}"#).unwrap();
    let out = bin().args(["mi-bench"]).env("INFOALIGN_CONFIG", &cfg).output().unwrap();
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["config"]["joints"], 2);

    // Flags beat the file.
    let out = bin().args(["mi-bench", "--joints", "3"]).env("INFOALIGN_CONFIG", &cfg).output().unwrap();
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["config"]["joints"], 3);

    fs::write(&cfg, r#"{"mi": {"jionts": 2}}"#).unwrap();
    let out = bin().args(["mi-bench"]).env("INFOALIGN_CONFIG", &cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}
