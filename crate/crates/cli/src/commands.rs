use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use infoalign_core::config::RunConfig;
use infoalign_core::ctxgraph::tables::build_from_tables;
use infoalign_core::ctxgraph::{load_graph, save_graph, ContextGraph, NodeIdx};
use infoalign_core::diffcore::{load_checkpoint, save_checkpoint};
use infoalign_core::evalkit::tsv::{join_labeled, read_matrix, write_matrix};
use infoalign_core::evalkit::{match_zero_shot, probe_eval, probe_train, split_random, DEFAULT_RATIOS};
use infoalign_core::fingerprint::morgan_fingerprint;
use infoalign_core::mibounds::mi_bench;
use infoalign_core::model::{embed, pretrain, pretrain_resume, InfoAlign, TrainConfig, TrainOutcome};
use infoalign_core::molparse::{parse_smiles, smiles_lines, MolecularGraph};
use infoalign_core::synth::generate;
use infoalign_core::walker::{batch_walks, TransitionMode};
use serde_json::{json, Value};

use crate::args::*;

/// Bad invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Effective config plus the directory its relative paths resolve against.
struct Loaded {
    cfg: RunConfig,
    base: PathBuf,
}

impl Loaded {
    fn path(&self, p: &Option<PathBuf>) -> Option<PathBuf> {
        p.as_ref().map(|p| self.base.join(p))
    }
}

fn load_config(common: &Common, apply: impl FnOnce(&mut RunConfig)) -> Result<Loaded> {
    let mut cfg = RunConfig::resolve(common.config.as_deref()).map_err(|e| usage(e.to_string()))?;
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    apply(&mut cfg);
    cfg.sync_seeds();
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let base = common
        .config
        .as_deref()
        .and_then(Path::parent)
        .map(Path::to_path_buf)
        .unwrap_or_default();
    Ok(Loaded { cfg, base })
}

fn required(flag: Option<PathBuf>, from_config: Option<PathBuf>, name: &str) -> Result<PathBuf> {
    flag.or(from_config)
        .ok_or_else(|| usage(format!("missing --{name} (not set in the config either)")))
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("cannot write {}", path.display()))
}

/// Writes to `out`, or stdout when no path is given.
fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => write_file(p, bytes),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(bytes)?;
            Ok(stdout.flush()?)
        }
    }
}

fn pretty(v: &impl serde::Serialize) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

/// Lines of `smiles` or `id<TAB>smiles`; a bare SMILES is its own id.
fn read_molecules(path: &Path) -> Result<Vec<(String, MolecularGraph)>> {
    let text = read_text(path)?;
    smiles_lines(&text)
        .map(|(line, l)| {
            let (id, smiles) = l.split_once('\t').map_or((l, l), |(a, b)| (a.trim(), b.trim()));
            let g = parse_smiles(smiles).with_context(|| format!("{}:{line}: {smiles:?}", path.display()))?;
            Ok((id.to_string(), g))
        })
        .collect()
}

fn open_graph(path: &Path) -> Result<ContextGraph> {
    load_graph(path).with_context(|| format!("cannot load graph {}", path.display()))
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::BuildGraph(a) => build_graph(a),
        Command::Walk(a) => walk(a),
        Command::Fingerprint(a) => fingerprint(a),
        Command::Pretrain(a) => pretrain_cmd(a),
        Command::Embed(a) => embed_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Match(a) => match_cmd(a),
        Command::MiBench(a) => mi_bench_cmd(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let l = load_config(&a.common, |c| {
        let s = &mut c.synth;
        s.clusters = a.clusters.unwrap_or(s.clusters);
        s.molecules_per_cluster = a.molecules_per_cluster.unwrap_or(s.molecules_per_cluster);
        s.noise = a.noise.unwrap_or(s.noise);
        s.morphology_dim = a.morphology_dim.unwrap_or(s.morphology_dim);
        s.expression_dim = a.expression_dim.unwrap_or(s.expression_dim);
    })?;
    let dir = a.common.out.ok_or_else(|| usage("synth needs --out DIR"))?;
    let data = generate(&l.cfg.synth)?;
    write_file(&dir.join("nodes.tsv"), data.nodes_tsv.as_bytes())?;
    write_file(&dir.join("edges.tsv"), data.edges_tsv.as_bytes())?;
    write_file(&dir.join("labels.tsv"), data.labels_tsv.as_bytes())?;

    // A config that builds the matching graph; paths resolve against its directory.
    let mut cfg = l.cfg;
    cfg.graph = data.build_options();
    cfg.paths.nodes = Some("nodes.tsv".into());
    cfg.paths.edges = Some("edges.tsv".into());
    cfg.paths.graph = Some("graph.ctxg".into());
    write_file(&dir.join("config.json"), &pretty(&cfg))?;
    eprintln!("wrote {} molecules to {}", data.molecules.len(), dir.display());
    Ok(())
}

fn build_graph(a: BuildGraphArgs) -> Result<()> {
    let l = load_config(&a.common, |_| {})?;
    let nodes = required(a.nodes, l.path(&l.cfg.paths.nodes), "nodes")?;
    let edges = required(a.edges, l.path(&l.cfg.paths.edges), "edges")?;
    let out = required(a.common.out, l.path(&l.cfg.paths.graph), "out")?;
    let g = build_from_tables(&read_text(&nodes)?, &read_text(&edges)?, &l.cfg.graph)
        .with_context(|| format!("building graph from {} and {}", nodes.display(), edges.display()))?;
    if let Some(d) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    save_graph(&g, &out).with_context(|| format!("cannot write {}", out.display()))?;
    let stats = json!({
        "checksum": format!("{:016x}", g.checksum()?),
        "stats": g.stats(),
    });
    let stats_path = a.stats.unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".stats.json");
        s.into()
    });
    write_file(&stats_path, &pretty(&stats))?;
    eprintln!("graph: {} nodes, {} edges", g.node_count(), g.edge_count());
    Ok(())
}

fn walk(a: WalkArgs) -> Result<()> {
    let l = load_config(&a.common, |c| {
        let w = &mut c.train.walk;
        w.length = a.length.unwrap_or(w.length);
        w.walks_per_molecule = a.walks.unwrap_or(w.walks_per_molecule);
        if a.uniform {
            w.mode = TransitionMode::Uniform;
        }
    })?;
    let g = open_graph(&required(a.graph, l.path(&l.cfg.paths.graph), "graph")?)?;
    let starts: Vec<NodeIdx> = if a.starts.is_empty() {
        g.molecule_nodes().collect()
    } else {
        a.starts
            .iter()
            .map(|id| g.node_idx(id).ok_or_else(|| anyhow!("unknown start node {id:?}")))
            .collect::<Result<_>>()?
    };
    let paths = batch_walks(&g, &starts, &l.cfg.train.walk)?;
    let mut out = String::from("start_id\tposition\tnode_id\talpha\n");
    for p in &paths {
        let start = &g.node(p.start()).id;
        for (pos, &n) in p.nodes.iter().enumerate() {
            let alpha = if pos == 0 { 1.0 } else { p.alphas[pos - 1] };
            out.push_str(&format!("{start}\t{pos}\t{}\t{alpha}\n", g.node(n).id));
        }
    }
    emit(a.common.out.as_deref(), out.as_bytes())
}

fn fingerprint(a: FingerprintArgs) -> Result<()> {
    let l = load_config(&a.common, |c| {
        c.graph.fp_radius = a.radius.unwrap_or(c.graph.fp_radius);
        c.graph.fp_bits = a.nbits.unwrap_or(c.graph.fp_bits);
    })?;
    let text = read_text(&a.input)?;
    let mut out = String::new();
    for (line, smiles) in smiles_lines(&text) {
        let g = parse_smiles(smiles).with_context(|| format!("{}:{line}: {smiles:?}", a.input.display()))?;
        let fp = morgan_fingerprint(&g, l.cfg.graph.fp_radius, l.cfg.graph.fp_bits)
            .map_err(|e| usage(e.to_string()))?;
        out.push_str(&fp.to_hex());
        out.push('\n');
    }
    emit(a.common.out.as_deref(), out.as_bytes())
}

fn loss_tsv(outcome: &TrainOutcome) -> String {
    let kinds: BTreeSet<&String> = outcome.log.iter().flat_map(|e| e.loss.recon_per_modality.keys()).collect();
    let mut s = String::from("epoch\tsteps\ttotal\trecon\tkl\tbeta\twalk_length");
    for k in &kinds {
        s.push_str(&format!("\trecon_{k}"));
    }
    s.push('\n');
    for e in &outcome.log {
        let b = &e.loss;
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            e.epoch,
            e.steps,
            b.total,
            b.recon(),
            b.kl,
            b.beta,
            b.walk_length
        ));
        for k in &kinds {
            s.push_str(&format!("\t{}", b.recon_per_modality.get(*k).copied().unwrap_or(0.0)));
        }
        s.push('\n');
    }
    s
}

fn train_into(g: &ContextGraph, cfg: &RunConfig, train: &TrainConfig, dir: &Path, resume: Option<&Path>) -> Result<TrainOutcome> {
    let outcome = match resume {
        Some(p) => {
            let ck = load_checkpoint(p).with_context(|| format!("cannot load checkpoint {}", p.display()))?;
            pretrain_resume(g, train, &ck)?
        }
        None => pretrain(g, train)?,
    };
    let ckpt = dir.join("checkpoint.iapt");
    if let Some(d) = ckpt.parent() {
        fs::create_dir_all(d).with_context(|| format!("cannot create {}", d.display()))?;
    }
    save_checkpoint(&ckpt, &outcome.checkpoint()).with_context(|| format!("cannot write {}", ckpt.display()))?;
    write_file(&dir.join("loss.tsv"), loss_tsv(&outcome).as_bytes())?;
    let mut echo = cfg.clone();
    echo.train = train.clone();
    write_file(&dir.join("config.json"), &pretty(&echo))?;
    Ok(outcome)
}

fn pretrain_cmd(a: PretrainArgs) -> Result<()> {
    let l = load_config(&a.common, |c| {
        let t = &mut c.train;
        t.epochs = a.epochs.unwrap_or(t.epochs);
        t.beta = a.beta.unwrap_or(t.beta);
        t.walk.length = a.length.unwrap_or(t.walk.length);
        t.adam.lr = a.lr.unwrap_or(t.adam.lr);
        t.batch_size = a.batch_size.unwrap_or(t.batch_size);
        t.model.latent_dim = a.latent_dim.unwrap_or(t.model.latent_dim);
    })?;
    let g = open_graph(&required(a.graph, l.path(&l.cfg.paths.graph), "graph")?)?;
    let dir = required(a.common.out, l.path(&l.cfg.paths.checkpoint), "out")?;

    let mut runs: Vec<(String, TrainConfig)> = Vec::new();
    for &beta in &a.sweep_beta {
        runs.push((format!("beta_{beta:e}"), TrainConfig { beta, ..l.cfg.train.clone() }));
    }
    for &length in &a.sweep_length {
        let mut t = l.cfg.train.clone();
        t.walk.length = length;
        runs.push((format!("length_{length}"), t));
    }
    if runs.is_empty() {
        let o = train_into(&g, &l.cfg, &l.cfg.train, &dir, a.resume.as_deref())?;
        eprintln!("trained {} epochs, {} steps", o.epochs_done, o.adam.steps());
        return Ok(());
    }
    let mut summary = String::from("run\tbeta\twalk_length\ttotal\trecon\tkl\n");
    for (name, t) in &runs {
        t.validate().map_err(|e| usage(format!("{name}: {e}")))?;
        let o = train_into(&g, &l.cfg, t, &dir.join(name), None)?;
        let last = &o.log.last().ok_or_else(|| anyhow!("{name}: no epochs ran"))?.loss;
        summary.push_str(&format!(
            "{name}\t{}\t{}\t{}\t{}\t{}\n",
            t.beta,
            t.walk.length,
            last.total,
            last.recon(),
            last.kl
        ));
        eprintln!("{name}: total {:.4}", last.total);
    }
    write_file(&dir.join("sweep.tsv"), summary.as_bytes())
}

fn load_model(path: &Path) -> Result<InfoAlign> {
    let ck = load_checkpoint(path).with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    Ok(InfoAlign::from_checkpoint(&ck)?)
}

fn embed_cmd(a: EmbedArgs) -> Result<()> {
    let l = load_config(&a.common, |_| {})?;
    let model = load_model(&required(a.checkpoint, l.path(&l.cfg.paths.checkpoint), "checkpoint")?)?;
    let mols: Vec<(String, MolecularGraph)> = match (a.smiles, a.graph) {
        (Some(p), _) => read_molecules(&p)?,
        (None, Some(p)) => {
            let g = open_graph(&p)?;
            g.molecule_nodes()
                .map(|i| {
                    let n = g.node(i);
                    (n.id.clone(), n.molecule.clone().expect("molecule node carries a graph"))
                })
                .collect()
        }
        (None, None) => return Err(usage("embed needs --smiles FILE or --graph FILE")),
    };
    let refs: Vec<&MolecularGraph> = mols.iter().map(|m| &m.1).collect();
    let rows: Vec<(String, Vec<f64>)> = mols.iter().map(|m| m.0.clone()).zip(embed(&model, &refs)?).collect();
    emit(a.common.out.as_deref(), write_matrix(&rows, "z").as_bytes())
}

fn eval(a: EvalArgs) -> Result<()> {
    let l = load_config(&a.common, |c| {
        if a.hidden.is_some() {
            c.probe.hidden = a.hidden;
        }
    })?;
    let emb = read_matrix(&read_text(&a.embeddings)?).with_context(|| format!("in {}", a.embeddings.display()))?;
    let set = join_labeled(&emb, &read_text(&a.labels)?).with_context(|| format!("in {}", a.labels.display()))?;
    let split = split_random(set.len(), DEFAULT_RATIOS, l.cfg.seed)?;
    let head = probe_train(&set.subset(&split.train), &l.cfg.probe)?;
    let report = json!({
        "seed": l.cfg.seed,
        "probe": l.cfg.probe,
        "split": {"train": split.train.len(), "valid": split.valid.len(), "test": split.test.len()},
        "valid": probe_eval(&head, &set.subset(&split.valid))?,
        "test": probe_eval(&head, &set.subset(&split.test))?,
    });
    if let Some(p) = &a.save_head {
        write_file(p, &pretty(&head))?;
    }
    emit(a.common.out.as_deref(), &pretty(&report))
}

fn match_cmd(a: MatchArgs) -> Result<()> {
    let l = load_config(&a.common, |_| {})?;
    let model = load_model(&required(a.checkpoint, l.path(&l.cfg.paths.checkpoint), "checkpoint")?)?;
    let queries = read_molecules(&a.queries)?;
    let candidates: Vec<(String, Vec<f32>)> = read_matrix(&read_text(&a.candidates)?)
        .with_context(|| format!("in {}", a.candidates.display()))?
        .into_iter()
        .map(|(id, v)| (id, v.into_iter().map(|x| x as f32).collect()))
        .collect();
    let position: HashMap<&str, usize> = candidates.iter().enumerate().map(|(i, c)| (c.0.as_str(), i)).collect();
    if position.len() != candidates.len() {
        bail!("duplicate candidate ids in {}", a.candidates.display());
    }
    let mut truth_of: BTreeMap<String, usize> = BTreeMap::new();
    for (line, l) in read_text(&a.truth)?.lines().enumerate() {
        if l.trim().is_empty() || l.starts_with('#') || (line == 0 && l.starts_with("query_id\t")) {
            continue;
        }
        let (q, c) = l
            .split_once('\t')
            .ok_or_else(|| anyhow!("{}:{}: expected query_id<TAB>candidate_id", a.truth.display(), line + 1))?;
        let Some(&i) = position.get(c.trim()) else {
            bail!("{}:{}: unknown candidate {c:?}", a.truth.display(), line + 1);
        };
        truth_of.insert(q.trim().to_string(), i);
    }
    let truth = queries
        .iter()
        .map(|(id, _)| truth_of.get(id).copied().ok_or_else(|| anyhow!("no true candidate for query {id:?}")))
        .collect::<Result<Vec<_>>>()?;
    let q: Vec<(String, &MolecularGraph)> = queries.iter().map(|(id, g)| (id.clone(), g)).collect();
    let report = match_zero_shot(&model, &q, &candidates, &truth, &a.ks)?;
    emit(a.common.out.as_deref(), &pretty(&report))
}

fn mi_bench_cmd(a: MiBenchArgs) -> Result<()> {
    let l = load_config(&a.common, |c| {
        if a.exact {
            c.mi.exact = true;
        }
        if let Some(t) = a.trials {
            c.mi.exact = false;
            c.mi.trials = t;
        }
        c.mi.joints = a.joints.unwrap_or(c.mi.joints);
    })?;
    let report = mi_bench(&l.cfg.mi)?;
    let mut v = serde_json::to_value(&report)?;
    if let Value::Object(obj) = &mut v {
        obj.insert("config".into(), serde_json::to_value(&l.cfg.mi)?);
    }
    emit(a.common.out.as_deref(), &pretty(&v))?;
    if !report.pass {
        bail!("{} bound ordering violations", report.violations);
    }
    Ok(())
}
