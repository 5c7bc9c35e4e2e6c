use serde::{Deserialize, Serialize};

use super::{auc, mae, threshold_fractions, EvalError, Result};
use crate::diffcore::{Activation, Adam, AdamConfig, DenseArray, Mlp, ParamStore, Tape};
use crate::rng::{derive_seed, stream_rng, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Classification,
    Regression,
}

/// Embeddings with per-task labels; `mask[i][t]` marks available labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub ids: Vec<String>,
    pub embeddings: Vec<Vec<f64>>,
    pub tasks: Vec<(String, TaskKind)>,
    pub labels: Vec<Vec<f64>>,
    pub mask: Vec<Vec<bool>>,
}

impl LabeledSet {
    /// One classification task with every label present.
    pub fn binary(embeddings: Vec<Vec<f64>>, labels: &[bool]) -> Self {
        LabeledSet {
            ids: (0..embeddings.len()).map(|i| i.to_string()).collect(),
            embeddings,
            tasks: vec![("task".to_string(), TaskKind::Classification)],
            labels: labels.iter().map(|&l| vec![f64::from(u8::from(l))]).collect(),
            mask: vec![vec![true]; labels.len()],
        }
    }

    pub fn len(&self) -> usize {
        self.embeddings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.embeddings.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, rows: &[usize]) -> LabeledSet {
        LabeledSet {
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            embeddings: rows.iter().map(|&r| self.embeddings[r].clone()).collect(),
            tasks: self.tasks.clone(),
            labels: rows.iter().map(|&r| self.labels[r].clone()).collect(),
            mask: rows.iter().map(|&r| self.mask[r].clone()).collect(),
        }
    }

    fn validate(&self) -> Result<()> {
        let n = self.embeddings.len();
        if n == 0 {
            return Err(EvalError::TooFew { need: 1, got: 0 });
        }
        let d = self.dim();
        for (i, e) in self.embeddings.iter().enumerate() {
            if e.len() != d {
                return Err(EvalError::Invalid(format!("row {i} has dimension {}, expected {d}", e.len())));
            }
        }
        if self.labels.len() != n || self.mask.len() != n || self.ids.len() != n {
            return Err(EvalError::LengthMismatch(n, self.labels.len()));
        }
        let t = self.tasks.len();
        if self.labels.iter().any(|r| r.len() != t) || self.mask.iter().any(|r| r.len() != t) {
            return Err(EvalError::Invalid("label rows must have one entry per task".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    /// Hidden width; `None` gives a linear probe.
    pub hidden: Option<usize>,
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            hidden: None,
            epochs: 300,
            lr: 0.01,
            weight_decay: 1e-3,
            seed: 0,
        }
    }
}

/// Trained probe: input standardization, label scaling for regression
/// tasks, and the network weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeHead {
    pub config: ProbeConfig,
    pub tasks: Vec<(String, TaskKind)>,
    pub input_mean: Vec<f64>,
    pub input_std: Vec<f64>,
    pub label_mean: Vec<f64>,
    pub label_std: Vec<f64>,
    pub sizes: Vec<usize>,
    /// `(name, shape, data)` in registration order.
    pub weights: Vec<(String, Vec<usize>, Vec<f64>)>,
}

/// Mean and standard deviation; a constant column gets deviation 1.
fn column_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    (mean, if std > 1e-12 { std } else { 1.0 })
}

fn sizes_for(cfg: &ProbeConfig, d: usize, t: usize) -> Vec<usize> {
    match cfg.hidden {
        Some(h) => vec![d, h, t],
        None => vec![d, t],
    }
}

impl ProbeHead {
    fn network(&self) -> Result<(ParamStore, Mlp)> {
        let mut store = ParamStore::new();
        for (name, shape, data) in &self.weights {
            store.add(name.clone(), DenseArray::new(shape.clone(), data.clone())?)?;
        }
        let mlp = Mlp::bind(&store, "probe", &self.sizes, Activation::Relu)?;
        Ok((store, mlp))
    }

    fn standardized(&self, embeddings: &[Vec<f64>]) -> Result<DenseArray> {
        let d = self.input_mean.len();
        let mut data = Vec::with_capacity(embeddings.len() * d);
        for e in embeddings {
            if e.len() != d {
                return Err(EvalError::DimensionMismatch {
                    expected: d,
                    found: e.len(),
                });
            }
            data.extend(e.iter().enumerate().map(|(j, x)| (x - self.input_mean[j]) / self.input_std[j]));
        }
        Ok(DenseArray::new(vec![embeddings.len(), d], data)?)
    }

    /// Per-row, per-task predictions: scores (logits) for classification
    /// tasks and values in label units for regression tasks.
    pub fn predict(&self, embeddings: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let (store, mlp) = self.network()?;
        let mut tape = Tape::new();
        let x = tape.leaf(self.standardized(embeddings)?);
        let out = mlp.forward(&mut tape, &store, x)?;
        let t = self.tasks.len();
        Ok(tape
            .value(out)
            .data()
            .chunks(t)
            .map(|row| {
                row.iter()
                    .enumerate()
                    .map(|(k, &v)| match self.tasks[k].1 {
                        TaskKind::Classification => v,
                        TaskKind::Regression => v * self.label_std[k] + self.label_mean[k],
                    })
                    .collect()
            })
            .collect())
    }
}

/// Full-batch Adam on masked BCE (classification) and squared error on
/// standardized labels (regression), plus L2 on the weight matrices.
pub fn probe_train(train: &LabeledSet, cfg: &ProbeConfig) -> Result<ProbeHead> {
    train.validate()?;
    if cfg.epochs == 0 || !(cfg.lr > 0.0) || cfg.hidden == Some(0) {
        return Err(EvalError::Invalid("probe needs epochs > 0, lr > 0, hidden > 0".into()));
    }
    let (n, d, t) = (train.len(), train.dim(), train.tasks.len());
    let mut input_mean = Vec::with_capacity(d);
    let mut input_std = Vec::with_capacity(d);
    for j in 0..d {
        let col: Vec<f64> = train.embeddings.iter().map(|e| e[j]).collect();
        let (m, s) = column_stats(&col);
        input_mean.push(m);
        input_std.push(s);
    }
    let mut label_mean = vec![0.0; t];
    let mut label_std = vec![1.0; t];
    for k in 0..t {
        if train.tasks[k].1 == TaskKind::Regression {
            let vals: Vec<f64> = (0..n).filter(|&i| train.mask[i][k]).map(|i| train.labels[i][k]).collect();
            let (m, s) = column_stats(&vals);
            label_mean[k] = m;
            label_std[k] = s;
        }
    }
    let sizes = sizes_for(cfg, d, t);
    let mut store = ParamStore::new();
    let mut rng = stream_rng(derive_seed(cfg.seed, tag::PROBE, 0), 0);
    let mlp = Mlp::new(&mut store, "probe", &sizes, Activation::Relu, &mut rng)?;
    let mut head = ProbeHead {
        config: cfg.clone(),
        tasks: train.tasks.clone(),
        input_mean,
        input_std,
        label_mean,
        label_std,
        sizes,
        weights: Vec::new(),
    };
    let x = head.standardized(&train.embeddings)?;

    let mut cls_w = vec![0.0; n * t];
    let mut reg_w = vec![0.0; n * t];
    let mut y = vec![0.0; n * t];
    let counts: Vec<usize> = (0..t).map(|k| (0..n).filter(|&i| train.mask[i][k]).count()).collect();
    for i in 0..n {
        for k in 0..t {
            if !train.mask[i][k] || counts[k] == 0 {
                continue;
            }
            let w = 1.0 / (counts[k] as f64 * t as f64);
            match train.tasks[k].1 {
                TaskKind::Classification => {
                    cls_w[i * t + k] = w;
                    y[i * t + k] = train.labels[i][k];
                }
                TaskKind::Regression => {
                    reg_w[i * t + k] = w;
                    y[i * t + k] = (train.labels[i][k] - head.label_mean[k]) / head.label_std[k];
                }
            }
        }
    }
    let shape = vec![n, t];
    let (cls_w, reg_w, y) = (
        DenseArray::new(shape.clone(), cls_w)?,
        DenseArray::new(shape.clone(), reg_w)?,
        DenseArray::new(shape, y)?,
    );
    let mut adam = Adam::new(
        &store,
        AdamConfig {
            lr: cfg.lr,
            ..AdamConfig::default()
        },
    );
    for _ in 0..cfg.epochs {
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let out = mlp.forward(&mut tape, &store, xv)?;
        let yv = tape.leaf(y.clone());
        let sp = tape.softplus(out);
        let yl = tape.mul(yv, out)?;
        let bce = tape.sub(sp, yl)?;
        let cw = tape.leaf(cls_w.clone());
        let bce = tape.mul(bce, cw)?;
        let diff = tape.sub(out, yv)?;
        let sq = tape.mul(diff, diff)?;
        let rw = tape.leaf(reg_w.clone());
        let sq = tape.mul(sq, rw)?;
        let sq = tape.scale(sq, 0.5);
        let total = tape.add(bce, sq)?;
        let mut loss = tape.sum(total);
        if cfg.weight_decay > 0.0 {
            for &(w, _) in mlp.layers() {
                let wv = tape.param(&store, w);
                let w2 = tape.mul(wv, wv)?;
                let s = tape.sum(w2);
                let s = tape.scale(s, cfg.weight_decay);
                loss = tape.add(loss, s)?;
            }
        }
        let grads = tape.backward(loss);
        store.zero_grad();
        store.accumulate(&grads);
        adam.step(&mut store);
    }
    head.weights = store
        .named_values()
        .map(|(name, v)| (name.to_string(), v.shape().to_vec(), v.data().to_vec()))
        .collect();
    Ok(head)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskMetric {
    pub task: String,
    pub kind: TaskKind,
    /// `"auc"` or `"mae"`.
    pub metric: String,
    pub value: Option<f64>,
    pub skipped: Option<String>,
}

/// Per-task metrics plus the averaged and thresholded AUC columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub tasks: Vec<TaskMetric>,
    pub auc_avg: Option<f64>,
    pub auc_above_80: Option<f64>,
    pub auc_above_85: Option<f64>,
    pub auc_above_90: Option<f64>,
    pub mae_avg: Option<f64>,
}

pub fn probe_eval(head: &ProbeHead, test: &LabeledSet) -> Result<ProbeReport> {
    test.validate()?;
    if test.tasks != head.tasks {
        return Err(EvalError::Invalid("test tasks differ from the probe's tasks".into()));
    }
    let pred = head.predict(&test.embeddings)?;
    let mut tasks = Vec::with_capacity(head.tasks.len());
    let (mut aucs, mut maes) = (Vec::new(), Vec::new());
    for (k, (name, kind)) in head.tasks.iter().enumerate() {
        let rows: Vec<usize> = (0..test.len()).filter(|&i| test.mask[i][k]).collect();
        let scores: Vec<f64> = rows.iter().map(|&i| pred[i][k]).collect();
        let truth: Vec<f64> = rows.iter().map(|&i| test.labels[i][k]).collect();
        let (metric, outcome) = match kind {
            TaskKind::Classification => {
                let labels: Vec<bool> = truth.iter().map(|&y| y >= 0.5).collect();
                ("auc", auc(&scores, &labels))
            }
            TaskKind::Regression => ("mae", mae(&scores, &truth)),
        };
        let (value, skipped) = match outcome {
            Ok(v) => {
                if *kind == TaskKind::Classification {
                    aucs.push(v);
                } else {
                    maes.push(v);
                }
                (Some(v), None)
            }
            Err(e @ (EvalError::SingleClass | EvalError::TooFew { .. })) => (None, Some(e.to_string())),
            Err(e) => return Err(e),
        };
        tasks.push(TaskMetric {
            task: name.clone(),
            kind: *kind,
            metric: metric.to_string(),
            value,
            skipped,
        });
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    let fr = threshold_fractions(&aucs, &[0.80, 0.85, 0.90]);
    let has = !aucs.is_empty();
    Ok(ProbeReport {
        tasks,
        auc_avg: mean(&aucs),
        auc_above_80: has.then_some(fr[0]),
        auc_above_85: has.then_some(fr[1]),
        auc_above_90: has.then_some(fr[2]),
        mae_avg: mean(&maes),
    })
}
