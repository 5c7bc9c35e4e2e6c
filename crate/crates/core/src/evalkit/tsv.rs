//! Tab-separated matrices and label tables.
//!
//! Matrix rows are `id  v0  v1 ...`; label rows are `id  task...` under a
//! header naming the tasks, with empty or `NA` cells marking missing labels.
//! A task whose present labels are all 0 or 1 is a classification task.

use std::collections::HashMap;
use std::fmt::Write as _;

use super::{EvalError, LabeledSet, Result, TaskKind};

fn table_err(line: usize, msg: impl Into<String>) -> EvalError {
    EvalError::Table {
        line,
        msg: msg.into(),
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

/// Rows of `id  values...`; a first row starting with `id` is a header.
pub fn read_matrix(text: &str) -> Result<Vec<(String, Vec<f64>)>> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for (k, (line, l)) in data_lines(text).enumerate() {
        let mut f = l.split('\t');
        let id = f.next().unwrap_or_default();
        if k == 0 && id == "id" {
            continue;
        }
        let vals = f
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| table_err(line, format!("bad number {v:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some((_, first)) = out.first() {
            if first.len() != vals.len() {
                return Err(table_err(line, format!("expected {} values, found {}", first.len(), vals.len())));
            }
        }
        out.push((id.to_string(), vals));
    }
    Ok(out)
}

pub fn write_matrix(rows: &[(String, Vec<f64>)], prefix: &str) -> String {
    let dim = rows.first().map_or(0, |r| r.1.len());
    let mut s = String::from("id");
    for j in 0..dim {
        let _ = write!(s, "\t{prefix}{j}");
    }
    s.push('\n');
    for (id, v) in rows {
        s.push_str(id);
        for x in v {
            let _ = write!(s, "\t{x}");
        }
        s.push('\n');
    }
    s
}

/// Label table as `(ids, tasks, labels, mask)`.
#[allow(clippy::type_complexity)]
pub fn read_labels(text: &str) -> Result<(Vec<String>, Vec<(String, TaskKind)>, Vec<Vec<f64>>, Vec<Vec<bool>>)> {
    let mut lines = data_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| table_err(1, "empty label table"))?;
    let names: Vec<&str> = header.split('\t').skip(1).collect();
    if names.is_empty() {
        return Err(table_err(hline, "header names no tasks"));
    }
    let mut ids = Vec::new();
    let mut labels = Vec::new();
    let mut mask = Vec::new();
    for (line, l) in lines {
        let f: Vec<&str> = l.split('\t').collect();
        if f.len() != names.len() + 1 {
            return Err(table_err(line, format!("expected {} columns, found {}", names.len() + 1, f.len())));
        }
        let mut row = Vec::with_capacity(names.len());
        let mut present = Vec::with_capacity(names.len());
        for v in &f[1..] {
            let v = v.trim();
            if v.is_empty() || v.eq_ignore_ascii_case("na") {
                row.push(0.0);
                present.push(false);
            } else {
                let x = v
                    .parse::<f64>()
                    .ok()
                    .filter(|x| x.is_finite())
                    .ok_or_else(|| table_err(line, format!("bad label {v:?}")))?;
                row.push(x);
                present.push(true);
            }
        }
        ids.push(f[0].to_string());
        labels.push(row);
        mask.push(present);
    }
    let tasks = names
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let binary = labels
                .iter()
                .zip(&mask)
                .filter(|(_, m)| m[k])
                .all(|(r, _)| r[k] == 0.0 || r[k] == 1.0);
            let kind = if binary { TaskKind::Classification } else { TaskKind::Regression };
            (n.to_string(), kind)
        })
        .collect();
    Ok((ids, tasks, labels, mask))
}

/// Joins embeddings with labels by id, in embedding order. Embedded ids
/// without labels are dropped.
pub fn join_labeled(embeddings: &[(String, Vec<f64>)], labels_text: &str) -> Result<LabeledSet> {
    let (ids, tasks, labels, mask) = read_labels(labels_text)?;
    let by_id: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let mut set = LabeledSet {
        ids: Vec::new(),
        embeddings: Vec::new(),
        tasks,
        labels: Vec::new(),
        mask: Vec::new(),
    };
    for (id, e) in embeddings {
        if let Some(&i) = by_id.get(id.as_str()) {
            set.ids.push(id.clone());
            set.embeddings.push(e.clone());
            set.labels.push(labels[i].clone());
            set.mask.push(mask[i].clone());
        }
    }
    if set.is_empty() {
        return Err(EvalError::Invalid("no embedded id has labels".into()));
    }
    Ok(set)
}
