//! Multi-seed aggregation of per-run CSVs into summary tables.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use gbi_core::gbi::SweepResult;
use gbi_core::metrics::{self, SeedSweep};

use crate::commands::{AccuracyRow, MseRow, OodRow};
use crate::config::ConfigError;

fn read_rows<T: DeserializeOwned>(paths: &[impl AsRef<Path>]) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let mut r = csv::Reader::from_path(p).with_context(|| format!("reading {}", p.display()))?;
        for row in r.deserialize() {
            out.push(row.with_context(|| format!("parsing {}", p.display()))?);
        }
    }
    Ok(out)
}

/// Grouped generalization MSE, mean ± SEM over seeds, one row per group.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Table1Row {
    pub group: String,
    pub gbi_lstm_mean: f64,
    pub gbi_lstm_sem: f64,
    pub lstm_mean: f64,
    pub lstm_sem: f64,
    pub n_seeds: usize,
}

pub fn table1(rows: &[MseRow], training_means: [f64; 2]) -> Result<Vec<Table1Row>> {
    let mut tables = Vec::new();
    for model in ["gbi_lstm", "lstm"] {
        let mut by_seed: BTreeMap<u64, SeedSweep> = BTreeMap::new();
        for r in rows.iter().filter(|r| r.model == model) {
            by_seed
                .entry(r.seed)
                .or_insert_with(|| SeedSweep {
                    seed: r.seed,
                    last_block_mean: r.last_block_mean,
                    results: Vec::new(),
                })
                .results
                .push(SweepResult { mean: r.mean, mse: r.mse });
        }
        if by_seed.is_empty() {
            bail!(ConfigError(format!("no rows for model {model}")));
        }
        let seeds: Vec<SeedSweep> = by_seed.into_values().collect();
        tables.push(metrics::mse_group_table(&seeds, training_means, &training_means)?);
    }
    Ok(tables[0]
        .iter()
        .zip(&tables[1])
        .map(|(g, l)| Table1Row {
            group: g.group.key().into(),
            gbi_lstm_mean: g.mean,
            gbi_lstm_sem: g.sem,
            lstm_mean: l.mean,
            lstm_sem: l.sem,
            n_seeds: g.n_seeds.min(l.n_seeds),
        })
        .collect())
}

/// Accuracy per method, mean ± SD over seeds.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Table2Row {
    pub method: String,
    pub accuracy_mean: f64,
    pub accuracy_sd: f64,
    pub runs: usize,
    pub n_seeds: usize,
}

const METHOD_ORDER: [&str; 5] = ["gbi", "likelihood", "iterative", "nbi", "discriminative"];

fn method_rank(name: &str) -> usize {
    METHOD_ORDER.iter().position(|m| name.starts_with(m)).unwrap_or(METHOD_ORDER.len())
}

pub fn table2(rows: &[AccuracyRow]) -> Result<Vec<Table2Row>> {
    let mut by: BTreeMap<(usize, String), (usize, Vec<f64>)> = BTreeMap::new();
    for r in rows {
        let e = by.entry((method_rank(&r.method), r.method.clone())).or_insert((r.runs, Vec::new()));
        if e.0 != r.runs {
            bail!(ConfigError(format!("method {} has inconsistent runs {} vs {}", r.method, e.0, r.runs)));
        }
        e.1.push(r.accuracy);
    }
    Ok(by
        .into_iter()
        .map(|((_, method), (runs, v))| {
            let (m, sd) = metrics::mean_sd(&v);
            Table2Row {
                method,
                accuracy_mean: m,
                accuracy_sd: sd,
                runs,
                n_seeds: v.len(),
            }
        })
        .collect())
}

/// AUCROC per condition and method, mean ± SD over seeds.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Table3Row {
    pub condition: String,
    pub method: String,
    pub auc_mean: f64,
    pub auc_sd: f64,
    pub n_seeds: usize,
}

pub fn table3(rows: &[OodRow]) -> Result<Vec<Table3Row>> {
    let mut by: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for r in rows {
        by.entry((r.condition.clone(), r.method.clone())).or_default().push(r.auc);
    }
    Ok(by
        .into_iter()
        .map(|((condition, method), v)| {
            let (m, sd) = metrics::mean_sd(&v);
            Table3Row {
                condition,
                method,
                auc_mean: m,
                auc_sd: sd,
                n_seeds: v.len(),
            }
        })
        .collect())
}

fn to_csv<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

/// CSV text of table `n` built from `files`.
pub fn render(n: u8, files: &[impl AsRef<Path>], training_means: [f64; 2]) -> Result<String> {
    if files.is_empty() {
        bail!(ConfigError("report needs at least one input file".into()));
    }
    match n {
        1 => to_csv(&table1(&read_rows(files)?, training_means)?),
        2 => to_csv(&table2(&read_rows(files)?)?),
        3 => to_csv(&table3(&read_rows(files)?)?),
        _ => bail!(ConfigError(format!("unknown table {n}, expected 1, 2 or 3"))),
    }
}
