//! Plain-text artifacts written by `evolve` and `predict`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use mtga_core::driver::GenerationStats;
use mtga_core::metrics::MetricReport;
use mtga_core::model::{FusionGene, Genotype, Individual};
use mtga_core::proxy::ProxyModel;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Everything needed to run inference with a selected individual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StrategyFile {
    pub task: String,
    pub id: u64,
    pub pool_size: usize,
    pub feature_dim: usize,
    pub g1: f64,
    pub g2: f64,
    #[serde(rename = "gene")]
    pub genes: Vec<FusionGene>,
    pub model: ProxyModel,
}

impl StrategyFile {
    pub fn from_individual(task: &str, pool_size: usize, ind: &Individual) -> Result<Self> {
        let model = ind
            .proxy
            .as_ref()
            .ok_or_else(|| CliError::Usage(format!("task {task}: selected strategy has no fitted head")))?;
        let o = ind.objectives_or_worst();
        Ok(StrategyFile {
            task: task.to_string(),
            id: ind.id,
            pool_size,
            feature_dim: model.dim(),
            g1: o.g1,
            g2: o.g2,
            genes: ind.genotype.genes.clone(),
            model: (**model).clone(),
        })
    }

    pub fn genotype(&self) -> Genotype {
        Genotype::new(self.genes.clone())
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = toml::to_string(self).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        write_text(path, &text)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let s: StrategyFile = toml::from_str(&text).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        s.genotype()
            .validate(s.pool_size, usize::MAX)
            .map_err(|e| CliError::Config {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
        Ok(s)
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Tab-separated `id g1 g2 length genotype`, one member per line.
pub fn pareto_text(members: &[Individual]) -> String {
    let mut s = String::from("id\tg1\tg2\tlength\tgenotype\n");
    for m in members {
        let o = m.objectives_or_worst();
        writeln!(s, "{}\t{}\t{}\t{}\t{}", m.id, o.g1, o.g2, m.genotype.len(), m.genotype).unwrap();
    }
    s
}

pub fn write_history(path: &Path, task: &str, task_names: &[String], history: &[GenerationStats]) -> Result<()> {
    let csv_err = |source| CliError::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = ["generation", "task", "best_g1", "best_g2", "mean_g1"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend(task_names.iter().map(|n| format!("transfers_from_{n}")));
    w.write_record(&header).map_err(csv_err)?;
    for h in history {
        let mut row = vec![
            h.generation.to_string(),
            task.to_string(),
            h.best_g1.to_string(),
            h.best_g2.to_string(),
            h.mean_g1.to_string(),
        ];
        row.extend(h.transfers.iter().map(|c| c.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| CliError::io(path, e))
}

/// `key: value` lines; `prefix` is prepended to every key when given.
pub fn metric_lines(report: &MetricReport, prefix: Option<&str>) -> String {
    let mut s = String::new();
    for (k, v) in report.entries() {
        match prefix {
            Some(p) => writeln!(s, "{p}.{k}: {v}").unwrap(),
            None => writeln!(s, "{k}: {v}").unwrap(),
        }
    }
    s
}

pub fn probability_lines(probs: &[f64]) -> String {
    let mut s = String::with_capacity(probs.len() * 20);
    for p in probs {
        writeln!(s, "{p}").unwrap();
    }
    s
}

pub fn read_probabilities(path: &Path) -> Result<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let bad = |line: usize, message: String| CliError::Config {
        path: path.to_path_buf(),
        message: format!("line {line}: {message}"),
    };
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let p: f64 = t.parse().map_err(|_| bad(i + 1, format!("`{t}` is not a number")))?;
        if !(0.0..=1.0).contains(&p) {
            return Err(bad(i + 1, format!("{p} is not a probability")));
        }
        out.push(p);
    }
    if out.is_empty() {
        return Err(bad(0, "no predictions".into()));
    }
    Ok(out)
}
