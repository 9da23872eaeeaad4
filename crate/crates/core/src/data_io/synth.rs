//! Synthetic multi-task benchmark with planted, known-informative pool entries.
//!
//! For task `t` with labels `y`, every pool entry is
//! `noise_scale * N(0, 1) + latent_scale * h_i`, where `h_i` is a per-residue
//! latent vector shared by all entries of the task. Entries at informative
//! indices additionally carry `y_i * s * signal_strength * u_t` on their first
//! `signal_cols` columns, with `u_t` a random sign vector of unit norm and
//! `s = 1` for the task's own entry and `s = correlation` for entries paired
//! with another task. `signal_strength` is therefore the Euclidean distance
//! between class means, independent of the feature dimension.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{map_pool_index, pool_size, FeatureMatrix, PoolRole, Split};
use crate::rng;

use super::fmat::write_fmat;
use super::manifest::{write_labels, PoolManifest, SplitSpec, TaskEntry, SCHEMA_VERSION};

const MAX_LABEL_RETRIES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub task_count: usize,
    pub residues: usize,
    pub feature_dim: usize,
    pub positive_rate: f64,
    /// Informative pool indices per task; `None` plants signal only in each
    /// task's own single-task entry.
    pub informative: Option<Vec<Vec<usize>>>,
    pub correlation: f64,
    pub noise_scale: f64,
    pub signal_strength: f64,
    /// Columns carrying the label shift; `None` uses every column.
    pub signal_cols: Option<usize>,
    pub latent_scale: f64,
    pub val_ratio: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            task_count: 4,
            residues: 400,
            feature_dim: 128,
            positive_rate: 0.025,
            informative: None,
            correlation: 0.8,
            noise_scale: 1.0,
            signal_strength: 8.0,
            signal_cols: None,
            latent_scale: 0.5,
            val_ratio: 0.25,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.task_count == 0 {
            return bad("task_count must be at least 1".into());
        }
        if self.residues < 2 || self.feature_dim == 0 {
            return bad(format!("residues {} / feature_dim {} too small", self.residues, self.feature_dim));
        }
        if !(self.positive_rate > 0.0 && self.positive_rate < 0.5) {
            return bad(format!("positive_rate {} outside (0, 0.5)", self.positive_rate));
        }
        if self.positive_count() < 2 {
            return bad(format!(
                "positive_rate {} gives fewer than 2 positives for {} residues",
                self.positive_rate, self.residues
            ));
        }
        if !(0.0..=1.0).contains(&self.correlation) {
            return bad(format!("correlation {} outside [0, 1]", self.correlation));
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("signal_strength", self.signal_strength),
            ("latent_scale", self.latent_scale),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be finite and non-negative"));
            }
        }
        if let Some(c) = self.signal_cols {
            if c == 0 || c > self.feature_dim {
                return bad(format!("signal_cols {c} outside [1, {}]", self.feature_dim));
            }
        }
        Split::tail(self.residues, self.val_ratio)?;
        let pool = pool_size(self.task_count);
        if let Some(inf) = &self.informative {
            if inf.len() != self.task_count {
                return bad(format!("informative lists {} tasks, expected {}", inf.len(), self.task_count));
            }
            if let Some(&k) = inf.iter().flatten().find(|&&k| k >= pool) {
                return bad(format!("informative index {k} outside pool of {pool}"));
            }
        }
        Ok(())
    }

    pub fn positive_count(&self) -> usize {
        (self.positive_rate * self.residues as f64).floor() as usize
    }

    pub fn informative_for(&self, task: usize) -> Vec<usize> {
        match &self.informative {
            Some(inf) => {
                let mut v = inf[task].clone();
                v.sort_unstable();
                v.dedup();
                v
            }
            None => vec![task],
        }
    }

    /// Zero-padded so lexicographic and numeric order agree.
    pub fn task_name(&self, task: usize) -> String {
        let width = (self.task_count.max(2) - 1).to_string().len();
        format!("task{task:0width$}")
    }
}

struct SynthTask {
    labels: Vec<u8>,
    pool: Vec<FeatureMatrix>,
}

fn draw_labels<R: Rng + ?Sized>(cfg: &SynthConfig, split: &Split, rng: &mut R) -> Result<Vec<u8>> {
    let l = cfg.residues;
    let boundary = split.validation[0];
    for _ in 0..MAX_LABEL_RETRIES {
        let picks = sample(rng, l, cfg.positive_count());
        if picks.iter().any(|i| i < boundary) && picks.iter().any(|i| i >= boundary) {
            let mut labels = vec![0u8; l];
            for i in picks {
                labels[i] = 1;
            }
            return Ok(labels);
        }
    }
    Err(Error::InsufficientData(format!(
        "no label draw put positives in both splits after {MAX_LABEL_RETRIES} tries"
    )))
}

fn synth_task(cfg: &SynthConfig, task: usize) -> Result<SynthTask> {
    let (l, d) = (cfg.residues, cfg.feature_dim);
    let split = Split::tail(l, cfg.val_ratio)?;
    let mut rng = rng::derived(cfg.seed, task as u64);
    let labels = draw_labels(cfg, &split, &mut rng)?;

    let signal_cols = cfg.signal_cols.unwrap_or(d);
    let unit = 1.0 / (signal_cols as f64).sqrt();
    let direction: Vec<f64> = (0..signal_cols)
        .map(|_| if rng.random::<bool>() { unit } else { -unit })
        .collect();
    let latent: Vec<f64> = (0..l * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let informative = cfg.informative_for(task);

    let pool = (0..pool_size(cfg.task_count))
        .map(|k| {
            let scale = if informative.contains(&k) {
                match map_pool_index(task, k, cfg.task_count)? {
                    PoolRole::Single => 1.0,
                    _ => cfg.correlation,
                }
            } else {
                0.0
            } * cfg.signal_strength;
            let mut data = Vec::with_capacity(l * d);
            for i in 0..l {
                for j in 0..d {
                    let mut v = cfg.noise_scale * rng.sample::<f64, _>(StandardNormal)
                        + cfg.latent_scale * latent[i * d + j];
                    if labels[i] == 1 && j < signal_cols {
                        v += scale * direction[j];
                    }
                    data.push(v as f32);
                }
            }
            FeatureMatrix::new(l, d, data)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SynthTask { labels, pool })
}

/// Writes the benchmark under `out_dir` and returns its manifest.
pub fn generate_synthetic(cfg: &SynthConfig, out_dir: impl AsRef<Path>) -> Result<PoolManifest> {
    cfg.validate()?;
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let pool = pool_size(cfg.task_count);
    let pool_files: Vec<String> = (0..pool).map(|k| format!("pool_{k}.fmat")).collect();

    let tasks = (0..cfg.task_count)
        .into_par_iter()
        .map(|t| {
            let data = synth_task(cfg, t)?;
            let name = cfg.task_name(t);
            let dir = out.join(&name);
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (m, f) in data.pool.iter().zip(&pool_files) {
                write_fmat(m, dir.join(f))?;
            }
            write_labels(&data.labels, &dir.join("labels.txt"))?;
            Ok(TaskEntry {
                name,
                residues: cfg.residues,
                feature_dim: cfg.feature_dim,
                positives: cfg.positive_count(),
                pool_files: pool_files.clone(),
                label_file: "labels.txt".into(),
                informative: cfg.informative_for(t),
                split: SplitSpec {
                    val_ratio: cfg.val_ratio,
                    rule: "tail".into(),
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = PoolManifest {
        schema_version: SCHEMA_VERSION,
        tasks,
    };
    manifest.validate()?;
    manifest.write(out)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_positive_count() {
        let cfg = SynthConfig {
            residues: 4000,
            feature_dim: 2,
            task_count: 1,
            ..SynthConfig::default()
        };
        let t = synth_task(&cfg, 0).unwrap();
        assert_eq!(t.labels.iter().filter(|&&y| y == 1).count(), 100);
    }

    #[test]
    fn names_sort_numerically() {
        let cfg = SynthConfig {
            task_count: 12,
            ..SynthConfig::default()
        };
        let names: Vec<String> = (0..12).map(|t| cfg.task_name(t)).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
    }

    #[test]
    fn invalid_configs() {
        let base = SynthConfig::default();
        for cfg in [
            SynthConfig { positive_rate: 0.5, ..base.clone() },
            SynthConfig { correlation: 1.5, ..base.clone() },
            SynthConfig { informative: Some(vec![vec![7]; 4]), ..base.clone() },
            SynthConfig { informative: Some(vec![vec![0]]), ..base.clone() },
            SynthConfig { residues: 10, ..base.clone() },
        ] {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
