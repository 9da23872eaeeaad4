//! Pool manifest (TOML) and task loading.
//!
//! ```toml
//! schema_version = 1
//!
//! [[task]]
//! name = "atp"
//! residues = 400
//! feature_dim = 16
//! positives = 20
//! pool_files = ["pool_0.fmat", "pool_1.fmat", "pool_2.fmat"]
//! label_file = "labels.txt"
//! informative = [0]
//! split = { val_ratio = 0.25, rule = "tail" }
//! ```
//!
//! Tasks are listed in position order, which is the lexicographic order of
//! their names. File names are relative to `<root>/<name>/`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::driver::TaskData;
use crate::error::{Error, Result};
use crate::model::{pool_size, FeatureMatrix, Split, TaskDescriptor};

use super::fmat::read_fmat;

pub const SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub val_ratio: f64,
    pub rule: String,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            val_ratio: 0.25,
            rule: "tail".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskEntry {
    pub name: String,
    pub residues: usize,
    pub feature_dim: usize,
    pub positives: usize,
    pub pool_files: Vec<String>,
    pub label_file: String,
    /// Pool indices carrying planted signal; empty for real data.
    #[serde(default)]
    pub informative: Vec<usize>,
    pub split: SplitSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoolManifest {
    pub schema_version: u32,
    #[serde(rename = "task")]
    pub tasks: Vec<TaskEntry>,
}

impl PoolManifest {
    pub fn task_names(&self) -> Vec<&str> {
        self.tasks.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn descriptors(&self) -> Result<Vec<TaskDescriptor>> {
        let pairs: Vec<(&str, usize)> = self.tasks.iter().map(|t| (t.name.as_str(), t.residues)).collect();
        TaskDescriptor::ordered(&pairs)
    }

    /// Structural checks that need no file access.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Manifest(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.tasks.is_empty() {
            return bad("no tasks".into());
        }
        if self.tasks.windows(2).any(|w| w[0].name >= w[1].name) {
            return bad("task names must be unique and listed in lexicographic order".into());
        }
        let expected = pool_size(self.tasks.len());
        for t in &self.tasks {
            if t.name.is_empty() || t.name.contains(['/', '\\']) || t.name.starts_with('.') {
                return bad(format!("task name `{}` is not a plain directory name", t.name));
            }
            if t.pool_files.len() != expected {
                return bad(format!(
                    "task {}: {} pool files, expected {expected}",
                    t.name,
                    t.pool_files.len()
                ));
            }
            if !(t.split.val_ratio > 0.0 && t.split.val_ratio < 1.0) {
                return bad(format!("task {}: val_ratio {} outside (0, 1)", t.name, t.split.val_ratio));
            }
            if t.split.rule != "tail" {
                return bad(format!("task {}: unknown split rule `{}`", t.name, t.split.rule));
            }
            if let Some(&k) = t.informative.iter().find(|&&k| k >= expected) {
                return bad(format!("task {}: informative index {k} outside pool", t.name));
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("manifest serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let m: PoolManifest = toml::from_str(text).map_err(|e| Error::Manifest(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn read(root: impl AsRef<Path>) -> Result<Self> {
        let path = root.as_ref().join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Manifest(m) => Error::Manifest(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn write(&self, root: impl AsRef<Path>) -> Result<()> {
        let path = root.as_ref().join(MANIFEST_FILE);
        fs::write(&path, self.to_toml()).map_err(|e| Error::io(&path, e))
    }

    pub fn task_dir(&self, root: &Path, position: usize) -> PathBuf {
        root.join(&self.tasks[position].name)
    }
}

/// Parses one `0`/`1` per line; blank trailing lines are ignored.
pub fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let v = line.trim_end_matches(['\n', '\r']);
        match v {
            "0" => labels.push(0),
            "1" => labels.push(1),
            "" => {}
            _ => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    offset,
                    message: format!("expected 0 or 1, found `{v}`"),
                })
            }
        }
        offset += line.len() as u64;
    }
    Ok(labels)
}

pub fn write_labels(labels: &[u8], path: &Path) -> Result<()> {
    let mut s = String::with_capacity(labels.len() * 2);
    for &y in labels {
        s.push(if y == 1 { '1' } else { '0' });
        s.push('\n');
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads every pool entry of one task, checking shapes against the manifest.
pub fn load_pool(manifest: &PoolManifest, root: &Path, position: usize) -> Result<Vec<FeatureMatrix>> {
    let entry = manifest.tasks.get(position).ok_or(Error::Bounds {
        index: position,
        limit: manifest.tasks.len(),
    })?;
    let dir = manifest.task_dir(root, position);
    entry
        .pool_files
        .iter()
        .map(|f| {
            let path = dir.join(f);
            let m = read_fmat(&path)?;
            if m.shape() != (entry.residues, entry.feature_dim) {
                return Err(Error::Shape(format!(
                    "{}: {}x{}, manifest says {}x{}",
                    path.display(),
                    m.rows(),
                    m.cols(),
                    entry.residues,
                    entry.feature_dim
                )));
            }
            Ok(m)
        })
        .collect()
}

pub fn load_task(manifest: &PoolManifest, root: impl AsRef<Path>, position: usize) -> Result<TaskData> {
    let root = root.as_ref();
    manifest.validate()?;
    let descriptor = manifest
        .descriptors()?
        .into_iter()
        .nth(position)
        .ok_or(Error::Bounds {
            index: position,
            limit: manifest.tasks.len(),
        })?;
    let entry = &manifest.tasks[position];
    let pool = load_pool(manifest, root, position)?;
    let label_path = manifest.task_dir(root, position).join(&entry.label_file);
    let labels = read_labels(&label_path)?;
    if labels.len() != entry.residues {
        return Err(Error::Manifest(format!(
            "{}: {} labels, manifest says {} residues",
            label_path.display(),
            labels.len(),
            entry.residues
        )));
    }
    let split = Split::tail(entry.residues, entry.split.val_ratio)?;
    Ok(TaskData {
        descriptor,
        pool,
        labels,
        split,
    })
}

/// Reads the manifest under `root` and loads every task.
pub fn load_all(root: impl AsRef<Path>) -> Result<(PoolManifest, Vec<TaskData>)> {
    let root = root.as_ref();
    let manifest = PoolManifest::read(root)?;
    let tasks = (0..manifest.tasks.len())
        .map(|t| load_task(&manifest, root, t))
        .collect::<Result<Vec<_>>>()?;
    Ok((manifest, tasks))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, pools: usize) -> TaskEntry {
        TaskEntry {
            name: name.into(),
            residues: 10,
            feature_dim: 2,
            positives: 2,
            pool_files: (0..pools).map(|k| format!("pool_{k}.fmat")).collect(),
            label_file: "labels.txt".into(),
            informative: vec![0],
            split: SplitSpec::default(),
        }
    }

    #[test]
    fn toml_roundtrip() {
        let m = PoolManifest {
            schema_version: SCHEMA_VERSION,
            tasks: vec![entry("a", 3), entry("b", 3)],
        };
        assert_eq!(PoolManifest::from_toml(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn rejects_bad_manifests() {
        let wrong_count = PoolManifest {
            schema_version: SCHEMA_VERSION,
            tasks: vec![entry("a", 2), entry("b", 3)],
        };
        assert!(wrong_count.validate().is_err());
        let unsorted = PoolManifest {
            schema_version: SCHEMA_VERSION,
            tasks: vec![entry("b", 3), entry("a", 3)],
        };
        assert!(unsorted.validate().is_err());
        assert!(PoolManifest::from_toml("schema_version = 1\nextra = 2\n").is_err());
    }

    #[test]
    fn labels_parse_and_reject() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.txt");
        fs::write(&p, "0\n1\r\n0\n").unwrap();
        assert_eq!(read_labels(&p).unwrap(), vec![0, 1, 0]);
        fs::write(&p, "0\n2\n").unwrap();
        assert!(matches!(read_labels(&p), Err(Error::Format { offset: 2, .. })));
    }
}
