use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mtga_core::data_io::fmat::{read_fmat, write_fmat};
use mtga_core::data_io::manifest::{load_task, PoolManifest};
use mtga_core::data_io::{generate_synthetic, load_all, SynthConfig};
use mtga_core::model::FeatureMatrix;
use mtga_core::Error;

fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn tiny(tasks: usize) -> SynthConfig {
    SynthConfig {
        task_count: tasks,
        residues: 100,
        feature_dim: 3,
        positive_rate: 0.05,
        ..SynthConfig::default()
    }
}

#[test]
fn fifteen_tasks_give_29_pool_entries() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic(&tiny(15), dir.path()).unwrap();
    let task = load_task(&m, dir.path(), 7).unwrap();
    assert_eq!(task.pool.len(), 29);
    assert!(task.pool.iter().all(|p| p.shape() == (100, 3)));
    assert_eq!(task.split.validation, (75..100).collect::<Vec<_>>());
    assert_eq!(task.split.train, (0..75).collect::<Vec<_>>());
}

#[test]
fn generated_benchmarks_satisfy_manifest_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SynthConfig {
        informative: Some(vec![vec![0, 3], vec![1], vec![4, 2]]),
        ..tiny(3)
    };
    let m = generate_synthetic(&cfg, dir.path()).unwrap();
    assert_eq!(PoolManifest::read(dir.path()).unwrap(), m);
    let (_, tasks) = load_all(dir.path()).unwrap();
    for (entry, task) in m.tasks.iter().zip(&tasks) {
        assert_eq!(entry.pool_files.len(), 5);
        assert_eq!(task.labels.len(), entry.residues);
        let positives = task.labels.iter().filter(|&&y| y == 1).count();
        assert_eq!(positives, 5);
        assert_eq!(entry.positives, 5);
        assert!(task.split.train.iter().any(|&i| task.labels[i] == 1));
        assert!(task.split.validation.iter().any(|&i| task.labels[i] == 1));
        task.validate(3).unwrap();
    }
    assert_eq!(m.tasks[0].informative, vec![0, 3]);
    assert_eq!(m.tasks[2].informative, vec![2, 4]);
}

#[test]
fn generation_is_byte_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    generate_synthetic(&tiny(3), a.path()).unwrap();
    generate_synthetic(&tiny(3), b.path()).unwrap();
    assert_eq!(tree(a.path()), tree(b.path()));
    let c = tempfile::tempdir().unwrap();
    generate_synthetic(&SynthConfig { seed: 1, ..tiny(3) }, c.path()).unwrap();
    assert_ne!(tree(a.path()), tree(c.path()));
}

#[test]
fn wrong_column_count_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic(&tiny(2), dir.path()).unwrap();
    let bad = dir.path().join("task1").join("pool_2.fmat");
    write_fmat(&FeatureMatrix::zeros(100, 4), &bad).unwrap();
    match load_task(&m, dir.path(), 1) {
        Err(Error::Shape(msg)) => assert!(msg.contains("pool_2.fmat"), "{msg}"),
        other => panic!("expected shape error, got {other:?}"),
    }
}

#[test]
fn label_length_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let m = generate_synthetic(&tiny(2), dir.path()).unwrap();
    let labels = dir.path().join("task0").join("labels.txt");
    let text = fs::read_to_string(&labels).unwrap();
    fs::write(&labels, &text[..text.len() - 2]).unwrap();
    assert!(matches!(load_task(&m, dir.path(), 0), Err(Error::Manifest(_))));
}

#[test]
fn fmat_file_layout() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.fmat");
    let m = FeatureMatrix::new(2, 3, vec![1.0, -2.5, 0.0, 3.25, 1e-30, -0.0]).unwrap();
    write_fmat(&m, &p).unwrap();
    let bytes = fs::read(&p).unwrap();
    assert_eq!(&bytes[..6], b"FMAT1\0");
    assert_eq!(&bytes[6..10], &2u32.to_le_bytes());
    assert_eq!(&bytes[10..14], &3u32.to_le_bytes());
    assert_eq!(&bytes[14..18], &1.0f32.to_le_bytes());
    assert_eq!(bytes.len(), 14 + 6 * 4);
    let back = read_fmat(&p).unwrap();
    assert!(back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn missing_manifest_is_io_error() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_all(dir.path()), Err(Error::Io { .. })));
}
