//! Column standardization and the recursive weighted fusion of pool entries.
//!
//! A fusion step combines the accumulator `A` and the next selected entry
//! `F` as `(w_c * A) op (w_f * F)` elementwise. The accumulator starts as
//! the first selected entry, unweighted.

use crate::error::{Error, Result};
use crate::model::{FeatureMatrix, FusionOp, Genotype};

/// Fused values are clamped to this magnitude after every step.
pub const FUSION_CLAMP: f32 = 1.0e6;

#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    /// Fits per-column mean and population standard deviation over the
    /// selected `rows` of `m`. Zero-variance columns get a std of 1.
    pub fn fit(m: &FeatureMatrix, rows: &[usize]) -> Result<Self> {
        if rows.len() < 2 {
            return Err(Error::InsufficientData(format!(
                "standardizer needs at least 2 rows, got {}",
                rows.len()
            )));
        }
        let d = m.cols();
        let n = rows.len() as f64;
        let mut means = vec![0.0f64; d];
        for &r in rows {
            for (acc, &v) in means.iter_mut().zip(m.row(r)) {
                *acc += v as f64;
            }
        }
        means.iter_mut().for_each(|s| *s /= n);
        let mut vars = vec![0.0f64; d];
        for &r in rows {
            for ((acc, &v), mu) in vars.iter_mut().zip(m.row(r)).zip(&means) {
                let c = v as f64 - mu;
                *acc += c * c;
            }
        }
        let stds = vars
            .into_iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 0.0 && sd.is_finite() {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Ok(Standardizer { means, stds })
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }

    /// Standardizes the selected rows into a row-major `f64` buffer.
    pub fn transform(&self, m: &FeatureMatrix, rows: &[usize]) -> Result<Vec<f64>> {
        if m.cols() != self.dim() {
            return Err(Error::Shape(format!(
                "standardizer fitted on {} columns, matrix has {}",
                self.dim(),
                m.cols()
            )));
        }
        let mut out = Vec::with_capacity(rows.len() * m.cols());
        for &r in rows {
            out.extend(
                m.row(r)
                    .iter()
                    .zip(&self.means)
                    .zip(&self.stds)
                    .map(|((&v, mu), sd)| (v as f64 - mu) / sd),
            );
        }
        Ok(out)
    }
}

/// Fits a standardizer on every row of `train_rows`.
pub fn fit_standardizer(train_rows: &FeatureMatrix) -> Result<Standardizer> {
    let rows: Vec<usize> = (0..train_rows.rows()).collect();
    Standardizer::fit(train_rows, &rows)
}

#[inline]
fn combine(op: FusionOp, a: f32, f: f32) -> f32 {
    match op {
        FusionOp::Add => a + f,
        FusionOp::Mul => a * f,
        FusionOp::Max => a.max(f),
        FusionOp::Min => a.min(f),
        FusionOp::Diff => a - f,
        FusionOp::Avg => (a + f) / 2.0,
    }
}

fn step_in_place(acc: &mut [f32], next: &[f32], op: FusionOp, w_c: f64, w_f: f64) -> Result<()> {
    let (wc, wf) = (w_c as f32, w_f as f32);
    for (a, &f) in acc.iter_mut().zip(next) {
        let v = combine(op, wc * *a, wf * f);
        if !v.is_finite() {
            return Err(Error::NumericOverflow);
        }
        *a = v.clamp(-FUSION_CLAMP, FUSION_CLAMP);
    }
    Ok(())
}

pub fn fuse_step(
    acc: &FeatureMatrix,
    next: &FeatureMatrix,
    op: FusionOp,
    w_c: f64,
    w_f: f64,
) -> Result<FeatureMatrix> {
    if acc.shape() != next.shape() {
        return Err(Error::Shape(format!(
            "cannot fuse {:?} with {:?}",
            acc.shape(),
            next.shape()
        )));
    }
    let mut out = acc.as_slice().to_vec();
    step_in_place(&mut out, next.as_slice(), op, w_c, w_f)?;
    Ok(FeatureMatrix::from_raw(acc.rows(), acc.cols(), out))
}

/// Folds the genotype's selected pool entries left to right.
pub fn fuse_genotype(g: &Genotype, pool: &[FeatureMatrix]) -> Result<FeatureMatrix> {
    let lookup = |k: usize| {
        pool.get(k).ok_or(Error::MissingPoolEntry {
            index: k,
            len: pool.len(),
        })
    };
    let (first, rest) = g
        .genes
        .split_first()
        .ok_or_else(|| Error::Config("cannot fuse an empty genotype".into()))?;
    let base = lookup(first.pool_index)?;
    let mut acc = base.as_slice().to_vec();
    for gene in rest {
        let next = lookup(gene.pool_index)?;
        if next.shape() != base.shape() {
            return Err(Error::Shape(format!(
                "pool entry {} is {:?}, expected {:?}",
                gene.pool_index,
                next.shape(),
                base.shape()
            )));
        }
        step_in_place(&mut acc, next.as_slice(), gene.op, gene.w_c, gene.w_f)?;
    }
    Ok(FeatureMatrix::from_raw(base.rows(), base.cols(), acc))
}
