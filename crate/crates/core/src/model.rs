//! Domain types shared by every stage of the search.
//!
//! Pool indices are semantically aligned across tasks: index `k < T` is
//! "this task as primary, task `k` as auxiliary context" (the self-pairing
//! at `k == position` being the single-task embedding), and index `k >= T`
//! is "this task as auxiliary context for the `(k - T)`-th other task".
//! Index 0 therefore always refers to the first task in lexicographic
//! order, regardless of which task owns the pool.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::proxy::ProxyModel;

pub const WEIGHT_MIN: f64 = 0.1;
pub const WEIGHT_MAX: f64 = 2.0;
pub const INIT_WEIGHT_MIN: f64 = 0.5;
pub const INIT_WEIGHT_MAX: f64 = 1.5;
pub const DEFAULT_MAX_FEATURE_LENGTH: usize = 25;

/// Number of pool entries for `task_count` tasks.
pub fn pool_size(task_count: usize) -> usize {
    2 * task_count - 1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDescriptor {
    pub name: String,
    pub position: usize,
    pub residue_count: usize,
    pub pool_size: usize,
}

impl TaskDescriptor {
    /// Builds descriptors for `(name, residue_count)` pairs, positioned by
    /// lexicographic order of the names.
    pub fn ordered<S: AsRef<str>>(tasks: &[(S, usize)]) -> Result<Vec<TaskDescriptor>> {
        if tasks.is_empty() {
            return Err(Error::Config("at least one task is required".into()));
        }
        let mut sorted: Vec<(&str, usize)> =
            tasks.iter().map(|(n, l)| (n.as_ref(), *l)).collect();
        sorted.sort_by(|a, b| a.0.cmp(b.0));
        if let Some(w) = sorted.windows(2).find(|w| w[0].0 == w[1].0) {
            return Err(Error::Config(format!("duplicate task name `{}`", w[0].0)));
        }
        let pool = pool_size(sorted.len());
        Ok(sorted
            .into_iter()
            .enumerate()
            .map(|(position, (name, residue_count))| TaskDescriptor {
                name: name.to_string(),
                position,
                residue_count,
                pool_size: pool,
            })
            .collect())
    }
}

/// Dense row-major `rows x cols` matrix of per-residue features.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f32>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f32>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("empty matrix {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix needs {} values, got {}",
                rows * cols,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("matrix contains non-finite values".into()));
        }
        Ok(FeatureMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix");
        FeatureMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Internal constructor for already-validated buffers.
    pub(crate) fn from_raw(rows: usize, cols: usize, data: Vec<f32>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        FeatureMatrix { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[f32] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f32 {
        self.data[r * self.cols + c]
    }

    pub fn into_vec(self) -> Vec<f32> {
        self.data
    }

    /// Copies the listed rows into a new matrix.
    pub fn select_rows(&self, rows: &[usize]) -> Result<FeatureMatrix> {
        if rows.is_empty() {
            return Err(Error::Shape("row selection is empty".into()));
        }
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            if r >= self.rows {
                return Err(Error::Bounds {
                    index: r,
                    limit: self.rows,
                });
            }
            data.extend_from_slice(self.row(r));
        }
        Ok(FeatureMatrix::from_raw(rows.len(), self.cols, data))
    }
}

/// Elementwise binary operator applied by one fusion step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionOp {
    Add,
    Mul,
    Max,
    Min,
    Diff,
    Avg,
}

impl FusionOp {
    pub const ALL: [FusionOp; 6] = [
        FusionOp::Add,
        FusionOp::Mul,
        FusionOp::Max,
        FusionOp::Min,
        FusionOp::Diff,
        FusionOp::Avg,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<FusionOp> {
        Self::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            FusionOp::Add => "add",
            FusionOp::Mul => "mul",
            FusionOp::Max => "max",
            FusionOp::Min => "min",
            FusionOp::Diff => "diff",
            FusionOp::Avg => "avg",
        }
    }
}

impl fmt::Display for FusionOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionOp {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FusionOp::ALL
            .into_iter()
            .find(|op| op.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown fusion operator `{s}`")))
    }
}

/// One selected pool entry together with the operator and weights used to
/// fold it into the accumulator. The first gene of a genotype seeds the
/// accumulator, so its `(op, w_c, w_f)` are carried but never applied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FusionGene {
    pub pool_index: usize,
    pub op: FusionOp,
    pub w_c: f64,
    pub w_f: f64,
}

impl FusionGene {
    pub fn new(pool_index: usize, op: FusionOp, w_c: f64, w_f: f64) -> Self {
        FusionGene {
            pool_index,
            op,
            w_c,
            w_f,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Genotype {
    pub genes: Vec<FusionGene>,
}

impl Genotype {
    pub fn new(genes: Vec<FusionGene>) -> Self {
        Genotype { genes }
    }

    pub fn len(&self) -> usize {
        self.genes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.genes.is_empty()
    }

    pub fn contains_index(&self, pool_index: usize) -> bool {
        self.genes.iter().any(|g| g.pool_index == pool_index)
    }

    pub fn gene_for(&self, pool_index: usize) -> Option<&FusionGene> {
        self.genes.iter().find(|g| g.pool_index == pool_index)
    }

    pub fn pool_indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.genes.iter().map(|g| g.pool_index)
    }

    /// Checks every genotype invariant against a pool of `pool_size`
    /// entries and a length cap of `max_len`.
    pub fn validate(&self, pool_size: usize, max_len: usize) -> Result<()> {
        if self.genes.is_empty() || self.genes.len() > max_len {
            return Err(Error::Config(format!(
                "genotype length {} outside [1, {max_len}]",
                self.genes.len()
            )));
        }
        let mut seen = vec![false; pool_size];
        for g in &self.genes {
            if g.pool_index >= pool_size {
                return Err(Error::Bounds {
                    index: g.pool_index,
                    limit: pool_size,
                });
            }
            if std::mem::replace(&mut seen[g.pool_index], true) {
                return Err(Error::Config(format!(
                    "pool index {} selected twice",
                    g.pool_index
                )));
            }
            for w in [g.w_c, g.w_f] {
                if !(WEIGHT_MIN..=WEIGHT_MAX).contains(&w) {
                    return Err(Error::Config(format!("weight {w} outside bounds")));
                }
            }
        }
        Ok(())
    }

    /// Indices and operators only; weights are ignored.
    pub fn structure(&self) -> Vec<(usize, FusionOp)> {
        self.genes.iter().map(|g| (g.pool_index, g.op)).collect()
    }
}

impl fmt::Display for Genotype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, g) in self.genes.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}:{}:{}:{}", g.pool_index, g.op, g.w_c, g.w_f)?;
        }
        Ok(())
    }
}

impl FromStr for Genotype {
    type Err = Error;

    /// Parses the `index:op:w_c:w_f` space-separated form written by `Display`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = |tok: &str| Error::Config(format!("malformed gene `{tok}`"));
        let genes = s
            .split_whitespace()
            .map(|tok| {
                let parts: Vec<&str> = tok.split(':').collect();
                if parts.len() != 4 {
                    return Err(bad(tok));
                }
                Ok(FusionGene {
                    pool_index: parts[0].parse().map_err(|_| bad(tok))?,
                    op: parts[1].parse()?,
                    w_c: parts[2].parse().map_err(|_| bad(tok))?,
                    w_f: parts[3].parse().map_err(|_| bad(tok))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Genotype { genes })
    }
}

/// Minimized objective pair: `g1 = 1 - AUPRC`, `g2 = FPR`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveVector {
    pub g1: f64,
    pub g2: f64,
}

impl ObjectiveVector {
    pub const WORST: ObjectiveVector = ObjectiveVector { g1: 1.0, g2: 1.0 };

    pub fn new(g1: f64, g2: f64) -> Self {
        ObjectiveVector { g1, g2 }
    }

    pub fn as_array(&self) -> [f64; 2] {
        [self.g1, self.g2]
    }
}

/// Train/validation row indices for one task.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

impl Split {
    /// The last `ceil(val_ratio * rows)` rows form the validation set.
    pub fn tail(rows: usize, val_ratio: f64) -> Result<Split> {
        if !(val_ratio > 0.0 && val_ratio < 1.0) {
            return Err(Error::Config(format!("val_ratio {val_ratio} outside (0, 1)")));
        }
        let val = ((val_ratio * rows as f64).ceil() as usize).min(rows);
        if val == 0 || val == rows {
            return Err(Error::InsufficientData(format!(
                "{rows} rows cannot be split with val_ratio {val_ratio}"
            )));
        }
        Ok(Split {
            train: (0..rows - val).collect(),
            validation: (rows - val..rows).collect(),
        })
    }

    pub fn is_disjoint(&self) -> bool {
        let mut seen = std::collections::HashSet::with_capacity(self.train.len());
        seen.extend(self.train.iter().copied());
        self.validation.iter().all(|i| !seen.contains(i))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub id: u64,
    pub task: usize,
    pub genotype: Genotype,
    pub objectives: Option<ObjectiveVector>,
    pub proxy: Option<Arc<ProxyModel>>,
    /// Set when evaluation fell back to the worst objective vector.
    pub failed: bool,
}

impl Individual {
    pub fn new(id: u64, task: usize, genotype: Genotype) -> Self {
        Individual {
            id,
            task,
            genotype,
            objectives: None,
            proxy: None,
            failed: false,
        }
    }

    /// Objectives of an evaluated individual; unevaluated ones rank as worst.
    pub fn objectives_or_worst(&self) -> ObjectiveVector {
        self.objectives.unwrap_or(ObjectiveVector::WORST)
    }

    /// Sort key `(g1, g2, id)`: primary objective first.
    pub fn rank_key(&self) -> (f64, f64, u64) {
        let o = self.objectives_or_worst();
        (o.g1, o.g2, self.id)
    }
}

/// Orders individuals by `(g1, g2, id)`.
pub fn cmp_by_primary(a: &Individual, b: &Individual) -> std::cmp::Ordering {
    let (a1, a2, ai) = a.rank_key();
    let (b1, b2, bi) = b.rank_key();
    a1.total_cmp(&b1)
        .then(a2.total_cmp(&b2))
        .then(ai.cmp(&bi))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskPopulation {
    pub task: usize,
    pub members: Vec<Individual>,
}

impl TaskPopulation {
    pub fn new(task: usize, members: Vec<Individual>) -> Self {
        TaskPopulation { task, members }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn best(&self) -> Option<&Individual> {
        self.members.iter().min_by(|a, b| cmp_by_primary(a, b))
    }
}

/// Role of a pool entry relative to the owning task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolRole {
    /// The task's own single-task embedding.
    Single,
    /// The task as primary, `partner` as auxiliary context.
    PrimaryWithAux { partner: usize },
    /// The task as auxiliary context for `partner`.
    AuxFor { partner: usize },
}

impl PoolRole {
    /// Partner task position, or `self_position` for the single-task entry.
    pub fn partner_or(&self, self_position: usize) -> usize {
        match *self {
            PoolRole::Single => self_position,
            PoolRole::PrimaryWithAux { partner } | PoolRole::AuxFor { partner } => partner,
        }
    }
}

pub fn map_pool_index(task_position: usize, pool_index: usize, task_count: usize) -> Result<PoolRole> {
    if task_position >= task_count {
        return Err(Error::Bounds {
            index: task_position,
            limit: task_count,
        });
    }
    let limit = pool_size(task_count);
    if pool_index >= limit {
        return Err(Error::Bounds {
            index: pool_index,
            limit,
        });
    }
    if pool_index < task_count {
        return Ok(if pool_index == task_position {
            PoolRole::Single
        } else {
            PoolRole::PrimaryWithAux {
                partner: pool_index,
            }
        });
    }
    // (k - T)-th element of the task order with the owner removed
    let j = pool_index - task_count;
    let partner = if j < task_position { j } else { j + 1 };
    Ok(PoolRole::AuxFor { partner })
}

/// Encodes a genotype as a `3 * pool_size` vector in `[0, 1]`, aligned by
/// pool index so that genotypes from different tasks are comparable.
///
/// Slot `k` holds `(selected, (op_code + 1) / 6, mean_weight_scaled)`. The
/// first gene only contributes its selection bit since its operator and
/// weights never take part in fusion.
pub fn vectorize_genotype(g: &Genotype, pool_size: usize) -> Vec<f64> {
    let mut v = vec![0.0; 3 * pool_size];
    for (pos, gene) in g.genes.iter().enumerate() {
        let k = gene.pool_index;
        if k >= pool_size {
            continue;
        }
        v[3 * k] = 1.0;
        if pos > 0 {
            v[3 * k + 1] = (gene.op.code() + 1) as f64 / 6.0;
            let w = 0.5 * (gene.w_c + gene.w_f);
            v[3 * k + 2] = ((w - WEIGHT_MIN) / (WEIGHT_MAX - WEIGHT_MIN)).clamp(0.0, 1.0);
        }
    }
    v
}

/// Draws a random genotype: length uniform in `[1, min(max_len, pool_size)]`,
/// distinct pool indices, uniform operators and weights in `[0.5, 1.5]`.
pub fn random_genotype<R: Rng + ?Sized>(rng: &mut R, pool_size: usize, max_len: usize) -> Genotype {
    assert!(pool_size >= 1 && max_len >= 1);
    let cap = max_len.min(pool_size);
    let len = rng.random_range(1..=cap);
    let picks = index::sample(rng, pool_size, len).into_vec();
    let genes = picks
        .into_iter()
        .map(|pool_index| random_gene(rng, pool_index))
        .collect();
    Genotype { genes }
}

pub(crate) fn random_gene<R: Rng + ?Sized>(rng: &mut R, pool_index: usize) -> FusionGene {
    FusionGene {
        pool_index,
        op: FusionOp::ALL[rng.random_range(0..FusionOp::ALL.len())],
        w_c: rng.random_range(INIT_WEIGHT_MIN..=INIT_WEIGHT_MAX),
        w_f: rng.random_range(INIT_WEIGHT_MIN..=INIT_WEIGHT_MAX),
    }
}
