//! Proxy fitness: a focal-loss logistic head trained on the fused,
//! standardized training rows and scored on the validation rows.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fusion::{fuse_genotype, Standardizer};
use crate::metrics::{auprc, confusion, fpr, DECISION_THRESHOLD};
use crate::model::{FeatureMatrix, Genotype, Individual, ObjectiveVector, Split};

/// Probabilities are clipped to `[P_CLIP, 1 - P_CLIP]` before any logarithm.
pub const P_CLIP: f64 = 1e-7;
const MONOTONE_SLACK: f64 = 1e-12;
const MAX_HALVINGS: u32 = 10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProxyConfig {
    pub alpha_pos: f64,
    pub alpha_neg: f64,
    pub gamma: f64,
    pub ridge_lambda: f64,
    pub max_iter: usize,
    pub step_size: f64,
    pub grad_tol: f64,
}

impl Default for ProxyConfig {
    fn default() -> Self {
        ProxyConfig {
            alpha_pos: 0.85,
            alpha_neg: 0.15,
            gamma: 1.5,
            ridge_lambda: 0.5,
            max_iter: 300,
            step_size: 0.1,
            grad_tol: 1e-5,
        }
    }
}

impl ProxyConfig {
    // negated comparisons so NaN is rejected
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if (self.alpha_pos + self.alpha_neg - 1.0).abs() > 1e-9
            || !(0.0..=1.0).contains(&self.alpha_pos)
        {
            return Err(Error::Config(format!(
                "alpha_pos + alpha_neg must equal 1 (got {} + {})",
                self.alpha_pos, self.alpha_neg
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(Error::Config("gamma must be >= 0".into()));
        }
        if !(self.ridge_lambda >= 0.0) {
            return Err(Error::Config("ridge_lambda must be >= 0".into()));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be >= 1".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(Error::Config("step_size must be > 0".into()));
        }
        Ok(())
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Focal loss of probability `p` for label `y`, weighted by `alpha_pos`
/// on positives and `1 - alpha_pos` on negatives.
pub fn focal_loss(p: f64, y: u8, cfg: &ProxyConfig) -> f64 {
    let p = p.clamp(P_CLIP, 1.0 - P_CLIP);
    let a = cfg.alpha_pos;
    if y == 1 {
        -a * (1.0 - p).powf(cfg.gamma) * p.ln()
    } else {
        -(1.0 - a) * p.powf(cfg.gamma) * (1.0 - p).ln()
    }
}

/// Loss and its derivative with respect to the logit `z`.
#[inline]
fn focal_loss_and_dz(z: f64, y: u8, cfg: &ProxyConfig) -> (f64, f64) {
    let p = sigmoid(z).clamp(P_CLIP, 1.0 - P_CLIP);
    let q = 1.0 - p;
    let g = cfg.gamma;
    let a = cfg.alpha_pos;
    if y == 1 {
        let qg = q.powf(g);
        let lp = p.ln();
        (-a * qg * lp, a * (g * p * qg * lp - qg * q))
    } else {
        let pg = p.powf(g);
        let lq = q.ln();
        (-(1.0 - a) * pg * lq, (1.0 - a) * (pg * p - g * pg * q * lq))
    }
}

/// Regularized training objective over a standardized design matrix:
/// mean focal loss plus `(lambda / 2) * |w|^2` (intercept unpenalized).
///
/// Parameters are laid out as `[w_0, .., w_{d-1}, intercept]`.
pub struct FocalObjective<'a> {
    x: &'a [f64],
    labels: &'a [u8],
    dim: usize,
    cfg: &'a ProxyConfig,
}

impl<'a> FocalObjective<'a> {
    pub fn new(x: &'a [f64], labels: &'a [u8], dim: usize, cfg: &'a ProxyConfig) -> Result<Self> {
        if dim == 0 || x.len() != labels.len() * dim {
            return Err(Error::Shape(format!(
                "design matrix of {} values does not fit {} rows x {dim} cols",
                x.len(),
                labels.len()
            )));
        }
        Ok(FocalObjective {
            x,
            labels,
            dim,
            cfg,
        })
    }

    pub fn param_len(&self) -> usize {
        self.dim + 1
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.value_and_gradient(params, None)
    }

    pub fn gradient(&self, params: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.param_len()];
        self.value_and_gradient(params, Some(&mut g));
        g
    }

    /// Returns the objective; fills `grad` when given.
    pub fn value_and_gradient(&self, params: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let d = self.dim;
        let (w, b) = params.split_at(d);
        let b = b[0];
        if let Some(g) = grad.as_deref_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
        let mut loss = 0.0;
        for (row, &y) in self.x.chunks_exact(d).zip(self.labels) {
            let z = b + row.iter().zip(w).map(|(a, c)| a * c).sum::<f64>();
            let (l, dz) = focal_loss_and_dz(z, y, self.cfg);
            loss += l;
            if let Some(g) = grad.as_deref_mut() {
                for (gj, xj) in g[..d].iter_mut().zip(row) {
                    *gj += dz * xj;
                }
                g[d] += dz;
            }
        }
        let n = self.labels.len() as f64;
        let lambda = self.cfg.ridge_lambda;
        let penalty = 0.5 * lambda * w.iter().map(|v| v * v).sum::<f64>();
        if let Some(g) = grad {
            for (gj, wj) in g[..d].iter_mut().zip(w) {
                *gj = *gj / n + lambda * wj;
            }
            g[d] /= n;
        }
        loss / n + penalty
    }
}

/// Fitted logistic head plus the standardizer of its inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyModel {
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl ProxyModel {
    pub fn standardizer(&self) -> Standardizer {
        Standardizer {
            means: self.means.clone(),
            stds: self.stds.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.coefficients.len()
    }

    /// Probabilities for the selected rows of a fused matrix.
    pub fn predict_rows(&self, fused: &FeatureMatrix, rows: &[usize]) -> Result<Vec<f64>> {
        if fused.cols() != self.dim() || self.means.len() != self.dim() {
            return Err(Error::Shape(format!(
                "model expects {} columns, fused matrix has {}",
                self.dim(),
                fused.cols()
            )));
        }
        let mut out = Vec::with_capacity(rows.len());
        for &r in rows {
            if r >= fused.rows() {
                return Err(Error::Bounds {
                    index: r,
                    limit: fused.rows(),
                });
            }
            let z = fused
                .row(r)
                .iter()
                .zip(&self.means)
                .zip(&self.stds)
                .zip(&self.coefficients)
                .map(|(((&v, mu), sd), c)| (v as f64 - mu) / sd * c)
                .sum::<f64>()
                + self.intercept;
            out.push(sigmoid(z));
        }
        Ok(out)
    }

    pub fn predict(&self, fused: &FeatureMatrix) -> Result<Vec<f64>> {
        let rows: Vec<usize> = (0..fused.rows()).collect();
        self.predict_rows(fused, &rows)
    }
}

/// Per-iteration objective values of a training run.
#[derive(Clone, Debug, Default)]
pub struct TrainTrace {
    pub losses: Vec<f64>,
    pub iterations: usize,
}

/// Gradient descent from zero with step halving whenever a step would
/// increase the objective.
fn descend(obj: &FocalObjective<'_>, cfg: &ProxyConfig) -> (Vec<f64>, TrainTrace) {
    let k = obj.param_len();
    let mut params = vec![0.0; k];
    let mut grad = vec![0.0; k];
    let mut loss = obj.value_and_gradient(&params, Some(&mut grad));
    let mut trace = TrainTrace {
        losses: vec![loss],
        iterations: 0,
    };
    let mut step = cfg.step_size;
    let mut trial = vec![0.0; k];
    let mut trial_grad = vec![0.0; k];
    'outer: for _ in 0..cfg.max_iter {
        let norm = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if norm < cfg.grad_tol {
            break;
        }
        let mut halvings = 0;
        loop {
            for ((t, p), g) in trial.iter_mut().zip(&params).zip(&grad) {
                *t = p - step * g;
            }
            let trial_loss = obj.value_and_gradient(&trial, Some(&mut trial_grad));
            if trial_loss <= loss + MONOTONE_SLACK {
                std::mem::swap(&mut params, &mut trial);
                std::mem::swap(&mut grad, &mut trial_grad);
                loss = trial_loss;
                break;
            }
            if halvings == MAX_HALVINGS {
                break 'outer;
            }
            step *= 0.5;
            halvings += 1;
        }
        trace.losses.push(loss);
        trace.iterations += 1;
    }
    (params, trace)
}

/// Trains the head on every row of `fused_train`.
pub fn train_head(fused_train: &FeatureMatrix, labels_train: &[u8], cfg: &ProxyConfig) -> Result<ProxyModel> {
    train_head_traced(fused_train, labels_train, cfg).map(|(m, _)| m)
}

pub fn train_head_traced(
    fused_train: &FeatureMatrix,
    labels_train: &[u8],
    cfg: &ProxyConfig,
) -> Result<(ProxyModel, TrainTrace)> {
    crate::metrics::check_labels(fused_train.rows(), labels_train)?;
    let positives = labels_train.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == labels_train.len() {
        return Err(Error::DegenerateTask);
    }
    let rows: Vec<usize> = (0..fused_train.rows()).collect();
    let std = Standardizer::fit(fused_train, &rows)?;
    let x = std.transform(fused_train, &rows)?;
    let obj = FocalObjective::new(&x, labels_train, fused_train.cols(), cfg)?;
    let (mut params, trace) = descend(&obj, cfg);
    let intercept = params.pop().unwrap_or(0.0);
    Ok((
        ProxyModel {
            coefficients: params,
            intercept,
            means: std.means,
            stds: std.stds,
        },
        trace,
    ))
}

/// Why an evaluation fell back to the worst objective vector.
#[derive(Clone, Debug, PartialEq)]
pub enum EvalFailure {
    NumericOverflow,
    DegenerateLabels,
    Other(String),
}

#[derive(Clone, Debug)]
pub struct Evaluation {
    pub objectives: ObjectiveVector,
    pub model: Option<ProxyModel>,
    pub failure: Option<EvalFailure>,
}

/// Scores a genotype: fuse, fit the head on the training rows, then
/// `g1 = 1 - AUPRC` and `g2 = FPR` (threshold 0.5) on the validation rows.
/// Any failure yields `(1, 1)` with the reason attached.
pub fn evaluate_genotype(
    genotype: &Genotype,
    pool: &[FeatureMatrix],
    labels: &[u8],
    split: &Split,
    cfg: &ProxyConfig,
) -> Evaluation {
    match try_evaluate(genotype, pool, labels, split, cfg) {
        Ok((objectives, model)) => Evaluation {
            objectives,
            model: Some(model),
            failure: None,
        },
        Err(e) => Evaluation {
            objectives: ObjectiveVector::WORST,
            model: None,
            failure: Some(match e {
                Error::NumericOverflow => EvalFailure::NumericOverflow,
                Error::DegenerateTask | Error::UndefinedMetric(_) => EvalFailure::DegenerateLabels,
                other => EvalFailure::Other(other.to_string()),
            }),
        },
    }
}

fn try_evaluate(
    genotype: &Genotype,
    pool: &[FeatureMatrix],
    labels: &[u8],
    split: &Split,
    cfg: &ProxyConfig,
) -> Result<(ObjectiveVector, ProxyModel)> {
    let fused = fuse_genotype(genotype, pool)?;
    if labels.len() != fused.rows() {
        return Err(Error::LengthMismatch {
            left: fused.rows(),
            right: labels.len(),
        });
    }
    let train = fused.select_rows(&split.train)?;
    let train_labels: Vec<u8> = split.train.iter().map(|&i| labels[i]).collect();
    let model = train_head(&train, &train_labels, cfg)?;
    let objectives = score_validation(&model, &fused, labels, split)?;
    Ok((objectives, model))
}

/// Objective vector of a fitted model on the validation rows.
pub fn score_validation(
    model: &ProxyModel,
    fused: &FeatureMatrix,
    labels: &[u8],
    split: &Split,
) -> Result<ObjectiveVector> {
    let probs = model.predict_rows(fused, &split.validation)?;
    let val_labels: Vec<u8> = split.validation.iter().map(|&i| labels[i]).collect();
    let ap = auprc(&probs, &val_labels)?;
    let c = confusion(&probs, &val_labels, DECISION_THRESHOLD)?;
    Ok(ObjectiveVector::new(
        (1.0 - ap).clamp(0.0, 1.0),
        fpr(&c).clamp(0.0, 1.0),
    ))
}

/// Evaluates in place, storing objectives and the fitted head.
pub fn evaluate_individual(
    ind: &mut Individual,
    pool: &[FeatureMatrix],
    labels: &[u8],
    split: &Split,
    cfg: &ProxyConfig,
) {
    let ev = evaluate_genotype(&ind.genotype, pool, labels, split, cfg);
    ind.objectives = Some(ev.objectives);
    ind.failed = ev.failure.is_some();
    ind.proxy = ev.model.map(std::sync::Arc::new);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FusionGene, FusionOp};

    fn cfg() -> ProxyConfig {
        ProxyConfig::default()
    }

    #[test]
    fn focal_loss_confident_correct_is_small() {
        assert!(focal_loss(1.0 - 1e-9, 1, &cfg()) < 1e-9);
    }

    #[test]
    fn focal_loss_reduces_to_half_bce() {
        let c = ProxyConfig {
            alpha_pos: 0.5,
            alpha_neg: 0.5,
            gamma: 0.0,
            ..cfg()
        };
        for &p in &[0.1, 0.3, 0.5, 0.8] {
            assert!((focal_loss(p, 1, &c) - 0.5 * -p.ln()).abs() < 1e-12);
            assert!((focal_loss(p, 0, &c) - 0.5 * -(1.0 - p).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn focal_loss_hand_value() {
        let expected = 0.85 * 0.5f64.powf(1.5) * 2f64.ln();
        assert!((focal_loss(0.5, 1, &cfg()) - expected).abs() < 1e-15);
        // the closed form evaluates to 0.2083049
        assert!((expected - 0.2083049).abs() < 1e-7);
    }

    #[test]
    fn focal_loss_is_finite_at_extremes() {
        for y in [0, 1] {
            for p in [0.0, 1.0] {
                assert!(focal_loss(p, y, &cfg()).is_finite());
            }
        }
    }

    #[test]
    fn config_validation() {
        assert!(cfg().validate().is_ok());
        assert!(ProxyConfig { alpha_pos: 0.9, ..cfg() }.validate().is_err());
        assert!(ProxyConfig { gamma: -1.0, ..cfg() }.validate().is_err());
        assert!(ProxyConfig { max_iter: 0, ..cfg() }.validate().is_err());
    }

    #[test]
    fn single_class_is_degenerate() {
        let x = FeatureMatrix::new(3, 1, vec![0.1, 0.2, 0.3]).unwrap();
        assert!(matches!(
            train_head(&x, &[0, 0, 0], &cfg()),
            Err(Error::DegenerateTask)
        ));
        assert!(matches!(
            train_head(&x, &[1, 1, 1], &cfg()),
            Err(Error::DegenerateTask)
        ));
    }

    #[test]
    fn separable_toy_set() {
        // 2-D, positives in the upper right quadrant
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            let t = i as f32 / 40.0;
            let pos = i % 5 == 0;
            let (a, b) = if pos { (2.0 + t, 1.5 + t) } else { (-1.0 + t, -0.5 - t) };
            data.extend([a, b]);
            labels.push(pos as u8);
        }
        let x = FeatureMatrix::new(40, 2, data).unwrap();
        let split = Split::tail(40, 0.25).unwrap();
        let g = Genotype::new(vec![FusionGene::new(0, FusionOp::Add, 1.0, 1.0)]);
        let ev = evaluate_genotype(&g, &[x], &labels, &split, &cfg());
        assert!(ev.failure.is_none());
        assert_eq!(ev.objectives.g1, 0.0);
    }

    #[test]
    fn loss_is_monotone() {
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for i in 0..60 {
            let y = (i % 7 == 0) as u8;
            let s = i as f32 * 0.37;
            data.extend([s.sin() + y as f32, s.cos() * 3.0, (s * 1.3).sin() - y as f32 * 0.5]);
            labels.push(y);
        }
        let x = FeatureMatrix::new(60, 3, data).unwrap();
        let (_, trace) = train_head_traced(&x, &labels, &cfg()).unwrap();
        assert!(trace.iterations > 0);
        for w in trace.losses.windows(2) {
            assert!(w[1] <= w[0] + 1e-12);
        }
    }

    #[test]
    fn zero_model_predicts_half() {
        let m = ProxyModel {
            coefficients: vec![0.0; 3],
            intercept: 0.0,
            means: vec![0.0; 3],
            stds: vec![1.0; 3],
        };
        let x = FeatureMatrix::new(2, 3, vec![1.0, 2.0, 3.0, -4.0, 5.0, 6.0]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![0.5, 0.5]);
        let wrong = FeatureMatrix::zeros(2, 2);
        assert!(matches!(m.predict(&wrong), Err(Error::Shape(_))));
    }

    #[test]
    fn overflow_gives_worst_fitness() {
        let x = FeatureMatrix::new(4, 1, vec![f32::MAX, 1.0, 1.0, 1.0]).unwrap();
        let g = Genotype::new(vec![
            FusionGene::new(0, FusionOp::Add, 1.0, 1.0),
            FusionGene::new(1, FusionOp::Mul, 2.0, 2.0),
        ]);
        let split = Split::tail(4, 0.5).unwrap();
        let ev = evaluate_genotype(&g, &[x.clone(), x], &[1, 0, 1, 0], &split, &cfg());
        assert_eq!(ev.objectives, ObjectiveVector::WORST);
        assert_eq!(ev.failure, Some(EvalFailure::NumericOverflow));
    }

    #[test]
    fn degenerate_labels_give_worst_fitness() {
        let x = FeatureMatrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let g = Genotype::new(vec![FusionGene::new(0, FusionOp::Add, 1.0, 1.0)]);
        let split = Split::tail(4, 0.5).unwrap();
        let ev = evaluate_genotype(&g, &[x], &[0, 0, 1, 0], &split, &cfg());
        assert_eq!(ev.objectives, ObjectiveVector::WORST);
        assert_eq!(ev.failure, Some(EvalFailure::DegenerateLabels));
    }
}
