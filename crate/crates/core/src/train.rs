//! Stratified cross-validation trainer: weighted cross entropy, Adam with
//! classical L2, per-subject tapes with fixed-order gradient accumulation.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cohort::{Label, SubjectData};
use crate::error::{Error, Result};
use crate::gnn;
use crate::graph::ConnGraph;
use crate::model::{
    FusionModel, ModelConfig, ModelPass, ParamSet, StagedParams, SubjectInput, UnimodalModel,
};
use crate::rng;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Tensor};

/// Numeric width the pipeline trains and evaluates in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "f32" => Ok(Precision::F32),
            "f64" => Ok(Precision::F64),
            other => Err(Error::Config(format!(
                "precision must be f32 or f64, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub folds: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,
    pub precision: Precision,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            folds: 5,
            batch_size: 16,
            lr: 1e-5,
            weight_decay: 1e-4,
            epochs: 200,
            seed: 0,
            precision: Precision::F32,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config(format!("folds must be >= 2, got {}", self.folds)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay > 0.0) {
            return Err(Error::Config(format!(
                "weight_decay must be positive, got {}",
                self.weight_decay
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps.is_finite() && self.eps > 0.0) {
            return Err(Error::Config("Adam eps must be positive".into()));
        }
        Ok(())
    }
}

/// Train/eval index sets for one fold.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Stratified k-fold assignment: within each class, subjects are shuffled by
/// the seed and dealt into k contiguous chunks whose sizes differ by at most
/// one (the first `count % k` folds take the extra subject).
pub fn stratified_kfold(labels: &[Label], k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k must be >= 2, got {k}")));
    }
    let mut eval_sets: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (class_idx, class) in [Label::Neg, Label::Pos].into_iter().enumerate() {
        let mut members: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        if members.len() < k {
            return Err(Error::Config(format!(
                "class {} has {} subjects, cannot stratify into {k} folds",
                class.name(),
                members.len()
            )));
        }
        members.shuffle(&mut rng::stream(seed, "kfold", class_idx as u64));
        let base = members.len() / k;
        let extra = members.len() % k;
        let mut start = 0usize;
        for (f, set) in eval_sets.iter_mut().enumerate() {
            let size = base + usize::from(f < extra);
            set.extend(&members[start..start + size]);
            start += size;
        }
    }
    Ok(eval_sets
        .into_iter()
        .map(|mut eval| {
            eval.sort_unstable();
            let in_eval: HashSet<usize> = eval.iter().copied().collect();
            let train = (0..labels.len()).filter(|i| !in_eval.contains(i)).collect();
            Fold { train, eval }
        })
        .collect())
}

/// Inverse-frequency class weights: `w_c = N / (2 * N_c)`.
pub fn class_weights(labels: &[Label]) -> Result<[f64; 2]> {
    let n_pos = labels.iter().filter(|&&l| l == Label::Pos).count();
    let n_neg = labels.len() - n_pos;
    if n_neg == 0 || n_pos == 0 {
        return Err(Error::EmptySample("class_weights needs both classes present"));
    }
    let n = labels.len() as f64;
    Ok([n / (2.0 * n_neg as f64), n / (2.0 * n_pos as f64)])
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

/// First/second moment buffers, one pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &[Tensor<T>]) -> Self {
        AdamState {
            m: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            v: params.iter().map(|p| vec![T::zero(); p.numel()]).collect(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }
}

/// One Adam update. L2 regularization enters as `weight_decay * param` added
/// to the raw gradient (classical L2, not decoupled decay).
pub fn adam_step<T: Scalar>(
    cfg: &TrainConfig,
    state: &mut AdamState<T>,
    params: &mut [Tensor<T>],
    grads: &[Vec<T>],
) {
    assert_eq!(params.len(), grads.len(), "gradient list misaligned");
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::c(cfg.beta1);
    let b2 = T::c(cfg.beta2);
    let one = T::one();
    let bc1 = T::c(1.0 - cfg.beta1.powi(t));
    let bc2 = T::c(1.0 - cfg.beta2.powi(t));
    let lr = T::c(cfg.lr);
    let wd = T::c(cfg.weight_decay);
    let eps = T::c(cfg.eps);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        debug_assert_eq!(p.numel(), g.len());
        for ((pi, &gi), (mi, vi)) in p
            .as_mut_slice()
            .iter_mut()
            .zip(g)
            .zip(m.iter_mut().zip(v.iter_mut()))
        {
            let grad = gi + wd * *pi;
            *mi = b1 * *mi + (one - b1) * grad;
            *vi = b2 * *vi + (one - b2) * grad * grad;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *pi = *pi - lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
}

// ---------------------------------------------------------------------------
// model abstraction
// ---------------------------------------------------------------------------

/// What the trainer needs from a model; implemented by the fusion model and
/// the unimodal baselines.
pub trait TrainableModel<T: Scalar>: Send + Sync {
    fn make_tape(&self) -> Tape<T>;
    fn stage(&self, tape: &mut Tape<T>, trainable: bool) -> StagedParams;
    fn forward_staged(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedParams,
        input: &SubjectInput<'_, T>,
        inputs_require_grad: bool,
    ) -> Result<ModelPass>;
    fn params(&self) -> &ParamSet<T>;
    fn params_mut(&mut self) -> &mut ParamSet<T>;
    fn config(&self) -> &ModelConfig;
}

impl<T: Scalar> TrainableModel<T> for FusionModel<T> {
    fn make_tape(&self) -> Tape<T> {
        FusionModel::make_tape(self)
    }

    fn stage(&self, tape: &mut Tape<T>, trainable: bool) -> StagedParams {
        FusionModel::stage(self, tape, trainable)
    }

    fn forward_staged(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedParams,
        input: &SubjectInput<'_, T>,
        inputs_require_grad: bool,
    ) -> Result<ModelPass> {
        FusionModel::forward_staged(self, tape, staged, input, inputs_require_grad)
    }

    fn params(&self) -> &ParamSet<T> {
        FusionModel::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        FusionModel::params_mut(self)
    }

    fn config(&self) -> &ModelConfig {
        FusionModel::config(self)
    }
}

impl<T: Scalar> TrainableModel<T> for UnimodalModel<T> {
    fn make_tape(&self) -> Tape<T> {
        UnimodalModel::make_tape(self)
    }

    fn stage(&self, tape: &mut Tape<T>, trainable: bool) -> StagedParams {
        UnimodalModel::stage(self, tape, trainable)
    }

    fn forward_staged(
        &self,
        tape: &mut Tape<T>,
        staged: &StagedParams,
        input: &SubjectInput<'_, T>,
        inputs_require_grad: bool,
    ) -> Result<ModelPass> {
        UnimodalModel::forward_staged(self, tape, staged, input, inputs_require_grad)
    }

    fn params(&self) -> &ParamSet<T> {
        UnimodalModel::params(self)
    }

    fn params_mut(&mut self) -> &mut ParamSet<T> {
        UnimodalModel::params_mut(self)
    }

    fn config(&self) -> &ModelConfig {
        UnimodalModel::config(self)
    }
}

// ---------------------------------------------------------------------------
// subject preparation
// ---------------------------------------------------------------------------

/// A subject with its structural Laplacian precomputed; the same prepared
/// data serves every fold and every model family.
#[derive(Debug, Clone)]
pub struct PreparedSubject<T> {
    pub id: String,
    pub label: Label,
    pub vol: Tensor<T>,
    pub fnc: ConnGraph<T>,
    pub sc_lhat: Vec<T>,
}

/// Validates each subject against the model configuration and precomputes the
/// rescaled structural Laplacian.
pub fn prepare_subjects<T: Scalar>(
    config: &ModelConfig,
    data: &[SubjectData<T>],
) -> Result<Vec<PreparedSubject<T>>> {
    config.validate()?;
    data.par_iter()
        .map(|s| {
            let (d, h, w) = config.volume.input_shape;
            if s.vol.shape() != [d, h, w] {
                return Err(Error::Config(format!(
                    "subject {}: volume shape {:?} does not match model input {:?}",
                    s.id,
                    s.vol.shape(),
                    (d, h, w)
                )));
            }
            if s.fnc.n_nodes() != config.fnc.n_nodes {
                return Err(Error::Config(format!(
                    "subject {}: fnc has {} nodes, model expects {}",
                    s.id,
                    s.fnc.n_nodes(),
                    config.fnc.n_nodes
                )));
            }
            if s.sc.n_nodes() != config.sc.n_nodes {
                return Err(Error::Config(format!(
                    "subject {}: sc has {} nodes, model expects {}",
                    s.id,
                    s.sc.n_nodes(),
                    config.sc.n_nodes
                )));
            }
            let sc_lhat = gnn::scaled_laplacian(&s.sc.rescaled_to_unit_max(), config.lambda_max)?;
            Ok(PreparedSubject {
                id: s.id.clone(),
                label: s.label,
                vol: s.vol.clone(),
                fnc: s.fnc.clone(),
                sc_lhat,
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// metrics and reports
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub label: Label,
    pub predicted: Label,
    pub p_neg: f64,
    pub p_pos: f64,
    pub correct: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Metrics whose denominator was zero; their value is reported as 0.
    pub undefined: Vec<String>,
}

/// POS is the positive class. Any zero denominator yields 0 and a flag
/// rather than NaN.
pub fn classification_metrics(predictions: &[Prediction]) -> Metrics {
    let mut tp = 0usize;
    let mut fp = 0usize;
    let mut fn_ = 0usize;
    let mut correct = 0usize;
    for p in predictions {
        if p.correct {
            correct += 1;
        }
        match (p.predicted, p.label) {
            (Label::Pos, Label::Pos) => tp += 1,
            (Label::Pos, Label::Neg) => fp += 1,
            (Label::Neg, Label::Pos) => fn_ += 1,
            (Label::Neg, Label::Neg) => {}
        }
    }
    let mut undefined = Vec::new();
    let accuracy = if predictions.is_empty() {
        undefined.push("accuracy".to_string());
        0.0
    } else {
        correct as f64 / predictions.len() as f64
    };
    let precision = if tp + fp == 0 {
        undefined.push("precision".to_string());
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        undefined.push("recall".to_string());
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        undefined.push("f1".to_string());
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Metrics {
        accuracy,
        precision,
        recall,
        f1,
        undefined,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub eval_size: usize,
    pub class_weights: [f64; 2],
    pub epoch_losses: Vec<f64>,
    pub metrics: Metrics,
    pub predictions: Vec<Prediction>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation over folds.
    pub std: f64,
}

fn summarize(values: &[f64]) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() < 2 {
        0.0
    } else {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    };
    MetricSummary {
        mean,
        std: var.sqrt(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub accuracy: MetricSummary,
    pub precision: MetricSummary,
    pub recall: MetricSummary,
    pub f1: MetricSummary,
    /// Fold with the highest eval accuracy (lowest index on ties).
    pub best_fold: usize,
}

pub fn summarize_folds(reports: &[FoldReport]) -> CvSummary {
    let pick = |f: fn(&Metrics) -> f64| -> Vec<f64> {
        reports.iter().map(|r| f(&r.metrics)).collect::<Vec<_>>()
    };
    let acc = pick(|m| m.accuracy);
    let best_fold = acc
        .iter()
        .enumerate()
        .max_by(|(ia, a), (ib, b)| a.partial_cmp(b).unwrap().then(ib.cmp(ia)))
        .map(|(i, _)| i)
        .unwrap_or(0);
    CvSummary {
        accuracy: summarize(&acc),
        precision: summarize(&pick(|m| m.precision)),
        recall: summarize(&pick(|m| m.recall)),
        f1: summarize(&pick(|m| m.f1)),
        best_fold,
    }
}

pub struct FoldOutcome<M> {
    pub report: FoldReport,
    pub model: M,
}

pub struct CvOutcome<M> {
    pub folds: Vec<FoldOutcome<M>>,
    pub summary: CvSummary,
}

// ---------------------------------------------------------------------------
// training loops
// ---------------------------------------------------------------------------

fn subject_input<'a, T: Scalar>(s: &'a PreparedSubject<T>) -> SubjectInput<'a, T> {
    SubjectInput {
        vol: &s.vol,
        fnc: &s.fnc,
        sc_lhat: &s.sc_lhat,
    }
}

/// Loss and per-parameter gradients for one subject on its own tape.
fn subject_grads<T: Scalar, M: TrainableModel<T>>(
    model: &M,
    subject: &PreparedSubject<T>,
    weight: f64,
) -> Result<(f64, Vec<Vec<T>>)> {
    let mut tape = model.make_tape();
    let staged = model.stage(&mut tape, true);
    let pass = model.forward_staged(&mut tape, &staged, &subject_input(subject), false)?;
    let loss = tape.softmax_cross_entropy(pass.logits, subject.label.index(), T::c(weight))?;
    tape.backward(loss)?;
    let loss_value = tape.value(loss).item().as_f64();
    let grads = staged
        .ids
        .iter()
        .zip(model.params().tensors())
        .map(|(&id, p)| match tape.grad(id) {
            Some(g) => g.to_vec(),
            None => vec![T::zero(); p.numel()],
        })
        .collect();
    Ok((loss_value, grads))
}

pub fn evaluate<T: Scalar, M: TrainableModel<T>>(
    model: &M,
    subjects: &[PreparedSubject<T>],
    eval_ids: &[usize],
) -> Result<Vec<Prediction>> {
    eval_ids
        .par_iter()
        .map(|&si| {
            let s = &subjects[si];
            let mut tape = model.make_tape();
            let staged = model.stage(&mut tape, false);
            let pass = model.forward_staged(&mut tape, &staged, &subject_input(s), false)?;
            let probs = tape.value(pass.probs);
            let p_neg = probs.as_slice()[0].as_f64();
            let p_pos = probs.as_slice()[1].as_f64();
            if !(p_neg.is_finite() && p_pos.is_finite()) {
                return Err(Error::NonFinite { op: "eval forward" });
            }
            let predicted = if p_pos > p_neg { Label::Pos } else { Label::Neg };
            Ok(Prediction {
                id: s.id.clone(),
                label: s.label,
                predicted,
                p_neg,
                p_pos,
                correct: predicted == s.label,
            })
        })
        .collect()
}

/// Trains one fold to completion and evaluates on the final epoch's weights.
fn train_fold<T: Scalar, M: TrainableModel<T>>(
    cfg: &TrainConfig,
    subjects: &[PreparedSubject<T>],
    fold_idx: usize,
    fold: &Fold,
    mut model: M,
) -> Result<FoldOutcome<M>> {
    let train_set: HashSet<usize> = fold.train.iter().copied().collect();
    assert!(
        fold.eval.iter().all(|i| !train_set.contains(i)),
        "fold {fold_idx}: train and eval sets overlap"
    );
    assert!(!fold.eval.is_empty(), "fold {fold_idx}: empty eval set");

    let train_labels: Vec<Label> = fold.train.iter().map(|&i| subjects[i].label).collect();
    let weights = class_weights(&train_labels)?;

    let mut adam = AdamState::new(model.params().tensors());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    let mut order = fold.train.clone();

    for epoch in 0..cfg.epochs {
        let shuffle_seed = rng::derive_seed(cfg.seed, "shuffle", (fold_idx * cfg.epochs + epoch) as u64);
        order.shuffle(&mut rng::stream(shuffle_seed, "epoch", 0));

        let mut loss_sum = 0.0f64;
        for batch in order.chunks(cfg.batch_size) {
            // Per-subject tapes in parallel; collect() keeps batch order so
            // the f32 reduction below is deterministic.
            let results: Vec<(f64, Vec<Vec<T>>)> = batch
                .par_iter()
                .map(|&si| subject_grads(&model, &subjects[si], weights[subjects[si].label.index()]))
                .collect::<Result<Vec<_>>>()?;

            let scale = T::c(1.0 / batch.len() as f64);
            let mut batch_loss = 0.0f64;
            let mut grads: Vec<Vec<T>> = model
                .params()
                .tensors()
                .iter()
                .map(|p| vec![T::zero(); p.numel()])
                .collect();
            for (loss, subject_grads) in &results {
                batch_loss += *loss;
                for (acc, g) in grads.iter_mut().zip(subject_grads) {
                    for (a, &v) in acc.iter_mut().zip(g) {
                        *a += scale * v;
                    }
                }
            }
            batch_loss /= batch.len() as f64;
            loss_sum += batch_loss * batch.len() as f64;

            if !batch_loss.is_finite() {
                return Err(Error::Diverged {
                    fold: fold_idx,
                    epoch,
                    loss: batch_loss,
                });
            }
            adam_step(cfg, &mut adam, model.params_mut().tensors_mut(), &grads);
        }
        epoch_losses.push(loss_sum / order.len() as f64);
    }

    let predictions = evaluate(&model, subjects, &fold.eval)?;
    let metrics = classification_metrics(&predictions);
    Ok(FoldOutcome {
        report: FoldReport {
            fold: fold_idx,
            train_size: fold.train.len(),
            eval_size: fold.eval.len(),
            class_weights: weights,
            epoch_losses,
            metrics,
            predictions,
        },
        model,
    })
}

/// Full stratified-CV run: `init(fold, seed)` builds a fresh model per fold.
pub fn train_cv<T, M, F>(
    cfg: &TrainConfig,
    subjects: &[PreparedSubject<T>],
    init: F,
) -> Result<CvOutcome<M>>
where
    T: Scalar,
    M: TrainableModel<T>,
    F: Fn(usize, u64) -> Result<M> + Sync,
{
    cfg.validate()?;
    let labels: Vec<Label> = subjects.iter().map(|s| s.label).collect();
    let folds = stratified_kfold(&labels, cfg.folds, cfg.seed)?;

    let outcomes: Vec<FoldOutcome<M>> = folds
        .par_iter()
        .enumerate()
        .map(|(fi, fold)| {
            let model = init(fi, rng::derive_seed(cfg.seed, "model-init", fi as u64))?;
            train_fold(cfg, subjects, fi, fold, model)
        })
        .collect::<Result<Vec<_>>>()?;

    let reports: Vec<FoldReport> = outcomes.iter().map(|o| o.report.clone()).collect();
    let summary = summarize_folds(&reports);
    Ok(CvOutcome {
        folds: outcomes,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(n_neg: usize, n_pos: usize) -> Vec<Label> {
        let mut v = vec![Label::Neg; n_neg];
        v.extend(vec![Label::Pos; n_pos]);
        v
    }

    #[test]
    fn kfold_cohort_arithmetic_matches_hand_count() {
        let folds = stratified_kfold(&labels(185, 133), 5, 42).unwrap();
        assert_eq!(folds.len(), 5);
        let mut pos_sizes = Vec::new();
        for f in &folds {
            let neg = f.eval.iter().filter(|&&i| i < 185).count();
            let pos = f.eval.len() - neg;
            assert_eq!(neg, 37);
            pos_sizes.push(pos);
            assert_eq!(f.train.len() + f.eval.len(), 318);
        }
        assert_eq!(pos_sizes, vec![27, 27, 27, 26, 26]);
    }

    #[test]
    fn kfold_partitions_every_subject_exactly_once() {
        let folds = stratified_kfold(&labels(23, 17), 4, 7).unwrap();
        let mut seen = vec![0usize; 40];
        for f in &folds {
            for &i in &f.eval {
                seen[i] += 1;
            }
            let t: HashSet<usize> = f.train.iter().copied().collect();
            assert!(f.eval.iter().all(|i| !t.contains(i)));
        }
        assert!(seen.iter().all(|&c| c == 1));
    }

    #[test]
    fn kfold_is_seed_deterministic_and_seed_sensitive() {
        let a = stratified_kfold(&labels(20, 15), 5, 1).unwrap();
        let b = stratified_kfold(&labels(20, 15), 5, 1).unwrap();
        let c = stratified_kfold(&labels(20, 15), 5, 2).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn kfold_rejects_small_class() {
        let err = stratified_kfold(&labels(30, 3), 5, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn class_weights_match_formula() {
        let w = class_weights(&labels(185, 133)).unwrap();
        assert!((w[0] - 318.0 / 370.0).abs() < 1e-12);
        assert!((w[1] - 318.0 / 266.0).abs() < 1e-12);
        assert!(class_weights(&labels(5, 0)).is_err());
    }

    #[test]
    fn adam_first_step_is_signed_lr() {
        // With bias correction, the first update is lr * g / (|g| + eps').
        let cfg = TrainConfig {
            lr: 0.1,
            weight_decay: 1e-12,
            ..TrainConfig::default()
        };
        let mut params = vec![Tensor::from_vec(vec![3], vec![0.0f64, 0.0, 0.0])];
        let mut state = AdamState::new(&params);
        let grads = vec![vec![0.5f64, -2.0, 0.0]];
        adam_step(&cfg, &mut state, &mut params, &grads);
        let p = params[0].as_slice();
        assert!((p[0] + 0.1).abs() < 1e-6, "{p:?}");
        assert!((p[1] - 0.1).abs() < 1e-6, "{p:?}");
        assert!(p[2].abs() < 1e-9);
    }

    #[test]
    fn adam_applies_classical_l2() {
        // Zero raw gradient, positive weight: decay pulls toward zero.
        let cfg = TrainConfig {
            lr: 0.01,
            weight_decay: 0.1,
            ..TrainConfig::default()
        };
        let mut params = vec![Tensor::from_vec(vec![1], vec![2.0f64])];
        let mut state = AdamState::new(&params);
        for _ in 0..10 {
            let grads = vec![vec![0.0f64]];
            adam_step(&cfg, &mut state, &mut params, &grads);
        }
        let v = params[0].as_slice()[0];
        assert!(v < 2.0 && v > 1.0, "decay should shrink the weight, got {v}");
    }

    #[test]
    fn metrics_handle_zero_denominators() {
        // All predictions NEG: no TP, no FP.
        let preds: Vec<Prediction> = (0..4)
            .map(|i| {
                let label = if i < 2 { Label::Neg } else { Label::Pos };
                Prediction {
                    id: format!("s{i}"),
                    label,
                    predicted: Label::Neg,
                    p_neg: 0.9,
                    p_pos: 0.1,
                    correct: label == Label::Neg,
                }
            })
            .collect();
        let m = classification_metrics(&preds);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.precision, 0.0);
        assert_eq!(m.recall, 0.0);
        assert_eq!(m.f1, 0.0);
        assert!(m.undefined.contains(&"precision".to_string()));
        assert!(m.undefined.contains(&"f1".to_string()));
        assert!(!m.undefined.contains(&"recall".to_string()));
    }

    #[test]
    fn metrics_on_perfect_predictions() {
        let preds: Vec<Prediction> = (0..6)
            .map(|i| {
                let label = if i < 3 { Label::Neg } else { Label::Pos };
                Prediction {
                    id: format!("s{i}"),
                    label,
                    predicted: label,
                    p_neg: 0.5,
                    p_pos: 0.5,
                    correct: true,
                }
            })
            .collect();
        let m = classification_metrics(&preds);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.precision, 1.0);
        assert_eq!(m.recall, 1.0);
        assert_eq!(m.f1, 1.0);
        assert!(m.undefined.is_empty());
    }

    #[test]
    fn summary_flags_best_fold_with_tie_to_lowest() {
        let mk = |fold: usize, acc: f64| FoldReport {
            fold,
            train_size: 10,
            eval_size: 5,
            class_weights: [1.0, 1.0],
            epoch_losses: vec![],
            metrics: Metrics {
                accuracy: acc,
                precision: acc,
                recall: acc,
                f1: acc,
                undefined: vec![],
            },
            predictions: vec![],
        };
        let s = summarize_folds(&[mk(0, 0.8), mk(1, 0.9), mk(2, 0.9)]);
        assert_eq!(s.best_fold, 1);
        assert!((s.accuracy.mean - 0.8666666666666667).abs() < 1e-12);
    }

    #[test]
    fn train_config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { folds: 1, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { lr: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { weight_decay: 0.0, ..TrainConfig::default() }.validate().is_err());
        assert!(TrainConfig { epochs: 0, ..TrainConfig::default() }.validate().is_err());
    }
}
