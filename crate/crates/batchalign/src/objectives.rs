//! Preference pairs and the DPO / ORPO training objectives, with the batch
//! training loop.
//!
//! Losses are evaluated and differentiated per pair; a batch takes one
//! parameter update from the mean gradient over its k pairs. Per-item
//! gradients may be computed in parallel, then summed in item order so runs
//! are bit-reproducible.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LanguageId;
use crate::dataset::{GroupKey, Label, Sample, SampleGroup};
use crate::policy::{
    snapshot_reference, FrozenReference, GradRequest, LossEval, PolicyError, PolicyModel, Scalar,
    SequenceScore, Vocabulary,
};
use crate::prompting::render_prompt;
use crate::sampler::{coupled_batches, uncoupled_batches, Batch, BatchMode, BatchSpec, SamplerError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dpo,
    Orpo,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Dpo => f.write_str("dpo"),
            Method::Orpo => f.write_str("orpo"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub method: Method,
    /// DPO temperature, > 0.
    pub beta: f64,
    /// ORPO odds-ratio weight, >= 0.
    pub lambda: f64,
    /// Use mean per-token log-probabilities for ORPO's response probability.
    pub length_normalize: bool,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            method: Method::Orpo,
            beta: 0.1,
            lambda: 0.1,
            length_normalize: true,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        if self.beta <= 0.0 {
            return Err(ObjectiveError::InvalidConfig("beta must be > 0".into()));
        }
        if self.lambda < 0.0 {
            return Err(ObjectiveError::InvalidConfig("lambda must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum OptimizerKind {
    Sgd,
    /// Adaptive moments; optional, off by default at desk scale.
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Sgd
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    /// Cap on updates per epoch; the equal-update-budget switch for fair
    /// coupled/uncoupled comparison.
    pub updates_per_epoch: Option<usize>,
    pub optimizer: OptimizerKind,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-2,
            epochs: 3,
            seed: 0,
            updates_per_epoch: None,
            optimizer: OptimizerKind::Sgd,
        }
    }
}

#[derive(Debug, Error)]
pub enum ObjectiveError {
    #[error("invalid objective config: {0}")]
    InvalidConfig(String),
    #[error("non-finite value at step {step}")]
    NonFinite { step: usize },
    #[error("degenerate response probability (P = {0})")]
    DegenerateProbability(f64),
    #[error("learning rate must be > 0 (got {0})")]
    BadLearningRate(f64),
    #[error("epochs must be >= 1")]
    BadEpochs,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
}

// ---------------------------------------------------------------------------
// Preference pairs
// ---------------------------------------------------------------------------

/// Rendered prompt tokens with chosen/rejected response tokens. The chosen
/// response is the ground-truth-correct canonical string for the sample's
/// label; the rejected response is the other one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreferencePair {
    pub prompt: Vec<u32>,
    pub chosen: Vec<u32>,
    pub rejected: Vec<u32>,
    pub language: LanguageId,
    pub group_key: GroupKey,
    pub sample_id: String,
}

pub fn make_pair(sample: &Sample, vocab: &Vocabulary) -> Result<PreferencePair, PolicyError> {
    let prompt = vocab.encode_prompt(&render_prompt(sample).text)?;
    let yes = vec![vocab.yes_id()];
    let idk = vec![vocab.idk_id()];
    let (chosen, rejected) = match sample.label {
        Label::Positive => (yes, idk),
        Label::Negative => (idk, yes),
    };
    Ok(PreferencePair {
        prompt,
        chosen,
        rejected,
        language: sample.language.clone(),
        group_key: GroupKey {
            topic_id: sample.topic_id.clone(),
            query_index: sample.query_index,
            label: sample.label,
        },
        sample_id: sample.sample_id.clone(),
    })
}

// ---------------------------------------------------------------------------
// Loss cores over log-probabilities
// ---------------------------------------------------------------------------

/// ln(1 + e^x), stable across the whole real line.
fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DpoEval {
    pub loss: f64,
    pub margin: f64,
    /// d(loss)/d(total policy log-prob) for the chosen response; the
    /// rejected weight is its negation.
    pub weight_chosen: f64,
}

/// DPO from the four sequence log-probabilities:
/// margin = beta * ((lp_w - ref_w) - (lp_l - ref_l)), loss = -log sigmoid(margin).
pub fn dpo_from_log_probs(
    lp_chosen: f64,
    lp_rejected: f64,
    ref_chosen: f64,
    ref_rejected: f64,
    beta: f64,
) -> Result<DpoEval, ObjectiveError> {
    let margin = beta * ((lp_chosen - ref_chosen) - (lp_rejected - ref_rejected));
    let loss = softplus(-margin);
    if !loss.is_finite() || !margin.is_finite() {
        return Err(ObjectiveError::NonFinite { step: 0 });
    }
    Ok(DpoEval {
        loss,
        margin,
        weight_chosen: beta * (sigmoid(margin) - 1.0),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct OrpoEval {
    pub loss: f64,
    pub nll_term: f64,
    pub or_term: f64,
    /// d(loss)/d(mean per-token log-prob) for chosen and rejected.
    pub weight_mean_chosen: f64,
    pub weight_mean_rejected: f64,
}

/// ORPO from mean per-token log-probabilities. With P(y) = exp(mean lp):
/// odds(y) = P/(1-P), or_term = -log sigmoid(log odds(y_w) - log odds(y_l)),
/// loss = -mean lp(y_w) + lambda * or_term.
pub fn orpo_from_log_probs(
    mean_lp_chosen: f64,
    mean_lp_rejected: f64,
    lambda: f64,
) -> Result<OrpoEval, ObjectiveError> {
    for mean in [mean_lp_chosen, mean_lp_rejected] {
        if !mean.is_finite() {
            return Err(ObjectiveError::NonFinite { step: 0 });
        }
        let p = mean.exp();
        if p <= 0.0 || p >= 1.0 {
            return Err(ObjectiveError::DegenerateProbability(p));
        }
    }
    // log odds = m - log(1 - e^m); 1 - e^m computed as -expm1(m) for accuracy.
    let log_odds = |m: f64| m - (-m.exp_m1()).ln();
    let z = log_odds(mean_lp_chosen) - log_odds(mean_lp_rejected);
    let or_term = softplus(-z);
    let nll_term = -mean_lp_chosen;
    let loss = nll_term + lambda * or_term;
    if !loss.is_finite() {
        return Err(ObjectiveError::NonFinite { step: 0 });
    }
    // d log_odds / dm = 1 / (1 - P); d or / dz = sigmoid(z) - 1.
    let dor_dz = sigmoid(z) - 1.0;
    let p_w = mean_lp_chosen.exp();
    let p_l = mean_lp_rejected.exp();
    Ok(OrpoEval {
        loss,
        nll_term,
        or_term,
        weight_mean_chosen: -1.0 + lambda * dor_dz / (1.0 - p_w),
        weight_mean_rejected: -lambda * dor_dz / (1.0 - p_l),
    })
}

// ---------------------------------------------------------------------------
// Model-level loss evaluation
// ---------------------------------------------------------------------------

/// Evaluates the DPO loss and margin for one pair under the given policy and
/// frozen reference.
pub fn dpo_loss<F: Scalar>(
    pair: &PreferencePair,
    model: &PolicyModel<F>,
    reference: &FrozenReference<F>,
    cfg: &ObjectiveConfig,
) -> Result<DpoEval, ObjectiveError> {
    cfg.validate()?;
    let lp_w = model.sequence_log_prob(&pair.prompt, &pair.chosen)?.total;
    let lp_l = model.sequence_log_prob(&pair.prompt, &pair.rejected)?.total;
    let ref_w = reference
        .model()
        .sequence_log_prob(&pair.prompt, &pair.chosen)?
        .total;
    let ref_l = reference
        .model()
        .sequence_log_prob(&pair.prompt, &pair.rejected)?
        .total;
    dpo_from_log_probs(lp_w, lp_l, ref_w, ref_l, cfg.beta)
}

/// Evaluates the ORPO loss terms for one pair under the given policy.
pub fn orpo_loss<F: Scalar>(
    pair: &PreferencePair,
    model: &PolicyModel<F>,
    cfg: &ObjectiveConfig,
) -> Result<OrpoEval, ObjectiveError> {
    cfg.validate()?;
    let w = model.sequence_log_prob(&pair.prompt, &pair.chosen)?;
    let l = model.sequence_log_prob(&pair.prompt, &pair.rejected)?;
    orpo_from_log_probs(
        normalized_mean(&w, cfg.length_normalize),
        normalized_mean(&l, cfg.length_normalize),
        cfg.lambda,
    )
}

fn normalized_mean(score: &SequenceScore, length_normalize: bool) -> f64 {
    if length_normalize && !score.per_token.is_empty() {
        score.total / score.per_token.len() as f64
    } else {
        score.total
    }
}

/// Loss value, trace statistic (margin or or_term), and parameter gradient
/// for one pair.
fn pair_loss_gradient<F: Scalar>(
    pair: &PreferencePair,
    model: &PolicyModel<F>,
    reference: Option<(&f64, &f64)>,
    cfg: &ObjectiveConfig,
) -> Result<(f64, f64, Vec<F>), ObjectiveError> {
    let requests = [
        GradRequest { prompt: &pair.prompt, response: &pair.chosen },
        GradRequest { prompt: &pair.prompt, response: &pair.rejected },
    ];
    let mut stat = 0.0;
    let mut failure: Option<ObjectiveError> = None;
    let (value, grad) = model.loss_gradient(&requests, |scores| match cfg.method {
        Method::Dpo => {
            let (ref_w, ref_l) = reference.expect("DPO requires a reference");
            match dpo_from_log_probs(scores[0].total, scores[1].total, *ref_w, *ref_l, cfg.beta) {
                Ok(eval) => {
                    stat = eval.margin;
                    LossEval {
                        value: eval.loss,
                        dvalue_dtotal: vec![eval.weight_chosen, -eval.weight_chosen],
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    LossEval { value: 0.0, dvalue_dtotal: vec![0.0, 0.0] }
                }
            }
        }
        Method::Orpo => {
            let len_w = scores[0].per_token.len().max(1) as f64;
            let len_l = scores[1].per_token.len().max(1) as f64;
            let (norm_w, norm_l) = if cfg.length_normalize {
                (len_w, len_l)
            } else {
                (1.0, 1.0)
            };
            // Clamp response probabilities away from 1 during training: the
            // odds-ratio gradient carries a 1/(1-P) factor that blows up as
            // the model saturates, and f32 scoring can round mean log-probs
            // to exactly zero.
            let cap = (1.0 - 1e-4f64).ln();
            match orpo_from_log_probs(
                (scores[0].total / norm_w).min(cap),
                (scores[1].total / norm_l).min(cap),
                cfg.lambda,
            ) {
                Ok(eval) => {
                    stat = eval.or_term;
                    LossEval {
                        value: eval.loss,
                        dvalue_dtotal: vec![
                            eval.weight_mean_chosen / norm_w,
                            eval.weight_mean_rejected / norm_l,
                        ],
                    }
                }
                Err(e) => {
                    failure = Some(e);
                    LossEval { value: 0.0, dvalue_dtotal: vec![0.0, 0.0] }
                }
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok((value, stat, grad))
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// One row of the loss trace, one per optimizer step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub epoch: usize,
    pub batch_key: String,
    pub loss: f64,
    /// Batch-mean DPO margin or ORPO odds-ratio term.
    pub stat: f64,
}

struct AdamState<F> {
    m: Vec<F>,
    v: Vec<F>,
    t: usize,
}

/// Trains the model in place over seeded batch streams and returns the loss
/// trace. Deterministic in (seed, configs): per-item gradients are summed in
/// member order before the single serialized update.
pub fn train<F: Scalar>(
    model: &mut PolicyModel<F>,
    groups: &[SampleGroup],
    batch_spec: &BatchSpec,
    objective: &ObjectiveConfig,
    cfg: &TrainConfig,
) -> Result<Vec<TraceRow>, ObjectiveError> {
    objective.validate()?;
    if cfg.learning_rate < 0.0 || !cfg.learning_rate.is_finite() {
        return Err(ObjectiveError::BadLearningRate(cfg.learning_rate));
    }
    if cfg.epochs == 0 {
        return Err(ObjectiveError::BadEpochs);
    }

    // Tokenize every (group, language) item once up front.
    let mut pairs: BTreeMap<(usize, LanguageId), PreferencePair> = BTreeMap::new();
    for (gi, group) in groups.iter().enumerate() {
        for (lang, sample) in &group.members {
            pairs.insert((gi, lang.clone()), make_pair(sample, &model.vocab)?);
        }
    }

    // The DPO reference is snapshotted before step 1; being frozen, its
    // log-probs per pair are constants and are precomputed here.
    let reference_scores: Option<BTreeMap<(usize, LanguageId), (f64, f64)>> =
        if objective.method == Method::Dpo {
            let reference = snapshot_reference(model);
            let mut scores = BTreeMap::new();
            for (key, pair) in &pairs {
                let w = reference
                    .model()
                    .sequence_log_prob(&pair.prompt, &pair.chosen)?
                    .total;
                let l = reference
                    .model()
                    .sequence_log_prob(&pair.prompt, &pair.rejected)?
                    .total;
                scores.insert(key.clone(), (w, l));
            }
            Some(scores)
        } else {
            None
        };

    let mut adam = match cfg.optimizer {
        OptimizerKind::Adam { .. } => Some(AdamState {
            m: vec![F::zero(); model.params.len()],
            v: vec![F::zero(); model.params.len()],
            t: 0,
        }),
        OptimizerKind::Sgd => None,
    };

    let mut trace = Vec::new();
    let mut step = 0usize;
    for epoch in 0..cfg.epochs {
        let mut batches: Vec<Batch> = match batch_spec.mode {
            BatchMode::Coupled => coupled_batches(groups, batch_spec, epoch as u64)?,
            BatchMode::Uncoupled => uncoupled_batches(groups, batch_spec, epoch as u64)?,
        };
        if let Some(cap) = cfg.updates_per_epoch {
            batches.truncate(cap);
        }
        for batch in batches {
            step += 1;
            let members: Vec<&PreferencePair> = batch
                .members
                .iter()
                .map(|(gi, lang)| &pairs[&(*gi, lang.clone())])
                .collect();
            let results: Vec<Result<(f64, f64, Vec<F>), ObjectiveError>> = batch
                .members
                .par_iter()
                .zip(&members)
                .map(|((gi, lang), pair)| {
                    let reference = reference_scores
                        .as_ref()
                        .map(|m| {
                            let (w, l) = &m[&(*gi, lang.clone())];
                            (w, l)
                        });
                    pair_loss_gradient(pair, model, reference, objective)
                })
                .collect();

            let k = batch.members.len() as f64;
            let inv_k = crate::policy::s::<F>(1.0 / k);
            let mut mean_loss = 0.0;
            let mut mean_stat = 0.0;
            let mut update = vec![F::zero(); model.params.len()];
            for result in results {
                let (loss, stat, grad) =
                    result.map_err(|e| match e {
                        ObjectiveError::NonFinite { .. } => ObjectiveError::NonFinite { step },
                        other => other,
                    })?;
                mean_loss += loss / k;
                mean_stat += stat / k;
                for (u, g) in update.iter_mut().zip(&grad) {
                    *u += *g * inv_k;
                }
            }
            if !mean_loss.is_finite() {
                return Err(ObjectiveError::NonFinite { step });
            }

            let lr = crate::policy::s::<F>(cfg.learning_rate);
            match (&mut adam, cfg.optimizer) {
                (Some(state), OptimizerKind::Adam { beta1, beta2, eps }) => {
                    state.t += 1;
                    let b1 = crate::policy::s::<F>(beta1);
                    let b2 = crate::policy::s::<F>(beta2);
                    let e = crate::policy::s::<F>(eps);
                    let corr1 = crate::policy::s::<F>(1.0 - beta1.powi(state.t as i32));
                    let corr2 = crate::policy::s::<F>(1.0 - beta2.powi(state.t as i32));
                    for i in 0..model.params.len() {
                        let g = update[i];
                        state.m[i] = b1 * state.m[i] + (F::one() - b1) * g;
                        state.v[i] = b2 * state.v[i] + (F::one() - b2) * g * g;
                        let mhat = state.m[i] / corr1;
                        let vhat = state.v[i] / corr2;
                        model.params[i] = model.params[i] - lr * mhat / (vhat.sqrt() + e);
                    }
                }
                _ => {
                    for (p, u) in model.params.iter_mut().zip(&update) {
                        *p = *p - lr * *u;
                    }
                }
            }

            let batch_key = batch
                .group_key
                .as_ref()
                .map(|k| k.to_string())
                .unwrap_or_else(|| format!("mixed-{step}"));
            trace.push(TraceRow {
                step,
                epoch,
                batch_key,
                loss: mean_loss,
                stat: mean_stat,
            });
        }
    }
    Ok(trace)
}

/// Serializes a loss trace as CSV: step, epoch, batch_key, loss, stat.
pub fn trace_to_csv(trace: &[TraceRow]) -> String {
    let mut out = String::from("step,epoch,batch_key,loss,stat\n");
    for row in trace {
        out.push_str(&format!(
            "{},{},{},{:.17},{:.17}\n",
            row.step, row.epoch, row.batch_key, row.loss, row.stat
        ));
    }
    out
}
