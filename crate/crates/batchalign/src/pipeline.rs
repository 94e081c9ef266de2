//! Experiment orchestration: data build, training arms, evaluation, and
//! ablation sweeps, with run manifests and atomic artifact writes. The CLI
//! subcommands are thin wrappers over these functions; the acceptance suite
//! drives them directly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::corpus::{
    apply_translation_noise, generate_synthetic_corpus, load_corpus, validate_parallelism,
    write_corpus, CorpusError, LanguageId, ParallelCorpus,
};
use crate::dataset::{
    build_samples, load_dataset, split_dataset, write_dataset, DatasetError, DatasetSplit,
};
use crate::eval::{
    bootstrap_ci, error_cooccurrence, exact_match_accuracy, mcnemar_p, mcnemar_test,
    paired_bootstrap_delta, perplexity, rest_average, CooccurrenceRow, EvalConfigEcho, EvalError,
    EvalReport, LanguageRow, PerplexityRow, PredictionRecord, SignificanceRow,
};
use crate::manifest::RunManifest;
use crate::objectives::{
    trace_to_csv, train, ObjectiveConfig, ObjectiveError, OptimizerKind, TraceRow, TrainConfig,
};
use crate::policy::{
    load_checkpoint, save_checkpoint, ArchConfig, PolicyError, PolicyModel, Vocabulary,
};
use crate::prompting::{render_prompt, ResponseLabel};
use crate::rng::mix_seed;
use crate::sampler::{BatchMode, BatchSpec, SamplerError};

/// Training runs use single precision; gradient tests elsewhere use f64.
pub type TrainFloat = f32;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Sampler(#[from] SamplerError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    State(String),
}

impl PipelineError {
    /// Stable category tag for the CLI's one-line error output.
    pub fn category(&self) -> &'static str {
        match self {
            PipelineError::Config(_) => "config",
            PipelineError::Corpus(_) => "corpus",
            PipelineError::Dataset(_) => "dataset",
            PipelineError::Sampler(_) => "sampler",
            PipelineError::Policy(_) => "policy",
            PipelineError::Objective(_) => "objective",
            PipelineError::Eval(_) => "eval",
            PipelineError::Io(_) => "io",
            PipelineError::State(_) => "state",
        }
    }
}

// ---------------------------------------------------------------------------
// Artifact paths
// ---------------------------------------------------------------------------

pub struct Artifacts<'a>(pub &'a Path);

impl<'a> Artifacts<'a> {
    pub fn corpus(&self) -> PathBuf {
        self.0.join("corpus.jsonl")
    }
    pub fn dataset(&self) -> PathBuf {
        self.0.join("dataset.jsonl")
    }
    pub fn checkpoint(&self) -> PathBuf {
        self.0.join("checkpoint.json")
    }
    pub fn trace(&self) -> PathBuf {
        self.0.join("trace.csv")
    }
    pub fn report_json(&self) -> PathBuf {
        self.0.join("report.json")
    }
    pub fn report_text(&self) -> PathBuf {
        self.0.join("report.txt")
    }
    pub fn ablation_json(&self) -> PathBuf {
        self.0.join("ablation.json")
    }
    pub fn ablation_text(&self) -> PathBuf {
        self.0.join("ablation.txt")
    }
    pub fn manifest(&self, command: &str) -> PathBuf {
        self.0.join(format!("{command}.manifest.json"))
    }
}

// ---------------------------------------------------------------------------
// Data preparation
// ---------------------------------------------------------------------------

/// Everything downstream stages need about one dataset.
pub struct PreparedData {
    pub corpus: Option<ParallelCorpus>,
    pub split: DatasetSplit,
    pub vocab: Vocabulary,
    pub languages: Vec<LanguageId>,
    pub anchor: LanguageId,
    /// Languages eligible for training batches (held-out removed).
    pub train_languages: Vec<LanguageId>,
}

fn resolve_anchor(
    languages: &[LanguageId],
    requested: Option<&str>,
) -> Result<LanguageId, PipelineError> {
    if let Some(code) = requested {
        return languages
            .iter()
            .find(|l| l.as_str() == code)
            .cloned()
            .ok_or_else(|| PipelineError::State(format!("anchor {code:?} not in corpus")));
    }
    for default in ["en", "p0"] {
        if let Some(l) = languages.iter().find(|l| l.as_str() == default) {
            return Ok(l.clone());
        }
    }
    languages
        .first()
        .cloned()
        .ok_or_else(|| PipelineError::State("corpus has no languages".into()))
}

fn languages_of(split: &DatasetSplit) -> Vec<LanguageId> {
    let mut set = std::collections::BTreeSet::new();
    for g in split.train.iter().chain(&split.test) {
        set.extend(g.members.keys().cloned());
    }
    set.into_iter().collect()
}

/// Builds (or loads) the corpus, applies translation noise, constructs
/// sample groups, and splits 70/30 by topic.
pub fn prepare_data(cfg: &RunConfig) -> Result<PreparedData, PipelineError> {
    let corpus = match &cfg.corpus_path {
        Some(path) => load_corpus(path)?,
        None => generate_synthetic_corpus(
            cfg.seed_data,
            cfg.synthetic_topics,
            cfg.synthetic_languages,
            cfg.synthetic_pool,
        )?,
    };
    let corpus = if cfg.noise_rate > 0.0 {
        apply_translation_noise(&corpus, cfg.noise_rate, mix_seed(cfg.seed_data, "noise"))?
    } else {
        corpus
    };
    let violations = validate_parallelism(&corpus);
    if let Some(v) = violations.first() {
        return Err(PipelineError::Corpus(CorpusError::InvariantViolation(
            v.clone(),
        )));
    }
    let groups = build_samples(&corpus, mix_seed(cfg.seed_data, "samples"))?;
    let split = split_dataset(&groups, mix_seed(cfg.seed_data, "split"))?;
    let vocab = Vocabulary::from_split(&split);
    let languages = corpus.languages.clone();
    let anchor = resolve_anchor(&languages, cfg.anchor.as_deref())?;
    let train_languages = languages
        .iter()
        .filter(|l| !cfg.held_out_languages.iter().any(|h| h == l.as_str()))
        .cloned()
        .collect();
    Ok(PreparedData {
        corpus: Some(corpus),
        split,
        vocab,
        languages,
        anchor,
        train_languages,
    })
}

/// Rebuilds the derived fields from a dataset dump on disk.
pub fn prepared_from_dataset(
    split: DatasetSplit,
    cfg: &RunConfig,
) -> Result<PreparedData, PipelineError> {
    let vocab = Vocabulary::from_split(&split);
    let languages = languages_of(&split);
    let anchor = resolve_anchor(&languages, cfg.anchor.as_deref())?;
    let train_languages = languages
        .iter()
        .filter(|l| !cfg.held_out_languages.iter().any(|h| h == l.as_str()))
        .cloned()
        .collect();
    Ok(PreparedData {
        corpus: None,
        split,
        vocab,
        languages,
        anchor,
        train_languages,
    })
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

fn optimizer_of(cfg: &RunConfig) -> OptimizerKind {
    if cfg.adam {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    } else {
        OptimizerKind::Sgd
    }
}

/// Resolves the main-phase batch spec from the config (k = 0 means all
/// eligible languages).
pub fn main_batch_spec(cfg: &RunConfig, data: &PreparedData) -> BatchSpec {
    let k = if cfg.k == 0 {
        match (cfg.mode, cfg.include_anchor) {
            (BatchMode::Coupled, false) => data.train_languages.len().saturating_sub(1),
            _ => data.train_languages.len(),
        }
    } else {
        cfg.k
    };
    BatchSpec {
        mode: cfg.mode,
        k,
        include_anchor: cfg.include_anchor,
        anchor: data.anchor.clone(),
        languages: data.train_languages.clone(),
        seed: mix_seed(cfg.seed_train, "batches"),
    }
}

/// Fresh random parameters plus the anchor-only warmup phase. Every arm of a
/// comparison starts from this same model.
pub fn prepare_initial_model(
    cfg: &RunConfig,
    data: &PreparedData,
) -> Result<(PolicyModel<TrainFloat>, Vec<TraceRow>), PipelineError> {
    let mut model = PolicyModel::<TrainFloat>::new(
        ArchConfig::default(),
        data.vocab.clone(),
        mix_seed(cfg.seed_train, "init"),
    );
    let mut warmup_trace = Vec::new();
    if cfg.warmup_epochs > 0 {
        let spec = BatchSpec {
            mode: BatchMode::Coupled,
            k: 1,
            include_anchor: true,
            anchor: data.anchor.clone(),
            languages: data.train_languages.clone(),
            seed: mix_seed(cfg.seed_train, "warmup"),
        };
        let train_cfg = TrainConfig {
            learning_rate: cfg.learning_rate,
            epochs: cfg.warmup_epochs,
            seed: spec.seed,
            updates_per_epoch: None,
            optimizer: optimizer_of(cfg),
        };
        let objective = ObjectiveConfig {
            method: cfg.method,
            beta: cfg.beta,
            lambda: cfg.lambda,
            length_normalize: true,
        };
        warmup_trace = train(&mut model, &data.split.train, &spec, &objective, &train_cfg)?;
    }
    Ok((model, warmup_trace))
}

/// Runs the main alignment phase on `model` in place.
pub fn run_training(
    model: &mut PolicyModel<TrainFloat>,
    cfg: &RunConfig,
    data: &PreparedData,
    spec: &BatchSpec,
) -> Result<Vec<TraceRow>, PipelineError> {
    let train_cfg = TrainConfig {
        learning_rate: cfg.learning_rate,
        epochs: cfg.epochs,
        seed: spec.seed,
        updates_per_epoch: cfg.equal_update_budget.then_some(data.split.train.len()),
        optimizer: optimizer_of(cfg),
    };
    let objective = ObjectiveConfig {
        method: cfg.method,
        beta: cfg.beta,
        lambda: cfg.lambda,
        length_normalize: true,
    };
    Ok(train(model, &data.split.train, spec, &objective, &train_cfg)?)
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluation report plus the raw per-language prediction records.
pub struct EvalOutcome {
    pub report: EvalReport,
    pub records: BTreeMap<LanguageId, Vec<PredictionRecord>>,
}

/// Scores both canonical responses for every test sample, predicts the more
/// likely one, and assembles the full statistical report.
pub fn evaluate_model(
    model: &PolicyModel<TrainFloat>,
    data: &PreparedData,
    cfg: &RunConfig,
) -> Result<EvalOutcome, PipelineError> {
    if data.split.test.is_empty() {
        return Err(PipelineError::State("test split is empty".into()));
    }
    let eval_langs: Vec<LanguageId> = data
        .languages
        .iter()
        .filter(|l| {
            cfg.eval_languages.is_empty()
                || **l == data.anchor
                || cfg.eval_languages.iter().any(|e| e == l.as_str())
        })
        .cloned()
        .collect();

    let yes_id = model.vocab.yes_id();
    let idk_id = model.vocab.idk_id();
    let mut records: BTreeMap<LanguageId, Vec<PredictionRecord>> = BTreeMap::new();
    let mut nlls: BTreeMap<LanguageId, Vec<f64>> = BTreeMap::new();
    for group in &data.split.test {
        for lang in &eval_langs {
            let Some(sample) = group.members.get(lang) else {
                continue;
            };
            let prompt = model.vocab.encode_prompt(&render_prompt(sample).text)?;
            let scores = model.label_log_probs(&prompt, &[yes_id, idk_id])?;
            let predicted = if scores[0] >= scores[1] {
                ResponseLabel::Yes
            } else {
                ResponseLabel::Idk
            };
            let correct_lp = match sample.label {
                crate::dataset::Label::Positive => scores[0],
                crate::dataset::Label::Negative => scores[1],
            };
            records
                .entry(lang.clone())
                .or_default()
                .push(PredictionRecord::new(
                    sample.sample_id.clone(),
                    lang.clone(),
                    group.key.clone(),
                    sample.label,
                    predicted,
                ));
            nlls.entry(lang.clone()).or_default().push(-correct_lp);
        }
    }

    let mut per_language = BTreeMap::new();
    let mut accuracies = BTreeMap::new();
    for (lang, recs) in &records {
        let accuracy = exact_match_accuracy(recs)?;
        let (ci_low, ci_high) = bootstrap_ci(
            recs,
            cfg.bootstrap_b,
            cfg.alpha,
            mix_seed(cfg.seed_eval, &format!("ci/{lang}")),
        )?;
        per_language.insert(
            lang.as_str().to_string(),
            LanguageRow {
                accuracy,
                ci_low,
                ci_high,
                n: recs.len(),
            },
        );
        accuracies.insert(lang.clone(), accuracy);
    }
    let rest_avg = rest_average(&accuracies, &data.anchor)?;

    let anchor_records = records
        .get(&data.anchor)
        .ok_or_else(|| PipelineError::State("anchor language missing from evaluation".into()))?;
    let mut tests = Vec::new();
    let mut cooccurrence = Vec::new();
    for (lang, recs) in &records {
        if lang == &data.anchor {
            continue;
        }
        let counts = error_cooccurrence(anchor_records, recs)?;
        let p_value = mcnemar_p(counts.anchor_only_wrong, counts.other_only_wrong);
        tests.push(SignificanceRow {
            comparison: format!("{}-vs-{}", data.anchor, lang),
            b: counts.anchor_only_wrong,
            c: counts.other_only_wrong,
            p_value,
            significant: p_value < cfg.mcnemar_alpha,
        });
        cooccurrence.push(CooccurrenceRow {
            language: lang.as_str().to_string(),
            counts,
        });
    }

    let anchor_nlls = &nlls[&data.anchor];
    let mut ppl_rows = BTreeMap::new();
    for (lang, lang_nlls) in &nlls {
        let delta_vs_anchor = if lang == &data.anchor {
            None
        } else {
            Some(paired_bootstrap_delta(
                lang_nlls,
                anchor_nlls,
                cfg.bootstrap_b,
                mix_seed(cfg.seed_eval, &format!("ppl/{lang}")),
            )?)
        };
        ppl_rows.insert(
            lang.as_str().to_string(),
            PerplexityRow {
                perplexity: perplexity(lang_nlls)?,
                delta_vs_anchor,
            },
        );
    }

    let report = EvalReport {
        anchor: data.anchor.as_str().to_string(),
        per_language,
        rest_avg,
        tests,
        perplexity: ppl_rows,
        cooccurrence,
        config: EvalConfigEcho {
            bootstrap_b: cfg.bootstrap_b,
            seed: cfg.seed_eval,
            alpha: cfg.alpha,
            mcnemar_alpha: cfg.mcnemar_alpha,
        },
    };
    Ok(EvalOutcome { report, records })
}

// ---------------------------------------------------------------------------
// CLI commands
// ---------------------------------------------------------------------------

/// build-data: corpus (loaded or synthetic, optionally noised) -> samples ->
/// split, all constructed in memory first so failures write nothing.
pub fn cmd_build_data(cfg: &RunConfig) -> Result<(), PipelineError> {
    let (mut manifest, started) = RunManifest::new("build-data", cfg.to_map());
    let data = prepare_data(cfg)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let paths = Artifacts(&cfg.out_dir);
    let corpus = data.corpus.as_ref().expect("prepare_data keeps the corpus");
    write_corpus(corpus, &paths.corpus())?;
    write_dataset(&data.split, &paths.dataset())?;
    manifest.record_artifact(&paths.corpus())?;
    manifest.record_artifact(&paths.dataset())?;
    manifest.finish(started, &paths.manifest("build-data"))?;
    Ok(())
}

/// train: warmup + alignment phase, or continue from an existing checkpoint
/// with `resume`.
pub fn cmd_train(cfg: &RunConfig, resume: bool) -> Result<(), PipelineError> {
    let (mut manifest, started) = RunManifest::new("train", cfg.to_map());
    let paths = Artifacts(&cfg.out_dir);
    if !paths.dataset().exists() {
        return Err(PipelineError::State(format!(
            "dataset {} not found; run build-data first",
            paths.dataset().display()
        )));
    }
    let split = load_dataset(&paths.dataset())?;
    let data = prepared_from_dataset(split, cfg)?;
    manifest.record_artifact(&paths.dataset())?;

    let (mut model, mut trace, step_offset) = if resume {
        if !paths.checkpoint().exists() {
            return Err(PipelineError::State(
                "resume requested but no checkpoint exists".into(),
            ));
        }
        let model = load_checkpoint::<TrainFloat>(&paths.checkpoint())?;
        let offset = if paths.trace().exists() {
            std::fs::read_to_string(paths.trace())?
                .lines()
                .count()
                .saturating_sub(1)
        } else {
            0
        };
        (model, Vec::new(), offset)
    } else {
        let (model, warmup_trace) = prepare_initial_model(cfg, &data)?;
        (model, warmup_trace, 0)
    };

    let spec = main_batch_spec(cfg, &data);
    let main_trace = run_training(&mut model, cfg, &data, &spec)?;
    trace.extend(main_trace);
    for (i, row) in trace.iter_mut().enumerate() {
        row.step = step_offset + i + 1;
    }

    save_checkpoint(&model, &paths.checkpoint())?;
    let csv = trace_to_csv(&trace);
    if resume && paths.trace().exists() {
        let mut existing = std::fs::read_to_string(paths.trace())?;
        existing.push_str(csv.split_once('\n').map(|(_, rest)| rest).unwrap_or(""));
        crate::manifest::write_atomic(&paths.trace(), existing.as_bytes())?;
    } else {
        crate::manifest::write_atomic(&paths.trace(), csv.as_bytes())?;
    }
    manifest.record_artifact(&paths.checkpoint())?;
    manifest.record_artifact(&paths.trace())?;
    manifest.finish(started, &paths.manifest("train"))?;
    Ok(())
}

/// evaluate: render, score, predict, and emit the report files.
pub fn cmd_evaluate(cfg: &RunConfig) -> Result<EvalReport, PipelineError> {
    let (mut manifest, started) = RunManifest::new("evaluate", cfg.to_map());
    let paths = Artifacts(&cfg.out_dir);
    for (path, hint) in [
        (paths.dataset(), "build-data"),
        (paths.checkpoint(), "train"),
    ] {
        if !path.exists() {
            return Err(PipelineError::State(format!(
                "{} not found; run {hint} first",
                path.display()
            )));
        }
    }
    let split = load_dataset(&paths.dataset())?;
    let data = prepared_from_dataset(split, cfg)?;
    let model = load_checkpoint::<TrainFloat>(&paths.checkpoint())?;
    let outcome = evaluate_model(&model, &data, cfg)?;

    let json = serde_json::to_vec_pretty(&outcome.report).expect("report serializes");
    crate::manifest::write_atomic(&paths.report_json(), &json)?;
    crate::manifest::write_atomic(
        &paths.report_text(),
        outcome.report.render_table().as_bytes(),
    )?;
    manifest.record_artifact(&paths.dataset())?;
    manifest.record_artifact(&paths.checkpoint())?;
    manifest.record_artifact(&paths.report_json())?;
    manifest.record_artifact(&paths.report_text())?;
    manifest.finish(started, &paths.manifest("evaluate"))?;
    Ok(outcome.report)
}

// ---------------------------------------------------------------------------
// Ablation sweeps
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub enum Sweep {
    /// include_anchor true vs false.
    Anchor,
    /// Batch-size ladder k = 1..=|languages| with the anchor included.
    KLadder,
    /// Translation-noise grid over the given rates.
    Noise(Vec<f64>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArmResult {
    pub name: String,
    pub rest_avg: f64,
    pub anchor_accuracy: f64,
    pub report: EvalReport,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationReport {
    pub sweep: String,
    pub arms: Vec<ArmResult>,
    /// McNemar between the first arm and each later arm over pooled
    /// non-anchor records, paired by sample_id.
    pub comparisons: Vec<SignificanceRow>,
}

impl AblationReport {
    pub fn render_table(&self) -> String {
        let mut out = format!("sweep: {}\n", self.sweep);
        out.push_str(&format!(
            "| {:<24} | {:>11} | {:>10} |\n",
            "arm", "Rest (avg.)", "anchor"
        ));
        for arm in &self.arms {
            out.push_str(&format!(
                "| {:<24} | {:>11.1} | {:>10.1} |\n",
                arm.name,
                arm.rest_avg * 100.0,
                arm.anchor_accuracy * 100.0
            ));
        }
        for c in &self.comparisons {
            out.push_str(&format!(
                "McNemar {:<40} b={:<4} c={:<4} p={:.6}{}\n",
                c.comparison,
                c.b,
                c.c,
                c.p_value,
                if c.significant { " *" } else { "" }
            ));
        }
        out
    }
}

fn pooled_non_anchor(outcome: &EvalOutcome, anchor: &LanguageId) -> Vec<PredictionRecord> {
    outcome
        .records
        .iter()
        .filter(|(l, _)| *l != anchor)
        .flat_map(|(_, r)| r.iter().cloned())
        .collect()
}

/// Runs one training + evaluation arm from a shared initial model.
pub fn run_arm(
    name: &str,
    initial: &PolicyModel<TrainFloat>,
    cfg: &RunConfig,
    data: &PreparedData,
    spec: &BatchSpec,
) -> Result<(ArmResult, EvalOutcome), PipelineError> {
    let mut model = initial.clone();
    run_training(&mut model, cfg, data, spec)?;
    let outcome = evaluate_model(&model, data, cfg)?;
    let anchor_accuracy = outcome.report.per_language[data.anchor.as_str()].accuracy;
    Ok((
        ArmResult {
            name: name.to_string(),
            rest_avg: outcome.report.rest_avg,
            anchor_accuracy,
            report: outcome.report.clone(),
        },
        outcome,
    ))
}

/// ablate: run the requested sweep with shared seeds and shared initial
/// parameters; only the swept setting differs between arms.
pub fn cmd_ablate(cfg: &RunConfig, sweep: &Sweep) -> Result<AblationReport, PipelineError> {
    let (mut manifest, started) = RunManifest::new("ablate", cfg.to_map());

    let mut arms: Vec<ArmResult> = Vec::new();
    let mut pooled: Vec<Vec<PredictionRecord>> = Vec::new();
    let sweep_name;

    match sweep {
        Sweep::Anchor => {
            sweep_name = "anchor".to_string();
            let data = prepare_data(cfg)?;
            let (initial, _) = prepare_initial_model(cfg, &data)?;
            for include_anchor in [true, false] {
                let mut arm_cfg = cfg.clone();
                arm_cfg.include_anchor = include_anchor;
                arm_cfg.mode = BatchMode::Coupled;
                arm_cfg.k = 0;
                let spec = main_batch_spec(&arm_cfg, &data);
                let name = if include_anchor { "with-anchor" } else { "without-anchor" };
                let (arm, outcome) = run_arm(name, &initial, &arm_cfg, &data, &spec)?;
                pooled.push(pooled_non_anchor(&outcome, &data.anchor));
                arms.push(arm);
            }
        }
        Sweep::KLadder => {
            sweep_name = "k-ladder".to_string();
            let data = prepare_data(cfg)?;
            let (initial, _) = prepare_initial_model(cfg, &data)?;
            for k in 1..=data.train_languages.len() {
                let mut arm_cfg = cfg.clone();
                arm_cfg.mode = BatchMode::Coupled;
                arm_cfg.include_anchor = true;
                arm_cfg.k = k;
                let spec = main_batch_spec(&arm_cfg, &data);
                let (arm, outcome) = run_arm(&format!("k={k}"), &initial, &arm_cfg, &data, &spec)?;
                pooled.push(pooled_non_anchor(&outcome, &data.anchor));
                arms.push(arm);
            }
        }
        Sweep::Noise(rates) => {
            sweep_name = "noise".to_string();
            for &rate in rates {
                let mut arm_cfg = cfg.clone();
                arm_cfg.noise_rate = rate;
                let data = prepare_data(&arm_cfg)?;
                let (initial, _) = prepare_initial_model(&arm_cfg, &data)?;
                let spec = main_batch_spec(&arm_cfg, &data);
                let (arm, outcome) =
                    run_arm(&format!("noise={rate}"), &initial, &arm_cfg, &data, &spec)?;
                pooled.push(pooled_non_anchor(&outcome, &data.anchor));
                arms.push(arm);
            }
        }
    }

    let mut comparisons = Vec::new();
    for i in 1..arms.len() {
        let result = mcnemar_test(&pooled[0], &pooled[i])?;
        comparisons.push(SignificanceRow {
            comparison: format!("{}-vs-{}", arms[0].name, arms[i].name),
            b: result.b,
            c: result.c,
            p_value: result.p_value,
            significant: result.p_value < cfg.mcnemar_alpha,
        });
    }

    let report = AblationReport {
        sweep: sweep_name,
        arms,
        comparisons,
    };
    std::fs::create_dir_all(&cfg.out_dir)?;
    let paths = Artifacts(&cfg.out_dir);
    let json = serde_json::to_vec_pretty(&report).expect("ablation report serializes");
    crate::manifest::write_atomic(&paths.ablation_json(), &json)?;
    crate::manifest::write_atomic(&paths.ablation_text(), report.render_table().as_bytes())?;
    manifest.record_artifact(&paths.ablation_json())?;
    manifest.record_artifact(&paths.ablation_text())?;
    manifest.finish(started, &paths.manifest("ablate"))?;
    Ok(report)
}

/// Per-language accuracy map from an evaluation outcome.
pub fn accuracy_by_language(outcome: &EvalOutcome) -> BTreeMap<LanguageId, f64> {
    outcome
        .records
        .iter()
        .map(|(lang, recs)| {
            let acc = exact_match_accuracy(recs).expect("non-empty records");
            (lang.clone(), acc)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg(dir: &Path) -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.synthetic_topics = 6;
        cfg.synthetic_languages = 3;
        cfg.synthetic_pool = 12;
        cfg.warmup_epochs = 1;
        cfg.epochs = 1;
        cfg.bootstrap_b = 50;
        cfg.out_dir = dir.to_path_buf();
        cfg
    }

    #[test]
    fn anchor_resolution_prefers_request_then_defaults() {
        let langs: Vec<LanguageId> = ["ar", "en", "fr"]
            .iter()
            .map(|c| LanguageId::new(c).unwrap())
            .collect();
        assert_eq!(resolve_anchor(&langs, Some("fr")).unwrap().as_str(), "fr");
        assert_eq!(resolve_anchor(&langs, None).unwrap().as_str(), "en");
        assert!(resolve_anchor(&langs, Some("zz")).is_err());
        let synth: Vec<LanguageId> = ["p0", "p1"]
            .iter()
            .map(|c| LanguageId::new(c).unwrap())
            .collect();
        assert_eq!(resolve_anchor(&synth, None).unwrap().as_str(), "p0");
    }

    #[test]
    fn build_data_writes_corpus_dataset_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        cmd_build_data(&cfg).unwrap();
        let paths = Artifacts(dir.path());
        assert!(paths.corpus().exists());
        assert!(paths.dataset().exists());
        let manifest: RunManifest =
            serde_json::from_slice(&std::fs::read(paths.manifest("build-data")).unwrap()).unwrap();
        assert_eq!(manifest.command, "build-data");
        assert_eq!(manifest.artifacts.len(), 2);
        assert!(crate::manifest::verify_artifacts(&manifest, dir.path())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn build_data_is_bit_reproducible() {
        let dir_a = tempfile::tempdir().unwrap();
        let dir_b = tempfile::tempdir().unwrap();
        cmd_build_data(&small_cfg(dir_a.path())).unwrap();
        cmd_build_data(&small_cfg(dir_b.path())).unwrap();
        for name in ["corpus.jsonl", "dataset.jsonl"] {
            assert_eq!(
                std::fs::read(dir_a.path().join(name)).unwrap(),
                std::fs::read(dir_b.path().join(name)).unwrap(),
                "{name} differs between identical runs"
            );
        }
    }

    #[test]
    fn insufficient_pool_fails_before_writing_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(dir.path());
        cfg.synthetic_pool = 9; // positives need 9 distractors, negatives need 10
        let err = cmd_build_data(&cfg).unwrap_err();
        assert_eq!(err.category(), "dataset");
        assert!(matches!(
            err,
            PipelineError::Dataset(DatasetError::InsufficientDistractors { .. })
        ));
        assert!(!Artifacts(dir.path()).corpus().exists());
        assert!(!Artifacts(dir.path()).dataset().exists());
    }

    #[test]
    fn train_requires_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small_cfg(dir.path());
        let err = cmd_train(&cfg, false).unwrap_err();
        assert_eq!(err.category(), "state");
    }

    #[test]
    fn train_then_evaluate_produces_report() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(dir.path());
        cfg.warmup_epochs = 0;
        cmd_build_data(&cfg).unwrap();
        cmd_train(&cfg, false).unwrap();
        let paths = Artifacts(dir.path());
        assert!(paths.checkpoint().exists());
        assert!(paths.trace().exists());
        let report = cmd_evaluate(&cfg).unwrap();
        assert_eq!(report.anchor, "p0");
        assert_eq!(report.per_language.len(), 3);
        assert!(report.per_language.values().all(|r| r.n > 0));
        assert!(paths.report_json().exists());

        // Resume continues the step count.
        let first_trace = std::fs::read_to_string(paths.trace()).unwrap();
        let first_steps = first_trace.lines().count() - 1;
        cmd_train(&cfg, true).unwrap();
        let resumed = std::fs::read_to_string(paths.trace()).unwrap();
        let last = resumed.lines().last().unwrap();
        let step: usize = last.split(',').next().unwrap().parse().unwrap();
        assert_eq!(step, first_steps * 2);
    }

    #[test]
    fn evaluate_can_restrict_to_held_out_languages() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small_cfg(dir.path());
        cfg.warmup_epochs = 0;
        cfg.held_out_languages = vec!["p2".into()];
        cfg.eval_languages = vec!["p2".into()];
        cmd_build_data(&cfg).unwrap();
        cmd_train(&cfg, false).unwrap();
        let report = cmd_evaluate(&cfg).unwrap();
        // Report carries only the held-out rows plus the anchor.
        let langs: Vec<&str> = report.per_language.keys().map(|s| s.as_str()).collect();
        assert_eq!(langs, vec!["p0", "p2"]);
    }

    #[test]
    fn coupled_and_uncoupled_configs_differ_only_in_mode() {
        let mut coupled = RunConfig::default();
        coupled.set("mode", "coupled").unwrap();
        let mut uncoupled = RunConfig::default();
        uncoupled.set("mode", "uncoupled").unwrap();
        let a = coupled.to_map();
        let b = uncoupled.to_map();
        let diff: Vec<&str> = a
            .iter()
            .filter(|(k, v)| b.get(*k) != Some(*v))
            .map(|(k, _)| k.as_str())
            .collect();
        assert_eq!(diff, vec!["mode"]);
    }
}
