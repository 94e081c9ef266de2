// Scratch experiment probe: sweeps init/warmup/lr and prints per-language
// accuracy after warmup, coupled, and uncoupled arms.

use batchalign::config::RunConfig;
use batchalign::objectives::{train, ObjectiveConfig, OptimizerKind, TrainConfig};
use batchalign::pipeline::{
    accuracy_by_language, evaluate_model, main_batch_spec, prepare_data, TrainFloat,
};
use batchalign::policy::{ArchConfig, PolicyModel};
use batchalign::rng::mix_seed;
use batchalign::sampler::{BatchMode, BatchSpec};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let init_std: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(0.1);
    let warmup_epochs: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(2);
    let lr: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(0.01);
    let use_adam: bool = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(false);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(1);

    let mut cfg = RunConfig::default();
    cfg.learning_rate = lr;
    cfg.warmup_epochs = warmup_epochs;
    cfg.seed_train = seed;
    cfg.bootstrap_b = 50;
    let data = prepare_data(&cfg).unwrap();

    let mut arch = ArchConfig::default();
    arch.embed_std = init_std;
    let mut model = PolicyModel::<TrainFloat>::new(
        arch,
        data.vocab.clone(),
        mix_seed(cfg.seed_train, "init"),
    );
    let objective = ObjectiveConfig::default();
    if warmup_epochs > 0 {
        let spec = BatchSpec {
            mode: BatchMode::Coupled,
            k: 1,
            include_anchor: true,
            anchor: data.anchor.clone(),
            languages: data.train_languages.clone(),
            seed: mix_seed(cfg.seed_train, "warmup"),
        };
        let tc = TrainConfig {
            learning_rate: lr,
            epochs: warmup_epochs,
            seed: spec.seed,
            updates_per_epoch: None,
            optimizer: if use_adam { OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 } } else { OptimizerKind::Sgd },
        };
        train(&mut model, &data.split.train, &spec, &objective, &tc).unwrap();
    }
    let base = accuracy_by_language(&evaluate_model(&model, &data, &cfg).unwrap());
    println!("init={init_std} warmup={warmup_epochs} lr={lr} seed={seed} adam={use_adam}");
    println!("  baseline: {base:?}");
    gap_stats(&model, &data, "base");
    if args.get(6).map(|s| s == "warmuponly").unwrap_or(false) {
        return;
    }

    for mode in ["coupled", "uncoupled"] {
        let mut arm_cfg = cfg.clone();
        arm_cfg.set("mode", mode).unwrap();
        let spec = main_batch_spec(&arm_cfg, &data);
        let mut m = model.clone();
        let tc = TrainConfig {
            learning_rate: lr,
            epochs: 3,
            seed: spec.seed,
            updates_per_epoch: Some(data.split.train.len()),
            optimizer: if use_adam { OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 } } else { OptimizerKind::Sgd },
        };
        let trace = train(&mut m, &data.split.train, &spec, &objective, &tc).unwrap();
        let accs = accuracy_by_language(&evaluate_model(&m, &data, &arm_cfg).unwrap());
        let last_loss = trace.last().unwrap().loss;
        println!("  {mode:<10}: {accs:?} (final loss {last_loss:.3})");
        gap_stats(&m, &data, "test");
        let train_as_test = batchalign::dataset::DatasetSplit {
            train: Vec::new(),
            test: data.split.train.clone(),
            split_seed: 0,
        };
        let mut train_data = batchalign::pipeline::prepared_from_dataset(train_as_test, &arm_cfg).unwrap();
        train_data.anchor = data.anchor.clone();
        gap_stats(&m, &train_data, "train");
    }
}

fn gap_stats(
    model: &PolicyModel<TrainFloat>,
    data: &batchalign::pipeline::PreparedData,
    tag: &str,
) {
    use batchalign::dataset::Label;
    use batchalign::prompting::render_prompt;
    let yes = model.vocab.yes_id();
    let idk = model.vocab.idk_id();
    let mut pos_gaps = Vec::new();
    let mut neg_gaps = Vec::new();
    let mut correct = 0usize;
    let mut total = 0usize;
    for group in &data.split.test {
        for sample in group.members.values() {
            let prompt = model.vocab.encode_prompt(&render_prompt(sample).text).unwrap();
            let s = model.label_log_probs(&prompt, &[yes, idk]).unwrap();
            let gap = s[0] - s[1];
            total += 1;
            match sample.label {
                Label::Positive => {
                    pos_gaps.push(gap);
                    if gap >= 0.0 {
                        correct += 1;
                    }
                }
                Label::Negative => {
                    neg_gaps.push(gap);
                    if gap < 0.0 {
                        correct += 1;
                    }
                }
            }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let std = |v: &[f64]| {
        let m = mean(v);
        (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64).sqrt()
    };
    println!(
        "    [{tag}] acc={:.3} pos_gap={:.6}±{:.6} neg_gap={:.6}±{:.6} (n={total})",
        correct as f64 / total as f64,
        mean(&pos_gaps),
        std(&pos_gaps),
        mean(&neg_gaps),
        std(&neg_gaps)
    );
}
