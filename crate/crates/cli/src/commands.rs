use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use dualq_seld::ambisonics::{
    list_samples, max_overlap, read_capture, synthesize_scene, write_capture, SceneSampler,
};
use dualq_seld::metrics::{decode_predictions, Evaluator, FrameEvents, MetricConfig};
use dualq_seld::model::{build, ModelConfig, ModelKind};
use dualq_seld::nn::gradcheck::{run_suite, GradCheckOptions};
use dualq_seld::training::{
    default_normalization, evaluate, fit_with, predict, prepare_example, Checkpoint, Example,
    TrainConfig,
};

use crate::failure::Failure;
use crate::settings::{flat_section, section, Flat, Layers};

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value).map_err(dualq_seld::Error::from)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Failure::validation(format!("{}: {e}", path.display())))
}

/// Prints a report on stdout; a closed pipe is not an error.
fn emit(value: &impl Serialize) -> Result<(), Failure> {
    use std::io::Write;
    let text = serde_json::to_string_pretty(value).map_err(dualq_seld::Error::from)?;
    let _ = writeln!(std::io::stdout().lock(), "{text}");
    Ok(())
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::validation(format!("{}: {e}", dir.display())))
}

fn str_key<'a>(layers: &'a Layers, key: &str, default: &'a str) -> Result<&'a str, Failure> {
    match layers.get(key) {
        None => Ok(default),
        Some(Value::String(s)) => Ok(s),
        Some(v) => Err(Failure::validation(format!(
            "`{key}` must be a string, got {v}"
        ))),
    }
}

/// Model defaults for the requested preset and kind.
fn model_defaults(layers: &Layers) -> Result<Flat, Failure> {
    let preset = str_key(layers, "model.preset", "paper")?;
    let kind: ModelKind = str_key(layers, "model.kind", "dualq")?.parse()?;
    let config = match preset {
        "paper" => ModelConfig::paper(kind),
        "desk" => ModelConfig::desk(kind),
        "quaternion_wide" if kind == ModelKind::Quaternion => ModelConfig::quaternion_wide(),
        "quaternion_wide" => {
            return Err(Failure::validation(
                "preset quaternion_wide requires kind quaternion",
            ));
        }
        other => {
            return Err(Failure::validation(format!(
                "unknown preset `{other}` (paper, desk, quaternion_wide)"
            )));
        }
    };
    let mut flat = flat_section("model", &config);
    flat.insert("model.preset".into(), Value::from(preset));
    Ok(flat)
}

fn model_config(flat: &Flat, layers: &Layers) -> Result<ModelConfig, Failure> {
    let mut model = flat.clone();
    model.remove("model.preset");
    let mut config: ModelConfig = section(&model, "model")?;
    if layers.has("model.n_resblocks") && !layers.has("model.dilations") {
        config.dilations = dualq_seld::model::fibonacci(config.n_resblocks);
    }
    config.validate()?;
    Ok(config)
}

/// Writes the config back into `flat` after derived fields were filled in.
fn echo_model(flat: &mut Flat, config: &ModelConfig) {
    flat.extend(flat_section("model", config));
}

fn synth_defaults() -> Flat {
    let mut flat = flat_section("scene", &SceneSampler::default());
    flat.insert("synth.n_samples".into(), Value::from(10));
    flat.insert("synth.seed".into(), Value::from(0));
    flat
}

pub fn synth(out: &Path, layers: &Layers) -> Result<(), Failure> {
    let flat = layers.apply(synth_defaults())?;
    let sampler: SceneSampler = section(&flat, "scene")?;
    let n = flat["synth.n_samples"]
        .as_u64()
        .ok_or_else(|| Failure::validation("synth.n_samples must be a non-negative integer"))?
        as usize;
    let seed = flat["synth.seed"]
        .as_u64()
        .ok_or_else(|| Failure::validation("synth.seed must be a non-negative integer"))?;
    if n == 0 {
        return Err(Failure::validation("synth.n_samples must be positive"));
    }
    sampler.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut names = Vec::with_capacity(n);
    for i in 0..n {
        let scene_seed: u64 = rng.random();
        let spec = sampler.sample(scene_seed)?;
        debug_assert!(max_overlap(&spec.events) <= sampler.max_overlap);
        let capture = synthesize_scene(&spec, scene_seed)?;
        let name = format!("sample_{i:04}");
        write_capture(&out.join("samples").join(&name), &capture)?;
        names.push(name);
    }
    write_json(
        &out.join("dataset.json"),
        &json!({ "config": flat, "samples": names }),
    )?;
    println!("wrote {n} samples to {}", out.display());
    Ok(())
}

fn train_defaults(layers: &Layers) -> Result<Flat, Failure> {
    let mut flat = model_defaults(layers)?;
    flat.extend(flat_section("train", &TrainConfig::default()));
    flat.extend(flat_section("metric", &MetricConfig::default()));
    // null: decided by the model kind
    flat.insert("features.normalize_6dof".into(), Value::Null);
    // null: one fifth of the samples, at least one
    flat.insert("data.n_val".into(), Value::Null);
    Ok(flat)
}

fn load_dataset(
    root: &Path,
    config: &ModelConfig,
    normalize: bool,
) -> Result<Vec<Example<f32>>, Failure> {
    let dirs = list_samples(root)?;
    if dirs.is_empty() {
        return Err(Failure::validation(format!(
            "{}: no samples found",
            root.display()
        )));
    }
    let mut out = Vec::with_capacity(dirs.len());
    for dir in &dirs {
        let capture = read_capture(dir)?;
        if capture.sample_rate != dualq_seld::ambisonics::SAMPLE_RATE {
            return Err(Failure::validation(format!(
                "{}: sample_rate {} does not match the model's {}",
                dir.display(),
                capture.sample_rate,
                dualq_seld::ambisonics::SAMPLE_RATE
            )));
        }
        let name = dir
            .file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        let ex = prepare_example(&name, &capture, config, normalize)
            .map_err(|e| Failure::validation(format!("{name}: {e}")))?;
        if let Some(first) = out.first().map(|e: &Example<f32>| e.input.shape().to_vec()) {
            if ex.input.shape() != first.as_slice() {
                return Err(Failure::validation(format!(
                    "{name}: feature shape {:?} differs from {:?}",
                    ex.input.shape(),
                    first
                )));
            }
        }
        out.push(ex);
    }
    Ok(out)
}

fn normalization(flat: &Flat, config: &ModelConfig) -> Result<bool, Failure> {
    match &flat["features.normalize_6dof"] {
        Value::Null => Ok(default_normalization(config)),
        Value::Bool(b) => Ok(*b),
        v => Err(Failure::validation(format!(
            "features.normalize_6dof must be a boolean, got {v}"
        ))),
    }
}

pub fn train(data: &Path, out: &Path, layers: &Layers, quiet: bool) -> Result<(), Failure> {
    let mut flat = layers.apply(train_defaults(layers)?)?;
    let model = model_config(&flat, layers)?;
    echo_model(&mut flat, &model);
    let train_cfg: TrainConfig = section(&flat, "train")?;
    train_cfg.validate()?;
    let metric: MetricConfig = section(&flat, "metric")?;
    let normalize = normalization(&flat, &model)?;
    flat.insert("features.normalize_6dof".into(), Value::from(normalize));

    let examples = load_dataset(data, &model, normalize)?;
    let n_val = match &flat["data.n_val"] {
        Value::Null => (examples.len() / 5).max(1),
        v => v.as_u64().ok_or_else(|| {
            Failure::validation(format!(
                "data.n_val must be a non-negative integer, got {v}"
            ))
        })? as usize,
    };
    if n_val == 0 || n_val >= examples.len() {
        return Err(Failure::validation(format!(
            "cannot hold out {n_val} of {} samples for validation",
            examples.len()
        )));
    }
    flat.insert("data.n_val".into(), Value::from(n_val));
    let (train_set, val_set) = examples.split_at(examples.len() - n_val);

    create_dir(out)?;
    let mut net = build::<f32>(&model, train_cfg.seed)?;
    let result = fit_with(&mut net, train_set, val_set, &train_cfg, &metric, |r| {
        if !quiet {
            eprintln!(
                "epoch {:>5}  loss {:.6}  sed {:.6}  doa {:.6}  val LSD {:.4}  CSL {:.4}  G-SELD {:.4}",
                r.epoch, r.train.total, r.train.sed, r.train.doa, r.val.lsd, r.val.csl, r.val.gseld
            );
        }
    })?;
    let history_path = out.join("history.csv");
    fs::write(&history_path, result.history.to_csv())
        .map_err(|e| Failure::validation(format!("{}: {e}", history_path.display())))?;

    let run = json!({ "command": "train", "data": data, "config": flat });
    let mut ckpt = Checkpoint::from_network(&net);
    ckpt.optimizer = Some(result.optimizer);
    ckpt.epoch = result.kept_epoch;
    ckpt.best_score = Some(result.best_score);
    ckpt.metadata = run.clone();
    ckpt.save(&out.join("checkpoint.dqck"))?;

    let train_scores = evaluate(&mut net, train_set, &metric, train_cfg.batch_size)?;
    let report = json!({
        "run": run,
        "epochs_run": result.history.records.len(),
        "best_epoch": result.best_epoch,
        "kept_epoch": result.kept_epoch,
        "best_val_gseld": result.best_score,
        "train_scores": train_scores,
        "train_samples": train_set.iter().map(|e| &e.name).collect::<Vec<_>>(),
        "val_samples": val_set.iter().map(|e| &e.name).collect::<Vec<_>>(),
        "param_count": net.param_count(),
    });
    write_json(&out.join("train_report.json"), &report)?;
    println!(
        "best epoch {} (val G-SELD {:.4}); artifacts in {}",
        result.best_epoch,
        result.best_score,
        out.display()
    );
    Ok(())
}

pub fn eval(
    data: &Path,
    ckpt_path: &Path,
    layers: &Layers,
    oracle: bool,
    out: Option<&Path>,
) -> Result<(), Failure> {
    let flat = layers.apply(flat_section("metric", &MetricConfig::default()))?;
    let metric: MetricConfig = section(&flat, "metric")?;
    let ckpt = Checkpoint::<f32>::load(ckpt_path)?;
    let model = ckpt.config.clone();
    let normalize = match ckpt.metadata.pointer("/config/features.normalize_6dof") {
        Some(Value::Bool(b)) => *b,
        _ => default_normalization(&model),
    };
    let examples = load_dataset(data, &model, normalize)?;
    let mut ev = Evaluator::new(metric);
    if oracle {
        for ex in &examples {
            let refs = FrameEvents::from_target(&ex.target)?;
            ev.add(&refs, &refs)?;
        }
    } else {
        let mut net = ckpt.network()?;
        for (ex, (sed, doa)) in examples.iter().zip(predict(&mut net, &examples, 8)?) {
            let pred = decode_predictions(&sed, &doa, metric.sed_threshold, &ex.frame_times)?;
            ev.add(&pred, &FrameEvents::from_target(&ex.target)?)?;
        }
    }
    let report = json!({
        "command": "eval",
        "data": data,
        "checkpoint": ckpt_path,
        "oracle": oracle,
        "config": flat,
        "model_config": model,
        "features.normalize_6dof": normalize,
        "n_samples": examples.len(),
        "scores": ev.scores(),
    });
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    emit(&report)?;
    Ok(())
}

pub fn params(layers: &Layers, out: Option<&Path>) -> Result<(), Failure> {
    let mut flat = layers.apply(model_defaults(layers)?)?;
    let model = model_config(&flat, layers)?;
    echo_model(&mut flat, &model);
    let net = build::<f32>(&model, 0)?;
    let report = json!({ "command": "params", "config": flat, "description": net.describe() });
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    emit(&report)?;
    Ok(())
}

pub fn gradcheck(layers: &Layers, out: Option<&Path>) -> Result<(), Failure> {
    let d = GradCheckOptions::default();
    let mut defaults = Flat::new();
    defaults.insert("gradcheck.seed".into(), Value::from(0));
    defaults.insert("gradcheck.step".into(), Value::from(d.step));
    defaults.insert("gradcheck.tolerance".into(), Value::from(d.tolerance));
    defaults.insert("gradcheck.max_entries".into(), Value::from(d.max_entries));
    defaults.insert("gradcheck.corrupt".into(), Value::Null);
    let flat = layers.apply(defaults)?;
    let num = |k: &str| {
        flat[k]
            .as_f64()
            .ok_or_else(|| Failure::validation(format!("`{k}` must be a number")))
    };
    let opts = GradCheckOptions {
        step: num("gradcheck.step")?,
        tolerance: num("gradcheck.tolerance")?,
        max_entries: num("gradcheck.max_entries")? as usize,
    };
    let seed = flat["gradcheck.seed"]
        .as_u64()
        .ok_or_else(|| Failure::validation("gradcheck.seed must be a non-negative integer"))?;
    let corrupt = flat["gradcheck.corrupt"].as_str();
    let reports = run_suite(seed, opts, corrupt)?;
    if let Some(label) = corrupt {
        if !reports.iter().any(|r| r.layer == label) {
            return Err(Failure::validation(format!(
                "no gradient-check case named `{label}`"
            )));
        }
    }
    for r in &reports {
        eprintln!(
            "{} {:<24} max rel error {:.3e} over {} entries",
            if r.passed { "PASS" } else { "FAIL" },
            r.layer,
            r.max_rel_error,
            r.checked
        );
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.passed)
        .map(|r| r.layer.as_str())
        .collect();
    let report = json!({ "command": "gradcheck", "config": flat, "passed": failed.is_empty(), "layers": reports });
    if let Some(p) = out {
        write_json(p, &report)?;
    }
    emit(&report)?;
    if failed.is_empty() {
        Ok(())
    } else {
        Err(Failure::numerical(format!(
            "gradient check failed for {}",
            failed.join(", ")
        )))
    }
}
