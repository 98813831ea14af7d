use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use serde::{Deserialize, Serialize};
use serde_json::json;
use spectral_probe::analysis::{
    average_profile, extract_profile, overlap_matrix, write_averaged_profile_csv, write_matrix_csv, write_matrix_svg,
    write_profile_csv, write_profile_svg, SpectralProfile,
};
use spectral_probe::data::{
    gen_synthetic, import_jsonl, load_checkpoint, read_dataset, save_checkpoint, write_dataset, DatasetMeta,
    SyntheticSpec,
};
use spectral_probe::probe::{evaluate, ModelMeta};
use spectral_probe::training::{run_multiseed, RunSpec, TrainConfig, DEFAULT_SEEDS};
use spectral_probe::DEFAULT_FILTER_LEN;

use crate::manifest::{digest, unix_now, Manifest};
use crate::{CmdResult, CompareArgs, EvalArgs, Failure, GenArgs, ImportArgs, ProfileArgs, TrainArgs};

fn create_dir(dir: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn sidecar(path: &Path) -> PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    path.with_file_name(name)
}

fn print_json(value: &impl Serialize) -> anyhow::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

pub fn gen(a: GenArgs, argv: &[String]) -> CmdResult {
    let started = unix_now();
    let extra = a.val_count.unwrap_or(0);
    let spec = SyntheticSpec {
        seq_len: a.n,
        embed_dim: a.e,
        classes: a.classes,
        count: a.count + extra,
        signal_band: a.signal_band,
        noise_band: a.noise_band,
        snr: a.snr,
        kind: a.task_kind,
        task: a.task,
        language: a.language,
    };
    // An unusable spec is a flag problem, not a data problem.
    spec.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    if a.count == 0 || a.val_count == Some(0) {
        return Err(Failure::Usage("--count and --val-count must be positive".into()));
    }
    let dataset = gen_synthetic(&spec, a.seed)?;
    let mut outputs = vec![a.out.clone()];
    match (&a.val_out, extra) {
        (Some(val_out), n) if n > 0 => {
            let (train, val) = dataset.split(a.count)?;
            write_dataset(&train, &a.out)?;
            write_dataset(&val, val_out)?;
            outputs.push(val_out.clone());
        }
        _ => write_dataset(&dataset, &a.out)?,
    }
    let mut manifest = Manifest::new("gen", argv, started);
    manifest.config = json!({ "spec": serde_json::to_value(&spec).unwrap_or_default(), "train_count": a.count, "val_count": extra });
    manifest.seeds = vec![a.seed];
    manifest.outputs = outputs;
    manifest.write(&sidecar(&a.out))?;
    Ok(())
}

/// Optional TOML configuration for `train`. Flags override every field.
#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct TrainFile {
    mode: Option<String>,
    filter_len: Option<usize>,
    seeds: Option<Vec<u64>>,
    train: Option<TrainConfig>,
}

#[derive(Debug, Serialize)]
struct SeedSummary {
    seed: u64,
    accuracy: Option<f64>,
    best_epoch: Option<usize>,
    epochs: Option<usize>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct TrainSummaryOut {
    mode: String,
    seeds: Vec<SeedSummary>,
    mean_accuracy: Option<f64>,
    std_accuracy: Option<f64>,
}

pub fn train(a: TrainArgs, argv: &[String]) -> CmdResult {
    let started = unix_now();
    let file: TrainFile = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).map_err(|e| Failure::Usage(format!("config {}: {e}", path.display())))?
        }
        None => TrainFile::default(),
    };
    let mode = match (a.mode, &file.mode) {
        (Some(m), _) => m,
        (None, Some(s)) => crate::parse_mode(s).map_err(Failure::Usage)?,
        (None, None) => return Err(Failure::Usage("--mode is required (orig, fixed:<band> or auto)".into())),
    };
    let mut config = file.train.clone().unwrap_or_default();
    if let Some(v) = a.lr {
        config.learning_rate = v;
    }
    if let Some(v) = a.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = a.epochs {
        config.max_epochs = v;
    }
    if let Some(v) = a.patience {
        config.early_stop_patience = v;
    }
    config.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let filter_len = a.filter_len.or(file.filter_len).unwrap_or(DEFAULT_FILTER_LEN);
    if filter_len == 0 {
        return Err(Failure::Usage("--filter-len must be positive".into()));
    }
    let seeds = match (a.seed, a.seeds, file.seeds) {
        (Some(s), _, _) => vec![s],
        (None, Some(s), _) | (None, None, Some(s)) => s,
        (None, None, None) => DEFAULT_SEEDS.to_vec(),
    };
    if seeds.is_empty() {
        return Err(Failure::Usage("seed list is empty".into()));
    }

    let train = read_dataset(&a.train)?;
    let val = read_dataset(&a.val)?;
    if train.embed_dim != val.embed_dim || train.classes != val.classes {
        return Err(Failure::Data(anyhow!(
            "training set is {}-dimensional with {} classes but validation set is {}-dimensional with {} classes",
            train.embed_dim,
            train.classes,
            val.embed_dim,
            val.classes
        )));
    }

    let spec = RunSpec {
        mode,
        filter_len,
        config: config.clone(),
        meta: ModelMeta {
            task: train.meta.task.clone(),
            language: train.meta.language.clone(),
        },
    };
    let report = run_multiseed(&spec, &train, &val, &seeds)?;

    create_dir(&a.out)?;
    let mut outputs = Vec::new();
    let mut summaries = Vec::new();
    for run in &report.runs {
        match &run.outcome {
            Ok(res) => {
                let dir = a.out.join(format!("seed-{}", run.seed));
                create_dir(&dir)?;
                let ckpt = dir.join("checkpoint.json");
                save_checkpoint(&res.model, &res.config, Some(&res.report), &ckpt)?;
                let log = dir.join("report.jsonl");
                fs::write(&log, res.report.to_json_lines()).with_context(|| format!("writing {}", log.display()))?;
                outputs.extend([ckpt, log]);
                summaries.push(SeedSummary {
                    seed: run.seed,
                    accuracy: Some(res.accuracy),
                    best_epoch: Some(res.report.best_epoch),
                    epochs: Some(res.report.epochs.len()),
                    error: None,
                });
            }
            Err(msg) => summaries.push(SeedSummary {
                seed: run.seed,
                accuracy: None,
                best_epoch: None,
                epochs: None,
                error: Some(msg.clone()),
            }),
        }
    }
    let summary = TrainSummaryOut {
        mode: mode.to_string(),
        seeds: summaries,
        mean_accuracy: report.mean,
        std_accuracy: report.std_dev,
    };
    let summary_path = a.out.join("summary.json");
    fs::write(&summary_path, serde_json::to_string_pretty(&summary).map_err(anyhow::Error::from)? + "\n")
        .with_context(|| format!("writing {}", summary_path.display()))?;
    outputs.push(summary_path);

    let mut manifest = Manifest::new("train", argv, started);
    manifest.config = json!({ "mode": mode, "filter_len": filter_len, "train": config });
    manifest.seeds = seeds;
    manifest.inputs = vec![digest(&a.train)?, digest(&a.val)?];
    if let Some(path) = &a.config {
        manifest.inputs.push(digest(path)?);
    }
    manifest.outputs = outputs;
    manifest.write(&a.out.join("manifest.json"))?;

    print_json(&summary)?;
    if report.mean.is_none() {
        return Err(Failure::Data(anyhow!("every seed failed")));
    }
    Ok(())
}

pub fn eval(a: EvalArgs) -> CmdResult {
    let ckpt = load_checkpoint(&a.checkpoint)?;
    let data = read_dataset(&a.data)?;
    let metrics = evaluate(&ckpt.model, &data)?;
    print_json(&json!({
        "accuracy": metrics.accuracy,
        "per_class_accuracy": metrics.per_class_accuracy,
        "positions": metrics.positions,
        "loss": metrics.loss,
    }))?;
    Ok(())
}

fn load_profile(path: &Path) -> Result<(SpectralProfile, u64), Failure> {
    let ckpt = load_checkpoint(path)?;
    let profile = extract_profile(&ckpt.model).with_context(|| path.display().to_string())?;
    Ok((profile, ckpt.config.seed))
}

pub fn profile(a: ProfileArgs, argv: &[String]) -> CmdResult {
    let started = unix_now();
    let profiles = a
        .checkpoints
        .iter()
        .map(|p| load_profile(p).map(|(prof, _)| prof))
        .collect::<Result<Vec<_>, _>>()?;
    let avg = average_profile(&profiles)?;
    create_dir(&a.out)?;
    let mut outputs = vec![a.out.join("profile.csv")];
    write_profile_csv(&avg.mean, &outputs[0])?;
    if profiles.len() > 1 {
        let env = a.out.join("envelope.csv");
        write_averaged_profile_csv(&avg, &env)?;
        outputs.push(env);
    }
    if a.svg {
        let svg = a.out.join("profile.svg");
        let envelope = (profiles.len() > 1).then_some((avg.lower.as_slice(), avg.upper.as_slice()));
        write_profile_svg(std::slice::from_ref(&avg.mean), envelope, &svg)?;
        outputs.push(svg);
    }
    let mut manifest = Manifest::new("profile", argv, started);
    manifest.inputs = a.checkpoints.iter().map(|p| digest(p)).collect::<anyhow::Result<_>>()?;
    manifest.outputs = outputs.clone();
    manifest.write(&a.out.join("manifest.json"))?;
    print_json(&json!({
        "label": avg.mean.display_label(),
        "length": avg.mean.len(),
        "checkpoints": profiles.len(),
        "files": outputs,
    }))?;
    Ok(())
}

struct Group {
    label: Option<String>,
    paths: Vec<PathBuf>,
}

fn parse_groups(inputs: &[String]) -> Result<Vec<Group>, Failure> {
    inputs
        .iter()
        .map(|s| {
            let (label, rest) = match s.split_once('=') {
                Some((l, r)) if !l.is_empty() => (Some(l.to_string()), r),
                Some(_) => return Err(Failure::Usage(format!("empty label in '{s}'"))),
                None => (None, s.as_str()),
            };
            let paths: Vec<PathBuf> = rest.split(',').filter(|p| !p.is_empty()).map(PathBuf::from).collect();
            if paths.is_empty() {
                return Err(Failure::Usage(format!("no checkpoint given in '{s}'")));
            }
            Ok(Group { label, paths })
        })
        .collect()
}

pub fn compare(a: CompareArgs, argv: &[String]) -> CmdResult {
    let started = unix_now();
    let groups = parse_groups(&a.inputs)?;
    let mut rows = Vec::new();
    let mut inputs = Vec::new();
    for g in &groups {
        let mut loaded = Vec::new();
        for p in &g.paths {
            loaded.push(load_profile(p)?);
            inputs.push(digest(p)?);
        }
        let name = |p: &SpectralProfile| g.label.clone().unwrap_or_else(|| p.display_label());
        if a.per_seed {
            for (p, seed) in loaded {
                let label = format!("{}@{seed}", name(&p));
                rows.push(SpectralProfile { label, language: String::new(), ..p });
            }
        } else {
            let profiles: Vec<_> = loaded.into_iter().map(|(p, _)| p).collect();
            let avg = average_profile(&profiles)?.mean;
            let label = name(&avg);
            rows.push(SpectralProfile { label, language: String::new(), ..avg });
        }
    }
    let matrix = overlap_matrix(&rows)?;
    create_dir(&a.out)?;
    let mut outputs = vec![a.out.join("overlap.csv"), a.out.join("overlap_raw.csv")];
    write_matrix_csv(&matrix, false, &outputs[0])?;
    write_matrix_csv(&matrix, true, &outputs[1])?;
    if a.svg {
        let svg = a.out.join("overlap.svg");
        write_matrix_svg(&matrix, &svg)?;
        outputs.push(svg);
    }
    let mut manifest = Manifest::new("compare", argv, started);
    manifest.config = json!({ "per_seed": a.per_seed });
    manifest.inputs = inputs;
    manifest.outputs = outputs;
    manifest.write(&a.out.join("manifest.json"))?;
    print_json(&json!({
        "labels": matrix.labels,
        "overlap": matrix.rounded(),
        "raw": matrix.values,
    }))?;
    Ok(())
}

pub fn import(a: ImportArgs, argv: &[String]) -> CmdResult {
    let started = unix_now();
    let meta = DatasetMeta {
        task: a.task,
        language: a.language,
        ..Default::default()
    };
    let dataset = import_jsonl(&a.input, a.classes, a.task_kind, meta)?;
    write_dataset(&dataset, &a.out)?;
    let mut manifest = Manifest::new("import", argv, started);
    manifest.config = json!({ "classes": a.classes, "task_kind": a.task_kind });
    manifest.inputs = vec![digest(&a.input)?];
    manifest.outputs = vec![a.out.clone()];
    manifest.write(&sidecar(&a.out))?;
    Ok(())
}
