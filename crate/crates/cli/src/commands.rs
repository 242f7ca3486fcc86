use std::path::{Path, PathBuf};

use labgatr_core::autodiff::{load_checkpoint, save_checkpoint, AdamConfig};
use labgatr_core::mesh::{save_mesh, Cells};
use labgatr_core::model::{
    evaluate, train as fit, LabGatr, ModelConfig, PreparedSample, SampleScore, Task, ToyKind, TrainOptions,
};
use labgatr_core::tokenizer::{build_plan, plan_to_bytes, DEFAULT_EPSILON};
use labgatr_core::verify::{
    algebra_checks, convex_combination_checks, embedding_checks, equivariance_checks, gradient_checks,
    tokenizer_checks, Check, EquivarianceOptions, GradientOptions, TokenizerCheckOptions,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::RunConfig;
use crate::dataset::Dataset;
use crate::manifest::{blob_hash, InputRecord, Manifest};
use crate::{CliError, EvalArgs, Split, TrainArgs};

fn f17(v: f64) -> String {
    format!("{v:.16e}")
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn report(checks: &[Check]) -> bool {
    for c in checks {
        let status = if c.passed() { "PASS" } else { "FAIL" };
        let detail = if c.detail.is_empty() { String::new() } else { format!("  [{}]", c.detail) };
        println!("{status}  {:<44} {:.3e}  (bound {:.0e}){detail}", c.name, c.value, c.tolerance);
    }
    checks.iter().all(Check::passed)
}

#[derive(Serialize)]
struct GenerateConfig {
    kind: ToyKind,
    count: usize,
    seed: u64,
}

pub fn generate(kind: ToyKind, count: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    create_dir(out)?;
    let mut manifest = Manifest::new("generate", seed, true, &GenerateConfig { kind, count, seed });
    for (i, sample) in labgatr_core::model::make_toy_dataset(kind, count, seed).iter().enumerate() {
        let ext = match sample.cells {
            Cells::Triangles(_) => "off",
            Cells::Tetrahedra(_) => "vtk",
        };
        let path = out.join(format!("sample_{i:04}.{ext}"));
        save_mesh(sample, &path).map_err(|e| CliError::Mesh(path.display().to_string(), e))?;
        manifest.outputs.push(file_name(&path));
    }
    manifest.write(out)?;
    println!("wrote {count} {kind:?} samples to {}", out.display());
    Ok(())
}

#[derive(Serialize)]
struct TokenizeConfig {
    ratio: f64,
    k: usize,
    seed: u64,
    epsilon: f64,
}

pub fn tokenize(mesh: &Path, ratio: f64, k: usize, seed: u64, out: &Path) -> Result<(), CliError> {
    let bytes = std::fs::read(mesh).map_err(|e| CliError::io(mesh, e))?;
    let sample = labgatr_core::mesh::load_mesh(mesh).map_err(|e| CliError::Mesh(mesh.display().to_string(), e))?;
    let plan = build_plan(&sample.positions, ratio, k, seed, DEFAULT_EPSILON)?;
    create_dir(out)?;
    let json = serde_json::to_string(&plan).expect("plans serialise");
    write_text(&out.join("plan.json"), &json)?;
    let bin = out.join("plan.bin");
    std::fs::write(&bin, plan_to_bytes(&plan)).map_err(|e| CliError::io(&bin, e))?;

    let sizes = plan.cluster_sizes();
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let mut counts = vec![0usize; largest + 1];
    for s in &sizes {
        counts[*s] += 1;
    }
    let mut w = csv::Writer::from_path(out.join("cluster_histogram.csv"))?;
    w.write_record(["cluster_size", "clusters"])?;
    for (size, &count) in counts.iter().enumerate().filter(|(_, &c)| c > 0) {
        w.write_record([size.to_string(), count.to_string()])?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;

    let mut manifest =
        Manifest::new("tokenize", seed, true, &TokenizeConfig { ratio, k, seed, epsilon: DEFAULT_EPSILON });
    manifest.inputs.push(InputRecord { name: file_name(mesh), sha256: blob_hash(&bytes) });
    manifest.outputs = vec!["plan.json".into(), "plan.bin".into(), "cluster_histogram.csv".into()];
    manifest.write(out)?;
    println!(
        "{} vertices -> {} tokens (cluster sizes {}..{}), plan written to {}",
        plan.n_fine,
        plan.n_coarse(),
        sizes.iter().min().unwrap_or(&0),
        largest,
        out.display()
    );
    Ok(())
}

struct Run {
    config: ModelConfig,
    run: RunConfig,
    out: PathBuf,
    data: Dataset,
}

fn open_run(
    config: &Path,
    seed: Option<u64>,
    ratio: Option<f64>,
    k: Option<usize>,
    epochs: Option<usize>,
    out: Option<&PathBuf>,
) -> Result<Run, CliError> {
    let run = RunConfig::load(config)?;
    let mut cfg = run.model_config();
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(r) = ratio {
        cfg.ratio = r;
    }
    if let Some(k) = k {
        cfg.k = k;
    }
    if let Some(e) = epochs {
        cfg.epochs = e;
    }
    cfg.validate()?;
    let out = out.cloned().unwrap_or_else(|| run.output.clone());
    let data = Dataset::load(&run.dataset)?;
    Ok(Run { config: cfg, run, out, data })
}

fn prepare(model: &LabGatr, run: &Run, serial: bool) -> Result<Vec<PreparedSample>, CliError> {
    let prep = |s| model.prepare(s);
    let prepared: Result<Vec<_>, _> = if serial {
        run.data.samples.iter().map(prep).collect()
    } else {
        run.data.samples.par_iter().map(prep).collect()
    };
    Ok(prepared?)
}

#[derive(Serialize)]
struct TrainRecord<'a> {
    run: &'a RunConfig,
    model: &'a ModelConfig,
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let run = open_run(&args.config, args.seed, args.ratio, args.k, args.epochs, args.out.as_ref())?;
    let cfg = &run.config;
    create_dir(&run.out)?;
    if run.run.verify.equivariance && !verify_equivariance(cfg.blocks, 16, 20, cfg.seed)? {
        return Err(CliError::Config("equivariance checks failed, not training".into()));
    }
    if run.run.verify.gradients && !verify_grad(5, cfg.seed)? {
        return Err(CliError::Config("gradient checks failed, not training".into()));
    }
    let (train_range, val_range) = run.data.split(run.run.val_count)?;
    let model = LabGatr::new(cfg.clone())?;
    let prepared = prepare(&model, &run, args.serial)?;
    let store = model.init_params(cfg.seed)?;
    let out = &run.out;
    let opts = TrainOptions {
        serial: args.serial,
        checkpoint: Some(out.join("best.ckpt")),
        log: Some(out.join("log.csv")),
        timings: args.serial.then(|| out.join("timings.csv")),
    };
    println!(
        "training {} parameters on {} samples ({} validation) for {} epochs",
        model.num_params(),
        train_range.len(),
        val_range.len(),
        cfg.epochs
    );
    let outcome = fit(&model, store, &prepared[train_range], &prepared[val_range], &opts)?;
    let last_lr = cfg.lr_at(cfg.epochs.saturating_sub(1));
    save_checkpoint(&outcome.last, &AdamConfig::default(), last_lr, &out.join("last.ckpt"))?;
    let config_json = serde_json::to_string_pretty(cfg).expect("configs serialise");
    write_text(&out.join("model_config.json"), &(config_json + "\n"))?;

    let mut manifest = Manifest::new("train", cfg.seed, args.serial, &TrainRecord { run: &run.run, model: cfg });
    manifest.inputs = run.data.inputs.clone();
    manifest.outputs = ["log.csv", "model_config.json"].map(String::from).to_vec();
    for stem in ["best.ckpt", "last.ckpt"] {
        manifest.outputs.extend([stem.to_string(), format!("{stem}.adam"), format!("{stem}.json")]);
    }
    if args.serial {
        manifest.outputs.push("timings.csv".into());
    }
    manifest.write(out)?;
    println!(
        "best validation loss {:.6e} at epoch {}; outputs in {}",
        outcome.best_val,
        outcome.best_epoch,
        out.display()
    );
    Ok(())
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let run = open_run(&args.config, args.seed, args.ratio, args.k, None, args.out.as_ref())?;
    let cfg = &run.config;
    let ckpt = args.checkpoint.clone().unwrap_or_else(|| run.out.join("best.ckpt"));
    let (store, _) = load_checkpoint(&ckpt)?;
    let model = LabGatr::new(cfg.clone())?;
    if store.num_params() != model.num_params() {
        return Err(CliError::Config(format!(
            "checkpoint {} holds {} parameters, the configured model has {}",
            ckpt.display(),
            store.num_params(),
            model.num_params()
        )));
    }
    let (train_range, val_range) = run.data.split(run.run.val_count)?;
    let range = match args.split {
        Split::Train => train_range,
        Split::Val => val_range,
        Split::All => 0..run.data.samples.len(),
    };
    let prepared = prepare(&model, &run, args.serial)?;
    let mut scores = evaluate(&model, &store, &prepared[range.clone()], args.serial)?;
    for s in &mut scores {
        s.index += range.start;
    }
    create_dir(&run.out)?;
    let names = &run.data.names[range];
    let mut outputs = vec!["eval.csv".to_string()];
    let summary = write_scores(&run.out, cfg.task, names, &scores, &mut outputs)?;

    let ckpt_bytes = std::fs::read(&ckpt).map_err(|e| CliError::io(&ckpt, e))?;
    let mut manifest = Manifest::new("eval", cfg.seed, args.serial, cfg);
    manifest.inputs = run.data.inputs.clone();
    manifest.inputs.push(InputRecord { name: file_name(&ckpt), sha256: blob_hash(&ckpt_bytes) });
    manifest.outputs = outputs;
    manifest.write(&run.out)?;
    println!("{summary}");
    Ok(())
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Writes `eval.csv` (and the Bland-Altman tables for mesh-level
/// regression); returns a one-line summary.
fn write_scores(
    out: &Path,
    task: Task,
    names: &[String],
    scores: &[SampleScore],
    outputs: &mut Vec<String>,
) -> Result<String, CliError> {
    let mut w = csv::Writer::from_path(out.join("eval.csv"))?;
    let summary = match task {
        Task::VertexVector => {
            w.write_record(["index", "sample", "eps_percent", "l1"])?;
            for (s, name) in scores.iter().zip(names) {
                w.write_record([s.index.to_string(), name.clone(), f17(s.eps.unwrap_or(f64::NAN)), f17(s.l1)])?;
            }
            format!("mean eps {:.4}% over {} samples", mean(scores.iter().filter_map(|s| s.eps)), scores.len())
        }
        Task::VertexScalar => {
            w.write_record(["index", "sample", "mae"])?;
            for (s, name) in scores.iter().zip(names) {
                w.write_record([s.index.to_string(), name.clone(), f17(s.l1)])?;
            }
            format!("mean absolute error {:.6e} over {} samples", mean(scores.iter().map(|s| s.l1)), scores.len())
        }
        Task::MeshScalar => {
            w.write_record(["index", "sample", "prediction", "target", "abs_error"])?;
            let mut pairs = Vec::new();
            for (s, name) in scores.iter().zip(names) {
                let (p, t) = (s.prediction.unwrap_or(f64::NAN), s.target.unwrap_or(f64::NAN));
                w.write_record([s.index.to_string(), name.clone(), f17(p), f17(t), f17((p - t).abs())])?;
                pairs.push((s.index, p, t));
            }
            write_bland_altman(out, &pairs)?;
            outputs.extend(["bland_altman.csv".to_string(), "bland_altman_summary.csv".to_string()]);
            format!(
                "mean absolute error {:.6e} over {} samples",
                mean(pairs.iter().map(|(_, p, t)| (p - t).abs())),
                pairs.len()
            )
        }
        Task::Classification { .. } => {
            w.write_record(["index", "sample", "predicted_class", "target_class", "correct"])?;
            let mut correct = 0;
            for (s, name) in scores.iter().zip(names) {
                let (p, t) = (s.prediction.unwrap_or(f64::NAN), s.target.unwrap_or(f64::NAN));
                correct += usize::from(p == t);
                w.write_record([
                    s.index.to_string(),
                    name.clone(),
                    p.to_string(),
                    t.to_string(),
                    (p == t).to_string(),
                ])?;
            }
            format!("accuracy {correct}/{}", scores.len())
        }
    };
    w.flush().map_err(|e| CliError::io(out, e))?;
    Ok(summary)
}

/// Per-sample mean and difference of prediction and reference, plus the
/// bias and 95% limits of agreement.
fn write_bland_altman(out: &Path, pairs: &[(usize, f64, f64)]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(out.join("bland_altman.csv"))?;
    w.write_record(["index", "mean", "difference"])?;
    let diffs: Vec<f64> = pairs.iter().map(|(_, p, t)| p - t).collect();
    for ((i, p, t), d) in pairs.iter().zip(&diffs) {
        w.write_record([i.to_string(), f17(0.5 * (p + t)), f17(*d)])?;
    }
    w.flush().map_err(|e| CliError::io(out, e))?;
    let bias = mean(diffs.iter().copied());
    let sd = if diffs.len() > 1 {
        (diffs.iter().map(|d| (d - bias).powi(2)).sum::<f64>() / (diffs.len() - 1) as f64).sqrt()
    } else {
        0.0
    };
    let mut s = csv::Writer::from_path(out.join("bland_altman_summary.csv"))?;
    s.write_record(["bias", "sd", "lower_limit", "upper_limit"])?;
    s.write_record([f17(bias), f17(sd), f17(bias - 1.96 * sd), f17(bias + 1.96 * sd)])?;
    s.flush().map_err(|e| CliError::io(out, e))?;
    Ok(())
}

pub fn verify_equivariance(blocks: usize, tokens: usize, motions: usize, seed: u64) -> Result<bool, CliError> {
    let opts = EquivarianceOptions { blocks, tokens, motions, seed, ..Default::default() };
    Ok(report(&equivariance_checks(&opts)?))
}

pub fn verify_grad(points: usize, seed: u64) -> Result<bool, CliError> {
    let opts = GradientOptions { points, seed, ..Default::default() };
    Ok(report(&gradient_checks(&opts)?))
}

pub fn verify_tokens(clouds: usize, max_points: usize, seed: u64) -> Result<bool, CliError> {
    let opts = TokenizerCheckOptions { clouds, max_points, seed, ..Default::default() };
    Ok(report(&tokenizer_checks(&opts)?))
}

pub fn selftest(seed: u64) -> bool {
    let mut checks = algebra_checks(1000, seed);
    checks.extend(embedding_checks(1000, seed));
    checks.extend(convex_combination_checks(1000, seed));
    report(&checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bland_altman_limits() {
        let dir = tempfile::tempdir().unwrap();
        write_bland_altman(dir.path(), &[(0, 1.0, 0.0), (1, 3.0, 2.0), (2, 2.0, 2.0)]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("bland_altman_summary.csv")).unwrap();
        let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
        assert!((row[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((row[1] - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
