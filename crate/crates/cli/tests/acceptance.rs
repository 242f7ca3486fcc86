//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero when any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use labgatr_core::model::{
    evaluate, make_toy_dataset, train, LabGatr, ModelConfig, PreparedSample, TaskPreset, ToyKind, TrainOptions,
};
use labgatr_core::verify::{
    algebra_checks, convex_combination_checks, embedding_checks, equivariance_checks, gradient_checks,
    tokenizer_checks, Check, EquivarianceOptions, GradientOptions, TokenizerCheckOptions,
};

struct Verdict {
    passed: bool,
    detail: String,
}

type Criterion = fn() -> Result<Verdict, String>;

fn suite(checks: &[Check], seconds: f64, limit: Option<f64>) -> Verdict {
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{} = {:.3e} (bound {:.0e})", c.name, c.value, c.tolerance))
        .collect();
    let worst = checks.iter().filter(|c| c.tolerance < 1.0).map(|c| c.value / c.tolerance).fold(0.0f64, f64::max);
    let in_time = limit.is_none_or(|l| seconds < l);
    let mut detail = format!("{} checks, worst value/bound {worst:.2e}, {seconds:.1}s", checks.len());
    if let Some(l) = limit {
        detail += &format!(" (limit {l:.0}s)");
    }
    if !failed.is_empty() {
        detail += &format!("; failed: {}", failed.join(", "));
    }
    Verdict { passed: failed.is_empty() && in_time, detail }
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn algebra() -> Result<Verdict, String> {
    let (checks, s) = timed(|| algebra_checks(1000, 0));
    Ok(suite(&checks, s, Some(10.0)))
}

fn table() -> Result<Verdict, String> {
    let (checks, s) = timed(|| embedding_checks(1000, 0));
    Ok(suite(&checks, s, None))
}

fn convex_combinations() -> Result<Verdict, String> {
    let (checks, s) = timed(|| convex_combination_checks(1000, 0));
    Ok(suite(&checks, s, Some(5.0)))
}

fn equivariance() -> Result<Verdict, String> {
    let opts = EquivarianceOptions { motions: 20, blocks: 4, ..Default::default() };
    let (checks, s) = timed(|| equivariance_checks(&opts));
    Ok(suite(&checks.map_err(|e| e.to_string())?, s, Some(120.0)))
}

fn gradients() -> Result<Verdict, String> {
    let opts = GradientOptions { points: 5, ..Default::default() };
    let (checks, s) = timed(|| gradient_checks(&opts));
    Ok(suite(&checks.map_err(|e| e.to_string())?, s, Some(300.0)))
}

fn tokenization() -> Result<Verdict, String> {
    let opts = TokenizerCheckOptions { clouds: 50, max_points: 5000, ..Default::default() };
    let (checks, s) = timed(|| tokenizer_checks(&opts));
    Ok(suite(&checks.map_err(|e| e.to_string())?, s, None))
}

fn prepare(model: &LabGatr, kind: ToyKind, count: usize, seed: u64) -> Result<Vec<PreparedSample>, String> {
    make_toy_dataset(kind, count, seed).iter().map(|s| model.prepare(s).map_err(|e| e.to_string())).collect()
}

/// Mean validation ε (percent) of the best checkpoint.
fn fit(model: &LabGatr, train_set: &[PreparedSample], val_set: &[PreparedSample]) -> Result<f64, String> {
    let store = model.init_params(model.config.seed).map_err(|e| e.to_string())?;
    let outcome = train(model, store, train_set, val_set, &TrainOptions::default()).map_err(|e| e.to_string())?;
    let scores = evaluate(model, &outcome.best, val_set, false).map_err(|e| e.to_string())?;
    let eps: Vec<f64> = scores.iter().map(|s| s.eps.ok_or("vector task without eps")).collect::<Result<_, _>>()?;
    Ok(eps.iter().sum::<f64>() / eps.len() as f64)
}

const DATA_SEED: u64 = 7;

fn volume_learning() -> Result<Verdict, String> {
    let t = Instant::now();
    let data = make_toy_dataset(ToyKind::Volume, 120, DATA_SEED);
    let most_vertices = data.iter().map(|s| s.positions.len()).max().unwrap_or(0);
    let config = ModelConfig { ratio: 0.05, epochs: 200, ..ModelConfig::preset(TaskPreset::VolumeVelocity) };
    let model = LabGatr::new(config.clone()).map_err(|e| e.to_string())?;
    let prepared: Vec<_> =
        data.iter().map(|s| model.prepare(s)).collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let (train_set, val_set) = prepared.split_at(100);
    let val_eps = fit(&model, train_set, val_set)?;

    // Single sample, trained and scored on itself.
    let single = LabGatr::new(ModelConfig { lr: 3e-3, epochs: 2000, ..config }).map_err(|e| e.to_string())?;
    let one = &prepared[..1];
    let overfit_eps = fit(&single, one, one)?;
    let seconds = t.elapsed().as_secs_f64();
    Ok(Verdict {
        passed: most_vertices <= 2000 && val_eps <= 15.0 && overfit_eps <= 2.0 && seconds < 1800.0,
        detail: format!(
            "val eps {val_eps:.2}% (<= 15), single-sample eps {overfit_eps:.2}% (<= 2), \
             max {most_vertices} vertices, {seconds:.0}s (limit 1800s)"
        ),
    })
}

const COMPRESSION_EPOCHS: usize = 100;

fn compression() -> Result<Verdict, String> {
    let t = Instant::now();
    let mut eps = Vec::new();
    for ratio in [0.1, 1.0] {
        let config =
            ModelConfig { ratio, lr: 1e-3, epochs: COMPRESSION_EPOCHS, ..ModelConfig::preset(TaskPreset::SurfaceWss) };
        let model = LabGatr::new(config).map_err(|e| e.to_string())?;
        let prepared = prepare(&model, ToyKind::Surface, 50, DATA_SEED)?;
        let (train_set, val_set) = prepared.split_at(40);
        eps.push(fit(&model, train_set, val_set)?);
    }
    let (compressed, full) = (eps[0], eps[1]);
    Ok(Verdict {
        passed: compressed <= 1.5 * full,
        detail: format!(
            "val eps {compressed:.2}% at ratio 0.1 vs {full:.2}% at ratio 1.0 (factor {:.2}, bound 1.5), {:.0}s",
            compressed / full,
            t.elapsed().as_secs_f64()
        ),
    })
}

fn run_cli(config: &Path, out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_labgatr"))
        .args(["train", "--serial", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .stdout(std::process::Stdio::null())
        .status()
        .map_err(|e| e.to_string())?;
    if status.success() {
        Ok(())
    } else {
        Err(format!("labgatr train exited with {status}"))
    }
}

fn determinism() -> Result<Verdict, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let config = dir.path().join("run.json");
    let text = r#"{
        "preset": "surface-wss",
        "model": { "channels": 4, "heads": 2, "blocks": 2, "epochs": 4, "seed": 11 },
        "dataset": { "toy": { "kind": "surface", "count": 6, "seed": 3 } },
        "val_count": 2,
        "output": "unused"
    }"#;
    std::fs::write(&config, text).map_err(|e| e.to_string())?;
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_cli(&config, &a)?;
    run_cli(&config, &b)?;
    let files = [
        "log.csv",
        "best.ckpt",
        "best.ckpt.adam",
        "best.ckpt.json",
        "last.ckpt",
        "last.ckpt.adam",
        "last.ckpt.json",
        "model_config.json",
        "manifest.json",
    ];
    let mut differing = Vec::new();
    for f in files {
        let read = |d: &Path| std::fs::read(d.join(f)).map_err(|e| format!("{f}: {e}"));
        if read(&a)? != read(&b)? {
            differing.push(f);
        }
    }
    Ok(Verdict {
        passed: differing.is_empty(),
        detail: if differing.is_empty() {
            format!("{} files bit-identical across two serial runs", files.len())
        } else {
            format!("differing: {}", differing.join(", "))
        },
    })
}

fn main() -> ExitCode {
    // libtest flags such as `--nocapture` are accepted and ignored.
    let criteria: [(&str, Criterion); 9] = [
        ("algebra_exactness", algebra),
        ("embedding_roundtrips", table),
        ("convex_combination_extraction", convex_combinations),
        ("equivariance", equivariance),
        ("gradient_correctness", gradients),
        ("tokenization_oracles", tokenization),
        ("volume_learning", volume_learning),
        ("compression_sanity", compression),
        ("serial_determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut all = true;
    for (name, criterion) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let verdict = match catch_unwind(AssertUnwindSafe(criterion)) {
            Ok(Ok(v)) => v,
            Ok(Err(e)) => Verdict { passed: false, detail: format!("error: {e}") },
            Err(_) => Verdict { passed: false, detail: "panicked".into() },
        };
        all &= verdict.passed;
        println!("{} {name}: {}", if verdict.passed { "PASS" } else { "FAIL" }, verdict.detail);
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
