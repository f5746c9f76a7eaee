use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use log::info;
use pesanet_core::metrics::{EvalReport, Rollout};
use pesanet_core::model::{load_checkpoint, PeSaNet};
use pesanet_core::pde::{generate_trajectory, read_trajectory, write_atomic, write_trajectory, Trajectory};
use pesanet_core::train::{self, Dataset, TrainOutputs};
use pesanet_core::Error;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::{EvaluateArgs, GenerateArgs, PlotArgs, RolloutArgs, TrainArgs};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
}

/// Every `.pstr` file in `dir`, sorted by name.
pub fn trajectory_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("reading data directory {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pstr"))
        .collect();
    files.sort();
    ensure!(!files.is_empty(), "no .pstr trajectories in {}", dir.display());
    Ok(files)
}

fn load_all(dir: &Path) -> Result<Vec<(PathBuf, Trajectory)>> {
    trajectory_files(dir)?
        .into_iter()
        .map(|p| {
            let t = read_trajectory(&p).with_context(|| format!("reading {}", p.display()))?;
            Ok((p, t))
        })
        .collect()
}

#[derive(Serialize)]
struct ManifestEntry {
    file: String,
    seed: u64,
    snapshots: usize,
    sha256: String,
}

#[derive(Serialize)]
struct Manifest {
    system: String,
    grid: usize,
    dt: f64,
    save_stride: usize,
    files: Vec<ManifestEntry>,
}

pub fn generate(cfg: &mut RunConfig, a: &GenerateArgs, out: Option<PathBuf>) -> Result<()> {
    let s = &mut cfg.system;
    if let Some(v) = a.system {
        if v != s.name {
            s.coefficients = None;
        }
        s.name = v;
    }
    macro_rules! set {
        ($($flag:ident => $field:ident),*) => { $( if let Some(v) = a.$flag { s.$field = v; } )* };
    }
    set!(grid => grid, steps => steps, save_stride => save_stride, trajectories => trajectories);
    if a.dt.is_some() {
        s.dt = a.dt;
    }
    if a.domain.is_some() {
        s.domain_size = a.domain;
    }
    let spec = s.spec()?;
    let out = out.unwrap_or_else(|| cfg.paths.data_dir.clone());
    fs::create_dir_all(&out)?;

    let mut files = Vec::new();
    for i in 0..s.trajectories as u64 {
        let seed = cfg.seed + i;
        let traj = generate_trajectory(&spec, &s.ic, seed, s.steps + 1, s.save_stride)
            .with_context(|| format!("generating trajectory with seed {seed}"))?;
        let name = format!("{}_seed{seed}.pstr", spec.kind().name());
        let path = out.join(&name);
        write_trajectory(&traj, &path)?;
        files.push(ManifestEntry {
            file: name,
            seed,
            snapshots: traj.len(),
            sha256: sha256_hex(&fs::read(&path)?),
        });
        info!("wrote {}", path.display());
    }
    let manifest = Manifest {
        system: spec.kind().name().into(),
        grid: spec.grid(),
        dt: spec.dt(),
        save_stride: s.save_stride,
        files,
    };
    write_json(&out.join("manifest.json"), &manifest)?;
    println!("{}", serde_json::to_string_pretty(&manifest)?);
    Ok(())
}

pub fn train(cfg: &mut RunConfig, a: &TrainArgs, out: Option<PathBuf>) -> Result<()> {
    if a.variant.is_some() {
        cfg.model.variant = a.variant;
    }
    let mut tc = cfg.train_config();
    if let Some(e) = a.epochs {
        tc.epochs = e;
    }
    cfg.train = Some(tc.clone());

    let data_dir = a.data.clone().unwrap_or_else(|| cfg.paths.data_dir.clone());
    let trajs: Vec<Trajectory> = load_all(&data_dir)?.into_iter().map(|(_, t)| t).collect();
    let data = Dataset::from_trajectories(&trajs)?;
    let val = match &a.val {
        Some(dir) => {
            let v: Vec<Trajectory> = load_all(dir)?.into_iter().map(|(_, t)| t).collect();
            Some(Dataset::from_trajectories(&v)?)
        }
        None => None,
    };
    let model_cfg = cfg.model_config(&trajs[0].spec, data.dt());
    let mut model = PeSaNet::new(model_cfg.clone())?;

    let out = out.unwrap_or_else(|| cfg.paths.checkpoint_dir.clone());
    fs::create_dir_all(&out)?;
    write_json(&out.join("run_config.json"), cfg)?;
    write_json(&out.join("model_config.json"), &model_cfg)?;
    let history_path = out.join("history.jsonl");
    let history = train::train(
        &mut model,
        &data,
        &tc,
        TrainOutputs {
            validation: val.as_ref(),
            checkpoint_dir: Some(&out),
            history_path: Some(&history_path),
        },
    )?;
    let final_path = out.join("final.psck");
    let last = history.records.last();
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "variant": model_cfg.variant,
            "trainable_parameters": model.params().trainable_count(),
            "epochs": history.records.len(),
            "final_train_loss": last.and_then(|r| r.train_loss),
            "final_val_rmse": last.and_then(|r| r.val_rmse),
            "checkpoint": final_path,
            "checkpoint_sha256": sha256_hex(&fs::read(&final_path)?),
            "history": history_path,
        }))?
    );
    Ok(())
}

fn rollout_from(model: &PeSaNet, traj: &Trajectory, start: usize, steps: usize, cfg: &RunConfig) -> Result<Rollout> {
    let c = model.config();
    ensure!(
        (traj.snapshot_dt() - c.dt).abs() <= 1e-9 * c.dt,
        "checkpoint steps by {} but the trajectory snapshots are {} apart",
        c.dt,
        traj.snapshot_dt()
    );
    match train::rollout(model, &traj.snapshot(start), steps, cfg.precision) {
        Ok(states) => Ok(Rollout::Complete(states)),
        Err(Error::BlowUp { step }) => Ok(Rollout::BlowUp(step)),
        Err(e) => Err(e.into()),
    }
}

pub fn evaluate(cfg: &RunConfig, a: &EvaluateArgs, out: Option<PathBuf>) -> Result<()> {
    let data_dir = a.data.clone().unwrap_or_else(|| cfg.paths.data_dir.clone());
    let truths = load_all(&data_dir)?;
    let dt = truths[0].1.snapshot_dt();
    ensure!(
        truths.iter().all(|(_, t)| (t.snapshot_dt() - dt).abs() <= 1e-9 * dt),
        "reference trajectories disagree on snapshot spacing"
    );
    let dataset_id = sha256_hex(
        truths
            .iter()
            .map(|(p, _)| fs::read(p).map(|b| sha256_hex(&b)))
            .collect::<std::io::Result<Vec<_>>>()?
            .concat()
            .as_bytes(),
    );
    let truth_fields: Vec<Vec<_>> = truths.iter().map(|(_, t)| t.fields()).collect();

    let (checkpoint_id, rollouts) = match (&a.predictions, &a.checkpoint) {
        (Some(dir), _) => {
            let mut rollouts = Vec::new();
            for (path, truth) in &truths {
                let p = dir.join(path.file_name().expect("listed files have names"));
                let pred = read_trajectory(&p).with_context(|| format!("reading prediction {}", p.display()))?;
                ensure!(
                    pred.len() == truth.len(),
                    "prediction {} has {} snapshots, reference has {}",
                    p.display(),
                    pred.len(),
                    truth.len()
                );
                rollouts.push(Rollout::Complete(pred.fields()));
            }
            (format!("predictions:{}", dir.display()), rollouts)
        }
        (None, Some(ck)) => {
            let model = load_checkpoint(ck).with_context(|| format!("loading checkpoint {}", ck.display()))?;
            let id = sha256_hex(&fs::read(ck)?);
            let rollouts = truths
                .iter()
                .map(|(_, t)| rollout_from(&model, t, 0, t.len() - 1, cfg))
                .collect::<Result<Vec<_>>>()?;
            (id, rollouts)
        }
        (None, None) => bail!("evaluate needs --checkpoint or --predictions"),
    };
    let pairs: Vec<(Rollout, &[_])> = rollouts
        .into_iter()
        .zip(&truth_fields)
        .map(|(r, t)| (r, t.as_slice()))
        .collect();
    let report = EvalReport::build(checkpoint_id, dataset_id, dt, a.threshold, &pairs)?;

    let out = out.unwrap_or_else(|| cfg.paths.report_dir.clone());
    fs::create_dir_all(&out)?;
    write_json(&out.join("report.json"), &report)?;
    write_atomic(&out.join("curves.csv"), report.curves_csv().as_bytes())?;
    println!(
        "{}",
        serde_json::to_string_pretty(&serde_json::json!({
            "rmse": report.rmse,
            "mae": report.mae,
            "hct": report.hct,
            "trajectories": report.trajectories.len(),
            "blow_ups": report.trajectories.iter().filter(|t| t.blow_up_step.is_some()).count(),
            "report": out.join("report.json"),
        }))?
    );
    Ok(())
}

pub fn rollout(cfg: &RunConfig, a: &RolloutArgs, out: Option<PathBuf>) -> Result<()> {
    let model = load_checkpoint(&a.checkpoint).with_context(|| format!("loading checkpoint {}", a.checkpoint.display()))?;
    let input = read_trajectory(&a.input).with_context(|| format!("reading {}", a.input.display()))?;
    ensure!(
        a.start < input.len(),
        "--start {} is past the end of a {}-snapshot trajectory",
        a.start,
        input.len()
    );
    let steps = a.steps.unwrap_or(input.len() - 1 - a.start);
    let states = match rollout_from(&model, &input, a.start, steps, cfg)? {
        Rollout::Complete(s) => s,
        Rollout::BlowUp(step) => bail!("rollout blew up at step {step}"),
    };
    let mut traj = Trajectory::new(input.spec.clone(), input.seed, input.save_stride);
    for s in &states {
        traj.push(s)?;
    }
    let out = out.unwrap_or_else(|| cfg.paths.report_dir.join("rollouts"));
    fs::create_dir_all(&out)?;
    let path = out.join(a.input.file_name().context("input has no file name")?);
    ensure!(
        fs::canonicalize(&path).ok() != fs::canonicalize(&a.input).ok(),
        "refusing to overwrite the input trajectory; choose another --out"
    );
    write_trajectory(&traj, &path)?;
    println!("{}", path.display());
    Ok(())
}

pub fn plot(cfg: &RunConfig, a: &PlotArgs, out: Option<PathBuf>) -> Result<()> {
    ensure!(a.every >= 1, "--every must be at least 1");
    ensure!(a.input.is_some() || a.report.is_some(), "plot needs --input or --report");
    let out = out.unwrap_or_else(|| cfg.paths.report_dir.join("plots"));
    fs::create_dir_all(&out)?;
    let mut written = 0usize;
    if let Some(input) = &a.input {
        let traj = read_trajectory(input).with_context(|| format!("reading {}", input.display()))?;
        let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("trajectory");
        for t in (0..traj.len()).step_by(a.every) {
            let f = traj.snapshot(t);
            for c in 0..f.channels() {
                let base = out.join(format!("{stem}_t{t:05}_c{c}"));
                let (pgm, meta) = crate::plot::heatmap(f.channel(c), f.height(), f.width());
                write_atomic(&base.with_extension("pgm"), &pgm)?;
                write_json(&base.with_extension("json"), &meta)?;
                written += 1;
            }
        }
        if let Some(truth) = &a.truth {
            let truth = read_trajectory(truth).with_context(|| format!("reading {}", truth.display()))?;
            let curve = pesanet_core::metrics::error_curve(&traj.fields(), &truth.fields(), truth.snapshot_dt())?;
            let mut csv = String::from("t,rmse\n");
            for (t, e) in curve {
                csv.push_str(&format!("{t},{e}\n"));
            }
            write_atomic(&out.join(format!("{stem}_error.csv")), csv.as_bytes())?;
        }
    }
    if let Some(report) = &a.report {
        let text = fs::read_to_string(report).with_context(|| format!("reading {}", report.display()))?;
        let report: EvalReport = serde_json::from_str(&text)?;
        ensure!(!report.trajectories.is_empty(), "report has no trajectories");
        write_atomic(&out.join("curves.csv"), report.curves_csv().as_bytes())?;
    }
    println!("{}", serde_json::json!({ "heatmaps": written, "out": out }));
    Ok(())
}
