use std::collections::HashSet;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{EvalArgs, LabelArgs, SimulateArgs, TrainArgs};
use crate::config::{RunConfig, StageSeeds};
use crate::error::{Error, Result};
use crate::eval::{evaluate, make_heatmap, noise_sweep_eval_only, render_report, EvalContext, NStepRow};
use crate::labeling::io::{load_cluster_model, read_labeled_file, save_cluster_model, write_labeled_file};
use crate::labeling::{
    assign_labels, build_dataset, cluster_scalings, split_episodes, ClusterModel, LabeledSample, NoiseSpec, WindowMode,
};
use crate::nn::EpochLog;
use crate::numfmt::sig9;
use crate::safety::StaircaseSafetyFunction;
use crate::sim::trace_io::{read_trace_file, write_trace_file};
use crate::sim::{derive_seed, run_campaign, EpisodeTrace, Execution};
use crate::tasks::{train_task, TaskKind, TaskSpec, TrainedPredictor};

pub(super) fn say(out: &mut dyn Write, line: impl AsRef<str>) -> Result<()> {
    writeln!(out, "{}", line.as_ref()).map_err(|e| Error::io("<stdout>", e))
}

pub(super) fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub(super) fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// `model.json` -> `model.log.csv`.
pub(super) fn log_path(predictor: &Path) -> PathBuf {
    let stem = predictor
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    predictor.with_file_name(format!("{stem}.log.csv"))
}

pub(super) fn write_log(path: &Path, log: &[EpochLog]) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(f));
    w.write_record(["epoch", "train_loss", "val_loss"])?;
    for e in log {
        w.write_record([
            e.epoch.to_string(),
            format!("{:e}", e.train_loss),
            format!("{:e}", e.val_loss),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Share of samples at each staircase level.
pub(super) fn level_shares<'a>(
    samples: impl Iterator<Item = &'a crate::sim::Sample>,
    safety: &StaircaseSafetyFunction,
) -> Vec<(f64, f64)> {
    let levels = safety.levels();
    let mut counts = vec![0usize; levels.len()];
    let mut n = 0usize;
    for s in samples {
        let k = levels
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - s.s).abs().total_cmp(&(b.1 - s.s).abs()))
            .map_or(0, |(k, _)| k);
        counts[k] += 1;
        n += 1;
    }
    levels
        .iter()
        .zip(counts)
        .map(|(l, c)| (*l, if n == 0 { 0.0 } else { c as f64 / n as f64 }))
        .collect()
}

#[derive(Serialize)]
pub(super) struct SimulateMeta {
    pub master_seed: u64,
    pub campaign_seed: u64,
    pub episodes: usize,
    pub samples: usize,
    pub clamped_points: usize,
    pub level_shares: Vec<(f64, f64)>,
}

pub(super) fn simulate_to(cfg: &RunConfig, seeds: &StageSeeds, exec: Execution, path: &Path) -> Result<SimulateMeta> {
    let traces = run_campaign(&cfg.scene, cfg.campaign.episodes, seeds.simulate, exec)?;
    write_trace_file(path, &traces)?;
    Ok(SimulateMeta {
        master_seed: seeds.master,
        campaign_seed: seeds.simulate,
        episodes: traces.len(),
        samples: traces.iter().map(|t| t.samples.len()).sum(),
        clamped_points: traces.iter().map(|t| t.clamped_points).sum(),
        level_shares: level_shares(traces.iter().flat_map(|t| &t.samples), &cfg.scene.safety),
    })
}

fn print_simulate(meta: &SimulateMeta, out: &mut dyn Write) -> Result<()> {
    say(out, format!("episodes: {}", meta.episodes))?;
    say(out, format!("samples: {}", meta.samples))?;
    for (level, share) in &meta.level_shares {
        say(out, format!("level {}: share {:.6}", sig9(*level), share))?;
    }
    Ok(())
}

pub(super) fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<()> {
    let mut cfg = args.config.load()?;
    if let Some(n) = args.episodes {
        cfg.campaign.episodes = n;
    }
    cfg.validate()?;
    let seeds = StageSeeds::from_master(args.seed.unwrap_or(cfg.seed));
    let exec = if args.parallel || cfg.campaign.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    let meta = simulate_to(&cfg, &seeds, exec, &args.out)?;
    print_simulate(&meta, out)
}

#[derive(Debug, Serialize)]
pub(super) struct LabelOutcome {
    #[serde(skip)]
    pub samples: Vec<LabeledSample>,
    #[serde(skip)]
    pub cluster: ClusterModel,
    pub split_seed: u64,
    pub train_episodes: Vec<u32>,
    pub test_episodes: Vec<u32>,
}

/// Clusters, labels and splits `traces`, writing the label-stage files into `dir`.
pub(super) fn label_to(
    traces: &[EpisodeTrace],
    eps: f64,
    min_pts: usize,
    train_fraction: f64,
    split_seed: u64,
    dir: &Path,
) -> Result<LabelOutcome> {
    let values: Vec<f64> = traces.iter().flat_map(|t| t.samples.iter().map(|s| s.s)).collect();
    let cluster = cluster_scalings(&values, eps, min_pts)?;
    let samples = assign_labels(traces, &cluster);
    let ids: Vec<u32> = traces.iter().map(|t| t.episode).collect();
    let (train, test) = split_episodes(&ids, train_fraction, split_seed)?;

    create_dir(dir)?;
    save_cluster_model(&dir.join("cluster_model.toml"), &cluster)?;
    write_labeled_file(&dir.join("labeled.csv"), &samples)?;
    let train_set: HashSet<u32> = train.iter().copied().collect();
    let (tr, te): (Vec<LabeledSample>, Vec<LabeledSample>) =
        samples.iter().partition(|s| train_set.contains(&s.sample.episode));
    write_labeled_file(&dir.join("train.csv"), &tr)?;
    write_labeled_file(&dir.join("test.csv"), &te)?;
    let outcome = LabelOutcome {
        samples,
        cluster,
        split_seed,
        train_episodes: train,
        test_episodes: test,
    };
    write_json(&dir.join("split.json"), &outcome)?;
    Ok(outcome)
}

pub(super) fn label(args: &LabelArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.config.load()?;
    let seeds = StageSeeds::from_master(args.seed.unwrap_or(cfg.seed));
    let traces = read_trace_file(&args.trace)?;
    if traces.is_empty() {
        return Err(Error::EmptyDataset(format!("{} has no samples", args.trace.display())));
    }
    let l = &cfg.labeling;
    let eps = args.eps.unwrap_or(l.eps);
    let min_pts = args.min_pts.unwrap_or(l.min_pts);
    let fraction = args.train_fraction.unwrap_or(l.train_fraction);
    let outcome = if traces.len() >= 2 {
        label_to(&traces, eps, min_pts, fraction, seeds.split, &args.out)?
    } else {
        label_single(&traces, eps, min_pts, &args.out)?
    };
    say(out, format!("P = {}", outcome.cluster.p()))?;
    let c: Vec<String> = outcome.cluster.centroids().iter().map(|c| sig9(*c)).collect();
    say(out, format!("centroids: {}", c.join(", ")))?;
    say(
        out,
        format!(
            "train episodes: {}, test episodes: {}",
            outcome.train_episodes.len(),
            outcome.test_episodes.len()
        ),
    )
}

/// A single episode cannot be split; everything is written as training data.
fn label_single(traces: &[EpisodeTrace], eps: f64, min_pts: usize, dir: &Path) -> Result<LabelOutcome> {
    let values: Vec<f64> = traces.iter().flat_map(|t| t.samples.iter().map(|s| s.s)).collect();
    let cluster = cluster_scalings(&values, eps, min_pts)?;
    let samples = assign_labels(traces, &cluster);
    create_dir(dir)?;
    save_cluster_model(&dir.join("cluster_model.toml"), &cluster)?;
    write_labeled_file(&dir.join("labeled.csv"), &samples)?;
    write_labeled_file(&dir.join("train.csv"), &samples)?;
    write_labeled_file(&dir.join("test.csv"), &[])?;
    let outcome = LabelOutcome {
        samples,
        cluster,
        split_seed: 0,
        train_episodes: traces.iter().map(|t| t.episode).collect(),
        test_episodes: Vec::new(),
    };
    write_json(&dir.join("split.json"), &outcome)?;
    Ok(outcome)
}

fn parse_task(name: &str) -> Result<TaskKind> {
    TaskKind::parse(name).ok_or_else(|| {
        let all: Vec<&str> = TaskKind::ALL.iter().map(|k| k.name()).collect();
        Error::Config(format!("unknown task {name:?}; expected one of {}", all.join(", ")))
    })
}

pub(super) fn train(args: &TrainArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.config.load()?;
    let seeds = StageSeeds::from_master(args.seed.unwrap_or(cfg.seed));
    let spec = TaskSpec::new(parse_task(&args.task)?, args.w)?;
    if args.no_goals && spec.kind.window_mode() == WindowMode::OneStep {
        return Err(Error::Config(
            "--no-goals applies to N-step and average tasks only".into(),
        ));
    }
    let mut tc = cfg.training.clone();
    tc.seed = seeds.train_seed(0);
    if let Some(n) = args.max_epochs {
        tc.max_epochs = n;
    }
    if let Some(n) = args.row_stride {
        tc.row_stride = n;
    }
    tc.validate()?;

    let cluster_path = args
        .cluster
        .clone()
        .unwrap_or_else(|| args.labeled.with_file_name("cluster_model.toml"));
    let cluster = load_cluster_model(&cluster_path)?;
    let samples = read_labeled_file(&args.labeled)?;
    let mut ds = build_dataset(&samples, spec.window())?;
    if args.no_goals {
        ds = ds.drop_goals();
    }
    if ds.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no rows left after windowing {} with w = {}",
            args.labeled.display(),
            spec.w
        )));
    }
    let ds = ds.with_human_noise(&NoiseSpec {
        delta: args.delta,
        seed: derive_seed(seeds.noise, 0),
    })?;
    let trained = train_task(spec, &ds, &cluster, &tc)?;
    trained.predictor.save(&args.out)?;
    write_log(&log_path(&args.out), &trained.log)?;
    let best = trained.log[trained.best_epoch - 1];
    say(
        out,
        format!(
            "{}: {} rows, {} epochs, best epoch {} (val loss {:e})",
            spec.kind,
            ds.len(),
            trained.log.len(),
            trained.best_epoch,
            best.val_loss
        ),
    )
}

pub(super) fn eval(args: &EvalArgs, out: &mut dyn Write) -> Result<()> {
    let cfg = args.config.load()?;
    let seeds = StageSeeds::from_master(args.seed.unwrap_or(cfg.seed));
    let predictor = TrainedPredictor::load(&args.predictor)?;
    let samples = read_labeled_file(&args.test)?;
    let mut ds = build_dataset(&samples, predictor.task.window())?;
    if predictor.input_width() == 6 && ds.width == 12 {
        ds = ds.drop_goals();
    }
    predictor.check_dataset(&ds)?;
    let name = args.name.clone().unwrap_or_else(|| {
        args.predictor
            .file_stem()
            .map_or_else(|| "predictor".into(), |s| s.to_string_lossy().into_owned())
    });
    let deltas = args.deltas.clone().unwrap_or_else(|| cfg.labeling.deltas.clone());
    let cell = args.heatmap_cell.unwrap_or(cfg.evaluation.heatmap_cell);
    let ctx = EvalContext {
        safety: cfg.scene.safety.clone(),
        boundary_margin: cfg.evaluation.boundary_margin,
    };

    let sweep = noise_sweep_eval_only(&name, &predictor, &ds, &deltas, seeds.noise, &ctx)?;
    let grid = make_heatmap(&predictor, &ds, cell)?;
    let nstep = if predictor.task.kind.window_mode() == WindowMode::NStep {
        vec![NStepRow {
            predictor: name.clone(),
            w: predictor.task.w,
            tick: cfg.scene.tick,
            input_width: predictor.input_width(),
            report: evaluate(&name, &predictor, &ds, &ctx)?,
        }]
    } else {
        Vec::new()
    };
    render_report(
        &args.out,
        std::slice::from_ref(&sweep),
        &nstep,
        &[],
        &[(format!("heatmap_{name}"), grid)],
    )?;
    for r in &sweep.rows {
        let acc = r.accuracy.map_or_else(String::new, |a| format!(", accuracy {a:.4}"));
        say(
            out,
            format!("delta {}: mse {:e}{acc} ({} rows)", sig9(r.delta), r.mse, r.rows),
        )?;
    }
    Ok(())
}

pub(super) fn predict(path: &Path, input: &str, out: &mut dyn Write) -> Result<()> {
    let predictor = TrainedPredictor::load(path)?;
    let x: Vec<f64> = input
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad input value {v:?}")))
        })
        .collect::<Result<_>>()?;
    if x.len() != predictor.input_width() {
        return Err(Error::Config(format!(
            "predictor expects {} input values, got {}",
            predictor.input_width(),
            x.len()
        )));
    }
    say(out, sig9(predictor.predict_scaling(&x)?))
}
