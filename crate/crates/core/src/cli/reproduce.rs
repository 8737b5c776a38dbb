//! End-to-end pipeline behind `safescale reproduce`.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::commands::{create_dir, label_to, log_path, simulate_to, write_json, write_log, LabelOutcome};
use crate::config::{RunConfig, StageSeeds, TaskEntry};
use crate::error::{Error, Result};
use crate::eval::{
    evaluate, make_heatmap, noise_sweep_eval_only, noise_sweep_retrain, render_report, EvalContext, EvalReport,
    HeatmapGrid, NStepRow, NoiseSweep, SweepMode,
};
use crate::labeling::{build_dataset, ClusterModel, Dataset, WindowMode};
use crate::numfmt::sig9;
use crate::sim::trace_io::read_trace_file;
use crate::sim::{derive_seed, Execution};
use crate::tasks::{train_task, TaskSpec, TrainedPredictor};

#[derive(Debug, Default)]
pub struct ReproduceSummary {
    /// Every written file, relative to the output directory, sorted.
    pub files: Vec<PathBuf>,
    pub sweeps: Vec<NoiseSweep>,
    pub nstep: Vec<NStepRow>,
    pub extra: Vec<EvalReport>,
    pub heatmaps: Vec<(String, HeatmapGrid)>,
}

struct TaskRunner<'a> {
    cfg: &'a RunConfig,
    seeds: StageSeeds,
    ctx: EvalContext,
    tasks_run: u64,
}

impl TaskRunner<'_> {
    fn train_one(
        &self,
        spec: TaskSpec,
        ds: &Dataset,
        cluster: &ClusterModel,
        seed: u64,
        path: &Path,
    ) -> Result<TrainedPredictor> {
        let mut tc = self.cfg.training.clone();
        tc.seed = seed;
        let trained = train_task(spec, ds, cluster, &tc)?;
        trained.predictor.save(path)?;
        write_log(&log_path(path), &trained.log)?;
        Ok(trained.predictor)
    }

    fn run(
        &mut self,
        entries: &[&TaskEntry],
        label: &LabelOutcome,
        train_dir: &Path,
        prefix: &str,
        with_sweeps: bool,
        summary: &mut ReproduceSummary,
    ) -> Result<()> {
        create_dir(train_dir)?;
        let train_eps: HashSet<u32> = label.train_episodes.iter().copied().collect();
        for (idx, entry) in entries.iter().enumerate() {
            let stage = format!("train {prefix}{}", entry.name);
            self.run_task(entry, idx, label, &train_eps, train_dir, prefix, with_sweeps, summary)
                .map_err(|e| e.in_stage(stage))?;
        }
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn run_task(
        &mut self,
        entry: &TaskEntry,
        idx: usize,
        label: &LabelOutcome,
        train_eps: &HashSet<u32>,
        train_dir: &Path,
        prefix: &str,
        with_sweeps: bool,
        summary: &mut ReproduceSummary,
    ) -> Result<()> {
        let spec = entry.spec()?;
        let name = format!("{prefix}{}", entry.name);
        let all = build_dataset(&label.samples, spec.window())?;
        let train = all.filter_episodes(train_eps);
        let test = all.select(|i| !train_eps.contains(&all.episode[i]));
        if train.is_empty() || test.is_empty() {
            return Err(Error::EmptyDataset(format!(
                "{name}: empty train or test split after windowing"
            )));
        }
        let cluster = &label.cluster;
        let cfg = self.cfg;
        let deltas = &cfg.labeling.deltas;
        let noise_seed = derive_seed(self.seeds.noise, idx as u64);
        // every model of one task shares its initialization and batch order
        let seed = self.seeds.train_seed(self.tasks_run);
        self.tasks_run += 1;

        let predictor = if entry.sweep && with_sweeps {
            match cfg.evaluation.sweep_mode {
                SweepMode::Retrain => {
                    let (sweep, mut models) =
                        noise_sweep_retrain(&name, &train, &test, deltas, noise_seed, &self.ctx, |delta, noisy| {
                            let path = train_dir.join(format!("{}_delta{}.json", entry.name, sig9(delta)));
                            self.train_one(spec, noisy, cluster, seed, &path)
                        })?;
                    summary.sweeps.push(sweep);
                    models.swap_remove(0)
                }
                SweepMode::EvalOnly => {
                    let p = self.train_one(
                        spec,
                        &train,
                        cluster,
                        seed,
                        &train_dir.join(format!("{}.json", entry.name)),
                    )?;
                    summary
                        .sweeps
                        .push(noise_sweep_eval_only(&name, &p, &test, deltas, noise_seed, &self.ctx)?);
                    p
                }
            }
        } else {
            let p = self.train_one(
                spec,
                &train,
                cluster,
                seed,
                &train_dir.join(format!("{}.json", entry.name)),
            )?;
            let report = evaluate(&name, &p, &test, &self.ctx)?;
            self.record(spec, &name, p.input_width(), report, summary);
            p
        };

        if entry.goal_ablation {
            let ab_name = format!("{name}_no_goals");
            let (tr, te) = (train.drop_goals(), test.drop_goals());
            let p = self.train_one(
                spec,
                &tr,
                cluster,
                seed,
                &train_dir.join(format!("{}_no_goals.json", entry.name)),
            )?;
            let report = evaluate(&ab_name, &p, &te, &self.ctx)?;
            self.record(spec, &ab_name, p.input_width(), report, summary);
        }

        if entry.heatmap {
            let grid = make_heatmap(&predictor, &test, self.cfg.evaluation.heatmap_cell)?;
            summary.heatmaps.push((format!("heatmap_{name}"), grid));
        }
        Ok(())
    }

    fn record(
        &self,
        spec: TaskSpec,
        name: &str,
        input_width: usize,
        report: EvalReport,
        summary: &mut ReproduceSummary,
    ) {
        if spec.kind.window_mode() == WindowMode::NStep {
            summary.nstep.push(NStepRow {
                predictor: name.to_string(),
                w: spec.w,
                tick: self.cfg.scene.tick,
                input_width,
                report,
            });
        } else {
            summary.extra.push(report);
        }
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Simulate, label, train every configured task, evaluate and render the
/// report tree under `dir`. Files of completed stages stay in place when a
/// later stage fails.
pub fn reproduce(cfg: &RunConfig, dir: &Path) -> Result<ReproduceSummary> {
    cfg.validate()?;
    let seeds = cfg.seeds();
    create_dir(dir)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml()?).map_err(|e| Error::io(dir.join("config.toml"), e))?;
    write_json(&dir.join("seeds.json"), &seeds)?;

    let exec = if cfg.campaign.parallel {
        Execution::Parallel
    } else {
        Execution::Sequential
    };
    let sim_dir = dir.join("simulate");
    let traces = stage(
        "simulate",
        (|| {
            create_dir(&sim_dir)?;
            let trace_path = sim_dir.join("trace.csv");
            let meta = simulate_to(cfg, &seeds, exec, &trace_path)?;
            write_json(&sim_dir.join("summary.json"), &meta)?;
            read_trace_file(&trace_path)
        })(),
    )?;

    let l = &cfg.labeling;
    let label = stage(
        "label",
        label_to(
            &traces,
            l.eps,
            l.min_pts,
            l.train_fraction,
            seeds.split,
            &dir.join("label"),
        ),
    )?;

    let mut summary = ReproduceSummary::default();
    let mut runner = TaskRunner {
        cfg,
        seeds,
        ctx: EvalContext {
            safety: cfg.scene.safety.clone(),
            boundary_margin: cfg.evaluation.boundary_margin,
        },
        tasks_run: 0,
    };
    let entries: Vec<&TaskEntry> = cfg.tasks.iter().collect();
    runner.run(&entries, &label, &dir.join("train"), "", true, &mut summary)?;

    if let Some(imp) = &cfg.import {
        let imp_dir = dir.join("import");
        let traces = stage("import", read_trace_file(&imp.path))?;
        let label = stage(
            "import",
            label_to(
                &traces,
                l.eps,
                l.min_pts,
                l.train_fraction,
                derive_seed(seeds.split, 1),
                &imp_dir.join("label"),
            ),
        )?;
        let heat: Vec<&TaskEntry> = cfg.tasks.iter().filter(|t| t.heatmap).collect();
        runner.run(
            &heat,
            &label,
            &imp_dir.join("train"),
            &format!("{}_", imp.name),
            false,
            &mut summary,
        )?;
    }

    stage(
        "report",
        render_report(
            &dir.join("report"),
            &summary.sweeps,
            &summary.nstep,
            &summary.extra,
            &summary.heatmaps,
        ),
    )?;

    summary.files = stage("checksums", write_checksums(dir))?;
    Ok(summary)
}

fn collect_files(root: &Path, rel: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let here = root.join(rel);
    let rd = std::fs::read_dir(&here).map_err(|e| Error::io(&here, e))?;
    for entry in rd {
        let entry = entry.map_err(|e| Error::io(&here, e))?;
        let rel_path = rel.join(entry.file_name());
        let ft = entry.file_type().map_err(|e| Error::io(entry.path(), e))?;
        if ft.is_dir() {
            collect_files(root, &rel_path, out)?;
        } else {
            out.push(rel_path);
        }
    }
    Ok(())
}

/// Writes `SHA256SUMS` for every file under `dir` and returns the list.
pub fn write_checksums(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    collect_files(dir, Path::new(""), &mut files)?;
    files.retain(|f| f != Path::new("SHA256SUMS"));
    files.sort();
    let mut text = String::new();
    for f in &files {
        let bytes = std::fs::read(dir.join(f)).map_err(|e| Error::io(dir.join(f), e))?;
        let rel = f.to_string_lossy().replace('\\', "/");
        text.push_str(&format!("{}  {rel}\n", hex::encode(Sha256::digest(&bytes))));
    }
    std::fs::write(dir.join("SHA256SUMS"), text).map_err(|e| Error::io(dir.join("SHA256SUMS"), e))?;
    Ok(files)
}
