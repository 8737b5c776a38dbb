//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use safescale::cli::reproduce;
use safescale::config::RunConfig;
use safescale::eval::{evaluate, make_heatmap, noise_sweep_retrain, EvalContext};
use safescale::labeling::{
    assign_labels, build_dataset, cluster_scalings, dbscan_1d, split_dataset, ClusterModel, Dataset, LabeledSample,
    WindowSpec,
};
use safescale::nn::{gradient_check, GradCheckOptions, LossKind, Matrix, Targets, TrainConfig};
use safescale::sim::{derive_seed, run_campaign, Execution};
use safescale::tasks::{
    build_classification_net, build_mixed_net, build_regression_net, train_task, TaskKind, TaskSpec, TrainedPredictor,
};
use safescale::StaircaseSafetyFunction;

struct Outcome {
    id: u32,
    name: &'static str,
    passed: bool,
    detail: String,
}

fn outcome(id: u32, name: &'static str, passed: bool, detail: String) -> Outcome {
    let o = Outcome {
        id,
        name,
        passed,
        detail,
    };
    println!(
        "{} {:>2} {}: {}",
        if o.passed { "PASS" } else { "FAIL" },
        o.id,
        o.name,
        o.detail
    );
    o
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn neumaier_mean(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut comp, mut n) = (0.0f64, 0.0f64, 0usize);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        n += 1;
    }
    (sum + comp) / n as f64
}

// ---------------------------------------------------------------------------

fn scan_oracle(levels: &[f64], thresholds: &[f64], d: f64) -> f64 {
    for (i, t) in thresholds.iter().enumerate() {
        if d <= *t {
            return levels[i];
        }
    }
    levels[levels.len() - 1]
}

fn staircase_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0usize;
    for _ in 0..100 {
        let k = rng.random_range(1..=8usize);
        let mut levels: Vec<f64> = (0..=k).map(|_| rng.random_range(0.0..=1.0)).collect();
        levels.sort_by(f64::total_cmp);
        levels.dedup();
        let mut thresholds: Vec<f64> = (0..levels.len() - 1).map(|_| rng.random_range(0.05..5.0)).collect();
        thresholds.sort_by(f64::total_cmp);
        thresholds.dedup();
        levels.truncate(thresholds.len() + 1);
        let f = StaircaseSafetyFunction::new(levels.clone(), thresholds.clone()).unwrap();
        for j in 0..100_000 {
            // every twentieth probe sits exactly on a threshold
            let d = if j % 20 == 0 && !thresholds.is_empty() {
                thresholds[j / 20 % thresholds.len()]
            } else {
                rng.random_range(0.0..6.0)
            };
            if f.eval_by_distance(d).unwrap() != scan_oracle(&levels, &thresholds, d) {
                mismatches += 1;
            }
        }
    }
    let t = start.elapsed();
    outcome(
        1,
        "staircase oracle",
        mismatches == 0 && t < Duration::from_secs(5),
        format!(
            "{mismatches} mismatches over 1e7 probes in {:.2} s (limit 5 s)",
            secs(t)
        ),
    )
}

// ---------------------------------------------------------------------------

struct Campaign {
    scalings: Vec<f64>,
    cluster: ClusterModel,
    labeled: Vec<LabeledSample>,
}

fn clustering_recovery(cfg: &RunConfig) -> (Outcome, Campaign) {
    let seeds = cfg.seeds();
    let traces = run_campaign(&cfg.scene, 1000, seeds.simulate, Execution::Sequential).unwrap();
    let start = Instant::now();
    let scalings: Vec<f64> = traces.iter().flat_map(|t| t.samples.iter().map(|x| x.s)).collect();
    let cluster = cluster_scalings(&scalings, cfg.labeling.eps, cfg.labeling.min_pts).unwrap();
    let labeled = assign_labels(&traces, &cluster);
    let t = start.elapsed();
    let expected = [0.0, 0.25, 0.5, 0.75, 1.0];
    let worst = if cluster.p() == 5 {
        cluster
            .centroids()
            .iter()
            .zip(expected)
            .map(|(c, l)| (c - l).abs())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let o = outcome(
        2,
        "clustering recovery",
        cluster.p() == 5 && worst <= 0.02 && t < Duration::from_secs(30),
        format!(
            "P = {}, centroids {:?}, max offset {worst:.2e} (limit 0.02), labeling {:.2} s (limit 30 s)",
            cluster.p(),
            cluster.centroids(),
            secs(t)
        ),
    );
    (
        o,
        Campaign {
            scalings,
            cluster,
            labeled,
        },
    )
}

// ---------------------------------------------------------------------------

fn gradient_fidelity() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut batch = |cols: usize| {
        let data = (0..16 * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Matrix::new(16, cols, data).unwrap()
    };
    let classes: Vec<usize> = (0..16).map(|i| i % 5).collect();
    let values: Vec<f64> = (0..16).map(|i| i as f64 / 15.0).collect();
    let opts = GradCheckOptions {
        tolerance: 1e-4,
        seed: 3,
        ..GradCheckOptions::default()
    };
    let cases = [
        (
            "classification",
            build_classification_net(6, 5, 1).unwrap(),
            batch(6),
            Targets::one_hot(&classes, 5),
            LossKind::CrossEntropy,
        ),
        (
            "regression",
            build_regression_net(12, 2).unwrap(),
            batch(12),
            Targets::Values(values.clone()),
            LossKind::Mse,
        ),
        (
            "mixed",
            build_mixed_net(12, 5, 3).unwrap(),
            batch(12),
            Targets::Values(values),
            LossKind::Mse,
        ),
    ];
    let mut all = true;
    let mut parts = Vec::new();
    for (name, model, x, y, loss) in cases {
        let r = gradient_check(&model, &x, &y, loss, &opts).unwrap();
        all &= r.passed && r.checked > 0;
        parts.push(format!("{name} {:.2e} ({} coords)", r.max_rel_error, r.checked));
    }
    let t = start.elapsed();
    outcome(
        3,
        "gradient fidelity",
        all && t < Duration::from_secs(60),
        format!("{} (limit 1e-4), {:.2} s (limit 60 s)", parts.join(", "), secs(t)),
    )
}

// ---------------------------------------------------------------------------

struct Splits {
    train: HashSet<u32>,
}

impl Splits {
    fn apply(&self, ds: &Dataset) -> (Dataset, Dataset) {
        let train = ds.filter_episodes(&self.train);
        let test = ds.select(|i| !self.train.contains(&ds.episode[i]));
        (train, test)
    }
}

fn budget(cfg: &RunConfig) -> TrainConfig {
    TrainConfig {
        max_epochs: 40,
        patience: Some(10),
        row_stride: 4,
        ..cfg.training.clone()
    }
}

fn timed_train(
    spec: TaskSpec,
    ds: &Dataset,
    cluster: &ClusterModel,
    cfg: &TrainConfig,
) -> (TrainedPredictor, Duration) {
    let start = Instant::now();
    let t = train_task(spec, ds, cluster, cfg).unwrap();
    (t.predictor, start.elapsed())
}

fn one_step_criteria(cfg: &RunConfig, c: &Campaign, splits: &Splits, ctx: &EvalContext) -> Vec<Outcome> {
    let seeds = cfg.seeds();
    let tc = budget(cfg);
    let (train, test) = splits.apply(&build_dataset(&c.labeled, WindowSpec::one_step()).unwrap());
    let deltas = [0.0, 0.02, 0.05];
    let mut results = Vec::new();
    for (k, kind) in [TaskKind::ClassifyOneStep, TaskKind::RegressOneStep]
        .into_iter()
        .enumerate()
    {
        let spec = TaskSpec::new(kind, 0).unwrap();
        let mut tc = tc.clone();
        tc.seed = seeds.train_seed(k as u64);
        let mut times = Vec::new();
        let (sweep, _) = noise_sweep_retrain(
            kind.name(),
            &train,
            &test,
            &deltas,
            derive_seed(seeds.noise, k as u64),
            ctx,
            |_, noisy| {
                let (p, t) = timed_train(spec, noisy, &c.cluster, &tc);
                times.push(t);
                Ok(p)
            },
        )
        .unwrap();
        results.push((kind, sweep, times));
    }

    let (_, cls, cls_t) = &results[0];
    let (_, reg, reg_t) = &results[1];
    let mut out = Vec::new();
    let limit = Duration::from_secs(600);
    out.push(outcome(
        4,
        "one-step learning",
        reg.rows[0].mse <= 2e-3 && cls.rows[0].mse <= 3e-3 && cls_t[0] <= limit && reg_t[0] <= limit,
        format!(
            "regression mse {:.3e} (limit 2e-3, {:.0} s), classification mse {:.3e} (limit 3e-3, {:.0} s)",
            reg.rows[0].mse,
            secs(reg_t[0]),
            cls.rows[0].mse,
            secs(cls_t[0])
        ),
    ));

    let increasing = |s: &safescale::eval::NoiseSweep| s.rows.windows(2).all(|w| w[0].mse < w[1].mse);
    let total: Duration = cls_t.iter().chain(reg_t).sum();
    let fmt = |s: &safescale::eval::NoiseSweep| {
        s.rows
            .iter()
            .map(|r| format!("{:.3e}", r.mse))
            .collect::<Vec<_>>()
            .join(" < ")
    };
    out.push(outcome(
        5,
        "noise trend",
        increasing(cls)
            && increasing(reg)
            && cls_t.iter().sum::<Duration>() <= 3 * limit
            && reg_t.iter().sum::<Duration>() <= 3 * limit,
        format!(
            "classification {}, regression {} (six trainings {:.0} s, limit 30 min per net)",
            fmt(cls),
            fmt(reg),
            secs(total)
        ),
    ));

    let acc = cls.rows[0].boundary_excluded_accuracy.unwrap_or(0.0);
    out.push(outcome(
        6,
        "boundary-excluded accuracy",
        acc >= 0.95,
        format!(
            "{:.4} on {} rows at least 0.05 m from every threshold (limit 0.95)",
            acc, cls.rows[0].boundary_rows
        ),
    ));
    out
}

fn n_step_criterion(cfg: &RunConfig, c: &Campaign, splits: &Splits, ctx: &EvalContext) -> Outcome {
    let seeds = cfg.seeds();
    let mut tc = budget(cfg);
    let (train, test) = splits.apply(&build_dataset(&c.labeled, WindowSpec::n_step(20)).unwrap());
    let mut mse = |kind: TaskKind, idx: u64, train: &Dataset, test: &Dataset| {
        tc.seed = seeds.train_seed(idx);
        let (p, _) = timed_train(TaskSpec::new(kind, 20).unwrap(), train, &c.cluster, &tc);
        evaluate(kind.name(), &p, test, ctx).unwrap().mse
    };
    let cn = mse(TaskKind::ClassifyNStep, 2, &train, &test);
    let rn = mse(TaskKind::RegressNStep, 3, &train, &test);
    let rn6 = mse(TaskKind::RegressNStep, 3, &train.drop_goals(), &test.drop_goals());
    outcome(
        7,
        "n-step at w = 20",
        cn <= 3e-2 && rn <= 3e-2 && rn < rn6,
        format!("classification {cn:.3e}, regression {rn:.3e} (limit 3e-2), goal-free regression {rn6:.3e}"),
    )
}

fn average_criterion(cfg: &RunConfig, c: &Campaign, splits: &Splits, ctx: &EvalContext) -> Outcome {
    let seeds = cfg.seeds();
    let mut tc = budget(cfg);
    let mut passed = true;
    let mut parts = Vec::new();
    for (i, w) in [140usize, 190].into_iter().enumerate() {
        let (train, test) = splits.apply(&build_dataset(&c.labeled, WindowSpec::average(w)).unwrap());
        tc.seed = seeds.train_seed(4 + i as u64);
        let (p, _) = timed_train(
            TaskSpec::new(TaskKind::AverageWindow, w).unwrap(),
            &train,
            &c.cluster,
            &tc,
        );
        let r = evaluate("average", &p, &test, ctx).unwrap();
        let grid = make_heatmap(&p, &test, cfg.evaluation.heatmap_cell).unwrap();
        passed &= r.mse <= 2e-2 && grid.total_count() == test.len();
        parts.push(format!(
            "w = {w}: mse {:.3e}, heatmap {} of {} rows",
            r.mse,
            grid.total_count(),
            test.len()
        ));
    }
    outcome(
        8,
        "average-window learning",
        passed,
        format!("{} (limit 2e-2)", parts.join("; ")),
    )
}

// ---------------------------------------------------------------------------

fn determinism() -> Outcome {
    let path = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.toml");
    let cfg = RunConfig::load(&path).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let sa = reproduce(&cfg, &a).unwrap();
    let sb = reproduce(&cfg, &b).unwrap();
    let sums_a = std::fs::read(a.join("SHA256SUMS")).unwrap();
    let sums_b = std::fs::read(b.join("SHA256SUMS")).unwrap();
    let differing = sa
        .files
        .iter()
        .filter(|f| std::fs::read(a.join(f)).unwrap() != std::fs::read(b.join(f)).unwrap())
        .count();
    outcome(
        9,
        "determinism",
        sums_a == sums_b && sa.files == sb.files && differing == 0,
        format!("{} files, {differing} differ between two runs", sa.files.len()),
    )
}

// ---------------------------------------------------------------------------

fn mean_audit(cfg: &RunConfig, c: &Campaign) -> Outcome {
    let labels = dbscan_1d(&c.scalings, cfg.labeling.eps, cfg.labeling.min_pts);
    let mut worst_centroid = 0.0f64;
    for (j, centroid) in c.cluster.centroids().iter().enumerate() {
        let exact = neumaier_mean(
            c.scalings
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == Some(j))
                .map(|(v, _)| *v),
        );
        worst_centroid = worst_centroid.max((centroid - exact).abs());
    }

    let mut worst_window = 0.0f64;
    let mut checked = 0usize;
    for w in [140usize, 190] {
        let ds = build_dataset(&c.labeled, WindowSpec::average(w)).unwrap();
        let mut row = 0;
        let mut start = 0;
        while start < c.labeled.len() {
            let ep = c.labeled[start].sample.episode;
            let end = start + c.labeled[start..].iter().take_while(|x| x.sample.episode == ep).count();
            let s: Vec<f64> = c.labeled[start..end].iter().map(|x| x.sample.s).collect();
            for i in 0..s.len().saturating_sub(w) {
                let mut direct = 0.0;
                for v in &s[i..=i + w] {
                    direct += v;
                }
                direct /= (w + 1) as f64;
                worst_window = worst_window.max((ds.target_s[row] - direct).abs());
                row += 1;
            }
            start = end;
        }
        worst_window = if row == ds.len() { worst_window } else { f64::INFINITY };
        checked += row;
    }
    outcome(
        10,
        "mean audit",
        worst_centroid <= 1e-12 && worst_window <= 1e-12,
        format!(
            "centroid error {worst_centroid:.1e}, window error {worst_window:.1e} over {checked} targets (limit 1e-12)"
        ),
    )
}

fn main() -> ExitCode {
    let cfg = RunConfig::builtin();
    let ctx = EvalContext {
        safety: cfg.scene.safety.clone(),
        boundary_margin: cfg.evaluation.boundary_margin,
    };
    let mut results = vec![staircase_oracle()];
    let (o, campaign) = clustering_recovery(&cfg);
    results.push(o);
    results.push(gradient_fidelity());

    let one_step = build_dataset(&campaign.labeled, WindowSpec::one_step()).unwrap();
    let (train, _) = split_dataset(&one_step, cfg.labeling.train_fraction, cfg.seeds().split).unwrap();
    let splits = Splits {
        train: train.episodes().into_iter().collect(),
    };
    results.extend(one_step_criteria(&cfg, &campaign, &splits, &ctx));
    results.push(n_step_criterion(&cfg, &campaign, &splits, &ctx));
    results.push(average_criterion(&cfg, &campaign, &splits, &ctx));
    results.push(determinism());
    results.push(mean_audit(&cfg, &campaign));

    results.sort_by_key(|o| o.id);
    let failed: Vec<u32> = results.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    println!(
        "acceptance: {} passed, {} failed{}",
        results.len() - failed.len(),
        failed.len(),
        if failed.is_empty() {
            String::new()
        } else {
            format!(" ({failed:?})")
        }
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
