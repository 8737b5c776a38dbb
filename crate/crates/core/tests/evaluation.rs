use safescale::config::RunConfig;
use safescale::eval::{
    evaluate, make_heatmap, noise_sweep_eval_only, render_report, write_heatmap, EvalContext, NStepRow,
};
use safescale::labeling::{
    assign_labels, build_dataset, cluster_scalings, ClusterModel, Dataset, WindowSpec, XH_X, XH_Y,
};
use safescale::nn::TrainConfig;
use safescale::sim::{run_campaign, Execution};
use safescale::tasks::{train_task, TaskKind, TaskSpec, TrainedPredictor};
use safescale::StaircaseSafetyFunction;

fn ctx() -> EvalContext {
    EvalContext {
        safety: StaircaseSafetyFunction::simulation_default(),
        boundary_margin: 0.05,
    }
}

fn data(episodes: usize, window: WindowSpec) -> (ClusterModel, Dataset) {
    let traces = run_campaign(&RunConfig::builtin().scene, episodes, 23, Execution::Sequential).unwrap();
    let s: Vec<f64> = traces.iter().flat_map(|t| t.samples.iter().map(|x| x.s)).collect();
    let m = cluster_scalings(&s, 0.02, 10).unwrap();
    (m.clone(), build_dataset(&assign_labels(&traces, &m), window).unwrap())
}

fn quick(kind: TaskKind, w: usize, episodes: usize) -> (TrainedPredictor, Dataset) {
    let window = TaskSpec::new(kind, w).unwrap().window();
    let (m, ds) = data(episodes, window);
    let cfg = TrainConfig {
        learning_rate: 1e-3,
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
        batch_size: 128,
        max_epochs: 3,
        patience: None,
        validation_fraction: 0.2,
        row_stride: 2,
        seed: 4,
    };
    let t = train_task(TaskSpec::new(kind, w).unwrap(), &ds, &m, &cfg).unwrap();
    (t.predictor, ds)
}

// Rewrites the targets so that `p` predicts every row exactly.
fn make_perfect(p: &TrainedPredictor, ds: &Dataset) -> Dataset {
    let pred = p.predict_dataset(ds).unwrap();
    let mut out = ds.clone();
    for (i, v) in pred.iter().enumerate() {
        out.target_s[i] = *v;
        if p.task.kind.is_classification() {
            out.target_cluster[i] = Some(p.cluster.nearest_index(*v));
        }
    }
    out
}

#[test]
#[allow(clippy::needless_range_loop)]
fn mse_and_accuracy_match_naive_recomputation() {
    let (p, ds) = quick(TaskKind::ClassifyOneStep, 0, 6);
    let r = evaluate("c", &p, &ds, &ctx()).unwrap();
    let pred = p.predict_dataset(&ds).unwrap();
    let mut sq = 0.0;
    let (mut hits, mut far, mut far_hits) = (0, 0, 0);
    for i in 0..ds.len() {
        sq += (pred[i] - ds.target_s[i]).powi(2);
        let ok = p.cluster.centroids()[ds.target_cluster[i].unwrap() - 1] == pred[i];
        hits += ok as usize;
        let d = ds.separation[i];
        if [1.2, 1.5, 1.9, 2.4].iter().all(|t| (d - t).abs() >= 0.05) {
            far += 1;
            far_hits += ok as usize;
        }
    }
    assert!((r.mse - sq / ds.len() as f64).abs() <= 1e-12);
    assert_eq!(r.accuracy, Some(hits as f64 / ds.len() as f64));
    assert_eq!(r.boundary_rows, far);
    assert_eq!(r.boundary_excluded_accuracy, Some(far_hits as f64 / far as f64));
    assert!(r.mse >= 0.0 && (0.0..=1.0).contains(&r.accuracy.unwrap()));
    assert_eq!(r.rows, ds.len());
}

#[test]
fn evaluate_is_pure() {
    let (p, ds) = quick(TaskKind::RegressOneStep, 0, 4);
    let a = evaluate("r", &p, &ds, &ctx()).unwrap();
    let b = evaluate("r", &p, &ds, &ctx()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.mse.to_bits(), b.mse.to_bits());
    assert_eq!(a.accuracy, None);
}

#[test]
fn perfect_predictors_score_zero_error() {
    for (kind, w) in [
        (TaskKind::ClassifyOneStep, 0),
        (TaskKind::RegressOneStep, 0),
        (TaskKind::AverageWindow, 140),
    ] {
        let (p, ds) = quick(kind, w, 4);
        let perfect = make_perfect(&p, &ds);
        let r = evaluate("p", &p, &perfect, &ctx()).unwrap();
        assert_eq!(r.mse, 0.0);
        let grid = make_heatmap(&p, &perfect, 0.1).unwrap();
        assert_eq!(grid.total_count(), perfect.len());
        for iy in 0..grid.ny {
            for ix in 0..grid.nx {
                if let Some(m) = grid.mean_metric(ix, iy) {
                    assert_eq!(m, 0.0);
                }
            }
        }
        if kind.is_classification() {
            assert_eq!(r.accuracy, Some(1.0));
        }
    }
}

#[test]
fn heatmap_conserves_rows_and_global_mse() {
    let (p, ds) = quick(TaskKind::RegressNStep, 20, 5);
    let grid = make_heatmap(&p, &ds, 0.1).unwrap();
    assert_eq!(grid.total_count(), ds.len());
    let r = evaluate("r", &p, &ds, &ctx()).unwrap();
    assert!((grid.weighted_mean_sq() - r.mse).abs() <= 1e-9);
    // every row lands in the cell that floor arithmetic predicts
    for i in (0..ds.len()).step_by(97) {
        let (x, y) = (ds.row(i)[XH_X], ds.row(i)[XH_Y]);
        let (ix, iy) = grid.cell_index(x, y).unwrap();
        assert_eq!(ix, ((x - grid.origin[0]) / 0.1).floor() as usize);
        assert_eq!(iy, ((y - grid.origin[1]) / 0.1).floor() as usize);
        assert!(grid.count(ix, iy) > 0);
    }
    let k0 = grid.origin[0] / 0.1;
    assert!((k0 - k0.round()).abs() < 1e-9);
}

#[test]
fn zero_delta_sweep_is_plain_evaluation() {
    let (p, ds) = quick(TaskKind::RegressOneStep, 0, 4);
    let plain = evaluate("r", &p, &ds, &ctx()).unwrap();
    let sweep = noise_sweep_eval_only("r", &p, &ds, &[0.0, 0.02, 0.05], 9, &ctx()).unwrap();
    assert_eq!(sweep.rows.len(), 3);
    assert_eq!(sweep.rows[0], plain);
    assert_eq!(sweep.rows[0].mse.to_bits(), plain.mse.to_bits());
    let avg = sweep.rows.iter().map(|r| r.mse).sum::<f64>() / 3.0;
    assert!((sweep.average_mse() - avg).abs() <= 1e-15);
    assert!(noise_sweep_eval_only("r", &p, &ds, &[0.05, 0.0], 9, &ctx()).is_err());
}

#[test]
fn empty_heatmap_writes_header_only_and_no_image() {
    let (p, ds) = quick(TaskKind::RegressOneStep, 0, 3);
    let empty = ds.select(|_| false);
    let grid = make_heatmap(&p, &empty, 0.1).unwrap();
    assert_eq!(grid.total_count(), 0);
    let dir = tempfile::tempdir().unwrap();
    let files = write_heatmap(dir.path(), "h", &grid).unwrap();
    assert_eq!(
        std::fs::read_to_string(dir.path().join("h.csv")).unwrap(),
        "cell_x,cell_y,count,mean_metric\n"
    );
    assert!(!dir.path().join("h.pgm").exists());
    assert!(files.iter().all(|f| f.extension().unwrap() != "pgm"));
    assert!(evaluate("r", &p, &empty, &ctx()).is_err());
}

#[test]
fn report_tables_and_graymap_layout() {
    let (p, ds) = quick(TaskKind::ClassifyOneStep, 0, 4);
    let sweep = noise_sweep_eval_only("classify", &p, &ds, &[0.0, 0.02, 0.05], 1, &ctx()).unwrap();
    let (pn, dsn) = quick(TaskKind::RegressNStep, 20, 4);
    let nstep = NStepRow {
        predictor: "regress_n".into(),
        w: 20,
        tick: 0.1,
        input_width: 12,
        report: evaluate("regress_n", &pn, &dsn, &ctx()).unwrap(),
    };
    let grid = make_heatmap(&pn, &dsn, 0.25).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = render_report(dir.path(), &[sweep], &[nstep], &[], &[("heat".into(), grid.clone())]).unwrap();
    assert_eq!(files.len(), 6);

    let t1 = std::fs::read_to_string(dir.path().join("table1.csv")).unwrap();
    let mut lines = t1.lines();
    assert_eq!(lines.next().unwrap(), "predictor,delta=0,delta=0.02,delta=0.05,avg");
    assert_eq!(lines.next().unwrap().split(',').count(), 5);
    let t2 = std::fs::read_to_string(dir.path().join("table2.csv")).unwrap();
    assert!(t2.lines().nth(1).unwrap().starts_with("regress_n,20,2,12,"));

    let csv = std::fs::read_to_string(dir.path().join("heat.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(rows.len() <= grid.nx * grid.ny);
    let total: usize = rows
        .iter()
        .map(|r| r.split(',').nth(2).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, dsn.len());
    for r in &rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f[2] == "0", f[3] == "empty");
    }

    let pgm = std::fs::read(dir.path().join("heat.pgm")).unwrap();
    let header = format!("P5\n{} {}\n255\n", grid.nx, grid.ny);
    assert!(pgm.starts_with(header.as_bytes()));
    let px = &pgm[header.len()..];
    assert_eq!(px.len(), grid.nx * grid.ny);
    let max = grid.max_mean_metric().unwrap();
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            let v = px[(grid.ny - 1 - iy) * grid.nx + ix];
            match grid.mean_metric(ix, iy) {
                None => assert_eq!(v, 128),
                Some(m) => assert_eq!(v, (255.0 - (255.0 * m / max).round()) as u8),
            }
        }
    }
}
