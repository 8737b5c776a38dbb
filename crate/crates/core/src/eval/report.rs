use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::heatmap::HeatmapGrid;
use super::{EvalReport, NoiseSweep};
use crate::error::{Error, Result};
use crate::numfmt::sig9;

/// One line of the N-step table.
#[derive(Debug, Clone, PartialEq)]
pub struct NStepRow {
    pub predictor: String,
    pub w: usize,
    pub tick: f64,
    pub input_width: usize,
    pub report: EvalReport,
}

fn opt(v: Option<f64>) -> String {
    v.map(sig9).unwrap_or_default()
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn finish(mut w: BufWriter<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_report_csv(path: &Path, rows: &[&EvalReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "predictor",
        "delta",
        "mse",
        "accuracy",
        "boundary_excluded_accuracy",
        "rows",
    ])?;
    for r in rows {
        w.write_record([
            r.predictor.clone(),
            sig9(r.delta),
            sig9(r.mse),
            opt(r.accuracy),
            opt(r.boundary_excluded_accuracy),
            r.rows.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Predictors as rows, one MSE column per noise level plus the average.
fn write_table1(path: &Path, sweeps: &[NoiseSweep]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let deltas: Vec<f64> = sweeps
        .first()
        .map(|s| s.rows.iter().map(|r| r.delta).collect())
        .unwrap_or_default();
    let mut header = vec!["predictor".to_string()];
    header.extend(deltas.iter().map(|d| format!("delta={}", sig9(*d))));
    header.push("avg".into());
    w.write_record(&header)?;
    for s in sweeps {
        if s.rows.iter().map(|r| r.delta).ne(deltas.iter().copied()) {
            return Err(Error::InvalidInput(format!(
                "sweep {} uses different deltas",
                s.predictor
            )));
        }
        let mut rec = vec![s.predictor.clone()];
        rec.extend(s.rows.iter().map(|r| sig9(r.mse)));
        rec.push(sig9(s.average_mse()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn write_table2(path: &Path, rows: &[NStepRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["predictor", "w", "horizon_s", "input_width", "mse", "accuracy", "rows"])?;
    for r in rows {
        w.write_record([
            r.predictor.clone(),
            r.w.to_string(),
            sig9(r.w as f64 * r.tick),
            r.input_width.to_string(),
            sig9(r.report.mse),
            opt(r.report.accuracy),
            r.report.rows.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Serialize)]
struct HeatmapMeta<'a> {
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    ny: usize,
    metric: &'a str,
    rows: usize,
    max_mean_metric: Option<f64>,
}

/// Writes `<stem>.csv`, `<stem>.meta.json` and, unless the grid is empty,
/// a binary graymap `<stem>.pgm` (0 white, max black, empty mid-gray).
pub fn write_heatmap(dir: &Path, stem: &str, grid: &HeatmapGrid) -> Result<Vec<PathBuf>> {
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut w = csv::Writer::from_writer(create(&csv_path)?);
    w.write_record(["cell_x", "cell_y", "count", "mean_metric"])?;
    for iy in 0..grid.ny {
        for ix in 0..grid.nx {
            w.write_record([
                ix.to_string(),
                iy.to_string(),
                grid.count(ix, iy).to_string(),
                grid.mean_metric(ix, iy).map_or_else(|| "empty".to_string(), sig9),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;

    let meta_path = dir.join(format!("{stem}.meta.json"));
    let meta = HeatmapMeta {
        origin: grid.origin,
        cell: grid.cell,
        nx: grid.nx,
        ny: grid.ny,
        metric: &grid.metric,
        rows: grid.total_count(),
        max_mean_metric: grid.max_mean_metric(),
    };
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)? + "\n").map_err(|e| Error::io(&meta_path, e))?;

    let mut files = vec![csv_path, meta_path];
    if grid.total_count() > 0 {
        let pgm_path = dir.join(format!("{stem}.pgm"));
        let max = grid.max_mean_metric().unwrap_or(0.0);
        let mut out = create(&pgm_path)?;
        let mut bytes = format!("P5\n{} {}\n255\n", grid.nx, grid.ny).into_bytes();
        // top image row is the largest y
        for iy in (0..grid.ny).rev() {
            for ix in 0..grid.nx {
                bytes.push(match grid.mean_metric(ix, iy) {
                    None => 128,
                    Some(_) if max <= 0.0 => 255,
                    Some(m) => (255.0 - (255.0 * m / max).round()) as u8,
                });
            }
        }
        out.write_all(&bytes).map_err(|e| Error::io(&pgm_path, e))?;
        finish(out, &pgm_path)?;
        files.push(pgm_path);
    }
    Ok(files)
}

/// Writes `report.csv`, `table1.csv`, `table2.csv` and every heatmap into
/// `dir`, returning the written paths.
pub fn render_report(
    dir: &Path,
    sweeps: &[NoiseSweep],
    nstep: &[NStepRow],
    extra: &[EvalReport],
    heatmaps: &[(String, HeatmapGrid)],
) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::new();

    let mut all: Vec<&EvalReport> = sweeps.iter().flat_map(|s| &s.rows).collect();
    all.extend(nstep.iter().map(|r| &r.report));
    all.extend(extra);
    let p = dir.join("report.csv");
    write_report_csv(&p, &all)?;
    files.push(p);

    let p = dir.join("table1.csv");
    write_table1(&p, sweeps)?;
    files.push(p);

    let p = dir.join("table2.csv");
    write_table2(&p, nstep)?;
    files.push(p);

    for (stem, grid) in heatmaps {
        files.extend(write_heatmap(dir, stem, grid)?);
    }
    Ok(files)
}
