//! File formats owned by the labeling stage.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::cluster::{ClusterModel, LabeledSample};
use super::dataset::{Dataset, WindowMode, WindowSpec, FEATURE_NAMES};
use crate::error::{Error, Result};
use crate::numfmt::sig9;
use crate::sim::trace_io::{parse_sample, sample_fields, TRACE_HEADER};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Labeled trace: the campaign columns plus a 1-based `cluster` column.
pub fn write_labeled<W: Write>(out: W, samples: &[LabeledSample]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = TRACE_HEADER.to_vec();
    header.push("cluster");
    w.write_record(&header)?;
    for ls in samples {
        let mut row = sample_fields(&ls.sample);
        row.push(ls.cluster_index.to_string());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<labeled writer>", e))?;
    Ok(())
}

pub fn write_labeled_file(path: &Path, samples: &[LabeledSample]) -> Result<()> {
    write_labeled(create(path)?, samples)
}

pub fn read_labeled<R: Read>(input: R, what: &Path) -> Result<Vec<LabeledSample>> {
    let perr = |msg: String| Error::Parse {
        path: what.to_path_buf(),
        msg,
    };
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let ok = header.len() == TRACE_HEADER.len() + 1
        && header.iter().zip(TRACE_HEADER).all(|(a, b)| a.trim() == b)
        && header.get(15).map(str::trim) == Some("cluster");
    if !ok {
        return Err(perr(format!("expected header {},cluster", TRACE_HEADER.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let sample = parse_sample(&rec, line).map_err(perr)?;
        let cluster_index: usize = rec
            .get(15)
            .and_then(|v| v.trim().parse().ok())
            .filter(|c| *c >= 1)
            .ok_or_else(|| perr(format!("line {line}: bad cluster index")))?;
        out.push(LabeledSample { sample, cluster_index });
    }
    Ok(out)
}

pub fn read_labeled_file(path: &Path) -> Result<Vec<LabeledSample>> {
    read_labeled(open(path)?, path)
}

pub fn save_cluster_model(path: &Path, model: &ClusterModel) -> Result<()> {
    let text = toml::to_string(model).map_err(|e| Error::InvalidInput(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load_cluster_model(path: &Path) -> Result<ClusterModel> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: ClusterModel = toml::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })?;
    m.validate()?;
    Ok(m)
}

/// Supervised dataset CSV: `episode,t,<features>,target_s,target_cluster`.
pub fn write_dataset<W: Write>(out: W, ds: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["episode", "t"];
    header.extend(ds.feature_names());
    header.extend(["target_s", "target_cluster"]);
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut row = vec![ds.episode[i].to_string(), sig9(ds.t[i])];
        row.extend(ds.row(i).iter().map(|v| sig9(*v)));
        row.push(format!("{}", ds.target_s[i]));
        row.push(ds.target_cluster[i].map(|c| c.to_string()).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<dataset writer>", e))?;
    Ok(())
}

pub fn write_dataset_file(path: &Path, ds: &Dataset) -> Result<()> {
    write_dataset(create(path)?, ds)
}

/// Reads a supervised dataset. The file does not carry the horizon, so the
/// caller supplies the window; the separation column is recomputed from the
/// observed positions.
pub fn read_dataset<R: Read>(input: R, window: WindowSpec, what: &Path) -> Result<Dataset> {
    let perr = |msg: String| Error::Parse {
        path: what.to_path_buf(),
        msg,
    };
    let mut r = csv::Reader::from_reader(input);
    let header = r.headers()?.clone();
    let width = header
        .len()
        .checked_sub(4)
        .ok_or_else(|| perr("too few columns".into()))?;
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    let mut expect = vec!["episode", "t"];
    expect.extend(&FEATURE_NAMES[..width.min(12)]);
    expect.extend(["target_s", "target_cluster"]);
    if !(width == 6 || width == 12) || names != expect {
        return Err(perr(format!("unexpected dataset header {}", names.join(","))));
    }
    let mut ds = Dataset {
        window,
        width,
        features: Vec::new(),
        target_s: Vec::new(),
        target_cluster: Vec::new(),
        episode: Vec::new(),
        t: Vec::new(),
        separation: Vec::new(),
        skipped_episodes: Vec::new(),
    };
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .and_then(|v| v.trim().parse::<f64>().ok())
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(format!("line {line}: bad number in column {j}")))
        };
        let episode: u32 = rec
            .get(0)
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| perr(format!("line {line}: bad episode")))?;
        ds.episode.push(episode);
        ds.t.push(num(1)?);
        for j in 0..width {
            ds.features.push(num(2 + j)?);
        }
        ds.target_s.push(num(2 + width)?);
        let c = rec.get(3 + width).map(str::trim).unwrap_or("");
        ds.target_cluster.push(if c.is_empty() {
            None
        } else {
            Some(
                c.parse()
                    .map_err(|_| perr(format!("line {line}: bad target_cluster")))?,
            )
        });
        let row = &ds.features[ds.features.len() - width..];
        let sep = if window.mode == WindowMode::OneStep {
            ((row[0] - row[3]).powi(2) + (row[1] - row[4]).powi(2) + (row[2] - row[5]).powi(2)).sqrt()
        } else {
            f64::NAN
        };
        ds.separation.push(sep);
    }
    Ok(ds)
}

pub fn read_dataset_file(path: &Path, window: WindowSpec) -> Result<Dataset> {
    read_dataset(open(path)?, window, path)
}
