//! Campaign trace CSV: one row per sample.

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::episode::{EpisodeTrace, Sample};
use crate::error::{Error, Result};
use crate::geom::Position3;
use crate::numfmt::sig9;

pub const TRACE_HEADER: [&str; 15] = [
    "episode", "t", "xr_x", "xr_y", "xr_z", "xh_x", "xh_y", "xh_z", "gr_x", "gr_y", "gr_z", "gh_x", "gh_y", "gh_z", "s",
];

pub(crate) fn sample_fields(s: &Sample) -> Vec<String> {
    let mut row = Vec::with_capacity(15);
    row.push(s.episode.to_string());
    row.push(sig9(s.t));
    for p in [s.xr, s.xh, s.gr, s.gh] {
        row.extend(p.to_array().iter().map(|v| sig9(*v)));
    }
    row.push(sig9(s.s));
    row
}

pub fn write_trace<W: Write>(out: W, traces: &[EpisodeTrace]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_HEADER)?;
    for s in traces.iter().flat_map(|t| &t.samples) {
        w.write_record(sample_fields(s))?;
    }
    w.flush().map_err(|e| Error::io("<trace writer>", e))?;
    Ok(())
}

pub fn write_trace_file(path: &Path, traces: &[EpisodeTrace]) -> Result<()> {
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_trace(BufWriter::new(f), traces)
}

fn parse_f64(rec: &csv::StringRecord, i: usize, line: u64) -> std::result::Result<f64, String> {
    let raw = rec.get(i).ok_or_else(|| format!("line {line}: missing column {i}"))?;
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| format!("line {line}: bad number {raw:?}"))?;
    if !v.is_finite() {
        return Err(format!("line {line}: non-finite value"));
    }
    Ok(v)
}

pub(crate) fn parse_sample(rec: &csv::StringRecord, line: u64) -> std::result::Result<Sample, String> {
    let episode: u32 = rec
        .get(0)
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| format!("line {line}: bad episode id"))?;
    let f = |i| parse_f64(rec, i, line);
    let p = |i| -> std::result::Result<Position3, String> { Ok(Position3::new(f(i)?, f(i + 1)?, f(i + 2)?)) };
    let s = f(14)?;
    if !(0.0..=1.0).contains(&s) {
        return Err(format!("line {line}: scaling {s} outside [0, 1]"));
    }
    Ok(Sample {
        episode,
        t: f(1)?,
        xr: p(2)?,
        xh: p(5)?,
        gr: p(8)?,
        gh: p(11)?,
        s,
    })
}

/// Groups samples into episodes; rows of one episode must be contiguous and time-ordered.
pub(crate) fn group_episodes(samples: Vec<Sample>, what: &Path) -> Result<Vec<EpisodeTrace>> {
    let mut traces: Vec<EpisodeTrace> = Vec::new();
    for s in samples {
        match traces.last_mut() {
            Some(tr) if tr.episode == s.episode => {
                let prev = tr.samples.last().expect("non-empty").t;
                if s.t <= prev {
                    return Err(Error::Parse {
                        path: what.to_path_buf(),
                        msg: format!(
                            "episode {}: timestamps not strictly increasing at t = {}",
                            s.episode, s.t
                        ),
                    });
                }
                tr.samples.push(s);
            }
            _ => {
                if traces.iter().any(|t| t.episode == s.episode) {
                    return Err(Error::Parse {
                        path: what.to_path_buf(),
                        msg: format!("episode {} rows are not contiguous", s.episode),
                    });
                }
                traces.push(EpisodeTrace {
                    episode: s.episode,
                    seed: None,
                    samples: vec![s],
                    clamped_points: 0,
                });
            }
        }
    }
    Ok(traces)
}

pub fn read_trace<R: Read>(input: R, what: &Path) -> Result<Vec<EpisodeTrace>> {
    let mut r = csv::Reader::from_reader(input);
    let perr = |msg: String| Error::Parse {
        path: what.to_path_buf(),
        msg,
    };
    let header = r.headers()?.clone();
    if header.len() < TRACE_HEADER.len() || header.iter().zip(TRACE_HEADER).any(|(a, b)| a.trim() != b) {
        return Err(perr(format!(
            "expected header starting with {}",
            TRACE_HEADER.join(",")
        )));
    }
    let mut samples = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        samples.push(parse_sample(&rec, i as u64 + 2).map_err(perr)?);
    }
    group_episodes(samples, what)
}

pub fn read_trace_file(path: &Path) -> Result<Vec<EpisodeTrace>> {
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_trace(std::io::BufReader::new(f), path)
}
