//! CSV ingestion and CSV writers for timelines, averages, eigenvalue and density dumps.

use std::io::{Read, Write};

use nalgebra::DMatrix;

use crate::data::RawDataSource;
use crate::error::{Error, Result};
use crate::estimator::{RunAverage, Timeline};
use crate::model::ModelProfile;

/// One row per variable, one column per sample. Row and column numbers in errors are 1-based
/// and count the header line when present.
pub fn read_source_csv<R: Read>(reader: R, skip_header: bool) -> Result<RawDataSource> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(skip_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let offset = usize::from(skip_header);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let row_no = r + 1 + offset;
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            column: 0,
            message: e.to_string(),
        })?;
        let mut values = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: c + 1,
                message: format!("cannot parse {field:?} as a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: row_no,
                    column: c + 1,
                    message: "non-finite value".into(),
                });
            }
            values.push(v);
        }
        if let Some(first) = rows.first() {
            if values.len() != first.len() {
                return Err(Error::Parse {
                    row: row_no,
                    column: values.len().min(first.len()) + 1,
                    message: format!("expected {} samples, found {}", first.len(), values.len()),
                });
            }
        }
        rows.push(values);
    }
    let n = rows.len();
    let t = rows.first().map_or(0, Vec::len);
    RawDataSource::new(DMatrix::from_fn(n, t, |i, j| rows[i][j]))
}

pub fn write_source_csv<W: Write>(writer: W, source: &RawDataSource) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(writer);
    for row in source.values().row_iter() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// `run,end_index,p_hat,b_hat,divergence`; failed windows have empty estimate fields.
pub fn write_timelines_csv<W: Write>(writer: W, timelines: &[Timeline]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["run", "end_index", "p_hat", "b_hat", "divergence"])?;
    for (run, tl) in timelines.iter().enumerate() {
        for e in &tl.entries {
            let (p, b, d) = match &e.outcome {
                Ok(r) => (r.p_hat.to_string(), r.b_hat.to_string(), r.divergence.to_string()),
                Err(_) => (String::new(), String::new(), String::new()),
            };
            w.write_record([(run + 1).to_string(), e.end_index.to_string(), p, b, d])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `end_index,p_hat,b_hat,divergence,runs` with run means.
pub fn write_average_csv<W: Write>(writer: W, avg: &RunAverage) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["end_index", "p_hat", "b_hat", "divergence", "runs"])?;
    for e in &avg.entries {
        w.write_record([
            e.end_index.to_string(),
            fmt(e.p_mean),
            fmt(e.b_mean),
            fmt(e.divergence_mean),
            e.runs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `run,end_index,` then the window's eigenvalues in ascending order.
pub fn write_eigenvalues_csv<W: Write>(writer: W, timelines: &[Timeline]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .flexible(true)
        .has_headers(false)
        .from_writer(writer);
    for (run, tl) in timelines.iter().enumerate() {
        for e in &tl.entries {
            if let Some(ev) = &e.eigenvalues {
                let mut rec = vec![(run + 1).to_string(), e.end_index.to_string()];
                rec.extend(ev.iter().rev().map(|v| v.to_string()));
                w.write_record(rec)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `run,end_index,p,b,divergence` for every retained surface entry.
pub fn write_surfaces_csv<W: Write>(writer: W, timelines: &[Timeline]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["run", "end_index", "p", "b", "divergence"])?;
    for (run, tl) in timelines.iter().enumerate() {
        for r in tl.results() {
            let Some(s) = &r.divergence_surface else { continue };
            for (pi, p) in s.p_values.iter().enumerate() {
                for (bi, b) in s.b_values.iter().enumerate() {
                    let d = s.values[pi][bi].map(|v| v.to_string()).unwrap_or_default();
                    w.write_record([
                        (run + 1).to_string(),
                        r.end_index.to_string(),
                        p.to_string(),
                        b.to_string(),
                        d,
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `b,c,lambda,rho` for each profile.
pub fn write_profiles_csv<'a, W: Write>(writer: W, profiles: impl IntoIterator<Item = &'a ModelProfile>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["b", "c", "lambda", "rho"])?;
    for p in profiles {
        for (l, r) in p.lambda.iter().zip(&p.rho) {
            w.write_record([
                p.params.b.to_string(),
                p.params.c.to_string(),
                l.to_string(),
                r.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `lambda,rho` for one profile.
pub fn write_profile_csv<W: Write>(writer: W, profile: &ModelProfile) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["lambda", "rho"])?;
    for (l, r) in profile.lambda.iter().zip(&profile.rho) {
        w.write_record([l.to_string(), r.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
