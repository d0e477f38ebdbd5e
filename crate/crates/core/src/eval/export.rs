use std::path::Path;

use super::{AlignmentMetrics, TrajectoryExport};
use crate::data::io::{csv_error, open_csv, parse_f64, write_csv};
use crate::error::{Error, Result};

const METRICS_HEADER: [&str; 5] = ["patient_id", "dim", "delta_rs", "delta_ode", "above_diagonal"];

/// One row per patient and latent dimension.
pub fn write_metrics_csv(metrics: &[AlignmentMetrics], path: &Path) -> Result<()> {
    let header: Vec<String> = METRICS_HEADER.iter().map(|s| s.to_string()).collect();
    let rows = metrics.iter().flat_map(|m| {
        (0..m.delta_rs.len()).map(move |j| {
            vec![
                m.patient_id.clone(),
                j.to_string(),
                m.delta_rs[j].to_string(),
                m.delta_ode[j].to_string(),
                m.above_diagonal[j].to_string(),
            ]
        })
    });
    write_csv(path, &header, rows)
}

/// Inverse of [`write_metrics_csv`]; rows of a patient must be contiguous
/// and ordered by dimension.
pub fn read_metrics_csv(path: &Path) -> Result<Vec<AlignmentMetrics>> {
    let mut reader = open_csv(path)?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(METRICS_HEADER) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header {}", METRICS_HEADER.join(",")),
        });
    }
    let mut out: Vec<AlignmentMetrics> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let bad = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let id = &record[0];
        let dim: usize = record[1].parse().map_err(|_| bad(format!("bad dimension `{}`", &record[1])))?;
        let rs = parse_f64(path, line, "delta_rs", &record[2])?;
        let ode = parse_f64(path, line, "delta_ode", &record[3])?;
        match out.last_mut() {
            Some(m) if m.patient_id == id && m.delta_rs.len() == dim => {
                m.delta_rs.push(rs);
                m.delta_ode.push(ode);
            }
            _ if dim == 0 => out.push(AlignmentMetrics::new(id.to_string(), vec![rs], vec![ode])),
            _ => return Err(bad(format!("unexpected dimension {dim} for `{id}`"))),
        }
    }
    for m in &mut out {
        *m = AlignmentMetrics::new(std::mem::take(&mut m.patient_id), m.delta_rs.clone(), m.delta_ode.clone());
    }
    Ok(out)
}

/// Long format: `kind,time,dim,value` with kinds `r`, `s` and `trajectory`.
pub fn write_trajectory_csv(export: &TrajectoryExport, path: &Path) -> Result<()> {
    let header: Vec<String> = ["kind", "time", "dim", "value"].iter().map(|s| s.to_string()).collect();
    let mut rows = Vec::new();
    for (kind, times, values) in [
        ("r", &export.r_times, &export.r_means),
        ("s", &export.s_times, &export.s_means),
        ("trajectory", &export.times, &export.values),
    ] {
        for (t, v) in times.iter().zip(values) {
            for (j, x) in v.iter().enumerate() {
                rows.push(vec![kind.to_string(), t.to_string(), j.to_string(), x.to_string()]);
            }
        }
    }
    write_csv(path, &header, rows.into_iter())
}
