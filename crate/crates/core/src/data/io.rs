//! On-disk cohort layout:
//!
//! - `cohort.toml`: stage, item maxima per instrument, categorical columns
//! - `instrument_r.csv` / `instrument_s.csv`: `patient_id,time_months,item_1..item_p`
//! - `baseline.csv`: `patient_id` followed by covariate columns
//! - `ground_truth.json`: optional, synthetic cohorts only
//!
//! Patient order follows `baseline.csv`.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Cohort, Covariate, GroundTruth, ItemScale, PatientRecord, Series, Stage};
use crate::error::{Error, Result};
use crate::ode::Instrument;

pub const METADATA_FILE: &str = "cohort.toml";
pub const BASELINE_FILE: &str = "baseline.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

pub fn instrument_file(instrument: Instrument) -> &'static str {
    match instrument {
        Instrument::R => "instrument_r.csv",
        Instrument::S => "instrument_s.csv",
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Metadata {
    stage: Stage,
    #[serde(default)]
    categorical: Vec<String>,
    scale_r: ItemScale,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    scale_s: Option<ItemScale>,
}

fn parse_error(path: &Path, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub(crate) fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    parse_error(path, line, e.to_string())
}

pub(crate) fn open_csv(path: &Path) -> Result<csv::Reader<fs::File>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file))
}

pub(crate) fn parse_f64(path: &Path, line: u64, column: &str, field: &str) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|_| parse_error(path, line, format!("column `{column}`: `{field}` is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(path, line, format!("column `{column}`: non-finite value")));
    }
    Ok(v)
}

fn read_baseline(path: &Path, categorical: &[String]) -> Result<(Vec<String>, Vec<(String, Vec<Covariate>)>)> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if headers.get(0) != Some("patient_id") {
        return Err(parse_error(path, 1, "first column must be `patient_id`"));
    }
    let columns: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    for c in categorical {
        if !columns.contains(c) {
            return Err(Error::config(format!("categorical column `{c}` not in {}", path.display())));
        }
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record[0].to_string();
        if id.is_empty() {
            return Err(parse_error(path, line, "empty patient id"));
        }
        let values = columns
            .iter()
            .zip(record.iter().skip(1))
            .map(|(col, field)| {
                if categorical.contains(col) {
                    Ok(Covariate::Category(field.to_string()))
                } else {
                    parse_f64(path, line, col, field).map(Covariate::Numeric)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push((id, values));
    }
    Ok((columns, rows))
}

/// Rows grouped by patient, each sorted by time.
fn read_instrument(path: &Path, width: usize) -> Result<HashMap<String, Series>> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let expected: Vec<String> = ["patient_id".to_string(), "time_months".to_string()]
        .into_iter()
        .chain((1..=width).map(|j| format!("item_{j}")))
        .collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(parse_error(
            path,
            1,
            format!("expected header `{}`", expected.join(",")),
        ));
    }

    let mut grouped: HashMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = HashMap::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record[0].to_string();
        let time = parse_f64(path, line, "time_months", &record[1])?;
        let items = (0..width)
            .map(|j| parse_f64(path, line, &expected[j + 2], &record[j + 2]))
            .collect::<Result<Vec<_>>>()?;
        // Order-preserving key for finite f64 (times are non-negative in practice,
        // but negative times are ordered correctly too).
        let bits = time.to_bits();
        let key = if time.is_sign_negative() { !bits } else { bits | (1 << 63) };
        let by_time = grouped.entry(id.clone()).or_default();
        if by_time.insert(key, (time, items)).is_some() {
            return Err(Error::Validation(format!(
                "{}: duplicate row for patient `{id}` at time {time} (line {line})",
                path.display()
            )));
        }
    }
    Ok(grouped
        .into_iter()
        .map(|(id, rows)| {
            let (times, items) = rows.into_values().unzip();
            (id, Series { times, items })
        })
        .collect())
}

pub fn load_cohort(dir: &Path) -> Result<Cohort> {
    let meta_path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: Metadata = toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", meta_path.display())))?;

    let (baseline_columns, baseline) = read_baseline(&dir.join(BASELINE_FILE), &meta.categorical)?;
    let r_path = dir.join(instrument_file(Instrument::R));
    let mut r = read_instrument(&r_path, meta.scale_r.width())?;
    let s_path = dir.join(instrument_file(Instrument::S));
    let mut s = match &meta.scale_s {
        Some(scale) => read_instrument(&s_path, scale.width())?,
        None => HashMap::new(),
    };

    let known: std::collections::HashSet<&str> = baseline.iter().map(|(id, _)| id.as_str()).collect();
    for (path, rows) in [(&r_path, &r), (&s_path, &s)] {
        if let Some(id) = rows.keys().find(|id| !known.contains(id.as_str())) {
            return Err(Error::Validation(format!(
                "{}: patient `{id}` has no baseline row",
                path.display()
            )));
        }
    }

    let patients = baseline
        .into_iter()
        .map(|(id, values)| PatientRecord {
            r: r.remove(&id).unwrap_or_default(),
            s: s.remove(&id).unwrap_or_default(),
            id,
            baseline: values,
        })
        .collect();

    let gt_path = dir.join(GROUND_TRUTH_FILE);
    let ground_truth = if gt_path.exists() {
        let text = fs::read_to_string(&gt_path).map_err(|e| Error::io(&gt_path, e))?;
        let gt: GroundTruth = serde_json::from_str(&text)
            .map_err(|e| parse_error(&gt_path, e.line() as u64, e.to_string()))?;
        Some(gt)
    } else {
        None
    };

    let cohort = Cohort {
        baseline_columns,
        categorical: meta.categorical,
        scale_r: meta.scale_r,
        scale_s: meta.scale_s,
        stage: meta.stage,
        patients,
        ground_truth,
    };
    cohort.validate()?;
    Ok(cohort)
}

pub(crate) fn write_csv(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer.write_record(header).map_err(|e| csv_error(path, e))?;
    for row in rows {
        writer.write_record(&row).map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

/// Write a cohort directory; returns the written paths in a fixed order.
pub fn save_cohort(cohort: &Cohort, dir: &Path) -> Result<Vec<PathBuf>> {
    cohort.validate()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();

    let meta = Metadata {
        stage: cohort.stage,
        categorical: cohort.categorical.clone(),
        scale_r: cohort.scale_r.clone(),
        scale_s: cohort.scale_s.clone(),
    };
    let meta_path = dir.join(METADATA_FILE);
    let text = toml::to_string(&meta).map_err(|e| Error::config(e.to_string()))?;
    fs::write(&meta_path, text).map_err(|e| Error::io(&meta_path, e))?;
    written.push(meta_path);

    let path = dir.join(BASELINE_FILE);
    let header: Vec<String> = std::iter::once("patient_id".to_string())
        .chain(cohort.baseline_columns.iter().cloned())
        .collect();
    write_csv(
        &path,
        &header,
        cohort.patients.iter().map(|p| {
            std::iter::once(p.id.clone())
                .chain(p.baseline.iter().map(|c| match c {
                    Covariate::Numeric(v) => v.to_string(),
                    Covariate::Category(s) => s.clone(),
                }))
                .collect()
        }),
    )?;
    written.push(path);

    let mut instruments = vec![(Instrument::R, cohort.p())];
    if let Some(q) = cohort.q() {
        instruments.push((Instrument::S, q));
    }
    for (instrument, width) in instruments {
        let path = dir.join(instrument_file(instrument));
        let header: Vec<String> = ["patient_id".to_string(), "time_months".to_string()]
            .into_iter()
            .chain((1..=width).map(|j| format!("item_{j}")))
            .collect();
        let rows = cohort.patients.iter().flat_map(|p| {
            let series = p.series(instrument);
            series.times.iter().zip(&series.items).map(|(t, row)| {
                [p.id.clone(), t.to_string()]
                    .into_iter()
                    .chain(row.iter().map(f64::to_string))
                    .collect()
            })
        });
        write_csv(&path, &header, rows)?;
        written.push(path);
    }
    if cohort.q().is_none() {
        let stale = dir.join(instrument_file(Instrument::S));
        if stale.exists() {
            fs::remove_file(&stale).map_err(|e| Error::io(&stale, e))?;
        }
    }

    let gt_path = dir.join(GROUND_TRUTH_FILE);
    match &cohort.ground_truth {
        Some(gt) => {
            let text = serde_json::to_string_pretty(gt).map_err(|e| Error::config(e.to_string()))?;
            fs::write(&gt_path, text).map_err(|e| Error::io(&gt_path, e))?;
            written.push(gt_path);
        }
        None if gt_path.exists() => fs::remove_file(&gt_path).map_err(|e| Error::io(&gt_path, e))?,
        None => {}
    }
    Ok(written)
}
