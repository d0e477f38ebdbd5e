use std::fs;
use std::path::{Path, PathBuf};

use latent_align::data::{
    apply_scenario, generate_synthetic, load_cohort, make_subscale, preprocess as run_preprocess, save_cohort,
    Cohort, GeneratorConfig, PreprocessConfig, ScenarioKind, ScenarioSpec, Stage, DEFAULT_SUBSCALE,
};
use latent_align::eval::{
    sample_patient_ids, scatter_report, scatter_svg, trajectory_fit_export, trajectory_svg, write_metrics_csv,
    write_trajectory_csv, ScatterSummary, TRAJECTORY_SAMPLES,
};
use latent_align::model::{
    load_checkpoint, save_checkpoint, train as run_train, AblationArm, EpochStats, Preset, PreparedPatient,
    TrainConfig, TrainOverrides, TrainState,
};
use latent_align::{Error, Result};
use serde::Serialize;

use crate::manifest::{read_config, ManifestBuilder};

pub const FINAL_CHECKPOINT: &str = "final.ckpt";

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub preset: Option<Preset>,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub epochs: Option<usize>,
}

impl TrainOptions {
    fn resolve(&self) -> Result<TrainConfig> {
        let overrides: TrainOverrides = match &self.config {
            Some(path) => read_config(path)?,
            None => TrainOverrides::default(),
        };
        let mut config = overrides.resolve(self.preset)?;
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        if let Some(epochs) = self.epochs {
            config.epochs = epochs;
        }
        config.validate()?;
        Ok(config)
    }
}

fn write_json(value: &impl Serialize, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn load_preprocessed(dir: &Path) -> Result<Cohort> {
    let cohort = load_cohort(dir)?;
    if cohort.stage != Stage::Preprocessed {
        return Err(Error::Precondition(format!(
            "{} holds raw data; run `preprocess` first",
            dir.display()
        )));
    }
    Ok(cohort)
}

/// File-name-safe form of a patient id.
fn file_stem(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

pub fn generate(config: Option<&Path>, seed: Option<u64>, out: &Path) -> Result<()> {
    let mut gen: GeneratorConfig = match config {
        Some(path) => read_config(path)?,
        None => GeneratorConfig::default(),
    };
    if let Some(seed) = seed {
        gen.seed = seed;
    }
    gen.validate()?;
    let cohort = generate_synthetic(&gen)?;
    let mut manifest = ManifestBuilder::new("generate", &gen, gen.seed)?;
    if let Some(path) = config {
        manifest.input(path)?;
    }
    manifest.outputs(save_cohort(&cohort, out)?);
    manifest.finish(out)?;
    println!("generated {} patients into {}", cohort.patients.len(), out.display());
    Ok(())
}

pub fn scenario(
    input: &Path,
    kind: Option<ScenarioKind>,
    config: Option<&Path>,
    seed: Option<u64>,
    subscale: Option<&[usize]>,
    out: &Path,
) -> Result<()> {
    let mut value = match config {
        Some(path) => read_config::<serde_json::Value>(path)?,
        None => serde_json::json!({}),
    };
    let map = value
        .as_object_mut()
        .ok_or_else(|| Error::config("scenario configuration must be a table"))?;
    let stored_subscale = match map.remove("subscale") {
        Some(v) => Some(serde_json::from_value::<Vec<usize>>(v).map_err(|e| Error::config(e.to_string()))?),
        None => None,
    };
    if let Some(kind) = kind {
        map.insert("kind".into(), serde_json::to_value(kind).expect("enum serializes"));
    }
    if let Some(seed) = seed {
        map.insert("seed".into(), seed.into());
    }
    if !map.contains_key("kind") {
        return Err(Error::config("scenario kind missing (use --kind or a config with `kind`)"));
    }
    let spec: ScenarioSpec = serde_json::from_value(value).map_err(|e| Error::config(e.to_string()))?;
    spec.validate()?;

    let mut cohort = load_cohort(input)?;
    let indices: Vec<usize> = subscale
        .map(<[usize]>::to_vec)
        .or(stored_subscale)
        .unwrap_or_else(|| DEFAULT_SUBSCALE.to_vec());
    let built_subscale = cohort.scale_s.is_none();
    if built_subscale {
        cohort = make_subscale(&cohort, &indices)?;
    }
    let (modified, log) = apply_scenario(&cohort, &spec)?;

    let mut record = serde_json::to_value(spec).map_err(|e| Error::config(e.to_string()))?;
    if built_subscale {
        record["subscale"] = serde_json::to_value(&indices).expect("indices serialize");
    }
    let mut manifest = ManifestBuilder::new("scenario", &record, spec.seed)?;
    manifest.input(input)?;
    if let Some(path) = config {
        manifest.input(path)?;
    }
    manifest.outputs(save_cohort(&modified, out)?);
    let log_path = out.join("scenario_log.json");
    write_json(&log, &log_path)?;
    manifest.output(log_path);
    manifest.finish(out)?;
    println!(
        "scenario {}: {} S observations deleted, {} patients shifted",
        spec.kind.name(),
        log.deleted.len(),
        log.shifted_patients.len()
    );
    Ok(())
}

pub fn preprocess(input: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let settings: PreprocessConfig = match config {
        Some(path) => read_config(path)?,
        None => PreprocessConfig::default(),
    };
    settings.validate()?;
    let cohort = load_cohort(input)?;
    let (processed, report) = run_preprocess(&cohort, &settings)?;
    let mut manifest = ManifestBuilder::new("preprocess", &settings, 0)?;
    manifest.input(input)?;
    if let Some(path) = config {
        manifest.input(path)?;
    }
    manifest.outputs(save_cohort(&processed, out)?);
    let report_path = out.join("preprocess_report.json");
    write_json(&report, &report_path)?;
    manifest.output(report_path);
    manifest.finish(out)?;
    println!(
        "preprocessed {} patients: {} outlier visits, {} series and {} patients removed",
        processed.patients.len(),
        report.outliers.len(),
        report.removed_series.len(),
        report.removed_patients.len()
    );
    Ok(())
}

/// Train to `state.config.epochs`, writing snapshots, the final checkpoint
/// and the loss history into `out`.
fn train_into(state: &mut TrainState, data: &[PreparedPatient], out: &Path, label: &str) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let snapshots = state.config.snapshot_epochs.clone();
    let mut written = Vec::new();
    let history: Vec<EpochStats> = run_train(state, data, |s, stats| {
        println!("{label}epoch {} mean_loss {}", stats.epoch, stats.mean_loss);
        if snapshots.contains(&stats.epoch) {
            let path = out.join(format!("epoch_{:03}.ckpt", stats.epoch));
            save_checkpoint(s, &path)?;
            written.push(path);
        }
        Ok(())
    })?;
    let final_path = out.join(FINAL_CHECKPOINT);
    save_checkpoint(state, &final_path)?;
    written.push(final_path);

    let history_path = out.join("loss_history.csv");
    let mut text = String::from("epoch,mean_loss,steps\n");
    for h in &history {
        text.push_str(&format!("{},{},{}\n", h.epoch, h.mean_loss, h.steps));
    }
    fs::write(&history_path, text).map_err(|e| Error::io(&history_path, e))?;
    written.push(history_path);
    Ok(written)
}

pub fn train(data_dir: &Path, options: &TrainOptions, checkpoint: Option<&Path>, out: &Path) -> Result<()> {
    let cohort = load_preprocessed(data_dir)?;
    let mut state = match checkpoint {
        Some(path) => {
            if options.preset.is_some() || options.config.is_some() || options.seed.is_some() {
                return Err(Error::config(
                    "a resumed run keeps its configuration; only --epochs may change",
                ));
            }
            let mut state = load_checkpoint(path)?;
            if let Some(epochs) = options.epochs {
                state.config.epochs = epochs;
            }
            state.config.validate()?;
            state
        }
        None => TrainState::new(&cohort, options.resolve()?)?,
    };
    let data = state.prepare(&cohort)?;
    let mut manifest = ManifestBuilder::new("train", &TrainOverrides::from(&state.config), state.config.seed)?;
    manifest.input(data_dir)?;
    for path in [options.config.as_deref(), checkpoint].into_iter().flatten() {
        manifest.input(path)?;
    }
    manifest.outputs(train_into(&mut state, &data, out, "")?);
    manifest.finish(out)?;
    Ok(())
}

#[derive(Serialize)]
struct EvaluationReport<'a> {
    checkpoint: String,
    epoch: usize,
    tolerance: f64,
    config: &'a TrainConfig,
    summary: &'a ScatterSummary,
}

/// Metrics, summary and scatter plot of `state` on `data`; returns written paths.
fn evaluate_into(
    state: &TrainState,
    data: &[PreparedPatient],
    tolerance: f64,
    checkpoint: &Path,
    out: &Path,
) -> Result<(ScatterSummary, Vec<PathBuf>)> {
    create_dir(out)?;
    let (metrics, summary) = scatter_report(&state.model, &state.params, data, tolerance)?;
    let metrics_path = out.join("metrics.csv");
    write_metrics_csv(&metrics, &metrics_path)?;
    let summary_path = out.join("summary.json");
    write_json(
        &EvaluationReport {
            checkpoint: checkpoint.display().to_string(),
            epoch: state.epoch,
            tolerance,
            config: &state.config,
            summary: &summary,
        },
        &summary_path,
    )?;
    let svg_path = out.join("scatter.svg");
    let title = format!("epoch {}: {} patients", state.epoch, summary.included);
    fs::write(&svg_path, scatter_svg(&metrics, state.dims.d, &title)).map_err(|e| Error::io(&svg_path, e))?;
    Ok((summary, vec![metrics_path, summary_path, svg_path]))
}

pub fn evaluate(data_dir: &Path, checkpoint: &Path, tolerance: f64, out: &Path) -> Result<()> {
    if !(tolerance >= 0.0 && tolerance.is_finite()) {
        return Err(Error::config("time tolerance must be finite and non-negative"));
    }
    let state = load_checkpoint(checkpoint)?;
    let cohort = load_preprocessed(data_dir)?;
    let data = state.prepare(&cohort)?;
    let mut manifest = ManifestBuilder::new("evaluate", &TrainOverrides::from(&state.config), state.config.seed)?;
    manifest.input(data_dir)?;
    manifest.input(checkpoint)?;
    let (summary, written) = evaluate_into(&state, &data, tolerance, checkpoint, out)?;
    manifest.outputs(written);
    manifest.finish(out)?;
    println!(
        "evaluated {} patients ({} excluded): above-diagonal fraction {:?}, median misalignment {}",
        summary.included, summary.excluded, summary.above_diagonal_fraction, summary.median_delta_rs_pooled
    );
    Ok(())
}

fn write_panels(state: &TrainState, data: &[PreparedPatient], ids: &[String], out: &Path) -> Result<Vec<PathBuf>> {
    create_dir(out)?;
    let mut written = Vec::new();
    for id in ids {
        let patient = data
            .iter()
            .find(|p| &p.id == id)
            .ok_or_else(|| Error::Lookup(format!("no patient `{id}`")))?;
        let export = trajectory_fit_export(&state.model, &state.params, patient, TRAJECTORY_SAMPLES)?;
        let csv_path = out.join(format!("{}.csv", file_stem(id)));
        write_trajectory_csv(&export, &csv_path)?;
        let svg_path = out.join(format!("{}.svg", file_stem(id)));
        fs::write(&svg_path, trajectory_svg(&export)).map_err(|e| Error::io(&svg_path, e))?;
        written.extend([csv_path, svg_path]);
    }
    Ok(written)
}

pub fn ablation(data_dir: &Path, options: &TrainOptions, panels: usize, out: &Path) -> Result<()> {
    let base = options.resolve()?;
    let cohort = load_preprocessed(data_dir)?;
    let mut manifest = ManifestBuilder::new("ablation", &TrainOverrides::from(&base), base.seed)?;
    manifest.input(data_dir)?;
    if let Some(path) = &options.config {
        manifest.input(path)?;
    }

    let mut table = String::from("arm,alpha,beta,gamma,seed,epochs,included,excluded,mean_delta_rs,mean_delta_ode,median_delta_rs\n");
    for arm in AblationArm::ALL {
        let config = TrainConfig {
            weights: arm.weights(),
            ..base.clone()
        };
        let arm_dir = out.join(arm.name());
        let mut arm_manifest = ManifestBuilder::new(&format!("ablation/{}", arm.name()), &TrainOverrides::from(&config), config.seed)?;
        arm_manifest.input(data_dir)?;
        let mut state = TrainState::new(&cohort, config)?;
        let data = state.prepare(&cohort)?;
        let mut written = train_into(&mut state, &data, &arm_dir, &format!("[{}] ", arm.name()))?;
        let checkpoint = arm_dir.join(FINAL_CHECKPOINT);
        let (summary, evaluated) = evaluate_into(&state, &data, latent_align::eval::DEFAULT_TIME_TOLERANCE, &checkpoint, &arm_dir)?;
        written.extend(evaluated);
        let ids = sample_patient_ids(&data, panels, state.config.seed);
        written.extend(write_panels(&state, &data, &ids, &arm_dir.join("panels"))?);
        arm_manifest.outputs(written.iter().cloned());
        arm_manifest.finish(&arm_dir)?;
        manifest.outputs(written);

        let w = state.config.weights;
        table.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            arm.name(),
            w.alpha,
            w.beta,
            w.gamma,
            state.config.seed,
            state.config.epochs,
            summary.included,
            summary.excluded,
            summary.mean_delta_rs_pooled,
            summary.mean_delta_ode_pooled,
            summary.median_delta_rs_pooled
        ));
    }
    let table_path = out.join("comparison.csv");
    fs::write(&table_path, &table).map_err(|e| Error::io(&table_path, e))?;
    manifest.output(table_path);
    manifest.finish(out)?;
    print!("{table}");
    Ok(())
}

pub fn plot(data_dir: &Path, checkpoint: &Path, patients: &[String], out: &Path) -> Result<()> {
    let state = load_checkpoint(checkpoint)?;
    let cohort = load_preprocessed(data_dir)?;
    let data = state.prepare(&cohort)?;
    let mut manifest = ManifestBuilder::new("plot", &patients, state.config.seed)?;
    manifest.input(data_dir)?;
    manifest.input(checkpoint)?;
    manifest.outputs(write_panels(&state, &data, patients, out)?);
    manifest.finish(out)?;
    Ok(())
}
