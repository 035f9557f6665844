//! Config-driven pipeline: data generation, learning, prediction and sweeps,
//! with CSV/JSON outputs stamped by a provenance block.

mod config;
mod dataset;
mod pipeline;
mod provenance;

pub use config::{
    training_steps, CoarseSettings, ExperimentConfig, FlowSettings, FrameSource, InitialSource, LearningSettings,
    ModelName, Overrides, SweepSettings, TrackingSettings, SCHEMA,
};
pub use dataset::{truncate, BtcDataset, DatasetMeta, BTC_CSV, BTC_JSON};
pub use pipeline::{
    generate, initial_condition, learn, learn_on, load_dataset, model_solution, predict_at, predict_compare,
    predict_curves, sweep, sweep_table, window_mse, write_generated, CurveScore, FlowSummary, Generated, ModelCurves,
    ModelFit, ReportBundle, Role, SweepRow, CONFIG_FILE,
};
pub use provenance::{read_csv, CsvTable, Provenance, VERSION};

use rayon::prelude::*;

use crate::error::Result;

/// `generate` stage: writes the dataset to the output directory.
pub fn run_generate(cfg: &ExperimentConfig) -> Result<Generated> {
    let g = generate(cfg).map_err(|e| e.in_stage("generate"))?;
    write_generated(&g, cfg, &cfg.output_dir).map_err(|e| e.in_stage("generate"))?;
    Ok(g)
}

/// `learn` stage: fits every configured model, writing `fit_<model>.json`.
pub fn run_learn(cfg: &ExperimentConfig) -> Result<Vec<ModelFit>> {
    let stage = |e: crate::Error| e.in_stage("learn");
    let data = load_dataset(cfg, &cfg.output_dir).map_err(stage)?;
    let fits = cfg
        .learning
        .models
        .par_iter()
        .map(|&m| learn(&data, cfg, m).map_err(|e| e.in_stage(format!("learning the {} model", m.as_str()))))
        .collect::<Result<Vec<_>>>()
        .map_err(stage)?;
    for f in &fits {
        f.write(&cfg.output_dir).map_err(stage)?;
    }
    Ok(fits)
}

/// `predict` stage: compares the saved fits against the data.
pub fn run_predict(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let stage = |e: crate::Error| e.in_stage("predict");
    let dir = &cfg.output_dir;
    let data = load_dataset(cfg, dir).map_err(stage)?;
    let fits = cfg
        .learning
        .models
        .iter()
        .map(|&m| ModelFit::read(dir, m))
        .collect::<Result<Vec<_>>>()
        .map_err(stage)?;
    let bundle = predict_compare(&data, &fits, cfg).map_err(stage)?;
    bundle.write(dir).map_err(stage)?;
    Ok(bundle)
}

/// Runs whichever of generate, learn and predict have no outputs yet, then
/// returns the report.
pub fn run_report(cfg: &ExperimentConfig) -> Result<ReportBundle> {
    let dir = &cfg.output_dir;
    let stale = load_dataset(cfg, dir).is_err();
    if stale {
        run_generate(cfg)?;
    }
    let tt = cfg.training_steps();
    let missing = cfg.learning.models.iter().any(|&m| {
        stale || ModelFit::read(dir, m).map_or(true, |f| f.training_steps != tt || f.provenance.config_sha256 != cfg.hash())
    });
    if missing {
        run_learn(cfg)?;
    }
    run_predict(cfg)
}

/// `sweep` stage: writes `sweep.csv`.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let stage = |e: crate::Error| e.in_stage("sweep");
    let data = load_dataset(cfg, &cfg.output_dir).map_err(stage)?;
    let rows = sweep(&data, cfg).map_err(stage)?;
    sweep_table(&rows, &Provenance::of(cfg))
        .write(&cfg.output_dir.join("sweep.csv"))
        .map_err(stage)?;
    Ok(rows)
}
