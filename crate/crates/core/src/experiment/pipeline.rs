use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{training_steps, ExperimentConfig, FrameSource, InitialSource, ModelName};
use super::dataset::{truncate, BtcDataset, DatasetMeta, BTC_JSON};
use super::provenance::{read_json, write_json, write_text, CsvTable, Provenance};
use crate::baselines::{solve_classical, solve_fractal, surrogate_eval, train_surrogate, Sample};
use crate::coarse::{effective_advection, extract_btc, shift_frame, upscale, BreakthroughCurve, CoarseDensity};
use crate::error::{Error, Result};
use crate::flow::{build_conductivity, solve_darcy, solve_unit_cell};
use crate::learning::{FitResult, FittedParams, KernelTemplate, LearningProblem};
use crate::nonlocal::{solve, InitialCondition, NonlocalSolution, ProfileMoments};
use crate::particles::{
    inject, loglog_slope, track, DensityAccumulator, DensityGrid, DisplacementAccumulator, DisplacementStats,
};

/// Summary of the fine-scale flow solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub grid_nx: usize,
    pub grid_ny: usize,
    pub inflow: f64,
    pub outflow: f64,
    pub mean_speed: f64,
    pub max_relative_divergence: f64,
}

/// In-memory result of the data-generation stage.
#[derive(Debug, Clone)]
pub struct Generated {
    pub dataset: BtcDataset,
    pub displacement: DisplacementStats,
    /// Coarse density in the fixed frame.
    pub coarse: CoarseDensity,
    /// Coarse density in the moving frame.
    pub shifted: CoarseDensity,
    pub flow: FlowSummary,
}

/// Least-squares slope of `y` against `t` over finite points.
fn linear_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t.iter().zip(y).filter(|(_, y)| y.is_finite()).map(|(a, b)| (*a, *b)).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Flow, particle tracking and coarse-graining.
pub fn generate(cfg: &ExperimentConfig) -> Result<Generated> {
    cfg.validate()?;
    let spec = &cfg.medium;
    let (nx, ny) = (cfg.flow.grid_nx, cfg.flow.grid_ny);
    let flow = build_conductivity(spec, nx, ny)
        .and_then(|k| solve_darcy(&k, spec))
        .map_err(|e| e.in_stage("flow"))?;
    let unit = solve_unit_cell(spec, cfg.flow.unit_cell_nx, cfg.flow.unit_cell_ny)
        .and_then(|f| effective_advection(spec, &f))
        .map_err(|e| e.in_stage("homogenization"))?;
    let summary = FlowSummary {
        grid_nx: nx,
        grid_ny: ny,
        inflow: flow.inflow(),
        outflow: flow.outflow(),
        mean_speed: flow.mean_speed(),
        max_relative_divergence: flow.max_relative_divergence(),
    };

    let tc = cfg.tracking_config();
    let positions = inject(&flow, &tc).map_err(|e| e.in_stage("injection"))?;
    let times = tc.snapshot_times();
    let grid = DensityGrid::aligned(
        spec.num_cells,
        spec.cell_width,
        spec.layer_height,
        cfg.coarse.bins_per_cell,
        cfg.coarse.ny_bins,
    )?;
    let mut density = DensityAccumulator::new(grid, times.clone());
    let mut displacement = DisplacementAccumulator::new(times.clone());
    for chunk in positions.chunks(cfg.tracking.chunk_size) {
        let ensemble = track(&flow, chunk, &tc).map_err(|e| e.in_stage("tracking"))?;
        density.add(&ensemble)?;
        displacement.add(&ensemble)?;
    }
    drop(flow);
    let stats = displacement.finish();

    let coarse_stage = |e: Error| e.in_stage("coarse-graining");
    let fine = density.finish().map_err(coarse_stage)?;
    let coarse = upscale(&fine, spec, cfg.coarse.window).map_err(coarse_stage)?;
    let measured = linear_slope(&stats.times, &stats.mean_x)
        .ok_or_else(|| coarse_stage(Error::numerical("every particle left before the second snapshot")))?;
    let frame_speed = match cfg.coarse.frame {
        FrameSource::Measured => measured.max(0.0),
        FrameSource::Homogenized => unit.v_drift,
        FrameSource::Nominal => unit.v_bar,
        FrameSource::Fixed => cfg.coarse.frame_speed.expect("validated"),
    };
    let shifted = shift_frame(&coarse, frame_speed).map_err(coarse_stage)?;
    let locations = cfg.all_locations();
    let curves = extract_btc(&shifted, &locations).map_err(coarse_stage)?;
    let profile_variance = (0..times.len())
        .map(|s| ProfileMoments::of(shifted.profile(s), spec.cell_width).variance)
        .collect();
    let msd_slope = loglog_slope(&stats.times, &stats.msd);

    let meta = DatasetMeta {
        provenance: Provenance::of(cfg),
        data_sha256: cfg.data_hash(),
        medium: spec.clone(),
        window: cfg.coarse.window,
        dt: tc.dt,
        t_end: tc.t_end,
        injection_cell: tc.injection_cell,
        num_particles: tc.num_particles,
        frame: cfg.coarse.frame,
        frame_speed,
        advection: unit,
        measured_drift: measured,
        msd_slope,
        locations,
        initial_profile: shifted.profile(0).to_vec(),
        profile_variance,
        particle_msd: stats.msd.clone(),
    };
    Ok(Generated {
        dataset: BtcDataset { meta, curves },
        displacement: stats,
        coarse,
        shifted,
        flow: summary,
    })
}

pub const CONFIG_FILE: &str = "config.toml";

/// Writes `config.toml`, `flow.json`, `btc.csv`, `btc.json`, `msd.csv` and
/// `profiles.csv`.
pub fn write_generated(g: &Generated, cfg: &ExperimentConfig, dir: &Path) -> Result<()> {
    let prov = &g.dataset.meta.provenance;
    write_text(&dir.join(CONFIG_FILE), &cfg.to_toml())?;
    write_json(&dir.join("flow.json"), &g.flow)?;
    g.dataset.write(dir)?;

    let d = &g.displacement;
    let mut msd = CsvTable::new(prov, &["t", "mean_x", "msd", "active", "exited", "stagnant"]);
    for s in 0..d.times.len() {
        msd.row(&[&d.times[s], &d.mean_x[s], &d.msd[s], &d.n_active[s], &d.n_exited[s], &d.n_stagnant[s]]);
    }
    msd.write(&dir.join("msd.csv"))?;

    let mut profiles = CsvTable::new(prov, &["t", "cell", "x", "density", "density_moving"]);
    let l1 = g.coarse.cell_width;
    for &t in &cfg.coarse.profile_times {
        let s = ((t / cfg.tracking.dt).round() as usize).min(g.coarse.snapshot_times.len() - 1);
        let ts = g.coarse.snapshot_times[s];
        for i in 0..g.coarse.num_cells() {
            let x = (i as f64 + 0.5) * l1;
            profiles.row(&[&ts, &(i + 1), &x, &g.coarse.get(i, s), &g.shifted.get(i, s)]);
        }
    }
    profiles.write(&dir.join("profiles.csv"))
}

/// Reads the dataset in `dir` and checks it was generated from `cfg`.
pub fn load_dataset(cfg: &ExperimentConfig, dir: &Path) -> Result<BtcDataset> {
    if !dir.join(BTC_JSON).exists() {
        return Err(Error::MissingArtifact(dir.join(BTC_JSON)));
    }
    let data = BtcDataset::read(dir)?;
    if data.meta.data_sha256 != cfg.data_hash() {
        return Err(Error::config(format!(
            "dataset in {} was generated from a different configuration; rerun generate",
            dir.display()
        )));
    }
    Ok(data)
}

/// A trained model with the data and window it was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFit {
    pub provenance: Provenance,
    pub data_sha256: String,
    pub model: ModelName,
    pub tt: f64,
    /// Samples `1..=training_steps` of each curve entered the loss.
    pub training_steps: usize,
    pub training_locations: Vec<f64>,
    pub params: FittedParams,
    /// Mean squared error per training sample.
    pub training_mse: f64,
    /// Optimizer record for the PDE models.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<FitResult>,
}

impl ModelFit {
    pub fn file_name(model: ModelName) -> String {
        format!("fit_{}.json", model.as_str())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        write_json(&dir.join(Self::file_name(self.model)), self)
    }

    pub fn read(dir: &Path, model: ModelName) -> Result<Self> {
        let path = dir.join(Self::file_name(model));
        if !path.exists() {
            return Err(Error::MissingArtifact(path).in_stage(format!("loading the {} fit", model.as_str())));
        }
        let fit: Self = read_json(&path)?;
        if fit.model != model {
            return Err(Error::format(format!("{} holds a {} fit", path.display(), fit.model.as_str())));
        }
        Ok(fit)
    }
}

pub fn initial_condition(meta: &DatasetMeta, source: InitialSource) -> InitialCondition {
    match source {
        InitialSource::Data => InitialCondition::Profile {
            values: meta.initial_profile.clone(),
        },
        InitialSource::Spike => InitialCondition::Spike {
            cell: meta.injection_cell - 1,
        },
    }
}

/// Forward solve of a PDE model; `None` for the surrogate.
pub fn model_solution(
    params: &FittedParams,
    meta: &DatasetMeta,
    initial: &InitialCondition,
    times: &[f64],
) -> Result<Option<NonlocalSolution>> {
    let (n, l1) = (meta.num_cells(), meta.cell_width());
    Ok(match params {
        FittedParams::Nonlocal { kernel } => Some(solve(kernel, n, initial, times)?),
        FittedParams::Fractal(p) => Some(solve_fractal(*p, n, l1, initial, times)?),
        FittedParams::Classical(p) => Some(solve_classical(*p, n, l1, initial, times)?),
        FittedParams::Mlp(_) => None,
    })
}

/// Model curves at `locations` on the time grid `times`.
pub fn predict_curves(
    params: &FittedParams,
    meta: &DatasetMeta,
    initial: &InitialCondition,
    times: &[f64],
    locations: &[f64],
) -> Result<Vec<BreakthroughCurve>> {
    match (params, model_solution(params, meta, initial, times)?) {
        (_, Some(sol)) => sol.model_btc(locations),
        (FittedParams::Mlp(net), None) => locations
            .iter()
            .map(|&x| BreakthroughCurve::new(x, times.to_vec(), times.iter().map(|&t| surrogate_eval(net, x, t)).collect()))
            .collect(),
        _ => unreachable!("only the surrogate has no forward solve"),
    }
}

/// Mean squared difference over samples `range` of two curves.
pub fn window_mse(reference: &BreakthroughCurve, predicted: &BreakthroughCurve, range: std::ops::Range<usize>) -> Option<f64> {
    let end = range.end.min(reference.values.len()).min(predicted.values.len());
    if range.start >= end {
        return None;
    }
    let sum: f64 = (range.start..end).map(|n| (reference.values[n] - predicted.values[n]).powi(2)).sum();
    Some(sum / (end - range.start) as f64)
}

/// Trains `model` on the configured window and training locations.
pub fn learn(data: &BtcDataset, cfg: &ExperimentConfig, model: ModelName) -> Result<ModelFit> {
    learn_on(data, cfg, model, cfg.learning.tt, &cfg.coarse.training_locations)
}

/// Trains `model` on samples `t <= tt` of the curves at `locations`; later
/// samples never enter the loss.
pub fn learn_on(data: &BtcDataset, cfg: &ExperimentConfig, model: ModelName, tt: f64, locations: &[f64]) -> Result<ModelFit> {
    let meta = &data.meta;
    let steps = training_steps(tt, meta.dt);
    if steps == 0 {
        return Err(Error::config(format!("T_t = {tt} leaves an empty training window")));
    }
    if steps + 1 > data.times().len() {
        return Err(Error::config(format!("T_t = {tt} lies beyond the recorded data")));
    }
    let curves: Vec<BreakthroughCurve> = locations
        .iter()
        .map(|&x| data.curve(x).map(|c| truncate(c, steps)))
        .collect::<Result<_>>()?;
    let initial = initial_condition(meta, cfg.learning.initial);
    let times = curves[0].times.clone();

    let (params, optimizer) = match model.kind() {
        Some(kind) => {
            let template = KernelTemplate {
                horizon_cells: cfg.learning.horizon_cells,
                cell_width: meta.cell_width(),
                num_cells: meta.num_cells(),
                dt: meta.dt,
            };
            let problem = LearningProblem::new(
                curves.clone(),
                cfg.learning.beta,
                kind,
                template,
                initial.clone(),
                cfg.learning.optimizer.clone(),
            )?;
            let fit = problem.fit()?;
            (fit.params.clone(), Some(fit))
        }
        None => {
            let samples: Vec<Sample> = curves
                .iter()
                .flat_map(|c| {
                    (1..c.times.len()).map(move |n| Sample {
                        x: c.location,
                        t: c.times[n],
                        value: c.values[n],
                    })
                })
                .collect();
            let trained = train_surrogate(&samples, &cfg.learning.surrogate, cfg.seed)?;
            (FittedParams::Mlp(trained.net), None)
        }
    };

    let predicted = predict_curves(&params, meta, &initial, &times, locations)?;
    let sq: f64 = curves
        .iter()
        .zip(&predicted)
        .map(|(c, p)| window_mse(c, p, 1..steps + 1).expect("nonempty window"))
        .sum();
    Ok(ModelFit {
        provenance: Provenance::of(cfg),
        data_sha256: meta.data_sha256.clone(),
        model,
        tt,
        training_steps: steps,
        training_locations: locations.to_vec(),
        params,
        training_mse: sq / curves.len() as f64,
        optimizer,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Training,
    Evaluation,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Training => "training",
            Self::Evaluation => "evaluation",
        }
    }
}

/// Error of one model at one probe, split at `T_t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveScore {
    pub model: ModelName,
    pub location: f64,
    pub role: Role,
    /// Mean over samples `0 < t <= T_t`.
    pub train_mse: f64,
    /// Mean over samples `t > T_t`.
    pub test_mse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCurves {
    pub model: ModelName,
    pub params: FittedParams,
    pub training_mse: f64,
    pub curves: Vec<BreakthroughCurve>,
    /// Variance of the model profile per time step; empty for the surrogate.
    pub msd: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub provenance: Provenance,
    pub data_sha256: String,
    pub tt: f64,
    pub training_steps: usize,
    pub times: Vec<f64>,
    pub training_locations: Vec<f64>,
    pub evaluation_locations: Vec<f64>,
    pub reference: Vec<BreakthroughCurve>,
    pub models: Vec<ModelCurves>,
    /// One row per (model, location).
    pub scores: Vec<CurveScore>,
    /// Particle MSD and the coarse profile variance of the data.
    pub particle_msd: Vec<f64>,
    pub data_msd: Vec<f64>,
}

impl ReportBundle {
    pub fn score(&self, model: ModelName, location: f64) -> Option<&CurveScore> {
        self.scores.iter().find(|s| s.model == model && s.location == location)
    }

    pub fn model(&self, model: ModelName) -> Option<&ModelCurves> {
        self.models.iter().find(|m| m.model == model)
    }

    pub fn predictions_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&self.provenance, &["model", "location", "t", "value"]);
        let data = std::iter::once(("data", &self.reference));
        for (name, curves) in data.chain(self.models.iter().map(|m| (m.model.as_str(), &m.curves))) {
            for c in curves {
                for (time, v) in c.times.iter().zip(&c.values) {
                    t.row(&[&name, &c.location, time, v]);
                }
            }
        }
        t
    }

    pub fn mse_table(&self) -> CsvTable {
        let mut t = CsvTable::new(&self.provenance, &["model", "location", "role", "train_mse", "test_mse"]);
        for s in &self.scores {
            let test = s.test_mse.map_or(String::new(), |v| v.to_string());
            t.row(&[&s.model.as_str(), &s.location, &s.role.as_str(), &s.train_mse, &test]);
        }
        t
    }

    pub fn msd_table(&self) -> CsvTable {
        let pde: Vec<&ModelCurves> = self.models.iter().filter(|m| !m.msd.is_empty()).collect();
        let mut header = vec!["t", "particles", "data"];
        header.extend(pde.iter().map(|m| m.model.as_str()));
        let mut t = CsvTable::new(&self.provenance, &header);
        for n in 0..self.times.len() {
            let mut row: Vec<&dyn std::fmt::Display> = vec![&self.times[n], &self.particle_msd[n], &self.data_msd[n]];
            row.extend(pde.iter().map(|m| &m.msd[n] as &dyn std::fmt::Display));
            t.row(&row);
        }
        t
    }

    /// `predictions.csv`, `mse.csv`, `msd_models.csv` and `report.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        self.predictions_table().write(&dir.join("predictions.csv"))?;
        self.mse_table().write(&dir.join("mse.csv"))?;
        self.msd_table().write(&dir.join("msd_models.csv"))?;
        write_json(&dir.join("report.json"), self)
    }

    /// Plain-text MSE table.
    pub fn summary(&self) -> String {
        let mut out = format!("T_t = {} ({} training samples per curve)\n", self.tt, self.training_steps);
        for m in &self.models {
            let extra = match &m.params {
                FittedParams::Nonlocal { kernel } => format!(" p = {:.4}", kernel.p()),
                FittedParams::Fractal(f) => format!(" D = {:.4e} q = {:.4}", f.d_bar, f.q),
                FittedParams::Classical(c) => format!(" D0 = {:.4e}", c.d0),
                FittedParams::Mlp(_) => String::new(),
            };
            out.push_str(&format!("{:<10} training MSE {:.3e}{extra}\n", m.model.as_str(), m.training_mse));
        }
        out.push_str("model      location   role        train_mse   test_mse\n");
        for s in &self.scores {
            let test = s.test_mse.map_or("-".to_string(), |v| format!("{v:.3e}"));
            out.push_str(&format!(
                "{:<10} {:<10} {:<11} {:<11.3e} {test}\n",
                s.model.as_str(),
                s.location,
                s.role.as_str(),
                s.train_mse
            ));
        }
        out
    }
}

/// Runs every fitted model over the full horizon and scores it at the
/// training and evaluation locations.
pub fn predict_compare(data: &BtcDataset, fits: &[ModelFit], cfg: &ExperimentConfig) -> Result<ReportBundle> {
    predict_at(data, fits, cfg, &cfg.coarse.training_locations, &cfg.coarse.evaluation_locations)
}

pub fn predict_at(
    data: &BtcDataset,
    fits: &[ModelFit],
    cfg: &ExperimentConfig,
    training: &[f64],
    evaluation: &[f64],
) -> Result<ReportBundle> {
    let meta = &data.meta;
    let Some(first) = fits.first() else {
        return Err(Error::config("no fitted models to compare"));
    };
    let steps = first.training_steps;
    for f in fits {
        if f.data_sha256 != meta.data_sha256 {
            return Err(Error::config(format!(
                "the {} fit was trained on a different dataset; rerun learn",
                f.model.as_str()
            )));
        }
        if f.training_steps != steps {
            return Err(Error::config("fits disagree on the training window"));
        }
    }
    let mut locations: Vec<(f64, Role)> = training.iter().map(|&x| (x, Role::Training)).collect();
    for &x in evaluation {
        if !training.contains(&x) {
            locations.push((x, Role::Evaluation));
        }
    }
    let xs: Vec<f64> = locations.iter().map(|l| l.0).collect();
    let reference: Vec<BreakthroughCurve> = xs.iter().map(|&x| data.curve(x).cloned()).collect::<Result<_>>()?;
    let times = data.times().to_vec();
    let initial = initial_condition(meta, cfg.learning.initial);

    let models = fits
        .par_iter()
        .map(|f| {
            let run = || -> Result<ModelCurves> {
                let sol = model_solution(&f.params, meta, &initial, &times)?;
                let curves = match &sol {
                    Some(s) => s.model_btc(&xs)?,
                    None => predict_curves(&f.params, meta, &initial, &times, &xs)?,
                };
                Ok(ModelCurves {
                    model: f.model,
                    params: f.params.clone(),
                    training_mse: f.training_mse,
                    curves,
                    msd: sol.map_or(Vec::new(), |s| s.msd()),
                })
            };
            run().map_err(|e| e.in_stage(format!("predicting with the {} model", f.model.as_str())))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut scores = Vec::new();
    for m in &models {
        for (k, &(x, role)) in locations.iter().enumerate() {
            scores.push(CurveScore {
                model: m.model,
                location: x,
                role,
                train_mse: window_mse(&reference[k], &m.curves[k], 1..steps + 1).unwrap_or(0.0),
                test_mse: window_mse(&reference[k], &m.curves[k], steps + 1..times.len()),
            });
        }
    }
    Ok(ReportBundle {
        provenance: Provenance::of(cfg),
        data_sha256: meta.data_sha256.clone(),
        tt: first.tt,
        training_steps: steps,
        times,
        training_locations: training.to_vec(),
        evaluation_locations: evaluation.iter().copied().filter(|x| !training.contains(x)).collect(),
        reference,
        models,
        scores,
        particle_msd: meta.particle_msd.clone(),
        data_msd: meta.profile_variance.clone(),
    })
}

/// Result of one sweep job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub tt: f64,
    pub location_set: usize,
    pub score: CurveScore,
    /// Fitted temporal exponent of the nonlocal model.
    pub p: Option<f64>,
}

/// Trains every configured model for each `(T_t, location set)` pair in
/// parallel and scores it at the set plus the evaluation locations.
pub fn sweep(data: &BtcDataset, cfg: &ExperimentConfig) -> Result<Vec<SweepRow>> {
    let tts = if cfg.sweep.tt.is_empty() { vec![cfg.learning.tt] } else { cfg.sweep.tt.clone() };
    let sets = if cfg.sweep.location_sets.is_empty() {
        vec![cfg.coarse.training_locations.clone()]
    } else {
        cfg.sweep.location_sets.clone()
    };
    let mut jobs = Vec::new();
    for &tt in &tts {
        for (k, set) in sets.iter().enumerate() {
            for &model in &cfg.learning.models {
                jobs.push((tt, k, set, model));
            }
        }
    }
    let rows: Vec<Vec<SweepRow>> = jobs
        .par_iter()
        .map(|&(tt, k, set, model)| {
            let job = || -> Result<Vec<SweepRow>> {
                let fit = learn_on(data, cfg, model, tt, set)?;
                let p = match &fit.params {
                    FittedParams::Nonlocal { kernel } => Some(kernel.p()),
                    _ => None,
                };
                let bundle = predict_at(data, std::slice::from_ref(&fit), cfg, set, &cfg.coarse.evaluation_locations)?;
                Ok(bundle
                    .scores
                    .into_iter()
                    .map(|score| SweepRow {
                        tt,
                        location_set: k,
                        score,
                        p,
                    })
                    .collect())
            };
            job().map_err(|e| e.in_stage(format!("sweep job (T_t = {tt}, set {k}, {})", model.as_str())))
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

pub fn sweep_table(rows: &[SweepRow], provenance: &Provenance) -> CsvTable {
    let mut t = CsvTable::new(
        provenance,
        &["tt", "location_set", "model", "location", "role", "train_mse", "test_mse", "p"],
    );
    for r in rows {
        let s = &r.score;
        let test = s.test_mse.map_or(String::new(), |v| v.to_string());
        let p = r.p.map_or(String::new(), |v| v.to_string());
        t.row(&[&r.tt, &r.location_set, &s.model.as_str(), &s.location, &s.role.as_str(), &s.train_mse, &test, &p]);
    }
    t
}
