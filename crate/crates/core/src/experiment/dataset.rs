use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::FrameSource;
use super::provenance::{parse_field, read_csv, read_json, write_json, CsvTable, Provenance};
use crate::coarse::{BreakthroughCurve, EffectiveAdvection};
use crate::error::{Error, Result};
use crate::flow::MediumSpec;

pub const BTC_CSV: &str = "btc.csv";
pub const BTC_JSON: &str = "btc.json";

/// Everything about a generated dataset except the curves themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub provenance: Provenance,
    /// Hash of the config sections that determine the data.
    pub data_sha256: String,
    pub medium: MediumSpec,
    pub window: usize,
    pub dt: f64,
    pub t_end: f64,
    pub injection_cell: usize,
    pub num_particles: usize,
    pub frame: FrameSource,
    /// Speed of the moving frame the curves are recorded in.
    pub frame_speed: f64,
    pub advection: EffectiveAdvection,
    /// Least-squares slope of the particle mean position.
    pub measured_drift: f64,
    /// Log-log slope of the particle MSD.
    pub msd_slope: Option<f64>,
    pub locations: Vec<f64>,
    /// Coarse profile at `t = 0`.
    pub initial_profile: Vec<f64>,
    /// Particle MSD per snapshot.
    pub particle_msd: Vec<f64>,
    /// Variance of the coarse profile in the moving frame, per snapshot.
    pub profile_variance: Vec<f64>,
}

impl DatasetMeta {
    pub fn num_cells(&self) -> usize {
        self.medium.num_cells
    }

    pub fn cell_width(&self) -> f64 {
        self.medium.cell_width
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BtcDataset {
    pub meta: DatasetMeta,
    /// One curve per entry of `meta.locations`, same order.
    pub curves: Vec<BreakthroughCurve>,
}

impl BtcDataset {
    pub fn times(&self) -> &[f64] {
        &self.curves[0].times
    }

    pub fn curve(&self, location: f64) -> Result<&BreakthroughCurve> {
        self.curves.iter().find(|c| c.location == location).ok_or_else(|| {
            Error::config(format!(
                "no breakthrough curve at x = {location}; the dataset holds {:?}",
                self.meta.locations
            ))
        })
    }

    pub fn btc_table(&self) -> CsvTable {
        let mut table = CsvTable::new(&self.meta.provenance, &["location", "t", "value"]);
        for c in &self.curves {
            for (t, v) in c.times.iter().zip(&c.values) {
                table.row(&[&c.location, t, v]);
            }
        }
        table
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        self.btc_table().write(&dir.join(BTC_CSV))?;
        write_json(&dir.join(BTC_JSON), &self.meta)
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let meta: DatasetMeta = read_json(&dir.join(BTC_JSON))?;
        let path = dir.join(BTC_CSV);
        let (header, rows) = read_csv(&path)?;
        if header != ["location", "t", "value"] {
            return Err(Error::format(format!("{}: unexpected header {header:?}", path.display())));
        }
        let mut series: BTreeMap<u64, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
        for r in &rows {
            let x: f64 = parse_field(r, 0, &path)?;
            let entry = series.entry(x.to_bits()).or_default();
            entry.0.push(parse_field(r, 1, &path)?);
            entry.1.push(parse_field(r, 2, &path)?);
        }
        let curves = meta
            .locations
            .iter()
            .map(|&x| {
                let (t, v) = series.remove(&x.to_bits()).ok_or_else(|| {
                    Error::format(format!("{}: no rows for location {x}", path.display()))
                })?;
                BreakthroughCurve::new(x, t, v)
            })
            .collect::<Result<Vec<_>>>()?;
        if !series.is_empty() || curves.is_empty() {
            return Err(Error::format(format!("{}: locations disagree with {BTC_JSON}", path.display())));
        }
        if curves.iter().any(|c| c.times != curves[0].times) {
            return Err(Error::format(format!("{}: curves use different time grids", path.display())));
        }
        Ok(Self { meta, curves })
    }
}

/// The first `steps + 1` samples of a curve.
pub fn truncate(curve: &BreakthroughCurve, steps: usize) -> BreakthroughCurve {
    let k = (steps + 1).min(curve.times.len());
    BreakthroughCurve {
        location: curve.location,
        times: curve.times[..k].to_vec(),
        values: curve.values[..k].to_vec(),
    }
}
