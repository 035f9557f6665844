use super::{ParticleEnsemble, Status};
use crate::error::{Error, Result};

/// Per-snapshot moments of the streamwise coordinate over particles still
/// inside the domain (active or stagnant).
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementStats {
    pub times: Vec<f64>,
    pub mean_x: Vec<f64>,
    /// `<x^2> - <x>^2`.
    pub msd: Vec<f64>,
    pub n_active: Vec<usize>,
    pub n_exited: Vec<usize>,
    pub n_stagnant: Vec<usize>,
}

#[derive(Debug, Clone, Copy, Default)]
struct Moments {
    n: usize,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(&mut self, other: &Moments) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n = self.n + other.n;
        let d = other.mean - self.mean;
        self.mean += d * other.n as f64 / n as f64;
        self.m2 += other.m2 + d * d * (self.n as f64 * other.n as f64) / n as f64;
        self.n = n;
    }
}

/// Chunk-wise accumulation; merging is done in chunk order so results do not
/// depend on thread scheduling.
#[derive(Debug, Clone)]
pub struct DisplacementAccumulator {
    times: Vec<f64>,
    moments: Vec<Moments>,
    active: Vec<usize>,
    exited: Vec<usize>,
    stagnant: Vec<usize>,
}

impl DisplacementAccumulator {
    pub fn new(times: Vec<f64>) -> Self {
        let n = times.len();
        Self {
            times,
            moments: vec![Moments::default(); n],
            active: vec![0; n],
            exited: vec![0; n],
            stagnant: vec![0; n],
        }
    }

    pub fn add(&mut self, ensemble: &ParticleEnsemble) -> Result<()> {
        if ensemble.snapshot_times != self.times {
            return Err(Error::config("ensemble snapshot times do not match the accumulator"));
        }
        for s in 0..ensemble.num_snapshots() {
            let mut m = Moments::default();
            for p in 0..ensemble.num_particles() {
                match ensemble.status(s, p) {
                    Status::Exited => self.exited[s] += 1,
                    st => {
                        if st == Status::Active {
                            self.active[s] += 1;
                        } else {
                            self.stagnant[s] += 1;
                        }
                        m.push(ensemble.x[[s, p]]);
                    }
                }
            }
            self.moments[s].merge(&m);
        }
        Ok(())
    }

    pub fn finish(self) -> DisplacementStats {
        let mean_x = self
            .moments
            .iter()
            .map(|m| if m.n > 0 { m.mean } else { f64::NAN })
            .collect();
        let msd = self
            .moments
            .iter()
            .map(|m| if m.n > 0 { (m.m2 / m.n as f64).max(0.0) } else { f64::NAN })
            .collect();
        DisplacementStats {
            times: self.times,
            mean_x,
            msd,
            n_active: self.active,
            n_exited: self.exited,
            n_stagnant: self.stagnant,
        }
    }
}

pub fn displacement_stats(ensemble: &ParticleEnsemble) -> DisplacementStats {
    let mut acc = DisplacementAccumulator::new(ensemble.snapshot_times.clone());
    acc.add(ensemble).expect("times taken from the ensemble itself");
    acc.finish()
}

/// Least-squares slope of `ln y` against `ln t` over points with `t, y > 0`.
pub fn loglog_slope(t: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t
        .iter()
        .zip(y)
        .filter(|(t, y)| **t > 0.0 && **y > 0.0 && y.is_finite())
        .map(|(t, y)| (t.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}
