//! Parameter grids and the sweep runner.

use serde::{Deserialize, Serialize};

use crate::bite::BiteTransferParams;
use crate::par::Exec;
use crate::harness::config::Scene;
use crate::harness::run::{run_bite_transfer, MetricWindow, RunOutput, RunRecord, TrajectoryPoint};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum SweepError {
    #[error("invalid range {name}: {reason}")]
    Range { name: &'static str, reason: String },
    #[error("empty grid")]
    Empty,
    #[error("thread pool: {0}")]
    Pool(String),
}

/// Inclusive `start..=stop` in increments of `step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl GridRange {
    pub fn new(start: f64, stop: f64, step: f64) -> Self {
        Self { start, stop, step }
    }

    pub fn single(v: f64) -> Self {
        Self::new(v, v, 1.0)
    }

    pub fn validate(&self, name: &'static str) -> Result<(), SweepError> {
        let bad = |r: &str| Err(SweepError::Range { name, reason: r.into() });
        if ![self.start, self.stop, self.step].iter().all(|x| x.is_finite()) {
            return bad("non-finite bound");
        }
        if self.step <= 0.0 {
            return bad("step must be positive");
        }
        if self.stop < self.start {
            return bad("stop below start");
        }
        let n = (self.stop - self.start) / self.step;
        if (n - n.round()).abs() > 1e-9 {
            return bad("step does not divide the range");
        }
        Ok(())
    }

    /// Grid values, snapped to 1e-12 so decimal steps print exactly.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step).round() as usize;
        (0..=n)
            .map(|i| {
                let v = self.start + i as f64 * self.step;
                (v * 1e12).round() / 1e12
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepPhase {
    Entry,
    Exit,
}

impl SweepPhase {
    pub fn label(self) -> &'static str {
        match self {
            SweepPhase::Entry => "entry",
            SweepPhase::Exit => "exit",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub phase: SweepPhase,
    pub alpha: GridRange,
    pub depth: GridRange,
    pub beta: GridRange,
    pub exit_depth: GridRange,
    /// Speeds, durations and the approach distance.
    pub base: BiteTransferParams,
    pub window: MetricWindow,
}

impl SweepSpec {
    /// 80..110 deg by 10 and 50..100 mm by 10, exiting straight out.
    pub fn entry(base: &BiteTransferParams) -> Self {
        Self {
            phase: SweepPhase::Entry,
            alpha: GridRange::new(80.0, 110.0, 10.0),
            depth: GridRange::new(0.05, 0.10, 0.01),
            beta: GridRange::single(base.exit_angle_deg),
            exit_depth: GridRange::single(0.0),
            base: *base,
            window: MetricWindow::EntryAndClose,
        }
    }

    /// 80..120 deg by 10 and 0..40 mm by 10, with the entry held at
    /// `base`'s angle and depth.
    pub fn exit(base: &BiteTransferParams) -> Self {
        Self {
            phase: SweepPhase::Exit,
            alpha: GridRange::single(base.entry_angle_deg),
            depth: GridRange::single(base.insertion_depth_m),
            beta: GridRange::new(80.0, 120.0, 10.0),
            exit_depth: GridRange::new(0.0, 0.04, 0.01),
            base: *base,
            window: MetricWindow::ExitOnly,
        }
    }

    pub fn validate(&self) -> Result<(), SweepError> {
        self.alpha.validate("alpha")?;
        self.depth.validate("depth")?;
        self.beta.validate("beta")?;
        self.exit_depth.validate("exit_depth")?;
        Ok(())
    }

    /// Grid points in output order. The entry grid varies depth fastest;
    /// its exit is straight out (beta = alpha, e = 0). The exit grid
    /// varies exit depth fastest.
    pub fn grid(&self) -> Vec<TrajectoryPoint> {
        let mut out = Vec::new();
        match self.phase {
            SweepPhase::Entry => {
                for &a in &self.alpha.values() {
                    for &d in &self.depth.values() {
                        out.push(TrajectoryPoint {
                            alpha_deg: a,
                            depth_m: d,
                            beta_deg: a,
                            exit_depth_m: 0.0,
                        });
                    }
                }
            }
            SweepPhase::Exit => {
                for &a in &self.alpha.values() {
                    for &d in &self.depth.values() {
                        for &b in &self.beta.values() {
                            for &e in &self.exit_depth.values() {
                                out.push(TrajectoryPoint {
                                    alpha_deg: a,
                                    depth_m: d,
                                    beta_deg: b,
                                    exit_depth_m: e,
                                });
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Runs every grid point. Results come back in grid order whatever the
/// number of worker threads (`None` uses the global pool). Work is spread
/// across runs, so each run's inner loops execute sequentially.
pub fn run_sweep(scene: &Scene, spec: &SweepSpec, threads: Option<usize>) -> Result<Vec<RunOutput>, SweepError> {
    spec.validate()?;
    let mut inner = scene.clone();
    inner.config.solver.exec = Exec::Sequential;
    let scene = &inner;
    let grid = spec.grid();
    if grid.is_empty() {
        return Err(SweepError::Empty);
    }
    let one = |p: &TrajectoryPoint| {
        let params = p.apply(&spec.base);
        match params.validate() {
            Ok(()) => run_bite_transfer(scene, &params, spec.window),
            Err(e) => RunOutput {
                record: RunRecord::invalid(*p, e.to_string()),
                trace: crate::contact::accumulate_metrics(&[], scene.config.solver.dt),
                rows: Vec::new(),
                schedule: None,
            },
        }
    };
    dispatch(&grid, threads, one)
}

#[cfg(feature = "parallel")]
fn dispatch<F>(grid: &[TrajectoryPoint], threads: Option<usize>, one: F) -> Result<Vec<RunOutput>, SweepError>
where
    F: Fn(&TrajectoryPoint) -> RunOutput + Sync,
{
    use rayon::prelude::*;
    let run = || grid.par_iter().map(&one).collect();
    match threads {
        None => Ok(run()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| SweepError::Pool(e.to_string()))?;
            Ok(pool.install(run))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn dispatch<F>(grid: &[TrajectoryPoint], _threads: Option<usize>, one: F) -> Result<Vec<RunOutput>, SweepError>
where
    F: Fn(&TrajectoryPoint) -> RunOutput + Sync,
{
    Ok(grid.iter().map(one).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        let base = BiteTransferParams::default();
        assert_eq!(SweepSpec::entry(&base).grid().len(), 24);
        assert_eq!(SweepSpec::exit(&base).grid().len(), 25);
    }

    #[test]
    fn decimal_values_are_exact() {
        let v = GridRange::new(0.05, 0.10, 0.01).values();
        assert_eq!(v, vec![0.05, 0.06, 0.07, 0.08, 0.09, 0.1]);
        let e = GridRange::new(0.0, 0.04, 0.01).values();
        assert_eq!(e, vec![0.0, 0.01, 0.02, 0.03, 0.04]);
    }

    #[test]
    fn entry_grid_exits_straight() {
        let g = SweepSpec::entry(&BiteTransferParams::default()).grid();
        assert!(g.iter().all(|p| p.beta_deg == p.alpha_deg && p.exit_depth_m == 0.0));
        assert_eq!((g[1].alpha_deg, g[1].depth_m), (80.0, 0.06));
    }

    #[test]
    fn bad_ranges() {
        assert!(GridRange::new(0.0, 1.0, 0.0).validate("x").is_err());
        assert!(GridRange::new(1.0, 0.0, 0.1).validate("x").is_err());
        assert!(GridRange::new(0.0, 1.0, 0.3).validate("x").is_err());
        assert!(GridRange::single(3.0).validate("x").is_ok());
    }
}
