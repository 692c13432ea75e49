//! Monte Carlo estimation of the exact-recovery probability (PER) and the
//! mean misclassification proportion (MMP).
//!
//! Every replica draws a fresh environment and trajectory, so the estimates
//! are under the joint law of graph and chain. Replica r of cell c uses
//! `derive_seed(master_seed, [c, r])`, which makes results independent of
//! scheduling and of the number of worker threads.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::{CommunityLayout, Environment};
use crate::error::{Error, Result};
use crate::estimator::{recover, score, RecoveryScore};
use crate::params::{ModelParams, SWEEPABLE};
use crate::rng::derive_seed;
use crate::simulator::{SimConfig, Simulator};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub param: String,
    pub values: Vec<f64>,
}

/// Experiment description, read from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    #[serde(default = "ModelParams::defaults")]
    pub base: ModelParams,
    pub t_grid: Vec<usize>,
    #[serde(default)]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default)]
    pub sweep: Option<Sweep>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Fixed burn-in; the per-parameter default when absent.
    #[serde(default)]
    pub burn_in: Option<usize>,
}

fn default_replicas() -> usize {
    1000
}

impl ExperimentSpec {
    pub fn single(base: ModelParams, t: usize, replicas: usize, master_seed: u64) -> Self {
        ExperimentSpec { base, t_grid: vec![t], n_grid: None, sweep: None, replicas, master_seed, burn_in: None }
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |field, reason: &str| Err(Error::InvalidParam { field, reason: reason.to_string() });
        if self.t_grid.is_empty() {
            return invalid("t_grid", "must not be empty");
        }
        if let Some(&t) = self.t_grid.iter().find(|&&t| t < 2) {
            return invalid("t_grid", &format!("T = {t} is below 2"));
        }
        if self.replicas == 0 {
            return invalid("replicas", "must be at least 1");
        }
        if let Some(grid) = &self.n_grid {
            if grid.is_empty() {
                return invalid("n_grid", "must not be empty");
            }
        }
        if let Some(sweep) = &self.sweep {
            if !SWEEPABLE.contains(&sweep.param.as_str()) {
                return Err(Error::UnknownParameter(sweep.param.clone()));
            }
            if sweep.values.is_empty() {
                return invalid("sweep", "needs at least one value");
            }
        }
        Ok(())
    }

    /// Parameter sets, in cell order before the T grid is applied.
    fn param_sets(&self) -> Result<Vec<ModelParams>> {
        let mut sets = Vec::new();
        match (&self.n_grid, &self.sweep) {
            (Some(grid), _) => {
                for &n in grid {
                    sets.push(self.base.with_n(n)?);
                }
            }
            (None, Some(sweep)) => {
                for &v in &sweep.values {
                    sets.push(self.base.with(&sweep.param, v)?);
                }
            }
            (None, None) => sets.push(self.base),
        }
        Ok(sets)
    }

    /// All (params, T) cells: outer loop over parameter sets, inner over T.
    pub fn cells(&self) -> Result<Vec<(ModelParams, usize)>> {
        self.validate()?;
        let sets = self.param_sets()?;
        Ok(sets.iter().flat_map(|p| self.t_grid.iter().map(move |&t| (*p, t))).collect())
    }
}

/// Aggregate over the replicas of one (params, T) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellResult {
    pub params: ModelParams,
    pub t: usize,
    pub burn_in: usize,
    pub replicas: usize,
    pub exact_count: usize,
    pub per_hat: f64,
    pub per_stderr: f64,
    pub mmp_hat: f64,
    pub mmp_std: f64,
    pub wall_time_s: f64,
}

impl CellResult {
    /// Aggregate replica outcomes given in replica order.
    pub fn from_outcomes(params: ModelParams, t: usize, burn_in: usize, outcomes: &[RecoveryScore], wall: f64) -> Self {
        let r = outcomes.len();
        let rf = r as f64;
        let exact_count = outcomes.iter().filter(|o| o.exact).count();
        let per_hat = exact_count as f64 / rf;
        let mmp_hat = outcomes.iter().map(|o| o.misclassified_fraction).sum::<f64>() / rf;
        let mmp_std = if r > 1 {
            (outcomes.iter().map(|o| (o.misclassified_fraction - mmp_hat).powi(2)).sum::<f64>() / (rf - 1.0)).sqrt()
        } else {
            0.0
        };
        CellResult {
            params,
            t,
            burn_in,
            replicas: r,
            exact_count,
            per_hat,
            per_stderr: (per_hat * (1.0 - per_hat) / rf).sqrt(),
            mmp_hat,
            mmp_std,
            wall_time_s: wall,
        }
    }
}

/// One replica: sample environment, simulate, estimate, score.
///
/// Degenerate σ̂ (all equal) counts as a failed recovery.
pub fn run_replica(params: &ModelParams, t: usize, burn_in: Option<usize>, replica_seed: u64) -> Result<RecoveryScore> {
    let layout = CommunityLayout::canonical(params);
    let env = Environment::sample(params, &layout, replica_seed)?;
    let mut config = SimConfig::new(t, replica_seed);
    config.burn_in = burn_in;
    let traj = Simulator::new(&env).simulate(&config);
    match recover(&traj) {
        Ok(res) => score(&res.labels_hat, &layout),
        Err(Error::Degenerate) => Ok(RecoveryScore::failed(&layout)),
        Err(e) => Err(e),
    }
}

pub fn replica_seed(master_seed: u64, cell_index: usize, replica: usize) -> u64 {
    derive_seed(master_seed, &[cell_index as u64, replica as u64])
}

/// Runs cells on a bounded worker pool.
#[derive(Debug, Clone, Copy, Default)]
pub struct Harness {
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
}

impl Harness {
    pub fn new(threads: Option<usize>) -> Self {
        Harness { threads }
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> T + Send) -> Result<T> {
        let mut builder = rayon::ThreadPoolBuilder::new();
        if let Some(k) = self.threads {
            builder = builder.num_threads(k.max(1));
        }
        let pool = builder.build().map_err(|e| Error::InvalidParam { field: "threads", reason: e.to_string() })?;
        Ok(pool.install(f))
    }

    /// Per-replica outcomes of one cell, in replica order.
    pub fn replica_outcomes(
        &self,
        params: &ModelParams,
        t: usize,
        burn_in: Option<usize>,
        replicas: usize,
        master_seed: u64,
        cell_index: usize,
    ) -> Result<Vec<RecoveryScore>> {
        self.install(|| {
            (0..replicas)
                .into_par_iter()
                .map(|r| run_replica(params, t, burn_in, replica_seed(master_seed, cell_index, r)))
                .collect::<Result<Vec<_>>>()
        })?
    }

    pub fn run_cell(
        &self,
        params: &ModelParams,
        t: usize,
        burn_in: Option<usize>,
        replicas: usize,
        master_seed: u64,
        cell_index: usize,
    ) -> Result<CellResult> {
        if replicas == 0 {
            return Err(Error::InvalidParam { field: "replicas", reason: "must be at least 1".into() });
        }
        let start = Instant::now();
        let outcomes = self.replica_outcomes(params, t, burn_in, replicas, master_seed, cell_index)?;
        let used_burn_in = burn_in.unwrap_or_else(|| params.default_burn_in());
        Ok(CellResult::from_outcomes(*params, t, used_burn_in, &outcomes, start.elapsed().as_secs_f64()))
    }

    /// Evaluate every cell of the spec.
    pub fn run(&self, spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
        spec.cells()?
            .iter()
            .enumerate()
            .map(|(k, (params, t))| self.run_cell(params, *t, spec.burn_in, spec.replicas, spec.master_seed, k))
            .collect()
    }

    /// Full (N, T) grid; requires `n_grid`.
    pub fn run_heatmap(&self, spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
        if spec.n_grid.is_none() {
            return Err(Error::InvalidParam { field: "n_grid", reason: "heatmap needs an N grid".into() });
        }
        self.run(spec)
    }

    /// One row per (sweep value, T); requires `sweep`.
    pub fn run_sweep(&self, spec: &ExperimentSpec) -> Result<Vec<CellResult>> {
        match &spec.sweep {
            None => Err(Error::InvalidParam { field: "sweep", reason: "sweep parameter missing".into() }),
            Some(_) if spec.n_grid.is_some() => {
                Err(Error::InvalidParam { field: "n_grid", reason: "use sweep param \"n\" instead".into() })
            }
            Some(_) => self.run(spec),
        }
    }
}

pub const CSV_HEADER: &str = "N,T,r_plus,beta,lambda,p,replicas,per_hat,per_stderr,mmp_hat,mmp_std,wall_time_s";

pub fn csv_row(c: &CellResult) -> String {
    let p = &c.params;
    format!(
        "{},{},{},{},{},{},{},{},{},{},{},{:.3}",
        p.n(),
        c.t,
        p.r_plus(),
        p.beta(),
        p.lambda(),
        p.p(),
        c.replicas,
        c.per_hat,
        c.per_stderr,
        c.mmp_hat,
        c.mmp_std,
        c.wall_time_s
    )
}

/// CSV with `#`-prefixed metadata lines ahead of the header.
pub fn write_csv<W: Write>(mut out: W, spec: &ExperimentSpec, cells: &[CellResult]) -> Result<()> {
    writeln!(out, "# master_seed={}", spec.master_seed)?;
    match spec.burn_in {
        Some(b) => writeln!(out, "# burn_in={b}")?,
        None => writeln!(out, "# burn_in=ceil((ln N + ln 1e6) / ln(1/(1-lambda)))")?,
    }
    writeln!(out, "# burn_in_per_cell={}", cells.iter().map(|c| c.burn_in.to_string()).collect::<Vec<_>>().join(";"))?;
    writeln!(out, "{CSV_HEADER}")?;
    for c in cells {
        writeln!(out, "{}", csv_row(c))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelParams {
        ModelParams::defaults().with_n(10).unwrap()
    }

    #[test]
    fn replica_is_deterministic() {
        let a = run_replica(&small(), 500, None, 42).unwrap();
        let b = run_replica(&small(), 500, None, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn no_edges_means_no_recovery() {
        let params = ModelParams::defaults().with("p", 0.0).unwrap();
        let exact = (0..20).filter(|&s| run_replica(&params, 2000, None, s).unwrap().exact).count();
        assert_eq!(exact, 0);
    }

    #[test]
    fn single_replica_cell() {
        let c = Harness::new(Some(1)).run_cell(&small(), 200, None, 1, 3, 0).unwrap();
        assert!(c.per_hat == 0.0 || c.per_hat == 1.0);
        assert_eq!(c.per_stderr, 0.0);
        assert_eq!(c.mmp_std, 0.0);
    }

    #[test]
    fn aggregation_formulas() {
        let ok = RecoveryScore { exact: true, misclassified_fraction: 0.0 };
        let bad = RecoveryScore { exact: false, misclassified_fraction: 0.1 };
        let c = CellResult::from_outcomes(small(), 10, 5, &[ok, ok, ok], 0.0);
        assert_eq!((c.per_hat, c.mmp_hat, c.per_stderr), (1.0, 0.0, 0.0));
        let c = CellResult::from_outcomes(small(), 10, 5, &[ok, bad, ok, bad], 0.0);
        assert_eq!(c.per_hat, 0.5);
        assert!((c.per_stderr - (0.25f64 / 4.0).sqrt()).abs() < 1e-15);
        assert!((c.mmp_hat - 0.05).abs() < 1e-15);
        assert!((c.mmp_std - (4.0 * 0.0025f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn smoke_heatmap() {
        let spec = ExperimentSpec {
            base: ModelParams::defaults(),
            t_grid: vec![100],
            n_grid: Some(vec![10]),
            sweep: None,
            replicas: 2,
            master_seed: 1,
            burn_in: None,
        };
        let cells = Harness::default().run_heatmap(&spec).unwrap();
        assert_eq!(cells.len(), 1);
        assert_eq!((cells[0].params.n(), cells[0].t), (10, 100));
        let mut out = Vec::new();
        write_csv(&mut out, &spec, &cells).unwrap();
        let text = String::from_utf8(out).unwrap();
        let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(data[0], CSV_HEADER);
        assert_eq!(data.len(), 2);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ExperimentSpec::single(small(), 100, 1, 0);
        spec.sweep = Some(Sweep { param: "gamma".into(), values: vec![0.1] });
        assert!(matches!(Harness::default().run_sweep(&spec), Err(Error::UnknownParameter(_))));
        spec.sweep = Some(Sweep { param: "lambda".into(), values: vec![1.5] });
        assert!(matches!(spec.cells(), Err(Error::InvalidParam { field: "lambda", .. })));
        let mut spec = ExperimentSpec::single(small(), 1, 1, 0);
        assert!(spec.validate().is_err());
        spec.t_grid = vec![];
        assert!(spec.validate().is_err());
        let spec = ExperimentSpec::single(small(), 10, 0, 0);
        assert!(spec.validate().is_err());
        assert!(Harness::default().run_heatmap(&ExperimentSpec::single(small(), 10, 1, 0)).is_err());
    }

    #[test]
    fn spec_json_defaults() {
        let spec =
            ExperimentSpec::from_json(r#"{"t_grid": [100, 1000], "sweep": {"param": "p", "values": [0.3, 0.7]}}"#)
                .unwrap();
        assert_eq!(spec.base, ModelParams::defaults());
        assert_eq!(spec.replicas, 1000);
        let cells = spec.cells().unwrap();
        assert_eq!(cells.len(), 4);
        assert_eq!(cells[1].0.p(), 0.3);
        assert_eq!(cells[1].1, 1000);
        assert_eq!(cells[2].0.p(), 0.7);
    }
}
