//! Runs simulations in parallel. Each run draws from its own seeded streams,
//! so results do not depend on the worker count or scheduling.

use flowbandit_core::harness::{simulate_run, ExperimentConfig, RegretSeries, RunRecord};
use rayon::prelude::*;

use crate::config::{Sweep, SweepAxis, SweepPoint};
use crate::error::Result;

/// Every run of one experiment with its aggregated regret.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    /// Ordered by run index.
    pub records: Vec<RunRecord>,
    pub series: RegretSeries,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(workers).build()?)
}

/// Simulate `cfg.runs` runs on `workers` threads (0 picks the core count).
pub fn run_experiment(cfg: &ExperimentConfig, workers: usize) -> Result<Experiment> {
    cfg.validate()?;
    let records = pool(workers)?
        .install(|| (0..cfg.runs).into_par_iter().map(|r| simulate_run(cfg, r)).collect::<Result<Vec<_>, _>>())?;
    let series = RegretSeries::from_runs(cfg, &records, cfg.regret_mode)?;
    Ok(Experiment { config: cfg.clone(), records, series })
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub axis: SweepAxis,
    pub points: Vec<(SweepPoint, Experiment)>,
}

/// Run every sweep point in order, each one parallel over runs.
pub fn run_sweep(sweep: &Sweep, workers: usize) -> Result<SweepResult> {
    let points = sweep
        .points
        .iter()
        .map(|p| Ok((p.clone(), run_experiment(&p.experiment, workers)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepResult { axis: sweep.axis, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use flowbandit_core::harness::run_experiment as sequential;

    fn small() -> ExperimentConfig {
        ExperimentConfig { steps: 300, batch_size: 100, runs: 5, ..ExperimentConfig::default() }
    }

    #[test]
    fn parallel_matches_sequential() {
        let cfg = small();
        let par = run_experiment(&cfg, 3).unwrap();
        assert_eq!(par.series, sequential(&cfg).unwrap());
        assert_eq!(par.records.iter().map(|r| r.run).collect::<Vec<_>>(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn worker_count_does_not_matter() {
        let cfg = small();
        assert_eq!(run_experiment(&cfg, 1).unwrap().series, run_experiment(&cfg, 4).unwrap().series);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let cfg = ExperimentConfig { steps: 1000, batch_size: 300, ..small() };
        assert!(run_experiment(&cfg, 1).is_err());
    }
}
