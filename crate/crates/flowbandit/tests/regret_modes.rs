use flowbandit::core::harness::{ExperimentConfig, RegretMode};
use flowbandit::runner::run_experiment;

/// Realized and expected regret differ only by outcome noise.
#[test]
fn realized_regret_tracks_expected_regret() {
    let cfg = ExperimentConfig { runs: 30, ..ExperimentConfig::default() };
    let exp = run_experiment(&cfg, 0).unwrap();
    let impressions = cfg.steps as f64;
    for a in 0..cfg.agents.len() {
        let gap: f64 = exp
            .records
            .iter()
            .map(|r| {
                let realized = r.cumulative(a, RegretMode::Realized, cfg.batch_size);
                let expected = r.cumulative(a, RegretMode::Expected, cfg.batch_size);
                realized.last().unwrap() - expected.last().unwrap()
            })
            .sum::<f64>()
            / cfg.runs as f64;
        // Bernoulli variance is at most 1/4 per impression.
        let se = (impressions * 0.25).sqrt() / cfg.batch_size as f64 / (cfg.runs as f64).sqrt();
        assert!(gap.abs() <= 3.0 * se, "{}: gap {gap} > 3 × {se}", cfg.agents[a]);
    }
}

#[test]
fn expected_regret_is_nondecreasing() {
    let cfg = ExperimentConfig { runs: 3, regret_mode: RegretMode::Expected, ..ExperimentConfig::default() };
    let exp = run_experiment(&cfg, 0).unwrap();
    for curves in &exp.series.per_run {
        for c in curves {
            assert!(c.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
    }
}
