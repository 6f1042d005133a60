//! Single-run experiment loop and batch-normalized cumulative regret.
//!
//! For run `j` and impression `k`, the regret contribution is
//! `E[G | W, a*] - G_{j,k}`, where the first term is the oracle's best
//! expected long-term reward for the impression's context. Contributions are
//! summed per update batch, divided by the batch size, accumulated, and
//! finally averaged over runs.
//!
//! Randomness is split into labelled streams per run (ground truth, contexts,
//! and per agent: choices and reward draws), so adding or removing an agent
//! never changes what another agent sees.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{Agent, AgentKind, BanditAgent, BanditSettings, BatchClock, QLearningConfig};
use crate::error::{Error, Result};
use crate::features::{ContextSchema, ContextValue, FlowShape, ModelForm, Terms};
use crate::sim::{Alphas, GroundTruth};

const STREAM_GROUND_TRUTH: u64 = 1;
const STREAM_CONTEXT: u64 = 2;
const STREAM_AGENT_BASE: u64 = 16;

/// Which long-term reward enters the regret.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum RegretMode {
    /// The sampled `G` of each impression.
    #[default]
    Realized,
    /// `E[G]` of the chosen layout under the ground truth.
    Expected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub shape: FlowShape,
    pub context: ContextSchema,
    pub alphas: Alphas,
    pub base_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub runs: usize,
    pub agents: Vec<AgentKind>,
    pub bandit: BanditSettings,
    pub q_learning: QLearningConfig,
    pub seed: u64,
    pub regret_mode: RegretMode,
    /// Per-page terms replacing an agent's standard forms.
    pub forms: Vec<(AgentKind, Vec<Terms>)>,
}

impl Default for ExperimentConfig {
    /// Three pages with three candidates each, `α = (1, 1, 2)`, 14 batches of
    /// 1000 impressions, 100 runs, all four agents.
    fn default() -> Self {
        Self {
            shape: FlowShape::uniform(3, 3).expect("valid shape"),
            context: ContextSchema::None,
            alphas: Alphas::new(1.0, 1.0, 2.0),
            base_rate: 0.1,
            steps: 14_000,
            batch_size: 1_000,
            runs: 100,
            agents: AgentKind::ALL.to_vec(),
            bandit: BanditSettings::default(),
            q_learning: QLearningConfig::default(),
            seed: 0,
            regret_mode: RegretMode::Realized,
            forms: Vec::new(),
        }
    }
}

fn invalid(name: &'static str, reason: alloc::string::String) -> Error {
    Error::InvalidArgument { name, reason }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(invalid("batch_size", "must be at least 1".into()));
        }
        if self.steps == 0 || !self.steps.is_multiple_of(self.batch_size) {
            return Err(invalid(
                "steps",
                format!("must be a positive multiple of batch_size ({}), got {}", self.batch_size, self.steps),
            ));
        }
        if self.runs == 0 {
            return Err(invalid("runs", "must be at least 1".into()));
        }
        if self.agents.is_empty() {
            return Err(invalid("agents", "list at least one agent".into()));
        }
        let mut seen = self.agents.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.agents.len() {
            return Err(invalid("agents", "duplicate agent".into()));
        }
        if !(self.base_rate > 0.0 && self.base_rate < 1.0) {
            return Err(invalid("base_rate", format!("must lie in (0, 1), got {}", self.base_rate)));
        }
        for (name, a) in
            [("alpha1", self.alphas.alpha1), ("alpha_c", self.alphas.alpha_c), ("alpha2", self.alphas.alpha2)]
        {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(invalid(name, format!("must be finite and non-negative, got {a}")));
            }
        }
        if let ContextSchema::Numeric(_) = self.context {
            return Err(invalid("context", "simulations support `none` or `categorical:k`".into()));
        }
        self.context.validate()?;
        let combos = self.shape.combinations();
        if combos > crate::sim::ENUMERATION_LIMIT {
            return Err(invalid("candidates", format!("{combos} layouts exceed the oracle's enumeration limit")));
        }
        for (kind, terms) in &self.forms {
            if *kind == AgentKind::QLearning {
                return Err(invalid("forms", "q_learning has no model forms".into()));
            }
            if terms.len() != self.shape.pages() {
                return Err(invalid(
                    "forms",
                    format!("{kind} needs one form per page ({}), got {}", self.shape.pages(), terms.len()),
                ));
            }
        }
        // Builds every agent once so form and prior errors surface here.
        for &kind in &self.agents {
            self.build_agent(kind)?;
        }
        Ok(())
    }

    /// A fresh agent with the configured forms and priors.
    pub fn build_agent(&self, kind: AgentKind) -> Result<Agent> {
        match self.forms.iter().find(|(k, _)| *k == kind) {
            Some((_, terms)) => {
                let forms = terms
                    .iter()
                    .enumerate()
                    .map(|(page, t)| ModelForm::new(page, *t, &self.shape, self.context))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Agent::Bandit(BanditAgent::with_forms(kind, &self.shape, forms, self.bandit)?))
            }
            None => Agent::new(kind, &self.shape, self.context, self.bandit, self.q_learning),
        }
    }

    pub fn batches(&self) -> usize {
        self.steps / self.batch_size
    }
}

/// Deterministic generator for `(seed, run, stream)`.
pub fn stream_rng(seed: u64, run: u64, stream: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&run.to_le_bytes());
    key[16..24].copy_from_slice(&stream.to_le_bytes());
    key[24..].copy_from_slice(b"flowband");
    ChaCha8Rng::from_seed(key)
}

/// Draw the context of one impression.
pub fn sample_context<R: Rng + ?Sized>(schema: ContextSchema, rng: &mut R) -> ContextValue {
    match schema {
        ContextSchema::Categorical(k) => ContextValue::Category(rng.random_range(0..k)),
        _ => ContextValue::None,
    }
}

/// Per-agent outcome of one run.
#[derive(Debug, Clone)]
pub struct AgentRun {
    pub kind: AgentKind,
    /// Batch sums of `oracle - realized G`.
    pub realized: Vec<f64>,
    /// Batch sums of `oracle - E[G | chosen layout]`.
    pub expected: Vec<f64>,
    /// Agent state after the last batch.
    pub agent: Agent,
}

/// Everything one simulation run produced.
#[derive(Debug, Clone)]
pub struct RunRecord {
    pub run: usize,
    pub ground_truth: GroundTruth,
    /// Best layout and its expected reward per context category (one entry
    /// without context).
    pub oracle: Vec<(Vec<usize>, f64)>,
    pub agents: Vec<AgentRun>,
}

impl RunRecord {
    /// Batch-normalized cumulative regret of one agent.
    pub fn cumulative(&self, agent: usize, mode: RegretMode, batch_size: usize) -> Vec<f64> {
        let sums = match mode {
            RegretMode::Realized => &self.agents[agent].realized,
            RegretMode::Expected => &self.agents[agent].expected,
        };
        cumulate(sums, batch_size)
    }
}

fn cumulate(batch_sums: &[f64], batch_size: usize) -> Vec<f64> {
    batch_sums
        .iter()
        .scan(0.0, |acc, s| {
            *acc += s / batch_size as f64;
            Some(*acc)
        })
        .collect()
}

/// Batch-normalized cumulative regret of one run from per-impression records.
pub fn regret(batch_size: usize, oracle: &[f64], g: &[f64]) -> Result<Vec<f64>> {
    if oracle.len() != g.len() {
        return Err(Error::DimensionMismatch { expected: oracle.len(), found: g.len() });
    }
    if batch_size == 0 || !oracle.len().is_multiple_of(batch_size) {
        return Err(invalid(
            "batch_size",
            format!("{} records do not split into batches of {batch_size}", oracle.len()),
        ));
    }
    let sums: Vec<f64> = oracle
        .chunks(batch_size)
        .zip(g.chunks(batch_size))
        .map(|(o, g)| o.iter().zip(g).map(|(o, g)| o - g).sum())
        .collect();
    Ok(cumulate(&sums, batch_size))
}

/// Simulate one run of every configured agent.
pub fn simulate_run(cfg: &ExperimentConfig, run: usize) -> Result<RunRecord> {
    let r = run as u64;
    let mut gt_rng = stream_rng(cfg.seed, r, STREAM_GROUND_TRUTH);
    let gt = GroundTruth::sample(&cfg.shape, cfg.context, cfg.alphas, cfg.base_rate, &mut gt_rng)?;

    let contexts: Vec<ContextValue> = match cfg.context {
        ContextSchema::Categorical(k) => (0..k).map(ContextValue::Category).collect(),
        _ => vec![ContextValue::None],
    };
    let oracle = contexts.iter().map(|c| gt.oracle_best(c)).collect::<Result<Vec<_>>>()?;
    let encoded = contexts.iter().map(|c| cfg.context.encode(c)).collect::<Result<Vec<_>>>()?;

    struct Lane {
        agent: Agent,
        choose: ChaCha8Rng,
        reward: ChaCha8Rng,
        realized: Vec<f64>,
        expected: Vec<f64>,
    }
    let mut lanes = cfg
        .agents
        .iter()
        .map(|&kind| {
            Ok(Lane {
                agent: cfg.build_agent(kind)?,
                choose: stream_rng(cfg.seed, r, STREAM_AGENT_BASE + 2 * kind.id()),
                reward: stream_rng(cfg.seed, r, STREAM_AGENT_BASE + 2 * kind.id() + 1),
                realized: Vec::with_capacity(cfg.batches()),
                expected: Vec::with_capacity(cfg.batches()),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut ctx_rng = stream_rng(cfg.seed, r, STREAM_CONTEXT);
    let total = cfg.batches();
    for batch in 1..=total {
        let clock = BatchClock { batch, total };
        for lane in lanes.iter_mut() {
            lane.realized.push(0.0);
            lane.expected.push(0.0);
        }
        for _ in 0..cfg.batch_size {
            let context = sample_context(cfg.context, &mut ctx_rng);
            let slot = match context {
                ContextValue::Category(c) => c,
                _ => 0,
            };
            let ctx = &encoded[slot];
            let best = oracle[slot].1;
            for lane in lanes.iter_mut() {
                let layout = lane.agent.select(clock, &context, ctx, &mut lane.choose);
                let outcome = gt.realize_encoded(ctx, &layout, &mut lane.reward);
                let g = if outcome.g { 1.0 } else { 0.0 };
                *lane.realized.last_mut().expect("pushed") += best - g;
                *lane.expected.last_mut().expect("pushed") += best - gt.expected_g_encoded(ctx, &layout);
                lane.agent.record(&context, ctx, &layout, &outcome.rewards)?;
            }
        }
        for lane in lanes.iter_mut() {
            lane.agent.end_batch()?;
        }
    }

    Ok(RunRecord {
        run,
        ground_truth: gt,
        oracle,
        agents: lanes
            .into_iter()
            .map(|l| AgentRun { kind: l.agent.kind(), realized: l.realized, expected: l.expected, agent: l.agent })
            .collect(),
    })
}

/// Cumulative regret curves of every agent across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretSeries {
    pub agents: Vec<AgentKind>,
    pub batch_size: usize,
    /// `per_run[agent][run][batch]`
    pub per_run: Vec<Vec<Vec<f64>>>,
    /// `mean[agent][batch]`
    pub mean: Vec<Vec<f64>>,
    /// Standard error of the mean, `stderr[agent][batch]`.
    pub stderr: Vec<Vec<f64>>,
}

impl RegretSeries {
    /// Aggregate raw per-run curves. Every curve must have the same length.
    pub fn from_curves(agents: Vec<AgentKind>, batch_size: usize, per_run: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        if per_run.len() != agents.len() {
            return Err(Error::DimensionMismatch { expected: agents.len(), found: per_run.len() });
        }
        let batches = per_run.first().and_then(|r| r.first()).map_or(0, Vec::len);
        for curves in &per_run {
            if curves.is_empty() {
                return Err(invalid("runs", "an agent has no runs".into()));
            }
            if let Some(c) = curves.iter().find(|c| c.len() != batches) {
                return Err(Error::DimensionMismatch { expected: batches, found: c.len() });
            }
        }
        let mut mean = Vec::with_capacity(agents.len());
        let mut stderr = Vec::with_capacity(agents.len());
        for curves in &per_run {
            let n = curves.len() as f64;
            let m: Vec<f64> = (0..batches).map(|b| curves.iter().map(|c| c[b]).sum::<f64>() / n).collect();
            let s: Vec<f64> = (0..batches)
                .map(|b| {
                    if curves.len() < 2 {
                        return 0.0;
                    }
                    let ss: f64 = curves.iter().map(|c| (c[b] - m[b]) * (c[b] - m[b])).sum();
                    libm::sqrt(ss / (n - 1.0) / n)
                })
                .collect();
            mean.push(m);
            stderr.push(s);
        }
        Ok(Self { agents, batch_size, per_run, mean, stderr })
    }

    /// Aggregate simulated runs under `mode`.
    pub fn from_runs(cfg: &ExperimentConfig, runs: &[RunRecord], mode: RegretMode) -> Result<Self> {
        let per_run = (0..cfg.agents.len())
            .map(|a| runs.iter().map(|r| r.cumulative(a, mode, cfg.batch_size)).collect())
            .collect();
        Self::from_curves(cfg.agents.clone(), cfg.batch_size, per_run)
    }

    pub fn batches(&self) -> usize {
        self.mean.first().map_or(0, Vec::len)
    }

    pub fn runs(&self) -> usize {
        self.per_run.first().map_or(0, Vec::len)
    }

    pub fn index_of(&self, kind: AgentKind) -> Option<usize> {
        self.agents.iter().position(|&k| k == kind)
    }

    /// Mean and standard error of the final cumulative regret.
    pub fn final_regret(&self, kind: AgentKind) -> Option<(f64, f64)> {
        let a = self.index_of(kind)?;
        Some((*self.mean[a].last()?, *self.stderr[a].last()?))
    }
}

/// Run every simulation sequentially and aggregate under the configured mode.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RegretSeries> {
    cfg.validate()?;
    let runs = (0..cfg.runs).map(|r| simulate_run(cfg, r)).collect::<Result<Vec<_>>>()?;
    RegretSeries::from_runs(cfg, &runs, cfg.regret_mode)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig { steps: 200, batch_size: 50, runs: 2, ..ExperimentConfig::default() }
    }

    #[test]
    fn regret_arithmetic() {
        let oracle = vec![0.9; 1000];
        let g: Vec<f64> = (0..1000).map(|i| if i < 900 { 1.0 } else { 0.0 }).collect();
        assert!(regret(1000, &oracle, &g).unwrap()[0].abs() < 1e-12);
        let zeros = vec![0.0; 1000];
        assert!((regret(1000, &vec![0.8; 1000], &zeros).unwrap()[0] - 0.8).abs() < 1e-12);
        assert!(regret(300, &oracle, &g).is_err());
        assert!(regret(1000, &oracle, &g[..999]).is_err());

        let s =
            RegretSeries::from_curves(vec![AgentKind::MdpWithBandits], 1000, vec![vec![vec![0.8], vec![0.4]]]).unwrap();
        assert!((s.mean[0][0] - 0.6).abs() < 1e-15);
        assert!((s.stderr[0][0] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ragged_curves_are_rejected() {
        let r = RegretSeries::from_curves(vec![AgentKind::QLearning], 1, vec![vec![vec![0.1, 0.2], vec![0.3]]]);
        assert!(r.is_err());
    }

    #[test]
    fn validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = |f: fn(&mut ExperimentConfig)| {
            let mut c = ExperimentConfig::default();
            f(&mut c);
            c.validate().unwrap_err()
        };
        assert!(matches!(
            bad(|c| {
                c.steps = 1000;
                c.batch_size = 300
            }),
            Error::InvalidArgument { name: "steps", .. }
        ));
        assert!(matches!(bad(|c| c.runs = 0), Error::InvalidArgument { name: "runs", .. }));
        assert!(matches!(bad(|c| c.agents.clear()), Error::InvalidArgument { name: "agents", .. }));
        assert!(matches!(bad(|c| c.base_rate = 1.0), Error::InvalidArgument { name: "base_rate", .. }));
        assert!(matches!(bad(|c| c.alphas.alpha2 = -1.0), Error::InvalidArgument { name: "alpha2", .. }));
        assert!(matches!(bad(|c| c.agents.push(AgentKind::QLearning)), Error::InvalidArgument { name: "agents", .. }));
        assert!(matches!(
            bad(|c| c.forms.push((AgentKind::QLearning, Vec::new()))),
            Error::InvalidArgument { name: "forms", .. }
        ));
        assert!(matches!(
            bad(|c| c
                .forms
                .push((AgentKind::MdpWithBandits, vec![Terms { previous_action: true, ..Terms::default() }; 3]))),
            Error::InvalidForm(_)
        ));
    }

    #[test]
    fn form_overrides_replace_standard_forms() {
        let flat = Terms { current_action: true, ..Terms::default() };
        let cfg = ExperimentConfig { forms: vec![(AgentKind::MdpWithBandits, vec![flat; 3])], ..small() };
        match cfg.build_agent(AgentKind::MdpWithBandits).unwrap() {
            Agent::Bandit(b) => assert!(b.forms().iter().all(|f| f.column_count() == 4)),
            Agent::Q(_) => unreachable!(),
        }
    }

    #[test]
    fn series_shape_and_determinism() {
        let cfg = small();
        let a = run_experiment(&cfg).unwrap();
        assert_eq!(a.batches(), 4);
        assert_eq!(a.runs(), 2);
        assert_eq!(a.agents.len(), 4);
        assert_ne!(a.per_run[0][0], a.per_run[0][1]);
        assert_eq!(a, run_experiment(&cfg).unwrap());

        let only = ExperimentConfig { agents: vec![AgentKind::MdpWithBandits], ..small() };
        assert_eq!(run_experiment(&only).unwrap().agents, vec![AgentKind::MdpWithBandits]);
    }

    #[test]
    fn agent_streams_are_isolated() {
        let all = simulate_run(&small(), 0).unwrap();
        let one =
            simulate_run(&ExperimentConfig { agents: vec![AgentKind::IndependentBandits], ..small() }, 0).unwrap();
        assert_eq!(all.agents[2].realized, one.agents[0].realized);
        assert_eq!(all.ground_truth, one.ground_truth);
    }

    #[test]
    fn expected_mode_is_nondecreasing() {
        let cfg = ExperimentConfig { context: ContextSchema::Categorical(3), ..small() };
        let rec = simulate_run(&cfg, 1).unwrap();
        for a in 0..cfg.agents.len() {
            assert!(rec.agents[a].expected.iter().all(|&s| s >= -1e-9));
            let c = rec.cumulative(a, RegretMode::Expected, cfg.batch_size);
            assert!(c.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }
        assert_eq!(rec.oracle.len(), 3);
    }
}
