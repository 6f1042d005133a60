//! Learning agents that choose a full layout per impression.
//!
//! * [`AgentKind::MdpWithBandits`]: per-page probit bandits on the short-term
//!   reward, combined by exact dynamic programming over a Thompson draw.
//! * [`AgentKind::InteractionBandits`]: per-page probit bandits on the
//!   long-term reward with previous-page features, chosen forward-greedily.
//! * [`AgentKind::IndependentBandits`]: per-page probit bandits on the
//!   long-term reward with no cross-page features.
//! * [`AgentKind::QLearning`]: tabular Q-learning with a linearly decaying
//!   ε-greedy policy; the state is the previous page's content.
//!
//! All agents buffer feedback and only learn when [`Agent::end_batch`] is
//! called, so choices within a batch use a frozen model.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::Rng;

use crate::blip::{GaussianPosterior, Observation};
use crate::error::{Error, Result};
use crate::features::{ContextSchema, ContextValue, FeatureVector, FlowShape, ModelForm, Terms};
use crate::planner::{plan_with, PlanResult};
use crate::probit::phi_cdf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum AgentKind {
    MdpWithBandits,
    InteractionBandits,
    IndependentBandits,
    QLearning,
}

impl AgentKind {
    pub const ALL: [AgentKind; 4] =
        [AgentKind::MdpWithBandits, AgentKind::InteractionBandits, AgentKind::IndependentBandits, AgentKind::QLearning];

    pub fn name(self) -> &'static str {
        match self {
            AgentKind::MdpWithBandits => "mdp_with_bandits",
            AgentKind::InteractionBandits => "interaction_bandits",
            AgentKind::IndependentBandits => "independent_bandits",
            AgentKind::QLearning => "q_learning",
        }
    }

    /// Stable small integer, used to label random streams.
    pub fn id(self) -> u64 {
        match self {
            AgentKind::MdpWithBandits => 0,
            AgentKind::InteractionBandits => 1,
            AgentKind::IndependentBandits => 2,
            AgentKind::QLearning => 3,
        }
    }

    /// Whether page models learn from the long-term reward `G_i`.
    pub fn uses_long_term_reward(self) -> bool {
        matches!(self, AgentKind::InteractionBandits | AgentKind::IndependentBandits)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument { name: "agents", reason: format!("unknown agent {s:?}") })
    }
}

/// Feedback for one presented page.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PageLabel {
    pub page: usize,
    pub prev: Option<usize>,
    pub action: usize,
    pub label: bool,
}

/// Check that `rewards` is a presented prefix: only the last entry may be a
/// success, and a prefix shorter than the flow must end in one.
fn check_prefix(pages: usize, trajectory: &[usize], rewards: &[bool]) -> Result<()> {
    if trajectory.len() != pages {
        return Err(Error::MalformedOutcome(format!("layout has {} pages, flow has {pages}", trajectory.len())));
    }
    if rewards.is_empty() || rewards.len() > pages {
        return Err(Error::MalformedOutcome(format!("{} outcomes for a {pages}-page flow", rewards.len())));
    }
    let (last, head) = rewards.split_last().expect("non-empty");
    if head.iter().any(|&r| r) {
        return Err(Error::MalformedOutcome("a success before the last presented page".into()));
    }
    if rewards.len() < pages && !last {
        return Err(Error::MalformedOutcome("presentation stopped without a success".into()));
    }
    Ok(())
}

/// Per-page training labels for a realized impression.
///
/// The MDP agent learns each page's short-term reward `R_i`; the long-term
/// bandits learn `G_i = R_i + (1 - R_i)·G_{i+1}`. Pages after the first
/// success were never shown and produce nothing.
pub fn bandit_feedback(kind: AgentKind, trajectory: &[usize], rewards: &[bool]) -> Result<Vec<PageLabel>> {
    check_prefix(trajectory.len(), trajectory, rewards)?;
    let mut labels: Vec<PageLabel> = rewards
        .iter()
        .enumerate()
        .map(|(page, &r)| PageLabel {
            page,
            prev: page.checked_sub(1).map(|p| trajectory[p]),
            action: trajectory[page],
            label: r,
        })
        .collect();
    if kind.uses_long_term_reward() {
        let mut g_next = false;
        for l in labels.iter_mut().rev() {
            l.label = l.label || g_next;
            g_next = l.label;
        }
    }
    Ok(labels)
}

/// Prior and link settings shared by the bandit agents.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BanditSettings {
    pub prior_mean: f64,
    pub prior_var: f64,
    /// Learner probit scale.
    pub beta: f64,
    /// Include context main effects on pages after the first.
    pub context_main_later: bool,
}

impl Default for BanditSettings {
    fn default() -> Self {
        Self { prior_mean: 0.0, prior_var: 1.0, beta: 1.0, context_main_later: true }
    }
}

/// A set of per-page probit bandits.
#[derive(Debug, Clone)]
pub struct BanditAgent {
    kind: AgentKind,
    shape: FlowShape,
    forms: Vec<ModelForm>,
    posteriors: Vec<GaussianPosterior>,
    pending: Vec<Vec<Observation>>,
    weights: Vec<Vec<f64>>,
}

impl BanditAgent {
    /// Standard page forms for `kind`.
    ///
    /// Agents trained on the long-term reward also get a context × action
    /// block on the first page: `G_1` inherits context-dependent action
    /// effects from later pages even though `R_1` has none.
    pub fn new(kind: AgentKind, shape: &FlowShape, context: ContextSchema, settings: BanditSettings) -> Result<Self> {
        let forms = (0..shape.pages())
            .map(|page| ModelForm::new(page, Self::standard_terms(kind, page, context, settings), shape, context))
            .collect::<Result<Vec<_>>>()?;
        Self::with_forms(kind, shape, forms, settings)
    }

    pub fn standard_terms(kind: AgentKind, page: usize, context: ContextSchema, settings: BanditSettings) -> Terms {
        let mut terms = match kind {
            AgentKind::IndependentBandits => Terms::independent(page, context, settings.context_main_later),
            _ => Terms::interaction(page, context, settings.context_main_later),
        };
        if page == 0 && kind.uses_long_term_reward() && context != ContextSchema::None {
            terms.context_by_current = true;
        }
        terms
    }

    /// Custom page forms; one per page.
    pub fn with_forms(
        kind: AgentKind,
        shape: &FlowShape,
        forms: Vec<ModelForm>,
        settings: BanditSettings,
    ) -> Result<Self> {
        if kind == AgentKind::QLearning {
            return Err(Error::InvalidArgument { name: "kind", reason: "q_learning is not a bandit agent".into() });
        }
        if forms.len() != shape.pages() {
            return Err(Error::DimensionMismatch { expected: shape.pages(), found: forms.len() });
        }
        if let Some((i, f)) =
            forms.iter().enumerate().find(|(i, f)| f.page() != *i || f.candidates() != shape.candidates(*i))
        {
            return Err(Error::InvalidForm(format!(
                "form for page {} is built for page {} with {} candidates",
                i,
                f.page(),
                f.candidates()
            )));
        }
        let posteriors = forms
            .iter()
            .map(|f| GaussianPosterior::new(f.column_count(), settings.prior_mean, settings.prior_var, settings.beta))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            kind,
            shape: shape.clone(),
            pending: vec![Vec::new(); forms.len()],
            weights: forms.iter().map(|f| Vec::with_capacity(f.column_count())).collect(),
            forms,
            posteriors,
        })
    }

    pub fn kind(&self) -> AgentKind {
        self.kind
    }

    pub fn forms(&self) -> &[ModelForm] {
        &self.forms
    }

    pub fn posteriors(&self) -> &[GaussianPosterior] {
        &self.posteriors
    }

    /// Replace the posteriors, e.g. when restoring a snapshot.
    pub fn set_posteriors(&mut self, posteriors: Vec<GaussianPosterior>) -> Result<()> {
        if posteriors.len() != self.forms.len() {
            return Err(Error::DimensionMismatch { expected: self.forms.len(), found: posteriors.len() });
        }
        for (f, p) in self.forms.iter().zip(&posteriors) {
            if f.column_count() != p.dim() {
                return Err(Error::DimensionMismatch { expected: f.column_count(), found: p.dim() });
            }
        }
        self.posteriors = posteriors;
        Ok(())
    }

    fn sample_all<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for (p, w) in self.posteriors.iter().zip(self.weights.iter_mut()) {
            p.sample_weights_into(rng, w);
        }
    }

    #[inline]
    fn predicted(&self, page: usize, ctx: &[f64], prev: Option<usize>, action: usize) -> f64 {
        let u = self.forms[page].utility(&self.weights[page], ctx, prev, action);
        phi_cdf(u / self.posteriors[page].beta())
    }

    /// Thompson draw from every page, then exact dynamic programming.
    ///
    /// Only meaningful for [`AgentKind::MdpWithBandits`], but usable with
    /// any bandit forms.
    pub fn plan<R: Rng + ?Sized>(&mut self, ctx: &[f64], rng: &mut R) -> PlanResult {
        self.sample_all(rng);
        plan_with(&self.shape, |page, prev, action| self.predicted(page, ctx, prev, action))
    }

    /// One Thompson draw per page, then page-by-page argmax of the
    /// predicted success given the already chosen previous action.
    pub fn greedy_select<R: Rng + ?Sized>(&mut self, ctx: &[f64], rng: &mut R) -> Vec<usize> {
        self.sample_all(rng);
        let mut trajectory = Vec::with_capacity(self.shape.pages());
        for page in 0..self.shape.pages() {
            let prev = page.checked_sub(1).map(|p| trajectory[p]);
            let mut best: Option<(usize, f64)> = None;
            for action in 0..self.shape.candidates(page) {
                if !self.shape.is_feasible(page, prev, action) {
                    continue;
                }
                let s = self.predicted(page, ctx, prev, action);
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((action, s));
                }
            }
            trajectory.push(best.expect("feasible set is never empty").0);
        }
        trajectory
    }

    /// Choose a layout for an encoded context.
    pub fn select<R: Rng + ?Sized>(&mut self, ctx: &[f64], rng: &mut R) -> Vec<usize> {
        match self.kind {
            AgentKind::MdpWithBandits => self.plan(ctx, rng).trajectory,
            _ => self.greedy_select(ctx, rng),
        }
    }

    /// Queue the feedback of one impression until the next batch boundary.
    pub fn record(&mut self, ctx: &[f64], trajectory: &[usize], rewards: &[bool]) -> Result<()> {
        for l in bandit_feedback(self.kind, trajectory, rewards)? {
            let form = &self.forms[l.page];
            let mut b = vec![0.0; form.column_count()];
            form.encode_into(ctx, l.prev, l.action, &mut b);
            self.pending[l.page].push(Observation::new(FeatureVector::from(b), l.label));
        }
        Ok(())
    }

    /// Apply all queued observations, page by page in arrival order.
    pub fn end_batch(&mut self) -> Result<()> {
        for (post, queue) in self.posteriors.iter_mut().zip(self.pending.iter_mut()) {
            post.update_batch(queue.iter())?;
            queue.clear();
        }
        Ok(())
    }

    pub fn pending(&self) -> usize {
        self.pending.iter().map(Vec::len).sum()
    }
}

/// Tabular Q-learning constants.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct QLearningConfig {
    pub learning_rate: f64,
    pub discount: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
}

impl Default for QLearningConfig {
    fn default() -> Self {
        Self { learning_rate: 0.05, discount: 1.0, epsilon_start: 0.05, epsilon_end: 0.01 }
    }
}

impl QLearningConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidArgument { name, reason });
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return bad("learning_rate", format!("must lie in (0, 1], got {}", self.learning_rate));
        }
        if !(0.0..=1.0).contains(&self.discount) {
            return bad("discount", format!("must lie in [0, 1], got {}", self.discount));
        }
        if !(self.epsilon_end >= 0.0 && self.epsilon_start >= self.epsilon_end && self.epsilon_start <= 1.0) {
            return bad(
                "epsilon_start",
                format!(
                    "need 1 >= epsilon_start >= epsilon_end >= 0, got {} and {}",
                    self.epsilon_start, self.epsilon_end
                ),
            );
        }
        Ok(())
    }

    /// Exploration rate for 1-based `batch` out of `total` batches: linear
    /// from `epsilon_start` at batch 2 to `epsilon_end` at the last batch.
    ///
    /// Batch 1 reports `epsilon_start`; it runs on an all-zero table, where
    /// random tie-breaking already explores uniformly. With exactly two
    /// batches the second is the last and gets `epsilon_end`.
    pub fn epsilon(&self, batch: usize, total: usize) -> f64 {
        if batch <= 1 || total <= 1 {
            return self.epsilon_start;
        }
        if batch >= total {
            return self.epsilon_end;
        }
        let frac = (batch - 2) as f64 / (total - 2) as f64;
        self.epsilon_start - (self.epsilon_start - self.epsilon_end) * frac
    }
}

/// Position within the experiment, 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchClock {
    pub batch: usize,
    pub total: usize,
}

/// Tabular Q-learner over states (page, previous content, context category).
#[derive(Debug, Clone)]
pub struct QLearner {
    cfg: QLearningConfig,
    shape: FlowShape,
    categories: usize,
    /// `table[page][(prev_slot * categories + category) * N_page + action]`
    table: Vec<Vec<f64>>,
    pending: Vec<(usize, Vec<usize>, Vec<bool>)>,
}

impl QLearner {
    pub fn new(cfg: QLearningConfig, shape: &FlowShape, context: ContextSchema) -> Result<Self> {
        cfg.validate()?;
        let categories = match context {
            ContextSchema::None => 1,
            ContextSchema::Categorical(k) => k,
            ContextSchema::Numeric(_) => {
                return Err(Error::InvalidArgument {
                    name: "context",
                    reason: "tabular Q-learning needs a categorical or empty context".into(),
                })
            }
        };
        let table = (0..shape.pages())
            .map(|page| {
                let slots = if page == 0 { 1 } else { shape.candidates(page - 1) };
                vec![0.0; slots * categories * shape.candidates(page)]
            })
            .collect();
        Ok(Self { cfg, shape: shape.clone(), categories, table, pending: Vec::new() })
    }

    pub fn config(&self) -> &QLearningConfig {
        &self.cfg
    }

    pub fn table(&self) -> &[Vec<f64>] {
        &self.table
    }

    #[inline]
    fn index(&self, page: usize, prev: Option<usize>, category: usize, action: usize) -> usize {
        (prev.unwrap_or(0) * self.categories + category) * self.shape.candidates(page) + action
    }

    pub fn q(&self, page: usize, prev: Option<usize>, category: usize, action: usize) -> f64 {
        self.table[page][self.index(page, prev, category, action)]
    }

    pub fn set_q(&mut self, page: usize, prev: Option<usize>, category: usize, action: usize, value: f64) {
        let i = self.index(page, prev, category, action);
        self.table[page][i] = value;
    }

    fn max_q(&self, page: usize, prev: Option<usize>, category: usize) -> f64 {
        (0..self.shape.candidates(page))
            .filter(|&a| self.shape.is_feasible(page, prev, a))
            .map(|a| self.q(page, prev, category, a))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// ε-greedy layout. Greedy ties break uniformly at random in the first
    /// batch and by lowest index afterwards.
    pub fn select<R: Rng + ?Sized>(&self, clock: BatchClock, category: usize, rng: &mut R) -> Vec<usize> {
        let eps = self.cfg.epsilon(clock.batch, clock.total);
        let random_ties = clock.batch <= 1;
        let mut trajectory = Vec::with_capacity(self.shape.pages());
        let mut feasible = Vec::new();
        for page in 0..self.shape.pages() {
            let prev = page.checked_sub(1).map(|p| trajectory[p]);
            feasible.clear();
            feasible.extend((0..self.shape.candidates(page)).filter(|&a| self.shape.is_feasible(page, prev, a)));
            let action = if eps > 0.0 && rng.random::<f64>() < eps {
                feasible[rng.random_range(0..feasible.len())]
            } else {
                let best = self.max_q(page, prev, category);
                if random_ties {
                    let ties: Vec<usize> =
                        feasible.iter().copied().filter(|&a| self.q(page, prev, category, a) == best).collect();
                    ties[rng.random_range(0..ties.len())]
                } else {
                    feasible
                        .iter()
                        .copied()
                        .find(|&a| self.q(page, prev, category, a) == best)
                        .expect("max is attained")
                }
            };
            trajectory.push(action);
        }
        trajectory
    }

    /// Bellman updates along the presented prefix, in page order.
    pub fn update(&mut self, category: usize, trajectory: &[usize], rewards: &[bool]) -> Result<()> {
        check_prefix(self.shape.pages(), trajectory, rewards)?;
        let last = self.shape.pages() - 1;
        for (page, &r) in rewards.iter().enumerate() {
            let prev = page.checked_sub(1).map(|p| trajectory[p]);
            let action = trajectory[page];
            let reward = if r { 1.0 } else { 0.0 };
            let future =
                if r || page == last { 0.0 } else { self.cfg.discount * self.max_q(page + 1, Some(action), category) };
            let i = self.index(page, prev, category, action);
            let q = &mut self.table[page][i];
            *q += self.cfg.learning_rate * (reward + future - *q);
        }
        Ok(())
    }

    pub fn record(&mut self, category: usize, trajectory: &[usize], rewards: &[bool]) -> Result<()> {
        check_prefix(self.shape.pages(), trajectory, rewards)?;
        self.pending.push((category, trajectory.to_vec(), rewards.to_vec()));
        Ok(())
    }

    pub fn end_batch(&mut self) -> Result<()> {
        let pending = core::mem::take(&mut self.pending);
        for (c, t, r) in &pending {
            self.update(*c, t, r)?;
        }
        Ok(())
    }
}

/// Any of the four agents behind one interface.
#[derive(Debug, Clone)]
pub enum Agent {
    Bandit(BanditAgent),
    Q(QLearner),
}

impl Agent {
    pub fn new(
        kind: AgentKind,
        shape: &FlowShape,
        context: ContextSchema,
        bandit: BanditSettings,
        q: QLearningConfig,
    ) -> Result<Self> {
        match kind {
            AgentKind::QLearning => Ok(Agent::Q(QLearner::new(q, shape, context)?)),
            _ => Ok(Agent::Bandit(BanditAgent::new(kind, shape, context, bandit)?)),
        }
    }

    pub fn kind(&self) -> AgentKind {
        match self {
            Agent::Bandit(b) => b.kind(),
            Agent::Q(_) => AgentKind::QLearning,
        }
    }

    pub fn select<R: Rng + ?Sized>(
        &mut self,
        clock: BatchClock,
        context: &ContextValue,
        ctx: &[f64],
        rng: &mut R,
    ) -> Vec<usize> {
        match self {
            Agent::Bandit(b) => b.select(ctx, rng),
            Agent::Q(q) => q.select(clock, category(context), rng),
        }
    }

    pub fn record(
        &mut self,
        context: &ContextValue,
        ctx: &[f64],
        trajectory: &[usize],
        rewards: &[bool],
    ) -> Result<()> {
        match self {
            Agent::Bandit(b) => b.record(ctx, trajectory, rewards),
            Agent::Q(q) => q.record(category(context), trajectory, rewards),
        }
    }

    pub fn end_batch(&mut self) -> Result<()> {
        match self {
            Agent::Bandit(b) => b.end_batch(),
            Agent::Q(q) => q.end_batch(),
        }
    }
}

fn category(context: &ContextValue) -> usize {
    match context {
        ContextValue::Category(c) => *c,
        _ => 0,
    }
}
