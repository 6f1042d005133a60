//! Simulated linear flow with probit page outcomes.
//!
//! Each page has a ground-truth utility built from one-hot content and context
//! encodings:
//!
//! ```text
//! page 1: w⁰ + α₁·(w¹_a + Σ w¹_x x)
//! page i: w⁰ + α₁·(w¹_a + Σ w¹_x x) + α_c·w^c_prev + α₂·(w²_{a,prev} + Σ w²_{a,x} x)
//! ```
//!
//! and succeeds with probability `Φ(utility/β)`, `β = 1 + α₁ + α_c + α₂`. All
//! raw weights are standard normal except the intercept, whose mean is
//! `Φ⁻¹(base_rate)·β`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::features::{ContextSchema, ContextValue, FlowShape};
use crate::probit::{phi_cdf, phi_inv};

/// Largest trajectory space [`GroundTruth::oracle_best`] will enumerate.
pub const ENUMERATION_LIMIT: u128 = 1_000_000;

/// Importance multipliers of the generator's term groups.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Alphas {
    /// Current content and context main effects.
    pub alpha1: f64,
    /// Previous page's content.
    pub alpha_c: f64,
    /// Current × previous content and current × context interactions.
    pub alpha2: f64,
}

impl Alphas {
    pub fn new(alpha1: f64, alpha_c: f64, alpha2: f64) -> Self {
        Self { alpha1, alpha_c, alpha2 }
    }

    /// Generator probit scale `1 + α₁ + α_c + α₂`.
    pub fn beta(&self) -> f64 {
        1.0 + self.alpha1 + self.alpha_c + self.alpha2
    }
}

/// Raw standard-normal draws of one page, before the α multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct PageWeights {
    pub intercept: f64,
    /// `[action]`
    pub action: Vec<f64>,
    /// `[context]`
    pub context: Vec<f64>,
    /// `[prev]`, empty on the first page.
    pub previous: Vec<f64>,
    /// `[action * n_prev + prev]`, empty on the first page.
    pub action_by_previous: Vec<f64>,
    /// `[action * k + context]`, empty on the first page.
    pub action_by_context: Vec<f64>,
}

/// Sampled ground truth for one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    shape: FlowShape,
    context: ContextSchema,
    alphas: Alphas,
    beta: f64,
    base_rate: f64,
    pages: Vec<PageWeights>,
}

/// Where a customer is in the flow.
#[derive(Debug, Clone, PartialEq)]
pub enum FlowState {
    Start(ContextValue),
    /// About to see page `page` (zero-based, `page >= 1`) after `prev`.
    AtPage {
        page: usize,
        context: ContextValue,
        prev: usize,
    },
    /// Accepted the offer: success.
    Exit,
    /// Saw every page without accepting.
    End,
}

impl FlowState {
    pub fn is_terminal(&self) -> bool {
        matches!(self, FlowState::Exit | FlowState::End)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Terminal {
    Exit,
    End,
}

/// Probabilities of the two possible moves after showing a page.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    /// Move on to the next page (or [`FlowState::End`] from the last page).
    pub advance: f64,
    /// Leave with a success.
    pub exit: f64,
}

/// Result of pushing one customer through a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// `(page, action)` for every page actually shown.
    pub presented: Vec<(usize, usize)>,
    /// Short-term reward of every presented page.
    pub rewards: Vec<bool>,
    /// Realized long-term reward.
    pub g: bool,
    pub terminal: Terminal,
}

/// One labelled ground-truth weight, for audit dumps.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub page: usize,
    pub term: String,
    pub raw: f64,
    pub multiplier: f64,
}

impl GroundTruth {
    /// Draw fresh ground-truth weights.
    pub fn sample<R: Rng + ?Sized>(
        shape: &FlowShape,
        context: ContextSchema,
        alphas: Alphas,
        base_rate: f64,
        rng: &mut R,
    ) -> Result<Self> {
        context.validate()?;
        let beta = alphas.beta();
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument {
                name: "alphas",
                reason: format!("generator scale 1 + α₁ + α_c + α₂ must be positive, got {beta}"),
            });
        }
        let intercept_mean = phi_inv(base_rate).map_err(|_| Error::InvalidArgument {
            name: "base_rate",
            reason: format!("must lie in (0, 1), got {base_rate}"),
        })? * beta;

        let k = context.dim();
        let mut normal = |n: usize| -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut *rng)).collect() };
        let mut pages = Vec::with_capacity(shape.pages());
        for page in 0..shape.pages() {
            let n = shape.candidates(page);
            let n_prev = if page == 0 { 0 } else { shape.candidates(page - 1) };
            let intercept = intercept_mean + normal(1)[0];
            let action = normal(n);
            let context_w = normal(k);
            let (previous, action_by_previous, action_by_context) = if page == 0 {
                (Vec::new(), Vec::new(), Vec::new())
            } else {
                (normal(n_prev), normal(n * n_prev), normal(n * k))
            };
            pages.push(PageWeights {
                intercept,
                action,
                context: context_w,
                previous,
                action_by_previous,
                action_by_context,
            });
        }
        Ok(Self { shape: shape.clone(), context, alphas, beta, base_rate, pages })
    }

    /// Assemble ground truth from explicit weights.
    pub fn from_weights(
        shape: &FlowShape,
        context: ContextSchema,
        alphas: Alphas,
        base_rate: f64,
        pages: Vec<PageWeights>,
    ) -> Result<Self> {
        context.validate()?;
        if pages.len() != shape.pages() {
            return Err(Error::DimensionMismatch { expected: shape.pages(), found: pages.len() });
        }
        let k = context.dim();
        for (i, p) in pages.iter().enumerate() {
            let n = shape.candidates(i);
            let n_prev = if i == 0 { 0 } else { shape.candidates(i - 1) };
            let expected = [n, k, n_prev, n * n_prev, if i == 0 { 0 } else { n * k }];
            let found = [
                p.action.len(),
                p.context.len(),
                p.previous.len(),
                p.action_by_previous.len(),
                p.action_by_context.len(),
            ];
            if let Some((e, f)) = expected.iter().zip(&found).find(|(e, f)| e != f) {
                return Err(Error::DimensionMismatch { expected: *e, found: *f });
            }
        }
        Ok(Self { shape: shape.clone(), context, alphas, beta: alphas.beta(), base_rate, pages })
    }

    pub fn shape(&self) -> &FlowShape {
        &self.shape
    }

    pub fn context_schema(&self) -> ContextSchema {
        self.context
    }

    pub fn alphas(&self) -> Alphas {
        self.alphas
    }

    /// Generator probit scale.
    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn base_rate(&self) -> f64 {
        self.base_rate
    }

    pub fn pages(&self) -> &[PageWeights] {
        &self.pages
    }

    /// Mean of the intercept draws, `Φ⁻¹(base_rate)·β`.
    pub fn intercept_mean(&self) -> f64 {
        phi_inv(self.base_rate).expect("validated at construction") * self.beta
    }

    /// Page utility for an encoded context.
    #[inline]
    pub fn utility(&self, page: usize, ctx: &[f64], prev: Option<usize>, action: usize) -> f64 {
        let w = &self.pages[page];
        let a = &self.alphas;
        let context_main: f64 = w.context.iter().zip(ctx).map(|(w, x)| w * x).sum();
        let mut u = w.intercept + a.alpha1 * (w.action[action] + context_main);
        if let Some(p) = prev {
            let n_prev = w.previous.len();
            let k = ctx.len();
            let by_ctx: f64 =
                w.action_by_context[action * k..(action + 1) * k].iter().zip(ctx).map(|(w, x)| w * x).sum();
            u += a.alpha_c * w.previous[p] + a.alpha2 * (w.action_by_previous[action * n_prev + p] + by_ctx);
        }
        u
    }

    /// `Φ(utility/β)` for an encoded context, without argument checks.
    #[inline]
    pub fn success(&self, page: usize, ctx: &[f64], prev: Option<usize>, action: usize) -> f64 {
        phi_cdf(self.utility(page, ctx, prev, action) / self.beta)
    }

    fn check(&self, page: usize, prev: Option<usize>, action: usize) -> Result<()> {
        if page >= self.shape.pages() {
            return Err(Error::InvalidArgument { name: "page", reason: format!("page {page} does not exist") });
        }
        let n = self.shape.candidates(page);
        if action >= n {
            return Err(Error::ActionOutOfRange { page, action, count: n });
        }
        match (page, prev) {
            (0, None) => Ok(()),
            (0, Some(_)) | (_, None) => Err(Error::InvalidArgument {
                name: "prev_action",
                reason: format!("a previous action is required exactly on pages after the first (page {page})"),
            }),
            (_, Some(p)) if p >= self.shape.candidates(page - 1) => {
                Err(Error::ActionOutOfRange { page: page - 1, action: p, count: self.shape.candidates(page - 1) })
            }
            (_, Some(p)) if !self.shape.is_feasible(page, Some(p), action) => {
                Err(Error::InfeasibleAction { page, prev: p, action })
            }
            _ => Ok(()),
        }
    }

    fn check_trajectory(&self, trajectory: &[usize]) -> Result<()> {
        if trajectory.len() != self.shape.pages() {
            return Err(Error::DimensionMismatch { expected: self.shape.pages(), found: trajectory.len() });
        }
        for (page, &a) in trajectory.iter().enumerate() {
            self.check(page, page.checked_sub(1).map(|p| trajectory[p]), a)?;
        }
        Ok(())
    }

    /// Success probability of `action` on `page` after `prev`.
    pub fn success_prob(&self, page: usize, context: &ContextValue, prev: Option<usize>, action: usize) -> Result<f64> {
        self.check(page, prev, action)?;
        let ctx = self.context.encode(context)?;
        Ok(self.success(page, &ctx, prev, action))
    }

    /// Move probabilities after showing `action` on `page`.
    pub fn transition(
        &self,
        page: usize,
        context: &ContextValue,
        prev: Option<usize>,
        action: usize,
    ) -> Result<Transition> {
        self.check(page, prev, action)?;
        let ctx = self.context.encode(context)?;
        let t = self.utility(page, &ctx, prev, action) / self.beta;
        Ok(Transition { advance: phi_cdf(-t), exit: phi_cdf(t) })
    }

    /// `E[G] = R₁ + (1 - R₁)R₂ + … + Π_{i<D}(1 - R_i)R_D` for an encoded
    /// context, without argument checks.
    pub fn expected_g_encoded(&self, ctx: &[f64], trajectory: &[usize]) -> f64 {
        let mut survive = 1.0;
        let mut g = 0.0;
        for (page, &a) in trajectory.iter().enumerate() {
            let r = self.success(page, ctx, page.checked_sub(1).map(|p| trajectory[p]), a);
            g += survive * r;
            survive *= 1.0 - r;
        }
        g
    }

    /// Expected long-term reward of a full layout.
    pub fn expected_g(&self, context: &ContextValue, trajectory: &[usize]) -> Result<f64> {
        self.check_trajectory(trajectory)?;
        let ctx = self.context.encode(context)?;
        Ok(self.expected_g_encoded(&ctx, trajectory))
    }

    /// Best layout for `context` by exhaustive enumeration. Ties go to the
    /// lexicographically smallest layout.
    pub fn oracle_best(&self, context: &ContextValue) -> Result<(Vec<usize>, f64)> {
        let combinations = self.shape.combinations();
        if combinations > ENUMERATION_LIMIT {
            return Err(Error::EnumerationLimit { combinations, limit: ENUMERATION_LIMIT });
        }
        let ctx = self.context.encode(context)?;
        let pages = self.shape.pages();
        let mut current = vec![0usize; pages];
        let mut best: Option<(Vec<usize>, f64)> = None;
        loop {
            if self.shape.is_feasible_trajectory(&current) {
                let v = self.expected_g_encoded(&ctx, &current);
                if best.as_ref().is_none_or(|(_, b)| v > *b) {
                    best = Some((current.clone(), v));
                }
            }
            // odometer, last page fastest
            let mut i = pages;
            loop {
                if i == 0 {
                    return Ok(best.expect("at least one feasible layout exists"));
                }
                i -= 1;
                current[i] += 1;
                if current[i] < self.shape.candidates(i) {
                    break;
                }
                current[i] = 0;
            }
        }
    }

    /// Show the layout page by page, drawing `R_i ~ Bernoulli(success)`, and
    /// stop at the first success.
    pub fn realize<R: Rng + ?Sized>(
        &self,
        context: &ContextValue,
        trajectory: &[usize],
        rng: &mut R,
    ) -> Result<StepOutcome> {
        self.check_trajectory(trajectory)?;
        let ctx = self.context.encode(context)?;
        Ok(self.realize_encoded(&ctx, trajectory, rng))
    }

    /// [`realize`](Self::realize) for an encoded context, without argument checks.
    pub fn realize_encoded<R: Rng + ?Sized>(&self, ctx: &[f64], trajectory: &[usize], rng: &mut R) -> StepOutcome {
        let mut presented = Vec::with_capacity(trajectory.len());
        let mut rewards = Vec::with_capacity(trajectory.len());
        for (page, &a) in trajectory.iter().enumerate() {
            let p = self.success(page, ctx, page.checked_sub(1).map(|q| trajectory[q]), a);
            let r = rng.random::<f64>() < p;
            presented.push((page, a));
            rewards.push(r);
            if r {
                return StepOutcome { presented, rewards, g: true, terminal: Terminal::Exit };
            }
        }
        StepOutcome { presented, rewards, g: false, terminal: Terminal::End }
    }

    /// Advance one step of the flow given the realized outcome `success`.
    pub fn step(&self, state: &FlowState, action: usize, success: bool) -> FlowState {
        let (page, context) = match state {
            FlowState::Start(c) => (0, c),
            FlowState::AtPage { page, context, .. } => (*page, context),
            terminal => return terminal.clone(),
        };
        if success {
            FlowState::Exit
        } else if page + 1 == self.shape.pages() {
            FlowState::End
        } else {
            FlowState::AtPage { page: page + 1, context: context.clone(), prev: action }
        }
    }

    /// Every raw weight with its multiplier, in sampling order.
    pub fn weight_rows(&self) -> Vec<WeightRow> {
        let a = self.alphas;
        let mut rows = Vec::new();
        for (page, w) in self.pages.iter().enumerate() {
            let mut push =
                |term: String, raw: f64, multiplier: f64| rows.push(WeightRow { page, term, raw, multiplier });
            push("intercept".into(), w.intercept, 1.0);
            for (i, &x) in w.action.iter().enumerate() {
                push(format!("a_{}", i + 1), x, a.alpha1);
            }
            for (i, &x) in w.context.iter().enumerate() {
                push(format!("x_{}", i + 1), x, a.alpha1);
            }
            for (i, &x) in w.previous.iter().enumerate() {
                push(format!("prev_{}", i + 1), x, a.alpha_c);
            }
            let n_prev = w.previous.len();
            for (i, &x) in w.action_by_previous.iter().enumerate() {
                push(format!("a_{}:prev_{}", i / n_prev + 1, i % n_prev + 1), x, a.alpha2);
            }
            let k = self.context.dim();
            for (i, &x) in w.action_by_context.iter().enumerate() {
                push(format!("a_{}:x_{}", i / k + 1, i % k + 1), x, a.alpha2);
            }
        }
        rows
    }
}
