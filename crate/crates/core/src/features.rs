//! Design vectors for the per-page probit models.
//!
//! A [`ModelForm`] fixes which blocks of columns a page model uses. Columns are
//! laid out in a fixed block order so that weight vectors and posterior
//! snapshots stay portable:
//!
//! 1. intercept
//! 2. current action indicators
//! 3. context main effects
//! 4. context × current action (context-major)
//! 5. previous action indicators
//! 6. previous × current action (previous-major), skipping incompatible pairs
//!
//! Action indices are zero-based everywhere in this crate.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::error::{Error, Result};

/// Number of pages and candidates per page, plus the content pairs that may
/// not be shown on consecutive pages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlowShape {
    candidates: Vec<usize>,
    /// `incompatible[i]` holds `(prev, cur)` pairs for page `i`; always empty for page 0.
    incompatible: Vec<BTreeSet<(usize, usize)>>,
}

impl FlowShape {
    pub fn new(candidates: Vec<usize>) -> Result<Self> {
        if candidates.is_empty() {
            return Err(Error::InvalidArgument { name: "pages", reason: "a flow needs at least one page".into() });
        }
        if let Some(page) = candidates.iter().position(|&n| n == 0) {
            return Err(Error::InvalidArgument {
                name: "candidates",
                reason: format!("page {page} has no candidates"),
            });
        }
        let incompatible = vec![BTreeSet::new(); candidates.len()];
        Ok(Self { candidates, incompatible })
    }

    /// `pages` pages with `n` candidates each.
    pub fn uniform(pages: usize, n: usize) -> Result<Self> {
        Self::new(vec![n; pages])
    }

    /// Forbid showing `cur` on `page` right after `prev` on `page - 1`.
    ///
    /// Fails if a pair is out of range, targets the first page, or leaves
    /// some previous action without any feasible successor.
    pub fn with_incompatible(mut self, page: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        if page == 0 || page >= self.pages() {
            return Err(Error::InvalidArgument {
                name: "incompatible",
                reason: format!("page {page} has no previous page in a {}-page flow", self.pages()),
            });
        }
        let (n_prev, n_cur) = (self.candidates[page - 1], self.candidates[page]);
        for (prev, cur) in pairs {
            if prev >= n_prev || cur >= n_cur {
                return Err(Error::InvalidArgument {
                    name: "incompatible",
                    reason: format!("pair ({prev}, {cur}) out of range on page {page}"),
                });
            }
            self.incompatible[page].insert((prev, cur));
        }
        for prev in 0..n_prev {
            if (0..n_cur).all(|cur| self.incompatible[page].contains(&(prev, cur))) {
                return Err(Error::EmptyFeasibleSet { page, prev });
            }
        }
        Ok(self)
    }

    pub fn pages(&self) -> usize {
        self.candidates.len()
    }

    pub fn candidates(&self, page: usize) -> usize {
        self.candidates[page]
    }

    pub fn all_candidates(&self) -> &[usize] {
        &self.candidates
    }

    pub fn incompatible(&self, page: usize) -> &BTreeSet<(usize, usize)> {
        &self.incompatible[page]
    }

    #[inline]
    pub fn is_feasible(&self, page: usize, prev: Option<usize>, cur: usize) -> bool {
        match prev {
            Some(p) => !self.incompatible[page].contains(&(p, cur)),
            None => true,
        }
    }

    /// Current-page actions allowed after `prev`.
    pub fn feasible_actions(&self, page: usize, prev: Option<usize>) -> Vec<usize> {
        (0..self.candidates[page]).filter(|&a| self.is_feasible(page, prev, a)).collect()
    }

    /// Whether consecutive entries of `trajectory` are all compatible.
    pub fn is_feasible_trajectory(&self, trajectory: &[usize]) -> bool {
        trajectory.len() == self.pages()
            && trajectory.iter().enumerate().all(|(i, &a)| {
                a < self.candidates[i] && self.is_feasible(i, i.checked_sub(1).map(|p| trajectory[p]), a)
            })
    }

    /// `Π N_i`, saturating.
    pub fn combinations(&self) -> u128 {
        self.candidates.iter().fold(1u128, |acc, &n| acc.saturating_mul(n as u128))
    }
}

/// How the customer context is represented.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ContextSchema {
    #[default]
    None,
    /// One categorical feature with `k >= 2` levels, fully one-hot encoded.
    Categorical(usize),
    /// Numeric features passed through as-is.
    Numeric(usize),
}

/// A realized context.
#[derive(Debug, Clone, PartialEq)]
pub enum ContextValue {
    None,
    Category(usize),
    Numeric(Vec<f64>),
}

impl ContextSchema {
    /// Length of the encoded context.
    pub fn dim(&self) -> usize {
        match *self {
            ContextSchema::None => 0,
            ContextSchema::Categorical(k) | ContextSchema::Numeric(k) => k,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            ContextSchema::Categorical(k) if k < 2 => Err(Error::InvalidArgument {
                name: "context",
                reason: format!("a categorical context needs at least 2 categories, got {k}"),
            }),
            ContextSchema::Numeric(0) => Err(Error::InvalidArgument {
                name: "context",
                reason: "a numeric context needs at least one feature".into(),
            }),
            _ => Ok(()),
        }
    }

    pub fn encode(&self, value: &ContextValue) -> Result<Vec<f64>> {
        match (*self, value) {
            (ContextSchema::None, ContextValue::None) => Ok(Vec::new()),
            (ContextSchema::Categorical(k), ContextValue::Category(c)) => {
                if *c >= k {
                    return Err(Error::InvalidArgument {
                        name: "context",
                        reason: format!("category {c} out of range for {k} categories"),
                    });
                }
                let mut v = vec![0.0; k];
                v[*c] = 1.0;
                Ok(v)
            }
            (ContextSchema::Numeric(k), ContextValue::Numeric(x)) => {
                if x.len() != k {
                    return Err(Error::DimensionMismatch { expected: k, found: x.len() });
                }
                Ok(x.clone())
            }
            _ => Err(Error::InvalidArgument {
                name: "context",
                reason: format!("value {value:?} does not match schema {self:?}"),
            }),
        }
    }
}

/// The blocks a page model may include. The intercept is always present.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Terms {
    pub current_action: bool,
    pub context_main: bool,
    pub context_by_current: bool,
    pub previous_action: bool,
    pub previous_by_current: bool,
}

/// Which reward a formula's left-hand side names.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Response {
    /// `R`: the page's own outcome.
    ShortTerm,
    /// `G`: success on this page or any later one.
    LongTerm,
}

impl Terms {
    /// `a_i + a_prev + a_prev:a_i`, with the contextual additions when a
    /// context is configured. On the first page only `a_i` (and `x`) remain.
    pub fn interaction(page: usize, ctx: ContextSchema, context_main_later: bool) -> Self {
        let has_ctx = ctx != ContextSchema::None;
        if page == 0 {
            return Terms { current_action: true, context_main: has_ctx, ..Terms::default() };
        }
        Terms {
            current_action: true,
            context_main: has_ctx && context_main_later,
            context_by_current: has_ctx,
            previous_action: true,
            previous_by_current: true,
        }
    }

    /// `a_i` alone, with the same contextual additions as [`Terms::interaction`].
    pub fn independent(page: usize, ctx: ContextSchema, context_main_later: bool) -> Self {
        Terms { previous_action: false, previous_by_current: false, ..Self::interaction(page, ctx, context_main_later) }
    }

    /// Parse a compact formula such as `"R ~ a_i + a_prev + a_prev:a_i"`.
    ///
    /// Recognized right-hand terms: `1`, `a_i`, `a_prev`, `x`, `x:a_i` and
    /// `a_prev:a_i` (interaction operands in either order). The left-hand side
    /// is `R` or `G`.
    pub fn parse(formula: &str) -> Result<(Response, Terms)> {
        let (lhs, rhs) =
            formula.split_once('~').ok_or_else(|| Error::InvalidForm(format!("missing `~` in {formula:?}")))?;
        let response = match lhs.trim() {
            "R" | "R_i" => Response::ShortTerm,
            "G" | "G_i" => Response::LongTerm,
            other => return Err(Error::InvalidForm(format!("left-hand side must be R or G, got {other:?}"))),
        };
        let mut terms = Terms::default();
        for raw in rhs.split('+') {
            let term = raw.trim();
            let mut parts: Vec<&str> = term.split(':').map(str::trim).collect();
            parts.sort_unstable();
            let slot = match parts.as_slice() {
                ["1"] => continue,
                ["a_i"] => &mut terms.current_action,
                ["x"] => &mut terms.context_main,
                ["a_i", "x"] => &mut terms.context_by_current,
                ["a_prev"] => &mut terms.previous_action,
                ["a_i", "a_prev"] => &mut terms.previous_by_current,
                _ => return Err(Error::InvalidForm(format!("unknown term {term:?}"))),
            };
            if *slot {
                return Err(Error::InvalidForm(format!("duplicate term {term:?}")));
            }
            *slot = true;
        }
        Ok((response, terms))
    }
}

impl fmt::Display for Terms {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("1")?;
        for (on, name) in [
            (self.current_action, "a_i"),
            (self.context_main, "x"),
            (self.context_by_current, "x:a_i"),
            (self.previous_action, "a_prev"),
            (self.previous_by_current, "a_prev:a_i"),
        ] {
            if on {
                write!(f, " + {name}")?;
            }
        }
        Ok(())
    }
}

/// Label of one design column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    Intercept,
    Current(usize),
    Context(usize),
    ContextByCurrent { context: usize, action: usize },
    Previous(usize),
    PreviousByCurrent { prev: usize, action: usize },
}

/// Dense design vector `B` for one (context, previous action, action) triple.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for FeatureVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// The column layout of one page model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelForm {
    page: usize,
    terms: Terms,
    context: ContextSchema,
    n_cur: usize,
    n_prev: usize,
    incompatible: BTreeSet<(usize, usize)>,
    layout: Vec<Column>,
    off_current: usize,
    off_context: usize,
    off_context_current: usize,
    off_previous: usize,
    /// Column of each `(prev, cur)` interaction, `n_prev * n_cur` entries.
    prev_cur_column: Vec<Option<usize>>,
}

impl ModelForm {
    pub fn new(page: usize, terms: Terms, shape: &FlowShape, context: ContextSchema) -> Result<Self> {
        if page >= shape.pages() {
            return Err(Error::InvalidForm(format!("page {page} does not exist in a {}-page flow", shape.pages())));
        }
        context.validate()?;
        if page == 0 && (terms.previous_action || terms.previous_by_current) {
            return Err(Error::InvalidForm("the first page has no previous action to model".into()));
        }
        if context == ContextSchema::None && (terms.context_main || terms.context_by_current) {
            return Err(Error::InvalidForm("context terms need a configured context".into()));
        }
        let n_cur = shape.candidates(page);
        let n_prev = if page == 0 { 0 } else { shape.candidates(page - 1) };
        let incompatible = shape.incompatible(page).clone();
        let k = context.dim();

        let mut layout = vec![Column::Intercept];
        let off_current = layout.len();
        if terms.current_action {
            layout.extend((0..n_cur).map(Column::Current));
        }
        let off_context = layout.len();
        if terms.context_main {
            layout.extend((0..k).map(Column::Context));
        }
        let off_context_current = layout.len();
        if terms.context_by_current {
            for c in 0..k {
                layout.extend((0..n_cur).map(|a| Column::ContextByCurrent { context: c, action: a }));
            }
        }
        let off_previous = layout.len();
        if terms.previous_action {
            layout.extend((0..n_prev).map(Column::Previous));
        }
        let mut prev_cur_column = vec![None; n_prev * n_cur];
        if terms.previous_by_current {
            for prev in 0..n_prev {
                for action in 0..n_cur {
                    if !incompatible.contains(&(prev, action)) {
                        prev_cur_column[prev * n_cur + action] = Some(layout.len());
                        layout.push(Column::PreviousByCurrent { prev, action });
                    }
                }
            }
        }
        Ok(Self {
            page,
            terms,
            context,
            n_cur,
            n_prev,
            incompatible,
            layout,
            off_current,
            off_context,
            off_context_current,
            off_previous,
            prev_cur_column,
        })
    }

    /// Build from a formula string; see [`Terms::parse`].
    pub fn parse(formula: &str, page: usize, shape: &FlowShape, context: ContextSchema) -> Result<(Response, Self)> {
        let (response, terms) = Terms::parse(formula)?;
        Ok((response, Self::new(page, terms, shape, context)?))
    }

    pub fn page(&self) -> usize {
        self.page
    }

    pub fn terms(&self) -> Terms {
        self.terms
    }

    pub fn context(&self) -> ContextSchema {
        self.context
    }

    pub fn candidates(&self) -> usize {
        self.n_cur
    }

    pub fn layout(&self) -> &[Column] {
        &self.layout
    }

    pub fn column_count(&self) -> usize {
        self.layout.len()
    }

    pub fn incompatible(&self) -> &BTreeSet<(usize, usize)> {
        &self.incompatible
    }

    /// Current-page actions allowed after `prev`.
    pub fn feasible_actions(&self, prev: Option<usize>) -> Vec<usize> {
        (0..self.n_cur).filter(|&a| prev.is_none_or(|p| !self.incompatible.contains(&(p, a)))).collect()
    }

    fn check(&self, prev: Option<usize>, action: usize) -> Result<()> {
        if action >= self.n_cur {
            return Err(Error::ActionOutOfRange { page: self.page, action, count: self.n_cur });
        }
        match (self.page, prev) {
            (0, None) => Ok(()),
            (0, Some(_)) => Err(Error::InvalidArgument {
                name: "prev_action",
                reason: "the first page has no previous action".into(),
            }),
            (_, None) => Err(Error::InvalidArgument {
                name: "prev_action",
                reason: format!("page {} needs the previous action", self.page),
            }),
            (page, Some(p)) if p >= self.n_prev => {
                Err(Error::ActionOutOfRange { page: page - 1, action: p, count: self.n_prev })
            }
            (page, Some(p)) if self.incompatible.contains(&(p, action)) => {
                Err(Error::InfeasibleAction { page, prev: p, action })
            }
            _ => Ok(()),
        }
    }

    /// Encode a (context, previous action, action) triple.
    pub fn encode(&self, context: &ContextValue, prev: Option<usize>, action: usize) -> Result<FeatureVector> {
        self.check(prev, action)?;
        let ctx = self.context.encode(context)?;
        let mut out = vec![0.0; self.column_count()];
        self.encode_into(&ctx, prev, action, &mut out);
        Ok(FeatureVector(out))
    }

    /// Unchecked encoding into a preallocated buffer of length
    /// [`column_count`](Self::column_count), given the encoded context.
    pub fn encode_into(&self, ctx: &[f64], prev: Option<usize>, action: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.column_count());
        out.fill(0.0);
        out[0] = 1.0;
        if self.terms.current_action {
            out[self.off_current + action] = 1.0;
        }
        if self.terms.context_main {
            out[self.off_context..self.off_context + ctx.len()].copy_from_slice(ctx);
        }
        if self.terms.context_by_current {
            for (c, &x) in ctx.iter().enumerate() {
                out[self.off_context_current + c * self.n_cur + action] = x;
            }
        }
        if let Some(p) = prev {
            if self.terms.previous_action {
                out[self.off_previous + p] = 1.0;
            }
            if let Some(col) = self.prev_cur_column.get(p * self.n_cur + action).copied().flatten() {
                out[col] = 1.0;
            }
        }
    }

    /// Sparse dot product `wᵀB` without materializing `B`.
    #[inline]
    pub fn utility(&self, weights: &[f64], ctx: &[f64], prev: Option<usize>, action: usize) -> f64 {
        let mut u = weights[0];
        if self.terms.current_action {
            u += weights[self.off_current + action];
        }
        if self.terms.context_main {
            u += ctx.iter().zip(&weights[self.off_context..]).map(|(x, w)| x * w).sum::<f64>();
        }
        if self.terms.context_by_current {
            for (c, &x) in ctx.iter().enumerate() {
                u += x * weights[self.off_context_current + c * self.n_cur + action];
            }
        }
        if let Some(p) = prev {
            if self.terms.previous_action {
                u += weights[self.off_previous + p];
            }
            if let Some(col) = self.prev_cur_column.get(p * self.n_cur + action).copied().flatten() {
                u += weights[col];
            }
        }
        u
    }

    /// Human-readable label for a column.
    pub fn column_name(&self, col: usize) -> String {
        match self.layout[col] {
            Column::Intercept => "1".into(),
            Column::Current(a) => format!("a_{}", a + 1),
            Column::Context(c) => format!("x_{}", c + 1),
            Column::ContextByCurrent { context, action } => format!("x_{}:a_{}", context + 1, action + 1),
            Column::Previous(p) => format!("prev_{}", p + 1),
            Column::PreviousByCurrent { prev, action } => format!("prev_{}:a_{}", prev + 1, action + 1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// One numeric context feature, two previous and three current
    /// candidates, and the pair (prev 0, cur 2) forbidden.
    fn incompatibility_example() -> (FlowShape, ModelForm) {
        let shape = FlowShape::new(vec![2, 3]).unwrap().with_incompatible(1, [(0, 2)]).unwrap();
        let terms = Terms { context_by_current: true, previous_by_current: true, ..Terms::default() };
        let form = ModelForm::new(1, terms, &shape, ContextSchema::Numeric(1)).unwrap();
        (shape, form)
    }

    #[test]
    fn incompatibility_example_layout() {
        let (_, form) = incompatibility_example();
        assert_eq!(form.column_count(), 9);
        let v = form.encode(&ContextValue::Numeric(vec![1.0]), Some(1), 2).unwrap();
        assert_eq!(v.values(), &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(
            form.encode(&ContextValue::Numeric(vec![1.0]), Some(0), 2),
            Err(Error::InfeasibleAction { page: 1, prev: 0, action: 2 })
        );
        assert_eq!(form.feasible_actions(Some(0)), vec![0, 1]);
        assert_eq!(form.feasible_actions(Some(1)), vec![0, 1, 2]);
    }

    #[test]
    fn standard_form_counts() {
        let shape = FlowShape::uniform(3, 3).unwrap();
        let count = |t: fn(usize, ContextSchema, bool) -> Terms| -> Vec<usize> {
            (0..3)
                .map(|p| {
                    ModelForm::new(p, t(p, ContextSchema::None, true), &shape, ContextSchema::None)
                        .unwrap()
                        .column_count()
                })
                .collect()
        };
        assert_eq!(count(Terms::interaction), vec![4, 16, 16]);
        assert_eq!(count(Terms::independent), vec![4, 4, 4]);
    }

    #[test]
    fn first_page_one_hot() {
        let shape = FlowShape::uniform(3, 3).unwrap();
        let form =
            ModelForm::new(0, Terms::interaction(0, ContextSchema::None, true), &shape, ContextSchema::None).unwrap();
        let v = form.encode(&ContextValue::None, None, 1).unwrap();
        assert_eq!(v.values(), &[1.0, 0.0, 1.0, 0.0]);
        assert_eq!(form.feasible_actions(None), vec![0, 1, 2]);
    }

    #[test]
    fn encode_argument_errors() {
        let shape = FlowShape::uniform(2, 3).unwrap();
        let f0 =
            ModelForm::new(0, Terms::interaction(0, ContextSchema::None, true), &shape, ContextSchema::None).unwrap();
        let f1 =
            ModelForm::new(1, Terms::interaction(1, ContextSchema::None, true), &shape, ContextSchema::None).unwrap();
        assert!(matches!(f0.encode(&ContextValue::None, None, 3), Err(Error::ActionOutOfRange { .. })));
        assert!(f0.encode(&ContextValue::None, Some(0), 0).is_err());
        assert!(f1.encode(&ContextValue::None, None, 0).is_err());
        assert!(matches!(f1.encode(&ContextValue::None, Some(5), 0), Err(Error::ActionOutOfRange { .. })));
        assert!(f1.encode(&ContextValue::Category(0), Some(0), 0).is_err());
    }

    #[test]
    fn invalid_forms() {
        let shape = FlowShape::uniform(2, 3).unwrap();
        let prev_terms = Terms { previous_action: true, ..Terms::default() };
        assert!(ModelForm::new(0, prev_terms, &shape, ContextSchema::None).is_err());
        let ctx_terms = Terms { context_main: true, ..Terms::default() };
        assert!(ModelForm::new(0, ctx_terms, &shape, ContextSchema::None).is_err());
        assert!(ModelForm::new(2, Terms::default(), &shape, ContextSchema::None).is_err());
        assert!(ModelForm::new(0, Terms::default(), &shape, ContextSchema::Categorical(1)).is_err());
    }

    #[test]
    fn empty_feasible_set_is_rejected() {
        let shape = FlowShape::uniform(2, 2).unwrap();
        assert_eq!(
            shape.clone().with_incompatible(1, [(1, 0), (1, 1)]),
            Err(Error::EmptyFeasibleSet { page: 1, prev: 1 })
        );
        assert!(shape.clone().with_incompatible(0, [(0, 0)]).is_err());
        assert!(shape.with_incompatible(1, [(2, 0)]).is_err());
    }

    #[test]
    fn formula_parsing() {
        let (resp, terms) = Terms::parse("R ~ a_i + a_prev + a_prev:a_i").unwrap();
        assert_eq!(resp, Response::ShortTerm);
        assert_eq!(terms, Terms::interaction(1, ContextSchema::None, true));
        let (resp, terms) = Terms::parse("G~1+a_i+x+a_i:x").unwrap();
        assert_eq!(resp, Response::LongTerm);
        assert_eq!(terms, Terms::independent(1, ContextSchema::Categorical(3), true));
        assert!(Terms::parse("R a_i").is_err());
        assert!(Terms::parse("Y ~ a_i").is_err());
        assert!(Terms::parse("R ~ a_i + a_i").is_err());
        assert!(Terms::parse("R ~ a_i + b").is_err());
        let t = Terms::interaction(1, ContextSchema::Categorical(3), true);
        assert_eq!(Terms::parse(&alloc::format!("R ~ {t}")).unwrap().1, t);
    }

    #[test]
    fn categorical_context_blocks() {
        let ctx = ContextSchema::Categorical(3);
        let shape = FlowShape::uniform(2, 2).unwrap();
        let form = ModelForm::new(1, Terms::interaction(1, ctx, true), &shape, ctx).unwrap();
        // 1 + 2 + 3 + 3*2 + 2 + 2*2
        assert_eq!(form.column_count(), 18);
        let v = form.encode(&ContextValue::Category(2), Some(1), 0).unwrap();
        let on: Vec<Column> =
            v.values().iter().zip(form.layout()).filter(|(x, _)| **x != 0.0).map(|(_, c)| *c).collect();
        assert_eq!(
            on,
            vec![
                Column::Intercept,
                Column::Current(0),
                Column::Context(2),
                Column::ContextByCurrent { context: 2, action: 0 },
                Column::Previous(1),
                Column::PreviousByCurrent { prev: 1, action: 0 },
            ]
        );
        assert_eq!(form.column_name(5), "x_3");
    }
}
