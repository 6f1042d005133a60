//! Exact dynamic programming over one set of sampled page weights.
//!
//! Working backwards from the last page, every feasible previous action gets
//! its best current action `a_i*(a_{i-1})` and the resulting continuation
//! value `E[G | a_{i-1}] = r + (1 - r)·E[G | a_i*]`, where `r` is the success
//! probability on page `i`. The first page is then chosen the same way and the
//! layout is read forward.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::{FlowShape, ModelForm};
use crate::probit::phi_cdf;

/// Output of one backward-induction pass.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    /// `a_1*`.
    pub first: usize,
    /// Expected long-term reward of the plan from the first page.
    pub first_value: f64,
    /// `policy[i][prev]` is `a_i*(prev)`; `policy[0]` is empty.
    pub policy: Vec<Vec<usize>>,
    /// `continuation[i][prev]` is `E[G | a_{i-1} = prev]`, the value of
    /// entering page `i` after `prev`; `continuation[0]` is empty.
    pub continuation: Vec<Vec<f64>>,
    /// `{a_1*, a_2*(a_1*), …, a_D*(a_{D-1}*)}`.
    pub trajectory: Vec<usize>,
}

impl PlanResult {
    /// Expected long-term reward of the planned layout under the weights the
    /// plan was computed with.
    pub fn value(&self) -> f64 {
        self.first_value
    }
}

/// Backward induction with an arbitrary success model.
///
/// `success(page, prev, action)` must return the probability of a success on
/// `page` after `prev`. It is called exactly once per feasible
/// (page, prev, action) triple. Ties go to the lowest action index.
pub fn plan_with<F>(shape: &FlowShape, mut success: F) -> PlanResult
where
    F: FnMut(usize, Option<usize>, usize) -> f64,
{
    let pages = shape.pages();
    let mut policy = vec![Vec::new(); pages];
    let mut continuation = vec![Vec::new(); pages];
    // E[G | a_D] = 0: nothing follows the last page.
    let mut next = vec![0.0; shape.candidates(pages - 1)];

    for page in (1..pages).rev() {
        let n_prev = shape.candidates(page - 1);
        let mut best_actions = Vec::with_capacity(n_prev);
        let mut values = Vec::with_capacity(n_prev);
        for prev in 0..n_prev {
            let (a, v) = best_action(shape, page, Some(prev), &next, &mut success);
            best_actions.push(a);
            values.push(v);
        }
        policy[page] = best_actions;
        continuation[page] = values;
        next = continuation[page].clone();
    }

    let (first, first_value) = best_action(shape, 0, None, &next, &mut success);
    let mut trajectory = Vec::with_capacity(pages);
    trajectory.push(first);
    for page in 1..pages {
        let prev = trajectory[page - 1];
        trajectory.push(policy[page][prev]);
    }
    PlanResult { first, first_value, policy, continuation, trajectory }
}

fn best_action<F>(shape: &FlowShape, page: usize, prev: Option<usize>, next: &[f64], success: &mut F) -> (usize, f64)
where
    F: FnMut(usize, Option<usize>, usize) -> f64,
{
    let mut best: Option<(usize, f64)> = None;
    for (action, &after) in next.iter().enumerate() {
        if !shape.is_feasible(page, prev, action) {
            continue;
        }
        let r = success(page, prev, action);
        let value = r + (1.0 - r) * after;
        if best.is_none_or(|(_, v)| value > v) {
            best = Some((action, value));
        }
    }
    // FlowShape guarantees a non-empty feasible set for every prev.
    best.expect("feasible set is never empty")
}

/// Plan with probit success probabilities `Φ(wᵀB/β)` from sampled weights.
///
/// `context` is the encoded context vector shared by all pages.
pub fn plan(
    shape: &FlowShape,
    forms: &[ModelForm],
    weights: &[Vec<f64>],
    beta: f64,
    context: &[f64],
) -> Result<PlanResult> {
    if forms.len() != shape.pages() {
        return Err(Error::DimensionMismatch { expected: shape.pages(), found: forms.len() });
    }
    if weights.len() != shape.pages() {
        return Err(Error::DimensionMismatch { expected: shape.pages(), found: weights.len() });
    }
    for (form, w) in forms.iter().zip(weights) {
        if form.column_count() != w.len() {
            return Err(Error::DimensionMismatch { expected: form.column_count(), found: w.len() });
        }
        if form.context().dim() != context.len() {
            return Err(Error::DimensionMismatch { expected: form.context().dim(), found: context.len() });
        }
    }
    Ok(plan_with(shape, |page, prev, action| {
        phi_cdf(forms[page].utility(&weights[page], context, prev, action) / beta)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{ContextSchema, Terms};

    #[test]
    fn single_page_is_argmax() {
        let shape = FlowShape::uniform(1, 3).unwrap();
        let probs = [0.2, 0.7, 0.4];
        let r = plan_with(&shape, |_, _, a| probs[a]);
        assert_eq!(r.trajectory, vec![1]);
        assert_eq!(r.value(), 0.7);
    }

    #[test]
    fn two_page_example() {
        let shape = FlowShape::uniform(2, 2).unwrap();
        let first = [0.2, 0.4];
        let second = [[0.9, 0.1], [0.1, 0.2]];
        let r = plan_with(&shape, |page, prev, a| match prev {
            None => first[a],
            Some(p) => {
                assert_eq!(page, 1);
                second[p][a]
            }
        });
        assert_eq!(r.trajectory, vec![0, 0]);
        assert!((r.value() - 0.92).abs() < 1e-15);
        assert_eq!(r.policy[1], vec![0, 1]);
        assert!((r.continuation[1][1] - 0.2).abs() < 1e-15);
    }

    #[test]
    fn ties_go_to_lowest_index() {
        let shape = FlowShape::uniform(3, 3).unwrap();
        let r = plan_with(&shape, |_, _, _| 0.5);
        assert_eq!(r.trajectory, vec![0, 0, 0]);
        assert!((r.value() - 0.875).abs() < 1e-15);
    }

    #[test]
    fn incompatible_pairs_are_skipped() {
        let shape = FlowShape::uniform(2, 3).unwrap().with_incompatible(1, [(0, 2)]).unwrap();
        let r = plan_with(&shape, |_, prev, a| match prev {
            None => [0.3, 0.1, 0.1][a],
            Some(_) => [0.1, 0.2, 0.9][a],
        });
        assert_eq!(r.policy[1], vec![1, 2, 2]);
        // a_1 = 0 gives 0.3 + 0.7·0.2 = 0.44; a_1 = 1 gives 0.1 + 0.9·0.9 = 0.91
        assert_eq!(r.trajectory, vec![1, 2]);
        assert!(shape.is_feasible_trajectory(&r.trajectory));
    }

    #[test]
    fn zero_weights_give_half_everywhere() {
        let shape = FlowShape::uniform(3, 3).unwrap();
        let forms: Vec<ModelForm> = (0..3)
            .map(|p| {
                ModelForm::new(p, Terms::interaction(p, ContextSchema::None, true), &shape, ContextSchema::None)
                    .unwrap()
            })
            .collect();
        let weights: Vec<Vec<f64>> = forms.iter().map(|f| vec![0.0; f.column_count()]).collect();
        let r = plan(&shape, &forms, &weights, 1.0, &[]).unwrap();
        assert!((r.value() - 0.875).abs() < 1e-15);
        assert_eq!(r.trajectory, vec![0, 0, 0]);
        let bad = vec![vec![0.0; 4]; 3];
        assert!(plan(&shape, &forms, &bad, 1.0, &[]).is_err());
    }
}
