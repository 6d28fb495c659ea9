//! Split objectives. A criterion owns the per-row targets and knows how to
//! aggregate them, score a candidate split and produce a leaf payload.

use serde::{Deserialize, Serialize};

use super::impurity::gini_unchecked;
use super::LeafValue;

pub trait Criterion: Sync {
    type Stats: Clone + Send + Sync + std::fmt::Debug + PartialEq;

    fn zero(&self) -> Self::Stats;
    fn add_row(&self, s: &mut Self::Stats, row: usize);
    fn remove_row(&self, s: &mut Self::Stats, row: usize);
    fn merge(&self, into: &mut Self::Stats, other: &Self::Stats);
    fn subtract(&self, from: &mut Self::Stats, other: &Self::Stats);
    fn count(&self, s: &Self::Stats) -> usize;
    fn cover(&self, s: &Self::Stats) -> f64;
    /// No split of this node can have positive gain.
    fn is_pure(&self, _s: &Self::Stats) -> bool {
        false
    }
    /// Gain of a split, or `None` when a child violates size constraints.
    fn split_gain(
        &self,
        parent: &Self::Stats,
        left: &Self::Stats,
        right: &Self::Stats,
    ) -> Option<f64>;
    fn leaf(&self, s: &Self::Stats) -> LeafValue;

    fn stats_of(&self, rows: &[u32]) -> Self::Stats {
        let mut s = self.zero();
        for &r in rows {
            self.add_row(&mut s, r as usize);
        }
        s
    }
}

/// Weighted Gini decrease over class labels.
#[derive(Debug, Clone, Copy)]
pub struct GiniCriterion<'a> {
    pub labels: &'a [u32],
    pub n_classes: usize,
    pub min_samples_leaf: usize,
}

impl<'a> GiniCriterion<'a> {
    pub fn new(labels: &'a [u32], n_classes: usize, min_samples_leaf: usize) -> Self {
        GiniCriterion {
            labels,
            n_classes,
            min_samples_leaf: min_samples_leaf.max(1),
        }
    }
}

fn total(s: &[u32]) -> u64 {
    s.iter().map(|&c| c as u64).sum()
}

fn gini_of(s: &[u32], n: u64) -> f64 {
    gini_unchecked(s.iter().map(|&c| c as f64), n as f64)
}

impl Criterion for GiniCriterion<'_> {
    type Stats = Vec<u32>;

    fn zero(&self) -> Vec<u32> {
        vec![0; self.n_classes]
    }

    #[inline]
    fn add_row(&self, s: &mut Vec<u32>, row: usize) {
        s[self.labels[row] as usize] += 1;
    }

    #[inline]
    fn remove_row(&self, s: &mut Vec<u32>, row: usize) {
        s[self.labels[row] as usize] -= 1;
    }

    fn merge(&self, into: &mut Vec<u32>, other: &Vec<u32>) {
        into.iter_mut().zip(other).for_each(|(a, b)| *a += b);
    }

    fn subtract(&self, from: &mut Vec<u32>, other: &Vec<u32>) {
        from.iter_mut().zip(other).for_each(|(a, b)| *a -= b);
    }

    fn count(&self, s: &Vec<u32>) -> usize {
        total(s) as usize
    }

    fn cover(&self, s: &Vec<u32>) -> f64 {
        total(s) as f64
    }

    fn is_pure(&self, s: &Vec<u32>) -> bool {
        s.iter().filter(|&&c| c > 0).count() <= 1
    }

    #[inline]
    fn split_gain(&self, parent: &Vec<u32>, left: &Vec<u32>, right: &Vec<u32>) -> Option<f64> {
        let n_l = total(left);
        let n_r = total(right);
        let min = self.min_samples_leaf as u64;
        if n_l < min || n_r < min {
            return None;
        }
        // same operation order as `gini_gain`
        let n = (n_l + n_r) as f64;
        Some(
            gini_of(parent, n_l + n_r)
                - (n_l as f64 / n) * gini_of(left, n_l)
                - (n_r as f64 / n) * gini_of(right, n_r),
        )
    }

    fn leaf(&self, s: &Vec<u32>) -> LeafValue {
        LeafValue::Counts(s.clone())
    }
}

/// Regularization shared by both boosting modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegParams {
    /// L2 penalty on leaf weights.
    pub lambda: f64,
    /// L1 penalty, applied by soft-thresholding the gradient sum.
    pub alpha: f64,
    /// Minimum loss reduction per split.
    pub gamma: f64,
    pub min_child_weight: f64,
    pub min_child_samples: usize,
}

impl Default for RegParams {
    fn default() -> Self {
        RegParams {
            lambda: 1.0,
            alpha: 0.0,
            gamma: 0.0,
            min_child_weight: 0.0,
            min_child_samples: 1,
        }
    }
}

impl RegParams {
    #[inline]
    fn threshold_l1(&self, g: f64) -> f64 {
        if self.alpha == 0.0 {
            g
        } else {
            g.signum() * (g.abs() - self.alpha).max(0.0)
        }
    }

    #[inline]
    fn score(&self, g: f64, h: f64) -> Option<f64> {
        let denom = h + self.lambda;
        if denom <= 0.0 {
            return None;
        }
        let t = self.threshold_l1(g);
        Some(t * t / denom)
    }

    /// Optimal leaf weight `-T(G) / (H + lambda)`.
    pub fn leaf_weight(&self, g: f64, h: f64) -> f64 {
        let denom = h + self.lambda;
        if denom <= 0.0 {
            0.0
        } else {
            -self.threshold_l1(g) / denom
        }
    }

    /// `1/2 [S(L) + S(R) - S(L+R)] - gamma` with `S(G, H) = T(G)^2 / (H + lambda)`.
    pub fn split_gain(&self, gl: f64, hl: f64, gr: f64, hr: f64) -> Option<f64> {
        let parent = self.score(gl + gr, hl + hr)?;
        Some(0.5 * (self.score(gl, hl)? + self.score(gr, hr)? - parent) - self.gamma)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GradStats {
    pub grad: f64,
    pub hess: f64,
    pub count: u32,
}

/// Second-order boosting objective over per-row gradients and hessians.
#[derive(Debug, Clone, Copy)]
pub struct GradHessCriterion<'a> {
    pub grad: &'a [f64],
    pub hess: &'a [f64],
    pub reg: RegParams,
}

impl Criterion for GradHessCriterion<'_> {
    type Stats = GradStats;

    fn zero(&self) -> GradStats {
        GradStats::default()
    }

    #[inline]
    fn add_row(&self, s: &mut GradStats, row: usize) {
        s.grad += self.grad[row];
        s.hess += self.hess[row];
        s.count += 1;
    }

    #[inline]
    fn remove_row(&self, s: &mut GradStats, row: usize) {
        s.grad -= self.grad[row];
        s.hess -= self.hess[row];
        s.count -= 1;
    }

    #[inline]
    fn merge(&self, into: &mut GradStats, other: &GradStats) {
        into.grad += other.grad;
        into.hess += other.hess;
        into.count += other.count;
    }

    #[inline]
    fn subtract(&self, from: &mut GradStats, other: &GradStats) {
        from.grad -= other.grad;
        from.hess -= other.hess;
        from.count -= other.count;
    }

    fn count(&self, s: &GradStats) -> usize {
        s.count as usize
    }

    fn cover(&self, s: &GradStats) -> f64 {
        s.hess
    }

    #[inline]
    fn split_gain(&self, _parent: &GradStats, left: &GradStats, right: &GradStats) -> Option<f64> {
        let min_n = self.reg.min_child_samples.max(1) as u32;
        if left.count < min_n || right.count < min_n {
            return None;
        }
        if left.hess < self.reg.min_child_weight || right.hess < self.reg.min_child_weight {
            return None;
        }
        self.reg
            .split_gain(left.grad, left.hess, right.grad, right.hess)
    }

    fn leaf(&self, s: &GradStats) -> LeafValue {
        LeafValue::Weight(self.reg.leaf_weight(s.grad, s.hess))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::gini_gain;

    #[test]
    fn gini_criterion_matches_public_gain() {
        let labels = [0, 0, 1, 1, 1, 0, 1];
        let c = GiniCriterion::new(&labels, 2, 1);
        let parent = c.stats_of(&[0, 1, 2, 3, 4, 5, 6]);
        let left = c.stats_of(&[0, 1, 2]);
        let right = c.stats_of(&[3, 4, 5, 6]);
        assert_eq!(
            c.split_gain(&parent, &left, &right).unwrap(),
            gini_gain(&parent, &left, &right).unwrap()
        );
    }

    #[test]
    fn min_samples_leaf_blocks_small_children() {
        let labels = [0, 1, 1];
        let c = GiniCriterion::new(&labels, 2, 2);
        let p = c.stats_of(&[0, 1, 2]);
        assert!(c.split_gain(&p, &c.stats_of(&[0]), &c.stats_of(&[1, 2])).is_none());
    }

    #[test]
    fn second_order_gain_by_hand() {
        let reg = RegParams {
            lambda: 1.0,
            gamma: 0.1,
            ..RegParams::default()
        };
        // GL=-2 HL=1, GR=2 HR=1: 1/2 [4/2 + 4/2 - 0/3] - 0.1 = 1.9
        let g = reg.split_gain(-2.0, 1.0, 2.0, 1.0).unwrap();
        assert!((g - 1.9).abs() < 1e-15);
        assert_eq!(reg.leaf_weight(-2.0, 1.0), 1.0);
    }

    #[test]
    fn l1_soft_threshold() {
        let reg = RegParams {
            lambda: 0.0,
            alpha: 1.0,
            ..RegParams::default()
        };
        assert_eq!(reg.leaf_weight(0.5, 2.0), 0.0);
        assert_eq!(reg.leaf_weight(-3.0, 2.0), 1.0);
        assert_eq!(reg.leaf_weight(3.0, 2.0), -1.0);
    }

    #[test]
    fn zero_hessian_without_l2_is_rejected() {
        let reg = RegParams {
            lambda: 0.0,
            ..RegParams::default()
        };
        assert!(reg.split_gain(1.0, 0.0, 1.0, 1.0).is_none());
        assert_eq!(reg.leaf_weight(1.0, 0.0), 0.0);
    }
}
