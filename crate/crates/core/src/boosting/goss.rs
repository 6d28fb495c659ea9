use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BoostError;

/// Gradient-based one-side sampling: keep the `top_rate` share of rows with
/// the largest |g|, sample `other_rate` of all rows from the remainder and
/// up-weight those by `(1 - top_rate) / other_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GossConfig {
    pub top_rate: f64,
    pub other_rate: f64,
}

impl Default for GossConfig {
    fn default() -> Self {
        GossConfig {
            top_rate: 0.2,
            other_rate: 0.1,
        }
    }
}

impl GossConfig {
    pub fn validate(&self) -> Result<(), BoostError> {
        let (a, b) = (self.top_rate, self.other_rate);
        let open_unit = |x: f64| x > 0.0 && x < 1.0;
        if !open_unit(a) || !open_unit(b) || a + b > 1.0 + 1e-12 {
            return Err(BoostError::InvalidConfig(format!(
                "GOSS rates a={a}, b={b} need a, b in (0,1) and a + b <= 1"
            )));
        }
        Ok(())
    }

    pub fn amplification(&self) -> f64 {
        (1.0 - self.top_rate) / self.other_rate
    }

    /// `a + b >= 1`: every row is kept with weight 1.
    pub fn is_identity(&self) -> bool {
        self.top_rate + self.other_rate >= 1.0 - 1e-12
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GossSample {
    /// Positions into the gradient slice, ascending.
    pub rows: Vec<u32>,
    /// Weight per entry of `rows`.
    pub weights: Vec<f64>,
}

pub fn goss_sample<R: Rng>(
    grad: &[f64],
    cfg: &GossConfig,
    rng: &mut R,
) -> Result<GossSample, BoostError> {
    cfg.validate()?;
    let n = grad.len();
    if cfg.is_identity() {
        return Ok(GossSample {
            rows: (0..n as u32).collect(),
            weights: vec![1.0; n],
        });
    }
    let top_n = ((cfg.top_rate * n as f64).round() as usize).min(n);
    let other_n = ((cfg.other_rate * n as f64).round() as usize).min(n - top_n);

    // |g| descending, index ascending: a total order, so the cut is stable
    let mut order: Vec<u32> = (0..n as u32).collect();
    let key = |i: &u32, j: &u32| {
        grad[*j as usize]
            .abs()
            .total_cmp(&grad[*i as usize].abs())
            .then(i.cmp(j))
    };
    if top_n > 0 && top_n < n {
        order.select_nth_unstable_by(top_n - 1, key);
    }
    let (top, rest) = order.split_at_mut(top_n);
    rest.sort_unstable();
    let w = cfg.amplification();
    let mut picked: Vec<(u32, f64)> = top.iter().map(|&i| (i, 1.0)).collect();
    picked.extend(
        rand::seq::index::sample(rng, rest.len(), other_n)
            .into_iter()
            .map(|k| (rest[k], w)),
    );
    picked.sort_unstable_by_key(|p| p.0);
    Ok(GossSample {
        rows: picked.iter().map(|p| p.0).collect(),
        weights: picked.iter().map(|p| p.1).collect(),
    })
}
