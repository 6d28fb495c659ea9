use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{FlowRecord, IngestError, Label};

/// Class targets for a subset of `total` rows with `ratio` attacks. A
/// fractional attack count is rounded up, so Attack absorbs the odd row.
pub fn balance_targets(total: usize, ratio: f64) -> (usize, usize) {
    let exact = total as f64 * ratio;
    let attack = if (exact - exact.round()).abs() < 1e-9 {
        exact.round()
    } else {
        exact.ceil()
    } as usize;
    (attack.min(total), total - attack.min(total))
}

/// Draws a class-balanced subset without replacement, then shuffles it.
pub fn balance_subset(
    records: &[FlowRecord],
    total: usize,
    ratio: f64,
    seed: u64,
) -> Result<Vec<FlowRecord>, IngestError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(IngestError::InvalidArgument(format!(
            "attack ratio must lie in (0, 1), got {ratio}"
        )));
    }
    let (want_attack, want_benign) = balance_targets(total, ratio);

    let (attack, benign): (Vec<&FlowRecord>, Vec<&FlowRecord>) =
        records.iter().partition(|r| r.label == Label::Attack);
    for (class, pool, needed) in [
        (Label::Attack, &attack, want_attack),
        (Label::Benign, &benign, want_benign),
    ] {
        if pool.len() < needed {
            return Err(IngestError::InsufficientClassSamples {
                class,
                needed,
                available: pool.len(),
                shortfall: needed - pool.len(),
            });
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<FlowRecord> = Vec::with_capacity(total);
    for (pool, k) in [(&attack, want_attack), (&benign, want_benign)] {
        let mut picked = index::sample(&mut rng, pool.len(), k).into_vec();
        picked.sort_unstable();
        out.extend(picked.into_iter().map(|i| pool[i].clone()));
    }
    out.shuffle(&mut rng);
    Ok(out)
}
