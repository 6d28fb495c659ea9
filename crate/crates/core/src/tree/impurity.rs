use super::TreeError;

/// Gini impurity `1 - sum p_k^2` of a node's class counts.
pub fn gini(counts: &[u32]) -> Result<f64, TreeError> {
    let total: u64 = counts.iter().map(|&c| c as u64).sum();
    if total == 0 {
        return Err(TreeError::EmptyNode);
    }
    Ok(gini_unchecked(counts.iter().map(|&c| c as f64), total as f64))
}

#[inline]
pub(crate) fn gini_unchecked(counts: impl Iterator<Item = f64>, total: f64) -> f64 {
    let sum_sq: f64 = counts.map(|c| c * c).sum();
    1.0 - sum_sq / (total * total)
}

/// Impurity decrease of splitting `parent` into `left` and `right`, each
/// child weighted by its share of the parent's samples.
pub fn gini_gain(parent: &[u32], left: &[u32], right: &[u32]) -> Result<f64, TreeError> {
    if parent.len() != left.len() || parent.len() != right.len() {
        return Err(TreeError::CountMismatch);
    }
    if parent
        .iter()
        .zip(left.iter().zip(right))
        .any(|(&p, (&l, &r))| p as u64 != l as u64 + r as u64)
    {
        return Err(TreeError::CountMismatch);
    }
    let n_l: u64 = left.iter().map(|&c| c as u64).sum();
    let n_r: u64 = right.iter().map(|&c| c as u64).sum();
    if n_l == 0 || n_r == 0 {
        return Err(TreeError::EmptyChild);
    }
    let n = (n_l + n_r) as f64;
    Ok(gini(parent)? - (n_l as f64 / n) * gini(left)? - (n_r as f64 / n) * gini(right)?)
}
