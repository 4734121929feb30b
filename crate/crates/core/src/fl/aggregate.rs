use super::{FlError, ParamVector, Result};

/// Sample-count weighted average of client models.
///
/// Weights are `n_i / sum(n)`; the output is a convex combination of the
/// inputs, coordinate by coordinate.
pub fn fedavg(contributions: &[(ParamVector, u64)]) -> Result<ParamVector> {
    let (first, _) = contributions.first().ok_or(FlError::NoClients)?;
    let len = first.len();
    if contributions.iter().any(|(w, _)| w.len() != len) {
        return Err(FlError::InvalidArgument(
            "client parameter vectors differ in length".into(),
        ));
    }
    if contributions.iter().any(|&(_, n)| n == 0) {
        return Err(FlError::InvalidArgument("sample counts must be positive".into()));
    }
    if contributions.len() == 1 {
        return Ok(first.clone());
    }
    let total: u64 = contributions.iter().map(|&(_, n)| n).sum();
    let mut out = vec![0.0; len];
    for (w, n) in contributions {
        let weight = *n as f64 / total as f64;
        for (o, v) in out.iter_mut().zip(w.as_slice()) {
            *o += weight * v;
        }
    }
    // rounding can push a coordinate a hair outside the input envelope
    for (j, o) in out.iter_mut().enumerate() {
        let (lo, hi) = contributions
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (w, _)| {
                (lo.min(w.0[j]), hi.max(w.0[j]))
            });
        *o = o.clamp(lo, hi);
    }
    Ok(ParamVector(out))
}

/// Sample-count weighted mean of client losses.
pub fn global_loss(losses: &[(f64, u64)]) -> Result<f64> {
    if losses.is_empty() {
        return Err(FlError::InvalidArgument("no client losses".into()));
    }
    if losses.iter().any(|&(_, n)| n == 0) {
        return Err(FlError::InvalidArgument("sample counts must be positive".into()));
    }
    let total: u64 = losses.iter().map(|&(_, n)| n).sum();
    Ok(losses
        .iter()
        .map(|&(l, n)| n as f64 / total as f64 * l)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_contributions_are_a_fixed_point() {
        let w = ParamVector(vec![0.1, -3.7, 1e-9, 42.0]);
        let out = fedavg(&[(w.clone(), 3), (w.clone(), 7), (w.clone(), 11)]).unwrap();
        assert_eq!(out, w);
        assert_eq!(fedavg(&[(w.clone(), 5)]).unwrap(), w);
    }

    #[test]
    fn weighted_pair() {
        let a = ParamVector(vec![1.0, 4.0]);
        let b = ParamVector(vec![3.0, 0.0]);
        let out = fedavg(&[(a, 1), (b, 3)]).unwrap();
        assert_eq!(out.0, vec![2.5, 1.0]);
    }

    #[test]
    fn errors() {
        assert!(matches!(fedavg(&[]), Err(FlError::NoClients)));
        let a = ParamVector(vec![1.0]);
        let b = ParamVector(vec![1.0, 2.0]);
        assert!(fedavg(&[(a.clone(), 1), (b, 1)]).is_err());
        assert!(fedavg(&[(a, 0)]).is_err());
        assert!(global_loss(&[]).is_err());
    }

    #[test]
    fn global_loss_examples() {
        assert_eq!(global_loss(&[(1.0, 5), (3.0, 5)]).unwrap(), 2.0);
        assert_eq!(global_loss(&[(4.0, 1), (0.0, 3)]).unwrap(), 1.0);
        assert_eq!(global_loss(&[(0.7, 9)]).unwrap(), 0.7);
    }
}
