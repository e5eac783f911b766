use std::collections::BTreeMap;

use super::EvalError;
use crate::event::UserId;

pub const MIN_USERS: usize = 10;

/// 1-based ranks with tied values sharing the mean of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let mean = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = mean;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0)
}

/// Spearman correlation of paired samples; 0 when either side is constant.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64, EvalError> {
    assert_eq!(x.len(), y.len(), "paired samples");
    if x.len() < MIN_USERS {
        return Err(EvalError::TooFewUsers(x.len()));
    }
    Ok(pearson(&average_ranks(x), &average_ranks(y)))
}

/// Spearman correlation between scores and latent influence over the users
/// present in both maps.
pub fn rank_correlation(
    scores: &BTreeMap<UserId, f64>,
    latent: &BTreeMap<UserId, f64>,
) -> Result<f64, EvalError> {
    let (x, y): (Vec<f64>, Vec<f64>) = scores
        .iter()
        .filter_map(|(u, &s)| latent.get(u).map(|&l| (s, l)))
        .unzip();
    spearman(&x, &y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[10.0, 20.0, 20.0, 5.0]),
            vec![2.0, 3.5, 3.5, 1.0]
        );
        assert_eq!(average_ranks(&[]), Vec::<f64>::new());
    }

    #[test]
    fn identical_and_reversed() {
        let x: Vec<f64> = (0..20).map(|i| (i as f64).powi(3)).collect();
        let y: Vec<f64> = (0..20).map(|i| i as f64).collect();
        assert_eq!(spearman(&x, &y).unwrap(), 1.0);
        let rev: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_eq!(spearman(&x, &rev).unwrap(), -1.0);
    }

    #[test]
    fn refuses_small_samples() {
        assert!(matches!(
            spearman(&[1.0; 9], &[1.0; 9]),
            Err(EvalError::TooFewUsers(9))
        ));
    }

    #[test]
    fn joins_on_user() {
        let s: BTreeMap<UserId, f64> = (0..12)
            .map(|i| (UserId::new(format!("u{i:02}")).unwrap(), i as f64))
            .collect();
        let mut l: BTreeMap<UserId, f64> = s.iter().map(|(u, v)| (u.clone(), v * 2.0)).collect();
        l.insert(UserId::new("extra").unwrap(), 0.0);
        assert_eq!(rank_correlation(&s, &l).unwrap(), 1.0);
    }
}
