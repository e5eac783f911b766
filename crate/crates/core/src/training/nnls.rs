use nalgebra::{DMatrix, DVector};

use super::TrainingError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NnlsParams {
    /// Gradient tolerance, relative to `max(1, |X^T y|_inf)`.
    pub tol: f64,
    /// Outer iterations; `None` means three times the column count.
    pub max_iter: Option<usize>,
}

impl Default for NnlsParams {
    fn default() -> Self {
        NnlsParams {
            tol: 1e-10,
            max_iter: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnlsSolution {
    pub w: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// `|Xw - y|_2`.
    pub residual_norm: f64,
}

/// Lawson-Hanson active-set solver for `min |Xw - y|^2` subject to `w >= 0`.
///
/// Subproblems are solved on the normal equations restricted to the passive
/// set, so each iteration costs `O(k^3)` in the passive-set size `k` rather
/// than touching every row. Returned weights are exactly non-negative.
pub fn nnls_solve(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &NnlsParams,
) -> Result<NnlsSolution, TrainingError> {
    let (rows, cols) = x.shape();
    if rows == 0 {
        return Err(TrainingError::EmptySystem);
    }
    if y.len() != rows {
        return Err(TrainingError::Shape {
            rows,
            targets: y.len(),
        });
    }
    let gram = x.transpose() * x;
    let b = x.transpose() * y;
    let scale = b.amax().max(1.0);
    let tol = params.tol * scale;
    let max_iter = params.max_iter.unwrap_or(3 * cols).max(1);

    let mut w = DVector::<f64>::zeros(cols);
    let mut passive = vec![false; cols];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        // Negative gradient of the objective (up to a factor of 2).
        let neg_grad = &b - &gram * &w;
        let entering = (0..cols)
            .filter(|&i| !passive[i])
            .max_by(|&i, &j| neg_grad[i].total_cmp(&neg_grad[j]).then(j.cmp(&i)));
        let Some(j) = entering.filter(|&j| neg_grad[j] > tol) else {
            converged = true;
            break;
        };
        iterations += 1;
        passive[j] = true;

        loop {
            let idx: Vec<usize> = (0..cols).filter(|&i| passive[i]).collect();
            let z = solve_passive(&gram, &b, &idx);
            if z.iter().all(|&v| v > 0.0) {
                w.fill(0.0);
                for (&i, &v) in idx.iter().zip(z.iter()) {
                    w[i] = v;
                }
                break;
            }
            // Step from w toward z until the first passive coordinate hits 0.
            let mut alpha = f64::INFINITY;
            for (&i, &zi) in idx.iter().zip(z.iter()) {
                if zi <= 0.0 {
                    alpha = alpha.min(w[i] / (w[i] - zi));
                }
            }
            for (&i, &zi) in idx.iter().zip(z.iter()) {
                w[i] += alpha * (zi - w[i]);
            }
            for &i in &idx {
                if w[i] <= 1e-14 * scale {
                    w[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
        // In exact arithmetic the entering coordinate always ends positive;
        // losing it means the gradient test was below numerical resolution.
        if !passive[j] {
            converged = true;
            break;
        }
    }

    let w: Vec<f64> = w.iter().map(|&v| v.max(0.0)).collect();
    let residual = x * DVector::from_column_slice(&w) - y;
    Ok(NnlsSolution {
        w,
        converged,
        iterations,
        residual_norm: residual.norm(),
    })
}

fn solve_passive(gram: &DMatrix<f64>, b: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |r, c| gram[(idx[r], idx[c])]);
    let rhs = DVector::from_fn(k, |r, _| b[idx[r]]);
    if let Some(chol) = sub.clone().cholesky() {
        return chol.solve(&rhs);
    }
    // Rank-deficient passive set: minimum-norm solution.
    sub.svd(true, true)
        .solve(&rhs, 1e-12)
        .unwrap_or_else(|_| DVector::zeros(k))
}

/// Largest KKT violation of `w` for `min |Xw - y|^2, w >= 0`: negative
/// weights, negative gradient entries, and complementary slackness
/// `|w_i g_i|`, with `g = X^T (Xw - y)`.
pub fn kkt_residual(x: &DMatrix<f64>, y: &DVector<f64>, w: &[f64]) -> f64 {
    let wv = DVector::from_column_slice(w);
    let g = x.transpose() * (x * &wv - y);
    w.iter()
        .zip(g.iter())
        .map(|(&wi, &gi)| (-wi).max(0.0).max(-gi).max((wi * gi).abs()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn solve(x: DMatrix<f64>, y: DVector<f64>) -> NnlsSolution {
        nnls_solve(&x, &y, &NnlsParams::default()).unwrap()
    }

    #[test]
    fn identity_clamps_negative_coordinate() {
        let s = solve(DMatrix::identity(2, 2), DVector::from_vec(vec![1.0, -2.0]));
        assert_eq!(s.w, vec![1.0, 0.0]);
        assert!(s.converged);
    }

    #[test]
    fn unconstrained_optimum_already_feasible() {
        let s = solve(
            DMatrix::from_vec(2, 1, vec![1.0, 1.0]),
            DVector::from_vec(vec![1.0, 2.0]),
        );
        assert!((s.w[0] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn zero_matrix_gives_zero_weights() {
        let s = solve(DMatrix::zeros(3, 2), DVector::from_vec(vec![1.0, 1.0, 1.0]));
        assert_eq!(s.w, vec![0.0, 0.0]);
        assert!(s.converged);
    }

    #[test]
    fn duplicate_columns() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0]);
        let y = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let s = solve(x.clone(), y.clone());
        assert!(kkt_residual(&x, &y, &s.w) < 1e-8);
        assert!((s.w[0] + s.w[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_empty_and_mismatched() {
        let p = NnlsParams::default();
        assert!(matches!(
            nnls_solve(&DMatrix::zeros(0, 2), &DVector::zeros(0), &p),
            Err(TrainingError::EmptySystem)
        ));
        assert!(matches!(
            nnls_solve(&DMatrix::zeros(2, 2), &DVector::zeros(3), &p),
            Err(TrainingError::Shape { .. })
        ));
    }

    #[test]
    fn random_systems_satisfy_kkt_and_scale() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let cols = rng.random_range(1..=6);
            let rows = rng.random_range(cols..=20);
            let x = DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0));
            let y = DVector::from_fn(rows, |_, _| rng.random_range(-1.0..1.0));
            let s = solve(x.clone(), y.clone());
            assert!(s.converged);
            assert!(s.w.iter().all(|&v| v >= 0.0));
            assert!(kkt_residual(&x, &y, &s.w) < 1e-8);
            let scaled = solve(x.clone(), &y * 3.0);
            for (a, b) in s.w.iter().zip(&scaled.w) {
                assert!((3.0 * a - b).abs() < 1e-8);
            }
        }
    }
}
