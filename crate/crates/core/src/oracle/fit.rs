use nalgebra::{DMatrix, DVector};

use crate::error::{LwailError, Result};

/// Least-squares fit `y ≈ Φ η` without intercept.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    pub eta: Vec<f64>,
    /// Residual sum of squares.
    pub residual: f64,
    /// `1 − SS_res / SS_tot` with `SS_tot` centred on the mean of `y`.
    pub r2: f64,
    /// The design had numerical rank below its width; `eta` is the
    /// minimum-norm solution.
    pub rank_deficient: bool,
}

/// Ordinary least squares of `y` on the rows of `phi`, through an SVD
/// pseudo-inverse.
pub fn theorem1_fit(phi: &[Vec<f64>], y: &[f64]) -> Result<LinearFit> {
    let n = phi.len();
    if n != y.len() {
        return Err(LwailError::InvalidInput("feature and target counts differ".into()));
    }
    let d = phi.first().map_or(0, Vec::len);
    if d == 0 || n < d {
        return Err(LwailError::InvalidInput(format!("need at least {d} samples of a non-empty embedding, got {n}")));
    }
    if phi.iter().any(|r| r.len() != d) {
        return Err(LwailError::InvalidInput("ragged feature rows".into()));
    }
    let a = DMatrix::from_fn(n, d, |i, j| phi[i][j]);
    let b = DVector::from_column_slice(y);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let eps = smax * (n.max(d) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&s| s > eps).count();
    let eta = svd.solve(&b, eps).map_err(|e| LwailError::Numerical(e.to_string()))?;
    let pred = &a * &eta;
    let residual = (&b - pred).norm_squared();
    let mean = y.iter().sum::<f64>() / n as f64;
    let total: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
    let r2 = if total > 0.0 {
        1.0 - residual / total
    } else if residual <= 1e-24 {
        1.0
    } else {
        0.0
    };
    Ok(LinearFit { eta: eta.iter().copied().collect(), residual, r2, rank_deficient: rank < d })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planted_linear_target_gives_unit_r2() {
        let phi: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, ((i * i) % 7) as f64, 1.0]).collect();
        let eta = [0.3, -1.2, 2.0];
        let y: Vec<f64> = phi.iter().map(|r| r.iter().zip(&eta).map(|(a, b)| a * b).sum()).collect();
        let fit = theorem1_fit(&phi, &y).unwrap();
        assert!((fit.r2 - 1.0).abs() < 1e-10);
        for (a, b) in fit.eta.iter().zip(eta) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!(!fit.rank_deficient);
    }

    #[test]
    fn constant_features_explain_nothing() {
        let phi = vec![vec![1.0, 1.0]; 10];
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let fit = theorem1_fit(&phi, &y).unwrap();
        assert!(fit.r2.abs() < 1e-10);
        assert!(fit.rank_deficient);
    }

    #[test]
    fn too_few_samples_is_an_error() {
        assert!(theorem1_fit(&[vec![1.0, 2.0]], &[1.0]).is_err());
    }
}
