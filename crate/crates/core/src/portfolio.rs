//! Minimum-variance portfolio weights and risk functionals.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::{Error, Result};

/// A fully invested portfolio: weights sum to one, shorts allowed.
#[derive(Debug, Clone)]
pub struct Portfolio {
    weights: DVector<f64>,
    asset_ids: Vec<String>,
}

impl Portfolio {
    pub fn new(weights: DVector<f64>, asset_ids: Vec<String>) -> Result<Self> {
        if weights.len() != asset_ids.len() {
            return Err(Error::Validation(format!(
                "{} weights for {} asset ids",
                weights.len(),
                asset_ids.len()
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Validation(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { weights, asset_ids })
    }

    /// The uniform 1/N portfolio.
    pub fn uniform(asset_ids: Vec<String>) -> Self {
        let n = asset_ids.len();
        Self {
            weights: DVector::from_element(n, 1.0 / n as f64),
            asset_ids,
        }
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

fn spd_solve_ones(cov: &DMatrix<f64>) -> Result<DVector<f64>> {
    let chol = Cholesky::new(cov.clone()).ok_or_else(|| {
        Error::Numeric("covariance matrix is not positive definite (Cholesky failed)".into())
    })?;
    let ones = DVector::from_element(cov.nrows(), 1.0);
    Ok(chol.solve(&ones))
}

/// Minimum-variance weights `C⁻¹1 / (1ᵀC⁻¹1)`.
pub fn gmvp_weights(cov: &DMatrix<f64>, asset_ids: &[String]) -> Result<Portfolio> {
    if cov.nrows() != cov.ncols() || cov.nrows() != asset_ids.len() {
        return Err(Error::Validation(format!(
            "covariance is {}×{} for {} assets",
            cov.nrows(),
            cov.ncols(),
            asset_ids.len()
        )));
    }
    let solved = spd_solve_ones(cov)?;
    let total: f64 = solved.iter().sum();
    if total == 0.0 || !total.is_finite() {
        return Err(Error::Numeric(format!(
            "degenerate normalization 1ᵀC⁻¹1 = {total}"
        )));
    }
    let mut weights = solved / total;
    // Renormalize rounding drift so the sum-to-one invariant holds exactly
    // within the stated tolerance.
    let sum: f64 = weights.iter().sum();
    weights /= sum;
    Portfolio::new(weights, asset_ids.to_vec())
}

/// Minimum achievable variance `1/(1ᵀC⁻¹1)` under the true covariance `C`.
pub fn theoretical_risk(cov: &DMatrix<f64>) -> Result<f64> {
    let solved = spd_solve_ones(cov)?;
    let total: f64 = solved.iter().sum();
    if total <= 0.0 || !total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-positive normalization 1ᵀC⁻¹1 = {total}"
        )));
    }
    Ok(1.0 / total)
}

/// Out-of-sample variance `hᵀ C_true h` of a portfolio under the true covariance.
pub fn realized_risk(portfolio: &Portfolio, cov_true: &DMatrix<f64>) -> Result<f64> {
    if cov_true.nrows() != portfolio.len() || cov_true.ncols() != portfolio.len() {
        return Err(Error::Validation(format!(
            "covariance is {}×{} for a {}-asset portfolio",
            cov_true.nrows(),
            cov_true.ncols(),
            portfolio.len()
        )));
    }
    let h = portfolio.weights();
    Ok((h.transpose() * cov_true * h)[(0, 0)])
}
