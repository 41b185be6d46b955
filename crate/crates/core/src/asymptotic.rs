//! Large-dimensional limit formulas: the spectral fixed point for γ, its
//! companion coefficient β, and the deterministic equivalent of the realized
//! portfolio risk.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::{Error, Result};

/// Spectrum of a true covariance matrix together with the aspect ratio.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    eigenvalues: Vec<f64>,
    c: f64,
    kappa: f64,
}

impl SpectralModel {
    /// Build from raw eigenvalues (sorted internally) and aspect ratio c = N/n.
    pub fn new(mut eigenvalues: Vec<f64>, c: f64) -> Result<Self> {
        if eigenvalues.is_empty() {
            return Err(Error::Validation("empty spectrum".into()));
        }
        if c <= 0.0 || !c.is_finite() {
            return Err(Error::Validation(format!(
                "aspect ratio must be positive and finite, got {c}"
            )));
        }
        if eigenvalues.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
            return Err(Error::Validation(
                "all eigenvalues must be strictly positive".into(),
            ));
        }
        eigenvalues.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let kappa = eigenvalues.iter().sum::<f64>() / eigenvalues.len() as f64;
        Ok(Self {
            eigenvalues,
            c,
            kappa,
        })
    }

    /// Spectrum of an explicit SPD matrix.
    pub fn from_matrix(cov: &DMatrix<f64>, c: f64) -> Result<Self> {
        let eigen = cov.symmetric_eigenvalues();
        Self::new(eigen.iter().cloned().collect(), c)
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Spectral mean κ = (1/N) Σ λ_i.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    fn check_rho(&self, rho: f64) -> Result<()> {
        let lower = (1.0 - 1.0 / self.c).max(0.0);
        if !(rho > lower && rho <= 1.0) {
            return Err(Error::Validation(format!(
                "rho {rho} outside the admissible interval ({lower}, 1] for c = {}",
                self.c
            )));
        }
        Ok(())
    }
}

/// Left side of the γ fixed point: `(1/N) Σ λ/(γρ + (1−ρ)λ)`, strictly
/// decreasing in γ.
fn gamma_equation(model: &SpectralModel, rho: f64, gamma: f64) -> f64 {
    model
        .eigenvalues
        .iter()
        .map(|&lambda| lambda / (gamma * rho + (1.0 - rho) * lambda))
        .sum::<f64>()
        / model.eigenvalues.len() as f64
}

/// Solve the spectral fixed point for γ by bisection.
pub fn solve_gamma(model: &SpectralModel, rho: f64) -> Result<f64> {
    model.check_rho(rho)?;
    if rho == 1.0 {
        // Equation reduces to 1 = κ/γ.
        return Ok(model.kappa);
    }
    let kappa = model.kappa;
    let mut lo = kappa * 1e-6;
    let mut hi = kappa * 1e6;
    let f_lo = gamma_equation(model, rho, lo) - 1.0;
    let f_hi = gamma_equation(model, rho, hi) - 1.0;
    if !(f_lo > 0.0 && f_hi < 0.0) {
        return Err(Error::Numeric(format!(
            "γ bracket failed: f({lo:.3e}) = {f_lo:.3e}, f({hi:.3e}) = {f_hi:.3e}"
        )));
    }
    // Bisect to 1e-13 absolute on γ/κ.
    while (hi - lo) / kappa > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if gamma_equation(model, rho, mid) - 1.0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Companion coefficient `β = (1/N) Σ c γ² λ² / (γρ + (1−ρ)λ)²`.
pub fn beta_coeff(model: &SpectralModel, rho: f64, gamma: f64) -> Result<f64> {
    model.check_rho(rho)?;
    if gamma <= 0.0 {
        return Err(Error::Validation(format!("gamma must be positive, got {gamma}")));
    }
    let sum = model
        .eigenvalues
        .iter()
        .map(|&lambda| {
            let denom = gamma * rho + (1.0 - rho) * lambda;
            model.c * gamma * gamma * lambda * lambda / (denom * denom)
        })
        .sum::<f64>();
    Ok(sum / model.eigenvalues.len() as f64)
}

/// Deterministic equivalent of the realized GMVP risk for a known true
/// covariance at shrinkage intensity ρ and aspect ratio c.
pub fn risk_deterministic_equivalent(cov: &DMatrix<f64>, rho: f64, c: f64) -> Result<f64> {
    let model = SpectralModel::from_matrix(cov, c)?;
    let gamma = solve_gamma(&model, rho)?;
    let beta = beta_coeff(&model, rho, gamma)?;

    let correction = gamma * gamma - beta * (1.0 - rho) * (1.0 - rho);
    if correction <= 0.0 {
        return Err(Error::Numeric(format!(
            "γ² − β(1−ρ)² = {correction:.3e} is non-positive; outside the validity region"
        )));
    }
    let prefactor = gamma * gamma / correction;

    let n = cov.nrows();
    let mut resolvent = cov * ((1.0 - rho) / gamma);
    for i in 0..n {
        resolvent[(i, i)] += rho;
    }
    let chol = Cholesky::new(resolvent)
        .ok_or_else(|| Error::Numeric("resolvent is not positive definite".into()))?;
    let ones = DVector::from_element(n, 1.0);
    let u = chol.solve(&ones);
    let numerator = (u.transpose() * cov * &u)[(0, 0)];
    let denominator = u.iter().sum::<f64>().powi(2);
    if denominator <= 0.0 {
        return Err(Error::Numeric("degenerate resolvent normalization".into()));
    }
    Ok(prefactor * numerator / denominator)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::portfolio::{realized_risk, Portfolio};
    use approx::assert_abs_diff_eq;

    fn two_atom() -> SpectralModel {
        SpectralModel::new(vec![1.0, 3.0], 0.5).unwrap()
    }

    #[test]
    fn flat_spectrum_gives_gamma_one() {
        let model = SpectralModel::new(vec![1.0; 20], 0.5).unwrap();
        for &rho in &[0.2, 0.5, 0.8, 1.0] {
            assert_abs_diff_eq!(solve_gamma(&model, rho).unwrap(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rho_one_gives_gamma_kappa() {
        let model = SpectralModel::new(vec![0.5, 1.5, 2.0, 4.0], 0.7).unwrap();
        assert_abs_diff_eq!(solve_gamma(&model, 1.0).unwrap(), model.kappa(), epsilon = 1e-12);
    }

    #[test]
    fn two_atom_closed_form_gamma() {
        // Equal-weight {1, 3} at ρ = 0.5 reduces to 0.25γ² = 0.75 → γ = √3.
        let gamma = solve_gamma(&two_atom(), 0.5).unwrap();
        assert_abs_diff_eq!(gamma, 3.0f64.sqrt(), epsilon = 1e-10);
    }

    #[test]
    fn gamma_residual_is_tiny() {
        for spectrum in [vec![1.0, 3.0], vec![0.2, 0.7, 1.1, 5.0], vec![2.0; 10]] {
            let model = SpectralModel::new(spectrum, 0.5).unwrap();
            for &rho in &[0.3, 0.6, 0.9] {
                let gamma = solve_gamma(&model, rho).unwrap();
                let residual = (gamma_equation(&model, rho, gamma) - 1.0).abs();
                assert!(residual <= 1e-12, "residual {residual} at rho {rho}");
            }
        }
    }

    #[test]
    fn flat_spectrum_beta_is_c() {
        let model = SpectralModel::new(vec![1.0; 8], 0.37).unwrap();
        let beta = beta_coeff(&model, 0.5, 1.0).unwrap();
        assert_abs_diff_eq!(beta, 0.37, epsilon = 1e-12);
    }

    #[test]
    fn rho_one_beta_is_c_times_second_moment() {
        // At ρ = 1 the denominator is γ² and the γ² factors cancel, leaving
        // β = c · (1/N) Σ λ².
        let model = SpectralModel::new(vec![0.5, 1.5, 2.5], 0.6).unwrap();
        let gamma = solve_gamma(&model, 1.0).unwrap();
        let beta = beta_coeff(&model, 1.0, gamma).unwrap();
        let m2 = (0.25 + 2.25 + 6.25) / 3.0;
        assert_abs_diff_eq!(beta, 0.6 * m2, epsilon = 1e-12);
    }

    #[test]
    fn two_atom_beta_value() {
        let gamma = 3.0f64.sqrt();
        let beta = beta_coeff(&two_atom(), 0.5, gamma).unwrap();
        // Direct two-term average: 0.5·(cγ²/ (0.5γ+0.5)² + cγ²·9/(0.5γ+1.5)²).
        let d1 = 0.5 * gamma + 0.5;
        let d2 = 0.5 * gamma + 1.5;
        let expected = 0.5 * (0.5 * 3.0 / (d1 * d1) + 0.5 * 3.0 * 9.0 / (d2 * d2));
        assert_abs_diff_eq!(beta, expected, epsilon = 1e-12);
        assert!((beta - 1.6077).abs() < 1e-3);
    }

    #[test]
    fn identity_covariance_closed_form_risk() {
        let n = 40;
        let c = 0.5;
        let cov = DMatrix::identity(n, n);
        for &rho in &[0.3, 0.7, 1.0] {
            let risk = risk_deterministic_equivalent(&cov, rho, c).unwrap();
            let expected = (1.0 / n as f64) / (1.0 - c * (1.0 - rho) * (1.0 - rho));
            assert_abs_diff_eq!(risk, expected, epsilon = 1e-12);
        }
    }

    #[test]
    fn rho_one_matches_uniform_portfolio_risk() {
        let cov = crate::synthetic::one_factor_covariance(30, 0.16, 0.5, 1.5, 0.2).unwrap();
        let risk = risk_deterministic_equivalent(&cov, 1.0, 0.5).unwrap();
        let uniform = Portfolio::uniform((0..30).map(|i| format!("A{i}")).collect());
        let expected = realized_risk(&uniform, &cov).unwrap();
        assert_abs_diff_eq!(risk, expected, epsilon = 1e-12);
    }

    #[test]
    fn scaling_relations() {
        let cov = crate::synthetic::one_factor_covariance(20, 0.16, 0.5, 1.5, 0.2).unwrap();
        let a = 7.3;
        let model = SpectralModel::from_matrix(&cov, 0.5).unwrap();
        let scaled = SpectralModel::from_matrix(&(&cov * a), 0.5).unwrap();
        let rho = 0.6;
        let g = solve_gamma(&model, rho).unwrap();
        let gs = solve_gamma(&scaled, rho).unwrap();
        assert!((gs - a * g).abs() < 1e-10 * gs.abs());
        let b = beta_coeff(&model, rho, g).unwrap();
        let bs = beta_coeff(&scaled, rho, gs).unwrap();
        // β carries the square of the spectral scale; the correction factor
        // γ² − β(1−ρ)² then scales uniformly and the risk scales linearly.
        assert!((bs - a * a * b).abs() < 1e-10 * bs.abs());
        let r = risk_deterministic_equivalent(&cov, rho, 0.5).unwrap();
        let rs = risk_deterministic_equivalent(&(&cov * a), rho, 0.5).unwrap();
        assert!((rs - a * r).abs() < 1e-10 * rs.abs());
    }

    #[test]
    fn inadmissible_rho_is_rejected() {
        let model = SpectralModel::new(vec![1.0, 2.0], 2.0).unwrap();
        // c = 2 → lower open endpoint 0.5.
        assert!(solve_gamma(&model, 0.4).is_err());
        assert!(solve_gamma(&model, 0.6).is_ok());
    }
}
