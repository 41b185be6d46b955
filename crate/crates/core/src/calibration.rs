//! Shrinkage-intensity calibration: the scaled consistent risk estimator and
//! its grid minimization.

use nalgebra::{Cholesky, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{tyler_shrinkage, weighted_scatter, ShrinkageEstimate, SolverOptions};
use crate::data::{admissible_rho_range, demean, ReturnPanel};
use crate::portfolio::{gmvp_weights, Portfolio};
use crate::{Error, Result};

/// Sampled risk curve ρ ↦ σ̂²_sc(ρ) with the selected minimizer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RiskCurve {
    pub rho_grid: Vec<f64>,
    pub sigma_sc: Vec<f64>,
    pub rho_star: f64,
    pub gamma_sc_at_star: f64,
}

impl RiskCurve {
    /// Plot-ready CSV with header `rho,sigma_sc`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,sigma_sc\n");
        for (rho, sigma) in self.rho_grid.iter().zip(&self.sigma_sc) {
            out.push_str(&format!("{rho},{sigma}\n"));
        }
        out
    }
}

fn centered(panel: &ReturnPanel) -> Result<ReturnPanel> {
    if panel.is_demeaned() {
        Ok(panel.clone())
    } else {
        demean(panel)
    }
}

fn check_match(panel: &ReturnPanel, est: &ShrinkageEstimate) -> Result<()> {
    if panel.n_assets() != est.n_assets() || panel.n_periods() != est.n_periods() {
        return Err(Error::Validation(format!(
            "estimate built for N={}, n={} but panel has N={}, n={}",
            est.n_assets(),
            est.n_periods(),
            panel.n_assets(),
            panel.n_periods()
        )));
    }
    Ok(())
}

/// Correction factor `1 − (1−ρ) c_N` shared by the scaled estimators.
fn correction(rho: f64, c_n: f64) -> f64 {
    1.0 - (1.0 - rho) * c_n
}

/// Consistent estimator of γ/κ:
/// `[1/(1−(1−ρ)c_N)] (1/n) Σ_t x̃_tᵀ Ĉ⁻¹ x̃_t / ‖x̃_t‖²`.
pub fn gamma_hat_sc(panel: &ReturnPanel, est: &ShrinkageEstimate) -> Result<f64> {
    check_match(panel, est)?;
    let centered = centered(panel)?;
    let x = centered.returns();
    let chol = Cholesky::new(est.matrix().clone())
        .ok_or_else(|| Error::Numeric("estimate is not positive definite".into()))?;
    let mut w = x.clone();
    if !chol.l_dirty().solve_lower_triangular_mut(&mut w) {
        return Err(Error::Numeric("triangular solve failed".into()));
    }
    let n = x.ncols() as f64;
    let mut sum = 0.0;
    for t in 0..x.ncols() {
        let norm2 = x.column(t).norm_squared();
        if norm2 == 0.0 {
            return Err(Error::DegenerateData(format!(
                "demeaned sample {t} has zero norm"
            )));
        }
        sum += w.column(t).norm_squared() / norm2;
    }
    Ok(sum / n / correction(est.rho(), est.aspect_ratio()))
}

/// Scaled risk estimate σ̂²_sc(ρ), evaluated in the cancelled form
/// `[γ̂_sc / (1−(1−ρ)c_N)] · 1ᵀĈ⁻¹ M Ĉ⁻¹1 / (1ᵀĈ⁻¹1)²` with
/// `M = (1/n) Σ_t x̃_t x̃_tᵀ / ((1/N) x̃_tᵀ Ĉ⁻¹ x̃_t)`.
///
/// The two (1−ρ) factors of the textbook expression cancel analytically, so
/// the formula stays evaluable at ρ = 1.
pub fn scaled_risk_estimate(panel: &ReturnPanel, est: &ShrinkageEstimate) -> Result<f64> {
    let gamma = gamma_hat_sc(panel, est)?;
    let centered = centered(panel)?;
    let x = centered.returns();
    let chol = Cholesky::new(est.matrix().clone())
        .ok_or_else(|| Error::Numeric("estimate is not positive definite".into()))?;
    let scatter = weighted_scatter(x, &chol)?;
    let ones = DVector::from_element(est.n_assets(), 1.0);
    let a = chol.solve(&ones);
    let numerator = (a.transpose() * &scatter * &a)[(0, 0)];
    let denominator = a.iter().sum::<f64>().powi(2);
    if denominator <= 0.0 {
        return Err(Error::Numeric("degenerate normalization 1ᵀĈ⁻¹1".into()));
    }
    Ok(gamma / correction(est.rho(), est.aspect_ratio()) * numerator / denominator)
}

/// Evaluate σ̂²_sc over a uniform grid on the admissible interval and pick
/// the minimizer (ties break toward the smallest ρ).
///
/// Every grid point solves its own fixed point from the configured
/// initializer, so results are independent of evaluation order.
pub fn optimize_rho(
    panel: &ReturnPanel,
    grid_size: usize,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<RiskCurve> {
    if grid_size < 2 {
        return Err(Error::Validation(format!(
            "grid_size must be ≥ 2, got {grid_size}"
        )));
    }
    let (lo, hi) = admissible_rho_range(panel.n_assets(), panel.n_periods(), epsilon)?;
    let step = (hi - lo) / (grid_size - 1) as f64;
    let rho_grid: Vec<f64> = (0..grid_size)
        .map(|k| {
            if k + 1 == grid_size {
                hi
            } else {
                lo + step * k as f64
            }
        })
        .collect();

    let centered = centered(panel)?;
    let evaluated: Result<Vec<(f64, f64)>> = rho_grid
        .par_iter()
        .map(|&rho| {
            let est = tyler_shrinkage(&centered, rho, opts)
                .map_err(|e| e.with_context(format!("while solving at rho = {rho}")))?;
            let sigma = scaled_risk_estimate(&centered, &est)
                .map_err(|e| e.with_context(format!("while evaluating risk at rho = {rho}")))?;
            let gamma = gamma_hat_sc(&centered, &est)?;
            Ok((sigma, gamma))
        })
        .collect();
    let evaluated = evaluated?;

    let sigma_sc: Vec<f64> = evaluated.iter().map(|&(s, _)| s).collect();
    let mut best = 0;
    for (k, &s) in sigma_sc.iter().enumerate() {
        if s < sigma_sc[best] {
            best = k;
        }
    }
    Ok(RiskCurve {
        rho_star: rho_grid[best],
        gamma_sc_at_star: evaluated[best].1,
        rho_grid,
        sigma_sc,
    })
}

/// Solve the fixed point at a given ρ and form the plug-in GMVP.
pub fn build_portfolio_at(
    panel: &ReturnPanel,
    rho: f64,
    opts: &SolverOptions,
) -> Result<(ShrinkageEstimate, Portfolio)> {
    let est = tyler_shrinkage(panel, rho, opts)?;
    let portfolio = gmvp_weights(est.matrix(), panel.asset_ids())?;
    Ok((est, portfolio))
}

/// Full calibration pipeline: optimize ρ, re-solve the fixed point at ρ°,
/// and build the optimized minimum-variance portfolio.
pub fn build_optimized_portfolio(
    panel: &ReturnPanel,
    grid_size: usize,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<(RiskCurve, ShrinkageEstimate, Portfolio)> {
    let curve = optimize_rho(panel, grid_size, epsilon, opts)?;
    let (est, portfolio) = build_portfolio_at(panel, curve.rho_star, opts)?;
    Ok((curve, est, portfolio))
}
