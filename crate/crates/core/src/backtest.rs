//! Rolling-window out-of-sample evaluation of covariance estimators.

use serde::{Deserialize, Serialize};

use crate::calibration::{build_portfolio_at, optimize_rho};
use crate::covariance::{sample_covariance, SolverOptions};
use crate::data::ReturnPanel;
use crate::portfolio::{gmvp_weights, Portfolio};
use crate::{Error, Result};

/// Covariance estimator used at each rebalance date.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum EstimatorChoice {
    /// Shrinkage-Tyler with ρ re-optimized every window.
    StOptimized {
        grid_size: usize,
        epsilon: f64,
        opts: SolverOptions,
    },
    /// Sample covariance plug-in.
    Scm,
    /// Identity plug-in (uniform 1/N portfolio).
    Identity,
}

impl EstimatorChoice {
    /// Default risk-calibrated configuration: 50-point grid, ε = 0.01.
    pub fn st_default() -> Self {
        EstimatorChoice::StOptimized {
            grid_size: 50,
            epsilon: 0.01,
            opts: SolverOptions::default(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EstimatorChoice::StOptimized { .. } => "st_optimized",
            EstimatorChoice::Scm => "scm",
            EstimatorChoice::Identity => "identity",
        }
    }
}

/// Rolling-window backtest configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestConfig {
    /// Training window length n (in return periods).
    pub window: usize,
    /// Rebalance stride: weights are held fixed for this many periods.
    pub hold: usize,
    pub estimator: EstimatorChoice,
    /// Periods per year for annualization (252 for daily data).
    pub annualization_days: usize,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            window: 300,
            hold: 10,
            estimator: EstimatorChoice::st_default(),
            annualization_days: 252,
        }
    }
}

/// Outcome of one rolling backtest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestResult {
    pub oos_returns: Vec<f64>,
    pub realized_risk_annualized: f64,
    /// ρ° selected at each rebalance (empty unless the estimator calibrates ρ).
    pub per_window_rhos: Vec<f64>,
    pub config: BacktestConfig,
}

/// Sample standard deviation (n−1 divisor) scaled by √annualization_days.
pub fn annualized_risk(returns: &[f64], annualization_days: usize) -> Result<f64> {
    if returns.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 returns, got {}",
            returns.len()
        )));
    }
    if returns.iter().all(|&r| r == returns[0]) {
        return Ok(0.0);
    }
    let m = returns.len() as f64;
    let mean = returns.iter().sum::<f64>() / m;
    let var = returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / (m - 1.0);
    Ok(var.sqrt() * (annualization_days as f64).sqrt())
}

/// One-day-step sliding annualized standard deviation.
pub fn rolling_risk_series(
    returns: &[f64],
    window: usize,
    annualization_days: usize,
) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(Error::Validation(format!(
            "rolling window must be ≥ 2, got {window}"
        )));
    }
    if window > returns.len() {
        return Err(Error::Validation(format!(
            "rolling window {window} exceeds series length {}",
            returns.len()
        )));
    }
    (0..=returns.len() - window)
        .map(|start| annualized_risk(&returns[start..start + window], annualization_days))
        .collect()
}

/// Reject training windows containing an asset with (numerically) zero
/// variance; those make every plug-in estimator ill-posed.
fn check_training_variance(training: &ReturnPanel) -> Result<()> {
    let x = training.returns();
    let n = x.ncols() as f64;
    for (i, id) in training.asset_ids().iter().enumerate() {
        let row = x.row(i);
        let mean = row.sum() / n;
        let centered_norm2: f64 = row.iter().map(|&v| (v - mean) * (v - mean)).sum();
        let raw_norm2: f64 = row.iter().map(|&v| v * v).sum();
        if centered_norm2 <= 1e-24 * raw_norm2 {
            return Err(Error::DegenerateData(format!(
                "asset {id:?} has zero variance in the training window"
            )));
        }
    }
    Ok(())
}

fn estimate_weights(
    training: &ReturnPanel,
    estimator: &EstimatorChoice,
) -> Result<(Portfolio, Option<f64>)> {
    match estimator {
        EstimatorChoice::StOptimized {
            grid_size,
            epsilon,
            opts,
        } => {
            let curve = optimize_rho(training, *grid_size, *epsilon, opts)?;
            let (_, portfolio) = build_portfolio_at(training, curve.rho_star, opts)?;
            Ok((portfolio, Some(curve.rho_star)))
        }
        EstimatorChoice::Scm => {
            let cov = sample_covariance(training)?;
            Ok((gmvp_weights(&cov, training.asset_ids())?, None))
        }
        EstimatorChoice::Identity => {
            Ok((Portfolio::uniform(training.asset_ids().to_vec()), None))
        }
    }
}

/// Run the rolling-window backtest.
///
/// At each rebalance date t (t = window, window+hold, ...) the covariance is
/// estimated from periods [t−window, t−1] and the resulting weights are held
/// fixed over the next `hold` periods. The final partial block is included,
/// so the out-of-sample count is exactly `n_periods − window`.
pub fn rolling_backtest(panel: &ReturnPanel, cfg: &BacktestConfig) -> Result<BacktestResult> {
    if panel.is_demeaned() {
        return Err(Error::Usage("backtest expects the raw (non-demeaned) panel".into()));
    }
    if cfg.window < 2 {
        return Err(Error::Validation(format!(
            "training window must be ≥ 2, got {}",
            cfg.window
        )));
    }
    if cfg.hold < 1 {
        return Err(Error::Validation("hold must be ≥ 1".into()));
    }
    let n_periods = panel.n_periods();
    if cfg.window + 1 > n_periods {
        return Err(Error::Validation(format!(
            "window {} leaves no out-of-sample periods in a panel of length {n_periods}",
            cfg.window
        )));
    }

    let mut oos_returns = Vec::with_capacity(n_periods - cfg.window);
    let mut per_window_rhos = Vec::new();

    let mut t = cfg.window;
    while t < n_periods {
        let training = panel.window(t - cfg.window, t)?;
        check_training_variance(&training).map_err(|e| {
            e.with_context(format!(
                "in training window [{}, {}) ending at period {t}",
                t - cfg.window,
                t
            ))
        })?;
        let (portfolio, rho) = estimate_weights(&training, &cfg.estimator).map_err(|e| {
            e.with_context(format!(
                "in training window [{}, {}) ending at period {t}",
                t - cfg.window,
                t
            ))
        })?;
        if let Some(rho) = rho {
            per_window_rhos.push(rho);
        }
        let block_end = (t + cfg.hold).min(n_periods);
        for day in t..block_end {
            let r = portfolio.weights().dot(&panel.returns().column(day));
            oos_returns.push(r);
        }
        t = block_end;
    }

    let realized_risk_annualized = annualized_risk(&oos_returns, cfg.annualization_days)?;
    Ok(BacktestResult {
        oos_returns,
        realized_risk_annualized,
        per_window_rhos,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::{sample_elliptical, EllipticalSpec, TauLaw};
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn gaussian_panel(n_assets: usize, n_periods: usize, seed: u64) -> ReturnPanel {
        let spec = EllipticalSpec {
            mean: DVector::zeros(n_assets),
            covariance: DMatrix::identity(n_assets, n_assets),
            tau_law: TauLaw::Constant,
            n_periods,
            seed,
        };
        sample_elliptical(&spec).unwrap()
    }

    #[test]
    fn constant_series_has_zero_risk() {
        assert_eq!(annualized_risk(&[0.01; 30], 252).unwrap(), 0.0);
    }

    #[test]
    fn alternating_series_matches_closed_form() {
        let r = 0.02;
        let m = 40;
        let series: Vec<f64> = (0..m).map(|i| if i % 2 == 0 { r } else { -r }).collect();
        let expected = r * (m as f64 / (m as f64 - 1.0)).sqrt() * 252f64.sqrt();
        assert_abs_diff_eq!(annualized_risk(&series, 252).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn unit_annualization_is_plain_std() {
        let series = [0.1, -0.2, 0.05, 0.0];
        let a = annualized_risk(&series, 1).unwrap();
        let b = annualized_risk(&series, 252).unwrap();
        assert_abs_diff_eq!(b, a * 252f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn annualized_risk_needs_two_points() {
        assert!(annualized_risk(&[0.1], 252).is_err());
    }

    #[test]
    fn rolling_series_counts() {
        let returns = vec![0.0; 436];
        let series = rolling_risk_series(&returns, 70, 252).unwrap();
        assert_eq!(series.len(), 367);
        assert!(series.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rolling_window_equal_to_length_gives_single_value() {
        let returns = [0.1, -0.1, 0.2];
        let series = rolling_risk_series(&returns, 3, 252).unwrap();
        assert_eq!(series.len(), 1);
        assert_abs_diff_eq!(series[0], annualized_risk(&returns, 252).unwrap(), epsilon = 0.0);
    }

    #[test]
    fn rolling_window_too_long_is_rejected() {
        assert!(rolling_risk_series(&[0.1, 0.2], 3, 252).is_err());
    }

    #[test]
    fn day_counts_for_736_day_panel() {
        let panel = gaussian_panel(5, 736, 42);
        let cfg = BacktestConfig {
            window: 300,
            hold: 10,
            estimator: EstimatorChoice::Identity,
            annualization_days: 252,
        };
        let result = rolling_backtest(&panel, &cfg).unwrap();
        assert_eq!(result.oos_returns.len(), 436);
        let series = rolling_risk_series(&result.oos_returns, 70, 252).unwrap();
        assert_eq!(series.len(), 367);
    }

    #[test]
    fn partial_final_block_is_included() {
        let panel = gaussian_panel(4, 320, 9);
        let cfg = BacktestConfig {
            window: 300,
            hold: 10,
            estimator: EstimatorChoice::Scm,
            annualization_days: 252,
        };
        let result = rolling_backtest(&panel, &cfg).unwrap();
        assert_eq!(result.oos_returns.len(), 20);
    }

    #[test]
    fn identity_estimator_gives_cross_sectional_means() {
        let panel = gaussian_panel(8, 50, 3);
        let cfg = BacktestConfig {
            window: 20,
            hold: 5,
            estimator: EstimatorChoice::Identity,
            annualization_days: 252,
        };
        let result = rolling_backtest(&panel, &cfg).unwrap();
        assert_eq!(result.oos_returns.len(), 30);
        for (k, &r) in result.oos_returns.iter().enumerate() {
            let day = 20 + k;
            let mean = panel.returns().column(day).sum() / 8.0;
            assert_abs_diff_eq!(r, mean, epsilon = 1e-14);
        }
        assert!(result.per_window_rhos.is_empty());
    }

    #[test]
    fn backtest_is_deterministic() {
        let panel = gaussian_panel(6, 80, 12);
        let cfg = BacktestConfig {
            window: 40,
            hold: 10,
            estimator: EstimatorChoice::StOptimized {
                grid_size: 5,
                epsilon: 0.05,
                opts: SolverOptions::default(),
            },
            annualization_days: 252,
        };
        let a = rolling_backtest(&panel, &cfg).unwrap();
        let b = rolling_backtest(&panel, &cfg).unwrap();
        assert_eq!(a.oos_returns, b.oos_returns);
        assert_eq!(a.per_window_rhos, b.per_window_rhos);
        assert_eq!(a.realized_risk_annualized, b.realized_risk_annualized);
        assert_eq!(a.per_window_rhos.len(), 4);
    }

    #[test]
    fn identity_risk_invariant_to_relabeling() {
        let panel = gaussian_panel(5, 60, 21);
        let n = panel.n_assets();
        // Reverse the asset order (rows and labels together).
        let returns = DMatrix::from_fn(n, panel.n_periods(), |i, t| {
            panel.returns()[(n - 1 - i, t)]
        });
        let ids: Vec<String> = panel.asset_ids().iter().rev().cloned().collect();
        let relabeled = ReturnPanel::new(returns, ids, panel.dates().to_vec()).unwrap();
        let cfg = BacktestConfig {
            window: 30,
            hold: 10,
            estimator: EstimatorChoice::Identity,
            annualization_days: 252,
        };
        let a = rolling_backtest(&panel, &cfg).unwrap();
        let b = rolling_backtest(&relabeled, &cfg).unwrap();
        assert_abs_diff_eq!(
            a.realized_risk_annualized,
            b.realized_risk_annualized,
            epsilon = 1e-14
        );
    }

    #[test]
    fn degenerate_training_window_aborts_with_context() {
        // Zero-variance asset in the training window.
        let n_periods = 30;
        let mut returns = gaussian_panel(3, n_periods, 7).returns().clone();
        for t in 0..20 {
            returns[(0, t)] = 0.001; // constant during training
        }
        let ids = vec!["A".into(), "B".into(), "C".into()];
        let dates = (0..n_periods).map(|t| format!("d{t:03}")).collect();
        let panel = ReturnPanel::new(returns, ids, dates).unwrap();
        let cfg = BacktestConfig {
            window: 20,
            hold: 10,
            estimator: EstimatorChoice::Scm,
            annualization_days: 252,
        };
        let err = rolling_backtest(&panel, &cfg).unwrap_err();
        assert!(err.to_string().contains("training window"), "{err}");
    }
}
