//! Covariance estimators: the sample covariance matrix and the
//! shrinkage-Tyler fixed point.

use nalgebra::{Cholesky, DMatrix};

use crate::data::{admissible_rho_range, demean, ReturnPanel};
use crate::{Error, Result};

/// Relative threshold below which a per-sample quadratic form counts as a
/// division-by-near-zero.
const QUADRATIC_FORM_GUARD: f64 = 1e-14;

/// Initializer for the fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Initializer {
    /// Start from the identity matrix (makes ρ = 1 exact in one step).
    #[default]
    Identity,
    /// Start from the trace-normalized sample covariance matrix.
    ScaledScm,
}

/// Options for the shrinkage-Tyler fixed-point solver.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct SolverOptions {
    /// Relative Frobenius tolerance on the fixed-point defect.
    pub tolerance: f64,
    /// Maximum number of Picard iterations.
    pub max_iterations: usize,
    /// Starting matrix.
    pub initializer: Initializer,
}

impl Default for SolverOptions {
    fn default() -> Self {
        // The Picard rate degrades as ρ approaches the lower endpoint; at
        // ρ ≈ 0.01 the iteration needs on the order of 1500 steps to reach
        // 1e-10, so the budget leaves headroom for the smallest grid points.
        Self {
            tolerance: 1e-10,
            max_iterations: 5000,
            initializer: Initializer::Identity,
        }
    }
}

impl SolverOptions {
    fn validate(&self) -> Result<()> {
        if !(1e-14..=1e-2).contains(&self.tolerance) {
            return Err(Error::Validation(format!(
                "tolerance must lie in [1e-14, 1e-2], got {}",
                self.tolerance
            )));
        }
        if self.max_iterations < 1 {
            return Err(Error::Validation("max_iterations must be ≥ 1".into()));
        }
        Ok(())
    }
}

/// A converged shrinkage-Tyler covariance estimate with its diagnostics.
#[derive(Debug, Clone)]
pub struct ShrinkageEstimate {
    matrix: DMatrix<f64>,
    rho: f64,
    iterations: usize,
    residual: f64,
    n_assets: usize,
    n_periods: usize,
}

impl ShrinkageEstimate {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Relative Frobenius fixed-point defect of the returned matrix.
    pub fn residual(&self) -> f64 {
        self.residual
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn n_periods(&self) -> usize {
        self.n_periods
    }

    /// Aspect ratio c_N = N/n of the panel the estimate was built from.
    pub fn aspect_ratio(&self) -> f64 {
        self.n_assets as f64 / self.n_periods as f64
    }
}

/// Sample covariance `(1/n) Σ_t x̃_t x̃_tᵀ` of the demeaned panel.
pub fn sample_covariance(panel: &ReturnPanel) -> Result<DMatrix<f64>> {
    if panel.is_demeaned() {
        return Err(Error::Usage(
            "sample_covariance demeans internally; pass the raw panel".into(),
        ));
    }
    let centered = demean(panel)?;
    let x = centered.returns();
    let n = x.ncols() as f64;
    let mut cov = x * x.transpose();
    cov /= n;
    Ok(cov)
}

/// Demeaned columns with zero-sample detection.
fn centered_columns(panel: &ReturnPanel) -> Result<DMatrix<f64>> {
    let centered = if panel.is_demeaned() {
        panel.clone()
    } else {
        demean(panel)?
    };
    let x = centered.returns();
    for (t, col) in x.column_iter().enumerate() {
        if col.norm_squared() == 0.0 {
            return Err(Error::DegenerateData(format!(
                "demeaned sample {t} is the zero vector"
            )));
        }
    }
    Ok(x.clone())
}

/// One evaluation of the fixed-point map
/// `C ↦ (1−ρ)(1/n) Σ_t x̃_t x̃_tᵀ / ((1/N) x̃_tᵀ C⁻¹ x̃_t) + ρ I`.
///
/// Also used by the risk calibration, which needs the weighted scatter
/// `(1/n) Σ_t x̃_t x̃_tᵀ / ((1/N) x̃_tᵀ C⁻¹ x̃_t)` on its own.
pub(crate) fn weighted_scatter(
    x: &DMatrix<f64>,
    chol: &Cholesky<f64, nalgebra::Dyn>,
) -> Result<DMatrix<f64>> {
    let n_assets = x.nrows();
    let n_periods = x.ncols();
    // One triangular solve for the whole panel: W = L⁻¹X, q_t = ‖w_t‖²/N.
    let mut w = x.clone();
    chol.l_dirty()
        .solve_lower_triangular_unchecked_mut(&mut w);
    let mut scaled = x.clone();
    for t in 0..n_periods {
        let q = w.column(t).norm_squared() / n_assets as f64;
        let floor = QUADRATIC_FORM_GUARD * x.column(t).norm_squared() / n_assets as f64;
        if q < floor {
            return Err(Error::DegenerateData(format!(
                "quadratic form for sample {t} fell below the division guard ({q:.3e})"
            )));
        }
        scaled.column_mut(t).scale_mut(1.0 / q.sqrt());
    }
    let mut m = &scaled * scaled.transpose();
    m /= n_periods as f64;
    Ok(m)
}

fn fixed_point_map(
    x: &DMatrix<f64>,
    c: &DMatrix<f64>,
    rho: f64,
) -> Result<DMatrix<f64>> {
    let n_assets = x.nrows();
    let chol = Cholesky::new(c.clone()).ok_or_else(|| {
        Error::Numeric("iterate lost positive definiteness during factorization".into())
    })?;
    let mut next = weighted_scatter(x, &chol)?;
    next *= 1.0 - rho;
    for i in 0..n_assets {
        next[(i, i)] += rho;
    }
    // The map is symmetric by construction; remove rounding skew.
    let sym = (&next + next.transpose()) * 0.5;
    Ok(sym)
}

/// Solve the shrinkage-Tyler fixed point by Picard iteration.
///
/// The returned matrix `C` satisfies
/// `‖C − map(C)‖_F / ‖C‖_F ≤ opts.tolerance`, where `map` is the
/// regularized Tyler update with intensity `rho`.
pub fn tyler_shrinkage(
    panel: &ReturnPanel,
    rho: f64,
    opts: &SolverOptions,
) -> Result<ShrinkageEstimate> {
    opts.validate()?;
    let n_assets = panel.n_assets();
    let n_periods = panel.n_periods();
    let open_lower = (1.0 - n_periods as f64 / n_assets as f64).max(0.0);
    if !(rho > open_lower && rho <= 1.0) {
        return Err(Error::Validation(format!(
            "rho {rho} outside the admissible interval ({open_lower}, 1] for N={n_assets}, n={n_periods}"
        )));
    }

    let x = centered_columns(panel)?;

    let mut current = match opts.initializer {
        Initializer::Identity => DMatrix::identity(n_assets, n_assets),
        Initializer::ScaledScm => {
            let scm = &x * x.transpose() / n_periods as f64;
            let scale = scm.trace() / n_assets as f64;
            if scale <= 0.0 {
                return Err(Error::DegenerateData("zero-trace sample covariance".into()));
            }
            let mut scm = scm / scale;
            // Keep the start safely positive definite when n < N.
            for i in 0..n_assets {
                scm[(i, i)] += rho;
            }
            scm
        }
    };

    let mut last_residual = f64::INFINITY;
    for iteration in 0..opts.max_iterations {
        let next = fixed_point_map(&x, &current, rho)?;
        let defect = (&next - &current).norm() / current.norm();
        if defect <= opts.tolerance {
            // `current` itself satisfies the fixed-point contract.
            return Ok(ShrinkageEstimate {
                matrix: current,
                rho,
                iterations: iteration + 1,
                residual: defect,
                n_assets,
                n_periods,
            });
        }
        last_residual = defect;
        current = next;
    }

    Err(Error::NoConvergence {
        max_iterations: opts.max_iterations,
        residual: last_residual,
        tolerance: opts.tolerance,
    })
}

/// Recompute the fixed-point defect of an estimate from its definition.
///
/// Independent check used by diagnostics and tests; reuses only the panel and
/// the estimate's matrix, not the solver's internal state.
pub fn fixed_point_defect(panel: &ReturnPanel, est: &ShrinkageEstimate) -> Result<f64> {
    let x = centered_columns(panel)?;
    let mapped = fixed_point_map(&x, est.matrix(), est.rho())?;
    Ok((mapped - est.matrix()).norm() / est.matrix().norm())
}

/// Convenience: admissible interval for this panel (see `data::admissible_rho_range`).
pub fn panel_rho_range(panel: &ReturnPanel, epsilon: f64) -> Result<(f64, f64)> {
    admissible_rho_range(panel.n_assets(), panel.n_periods(), epsilon)
}
