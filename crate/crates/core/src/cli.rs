//! Experiment orchestration behind the command-line tool: resolved spec
//! files in, plot-ready CSV/JSON out.
//!
//! Every output file embeds the fully resolved spec (defaults and seed
//! included) so any table or figure can be regenerated from its own header.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotic::risk_deterministic_equivalent;
use crate::backtest::{
    annualized_risk, rolling_backtest, rolling_risk_series, BacktestConfig, EstimatorChoice,
};
use crate::bootstrap::variance_difference_test;
use crate::calibration::{build_optimized_portfolio, optimize_rho};
use crate::covariance::{sample_covariance, SolverOptions};
use crate::data::{load_price_csv, log_returns, ReturnPanel};
use crate::portfolio::{gmvp_weights, realized_risk, theoretical_risk, Portfolio};
use crate::synthetic::{one_factor_covariance, sample_elliptical, EllipticalSpec, TauLaw};
use crate::{Error, Result};

/// SplitMix64 step, used to derive independent per-repetition seeds.
fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn default_grid_size() -> usize {
    50
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_annualization() -> usize {
    252
}

fn default_rolling_window() -> usize {
    70
}

fn default_block_lengths() -> Vec<usize> {
    vec![5]
}

fn default_iterations() -> usize {
    2000
}

/// Covariance model for synthetic experiments.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "model")]
pub enum CovarianceModel {
    Identity,
    OneFactor {
        sigma: f64,
        b_lo: f64,
        b_hi: f64,
        sigma_r: f64,
    },
}

impl CovarianceModel {
    pub fn build(&self, n_assets: usize) -> Result<DMatrix<f64>> {
        match *self {
            CovarianceModel::Identity => Ok(DMatrix::identity(n_assets, n_assets)),
            CovarianceModel::OneFactor {
                sigma,
                b_lo,
                b_hi,
                sigma_r,
            } => one_factor_covariance(n_assets, sigma, b_lo, b_hi, sigma_r),
        }
    }
}

/// Spec for the synthetic Monte Carlo sweep (risk-versus-n curves).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateSpec {
    pub n_assets: usize,
    pub n_sweep: Vec<usize>,
    pub tau: TauLaw,
    pub covariance: CovarianceModel,
    pub repetitions: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    pub seed: u64,
}

/// Spec for risk-curve calibration on a single panel.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CalibrateSpec {
    /// Price CSV path (wide format, date-first).
    pub input: String,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub solver: SolverOptions,
}

/// Spec for the rolling-window backtest over the in-scope estimators.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BacktestSpec {
    /// Price CSV path (wide format, date-first).
    pub input: String,
    pub window: usize,
    pub hold: usize,
    #[serde(default = "default_grid_size")]
    pub grid_size: usize,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub solver: SolverOptions,
    #[serde(default = "default_annualization")]
    pub annualization_days: usize,
    /// Window for the rolling out-of-sample risk series.
    #[serde(default = "default_rolling_window")]
    pub rolling_window: usize,
    /// Bootstrap parameters for the per-estimator p-values.
    #[serde(default = "default_block_lengths")]
    pub block_lengths: Vec<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub seed: u64,
}

/// Spec for a standalone bootstrap comparison of two return series.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoottestSpec {
    /// Single-column CSV (header `return`) for each strategy.
    pub input_a: String,
    pub input_b: String,
    #[serde(default = "default_block_lengths")]
    pub block_lengths: Vec<usize>,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    pub seed: u64,
}

/// An output file staged in memory; nothing touches disk until the whole
/// command has succeeded, so failures leave no partial outputs.
#[derive(Debug)]
pub struct OutputFile {
    pub name: String,
    pub content: String,
}

fn spec_header<S: Serialize>(spec: &S) -> String {
    format!(
        "# spec: {}\n",
        serde_json::to_string(spec).expect("spec serializes")
    )
}

fn write_outputs(out_dir: &Path, files: Vec<OutputFile>) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).map_err(|e| Error::Io {
        path: out_dir.display().to_string(),
        source: e,
    })?;
    let mut written = Vec::new();
    for file in files {
        let path = out_dir.join(&file.name);
        if let Err(e) = fs::write(&path, &file.content) {
            // Roll back anything already written.
            for earlier in &written {
                let _ = fs::remove_file(earlier);
            }
            return Err(Error::Io {
                path: path.display().to_string(),
                source: e,
            });
        }
        written.push(path);
    }
    Ok(written)
}

struct RepOutcome {
    st_risk: f64,
    rho_star: f64,
    det_equiv: f64,
    scm_risk: Option<f64>,
    identity_risk: f64,
}

/// Monte Carlo sweep over sample sizes: realized risk per estimator and the
/// selected ρ°, averaged over repetitions.
pub fn run_simulate(spec: &SimulateSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    if spec.repetitions < 1 {
        return Err(Error::Validation("repetitions must be ≥ 1".into()));
    }
    if spec.n_sweep.is_empty() {
        return Err(Error::Validation("n_sweep must not be empty".into()));
    }
    let cov = spec.covariance.build(spec.n_assets)?;
    let bound = theoretical_risk(&cov)?;
    let uniform = Portfolio::uniform((0..spec.n_assets).map(|i| format!("S{i:04}")).collect());
    let uniform_risk = realized_risk(&uniform, &cov)?;

    let mut risk_rows = Vec::new();
    let mut rho_rows = Vec::new();
    for &n_periods in &spec.n_sweep {
        let c_n = spec.n_assets as f64 / n_periods as f64;
        let outcomes: Result<Vec<RepOutcome>> = (0..spec.repetitions)
            .into_par_iter()
            .map(|rep| {
                let panel_spec = EllipticalSpec {
                    mean: DVector::zeros(spec.n_assets),
                    covariance: cov.clone(),
                    tau_law: spec.tau,
                    n_periods,
                    seed: mix_seed(spec.seed, (n_periods as u64) << 32 | rep as u64),
                };
                let panel = sample_elliptical(&panel_spec)?;
                let (curve, _est, portfolio) =
                    build_optimized_portfolio(&panel, spec.grid_size, spec.epsilon, &spec.solver)
                        .map_err(|e| {
                            e.with_context(format!("simulate rep {rep} at n = {n_periods}"))
                        })?;
                let st_risk = realized_risk(&portfolio, &cov)?;
                let det_equiv = risk_deterministic_equivalent(&cov, curve.rho_star, c_n)?;
                let scm_risk = if n_periods > spec.n_assets {
                    let scm = sample_covariance(&panel)?;
                    let h = gmvp_weights(&scm, panel.asset_ids())?;
                    Some(realized_risk(&h, &cov)?)
                } else {
                    None
                };
                Ok(RepOutcome {
                    st_risk,
                    rho_star: curve.rho_star,
                    det_equiv,
                    scm_risk,
                    identity_risk: uniform_risk,
                })
            })
            .collect();
        let outcomes = outcomes?;
        let reps = outcomes.len() as f64;
        let mean = |f: &dyn Fn(&RepOutcome) -> f64| outcomes.iter().map(|o| f(o)).sum::<f64>() / reps;
        risk_rows.push((n_periods, "st_optimized", mean(&|o| o.st_risk)));
        if outcomes.iter().all(|o| o.scm_risk.is_some()) {
            risk_rows.push((n_periods, "scm", mean(&|o| o.scm_risk.unwrap())));
        }
        risk_rows.push((n_periods, "identity", mean(&|o| o.identity_risk)));
        risk_rows.push((n_periods, "theoretical_bound", bound));
        risk_rows.push((n_periods, "deterministic_equivalent", mean(&|o| o.det_equiv)));
        rho_rows.push((n_periods, mean(&|o| o.rho_star)));
    }

    let header = spec_header(spec);
    let mut risk_csv = header.clone();
    risk_csv.push_str("n,estimator,mean_realized_risk\n");
    for (n, estimator, risk) in &risk_rows {
        risk_csv.push_str(&format!("{n},{estimator},{risk}\n"));
    }
    let mut rho_csv = header;
    rho_csv.push_str("n,mean_rho_star\n");
    for (n, rho) in &rho_rows {
        rho_csv.push_str(&format!("{n},{rho}\n"));
    }

    write_outputs(
        out_dir,
        vec![
            OutputFile {
                name: "risk_vs_n.csv".into(),
                content: risk_csv,
            },
            OutputFile {
                name: "rho_vs_n.csv".into(),
                content: rho_csv,
            },
        ],
    )
}

fn load_returns_from_prices(path: &str) -> Result<ReturnPanel> {
    let prices = load_price_csv(path)?;
    Ok(log_returns(&prices))
}

/// Calibrate the shrinkage intensity on a full price history.
pub fn run_calibrate(spec: &CalibrateSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let panel = load_returns_from_prices(&spec.input)?;
    let (curve, est, portfolio) =
        build_optimized_portfolio(&panel, spec.grid_size, spec.epsilon, &spec.solver)?;

    let mut curve_csv = spec_header(spec);
    curve_csv.push_str(&curve.to_csv());

    let report = serde_json::json!({
        "spec": spec,
        "rho_star": curve.rho_star,
        "gamma_sc_at_star": curve.gamma_sc_at_star,
        "sigma_sc_at_star": curve.sigma_sc[curve
            .rho_grid
            .iter()
            .position(|&r| r == curve.rho_star)
            .expect("rho_star on grid")],
        "solver": { "iterations": est.iterations(), "residual": est.residual() },
        "weights": portfolio
            .asset_ids()
            .iter()
            .zip(portfolio.weights().iter())
            .map(|(id, w)| serde_json::json!({ "asset": id, "weight": w }))
            .collect::<Vec<_>>(),
    });

    write_outputs(
        out_dir,
        vec![
            OutputFile {
                name: "risk_curve.csv".into(),
                content: curve_csv,
            },
            OutputFile {
                name: "calibration.json".into(),
                content: format!("{:#}\n", report),
            },
        ],
    )
}

/// Rolling backtest over the three in-scope estimators with bootstrap
/// p-values against the risk-calibrated strategy.
pub fn run_backtest(spec: &BacktestSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let panel = load_returns_from_prices(&spec.input)?;
    let estimators = [
        EstimatorChoice::StOptimized {
            grid_size: spec.grid_size,
            epsilon: spec.epsilon,
            opts: spec.solver,
        },
        EstimatorChoice::Scm,
        EstimatorChoice::Identity,
    ];

    let results: Result<Vec<_>> = estimators
        .iter()
        .map(|estimator| {
            let cfg = BacktestConfig {
                window: spec.window,
                hold: spec.hold,
                estimator: estimator.clone(),
                annualization_days: spec.annualization_days,
            };
            rolling_backtest(&panel, &cfg)
                .map(|r| (estimator.name(), r))
                .map_err(|e| e.with_context(format!("backtest with estimator {}", estimator.name())))
        })
        .collect();
    let results = results?;

    let header = spec_header(spec);
    let mut files = Vec::new();

    // Table-shaped report: annualized risk plus p-value vs the calibrated
    // strategy, one row per estimator and block length.
    let st_returns = results[0].1.oos_returns.clone();
    let mut table = header.clone();
    table.push_str("estimator,block_length,annualized_risk,p_value\n");
    for (name, result) in &results {
        for &block in &spec.block_lengths {
            let p = if *name == "st_optimized" {
                1.0
            } else {
                variance_difference_test(
                    &result.oos_returns,
                    &st_returns,
                    block,
                    spec.iterations,
                    spec.seed,
                )?
                .p_value
            };
            table.push_str(&format!(
                "{name},{block},{},{p}\n",
                result.realized_risk_annualized
            ));
        }
    }
    files.push(OutputFile {
        name: "table.csv".into(),
        content: table,
    });

    for (name, result) in &results {
        let mut oos = header.clone();
        oos.push_str("return\n");
        for r in &result.oos_returns {
            oos.push_str(&format!("{r}\n"));
        }
        files.push(OutputFile {
            name: format!("oos_returns_{name}.csv"),
            content: oos,
        });

        let series =
            rolling_risk_series(&result.oos_returns, spec.rolling_window, spec.annualization_days)?;
        let mut rolling = header.clone();
        rolling.push_str("risk\n");
        for v in &series {
            rolling.push_str(&format!("{v}\n"));
        }
        files.push(OutputFile {
            name: format!("rolling_risk_{name}.csv"),
            content: rolling,
        });
    }

    let mut rhos = header.clone();
    rhos.push_str("window_index,rho_star\n");
    for (k, rho) in results[0].1.per_window_rhos.iter().enumerate() {
        rhos.push_str(&format!("{k},{rho}\n"));
    }
    files.push(OutputFile {
        name: "window_rhos.csv".into(),
        content: rhos,
    });

    write_outputs(out_dir, files)
}

/// Read a single-column return CSV (header `return`).
pub fn load_return_series(path: &str) -> Result<Vec<f64>> {
    let content = fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_string(),
        source: e,
    })?;
    let mut values = Vec::new();
    for (idx, line) in content
        .lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .enumerate()
    {
        if idx == 0 {
            if line.trim() != "return" {
                return Err(Error::Parse {
                    row: 1,
                    column: "header".into(),
                    message: format!("expected header `return`, got {line:?}"),
                });
            }
            continue;
        }
        let value: f64 = line.trim().parse().map_err(|_| Error::Parse {
            row: idx + 1,
            column: "return".into(),
            message: format!("non-numeric return {line:?}"),
        })?;
        values.push(value);
    }
    Ok(values)
}

/// Bootstrap comparison of two stored return series, one report per block
/// length.
pub fn run_boottest(spec: &BoottestSpec, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let a = load_return_series(&spec.input_a)?;
    let b = load_return_series(&spec.input_b)?;
    let mut files = Vec::new();
    for &block in &spec.block_lengths {
        let test = variance_difference_test(&a, &b, block, spec.iterations, spec.seed)?;
        let report = serde_json::json!({ "spec": spec, "result": test });
        files.push(OutputFile {
            name: format!("boottest_b{block}.json"),
            content: format!("{:#}\n", report),
        });
    }
    write_outputs(out_dir, files)
}

/// Convenience used by tests and examples: calibrate an in-memory panel and
/// return the risk curve CSV (with spec header) without touching disk.
pub fn risk_curve_csv(
    panel: &ReturnPanel,
    grid_size: usize,
    epsilon: f64,
    opts: &SolverOptions,
) -> Result<String> {
    let curve = optimize_rho(panel, grid_size, epsilon, opts)?;
    Ok(curve.to_csv())
}

/// Annualized risk of a stored return series (used by the table pipeline).
pub fn series_annualized_risk(path: &str, annualization_days: usize) -> Result<f64> {
    let series = load_return_series(path)?;
    annualized_risk(&series, annualization_days)
}
