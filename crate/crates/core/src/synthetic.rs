//! Seeded generators for elliptically distributed return panels and the
//! one-factor covariance model used in the synthetic experiments.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::data::ReturnPanel;
use crate::{Error, Result};

/// Radial mixing law for the elliptical model `x = μ + √τ C^{1/2} y`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case", tag = "law")]
pub enum TauLaw {
    /// τ ≡ 1 (Gaussian-like samples).
    Constant,
    /// τ = d/χ²_d, giving multivariate Student-T samples.
    StudentT { dof: u32 },
}

/// Specification of one synthetic panel.
#[derive(Debug, Clone)]
pub struct EllipticalSpec {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub tau_law: TauLaw,
    pub n_periods: usize,
    pub seed: u64,
}

impl EllipticalSpec {
    fn validate(&self) -> Result<()> {
        let n = self.mean.len();
        if self.covariance.nrows() != n || self.covariance.ncols() != n {
            return Err(Error::Validation(format!(
                "covariance is {}×{} for a mean of length {n}",
                self.covariance.nrows(),
                self.covariance.ncols()
            )));
        }
        if n < 2 || self.n_periods < 2 {
            return Err(Error::Validation(format!(
                "need N ≥ 2 and n ≥ 2, got N={n}, n={}",
                self.n_periods
            )));
        }
        if let TauLaw::StudentT { dof } = self.tau_law {
            if dof < 3 {
                return Err(Error::Validation(format!(
                    "Student-T mixing requires d ≥ 3 so E[τ] is finite, got d={dof}"
                )));
            }
        }
        Ok(())
    }
}

/// One-factor covariance `C = σ² b bᵀ + σ_r² I` with loadings `b` evenly
/// spaced on `[b_lo, b_hi]`.
pub fn one_factor_covariance(
    n_assets: usize,
    sigma: f64,
    b_lo: f64,
    b_hi: f64,
    sigma_r: f64,
) -> Result<DMatrix<f64>> {
    if n_assets < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 assets, got {n_assets}"
        )));
    }
    if sigma <= 0.0 || sigma_r <= 0.0 {
        return Err(Error::Validation(format!(
            "factor and residual volatilities must be positive, got σ={sigma}, σ_r={sigma_r}"
        )));
    }
    if b_lo > b_hi {
        return Err(Error::Validation(format!(
            "loading range is empty: [{b_lo}, {b_hi}]"
        )));
    }
    let step = (b_hi - b_lo) / (n_assets - 1) as f64;
    let loadings = DVector::from_fn(n_assets, |i, _| b_lo + step * i as f64);
    let mut cov = &loadings * loadings.transpose() * (sigma * sigma);
    for i in 0..n_assets {
        cov[(i, i)] += sigma_r * sigma_r;
    }
    Ok(cov)
}

/// A point uniform on the sphere of radius √N: an isotropic Gaussian vector
/// scaled to norm √N.
pub fn sphere_point(rng: &mut ChaCha12Rng, n: usize) -> DVector<f64> {
    loop {
        let g: DVector<f64> = DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
        let norm = g.norm();
        if norm > 0.0 {
            return g * ((n as f64).sqrt() / norm);
        }
    }
}

/// Draw τ per the mixing law. Student-T χ² draws above 1e12 are rejected to
/// keep τ bounded away from zero.
pub fn draw_tau(rng: &mut ChaCha12Rng, law: TauLaw) -> f64 {
    match law {
        TauLaw::Constant => 1.0,
        TauLaw::StudentT { dof } => {
            let chi2 = ChiSquared::new(f64::from(dof)).expect("dof ≥ 3");
            loop {
                let draw = chi2.sample(rng);
                if draw <= 1e12 && draw > 0.0 {
                    return f64::from(dof) / draw;
                }
            }
        }
    }
}

fn symmetric_sqrt(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eigen = cov.clone().symmetric_eigen();
    let mut roots = eigen.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v <= 0.0 {
            return Err(Error::Validation(format!(
                "covariance has non-positive eigenvalue {v}"
            )));
        }
        *v = v.sqrt();
    }
    Ok(&eigen.eigenvectors * DMatrix::from_diagonal(&roots) * eigen.eigenvectors.transpose())
}

/// Per-column RNG keyed by (seed, t): identical panels regardless of the
/// order columns are generated in.
fn column_rng(seed: u64, t: usize) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(t as u64 + 1);
    rng
}

/// Generate a seeded elliptical panel `x_t = μ + √τ_t C^{1/2} y_t`.
pub fn sample_elliptical(spec: &EllipticalSpec) -> Result<ReturnPanel> {
    spec.validate()?;
    let n_assets = spec.mean.len();
    let root = symmetric_sqrt(&spec.covariance)?;

    let mut returns = DMatrix::zeros(n_assets, spec.n_periods);
    for t in 0..spec.n_periods {
        let mut rng = column_rng(spec.seed, t);
        let y = sphere_point(&mut rng, n_assets);
        let tau = draw_tau(&mut rng, spec.tau_law);
        let x = &spec.mean + &root * y * tau.sqrt();
        returns.set_column(t, &x);
    }

    let ids = (0..n_assets).map(|i| format!("S{i:04}")).collect();
    let dates = (0..spec.n_periods).map(|t| format!("t{t:06}")).collect();
    ReturnPanel::new(returns, ids, dates)
}
