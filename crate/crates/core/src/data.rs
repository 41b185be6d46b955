//! Input panels, price-to-return transformation, demeaning, and the
//! admissible shrinkage interval.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::{Error, Result};

/// Panel of strictly positive prices, one row per asset, one column per date.
#[derive(Debug, Clone)]
pub struct PricePanel {
    prices: DMatrix<f64>,
    asset_ids: Vec<String>,
    dates: Vec<String>,
}

impl PricePanel {
    /// Build a panel from raw parts, enforcing positivity and shape invariants.
    pub fn new(prices: DMatrix<f64>, asset_ids: Vec<String>, dates: Vec<String>) -> Result<Self> {
        let (n_assets, n_dates) = prices.shape();
        if n_assets < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 assets, got {n_assets}"
            )));
        }
        if n_dates < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 dates, got {n_dates}"
            )));
        }
        if asset_ids.len() != n_assets {
            return Err(Error::Validation(format!(
                "{} asset ids for {} price rows",
                asset_ids.len(),
                n_assets
            )));
        }
        if dates.len() != n_dates {
            return Err(Error::Validation(format!(
                "{} dates for {} price columns",
                dates.len(),
                n_dates
            )));
        }
        for i in 1..asset_ids.len() {
            if asset_ids[..i].contains(&asset_ids[i]) {
                return Err(Error::Validation(format!(
                    "duplicate asset id {:?}",
                    asset_ids[i]
                )));
            }
        }
        for w in dates.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::Validation(format!(
                    "dates not strictly increasing: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        for (i, id) in asset_ids.iter().enumerate() {
            for (t, date) in dates.iter().enumerate() {
                let p = prices[(i, t)];
                if !p.is_finite() || p <= 0.0 {
                    return Err(Error::Validation(format!(
                        "non-positive price {p} for asset {id:?} on {date}"
                    )));
                }
            }
        }
        Ok(Self {
            prices,
            asset_ids,
            dates,
        })
    }

    pub fn prices(&self) -> &DMatrix<f64> {
        &self.prices
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    /// Number of assets N.
    pub fn n_assets(&self) -> usize {
        self.prices.nrows()
    }

    /// Number of return periods L (one fewer than the number of dates).
    pub fn n_periods(&self) -> usize {
        self.prices.ncols() - 1
    }
}

/// Panel of asset log returns, one row per asset, one column per period.
#[derive(Debug, Clone)]
pub struct ReturnPanel {
    returns: DMatrix<f64>,
    asset_ids: Vec<String>,
    dates: Vec<String>,
    demeaned: bool,
}

impl ReturnPanel {
    /// Build a return panel directly (e.g. from synthetic data).
    pub fn new(returns: DMatrix<f64>, asset_ids: Vec<String>, dates: Vec<String>) -> Result<Self> {
        let (n_assets, n_periods) = returns.shape();
        if n_periods < 2 {
            return Err(Error::Validation(format!(
                "need at least 2 return periods, got {n_periods}"
            )));
        }
        if asset_ids.len() != n_assets {
            return Err(Error::Validation(format!(
                "{} asset ids for {} return rows",
                asset_ids.len(),
                n_assets
            )));
        }
        if dates.len() != n_periods {
            return Err(Error::Validation(format!(
                "{} dates for {} return columns",
                dates.len(),
                n_periods
            )));
        }
        if returns.iter().any(|v| !v.is_finite()) {
            return Err(Error::Validation("non-finite return value".into()));
        }
        Ok(Self {
            returns,
            asset_ids,
            dates,
            demeaned: false,
        })
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn asset_ids(&self) -> &[String] {
        &self.asset_ids
    }

    pub fn dates(&self) -> &[String] {
        &self.dates
    }

    pub fn is_demeaned(&self) -> bool {
        self.demeaned
    }

    /// Number of assets N.
    pub fn n_assets(&self) -> usize {
        self.returns.nrows()
    }

    /// Number of periods n.
    pub fn n_periods(&self) -> usize {
        self.returns.ncols()
    }

    /// Aspect ratio c_N = N/n.
    pub fn aspect_ratio(&self) -> f64 {
        self.n_assets() as f64 / self.n_periods() as f64
    }

    /// Sub-panel covering columns `[start, end)`, keeping labels aligned.
    pub fn window(&self, start: usize, end: usize) -> Result<Self> {
        if start >= end || end > self.n_periods() {
            return Err(Error::Validation(format!(
                "window [{start}, {end}) out of range for {} periods",
                self.n_periods()
            )));
        }
        Ok(Self {
            returns: self.returns.columns(start, end - start).into_owned(),
            asset_ids: self.asset_ids.clone(),
            dates: self.dates[start..end].to_vec(),
            demeaned: self.demeaned,
        })
    }
}

/// Load a wide-format price CSV: header `date,<id1>,...,<idN>`, one row per date.
pub fn load_price_csv(path: impl AsRef<Path>) -> Result<PricePanel> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 1,
            column: "header".into(),
            message: e.to_string(),
        })?
        .clone();
    if headers.len() < 3 {
        return Err(Error::Validation(format!(
            "need at least 2 asset columns, got {}",
            headers.len().saturating_sub(1)
        )));
    }
    let asset_ids: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();

    let mut dates = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let row_no = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| Error::Parse {
            row: row_no,
            column: "record".into(),
            message: e.to_string(),
        })?;
        if record.len() != headers.len() {
            return Err(Error::Parse {
                row: row_no,
                column: "record".into(),
                message: format!("expected {} fields, got {}", headers.len(), record.len()),
            });
        }
        let date = record[0].to_string();
        if dates.contains(&date) {
            return Err(Error::Validation(format!("duplicate date {date:?}")));
        }
        let mut prices = Vec::with_capacity(asset_ids.len());
        for (j, cell) in record.iter().skip(1).enumerate() {
            let value: f64 = cell.parse().map_err(|_| Error::Parse {
                row: row_no,
                column: asset_ids[j].clone(),
                message: format!("non-numeric price {cell:?}"),
            })?;
            if !value.is_finite() || value <= 0.0 {
                return Err(Error::Parse {
                    row: row_no,
                    column: asset_ids[j].clone(),
                    message: format!("non-positive price {value}"),
                });
            }
            prices.push(value);
        }
        dates.push(date);
        rows.push(prices);
    }

    if rows.len() < 2 {
        return Err(Error::Validation(format!(
            "need at least 2 date rows, got {}",
            rows.len()
        )));
    }

    // Rows arrive date-ordered or not; sort by date before building the panel.
    let mut order: Vec<usize> = (0..dates.len()).collect();
    order.sort_by(|&a, &b| dates[a].cmp(&dates[b]));
    let sorted_dates: Vec<String> = order.iter().map(|&i| dates[i].clone()).collect();

    let n_assets = asset_ids.len();
    let n_dates = rows.len();
    let prices = DMatrix::from_fn(n_assets, n_dates, |i, t| rows[order[t]][i]);
    PricePanel::new(prices, asset_ids, sorted_dates)
}

/// Continuously compounded returns: `r[i][t] = ln(p[i][t+1] / p[i][t])`.
pub fn log_returns(panel: &PricePanel) -> ReturnPanel {
    let n_assets = panel.n_assets();
    let n_periods = panel.n_periods();
    let prices = panel.prices();
    let returns = DMatrix::from_fn(n_assets, n_periods, |i, t| {
        (prices[(i, t + 1)] / prices[(i, t)]).ln()
    });
    ReturnPanel {
        returns,
        asset_ids: panel.asset_ids().to_vec(),
        dates: panel.dates()[1..].to_vec(),
        demeaned: false,
    }
}

/// Subtract the across-time sample mean from every column.
///
/// One-way transformation: estimators that require centered samples assert
/// the flag instead of re-centering silently.
pub fn demean(panel: &ReturnPanel) -> Result<ReturnPanel> {
    if panel.demeaned {
        return Err(Error::Usage("panel is already demeaned".into()));
    }
    let n = panel.n_periods() as f64;
    let mut mean = DVector::zeros(panel.n_assets());
    for t in 0..panel.n_periods() {
        mean += panel.returns.column(t);
    }
    mean /= n;
    let mut returns = panel.returns.clone();
    for mut col in returns.column_iter_mut() {
        col -= &mean;
    }
    Ok(ReturnPanel {
        returns,
        asset_ids: panel.asset_ids.clone(),
        dates: panel.dates.clone(),
        demeaned: true,
    })
}

/// Admissible shrinkage interval `[ε + max(0, 1 − n/N), 1]`.
pub fn admissible_rho_range(n_assets: usize, n_periods: usize, epsilon: f64) -> Result<(f64, f64)> {
    if n_assets < 2 || n_periods < 2 {
        return Err(Error::Validation(format!(
            "need N ≥ 2 and n ≥ 2, got N={n_assets}, n={n_periods}"
        )));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Validation(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    let c = n_assets as f64 / n_periods as f64;
    let lower = epsilon + (1.0 - 1.0 / c).max(0.0);
    if lower >= 1.0 {
        return Err(Error::Validation(format!(
            "empty admissible interval: epsilon {epsilon} too large for N/n = {c}"
        )));
    }
    Ok((lower, 1.0))
}
