//! Free-boundary solutions over a list of cost levels.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::fbvp::{shoot, ShootControl};
use crate::market::MarketParams;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepValues {
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub fraction_lo: f64,
    pub fraction_hi: f64,
    pub delta_star: f64,
}

/// One cost level; `result` holds the solver's message when it failed.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda_buy: f64,
    pub lambda_sell: f64,
    pub result: std::result::Result<SweepValues, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    /// Region width in `beta` is nondecreasing in total cost over the
    /// successful rows; observed, not guaranteed.
    pub width_nondecreasing: bool,
}

/// Solves the free-boundary problem for each `(lambda_buy, lambda_sell)`.
/// Failing rows are recorded and the sweep continues.
pub fn sweep_costs(params: &MarketParams, lambdas: &[(f64, f64)], tol: f64) -> SweepTable {
    let control = ShootControl::default();
    let rows: Vec<SweepRow> = lambdas
        .iter()
        .map(|&(lambda_buy, lambda_sell)| {
            let p = MarketParams { lambda_buy, lambda_sell, ..*params };
            let result = shoot(&p, tol, &control)
                .map(|sol| {
                    let (fraction_lo, fraction_hi) = sol.fraction_bounds();
                    SweepValues {
                        beta_lo: sol.beta_lo,
                        beta_hi: sol.beta_hi,
                        fraction_lo,
                        fraction_hi,
                        delta_star: sol.delta_star,
                    }
                })
                .map_err(|e| e.to_string());
            SweepRow { lambda_buy, lambda_sell, result }
        })
        .collect();
    let mut ok: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.result.as_ref().ok().map(|v| (r.lambda_buy + r.lambda_sell, v.beta_hi - v.beta_lo)))
        .collect();
    ok.sort_by(|a, b| a.0.total_cmp(&b.0));
    let width_nondecreasing = ok.windows(2).all(|w| w[1].0 == w[0].0 || w[1].1 >= w[0].1);
    SweepTable { rows, width_nondecreasing }
}

/// CSV with one row per cost level and an `error` column.
pub fn write_sweep_csv<W: Write>(table: &SweepTable, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "lambda_buy",
        "lambda_sell",
        "beta_lo",
        "beta_hi",
        "fraction_lo",
        "fraction_hi",
        "delta_star",
        "error",
    ])?;
    let f = |v: f64| format!("{v:.16e}");
    for r in &table.rows {
        let mut rec = vec![f(r.lambda_buy), f(r.lambda_sell)];
        match &r.result {
            Ok(v) => {
                rec.extend([v.beta_lo, v.beta_hi, v.fraction_lo, v.fraction_hi, v.delta_star].map(f));
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat(String::new()).take(5));
                rec.push(e.clone());
            }
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
