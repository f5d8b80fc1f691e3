//! Browser bindings: solve the no-trade region, simulate one path of the
//! strategy, and sweep cost levels. Every call returns a JSON string.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use shadow_merton::evaluation::sweep_costs;
use shadow_merton::io::to_json_line;
use shadow_merton::market::logistic;
use shadow_merton::reflected::{initial_beta, simulate_beta, step_count};
use shadow_merton::rng::PathSeed;
use shadow_merton::strategy::run_strategy;
use shadow_merton::{shoot, FreeBoundarySolution, MarketParams, ShadowCoefficients, ShootControl};

const TOL: f64 = 1e-10;
/// Keeps a browser tab responsive.
const MAX_STEPS: usize = 2_000_000;

fn market(mu: f64, sigma: f64, delta: f64, lambda_buy: f64, lambda_sell: f64) -> MarketParams {
    MarketParams { mu, sigma, delta, lambda_buy, lambda_sell, ..MarketParams::default() }
}

fn solved(p: &MarketParams) -> Result<FreeBoundarySolution, String> {
    let p = p.validate().map_err(|e| e.to_string())?;
    shoot(&p, TOL, &ShootControl::default()).map_err(|e| e.to_string())
}

/// Every `stride`-th index plus the last one, with at most about `max`
/// entries.
fn thin(len: usize, max: usize) -> Vec<usize> {
    let stride = len.div_ceil(max.max(2)).max(1);
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if idx.last() != Some(&(len - 1)) {
        idx.push(len - 1);
    }
    idx
}

fn pick(xs: &[f64], idx: &[usize]) -> Value {
    json!(idx.iter().map(|&i| xs[i]).collect::<Vec<_>>())
}

fn encode(v: &Value) -> Result<String, String> {
    to_json_line(v).map_err(|e| e.to_string())
}

/// Boundaries and the offset curve `g` with its slope.
pub fn solve_json(mu: f64, sigma: f64, delta: f64, lambda_buy: f64, lambda_sell: f64) -> Result<String, String> {
    let p = market(mu, sigma, delta, lambda_buy, lambda_sell);
    let sol = solved(&p)?;
    let nodes: Vec<_> = sol.grid().collect();
    let idx = thin(nodes.len(), 400);
    let (fraction_lo, fraction_hi) = sol.fraction_bounds();
    encode(&json!({
        "beta_lo": sol.beta_lo,
        "beta_hi": sol.beta_hi,
        "c_lo": sol.c_lo,
        "c_hi": sol.c_hi,
        "fraction_lo": fraction_lo,
        "fraction_hi": fraction_hi,
        "merton_fraction": p.merton_constants().0,
        "delta_star": sol.delta_star,
        "curve": {
            "y": idx.iter().map(|&i| nodes[i].y).collect::<Vec<_>>(),
            "fraction": idx.iter().map(|&i| logistic(nodes[i].y)).collect::<Vec<_>>(),
            "g": idx.iter().map(|&i| nodes[i].g).collect::<Vec<_>>(),
            "g_prime": idx.iter().map(|&i| nodes[i].g_prime).collect::<Vec<_>>(),
        },
    }))
}

/// One seeded path of prices, holdings and wealth, thinned to at most
/// `max_points` nodes.
#[allow(clippy::too_many_arguments)]
pub fn simulate_json(
    mu: f64,
    sigma: f64,
    delta: f64,
    lambda_buy: f64,
    lambda_sell: f64,
    horizon: f64,
    dt: f64,
    seed: u64,
    max_points: usize,
) -> Result<String, String> {
    let p = market(mu, sigma, delta, lambda_buy, lambda_sell);
    let n = step_count(horizon, dt).map_err(|e| e.to_string())?;
    if n > MAX_STEPS {
        return Err(format!("{n} steps is too many for the browser; use at most {MAX_STEPS}"));
    }
    let sol = solved(&p)?;
    let run = || -> shadow_merton::Result<_> {
        let coeffs = ShadowCoefficients::new(&sol);
        let (beta0, _) = initial_beta(&sol.params, &sol)?;
        let path = simulate_beta(&coeffs, beta0, horizon, dt, PathSeed::new(seed, 0)?)?;
        let outcome = run_strategy(&sol, &sol.params, &path)?;
        Ok((path, outcome))
    };
    let (path, out) = run().map_err(|e| e.to_string())?;
    let idx = thin(out.times.len(), max_points);
    let bid: Vec<f64> = out.s.iter().map(|s| (1.0 - lambda_sell) * s).collect();
    let ask: Vec<f64> = out.s.iter().map(|s| (1.0 + lambda_buy) * s).collect();
    let fraction: Vec<f64> = path.beta.iter().map(|&b| logistic(b)).collect();
    let summary = out.summary();
    encode(&json!({
        "t": pick(&out.times, &idx),
        "s": pick(&out.s, &idx),
        "bid": pick(&bid, &idx),
        "ask": pick(&ask, &idx),
        "s_tilde": pick(&out.s_tilde, &idx),
        "fraction": pick(&fraction, &idx),
        "phi1": pick(&out.phi1, &idx),
        "v_tilde": pick(&out.v_tilde, &idx),
        "fraction_lo": sol.fraction_bounds().0,
        "fraction_hi": sol.fraction_bounds().1,
        "steps": n,
        "discounted_utility": summary.discounted_utility,
        "trade_steps": summary.trade_steps,
        "bought": summary.big_l,
        "sold": summary.big_u,
        "audit_max": summary.audit_max,
    }))
}

/// Boundaries for each symmetric cost level in the comma-separated list.
pub fn sweep_json(mu: f64, sigma: f64, delta: f64, lambdas: &str) -> Result<String, String> {
    let levels: Vec<f64> = lambdas
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: {s:?}")))
        .collect::<Result<_, _>>()?;
    if levels.is_empty() {
        return Err("no cost levels given".into());
    }
    // the default costs only stand in while the market constants are checked
    let base = MarketParams { mu, sigma, delta, ..MarketParams::default() }.validate().map_err(|e| e.to_string())?;
    let pairs: Vec<(f64, f64)> = levels.iter().map(|&l| (l, l)).collect();
    let table = sweep_costs(&base, &pairs, TOL);
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| match &r.result {
            Ok(v) => json!({
                "lambda": r.lambda_buy,
                "beta_lo": v.beta_lo,
                "beta_hi": v.beta_hi,
                "fraction_lo": v.fraction_lo,
                "fraction_hi": v.fraction_hi,
                "delta_star": v.delta_star,
            }),
            Err(e) => json!({ "lambda": r.lambda_buy, "error": e }),
        })
        .collect();
    encode(&json!({ "rows": rows, "width_nondecreasing": table.width_nondecreasing }))
}

fn js(r: Result<String, String>) -> Result<String, JsValue> {
    r.map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn solve(mu: f64, sigma: f64, delta: f64, lambda_buy: f64, lambda_sell: f64) -> Result<String, JsValue> {
    js(solve_json(mu, sigma, delta, lambda_buy, lambda_sell))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn simulate(
    mu: f64,
    sigma: f64,
    delta: f64,
    lambda_buy: f64,
    lambda_sell: f64,
    horizon: f64,
    dt: f64,
    seed: u32,
    max_points: u32,
) -> Result<String, JsValue> {
    js(simulate_json(mu, sigma, delta, lambda_buy, lambda_sell, horizon, dt, seed as u64, max_points as usize))
}

#[wasm_bindgen]
pub fn sweep(mu: f64, sigma: f64, delta: f64, lambdas: &str) -> Result<String, JsValue> {
    js(sweep_json(mu, sigma, delta, lambdas))
}
