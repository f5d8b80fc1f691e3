//! Dynamic-programming check of the no-trade region.
//!
//! With log utility the value of wealth `W` held with stock fraction `p`
//! (both at mid prices) is `log(W)/delta + h(p)`. The fraction is
//! approximated by a trinomial Markov chain on `p = i / N` with time step
//! `dt` and discount `exp(-delta dt)`. Consumption from an empty bank
//! account pushes `p` above one, so the grid extends past it; the top node
//! always sells.
//!
//! ```text
//! drift     m = p (1 - p) (mu - p sigma^2) + kappa p
//! variance  s = (p (1 - p) sigma)^2
//! reward    log(kappa) + (p mu - kappa - p^2 sigma^2 / 2) / delta      per unit time
//! ```
//!
//! where `kappa` is the consumption rate per unit wealth. Buying moves the
//! chain one node up and selling one node down, each scaling wealth by its
//! cost factor. Policy iteration solves the resulting tridiagonal systems.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::market::MarketParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Action {
    Hold,
    Buy,
    Sell,
}

/// No-trade interval of the converged policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpResult {
    /// Lower edge as the stock fraction valued at the ask.
    pub pi_lo: f64,
    /// Upper edge as the stock fraction valued at the bid.
    pub pi_hi: f64,
    /// The same edges as fractions at mid prices (grid nodes).
    pub mid_lo: f64,
    pub mid_hi: f64,
    pub cell: f64,
    pub grid_size: usize,
    pub time_step: f64,
    pub iterations: usize,
    /// Whether the hold nodes form one contiguous block.
    pub contiguous: bool,
}

const MAX_ITER: usize = 1000;

/// A time step keeping every transition probability in `[0, 1]` for
/// consumption rates up to `20 delta`.
pub fn default_time_step(params: &MarketParams, grid_size: usize) -> f64 {
    let h = 1.0 / grid_size as f64;
    let top = top_fraction(params);
    let spread = 0.25f64.max(top * (top - 1.0));
    let s2 = (spread * params.sigma).powi(2);
    let m = spread * (params.mu + top * params.sigma2()) + 20.0 * params.delta * top;
    0.9 * h * h / (s2 + h * m)
}

/// Largest fraction on the grid.
fn top_fraction(params: &MarketParams) -> f64 {
    1.5f64.max(2.0 * params.mu / params.sigma2())
}

struct Chain {
    h: f64,
    dt: f64,
    disc: f64,
    /// `1 - disc` without cancellation.
    rate: f64,
    p: Vec<f64>,
    m0: Vec<f64>,
    s2: Vec<f64>,
    buy_cost: Vec<f64>,
    sell_cost: Vec<f64>,
    params: MarketParams,
}

impl Chain {
    fn reward(&self, i: usize, kappa: f64) -> f64 {
        let (p, pr) = (self.p[i], &self.params);
        kappa.ln() + (p * pr.mu - kappa - 0.5 * p * p * pr.sigma2()) / pr.delta
    }

    /// `(down, stay, up)` probabilities at node `i` under `kappa`.
    fn probs(&self, i: usize, kappa: f64) -> Result<(f64, f64, f64)> {
        let n = self.p.len() - 1;
        let m = self.m0[i] + kappa * self.p[i];
        let scale = self.dt / (self.h * self.h);
        let mut up = scale * (0.5 * self.s2[i] + self.h * m.max(0.0));
        let mut down = scale * (0.5 * self.s2[i] + self.h * (-m).max(0.0));
        if i == n {
            up = 0.0;
        }
        if i == 0 {
            down = 0.0;
        }
        let stay = 1.0 - up - down;
        if stay < 0.0 {
            return Err(invalid("time step too large for the grid"));
        }
        Ok((down, stay, up))
    }

    /// Consumption maximizing the one-step hold value given `v`.
    fn best_kappa(&self, i: usize, v: &[f64]) -> f64 {
        let pr = &self.params;
        let n = self.p.len() - 1;
        let slope = if i < n {
            (v[i + 1] - v[i]) / self.h
        } else {
            (v[i] - v[i - 1]) / self.h
        };
        let denom = 1.0 / pr.delta - self.disc * self.p[i] * slope;
        let (lo, hi) = (1e-3 * pr.delta, 20.0 * pr.delta);
        if denom <= 1.0 / hi {
            hi
        } else {
            (1.0 / denom).clamp(lo, hi)
        }
    }

    /// One-step hold value minus `v[i]`, arranged to avoid cancellation
    /// when `dt` is small.
    fn hold_gain(&self, i: usize, kappa: f64, v: &[f64]) -> Result<f64> {
        let (d, _, u) = self.probs(i, kappa)?;
        let n = self.p.len() - 1;
        let mut moves = 0.0;
        if i > 0 {
            moves += d * (v[i - 1] - v[i]);
        }
        if i < n {
            moves += u * (v[i + 1] - v[i]);
        }
        Ok(self.reward(i, kappa) * self.dt + self.disc * moves - self.rate * v[i])
    }

    /// Value of a fixed policy.
    fn evaluate(&self, actions: &[Action], kappa: &[f64]) -> Result<Vec<f64>> {
        let n = self.p.len();
        let (mut a, mut b, mut c, mut r) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for i in 0..n {
            match actions[i] {
                Action::Hold => {
                    let (d, _, u) = self.probs(i, kappa[i])?;
                    a[i] = -self.disc * d;
                    b[i] = self.rate + self.disc * (d + u);
                    c[i] = -self.disc * u;
                    r[i] = self.reward(i, kappa[i]) * self.dt;
                }
                Action::Buy => {
                    b[i] = 1.0;
                    c[i] = -1.0;
                    r[i] = self.buy_cost[i];
                }
                Action::Sell => {
                    a[i] = -1.0;
                    b[i] = 1.0;
                    r[i] = self.sell_cost[i];
                }
            }
        }
        thomas(&a, &b, &c, &r)
    }
}

/// Solves a tridiagonal system with sub-diagonal `a`, diagonal `b` and
/// super-diagonal `c`.
fn thomas(a: &[f64], b: &[f64], c: &[f64], r: &[f64]) -> Result<Vec<f64>> {
    let n = b.len();
    let mut cp = vec![0.0; n];
    let mut rp = vec![0.0; n];
    let mut denom = b[0];
    for i in 0..n {
        if i > 0 {
            denom = b[i] - a[i] * cp[i - 1];
        }
        if denom.abs() < 1e-300 {
            return Err(Error::Solver("singular policy system".into()));
        }
        cp[i] = c[i] / denom;
        rp[i] = (r[i] - if i > 0 { a[i] * rp[i - 1] } else { 0.0 }) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = rp[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = rp[i] - cp[i] * x[i + 1];
    }
    Ok(x)
}

/// No-trade interval of the Markov-chain approximation with `grid_size`
/// cells on `[0, 1]`.
pub fn dp_oracle(params: &MarketParams, grid_size: usize, time_step: f64) -> Result<DpResult> {
    let pr = params.validate()?;
    if grid_size < 200 {
        return Err(invalid("grid size must be at least 200"));
    }
    if !(time_step > 0.0) || !time_step.is_finite() {
        return Err(invalid("time step must be positive"));
    }
    let h = 1.0 / grid_size as f64;
    let n = (top_fraction(&pr) * grid_size as f64).ceil() as usize;
    if pr.lambda_sell * top_fraction(&pr) >= 1.0 {
        return Err(invalid("sell cost too large for the fraction grid"));
    }
    let p: Vec<f64> = (0..=n).map(|i| i as f64 * h).collect();
    let chain = Chain {
        h,
        dt: time_step,
        disc: (-pr.delta * time_step).exp(),
        rate: -(-pr.delta * time_step).exp_m1(),
        m0: p.iter().map(|&q| q * (1.0 - q) * (pr.mu - q * pr.sigma2())).collect(),
        s2: p.iter().map(|&q| (q * (1.0 - q) * pr.sigma).powi(2)).collect(),
        buy_cost: (0..=n)
            .map(|i| {
                if i == n {
                    f64::NEG_INFINITY
                } else {
                    (-pr.lambda_buy * h / (1.0 + pr.lambda_buy * p[i + 1])).ln_1p() / pr.delta
                }
            })
            .collect(),
        sell_cost: (0..=n)
            .map(|i| {
                if i == 0 {
                    f64::NEG_INFINITY
                } else {
                    (-pr.lambda_sell * h / (1.0 - pr.lambda_sell * p[i - 1])).ln_1p() / pr.delta
                }
            })
            .collect(),
        p,
        params: pr,
    };

    let mut actions = vec![Action::Hold; n + 1];
    let mut kappa = vec![pr.delta; n + 1];
    // start from the frictionless rule: trade toward the Merton fraction
    let (pi_star, _) = pr.merton_constants();
    for i in 0..=n {
        let q = chain.p[i];
        if q + h <= pi_star {
            actions[i] = Action::Buy;
        } else if q - h >= pi_star || i == n {
            actions[i] = Action::Sell;
        }
    }
    let mut v = chain.evaluate(&actions, &kappa)?;
    for iter in 1..=MAX_ITER {
        let mut changed = false;
        let mut new_kappa = kappa.clone();
        for i in 0..=n {
            let k = chain.best_kappa(i, &v);
            new_kappa[i] = k;
            let hold = chain.hold_gain(i, k, &v)?;
            let buy = if i < n { (v[i + 1] - v[i]) + chain.buy_cost[i] } else { f64::NEG_INFINITY };
            let sell = if i > 0 { (v[i - 1] - v[i]) + chain.sell_cost[i] } else { f64::NEG_INFINITY };
            if i == n {
                new_kappa[i] = kappa[i];
                continue;
            }
            // keep the current action unless another is strictly better
            let current = match actions[i] {
                Action::Hold => hold,
                Action::Buy => buy,
                Action::Sell => sell,
            };
            let tol = 4.0 * f64::EPSILON * (1.0 + v[i].abs());
            let mut best = (actions[i], current);
            for (a, q) in [(Action::Hold, hold), (Action::Buy, buy), (Action::Sell, sell)] {
                if q > best.1 + tol {
                    best = (a, q);
                }
            }
            if best.0 != actions[i] {
                changed = true;
                actions[i] = best.0;
            }
        }
        let kappa_moved = new_kappa
            .iter()
            .zip(&kappa)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs() / b));
        kappa = new_kappa;
        let v_new = chain.evaluate(&actions, &kappa)?;
        let v_moved = v_new.iter().zip(&v).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        v = v_new;
        let scale = 1.0 + v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
        if !changed && kappa_moved < 1e-9 && v_moved < 1e-11 * scale {
            let holds: Vec<usize> = (0..=n).filter(|&i| actions[i] == Action::Hold).collect();
            let (&first, &last) = match (holds.first(), holds.last()) {
                (Some(f), Some(l)) => (f, l),
                _ => return Err(Error::Solver("policy has no no-trade nodes".into())),
            };
            let (mid_lo, mid_hi) = (chain.p[first], chain.p[last]);
            return Ok(DpResult {
                pi_lo: mid_lo * (1.0 + pr.lambda_buy) / (1.0 + pr.lambda_buy * mid_lo),
                pi_hi: mid_hi * (1.0 - pr.lambda_sell) / (1.0 - pr.lambda_sell * mid_hi),
                mid_lo,
                mid_hi,
                cell: h,
                grid_size,
                time_step,
                iterations: iter,
                contiguous: last - first + 1 == holds.len(),
            });
        }
    }
    Err(Error::Solver(format!("policy iteration did not converge in {MAX_ITER} iterations")))
}
