//! Market and preference constants together with the elementary quantities
//! derived from them: bid/ask quotes, liquidation value, the Merton fraction
//! and the closed-form frictionless benchmark.
//!
//! The bond is the numeraire (zero interest). The stock's mid price follows
//! `dS/S = mu dt + sigma dW`; purchases pay `(1 + lambda_buy) S` and sales
//! receive `(1 - lambda_sell) S`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Market, preference and endowment constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu: f64,
    pub sigma: f64,
    /// Impatience (discount) rate.
    pub delta: f64,
    /// Proportional cost paid on purchases.
    pub lambda_buy: f64,
    /// Proportional cost paid on sales.
    pub lambda_sell: f64,
    pub s0: f64,
    /// Initial bond units.
    pub eta_b: f64,
    /// Initial share units.
    pub eta_s: f64,
}

impl Default for MarketParams {
    /// The reference market used throughout the tests and the CLI defaults.
    fn default() -> Self {
        Self {
            mu: 0.08,
            sigma: 0.3,
            delta: 0.1,
            lambda_buy: 0.01,
            lambda_sell: 0.01,
            s0: 100.0,
            eta_b: 1.0,
            eta_s: 0.0,
        }
    }
}

impl MarketParams {
    /// Checks every parameter invariant, reporting the first violation.
    pub fn validate(self) -> Result<Self> {
        let finite = [
            ("mu", self.mu),
            ("sigma", self.sigma),
            ("delta", self.delta),
            ("lambda_buy", self.lambda_buy),
            ("lambda_sell", self.lambda_sell),
            ("s0", self.s0),
            ("eta_b", self.eta_b),
            ("eta_s", self.eta_s),
        ];
        if let Some((name, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(invalid(format!("{name} is not a finite number")));
        }
        if self.sigma <= 0.0 {
            return Err(invalid("sigma must be positive"));
        }
        if !(self.mu > 0.0 && self.mu < self.sigma * self.sigma) {
            return Err(invalid("mu out of (0, sigma^2)"));
        }
        if self.delta <= 0.0 {
            return Err(invalid("delta must be positive"));
        }
        if self.lambda_buy < 0.0 {
            return Err(invalid("lambda_buy must be nonnegative"));
        }
        if !(0.0..1.0).contains(&self.lambda_sell) {
            return Err(invalid("lambda_sell out of [0, 1)"));
        }
        if self.lambda_buy == 0.0 && self.lambda_sell == 0.0 {
            return Err(invalid("both transaction costs zero"));
        }
        if self.s0 <= 0.0 {
            return Err(invalid("s0 must be positive"));
        }
        if self.eta_b < 0.0 || self.eta_s < 0.0 {
            return Err(invalid("endowment must be nonnegative"));
        }
        if self.eta_b + self.eta_s * self.s0 <= 0.0 {
            return Err(invalid("initial endowment has zero value"));
        }
        Ok(self)
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Log of the bid factor, `log(1 - lambda_sell)`.
    pub fn c_lo(&self) -> f64 {
        (-self.lambda_sell).ln_1p()
    }

    /// Log of the ask factor, `log(1 + lambda_buy)`.
    pub fn c_hi(&self) -> f64 {
        self.lambda_buy.ln_1p()
    }

    /// `(bid, ask)` quotes around the mid price `s`.
    pub fn bid_ask(&self, s: f64) -> Result<(f64, f64)> {
        if !(s > 0.0) || !s.is_finite() {
            return Err(invalid("price must be positive"));
        }
        Ok(((1.0 - self.lambda_sell) * s, (1.0 + self.lambda_buy) * s))
    }

    /// Merton fraction `mu / sigma^2` and its log-odds.
    pub fn merton_constants(&self) -> (f64, f64) {
        let pi_star = self.mu / self.sigma2();
        (pi_star, -(self.sigma2() / self.mu - 1.0).ln())
    }

    /// Mid-price value of the endowment.
    pub fn initial_wealth(&self) -> f64 {
        self.eta_b + self.eta_s * self.s0
    }

    /// Optimal discounted log-utility of consumption without transaction
    /// costs, starting from wealth `x`.
    ///
    /// With log utility the optimum holds `mu / sigma^2` in stock and
    /// consumes `delta * X`, so `log X_t` is a Brownian motion with drift
    /// `mu^2 / (2 sigma^2) - delta` and the expectation integrates in closed
    /// form.
    pub fn frictionless_value(&self, x: f64) -> Result<f64> {
        if !(x > 0.0) || !x.is_finite() {
            return Err(invalid("wealth must be positive"));
        }
        let growth = self.mu * self.mu / (2.0 * self.sigma2()) - self.delta;
        Ok((self.delta.ln() + x.ln()) / self.delta + growth / (self.delta * self.delta))
    }
}

/// Cash plus long stock at the bid, minus short stock at the ask.
pub fn liquidation_value(phi0: f64, phi1: f64, bid: f64, ask: f64) -> f64 {
    phi0 + phi1.max(0.0) * bid - (-phi1).max(0.0) * ask
}

/// Logistic map from log-odds to a fraction in (0, 1).
#[inline]
pub fn logistic(y: f64) -> f64 {
    1.0 / (1.0 + (-y).exp())
}

/// Inverse of [`logistic`].
#[inline]
pub fn log_odds(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}
