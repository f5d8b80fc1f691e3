//! Coefficients of the reflected log-odds diffusion and the shadow price.
//!
//! With `k(y) = 1 / (1 - g'(y))`:
//!
//! ```text
//! a(y)       = sigma^2/2 * tanh(y/2) * k^2 + delta * (1 + e^y)
//! b(y)       = sigma * k
//! sigma~(y)  = sigma * g' * k                      (dW-coefficient of C)
//! mu~(y)     = -(mu - sigma^2/2) + sigma^2/2 * k^2 * tanh(y/2)
//! ```
//!
//! Everything is expressed through `g'`, which vanishes at the boundaries,
//! instead of `f' = 1/g'`, which blows up there.

use crate::error::{invalid, Error, Result};
use crate::fbvp::{tilde_from_slope, FreeBoundarySolution};
use crate::market::MarketParams;

/// Drift/volatility functions built on a solved free boundary.
#[derive(Debug, Clone, Copy)]
pub struct ShadowCoefficients<'a> {
    pub sol: &'a FreeBoundarySolution,
    pub params: MarketParams,
}

/// Everything the simulators need at one log-odds value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointCoefficients {
    pub drift: f64,
    pub vol: f64,
    /// `C = g(y)`.
    pub offset: f64,
    pub slope: f64,
}

impl<'a> ShadowCoefficients<'a> {
    /// Uses the solution's own parameters.
    pub fn new(sol: &'a FreeBoundarySolution) -> Self {
        Self { sol, params: sol.params }
    }

    /// Pairs a solution with a parameter set that may carry a different
    /// endowment; the market and cost constants must match the solution's.
    pub fn with_params(sol: &'a FreeBoundarySolution, params: MarketParams) -> Result<Self> {
        let p = params.validate()?;
        let q = sol.params;
        let same = p.mu == q.mu
            && p.sigma == q.sigma
            && p.delta == q.delta
            && p.lambda_buy == q.lambda_buy
            && p.lambda_sell == q.lambda_sell;
        if !same {
            return Err(Error::Provenance(
                "market parameters differ from those the solution was built with".into(),
            ));
        }
        Ok(Self { sol, params: p })
    }

    fn check(&self, y: f64) -> Result<()> {
        if y >= self.sol.beta_lo && y <= self.sol.beta_hi {
            Ok(())
        } else {
            Err(invalid(format!(
                "y = {y} outside [{}, {}]",
                self.sol.beta_lo, self.sol.beta_hi
            )))
        }
    }

    /// Drift and volatility from `(y, g'(y))` without interval checks.
    #[inline]
    pub(crate) fn drift_vol(&self, y: f64, slope: f64) -> (f64, f64) {
        let p = &self.params;
        let k = 1.0 / (1.0 - slope);
        let ey = y.exp();
        let odd = (ey - 1.0) / (ey + 1.0);
        let drift = 0.5 * p.sigma2() * odd * k * k + p.delta * (1.0 + ey);
        (drift, p.sigma * k)
    }

    /// Single grid lookup for the simulation loop; `y` must be in range.
    #[inline]
    pub(crate) fn at(&self, y: f64) -> PointCoefficients {
        let (offset, slope) = self.sol.eval(y);
        let (drift, vol) = self.drift_vol(y, slope);
        PointCoefficients { drift, vol, offset, slope }
    }

    pub fn drift_a(&self, y: f64) -> Result<f64> {
        self.check(y)?;
        Ok(self.at(y).drift)
    }

    pub fn vol_b(&self, y: f64) -> Result<f64> {
        self.check(y)?;
        Ok(self.at(y).vol)
    }

    /// `(mu~, sigma~)`, the drift and volatility of `C = g(beta)` that make
    /// `S e^C` a frictionless price process.
    pub fn tilde_coeffs(&self, y: f64) -> Result<(f64, f64)> {
        self.check(y)?;
        let (_, slope) = self.sol.eval(y);
        Ok(tilde_from_slope(y, slope, &self.params))
    }

    /// `S e^c`, pinned to exactly the bid (ask) when `c` is the lower
    /// (upper) end of the offset range.
    pub fn shadow_price(&self, s: f64, c: f64) -> Result<f64> {
        if !(s > 0.0) {
            return Err(invalid("price must be positive"));
        }
        if !(c >= self.sol.c_lo && c <= self.sol.c_hi) {
            return Err(invalid(format!(
                "c = {c} outside [{}, {}]",
                self.sol.c_lo, self.sol.c_hi
            )));
        }
        Ok(shadow_price_unchecked(&self.params, s, c, self.sol.c_lo, self.sol.c_hi))
    }
}

#[inline]
pub(crate) fn shadow_price_unchecked(p: &MarketParams, s: f64, c: f64, c_lo: f64, c_hi: f64) -> f64 {
    let bid = (1.0 - p.lambda_sell) * s;
    let ask = (1.0 + p.lambda_buy) * s;
    if c >= c_hi {
        ask
    } else if c <= c_lo {
        bid
    } else {
        (s * c.exp()).clamp(bid, ask)
    }
}
