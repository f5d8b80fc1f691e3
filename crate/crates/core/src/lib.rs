//! Log-utility consumption and investment under proportional transaction
//! costs, solved through a shadow price.
//!
//! The pipeline is:
//!
//! 1. [`fbvp::shoot`] solves the free-boundary ODE for the no-trade region
//!    `[beta_lo, beta_hi]` (log-odds of the stock fraction) and the offset
//!    map `g`.
//! 2. [`shadow::ShadowCoefficients`] turns `g` into the drift and volatility
//!    of the reflected log-odds process and into the shadow price
//!    `S e^{g(beta)}`.
//! 3. [`reflected`] simulates the reflected diffusion with its local times.
//! 4. [`strategy`] rebuilds holdings, consumption and trades along a path
//!    and audits them against the bid/ask ledger.
//! 5. [`evaluation`] estimates expected discounted utility, compares it with
//!    the frictionless benchmark and competing wedge policies, and
//!    cross-checks the boundaries with a dynamic-programming oracle.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

#[cfg(test)]
macro_rules! assert_close {
    ($a:expr, $b:expr, $tol:expr) => {{
        let (a, b, tol): (f64, f64, f64) = ($a, $b, $tol);
        assert!((a - b).abs() <= tol, "{} vs {} (tol {})", a, b, tol);
    }};
}

pub mod error;
pub mod evaluation;
pub mod fbvp;
pub mod hermite;
pub mod io;
pub mod market;
pub mod reflected;
pub mod rk;
pub mod rng;
pub mod shadow;
pub mod strategy;

pub use error::{Error, Result};
pub use fbvp::{shoot, FreeBoundarySolution, ShootControl};
pub use market::MarketParams;
pub use shadow::ShadowCoefficients;
