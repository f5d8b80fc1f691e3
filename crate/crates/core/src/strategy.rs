//! Holdings, consumption and trades of the shadow-price strategy along a
//! reflected path.
//!
//! Between boundary contacts the share count is constant and wealth moves
//! with the shadow price. When `beta` sits on an edge the position is
//! rebalanced by the smallest trade that restores the edge fraction:
//! purchases only on the lower edge, where the shadow price is the ask, and
//! sales only on the upper edge, where it is the bid.

use std::io::Write;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fbvp::FreeBoundarySolution;
use crate::market::{logistic, MarketParams};
use crate::reflected::{initial_beta, BulkTrade, ReflectedPath, TradeSide};
use crate::shadow::{shadow_price_unchecked, ShadowCoefficients};

/// Constants of the per-step update.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stepper {
    params: MarketParams,
    dt: f64,
    log_drift: f64,
    beta_lo: f64,
    beta_hi: f64,
    c_lo: f64,
    c_hi: f64,
    pi_lo: f64,
    pi_hi: f64,
}

impl Stepper {
    pub(crate) fn new(coeffs: &ShadowCoefficients, dt: f64) -> Self {
        let p = coeffs.params;
        let sol = coeffs.sol;
        Self {
            params: p,
            dt,
            log_drift: (p.mu - 0.5 * p.sigma2()) * dt,
            beta_lo: sol.beta_lo,
            beta_hi: sol.beta_hi,
            c_lo: sol.c_lo,
            c_hi: sol.c_hi,
            pi_lo: logistic(sol.beta_lo),
            pi_hi: logistic(sol.beta_hi),
        }
    }

    /// Mid price after an increment `dw`.
    #[inline]
    pub(crate) fn next_mid(&self, s: f64, dw: f64) -> f64 {
        s * (self.log_drift + self.params.sigma * dw).exp()
    }
}

/// Positions at one grid node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Book {
    pub s: f64,
    pub s_tilde: f64,
    pub v: f64,
    pub phi0: f64,
    pub phi1: f64,
    pub l: f64,
    pub u: f64,
}

impl Book {
    pub(crate) fn open(bulk: &BulkTrade) -> Self {
        let dq = bulk.shares();
        Self {
            s: bulk.mid,
            s_tilde: bulk.price,
            v: bulk.bond_after + bulk.shares_after * bulk.price,
            phi0: bulk.bond_after,
            phi1: bulk.shares_after,
            l: dq.max(0.0) * bulk.mid,
            u: (-dq).max(0.0) * bulk.mid,
        }
    }

    pub(crate) fn consumption(&self, delta: f64) -> f64 {
        delta * self.v
    }

    /// Advances one step: consumption at the current node, the price move
    /// to `s_next`, then any rebalancing on the edge reached at `beta_next`.
    #[inline]
    pub(crate) fn step(&mut self, st: &Stepper, s_next: f64, beta_next: f64, c_next: f64) {
        let p = &st.params;
        let st_next = shadow_price_unchecked(p, s_next, c_next, st.c_lo, st.c_hi);
        let v_next = self.v + self.phi1 * (st_next - self.s_tilde) - p.delta * self.v * st.dt;
        let mut phi1 = self.phi1;
        if beta_next == st.beta_lo {
            phi1 = phi1.max(st.pi_lo * v_next / st_next);
        } else if beta_next == st.beta_hi {
            phi1 = phi1.min(st.pi_hi * v_next / st_next);
        }
        let dq = phi1 - self.phi1;
        if dq > 0.0 {
            self.l += s_next * dq;
        } else if dq < 0.0 {
            self.u -= s_next * dq;
        }
        self.s = s_next;
        self.s_tilde = st_next;
        self.v = v_next;
        self.phi1 = phi1;
        self.phi0 = v_next - phi1 * st_next;
    }
}

/// Everything the strategy does along one path.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedOutcome {
    pub params: MarketParams,
    pub dt: f64,
    pub times: Vec<f64>,
    pub s: Vec<f64>,
    /// `C = g(beta)`.
    pub c_offset: Vec<f64>,
    pub s_tilde: Vec<f64>,
    pub v_tilde: Vec<f64>,
    pub phi0: Vec<f64>,
    pub phi1: Vec<f64>,
    pub consumption: Vec<f64>,
    /// Cumulative purchases at mid value, including the bulk purchase.
    pub big_l: Vec<f64>,
    /// Cumulative sales at mid value, including the bulk sale.
    pub big_u: Vec<f64>,
    pub liquidation: Vec<f64>,
    pub bulk: BulkTrade,
}

/// Replays the optimal strategy on `path`.
pub fn run_strategy(
    sol: &FreeBoundarySolution,
    params: &MarketParams,
    path: &ReflectedPath,
) -> Result<SimulatedOutcome> {
    if path.provenance != sol.digest() {
        return Err(Error::Provenance("path was simulated on a different solution".into()));
    }
    let coeffs = ShadowCoefficients::with_params(sol, *params)?;
    let (beta0, bulk) = initial_beta(params, sol)?;
    if path.beta[0] != beta0 {
        return Err(invalid(format!(
            "path starts at {} but the endowment requires {beta0}",
            path.beta[0]
        )));
    }
    let p = coeffs.params;
    let st = Stepper::new(&coeffs, path.dt);
    let n = path.steps();
    let mut out = SimulatedOutcome {
        params: p,
        dt: path.dt,
        times: path.times.clone(),
        s: Vec::with_capacity(n + 1),
        c_offset: Vec::with_capacity(n + 1),
        s_tilde: Vec::with_capacity(n + 1),
        v_tilde: Vec::with_capacity(n + 1),
        phi0: Vec::with_capacity(n + 1),
        phi1: Vec::with_capacity(n + 1),
        consumption: Vec::with_capacity(n + 1),
        big_l: Vec::with_capacity(n + 1),
        big_u: Vec::with_capacity(n + 1),
        liquidation: Vec::with_capacity(n + 1),
        bulk,
    };
    let mut book = Book::open(&bulk);
    let record = |book: &Book, c: f64, out: &mut SimulatedOutcome| {
        out.s.push(book.s);
        out.c_offset.push(c);
        out.s_tilde.push(book.s_tilde);
        out.v_tilde.push(book.v);
        out.phi0.push(book.phi0);
        out.phi1.push(book.phi1);
        out.consumption.push(book.consumption(p.delta));
        out.big_l.push(book.l);
        out.big_u.push(book.u);
        out.liquidation.push(book.phi0 + book.phi1 * (1.0 - p.lambda_sell) * book.s);
    };
    record(&book, sol.eval(beta0).0, &mut out);
    for k in 0..n {
        let s_next = st.next_mid(book.s, path.dw[k]);
        let c_next = sol.eval(path.beta[k + 1]).0;
        book.step(&st, s_next, path.beta[k + 1], c_next);
        record(&book, c_next, &mut out);
    }
    Ok(out)
}

/// Largest gap between the engine's bond holdings and those implied by
/// booking every trade at the quoted bid or ask.
pub fn self_financing_audit(outcome: &SimulatedOutcome, params: &MarketParams) -> f64 {
    let (lb, ls) = (params.lambda_buy, params.lambda_sell);
    let b = &outcome.bulk;
    let dq = b.shares();
    let mut bond = match b.side {
        TradeSide::Buy => params.eta_b - dq * (1.0 + lb) * b.mid,
        TradeSide::Sell => params.eta_b - dq * (1.0 - ls) * b.mid,
        TradeSide::None => params.eta_b,
    };
    let mut worst = (bond - outcome.phi0[0]).abs();
    for k in 0..outcome.phi1.len() - 1 {
        let dq = outcome.phi1[k + 1] - outcome.phi1[k];
        let s = outcome.s[k + 1];
        let ask = (1.0 + lb) * s;
        let bid = (1.0 - ls) * s;
        bond += bid * (-dq).max(0.0) - ask * dq.max(0.0) - outcome.consumption[k] * outcome.dt;
        worst = worst.max((bond - outcome.phi0[k + 1]).abs());
    }
    worst
}

/// Cumulative purchase and sale processes `(L, U)` at mid value.
pub fn davis_norman_policy(outcome: &SimulatedOutcome) -> (Vec<f64>, Vec<f64>) {
    (outcome.big_l.clone(), outcome.big_u.clone())
}

/// Wealth from the closed-form stochastic exponential
/// `log V[k+1] = log V[k] + (pi^2 b^2 / 2 - delta) dt + pi b dw[k]`,
/// an independent check on the self-financing recursion.
pub fn stochastic_exponential_wealth(coeffs: &ShadowCoefficients, path: &ReflectedPath, v0: f64) -> Vec<f64> {
    let delta = coeffs.params.delta;
    let mut log_v = v0.ln();
    let mut out = Vec::with_capacity(path.beta.len());
    out.push(v0);
    for k in 0..path.steps() {
        let pi = logistic(path.beta[k]);
        let vol = pi * coeffs.at(path.beta[k]).vol;
        log_v += (0.5 * vol * vol - delta) * path.dt + vol * path.dw[k];
        out.push(log_v.exp());
    }
    out
}

/// Terminal values and checks of one outcome.
#[derive(Debug, Clone, Serialize)]
pub struct OutcomeSummary {
    pub steps: usize,
    pub horizon: f64,
    pub s: f64,
    pub s_tilde: f64,
    pub v_tilde: f64,
    pub phi0: f64,
    pub phi1: f64,
    pub liquidation: f64,
    pub big_l: f64,
    pub big_u: f64,
    pub discounted_utility: f64,
    pub audit_max: f64,
    pub min_phi0: f64,
    pub min_phi1: f64,
    pub trade_steps: usize,
    pub bulk: BulkTrade,
}

impl SimulatedOutcome {
    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    /// `sum_k exp(-delta t_k) log(c_k) dt` over the left endpoints.
    pub fn discounted_utility(&self) -> f64 {
        let delta = self.params.delta;
        let mut acc = 0.0;
        for k in 0..self.steps() {
            acc += (-delta * self.times[k]).exp() * self.consumption[k].ln() * self.dt;
        }
        acc
    }

    /// First violated pathwise invariant, if any: the bid/ask sandwich,
    /// trades only on the matching edge, positivity and the consumption
    /// rule.
    pub fn check_invariants(&self, sol: &FreeBoundarySolution) -> Result<()> {
        let p = &self.params;
        for k in 0..self.times.len() {
            let (bid, ask) = ((1.0 - p.lambda_sell) * self.s[k], (1.0 + p.lambda_buy) * self.s[k]);
            if !(bid <= self.s_tilde[k] && self.s_tilde[k] <= ask) {
                return Err(invalid(format!("shadow price outside the spread at node {k}")));
            }
            if !(self.phi0[k] > 0.0 && self.phi1[k] > 0.0 && self.v_tilde[k] > 0.0 && self.liquidation[k] > 0.0) {
                return Err(invalid(format!("nonpositive holding or wealth at node {k}")));
            }
            if self.consumption[k] != p.delta * self.v_tilde[k] {
                return Err(invalid(format!("consumption rule broken at node {k}")));
            }
            if k > 0 {
                let dq = self.phi1[k] - self.phi1[k - 1];
                if (dq > 0.0 && self.c_offset[k] != sol.c_hi) || (dq < 0.0 && self.c_offset[k] != sol.c_lo) {
                    return Err(invalid(format!("trade away from the matching edge at node {k}")));
                }
                if self.big_l[k] < self.big_l[k - 1] || self.big_u[k] < self.big_u[k - 1] {
                    return Err(invalid(format!("trade totals decreased at node {k}")));
                }
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> OutcomeSummary {
        let n = self.steps();
        OutcomeSummary {
            steps: n,
            horizon: self.times[n],
            s: self.s[n],
            s_tilde: self.s_tilde[n],
            v_tilde: self.v_tilde[n],
            phi0: self.phi0[n],
            phi1: self.phi1[n],
            liquidation: self.liquidation[n],
            big_l: self.big_l[n],
            big_u: self.big_u[n],
            discounted_utility: self.discounted_utility(),
            audit_max: self_financing_audit(self, &self.params),
            min_phi0: self.phi0.iter().copied().fold(f64::INFINITY, f64::min),
            min_phi1: self.phi1.iter().copied().fold(f64::INFINITY, f64::min),
            trade_steps: self.phi1.windows(2).filter(|w| w[1] != w[0]).count(),
            bulk: self.bulk,
        }
    }

    /// CSV with one row per grid node.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "t",
            "s",
            "c_offset",
            "s_tilde",
            "v_tilde",
            "phi0",
            "phi1",
            "consumption",
            "big_l",
            "big_u",
            "liquidation",
        ])?;
        for k in 0..self.times.len() {
            let row = [
                self.times[k],
                self.s[k],
                self.c_offset[k],
                self.s_tilde[k],
                self.v_tilde[k],
                self.phi0[k],
                self.phi1[k],
                self.consumption[k],
                self.big_l[k],
                self.big_u[k],
                self.liquidation[k],
            ];
            out.write_record(row.map(|v| format!("{v:.16e}")))?;
        }
        out.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbvp::{shoot, ShootControl};
    use crate::reflected::{brownian_bridge_refine, simulate_beta, simulate_beta_with_increments};
    use crate::rng::PathSeed;
    use std::sync::OnceLock;

    fn solution() -> &'static FreeBoundarySolution {
        static SOL: OnceLock<FreeBoundarySolution> = OnceLock::new();
        SOL.get_or_init(|| shoot(&MarketParams::default(), 1e-10, &ShootControl::default()).unwrap())
    }

    fn outcome(params: &MarketParams, horizon: f64, dt: f64, i: u64) -> (ReflectedPath, SimulatedOutcome) {
        let sol = solution();
        let coeffs = ShadowCoefficients::with_params(sol, *params).unwrap();
        let (b0, _) = initial_beta(params, sol).unwrap();
        let path = simulate_beta(&coeffs, b0, horizon, dt, PathSeed::new(5, i).unwrap()).unwrap();
        let out = run_strategy(sol, params, &path).unwrap();
        (path, out)
    }

    #[test]
    fn pathwise_invariants_and_audit() {
        let p = MarketParams::default();
        for i in 0..4 {
            let (_, out) = outcome(&p, 10.0, 1e-4, i);
            out.check_invariants(solution()).unwrap();
            assert!(self_financing_audit(&out, &p) < 1e-8 * out.v_tilde[0]);
            for k in 0..out.times.len() {
                let v = out.phi0[k] + out.phi1[k] * out.s_tilde[k];
                assert!((v - out.v_tilde[k]).abs() <= 1e-12 * out.v_tilde[k]);
            }
        }
    }

    #[test]
    fn shares_change_only_on_edges() {
        let p = MarketParams::default();
        let (path, out) = outcome(&p, 5.0, 1e-3, 1);
        let sol = solution();
        for k in 0..path.steps() {
            let b = path.beta[k + 1];
            if b != sol.beta_lo && b != sol.beta_hi {
                assert_eq!(out.phi1[k + 1], out.phi1[k]);
            }
        }
        assert!(out.summary().trade_steps > 0);
    }

    #[test]
    fn all_cash_start() {
        let p = MarketParams::default();
        let (_, out) = outcome(&p, 1.0, 1e-3, 0);
        let b = out.bulk;
        assert_eq!(b.side, TradeSide::Buy);
        // the bulk trade is valued at the ask, so shadow wealth is unchanged
        assert_close!(out.v_tilde[0], 1.0, 1e-15);
        assert!(out.liquidation[0] < 1.0);
        let (l, u) = davis_norman_policy(&out);
        assert_close!(l[0], b.shares() * 100.0, 1e-15);
        assert_eq!(u[0], 0.0);
        assert_close!(out.phi1[0] * 101.0, logistic(solution().beta_lo), 1e-15);
    }

    #[test]
    fn no_trades_without_boundary_contact() {
        // interior endowment and a short path that stays inside
        let sol = solution();
        let (pi_star, y0) = MarketParams::default().merton_constants();
        let held = 100.0 * sol.g_eval(y0).unwrap().0.exp();
        let p = MarketParams { eta_b: held * (1.0 - pi_star) / pi_star, eta_s: 1.0, ..MarketParams::default() };
        let coeffs = ShadowCoefficients::with_params(sol, p).unwrap();
        let (b0, bulk) = initial_beta(&p, sol).unwrap();
        assert_eq!(bulk.side, TradeSide::None);
        let path = simulate_beta_with_increments(&coeffs, b0, 1e-3, vec![-0.003; 100]).unwrap();
        assert!(path.beta.iter().all(|&b| b > sol.beta_lo && b < sol.beta_hi));
        let out = run_strategy(sol, &p, &path).unwrap();
        let (l, u) = davis_norman_policy(&out);
        assert!(l.iter().chain(&u).all(|&x| x == 0.0));
        assert!(out.phi1.iter().all(|&q| q == 1.0));
        assert!(self_financing_audit(&out, &p) < 1e-12);
    }

    #[test]
    fn purchase_ledger_matches_ask_value() {
        let p = MarketParams::default();
        let (_, out) = outcome(&p, 10.0, 1e-3, 2);
        let mut ask_value = out.bulk.shares().max(0.0) * 101.0;
        let mut bid_value = 0.0;
        for k in 1..out.times.len() {
            let dq = out.phi1[k] - out.phi1[k - 1];
            ask_value += dq.max(0.0) * 1.01 * out.s[k];
            bid_value += (-dq).max(0.0) * 0.99 * out.s[k];
        }
        let l = *out.big_l.last().unwrap();
        let u = *out.big_u.last().unwrap();
        assert!(l > 0.0 && u > 0.0);
        assert!((ask_value - 1.01 * l).abs() <= 1e-10 * ask_value);
        assert!((bid_value - 0.99 * u).abs() <= 1e-10 * bid_value);
    }

    #[test]
    fn audit_detects_a_mispriced_trade() {
        let p = MarketParams::default();
        let (_, mut out) = outcome(&p, 2.0, 1e-3, 3);
        let k = (1..out.times.len()).find(|&k| out.phi1[k] != out.phi1[k - 1]).unwrap();
        let size = (out.phi1[k] - out.phi1[k - 1]).abs() * out.s[k];
        let before = self_financing_audit(&out, &p);
        out.s[k] *= 1.0 + 1e-6;
        let after = self_financing_audit(&out, &p);
        assert!(after - before >= 0.9e-6 * size, "{after} {size}");
    }

    #[test]
    fn provenance_is_checked() {
        let p = MarketParams::default();
        let (mut path, _) = outcome(&p, 0.1, 1e-3, 0);
        path.provenance = "0".repeat(64);
        assert!(matches!(run_strategy(solution(), &p, &path), Err(Error::Provenance(_))));
    }

    #[test]
    fn stochastic_exponential_agrees() {
        let p = MarketParams::default();
        let sol = solution();
        let coeffs = ShadowCoefficients::new(sol);
        let mut gaps = Vec::new();
        for dt in [1e-3, 1e-4] {
            let mut gap = 0.0;
            for i in 0..5 {
                let (path, out) = outcome(&p, 10.0, dt, i);
                let closed = stochastic_exponential_wealth(&coeffs, &path, out.v_tilde[0]);
                gap += (closed.last().unwrap().ln() - out.v_tilde.last().unwrap().ln()).abs() / 5.0;
            }
            gaps.push(gap);
        }
        assert!(gaps[0] < 0.05 && gaps[1] < gaps[0], "{gaps:?}");
    }

    #[test]
    fn utility_converges_under_refinement() {
        let p = MarketParams::default();
        let sol = solution();
        let coeffs = ShadowCoefficients::new(sol);
        let (b0, _) = initial_beta(&p, sol).unwrap();
        let (mut d1, mut d2) = (0.0, 0.0);
        for i in 0..10 {
            let coarse = simulate_beta(&coeffs, b0, 10.0, 1e-2, PathSeed::new(8, i).unwrap()).unwrap();
            let u: Vec<f64> = [1, 2, 4]
                .iter()
                .map(|&f| {
                    let path = brownian_bridge_refine(&coeffs, &coarse, f).unwrap();
                    run_strategy(sol, &p, &path).unwrap().discounted_utility()
                })
                .collect();
            d1 += (u[0] - u[1]).abs();
            d2 += (u[1] - u[2]).abs();
        }
        assert!(d2 < d1, "{d1} {d2}");
    }

    #[test]
    fn csv_and_summary() {
        let p = MarketParams::default();
        let (_, out) = outcome(&p, 0.01, 1e-3, 0);
        let mut buf = Vec::new();
        out.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,s,c_offset,s_tilde,v_tilde,phi0,phi1,consumption,big_l,big_u,liquidation\n"));
        assert_eq!(text.lines().count(), 12);
        let s = out.summary();
        assert_eq!(s.steps, 10);
        assert!(s.audit_max < 1e-14);
    }
}
