//! Monte Carlo estimates of discounted log-utility.
//!
//! A single pass over a path drives the shadow-price strategy and any number
//! of wedge policies with the same Brownian increments, so differences
//! between them carry little sampling noise. Each path's numbers are
//! collected by index and summed in index order, which makes estimates
//! independent of the thread count.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fbvp::FreeBoundarySolution;
use crate::market::MarketParams;
use crate::reflected::{initial_beta, reflect, step_count, BulkTrade};
use crate::rng::{BrownianSource, PathSeed};
use crate::shadow::ShadowCoefficients;
use crate::strategy::{Book, Stepper};

/// Ensemble size, horizon and streams of a Monte Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McSettings {
    pub n_paths: u64,
    pub horizon: f64,
    pub dt: f64,
    pub seed_base: u64,
    /// Each seeded increment is split into this many bridge steps of
    /// length `dt`; 1 draws increments of length `dt` directly.
    pub refinement: u32,
}

impl McSettings {
    pub fn new(n_paths: u64, horizon: f64, dt: f64, seed_base: u64) -> Self {
        Self { n_paths, horizon, dt, seed_base, refinement: 1 }
    }

    /// Checks the settings and returns the number of steps per path.
    pub fn validate(&self) -> Result<usize> {
        if self.n_paths < 2 {
            return Err(invalid("need at least two paths"));
        }
        step_count(self.horizon, self.dt)
    }
}

/// Mean discounted utility with its standard error and a bound on the part
/// of the infinite-horizon integral beyond the simulated horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtilityEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub horizon: f64,
    pub dt: f64,
    pub tail_bound: f64,
    pub seed_base: u64,
    /// Paths on which wealth reached zero; they score minus infinity.
    pub failed_paths: u64,
}

impl UtilityEstimate {
    /// Whether the tail bound exceeds `tol * |mean|`.
    pub fn tail_exceeds(&self, tol: f64) -> bool {
        !(self.tail_bound <= tol * self.mean.abs())
    }
}

/// How a wedge policy measures its stock fraction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Valuation {
    /// Stock at the ask when testing the lower edge, at the bid for the
    /// upper edge: the prices a trade at that edge would pay.
    AskBid,
    Mid,
}

/// Wealth measure a wedge policy consumes `delta` times.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WealthProxy {
    Liquidation,
    Mid,
}

/// Keep the stock fraction in `[pi_lo, pi_hi]` with minimal trades.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WedgePolicy {
    pub pi_lo: f64,
    pub pi_hi: f64,
    pub valuation_rule: Valuation,
    pub consumption: WealthProxy,
}

impl WedgePolicy {
    pub fn new(pi_lo: f64, pi_hi: f64) -> Result<Self> {
        Self { pi_lo, pi_hi, valuation_rule: Valuation::AskBid, consumption: WealthProxy::Liquidation }
            .validate()
    }

    /// The no-trade region of a solution expressed as stock fractions.
    pub fn from_solution(sol: &FreeBoundarySolution) -> Self {
        let (pi_lo, pi_hi) = sol.fraction_bounds();
        Self { pi_lo, pi_hi, valuation_rule: Valuation::AskBid, consumption: WealthProxy::Liquidation }
    }

    pub fn validate(self) -> Result<Self> {
        if !(0.0 < self.pi_lo && self.pi_lo <= self.pi_hi && self.pi_hi < 1.0) {
            return Err(invalid(format!(
                "wedge [{}, {}] must satisfy 0 < pi_lo <= pi_hi < 1",
                self.pi_lo, self.pi_hi
            )));
        }
        Ok(self)
    }
}

/// Per-path state of one wedge policy.
#[derive(Debug, Clone, Copy)]
struct Wedge {
    policy: WedgePolicy,
    phi0: f64,
    phi1: f64,
    utility: f64,
    failed: bool,
}

impl Wedge {
    fn wealth(&self, s: f64, p: &MarketParams) -> f64 {
        match self.policy.consumption {
            WealthProxy::Liquidation => self.phi0 + self.phi1 * (1.0 - p.lambda_sell) * s,
            WealthProxy::Mid => self.phi0 + self.phi1 * s,
        }
    }

    fn rebalance(&mut self, s: f64, p: &MarketParams) {
        let (bid, ask) = ((1.0 - p.lambda_sell) * s, (1.0 + p.lambda_buy) * s);
        let (lo_price, hi_price) = match self.policy.valuation_rule {
            Valuation::AskBid => (ask, bid),
            Valuation::Mid => (s, s),
        };
        let w_lo = self.phi0 + self.phi1 * lo_price;
        let w_hi = self.phi0 + self.phi1 * hi_price;
        if self.phi1 * lo_price < self.policy.pi_lo * w_lo {
            // buying at the ask leaves phi0 + phi1 * ask unchanged
            let w_ask = self.phi0 + self.phi1 * ask;
            let target = self.policy.pi_lo * w_ask / (lo_price + self.policy.pi_lo * (ask - lo_price));
            let dq = target - self.phi1;
            if dq > 0.0 {
                self.phi0 -= dq * ask;
                self.phi1 = target;
            }
        } else if self.phi1 * hi_price > self.policy.pi_hi * w_hi {
            let w_bid = self.phi0 + self.phi1 * bid;
            let target = self.policy.pi_hi * w_bid / (hi_price + self.policy.pi_hi * (bid - hi_price));
            let dq = self.phi1 - target;
            if dq > 0.0 {
                self.phi0 += dq * bid;
                self.phi1 = target;
            }
        }
    }

    /// Consumes over `[t_k, t_k + dt)`, scoring `disc * log(c) * dt`.
    fn consume(&mut self, s: f64, p: &MarketParams, disc: f64, dt: f64) {
        if self.failed {
            return;
        }
        let w = self.wealth(s, p);
        if !(w > 0.0) {
            self.failed = true;
            self.utility = f64::NEG_INFINITY;
            return;
        }
        let c = p.delta * w;
        self.utility += disc * c.ln() * dt;
        self.phi0 -= c * dt;
    }
}

struct ShadowSetup<'a> {
    coeffs: ShadowCoefficients<'a>,
    stepper: Stepper,
    beta0: f64,
    bulk: BulkTrade,
}

/// Per-path numbers: utility and terminal log-consumption of every policy,
/// the shadow strategy (if any) first.
#[derive(Debug, Clone)]
struct PathScore {
    utility: Vec<f64>,
    log_c_end: Vec<f64>,
    failed: Vec<bool>,
}

fn run_path(
    params: &MarketParams,
    shadow: Option<&ShadowSetup>,
    policies: &[WedgePolicy],
    mc: &McSettings,
    n: usize,
    index: u64,
) -> Result<PathScore> {
    let p = params;
    let dt = mc.dt;
    let mut source = BrownianSource::new(PathSeed::new(mc.seed_base, index)?, dt, mc.refinement)?;

    let mut s = p.s0;
    let mut wedges: Vec<Wedge> = policies
        .iter()
        .map(|&policy| Wedge { policy, phi0: p.eta_b, phi1: p.eta_s, utility: 0.0, failed: false })
        .collect();
    for w in &mut wedges {
        w.rebalance(s, p);
    }
    let mut book = shadow.map(|sh| Book::open(&sh.bulk));
    let mut beta = shadow.map_or(0.0, |sh| sh.beta0);
    let mut pc = shadow.map(|sh| sh.coeffs.at(beta));
    let mut shadow_utility = 0.0;

    for k in 0..n {
        let dw = source.next_dw();
        let t = k as f64 * dt;
        let disc = (-p.delta * t).exp();
        for w in &mut wedges {
            w.consume(s, p, disc, dt);
        }
        let s_next = s * ((p.mu - 0.5 * p.sigma2()) * dt + p.sigma * dw).exp();
        if let (Some(sh), Some(book), Some(cur)) = (shadow, book.as_mut(), pc.as_mut()) {
            shadow_utility += disc * book.consumption(p.delta).ln() * dt;
            let sol = sh.coeffs.sol;
            let (next, _, _) = reflect(sol.beta_lo, sol.beta_hi, beta, cur.drift, cur.vol, dt, dw);
            beta = next;
            *cur = sh.coeffs.at(beta);
            book.step(&sh.stepper, s_next, beta, cur.offset);
            debug_assert_eq!(book.s, s_next);
        }
        s = s_next;
        for w in &mut wedges {
            if !w.failed {
                w.rebalance(s, p);
            }
        }
    }

    let mut score = PathScore {
        utility: Vec::with_capacity(wedges.len() + 1),
        log_c_end: Vec::with_capacity(wedges.len() + 1),
        failed: Vec::with_capacity(wedges.len() + 1),
    };
    if let Some(book) = book {
        score.utility.push(shadow_utility);
        score.log_c_end.push(book.consumption(p.delta).ln());
        score.failed.push(false);
    }
    for w in &wedges {
        let wealth = w.wealth(s, p);
        score.utility.push(w.utility);
        score.log_c_end.push(if wealth > 0.0 { (p.delta * wealth).ln() } else { f64::INFINITY });
        score.failed.push(w.failed || !(wealth > 0.0));
    }
    Ok(score)
}

fn collect_paths<F>(n_paths: u64, f: F) -> Result<Vec<PathScore>>
where
    F: Fn(u64) -> Result<PathScore> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_paths).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_paths).map(f).collect()
    }
}

/// Bound on `|E int_T^inf e^{-delta t} log c_t dt|` when `log c` has drift
/// at most `drift_bound` and volatility at most `sigma` in absolute value:
///
/// `e^{-delta T} (E|log c_T| / delta + D / delta^2 + sigma sqrt(pi) / (2 delta^1.5))`.
pub fn tail_bound(delta: f64, sigma: f64, horizon: f64, mean_abs_log_c: f64, drift_bound: f64) -> f64 {
    (-delta * horizon).exp()
        * (mean_abs_log_c / delta
            + drift_bound / (delta * delta)
            + sigma * std::f64::consts::PI.sqrt() / (2.0 * delta.powf(1.5)))
}

/// Estimates of every policy in a common-random-number run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub shadow: Option<UtilityEstimate>,
    pub wedges: Vec<UtilityEstimate>,
    /// Per-path utilities, one row per policy in the order shadow, wedges.
    #[serde(skip)]
    pub samples: Vec<Vec<f64>>,
}

impl Ensemble {
    /// Standard error of the per-path difference between policies `i` and
    /// `j` (indices into `samples`).
    pub fn paired_stderr(&self, i: usize, j: usize) -> f64 {
        let d: Vec<f64> = self.samples[i].iter().zip(&self.samples[j]).map(|(a, b)| a - b).collect();
        mean_stderr(&d).1
    }
}

fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if !mean.is_finite() {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs the shadow strategy (when `sol` is given) and the wedge policies on
/// common paths.
pub fn run_ensemble(
    sol: Option<&FreeBoundarySolution>,
    params: &MarketParams,
    policies: &[WedgePolicy],
    mc: &McSettings,
) -> Result<Ensemble> {
    let params = params.validate()?;
    let n = mc.validate()?;
    for p in policies {
        p.validate()?;
    }
    let setup = match sol {
        Some(sol) => {
            let coeffs = ShadowCoefficients::with_params(sol, params)?;
            let (beta0, bulk) = initial_beta(&params, sol)?;
            Some(ShadowSetup { stepper: Stepper::new(&coeffs, mc.dt), coeffs, beta0, bulk })
        }
        None => None,
    };
    // fail fast on bad seeds or refinement factors
    BrownianSource::new(PathSeed::new(mc.seed_base, mc.n_paths - 1)?, mc.dt, mc.refinement)?;

    let scores = collect_paths(mc.n_paths, |i| run_path(&params, setup.as_ref(), policies, mc, n, i))?;

    let n_policies = policies.len() + setup.is_some() as usize;
    let horizon = n as f64 * mc.dt;
    let shadow_drift = params.delta.max((0.5 * params.sigma2() - params.delta).abs());
    let wedge_drift = params.mu + 0.5 * params.sigma2() + params.delta;
    let mut samples = Vec::with_capacity(n_policies);
    let mut estimates = Vec::with_capacity(n_policies);
    for j in 0..n_policies {
        let xs: Vec<f64> = scores.iter().map(|s| s.utility[j]).collect();
        let failed = scores.iter().filter(|s| s.failed[j]).count() as u64;
        let (mean, stderr) = mean_stderr(&xs);
        let abs_log_c = scores.iter().map(|s| s.log_c_end[j].abs()).sum::<f64>() / mc.n_paths as f64;
        let drift = if setup.is_some() && j == 0 { shadow_drift } else { wedge_drift };
        estimates.push(UtilityEstimate {
            mean,
            stderr,
            n_paths: mc.n_paths,
            horizon,
            dt: mc.dt,
            tail_bound: tail_bound(params.delta, params.sigma, horizon, abs_log_c, drift),
            seed_base: mc.seed_base,
            failed_paths: failed,
        });
        samples.push(xs);
    }
    let shadow = if setup.is_some() { Some(estimates.remove(0)) } else { None };
    Ok(Ensemble { shadow, wedges: estimates, samples })
}

/// Expected discounted utility of the shadow-price strategy.
///
/// The tail bound uses that `log c` of the strategy has drift
/// `(pi b)^2 / 2 - delta`, within `[-delta, sigma^2/2 - delta]`, and
/// volatility `pi b <= sigma`.
pub fn mc_utility(
    sol: &FreeBoundarySolution,
    params: &MarketParams,
    n_paths: u64,
    horizon: f64,
    dt: f64,
    seed_base: u64,
) -> Result<UtilityEstimate> {
    let mc = McSettings::new(n_paths, horizon, dt, seed_base);
    Ok(run_ensemble(Some(sol), params, &[], &mc)?.shadow.expect("shadow requested"))
}

/// Expected discounted utility of a wedge policy traded directly in the
/// market with costs.
///
/// Its tail bound takes `mu + sigma^2/2 + delta` as drift bound and ignores
/// the drag of trading costs, so it is indicative only.
pub fn simulate_wedge_policy(
    params: &MarketParams,
    policy: WedgePolicy,
    horizon: f64,
    dt: f64,
    seed_base: u64,
    n_paths: u64,
) -> Result<UtilityEstimate> {
    let mc = McSettings::new(n_paths, horizon, dt, seed_base);
    Ok(run_ensemble(None, params, &[policy], &mc)?.wedges.remove(0))
}

/// Which edge a perturbation arm moves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Edge {
    None,
    Lower,
    Upper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationRow {
    pub edge: Edge,
    /// Relative shift: the edge fraction is multiplied by `1 + shift`.
    pub shift: f64,
    pub policy: WedgePolicy,
    pub estimate: UtilityEstimate,
    /// Standard error of the difference to the unshifted arm.
    pub paired_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub shadow: UtilityEstimate,
    /// The unshifted arm comes first.
    pub rows: Vec<PerturbationRow>,
    /// Largest shifted-arm mean minus the unshifted mean.
    pub max_gain: f64,
    /// No arm beats the unshifted one by more than twice the standard
    /// error of their paired difference.
    pub unshifted_is_max: bool,
    /// Utility falls monotonically with `|shift|` on each side of each
    /// edge; observed, not required.
    pub monotone: bool,
}

/// Moves each edge of the solution's region by the relative `shifts` and
/// compares the resulting wedge policies on common paths.
pub fn perturbation_test(
    sol: &FreeBoundarySolution,
    params: &MarketParams,
    shifts: &[f64],
    mc: &McSettings,
) -> Result<PerturbationReport> {
    let arms = perturbation_arms(sol, shifts)?;
    let policies: Vec<WedgePolicy> = arms.iter().map(|a| a.2).collect();
    let ens = run_ensemble(Some(sol), params, &policies, mc)?;
    Ok(perturbation_report(&arms, &ens, 0))
}

/// The unshifted wedge followed by each edge moved by each shift.
pub(crate) fn perturbation_arms(sol: &FreeBoundarySolution, shifts: &[f64]) -> Result<Vec<(Edge, f64, WedgePolicy)>> {
    let base = WedgePolicy::from_solution(sol);
    let mut arms = vec![(Edge::None, 0.0, base)];
    for &edge in &[Edge::Lower, Edge::Upper] {
        for &s in shifts {
            let mut policy = base;
            match edge {
                Edge::Lower => policy.pi_lo *= 1.0 + s,
                _ => policy.pi_hi *= 1.0 + s,
            }
            arms.push((edge, s, policy.validate()?));
        }
    }
    Ok(arms)
}

/// Builds the report from an ensemble whose wedges `first..` are `arms`.
pub(crate) fn perturbation_report(arms: &[(Edge, f64, WedgePolicy)], ens: &Ensemble, first: usize) -> PerturbationReport {
    let base_sample = first + 1;
    let rows: Vec<PerturbationRow> = arms
        .iter()
        .zip(&ens.wedges[first..])
        .enumerate()
        .map(|(j, (&(edge, shift, policy), est))| PerturbationRow {
            edge,
            shift,
            policy,
            estimate: est.clone(),
            paired_stderr: if j == 0 { 0.0 } else { ens.paired_stderr(base_sample, base_sample + j) },
        })
        .collect();
    let base_est = &rows[0].estimate;
    let max_gain = rows[1..].iter().map(|r| r.estimate.mean - base_est.mean).fold(f64::NEG_INFINITY, f64::max);
    let monotone = [Edge::Lower, Edge::Upper].iter().all(|&edge| {
        [1.0, -1.0].iter().all(|&sign| {
            let mut side: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.edge == edge && r.shift * sign > 0.0)
                .map(|r| (r.shift.abs(), r.estimate.mean))
                .collect();
            side.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut prev = base_est.mean;
            side.iter().all(|&(_, m)| {
                let ok = m <= prev;
                prev = m;
                ok
            })
        })
    });
    PerturbationReport {
        shadow: ens.shadow.clone().expect("shadow requested"),
        unshifted_is_max: rows[1..]
            .iter()
            .all(|r| r.estimate.mean - base_est.mean <= 2.0 * r.paired_stderr),
        max_gain,
        rows,
        monotone,
    }
}

/// The fraction of wealth that buys `phi1` shares at `price`.
pub fn stock_fraction(phi0: f64, phi1: f64, price: f64) -> f64 {
    phi1 * price / (phi0 + phi1 * price)
}
