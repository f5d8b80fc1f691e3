//! One common-random-number run of the shadow strategy against the
//! frictionless benchmark, competitor wedges and perturbed regions, with
//! the pass/fail flags of the optimality checks.

use serde::{Deserialize, Serialize};

use super::dp::{default_time_step, dp_oracle, DpResult};
use super::mc::{perturbation_arms, perturbation_report, run_ensemble, McSettings, PerturbationReport, UtilityEstimate, WedgePolicy};
use crate::error::Result;
use crate::fbvp::FreeBoundarySolution;
use crate::market::MarketParams;

/// A named wedge policy to beat.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Competitor {
    pub name: String,
    pub policy: WedgePolicy,
}

impl Competitor {
    pub fn new(name: &str, policy: WedgePolicy) -> Self {
        Self { name: name.into(), policy }
    }
}

/// Rebalancing to the Merton fraction at every step, and a wide wedge.
pub fn default_competitors(params: &MarketParams) -> Result<Vec<Competitor>> {
    let (pi_star, _) = params.validate()?.merton_constants();
    Ok(vec![
        Competitor::new("merton", WedgePolicy::new(pi_star, pi_star)?),
        Competitor::new("wide", WedgePolicy::new(0.01, 0.99)?),
    ])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorResult {
    pub name: String,
    pub policy: WedgePolicy,
    pub estimate: UtilityEstimate,
    /// Shadow mean minus competitor mean.
    pub margin: f64,
    /// Standard error of the per-path difference on the common paths.
    pub paired_stderr: f64,
    /// `sqrt(se_shadow^2 + se_competitor^2)`, as if the runs were
    /// independent; reported only.
    pub independent_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub dp: DpResult,
    pub fbvp_lo: f64,
    pub fbvp_hi: f64,
    pub tolerance: f64,
    /// Endpoint discrepancies in grid cells.
    pub cells_lo: f64,
    pub cells_hi: f64,
    pub pass: bool,
}

/// Compares the dynamic-programming interval with the solution's fraction
/// bounds; endpoints must agree within `max(2 cells, 0.01)`.
pub fn oracle_check(sol: &FreeBoundarySolution, grid_size: usize) -> Result<OracleCheck> {
    let dp = dp_oracle(&sol.params, grid_size, default_time_step(&sol.params, grid_size))?;
    let (fbvp_lo, fbvp_hi) = sol.fraction_bounds();
    let tolerance = (2.0 * dp.cell).max(0.01);
    let (d_lo, d_hi) = ((dp.pi_lo - fbvp_lo).abs(), (dp.pi_hi - fbvp_hi).abs());
    Ok(OracleCheck {
        cells_lo: d_lo / dp.cell,
        cells_hi: d_hi / dp.cell,
        pass: d_lo <= tolerance && d_hi <= tolerance && dp.pi_lo <= fbvp_hi && fbvp_lo <= dp.pi_hi,
        dp,
        fbvp_lo,
        fbvp_hi,
        tolerance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flags {
    /// Shadow mean, less the bound on utility beyond the horizon, at most
    /// the frictionless value plus two standard errors.
    pub upper_bound: bool,
    /// Shadow mean above every competitor by three paired standard errors.
    pub dominance: bool,
    /// The unshifted region is best within two paired standard errors.
    pub perturbation: Option<bool>,
    pub oracle: Option<bool>,
}

impl Flags {
    pub fn all_pass(&self) -> bool {
        self.upper_bound && self.dominance && self.perturbation != Some(false) && self.oracle != Some(false)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub params: MarketParams,
    pub settings: McSettings,
    pub shadow: UtilityEstimate,
    pub frictionless_value: f64,
    pub competitors: Vec<CompetitorResult>,
    pub perturbation: Option<PerturbationReport>,
    pub oracle: Option<OracleCheck>,
    pub flags: Flags,
}

/// Runs the shadow strategy, `competitors` and the perturbation arms for
/// `shifts` (none when empty) on the same paths; `oracle_grid` adds the
/// dynamic-programming cross-check.
pub fn evaluate(
    sol: &FreeBoundarySolution,
    params: &MarketParams,
    competitors: &[Competitor],
    shifts: &[f64],
    mc: &McSettings,
    oracle_grid: Option<usize>,
) -> Result<EvaluationReport> {
    let arms = if shifts.is_empty() { Vec::new() } else { perturbation_arms(sol, shifts)? };
    let mut policies: Vec<WedgePolicy> = competitors.iter().map(|c| c.policy).collect();
    policies.extend(arms.iter().map(|a| a.2));
    let ens = run_ensemble(Some(sol), params, &policies, mc)?;
    let shadow = ens.shadow.clone().expect("shadow requested");

    let results: Vec<CompetitorResult> = competitors
        .iter()
        .zip(&ens.wedges)
        .enumerate()
        .map(|(j, (c, est))| CompetitorResult {
            name: c.name.clone(),
            policy: c.policy,
            margin: shadow.mean - est.mean,
            independent_stderr: shadow.stderr.hypot(est.stderr),
            paired_stderr: ens.paired_stderr(0, j + 1),
            estimate: est.clone(),
        })
        .collect();
    let perturbation = (!arms.is_empty()).then(|| perturbation_report(&arms, &ens, competitors.len()));
    let oracle = oracle_grid.map(|g| oracle_check(sol, g)).transpose()?;
    let frictionless_value = params.frictionless_value(params.initial_wealth())?;
    let flags = Flags {
        upper_bound: shadow.mean - shadow.tail_bound <= frictionless_value + 2.0 * shadow.stderr,
        dominance: results.iter().all(|r| r.margin >= 3.0 * r.paired_stderr),
        perturbation: perturbation.as_ref().map(|p| p.unshifted_is_max),
        oracle: oracle.as_ref().map(|o| o.pass),
    };
    Ok(EvaluationReport {
        params: *params,
        settings: *mc,
        shadow,
        frictionless_value,
        competitors: results,
        perturbation,
        oracle,
        flags,
    })
}
