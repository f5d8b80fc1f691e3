//! Utility estimates, competing policies and an independent check of the
//! no-trade region.

mod dp;
mod mc;
mod report;
mod sweep;

pub use dp::{default_time_step, dp_oracle, DpResult};
pub use mc::{
    mc_utility, perturbation_test, run_ensemble, simulate_wedge_policy, stock_fraction, tail_bound, Edge,
    Ensemble, McSettings, PerturbationReport, PerturbationRow, UtilityEstimate, Valuation, WealthProxy,
    WedgePolicy,
};
pub use sweep::{sweep_costs, write_sweep_csv, SweepRow, SweepTable, SweepValues};
pub use report::{default_competitors, evaluate, oracle_check, Competitor, CompetitorResult, EvaluationReport, Flags, OracleCheck};
