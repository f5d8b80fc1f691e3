use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use shadow_merton::evaluation::{default_competitors, evaluate as run_evaluation, sweep_costs, write_sweep_csv, McSettings};
use shadow_merton::io::{load_solution, save_solution, to_json_line, to_json_pretty, FileDigest, RunClock, RunManifest};
use shadow_merton::reflected::{initial_beta, simulate_beta};
use shadow_merton::rng::PathSeed;
use shadow_merton::strategy::{run_strategy, OutcomeSummary};
use shadow_merton::{shoot, FreeBoundarySolution, MarketParams, ShadowCoefficients, ShootControl};

use crate::{CliError, Endowment, EvaluateArgs, RunArgs, SimulateArgs, SolveArgs, SweepArgs};

type Result<T> = std::result::Result<T, CliError>;

/// `solution.json` -> `solution.manifest.json`.
fn manifest_path(out: &Path) -> PathBuf {
    out.with_extension("manifest.json")
}

struct Timer {
    unix: f64,
    start: Instant,
}

impl Timer {
    fn start() -> Self {
        let unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0);
        Self { unix, start: Instant::now() }
    }

    fn clock(&self) -> RunClock {
        RunClock { started_unix: self.unix, wall_seconds: self.start.elapsed().as_secs_f64() }
    }
}

fn value<T: Serialize>(x: &T) -> serde_json::Value {
    serde_json::to_value(x).expect("plain data serializes")
}

fn with_endowment(mut p: MarketParams, e: &Endowment) -> MarketParams {
    p.s0 = e.s0.unwrap_or(p.s0);
    p.eta_b = e.eta_b.unwrap_or(p.eta_b);
    p.eta_s = e.eta_s.unwrap_or(p.eta_s);
    p
}

/// Digest of an output written next to its manifest, named relative to it.
fn output(file: &Path) -> Result<FileDigest> {
    let mut d = FileDigest::of(file)?;
    if let Some(name) = file.file_name() {
        d.path = name.to_string_lossy().into_owned();
    }
    Ok(d)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text)?;
    Ok(())
}

pub fn solve(a: &SolveArgs) -> Result<()> {
    let timer = Timer::start();
    let params = with_endowment(
        MarketParams {
            mu: a.mu,
            sigma: a.sigma,
            delta: a.delta,
            lambda_buy: a.lambda_buy,
            lambda_sell: a.lambda_sell,
            ..MarketParams::default()
        },
        &a.endowment,
    )
    .validate()?;
    let sol = shoot(&params, a.tol, &ShootControl::default())?;
    save_solution(&sol, a.tol, &a.out)?;

    let (fraction_lo, fraction_hi) = sol.fraction_bounds();
    let line = json!({
        "beta_lo": sol.beta_lo,
        "beta_hi": sol.beta_hi,
        "fraction_lo": fraction_lo,
        "fraction_hi": fraction_hi,
        "delta_star": sol.delta_star,
    });
    println!("{}", to_json_line(&line)?);

    let mut m = RunManifest::new("solve");
    m.params = value(&params);
    m.settings = json!({ "tol": a.tol });
    m.outputs.push(output(&a.out)?);
    m.step_counts = json!({
        "grid_nodes": sol.len(),
        "shots": sol.diagnostics.map(|d| d.shots),
    });
    m.clock = timer.clock();
    m.write(&manifest_path(&a.out))?;
    Ok(())
}

struct Loaded {
    sol: FreeBoundarySolution,
    params: MarketParams,
    input: FileDigest,
}

fn load(run: &RunArgs) -> Result<Loaded> {
    let (sol, _) = load_solution(&run.solution)?;
    let params = with_endowment(sol.params, &run.endowment).validate()?;
    // market or cost flags that disagree with the file are a provenance error
    ShadowCoefficients::with_params(&sol, params)?;
    Ok(Loaded { input: FileDigest::of(&run.solution)?, sol, params })
}

fn seed_map(run: &RunArgs) -> serde_json::Value {
    json!({
        "seed_base": run.seed,
        "generator": "ChaCha8 keyed by seed_base",
        "rule": "path i: increments from stream 2i, bridge points from stream 2i+1",
        "paths": (0..run.paths)
            .map(|i| json!({ "path": i, "increments_stream": 2 * i, "bridge_stream": 2 * i + 1 }))
            .collect::<Vec<_>>(),
    })
}

const SUMMARY_COLUMNS: [&str; 10] = [
    "path",
    "discounted_utility",
    "v_tilde",
    "liquidation",
    "phi0",
    "phi1",
    "big_l",
    "big_u",
    "trade_steps",
    "audit_max",
];

fn summary_record(i: u64, s: &OutcomeSummary) -> Vec<String> {
    let f = |v: f64| format!("{v:.16e}");
    vec![
        i.to_string(),
        f(s.discounted_utility),
        f(s.v_tilde),
        f(s.liquidation),
        f(s.phi0),
        f(s.phi1),
        f(s.big_l),
        f(s.big_u),
        s.trade_steps.to_string(),
        f(s.audit_max),
    ]
}

pub fn simulate(a: &SimulateArgs) -> Result<()> {
    let timer = Timer::start();
    let run = &a.run;
    if run.paths == 0 {
        return Err(CliError::Usage("--paths must be at least 1".into()));
    }
    let Loaded { sol, params, input } = load(run)?;
    let n_steps = shadow_merton::reflected::step_count(run.horizon, run.dt)?;
    let coeffs = ShadowCoefficients::with_params(&sol, params)?;
    let (beta0, _) = initial_beta(&params, &sol)?;
    fs::create_dir_all(&a.out_dir)?;

    let simulate_one = |i: u64| -> shadow_merton::Result<_> {
        let path = simulate_beta(&coeffs, beta0, run.horizon, run.dt, PathSeed::new(run.seed, i)?)?;
        let outcome = run_strategy(&sol, &params, &path)?;
        Ok((path, outcome))
    };

    let mut outputs = Vec::new();
    let summaries: Vec<OutcomeSummary> = if a.aggregate {
        (0..run.paths)
            .into_par_iter()
            .map(|i| simulate_one(i).map(|(_, o)| o.summary()))
            .collect::<shadow_merton::Result<_>>()?
    } else {
        let mut all = Vec::new();
        for i in 0..run.paths {
            let (path, outcome) = simulate_one(i)?;
            let path_file = a.out_dir.join(format!("path_{i:05}.csv"));
            path.write_csv(BufWriter::new(File::create(&path_file)?))?;
            let outcome_file = a.out_dir.join(format!("outcome_{i:05}.csv"));
            outcome.write_csv(BufWriter::new(File::create(&outcome_file)?))?;
            outputs.push(output(&path_file)?);
            outputs.push(output(&outcome_file)?);
            all.push(outcome.summary());
        }
        all
    };

    let summary_file = a.out_dir.join("summary.csv");
    {
        let mut w = csv::Writer::from_writer(BufWriter::new(File::create(&summary_file)?));
        w.write_record(SUMMARY_COLUMNS).map_err(shadow_merton::Error::from)?;
        for (i, s) in summaries.iter().enumerate() {
            w.write_record(summary_record(i as u64, s)).map_err(shadow_merton::Error::from)?;
        }
        w.flush()?;
    }
    outputs.push(output(&summary_file)?);

    let utilities: Vec<f64> = summaries.iter().map(|s| s.discounted_utility).collect();
    let n = utilities.len() as f64;
    let mean = utilities.iter().sum::<f64>() / n;
    let stderr = if utilities.len() > 1 {
        (utilities.iter().map(|u| (u - mean) * (u - mean)).sum::<f64>() / (n - 1.0) / n).sqrt()
    } else {
        f64::NAN
    };
    let aggregate = json!({
        "paths": run.paths,
        "steps_per_path": n_steps,
        "mean_discounted_utility": mean,
        "stderr": if stderr.is_finite() { json!(stderr) } else { json!(null) },
        "max_audit": summaries.iter().map(|s| s.audit_max).fold(0.0, f64::max),
        "min_phi0": summaries.iter().map(|s| s.min_phi0).fold(f64::INFINITY, f64::min),
        "min_phi1": summaries.iter().map(|s| s.min_phi1).fold(f64::INFINITY, f64::min),
        "bulk": summaries.first().map(|s| value(&s.bulk)),
    });
    let aggregate_file = a.out_dir.join("aggregate.json");
    write_text(&aggregate_file, &to_json_pretty(&aggregate)?)?;
    outputs.push(output(&aggregate_file)?);
    println!("{}", to_json_line(&aggregate)?);

    let mut m = RunManifest::new("simulate");
    m.params = value(&params);
    m.settings = json!({
        "paths": run.paths,
        "horizon": run.horizon,
        "dt": run.dt,
        "aggregate": a.aggregate,
    });
    m.seeds = seed_map(run);
    m.inputs.push(input);
    m.outputs = outputs;
    m.step_counts = json!({ "steps_per_path": n_steps, "total_steps": n_steps as u64 * run.paths });
    m.clock = timer.clock();
    m.write(&a.out_dir.join("simulate.manifest.json"))?;
    Ok(())
}

/// Each magnitude once per sign; zero once.
fn signed_shifts(values: &[f64]) -> Result<Vec<f64>> {
    let mut out: Vec<f64> = Vec::new();
    for &v in values {
        if !v.is_finite() {
            return Err(CliError::Usage("--perturb values must be finite".into()));
        }
        let v = v.abs();
        let signed = if v == 0.0 { vec![0.0] } else { vec![-v, v] };
        for s in signed {
            if !out.contains(&s) {
                out.push(s);
            }
        }
    }
    Ok(out)
}

pub fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let timer = Timer::start();
    let run = &a.run;
    let Loaded { sol, params, input } = load(run)?;
    let mc = McSettings::new(run.paths, run.horizon, run.dt, run.seed);
    let n_steps = mc.validate()?;
    let shifts = signed_shifts(&a.perturb)?;
    let competitors = default_competitors(&params)?;
    let report = run_evaluation(&sol, &params, &competitors, &shifts, &mc, a.oracle.then_some(a.oracle_grid))?;
    write_text(&a.out, &to_json_pretty(&report)?)?;

    let line = json!({
        "shadow_mean": report.shadow.mean,
        "shadow_stderr": report.shadow.stderr,
        "frictionless_value": report.frictionless_value,
        "flags": value(&report.flags),
        "pass": report.flags.all_pass(),
    });
    println!("{}", to_json_line(&line)?);

    let arms = 1 + competitors.len() + report.perturbation.as_ref().map_or(0, |p| p.rows.len());
    let mut m = RunManifest::new("evaluate");
    m.params = value(&params);
    m.settings = json!({
        "mc": value(&mc),
        "shifts": shifts,
        "competitors": value(&competitors),
        "oracle_grid": a.oracle.then_some(a.oracle_grid),
    });
    m.seeds = seed_map(run);
    m.inputs.push(input);
    m.outputs.push(output(&a.out)?);
    m.step_counts = json!({
        "steps_per_path": n_steps,
        "policies": arms,
        "total_policy_steps": n_steps as u64 * run.paths * arms as u64,
        "oracle_iterations": report.oracle.as_ref().map(|o| o.dp.iterations),
    });
    m.clock = timer.clock();
    m.write(&manifest_path(&a.out))?;

    if report.flags.all_pass() {
        Ok(())
    } else {
        Err(CliError::Acceptance(format!("acceptance flags failed: {}", to_json_line(&report.flags)?)))
    }
}

fn read_pairs(path: &Path) -> Result<Vec<(f64, f64)>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(shadow_merton::Error::from)?;
    let mut pairs = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(shadow_merton::Error::from)?;
        let parsed: Option<Vec<f64>> = rec.iter().map(|f| f.parse().ok()).collect();
        match parsed {
            Some(v) if v.len() == 2 => pairs.push((v[0], v[1])),
            // a header row
            None if line == 0 => {}
            _ => {
                return Err(CliError::Usage(format!(
                    "{}: row {} is not lambda_buy,lambda_sell",
                    path.display(),
                    line + 1
                )))
            }
        }
    }
    Ok(pairs)
}

pub fn sweep(a: &SweepArgs) -> Result<()> {
    let timer = Timer::start();
    let params = MarketParams { mu: a.mu, sigma: a.sigma, delta: a.delta, ..MarketParams::default() }.validate()?;
    let pairs = match &a.lambda_pairs {
        Some(path) => read_pairs(path)?,
        None => a.lambdas.iter().map(|&l| (l, l)).collect(),
    };
    if pairs.is_empty() {
        return Err(CliError::Usage("give --lambdas or --lambda-pairs".into()));
    }
    let table = sweep_costs(&params, &pairs, a.tol);
    for r in &table.rows {
        if let Err(e) = &r.result {
            eprintln!("lambda ({}, {}): {e}", r.lambda_buy, r.lambda_sell);
        }
    }
    match &a.out {
        Some(out) => {
            write_sweep_csv(&table, BufWriter::new(File::create(out)?))?;
            let mut m = RunManifest::new("sweep");
            m.params = value(&params);
            m.settings = json!({ "tol": a.tol, "lambda_pairs": pairs });
            if let Some(p) = &a.lambda_pairs {
                m.inputs.push(FileDigest::of(p)?);
            }
            m.outputs.push(output(out)?);
            m.step_counts = json!({
                "rows": table.rows.len(),
                "failed_rows": table.rows.iter().filter(|r| r.result.is_err()).count(),
                "width_nondecreasing": table.width_nondecreasing,
            });
            m.clock = timer.clock();
            m.write(&manifest_path(out))?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            write_sweep_csv(&table, &mut lock)?;
            lock.flush()?;
        }
    }
    if table.rows.iter().all(|r| r.result.is_err()) {
        return Err(CliError::AllRowsFailed);
    }
    Ok(())
}
