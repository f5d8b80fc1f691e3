//! Free-boundary problem for the shadow-price offset.
//!
//! The unknown is a decreasing map `g: [beta_lo, beta_hi] -> [c_lo, c_hi]`
//! from the log-odds of the stock fraction to the log offset of the shadow
//! price, solving the second-order ODE [`OdeField::rhs`] with
//!
//! ```text
//! g(beta_lo) = c_hi,  g(beta_hi) = c_lo,  g'(beta_lo) = 0 = g'(beta_hi).
//! ```
//!
//! It is solved by shooting in `Delta = y0 - beta_lo`: integrate from
//! `(c_hi, 0)` at `y0 - Delta` up to the first zero of `g'`, then adjust
//! `Delta` until the value there equals `c_lo`. `Delta -> 0` drives the
//! end value to `c_hi` and `Delta -> infinity` drives it to minus infinity,
//! and it is continuous in between, so a sign change is always bracketed.

use crate::error::{Error, Result};
use crate::hermite;
use crate::market::{logistic, MarketParams};
use crate::rk::{self, Tolerances};

/// Right-hand side of the free-boundary ODE, `g'' = h(y, g')`.
#[derive(Debug, Clone, Copy)]
pub struct OdeField {
    k_mu: f64,
    k_delta: f64,
}

impl OdeField {
    pub fn new(params: &MarketParams) -> Self {
        let s2 = params.sigma2();
        Self { k_mu: 2.0 * params.mu / s2, k_delta: 2.0 * params.delta / s2 }
    }

    /// Cubic in the slope `z` with `y`-dependent coefficients.
    #[inline]
    pub fn rhs(&self, y: f64, z: f64) -> f64 {
        let l = 2.0 / (1.0 + (-y).exp());
        let e = self.k_delta * (1.0 + y.exp());
        let c0 = -self.k_mu + l;
        let c1 = 2.0 * self.k_mu - l - 1.0 - e;
        let c2 = -self.k_mu + 1.0 + 2.0 * e;
        let c3 = -e;
        c0 + z * (c1 + z * (c2 + z * c3))
    }
}

/// Free function form of [`OdeField::rhs`].
pub fn ode_rhs(y: f64, z: f64, params: &MarketParams) -> f64 {
    OdeField::new(params).rhs(y, z)
}

/// Bound `M'` on `|g'|` along every shot.
pub fn derivative_bound(params: &MarketParams) -> f64 {
    let (mu, s2, d) = (params.mu, params.sigma2(), params.delta);
    let a = (4.0 * (mu + s2) / d).cbrt();
    let b = (8.0 * mu / d).sqrt();
    let c = 8.0 + (4.0 * mu + 2.0 * s2) / d;
    a.max(b).max(c)
}

/// Step and tolerance settings for the shooting integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootControl {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on the step size. Shots additionally cap the step at
    /// `Delta / 8` so the initial dip of `g'` is always resolved.
    pub max_step: f64,
    /// Absolute tolerance on the location of the terminal zero of `g'`.
    pub event_tol: f64,
    /// `g'` must fall below `-event_guard` before a zero counts as the
    /// terminal one.
    pub event_guard: f64,
    /// Give up when no zero of `g'` appears within this distance of the start.
    pub max_span: f64,
    pub max_steps: usize,
    /// Minimum number of grid nodes in the final solution.
    pub min_nodes: usize,
    pub max_bracket_iter: usize,
    pub max_bisect_iter: usize,
}

impl Default for ShootControl {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-14,
            max_step: 2e-3,
            event_tol: 1e-14,
            event_guard: 0.0,
            max_span: 50.0,
            max_steps: 2_000_000,
            min_nodes: 200,
            max_bracket_iter: 200,
            max_bisect_iter: 400,
        }
    }
}

/// One integrated trajectory of the initial value problem.
#[derive(Debug, Clone)]
pub struct Shot {
    pub delta: f64,
    /// Accepted nodes `(y, g, g')`, starting at `y0 - delta` and ending at
    /// the terminal zero of `g'`.
    pub nodes: Vec<[f64; 3]>,
    /// First zero of `g'` after departure.
    pub beta_hi: f64,
    /// `g` at `beta_hi`.
    pub g_end: f64,
    /// `g'` at the located zero (ideally zero).
    pub slope_end: f64,
}

/// Integrates `(g, g')` from `(c_hi, 0)` at `y0 - delta` to the first zero
/// of `g'`.
pub fn integrate_shot(delta: f64, params: &MarketParams, control: &ShootControl) -> Result<Shot> {
    integrate_shot_capped(delta, params, control, control.max_step)
}

fn integrate_shot_capped(
    delta: f64,
    params: &MarketParams,
    control: &ShootControl,
    max_step: f64,
) -> Result<Shot> {
    if !(delta > 0.0) || !delta.is_finite() {
        return Err(Error::Validation("shooting parameter must be positive".into()));
    }
    if !(control.rtol > 0.0 && control.atol > 0.0 && control.event_tol > 0.0 && max_step > 0.0) {
        return Err(Error::Validation("integration tolerances must be positive".into()));
    }
    let field = OdeField::new(params);
    let f = |y: f64, u: &[f64; 2]| [u[1], field.rhs(y, u[1])];
    let tol = Tolerances { rtol: control.rtol, atol: control.atol };
    let m_prime = derivative_bound(params);
    let (_, y0) = params.merton_constants();

    let start = y0 - delta;
    let h_max = max_step.min(delta / 8.0);
    let mut x = start;
    let mut u = [params.c_hi(), 0.0];
    let mut h = h_max;
    let mut nodes = vec![[x, u[0], u[1]]];
    let mut departed = false;

    for _ in 0..control.max_steps {
        if x - start > control.max_span {
            break;
        }
        let trial = rk::step(&f, x, &u, h, tol);
        if !(trial.err <= 1.0) {
            if !trial.err.is_finite() {
                return Err(Error::Solver("integration produced non-finite values".into()));
            }
            h *= rk::next_step_factor(trial.err);
            continue;
        }
        let next = trial.y1;
        if next[1].abs() > m_prime * (1.0 + 1e-9) {
            return Err(Error::Solver("derivative bound exceeded".into()));
        }
        if departed && next[1] >= 0.0 {
            let (y_end, end) = locate_zero(&f, &trial, control, tol);
            nodes.push([y_end, end[0], end[1]]);
            return Ok(Shot { delta, nodes, beta_hi: y_end, g_end: end[0], slope_end: end[1] });
        }
        if next[1] < -control.event_guard {
            departed = true;
        }
        x += trial.h;
        u = next;
        nodes.push([x, u[0], u[1]]);
        h = (trial.h * rk::next_step_factor(trial.err)).min(h_max);
    }
    Err(Error::Solver(format!(
        "no zero found within y0 - Delta + {} (Delta = {delta})",
        control.max_span
    )))
}

/// Refines the zero of `g'` inside an accepted step with `g' < 0` at its
/// start and `g' >= 0` at its end.
///
/// A root of the continuous extension seeds Newton's method; each Newton
/// iterate is evaluated by a fresh Runge–Kutta step from the left end, so
/// the result carries the full order of the integrator.
fn locate_zero<F>(f: &F, trial: &rk::Trial<2>, control: &ShootControl, tol: Tolerances) -> (f64, [f64; 2])
where
    F: Fn(f64, &[f64; 2]) -> [f64; 2],
{
    let x0 = trial.x0;
    let (mut lo, mut hi) = (0.0, trial.h);
    // Bisection on the dense output down to a small fraction of the step.
    let (mut a, mut b) = (lo, hi);
    for _ in 0..60 {
        let m = 0.5 * (a + b);
        if trial.interpolate(x0 + m)[1] < 0.0 {
            a = m;
        } else {
            b = m;
        }
        if b - a <= 1e-6 * trial.h {
            break;
        }
    }
    let mut s = 0.5 * (a + b);
    let sub = |s: f64| -> [f64; 2] {
        if s == 0.0 {
            trial.y0
        } else if s == trial.h {
            trial.y1
        } else {
            rk::step(f, x0, &trial.y0, s, tol).y1
        }
    };
    let mut state = sub(s);
    for _ in 0..100 {
        if state[1] < 0.0 {
            lo = s;
        } else {
            hi = s;
        }
        let curvature = f(x0 + s, &state)[1];
        let mut next = if curvature != 0.0 { s - state[1] / curvature } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - s).abs();
        s = next;
        state = sub(s);
        if step <= control.event_tol || hi - lo <= control.event_tol {
            break;
        }
    }
    (x0 + s, state)
}

/// Bookkeeping from the root search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootDiagnostics {
    /// Bracket `[lo, hi]` in `Delta` on which the sign change was found; the
    /// root reported is the one bisection converged to inside it.
    pub bracket: (f64, f64),
    pub shots: usize,
    /// `g(beta_hi) - c_lo` before the boundary values were snapped.
    pub end_value_residual: f64,
    /// `g'(beta_hi)` before snapping.
    pub end_slope_residual: f64,
}

/// A grid node of the solved map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridNode {
    pub y: f64,
    pub g: f64,
    pub g_prime: f64,
}

/// The solved free boundary and the map `g` on a Hermite grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeBoundarySolution {
    pub params: MarketParams,
    pub delta_star: f64,
    pub beta_lo: f64,
    pub beta_hi: f64,
    pub c_lo: f64,
    pub c_hi: f64,
    pub y0: f64,
    pub m_prime: f64,
    pub diagnostics: Option<ShootDiagnostics>,
    ys: Vec<f64>,
    gs: Vec<f64>,
    dgs: Vec<f64>,
    /// `g''` at the nodes, from the ODE.
    d2gs: Vec<f64>,
}

/// Evaluation rule of [`FreeBoundarySolution::g_eval`].
pub const INTERPOLATION: &str = "cubic-hermite: g from (g, g'), g' from (g', ode g'')";

impl FreeBoundarySolution {
    /// Assembles a solution from grid nodes, recomputing the cached second
    /// derivatives. Used by the solver and the deserializer.
    pub fn from_grid(
        params: MarketParams,
        delta_star: f64,
        grid: &[GridNode],
        diagnostics: Option<ShootDiagnostics>,
    ) -> Result<Self> {
        if grid.len() < 2 {
            return Err(Error::Validation("solution grid needs at least two nodes".into()));
        }
        if grid.windows(2).any(|w| !(w[1].y > w[0].y)) {
            return Err(Error::Validation("solution grid must be strictly increasing".into()));
        }
        let field = OdeField::new(&params);
        let (_, y0) = params.merton_constants();
        Ok(Self {
            params,
            delta_star,
            beta_lo: grid[0].y,
            beta_hi: grid[grid.len() - 1].y,
            c_lo: params.c_lo(),
            c_hi: params.c_hi(),
            y0,
            m_prime: derivative_bound(&params),
            diagnostics,
            ys: grid.iter().map(|n| n.y).collect(),
            gs: grid.iter().map(|n| n.g).collect(),
            dgs: grid.iter().map(|n| n.g_prime).collect(),
            d2gs: grid.iter().map(|n| field.rhs(n.y, n.g_prime)).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn grid(&self) -> impl ExactSizeIterator<Item = GridNode> + '_ {
        (0..self.ys.len()).map(|i| GridNode { y: self.ys[i], g: self.gs[i], g_prime: self.dgs[i] })
    }

    /// Stock fraction (valued at the shadow price) at the lower and upper
    /// edge of the no-trade region.
    pub fn fraction_bounds(&self) -> (f64, f64) {
        (logistic(self.beta_lo), logistic(self.beta_hi))
    }

    /// `(g(y), g'(y))` for `y` in `[beta_lo, beta_hi]`.
    pub fn g_eval(&self, y: f64) -> Result<(f64, f64)> {
        if !(y >= self.beta_lo && y <= self.beta_hi) {
            return Err(Error::Validation(format!(
                "y = {y} outside [{}, {}]",
                self.beta_lo, self.beta_hi
            )));
        }
        Ok(self.eval(y))
    }

    /// Unchecked evaluation; `y` must lie in the grid range.
    #[inline]
    pub(crate) fn eval(&self, y: f64) -> (f64, f64) {
        let i = hermite::locate(&self.ys, y);
        let (x0, x1) = (self.ys[i], self.ys[i + 1]);
        let (g, _) = hermite::cubic(x0, x1, self.gs[i], self.gs[i + 1], self.dgs[i], self.dgs[i + 1], y);
        let (dg, _) =
            hermite::cubic(x0, x1, self.dgs[i], self.dgs[i + 1], self.d2gs[i], self.d2gs[i + 1], y);
        (g, dg)
    }

    /// Inverse map `f = g^{-1}`: the unique `y` with `g(y) = c`.
    pub fn f_eval(&self, c: f64) -> Result<f64> {
        if !(c >= self.c_lo && c <= self.c_hi) {
            return Err(Error::Validation(format!(
                "c = {c} outside [{}, {}]",
                self.c_lo, self.c_hi
            )));
        }
        if c == self.c_hi {
            return Ok(self.beta_lo);
        }
        if c == self.c_lo {
            return Ok(self.beta_hi);
        }
        // g is decreasing: first node with g <= c closes the cell.
        let j = self.gs.partition_point(|&g| g > c).clamp(1, self.len() - 1);
        let (mut lo, mut hi) = (self.ys[j - 1], self.ys[j]);
        let mut y = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (g, dg) = self.eval(y);
            if g == c {
                return Ok(y);
            }
            if g > c {
                lo = y;
            } else {
                hi = y;
            }
            let newton = if dg < 0.0 { y - (g - c) / dg } else { f64::NAN };
            let next = if newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if next == y || hi - lo <= f64::EPSILON * y.abs().max(1.0) {
                return Ok(next);
            }
            y = next;
        }
        Ok(y)
    }

    /// Checks the structural invariants of a solved instance.
    pub fn check_invariants(&self, tol: f64) -> Result<()> {
        let fail = |m: String| Err(Error::Solver(m));
        if !(self.beta_lo < self.y0 && self.y0 < self.beta_hi) {
            return fail(format!(
                "expected beta_lo < y0 < beta_hi, got {} {} {}",
                self.beta_lo, self.y0, self.beta_hi
            ));
        }
        let n = self.len();
        if (self.gs[0] - self.c_hi).abs() > tol || (self.gs[n - 1] - self.c_lo).abs() > tol {
            return fail("boundary values violated".into());
        }
        if self.dgs[0].abs() > tol || self.dgs[n - 1].abs() > tol {
            return fail("boundary slopes violated".into());
        }
        for i in 0..n {
            if i > 0 && i < n - 1 && !(self.dgs[i] < 0.0) {
                return fail(format!("g' not negative at interior node y = {}", self.ys[i]));
            }
            if self.dgs[i] < -self.m_prime || self.dgs[i] > 0.0 {
                return fail(format!("g' outside [-M', 0] at y = {}", self.ys[i]));
            }
            if self.gs[i] < self.c_lo - tol || self.gs[i] > self.c_hi + tol {
                return fail(format!("g outside [c_lo, c_hi] at y = {}", self.ys[i]));
            }
        }
        Ok(())
    }

    /// Finite-difference residuals of the solved system at `n_probe`
    /// interior points.
    pub fn residual_check(&self, n_probe: usize) -> Residuals {
        let field = OdeField::new(&self.params);
        let s2 = self.params.sigma2();
        let (mu, sigma, delta) = (self.params.mu, self.params.sigma, self.params.delta);
        let width = self.beta_hi - self.beta_lo;
        let fd = 1e-5 * width;
        let mut out = Residuals::default();
        for j in 1..=n_probe {
            let y = self.beta_lo + width * j as f64 / (n_probe + 1) as f64;
            if y - fd < self.beta_lo || y + fd > self.beta_hi {
                continue;
            }
            let (_, z) = self.eval(y);
            let (_, zp) = self.eval(y + fd);
            let (_, zm) = self.eval(y - fd);
            let g2 = (zp - zm) / (2.0 * fd);
            out.ode_g = out.ode_g.max((g2 - field.rhs(y, z)).abs());

            let pi = logistic(y);
            let e = 1.0 + y.exp();
            let (mu_t, sigma_t) = tilde_from_slope(y, z, &self.params);
            let vol = sigma + sigma_t;
            let drift = mu - 0.5 * s2 + mu_t;
            out.cond_fraction = out.cond_fraction.max((pi - drift / (vol * vol) - 0.5).abs());
            out.probes += 1;

            if z.abs() <= 0.01 {
                continue;
            }
            out.inverse_probes += 1;
            // f' = 1/g', f'' = -g''/g'^3
            let f1 = 1.0 / z;
            let f2 = -g2 / (z * z * z);
            let kd = 2.0 * delta / s2;
            let km = 2.0 * mu / s2;
            let l = 2.0 * pi;
            let rhs_f = kd * e
                + (km - 1.0 - 2.0 * kd * e) * f1
                + (-2.0 * km + l + 1.0 + kd * e) * f1 * f1
                + (km - l) * f1 * f1 * f1;
            out.ode_f = out.ode_f.max((f2 - rhs_f).abs());

            let g2_ode = field.rhs(y, z);
            let f2_ode = -g2_ode / (z * z * z);
            let lhs = drift + delta * vol * vol / (0.5 * vol * vol - drift);
            let rhs = f1 * mu_t + 0.5 * f2_ode * sigma_t * sigma_t;
            out.cond_dynamics = out.cond_dynamics.max((lhs - rhs).abs());
            out.cond_volatility = out.cond_volatility.max((vol - f1 * sigma_t).abs());
        }
        out
    }
}

/// Shadow drift and volatility of `C = g(beta)` expressed through `g'`.
#[inline]
pub(crate) fn tilde_from_slope(y: f64, z: f64, params: &MarketParams) -> (f64, f64) {
    let s2 = params.sigma2();
    let k = 1.0 / (1.0 - z);
    let odd = (1.0 - (-y).exp()) / (1.0 + (-y).exp());
    let mu_t = -(params.mu - 0.5 * s2) + 0.5 * s2 * k * k * odd;
    (mu_t, params.sigma * z * k)
}

/// Maximum residuals reported by [`FreeBoundarySolution::residual_check`].
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Residuals {
    /// `g''` (centered difference of the interpolated `g'`) minus the ODE.
    pub ode_g: f64,
    /// The same ODE written for the inverse `f`, on probes with `|g'| > 0.01`.
    pub ode_f: f64,
    /// Optimal-fraction condition with the shadow coefficients.
    pub cond_fraction: f64,
    /// Drift-matching condition, `g''` taken from the ODE.
    pub cond_dynamics: f64,
    /// Volatility-matching condition `sigma + sigma~ = f' sigma~`.
    pub cond_volatility: f64,
    pub probes: usize,
    pub inverse_probes: usize,
}

impl Residuals {
    /// Largest of the three shadow-coefficient conditions.
    pub fn conditions(&self) -> f64 {
        self.cond_fraction.max(self.cond_dynamics).max(self.cond_volatility)
    }
}

/// Solves the free-boundary problem to `|g(beta_hi) - c_lo| <= tol`.
pub fn shoot(params: &MarketParams, tol: f64, control: &ShootControl) -> Result<FreeBoundarySolution> {
    let params = params.validate()?;
    if !(tol > 0.0) {
        return Err(Error::Validation("shooting tolerance must be positive".into()));
    }
    let c_lo = params.c_lo();
    let mut shots = 0usize;
    let mut fire = |delta: f64| -> Result<Shot> {
        shots += 1;
        integrate_shot(delta, &params, control)
    };

    // Bracket a sign change of g_end - c_lo.
    let mut delta = tol;
    let mut shot = fire(delta)?;
    let (mut lo, mut hi);
    if shot.g_end - c_lo > 0.0 {
        lo = delta;
        let mut found = None;
        for _ in 0..control.max_bracket_iter {
            delta *= 2.0;
            let s = fire(delta)?;
            if s.g_end - c_lo <= 0.0 {
                found = Some(s);
                break;
            }
            lo = delta;
        }
        shot = found.ok_or_else(|| Error::Solver("bracketing failed".into()))?;
        hi = delta;
    } else {
        hi = delta;
        let mut found = None;
        for _ in 0..control.max_bracket_iter {
            delta *= 0.5;
            let s = fire(delta)?;
            if s.g_end - c_lo > 0.0 {
                found = Some(s);
                break;
            }
            hi = delta;
        }
        shot = found.ok_or_else(|| Error::Solver("bracketing failed".into()))?;
        lo = delta;
    }
    let bracket = (lo, hi);

    // Bisection on the sign change.
    let mut converged = (shot.g_end - c_lo).abs() <= tol;
    for _ in 0..control.max_bisect_iter {
        if converged {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if !(mid > lo && mid < hi) {
            return Err(Error::Solver("bisection stalled".into()));
        }
        shot = fire(mid)?;
        let r = shot.g_end - c_lo;
        if r.abs() <= tol {
            converged = true;
        } else if r > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    if !converged {
        return Err(Error::Solver("bisection stalled".into()));
    }

    let delta_star = shot.delta;
    if shot.nodes.len() < control.min_nodes {
        let span = shot.beta_hi - (shot.nodes[0][0]);
        let cap = span / control.min_nodes as f64;
        shot = integrate_shot_capped(delta_star, &params, control, cap)?;
        shots += 1;
    }

    let diagnostics = ShootDiagnostics {
        bracket,
        shots,
        end_value_residual: shot.g_end - c_lo,
        end_slope_residual: shot.slope_end,
    };
    let mut grid: Vec<GridNode> =
        shot.nodes.iter().map(|n| GridNode { y: n[0], g: n[1], g_prime: n[2] }).collect();
    // Accepted steps can land within rounding of the located zero.
    while grid.len() > 2 && grid[grid.len() - 1].y - grid[grid.len() - 2].y <= 1e-13 {
        let last = grid.pop().unwrap();
        let n = grid.len();
        grid[n - 1] = last;
    }
    let n = grid.len();
    grid[0].g = params.c_hi();
    grid[0].g_prime = 0.0;
    grid[n - 1].g = c_lo;
    grid[n - 1].g_prime = 0.0;

    let sol = FreeBoundarySolution::from_grid(params, delta_star, &grid, Some(diagnostics))?;
    sol.check_invariants(tol.max(1e-12))?;
    Ok(sol)
}

/// Diagnostic scan of `Delta -> (beta_hi(Delta), g_end(Delta))`, for
/// inspecting whether the end-value map crosses `c_lo` more than once.
pub fn scan_shots(
    params: &MarketParams,
    deltas: &[f64],
    control: &ShootControl,
) -> Vec<Result<(f64, f64, f64)>> {
    deltas
        .iter()
        .map(|&d| integrate_shot(d, params, control).map(|s| (d, s.beta_hi, s.g_end)))
        .collect()
}



#[cfg(test)]
mod inverse_props {
    use super::*;
    use proptest::prelude::*;
    use std::sync::OnceLock;

    fn solution() -> &'static FreeBoundarySolution {
        static SOL: OnceLock<FreeBoundarySolution> = OnceLock::new();
        SOL.get_or_init(|| shoot(&MarketParams::default(), 1e-10, &ShootControl::default()).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]
        #[test]
        fn inverse_roundtrip(u in 0.001f64..0.999) {
            let sol = solution();
            let y = sol.beta_lo + u * (sol.beta_hi - sol.beta_lo);
            let (g, _) = sol.g_eval(y).unwrap();
            let back = sol.f_eval(g).unwrap();
            prop_assert!((back - y).abs() < 1e-9, "{} vs {}", back, y);
        }

        #[test]
        fn interpolant_stays_in_range(u in 0.0f64..=1.0) {
            let sol = solution();
            let y = sol.beta_lo + u * (sol.beta_hi - sol.beta_lo);
            let (g, dg) = sol.g_eval(y.min(sol.beta_hi)).unwrap();
            prop_assert!(g >= sol.c_lo - 1e-15 && g <= sol.c_hi + 1e-15);
            prop_assert!(dg <= 1e-15 && dg >= -sol.m_prime);
        }
    }
}
