//! Frictional Monte Carlo: keep the share position inside the moving no-trade band by
//! minimal trades at the bid and ask, and measure welfare, turnover and the shadow
//! price.
//!
//! Paths are generated, solved and simulated one at a time, so memory does not grow
//! with the number of paths. Every spread level of a sweep runs on the same price path
//! (common random numbers); half-spreads are linear in the spread level, so each level
//! is a rescaling of the path's spread series.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::asymptotics::{fraction_halfwidth, shares_halfwidth, turnover_rate};
use crate::error::{Error, Result};
use crate::frictionless::{crra_bracket, FrictionlessModel, PathSolution};
use crate::market::{MarketModel, ModelKind, PathBundle, PathGenerator, PathGrid, SamplePath, SpreadModel};
use crate::preferences::{Preferences, UtilityKind};
use crate::stats::{Moments, ShapeMoments, WeightedMoments};

const CHUNK: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimOptions {
    /// Buy the initial position at the ask.
    pub charge_initial_trade: bool,
    /// Liquidate the final position at the bid/ask before evaluating terminal utility.
    pub liquidate_at_horizon: bool,
    /// Fraction of the half-width by which a rebalance moves past the boundary into
    /// the band (0 trades exactly to the boundary).
    pub overshoot: f64,
    /// Number of leading paths recorded in the trace.
    pub trace_paths: usize,
    pub initial_position: InitialPosition,
}

/// Where the frictional position starts inside the initial band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPosition {
    /// Exactly at the band centre.
    #[default]
    Midpoint,
    /// Uniform over the band, the stationary law of the reflected deviation, so the
    /// run starts in the regime the leading-order formulas describe. Offsets follow a
    /// Weyl sequence in the path index and are shared across spread levels.
    Stationary,
}

/// Initial offset in `[-1, 1)` for the stationary start.
fn weyl_offset(path_id: usize) -> f64 {
    const G: f64 = 0.618_033_988_749_894_8;
    let u = (0.5 + path_id as f64 * G).fract();
    2.0 * u - 1.0
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            charge_initial_trade: true,
            liquidate_at_horizon: true,
            overshoot: 0.0,
            trace_paths: 0,
            initial_position: InitialPosition::Midpoint,
        }
    }
}

impl SimOptions {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.overshoot) {
            return Err(Error::param("overshoot", "must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// Everything needed to run the frictional simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionalRun {
    pub model: MarketModel,
    pub pref: Preferences,
    pub spread: SpreadModel,
    pub grid: PathGrid,
    pub x0: f64,
    pub options: SimOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShadowDiagnostics {
    /// Grid points with the shadow price outside `[S - eps, S + eps]`.
    pub containment_violations: u64,
    /// Largest `|S^eps - (S -/+ eps)|` at grid points where a trade occurred.
    pub boundary_touch_error: f64,
    pub trade_points: u64,
    /// Grid points where the portfolio gamma vanishes and the shadow price is undefined.
    pub not_applicable_points: u64,
}

/// One evaluation of the shadow-price polynomial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShadowPoint {
    pub alpha: f64,
    pub gamma: f64,
    pub price: f64,
}

/// `S^eps = S + alpha d^3 - gamma d` with `alpha = c^S/(3 R c^phi)` and
/// `gamma = (9 c^S eps^2 / (4 R c^phi))^(1/3)`. `None` when the portfolio gamma
/// vanishes.
pub fn shadow_price(s: f64, eps: f64, risk_tolerance: f64, portfolio_gamma: f64, deviation: f64) -> Option<ShadowPoint> {
    if !(portfolio_gamma > 0.0) || !(risk_tolerance > 0.0) {
        return None;
    }
    let ratio = 1.0 / portfolio_gamma;
    let alpha = ratio / (3.0 * risk_tolerance);
    let gamma = (2.25 * ratio / risk_tolerance * eps * eps).cbrt();
    let d = deviation;
    Some(ShadowPoint {
        alpha,
        gamma,
        price: s + alpha * d * d * d - gamma * d,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

impl Estimate {
    fn from(m: &Moments) -> Self {
        Estimate {
            value: m.mean(),
            stderr: m.stderr(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedTurnover {
    /// Shares bought after the initial position is set up.
    pub cum_purchases: Estimate,
    pub cum_sales: Estimate,
    /// `cum_purchases + cum_sales`.
    pub absolute_share_turnover: Estimate,
    pub relative_share_turnover: Estimate,
    pub relative_wealth_turnover: Estimate,
}

/// Long-run growth rates `(1/T) log X_T` (power/log preferences).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthMeasurement {
    pub frictionless_rate: Estimate,
    pub frictional_rate: Estimate,
    pub reduction: Estimate,
    pub predicted_reduction: f64,
    /// `mu^2/(2 sigma^2)` for log utility in the Black-Scholes model.
    pub theoretical_frictionless_rate: Option<f64>,
}

/// Leading-order predictions evaluated on the simulated paths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub ce_loss: f64,
    pub ce_loss_fraction: Option<f64>,
    pub absolute_share_turnover: f64,
    pub relative_share_turnover: f64,
    pub relative_wealth_turnover: f64,
    pub growth_reduction: Option<f64>,
    /// Mean half-width at time zero, in shares.
    pub band_halfwidth_t0: f64,
    /// Half-width in risky-weight space at time zero (power/log).
    pub band_fraction_t0: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminalStats {
    pub mean_frictional: f64,
    pub sd_frictional: f64,
    pub mean_frictionless: f64,
    pub sd_frictionless: f64,
    /// `(E[X^eps_T] - x0) / sd(X^eps_T)` with a delta-method standard error that
    /// accounts for skewness and kurtosis of terminal wealth.
    pub sharpe_frictional: Estimate,
    pub sharpe_frictionless: Estimate,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub path_id: usize,
    pub t: f64,
    pub s: f64,
    pub phi_eps: f64,
    pub nt_bar: f64,
    pub delta_nt: f64,
    pub x_eps: f64,
    pub cum_cost: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrictionSimResult {
    /// Spread level of this run.
    pub eta: f64,
    pub n_paths: usize,
    pub n_bankrupt: usize,
    pub realized_utility: Estimate,
    pub frictionless_utility: Estimate,
    pub realized_ce_loss: Estimate,
    pub loss_direct_cost: Estimate,
    pub loss_displacement: Estimate,
    pub realized_turnover: RealizedTurnover,
    pub mean_cost: f64,
    pub shadow: ShadowDiagnostics,
    pub confinement_violations: u64,
    /// Largest accounting-identity residual per unit initial wealth.
    pub max_accounting_residual: f64,
    /// Largest `|kappa^eps - c X^eps|` for power/log consumption.
    pub max_consumption_residual: f64,
    pub terminal: TerminalStats,
    pub growth: Option<GrowthMeasurement>,
    pub predicted: Prediction,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub trace: Vec<TraceRow>,
}

impl FrictionSimResult {
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "path_id,t,S,phi_eps,NTbar,DeltaNT,X_eps,cum_cost")?;
        for r in &self.trace {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.path_id, r.t, r.s, r.phi_eps, r.nt_bar, r.delta_nt, r.x_eps, r.cum_cost
            )?;
        }
        Ok(())
    }
}

/// Per-path, per-spread outcome.
#[derive(Debug, Clone, Default)]
struct PathRecord {
    ok: bool,
    du_spread: f64,
    du_mid: f64,
    u_eps: f64,
    u_frictionless: f64,
    purchases: f64,
    sales: f64,
    rel_share: f64,
    rel_wealth: f64,
    cost: f64,
    x_eps_t: f64,
    x_t: f64,
    containment_violations: u64,
    trade_points: u64,
    na_points: u64,
    boundary_touch: f64,
    confinement_violations: u64,
    accounting: f64,
    consumption_residual: f64,
}

/// Per-path prediction integrals at the largest spread level.
#[derive(Debug, Clone, Copy, Default)]
struct PathPrediction {
    z_t: f64,
    loss_q: f64,
    phat_w: f64,
    loss_frac: f64,
    turnover: f64,
    rel_share: f64,
    rel_wealth: f64,
    growth: f64,
    hw0: f64,
    dpi0: f64,
}

/// Trapezoid accumulator on a uniform grid.
#[derive(Default)]
struct Trap {
    sum: f64,
}

impl Trap {
    fn add(&mut self, k: usize, n: usize, v: f64) {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        self.sum += w * v;
    }
}

struct Engine<'a> {
    run: &'a FrictionalRun,
    fm: FrictionlessModel,
    gen: PathGenerator,
    etas: &'a [f64],
    eta_max: f64,
    marginal_u0: f64,
}

impl<'a> Engine<'a> {
    fn simulate(&self, path_id: usize) -> Result<(Vec<PathRecord>, PathPrediction, Vec<TraceRow>)> {
        let path = self.gen.path(path_id)?;
        let sol = self.fm.solve_path(&path);
        let pred = self.predict(&path, &sol);
        let u0 = self
            .fm
            .realized_utility(&sol.consumption_rate, sol.wealth[path.n_steps()])
            .unwrap_or(f64::NAN);
        let mut trace = Vec::new();
        let records = self
            .etas
            .iter()
            .enumerate()
            .map(|(j, &eta)| {
                let scale = if self.eta_max > 0.0 { eta / self.eta_max } else { 0.0 };
                let tr = if j == 0 && path_id < self.run.options.trace_paths {
                    Some(&mut trace)
                } else {
                    None
                };
                self.run_path(&path, &sol, scale, u0, tr)
            })
            .collect();
        Ok((records, pred, trace))
    }

    fn predict(&self, path: &SamplePath, sol: &PathSolution) -> PathPrediction {
        let fm = &self.fm;
        let n = path.n_steps();
        let dt = self.run.grid.dt();
        let var = fm.model.sigma * fm.model.sigma;
        let gamma = fm.crra_gamma();
        let (mut loss_q, mut frac, mut turn, mut rsh, mut rwe, mut growth) =
            (Trap::default(), Trap::default(), Trap::default(), Trap::default(), Trap::default(), Trap::default());
        let mut log_e = 0.0f64;
        let mut cum_c = 0.0f64;
        let mut out = PathPrediction::default();
        for k in 0..=n {
            let s = path.mid_price[k];
            let x = sol.wealth[k];
            let inp = fm.band_inputs(path, sol, k, x);
            let hw = shares_halfwidth(inp.risk_tolerance, inp.portfolio_gamma, path.spread_halfwidth[k]);
            let c_s = var * s * s;
            loss_q.add(k, n, hw * hw / (2.0 * inp.risk_tolerance) * c_s);
            let rate = turnover_rate(inp.portfolio_gamma, c_s, hw);
            turn.add(k, n, rate);
            if rate != 0.0 {
                rsh.add(k, n, rate / sol.shares[k].abs());
                rwe.add(k, n, rate * s / x.abs());
            }
            if k == 0 {
                out.hw0 = hw;
            }
            if let Some(g) = gamma {
                let dpi = hw * s / x;
                if k == 0 {
                    out.dpi0 = dpi;
                }
                frac.add(k, n, 0.5 * g * dpi * dpi * var * (-cum_c).exp());
                growth.add(k, n, 0.5 * dpi * dpi * var);
                if k < n {
                    log_e += (1.0 + sol.risky_weight[k] * path.return_increments[k]).ln();
                    cum_c += sol.consumption_wealth_ratio[k] * dt;
                }
            }
        }
        out.z_t = sol.q_density[n];
        out.loss_q = loss_q.sum * dt;
        out.phat_w = out.z_t * log_e.exp();
        out.loss_frac = frac.sum * dt;
        out.turnover = turn.sum * dt;
        out.rel_share = rsh.sum * dt;
        out.rel_wealth = rwe.sum * dt;
        out.growth = growth.sum * dt / self.run.grid.horizon;
        out
    }

    fn run_path(
        &self,
        path: &SamplePath,
        sol: &PathSolution,
        scale: f64,
        u0: f64,
        mut trace: Option<&mut Vec<TraceRow>>,
    ) -> PathRecord {
        let fm = &self.fm;
        let pref = &self.run.pref;
        let opts = &self.run.options;
        let x0 = self.run.x0;
        let n = path.n_steps();
        let dt = self.run.grid.dt();
        let crra = fm.crra_gamma().is_some();
        let consumes = pref.consumes();
        let unit = x0.abs().max(1.0);

        let mut rec = PathRecord::default();
        let mut phi_e = 0.0;
        let mut cash = x0;
        let mut gains = 0.0;
        let mut cons_int = 0.0;
        let mut control = 0.0;
        let mut x_mid = x0;
        let mut u_cons = 0.0;

        for k in 0..=n {
            let s = path.mid_price[k];
            let eps = scale * path.spread_halfwidth[k];
            let x_e = if k == 0 { x0 } else { cash + phi_e * s };
            if crra && !(x_e > 0.0 && x_mid > 0.0) {
                return rec;
            }
            let inp = fm.band_inputs(path, sol, k, x_e);
            let hw = shares_halfwidth(inp.risk_tolerance, inp.portfolio_gamma, eps);
            let mid = inp.midpoint;

            // Rebalance. The initial position is set to the band centre.
            let mut trade = 0.0;
            if k == 0 {
                trade = match opts.initial_position {
                    InitialPosition::Midpoint => mid,
                    InitialPosition::Stationary => mid + weyl_offset(path.path_id) * hw,
                };
            } else if k < n {
                let keep = hw * (1.0 - opts.overshoot);
                if phi_e > mid + hw {
                    trade = mid + keep - phi_e;
                } else if phi_e < mid - hw {
                    trade = mid - keep - phi_e;
                }
            }
            if trade != 0.0 {
                let fee = if k == 0 && !opts.charge_initial_trade { 0.0 } else { eps * trade.abs() };
                cash -= trade * s + fee;
                rec.cost += fee;
                phi_e += trade;
                if k > 0 {
                    if trade > 0.0 {
                        rec.purchases += trade;
                    } else {
                        rec.sales -= trade;
                    }
                    if phi_e != 0.0 {
                        rec.rel_share += trade.abs() / phi_e.abs();
                    }
                    rec.rel_wealth += s * trade.abs() / x_e.abs();
                }
            }

            // Confinement and shadow price after the rebalance.
            let dev = phi_e - mid;
            if k < n && dev.abs() > hw * (1.0 + 1e-12) + 1e-15 * mid.abs() {
                rec.confinement_violations += 1;
            }
            // No rebalance happens at the horizon, so the shadow price is checked before it.
            let shadow = if k < n {
                shadow_price(s, eps, inp.risk_tolerance, inp.portfolio_gamma, dev).ok_or(())
            } else {
                Err(())
            };
            match shadow {
                Ok(sp) => {
                    let shift = sp.price - s;
                    if shift.abs() > eps * (1.0 + 1e-9) {
                        rec.containment_violations += 1;
                    }
                    if k > 0 && trade != 0.0 {
                        rec.trade_points += 1;
                        if opts.overshoot == 0.0 {
                            let side = if trade > 0.0 { eps } else { -eps };
                            rec.boundary_touch = rec.boundary_touch.max((shift - side).abs());
                        }
                    }
                }
                Err(()) if k < n => rec.na_points += 1,
                Err(()) => {}
            }

            let marked = cash + phi_e * s;
            let resid = marked - (x0 + gains - rec.cost - cons_int);
            rec.accounting = rec.accounting.max(resid.abs() / unit);

            if let Some(tr) = trace.as_deref_mut() {
                tr.push(TraceRow {
                    path_id: path.path_id,
                    t: k as f64 * dt,
                    s,
                    phi_eps: phi_e,
                    nt_bar: mid,
                    delta_nt: hw,
                    x_eps: marked,
                    cum_cost: rec.cost,
                });
            }

            if k == n {
                break;
            }

            // Consumption shifted by the wealth gap, then the price step.
            let kappa_e = sol.consumption_rate[k] + sol.sens_consumption[k] * (x_e - sol.wealth[k]);
            if crra && consumes {
                let c = sol.consumption_wealth_ratio[k];
                rec.consumption_residual = rec.consumption_residual.max((kappa_e - c * x_e).abs());
            }
            if consumes {
                let tau = self.run.grid.horizon - k as f64 * dt;
                match pref.utility(UtilityKind::Consumption, tau, kappa_e) {
                    Ok(u) => u_cons += u * dt,
                    Err(_) => return rec,
                }
            }
            let ds = path.mid_price[k + 1] - s;
            cash -= kappa_e * dt;
            cons_int += kappa_e * dt;
            gains += phi_e * ds;
            control += (phi_e - sol.shares[k]) * ds;
            x_mid += phi_e * ds - kappa_e * dt;
        }

        let mut x_t = cash + phi_e * path.mid_price[n];
        if opts.liquidate_at_horizon {
            let fee = scale * path.spread_halfwidth[n] * phi_e.abs();
            x_t -= fee;
            rec.cost += fee;
        }
        let term = |x: f64| pref.utility(UtilityKind::Terminal, 0.0, x);
        let (u_eps, u_mid) = match (term(x_t), term(x_mid)) {
            (Ok(a), Ok(b)) => (u_cons + a, u_cons + b),
            _ => return rec,
        };
        if !u0.is_finite() {
            return rec;
        }
        // Zero-mean control: E[Z_T int psi dS] = 0 for adapted psi.
        let cv = self.marginal_u0 * sol.q_density[n] * control;
        rec.ok = true;
        rec.du_spread = u_eps - u0 - cv;
        rec.du_mid = u_mid - u0 - cv;
        rec.u_eps = u_eps;
        rec.u_frictionless = u0;
        rec.x_eps_t = x_t;
        rec.x_t = sol.wealth[n];
        rec
    }
}

#[derive(Default, Clone)]
struct Accum {
    du_spread: Moments,
    du_mid: Moments,
    du_gap: Moments,
    u_eps: Moments,
    u0: Moments,
    purchases: Moments,
    sales: Moments,
    absolute: Moments,
    rel_share: Moments,
    rel_wealth: Moments,
    cost: Moments,
    x_eps: ShapeMoments,
    x0: ShapeMoments,
    g_eps: Moments,
    g0: Moments,
    g_gap: Moments,
    n_bankrupt: usize,
    containment: u64,
    trades: u64,
    na: u64,
    touch: f64,
    confinement: u64,
    accounting: f64,
    consumption: f64,
}

impl Accum {
    fn push(&mut self, r: &PathRecord, horizon: f64, crra: bool) {
        self.containment += r.containment_violations;
        self.trades += r.trade_points;
        self.na += r.na_points;
        self.touch = self.touch.max(r.boundary_touch);
        self.confinement += r.confinement_violations;
        self.accounting = self.accounting.max(r.accounting);
        self.consumption = self.consumption.max(r.consumption_residual);
        if !r.ok {
            self.n_bankrupt += 1;
            return;
        }
        self.du_spread.push(r.du_spread);
        self.du_mid.push(r.du_mid);
        self.du_gap.push(r.du_mid - r.du_spread);
        self.u_eps.push(r.u_eps);
        self.u0.push(r.u_frictionless);
        self.purchases.push(r.purchases);
        self.sales.push(r.sales);
        self.absolute.push(r.purchases + r.sales);
        self.rel_share.push(r.rel_share);
        self.rel_wealth.push(r.rel_wealth);
        self.cost.push(r.cost);
        self.x_eps.push(r.x_eps_t);
        self.x0.push(r.x_t);
        if crra {
            let a = r.x_eps_t.ln() / horizon;
            let b = r.x_t.ln() / horizon;
            self.g_eps.push(a);
            self.g0.push(b);
            self.g_gap.push(b - a);
        }
    }
}

#[derive(Default, Clone, Copy)]
struct PredAccum {
    loss_q: WeightedMoments,
    loss_frac: WeightedMoments,
    turnover: Moments,
    rel_share: Moments,
    rel_wealth: Moments,
    growth: Moments,
    hw0: Moments,
    dpi0: Moments,
}

/// Runs one spread level (`run.spread.eta0`).
pub fn run_frictional(run: &FrictionalRun) -> Result<FrictionSimResult> {
    let mut v = run_frictional_sweep(run, &[run.spread.eta0])?;
    Ok(v.remove(0))
}

/// Runs several spread levels on common random numbers. The trace, if requested, is
/// recorded for the first level.
pub fn run_frictional_sweep(run: &FrictionalRun, etas: &[f64]) -> Result<Vec<FrictionSimResult>> {
    run.options.validate()?;
    if etas.is_empty() {
        return Err(Error::param("eta", "at least one spread level required"));
    }
    if etas.iter().any(|e| !(*e >= 0.0 && e.is_finite())) {
        return Err(Error::param("eta", "spread levels must be finite and >= 0"));
    }
    let eta_max = etas.iter().cloned().fold(0.0, f64::max);
    let fm = FrictionlessModel::new(run.model, run.pref, run.x0, run.grid.horizon)?;
    let gen = PathGenerator::new(run.model, run.spread.with_eta(eta_max), run.grid)?;
    let marginal_u0 = fm.marginal_indirect_utility(run.x0)?;
    let engine = Engine {
        run,
        fm,
        gen,
        etas,
        eta_max,
        marginal_u0,
    };
    let crra = fm.crra_gamma().is_some();
    let horizon = run.grid.horizon;
    let mut acc = vec![Accum::default(); etas.len()];
    let mut pacc = PredAccum::default();
    let mut trace = Vec::new();

    let n_paths = run.grid.n_paths;
    let mut start = 0;
    while start < n_paths {
        let end = (start + CHUNK).min(n_paths);
        let chunk: Vec<_> = (start..end).into_par_iter().map(|id| engine.simulate(id)).collect();
        for item in chunk {
            let (recs, pred, tr) = item?;
            for (a, r) in acc.iter_mut().zip(&recs) {
                a.push(r, horizon, crra);
            }
            pacc.loss_q.push(pred.loss_q, pred.z_t);
            pacc.loss_frac.push(pred.loss_frac, pred.phat_w);
            pacc.turnover.push(pred.turnover);
            pacc.rel_share.push(pred.rel_share);
            pacc.rel_wealth.push(pred.rel_wealth);
            pacc.growth.push(pred.growth);
            pacc.hw0.push(pred.hw0);
            pacc.dpi0.push(pred.dpi0);
            trace.extend(tr);
        }
        start = end;
    }

    let warnings = grid_warnings(run, &fm, etas);
    let mut out = Vec::with_capacity(etas.len());
    for (j, (&eta, a)) in etas.iter().zip(&acc).enumerate() {
        let scale = if eta_max > 0.0 { eta / eta_max } else { 0.0 };
        let s13 = scale.cbrt();
        let s23 = s13 * s13;
        let inv13 = if scale > 0.0 { 1.0 / s13 } else { 0.0 };
        let predicted = Prediction {
            ce_loss: pacc.loss_q.mean() * s23,
            ce_loss_fraction: crra.then(|| pacc.loss_frac.mean() * s23),
            absolute_share_turnover: pacc.turnover.mean() * inv13,
            relative_share_turnover: pacc.rel_share.mean() * inv13,
            relative_wealth_turnover: pacc.rel_wealth.mean() * inv13,
            growth_reduction: crra.then(|| pacc.growth.mean() * s23),
            band_halfwidth_t0: pacc.hw0.mean() * s13,
            band_fraction_t0: crra.then(|| pacc.dpi0.mean() * s13),
        };
        out.push(summarize(&engine, eta, a, predicted, warnings.clone(), if j == 0 {
            std::mem::take(&mut trace)
        } else {
            Vec::new()
        })?);
    }
    Ok(out)
}

fn summarize(
    engine: &Engine,
    eta: f64,
    a: &Accum,
    predicted: Prediction,
    warnings: Vec<String>,
    trace: Vec<TraceRow>,
) -> Result<FrictionSimResult> {
    let fm = &engine.fm;
    let x0 = engine.run.x0;
    let n_used = a.du_spread.n;
    if n_used == 0 {
        return Err(Error::Numerical(format!("every path failed at eta = {eta}")));
    }
    let ce_eps = fm.certainty_equivalent(a.du_spread.mean())?;
    let ce_mid = fm.certainty_equivalent(a.du_mid.mean())?;
    let slope_eps = fm.marginal_indirect_utility(ce_eps)?;
    let slope_mid = fm.marginal_indirect_utility(ce_mid)?;
    let est = |value: f64, stderr: f64| Estimate { value, stderr };

    let sharpe = |m: &ShapeMoments| {
        let (sr, se) = m.sharpe(x0);
        est(sr, se)
    };
    let growth = fm.crra_gamma().map(|_| GrowthMeasurement {
        frictionless_rate: Estimate::from(&a.g0),
        frictional_rate: Estimate::from(&a.g_eps),
        reduction: Estimate::from(&a.g_gap),
        predicted_reduction: predicted.growth_reduction.unwrap_or(0.0),
        theoretical_frictionless_rate: (fm.pref.is_log()
            && fm.model.kind == ModelKind::BlackScholes
            && !fm.pref.consumes())
        .then(|| fm.model.mu * fm.model.mu / (2.0 * fm.model.sigma * fm.model.sigma)),
    });
    Ok(FrictionSimResult {
        eta,
        n_paths: a.du_spread.n + a.n_bankrupt,
        n_bankrupt: a.n_bankrupt,
        realized_utility: Estimate::from(&a.u_eps),
        frictionless_utility: Estimate::from(&a.u0),
        realized_ce_loss: est(x0 - ce_eps, a.du_spread.stderr() / slope_eps),
        loss_direct_cost: est(ce_mid - ce_eps, a.du_gap.stderr() / slope_eps),
        loss_displacement: est(x0 - ce_mid, a.du_mid.stderr() / slope_mid),
        realized_turnover: RealizedTurnover {
            cum_purchases: Estimate::from(&a.purchases),
            cum_sales: Estimate::from(&a.sales),
            absolute_share_turnover: Estimate::from(&a.absolute),
            relative_share_turnover: Estimate::from(&a.rel_share),
            relative_wealth_turnover: Estimate::from(&a.rel_wealth),
        },
        mean_cost: a.cost.mean(),
        shadow: ShadowDiagnostics {
            containment_violations: a.containment,
            boundary_touch_error: a.touch,
            trade_points: a.trades,
            not_applicable_points: a.na,
        },
        confinement_violations: a.confinement,
        max_accounting_residual: a.accounting,
        max_consumption_residual: a.consumption,
        terminal: TerminalStats {
            mean_frictional: a.x_eps.mean(),
            sd_frictional: a.x_eps.std_dev(),
            mean_frictionless: a.x0.mean(),
            sd_frictionless: a.x0.std_dev(),
            sharpe_frictional: sharpe(&a.x_eps),
            sharpe_frictionless: sharpe(&a.x0),
        },
        growth,
        predicted,
        warnings,
        trace,
    })
}

/// Flags grids too coarse for the band: the per-step standard deviation of the target
/// weight should stay below a fifth of the half-width.
fn grid_warnings(run: &FrictionalRun, fm: &FrictionlessModel, etas: &[f64]) -> Vec<String> {
    let Some(gamma) = fm.crra_gamma() else {
        return Vec::new();
    };
    let eta = etas.iter().cloned().filter(|e| *e > 0.0).fold(f64::INFINITY, f64::min);
    if !eta.is_finite() {
        return Vec::new();
    }
    let m = &run.model;
    let pi = m.mu / (gamma * m.sigma * m.sigma);
    let (cov, var) = fm.weight_variation_ratios(gamma);
    let b = crra_bracket(pi, cov, var);
    let dpi = fraction_halfwidth(eta, gamma, b);
    let step_sd = m.sigma * (b * run.grid.dt()).sqrt();
    if dpi > 0.0 && step_sd > dpi / 5.0 {
        vec![format!(
            "grid too coarse for eta = {eta}: per-step weight move {step_sd:.3e} exceeds a fifth of the half-width {dpi:.3e}"
        )]
    } else {
        Vec::new()
    }
}

/// Runs the simulation on a precomputed path bundle (small problems and tests).
pub fn run_frictional_on(
    model: MarketModel,
    pref: Preferences,
    spread: SpreadModel,
    paths: &PathBundle,
    x0: f64,
    options: SimOptions,
) -> Result<FrictionSimResult> {
    // Regenerating from the bundle's grid reproduces the same paths only when the
    // bundle came from the same generator; run directly on the given paths instead.
    options.validate()?;
    let horizon = paths.horizon();
    let n_steps = paths.times.len() - 1;
    let grid = PathGrid::new(horizon, n_steps, paths.paths.len(), 0);
    let run = FrictionalRun {
        model,
        pref,
        spread,
        grid,
        x0,
        options,
    };
    let fm = FrictionlessModel::new(model, pref, x0, horizon)?;
    let gen = PathGenerator::new(model, spread, grid)?;
    let etas = [spread.eta0];
    let engine = Engine {
        run: &run,
        fm,
        gen,
        etas: &etas,
        eta_max: spread.eta0,
        marginal_u0: fm.marginal_indirect_utility(x0)?,
    };
    let crra = fm.crra_gamma().is_some();
    let items: Vec<_> = paths
        .paths
        .par_iter()
        .map(|p| {
            let sol = fm.solve_path(p);
            let pred = engine.predict(p, &sol);
            let u0 = fm.realized_utility(&sol.consumption_rate, sol.wealth[p.n_steps()]).unwrap_or(f64::NAN);
            let mut tr = Vec::new();
            let t = (p.path_id < options.trace_paths).then_some(&mut tr);
            let rec = engine.run_path(p, &sol, if spread.eta0 > 0.0 { 1.0 } else { 0.0 }, u0, t);
            (rec, pred, tr)
        })
        .collect();
    let mut a = Accum::default();
    let mut pacc = PredAccum::default();
    let mut trace = Vec::new();
    for (r, pred, tr) in items {
        a.push(&r, horizon, crra);
        pacc.loss_q.push(pred.loss_q, pred.z_t);
        pacc.loss_frac.push(pred.loss_frac, pred.phat_w);
        pacc.turnover.push(pred.turnover);
        pacc.rel_share.push(pred.rel_share);
        pacc.rel_wealth.push(pred.rel_wealth);
        pacc.growth.push(pred.growth);
        pacc.hw0.push(pred.hw0);
        pacc.dpi0.push(pred.dpi0);
        trace.extend(tr);
    }
    let predicted = Prediction {
        ce_loss: pacc.loss_q.mean(),
        ce_loss_fraction: crra.then(|| pacc.loss_frac.mean()),
        absolute_share_turnover: pacc.turnover.mean(),
        relative_share_turnover: pacc.rel_share.mean(),
        relative_wealth_turnover: pacc.rel_wealth.mean(),
        growth_reduction: crra.then(|| pacc.growth.mean()),
        band_halfwidth_t0: pacc.hw0.mean(),
        band_fraction_t0: crra.then(|| pacc.dpi0.mean()),
    };
    summarize(&engine, spread.eta0, &a, predicted, grid_warnings(&run, &fm, &etas), trace)
}

/// Realized direct-cost and displacement losses of a completed run.
pub fn loss_decomposition(result: &FrictionSimResult) -> (Estimate, Estimate) {
    (result.loss_direct_cost, result.loss_displacement)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatioRow {
    pub quantity: String,
    pub realized: f64,
    pub realized_stderr: f64,
    pub forecast: f64,
    pub ratio: f64,
    pub ratio_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnoverComparison {
    pub rows: Vec<RatioRow>,
    pub purchases_sales_ratio: f64,
    pub purchases_sales_ratio_stderr: f64,
}

/// Realized turnover against its forecast, plus the purchases/sales symmetry ratio.
pub fn realized_turnover_stats(
    result: &FrictionSimResult,
    forecast: &crate::asymptotics::TurnoverForecast,
) -> TurnoverComparison {
    let t = &result.realized_turnover;
    let row = |name: &str, r: Estimate, f: f64| RatioRow {
        quantity: name.to_string(),
        realized: r.value,
        realized_stderr: r.stderr,
        forecast: f,
        ratio: r.value / f,
        ratio_stderr: r.stderr / f.abs(),
    };
    let p = t.cum_purchases;
    let s = t.cum_sales;
    let ratio = p.value / s.value;
    TurnoverComparison {
        rows: vec![
            row("absolute_share_turnover", t.absolute_share_turnover, forecast.absolute_share_turnover),
            row("relative_share_turnover", t.relative_share_turnover, forecast.relative_share_turnover),
            row("relative_wealth_turnover", t.relative_wealth_turnover, forecast.relative_wealth_turnover),
        ],
        purchases_sales_ratio: ratio,
        purchases_sales_ratio_stderr: ratio * ((p.stderr / p.value).powi(2) + (s.stderr / s.value).powi(2)).sqrt(),
    }
}

/// Realized long-run growth rates for log utility without consumption.
pub fn growth_rate_measurement(
    model: MarketModel,
    spread: SpreadModel,
    grid: PathGrid,
    options: SimOptions,
) -> Result<GrowthMeasurement> {
    let run = FrictionalRun {
        model,
        pref: Preferences::log(),
        spread,
        grid,
        x0: 1.0,
        options,
    };
    let res = run_frictional(&run)?;
    res.growth
        .ok_or_else(|| Error::Numerical("growth measurement unavailable".into()))
}
