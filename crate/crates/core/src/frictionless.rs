//! Closed-form frictionless optimizers and the indirect risk-tolerance process.
//!
//! Supported (model, preference) pairs:
//!
//! | model              | preferences                                   |
//! |--------------------|-----------------------------------------------|
//! | Black-Scholes      | power, log, exponential, truncated quadratic  |
//! | mean-reverting     | log                                           |
//!
//! Wealth is the grid-discretized self-financing process
//! `X_{k+1} = X_k + phi_k (S_{k+1} - S_k) - kappa_k dt`, so that the frictionless
//! benchmark and the frictional simulator share one discretization.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketModel, ModelKind, PathBundle, SamplePath};
use crate::preferences::{Family, Preferences, UtilityKind};

/// Per-path frictionless quantities on the grid (`n_steps + 1` entries each).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSolution {
    pub risky_weight: Vec<f64>,
    pub shares: Vec<f64>,
    pub consumption_rate: Vec<f64>,
    pub consumption_wealth_ratio: Vec<f64>,
    pub wealth: Vec<f64>,
    pub indirect_risk_tolerance: Vec<f64>,
    /// `kappa'_t = r_t / R_t`.
    pub sens_consumption: Vec<f64>,
    /// `phi'_t = c^{RS}_t / (R_t c^S_t)`.
    pub sens_investment: Vec<f64>,
    /// Density process `Z_t / Z_0` of the marginal pricing measure.
    pub q_density: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrictionlessSolution {
    pub times: Vec<f64>,
    pub paths: Vec<PathSolution>,
}

impl FrictionlessSolution {
    /// Debug dump with columns `path_id,t,pi,X,R,Z`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "path_id,t,pi,X,R,Z")?;
        for (i, p) in self.paths.iter().enumerate() {
            for (k, t) in self.times.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    i, t, p.risky_weight[k], p.wealth[k], p.indirect_risk_tolerance[k], p.q_density[k]
                )?;
            }
        }
        Ok(())
    }
}

/// Itô coefficients at one grid point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalDynamics {
    /// `c^S = d<S>/dt`.
    pub c_s: f64,
    /// Portfolio gamma `d<phi>/d<S>`.
    pub portfolio_gamma: f64,
    /// Loading of `R` on the price Brownian motion.
    pub r_vol: f64,
    /// Drift of `R` under the marginal pricing measure.
    pub r_drift_q: f64,
    /// Direct risk tolerance `r_t` of consumption.
    pub r_direct: f64,
}

impl LocalDynamics {
    pub fn c_r(&self) -> f64 {
        self.r_vol * self.r_vol
    }

    pub fn c_rs(&self) -> f64 {
        self.r_vol * self.c_s.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandInputs {
    pub midpoint: f64,
    pub risk_tolerance: f64,
    pub portfolio_gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Closed {
    /// Constant relative risk aversion. `a` is the exponent of the no-consumption value
    /// function `g(tau) = exp(a tau)` (zero for log utility).
    Crra { gamma: f64, a: f64 },
    /// Constant absolute risk aversion; `b` pins the Lagrange multiplier to `x0`.
    Cara { p1: f64, p2: f64, a_minus_b: f64, b: f64 },
    /// Quadratic utility below the bliss point.
    Quadratic,
}

/// Frictionless problem for one (model, preferences, initial capital, horizon).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrictionlessModel {
    pub model: MarketModel,
    pub pref: Preferences,
    pub x0: f64,
    pub horizon: f64,
    closed: Closed,
}

impl FrictionlessModel {
    pub fn new(model: MarketModel, pref: Preferences, x0: f64, horizon: f64) -> Result<Self> {
        model.validate()?;
        pref.validate()?;
        if !(horizon > 0.0) {
            return Err(Error::param("horizon", "must be > 0"));
        }
        let lambda2 = (model.mu / model.sigma).powi(2);
        let closed = match (model.kind, pref.family) {
            (ModelKind::BlackScholes, Family::Power { .. } | Family::Log)
            | (ModelKind::MeanRevertingDrift, Family::Log) => {
                let gamma = pref.crra_gamma().unwrap();
                if !(x0 > 0.0) {
                    return Err(Error::param("x0", "initial capital must be > 0 for power/log utility"));
                }
                let a = if model.kind == ModelKind::BlackScholes {
                    (1.0 - gamma) * lambda2 / (2.0 * gamma * gamma)
                } else {
                    0.0
                };
                Closed::Crra { gamma, a }
            }
            (ModelKind::MeanRevertingDrift, Family::Power { gamma }) if gamma == 1.0 => {
                if !(x0 > 0.0) {
                    return Err(Error::param("x0", "initial capital must be > 0 for power/log utility"));
                }
                Closed::Crra { gamma: 1.0, a: 0.0 }
            }
            (ModelKind::BlackScholes, Family::Exponential { p1, p2 }) => {
                let t = horizon;
                let consumes = pref.consumes();
                let r0 = 1.0 / p2 + if consumes { t / p1 } else { 0.0 };
                let a_minus_b = if consumes { (pref.beta * p1 / p2).ln() } else { 0.0 };
                let cons_part = if consumes {
                    (a_minus_b * t + 0.5 * pref.delta * t * t - 0.25 * lambda2 * t * t) / p1
                } else {
                    0.0
                };
                let b = (x0 - cons_part + 0.5 * lambda2 * t / p2) / r0;
                Closed::Cara { p1, p2, a_minus_b, b }
            }
            (ModelKind::BlackScholes, Family::QuadraticTruncated) => {
                if !(x0 < 0.0) {
                    return Err(Error::param(
                        "x0",
                        "quadratic utility is solved below the bliss point; x0 must be < 0",
                    ));
                }
                Closed::Quadratic
            }
            (kind, _) => {
                return Err(Error::Unsupported(format!(
                    "{kind:?} with {} preferences has no closed-form solution",
                    pref.name()
                )))
            }
        };
        Ok(FrictionlessModel {
            model,
            pref,
            x0,
            horizon,
            closed,
        })
    }

    pub fn crra_gamma(&self) -> Option<f64> {
        match self.closed {
            Closed::Crra { gamma, .. } => Some(gamma),
            _ => None,
        }
    }

    /// Consumption/wealth ratio `c(tau)` for CRRA preferences.
    ///
    /// With `h(tau) = beta^(1/g) exp(delta tau / g)` and the value-function factor
    /// `g(tau) = exp(a tau) + beta^(1/g) exp(delta tau / g) tau exprel((a - delta/g) tau)`,
    /// the ratio is `h/g`. The `exprel` form covers the degenerate case
    /// `a = delta/g` (e.g. log utility without impatience), where `g = 1 + beta tau`.
    pub fn crra_consumption_ratio(&self, tau: f64) -> f64 {
        match self.closed {
            Closed::Crra { gamma, .. } if self.pref.consumes() => {
                let h = self.pref.beta.powf(1.0 / gamma) * (self.pref.delta * tau / gamma).exp();
                h / self.crra_value_factor(tau)
            }
            _ => 0.0,
        }
    }

    fn crra_value_factor(&self, tau: f64) -> f64 {
        match self.closed {
            Closed::Crra { gamma, a } => {
                if !self.pref.consumes() {
                    return (a * tau).exp();
                }
                let d = self.pref.delta / gamma;
                let b = a - d;
                let h = self.pref.beta.powf(1.0 / gamma) * (d * tau).exp();
                (a * tau).exp() + h * tau * exprel(b * tau)
            }
            _ => f64::NAN,
        }
    }

    fn lambda(&self, factor: f64) -> f64 {
        factor / self.model.sigma
    }

    /// Frictionless solution on one path.
    pub fn solve_path(&self, path: &SamplePath) -> PathSolution {
        let n = path.n_steps();
        let dt = self.horizon / n as f64;
        let m = &self.model;
        let var = m.sigma * m.sigma;
        let mut sol = PathSolution {
            risky_weight: Vec::with_capacity(n + 1),
            shares: Vec::with_capacity(n + 1),
            consumption_rate: Vec::with_capacity(n + 1),
            consumption_wealth_ratio: Vec::with_capacity(n + 1),
            wealth: Vec::with_capacity(n + 1),
            indirect_risk_tolerance: Vec::with_capacity(n + 1),
            sens_consumption: Vec::with_capacity(n + 1),
            sens_investment: Vec::with_capacity(n + 1),
            q_density: Vec::with_capacity(n + 1),
        };
        let mut x = self.x0;
        let mut log_z = 0.0f64;
        for k in 0..=n {
            let tau = if k == n { 0.0 } else { self.horizon - k as f64 * dt };
            let s = path.mid_price[k];
            let f = path.factor[k];
            let (pi, phi, kappa, risk_tol, k_sens, p_sens) = match self.closed {
                Closed::Crra { gamma, .. } => {
                    let pi = f / (gamma * var);
                    let c = self.crra_consumption_ratio(tau);
                    (pi, pi * x / s, c * x, x / gamma, c, pi / s)
                }
                Closed::Cara { p1, p2, a_minus_b, b } => {
                    let consumes = self.pref.consumes();
                    let r = 1.0 / p2 + if consumes { tau / p1 } else { 0.0 };
                    let phi = r * f / (var * s);
                    let kappa = if consumes {
                        let lambda2 = (f / m.sigma).powi(2);
                        let a = a_minus_b + b;
                        let d = (a * tau + 0.5 * self.pref.delta * tau * tau - 0.25 * lambda2 * tau * tau) / p1
                            + (b - 0.5 * lambda2 * tau) / p2;
                        (a + self.pref.delta * tau) / p1 + (x - d) / (p1 * r)
                    } else {
                        0.0
                    };
                    let k_sens = if consumes { 1.0 / (p1 * r) } else { 0.0 };
                    (phi * s / x, phi, kappa, r, k_sens, 0.0)
                }
                Closed::Quadratic => {
                    let r = -x;
                    let phi = (f / var) * r / s;
                    (phi * s / x, phi, 0.0, r, 0.0, phi / x)
                }
            };
            sol.risky_weight.push(pi);
            sol.shares.push(phi);
            sol.consumption_rate.push(kappa);
            sol.consumption_wealth_ratio.push(kappa / x);
            sol.wealth.push(x);
            sol.indirect_risk_tolerance.push(risk_tol);
            sol.sens_consumption.push(k_sens);
            sol.sens_investment.push(p_sens);
            sol.q_density.push(log_z.exp());
            if k < n {
                let ds = path.mid_price[k + 1] - s;
                x += phi * ds - kappa * dt;
                let lam = self.lambda(f);
                log_z += -lam * path.brownian_increments[k] - 0.5 * lam * lam * dt;
            }
        }
        sol
    }

    /// Itô coefficients at grid point `k`, from the model's closed-form diffusion terms.
    pub fn local_dynamics(&self, path: &SamplePath, sol: &PathSolution, k: usize) -> LocalDynamics {
        let m = &self.model;
        let var = m.sigma * m.sigma;
        let s = path.mid_price[k];
        let f = path.factor[k];
        let x = sol.wealth[k];
        let phi = sol.shares[k];
        let kappa = sol.consumption_rate[k];
        let c_s = var * s * s;
        let lam = self.lambda(f);
        match self.closed {
            Closed::Crra { gamma, .. } => {
                let pi = sol.risky_weight[k];
                // phi = pi X / S; price and factor loadings of d(phi).
                let scale = x / (s * s);
                let (cov, v) = self.weight_variation_ratios(gamma);
                let bracket = crra_bracket(pi, cov, v);
                let r_vol = phi * m.sigma * s / gamma;
                let r_drift_p = (phi * f * s - kappa) / gamma;
                LocalDynamics {
                    c_s,
                    portfolio_gamma: scale * scale * bracket,
                    r_vol,
                    r_drift_q: r_drift_p - r_vol * lam,
                    r_direct: kappa / gamma,
                }
            }
            Closed::Cara { p1, .. } => {
                let consumes = self.pref.consumes();
                LocalDynamics {
                    c_s,
                    portfolio_gamma: (phi / s).powi(2),
                    r_vol: 0.0,
                    r_drift_q: if consumes { -1.0 / p1 } else { 0.0 },
                    r_direct: if consumes { 1.0 / p1 } else { 0.0 },
                }
            }
            Closed::Quadratic => {
                let ratio = f / var;
                let r = sol.indirect_risk_tolerance[k];
                let r_vol = -phi * m.sigma * s;
                LocalDynamics {
                    c_s,
                    portfolio_gamma: (ratio * (1.0 + ratio) * r / (s * s)).powi(2),
                    r_vol,
                    r_drift_q: -phi * f * s - r_vol * lam,
                    r_direct: 0.0,
                }
            }
        }
    }

    /// Band inputs at grid point `k` when the frictional account holds `x_eps`:
    /// the shifted target `phi + phi'(x_eps - X)` and the risk tolerance and
    /// portfolio gamma of an investor at that wealth. With `x_eps = X` these are the
    /// frictionless values.
    pub fn band_inputs(&self, path: &SamplePath, sol: &PathSolution, k: usize, x_eps: f64) -> BandInputs {
        let var = self.model.sigma * self.model.sigma;
        let s = path.mid_price[k];
        let f = path.factor[k];
        match self.closed {
            Closed::Crra { gamma, .. } => {
                let pi = sol.risky_weight[k];
                let (cov, v) = self.weight_variation_ratios(gamma);
                let scale = x_eps / (s * s);
                BandInputs {
                    midpoint: pi * x_eps / s,
                    risk_tolerance: x_eps / gamma,
                    portfolio_gamma: scale * scale * crra_bracket(pi, cov, v),
                }
            }
            Closed::Cara { .. } => {
                let phi = sol.shares[k];
                BandInputs {
                    midpoint: phi,
                    risk_tolerance: sol.indirect_risk_tolerance[k],
                    portfolio_gamma: (phi / s).powi(2),
                }
            }
            Closed::Quadratic => {
                let ratio = f / var;
                let r = -x_eps;
                BandInputs {
                    midpoint: ratio * r / s,
                    risk_tolerance: r,
                    portfolio_gamma: (ratio * (1.0 + ratio) * r / (s * s)).powi(2),
                }
            }
        }
    }

    /// `d<phi>/d<S>` at grid point `k`.
    pub fn portfolio_gamma(&self, path: &SamplePath, sol: &PathSolution, k: usize) -> f64 {
        self.local_dynamics(path, sol, k).portfolio_gamma
    }

    /// Bracket `pi^2(1-pi)^2 - 2 pi(1-pi) d<pi,Y>/d<Y> + d<pi>/d<Y>` of the CRRA band.
    pub fn crra_bracket_at(&self, pi: f64) -> Result<f64> {
        let gamma = self
            .crra_gamma()
            .ok_or_else(|| Error::Unsupported("fraction band requires power/log preferences".into()))?;
        let (cov, var) = self.weight_variation_ratios(gamma);
        Ok(crra_bracket(pi, cov, var))
    }

    /// `(d<pi,Y>/d<Y>, d<pi>/d<Y>)` for the CRRA target weight `pi = m / (gamma sigma^2)`.
    pub fn weight_variation_ratios(&self, gamma: f64) -> (f64, f64) {
        let m = &self.model;
        let var = m.sigma * m.sigma;
        let scale = 1.0 / (gamma * var);
        let cov = scale * m.factor_return_covariance() / var;
        let v = scale * scale * m.factor_variance() / var;
        (cov, v)
    }

    /// Frictionless indirect utility at time zero.
    ///
    /// For log utility the value is returned up to an additive constant (the
    /// certainty-equivalent inversion never needs it).
    pub fn indirect_utility(&self, x: f64) -> Result<f64> {
        let lambda2 = (self.model.mu / self.model.sigma).powi(2);
        match self.closed {
            Closed::Crra { gamma, .. } => {
                if !(x > 0.0) {
                    return Err(Error::Domain(format!("wealth must be > 0, got {x}")));
                }
                let g = self.crra_value_factor(self.horizon);
                if gamma == 1.0 {
                    Ok(g * x.ln())
                } else {
                    Ok(g.powf(gamma) * x.powf(1.0 - gamma) / (1.0 - gamma))
                }
            }
            Closed::Cara { p2, b, .. } => {
                let r0 = self.indirect_risk_tolerance_at_zero();
                let bx = b + (x - self.x0) / r0;
                Ok(-p2 * r0 * (-bx).exp())
            }
            Closed::Quadratic => {
                if !(x < 0.0) {
                    return Err(Error::Domain(format!("quadratic value needs x < 0, got {x}")));
                }
                Ok(-x * x * (-lambda2 * self.horizon).exp())
            }
        }
    }

    /// `U'(x)` at time zero.
    pub fn marginal_indirect_utility(&self, x: f64) -> Result<f64> {
        let lambda2 = (self.model.mu / self.model.sigma).powi(2);
        match self.closed {
            Closed::Crra { gamma, .. } => {
                if !(x > 0.0) {
                    return Err(Error::Domain(format!("wealth must be > 0, got {x}")));
                }
                let g = self.crra_value_factor(self.horizon);
                Ok(g.powf(gamma) * x.powf(-gamma))
            }
            Closed::Cara { p2, b, .. } => {
                let r0 = self.indirect_risk_tolerance_at_zero();
                Ok(p2 * (-(b + (x - self.x0) / r0)).exp())
            }
            Closed::Quadratic => Ok(-2.0 * x * (-lambda2 * self.horizon).exp()),
        }
    }

    pub fn indirect_risk_tolerance_at_zero(&self) -> f64 {
        match self.closed {
            Closed::Crra { gamma, .. } => self.x0 / gamma,
            Closed::Cara { p1, p2, .. } => {
                1.0 / p2 + if self.pref.consumes() { self.horizon / p1 } else { 0.0 }
            }
            Closed::Quadratic => -self.x0,
        }
    }

    /// Wealth `x` with `U(x) = U(x0) + delta_u`. Bisection to 1e-12 relative on the
    /// closed-form indirect utility; analytic for log utility.
    pub fn certainty_equivalent(&self, delta_u: f64) -> Result<f64> {
        if let Closed::Crra { gamma, .. } = self.closed {
            if gamma == 1.0 {
                let g = self.crra_value_factor(self.horizon);
                return Ok(self.x0 * (delta_u / g).exp());
            }
        }
        let target = self.indirect_utility(self.x0)? + delta_u;
        let f = |x: f64| self.indirect_utility(x).map(|u| u - target);
        let scale = self.x0.abs().max(1e-300);
        let (mut lo, mut hi) = match self.closed {
            Closed::Crra { .. } => (self.x0 * 0.5, self.x0 * 2.0),
            Closed::Quadratic => (self.x0 * 2.0, self.x0 * 0.5),
            Closed::Cara { .. } => (self.x0 - scale, self.x0 + scale),
        };
        for _ in 0..200 {
            if f(lo)? <= 0.0 {
                break;
            }
            lo = match self.closed {
                Closed::Crra { .. } => lo * 0.5,
                Closed::Quadratic => lo * 2.0,
                Closed::Cara { .. } => lo - (hi - lo),
            };
        }
        for _ in 0..200 {
            if f(hi)? >= 0.0 {
                break;
            }
            hi = match self.closed {
                Closed::Crra { .. } => hi * 2.0,
                Closed::Quadratic => hi * 0.5,
                Closed::Cara { .. } => hi + (hi - lo),
            };
        }
        if f(lo)? > 0.0 || f(hi)? < 0.0 {
            return Err(Error::Numerical("could not bracket certainty equivalent".into()));
        }
        for _ in 0..400 {
            let mid = 0.5 * (lo + hi);
            if (hi - lo).abs() <= 1e-12 * mid.abs().max(1e-300) {
                break;
            }
            if f(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Realized utility `sum u_1(t_k, kappa_k) dt + u_2(X_T)` along a consumption and
    /// wealth record (left-point rule, matching the wealth recursion).
    pub fn realized_utility(&self, consumption: &[f64], terminal_wealth: f64) -> Result<f64> {
        let n = consumption.len() - 1;
        let dt = self.horizon / n as f64;
        let mut total = 0.0;
        if self.pref.consumes() {
            for (k, &kappa) in consumption[..n].iter().enumerate() {
                let tau = self.horizon - k as f64 * dt;
                total += self.pref.utility(UtilityKind::Consumption, tau, kappa)? * dt;
            }
        }
        Ok(total + self.pref.utility(UtilityKind::Terminal, 0.0, terminal_wealth)?)
    }
}

/// `(e^z - 1)/z`, equal to 1 at `z = 0`.
pub fn exprel(z: f64) -> f64 {
    if z.abs() < 1e-12 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// `pi^2 (1-pi)^2 - 2 pi (1-pi) cov + var`.
pub fn crra_bracket(pi: f64, cov_ratio: f64, var_ratio: f64) -> f64 {
    let a = pi * (1.0 - pi);
    a * a - 2.0 * a * cov_ratio + var_ratio
}

/// Solves every path of a bundle.
pub fn solve_frictionless(
    model: MarketModel,
    pref: Preferences,
    paths: &PathBundle,
    x0: f64,
) -> Result<FrictionlessSolution> {
    let fm = FrictionlessModel::new(model, pref, x0, paths.horizon())?;
    let sols = paths.paths.par_iter().map(|p| fm.solve_path(p)).collect();
    Ok(FrictionlessSolution {
        times: paths.times.clone(),
        paths: sols,
    })
}

/// Summary of the risk-tolerance BSDE check.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BsdeResidual {
    /// Largest `|b^{R,Q} - [(c^R - (c^{RS})^2/c^S)/R - r]|` over all grid points.
    pub max_residual: f64,
    pub mean_abs_residual: f64,
    /// Largest `|R_T + u_2'(X_T)/u_2''(X_T)|`.
    pub terminal_error: f64,
    /// Monte Carlo estimate of `E^Q[R_T - R_0 + int r dt]` (zero for a Q-drift of `-r`).
    pub q_drift_mc: f64,
    pub q_drift_mc_stderr: f64,
}

pub fn bsde_residual(fm: &FrictionlessModel, paths: &PathBundle, sol: &FrictionlessSolution) -> Result<BsdeResidual> {
    let dt = paths.dt();
    let mut max_res: f64 = 0.0;
    let mut sum_res = 0.0;
    let mut count = 0usize;
    let mut term: f64 = 0.0;
    let mut drift = Vec::with_capacity(paths.paths.len());
    for (p, s) in paths.paths.iter().zip(&sol.paths) {
        let n = p.n_steps();
        let mut r_int = 0.0;
        for k in 0..=n {
            let loc = fm.local_dynamics(p, s, k);
            let r = s.indirect_risk_tolerance[k];
            let rhs = (loc.c_r() - loc.c_rs().powi(2) / loc.c_s) / r - loc.r_direct;
            let res = (loc.r_drift_q - rhs).abs();
            max_res = max_res.max(res);
            sum_res += res;
            count += 1;
            if k < n {
                r_int += loc.r_direct * dt;
            }
        }
        let x_t = s.wealth[n];
        let u1 = fm.pref.marginal_utility(UtilityKind::Terminal, 0.0, x_t)?;
        let u2 = fm.pref.utility_curvature(UtilityKind::Terminal, 0.0, x_t)?;
        term = term.max((s.indirect_risk_tolerance[n] + u1 / u2).abs());
        let q = s.q_density[n];
        drift.push(q * (s.indirect_risk_tolerance[n] - s.indirect_risk_tolerance[0] + r_int));
    }
    let (mean, se) = crate::stats::mean_stderr(&drift);
    Ok(BsdeResidual {
        max_residual: max_res,
        mean_abs_residual: sum_res / count as f64,
        terminal_error: term,
        q_drift_mc: mean,
        q_drift_mc_stderr: se,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{simulate_paths, PathGrid, SpreadModel};

    fn bundle(model: MarketModel, n_steps: usize, n_paths: usize) -> PathBundle {
        simulate_paths(model, SpreadModel::proportional(0.0), PathGrid::new(1.0, n_steps, n_paths, 7)).unwrap()
    }

    #[test]
    fn merton_weight() {
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let b = bundle(model, 50, 3);
        let sol = solve_frictionless(model, Preferences::power(5.0), &b, 1.0).unwrap();
        for p in &sol.paths {
            assert!(p.risky_weight.iter().all(|&w| (w - 0.4).abs() < 1e-15));
        }
    }

    #[test]
    fn zero_excess_return_holds_no_shares() {
        let model = MarketModel::black_scholes(0.0, 0.2, 1.0);
        let b = bundle(model, 50, 3);
        let pref = Preferences::power(3.0).with_consumption(0.5, 0.0);
        let fm = FrictionlessModel::new(model, pref, 1.0, 1.0).unwrap();
        for p in &b.paths {
            let s = fm.solve_path(p);
            assert!(s.shares.iter().all(|&x| x == 0.0));
            // X_t = x0 - int kappa
            let dt = 1.0 / 50.0;
            let mut x = 1.0;
            for k in 0..50 {
                assert!((s.wealth[k] - x).abs() < 1e-14);
                x -= s.consumption_rate[k] * dt;
            }
        }
    }

    #[test]
    fn exponential_risk_tolerance() {
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let pref = Preferences::exponential(2.0, 2.0).with_consumption(1.0, 0.0);
        let b = bundle(model, 10, 2);
        let sol = solve_frictionless(model, pref, &b, 1.0).unwrap();
        assert!((sol.paths[0].indirect_risk_tolerance[0] - 1.0).abs() < 1e-15);
        assert!((sol.paths[0].indirect_risk_tolerance[10] - 0.5).abs() < 1e-15);
        assert!(sol.paths[0].sens_investment.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn crra_identities() {
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let pref = Preferences::power(3.0).with_consumption(0.5, 0.1);
        let b = bundle(model, 100, 4);
        let fm = FrictionlessModel::new(model, pref, 2.0, 1.0).unwrap();
        for p in &b.paths {
            let s = fm.solve_path(p);
            for k in 0..=100 {
                let x = s.wealth[k];
                assert!(x > 0.0);
                assert!((s.indirect_risk_tolerance[k] - x / 3.0).abs() < 1e-14);
                assert!((s.sens_investment[k] - s.shares[k] / x).abs() < 1e-14);
                assert!((s.sens_consumption[k] - s.consumption_rate[k] / x).abs() < 1e-14);
                // phi' = c^{RS}/(R c^S) from the local dynamics.
                let loc = fm.local_dynamics(p, &s, k);
                let from_dyn = loc.c_rs() / (s.indirect_risk_tolerance[k] * loc.c_s);
                assert!((from_dyn - s.sens_investment[k]).abs() < 1e-12 * s.sens_investment[k].abs());
                // kappa' = r/R
                let r = pref.direct_risk_tolerance(s.consumption_rate[k]).unwrap();
                assert!((r / s.indirect_risk_tolerance[k] - s.sens_consumption[k]).abs() < 1e-12);
            }
            assert_eq!(s.q_density[0], 1.0);
        }
    }

    #[test]
    fn homothetic_in_initial_capital() {
        let model = MarketModel::black_scholes(0.06, 0.25, 1.0);
        let pref = Preferences::power(2.0).with_consumption(1.0, 0.05);
        let b = bundle(model, 60, 2);
        let a = FrictionlessModel::new(model, pref, 1.0, 1.0).unwrap().solve_path(&b.paths[1]);
        let c = FrictionlessModel::new(model, pref, 3.5, 1.0).unwrap().solve_path(&b.paths[1]);
        for k in 0..=60 {
            assert!((c.wealth[k] - 3.5 * a.wealth[k]).abs() < 1e-12);
            assert!((c.shares[k] - 3.5 * a.shares[k]).abs() < 1e-12);
            assert!((c.consumption_rate[k] - 3.5 * a.consumption_rate[k]).abs() < 1e-12);
            assert!((c.indirect_risk_tolerance[k] - 3.5 * a.indirect_risk_tolerance[k]).abs() < 1e-12);
            assert_eq!(c.risky_weight[k], a.risky_weight[k]);
            assert!((c.consumption_wealth_ratio[k] - a.consumption_wealth_ratio[k]).abs() < 1e-14);
        }
    }

    #[test]
    fn consumption_ratio_degenerate_limit() {
        // Log utility without impatience: c = beta / (1 + beta tau).
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let fm = FrictionlessModel::new(model, Preferences::log().with_consumption(2.0, 0.0), 1.0, 1.0).unwrap();
        for tau in [0.0, 0.3, 1.0] {
            assert!((fm.crra_consumption_ratio(tau) - 2.0 / (1.0 + 2.0 * tau)).abs() < 1e-14);
        }
        // Log with impatience: g = 1 + beta (e^{delta tau} - 1)/delta.
        let fm = FrictionlessModel::new(model, Preferences::log().with_consumption(2.0, 0.5), 1.0, 1.0).unwrap();
        let tau: f64 = 0.7;
        let g = 1.0 + 2.0 * ((0.5 * tau).exp() - 1.0) / 0.5;
        assert!((fm.crra_consumption_ratio(tau) - 2.0 * (0.5 * tau).exp() / g).abs() < 1e-14);
    }

    #[test]
    fn consumption_ratio_solves_value_ode() {
        // dg/dtau = a g + h, checked by central differences.
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let pref = Preferences::power(4.0).with_consumption(0.3, 0.2);
        let fm = FrictionlessModel::new(model, pref, 1.0, 2.0).unwrap();
        let gamma = 4.0;
        let a = (1.0 - gamma) * 0.16 / (2.0 * gamma * gamma);
        for tau in [0.1, 0.9, 1.7] {
            let h = 1e-6;
            let g = fm.crra_value_factor(tau);
            let dg = (fm.crra_value_factor(tau + h) - fm.crra_value_factor(tau - h)) / (2.0 * h);
            let hh = 0.3f64.powf(0.25) * (0.2 * tau / gamma).exp();
            assert!((dg - (a * g + hh)).abs() < 1e-8);
        }
    }

    #[test]
    fn unsupported_pairs() {
        let mr = MarketModel::mean_reverting(0.05, 0.2, 1.0, 0.1, 0.0, 1.0);
        assert!(matches!(
            FrictionlessModel::new(mr, Preferences::power(2.0), 1.0, 1.0),
            Err(Error::Unsupported(_))
        ));
        assert!(FrictionlessModel::new(mr, Preferences::log(), 1.0, 1.0).is_ok());
        let bs = MarketModel::black_scholes(0.05, 0.2, 1.0);
        assert!(FrictionlessModel::new(bs, Preferences::power(2.0), 0.0, 1.0).is_err());
        assert!(FrictionlessModel::new(bs, Preferences::quadratic(), 1.0, 1.0).is_err());
    }

    #[test]
    fn certainty_equivalent_round_trip() {
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        for (pref, x0) in [
            (Preferences::power(5.0), 1.0),
            (Preferences::power(0.5).with_consumption(1.0, 0.1), 2.0),
            (Preferences::exponential(2.0, 3.0).with_consumption(1.0, 0.1), 0.5),
            (Preferences::quadratic(), -1.0),
            (Preferences::log(), 1.0),
        ] {
            let fm = FrictionlessModel::new(model, pref, x0, 1.0).unwrap();
            let x = x0 * 0.97;
            let du = fm.indirect_utility(x).unwrap() - fm.indirect_utility(x0).unwrap();
            let back = fm.certainty_equivalent(du).unwrap();
            assert!(((back - x) / x).abs() < 1e-11, "{} {back} vs {x}", pref.name());
        }
    }

    #[test]
    fn marginal_indirect_utility_matches_differences() {
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        for (pref, x0) in [
            (Preferences::power(5.0), 1.0),
            (Preferences::power(0.5).with_consumption(1.0, 0.1), 2.0),
            (Preferences::exponential(2.0, 3.0).with_consumption(1.0, 0.1), 0.5),
            (Preferences::quadratic(), -1.0),
            (Preferences::log().with_consumption(0.5, 0.0), 1.0),
        ] {
            let fm = FrictionlessModel::new(model, pref, x0, 1.0).unwrap();
            let h = 1e-5 * x0.abs();
            let fd = (fm.indirect_utility(x0 + h).unwrap() - fm.indirect_utility(x0 - h).unwrap()) / (2.0 * h);
            let an = fm.marginal_indirect_utility(x0).unwrap();
            assert!((fd / an - 1.0).abs() < 1e-8, "{}", pref.name());
            // Indirect risk tolerance -U'/U'' at time zero.
            let d2 = (fm.marginal_indirect_utility(x0 + h).unwrap() - fm.marginal_indirect_utility(x0 - h).unwrap()) / (2.0 * h);
            let r = -an / d2;
            assert!((r / fm.indirect_risk_tolerance_at_zero() - 1.0).abs() < 1e-7, "{}", pref.name());
        }
    }

    #[test]
    fn exponential_budget_constraint() {
        // X_0 reproduced from the feedback consumption rule on a zero-noise path.
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let pref = Preferences::exponential(1.5, 2.5).with_consumption(0.8, 0.1);
        let fm = FrictionlessModel::new(model, pref, 0.7, 1.0).unwrap();
        let b = bundle(model, 10, 1);
        let s = fm.solve_path(&b.paths[0]);
        assert_eq!(s.wealth[0], 0.7);
        // kappa' = 1/(T - t + p1/p2)
        assert!((s.sens_consumption[0] - 1.0 / (1.0 + 1.5 / 2.5)).abs() < 1e-14);
    }
}
