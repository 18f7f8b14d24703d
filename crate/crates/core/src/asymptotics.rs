//! Leading-order formulas for small spreads: no-trade band, certainty-equivalent loss,
//! turnover, mean-variance corrections and long-run growth.
//!
//! Expectations under the marginal pricing measure `Q` (and the CRRA measure `P-hat`)
//! are self-normalized density-weighted averages over the physical paths, so one path
//! set serves every report.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frictionless::{crra_bracket, FrictionlessModel, FrictionlessSolution};
use crate::market::{MarketModel, ModelKind, PathBundle};
use crate::preferences::Preferences;
use crate::stats::{mean_stderr, trapezoid, weighted_mean_stderr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parametrization {
    Shares,
    Fraction,
}

impl Parametrization {
    fn name(self) -> &'static str {
        match self {
            Parametrization::Shares => "shares",
            Parametrization::Fraction => "fraction",
        }
    }
}

/// Band centre and half-width per (path, time).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoTradeBand {
    pub midpoint: Vec<Vec<f64>>,
    pub halfwidth: Vec<Vec<f64>>,
    pub parametrization: Parametrization,
}

impl NoTradeBand {
    fn expect(&self, p: Parametrization) -> Result<()> {
        if self.parametrization != p {
            return Err(Error::Parametrization {
                expected: p.name(),
                got: self.parametrization.name(),
            });
        }
        Ok(())
    }
}

/// `(3/2 R g eps)^(1/3)` with `g = d<phi>/d<S>`.
pub fn shares_halfwidth(risk_tolerance: f64, portfolio_gamma: f64, eps: f64) -> f64 {
    (1.5 * risk_tolerance * portfolio_gamma * eps).max(0.0).cbrt()
}

/// `(3 eta / (2 gamma) B)^(1/3)` with `B` the CRRA bracket.
pub fn fraction_halfwidth(eta: f64, gamma: f64, bracket: f64) -> f64 {
    (1.5 * eta / gamma * bracket).max(0.0).cbrt()
}

/// Turnover rate `g c^S / (2 halfwidth)`; zero where the band is degenerate.
pub fn turnover_rate(portfolio_gamma: f64, c_s: f64, halfwidth: f64) -> f64 {
    if halfwidth == 0.0 || portfolio_gamma == 0.0 {
        0.0
    } else {
        portfolio_gamma * c_s / (2.0 * halfwidth)
    }
}

/// Closed form of [`turnover_rate`] after inserting the band:
/// `eps^(-1/3) (1/(12 R))^(1/3) g^(2/3) c^S`.
pub fn turnover_rate_closed(risk_tolerance: f64, portfolio_gamma: f64, eps: f64, c_s: f64) -> f64 {
    if portfolio_gamma == 0.0 || eps == 0.0 {
        return 0.0;
    }
    eps.powf(-1.0 / 3.0) * (1.0 / (12.0 * risk_tolerance)).cbrt() * portfolio_gamma.powf(2.0 / 3.0) * c_s
}

/// Band in shares. With `frictional_wealth` the centre is shifted by `phi'(X^eps - X)`
/// and the width uses the risk tolerance at `X^eps`.
pub fn no_trade_band(
    fm: &FrictionlessModel,
    sol: &FrictionlessSolution,
    paths: &PathBundle,
    frictional_wealth: Option<&[Vec<f64>]>,
) -> Result<NoTradeBand> {
    check_shapes(sol, paths)?;
    if let Some(w) = frictional_wealth {
        if w.len() != paths.paths.len() {
            return Err(Error::param("frictional_wealth", "one series per path required"));
        }
    }
    let (midpoint, halfwidth) = paths
        .paths
        .par_iter()
        .zip(&sol.paths)
        .enumerate()
        .map(|(i, (p, s))| {
            let n = p.n_steps();
            let mut mid = Vec::with_capacity(n + 1);
            let mut hw = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let x = frictional_wealth.map_or(s.wealth[k], |w| w[i][k]);
                let inp = fm.band_inputs(p, s, k, x);
                mid.push(inp.midpoint);
                hw.push(shares_halfwidth(inp.risk_tolerance, inp.portfolio_gamma, p.spread_halfwidth[k]));
            }
            (mid, hw)
        })
        .unzip();
    Ok(NoTradeBand {
        midpoint,
        halfwidth,
        parametrization: Parametrization::Shares,
    })
}

/// Band in risky-weight space for power/log preferences.
pub fn crra_band_fraction(fm: &FrictionlessModel, sol: &FrictionlessSolution, paths: &PathBundle) -> Result<NoTradeBand> {
    check_shapes(sol, paths)?;
    let gamma = fm
        .crra_gamma()
        .ok_or_else(|| Error::Unsupported(format!("fraction band needs power/log, got {}", fm.pref.name())))?;
    let (cov, var) = fm.weight_variation_ratios(gamma);
    let (midpoint, halfwidth) = paths
        .paths
        .par_iter()
        .zip(&sol.paths)
        .map(|(p, s)| {
            let hw = (0..=p.n_steps())
                .map(|k| fraction_halfwidth(p.relative_spread(k), gamma, crra_bracket(s.risky_weight[k], cov, var)))
                .collect();
            (s.risky_weight.clone(), hw)
        })
        .unzip();
    Ok(NoTradeBand {
        midpoint,
        halfwidth,
        parametrization: Parametrization::Fraction,
    })
}

fn check_shapes(sol: &FrictionlessSolution, paths: &PathBundle) -> Result<()> {
    if sol.paths.len() != paths.paths.len() || sol.times.len() != paths.times.len() {
        return Err(Error::param("solution", "frictionless solution does not match the path bundle"));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelfareReport {
    /// Certainty-equivalent loss in wealth units.
    pub ce_loss: f64,
    pub ce_loss_stderr: f64,
    /// Loss as a fraction of initial capital (power/log only).
    pub ce_loss_fraction: Option<f64>,
    /// Equivalent-safe-rate reduction per year (power/log without consumption).
    pub esr_reduction: Option<f64>,
    pub split_cost: f64,
    pub split_displacement: f64,
}

/// Leading-order welfare loss from a shares band.
pub fn ce_loss(
    fm: &FrictionlessModel,
    sol: &FrictionlessSolution,
    band: &NoTradeBand,
    paths: &PathBundle,
) -> Result<WelfareReport> {
    band.expect(Parametrization::Shares)?;
    check_shapes(sol, paths)?;
    let dt = paths.dt();
    let horizon = paths.horizon();
    let gamma = fm.crra_gamma();
    let var = fm.model.sigma * fm.model.sigma;
    // (Q weight, Q integral, P-hat weight, P-hat integral)
    let per_path: Vec<(f64, f64, f64, f64)> = paths
        .paths
        .par_iter()
        .zip(&sol.paths)
        .zip(&band.halfwidth)
        .map(|((p, s), hw)| {
            let n = p.n_steps();
            let integrand: Vec<f64> = (0..=n)
                .map(|k| {
                    let c_s = var * p.mid_price[k].powi(2);
                    hw[k] * hw[k] / (2.0 * s.indirect_risk_tolerance[k]) * c_s
                })
                .collect();
            let z_t = s.q_density[n];
            let (w_hat, frac) = match gamma {
                Some(g) => {
                    // P-hat density E(int pi dY) Z, and the consumption discount exp(-int c).
                    let mut log_e = 0.0f64;
                    let mut cum_c = 0.0f64;
                    let mut f = Vec::with_capacity(n + 1);
                    for k in 0..=n {
                        let dpi = hw[k] * p.mid_price[k] / s.wealth[k];
                        f.push(0.5 * g * dpi * dpi * var * (-cum_c).exp());
                        if k < n {
                            log_e += (1.0 + s.risky_weight[k] * p.return_increments[k]).ln();
                            cum_c += s.consumption_wealth_ratio[k] * dt;
                        }
                    }
                    (z_t * log_e.exp(), trapezoid(&f, dt))
                }
                None => (0.0, 0.0),
            };
            (z_t, trapezoid(&integrand, dt), w_hat, frac)
        })
        .collect();
    let wq: Vec<f64> = per_path.iter().map(|r| r.0).collect();
    let xq: Vec<f64> = per_path.iter().map(|r| r.1).collect();
    let (loss, se) = weighted_mean_stderr(&xq, &wq);
    let fraction = gamma.map(|_| {
        let w: Vec<f64> = per_path.iter().map(|r| r.2).collect();
        let x: Vec<f64> = per_path.iter().map(|r| r.3).collect();
        weighted_mean_stderr(&x, &w).0
    });
    let esr = match fraction {
        Some(f) if !fm.pref.consumes() => Some(f / horizon),
        _ => None,
    };
    Ok(WelfareReport {
        ce_loss: loss,
        ce_loss_stderr: se,
        ce_loss_fraction: fraction,
        esr_reduction: esr,
        split_cost: 2.0 / 3.0 * loss,
        split_displacement: loss / 3.0,
    })
}

/// Closed-form loss fraction `(gamma/2) dpi^2 sigma^2 T` for constant coefficients.
pub fn crra_loss_fraction_constant(gamma: f64, dpi: f64, sigma: f64, horizon: f64) -> f64 {
    0.5 * gamma * dpi * dpi * sigma * sigma * horizon
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TurnoverForecast {
    /// Predicted expected number of shares traded over the horizon.
    pub absolute_share_turnover: f64,
    pub absolute_share_turnover_stderr: f64,
    /// Predicted shares traded per share held, integrated over the horizon.
    pub relative_share_turnover: f64,
    /// Predicted wealth traded per unit wealth, integrated over the horizon.
    pub relative_wealth_turnover: f64,
}

/// Turnover forecast from a shares band, averaged over paths under the physical measure.
pub fn turnover_forecast(
    fm: &FrictionlessModel,
    sol: &FrictionlessSolution,
    band: &NoTradeBand,
    paths: &PathBundle,
) -> Result<TurnoverForecast> {
    band.expect(Parametrization::Shares)?;
    check_shapes(sol, paths)?;
    let dt = paths.dt();
    let var = fm.model.sigma * fm.model.sigma;
    let per_path: Vec<(f64, f64, f64)> = paths
        .paths
        .par_iter()
        .zip(&sol.paths)
        .zip(&band.halfwidth)
        .map(|((p, s), hw)| {
            let n = p.n_steps();
            let mut abs = Vec::with_capacity(n + 1);
            let mut rel_sh = Vec::with_capacity(n + 1);
            let mut rel_we = Vec::with_capacity(n + 1);
            for k in 0..=n {
                let sp = p.mid_price[k];
                let inp = fm.band_inputs(p, s, k, s.wealth[k]);
                let rate = turnover_rate(inp.portfolio_gamma, var * sp * sp, hw[k]);
                abs.push(rate);
                rel_sh.push(if rate == 0.0 { 0.0 } else { rate / s.shares[k].abs() });
                rel_we.push(if rate == 0.0 { 0.0 } else { rate * sp / s.wealth[k].abs() });
            }
            (trapezoid(&abs, dt), trapezoid(&rel_sh, dt), trapezoid(&rel_we, dt))
        })
        .collect();
    let a: Vec<f64> = per_path.iter().map(|r| r.0).collect();
    let (abs, abs_se) = mean_stderr(&a);
    let sh = per_path.iter().map(|r| r.1).sum::<f64>() / per_path.len() as f64;
    let we = per_path.iter().map(|r| r.2).sum::<f64>() / per_path.len() as f64;
    Ok(TurnoverForecast {
        absolute_share_turnover: abs,
        absolute_share_turnover_stderr: abs_se,
        relative_share_turnover: sh,
        relative_wealth_turnover: we,
    })
}

/// CRRA relative share turnover rate `(3 eta/(2 gamma))^(-1/3) B^(2/3) sigma^2 / (2 |pi|)`.
pub fn crra_share_turnover_rate(eta: f64, gamma: f64, bracket: f64, pi: f64, var_y: f64) -> f64 {
    if bracket == 0.0 {
        return 0.0;
    }
    (1.5 * eta / gamma).powf(-1.0 / 3.0) * bracket.powf(2.0 / 3.0) / (2.0 * pi.abs()) * var_y
}

/// CRRA relative wealth turnover rate `(1/2)(3 eta/(2 gamma))^(-1/3) B^(2/3) sigma^2`.
pub fn crra_wealth_turnover_rate(eta: f64, gamma: f64, bracket: f64, var_y: f64) -> f64 {
    if bracket == 0.0 {
        return 0.0;
    }
    0.5 * (1.5 * eta / gamma).powf(-1.0 / 3.0) * bracket.powf(2.0 / 3.0) * var_y
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeanVarianceTarget {
    /// Target expected terminal wealth `m > x0`.
    Mean(f64),
    /// Variance bound `s^2 > 0`.
    VarianceBound(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVarianceReport {
    /// Value of quadratic utility from wealth -1, `U(-1)`.
    pub quadratic_value: f64,
    pub multiplier_frictionless: f64,
    pub multiplier_frictional: f64,
    pub sharpe_frictionless: f64,
    pub sharpe_frictional: f64,
    /// `E^Q[int (dNT)^2 / (2 R) d<S>]` for the quadratic investor from -1.
    pub correction: f64,
    pub correction_stderr: f64,
    pub min_variance_frictional: Option<f64>,
    pub max_return_frictional: Option<f64>,
}

/// Mean-variance frontier with its small-spread correction. The correction is the
/// welfare loss of the quadratic investor starting from -1, averaged under the
/// variance-optimal measure with density `X_T / U(-1)`.
pub fn mean_variance_report(
    model: MarketModel,
    x0: f64,
    target: MeanVarianceTarget,
    paths: &PathBundle,
) -> Result<MeanVarianceReport> {
    if model.kind != ModelKind::BlackScholes {
        return Err(Error::Unsupported("mean-variance report requires the Black-Scholes model".into()));
    }
    let horizon = paths.horizon();
    let lambda2 = (model.mu / model.sigma).powi(2);
    let u = -(-lambda2 * horizon).exp();
    let sr = (-1.0 / u - 1.0).sqrt();
    let fm = FrictionlessModel::new(model, Preferences::quadratic(), -1.0, horizon)?;
    let sol = FrictionlessSolution {
        times: paths.times.clone(),
        paths: paths.paths.par_iter().map(|p| fm.solve_path(p)).collect(),
    };
    let band = no_trade_band(&fm, &sol, paths, None)?;
    let dt = paths.dt();
    let var = model.sigma * model.sigma;
    let per_path: Vec<(f64, f64)> = paths
        .paths
        .par_iter()
        .zip(&sol.paths)
        .zip(&band.halfwidth)
        .map(|((p, s), hw)| {
            let f: Vec<f64> = (0..=p.n_steps())
                .map(|k| hw[k] * hw[k] / (2.0 * s.indirect_risk_tolerance[k]) * var * p.mid_price[k].powi(2))
                .collect();
            (s.wealth[p.n_steps()] / u, trapezoid(&f, dt))
        })
        .collect();
    let w: Vec<f64> = per_path.iter().map(|r| r.0).collect();
    let x: Vec<f64> = per_path.iter().map(|r| r.1).collect();
    let (c, c_se) = weighted_mean_stderr(&x, &w);

    let sr_eps = sr - (1.0 + sr * sr) / sr * c;
    let (excess, min_var, max_ret) = match target {
        MeanVarianceTarget::Mean(m) => {
            if !(m > x0) {
                return Err(Error::param("target_mean", format!("must exceed x0 = {x0}, got {m}")));
            }
            let e = m - x0;
            let v = e * e * (-u) / (1.0 + u) * (1.0 + 2.0 / (1.0 + u) * c);
            (e, Some(v), None)
        }
        MeanVarianceTarget::VarianceBound(s2) => {
            if !(s2 > 0.0) {
                return Err(Error::param("variance_bound", "must be > 0"));
            }
            (s2.sqrt() * sr, None, Some(s2.sqrt() * sr_eps))
        }
    };
    let mf = excess / (1.0 + u);
    Ok(MeanVarianceReport {
        quadratic_value: u,
        multiplier_frictionless: mf,
        multiplier_frictional: mf * (1.0 + 2.0 * (-u) / (1.0 + u) * c),
        sharpe_frictionless: sr,
        sharpe_frictional: sr_eps,
        correction: c,
        correction_stderr: c_se,
        min_variance_frictional: min_var,
        max_return_frictional: max_ret,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    /// Predicted long-run growth-rate loss per year.
    pub rate_reduction: f64,
}

/// `(1/T) int (dpi)^2 / 2 d<Y>`, averaged over paths.
pub fn growth_rate_reduction(fm: &FrictionlessModel, band: &NoTradeBand, paths: &PathBundle) -> Result<GrowthReport> {
    if !fm.pref.is_log() {
        return Err(Error::Unsupported(format!(
            "growth-rate reduction needs log utility, got {}",
            fm.pref.name()
        )));
    }
    band.expect(Parametrization::Fraction)?;
    let dt = paths.dt();
    let horizon = paths.horizon();
    let var = fm.model.sigma * fm.model.sigma;
    let per_path: Vec<f64> = band
        .halfwidth
        .par_iter()
        .map(|hw| {
            let f: Vec<f64> = hw.iter().map(|d| 0.5 * d * d * var).collect();
            trapezoid(&f, dt) / horizon
        })
        .collect();
    Ok(GrowthReport {
        rate_reduction: per_path.iter().sum::<f64>() / per_path.len().max(1) as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frictionless::solve_frictionless;
    use crate::market::{simulate_paths, PathGrid, SpreadModel};
    use proptest::prelude::*;

    fn setup(mu: f64, pref: Preferences, eta: f64, n_paths: usize) -> (FrictionlessModel, PathBundle, FrictionlessSolution) {
        let model = MarketModel::black_scholes(mu, 0.2, 1.0);
        let paths = simulate_paths(model, SpreadModel::proportional(eta), PathGrid::new(1.0, 100, n_paths, 3)).unwrap();
        let x0 = if matches!(pref.family, crate::preferences::Family::QuadraticTruncated) { -1.0 } else { 1.0 };
        let fm = FrictionlessModel::new(model, pref, x0, 1.0).unwrap();
        let sol = solve_frictionless(model, pref, &paths, x0).unwrap();
        (fm, paths, sol)
    }

    #[test]
    fn merton_band_value() {
        let (fm, paths, sol) = setup(0.08, Preferences::power(5.0), 0.01, 2);
        let band = crra_band_fraction(&fm, &sol, &paths).unwrap();
        for hw in &band.halfwidth {
            for &d in hw {
                assert!((d - 0.055_699_066_003_353_35).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn full_investment_has_no_band() {
        // sigma^2 = 0.25 and gamma = 4 make the Merton weight exactly one.
        let model = MarketModel::black_scholes(1.0, 0.5, 1.0);
        let paths = simulate_paths(model, SpreadModel::proportional(0.01), PathGrid::new(1.0, 100, 2, 3)).unwrap();
        let fm = FrictionlessModel::new(model, Preferences::power(4.0), 1.0, 1.0).unwrap();
        let sol = solve_frictionless(model, Preferences::power(4.0), &paths, 1.0).unwrap();
        let band = crra_band_fraction(&fm, &sol, &paths).unwrap();
        assert!(band.halfwidth.iter().flatten().all(|&d| d == 0.0));
        let shares = no_trade_band(&fm, &sol, &paths, None).unwrap();
        assert!(shares.halfwidth.iter().flatten().all(|&d| d == 0.0));
        let t = turnover_forecast(&fm, &sol, &shares, &paths).unwrap();
        assert_eq!(t.absolute_share_turnover, 0.0);
    }

    #[test]
    fn shares_band_matches_fraction_band() {
        let (fm, paths, sol) = setup(0.08, Preferences::power(5.0).with_consumption(0.5, 0.1), 0.01, 3);
        let sb = no_trade_band(&fm, &sol, &paths, None).unwrap();
        let fb = crra_band_fraction(&fm, &sol, &paths).unwrap();
        for i in 0..3 {
            for k in 0..=100 {
                let dpi = sb.halfwidth[i][k] * paths.paths[i].mid_price[k] / sol.paths[i].wealth[k];
                assert!((dpi / fb.halfwidth[i][k] - 1.0).abs() < 1e-12);
                assert!((sb.midpoint[i][k] - sol.paths[i].shares[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn welfare_canonical() {
        let (fm, paths, sol) = setup(0.08, Preferences::power(5.0), 0.01, 50);
        let band = no_trade_band(&fm, &sol, &paths, None).unwrap();
        let w = ce_loss(&fm, &sol, &band, &paths).unwrap();
        let expected = crra_loss_fraction_constant(5.0, 0.055_699_066_003_353_35, 0.2, 1.0);
        assert!((expected - 3.102_385_953_645_9e-4).abs() < 1e-15);
        assert!((w.ce_loss_fraction.unwrap() - expected).abs() < 1e-15);
        assert!((w.esr_reduction.unwrap() - expected).abs() < 1e-15);
        assert!((w.split_cost - 2.0 * w.split_displacement).abs() < 1e-18);
        // Wealth-unit loss is the same quantity averaged with Q weights.
        assert!((w.ce_loss / expected - 1.0).abs() < 0.05);
        assert!(matches!(
            ce_loss(&fm, &sol, &crra_band_fraction(&fm, &sol, &paths).unwrap(), &paths),
            Err(Error::Parametrization { .. })
        ));
    }

    #[test]
    fn zero_spread_zero_loss() {
        let (fm, paths, sol) = setup(0.08, Preferences::power(5.0), 0.0, 5);
        let band = no_trade_band(&fm, &sol, &paths, None).unwrap();
        let w = ce_loss(&fm, &sol, &band, &paths).unwrap();
        assert_eq!(w.ce_loss, 0.0);
        assert_eq!(w.ce_loss_fraction, Some(0.0));
    }

    #[test]
    fn turnover_scaling_by_spread() {
        let (fm, paths, sol) = setup(0.08, Preferences::power(5.0), 0.01, 5);
        let (_, paths9, _) = setup(0.08, Preferences::power(5.0), 0.009, 5);
        let f1 = turnover_forecast(&fm, &sol, &no_trade_band(&fm, &sol, &paths, None).unwrap(), &paths).unwrap();
        let f9 = turnover_forecast(&fm, &sol, &no_trade_band(&fm, &sol, &paths9, None).unwrap(), &paths9).unwrap();
        let r = 0.9f64.powf(-1.0 / 3.0);
        assert!((f9.absolute_share_turnover / f1.absolute_share_turnover - r).abs() < 1e-12);
        assert!((f9.relative_share_turnover / f1.relative_share_turnover - r).abs() < 1e-12);
        assert!((f9.relative_wealth_turnover / f1.relative_wealth_turnover - r).abs() < 1e-12);
    }

    #[test]
    fn crra_turnover_closed_forms() {
        let (fm, paths, sol) = setup(0.08, Preferences::power(5.0), 0.01, 2);
        let f = turnover_forecast(&fm, &sol, &no_trade_band(&fm, &sol, &paths, None).unwrap(), &paths).unwrap();
        let b = crra_bracket(0.4, 0.0, 0.0);
        let sh = crra_share_turnover_rate(0.01, 5.0, b, 0.4, 0.04);
        let we = crra_wealth_turnover_rate(0.01, 5.0, b, 0.04);
        assert!((f.relative_share_turnover / sh - 1.0).abs() < 1e-12);
        assert!((f.relative_wealth_turnover / we - 1.0).abs() < 1e-12);
    }

    #[test]
    fn exponential_and_quadratic_bands() {
        let (fm, paths, sol) = setup(0.08, Preferences::exponential(2.0, 2.0).with_consumption(1.0, 0.0), 0.01, 2);
        let b = no_trade_band(&fm, &sol, &paths, None).unwrap();
        let p = &paths.paths[0];
        let s = &sol.paths[0];
        let expect = (1.5 * s.indirect_risk_tolerance[7] * (s.shares[7] / p.mid_price[7]).powi(2) * p.spread_halfwidth[7]).cbrt();
        assert!((b.halfwidth[0][7] - expect).abs() < 1e-15);
        assert!(crra_band_fraction(&fm, &sol, &paths).is_err());

        let (fm, paths, sol) = setup(0.08, Preferences::quadratic(), 0.01, 2);
        let b = no_trade_band(&fm, &sol, &paths, None).unwrap();
        assert!(b.halfwidth.iter().flatten().all(|&d| d > 0.0));
    }

    #[test]
    fn mean_variance_frictionless_limit() {
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let paths = simulate_paths(model, SpreadModel::proportional(0.0), PathGrid::new(1.0, 50, 20, 1)).unwrap();
        let r = mean_variance_report(model, 1.0, MeanVarianceTarget::Mean(1.5), &paths).unwrap();
        assert!((r.sharpe_frictionless - 0.416_546_361_155_406_4).abs() < 1e-14);
        assert_eq!(r.sharpe_frictional, r.sharpe_frictionless);
        assert_eq!(r.multiplier_frictional, 0.5 / (1.0 + r.quadratic_value));
        let r2 = mean_variance_report(model, 1.0, MeanVarianceTarget::Mean(2.0), &paths).unwrap();
        assert!((r2.multiplier_frictional / r.multiplier_frictional - 2.0).abs() < 1e-14);
        assert!((r2.min_variance_frictional.unwrap() / r.min_variance_frictional.unwrap() - 4.0).abs() < 1e-12);
        assert!(mean_variance_report(model, 1.0, MeanVarianceTarget::Mean(0.5), &paths).is_err());
    }

    #[test]
    fn mean_variance_correction_scaling() {
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let mk = |eta| simulate_paths(model, SpreadModel::proportional(eta), PathGrid::new(1.0, 50, 20, 1)).unwrap();
        let a = mean_variance_report(model, 1.0, MeanVarianceTarget::Mean(1.5), &mk(0.005)).unwrap();
        let b = mean_variance_report(model, 1.0, MeanVarianceTarget::Mean(1.5), &mk(0.04)).unwrap();
        assert!((b.correction / a.correction - 4.0).abs() < 1e-9);
        assert!(a.sharpe_frictional < a.sharpe_frictionless);
        let v = mean_variance_report(model, 1.0, MeanVarianceTarget::VarianceBound(0.04), &mk(0.005)).unwrap();
        assert!((v.max_return_frictional.unwrap() - 0.2 * v.sharpe_frictional).abs() < 1e-15);
    }

    #[test]
    fn growth_reduction_value() {
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let paths = simulate_paths(model, SpreadModel::proportional(0.01), PathGrid::new(1.0, 20, 2, 1)).unwrap();
        let fm = FrictionlessModel::new(model, Preferences::log(), 1.0, 1.0).unwrap();
        let band = NoTradeBand {
            midpoint: vec![vec![0.4; 21]; 2],
            halfwidth: vec![vec![0.055_699_066_003_353_35; 21]; 2],
            parametrization: Parametrization::Fraction,
        };
        let g = growth_rate_reduction(&fm, &band, &paths).unwrap();
        assert!((g.rate_reduction - 6.204_771_907_291_8e-5).abs() < 1e-15);
        let sol = solve_frictionless(model, Preferences::log(), &paths, 1.0).unwrap();
        let real = crra_band_fraction(&fm, &sol, &paths).unwrap();
        let g = growth_rate_reduction(&fm, &real, &paths).unwrap();
        assert!((g.rate_reduction - 0.02 * 0.06f64.powf(2.0 / 3.0)).abs() < 1e-15);
        let fp = FrictionlessModel::new(model, Preferences::power(2.0), 1.0, 1.0).unwrap();
        assert!(growth_rate_reduction(&fp, &band, &paths).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn turnover_substitution_identity(r in 0.01f64..10.0, g in 1e-6f64..10.0, eps in 1e-6f64..0.1, cs in 1e-4f64..1.0) {
            let hw = shares_halfwidth(r, g, eps);
            let a = turnover_rate(g, cs, hw);
            let b = turnover_rate_closed(r, g, eps, cs);
            prop_assert!((a / b - 1.0).abs() < 1e-12);
        }

        #[test]
        fn band_cube_root(r in 0.01f64..10.0, g in 1e-6f64..10.0, eps in 1e-6f64..0.01) {
            let a = shares_halfwidth(r, g, eps);
            let b = shares_halfwidth(r, g, 8.0 * eps);
            prop_assert!((b / a - 2.0).abs() < 1e-12);
        }

        #[test]
        fn fraction_band_closed_form(eta in 1e-5f64..0.05, gamma in 0.5f64..20.0, pi in -1.0f64..2.0) {
            let d = fraction_halfwidth(eta, gamma, crra_bracket(pi, 0.0, 0.0));
            let e = (1.5 * eta / gamma).cbrt() * (pi * (1.0 - pi)).abs().powf(2.0 / 3.0);
            prop_assert!((d - e).abs() <= 1e-12 * e.max(1e-300));
        }
    }
}
