//! Spread sweeps, power-law regressions and prediction-versus-simulation reports.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frictionless::{crra_bracket, FrictionlessModel};
use crate::asymptotics::{mean_variance_report, MeanVarianceReport, MeanVarianceTarget};
use crate::market::{simulate_paths, MarketModel, ModelKind, PathGenerator, PathGrid, SpreadModel};
use crate::preferences::Preferences;
use crate::simulator::{run_frictional_sweep, Estimate, FrictionSimResult, FrictionalRun, SimOptions};
use crate::stats::{linear_fit, t_quantile_975, Moments};

/// Base configuration shared by every row of a sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaseConfig {
    pub model: MarketModel,
    pub pref: Preferences,
    pub spread: SpreadModel,
    pub grid: PathGrid,
    pub x0: f64,
    pub options: SimOptions,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub eps_grid: Vec<f64>,
    pub base: BaseConfig,
    pub common_random_numbers: bool,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let g = &self.eps_grid;
        if g.is_empty() {
            return Err(Error::param("eps_grid", "must not be empty"));
        }
        if g.iter().any(|e| !(*e > 0.0 && e.is_finite())) {
            return Err(Error::param("eps_grid", "spread levels must be finite and > 0"));
        }
        let asc = g.windows(2).all(|w| w[0] < w[1]);
        let desc = g.windows(2).all(|w| w[0] > w[1]);
        if !(asc || desc) {
            return Err(Error::param("eps_grid", "must be strictly sorted"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictedRow {
    /// Half-width at time zero: risky-weight units for power/log, shares otherwise.
    pub band_halfwidth: f64,
    /// Certainty-equivalent loss in wealth units.
    pub ce_loss: f64,
    pub turnover: f64,
    pub growth_reduction: Option<f64>,
    pub split_ratio: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealizedRow {
    pub ce_loss: Estimate,
    pub turnover: Estimate,
    pub growth_reduction: Option<Estimate>,
    pub split_ratio: Estimate,
    pub purchases_sales_ratio: f64,
    pub n_bankrupt: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub predicted: Option<PredictedRow>,
    pub realized: Option<RealizedRow>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Regression {
    pub quantity: String,
    pub expected_slope: f64,
    pub slope: f64,
    pub stderr: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_rows: usize,
    /// Spread levels left out because their standard error exceeded 20% of the estimate.
    pub excluded: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub regressions: Vec<Regression>,
}

fn row_from(res: &FrictionSimResult, x0: f64) -> SweepRow {
    let p = &res.predicted;
    let growth_pred = p.growth_reduction.filter(|_| res.growth.is_some());
    let predicted = PredictedRow {
        band_halfwidth: p.band_fraction_t0.unwrap_or(p.band_halfwidth_t0),
        ce_loss: p.ce_loss_fraction.map_or(p.ce_loss, |f| f * x0),
        turnover: p.absolute_share_turnover,
        growth_reduction: growth_pred,
        split_ratio: 2.0,
    };
    let dc = res.loss_direct_cost;
    let dp = res.loss_displacement;
    let ratio = dc.value / dp.value;
    let t = &res.realized_turnover;
    let realized = RealizedRow {
        ce_loss: res.realized_ce_loss,
        turnover: t.absolute_share_turnover,
        growth_reduction: res.growth.map(|g| g.reduction),
        split_ratio: Estimate {
            value: ratio,
            stderr: ratio.abs() * ((dc.stderr / dc.value).powi(2) + (dp.stderr / dp.value).powi(2)).sqrt(),
        },
        purchases_sales_ratio: t.cum_purchases.value / t.cum_sales.value,
        n_bankrupt: res.n_bankrupt,
    };
    SweepRow {
        eta: res.eta,
        predicted: Some(predicted),
        realized: Some(realized),
        error: None,
    }
}

/// Runs every spread level, then fits log-log slopes.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let b = &spec.base;
    let run = FrictionalRun {
        model: b.model,
        pref: b.pref,
        spread: b.spread,
        grid: b.grid,
        x0: b.x0,
        options: b.options,
    };
    let err_row = |eta: f64, e: &Error| SweepRow {
        eta,
        predicted: None,
        realized: None,
        error: Some(e.to_string()),
    };
    let rows: Vec<SweepRow> = if spec.common_random_numbers {
        match run_frictional_sweep(&run, &spec.eps_grid) {
            Ok(results) => results.iter().map(|r| row_from(r, b.x0)).collect(),
            Err(e) => spec.eps_grid.iter().map(|&eta| err_row(eta, &e)).collect(),
        }
    } else {
        spec.eps_grid
            .iter()
            .enumerate()
            .map(|(j, &eta)| {
                let mut r = run;
                r.grid.seed = b.grid.seed.wrapping_add(j as u64);
                match run_frictional_sweep(&r, &[eta]) {
                    Ok(v) => row_from(&v[0], b.x0),
                    Err(e) => err_row(eta, &e),
                }
            })
            .collect()
    };
    let regressions = fit_regressions(&rows);
    Ok(SweepResult { rows, regressions })
}

/// Least-squares slope of `log y` on `log eta` with a 95% confidence interval.
pub fn fit_slope(quantity: &str, expected: f64, points: &[(f64, Estimate)]) -> Regression {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut excluded = Vec::new();
    for (eta, e) in points {
        if !(e.value > 0.0) || e.stderr > 0.2 * e.value.abs() {
            excluded.push(*eta);
        } else {
            xs.push(eta.ln());
            ys.push(e.value.ln());
        }
    }
    let (slope, se) = if xs.len() >= 2 {
        let (_, b, se) = linear_fit(&xs, &ys);
        (b, se)
    } else {
        (f64::NAN, f64::NAN)
    };
    let t = t_quantile_975(xs.len().saturating_sub(2));
    let half = if se.is_finite() && t.is_finite() { t * se } else { f64::NAN };
    Regression {
        quantity: quantity.to_string(),
        expected_slope: expected,
        slope,
        stderr: se,
        ci_low: slope - half,
        ci_high: slope + half,
        n_rows: xs.len(),
        excluded,
    }
}

fn fit_regressions(rows: &[SweepRow]) -> Vec<Regression> {
    let ok: Vec<(&SweepRow, &PredictedRow, &RealizedRow)> = rows
        .iter()
        .filter_map(|r| Some((r, r.predicted.as_ref()?, r.realized.as_ref()?)))
        .collect();
    let exact = |v: f64| Estimate { value: v, stderr: 0.0 };
    let collect = |f: &dyn Fn(&PredictedRow, &RealizedRow) -> Option<Estimate>| -> Vec<(f64, Estimate)> {
        ok.iter().filter_map(|(r, p, q)| f(p, q).map(|e| (r.eta, e))).collect()
    };
    let mut out = vec![
        fit_slope("band_halfwidth_pred", 1.0 / 3.0, &collect(&|p, _| Some(exact(p.band_halfwidth)))),
        fit_slope("ce_loss_pred", 2.0 / 3.0, &collect(&|p, _| Some(exact(p.ce_loss)))),
        fit_slope("turnover_pred", -1.0 / 3.0, &collect(&|p, _| Some(exact(p.turnover)))),
        fit_slope("ce_loss_realized", 2.0 / 3.0, &collect(&|_, q| Some(q.ce_loss))),
        fit_slope("turnover_realized", -1.0 / 3.0, &collect(&|_, q| Some(q.turnover))),
    ];
    if ok.iter().all(|(_, p, q)| p.growth_reduction.is_some() && q.growth_reduction.is_some()) && !ok.is_empty() {
        out.push(fit_slope(
            "growth_reduction_pred",
            2.0 / 3.0,
            &collect(&|p, _| p.growth_reduction.map(exact)),
        ));
        out.push(fit_slope("growth_reduction_realized", 2.0 / 3.0, &collect(&|_, q| q.growth_reduction)));
    }
    out
}

/// Pass/fail thresholds for [`compare_report`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance on realized/predicted certainty-equivalent loss.
    pub ce_loss_rel: f64,
    /// Relative tolerance on realized/predicted turnover.
    pub turnover_rel: f64,
    /// Relative tolerance on realized/predicted growth reduction.
    pub growth_rel: f64,
    /// Absolute tolerance on the direct-cost/displacement ratio around 2.
    pub split_abs: f64,
    /// Absolute tolerance on fitted slopes.
    pub slope_abs: f64,
    /// Largest tolerated fraction of bankrupt paths.
    pub max_bankruptcy_rate: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            ce_loss_rel: 0.25,
            turnover_rel: 0.10,
            growth_rel: 0.25,
            split_abs: 0.2,
            slope_abs: 0.03,
            max_bankruptcy_rate: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareRow {
    pub eta: f64,
    pub quantity: String,
    pub predicted: f64,
    pub realized: f64,
    pub realized_stderr: f64,
    pub ratio: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub tolerances: Tolerances,
    pub rows: Vec<CompareRow>,
    pub failures: Vec<String>,
}

/// Realized/predicted ratios per spread level, and slope checks, with pass/fail flags.
pub fn compare_report(sweep: &SweepResult, tol: &Tolerances) -> CompareReport {
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for r in &sweep.rows {
        if let Some(e) = &r.error {
            failures.push(format!("eta={}: {e}", r.eta));
            continue;
        }
        let (Some(p), Some(q)) = (&r.predicted, &r.realized) else {
            continue;
        };
        let mut push = |name: &str, pred: f64, real: Estimate, tol_rel: f64| {
            let ratio = if pred == 0.0 && real.value == 0.0 { 1.0 } else { real.value / pred };
            let pass = (ratio - 1.0).abs() <= tol_rel;
            if !pass {
                failures.push(format!("eta={}: {name} ratio {ratio:.4} outside 1 +/- {tol_rel}", r.eta));
            }
            rows.push(CompareRow {
                eta: r.eta,
                quantity: name.to_string(),
                predicted: pred,
                realized: real.value,
                realized_stderr: real.stderr,
                ratio,
                tolerance: tol_rel,
                pass,
            });
        };
        push("ce_loss", p.ce_loss, q.ce_loss, tol.ce_loss_rel);
        push("turnover", p.turnover, q.turnover, tol.turnover_rel);
        if let (Some(gp), Some(gq)) = (p.growth_reduction, q.growth_reduction) {
            push("growth_reduction", gp, gq, tol.growth_rel);
        }
        push("split_ratio", p.split_ratio, q.split_ratio, tol.split_abs / p.split_ratio);
    }
    for g in &sweep.regressions {
        let pass = (g.slope - g.expected_slope).abs() <= tol.slope_abs;
        if !pass {
            failures.push(format!(
                "slope of {}: {:.4} vs {:.4} +/- {}",
                g.quantity, g.slope, g.expected_slope, tol.slope_abs
            ));
        }
    }
    CompareReport {
        tolerances: *tol,
        rows,
        failures,
    }
}

impl CompareReport {
    /// Human-readable table.
    pub fn table(&self, sweep: &SweepResult) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:>10} {:>18} {:>13} {:>13} {:>10} {:>8} {:>5}",
            "eta", "quantity", "predicted", "realized", "ratio", "tol", "pass"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:>10.5} {:>18} {:>13.5e} {:>13.5e} {:>10.4} {:>8.3} {:>5}",
                r.eta,
                r.quantity,
                r.predicted,
                r.realized,
                r.ratio,
                r.tolerance,
                if r.pass { "ok" } else { "FAIL" }
            );
        }
        for g in &sweep.regressions {
            let pass = (g.slope - g.expected_slope).abs() <= self.tolerances.slope_abs;
            let _ = writeln!(
                s,
                "slope {:<26} {:>9.5} (expected {:>8.5}, 95% CI [{:.5}, {:.5}]) {}",
                g.quantity,
                g.slope,
                g.expected_slope,
                g.ci_low,
                g.ci_high,
                if pass { "ok" } else { "FAIL" }
            );
        }
        s
    }

    pub fn csv(&self) -> String {
        let mut s = String::from("eta,quantity,predicted,realized,realized_stderr,ratio,tolerance,pass\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{}",
                r.eta, r.quantity, r.predicted, r.realized, r.realized_stderr, r.ratio, r.tolerance, r.pass
            );
        }
        s
    }
}

impl SweepResult {
    /// Plot-ready table, one row per spread level.
    pub fn csv(&self) -> String {
        let mut s = String::from(
            "eps,band_halfwidth,ce_loss_pred,turnover_pred,growth_loss_pred,ce_loss_real,ce_loss_real_se,turnover_real,turnover_real_se,growth_loss_real,growth_loss_real_se,split_ratio,purchases_sales_ratio\n",
        );
        for r in &self.rows {
            let (Some(p), Some(q)) = (&r.predicted, &r.realized) else {
                let _ = writeln!(s, "{},,,,,,,,,,,,", r.eta);
                continue;
            };
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{},{},{},{},{},{},{},{},{},{},{}",
                r.eta,
                p.band_halfwidth,
                p.ce_loss,
                p.turnover,
                opt(p.growth_reduction),
                q.ce_loss.value,
                q.ce_loss.stderr,
                q.turnover.value,
                q.turnover.stderr,
                opt(q.growth_reduction.map(|e| e.value)),
                opt(q.growth_reduction.map(|e| e.stderr)),
                q.split_ratio.value,
                q.purchases_sales_ratio
            );
        }
        s
    }
}

/// Analytic versus realized stochastic-opportunity bracket for log utility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BracketCheck {
    pub rho: f64,
    /// Path- and time-averaged bracket with the analytic variation ratios.
    pub analytic: f64,
    /// Same average with ratios estimated from realized increments of each path.
    pub finite_difference: f64,
    pub relative_error: f64,
    /// Path- and time-averaged cross term `-2 pi (1 - pi) d<pi,Y>/d<Y>`.
    pub cross_term_analytic: f64,
    pub cross_term_fd: f64,
    /// Time-averaged `rho (1 - pi)`, whose sign the cross term should oppose.
    pub mean_rho_one_minus_pi: f64,
}

/// Compares the analytic band bracket of the mean-reverting drift model (log utility)
/// with one built from realized quadratic variations of simulated weight paths.
pub fn stochastic_bracket_check(model: MarketModel, grid: PathGrid) -> Result<BracketCheck> {
    if model.kind != ModelKind::MeanRevertingDrift {
        return Err(Error::Unsupported("bracket check needs the mean-reverting drift model".into()));
    }
    let fm = FrictionlessModel::new(model, Preferences::log(), 1.0, grid.horizon)?;
    let (cov_a, var_a) = fm.weight_variation_ratios(1.0);
    let gen = PathGenerator::new(model, SpreadModel::proportional(0.0), grid)?;
    let var = model.sigma * model.sigma;
    let per_path: Vec<Result<[f64; 5]>> = {
        use rayon::prelude::*;
        (0..grid.n_paths)
            .into_par_iter()
            .map(|id| {
                let p = gen.path(id)?;
                let n = p.n_steps();
                let pi: Vec<f64> = p.factor.iter().map(|m| m / var).collect();
                let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
                for k in 0..n {
                    let dpi = pi[k + 1] - pi[k];
                    let dy = p.return_increments[k];
                    sxy += dpi * dy;
                    sxx += dpi * dpi;
                    syy += dy * dy;
                }
                let (cov_f, var_f) = (sxy / syy, sxx / syy);
                let (mut a, mut f, mut ca, mut cf, mut s) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for &w in &pi[..n] {
                    let q = w * (1.0 - w);
                    a += crra_bracket(w, cov_a, var_a);
                    f += crra_bracket(w, cov_f, var_f);
                    ca += -2.0 * q * cov_a;
                    cf += -2.0 * q * cov_f;
                    s += model.rho * (1.0 - w);
                }
                let nf = n as f64;
                Ok([a / nf, f / nf, ca / nf, cf / nf, s / nf])
            })
            .collect()
    };
    let mut m = [Moments::default(); 5];
    for r in per_path {
        let r = r?;
        for (acc, v) in m.iter_mut().zip(r) {
            acc.push(v);
        }
    }
    let analytic = m[0].mean();
    let fd = m[1].mean();
    Ok(BracketCheck {
        rho: model.rho,
        analytic,
        finite_difference: fd,
        relative_error: (fd - analytic).abs() / analytic.abs(),
        cross_term_analytic: m[2].mean(),
        cross_term_fd: m[3].mean(),
        mean_rho_one_minus_pi: m[4].mean(),
    })
}

/// Simulated Sharpe ratios of the rescaled quadratic-utility portfolio for one target mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanVarianceRun {
    pub target_mean: f64,
    pub multiplier: f64,
    pub sharpe_frictionless: Estimate,
    pub sharpe_frictional: Estimate,
    pub n_bankrupt: usize,
    pub containment_violations: u64,
    pub boundary_touch_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanVarianceExperiment {
    pub report: MeanVarianceReport,
    /// Paths used for the correction term of the report.
    pub report_paths: usize,
    pub runs: Vec<MeanVarianceRun>,
}

/// Largest number of paths held in memory for the frontier correction.
pub const MEAN_VARIANCE_REPORT_PATHS: usize = 4096;

/// Frontier prediction plus Monte Carlo Sharpe ratios, frictionless and at `spread`,
/// for each target mean. Paths are shared across targets.
pub fn mean_variance_experiment(
    model: MarketModel,
    spread: SpreadModel,
    grid: PathGrid,
    x0: f64,
    target_means: &[f64],
    options: SimOptions,
) -> Result<MeanVarianceExperiment> {
    if target_means.is_empty() {
        return Err(Error::param("target_means", "at least one target required"));
    }
    let mut small = grid;
    small.n_paths = grid.n_paths.min(MEAN_VARIANCE_REPORT_PATHS);
    let bundle = simulate_paths(model, spread, small)?;
    let report = mean_variance_report(model, x0, MeanVarianceTarget::Mean(target_means[0]), &bundle)?;
    let mut runs = Vec::with_capacity(target_means.len());
    for &m in target_means {
        if !(m > x0) {
            return Err(Error::param("target_means", format!("must exceed x0 = {x0}, got {m}")));
        }
        let mf = (m - x0) / (1.0 + report.quadratic_value);
        let run = FrictionalRun {
            model,
            pref: Preferences::quadratic(),
            spread,
            grid,
            x0: -mf,
            options,
        };
        let res = run_frictional_sweep(&run, &[0.0, spread.eta0])?;
        runs.push(MeanVarianceRun {
            target_mean: m,
            multiplier: mf,
            sharpe_frictionless: res[0].terminal.sharpe_frictional,
            sharpe_frictional: res[1].terminal.sharpe_frictional,
            n_bankrupt: res[1].n_bankrupt,
            containment_violations: res[1].shadow.containment_violations,
            boundary_touch_error: res[1].shadow.boundary_touch_error,
        });
    }
    Ok(MeanVarianceExperiment {
        report,
        report_paths: small.n_paths,
        runs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(n_paths: usize) -> BaseConfig {
        BaseConfig {
            model: MarketModel::black_scholes(0.08, 0.2, 1.0),
            pref: Preferences::power(5.0),
            spread: SpreadModel::proportional(0.01),
            grid: PathGrid::new(1.0, 200, n_paths, 5),
            x0: 1.0,
            options: SimOptions::default(),
        }
    }

    #[test]
    fn spec_validation() {
        let mut s = SweepSpec {
            eps_grid: vec![0.01, 0.005],
            base: base(4),
            common_random_numbers: true,
        };
        assert!(s.validate().is_ok());
        s.eps_grid = vec![0.01, 0.02, 0.005];
        assert!(s.validate().is_err());
        s.eps_grid = vec![];
        assert!(s.validate().is_err());
        s.eps_grid = vec![0.0, 0.01];
        assert!(s.validate().is_err());
    }

    #[test]
    fn predicted_slopes_are_exact() {
        let spec = SweepSpec {
            eps_grid: vec![0.0025, 0.005, 0.01, 0.02],
            base: base(16),
            common_random_numbers: true,
        };
        let res = run_sweep(&spec).unwrap();
        assert_eq!(res.rows.len(), 4);
        for g in &res.regressions {
            if g.quantity.ends_with("_pred") {
                assert!((g.slope - g.expected_slope).abs() < 1e-9, "{g:?}");
            }
        }
        let again = run_sweep(&spec).unwrap();
        assert_eq!(serde_json::to_string(&res).unwrap(), serde_json::to_string(&again).unwrap());
        let csv = res.csv();
        assert_eq!(csv.lines().count(), 5);
        assert!(csv.starts_with("eps,band_halfwidth,ce_loss_pred,turnover_pred,growth_loss_pred"));
    }

    #[test]
    fn rows_fail_without_aborting() {
        let mut b = base(4);
        // Absolute spread wider than the price: every path is rejected.
        b.spread = SpreadModel::absolute(0.5);
        b.model.sigma = 2.0;
        let spec = SweepSpec {
            eps_grid: vec![0.5, 0.9],
            base: b,
            common_random_numbers: false,
        };
        let res = run_sweep(&spec).unwrap();
        assert!(res.rows.iter().all(|r| r.error.is_some()));
        let rep = compare_report(&res, &Tolerances::default());
        assert!(!rep.failures.is_empty());
    }

    #[test]
    fn slope_fit_excludes_noisy_rows() {
        let pts = [
            (0.001, Estimate { value: 0.1, stderr: 0.001 }),
            (0.01, Estimate { value: 0.1 * 10f64.powf(2.0 / 3.0), stderr: 0.001 }),
            (0.1, Estimate { value: 0.1 * 100f64.powf(2.0 / 3.0), stderr: 0.001 }),
            (1.0, Estimate { value: 1.0, stderr: 0.5 }),
        ];
        let g = fit_slope("x", 2.0 / 3.0, &pts);
        assert_eq!(g.excluded, vec![1.0]);
        assert!((g.slope - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn compare_flags_and_echoes_tolerances() {
        let sweep = SweepResult {
            rows: vec![SweepRow {
                eta: 0.01,
                predicted: Some(PredictedRow {
                    band_halfwidth: 0.05,
                    ce_loss: 1.0,
                    turnover: 1.0,
                    growth_reduction: None,
                    split_ratio: 2.0,
                }),
                realized: Some(RealizedRow {
                    ce_loss: Estimate { value: 1.0, stderr: 0.0 },
                    turnover: Estimate { value: 1.5, stderr: 0.0 },
                    growth_reduction: None,
                    split_ratio: Estimate { value: 2.0, stderr: 0.0 },
                    purchases_sales_ratio: 1.0,
                    n_bankrupt: 0,
                }),
                error: None,
            }],
            regressions: vec![],
        };
        let tol = Tolerances {
            turnover_rel: 0.07,
            ..Tolerances::default()
        };
        let rep = compare_report(&sweep, &tol);
        assert_eq!(rep.tolerances, tol);
        assert_eq!(rep.rows[0].ratio, 1.0);
        assert!(rep.rows[0].pass);
        assert!(!rep.rows[1].pass);
        assert_eq!(rep.rows[1].tolerance, 0.07);
        assert_eq!(rep.failures.len(), 1);
        assert!(rep.table(&sweep).contains("FAIL"));
    }

    #[test]
    fn mean_variance_runs_share_sharpe() {
        let model = MarketModel::black_scholes(0.08, 0.2, 1.0);
        let opts = SimOptions {
            charge_initial_trade: false,
            liquidate_at_horizon: false,
            ..SimOptions::default()
        };
        let e = mean_variance_experiment(
            model,
            SpreadModel::proportional(0.005),
            PathGrid::new(1.0, 100, 64, 2),
            1.0,
            &[1.1, 2.0],
            opts,
        )
        .unwrap();
        assert_eq!(e.runs.len(), 2);
        // Scaling the target rescales every position, leaving Sharpe ratios unchanged.
        let (a, b) = (e.runs[0].sharpe_frictional.value, e.runs[1].sharpe_frictional.value);
        assert!((a - b).abs() < 0.02, "{a} {b}");
        assert!(e.report.sharpe_frictional < e.report.sharpe_frictionless);
    }

    #[test]
    fn bracket_check_small() {
        let model = MarketModel::mean_reverting(0.02, 0.2, 2.0, 0.02, 0.5, 1.0);
        let c = stochastic_bracket_check(model, PathGrid::new(1.0, 2000, 20, 3)).unwrap();
        assert!(c.relative_error < 0.1, "{c:?}");
        assert!(c.cross_term_analytic * c.mean_rho_one_minus_pi < 0.0);
        assert!(stochastic_bracket_check(MarketModel::black_scholes(0.08, 0.2, 1.0), PathGrid::new(1.0, 10, 2, 1)).is_err());
    }
}
