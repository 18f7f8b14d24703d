//! Browser bindings: band and forecast summary, a small Monte Carlo check, and one
//! traced path for plotting. Every export returns a JSON string.

use notrade_core::asymptotics::{ce_loss, crra_band_fraction, no_trade_band, turnover_forecast};
use notrade_core::{
    run_frictional, simulate_paths, solve_frictionless, FrictionalRun, FrictionlessModel, InitialPosition,
    MarketModel, PathGrid, Preferences, SimOptions, SpreadModel,
};
use serde_json::json;
use wasm_bindgen::prelude::*;

fn options(trace_paths: usize) -> SimOptions {
    SimOptions {
        charge_initial_trade: false,
        liquidate_at_horizon: false,
        initial_position: InitialPosition::Stationary,
        trace_paths,
        ..SimOptions::default()
    }
}

fn run(mu: f64, sigma: f64, gamma: f64, eta: f64, n_paths: usize, n_steps: usize, seed: u64, trace: usize) -> FrictionalRun {
    FrictionalRun {
        model: MarketModel::black_scholes(mu, sigma, 1.0),
        pref: Preferences::power(gamma),
        spread: SpreadModel::proportional(eta),
        grid: PathGrid::new(1.0, n_steps, n_paths, seed),
        x0: 1.0,
        options: options(trace),
    }
}

/// Band, welfare loss and turnover forecasts for a Merton investor with one unit of wealth.
pub fn band_summary(mu: f64, sigma: f64, gamma: f64, eta: f64) -> Result<String, String> {
    let model = MarketModel::black_scholes(mu, sigma, 1.0);
    let pref = Preferences::power(gamma);
    let fm = FrictionlessModel::new(model, pref, 1.0, 1.0).map_err(|e| e.to_string())?;
    let b = simulate_paths(model, SpreadModel::proportional(eta), PathGrid::new(1.0, 50, 1, 0)).map_err(|e| e.to_string())?;
    let sol = solve_frictionless(model, pref, &b, 1.0).map_err(|e| e.to_string())?;
    let frac = crra_band_fraction(&fm, &sol, &b).map_err(|e| e.to_string())?;
    let shares = no_trade_band(&fm, &sol, &b, None).map_err(|e| e.to_string())?;
    let welfare = ce_loss(&fm, &sol, &shares, &b).map_err(|e| e.to_string())?;
    let turnover = turnover_forecast(&fm, &sol, &shares, &b).map_err(|e| e.to_string())?;
    let (pi, hw) = (frac.midpoint[0][0], frac.halfwidth[0][0]);
    Ok(json!({
        "merton_weight": pi,
        "halfwidth": hw,
        "lower": pi - hw,
        "upper": pi + hw,
        "ce_loss": welfare.ce_loss_fraction.unwrap_or(welfare.ce_loss),
        "share_turnover": turnover.relative_share_turnover,
        "wealth_turnover": turnover.relative_wealth_turnover,
    })
    .to_string())
}

/// Simulated versus predicted welfare loss and turnover.
pub fn monte_carlo(mu: f64, sigma: f64, gamma: f64, eta: f64, n_paths: usize, n_steps: usize, seed: u64) -> Result<String, String> {
    let r = run_frictional(&run(mu, sigma, gamma, eta, n_paths, n_steps, seed, 0)).map_err(|e| e.to_string())?;
    Ok(json!({
        "realized_loss": r.realized_ce_loss.value,
        "realized_loss_stderr": r.realized_ce_loss.stderr,
        "predicted_loss": r.predicted.ce_loss_fraction.unwrap_or(r.predicted.ce_loss),
        "realized_turnover": r.realized_turnover.absolute_share_turnover.value,
        "realized_turnover_stderr": r.realized_turnover.absolute_share_turnover.stderr,
        "predicted_turnover": r.predicted.absolute_share_turnover,
        "split_ratio": r.loss_direct_cost.value / r.loss_displacement.value,
    })
    .to_string())
}

/// One path of holdings against its band, as parallel arrays.
pub fn sample_path(mu: f64, sigma: f64, gamma: f64, eta: f64, n_steps: usize, seed: u64) -> Result<String, String> {
    let r = run_frictional(&run(mu, sigma, gamma, eta, 1, n_steps, seed, 1)).map_err(|e| e.to_string())?;
    let t: Vec<f64> = r.trace.iter().map(|p| p.t).collect();
    let price: Vec<f64> = r.trace.iter().map(|p| p.s).collect();
    let held: Vec<f64> = r.trace.iter().map(|p| p.phi_eps).collect();
    let lower: Vec<f64> = r.trace.iter().map(|p| p.nt_bar - p.delta_nt).collect();
    let upper: Vec<f64> = r.trace.iter().map(|p| p.nt_bar + p.delta_nt).collect();
    Ok(json!({ "t": t, "price": price, "held": held, "lower": lower, "upper": upper }).to_string())
}

#[wasm_bindgen(js_name = bandSummary)]
pub fn band_summary_js(mu: f64, sigma: f64, gamma: f64, eta: f64) -> Result<String, JsError> {
    band_summary(mu, sigma, gamma, eta).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = monteCarlo)]
pub fn monte_carlo_js(mu: f64, sigma: f64, gamma: f64, eta: f64, n_paths: usize, n_steps: usize, seed: u32) -> Result<String, JsError> {
    monte_carlo(mu, sigma, gamma, eta, n_paths, n_steps, seed as u64).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = samplePath)]
pub fn sample_path_js(mu: f64, sigma: f64, gamma: f64, eta: f64, n_steps: usize, seed: u32) -> Result<String, JsError> {
    sample_path(mu, sigma, gamma, eta, n_steps, seed as u64).map_err(|e| JsError::new(&e))
}
