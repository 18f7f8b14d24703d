use notrade_core::frictionless::bsde_residual;
use notrade_core::stats::mean_stderr;
use notrade_core::{
    simulate_paths, solve_frictionless, FrictionlessModel, MarketModel, PathGrid, Preferences, SpreadModel,
};

fn bs() -> MarketModel {
    MarketModel::black_scholes(0.08, 0.2, 1.0)
}

fn within(mean: f64, se: f64, target: f64, k: f64) -> bool {
    (mean - target).abs() <= k * se
}

#[test]
fn log_price_is_gaussian_with_drift() {
    let grid = PathGrid::new(2.0, 50, 20_000, 1);
    let b = simulate_paths(bs(), SpreadModel::proportional(0.0), grid).unwrap();
    let logs: Vec<f64> = b.paths.iter().map(|p| p.mid_price.last().unwrap().ln()).collect();
    let (m, se) = mean_stderr(&logs);
    // Simple returns are exact lognormal steps with excess return mu.
    let target = (0.08 - 0.5 * 0.04) * 2.0;
    assert!(within(m, se, target, 4.0), "{m} +/- {se} vs {target}");
    let var = logs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (logs.len() - 1) as f64;
    assert!((var / (0.04 * 2.0) - 1.0).abs() < 0.04, "{var}");
}

#[test]
fn pricing_density_is_a_martingale_and_prices_the_stock() {
    let model = bs();
    let grid = PathGrid::new(1.0, 200, 20_000, 2);
    let b = simulate_paths(model, SpreadModel::proportional(0.0), grid).unwrap();
    let sol = solve_frictionless(model, Preferences::power(5.0), &b, 1.0).unwrap();
    let z: Vec<f64> = sol.paths.iter().map(|s| *s.q_density.last().unwrap()).collect();
    let (mz, sz) = mean_stderr(&z);
    assert!(within(mz, sz, 1.0, 4.0), "E[Z_T] = {mz} +/- {sz}");
    let zs: Vec<f64> = sol
        .paths
        .iter()
        .zip(&b.paths)
        .map(|(s, p)| s.q_density.last().unwrap() * p.mid_price.last().unwrap())
        .collect();
    let (m, se) = mean_stderr(&zs);
    assert!(within(m, se, 1.0, 4.0), "E[Z_T S_T] = {m} +/- {se}");
}

#[test]
fn drift_factor_has_ou_variance() {
    let (kappa, nu) = (2.0, 0.05);
    let model = MarketModel::mean_reverting(0.04, 0.2, kappa, nu, 0.3, 1.0);
    let horizon = 1.5;
    let b = simulate_paths(model, SpreadModel::proportional(0.0), PathGrid::new(horizon, 30, 20_000, 3)).unwrap();
    let last: Vec<f64> = b.paths.iter().map(|p| *p.factor.last().unwrap()).collect();
    let (m, se) = mean_stderr(&last);
    assert!(within(m, se, 0.04, 4.0));
    let var = last.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (last.len() - 1) as f64;
    let target = nu * nu / (2.0 * kappa) * (1.0 - (-2.0 * kappa * horizon).exp());
    assert!((var / target - 1.0).abs() < 0.04, "{var} vs {target}");
}

#[test]
fn crra_solution_is_homothetic_in_wealth() {
    let model = bs();
    let b = simulate_paths(model, SpreadModel::proportional(0.01), PathGrid::new(1.0, 100, 20, 4)).unwrap();
    let pref = Preferences::power(3.0).with_consumption(0.5, 0.03);
    let one = solve_frictionless(model, pref, &b, 1.0).unwrap();
    let three = solve_frictionless(model, pref, &b, 3.0).unwrap();
    for (a, c) in one.paths.iter().zip(&three.paths) {
        for k in 0..a.wealth.len() {
            assert!((c.wealth[k] - 3.0 * a.wealth[k]).abs() < 1e-12 * c.wealth[k].abs());
            assert!((c.shares[k] - 3.0 * a.shares[k]).abs() < 1e-12 * c.shares[k].abs().max(1.0));
            assert!((c.risky_weight[k] - a.risky_weight[k]).abs() < 1e-14);
            assert!((c.indirect_risk_tolerance[k] - 3.0 * a.indirect_risk_tolerance[k]).abs() < 1e-12);
        }
    }
}

#[test]
fn risk_tolerance_matches_finite_differences_of_value() {
    let cases = [
        (bs(), Preferences::power(5.0), 1.0),
        (bs(), Preferences::power(2.0).with_consumption(0.3, 0.05), 2.0),
        (bs(), Preferences::log(), 1.0),
        (bs(), Preferences::exponential(2.0, 3.0).with_consumption(1.0, 0.0), 0.5),
        (bs(), Preferences::exponential(2.0, 3.0), 0.5),
        (bs(), Preferences::quadratic(), -1.0),
    ];
    for (model, pref, x0) in cases {
        let fm = FrictionlessModel::new(model, pref, x0, 1.0).unwrap();
        let h = 1e-3 * x0.abs();
        let d1 = (fm.indirect_utility(x0 + h).unwrap() - fm.indirect_utility(x0 - h).unwrap()) / (2.0 * h);
        let d2 = (fm.indirect_utility(x0 + h).unwrap() - 2.0 * fm.indirect_utility(x0).unwrap()
            + fm.indirect_utility(x0 - h).unwrap())
            / (h * h);
        let r_fd = -d1 / d2;
        let r = fm.indirect_risk_tolerance_at_zero();
        assert!((r_fd / r - 1.0).abs() < 1e-5, "{}: {r_fd} vs {r}", pref.name());
    }
}

#[test]
fn bsde_residual_is_small_for_every_supported_pair() {
    let mrd = MarketModel::mean_reverting(0.02, 0.2, 2.0, 0.02, -0.5, 1.0);
    let cases = [
        (bs(), Preferences::power(5.0), 1.0),
        (bs(), Preferences::power(5.0).with_consumption(0.2, 0.0), 1.0),
        (bs(), Preferences::log(), 1.0),
        (bs(), Preferences::log().with_consumption(0.2, 0.1), 1.0),
        (bs(), Preferences::exponential(2.0, 3.0), 1.0),
        (bs(), Preferences::exponential(2.0, 3.0).with_consumption(1.0, 0.1), 1.0),
        (bs(), Preferences::quadratic(), -1.0),
        (mrd, Preferences::log(), 1.0),
    ];
    for n_steps in [200usize, 800] {
        let dt = 1.0 / n_steps as f64;
        for (model, pref, x0) in cases {
            let b = simulate_paths(model, SpreadModel::proportional(0.0), PathGrid::new(1.0, n_steps, 50, 6)).unwrap();
            let fm = FrictionlessModel::new(model, pref, x0, 1.0).unwrap();
            let sol = solve_frictionless(model, pref, &b, x0).unwrap();
            let r = bsde_residual(&fm, &b, &sol).unwrap();
            assert!(r.max_residual < 5.0 * dt, "{} {:?}: {r:?}", pref.name(), model.kind);
            assert!(r.terminal_error <= 1e-12 * x0.abs().max(1.0), "{r:?}");
        }
    }
}

#[test]
fn unsupported_pairs_are_rejected() {
    let mrd = MarketModel::mean_reverting(0.02, 0.2, 2.0, 0.02, 0.0, 1.0);
    for pref in [Preferences::power(5.0), Preferences::exponential(1.0, 1.0), Preferences::quadratic()] {
        assert!(FrictionlessModel::new(mrd, pref, 1.0, 1.0).is_err(), "{}", pref.name());
    }
}
