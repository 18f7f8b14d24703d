//! Asset-price and spread dynamics, and their discretized sample paths.
//!
//! Two price models are supported:
//!
//! * `BlackScholes`: `dS/S = mu dt + sigma dW`, stepped exactly in law on the grid.
//! * `MeanRevertingDrift`: `dS/S = m_t dt + sigma dW` with an Ornstein-Uhlenbeck drift
//!   factor `dm = kappa (mu - m) dt + nu dB`, `d<W, B> = rho dt`. The factor is stepped
//!   exactly, the price by log-Euler.
//!
//! Each path draws from its own ChaCha stream selected by `(seed, path_id)`, so a path is
//! reproducible on its own and results do not depend on path order or thread count.

use std::io::Write;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    BlackScholes,
    MeanRevertingDrift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketModel {
    pub kind: ModelKind,
    /// Constant excess return (Black-Scholes) or long-run mean of the drift factor.
    pub mu: f64,
    pub sigma: f64,
    pub kappa_factor: f64,
    pub nu_factor: f64,
    pub rho: f64,
    pub s0: f64,
}

impl MarketModel {
    pub fn black_scholes(mu: f64, sigma: f64, s0: f64) -> Self {
        MarketModel {
            kind: ModelKind::BlackScholes,
            mu,
            sigma,
            kappa_factor: 0.0,
            nu_factor: 0.0,
            rho: 0.0,
            s0,
        }
    }

    pub fn mean_reverting(mu: f64, sigma: f64, kappa: f64, nu: f64, rho: f64, s0: f64) -> Self {
        MarketModel {
            kind: ModelKind::MeanRevertingDrift,
            mu,
            sigma,
            kappa_factor: kappa,
            nu_factor: nu,
            rho,
            s0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::param("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::param("s0", format!("must be > 0, got {}", self.s0)));
        }
        if !self.mu.is_finite() {
            return Err(Error::param("mu", "must be finite"));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(Error::param("rho", format!("must lie in [-1, 1], got {}", self.rho)));
        }
        if !(self.kappa_factor >= 0.0) {
            return Err(Error::param("kappa_factor", "must be >= 0"));
        }
        if !(self.nu_factor >= 0.0) {
            return Err(Error::param("nu_factor", "must be >= 0"));
        }
        Ok(())
    }

    /// Instantaneous variance rate of the return process, `d<Y>/dt`.
    pub fn return_variance(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// `d<m>/dt` for the drift factor (zero for Black-Scholes).
    pub fn factor_variance(&self) -> f64 {
        match self.kind {
            ModelKind::BlackScholes => 0.0,
            ModelKind::MeanRevertingDrift => self.nu_factor * self.nu_factor,
        }
    }

    /// `d<m, Y>/dt`.
    pub fn factor_return_covariance(&self) -> f64 {
        match self.kind {
            ModelKind::BlackScholes => 0.0,
            ModelKind::MeanRevertingDrift => self.rho * self.nu_factor * self.sigma,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpreadMode {
    /// `eps_t = eta0 * S_t`.
    ProportionalConstant,
    /// `eps_t = eta0 * S_0` for all t.
    AbsoluteConstant,
    /// `eps_t = eta0 * S_t * exp(l_t)` with a mean-zero OU process `l`, `l_0 = 0`.
    ProportionalStochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpreadModel {
    pub mode: SpreadMode,
    /// Relative half-spread at time zero.
    pub eta0: f64,
    #[serde(default)]
    pub ou_speed: f64,
    #[serde(default)]
    pub ou_vol: f64,
}

impl SpreadModel {
    pub fn proportional(eta0: f64) -> Self {
        SpreadModel {
            mode: SpreadMode::ProportionalConstant,
            eta0,
            ou_speed: 0.0,
            ou_vol: 0.0,
        }
    }

    pub fn absolute(eta0: f64) -> Self {
        SpreadModel {
            mode: SpreadMode::AbsoluteConstant,
            eta0,
            ou_speed: 0.0,
            ou_vol: 0.0,
        }
    }

    pub fn with_eta(self, eta0: f64) -> Self {
        SpreadModel { eta0, ..self }
    }

    /// The small parameter scaling the spread.
    pub fn epsilon(&self, s0: f64) -> f64 {
        match self.mode {
            SpreadMode::AbsoluteConstant => self.eta0 * s0,
            _ => self.eta0,
        }
    }

    /// Half-spread at time zero.
    pub fn initial_halfwidth(&self, s0: f64) -> f64 {
        self.eta0 * s0
    }

    pub fn validate(&self, s0: f64) -> Result<()> {
        if !(self.eta0 >= 0.0 && self.eta0.is_finite()) {
            return Err(Error::param("eta0", format!("must be >= 0, got {}", self.eta0)));
        }
        if s0 - self.initial_halfwidth(s0) <= 0.0 {
            return Err(Error::param(
                "eta0",
                format!("bid price S0 - eps0 = {} is not positive", s0 - self.initial_halfwidth(s0)),
            ));
        }
        if !(self.ou_speed >= 0.0) || !(self.ou_vol >= 0.0) {
            return Err(Error::param("ou_speed/ou_vol", "must be >= 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
}

impl PathGrid {
    pub fn new(horizon: f64, n_steps: usize, n_paths: usize, seed: u64) -> Self {
        PathGrid {
            horizon,
            n_steps,
            n_paths,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param("horizon", format!("must be > 0, got {}", self.horizon)));
        }
        if self.n_steps == 0 {
            return Err(Error::param("n_steps", "must be >= 1"));
        }
        if self.n_paths == 0 {
            return Err(Error::param("n_paths", "must be >= 1"));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    pub fn times(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..=self.n_steps)
            .map(|k| if k == self.n_steps { self.horizon } else { k as f64 * dt })
            .collect()
    }
}

/// One simulated path. Grid-point series have `n_steps + 1` entries, increment series
/// `n_steps`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplePath {
    pub path_id: usize,
    pub mid_price: Vec<f64>,
    /// Drift factor `m_t` (constant `mu` under Black-Scholes).
    pub factor: Vec<f64>,
    pub spread_halfwidth: Vec<f64>,
    /// Simple returns `dY = S_{k+1}/S_k - 1`.
    pub return_increments: Vec<f64>,
    /// Brownian increments `dW` driving the price.
    pub brownian_increments: Vec<f64>,
}

impl SamplePath {
    pub fn n_steps(&self) -> usize {
        self.return_increments.len()
    }

    /// Relative half-spread `eta_t = eps_t / S_t`.
    pub fn relative_spread(&self, k: usize) -> f64 {
        self.spread_halfwidth[k] / self.mid_price[k]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathBundle {
    pub times: Vec<f64>,
    pub paths: Vec<SamplePath>,
}

impl PathBundle {
    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn horizon(&self) -> f64 {
        *self.times.last().unwrap()
    }

    /// Debug dump with columns `path_id,t,S,factor,eps`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "path_id,t,S,factor,eps")?;
        for p in &self.paths {
            for (k, t) in self.times.iter().enumerate() {
                writeln!(
                    out,
                    "{},{},{},{},{}",
                    p.path_id, t, p.mid_price[k], p.factor[k], p.spread_halfwidth[k]
                )?;
            }
        }
        Ok(())
    }
}

/// Standard normal shocks for one step: price, factor (independent part), spread.
pub type StepShocks = [f64; 3];

/// Validated (model, spread, grid) triple that produces paths on demand.
#[derive(Debug, Clone, Copy)]
pub struct PathGenerator {
    pub model: MarketModel,
    pub spread: SpreadModel,
    pub grid: PathGrid,
}

impl PathGenerator {
    pub fn new(model: MarketModel, spread: SpreadModel, grid: PathGrid) -> Result<Self> {
        model.validate()?;
        grid.validate()?;
        spread.validate(model.s0)?;
        Ok(PathGenerator {
            model,
            spread,
            grid,
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.grid.times()
    }

    fn rng(&self, path_id: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.grid.seed);
        rng.set_stream(path_id as u64);
        rng
    }

    /// Draws the shocks of one path in a fixed order.
    pub fn shocks(&self, path_id: usize) -> Vec<StepShocks> {
        let mut rng = self.rng(path_id);
        let needs_factor = self.model.kind == ModelKind::MeanRevertingDrift;
        let needs_spread = self.spread.mode == SpreadMode::ProportionalStochastic;
        (0..self.grid.n_steps)
            .map(|_| {
                let z1: f64 = StandardNormal.sample(&mut rng);
                let z2: f64 = if needs_factor { StandardNormal.sample(&mut rng) } else { 0.0 };
                let z3: f64 = if needs_spread { StandardNormal.sample(&mut rng) } else { 0.0 };
                [z1, z2, z3]
            })
            .collect()
    }

    pub fn path(&self, path_id: usize) -> Result<SamplePath> {
        let shocks = self.shocks(path_id);
        self.path_from_shocks(path_id, &shocks)
    }

    /// Builds a path from prescribed shocks (one entry per step).
    pub fn path_from_shocks(&self, path_id: usize, shocks: &[StepShocks]) -> Result<SamplePath> {
        let n = self.grid.n_steps;
        if shocks.len() != n {
            return Err(Error::param(
                "shocks",
                format!("expected {n} steps of shocks, got {}", shocks.len()),
            ));
        }
        let m = &self.model;
        let dt = self.grid.dt();
        let sqrt_dt = dt.sqrt();
        let var = m.sigma * m.sigma;

        let (decay, factor_sd) = ou_step(m.kappa_factor, m.nu_factor, dt);
        let (sp_decay, sp_sd) = ou_step(self.spread.ou_speed, self.spread.ou_vol, dt);
        let rho_perp = (1.0 - m.rho * m.rho).max(0.0).sqrt();

        let mut mid_price = Vec::with_capacity(n + 1);
        let mut factor = Vec::with_capacity(n + 1);
        let mut spread = Vec::with_capacity(n + 1);
        let mut return_increments = Vec::with_capacity(n);
        let mut brownian_increments = Vec::with_capacity(n);

        let mut s = m.s0;
        let mut f = m.mu;
        let mut log_mult = 0.0f64;
        let halfwidth = |s: f64, log_mult: f64| match self.spread.mode {
            SpreadMode::ProportionalConstant => self.spread.eta0 * s,
            SpreadMode::AbsoluteConstant => self.spread.eta0 * m.s0,
            SpreadMode::ProportionalStochastic => self.spread.eta0 * s * log_mult.exp(),
        };

        mid_price.push(s);
        factor.push(f);
        spread.push(halfwidth(s, log_mult));

        for (k, z) in shocks.iter().enumerate() {
            let dw = sqrt_dt * z[0];
            let log_step = (f - 0.5 * var) * dt + m.sigma * dw;
            let ret = log_step.exp_m1();
            s *= 1.0 + ret;
            if m.kind == ModelKind::MeanRevertingDrift {
                let zf = m.rho * z[0] + rho_perp * z[1];
                f = m.mu + (f - m.mu) * decay + factor_sd * zf;
            }
            if self.spread.mode == SpreadMode::ProportionalStochastic {
                log_mult = log_mult * sp_decay + sp_sd * z[2];
            }
            let eps = halfwidth(s, log_mult);
            if !(s > 0.0) || !(s - eps > 0.0) {
                return Err(Error::Numerical(format!(
                    "path {path_id}: bid price not positive at step {}",
                    k + 1
                )));
            }
            mid_price.push(s);
            factor.push(f);
            spread.push(eps);
            return_increments.push(ret);
            brownian_increments.push(dw);
        }

        Ok(SamplePath {
            path_id,
            mid_price,
            factor,
            spread_halfwidth: spread,
            return_increments,
            brownian_increments,
        })
    }
}

/// Exact OU transition over `dt`: (decay factor, conditional standard deviation).
fn ou_step(speed: f64, vol: f64, dt: f64) -> (f64, f64) {
    if speed > 0.0 {
        let decay = (-speed * dt).exp();
        let var = vol * vol * -(-2.0 * speed * dt).exp_m1() / (2.0 * speed);
        (decay, var.sqrt())
    } else {
        (1.0, vol * dt.sqrt())
    }
}

/// Generates every path of the grid. Output order is `path_id` order regardless of
/// the rayon pool size.
pub fn simulate_paths(model: MarketModel, spread: SpreadModel, grid: PathGrid) -> Result<PathBundle> {
    let gen = PathGenerator::new(model, spread, grid)?;
    let paths = (0..grid.n_paths)
        .into_par_iter()
        .map(|i| gen.path(i))
        .collect::<Result<Vec<_>>>()?;
    Ok(PathBundle {
        times: grid.times(),
        paths,
    })
}

/// Series whose local (co)variation rate can be queried.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Series {
    /// `c^S = d<S>/dt`.
    Price,
    /// `c^Y = d<Y>/dt`.
    Return,
    /// `d<m>/dt`.
    Factor,
    /// `d<m, Y>/dt`.
    FactorReturn,
}

impl FromStr for Series {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "S" | "price" => Ok(Series::Price),
            "Y" | "return" => Ok(Series::Return),
            "factor" => Ok(Series::Factor),
            "factor,Y" | "factor_return" => Ok(Series::FactorReturn),
            other => Err(Error::UnknownSeries(other.to_string())),
        }
    }
}

/// Model-implied (co)variation rate of `series` at every grid point of `path`.
pub fn quadratic_variation_rate(model: &MarketModel, path: &SamplePath, series: Series) -> Vec<f64> {
    let var = model.return_variance();
    match series {
        Series::Price => path.mid_price.iter().map(|s| var * s * s).collect(),
        Series::Return => vec![var; path.mid_price.len()],
        Series::Factor => vec![model.factor_variance(); path.mid_price.len()],
        Series::FactorReturn => vec![model.factor_return_covariance(); path.mid_price.len()],
    }
}

/// String-keyed variant of [`quadratic_variation_rate`].
pub fn quadratic_variation_rate_named(
    model: &MarketModel,
    path: &SamplePath,
    series: &str,
) -> Result<Vec<f64>> {
    Ok(quadratic_variation_rate(model, path, series.parse()?))
}
