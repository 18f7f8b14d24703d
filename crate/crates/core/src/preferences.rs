//! Utility families with closed-form frictionless solutions.
//!
//! Consumption utilities carry an impatience weight `beta * exp(delta * tau)` where
//! `tau = T - t` is the remaining time, so every method takes `tau` rather than `t`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// `x^(1-gamma)/(1-gamma)`; `gamma == 1` is treated as `Log`.
    Power { gamma: f64 },
    Log,
    /// `-exp(-p x)` with absolute risk aversions `p1` (consumption) and `p2` (terminal).
    Exponential { p1: f64, p2: f64 },
    /// `-x^2`, used on the negative half-line below the bliss point.
    QuadraticTruncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilityKind {
    Consumption,
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preferences {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub delta: f64,
}

impl Preferences {
    pub fn power(gamma: f64) -> Self {
        Preferences {
            family: Family::Power { gamma },
            beta: 0.0,
            delta: 0.0,
        }
    }

    pub fn log() -> Self {
        Preferences {
            family: Family::Log,
            beta: 0.0,
            delta: 0.0,
        }
    }

    pub fn exponential(p1: f64, p2: f64) -> Self {
        Preferences {
            family: Family::Exponential { p1, p2 },
            beta: 0.0,
            delta: 0.0,
        }
    }

    pub fn quadratic() -> Self {
        Preferences {
            family: Family::QuadraticTruncated,
            beta: 0.0,
            delta: 0.0,
        }
    }

    /// Adds intermediate consumption. Ignored for the quadratic family, which never
    /// consumes.
    pub fn with_consumption(mut self, beta: f64, delta: f64) -> Self {
        if self.family != Family::QuadraticTruncated {
            self.beta = beta;
            self.delta = delta;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0) {
            return Err(Error::param("beta", "must be >= 0"));
        }
        if !(self.delta >= 0.0) {
            return Err(Error::param("delta", "must be >= 0"));
        }
        match self.family {
            Family::Power { gamma } if !(gamma > 0.0 && gamma.is_finite()) => {
                Err(Error::param("gamma", format!("must be > 0, got {gamma}")))
            }
            Family::Exponential { p1, p2 } if !(p1 > 0.0 && p2 > 0.0) => {
                Err(Error::param("p1/p2", "absolute risk aversions must be > 0"))
            }
            Family::QuadraticTruncated if self.beta != 0.0 => {
                Err(Error::param("beta", "quadratic utility carries no consumption"))
            }
            _ => Ok(()),
        }
    }

    /// Relative risk aversion for the power/log families.
    pub fn crra_gamma(&self) -> Option<f64> {
        match self.family {
            Family::Power { gamma } => Some(gamma),
            Family::Log => Some(1.0),
            _ => None,
        }
    }

    pub fn is_log(&self) -> bool {
        self.crra_gamma() == Some(1.0)
    }

    pub fn consumes(&self) -> bool {
        self.beta > 0.0 && self.family != Family::QuadraticTruncated
    }

    fn weight(&self, which: UtilityKind, tau: f64) -> f64 {
        match which {
            UtilityKind::Consumption => self.beta * (self.delta * tau).exp(),
            UtilityKind::Terminal => 1.0,
        }
    }

    fn check_domain(&self, x: f64) -> Result<()> {
        match self.family {
            Family::Power { .. } | Family::Log if !(x > 0.0) => {
                Err(Error::Domain(format!("power/log utility needs x > 0, got {x}")))
            }
            Family::QuadraticTruncated if !(x < 0.0) => Err(Error::Domain(format!(
                "quadratic utility is evaluated below the bliss point, got x = {x}"
            ))),
            _ => Ok(()),
        }
    }

    /// `u_1(t, x)` or `u_2(x)`.
    pub fn utility(&self, which: UtilityKind, tau: f64, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let w = self.weight(which, tau);
        let v = match self.family {
            Family::Log => x.ln(),
            Family::Power { gamma } if gamma == 1.0 => x.ln(),
            Family::Power { gamma } => x.powf(1.0 - gamma) / (1.0 - gamma),
            Family::Exponential { p1, p2 } => -(-self.aversion(which, p1, p2) * x).exp(),
            Family::QuadraticTruncated => -x * x,
        };
        Ok(w * v)
    }

    /// `u_1'(t, x)` or `u_2'(x)`.
    pub fn marginal_utility(&self, which: UtilityKind, tau: f64, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let w = self.weight(which, tau);
        let v = match self.family {
            Family::Log => 1.0 / x,
            Family::Power { gamma } => x.powf(-gamma),
            Family::Exponential { p1, p2 } => {
                let p = self.aversion(which, p1, p2);
                p * (-p * x).exp()
            }
            Family::QuadraticTruncated => -2.0 * x,
        };
        Ok(w * v)
    }

    /// Second derivative in wealth.
    pub fn utility_curvature(&self, which: UtilityKind, tau: f64, x: f64) -> Result<f64> {
        self.check_domain(x)?;
        let w = self.weight(which, tau);
        let v = match self.family {
            Family::Log => -1.0 / (x * x),
            Family::Power { gamma } => -gamma * x.powf(-gamma - 1.0),
            Family::Exponential { p1, p2 } => {
                let p = self.aversion(which, p1, p2);
                -p * p * (-p * x).exp()
            }
            Family::QuadraticTruncated => -2.0,
        };
        Ok(w * v)
    }

    fn aversion(&self, which: UtilityKind, p1: f64, p2: f64) -> f64 {
        match which {
            UtilityKind::Consumption => p1,
            UtilityKind::Terminal => p2,
        }
    }

    /// Risk tolerance `-u_1'/u_1''` of consumption utility at rate `kappa`.
    pub fn direct_risk_tolerance(&self, kappa: f64) -> Result<f64> {
        if !self.consumes() {
            return Ok(0.0);
        }
        match self.family {
            Family::Power { .. } | Family::Log => {
                if !(kappa > 0.0) {
                    return Err(Error::Domain(format!(
                        "consumption rate must be > 0 for power/log utility, got {kappa}"
                    )));
                }
                Ok(kappa / self.crra_gamma().unwrap())
            }
            Family::Exponential { p1, .. } => Ok(1.0 / p1),
            Family::QuadraticTruncated => Ok(0.0),
        }
    }

    /// Risk tolerance `-u_2'/u_2''` of terminal utility at wealth `x`.
    pub fn terminal_risk_tolerance(&self, x: f64) -> f64 {
        match self.family {
            Family::Power { .. } | Family::Log => x / self.crra_gamma().unwrap(),
            Family::Exponential { p2, .. } => 1.0 / p2,
            Family::QuadraticTruncated => -x,
        }
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Power { gamma } if gamma == 1.0 => "log",
            Family::Power { .. } => "power",
            Family::Log => "log",
            Family::Exponential { .. } => "exponential",
            Family::QuadraticTruncated => "quadratic_truncated",
        }
    }
}
