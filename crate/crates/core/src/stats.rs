//! Small sample statistics shared by the estimators.

/// Sample mean and its standard error. Returns `(NaN, NaN)` for an empty slice and a
/// zero standard error for a single observation.
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Self-normalized weighted mean `sum w x / sum w` with a delta-method standard error.
pub fn weighted_mean_stderr(xs: &[f64], ws: &[f64]) -> (f64, f64) {
    let n = xs.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let wsum: f64 = ws.iter().sum();
    let mean = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / wsum;
    if n == 1 {
        return (mean, 0.0);
    }
    let wbar = wsum / n as f64;
    let s2 = xs
        .iter()
        .zip(ws)
        .map(|(x, w)| (w * (x - mean) / wbar).powi(2))
        .sum::<f64>()
        / (n - 1) as f64;
    (mean, (s2 / n as f64).sqrt())
}

/// Ordinary least squares `y = a + b x`; returns `(a, b, stderr_b)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let se = if x.len() > 2 {
        let rss: f64 = x.iter().zip(y).map(|(a0, b0)| (b0 - a - b * a0).powi(2)).sum();
        (rss / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (a, b, se)
}

/// Two-sided 95% Student-t quantile for `dof` degrees of freedom.
pub fn t_quantile_975(dof: usize) -> f64 {
    const TABLE: [f64; 10] = [12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228];
    match dof {
        0 => f64::INFINITY,
        1..=10 => TABLE[dof - 1],
        11..=20 => 2.15,
        21..=40 => 2.05,
        _ => 1.96,
    }
}

/// Trapezoid rule on a uniform grid.
pub fn trapezoid(ys: &[f64], dt: f64) -> f64 {
    if ys.len() < 2 {
        return 0.0;
    }
    let inner: f64 = ys[1..ys.len() - 1].iter().sum();
    dt * (inner + 0.5 * (ys[0] + ys[ys.len() - 1]))
}

/// Running sums for a mean and its standard error. Accumulated in path order so the
/// result does not depend on the thread count.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        self.n += 1;
        self.sum += x;
        self.sum_sq += x * x;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.sum / self.n as f64
        }
    }

    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    pub fn stderr(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            (self.variance() / self.n as f64).sqrt()
        }
    }
}

/// Online central moments up to fourth order, for Sharpe ratios of skewed samples.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShapeMoments {
    pub n: usize,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl ShapeMoments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.n as f64;
        self.n += 1;
        let n = self.n as f64;
        let d = x - self.mean;
        let dn = d / n;
        let dn2 = dn * dn;
        let t1 = d * dn * n1;
        self.mean += dn;
        self.m4 += t1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * self.m2 - 4.0 * dn * self.m3;
        self.m3 += t1 * dn * (n - 2.0) - 3.0 * dn * self.m2;
        self.m2 += t1;
    }

    pub fn mean(&self) -> f64 {
        if self.n == 0 {
            f64::NAN
        } else {
            self.mean
        }
    }

    pub fn std_dev(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            (self.m2 / (self.n as f64 - 1.0)).sqrt()
        }
    }

    /// Sample skewness `m3 / m2^(3/2)` (population normalization).
    pub fn skewness(&self) -> f64 {
        let n = self.n as f64;
        n.sqrt() * self.m3 / self.m2.powf(1.5)
    }

    /// Sample kurtosis `m4 / m2^2` (3 for a normal sample).
    pub fn kurtosis(&self) -> f64 {
        let n = self.n as f64;
        n * self.m4 / (self.m2 * self.m2)
    }

    /// `(mean - benchmark) / sd` with the delta-method standard error
    /// `sqrt((1 - SR skew + SR^2 (kurt - 1) / 4) / n)`, valid for non-normal samples.
    pub fn sharpe(&self, benchmark: f64) -> (f64, f64) {
        let sr = (self.mean() - benchmark) / self.std_dev();
        let v = 1.0 - sr * self.skewness() + 0.25 * sr * sr * (self.kurtosis() - 1.0);
        (sr, (v.max(0.0) / self.n as f64).sqrt())
    }
}

/// Running sums for a self-normalized weighted mean.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct WeightedMoments {
    pub n: usize,
    sw: f64,
    swx: f64,
    sw2: f64,
    sw2x: f64,
    sw2x2: f64,
}

impl WeightedMoments {
    pub fn push(&mut self, x: f64, w: f64) {
        self.n += 1;
        self.sw += w;
        self.swx += w * x;
        self.sw2 += w * w;
        self.sw2x += w * w * x;
        self.sw2x2 += w * w * x * x;
    }

    pub fn mean(&self) -> f64 {
        self.swx / self.sw
    }

    pub fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let m = self.mean();
        let n = self.n as f64;
        let wbar = self.sw / n;
        let ss = (self.sw2x2 - 2.0 * m * self.sw2x + m * m * self.sw2).max(0.0);
        (ss / (wbar * wbar) / (n - 1.0) / n).sqrt()
    }
}
