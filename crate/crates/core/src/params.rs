//! Model parameters and the closed-form limits they determine.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The five scalars that fix the law of the model.
///
/// The spontaneous rate is parameterized as `beta = mu / lambda` so that the
/// admissible range of `beta` does not depend on `lambda`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    n: usize,
    r_plus: f64,
    beta: f64,
    lambda: f64,
    p: f64,
}

/// Unvalidated wire form of [`ModelParams`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RawParams {
    #[serde(alias = "n_components", alias = "N")]
    pub n: usize,
    pub r_plus: f64,
    pub beta: f64,
    pub lambda: f64,
    pub p: f64,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        ModelParams::new(raw.n, raw.r_plus, raw.beta, raw.lambda, raw.p)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams { n: p.n, r_plus: p.r_plus, beta: p.beta, lambda: p.lambda, p: p.p }
    }
}

fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParam { field, reason: reason.into() }
}

fn check_open_unit(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} is not in (0, 1)")))
    }
}

fn check_closed_unit(field: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(invalid(field, format!("{v} is not in [0, 1]")))
    }
}

/// Names accepted by [`ModelParams::with`].
pub const SWEEPABLE: [&str; 5] = ["n", "r_plus", "beta", "lambda", "p"];

impl ModelParams {
    pub fn new(n: usize, r_plus: f64, beta: f64, lambda: f64, p: f64) -> Result<Self> {
        if n == 0 {
            return Err(invalid("n", "must be a positive integer"));
        }
        check_open_unit("r_plus", r_plus)?;
        check_closed_unit("beta", beta)?;
        check_open_unit("lambda", lambda)?;
        check_closed_unit("p", p)?;
        Ok(ModelParams { n, r_plus, beta, lambda, p })
    }

    /// N = 50, r₊ = .5, β = .5, λ = .5, p = .5.
    pub fn defaults() -> Self {
        ModelParams { n: 50, r_plus: 0.5, beta: 0.5, lambda: 0.5, p: 0.5 }
    }

    pub fn n(&self) -> usize {
        self.n
    }
    pub fn r_plus(&self) -> f64 {
        self.r_plus
    }
    pub fn r_minus(&self) -> f64 {
        1.0 - self.r_plus
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn mu(&self) -> f64 {
        self.lambda * self.beta
    }

    /// Copy with one named parameter replaced, re-validated.
    pub fn with(&self, name: &str, value: f64) -> Result<Self> {
        let mut raw = RawParams::from(*self);
        match name {
            "n" | "N" => {
                if value < 1.0 || value.fract() != 0.0 {
                    return Err(invalid("n", format!("{value} is not a positive integer")));
                }
                raw.n = value as usize;
            }
            "r_plus" => raw.r_plus = value,
            "beta" => raw.beta = value,
            "lambda" => raw.lambda = value,
            "p" => raw.p = value,
            other => return Err(Error::UnknownParameter(other.to_string())),
        }
        ModelParams::try_from(raw)
    }

    pub fn with_n(&self, n: usize) -> Result<Self> {
        ModelParams::new(n, self.r_plus, self.beta, self.lambda, self.p)
    }

    /// Size of the excitatory community, `ceil(r₊ N)`.
    ///
    /// Products that land within rounding error of an integer are snapped to
    /// it first, so `r₊ = .3, N = 10` gives 3 rather than 4.
    pub fn plus_count(&self) -> usize {
        let x = self.r_plus * self.n as f64;
        let snapped = x.round();
        let k = if (x - snapped).abs() <= 1e-9 * snapped.max(1.0) { snapped } else { x.ceil() };
        (k as usize).min(self.n)
    }

    /// Default burn-in: smallest B with N (1-λ)^B ≤ 1e-6.
    pub fn default_burn_in(&self) -> usize {
        burn_in_for(self.n, self.lambda, 1e-6)
    }
}

/// `ceil((ln N + ln(1/eps)) / ln(1/(1-λ)))`, at least 1.
pub fn burn_in_for(n: usize, lambda: f64, eps: f64) -> usize {
    let num = (n.max(1) as f64).ln() + (1.0 / eps).ln();
    let den = (1.0 / (1.0 - lambda)).ln();
    ((num / den).ceil() as usize).max(1)
}

/// Large-N limits of the model quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoreticalConstants {
    /// Limit of the spatio-temporal mean activity.
    pub m: f64,
    /// Slope of the lag-one covariance in the signed matrix, (1-λ) m (1-m).
    pub c1: f64,
    /// Coefficient of the common J/N bias term of the lag-one covariance.
    pub c2: f64,
    pub sigma_plus: f64,
    pub sigma_minus: f64,
    /// `sigma_plus - sigma_minus`, equal to 2 (1-λ) p m (1-m).
    pub separation: f64,
    /// Coefficient of a^N/N in the simultaneous covariance approximation.
    pub kappa: f64,
}

impl TheoreticalConstants {
    pub fn from_params(params: &ModelParams) -> Self {
        let lambda = params.lambda();
        let p = params.p();
        let mu = params.mu();
        let (rp, rm) = (params.r_plus(), params.r_minus());
        let dr = rp - rm;
        let q = 1.0 - lambda;

        let m = (mu + q * p * rm) / (1.0 - p * q * dr);
        let var = m * (1.0 - m);
        let denom = 1.0 - p * p * dr * dr;

        let c1 = q * var;
        let c2 = c1 * q * q * p.powi(3) * dr / denom;
        let shift = q * q * p * p * dr / denom;
        let scale = q * p * var;
        TheoreticalConstants {
            m,
            c1,
            c2,
            sigma_plus: scale * (shift + 1.0),
            sigma_minus: scale * (shift - 1.0),
            separation: 2.0 * scale,
            kappa: q * q * p * p * var / denom,
        }
    }
}
