//! Exact environment-conditional moments of the stationary chain.
//!
//! For a fixed environment the stationary mean solves a linear fixed point,
//! the simultaneous covariance solves a Stein-type matrix equation, and the
//! lag-one covariance follows from it by one matrix product. All three maps
//! are contractions (rates 1-λ and (1-λ)² in sup/max norm, since the induced
//! row-sum norm of Aᴺ is at most one), so plain iteration converges
//! geometrically. Cost is O(N³) per Stein iteration; this is a diagnostic
//! path, limited to moderate N.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use serde_json::{json, Value};

use crate::environment::Environment;
use crate::error::{Error, Result};
use crate::params::TheoreticalConstants;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const DEFAULT_MAX_ITER: usize = 10_000;
pub const DEFAULT_MAX_N: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub max_n: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        OracleOptions { tol: DEFAULT_TOL, max_iter: DEFAULT_MAX_ITER, max_n: DEFAULT_MAX_N }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint<T> {
    pub value: T,
    pub iterations: usize,
    /// Sup/max-norm size of the final update.
    pub increment: f64,
    /// Size of the first update, for convergence-speed bounds.
    pub first_increment: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleQuantities {
    pub mean_vec: DVector<f64>,
    pub var_vec: DVector<f64>,
    pub sigma0: DMatrix<f64>,
    pub sigma1: DMatrix<f64>,
    pub sigma_vec: DVector<f64>,
    /// Stein iterations used.
    pub iterations: usize,
    /// Final Stein increment.
    pub residual: f64,
}

fn sup_diff(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).fold(0.0, f64::max)
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParam { field: "tol", reason: format!("{tol} must be positive") })
    }
}

/// Iterate `y ↦ offset + q A y` from `offset` until the update is ≤ tol.
fn affine_fixed_point(
    a: &DMatrix<f64>,
    q: f64,
    offset: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint<DVector<f64>>> {
    let mut y = offset.clone();
    let mut first = None;
    for it in 1..=max_iter {
        let next = offset + (a * &y) * q;
        let inc = sup_diff(&next, &y);
        y = next;
        let first_inc = *first.get_or_insert(inc);
        if inc <= tol {
            return Ok(FixedPoint { value: y, iterations: it, increment: inc, first_increment: first_inc });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, increment: f64::NAN })
}

/// Stationary mean vector mᴺ = μ1 + (1-λ)(Aᴺmᴺ - Lᴺ'⁻).
pub fn solve_mean_vector(env: &Environment, tol: f64) -> Result<FixedPoint<DVector<f64>>> {
    check_tol(tol)?;
    let n = env.n();
    let q = 1.0 - env.params().lambda();
    let sums = env.row_col_sums();
    let offset = DVector::from_iterator(n, sums.row_minus.iter().map(|&l| env.params().mu() - q * l));
    affine_fixed_point(&env.signed_matrix(), q, &offset, tol, DEFAULT_MAX_ITER)
}

/// Same mean via `μ ℓᴺ + 1_{P₋} - ℓᴺ'⁻`, with ℓ's from their own fixed points.
pub fn mean_vector_via_resolvent(env: &Environment, tol: f64) -> Result<DVector<f64>> {
    check_tol(tol)?;
    let n = env.n();
    let q = 1.0 - env.params().lambda();
    let a = env.signed_matrix();
    let ones = DVector::from_element(n, 1.0);
    let minus = DVector::from_iterator(n, (0..n).map(|j| if env.layout().is_plus(j) { 0.0 } else { 1.0 }));
    let ell = affine_fixed_point(&a, q, &ones, tol, DEFAULT_MAX_ITER)?.value;
    let ell_minus = affine_fixed_point(&a, q, &minus, tol, DEFAULT_MAX_ITER)?.value;
    Ok(ell * env.params().mu() + &minus - ell_minus)
}

/// vᴺᵢ = mᴺᵢ(1 - mᴺᵢ).
pub fn variance_vector(mean_vec: &DVector<f64>) -> DVector<f64> {
    mean_vec.map(|m| m * (1.0 - m))
}

/// Solve Σ = (1-λ)² offdiag(A Σ Aᵀ) + diag(v) starting from diag(v).
pub fn solve_sigma0(
    env: &Environment,
    var_vec: &DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<FixedPoint<DMatrix<f64>>> {
    check_tol(tol)?;
    let n = env.n();
    if var_vec.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: var_vec.len() });
    }
    let q2 = (1.0 - env.params().lambda()).powi(2);
    let a = env.signed_matrix();
    let at = a.transpose();

    let mut s = DMatrix::from_diagonal(var_vec);
    let mut tmp = DMatrix::zeros(n, n);
    let mut next = DMatrix::zeros(n, n);
    let mut first = None;
    let mut inc = f64::INFINITY;
    for it in 1..=max_iter {
        tmp.gemm(1.0, &a, &s, 0.0);
        next.gemm(q2, &tmp, &at, 0.0);
        for i in 0..n {
            next[(i, i)] = var_vec[i];
            for j in 0..i {
                let sym = 0.5 * (next[(i, j)] + next[(j, i)]);
                next[(i, j)] = sym;
                next[(j, i)] = sym;
            }
        }
        inc = next.iter().zip(s.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut s, &mut next);
        let first_inc = *first.get_or_insert(inc);
        if inc <= tol {
            return Ok(FixedPoint { value: s, iterations: it, increment: inc, first_increment: first_inc });
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, increment: inc })
}

/// ‖Σ - (1-λ)² offdiag(AΣAᵀ) - diag(v)‖_max.
pub fn stein_residual(env: &Environment, sigma0: &DMatrix<f64>, var_vec: &DVector<f64>) -> f64 {
    let a = env.signed_matrix();
    let q2 = (1.0 - env.params().lambda()).powi(2);
    let mut rhs = (&a * sigma0 * a.transpose()) * q2;
    for i in 0..env.n() {
        rhs[(i, i)] = var_vec[i];
    }
    max_abs(&(sigma0 - rhs))
}

/// Σ⁽¹⁾ = (1-λ) Aᴺ Σ⁽⁰⁾.
pub fn sigma1_from_sigma0(env: &Environment, sigma0: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = env.n();
    if sigma0.nrows() != n || sigma0.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: sigma0.nrows().max(sigma0.ncols()) });
    }
    Ok((env.signed_matrix() * sigma0) * (1.0 - env.params().lambda()))
}

/// Column sums σᴺ = 1ᵀΣ⁽¹⁾.
pub fn sigma_vector(sigma1: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(sigma1.ncols(), sigma1.column_iter().map(|c| c.sum()))
}

impl OracleQuantities {
    pub fn compute(env: &Environment, opts: &OracleOptions) -> Result<Self> {
        if env.n() > opts.max_n {
            return Err(Error::InvalidParam {
                field: "n",
                reason: format!("{} exceeds the oracle limit {}", env.n(), opts.max_n),
            });
        }
        let mean_vec = solve_mean_vector(env, opts.tol)?.value;
        let var_vec = variance_vector(&mean_vec);
        let s0 = solve_sigma0(env, &var_vec, opts.tol, opts.max_iter)?;
        let sigma1 = sigma1_from_sigma0(env, &s0.value)?;
        let sigma_vec = sigma_vector(&sigma1);
        Ok(OracleQuantities {
            mean_vec,
            var_vec,
            sigma0: s0.value,
            sigma1,
            sigma_vec,
            iterations: s0.iterations,
            residual: s0.increment,
        })
    }

    pub fn to_json(&self, include_matrices: bool) -> Value {
        let vec = |v: &DVector<f64>| v.iter().copied().collect::<Vec<f64>>();
        let mat = |m: &DMatrix<f64>| m.row_iter().map(|r| r.iter().copied().collect::<Vec<f64>>()).collect::<Vec<_>>();
        let mut out = json!({
            "n": self.mean_vec.len(),
            "mean_vec": vec(&self.mean_vec),
            "var_vec": vec(&self.var_vec),
            "sigma_vec": vec(&self.sigma_vec),
            "iterations": self.iterations,
            "residual": self.residual,
        });
        if include_matrices {
            out["sigma0"] = json!(mat(&self.sigma0));
            out["sigma1"] = json!(mat(&self.sigma1));
        }
        out
    }
}

/// Distances between exact quantities and their large-N approximations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproximationResiduals {
    /// ‖Σ⁽¹⁾ - c₁(Aᴺ + b J/N)‖_max
    pub lag1_maxnorm: f64,
    /// ‖σᴺ - σ_limit‖_∞
    pub sigma_supnorm: f64,
    /// ‖Σ⁽⁰⁾ - (diag(vᴺ) + κ aᴺ/N)‖_max
    pub lag0_maxnorm: f64,
}

/// Limit vector with σ₊ on excitatory and σ₋ on inhibitory components.
pub fn sigma_limit_vector(env: &Environment, constants: &TheoreticalConstants) -> DVector<f64> {
    DVector::from_iterator(
        env.n(),
        (0..env.n()).map(|j| if env.layout().is_plus(j) { constants.sigma_plus } else { constants.sigma_minus }),
    )
}

pub fn approximation_residuals(
    env: &Environment,
    oq: &OracleQuantities,
    constants: &TheoreticalConstants,
) -> ApproximationResiduals {
    let n = env.n();
    let nf = n as f64;
    let a = env.signed_matrix();

    // c₂/N is the common shift; c₂ already carries the c₁ factor
    let shift = constants.c2 / nf;
    let lag1 = oq.sigma1.iter().zip(a.iter()).map(|(s, a)| (s - (constants.c1 * a + shift)).abs()).fold(0.0, f64::max);

    let sigma_err = sup_diff(&oq.sigma_vec, &sigma_limit_vector(env, constants));

    let mut lag0: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let approx = if i == j { oq.var_vec[i] } else { constants.kappa / nf };
            lag0 = lag0.max((oq.sigma0[(i, j)] - approx).abs());
        }
    }
    ApproximationResiduals { lag1_maxnorm: lag1, sigma_supnorm: sigma_err, lag0_maxnorm: lag0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvironmentDiagnostics {
    /// ‖Lᴺ - p(r₊ - r₋)1‖_∞
    pub l_err: f64,
    /// ‖Cᴺ - p(1_{P₊} - 1_{P₋})‖_∞
    pub c_err: f64,
    /// ‖vᴺ - m(1-m)1‖_∞
    pub v_err: f64,
}

pub fn environment_diagnostics(
    env: &Environment,
    var_vec: &DVector<f64>,
    constants: &TheoreticalConstants,
) -> EnvironmentDiagnostics {
    let params = env.params();
    let sums = env.row_col_sums();
    let row_limit = params.p() * (params.r_plus() - params.r_minus());
    let l_err = sums.row.iter().map(|l| (l - row_limit).abs()).fold(0.0, f64::max);
    let c_err =
        sums.col.iter().enumerate().map(|(j, c)| (c - params.p() * env.layout().sign(j)).abs()).fold(0.0, f64::max);
    let v_lim = constants.m * (1.0 - constants.m);
    let v_err = var_vec.iter().map(|v| (v - v_lim).abs()).fold(0.0, f64::max);
    EnvironmentDiagnostics { l_err, c_err, v_err }
}

pub const RESIDUAL_CSV_HEADER: &str =
    "n,seed,iterations,residual,lag1_maxnorm,sigma_supnorm,lag0_maxnorm,l_err,c_err,v_err";

pub fn residual_csv_row(
    env: &Environment,
    oq: &OracleQuantities,
    res: &ApproximationResiduals,
    diag: &EnvironmentDiagnostics,
) -> String {
    format!(
        "{},{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
        env.n(),
        env.seed(),
        oq.iterations,
        oq.residual,
        res.lag1_maxnorm,
        res.sigma_supnorm,
        res.lag0_maxnorm,
        diag.l_err,
        diag.c_err,
        diag.v_err
    )
}
