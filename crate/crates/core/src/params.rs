//! Exponent tuples and the exponents derived from them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Validated exponent tuple `(n, p, q, alpha)` with `0 < q < p - 1` and
/// `0 < alpha * p < n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct Params {
    n: usize,
    p: f64,
    q: f64,
    alpha: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    n: usize,
    p: f64,
    q: f64,
    alpha: f64,
}

impl TryFrom<RawParams> for Params {
    type Error = Error;

    fn try_from(raw: RawParams) -> Result<Self> {
        make_params(raw.n, raw.p, raw.q, raw.alpha)
    }
}

impl From<Params> for RawParams {
    fn from(p: Params) -> Self {
        RawParams { n: p.n, p: p.p, q: p.q, alpha: p.alpha }
    }
}

pub fn make_params(n: usize, p: f64, q: f64, alpha: f64) -> Result<Params> {
    if n < 2 {
        return Err(Error::InvalidExponents(format!("dimension n = {n} must be at least 2")));
    }
    if !(p.is_finite() && q.is_finite() && alpha.is_finite()) {
        return Err(Error::InvalidExponents("exponents must be finite".into()));
    }
    if p <= 1.0 {
        return Err(Error::InvalidExponents(format!("p = {p} must exceed 1")));
    }
    if !(q > 0.0 && q < p - 1.0) {
        return Err(Error::InvalidExponents(format!("q = {q} must satisfy 0 < q < p - 1 = {}", p - 1.0)));
    }
    let ap = alpha * p;
    if !(ap > 0.0 && ap < n as f64) {
        return Err(Error::InvalidExponents(format!("alpha * p = {ap} must lie in (0, n = {n})")));
    }
    Ok(Params { n, p, q, alpha })
}

/// `(alpha, p)` of the k-Hessian operator in dimension `n`.
pub fn hessian_params(k: usize, n: usize) -> Result<(f64, f64)> {
    if k == 0 {
        return Err(Error::InvalidExponents("k must be at least 1".into()));
    }
    if 2 * k >= n {
        return Err(Error::InvalidExponents(format!("alpha * p = {} must be below n = {n}", 2 * k)));
    }
    let kf = k as f64;
    Ok((2.0 * kf / (kf + 1.0), kf + 1.0))
}

impl Params {
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn dim(&self) -> f64 {
        self.n as f64
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `(p-1)/(p-1-q)`: the power taking a Wolff potential to the scale of a solution.
    pub fn growth_exp(&self) -> f64 {
        (self.p - 1.0) / (self.p - 1.0 - self.q)
    }

    /// Gradient coefficient of the transformed equation, `q(p-1)/(p-1-q)`.
    pub fn riccati_b(&self) -> f64 {
        self.q * (self.p - 1.0) / (self.p - 1.0 - self.q)
    }

    /// Power of the embedding constant inside the intrinsic potential.
    pub fn kappa_exp(&self) -> f64 {
        self.q * (self.p - 1.0) / (self.p - 1.0 - self.q)
    }

    /// `(n - alpha p)/(p-1)`: decay exponent of the Wolff potential of a point mass.
    pub fn kernel_exp(&self) -> f64 {
        self.critical() / (self.p - 1.0)
    }

    /// `n - alpha p`.
    pub fn critical(&self) -> f64 {
        self.n as f64 - self.alpha * self.p
    }

    /// `1/(p-1)`.
    pub fn inv_p1(&self) -> f64 {
        1.0 / (self.p - 1.0)
    }
}
