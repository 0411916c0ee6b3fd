//! Closed-form interacting response matrices `K^ν(q)` and the linear response profile they generate.
//!
//! `v` is the diagonal of renormalized Fermi velocities, `Λ` the symmetric zero-diagonal coupling
//! matrix, `a = θ/η`. Diagonal matrix functions (`|v|`, `sgn v`) act entrywise.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;
use thiserror::Error;

use crate::linalg::{self, c, CMat, C64, I};
use crate::quadrature::{integrate, QuadratureError};

#[derive(Debug, Error)]
pub enum ResponseError {
    #[error("invalid response parameters: {0}")]
    InvalidInput(String),
    #[error("||Lambda|| / (4 pi min|v|) = {0} is not below 1")]
    OutsideRegime(f64),
    #[error("T-matrix inverse is near singular (condition number {0:e})")]
    NearSingularT(f64),
    #[error("vertex relation is near singular (condition number {0:e})")]
    NearSingular(f64),
    #[error(transparent)]
    QuadratureFailure(#[from] QuadratureError),
}

const COND_LIMIT: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMatrixSet {
    pub v: Vec<f64>,
    pub lambda: DMatrix<f64>,
    pub a: f64,
    pub z: Vec<f64>,
}

impl ResponseMatrixSet {
    pub fn new(v: Vec<f64>, lambda: DMatrix<f64>, a: f64, z: Vec<f64>) -> Result<Self, ResponseError> {
        let n = v.len();
        if n == 0 {
            return Err(ResponseError::InvalidInput("no chiralities".into()));
        }
        if lambda.nrows() != n || lambda.ncols() != n || z.len() != n {
            return Err(ResponseError::InvalidInput(format!("v has {n} entries, Lambda is {}x{}, Z has {}", lambda.nrows(), lambda.ncols(), z.len())));
        }
        if let Some(w) = v.iter().position(|x| *x == 0.0 || !x.is_finite()) {
            return Err(ResponseError::InvalidInput(format!("v[{w}] = {}", v[w])));
        }
        if let Some(w) = z.iter().position(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(ResponseError::InvalidInput(format!("Z[{w}] = {}", z[w])));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(ResponseError::InvalidInput(format!("a = {a}")));
        }
        for i in 0..n {
            if lambda[(i, i)] != 0.0 {
                return Err(ResponseError::InvalidInput(format!("Lambda[{i}][{i}] = {} must vanish", lambda[(i, i)])));
            }
            for j in 0..i {
                if lambda[(i, j)] != lambda[(j, i)] {
                    return Err(ResponseError::InvalidInput(format!("Lambda not symmetric at ({i}, {j})")));
                }
            }
        }
        let set = Self { v, lambda, a, z };
        let ratio = linalg::op_norm(&set.lambda_c()) / (4.0 * PI * set.v.iter().fold(f64::INFINITY, |m, x| m.min(x.abs())));
        if ratio >= 1.0 {
            return Err(ResponseError::OutsideRegime(ratio));
        }
        Ok(set)
    }

    /// `Λ_{ωω'} = λ` off the diagonal, `Z = 1`.
    pub fn uniform(v: Vec<f64>, lambda: f64, a: f64) -> Result<Self, ResponseError> {
        let n = v.len();
        let lam = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { lambda });
        Self::new(v, lam, a, vec![1.0; n])
    }

    pub fn chiralities(&self) -> usize {
        self.v.len()
    }

    fn lambda_c(&self) -> CMat {
        self.lambda.map(|x| c(x, 0.0))
    }

    fn diag(&self, f: impl Fn(usize, f64) -> C64) -> CMat {
        let n = self.v.len();
        let mut d = CMat::zeros(n, n);
        for (i, &v) in self.v.iter().enumerate() {
            d[(i, i)] = f(i, v);
        }
        d
    }

    /// `(4π|v|)^{-1} Λ`.
    fn scaled_lambda(&self) -> CMat {
        self.diag(|_, v| c(1.0 / (4.0 * PI * v.abs()), 0.0)) * self.lambda_c()
    }

    /// `(1 - Λ/4π|v|)(1 + ((i/a+vq)/(-i/a+vq)) Λ/4π|v|)^{-1}`.
    pub fn k_tilde(&self, q: f64) -> Result<CMat, ResponseError> {
        let n = self.v.len();
        let one = CMat::identity(n, n);
        let x = self.scaled_lambda();
        let ratio = self.diag(|_, v| (I / self.a + v * q) / (-I / self.a + v * q));
        let t = &one + ratio * &x;
        let cond = linalg::condition_number(&t);
        if !(cond <= COND_LIMIT) {
            return Err(ResponseError::NearSingularT(cond));
        }
        let inv = t.try_inverse().ok_or(ResponseError::NearSingularT(f64::INFINITY))?;
        Ok((one - x) * inv)
    }

    /// `𝔎^0 = 1`, `𝔎^1 = sgn v (1 + Λ/4π|v|)(1 - Λ/4π|v|)^{-1} sgn v`.
    pub fn frak_k(&self, nu: usize) -> Result<CMat, ResponseError> {
        let n = self.v.len();
        let one = CMat::identity(n, n);
        if nu == 0 {
            return Ok(one);
        }
        let x = self.scaled_lambda();
        let den = &one - &x;
        let cond = linalg::condition_number(&den);
        if !(cond <= COND_LIMIT) {
            return Err(ResponseError::NearSingular(cond));
        }
        let sgn = self.diag(|_, v| c(v.signum(), 0.0));
        Ok(&sgn * (&one + x) * den.try_inverse().ok_or(ResponseError::NearSingular(f64::INFINITY))? * sgn)
    }

    /// `K^ν(q) = K̃(q) (v^ν / 2π|v|) (vq / (-i/a + vq)) 𝔎^ν`.
    pub fn k_nu(&self, q: f64, nu: usize) -> Result<CMat, ResponseError> {
        if nu > 1 {
            return Err(ResponseError::InvalidInput(format!("nu = {nu}")));
        }
        let d = self.diag(|_, v| {
            let vnu = if nu == 0 { 1.0 } else { v };
            c(vnu / (2.0 * PI * v.abs()), 0.0) * (v * q) / (-I / self.a + v * q)
        });
        Ok(self.k_tilde(q)? * d * self.frak_k(nu)?)
    }

    /// `(1⃗, K^ν(q) 1⃗)`.
    pub fn entry_sum(&self, q: f64, nu: usize) -> Result<C64, ResponseError> {
        Ok(self.k_nu(q, nu)?.iter().sum())
    }

    /// `-∫ μ̂(q) e^{iθqx} (1⃗, K^ν(q) 1⃗) dq/2π` over the support `[lo, hi]` of `μ̂`.
    pub fn chi_lin(&self, x: f64, theta: f64, nu: usize, mu_hat: impl Fn(f64) -> f64, support: (f64, f64), tol: f64) -> Result<ChiLin, ResponseError> {
        // validate once so the integrand cannot fail
        self.k_nu(0.5 * (support.0 + support.1), nu)?;
        let f = |q: f64| {
            let m = mu_hat(q);
            if m == 0.0 {
                return C64::new(0.0, 0.0);
            }
            let s = self.entry_sum(q, nu).unwrap_or(C64::new(f64::NAN, f64::NAN));
            C64::from_polar(m, theta * q * x) * s
        };
        let res = integrate(f, support.0, support.1, tol * 2.0 * PI, 20_000)?;
        let v = -res.value / (2.0 * PI);
        Ok(ChiLin { value: v.re, imaginary: v.im, error: res.error / (2.0 * PI) })
    }

    /// `Z⃗^{μ} = [1 - (-1)^μ Λ_Z^T (4π|v|)^{-1}] v_μ Z⃗` with `Λ_Z = Z^{-1} Λ Z`.
    pub fn vertex_renormalizations(&self) -> Result<(Vec<f64>, Vec<f64>), ResponseError> {
        let n = self.v.len();
        let lz = DMatrix::from_fn(n, n, |i, j| self.lambda[(i, j)] * self.z[j] / self.z[i]);
        let m = lz.transpose() * DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 / (4.0 * PI * self.v[i].abs()) } else { 0.0 });
        let one = DMatrix::<f64>::identity(n, n);
        for sign in [1.0, -1.0] {
            let t = &one - &m * sign;
            let cond = linalg::condition_number(&t.map(|x| c(x, 0.0)));
            if !(cond <= COND_LIMIT) {
                return Err(ResponseError::NearSingular(cond));
            }
        }
        let zvec = nalgebra::DVector::from_column_slice(&self.z);
        let vz = nalgebra::DVector::from_fn(n, |i, _| self.v[i] * self.z[i]);
        let z0 = (&one - &m) * zvec;
        let z1 = (&one + &m) * vz;
        Ok((z0.iter().copied().collect(), z1.iter().copied().collect()))
    }
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct ChiLin {
    pub value: f64,
    /// Should vanish for real profiles.
    pub imaginary: f64,
    pub error: f64,
}

/// `(Σ K⁰, Σ K¹)` for `v = v*σ₃`, `Λ = λ*σ₁` in closed form.
pub fn two_chirality_closed_forms(v_star: f64, lambda_star: f64, q: f64, a: f64) -> Result<(f64, C64), ResponseError> {
    if !(v_star > 0.0) || !(a > 0.0) {
        return Err(ResponseError::InvalidInput(format!("v* = {v_star}, a = {a}")));
    }
    if lambda_star.abs() >= 4.0 * PI * v_star {
        return Err(ResponseError::OutsideRegime(lambda_star.abs() / (4.0 * PI * v_star)));
    }
    let r = (4.0 * PI * v_star - lambda_star) / (4.0 * PI * v_star + lambda_star);
    let vq = v_star * a * q;
    let den = 1.0 + vq * vq;
    let k0 = r * vq * vq / (den * PI * v_star);
    let k1 = I * (r * vq / (den * PI));
    Ok((k0, k1))
}
