//! Real-time evolution of the Gibbs state under `H + e^{ηt} P` in Fock space.

use super::{BlockOp, EdError, ManyBodyEnsemble};
use crate::linalg::{self, c, CMat, C64};

pub const MAX_DYNAMICS_MODES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsOptions {
    pub dt: f64,
    pub dt_min: f64,
    /// Step-doubling tolerance on the sector propagators (max entry).
    pub tol: f64,
    pub defect_limit: f64,
}

impl Default for DynamicsOptions {
    fn default() -> Self {
        Self { dt: 0.25, dt_min: 1e-6, tol: 1e-12, defect_limit: 1e-8 }
    }
}

/// Fourth-order commutator-free Magnus weights and nodes.
pub(crate) fn cf4_coefficients() -> ([f64; 2], [f64; 2]) {
    let s3 = 3f64.sqrt();
    ([(3.0 - 2.0 * s3) / 12.0, (3.0 + 2.0 * s3) / 12.0], [0.5 - s3 / 6.0, 0.5 + s3 / 6.0])
}

/// Start time with `e^{η t0} θ max|μ| = 1e-8`, never positive.
pub fn start_time(eta: f64, theta: f64, max_mu: f64) -> f64 {
    let amp = (theta * max_mu).abs();
    if amp == 0.0 {
        return 0.0;
    }
    ((1e-8 / amp).ln() / eta).min(0.0)
}

fn sector_exp(h: &CMat, p: &CMat, coeff: f64, dt: f64) -> Result<CMat, EdError> {
    let a = h * c(0.5, 0.0) + p * c(coeff, 0.0);
    let e = linalg::eigh(&a).ok_or(EdError::InvalidParameter("eigen-solver failed in propagator".into()))?;
    Ok(linalg::expm_from_eigh(&e, dt))
}

fn cf4_step(h: &BlockOp, p: &BlockOp, eta: f64, t: f64, dt: f64) -> Result<Vec<CMat>, EdError> {
    let (alpha, nodes) = cf4_coefficients();
    let r1 = (eta * (t + nodes[0] * dt)).exp();
    let r2 = (eta * (t + nodes[1] * dt)).exp();
    let right = alpha[1] * r1 + alpha[0] * r2;
    let left = alpha[0] * r1 + alpha[1] * r2;
    h.blocks
        .iter()
        .zip(&p.blocks)
        .map(|(hb, pb)| Ok(sector_exp(hb, pb, left, dt)? * sector_exp(hb, pb, right, dt)?))
        .collect()
}

/// `(⟨j_{ν,x}⟩_{ρ(0)} - ⟨j_{ν,x}⟩_{eq}) / θ` for every site `x`, with `P = θ Σ_x μ_x n_x` ramped in as `e^{ηt}`.
pub fn full_response_small(ens: &ManyBodyEnsemble, eta: f64, theta: f64, mu_profile: &[f64], nu: usize, opts: &DynamicsOptions) -> Result<Vec<f64>, EdError> {
    if ens.modes() > MAX_DYNAMICS_MODES {
        return Err(EdError::DimensionTooLarge { modes: ens.modes(), max: MAX_DYNAMICS_MODES });
    }
    if !(eta > 0.0) {
        return Err(EdError::InvalidParameter(format!("eta = {eta}")));
    }
    if mu_profile.len() != ens.l {
        return Err(EdError::InvalidParameter(format!("profile has {} sites, chain has {}", mu_profile.len(), ens.l)));
    }
    if theta == 0.0 {
        return Ok(vec![0.0; ens.l]);
    }
    let v: Vec<f64> = mu_profile.iter().map(|m| theta * m).collect();
    let p = ens.site_potential(&v);
    let h = &ens.hamiltonian;
    let max_mu = mu_profile.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    let mut t = start_time(eta, theta, max_mu);
    let mut u: Vec<CMat> = h.blocks.iter().map(|b| CMat::identity(b.nrows(), b.nrows())).collect();
    let mut dt = opts.dt;
    while t < 0.0 {
        let step = dt.min(-t);
        let full = cf4_step(h, &p, eta, t, step)?;
        let a = cf4_step(h, &p, eta, t, 0.5 * step)?;
        let b = cf4_step(h, &p, eta, t + 0.5 * step, 0.5 * step)?;
        let half: Vec<CMat> = b.iter().zip(&a).map(|(b, a)| b * a).collect();
        let err = full.iter().zip(&half).map(|(f, h)| linalg::max_abs(&(f - h))).fold(0.0, f64::max);
        if err <= opts.tol || step <= opts.dt_min {
            u = half.iter().zip(&u).map(|(s, u)| s * u).collect();
            t += step;
            if err < opts.tol / 32.0 {
                dt = (2.0 * dt).min(opts.dt.max(step));
            }
        } else {
            dt = 0.5 * step;
            if dt < opts.dt_min {
                return Err(EdError::StepControlFailure { defect: err, limit: opts.tol });
            }
        }
    }
    let defect = u.iter().map(linalg::isometry_defect).fold(0.0, f64::max);
    if defect > opts.defect_limit {
        return Err(EdError::StepControlFailure { defect, limit: opts.defect_limit });
    }
    let weights = ens.weights();
    let mut rho_eq = Vec::with_capacity(u.len());
    for (n, w) in weights.iter().enumerate() {
        let vecs = &ens.vectors[n];
        let mut scaled = vecs.clone();
        for (j, &wj) in w.iter().enumerate() {
            for i in 0..scaled.nrows() {
                scaled[(i, j)] *= wj;
            }
        }
        rho_eq.push(scaled * vecs.adjoint());
    }
    let rho_t: Vec<CMat> = rho_eq.iter().zip(&u).map(|(r, u)| u * r * u.adjoint()).collect();
    let mut out = Vec::with_capacity(ens.l);
    for x in 0..ens.l {
        let j = ens.current(nu, x);
        let mut d = C64::new(0.0, 0.0);
        for n in 0..j.blocks.len() {
            d += (&j.blocks[n] * (&rho_t[n] - &rho_eq[n])).trace();
        }
        out.push(d.re / theta);
    }
    Ok(out)
}
