//! Quasi-free real-time evolution under `H + e^{ηt} θ Σ_x μ(θx) n_x` and the full-vs-Kubo comparison.
//!
//! The state is kept as `Γ = W diag(f) W^†` with `W` the (evolved) occupied eigenvectors of `h`;
//! columns evolve independently, so they are split across threads.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::exact_diag::dynamics::cf4_coefficients;
use crate::fit::{fit_power_law, LineFit};
use crate::free_theory::{fermi, matsubara_rate, FreeTheory, FreeTheoryError};
use crate::lattice_model::{LatticeModel, ModelError};
use crate::linalg::{self, c, CMat, SparseHermitian, C64};

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("quasi-free dynamics needs lambda = 0, got {0}")]
    Interacting(f64),
    #[error("unitarity defect {defect:e} exceeds {limit:e} after step halving")]
    StepControlFailure { defect: f64, limit: f64 },
    #[error("eigen-solver failed on the one-particle Hamiltonian")]
    EigenFailure,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    FreeTheory(#[from] FreeTheoryError),
}

/// `μ̂_∞(q) = exp(1 - 1/(1-q²))` on `|q| < 1`.
pub fn bump_fourier(q: f64) -> f64 {
    if q.abs() >= 1.0 {
        0.0
    } else {
        (1.0 - 1.0 / (1.0 - q * q)).exp()
    }
}

/// `μ(θx)` on `x = 0..L`, periodized: `|θ| μ(θx) = (1/L) Σ_{p ∈ (2π/L)ℤ} μ̂_∞(p/θ) e^{ipx}`.
pub fn periodized_bump(theta: f64, l: usize) -> Result<Vec<f64>, DynamicsError> {
    if theta == 0.0 || !theta.is_finite() {
        return Err(DynamicsError::InvalidParameter(format!("theta = {theta}")));
    }
    if l < 2 {
        return Err(ModelError::ChainTooShort(l).into());
    }
    let th = theta.abs();
    let step = 2.0 * PI / l as f64;
    let nmax = (th / step).ceil() as i64;
    let weights: Vec<(f64, f64)> = (-nmax..=nmax)
        .map(|n| n as f64 * step)
        .map(|p| (p, bump_fourier(p / th)))
        .filter(|&(_, w)| w > 0.0)
        .collect();
    Ok((0..l)
        .map(|x| {
            let v: f64 = weights.iter().map(|&(p, w)| w * (p * x as f64).cos()).sum();
            v / (l as f64 * th)
        })
        .collect())
}

/// `Γ_{xy} = ⟨a*_y a_x⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct OneParticleDensityMatrix {
    pub gamma: CMat,
    pub beta: f64,
    pub mu: f64,
}

impl OneParticleDensityMatrix {
    /// `(1 + e^{β(h-μ)})^{-1}` on the ring.
    pub fn equilibrium(model: &LatticeModel, l: usize, beta: f64) -> Result<Self, DynamicsError> {
        let occ = Occupied::equilibrium(model, l, beta, 0.0)?;
        Ok(Self { gamma: occ.density_matrix(&occ.w), beta, mu: model.mu })
    }

    pub fn trace(&self) -> f64 {
        self.gamma.trace().re
    }

    pub fn spectrum(&self) -> Result<Vec<f64>, DynamicsError> {
        Ok(linalg::eigh(&linalg::hermitian_part(&self.gamma)).ok_or(DynamicsError::EigenFailure)?.values.iter().copied().collect())
    }

    /// `Tr(K Γ)` for a kernel given by its entries.
    pub fn expectation(&self, entries: &[(usize, usize, C64)]) -> C64 {
        entries.iter().map(|&(s, sp, v)| v * self.gamma[(sp, s)]).sum()
    }
}

/// `h + e^{η t} diag(v)` with `v = θ μ(θx)` repeated over the internal index.
#[derive(Debug, Clone)]
pub struct DrivenHamiltonian {
    h: SparseHermitian,
    dense: CMat,
    pub potential: Vec<f64>,
    pub eta: f64,
}

impl DrivenHamiltonian {
    pub fn new(model: &LatticeModel, l: usize, theta: f64, profile: &[f64], eta: f64) -> Result<Self, DynamicsError> {
        if profile.len() != l {
            return Err(DynamicsError::InvalidParameter(format!("profile has {} sites, chain has {l}", profile.len())));
        }
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(DynamicsError::InvalidParameter(format!("eta = {eta}")));
        }
        let m = model.hamiltonian.m();
        let dense = model.hamiltonian.real_space_matrix(l);
        let potential = (0..l * m).map(|i| theta * profile[i / m]).collect();
        Ok(Self { h: SparseHermitian::from_dense(&dense, 0.0), dense, potential, eta })
    }

    pub fn matrix(&self, t: f64) -> CMat {
        let r = (self.eta * t).exp();
        let mut a = self.dense.clone();
        for (i, v) in self.potential.iter().enumerate() {
            a[(i, i)] += c(r * v, 0.0);
        }
        a
    }

    fn max_potential(&self) -> f64 {
        self.potential.iter().fold(0.0f64, |a, b| a.max(b.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationOptions {
    /// Initial and largest step.
    pub dt: f64,
    pub dt_min: f64,
    /// Step-doubling tolerance on the evolved columns (max entry).
    pub tol: f64,
    pub defect_limit: f64,
    /// The ramp starts where `e^{ηt0} max|v| = ramp_floor`.
    pub ramp_floor: f64,
    /// Eigenvectors of `Γ_eq` with weight below this are dropped.
    pub occupation_floor: f64,
    pub chunk: usize,
}

impl Default for PropagationOptions {
    fn default() -> Self {
        Self { dt: 1.0, dt_min: 1e-6, tol: 1e-12, defect_limit: 1e-10, ramp_floor: 1e-8, occupation_floor: 1e-18, chunk: 16 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Propagation {
    pub gamma: OneParticleDensityMatrix,
    pub t0: f64,
    /// Accepted steps (largest over column chunks).
    pub steps: usize,
    /// Largest accepted step-doubling estimate.
    pub local_error: f64,
    /// `‖W^†W - 1‖` on the evolved occupied columns.
    pub defect: f64,
    /// Upper bound on `|Tr Γ(t) - Tr Γ(t0)|` over the ramp.
    pub trace_drift: f64,
}

/// Occupied columns `w_j` and weights `f_j` of a quasi-free state.
struct Occupied {
    w: CMat,
    f: Vec<f64>,
}

impl Occupied {
    fn equilibrium(model: &LatticeModel, l: usize, beta: f64, floor: f64) -> Result<Self, DynamicsError> {
        if model.lambda != 0.0 {
            return Err(DynamicsError::Interacting(model.lambda));
        }
        if l < 2 {
            return Err(ModelError::ChainTooShort(l).into());
        }
        let h = model.hamiltonian.real_space_matrix(l);
        let e = linalg::eigh(&h).ok_or(DynamicsError::EigenFailure)?;
        Ok(Self::from_eigh(&e, |x| fermi(beta, x - model.mu), floor))
    }

    fn from_eigh(e: &linalg::Eigh, occ: impl Fn(f64) -> f64, floor: f64) -> Self {
        let keep: Vec<(usize, f64)> = e.values.iter().enumerate().map(|(j, &x)| (j, occ(x))).filter(|&(_, f)| f > floor).collect();
        let n = e.vectors.nrows();
        let mut w = CMat::zeros(n, keep.len());
        for (col, &(j, _)) in keep.iter().enumerate() {
            w.set_column(col, &e.vectors.column(j));
        }
        Self { w, f: keep.iter().map(|&(_, f)| f).collect() }
    }

    fn density_matrix(&self, w: &CMat) -> CMat {
        let mut scaled = w.clone();
        for (j, &f) in self.f.iter().enumerate() {
            scaled.column_mut(j).scale_mut(f);
        }
        scaled * w.adjoint()
    }
}

struct Evolved {
    w: CMat,
    t0: f64,
    steps: usize,
    local_error: f64,
    defect: f64,
    trace_drift: f64,
}

struct ChunkRun {
    x: CMat,
    drift: f64,
    steps: usize,
    worst: f64,
}

fn cf4_step(drv: &DrivenHamiltonian, x: &CMat, t: f64, h: f64, shift: &mut [f64]) -> CMat {
    let (alpha, nodes) = cf4_coefficients();
    let r1 = (drv.eta * (t + nodes[0] * h)).exp();
    let r2 = (drv.eta * (t + nodes[1] * h)).exp();
    let mut y = x.clone();
    for coef in [alpha[1] * r1 + alpha[0] * r2, alpha[0] * r1 + alpha[1] * r2] {
        for (s, v) in shift.iter_mut().zip(&drv.potential) {
            *s = coef * v;
        }
        y = linalg::chebyshev_expm_apply(&drv.h, 0.5, shift, h, &y);
    }
    y
}

fn evolve_chunk(drv: &DrivenHamiltonian, x: &CMat, f: &[f64], t0: f64, opts: &PropagationOptions) -> Result<ChunkRun, DynamicsError> {
    let mut x = x.clone();
    let mut drift = 0.0f64;
    let mut worst = 0.0f64;
    let mut steps = 0;
    let mut t = t0;
    let mut dt = opts.dt;
    let mut shift = vec![0.0; drv.potential.len()];
    while t < 0.0 {
        let h = dt.min(-t);
        let full = cf4_step(drv, &x, t, h, &mut shift);
        let mid = cf4_step(drv, &x, t, 0.5 * h, &mut shift);
        let half = cf4_step(drv, &mid, t + 0.5 * h, 0.5 * h, &mut shift);
        let err = linalg::max_abs(&(&full - &half));
        if err <= opts.tol || h <= opts.dt_min {
            x = half;
            t += h;
            steps += 1;
            worst = worst.max(err);
            let d: f64 = (0..x.ncols()).map(|j| f[j] * (x.column(j).norm_squared() - 1.0)).sum();
            drift = drift.max(d.abs());
            if err < opts.tol / 32.0 {
                dt = (2.0 * dt).min(opts.dt);
            }
        } else {
            dt = 0.5 * h;
            if dt < opts.dt_min {
                return Err(DynamicsError::StepControlFailure { defect: err, limit: opts.tol });
            }
        }
    }
    Ok(ChunkRun { x, drift, steps, worst })
}

/// `t0 ≤ 0` with `e^{η t0} max|v| = floor`.
fn ramp_start(drv: &DrivenHamiltonian, floor: f64) -> f64 {
    let amp = drv.max_potential();
    if amp == 0.0 {
        return 0.0;
    }
    ((floor / amp).ln() / drv.eta).min(0.0)
}

fn evolve(drv: &DrivenHamiltonian, occ: &Occupied, opts: &PropagationOptions) -> Result<Evolved, DynamicsError> {
    if !(opts.dt > 0.0) || !(opts.tol > 0.0) || !(opts.ramp_floor > 0.0) {
        return Err(DynamicsError::InvalidParameter(format!("dt = {}, tol = {}, ramp_floor = {}", opts.dt, opts.tol, opts.ramp_floor)));
    }
    let t0 = ramp_start(drv, opts.ramp_floor);
    let n = occ.w.ncols();
    let chunk = opts.chunk.max(1);
    let starts: Vec<usize> = (0..n).step_by(chunk).collect();
    let runs: Result<Vec<(usize, ChunkRun)>, DynamicsError> = starts
        .par_iter()
        .map(|&s| {
            let e = (s + chunk).min(n);
            let x = occ.w.columns(s, e - s).into_owned();
            Ok((s, evolve_chunk(drv, &x, &occ.f[s..e], t0, opts)?))
        })
        .collect();
    let mut w = CMat::zeros(occ.w.nrows(), n);
    let mut drift = 0.0;
    let mut steps = 0;
    let mut local = 0.0f64;
    for (s, run) in runs? {
        w.columns_mut(s, run.x.ncols()).copy_from(&run.x);
        drift += run.drift;
        steps = steps.max(run.steps);
        local = local.max(run.worst);
    }
    let defect = if n == 0 { 0.0 } else { linalg::isometry_defect(&w) };
    if defect > opts.defect_limit {
        return Err(DynamicsError::StepControlFailure { defect, limit: opts.defect_limit });
    }
    Ok(Evolved { w, t0, steps, local_error: local, defect, trace_drift: drift })
}

/// `Γ(0) = U Γ_eq U^†`, with `U` the CF4 propagator from `t0` (where the ramp is below `1e-8`) to `0`.
pub fn propagate(gamma_eq: &OneParticleDensityMatrix, driven: &DrivenHamiltonian, opts: &PropagationOptions) -> Result<Propagation, DynamicsError> {
    let e = linalg::eigh(&linalg::hermitian_part(&gamma_eq.gamma)).ok_or(DynamicsError::EigenFailure)?;
    let occ = Occupied::from_eigh(&e, |f| f, opts.occupation_floor);
    let ev = evolve(driven, &occ, opts)?;
    Ok(Propagation {
        gamma: OneParticleDensityMatrix { gamma: occ.density_matrix(&ev.w), beta: gamma_eq.beta, mu: gamma_eq.mu },
        t0: ev.t0,
        steps: ev.steps,
        local_error: ev.local_error,
        defect: ev.defect,
        trace_drift: ev.trace_drift,
    })
}

/// Per-site response `(⟨j_{ν,x}⟩_{ρ(0)} - ⟨j_{ν,x}⟩_{eq}) / θ` with its propagation diagnostics.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct SiteResponse {
    pub eta: f64,
    pub theta: f64,
    pub nu: usize,
    pub chi: Vec<f64>,
    pub defect: f64,
    pub trace_drift: f64,
    pub steps: usize,
}

fn response_from_columns(model: &LatticeModel, l: usize, nu: usize, occ: &Occupied, w: &CMat, theta: f64) -> Vec<f64> {
    (0..l)
        .into_par_iter()
        .map(|x| {
            let entries = model.hamiltonian.observable_kernel_entries(nu, x, l);
            let mut d = C64::new(0.0, 0.0);
            for (j, &f) in occ.f.iter().enumerate() {
                let a = w.column(j);
                let b = occ.w.column(j);
                let mut s = C64::new(0.0, 0.0);
                for &(r, cc, v) in &entries {
                    s += v * (a[r].conj() * a[cc] - b[r].conj() * b[cc]);
                }
                d += s * f;
            }
            d.re / theta
        })
        .collect()
}

/// `χ_ν(x; η, θ)` for the periodized bump at inverse temperature `β`.
pub fn full_response(model: &LatticeModel, l: usize, beta: f64, eta: f64, theta: f64, nu: usize, opts: &PropagationOptions) -> Result<SiteResponse, DynamicsError> {
    let profile = periodized_bump(theta, l)?;
    response_with_profile(model, l, beta, eta, theta, &profile, nu, opts)
}

/// Same as [`full_response`] for an arbitrary site profile `μ_x` (perturbation `θ Σ_x μ_x n_x`).
#[allow(clippy::too_many_arguments)]
pub fn response_with_profile(model: &LatticeModel, l: usize, beta: f64, eta: f64, theta: f64, profile: &[f64], nu: usize, opts: &PropagationOptions) -> Result<SiteResponse, DynamicsError> {
    if nu > 1 {
        return Err(DynamicsError::InvalidParameter(format!("nu = {nu}")));
    }
    let occ = Occupied::equilibrium(model, l, beta, opts.occupation_floor)?;
    if theta == 0.0 {
        return Ok(SiteResponse { eta, theta, nu, chi: vec![0.0; l], defect: 0.0, trace_drift: 0.0, steps: 0 });
    }
    let drv = DrivenHamiltonian::new(model, l, theta, profile, eta)?;
    let ev = evolve(&drv, &occ, opts)?;
    let chi = response_from_columns(model, l, nu, &occ, &ev.w, theta);
    Ok(SiteResponse { eta, theta, nu, chi, defect: ev.defect, trace_drift: ev.trace_drift, steps: ev.steps })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AuxiliaryComparison {
    pub eta: f64,
    pub eta_beta: f64,
    pub beta: f64,
    pub full: SiteResponse,
    pub auxiliary: SiteResponse,
    /// `max_x |χ_full - χ_aux|`.
    pub deviation: f64,
}

/// Full response at `η` against the auxiliary dynamics at `η_β ∈ (2π/β)ℕ`.
pub fn auxiliary_response(model: &LatticeModel, l: usize, beta: f64, eta: f64, theta: f64, nu: usize, opts: &PropagationOptions) -> Result<AuxiliaryComparison, DynamicsError> {
    let eta_beta = matsubara_rate(eta, beta);
    let full = full_response(model, l, beta, eta, theta, nu, opts)?;
    let auxiliary = if (eta_beta - eta).abs() <= 1e-12 * eta { full.clone() } else { full_response(model, l, beta, eta_beta, theta, nu, opts)? };
    let deviation = sup_distance(&full.chi, &auxiliary.chi);
    Ok(AuxiliaryComparison { eta, eta_beta, beta, full, auxiliary, deviation })
}

fn sup_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// First-order response `χ_lin(x) = -(1/θ)(1/L) Σ_p V̂(-p) e^{-ipx} Π_ν(η, p)`, `V = θ μ(θ·)`.
pub fn linear_response(ft: &FreeTheory, eta: f64, theta: f64, profile: &[f64], nu: usize) -> Result<Vec<f64>, DynamicsError> {
    let l = ft.l;
    if profile.len() != l {
        return Err(DynamicsError::InvalidParameter(format!("profile has {} sites, chain has {l}", profile.len())));
    }
    let grid = crate::lattice_model::brillouin_grid(l);
    let mut terms = Vec::with_capacity(l);
    for &p in &grid {
        let vhat: C64 = profile.iter().enumerate().map(|(y, &m)| C64::from_polar(theta * m, p * y as f64)).sum();
        if vhat.norm() < 1e-300 {
            continue;
        }
        terms.push((p, vhat * ft.kubo_bubble(eta, p, nu)?));
    }
    Ok((0..l)
        .map(|x| {
            let s: C64 = terms.iter().map(|&(p, t)| t * C64::from_polar(1.0, -p * x as f64)).sum();
            -s.re / (theta * l as f64)
        })
        .collect())
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct KuboRow {
    pub eta: f64,
    pub theta: f64,
    pub a: f64,
    pub nu: usize,
    pub chi_full: Vec<f64>,
    pub chi_lin: Vec<f64>,
    /// `max_x |χ_full - χ_lin|`.
    pub deviation: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct KuboTable {
    pub rows: Vec<KuboRow>,
    /// `log deviation` against `log η`; the slope is `γ̂`.
    pub fit: Option<LineFit>,
    /// Deviations strictly decrease as `η` decreases.
    pub monotone: bool,
}

impl KuboTable {
    pub fn gamma_hat(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

/// Full versus linear response at `θ = aη` for every `η` in the list.
pub fn kubo_comparison(model: &LatticeModel, l: usize, beta: f64, etas: &[f64], a: f64, nu: usize, opts: &PropagationOptions) -> Result<KuboTable, DynamicsError> {
    if etas.is_empty() {
        return Err(DynamicsError::InvalidParameter("empty eta list".into()));
    }
    let ft = FreeTheory::new(model.hamiltonian.clone(), model.mu, beta, l)?;
    let mut rows = Vec::with_capacity(etas.len());
    for &eta in etas {
        let theta = a * eta;
        let profile = periodized_bump(theta, l)?;
        let full = response_with_profile(model, l, beta, eta, theta, &profile, nu, opts)?;
        let lin = linear_response(&ft, eta, theta, &profile, nu)?;
        let deviation = sup_distance(&full.chi, &lin);
        rows.push(KuboRow { eta, theta, a, nu, chi_full: full.chi, chi_lin: lin, deviation });
    }
    let mut sorted: Vec<(f64, f64)> = rows.iter().map(|r| (r.eta, r.deviation)).collect();
    sorted.sort_by(|x, y| y.0.total_cmp(&x.0));
    let monotone = sorted.windows(2).all(|w| w[1].1 < w[0].1);
    let fit = if rows.iter().all(|r| r.deviation > 0.0) {
        let xs: Vec<f64> = rows.iter().map(|r| r.eta).collect();
        let ys: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
        fit_power_law(&xs, &ys)
    } else {
        None
    };
    Ok(KuboTable { rows, fit, monotone })
}
