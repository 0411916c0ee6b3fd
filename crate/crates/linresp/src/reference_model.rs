//! Cutoff chiral fermions in `1+1` dimensions: the anomalous bubble, the Ward matrix and density loops.
//!
//! Momenta live on the antiperiodic grid `(2π/β)(ℤ+½)²` with `β = L`; the lattice regulator and the
//! cutoff deformation are already removed.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::fit::{fit_line, LineFit};
use crate::linalg::{self, c, CMat, C64};

#[derive(Debug, Error)]
pub enum ReferenceError {
    #[error("grid spacing {spacing} too coarse for |p| = {p} and shell width {shell} (needs spacing <= |p| and >= 8 points across the shell)")]
    GridTooCoarse { spacing: f64, p: f64, shell: f64 },
    #[error("momentum ({0}, {1}) is not on the bosonic grid or vanishes")]
    InvalidMomentum(f64, f64),
    #[error("T-matrix inverse is near singular (condition number {0:e})")]
    NearSingularT(f64),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

fn transition(s: f64) -> f64 {
    if s > 0.0 {
        (-1.0 / s).exp()
    } else {
        0.0
    }
}

/// Smooth even cutoff: 1 on `|t| ≤ 1`, 0 on `|t| ≥ 3/2`.
pub fn cutoff(t: f64) -> f64 {
    let a = t.abs();
    if a <= 1.0 {
        return 1.0;
    }
    if a >= 1.5 {
        return 0.0;
    }
    let up = transition(1.5 - a);
    up / (up + transition(a - 1.0))
}

/// How the cutoff sees a momentum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum CutoffShape {
    /// `χ(2^{-N} ‖k‖_ω)`.
    Radial,
    /// `χ(2^{-N} |k0|) χ((v k1 - center)/width)`: the spatial window neither grows with `N` nor is even.
    OffsetSpatial { center: f64, width: f64 },
}

/// `g(k) = χ_N(k) / (Z (i k0 + v k1))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChiralPropagator {
    pub v: f64,
    pub z: f64,
    pub n: u32,
}

impl ChiralPropagator {
    pub fn new(v: f64, z: f64, n: u32) -> Result<Self, ReferenceError> {
        if v == 0.0 || !v.is_finite() || !(z > 0.0) {
            return Err(ReferenceError::InvalidParameter(format!("v = {v}, Z = {z}")));
        }
        if n > 40 {
            return Err(ReferenceError::InvalidParameter(format!("N = {n}")));
        }
        Ok(Self { v, z, n })
    }

    pub fn scale(&self) -> f64 {
        2f64.powi(self.n as i32)
    }

    pub fn norm(&self, k0: f64, k1: f64) -> f64 {
        (k0 * k0 + self.v * self.v * k1 * k1).sqrt()
    }

    pub fn chi(&self, k0: f64, k1: f64) -> f64 {
        cutoff(self.norm(k0, k1) / self.scale())
    }

    pub fn d(&self, k0: f64, k1: f64) -> C64 {
        c(self.v * k1, k0)
    }

    pub fn eval(&self, k0: f64, k1: f64) -> C64 {
        self.chi(k0, k1) / (self.d(k0, k1) * self.z)
    }

    /// Raw `Δ(k,p) g(k-p) g(k)` with the `1/χ` factors, meaningful where both cutoffs are positive.
    pub fn delta_gg_raw(&self, k: (f64, f64), p: (f64, f64)) -> C64 {
        let km = (k.0 - p.0, k.1 - p.1);
        let (xk, xm) = (self.chi(k.0, k.1), self.chi(km.0, km.1));
        let delta = -self.d(km.0, km.1) * (self.z / xm) + self.d(k.0, k.1) * (self.z / xk) - self.d(p.0, p.1) * self.z;
        delta * self.eval(km.0, km.1) * self.eval(k.0, k.1)
    }

    /// The same product after cancelling `χ` against the propagator numerators.
    pub fn delta_gg(&self, k: (f64, f64), p: (f64, f64)) -> C64 {
        let km = (k.0 - p.0, k.1 - p.1);
        let (xk, xm) = (self.chi(k.0, k.1), self.chi(km.0, km.1));
        (xm * (1.0 - xk) / self.d(km.0, km.1) - xk * (1.0 - xm) / self.d(k.0, k.1)) / self.z
    }
}

/// Antiperiodic `β = L` grid with spacing `2π/β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AntiperiodicGrid {
    pub beta: f64,
}

impl AntiperiodicGrid {
    pub fn with_spacing(spacing: f64) -> Self {
        Self { beta: 2.0 * PI / spacing }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.beta
    }

    fn on_bosonic_grid(&self, x: f64) -> bool {
        let n = x / self.spacing();
        (n - n.round()).abs() < 1e-9 * n.abs().max(1.0)
    }

    /// `Σ_k f(k)` over grid points with `r_in ≤ ‖k‖_ω ≤ r_out`, summed row by row.
    fn annulus_sum(&self, v: f64, r_in: f64, r_out: f64, f: impl Fn(f64, f64) -> C64 + Sync) -> C64 {
        let h = self.spacing();
        let m0 = (r_out / h).ceil() as i64 + 1;
        let rows: Vec<C64> = (-m0..m0)
            .into_par_iter()
            .map(|i| {
                let k0 = h * (i as f64 + 0.5);
                if k0.abs() > r_out {
                    return C64::new(0.0, 0.0);
                }
                let outer = ((r_out * r_out - k0 * k0).max(0.0)).sqrt() / v.abs();
                let inner = ((r_in * r_in - k0 * k0).max(0.0)).sqrt() / v.abs();
                let mut s = C64::new(0.0, 0.0);
                let jmax = (outer / h).ceil() as i64 + 1;
                let jmin = ((inner / h).floor() as i64 - 1).max(0);
                for j in jmin..jmax {
                    let k1 = h * (j as f64 + 0.5);
                    if k1 > outer || (k1 < inner && r_in > 0.0) {
                        continue;
                    }
                    s += f(k0, k1) + f(k0, -k1);
                }
                s
            })
            .collect();
        rows.into_iter().sum()
    }
}

/// `(1/(4π|v|)) (-ip0 + v p1)/(ip0 + v p1)`.
pub fn bubble_closed_form(p: (f64, f64), v: f64) -> Result<C64, ReferenceError> {
    if p == (0.0, 0.0) {
        return Err(ReferenceError::InvalidMomentum(p.0, p.1));
    }
    Ok((c(v * p.1, -p.0) / c(v * p.1, p.0)) / (4.0 * PI * v.abs()))
}

fn check_grid(prop: &ChiralPropagator, p: (f64, f64), grid: &AntiperiodicGrid) -> Result<f64, ReferenceError> {
    if p == (0.0, 0.0) || !grid.on_bosonic_grid(p.0) || !grid.on_bosonic_grid(p.1) {
        return Err(ReferenceError::InvalidMomentum(p.0, p.1));
    }
    let pn = prop.norm(p.0, p.1);
    let shell = 0.5 * prop.scale();
    let h = grid.spacing() * prop.v.abs().max(1.0);
    if grid.spacing() > (p.0 * p.0 + p.1 * p.1).sqrt() || shell / h < 8.0 {
        return Err(ReferenceError::GridTooCoarse { spacing: grid.spacing(), p: pn, shell });
    }
    Ok(pn)
}

/// `𝔅^N(p) = (1/βL)(Z/D(p)) Σ_k Δ(k,p) g(k-p) g(k)`, equal to `-(Z²/βL) Σ_k g(k) g(k-p)`.
pub fn anomalous_bubble(prop: &ChiralPropagator, p: (f64, f64), grid: &AntiperiodicGrid) -> Result<C64, ReferenceError> {
    let pn = check_grid(prop, p, grid)?;
    let s = prop.scale();
    // the summand vanishes unless k or k - p sits in the shell 1 < |k|/2^N < 3/2
    let sum = grid.annulus_sum(prop.v, (s - pn).max(0.0), 1.5 * s + pn, |k0, k1| prop.delta_gg((k0, k1), p));
    Ok(sum * prop.z / (prop.d(p.0, p.1) * grid.beta * grid.beta))
}

#[derive(Debug, Clone, Copy, Serialize, PartialEq)]
pub struct BubbleRow {
    pub n: u32,
    pub spacing: f64,
    pub value: C64,
    /// `(4 𝔅^N - 𝔅^{N-1}) / 3` when the previous level used the same grid; the cutoff error scales as `4^{-N}`.
    pub richardson: Option<C64>,
    pub error: f64,
    pub richardson_error: Option<f64>,
}

/// `𝔅^N(p)` for each `N` with spacing `spacing(N)`, compared with the closed form.
pub fn bubble_sequence(v: f64, p: (f64, f64), ns: &[u32], spacing: impl Fn(u32) -> f64) -> Result<Vec<BubbleRow>, ReferenceError> {
    let exact = bubble_closed_form(p, v)?;
    let mut rows: Vec<BubbleRow> = Vec::with_capacity(ns.len());
    for &n in ns {
        let h = spacing(n);
        let prop = ChiralPropagator::new(v, 1.0, n)?;
        let value = anomalous_bubble(&prop, p, &AntiperiodicGrid::with_spacing(h))?;
        let richardson = rows.last().filter(|r| r.n + 1 == n && r.spacing == h).map(|r| (value * 4.0 - r.value) / 3.0);
        rows.push(BubbleRow { n, spacing: h, value, richardson, error: (value - exact).norm(), richardson_error: richardson.map(|r| (r - exact).norm()) });
    }
    Ok(rows)
}

/// `T(p) = (1 + 𝔅(p) Λ_Z v̂(p))^{-1}` with `Λ_Z = Z^{-1} Λ Z`.
pub fn t_matrix(bubbles: &[C64], lambda: &DMatrix<f64>, z: &[f64], vhat: f64) -> Result<CMat, ReferenceError> {
    let n = bubbles.len();
    if lambda.nrows() != n || lambda.ncols() != n || z.len() != n {
        return Err(ReferenceError::InvalidParameter("dimension mismatch".into()));
    }
    let m = CMat::from_fn(n, n, |i, j| if i == j { c(1.0, 0.0) } else { C64::new(0.0, 0.0) } + bubbles[i] * (lambda[(i, j)] * z[j] / z[i] * vhat));
    let cond = linalg::condition_number(&m);
    if !(cond <= 1e12) {
        return Err(ReferenceError::NearSingularT(cond));
    }
    m.try_inverse().ok_or(ReferenceError::NearSingularT(f64::INFINITY))
}

/// `⟨n̂_{p,ω}; n̂_{-p,ω'}⟩ = T_{ωω'}(p) 𝔅_{ω'}(p) / Z²_{ω'}`.
pub fn density_two_point(bubbles: &[C64], lambda: &DMatrix<f64>, z: &[f64], vhat: f64) -> Result<CMat, ReferenceError> {
    let t = t_matrix(bubbles, lambda, z, vhat)?;
    Ok(CMat::from_fn(t.nrows(), t.ncols(), |i, j| t[(i, j)] * bubbles[j] / (z[j] * z[j])))
}

/// `|g(k) g(k+p) - (g(k) - g(k+p)) / (Z D(p))|` for the free vertex at `λ = 0`.
pub fn vertex_ward_residual(prop: &ChiralPropagator, k: (f64, f64), p: (f64, f64)) -> f64 {
    let kp = (k.0 + p.0, k.1 + p.1);
    let lhs = prop.eval(k.0, k.1) * prop.eval(kp.0, kp.1);
    let rhs = (prop.eval(k.0, k.1) - prop.eval(kp.0, kp.1)) / (prop.d(p.0, p.1) * prop.z);
    (lhs - rhs).norm()
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChiralLoop {
    /// `-(1/βL) Σ_σ Σ_k Π_j g(k_j)`.
    pub value: C64,
    /// Insertion orders (insertion 0 first) and their contributions.
    pub orderings: Vec<(Vec<usize>, C64)>,
}

impl ChiralLoop {
    /// `Σ_σ |value_σ|`, the scale against which cancellation is judged.
    pub fn scale(&self) -> f64 {
        self.orderings.iter().map(|o| o.1.norm()).sum()
    }
}

/// Single-loop `m`-point density correlator of the cutoff chiral propagator at `λ = 0`.
pub fn chiral_m_loop(prop: &ChiralPropagator, momenta: &[(f64, f64)], shape: CutoffShape, grid: &AntiperiodicGrid) -> Result<ChiralLoop, ReferenceError> {
    let m = momenta.len();
    if m < 3 {
        return Err(ReferenceError::InvalidParameter(format!("need m >= 3 insertions, got {m}")));
    }
    let total = momenta.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
    if total.0.abs() > 1e-9 || total.1.abs() > 1e-9 {
        return Err(ReferenceError::InvalidParameter(format!("momenta sum to ({}, {})", total.0, total.1)));
    }
    for &p in momenta {
        check_grid(prop, p, grid)?;
    }
    let orders = crate::free_theory::cyclic_orders(m);
    // distinct shifts s with k_j = k - s
    let mut shifts: Vec<(f64, f64)> = Vec::new();
    let mut index: Vec<Vec<usize>> = Vec::with_capacity(orders.len());
    for ord in &orders {
        let mut s = (0.0, 0.0);
        let mut idx = Vec::with_capacity(m);
        for &i in ord {
            let pos = shifts.iter().position(|t| (t.0 - s.0).abs() < 1e-12 && (t.1 - s.1).abs() < 1e-12).unwrap_or_else(|| {
                shifts.push(s);
                shifts.len() - 1
            });
            idx.push(pos);
            s = (s.0 + momenta[i].0, s.1 + momenta[i].1);
        }
        index.push(idx);
    }
    let reach = shifts.iter().map(|s| prop.norm(s.0, s.1)).fold(0.0, f64::max);
    let scale = prop.scale();
    let r_out = 1.5 * scale + reach;
    let no = orders.len();
    let per_order: Vec<Vec<C64>> = {
        let h = grid.spacing();
        let m0 = (r_out / h).ceil() as i64 + 1;
        (-m0..m0)
            .into_par_iter()
            .map(|i| {
                let k0 = h * (i as f64 + 0.5);
                let mut acc = vec![C64::new(0.0, 0.0); no];
                let mut g = vec![C64::new(0.0, 0.0); shifts.len()];
                if k0.abs() > r_out {
                    return acc;
                }
                let outer = ((r_out * r_out - k0 * k0).max(0.0)).sqrt() / prop.v.abs();
                let jmax = (outer / h).ceil() as i64 + 1;
                for j in -jmax..jmax {
                    let k1 = h * (j as f64 + 0.5);
                    let inside = shape == CutoffShape::Radial && prop.norm(k0, k1) + reach <= scale;
                    for (gs, s) in g.iter_mut().zip(&shifts) {
                        let q = (k0 - s.0, k1 - s.1);
                        let chi = if inside {
                            1.0
                        } else {
                            match shape {
                                CutoffShape::Radial => prop.chi(q.0, q.1),
                                CutoffShape::OffsetSpatial { center, width } => cutoff(q.0 / scale) * cutoff((prop.v * q.1 - center) / width),
                            }
                        };
                        *gs = if chi == 0.0 { C64::new(0.0, 0.0) } else { chi / (prop.d(q.0, q.1) * prop.z) };
                    }
                    for (a, idx) in acc.iter_mut().zip(&index) {
                        let mut prod = g[idx[0]];
                        for &t in &idx[1..] {
                            prod *= g[t];
                        }
                        *a += prod;
                    }
                }
                acc
            })
            .collect()
    };
    let norm = -1.0 / (grid.beta * grid.beta);
    let mut orderings: Vec<(Vec<usize>, C64)> = orders.iter().map(|o| (o.clone(), C64::new(0.0, 0.0))).collect();
    for row in per_order {
        for (o, v) in orderings.iter_mut().zip(row) {
            o.1 += v;
        }
    }
    for o in orderings.iter_mut() {
        o.1 *= norm;
    }
    let value = orderings.iter().map(|o| o.1).sum();
    Ok(ChiralLoop { value, orderings })
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LoopDecay {
    pub shape: CutoffShape,
    pub rows: Vec<(u32, ChiralLoop)>,
    /// Values with `|loop| ≤ floor · Σ_σ |loop_σ|` count as cancelled to rounding and stay out of the fit.
    pub floor: f64,
    /// `log2(|loop(N)|/N) = c - γ̂ N`; the reported slope is `-γ̂`.
    pub fit: Option<LineFit>,
}

impl LoopDecay {
    pub fn gamma_hat(&self) -> Option<f64> {
        self.fit.map(|f| -f.slope)
    }

    pub fn at_floor(&self, row: &ChiralLoop) -> bool {
        row.value.norm() <= self.floor * row.scale()
    }

    pub fn all_cancelled(&self) -> bool {
        self.rows.iter().all(|r| self.at_floor(&r.1))
    }

    /// `max_N |loop(N)| / min_N |loop(N)|`.
    pub fn spread(&self) -> f64 {
        let v: Vec<f64> = self.rows.iter().map(|r| r.1.value.norm()).collect();
        v.iter().cloned().fold(0.0, f64::max) / v.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Loop values for each `N` on a fixed grid and the decay exponent fitted above the rounding floor.
pub fn loop_decay(v: f64, momenta: &[(f64, f64)], ns: &[u32], shape: CutoffShape, grid: &AntiperiodicGrid, floor: f64) -> Result<LoopDecay, ReferenceError> {
    let mut rows = Vec::with_capacity(ns.len());
    for &n in ns {
        let prop = ChiralPropagator::new(v, 1.0, n)?;
        rows.push((n, chiral_m_loop(&prop, momenta, shape, grid)?));
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.1.value.norm() > floor * r.1.scale())
        .map(|(n, l)| (*n as f64, (l.value.norm() / *n as f64).log2()))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
    let fit = fit_line(&xs, &ys);
    Ok(LoopDecay { shape, rows, floor, fit })
}
