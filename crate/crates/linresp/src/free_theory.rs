//! Non-interacting Euclidean correlators at finite `β`, `L`.
//!
//! Fourier conventions: `c_k = L^{-1/2} Σ_x e^{-ikx} a_x`, `n̂_p = Σ_k c*_{k-p} c_k`,
//! `ĵ_{ν,p} = Σ_k c*_{k-p} Ĵ_ν(k,p) c_k`, and a frequency `p0` attaches `∫_0^β dt e^{-i p0 t}`
//! to an imaginary-time insertion. All correlators are returned divided by `βL`.

use std::f64::consts::PI;

use rayon::prelude::*;
use thiserror::Error;

use crate::lattice_model::{brillouin_grid, BlochHamiltonian, ModelError};
use crate::linalg::{self, c, CMat, C64, I};

#[derive(Debug, Error)]
pub enum FreeTheoryError {
    #[error("propagator at k = ({k0}, {k1}) is singular (condition number {cond:e})")]
    SingularPropagator { k0: f64, k1: f64, cond: f64 },
    #[error("p0 = {0} is not a bosonic Matsubara frequency")]
    NotBosonic(f64),
    #[error("{plus} creation fields but {minus} annihilation fields")]
    FieldCountMismatch { plus: usize, minus: usize },
    #[error("need at least {need} insertions, got {got}")]
    TooFewInsertions { need: usize, got: usize },
    #[error("frequency tail {tail:e} exceeds 10% of the value {value:e}; raise N0")]
    CutoffTooLow { tail: f64, value: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Matsubara frequencies `|k0| ≤ 2^{N0}` at inverse temperature `β`, plus the `L`-point Bloch grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatsubaraGrid {
    pub beta: f64,
    pub l: usize,
    pub n0: u32,
}

impl MatsubaraGrid {
    /// Number of positive fermionic frequencies kept.
    pub fn positive_fermionic(&self) -> usize {
        let x = 2f64.powi(self.n0 as i32) * self.beta / (2.0 * PI) - 0.5;
        if x < 0.0 {
            0
        } else {
            x.floor() as usize + 1
        }
    }

    pub fn fermionic(&self) -> Vec<f64> {
        let n = self.positive_fermionic() as i64;
        (-n..n).map(|j| 2.0 * PI / self.beta * (j as f64 + 0.5)).collect()
    }

    pub fn bosonic(&self) -> Vec<f64> {
        let cut = 2f64.powi(self.n0 as i32);
        let n = (cut * self.beta / (2.0 * PI)).floor() as i64;
        (-n..=n).map(|j| 2.0 * PI / self.beta * j as f64).collect()
    }

    pub fn momenta(&self) -> Vec<f64> {
        brillouin_grid(self.l)
    }
}

pub fn is_bosonic(p0: f64, beta: f64) -> bool {
    let n = p0 * beta / (2.0 * PI);
    (n - n.round()).abs() < 1e-9 * n.abs().max(1.0)
}

/// Smallest `η_β ∈ (2π/β)ℕ₊` with `η_β ≥ η`.
pub fn matsubara_rate(eta: f64, beta: f64) -> f64 {
    let step = 2.0 * PI / beta;
    let n = (eta / step - 1e-12).ceil().max(1.0);
    n * step
}

/// Logistic Fermi function, overflow-free for any `β x`.
pub fn fermi(beta: f64, x: f64) -> f64 {
    0.5 * (1.0 - (0.5 * beta * x).tanh())
}

/// `-∂_x f = β f (1 - f)`.
pub fn fermi_derivative_neg(beta: f64, x: f64) -> f64 {
    let f = fermi(beta, x);
    beta * f * (1.0 - f)
}

/// One creation or annihilation field `(k0, k1, ρ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Field {
    pub k0: f64,
    pub k1: f64,
    pub rho: usize,
}

/// Per-ordering and total value of a single-loop correlator.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopValue {
    pub value: C64,
    /// Analytic `|k0| > 2^{N0}` correction already included in `value`.
    pub tail: C64,
    pub n0: u32,
    /// Insertion order around the loop (starting with insertion 0) and its contribution.
    pub orderings: Vec<(Vec<usize>, C64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopOptions {
    pub n0: Option<u32>,
    pub tail_limit: f64,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self { n0: None, tail_limit: 0.1 }
    }
}

/// Free model `H - μN` at inverse temperature `β` on the ring of length `L`.
#[derive(Debug, Clone)]
pub struct FreeTheory {
    pub h: BlochHamiltonian,
    pub mu: f64,
    pub beta: f64,
    pub l: usize,
}

struct Term {
    coeff: C64,
    energies: Vec<f64>,
}

impl FreeTheory {
    pub fn new(h: BlochHamiltonian, mu: f64, beta: f64, l: usize) -> Result<Self, FreeTheoryError> {
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(FreeTheoryError::InvalidParameter(format!("beta = {beta}")));
        }
        if l < 2 {
            return Err(ModelError::ChainTooShort(l).into());
        }
        Ok(Self { h, mu, beta, l })
    }

    /// `(i k0 + Ĥ(k1) - μ)^{-1}`.
    pub fn free_propagator(&self, k0: f64, k1: f64) -> Result<CMat, FreeTheoryError> {
        let m = self.h.m();
        let mut a = self.h.bloch_matrix(k1) - CMat::identity(m, m) * c(self.mu, 0.0);
        for i in 0..m {
            a[(i, i)] += I * k0;
        }
        let cond = linalg::condition_number(&a);
        if !(cond < 1e14) {
            return Err(FreeTheoryError::SingularPropagator { k0, k1, cond });
        }
        a.try_inverse().ok_or(FreeTheoryError::SingularPropagator { k0, k1, cond })
    }

    /// `det[βL δ_{k,p} g_{ρρ'}(k)]` over creation fields `plus` and annihilation fields `minus`.
    pub fn wick_determinant(&self, plus: &[Field], minus: &[Field]) -> Result<C64, FreeTheoryError> {
        if plus.len() != minus.len() {
            return Err(FreeTheoryError::FieldCountMismatch { plus: plus.len(), minus: minus.len() });
        }
        let n = plus.len();
        let mut k = CMat::zeros(n, n);
        let scale = self.beta * self.l as f64;
        let same = |a: f64, b: f64| (a - b).abs() < 1e-10;
        let same_k1 = |a: f64, b: f64| {
            let d = (a - b).rem_euclid(2.0 * PI);
            d < 1e-10 || 2.0 * PI - d < 1e-10
        };
        for (i, fp) in plus.iter().enumerate() {
            for (j, fm) in minus.iter().enumerate() {
                if same(fp.k0, fm.k0) && same_k1(fp.k1, fm.k1) {
                    let g = self.free_propagator(fp.k0, fp.k1)?;
                    k[(i, j)] = g[(fp.rho, fm.rho)] * scale;
                }
            }
        }
        Ok(k.determinant())
    }

    fn eig(&self, k: f64) -> Result<linalg::Eigh, FreeTheoryError> {
        Ok(self.h.eigensystem(k)?)
    }

    /// `Π_ν(p) = (1/βL) ⟨T n̂_p ; ĵ_{ν,-p}⟩` by the Lehmann representation; `p0` must be bosonic.
    pub fn density_current_bubble(&self, p0: f64, p1: f64, nu: usize) -> Result<C64, FreeTheoryError> {
        if !is_bosonic(p0, self.beta) {
            return Err(FreeTheoryError::NotBosonic(p0));
        }
        self.kubo_bubble(p0, p1, nu)
    }

    /// Same Lehmann sum for any real `p0`; at `p0 = η > 0` it is the first-order real-time response kernel.
    pub fn kubo_bubble(&self, p0: f64, p1: f64, nu: usize) -> Result<C64, FreeTheoryError> {
        let grid = brillouin_grid(self.l);
        let parts: Result<Vec<C64>, FreeTheoryError> = grid
            .par_iter()
            .map(|&k| {
                let ek = self.eig(k)?;
                let ekp = self.eig(k - p1)?;
                let vert = self.h.current_vertex(nu, k - p1, -p1);
                let a = ekp.vectors.adjoint() * &ek.vectors;
                let b = ek.vectors.adjoint() * vert * &ekp.vectors;
                let mut s = C64::new(0.0, 0.0);
                for m in 0..self.h.m() {
                    let ei = ekp.values[m] - self.mu;
                    for n in 0..self.h.m() {
                        let ej = ek.values[n] - self.mu;
                        let w = pair_weight(self.beta, ei, ej, p0);
                        s += a[(m, n)] * b[(n, m)] * w;
                    }
                }
                Ok(s)
            })
            .collect();
        Ok(parts?.into_iter().sum::<C64>() / self.l as f64)
    }

    pub fn default_n0(&self, max_p0: f64) -> u32 {
        let grid = brillouin_grid(self.l.min(256));
        let mut bw = 0.0f64;
        for &k in &grid {
            if let Ok(e) = self.h.eigensystem(k) {
                for v in e.values {
                    bw = bw.max((v - self.mu).abs());
                }
            }
        }
        let target = 100.0 * bw.max(max_p0.abs()).max(1e-3);
        let mut n0 = 0u32;
        while 2f64.powi(n0 as i32) < target {
            n0 += 1;
        }
        n0
    }

    /// Connected `(1/βL)⟨T n̂_{p_1}; … ; n̂_{p_{m-1}}; ĵ_{ν,p_m}⟩` at `p_m = -Σ p_i`, `m ≥ 3`.
    pub fn m_point_density_loop(&self, momenta: &[(f64, f64)], nu: usize, opts: &LoopOptions) -> Result<LoopValue, FreeTheoryError> {
        if momenta.len() < 2 {
            return Err(FreeTheoryError::TooFewInsertions { need: 3, got: momenta.len() + 1 });
        }
        let lv = self.loop_sum(momenta, nu, opts)?;
        if lv.tail.norm() > opts.tail_limit * lv.value.norm() {
            return Err(FreeTheoryError::CutoffTooLow { tail: lv.tail.norm(), value: lv.value.norm() });
        }
        Ok(lv)
    }

    /// Single-loop sum for `m ≥ 2` insertions, no tail guard.
    pub fn loop_sum(&self, momenta: &[(f64, f64)], nu: usize, opts: &LoopOptions) -> Result<LoopValue, FreeTheoryError> {
        let ps = self.close_momenta(momenta)?;
        let m = ps.len();
        let max_p0 = ps.iter().map(|p| p.0.abs()).fold(0.0, f64::max);
        let n0 = opts.n0.unwrap_or_else(|| self.default_n0(max_p0));
        let grid = MatsubaraGrid { beta: self.beta, l: self.l, n0 };
        let npos = grid.positive_fermionic();
        let freqs = grid.fermionic();
        let s_m = fermionic_power_tail(self.beta, npos, m as u32);
        let s_m1 = fermionic_power_tail(self.beta, npos, m as u32 + 1);
        let tail_r = |r: u32, s: f64| -> C64 {
            // Σ_{|k0| beyond cutoff} (i k0)^{-r}
            let sym = if r % 2 == 0 { 2.0 } else { 0.0 };
            I.powi(-(r as i32)) * sym * s
        };
        let t_m = tail_r(m as u32, s_m);
        let t_m1 = tail_r(m as u32 + 1, s_m1);
        let orders = cyclic_orders(m);
        let kgrid = brillouin_grid(self.l);
        let norm = -1.0 / (self.beta * self.l as f64);
        let mut orderings = Vec::with_capacity(orders.len());
        let mut total = C64::new(0.0, 0.0);
        let mut tail_total = C64::new(0.0, 0.0);
        for order in &orders {
            let per_k: Result<Vec<(C64, C64)>, FreeTheoryError> = kgrid
                .par_iter()
                .map(|&k| {
                    let (terms, w) = self.loop_terms(k, &ps, order, nu)?;
                    let mut sum = C64::new(0.0, 0.0);
                    let mut tail = C64::new(0.0, 0.0);
                    let mut d = vec![C64::new(0.0, 0.0); m];
                    for t in &terms {
                        let mut acc = C64::new(0.0, 0.0);
                        for &k0 in &freqs {
                            let mut prod = C64::new(1.0, 0.0);
                            for j in 0..m {
                                d[j] = C64::new(t.energies[j], k0 - w[j]);
                                prod /= d[j];
                            }
                            acc += prod;
                        }
                        let shift: C64 = (0..m).map(|j| C64::new(t.energies[j], -w[j])).sum();
                        let tl = t_m - shift * t_m1;
                        sum += t.coeff * acc;
                        tail += t.coeff * tl;
                    }
                    Ok((sum, tail))
                })
                .collect();
            let per_k = per_k?;
            let mut s = C64::new(0.0, 0.0);
            let mut tl = C64::new(0.0, 0.0);
            for (a, b) in per_k {
                s += a;
                tl += b;
            }
            let val = (s + tl) * norm;
            total += val;
            tail_total += tl * norm;
            orderings.push((order.clone(), val));
        }
        Ok(LoopValue { value: total, tail: tail_total, n0, orderings })
    }

    /// Exact Matsubara sum of the same loop by residues (distinct poles assumed).
    pub fn loop_sum_exact(&self, momenta: &[(f64, f64)], nu: usize) -> Result<LoopValue, FreeTheoryError> {
        let ps = self.close_momenta(momenta)?;
        let m = ps.len();
        let orders = cyclic_orders(m);
        let kgrid = brillouin_grid(self.l);
        let norm = -1.0 / (self.beta * self.l as f64);
        let mut orderings = Vec::new();
        let mut total = C64::new(0.0, 0.0);
        for order in &orders {
            let mut s = C64::new(0.0, 0.0);
            for &k in &kgrid {
                let (terms, w) = self.loop_terms(k, &ps, order, nu)?;
                for t in &terms {
                    // β^{-1} Σ_{k0} Π_j (i(k0 - w_j) + e_j)^{-1} with bosonic w_j
                    let poles: Vec<C64> = (0..m).map(|j| C64::new(-t.energies[j], w[j])).collect();
                    let mut r = C64::new(0.0, 0.0);
                    for j in 0..m {
                        let mut pref = C64::new(1.0, 0.0);
                        for l in 0..m {
                            if l != j {
                                pref /= poles[j] - poles[l];
                            }
                        }
                        r += pref * fermi(self.beta, poles[j].re);
                    }
                    s += t.coeff * r * self.beta;
                }
            }
            let val = s * norm;
            total += val;
            orderings.push((order.clone(), val));
        }
        Ok(LoopValue { value: total, tail: C64::new(0.0, 0.0), n0: 0, orderings })
    }

    fn close_momenta(&self, momenta: &[(f64, f64)]) -> Result<Vec<(f64, f64)>, FreeTheoryError> {
        for &(p0, _) in momenta {
            if !is_bosonic(p0, self.beta) {
                return Err(FreeTheoryError::NotBosonic(p0));
            }
        }
        let mut ps = momenta.to_vec();
        let s0: f64 = momenta.iter().map(|p| p.0).sum();
        let s1: f64 = momenta.iter().map(|p| p.1).sum();
        ps.push((-s0, -s1));
        Ok(ps)
    }

    /// Eigenbasis expansion of `Tr[Γ_m g(k_m) ⋯ Γ_1 g(k_1)]` along a flow order.
    fn loop_terms(&self, k: f64, ps: &[(f64, f64)], order: &[usize], nu: usize) -> Result<(Vec<Term>, Vec<f64>), FreeTheoryError> {
        let m = ps.len();
        let last = m - 1;
        let mut ks = Vec::with_capacity(m);
        let mut w = Vec::with_capacity(m);
        let (mut q0, mut q1) = (0.0, 0.0);
        for &i in order {
            ks.push(k - q1);
            w.push(q0);
            q0 += ps[i].0;
            q1 += ps[i].1;
        }
        let eigs: Vec<linalg::Eigh> = ks.iter().map(|&kk| self.eig(kk)).collect::<Result<_, _>>()?;
        // (u_{j+1}^† Γ_j u_j), cyclic
        let mut links = Vec::with_capacity(m);
        for j in 0..m {
            let i = order[j];
            let gam = self.h.current_vertex(if i == last { nu } else { 0 }, ks[j], ps[i].1);
            let next = (j + 1) % m;
            links.push(eigs[next].vectors.adjoint() * gam * &eigs[j].vectors);
        }
        let mm = self.h.m();
        let mut terms = Vec::new();
        let total = mm.pow(m as u32);
        let mut idx = vec![0usize; m];
        for flat in 0..total {
            let mut f = flat;
            for slot in idx.iter_mut() {
                *slot = f % mm;
                f /= mm;
            }
            let mut coeff = C64::new(1.0, 0.0);
            for j in 0..m {
                coeff *= links[j][(idx[(j + 1) % m], idx[j])];
            }
            if coeff.norm() == 0.0 {
                continue;
            }
            let energies = (0..m).map(|j| eigs[j].values[idx[j]] - self.mu).collect();
            terms.push(Term { coeff, energies });
        }
        Ok((terms, w))
    }
}

/// `(f_j - f_i)/(e_i - e_j - i p0)` with its `p0 = 0`, `e_i = e_j` limit `-f'(e)`.
fn pair_weight(beta: f64, ei: f64, ej: f64, p0: f64) -> C64 {
    let de = ei - ej;
    if p0 == 0.0 && de.abs() < 1e-12 {
        return c(fermi_derivative_neg(beta, 0.5 * (ei + ej)), 0.0);
    }
    let num = fermi(beta, ej) - fermi(beta, ei);
    if num == 0.0 {
        return c(0.0, 0.0);
    }
    c(num, 0.0) / C64::new(de, -p0)
}

/// Flow orders around one loop with insertion 0 first: `(m-1)!` permutations.
pub fn cyclic_orders(m: usize) -> Vec<Vec<usize>> {
    let rest: Vec<usize> = (1..m).collect();
    let mut out = Vec::new();
    permute(&rest, &mut Vec::new(), &mut vec![false; rest.len()], &mut out);
    out.into_iter().map(|p| std::iter::once(0).chain(p).collect()).collect()
}

fn permute(items: &[usize], cur: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
    if cur.len() == items.len() {
        out.push(cur.clone());
        return;
    }
    for i in 0..items.len() {
        if !used[i] {
            used[i] = true;
            cur.push(items[i]);
            permute(items, cur, used, out);
            cur.pop();
            used[i] = false;
        }
    }
}

/// `Σ_{n ≥ n_start} ((2π/β)(n + 1/2))^{-r}`.
fn fermionic_power_tail(beta: f64, n_start: usize, r: u32) -> f64 {
    (beta / (2.0 * PI)).powi(r as i32) * hurwitz_zeta(r as f64, n_start as f64 + 0.5)
}

/// Hurwitz zeta `ζ(s, a)` for `s > 1`, `a > 0` by Euler–Maclaurin.
pub fn hurwitz_zeta(s: f64, a: f64) -> f64 {
    const N: usize = 12;
    let mut sum = 0.0;
    for n in 0..N {
        sum += (a + n as f64).powf(-s);
    }
    let x = a + N as f64;
    sum += x.powf(1.0 - s) / (s - 1.0) + 0.5 * x.powf(-s);
    // B_{2j}/(2j)! · s(s+1)…(s+2j-2) x^{-s-2j+1}
    let b = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0];
    let mut fact = 1.0;
    let mut rising = s;
    let mut pow = x.powf(-s - 1.0);
    for (j, bj) in b.iter().enumerate() {
        let two_j = 2 * (j + 1);
        fact *= ((two_j - 1) * two_j) as f64;
        sum += bj / fact * rising * pow;
        rising *= (s + two_j as f64 - 1.0) * (s + two_j as f64);
        pow /= x * x;
    }
    sum
}
