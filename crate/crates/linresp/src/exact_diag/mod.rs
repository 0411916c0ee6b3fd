//! Exact diagonalization of small interacting chains.
//!
//! Imaginary-time evolution is `γ_t(A) = e^{tK} A e^{-tK}` with `K = H - μN`; real-time
//! evolution uses the same `K`, which is harmless for number-conserving observables.

pub(crate) mod dynamics;
mod fock;
mod integrals;

pub use dynamics::{full_response_small, start_time, DynamicsOptions, MAX_DYNAMICS_MODES};
pub use fock::{BlockOp, FockSpace};

use std::f64::consts::PI;

use thiserror::Error;

use crate::free_theory::is_bosonic;
use crate::lattice_model::{LatticeModel, ModelError};
use crate::linalg::{self, c, CMat, C64, I};
use crate::report::CheckReport;

use integrals::{weighted_d2, weighted_moment};

pub const MAX_MODES: usize = 14;

#[derive(Debug, Error)]
pub enum EdError {
    #[error("L*M = {modes} exceeds the dense budget of {max} modes")]
    DimensionTooLarge { modes: usize, max: usize },
    #[error("times {0} and {1} coincide modulo beta")]
    CoincidentTimes(f64, f64),
    #[error("eta_beta = {0} is not a positive multiple of 2*pi/beta")]
    EtaNotMatsubara(f64),
    #[error("frequency {0} is not bosonic")]
    NotBosonic(f64),
    #[error("eigen-decomposition failed in sector N = {0}")]
    EigenFailure(usize),
    #[error("unitarity defect {defect:e} exceeds {limit:e}")]
    StepControlFailure { defect: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Gibbs state of `H - μN` on a ring of `L` cells.
#[derive(Debug, Clone)]
pub struct ManyBodyEnsemble {
    pub fock: FockSpace,
    pub model: LatticeModel,
    pub l: usize,
    pub beta: f64,
    /// `H` in the occupation basis (without `-μN`).
    pub hamiltonian: BlockOp,
    energies: Vec<Vec<f64>>,
    vectors: Vec<CMat>,
    e0: f64,
    log_z: f64,
}

/// Builds `H = Σ a* h a + λ Σ (n_x - 1/2) w(x-y) (n_y - 1/2)` and diagonalizes `H - μN` per sector.
pub fn build_ensemble(model: &LatticeModel, l: usize, beta: f64) -> Result<ManyBodyEnsemble, EdError> {
    if l < 2 {
        return Err(ModelError::ChainTooShort(l).into());
    }
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(EdError::InvalidParameter(format!("beta = {beta}")));
    }
    let m = model.hamiltonian.m();
    let modes = l * m;
    if modes > MAX_MODES {
        return Err(EdError::DimensionTooLarge { modes, max: MAX_MODES });
    }
    let fock = FockSpace::new(modes);
    let h1 = model.hamiltonian.real_space_matrix(l);
    let mut h = fock.quadratic(&h1);
    if model.lambda != 0.0 {
        let wmat: Vec<Vec<f64>> = (0..modes)
            .map(|i| (0..modes).map(|j| model.potential.periodized((i / m + l - j / m) % l, l)).collect())
            .collect();
        let lam = model.lambda;
        let inter = fock.diagonal(|s| {
            let occ: Vec<f64> = (0..modes).map(|i| if s & (1 << i) != 0 { 0.5 } else { -0.5 }).collect();
            let mut e = 0.0;
            for i in 0..modes {
                for j in 0..modes {
                    e += occ[i] * wmat[i][j] * occ[j];
                }
            }
            lam * e
        });
        h = &h + &inter;
    }
    let mut energies = Vec::with_capacity(fock.sector_count());
    let mut vectors = Vec::with_capacity(fock.sector_count());
    for (n, block) in h.blocks.iter().enumerate() {
        let k = block - CMat::identity(block.nrows(), block.nrows()) * c(model.mu * n as f64, 0.0);
        let e = linalg::eigh(&k).ok_or(EdError::EigenFailure(n))?;
        energies.push(e.values);
        vectors.push(e.vectors);
    }
    let e0 = energies.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let z: f64 = energies.iter().flatten().map(|e| (-beta * (e - e0)).exp()).sum();
    Ok(ManyBodyEnsemble { fock, model: model.clone(), l, beta, hamiltonian: h, energies, vectors, e0, log_z: z.ln() })
}

/// Observable tagged with an imaginary time.
#[derive(Debug, Clone, Copy)]
pub struct Timed<'a> {
    pub op: &'a BlockOp,
    pub t: f64,
}

/// Observable integrated as `∫_0^β dt e^{-iωt} O(t)`.
#[derive(Debug, Clone, Copy)]
pub struct AtFrequency<'a> {
    pub op: &'a BlockOp,
    pub omega: f64,
}

impl ManyBodyEnsemble {
    pub fn modes(&self) -> usize {
        self.fock.modes()
    }

    /// Eigenvalues of `H - μN` in sector `n`.
    pub fn energies(&self, n: usize) -> &[f64] {
        &self.energies[n]
    }

    /// Residual `max_N ‖K_N U - U E‖`.
    pub fn decomposition_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for (n, block) in self.hamiltonian.blocks.iter().enumerate() {
            let d = block.nrows();
            let k = block - CMat::identity(d, d) * c(self.model.mu * n as f64, 0.0);
            let u = &self.vectors[n];
            let mut ue = u.clone();
            for (j, &e) in self.energies[n].iter().enumerate() {
                for i in 0..d {
                    ue[(i, j)] *= e;
                }
            }
            worst = worst.max(linalg::max_abs(&(k * u - ue)));
        }
        worst
    }

    fn log_weight(&self, e: f64) -> f64 {
        -self.beta * (e - self.e0) - self.log_z
    }

    /// Gibbs weights per sector; they sum to one.
    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.energies.iter().map(|es| es.iter().map(|&e| self.log_weight(e).exp()).collect()).collect()
    }

    pub fn to_eigenbasis(&self, op: &BlockOp) -> BlockOp {
        op.conjugate_by(&self.vectors)
    }

    pub fn expectation(&self, op: &BlockOp) -> C64 {
        let x = self.to_eigenbasis(op);
        let mut s = C64::new(0.0, 0.0);
        for (n, es) in self.energies.iter().enumerate() {
            for (a, &e) in es.iter().enumerate() {
                s += x.blocks[n][(a, a)] * self.log_weight(e).exp();
            }
        }
        s
    }

    pub fn observable(&self, kernel: &CMat) -> BlockOp {
        self.fock.quadratic(kernel)
    }

    /// Site density `n_x = Σ_ρ n_{x,ρ}`.
    pub fn density(&self, x: usize) -> BlockOp {
        self.observable(&self.model.hamiltonian.observable_kernel(0, x, self.l))
    }

    /// `j_{ν,x}`: density for `ν = 0`, bond current for `ν = 1`.
    pub fn current(&self, nu: usize, x: usize) -> BlockOp {
        self.observable(&self.model.hamiltonian.observable_kernel(nu, x, self.l))
    }

    /// `ĵ_{ν,p} = Σ_x e^{-ipx} j_{ν,x}`.
    pub fn current_momentum(&self, nu: usize, p: f64) -> BlockOp {
        let lm = self.modes();
        let mut k = CMat::zeros(lm, lm);
        for x in 0..self.l {
            k += self.model.hamiltonian.observable_kernel(nu, x, self.l) * C64::from_polar(1.0, -p * x as f64);
        }
        self.observable(&k)
    }

    /// `Σ_x v_x n_x`.
    pub fn site_potential(&self, v: &[f64]) -> BlockOp {
        let m = self.model.hamiltonian.m();
        self.fock.diagonal(|s| (0..self.modes()).filter(|i| s & (1 << i) != 0).map(|i| v[i / m]).sum())
    }

    /// Time-ordered moment `⟨T O_1(t_1) ⋯ O_n(t_n)⟩` for even operators.
    pub fn moment(&self, ops: &[Timed]) -> Result<C64, EdError> {
        if ops.is_empty() {
            return Ok(C64::new(1.0, 0.0));
        }
        let mut items: Vec<(f64, BlockOp)> = ops.iter().map(|o| (o.t.rem_euclid(self.beta), self.to_eigenbasis(o.op))).collect();
        items.sort_by(|a, b| b.0.total_cmp(&a.0));
        for w in items.windows(2) {
            if (w[0].0 - w[1].0).abs() < 1e-14 * self.beta {
                return Err(EdError::CoincidentTimes(w[0].0, w[1].0));
            }
        }
        let tn = items.last().map(|x| x.0).unwrap_or(0.0);
        let mut total = C64::new(0.0, 0.0);
        for (n, es) in self.energies.iter().enumerate() {
            let d = es.len();
            let decay = |tau: f64| -> Vec<f64> { es.iter().map(|&e| (-tau * (e - self.e0)).exp()).collect() };
            // e^{-(β - t1 + tn)K} O1 e^{-(t1 - t2)K} O2 ⋯ On
            let mut chain = CMat::identity(d, d);
            scale_rows(&mut chain, &decay(self.beta - items[0].0 + tn));
            for (j, (_, op)) in items.iter().enumerate() {
                chain = chain * &op.blocks[n];
                if j + 1 < items.len() {
                    scale_cols(&mut chain, &decay(items[j].0 - items[j + 1].0));
                }
            }
            total += chain.trace();
        }
        Ok(total * (-self.log_z).exp())
    }

    /// Connected time-ordered correlation `⟨T O_1(t_1); ⋯; O_n(t_n)⟩`.
    pub fn euclidean_cumulant(&self, ops: &[Timed]) -> Result<C64, EdError> {
        let n = ops.len();
        let mut cache = vec![None; 1 << n];
        for mask in 1..(1usize << n) {
            let sub: Vec<Timed> = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ops[i]).collect();
            cache[mask] = Some(self.moment(&sub)?);
        }
        Ok(mobius(n, &|mask| cache[mask].unwrap()))
    }

    /// Raw product `⟨γ_{t1}(X) γ_{t2}(Y)⟩` for `|t1 - t2| < 2β`.
    pub fn raw_two_point(&self, x: &BlockOp, t1: f64, y: &BlockOp, t2: f64) -> C64 {
        let xe = self.to_eigenbasis(x);
        let ye = self.to_eigenbasis(y);
        let mut s = C64::new(0.0, 0.0);
        for (n, es) in self.energies.iter().enumerate() {
            for (a, &ea) in es.iter().enumerate() {
                for (b, &eb) in es.iter().enumerate() {
                    let ex = -self.beta * (ea - self.e0) + (t1 - t2) * (ea - eb) - self.log_z;
                    s += xe.blocks[n][(a, b)] * ye.blocks[n][(b, a)] * ex.exp();
                }
            }
        }
        s
    }

    /// `|⟨γ_t(A) γ_s(B)⟩ - ⟨γ_{s+β}(B) γ_t(A)⟩|`.
    pub fn kms_check(&self, a: &BlockOp, b: &BlockOp, t: f64, s: f64) -> CheckReport {
        let lhs = self.raw_two_point(a, t, b, s);
        let rhs = self.raw_two_point(b, s + self.beta, a, t);
        CheckReport::new("kms", lhs, rhs, (lhs - rhs).norm(), 1e-9).param("t", t).param("s", s).param("beta", self.beta)
    }

    /// `∫ Π dt_i e^{-iω_i t_i} ⟨T X_1(t_1) ⋯ X_r(t_r) O(0)⟩` for `r ≤ 2`, operators in the eigenbasis.
    fn integrated_moment(&self, free: &[(&BlockOp, f64)], fixed: &BlockOp) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (n, es) in self.energies.iter().enumerate() {
            let d = es.len();
            let lw: Vec<f64> = es.iter().map(|&e| self.log_weight(e)).collect();
            let o = &fixed.blocks[n];
            match free {
                [] => {
                    for a in 0..d {
                        s += o[(a, a)] * lw[a].exp();
                    }
                }
                [(x, wx)] => {
                    let x = &x.blocks[n];
                    for a in 0..d {
                        for b in 0..d {
                            let z = C64::new(es[a] - es[b], -wx);
                            s += x[(a, b)] * o[(b, a)] * weighted_moment(0, lw[a], z, self.beta);
                        }
                    }
                }
                [(x, wx), (y, wy)] => {
                    let (x, y) = (&x.blocks[n], &y.blocks[n]);
                    for a in 0..d {
                        for b in 0..d {
                            for cc in 0..d {
                                let oc = o[(cc, a)];
                                if oc.norm() == 0.0 {
                                    continue;
                                }
                                let p1 = x[(a, b)] * y[(b, cc)];
                                let p2 = y[(a, b)] * x[(b, cc)];
                                if p1.norm() != 0.0 {
                                    let aa = C64::new(es[a] - es[b], -wx);
                                    let bb = C64::new(es[b] - es[cc], -wy);
                                    s += p1 * oc * weighted_d2(lw[a], aa, bb, self.beta);
                                }
                                if p2.norm() != 0.0 {
                                    let aa = C64::new(es[a] - es[b], -wy);
                                    let bb = C64::new(es[b] - es[cc], -wx);
                                    s += p2 * oc * weighted_d2(lw[a], aa, bb, self.beta);
                                }
                            }
                        }
                    }
                }
                _ => unreachable!("at most two integrated insertions"),
            }
        }
        s
    }

    /// `∫ Π dt_i e^{-iω_i t_i} ⟨T X_1(t_1); ⋯; X_r(t_r); O(0)⟩` with bosonic `ω_i`, `r ≤ 2`.
    pub fn integrated_cumulant(&self, free: &[AtFrequency], fixed: &BlockOp) -> Result<C64, EdError> {
        if free.len() > 2 {
            return Err(EdError::InvalidParameter(format!("{} integrated insertions (max 2)", free.len())));
        }
        for f in free {
            if !is_bosonic(f.omega, self.beta) {
                return Err(EdError::NotBosonic(f.omega));
            }
        }
        let xs: Vec<BlockOp> = free.iter().map(|f| self.to_eigenbasis(f.op)).collect();
        let o = self.to_eigenbasis(fixed);
        let r = free.len();
        let n = r + 1;
        let block_value = |mask: usize| -> C64 {
            let members: Vec<usize> = (0..r).filter(|i| mask & (1 << i) != 0).collect();
            if mask & (1 << r) != 0 {
                let fr: Vec<(&BlockOp, f64)> = members.iter().map(|&i| (&xs[i], free[i].omega)).collect();
                self.integrated_moment(&fr, &o)
            } else {
                let total: f64 = members.iter().map(|&i| free[i].omega).sum();
                if (total * self.beta / (2.0 * PI)).abs() > 1e-9 {
                    return C64::new(0.0, 0.0);
                }
                let fr: Vec<(&BlockOp, f64)> = members[1..].iter().map(|&i| (&xs[i], free[i].omega)).collect();
                self.integrated_moment(&fr, &xs[members[0]]) * self.beta
            }
        };
        Ok(mobius(n, &block_value))
    }

    /// Real-time Duhamel term versus its imaginary-time image, `n ∈ {1, 2}`.
    pub fn wick_rotation_check(&self, n: usize, o: &BlockOp, p: &BlockOp, eta_beta: f64, t: f64) -> Result<CheckReport, EdError> {
        let step = 2.0 * PI / self.beta;
        let ratio = eta_beta / step;
        if !(eta_beta > 0.0) || (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(EdError::EtaNotMatsubara(eta_beta));
        }
        if t > 0.0 {
            return Err(EdError::InvalidParameter(format!("t = {t} must be <= 0")));
        }
        let oe = self.to_eigenbasis(o);
        let pe = self.to_eigenbasis(p);
        let eta = eta_beta;
        let lhs = match n {
            1 => self.duhamel_first_eigen(&oe, &pe, eta) * (eta * t).exp(),
            2 => self.duhamel_second(&oe, &pe, eta) * (2.0 * eta * t).exp(),
            _ => return Err(EdError::InvalidParameter(format!("n = {n} (supported: 1, 2)"))),
        };
        let free: Vec<AtFrequency> = (0..n).map(|_| AtFrequency { op: p, omega: eta }).collect();
        let cum = self.integrated_cumulant(&free, o)?;
        let fact = if n == 1 { 1.0 } else { 2.0 };
        let rhs = (-I).powi(n as i32) * (n as f64 * eta * t).exp() / fact * cum;
        let tol = if n == 1 { 1e-8 } else { 1e-7 };
        Ok(CheckReport::new("wick_rotation", lhs, rhs, (lhs - rhs).norm(), tol)
            .param("n", n)
            .param("eta_beta", eta)
            .param("t", t)
            .param("beta", self.beta)
            .param("lambda", self.model.lambda))
    }

    /// `∫_{-∞}^0 ds e^{ηs} ⟨[O, P(s)]⟩` for any `η > 0`; `-i` times it is the first-order response of `O`.
    pub fn duhamel_first(&self, o: &BlockOp, p: &BlockOp, eta: f64) -> C64 {
        self.duhamel_first_eigen(&self.to_eigenbasis(o), &self.to_eigenbasis(p), eta)
    }

    fn duhamel_first_eigen(&self, o: &BlockOp, p: &BlockOp, eta: f64) -> C64 {
        let mut s = C64::new(0.0, 0.0);
        for (sec, es) in self.energies.iter().enumerate() {
            let (ob, pb) = (&o.blocks[sec], &p.blocks[sec]);
            for (a, &ea) in es.iter().enumerate() {
                let wa = self.log_weight(ea).exp();
                for (b, &eb) in es.iter().enumerate() {
                    let dab = ea - eb;
                    s += wa * ob[(a, b)] * pb[(b, a)] / C64::new(eta, -dab);
                    s -= wa * pb[(a, b)] * ob[(b, a)] / C64::new(eta, dab);
                }
            }
        }
        s
    }

    /// `∫_{-∞}^0 ds1 ∫_{-∞}^{s1} ds2 e^{η(s1+s2)} ⟨[[O, P(s1)], P(s2)]⟩`.
    fn duhamel_second(&self, o: &BlockOp, p: &BlockOp, eta: f64) -> C64 {
        let mut total = C64::new(0.0, 0.0);
        for (sec, es) in self.energies.iter().enumerate() {
            let (ob, pb) = (&o.blocks[sec], &p.blocks[sec]);
            let d = es.len();
            for a in 0..d {
                let wa = self.log_weight(es[a]).exp();
                for b in 0..d {
                    for cc in 0..d {
                        let s1 = es[a] - es[b];
                        let s2 = es[b] - es[cc];
                        let s3 = es[cc] - es[a];
                        let kern = |d1: f64, d2: f64| C64::new(1.0, 0.0) / (C64::new(eta, d2) * C64::new(2.0 * eta, d1 + d2));
                        let pp = pb[(a, b)];
                        // O P1 P2: P1 in slot 2, P2 in slot 3
                        total += wa * ob[(a, b)] * pb[(b, cc)] * pb[(cc, a)] * kern(s2, s3);
                        // -P1 O P2
                        total -= wa * pp * ob[(b, cc)] * pb[(cc, a)] * kern(s1, s3);
                        // -P2 O P1
                        total -= wa * pp * ob[(b, cc)] * pb[(cc, a)] * kern(s3, s1);
                        // +P2 P1 O
                        total += wa * pp * pb[(b, cc)] * ob[(cc, a)] * kern(s2, s1);
                    }
                }
            }
        }
        total
    }

    /// `‖i[H, n_x] + j_x - j_{x-1}‖` in operator norm.
    pub fn continuity_check(&self, x: usize) -> CheckReport {
        let nx = self.density(x);
        let jx = self.current(1, x);
        let jm = self.current(1, (x + self.l - 1) % self.l);
        let comm = self.hamiltonian.commutator(&nx).scale(I);
        let diff = &(&comm + &jx) - &jm;
        let res = diff.op_norm();
        CheckReport::new("continuity", C64::new(res, 0.0), C64::new(0.0, 0.0), res, 1e-12).param("x", x).param("lambda", self.model.lambda)
    }

    /// `|⟨T n̂_{(p0,0)}; ĵ_{ν,(-p0,0)}⟩|`.
    pub fn ward_p0_check(&self, p0: f64, nu: usize) -> Result<CheckReport, EdError> {
        if p0 == 0.0 {
            return Err(EdError::InvalidParameter("p0 must be nonzero".into()));
        }
        let n_op = self.current_momentum(0, 0.0);
        let j = self.current_momentum(nu, 0.0);
        let v = self.integrated_cumulant(&[AtFrequency { op: &n_op, omega: p0 }], &j)? * self.beta;
        Ok(CheckReport::new("ward_p0", v, C64::new(0.0, 0.0), v.norm(), 1e-9).param("p0", p0).param("nu", nu).param("lambda", self.model.lambda))
    }

    /// `(1/βL) ⟨T n̂_p; ĵ_{ν,-p}⟩`.
    pub fn density_current_two_point(&self, p0: f64, p1: f64, nu: usize) -> Result<C64, EdError> {
        let n_op = self.current_momentum(0, p1);
        let j = self.current_momentum(nu, -p1);
        Ok(self.integrated_cumulant(&[AtFrequency { op: &n_op, omega: p0 }], &j)? / self.l as f64)
    }

    /// `(1/βL) ⟨T n̂_{p_1}; n̂_{p_2}; ĵ_{ν,p_3}⟩` with `p_3 = -p_1 - p_2`.
    pub fn three_point(&self, p1: (f64, f64), p2: (f64, f64), nu: usize) -> Result<C64, EdError> {
        let a = self.current_momentum(0, p1.1);
        let b = self.current_momentum(0, p2.1);
        let j = self.current_momentum(nu, -p1.1 - p2.1);
        Ok(self.integrated_cumulant(&[AtFrequency { op: &a, omega: p1.0 }, AtFrequency { op: &b, omega: p2.0 }], &j)? / self.l as f64)
    }
}

fn scale_rows(m: &mut CMat, f: &[f64]) {
    for (i, &v) in f.iter().enumerate() {
        for j in 0..m.ncols() {
            m[(i, j)] *= v;
        }
    }
}

fn scale_cols(m: &mut CMat, f: &[f64]) {
    for (j, &v) in f.iter().enumerate() {
        for i in 0..m.nrows() {
            m[(i, j)] *= v;
        }
    }
}

/// All set partitions of `{0, …, n-1}` as lists of bitmasks.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn rec(i: usize, n: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == n {
            out.push(cur.clone());
            return;
        }
        for b in 0..cur.len() {
            cur[b] |= 1 << i;
            rec(i + 1, n, cur, out);
            cur[b] &= !(1 << i);
        }
        cur.push(1 << i);
        rec(i + 1, n, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, n, &mut Vec::new(), &mut out);
    out
}

/// `Σ_π (-1)^{|π|-1} (|π|-1)! Π_{B∈π} m(B)`.
fn mobius(n: usize, m: &dyn Fn(usize) -> C64) -> C64 {
    let mut total = C64::new(0.0, 0.0);
    for part in set_partitions(n) {
        let k = part.len();
        let coeff = if k % 2 == 1 { 1.0 } else { -1.0 } * (1..k).map(|v| v as f64).product::<f64>();
        let mut prod = C64::new(coeff, 0.0);
        for &b in &part {
            prod *= m(b);
        }
        total += prod;
    }
    total
}

#[cfg(test)]
mod tests;
