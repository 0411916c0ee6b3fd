//! Single-particle lattice model: Bloch Hamiltonians, bands, Fermi points, current vertices.
//!
//! Hopping is stored by displacement blocks `H(d)` for `d = 0..=R`, with `H(-d) = H(d)^†`,
//! and `Ĥ(k) = Σ_d e^{-ikd} H(d)`. Real-space modes are ordered `(x, ρ)` row-major.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::Deserialize;
use thiserror::Error;

use crate::linalg::{self, c, CMat, C64, I};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("model needs at least the on-site block")]
    NoBlocks,
    #[error("block for displacement {d} is {rows}x{cols}, expected {m}x{m}")]
    BlockShape { d: usize, rows: usize, cols: usize, m: usize },
    #[error("on-site block is not Hermitian (defect {0:e})")]
    OnSiteNotHermitian(f64),
    #[error("eigen-solver failed at k = {k}")]
    EigenFailure { k: f64 },
    #[error("momentum grid is empty")]
    EmptyGrid,
    #[error("no Fermi point at mu = {mu}")]
    NoFermiPoint { mu: f64 },
    #[error("mu = {mu} sits at a band edge near k = {k} (|v| = {v:e})")]
    BandEdge { mu: f64, k: f64, v: f64 },
    #[error("degenerate crossing in band {band} at k = {k}: gap {gap:e} to neighbouring band")]
    DegenerateCrossing { band: usize, k: f64, gap: f64 },
    #[error("elastic scattering condition violated by quadruple {0:?}")]
    ElasticScatteringViolated([usize; 4]),
    #[error("potential must have at least one value")]
    EmptyPotential,
    #[error("chain length L = {0} is too short (need L >= 2)")]
    ChainTooShort(usize),
    #[error("invalid model file: {0}")]
    Parse(String),
    #[error("cannot read model file {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// Finite-range translation-invariant hopping with `M` internal degrees of freedom.
#[derive(Debug, Clone, PartialEq)]
pub struct BlochHamiltonian {
    m: usize,
    blocks: Vec<CMat>,
}

impl BlochHamiltonian {
    /// `blocks[d]` is `H(d)` for `d = 0..=R`. The on-site block must be Hermitian.
    pub fn new(blocks: Vec<CMat>) -> Result<Self, ModelError> {
        let m = blocks.first().ok_or(ModelError::NoBlocks)?.nrows();
        for (d, b) in blocks.iter().enumerate() {
            if b.nrows() != m || b.ncols() != m {
                return Err(ModelError::BlockShape { d, rows: b.nrows(), cols: b.ncols(), m });
            }
        }
        let defect = linalg::hermiticity_defect(&blocks[0]);
        if defect > 1e-12 {
            return Err(ModelError::OnSiteNotHermitian(defect));
        }
        Ok(Self { m, blocks })
    }

    /// Nearest-neighbour `-Δ`: `ε(k) = 2t(1 - cos k)`.
    pub fn laplacian(t: f64) -> Self {
        let on = CMat::from_element(1, 1, c(2.0 * t, 0.0));
        let hop = CMat::from_element(1, 1, c(-t, 0.0));
        Self { m: 1, blocks: vec![on, hop] }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn range(&self) -> usize {
        self.blocks.len() - 1
    }

    /// `H(d)` for any integer displacement (zero outside the range).
    pub fn block(&self, d: isize) -> CMat {
        let a = d.unsigned_abs();
        if a >= self.blocks.len() {
            return CMat::zeros(self.m, self.m);
        }
        if d >= 0 {
            self.blocks[a].clone()
        } else {
            self.blocks[a].adjoint()
        }
    }

    /// `Ĥ(k)`, Hermitian-symmetrised.
    pub fn bloch_matrix(&self, k: f64) -> CMat {
        let mut h = CMat::zeros(self.m, self.m);
        for (d, b) in self.blocks.iter().enumerate() {
            let ph = C64::from_polar(1.0, -k * d as f64);
            h += b * ph;
            if d > 0 {
                h += b.adjoint() * ph.conj();
            }
        }
        linalg::hermitian_part(&h)
    }

    /// `dĤ/dk = Σ_d (-id) e^{-ikd} H(d)`, Hermitian-symmetrised.
    pub fn bloch_derivative(&self, k: f64) -> CMat {
        let mut h = CMat::zeros(self.m, self.m);
        for (d, b) in self.blocks.iter().enumerate().skip(1) {
            let df = d as f64;
            let ph = C64::from_polar(1.0, -k * df) * c(0.0, -df);
            h += b * ph;
            h += b.adjoint() * (C64::from_polar(1.0, k * df) * c(0.0, df));
        }
        linalg::hermitian_part(&h)
    }

    /// Sorted eigenvalues and eigenvectors of `Ĥ(k)`.
    pub fn eigensystem(&self, k: f64) -> Result<linalg::Eigh, ModelError> {
        linalg::eigh(&self.bloch_matrix(k)).ok_or(ModelError::EigenFailure { k })
    }

    pub fn band_structure(&self, grid: &[f64]) -> Result<BandStructure, ModelError> {
        if grid.is_empty() {
            return Err(ModelError::EmptyGrid);
        }
        let mut energies = Vec::with_capacity(grid.len());
        let mut vectors = Vec::with_capacity(grid.len());
        for &k in grid {
            let e = self.eigensystem(k)?;
            energies.push(e.values);
            vectors.push(e.vectors);
        }
        Ok(BandStructure { k: grid.to_vec(), energies, vectors })
    }

    /// Current vertex `Ĵ_ν(k, p)`: identity for `ν = 0`, `i(Ĥ(k) - Ĥ(k-p)) / (1 - e^{-ip})` for `ν = 1`.
    pub fn current_vertex(&self, nu: usize, k: f64, p: f64) -> CMat {
        if nu == 0 {
            return CMat::identity(self.m, self.m);
        }
        let denom = C64::new(1.0, 0.0) - C64::from_polar(1.0, -p);
        if denom.norm() < 1e-12 {
            return self.bloch_derivative(k);
        }
        (self.bloch_matrix(k) - self.bloch_matrix(k - p)) * (I / denom)
    }

    /// Dense `LM x LM` one-particle Hamiltonian on the ring `Γ_L` (periodised blocks).
    pub fn real_space_matrix(&self, l: usize) -> CMat {
        let m = self.m;
        let mut h = CMat::zeros(l * m, l * m);
        let r = self.range() as isize;
        for x in 0..l {
            for d in -r..=r {
                let y = (x as isize - d).rem_euclid(l as isize) as usize;
                let b = self.block(d);
                for a in 0..m {
                    for bb in 0..m {
                        h[(x * m + a, y * m + bb)] += b[(a, bb)];
                    }
                }
            }
        }
        h
    }

    /// One-particle kernel `K` of the lattice current `j_{1,x} = Σ a*_s K(s,s') a_{s'}` on the ring.
    ///
    /// Bond form of the Fourier definition: `j_{1,x} = (1/L) Σ_p e^{ipx} ĵ_{1,p}`.
    pub fn current_kernel(&self, x: usize, l: usize) -> CMat {
        dense_from_entries(&self.current_kernel_entries(x, l), l * self.m)
    }

    /// Nonzero `(s, s', K(s,s'))` of [`Self::current_kernel`], duplicates summed by the caller.
    pub fn current_kernel_entries(&self, x: usize, l: usize) -> Vec<(usize, usize, C64)> {
        let m = self.m;
        let li = l as isize;
        let xi = x as isize;
        let mut out = Vec::new();
        let mut push = |s: usize, sp: usize, b: &CMat, factor: C64| {
            for a in 0..m {
                for bb in 0..m {
                    let v = b[(a, bb)] * factor;
                    if v.norm() != 0.0 {
                        out.push((s * m + a, sp * m + bb, v));
                    }
                }
            }
        };
        for (d, b) in self.blocks.iter().enumerate().skip(1) {
            let d = d as isize;
            let bmd = b.adjoint();
            // d > 0: -i Σ_{j=1}^{d} a*_{x+j} H(d) a_{x+j-d}
            for j in 1..=d {
                let s = (xi + j).rem_euclid(li) as usize;
                let sp = (xi + j - d).rem_euclid(li) as usize;
                push(s, sp, b, -I);
            }
            // -d < 0: i Σ_{j=0}^{d-1} a*_{x-j} H(-d) a_{x-j+d}
            for j in 0..d {
                let s = (xi - j).rem_euclid(li) as usize;
                let sp = (xi - j + d).rem_euclid(li) as usize;
                push(s, sp, &bmd, I);
            }
        }
        out
    }

    /// Kernel of `j_{ν,x}`: the site density for `ν = 0`, the bond current for `ν = 1`.
    pub fn observable_kernel(&self, nu: usize, x: usize, l: usize) -> CMat {
        dense_from_entries(&self.observable_kernel_entries(nu, x, l), l * self.m)
    }

    pub fn observable_kernel_entries(&self, nu: usize, x: usize, l: usize) -> Vec<(usize, usize, C64)> {
        if nu == 0 {
            (0..self.m).map(|a| (x * self.m + a, x * self.m + a, c(1.0, 0.0))).collect()
        } else {
            self.current_kernel_entries(x, l)
        }
    }

    /// Solutions of `e_b(k) = μ` with velocities and the assumption verdicts.
    pub fn find_fermi_points(&self, mu: f64, opts: &FermiOptions) -> Result<FermiSurface, ModelError> {
        let n = opts.grid_points.max(8);
        let grid: Vec<f64> = (0..n).map(|j| 2.0 * PI * j as f64 / n as f64).collect();
        let bands = self.band_structure(&grid)?;
        let mut points = Vec::new();
        for band in 0..self.m {
            let f = |k: f64| -> Result<f64, ModelError> { Ok(self.eigensystem(k)?.values[band] - mu) };
            for j in 0..n {
                let k0 = grid[j];
                let k1 = if j + 1 == n { 2.0 * PI } else { grid[j + 1] };
                let f0 = bands.energies[j][band] - mu;
                let f1 = bands.energies[(j + 1) % n][band] - mu;
                let root = if f0 == 0.0 {
                    Some(k0)
                } else if f0 * f1 < 0.0 {
                    let (mut lo, mut hi, mut flo) = (k0, k1, f0);
                    while hi - lo > opts.root_tol {
                        let mid = 0.5 * (lo + hi);
                        let fm = f(mid)?;
                        if fm == 0.0 {
                            lo = mid;
                            hi = mid;
                            break;
                        }
                        if (fm < 0.0) == (flo < 0.0) {
                            lo = mid;
                            flo = fm;
                        } else {
                            hi = mid;
                        }
                    }
                    Some(0.5 * (lo + hi))
                } else {
                    None
                };
                if let Some(kf) = root {
                    let kf = kf.rem_euclid(2.0 * PI);
                    let es = self.eigensystem(kf)?;
                    let u = es.vectors.column(band).into_owned();
                    let dh = self.bloch_derivative(kf);
                    let v = (u.adjoint() * dh * &u)[(0, 0)].re;
                    if v.abs() < opts.velocity_tol {
                        return Err(ModelError::BandEdge { mu, k: kf, v: v.abs() });
                    }
                    let mut gap = f64::INFINITY;
                    for (b, &e) in es.values.iter().enumerate() {
                        if b != band {
                            gap = gap.min((e - es.values[band]).abs());
                        }
                    }
                    points.push(FermiDatum { omega: 0, k_f: kf, v, band, gap });
                }
            }
        }
        if points.is_empty() {
            return Err(ModelError::NoFermiPoint { mu });
        }
        points.sort_by(|a, b| a.k_f.total_cmp(&b.k_f).then(a.band.cmp(&b.band)));
        // a root sitting exactly on a grid node can be reported by two brackets
        points.dedup_by(|a, b| a.band == b.band && (a.k_f - b.k_f).abs() < 1e3 * opts.root_tol);
        for (i, p) in points.iter_mut().enumerate() {
            p.omega = i + 1;
        }
        let degenerate: Vec<usize> = points.iter().filter(|p| p.gap <= opts.delta_degen).map(|p| p.omega).collect();
        let violations = elastic_violations(&points, opts.elastic_tol);
        let net_chirality: i64 = points.iter().map(|p| if p.v > 0.0 { 1 } else { -1 }).sum();
        let report = AssumptionReport { non_degenerate: degenerate.is_empty(), degenerate, elastic_scattering: violations.is_empty(), violations, net_chirality };
        if opts.strict {
            if let Some(&w) = report.degenerate.first() {
                let p = &points[w - 1];
                return Err(ModelError::DegenerateCrossing { band: p.band, k: p.k_f, gap: p.gap });
            }
            if let Some(&q) = report.violations.first() {
                return Err(ModelError::ElasticScatteringViolated(q));
            }
        }
        Ok(FermiSurface { points, report })
    }
}

fn dense_from_entries(entries: &[(usize, usize, C64)], n: usize) -> CMat {
    let mut k = CMat::zeros(n, n);
    for &(i, j, v) in entries {
        k[(i, j)] += v;
    }
    k
}

fn elastic_violations(points: &[FermiDatum], tol: f64) -> Vec<[usize; 4]> {
    let n = points.len();
    let mut out = Vec::new();
    let wrap = |x: f64| {
        let r = x.rem_euclid(2.0 * PI);
        r.min(2.0 * PI - r)
    };
    for a in 0..n {
        for b in 0..n {
            for cc in 0..n {
                for d in 0..n {
                    let lhs = points[a].k_f - points[b].k_f - points[cc].k_f + points[d].k_f;
                    if wrap(lhs) < tol {
                        let trivial = (a == b && cc == d) || (a == cc && b == d);
                        if !trivial {
                            out.push([a + 1, b + 1, cc + 1, d + 1]);
                        }
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct BandStructure {
    pub k: Vec<f64>,
    pub energies: Vec<Vec<f64>>,
    pub vectors: Vec<CMat>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FermiOptions {
    pub grid_points: usize,
    pub root_tol: f64,
    pub velocity_tol: f64,
    pub delta_degen: f64,
    pub elastic_tol: f64,
    /// Turn degeneracy and elastic-scattering failures into errors instead of report flags.
    pub strict: bool,
}

impl Default for FermiOptions {
    fn default() -> Self {
        Self { grid_points: 4096, root_tol: 1e-12, velocity_tol: 1e-8, delta_degen: 1e-8, elastic_tol: 1e-9, strict: false }
    }
}

/// One Fermi point: label, crossing momentum in `[0, 2π)`, velocity, band index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FermiDatum {
    pub omega: usize,
    pub k_f: f64,
    pub v: f64,
    pub band: usize,
    /// Distance to the nearest other band at `k_f`.
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub non_degenerate: bool,
    pub degenerate: Vec<usize>,
    pub elastic_scattering: bool,
    /// Quadruples `(ω1, ω2, ω3, ω4)` with `k1 - k2 = k3 - k4 mod 2π` outside the trivial pairings.
    pub violations: Vec<[usize; 4]>,
    pub net_chirality: i64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FermiSurface {
    pub points: Vec<FermiDatum>,
    pub report: AssumptionReport,
}

/// Translation-invariant density-density potential `w(d) = w(-d)`, `d = 0..=range`.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoBodyPotential {
    values: Vec<f64>,
}

impl TwoBodyPotential {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        if values.is_empty() {
            return Err(ModelError::EmptyPotential);
        }
        Ok(Self { values })
    }

    pub fn zero() -> Self {
        Self { values: vec![0.0] }
    }

    /// `w(0) = 0`, `w(±1) = 1`.
    pub fn nearest_neighbour() -> Self {
        Self { values: vec![0.0, 1.0] }
    }

    pub fn range(&self) -> usize {
        self.values.len() - 1
    }

    pub fn value(&self, d: isize) -> f64 {
        self.values.get(d.unsigned_abs()).copied().unwrap_or(0.0)
    }

    pub fn fourier(&self, k: f64) -> f64 {
        self.values[0] + 2.0 * self.values.iter().enumerate().skip(1).map(|(d, w)| w * (k * d as f64).cos()).sum::<f64>()
    }

    /// `w` periodised on the ring of length `l`: `Σ_n w(d + nL)`.
    pub fn periodized(&self, d: usize, l: usize) -> f64 {
        let r = self.range() as isize;
        let li = l as isize;
        (-r..=r).filter(|e| (e - d as isize).rem_euclid(li) == 0).map(|e| self.value(e)).sum()
    }
}

/// Lattice model: hopping, potential, chemical potential and coupling.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeModel {
    pub hamiltonian: BlochHamiltonian,
    pub potential: TwoBodyPotential,
    pub mu: f64,
    pub lambda: f64,
}

impl LatticeModel {
    pub fn laplacian(t: f64, mu: f64) -> Self {
        Self { hamiltonian: BlochHamiltonian::laplacian(t), potential: TwoBodyPotential::zero(), mu, lambda: 0.0 }
    }

    /// Reads the TOML model format:
    ///
    /// ```toml
    /// [model]
    /// M = 1
    /// mu = 2.0
    /// lambda = 0.0
    /// [model.blocks]
    /// "0" = [[2.0, 0.0]]
    /// "1" = [[-1.0, 0.0]]
    /// [potential]
    /// range = 1
    /// values = [0.0, 1.0]
    /// ```
    pub fn from_toml_str(s: &str) -> Result<Self, ModelError> {
        let file: ModelFile = toml::from_str(s).map_err(|e| ModelError::Parse(e.to_string()))?;
        file.into_model()
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self, ModelError> {
        let s = std::fs::read_to_string(path).map_err(|source| ModelError::Io { path: path.display().to_string(), source })?;
        Self::from_toml_str(&s)
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    model: ModelSection,
    potential: Option<PotentialSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelSection {
    #[serde(rename = "M")]
    m: usize,
    mu: f64,
    #[serde(default)]
    lambda: f64,
    blocks: BTreeMap<String, Vec<[f64; 2]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialSection {
    range: usize,
    values: Vec<f64>,
}

impl ModelFile {
    fn into_model(self) -> Result<LatticeModel, ModelError> {
        let m = self.model.m;
        if m == 0 {
            return Err(ModelError::Parse("M must be positive".into()));
        }
        let mut by_d: BTreeMap<usize, CMat> = BTreeMap::new();
        for (key, entries) in &self.model.blocks {
            let d: usize = key.trim().parse().map_err(|_| ModelError::Parse(format!("displacement key {key:?} is not a non-negative integer")))?;
            if entries.len() != m * m {
                return Err(ModelError::Parse(format!("block {d} has {} entries, expected {}", entries.len(), m * m)));
            }
            let mat = CMat::from_row_iterator(m, m, entries.iter().map(|p| c(p[0], p[1])));
            by_d.insert(d, mat);
        }
        let range = by_d.keys().next_back().copied().ok_or(ModelError::NoBlocks)?;
        let blocks = (0..=range).map(|d| by_d.remove(&d).unwrap_or_else(|| CMat::zeros(m, m))).collect();
        let hamiltonian = BlochHamiltonian::new(blocks)?;
        let potential = match self.potential {
            Some(p) => {
                if p.values.len() != p.range + 1 {
                    return Err(ModelError::Parse(format!("potential range {} needs {} values, got {}", p.range, p.range + 1, p.values.len())));
                }
                TwoBodyPotential::new(p.values)?
            }
            None => TwoBodyPotential::zero(),
        };
        Ok(LatticeModel { hamiltonian, potential, mu: self.model.mu, lambda: self.model.lambda })
    }
}

/// Allowed Bloch momenta `2πn/L`, `n = 0..L`.
pub fn brillouin_grid(l: usize) -> Vec<f64> {
    (0..l).map(|n| 2.0 * PI * n as f64 / l as f64).collect()
}
