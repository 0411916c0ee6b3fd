//! Fock space of `n` fermionic modes, split into particle-number sectors.
//!
//! Mode `i` is bit `i` of the occupation string. Jordan–Wigner: `a_i` carries the sign
//! `(-1)^{#occupied modes below i}`.

use std::ops::{Add, Mul, Sub};

use crate::linalg::{self, c, CMat, C64};

#[derive(Debug, Clone)]
pub struct FockSpace {
    modes: usize,
    sectors: Vec<Vec<u32>>,
    pos: Vec<u32>,
}

fn below(s: u32, i: usize) -> u32 {
    (s & ((1u32 << i) - 1)).count_ones()
}

fn jw_sign(s: u32, i: usize) -> f64 {
    if below(s, i) % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

impl FockSpace {
    pub fn new(modes: usize) -> Self {
        assert!(modes < 31, "mode count {modes} too large for u32 occupation strings");
        let dim = 1usize << modes;
        let mut sectors = vec![Vec::new(); modes + 1];
        let mut pos = vec![0u32; dim];
        for s in 0..dim as u32 {
            let n = s.count_ones() as usize;
            pos[s as usize] = sectors[n].len() as u32;
            sectors[n].push(s);
        }
        Self { modes, sectors, pos }
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn dim(&self) -> usize {
        1 << self.modes
    }

    pub fn sector_count(&self) -> usize {
        self.sectors.len()
    }

    pub fn sector_states(&self, n: usize) -> &[u32] {
        &self.sectors[n]
    }

    fn zero_op(&self) -> BlockOp {
        BlockOp { blocks: self.sectors.iter().map(|s| CMat::zeros(s.len(), s.len())).collect() }
    }

    /// `Σ_{ij} a*_i K_ij a_j`.
    pub fn quadratic(&self, k: &CMat) -> BlockOp {
        assert_eq!(k.nrows(), self.modes);
        let mut op = self.zero_op();
        let nz: Vec<(usize, usize, C64)> = (0..self.modes)
            .flat_map(|i| (0..self.modes).map(move |j| (i, j)))
            .filter(|&(i, j)| k[(i, j)].norm() != 0.0)
            .map(|(i, j)| (i, j, k[(i, j)]))
            .collect();
        for (n, states) in self.sectors.iter().enumerate() {
            let block = &mut op.blocks[n];
            for (col, &s) in states.iter().enumerate() {
                for &(i, j, v) in &nz {
                    if s & (1 << j) == 0 {
                        continue;
                    }
                    let sj = jw_sign(s, j);
                    let s1 = s ^ (1 << j);
                    if s1 & (1 << i) != 0 {
                        continue;
                    }
                    let si = jw_sign(s1, i);
                    let s2 = s1 | (1 << i);
                    let row = self.pos[s2 as usize] as usize;
                    block[(row, col)] += v * (si * sj);
                }
            }
        }
        op
    }

    /// Diagonal operator `Σ_s f(s) |s⟩⟨s|`.
    pub fn diagonal(&self, f: impl Fn(u32) -> f64) -> BlockOp {
        let mut op = self.zero_op();
        for (n, states) in self.sectors.iter().enumerate() {
            for (i, &s) in states.iter().enumerate() {
                op.blocks[n][(i, i)] = c(f(s), 0.0);
            }
        }
        op
    }

    pub fn number(&self) -> BlockOp {
        self.diagonal(|s| s.count_ones() as f64)
    }

    pub fn identity(&self) -> BlockOp {
        self.diagonal(|_| 1.0)
    }

    /// Dense `2^n × 2^n` annihilation operator `a_i`.
    pub fn annihilation_dense(&self, i: usize) -> CMat {
        let d = self.dim();
        let mut a = CMat::zeros(d, d);
        for s in 0..d as u32 {
            if s & (1 << i) != 0 {
                a[((s ^ (1 << i)) as usize, s as usize)] = c(jw_sign(s, i), 0.0);
            }
        }
        a
    }

    /// Embeds a block operator into the full occupation basis.
    pub fn embed(&self, op: &BlockOp) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for (n, states) in self.sectors.iter().enumerate() {
            for (i, &s) in states.iter().enumerate() {
                for (j, &t) in states.iter().enumerate() {
                    out[(s as usize, t as usize)] = op.blocks[n][(i, j)];
                }
            }
        }
        out
    }
}

/// Number-conserving operator stored as one dense block per particle-number sector.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockOp {
    pub blocks: Vec<CMat>,
}

impl BlockOp {
    pub fn scale(&self, z: C64) -> BlockOp {
        BlockOp { blocks: self.blocks.iter().map(|b| b * z).collect() }
    }

    pub fn adjoint(&self) -> BlockOp {
        BlockOp { blocks: self.blocks.iter().map(|b| b.adjoint()).collect() }
    }

    pub fn commutator(&self, other: &BlockOp) -> BlockOp {
        &(self * other) - &(other * self)
    }

    /// Operator norm (largest over sectors).
    pub fn op_norm(&self) -> f64 {
        self.blocks.iter().map(linalg::op_norm).fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.blocks.iter().map(linalg::max_abs).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        self.blocks.iter().map(|b| b.trace()).sum()
    }

    /// `U^† X U` per sector.
    pub fn conjugate_by(&self, u: &[CMat]) -> BlockOp {
        BlockOp { blocks: self.blocks.iter().zip(u).map(|(b, u)| u.adjoint() * b * u).collect() }
    }
}

impl<'a> Add for &'a BlockOp {
    type Output = BlockOp;
    fn add(self, rhs: &'a BlockOp) -> BlockOp {
        BlockOp { blocks: self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a + b).collect() }
    }
}

impl<'a> Sub for &'a BlockOp {
    type Output = BlockOp;
    fn sub(self, rhs: &'a BlockOp) -> BlockOp {
        BlockOp { blocks: self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a - b).collect() }
    }
}

impl<'a> Mul for &'a BlockOp {
    type Output = BlockOp;
    fn mul(self, rhs: &'a BlockOp) -> BlockOp {
        BlockOp { blocks: self.blocks.iter().zip(&rhs.blocks).map(|(a, b)| a * b).collect() }
    }
}
