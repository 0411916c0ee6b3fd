//! Small dense/sparse linear-algebra helpers shared by the physics modules.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;

pub const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `(A + A^†) / 2`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Largest entrywise modulus of `A - A^†`.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Eigh {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

/// Returns `None` if the QR iteration does not converge.
pub fn eigh(a: &CMat) -> Option<Eigh> {
    let n = a.nrows();
    if n == 0 {
        return Some(Eigh { values: vec![], vectors: CMat::zeros(0, 0) });
    }
    if n == 1 {
        return Some(Eigh { values: vec![a[(0, 0)].re], vectors: CMat::identity(1, 1) });
    }
    let se = nalgebra::SymmetricEigen::try_new(hermitian_part(a), f64::EPSILON, 0)?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| se.eigenvalues[i].total_cmp(&se.eigenvalues[j]));
    let values = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &se.eigenvectors.column(i));
    }
    Some(Eigh { values, vectors })
}

/// `exp(-i tau A)` for Hermitian `A` given its eigen-decomposition.
pub fn expm_from_eigh(e: &Eigh, tau: f64) -> CMat {
    let n = e.values.len();
    let mut scaled = e.vectors.clone();
    for (j, &ev) in e.values.iter().enumerate() {
        let ph = C64::from_polar(1.0, -tau * ev);
        for i in 0..n {
            scaled[(i, j)] *= ph;
        }
    }
    scaled * e.vectors.adjoint()
}

pub fn singular_values(a: &CMat) -> Vec<f64> {
    let svd = a.clone().svd(false, false);
    svd.singular_values.iter().copied().collect()
}

/// Spectral norm.
pub fn op_norm(a: &CMat) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    singular_values(a).into_iter().fold(0.0, f64::max)
}

/// 2-norm condition number; infinite for singular input.
pub fn condition_number(a: &CMat) -> f64 {
    let s = singular_values(a);
    let max = s.iter().copied().fold(0.0, f64::max);
    let min = s.iter().copied().fold(f64::INFINITY, f64::min);
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0f64, |m, z| m.max(z.norm()))
}

/// `‖V^† V - 1‖_max` for a matrix with orthonormal columns.
pub fn isometry_defect(v: &CMat) -> f64 {
    let g = v.adjoint() * v;
    let n = g.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((g[(i, j)] - target).norm());
        }
    }
    worst
}

/// Hermitian matrix in compressed-row form, used for banded one-particle Hamiltonians.
#[derive(Debug, Clone)]
pub struct SparseHermitian {
    n: usize,
    rows: Vec<Vec<(usize, C64)>>,
}

impl SparseHermitian {
    pub fn from_dense(a: &CMat, drop_below: f64) -> Self {
        let n = a.nrows();
        let rows = (0..n)
            .map(|i| (0..n).filter(|&j| a[(i, j)].norm() > drop_below).map(|j| (j, a[(i, j)])).collect())
            .collect();
        Self { n, rows }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `Y = (alpha A + diag(shift)) X`, column by column.
    pub fn apply_into(&self, alpha: f64, shift: &[f64], x: &CMat, y: &mut CMat) {
        let ncols = x.ncols();
        for c in 0..ncols {
            let xc = x.column(c);
            let mut yc = y.column_mut(c);
            for (i, row) in self.rows.iter().enumerate() {
                let mut acc = xc[i] * shift[i];
                for &(j, v) in row {
                    acc += v * xc[j] * alpha;
                }
                yc[i] = acc;
            }
        }
    }

    /// Gershgorin bounds of `alpha A + diag(shift)`.
    pub fn gershgorin(&self, alpha: f64, shift: &[f64]) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for (i, row) in self.rows.iter().enumerate() {
            let mut centre = shift[i];
            let mut radius = 0.0;
            for &(j, v) in row {
                if j == i {
                    centre += alpha * v.re;
                } else {
                    radius += (alpha * v).norm();
                }
            }
            lo = lo.min(centre - radius);
            hi = hi.max(centre + radius);
        }
        (lo, hi)
    }
}

/// Bessel functions `J_0..=J_kmax` at `z >= 0` by Miller's downward recurrence.
pub fn bessel_j_sequence(z: f64, kmax: usize) -> Vec<f64> {
    let mut out = vec![0.0; kmax + 1];
    if z == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let start = kmax.max(z.ceil() as usize) + 40 + (z.sqrt() * 10.0) as usize;
    let mut jp1 = 0.0f64;
    let mut j = 1e-300f64;
    let mut norm = 0.0f64;
    let mut tmp = vec![0.0; start + 1];
    for n in (1..=start).rev() {
        let jm1 = (2.0 * n as f64 / z) * j - jp1;
        jp1 = j;
        j = jm1;
        tmp[n - 1] = j;
        if j.abs() > 1e250 {
            for t in tmp.iter_mut().skip(n - 1) {
                *t *= 1e-250;
            }
            j *= 1e-250;
            jp1 *= 1e-250;
        }
    }
    // normalisation: J_0 + 2 sum_k J_{2k} = 1
    for (n, &t) in tmp.iter().enumerate() {
        if n == 0 {
            norm += t;
        } else if n % 2 == 0 {
            norm += 2.0 * t;
        }
    }
    for k in 0..=kmax {
        out[k] = tmp[k] / norm;
    }
    out
}

/// Applies `exp(-i tau (alpha A + diag(shift)))` to the columns of `x` with a Chebyshev series.
pub fn chebyshev_expm_apply(a: &SparseHermitian, alpha: f64, shift: &[f64], tau: f64, x: &CMat) -> CMat {
    let (lo, hi) = a.gershgorin(alpha, shift);
    let centre = 0.5 * (hi + lo);
    let radius = (0.5 * (hi - lo)).max(1e-12) * 1.01;
    let z = tau.abs() * radius;
    let mut kmax = (z + 20.0 + 4.0 * z.cbrt()) as usize;
    let mut bess = bessel_j_sequence(z, kmax);
    while kmax > 1 && bess[kmax].abs() < 1e-18 && bess[kmax - 1].abs() < 1e-18 && (kmax as f64) > z {
        kmax -= 1;
    }
    bess.truncate(kmax + 1);
    let sign = tau.signum();
    let shifted: Vec<f64> = shift.iter().map(|s| (s - centre) / radius).collect();
    let scale = alpha / radius;
    let n = x.nrows();
    let m = x.ncols();
    let mut t_prev = x.clone();
    let mut t_cur = CMat::zeros(n, m);
    a.apply_into(scale, &shifted, x, &mut t_cur);
    let mut acc = x * C64::new(bess[0], 0.0);
    // (-i sign)^k
    let step = C64::new(0.0, -sign);
    let mut phase = step;
    acc += &t_cur * (phase * 2.0 * bess[1]);
    let mut t_next = CMat::zeros(n, m);
    for &bk in bess.iter().skip(2) {
        a.apply_into(scale, &shifted, &t_cur, &mut t_next);
        t_next *= C64::new(2.0, 0.0);
        t_next -= &t_prev;
        phase *= step;
        acc += &t_next * (phase * 2.0 * bk);
        std::mem::swap(&mut t_prev, &mut t_cur);
        std::mem::swap(&mut t_cur, &mut t_next);
    }
    acc * C64::from_polar(1.0, -tau * centre)
}
