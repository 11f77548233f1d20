//! Small numerical kernels shared by the physics modules: a CSR matrix,
//! banded Cholesky, quadrature nodes, low-discrepancy points and a few
//! dense Hermitian helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

pub type C64 = Complex64;

/// Rows per parallel work unit in sparse matvecs. Fixed so results do not
/// depend on the thread count.
const ROW_BLOCK: usize = 256;

/// Square sparse matrix in compressed-row form.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assemble from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut indptr = vec![0usize; n + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            indptr[i + 1] += indptr[i];
        }
        Self { n, indptr, indices, values }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        y.par_chunks_mut(ROW_BLOCK).enumerate().for_each(|(blk, out)| {
            for (k, yi) in out.iter_mut().enumerate() {
                let i = blk * ROW_BLOCK + k;
                *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
            }
        });
        y
    }

    pub fn matvec_complex(&self, x: &[C64], y: &mut [C64]) {
        y.par_chunks_mut(ROW_BLOCK).enumerate().for_each(|(blk, out)| {
            for (k, yi) in out.iter_mut().enumerate() {
                let i = blk * ROW_BLOCK + k;
                let mut acc = C64::new(0.0, 0.0);
                for (j, v) in self.row(i) {
                    acc += x[j] * v;
                }
                *yi = acc;
            }
        });
    }

    /// max |A_ij - A_ji| over stored entries.
    pub fn symmetry_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Smallest half-bandwidth b with A_ij = 0 whenever |i - j| > b.
    pub fn half_bandwidth(&self) -> usize {
        (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j)))
            .max()
            .unwrap_or(0)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                m[(i, j)] += v;
            }
        }
        m
    }
}

/// Cholesky factor of a symmetric positive definite banded matrix, stored
/// row-wise as `L[i][i - j]` for `0 <= i - j <= b`.
#[derive(Debug, Clone)]
pub struct BandedCholesky {
    n: usize,
    b: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factor `A - shift I`. Returns `None` if the shifted matrix is not
    /// numerically positive definite.
    pub fn factor(a: &CsrMatrix, shift: f64) -> Option<Self> {
        let n = a.dim();
        let b = a.half_bandwidth();
        let w = b + 1;
        let mut l = vec![0.0; n * w];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    l[i * w + (i - j)] = v - if i == j { shift } else { 0.0 };
                }
            }
        }
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            for j in j0..=i {
                let mut s = l[i * w + (i - j)];
                let k0 = j0.max(j.saturating_sub(b));
                for k in k0..j {
                    s -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if i == j {
                    if s <= 0.0 || !s.is_finite() {
                        return None;
                    }
                    l[i * w] = s.sqrt();
                } else {
                    l[i * w + (i - j)] = s / l[j * w];
                }
            }
        }
        Some(Self { n, b, l })
    }

    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let (n, b, w) = (self.n, self.b, self.b + 1);
        let mut y = rhs.to_vec();
        for i in 0..n {
            let mut s = y[i];
            for k in i.saturating_sub(b)..i {
                s -= self.l[i * w + (i - k)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..(i + b + 1).min(n) {
                s -= self.l[k * w + (k - i)] * y[k];
            }
            y[i] = s / self.l[i * w];
        }
        y
    }
}

/// Radical-inverse (Halton) coordinate of `index` in the given prime base.
pub fn halton(mut index: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let inv = 1.0 / base as f64;
    while index > 0 {
        f *= inv;
        r += f * (index % base) as f64;
        index /= base;
    }
    r
}

pub const HALTON_BASES: [u64; 8] = [2, 3, 5, 7, 11, 13, 17, 19];

/// Gauss-Legendre nodes and weights on [-1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
            let dz = pn / dp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

/// Least-squares slope of log(y) against log(x).
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Eigenvalues of a Hermitian matrix, ascending.
pub fn hermitian_eigenvalues(m: &DMatrix<C64>) -> Vec<f64> {
    let eig = nalgebra::SymmetricEigen::new(m.clone());
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v
}

/// Spectral norm of a Hermitian matrix.
pub fn hermitian_op_norm(m: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(m).iter().fold(0.0_f64, |a, &v| a.max(v.abs()))
}

/// Trace norm Tr|A| of a Hermitian matrix.
pub fn hermitian_trace_norm(m: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(m).iter().map(|v| v.abs()).sum()
}

/// exp(-i t H) for a real symmetric H, via its eigendecomposition.
pub fn unitary_propagator(h: &DMatrix<f64>, t: f64) -> DMatrix<C64> {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let n = h.nrows();
    let q = eig.eigenvectors.map(|v| C64::new(v, 0.0));
    let phases = DVector::from_iterator(
        n,
        eig.eigenvalues.iter().map(|&e| C64::from_polar(1.0, -e * t)),
    );
    let mut qd = q.clone();
    for (j, mut col) in qd.column_iter_mut().enumerate() {
        col *= phases[j];
    }
    qd * q.adjoint()
}

/// exp(-i t H) for a Hermitian H.
pub fn unitary_propagator_hermitian(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = nalgebra::SymmetricEigen::new(h.clone());
    let q = eig.eigenvectors.clone();
    let mut qd = q.clone();
    for (j, mut col) in qd.column_iter_mut().enumerate() {
        col *= C64::from_polar(1.0, -eig.eigenvalues[j] * t);
    }
    qd * q.adjoint()
}

/// Complex product through four real products, which use the blocked f64
/// kernel instead of the generic scalar loop.
pub fn cmatmul(a: &DMatrix<C64>, b: &DMatrix<C64>) -> DMatrix<C64> {
    let (ar, ai) = (a.map(|z| z.re), a.map(|z| z.im));
    let (br, bi) = (b.map(|z| z.re), b.map(|z| z.im));
    let re = &ar * &br - &ai * &bi;
    let im = &ar * &bi + &ai * &br;
    re.zip_map(&im, C64::new)
}

pub fn cdot(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn cnorm(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
