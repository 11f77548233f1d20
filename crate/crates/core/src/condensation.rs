//! Counting particles outside a condensate: the projectors P_k, weight
//! functions and their hat operators, the functionals α_f and α_ξ, and
//! executable checks of the algebraic identities they satisfy.
//!
//! Two representations: dense first-quantized matrices on (ℂ^d)^{⊗N} for
//! N ≤ 3, d ≤ 6, and occupation counting in a Fock basis rotated so that
//! φ is mode 0.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{cdot, cmatmul, cnorm, hermitian_eigenvalues, hermitian_op_norm, C64};
use crate::manybody::{one_body_density, op_distance, product_projector, trace_distance, two_body_density, FockBasis};

pub const DENSE_MAX_PARTICLES: usize = 3;
pub const DENSE_MAX_MODES: usize = 6;
/// Identity checks fail above this defect.
pub const HARD_TOL: f64 = 1e-10;

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// Table f(0..=N); zero outside.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightFn {
    pub n: usize,
    pub values: Vec<f64>,
}

impl WeightFn {
    pub fn from_table(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("weight table must be non-empty and finite"));
        }
        Ok(Self { n: values.len() - 1, values })
    }

    pub fn from_fn(n: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self { n, values: (0..=n).map(f).collect() }
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self::from_fn(n, |_| c)
    }

    /// n(k) = √(k/N).
    pub fn n(n: usize) -> Self {
        Self::from_fn(n, |k| (k as f64 / n as f64).sqrt())
    }

    /// n(k)^a.
    pub fn n_pow(n: usize, a: f64) -> Self {
        Self::from_fn(n, |k| (k as f64 / n as f64).powf(0.5 * a))
    }

    /// f(k) for any integer k, zero outside 0..=N.
    pub fn at(&self, k: i64) -> f64 {
        if k < 0 || k as usize > self.n {
            0.0
        } else {
            self.values[k as usize]
        }
    }

    /// (τ_j f)(k) = f(k + j).
    pub fn shift(&self, j: i64) -> Self {
        Self::from_fn(self.n, |k| self.at(k as i64 + j))
    }

    pub fn product(&self, other: &Self) -> Self {
        Self::from_fn(self.n, |k| self.values[k] * other.at(k as i64))
    }
}

/// m(k; ξ): √(k/N) for k ≥ N^{1-2ξ}, else (N^{-1+ξ}k + N^{-ξ})/2, the
/// tangent to √(k/N) at the threshold.
///
/// With u = √(k/N) and s = N^{-ξ} the tangent is u + (u - s)²/(2s); that
/// form (and its analogue in [`WeightM::m_ell`]) keeps the sandwich and
/// the m_ℓ bounds sign-exact in floating point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeightM {
    pub n: usize,
    pub xi: f64,
    pub threshold: f64,
    pub weight: WeightFn,
}

fn m_value(n: usize, xi: f64, threshold: f64, k: usize) -> f64 {
    let nf = n as f64;
    let u = (k as f64 / nf).sqrt();
    if k as f64 >= threshold {
        u
    } else {
        let s = nf.powf(-xi);
        u + (u - s) * (u - s) / (2.0 * s)
    }
}

pub fn weight_m(n: usize, xi: f64) -> Result<WeightM> {
    if !(xi > 0.0 && xi < 0.5) {
        return Err(invalid(format!("xi must lie in (0, 1/2), got {xi}")));
    }
    if n == 0 {
        return Err(invalid("N must be positive"));
    }
    let threshold = (n as f64).powf(1.0 - 2.0 * xi);
    let weight = WeightFn::from_fn(n, |k| m_value(n, xi, threshold, k));
    let out = WeightM { n, xi, threshold, weight };
    if let Some(k) = out.sandwich_violation() {
        return Err(Error::IdentityViolated { name: format!("n <= m <= max(n, N^-xi) at k = {k}"), defect: 0.0 });
    }
    Ok(out)
}

impl WeightM {
    /// First k with n(k) ≤ m(k) ≤ max(n(k), N^{-ξ}) false, compared without slack.
    pub fn sandwich_violation(&self) -> Option<usize> {
        let cap = (self.n as f64).powf(-self.xi);
        (0..=self.n).find(|&k| {
            let nk = (k as f64 / self.n as f64).sqrt();
            let m = self.weight.values[k];
            !(nk <= m && m <= nk.max(cap))
        })
    }

    fn linear(&self, k: usize) -> bool {
        (k as f64) < self.threshold
    }

    /// m_ℓ(k) = N(m(k) - m(k-ℓ)) with m(k-ℓ) = 0 for k < ℓ. Differences of
    /// two values on the same branch are taken in closed form.
    pub fn m_ell(&self, ell: usize) -> WeightFn {
        let nf = self.n as f64;
        WeightFn::from_fn(self.n, |k| {
            if k < ell {
                return nf * self.weight.values[k];
            }
            let j = k - ell;
            match (self.linear(j), self.linear(k)) {
                (true, true) => 0.5 * ell as f64 * nf.powf(self.xi),
                (false, false) => ell as f64 * nf.sqrt() / ((k as f64).sqrt() + (j as f64).sqrt()),
                _ => {
                    // N(√(k/N) - tangent(k)) + ℓN^ξ/2
                    let (u, s) = ((k as f64 / nf).sqrt(), nf.powf(-self.xi));
                    0.5 * ell as f64 * nf.powf(self.xi) - nf * (u - s) * (u - s) / (2.0 * s)
                }
            }
        })
    }

    /// Check 0 ≤ m_ℓ(k) for all k and the two upper bounds for k ≥ ℓ.
    pub fn m_ell_report(&self, ell: usize) -> MEllReport {
        let ml = self.m_ell(ell);
        let nf = self.n as f64;
        let mut rep = MEllReport { ell, nonnegative: true, bound_violations: Vec::new(), below_ell_excess: 0.0 };
        for k in 0..=self.n {
            let v = ml.values[k];
            if v < 0.0 {
                rep.nonnegative = false;
            }
            let flat = 0.5 * ell as f64 * nf.powf(self.xi);
            if k < ell {
                rep.below_ell_excess = rep.below_ell_excess.max(v - flat);
                continue;
            }
            let bound = if k as f64 >= self.threshold + ell as f64 {
                ell as f64 * (nf / k as f64).sqrt()
            } else {
                flat
            };
            if v > bound {
                rep.bound_violations.push(k);
            }
        }
        rep
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MEllReport {
    pub ell: usize,
    pub nonnegative: bool,
    /// k ≥ ℓ where the upper bound fails.
    pub bound_violations: Vec<usize>,
    /// max over k < ℓ of m_ℓ(k) - ℓN^ξ/2; positive means the flat bound
    /// does not extend below ℓ under zero padding.
    pub below_ell_excess: f64,
}

impl MEllReport {
    pub fn holds(&self) -> bool {
        self.nonnegative && self.bound_violations.is_empty()
    }
}

/// Normalised φ and a unitary W with Wφ = e₀, stored as Givens rotations.
#[derive(Debug, Clone)]
pub struct CondensateRef {
    pub phi: Vec<C64>,
    /// (i, 2×2 block acting on modes i, i+1), applied in order.
    givens: Vec<(usize, [C64; 4])>,
}

impl CondensateRef {
    pub fn new(phi: &[C64]) -> Result<Self> {
        let nrm = cnorm(phi);
        if !(nrm > 0.0) {
            return Err(invalid("condensate vector must be non-zero"));
        }
        let phi: Vec<C64> = phi.iter().map(|c| c / nrm).collect();
        let mut v = phi.clone();
        let mut givens = Vec::new();
        for i in (0..v.len() - 1).rev() {
            let (a, b) = (v[i], v[i + 1]);
            let r = (a.norm_sqr() + b.norm_sqr()).sqrt();
            let g = if r == 0.0 {
                [ONE, ZERO, ZERO, ONE]
            } else {
                // rows (a*, b*)/r and (-b, a)/r: maps (a, b) to (r, 0)
                [a.conj() / r, b.conj() / r, -b / r, a / r]
            };
            v[i] = C64::new(r, 0.0);
            v[i + 1] = ZERO;
            givens.push((i, g));
        }
        Ok(Self { phi, givens })
    }

    pub fn dim(&self) -> usize {
        self.phi.len()
    }

    /// Dense W (rows are the new basis vectors, conjugated).
    pub fn rotation(&self) -> DMatrix<C64> {
        let d = self.dim();
        let mut w = DMatrix::identity(d, d);
        for &(i, g) in &self.givens {
            let mut gi = DMatrix::identity(d, d);
            gi[(i, i)] = g[0];
            gi[(i, i + 1)] = g[1];
            gi[(i + 1, i)] = g[2];
            gi[(i + 1, i + 1)] = g[3];
            w = gi * w;
        }
        w
    }

    /// Γ(W)ψ on an occupation-basis vector.
    pub fn rotate_fock(&self, basis: &FockBasis, psi: &[C64]) -> Vec<C64> {
        let mut cur = psi.to_vec();
        for &(i, g) in &self.givens {
            cur = beam_splitter(basis, &cur, i, i + 1, g);
        }
        cur
    }

    /// Probability of exactly k particles outside φ, k = 0..=N.
    pub fn excitation_distribution(&self, basis: &FockBasis, psi: &[C64]) -> Vec<f64> {
        let n = basis.particles;
        let rot = self.rotate_fock(basis, psi);
        let mut dist = vec![0.0; n + 1];
        for (s, c) in rot.iter().enumerate() {
            dist[n - basis.occupation(s)[0] as usize] += c.norm_sqr();
        }
        dist
    }
}

/// Two-mode unitary g (row-major) on modes i, j: each particle in e_i goes
/// to g₀₀e_i + g₁₀e_j, in e_j to g₀₁e_i + g₁₁e_j.
fn beam_splitter(basis: &FockBasis, psi: &[C64], i: usize, j: usize, g: [C64; 4]) -> Vec<C64> {
    let nmax = basis.particles;
    let lf: Vec<f64> = (0..=nmax).scan(0.0, |acc, k| {
        if k > 0 {
            *acc += (k as f64).ln();
        }
        Some(*acc)
    }).collect();
    let binom = |n: usize, k: usize| (lf[n] - lf[k] - lf[n - k]).exp();
    let mut out = vec![ZERO; psi.len()];
    let mut buf = vec![0u8; basis.modes];
    for (s, &c) in psi.iter().enumerate() {
        if c == ZERO {
            continue;
        }
        let occ = basis.occupation(s);
        let (ni, nj) = (occ[i] as usize, occ[j] as usize);
        if ni + nj == 0 {
            out[s] += c;
            continue;
        }
        buf.copy_from_slice(occ);
        let norm_in = (-(0.5) * (lf[ni] + lf[nj])).exp();
        for p in 0..=ni {
            for q in 0..=nj {
                let a = p + q;
                let b = ni + nj - a;
                let coef = binom(ni, p)
                    * binom(nj, q)
                    * g[0].powu(p as u32)
                    * g[2].powu((ni - p) as u32)
                    * g[1].powu(q as u32)
                    * g[3].powu((nj - q) as u32)
                    * (0.5 * (lf[a] + lf[b])).exp()
                    * norm_in;
                buf[i] = a as u8;
                buf[j] = b as u8;
                out[basis.index(&buf)] += c * coef;
            }
        }
    }
    out
}

/// α_f(ψ, φ) = Σ f(k)⟨ψ, P_kψ⟩ in the occupation representation.
pub fn alpha_f(cref: &CondensateRef, basis: &FockBasis, psi: &[C64], f: &WeightFn) -> f64 {
    cref.excitation_distribution(basis, psi).iter().enumerate().map(|(k, p)| f.at(k as i64) * p).sum()
}

/// α_{n²} = ‖q₁ψ‖² = 1 - ⟨φ, γ₁φ⟩ from the one-body density.
pub fn alpha_n2_from_density(gamma1: &DMatrix<C64>, phi: &[C64]) -> f64 {
    let v = DVector::from_column_slice(phi);
    1.0 - (v.adjoint() * gamma1 * &v)[(0, 0)].re
}

/// α_ξ = α_m + |E^ψ - E^Φ|.
pub fn alpha_xi(alpha_m: f64, e_psi: f64, e_phi: f64) -> f64 {
    alpha_m + (e_psi - e_phi).abs()
}

/// Explicit first-quantized operators on (ℂ^d)^{⊗N}.
#[derive(Debug, Clone)]
pub struct ProjectorBundle {
    pub n: usize,
    pub d: usize,
    pub phi: Vec<C64>,
    pub p: Vec<DMatrix<C64>>,
    pub q: Vec<DMatrix<C64>>,
    pub pk: Vec<DMatrix<C64>>,
}

/// Operator `op` (d×d) acting on factor `i` of N.
pub fn embed_one(op: &DMatrix<C64>, i: usize, n: usize, d: usize) -> DMatrix<C64> {
    let dim = d.pow(n as u32);
    let stride = d.pow((n - 1 - i) as u32);
    let mut out = DMatrix::from_element(dim, dim, ZERO);
    for row in 0..dim {
        let r = (row / stride) % d;
        for c in 0..d {
            let v = op[(r, c)];
            if v != ZERO {
                let col = row - r * stride + c * stride;
                out[(row, col)] = v;
            }
        }
    }
    out
}

/// Two-body operator `t` (d²×d², index a·d+b) acting on factors i ≠ j.
pub fn embed_two(t: &DMatrix<C64>, i: usize, j: usize, n: usize, d: usize) -> DMatrix<C64> {
    let dim = d.pow(n as u32);
    let (si, sj) = (d.pow((n - 1 - i) as u32), d.pow((n - 1 - j) as u32));
    let mut out = DMatrix::from_element(dim, dim, ZERO);
    for row in 0..dim {
        let (ri, rj) = ((row / si) % d, (row / sj) % d);
        let base = row - ri * si - rj * sj;
        for ci in 0..d {
            for cj in 0..d {
                let v = t[(ri * d + rj, ci * d + cj)];
                if v != ZERO {
                    out[(row, base + ci * si + cj * sj)] = v;
                }
            }
        }
    }
    out
}

pub fn pk_projectors(phi: &[C64], n: usize) -> Result<ProjectorBundle> {
    let d = phi.len();
    if n == 0 || n > DENSE_MAX_PARTICLES || d > DENSE_MAX_MODES {
        return Err(invalid(format!("dense projectors need 1 <= N <= {DENSE_MAX_PARTICLES}, d <= {DENSE_MAX_MODES}")));
    }
    let nrm = cnorm(phi);
    let phi: Vec<C64> = phi.iter().map(|c| c / nrm).collect();
    let one = product_projector(&phi, 1);
    let id = DMatrix::<C64>::identity(d, d);
    let p: Vec<_> = (0..n).map(|i| embed_one(&one, i, n, d)).collect();
    let q: Vec<_> = (0..n).map(|i| embed_one(&(&id - &one), i, n, d)).collect();
    // P_k = Σ over factor choices with k copies of q, as Kronecker products
    let q1 = &id - &one;
    let dim = d.pow(n as u32);
    let mut pk = vec![DMatrix::from_element(dim, dim, ZERO); n + 1];
    for mask in 0..(1usize << n) {
        let term = (0..n).fold(DMatrix::<C64>::identity(1, 1), |t, i| t.kronecker(if mask >> i & 1 == 1 { &q1 } else { &one }));
        pk[mask.count_ones() as usize] += term;
    }
    Ok(ProjectorBundle { n, d, phi, p, q, pk })
}

impl ProjectorBundle {
    pub fn dim(&self) -> usize {
        self.d.pow(self.n as u32)
    }

    /// f̂ = Σ f(k) P_k.
    pub fn hat(&self, f: &WeightFn) -> DMatrix<C64> {
        let dim = self.dim();
        self.pk.iter().enumerate().fold(DMatrix::from_element(dim, dim, ZERO), |acc, (k, pk)| {
            acc + pk * C64::new(f.at(k as i64), 0.0)
        })
    }

    pub fn alpha(&self, psi: &[C64], f: &WeightFn) -> f64 {
        let v = DVector::from_column_slice(psi);
        (v.adjoint() * self.hat(f) * &v)[(0, 0)].re
    }

    pub fn identity(&self) -> DMatrix<C64> {
        DMatrix::identity(self.dim(), self.dim())
    }

    /// Q_ν on factors i, j: 0 → p_ip_j, 1 → p_iq_j (or q_ip_j if `swap`), 2 → q_iq_j.
    pub fn q_nu(&self, nu: usize, i: usize, j: usize, swap: bool) -> DMatrix<C64> {
        let one = product_projector(&self.phi, 1);
        let other = DMatrix::<C64>::identity(self.d, self.d) - &one;
        let (a, b) = match (nu, swap) {
            (0, _) => (&one, &one),
            (1, false) => (&one, &other),
            (1, true) => (&other, &one),
            _ => (&other, &other),
        };
        if i == j {
            return embed_one(&(a * b), i, self.n, self.d);
        }
        embed_two(&a.kronecker(b), i, j, self.n, self.d)
    }
}

/// Occupation vector to a symmetric tensor of length d^N.
pub fn fock_to_tensor(basis: &FockBasis, psi: &[C64]) -> Vec<C64> {
    let (d, n) = (basis.modes, basis.particles);
    let dim = d.pow(n as u32);
    let mut out = vec![ZERO; dim];
    let mut occ = vec![0u8; d];
    let lf: Vec<f64> = (0..=n).scan(0.0, |a, k| {
        if k > 0 {
            *a += (k as f64).ln();
        }
        Some(*a)
    }).collect();
    for (idx, slot) in out.iter_mut().enumerate() {
        occ.iter_mut().for_each(|o| *o = 0);
        let mut r = idx;
        for _ in 0..n {
            occ[r % d] += 1;
            r /= d;
        }
        let s = basis.index(&occ);
        let log_mult = lf[n] - occ.iter().map(|&k| lf[k as usize]).sum::<f64>();
        *slot = psi[s] * (-0.5 * log_mult).exp();
    }
    out
}

/// γ_M from a first-quantized tensor, M ∈ {1, 2}.
pub fn tensor_density(psi: &[C64], n: usize, d: usize, m: usize) -> DMatrix<C64> {
    let keep = d.pow(m as u32);
    let rest = d.pow((n - m) as u32);
    let a = DMatrix::from_row_slice(keep, rest, psi);
    &a * a.adjoint()
}

/// Random normalised vector with complex Gaussian-free uniform entries.
pub fn random_vector(len: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let mut v: Vec<C64> = (0..len).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
    let n = cnorm(&v);
    v.iter_mut().for_each(|c| *c /= n);
    v
}

pub fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<C64> {
    let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5));
    (&a + a.adjoint()) * C64::new(0.5, 0.0)
}

/// Named maximum defects from an identity suite.
#[derive(Debug, Clone, Default, Serialize)]
pub struct Ledger {
    pub entries: Vec<(String, f64)>,
}

impl Ledger {
    pub fn record(&mut self, name: &str, defect: f64) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some((_, d)) => *d = d.max(defect),
            None => self.entries.push((name.to_string(), defect)),
        }
    }

    pub fn max_defect(&self) -> f64 {
        self.entries.iter().map(|e| e.1).fold(0.0, f64::max)
    }

    pub fn passes(&self, tol: f64) -> bool {
        self.entries.iter().all(|e| e.1 <= tol)
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        match self.entries.iter().find(|e| !(e.1 <= tol)) {
            None => Ok(()),
            Some((name, d)) => Err(Error::IdentityViolated { name: name.clone(), defect: *d }),
        }
    }

    pub fn merge(&mut self, other: &Ledger) {
        for (n, d) in &other.entries {
            self.record(n, *d);
        }
    }
}

/// Nonzeros by row, for the few-body operators of the dense suites.
struct Sparse {
    rows: Vec<Vec<(usize, C64)>>,
}

impl Sparse {
    fn new(m: &DMatrix<C64>) -> Self {
        let rows = (0..m.nrows())
            .map(|r| (0..m.ncols()).filter(|&c| m[(r, c)] != ZERO).map(|c| (c, m[(r, c)])).collect())
            .collect();
        Self { rows }
    }

    /// self · b
    fn times(&self, b: &DMatrix<C64>) -> DMatrix<C64> {
        DMatrix::from_fn(self.rows.len(), b.ncols(), |r, j| self.rows[r].iter().map(|&(c, v)| v * b[(c, j)]).sum())
    }

    /// self · other, both sparse.
    fn then(&self, other: &Sparse) -> Sparse {
        let mut acc = vec![ZERO; other.rows.len()];
        let rows = self
            .rows
            .iter()
            .map(|row| {
                for &(k, v) in row {
                    for &(c, w) in &other.rows[k] {
                        acc[c] += v * w;
                    }
                }
                acc.iter_mut().enumerate().filter(|(_, z)| **z != ZERO).map(|(c, z)| (c, std::mem::replace(z, ZERO))).collect()
            })
            .collect();
        Sparse { rows }
    }

    /// a · self
    fn after(&self, a: &DMatrix<C64>) -> DMatrix<C64> {
        let mut out = DMatrix::from_element(a.nrows(), self.rows.len(), ZERO);
        for (r, row) in self.rows.iter().enumerate() {
            for &(c, v) in row {
                out.column_mut(c).axpy(v, &a.column(r), ONE);
            }
        }
        out
    }
}

fn max_abs(m: &DMatrix<C64>) -> f64 {
    m.iter().fold(0.0, |a, c| a.max(c.norm()))
}

/// Projector identities, hat algebra and the density-matrix relations for
/// one (N, d, seed) case.
pub fn prel_suite(n: usize, d: usize, seed: u64) -> Result<Ledger> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = random_vector(d, &mut rng);
    let b = pk_projectors(&phi, n)?;
    let id = b.identity();
    let mut led = Ledger::default();

    let sum = b.pk.iter().fold(DMatrix::from_element(b.dim(), b.dim(), ZERO), |a, p| a + p);
    led.record("sum_k P_k = 1", max_abs(&(sum - &id)));
    let qsum = Sparse::new(&b.q.iter().fold(DMatrix::from_element(b.dim(), b.dim(), ZERO), |a, q| a + q));
    for (k, pk) in b.pk.iter().enumerate() {
        led.record("sum_i q_i P_k = k P_k", max_abs(&(qsum.times(pk) - pk * C64::new(k as f64, 0.0))));
        led.record("P_k hermitian", max_abs(&(pk - pk.adjoint())));
        for (l, pl) in b.pk.iter().enumerate() {
            let want = if k == l { pk.clone() } else { DMatrix::from_element(b.dim(), b.dim(), ZERO) };
            led.record("P_k P_l = delta P_k", max_abs(&(cmatmul(pk, pl) - want)));
        }
    }
    let f = WeightFn::from_fn(n, |_| rng.random::<f64>());
    let g = WeightFn::from_fn(n, |_| rng.random::<f64>());
    let (fh, gh) = (b.hat(&f), b.hat(&g));
    let fg = cmatmul(&fh, &gh);
    led.record("f^ g^ = (fg)^", max_abs(&(&fg - b.hat(&f.product(&g)))));
    led.record("f^ g^ = g^ f^", max_abs(&(&fg - cmatmul(&gh, &fh))));
    led.record("1^ = 1", max_abs(&(b.hat(&WeightFn::constant(n, 1.0)) - &id)));
    for i in 0..n {
        let pi = Sparse::new(&b.p[i]);
        led.record("[f^, p_i] = 0", max_abs(&(pi.after(&fh) - pi.times(&fh))));
    }

    let basis = FockBasis::new(d, n)?;
    let psi_f = random_vector(basis.dim(), &mut rng);
    let psi = fock_to_tensor(&basis, &psi_f);
    let v = DVector::from_column_slice(&psi);
    let q1 = (&b.q[0] * &v).norm_squared();
    let an2 = b.alpha(&psi, &WeightFn::n_pow(n, 2.0));
    led.record("alpha_n2 = |q_1 psi|^2", (an2 - q1).abs());
    let cref = CondensateRef::new(&phi)?;
    for k in 0..=n {
        let dense = (v.adjoint() * &b.pk[k] * &v)[(0, 0)].re;
        led.record("Fock P_k = dense P_k", (dense - cref.excitation_distribution(&basis, &psi_f)[k]).abs());
    }
    let g1 = tensor_density(&psi, n, d, 1);
    let p1 = product_projector(&phi, 1);
    let tr1 = trace_distance(&g1, &p1);
    led.record("Tr|g1 - p| = 2|g1 - p|_op", (tr1 - 2.0 * op_distance(&g1, &p1)).abs());
    led.record("alpha_n2 <= Tr|g1 - p|", (an2 - tr1).max(0.0));
    led.record("gamma_1 from Fock", max_abs(&(one_body_density(&basis, &psi_f) - &g1)));
    if n >= 2 {
        let g2 = tensor_density(&psi, n, d, 2);
        let p2 = product_projector(&phi, 2);
        led.record("Tr|g2 - p2| = 2|g2 - p2|_op", (trace_distance(&g2, &p2) - 2.0 * op_distance(&g2, &p2)).abs());
    }
    Ok(led)
}

/// Weight algebra on symmetric states: symmetrisation of q_j,
/// the q_iq_j inequality, and the shift rule for two-body operators.
pub fn weight_algebra_suite(n: usize, d: usize, seed: u64) -> Result<Ledger> {
    if n < 2 {
        return Err(invalid("weight algebra suite needs N >= 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phi = random_vector(d, &mut rng);
    let b = pk_projectors(&phi, n)?;
    let basis = FockBasis::new(d, n)?;
    let psi = DVector::from_column_slice(&fock_to_tensor(&basis, &random_vector(basis.dim(), &mut rng)));
    let chi = DVector::from_column_slice(&fock_to_tensor(&basis, &random_vector(basis.dim(), &mut rng)));
    let f = WeightFn::from_fn(n, |_| rng.random::<f64>());
    let fh = b.hat(&f);
    let mut led = Ledger::default();

    let rhs = (chi.adjoint() * &fh * b.hat(&WeightFn::n_pow(n, 2.0)) * &psi)[(0, 0)];
    for j in 0..n {
        let lhs = (chi.adjoint() * &fh * &b.q[j] * &psi)[(0, 0)];
        led.record("<chi, f^ q_j psi> = <chi, f^ n^2 psi>", (lhs - rhs).norm());
    }
    let m = weight_m(n.max(2), 0.2)?.weight;
    for fw in [&f, &m] {
        let fh = b.hat(fw);
        let bound = n as f64 / (n - 1) as f64 * (psi.adjoint() * &fh * b.hat(&WeightFn::n_pow(n, 4.0)) * &psi)[(0, 0)].re;
        let lhs = (psi.adjoint() * &fh * &b.q[0] * &b.q[1] * &psi)[(0, 0)].re;
        led.record("<psi, f^ q_i q_j psi> <= N/(N-1) <psi, f^ n^4 psi>", (lhs - bound).max(0.0));
    }
    let t = random_hermitian(d * d, &mut rng);
    for (i, j) in [(0usize, 1usize), (n - 2, n - 1)] {
        let tij = Sparse::new(&embed_two(&t, i, j, n, d));
        for nu in 0..3 {
            for mu in 0..3 {
                for swap in [false, true] {
                    let qn = Sparse::new(&b.q_nu(nu, i, j, swap));
                    let qm = Sparse::new(&b.q_nu(mu, i, j, !swap));
                    let mid = qn.then(&tij).then(&qm);
                    let shifted = b.hat(&f.shift(nu as i64 - mu as i64));
                    led.record("f^ Q_nu T Q_mu = Q_nu T Q_mu (tau f)^", max_abs(&(mid.after(&fh) - mid.times(&shifted))));
                }
            }
        }
    }
    Ok(led)
}

/// Centred-difference check of i d/dt f̂(t) = [H(t), f̂(t)] for φ(t) moved by
/// the one-body h(t) = h0 + sin(t) h1 and H = Σᵢ hᵢ. Returns the largest
/// defect over the interior frames.
pub fn hat_dynamics_check(
    h0: &DMatrix<C64>,
    h1: &DMatrix<C64>,
    phi0: &[C64],
    n: usize,
    f: &WeightFn,
    dt: f64,
    steps: usize,
) -> Result<f64> {
    if steps < 2 {
        return Err(Error::TrajectoryTooShort(steps + 1));
    }
    let d = phi0.len();
    let h_at = |t: f64| h0 + h1 * C64::new(t.sin(), 0.0);
    let mut phis = vec![phi0.to_vec()];
    for s in 0..steps {
        let tm = (s as f64 + 0.5) * dt;
        let u = crate::linalg::unitary_propagator_hermitian(&h_at(tm), dt);
        let next = u * DVector::from_column_slice(phis.last().unwrap());
        phis.push(next.as_slice().to_vec());
    }
    let hats: Vec<DMatrix<C64>> = phis.iter().map(|p| pk_projectors(p, n).map(|b| b.hat(f))).collect::<Result<_>>()?;
    let mut worst: f64 = 0.0;
    for s in 1..steps {
        let t = s as f64 * dt;
        let hs = h_at(t);
        let big = (0..n).fold(DMatrix::from_element(d.pow(n as u32), d.pow(n as u32), ZERO), |a, i| a + embed_one(&hs, i, n, d));
        let deriv = (&hats[s + 1] - &hats[s - 1]) / C64::new(2.0 * dt, 0.0);
        let comm = (&big * &hats[s] - &hats[s] * &big) * C64::new(0.0, -1.0);
        worst = worst.max(max_abs(&(deriv - comm)));
    }
    Ok(worst)
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceRow {
    pub particles: usize,
    pub alpha_n_half: f64,
    pub alpha_n: f64,
    pub alpha_n2: f64,
    pub trace1: f64,
    pub trace2: f64,
    pub op1: f64,
    pub op2: f64,
}

impl EquivalenceRow {
    fn measures(&self) -> [f64; 7] {
        [self.alpha_n_half, self.alpha_n, self.alpha_n2, self.trace1, self.trace2, self.op1, self.op2]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub rows: Vec<EquivalenceRow>,
    pub identities: Ledger,
    /// Every measure moves in the same direction between consecutive rows.
    pub co_monotone: bool,
}

/// Condensation measures across a family of symmetric states sharing φ.
pub fn equivalence_suite(family: &[(FockBasis, Vec<C64>)], phi: &[C64]) -> Result<EquivalenceReport> {
    let cref = CondensateRef::new(phi)?;
    let phi = cref.phi.clone();
    let mut rows = Vec::new();
    let mut led = Ledger::default();
    for (basis, psi) in family {
        let n = basis.particles;
        let dist = cref.excitation_distribution(basis, psi);
        let alpha = |a: f64| dist.iter().enumerate().map(|(k, p)| (k as f64 / n as f64).powf(0.5 * a) * p).sum::<f64>();
        let g1 = one_body_density(basis, psi);
        let p1 = product_projector(&phi, 1);
        let (trace1, op1) = (trace_distance(&g1, &p1), op_distance(&g1, &p1));
        let (trace2, op2) = if n >= 2 {
            let g2 = two_body_density(basis, psi)?;
            let p2 = product_projector(&phi, 2);
            (trace_distance(&g2, &p2), op_distance(&g2, &p2))
        } else {
            (trace1, op1)
        };
        let an2 = alpha(2.0);
        led.record("Tr|g1 - p| = 2|g1 - p|_op", (trace1 - 2.0 * op1).abs());
        led.record("Tr|g2 - p2| = 2|g2 - p2|_op", (trace2 - 2.0 * op2).abs());
        led.record("alpha_n2 = 1 - <phi, g1 phi>", (an2 - alpha_n2_from_density(&g1, &phi)).abs());
        led.record("alpha_n2 <= Tr|g1 - p|", (an2 - trace1).max(0.0));
        rows.push(EquivalenceRow { particles: n, alpha_n_half: alpha(0.5), alpha_n: alpha(1.0), alpha_n2: an2, trace1, trace2, op1, op2 });
    }
    let co_monotone = rows.windows(2).all(|w| {
        let (a, b) = (w[0].measures(), w[1].measures());
        let signs: Vec<i8> = a.iter().zip(&b).map(|(x, y)| if y > x { 1 } else if y < x { -1 } else { 0 }).collect();
        signs.iter().all(|&s| s >= 0) || signs.iter().all(|&s| s <= 0)
    });
    Ok(EquivalenceReport { rows, identities: led, co_monotone })
}

/// √(1-δ²) φ^{⊗N} + δ · (normalised symmetric state with one particle in χ ⊥ φ).
pub fn one_excitation_state(basis: &FockBasis, phi: &[C64], chi: &[C64], delta: f64) -> Result<Vec<C64>> {
    let cref = CondensateRef::new(phi)?;
    let ov = cdot(&cref.phi, chi);
    let mut chi: Vec<C64> = chi.iter().zip(&cref.phi).map(|(c, p)| c - p * ov).collect();
    let nrm = cnorm(&chi);
    if nrm < 1e-12 {
        return Err(invalid("excitation vector is parallel to the condensate"));
    }
    chi.iter_mut().for_each(|c| *c /= nrm);
    // build in the rotated frame: mode 0 is φ, then rotate back with W†
    let w = cref.rotation();
    let chi_rot = &w * DVector::from_column_slice(&chi);
    let n = basis.particles;
    let mut out = vec![ZERO; basis.dim()];
    let mut occ = vec![0u8; basis.modes];
    occ[0] = n as u8;
    out[basis.index(&occ)] = C64::new((1.0 - delta * delta).sqrt(), 0.0);
    occ[0] = n as u8 - 1;
    for (j, c) in chi_rot.iter().enumerate().skip(1) {
        occ[j] = 1;
        out[basis.index(&occ)] += c * delta;
        occ[j] = 0;
    }
    // Γ(W†) via the inverse Givens sequence
    let mut cur = out;
    for &(i, g) in cref.givens.iter().rev() {
        let inv = [g[0].conj(), g[2].conj(), g[1].conj(), g[3].conj()];
        cur = beam_splitter(basis, &cur, i, i + 1, inv);
    }
    Ok(cur)
}

/// Largest eigenvalue defect check helper for reports: min eigenvalue of γ.
pub fn min_eigenvalue(g: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(g)[0]
}

pub fn op_norm(g: &DMatrix<C64>) -> f64 {
    hermitian_op_norm(g)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn m_examples() {
        let m = weight_m(100, 0.25).unwrap();
        assert!((m.weight.values[25] - 0.5).abs() < 1e-15);
        assert!((m.weight.values[4] - 0.221_359_436_211_786_6).abs() < 1e-12);
        assert_eq!(m.weight.values[100], 1.0);
        assert!(weight_m(100, 0.5).is_err());
    }

    #[test]
    fn m_ell_examples() {
        let m = weight_m(100, 0.25).unwrap();
        let m1 = m.m_ell(1);
        assert!((m1.values[64] - 100.0 * (0.64f64.sqrt() - 0.63f64.sqrt())).abs() < 1e-12);
        assert!(m1.values[64] <= 1.25);
        assert_eq!(m1.values[5], 0.5 * 100f64.powf(0.25));
        assert!(m.m_ell_report(2).holds());
        assert!(m.m_ell_report(3).below_ell_excess > 0.0);
    }

    #[test]
    fn weight_grid_bounds() {
        for n in [100, 1000, 10_000] {
            for xi in [0.1, 0.2, 0.4] {
                let m = weight_m(n, xi).unwrap();
                for ell in 1..=3 {
                    assert!(m.m_ell_report(ell).holds(), "N={n} xi={xi} l={ell}");
                }
            }
        }
    }

    #[test]
    fn shifts() {
        let f = WeightFn::n(5);
        assert_eq!(f.shift(0), f);
        assert_eq!(f.shift(1).values[5], 0.0);
        let c = WeightFn::constant(5, 1.0);
        let back = c.shift(1).shift(-1);
        assert_eq!(&back.values[1..5], &c.values[1..5]);
        assert_ne!(back.values[0], c.values[0]);
    }

    #[test]
    fn single_particle_bundle() {
        let phi = vec![C64::new(0.6, 0.0), C64::new(0.0, 0.8)];
        let b = pk_projectors(&phi, 1).unwrap();
        assert!(max_abs(&(&b.pk[0] - &b.p[0])) < 1e-15);
        assert!(max_abs(&(&b.pk[1] - &b.q[0])) < 1e-15);
    }

    #[test]
    fn givens_rotation_maps_phi_to_first_mode() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let phi = random_vector(5, &mut rng);
        let c = CondensateRef::new(&phi).unwrap();
        let w = c.rotation();
        let img = &w * DVector::from_column_slice(&phi);
        assert!((img[0] - ONE).norm() < 1e-14);
        assert!(img.iter().skip(1).all(|z| z.norm() < 1e-14));
        assert!(max_abs(&(&w * w.adjoint() - DMatrix::identity(5, 5))) < 1e-14);
        let basis = FockBasis::new(5, 3).unwrap();
        let cond = basis.condensate(&phi);
        let d = c.excitation_distribution(&basis, &cond);
        assert!((d[0] - 1.0).abs() < 1e-13);
        assert!((cnorm(&c.rotate_fock(&basis, &cond)) - 1.0).abs() < 1e-13);
    }

    #[test]
    fn identity_suites_small() {
        for (n, d, seed) in [(1, 3, 1), (2, 3, 2), (3, 4, 3)] {
            let led = prel_suite(n, d, seed).unwrap();
            assert!(led.passes(1e-12), "{led:?}");
            if n >= 2 {
                let led = weight_algebra_suite(n, d, seed).unwrap();
                assert!(led.passes(1e-12), "{led:?}");
            }
        }
    }

    #[test]
    fn condensate_alpha_is_f0() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let phi = random_vector(4, &mut rng);
        let basis = FockBasis::new(4, 3).unwrap();
        let c = CondensateRef::new(&phi).unwrap();
        let psi = basis.condensate(&phi);
        let m = weight_m(3, 0.2).unwrap();
        let a = alpha_f(&c, &basis, &psi, &m.weight);
        assert!((a - 0.5 * 3f64.powf(-0.2)).abs() < 1e-13);
        assert!(alpha_f(&c, &basis, &psi, &WeightFn::n_pow(3, 2.0)).abs() < 1e-13);
    }

    #[test]
    fn hat_dynamics_orders() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h0 = random_hermitian(3, &mut rng);
        let h1 = random_hermitian(3, &mut rng);
        let phi = random_vector(3, &mut rng);
        let f = WeightFn::from_fn(2, |k| [0.1, 0.7, 0.4][k]);
        let a = hat_dynamics_check(&h0, &h1, &phi, 2, &f, 1e-3, 6).unwrap();
        let b = hat_dynamics_check(&h0, &h1, &phi, 2, &f, 5e-4, 6).unwrap();
        assert!(a < 1e-5, "{a}");
        assert!((3.5..=4.5).contains(&(a / b)), "{}", a / b);
        let one = hat_dynamics_check(&h0, &h1, &phi, 2, &WeightFn::constant(2, 1.0), 1e-3, 4).unwrap();
        assert!(one < 1e-12);
        // eigenvector of a static h: projectors do not move
        let eig = nalgebra::SymmetricEigen::new(h0.clone());
        let v: Vec<C64> = eig.eigenvectors.column(0).iter().copied().collect();
        let zero = DMatrix::from_element(3, 3, ZERO);
        assert!(hat_dynamics_check(&h0, &zero, &v, 2, &f, 1e-3, 4).unwrap() < 1e-9);
    }

    #[test]
    fn equivalence_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let phi = random_vector(3, &mut rng);
        let chi = random_vector(3, &mut rng);
        let basis = FockBasis::new(3, 3).unwrap();
        let fam: Vec<_> = [0.4, 0.2, 0.1, 0.0]
            .iter()
            .map(|&dl| (basis.clone(), one_excitation_state(&basis, &phi, &chi, dl).unwrap()))
            .collect();
        let rep = equivalence_suite(&fam, &phi).unwrap();
        assert!(rep.identities.passes(1e-10), "{:?}", rep.identities);
        assert!(rep.co_monotone);
        assert!(rep.rows.last().unwrap().measures().iter().all(|v| v.abs() < 1e-12));
        assert!((rep.rows[0].alpha_n2 - 0.16 / 3.0).abs() < 1e-12);
    }
}
