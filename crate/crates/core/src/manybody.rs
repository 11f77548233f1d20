//! Exact few-boson dynamics on a quasi-1D lattice: periodic x-sites times a
//! truncated set of transverse modes, in the occupation-number basis.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::linalg::{cdot, cnorm, hermitian_eigenvalues, hermitian_op_norm, unitary_propagator, CsrMatrix, C64};
use crate::nls::Potential1D;
use crate::scaling::{PairPotential, ScalingPoint};
use crate::transverse::OverlapTensor;

pub const DEFAULT_DIMENSION_CAP: usize = 1_000_000;
pub const HERMITICITY_TOL: f64 = 1e-12;
/// Largest dimension for which the dense propagator is offered.
pub const DENSE_ORACLE_MAX: usize = 2000;

/// x-sites times transverse modes. Mode label `i = x·m + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleParticleBasis {
    pub sites: usize,
    pub half_width: f64,
    /// Transverse energies E_j in scaled units, ascending.
    pub energies: Vec<f64>,
    pub eps: f64,
}

impl SingleParticleBasis {
    pub fn new(sites: usize, half_width: f64, energies: Vec<f64>, eps: f64) -> Result<Self> {
        if sites < 2 {
            return Err(invalid("need at least two x-sites"));
        }
        if energies.is_empty() || energies.windows(2).any(|w| w[1] < w[0]) {
            return Err(invalid("transverse energies must be non-empty and sorted"));
        }
        if !(eps > 0.0) {
            return Err(invalid("eps must be positive"));
        }
        Ok(Self { sites, half_width, energies, eps })
    }

    pub fn modes(&self) -> usize {
        self.energies.len()
    }

    pub fn dim(&self) -> usize {
        self.sites * self.modes()
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.sites as f64
    }

    pub fn label(&self, x: usize, j: usize) -> usize {
        x * self.modes() + j
    }

    pub fn split(&self, i: usize) -> (usize, usize) {
        (i / self.modes(), i % self.modes())
    }

    /// Static one-body matrix: periodic 3-point -∂²ₓ, V_static(x) and E_j/ε².
    pub fn one_body(&self, static_v: &[f64]) -> DMatrix<f64> {
        let (g, m, d) = (self.sites, self.modes(), self.dim());
        let c = 1.0 / (self.dx() * self.dx());
        let mut h = DMatrix::zeros(d, d);
        for x in 0..g {
            for j in 0..m {
                let i = self.label(x, j);
                h[(i, i)] += 2.0 * c + static_v[x] + self.energies[j] / (self.eps * self.eps);
                h[(i, self.label((x + 1) % g, j))] -= c;
                h[(i, self.label((x + g - 1) % g, j))] -= c;
            }
        }
        h
    }
}

/// Occupation vectors of N bosons in d modes, in descending lexicographic
/// order starting from (N, 0, …, 0).
#[derive(Debug, Clone)]
pub struct FockBasis {
    pub modes: usize,
    pub particles: usize,
    occ: Vec<u8>,
    /// binom[r][k] = number of ways to put r bosons in k modes.
    count: Vec<Vec<u64>>,
}

pub fn fock_dimension(modes: usize, particles: usize) -> u128 {
    binomial((modes + particles - 1) as u128, particles as u128)
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

impl FockBasis {
    pub fn new(modes: usize, particles: usize) -> Result<Self> {
        Self::with_cap(modes, particles, DEFAULT_DIMENSION_CAP)
    }

    pub fn with_cap(modes: usize, particles: usize, cap: usize) -> Result<Self> {
        if modes == 0 || particles == 0 || particles > u8::MAX as usize {
            return Err(invalid("need at least one mode and 1..=255 particles"));
        }
        let dim = fock_dimension(modes, particles);
        if dim > cap as u128 {
            return Err(Error::DimensionCap { dim, cap });
        }
        let count: Vec<Vec<u64>> = (0..=particles)
            .map(|r| (0..=modes).map(|k| if k == 0 { (r == 0) as u64 } else { fock_dimension(k, r) as u64 }).collect())
            .collect();
        let mut occ = Vec::with_capacity(dim as usize * modes);
        let mut cur = vec![0u8; modes];
        fill(&mut occ, &mut cur, 0, particles);
        Ok(Self { modes, particles, occ, count })
    }

    pub fn dim(&self) -> usize {
        self.occ.len() / self.modes
    }

    pub fn occupation(&self, s: usize) -> &[u8] {
        &self.occ[s * self.modes..(s + 1) * self.modes]
    }

    /// Position of an occupation vector.
    pub fn index(&self, n: &[u8]) -> usize {
        let d = self.modes;
        let mut rank = 0u64;
        let mut left = self.particles;
        for (i, &ni) in n.iter().enumerate().take(d - 1) {
            let ni = ni as usize;
            // vectors with the same prefix and a larger entry here come first
            for v in ni + 1..=left {
                rank += self.count[left - v][d - i - 1];
            }
            left -= ni;
        }
        rank as usize
    }

    /// Product state: all bosons in the one-body vector φ (length d),
    /// amplitude √(N!/∏nᵢ!) ∏ φᵢ^{nᵢ}.
    pub fn condensate(&self, phi: &[C64]) -> Vec<C64> {
        let n = self.particles;
        let lf = log_factorials(n);
        (0..self.dim())
            .map(|s| {
                let mut amp = C64::new(1.0, 0.0);
                let mut logc = lf[n];
                for (i, &k) in self.occupation(s).iter().enumerate() {
                    if k > 0 {
                        amp *= phi[i].powu(k as u32);
                        logc -= lf[k as usize];
                    }
                }
                amp * (0.5 * logc).exp()
            })
            .collect()
    }
}

fn fill(out: &mut Vec<u8>, cur: &mut [u8], pos: usize, left: usize) {
    if pos == cur.len() - 1 {
        cur[pos] = left as u8;
        out.extend_from_slice(cur);
        return;
    }
    for v in (0..=left).rev() {
        cur[pos] = v as u8;
        fill(out, cur, pos + 1, left - v);
    }
    cur[pos] = 0;
}

fn log_factorials(n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n + 1];
    for k in 1..=n {
        v[k] = v[k - 1] + (k as f64).ln();
    }
    v
}

/// Interaction kernel on lattice separations 0..sites (periodic minimum image).
#[derive(Debug, Clone, PartialEq)]
pub struct XKernel {
    pub values: Vec<f64>,
}

impl XKernel {
    /// Everything on site with weight `strength / Δx`.
    pub fn on_site(sites: usize, dx: f64, strength: f64) -> Self {
        let mut values = vec![0.0; sites];
        values[0] = strength / dx;
        Self { values }
    }

    /// K(x) = (1/μ) w₁(x/μ), the x-marginal of the scaled pair potential.
    /// Collapses to on-site ‖w‖₁/Δx when μ < 2Δx.
    pub fn from_pair(w: &PairPotential, mu: f64, sites: usize, dx: f64) -> Self {
        if mu < 2.0 * dx {
            return Self::on_site(sites, dx, w.mass());
        }
        let values = (0..sites)
            .map(|k| {
                let sep = k.min(sites - k) as f64 * dx;
                w.marginal_x(sep / mu) / mu
            })
            .collect();
        Self { values }
    }

    pub fn at(&self, x1: usize, x2: usize) -> f64 {
        let g = self.values.len();
        self.values[(x1 + g - x2) % g]
    }

    /// Δx Σ K.
    pub fn mass(&self, dx: f64) -> f64 {
        dx * self.values.iter().sum::<f64>()
    }
}

/// H(t) = H_static + a sin(ωt) Σ_x v(x) n̂_x, stored with the constant
/// N·E₀/ε² removed.
#[derive(Debug, Clone)]
pub struct ManyBodyHamiltonian {
    pub matrix: CsrMatrix,
    drive_diag: Option<(Vec<f64>, f64, f64)>,
    pub particles: usize,
    /// N·E₀/ε², added back by [`ManyBodyHamiltonian::offset`] consumers.
    pub offset: f64,
}

impl ManyBodyHamiltonian {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn is_static(&self) -> bool {
        self.drive_diag.is_none()
    }

    fn drive_factor(&self, t: f64) -> f64 {
        self.drive_diag.as_ref().map_or(0.0, |(_, a, w)| a * (w * t).sin())
    }

    /// y = (H(t) - offset) x.
    pub fn apply(&self, t: f64, x: &[C64], y: &mut [C64]) {
        self.matrix.matvec_complex(x, y);
        if let Some((d, _, _)) = &self.drive_diag {
            let s = self.drive_factor(t);
            y.iter_mut().zip(x).zip(d).for_each(|((yi, xi), di)| *yi += xi * (s * di));
        }
    }

    /// Dense (H(t) - offset), for the oracle path.
    pub fn dense(&self, t: f64) -> DMatrix<f64> {
        let mut h = self.matrix.to_dense();
        if let Some((d, _, _)) = &self.drive_diag {
            let s = self.drive_factor(t);
            for (i, di) in d.iter().enumerate() {
                h[(i, i)] += s * di;
            }
        }
        h
    }

    /// ⟨ψ, (H(t) - offset) ψ⟩.
    pub fn expectation(&self, t: f64, psi: &[C64]) -> f64 {
        let mut y = vec![C64::new(0.0, 0.0); psi.len()];
        self.apply(t, psi, &mut y);
        cdot(psi, &y).re
    }
}

/// Assemble H(t) for N bosons:
/// one-body Σᵢ[-Δₓ + V(t) + E_j/ε²] plus (1/(N-1)) Σ_{i<j} W with
/// ⟨(x,a)(x',b)|W|(x,c)(x',d)⟩ = K(x-x') O_abcd.
pub fn build_hamiltonian(
    basis: &FockBasis,
    sp: &SingleParticleBasis,
    pot: &Potential1D,
    kernel: &XKernel,
    overlaps: &OverlapTensor,
) -> Result<ManyBodyHamiltonian> {
    let d = sp.dim();
    let m = sp.modes();
    if basis.modes != d {
        return Err(invalid("Fock basis and single-particle basis disagree"));
    }
    if pot.static_part.len() != sp.sites || kernel.values.len() != sp.sites {
        return Err(invalid("potential and kernel must be sampled on the x-sites"));
    }
    if overlaps.m < m {
        return Err(invalid("overlap tensor has fewer modes than the basis"));
    }
    let n = basis.particles;
    let e0 = sp.energies[0] / (sp.eps * sp.eps);
    let offset = n as f64 * e0;
    let mut h1 = sp.one_body(&pot.static_part);
    for i in 0..d {
        h1[(i, i)] -= e0;
    }
    let nz: Vec<Vec<(usize, f64)>> =
        (0..d).map(|b| (0..d).filter(|&a| h1[(a, b)] != 0.0).map(|a| (a, h1[(a, b)])).collect()).collect();
    let pair = if n > 1 { 0.5 / (n - 1) as f64 } else { 0.0 };

    let mut trip = Vec::new();
    let mut buf = vec![0u8; d];
    for s in 0..basis.dim() {
        let occ = basis.occupation(s);
        for b in 0..d {
            let nb = occ[b];
            if nb == 0 {
                continue;
            }
            for &(a, v) in &nz[b] {
                buf.copy_from_slice(occ);
                buf[b] -= 1;
                let amp = (nb as f64).sqrt() * ((buf[a] + 1) as f64).sqrt();
                buf[a] += 1;
                trip.push((basis.index(&buf), s, v * amp));
            }
        }
        if pair == 0.0 {
            continue;
        }
        // a†_α a†_β a_δ a_γ, γ=(x,c), δ=(x',d), α=(x,a), β=(x',b)
        for gi in 0..d {
            if occ[gi] == 0 {
                continue;
            }
            for di in 0..d {
                let need = if gi == di { 2 } else { 1 };
                if occ[di] < need {
                    continue;
                }
                let (x, c) = sp.split(gi);
                let (xp, dd) = sp.split(di);
                let k = kernel.at(x, xp);
                if k == 0.0 {
                    continue;
                }
                buf.copy_from_slice(occ);
                let mut amp = (buf[gi] as f64).sqrt();
                buf[gi] -= 1;
                amp *= (buf[di] as f64).sqrt();
                buf[di] -= 1;
                for a in 0..m {
                    for bb in 0..m {
                        let o = overlaps.get(a, bb, c, dd);
                        if o == 0.0 {
                            continue;
                        }
                        let (al, be) = (sp.label(x, a), sp.label(xp, bb));
                        let mut amp2 = amp * ((buf[be] + 1) as f64).sqrt();
                        buf[be] += 1;
                        amp2 *= ((buf[al] + 1) as f64).sqrt();
                        buf[al] += 1;
                        trip.push((basis.index(&buf), s, pair * k * o * amp2));
                        buf[al] -= 1;
                        buf[be] -= 1;
                    }
                }
            }
        }
    }
    let matrix = CsrMatrix::from_triplets(basis.dim(), trip);
    let defect = matrix.symmetry_defect();
    if defect > HERMITICITY_TOL {
        return Err(Error::NonHermitian(defect));
    }
    let drive_diag = pot.drive.as_ref().filter(|dr| dr.amplitude != 0.0).map(|dr| {
        let diag = (0..basis.dim())
            .map(|s| {
                basis.occupation(s).iter().enumerate().map(|(i, &k)| k as f64 * dr.profile[sp.split(i).0]).sum()
            })
            .collect();
        (diag, dr.amplitude, dr.frequency)
    });
    Ok(ManyBodyHamiltonian { matrix, drive_diag, particles: n, offset })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Propagator {
    Krylov,
    /// Dense eigendecomposition, dimension < 2000.
    Dense,
}

pub const KRYLOV_MAX_DIM: usize = 40;
pub const KRYLOV_TOL: f64 = 1e-12;

/// ψ ← exp(-iτ A) ψ by Lanczos on A = H(t) - offset.
fn krylov_step(h: &ManyBodyHamiltonian, t: f64, tau: f64, psi: &mut [C64]) -> Result<()> {
    let n = psi.len();
    let kmax = KRYLOV_MAX_DIM.min(n);
    let beta0 = cnorm(psi);
    let mut v: Vec<Vec<C64>> = vec![psi.iter().map(|c| c / beta0).collect()];
    let (mut alpha, mut beta) = (Vec::new(), Vec::new());
    let mut w = vec![C64::new(0.0, 0.0); n];
    for k in 0..kmax {
        h.apply(t, &v[k], &mut w);
        let a = cdot(&v[k], &w).re;
        alpha.push(a);
        for (wi, vi) in w.iter_mut().zip(&v[k]) {
            *wi -= vi * a;
        }
        if k > 0 {
            let b: f64 = beta[k - 1];
            for (wi, vi) in w.iter_mut().zip(&v[k - 1]) {
                *wi -= vi * b;
            }
        }
        // full reorthogonalisation keeps the small basis clean
        for vj in &v {
            let c = cdot(vj, &w);
            for (wi, vi) in w.iter_mut().zip(vj) {
                *wi -= vi * c;
            }
        }
        let b = cnorm(&w);
        let m = k + 1;
        let small = tridiag_exp(&alpha, &beta, tau);
        let breakdown = b < 1e-14 * (a.abs() + 1.0);
        let err = b * small[m - 1].norm();
        if breakdown || err < KRYLOV_TOL || m == kmax && n == m {
            combine(&v, &small, beta0, psi);
            return Ok(());
        }
        if m == kmax {
            return Err(Error::Krylov(format!("no convergence in {kmax} vectors (estimate {err:e})")));
        }
        beta.push(b);
        v.push(w.iter().map(|c| c / b).collect());
    }
    unreachable!()
}

fn tridiag_exp(alpha: &[f64], beta: &[f64], tau: f64) -> Vec<C64> {
    let m = alpha.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        t[(i, i)] = alpha[i];
        if i + 1 < m {
            t[(i, i + 1)] = beta[i];
            t[(i + 1, i)] = beta[i];
        }
    }
    let u = unitary_propagator(&t, tau);
    (0..m).map(|i| u[(i, 0)]).collect()
}

fn combine(v: &[Vec<C64>], coeff: &[C64], scale: f64, out: &mut [C64]) {
    out.iter_mut().for_each(|c| *c = C64::new(0.0, 0.0));
    for (vk, ck) in v.iter().zip(coeff) {
        let c = ck * scale;
        for (o, x) in out.iter_mut().zip(vk) {
            *o += x * c;
        }
    }
}

/// Evolve ψ₀ over [0, t_end] with midpoint steps exp(-i dt H(t + dt/2)),
/// restoring the norm after each step. `observe(step, t, ψ)` is called at
/// t = 0 and after every step.
pub fn evolve_state(
    h: &ManyBodyHamiltonian,
    psi0: &[C64],
    dt: f64,
    t_end: f64,
    method: Propagator,
    mut observe: impl FnMut(usize, f64, &[C64]) -> Result<()>,
) -> Result<Vec<C64>> {
    if psi0.len() != h.dim() {
        return Err(invalid("state and Hamiltonian dimensions differ"));
    }
    if ((cnorm(psi0)) - 1.0).abs() > 1e-9 {
        return Err(invalid("initial state must be normalised"));
    }
    if method == Propagator::Dense && h.dim() >= DENSE_ORACLE_MAX {
        return Err(invalid(format!("dense propagator limited to dimension < {DENSE_ORACLE_MAX}")));
    }
    let steps = (t_end / dt).round() as usize;
    let mut psi = psi0.to_vec();
    observe(0, 0.0, &psi)?;
    let fixed = if method == Propagator::Dense && h.is_static() { Some(unitary_propagator(&h.dense(0.0), dt)) } else { None };
    for n in 0..steps {
        let tm = (n as f64 + 0.5) * dt;
        let nrm = raw_step(h, tm, dt, &mut psi, method, fixed.as_ref())?;
        if !nrm.is_finite() {
            return Err(Error::NonFinite { step: n + 1 });
        }
        psi.iter_mut().for_each(|c| *c /= nrm);
        observe(n + 1, (n + 1) as f64 * dt, &psi)?;
    }
    Ok(psi)
}

/// One midpoint step exp(-i dt H(tm)) without renormalisation; returns the
/// norm of the result.
pub fn step_state(h: &ManyBodyHamiltonian, tm: f64, dt: f64, psi: &mut [C64], method: Propagator) -> Result<f64> {
    if method == Propagator::Dense && h.dim() >= DENSE_ORACLE_MAX {
        return Err(invalid(format!("dense propagator limited to dimension < {DENSE_ORACLE_MAX}")));
    }
    raw_step(h, tm, dt, psi, method, None)
}

fn raw_step(h: &ManyBodyHamiltonian, tm: f64, dt: f64, psi: &mut [C64], method: Propagator, fixed: Option<&DMatrix<C64>>) -> Result<f64> {
    match method {
        Propagator::Krylov => krylov_refined(h, tm, dt, psi)?,
        Propagator::Dense => {
            let u = match fixed {
                Some(u) => u.clone(),
                None => unitary_propagator(&h.dense(tm), dt),
            };
            let x = nalgebra::DVector::from_column_slice(psi);
            psi.copy_from_slice((u * x).as_slice());
        }
    }
    Ok(cnorm(psi))
}

/// Krylov step with up to three halvings of the substep on failure.
fn krylov_refined(h: &ManyBodyHamiltonian, tm: f64, dt: f64, psi: &mut [C64]) -> Result<()> {
    let saved = psi.to_vec();
    let mut last = None;
    for level in 0..4 {
        let parts = 1usize << level;
        psi.copy_from_slice(&saved);
        let tau = dt / parts as f64;
        let ok = (0..parts).try_for_each(|_| krylov_step(h, tm, tau, psi));
        match ok {
            Ok(()) => return Ok(()),
            Err(e) => last = Some(e),
        }
    }
    Err(last.unwrap())
}

/// γ₁(α,β) = ⟨a†_β a_α⟩ / N.
pub fn one_body_density(basis: &FockBasis, psi: &[C64]) -> DMatrix<C64> {
    let d = basis.modes;
    let n = basis.particles as f64;
    let mut g = DMatrix::from_element(d, d, C64::new(0.0, 0.0));
    let mut buf = vec![0u8; d];
    for s in 0..basis.dim() {
        if psi[s] == C64::new(0.0, 0.0) {
            continue;
        }
        let occ = basis.occupation(s);
        for a in 0..d {
            if occ[a] == 0 {
                continue;
            }
            for b in 0..d {
                buf.copy_from_slice(occ);
                let mut amp = (buf[a] as f64).sqrt();
                buf[a] -= 1;
                amp *= ((buf[b] + 1) as f64).sqrt();
                buf[b] += 1;
                // a†_b a_a |s⟩ = amp |s'⟩, so ⟨a†_b a_a⟩ gets conj(ψ_s') ψ_s amp
                let sp = basis.index(&buf);
                g[(a, b)] += psi[sp].conj() * psi[s] * amp;
            }
        }
    }
    g.map(|c| c / n)
}

/// γ₂((α₁,α₂),(β₁,β₂)) = ⟨a†_{β₁} a†_{β₂} a_{α₂} a_{α₁}⟩ / (N(N-1)).
pub fn two_body_density(basis: &FockBasis, psi: &[C64]) -> Result<DMatrix<C64>> {
    let d = basis.modes;
    let n = basis.particles;
    if n < 2 {
        return Err(invalid("two-body density needs N >= 2"));
    }
    let mut g = DMatrix::from_element(d * d, d * d, C64::new(0.0, 0.0));
    let mut buf = vec![0u8; d];
    for s in 0..basis.dim() {
        let occ = basis.occupation(s);
        for a1 in 0..d {
            for a2 in 0..d {
                buf.copy_from_slice(occ);
                if buf[a1] == 0 {
                    continue;
                }
                let mut amp = (buf[a1] as f64).sqrt();
                buf[a1] -= 1;
                if buf[a2] == 0 {
                    continue;
                }
                amp *= (buf[a2] as f64).sqrt();
                buf[a2] -= 1;
                for b2 in 0..d {
                    let amp2 = amp * ((buf[b2] + 1) as f64).sqrt();
                    buf[b2] += 1;
                    for b1 in 0..d {
                        let amp3 = amp2 * ((buf[b1] + 1) as f64).sqrt();
                        buf[b1] += 1;
                        let sp = basis.index(&buf);
                        g[(a1 * d + a2, b1 * d + b2)] += psi[sp].conj() * psi[s] * amp3;
                        buf[b1] -= 1;
                    }
                    buf[b2] -= 1;
                }
            }
        }
    }
    Ok(g.map(|c| c / (n * (n - 1)) as f64))
}

/// Tr|γ - ρ|.
pub fn trace_distance(gamma: &DMatrix<C64>, rho: &DMatrix<C64>) -> f64 {
    hermitian_eigenvalues(&(gamma - rho)).iter().map(|v| v.abs()).sum()
}

/// ‖γ - ρ‖_op.
pub fn op_distance(gamma: &DMatrix<C64>, rho: &DMatrix<C64>) -> f64 {
    hermitian_op_norm(&(gamma - rho))
}

/// |φ⟩⟨φ|^{⊗M} for M ∈ {1, 2}.
pub fn product_projector(phi: &[C64], order: usize) -> DMatrix<C64> {
    let v = nalgebra::DVector::from_column_slice(phi);
    let p = &v * v.adjoint();
    if order == 1 {
        p
    } else {
        p.kronecker(&p)
    }
}

/// (1/N) Σ over modes with transverse index ≠ 0 of ⟨n̂⟩.
pub fn excitation_probability(basis: &FockBasis, sp: &SingleParticleBasis, psi: &[C64]) -> f64 {
    if sp.modes() < 2 {
        return 0.0;
    }
    let n = basis.particles as f64;
    (0..basis.dim())
        .map(|s| {
            let excited: u32 = basis.occupation(s).iter().enumerate().filter(|(i, _)| sp.split(*i).1 != 0).map(|(_, &k)| k as u32).sum();
            psi[s].norm_sqr() * excited as f64
        })
        .sum::<f64>()
        / n
}

/// E^ψ(t) and the running a-priori bound g(t).
#[derive(Debug, Clone, Default, Serialize)]
pub struct EnergyDiagnostics {
    pub times: Vec<f64>,
    pub energy: Vec<f64>,
    pub g: Vec<f64>,
    integral: f64,
}

impl EnergyDiagnostics {
    /// Record E^ψ(t) = ⟨ψ,H(t)ψ⟩/N - E₀/ε² and update
    /// g(t)² = 1 + |E^ψ(0)| + ∫₀ᵗ ‖V̇‖_∞ (trapezoid on the record times).
    pub fn record(&mut self, h: &ManyBodyHamiltonian, pot: &Potential1D, t: f64, psi: &[C64]) -> f64 {
        let e = energy_per_particle(h, t, psi);
        if let Some(&t0) = self.times.last() {
            self.integral += 0.5 * (t - t0) * (pot.dot_sup(t0) + pot.dot_sup(t));
        }
        self.times.push(t);
        self.energy.push(e);
        let g = (1.0 + self.energy[0].abs() + self.integral).sqrt();
        self.g.push(g);
        e
    }
}

pub fn energy_per_particle(h: &ManyBodyHamiltonian, t: f64, psi: &[C64]) -> f64 {
    h.expectation(t, psi) / h.particles as f64
}

/// Convenience: basis, one-body data and Hamiltonian for a scaling point,
/// using the x-marginal kernel of `w` at range μ.
pub fn hamiltonian_for_point(
    basis: &FockBasis,
    sp: &SingleParticleBasis,
    point: &ScalingPoint,
    pot: &Potential1D,
    w: &PairPotential,
    overlaps: &OverlapTensor,
) -> Result<ManyBodyHamiltonian> {
    let kernel = XKernel::from_pair(w, point.mu(), sp.sites, sp.dx());
    build_hamiltonian(basis, sp, pot, &kernel, overlaps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::unitary_propagator;
    use crate::nls::Profile;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(dim: usize, seed: u64) -> Vec<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v: Vec<C64> = (0..dim).map(|_| C64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect();
        let n = cnorm(&v);
        v.iter_mut().for_each(|c| *c /= n);
        v
    }

    #[test]
    fn dimensions_and_ranking() {
        assert_eq!(FockBasis::new(16, 4).unwrap().dim(), 3876);
        assert_eq!(FockBasis::new(16, 6).unwrap().dim(), 54264);
        assert_eq!(FockBasis::new(7, 1).unwrap().dim(), 7);
        let b = FockBasis::new(5, 3).unwrap();
        for s in 0..b.dim() {
            assert_eq!(b.index(b.occupation(s)), s);
        }
        assert!(matches!(FockBasis::with_cap(16, 6, 1000), Err(Error::DimensionCap { dim: 54264, cap: 1000 })));
    }

    fn toy(sites: usize, m: usize, n: usize) -> (FockBasis, SingleParticleBasis, Potential1D) {
        let energies: Vec<f64> = (0..m).map(|j| 2.0 + 3.0 * j as f64).collect();
        let sp = SingleParticleBasis::new(sites, 2.0, energies, 0.5).unwrap();
        let x = crate::nls::grid(2.0, sites);
        let pot = Potential1D::stationary(Profile::Harmonic { strength: 0.3, center: 0.1 }.sample(&x));
        (FockBasis::new(sp.dim(), n).unwrap(), sp, pot)
    }

    #[test]
    fn single_particle_hamiltonian_is_one_body_matrix() {
        let (b, sp, pot) = toy(4, 2, 1);
        let kernel = XKernel::on_site(4, sp.dx(), 1.0);
        assert!(build_hamiltonian(&b, &sp, &pot, &kernel, &OverlapTensor::single(1.0)).is_err());
        let o2 = OverlapTensor::single(1.0);
        let (b, sp, pot) = toy(4, 1, 1);
        let h = build_hamiltonian(&b, &sp, &pot, &XKernel::on_site(4, sp.dx(), 1.0), &o2).unwrap();
        let mut h1 = sp.one_body(&pot.static_part);
        for i in 0..4 {
            h1[(i, i)] -= sp.energies[0] / 0.25;
        }
        assert!((h.dense(0.0) - h1).abs().max() < 1e-14);
    }

    #[test]
    fn two_site_on_site_interaction() {
        let sp = SingleParticleBasis::new(2, 1.0, vec![0.0], 1.0).unwrap();
        let b = FockBasis::new(2, 2).unwrap();
        let u = 1.7;
        let kernel = XKernel { values: vec![u, 0.0] };
        // no kinetic term: compare the interaction part only
        let h = build_hamiltonian(&b, &sp, &Potential1D::zero(2), &kernel, &OverlapTensor::single(1.0)).unwrap();
        let hk = build_hamiltonian(&b, &sp, &Potential1D::zero(2), &XKernel { values: vec![0.0, 0.0] }, &OverlapTensor::single(1.0)).unwrap();
        let w = h.dense(0.0) - hk.dense(0.0);
        let mut ev: Vec<f64> = nalgebra::SymmetricEigen::new(w).eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (e, want) in ev.iter().zip([0.0, u, u]) {
            assert!((e - want).abs() < 1e-14, "{ev:?}");
        }
    }

    #[test]
    fn transverse_shift_only_moves_offset() {
        let (b, sp, pot) = toy(3, 2, 2);
        let mut shifted = sp.clone();
        shifted.energies.iter_mut().for_each(|e| *e += 0.8);
        let tensor = two_mode_tensor();
        let k = XKernel::on_site(3, sp.dx(), 0.5);
        let h0 = build_hamiltonian(&b, &sp, &pot, &k, &tensor).unwrap();
        let h1 = build_hamiltonian(&b, &shifted, &pot, &k, &tensor).unwrap();
        assert!((h0.dense(0.0) - h1.dense(0.0)).abs().max() < 1e-12);
        assert!((h1.offset - h0.offset - 2.0 * 0.8 / 0.25).abs() < 1e-12);
    }

    fn two_mode_tensor() -> OverlapTensor {
        let cs = crate::transverse::CrossSection::rectangle(std::f64::consts::PI, 2.0, 24);
        crate::transverse::dirichlet_modes(&cs, 2).unwrap().overlap_tensor()
    }

    #[test]
    fn hermitian_with_modes() {
        let (b, sp, pot) = toy(4, 2, 3);
        let w = PairPotential::unit_mass();
        let k = XKernel::from_pair(&w, 2.5, 4, sp.dx());
        let h = build_hamiltonian(&b, &sp, &pot, &k, &two_mode_tensor()).unwrap();
        assert!(h.matrix.symmetry_defect() < 1e-14);
    }

    #[test]
    fn krylov_matches_dense() {
        let (b, sp, pot) = toy(4, 2, 3);
        let pot = pot.with_drive(Profile::Cosine { amplitude: 1.0, wavenumber: 1.0 }.sample(&crate::nls::grid(2.0, 4)), 0.7, 2.0);
        let k = XKernel::on_site(4, sp.dx(), 1.0);
        let h = build_hamiltonian(&b, &sp, &pot, &k, &two_mode_tensor()).unwrap();
        let psi0 = random_state(b.dim(), 3);
        let a = evolve_state(&h, &psi0, 0.01, 0.5, Propagator::Krylov, |_, _, _| Ok(())).unwrap();
        let d = evolve_state(&h, &psi0, 0.01, 0.5, Propagator::Dense, |_, _, _| Ok(())).unwrap();
        let err = a.iter().zip(&d).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-8, "{err}");
    }

    #[test]
    fn eigenvector_only_rotates_phase() {
        let (b, sp, pot) = toy(4, 1, 2);
        let h = build_hamiltonian(&b, &sp, &pot, &XKernel::on_site(4, sp.dx(), 1.0), &OverlapTensor::single(0.3)).unwrap();
        let eig = nalgebra::SymmetricEigen::new(h.dense(0.0));
        let v: Vec<C64> = eig.eigenvectors.column(0).iter().map(|&x| C64::new(x, 0.0)).collect();
        let mut diag = EnergyDiagnostics::default();
        let out = evolve_state(&h, &v, 1e-3, 1.0, Propagator::Krylov, |_, t, psi| {
            assert!((cnorm(psi) - 1.0).abs() < 1e-9);
            diag.record(&h, &pot, t, psi);
            Ok(())
        })
        .unwrap();
        assert!((cdot(&v, &out).norm() - 1.0).abs() < 1e-9);
        let e0 = diag.energy[0];
        assert!(diag.energy.iter().all(|e| (e - e0).abs() < 1e-8));
        assert!(diag.g.iter().all(|g| (g - (1.0 + e0.abs()).sqrt()).abs() < 1e-15));
    }

    #[test]
    fn single_particle_matches_one_body_propagator() {
        let (b, sp, pot) = toy(6, 1, 1);
        let h = build_hamiltonian(&b, &sp, &pot, &XKernel::on_site(6, sp.dx(), 1.0), &OverlapTensor::single(1.0)).unwrap();
        let psi0 = random_state(6, 9);
        let out = evolve_state(&h, &psi0, 0.01, 1.0, Propagator::Krylov, |_, _, _| Ok(())).unwrap();
        let mut h1 = sp.one_body(&pot.static_part);
        for i in 0..6 {
            h1[(i, i)] -= sp.energies[0] / 0.25;
        }
        let u = unitary_propagator(&h1, 1.0);
        let want = u * nalgebra::DVector::from_column_slice(&psi0);
        let err = out.iter().zip(want.iter()).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn densities() {
        let b = FockBasis::new(2, 2).unwrap();
        let mut psi = vec![C64::new(0.0, 0.0); 3];
        psi[b.index(&[2, 0])] = C64::new(0.5f64.sqrt(), 0.0);
        psi[b.index(&[0, 2])] = C64::new(0.5f64.sqrt(), 0.0);
        let g = one_body_density(&b, &psi);
        assert!((g[(0, 0)].re - 0.5).abs() < 1e-15 && g[(0, 1)].norm() < 1e-15);

        let b = FockBasis::new(4, 3).unwrap();
        let phi = random_state(4, 1);
        let c = b.condensate(&phi);
        assert!((cnorm(&c) - 1.0).abs() < 1e-13);
        for m in 1..=2 {
            let gm = if m == 1 { one_body_density(&b, &c) } else { two_body_density(&b, &c).unwrap() };
            assert!(trace_distance(&gm, &product_projector(&phi, m)) < 1e-12);
        }
        let r = random_state(b.dim(), 4);
        let g1 = one_body_density(&b, &r);
        assert!((g1.trace().re - 1.0).abs() < 1e-13);
        assert!(hermitian_eigenvalues(&g1)[0] > -1e-10);
        let g2 = two_body_density(&b, &r).unwrap();
        assert!((g2.trace().re - 1.0).abs() < 1e-13);
    }

    #[test]
    fn trace_distance_cases() {
        let e = |i: usize| {
            let mut v = vec![C64::new(0.0, 0.0); 3];
            v[i] = C64::new(1.0, 0.0);
            product_projector(&v, 1)
        };
        assert!(trace_distance(&e(0), &e(0)) < 1e-15);
        assert!((trace_distance(&e(0), &e(1)) - 2.0).abs() < 1e-14);
        let b = FockBasis::new(3, 2).unwrap();
        let g = one_body_density(&b, &random_state(b.dim(), 7));
        let p = product_projector(&random_state(3, 8), 1);
        assert!((trace_distance(&g, &p) - 2.0 * op_distance(&g, &p)).abs() < 1e-10);
    }

    #[test]
    fn excitation_counts() {
        let (b, sp, _) = toy(2, 2, 3);
        let mut phi = vec![C64::new(0.0, 0.0); sp.dim()];
        phi[sp.label(0, 0)] = C64::new(1.0, 0.0);
        assert!(excitation_probability(&b, &sp, &b.condensate(&phi)) < 1e-15);
        let mut psi = vec![C64::new(0.0, 0.0); b.dim()];
        let mut occ = vec![0u8; sp.dim()];
        occ[sp.label(0, 0)] = 2;
        occ[sp.label(1, 1)] = 1;
        psi[b.index(&occ)] = C64::new(1.0, 0.0);
        assert!((excitation_probability(&b, &sp, &psi) - 1.0 / 3.0).abs() < 1e-15);
    }
}
