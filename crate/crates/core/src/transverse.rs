//! Dirichlet modes of the cross-section: the lowest eigenpairs of
//! `-Δ_y + V⊥` on a uniform grid, and the scalars the one-dimensional
//! problem is built from.
//!
//! The 5-point Laplacian is used on interior nodes. For analytic shapes the
//! Dirichlet zero sits on the true boundary crossing of each grid arm
//! (linear ghost extrapolation); bitmap masks use plain node exclusion.
//! Integrals use the nodal weight `h²`, the inner product in which the
//! discrete operator is symmetric.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, norm, BandedCholesky, CsrMatrix};

/// Start-vector seed for the eigensolver.
const SEED: u64 = 0x5eed_c0de;
/// Nodes closer than this fraction of `h` to the boundary along some arm
/// are dropped so that ghost weights stay bounded.
const MIN_CUT: f64 = 0.25;
pub const DEFAULT_TOL: f64 = 1e-9;
const MAX_ITER: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// `(0, width) × (0, height)`.
    Rectangle { width: f64, height: f64 },
    /// Disk of the given radius centred at the origin.
    Disk { radius: f64 },
    /// Ellipse with semi-axes `a`, `b` centred at the origin.
    Ellipse { a: f64, b: f64 },
    /// Node bitmap with spacing `h`; `#` marks interior nodes, row `k` is
    /// at `y₂ = k h`, column `i` at `y₁ = i h`. An outside ring is implied.
    Mask { h: f64, rows: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TransversePotential {
    #[default]
    Zero,
    Constant { value: f64 },
    /// `strength · |y - center|²`.
    Harmonic { strength: f64, center: [f64; 2] },
}

impl TransversePotential {
    pub fn eval(&self, y: [f64; 2]) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant { value } => *value,
            Self::Harmonic { strength, center } => {
                let (a, b) = (y[0] - center[0], y[1] - center[1]);
                strength * (a * a + b * b)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    pub shape: Shape,
    /// Grid intervals across the longer side of the bounding box (ignored
    /// for masks, which carry their own spacing).
    #[serde(default = "default_resolution")]
    pub resolution: usize,
    #[serde(default)]
    pub potential: TransversePotential,
    /// Origin for the angular momentum operator; the centroid if unset.
    #[serde(default)]
    pub origin: Option<[f64; 2]>,
}

fn default_resolution() -> usize {
    128
}

impl CrossSection {
    pub fn new(shape: Shape, resolution: usize) -> Self {
        Self { shape, resolution, potential: TransversePotential::Zero, origin: None }
    }

    pub fn rectangle(width: f64, height: f64, resolution: usize) -> Self {
        Self::new(Shape::Rectangle { width, height }, resolution)
    }

    pub fn disk(radius: f64, resolution: usize) -> Self {
        Self::new(Shape::Disk { radius }, resolution)
    }

    pub fn with_potential(mut self, p: TransversePotential) -> Self {
        self.potential = p;
        self
    }

    /// sup |y - origin| over the shape, used for the width check.
    pub fn extent(&self) -> Result<f64> {
        let g = Grid::build(self)?;
        let o = g.origin;
        let mut r: f64 = 0.0;
        for (i, k) in g.nodes.iter().copied() {
            let y = g.coord(i, k);
            r = r.max((y[0] - o[0]).hypot(y[1] - o[1]));
        }
        Ok(r + g.h)
    }
}

#[derive(Debug, Clone)]
struct Grid {
    h: f64,
    lo: [f64; 2],
    nx: usize,
    ny: usize,
    /// Unknown index per node, row-major over (i, k).
    index: Vec<Option<usize>>,
    nodes: Vec<(usize, usize)>,
    /// Ghost factor per node and arm (+1, -1, +2, -2): the value of the
    /// neighbouring ghost is `factor · χ(node)`. Zero for grid-aligned
    /// boundaries; `None` when the neighbour is an unknown.
    ghost: Vec<[Option<f64>; 4]>,
    origin: [f64; 2],
}

const ARMS: [(isize, isize); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];

impl Grid {
    fn coord(&self, i: usize, k: usize) -> [f64; 2] {
        [self.lo[0] + self.h * i as f64, self.lo[1] + self.h * k as f64]
    }

    fn at(&self, i: isize, k: isize) -> Option<usize> {
        if i < 0 || k < 0 || i as usize > self.nx || k as usize > self.ny {
            return None;
        }
        self.index[i as usize * (self.ny + 1) + k as usize]
    }

    fn build(cs: &CrossSection) -> Result<Self> {
        let (h, lo, nx, ny, analytic): (f64, [f64; 2], usize, usize, bool) = match &cs.shape {
            Shape::Rectangle { width, height } => {
                check_pos(&[*width, *height])?;
                let h = width.max(*height) / cs.resolution as f64;
                let nx = (width / h).ceil() as usize;
                let ny = (height / h).ceil() as usize;
                (h, [0.0, 0.0], nx, ny, true)
            }
            Shape::Disk { radius } => {
                check_pos(&[*radius])?;
                let h = 2.0 * radius / cs.resolution as f64;
                (h, [-radius, -radius], cs.resolution, cs.resolution, true)
            }
            Shape::Ellipse { a, b } => {
                check_pos(&[*a, *b])?;
                let h = 2.0 * a.max(*b) / cs.resolution as f64;
                let nx = (2.0 * a / h).ceil() as usize;
                let ny = (2.0 * b / h).ceil() as usize;
                (h, [-(nx as f64) * h / 2.0, -(ny as f64) * h / 2.0], nx, ny, true)
            }
            Shape::Mask { h, rows } => {
                check_pos(&[*h])?;
                let w = rows.iter().map(|r| r.chars().count()).max().unwrap_or(0);
                (*h, [-h, -h], w + 1, rows.len() + 1, false)
            }
        };
        if cs.resolution < 4 && analytic {
            return Err(invalid("cross-section resolution must be at least 4"));
        }
        let mut g = Grid {
            h,
            lo,
            nx,
            ny,
            index: vec![None; (nx + 1) * (ny + 1)],
            nodes: Vec::new(),
            ghost: Vec::new(),
            origin: [0.0, 0.0],
        };
        // Candidate nodes and their boundary distances along each arm.
        let mut inside = vec![false; (nx + 1) * (ny + 1)];
        for i in 0..=nx {
            for k in 0..=ny {
                let y = g.coord(i, k);
                inside[i * (ny + 1) + k] = match &cs.shape {
                    Shape::Mask { rows, .. } => {
                        i >= 1
                            && k >= 1
                            && rows
                                .get(k - 1)
                                .and_then(|r| r.chars().nth(i - 1))
                                .is_some_and(|c| c == '#')
                    }
                    s => shape_contains(s, y) && arm_distances(s, y, h).iter().all(|d| *d >= MIN_CUT * h),
                };
            }
        }
        let mut n = 0;
        for i in 0..=nx {
            for k in 0..=ny {
                if inside[i * (ny + 1) + k] {
                    g.index[i * (ny + 1) + k] = Some(n);
                    g.nodes.push((i, k));
                    n += 1;
                }
            }
        }
        for &(i, k) in &g.nodes {
            let y = g.coord(i, k);
            let dist = if analytic { arm_distances(&cs.shape, y, h) } else { [h; 4] };
            let mut gh = [None; 4];
            for (a, (di, dk)) in ARMS.iter().enumerate() {
                if g.at(i as isize + di, k as isize + dk).is_none() {
                    let d = dist[a];
                    // linear extrapolation through the boundary zero
                    gh[a] = Some(if (d - h).abs() < 1e-9 * h { 0.0 } else { 1.0 - h / d });
                }
            }
            g.ghost.push(gh);
        }
        if n <= 100 {
            return Err(invalid(format!("cross-section grid has only {n} interior nodes, need > 100")));
        }
        if !g.connected() {
            return Err(invalid("cross-section mask is not connected"));
        }
        let mut c = [0.0, 0.0];
        for &(i, k) in &g.nodes {
            let y = g.coord(i, k);
            c[0] += y[0];
            c[1] += y[1];
        }
        g.origin = cs.origin.unwrap_or(match &cs.shape {
            Shape::Rectangle { width, height } => [width / 2.0, height / 2.0],
            Shape::Disk { .. } | Shape::Ellipse { .. } => [0.0, 0.0],
            Shape::Mask { .. } => [c[0] / n as f64, c[1] / n as f64],
        });
        Ok(g)
    }

    fn connected(&self) -> bool {
        let n = self.nodes.len();
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        let mut count = 1;
        while let Some(a) = queue.pop_front() {
            let (i, k) = self.nodes[a];
            for (di, dk) in ARMS {
                if let Some(b) = self.at(i as isize + di, k as isize + dk) {
                    if !seen[b] {
                        seen[b] = true;
                        count += 1;
                        queue.push_back(b);
                    }
                }
            }
        }
        count == n
    }

    fn operator(&self, pot: &TransversePotential) -> CsrMatrix {
        let h2 = self.h * self.h;
        let mut t = Vec::with_capacity(5 * self.nodes.len());
        for (a, &(i, k)) in self.nodes.iter().enumerate() {
            let mut diag = 4.0 / h2 + pot.eval(self.coord(i, k));
            for (arm, (di, dk)) in ARMS.iter().enumerate() {
                match self.at(i as isize + di, k as isize + dk) {
                    Some(b) => t.push((a, b, -1.0 / h2)),
                    None => diag -= self.ghost[a][arm].unwrap() / h2,
                }
            }
            t.push((a, a, diag));
        }
        CsrMatrix::from_triplets(self.nodes.len(), t)
    }

    /// Value of the neighbour of node `a` along `arm`, ghost if outside.
    fn neighbour(&self, v: &[f64], a: usize, arm: usize) -> f64 {
        let (i, k) = self.nodes[a];
        let (di, dk) = ARMS[arm];
        match self.at(i as isize + di, k as isize + dk) {
            Some(b) => v[b],
            None => self.ghost[a][arm].unwrap() * v[a],
        }
    }
}

fn check_pos(v: &[f64]) -> Result<()> {
    if v.iter().all(|x| *x > 0.0 && x.is_finite()) {
        Ok(())
    } else {
        Err(invalid("cross-section dimensions must be positive"))
    }
}

fn shape_contains(s: &Shape, y: [f64; 2]) -> bool {
    match s {
        Shape::Rectangle { width, height } => y[0] > 0.0 && y[0] < *width && y[1] > 0.0 && y[1] < *height,
        Shape::Disk { radius } => y[0] * y[0] + y[1] * y[1] < radius * radius,
        Shape::Ellipse { a, b } => (y[0] / a).powi(2) + (y[1] / b).powi(2) < 1.0,
        Shape::Mask { .. } => unreachable!(),
    }
}

/// Distance from an interior point to the boundary along ±e₁, ±e₂, capped
/// at `2h`.
fn arm_distances(s: &Shape, y: [f64; 2], h: f64) -> [f64; 4] {
    let mut out = [0.0; 4];
    for (a, (di, dk)) in ARMS.iter().enumerate() {
        let d = [*di as f64, *dk as f64];
        let t = match s {
            Shape::Rectangle { width, height } => match a {
                0 => width - y[0],
                1 => y[0],
                2 => height - y[1],
                _ => y[1],
            },
            Shape::Disk { radius } => ray_quadric(y, d, 1.0 / (radius * radius), 1.0 / (radius * radius)),
            Shape::Ellipse { a: ea, b: eb } => ray_quadric(y, d, 1.0 / (ea * ea), 1.0 / (eb * eb)),
            Shape::Mask { .. } => h,
        };
        out[a] = t.min(2.0 * h);
    }
    out
}

/// Positive root t of p (y + t d)₁² + q (y + t d)₂² = 1.
fn ray_quadric(y: [f64; 2], d: [f64; 2], p: f64, q: f64) -> f64 {
    let a = p * d[0] * d[0] + q * d[1] * d[1];
    let b = p * y[0] * d[0] + q * y[1] * d[1];
    let c = p * y[0] * y[0] + q * y[1] * y[1] - 1.0;
    (-b + (b * b - a * c).max(0.0).sqrt()) / a
}

/// Lowest Dirichlet eigenpairs and derived scalars.
#[derive(Debug, Clone)]
pub struct TransverseModes {
    grid: Grid,
    operator: CsrMatrix,
    pub energies: Vec<f64>,
    /// Mode values on the interior nodes, normalised with weight `h²`.
    pub modes: Vec<Vec<f64>>,
    /// Energy of the first mode beyond those requested (for the gap when
    /// only one mode is asked for).
    next_energy: f64,
    pub residuals: Vec<f64>,
    pub tol: f64,
}

/// Compute the `m` lowest modes. Fails if the ground state is degenerate or
/// the solver does not reach `tol` on the residual.
pub fn dirichlet_modes(cs: &CrossSection, m: usize) -> Result<TransverseModes> {
    dirichlet_modes_tol(cs, m, DEFAULT_TOL)
}

pub fn dirichlet_modes_tol(cs: &CrossSection, m: usize, tol: f64) -> Result<TransverseModes> {
    if m == 0 {
        return Err(invalid("at least one transverse mode is required"));
    }
    let grid = Grid::build(cs)?;
    let a = grid.operator(&cs.potential);
    let n = a.dim();
    let want = (m + 1).min(n);
    let sigma = grid
        .nodes
        .iter()
        .map(|&(i, k)| cs.potential.eval(grid.coord(i, k)))
        .fold(f64::INFINITY, f64::min);
    let chol = BandedCholesky::factor(&a, sigma)
        .ok_or_else(|| Error::NoConvergence("shifted operator is not positive definite".into()))?;
    let (energies, vectors, residuals) = subspace_iteration(&a, &chol, want, tol)?;

    let w = grid.h; // sqrt of the nodal weight h²
    let mut modes: Vec<Vec<f64>> = vectors.into_iter().map(|v| v.iter().map(|x| x / w).collect()).collect();
    // sign convention: positive mass, or a positive first large entry
    for mode in modes.iter_mut() {
        let s: f64 = mode.iter().sum();
        let big = mode.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
        let lead = mode.iter().copied().find(|x| x.abs() > 1e-3 * big).unwrap_or(0.0);
        if s < -1e-8 * big || (s.abs() <= 1e-8 * big && lead < 0.0) {
            mode.iter_mut().for_each(|x| *x = -*x);
        }
    }
    let (mx, mn) = modes[0].iter().fold((f64::MIN, f64::MAX), |(a, b), &x| (a.max(x), b.min(x)));
    if mn < -1e-8 * mx {
        return Err(Error::NodalGroundState { ratio: mn / mx });
    }
    if energies.len() > 1 && energies[1] - energies[0] < 1e-8 * energies[0].abs().max(1.0) {
        return Err(Error::DegenerateGroundState { e0: energies[0], e1: energies[1] });
    }
    let next_energy = energies.get(m).copied().unwrap_or(f64::INFINITY);
    Ok(TransverseModes {
        grid,
        operator: a,
        energies: energies[..m.min(energies.len())].to_vec(),
        modes: modes.into_iter().take(m).collect(),
        next_energy,
        residuals: residuals[..m.min(residuals.len())].to_vec(),
        tol,
    })
}

/// Block inverse iteration with the shifted factorisation and Rayleigh-Ritz
/// on the original operator. Returns eigenvalues ascending, unit Euclidean
/// eigenvectors and residual norms.
#[allow(clippy::type_complexity)]
fn subspace_iteration(
    a: &CsrMatrix,
    chol: &BandedCholesky,
    want: usize,
    tol: f64,
) -> Result<(Vec<f64>, Vec<Vec<f64>>, Vec<f64>)> {
    let n = a.dim();
    let p = (want + 4).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut q: Vec<Vec<f64>> = (0..p).map(|_| (0..n).map(|_| rng.random::<f64>() - 0.5).collect()).collect();
    orthonormalize(&mut q);
    for _ in 0..MAX_ITER {
        let mut y: Vec<Vec<f64>> = q.iter().map(|v| chol.solve(v)).collect();
        orthonormalize(&mut y);
        let ay: Vec<Vec<f64>> = y.iter().map(|v| a.matvec(v)).collect();
        let mut hmat = DMatrix::zeros(p, p);
        for i in 0..p {
            for j in 0..=i {
                let v = 0.5 * (dot(&y[i], &ay[j]) + dot(&y[j], &ay[i]));
                hmat[(i, j)] = v;
                hmat[(j, i)] = v;
            }
        }
        let eig = nalgebra::SymmetricEigen::new(hmat);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
        let mut vals = Vec::with_capacity(p);
        let mut vecs = Vec::with_capacity(p);
        let mut res = Vec::with_capacity(p);
        for &c in &order {
            let lam = eig.eigenvalues[c];
            let mut v = vec![0.0; n];
            let mut av = vec![0.0; n];
            for j in 0..p {
                let s = eig.eigenvectors[(j, c)];
                for r in 0..n {
                    v[r] += s * y[j][r];
                    av[r] += s * ay[j][r];
                }
            }
            let r: f64 = av.iter().zip(&v).map(|(x, z)| (x - lam * z).powi(2)).sum::<f64>().sqrt();
            vals.push(lam);
            vecs.push(v);
            res.push(r);
        }
        if res[..want].iter().zip(&vals).all(|(r, l)| *r <= tol * l.abs().max(1.0)) {
            vals.truncate(want);
            vecs.truncate(want);
            res.truncate(want);
            return Ok((vals, vecs, res));
        }
        q = vecs;
    }
    Err(Error::NoConvergence(format!("{MAX_ITER} subspace iterations without reaching residual {tol:e}")))
}

fn orthonormalize(v: &mut [Vec<f64>]) {
    for i in 0..v.len() {
        for _ in 0..2 {
            for j in 0..i {
                let c = dot(&v[i], &v[j]);
                let (head, tail) = v.split_at_mut(i);
                for (x, y) in tail[0].iter_mut().zip(&head[j]) {
                    *x -= c * y;
                }
            }
        }
        let nv = norm(&v[i]);
        v[i].iter_mut().for_each(|x| *x /= nv);
    }
}

impl TransverseModes {
    pub fn count(&self) -> usize {
        self.energies.len()
    }

    pub fn e0(&self) -> f64 {
        self.energies[0]
    }

    pub fn h(&self) -> f64 {
        self.grid.h
    }

    /// Quadrature weight of every node.
    pub fn weight(&self) -> f64 {
        self.grid.h * self.grid.h
    }

    pub fn node_count(&self) -> usize {
        self.grid.nodes.len()
    }

    pub fn origin(&self) -> [f64; 2] {
        self.grid.origin
    }

    /// Coordinates of the interior nodes.
    pub fn coords(&self) -> Vec<[f64; 2]> {
        self.grid.nodes.iter().map(|&(i, k)| self.grid.coord(i, k)).collect()
    }

    /// E₁ - E₀ (uses an extra computed mode when only one was requested).
    pub fn gap(&self) -> f64 {
        self.energies.get(1).copied().unwrap_or(self.next_energy) - self.energies[0]
    }

    /// The gap after the 1/ε² confinement scaling.
    pub fn gap_scaling(&self, eps: f64) -> f64 {
        self.gap() / (eps * eps)
    }

    pub fn inner(&self, a: usize, b: usize) -> f64 {
        self.weight() * dot(&self.modes[a], &self.modes[b])
    }

    pub fn orthonormality_defect(&self) -> f64 {
        let mut d: f64 = 0.0;
        for a in 0..self.count() {
            for b in 0..self.count() {
                let t = if a == b { 1.0 } else { 0.0 };
                d = d.max((self.inner(a, b) - t).abs());
            }
        }
        d
    }

    /// Largest relative Rayleigh-quotient mismatch and the largest residual
    /// ‖(A - E_j)χ_j‖ in the unit Euclidean normalisation.
    pub fn residual_check(&self) -> (f64, f64) {
        let mut rq: f64 = 0.0;
        let mut res: f64 = 0.0;
        for (j, chi) in self.modes.iter().enumerate() {
            let av = self.operator.matvec(chi);
            let q = dot(chi, &av) / dot(chi, chi);
            rq = rq.max((q - self.energies[j]).abs() / self.energies[j].abs().max(1.0));
            let nrm = norm(chi);
            let r: f64 = av.iter().zip(chi).map(|(x, c)| (x - self.energies[j] * c).powi(2)).sum::<f64>().sqrt();
            res = res.max(r / nrm);
        }
        (rq, res)
    }

    /// ∫|χ₀|⁴.
    pub fn chi_quartic(&self) -> f64 {
        self.weight() * self.modes[0].iter().map(|x| x * x * x * x).sum::<f64>()
    }

    /// |Ω| as seen by the grid quadrature.
    pub fn area(&self) -> f64 {
        self.weight() * self.node_count() as f64
    }

    /// L χ_j with L = y₁∂₂ - y₂∂₁ about the configured origin.
    pub fn angular_momentum(&self, j: usize) -> Vec<f64> {
        let g = &self.grid;
        let v = &self.modes[j];
        let o = g.origin;
        (0..g.nodes.len())
            .map(|a| {
                let (i, k) = g.nodes[a];
                let y = g.coord(i, k);
                let d1 = (g.neighbour(v, a, 0) - g.neighbour(v, a, 1)) / (2.0 * g.h);
                let d2 = (g.neighbour(v, a, 2) - g.neighbour(v, a, 3)) / (2.0 * g.h);
                (y[0] - o[0]) * d2 - (y[1] - o[1]) * d1
            })
            .collect()
    }

    /// ‖Lχ₀‖².
    pub fn angular_momentum_norm(&self) -> f64 {
        self.weight() * self.angular_momentum(0).iter().map(|x| x * x).sum::<f64>()
    }

    /// O_abcd = ∫χ_aχ_bχ_cχ_d for all index quadruples, flattened
    /// row-major. Each distinct multiset is summed once so that the tensor
    /// is exactly permutation symmetric.
    pub fn overlap_tensor(&self) -> OverlapTensor {
        let m = self.count();
        let mut data = vec![0.0; m.pow(4)];
        for a in 0..m {
            for b in a..m {
                for c in b..m {
                    for d in c..m {
                        let v = self.weight()
                            * (0..self.node_count())
                                .map(|r| self.modes[a][r] * self.modes[b][r] * self.modes[c][r] * self.modes[d][r])
                                .sum::<f64>();
                        for p in permutations([a, b, c, d]) {
                            data[((p[0] * m + p[1]) * m + p[2]) * m + p[3]] = v;
                        }
                    }
                }
            }
        }
        OverlapTensor { m, data }
    }

    /// Bilinear interpolation of mode `j` (zero outside the interior nodes).
    pub fn value_at(&self, j: usize, y: [f64; 2]) -> f64 {
        let g = &self.grid;
        let u = (y[0] - g.lo[0]) / g.h;
        let v = (y[1] - g.lo[1]) / g.h;
        if u < 0.0 || v < 0.0 {
            return 0.0;
        }
        let (i, k) = (u.floor() as isize, v.floor() as isize);
        let (fu, fv) = (u - i as f64, v - k as f64);
        let val = |di: isize, dk: isize| g.at(i + di, k + dk).map_or(0.0, |b| self.modes[j][b]);
        val(0, 0) * (1.0 - fu) * (1.0 - fv)
            + val(1, 0) * fu * (1.0 - fv)
            + val(0, 1) * (1.0 - fu) * fv
            + val(1, 1) * fu * fv
    }

    /// Summary scalars.
    pub fn summary(&self) -> ModeSummary {
        ModeSummary {
            e0: self.e0(),
            gap: self.gap(),
            q4: self.chi_quartic(),
            lchi2: self.angular_momentum_norm(),
            energies: self.energies.clone(),
        }
    }

    /// Binary dump: `WGMODES1`, then little-endian u64 nx, ny, m, f64 h,
    /// lo₁, lo₂, the m energies and m full (nx+1)(ny+1) grids (row-major in
    /// the first index, zero off the interior).
    pub fn write_dump(&self, mut w: impl Write) -> std::io::Result<()> {
        let g = &self.grid;
        w.write_all(b"WGMODES1")?;
        for v in [g.nx as u64, g.ny as u64, self.count() as u64] {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in [g.h, g.lo[0], g.lo[1]].iter().chain(&self.energies) {
            w.write_all(&v.to_le_bytes())?;
        }
        for mode in &self.modes {
            for slot in &g.index {
                let v = slot.map_or(0.0, |b| mode[b]);
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

fn permutations(v: [usize; 4]) -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        out.push([v[a], v[b], v[c], v[d]]);
                    }
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlapTensor {
    pub m: usize,
    data: Vec<f64>,
}

impl OverlapTensor {
    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> f64 {
        let m = self.m;
        self.data[((a * m + b) * m + c) * m + d]
    }

    /// Tensor for a single mode with ∫|χ|⁴ = q4.
    pub fn single(q4: f64) -> Self {
        Self { m: 1, data: vec![q4] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub e0: f64,
    pub gap: f64,
    pub q4: f64,
    pub lchi2: f64,
    pub energies: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn square_closed_forms() {
        let modes = dirichlet_modes(&CrossSection::rectangle(PI, PI, 64), 3).unwrap();
        assert!((modes.e0() - 2.0).abs() / 2.0 < 5e-3);
        assert!((modes.energies[1] - 5.0).abs() / 5.0 < 5e-3);
        assert!((modes.gap() - 3.0).abs() < 3e-2);
        assert!((modes.chi_quartic() - 9.0 / (4.0 * PI * PI)).abs() < 1e-3);
        assert!(modes.orthonormality_defect() < 1e-8);
        // discrete eigenvalue of the 5-point operator is known exactly
        let h = PI / 64.0;
        let exact = 2.0 * 4.0 / (h * h) * (h / 2.0).sin().powi(2);
        assert!((modes.e0() - exact).abs() < 1e-9);
    }

    #[test]
    fn constant_potential_shifts_spectrum() {
        let base = dirichlet_modes(&CrossSection::rectangle(PI, 2.0, 40), 2).unwrap();
        let cs = CrossSection::rectangle(PI, 2.0, 40).with_potential(TransversePotential::Constant { value: 1.5 });
        let shifted = dirichlet_modes(&cs, 2).unwrap();
        for j in 0..2 {
            assert!((shifted.energies[j] - base.energies[j] - 1.5).abs() < 1e-9);
        }
        let diff: f64 = base.modes[0].iter().zip(&shifted.modes[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-6);
    }

    #[test]
    fn second_order_convergence() {
        let e = |n| dirichlet_modes(&CrossSection::rectangle(PI, PI, n), 1).unwrap().e0() - 2.0;
        let r = e(32) / e(64);
        assert!((3.5..=4.5).contains(&r), "ratio {r}");
    }

    #[test]
    fn disk_ground_state() {
        let j01sq = 2.404_825_557_695_773_f64.powi(2);
        let modes = dirichlet_modes(&CrossSection::disk(1.0, 64), 1).unwrap();
        assert!((modes.e0() - j01sq).abs() / j01sq < 1e-3);
        assert!(modes.angular_momentum_norm() < 1e-5);
    }

    #[test]
    fn quartic_scales_with_area() {
        let a = dirichlet_modes(&CrossSection::rectangle(PI, PI, 32), 1).unwrap().chi_quartic();
        let b = dirichlet_modes(&CrossSection::rectangle(2.0 * PI, 2.0 * PI, 32), 1).unwrap().chi_quartic();
        assert!((b - a / 4.0).abs() < 1e-12);
        assert!(a >= 1.0 / (PI * PI));
    }

    #[test]
    fn angular_momentum_of_rectangles() {
        let l = |w: f64| dirichlet_modes(&CrossSection::rectangle(w, 1.0, 48), 1).unwrap().angular_momentum_norm();
        let sq = l(1.0);
        assert!(sq > 0.0, "{sq}");
        let vals: Vec<f64> = [1.5, 2.0, 3.0].iter().map(|&w| l(w)).collect();
        assert!(vals[0] > sq && vals[1] > vals[0] && vals[2] > vals[1], "{vals:?}");
        // rotating the rectangle by 90° does not change the value
        let rot = dirichlet_modes(&CrossSection::rectangle(1.0, 2.0, 48), 1).unwrap().angular_momentum_norm();
        assert!((rot - vals[1]).abs() < 1e-10 * vals[1]);
    }

    #[test]
    fn overlap_tensor_symmetry_and_oracle() {
        let modes = dirichlet_modes(&CrossSection::rectangle(PI, 1.3, 48), 3).unwrap();
        let o = modes.overlap_tensor();
        assert_eq!(o.get(0, 0, 0, 0), modes.chi_quartic());
        assert_eq!(o.get(0, 0, 1, 1), o.get(1, 0, 1, 0));
        assert_eq!(o.get(0, 1, 2, 1), o.get(2, 1, 0, 1));
        // separable oracle: χ₀χ₁ factorise, so the y₂ part is ∫sin⁴ and the
        // y₁ part is a 1D quadrature of sin²(y)sin²(2y)
        let hy = PI / 48.0;
        let one: f64 = (1..48).map(|i| ((i as f64 * hy).sin() * (2.0 * i as f64 * hy).sin()).powi(2)).sum::<f64>() * hy;
        let quart2 = 3.0 / 8.0 * 1.3 * (2.0 / 1.3f64).powi(2);
        let norm1 = (2.0 / PI) * (2.0 / PI);
        let expected = norm1 * one * quart2;
        assert!((o.get(0, 0, 1, 1) - expected).abs() / expected < 2e-2);
    }

    #[test]
    fn mask_and_errors() {
        let rows: Vec<String> = (0..14).map(|_| "#".repeat(14)).collect();
        let cs = CrossSection::new(Shape::Mask { h: 0.1, rows }, 0);
        let modes = dirichlet_modes(&cs, 1).unwrap();
        // a 14×14 block of nodes with spacing 0.1 is the square of side 1.5
        let exact = 2.0 * (PI / 1.5).powi(2);
        assert!((modes.e0() - exact).abs() / exact < 2e-2);
        let small = CrossSection::rectangle(1.0, 1.0, 8);
        assert!(dirichlet_modes(&small, 1).is_err());
        let split: Vec<String> = (0..14).map(|_| format!("{}..{}", "#".repeat(7), "#".repeat(7))).collect();
        assert!(dirichlet_modes(&CrossSection::new(Shape::Mask { h: 0.1, rows: split }, 0), 1).is_err());
    }

    #[test]
    fn gap_scaling_values() {
        let modes = dirichlet_modes(&CrossSection::rectangle(PI, PI, 32), 1).unwrap();
        let g = modes.gap();
        assert_eq!(modes.gap_scaling(1.0), g);
        assert!((modes.gap_scaling(0.05) - 4.0 * modes.gap_scaling(0.1)).abs() < 1e-9);
    }
}
