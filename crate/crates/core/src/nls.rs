//! Effective one-dimensional equation
//! `i ∂ₜΦ = -Φ'' + V_geom Φ + V(t, x) Φ + b |Φ|² Φ` on a periodic box,
//! solved by split-step Fourier, plus its energy, conservation checks,
//! ground states and discrete Sobolev norms.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::C64;

/// Wavefunction on the periodic grid `x_j = -X + j Δx`, `Δx = 2X/G`.
#[derive(Debug, Clone, PartialEq)]
pub struct Wave1D {
    pub half_width: f64,
    pub psi: Vec<C64>,
}

impl Wave1D {
    pub fn new(half_width: f64, psi: Vec<C64>) -> Result<Self> {
        if !(half_width > 0.0) {
            return Err(invalid("box half-width must be positive"));
        }
        if psi.len() < 4 || !psi.len().is_power_of_two() {
            return Err(invalid(format!("grid size must be a power of two >= 4, got {}", psi.len())));
        }
        Ok(Self { half_width, psi })
    }

    pub fn from_fn(half_width: f64, g: usize, f: impl Fn(f64) -> C64) -> Result<Self> {
        let dx = 2.0 * half_width / g as f64;
        Self::new(half_width, (0..g).map(|j| f(-half_width + dx * j as f64)).collect())
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.len() as f64
    }

    pub fn grid(&self) -> Vec<f64> {
        grid(self.half_width, self.len())
    }

    /// ‖Φ‖² = Δx Σ|Φ_j|².
    pub fn mass(&self) -> f64 {
        self.dx() * self.psi.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn normalize(&mut self) {
        let m = self.mass().sqrt();
        self.psi.iter_mut().for_each(|c| *c /= m);
    }

    /// Mass in the outer 10% of the box on each side.
    pub fn boundary_mass(&self) -> f64 {
        let g = self.len();
        let edge = g / 10;
        let dx = self.dx();
        self.psi[..edge].iter().chain(&self.psi[g - edge..]).map(|c| c.norm_sqr()).sum::<f64>() * dx
    }

    /// Largest |Φ| within 10% of the boundary.
    pub fn boundary_amplitude(&self) -> f64 {
        let g = self.len();
        let edge = g / 10;
        self.psi[..edge].iter().chain(&self.psi[g - edge..]).map(|c| c.norm()).fold(0.0, f64::max)
    }
}

pub fn grid(half_width: f64, g: usize) -> Vec<f64> {
    let dx = 2.0 * half_width / g as f64;
    (0..g).map(|j| -half_width + dx * j as f64).collect()
}

/// Smallest power-of-two box (doubling X) for which `f` is below `threshold`
/// within 10% of each boundary, keeping the spacing `dx`.
pub fn auto_box(f: impl Fn(f64) -> C64, start_half_width: f64, dx: f64, threshold: f64) -> Result<Wave1D> {
    let mut x = start_half_width;
    for _ in 0..20 {
        let g = ((2.0 * x / dx).round() as usize).next_power_of_two().max(4);
        let half = 0.5 * g as f64 * dx;
        let w = Wave1D::from_fn(half, g, &f)?;
        if w.boundary_amplitude() < threshold {
            return Ok(w);
        }
        x = 2.0 * half;
    }
    Err(invalid("initial profile does not decay within 2^20 box doublings"))
}

/// Profile of a static or driving potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    #[default]
    Zero,
    Constant { value: f64 },
    /// strength · (x - center)².
    Harmonic { strength: f64, center: f64 },
    /// depth · exp(-((x - center)/width)²); negative depth is a well.
    Gaussian { depth: f64, width: f64, center: f64 },
    /// amplitude · cos(wavenumber · x).
    Cosine { amplitude: f64, wavenumber: f64 },
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            Profile::Zero => 0.0,
            Profile::Constant { value } => value,
            Profile::Harmonic { strength, center } => strength * (x - center).powi(2),
            Profile::Gaussian { depth, width, center } => depth * (-((x - center) / width).powi(2)).exp(),
            Profile::Cosine { amplitude, wavenumber } => amplitude * (wavenumber * x).cos(),
        }
    }

    pub fn sample(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.eval(x)).collect()
    }
}

/// V(t, x) = static(x) + amplitude · sin(frequency · t) · drive(x) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Potential1D {
    pub static_part: Vec<f64>,
    pub drive: Option<Drive>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Drive {
    pub profile: Vec<f64>,
    pub amplitude: f64,
    pub frequency: f64,
}

impl Potential1D {
    pub fn zero(g: usize) -> Self {
        Self { static_part: vec![0.0; g], drive: None }
    }

    pub fn stationary(static_part: Vec<f64>) -> Self {
        Self { static_part, drive: None }
    }

    pub fn with_drive(mut self, profile: Vec<f64>, amplitude: f64, frequency: f64) -> Self {
        self.drive = Some(Drive { profile, amplitude, frequency });
        self
    }

    pub fn is_static(&self) -> bool {
        self.drive.as_ref().is_none_or(|d| d.amplitude == 0.0)
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        match &self.drive {
            None => self.static_part.clone(),
            Some(d) => {
                let s = d.amplitude * (d.frequency * t).sin();
                self.static_part.iter().zip(&d.profile).map(|(v, p)| v + s * p).collect()
            }
        }
    }

    /// ∂ₜV(t, ·).
    pub fn dot(&self, t: f64) -> Vec<f64> {
        match &self.drive {
            None => vec![0.0; self.static_part.len()],
            Some(d) => {
                let s = d.amplitude * d.frequency * (d.frequency * t).cos();
                d.profile.iter().map(|p| s * p).collect()
            }
        }
    }

    /// ‖∂ₜV(t, ·)‖_∞.
    pub fn dot_sup(&self, t: f64) -> f64 {
        self.dot(t).iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

/// Symbol used for -∂²ₓ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Kinetic {
    /// k².
    #[default]
    Spectral,
    /// (2/Δx)² sin²(kΔx/2), the 3-point periodic Laplacian.
    Lattice,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Integrator {
    /// Kinetic half step, potential and nonlinear full step, kinetic half step.
    Strang,
    /// Fourth-order triple-jump composition of Strang steps.
    #[default]
    Yoshida4,
}

pub fn wavenumbers(half_width: f64, g: usize) -> Vec<f64> {
    (0..g)
        .map(|i| {
            let m = if i <= g / 2 { i as f64 } else { i as f64 - g as f64 };
            PI * m / half_width
        })
        .collect()
}

pub fn kinetic_symbol(kinetic: Kinetic, half_width: f64, g: usize) -> Vec<f64> {
    let dx = 2.0 * half_width / g as f64;
    wavenumbers(half_width, g)
        .into_iter()
        .map(|k| match kinetic {
            Kinetic::Spectral => k * k,
            Kinetic::Lattice => (2.0 / dx * (0.5 * k * dx).sin()).powi(2),
        })
        .collect()
}

/// FFT pair with unnormalised forward and 1/G inverse.
#[derive(Clone)]
pub struct Spectral {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    g: usize,
}

impl std::fmt::Debug for Spectral {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Spectral({})", self.g)
    }
}

impl Spectral {
    pub fn new(g: usize) -> Self {
        let mut p = FftPlanner::new();
        Self { fwd: p.plan_fft_forward(g), inv: p.plan_fft_inverse(g), g }
    }

    pub fn forward(&self, v: &mut [C64]) {
        self.fwd.process(v);
    }

    pub fn inverse(&self, v: &mut [C64]) {
        self.inv.process(v);
        let s = 1.0 / self.g as f64;
        v.iter_mut().for_each(|c| *c *= s);
    }

    /// Apply a real Fourier multiplier.
    pub fn multiply(&self, v: &[C64], symbol: &[f64]) -> Vec<C64> {
        let mut w = v.to_vec();
        self.forward(&mut w);
        w.iter_mut().zip(symbol).for_each(|(c, s)| *c *= s);
        self.inverse(&mut w);
        w
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EvolveOptions {
    pub integrator: Integrator,
    pub kinetic: Kinetic,
    /// Keep every n-th step in the trajectory.
    pub record_every: usize,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self { integrator: Integrator::Yoshida4, kinetic: Kinetic::Spectral, record_every: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyReport {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub h1: f64,
    pub h2: f64,
    pub linf: f64,
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub frames: Vec<Wave1D>,
    pub reports: Vec<EnergyReport>,
    pub kinetic: Kinetic,
}

/// Propagator for one trajectory (owns its FFT plans).
#[derive(Debug, Clone)]
pub struct SplitStep {
    spectral: Spectral,
    symbol: Vec<f64>,
    pub b: f64,
    pub integrator: Integrator,
}

const YOSHIDA_W1: f64 = 1.351_207_191_959_657_6; // 1/(2 - 2^{1/3})
const YOSHIDA_W0: f64 = -1.702_414_383_919_315_3; // -2^{1/3} w1

impl SplitStep {
    pub fn new(half_width: f64, g: usize, b: f64, integrator: Integrator, kinetic: Kinetic) -> Self {
        Self { spectral: Spectral::new(g), symbol: kinetic_symbol(kinetic, half_width, g), b, integrator }
    }

    fn kinetic(&self, psi: &mut [C64], tau: f64) {
        self.spectral.forward(psi);
        psi.iter_mut().zip(&self.symbol).for_each(|(c, s)| *c *= C64::from_polar(1.0, -s * tau));
        self.spectral.inverse(psi);
    }

    fn strang(&self, psi: &mut [C64], pot: &Potential1D, t: f64, tau: f64) {
        self.kinetic(psi, 0.5 * tau);
        let v = pot.at(t + 0.5 * tau);
        for (c, vj) in psi.iter_mut().zip(&v) {
            let phase = (vj + self.b * c.norm_sqr()) * tau;
            *c *= C64::from_polar(1.0, -phase);
        }
        self.kinetic(psi, 0.5 * tau);
    }

    /// Advance one step of size `dt` from time `t`.
    pub fn step(&self, psi: &mut [C64], pot: &Potential1D, t: f64, dt: f64) {
        match self.integrator {
            Integrator::Strang => self.strang(psi, pot, t, dt),
            Integrator::Yoshida4 => {
                let (a, b) = (YOSHIDA_W1 * dt, YOSHIDA_W0 * dt);
                self.strang(psi, pot, t, a);
                self.strang(psi, pot, t + a, b);
                self.strang(psi, pot, t + a + b, a);
            }
        }
    }
}

/// Largest admissible step, Δx²/π.
pub fn max_step(dx: f64) -> f64 {
    dx * dx / PI
}

/// Evolve from `phi0` over `[0, t_end]` with `round(t_end/dt)` steps.
pub fn evolve(phi0: &Wave1D, pot: &Potential1D, b: f64, dt: f64, t_end: f64, opts: EvolveOptions) -> Result<Trajectory> {
    if b < 0.0 {
        return Err(invalid("focusing coupling (b < 0) is not supported"));
    }
    let bound = max_step(phi0.dx());
    if !(dt > 0.0) || dt > bound {
        return Err(Error::StepTooLarge { dt, bound });
    }
    if pot.static_part.len() != phi0.len() {
        return Err(invalid("potential and wavefunction grids differ"));
    }
    let steps = (t_end / dt).round() as usize;
    let prop = SplitStep::new(phi0.half_width, phi0.len(), b, opts.integrator, opts.kinetic);
    let every = opts.record_every.max(1);
    let mut psi = phi0.psi.clone();
    let mut traj = Trajectory { times: vec![0.0], frames: vec![phi0.clone()], reports: Vec::new(), kinetic: opts.kinetic };
    traj.reports.push(report(phi0, pot, b, 0.0, opts.kinetic));
    for n in 0..steps {
        let t = n as f64 * dt;
        prop.step(&mut psi, pot, t, dt);
        if psi.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::NonFinite { step: n + 1 });
        }
        if (n + 1) % every == 0 || n + 1 == steps {
            let t1 = (n + 1) as f64 * dt;
            let w = Wave1D { half_width: phi0.half_width, psi: psi.clone() };
            traj.reports.push(report(&w, pot, b, t1, opts.kinetic));
            traj.times.push(t1);
            traj.frames.push(w);
        }
    }
    Ok(traj)
}

fn report(w: &Wave1D, pot: &Potential1D, b: f64, t: f64, kinetic: Kinetic) -> EnergyReport {
    let s = sobolev_check(w);
    EnergyReport { t, mass: w.mass(), energy: energy(w, pot, b, t, kinetic), h1: s.h1_sq, h2: s.h2_sq, linf: s.linf_sq }
}

/// E^Φ(t) = ⟨Φ, (-∂² + V(t) + (b/2)|Φ|²) Φ⟩.
pub fn energy(w: &Wave1D, pot: &Potential1D, b: f64, t: f64, kinetic: Kinetic) -> f64 {
    let dx = w.dx();
    let symbol = kinetic_symbol(kinetic, w.half_width, w.len());
    let sp = Spectral::new(w.len());
    let mut hat = w.psi.clone();
    sp.forward(&mut hat);
    let kin: f64 = hat.iter().zip(&symbol).map(|(c, s)| s * c.norm_sqr()).sum::<f64>() / w.len() as f64;
    let v = pot.at(t);
    let rest: f64 = w.psi.iter().zip(&v).map(|(c, vj)| {
        let r = c.norm_sqr();
        vj * r + 0.5 * b * r * r
    }).sum();
    dx * (kin + rest)
}

/// ⟨Φ, ∂ₜV(t) Φ⟩.
pub fn potential_rate(w: &Wave1D, pot: &Potential1D, t: f64) -> f64 {
    let d = pot.dot(t);
    w.dx() * w.psi.iter().zip(&d).map(|(c, v)| v * c.norm_sqr()).sum::<f64>()
}

/// Largest |ΔE/Δt - ⟨Φ, V̇Φ⟩| over interior frames by centred differences.
pub fn energy_drift_check(traj: &Trajectory, pot: &Potential1D, b: f64) -> Result<f64> {
    let n = traj.frames.len();
    if n < 3 {
        return Err(Error::TrajectoryTooShort(n));
    }
    let e: Vec<f64> = traj.frames.iter().zip(&traj.times).map(|(w, &t)| energy(w, pot, b, t, traj.kinetic)).collect();
    let mut worst: f64 = 0.0;
    for i in 1..n - 1 {
        let de = (e[i + 1] - e[i - 1]) / (traj.times[i + 1] - traj.times[i - 1]);
        worst = worst.max((de - potential_rate(&traj.frames[i], pot, traj.times[i])).abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SobolevReport {
    pub linf_sq: f64,
    pub h1_sq: f64,
    pub h2_sq: f64,
    /// ‖∂ₓ|Φ|²‖.
    pub grad_density: f64,
    /// ‖Φ‖²_∞ ≤ ‖Φ‖²_{H¹} ≤ ‖Φ‖²_{H²}.
    pub chain_ok: bool,
    /// ‖∂ₓ|Φ|²‖ ≤ 2‖Φ‖_∞‖Φ‖_{H¹}.
    pub product_ok: bool,
}

const SOBOLEV_SLACK: f64 = 1e-10;

/// Discrete norms with spectral multipliers (1+k²) and (1+k²)².
pub fn sobolev_check(w: &Wave1D) -> SobolevReport {
    let g = w.len();
    let k = wavenumbers(w.half_width, g);
    let sp = Spectral::new(g);
    let mut hat = w.psi.clone();
    sp.forward(&mut hat);
    let scale = w.dx() / g as f64;
    let h1_sq = hat.iter().zip(&k).map(|(c, k)| (1.0 + k * k) * c.norm_sqr()).sum::<f64>() * scale;
    let h2_sq = hat.iter().zip(&k).map(|(c, k)| (1.0 + k * k).powi(2) * c.norm_sqr()).sum::<f64>() * scale;
    let linf_sq = w.psi.iter().map(|c| c.norm_sqr()).fold(0.0, f64::max);
    let rho: Vec<C64> = w.psi.iter().map(|c| C64::new(c.norm_sqr(), 0.0)).collect();
    let ik: Vec<C64> = k.iter().map(|&k| C64::new(0.0, k)).collect();
    let mut rh = rho;
    sp.forward(&mut rh);
    rh.iter_mut().zip(&ik).for_each(|(c, m)| *c *= m);
    let grad_density = (rh.iter().map(|c| c.norm_sqr()).sum::<f64>() * scale).sqrt();
    let tol = SOBOLEV_SLACK * h2_sq.max(1.0);
    SobolevReport {
        linf_sq,
        h1_sq,
        h2_sq,
        grad_density,
        chain_ok: linf_sq <= h1_sq + tol && h1_sq <= h2_sq + tol,
        product_ok: grad_density <= 2.0 * linf_sq.sqrt() * h1_sq.sqrt() + tol,
    }
}

#[derive(Debug, Clone)]
pub struct GroundState {
    pub wave: Wave1D,
    pub energy: f64,
    /// Chemical potential ⟨Φ, HΦ⟩.
    pub mu: f64,
    pub residual: f64,
    pub iterations: usize,
}

pub const GROUND_STATE_MAX_ITER: usize = 200_000;

/// Normalised minimiser of the energy by preconditioned normalised gradient
/// flow (imaginary time with renormalisation), stopped when
/// ‖HΦ - ⟨Φ,HΦ⟩Φ‖ < tol. `seed` defaults to the linear ground state.
pub fn ground_state(
    static_v: &[f64],
    b: f64,
    half_width: f64,
    kinetic: Kinetic,
    tol: f64,
    seed: Option<&Wave1D>,
) -> Result<GroundState> {
    if b < 0.0 {
        return Err(invalid("focusing coupling (b < 0) is not supported"));
    }
    let g = static_v.len();
    let start = match seed {
        Some(s) => s.clone(),
        None if b == 0.0 => Wave1D::new(half_width, vec![C64::new(1.0, 0.0); g])?,
        None => ground_state(static_v, 0.0, half_width, kinetic, tol, None)?.wave,
    };
    let symbol = kinetic_symbol(kinetic, half_width, g);
    let sp = Spectral::new(g);
    let vmin = static_v.iter().copied().fold(f64::INFINITY, f64::min);
    let vmax = static_v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let alpha = 1.0 + (vmax - vmin);
    let pre: Vec<f64> = symbol.iter().map(|s| 1.0 / (alpha + s)).collect();
    let pot = Potential1D::stationary(static_v.to_vec());
    let mut w = start;
    w.normalize();
    let apply_h = |w: &Wave1D| -> Vec<C64> {
        let t = sp.multiply(&w.psi, &symbol);
        t.iter().zip(&w.psi).zip(static_v).map(|((tc, c), v)| tc + c * (v + b * c.norm_sqr())).collect()
    };
    let mut tau = 1.0;
    let mut e = energy(&w, &pot, b, 0.0, kinetic);
    for it in 0..GROUND_STATE_MAX_ITER {
        let h = apply_h(&w);
        let lam = w.dx() * w.psi.iter().zip(&h).map(|(c, hc)| (c.conj() * hc).re).sum::<f64>();
        let r: Vec<C64> = h.iter().zip(&w.psi).map(|(hc, c)| hc - c * lam).collect();
        let res = (w.dx() * r.iter().map(|c| c.norm_sqr()).sum::<f64>()).sqrt();
        if res < tol {
            return Ok(GroundState { energy: e, mu: lam, residual: res, iterations: it, wave: w });
        }
        let pr = sp.multiply(&r, &pre);
        // backtracking on the energy
        loop {
            let mut trial = Wave1D { half_width, psi: w.psi.iter().zip(&pr).map(|(c, p)| c - p * tau).collect() };
            trial.normalize();
            let et = energy(&trial, &pot, b, 0.0, kinetic);
            if et <= e + 1e-15 * e.abs().max(1.0) || tau < 1e-6 {
                w = trial;
                e = et;
                tau = (tau * 1.25).min(1.0);
                break;
            }
            tau *= 0.5;
        }
    }
    Err(Error::NoConvergence(format!("ground state not reached in {GROUND_STATE_MAX_ITER} iterations")))
}
