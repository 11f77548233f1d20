//! Scaling regimes and the pair interaction: the interaction range μ, the
//! admissible / moderate / strong classification of finite sequences, the
//! scaled potential and its Taylor decomposition along a curved guide, the
//! one-dimensional effective kernel, the mean-field convolution defect and
//! the coupling constant `b`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{embed, FrameField, TwistSpec, Vec3};
use crate::linalg::{gauss_legendre, halton, loglog_slope, HALTON_BASES};
use crate::transverse::{Shape, TransverseModes};

/// One point `(N, ε, β)` of a scaling sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    pub n: f64,
    pub eps: f64,
    pub beta: f64,
}

impl ScalingPoint {
    pub fn new(n: f64, eps: f64, beta: f64) -> Result<Self> {
        if !(n >= 1.0) || !n.is_finite() {
            return Err(invalid(format!("particle number must be at least 1, got {n}")));
        }
        if !(eps > 0.0 && eps <= 1.0) {
            return Err(invalid(format!("width must lie in (0, 1], got {eps}")));
        }
        if !(beta > 0.0 && beta < 1.0 / 3.0) {
            return Err(invalid(format!("beta must lie in (0, 1/3), got {beta}")));
        }
        Ok(Self { n, eps, beta })
    }

    /// a = ε²/N.
    pub fn a(&self) -> f64 {
        self.eps * self.eps / self.n
    }

    /// μ = a^β.
    pub fn mu(&self) -> f64 {
        self.a().powf(self.beta)
    }
}

/// Confinement regime selecting the coupling constant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Moderate,
    Strong,
}

/// Trend of a ratio sequence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trend {
    pub values: Vec<f64>,
    /// Fitted exponent of the ratio against N.
    pub slope: f64,
    pub tail_decreasing: bool,
    pub vanishing: bool,
}

/// Exponents flatter than this are treated as "not tending to zero".
pub const TREND_SLOPE: f64 = -0.01;

fn trend(values: Vec<f64>, n: &[f64]) -> Trend {
    let start = values.len() / 2;
    let tail_decreasing = values[start..].windows(2).all(|w| w[1] < w[0]);
    let slope = loglog_slope(n, &values);
    Trend { vanishing: tail_decreasing && slope < TREND_SLOPE, values, slope, tail_decreasing }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub admissible: bool,
    pub moderate: bool,
    pub strong: bool,
    /// ε^{4/3}/μ.
    pub admissibility_ratio: Trend,
    /// μ/ε.
    pub moderate_ratio: Trend,
    /// ε/μ.
    pub strong_ratio: Trend,
    /// ε itself must shrink.
    pub width: Trend,
}

impl Classification {
    pub fn label(&self) -> &'static str {
        match (self.admissible, self.moderate, self.strong) {
            (true, true, _) => "admissible+moderate",
            (true, _, true) => "admissible+strong",
            (true, _, _) => "admissible",
            _ => "neither",
        }
    }
}

/// Decide the regime of a finite sequence by a computable proxy for its
/// limits: a ratio "tends to zero" when it is strictly decreasing over the
/// tail half and its fitted exponent against N is below [`TREND_SLOPE`].
pub fn classify_sequence(points: &[ScalingPoint]) -> Result<Classification> {
    if points.len() < 4 {
        return Err(invalid("classification needs at least 4 sequence points"));
    }
    for w in points.windows(2) {
        if !(w[1].n > w[0].n) {
            return Err(Error::NonMonotone(format!("N must increase, got {} then {}", w[0].n, w[1].n)));
        }
        if w[1].eps > w[0].eps {
            return Err(Error::NonMonotone(format!("width must not increase, got {} then {}", w[0].eps, w[1].eps)));
        }
    }
    let n: Vec<f64> = points.iter().map(|p| p.n).collect();
    let adm = trend(points.iter().map(|p| p.eps.powf(4.0 / 3.0) / p.mu()).collect(), &n);
    let mo = trend(points.iter().map(|p| p.mu() / p.eps).collect(), &n);
    let st = trend(points.iter().map(|p| p.eps / p.mu()).collect(), &n);
    let width = trend(points.iter().map(|p| p.eps).collect(), &n);
    let admissible = adm.vanishing && width.vanishing;
    Ok(Classification {
        admissible,
        moderate: admissible && mo.vanishing,
        strong: admissible && st.vanishing,
        admissibility_ratio: adm,
        moderate_ratio: mo,
        strong_ratio: st,
        width,
    })
}

/// Sequence `N_n = n`, `ε_n = n^{-alpha}` for geometrically spaced n.
pub fn power_law_sequence(alpha: f64, beta: f64, n_values: &[f64]) -> Result<Vec<ScalingPoint>> {
    n_values.iter().map(|&n| ScalingPoint::new(n, n.powf(-alpha), beta)).collect()
}

/// Radial pair potential `w(r) = A (1 - |r|²)³` on the unit ball.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairPotential {
    pub amplitude: f64,
}

impl Default for PairPotential {
    fn default() -> Self {
        Self::unit_mass()
    }
}

impl PairPotential {
    /// ∫ (1-|r|²)³ d³r = 64π/315.
    pub const SHAPE_MASS: f64 = 64.0 * PI / 315.0;
    /// ∫ |r| (1-|r|²)³ d³r = π/10.
    pub const SHAPE_MOMENT: f64 = PI / 10.0;

    pub fn new(amplitude: f64) -> Result<Self> {
        if !(amplitude >= 0.0) || !amplitude.is_finite() {
            return Err(invalid("pair potential must be non-negative"));
        }
        Ok(Self { amplitude })
    }

    pub fn unit_mass() -> Self {
        Self { amplitude: 1.0 / Self::SHAPE_MASS }
    }

    /// w̃(s).
    pub fn profile(&self, s: f64) -> f64 {
        if s < 1.0 {
            self.amplitude * (1.0 - s).powi(3)
        } else {
            0.0
        }
    }

    /// w̃'(s).
    pub fn profile_prime(&self, s: f64) -> f64 {
        if s < 1.0 {
            -3.0 * self.amplitude * (1.0 - s).powi(2)
        } else {
            0.0
        }
    }

    pub fn eval(&self, r: &Vec3) -> f64 {
        self.profile(r.norm_squared())
    }

    /// ‖w‖₁.
    pub fn mass(&self) -> f64 {
        self.amplitude * Self::SHAPE_MASS
    }

    /// ∫|r| w(r) d³r.
    pub fn first_moment(&self) -> f64 {
        self.amplitude * Self::SHAPE_MOMENT
    }

    /// x-marginal ∫∫ w(x, y, z) dy dz = πA(1-x²)⁴/4.
    pub fn marginal_x(&self, x: f64) -> f64 {
        if x.abs() < 1.0 {
            0.25 * PI * self.amplitude * (1.0 - x * x).powi(4)
        } else {
            0.0
        }
    }

    /// Radial Fourier transform ŵ(q) = ∫ w(r) e^{-i q·r} d³r.
    pub fn fourier(&self, q: f64) -> f64 {
        static NODES: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
        let (x, wt) = NODES.get_or_init(|| gauss_legendre(128));
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(wt) {
            let r = 0.5 * (xi + 1.0);
            let qr = q * r;
            let sinc = if qr.abs() < 1e-8 { 1.0 - qr * qr / 6.0 } else { qr.sin() / qr };
            s += wi * r * r * self.profile(r * r) * sinc;
        }
        4.0 * PI * 0.5 * s
    }
}

/// The scaled interaction w^{ε,β,N} along the embedded guide.
pub struct ScaledPair<'a> {
    pub w: PairPotential,
    pub sp: ScalingPoint,
    pub frame: &'a FrameField,
    pub twist: &'a TwistSpec,
}

impl ScaledPair<'_> {
    /// (N-1)(a/μ³) w((f_ε(r₁) - f_ε(r₂))/μ) for r = (x, y).
    pub fn eval(&self, r1: (f64, [f64; 2]), r2: (f64, [f64; 2])) -> Result<f64> {
        let mu = self.sp.mu();
        let f1 = embed(r1.0, r1.1, self.sp.eps, self.frame, self.twist)?;
        let f2 = embed(r2.0, r2.1, self.sp.eps, self.frame, self.twist)?;
        Ok((self.sp.n - 1.0) * self.sp.a() / mu.powi(3) * self.w.eval(&((f1 - f2) / mu)))
    }
}

/// One pointwise evaluation of the Taylor decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TaylorTerms {
    /// (ε²/μ³) w(Δf/μ) = N/(N-1) · w^{ε,β,N}.
    pub exact: f64,
    pub w0: f64,
    pub t1: f64,
    pub t2: f64,
    /// R = (‖Δf‖² - ‖Δr^ε‖²)/μ².
    pub r: f64,
}

pub fn taylor_terms(
    w: &PairPotential,
    eps: f64,
    mu: f64,
    frame: &FrameField,
    twist: &TwistSpec,
    r1: (f64, [f64; 2]),
    r2: (f64, [f64; 2]),
) -> Result<TaylorTerms> {
    let f1 = embed(r1.0, r1.1, eps, frame, twist)?;
    let f2 = embed(r2.0, r2.1, eps, frame, twist)?;
    let df2 = (f2 - f1).norm_squared();
    let d = Vec3::new(r2.0 - r1.0, eps * r2.1[0] - eps * r1.1[0], eps * r2.1[1] - eps * r1.1[1]);
    let dr2 = d.norm_squared();
    let pre = eps * eps / mu.powi(3);
    let r = (df2 - dr2) / (mu * mu);
    let exact = pre * w.profile(df2 / (mu * mu));
    let w0 = pre * w.profile(dr2 / (mu * mu));
    let t1 = r * pre * w.profile_prime(dr2 / (mu * mu));
    Ok(TaylorTerms { exact, w0, t1, t2: exact - w0 - t1, r })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TaylorDecomposition {
    pub eps: f64,
    pub mu: f64,
    /// Sampled sup |R| over the interaction support.
    pub r_bar: f64,
    /// Sampled sup |T₂| · μ³/ε² divided by R̄².
    pub t2_ratio: f64,
    /// Largest |exact - (w⁰ + T₁ + T₂)|, zero up to round-off.
    pub sum_defect: f64,
    pub samples: usize,
    /// True when the guide is straight and untwisted (T₁ = T₂ = 0).
    pub degenerate: bool,
}

pub const TAYLOR_SAMPLES: usize = 10_000;

/// Centred cross-section sample from a point of the unit square.
fn shape_sample(shape: &Shape, u: [f64; 2]) -> Result<Option<[f64; 2]>> {
    Ok(match shape {
        Shape::Rectangle { width, height } => Some([(u[0] - 0.5) * width, (u[1] - 0.5) * height]),
        Shape::Disk { radius } => {
            let y = [(2.0 * u[0] - 1.0) * radius, (2.0 * u[1] - 1.0) * radius];
            (y[0] * y[0] + y[1] * y[1] < radius * radius).then_some(y)
        }
        Shape::Ellipse { a, b } => {
            let y = [(2.0 * u[0] - 1.0) * a, (2.0 * u[1] - 1.0) * b];
            ((y[0] / a).powi(2) + (y[1] / b).powi(2) < 1.0).then_some(y)
        }
        Shape::Mask { .. } => return Err(invalid("remainder sampling needs an analytic cross-section")),
    })
}

/// Sample the decomposition over a Halton cloud of pairs restricted to the
/// interaction support ‖f_ε(r₁) - f_ε(r₂)‖ < μ.
pub fn taylor_decompose(
    w: &PairPotential,
    eps: f64,
    mu: f64,
    frame: &FrameField,
    twist: &TwistSpec,
    shape: &Shape,
    samples: usize,
) -> Result<TaylorDecomposition> {
    if !(eps > 0.0 && mu > 0.0) {
        return Err(invalid("width and range must be positive"));
    }
    let (x0, x1) = (frame.x[0] + mu, *frame.x.last().unwrap() - mu);
    if x1 <= x0 {
        return Err(invalid("curve shorter than the interaction range"));
    }
    let mut r_bar: f64 = 0.0;
    let mut t2max: f64 = 0.0;
    let mut sum_defect: f64 = 0.0;
    let mut accepted = 0;
    let mut index = 0u64;
    let cap = 1000 * samples as u64;
    while accepted < samples && index < cap {
        index += 1;
        let h: Vec<f64> = HALTON_BASES[..6].iter().map(|&b| halton(index, b)).collect();
        let Some(y1) = shape_sample(shape, [h[2], h[3]])? else { continue };
        let v = [2.0 * h[4] - 1.0, 2.0 * h[5] - 1.0];
        if v[0] * v[0] + v[1] * v[1] >= 1.0 {
            continue;
        }
        let y2 = [y1[0] + mu / eps * v[0], y1[1] + mu / eps * v[1]];
        if !shape_contains_centred(shape, y2) {
            continue;
        }
        let xa = x0 + (x1 - x0) * h[0];
        let xb = xa + mu * (2.0 * h[1] - 1.0);
        let t = taylor_terms(w, eps, mu, frame, twist, (xa, y1), (xb, y2))?;
        let f1 = embed(xa, y1, eps, frame, twist)?;
        let f2 = embed(xb, y2, eps, frame, twist)?;
        if (f2 - f1).norm() >= mu {
            continue;
        }
        accepted += 1;
        r_bar = r_bar.max(t.r.abs());
        t2max = t2max.max(t.t2.abs() * mu.powi(3) / (eps * eps));
        sum_defect = sum_defect.max((t.exact - (t.w0 + t.t1 + t.t2)).abs());
    }
    if accepted < samples {
        return Err(Error::NoConvergence(format!(
            "only {accepted} of {samples} remainder samples fell inside the interaction support"
        )));
    }
    let degenerate = r_bar == 0.0;
    Ok(TaylorDecomposition {
        eps,
        mu,
        r_bar,
        t2_ratio: if degenerate { 0.0 } else { t2max / (r_bar * r_bar) },
        sum_defect,
        samples: accepted,
        degenerate,
    })
}

fn shape_contains_centred(shape: &Shape, y: [f64; 2]) -> bool {
    let (a, b) = (y[0], y[1]);
    match shape {
        Shape::Rectangle { width, height } => a.abs() < width / 2.0 && b.abs() < height / 2.0,
        Shape::Disk { radius } => a * a + b * b < radius * radius,
        Shape::Ellipse { a: ea, b: eb } => (a / ea).powi(2) + (b / eb).powi(2) < 1.0,
        Shape::Mask { .. } => false,
    }
}

/// Effective one-dimensional kernel sampled on `x = j μ / per_mu`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectiveKernel {
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    /// ∫ w̄⁰ dx.
    pub mass: f64,
}

/// Quadrature points per interaction range, in x and in the transverse
/// offset (which is sampled on the scale μ/ε).
pub const KERNEL_POINTS_PER_RANGE: usize = 8;

/// w̄⁰(x) = (ε²/μ³) ∫ d²d w(x/μ, εd/μ) C(d) with the transverse
/// autocorrelation C(d) = ∫ χ²(y) χ²(y - d) d²y. Tensor trapezoid rule with
/// `per_mu` points per range; refuses grids coarser than μ/4.
pub fn effective_kernel(modes: &TransverseModes, w: &PairPotential, eps: f64, mu: f64, per_mu: usize) -> Result<EffectiveKernel> {
    if per_mu < 4 {
        return Err(Error::Unresolved { spacing: mu / per_mu as f64, limit: mu / 4.0 });
    }
    let p = per_mu as isize;
    let hx = mu / per_mu as f64;
    let hd = mu / eps / per_mu as f64;
    let coords = modes.coords();
    let wgt = modes.weight();
    let chi2: Vec<f64> = modes.modes[0].iter().map(|c| c * c).collect();
    // autocorrelation on the offset grid, only inside the unit ball of u = εd/μ
    let mut offsets = Vec::new();
    for a in -p..=p {
        for b in -p..=p {
            if a * a + b * b < p * p {
                offsets.push((a, b));
            }
        }
    }
    let corr: Vec<f64> = {
        use rayon::prelude::*;
        offsets
            .par_iter()
            .map(|&(a, b)| {
                let d = [a as f64 * hd, b as f64 * hd];
                coords
                    .iter()
                    .zip(&chi2)
                    .map(|(y, c)| {
                        let v = modes.value_at(0, [y[0] - d[0], y[1] - d[1]]);
                        c * v * v
                    })
                    .sum::<f64>()
                    * wgt
            })
            .collect()
    };
    let pre = eps * eps / mu.powi(3);
    let mut x = Vec::new();
    let mut values = Vec::new();
    for j in -p..=p {
        let xv = j as f64 * hx;
        let mut s = 0.0;
        for (k, &(a, b)) in offsets.iter().enumerate() {
            let u = Vec3::new(xv / mu, a as f64 / per_mu as f64, b as f64 / per_mu as f64);
            s += w.eval(&u) * corr[k];
        }
        x.push(xv);
        values.push(pre * s * hd * hd);
    }
    let mass = values.iter().sum::<f64>() * hx;
    Ok(EffectiveKernel { x, values, mass })
}

/// b = ‖w‖₁ ∫|χ|⁴ for moderate confinement, 0 for strong.
pub fn b_coefficient(q4: f64, w: &PairPotential, regime: Regime) -> f64 {
    match regime {
        Regime::Moderate => q4 * w.mass(),
        Regime::Strong => 0.0,
    }
}

/// Real samples of a function on a periodic 3D box, index `(i·n₁ + j)·n₂ + k`.
#[derive(Debug, Clone, PartialEq)]
pub struct Field3 {
    pub lengths: [f64; 3],
    pub n: [usize; 3],
    pub values: Vec<f64>,
}

impl Field3 {
    pub fn from_fn(lengths: [f64; 3], n: [usize; 3], f: impl Fn([f64; 3]) -> f64) -> Self {
        let mut values = Vec::with_capacity(n[0] * n[1] * n[2]);
        for i in 0..n[0] {
            for j in 0..n[1] {
                for k in 0..n[2] {
                    let p = [
                        -lengths[0] / 2.0 + lengths[0] * i as f64 / n[0] as f64,
                        -lengths[1] / 2.0 + lengths[1] * j as f64 / n[1] as f64,
                        -lengths[2] / 2.0 + lengths[2] * k as f64 / n[2] as f64,
                    ];
                    values.push(f(p));
                }
            }
        }
        Self { lengths, n, values }
    }

    /// exp(-x²/(2σ_x²) - |y|²/(2σ_y²)) centred in the box.
    pub fn gaussian(lengths: [f64; 3], n: [usize; 3], sigma_x: f64, sigma_y: f64) -> Self {
        Self::from_fn(lengths, n, |p| {
            (-p[0] * p[0] / (2.0 * sigma_x * sigma_x) - (p[1] * p[1] + p[2] * p[2]) / (2.0 * sigma_y * sigma_y)).exp()
        })
    }

    fn spectrum(&self) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = self.values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        fft3(&mut data, self.n, false);
        data
    }

    fn wavenumbers(&self, axis: usize) -> Vec<f64> {
        let n = self.n[axis];
        (0..n)
            .map(|i| {
                let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                2.0 * PI * m / self.lengths[axis]
            })
            .collect()
    }
}

pub(crate) fn fft3(data: &mut [Complex64], n: [usize; 3], inverse: bool) {
    let mut planner = FftPlanner::new();
    let strides = [n[1] * n[2], n[2], 1];
    for axis in 0..3 {
        let len = n[axis];
        let fft = if inverse { planner.plan_fft_inverse(len) } else { planner.plan_fft_forward(len) };
        let mut line = vec![Complex64::new(0.0, 0.0); len];
        let total = n[0] * n[1] * n[2];
        for start in 0..total {
            // visit each line once, from the element whose axis index is 0
            let idx = (start / strides[axis]) % len;
            if idx != 0 {
                continue;
            }
            for (t, v) in line.iter_mut().enumerate() {
                *v = data[start + t * strides[axis]];
            }
            fft.process(&mut line);
            for (t, v) in line.iter().enumerate() {
                data[start + t * strides[axis]] = *v;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvolutionDefect {
    pub ratio_mu_eps: f64,
    /// ‖K*f - ‖w‖₁ f‖.
    pub defect: f64,
    pub grad_norm: f64,
    /// defect / ‖∇f‖, or the absolute defect when ∇f vanishes.
    pub ratio: f64,
}

/// Relative spectral weight allowed in the outer quarter of wavenumbers.
const SPECTRAL_TAIL: f64 = 1e-12;

/// ‖(ε²/μ³) ∫ f(· - z) w(μ⁻¹(x, εy)) dz - f ‖w‖₁‖ / ‖∇f‖ on a periodic box,
/// evaluated spectrally: the kernel acts as the multiplier ŵ(|(μk_x, μk_y/ε)|).
pub fn convolution_defect(f: &Field3, w: &PairPotential, eps: f64, mu: f64) -> Result<ConvolutionDefect> {
    let spec = f.spectrum();
    let kx = f.wavenumbers(0);
    let ky = f.wavenumbers(1);
    let kz = f.wavenumbers(2);
    let n = f.n;
    let total: f64 = spec.iter().map(|c| c.norm_sqr()).sum();
    let mut tail = 0.0;
    let mut num = 0.0;
    let mut grad = 0.0;
    let w0 = w.fourier(0.0);
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let c = spec[(i * n[1] + j) * n[2] + k].norm_sqr();
                let outer = [(i, n[0]), (j, n[1]), (k, n[2])]
                    .iter()
                    .any(|&(t, m)| t.min(m - t) > m * 3 / 8);
                if outer {
                    tail += c;
                }
                let q = ((mu * kx[i]).powi(2) + (mu / eps).powi(2) * (ky[j] * ky[j] + kz[k] * kz[k])).sqrt();
                let m = w.fourier(q) - w0;
                num += m * m * c;
                grad += (kx[i] * kx[i] + ky[j] * ky[j] + kz[k] * kz[k]) * c;
            }
        }
    }
    if tail > SPECTRAL_TAIL * total {
        return Err(Error::Unresolved { spacing: f.lengths[0] / n[0] as f64, limit: f64::NAN });
    }
    // Parseval: ‖g‖² = (V / M) Σ|ĝ|² / M with V the volume, M the point count
    let m = (n[0] * n[1] * n[2]) as f64;
    let vol = f.lengths[0] * f.lengths[1] * f.lengths[2];
    let scale = vol / (m * m);
    let defect = (num * scale).sqrt();
    let grad_norm = (grad * scale).sqrt();
    let ratio = if grad_norm <= 1e-14 * (total * scale).sqrt() { defect } else { defect / grad_norm };
    Ok(ConvolutionDefect { ratio_mu_eps: mu / eps, defect, grad_norm, ratio })
}

/// The convolution K*f at the box points, by the same multiplier (used to
/// cross-check against direct quadrature).
pub fn convolve(f: &Field3, w: &PairPotential, eps: f64, mu: f64) -> Vec<f64> {
    let mut spec = f.spectrum();
    let kx = f.wavenumbers(0);
    let ky = f.wavenumbers(1);
    let kz = f.wavenumbers(2);
    let n = f.n;
    for i in 0..n[0] {
        for j in 0..n[1] {
            for k in 0..n[2] {
                let q = ((mu * kx[i]).powi(2) + (mu / eps).powi(2) * (ky[j] * ky[j] + kz[k] * kz[k])).sqrt();
                spec[(i * n[1] + j) * n[2] + k] *= w.fourier(q);
            }
        }
    }
    fft3(&mut spec, n, true);
    let m = (n[0] * n[1] * n[2]) as f64;
    spec.iter().map(|c| c.re / m).collect()
}

/// Check the ξ cap min{3β/(4-6β), (2-6β)/(2-3β)} used in the convergence
/// argument.
pub fn xi_cap(beta: f64) -> f64 {
    (3.0 * beta / (4.0 - 6.0 * beta)).min((2.0 - 6.0 * beta) / (2.0 - 3.0 * beta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{bishop_frame, reparameterize_arclength, CurveSpec, FrameOptions};
    use crate::transverse::{dirichlet_modes, CrossSection};

    #[test]
    fn scaling_point_values() {
        let p = ScalingPoint::new(100.0, 0.1, 0.25).unwrap();
        assert!((p.a() - 1e-4).abs() < 1e-18);
        assert!((p.mu() - 0.1).abs() < 1e-15);
        assert!((p.mu().powf(1.0 / p.beta) - p.a()).abs() < 1e-16);
        let q = ScalingPoint::new(1.0, 1.0, 0.2).unwrap();
        assert_eq!((q.a(), q.mu()), (1.0, 1.0));
        assert!(ScalingPoint::new(10.0, 0.5, 1.0 / 3.0).is_err());
        assert!(ScalingPoint::new(10.0, 0.5, 0.0).is_err());
        let tiny = ScalingPoint::new(50.0, 0.3, 1e-9).unwrap();
        assert!((tiny.mu() - 1.0).abs() < 1e-7);
    }

    fn geometric(lo: f64, hi: f64, k: usize) -> Vec<f64> {
        (0..k).map(|i| lo * (hi / lo).powf(i as f64 / (k - 1) as f64)).collect()
    }

    #[test]
    fn classifier_examples() {
        let n = geometric(4.0, 64.0, 5);
        let moderate = classify_sequence(&power_law_sequence(0.4, 0.25, &n).unwrap()).unwrap();
        assert!(moderate.admissible && moderate.moderate && !moderate.strong);
        assert!((moderate.moderate_ratio.slope + 0.05).abs() < 1e-12);
        assert!((moderate.admissibility_ratio.slope + 1.0 / 12.0).abs() < 1e-12);
        let strong = classify_sequence(&power_law_sequence(1.0, 0.25, &n).unwrap()).unwrap();
        assert!(strong.admissible && strong.strong && !strong.moderate);
        let flat: Vec<ScalingPoint> = n.iter().map(|&v| ScalingPoint::new(v, 0.5, 0.25).unwrap()).collect();
        let c = classify_sequence(&flat).unwrap();
        assert!(!c.admissible && c.label() == "neither");
        let bad = [flat[1], flat[0], flat[2], flat[3]];
        assert!(matches!(classify_sequence(&bad), Err(Error::NonMonotone(_))));
    }

    #[test]
    fn pair_potential_closed_forms() {
        let w = PairPotential::unit_mass();
        assert!((w.mass() - 1.0).abs() < 1e-15);
        assert!((w.fourier(0.0) - 1.0).abs() < 1e-13);
        // independent radial quadrature of the mass and first moment
        let m = 200_000;
        let (mut mass, mut mom) = (0.0, 0.0);
        for i in 0..m {
            let r = (i as f64 + 0.5) / m as f64;
            let v = 4.0 * PI * r * r * (1.0 - r * r).powi(3) / m as f64;
            mass += v;
            mom += v * r;
        }
        assert!((mass - PairPotential::SHAPE_MASS).abs() < 1e-10);
        assert!((mom - PairPotential::SHAPE_MOMENT).abs() < 1e-10);
        let grid: f64 = (0..m).map(|i| w.marginal_x(-1.0 + 2.0 * (i as f64 + 0.5) / m as f64)).sum::<f64>() * 2.0 / m as f64;
        assert!((grid - 1.0).abs() < 1e-9);
        for s in [0.0, 0.3, 0.99, 1.0, 1.5] {
            assert!(w.profile(s) >= 0.0);
        }
        assert_eq!(w.profile(1.0), 0.0);
        let d = 1e-6;
        assert!(((w.profile(0.4 + d) - w.profile(0.4 - d)) / (2.0 * d) - w.profile_prime(0.4)).abs() < 1e-6);
    }

    fn frame(spec: CurveSpec) -> FrameField {
        let c = reparameterize_arclength(&spec, 1e-9).unwrap();
        bishop_frame(&c, FrameOptions::default()).unwrap()
    }

    #[test]
    fn scaled_pair_properties() {
        let f = frame(CurveSpec::line(-2.0, 2.0));
        let sp = ScalingPoint::new(100.0, 0.1, 0.25).unwrap();
        let pair = ScaledPair { w: PairPotential::unit_mass(), sp, frame: &f, twist: &TwistSpec::None };
        let mu = sp.mu();
        let at0 = pair.eval((0.0, [0.1, 0.2]), (0.0, [0.1, 0.2])).unwrap();
        assert!((at0 - 99.0 * sp.a() / mu.powi(3) * pair.w.amplitude).abs() < 1e-12);
        assert_eq!(pair.eval((0.0, [0.0, 0.0]), (mu * 1.01, [0.0, 0.0])).unwrap(), 0.0);
        let a = pair.eval((0.01, [0.2, -0.1]), (0.05, [0.3, 0.2])).unwrap();
        let b = pair.eval((0.05, [0.3, 0.2]), (0.01, [0.2, -0.1])).unwrap();
        assert_eq!(a, b);
        // integral over r₂ at an interior r₁: (N-1) a ‖w‖₁ / ε²
        let r = mu / sp.eps;
        let steps = 40;
        let (hx, hy) = (2.0 * mu / steps as f64, 2.0 * r / steps as f64);
        let mut s = 0.0;
        for i in 0..steps {
            for j in 0..steps {
                for k in 0..steps {
                    let x = -mu + hx * (i as f64 + 0.5);
                    let y = [-r + hy * (j as f64 + 0.5), -r + hy * (k as f64 + 0.5)];
                    s += pair.eval((0.0, [0.0, 0.0]), (x, y)).unwrap();
                }
            }
        }
        s *= hx * hy * hy;
        let expected = 99.0 * sp.a() / (sp.eps * sp.eps);
        assert!((s - expected).abs() / expected < 1e-3, "{s} vs {expected}");
    }

    #[test]
    fn taylor_straight_guide_degenerates() {
        let f = frame(CurveSpec::line(0.0, 3.0));
        let t = taylor_decompose(&PairPotential::unit_mass(), 0.1, 0.05, &f, &TwistSpec::None, &Shape::Disk { radius: 1.0 }, 2000).unwrap();
        assert!(t.degenerate && t.r_bar == 0.0);
    }

    #[test]
    fn taylor_on_circle_is_consistent() {
        let f = frame(CurveSpec::circle(2.0));
        let w = PairPotential::unit_mass();
        let shape = Shape::Disk { radius: 1.0 };
        let t = taylor_decompose(&w, 0.1, 0.05, &f, &TwistSpec::None, &shape, 2000).unwrap();
        assert!(t.r_bar > 0.0 && t.r_bar < 1.0);
        assert!(t.sum_defect < 1e-10);
        // T₂ is second order in R
        assert!(t.t2_ratio < 10.0);
    }

    #[test]
    fn kernel_mass_and_symmetry() {
        let modes = dirichlet_modes(&CrossSection::rectangle(PI, PI, 48), 1).unwrap();
        let w = PairPotential::unit_mass();
        let b = b_coefficient(modes.chi_quartic(), &w, Regime::Moderate);
        let k = effective_kernel(&modes, &w, 0.5, 0.05, 8).unwrap();
        let n = k.values.len();
        for j in 0..n {
            assert!(k.values[j] >= 0.0);
            assert!((k.values[j] - k.values[n - 1 - j]).abs() < 1e-12 * k.values[n / 2]);
        }
        assert!((k.mass - b).abs() / b < 5e-2);
        assert!(effective_kernel(&modes, &w, 0.5, 0.05, 3).is_err());
        assert_eq!(b_coefficient(0.3, &w, Regime::Strong), 0.0);
        let w2 = PairPotential::new(2.0 * w.amplitude).unwrap();
        assert!((b_coefficient(0.3, &w2, Regime::Moderate) - 0.6).abs() < 1e-14);
    }

    #[test]
    fn convolution_matches_direct_quadrature() {
        let (eps, mu) = (0.5, 0.4);
        let f = Field3::gaussian([12.0, 12.0, 12.0], [32, 32, 32], 1.0, 1.0);
        let w = PairPotential::unit_mass();
        let conv = convolve(&f, &w, eps, mu);
        // value at the box centre by midpoint quadrature over the support
        let centre = (16 * 32 + 16) * 32 + 16;
        let m = 48;
        let (hx, hy) = (2.0 * mu / m as f64, 2.0 * mu / eps / m as f64);
        let mut direct = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let x = -mu + hx * (i as f64 + 0.5);
                    let y = -mu / eps + hy * (j as f64 + 0.5);
                    let z = -mu / eps + hy * (k as f64 + 0.5);
                    let kern = eps * eps / mu.powi(3) * w.eval(&Vec3::new(x / mu, eps * y / mu, eps * z / mu));
                    direct += kern * (-(x * x + y * y + z * z) / 2.0).exp();
                }
            }
        }
        direct *= hx * hy * hy;
        assert!((conv[centre] - direct).abs() < 1e-4, "{} vs {direct}", conv[centre]);
    }

    #[test]
    fn convolution_defect_of_constant_is_zero() {
        let f = Field3::from_fn([10.0; 3], [8, 8, 8], |_| 1.0);
        let d = convolution_defect(&f, &PairPotential::unit_mass(), 0.5, 0.1).unwrap();
        assert!(d.defect < 1e-12 && d.ratio < 1e-12);
    }

    #[test]
    fn convolution_defect_refuses_unresolved_fields() {
        let f = Field3::gaussian([12.0; 3], [16, 16, 16], 0.2, 0.2);
        assert!(matches!(
            convolution_defect(&f, &PairPotential::unit_mass(), 0.5, 0.1),
            Err(Error::Unresolved { .. })
        ));
    }

    #[test]
    fn xi_cap_value() {
        assert!((xi_cap(0.25) - (0.75f64 / 2.5).min(0.5 / 1.25)).abs() < 1e-15);
    }
}
