//! Waveguide centre curves, parallel (Bishop) frames, the embedding of the
//! scaled tube and the geometric potentials generated by bending and
//! twisting.
//!
//! Curves are always evaluated in arc length `x`. A [`CurveSpec`] describes
//! a raw parametrisation; [`reparameterize_arclength`] turns it into an
//! [`ArcCurve`].

use nalgebra::{Matrix2, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::gauss_legendre;

pub type Vec3 = Vector3<f64>;

pub const DEFAULT_NODES: usize = 1024;

/// Raw centre-curve description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CurveKind {
    /// `(t, 0, 0)`.
    Line,
    /// `(R cos t, R sin t, 0)`.
    Circle { radius: f64 },
    /// `(R cos t, R sin t, h t)`.
    Helix { radius: f64, pitch: f64 },
    /// `(t, A exp(-((t - t0)/w)^2), 0)`: a straight guide with a smooth bump.
    Bump { amplitude: f64, width: f64, center: f64 },
    /// Points joined by a natural cubic spline in chord-length parameter.
    /// The parameter interval of the spec is ignored; the spline runs over
    /// the full point list.
    Sampled { points: Vec<[f64; 3]> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSpec {
    #[serde(flatten)]
    pub kind: CurveKind,
    pub t_min: f64,
    pub t_max: f64,
}

impl CurveSpec {
    pub fn new(kind: CurveKind, t_min: f64, t_max: f64) -> Self {
        Self { kind, t_min, t_max }
    }

    pub fn line(t_min: f64, t_max: f64) -> Self {
        Self::new(CurveKind::Line, t_min, t_max)
    }

    /// Full circle of the given radius, `t` in `[0, 2π]`.
    pub fn circle(radius: f64) -> Self {
        Self::new(CurveKind::Circle { radius }, 0.0, 2.0 * std::f64::consts::PI)
    }

    pub fn helix(radius: f64, pitch: f64, turns: f64) -> Self {
        Self::new(
            CurveKind::Helix { radius, pitch },
            0.0,
            2.0 * std::f64::consts::PI * turns,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_max > self.t_min) || !self.t_min.is_finite() || !self.t_max.is_finite() {
            return Err(invalid(format!(
                "curve parameter interval [{}, {}] is empty",
                self.t_min, self.t_max
            )));
        }
        match &self.kind {
            CurveKind::Circle { radius } if !(*radius > 0.0) => {
                Err(invalid("circle radius must be positive"))
            }
            CurveKind::Helix { radius, pitch } if !(*radius >= 0.0) || !pitch.is_finite() => {
                Err(invalid("helix radius must be non-negative"))
            }
            CurveKind::Bump { width, .. } if !(*width > 0.0) => {
                Err(invalid("bump width must be positive"))
            }
            CurveKind::Sampled { points } if points.len() < 4 => {
                Err(invalid("a sampled curve needs at least 4 points"))
            }
            _ => Ok(()),
        }
    }
}

/// Natural cubic spline through vector-valued knots.
#[derive(Debug, Clone)]
struct Spline {
    u: Vec<f64>,
    p: Vec<Vec3>,
    m: Vec<Vec3>,
}

impl Spline {
    fn chord_length(points: &[[f64; 3]]) -> Self {
        let p: Vec<Vec3> = points.iter().map(|q| Vec3::new(q[0], q[1], q[2])).collect();
        let mut u = vec![0.0];
        for i in 1..p.len() {
            u.push(u[i - 1] + (p[i] - p[i - 1]).norm());
        }
        let n = p.len();
        // Thomas algorithm for the natural-spline second derivatives.
        let mut m = vec![Vec3::zeros(); n];
        let mut c = vec![0.0; n];
        let mut d = vec![Vec3::zeros(); n];
        for i in 1..n - 1 {
            let h0 = u[i] - u[i - 1];
            let h1 = u[i + 1] - u[i];
            let rhs = 6.0 * ((p[i + 1] - p[i]) / h1 - (p[i] - p[i - 1]) / h0);
            let diag = 2.0 * (h0 + h1) - h0 * c[i - 1];
            c[i] = h1 / diag;
            d[i] = (rhs - d[i - 1] * h0) / diag;
        }
        for i in (1..n - 1).rev() {
            m[i] = d[i] - m[i + 1] * c[i];
        }
        Self { u, p, m }
    }

    fn span(&self) -> (f64, f64) {
        (self.u[0], *self.u.last().unwrap())
    }

    fn eval(&self, t: f64) -> [Vec3; 3] {
        let n = self.u.len();
        let k = match self.u.binary_search_by(|v| v.partial_cmp(&t).unwrap()) {
            Ok(i) => i.min(n - 2),
            Err(i) => i.clamp(1, n - 1) - 1,
        };
        let h = self.u[k + 1] - self.u[k];
        let a = (self.u[k + 1] - t) / h;
        let b = (t - self.u[k]) / h;
        let (m0, m1, p0, p1) = (self.m[k], self.m[k + 1], self.p[k], self.p[k + 1]);
        let val = p0 * a + p1 * b + (m0 * (a * a * a - a) + m1 * (b * b * b - b)) * (h * h / 6.0);
        let d1 = (p1 - p0) / h + (m1 * (3.0 * b * b - 1.0) - m0 * (3.0 * a * a - 1.0)) * (h / 6.0);
        let d2 = m0 * a + m1 * b;
        [val, d1, d2]
    }
}

#[derive(Debug, Clone)]
enum Raw {
    Line,
    Circle(f64),
    Helix(f64, f64),
    Bump(f64, f64, f64),
    Sampled(Spline),
}

impl Raw {
    /// (c, c', c'') in the raw parameter.
    fn eval(&self, t: f64) -> [Vec3; 3] {
        match self {
            Raw::Line => [Vec3::new(t, 0.0, 0.0), Vec3::x(), Vec3::zeros()],
            Raw::Circle(r) => {
                let (s, c) = t.sin_cos();
                [
                    Vec3::new(r * c, r * s, 0.0),
                    Vec3::new(-r * s, r * c, 0.0),
                    Vec3::new(-r * c, -r * s, 0.0),
                ]
            }
            Raw::Helix(r, h) => {
                let (s, c) = t.sin_cos();
                [
                    Vec3::new(r * c, r * s, h * t),
                    Vec3::new(-r * s, r * c, *h),
                    Vec3::new(-r * c, -r * s, 0.0),
                ]
            }
            Raw::Bump(a, w, t0) => {
                let z = (t - t0) / w;
                let g = a * (-z * z).exp();
                let g1 = -2.0 * z / w * g;
                let g2 = (4.0 * z * z - 2.0) / (w * w) * g;
                [Vec3::new(t, g, 0.0), Vec3::new(1.0, g1, 0.0), Vec3::new(0.0, g2, 0.0)]
            }
            Raw::Sampled(s) => s.eval(t),
        }
    }

    /// Constant speed, if known in closed form.
    fn constant_speed(&self) -> Option<f64> {
        match self {
            Raw::Line => Some(1.0),
            Raw::Circle(r) => Some(*r),
            Raw::Helix(r, h) => Some((r * r + h * h).sqrt()),
            _ => None,
        }
    }
}

const ARC_SEGMENTS: usize = 2048;
const ARC_GAUSS: usize = 8;

#[derive(Debug, Clone)]
struct ArcTable {
    t: Vec<f64>,
    s: Vec<f64>,
    gx: Vec<f64>,
    gw: Vec<f64>,
}

impl ArcTable {
    fn build(raw: &Raw, t0: f64, t1: f64) -> Self {
        let (gx, gw) = gauss_legendre(ARC_GAUSS);
        let dt = (t1 - t0) / ARC_SEGMENTS as f64;
        let t: Vec<f64> = (0..=ARC_SEGMENTS).map(|k| t0 + dt * k as f64).collect();
        let mut s = vec![0.0; ARC_SEGMENTS + 1];
        let mut table = Self { t, s: Vec::new(), gx, gw };
        for k in 0..ARC_SEGMENTS {
            s[k + 1] = s[k] + table.segment(raw, table.t[k], table.t[k + 1]);
        }
        table.s = s;
        table
    }

    fn segment(&self, raw: &Raw, a: f64, b: f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.gx
            .iter()
            .zip(&self.gw)
            .map(|(x, w)| w * raw.eval(mid + half * x)[1].norm())
            .sum::<f64>()
            * half
    }

    fn length(&self) -> f64 {
        *self.s.last().unwrap()
    }

    /// Raw parameter at arc length `s`.
    fn invert(&self, raw: &Raw, s: f64) -> f64 {
        let s = s.clamp(0.0, self.length());
        let k = match self.s.binary_search_by(|v| v.partial_cmp(&s).unwrap()) {
            Ok(i) => return self.t[i],
            Err(i) => i.clamp(1, ARC_SEGMENTS) - 1,
        };
        let (ta, tb) = (self.t[k], self.t[k + 1]);
        let frac = (s - self.s[k]) / (self.s[k + 1] - self.s[k]);
        let mut t = ta + frac * (tb - ta);
        for _ in 0..30 {
            let f = self.s[k] + self.segment(raw, ta, t) - s;
            let step = f / raw.eval(t)[1].norm();
            t = (t - step).clamp(ta, tb);
            if step.abs() < 1e-15 * (1.0 + t.abs()) {
                break;
            }
        }
        t
    }
}

/// A regular curve parametrised by arc length on `[x_min, x_max]`.
#[derive(Debug, Clone)]
pub struct ArcCurve {
    raw: Raw,
    t_min: f64,
    x_min: f64,
    length: f64,
    speed: Option<f64>,
    table: Option<ArcTable>,
}

/// Reparametrise by arc length. Unit-speed inputs keep their parameter
/// (`x = t`); every other curve starts at `x = 0`.
///
/// Fails if `|c'(t)| < tol` anywhere on the sampling grid.
pub fn reparameterize_arclength(spec: &CurveSpec, tol: f64) -> Result<ArcCurve> {
    spec.validate()?;
    let (raw, t0, t1) = match &spec.kind {
        CurveKind::Line => (Raw::Line, spec.t_min, spec.t_max),
        CurveKind::Circle { radius } => (Raw::Circle(*radius), spec.t_min, spec.t_max),
        CurveKind::Helix { radius, pitch } => (Raw::Helix(*radius, *pitch), spec.t_min, spec.t_max),
        CurveKind::Bump { amplitude, width, center } => {
            (Raw::Bump(*amplitude, *width, *center), spec.t_min, spec.t_max)
        }
        CurveKind::Sampled { points } => {
            let sp = Spline::chord_length(points);
            let (a, b) = sp.span();
            (Raw::Sampled(sp), a, b)
        }
    };
    let probe = 4 * ARC_SEGMENTS;
    for k in 0..=probe {
        let t = t0 + (t1 - t0) * k as f64 / probe as f64;
        let speed = raw.eval(t)[1].norm();
        if !(speed >= tol) {
            return Err(Error::NonRegularCurve { at: t, speed });
        }
    }
    let speed = raw.constant_speed();
    let (table, length) = match speed {
        Some(v) => (None, v * (t1 - t0)),
        None => {
            let tab = ArcTable::build(&raw, t0, t1);
            let l = tab.length();
            (Some(tab), l)
        }
    };
    let x_min = if speed == Some(1.0) { t0 } else { 0.0 };
    let curve = ArcCurve { raw, t_min: t0, x_min, length, speed, table };
    // post-condition: unit speed at the default nodes
    for i in 0..DEFAULT_NODES {
        let x = curve.x_min + curve.length * i as f64 / (DEFAULT_NODES - 1) as f64;
        let d = (curve.eval(x)[1].norm() - 1.0).abs();
        if d > tol.max(1e-12) {
            return Err(Error::NonRegularCurve { at: x, speed: 1.0 + d });
        }
    }
    Ok(curve)
}

impl ArcCurve {
    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.length
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    fn param(&self, x: f64) -> f64 {
        let s = x - self.x_min;
        match (self.speed, &self.table) {
            (Some(v), _) => self.t_min + s / v,
            (None, Some(tab)) => tab.invert(&self.raw, s),
            (None, None) => unreachable!("numeric curve without arc table"),
        }
    }

    /// (c, c', c'') with respect to arc length.
    pub fn eval(&self, x: f64) -> [Vec3; 3] {
        let [c, d1, d2] = self.raw.eval(self.param(x));
        let v = d1.norm();
        let tau = d1 / v;
        let acc = (d2 - tau * d2.dot(&tau)) / (v * v);
        [c, tau, acc]
    }

    pub fn point(&self, x: f64) -> Vec3 {
        self.eval(x)[0]
    }

    /// True if the curve returns to its starting point with the same tangent.
    pub fn is_closed(&self) -> bool {
        let [a, ta, _] = self.eval(self.x_min());
        let [b, tb, _] = self.eval(self.x_max());
        (a - b).norm() < 1e-9 * (1.0 + self.length) && (ta - tb).norm() < 1e-6
    }
}

/// Rotation angle of the cross-section along the curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TwistSpec {
    #[default]
    None,
    /// θ(x) = rate·x + offset.
    Linear { rate: f64, offset: f64 },
    /// θ(x) = amplitude·sin(wavenumber·x).
    Sine { amplitude: f64, wavenumber: f64 },
}

impl TwistSpec {
    pub fn theta(&self, x: f64) -> f64 {
        match *self {
            TwistSpec::None => 0.0,
            TwistSpec::Linear { rate, offset } => rate * x + offset,
            TwistSpec::Sine { amplitude, wavenumber } => amplitude * (wavenumber * x).sin(),
        }
    }

    pub fn dtheta(&self, x: f64) -> f64 {
        match *self {
            TwistSpec::None => 0.0,
            TwistSpec::Linear { rate, .. } => rate,
            TwistSpec::Sine { amplitude, wavenumber } => {
                amplitude * wavenumber * (wavenumber * x).cos()
            }
        }
    }

    /// The rotation T_θ(x) acting on transverse coordinates.
    pub fn rotation(&self, x: f64) -> Matrix2<f64> {
        let (s, c) = self.theta(x).sin_cos();
        Matrix2::new(c, -s, s, c)
    }
}

/// Options for the frame integrator.
#[derive(Debug, Clone, Copy)]
pub struct FrameOptions {
    pub nodes: usize,
    /// Pre-projection orthonormality defect that triggers substep refinement.
    pub defect_tol: f64,
    pub max_refinements: usize,
}

impl Default for FrameOptions {
    fn default() -> Self {
        Self { nodes: DEFAULT_NODES, defect_tol: 1e-6, max_refinements: 8 }
    }
}

/// Parallel frame sampled on a uniform arc-length grid.
#[derive(Debug, Clone)]
pub struct FrameField {
    pub curve: ArcCurve,
    pub x: Vec<f64>,
    pub h: f64,
    pub tau: Vec<Vec3>,
    pub e1: Vec<Vec3>,
    pub e2: Vec<Vec3>,
    pub kappa1: Vec<f64>,
    pub kappa2: Vec<f64>,
    pub kappa: Vec<f64>,
    /// κ' and κ'' as (κ₁, κ₂) pairs, 4th-order finite differences.
    pub dkappa: Vec<Vector2<f64>>,
    pub ddkappa: Vec<Vector2<f64>>,
    /// Substeps per grid interval finally used.
    pub substeps: usize,
}

fn initial_normal(tau: &Vec3, acc: &Vec3) -> Vec3 {
    let n = acc - tau * acc.dot(tau);
    if n.norm() > 1e-12 {
        return n.normalize();
    }
    // axis least aligned with τ, first one on ties
    let mut best = 0;
    for k in 1..3 {
        if tau[k].abs() < tau[best].abs() {
            best = k;
        }
    }
    let mut a = Vec3::zeros();
    a[best] = 1.0;
    (a - tau * a.dot(tau)).normalize()
}

fn orthonormal_defect(t: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let v = [t, a, b];
    let mut d: f64 = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            let target = if i == j { 1.0 } else { 0.0 };
            d = d.max((v[i].dot(v[j]) - target).abs());
        }
    }
    d
}

/// e_j' = -⟨c'', e_j⟩ c' with the exact tangent of the curve.
fn frame_rhs(curve: &ArcCurve, x: f64, e1: &Vec3, e2: &Vec3) -> (Vec3, Vec3) {
    let [_, tau, acc] = curve.eval(x);
    (-tau * acc.dot(e1), -tau * acc.dot(e2))
}

fn rk4_step(curve: &ArcCurve, x: f64, h: f64, e1: &Vec3, e2: &Vec3) -> (Vec3, Vec3) {
    let (a1, b1) = frame_rhs(curve, x, e1, e2);
    let (a2, b2) = frame_rhs(curve, x + 0.5 * h, &(e1 + a1 * (0.5 * h)), &(e2 + b1 * (0.5 * h)));
    let (a3, b3) = frame_rhs(curve, x + 0.5 * h, &(e1 + a2 * (0.5 * h)), &(e2 + b2 * (0.5 * h)));
    let (a4, b4) = frame_rhs(curve, x + h, &(e1 + a3 * h), &(e2 + b3 * h));
    (
        e1 + (a1 + a2 * 2.0 + a3 * 2.0 + a4) * (h / 6.0),
        e2 + (b1 + b2 * 2.0 + b3 * 2.0 + b4) * (h / 6.0),
    )
}

/// Gram-Schmidt of (e1, e2) against the exact tangent.
fn project(tau: &Vec3, e1: &Vec3, e2: &Vec3) -> (Vec3, Vec3) {
    let a = (e1 - tau * e1.dot(tau)).normalize();
    let b = (e2 - tau * e2.dot(tau) - a * e2.dot(&a)).normalize();
    (a, b)
}

/// Integrate the parallel-frame equations on a uniform grid of
/// `opts.nodes` points spanning the curve.
#[allow(clippy::mut_range_bound)]
pub fn bishop_frame(curve: &ArcCurve, opts: FrameOptions) -> Result<FrameField> {
    let n = opts.nodes;
    if n < 6 {
        return Err(invalid("frame grid needs at least 6 nodes"));
    }
    let h = curve.length() / (n - 1) as f64;
    let x: Vec<f64> = (0..n).map(|i| curve.x_min() + h * i as f64).collect();
    let [_, tau0, acc0] = curve.eval(x[0]);
    let e10 = initial_normal(&tau0, &acc0);
    let e20 = tau0.cross(&e10);

    let mut substeps = 1usize;
    let mut refinements = 0usize;
    let (e1, e2) = 'outer: loop {
        let mut e1 = vec![e10];
        let mut e2 = vec![e20];
        let sub = h / substeps as f64;
        for i in 0..n - 1 {
            let (mut a, mut b) = (e1[i], e2[i]);
            for k in 0..substeps {
                let xs = x[i] + sub * k as f64;
                let (a1, b1) = rk4_step(curve, xs, sub, &a, &b);
                let tau = curve.eval(xs + sub)[1];
                let defect = orthonormal_defect(&tau, &a1, &b1);
                if defect > opts.defect_tol {
                    if refinements >= opts.max_refinements {
                        return Err(Error::FrameDefect { defect, refinements });
                    }
                    refinements += 1;
                    substeps *= 2;
                    continue 'outer;
                }
                (a, b) = project(&tau, &a1, &b1);
            }
            e1.push(a);
            e2.push(b);
        }
        break (e1, e2);
    };

    let mut tau = Vec::with_capacity(n);
    let mut kappa1 = Vec::with_capacity(n);
    let mut kappa2 = Vec::with_capacity(n);
    for i in 0..n {
        let [_, t, acc] = curve.eval(x[i]);
        tau.push(t);
        kappa1.push(acc.dot(&e1[i]));
        kappa2.push(acc.dot(&e2[i]));
    }
    let kappa = kappa1.iter().zip(&kappa2).map(|(a, b)| a.hypot(*b)).collect();
    let d1a = fd_first(&kappa1, h);
    let d1b = fd_first(&kappa2, h);
    let d2a = fd_second(&kappa1, h);
    let d2b = fd_second(&kappa2, h);
    let dkappa = d1a.iter().zip(&d1b).map(|(a, b)| Vector2::new(*a, *b)).collect();
    let ddkappa = d2a.iter().zip(&d2b).map(|(a, b)| Vector2::new(*a, *b)).collect();
    Ok(FrameField { curve: curve.clone(), x, h, tau, e1, e2, kappa1, kappa2, kappa, dkappa, ddkappa, substeps })
}

/// Fourth-order first derivative on a uniform grid, one-sided at the ends.
pub fn fd_first(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 5, "need at least 5 samples");
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (-f[i + 2] + 8.0 * f[i + 1] - 8.0 * f[i - 1] + f[i - 2]) / (12.0 * h);
    }
    let left = |g: &dyn Fn(usize) -> f64, i: usize| -> f64 {
        match i {
            0 => -25.0 * g(0) + 48.0 * g(1) - 36.0 * g(2) + 16.0 * g(3) - 3.0 * g(4),
            _ => -3.0 * g(0) - 10.0 * g(1) + 18.0 * g(2) - 6.0 * g(3) + g(4),
        }
    };
    for i in 0..2 {
        d[i] = left(&|k| f[k], i) / (12.0 * h);
        d[n - 1 - i] = -left(&|k| f[n - 1 - k], i) / (12.0 * h);
    }
    d
}

/// Fourth-order second derivative on a uniform grid, one-sided at the ends.
pub fn fd_second(f: &[f64], h: f64) -> Vec<f64> {
    let n = f.len();
    assert!(n >= 6, "need at least 6 samples");
    let mut d = vec![0.0; n];
    for i in 2..n - 2 {
        d[i] = (-f[i + 2] + 16.0 * f[i + 1] - 30.0 * f[i] + 16.0 * f[i - 1] - f[i - 2]) / (12.0 * h * h);
    }
    let left = |g: &dyn Fn(usize) -> f64, i: usize| -> f64 {
        match i {
            0 => 45.0 * g(0) - 154.0 * g(1) + 214.0 * g(2) - 156.0 * g(3) + 61.0 * g(4) - 10.0 * g(5),
            _ => 10.0 * g(0) - 15.0 * g(1) - 4.0 * g(2) + 14.0 * g(3) - 6.0 * g(4) + g(5),
        }
    };
    for i in 0..2 {
        d[i] = left(&|k| f[k], i) / (12.0 * h * h);
        d[n - 1 - i] = left(&|k| f[n - 1 - k], i) / (12.0 * h * h);
    }
    d
}

/// Frame data at an arbitrary arc-length position.
#[derive(Debug, Clone, Copy)]
pub struct FramePoint {
    pub c: Vec3,
    pub tau: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
    pub kappa: Vector2<f64>,
    pub dkappa: Vector2<f64>,
    pub ddkappa: Vector2<f64>,
}

impl FrameField {
    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    /// Largest Gram-matrix deviation from the identity over all nodes.
    pub fn orthonormality_defect(&self) -> f64 {
        (0..self.len())
            .map(|i| orthonormal_defect(&self.tau[i], &self.e1[i], &self.e2[i]))
            .fold(0.0, f64::max)
    }

    /// Largest |κ_j - ⟨c'', e_j⟩| with c'' re-evaluated independently.
    pub fn curvature_consistency(&self) -> f64 {
        (0..self.len())
            .map(|i| {
                let acc = self.curve.eval(self.x[i])[2];
                (acc.dot(&self.e1[i]) - self.kappa1[i])
                    .abs()
                    .max((acc.dot(&self.e2[i]) - self.kappa2[i]).abs())
            })
            .fold(0.0, f64::max)
    }

    fn locate(&self, x: f64) -> (usize, f64) {
        let u = ((x - self.x[0]) / self.h).clamp(0.0, (self.len() - 1) as f64);
        let i = (u.floor() as usize).min(self.len() - 2);
        (i, u - i as f64)
    }

    /// Frame at an off-grid point: one RK4 step from the node below.
    pub fn at(&self, x: f64) -> FramePoint {
        let (i, frac) = self.locate(x);
        let dx = x - self.x[i];
        let (e1, e2) = if dx.abs() < 1e-300 {
            (self.e1[i], self.e2[i])
        } else {
            let (a, b) = rk4_step(&self.curve, self.x[i], dx, &self.e1[i], &self.e2[i]);
            let tau = self.curve.eval(x)[1];
            project(&tau, &a, &b)
        };
        let [c, tau, acc] = self.curve.eval(x);
        let lerp = |v: &[Vector2<f64>]| v[i] * (1.0 - frac) + v[i + 1] * frac;
        FramePoint {
            c,
            tau,
            e1,
            e2,
            kappa: Vector2::new(acc.dot(&e1), acc.dot(&e2)),
            dkappa: lerp(&self.dkappa),
            ddkappa: lerp(&self.ddkappa),
        }
    }

    fn node(&self, i: usize) -> FramePoint {
        let c = self.curve.point(self.x[i]);
        FramePoint {
            c,
            tau: self.tau[i],
            e1: self.e1[i],
            e2: self.e2[i],
            kappa: Vector2::new(self.kappa1[i], self.kappa2[i]),
            dkappa: self.dkappa[i],
            ddkappa: self.ddkappa[i],
        }
    }

    /// Frame at x, using the stored node when x is on the grid.
    pub fn point(&self, x: f64) -> FramePoint {
        let (i, frac) = self.locate(x);
        if frac == 0.0 {
            self.node(i)
        } else if (frac - 1.0).abs() < 1e-14 {
            self.node(i + 1)
        } else {
            self.at(x)
        }
    }

    /// Column names and rows for CSV export.
    pub fn table(&self) -> (Vec<&'static str>, Vec<Vec<f64>>) {
        let header = vec![
            "x", "tau_x", "tau_y", "tau_z", "e1_x", "e1_y", "e1_z", "e2_x", "e2_y", "e2_z",
            "kappa1", "kappa2", "kappa",
        ];
        let rows = (0..self.len())
            .map(|i| {
                let mut r = vec![self.x[i]];
                for v in [&self.tau[i], &self.e1[i], &self.e2[i]] {
                    r.extend_from_slice(v.as_slice());
                }
                r.extend([self.kappa1[i], self.kappa2[i], self.kappa[i]]);
                r
            })
            .collect();
        (header, rows)
    }
}

/// Sampled non-overlap constants: `c1` is the smallest chord/arc ratio for
/// `3h < |Δx| <= L/4`, `c2` the smallest distance for `|Δx| > L/4`. On closed
/// curves `Δx` is measured around the loop. This is a heuristic proxy for a
/// global condition; distances below the grid spacing count as contact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverlapMargin {
    pub c1: f64,
    pub c2: f64,
    pub feasible: bool,
}

pub fn overlap_margin(frame: &FrameField) -> OverlapMargin {
    let curve = &frame.curve;
    let closed = curve.is_closed();
    let n = if closed { frame.len() - 1 } else { frame.len() };
    let pts: Vec<Vec3> = frame.x[..n].iter().map(|&x| curve.point(x)).collect();
    let l = curve.length();
    let split = l / 4.0;
    let cut = 3.0 * frame.h;
    let mut c1 = f64::INFINITY;
    let mut c2 = f64::INFINITY;
    for i in 0..n {
        for j in i + 1..n {
            let mut dx = frame.x[j] - frame.x[i];
            if closed {
                dx = dx.min(l - dx);
            }
            if dx <= cut {
                continue;
            }
            let d = (pts[j] - pts[i]).norm();
            if dx <= split {
                c1 = c1.min(d / dx);
            } else {
                c2 = c2.min(d);
            }
        }
    }
    let c1 = if c1.is_finite() { c1 } else { 1.0 };
    let c2 = if c2.is_finite() { c2 } else { l };
    OverlapMargin { c1, c2, feasible: c1 > 0.0 && c2 > frame.h }
}

/// The scaled embedding f_ε(x, y) = c(x) + ε (T_θ(x) y)·(e₁, e₂).
pub fn embed(x: f64, y: [f64; 2], eps: f64, frame: &FrameField, twist: &TwistSpec) -> Result<Vec3> {
    let p = frame.point(x);
    let ty = twist.rotation(x) * Vector2::new(y[0], y[1]);
    let rho = 1.0 - eps * ty.dot(&p.kappa);
    if !(rho > 0.0) {
        return Err(Error::WidthTooLarge { eps, rho, x });
    }
    Ok(embed_at(&p, &ty, eps))
}

fn embed_at(p: &FramePoint, ty: &Vector2<f64>, eps: f64) -> Vec3 {
    p.c + (p.e1 * ty[0] + p.e2 * ty[1]) * eps
}

/// Embedding restricted to the grid nodes, used by samplers that stay on the
/// frame grid.
pub fn embed_node(i: usize, y: [f64; 2], eps: f64, frame: &FrameField, twist: &TwistSpec) -> Vec3 {
    let p = frame.node(i);
    let ty = twist.rotation(frame.x[i]) * Vector2::new(y[0], y[1]);
    embed_at(&p, &ty, eps)
}

/// Central-difference Jacobian determinant of the embedding at (x, y).
pub fn jacobian_determinant_fd(
    x: f64,
    y: [f64; 2],
    eps: f64,
    frame: &FrameField,
    twist: &TwistSpec,
    step: f64,
) -> Result<f64> {
    let d = |dx: f64, d1: f64, d2: f64| embed(x + dx, [y[0] + d1, y[1] + d2], eps, frame, twist);
    let gx = (d(step, 0.0, 0.0)? - d(-step, 0.0, 0.0)?) / (2.0 * step);
    let g1 = (d(0.0, step, 0.0)? - d(0.0, -step, 0.0)?) / (2.0 * step);
    let g2 = (d(0.0, 0.0, step)? - d(0.0, 0.0, -step)?) / (2.0 * step);
    Ok(gx.dot(&g1.cross(&g2)))
}

/// ρ_ε and s^ε at a point of the reference tube.
pub fn metric_factors(
    x: f64,
    y: [f64; 2],
    eps: f64,
    frame: &FrameField,
    twist: &TwistSpec,
) -> Result<(f64, f64)> {
    let p = frame.point(x);
    let proj = (twist.rotation(x) * Vector2::new(y[0], y[1])).dot(&p.kappa);
    let rho = 1.0 - eps * proj;
    if !(rho > 0.0) {
        return Err(Error::WidthTooLarge { eps, rho, x });
    }
    let s = if eps == 0.0 { -2.0 * proj } else { (rho * rho - 1.0) / (eps * rho * rho) };
    Ok((rho, s))
}

/// The bending potential V_bend(x, y) at width ε.
pub fn bending_potential(
    x: f64,
    y: [f64; 2],
    eps: f64,
    frame: &FrameField,
    twist: &TwistSpec,
) -> Result<f64> {
    let p = frame.point(x);
    let k2 = p.kappa.norm_squared();
    if eps == 0.0 {
        return Ok(-0.25 * k2);
    }
    let ty = twist.rotation(x) * Vector2::new(y[0], y[1]);
    let rho = 1.0 - eps * ty.dot(&p.kappa);
    if !(rho > 0.0) {
        return Err(Error::WidthTooLarge { eps, rho, x });
    }
    let d1 = ty.dot(&p.dkappa);
    let d2 = ty.dot(&p.ddkappa);
    Ok(-k2 / (4.0 * rho * rho)
        - eps * d2 / (2.0 * rho.powi(3))
        - eps * eps * 5.0 * d1 * d1 / (4.0 * rho.powi(4)))
}

/// V_geom(x) = -κ²/4 + θ'² ‖Lχ‖² at every frame node.
pub fn geometric_potential(frame: &FrameField, twist: &TwistSpec, lchi2: f64) -> Vec<f64> {
    frame
        .x
        .iter()
        .zip(&frame.kappa)
        .map(|(&x, &k)| {
            let t = twist.dtheta(x);
            -0.25 * k * k + t * t * lchi2
        })
        .collect()
}

/// V_geom sampled at arbitrary positions (off-grid points use the RK4 frame).
pub fn geometric_potential_at(frame: &FrameField, twist: &TwistSpec, lchi2: f64, xs: &[f64]) -> Vec<f64> {
    xs.iter()
        .map(|&x| {
            let k = frame.point(x).kappa.norm_squared();
            let t = twist.dtheta(x);
            -0.25 * k + t * t * lchi2
        })
        .collect()
}

/// Largest ε for which ρ_ε stays positive on a cross-section of radius
/// `y_extent` (sup of |y| over Ω_f).
pub fn max_width(frame: &FrameField, y_extent: f64) -> f64 {
    let kmax = frame.kappa.iter().copied().fold(0.0, f64::max);
    if kmax * y_extent == 0.0 {
        f64::INFINITY
    } else {
        1.0 / (kmax * y_extent)
    }
}

pub fn check_width(frame: &FrameField, y_extent: f64, eps: f64) -> Result<()> {
    let limit = max_width(frame, y_extent);
    if eps >= limit {
        let (i, _) = frame
            .kappa
            .iter()
            .enumerate()
            .fold((0, 0.0), |acc, (i, &k)| if k > acc.1 { (i, k) } else { acc });
        return Err(Error::WidthTooLarge { eps, rho: 1.0 - eps / limit, x: frame.x[i] });
    }
    Ok(())
}
