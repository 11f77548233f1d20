//! Desk-scale pipelines that put the modules together: many-body versus
//! effective dynamics from matched condensate data, the 1D mean-field toy,
//! and the transverse-excitation scaling study.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::condensation::{alpha_f, alpha_n2_from_density, alpha_xi, weight_m, CondensateRef};
use crate::error::{invalid, Result};
use crate::linalg::{loglog_slope, C64};
use crate::manybody::{
    build_hamiltonian, evolve_state, excitation_probability, one_body_density, product_projector,
    trace_distance, EnergyDiagnostics, FockBasis, Propagator, SingleParticleBasis, XKernel,
};
use crate::nls::{self, EvolveOptions, Integrator, Kinetic, Potential1D, Profile, Wave1D};
use crate::scaling::{b_coefficient, PairPotential, Regime, ScalingPoint};
use crate::transverse::{OverlapTensor, TransverseModes};

/// Initial one-body profile along the guide.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialProfile {
    /// exp(-(x - center)²/(2 width²)) · e^{i momentum x}.
    Gaussian { center: f64, width: f64, momentum: f64 },
    /// Linear ground state of the static potential.
    GroundState,
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile::Gaussian { center: 0.5, width: 0.8, momentum: 1.0 }
    }
}

/// Normalised Φ₀ on the lattice (lattice kinetic for the ground state).
pub fn initial_wave(profile: &InitialProfile, half_width: f64, sites: usize, static_v: &[f64]) -> Result<Wave1D> {
    let mut w = match *profile {
        InitialProfile::Gaussian { center, width, momentum } => Wave1D::from_fn(half_width, sites, |x| {
            C64::from_polar((-(x - center).powi(2) / (2.0 * width * width)).exp(), momentum * x)
        })?,
        InitialProfile::GroundState => nls::ground_state(static_v, 0.0, half_width, Kinetic::Lattice, 1e-10, None)?.wave,
    };
    w.normalize();
    Ok(w)
}

/// Lattice-normalised one-body vector Φ(x)√Δx ⊗ χ (χ given by mode weights).
pub fn lattice_vector(w: &Wave1D, transverse: &[C64]) -> Vec<C64> {
    let s = w.dx().sqrt();
    w.psi.iter().flat_map(|p| transverse.iter().map(move |c| p * c * s)).collect()
}

fn nls_reference(w0: &Wave1D, pot: &Potential1D, b: f64, t_end: f64, record_dt: f64) -> Result<Vec<Wave1D>> {
    let dt = (nls::max_step(w0.dx()) / 4.0).min(1e-3);
    let per = (record_dt / dt).round().max(1.0) as usize;
    let dt = record_dt / per as f64;
    let opts = EvolveOptions { integrator: Integrator::Yoshida4, kinetic: Kinetic::Lattice, record_every: per };
    Ok(nls::evolve(w0, pot, b, dt, t_end, opts)?.frames)
}

/// Mean-field convergence on a 1D lattice with one transverse mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeanFieldToy {
    pub sites: usize,
    pub half_width: f64,
    /// Effective coupling b (on-site kernel b/Δx).
    pub coupling: f64,
    pub potential: Profile,
    pub initial: InitialProfile,
    pub particles: Vec<usize>,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for MeanFieldToy {
    fn default() -> Self {
        Self {
            sites: 16,
            half_width: 4.0,
            coupling: 4.0,
            potential: Profile::Harmonic { strength: 0.25, center: 0.0 },
            initial: InitialProfile::default(),
            particles: vec![2, 3, 4, 5, 6],
            t_end: 1.0,
            dt: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanFieldRow {
    pub particles: usize,
    pub times: Vec<f64>,
    pub alpha_n2: Vec<f64>,
    pub trace1: Vec<f64>,
}

impl MeanFieldRow {
    pub fn final_alpha(&self) -> f64 {
        *self.alpha_n2.last().unwrap()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct MeanFieldReport {
    pub rows: Vec<MeanFieldRow>,
    /// -slope of log α_{n²}(T) against log N.
    pub exponent: f64,
    pub strictly_decreasing: bool,
    /// α(N_max) < α(N_min)/2.
    pub halved: bool,
}

pub fn mean_field_toy(cfg: &MeanFieldToy) -> Result<MeanFieldReport> {
    if cfg.particles.len() < 2 || cfg.particles.contains(&1) {
        return Err(invalid("mean-field study needs at least two particle numbers, all >= 2"));
    }
    let x = nls::grid(cfg.half_width, cfg.sites);
    let pot = Potential1D::stationary(cfg.potential.sample(&x));
    let w0 = initial_wave(&cfg.initial, cfg.half_width, cfg.sites, &pot.static_part)?;
    let record = cfg.t_end / 10.0;
    let refs = nls_reference(&w0, &pot, cfg.coupling, cfg.t_end, record)?;
    let one = [C64::new(1.0, 0.0)];
    let sp = SingleParticleBasis::new(cfg.sites, cfg.half_width, vec![0.0], 1.0)?;
    let kernel = XKernel::on_site(cfg.sites, sp.dx(), cfg.coupling);
    let rows: Vec<MeanFieldRow> = cfg
        .particles
        .par_iter()
        .map(|&n| -> Result<MeanFieldRow> {
            let basis = FockBasis::new(sp.dim(), n)?;
            let h = build_hamiltonian(&basis, &sp, &pot, &kernel, &OverlapTensor::single(1.0))?;
            let psi0 = basis.condensate(&lattice_vector(&w0, &one));
            let every = (record / cfg.dt).round() as usize;
            let mut row = MeanFieldRow { particles: n, times: vec![], alpha_n2: vec![], trace1: vec![] };
            evolve_state(&h, &psi0, cfg.dt, cfg.t_end, Propagator::Krylov, |step, t, psi| {
                if step % every == 0 {
                    let phi = lattice_vector(&refs[step / every], &one);
                    let g1 = one_body_density(&basis, psi);
                    row.times.push(t);
                    row.alpha_n2.push(alpha_n2_from_density(&g1, &phi));
                    row.trace1.push(trace_distance(&g1, &product_projector(&phi, 1)));
                }
                Ok(())
            })?;
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let finals: Vec<f64> = rows.iter().map(|r| r.final_alpha()).collect();
    let ns: Vec<f64> = rows.iter().map(|r| r.particles as f64).collect();
    Ok(MeanFieldReport {
        exponent: -loglog_slope(&ns, &finals),
        strictly_decreasing: finals.windows(2).all(|w| w[1] < w[0]),
        halved: finals[finals.len() - 1] < finals[0] / 2.0,
        rows,
    })
}

/// Transverse excitation versus ε at fixed renormalised transverse energy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConfinementStudy {
    pub sites: usize,
    pub half_width: f64,
    pub particles: usize,
    pub eps: Vec<f64>,
    /// Transverse energy budget η: initial excited weight p = η ε² / gap.
    pub eta: f64,
    pub potential: Profile,
    pub initial: InitialProfile,
    pub t_end: f64,
    pub dt: f64,
}

impl Default for ConfinementStudy {
    fn default() -> Self {
        Self {
            sites: 8,
            half_width: 4.0,
            particles: 3,
            eps: vec![0.5, 0.25, 0.125],
            eta: 1.0,
            potential: Profile::Harmonic { strength: 0.25, center: 0.0 },
            initial: InitialProfile::default(),
            t_end: 1.0,
            dt: 0.005,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfinementRow {
    pub eps: f64,
    pub initial_weight: f64,
    pub mean_excitation: f64,
    pub max_excitation: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConfinementReport {
    pub rows: Vec<ConfinementRow>,
    /// Slope of log ⟨q^χ⟩ against log ε.
    pub exponent: f64,
}

/// Two transverse modes from `modes`; the initial condensate is
/// Φ₀ ⊗ (√(1-p) χ₀ + √p χ₁) with p = η ε²/(E₁ - E₀), so the renormalised
/// transverse energy per particle is η for every ε.
pub fn confinement_scaling(cfg: &ConfinementStudy, modes: &TransverseModes, w: &PairPotential) -> Result<ConfinementReport> {
    if modes.count() < 2 {
        return Err(invalid("confinement study needs two transverse modes"));
    }
    let energies = modes.energies[..2].to_vec();
    let gap = energies[1] - energies[0];
    let overlaps = modes.overlap_tensor();
    let x = nls::grid(cfg.half_width, cfg.sites);
    let pot = Potential1D::stationary(cfg.potential.sample(&x));
    let w0 = initial_wave(&cfg.initial, cfg.half_width, cfg.sites, &pot.static_part)?;
    let rows: Vec<ConfinementRow> = cfg
        .eps
        .par_iter()
        .map(|&eps| -> Result<ConfinementRow> {
            let sp = SingleParticleBasis::new(cfg.sites, cfg.half_width, energies.clone(), eps)?;
            let basis = FockBasis::new(sp.dim(), cfg.particles)?;
            let kernel = XKernel::on_site(cfg.sites, sp.dx(), w.mass());
            let h = build_hamiltonian(&basis, &sp, &pot, &kernel, &overlaps)?;
            let p = cfg.eta * eps * eps / gap;
            if p >= 1.0 {
                return Err(invalid(format!("transverse budget too large for eps = {eps}")));
            }
            let chi = [C64::new((1.0 - p).sqrt(), 0.0), C64::new(p.sqrt(), 0.0)];
            let psi0 = basis.condensate(&lattice_vector(&w0, &chi));
            let mut samples = Vec::new();
            evolve_state(&h, &psi0, cfg.dt, cfg.t_end, Propagator::Krylov, |_, _, psi| {
                samples.push(excitation_probability(&basis, &sp, psi));
                Ok(())
            })?;
            // trapezoid time average
            let k = samples.len() - 1;
            let mean = (samples[1..k].iter().sum::<f64>() + 0.5 * (samples[0] + samples[k])) / k as f64;
            Ok(ConfinementRow {
                eps,
                initial_weight: p,
                mean_excitation: mean,
                max_excitation: samples.iter().copied().fold(0.0, f64::max),
            })
        })
        .collect::<Result<_>>()?;
    let e: Vec<f64> = rows.iter().map(|r| r.eps).collect();
    let q: Vec<f64> = rows.iter().map(|r| r.mean_excitation).collect();
    Ok(ConfinementReport { exponent: loglog_slope(&e, &q), rows })
}

/// Many-body against effective dynamics along a scaling sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvergePlan {
    pub sites: usize,
    pub half_width: f64,
    pub modes: usize,
    pub particles: Vec<usize>,
    /// ε = N^{-alpha}.
    pub alpha: f64,
    pub beta: f64,
    pub xi: f64,
    pub potential: Profile,
    pub initial: InitialProfile,
    pub t_end: f64,
    pub dt: f64,
    /// Number of recorded frames after t = 0.
    pub records: usize,
}

impl Default for ConvergePlan {
    fn default() -> Self {
        Self {
            sites: 8,
            half_width: 4.0,
            modes: 2,
            particles: vec![2, 3, 4, 6],
            alpha: 0.4,
            beta: 0.25,
            xi: 0.2,
            potential: Profile::Harmonic { strength: 0.25, center: 0.0 },
            initial: InitialProfile::default(),
            t_end: 1.0,
            dt: 0.01,
            records: 10,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeSeries {
    pub particles: usize,
    pub eps: f64,
    pub mu: f64,
    pub b: f64,
    pub times: Vec<f64>,
    pub trace1: Vec<f64>,
    pub alpha_m: Vec<f64>,
    pub alpha_xi: Vec<f64>,
    pub excitation: Vec<f64>,
    pub energy_psi: Vec<f64>,
    pub energy_phi: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergeReport {
    pub regime: Regime,
    pub series: Vec<ConvergeSeries>,
    /// Final trace distance strictly decreasing in N.
    pub decreasing: bool,
}

pub fn converge(plan: &ConvergePlan, modes: &TransverseModes, w: &PairPotential, vgeom: Option<&[f64]>, regime: Regime) -> Result<ConvergeReport> {
    let points = plan_points(plan)?;
    compare_dynamics(plan, &points, modes, w, vgeom, regime)
}

/// (N, ε = N^{-α}) for every N of the plan.
pub fn plan_points(plan: &ConvergePlan) -> Result<Vec<ScalingPoint>> {
    plan.particles.iter().map(|&n| ScalingPoint::new(n as f64, (n as f64).powf(-plan.alpha), plan.beta)).collect()
}

/// Many-body against effective dynamics at explicit scaling points; the
/// plan supplies everything except N and ε. Particle numbers must be
/// integers.
pub fn compare_dynamics(
    plan: &ConvergePlan,
    points: &[ScalingPoint],
    modes: &TransverseModes,
    w: &PairPotential,
    vgeom: Option<&[f64]>,
    regime: Regime,
) -> Result<ConvergeReport> {
    if points.iter().any(|p| p.n.fract() != 0.0 || p.n < 2.0) {
        return Err(invalid("many-body points need integer N >= 2"));
    }
    if modes.count() < plan.modes || plan.modes == 0 {
        return Err(invalid("not enough transverse modes for the plan"));
    }
    if plan.records == 0 || plan.t_end <= 0.0 {
        return Err(invalid("plan needs a positive end time and at least one record"));
    }
    let energies = modes.energies[..plan.modes].to_vec();
    let overlaps = modes.overlap_tensor();
    let q4 = modes.chi_quartic();
    let b = b_coefficient(q4, w, regime);
    let x = nls::grid(plan.half_width, plan.sites);
    let mut static_v = plan.potential.sample(&x);
    if let Some(v) = vgeom {
        if v.len() != plan.sites {
            return Err(invalid("geometric potential must be sampled on the plan's sites"));
        }
        static_v.iter_mut().zip(v).for_each(|(a, g)| *a += g);
    }
    let pot = Potential1D::stationary(static_v);
    let w0 = initial_wave(&plan.initial, plan.half_width, plan.sites, &pot.static_part)?;
    let record = plan.t_end / plan.records as f64;
    let refs = nls_reference(&w0, &pot, b, plan.t_end, record)?;
    let e_phi: Vec<f64> = refs.iter().map(|r| nls::energy(r, &pot, b, 0.0, Kinetic::Lattice)).collect();
    let mut chi0 = vec![C64::new(0.0, 0.0); plan.modes];
    chi0[0] = C64::new(1.0, 0.0);
    let every = (record / plan.dt).round() as usize;

    let series: Vec<ConvergeSeries> = points
        .par_iter()
        .map(|point| -> Result<ConvergeSeries> {
            let n = point.n as usize;
            let sp = SingleParticleBasis::new(plan.sites, plan.half_width, energies.clone(), point.eps)?;
            let basis = FockBasis::new(sp.dim(), n)?;
            let kernel = XKernel::from_pair(w, point.mu(), plan.sites, sp.dx());
            let h = build_hamiltonian(&basis, &sp, &pot, &kernel, &overlaps)?;
            let m = weight_m(n, plan.xi)?;
            let psi0 = basis.condensate(&lattice_vector(&w0, &chi0));
            let mut s = ConvergeSeries {
                particles: n,
                eps: point.eps,
                mu: point.mu(),
                b,
                times: vec![],
                trace1: vec![],
                alpha_m: vec![],
                alpha_xi: vec![],
                excitation: vec![],
                energy_psi: vec![],
                energy_phi: vec![],
                g: vec![],
            };
            let mut diag = EnergyDiagnostics::default();
            evolve_state(&h, &psi0, plan.dt, plan.t_end, Propagator::Krylov, |step, t, psi| {
                if step % every != 0 {
                    return Ok(());
                }
                let k = step / every;
                let phi = lattice_vector(&refs[k], &chi0);
                let g1 = one_body_density(&basis, psi);
                let am = alpha_f(&CondensateRef::new(&phi)?, &basis, psi, &m.weight);
                let ep = diag.record(&h, &pot, t, psi);
                s.times.push(t);
                s.trace1.push(trace_distance(&g1, &product_projector(&phi, 1)));
                s.alpha_m.push(am);
                s.alpha_xi.push(alpha_xi(am, ep, e_phi[k]));
                s.excitation.push(excitation_probability(&basis, &sp, psi));
                s.energy_psi.push(ep);
                s.energy_phi.push(e_phi[k]);
                s.g.push(*diag.g.last().unwrap());
                Ok(())
            })?;
            Ok(s)
        })
        .collect::<Result<_>>()?;
    let finals: Vec<f64> = series.iter().map(|s| *s.trace1.last().unwrap()).collect();
    Ok(ConvergeReport { regime, decreasing: finals.windows(2).all(|w| w[1] < w[0]), series })
}
