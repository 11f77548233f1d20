use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use waveguide_bec::experiments::{ConvergePlan, InitialProfile};
use waveguide_bec::geometry::{CurveSpec, TwistSpec};
use waveguide_bec::manybody::{fock_dimension, DEFAULT_DIMENSION_CAP};
use waveguide_bec::nls::{max_step, Integrator, Kinetic, Profile};
use waveguide_bec::scaling::{xi_cap, PairPotential, Regime, ScalingPoint};
use waveguide_bec::transverse::{CrossSection, Shape};

use crate::error::{CliError, CliResult};

/// The configuration shipped with the tool; also used when `--config` is
/// omitted.
pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryBlock,
    pub cross_section: CrossSection,
    /// Transverse modes to compute.
    pub modes: usize,
    pub scaling: ScalingBlock,
    pub potential: PotentialBlock,
    pub evolve: EvolveBlock,
    pub manybody: ManyBodyBlock,
    pub converge: ConvergePlan,
    /// Output root; `--out` and `WGBEC_OUT` take precedence. Not part of the
    /// digest.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            geometry: GeometryBlock::default(),
            cross_section: CrossSection::rectangle(PI, PI, 64),
            modes: 2,
            scaling: ScalingBlock::default(),
            potential: PotentialBlock::default(),
            evolve: EvolveBlock::default(),
            manybody: ManyBodyBlock::default(),
            converge: ConvergePlan::default(),
            out: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GeometryBlock {
    pub curve: CurveSpec,
    pub twist: TwistSpec,
    pub eps: f64,
    pub nodes: usize,
}

impl Default for GeometryBlock {
    fn default() -> Self {
        Self { curve: CurveSpec::line(-8.0, 8.0), twist: TwistSpec::None, eps: 0.1, nodes: 1024 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingBlock {
    pub n: f64,
    pub beta: f64,
    pub xi: f64,
    pub regime: Regime,
}

impl Default for ScalingBlock {
    fn default() -> Self {
        Self { n: 1000.0, beta: 0.25, xi: 0.2, regime: Regime::Moderate }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveBlock {
    pub profile: Profile,
    pub amplitude: f64,
    pub frequency: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PotentialBlock {
    /// Static V(x) along the guide.
    pub external: Profile,
    /// Optional a·sin(ωt)·v(x).
    pub drive: Option<DriveBlock>,
    pub pair: PairPotential,
}

impl Default for PotentialBlock {
    fn default() -> Self {
        Self { external: Profile::Harmonic { strength: 0.25, center: 0.0 }, drive: None, pair: PairPotential::unit_mass() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvolveBlock {
    pub half_width: f64,
    pub grid: usize,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
    pub initial: InitialProfile,
    pub integrator: Integrator,
    pub kinetic: Kinetic,
    /// Add V_geom of the configured guide to the external potential.
    pub geometric: bool,
}

impl Default for EvolveBlock {
    fn default() -> Self {
        Self {
            half_width: 8.0,
            grid: 256,
            dt: 1e-3,
            t_end: 1.0,
            record_every: 50,
            initial: InitialProfile::default(),
            integrator: Integrator::default(),
            kinetic: Kinetic::default(),
            geometric: true,
        }
    }
}

/// Single many-body run at (N, geometry.eps, scaling.beta); lattice, times
/// and initial data come from the converge plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManyBodyBlock {
    pub particles: usize,
}

impl Default for ManyBodyBlock {
    fn default() -> Self {
        Self { particles: 3 }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// `.json` files are read as JSON, everything else as TOML.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        if path.extension().is_some_and(|e| e == "json") {
            Self::from_json(&text)
        } else {
            Self::from_toml(&text)
        }
    }

    pub fn shipped() -> Self {
        Self::from_toml(DEFAULT_CONFIG).expect("shipped config is valid")
    }

    /// Canonical JSON: sorted keys, no output root.
    pub fn canonical_json(&self) -> String {
        let mut c = self.clone();
        c.out = None;
        let v = serde_json::to_value(&c).expect("config serialises");
        serde_json::to_string(&v).expect("value serialises")
    }

    /// SHA-256 of the canonical JSON, hex encoded.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    /// Every physical and resource constraint, checked before any compute.
    pub fn validate(&self) -> CliResult<()> {
        let g = &self.geometry;
        g.curve.validate().map_err(|e| bad(format!("geometry.curve: {e}")))?;
        if g.nodes < 16 {
            return Err(bad("geometry.nodes must be at least 16"));
        }
        let s = &self.scaling;
        ScalingPoint::new(s.n, g.eps, s.beta).map_err(|e| bad(format!("scaling: {e}")))?;
        check_xi("scaling", s.xi, s.beta)?;
        if !matches!(self.cross_section.shape, Shape::Mask { .. }) && self.cross_section.resolution < 16 {
            return Err(bad("cross_section.resolution must be at least 16"));
        }
        if self.modes == 0 {
            return Err(bad("modes must be at least 1"));
        }
        if !(self.potential.pair.amplitude >= 0.0 && self.potential.pair.amplitude.is_finite()) {
            return Err(bad("potential.pair.amplitude must be non-negative"));
        }
        if let Some(d) = &self.potential.drive {
            if !(d.amplitude.is_finite() && d.frequency.is_finite()) {
                return Err(bad("potential.drive needs finite amplitude and frequency"));
            }
        }

        let e = &self.evolve;
        if e.grid < 4 || !e.grid.is_power_of_two() {
            return Err(bad("evolve.grid must be a power of two, at least 4"));
        }
        if !(e.half_width > 0.0 && e.t_end > 0.0 && e.dt > 0.0) {
            return Err(bad("evolve.half_width, dt and t_end must be positive"));
        }
        let bound = max_step(2.0 * e.half_width / e.grid as f64);
        if e.dt > bound {
            return Err(bad(format!("evolve.dt = {} exceeds the step bound {bound}", e.dt)));
        }
        if e.record_every == 0 {
            return Err(bad("evolve.record_every must be positive"));
        }

        let p = &self.converge;
        if !(p.alpha > 0.0) {
            return Err(bad("converge.alpha must be positive"));
        }
        if !(p.beta > 0.0 && p.beta < 1.0 / 3.0) {
            return Err(bad(format!("converge.beta must lie in (0, 1/3), got {}", p.beta)));
        }
        check_xi("converge", p.xi, p.beta)?;
        if p.modes == 0 || p.sites < 2 || p.records == 0 || !(p.dt > 0.0 && p.t_end > 0.0 && p.half_width > 0.0) {
            return Err(bad("converge needs modes >= 1, sites >= 2, records >= 1 and positive dt, t_end, half_width"));
        }
        let steps = p.t_end / p.dt;
        let per = steps / p.records as f64;
        if (steps - steps.round()).abs() > 1e-9 || (per - per.round()).abs() > 1e-9 || per.round() < 1.0 {
            return Err(bad("converge.t_end must be a whole number of records, each a whole number of steps"));
        }
        if p.particles.is_empty() || p.particles.windows(2).any(|w| w[1] <= w[0]) || p.particles[0] < 2 {
            return Err(bad("converge.particles must be increasing and at least 2"));
        }
        if self.manybody.particles < 2 {
            return Err(bad("manybody.particles must be at least 2"));
        }
        let d = p.sites * p.modes;
        for &n in p.particles.iter().chain([&self.manybody.particles]) {
            let dim = fock_dimension(d, n);
            if dim > DEFAULT_DIMENSION_CAP as u128 {
                return Err(bad(format!("N = {n} on {d} orbitals gives dimension {dim} above the cap {DEFAULT_DIMENSION_CAP}")));
            }
        }
        Ok(())
    }
}

fn check_xi(block: &str, xi: f64, beta: f64) -> CliResult<()> {
    let cap = xi_cap(beta);
    if !(xi > 0.0 && xi <= cap) {
        return Err(bad(format!("{block}.xi = {xi} must lie in (0, {cap}] for beta = {beta}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_config_round_trips() {
        let c = RunConfig::shipped();
        let json = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(RunConfig::from_json(&json).unwrap(), c);
        assert_eq!(RunConfig::from_json(&json).unwrap().digest(), c.digest());
        assert_eq!(c.digest().len(), 64);
    }

    #[test]
    fn empty_toml_is_the_default() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn physical_constraints() {
        let with = |f: fn(&mut RunConfig)| {
            let mut c = RunConfig::default();
            f(&mut c);
            c.validate()
        };
        assert!(with(|c| c.scaling.beta = 0.34).is_err());
        assert!(with(|c| c.scaling.xi = 0.9).is_err());
        assert!(with(|c| c.geometry.eps = 1.5).is_err());
        assert!(with(|c| c.geometry.eps = 0.0).is_err());
        assert!(with(|c| c.evolve.grid = 100).is_err());
        assert!(with(|c| c.evolve.dt = 1.0).is_err());
        assert!(with(|c| c.converge.particles = vec![3, 2]).is_err());
        assert!(with(|c| c.converge.particles = vec![2, 40]).is_err());
        assert!(with(|c| c.converge.dt = 0.03).is_err());
        assert!(with(|c| c.manybody.particles = 1).is_err());
        assert!(with(|_| ()).is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("modez = 3"), Err(CliError::Config(_))));
        assert!(RunConfig::from_toml("[scaling]\nbta = 0.1").is_err());
    }
}
