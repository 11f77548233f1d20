use std::path::Path;
use std::time::Instant;

use serde_json::{json, Map, Value};
use waveguide_bec::condensation::{prel_suite, weight_algebra_suite, Ledger};
use waveguide_bec::experiments::{compare_dynamics, converge, plan_points, initial_wave, ConvergeReport, ConvergeSeries};
use waveguide_bec::geometry::{
    bishop_frame, check_width, geometric_potential, geometric_potential_at, max_width, overlap_margin,
    reparameterize_arclength, FrameField, FrameOptions,
};
use waveguide_bec::nls::{self, energy_drift_check, sobolev_check, EvolveOptions, Potential1D};
use waveguide_bec::scaling::{b_coefficient, classify_sequence, effective_kernel, ScalingPoint, KERNEL_POINTS_PER_RANGE};
use waveguide_bec::transverse::{dirichlet_modes, TransverseModes};
use waveguide_bec::verify::{registry, run_checks, CheckOutcome, Measure, CORE_CHECKS};

use crate::config::{DriveBlock, RunConfig};
use crate::error::{CliError, CliResult};
use crate::output::{RunDir, RunRecord, Series};
use crate::plot::LinePlot;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Frame,
    Modes,
    Coeffs,
    Evolve,
    Manybody,
    Converge,
    Verify,
}

impl Command {
    pub const ALL: [Command; 7] =
        [Command::Frame, Command::Modes, Command::Coeffs, Command::Evolve, Command::Manybody, Command::Converge, Command::Verify];

    pub fn name(self) -> &'static str {
        match self {
            Command::Frame => "frame",
            Command::Modes => "modes",
            Command::Coeffs => "coeffs",
            Command::Evolve => "evolve",
            Command::Manybody => "manybody",
            Command::Converge => "converge",
            Command::Verify => "verify",
        }
    }
}

/// Everything a subcommand computed, before it touches the disk.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub scalars: Value,
    pub series: Vec<Series>,
    pub plots: Vec<LinePlot>,
    pub passed: bool,
}

impl Outcome {
    fn new(scalars: Value) -> Self {
        Self { scalars, series: vec![], plots: vec![], passed: true }
    }
}

pub fn execute(cmd: Command, cfg: &RunConfig) -> CliResult<Outcome> {
    cfg.validate()?;
    match cmd {
        Command::Frame => frame_cmd(cfg),
        Command::Modes => modes_cmd(cfg),
        Command::Coeffs => coeffs_cmd(cfg),
        Command::Evolve => evolve_cmd(cfg),
        Command::Manybody => manybody_cmd(cfg),
        Command::Converge => converge_cmd(cfg),
        Command::Verify => verify_cmd(),
    }
}

/// Execute and persist under `out_root/<digest>/`.
pub fn run(cmd: Command, cfg: &RunConfig, out_root: &Path) -> CliResult<RunRecord> {
    let start = Instant::now();
    let outcome = execute(cmd, cfg)?;
    let dir = RunDir::create(out_root, cfg)?;
    let scalars = dir.merge_scalars(cmd.name(), outcome.scalars)?;
    let series = outcome.series.iter().map(|s| dir.write_series(s)).collect::<CliResult<Vec<_>>>()?;
    let plots = emit_plots(&dir, &outcome.plots)?;
    let record = RunRecord {
        subcommand: cmd.name().to_string(),
        digest: cfg.digest(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        directory: dir.path.clone(),
        scalars,
        series,
        plots,
        wall_seconds: start.elapsed().as_secs_f64(),
        passed: outcome.passed,
    };
    dir.write_record(&record)?;
    Ok(record)
}

/// One SVG per plot that has data; empty plots are skipped with a notice.
pub fn emit_plots(dir: &RunDir, plots: &[LinePlot]) -> CliResult<Vec<std::path::PathBuf>> {
    if plots.is_empty() {
        eprintln!("notice: nothing to plot");
    }
    Ok(plots.iter().map(|p| dir.write_plot(p)).collect::<CliResult<Vec<_>>>()?.into_iter().flatten().collect())
}

fn build_frame(cfg: &RunConfig) -> CliResult<FrameField> {
    let curve = reparameterize_arclength(&cfg.geometry.curve, 1e-9)?;
    Ok(bishop_frame(&curve, FrameOptions { nodes: cfg.geometry.nodes, ..Default::default() })?)
}

fn build_modes(cfg: &RunConfig, at_least: usize) -> CliResult<TransverseModes> {
    Ok(dirichlet_modes(&cfg.cross_section, cfg.modes.max(at_least))?)
}

/// Guide coordinate of a lattice point x ∈ [-X, X): the lattice is centred
/// on the middle of the guide and wraps around closed curves.
fn guide_coords(frame: &FrameField, xs: &[f64]) -> CliResult<Vec<f64>> {
    let (a, b) = (frame.x[0], frame.x[frame.len() - 1]);
    let (mid, len) = (0.5 * (a + b), b - a);
    let closed = frame.curve.is_closed();
    xs.iter()
        .map(|&x| {
            let g = mid + x;
            if closed {
                Ok(a + (g - a).rem_euclid(len))
            } else if g < a || g > b {
                Err(CliError::Config(format!("lattice point {x} lies beyond the open guide of length {len}")))
            } else {
                Ok(g)
            }
        })
        .collect()
}

fn vgeom_on(cfg: &RunConfig, frame: &FrameField, lchi2: f64, xs: &[f64]) -> CliResult<Vec<f64>> {
    Ok(geometric_potential_at(frame, &cfg.geometry.twist, lchi2, &guide_coords(frame, xs)?))
}

fn frame_cmd(cfg: &RunConfig) -> CliResult<Outcome> {
    let frame = build_frame(cfg)?;
    let margin = overlap_margin(&frame);
    let extent = cfg.cross_section.extent()?;
    let wmax = max_width(&frame, extent);
    check_width(&frame, extent, cfg.geometry.eps)?;
    let (header, rows) = frame.table();
    let kmax = frame.kappa.iter().copied().fold(0.0, f64::max);
    let mut o = Outcome::new(json!({
        "length": frame.x[frame.len() - 1] - frame.x[0],
        "closed": frame.curve.is_closed(),
        "kappa_max": kmax,
        "orthonormality_defect": frame.orthonormality_defect(),
        "curvature_consistency": frame.curvature_consistency(),
        "overlap_c1": margin.c1,
        "overlap_c2": margin.c2,
        "overlap_feasible": margin.feasible,
        "cross_section_extent": extent,
        "max_width": wmax,
        "eps": cfg.geometry.eps,
    }));
    o.series.push(Series::new("frame", &header, rows));
    let pts = frame.x.iter().zip(&frame.kappa).map(|(&x, &k)| (x, k)).collect();
    o.plots.push(LinePlot::new("frame_curvature", "curvature along the guide", "x", "kappa").with("kappa", pts));
    Ok(o)
}

fn modes_cmd(cfg: &RunConfig) -> CliResult<Outcome> {
    let modes = build_modes(cfg, 1)?;
    let (rq, res) = modes.residual_check();
    let summary = modes.summary();
    let mut o = Outcome::new(json!({
        "summary": summary,
        "orthonormality_defect": modes.orthonormality_defect(),
        "rayleigh_mismatch": rq,
        "residual": res,
        "area": modes.area(),
        "h": modes.h(),
        "nodes": modes.node_count(),
    }));
    let j: Vec<f64> = (0..modes.count()).map(|j| j as f64).collect();
    o.series.push(Series::columns("modes_energies", &["j", "energy"], &[&j, &modes.energies]));
    Ok(o)
}

struct Coefficients {
    modes: TransverseModes,
    frame: FrameField,
    lchi2: f64,
    b: f64,
}

fn coefficients(cfg: &RunConfig, at_least: usize) -> CliResult<Coefficients> {
    let modes = build_modes(cfg, at_least)?;
    let frame = build_frame(cfg)?;
    let lchi2 = modes.angular_momentum_norm();
    let b = b_coefficient(modes.chi_quartic(), &cfg.potential.pair, cfg.scaling.regime);
    Ok(Coefficients { modes, frame, lchi2, b })
}

fn coeffs_cmd(cfg: &RunConfig) -> CliResult<Outcome> {
    let c = coefficients(cfg, 1)?;
    let vgeom = geometric_potential(&c.frame, &cfg.geometry.twist, c.lchi2);
    let point = ScalingPoint::new(cfg.scaling.n, cfg.geometry.eps, cfg.scaling.beta)?;
    let kernel = effective_kernel(&c.modes, &cfg.potential.pair, point.eps, point.mu(), KERNEL_POINTS_PER_RANGE)?;
    let mut o = Outcome::new(json!({
        "e0": c.modes.e0(),
        "gap": c.modes.gap(),
        "gap_scaled": c.modes.gap_scaling(point.eps),
        "chi_quartic": c.modes.chi_quartic(),
        "l_chi_sq": c.lchi2,
        "b": c.b,
        "regime": cfg.scaling.regime,
        "mu": point.mu(),
        "a": point.a(),
        "kernel_mass": kernel.mass,
        "vgeom_max_abs": vgeom.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    }));
    o.series.push(Series::columns("coeffs_vgeom", &["x", "vgeom"], &[&c.frame.x, &vgeom]));
    o.series.push(Series::columns("coeffs_kernel", &["x", "kernel"], &[&kernel.x, &kernel.values]));
    let vg = c.frame.x.iter().zip(&vgeom).map(|(&x, &v)| (x, v)).collect();
    o.plots.push(LinePlot::new("coeffs_vgeom", "geometric potential", "x", "V_geom").with("V_geom", vg));
    let kp = kernel.x.iter().zip(&kernel.values).map(|(&x, &v)| (x, v)).collect();
    o.plots.push(LinePlot::new("coeffs_kernel", "effective kernel", "x", "w0(x)").with("w0", kp));
    Ok(o)
}

fn evolve_cmd(cfg: &RunConfig) -> CliResult<Outcome> {
    let e = &cfg.evolve;
    let c = coefficients(cfg, 1)?;
    let x = nls::grid(e.half_width, e.grid);
    let mut v = cfg.potential.external.sample(&x);
    if e.geometric {
        let g = vgeom_on(cfg, &c.frame, c.lchi2, &x)?;
        v.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    let mut pot = Potential1D::stationary(v);
    if let Some(DriveBlock { profile, amplitude, frequency }) = &cfg.potential.drive {
        pot = pot.with_drive(profile.sample(&x), *amplitude, *frequency);
    }
    let w0 = initial_wave(&e.initial, e.half_width, e.grid, &pot.static_part)?;
    let opts = EvolveOptions { integrator: e.integrator, kinetic: e.kinetic, record_every: e.record_every };
    let traj = nls::evolve(&w0, &pot, c.b, e.dt, e.t_end, opts)?;
    let r = &traj.reports;
    let (m0, e0) = (r[0].mass, r[0].energy);
    let mass_drift = r.iter().map(|q| (q.mass - m0).abs()).fold(0.0, f64::max) / e.t_end;
    let energy_drift = r.iter().map(|q| ((q.energy - e0) / e0.abs().max(1e-300)).abs()).fold(0.0, f64::max);
    let rate_defect = if traj.frames.len() >= 3 { Some(energy_drift_check(&traj, &pot, c.b)?) } else { None };
    let sobolev_failures = traj.frames.iter().map(sobolev_check).filter(|s| !(s.chain_ok && s.product_ok)).count();
    let last = traj.frames.last().unwrap();
    let mut o = Outcome::new(json!({
        "b": c.b,
        "static": pot.is_static(),
        "frames": traj.frames.len(),
        "mass_drift_per_time": mass_drift,
        "energy_initial": e0,
        "energy_final": r[r.len() - 1].energy,
        "energy_relative_drift": energy_drift,
        "energy_rate_defect": rate_defect,
        "sobolev_failures": sobolev_failures,
        "boundary_mass_final": last.boundary_mass(),
    }));
    let col = |f: fn(&nls::EnergyReport) -> f64| r.iter().map(f).collect::<Vec<f64>>();
    let (t, mass, en, h1, h2, linf) = (col(|q| q.t), col(|q| q.mass), col(|q| q.energy), col(|q| q.h1), col(|q| q.h2), col(|q| q.linf));
    o.series.push(Series::columns("evolve_reports", &["t", "mass", "energy", "h1", "h2", "linf"], &[&t, &mass, &en, &h1, &h2, &linf]));
    let xs = last.grid();
    let re: Vec<f64> = last.psi.iter().map(|c| c.re).collect();
    let im: Vec<f64> = last.psi.iter().map(|c| c.im).collect();
    let dens: Vec<f64> = last.psi.iter().map(|c| c.norm_sqr()).collect();
    o.series.push(Series::columns("evolve_final", &["x", "re", "im", "density"], &[&xs, &re, &im, &dens]));
    o.plots.push(LinePlot::new("evolve_energy", "effective energy", "t", "E").with("E", t.iter().copied().zip(en.iter().copied()).collect()));
    o.plots.push(LinePlot::new("evolve_density", "final density", "x", "|Phi|^2").with("|Phi|^2", xs.iter().copied().zip(dens).collect()));
    Ok(o)
}

fn converge_inputs(cfg: &RunConfig) -> CliResult<(Coefficients, Option<Vec<f64>>)> {
    let c = coefficients(cfg, cfg.converge.modes)?;
    let x = nls::grid(cfg.converge.half_width, cfg.converge.sites);
    let vg = vgeom_on(cfg, &c.frame, c.lchi2, &x)?;
    let vg = vg.iter().any(|v| *v != 0.0).then_some(vg);
    Ok((c, vg))
}

fn series_table(prefix: &str, s: &ConvergeSeries) -> Series {
    Series::columns(
        format!("{prefix}_N{}", s.particles),
        &["t", "trace1", "alpha_m", "alpha_xi", "excitation", "energy_psi", "energy_phi", "g"],
        &[&s.times, &s.trace1, &s.alpha_m, &s.alpha_xi, &s.excitation, &s.energy_psi, &s.energy_phi, &s.g],
    )
}

fn final_scalars(s: &ConvergeSeries) -> Value {
    let last = |v: &[f64]| v.last().copied();
    json!({
        "particles": s.particles,
        "eps": s.eps,
        "mu": s.mu,
        "b": s.b,
        "trace1": last(&s.trace1),
        "alpha_m": last(&s.alpha_m),
        "alpha_xi": last(&s.alpha_xi),
        "excitation": last(&s.excitation),
        "energy_psi": last(&s.energy_psi),
        "energy_phi": last(&s.energy_phi),
        "g": last(&s.g),
    })
}

/// Recorded quantities of a dynamics comparison; one plot each, plus the
/// trace distance against N.
pub const DYNAMICS_PLOTS: [&str; 6] = ["trace1", "alpha_m", "alpha_xi", "excitation", "energy", "g"];

fn dynamics_plots(prefix: &str, report: &ConvergeReport) -> Vec<LinePlot> {
    let per_n = |name: &str, title: &str, f: fn(&ConvergeSeries) -> &Vec<f64>| {
        report.series.iter().fold(LinePlot::new(&format!("{prefix}_{name}"), title, "t", name), |p, s| {
            p.with(format!("N={}", s.particles), s.times.iter().copied().zip(f(s).iter().copied()).collect())
        })
    };
    let mut energy = LinePlot::new(&format!("{prefix}_energy"), "many-body vs effective energy", "t", "energy per particle");
    for s in &report.series {
        energy = energy
            .with(format!("E_psi N={}", s.particles), s.times.iter().copied().zip(s.energy_psi.iter().copied()).collect())
            .with(format!("E_Phi N={}", s.particles), s.times.iter().copied().zip(s.energy_phi.iter().copied()).collect());
    }
    vec![
        per_n("trace1", "trace distance of the one-body density", |s| &s.trace1),
        per_n("alpha_m", "alpha_m", |s| &s.alpha_m),
        per_n("alpha_xi", "alpha_xi", |s| &s.alpha_xi),
        per_n("excitation", "transverse excitation probability", |s| &s.excitation),
        energy,
        per_n("g", "a-priori energy bound g(t)", |s| &s.g),
    ]
}

fn manybody_cmd(cfg: &RunConfig) -> CliResult<Outcome> {
    let (c, vg) = converge_inputs(cfg)?;
    let point = ScalingPoint::new(cfg.manybody.particles as f64, cfg.geometry.eps, cfg.scaling.beta)?;
    let mut plan = cfg.converge.clone();
    plan.particles = vec![cfg.manybody.particles];
    plan.beta = cfg.scaling.beta;
    plan.xi = cfg.scaling.xi;
    let report = compare_dynamics(&plan, &[point], &c.modes, &cfg.potential.pair, vg.as_deref(), cfg.scaling.regime)?;
    let s = &report.series[0];
    let mut o = Outcome::new(json!({ "final": final_scalars(s), "regime": report.regime }));
    o.series.push(series_table("manybody", s));
    o.plots = dynamics_plots("manybody", &report);
    Ok(o)
}

fn converge_cmd(cfg: &RunConfig) -> CliResult<Outcome> {
    let (c, vg) = converge_inputs(cfg)?;
    let plan = &cfg.converge;
    let report = converge(plan, &c.modes, &cfg.potential.pair, vg.as_deref(), cfg.scaling.regime)?;
    let points = plan_points(plan)?;
    let class = if points.len() >= 4 { Some(classify_sequence(&points)?.label()) } else { None };
    let mut o = Outcome::new(json!({
        "regime": report.regime,
        "classification": class,
        "trace1_decreasing": report.decreasing,
        "final": report.series.iter().map(final_scalars).collect::<Vec<_>>(),
    }));
    for s in &report.series {
        o.series.push(series_table("converge", s));
    }
    let n: Vec<f64> = report.series.iter().map(|s| s.particles as f64).collect();
    let tr: Vec<f64> = report.series.iter().map(|s| *s.trace1.last().unwrap()).collect();
    o.series.push(Series::columns("converge_final", &["N", "trace1"], &[&n, &tr]));
    o.plots = dynamics_plots("converge", &report);
    o.plots.push(LinePlot::new("converge_trace_vs_n", "final trace distance against N", "N", "trace1").with("t = T", n.into_iter().zip(tr).collect()));
    Ok(o)
}

/// Checks that belong to this crate rather than to the library.
pub const CLI_CHECKS: usize = 2;
/// Every invariant of every module; asserted on each verify run.
pub const EXPECTED_CHECKS: usize = CORE_CHECKS + CLI_CHECKS;

fn cli_outcome(name: &'static str, r: CliResult<Measure>) -> CheckOutcome {
    let (m, error) = match r {
        Ok(m) => (m, None),
        Err(e) => (Measure { value: f64::NAN, lower: None, upper: None, pass: false }, Some(e.to_string())),
    };
    CheckOutcome { module: "cli", name, value: m.value, lower: m.lower, upper: m.upper, pass: m.pass, error }
}

fn small_config() -> RunConfig {
    let mut c = RunConfig::default();
    c.cross_section.resolution = 32;
    c.converge.particles = vec![2, 3];
    c.converge.t_end = 0.2;
    c.converge.records = 2;
    c
}

/// Scalars and series of two identical runs must agree bit for bit.
fn determinism_check() -> CliResult<Measure> {
    let cfg = small_config();
    let mut mismatches = 0;
    for cmd in [Command::Coeffs, Command::Converge] {
        let a = execute(cmd, &cfg)?;
        let b = execute(cmd, &cfg)?;
        mismatches += (serde_json::to_string(&a.scalars)? != serde_json::to_string(&b.scalars)?) as usize;
        mismatches += (a.series != b.series) as usize;
    }
    Ok(Measure::count(mismatches))
}

/// Every meaningful edit changes the digest; formatting, key order and the
/// output root do not.
fn digest_check() -> CliResult<Measure> {
    let base = RunConfig::default();
    let d0 = base.digest();
    let edits: Vec<fn(&mut RunConfig)> = vec![
        |c| c.geometry.eps = 0.2,
        |c| c.geometry.curve.t_max = 9.0,
        |c| c.geometry.twist = waveguide_bec::geometry::TwistSpec::Linear { rate: 0.1, offset: 0.0 },
        |c| c.geometry.nodes = 512,
        |c| c.cross_section.resolution = 48,
        |c| c.modes = 3,
        |c| c.scaling.n = 999.0,
        |c| c.scaling.beta = 0.2,
        |c| c.scaling.xi = 0.1,
        |c| c.scaling.regime = waveguide_bec::scaling::Regime::Strong,
        |c| c.potential.pair.amplitude *= 2.0,
        |c| c.potential.external = waveguide_bec::nls::Profile::Zero,
        |c| c.evolve.dt = 5e-4,
        |c| c.evolve.geometric = false,
        |c| c.manybody.particles = 4,
        |c| c.converge.particles = vec![2, 3, 4],
        |c| c.converge.alpha = 0.5,
    ];
    let mut bad = 0;
    for edit in &edits {
        let mut c = base.clone();
        edit(&mut c);
        bad += (c.digest() == d0) as usize;
    }
    let mut moved = base.clone();
    moved.out = Some("elsewhere".into());
    bad += (moved.digest() != d0) as usize;
    let via_json = RunConfig::from_json(&serde_json::to_string_pretty(&base)?)?;
    bad += (via_json.digest() != d0) as usize;
    let shuffled = RunConfig::from_toml("[scaling]\nxi = 0.2\nn = 1000.0\n\n[geometry]\nnodes = 1024\neps = 0.1\n")?;
    bad += (shuffled.digest() != d0) as usize;
    Ok(Measure::count(bad))
}

fn ledger() -> CliResult<Ledger> {
    let mut led = Ledger::default();
    for (n, d, seed) in [(1, 3, 1), (2, 3, 2), (2, 6, 3), (3, 4, 4), (3, 6, 5)] {
        led.merge(&prel_suite(n, d, seed)?);
        if n >= 2 {
            led.merge(&weight_algebra_suite(n, d, seed)?);
        }
    }
    Ok(led)
}

fn verify_cmd() -> CliResult<Outcome> {
    let core = registry();
    let mut results = run_checks(&core);
    results.push(cli_outcome("determinism", determinism_check()));
    results.push(cli_outcome("config_digest", digest_check()));
    if core.len() != CORE_CHECKS || results.len() != EXPECTED_CHECKS {
        return Err(CliError::Verification(format!("registry has {} checks, expected {EXPECTED_CHECKS}", results.len())));
    }
    let led = ledger()?;
    let passed = results.iter().filter(|r| r.pass).count();
    let mut checks = Map::new();
    for r in &results {
        checks.insert(format!("{}/{}", r.module, r.name), serde_json::to_value(r)?);
    }
    let ledger: Map<String, Value> = led.entries.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let all_pass = passed == results.len() && led.passes(waveguide_bec::condensation::HARD_TOL);
    let mut o = Outcome::new(json!({
        "total": results.len(),
        "passed": passed,
        "all_pass": all_pass,
        "checks": checks,
        "ledger": ledger,
    }));
    o.passed = all_pass;
    let idx: Vec<f64> = (0..results.len()).map(|i| i as f64).collect();
    let vals: Vec<f64> = results.iter().map(|r| r.value).collect();
    let pass: Vec<f64> = results.iter().map(|r| r.pass as u8 as f64).collect();
    o.series.push(Series::columns("verify", &["index", "value", "pass"], &[&idx, &vals, &pass]));
    Ok(o)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_distinct() {
        let mut n: Vec<_> = Command::ALL.iter().map(|c| c.name()).collect();
        n.sort();
        n.dedup();
        assert_eq!(n.len(), 7);
    }

    #[test]
    fn guide_coordinates() {
        let mut cfg = RunConfig::default();
        let f = build_frame(&cfg).unwrap();
        assert_eq!(guide_coords(&f, &[-8.0, 0.0, 7.5]).unwrap(), vec![-8.0, 0.0, 7.5]);
        assert!(guide_coords(&f, &[9.0]).is_err());
        cfg.geometry.curve = waveguide_bec::geometry::CurveSpec::circle(1.0);
        let f = build_frame(&cfg).unwrap();
        let g = guide_coords(&f, &[10.0]).unwrap()[0];
        assert!((0.0..2.0 * std::f64::consts::PI).contains(&g));
    }

    #[test]
    fn cli_checks_pass() {
        assert!(determinism_check().unwrap().pass);
        assert!(digest_check().unwrap().pass);
    }
}
