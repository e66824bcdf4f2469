//! Building the configured solution and running pipeline steps on it.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use twistorlab::energy_residue::{
    energy, energy_density, energy_with_id, higgs_pair, moment_map, residue_rhs, EnergyReport, TangentPair,
};
use twistorlab::harmonic_builders::{
    family_from_uq, random_constant_gauge, random_lift_perturbation, slowest_initial_value, solve_constant,
    solve_gordon_strip, SolutionData, StripSpec, Target,
};
use twistorlab::lightcone_frames::{
    dual_so5_equivalence, embed_hatf, fingerprint, fingerprint_deviation, integrate_frame, mean_curvature_sphere,
    reality_defect, so5_connection_check, willmore_compare,
};
use twistorlab::surface_grid::I;
use twistorlab::transforms::{
    block_identity_residual, dual_surface, kernel_splitting, line_curvature_integral, line_degree, twist, LineSplitting,
};
use twistorlab::{Involution, LambdaFamily, C64};

use crate::config::{DomainSpec, ExperimentConfig, Format, Solver, Step};
use crate::report::{Check, Report, Table};
use crate::CliError;

pub mod refs {
    pub const ENERGY: &str = "energy functional (1/2πi)∫tr(Φ∧Ψ)";
    pub const REALITY: &str = "energy is real on real sections";
    pub const SIGN: &str = "energy sign: E > 0 for S³ families, E ≤ 0 density for H³ families";
    pub const TWIST: &str = "twisted energy E(twist) = 2E − deg L";
    pub const DEGREE: &str = "line degree via Chern–Weil integral";
    pub const BLOCK: &str = "block identity F^L + φ∧ψ + α∧β = 0";
    pub const POSITIVITY: &str = "positivity E(twist) > |deg L|";
    pub const DUAL: &str = "dual surface energy E(dual) = E − deg L";
    pub const RESIDUE: &str = "residue formula E = (i/2π)(μ − ∫tr Φ∧(γ_lift − γ_ref))";
    pub const DEGENERATE: &str = "residue formula on twistor lines returns μ";
    pub const FLATNESS: &str = "flatness of the λ-family";
    pub const TRANSPORT: &str = "path independence of parallel transport";
    pub const LIGHTCONE: &str = "lightcone condition q(f̂) = 0";
    pub const FRAME_REALITY: &str = "frame reality (F^{-1})^{-1} = conj(F^1)";
    pub const SO5: &str = "ψ-frame connection equals the so(5) matrices";
    pub const DUAL_SO5: &str = "dual-surface connection is gauge equivalent to the so(5) family";
    pub const WILLMORE_ALGEBRAIC: &str = "Willmore integrand: algebraic = −2i tr(Φ̂∧Ψ̂)";
    pub const WILLMORE_GEOMETRIC: &str = "Willmore integrand: algebraic = (H² − K + K̄) dA";
    pub const MINIMAL: &str = "minimal surface H = 0";
    pub const AREA: &str = "Area = −4π·energy";
    pub const METRIC: &str = "induced metric 4e^{2u}|dz|²";
    pub const SPHERE: &str = "mean curvature sphere has signature (3,1)";
    pub const SPHERE_NORMAL: &str = "mean curvature sphere contains the normal";
    pub const FINGERPRINT: &str = "reality of holonomy fingerprints";
    pub const ISOMETRY: &str = "Ψ is an isometry onto the lightcone model";
    pub const CONVERGENCE: &str = "convergence order under grid refinement";
}

/// The fixed λ-samples used by fingerprints and so(5) checks.
pub fn lambda_samples() -> Vec<C64> {
    (0..8)
        .map(|k| C64::from_polar(if k % 2 == 0 { 0.8 } else { 1.25 }, 0.3 + 0.7 * k as f64))
        .collect()
}

/// Configured solution, the family built from it, and the family after the
/// configured λ-independent gauges.
pub struct Experiment {
    pub solution: SolutionData,
    pub base_family: LambdaFamily,
    pub family: LambdaFamily,
}

pub fn build(config: &ExperimentConfig) -> Result<Experiment, CliError> {
    let spec = &config.solution;
    let q0 = C64::new(spec.q[0], spec.q[1]);
    let solution = match (spec.solver, config.domain) {
        (Solver::Constant, d) => {
            let domain = d.build()?;
            let u0 = solve_constant(q0, spec.target)?;
            SolutionData::constant(&domain, u0, q0, spec.target)?
        }
        (
            Solver::Strip,
            DomainSpec::Patch {
                x_range,
                y_range,
                nx,
                ny,
            },
        ) => {
            let strip = StripSpec {
                q0,
                u_init: spec.u_init.unwrap_or_else(|| slowest_initial_value(q0, spec.target)),
                du_init: spec.du_init,
                x_range,
                y_range,
                nx,
                ny,
                steps: spec.steps.unwrap_or((4 * (nx - 1)).max(256)),
            };
            solve_gordon_strip(&strip, spec.target)?
        }
        (Solver::Strip, DomainSpec::Torus { .. }) => {
            return Err(CliError::Config("the strip solver needs a patch domain".into()))
        }
    };
    let base_family = family_from_uq(&solution)?;
    let mut family = base_family.clone();
    for seed in &spec.gauge_seeds {
        family = family.gauge_apply(&random_constant_gauge(family.domain(), *seed)?, 1)?;
    }
    Ok(Experiment {
        solution,
        base_family,
        family,
    })
}

/// Largest curvature coefficient over the powers a family determines completely.
pub fn flatness(fam: &LambdaFamily) -> f64 {
    if fam.truncation_tail() == 0.0 {
        fam.max_flatness_through(i32::MAX)
    } else {
        fam.max_flatness_through(fam.k_max() + fam.k_min())
    }
}

/// Scalars, checks and plot data of one pipeline step.
#[derive(Default)]
pub struct StepOutput {
    pub scalars: Vec<(String, String, f64, Option<f64>)>,
    pub checks: Vec<Check>,
    pub tables: Vec<Table>,
}

impl StepOutput {
    fn scalar(&mut self, name: &str, reference: &str, value: f64, budget: Option<f64>) {
        self.scalars.push((name.into(), reference.into(), value, budget));
    }
}

struct Context<'a> {
    config: &'a ExperimentConfig,
    seed: u64,
    exp: &'a Experiment,
    energy: EnergyReport,
}

impl Context<'_> {
    fn tol(&self, name: &str) -> f64 {
        self.config.tolerance(name)
    }

    fn is_torus(&self) -> bool {
        self.exp.family.domain().is_torus()
    }

    fn target(&self) -> Target {
        self.exp.solution.target
    }

    /// Kernel splitting of the Higgs field and `deg L` (torus) or the
    /// Chern–Weil curvature integral of `L` (patch).
    fn splitting(&self) -> Result<(LineSplitting, f64), CliError> {
        let fam = &self.exp.family;
        let (phi, _) = higgs_pair(fam)?;
        let split = kernel_splitting(&phi)?;
        let deg = if self.is_torus() {
            line_degree(fam, &split)?
        } else {
            line_curvature_integral(fam, &split)?
        };
        Ok((split, deg))
    }
}

fn energy_step(ctx: &Context) -> Result<StepOutput, CliError> {
    let mut out = StepOutput::default();
    let e = &ctx.energy;
    out.scalar("energy_re", refs::ENERGY, e.energy_re, Some(e.quad_err + e.trunc_err));
    out.scalar("energy_im", refs::ENERGY, e.energy_im, Some(e.quad_err + e.trunc_err));
    out.checks.push(Check::below(
        "energy_imag",
        refs::REALITY,
        e.energy_im.abs(),
        ctx.tol("energy_imag"),
    ));
    let density = energy_density(&ctx.exp.family)?;
    let margin = match ctx.target() {
        Target::S3 => e.energy_re,
        Target::H3 => -density.iter().map(|d| d.re).fold(f64::NEG_INFINITY, f64::max),
    };
    out.checks
        .push(Check::above("energy_sign", refs::SIGN, margin, ctx.tol("energy_sign")));
    let domain = ctx.exp.family.domain();
    let mut table = Table::new("energy_density.csv", &["x", "y", "density_re", "density_im"]);
    for (idx, d) in density.iter().enumerate() {
        let z = domain.point_at(idx);
        table.rows.push(vec![z.re, z.im, d.re, d.im]);
    }
    out.tables.push(table);
    Ok(out)
}

fn twist_step(ctx: &Context) -> Result<StepOutput, CliError> {
    let mut out = StepOutput::default();
    let (split, deg) = ctx.splitting()?;
    let tw = twist(&ctx.exp.family, &split)?;
    let et = energy_with_id(&tw, "twist")?;
    let e = ctx.energy.energy();
    out.scalar(
        "energy_twist_re",
        refs::TWIST,
        et.energy_re,
        Some(et.quad_err + et.trunc_err),
    );
    out.scalar(
        "energy_twist_im",
        refs::TWIST,
        et.energy_im,
        Some(et.quad_err + et.trunc_err),
    );
    let deg_name = if ctx.is_torus() {
        "line_degree"
    } else {
        "line_curvature_integral"
    };
    out.scalar(deg_name, refs::DEGREE, deg, None);
    let residual = (et.energy() - (e * 2.0 - deg)).norm();
    out.scalar("twist_relation_residual", refs::TWIST, residual, None);
    out.checks.push(Check::below(
        "twist_energy_relation",
        refs::TWIST,
        residual,
        ctx.tol("twist_energy_relation"),
    ));
    if ctx.is_torus() {
        let frac = (deg - deg.round()).abs();
        out.checks.push(Check::below(
            "degree_integrality",
            refs::DEGREE,
            frac,
            ctx.tol("degree_integrality"),
        ));
    }
    let block = block_identity_residual(&tw, &split)?;
    out.checks.push(Check::below(
        "block_identity",
        refs::BLOCK,
        block,
        ctx.tol("block_identity"),
    ));
    if ctx.target() == Target::S3 {
        let margin = et.energy_re - deg.abs();
        out.checks.push(Check::above(
            "twist_positivity",
            refs::POSITIVITY,
            margin,
            ctx.tol("twist_positivity"),
        ));
    }
    Ok(out)
}

fn dual_step(ctx: &Context) -> Result<StepOutput, CliError> {
    let mut out = StepOutput::default();
    let (split, deg) = ctx.splitting()?;
    let hat = dual_surface(&ctx.exp.family, &split)?;
    let ed = energy_with_id(&hat, "dual")?;
    out.scalar(
        "energy_dual_re",
        refs::DUAL,
        ed.energy_re,
        Some(ed.quad_err + ed.trunc_err),
    );
    out.scalar(
        "energy_dual_im",
        refs::DUAL,
        ed.energy_im,
        Some(ed.quad_err + ed.trunc_err),
    );
    let residual = (ed.energy() - (ctx.energy.energy() - deg)).norm();
    out.scalar("dual_relation_residual", refs::DUAL, residual, None);
    out.checks.push(Check::below(
        "dual_energy_relation",
        refs::DUAL,
        residual,
        ctx.tol("dual_energy_relation"),
    ));
    Ok(out)
}

/// `|E − (i/2π)·rhs|` with `γ_lift = Ψ`, `γ_ref = Φ*` and `μ = −∫tr(Φ∧Φ*)`.
pub fn residue_residual(fam: &LambdaFamily) -> Result<(f64, C64), CliError> {
    let (phi, psi) = higgs_pair(fam)?;
    let lift = TangentPair::from_gamma(psi)?;
    let reference = TangentPair::from_gamma(phi.adjoint())?;
    let mu = moment_map(&phi)?;
    let rhs = residue_rhs(&phi, &lift, &reference, mu)?;
    let e = energy(fam)?.energy();
    Ok(((e - rhs * I / (2.0 * PI)).norm(), mu))
}

/// `|rhs − μ|` when the lift coincides with the reference slot.
pub fn degenerate_residue(fam: &LambdaFamily) -> Result<f64, CliError> {
    let (phi, _) = higgs_pair(fam)?;
    let reference = TangentPair::from_gamma(phi.adjoint())?;
    let mu = moment_map(&phi)?;
    Ok((residue_rhs(&phi, &reference, &reference, mu)? - mu).norm())
}

fn residue_step(ctx: &Context) -> Result<StepOutput, CliError> {
    let mut out = StepOutput::default();
    let fam = &ctx.exp.family;
    let (residual, mu) = residue_residual(fam)?;
    out.scalar("moment_map_re", refs::RESIDUE, mu.re, None);
    out.scalar("moment_map_im", refs::RESIDUE, mu.im, None);
    out.checks.push(Check::below(
        "residue_identity",
        refs::RESIDUE,
        residual,
        ctx.tol("residue_identity"),
    ));
    let g = random_lift_perturbation(fam.domain(), ctx.seed, 6, 8)?;
    let (perturbed, _) = residue_residual(&fam.gauge_apply(&g, 8)?)?;
    out.checks.push(Check::below(
        "residue_identity_perturbed_lift",
        refs::RESIDUE,
        perturbed,
        ctx.tol("residue_identity"),
    ));
    out.checks.push(Check::exact(
        "residue_degenerate",
        refs::DEGENERATE,
        degenerate_residue(fam)?,
    ));
    Ok(out)
}

fn lightcone_torus(ctx: &Context, out: &mut StepOutput) -> Result<(), CliError> {
    let fam = &ctx.exp.family;
    let samples = lambda_samples();
    let tol = ctx.tol("fingerprint_reality");
    let rho = fingerprint_deviation(fam, Involution::Rho, &samples)?;
    out.checks
        .push(Check::below("fingerprint_rho", refs::FINGERPRINT, rho, tol));
    let (split, _) = ctx.splitting()?;
    let tw = twist(fam, &split)?;
    let tau = fingerprint_deviation(&tw, Involution::Tau, &samples)?;
    out.checks
        .push(Check::below("fingerprint_twist_tau", refs::FINGERPRINT, tau, tol));
    let n = fingerprint_deviation(&tw, Involution::N, &samples)?;
    out.checks
        .push(Check::below("fingerprint_twist_n", refs::FINGERPRINT, n, tol));
    let traces = fingerprint(fam, &samples)?;
    let mut table = Table::new(
        "fingerprints.csv",
        &[
            "lambda_re",
            "lambda_im",
            "trace_x_re",
            "trace_x_im",
            "trace_y_re",
            "trace_y_im",
        ],
    );
    for (l, t) in samples.iter().zip(&traces) {
        table.rows.push(vec![l.re, l.im, t[0].re, t[0].im, t[1].re, t[1].im]);
    }
    out.tables.push(table);
    Ok(())
}

fn lightcone_patch(ctx: &Context, out: &mut StepOutput) -> Result<(), CliError> {
    let sol = &ctx.exp.solution;
    let fam = &ctx.exp.base_family;
    let domain = *fam.domain();
    let base = (domain.nx / 2, domain.ny / 2);
    let (fp, fm) = rayon::join(
        || integrate_frame(fam, C64::new(1.0, 0.0), base),
        || integrate_frame(fam, C64::new(-1.0, 0.0), base),
    );
    let (fp, fm) = (fp?, fm?);
    let path = fp.path_residual().max(fm.path_residual());
    out.checks.push(Check::below(
        "transport_path",
        refs::TRANSPORT,
        path,
        ctx.tol("transport_path"),
    ));
    out.checks.push(Check::below(
        "frame_reality",
        refs::FRAME_REALITY,
        reality_defect(&fp, &fm)?,
        ctx.tol("frame_reality"),
    ));
    let hatf = embed_hatf(&fp, &fm)?;
    out.checks.push(Check::below(
        "lightcone_q",
        refs::LIGHTCONE,
        hatf.max_q(),
        ctx.tol("lightcone_q"),
    ));
    let samples = lambda_samples();
    let so5 = so5_connection_check(sol, &fp, &samples)?;
    out.checks.push(Check::below(
        "so5_connection",
        refs::SO5,
        so5,
        ctx.tol("so5_connection"),
    ));
    let split = kernel_splitting(&higgs_pair(fam)?.0)?;
    let famhat = dual_surface(fam, &split)?;
    let dual = dual_so5_equivalence(sol, &famhat, &samples)?;
    out.checks
        .push(Check::below("dual_so5", refs::DUAL_SO5, dual, ctx.tol("dual_so5")));
    let w = willmore_compare(sol, &famhat, &hatf)?;
    out.scalar("metric_factor", refs::METRIC, w.metric_factor, Some(w.metric_deviation));
    out.scalar("area", refs::AREA, w.area, None);
    out.scalar("patch_energy", refs::AREA, w.energy, None);
    out.scalar("willmore_frame", refs::WILLMORE_ALGEBRAIC, w.willmore_frame, None);
    out.scalar("dual_energy", refs::WILLMORE_ALGEBRAIC, w.dual_energy, None);
    out.checks.push(Check::below(
        "metric_factor",
        refs::METRIC,
        (w.metric_factor - 4.0).abs(),
        ctx.tol("metric_factor"),
    ));
    out.checks.push(Check::below(
        "willmore_algebraic",
        refs::WILLMORE_ALGEBRAIC,
        w.max_algebraic_vs_frame,
        ctx.tol("willmore_algebraic"),
    ));
    out.checks.push(Check::below(
        "willmore_geometric",
        refs::WILLMORE_GEOMETRIC,
        w.max_algebraic_vs_geometric,
        ctx.tol("willmore_geometric"),
    ));
    out.checks.push(Check::below(
        "mean_curvature",
        refs::MINIMAL,
        w.max_mean_curvature,
        ctx.tol("mean_curvature"),
    ));
    out.checks.push(Check::below(
        "area_energy",
        refs::AREA,
        w.area_energy_gap(),
        ctx.tol("area_energy"),
    ));
    let sphere = mean_curvature_sphere(&hatf)?;
    let bad = sphere.signatures.iter().filter(|s| **s != (3, 1)).count();
    out.checks
        .push(Check::exact("sphere_signature", refs::SPHERE, bad as f64));
    out.checks.push(Check::below(
        "sphere_normal",
        refs::SPHERE_NORMAL,
        sphere.max_normal_component(&domain),
        ctx.tol("sphere_normal"),
    ));
    let mut table = Table::new(
        "willmore.csv",
        &["x", "y", "u", "integrand_a", "integrand_b", "integrand_c", "H", "K"],
    );
    for r in &w.rows {
        table.rows.push(vec![
            r.x,
            r.y,
            r.u,
            r.integrand_a,
            r.integrand_b,
            r.integrand_c,
            r.h,
            r.k,
        ]);
    }
    out.tables.push(table);
    Ok(())
}

fn lightcone_step(ctx: &Context) -> Result<StepOutput, CliError> {
    let mut out = StepOutput::default();
    if ctx.is_torus() {
        lightcone_torus(ctx, &mut out)?;
    } else {
        lightcone_patch(ctx, &mut out)?;
    }
    Ok(out)
}

/// Result of a pipeline run: the report and its plot tables.
pub struct RunOutput {
    pub report: Report,
    pub tables: Vec<Table>,
}

/// Run the configured pipeline. Steps run concurrently; the report lists
/// them in pipeline order.
pub fn run(config: &ExperimentConfig, seed: u64) -> Result<RunOutput, CliError> {
    let mut report = Report::new(&config.name, seed);
    let mut tables = Vec::new();
    if config.pipeline.is_empty() {
        return Ok(RunOutput { report, tables });
    }
    let exp = build(config)?;
    let ctx = Context {
        config,
        seed,
        exp: &exp,
        energy: energy_with_id(&exp.family, &config.name)?,
    };
    let outputs: Vec<Result<StepOutput, CliError>> = config
        .pipeline
        .par_iter()
        .map(|step| match step {
            Step::Energy => energy_step(&ctx),
            Step::Twist => twist_step(&ctx),
            Step::Dual => dual_step(&ctx),
            Step::Residue => residue_step(&ctx),
            Step::Lightcone => lightcone_step(&ctx),
        })
        .collect();
    for out in outputs {
        let out = out?;
        for (name, reference, value, budget) in out.scalars {
            report.push_scalar(&name, &reference, value, budget);
        }
        for c in out.checks {
            report.push_check(c);
        }
        tables.extend(out.tables);
    }
    Ok(RunOutput { report, tables })
}

/// Build the solution, check flatness, and write `solution.json` and `family.json`.
pub fn build_and_write(config: &ExperimentConfig, seed: u64, dir: &Path) -> Result<Report, CliError> {
    let exp = build(config)?;
    let mut report = Report::new(&config.name, seed);
    let u = exp.solution.u.component(0);
    let (umin, umax) = u.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
        (a.min(v.re), b.max(v.re))
    });
    report.push_scalar("u_min", refs::FLATNESS, umin, None);
    report.push_scalar("u_max", refs::FLATNESS, umax, None);
    let flat = flatness(&exp.family);
    report.push_scalar("flatness_residual", refs::FLATNESS, flat, None);
    report.push_check(Check::below(
        "flatness",
        refs::FLATNESS,
        flat,
        config.tolerance("flatness"),
    ));
    fs::create_dir_all(dir)?;
    fs::write(dir.join("solution.json"), exp.solution.to_json()?)?;
    fs::write(dir.join("family.json"), exp.family.to_json()?)?;
    write_outputs(
        config,
        &RunOutput {
            report: report.clone(),
            tables: Vec::new(),
        },
        dir,
    )?;
    Ok(report)
}

/// Write `report.json` and the CSV files requested by the config.
pub fn write_outputs(config: &ExperimentConfig, out: &RunOutput, dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)?;
    if config.output.formats.contains(&Format::Json) {
        out.report.write_json(dir)?;
    }
    if config.output.formats.contains(&Format::Csv) {
        out.report.write_csv(dir)?;
        for t in &out.tables {
            t.write(dir)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::BUNDLED;

    fn bundled(i: usize) -> ExperimentConfig {
        ExperimentConfig::from_toml(BUNDLED[i].1).unwrap()
    }

    #[test]
    fn empty_pipeline_gives_empty_passing_report() {
        let mut config = bundled(0);
        config.pipeline.clear();
        let out = run(&config, 0).unwrap();
        assert!(out.report.passed && out.report.checks.is_empty() && out.report.scalars.is_empty());
    }

    #[test]
    fn s3_twist_matches_module_identities() {
        let mut config = bundled(0);
        config.pipeline = vec![Step::Energy, Step::Twist, Step::Dual];
        config.solution.gauge_seeds.clear();
        let out = run(&config, 0).unwrap();
        let r = &out.report;
        assert!(r.passed, "{:?}", r.failed().collect::<Vec<_>>());
        // |q0|·Area/π with Area = 1, twist doubles it, deg L = 0.
        assert!((r.scalar("energy_re").unwrap() - 1.0 / PI).abs() < 1e-12);
        assert!((r.scalar("energy_twist_re").unwrap() - 2.0 / PI).abs() < 1e-12);
        assert!(r.scalar("line_degree").unwrap().abs() < 1e-12);
        assert!((r.scalar("energy_dual_re").unwrap() - 1.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn zero_tolerance_fails_the_check() {
        let mut config = bundled(0);
        config.pipeline = vec![Step::Twist];
        config.tolerances.insert("block_identity".into(), 0.0);
        let out = run(&config, 0).unwrap();
        assert!(!out.report.passed);
        assert_eq!(
            out.report.failed().map(|c| c.name.as_str()).collect::<Vec<_>>(),
            ["block_identity"]
        );
    }
}
