//! The acceptance verification suite: one entry per acceptance criterion.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use twistorlab::energy_residue::{
    energy, energy_density, energy_sigma, higgs_pair, moment_map, residue_rhs, TangentPair,
};
use twistorlab::harmonic_builders::{
    expm_traceless, family_from_uq, random_admissible_family, random_constant_gauge, random_lift_perturbation,
    slowest_initial_value, solve_constant, solve_gordon_strip, SolutionData, StripSpec, Target,
};
use twistorlab::lightcone_frames::{
    coordinate_q, dual_so5_equivalence, embed_hatf, fingerprint, fingerprint_deviation, integrate_frame, isometry_psi,
    mean_curvature_sphere, minkowski_form, minkowski_q, so5_connection_check, willmore_compare,
};
use twistorlab::transforms::{block_identity_residual, dual_surface, kernel_splitting, line_degree, twist};
use twistorlab::{Domain, GridField, Involution, LambdaFamily, Mat2, C64};

use crate::pipeline::{flatness, lambda_samples, refs, residue_residual};
use crate::report::{Check, SCHEMA_VERSION};
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    Fast,
    Full,
}

/// Deliberate corruptions that must make exactly one criterion fail.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Flip the sign of every S³ energy (criterion 2).
    EnergySign,
    /// Predict the twisted energy with the dual-surface relation (criterion 4).
    TwistRelation,
    /// Drop the complex conjugation from the fingerprint comparison (criterion 9).
    FingerprintConjugation,
}

impl Mutation {
    pub fn target(self) -> usize {
        match self {
            Mutation::EnergySign => 2,
            Mutation::TwistRelation => 4,
            Mutation::FingerprintConjugation => 9,
        }
    }
}

/// Grid sizes and sample counts of a suite level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelParams {
    pub torus_n: usize,
    pub gauge_k: i32,
    pub gauges: u64,
    /// Torus size for twisting spatially gauged families.
    pub twist_n: usize,
    pub admissible_n: usize,
    pub fingerprint_n: usize,
    pub strip_n: usize,
    /// Strip sizes of the flatness refinement study, each halving the spacing.
    pub strip_refinement: Vec<usize>,
    /// Strip sizes of the geometric-integrand refinement study. The
    /// integrand takes second differences of the surface, so its error
    /// reaches a rounding floor near 1e-10 at 129 points.
    pub geometric_refinement: Vec<usize>,
    /// Patch sizes of the pure-gauge transport study.
    pub transport_refinement: Vec<usize>,
}

impl LevelParams {
    pub fn of(level: Level) -> Self {
        match level {
            Level::Fast => LevelParams {
                torus_n: 64,
                gauge_k: 6,
                gauges: 100,
                twist_n: 128,
                admissible_n: 32,
                fingerprint_n: 32,
                strip_n: 129,
                strip_refinement: vec![65, 129],
                geometric_refinement: vec![33, 65],
                transport_refinement: vec![33, 65],
            },
            Level::Full => LevelParams {
                torus_n: 128,
                gauge_k: 8,
                gauges: 100,
                twist_n: 256,
                admissible_n: 64,
                fingerprint_n: 64,
                strip_n: 257,
                strip_refinement: vec![33, 65, 129, 257],
                geometric_refinement: vec![17, 33, 65],
                transport_refinement: vec![33, 65, 129],
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Criterion {
    pub id: usize,
    pub title: String,
    pub passed: bool,
    pub checks: Vec<Check>,
    /// Wall time; excluded from JSON so reports stay reproducible.
    #[serde(skip)]
    pub seconds: f64,
}

impl Criterion {
    pub fn line(&self) -> String {
        let worst = self
            .checks
            .iter()
            .find(|c| !c.passed)
            .or_else(|| self.checks.first())
            .map(|c| format!("{:.2e}", c.value))
            .unwrap_or_default();
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        format!(
            "[{:>2}] {}: {verdict} {worst} ({:.2} s)",
            self.id, self.title, self.seconds
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub level: Level,
    pub params: LevelParams,
    pub mutation: Option<Mutation>,
    pub criteria: Vec<Criterion>,
    pub passed: bool,
}

impl Summary {
    pub fn table(&self) -> String {
        let mut s = String::new();
        for c in &self.criteria {
            s += &c.line();
            s.push('\n');
            for check in &c.checks {
                s += "       ";
                s += &check.describe();
                s.push('\n');
            }
        }
        s += if self.passed {
            "all criteria PASS\n"
        } else {
            "some criteria FAIL\n"
        };
        s
    }

    pub fn criterion(&self, id: usize) -> Option<&Criterion> {
        self.criteria.iter().find(|c| c.id == id)
    }
}

struct Suite {
    p: LevelParams,
    mutation: Option<Mutation>,
}

const TITLES: [&str; 10] = [
    "energy is independent of the lift",
    "energy sign dichotomy",
    "energy reality",
    "twisted energy relation",
    "dual surface energy relation",
    "residue formula",
    "lightcone structure",
    "Willmore integrands",
    "reality of twisted fingerprints",
    "convergence under refinement",
];

pub fn run(level: Level, mutation: Option<Mutation>) -> Result<Summary, CliError> {
    run_criteria(level, mutation, &(1..=10).collect::<Vec<_>>())
}

/// Run the listed criteria (ids 1 to 10) concurrently; the summary keeps their order.
pub fn run_criteria(level: Level, mutation: Option<Mutation>, ids: &[usize]) -> Result<Summary, CliError> {
    if let Some(bad) = ids.iter().find(|id| !(1..=10).contains(*id)) {
        return Err(CliError::Config(format!("no acceptance criterion {bad}")));
    }
    let suite = Suite {
        p: LevelParams::of(level),
        mutation,
    };
    let results: Vec<Result<Criterion, CliError>> = ids
        .par_iter()
        .copied()
        .map(|id| {
            let start = Instant::now();
            let checks = match id {
                1 => suite.lift_independence(),
                2 => suite.sign_dichotomy(),
                3 => suite.reality(),
                4 => suite.twist_relation(),
                5 => suite.dual_relation(),
                6 => suite.residue(),
                7 => suite.lightcone(),
                8 => suite.willmore(),
                9 => suite.fingerprints(),
                _ => suite.convergence(),
            }
            .map_err(|e| CliError::Criterion(id, Box::new(e)))?;
            Ok(Criterion {
                id,
                title: TITLES[id - 1].into(),
                passed: checks.iter().all(|c| c.passed),
                checks,
                seconds: start.elapsed().as_secs_f64(),
            })
        })
        .collect();
    let criteria = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(Summary {
        schema_version: SCHEMA_VERSION,
        level,
        params: suite.p,
        mutation,
        passed: criteria.iter().all(|c| c.passed),
        criteria,
    })
}

fn s3_family(domain: &Domain, q0: C64) -> Result<LambdaFamily, CliError> {
    let u0 = solve_constant(q0, Target::S3)?;
    Ok(family_from_uq(&SolutionData::constant(domain, u0, q0, Target::S3)?)?)
}

/// The H³ strip solution with `q0 = 0.1` on `[0, 1/2]²`.
pub fn h3_strip(n: usize) -> Result<SolutionData, CliError> {
    let q0 = C64::new(0.1, 0.0);
    let spec = StripSpec {
        q0,
        u_init: slowest_initial_value(q0, Target::H3),
        du_init: 0.0,
        x_range: [0.0, 0.5],
        y_range: [0.0, 0.5],
        nx: n,
        ny: n,
        steps: (4 * (n - 1)).max(256),
    };
    Ok(solve_gordon_strip(&spec, Target::H3)?)
}

fn max_over<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    values.into_iter().fold(0.0, f64::max)
}

/// Smallest ratio of consecutive errors.
fn min_ratio(errors: &[f64]) -> f64 {
    errors.windows(2).map(|w| w[0] / w[1]).fold(f64::INFINITY, f64::min)
}

impl Suite {
    fn torus(&self) -> Result<Domain, CliError> {
        Ok(Domain::unit_torus(self.p.torus_n)?)
    }

    /// S³ constant family and two versions gauged by λ-independent gauges.
    fn s3_variants(&self) -> Result<Vec<LambdaFamily>, CliError> {
        let domain = Domain::unit_torus(self.p.twist_n)?;
        let fam = s3_family(&domain, C64::new(1.0, 0.0))?;
        let mut out = vec![fam.clone()];
        for seed in [1, 2] {
            out.push(fam.gauge_apply(&random_constant_gauge(&domain, seed)?, 1)?);
        }
        Ok(out)
    }

    fn lift_independence(&self) -> Result<Vec<Check>, CliError> {
        let domain = self.torus()?;
        let fam = s3_family(&domain, C64::new(1.0, 0.0))?;
        let k = self.p.gauge_k;
        let k_top = k + 2;
        let mut energies = (0..self.p.gauges)
            .into_par_iter()
            .map(|seed| -> Result<C64, CliError> {
                let g0 = random_constant_gauge(&domain, seed)?;
                let g = random_lift_perturbation(&domain, seed, k, k_top)?;
                // The energy reads the λ^{-1} and λ¹ coefficients only.
                let gauged = fam.gauge_apply(&g0, 1)?.gauge_apply(&g, 1)?;
                Ok(energy(&gauged)?.energy())
            })
            .collect::<Result<Vec<_>, _>>()?;
        energies.push(energy(&fam)?.energy());
        let mean = energies.iter().sum::<C64>() / energies.len() as f64;
        let spread = max_over(energies.iter().map(|e| (e - mean).norm())) / mean.norm();
        Ok(vec![Check::below("relative_energy_spread", refs::ENERGY, spread, 1e-9)])
    }

    fn sign_dichotomy(&self) -> Result<Vec<Check>, CliError> {
        let sign = if self.mutation == Some(Mutation::EnergySign) {
            -1.0
        } else {
            1.0
        };
        let cases = [
            (C64::new(1.0, 0.0), C64::new(0.0, 1.0)),
            (C64::new(0.3, 0.4), C64::new(0.2, 1.1)),
            (C64::new(2.0, 0.0), C64::new(0.5, 0.8)),
        ];
        let mut s3_margin = f64::INFINITY;
        for (q0, tau) in cases {
            let domain = Domain::torus(tau, 32, 32)?;
            for fam in [
                s3_family(&domain, q0)?,
                s3_family(&domain, q0)?.gauge_apply(&random_constant_gauge(&domain, 9)?, 1)?,
            ] {
                s3_margin = s3_margin.min(sign * energy(&fam)?.energy_re);
            }
        }
        let h3 = family_from_uq(&h3_strip(self.p.strip_refinement[0])?)?;
        let density = energy_density(&h3)?;
        let h3_margin = -density.iter().map(|d| d.re).fold(f64::NEG_INFINITY, f64::max);
        Ok(vec![
            Check::above("s3_energy_positive", refs::SIGN, s3_margin, 1e-12),
            Check::above("h3_density_nonpositive", refs::SIGN, h3_margin, 1e-12),
        ])
    }

    fn reality(&self) -> Result<Vec<Check>, CliError> {
        let s3 = self.s3_variants()?;
        let h3 = family_from_uq(&h3_strip(self.p.strip_refinement[0])?)?;
        let mut imag = 0.0f64;
        for fam in s3.iter().chain([&h3]) {
            imag = imag.max(energy(fam)?.energy_im.abs());
        }
        let domain = Domain::unit_torus(self.p.admissible_n)?;
        let conj = (0..20u64)
            .into_par_iter()
            .map(|seed| -> Result<f64, CliError> {
                let fam = random_admissible_family(&domain, 1000 + seed)?;
                let e = energy(&fam)?.energy();
                let mut dev = 0.0f64;
                for sigma in [Involution::Tau, Involution::Rho] {
                    dev = dev.max((energy_sigma(&fam, sigma)? - e.conj()).norm());
                }
                Ok(dev)
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(vec![
            Check::below("imaginary_energy_of_real_families", refs::REALITY, imag, 1e-10),
            Check::below("pullback_energy_is_conjugate", refs::REALITY, max_over(conj), 1e-10),
        ])
    }

    fn twist_relation(&self) -> Result<Vec<Check>, CliError> {
        let (mut rel, mut frac, mut deg_max, mut block) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for fam in self.s3_variants()? {
            let split = kernel_splitting(&higgs_pair(&fam)?.0)?;
            let tw = twist(&fam, &split)?;
            let deg = line_degree(&fam, &split)?;
            let (e, et) = (energy(&fam)?.energy(), energy(&tw)?.energy());
            let predicted = if self.mutation == Some(Mutation::TwistRelation) {
                e - deg
            } else {
                e * 2.0 - deg
            };
            rel = rel.max((et - predicted).norm());
            frac = frac.max((deg - deg.round()).abs());
            deg_max = deg_max.max(deg.abs());
            block = block.max(block_identity_residual(&tw, &split)?);
        }
        Ok(vec![
            Check::below("twist_energy_relation", refs::TWIST, rel, 1e-8),
            Check::below("degree_integrality", refs::DEGREE, frac, 1e-6),
            Check::below("torus_degree_zero", refs::DEGREE, deg_max, 1e-6),
            Check::below("block_identity", refs::BLOCK, block, 1e-8),
        ])
    }

    fn dual_relation(&self) -> Result<Vec<Check>, CliError> {
        let (mut rel, mut margin) = (0.0f64, f64::INFINITY);
        for fam in self.s3_variants()? {
            let split = kernel_splitting(&higgs_pair(&fam)?.0)?;
            let deg = line_degree(&fam, &split)?;
            let e = energy(&fam)?.energy();
            let ed = energy(&dual_surface(&fam, &split)?)?.energy();
            rel = rel.max((ed - (e - deg)).norm());
            let et = energy(&twist(&fam, &split)?)?.energy_re;
            margin = margin.min(et - deg.abs());
        }
        Ok(vec![
            Check::below("dual_energy_relation", refs::DUAL, rel, 1e-8),
            Check::above("twist_positivity", refs::POSITIVITY, margin, 0.0),
        ])
    }

    fn residue(&self) -> Result<Vec<Check>, CliError> {
        let domain = Domain::unit_torus(self.p.admissible_n)?;
        let residuals = (0..50u64)
            .into_par_iter()
            .map(|seed| -> Result<f64, CliError> {
                Ok(residue_residual(&random_admissible_family(&domain, 2000 + seed)?)?.0)
            })
            .collect::<Result<Vec<_>, _>>()?;
        // Twistor line: the λ¹ term of an H³ family is exactly Φ*.
        let h3 = family_from_uq(&h3_strip(self.p.strip_refinement[0])?)?;
        let (phi, psi) = higgs_pair(&h3)?;
        let mu = moment_map(&phi)?;
        let rhs = residue_rhs(
            &phi,
            &TangentPair::from_gamma(psi)?,
            &TangentPair::from_gamma(phi.adjoint())?,
            mu,
        )?;
        Ok(vec![
            Check::below("residue_identity", refs::RESIDUE, max_over(residuals), 1e-10),
            Check::exact("twistor_line_returns_moment_map", refs::DEGENERATE, (rhs - mu).norm()),
        ])
    }

    fn lightcone(&self) -> Result<Vec<Check>, CliError> {
        let sol = h3_strip(self.p.strip_n)?;
        let fam = family_from_uq(&sol)?;
        let domain = *sol.domain();
        let base = (domain.nx / 2, domain.ny / 2);
        let fp = integrate_frame(&fam, C64::new(1.0, 0.0), base)?;
        let fm = integrate_frame(&fam, C64::new(-1.0, 0.0), base)?;
        let hatf = embed_hatf(&fp, &fm)?;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut iso = 0.0f64;
        for _ in 0..1000 {
            let x: [f64; 5] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let y: [f64; 5] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
            let (v, w) = (isometry_psi(x), isometry_psi(y));
            let dot = -x[0] * y[0] + x[1] * y[1] + x[2] * y[2] + x[3] * y[3] + x[4] * y[4];
            iso = iso
                .max((minkowski_q(&v) - coordinate_q(x)).norm())
                .max((minkowski_form(&v, &w) - dot).norm());
        }
        let samples = lambda_samples();
        let so5 = so5_connection_check(&sol, &fp, &samples)?;
        let split = kernel_splitting(&higgs_pair(&fam)?.0)?;
        let dual = dual_so5_equivalence(&sol, &dual_surface(&fam, &split)?, &samples)?;
        Ok(vec![
            Check::below("lightcone_q", refs::LIGHTCONE, hatf.max_q(), 1e-8),
            Check::below("psi_isometry", refs::ISOMETRY, iso, 1e-14),
            Check::below("so5_connection", refs::SO5, so5, 1e-5),
            Check::below("dual_so5", refs::DUAL_SO5, dual, 1e-6),
        ])
    }

    fn willmore(&self) -> Result<Vec<Check>, CliError> {
        let sol = h3_strip(self.p.strip_n)?;
        let fam = family_from_uq(&sol)?;
        let domain = *sol.domain();
        let base = (domain.nx / 2, domain.ny / 2);
        let fp = integrate_frame(&fam, C64::new(1.0, 0.0), base)?;
        let fm = integrate_frame(&fam, C64::new(-1.0, 0.0), base)?;
        let hatf = embed_hatf(&fp, &fm)?;
        let split = kernel_splitting(&higgs_pair(&fam)?.0)?;
        let w = willmore_compare(&sol, &dual_surface(&fam, &split)?, &hatf)?;
        let sphere = mean_curvature_sphere(&hatf)?;
        let bad = sphere.signatures.iter().filter(|s| **s != (3, 1)).count();
        Ok(vec![
            Check::below(
                "willmore_algebraic",
                refs::WILLMORE_ALGEBRAIC,
                w.max_algebraic_vs_frame,
                1e-10,
            ),
            Check::below(
                "willmore_geometric",
                refs::WILLMORE_GEOMETRIC,
                w.max_algebraic_vs_geometric,
                1e-4,
            ),
            Check::below("mean_curvature", refs::MINIMAL, w.max_mean_curvature, 1e-4),
            Check::exact("sphere_signature", refs::SPHERE, bad as f64),
            Check::below("area_energy", refs::AREA, w.area_energy_gap(), 1e-4),
        ])
    }

    fn fingerprint_dev(&self, fam: &LambdaFamily, sigma: Involution, samples: &[C64]) -> Result<f64, CliError> {
        if self.mutation != Some(Mutation::FingerprintConjugation) {
            return Ok(fingerprint_deviation(fam, sigma, samples)?);
        }
        let mapped: Vec<C64> = samples.iter().map(|l| sigma.map_lambda(*l)).collect();
        let (a, b) = (fingerprint(fam, samples)?, fingerprint(fam, &mapped)?);
        Ok(max_over(
            a.iter().flatten().zip(b.iter().flatten()).map(|(x, y)| (x - y).norm()),
        ))
    }

    fn fingerprints(&self) -> Result<Vec<Check>, CliError> {
        let domain = Domain::unit_torus(self.p.fingerprint_n)?;
        let fam = s3_family(&domain, C64::new(1.0, 0.0))?;
        let samples = lambda_samples();
        let split = kernel_splitting(&higgs_pair(&fam)?.0)?;
        let tw = twist(&fam, &split)?;
        Ok(vec![
            Check::below(
                "input_rho",
                refs::FINGERPRINT,
                self.fingerprint_dev(&fam, Involution::Rho, &samples)?,
                1e-7,
            ),
            Check::below(
                "twist_tau",
                refs::FINGERPRINT,
                self.fingerprint_dev(&tw, Involution::Tau, &samples)?,
                1e-7,
            ),
            Check::below(
                "twist_n",
                refs::FINGERPRINT,
                self.fingerprint_dev(&tw, Involution::N, &samples)?,
                1e-7,
            ),
        ])
    }

    fn convergence(&self) -> Result<Vec<Check>, CliError> {
        let flat = self
            .p
            .strip_refinement
            .par_iter()
            .map(|n| Ok(flatness(&family_from_uq(&h3_strip(*n)?)?)))
            .collect::<Result<Vec<_>, CliError>>()?;
        let geometric = self
            .p
            .geometric_refinement
            .par_iter()
            .map(|n| -> Result<f64, CliError> {
                let sol = h3_strip(*n)?;
                let fam = family_from_uq(&sol)?;
                let domain = *sol.domain();
                let base = (domain.nx / 2, domain.ny / 2);
                let fp = integrate_frame(&fam, C64::new(1.0, 0.0), base)?;
                let fm = integrate_frame(&fam, C64::new(-1.0, 0.0), base)?;
                let split = kernel_splitting(&higgs_pair(&fam)?.0)?;
                let w = willmore_compare(&sol, &dual_surface(&fam, &split)?, &embed_hatf(&fp, &fm)?)?;
                Ok(w.max_algebraic_vs_geometric)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let transport = self
            .p
            .transport_refinement
            .par_iter()
            .map(|n| pure_gauge_transport(*n))
            .collect::<Result<Vec<_>, _>>()?;
        let errors: Vec<f64> = transport.iter().map(|t| t.0).collect();
        let mismatch: Vec<f64> = transport.iter().map(|t| t.1).collect();
        Ok(vec![
            Check::above("strip_flatness_ratio", refs::CONVERGENCE, min_ratio(&flat), 8.0),
            Check::above("transport_error_ratio", refs::CONVERGENCE, min_ratio(&errors), 8.0),
            Check::above("transport_mismatch_ratio", refs::CONVERGENCE, min_ratio(&mismatch), 8.0),
            Check::above(
                "geometric_integrand_ratio",
                refs::CONVERGENCE,
                min_ratio(&geometric),
                8.0,
            ),
        ])
    }
}

/// Transport of `ξ = −dg g^{-1}` for `g = exp(f1 X1) exp(f2 X2)` on an
/// `n × n` unit patch, whose exact frame is `g g(base)^{-1}`. Returns the
/// sup error and the path mismatch.
pub fn pure_gauge_transport(n: usize) -> Result<(f64, f64), CliError> {
    let x1 = Mat2::new(
        C64::new(0.3, 0.1),
        C64::new(0.5, 0.0),
        C64::new(-0.2, 0.4),
        C64::new(-0.3, -0.1),
    );
    let x2 = Mat2::new(
        C64::new(0.0, 0.0),
        C64::new(0.0, 0.7),
        C64::new(0.6, 0.0),
        C64::new(0.0, 0.0),
    );
    let f1 = |z: C64| (z.re + 2.0 * z.im).sin();
    let f1d = |z: C64| ((z.re + 2.0 * z.im).cos(), 2.0 * (z.re + 2.0 * z.im).cos());
    let f2 = |z: C64| z.re.cos() * z.im;
    let f2d = |z: C64| (-z.re.sin() * z.im, z.re.cos());
    let scaled = |m: Mat2, s: f64| expm_traceless(&(m * C64::new(s, 0.0)));
    let g = |z: C64| scaled(x1, f1(z)) * scaled(x2, f2(z));
    let domain = Domain::patch([0.0, 1.0], [0.0, 1.0], n, n)?;
    let xi = GridField::one_form_fn(&domain, |z| {
        let e1 = scaled(x1, f1(z));
        let rot = e1 * x2 * e1.try_inverse().expect("exponentials are invertible");
        let (a, b) = (f1d(z), f2d(z));
        let part = |sgn: f64| {
            let d1 = C64::new(a.0, -sgn * a.1) * 0.5;
            let d2 = C64::new(b.0, -sgn * b.1) * 0.5;
            -(x1 * d1 + rot * d2)
        };
        (part(1.0), part(-1.0))
    });
    let fam = LambdaFamily::new(&domain, [(0, xi)])?;
    let base = (n / 2, n / 2);
    let frame = integrate_frame(&fam, C64::new(1.0, 0.0), base)?;
    let g0inv = g(domain.point(base.0, base.1))
        .try_inverse()
        .expect("exponentials are invertible");
    let err = max_over((0..domain.len()).map(|idx| (frame.frame(idx) - g(domain.point_at(idx)) * g0inv).norm()));
    Ok((err, frame.path_residual()))
}
