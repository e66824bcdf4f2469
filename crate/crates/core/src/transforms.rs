//! Kernel-line splittings, twisting, the dual-surface gauge, and line-bundle
//! degrees through curvature integrals.
//!
//! Both transformations gauge by `h(λ) = λ^{-1} p + (1 − p)`, where `p` projects
//! onto the kernel line `L` of the Higgs-type `λ^{-1}` coefficient along the
//! orthogonal complement. Gauging by `diag(1, λ)` instead differs by the
//! central scalar `λ` and gives the same connection.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambda_families::{GaugeFamily, LambdaFamily};
use crate::surface_grid::{FormDegree, GridField, Mat2, Reduce, C64, I, ONE};

/// Coefficients below this sup-norm count as vanishing when deciding whether
/// a gauged family extends over λ = 0.
pub const EXTENSION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    KernelOfHiggs,
    Supplied,
}

/// Pointwise rank-one projector `p_L` onto a line `L`; `p_⊥ = 1 − p_L`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSplitting {
    p: GridField,
    provenance: Provenance,
}

impl LineSplitting {
    /// Wrap a supplied projector field after checking `p² = p` and `tr p = 1`.
    pub fn supplied(p: GridField) -> Result<Self> {
        if p.dim() != 2 || p.degree() != FormDegree::Zero {
            return Err(Error::Shape("projector must be a 2×2 0-form".into()));
        }
        let idem = p.matmul(&p)?.max_diff(&p);
        let tr = p.trace().map_values(|v| v - ONE).sup_norm();
        if idem > 1e-12 || tr > 1e-12 {
            return Err(Error::Precondition(format!(
                "not a rank-one projector: |p²−p| = {idem:e}, |tr p − 1| = {tr:e}"
            )));
        }
        Ok(Self {
            p,
            provenance: Provenance::Supplied,
        })
    }

    pub fn projector(&self) -> &GridField {
        &self.p
    }

    pub fn complement(&self) -> GridField {
        &GridField::identity(self.p.domain(), 2) - &self.p
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    /// `h(λ) = λ^{-1} p + (1 − p)`.
    pub fn gauge(&self) -> GaugeFamily {
        GaugeFamily::new(self.p.domain(), [(-1, self.p.clone()), (0, self.complement())])
            .expect("projector fields are 2×2 0-forms")
    }

    /// The complementary splitting `(1 − p)`.
    pub fn swapped(&self) -> LineSplitting {
        Self {
            p: self.complement(),
            provenance: Provenance::Supplied,
        }
    }
}

/// Orthogonal projector onto the kernel of a pointwise nilpotent `(1,0)`-form.
pub fn kernel_splitting(phi: &GridField) -> Result<LineSplitting> {
    phi.expect_degree(FormDegree::One)?;
    if phi.dim() != 2 {
        return Err(Error::Shape("kernel splitting needs a 2×2 form".into()));
    }
    let scale = phi.sup_norm();
    let phi_z = phi.component_field(0);
    let impurity = phi.component_field(1).sup_norm();
    if impurity > 1e-10 * scale.max(1.0) {
        return Err(Error::Precondition(format!(
            "Higgs field has a dz̄ part of size {impurity:e}"
        )));
    }
    let domain = *phi.domain();
    let mut p = GridField::zeros(&domain, 2, FormDegree::Zero);
    let mut smallest = f64::INFINITY;
    for idx in 0..domain.len() {
        let (i, j) = domain.coords(idx);
        let m = phi_z.mat2(0, idx);
        let norm = m.norm();
        if norm <= 1e-10 * scale || scale == 0.0 {
            return Err(Error::ZeroLocus { i, j });
        }
        smallest = smallest.min(norm);
        if (m * m).norm() > 1e-10 * norm * norm {
            return Err(Error::Precondition(format!(
                "Higgs field is not nilpotent at grid point ({i}, {j})"
            )));
        }
        let row0 = (m[(0, 0)].norm_sqr() + m[(0, 1)].norm_sqr()).sqrt();
        let row1 = (m[(1, 0)].norm_sqr() + m[(1, 1)].norm_sqr()).sqrt();
        let (a, b) = if row0 >= row1 {
            (m[(0, 0)], m[(0, 1)])
        } else {
            (m[(1, 0)], m[(1, 1)])
        };
        // (a, b)·v = 0 for v = (b, −a).
        let v = nalgebra::Vector2::new(b, -a);
        let proj = v * v.adjoint() / C64::new(v.norm_squared(), 0.0);
        p.set_mat2(0, idx, &proj);
    }
    let dp = p.d()?.sup_norm();
    let dphi = phi_z.d()?.sup_norm();
    if dp > 10.0 * dphi / smallest + 1e-8 {
        return Err(Error::Precondition(format!(
            "kernel line is not resolved by the grid: |dp| = {dp:e}, |dΦ|/min|Φ| = {:e}",
            dphi / smallest
        )));
    }
    Ok(LineSplitting {
        p,
        provenance: Provenance::KernelOfHiggs,
    })
}

fn check_kernel(fam: &LambdaFamily, split: &LineSplitting) -> Result<()> {
    let Some(phi) = fam.coefficient(-1) else {
        return Ok(());
    };
    let defect = phi.matmul(split.projector())?.sup_norm();
    if defect > 1e-8 * phi.sup_norm().max(1.0) {
        return Err(Error::Precondition(format!(
            "splitting line is not in the kernel of the λ^-1 coefficient ({defect:e})"
        )));
    }
    Ok(())
}

/// Drop coefficients below `λ^{-1}` after checking they vanish.
fn extend_over_zero(fam: LambdaFamily) -> Result<LambdaFamily> {
    for (k, c) in fam.coefficients() {
        if *k < -1 {
            let norm = c.sup_norm();
            if norm >= EXTENSION_TOL {
                return Err(Error::NotTwistable { k: *k, norm });
            }
        }
    }
    let kept: Vec<(i32, GridField)> = fam
        .coefficients()
        .iter()
        .filter(|(k, _)| **k >= -1)
        .map(|(k, c)| (*k, c.clone()))
        .collect();
    let tail = fam.truncation_tail();
    let out = LambdaFamily::from_series(fam.domain(), kept.into_iter().collect(), tail);
    Ok(match out.clone().with_higgs_flag() {
        Ok(flagged) => flagged,
        Err(_) => out,
    })
}

/// Twist: substitute `λ ↦ λ²`, then gauge by `h(λ) = λ^{-1} p_L + (1 − p_L)`.
pub fn twist(fam: &LambdaFamily, split: &LineSplitting) -> Result<LambdaFamily> {
    check_kernel(fam, split)?;
    let squared = fam.substitute_lambda_squared();
    let k_top = 2 * fam.k_max().max(0) + 1;
    extend_over_zero(squared.gauge_apply(&split.gauge(), k_top)?.pruned(0.0))
}

/// Dual surface: gauge by `h(λ) = λ^{-1} p_L + (1 − p_L)` without substitution.
pub fn dual_surface(fam: &LambdaFamily, split: &LineSplitting) -> Result<LambdaFamily> {
    check_kernel(fam, split)?;
    let k_top = fam.k_max().max(0) + 1;
    extend_over_zero(fam.gauge_apply(&split.gauge(), k_top)?.pruned(0.0))
}

/// `∇p = dp + [ξ_0, p]` for the λ⁰ connection `d + ξ_0`.
fn covariant_derivative(xi0: &GridField, p: &GridField) -> Result<GridField> {
    let dp = p.d()?;
    let comm = &xi0.matmul(p)? - &p.matmul(xi0)?;
    dp.try_add(&comm)
}

/// Curvature 2-form of the connection `p∇p` induced on `L` by the λ⁰
/// connection: `p F p + p ∇p∧∇p p`.
pub fn line_curvature(fam: &LambdaFamily, split: &LineSplitting) -> Result<GridField> {
    let p = split.projector();
    let xi0 = fam.coefficient_or_zero(0);
    let f = xi0.d()?.try_add(&xi0.wedge(&xi0)?)?;
    let nabla_p = covariant_derivative(&xi0, p)?;
    let extra = nabla_p.wedge(&nabla_p)?;
    let sandwich = |w: &GridField| -> Result<GridField> { p.matmul(&w.matmul(p)?) };
    sandwich(&f)?.try_add(&sandwich(&extra)?)
}

/// Chern–Weil integral `(i/2π) ∫ tr F^{∇^L}` over the grid domain.
///
/// On a torus this is the degree of `L`; on a patch it is the local
/// curvature contribution and need not be an integer.
pub fn line_curvature_integral(fam: &LambdaFamily, split: &LineSplitting) -> Result<f64> {
    let f = line_curvature(fam, split)?;
    let v = f.integrate(Reduce::Trace)? * I / (2.0 * PI);
    Ok(v.re)
}

/// Degree of the line `L` on a torus through its Chern–Weil integral.
pub fn line_degree(fam: &LambdaFamily, split: &LineSplitting) -> Result<f64> {
    if !fam.domain().is_torus() {
        return Err(Error::UnsupportedDomain(
            "line degree needs a closed surface (torus grid)".into(),
        ));
    }
    line_curvature_integral(fam, split)
}

/// Pointwise residual of `F^{∇^L} + φ∧ψ + α∧β = 0` for a twisted family,
/// with `φ = pΦ̃q`, `β = qΦ̃p`, `ψ = qΨ̃p`, `α = pΨ̃q` the off-diagonal blocks
/// of its `λ^{∓1}` coefficients and `q = 1 − p`.
pub fn block_identity_residual(twisted: &LambdaFamily, split: &LineSplitting) -> Result<f64> {
    let p = split.projector();
    let q = split.complement();
    let phi_t = twisted.coefficient_or_zero(-1);
    let psi_t = twisted.coefficient_or_zero(1);
    let block = |a: &GridField, m: &GridField, b: &GridField| -> Result<GridField> { a.matmul(&m.matmul(b)?) };
    let phi = block(p, &phi_t, &q)?;
    let beta = block(&q, &phi_t, p)?;
    let psi = block(&q, &psi_t, p)?;
    let alpha = block(p, &psi_t, &q)?;
    let total = line_curvature(twisted, split)?
        .try_add(&phi.wedge(&psi)?)?
        .try_add(&alpha.wedge(&beta)?)?;
    Ok(total.sup_norm())
}

/// Off-diagonal block sizes of a coefficient with respect to the splitting:
/// returns `(|p ξ p| + |q ξ q|, |p ξ q| + |q ξ p|)` as sup-norms.
pub fn block_structure(coeff: &GridField, split: &LineSplitting) -> Result<(f64, f64)> {
    let p = split.projector();
    let q = split.complement();
    let s = |a: &GridField, b: &GridField| -> Result<f64> { Ok(a.matmul(&coeff.matmul(b)?)?.sup_norm()) };
    Ok((s(p, p)? + s(&q, &q)?, s(p, &q)? + s(&q, p)?))
}

/// Projector onto the line spanned by `v(z)` at every grid point.
pub fn projector_from_vectors(
    domain: &crate::surface_grid::Domain,
    v: impl Fn(C64) -> (C64, C64),
) -> Result<LineSplitting> {
    let p = GridField::mat2_fn(domain, |z| {
        let (a, b) = v(z);
        let n = a.norm_sqr() + b.norm_sqr();
        Mat2::new(a * a.conj(), a * b.conj(), b * a.conj(), b * b.conj()) / C64::new(n, 0.0)
    });
    LineSplitting::supplied(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic_builders::{
        family_from_uq, random_constant_gauge, random_unitary, solve_constant, SolutionData, Target,
    };
    use crate::surface_grid::{Domain, ZERO};

    fn s3_family(n: usize) -> LambdaFamily {
        let dom = Domain::unit_torus(n).unwrap();
        let u0 = solve_constant(ONE, Target::S3).unwrap();
        family_from_uq(&SolutionData::constant(&dom, u0, ONE, Target::S3).unwrap()).unwrap()
    }

    #[test]
    fn kernel_of_upper_triangular_higgs() {
        let fam = s3_family(8);
        let split = kernel_splitting(fam.coefficient(-1).unwrap()).unwrap();
        let e11 = Mat2::new(ONE, ZERO, ZERO, ZERO);
        assert!(split.projector().max_diff(&GridField::constant_mat2(fam.domain(), e11)) < 1e-15);
        assert_eq!(split.provenance(), Provenance::KernelOfHiggs);
    }

    #[test]
    fn kernel_splitting_is_unitarily_equivariant() {
        let fam = s3_family(8);
        let phi = fam.coefficient(-1).unwrap();
        let u = random_unitary(11);
        let conj = phi.map_mat2(|m| u * m * u.adjoint());
        let p = kernel_splitting(phi).unwrap();
        let p2 = kernel_splitting(&conj).unwrap();
        let expect = p.projector().map_mat2(|m| u * m * u.adjoint());
        assert!(p2.projector().max_diff(&expect) < 1e-14);
    }

    #[test]
    fn kernel_splitting_errors() {
        let dom = Domain::unit_torus(8).unwrap();
        let h = Mat2::new(ONE, ZERO, ZERO, -ONE);
        let bad = GridField::one_form_fn(&dom, |_| (h, Mat2::zeros()));
        assert!(matches!(kernel_splitting(&bad), Err(Error::Precondition(_))));
        let e12 = Mat2::new(ZERO, ONE, ZERO, ZERO);
        let vanishing = GridField::one_form_fn(&dom, |z| (if z == ZERO { Mat2::zeros() } else { e12 }, Mat2::zeros()));
        assert!(matches!(
            kernel_splitting(&vanishing),
            Err(Error::ZeroLocus { i: 0, j: 0 })
        ));
    }

    #[test]
    fn twist_of_s3_family() {
        let fam = s3_family(16);
        let split = kernel_splitting(fam.coefficient(-1).unwrap()).unwrap();
        let tw = twist(&fam, &split).unwrap();
        assert_eq!(tw.k_min(), -1);
        assert!(tw.is_higgs_type());
        let (diag, _) = block_structure(tw.coefficient(-1).unwrap(), &split).unwrap();
        assert!(diag < 1e-14);
        assert!(tw.flatness_residual().values().all(|r| *r < 1e-12));
        assert!(block_identity_residual(&tw, &split).unwrap() < 1e-12);
        let h = split.gauge();
        for t in 0..8 {
            let lam = C64::from_polar(0.8 + 0.05 * t as f64, 0.77 * t as f64 + 0.1);
            let lhs = tw.evaluate(lam).unwrap();
            let xi = fam.evaluate(lam * lam).unwrap();
            let hl = h.evaluate(lam);
            let hinv = h.inverse().unwrap().evaluate(lam);
            let rhs = hinv.matmul(&xi).unwrap().matmul(&hl).unwrap();
            assert!(lhs.max_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn twist_of_zero_higgs_is_substitution() {
        let dom = Domain::unit_torus(8).unwrap();
        let a = Mat2::new(I, ZERO, ZERO, -I);
        let fam = LambdaFamily::new(&dom, [(0, GridField::one_form_fn(&dom, |_| (a, -a)))]).unwrap();
        let e11 = Mat2::new(ONE, ZERO, ZERO, ZERO);
        let split = LineSplitting::supplied(GridField::constant_mat2(&dom, e11)).unwrap();
        let tw = twist(&fam, &split).unwrap();
        assert!(tw.max_diff(&fam.substitute_lambda_squared()) < 1e-14);
    }

    #[test]
    fn wrong_line_is_rejected() {
        let fam = s3_family(8);
        let e22 = Mat2::new(ZERO, ZERO, ZERO, ONE);
        let split = LineSplitting::supplied(GridField::constant_mat2(fam.domain(), e22)).unwrap();
        assert!(matches!(twist(&fam, &split), Err(Error::Precondition(_))));
    }

    #[test]
    fn dual_structure_and_round_trip() {
        let fam = s3_family(16);
        let split = kernel_splitting(fam.coefficient(-1).unwrap()).unwrap();
        let dual = dual_surface(&fam, &split).unwrap();
        assert_eq!(dual.k_min(), -1);
        let phi_hat = dual.coefficient(-1).unwrap();
        let q = split.complement();
        // Only the (2,1) entry survives: p Φ̂ = 0 and Φ̂ q = 0.
        assert!(split.projector().matmul(phi_hat).unwrap().sup_norm() < 1e-14);
        assert!(phi_hat.matmul(&q).unwrap().sup_norm() < 1e-14);
        let back = dual_surface(&dual, &split.swapped()).unwrap();
        assert!(back.max_diff(&fam) < 1e-13, "{}", back.max_diff(&fam));
    }

    #[test]
    fn degree_of_constant_splitting_is_zero() {
        let fam = s3_family(16);
        let split = kernel_splitting(fam.coefficient(-1).unwrap()).unwrap();
        assert!(line_degree(&fam, &split).unwrap().abs() < 1e-14);
        let patch = Domain::patch([0.0, 1.0], [0.0, 1.0], 16, 16).unwrap();
        let pfam = family_from_uq(&SolutionData::constant(&patch, 0.0, ONE, Target::S3).unwrap()).unwrap();
        let psplit = kernel_splitting(pfam.coefficient(-1).unwrap()).unwrap();
        assert!(matches!(line_degree(&pfam, &psplit), Err(Error::UnsupportedDomain(_))));
    }

    /// Line spanned by the two level-2 theta functions `ϑ[a/2, 0](2z | 2τ)`,
    /// `a = 0, 1`. They share a factor of automorphy and have no common zero,
    /// so the line is well defined on the torus and has degree ±2.
    fn theta_splitting(n: usize) -> LineSplitting {
        let tau = I;
        let dom = Domain::torus(tau, n, n).unwrap();
        let theta = |a: f64, z: C64| -> C64 {
            (-12..=12)
                .map(|m| {
                    let k = m as f64 + a / 2.0;
                    (I * PI * 2.0 * tau * k * k + I * 2.0 * PI * 2.0 * k * z).exp()
                })
                .sum()
        };
        projector_from_vectors(&dom, |z| (theta(0.0, z), theta(1.0, z))).unwrap()
    }

    #[test]
    fn nontrivial_degree_and_gauge_invariance() {
        let split = theta_splitting(64);
        let dom = *split.projector().domain();
        let fam = LambdaFamily::zero(&dom);
        let deg = line_degree(&fam, &split).unwrap();
        assert!((deg.abs() - 2.0).abs() < 1e-6, "degree {deg}");
        let g = random_constant_gauge(&dom, 4).unwrap();
        let g0 = g.coefficients()[&0].clone();
        let g0inv = g0.map_mat2(|m| m.try_inverse().unwrap());
        let gauged_fam = fam.gauge_apply(&g, 2).unwrap();
        let gauged_split =
            LineSplitting::supplied(g0inv.matmul(split.projector()).unwrap().matmul(&g0).unwrap()).unwrap();
        let deg2 = line_degree(&gauged_fam, &gauged_split).unwrap();
        assert!((deg2 - deg).abs() < 1e-6, "{deg2} vs {deg}");
    }
}
