//! The energy functional `E = (1/2πi) ∫ tr(Φ∧Ψ)` of a flat λ-family and the
//! flat hyper-Kähler model quantities behind the residue formula.
//!
//! `Φ` is the `λ^{-1}` coefficient (of type (1,0)) and `Ψ` the (0,1)-part of
//! the `λ¹` coefficient.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambda_families::{Involution, LambdaFamily};
use crate::surface_grid::{Domain, DomainKind, FormDegree, GridField, Reduce, C64, DZ_WEDGE_DZBAR, I};

/// Type-purity tolerance of the λ^{-1} coefficient accepted by [`energy`].
pub const LIFT_TYPE_TOL: f64 = 1e-10;

/// `(γ, β)` with `γ` of type (0,1) and `β` of type (1,0).
#[derive(Clone, Debug, PartialEq)]
pub struct TangentPair {
    gamma: GridField,
    beta: GridField,
}

impl TangentPair {
    pub fn new(gamma: GridField, beta: GridField) -> Result<Self> {
        gamma.expect_degree(FormDegree::One)?;
        beta.expect_degree(FormDegree::One)?;
        gamma.check_same_shape(&beta)?;
        let scale = gamma.sup_norm().max(beta.sup_norm()).max(1.0);
        let g_bad = gamma.component_field(0).sup_norm();
        let b_bad = beta.component_field(1).sup_norm();
        if g_bad > 1e-12 * scale || b_bad > 1e-12 * scale {
            return Err(Error::Precondition(format!(
                "tangent pair slots are not of pure type ({g_bad:e}, {b_bad:e})"
            )));
        }
        Ok(Self { gamma, beta })
    }

    /// Pair with vanishing (1,0) slot.
    pub fn from_gamma(gamma: GridField) -> Result<Self> {
        let beta = GridField::zeros(gamma.domain(), gamma.dim(), FormDegree::One);
        Self::new(gamma, beta)
    }

    pub fn gamma(&self) -> &GridField {
        &self.gamma
    }

    pub fn beta(&self) -> &GridField {
        &self.beta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub energy_re: f64,
    pub energy_im: f64,
    /// Bound on the effect of discarded λ-coefficients.
    pub trunc_err: f64,
    /// Quadrature error estimate from a coarser sub-grid.
    pub quad_err: f64,
    pub family_id: String,
}

impl EnergyReport {
    pub fn energy(&self) -> C64 {
        C64::new(self.energy_re, self.energy_im)
    }
}

/// `(Φ, Ψ)` of a family as 1-forms, checking the lift shape at λ = 0.
pub fn higgs_pair(fam: &LambdaFamily) -> Result<(GridField, GridField)> {
    let phi = fam.coefficient_or_zero(-1);
    let impurity = phi.component_field(1).sup_norm();
    if impurity > LIFT_TYPE_TOL * phi.sup_norm().max(1.0) {
        return Err(Error::InvalidLift(format!(
            "λ^-1 coefficient has a dz̄ part of size {impurity:e}"
        )));
    }
    if fam.k_min() < -1 {
        return Err(Error::InvalidLift(format!(
            "family has a pole of order {} at λ = 0",
            -fam.k_min()
        )));
    }
    let psi = fam.coefficient_or_zero(1).part_01()?;
    Ok((phi, psi))
}

/// Pointwise energy density with respect to `dx dy`:
/// `(1/2πi)·tr(Φ_z Ψ_z̄)·(−2i) = −(1/π)·tr(Φ_z Ψ_z̄)`.
pub fn energy_density(fam: &LambdaFamily) -> Result<Vec<C64>> {
    let (phi, psi) = higgs_pair(fam)?;
    let w = phi.wedge(&psi)?;
    let scale = DZ_WEDGE_DZBAR / (2.0 * PI * I);
    Ok(w.reduced_values(Reduce::Trace)?
        .into_iter()
        .map(|v| v * scale)
        .collect())
}

pub fn energy(fam: &LambdaFamily) -> Result<EnergyReport> {
    energy_with_id(fam, "family")
}

pub fn energy_with_id(fam: &LambdaFamily, family_id: &str) -> Result<EnergyReport> {
    let density = energy_density(fam)?;
    let domain = fam.domain();
    let e = domain.integrate_dxdy(&density);
    let trunc_err = if fam.k_max() >= 1 { 0.0 } else { fam.truncation_tail() };
    Ok(EnergyReport {
        energy_re: e.re,
        energy_im: e.im,
        trunc_err,
        quad_err: quadrature_error_estimate(domain, &density),
        family_id: family_id.to_string(),
    })
}

/// Compare the quadrature with the same rule on every second grid point.
/// On a torus this measures aliasing of the upper half band; on a patch it is
/// the Richardson estimate of the trapezoidal error.
pub fn quadrature_error_estimate(domain: &Domain, values: &[C64]) -> f64 {
    let full = domain.integrate_dxdy(values);
    let (nx, ny) = (domain.nx, domain.ny);
    let coarse_dims = match domain.kind {
        DomainKind::Torus { .. } => (nx % 4 == 0 && ny % 4 == 0).then_some((nx / 2, ny / 2)),
        DomainKind::Patch { .. } => ((nx - 1) % 2 == 0 && (ny - 1) % 2 == 0 && nx >= 17 && ny >= 17)
            .then_some(((nx - 1) / 2 + 1, (ny - 1) / 2 + 1)),
    };
    let Some((cx, cy)) = coarse_dims else {
        return 0.0;
    };
    let Ok(coarse) = domain.with_resolution(cx, cy) else {
        return 0.0;
    };
    let sub: Vec<C64> = (0..coarse.len())
        .map(|idx| {
            let (i, j) = coarse.coords(idx);
            values[domain.index(2 * i, 2 * j)]
        })
        .collect();
    let diff = (full - coarse.integrate_dxdy(&sub)).norm();
    if domain.is_torus() {
        diff
    } else {
        diff / 3.0
    }
}

/// Energy of the pulled-back family `σ*s` for an anti-holomorphic involution.
pub fn energy_sigma(fam: &LambdaFamily, sigma: Involution) -> Result<C64> {
    if !sigma.is_antiholomorphic() {
        return Err(Error::Unsupported("energy reality is stated for τ and ρ".into()));
    }
    let (lo, hi) = fam.range();
    if lo < -1 || hi > 1 {
        return Err(Error::Unsupported(format!(
            "admissible families have Laurent range within [-1, 1], got [{lo}, {hi}]"
        )));
    }
    Ok(energy(&fam.sigma_pullback(sigma))?.energy())
}

/// `μ = −∫ tr(Φ∧Φ*)`.
pub fn moment_map(phi: &GridField) -> Result<C64> {
    phi.wedge(&phi.adjoint())?.integrate(Reduce::Trace).map(|v| -v)
}

/// `ω_ℂ((γ1, β1), (γ2, β2)) = 2i ∫ tr(β2∧γ1 − β1∧γ2)`.
pub fn omega_c(t1: &TangentPair, t2: &TangentPair) -> Result<C64> {
    let a = t2.beta.wedge(&t1.gamma)?;
    let b = t1.beta.wedge(&t2.gamma)?;
    Ok(a.try_sub(&b)?.integrate(Reduce::Trace)? * (2.0 * I))
}

/// Contraction `2 ∫ tr(Φ∧γ)` of `ω_ℂ` with the vector field `(0, iΦ)`.
pub fn contract_y(phi: &GridField, t: &TangentPair) -> Result<C64> {
    Ok(phi.wedge(&t.gamma)?.integrate(Reduce::Trace)? * 2.0)
}

/// `−∫ tr(Φ∧(γ_lift − γ_ref)) + μ`.
pub fn residue_rhs(phi: &GridField, lift: &TangentPair, reference: &TangentPair, mu: C64) -> Result<C64> {
    let diff = lift.gamma.try_sub(&reference.gamma)?;
    Ok(mu - phi.wedge(&diff)?.integrate(Reduce::Trace)?)
}
