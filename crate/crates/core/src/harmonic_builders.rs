//! Flat λ-families built from a conformal factor `u` and a Hopf differential
//! coefficient `q` (metric `e^{2u} dz⊗dz̄`).
//!
//! The family is
//!
//! ```text
//! ξ_{-1} = [[0, e^u], [0, 0]] dz
//! ξ_0    = [[u_z/2, 0], [e^{-u} q, -u_z/2]] dz + [[-u_z̄/2, -e^{-u} q̄], [0, u_z̄/2]] dz̄
//! ξ_1    = s [[0, 0], [e^u, 0]] dz̄
//! ```
//!
//! with `s = +1` for maps to hyperbolic space and `s = −1` for maps to the
//! 3-sphere. Scalar equations for `u` are never written out by hand: they are
//! read off the λ⁰ curvature coefficient of these matrices.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lambda_families::{GaugeFamily, LambdaFamily};
use crate::surface_grid::{Domain, DomainKind, FormDegree, GridField, Mat2, C64, I, ONE, ZERO};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    /// Hyperbolic 3-space: the λ¹ term is `+Φ*`.
    H3,
    /// The 3-sphere: the λ¹ term is `−Φ*`.
    S3,
}

impl Target {
    pub fn sign(self) -> f64 {
        match self {
            Target::H3 => 1.0,
            Target::S3 => -1.0,
        }
    }
}

/// Conformal factor and Hopf differential on a grid.
///
/// Solvers that produce `u` together with its derivatives (such as the strip
/// integrator) store `(∂_z u, ∂_z̄ u)` so that builders do not re-differentiate
/// sampled data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionData {
    pub u: GridField,
    pub q: GridField,
    pub target: Target,
    #[serde(default)]
    pub u_derivatives: Option<[GridField; 2]>,
}

impl SolutionData {
    pub fn new(u: GridField, q: GridField, target: Target) -> Result<Self> {
        let sol = Self {
            u,
            q,
            target,
            u_derivatives: None,
        };
        sol.validate()?;
        Ok(sol)
    }

    /// Attach known `(∂_z u, ∂_z̄ u)`.
    pub fn with_u_derivatives(mut self, u_z: GridField, u_zbar: GridField) -> Result<Self> {
        for f in [&u_z, &u_zbar] {
            self.u.check_same_shape(f)?;
            f.expect_degree(FormDegree::Zero)?;
        }
        self.u_derivatives = Some([u_z, u_zbar]);
        Ok(self)
    }

    /// `(∂_z u, ∂_z̄ u)`, from stored values when available.
    pub fn u_derivatives(&self) -> Result<(GridField, GridField)> {
        match &self.u_derivatives {
            Some([a, b]) => Ok((a.clone(), b.clone())),
            None => self.u.derive(),
        }
    }

    /// Constant `u0` and `q0` on `domain`.
    pub fn constant(domain: &Domain, u0: f64, q0: C64, target: Target) -> Result<Self> {
        Self::new(
            GridField::scalar_fn(domain, |_| C64::new(u0, 0.0)),
            GridField::scalar_fn(domain, |_| q0),
            target,
        )
    }

    pub fn domain(&self) -> &Domain {
        self.u.domain()
    }

    pub fn validate(&self) -> Result<()> {
        for f in [&self.u, &self.q] {
            if f.dim() != 1 || f.degree() != FormDegree::Zero {
                return Err(Error::Shape("u and q must be scalar 0-forms".into()));
            }
        }
        self.u.check_same_shape(&self.q)?;
        let imag = self.u.component(0).iter().map(|v| v.im.abs()).fold(0.0, f64::max);
        if imag > 1e-12 {
            return Err(Error::Precondition(format!("u has imaginary part {imag:e}")));
        }
        let (_, q_zbar) = self.q.derive()?;
        let defect = q_zbar.sup_norm();
        if defect > 1e-10 * self.q.sup_norm().max(1.0) {
            return Err(Error::Precondition(format!(
                "q is not holomorphic: |∂q/∂z̄| = {defect:e}"
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let sol: SolutionData = serde_json::from_str(s)?;
        sol.validate()?;
        Ok(sol)
    }
}

/// Scalars the frame matrices can be built over: plain complex numbers, or
/// first-order jets carrying a directional derivative.
trait FrameScalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Neg<Output = Self> {
    fn constant(c: C64) -> Self;
    fn exp(self) -> Self;
}

impl FrameScalar for C64 {
    fn constant(c: C64) -> Self {
        c
    }

    fn exp(self) -> Self {
        num_complex::Complex::exp(self)
    }
}

/// `value + ε·slope` with `ε² = 0`.
#[derive(Clone, Copy, Debug)]
struct Jet {
    value: C64,
    slope: C64,
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        Jet {
            value: self.value + o.value,
            slope: self.slope + o.slope,
        }
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        Jet {
            value: self.value - o.value,
            slope: self.slope - o.slope,
        }
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        Jet {
            value: self.value * o.value,
            slope: self.value * o.slope + self.slope * o.value,
        }
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        Jet {
            value: -self.value,
            slope: -self.slope,
        }
    }
}

impl FrameScalar for Jet {
    fn constant(c: C64) -> Self {
        Jet { value: c, slope: ZERO }
    }

    fn exp(self) -> Self {
        let e = self.value.exp();
        Jet {
            value: e,
            slope: e * self.slope,
        }
    }
}

type M2<T> = [[T; 2]; 2];

/// The four frame blocks: `Φ` (dz part of ξ_{-1}), `A` and `B` (dz and dz̄
/// parts of ξ_0), and `Ψ` (dz̄ part of ξ_1).
struct FrameBlocks<T> {
    phi: M2<T>,
    a: M2<T>,
    b: M2<T>,
    psi: M2<T>,
}

fn frame_blocks<T: FrameScalar>(u: T, u_z: T, u_zbar: T, q: T, q_bar: T, sign: f64) -> FrameBlocks<T> {
    let zero = T::constant(ZERO);
    let half = T::constant(C64::new(0.5, 0.0));
    let eu = u.exp();
    let emu = (-u).exp();
    FrameBlocks {
        phi: [[zero, eu], [zero, zero]],
        a: [[half * u_z, zero], [emu * q, -(half * u_z)]],
        b: [[-(half * u_zbar), -(emu * q_bar)], [zero, half * u_zbar]],
        psi: [[zero, zero], [T::constant(C64::new(sign, 0.0)) * eu, zero]],
    }
}

fn to_mat2(m: &M2<C64>) -> Mat2 {
    Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

fn values(m: &M2<Jet>) -> Mat2 {
    Mat2::new(m[0][0].value, m[0][1].value, m[1][0].value, m[1][1].value)
}

fn slopes(m: &M2<Jet>) -> Mat2 {
    Mat2::new(m[0][0].slope, m[0][1].slope, m[1][0].slope, m[1][1].slope)
}

/// λ⁰ curvature `∂_z B − ∂_z̄ A + ΦΨ − ΨΦ + AB − BA` (coefficient of
/// `dz∧dz̄`) for data depending on x only, where `∂_z = ∂_z̄ = ½ d/dx`.
fn x_only_curvature(u: f64, u_x: f64, u_xx: f64, q0: C64, sign: f64) -> Mat2 {
    let u = Jet {
        value: C64::new(u, 0.0),
        slope: C64::new(u_x, 0.0),
    };
    let u_z = Jet {
        value: C64::new(0.5 * u_x, 0.0),
        slope: C64::new(0.5 * u_xx, 0.0),
    };
    let fb = frame_blocks(u, u_z, u_z, Jet::constant(q0), Jet::constant(q0.conj()), sign);
    let (phi, a, b, psi) = (values(&fb.phi), values(&fb.a), values(&fb.b), values(&fb.psi));
    let d = (slopes(&fb.b) - slopes(&fb.a)) * C64::new(0.5, 0.0);
    d + phi * psi - psi * phi + a * b - b * a
}

/// Scalar flatness defect: the `(1,1)` entry of the λ⁰ curvature for
/// x-dependent data. The remaining entries vanish identically or mirror it.
pub fn flatness_defect(u: f64, u_x: f64, u_xx: f64, q0: C64, target: Target) -> f64 {
    x_only_curvature(u, u_x, u_xx, q0, target.sign())[(0, 0)].re
}

/// `u''` making the λ⁰ curvature vanish for x-dependent data. The defect is
/// affine in `u''`; its two samples at `u'' = 0, 1` determine the root.
pub fn strip_acceleration(u: f64, u_x: f64, q0: C64, target: Target) -> f64 {
    let k0 = flatness_defect(u, u_x, 0.0, q0, target);
    let k1 = flatness_defect(u, u_x, 1.0, q0, target);
    -k0 / (k1 - k0)
}

/// Build the λ-family of the frame; `k = −1, 0, 1` coefficients.
pub fn family_from_uq(sol: &SolutionData) -> Result<LambdaFamily> {
    sol.validate()?;
    let domain = *sol.domain();
    let (u_z, u_zbar) = sol.u_derivatives()?;
    let sign = sol.target.sign();
    let mut xi_m1 = GridField::zeros(&domain, 2, FormDegree::One);
    let mut xi_0 = xi_m1.clone();
    let mut xi_1 = xi_m1.clone();
    for idx in 0..domain.len() {
        let q = sol.q.component(0)[idx];
        let fb = frame_blocks(
            sol.u.component(0)[idx],
            u_z.component(0)[idx],
            u_zbar.component(0)[idx],
            q,
            q.conj(),
            sign,
        );
        xi_m1.set_mat2(0, idx, &to_mat2(&fb.phi));
        xi_0.set_mat2(0, idx, &to_mat2(&fb.a));
        xi_0.set_mat2(1, idx, &to_mat2(&fb.b));
        xi_1.set_mat2(1, idx, &to_mat2(&fb.psi));
    }
    LambdaFamily::new(&domain, [(-1, xi_m1), (0, xi_0), (1, xi_1)])?.with_higgs_flag()
}

/// Constant `u0` with vanishing λ⁰ curvature for constant `q0`.
///
/// Bisection on `[−10, 10]` followed by Newton polishing of the scalar
/// defect; fails when the defect has no sign change (as for hyperbolic
/// targets, where it is strictly positive).
pub fn solve_constant(q0: C64, target: Target) -> Result<f64> {
    if q0.norm() == 0.0 {
        return Err(Error::Degenerate("constant solver needs q0 ≠ 0".into()));
    }
    let f = |u: f64| flatness_defect(u, 0.0, 0.0, q0, target);
    let (mut lo, mut hi) = (-10.0, 10.0);
    let (flo, fhi) = (f(lo), f(hi));
    if flo.signum() == fhi.signum() {
        return Err(Error::NoConstantSolution(format!(
            "{target:?}: defect keeps sign {} on [-10, 10]",
            flo.signum()
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid).signum() == flo.signum() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    let mut u = 0.5 * (lo + hi);
    for _ in 0..8 {
        let fu = f(u);
        if fu.abs() < 1e-16 {
            break;
        }
        let h = 1e-6;
        let slope = (f(u + h) - f(u - h)) / (2.0 * h);
        let next = u - fu / slope;
        if !(next.is_finite() && f(next).abs() < fu.abs()) {
            break;
        }
        u = next;
    }
    if f(u).abs() > 1e-14 * q0.norm().max(1.0) {
        return Err(Error::NoConstantSolution(format!(
            "root refinement stalled at defect {:e}",
            f(u)
        )));
    }
    Ok(u)
}

/// Parameters of an x-dependent solution on a rectangular strip.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StripSpec {
    pub q0: C64,
    pub u_init: f64,
    pub du_init: f64,
    pub x_range: [f64; 2],
    pub y_range: [f64; 2],
    pub nx: usize,
    pub ny: usize,
    /// Total number of integrator steps across the x-range (at least 256).
    pub steps: usize,
}

/// Abort threshold for `|u|` while integrating a strip solution.
pub const BLOW_UP: f64 = 20.0;

/// Initial value of `u` at which the strip acceleration `u''` (with `u' = 0`)
/// is smallest, giving the most slowly varying solution.
pub fn slowest_initial_value(q0: C64, target: Target) -> f64 {
    let g = |u: f64| strip_acceleration(u, 0.0, q0, target).abs();
    let (mut a, mut b) = (-10.0f64, 10.0f64);
    let r = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

/// Integrate the x-only reduction of the flatness equation with classical
/// Runge–Kutta and sample it on an `nx × ny` patch.
pub fn solve_gordon_strip(spec: &StripSpec, target: Target) -> Result<SolutionData> {
    if target != Target::H3 {
        return Err(Error::Precondition("strip solver is set up for the H3 target".into()));
    }
    if spec.steps < 256 {
        return Err(Error::Config(format!(
            "strip solver needs at least 256 steps, got {}",
            spec.steps
        )));
    }
    let domain = Domain::patch(spec.x_range, spec.y_range, spec.nx, spec.ny)?;
    let intervals = spec.nx - 1;
    let sub = spec.steps.div_ceil(intervals);
    let h = domain.spacing().0 / sub as f64;
    let rhs = |s: [f64; 2]| [s[1], strip_acceleration(s[0], s[1], spec.q0, target)];
    let mut state = [spec.u_init, spec.du_init];
    let mut profile = Vec::with_capacity(spec.nx);
    profile.push(state);
    for step in 0..intervals {
        for _ in 0..sub {
            let k1 = rhs(state);
            let k2 = rhs([state[0] + 0.5 * h * k1[0], state[1] + 0.5 * h * k1[1]]);
            let k3 = rhs([state[0] + 0.5 * h * k2[0], state[1] + 0.5 * h * k2[1]]);
            let k4 = rhs([state[0] + h * k3[0], state[1] + h * k3[1]]);
            for c in 0..2 {
                state[c] += h / 6.0 * (k1[c] + 2.0 * k2[c] + 2.0 * k3[c] + k4[c]);
            }
        }
        if !(state[0].abs() <= BLOW_UP) {
            return Err(Error::PartialSolution {
                achieved: spec.x_range[0] + step as f64 * domain.spacing().0,
                requested: spec.x_range[1],
            });
        }
        profile.push(state);
    }
    let sample = |c: usize, scale: f64| {
        GridField::scalar_from_values(
            &domain,
            (0..domain.len())
                .map(|idx| C64::new(scale * profile[domain.coords(idx).0][c], 0.0))
                .collect(),
        )
    };
    let u = sample(0, 1.0)?;
    let u_z = sample(1, 0.5)?;
    let q = GridField::scalar_fn(&domain, |_| spec.q0);
    SolutionData::new(u, q, target)?.with_u_derivatives(u_z.clone(), u_z)
}

/// Smooth random trace-free 2×2 field built from a few low Fourier modes.
fn random_sl2_field(domain: &Domain, rng: &mut ChaCha8Rng, amplitude: f64) -> GridField {
    const MODES: i32 = 2;
    let basis = [
        Mat2::new(ONE, ZERO, ZERO, -ONE),
        Mat2::new(ZERO, ONE, ZERO, ZERO),
        Mat2::new(ZERO, ZERO, ONE, ZERO),
    ];
    let mut terms = Vec::new();
    for m in -MODES..=MODES {
        for n in -MODES..=MODES {
            let mut coeff = Mat2::zeros();
            for b in &basis {
                let c = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                coeff += b * c;
            }
            let decay = 1.0 / (1.0 + (m * m + n * n) as f64);
            terms.push((m, n, coeff * C64::new(amplitude * decay, 0.0)));
        }
    }
    // Unit-period coordinates (s, t) of a grid point.
    let coords: Box<dyn Fn(C64) -> (f64, f64)> = match domain.kind {
        DomainKind::Torus { modulus } => Box::new(move |z: C64| {
            let t = z.im / modulus.im;
            (z.re - t * modulus.re, t)
        }),
        DomainKind::Patch { x_range, y_range } => Box::new(move |z: C64| {
            (
                (z.re - x_range[0]) / (x_range[1] - x_range[0]),
                (z.im - y_range[0]) / (y_range[1] - y_range[0]),
            )
        }),
    };
    let powers = |w: C64| -> [C64; (2 * MODES + 1) as usize] {
        let inv = w.conj();
        let mut p = [ONE; (2 * MODES + 1) as usize];
        for k in 1..=MODES as usize {
            p[MODES as usize + k] = p[MODES as usize + k - 1] * w;
            p[MODES as usize - k] = p[MODES as usize - k + 1] * inv;
        }
        p
    };
    GridField::mat2_fn(domain, |z| {
        let (s, t) = coords(z);
        let ps = powers((I * 2.0 * PI * s).exp());
        let pt = powers((I * 2.0 * PI * t).exp());
        terms.iter().fold(Mat2::zeros(), |acc, (m, n, c)| {
            acc + c * (ps[(m + MODES) as usize] * pt[(n + MODES) as usize])
        })
    })
}

/// Random family with Laurent range `[−1, 1]`, a `λ^{-1}` coefficient of
/// type (1,0) and a `λ` coefficient of type (0,1). Not flat; used where only
/// the shape of a lift matters. Deterministic in `seed`.
pub fn random_admissible_family(domain: &Domain, seed: u64) -> Result<LambdaFamily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let zero = GridField::zeros(domain, 2, FormDegree::Zero);
    let phi = GridField::one_form(&random_sl2_field(domain, &mut rng, 1.0), &zero)?;
    let xi0 = GridField::one_form(
        &random_sl2_field(domain, &mut rng, 1.0),
        &random_sl2_field(domain, &mut rng, 1.0),
    )?;
    let psi = GridField::one_form(&zero, &random_sl2_field(domain, &mut rng, 1.0))?;
    LambdaFamily::new(domain, [(-1, phi), (0, xi0), (1, psi)])
}

/// `exp(X)` of a trace-free 2×2 matrix via `X² = −det(X)·1`.
pub fn expm_traceless(x: &Mat2) -> Mat2 {
    let s = (-x.determinant()).sqrt();
    let (ch, sh_over_s) = if s.norm() < 1e-6 {
        let s2 = s * s;
        (ONE + s2 / 2.0 + s2 * s2 / 24.0, ONE + s2 / 6.0 + s2 * s2 / 120.0)
    } else {
        (s.cosh(), s.sinh() / s)
    };
    Mat2::identity() * ch + x * sh_over_s
}

/// `g(λ) = exp(Σ_{k=1..K} λ^k A_k)` with smooth random trace-free `A_k`,
/// expanded through power `k_top`. Deterministic in `seed`.
pub fn random_lift_perturbation(domain: &Domain, seed: u64, k: i32, k_top: i32) -> Result<GaugeFamily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator: BTreeMap<i32, GridField> = (1..=k)
        .map(|p| (p, random_sl2_field(domain, &mut rng, 0.3 / p as f64)))
        .collect();
    GaugeFamily::exp_positive(domain, &generator, k_top)
}

/// λ-independent gauge `g0 = exp(A)` with smooth random trace-free `A`.
pub fn random_constant_gauge(domain: &Domain, seed: u64) -> Result<GaugeFamily> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = random_sl2_field(domain, &mut rng, 0.3);
    GaugeFamily::lambda_constant(a.map_mat2(expm_traceless))
}

/// λ-independent gauge by a random constant unitary matrix.
pub fn random_unitary(seed: u64) -> Mat2 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut r = || rng.random_range(-1.0..1.0);
    let h = Mat2::new(C64::new(r(), 0.0), C64::new(r(), r()), ZERO, ZERO);
    let h = Mat2::new(h[(0, 0)], h[(0, 1)], h[(0, 1)].conj(), -h[(0, 0)]);
    expm_traceless(&(h * I))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_data_family() {
        let dom = Domain::unit_torus(8).unwrap();
        let sol = SolutionData::constant(&dom, 0.0, ZERO, Target::H3).unwrap();
        let fam = family_from_uq(&sol).unwrap();
        assert!(fam.coefficient(0).unwrap().sup_norm() == 0.0);
        let e12 = Mat2::new(ZERO, ONE, ZERO, ZERO);
        assert_eq!(fam.coefficient(-1).unwrap().mat2(0, 5), e12);
        assert_eq!(fam.coefficient(1).unwrap().mat2(1, 5), e12.adjoint());
        assert!(fam.coefficient(1).unwrap().component_field(0).sup_norm() == 0.0);
    }

    #[test]
    fn random_admissible_family_has_lift_shape() {
        let dom = Domain::unit_torus(16).unwrap();
        let fam = random_admissible_family(&dom, 11).unwrap();
        assert_eq!(fam.range(), (-1, 1));
        assert_eq!(fam.coefficient(-1).unwrap().component_field(1).sup_norm(), 0.0);
        assert_eq!(fam.coefficient(1).unwrap().component_field(0).sup_norm(), 0.0);
        assert_eq!(fam, random_admissible_family(&dom, 11).unwrap());
    }

    #[test]
    fn higgs_term_is_nilpotent() {
        let dom = Domain::unit_torus(8).unwrap();
        let sol = SolutionData::constant(&dom, 0.3, C64::new(1.0, 2.0), Target::S3).unwrap();
        let phi = family_from_uq(&sol)
            .unwrap()
            .coefficient(-1)
            .unwrap()
            .component_field(0);
        assert_eq!(phi.matmul(&phi).unwrap().sup_norm(), 0.0);
    }

    #[test]
    fn constant_solver() {
        let u0 = solve_constant(ONE, Target::S3).unwrap();
        let dom = Domain::unit_torus(16).unwrap();
        let fam = family_from_uq(&SolutionData::constant(&dom, u0, ONE, Target::S3).unwrap()).unwrap();
        assert!(fam.flatness_residual().values().all(|r| *r < 1e-12));
        let rotated = solve_constant(C64::from_polar(1.0, 1.1), Target::S3).unwrap();
        assert!((rotated - u0).abs() < 1e-14);
        assert!(matches!(
            solve_constant(ONE, Target::H3),
            Err(Error::NoConstantSolution(_))
        ));
        assert!(matches!(solve_constant(ZERO, Target::S3), Err(Error::Degenerate(_))));
    }

    #[test]
    fn constant_solution_matches_closed_form() {
        // Oracle: the defect at constant data is |q|² e^{-2u} − e^{2u}.
        for q in [0.3, 1.0, 4.0] {
            let u0 = solve_constant(C64::new(q, 0.0), Target::S3).unwrap();
            assert!((u0 - 0.5 * f64::ln(q)).abs() < 1e-13);
        }
    }

    #[test]
    fn strip_rhs_matches_expansion() {
        // Independent expansion of the λ⁰ curvature for x-only data:
        // u'' = 4(|q|² e^{-2u} + e^{2u}) for the hyperbolic target.
        let q = C64::new(0.07, -0.05);
        for (u, ux) in [(-1.0f64, 0.0f64), (0.3, 1.2), (-2.0, -0.4)] {
            let expect = 4.0 * (q.norm_sqr() * (-2.0 * u).exp() + (2.0 * u).exp());
            assert!((strip_acceleration(u, ux, q, Target::H3) - expect).abs() < 1e-12 * expect);
        }
    }

    #[test]
    fn strip_solution_and_convergence() {
        let q0 = C64::new(0.1, 0.0);
        let u_init = slowest_initial_value(q0, Target::H3);
        assert!((u_init - 0.5 * f64::ln(0.1)).abs() < 1e-6);
        let spec = |nx: usize| StripSpec {
            q0,
            u_init,
            du_init: 0.0,
            x_range: [0.0, 0.5],
            y_range: [0.0, 0.25],
            nx,
            ny: 16,
            steps: 4 * (nx - 1),
        };
        let residual = |nx: usize| {
            let sol = solve_gordon_strip(&spec(nx), Target::H3).unwrap();
            family_from_uq(&sol).unwrap().flatness_residual()[&0]
        };
        let (coarse, fine) = (residual(65), residual(129));
        assert!(fine < 1e-8, "residual {fine:e}");
        assert!(coarse / fine >= 8.0, "ratio {}", coarse / fine);
    }

    #[test]
    fn strip_blow_up_is_reported() {
        let spec = StripSpec {
            q0: ONE,
            u_init: 0.0,
            du_init: 5.0,
            x_range: [0.0, 3.0],
            y_range: [0.0, 1.0],
            nx: 64,
            ny: 8,
            steps: 512,
        };
        match solve_gordon_strip(&spec, Target::H3) {
            Err(Error::PartialSolution { achieved, requested }) => {
                assert!(achieved < requested)
            }
            other => panic!("expected partial solution, got {other:?}"),
        }
    }

    #[test]
    fn random_gauges_are_deterministic() {
        let dom = Domain::unit_torus(16).unwrap();
        let a = random_lift_perturbation(&dom, 7, 3, 6).unwrap();
        let b = random_lift_perturbation(&dom, 7, 3, 6).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.det_winding().unwrap(), 0);
        let id = random_lift_perturbation(&dom, 7, 0, 6).unwrap();
        assert_eq!(id, GaugeFamily::identity(&dom));
        let g0 = random_constant_gauge(&dom, 3).unwrap();
        let det = g0.coefficients()[&0].mat2(0, 11).determinant();
        assert!((det - ONE).norm() < 1e-12);
        let u = random_unitary(5);
        assert!((u * u.adjoint() - Mat2::identity()).norm() < 1e-14);
    }

    #[test]
    fn rejects_non_holomorphic_q() {
        let dom = Domain::unit_torus(16).unwrap();
        let u = GridField::scalar_fn(&dom, |_| ZERO);
        let q = GridField::scalar_fn(&dom, |z| (I * 2.0 * PI * z.re).exp());
        assert!(SolutionData::new(u, q, Target::S3).is_err());
    }
}
