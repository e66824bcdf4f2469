//! Parallel frames of evaluated families, holonomy fingerprints, and the
//! lightcone model `V = ℋ ⊕ ℝ` of `ℝ^{4,1}` with its surface geometry.
//!
//! Frames solve `dF = −ξ^λ F` with `F(base) = 1`. In the lightcone model a
//! hermitian matrix `A` and a real `r` carry the quadratic form
//! `q(A, r) = −det A + r²`; the surface of an H³-type family is
//! `f̂ = (F̄ᵀF, 1)` with `F` the frame at `λ = 1`. Because `⟨f̂, (0, 1)⟩ = 1`,
//! the matrix part lies on the hyperboloid `det A = 1`, which is hyperbolic
//! space of curvature −1; the geometric quantities are computed there.

use nalgebra::{Matrix4, SMatrix, SVector};
use serde::{Deserialize, Serialize};

use crate::energy_residue::{energy_density, higgs_pair};
use crate::error::{Error, Result};
use crate::harmonic_builders::{family_from_uq, SolutionData, Target};
use crate::lambda_families::{Involution, LambdaFamily};
use crate::surface_grid::{periodic_upsample, Domain, DomainKind, GridField, Mat2, C64, I, ONE, ZERO};

pub type Mat5 = SMatrix<C64, 5, 5>;
pub type Vec5 = SVector<C64, 5>;

/// Transport mismatch above which a family is reported as not flat.
pub const FLATNESS_ABORT: f64 = 1e-5;

/// Condition number above which the ψ-frame is treated as degenerate.
pub const MAX_CONDITION: f64 = 1e8;

/// Grid points excluded next to each patch edge when comparing quantities
/// built from second derivatives.
pub const INTERIOR_MARGIN: usize = 4;

/// RK4 steps per grid interval used for fingerprints.
pub const FINGERPRINT_SUBSTEPS: usize = 8;

/// Smallest conformal factor `e^{2u}` accepted as an immersion.
pub const MIN_CONFORMAL_FACTOR: f64 = 1e-8;

/// Solution of `dF = −ξ^λ F` on the grid with `F(base) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrameField {
    domain: Domain,
    lambda: C64,
    frames: Vec<Mat2>,
    base: (usize, usize),
    path_residual: f64,
}

impl FrameField {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn lambda(&self) -> C64 {
        self.lambda
    }

    pub fn frames(&self) -> &[Mat2] {
        &self.frames
    }

    pub fn frame(&self, idx: usize) -> Mat2 {
        self.frames[idx]
    }

    pub fn base(&self) -> (usize, usize) {
        self.base
    }

    /// Sup-norm mismatch between row-first and column-first transport.
    pub fn path_residual(&self) -> f64 {
        self.path_residual
    }

    /// `sup |det F − 1|`.
    pub fn det_defect(&self) -> f64 {
        self.frames
            .iter()
            .map(|f| (f.determinant() - ONE).norm())
            .fold(0.0, f64::max)
    }

    pub fn as_field(&self) -> GridField {
        let mut out = GridField::identity(&self.domain, 2);
        for (idx, f) in self.frames.iter().enumerate() {
            out.set_mat2(0, idx, f);
        }
        out
    }
}

/// Connection matrices along unit index steps in the two grid directions.
fn directional_connection(xi: &GridField) -> (Vec<Mat2>, Vec<Mat2>) {
    let domain = xi.domain();
    let step_i = domain.point(1, 0) - domain.point(0, 0);
    let step_j = domain.point(0, 1) - domain.point(0, 0);
    let along = |v: C64| -> Vec<Mat2> {
        (0..domain.len())
            .map(|idx| xi.mat2(0, idx) * v + xi.mat2(1, idx) * v.conj())
            .collect()
    };
    (along(step_i), along(step_j))
}

/// Connection samples along one grid line, evaluable at fractional indices.
///
/// Periodic lines are refined by band-limited interpolation to every RK4
/// stage position; open lines use cubic Lagrange interpolation.
enum LineSampler<'a> {
    Periodic { fine: Vec<Mat2>, factor: usize },
    Open(&'a [Mat2]),
}

impl<'a> LineSampler<'a> {
    fn new(line: &'a [Mat2], periodic: bool, substeps: usize) -> Self {
        if !periodic {
            return LineSampler::Open(line);
        }
        let factor = 2 * substeps;
        let mut fine = vec![Mat2::zeros(); line.len() * factor];
        for r in 0..2 {
            for c in 0..2 {
                let entries: Vec<C64> = line.iter().map(|m| m[(r, c)]).collect();
                for (k, v) in periodic_upsample(&entries, factor).into_iter().enumerate() {
                    fine[k][(r, c)] = v;
                }
            }
        }
        LineSampler::Periodic { fine, factor }
    }

    fn at(&self, pos: f64) -> Mat2 {
        match self {
            LineSampler::Periodic { fine, factor } => {
                let k = (pos * *factor as f64).round() as isize;
                fine[k.rem_euclid(fine.len() as isize) as usize]
            }
            LineSampler::Open(line) => cubic_sample(line, pos),
        }
    }
}

/// Cubic Lagrange interpolation of line samples at a fractional index.
fn cubic_sample(line: &[Mat2], pos: f64) -> Mat2 {
    let n = line.len() as isize;
    let k = pos.floor() as isize;
    if pos == k as f64 && (0..n).contains(&k) {
        return line[k as usize];
    }
    let base = (k - 1).clamp(0, n - 4);
    let t = pos - base as f64;
    let w = [
        -(t - 1.0) * (t - 2.0) * (t - 3.0) / 6.0,
        t * (t - 2.0) * (t - 3.0) / 2.0,
        -t * (t - 1.0) * (t - 3.0) / 2.0,
        t * (t - 1.0) * (t - 2.0) / 6.0,
    ];
    (0..4).fold(Mat2::zeros(), |acc, m| {
        acc + line[(base + m as isize) as usize] * C64::new(w[m], 0.0)
    })
}

/// RK4 transport along a line of connection samples, `steps` grid intervals
/// from `start` in the given direction; returns the frames at every node
/// visited (including the start).
fn walk(line: &LineSampler, start: usize, steps: usize, forward: bool, f0: Mat2, substeps: usize) -> Vec<Mat2> {
    let sign = if forward { 1.0 } else { -1.0 };
    let dt = sign / substeps as f64;
    // dF/ds = −A(s) F in the index parameter s.
    let rhs = |pos: f64, f: &Mat2| -(line.at(pos) * f) * C64::new(dt, 0.0);
    let mut out = Vec::with_capacity(steps + 1);
    let mut f = f0;
    out.push(f);
    let mut pos = start as f64;
    for _ in 0..steps {
        for _ in 0..substeps {
            let k1 = rhs(pos, &f);
            let k2 = rhs(pos + 0.5 * dt, &(f + k1 * C64::new(0.5, 0.0)));
            let k3 = rhs(pos + 0.5 * dt, &(f + k2 * C64::new(0.5, 0.0)));
            let k4 = rhs(pos + dt, &(f + k3));
            f += (k1 + k2 * C64::new(2.0, 0.0) + k3 * C64::new(2.0, 0.0) + k4) * C64::new(1.0 / 6.0, 0.0);
            pos += dt;
        }
        pos = pos.round();
        out.push(f);
    }
    out
}

/// Transport from `start` to both ends of a non-periodic line.
fn sweep(line: &[Mat2], periodic: bool, start: usize, f0: Mat2, substeps: usize) -> Vec<Mat2> {
    let n = line.len();
    let sampler = LineSampler::new(line, periodic, substeps);
    let mut out = vec![f0; n];
    for (k, f) in walk(&sampler, start, n - 1 - start, true, f0, substeps)
        .into_iter()
        .enumerate()
    {
        out[start + k] = f;
    }
    for (k, f) in walk(&sampler, start, start, false, f0, substeps)
        .into_iter()
        .enumerate()
    {
        out[start - k] = f;
    }
    out
}

fn row(values: &[Mat2], domain: &Domain, j: usize) -> Vec<Mat2> {
    (0..domain.nx).map(|i| values[domain.index(i, j)]).collect()
}

fn column(values: &[Mat2], domain: &Domain, i: usize) -> Vec<Mat2> {
    (0..domain.ny).map(|j| values[domain.index(i, j)]).collect()
}

fn transport_grid(
    domain: &Domain,
    a_i: &[Mat2],
    a_j: &[Mat2],
    base: (usize, usize),
    row_first: bool,
    substeps: usize,
) -> Vec<Mat2> {
    let (i0, j0) = base;
    let periodic = domain.is_torus();
    let mut frames = vec![Mat2::identity(); domain.len()];
    if row_first {
        let spine = sweep(&row(a_i, domain, j0), periodic, i0, Mat2::identity(), substeps);
        for (i, f0) in spine.into_iter().enumerate() {
            for (j, f) in sweep(&column(a_j, domain, i), periodic, j0, f0, substeps)
                .into_iter()
                .enumerate()
            {
                frames[domain.index(i, j)] = f;
            }
        }
    } else {
        let spine = sweep(&column(a_j, domain, i0), periodic, j0, Mat2::identity(), substeps);
        for (j, f0) in spine.into_iter().enumerate() {
            for (i, f) in sweep(&row(a_i, domain, j), periodic, i0, f0, substeps)
                .into_iter()
                .enumerate()
            {
                frames[domain.index(i, j)] = f;
            }
        }
    }
    frames
}

/// Parallel frame of `d + ξ^{λ0}` with one RK4 step per grid interval.
pub fn integrate_frame(fam: &LambdaFamily, lambda0: C64, base: (usize, usize)) -> Result<FrameField> {
    integrate_frame_with(fam, lambda0, base, 1)
}

/// Parallel frame with `substeps` RK4 steps per grid interval.
///
/// Transports along the base row and then up and down every column; the
/// column-first transport is computed as well and their sup-norm mismatch is
/// the path-independence residual.
pub fn integrate_frame_with(
    fam: &LambdaFamily,
    lambda0: C64,
    base: (usize, usize),
    substeps: usize,
) -> Result<FrameField> {
    if lambda0 == ZERO {
        return Err(Error::Precondition("frames need λ0 ≠ 0".into()));
    }
    let domain = *fam.domain();
    if base.0 >= domain.nx || base.1 >= domain.ny {
        return Err(Error::Shape(format!("basepoint {base:?} outside the grid")));
    }
    let xi = fam.evaluate(lambda0)?;
    let (a_i, a_j) = directional_connection(&xi);
    let substeps = substeps.max(1);
    let frames = transport_grid(&domain, &a_i, &a_j, base, true, substeps);
    let other = transport_grid(&domain, &a_i, &a_j, base, false, substeps);
    let path_residual = frames
        .iter()
        .zip(&other)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    if !(path_residual <= FLATNESS_ABORT) {
        return Err(Error::FlatnessViolation(path_residual));
    }
    Ok(FrameField {
        domain,
        lambda: lambda0,
        frames,
        base,
        path_residual,
    })
}

/// `sup |(F^λ)^{-1} − conj(F^{σ(λ)})ᵀ|` for frames at `λ` and at `σ(λ)`.
pub fn reality_defect(f: &FrameField, f_sigma: &FrameField) -> Result<f64> {
    if f.domain != f_sigma.domain || f.base != f_sigma.base {
        return Err(Error::Shape("frames live on different grids or basepoints".into()));
    }
    let mut worst = 0.0f64;
    for (a, b) in f.frames.iter().zip(&f_sigma.frames) {
        let inv = a
            .try_inverse()
            .ok_or_else(|| Error::Degenerate("singular frame".into()))?;
        worst = worst.max((inv - b.adjoint()).norm());
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Loop {
    XCycle,
    YCycle,
}

/// Parallel transport once around a generating cycle of a torus, starting
/// and ending at grid point `(0, 0)`.
pub fn holonomy(fam: &LambdaFamily, lambda0: C64, cycle: Loop) -> Result<Mat2> {
    holonomy_with(fam, lambda0, cycle, 1)
}

pub fn holonomy_with(fam: &LambdaFamily, lambda0: C64, cycle: Loop, substeps: usize) -> Result<Mat2> {
    let domain = *fam.domain();
    if !domain.is_torus() {
        return Err(Error::UnsupportedDomain("holonomy needs a torus".into()));
    }
    if lambda0 == ZERO {
        return Err(Error::Precondition("holonomy needs λ0 ≠ 0".into()));
    }
    let xi = fam.evaluate(lambda0)?;
    let (a_i, a_j) = directional_connection(&xi);
    let (line, n) = match cycle {
        Loop::XCycle => (row(&a_i, &domain, 0), domain.nx),
        Loop::YCycle => (column(&a_j, &domain, 0), domain.ny),
    };
    let substeps = substeps.max(1);
    let frames = walk(
        &LineSampler::new(&line, true, substeps),
        0,
        n,
        true,
        Mat2::identity(),
        substeps,
    );
    Ok(frames[n])
}

/// Gauge-invariant traces at each λ-sample: both cycle holonomies on a
/// torus; on a patch, the transport from the lower-left to the upper-right
/// corner (along the bottom row, then the right column).
pub fn fingerprint(fam: &LambdaFamily, samples: &[C64]) -> Result<Vec<Vec<C64>>> {
    let domain = *fam.domain();
    samples
        .iter()
        .map(|&lambda| {
            if domain.is_torus() {
                Ok(vec![
                    holonomy_with(fam, lambda, Loop::XCycle, FINGERPRINT_SUBSTEPS)?.trace(),
                    holonomy_with(fam, lambda, Loop::YCycle, FINGERPRINT_SUBSTEPS)?.trace(),
                ])
            } else {
                Ok(vec![corner_transport(fam, lambda)?.trace()])
            }
        })
        .collect()
}

fn corner_transport(fam: &LambdaFamily, lambda: C64) -> Result<Mat2> {
    if lambda == ZERO {
        return Err(Error::Precondition("transport needs λ ≠ 0".into()));
    }
    let domain = *fam.domain();
    let xi = fam.evaluate(lambda)?;
    let (a_i, a_j) = directional_connection(&xi);
    let bottom_line = row(&a_i, &domain, 0);
    let bottom = walk(
        &LineSampler::Open(&bottom_line),
        0,
        domain.nx - 1,
        true,
        Mat2::identity(),
        FINGERPRINT_SUBSTEPS,
    );
    let right = column(&a_j, &domain, domain.nx - 1);
    let up = walk(
        &LineSampler::Open(&right),
        0,
        domain.ny - 1,
        true,
        bottom[domain.nx - 1],
        FINGERPRINT_SUBSTEPS,
    );
    Ok(up[domain.ny - 1])
}

/// Largest deviation from the reality relation of an involution among the
/// fingerprints: `t(λ) = conj t(σ(λ))` for τ and ρ, `t(λ) = t(−λ)` for N.
pub fn fingerprint_deviation(fam: &LambdaFamily, sigma: Involution, samples: &[C64]) -> Result<f64> {
    let mapped: Vec<C64> = samples.iter().map(|&l| sigma.map_lambda(l)).collect();
    let a = fingerprint(fam, samples)?;
    let b = fingerprint(fam, &mapped)?;
    let mut worst = 0.0f64;
    for (ta, tb) in a.iter().zip(&b) {
        for (x, y) in ta.iter().zip(tb) {
            let y = if sigma.is_antiholomorphic() { y.conj() } else { *y };
            worst = worst.max((x - y).norm());
        }
    }
    Ok(worst)
}

/// Element `(A, r)` of `V ⊗ ℂ = gl(2, ℂ) ⊕ ℂ`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VVector {
    pub a: Mat2,
    pub r: C64,
}

impl VVector {
    pub fn new(a: Mat2, r: C64) -> Self {
        VVector { a, r }
    }

    /// Complex-linear inverse of [`isometry_psi`].
    pub fn coords(&self) -> Vec5 {
        let a = &self.a;
        Vec5::new(
            (a[(0, 0)] + a[(1, 1)]) * 0.5,
            (a[(0, 0)] - a[(1, 1)]) * 0.5,
            (a[(0, 1)] + a[(1, 0)]) * 0.5,
            (a[(0, 1)] - a[(1, 0)]) / (I * 2.0),
            self.r,
        )
    }

    pub fn from_coords(x: &Vec5) -> Self {
        VVector {
            a: Mat2::new(x[0] + x[1], x[2] + I * x[3], x[2] - I * x[3], x[0] - x[1]),
            r: x[4],
        }
    }

    /// Deviation from the real form: `|A − Āᵀ| + |Im r|`.
    pub fn reality_defect(&self) -> f64 {
        (self.a - self.a.adjoint()).norm() + self.r.im.abs()
    }
}

/// `Ψ(x) = ([[x0+x1, x2+ix3], [x2−ix3, x0−x1]], x4)`.
pub fn isometry_psi(x: [f64; 5]) -> VVector {
    VVector::from_coords(&Vec5::from_iterator(x.iter().map(|v| C64::new(*v, 0.0))))
}

/// `q(A, r) = −det A + r²`.
pub fn minkowski_q(v: &VVector) -> C64 {
    -v.a.determinant() + v.r * v.r
}

/// Polarisation of [`minkowski_q`]: `−½(tr A tr B − tr AB) + r s`.
pub fn minkowski_form(v: &VVector, w: &VVector) -> C64 {
    -(v.a.trace() * w.a.trace() - (v.a * w.a).trace()) * 0.5 + v.r * w.r
}

/// `q` on `ℝ^{4,1}` coordinates: `−x0² + x1² + x2² + x3² + x4²`.
pub fn coordinate_q(x: [f64; 5]) -> f64 {
    -x[0] * x[0] + x[1] * x[1] + x[2] * x[2] + x[3] * x[3] + x[4] * x[4]
}

/// The lift `f̂` of the surface with the basepoint it was built from.
#[derive(Clone, Debug, PartialEq)]
pub struct HatF {
    domain: Domain,
    base: (usize, usize),
    values: Vec<VVector>,
}

impl HatF {
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn base(&self) -> (usize, usize) {
        self.base
    }

    pub fn values(&self) -> &[VVector] {
        &self.values
    }

    /// `sup |q(f̂)|`.
    pub fn max_q(&self) -> f64 {
        self.values.iter().map(|v| minkowski_q(v).norm()).fold(0.0, f64::max)
    }

    /// Real `ℝ^{4,1}` coordinates per point.
    fn real_coords(&self) -> Vec<[f64; 5]> {
        self.values
            .iter()
            .map(|v| {
                let c = v.coords();
                [c[0].re, c[1].re, c[2].re, c[3].re, c[4].re]
            })
            .collect()
    }
}

/// `f̂ = ((F^{−1})^{−1} F^{1}, 1)` from the frames at `λ = 1` and `λ = −1`.
///
/// For families with the H³ reality the matrix part is `F̄ᵀF`, hermitian and
/// positive; anything else is rejected.
pub fn embed_hatf(fp: &FrameField, fm: &FrameField) -> Result<HatF> {
    if (fp.lambda - ONE).norm() > 1e-14 || (fm.lambda + ONE).norm() > 1e-14 {
        return Err(Error::Precondition(
            "embedding needs the frames at λ = 1 and λ = −1".into(),
        ));
    }
    if fp.domain != fm.domain || fp.base != fm.base {
        return Err(Error::Shape("frames live on different grids or basepoints".into()));
    }
    let mut values = Vec::with_capacity(fp.frames.len());
    for (idx, (p, m)) in fp.frames.iter().zip(&fm.frames).enumerate() {
        let (i, j) = fp.domain.coords(idx);
        let inv = m.try_inverse().ok_or(Error::SingularGauge {
            i,
            j,
            det: m.determinant().norm(),
        })?;
        let x = inv * p;
        let defect = (x - x.adjoint()).norm();
        if defect > 1e-7 * x.norm() {
            return Err(Error::Unsupported(format!(
                "frames do not satisfy the H3 reality relation at ({i}, {j}): {defect:e}"
            )));
        }
        if x.trace().re <= 0.0 || x.determinant().re <= 0.0 {
            return Err(Error::Unsupported(format!("matrix part is not positive at ({i}, {j})")));
        }
        values.push(VVector::new(x, ONE));
    }
    Ok(HatF {
        domain: fp.domain,
        base: fp.base,
        values,
    })
}

fn e12() -> Mat2 {
    Mat2::new(ZERO, ONE, ZERO, ZERO)
}

fn e21() -> Mat2 {
    Mat2::new(ZERO, ZERO, ONE, ZERO)
}

fn diag_pm() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

/// `ψ1 = (F̄ᵀF, 0)`, `ψ2 = (F̄ᵀE12F, 0)`, `ψ3 = (F̄ᵀE21F, 0)`, `ψ4 = (0, 1)`,
/// `ψ5 = (F̄ᵀ diag(1, −1) F, 0)` at every grid point.
pub fn psi_frame(f: &FrameField) -> Vec<[VVector; 5]> {
    f.frames
        .iter()
        .map(|m| {
            let h = m.adjoint();
            let v = |u: Mat2| VVector::new(h * u * m, ZERO);
            [
                v(Mat2::identity()),
                v(e12()),
                v(e21()),
                VVector::new(Mat2::zeros(), ONE),
                v(diag_pm()),
            ]
        })
        .collect()
}

/// Closed-form `dz` and `dz̄` connection matrices of the SO(5, ℂ) family in
/// the ψ-frame, with the convention `dψ_j = Σ_i ψ_i Ω_ij`.
pub fn so5_matrices(u: f64, u_z: C64, u_zbar: C64, q: C64, lambda: C64) -> (Mat5, Mat5) {
    let eu = C64::new(u.exp(), 0.0);
    let emu = C64::new((-u).exp(), 0.0);
    let li = ONE / lambda;
    let mut mz = Mat5::zeros();
    mz[(0, 2)] = -eu;
    mz[(1, 0)] = -eu * 2.0;
    mz[(1, 1)] = u_z;
    mz[(2, 2)] = -u_z;
    mz[(2, 4)] = li * q * emu * 2.0;
    mz[(4, 1)] = -li * q * emu;
    let mut mzb = Mat5::zeros();
    mzb[(0, 1)] = -eu;
    mzb[(1, 1)] = -u_zbar;
    mzb[(1, 4)] = lambda * q.conj() * emu * 2.0;
    mzb[(2, 0)] = -eu * 2.0;
    mzb[(2, 2)] = u_zbar;
    mzb[(4, 2)] = -lambda * q.conj() * emu;
    (mz, mzb)
}

/// Rescale the blocks coupling the sphere bundle (first four slots) to its
/// normal line (fifth slot): `λ^{-1}` on `dz`, `λ` on `dz̄`.
fn spectral_deform(m: &Mat5, factor: C64) -> Mat5 {
    let mut out = *m;
    for i in 0..4 {
        out[(i, 4)] *= factor;
        out[(4, i)] *= factor;
    }
    out
}

/// Numerically differentiated connection matrices of the ψ-frame at every
/// grid point, from least-squares solves of `Ψ Ω = dΨ`.
pub fn psi_connection(f: &FrameField) -> Result<(Vec<Mat5>, Vec<Mat5>)> {
    let domain = *f.domain();
    let psi = psi_frame(f);
    let coords: Vec<[Vec5; 5]> = psi
        .iter()
        .map(|p| {
            [
                p[0].coords(),
                p[1].coords(),
                p[2].coords(),
                p[3].coords(),
                p[4].coords(),
            ]
        })
        .collect();
    let mut dz = vec![Mat5::zeros(); domain.len()];
    let mut dzb = vec![Mat5::zeros(); domain.len()];
    for j in 0..5 {
        for c in 0..5 {
            let series: Vec<C64> = coords.iter().map(|p| p[j][c]).collect();
            let (a, b) = domain.partial_z_zbar(&series);
            for idx in 0..domain.len() {
                dz[idx][(c, j)] = a[idx];
                dzb[idx][(c, j)] = b[idx];
            }
        }
    }
    let mut oz = Vec::with_capacity(domain.len());
    let mut ozb = Vec::with_capacity(domain.len());
    for idx in 0..domain.len() {
        let frame = Mat5::from_fn(|c, j| coords[idx][j][c]);
        let svd = frame.svd(true, true);
        let smax = svd.singular_values.max();
        let smin = svd.singular_values.min();
        if !(smin > 0.0) || smax / smin > MAX_CONDITION {
            return Err(Error::IllConditioned(if smin > 0.0 {
                smax / smin
            } else {
                f64::INFINITY
            }));
        }
        let eps = smax * 1e-14;
        oz.push(svd.solve(&dz[idx], eps).map_err(|e| Error::Degenerate(e.into()))?);
        ozb.push(svd.solve(&dzb[idx], eps).map_err(|e| Error::Degenerate(e.into()))?);
    }
    Ok((oz, ozb))
}

/// Sup deviation, over grid points and λ-samples, between the numerically
/// differentiated ψ-frame connection (deformed to λ) and the closed form.
pub fn so5_connection_check(sol: &SolutionData, f: &FrameField, samples: &[C64]) -> Result<f64> {
    if sol.target != Target::H3 {
        return Err(Error::Precondition("the ψ-frame check needs H3 data".into()));
    }
    if sol.domain() != f.domain() || (f.lambda - ONE).norm() > 1e-14 {
        return Err(Error::Precondition(
            "frame must be the λ = 1 frame of the same solution".into(),
        ));
    }
    let (oz, ozb) = psi_connection(f)?;
    let (u_z, u_zbar) = sol.u_derivatives()?;
    let mut worst = 0.0f64;
    for &lambda in samples {
        for idx in 0..oz.len() {
            let (mz, mzb) = so5_matrices(
                sol.u.component(0)[idx].re,
                u_z.component(0)[idx],
                u_zbar.component(0)[idx],
                sol.q.component(0)[idx],
                lambda,
            );
            let dz = spectral_deform(&oz[idx], ONE / lambda) - mz;
            let dzb = spectral_deform(&ozb[idx], lambda) - mzb;
            worst = worst.max(dz.camax()).max(dzb.camax());
        }
    }
    Ok(worst)
}

/// Coordinates of a 2×2 matrix in the basis `diag(1,−1), E12, −E21, 1`
/// of the frame `ẽ1, ẽ2, ẽ3, ẽ5`, placed in slots 0, 1, 2, 4.
fn tilde_coords(m: &Mat2) -> Vec5 {
    Vec5::new(
        (m[(0, 0)] - m[(1, 1)]) * 0.5,
        m[(0, 1)],
        -m[(1, 0)],
        ZERO,
        (m[(0, 0)] + m[(1, 1)]) * 0.5,
    )
}

/// Connection matrices of `D̂^λ(A, f) = (dA + ξ̂^{−λ}A − Aξ̂^λ, df)` in the
/// frame `ẽ1 = e5, ẽ2 = e2, ẽ3 = −e3, ẽ4 = e4, ẽ5 = e1`.
pub fn dual_so5_matrices(famhat: &LambdaFamily, lambda: C64) -> Result<(Vec<Mat5>, Vec<Mat5>)> {
    let plus = famhat.evaluate(lambda)?;
    let minus = famhat.evaluate(-lambda)?;
    let basis = [diag_pm(), e12(), -e21(), Mat2::zeros(), Mat2::identity()];
    let n = famhat.domain().len();
    let mut out = (Vec::with_capacity(n), Vec::with_capacity(n));
    for idx in 0..n {
        let mut pair = [Mat5::zeros(), Mat5::zeros()];
        for (c, m) in pair.iter_mut().enumerate() {
            let (xm, xp) = (minus.mat2(c, idx), plus.mat2(c, idx));
            for (j, e) in basis.iter().enumerate() {
                let col = tilde_coords(&(xm * e - e * xp));
                m.set_column(j, &col);
            }
        }
        out.0.push(pair[0]);
        out.1.push(pair[1]);
    }
    Ok(out)
}

/// Sup deviation between the dual-surface SO(5, ℂ) connection in the
/// ẽ-frame and the closed-form ψ-frame matrices.
pub fn dual_so5_equivalence(sol: &SolutionData, famhat: &LambdaFamily, samples: &[C64]) -> Result<f64> {
    if sol.target != Target::H3 {
        return Err(Error::Precondition("the dual-surface check needs H3 data".into()));
    }
    if sol.domain() != famhat.domain() {
        return Err(Error::Shape("solution and dual family live on different grids".into()));
    }
    let (u_z, u_zbar) = sol.u_derivatives()?;
    let mut worst = 0.0f64;
    for &lambda in samples {
        let (dz, dzb) = dual_so5_matrices(famhat, lambda)?;
        for idx in 0..dz.len() {
            let (mz, mzb) = so5_matrices(
                sol.u.component(0)[idx].re,
                u_z.component(0)[idx],
                u_zbar.component(0)[idx],
                sol.q.component(0)[idx],
                lambda,
            );
            worst = worst.max((dz[idx] - mz).camax()).max((dzb[idx] - mzb).camax());
        }
    }
    Ok(worst)
}

/// Hyperbolic-space geometry of `f̂` per grid point.
struct SurfaceGeometry {
    metric: Vec<[f64; 3]>,
    mean_curvature: Vec<f64>,
    gauss_curvature: Vec<f64>,
    willmore: Vec<f64>,
}

fn lorentz4(a: &[f64; 4], b: &[f64; 4]) -> f64 {
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3]
}

/// Vector `n` with `⟨n, a⟩ = ⟨n, b⟩ = ⟨n, c⟩ = 0` for the form `diag(−1, 1, 1, 1)`.
fn lorentz_cross(a: &[f64; 4], b: &[f64; 4], c: &[f64; 4]) -> [f64; 4] {
    let m = Matrix4::from_fn(|r, k| match r {
        0 => a[k],
        1 => b[k],
        2 => c[k],
        _ => 0.0,
    });
    let mut lower = [0.0; 4];
    for (k, slot) in lower.iter_mut().enumerate() {
        let mut e = m;
        e[(3, k)] = 1.0;
        *slot = e.determinant();
    }
    [-lower[0], lower[1], lower[2], lower[3]]
}

fn derivative_fields(domain: &Domain, values: &[[f64; 5]]) -> [Vec<[f64; 5]>; 5] {
    let mut dx = vec![[0.0; 5]; values.len()];
    let mut dy = dx.clone();
    let mut dxx = dx.clone();
    let mut dxy = dx.clone();
    let mut dyy = dx.clone();
    for c in 0..5 {
        let f: Vec<C64> = values.iter().map(|v| C64::new(v[c], 0.0)).collect();
        let fx = domain.partial_x(&f);
        let fy = domain.partial_y(&f);
        let fxx = domain.partial_x(&fx);
        let fxy = domain.partial_y(&fx);
        let fyy = domain.partial_y(&fy);
        for idx in 0..values.len() {
            dx[idx][c] = fx[idx].re;
            dy[idx][c] = fy[idx].re;
            dxx[idx][c] = fxx[idx].re;
            dxy[idx][c] = fxy[idx].re;
            dyy[idx][c] = fyy[idx].re;
        }
    }
    [dx, dy, dxx, dxy, dyy]
}

fn head4(v: &[f64; 5]) -> [f64; 4] {
    [v[0], v[1], v[2], v[3]]
}

fn surface_geometry(hatf: &HatF) -> Result<SurfaceGeometry> {
    let domain = *hatf.domain();
    let x = hatf.real_coords();
    let [dx, dy, dxx, dxy, dyy] = derivative_fields(&domain, &x);
    let n = x.len();
    let mut out = SurfaceGeometry {
        metric: Vec::with_capacity(n),
        mean_curvature: Vec::with_capacity(n),
        gauss_curvature: Vec::with_capacity(n),
        willmore: Vec::with_capacity(n),
    };
    for idx in 0..n {
        let (p, a, b) = (head4(&x[idx]), head4(&dx[idx]), head4(&dy[idx]));
        let (e, f, g) = (lorentz4(&a, &a), lorentz4(&a, &b), lorentz4(&b, &b));
        let det_g = e * g - f * f;
        if !(det_g > 0.0) {
            let (i, j) = domain.coords(idx);
            return Err(Error::DegenerateSurface(format!(
                "induced metric degenerates at ({i}, {j})"
            )));
        }
        let mut normal = lorentz_cross(&p, &a, &b);
        let nn = lorentz4(&normal, &normal);
        if !(nn > 0.0) {
            let (i, j) = domain.coords(idx);
            return Err(Error::DegenerateSurface(format!("no spacelike normal at ({i}, {j})")));
        }
        normal.iter_mut().for_each(|v| *v /= nn.sqrt());
        let l = lorentz4(&head4(&dxx[idx]), &normal);
        let m = lorentz4(&head4(&dxy[idx]), &normal);
        let nc = lorentz4(&head4(&dyy[idx]), &normal);
        let h = (l * g - 2.0 * m * f + nc * e) / (2.0 * det_g);
        let shape_det = (l * nc - m * m) / det_g;
        // Ambient sectional curvature −1.
        let k = -1.0 + shape_det;
        out.metric.push([e, f, g]);
        out.mean_curvature.push(h);
        out.gauss_curvature.push(k);
        out.willmore.push((h * h - k - 1.0) * det_g.sqrt());
    }
    Ok(out)
}

/// One CSV row of the Willmore comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WillmoreRow {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub integrand_a: f64,
    pub integrand_b: f64,
    pub integrand_c: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

/// Pointwise Willmore integrands per `dx dy` and their comparison.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WillmoreReport {
    pub rows: Vec<WillmoreRow>,
    /// `g_xx / e^{2u}` at the basepoint.
    pub metric_factor: f64,
    /// `sup |g − factor·e^{2u}·δ| / (factor·e^{2u})` on the interior.
    pub metric_deviation: f64,
    /// `sup |(a) − (b)|` over the grid.
    pub max_algebraic_vs_frame: f64,
    /// `sup |(a) − (c)|` on the interior.
    pub max_algebraic_vs_geometric: f64,
    /// `sup |H|` on the interior.
    pub max_mean_curvature: f64,
    /// Induced area of the patch.
    pub area: f64,
    /// Energy of the family over the patch.
    pub energy: f64,
    /// `∫ (b) dx dy`.
    pub willmore_frame: f64,
    /// Energy of the dual-surface family over the patch.
    pub dual_energy: f64,
}

impl WillmoreReport {
    /// `|Area − (−4π E)|`.
    pub fn area_energy_gap(&self) -> f64 {
        (self.area + 4.0 * std::f64::consts::PI * self.energy).abs()
    }

    /// `|∫(b) − 4π E(ŝ)|`.
    pub fn willmore_energy_gap(&self) -> f64 {
        (self.willmore_frame - 4.0 * std::f64::consts::PI * self.dual_energy).abs()
    }
}

fn in_interior(domain: &Domain, idx: usize) -> bool {
    if domain.is_torus() {
        return true;
    }
    let (i, j) = domain.coords(idx);
    let m = INTERIOR_MARGIN;
    i >= m && j >= m && i + m < domain.nx && j + m < domain.ny
}

/// Compare the algebraic integrand `2i|q|²e^{−2u} dz∧dz̄`, the frame
/// integrand `−2i tr(Φ̂∧Ψ̂)` of the dual family, and the geometric
/// `(H² − K + K̄) dA` of `f̂` in hyperbolic space, all per `dx dy`.
pub fn willmore_compare(sol: &SolutionData, famhat: &LambdaFamily, hatf: &HatF) -> Result<WillmoreReport> {
    if sol.target != Target::H3 {
        return Err(Error::Precondition("Willmore comparison needs H3 data".into()));
    }
    let domain = *sol.domain();
    if let DomainKind::Torus { .. } = domain.kind {
        return Err(Error::UnsupportedDomain("Willmore comparison runs on patches".into()));
    }
    if famhat.domain() != &domain || hatf.domain() != &domain {
        return Err(Error::Shape("inputs live on different grids".into()));
    }
    let u: Vec<f64> = sol.u.component(0).iter().map(|v| v.re).collect();
    if let Some(idx) = u.iter().position(|v| (2.0 * v).exp() < MIN_CONFORMAL_FACTOR) {
        let (i, j) = domain.coords(idx);
        return Err(Error::DegenerateSurface(format!(
            "e^(2u) below threshold at ({i}, {j})"
        )));
    }
    let q = sol.q.component(0);
    let algebraic: Vec<f64> = (0..domain.len())
        .map(|idx| 4.0 * q[idx].norm_sqr() * (-2.0 * u[idx]).exp())
        .collect();
    let (phi, psi) = higgs_pair(famhat)?;
    let w = phi.wedge(&psi)?;
    // −2i tr(Φ̂∧Ψ̂) with dz∧dz̄ = −2i dx dy.
    let frame: Vec<C64> = w.component(0)[..].chunks(4).map(|m| (m[0] + m[3]) * -4.0).collect();
    let geometry = surface_geometry(hatf)?;
    let base = domain.index(hatf.base.0, hatf.base.1);
    let metric_factor = geometry.metric[base][0] / (2.0 * u[base]).exp();
    let mut report = WillmoreReport {
        rows: Vec::with_capacity(domain.len()),
        metric_factor,
        metric_deviation: 0.0,
        max_algebraic_vs_frame: 0.0,
        max_algebraic_vs_geometric: 0.0,
        max_mean_curvature: 0.0,
        area: 0.0,
        energy: 0.0,
        willmore_frame: 0.0,
        dual_energy: 0.0,
    };
    for idx in 0..domain.len() {
        let z = domain.point_at(idx);
        report.max_algebraic_vs_frame = report
            .max_algebraic_vs_frame
            .max((algebraic[idx] - frame[idx].re).abs().max(frame[idx].im.abs()));
        if in_interior(&domain, idx) {
            let scale = metric_factor * (2.0 * u[idx]).exp();
            let [e, f, g] = geometry.metric[idx];
            let dev = (e - scale).abs().max(f.abs()).max((g - scale).abs()) / scale;
            report.metric_deviation = report.metric_deviation.max(dev);
            report.max_algebraic_vs_geometric = report
                .max_algebraic_vs_geometric
                .max((algebraic[idx] - geometry.willmore[idx]).abs());
            report.max_mean_curvature = report.max_mean_curvature.max(geometry.mean_curvature[idx].abs());
        }
        report.rows.push(WillmoreRow {
            x: z.re,
            y: z.im,
            u: u[idx],
            integrand_a: algebraic[idx],
            integrand_b: frame[idx].re,
            integrand_c: geometry.willmore[idx],
            h: geometry.mean_curvature[idx],
            k: geometry.gauss_curvature[idx],
        });
    }
    let area_density: Vec<C64> = geometry
        .metric
        .iter()
        .map(|[e, f, g]| C64::new((e * g - f * f).sqrt(), 0.0))
        .collect();
    report.area = domain.integrate_dxdy(&area_density).re;
    report.energy = domain.integrate_dxdy(&energy_density(&family_from_uq(sol)?)?).re;
    report.willmore_frame = domain.integrate_dxdy(&frame).re;
    report.dual_energy = domain.integrate_dxdy(&energy_density(famhat)?).re;
    Ok(report)
}

/// Mean curvature sphere data at every grid point.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereCongruence {
    /// Orthonormal basis of the sphere space (real `ℝ^{4,1}` coordinates).
    pub frames: Vec<[[f64; 5]; 4]>,
    /// `(positive, negative)` eigenvalue counts of the restricted form.
    pub signatures: Vec<(usize, usize)>,
    /// Norm of the component of `(0, 1)` orthogonal to the sphere space.
    pub normal_component: Vec<f64>,
}

impl SphereCongruence {
    pub fn all_signature(&self, positive: usize, negative: usize) -> bool {
        self.signatures.iter().all(|s| *s == (positive, negative))
    }

    pub fn max_normal_component(&self, domain: &Domain) -> f64 {
        self.normal_component
            .iter()
            .enumerate()
            .filter(|(idx, _)| in_interior(domain, *idx))
            .map(|(_, v)| *v)
            .fold(0.0, f64::max)
    }
}

fn lorentz5(a: &[f64; 5], b: &[f64; 5]) -> f64 {
    -a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3] + a[4] * b[4]
}

/// Span of `f̂, f̂_x, f̂_y, Δf̂` (the real form of `f̂, f̂_z, f̂_z̄, f̂_zz̄`).
pub fn mean_curvature_sphere(hatf: &HatF) -> Result<SphereCongruence> {
    let domain = *hatf.domain();
    let x = hatf.real_coords();
    let [dx, dy, dxx, _, dyy] = derivative_fields(&domain, &x);
    let n = x.len();
    let mut out = SphereCongruence {
        frames: Vec::with_capacity(n),
        signatures: Vec::with_capacity(n),
        normal_component: Vec::with_capacity(n),
    };
    for idx in 0..n {
        let mut lap = [0.0; 5];
        for c in 0..5 {
            lap[c] = dxx[idx][c] + dyy[idx][c];
        }
        let span = [x[idx], dx[idx], dy[idx], lap];
        let cols = SMatrix::<f64, 5, 4>::from_fn(|r, c| {
            let v = &span[c];
            let norm = v.iter().map(|t| t * t).sum::<f64>().sqrt();
            v[r] / norm
        });
        let sv = cols.singular_values();
        if !(sv.min() > 1e-8 * sv.max()) {
            let (i, j) = domain.coords(idx);
            return Err(Error::Rank { i, j });
        }
        let gram = nalgebra::Matrix4::from_fn(|a, b| lorentz5(&span[a], &span[b]));
        let eig = gram.symmetric_eigen();
        let mut frame = [[0.0; 5]; 4];
        let mut signs = [0.0; 4];
        let (mut pos, mut neg) = (0, 0);
        for k in 0..4 {
            let ev = eig.eigenvalues[k];
            if ev > 0.0 {
                pos += 1;
            } else if ev < 0.0 {
                neg += 1;
            }
            signs[k] = ev.signum();
            let scale = ev.abs().sqrt();
            for r in 0..5 {
                frame[k][r] = (0..4).map(|a| span[a][r] * eig.eigenvectors[(a, k)]).sum::<f64>() / scale;
            }
        }
        let e4 = [0.0, 0.0, 0.0, 0.0, 1.0];
        let mut rest = e4;
        for k in 0..4 {
            let c = signs[k] * lorentz5(&e4, &frame[k]);
            for r in 0..5 {
                rest[r] -= c * frame[k][r];
            }
        }
        out.frames.push(frame);
        out.signatures.push((pos, neg));
        out.normal_component
            .push(rest.iter().map(|t| t * t).sum::<f64>().sqrt());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harmonic_builders::{
        family_from_uq, random_constant_gauge, slowest_initial_value, solve_constant, solve_gordon_strip, StripSpec,
    };
    use crate::transforms::{dual_surface, kernel_splitting, twist};

    fn strip(n: usize) -> SolutionData {
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
        solve_gordon_strip(&spec, Target::H3).unwrap()
    }

    fn s3_family(n: usize) -> LambdaFamily {
        let q0 = ONE;
        let u0 = solve_constant(q0, Target::S3).unwrap();
        let domain = Domain::unit_torus(n).unwrap();
        family_from_uq(&SolutionData::constant(&domain, u0, q0, Target::S3).unwrap()).unwrap()
    }

    fn samples() -> Vec<C64> {
        (0..8)
            .map(|k| C64::from_polar(if k % 2 == 0 { 0.8 } else { 1.25 }, 0.3 + 0.7 * k as f64))
            .collect()
    }

    #[test]
    fn zero_connection_gives_identity_frames() {
        let domain = Domain::patch([0.0, 1.0], [0.0, 1.0], 9, 9).unwrap();
        let f = integrate_frame(&LambdaFamily::zero(&domain), ONE, (4, 4)).unwrap();
        assert!(f.frames().iter().all(|m| *m == Mat2::identity()));
        assert_eq!(f.path_residual(), 0.0);
    }

    fn pure_gauge_error(n: usize) -> (f64, f64) {
        // g = exp(f1 X1) exp(f2 X2), ξ = −dg g^{-1}, so F = g g(base)^{-1}.
        let x1 = Mat2::new(
            C64::new(0.3, 0.1),
            C64::new(0.5, 0.0),
            C64::new(-0.2, 0.4),
            C64::new(-0.3, -0.1),
        );
        let x2 = Mat2::new(ZERO, C64::new(0.0, 0.7), C64::new(0.6, 0.0), ZERO);
        let f1 = |z: C64| (z.re + 2.0 * z.im).sin();
        let f1d = |z: C64| ((z.re + 2.0 * z.im).cos(), 2.0 * (z.re + 2.0 * z.im).cos());
        let f2 = |z: C64| z.re.cos() * z.im;
        let f2d = |z: C64| (-z.re.sin() * z.im, z.re.cos());
        let expm = |m: Mat2| crate::harmonic_builders::expm_traceless(&m);
        let g = |z: C64| expm(x1 * C64::new(f1(z), 0.0)) * expm(x2 * C64::new(f2(z), 0.0));
        let domain = Domain::patch([0.0, 1.0], [0.0, 1.0], n, n).unwrap();
        let xi = GridField::one_form_fn(&domain, |z| {
            let e1 = expm(x1 * C64::new(f1(z), 0.0));
            let rot = e1 * x2 * e1.try_inverse().unwrap();
            let (a, b) = (f1d(z), f2d(z));
            let part = |dx1: f64, dy1: f64, dx2: f64, dy2: f64, sgn: f64| {
                let d1 = C64::new(dx1, -sgn * dy1) * 0.5;
                let d2 = C64::new(dx2, -sgn * dy2) * 0.5;
                -(x1 * d1 + rot * d2)
            };
            (part(a.0, a.1, b.0, b.1, 1.0), part(a.0, a.1, b.0, b.1, -1.0))
        });
        let fam = LambdaFamily::new(&domain, [(0, xi)]).unwrap();
        let base = (n / 2, n / 2);
        let frame = integrate_frame(&fam, ONE, base).unwrap();
        let g0inv = g(domain.point(base.0, base.1)).try_inverse().unwrap();
        let err = (0..domain.len())
            .map(|idx| (frame.frame(idx) - g(domain.point_at(idx)) * g0inv).norm())
            .fold(0.0, f64::max);
        assert!(frame.det_defect() < 1e-9);
        (err, frame.path_residual())
    }

    #[test]
    fn pure_gauge_transport_matches_closed_form_at_fourth_order() {
        let (e1, r1) = pure_gauge_error(33);
        let (e2, r2) = pure_gauge_error(65);
        assert!(e2 < 1e-7, "{e2:e}");
        assert!(e1 / e2 >= 8.0, "error ratio {}", e1 / e2);
        assert!(r1 / r2 >= 8.0, "mismatch ratio {} ({r1:e}, {r2:e})", r1 / r2);
    }

    #[test]
    fn trivial_holonomy_has_trace_two() {
        let domain = Domain::unit_torus(16).unwrap();
        let fp = fingerprint(&LambdaFamily::zero(&domain), &[ONE, I]).unwrap();
        for t in fp.iter().flatten() {
            assert_eq!(*t, C64::new(2.0, 0.0));
        }
    }

    #[test]
    fn constant_connection_holonomy_is_exponential() {
        let fam = s3_family(16);
        let lambda = C64::new(0.9, 0.4);
        let xi = fam.evaluate(lambda).unwrap();
        let a = xi.mat2(0, 0) + xi.mat2(1, 0);
        let expected = crate::harmonic_builders::expm_traceless(&(-a));
        let hol = holonomy_with(&fam, lambda, Loop::XCycle, 4).unwrap();
        assert!((hol - expected).norm() < 1e-10, "{:e}", (hol - expected).norm());
    }

    #[test]
    fn fingerprints_are_invariant_under_constant_gauges() {
        let fam = s3_family(64);
        let g = random_constant_gauge(fam.domain(), 5).unwrap();
        let gauged = fam.gauge_apply(&g, 1).unwrap();
        let a = fingerprint(&fam, &samples()).unwrap();
        let b = fingerprint(&gauged, &samples()).unwrap();
        let dev = a
            .iter()
            .flatten()
            .zip(b.iter().flatten())
            .map(|(x, y)| (x - y).norm())
            .fold(0.0, f64::max);
        assert!(dev < 1e-8, "{dev:e}");
    }

    #[test]
    fn twist_of_rho_real_family_passes_tau_and_n_fingerprints() {
        let fam = s3_family(16);
        assert!(fingerprint_deviation(&fam, Involution::Rho, &samples()).unwrap() < 1e-7);
        let split = kernel_splitting(fam.coefficient(-1).unwrap()).unwrap();
        let tw = twist(&fam, &split).unwrap();
        assert!(fingerprint_deviation(&tw, Involution::Tau, &samples()).unwrap() < 1e-7);
        assert!(fingerprint_deviation(&tw, Involution::N, &samples()).unwrap() < 1e-7);
    }

    #[test]
    fn isometry_examples() {
        let v = isometry_psi([1.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(v.a, Mat2::identity());
        assert_eq!(minkowski_q(&v), -ONE);
        let w = isometry_psi([0.0, 1.0, 0.0, 0.0, 0.0]);
        assert_eq!(w.a, diag_pm());
        assert_eq!(minkowski_q(&w), ONE);
        let x = [0.3, -1.2, 0.7, 2.1, -0.4];
        let y = isometry_psi(x);
        assert!((minkowski_q(&y).re - coordinate_q(x)).abs() < 1e-14);
        let back = y.coords();
        assert!((0..5).all(|k| (back[k].re - x[k]).abs() < 1e-15 && back[k].im.abs() < 1e-15));
    }

    #[test]
    fn strip_frames_give_lightcone_surface() {
        let sol = strip(33);
        let fam = family_from_uq(&sol).unwrap();
        let base = (16, 16);
        let fp = integrate_frame(&fam, ONE, base).unwrap();
        let fm = integrate_frame(&fam, -ONE, base).unwrap();
        assert!(reality_defect(&fp, &fm).unwrap() < 1e-7);
        let hatf = embed_hatf(&fp, &fm).unwrap();
        let b = hatf.values()[sol.domain().index(16, 16)];
        assert_eq!(b.a, Mat2::identity());
        assert!(hatf.max_q() < 1e-8, "{:e}", hatf.max_q());
        assert!(hatf.values().iter().all(|v| v.reality_defect() < 1e-8));
        let psi = psi_frame(&fp);
        assert_eq!(psi[sol.domain().index(16, 16)][4].a, diag_pm());
        assert!(psi.iter().all(|p| p[3] == VVector::new(Mat2::zeros(), ONE)));
    }

    #[test]
    fn psi_connection_matches_closed_form() {
        let sol = strip(65);
        let fam = family_from_uq(&sol).unwrap();
        let fp = integrate_frame(&fam, ONE, (32, 32)).unwrap();
        let dev = so5_connection_check(&sol, &fp, &samples()).unwrap();
        assert!(dev < 1e-5, "{dev:e}");
        let (oz, _) = psi_connection(&fp).unwrap();
        let idx = sol.domain().index(10, 20);
        let u = sol.u.component(0)[idx].re;
        assert!((oz[idx][(1, 0)].re + 2.0 * u.exp()).abs() < 1e-6);
        assert!((oz[idx][(2, 4)].re - 0.2 * (-u).exp()).abs() < 1e-6);
    }

    #[test]
    fn dual_surface_connection_is_gauge_equivalent() {
        let sol = strip(17);
        let fam = family_from_uq(&sol).unwrap();
        let split = kernel_splitting(fam.coefficient(-1).unwrap()).unwrap();
        let famhat = dual_surface(&fam, &split).unwrap();
        let (dz, dzb) = dual_so5_matrices(&famhat, ONE).unwrap();
        assert!(dz.iter().chain(&dzb).all(|m| m.column(3).camax() == 0.0));
        let unit: Vec<C64> = (0..8).map(|k| C64::from_polar(1.0, 0.8 * k as f64)).collect();
        assert!(dual_so5_equivalence(&sol, &famhat, &unit).unwrap() < 1e-12);
        assert!(dual_so5_equivalence(&sol, &famhat, &samples()).unwrap() < 1e-12);
    }

    #[test]
    fn willmore_integrands_agree_on_strip() {
        let sol = strip(65);
        let fam = family_from_uq(&sol).unwrap();
        let split = kernel_splitting(fam.coefficient(-1).unwrap()).unwrap();
        let famhat = dual_surface(&fam, &split).unwrap();
        let base = (32, 32);
        let fp = integrate_frame(&fam, ONE, base).unwrap();
        let fm = integrate_frame(&fam, -ONE, base).unwrap();
        let hatf = embed_hatf(&fp, &fm).unwrap();
        let report = willmore_compare(&sol, &famhat, &hatf).unwrap();
        assert!((report.metric_factor - 4.0).abs() < 1e-6, "{}", report.metric_factor);
        assert!(report.metric_deviation < 1e-5, "{:e}", report.metric_deviation);
        assert!(report.max_algebraic_vs_frame < 1e-10);
        assert!(
            report.max_algebraic_vs_geometric < 1e-4,
            "{:e}",
            report.max_algebraic_vs_geometric
        );
        assert!(report.max_mean_curvature < 1e-4, "{:e}", report.max_mean_curvature);
        assert!(report.area_energy_gap() < 1e-4, "{:e}", report.area_energy_gap());
        assert!(report.willmore_energy_gap() < 1e-10);
        let sphere = mean_curvature_sphere(&hatf).unwrap();
        assert!(sphere.all_signature(3, 1));
        assert!(sphere.max_normal_component(sol.domain()) < 1e-6);
    }

    #[test]
    fn zero_hopf_differential_gives_zero_integrands() {
        let domain = Domain::patch([0.0, 0.5], [0.0, 0.5], 17, 17).unwrap();
        // u = −ln(cos 2x) solves u'' = 4e^{2u} with q = 0.
        let u = GridField::scalar_fn(&domain, |z| C64::new(-(2.0 * z.re).cos().ln(), 0.0));
        let uz = GridField::scalar_fn(&domain, |z| C64::new((2.0 * z.re).tan(), 0.0));
        let q = GridField::scalar_fn(&domain, |_| ZERO);
        let sol = SolutionData::new(u, q, Target::H3)
            .unwrap()
            .with_u_derivatives(uz.clone(), uz)
            .unwrap();
        let fam = family_from_uq(&sol).unwrap();
        let split = kernel_splitting(fam.coefficient(-1).unwrap()).unwrap();
        let famhat = dual_surface(&fam, &split).unwrap();
        let fp = integrate_frame(&fam, ONE, (8, 8)).unwrap();
        let fm = integrate_frame(&fam, -ONE, (8, 8)).unwrap();
        let report = willmore_compare(&sol, &famhat, &embed_hatf(&fp, &fm).unwrap()).unwrap();
        for r in &report.rows {
            assert_eq!(r.integrand_a, 0.0);
            assert!(r.integrand_b.abs() < 1e-14);
        }
        assert!(report.max_algebraic_vs_geometric < 1e-4);
    }

    #[test]
    fn non_h3_frames_are_rejected() {
        let fam = s3_family(16);
        let fp = integrate_frame(&fam, ONE, (0, 0)).unwrap();
        let fm = integrate_frame(&fam, -ONE, (0, 0)).unwrap();
        assert!(matches!(embed_hatf(&fp, &fm), Err(Error::Unsupported(_))));
    }
}
