//! Discrete complex-analytic calculus on flat tori and rectangular patches.
//!
//! Conventions used throughout the crate:
//!
//! * `z = x + iy`, `∂_z = (∂_x − i∂_y)/2`, `∂_z̄ = (∂_x + i∂_y)/2`;
//! * a 1-form is stored as its `dz` and `dz̄` coefficients;
//! * a 2-form is stored as its `dz∧dz̄` coefficient, and `dz∧dz̄ = −2i dx∧dy`
//!   (see [`DZ_WEDGE_DZBAR`]).
//!
//! Torus grids sample `ℂ/(ℤ + τℤ)` at `p(i, j) = i/Nx + (j/Ny)·τ` and use
//! spectral differentiation. Patch grids include both endpoints of each range
//! and use fourth-order finite differences with one-sided closures.

use std::cell::RefCell;
use std::io::{Read, Write};
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, Matrix2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Mat2 = Matrix2<C64>;

pub const I: C64 = C64::new(0.0, 1.0);
pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);

/// `dz∧dz̄` expressed as a multiple of `dx∧dy`.
pub const DZ_WEDGE_DZBAR: C64 = C64::new(0.0, -2.0);

/// Smallest admissible number of grid points per direction.
pub const MIN_RESOLUTION: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DomainKind {
    Torus { modulus: C64 },
    Patch { x_range: [f64; 2], y_range: [f64; 2] },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Domain {
    pub kind: DomainKind,
    pub nx: usize,
    pub ny: usize,
}

impl Domain {
    /// Torus `ℂ/(ℤ + modulus·ℤ)` sampled on an `nx × ny` lattice grid.
    pub fn torus(modulus: C64, nx: usize, ny: usize) -> Result<Self> {
        if !(modulus.im > 0.0) || !modulus.re.is_finite() {
            return Err(Error::Config(format!(
                "torus modulus must have positive imaginary part, got {modulus}"
            )));
        }
        for n in [nx, ny] {
            if n < MIN_RESOLUTION || n % 2 != 0 {
                return Err(Error::Config(format!(
                    "torus resolution must be even and at least {MIN_RESOLUTION}, got {n}"
                )));
            }
        }
        Ok(Self {
            kind: DomainKind::Torus { modulus },
            nx,
            ny,
        })
    }

    /// Square torus `ℂ/(ℤ + iℤ)` with `n × n` points.
    pub fn unit_torus(n: usize) -> Result<Self> {
        Self::torus(I, n, n)
    }

    /// Rectangle `x_range × y_range`; both endpoints of each range are grid points.
    pub fn patch(x_range: [f64; 2], y_range: [f64; 2], nx: usize, ny: usize) -> Result<Self> {
        for r in [x_range, y_range] {
            if !(r[1] > r[0]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(Error::Config(format!("invalid patch range {r:?}")));
            }
        }
        for n in [nx, ny] {
            if n < MIN_RESOLUTION {
                return Err(Error::Config(format!(
                    "patch resolution must be at least {MIN_RESOLUTION}, got {n}"
                )));
            }
        }
        Ok(Self {
            kind: DomainKind::Patch { x_range, y_range },
            nx,
            ny,
        })
    }

    /// Same region with a different resolution.
    pub fn with_resolution(&self, nx: usize, ny: usize) -> Result<Self> {
        match self.kind {
            DomainKind::Torus { modulus } => Self::torus(modulus, nx, ny),
            DomainKind::Patch { x_range, y_range } => Self::patch(x_range, y_range, nx, ny),
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self.kind, DomainKind::Torus { .. })
    }

    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    /// Grid spacing in x and y for patches, lattice step in (s, t) for tori.
    pub fn spacing(&self) -> (f64, f64) {
        match self.kind {
            DomainKind::Torus { .. } => (1.0 / self.nx as f64, 1.0 / self.ny as f64),
            DomainKind::Patch { x_range, y_range } => (
                (x_range[1] - x_range[0]) / (self.nx - 1) as f64,
                (y_range[1] - y_range[0]) / (self.ny - 1) as f64,
            ),
        }
    }

    pub fn point(&self, i: usize, j: usize) -> C64 {
        match self.kind {
            DomainKind::Torus { modulus } => {
                C64::new(i as f64 / self.nx as f64, 0.0) + modulus * (j as f64 / self.ny as f64)
            }
            DomainKind::Patch { x_range, y_range } => {
                let (hx, hy) = self.spacing();
                C64::new(x_range[0] + i as f64 * hx, y_range[0] + j as f64 * hy)
            }
        }
    }

    pub fn point_at(&self, idx: usize) -> C64 {
        let (i, j) = self.coords(idx);
        self.point(i, j)
    }

    pub fn points(&self) -> Vec<C64> {
        (0..self.len()).map(|k| self.point_at(k)).collect()
    }

    /// Euclidean area of the fundamental domain or the patch.
    pub fn area(&self) -> f64 {
        match self.kind {
            DomainKind::Torus { modulus } => modulus.im,
            DomainKind::Patch { x_range, y_range } => (x_range[1] - x_range[0]) * (y_range[1] - y_range[0]),
        }
    }

    /// Quadrature weights for `∫ f dx dy`: equal weights on tori (exact for
    /// band-limited data), trapezoidal rule on patches.
    pub fn quadrature_weights(&self) -> Vec<f64> {
        match self.kind {
            DomainKind::Torus { modulus } => {
                vec![modulus.im / self.len() as f64; self.len()]
            }
            DomainKind::Patch { .. } => {
                let (hx, hy) = self.spacing();
                let edge = |k: usize, n: usize| if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
                (0..self.len())
                    .map(|idx| {
                        let (i, j) = self.coords(idx);
                        hx * hy * edge(i, self.nx) * edge(j, self.ny)
                    })
                    .collect()
            }
        }
    }

    /// `∫ f dx dy` for a scalar sample array.
    pub fn integrate_dxdy(&self, f: &[C64]) -> C64 {
        self.quadrature_weights().iter().zip(f).map(|(w, v)| v * *w).sum()
    }

    /// `∂f/∂x` of a scalar sample array.
    pub fn partial_x(&self, f: &[C64]) -> Vec<C64> {
        match self.kind {
            DomainKind::Torus { .. } => spectral_rows(f, self.nx, self.ny),
            DomainKind::Patch { .. } => fd_rows(f, self.nx, self.ny, self.spacing().0),
        }
    }

    /// `∂f/∂y` of a scalar sample array.
    pub fn partial_y(&self, f: &[C64]) -> Vec<C64> {
        match self.kind {
            DomainKind::Torus { modulus } => {
                // x = s + t·Re τ, y = t·Im τ.
                let ds = spectral_rows(f, self.nx, self.ny);
                let dt = spectral_cols(f, self.nx, self.ny);
                ds.iter()
                    .zip(&dt)
                    .map(|(s, t)| (t - s * modulus.re) / modulus.im)
                    .collect()
            }
            DomainKind::Patch { .. } => fd_cols(f, self.nx, self.ny, self.spacing().1),
        }
    }

    /// `(∂_z f, ∂_z̄ f)` of a scalar sample array.
    pub fn partial_z_zbar(&self, f: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let fx = self.partial_x(f);
        let fy = self.partial_y(f);
        let dz = fx.iter().zip(&fy).map(|(a, b)| (a - I * b) * 0.5).collect();
        let dzb = fx.iter().zip(&fy).map(|(a, b)| (a + I * b) * 0.5).collect();
        (dz, dzb)
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn fft_pair(n: usize) -> (Arc<dyn Fft<f64>>, Arc<dyn Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(n), p.plan_fft_inverse(n))
    })
}

/// Derivative multipliers `2πi m / n` for a unit period, Nyquist mode removed.
fn spectral_multipliers(n: usize) -> Vec<C64> {
    (0..n)
        .map(|k| {
            let m = if k < n / 2 {
                k as f64
            } else if k == n / 2 {
                0.0
            } else {
                k as f64 - n as f64
            };
            I * (2.0 * std::f64::consts::PI * m / n as f64)
        })
        .collect()
}

fn spectral_line(buf: &mut [C64], fwd: &dyn Fft<f64>, inv: &dyn Fft<f64>, mult: &[C64]) {
    fwd.process(buf);
    for (v, m) in buf.iter_mut().zip(mult) {
        *v *= m;
    }
    inv.process(buf);
}

fn spectral_rows(f: &[C64], nx: usize, ny: usize) -> Vec<C64> {
    let (fwd, inv) = fft_pair(nx);
    let mult = spectral_multipliers(nx);
    let mut out = f.to_vec();
    for j in 0..ny {
        spectral_line(&mut out[j * nx..(j + 1) * nx], &*fwd, &*inv, &mult);
    }
    out
}

fn spectral_cols(f: &[C64], nx: usize, ny: usize) -> Vec<C64> {
    let (fwd, inv) = fft_pair(ny);
    let mult = spectral_multipliers(ny);
    let mut out = vec![ZERO; f.len()];
    let mut col = vec![ZERO; ny];
    for i in 0..nx {
        for j in 0..ny {
            col[j] = f[j * nx + i];
        }
        spectral_line(&mut col, &*fwd, &*inv, &mult);
        for j in 0..ny {
            out[j * nx + i] = col[j];
        }
    }
    out
}

/// Band-limited interpolation of periodic samples onto a grid `factor` times
/// finer (Nyquist mode dropped, as for the spectral derivative).
pub fn periodic_upsample(f: &[C64], factor: usize) -> Vec<C64> {
    let n = f.len();
    let m = n * factor;
    let (fwd, _) = fft_pair(n);
    let (_, inv) = fft_pair(m);
    let mut spec = f.to_vec();
    fwd.process(&mut spec);
    let mut fine = vec![ZERO; m];
    for (k, v) in spec.iter().enumerate() {
        if 2 * k < n {
            fine[k] = *v;
        } else if 2 * k > n {
            fine[m - (n - k)] = *v;
        }
    }
    inv.process(&mut fine);
    let scale = 1.0 / n as f64;
    fine.iter().map(|v| v * scale).collect()
}

/// Fourth-order first derivative of equispaced samples (n ≥ 5).
pub fn fd4_derivative(f: &[C64], h: f64) -> Vec<C64> {
    let n = f.len();
    assert!(n >= 5, "fourth-order stencil needs at least five samples");
    let s = 1.0 / (12.0 * h);
    let mut out = vec![ZERO; n];
    for i in 2..n - 2 {
        out[i] = (f[i - 2] - f[i - 1] * 8.0 + f[i + 1] * 8.0 - f[i + 2]) * s;
    }
    let left = |g: &dyn Fn(usize) -> C64| {
        (
            (g(0) * -25.0 + g(1) * 48.0 - g(2) * 36.0 + g(3) * 16.0 - g(4) * 3.0) * s,
            (g(0) * -3.0 - g(1) * 10.0 + g(2) * 18.0 - g(3) * 6.0 + g(4)) * s,
        )
    };
    let (d0, d1) = left(&|k| f[k]);
    out[0] = d0;
    out[1] = d1;
    let (e0, e1) = left(&|k| f[n - 1 - k]);
    out[n - 1] = -e0;
    out[n - 2] = -e1;
    out
}

fn fd_rows(f: &[C64], nx: usize, ny: usize, h: f64) -> Vec<C64> {
    let mut out = Vec::with_capacity(f.len());
    for j in 0..ny {
        out.extend(fd4_derivative(&f[j * nx..(j + 1) * nx], h));
    }
    out
}

fn fd_cols(f: &[C64], nx: usize, ny: usize, h: f64) -> Vec<C64> {
    let mut out = vec![ZERO; f.len()];
    let mut col = vec![ZERO; ny];
    for i in 0..nx {
        for j in 0..ny {
            col[j] = f[j * nx + i];
        }
        for (j, v) in fd4_derivative(&col, h).into_iter().enumerate() {
            out[j * nx + i] = v;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormDegree {
    Zero,
    One,
    Two,
}

impl FormDegree {
    pub fn components(self) -> usize {
        match self {
            FormDegree::One => 2,
            _ => 1,
        }
    }
}

/// How a matrix-valued 2-form is reduced to a scalar before integration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Trace,
    Entry(usize, usize),
}

/// Matrix-valued differential form sampled on a grid.
///
/// Each component is stored point-major: the `d×d` matrix at grid index `idx`
/// occupies `values[idx*d*d .. (idx+1)*d*d]` in row-major order. For 1-forms
/// component 0 is the `dz` coefficient and component 1 the `dz̄` coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridField {
    domain: Domain,
    dim: usize,
    degree: FormDegree,
    components: Vec<Vec<C64>>,
}

impl GridField {
    pub fn zeros(domain: &Domain, dim: usize, degree: FormDegree) -> Self {
        let n = domain.len() * dim * dim;
        Self {
            domain: *domain,
            dim,
            degree,
            components: vec![vec![ZERO; n]; degree.components()],
        }
    }

    pub fn from_components(domain: &Domain, dim: usize, degree: FormDegree, components: Vec<Vec<C64>>) -> Result<Self> {
        let f = Self {
            domain: *domain,
            dim,
            degree,
            components,
        };
        f.validate()?;
        Ok(f)
    }

    /// Checks the storage invariants; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        if ![1, 2, 4, 5].contains(&self.dim) {
            return Err(Error::Shape(format!("unsupported matrix size {}", self.dim)));
        }
        if self.components.len() != self.degree.components() {
            return Err(Error::Shape(format!(
                "{:?}-form needs {} component arrays, got {}",
                self.degree,
                self.degree.components(),
                self.components.len()
            )));
        }
        let n = self.domain.len() * self.dim * self.dim;
        if self.components.iter().any(|c| c.len() != n) {
            return Err(Error::Shape(format!("component arrays must have length {n}")));
        }
        Ok(())
    }

    pub fn scalar_fn(domain: &Domain, f: impl Fn(C64) -> C64) -> Self {
        let values = domain.points().into_iter().map(f).collect();
        Self {
            domain: *domain,
            dim: 1,
            degree: FormDegree::Zero,
            components: vec![values],
        }
    }

    pub fn scalar_from_values(domain: &Domain, values: Vec<C64>) -> Result<Self> {
        Self::from_components(domain, 1, FormDegree::Zero, vec![values])
    }

    pub fn mat2_fn(domain: &Domain, f: impl Fn(C64) -> Mat2) -> Self {
        let mut out = Self::zeros(domain, 2, FormDegree::Zero);
        for idx in 0..domain.len() {
            out.set_mat2(0, idx, &f(domain.point_at(idx)));
        }
        out
    }

    /// 1-form with `(dz, dz̄)` coefficients given by `f`.
    pub fn one_form_fn(domain: &Domain, f: impl Fn(C64) -> (Mat2, Mat2)) -> Self {
        let mut out = Self::zeros(domain, 2, FormDegree::One);
        for idx in 0..domain.len() {
            let (a, b) = f(domain.point_at(idx));
            out.set_mat2(0, idx, &a);
            out.set_mat2(1, idx, &b);
        }
        out
    }

    pub fn constant_mat2(domain: &Domain, m: Mat2) -> Self {
        Self::mat2_fn(domain, |_| m)
    }

    pub fn identity(domain: &Domain, dim: usize) -> Self {
        let mut out = Self::zeros(domain, dim, FormDegree::Zero);
        for idx in 0..domain.len() {
            for r in 0..dim {
                out.components[0][idx * dim * dim + r * dim + r] = ONE;
            }
        }
        out
    }

    /// Assemble a 1-form from two 0-form coefficient fields.
    pub fn one_form(dz: &GridField, dzbar: &GridField) -> Result<Self> {
        dz.expect_degree(FormDegree::Zero)?;
        dzbar.expect_degree(FormDegree::Zero)?;
        dz.check_same_shape(dzbar)?;
        Ok(Self {
            domain: dz.domain,
            dim: dz.dim,
            degree: FormDegree::One,
            components: vec![dz.components[0].clone(), dzbar.components[0].clone()],
        })
    }

    /// Reinterpret a 0-form as the `dz∧dz̄` coefficient of a 2-form.
    pub fn as_two_form(&self) -> Result<Self> {
        self.expect_degree(FormDegree::Zero)?;
        let mut out = self.clone();
        out.degree = FormDegree::Two;
        Ok(out)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> FormDegree {
        self.degree
    }

    pub fn component(&self, c: usize) -> &[C64] {
        &self.components[c]
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [C64] {
        &mut self.components[c]
    }

    /// Coefficient field of one component as a 0-form.
    pub fn component_field(&self, c: usize) -> GridField {
        Self {
            domain: self.domain,
            dim: self.dim,
            degree: FormDegree::Zero,
            components: vec![self.components[c].clone()],
        }
    }

    pub fn dz_part(&self) -> Result<GridField> {
        self.expect_degree(FormDegree::One)?;
        Ok(self.component_field(0))
    }

    pub fn dzbar_part(&self) -> Result<GridField> {
        self.expect_degree(FormDegree::One)?;
        Ok(self.component_field(1))
    }

    /// The (1,0)-part of a 1-form, as a 1-form.
    pub fn part_10(&self) -> Result<GridField> {
        self.expect_degree(FormDegree::One)?;
        let mut out = self.clone();
        out.components[1].iter_mut().for_each(|v| *v = ZERO);
        Ok(out)
    }

    /// The (0,1)-part of a 1-form, as a 1-form.
    pub fn part_01(&self) -> Result<GridField> {
        self.expect_degree(FormDegree::One)?;
        let mut out = self.clone();
        out.components[0].iter_mut().for_each(|v| *v = ZERO);
        Ok(out)
    }

    pub fn entry(&self, c: usize, idx: usize, r: usize, col: usize) -> C64 {
        self.components[c][idx * self.dim * self.dim + r * self.dim + col]
    }

    pub fn mat2(&self, c: usize, idx: usize) -> Mat2 {
        debug_assert_eq!(self.dim, 2);
        let v = &self.components[c][4 * idx..4 * idx + 4];
        Mat2::new(v[0], v[1], v[2], v[3])
    }

    pub fn set_mat2(&mut self, c: usize, idx: usize, m: &Mat2) {
        debug_assert_eq!(self.dim, 2);
        let v = &mut self.components[c][4 * idx..4 * idx + 4];
        v[0] = m[(0, 0)];
        v[1] = m[(0, 1)];
        v[2] = m[(1, 0)];
        v[3] = m[(1, 1)];
    }

    /// Pointwise matrix of arbitrary size at `idx`.
    pub fn matrix(&self, c: usize, idx: usize) -> DMatrix<C64> {
        let d = self.dim;
        DMatrix::from_row_slice(d, d, &self.components[c][idx * d * d..(idx + 1) * d * d])
    }

    pub fn set_matrix(&mut self, c: usize, idx: usize, m: &DMatrix<C64>) {
        let d = self.dim;
        for r in 0..d {
            for k in 0..d {
                self.components[c][idx * d * d + r * d + k] = m[(r, k)];
            }
        }
    }

    pub fn expect_degree(&self, degree: FormDegree) -> Result<()> {
        if self.degree != degree {
            return Err(Error::Shape(format!(
                "expected a {degree:?}-form, got a {:?}-form",
                self.degree
            )));
        }
        Ok(())
    }

    pub fn check_same_shape(&self, other: &GridField) -> Result<()> {
        if self.domain != other.domain {
            return Err(Error::Shape("fields live on different domains".into()));
        }
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "matrix sizes differ: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    fn check_same_layout(&self, other: &GridField) -> Result<()> {
        self.check_same_shape(other)?;
        if self.degree != other.degree {
            return Err(Error::Shape(format!(
                "form degrees differ: {:?} vs {:?}",
                self.degree, other.degree
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &GridField, f: impl Fn(C64, C64) -> C64) -> Result<GridField> {
        self.check_same_layout(other)?;
        let components = self
            .components
            .iter()
            .zip(&other.components)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| f(*x, *y)).collect())
            .collect();
        Ok(self.with_components(components))
    }

    fn with_components(&self, components: Vec<Vec<C64>>) -> GridField {
        Self {
            domain: self.domain,
            dim: self.dim,
            degree: self.degree,
            components,
        }
    }

    pub fn try_add(&self, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn try_sub(&self, other: &GridField) -> Result<GridField> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: C64) -> GridField {
        self.map_values(|v| v * s)
    }

    pub fn map_values(&self, f: impl Fn(C64) -> C64) -> GridField {
        let components = self
            .components
            .iter()
            .map(|c| c.iter().map(|v| f(*v)).collect())
            .collect();
        self.with_components(components)
    }

    /// Apply `f` to every pointwise 2×2 matrix of every component.
    pub fn map_mat2(&self, f: impl Fn(&Mat2) -> Mat2) -> GridField {
        let mut out = self.clone();
        for c in 0..self.components.len() {
            for idx in 0..self.domain.len() {
                out.set_mat2(c, idx, &f(&self.mat2(c, idx)));
            }
        }
        out
    }

    /// Multiply pointwise by a scalar field (0-form with `dim = 1`).
    pub fn mul_scalar_field(&self, s: &GridField) -> Result<GridField> {
        if s.dim != 1 || s.degree != FormDegree::Zero || s.domain != self.domain {
            return Err(Error::Shape("expected a scalar 0-form on the same domain".into()));
        }
        let dd = self.dim * self.dim;
        let components = self
            .components
            .iter()
            .map(|c| c.iter().enumerate().map(|(k, v)| v * s.components[0][k / dd]).collect())
            .collect();
        Ok(self.with_components(components))
    }

    /// Pointwise matrix product. Degrees add; at most one factor may be a form
    /// of positive degree.
    pub fn matmul(&self, other: &GridField) -> Result<GridField> {
        self.check_same_shape(other)?;
        let degree = match (self.degree, other.degree) {
            (FormDegree::Zero, d) | (d, FormDegree::Zero) => d,
            _ => {
                return Err(Error::Shape(
                    "use wedge for products of two forms of positive degree".into(),
                ))
            }
        };
        let d = self.dim;
        let mut out = GridField::zeros(&self.domain, d, degree);
        for c in 0..degree.components() {
            let ca = if self.degree == FormDegree::Zero { 0 } else { c };
            let cb = if other.degree == FormDegree::Zero { 0 } else { c };
            let (a, b) = (&self.components[ca], &other.components[cb]);
            let o = &mut out.components[c];
            for idx in 0..self.domain.len() {
                let base = idx * d * d;
                for r in 0..d {
                    for k in 0..d {
                        let mut acc = ZERO;
                        for m in 0..d {
                            acc += a[base + r * d + m] * b[base + m * d + k];
                        }
                        o[base + r * d + k] = acc;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Pointwise conjugate transpose of every component (no type swap).
    pub fn conj_transpose(&self) -> GridField {
        let d = self.dim;
        let mut out = self.clone();
        for (src, dst) in self.components.iter().zip(out.components.iter_mut()) {
            for idx in 0..self.domain.len() {
                let base = idx * d * d;
                for r in 0..d {
                    for k in 0..d {
                        dst[base + r * d + k] = src[base + k * d + r].conj();
                    }
                }
            }
        }
        out
    }

    /// Hermitian adjoint of a form: conjugate transpose combined with complex
    /// conjugation of the form part, so `(A dz)* = A^† dz̄` and
    /// `(A dz∧dz̄)* = −A^† dz∧dz̄`.
    pub fn adjoint(&self) -> GridField {
        let mut out = self.conj_transpose();
        match self.degree {
            FormDegree::Zero => {}
            FormDegree::One => out.components.swap(0, 1),
            FormDegree::Two => out = out.scale(-ONE),
        }
        out
    }

    /// Pointwise trace as a scalar field of the same degree.
    pub fn trace(&self) -> GridField {
        let d = self.dim;
        let components = self
            .components
            .iter()
            .map(|c| {
                (0..self.domain.len())
                    .map(|idx| (0..d).map(|r| c[idx * d * d + r * d + r]).sum())
                    .collect()
            })
            .collect();
        Self {
            domain: self.domain,
            dim: 1,
            degree: self.degree,
            components,
        }
    }

    /// Largest pointwise Frobenius norm over all components.
    pub fn sup_norm(&self) -> f64 {
        let dd = self.dim * self.dim;
        self.components
            .iter()
            .flat_map(|c| c.chunks(dd).map(|m| m.iter().map(|v| v.norm_sqr()).sum::<f64>()))
            .fold(0.0, f64::max)
            .sqrt()
    }

    /// Sup-norm of the difference; infinite if the layouts differ.
    pub fn max_diff(&self, other: &GridField) -> f64 {
        match self.try_sub(other) {
            Ok(d) => d.sup_norm(),
            Err(_) => f64::INFINITY,
        }
    }

    /// `(∂_z f, ∂_z̄ f)` of a 0-form, entry by entry.
    pub fn derive(&self) -> Result<(GridField, GridField)> {
        self.expect_degree(FormDegree::Zero)?;
        let d = self.dim;
        let dd = d * d;
        let n = self.domain.len();
        let mut dz = GridField::zeros(&self.domain, d, FormDegree::Zero);
        let mut dzb = dz.clone();
        let mut scalar = vec![ZERO; n];
        for e in 0..dd {
            for idx in 0..n {
                scalar[idx] = self.components[0][idx * dd + e];
            }
            let (a, b) = self.domain.partial_z_zbar(&scalar);
            for idx in 0..n {
                dz.components[0][idx * dd + e] = a[idx];
                dzb.components[0][idx * dd + e] = b[idx];
            }
        }
        Ok((dz, dzb))
    }

    /// Exterior derivative of a 0-form or 1-form.
    ///
    /// For `a = a_z dz + a_z̄ dz̄` the result is `(∂_z a_z̄ − ∂_z̄ a_z) dz∧dz̄`.
    pub fn d(&self) -> Result<GridField> {
        match self.degree {
            FormDegree::Zero => {
                let (dz, dzb) = self.derive()?;
                GridField::one_form(&dz, &dzb)
            }
            FormDegree::One => {
                let (_, dzb_of_az) = self.component_field(0).derive()?;
                let (dz_of_azb, _) = self.component_field(1).derive()?;
                dz_of_azb.try_sub(&dzb_of_az)?.as_two_form()
            }
            FormDegree::Two => Err(Error::Shape("exterior derivative of a 2-form".into())),
        }
    }

    /// Wedge product of two 1-forms: `(a_z b_z̄ − a_z̄ b_z) dz∧dz̄` with
    /// pointwise matrix products.
    pub fn wedge(&self, other: &GridField) -> Result<GridField> {
        self.expect_degree(FormDegree::One)?;
        other.expect_degree(FormDegree::One)?;
        self.check_same_shape(other)?;
        let a_z = self.component_field(0);
        let a_zb = self.component_field(1);
        let b_z = other.component_field(0);
        let b_zb = other.component_field(1);
        a_z.matmul(&b_zb)?.try_sub(&a_zb.matmul(&b_z)?)?.as_two_form()
    }

    /// `∫ w` of a 2-form with `dz∧dz̄ = −2i dx∧dy`.
    pub fn integrate(&self, reduce: Reduce) -> Result<C64> {
        self.expect_degree(FormDegree::Two)?;
        let values = self.reduced_values(reduce)?;
        Ok(self.domain.integrate_dxdy(&values) * DZ_WEDGE_DZBAR)
    }

    /// Pointwise scalar reduction of component 0.
    pub fn reduced_values(&self, reduce: Reduce) -> Result<Vec<C64>> {
        let d = self.dim;
        match reduce {
            Reduce::Trace => Ok(self.trace().components.swap_remove(0)),
            Reduce::Entry(r, c) => {
                if r >= d || c >= d {
                    return Err(Error::Shape(format!("entry ({r}, {c}) outside {d}×{d}")));
                }
                Ok((0..self.domain.len())
                    .map(|idx| self.components[0][idx * d * d + r * d + c])
                    .collect())
            }
        }
    }

    /// Serialize as self-describing JSON (domain header and `[re, im]` arrays).
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: GridField = serde_json::from_str(s)?;
        f.validate()?;
        Ok(f)
    }

    /// Binary container: JSON header followed by little-endian `f64` blocks.
    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let header = serde_json::json!({
            "domain": self.domain,
            "dim": self.dim,
            "degree": self.degree,
        });
        let blocks: Vec<&[C64]> = self.components.iter().map(|c| c.as_slice()).collect();
        write_container(w, &header, &blocks)
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let (header, blocks) = read_container(r)?;
        Self::from_header_and_blocks(&header, blocks)
    }

    pub(crate) fn from_header_and_blocks(header: &serde_json::Value, blocks: Vec<Vec<C64>>) -> Result<Self> {
        let domain: Domain = serde_json::from_value(header["domain"].clone())?;
        let dim: usize = serde_json::from_value(header["dim"].clone())?;
        let degree: FormDegree = serde_json::from_value(header["degree"].clone())?;
        Self::from_components(&domain, dim, degree, blocks)
    }
}

impl Add for &GridField {
    type Output = GridField;

    /// Panics if the two fields have different layouts; use
    /// [`GridField::try_add`] for a fallible version.
    fn add(self, rhs: &GridField) -> GridField {
        self.try_add(rhs).expect("adding fields with different layouts")
    }
}

impl Sub for &GridField {
    type Output = GridField;

    fn sub(self, rhs: &GridField) -> GridField {
        self.try_sub(rhs).expect("subtracting fields with different layouts")
    }
}

impl Neg for &GridField {
    type Output = GridField;

    fn neg(self) -> GridField {
        self.scale(-ONE)
    }
}

impl Mul<C64> for &GridField {
    type Output = GridField;

    fn mul(self, rhs: C64) -> GridField {
        self.scale(rhs)
    }
}

const MAGIC: &[u8; 4] = b"TWLB";
const CONTAINER_VERSION: u32 = 1;

/// Write a JSON header and complex blocks. The block lengths are recorded in
/// the header under `"block_lengths"`.
pub fn write_container(w: &mut impl Write, header: &serde_json::Value, blocks: &[&[C64]]) -> Result<()> {
    let mut header = header.clone();
    header["block_lengths"] = blocks.iter().map(|b| b.len()).collect::<Vec<_>>().into();
    let bytes = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&CONTAINER_VERSION.to_le_bytes())?;
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(&bytes)?;
    for block in blocks {
        for v in *block {
            w.write_all(&v.re.to_le_bytes())?;
            w.write_all(&v.im.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_container(r: &mut impl Read) -> Result<(serde_json::Value, Vec<Vec<C64>>)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Shape("not a grid-field container".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != CONTAINER_VERSION {
        return Err(Error::Shape(format!("unsupported container version {version}")));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let mut bytes = vec![0u8; u64::from_le_bytes(u64buf) as usize];
    r.read_exact(&mut bytes)?;
    let header: serde_json::Value = serde_json::from_slice(&bytes)?;
    let lengths: Vec<usize> = serde_json::from_value(header["block_lengths"].clone())?;
    let mut blocks = Vec::with_capacity(lengths.len());
    let mut f = [0u8; 8];
    for len in lengths {
        let mut block = Vec::with_capacity(len);
        for _ in 0..len {
            r.read_exact(&mut f)?;
            let re = f64::from_le_bytes(f);
            r.read_exact(&mut f)?;
            block.push(C64::new(re, f64::from_le_bytes(f)));
        }
        blocks.push(block);
    }
    Ok((header, blocks))
}
