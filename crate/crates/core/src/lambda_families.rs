//! Laurent series in λ of connection forms `ξ^λ = Σ λ^k ξ_k` and of gauge
//! transformations `g(λ) = Σ λ^k g_k`.
//!
//! Products of series are truncated at an explicit top power. The norm of the
//! first discarded coefficient is kept as the truncation-tail estimate.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::surface_grid::{read_container, write_container, Domain, FormDegree, GridField, Mat2, C64, ONE, ZERO};

/// Default top λ-power kept after gauge transformations.
pub const DEFAULT_TRUNCATION: i32 = 8;

/// Tolerance for the trace-free check on family coefficients.
pub const TRACE_TOL: f64 = 1e-10;

/// Tolerance for the `(1,0)` type of a Higgs-type `λ^{-1}` coefficient.
pub const HIGGS_TYPE_TOL: f64 = 1e-12;

/// Pointwise determinant below which a gauge counts as singular.
pub const SINGULAR_DET: f64 = 1e-8;

type Series = BTreeMap<i32, GridField>;

/// Involutions of the λ-sphere covered by anti-holomorphic or holomorphic
/// involutions of the twistor space.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Involution {
    /// λ ↦ −1/λ̄
    Tau,
    /// λ ↦ 1/λ̄
    Rho,
    /// λ ↦ −λ
    N,
}

impl Involution {
    pub fn map_lambda(self, lambda: C64) -> C64 {
        match self {
            Involution::Tau => -ONE / lambda.conj(),
            Involution::Rho => ONE / lambda.conj(),
            Involution::N => -lambda,
        }
    }

    pub fn is_antiholomorphic(self) -> bool {
        !matches!(self, Involution::N)
    }
}

/// `∇^λ = d + Σ λ^k ξ_k` with 2×2 trace-free 1-form coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaFamily {
    domain: Domain,
    coefficients: Series,
    higgs: bool,
    tail: f64,
}

impl LambdaFamily {
    pub fn new(domain: &Domain, coefficients: impl IntoIterator<Item = (i32, GridField)>) -> Result<Self> {
        let fam = Self {
            domain: *domain,
            coefficients: coefficients.into_iter().collect(),
            higgs: false,
            tail: 0.0,
        };
        fam.validate()?;
        Ok(fam)
    }

    pub(crate) fn from_series(domain: &Domain, coefficients: Series, tail: f64) -> Self {
        Self {
            domain: *domain,
            coefficients,
            higgs: false,
            tail,
        }
    }

    pub fn zero(domain: &Domain) -> Self {
        Self::from_series(domain, Series::new(), 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, c) in &self.coefficients {
            c.validate()?;
            if c.domain() != &self.domain || c.dim() != 2 || c.degree() != FormDegree::One {
                return Err(Error::Shape(format!(
                    "coefficient {k} must be a 2×2 1-form on the family domain"
                )));
            }
            let tr = c.trace().sup_norm();
            if tr > TRACE_TOL * c.sup_norm().max(1.0) {
                return Err(Error::Shape(format!(
                    "coefficient {k} is not trace-free (|tr| = {tr:e})"
                )));
            }
        }
        if self.higgs {
            self.check_higgs_type()?;
        }
        Ok(())
    }

    fn check_higgs_type(&self) -> Result<()> {
        if let Some(c) = self.coefficients.get(&-1) {
            let impurity = c.component_field(1).sup_norm();
            if impurity > HIGGS_TYPE_TOL * c.sup_norm().max(1.0) {
                return Err(Error::InvalidLift(format!(
                    "λ^-1 coefficient has a dz̄ part of size {impurity:e}"
                )));
            }
        }
        Ok(())
    }

    /// Mark the `λ^{-1}` coefficient as Higgs-type; fails unless it is of type (1,0).
    pub fn with_higgs_flag(mut self) -> Result<Self> {
        self.check_higgs_type()?;
        self.higgs = true;
        Ok(self)
    }

    pub fn is_higgs_type(&self) -> bool {
        self.higgs
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn coefficients(&self) -> &BTreeMap<i32, GridField> {
        &self.coefficients
    }

    pub fn coefficient(&self, k: i32) -> Option<&GridField> {
        self.coefficients.get(&k)
    }

    pub fn coefficient_or_zero(&self, k: i32) -> GridField {
        self.coefficients
            .get(&k)
            .cloned()
            .unwrap_or_else(|| GridField::zeros(&self.domain, 2, FormDegree::One))
    }

    /// Lowest and highest stored power; `(0, 0)` for the zero family.
    pub fn range(&self) -> (i32, i32) {
        let lo = self.coefficients.keys().next().copied().unwrap_or(0);
        let hi = self.coefficients.keys().next_back().copied().unwrap_or(0);
        (lo, hi)
    }

    pub fn k_min(&self) -> i32 {
        self.range().0
    }

    pub fn k_max(&self) -> i32 {
        self.range().1
    }

    /// Sup-norm of the first coefficient discarded by truncation (0 if exact).
    pub fn truncation_tail(&self) -> f64 {
        self.tail
    }

    /// Remove coefficients whose sup-norm is at most `tol`.
    pub fn pruned(&self, tol: f64) -> Self {
        let mut out = self.clone();
        out.coefficients.retain(|_, c| c.sup_norm() > tol);
        out
    }

    /// Largest coefficientwise sup-norm difference.
    pub fn max_diff(&self, other: &LambdaFamily) -> f64 {
        let keys: std::collections::BTreeSet<i32> = self
            .coefficients
            .keys()
            .chain(other.coefficients.keys())
            .copied()
            .collect();
        keys.into_iter()
            .map(|k| self.coefficient_or_zero(k).max_diff(&other.coefficient_or_zero(k)))
            .fold(0.0, f64::max)
    }

    /// `ξ^{λ0} = Σ λ0^k ξ_k`.
    pub fn evaluate(&self, lambda: C64) -> Result<GridField> {
        if lambda == ZERO && self.k_min() < 0 && !self.coefficients.is_empty() {
            return Err(Error::Pole { k_min: self.k_min() });
        }
        let mut out = GridField::zeros(&self.domain, 2, FormDegree::One);
        for (k, c) in &self.coefficients {
            let w = if lambda == ZERO {
                if *k == 0 {
                    ONE
                } else {
                    ZERO
                }
            } else {
                lambda.powi(*k)
            };
            out = &out + &c.scale(w);
        }
        Ok(out)
    }

    /// Sup-norm of the `λ^k` coefficient of the curvature
    /// `dξ_k + Σ_{i+j=k} ξ_i∧ξ_j` for every power `k` in `[2k_min, 2k_max]`.
    ///
    /// For a truncated family the top powers involve discarded coefficients;
    /// only powers up to `k_max + k_min` are complete.
    pub fn flatness_residual(&self) -> BTreeMap<i32, f64> {
        self.curvature_coefficients()
            .into_iter()
            .map(|(k, f)| (k, f.sup_norm()))
            .collect()
    }

    /// Curvature coefficients as 2-forms.
    pub fn curvature_coefficients(&self) -> BTreeMap<i32, GridField> {
        let mut out = BTreeMap::new();
        if self.coefficients.is_empty() {
            return out;
        }
        let (lo, hi) = self.range();
        for k in 2 * lo..=2 * hi {
            let mut f = match self.coefficients.get(&k) {
                Some(c) => c.d().expect("1-form"),
                None => GridField::zeros(&self.domain, 2, FormDegree::Two),
            };
            for (i, a) in &self.coefficients {
                if let Some(b) = self.coefficients.get(&(k - i)) {
                    f = &f + &a.wedge(b).expect("matching 1-forms");
                }
            }
            out.insert(k, f);
        }
        out
    }

    /// Largest flatness residual over powers `≤ k_top`.
    pub fn max_flatness_through(&self, k_top: i32) -> f64 {
        self.flatness_residual()
            .into_iter()
            .filter(|(k, _)| *k <= k_top)
            .map(|(_, v)| v)
            .fold(0.0, f64::max)
    }

    /// Gauge transformation `ξ ↦ g^{-1}ξg + g^{-1}dg`, keeping powers `≤ k_top`.
    pub fn gauge_apply(&self, g: &GaugeFamily, k_top: i32) -> Result<LambdaFamily> {
        if g.domain != self.domain {
            return Err(Error::Shape("gauge and family live on different domains".into()));
        }
        let k_lo = self.k_min().min(0);
        let ginv = g.inverse_to(k_top + 1 - k_lo - g.m_min().min(0))?;
        let dg: Series = g
            .coefficients
            .iter()
            .map(|(k, c)| Ok((*k, c.d()?)))
            .collect::<Result<_>>()?;
        let left = series_product(&ginv.coefficients, &self.coefficients, None)?;
        let mut total = series_product(&left, &g.coefficients, Some(k_top + 1))?;
        for (k, v) in series_product(&ginv.coefficients, &dg, Some(k_top + 1))? {
            accumulate(&mut total, k, v);
        }
        let tail = total.get(&(k_top + 1)).map_or(0.0, |c| c.sup_norm());
        total.retain(|k, c| *k <= k_top && c.sup_norm() > 0.0);
        let mut out = Self::from_series(&self.domain, total, tail.max(self.tail));
        if self.higgs && out.check_higgs_type().is_ok() {
            out.higgs = true;
        }
        Ok(out)
    }

    /// Gauge transformation keeping [`DEFAULT_TRUNCATION`] powers.
    pub fn gauge_apply_default(&self, g: &GaugeFamily) -> Result<LambdaFamily> {
        self.gauge_apply(g, DEFAULT_TRUNCATION)
    }

    /// Pull back along an involution of the λ-sphere.
    ///
    /// The anti-holomorphic cases satisfy `(σ*ξ)^λ = −(ξ^{σ(λ)})*` where `*`
    /// is the hermitian adjoint of a matrix-valued form; coefficientwise
    /// `(τ*ξ)_k = (−1)^{k+1} (ξ_{−k})*` and `(ρ*ξ)_k = −(ξ_{−k})*`.
    /// For `N`, `(N*ξ)_k = (−1)^k ξ_k`.
    pub fn sigma_pullback(&self, sigma: Involution) -> LambdaFamily {
        let coefficients = self
            .coefficients
            .iter()
            .map(|(k, c)| {
                let sign = if k.rem_euclid(2) == 0 { ONE } else { -ONE };
                match sigma {
                    Involution::Tau => (-k, c.adjoint().scale(-sign)),
                    Involution::Rho => (-k, c.adjoint().scale(-ONE)),
                    Involution::N => (*k, c.scale(sign)),
                }
            })
            .collect();
        let mut out = Self::from_series(&self.domain, coefficients, self.tail);
        out.higgs = out.higgs_candidate();
        out
    }

    fn higgs_candidate(&self) -> bool {
        self.coefficients.contains_key(&-1) && self.check_higgs_type().is_ok()
    }

    /// `ξ^λ ↦ ξ^{λ²}`: the coefficient of `λ^k` moves to `λ^{2k}`.
    pub fn substitute_lambda_squared(&self) -> LambdaFamily {
        let coefficients = self.coefficients.iter().map(|(k, c)| (2 * k, c.clone())).collect();
        Self::from_series(&self.domain, coefficients, self.tail)
    }

    pub fn write_binary(&self, w: &mut impl Write) -> Result<()> {
        let keys: Vec<i32> = self.coefficients.keys().copied().collect();
        let header = serde_json::json!({
            "domain": self.domain,
            "k_range": self.range(),
            "keys": keys,
            "higgs": self.higgs,
            "tail": self.tail,
        });
        let blocks: Vec<&[C64]> = self
            .coefficients
            .values()
            .flat_map(|c| [c.component(0), c.component(1)])
            .collect();
        write_container(w, &header, &blocks)
    }

    pub fn read_binary(r: &mut impl Read) -> Result<Self> {
        let (header, blocks) = read_container(r)?;
        let domain: Domain = serde_json::from_value(header["domain"].clone())?;
        let keys: Vec<i32> = serde_json::from_value(header["keys"].clone())?;
        if blocks.len() != 2 * keys.len() {
            return Err(Error::Shape("block count does not match coefficient keys".into()));
        }
        let mut blocks = blocks.into_iter();
        let mut coefficients = Series::new();
        for k in keys {
            let a = blocks.next().unwrap_or_default();
            let b = blocks.next().unwrap_or_default();
            coefficients.insert(k, GridField::from_components(&domain, 2, FormDegree::One, vec![a, b])?);
        }
        let fam = Self {
            domain,
            coefficients,
            higgs: serde_json::from_value(header["higgs"].clone())?,
            tail: serde_json::from_value(header["tail"].clone())?,
        };
        fam.validate()?;
        Ok(fam)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let fam: LambdaFamily = serde_json::from_str(s)?;
        fam.validate()?;
        Ok(fam)
    }
}

/// `g(λ) = Σ λ^k g_k` with 2×2 matrix-valued 0-form coefficients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaugeFamily {
    domain: Domain,
    coefficients: Series,
}

impl GaugeFamily {
    pub fn new(domain: &Domain, coefficients: impl IntoIterator<Item = (i32, GridField)>) -> Result<Self> {
        let g = Self {
            domain: *domain,
            coefficients: coefficients.into_iter().collect(),
        };
        for (k, c) in &g.coefficients {
            if c.domain() != domain || c.dim() != 2 || c.degree() != FormDegree::Zero {
                return Err(Error::Shape(format!(
                    "gauge coefficient {k} must be a 2×2 0-form on the gauge domain"
                )));
            }
        }
        Ok(g)
    }

    pub fn identity(domain: &Domain) -> Self {
        Self {
            domain: *domain,
            coefficients: [(0, GridField::identity(domain, 2))].into(),
        }
    }

    /// λ-independent gauge `g(λ) = g0`.
    pub fn lambda_constant(g0: GridField) -> Result<Self> {
        let domain = *g0.domain();
        Self::new(&domain, [(0, g0)])
    }

    /// Gauge with spatially constant coefficients.
    pub fn constant(domain: &Domain, coefficients: impl IntoIterator<Item = (i32, Mat2)>) -> Self {
        Self {
            domain: *domain,
            coefficients: coefficients
                .into_iter()
                .map(|(k, m)| (k, GridField::constant_mat2(domain, m)))
                .collect(),
        }
    }

    /// `exp(X)` for a generator with only positive powers of λ, truncated at `k_top`.
    pub fn exp_positive(domain: &Domain, generator: &BTreeMap<i32, GridField>, k_top: i32) -> Result<Self> {
        if generator.keys().any(|k| *k < 1) {
            return Err(Error::Precondition(
                "exponential series needs a generator with positive λ-powers".into(),
            ));
        }
        let mut total: Series = [(0, GridField::identity(domain, 2))].into();
        let mut term = total.clone();
        for n in 1..=k_top.max(0) {
            term = series_product(&term, generator, Some(k_top))?;
            let scale = C64::new(1.0 / n as f64, 0.0);
            term.values_mut().for_each(|c| *c = c.scale(scale));
            if term.is_empty() {
                break;
            }
            for (k, v) in &term {
                accumulate(&mut total, *k, v.clone());
            }
        }
        Self::new(domain, total)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn coefficients(&self) -> &BTreeMap<i32, GridField> {
        &self.coefficients
    }

    pub fn m_min(&self) -> i32 {
        self.coefficients.keys().next().copied().unwrap_or(0)
    }

    pub fn m_max(&self) -> i32 {
        self.coefficients.keys().next_back().copied().unwrap_or(0)
    }

    pub fn evaluate(&self, lambda: C64) -> GridField {
        let mut out = GridField::zeros(&self.domain, 2, FormDegree::Zero);
        for (k, c) in &self.coefficients {
            out = &out + &c.scale(lambda.powi(*k));
        }
        out
    }

    /// `g(λ)` at one grid point.
    pub fn evaluate_at(&self, lambda: C64, idx: usize) -> Mat2 {
        self.coefficients
            .iter()
            .map(|(k, c)| c.mat2(0, idx) * lambda.powi(*k))
            .fold(Mat2::zeros(), |a, b| a + b)
    }

    /// Product `self · other`, keeping powers `≤ k_top`.
    pub fn compose(&self, other: &GaugeFamily, k_top: i32) -> Result<GaugeFamily> {
        if self.domain != other.domain {
            return Err(Error::Shape("gauges live on different domains".into()));
        }
        Ok(Self {
            domain: self.domain,
            coefficients: series_product(&self.coefficients, &other.coefficients, Some(k_top))?,
        })
    }

    /// Inverse series, exact through power `k_top`.
    ///
    /// With only non-negative powers and an invertible constant term the
    /// inverse is the formal power series `h_0 = g_0^{-1}`,
    /// `h_k = −g_0^{-1} Σ_{j≥1} g_j h_{k−j}`. Otherwise `g` is evaluated on
    /// roots of unity, inverted pointwise and re-interpolated by a discrete
    /// Fourier transform in λ.
    pub fn inverse_to(&self, k_top: i32) -> Result<GaugeFamily> {
        if self.m_min() >= 0 {
            if let Ok(h0) = self.pointwise_inverse_coefficient() {
                return self.power_series_inverse(h0, k_top);
            }
        }
        self.interpolated_inverse(k_top)
    }

    pub fn inverse(&self) -> Result<GaugeFamily> {
        self.inverse_to(DEFAULT_TRUNCATION)
    }

    fn pointwise_inverse_coefficient(&self) -> Result<GridField> {
        let g0 = self
            .coefficients
            .get(&0)
            .ok_or(Error::SingularGauge { i: 0, j: 0, det: 0.0 })?;
        let mut h0 = g0.clone();
        for idx in 0..self.domain.len() {
            let (i, j) = self.domain.coords(idx);
            h0.set_mat2(0, idx, &invert_checked(&g0.mat2(0, idx), i, j)?);
        }
        Ok(h0)
    }

    fn power_series_inverse(&self, h0: GridField, k_top: i32) -> Result<GaugeFamily> {
        let mut h: Series = [(0, h0.clone())].into();
        for k in 1..=k_top.max(0) {
            let mut acc = GridField::zeros(&self.domain, 2, FormDegree::Zero);
            for (j, gj) in self.coefficients.range(1..=k) {
                acc = &acc + &gj.matmul(&h[&(k - j)])?;
            }
            let hk = h0.matmul(&acc)?.scale(-ONE);
            if hk.sup_norm() > 0.0 {
                h.insert(k, hk);
            }
        }
        Ok(Self {
            domain: self.domain,
            coefficients: h,
        })
    }

    fn interpolated_inverse(&self, k_top: i32) -> Result<GaugeFamily> {
        let m = k_top
            .max(-self.m_min())
            .max(2 * (self.m_max() - self.m_min()))
            .max(DEFAULT_TRUNCATION);
        let samples = (2 * m + 1) as usize;
        let lambdas: Vec<C64> = (0..samples)
            .map(|s| C64::from_polar(1.0, 2.0 * PI * s as f64 / samples as f64))
            .collect();
        let n = self.domain.len();
        let mut inv_values = vec![vec![Mat2::zeros(); n]; samples];
        for (s, lam) in lambdas.iter().enumerate() {
            for idx in 0..n {
                let (i, j) = self.domain.coords(idx);
                inv_values[s][idx] = invert_checked(&self.evaluate_at(*lam, idx), i, j)?;
            }
        }
        let mut coefficients = Series::new();
        let mut scale = 0.0f64;
        for k in -m..=m {
            let mut c = GridField::zeros(&self.domain, 2, FormDegree::Zero);
            for idx in 0..n {
                let mut acc = Mat2::zeros();
                for (s, lam) in lambdas.iter().enumerate() {
                    acc += inv_values[s][idx] * lam.powi(-k);
                }
                c.set_mat2(0, idx, &(acc / C64::new(samples as f64, 0.0)));
            }
            scale = scale.max(c.sup_norm());
            coefficients.insert(k, c);
        }
        coefficients.retain(|_, c| c.sup_norm() > 1e-14 * scale);
        Ok(Self {
            domain: self.domain,
            coefficients,
        })
    }

    /// Winding number of `λ ↦ det g(λ)` around 0 along `|λ| = 1`.
    ///
    /// Computed from 256 argument increments at the first grid point and
    /// confirmed at 8 further pseudo-random grid points.
    pub fn det_winding(&self) -> Result<i64> {
        let reference = self.winding_at(0)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        for _ in 0..8 {
            let idx = rng.random_range(0..self.domain.len());
            let w = self.winding_at(idx)?;
            if w != reference {
                return Err(Error::NonConstantWinding(reference, w));
            }
        }
        Ok(reference)
    }

    fn winding_at(&self, idx: usize) -> Result<i64> {
        const SAMPLES: usize = 256;
        let dets: Vec<C64> = (0..=SAMPLES)
            .map(|s| {
                let lam = C64::from_polar(1.0, 2.0 * PI * s as f64 / SAMPLES as f64);
                self.evaluate_at(lam, idx).determinant()
            })
            .collect();
        let smallest = dets.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
        if smallest < SINGULAR_DET {
            return Err(Error::IndeterminateWinding(smallest));
        }
        let total: f64 = dets.windows(2).map(|w| (w[1] / w[0]).arg()).sum();
        Ok((total / (2.0 * PI)).round() as i64)
    }
}

fn invert_checked(m: &Mat2, i: usize, j: usize) -> Result<Mat2> {
    let det = m.determinant();
    if det.norm() < SINGULAR_DET {
        return Err(Error::SingularGauge { i, j, det: det.norm() });
    }
    Ok(Mat2::new(m[(1, 1)], -m[(0, 1)], -m[(1, 0)], m[(0, 0)]) / det)
}

fn accumulate(series: &mut Series, k: i32, v: GridField) {
    match series.get_mut(&k) {
        Some(c) => *c = &*c + &v,
        None => {
            series.insert(k, v);
        }
    }
}

/// Cauchy product of two Laurent series with pointwise matrix products,
/// keeping powers `≤ k_top` when given.
fn series_product(a: &Series, b: &Series, k_top: Option<i32>) -> Result<Series> {
    let mut out = Series::new();
    for (i, x) in a {
        for (j, y) in b {
            let k = i + j;
            if k_top.is_some_and(|t| k > t) {
                continue;
            }
            accumulate(&mut out, k, x.matmul(y)?);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::surface_grid::I;

    fn dom() -> Domain {
        Domain::unit_torus(16).unwrap()
    }

    fn sample_family(domain: &Domain) -> LambdaFamily {
        let a = |z: C64| {
            let s = (z.re * 2.0 * PI).sin();
            Mat2::new(C64::new(s, 0.2), ONE, I * s, C64::new(-s, -0.2))
        };
        let b = |z: C64| {
            let c = (z.im * 2.0 * PI).cos();
            Mat2::new(I * c, ZERO, ONE * c, -I * c)
        };
        LambdaFamily::new(
            domain,
            [
                (-1, GridField::one_form_fn(domain, |z| (a(z), Mat2::zeros()))),
                (0, GridField::one_form_fn(domain, |z| (b(z), a(z) * C64::new(0.5, 0.0)))),
                (1, GridField::one_form_fn(domain, |z| (a(z) * I, b(z)))),
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_family_is_flat() {
        let fam = LambdaFamily::zero(&dom());
        assert!(fam.flatness_residual().values().all(|v| *v == 0.0));
    }

    #[test]
    fn rejects_trace() {
        let d = dom();
        let c = GridField::one_form_fn(&d, |_| (Mat2::identity(), Mat2::zeros()));
        assert!(LambdaFamily::new(&d, [(0, c)]).is_err());
    }

    #[test]
    fn pole_at_zero() {
        let fam = sample_family(&dom());
        assert!(matches!(fam.evaluate(ZERO), Err(Error::Pole { k_min: -1 })));
        let only0 = LambdaFamily::new(&dom(), [(0, fam.coefficient_or_zero(0))]).unwrap();
        assert_eq!(only0.evaluate(ZERO).unwrap(), fam.coefficient_or_zero(0));
        assert!(
            only0
                .evaluate(C64::new(3.0, -1.0))
                .unwrap()
                .max_diff(&fam.coefficient_or_zero(0))
                < 1e-15
        );
    }

    #[test]
    fn evaluate_at_one_is_sum() {
        let fam = sample_family(&dom());
        let sum = fam
            .coefficients()
            .values()
            .fold(GridField::zeros(&dom(), 2, FormDegree::One), |a, c| &a + c);
        assert!(fam.evaluate(ONE).unwrap().max_diff(&sum) < 1e-14);
    }

    #[test]
    fn lambda_constant_gauge_conjugates() {
        let d = dom();
        let fam = sample_family(&d);
        let g0 = Mat2::new(ONE, C64::new(0.5, 0.1), ZERO, C64::new(2.0, 0.0));
        let g = GaugeFamily::constant(&d, [(0, g0)]);
        let out = fam.gauge_apply(&g, 4).unwrap();
        let g0inv = g0.try_inverse().unwrap();
        for (k, c) in fam.coefficients() {
            let expect = c.map_mat2(|m| g0inv * m * g0);
            assert!(out.coefficient_or_zero(*k).max_diff(&expect) < 1e-13);
        }
        assert_eq!(out.range(), (-1, 1));
        let same = fam.gauge_apply(&GaugeFamily::identity(&d), 4).unwrap();
        assert!(same.max_diff(&fam) < 1e-15);
    }

    #[test]
    fn pure_gauge_is_flat() {
        let d = Domain::unit_torus(64).unwrap();
        let g0 = GridField::mat2_fn(&d, |z| {
            let s = (2.0 * PI * z.re).sin() * 0.3;
            let t = (2.0 * PI * z.im).cos() * 0.2;
            Mat2::new(ONE + s, C64::new(t, s), C64::new(0.0, t), ONE - s * 0.5)
        });
        let g = GaugeFamily::lambda_constant(g0).unwrap();
        let fam = LambdaFamily::zero(&d).gauge_apply(&g, 4).unwrap();
        assert_eq!(fam.range(), (0, 0));
        assert!(fam.flatness_residual()[&0] < 1e-10);
    }

    #[test]
    fn sigma_pullback_evaluation_identity() {
        let d = dom();
        let fam = sample_family(&d);
        for sigma in [Involution::Tau, Involution::Rho] {
            let pulled = fam.sigma_pullback(sigma);
            for t in 0..8 {
                let lam = C64::from_polar(0.7 + 0.1 * t as f64, 0.9 * t as f64 + 0.3);
                let lhs = pulled.evaluate(lam).unwrap();
                let rhs = fam.evaluate(sigma.map_lambda(lam)).unwrap().adjoint().scale(-ONE);
                assert!(lhs.max_diff(&rhs) < 1e-12, "{sigma:?} at {lam}");
            }
        }
        let n = fam.sigma_pullback(Involution::N);
        for t in 0..8 {
            let lam = C64::from_polar(1.3, 0.7 * t as f64);
            assert!(n.evaluate(lam).unwrap().max_diff(&fam.evaluate(-lam).unwrap()) < 1e-12);
        }
        assert!(n.sigma_pullback(Involution::N).max_diff(&fam) == 0.0);
        for sigma in [Involution::Tau, Involution::Rho] {
            assert!(fam.sigma_pullback(sigma).sigma_pullback(sigma).max_diff(&fam) < 1e-15);
        }
    }

    #[test]
    fn lambda_squared_substitution() {
        let d = dom();
        let fam = sample_family(&d);
        let sq = fam.substitute_lambda_squared();
        assert_eq!(sq.range(), (-2, 2));
        assert!(sq.coefficient(1).is_none() && sq.coefficient(-1).is_none());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..8 {
            let lam = C64::from_polar(rng.random_range(0.5..1.5), rng.random_range(0.0..6.3));
            let lhs = sq.evaluate(lam).unwrap();
            let rhs = fam.evaluate(lam * lam).unwrap();
            assert!(lhs.max_diff(&rhs) < 1e-12);
        }
    }

    #[test]
    fn winding_examples() {
        let d = dom();
        assert_eq!(GaugeFamily::identity(&d).det_winding().unwrap(), 0);
        let e11 = Mat2::new(ONE, ZERO, ZERO, ZERO);
        let e22 = Mat2::new(ZERO, ZERO, ZERO, ONE);
        let g = GaugeFamily::constant(&d, [(1, e11), (0, e22)]);
        assert_eq!(g.det_winding().unwrap(), 1);
        let g = GaugeFamily::constant(&d, [(2, e11), (-1, e22)]);
        assert_eq!(g.det_winding().unwrap(), 1);
        let g = GaugeFamily::constant(&d, [(0, e11)]);
        assert!(matches!(g.det_winding(), Err(Error::IndeterminateWinding(_))));
    }

    #[test]
    fn interpolated_inverse_of_laurent_gauge() {
        let d = dom();
        let e11 = Mat2::new(ONE, ZERO, ZERO, ZERO);
        let e22 = Mat2::new(ZERO, ZERO, ZERO, ONE);
        let g = GaugeFamily::constant(&d, [(2, e11), (-1, e22)]);
        let inv = g.inverse().unwrap();
        assert_eq!(inv.m_min(), -2);
        assert_eq!(inv.m_max(), 1);
        let prod = g.compose(&inv, 8).unwrap();
        assert!(prod.coefficients()[&0].max_diff(&GridField::identity(&d, 2)) < 1e-13);
        assert!(prod
            .coefficients()
            .iter()
            .filter(|(k, _)| **k != 0)
            .all(|(_, c)| c.sup_norm() < 1e-13));
    }

    #[test]
    fn power_series_inverse_round_trip() {
        let d = dom();
        let a = Mat2::new(ZERO, ONE, C64::new(0.3, 0.0), ZERO);
        let gen: BTreeMap<i32, GridField> = [(1, GridField::constant_mat2(&d, a))].into();
        let g = GaugeFamily::exp_positive(&d, &gen, 6).unwrap();
        let inv = g.inverse_to(6).unwrap();
        let prod = g.compose(&inv, 6).unwrap();
        for (k, c) in prod.coefficients() {
            let expect = if *k == 0 {
                GridField::identity(&d, 2)
            } else {
                GridField::zeros(&d, 2, FormDegree::Zero)
            };
            assert!(c.max_diff(&expect) < 1e-13, "k={k}");
        }
    }

    #[test]
    fn singular_gauge_names_point() {
        let d = dom();
        let g0 = GridField::mat2_fn(&d, |z| {
            if z == C64::new(0.25, 0.5) {
                Mat2::zeros()
            } else {
                Mat2::identity()
            }
        });
        let g = GaugeFamily::lambda_constant(g0).unwrap();
        match sample_family(&d).gauge_apply(&g, 4) {
            Err(Error::SingularGauge { i, j, .. }) => assert_eq!((i, j), (4, 8)),
            other => panic!("expected singular gauge, got {other:?}"),
        }
    }

    #[test]
    fn binary_and_json_round_trip() {
        let fam = sample_family(&dom()).with_higgs_flag().unwrap();
        let mut buf = Vec::new();
        fam.write_binary(&mut buf).unwrap();
        assert_eq!(LambdaFamily::read_binary(&mut buf.as_slice()).unwrap(), fam);
        assert_eq!(LambdaFamily::from_json(&fam.to_json().unwrap()).unwrap(), fam);
    }
}
