use std::ops::{Add, Mul, Neg, Sub};

use num_complex::Complex;

use super::grid::TorusGrid;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Real samples of a surface function on the nodes of a [`TorusGrid`].
#[derive(Clone, Debug)]
pub struct ScalarField<T: Real> {
    grid: TorusGrid<T>,
    values: Vec<T>,
}

/// Normalized Fourier coefficients, `f̂(ξ) = N⁻¹ Σ_x f(x) e^{-i x·ξ}`.
#[derive(Clone, Debug)]
pub struct SpectralField<T: Real> {
    grid: TorusGrid<T>,
    coeffs: Vec<Complex<T>>,
}

impl<T: Real> ScalarField<T> {
    pub fn new(grid: &TorusGrid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::SizeMismatch { expected: grid.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("field value at node {i}")));
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub(crate) fn from_vec_unchecked(grid: &TorusGrid<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid: grid.clone(), values }
    }

    pub fn zeros(grid: &TorusGrid<T>) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn constant(grid: &TorusGrid<T>, c: T) -> Self {
        Self { grid: grid.clone(), values: vec![c; grid.len()] }
    }

    /// Samples `f(x)` at every node; for `d = 1` the second coordinate is 0.
    pub fn from_fn(grid: &TorusGrid<T>, f: impl Fn([T; 2]) -> T) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.node(i))).collect();
        Self { grid: grid.clone(), values }
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert!(self.grid == other.grid, "fields live on different grids");
        let values = self.values.iter().zip(&other.values).map(|(&a, &b)| f(a, b)).collect();
        Self { grid: self.grid.clone(), values }
    }

    pub fn scale(&self, c: T) -> Self {
        self.map(|v| v * c)
    }

    pub fn add_scaled(&self, other: &Self, c: T) -> Self {
        self.zip_map(other, |a, b| a + c * b)
    }

    /// Quadrature of `∫ f g`.
    pub fn dot(&self, other: &Self) -> T {
        assert!(self.grid == other.grid, "fields live on different grids");
        let s: T = self.values.iter().zip(&other.values).map(|(&a, &b)| a * b).sum();
        s * self.grid.cell_volume()
    }

    pub fn integral(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.cell_volume()
    }

    pub fn mean(&self) -> T {
        self.values.iter().copied().sum::<T>() / T::from_usize_lossy(self.values.len())
    }

    pub fn l2_norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    pub fn min(&self) -> T {
        self.values.iter().fold(T::infinity(), |m, &v| m.min(v))
    }

    pub fn max(&self) -> T {
        self.values.iter().fold(T::neg_infinity(), |m, &v| m.max(v))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// The field minus its mean.
    pub fn without_mean(&self) -> Self {
        let m = self.mean();
        self.map(|v| v - m)
    }
}

impl<T: Real> Add for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn add(self, rhs: Self) -> ScalarField<T> {
        self.zip_map(rhs, |a, b| a + b)
    }
}

impl<T: Real> Sub for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn sub(self, rhs: Self) -> ScalarField<T> {
        self.zip_map(rhs, |a, b| a - b)
    }
}

/// Pointwise product.
impl<T: Real> Mul for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn mul(self, rhs: Self) -> ScalarField<T> {
        self.zip_map(rhs, |a, b| a * b)
    }
}

impl<T: Real> Neg for &ScalarField<T> {
    type Output = ScalarField<T>;
    fn neg(self) -> ScalarField<T> {
        self.map(|v| -v)
    }
}

impl<T: Real> SpectralField<T> {
    pub fn new(grid: &TorusGrid<T>, coeffs: Vec<Complex<T>>) -> Result<Self> {
        if coeffs.len() != grid.len() {
            return Err(Error::SizeMismatch { expected: grid.len(), got: coeffs.len() });
        }
        Ok(Self { grid: grid.clone(), coeffs })
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex<T>] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.coeffs
    }

    /// Coefficient of the integer mode vector `m`.
    pub fn mode(&self, m: [i64; 2]) -> Complex<T> {
        self.coeffs[self.grid.index_of_mode(m)]
    }

    /// Largest deviation from `F(-ξ) = conj F(ξ)` (Nyquist entries excluded).
    pub fn hermitian_defect(&self) -> T {
        let g = &self.grid;
        let mut worst = T::zero();
        for idx in 0..g.len() {
            if g.touches_nyquist(idx) {
                continue;
            }
            let [j0, j1] = g.split(idx);
            let neg = g.index_of_mode([-g.mode(j0), -g.mode(j1)]);
            worst = worst.max((self.coeffs[idx] - self.coeffs[neg].conj()).norm());
        }
        worst
    }
}

pub fn forward_transform<T: Real>(f: &ScalarField<T>) -> SpectralField<T> {
    let g = f.grid();
    let mut buf: Vec<Complex<T>> = f.values().iter().map(|&v| Complex::new(v, T::zero())).collect();
    g.fft_forward(&mut buf);
    let inv_n = T::one() / T::from_usize_lossy(g.len());
    for c in &mut buf {
        *c = *c * inv_n;
    }
    SpectralField { grid: g.clone(), coeffs: buf }
}

/// Real part of the synthesis `Σ_ξ F(ξ) e^{i x·ξ}`.
pub fn inverse_transform<T: Real>(spec: &SpectralField<T>) -> ScalarField<T> {
    let mut buf = spec.coeffs.clone();
    spec.grid.fft_inverse(&mut buf);
    ScalarField::from_vec_unchecked(&spec.grid, buf.into_iter().map(|c| c.re).collect())
}

/// Applies `m(ξ)` coefficient-wise; the Nyquist mode is always zeroed.
pub fn fourier_multiplier<T: Real>(
    m: impl Fn([T; 2]) -> Complex<T>,
    f: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    let g = f.grid();
    let mut spec = forward_transform(f);
    for (idx, c) in spec.coeffs.iter_mut().enumerate() {
        if g.touches_nyquist(idx) {
            *c = Complex::new(T::zero(), T::zero());
            continue;
        }
        let mv = m(g.xi(idx));
        if !(mv.re.is_finite() && mv.im.is_finite()) {
            return Err(Error::NonFinite(format!("multiplier at spectral index {idx}")));
        }
        *c = *c * mv;
    }
    Ok(inverse_transform(&spec))
}

/// Multiplier application for symbols known to be finite.
pub(crate) fn apply_multiplier<T: Real>(m: impl Fn([T; 2]) -> Complex<T>, f: &ScalarField<T>) -> ScalarField<T> {
    fourier_multiplier(m, f).expect("finite multiplier")
}

/// Spectral partial derivative along `axis`.
pub fn partial<T: Real>(f: &ScalarField<T>, axis: usize) -> ScalarField<T> {
    let g = f.grid().clone();
    let mut spec = forward_transform(f);
    for (idx, c) in spec.coeffs.iter_mut().enumerate() {
        let k = g.derivative_xi(idx)[axis];
        *c = Complex::new(-c.im * k, c.re * k);
    }
    inverse_transform(&spec)
}

/// Spectral gradient, one field per axis.
pub fn gradient<T: Real>(f: &ScalarField<T>) -> Vec<ScalarField<T>> {
    let g = f.grid().clone();
    let spec = forward_transform(f);
    (0..g.dim())
        .map(|axis| {
            let mut s = spec.clone();
            for (idx, c) in s.coeffs.iter_mut().enumerate() {
                let k = g.derivative_xi(idx)[axis];
                *c = Complex::new(-c.im * k, c.re * k);
            }
            inverse_transform(&s)
        })
        .collect()
}

/// Spectral divergence of a vector field given per axis.
pub fn divergence<T: Real>(v: &[ScalarField<T>]) -> ScalarField<T> {
    assert!(!v.is_empty(), "divergence of an empty vector field");
    let g = v[0].grid().clone();
    assert_eq!(v.len(), g.dim(), "vector field has wrong number of components");
    let mut acc = vec![Complex::new(T::zero(), T::zero()); g.len()];
    for (axis, comp) in v.iter().enumerate() {
        let spec = forward_transform(comp);
        for (idx, (a, c)) in acc.iter_mut().zip(&spec.coeffs).enumerate() {
            let k = g.derivative_xi(idx)[axis];
            *a = *a + Complex::new(-c.im * k, c.re * k);
        }
    }
    inverse_transform(&SpectralField { grid: g, coeffs: acc })
}

/// Spectral Laplacian (Nyquist zeroed, consistent with `divergence ∘ gradient`).
pub fn laplacian<T: Real>(f: &ScalarField<T>) -> ScalarField<T> {
    let g = f.grid().clone();
    let mut spec = forward_transform(f);
    for (idx, c) in spec.coeffs.iter_mut().enumerate() {
        let k = g.derivative_xi(idx);
        let k2 = k[0] * k[0] + k[1] * k[1];
        *c = *c * (-k2);
    }
    inverse_transform(&spec)
}

/// `|f|_{H^s} = (L^d Σ_ξ (1+|ξ|²)^s |f̂(ξ)|²)^{1/2}`, all lattice modes included.
pub fn sobolev_norm<T: Real>(f: &ScalarField<T>, s: T) -> T {
    let g = f.grid();
    let spec = forward_transform(f);
    let sum: T = spec
        .coeffs
        .iter()
        .enumerate()
        .map(|(idx, c)| {
            let xi = g.xi(idx);
            let w = (T::one() + xi[0] * xi[0] + xi[1] * xi[1]).powf(s);
            w * c.norm_sqr()
        })
        .sum();
    (sum * g.volume()).sqrt()
}

/// 2/3-rule truncation.
pub fn dealias<T: Real>(f: &ScalarField<T>) -> ScalarField<T> {
    let g = f.grid().clone();
    let mut spec = forward_transform(f);
    for (idx, c) in spec.coeffs.iter_mut().enumerate() {
        if !g.dealias_keeps(idx) {
            *c = Complex::new(T::zero(), T::zero());
        }
    }
    inverse_transform(&spec)
}

/// Zeroes the Nyquist mode.
pub fn strip_nyquist<T: Real>(f: &ScalarField<T>) -> ScalarField<T> {
    apply_multiplier(|_| Complex::new(T::one(), T::zero()), f)
}
