use std::fmt;
use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::field::{forward_transform, ScalarField};
use super::grid::TorusGrid;
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Multi-index of a `ξ`-derivative; the second entry is ignored in `d = 1`.
pub type MultiIndex = [usize; 2];

/// A complex function of (grid node, frequency) with optional analytic
/// `ξ`-derivatives.
pub trait SymbolFn<T: Real>: Send + Sync {
    fn eval(&self, node: usize, xi: [T; 2]) -> Complex<T>;

    /// `∂_ξ^β σ(x, ξ)`, or `None` beyond the supplied order.
    fn xi_derivative(&self, _node: usize, _xi: [T; 2], _beta: MultiIndex) -> Option<Complex<T>> {
        None
    }

    /// Highest `|β|` for which `xi_derivative` answers.
    fn derivative_order(&self) -> usize {
        0
    }
}

/// Pseudo-differential symbol on the lattice of a grid, with a declared order.
#[derive(Clone)]
pub struct Symbol<T: Real> {
    grid: TorusGrid<T>,
    order: T,
    inner: Arc<dyn SymbolFn<T>>,
}

impl<T: Real> fmt::Debug for Symbol<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Symbol")
            .field("grid", &self.grid)
            .field("order", &self.order)
            .field("derivative_order", &self.inner.derivative_order())
            .finish()
    }
}

struct ClosureSymbol<E, D> {
    eval: E,
    deriv: D,
    reg: usize,
}

impl<T, E, D> SymbolFn<T> for ClosureSymbol<E, D>
where
    T: Real,
    E: Fn(usize, [T; 2]) -> Complex<T> + Send + Sync,
    D: Fn(usize, [T; 2], MultiIndex) -> Complex<T> + Send + Sync,
{
    fn eval(&self, node: usize, xi: [T; 2]) -> Complex<T> {
        (self.eval)(node, xi)
    }

    fn xi_derivative(&self, node: usize, xi: [T; 2], beta: MultiIndex) -> Option<Complex<T>> {
        let order = beta[0] + beta[1];
        if order == 0 {
            Some((self.eval)(node, xi))
        } else if order <= self.reg {
            Some((self.deriv)(node, xi, beta))
        } else {
            None
        }
    }

    fn derivative_order(&self) -> usize {
        self.reg
    }
}

/// Dense table `values[node * N + mode]` on the lattice.
struct TableSymbol<T: Real> {
    grid: TorusGrid<T>,
    values: Vec<Complex<T>>,
}

impl<T: Real> SymbolFn<T> for TableSymbol<T> {
    fn eval(&self, node: usize, xi: [T; 2]) -> Complex<T> {
        let step = self.grid.frequency_step();
        let m0 = (xi[0] / step).round().to_i64().unwrap_or(0);
        let m1 = (xi[1] / step).round().to_i64().unwrap_or(0);
        let mode = self.grid.index_of_mode([m0, m1]);
        self.values[node * self.grid.len() + mode]
    }
}

fn czero<T: Real>() -> Complex<T> {
    Complex::new(T::zero(), T::zero())
}

impl<T: Real> Symbol<T> {
    pub fn new(grid: &TorusGrid<T>, order: T, inner: Arc<dyn SymbolFn<T>>) -> Self {
        Self { grid: grid.clone(), order, inner }
    }

    /// Symbol without analytic `ξ`-derivatives.
    pub fn from_fn(
        grid: &TorusGrid<T>,
        order: T,
        eval: impl Fn(usize, [T; 2]) -> Complex<T> + Send + Sync + 'static,
    ) -> Self {
        Self::with_derivatives(grid, order, 0, eval, |_, _, _| czero())
    }

    /// Symbol whose `ξ`-derivatives up to `reg` are supplied by `deriv`.
    pub fn with_derivatives(
        grid: &TorusGrid<T>,
        order: T,
        reg: usize,
        eval: impl Fn(usize, [T; 2]) -> Complex<T> + Send + Sync + 'static,
        deriv: impl Fn(usize, [T; 2], MultiIndex) -> Complex<T> + Send + Sync + 'static,
    ) -> Self {
        Self::new(grid, order, Arc::new(ClosureSymbol { eval, deriv, reg }))
    }

    /// Multiplication by a function of `x`: order 0, every `ξ`-derivative vanishes.
    pub fn function(field: &ScalarField<T>) -> Self {
        let vals: Arc<Vec<T>> = Arc::new(field.values().to_vec());
        let v2 = vals.clone();
        Self::with_derivatives(
            field.grid(),
            T::zero(),
            usize::MAX,
            move |node, _| Complex::new(vals[node], T::zero()),
            move |_, _, _| {
                let _ = &v2;
                czero()
            },
        )
    }

    /// `i ξ_axis`, the symbol of `∂_axis`.
    pub fn derivative(grid: &TorusGrid<T>, axis: usize) -> Self {
        Self::with_derivatives(
            grid,
            T::one(),
            usize::MAX,
            move |_, xi| Complex::new(T::zero(), xi[axis]),
            move |_, _, beta| {
                let mut unit = [0usize; 2];
                unit[axis] = 1;
                if beta == unit {
                    Complex::new(T::zero(), T::one())
                } else {
                    czero()
                }
            },
        )
    }

    /// Symbol stored as a dense lattice table `values[node * N + mode]`.
    pub fn table(grid: &TorusGrid<T>, order: T, values: Vec<Complex<T>>) -> Result<Self> {
        let n = grid.len();
        if values.len() != n * n {
            return Err(Error::SizeMismatch { expected: n * n, got: values.len() });
        }
        Ok(Self::new(grid, order, Arc::new(TableSymbol { grid: grid.clone(), values })))
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    pub fn order(&self) -> T {
        self.order
    }

    pub fn derivative_order(&self) -> usize {
        self.inner.derivative_order()
    }

    pub fn eval(&self, node: usize, xi: [T; 2]) -> Complex<T> {
        self.inner.eval(node, xi)
    }

    pub fn xi_derivative(&self, node: usize, xi: [T; 2], beta: MultiIndex) -> Result<Complex<T>> {
        let needed = beta[0] + beta[1];
        self.inner.xi_derivative(node, xi, beta).ok_or(Error::MissingDerivative {
            needed,
            available: self.inner.derivative_order(),
        })
    }

    /// Lattice samples, `out[node * N + mode]`.
    pub fn tabulate(&self) -> Vec<Complex<T>> {
        self.tabulate_with(|node, xi| self.eval(node, xi))
    }

    /// Lattice samples of `∂_ξ^β σ`.
    pub fn tabulate_xi_derivative(&self, beta: MultiIndex) -> Result<Vec<Complex<T>>> {
        let needed = beta[0] + beta[1];
        if needed > self.derivative_order() {
            return Err(Error::MissingDerivative { needed, available: self.derivative_order() });
        }
        Ok(self.tabulate_with(|node, xi| self.inner.xi_derivative(node, xi, beta).unwrap_or_else(czero)))
    }

    fn tabulate_with(&self, f: impl Fn(usize, [T; 2]) -> Complex<T> + Sync) -> Vec<Complex<T>> {
        let g = &self.grid;
        let n = g.len();
        let xis: Vec<[T; 2]> = (0..n).map(|m| g.xi(m)).collect();
        let mut out = vec![czero(); n * n];
        out.par_chunks_mut(n).enumerate().for_each(|(node, row)| {
            for (m, slot) in row.iter_mut().enumerate() {
                *slot = f(node, xis[m]);
            }
        });
        out
    }

    /// Pointwise sum, order `max(m₁, m₂)`; derivatives available up to the common order.
    pub fn sum(&self, other: &Symbol<T>) -> Symbol<T> {
        assert!(self.grid == other.grid, "symbols live on different grids");
        let (a, b) = (self.inner.clone(), other.inner.clone());
        let (a2, b2) = (a.clone(), b.clone());
        let reg = a.derivative_order().min(b.derivative_order());
        Symbol::with_derivatives(
            &self.grid,
            self.order.max(other.order),
            reg,
            move |node, xi| a.eval(node, xi) + b.eval(node, xi),
            move |node, xi, beta| {
                a2.xi_derivative(node, xi, beta).unwrap_or_else(czero)
                    + b2.xi_derivative(node, xi, beta).unwrap_or_else(czero)
            },
        )
    }

    /// Compares declared first and second `ξ`-derivatives with centered lattice
    /// differences at sampled points with `|ξ| ≥ 1`; returns the largest
    /// discrepancy, or an error when it exceeds `10 h²` (`h` the lattice step).
    pub fn check_xi_derivatives(&self, samples: usize, seed: u64) -> Result<T> {
        let reg = self.derivative_order().min(2);
        if reg == 0 {
            return Ok(T::zero());
        }
        let g = &self.grid;
        let h = g.frequency_step();
        let half = (g.n() / 2) as i64;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst = T::zero();
        let dim = g.dim();
        let mut drawn = 0;
        while drawn < samples {
            let node = rng.gen_range(0..g.len());
            let m = [rng.gen_range(-half + 2..half - 1), if dim == 2 { rng.gen_range(-half + 2..half - 1) } else { 0 }];
            let xi = [T::from_i64(m[0]).unwrap() * h, T::from_i64(m[1]).unwrap() * h];
            if (xi[0] * xi[0] + xi[1] * xi[1]).sqrt() < T::one() {
                continue;
            }
            drawn += 1;
            for axis in 0..dim {
                let mut plus = xi;
                let mut minus = xi;
                plus[axis] = plus[axis] + h;
                minus[axis] = minus[axis] - h;
                let mut e = [0usize; 2];
                e[axis] = 1;
                let fd = (self.eval(node, plus) - self.eval(node, minus)) / (h + h);
                let declared = self.xi_derivative(node, xi, e)?;
                worst = worst.max((fd - declared).norm());
                if reg >= 2 {
                    for axis2 in 0..dim {
                        let mut beta = e;
                        beta[axis2] += 1;
                        // difference along `axis` of the derivative along `axis2`
                        let mut e2 = [0usize; 2];
                        e2[axis2] = 1;
                        let fd2 = (self.xi_derivative(node, plus, e2)? - self.xi_derivative(node, minus, e2)?)
                            / (h + h);
                        let declared2 = self.xi_derivative(node, xi, beta)?;
                        worst = worst.max((fd2 - declared2).norm());
                    }
                }
            }
        }
        let limit = T::lit(10.0) * h * h;
        if worst > limit {
            return Err(Error::Invalid(format!(
                "declared xi-derivatives disagree with lattice differences by {worst:e} (limit {limit:e})"
            )));
        }
        Ok(worst)
    }
}

/// Output of [`quantize`]: complex samples plus a realness flag.
#[derive(Clone, Debug)]
pub struct Quantized<T: Real> {
    grid: TorusGrid<T>,
    values: Vec<Complex<T>>,
    imag_max: T,
}

impl<T: Real> Quantized<T> {
    pub fn values(&self) -> &[Complex<T>] {
        &self.values
    }

    /// Largest imaginary part relative to the largest modulus.
    pub fn imaginary_defect(&self) -> T {
        let scale = self.values.iter().fold(T::zero(), |m, c| m.max(c.norm()));
        if scale == T::zero() {
            T::zero()
        } else {
            self.imag_max / scale
        }
    }

    /// Whether the output is real to round-off, i.e. the symbol was Hermitian.
    pub fn is_real(&self) -> bool {
        self.imaginary_defect() <= T::lit(1e3) * T::epsilon()
    }

    pub fn real(&self) -> ScalarField<T> {
        ScalarField::from_vec_unchecked(&self.grid, self.values.iter().map(|c| c.re).collect())
    }

    pub fn imag(&self) -> ScalarField<T> {
        ScalarField::from_vec_unchecked(&self.grid, self.values.iter().map(|c| c.im).collect())
    }
}

/// `e^{2πi k/n}` for `k = 0..n`.
fn roots<T: Real>(n: usize) -> Vec<Complex<T>> {
    (0..n)
        .map(|k| {
            let th = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(n);
            Complex::new(th.cos(), th.sin())
        })
        .collect()
}

/// Left (Kohn-Nirenberg) quantization `Op(σ)f(x) = Σ_ξ σ(x, ξ) f̂(ξ) e^{i x·ξ}`,
/// evaluated exactly at every node; the Nyquist mode of `f` is discarded.
pub fn quantize<T: Real>(sym: &Symbol<T>, f: &ScalarField<T>) -> Result<Quantized<T>> {
    let g = f.grid();
    if *g != sym.grid {
        return Err(Error::GridMismatch);
    }
    let n = g.n();
    let len = g.len();
    let spec = forward_transform(f);
    let active: Vec<(usize, [T; 2], Complex<T>)> = spec
        .coeffs()
        .iter()
        .enumerate()
        .filter(|(idx, c)| !g.touches_nyquist(*idx) && c.norm_sqr() > T::zero())
        .map(|(idx, &c)| (idx, g.xi(idx), c))
        .collect();
    let roots = roots::<T>(n);
    let modes: Vec<[usize; 2]> = (0..len)
        .map(|idx| {
            let [j0, j1] = g.split(idx);
            [g.mode(j0).rem_euclid(n as i64) as usize, g.mode(j1).rem_euclid(n as i64) as usize]
        })
        .collect();
    let values: Vec<Result<Complex<T>>> = (0..len)
        .into_par_iter()
        .map(|node| {
            let [i0, i1] = g.split(node);
            let mut acc = czero();
            for &(idx, xi, c) in &active {
                let s = sym.eval(node, xi);
                if !(s.re.is_finite() && s.im.is_finite()) {
                    return Err(Error::NonFinite(format!("symbol at node {node}, mode {idx}")));
                }
                let [m0, m1] = modes[idx];
                let phase = roots[(i0 * m0 + i1 * m1) % n];
                acc = acc + s * c * phase;
            }
            Ok(acc)
        })
        .collect();
    let values: Vec<Complex<T>> = values.into_iter().collect::<Result<_>>()?;
    let imag_max = values.iter().fold(T::zero(), |m, c| m.max(c.im.abs()));
    Ok(Quantized { grid: g.clone(), values, imag_max })
}
