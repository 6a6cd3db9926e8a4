//! Anisotropic second-order operators attached to a surface `a`, symbol
//! composition, and empirical operator orders.

use std::sync::Arc;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{
    forward_transform, gradient, inverse_transform, partial, sobolev_norm, ScalarField, SpectralField, Symbol,
    TorusGrid,
};

fn slope_of<T: Real>(a: &ScalarField<T>) -> Vec<ScalarField<T>> {
    gradient(a)
}

fn slope2<T: Real>(grad: &[ScalarField<T>]) -> ScalarField<T> {
    let mut acc = &grad[0] * &grad[0];
    for g in &grad[1..] {
        acc = &acc + &(g * g);
    }
    acc
}

/// `Λ_a f = −Σ g_ij(∇a) ∂_i∂_j f`, `g_ij = δ_ij − a_i a_j / (1+|∇a|²)`.
pub fn lambda_a_apply<T: Real>(a: &ScalarField<T>, f: &ScalarField<T>) -> ScalarField<T> {
    lambda_a_apply_with_slope(&slope_of(a), f)
}

/// [`lambda_a_apply`] with `∇a` supplied directly.
pub fn lambda_a_apply_with_slope<T: Real>(grad: &[ScalarField<T>], f: &ScalarField<T>) -> ScalarField<T> {
    let d = grad.len();
    let w = slope2(grad).map(|v| T::one() + v);
    let df: Vec<ScalarField<T>> = (0..d).map(|i| partial(f, i)).collect();
    let mut out = ScalarField::zeros(f.grid());
    for i in 0..d {
        for j in 0..d {
            let dij = partial(&df[i], j);
            let coef = (&grad[i] * &grad[j]).zip_map(&w, |p, w| -p / w);
            let coef = if i == j { coef.map(|c| c + T::one()) } else { coef };
            out = out.add_scaled(&(&coef * &dij), -T::one());
        }
    }
    out
}

/// `σ_a = (1 + |∇a|²)^{−1/4}`.
pub fn sigma_weight<T: Real>(a: &ScalarField<T>) -> ScalarField<T> {
    sigma_weight_with_slope(&slope_of(a))
}

pub fn sigma_weight_with_slope<T: Real>(grad: &[ScalarField<T>]) -> ScalarField<T> {
    slope2(grad).map(|v| (T::one() + v).powf(T::lit(-0.25)))
}

/// `𝒫_a f = (σ∇σ⁻¹·)² f − (∇a·∇(σ⁻¹·)/(1+|∇a|²)^{3/4})² f`, each first-order
/// factor applied as written.
pub fn p_a_apply<T: Real>(a: &ScalarField<T>, f: &ScalarField<T>) -> ScalarField<T> {
    let grad = slope_of(a);
    let d = grad.len();
    let sigma = sigma_weight_with_slope(&grad);
    let inv_sigma = sigma.map(|s| T::one() / s);
    let w34 = slope2(&grad).map(|v| (T::one() + v).powf(T::lit(0.75)));

    // first square: σ∇·(σ⁻¹ σ ∇(σ⁻¹ f))
    let g1: Vec<ScalarField<T>> = gradient(&(&inv_sigma * f)).iter().map(|c| c * &sigma).collect();
    let mut div = ScalarField::zeros(f.grid());
    for (i, c) in g1.iter().enumerate() {
        div = &div + &partial(&(&inv_sigma * c), i);
    }
    let first = &sigma * &div;

    let t2 = |h: &ScalarField<T>| -> ScalarField<T> {
        let gh = gradient(&(&inv_sigma * h));
        let mut acc = ScalarField::zeros(h.grid());
        for i in 0..d {
            acc = &acc + &(&grad[i] * &gh[i]);
        }
        acc.zip_map(&w34, |x, w| x / w)
    };
    &first - &t2(&t2(f))
}

/// `λ_a(x, ξ) = Σ g_ij(∇a(x)) ξ_i ξ_j`, with every `ξ`-derivative.
pub fn lambda_symbol<T: Real>(a: &ScalarField<T>) -> Symbol<T> {
    let metric = Arc::new(metric(a));
    let m2 = metric.clone();
    Symbol::with_derivatives(
        a.grid(),
        T::lit(2.0),
        usize::MAX,
        move |node, xi| {
            let g = metric[node];
            let v = g[0][0] * xi[0] * xi[0] + (g[0][1] + g[1][0]) * xi[0] * xi[1] + g[1][1] * xi[1] * xi[1];
            Complex::new(v, T::zero())
        },
        move |node, xi, beta| {
            let g = m2[node];
            let two = T::lit(2.0);
            let v = match beta {
                [1, 0] => two * (g[0][0] * xi[0] + g[0][1] * xi[1]),
                [0, 1] => two * (g[1][0] * xi[0] + g[1][1] * xi[1]),
                [2, 0] => two * g[0][0],
                [0, 2] => two * g[1][1],
                [1, 1] => two * g[0][1],
                _ => T::zero(),
            };
            Complex::new(v, T::zero())
        },
    )
}

/// `g_ij(∇a)` per node, padded to 2×2.
fn metric<T: Real>(a: &ScalarField<T>) -> Vec<[[T; 2]; 2]> {
    let grad = slope_of(a);
    let n = a.values().len();
    (0..n)
        .map(|i| {
            let a0 = grad[0].values()[i];
            let a1 = grad.get(1).map(|g| g.values()[i]).unwrap_or_else(T::zero);
            let w = T::one() + a0 * a0 + a1 * a1;
            [[T::one() - a0 * a0 / w, -a0 * a1 / w], [-a0 * a1 / w, T::one() - a1 * a1 / w]]
        })
        .collect()
}

/// `σ_a g_a σ_a`, which equals `sqrt(λ_a)`; `ξ`-derivatives to order 2.
pub fn weighted_principal_symbol<T: Real>(a: &ScalarField<T>) -> Symbol<T> {
    let lam = lambda_symbol(a);
    let l2 = lam.clone();
    Symbol::with_derivatives(
        a.grid(),
        T::one(),
        2,
        move |node, xi| Complex::new(lam.eval(node, xi).re.max(T::zero()).sqrt(), T::zero()),
        move |node, xi, beta| {
            let l = l2.eval(node, xi).re;
            if l <= T::zero() {
                return Complex::new(T::zero(), T::zero());
            }
            let r = l.sqrt();
            let d = |b: [usize; 2]| l2.xi_derivative(node, xi, b).map(|c| c.re).unwrap_or_else(|_| T::zero());
            let two = T::lit(2.0);
            let v = match beta {
                [1, 0] | [0, 1] => d(beta) / (two * r),
                [2, 0] | [0, 2] | [1, 1] => {
                    let (e1, e2) = match beta {
                        [2, 0] => ([1, 0], [1, 0]),
                        [0, 2] => ([0, 1], [0, 1]),
                        _ => ([1, 0], [0, 1]),
                    };
                    d(beta) / (two * r) - d(e1) * d(e2) / (T::lit(4.0) * r * l)
                }
                _ => T::zero(),
            };
            Complex::new(v, T::zero())
        },
    )
}

fn multi_indices(dim: usize, n: usize) -> Vec<[usize; 2]> {
    let mut out = Vec::new();
    for a0 in 0..=n {
        if dim == 1 {
            out.push([a0, 0]);
            continue;
        }
        for a1 in 0..=(n - a0) {
            out.push([a0, a1]);
        }
    }
    out
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|v| v as f64).product()
}

/// `∂_x^α` of a complex column sampled at the grid nodes (Nyquist zeroed).
fn dx_column<T: Real>(grid: &TorusGrid<T>, col: &[Complex<T>], alpha: [usize; 2]) -> Vec<Complex<T>> {
    if alpha == [0, 0] {
        return col.to_vec();
    }
    let mut buf = col.to_vec();
    grid.fft_forward(&mut buf);
    let inv_n = T::one() / T::from_usize_lossy(grid.len());
    for (idx, c) in buf.iter_mut().enumerate() {
        let k = grid.derivative_xi(idx);
        let mut m = Complex::new(inv_n, T::zero());
        for _ in 0..alpha[0] {
            m = m * Complex::new(T::zero(), k[0]);
        }
        for _ in 0..alpha[1] {
            m = m * Complex::new(T::zero(), k[1]);
        }
        *c = *c * m;
    }
    grid.fft_inverse(&mut buf);
    buf
}

/// `σ₁ ♯ₙ σ₂ = Σ_{|α|≤n} (−i)^{|α|}/α! ∂_ξ^α σ₁ ∂_x^α σ₂`, tabulated on the lattice.
pub fn sharp_product<T: Real>(s1: &Symbol<T>, s2: &Symbol<T>, n: usize) -> Result<Symbol<T>> {
    let g = s1.grid();
    if g != s2.grid() {
        return Err(Error::GridMismatch);
    }
    if s1.derivative_order() < n {
        return Err(Error::MissingDerivative { needed: n, available: s1.derivative_order() });
    }
    let len = g.len();
    let alphas = multi_indices(g.dim(), n);
    let weights: Vec<Complex<T>> = alphas
        .iter()
        .map(|a| {
            let k = a[0] + a[1];
            let mut w = Complex::new(T::one() / T::lit(factorial(a[0]) * factorial(a[1])), T::zero());
            for _ in 0..k {
                w = w * Complex::new(T::zero(), -T::one());
            }
            w
        })
        .collect();
    let columns: Vec<Vec<Complex<T>>> = (0..len)
        .into_par_iter()
        .map(|mode| {
            let xi = g.xi(mode);
            let base: Vec<Complex<T>> = (0..len).map(|node| s2.eval(node, xi)).collect();
            let mut acc = vec![Complex::new(T::zero(), T::zero()); len];
            for (alpha, w) in alphas.iter().zip(&weights) {
                let dx = dx_column(g, &base, *alpha);
                for node in 0..len {
                    let d1 = s1.xi_derivative(node, xi, *alpha).unwrap_or_else(|_| Complex::new(T::zero(), T::zero()));
                    acc[node] = acc[node] + *w * d1 * dx[node];
                }
            }
            acc
        })
        .collect();
    let mut table = vec![Complex::new(T::zero(), T::zero()); len * len];
    for (mode, col) in columns.iter().enumerate() {
        for (node, v) in col.iter().enumerate() {
            table[node * len + mode] = *v;
        }
    }
    Symbol::table(g, s1.order() + s2.order(), table)
}

/// `{σ₁, σ₂}ₙ = σ₁♯ₙσ₂ − σ₂♯ₙσ₁`, tabulated.
pub fn poisson_bracket<T: Real>(s1: &Symbol<T>, s2: &Symbol<T>, n: usize) -> Result<Symbol<T>> {
    let a = sharp_product(s1, s2, n)?.tabulate();
    let b = sharp_product(s2, s1, n)?.tabulate();
    let diff = a.iter().zip(&b).map(|(x, y)| x - y).collect();
    Symbol::table(s1.grid(), s1.order() + s2.order(), diff)
}

/// Oscillatory probe family `f_λ = cos(λ x₁) · w`.
#[derive(Clone, Debug)]
pub struct OrderProbe<T: Real> {
    pub carrier: ScalarField<T>,
    pub frequencies: Vec<T>,
}

/// Result of [`measure_order`].
#[derive(Clone, Debug)]
pub struct OrderFit<T> {
    pub slope: T,
    /// `‖op f_λ‖ / ‖f_λ‖` per frequency.
    pub norms: Vec<T>,
}

impl<T: Real> OrderProbe<T> {
    pub fn new(carrier: ScalarField<T>, frequencies: Vec<T>) -> Result<Self> {
        let cut = T::from_usize_lossy(carrier.grid().dealias_cutoff()) * carrier.grid().frequency_step();
        if frequencies.len() < 2 {
            return Err(Error::Invalid("an order probe needs at least two frequencies".into()));
        }
        if let Some(l) = frequencies.iter().find(|&&l| !(l > T::zero() && l <= cut)) {
            return Err(Error::Invalid(format!("probe frequency {l} outside (0, {cut}]")));
        }
        Ok(Self { carrier, frequencies })
    }

    /// Carrier `1 + 0.3 cos x₁ (+ 0.2 sin x₂)`.
    pub fn standard(grid: &TorusGrid<T>, frequencies: Vec<T>) -> Result<Self> {
        let two_d = grid.dim() == 2;
        let w = ScalarField::from_fn(grid, |x| {
            let mut v = T::one() + T::lit(0.3) * x[0].cos();
            if two_d {
                v = v + T::lit(0.2) * x[1].sin();
            }
            v
        });
        Self::new(w, frequencies)
    }

    pub fn member(&self, lambda: T) -> ScalarField<T> {
        let g = self.carrier.grid();
        let wave = ScalarField::from_fn(g, |x| (lambda * x[0]).cos());
        &wave * &self.carrier
    }
}

/// Least-squares slope of `log(‖op f_λ‖/‖f_λ‖)` against `log λ`.
pub fn measure_order<T: Real>(
    op: impl Fn(&ScalarField<T>) -> Result<ScalarField<T>>,
    probe: &OrderProbe<T>,
) -> Result<OrderFit<T>> {
    let mut norms = Vec::with_capacity(probe.frequencies.len());
    for &l in &probe.frequencies {
        let f = probe.member(l);
        let out = op(&f)?;
        norms.push(out.l2_norm() / f.l2_norm());
    }
    if norms.iter().all(|&v| v < T::lit(1e-13)) {
        return Err(Error::DegenerateFit("every probe response is below 1e-13".into()));
    }
    let xs: Vec<T> = probe.frequencies.iter().map(|l| l.ln()).collect();
    let ys: Vec<T> = norms.iter().map(|v| v.max(T::min_positive_value()).ln()).collect();
    Ok(OrderFit { slope: ls_slope(&xs, &ys), norms })
}

pub(crate) fn ls_slope<T: Real>(xs: &[T], ys: &[T]) -> T {
    let n = T::from_usize_lossy(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy: T = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

/// Random real field with modes `low < |ξ|_∞ ≤ high` and unit-scale coefficients.
pub fn random_band_field<T: Real>(grid: &TorusGrid<T>, low: usize, high: usize, rng: &mut ChaCha8Rng) -> ScalarField<T> {
    let len = grid.len();
    let mut coeffs = vec![Complex::new(T::zero(), T::zero()); len];
    for idx in 0..len {
        let [j0, j1] = grid.split(idx);
        let (m0, m1) = (grid.mode(j0), grid.mode(j1));
        let mx = m0.unsigned_abs().max(m1.unsigned_abs()) as usize;
        if grid.touches_nyquist(idx) || mx <= low || mx > high {
            continue;
        }
        // fill one representative of each ±ξ pair, then mirror
        let neg = grid.index_of_mode([-m0, -m1]);
        if neg < idx {
            continue;
        }
        let c = Complex::new(T::lit(rng.gen_range(-1.0..1.0)), T::lit(rng.gen_range(-1.0..1.0)));
        coeffs[idx] = c;
        coeffs[neg] = c.conj();
        if neg == idx {
            coeffs[idx] = Complex::new(c.re, T::zero());
        }
    }
    let spec = SpectralField::new(grid, coeffs).expect("length matches grid");
    inverse_transform(&spec)
}

/// Smallest observed `|Λ_a f|_{L²} / |f|_{H²}` over random fields with modes in `(low, high]`.
pub fn coercivity<T: Real>(a: &ScalarField<T>, samples: usize, low: usize, high: usize, seed: u64) -> T {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut c = T::infinity();
    for _ in 0..samples {
        let f = random_band_field(a.grid(), low, high, &mut rng);
        let num = lambda_a_apply(a, &f).l2_norm();
        let den = sobolev_norm(&f, T::lit(2.0));
        c = c.min(num / den);
    }
    c
}

/// Removes every mode with `|ξ|_∞ ≤ low`.
pub fn high_pass<T: Real>(f: &ScalarField<T>, low: usize) -> ScalarField<T> {
    let g = f.grid();
    let mut spec = forward_transform(f);
    for (idx, c) in spec.coeffs_mut().iter_mut().enumerate() {
        let [j0, j1] = g.split(idx);
        if g.mode(j0).unsigned_abs().max(g.mode(j1).unsigned_abs()) as usize <= low {
            *c = Complex::new(T::zero(), T::zero());
        }
    }
    inverse_transform(&spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{fourier_multiplier, laplacian, quantize};

    fn g1(n: usize) -> TorusGrid<f64> {
        TorusGrid::periodic(1, n).unwrap()
    }

    #[test]
    fn lambda_examples() {
        let g = g1(32);
        let cos = ScalarField::from_fn(&g, |x| x[0].cos());
        let flat = ScalarField::constant(&g, 0.4);
        assert!((&lambda_a_apply(&flat, &cos) - &cos).max_abs() < 1e-13);
        let a = ScalarField::from_fn(&g, |x| 0.3 * x[0].sin());
        let f = ScalarField::from_fn(&g, |x| (2.0 * x[0]).cos() + 0.5 * (3.0 * x[0]).sin());
        let ap = gradient(&a);
        let want = (&laplacian(&f) * &ap[0].map(|s| -1.0 / (1.0 + s * s))).map(|v| v);
        assert!((&lambda_a_apply(&a, &f) - &want).max_abs() < 1e-12);
        assert!(lambda_a_apply(&a, &ScalarField::constant(&g, 2.0)).max_abs() < 1e-13);
    }

    #[test]
    fn lambda_symbol_quantizes_to_operator() {
        let g = TorusGrid::<f64>::periodic(2, 16).unwrap();
        let a = ScalarField::from_fn(&g, |x| 0.2 * (x[0] + x[1]).cos());
        let f = ScalarField::from_fn(&g, |x| (2.0 * x[0] - x[1]).sin());
        let q = quantize(&lambda_symbol(&a), &f).unwrap();
        assert!((&q.real() - &lambda_a_apply(&a, &f)).max_abs() < 1e-12);
    }

    #[test]
    fn sigma_examples() {
        let g = g1(16);
        assert!((&sigma_weight(&ScalarField::constant(&g, 3.0)) - &ScalarField::constant(&g, 1.0)).max_abs() < 1e-15);
        let c = 0.8;
        let s = sigma_weight_with_slope(&[ScalarField::constant(&g, c)]);
        assert!((s.values()[3] - (1.0f64 + c * c).powf(-0.25)).abs() < 1e-15);
        let a = ScalarField::from_fn(&g, |x| 0.5 * x[0].cos());
        let s = sigma_weight(&a);
        assert!(s.min() > 0.0 && s.max() <= 1.0);
        let f = ScalarField::from_fn(&g, |x| x[0].sin());
        let back = &(&s * &f) * &s.map(|v| 1.0 / v);
        assert!((&back - &f).max_abs() < 1e-12);
    }

    #[test]
    fn p_a_flat_examples() {
        let g = TorusGrid::<f64>::periodic(2, 16).unwrap();
        let flat = ScalarField::constant(&g, 0.1);
        let cos = ScalarField::from_fn(&g, |x| x[0].cos());
        assert!((&p_a_apply(&flat, &cos) - &cos.scale(-1.0)).max_abs() < 1e-13);
        assert!(p_a_apply(&flat, &ScalarField::constant(&g, 1.3)).max_abs() < 1e-13);
    }

    #[test]
    fn sharp_product_examples() {
        let g = g1(16);
        let m = ScalarField::from_fn(&g, |x| 1.0 + 0.3 * x[0].cos());
        let dxi = Symbol::derivative(&g, 0);
        let mult = Symbol::function(&m);
        let p = sharp_product(&dxi, &mult, 1).unwrap();
        let dm = partial(&m, 0);
        for node in [0, 4, 9] {
            for mode in [1, 3, 13] {
                let xi = g.xi(mode);
                let want = Complex::new(dm.values()[node], xi[0] * m.values()[node]);
                assert!((p.eval(node, xi) - want).norm() < 1e-13);
            }
        }
        let p0 = sharp_product(&dxi, &mult, 0).unwrap();
        let xi = g.xi(2);
        assert!((p0.eval(5, xi) - Complex::new(0.0, xi[0] * m.values()[5])).norm() < 1e-14);

        let br = poisson_bracket(&dxi, &mult, 1).unwrap();
        assert!((br.eval(4, g.xi(3)) - Complex::new(dm.values()[4], 0.0)).norm() < 1e-13);

        let abs = Symbol::with_derivatives(&g, 1.0, 1, |_, xi| Complex::new(xi[0].abs(), 0.0), |_, xi, _| {
            Complex::new(xi[0].signum(), 0.0)
        });
        let br = poisson_bracket(&dxi, &abs, 1).unwrap();
        assert!(br.tabulate().iter().all(|c| c.norm() < 1e-14));
        assert!(sharp_product(&mult, &dxi, 3).is_ok());
        let no_deriv = Symbol::from_fn(&g, 0.0, |_, _| Complex::new(1.0, 0.0));
        assert!(matches!(sharp_product(&no_deriv, &mult, 1), Err(Error::MissingDerivative { .. })));
    }

    #[test]
    fn weighted_symbol_derivatives_are_consistent() {
        let g = TorusGrid::<f64>::periodic(2, 16).unwrap();
        let a = ScalarField::from_fn(&g, |x| 0.3 * (x[0] - 2.0 * x[1]).sin());
        let s = weighted_principal_symbol(&a);
        assert!(s.check_xi_derivatives(50, 3).is_ok());
        let pr = crate::dno::principal_symbol_of(&a);
        let sig = sigma_weight(&a);
        for node in [0, 37, 200] {
            let xi = g.xi(19);
            let want = sig.values()[node].powi(2) * pr.eval(node, xi).re;
            assert!((s.eval(node, xi).re - want).abs() < 1e-13);
        }
    }

    #[test]
    fn order_of_exact_multipliers() {
        let g = g1(128);
        let probe = OrderProbe::standard(&g, vec![4.0, 8.0, 16.0, 32.0]).unwrap();
        let d1 = measure_order(|f| Ok(partial(f, 0)), &probe).unwrap();
        assert!((d1.slope - 1.0).abs() < 0.1, "{}", d1.slope);
        let id = measure_order(|f| Ok(f.clone()), &probe).unwrap();
        assert!(id.slope.abs() < 0.05);
        let lap = measure_order(|f| fourier_multiplier(|xi| Complex::new(xi[0] * xi[0], 0.0), f), &probe).unwrap();
        assert!((lap.slope - 2.0).abs() < 0.1);
        assert!(matches!(
            measure_order(|f| Ok(f.scale(0.0)), &probe),
            Err(Error::DegenerateFit(_))
        ));
        assert!(OrderProbe::standard(&g, vec![4.0, 64.0]).is_err());
    }

    #[test]
    fn coercivity_is_positive() {
        let g = TorusGrid::<f64>::periodic(2, 16).unwrap();
        let a = ScalarField::from_fn(&g, |x| 0.3 * (x[0] + x[1]).cos());
        let c = coercivity(&a, 5, 2, 5, 11);
        assert!(c > 1e-3 && c.is_finite());
    }
}
