//! Dirichlet-Neumann operator of the strip: exact (elliptic solve) and
//! principal-symbol backends, the remainder, the factorization roots `η±`,
//! the approximate extension and the shape derivative.

use std::sync::Arc;

use num_complex::Complex;
use rayon::prelude::*;

use crate::elliptic::{BvpProblem, BvpSolver, SolveOptions};
use crate::error::{Error, Result};
use crate::evolution::{v_field, z_trace_from};
use crate::geometry::{build_coeff, CoeffField, DomainShape, StripField, StripSampling};
use crate::scalar::Real;
use crate::spectral::{divergence, forward_transform, gradient, quantize, strip_nyquist, ScalarField, Symbol};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DnoMode {
    Exact,
    Symbol,
}

impl std::str::FromStr for DnoMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(Self::Exact),
            "symbol" => Ok(Self::Symbol),
            other => Err(Error::Config(format!("unknown backend `{other}` (exact | symbol)"))),
        }
    }
}

/// `sqrt(ξᵀ M ξ)` for a symmetric positive 2×2 `M`, with analytic derivatives.
#[derive(Clone, Copy, Debug)]
struct QuadRoot<T> {
    m: [[T; 2]; 2],
}

impl<T: Real> QuadRoot<T> {
    fn mxi(&self, xi: [T; 2]) -> [T; 2] {
        [self.m[0][0] * xi[0] + self.m[0][1] * xi[1], self.m[1][0] * xi[0] + self.m[1][1] * xi[1]]
    }

    fn value(&self, xi: [T; 2]) -> T {
        let v = self.mxi(xi);
        (v[0] * xi[0] + v[1] * xi[1]).max(T::zero()).sqrt()
    }

    /// `∂_ξ^β` for `|β| ≤ 2`; zero at `ξ = 0`.
    fn derivative(&self, xi: [T; 2], beta: [usize; 2]) -> T {
        let g = self.value(xi);
        if g == T::zero() {
            return T::zero();
        }
        let v = self.mxi(xi);
        match beta {
            [0, 0] => g,
            [1, 0] => v[0] / g,
            [0, 1] => v[1] / g,
            _ => {
                let (i, j) = if beta == [2, 0] { (0, 0) } else if beta == [0, 2] { (1, 1) } else { (0, 1) };
                self.m[i][j] / g - v[i] * v[j] / (g * g * g)
            }
        }
    }
}

fn re<T: Real>(x: T) -> Complex<T> {
    Complex::new(x, T::zero())
}

/// `g_a(X, ξ) = sqrt((1+|∇a|²)|ξ|² − (ξ·∇a)²)`, order 1, with `ξ`-derivatives
/// to order 2 and value 0 at `ξ = 0`.
pub fn principal_symbol<T: Real>(shape: &DomainShape<T>) -> Symbol<T> {
    principal_symbol_of(shape.top())
}

pub(crate) fn principal_symbol_of<T: Real>(a: &ScalarField<T>) -> Symbol<T> {
    let roots = Arc::new(metric_roots(a));
    let r2 = roots.clone();
    Symbol::with_derivatives(
        a.grid(),
        T::one(),
        2,
        move |node, xi| re(roots[node].value(xi)),
        move |node, xi, beta| re(r2[node].derivative(xi, beta)),
    )
}

fn metric_roots<T: Real>(a: &ScalarField<T>) -> Vec<QuadRoot<T>> {
    let grad = gradient(a);
    let g1 = grad.get(1).map(|f| f.values().to_vec()).unwrap_or_else(|| vec![T::zero(); a.values().len()]);
    grad[0]
        .values()
        .iter()
        .zip(&g1)
        .map(|(&a0, &a1)| {
            let n2 = T::one() + a0 * a0 + a1 * a1;
            QuadRoot { m: [[n2 - a0 * a0, -a0 * a1], [-a0 * a1, n2 - a1 * a1]] }
        })
        .collect()
}

/// The DN operator `G(a, b)` for one fixed geometry.
#[derive(Clone, Debug)]
pub struct DnoBackend<T: Real> {
    mode: DnoMode,
    shape: DomainShape<T>,
    coeff: CoeffField<T>,
    opts: SolveOptions<T>,
    orientation: T,
    symbol: Symbol<T>,
}

/// Construction controls for [`DnoBackend`].
#[derive(Clone, Copy, Debug)]
pub struct DnoConfig<T> {
    pub solve: SolveOptions<T>,
    /// Sign applied to the top flux; `None` determines it by a positivity probe.
    pub orientation: Option<T>,
}

impl<T: Real> Default for DnoConfig<T> {
    fn default() -> Self {
        Self { solve: SolveOptions::default(), orientation: None }
    }
}

impl<T: Real> DnoBackend<T> {
    pub fn new(mode: DnoMode, shape: &DomainShape<T>, sampling: &StripSampling<T>) -> Result<Self> {
        Self::with_config(mode, shape, sampling, DnoConfig::default())
    }

    pub fn with_config(
        mode: DnoMode,
        shape: &DomainShape<T>,
        sampling: &StripSampling<T>,
        cfg: DnoConfig<T>,
    ) -> Result<Self> {
        let coeff = build_coeff(shape, sampling)?;
        let symbol = principal_symbol(shape);
        let mut backend =
            Self { mode, shape: shape.clone(), coeff, opts: cfg.solve, orientation: T::one(), symbol };
        match cfg.orientation {
            Some(s) => backend.orientation = s,
            None if mode == DnoMode::Exact => {
                let probe = ScalarField::from_fn(shape.grid(), |x| x[0].cos());
                let out = backend.apply(&probe)?;
                if out.dot(&probe) < T::zero() {
                    log::info!("DN top flux orientation flipped by positivity probe");
                    backend.orientation = -T::one();
                }
            }
            None => {}
        }
        Ok(backend)
    }

    pub fn mode(&self) -> DnoMode {
        self.mode
    }

    pub fn shape(&self) -> &DomainShape<T> {
        &self.shape
    }

    pub fn coeff(&self) -> &CoeffField<T> {
        &self.coeff
    }

    pub fn sampling(&self) -> &StripSampling<T> {
        self.coeff.sampling()
    }

    pub fn orientation(&self) -> T {
        self.orientation
    }

    pub fn solve_options(&self) -> SolveOptions<T> {
        self.opts
    }

    pub fn symbol(&self) -> &Symbol<T> {
        &self.symbol
    }

    /// Same backend for a new top surface (orientation carried over).
    pub fn rebuild(&self, shape: &DomainShape<T>) -> Result<Self> {
        Self::with_config(
            self.mode,
            shape,
            self.sampling(),
            DnoConfig { solve: self.opts, orientation: Some(self.orientation) },
        )
    }

    pub fn apply(&self, f: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.apply_with_guess(f, None).map(|(g, _)| g)
    }

    /// Applies `G`; in exact mode also returns the discrete harmonic extension,
    /// which can seed the next solve.
    pub fn apply_with_guess(
        &self,
        f: &ScalarField<T>,
        guess: Option<&StripField<T>>,
    ) -> Result<(ScalarField<T>, Option<StripField<T>>)> {
        if f.grid() != self.shape.grid() {
            return Err(Error::GridMismatch);
        }
        match self.mode {
            DnoMode::Symbol => {
                let q = quantize(&self.symbol, &f.without_mean())?;
                Ok((q.real().without_mean(), None))
            }
            DnoMode::Exact => {
                let (flux, ext) = self.extension_and_flux(f, guess)?;
                let out = strip_nyquist(&flux.scale(self.orientation)).without_mean();
                Ok((out, Some(ext)))
            }
        }
    }

    /// Discrete harmonic extension of `f` (zero bottom flux) and its top flux.
    fn extension_and_flux(
        &self,
        f: &ScalarField<T>,
        guess: Option<&StripField<T>>,
    ) -> Result<(ScalarField<T>, StripField<T>)> {
        let top = strip_nyquist(f).without_mean();
        let solver = BvpSolver::new(&self.coeff, self.opts)?;
        let sol = solver.solve(&BvpProblem { coeff: &self.coeff, h: None, f_top: &top, g_bottom: None }, guess)?;
        Ok((sol.top_flux, sol.u))
    }

    /// Harmonic extension on the strip with top trace `f` (mean included) and
    /// zero bottom conormal flux.
    pub fn extension(&self, f: &ScalarField<T>) -> Result<StripField<T>> {
        let solver = BvpSolver::new(&self.coeff, self.opts)?;
        let sol = solver.solve(&BvpProblem { coeff: &self.coeff, h: None, f_top: f, g_bottom: None }, None)?;
        Ok(sol.u)
    }
}

pub fn dn_apply<T: Real>(backend: &DnoBackend<T>, f: &ScalarField<T>) -> Result<ScalarField<T>> {
    backend.apply(f)
}

/// `R_a f = G(a, b) f − Op(g_a) f`; the backend must be exact.
pub fn remainder_apply<T: Real>(backend: &DnoBackend<T>, f: &ScalarField<T>) -> Result<ScalarField<T>> {
    if backend.mode() != DnoMode::Exact {
        return Err(Error::Invalid("remainder needs the exact backend".into()));
    }
    let g = backend.apply(f)?;
    let op = quantize(backend.symbol(), &f.without_mean())?.real().without_mean();
    Ok(&g - &op)
}

/// Roots `η±` at one level of the strip, with the measured ellipticity margin.
#[derive(Clone, Debug)]
pub struct EtaPair<T: Real> {
    pub plus: Symbol<T>,
    pub minus: Symbol<T>,
    /// `min Re η₊ / |ξ|` over nodes and nonzero lattice points.
    pub c_plus: T,
}

#[derive(Clone, Copy, Debug)]
struct EtaLocal<T> {
    root: QuadRoot<T>,
    p: [T; 2],
    inv_pd: T,
}

impl<T: Real> EtaLocal<T> {
    fn new(jac: T, p: [T; 2], pd: T) -> Self {
        let jp = jac * pd;
        let m = [[jp - p[0] * p[0], -p[0] * p[1]], [-p[0] * p[1], jp - p[1] * p[1]]];
        Self { root: QuadRoot { m }, p, inv_pd: T::one() / pd }
    }

    fn discriminant(&self, xi: [T; 2]) -> T {
        let v = self.root.mxi(xi);
        v[0] * xi[0] + v[1] * xi[1]
    }

    fn eval(&self, xi: [T; 2], sign: T) -> Complex<T> {
        let pxi = self.p[0] * xi[0] + self.p[1] * xi[1];
        Complex::new(sign * self.root.value(xi), -pxi) * self.inv_pd
    }

    fn derivative(&self, xi: [T; 2], beta: [usize; 2], sign: T) -> Complex<T> {
        let root = sign * self.root.derivative(xi, beta);
        let lin = match beta {
            [1, 0] => -self.p[0],
            [0, 1] => -self.p[1],
            _ => T::zero(),
        };
        Complex::new(root, lin) * self.inv_pd
    }
}

fn eta_locals<T: Real>(coeff: &CoeffField<T>, level: usize) -> Vec<EtaLocal<T>> {
    (0..coeff.grid().len())
        .map(|i| {
            let c = coeff.at(level, i);
            EtaLocal::new(c.jac, c.p, c.pd)
        })
        .collect()
}

/// `η±(X, ỹ_j, ξ) = (−i p̃·ξ ± sqrt(p̃_d ξ·P̃₁ξ − (p̃·ξ)²)) / p̃_d` at level `j`.
pub fn eta_symbols<T: Real>(coeff: &CoeffField<T>, level: usize) -> Result<EtaPair<T>> {
    let g = coeff.grid();
    let locals = eta_locals(coeff, level);
    let mut c_plus = T::infinity();
    for (node, loc) in locals.iter().enumerate() {
        for idx in 0..g.len() {
            let xi = g.xi(idx);
            let n2 = xi[0] * xi[0] + xi[1] * xi[1];
            if n2 == T::zero() {
                continue;
            }
            let disc = loc.discriminant(xi);
            if disc < T::zero() {
                return Err(Error::NegativeDiscriminant(disc.as_f64()));
            }
            let _ = node;
            c_plus = c_plus.min(loc.eval(xi, T::one()).re / n2.sqrt());
        }
    }
    let build = |sign: T| {
        let l1 = Arc::new(locals.clone());
        let l2 = l1.clone();
        Symbol::with_derivatives(
            g,
            T::one(),
            2,
            move |node, xi| l1[node].eval(xi, sign),
            move |node, xi, beta| l2[node].derivative(xi, beta, sign),
        )
    };
    Ok(EtaPair { plus: build(T::one()), minus: build(-T::one()), c_plus })
}

/// `f_app(X, ỹ) = Op(σ_app(·, ỹ, ·)) f` with
/// `σ_app = exp(−∫_ỹ^0 η₊ dy′)`, the integral by the trapezoid rule on the levels.
pub fn approx_extension<T: Real>(coeff: &CoeffField<T>, f: &ScalarField<T>) -> Result<StripField<T>> {
    let s = coeff.sampling();
    let g = s.grid();
    if f.grid() != g {
        return Err(Error::GridMismatch);
    }
    let n = g.len();
    let m = s.m();
    let half_dy = s.dy() * T::lit(0.5);
    let locals: Vec<Vec<EtaLocal<T>>> = (0..=m).map(|j| eta_locals(coeff, j)).collect();
    let spec = forward_transform(f);
    let active: Vec<([T; 2], Complex<T>, usize)> = (0..n)
        .filter(|&idx| !g.touches_nyquist(idx) && spec.coeffs()[idx].norm_sqr() > T::zero())
        .map(|idx| (g.xi(idx), spec.coeffs()[idx], idx))
        .collect();
    let nn = g.n();
    let roots: Vec<Complex<T>> = (0..nn)
        .map(|k| {
            let th = T::TAU() * T::from_usize_lossy(k) / T::from_usize_lossy(nn);
            Complex::new(th.cos(), th.sin())
        })
        .collect();
    let columns: Vec<Vec<T>> = (0..n)
        .into_par_iter()
        .map(|node| {
            let [i0, i1] = g.split(node);
            let mut col = vec![Complex::new(T::zero(), T::zero()); m + 1];
            for &(xi, c, idx) in &active {
                let [j0, j1] = g.split(idx);
                let m0 = g.mode(j0).rem_euclid(nn as i64) as usize;
                let m1 = g.mode(j1).rem_euclid(nn as i64) as usize;
                let wave = c * roots[(i0 * m0 + i1 * m1) % nn];
                let zero = xi[0] == T::zero() && xi[1] == T::zero();
                let mut integral = Complex::new(T::zero(), T::zero());
                let mut prev = if zero { integral } else { locals[m][node].eval(xi, T::one()) };
                col[m] = col[m] + wave;
                for j in (0..m).rev() {
                    let cur = if zero { integral } else { locals[j][node].eval(xi, T::one()) };
                    integral = integral + (prev + cur) * half_dy;
                    prev = cur;
                    col[j] = col[j] + wave * (-integral).exp();
                }
            }
            col.into_iter().map(|c| c.re).collect()
        })
        .collect();
    let mut values = vec![T::zero(); s.len()];
    for (node, col) in columns.iter().enumerate() {
        for (j, v) in col.iter().enumerate() {
            values[j * n + node] = *v;
        }
    }
    // the top level is `f` itself (empty integral); restore it exactly
    values[m * n..].copy_from_slice(f.values());
    StripField::new(s, values)
}

/// `d_ζ G(ζ)ψ · ζ̇ = −G(Z ζ̇) − ∇·(ζ̇ v)`, with `G = G(ζ)` taken from `backend`.
pub fn shape_derivative<T: Real>(
    backend: &DnoBackend<T>,
    psi: &ScalarField<T>,
    zeta_dot: &ScalarField<T>,
) -> Result<ScalarField<T>> {
    let zeta = backend.shape().top();
    let g_psi = backend.apply(psi)?;
    let z = z_trace_from(zeta, psi, &g_psi);
    let v = v_field(zeta, psi, &z);
    let gz = backend.apply(&(&z * zeta_dot))?;
    let flux: Vec<ScalarField<T>> = v.iter().map(|vi| vi * zeta_dot).collect();
    Ok(&(-&gz) - &divergence(&flux))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::TorusGrid;

    fn flat_backend(n: usize, m: usize) -> DnoBackend<f64> {
        let g = TorusGrid::periodic(1, n).unwrap();
        let s = StripSampling::new(&g, m).unwrap();
        DnoBackend::new(DnoMode::Exact, &DomainShape::flat(&g, 1.0).unwrap(), &s).unwrap()
    }

    #[test]
    fn flat_strip_oracle() {
        let b = flat_backend(32, 64);
        assert_eq!(b.orientation(), 1.0);
        for k in [1.0f64, 2.0] {
            let f = ScalarField::from_fn(b.shape().grid(), |x| (k * x[0]).cos());
            let out = b.apply(&f).unwrap();
            let want = f.scale(k * k.tanh());
            assert!((&out - &want).max_abs() < 1e-4 * k, "k={k}");
        }
        let c = ScalarField::constant(b.shape().grid(), 2.0);
        assert!(b.apply(&c).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn principal_symbol_examples() {
        let g = TorusGrid::<f64>::periodic(1, 16).unwrap();
        let a = ScalarField::from_fn(&g, |x| 0.3 * x[0].sin());
        let sym = principal_symbol_of(&a);
        for node in [0, 5, 11] {
            for xi in [-3.0, 1.0, 7.0] {
                assert!((sym.eval(node, [xi, 0.0]).re - f64::abs(xi)).abs() < 1e-14);
            }
        }
        assert_eq!(sym.eval(3, [0.0, 0.0]).re, 0.0);
        assert!(sym.check_xi_derivatives(40, 2).is_ok());

        // slope-one surface realized through the metric directly
        let root = QuadRoot { m: [[1.0 + 0.0, -0.0], [-0.0, 1.0 + 1.0]] };
        // ∇a = (1, 0): M = [[1, 0], [0, 2]]
        assert!((root.value([0.0, 1.0]) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn two_dimensional_symbol_derivatives() {
        let g = TorusGrid::<f64>::periodic(2, 16).unwrap();
        let a = ScalarField::from_fn(&g, |x| 0.3 * (x[0] + x[1]).sin());
        let sym = principal_symbol_of(&a);
        assert!(sym.check_xi_derivatives(60, 9).is_ok());
    }

    #[test]
    fn eta_examples() {
        let g = TorusGrid::<f64>::periodic(1, 16).unwrap();
        let s = StripSampling::new(&g, 8).unwrap();
        let c = build_coeff(&DomainShape::flat(&g, 1.0).unwrap(), &s).unwrap();
        let e = eta_symbols(&c, 4).unwrap();
        assert!((e.plus.eval(2, [3.0, 0.0]) - Complex::new(3.0, 0.0)).norm() < 1e-14);
        assert!((e.minus.eval(2, [-3.0, 0.0]) - Complex::new(-3.0, 0.0)).norm() < 1e-14);
        assert!((e.c_plus - 1.0).abs() < 1e-14);

        let raised = DomainShape::new(ScalarField::constant(&g, 1.0), ScalarField::constant(&g, -1.0), 0.5).unwrap();
        let c = build_coeff(&raised, &s).unwrap();
        let e = eta_symbols(&c, 0).unwrap();
        assert!((e.plus.eval(0, [2.0, 0.0]).re - 4.0).abs() < 1e-14);

        let a = ScalarField::from_fn(&g, |x| 0.2 * x[0].cos());
        let b = ScalarField::from_fn(&g, |x| -1.0 + 0.1 * x[0].sin());
        let c = build_coeff(&DomainShape::new(a, b, 0.3).unwrap(), &s).unwrap();
        let e = eta_symbols(&c, 3).unwrap();
        for node in 0..16 {
            let cc = c.at(3, node);
            let xi = [5.0, 0.0];
            let sum = e.plus.eval(node, xi) + e.minus.eval(node, xi);
            let want = Complex::new(0.0, -2.0 * cc.p[0] * xi[0] / cc.pd);
            assert!((sum - want).norm() < 1e-13);
        }
        assert!(e.c_plus > 0.0);
        assert!(e.plus.check_xi_derivatives(30, 4).is_ok());
    }

    #[test]
    fn approx_extension_examples() {
        let g = TorusGrid::<f64>::periodic(1, 16).unwrap();
        let s = StripSampling::new(&g, 16).unwrap();
        let c = build_coeff(&DomainShape::flat(&g, 1.0).unwrap(), &s).unwrap();
        let f = ScalarField::from_fn(&g, |x| (2.0 * x[0]).cos());
        let ext = approx_extension(&c, &f).unwrap();
        let want = StripField::from_fn(&s, |x, y| (2.0 * x[0]).cos() * (2.0 * y).exp());
        let err = ext.values().iter().zip(want.values()).fold(0.0f64, |e, (a, b)| e.max((a - b).abs()));
        assert!(err < 1e-13);
        assert_eq!(ext.top().values(), f.values());
        let k = ScalarField::constant(&g, 1.5);
        let ext = approx_extension(&c, &k).unwrap();
        assert!(ext.values().iter().all(|v| (v - 1.5).abs() < 1e-14));
    }

    #[test]
    fn shape_derivative_trivial_cases() {
        let b = flat_backend(16, 16);
        let g = b.shape().grid().clone();
        let psi = ScalarField::from_fn(&g, |x| x[0].cos());
        let zero = ScalarField::zeros(&g);
        assert!(shape_derivative(&b, &psi, &zero).unwrap().max_abs() < 1e-14);
        let c = ScalarField::constant(&g, 0.7);
        let zd = ScalarField::from_fn(&g, |x| x[0].sin());
        assert!(shape_derivative(&b, &c, &zd).unwrap().max_abs() < 1e-10);
    }
}
