//! Flattening of the fluid layer `{b < y < a}` onto the strip `grid × [-1, 0]`
//! and the divergence-form coefficient matrix of the transported Laplacian.
//!
//! With `s(X, ỹ) = -b ỹ + (1 + ỹ) a` and `J = a - b`, the matrix is
//!
//! ```text
//!       ⎡ J·I       -∇s        ⎤
//!   P̃ = ⎢                      ⎥
//!       ⎣ -∇sᵀ   (1+|∇s|²)/J   ⎦
//! ```
//!
//! and is stored compactly as `(J, p = -∇s, p_d)`.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{gradient, ScalarField, TorusGrid};

/// Top surface `a`, bottom `b` and separation constant `h0`.
#[derive(Clone, Debug)]
pub struct DomainShape<T: Real> {
    a: ScalarField<T>,
    b: ScalarField<T>,
    h0: T,
}

impl<T: Real> DomainShape<T> {
    /// Fails unless `min(-b, a - b) >= h0 > 0` at every node.
    pub fn new(a: ScalarField<T>, b: ScalarField<T>, h0: T) -> Result<Self> {
        if a.grid() != b.grid() {
            return Err(Error::GridMismatch);
        }
        if !(h0 > T::zero() && h0.is_finite()) {
            return Err(Error::Inadmissible(format!("separation constant {h0} must be positive")));
        }
        let sep = separation(&a, &b);
        if sep < h0 {
            return Err(Error::Inadmissible(format!("min(-b, a-b) = {sep} is below h0 = {h0}")));
        }
        Ok(Self { a, b, h0 })
    }

    /// `a ≡ 0`, `b ≡ -depth`, `h0 = depth / 2`.
    pub fn flat(grid: &TorusGrid<T>, depth: T) -> Result<Self> {
        Self::new(ScalarField::zeros(grid), ScalarField::constant(grid, -depth), depth * T::lit(0.5))
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        self.a.grid()
    }

    pub fn top(&self) -> &ScalarField<T> {
        &self.a
    }

    pub fn bottom(&self) -> &ScalarField<T> {
        &self.b
    }

    pub fn h0(&self) -> T {
        self.h0
    }

    /// Same bottom and `h0`, new top surface.
    pub fn with_top(&self, a: ScalarField<T>) -> Result<Self> {
        Self::new(a, self.b.clone(), self.h0)
    }
}

/// `min over nodes of min(-b, a - b)`.
pub fn separation<T: Real>(a: &ScalarField<T>, b: &ScalarField<T>) -> T {
    a.values().iter().zip(b.values()).fold(T::infinity(), |m, (&a, &b)| m.min((-b).min(a - b)))
}

/// Uniform vertical levels `ỹ_j = -1 + j/M`, `j = 0..=M`.
#[derive(Clone, Debug, PartialEq)]
pub struct StripSampling<T: Real> {
    grid: TorusGrid<T>,
    m: usize,
}

impl<T: Real> StripSampling<T> {
    pub fn new(grid: &TorusGrid<T>, m: usize) -> Result<Self> {
        if m < 8 {
            return Err(Error::InvalidGrid(format!("vertical count M = {m} must be at least 8")));
        }
        Ok(Self { grid: grid.clone(), m })
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        &self.grid
    }

    /// Number of vertical intervals `M`; there are `M + 1` levels.
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn levels(&self) -> usize {
        self.m + 1
    }

    pub fn dy(&self) -> T {
        T::one() / T::from_usize_lossy(self.m)
    }

    pub fn y(&self, j: usize) -> T {
        T::from_usize_lossy(j) * self.dy() - T::one()
    }

    /// `ỹ_{j+1/2}`.
    pub fn y_half(&self, j: usize) -> T {
        (self.y(j) + self.y(j + 1)) * T::lit(0.5)
    }

    /// Total number of strip samples, `(M + 1) n^d`.
    pub fn len(&self) -> usize {
        self.levels() * self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Values on the strip, stored level-major: `values[j * N + node]`.
#[derive(Clone, Debug)]
pub struct StripField<T: Real> {
    sampling: StripSampling<T>,
    values: Vec<T>,
}

impl<T: Real> StripField<T> {
    pub fn new(sampling: &StripSampling<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != sampling.len() {
            return Err(Error::SizeMismatch { expected: sampling.len(), got: values.len() });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("strip value {i}")));
        }
        Ok(Self { sampling: sampling.clone(), values })
    }

    pub(crate) fn from_vec_unchecked(sampling: &StripSampling<T>, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), sampling.len());
        Self { sampling: sampling.clone(), values }
    }

    pub fn zeros(sampling: &StripSampling<T>) -> Self {
        Self { sampling: sampling.clone(), values: vec![T::zero(); sampling.len()] }
    }

    /// Samples `f(x, ỹ)`.
    pub fn from_fn(sampling: &StripSampling<T>, f: impl Fn([T; 2], T) -> T) -> Self {
        let g = sampling.grid();
        let mut values = Vec::with_capacity(sampling.len());
        for j in 0..sampling.levels() {
            let y = sampling.y(j);
            values.extend((0..g.len()).map(|i| f(g.node(i), y)));
        }
        Self { sampling: sampling.clone(), values }
    }

    pub fn sampling(&self) -> &StripSampling<T> {
        &self.sampling
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

    pub fn level_slice(&self, j: usize) -> &[T] {
        let n = self.sampling.grid.len();
        &self.values[j * n..(j + 1) * n]
    }

    pub fn level(&self, j: usize) -> ScalarField<T> {
        ScalarField::from_vec_unchecked(&self.sampling.grid, self.level_slice(j).to_vec())
    }

    pub fn top(&self) -> ScalarField<T> {
        self.level(self.sampling.m)
    }

    pub fn bottom(&self) -> ScalarField<T> {
        self.level(0)
    }

    pub fn max_abs(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }
}

/// The function `s` of the strip map.
pub fn strip_map<T: Real>(shape: &DomainShape<T>, sampling: &StripSampling<T>) -> Result<StripField<T>> {
    if shape.grid() != sampling.grid() {
        return Err(Error::GridMismatch);
    }
    let (a, b) = (shape.a.values(), shape.b.values());
    let mut values = Vec::with_capacity(sampling.len());
    for j in 0..sampling.levels() {
        let y = sampling.y(j);
        values.extend(a.iter().zip(b).map(|(&a, &b)| -b * y + (T::one() + y) * a));
    }
    // exact boundary identities
    let n = a.len();
    values[..n].copy_from_slice(b);
    values[sampling.m * n..].copy_from_slice(a);
    Ok(StripField::from_vec_unchecked(sampling, values))
}

/// Coefficient matrix at the strip nodes and at the half levels `ỹ_{j+1/2}`.
#[derive(Clone, Debug)]
pub struct CoeffField<T: Real> {
    sampling: StripSampling<T>,
    jac: Vec<T>,
    grad_a: Vec<[T; 2]>,
    grad_b: Vec<[T; 2]>,
    p: Vec<[T; 2]>,
    pd: Vec<T>,
    p_half: Vec<[T; 2]>,
    pd_half: Vec<T>,
    ptilde: T,
    analytic_bound: T,
}

/// One coefficient matrix in compact form.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalCoeff<T> {
    /// `J = a - b`; the horizontal block is `J·I`.
    pub jac: T,
    /// Off-diagonal column `-∇s`.
    pub p: [T; 2],
    /// Lower-right entry `(1 + |∇s|²)/J`.
    pub pd: T,
}

impl<T: Real> LocalCoeff<T> {
    fn new(jac: T, grad_s: [T; 2]) -> Self {
        let n2 = grad_s[0] * grad_s[0] + grad_s[1] * grad_s[1];
        Self { jac, p: [-grad_s[0], -grad_s[1]], pd: (T::one() + n2) / jac }
    }

    /// Dense `(d+1) × (d+1)` matrix, padded to 3×3 (unused rows are zero).
    pub fn matrix(&self, dim: usize) -> [[T; 3]; 3] {
        let z = T::zero();
        let mut m = [[z; 3]; 3];
        for i in 0..dim {
            m[i][i] = self.jac;
            m[i][dim] = self.p[i];
            m[dim][i] = self.p[i];
        }
        m[dim][dim] = self.pd;
        m
    }

    /// Smallest eigenvalue: that of the 2×2 block `[[J, |p|], [|p|, p_d]]`,
    /// which never exceeds the extra eigenvalue `J` present when `d = 2`.
    pub fn min_eigenvalue(&self) -> T {
        let half = T::lit(0.5);
        let pn2 = self.p[0] * self.p[0] + self.p[1] * self.p[1];
        let mean = (self.jac + self.pd) * half;
        let dev = (self.jac - self.pd) * half;
        let disc = (dev * dev + pn2).sqrt();
        // stable product form: λ_min = det / λ_max
        let lmax = mean + disc;
        (self.jac * self.pd - pn2) / lmax
    }

    /// `P̃ θ · θ`.
    pub fn quadratic_form(&self, dim: usize, theta: [T; 3]) -> T {
        let mut acc = self.pd * theta[dim] * theta[dim];
        for i in 0..dim {
            acc = acc + self.jac * theta[i] * theta[i] + (self.p[i] + self.p[i]) * theta[i] * theta[dim];
        }
        acc
    }
}

/// Assembles the coefficients (derivatives of `a`, `b` are spectral) and
/// certifies ellipticity by the minimum eigenvalue over nodes and half levels.
pub fn build_coeff<T: Real>(shape: &DomainShape<T>, sampling: &StripSampling<T>) -> Result<CoeffField<T>> {
    if shape.grid() != sampling.grid() {
        return Err(Error::GridMismatch);
    }
    let g = sampling.grid();
    let n = g.len();
    let pack = |v: Vec<ScalarField<T>>| -> Vec<[T; 2]> {
        (0..n).map(|i| [v[0].values()[i], if v.len() > 1 { v[1].values()[i] } else { T::zero() }]).collect()
    };
    let grad_a = pack(gradient(&shape.a));
    let grad_b = pack(gradient(&shape.b));
    let jac: Vec<T> = shape.a.values().iter().zip(shape.b.values()).map(|(&a, &b)| a - b).collect();

    let level = |y: T| -> (Vec<[T; 2]>, Vec<T>) {
        let mut p = Vec::with_capacity(n);
        let mut pd = Vec::with_capacity(n);
        for i in 0..n {
            let gs = grad_s(grad_a[i], grad_b[i], y);
            let c = LocalCoeff::new(jac[i], gs);
            p.push(c.p);
            pd.push(c.pd);
        }
        (p, pd)
    };
    let mut p = Vec::with_capacity(sampling.len());
    let mut pd = Vec::with_capacity(sampling.len());
    for j in 0..sampling.levels() {
        let (lp, lpd) = level(sampling.y(j));
        p.extend(lp);
        pd.extend(lpd);
    }
    let mut p_half = Vec::with_capacity(sampling.m * n);
    let mut pd_half = Vec::with_capacity(sampling.m * n);
    for j in 0..sampling.m {
        let (lp, lpd) = level(sampling.y_half(j));
        p_half.extend(lp);
        pd_half.extend(lpd);
    }

    let mut ptilde = T::infinity();
    for k in 0..p.len() {
        let c = LocalCoeff { jac: jac[k % n], p: p[k], pd: pd[k] };
        ptilde = ptilde.min(c.min_eigenvalue());
    }
    for k in 0..p_half.len() {
        let c = LocalCoeff { jac: jac[k % n], p: p_half[k], pd: pd_half[k] };
        ptilde = ptilde.min(c.min_eigenvalue());
    }
    if !(ptilde > T::zero()) {
        return Err(Error::NotElliptic(ptilde.as_f64()));
    }

    let sup_jac = jac.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let sup_grad = grad_a
        .iter()
        .zip(&grad_b)
        .fold(T::zero(), |m, (ga, gb)| m.max(ga[0] * ga[0] + ga[1] * ga[1] + gb[0] * gb[0] + gb[1] * gb[1]));
    let analytic_bound = shape.h0 * shape.h0 / (sup_jac * (T::one() + sup_grad));
    log::debug!("certified ellipticity {ptilde:e}, analytic lower bound {analytic_bound:e}");

    Ok(CoeffField { sampling: sampling.clone(), jac, grad_a, grad_b, p, pd, p_half, pd_half, ptilde, analytic_bound })
}

/// `∇s = -∇b ỹ + (1 + ỹ) ∇a`.
fn grad_s<T: Real>(ga: [T; 2], gb: [T; 2], y: T) -> [T; 2] {
    let w = T::one() + y;
    [-gb[0] * y + w * ga[0], -gb[1] * y + w * ga[1]]
}

impl<T: Real> CoeffField<T> {
    pub fn sampling(&self) -> &StripSampling<T> {
        &self.sampling
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        self.sampling.grid()
    }

    /// Certified ellipticity constant: the minimum eigenvalue over the strip.
    pub fn ptilde(&self) -> T {
        self.ptilde
    }

    /// Reference value `h0² / (‖a-b‖∞ (1 + ‖(∇a, ∇b)‖²∞))`.
    pub fn analytic_bound(&self) -> T {
        self.analytic_bound
    }

    pub fn jac(&self) -> &[T] {
        &self.jac
    }

    pub fn grad_top(&self) -> &[[T; 2]] {
        &self.grad_a
    }

    pub fn grad_bottom(&self) -> &[[T; 2]] {
        &self.grad_b
    }

    /// Coefficients at level `j`, node `i`.
    pub fn at(&self, j: usize, i: usize) -> LocalCoeff<T> {
        let n = self.grid().len();
        LocalCoeff { jac: self.jac[i], p: self.p[j * n + i], pd: self.pd[j * n + i] }
    }

    /// Coefficients at half level `j + 1/2`, node `i`.
    pub fn at_half(&self, j: usize, i: usize) -> LocalCoeff<T> {
        let n = self.grid().len();
        LocalCoeff { jac: self.jac[i], p: self.p_half[j * n + i], pd: self.pd_half[j * n + i] }
    }

    /// `∇s` at level `j`, node `i`.
    pub fn grad_s(&self, j: usize, i: usize) -> [T; 2] {
        let n = self.grid().len();
        let p = self.p[j * n + i];
        [-p[0], -p[1]]
    }

    pub(crate) fn half_slices(&self, j: usize) -> (&[[T; 2]], &[T]) {
        let n = self.grid().len();
        (&self.p_half[j * n..(j + 1) * n], &self.pd_half[j * n..(j + 1) * n])
    }

    /// Mean of `J` and of `p_d` over the strip, used by the flat preconditioner.
    pub fn means(&self) -> (T, T) {
        let mj = self.jac.iter().copied().sum::<T>() / T::from_usize_lossy(self.jac.len());
        let mpd = self.pd_half.iter().copied().sum::<T>() / T::from_usize_lossy(self.pd_half.len());
        (mj, mpd)
    }
}
