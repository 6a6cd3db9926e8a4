//! Divergence-form elliptic problems on the strip:
//! `-∇·(P̃∇u) = h`, `u = f` on top, `e_y·P̃∇u = g` on the bottom.
//!
//! Discretization: a box scheme. On each half level the horizontal gradient is
//! the spectral gradient of the two-level average and the vertical derivative
//! is the one-interval difference; the flux `q = P̃ (∇ū, δu)` is evaluated there
//! and distributed back to both levels. The resulting matrix is the Galerkin
//! matrix of a symmetric positive form, so it is symmetric by construction.
//! Rows are scaled by the inverse horizontal cell volume.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CoeffField, StripField, StripSampling};
use crate::scalar::Real;
use crate::spectral::{ScalarField, TorusGrid};

/// Spectral gradient / divergence on one horizontal level, on raw slices.
#[derive(Clone, Debug)]
pub(crate) struct Horizontal<T: Real> {
    grid: TorusGrid<T>,
    k: [Vec<T>; 2],
    neg: Vec<usize>,
    inv_n: T,
}

impl<T: Real> Horizontal<T> {
    pub(crate) fn new(grid: &TorusGrid<T>) -> Self {
        let n = grid.len();
        let k0 = (0..n).map(|i| grid.derivative_xi(i)[0]).collect();
        let k1 = (0..n).map(|i| grid.derivative_xi(i)[1]).collect();
        let neg = (0..n)
            .map(|i| {
                let [j0, j1] = grid.split(i);
                grid.index_of_mode([-grid.mode(j0), -grid.mode(j1)])
            })
            .collect();
        Self { grid: grid.clone(), k: [k0, k1], neg, inv_n: T::one() / T::from_usize_lossy(n) }
    }

    pub(crate) fn dim(&self) -> usize {
        self.grid.dim()
    }

    fn to_complex(v: &[T]) -> Vec<Complex<T>> {
        v.iter().map(|&x| Complex::new(x, T::zero())).collect()
    }

    /// Gradient components (the second is empty when `d = 1`).
    pub(crate) fn grad(&self, v: &[T]) -> [Vec<T>; 2] {
        let mut s = Self::to_complex(v);
        self.grid.fft_forward(&mut s);
        let inv = self.inv_n;
        if self.dim() == 1 {
            for (c, &k) in s.iter_mut().zip(&self.k[0]) {
                *c = Complex::new(-c.im * k, c.re * k);
            }
            self.grid.fft_inverse(&mut s);
            return [s.iter().map(|c| c.re * inv).collect(), Vec::new()];
        }
        // both components are real: pack as g0 + i g1 in one inverse transform
        for (idx, c) in s.iter_mut().enumerate() {
            let d0 = Complex::new(-c.im * self.k[0][idx], c.re * self.k[0][idx]);
            let d1 = Complex::new(-c.im * self.k[1][idx], c.re * self.k[1][idx]);
            *c = d0 + Complex::new(-d1.im, d1.re);
        }
        self.grid.fft_inverse(&mut s);
        [s.iter().map(|c| c.re * inv).collect(), s.iter().map(|c| c.im * inv).collect()]
    }

    /// Divergence of `(q0, q1)` (`q1` ignored when `d = 1`).
    pub(crate) fn div(&self, q0: &[T], q1: &[T]) -> Vec<T> {
        let inv = self.inv_n;
        if self.dim() == 1 {
            let mut s = Self::to_complex(q0);
            self.grid.fft_forward(&mut s);
            for (c, &k) in s.iter_mut().zip(&self.k[0]) {
                *c = Complex::new(-c.im * k, c.re * k);
            }
            self.grid.fft_inverse(&mut s);
            return s.iter().map(|c| c.re * inv).collect();
        }
        let mut z: Vec<Complex<T>> = q0.iter().zip(q1).map(|(&a, &b)| Complex::new(a, b)).collect();
        self.grid.fft_forward(&mut z);
        let half = T::lit(0.5);
        let mut out = vec![Complex::new(T::zero(), T::zero()); z.len()];
        for (idx, o) in out.iter_mut().enumerate() {
            let zc = z[self.neg[idx]].conj();
            let a = (z[idx] + zc) * half;
            let b = (z[idx] - zc) * half;
            let b = Complex::new(b.im, -b.re);
            let (k0, k1) = (self.k[0][idx], self.k[1][idx]);
            let s = a * k0 + b * k1;
            *o = Complex::new(-s.im, s.re);
        }
        self.grid.fft_inverse(&mut out);
        out.iter().map(|c| c.re * inv).collect()
    }
}

/// The assembled box-scheme operator for one coefficient field.
#[derive(Clone, Debug)]
pub struct BoxOperator<'a, T: Real> {
    coeff: &'a CoeffField<T>,
    hz: Horizontal<T>,
}

impl<'a, T: Real> BoxOperator<'a, T> {
    pub fn new(coeff: &'a CoeffField<T>) -> Self {
        Self { coeff, hz: Horizontal::new(coeff.grid()) }
    }

    pub fn sampling(&self) -> &StripSampling<T> {
        self.coeff.sampling()
    }

    /// Contributions of half level `j + 1/2` to rows `j` and `j + 1`.
    fn half_level(&self, j: usize, lower: &[T], upper: &[T]) -> (Vec<T>, Vec<T>) {
        let n = lower.len();
        let dy = self.sampling().dy();
        let inv_dy = T::one() / dy;
        let half = T::lit(0.5);
        let avg: Vec<T> = lower.iter().zip(upper).map(|(&a, &b)| (a + b) * half).collect();
        let [g0, g1] = self.hz.grad(&avg);
        let (p, pd) = self.coeff.half_slices(j);
        let jac = self.coeff.jac();
        let dim = self.hz.dim();
        let mut q0 = vec![T::zero(); n];
        let mut q1 = vec![T::zero(); if dim == 2 { n } else { 0 }];
        let mut qy = vec![T::zero(); n];
        for i in 0..n {
            let dv = (upper[i] - lower[i]) * inv_dy;
            let gy1 = if dim == 2 { g1[i] } else { T::zero() };
            q0[i] = jac[i] * g0[i] + p[i][0] * dv;
            if dim == 2 {
                q1[i] = jac[i] * gy1 + p[i][1] * dv;
            }
            qy[i] = p[i][0] * g0[i] + p[i][1] * gy1 + pd[i] * dv;
        }
        let dq = self.hz.div(&q0, &q1);
        let lo = (0..n).map(|i| -half * dy * dq[i] - qy[i]).collect();
        let hi = (0..n).map(|i| -half * dy * dq[i] + qy[i]).collect();
        (lo, hi)
    }

    /// Applies the operator to all `M + 1` levels (level-major layout).
    pub fn apply_full(&self, u: &[T]) -> Vec<T> {
        let s = self.sampling();
        let n = s.grid().len();
        assert_eq!(u.len(), s.len(), "strip vector has wrong length");
        let parts: Vec<(Vec<T>, Vec<T>)> = (0..s.m())
            .into_par_iter()
            .map(|j| self.half_level(j, &u[j * n..(j + 1) * n], &u[(j + 1) * n..(j + 2) * n]))
            .collect();
        let mut out = vec![T::zero(); u.len()];
        for (j, (lo, hi)) in parts.iter().enumerate() {
            for i in 0..n {
                out[j * n + i] = out[j * n + i] + lo[i];
                out[(j + 1) * n + i] = out[(j + 1) * n + i] + hi[i];
            }
        }
        out
    }

    /// Operator restricted to levels `0..M` with zero data on the top level.
    pub fn apply_interior(&self, u: &[T]) -> Vec<T> {
        let s = self.sampling();
        let n = s.grid().len();
        assert_eq!(u.len(), s.m() * n, "interior vector has wrong length");
        let mut full = u.to_vec();
        full.resize(s.len(), T::zero());
        let mut out = self.apply_full(&full);
        out.truncate(s.m() * n);
        out
    }

    /// Row `M` of the operator applied to `u`, using only the top half level.
    pub fn top_row(&self, u: &[T]) -> Vec<T> {
        let s = self.sampling();
        let n = s.grid().len();
        let m = s.m();
        self.half_level(m - 1, &u[(m - 1) * n..m * n], &u[m * n..(m + 1) * n]).1
    }

    /// `Σ_rows a·b` weighted by the cell volume (the form the operator is symmetric in).
    pub fn inner(&self, a: &[T], b: &[T]) -> T {
        let s: T = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
        s * self.sampling().grid().cell_volume()
    }
}

/// Flat-coefficient preconditioner: exact inverse of the box operator with
/// `J` and `p_d` replaced by their means and `p` by zero, mode by mode.
#[derive(Clone, Debug)]
struct FlatPreconditioner<T: Real> {
    grid: TorusGrid<T>,
    m: usize,
    off: Vec<T>,
    inv_denom: Vec<T>,
    cprime: Vec<T>,
}

impl<T: Real> FlatPreconditioner<T> {
    fn new(coeff: &CoeffField<T>) -> Self {
        let s = coeff.sampling();
        let g = s.grid().clone();
        let (mj, mpd) = coeff.means();
        let dy = s.dy();
        let m = s.m();
        let n = g.len();
        let mut off = Vec::with_capacity(n);
        let mut inv_denom = vec![T::zero(); n * m];
        let mut cprime = vec![T::zero(); n * m];
        for idx in 0..n {
            let k = g.derivative_xi(idx);
            let k2 = k[0] * k[0] + k[1] * k[1];
            let alpha = dy * mj * k2 / T::lit(4.0);
            let beta = mpd / dy;
            let e = alpha - beta;
            off.push(e);
            let mut prev = T::zero();
            for j in 0..m {
                let d = if j == 0 { alpha + beta } else { (alpha + beta) * T::lit(2.0) };
                let denom = if j == 0 { d } else { d - e * prev };
                let inv = T::one() / denom;
                inv_denom[idx * m + j] = inv;
                prev = e * inv;
                cprime[idx * m + j] = prev;
            }
        }
        Self { grid: g, m, off, inv_denom, cprime }
    }

    fn apply(&self, r: &[T]) -> Vec<T> {
        let n = self.grid.len();
        let m = self.m;
        let spectra: Vec<Vec<Complex<T>>> = r
            .par_chunks(n)
            .map(|lvl| {
                let mut s: Vec<Complex<T>> = lvl.iter().map(|&x| Complex::new(x, T::zero())).collect();
                self.grid.fft_forward(&mut s);
                s
            })
            .collect();
        let solved: Vec<Vec<Complex<T>>> = (0..n)
            .into_par_iter()
            .map(|idx| {
                let e = self.off[idx];
                let inv = &self.inv_denom[idx * m..(idx + 1) * m];
                let cp = &self.cprime[idx * m..(idx + 1) * m];
                let mut y = vec![Complex::new(T::zero(), T::zero()); m];
                let mut prev = Complex::new(T::zero(), T::zero());
                for j in 0..m {
                    prev = (spectra[j][idx] - prev * e) * inv[j];
                    y[j] = prev;
                }
                for j in (0..m - 1).rev() {
                    y[j] = y[j] - y[j + 1] * cp[j];
                }
                y
            })
            .collect();
        let inv_n = T::one() / T::from_usize_lossy(n);
        let levels: Vec<Vec<T>> = (0..m)
            .into_par_iter()
            .map(|j| {
                let mut s: Vec<Complex<T>> = (0..n).map(|idx| solved[idx][j]).collect();
                self.grid.fft_inverse(&mut s);
                s.iter().map(|c| c.re * inv_n).collect()
            })
            .collect();
        levels.concat()
    }
}

/// Solver controls.
#[derive(Clone, Copy, Debug)]
pub struct SolveOptions<T> {
    /// Relative residual target in the 2-norm.
    pub tol: T,
    /// Iteration cap; `None` means `10 · N · M`.
    pub max_iter: Option<usize>,
    /// Largest interior system eligible for the dense fallback.
    pub direct_limit: usize,
    /// Skip CG and factor the dense interior matrix.
    pub force_direct: bool,
}

impl<T: Real> Default for SolveOptions<T> {
    fn default() -> Self {
        Self { tol: T::lit(1e-10), max_iter: None, direct_limit: 4096, force_direct: false }
    }
}

/// Data of one boundary-value problem on the strip.
#[derive(Clone, Copy, Debug)]
pub struct BvpProblem<'a, T: Real> {
    pub coeff: &'a CoeffField<T>,
    /// Right-hand side; `None` means zero.
    pub h: Option<&'a StripField<T>>,
    /// Dirichlet data at `ỹ = 0`.
    pub f_top: &'a ScalarField<T>,
    /// Conormal data `e_y·P̃∇u` at `ỹ = -1`; `None` means zero.
    pub g_bottom: Option<&'a ScalarField<T>>,
}

#[derive(Clone, Debug)]
pub struct BvpSolution<T: Real> {
    pub u: StripField<T>,
    /// Relative algebraic residual of the interior system.
    pub residual: T,
    pub iterations: usize,
    /// Upward conormal flux `e_y·P̃∇u` on the top face, read off the discrete
    /// equations of the top row.
    pub top_flux: ScalarField<T>,
    pub direct: bool,
}

/// Reusable solver for one coefficient field.
pub struct BvpSolver<'a, T: Real> {
    op: BoxOperator<'a, T>,
    pre: FlatPreconditioner<T>,
    opts: SolveOptions<T>,
}

impl<'a, T: Real> BvpSolver<'a, T> {
    pub fn new(coeff: &'a CoeffField<T>, opts: SolveOptions<T>) -> Result<Self> {
        if !(opts.tol > T::zero() && opts.tol <= T::lit(1e-6)) {
            return Err(Error::Invalid(format!("tolerance {} outside (0, 1e-6]", opts.tol)));
        }
        if !(coeff.ptilde() > T::zero()) {
            return Err(Error::NotElliptic(coeff.ptilde().as_f64()));
        }
        Ok(Self { op: BoxOperator::new(coeff), pre: FlatPreconditioner::new(coeff), opts })
    }

    pub fn operator(&self) -> &BoxOperator<'a, T> {
        &self.op
    }

    pub fn solve(&self, problem: &BvpProblem<'_, T>, guess: Option<&StripField<T>>) -> Result<BvpSolution<T>> {
        let s = self.op.sampling();
        if problem.coeff.sampling() != s || problem.f_top.grid() != s.grid() {
            return Err(Error::GridMismatch);
        }
        let n = s.grid().len();
        let m = s.m();
        let dy = s.dy();
        let half = T::lit(0.5);

        // interior right-hand side: trapezoid-weighted h, bottom data, lifted top values
        let mut rhs = vec![T::zero(); m * n];
        if let Some(h) = problem.h {
            if h.sampling() != s {
                return Err(Error::GridMismatch);
            }
            for j in 0..m {
                let w = if j == 0 { dy * half } else { dy };
                for i in 0..n {
                    rhs[j * n + i] = w * h.values()[j * n + i];
                }
            }
        }
        if let Some(g) = problem.g_bottom {
            if g.grid() != s.grid() {
                return Err(Error::GridMismatch);
            }
            for i in 0..n {
                rhs[i] = rhs[i] - g.values()[i];
            }
        }
        let mut lift = vec![T::zero(); s.len()];
        lift[m * n..].copy_from_slice(problem.f_top.values());
        let lifted = self.op.apply_full(&lift);
        for k in 0..m * n {
            rhs[k] = rhs[k] - lifted[k];
        }

        let x0: Vec<T> = match guess {
            Some(gs) if gs.sampling() == s => gs.values()[..m * n].to_vec(),
            _ => vec![T::zero(); m * n],
        };
        let (x, residual, iterations, direct) = self.interior_solve(&rhs, x0)?;

        let mut full = x;
        full.extend_from_slice(problem.f_top.values());
        let row = self.op.top_row(&full);
        let flux: Vec<T> = match problem.h {
            Some(h) => row.iter().zip(&h.values()[m * n..]).map(|(&r, &hv)| r - half * dy * hv).collect(),
            None => row,
        };
        Ok(BvpSolution {
            u: StripField::from_vec_unchecked(s, full),
            residual,
            iterations,
            top_flux: ScalarField::from_vec_unchecked(s.grid(), flux),
            direct,
        })
    }

    fn interior_solve(&self, rhs: &[T], x0: Vec<T>) -> Result<(Vec<T>, T, usize, bool)> {
        let size = rhs.len();
        let bnorm = norm(rhs);
        if bnorm == T::zero() {
            return Ok((vec![T::zero(); size], T::zero(), 0, false));
        }
        if self.opts.force_direct {
            return self.direct(rhs, bnorm);
        }
        match self.cg(rhs, x0, bnorm) {
            Ok(out) => Ok(out),
            Err(Error::NoConvergence { iterations, residual }) if size <= self.opts.direct_limit => {
                log::warn!("CG stalled after {iterations} iterations (residual {residual:e}); dense fallback");
                self.direct(rhs, bnorm)
            }
            Err(e) => Err(e),
        }
    }

    fn cg(&self, b: &[T], mut x: Vec<T>, bnorm: T) -> Result<(Vec<T>, T, usize, bool)> {
        let size = b.len();
        let cap = self.opts.max_iter.unwrap_or(10 * size);
        let ax = self.op.apply_interior(&x);
        let mut r: Vec<T> = b.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
        let mut rel = norm(&r) / bnorm;
        if rel <= self.opts.tol {
            return Ok((x, rel, 0, false));
        }
        let mut z = self.pre.apply(&r);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        for it in 1..=cap {
            let ap = self.op.apply_interior(&p);
            let pap = dot(&p, &ap);
            if !(pap > T::zero()) {
                return Err(Error::Singular);
            }
            let alpha = rz / pap;
            for k in 0..size {
                x[k] = x[k] + alpha * p[k];
                r[k] = r[k] - alpha * ap[k];
            }
            rel = norm(&r) / bnorm;
            if !rel.is_finite() {
                return Err(Error::NonFinite("CG residual".into()));
            }
            if rel <= self.opts.tol {
                // confirm against the true residual
                let ax = self.op.apply_interior(&x);
                let true_rel = norm(&b.iter().zip(&ax).map(|(&b, &a)| b - a).collect::<Vec<_>>()) / bnorm;
                if true_rel <= self.opts.tol * T::lit(10.0) {
                    return Ok((x, true_rel, it, false));
                }
                r = b.iter().zip(&ax).map(|(&b, &a)| b - a).collect();
            }
            z = self.pre.apply(&r);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for k in 0..size {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::NoConvergence { iterations: cap, residual: rel.as_f64() })
    }

    fn direct(&self, b: &[T], bnorm: T) -> Result<(Vec<T>, T, usize, bool)> {
        let size = b.len();
        let mut mat = DMatrix::<f64>::zeros(size, size);
        let cols: Vec<Vec<T>> = (0..size)
            .into_par_iter()
            .map(|c| {
                let mut e = vec![T::zero(); size];
                e[c] = T::one();
                self.op.apply_interior(&e)
            })
            .collect();
        for (c, col) in cols.iter().enumerate() {
            for (r, v) in col.iter().enumerate() {
                mat[(r, c)] = v.as_f64();
            }
        }
        // symmetrize away round-off before factoring
        let mat = (&mat + mat.transpose()) * 0.5;
        let rhs = DVector::from_iterator(size, b.iter().map(|v| v.as_f64()));
        let sol = match mat.clone().cholesky() {
            Some(ch) => ch.solve(&rhs),
            None => mat.lu().solve(&rhs).ok_or(Error::Singular)?,
        };
        let x: Vec<T> = sol.iter().map(|&v| T::lit(v)).collect();
        let ax = self.op.apply_interior(&x);
        let rel = norm(&b.iter().zip(&ax).map(|(&b, &a)| b - a).collect::<Vec<_>>()) / bnorm;
        Ok((x, rel, 1, true))
    }
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Solves one problem with default options and tolerance `tol`.
pub fn solve_bvp<T: Real>(problem: &BvpProblem<'_, T>, tol: T) -> Result<BvpSolution<T>> {
    let opts = SolveOptions { tol, ..SolveOptions::default() };
    BvpSolver::new(problem.coeff, opts)?.solve(problem, None)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Face {
    Top,
    Bottom,
}

/// `e_y·P̃∇u` on a face: spectral horizontal derivatives and a one-sided
/// second-order vertical stencil.
pub fn conormal_trace<T: Real>(u: &StripField<T>, coeff: &CoeffField<T>, side: Face) -> Result<ScalarField<T>> {
    let s = coeff.sampling();
    if u.sampling() != s {
        return Err(Error::GridMismatch);
    }
    let m = s.m();
    let inv2 = T::one() / (s.dy() + s.dy());
    let (three, four) = (T::lit(3.0), T::lit(4.0));
    let (j, dv): (usize, Vec<T>) = match side {
        Face::Top => {
            let (a, b, c) = (u.level_slice(m), u.level_slice(m - 1), u.level_slice(m - 2));
            (m, (0..a.len()).map(|i| (three * a[i] - four * b[i] + c[i]) * inv2).collect())
        }
        Face::Bottom => {
            let (a, b, c) = (u.level_slice(0), u.level_slice(1), u.level_slice(2));
            (0, (0..a.len()).map(|i| (-three * a[i] + four * b[i] - c[i]) * inv2).collect())
        }
    };
    let hz = Horizontal::new(s.grid());
    let [g0, g1] = hz.grad(u.level_slice(j));
    let vals = (0..dv.len())
        .map(|i| {
            let c = coeff.at(j, i);
            let gy1 = if g1.is_empty() { T::zero() } else { g1[i] };
            c.p[0] * g0[i] + c.p[1] * gy1 + c.pd * dv[i]
        })
        .collect();
    Ok(ScalarField::from_vec_unchecked(s.grid(), vals))
}
