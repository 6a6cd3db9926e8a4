//! Linearization about a reference solution, in the good unknown
//! `V = (δζ, δψ − Z̄ δζ)`:
//!
//! ```text
//! ∂t V₁ + ∇·(v̄ V₁) − Ḡ V₂ = H₁
//! ∂t V₂ + (ā − Ā) V₁ + v̄·∇V₂ = H₂,     ā = g + ∂t Z̄ + v̄·∇Z̄
//! ```
//!
//! plus the energy functional, the Lévy condition and the pressure-problem
//! computation of `ā`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::calculus::{lambda_a_apply, random_band_field, sigma_weight};
use crate::dno::{DnoBackend, DnoConfig, DnoMode};
use crate::elliptic::{BvpProblem, BvpSolver, Horizontal};
use crate::error::{Error, Result};
use crate::evolution::{a_op_apply, rhs, v_field, z_trace_from, PhysParams, WaveState};
use crate::geometry::StripField;
use crate::scalar::Real;
use crate::spectral::{divergence, gradient, sobolev_norm, ScalarField};

/// Reference quantities at one time.
#[derive(Clone, Debug)]
pub struct Frame<T: Real> {
    pub t: T,
    pub state: WaveState<T>,
    pub z: ScalarField<T>,
    pub v: Vec<ScalarField<T>>,
    pub a: ScalarField<T>,
    backend: DnoBackend<T>,
}

/// Time-indexed reference coefficients.
#[derive(Clone, Debug)]
pub struct LinCoeffs<T: Real> {
    frames: Vec<Frame<T>>,
    dt: T,
    params: PhysParams<T>,
}

fn frame_parts<T: Real>(
    state: &WaveState<T>,
    params: &PhysParams<T>,
    orientation: Option<T>,
) -> Result<(DnoBackend<T>, ScalarField<T>, Vec<ScalarField<T>>)> {
    let shape = params.shape(&state.zeta)?;
    let backend = DnoBackend::with_config(
        DnoMode::Exact,
        &shape,
        &params.sampling,
        DnoConfig { solve: params.solve, orientation },
    )?;
    let g_psi = backend.apply(&state.psi)?;
    let z = z_trace_from(&state.zeta, &state.psi, &g_psi);
    let v = v_field(&state.zeta, &state.psi, &z);
    Ok((backend, z, v))
}

fn advect<T: Real>(v: &[ScalarField<T>], f: &ScalarField<T>) -> ScalarField<T> {
    let gf = gradient(f);
    let mut acc = &v[0] * &gf[0];
    for i in 1..v.len() {
        acc = &acc + &(&v[i] * &gf[i]);
    }
    acc
}

/// Builds the coefficients from reference states sampled at uniform spacing;
/// `∂t Z̄` by centered differences, one-sided second order at the ends.
pub fn build_coeffs<T: Real>(reference: &[WaveState<T>], params: &PhysParams<T>) -> Result<LinCoeffs<T>> {
    if reference.len() < 3 {
        return Err(Error::Invalid(format!("{} reference frames given, at least 3 needed", reference.len())));
    }
    let dt = reference[1].t - reference[0].t;
    if !(dt > T::zero()) {
        return Err(Error::Invalid("reference times must increase".into()));
    }
    for w in reference.windows(2) {
        if ((w[1].t - w[0].t) - dt).abs() > T::lit(1e-9) * dt.abs().max(T::one()) {
            return Err(Error::Invalid("reference frames are not uniformly spaced".into()));
        }
    }
    let mut parts = Vec::with_capacity(reference.len());
    let mut orientation = None;
    for st in reference {
        let p = frame_parts(st, params, orientation)?;
        orientation = Some(p.0.orientation());
        parts.push(p);
    }
    let nf = reference.len();
    let inv2 = T::one() / (dt + dt);
    let (three, four) = (T::lit(3.0), T::lit(4.0));
    let mut frames = Vec::with_capacity(nf);
    for k in 0..nf {
        let zt = if k == 0 {
            parts[0].1.scale(-three).add_scaled(&parts[1].1, four).add_scaled(&parts[2].1, -T::one()).scale(inv2)
        } else if k == nf - 1 {
            parts[k].1.scale(three).add_scaled(&parts[k - 1].1, -four).add_scaled(&parts[k - 2].1, T::one()).scale(inv2)
        } else {
            (&parts[k + 1].1 - &parts[k - 1].1).scale(inv2)
        };
        let (backend, z, v) = parts[k].clone();
        let a = &zt.map(|x| x + params.g) + &advect(&v, &z);
        frames.push(Frame { t: reference[k].t, state: reference[k].clone(), z, v, a, backend });
    }
    Ok(LinCoeffs { frames, dt, params: params.clone() })
}

impl<T: Real> LinCoeffs<T> {
    /// Time-independent coefficients of a steady reference (`∂t Z̄ = 0`).
    pub fn frozen(state: &WaveState<T>, params: &PhysParams<T>) -> Result<Self> {
        let (backend, z, v) = frame_parts(state, params, None)?;
        let a = &ScalarField::constant(state.zeta.grid(), params.g) + &advect(&v, &z);
        let frame = Frame { t: state.t, state: state.clone(), z, v, a, backend };
        Ok(Self { frames: vec![frame], dt: T::zero(), params: params.clone() })
    }

    pub fn frames(&self) -> &[Frame<T>] {
        &self.frames
    }

    pub fn params(&self) -> &PhysParams<T> {
        &self.params
    }

    pub fn frame_dt(&self) -> T {
        self.dt
    }

    pub fn t_range(&self) -> (T, T) {
        (self.frames[0].t, self.frames[self.frames.len() - 1].t)
    }

    /// Frame indices and weights for linear interpolation at `t`.
    fn stencil(&self, t: T) -> Vec<(usize, T)> {
        if self.frames.len() == 1 {
            return vec![(0, T::one())];
        }
        let (t0, t1) = self.t_range();
        let tc = t.max(t0).min(t1);
        let pos = (tc - t0) / self.dt;
        let last = self.frames.len() - 1;
        let i = pos.floor().to_usize().unwrap_or(0).min(last);
        let w = pos - T::from_usize_lossy(i);
        let tiny = T::lit(1e-9);
        if i == last || w <= tiny {
            vec![(i, T::one())]
        } else if w >= T::one() - tiny {
            vec![(i + 1, T::one())]
        } else {
            vec![(i, T::one() - w), (i + 1, w)]
        }
    }

    fn blend(&self, t: T, pick: impl Fn(&Frame<T>) -> ScalarField<T>) -> ScalarField<T> {
        let st = self.stencil(t);
        let mut acc = pick(&self.frames[st[0].0]).scale(st[0].1);
        for &(k, w) in &st[1..] {
            acc = acc.add_scaled(&pick(&self.frames[k]), w);
        }
        acc
    }

    fn blend_op(&self, t: T, op: impl Fn(&Frame<T>) -> Result<ScalarField<T>>) -> Result<ScalarField<T>> {
        let st = self.stencil(t);
        let mut acc = op(&self.frames[st[0].0])?.scale(st[0].1);
        for &(k, w) in &st[1..] {
            acc = acc.add_scaled(&op(&self.frames[k])?, w);
        }
        Ok(acc)
    }

    pub fn zeta_at(&self, t: T) -> ScalarField<T> {
        self.blend(t, |f| f.state.zeta.clone())
    }

    pub fn z_at(&self, t: T) -> ScalarField<T> {
        self.blend(t, |f| f.z.clone())
    }

    pub fn a_at(&self, t: T) -> ScalarField<T> {
        self.blend(t, |f| f.a.clone())
    }

    pub fn v_at(&self, t: T) -> Vec<ScalarField<T>> {
        (0..self.frames[0].v.len()).map(|i| self.blend(t, |f| f.v[i].clone())).collect()
    }

    /// `Ḡ f` at `t`, interpolating the outputs of the neighbouring frames.
    pub fn g_apply(&self, t: T, f: &ScalarField<T>) -> Result<ScalarField<T>> {
        self.blend_op(t, |fr| fr.backend.apply(f))
    }

    /// `Ā f` at `t`.
    pub fn a_op_at(&self, t: T, f: &ScalarField<T>) -> Result<ScalarField<T>> {
        let kappa = self.params.kappa;
        self.blend_op(t, |fr| Ok(a_op_apply(&fr.state.zeta, kappa, f)))
    }

    /// Converts a source `(G₁, G₂)` for `(δζ, δψ)` into the source for `V`.
    pub fn forcing_from_original(&self, t: T, g1: &ScalarField<T>, g2: &ScalarField<T>) -> (ScalarField<T>, ScalarField<T>) {
        let z = self.z_at(t);
        (g1.clone(), g2 - &(&z * g1))
    }

    /// Relative residual of the reference in the nonlinear system at frame `k`
    /// (centered time difference; for a single frame, the size of the right side).
    pub fn solving_residual(&self, k: usize) -> Result<T> {
        let fr = &self.frames[k];
        let (dz, dp) = rhs(&fr.state, &self.params)?;
        let scale = dz.l2_norm() + dp.l2_norm() + fr.state.zeta.l2_norm() + fr.state.psi.l2_norm();
        let scale = scale.max(T::lit(1e-300));
        if self.frames.len() == 1 {
            return Ok((dz.l2_norm() + dp.l2_norm()) / scale.max(T::one()));
        }
        let (lo, hi) = if k == 0 {
            (0, 1)
        } else if k + 1 == self.frames.len() {
            (k - 1, k)
        } else {
            (k - 1, k + 1)
        };
        let span = self.frames[hi].t - self.frames[lo].t;
        let tz = (&self.frames[hi].state.zeta - &self.frames[lo].state.zeta).scale(T::one() / span);
        let tp = (&self.frames[hi].state.psi - &self.frames[lo].state.psi).scale(T::one() / span);
        Ok(((&tz - &dz).l2_norm() + (&tp - &dp).l2_norm()) / scale)
    }
}

/// Linearized unknowns.
#[derive(Clone, Debug)]
pub struct LinState<T: Real> {
    pub v1: ScalarField<T>,
    pub v2: ScalarField<T>,
    pub t: T,
}

impl<T: Real> LinState<T> {
    fn axpy(&self, k: &(ScalarField<T>, ScalarField<T>), h: T) -> Self {
        Self { v1: self.v1.add_scaled(&k.0, h), v2: self.v2.add_scaled(&k.1, h), t: self.t + h }
    }
}

/// `(∂t V₁, ∂t V₂)` at time `t` with source `h`.
pub fn lin_rhs<T: Real>(
    v: &LinState<T>,
    coeffs: &LinCoeffs<T>,
    t: T,
    h: Option<&(ScalarField<T>, ScalarField<T>)>,
) -> Result<(ScalarField<T>, ScalarField<T>)> {
    let vb = coeffs.v_at(t);
    let flux: Vec<ScalarField<T>> = vb.iter().map(|c| c * &v.v1).collect();
    let mut d1 = &coeffs.g_apply(t, &v.v2)? - &divergence(&flux);
    let a = coeffs.a_at(t);
    let mut d2 = &(&coeffs.a_op_at(t, &v.v1)? - &(&a * &v.v1)) - &advect(&vb, &v.v2);
    if let Some((h1, h2)) = h {
        d1 = &d1 + h1;
        d2 = &d2 + h2;
    }
    Ok((d1, d2))
}

/// Source term as a function of time.
pub type Forcing<'a, T> = &'a dyn Fn(T) -> (ScalarField<T>, ScalarField<T>);

/// RK4 integration of the linearized system; returns every step.
pub fn solve_linearized<T: Real>(
    v0: &LinState<T>,
    forcing: Option<Forcing<'_, T>>,
    coeffs: &LinCoeffs<T>,
    t_final: T,
    dt: T,
) -> Result<Vec<LinState<T>>> {
    let bound = coeffs.params.dt_max();
    if !(dt > T::zero() && dt <= bound * (T::one() + T::lit(1e-12))) {
        return Err(Error::StepTooLarge { dt: dt.as_f64(), bound: bound.as_f64() });
    }
    let span = t_final - v0.t;
    let steps = (span / dt).round().to_usize().unwrap_or(0);
    let h = if steps > 0 { span / T::from_usize_lossy(steps) } else { dt };
    let mut out = vec![v0.clone()];
    let mut cur = v0.clone();
    let eval = |s: &LinState<T>| -> Result<(ScalarField<T>, ScalarField<T>)> {
        let src = forcing.map(|f| f(s.t));
        let r = lin_rhs(s, coeffs, s.t, src.as_ref())?;
        if !(r.0.is_finite() && r.1.is_finite()) {
            return Err(Error::NonFinite(format!("linearized right-hand side at t = {}", s.t)));
        }
        Ok(r)
    };
    let half = h * T::lit(0.5);
    let sixth = h / T::lit(6.0);
    let two = T::lit(2.0);
    for _ in 0..steps {
        let k1 = eval(&cur)?;
        let k2 = eval(&cur.axpy(&k1, half))?;
        let k3 = eval(&cur.axpy(&k2, half))?;
        let k4 = eval(&cur.axpy(&k3, h))?;
        let d1 = k1.0.add_scaled(&k2.0, two).add_scaled(&k3.0, two).add_scaled(&k4.0, T::one()).scale(sixth);
        let d2 = k1.1.add_scaled(&k2.1, two).add_scaled(&k3.1, two).add_scaled(&k4.1, T::one()).scale(sixth);
        cur = LinState { v1: &cur.v1 + &d1, v2: &cur.v2 + &d2, t: cur.t + h };
        out.push(cur.clone());
    }
    Ok(out)
}

/// `E_k(V) = (Λ̃^k σV₁, σ⁻¹(ā−Ā)σ⁻¹ Λ̃^k σV₁) + (Λ̃^k σ⁻¹V₂, σḠσ Λ̃^k σ⁻¹V₂)`, `k ∈ {0, 1}`.
pub fn energy_functional<T: Real>(v: &LinState<T>, coeffs: &LinCoeffs<T>, t: T, k: u32) -> Result<T> {
    if k > 1 {
        return Err(Error::Invalid(format!("energy index {k} not in {{0, 1}}")));
    }
    let zeta = coeffs.zeta_at(t);
    let sigma = sigma_weight(&zeta);
    let inv_sigma = sigma.map(|s| T::one() / s);
    let lift = |f: ScalarField<T>| if k == 1 { lambda_a_apply(&zeta, &f) } else { f };
    let w1 = lift(&sigma * &v.v1);
    let inner1 = &inv_sigma * &w1;
    let a = coeffs.a_at(t);
    let op1 = &inv_sigma * &(&(&a * &inner1) - &coeffs.a_op_at(t, &inner1)?);
    let w2 = lift(&inv_sigma * &v.v2);
    let op2 = &sigma * &coeffs.g_apply(t, &(&sigma * &w2))?;
    Ok(w1.dot(&op1) + w2.dot(&op2))
}

/// Minimum of `ā` over all frames and nodes, and whether it reaches `c0`.
pub fn check_levy<T: Real>(coeffs: &LinCoeffs<T>, c0: T) -> (T, bool) {
    let min = coeffs.frames.iter().fold(T::infinity(), |m, f| m.min(f.a.min()));
    (min, min >= c0 && c0 > T::zero())
}

/// Fitted exponential envelope of an energy history.
#[derive(Clone, Copy, Debug)]
pub struct GronwallFit<T> {
    /// Smallest `λ` with `e^{−2λt}E(t)` non-increasing within 5% over the run.
    pub lambda: T,
    /// The same fit over the first half of the run.
    pub lambda_first_half: T,
    /// Whether the full-run rate exceeds twice the early rate by more than 0.1.
    pub super_exponential: bool,
}

fn envelope_rate<T: Real>(times: &[T], energies: &[T]) -> T {
    let two = T::lit(2.0);
    let slack = T::lit(1.05);
    let mut lam = T::zero();
    for i in 0..times.len() {
        for j in i + 1..times.len() {
            let dt = times[j] - times[i];
            if dt <= T::zero() || energies[i] <= T::zero() || energies[j] <= T::zero() {
                continue;
            }
            lam = lam.max((energies[j] / (slack * energies[i])).ln() / (two * dt));
        }
    }
    lam
}

pub fn fit_gronwall<T: Real>(times: &[T], energies: &[T]) -> GronwallFit<T> {
    let lambda = envelope_rate(times, energies);
    let h = (times.len() / 2).max(2).min(times.len());
    let lambda_first_half = envelope_rate(&times[..h], &energies[..h]);
    let super_exponential = lambda > T::lit(2.0) * lambda_first_half + T::lit(0.1);
    GronwallFit { lambda, lambda_first_half, super_exponential }
}

/// Range of `E₀(V) / (κ|V₁|²_{H¹} + ā_min|V₁|²_{L²} + |V₂|²_{H^{1/2}})` over
/// random fields with modes in `(low, high]`; returns `(c₁, c₂)`.
pub fn equivalence_constants<T: Real>(
    coeffs: &LinCoeffs<T>,
    t: T,
    samples: usize,
    low: usize,
    high: usize,
    seed: u64,
) -> Result<(T, T)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a_min = coeffs.a_at(t).min();
    let kappa = coeffs.params.kappa;
    let grid = coeffs.frames[0].state.zeta.grid().clone();
    let (mut c1, mut c2) = (T::infinity(), T::zero());
    for _ in 0..samples {
        let v1 = random_band_field(&grid, low, high, &mut rng);
        let v2 = random_band_field(&grid, low, high, &mut rng);
        let e = energy_functional(&LinState { v1: v1.clone(), v2: v2.clone(), t }, coeffs, t, 0)?;
        let h1 = sobolev_norm(&v1, T::one());
        let l2 = v1.l2_norm();
        let hh = sobolev_norm(&v2, T::lit(0.5));
        let norm = kappa * h1 * h1 + a_min * l2 * l2 + hh * hh;
        let r = e / norm;
        c1 = c1.min(r);
        c2 = c2.max(r);
    }
    Ok((c1, c2))
}

/// Output of [`taylor_check`].
#[derive(Clone, Debug)]
pub struct TaylorReport<T: Real> {
    /// `−∂_y P̄` at the surface; directly comparable to `ā`.
    pub trace: ScalarField<T>,
    /// `ā` of the same frame, from the time-derivative formula.
    pub a_formula: ScalarField<T>,
    pub solving_residual: T,
}

/// Curvature `∇·(∇ζ/√(1+|∇ζ|²))`, unfiltered.
fn curvature<T: Real>(zeta: &ScalarField<T>) -> ScalarField<T> {
    let gz = gradient(zeta);
    let mut s2 = &gz[0] * &gz[0];
    for c in &gz[1..] {
        s2 = &s2 + &(c * c);
    }
    let w = s2.map(|v| (T::one() + v).sqrt());
    let flux: Vec<ScalarField<T>> = gz.iter().map(|c| c.zip_map(&w, |a, b| a / b)).collect();
    divergence(&flux)
}

/// Vertical derivative on the strip: centered inside, one-sided second order at the faces.
fn d_ytilde<T: Real>(u: &StripField<T>) -> Vec<T> {
    let s = u.sampling();
    let n = s.grid().len();
    let m = s.m();
    let inv2 = T::one() / (s.dy() + s.dy());
    let (three, four) = (T::lit(3.0), T::lit(4.0));
    let v = u.values();
    let mut out = vec![T::zero(); v.len()];
    for i in 0..n {
        let at = |j: usize| v[j * n + i];
        out[i] = (-three * at(0) + four * at(1) - at(2)) * inv2;
        out[m * n + i] = (three * at(m) - four * at(m - 1) + at(m - 2)) * inv2;
        for j in 1..m {
            out[j * n + i] = (at(j + 1) - at(j - 1)) * inv2;
        }
    }
    out
}

/// `−∂_y P̄` at the surface of a reference frame, where the pressure solves
/// `−ΔP̄ = |∇²φ̄|²` with `P̄ = −κ curv(ζ̄)` on the surface and `∂_y P̄ = −g` on
/// the (flat) bottom. Requires `frame`'s residual in the nonlinear system to be
/// at most `max_residual`.
pub fn taylor_check<T: Real>(coeffs: &LinCoeffs<T>, frame: usize, max_residual: T) -> Result<TaylorReport<T>> {
    let params = &coeffs.params;
    let b = params.bottom.values();
    if b.iter().any(|&v| (v - b[0]).abs() > T::lit(1e-14)) {
        return Err(Error::Invalid("the pressure problem is set up for a flat bottom".into()));
    }
    let res = coeffs.solving_residual(frame)?;
    if res > max_residual {
        return Err(Error::NotSolving(res.as_f64()));
    }
    let fr = &coeffs.frames[frame];
    let backend = &fr.backend;
    let coeff = backend.coeff();
    let s = coeff.sampling();
    let n = s.grid().len();
    let dim = s.grid().dim();
    let hz = Horizontal::new(s.grid());

    // harmonic extension and its Hessian through the strip map
    let phi = backend.extension(&fr.state.psi)?;
    let jac = coeff.jac();
    let vertical = |w: &StripField<T>| -> Vec<T> {
        let d = d_ytilde(w);
        d.iter().enumerate().map(|(k, &x)| x / jac[k % n]).collect()
    };
    let horizontal = |w: &StripField<T>, wy: &[T]| -> Vec<Vec<T>> {
        // D_i w = ∂_i w − (s_i / J) ∂_ỹ w, with wy = ∂_ỹ w / J
        let mut comps = vec![vec![T::zero(); s.len()]; dim];
        for j in 0..s.levels() {
            let g = hz.grad(w.level_slice(j));
            for i in 0..n {
                let gs = coeff.grad_s(j, i);
                for (c, comp) in comps.iter_mut().enumerate() {
                    comp[j * n + i] = g[c][i] - gs[c] * wy[j * n + i];
                }
            }
        }
        comps
    };
    let phi_y = vertical(&phi);
    let phi_x = horizontal(&phi, &phi_y);
    let fy = StripField::from_vec_unchecked(s, phi_y);
    let h_yy = vertical(&fy);
    let h_iy = horizontal(&fy, &h_yy);
    let mut hess2: Vec<T> = (0..s.len()).map(|k| h_yy[k] * h_yy[k]).collect();
    for c in 0..dim {
        for k in 0..s.len() {
            hess2[k] = hess2[k] + T::lit(2.0) * h_iy[c][k] * h_iy[c][k];
        }
        let fc = StripField::from_vec_unchecked(s, phi_x[c].clone());
        let fcy = vertical(&fc);
        let row = horizontal(&fc, &fcy);
        for r in row.iter() {
            for k in 0..s.len() {
                hess2[k] = hess2[k] + r[k] * r[k];
            }
        }
    }
    let h: Vec<T> = hess2.iter().enumerate().map(|(k, &v)| jac[k % n] * v).collect();
    let h = StripField::from_vec_unchecked(s, h);

    let zeta = &fr.state.zeta;
    let kcurv = curvature(zeta);
    let top = kcurv.scale(-params.kappa);
    let bottom = ScalarField::constant(s.grid(), -params.g);
    let solver = BvpSolver::new(coeff, params.solve)?;
    let sol = solver.solve(&BvpProblem { coeff, h: Some(&h), f_top: &top, g_bottom: Some(&bottom) }, None)?;
    let flux = sol.top_flux;

    let gz = gradient(zeta);
    let gk = gradient(&kcurv);
    let mut slope2 = ScalarField::zeros(s.grid());
    let mut cross = ScalarField::zeros(s.grid());
    for c in 0..dim {
        slope2 = &slope2 + &(&gz[c] * &gz[c]);
        cross = &cross + &(&gz[c] * &gk[c]);
    }
    let num = &cross.scale(params.kappa) - &flux;
    let trace = num.zip_map(&slope2, |x, w| x / (T::one() + w));
    Ok(TaylorReport { trace, a_formula: fr.a.clone(), solving_residual: res })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::TorusGrid;

    fn flat_params(kappa: f64) -> PhysParams<f64> {
        PhysParams::flat(&TorusGrid::periodic(1, 16).unwrap(), 16, 1.0, 1.0, kappa).unwrap()
    }

    #[test]
    fn flat_reference_coefficients() {
        let p = flat_params(0.0);
        let rest = WaveState::rest(p.grid());
        let c = LinCoeffs::frozen(&rest, &p).unwrap();
        assert!(c.z_at(0.0).max_abs() == 0.0);
        assert!(c.v_at(0.0)[0].max_abs() == 0.0);
        assert!((&c.a_at(0.0) - &ScalarField::constant(p.grid(), 1.0)).max_abs() == 0.0);
        assert_eq!(check_levy(&c, 0.5), (1.0, true));

        let frames: Vec<WaveState<f64>> =
            (0..3).map(|k| WaveState { t: k as f64 * 0.1, ..rest.clone() }).collect();
        let c = build_coeffs(&frames, &p).unwrap();
        assert!((&c.a_at(0.05) - &ScalarField::constant(p.grid(), 1.0)).max_abs() < 1e-12);
        assert!(build_coeffs(&frames[..2], &p).is_err());
    }

    #[test]
    fn lin_rhs_examples() {
        let p = flat_params(1.0);
        let g = p.grid().clone();
        let c = LinCoeffs::frozen(&WaveState::rest(&g), &p).unwrap();
        let cos = ScalarField::from_fn(&g, |x| x[0].cos());
        let zero = ScalarField::zeros(&g);
        let (d1, d2) = lin_rhs(&LinState { v1: zero.clone(), v2: cos.clone(), t: 0.0 }, &c, 0.0, None).unwrap();
        assert!((&d1 - &cos.scale(1f64.tanh())).max_abs() < 1e-3);
        assert!(d2.max_abs() < 1e-14);
        let (d1, d2) = lin_rhs(&LinState { v1: cos.clone(), v2: zero.clone(), t: 0.0 }, &c, 0.0, None).unwrap();
        assert!(d1.max_abs() < 1e-14);
        assert!((&d2 - &cos.scale(-2.0)).max_abs() < 1e-13);
        let h = (cos.clone(), cos.scale(0.5));
        let (d1, d2) = lin_rhs(&LinState { v1: zero.clone(), v2: zero, t: 0.0 }, &c, 0.0, Some(&h)).unwrap();
        assert!((&d1 - &h.0).max_abs() == 0.0 && (&d2 - &h.1).max_abs() == 0.0);
    }

    #[test]
    fn energy_examples() {
        let p = PhysParams::flat(&TorusGrid::<f64>::periodic(1, 32).unwrap(), 64, 1.0, 1.0, 1.0).unwrap();
        let g = p.grid().clone();
        let c = LinCoeffs::frozen(&WaveState::rest(&g), &p).unwrap();
        let cos = ScalarField::from_fn(&g, |x| x[0].cos());
        let zero = ScalarField::zeros(&g);
        let pi = std::f64::consts::PI;
        let e = energy_functional(&LinState { v1: zero.clone(), v2: zero.clone(), t: 0.0 }, &c, 0.0, 0).unwrap();
        assert_eq!(e, 0.0);
        let e = energy_functional(&LinState { v1: cos.clone(), v2: zero.clone(), t: 0.0 }, &c, 0.0, 0).unwrap();
        assert!((e - 2.0 * pi).abs() < 1e-12);
        let e = energy_functional(&LinState { v1: zero, v2: cos, t: 0.0 }, &c, 0.0, 0).unwrap();
        assert!((e - 1f64.tanh() * pi).abs() < 1e-4);
    }

    #[test]
    fn gronwall_fit_classifies_growth() {
        let ts: Vec<f64> = (0..20).map(|k| k as f64 * 0.1).collect();
        let exp: Vec<f64> = ts.iter().map(|t| (0.8 * t).exp()).collect();
        let fit = fit_gronwall(&ts, &exp);
        assert!(fit.lambda > 0.3 && fit.lambda < 0.4 && !fit.super_exponential);
        let sup: Vec<f64> = ts.iter().map(|t| (3.0 * t * t * t).exp()).collect();
        assert!(fit_gronwall(&ts, &sup).super_exponential);
        let flat = vec![1.0; 20];
        assert_eq!(fit_gronwall(&ts, &flat).lambda, 0.0);
    }

    #[test]
    fn taylor_flat_equilibrium_is_gravity() {
        let p = flat_params(0.01);
        let c = LinCoeffs::frozen(&WaveState::rest(p.grid()), &p).unwrap();
        let rep = taylor_check(&c, 0, 1e-8).unwrap();
        assert!((&rep.trace - &ScalarField::constant(p.grid(), 1.0)).max_abs() < 1e-12);
    }
}
