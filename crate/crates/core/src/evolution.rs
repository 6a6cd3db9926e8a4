//! Nonlinear evolution of `(ζ, ψ)`:
//!
//! ```text
//! ∂t ζ = G(ζ)ψ
//! ∂t ψ = −gζ − ½|∇ψ|² + (G(ζ)ψ + ∇ζ·∇ψ)² / (2(1+|∇ζ|²)) + κ∇·(∇ζ/√(1+|∇ζ|²))
//! ```

use crate::dno::{DnoBackend, DnoConfig, DnoMode};
use crate::elliptic::SolveOptions;
use crate::error::{Error, Result};
use crate::geometry::{separation, DomainShape, StripField, StripSampling};
use crate::scalar::Real;
use crate::spectral::{dealias, divergence, gradient, ScalarField, TorusGrid};

/// Physical constants, bottom and discretization of one run.
#[derive(Clone, Debug)]
pub struct PhysParams<T: Real> {
    pub g: T,
    pub kappa: T,
    pub bottom: ScalarField<T>,
    /// Minimum admissible layer thickness.
    pub h0: T,
    pub sampling: StripSampling<T>,
    /// 2/3-rule filtering of the right-hand side.
    pub dealias: bool,
    pub backend: DnoMode,
    pub solve: SolveOptions<T>,
    /// Fraction of the linear stability bound allowed for `dt`.
    pub cfl: T,
}

impl<T: Real> PhysParams<T> {
    pub fn new(g: T, kappa: T, bottom: ScalarField<T>, h0: T, sampling: StripSampling<T>) -> Result<Self> {
        if !(g > T::zero() && g.is_finite()) {
            return Err(Error::Invalid(format!("gravity {g} must be positive")));
        }
        if !(kappa >= T::zero() && kappa.is_finite()) {
            return Err(Error::Invalid(format!("surface tension {kappa} must be non-negative")));
        }
        if bottom.grid() != sampling.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            g,
            kappa,
            bottom,
            h0,
            sampling,
            dealias: true,
            backend: DnoMode::Exact,
            solve: SolveOptions::default(),
            cfl: T::lit(0.5),
        })
    }

    /// Flat bottom at depth `depth`, `h0 = depth / 4`.
    pub fn flat(grid: &TorusGrid<T>, m: usize, depth: T, g: T, kappa: T) -> Result<Self> {
        let s = StripSampling::new(grid, m)?;
        Self::new(g, kappa, ScalarField::constant(grid, -depth), depth * T::lit(0.25), s)
    }

    pub fn grid(&self) -> &TorusGrid<T> {
        self.sampling.grid()
    }

    pub fn shape(&self, zeta: &ScalarField<T>) -> Result<DomainShape<T>> {
        DomainShape::new(zeta.clone(), self.bottom.clone(), self.h0)
    }

    /// Largest wavenumber kept by the 2/3 rule.
    pub fn k_max(&self) -> T {
        T::from_usize_lossy(self.grid().dealias_cutoff()) * self.grid().frequency_step()
    }

    /// `c_cfl / sqrt(g k + κ k³)` at `k = k_max`.
    pub fn dt_max(&self) -> T {
        let k = self.k_max();
        self.cfl / (self.g * k + self.kappa * k * k * k).sqrt()
    }

    fn backend(&self, zeta: &ScalarField<T>, orientation: Option<T>) -> Result<DnoBackend<T>> {
        let shape = self.shape(zeta)?;
        DnoBackend::with_config(self.backend, &shape, &self.sampling, DnoConfig { solve: self.solve, orientation })
    }

    fn filter(&self, f: ScalarField<T>) -> ScalarField<T> {
        if self.dealias {
            dealias(&f)
        } else {
            f
        }
    }
}

#[derive(Clone, Debug)]
pub struct WaveState<T: Real> {
    pub zeta: ScalarField<T>,
    pub psi: ScalarField<T>,
    pub t: T,
}

impl<T: Real> WaveState<T> {
    pub fn new(zeta: ScalarField<T>, psi: ScalarField<T>, t: T) -> Result<Self> {
        if zeta.grid() != psi.grid() {
            return Err(Error::GridMismatch);
        }
        Ok(Self { zeta, psi, t })
    }

    pub fn rest(grid: &TorusGrid<T>) -> Self {
        Self { zeta: ScalarField::zeros(grid), psi: ScalarField::zeros(grid), t: T::zero() }
    }

    pub fn is_finite(&self) -> bool {
        self.zeta.is_finite() && self.psi.is_finite()
    }

    fn axpy(&self, k: &(ScalarField<T>, ScalarField<T>), h: T) -> Self {
        Self { zeta: self.zeta.add_scaled(&k.0, h), psi: self.psi.add_scaled(&k.1, h), t: self.t + h }
    }
}

fn dot_vec<T: Real>(a: &[ScalarField<T>], b: &[ScalarField<T>]) -> ScalarField<T> {
    let mut acc = &a[0] * &b[0];
    for i in 1..a.len() {
        acc = &acc + &(&a[i] * &b[i]);
    }
    acc
}

/// `Z = (Gψ + ∇ζ·∇ψ) / (1 + |∇ζ|²)` from a precomputed `Gψ`.
pub fn z_trace_from<T: Real>(zeta: &ScalarField<T>, psi: &ScalarField<T>, g_psi: &ScalarField<T>) -> ScalarField<T> {
    let gz = gradient(zeta);
    let gp = gradient(psi);
    let num = g_psi + &dot_vec(&gz, &gp);
    let den = dot_vec(&gz, &gz).map(|v| T::one() + v);
    num.zip_map(&den, |a, b| a / b)
}

pub fn z_trace<T: Real>(state: &WaveState<T>, backend: &DnoBackend<T>) -> Result<ScalarField<T>> {
    let g_psi = backend.apply(&state.psi)?;
    Ok(z_trace_from(&state.zeta, &state.psi, &g_psi))
}

/// `v = ∇ψ − Z ∇ζ`.
pub fn v_field<T: Real>(zeta: &ScalarField<T>, psi: &ScalarField<T>, z: &ScalarField<T>) -> Vec<ScalarField<T>> {
    let gz = gradient(zeta);
    gradient(psi).iter().zip(&gz).map(|(gp, gzi)| gp - &(z * gzi)).collect()
}

/// `A f = κ∇·[∇f/√(1+|∇ζ|²) − ∇ζ(∇ζ·∇f)/(1+|∇ζ|²)^{3/2}]`.
pub fn a_op_apply<T: Real>(zeta: &ScalarField<T>, kappa: T, f: &ScalarField<T>) -> ScalarField<T> {
    a_op_apply_with_slope(&gradient(zeta), kappa, f)
}

/// [`a_op_apply`] with `∇ζ` supplied directly.
pub fn a_op_apply_with_slope<T: Real>(grad_zeta: &[ScalarField<T>], kappa: T, f: &ScalarField<T>) -> ScalarField<T> {
    let gf = gradient(f);
    let w = dot_vec(grad_zeta, grad_zeta).map(|v| T::one() + v);
    let proj = dot_vec(grad_zeta, &gf);
    let flux: Vec<ScalarField<T>> = gf
        .iter()
        .zip(grad_zeta)
        .map(|(gfi, gzi)| {
            let a = gfi.zip_map(&w, |x, w| x / w.sqrt());
            let b = (gzi * &proj).zip_map(&w, |x, w| x / (w * w.sqrt()));
            &a - &b
        })
        .collect();
    divergence(&flux).scale(kappa)
}

/// `κ∇·(∇ζ/√(1+|∇ζ|²))`, 2/3-filtered.
pub fn surface_tension_term<T: Real>(zeta: &ScalarField<T>, kappa: T) -> ScalarField<T> {
    if kappa == T::zero() {
        return ScalarField::zeros(zeta.grid());
    }
    let gz = gradient(zeta);
    let w = dot_vec(&gz, &gz).map(|v| (T::one() + v).sqrt());
    let flux: Vec<ScalarField<T>> = gz.iter().map(|c| c.zip_map(&w, |a, b| a / b)).collect();
    dealias(&divergence(&flux).scale(kappa))
}

/// Right-hand side plus the `G(ζ)ψ` it used.
pub struct Rhs<T: Real> {
    pub dzeta: ScalarField<T>,
    pub dpsi: ScalarField<T>,
    pub g_psi: ScalarField<T>,
    pub extension: Option<StripField<T>>,
}

pub fn rhs_with<T: Real>(
    state: &WaveState<T>,
    params: &PhysParams<T>,
    backend: &DnoBackend<T>,
    guess: Option<&StripField<T>>,
) -> Result<Rhs<T>> {
    let (g_psi, extension) = backend.apply_with_guess(&state.psi, guess)?;
    let gz = gradient(&state.zeta);
    let gp = gradient(&state.psi);
    let grad2 = dot_vec(&gp, &gp);
    let slope2 = dot_vec(&gz, &gz);
    let num = &g_psi + &dot_vec(&gz, &gp);
    let half = T::lit(0.5);
    let quad = (&num * &num).zip_map(&slope2, |a, s| a / (T::one() + s)).scale(half);
    let nonlinear = params.filter(&quad - &grad2.scale(half));
    let mut dpsi = &state.zeta.scale(-params.g) + &nonlinear;
    if params.kappa > T::zero() {
        dpsi = &dpsi + &surface_tension_term(&state.zeta, params.kappa);
    }
    let dzeta = params.filter(g_psi.clone());
    Ok(Rhs { dzeta, dpsi, g_psi, extension })
}

/// `(∂t ζ, ∂t ψ)` with a freshly built backend.
pub fn rhs<T: Real>(state: &WaveState<T>, params: &PhysParams<T>) -> Result<(ScalarField<T>, ScalarField<T>)> {
    let backend = params.backend(&state.zeta, None)?;
    let r = rhs_with(state, params, &backend, None)?;
    Ok((r.dzeta, r.dpsi))
}

/// `½(ψ, Gψ) + (g/2)∫ζ² + κ∫(√(1+|∇ζ|²) − 1)` from a precomputed `Gψ`.
pub fn hamiltonian_from<T: Real>(state: &WaveState<T>, params: &PhysParams<T>, g_psi: &ScalarField<T>) -> T {
    let half = T::lit(0.5);
    let kinetic = half * state.psi.dot(g_psi);
    let potential = half * params.g * state.zeta.dot(&state.zeta);
    let area = if params.kappa > T::zero() {
        let gz = gradient(&state.zeta);
        let s2 = dot_vec(&gz, &gz);
        params.kappa * s2.map(|v| v / ((T::one() + v).sqrt() + T::one())).integral()
    } else {
        T::zero()
    };
    kinetic + potential + area
}

pub fn hamiltonian<T: Real>(state: &WaveState<T>, params: &PhysParams<T>) -> Result<T> {
    let backend = params.backend(&state.zeta, None)?;
    Ok(hamiltonian_from(state, params, &backend.apply(&state.psi)?))
}

/// RK4 integrator with backend orientation and warm-start caches.
pub struct Evolver<T: Real> {
    params: PhysParams<T>,
    orientation: Option<T>,
    guesses: [Option<StripField<T>>; 4],
}

/// What one accepted step produced.
pub struct StepOutput<T: Real> {
    pub state: WaveState<T>,
    /// Hamiltonian of the state the step started from.
    pub h_start: T,
}

impl<T: Real> Evolver<T> {
    pub fn new(params: PhysParams<T>) -> Self {
        Self { params, orientation: None, guesses: [None, None, None, None] }
    }

    pub fn params(&self) -> &PhysParams<T> {
        &self.params
    }

    fn stage(&mut self, idx: usize, state: &WaveState<T>) -> Result<Rhs<T>> {
        if !state.is_finite() {
            return Err(Error::NonFinite(format!("RK stage {} at t = {}", idx + 1, state.t)));
        }
        let backend = self.params.backend(&state.zeta, self.orientation)?;
        self.orientation = Some(backend.orientation());
        let guess = self.guesses[idx].take();
        let r = rhs_with(state, &self.params, &backend, guess.as_ref())?;
        self.guesses[idx] = r.extension.clone();
        if !(r.dzeta.is_finite() && r.dpsi.is_finite()) {
            return Err(Error::NonFinite(format!("right-hand side at stage {} at t = {}", idx + 1, state.t)));
        }
        Ok(r)
    }

    /// One classical RK4 step; `|dt|` must not exceed the stability bound.
    pub fn step(&mut self, state: &WaveState<T>, dt: T) -> Result<StepOutput<T>> {
        let bound = self.params.dt_max();
        if !(dt.abs() <= bound * (T::one() + T::lit(1e-12))) {
            return Err(Error::StepTooLarge { dt: dt.as_f64(), bound: bound.as_f64() });
        }
        let half = dt * T::lit(0.5);
        let r1 = self.stage(0, state)?;
        let h_start = hamiltonian_from(state, &self.params, &r1.g_psi);
        let k1 = (r1.dzeta, r1.dpsi);
        let k2 = {
            let r = self.stage(1, &state.axpy(&k1, half))?;
            (r.dzeta, r.dpsi)
        };
        let k3 = {
            let r = self.stage(2, &state.axpy(&k2, half))?;
            (r.dzeta, r.dpsi)
        };
        let k4 = {
            let r = self.stage(3, &state.axpy(&k3, dt))?;
            (r.dzeta, r.dpsi)
        };
        let sixth = dt / T::lit(6.0);
        let two = T::lit(2.0);
        let combine = |a: &ScalarField<T>, b: &ScalarField<T>, c: &ScalarField<T>, d: &ScalarField<T>| {
            a.add_scaled(b, two).add_scaled(c, two).add_scaled(d, T::one()).scale(sixth)
        };
        let dz = combine(&k1.0, &k2.0, &k3.0, &k4.0);
        let dp = combine(&k1.1, &k2.1, &k3.1, &k4.1);
        let next = WaveState { zeta: &state.zeta + &dz, psi: &state.psi + &dp, t: state.t + dt };
        if !next.is_finite() {
            return Err(Error::NonFinite(format!("state after step to t = {}", next.t)));
        }
        let sep = separation(&next.zeta, &self.params.bottom);
        if sep < self.params.h0 {
            return Err(Error::Inadmissible(format!("layer thickness {sep} below h0 at t = {}", next.t)));
        }
        Ok(StepOutput { state: next, h_start })
    }

    /// Integrates to `t_end` with uniform steps no larger than `dt`.
    pub fn advance(&mut self, state: &WaveState<T>, t_end: T, dt: T) -> Result<WaveState<T>> {
        let span = t_end - state.t;
        let steps = (span.abs() / dt.abs()).ceil().to_usize().unwrap_or(0).max(1);
        let h = span / T::from_usize_lossy(steps);
        let mut cur = state.clone();
        for _ in 0..steps {
            cur = self.step(&cur, h)?.state;
        }
        cur.t = t_end;
        Ok(cur)
    }
}

/// One diagnostics row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Diagnostics<T> {
    pub t: T,
    pub hamiltonian: T,
    pub mass: T,
    pub max_abs_zeta: T,
    pub min_separation: T,
    pub dt: T,
}

/// Run controls.
#[derive(Clone, Copy, Debug)]
pub struct RunSpec<T> {
    /// Step size; `None` uses `dt_max`.
    pub dt: Option<T>,
    pub t_final: T,
    /// Keep every `snapshot_stride`-th state (0 keeps only the ends).
    pub snapshot_stride: usize,
}

#[derive(Clone, Debug)]
pub struct Trajectory<T: Real> {
    pub snapshots: Vec<WaveState<T>>,
    pub diagnostics: Vec<Diagnostics<T>>,
    /// Reason the run stopped early, if it did.
    pub aborted: Option<String>,
}

impl<T: Real> Trajectory<T> {
    pub fn last(&self) -> Option<&WaveState<T>> {
        self.snapshots.last()
    }

    /// Largest `|H(t) − H(0)| / max(|H(0)|, 1e-12)`.
    pub fn hamiltonian_drift(&self) -> T {
        let Some(first) = self.diagnostics.first() else { return T::zero() };
        let scale = first.hamiltonian.abs().max(T::lit(1e-12));
        self.diagnostics.iter().fold(T::zero(), |m, d| m.max((d.hamiltonian - first.hamiltonian).abs() / scale))
    }

    pub fn mass_drift(&self) -> T {
        let Some(first) = self.diagnostics.first() else { return T::zero() };
        self.diagnostics.iter().fold(T::zero(), |m, d| m.max((d.mass - first.mass).abs()))
    }
}

/// Steps from `initial` to `spec.t_final`, recording diagnostics every step.
/// An aborted run still returns the states reached so far.
pub fn simulate<T: Real>(initial: &WaveState<T>, params: &PhysParams<T>, spec: &RunSpec<T>) -> Result<Trajectory<T>> {
    let sep = separation(&initial.zeta, &params.bottom);
    if sep < params.h0 {
        return Err(Error::Inadmissible(format!("initial layer thickness {sep} below h0 = {}", params.h0)));
    }
    let bound = params.dt_max();
    let dt_req = spec.dt.unwrap_or(bound);
    if !(dt_req > T::zero()) {
        return Err(Error::Invalid(format!("time step {dt_req} must be positive")));
    }
    let span = spec.t_final - initial.t;
    let steps = if span > T::zero() { (span / dt_req).ceil().to_usize().unwrap_or(0).max(1) } else { 0 };
    let dt = if steps > 0 { span / T::from_usize_lossy(steps) } else { dt_req };

    let mut evo = Evolver::new(params.clone());
    let mut traj = Trajectory { snapshots: vec![initial.clone()], diagnostics: Vec::new(), aborted: None };
    let mut cur = initial.clone();
    let row = |s: &WaveState<T>, h: T| Diagnostics {
        t: s.t,
        hamiltonian: h,
        mass: s.zeta.integral(),
        max_abs_zeta: s.zeta.max_abs(),
        min_separation: separation(&s.zeta, &params.bottom),
        dt,
    };
    for k in 0..steps {
        match evo.step(&cur, dt) {
            Ok(out) => {
                traj.diagnostics.push(row(&cur, out.h_start));
                cur = out.state;
                if k + 1 == steps {
                    cur.t = spec.t_final;
                }
                let keep = spec.snapshot_stride > 0 && (k + 1) % spec.snapshot_stride == 0;
                if keep || k + 1 == steps {
                    traj.snapshots.push(cur.clone());
                }
            }
            Err(e) => {
                log::warn!("run aborted at t = {}: {e}", cur.t);
                traj.aborted = Some(e.to_string());
                if traj.snapshots.last().map(|s| s.t) != Some(cur.t) {
                    traj.snapshots.push(cur.clone());
                }
                return Ok(traj);
            }
        }
    }
    let h_end = hamiltonian(&cur, params)?;
    traj.diagnostics.push(row(&cur, h_end));
    Ok(traj)
}

/// `ω(k) = sqrt((g k + κ k³) tanh(k·depth))`.
pub fn linear_frequency<T: Real>(k: T, g: T, kappa: T, depth: T) -> T {
    ((g * k + kappa * k * k * k) * (k * depth).tanh()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, m: usize, kappa: f64) -> PhysParams<f64> {
        PhysParams::flat(&TorusGrid::periodic(1, n).unwrap(), m, 1.0, 1.0, kappa).unwrap()
    }

    #[test]
    fn operator_examples_flat_surface() {
        let p = params(16, 16, 0.0);
        let g = p.grid().clone();
        let zero = ScalarField::zeros(&g);
        let psi = ScalarField::from_fn(&g, |x| x[0].cos());
        let z = z_trace_from(&zero, &psi, &psi.scale(0.5));
        assert!((&z - &psi.scale(0.5)).max_abs() < 1e-15);
        let v = v_field(&zero, &psi, &z);
        assert!((&v[0] - &ScalarField::from_fn(&g, |x| -x[0].sin())).max_abs() < 1e-14);
        let af = a_op_apply(&zero, 0.3, &psi);
        assert!((&af - &psi.scale(-0.3)).max_abs() < 1e-14);
    }

    #[test]
    fn a_op_constant_slope_hook() {
        let g = TorusGrid::<f64>::periodic(1, 32).unwrap();
        let c = 0.7;
        let slope = vec![ScalarField::constant(&g, c)];
        let f = ScalarField::from_fn(&g, |x| (2.0 * x[0]).sin());
        let out = a_op_apply_with_slope(&slope, 1.5, &f);
        let want = f.scale(-4.0 * 1.5 / (1.0 + c * c).powf(1.5));
        assert!((&out - &want).max_abs() < 1e-13);
    }

    #[test]
    fn surface_tension_expansion() {
        let g = TorusGrid::<f64>::periodic(1, 32).unwrap();
        let mut last = 0.0;
        for eps in [1e-2, 1e-3] {
            let z = ScalarField::from_fn(&g, |x| eps * x[0].cos());
            let r = &surface_tension_term(&z, 1.0) - &z.scale(-1.0);
            let ratio = r.max_abs() / eps.powi(3);
            assert!(ratio < 1.0, "ratio {ratio}");
            last = ratio;
        }
        assert!(last > 0.0);
        assert!(surface_tension_term(&ScalarField::constant(&g, 0.2), 1.0).max_abs() < 1e-15);
    }

    #[test]
    fn rhs_examples() {
        let p = params(32, 32, 0.0);
        let g = p.grid().clone();
        let (dz, dp) = rhs(&WaveState::rest(&g), &p).unwrap();
        assert!(dz.max_abs() == 0.0 && dp.max_abs() == 0.0);

        let psi = ScalarField::from_fn(&g, |x| x[0].cos());
        let (dz, dp) = rhs(&WaveState::new(ScalarField::zeros(&g), psi.clone(), 0.0).unwrap(), &p).unwrap();
        let t = 1f64.tanh();
        assert!((&dz - &psi.scale(t)).max_abs() < 2e-4);
        let want = ScalarField::from_fn(&g, |x| -0.5 * x[0].sin().powi(2) + 0.5 * t * t * x[0].cos().powi(2));
        assert!((&dp - &want).max_abs() < 2e-4);

        let c = 0.1;
        let (dz, dp) =
            rhs(&WaveState::new(ScalarField::constant(&g, c), ScalarField::zeros(&g), 0.0).unwrap(), &p).unwrap();
        assert!(dz.max_abs() == 0.0);
        assert!((&dp - &ScalarField::constant(&g, -c)).max_abs() < 1e-15);
    }

    #[test]
    fn hamiltonian_examples() {
        let p = params(32, 64, 0.3);
        let g = p.grid().clone();
        assert_eq!(hamiltonian(&WaveState::rest(&g), &p).unwrap(), 0.0);
        let psi = ScalarField::from_fn(&g, |x| x[0].cos());
        let h = hamiltonian(&WaveState::new(ScalarField::zeros(&g), psi, 0.0).unwrap(), &p).unwrap();
        assert!((h - 0.5 * 1f64.tanh() * std::f64::consts::PI).abs() < 1e-4);
        let eps = 1e-2;
        let zeta = ScalarField::from_fn(&g, |x| eps * x[0].cos());
        let h = hamiltonian(&WaveState::new(zeta, ScalarField::zeros(&g), 0.0).unwrap(), &p).unwrap();
        let want = 0.5 * eps * eps * std::f64::consts::PI + 0.3 * eps * eps * std::f64::consts::PI / 2.0;
        assert!((h - want).abs() < 1e-7);
    }

    #[test]
    fn step_guard_and_equilibrium() {
        let p = params(16, 16, 0.0);
        let g = p.grid().clone();
        let mut evo = Evolver::new(p.clone());
        assert!(matches!(evo.step(&WaveState::rest(&g), 10.0 * p.dt_max()), Err(Error::StepTooLarge { .. })));
        let out = evo.step(&WaveState::rest(&g), p.dt_max()).unwrap();
        assert!(out.state.zeta.max_abs() < 1e-14 && out.state.psi.max_abs() < 1e-14);
    }

    #[test]
    fn inadmissible_initial_data_is_rejected() {
        let p = params(16, 16, 0.0);
        let z = ScalarField::from_fn(p.grid(), |x| -0.9 + 0.0 * x[0]);
        let st = WaveState::new(z, ScalarField::zeros(p.grid()), 0.0).unwrap();
        let spec = RunSpec { dt: None, t_final: 1.0, snapshot_stride: 0 };
        assert!(matches!(simulate(&st, &p, &spec), Err(Error::Inadmissible(_))));
    }
}
