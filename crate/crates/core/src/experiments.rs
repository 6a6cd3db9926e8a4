//! Experiments and property suites shared by the command-line tool and the
//! acceptance tests.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::calculus::{
    coercivity, lambda_a_apply, lambda_symbol, ls_slope, measure_order, p_a_apply, poisson_bracket, random_band_field,
    sharp_product, sigma_weight, weighted_principal_symbol, OrderProbe,
};
use crate::dno::{remainder_apply, DnoBackend, DnoMode};
use crate::error::{Error, Result};
use crate::evolution::{linear_frequency, simulate, Evolver, PhysParams, RunSpec, WaveState};
use crate::geometry::{DomainShape, StripSampling};
use crate::linearized::{
    build_coeffs, check_levy, energy_functional, equivalence_constants, fit_gronwall, solve_linearized, taylor_check,
    GronwallFit, LinCoeffs, LinState,
};
use crate::spectral::{sobolev_norm, ScalarField, TorusGrid};

/// One row of a pass/fail report.
#[derive(Clone, Debug, PartialEq)]
pub struct Property {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Property {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value <= threshold }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Self {
        Self { name: name.into(), value, threshold, pass: value >= threshold }
    }

    pub fn row(&self) -> Vec<String> {
        vec![self.name.clone(), format!("{:e}", self.value), format!("{:e}", self.threshold), self.pass.to_string()]
    }
}

pub const PROPERTY_HEADER: [&str; 4] = ["name", "measured", "threshold", "pass"];

/// Projection `(2/|Ω|) ∫ f cos(k x₁)`.
pub fn mode_amplitude(f: &ScalarField<f64>, k: f64) -> f64 {
    let g = f.grid();
    let s: f64 = f.values().iter().enumerate().map(|(i, v)| v * (k * g.node(i)[0]).cos()).sum();
    2.0 * s / g.len() as f64
}

/// Frequency from the zero crossings of a sampled oscillation: crossings are
/// located by linear interpolation and fitted to `t₀ + j π/ω`.
pub fn zero_crossing_frequency(times: &[f64], values: &[f64]) -> Result<f64> {
    let mut cross = Vec::new();
    for i in 1..values.len() {
        let (a, b) = (values[i - 1], values[i]);
        if a == 0.0 && i > 1 {
            continue;
        }
        if a * b < 0.0 || (b == 0.0 && a != 0.0) {
            cross.push(times[i - 1] + (times[i] - times[i - 1]) * a / (a - b));
        }
    }
    if cross.len() < 4 {
        return Err(Error::DegenerateFit(format!("{} zero crossings, at least 4 needed", cross.len())));
    }
    let idx: Vec<f64> = (0..cross.len()).map(|j| j as f64).collect();
    let half_period = ls_slope(&idx, &cross);
    Ok(std::f64::consts::PI / half_period)
}

#[derive(Clone, Debug)]
pub struct DispersionRow {
    pub k: f64,
    pub kappa: f64,
    pub measured: f64,
    pub predicted: f64,
    pub rel_error: f64,
}

impl DispersionRow {
    pub fn row(&self) -> Vec<String> {
        [self.k, self.kappa, self.measured, self.predicted, self.rel_error].iter().map(f64::to_string).collect()
    }
}

pub const DISPERSION_HEADER: [&str; 5] = ["k", "kappa", "omega_measured", "omega_predicted", "rel_error"];

fn flat_depth(params: &PhysParams<f64>) -> Result<f64> {
    let b = params.bottom.values();
    if b.iter().any(|&v| v != b[0]) {
        return Err(Error::Invalid("this experiment needs a flat bottom".into()));
    }
    Ok(-b[0])
}

/// Runs `ζ = amplitude cos(k x₁)`, `ψ = 0` for `periods` predicted periods and
/// fits the frequency of the mode amplitude.
pub fn measure_dispersion(
    params: &PhysParams<f64>,
    k: f64,
    amplitude: f64,
    periods: f64,
    dt: Option<f64>,
) -> Result<DispersionRow> {
    let depth = flat_depth(params)?;
    let grid = params.grid();
    let q = k / grid.frequency_step();
    if !(k > 0.0) || (q - q.round()).abs() > 1e-9 {
        return Err(Error::Config(format!("wavenumber {k} is not a positive lattice frequency")));
    }
    let predicted = linear_frequency(k, params.g, params.kappa, depth);
    let t_final = periods * std::f64::consts::TAU / predicted;
    let dt_req = dt.unwrap_or_else(|| params.dt_max().min(t_final / (40.0 * periods)));
    let steps = (t_final / dt_req).ceil() as usize;
    let h = t_final / steps as f64;
    let zeta = ScalarField::from_fn(grid, |x| amplitude * (k * x[0]).cos());
    let mut state = WaveState::new(zeta, ScalarField::zeros(grid), 0.0)?;
    let mut evo = Evolver::new(params.clone());
    let mut times = vec![0.0];
    let mut amps = vec![amplitude];
    for _ in 0..steps {
        state = evo.step(&state, h)?.state;
        times.push(state.t);
        amps.push(mode_amplitude(&state.zeta, k));
    }
    let measured = zero_crossing_frequency(&times, &amps)?;
    Ok(DispersionRow { k, kappa: params.kappa, measured, predicted, rel_error: (measured - predicted).abs() / predicted })
}

#[derive(Clone, Debug)]
pub struct LimitReport {
    /// `(κ, δ(κ))` for every completed run, in the order given.
    pub rows: Vec<(f64, f64)>,
    /// `(κ, message)` for runs that aborted.
    pub aborted: Vec<(f64, String)>,
    pub monotone: bool,
    pub halved: bool,
    /// Least-squares slope of `log δ` against `log κ`.
    pub slope: f64,
}

/// `δ(κ) = |ζ^κ(T) − ζ^0(T)|_{L²} + |ψ^κ(T) − ψ^0(T)|_{L²}` for the given
/// `κ` values (decreasing), all runs sharing one step size. The slope uses
/// the positive entries only.
pub fn zero_kappa_limit(
    initial: &WaveState<f64>,
    params: &PhysParams<f64>,
    kappas: &[f64],
    t_final: f64,
    dt: Option<f64>,
) -> Result<LimitReport> {
    if kappas.is_empty() || kappas.iter().any(|&k| !(k >= 0.0 && k.is_finite())) {
        return Err(Error::Config("limit kappas must be a non-empty list of non-negative values".into()));
    }
    let mut all = vec![0.0];
    all.extend_from_slice(kappas);
    let kmax = kappas.iter().copied().fold(0.0, f64::max);
    let stiff = PhysParams { kappa: kmax, ..params.clone() };
    let dt = dt.unwrap_or_else(|| stiff.dt_max());
    if t_final <= initial.t {
        return Err(Error::Config("limit.t_final must exceed the initial time".into()));
    }
    let runs: Vec<(f64, Result<WaveState<f64>>)> = all
        .par_iter()
        .map(|&kappa| {
            let p = PhysParams { kappa, ..params.clone() };
            let out = simulate(initial, &p, &RunSpec { dt: Some(dt), t_final, snapshot_stride: 0 }).and_then(|tr| {
                match tr.aborted {
                    Some(msg) => Err(Error::Invalid(msg)),
                    None => Ok(tr.snapshots.last().expect("final state").clone()),
                }
            });
            (kappa, out)
        })
        .collect();
    let mut aborted = Vec::new();
    let reference = match &runs[0].1 {
        Ok(s) => s.clone(),
        Err(e) => {
            aborted.push((0.0, e.to_string()));
            return Ok(LimitReport { rows: vec![], aborted, monotone: false, halved: false, slope: f64::NAN });
        }
    };
    let mut rows = Vec::new();
    for (kappa, out) in &runs[1..] {
        match out {
            Ok(s) => {
                let d = (&s.zeta - &reference.zeta).l2_norm() + (&s.psi - &reference.psi).l2_norm();
                rows.push((*kappa, d));
            }
            Err(e) => aborted.push((*kappa, e.to_string())),
        }
    }
    let monotone = aborted.is_empty() && rows.windows(2).all(|w| w[1].1 < w[0].1);
    let halved = aborted.is_empty() && rows.len() >= 2 && rows[rows.len() - 1].1 <= rows[0].1 / 2.0;
    let positive: Vec<&(f64, f64)> = rows.iter().filter(|r| r.0 > 0.0).collect();
    let slope = if positive.len() >= 2 {
        let xs: Vec<f64> = positive.iter().map(|r| r.0.ln()).collect();
        let ys: Vec<f64> = positive.iter().map(|r| r.1.max(f64::MIN_POSITIVE).ln()).collect();
        ls_slope(&xs, &ys)
    } else {
        f64::NAN
    };
    Ok(LimitReport { rows, aborted, monotone, halved, slope })
}

/// Linearization-consistency measurement.
#[derive(Clone, Debug)]
pub struct ConsistencyReport {
    pub eps: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
}

/// Compares `Φ(Ū + εV₀) − Φ(Ū)` with `ε V(T)` in the original unknowns; the
/// reference is sampled every `dt` and the linear solver steps `2 dt`.
pub fn linearization_consistency(
    initial: &WaveState<f64>,
    params: &PhysParams<f64>,
    v0: (&ScalarField<f64>, &ScalarField<f64>),
    t_final: f64,
    dt: f64,
    eps: &[f64],
) -> Result<ConsistencyReport> {
    let spec = RunSpec { dt: Some(dt), t_final, snapshot_stride: 1 };
    let reference = simulate(initial, params, &spec)?;
    if let Some(msg) = reference.aborted {
        return Err(Error::Invalid(format!("reference run aborted: {msg}")));
    }
    let coeffs = build_coeffs(&reference.snapshots, params)?;
    let lin0 = LinState { v1: v0.0.clone(), v2: v0.1.clone(), t: initial.t };
    let lin = solve_linearized(&lin0, None, &coeffs, t_final, 2.0 * dt)?;
    let lin_t = lin.last().expect("final linear state");
    let ubar = reference.snapshots.last().expect("final reference state");
    let z0 = coeffs.z_at(initial.t);
    let z_t = coeffs.z_at(t_final);
    let dz_lin = lin_t.v1.clone();
    let dpsi_lin = &lin_t.v2 + &(&z_t * &lin_t.v1);
    let errors: Vec<f64> = eps
        .par_iter()
        .map(|&e| -> Result<f64> {
            let zeta = initial.zeta.add_scaled(v0.0, e);
            let psi = &initial.psi + &(&(v0.1 + &(&z0 * v0.0))).scale(e);
            let pert = WaveState::new(zeta, psi, initial.t)?;
            let run = simulate(&pert, params, &RunSpec { dt: Some(dt), t_final, snapshot_stride: 0 })?;
            if let Some(msg) = run.aborted {
                return Err(Error::Invalid(format!("perturbed run aborted: {msg}")));
            }
            let u = run.snapshots.last().expect("final state");
            let ez = (&(&u.zeta - &ubar.zeta) - &dz_lin.scale(e)).l2_norm();
            let ep = (&(&u.psi - &ubar.psi) - &dpsi_lin.scale(e)).l2_norm();
            Ok(ez + ep)
        })
        .collect::<Result<_>>()?;
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    Ok(ConsistencyReport { eps: eps.to_vec(), errors, slope: ls_slope(&xs, &ys) })
}

/// Energy history of a source-free linear run.
#[derive(Clone, Debug)]
pub struct EnergyRun {
    pub times: Vec<f64>,
    pub e0: Vec<f64>,
    pub e1: Vec<f64>,
    pub fit: GronwallFit<f64>,
}

/// Solves the linearized system from `v0` over the coefficient range and
/// records `E₀`, `E₁` every `stride` linear steps.
pub fn energy_run(coeffs: &LinCoeffs<f64>, v0: &LinState<f64>, dt: f64, stride: usize) -> Result<EnergyRun> {
    let (_, t1) = coeffs.t_range();
    let states = solve_linearized(v0, None, coeffs, t1, dt)?;
    let picked: Vec<&LinState<f64>> = states.iter().step_by(stride.max(1)).collect();
    let energies: Vec<(f64, f64, f64)> = picked
        .par_iter()
        .map(|s| Ok((s.t, energy_functional(s, coeffs, s.t, 0)?, energy_functional(s, coeffs, s.t, 1)?)))
        .collect::<Result<_>>()?;
    let times: Vec<f64> = energies.iter().map(|e| e.0).collect();
    let e0: Vec<f64> = energies.iter().map(|e| e.1).collect();
    let e1: Vec<f64> = energies.iter().map(|e| e.2).collect();
    let fit = fit_gronwall(&times, &e0);
    Ok(EnergyRun { times, e0, e1, fit })
}

/// Test shapes for the property suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeKind {
    Flat,
    Wavy,
    Random,
}

impl std::str::FromStr for ShapeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "flat" => Ok(Self::Flat),
            "wavy" => Ok(Self::Wavy),
            "random" => Ok(Self::Random),
            other => Err(Error::Config(format!("unknown shape `{other}` (flat | wavy | random)"))),
        }
    }
}

/// Top surface over a bottom at depth 1 (`h0 = 1/2`); random shapes are
/// smooth sums of low modes with the given amplitude.
pub fn test_shape(grid: &TorusGrid<f64>, kind: ShapeKind, amplitude: f64, seed: u64) -> Result<DomainShape<f64>> {
    let a = match kind {
        ShapeKind::Flat => ScalarField::zeros(grid),
        ShapeKind::Wavy if grid.dim() == 1 => {
            ScalarField::from_fn(grid, |x| amplitude * (x[0].cos() + 0.25 * (2.0 * x[0]).sin()))
        }
        ShapeKind::Wavy => ScalarField::from_fn(grid, |x| amplitude * ((x[0] + x[1]).cos() + 0.6 * x[1].sin())),
        ShapeKind::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = random_band_field(grid, 0, 3, &mut rng);
            let m = f.max_abs().max(1e-300);
            f.scale(amplitude / m)
        }
    };
    DomainShape::new(a, ScalarField::constant(grid, -1.0), 0.5)
}

/// Self-adjointness defect `max |(Gf,g)−(f,Gg)| / (|f|_{H¹}|g|_{H¹})` and the
/// minimum of `(Gf,f)` over random band-limited pairs.
pub fn symmetry_and_positivity(backend: &DnoBackend<f64>, pairs: usize, high: usize, seed: u64) -> Result<(f64, f64)> {
    let grid = backend.shape().grid().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fields: Vec<(ScalarField<f64>, ScalarField<f64>)> = (0..pairs)
        .map(|_| (random_band_field(&grid, 0, high, &mut rng), random_band_field(&grid, 0, high, &mut rng)))
        .collect();
    let out: Vec<(f64, f64)> = fields
        .par_iter()
        .map(|(f, g)| {
            let gf = backend.apply(f)?;
            let gg = backend.apply(g)?;
            let defect = (gf.dot(g) - f.dot(&gg)).abs() / (sobolev_norm(f, 1.0) * sobolev_norm(g, 1.0));
            Ok((defect, gf.dot(f).min(gg.dot(g))))
        })
        .collect::<Result<_>>()?;
    Ok(out.iter().fold((0.0f64, f64::INFINITY), |(d, p), &(a, b)| (d.max(a), p.min(b))))
}

/// Measured orders of `R_a = G − Op(g_a)` and of `G`.
pub fn remainder_orders(backend: &DnoBackend<f64>, freqs: Vec<f64>) -> Result<(f64, f64)> {
    let probe = OrderProbe::standard(backend.shape().grid(), freqs)?;
    let r = measure_order(|f| remainder_apply(backend, f), &probe)?;
    let g = measure_order(|f| backend.apply(f), &probe)?;
    Ok((r.slope, g.slope))
}

/// Measured orders of `[σGσ, Λ_a]` and `[σGσ, Λ_a²]`.
pub fn commutator_orders(backend: &DnoBackend<f64>, freqs: Vec<f64>) -> Result<(f64, f64)> {
    let a = backend.shape().top().clone();
    let sig = sigma_weight(&a);
    let sgs = |f: &ScalarField<f64>| -> Result<ScalarField<f64>> { Ok(&sig * &backend.apply(&(&sig * f))?) };
    let lam = |f: &ScalarField<f64>| lambda_a_apply(&a, f);
    let lam2 = |f: &ScalarField<f64>| lambda_a_apply(&a, &lambda_a_apply(&a, f));
    let probe = OrderProbe::standard(&a.grid().clone(), freqs)?;
    let c1 = measure_order(|f| Ok(&sgs(&lam(f))? - &lam(&sgs(f)?)), &probe)?;
    let c2 = measure_order(|f| Ok(&sgs(&lam2(f))? - &lam2(&sgs(f)?)), &probe)?;
    Ok((c1.slope, c2.slope))
}

/// `max |{σ_a g_a σ_a, λ_a}₁|` relative to the largest first-order term of
/// `σ_a g_a σ_a ♯₁ λ_a`.
pub fn principal_bracket_defect(a: &ScalarField<f64>) -> Result<f64> {
    let s1 = weighted_principal_symbol(a);
    let s2 = lambda_symbol(a);
    let br = poisson_bracket(&s1, &s2, 1)?.tabulate();
    let prod = sharp_product(&s1, &s2, 1)?.tabulate();
    let (v1, v2) = (s1.tabulate(), s2.tabulate());
    let scale = prod.iter().zip(v1.iter().zip(&v2)).fold(0.0f64, |m, (p, (x, y))| m.max((p - x * y).norm()));
    let scale = scale.max(v1.iter().zip(&v2).fold(0.0f64, |m, (x, y)| m.max((x * y).norm())) * 1e-3);
    Ok(br.iter().fold(0.0f64, |m, z| m.max(z.norm())) / scale)
}

/// Measured order of `𝒫_a + Λ_a`.
pub fn p_a_order(a: &ScalarField<f64>, freqs: Vec<f64>) -> Result<f64> {
    let probe = OrderProbe::standard(a.grid(), freqs)?;
    Ok(measure_order(|f| Ok(&p_a_apply(a, f) + &lambda_a_apply(a, f)), &probe)?.slope)
}

/// Default probe frequencies: up to four doublings below the dealiasing cutoff.
pub fn probe_frequencies(grid: &TorusGrid<f64>) -> Vec<f64> {
    let cut = grid.dealias_cutoff() as f64 * grid.frequency_step();
    let mut f: Vec<f64> = [4.0, 8.0, 16.0, 32.0].iter().copied().filter(|&l| l <= cut).collect();
    if f.len() < 3 {
        f = vec![cut / 4.0, cut / 2.0, cut].into_iter().map(|l: f64| l.floor().max(1.0)).collect();
        f.dedup();
    }
    f
}

/// DN-operator properties on one shape.
pub fn dno_suite(shape: &DomainShape<f64>, m: usize, seed: u64) -> Result<Vec<Property>> {
    let grid = shape.grid().clone();
    let s = StripSampling::new(&grid, m)?;
    let backend = DnoBackend::new(DnoMode::Exact, shape, &s)?;
    let mut out = Vec::new();
    let (defect, pos) = symmetry_and_positivity(&backend, 20, (grid.n() / 6).max(2), seed)?;
    out.push(Property::at_most("dno.self_adjoint_defect", defect, 1e-8));
    out.push(Property::at_least("dno.positivity_min", pos, -1e-10));
    if grid.dim() == 1 {
        // in one dimension g_a(X, ξ) = |ξ| exactly
        let sym = backend.symbol().tabulate();
        let mut dev = 0.0f64;
        for (k, v) in sym.iter().enumerate() {
            let idx = k % grid.len();
            let xi = grid.xi(idx)[0].abs();
            dev = dev.max((v.re - xi).abs() + v.im.abs());
        }
        out.push(Property::at_most("dno.principal_symbol_is_abs_xi", dev, 1e-12));
    }
    if shape.top().max_abs() == 0.0 && shape.bottom().values().iter().all(|&b| b == -1.0) {
        let mut worst = 0.0f64;
        for k in [1.0, 2.0, 4.0] {
            let f = ScalarField::from_fn(&grid, |x| (k * x[0]).cos());
            let e = (&backend.apply(&f)? - &f.scale(k * f64::tanh(k))).l2_norm() / f.l2_norm();
            worst = worst.max(e);
        }
        out.push(Property::at_most("dno.flat_oracle_rel_error", worst, 1e-4));
    } else {
        let (r, g) = remainder_orders(&backend, probe_frequencies(&grid))?;
        out.push(Property::at_most("dno.remainder_order", r, 0.3));
        out.push(Property::at_most("dno.order_deviation", (g - 1.0).abs(), 0.1));
    }
    Ok(out)
}

/// Symbol-calculus properties on one shape.
pub fn orders_suite(shape: &DomainShape<f64>, m: usize, seed: u64) -> Result<Vec<Property>> {
    let grid = shape.grid().clone();
    let a = shape.top();
    let mut out = Vec::new();
    let freqs = probe_frequencies(&grid);
    if a.max_abs() > 0.0 {
        let s = StripSampling::new(&grid, m)?;
        let backend = DnoBackend::new(DnoMode::Exact, shape, &s)?;
        let (c1, c2) = commutator_orders(&backend, freqs.clone())?;
        out.push(Property::at_most("orders.commutator_lambda", c1, 1.2));
        out.push(Property::at_most("orders.commutator_lambda_squared", c2, 3.2));
        out.push(Property::at_most("orders.p_a_plus_lambda_a", p_a_order(a, freqs)?, 1.15));
    }
    if grid.dim() == 2 {
        out.push(Property::at_most("orders.principal_bracket", principal_bracket_defect(a)?, 1e-10));
    }
    let c = coercivity(a, 10, 2, grid.n() / 3, seed);
    out.push(Property::at_least("orders.lambda_coercivity", c, 1e-3));
    Ok(out)
}

/// Small-amplitude single-mode reference over a flat bottom.
pub fn solving_reference(
    params: &PhysParams<f64>,
    amplitude: f64,
    t_final: f64,
    dt: f64,
) -> Result<Vec<WaveState<f64>>> {
    let g = params.grid();
    let zeta = ScalarField::from_fn(g, |x| {
        let mut v = x[0].cos();
        if g.dim() == 2 {
            v += 0.5 * x[1].cos();
        }
        amplitude * v
    });
    let init = WaveState::new(zeta, ScalarField::zeros(g), 0.0)?;
    let tr = simulate(&init, params, &RunSpec { dt: Some(dt), t_final, snapshot_stride: 1 })?;
    if let Some(msg) = tr.aborted {
        return Err(Error::Invalid(format!("reference run aborted: {msg}")));
    }
    Ok(tr.snapshots)
}

/// Lévy condition, energy envelope and energy equivalence on a reference run.
pub fn linear_suite(params: &PhysParams<f64>, amplitude: f64, seed: u64) -> Result<(Vec<Property>, EnergyRun)> {
    let dt = (0.5 * params.dt_max()).min(0.05);
    let frames = solving_reference(params, amplitude, 2.0, dt)?;
    let coeffs = build_coeffs(&frames, params)?;
    let mut out = Vec::new();
    let (min_a, holds) = check_levy(&coeffs, 0.5 * params.g);
    out.push(Property { name: "linear.levy_min_a".into(), value: min_a, threshold: 0.5 * params.g, pass: holds });
    let grid = params.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let v0 = LinState {
        v1: random_band_field(grid, 0, 4, &mut rng).scale(0.1),
        v2: random_band_field(grid, 0, 4, &mut rng).scale(0.1),
        t: 0.0,
    };
    let run = energy_run(&coeffs, &v0, 2.0 * dt, 1)?;
    out.push(Property {
        name: "linear.gronwall_lambda".into(),
        value: run.fit.lambda,
        threshold: 2.0 * run.fit.lambda_first_half + 0.1,
        pass: !run.fit.super_exponential && run.fit.lambda.is_finite(),
    });
    let (c1, c2) = equivalence_constants(&coeffs, 0.0, 10, 2, grid.n() / 3, seed)?;
    out.push(Property::at_most("linear.equivalence_ratio", c2 / c1, 1e4));
    Ok((out, run))
}

/// Pressure-problem trace against `ā` on a reference run (flat bottom).
pub fn taylor_suite(params: &PhysParams<f64>, amplitude: f64) -> Result<(Vec<Property>, ScalarField<f64>, ScalarField<f64>)> {
    let dt = (0.5 * params.dt_max()).min(0.02);
    let frames = if amplitude == 0.0 {
        let rest = WaveState::rest(params.grid());
        (0..3).map(|k| WaveState { t: k as f64 * dt, ..rest.clone() }).collect()
    } else {
        solving_reference(params, amplitude, 10.0 * dt, dt)?
    };
    let mid = frames.len() / 2;
    let coeffs = build_coeffs(&frames, params)?;
    let fine_params = PhysParams { sampling: StripSampling::new(params.grid(), 2 * params.sampling.m())?, ..params.clone() };
    let fine = build_coeffs(&frames, &fine_params)?;
    let coarse = taylor_check(&coeffs, mid, 1e-3)?;
    let refined = taylor_check(&fine, mid, 1e-3)?;
    let disc = (&coarse.trace - &refined.trace).max_abs();
    let tol = (1e-3f64).max(10.0 * disc);
    let diff = (&coarse.trace - &coarse.a_formula).max_abs();
    let mut out = vec![Property::at_most("taylor.trace_vs_a", diff, tol)];
    out.push(Property::at_least("taylor.trace_min", coarse.trace.min(), 0.5 * params.g));
    Ok((out, coarse.trace, coarse.a_formula))
}
