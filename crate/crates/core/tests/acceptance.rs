//! Acceptance suite: thirteen criteria, one PASS/FAIL line each.
//! Runs without the libtest harness so the report is always printed.

use std::time::Instant;

use capstrip::calculus::coercivity;
use capstrip::dno::{DnoBackend, DnoMode};
use capstrip::evolution::{linear_frequency, simulate, PhysParams, RunSpec, WaveState};
use capstrip::experiments::{
    commutator_orders, linear_suite, linearization_consistency, measure_dispersion, p_a_order, principal_bracket_defect,
    remainder_orders, symmetry_and_positivity, taylor_suite, test_shape, zero_kappa_limit, ShapeKind,
};
use capstrip::geometry::{DomainShape, StripSampling};
use capstrip::linearized::{solve_linearized, LinCoeffs, LinState};
use capstrip::spectral::{ScalarField, TorusGrid};
use capstrip::Result;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn grid(d: usize, n: usize) -> TorusGrid<f64> {
    TorusGrid::periodic(d, n).unwrap()
}

fn wavy_1d(g: &TorusGrid<f64>) -> DomainShape<f64> {
    let a = ScalarField::from_fn(g, |x| 0.2 * x[0].cos() + 0.05 * (2.0 * x[0]).sin());
    let b = ScalarField::from_fn(g, |x| -1.0 + 0.1 * x[0].sin());
    DomainShape::new(a, b, 0.3).unwrap()
}

fn wavy_2d(g: &TorusGrid<f64>) -> DomainShape<f64> {
    let a = ScalarField::from_fn(g, |x| 0.15 * (x[0] + x[1]).cos() + 0.1 * x[1].sin());
    DomainShape::new(a, ScalarField::constant(g, -1.0), 0.5).unwrap()
}

fn second_2d(g: &TorusGrid<f64>) -> DomainShape<f64> {
    let a = ScalarField::from_fn(g, |x| 0.1 * (2.0 * x[0]).sin() * x[1].cos() + 0.08 * x[0].cos());
    let b = ScalarField::from_fn(g, |x| -1.0 + 0.1 * (x[0] - x[1]).cos());
    DomainShape::new(a, b, 0.3).unwrap()
}

fn backend(shape: &DomainShape<f64>, m: usize) -> DnoBackend<f64> {
    DnoBackend::new(DnoMode::Exact, shape, &StripSampling::new(shape.grid(), m).unwrap()).unwrap()
}

fn flat_oracle() -> Result<Outcome> {
    let g = grid(1, 128);
    let flat = DomainShape::flat(&g, 1.0)?;
    let mut errs = Vec::new();
    for m in [16, 32, 64] {
        let b = backend(&flat, m);
        let mut worst = 0.0f64;
        for k in [1.0, 2.0, 4.0] {
            let f = ScalarField::from_fn(&g, |x| (k * x[0]).cos());
            worst = worst.max((&b.apply(&f)? - &f.scale(k * f64::tanh(k))).l2_norm() / f.l2_norm());
        }
        errs.push(worst);
    }
    let slope = (errs[0] / errs[2]).log2() / 2.0;
    outcome(errs[2] <= 1e-4 && slope >= 1.9, format!("max rel error {:.2e} at M=64 (<= 1e-4), M-slope {slope:.3} (>= 1.9)", errs[2]))
}

fn self_adjoint() -> Result<Outcome> {
    let g1 = grid(1, 128);
    let g2 = grid(2, 48);
    let cases = [
        ("flat", backend(&DomainShape::flat(&g1, 1.0)?, 64), 21),
        ("wavy d=1", backend(&wavy_1d(&g1), 64), 21),
        ("wavy d=2", backend(&wavy_2d(&g2), 32), 8),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (i, (name, b, high)) in cases.iter().enumerate() {
        let (defect, pos) = symmetry_and_positivity(b, 20, *high, 100 + i as u64)?;
        pass &= defect <= 1e-8 && pos >= -1e-10;
        parts.push(format!("{name}: defect {defect:.1e} min (Gf,f) {pos:.2e}"));
    }
    outcome(pass, parts.join("; "))
}

fn remainder_order() -> Result<Outcome> {
    let g = grid(1, 128);
    let second = {
        let a = ScalarField::from_fn(&g, |x| 0.15 * (3.0 * x[0]).cos() - 0.1 * x[0].sin());
        DomainShape::new(a, ScalarField::constant(&g, -1.0), 0.5)?
    };
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, shape) in [("wavy", wavy_1d(&g)), ("second", second)] {
        let (r, o) = remainder_orders(&backend(&shape, 64), vec![4.0, 8.0, 16.0, 32.0])?;
        pass &= r <= 0.3 && (0.9..=1.1).contains(&o);
        parts.push(format!("{name}: R order {r:.2}, G order {o:.4}"));
    }
    outcome(pass, parts.join("; "))
}

fn commutators() -> Result<Outcome> {
    let g = grid(2, 48);
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, shape) in [("wavy", wavy_2d(&g)), ("second", second_2d(&g))] {
        let (c1, c2) = commutator_orders(&backend(&shape, 32), vec![4.0, 8.0, 12.0, 16.0])?;
        pass &= c1 <= 1.2 && c2 <= 3.2;
        parts.push(format!("{name}: [sGs,L] {c1:.3} (<= 1.2), [sGs,L^2] {c2:.3} (<= 3.2)"));
    }
    outcome(pass, parts.join("; "))
}

fn principal_cancellation() -> Result<Outcome> {
    // λ_a is not band-limited; its lattice x-derivatives need the finer grid
    let g = grid(2, 64);
    let mut worst = 0.0f64;
    for shape in [wavy_2d(&g), second_2d(&g)] {
        worst = worst.max(principal_bracket_defect(shape.top())?);
    }
    outcome(worst <= 1e-10, format!("relative bracket {worst:.2e} (<= 1e-10), n = 64"))
}

fn p_a_identity() -> Result<Outcome> {
    let g1 = grid(1, 128);
    let g2 = grid(2, 48);
    let o1 = p_a_order(wavy_1d(&g1).top(), vec![4.0, 8.0, 16.0, 32.0])?;
    let o2 = p_a_order(wavy_2d(&g2).top(), vec![4.0, 8.0, 12.0, 16.0])?;
    outcome(o1 <= 1.15 && o2 <= 1.15, format!("order of P_a + L_a: d=1 {o1:.3}, d=2 {o2:.3} (<= 1.15)"))
}

fn lambda_coercivity() -> Result<Outcome> {
    let g1 = grid(1, 128);
    let g2 = grid(2, 48);
    let shapes = [wavy_1d(&g1), test_shape(&g1, ShapeKind::Random, 0.2, 5)?, wavy_2d(&g2), second_2d(&g2)];
    let cs: Vec<f64> =
        shapes.iter().map(|s| coercivity(s.top(), 20, 2, s.grid().n() / 3, 17)).collect();
    let min = cs.iter().copied().fold(f64::INFINITY, f64::min);
    outcome(min > 1e-3, format!("constants {:?} (min > 1e-3)", cs.iter().map(|c| format!("{c:.3}")).collect::<Vec<_>>()))
}

fn conservation() -> Result<Outcome> {
    let g = grid(1, 128);
    let p = PhysParams::flat(&g, 64, 1.0, 1.0, 0.0)?;
    let t_final = 10.0 * std::f64::consts::TAU / linear_frequency(1.0, 1.0, 0.0, 1.0);
    let dt = t_final / (t_final / 0.04).round();
    let mut drifts = Vec::new();
    let mut mass = 0.0f64;
    let mut parts = Vec::new();
    for eps in [1e-3, 0.05] {
        let init = WaveState::new(ScalarField::from_fn(&g, |x| eps * x[0].cos()), ScalarField::zeros(&g), 0.0)?;
        let tr = simulate(&init, &p, &RunSpec { dt: Some(dt), t_final, snapshot_stride: 0 })?;
        assert!(tr.aborted.is_none());
        drifts.push(tr.hamiltonian_drift());
        mass = mass.max(tr.mass_drift());
    }
    parts.push(format!("H drift {:.1e} (eps 1e-3, <= 1e-6), {:.1e} (eps 0.05, <= 1e-4), mass {mass:.1e}", drifts[0], drifts[1]));

    // temporal self-convergence
    let g = grid(1, 64);
    let p = PhysParams::flat(&g, 32, 1.0, 1.0, 0.0)?;
    let init = WaveState::new(
        ScalarField::from_fn(&g, |x| 0.05 * x[0].cos() + 0.02 * (2.0 * x[0]).sin()),
        ScalarField::zeros(&g),
        0.0,
    )?;
    let finals: Vec<WaveState<f64>> = [0.1, 0.05, 0.025]
        .iter()
        .map(|&dt| simulate(&init, &p, &RunSpec { dt: Some(dt), t_final: 2.0, snapshot_stride: 0 }).map(|t| t.last().unwrap().clone()))
        .collect::<Result<_>>()?;
    let diff = |a: &WaveState<f64>, b: &WaveState<f64>| (&a.zeta - &b.zeta).l2_norm() + (&a.psi - &b.psi).l2_norm();
    let slope = (diff(&finals[0], &finals[1]) / diff(&finals[1], &finals[2])).log2();
    parts.push(format!("RK4 slope {slope:.2} (>= 3.7)"));
    outcome(drifts[0] <= 1e-6 && drifts[1] <= 1e-4 && mass <= 1e-10 && slope >= 3.7, parts.join("; "))
}

fn dispersion() -> Result<Outcome> {
    let g = grid(1, 128);
    let mut worst = 0.0f64;
    for kappa in [0.0, 0.1] {
        let p = PhysParams::flat(&g, 64, 1.0, 1.0, kappa)?;
        for k in [1.0, 2.0, 3.0] {
            worst = worst.max(measure_dispersion(&p, k, 1e-4, 3.0, None)?.rel_error);
        }
    }
    outcome(worst <= 1e-2, format!("max relative frequency error {worst:.2e} (<= 1e-2)"))
}

fn linear_solver() -> Result<Outcome> {
    let g = grid(1, 16);
    let p = PhysParams::flat(&g, 512, 1.0, 1.0, 0.1)?;
    let c = LinCoeffs::frozen(&WaveState::rest(&g), &p)?;
    let (k, kappa) = (2.0, 0.1);
    let w = linear_frequency(k, 1.0, kappa, 1.0);
    let period = std::f64::consts::TAU / w;
    let v0 = LinState { v1: ScalarField::from_fn(&g, |x| (k * x[0]).cos()), v2: ScalarField::zeros(&g), t: 0.0 };
    let states = solve_linearized(&v0, None, &c, period, period / 400.0)?;
    // V₁ = cos(kx) cos(ωt), V₂ = -(ω / (k tanh k)) cos(kx) sin(ωt)
    let amp2 = -w / (k * k.tanh());
    let mut err = 0.0f64;
    for s in &states {
        let e1 = ScalarField::from_fn(&g, |x| (k * x[0]).cos() * (w * s.t).cos());
        let e2 = ScalarField::from_fn(&g, |x| amp2 * (k * x[0]).cos() * (w * s.t).sin());
        err = err.max((&s.v1 - &e1).max_abs()).max((&s.v2 - &e2).max_abs());
    }

    let g = grid(1, 64);
    let p = PhysParams::flat(&g, 32, 1.0, 1.0, 0.01)?;
    let init = WaveState::new(ScalarField::from_fn(&g, |x| 0.05 * x[0].cos()), ScalarField::zeros(&g), 0.0)?;
    let v1 = ScalarField::from_fn(&g, |x| (2.0 * x[0]).cos());
    let v2 = ScalarField::from_fn(&g, |x| 0.5 * x[0].sin());
    let rep = linearization_consistency(&init, &p, (&v1, &v2), 2.0, 0.02, &[4e-3, 2e-3, 1e-3, 5e-4])?;
    outcome(
        err <= 1e-6 && rep.slope >= 1.8,
        format!("frozen flat max error {err:.2e} (<= 1e-6), consistency slope {:.3} (>= 1.8)", rep.slope),
    )
}

fn energy() -> Result<Outcome> {
    let g = grid(1, 64);
    let flat = PhysParams::flat(&g, 32, 1.0, 1.0, 0.01)?;
    let bottom = ScalarField::from_fn(&g, |x| -1.0 + 0.15 * x[0].cos());
    let wavy = PhysParams::new(1.0, 0.01, bottom, 0.3, StripSampling::new(&g, 32)?)?;
    let mut pass = true;
    let mut parts = Vec::new();
    for (name, p) in [("flat bottom", flat), ("wavy bottom", wavy)] {
        let (props, run) = linear_suite(&p, 0.05, 9)?;
        let ratio = props.iter().find(|q| q.name == "linear.equivalence_ratio").unwrap().value;
        pass &= ratio < 1e4 && !run.fit.super_exponential;
        parts.push(format!(
            "{name}: c2/c1 {ratio:.3}, lambda {:.3} (first half {:.3})",
            run.fit.lambda, run.fit.lambda_first_half
        ));
    }
    outcome(pass, parts.join("; "))
}

fn levy_taylor() -> Result<Outcome> {
    let g = grid(1, 128);
    let mut pass = true;
    let mut parts = Vec::new();
    for kappa in [0.0, 1e-2] {
        let p = PhysParams::flat(&g, 64, 1.0, 1.0, kappa)?;
        let (props, trace, a) = taylor_suite(&p, 0.01)?;
        pass &= props.iter().all(|q| q.pass);
        parts.push(format!(
            "kappa {kappa}: |trace - a| {:.1e} (<= {:.1e}), min trace {:.4} (>= 0.5)",
            (&trace - &a).max_abs(),
            props[0].threshold,
            trace.min()
        ));
    }
    outcome(pass, parts.join("; "))
}

fn zero_kappa() -> Result<Outcome> {
    let g = grid(1, 64);
    let p = PhysParams::flat(&g, 32, 1.0, 1.0, 0.0)?;
    let kappas = [1e-2, 2.5e-3, 6.25e-4];
    let mut pass = true;
    let mut parts = Vec::new();
    for (eps, check_slope) in [(1e-3, true), (0.05, false)] {
        let init = WaveState::new(ScalarField::from_fn(&g, |x| eps * x[0].cos()), ScalarField::zeros(&g), 0.0)?;
        let rep = zero_kappa_limit(&init, &p, &kappas, 10.0, None)?;
        pass &= rep.aborted.is_empty() && rep.monotone && rep.halved && (!check_slope || rep.slope >= 0.9);
        parts.push(format!(
            "eps {eps}: delta {:?}, slope {:.3}",
            rep.rows.iter().map(|r| format!("{:.2e}", r.1)).collect::<Vec<_>>(),
            rep.slope
        ));
    }
    outcome(pass, parts.join("; "))
}

type Criterion = (&'static str, fn() -> Result<Outcome>);

fn main() {
    let criteria: [Criterion; 13] = [
        ("DN flat-strip oracle", flat_oracle),
        ("DN self-adjointness and positivity", self_adjoint),
        ("remainder order", remainder_order),
        ("commutator order reduction", commutators),
        ("principal cancellation", principal_cancellation),
        ("P_a identity", p_a_identity),
        ("Lambda_a coercivity", lambda_coercivity),
        ("nonlinear conservation", conservation),
        ("dispersion", dispersion),
        ("linearized solver", linear_solver),
        ("energy functional", energy),
        ("Levy/Taylor", levy_taylor),
        ("zero surface tension limit", zero_kappa),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let start = Instant::now();
    let results: Vec<Option<(Result<Outcome>, f64)>> = std::thread::scope(|s| {
        let handles: Vec<_> = criteria
            .iter()
            .enumerate()
            .map(|(i, (name, f))| {
                let wanted = filter.is_empty() || filter.iter().any(|w| name.contains(w.as_str()) || *w == (i + 1).to_string());
                wanted.then(|| {
                    s.spawn(move || {
                        let t = Instant::now();
                        let r = std::panic::catch_unwind(f).unwrap_or_else(|_| {
                            Err(capstrip::Error::Invalid("panicked".into()))
                        });
                        (r, t.elapsed().as_secs_f64())
                    })
                })
            })
            .collect();
        handles.into_iter().map(|h| h.map(|h| h.join().expect("criterion thread"))).collect()
    });
    let mut failed = 0;
    for (i, ((name, _), res)) in criteria.iter().zip(results).enumerate() {
        let Some((res, secs)) = res else { continue };
        match res {
            Ok(o) => {
                if !o.pass {
                    failed += 1;
                }
                println!("[{}] {:>2}. {name}: {} ({secs:.1}s)", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
            }
            Err(e) => {
                failed += 1;
                println!("[FAIL] {:>2}. {name}: error: {e} ({secs:.1}s)", i + 1);
            }
        }
    }
    println!("acceptance: {} failed, total {:.1}s", failed, start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
