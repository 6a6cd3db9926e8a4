//! `capstrip`: simulations, experiments and property suites.
//!
//! Exit codes: 0 ok, 1 configuration error, 2 aborted run, 3 property failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};

use capstrip::dno::DnoMode;
use capstrip::evolution::{simulate, PhysParams, WaveState};
use capstrip::experiments::{
    dno_suite, linear_suite, measure_dispersion, orders_suite, taylor_suite, test_shape, zero_kappa_limit, Property,
    ShapeKind, DISPERSION_HEADER, PROPERTY_HEADER,
};
use capstrip::io::{write_csv, write_field, write_manifest, Config, RunConfig};
use capstrip::Error;

#[derive(Parser, Debug)]
#[command(name = "capstrip", version, about = "Capillary-gravity water waves on a flattened strip")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; the CAPSTRIP_OUT environment variable takes precedence.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Seed for random shapes and fields.
    #[arg(long, global = true, default_value_t = 1)]
    seed: u64,
    /// Dirichlet-Neumann backend used by the evolution.
    #[arg(long, global = true, value_enum)]
    backend: Option<Backend>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Backend {
    Exact,
    Symbol,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Run the nonlinear evolution and write diagnostics and snapshots.
    Simulate,
    /// Measure linear frequencies of single modes.
    Dispersion,
    /// Compare runs with decreasing surface tension against zero surface tension.
    Limit,
    /// Dirichlet-Neumann operator properties on the configured shape.
    Dno,
    /// Operator-order and symbol-calculus properties on the configured shape.
    Orders,
    /// Linearized system: Lévy condition, energy envelope and equivalence.
    Linear,
    /// Pressure-problem trace against the time-derivative formula.
    Taylor,
    /// All property suites on the flat shape.
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Dispersion => "dispersion",
            Command::Limit => "limit",
            Command::Dno => "dno",
            Command::Orders => "orders",
            Command::Linear => "linear",
            Command::Taylor => "taylor",
            Command::Selftest => "selftest",
        }
    }
}

/// Failure classes mapped onto the exit-code contract.
enum Failure {
    Config(String),
    Aborted(String),
    Property(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Aborted(_) => 2,
            Failure::Property(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Config(m) | Failure::Aborted(m) | Failure::Property(m) => m,
        }
    }
}

fn config_err(e: Error) -> Failure {
    Failure::Config(e.to_string())
}

fn run_err(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::Inadmissible(_) | Error::InvalidGrid(_) | Error::StepTooLarge { .. } => {
            Failure::Config(e.to_string())
        }
        other => Failure::Aborted(other.to_string()),
    }
}

fn suite_err(e: Error) -> Failure {
    match e {
        Error::Config(_) | Error::InvalidGrid(_) => Failure::Config(e.to_string()),
        other => Failure::Property(other.to_string()),
    }
}

fn io_err(e: impl std::fmt::Display) -> Failure {
    Failure::Aborted(format!("writing output: {e}"))
}

struct Ctx {
    cfg: RunConfig,
    out: PathBuf,
    seed: u64,
    command: Command,
    started: Instant,
}

impl Ctx {
    fn params(&self) -> Result<PhysParams<f64>, Failure> {
        self.cfg.params().map_err(config_err)
    }

    fn manifest(&self, extra: &[(&str, f64)]) -> Result<(), Failure> {
        let grid = format!("d={} n={} L={} M={}", self.cfg.dim, self.cfg.n, self.cfg.length, self.cfg.m);
        let mut timings = vec![("total_seconds", self.started.elapsed().as_secs_f64())];
        timings.extend_from_slice(extra);
        write_manifest(&self.out, self.command.name(), &self.cfg.raw, &grid, &timings).map_err(io_err)
    }

    fn properties(&self, props: &[Property]) -> Result<(), Failure> {
        let rows: Vec<Vec<String>> = props.iter().map(Property::row).collect();
        write_csv(&self.out.join("properties.csv"), &PROPERTY_HEADER, &rows).map_err(io_err)?;
        self.manifest(&[])?;
        for p in props {
            println!("{} {} measured={:e} threshold={:e}", if p.pass { "PASS" } else { "FAIL" }, p.name, p.value, p.threshold);
        }
        let failed: Vec<&str> = props.iter().filter(|p| !p.pass).map(|p| p.name.as_str()).collect();
        if failed.is_empty() {
            Ok(())
        } else {
            Err(Failure::Property(format!("failed properties: {}", failed.join(", "))))
        }
    }

    fn shape_kind(&self) -> Result<ShapeKind, Failure> {
        self.cfg.raw.str_or("shape.kind", "wavy").parse().map_err(config_err)
    }

    fn shape_amplitude(&self) -> Result<f64, Failure> {
        self.cfg.raw.f64_or("shape.amplitude", 0.1).map_err(config_err)
    }
}

fn cmd_simulate(ctx: &Ctx) -> Result<(), Failure> {
    let params = ctx.params()?;
    let init = ctx.cfg.initial_state(&params).map_err(config_err)?;
    let traj = simulate(&init, &params, &ctx.cfg.run_spec()).map_err(run_err)?;
    let rows: Vec<Vec<String>> = traj
        .diagnostics
        .iter()
        .map(|d| {
            [d.t, d.hamiltonian, d.mass, d.max_abs_zeta, d.min_separation, d.dt].iter().map(f64::to_string).collect()
        })
        .collect();
    write_csv(
        &ctx.out.join("diagnostics.csv"),
        &["t", "hamiltonian", "mass", "max_abs_zeta", "min_separation", "dt"],
        &rows,
    )
    .map_err(io_err)?;
    for (i, s) in traj.snapshots.iter().enumerate() {
        write_field(&ctx.out.join(format!("snap_{i:05}_zeta.bin")), "zeta", s.t, &s.zeta).map_err(io_err)?;
        write_field(&ctx.out.join(format!("snap_{i:05}_psi.bin")), "psi", s.t, &s.psi).map_err(io_err)?;
    }
    ctx.manifest(&[])?;
    println!(
        "steps={} hamiltonian_drift={:e} mass_drift={:e}",
        traj.diagnostics.len().saturating_sub(1),
        traj.hamiltonian_drift(),
        traj.mass_drift()
    );
    match traj.aborted {
        Some(msg) => Err(Failure::Aborted(format!("run aborted: {msg}"))),
        None => Ok(()),
    }
}

fn cmd_dispersion(ctx: &Ctx) -> Result<(), Failure> {
    let params = ctx.params()?;
    let raw = &ctx.cfg.raw;
    let ks = raw.f64_list_or("dispersion.k", &[1.0, 2.0, 3.0]).map_err(config_err)?;
    let amplitude = raw.f64_or("dispersion.amplitude", 1e-4).map_err(config_err)?;
    let periods = raw.f64_or("dispersion.periods", 3.0).map_err(config_err)?;
    let tol = raw.f64_or("dispersion.tolerance", 1e-2).map_err(config_err)?;
    if ctx.cfg.depth().is_none() {
        return Err(Failure::Config("dispersion needs physics.bottom = flat".into()));
    }
    let mut rows = Vec::new();
    for &k in &ks {
        let r = measure_dispersion(&params, k, amplitude, periods, ctx.cfg.dt).map_err(run_err)?;
        println!("k={} omega={} predicted={} rel_error={:e}", r.k, r.measured, r.predicted, r.rel_error);
        rows.push(r);
    }
    let table: Vec<Vec<String>> = rows.iter().map(|r| r.row()).collect();
    write_csv(&ctx.out.join("dispersion.csv"), &DISPERSION_HEADER, &table).map_err(io_err)?;
    ctx.manifest(&[])?;
    if rows.iter().any(|r| r.rel_error > tol) {
        return Err(Failure::Property(format!("relative frequency error above {tol}")));
    }
    Ok(())
}

fn cmd_limit(ctx: &Ctx) -> Result<(), Failure> {
    let raw = &ctx.cfg.raw;
    if ctx.cfg.bottom != (capstrip::io::BottomSpec::Flat { depth: 1.0 }) {
        return Err(Failure::Config("limit needs a flat bottom at depth 1".into()));
    }
    let base = PhysParams { kappa: 0.0, ..ctx.params()? };
    let init = ctx.cfg.initial_state(&base).map_err(config_err)?;
    let kappas = match raw.get("limit.kappas") {
        Some(_) => raw.f64_list_or("limit.kappas", &[]).map_err(config_err)?,
        None => {
            let k0 = raw.f64_or("limit.kappa0", 1e-2).map_err(config_err)?;
            vec![k0, k0 / 4.0, k0 / 16.0]
        }
    };
    let t_final = raw.f64_or("limit.t_final", ctx.cfg.t_final).map_err(config_err)?;
    let rep = zero_kappa_limit(&init, &base, &kappas, t_final, ctx.cfg.dt).map_err(run_err)?;
    let rows: Vec<Vec<String>> = rep.rows.iter().map(|(k, d)| vec![k.to_string(), d.to_string()]).collect();
    write_csv(&ctx.out.join("limit.csv"), &["kappa", "delta"], &rows).map_err(io_err)?;
    for (k, d) in &rep.rows {
        println!("kappa={k} delta={d:e}");
    }
    let mut props = vec![
        Property { name: "limit.monotone".into(), value: rep.monotone as u8 as f64, threshold: 1.0, pass: rep.monotone },
        Property { name: "limit.halved".into(), value: rep.halved as u8 as f64, threshold: 1.0, pass: rep.halved },
    ];
    if raw.str_or("limit.check_slope", "false") == "true" {
        props.push(Property::at_least("limit.slope_expected_linear_regime", rep.slope, 0.9));
    }
    let prop_rows: Vec<Vec<String>> = props.iter().map(Property::row).collect();
    write_csv(&ctx.out.join("properties.csv"), &PROPERTY_HEADER, &prop_rows).map_err(io_err)?;
    ctx.manifest(&[])?;
    if !rep.aborted.is_empty() {
        let which: Vec<String> = rep.aborted.iter().map(|(k, m)| format!("kappa={k}: {m}")).collect();
        return Err(Failure::Aborted(format!("member runs aborted: {}", which.join("; "))));
    }
    println!("slope={} (expected at least 0.9 for small amplitude)", rep.slope);
    if props.iter().all(|p| p.pass) {
        Ok(())
    } else {
        Err(Failure::Property("limit checks failed".into()))
    }
}

fn configured_shape(ctx: &Ctx) -> Result<capstrip::geometry::DomainShape<f64>, Failure> {
    test_shape(&ctx.cfg.grid(), ctx.shape_kind()?, ctx.shape_amplitude()?, ctx.seed).map_err(config_err)
}

fn cmd_dno(ctx: &Ctx) -> Result<(), Failure> {
    let shape = configured_shape(ctx)?;
    let props = dno_suite(&shape, ctx.cfg.m, ctx.seed).map_err(suite_err)?;
    ctx.properties(&props)
}

fn cmd_orders(ctx: &Ctx) -> Result<(), Failure> {
    let shape = configured_shape(ctx)?;
    let props = orders_suite(&shape, ctx.cfg.m, ctx.seed).map_err(suite_err)?;
    ctx.properties(&props)
}

fn cmd_linear(ctx: &Ctx) -> Result<(), Failure> {
    let params = ctx.params()?;
    let amplitude = ctx.cfg.raw.f64_or("linear.amplitude", 0.05).map_err(config_err)?;
    let (props, run) = linear_suite(&params, amplitude, ctx.seed).map_err(suite_err)?;
    let rows: Vec<Vec<String>> = (0..run.times.len())
        .map(|i| [run.times[i], run.e0[i], run.e1[i], run.fit.lambda].iter().map(f64::to_string).collect())
        .collect();
    write_csv(&ctx.out.join("energy.csv"), &["t", "E0", "E1", "lambda"], &rows).map_err(io_err)?;
    ctx.properties(&props)
}

fn cmd_taylor(ctx: &Ctx) -> Result<(), Failure> {
    let params = ctx.params()?;
    let amplitude = ctx.cfg.raw.f64_or("taylor.amplitude", 0.0).map_err(config_err)?;
    let (props, trace, a) = taylor_suite(&params, amplitude).map_err(suite_err)?;
    let g = trace.grid();
    let rows: Vec<Vec<String>> = (0..g.len())
        .map(|i| {
            let x = g.node(i);
            let mut r = vec![x[0].to_string()];
            if g.dim() == 2 {
                r.push(x[1].to_string());
            }
            r.push(a.values()[i].to_string());
            r.push(trace.values()[i].to_string());
            r
        })
        .collect();
    let header: &[&str] = if g.dim() == 2 { &["x1", "x2", "a_bar", "pressure_trace"] } else { &["x1", "a_bar", "pressure_trace"] };
    write_csv(&ctx.out.join("taylor.csv"), header, &rows).map_err(io_err)?;
    ctx.properties(&props)
}

fn cmd_selftest(ctx: &Ctx) -> Result<(), Failure> {
    let grid = ctx.cfg.grid();
    let flat = test_shape(&grid, ShapeKind::Flat, 0.0, ctx.seed).map_err(config_err)?;
    let mut props = dno_suite(&flat, ctx.cfg.m, ctx.seed).map_err(suite_err)?;
    props.extend(orders_suite(&flat, ctx.cfg.m, ctx.seed).map_err(suite_err)?);
    let params = PhysParams::flat(&grid, ctx.cfg.m, 1.0, ctx.cfg.g, ctx.cfg.kappa).map_err(config_err)?;
    let (taylor, trace, _) = taylor_suite(&params, 0.0).map_err(suite_err)?;
    props.extend(taylor);
    let dev = trace.values().iter().fold(0.0f64, |m, v| m.max((v - params.g).abs()));
    props.push(Property::at_most("selftest.flat_trace_is_g", dev, 1e-10));
    let rest = WaveState::rest(&grid);
    let h = capstrip::evolution::hamiltonian(&rest, &params).map_err(suite_err)?;
    props.push(Property::at_most("selftest.rest_energy", h.abs(), 1e-14));
    ctx.properties(&props)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let started = Instant::now();
    let mut raw = match &cli.config {
        Some(p) => Config::load(p).map_err(config_err)?,
        None => Config::default(),
    };
    if let Some(b) = cli.backend {
        raw.set("solver.backend", match b {
            Backend::Exact => "exact",
            Backend::Symbol => "symbol",
        });
    }
    let base = cli.config.as_deref().and_then(Path::parent).unwrap_or(Path::new(".")).to_path_buf();
    let cfg = RunConfig::from_config(raw, &base).map_err(config_err)?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Config(format!("--threads: {e}")))?;
    }
    let out = std::env::var_os("CAPSTRIP_OUT").map(PathBuf::from).unwrap_or(cli.out);
    std::fs::create_dir_all(&out).map_err(io_err)?;
    if cfg.backend == DnoMode::Symbol && !matches!(cli.command, Command::Simulate | Command::Dispersion | Command::Limit) {
        log::info!("--backend only affects the evolution commands");
    }
    let ctx = Ctx { cfg, out, seed: cli.seed, command: cli.command, started };
    log::info!("running {} into {}", ctx.command.name(), ctx.out.display());
    match ctx.command {
        Command::Simulate => cmd_simulate(&ctx),
        Command::Dispersion => cmd_dispersion(&ctx),
        Command::Limit => cmd_limit(&ctx),
        Command::Dno => cmd_dno(&ctx),
        Command::Orders => cmd_orders(&ctx),
        Command::Linear => cmd_linear(&ctx),
        Command::Taylor => cmd_taylor(&ctx),
        Command::Selftest => cmd_selftest(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("capstrip: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
