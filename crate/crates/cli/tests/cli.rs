use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn capstrip(args: &[&str], config: Option<&str>, dir: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_capstrip"));
    cmd.env_remove("CAPSTRIP_OUT");
    if let Some(text) = config {
        let p = dir.join("run.cfg");
        fs::write(&p, text).unwrap();
        cmd.arg("--config").arg(p);
    }
    cmd.arg("--out").arg(dir.join("out"));
    cmd.args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn csv(dir: &Path, name: &str) -> Vec<Vec<String>> {
    fs::read_to_string(dir.join("out").join(name))
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

const SMALL: &str = "domain.n = 32\ndomain.M = 32\n";

#[test]
fn equilibrium_simulation_is_constant() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = format!("{SMALL}initial.amplitude = 0\nintegrator.t_final = 0.5\nintegrator.snapshot_stride = 2\n");
    let o = capstrip(&["simulate"], Some(&cfg), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(dir.path(), "diagnostics.csv");
    assert_eq!(rows[0], ["t", "hamiltonian", "mass", "max_abs_zeta", "min_separation", "dt"]);
    assert!(rows[1..].iter().all(|r| r[1] == "0" && r[3] == "0"));
    let out = dir.path().join("out");
    assert!(out.join("manifest.txt").exists());
    let snap = capstrip::io::read_field(&out.join("snap_00000_zeta.bin")).unwrap();
    assert_eq!(snap.name, "zeta");
    assert_eq!(snap.field.values().len(), 32);
}

#[test]
fn inadmissible_surface_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = capstrip(&["simulate"], Some(&format!("{SMALL}initial.amplitude = 0.9\n")), dir.path());
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("out/diagnostics.csv").exists());
    let o = capstrip(&["simulate"], Some("unknown.key = 1\n"), dir.path());
    assert_eq!(code(&o), 1);
    let o = capstrip(&["simulate"], Some("domain.n = 7\n"), dir.path());
    assert_eq!(code(&o), 1);
}

#[test]
fn simulation_output_is_deterministic() {
    let cfg = format!("{SMALL}initial.amplitude = 0.05\nintegrator.t_final = 0.3\n");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert_eq!(code(&capstrip(&["simulate", "--threads", "2"], Some(&cfg), a.path())), 0);
    assert_eq!(code(&capstrip(&["simulate", "--threads", "2"], Some(&cfg), b.path())), 0);
    let read = |d: &Path| fs::read(d.join("out/diagnostics.csv")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn environment_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let env_out = dir.path().join("env_out");
    let o = Command::new(env!("CARGO_BIN_EXE_capstrip"))
        .env("CAPSTRIP_OUT", &env_out)
        .args(["--out", dir.path().join("flag_out").to_str().unwrap(), "selftest"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(env_out.join("properties.csv").exists());
    assert!(!dir.path().join("flag_out").exists());
}

#[test]
fn selftest_and_flat_taylor_pass() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&capstrip(&["selftest"], Some(SMALL), dir.path())), 0);
    let rows = csv(dir.path(), "properties.csv");
    assert!(rows[1..].iter().all(|r| r[3] == "true"));

    assert_eq!(code(&capstrip(&["taylor"], Some(SMALL), dir.path())), 0);
    let rows = csv(dir.path(), "taylor.csv");
    assert_eq!(rows[0], ["x1", "a_bar", "pressure_trace"]);
    assert!(rows[1..].iter().all(|r| (r[2].parse::<f64>().unwrap() - 1.0).abs() < 1e-10));
}

#[test]
fn dno_on_random_one_dimensional_shape() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "domain.n = 64\ndomain.M = 32\nshape.kind = random\nshape.amplitude = 0.1\n";
    let o = capstrip(&["dno", "--seed", "4"], Some(cfg), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let rows = csv(dir.path(), "properties.csv");
    let sym = rows.iter().find(|r| r[0] == "dno.principal_symbol_is_abs_xi").unwrap();
    assert!(sym[1].parse::<f64>().unwrap() <= sym[2].parse::<f64>().unwrap());
}

#[test]
fn failing_property_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    // too few vertical levels for the flat oracle tolerance
    let o = capstrip(&["dno"], Some("domain.n = 32\ndomain.M = 8\nshape.kind = flat\n"), dir.path());
    assert_eq!(code(&o), 3);
    let rows = csv(dir.path(), "properties.csv");
    assert!(rows.iter().any(|r| r[3] == "false"));
}

#[test]
fn dispersion_and_limit_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "domain.n = 32\ndomain.M = 32\ndispersion.k = 1, 2\ndispersion.periods = 2\n";
    let o = capstrip(&["dispersion"], Some(cfg), dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv(dir.path(), "dispersion.csv");
    assert_eq!(rows.len(), 3);
    let w: f64 = rows[1][2].parse().unwrap();
    assert!((w - 1f64.tanh().sqrt()).abs() / 1f64.tanh().sqrt() < 1e-2);

    let cfg = "domain.n = 32\ndomain.M = 16\ninitial.amplitude = 0.01\nlimit.kappas = 0\nlimit.t_final = 0.5\n";
    let o = capstrip(&["limit"], Some(cfg), dir.path());
    let rows = csv(dir.path(), "limit.csv");
    assert_eq!(rows[1], ["0", "0"]);
    // a single entry cannot show a decrease
    assert_eq!(code(&o), 3);
}
