//! Configuration files, binary field files and CSV output.
//!
//! Config files are flat `key = value` text with dotted section keys; `#`
//! starts a comment. Field files carry a fixed 128-byte header followed by
//! `n^d` little-endian `f64` values, last axis fastest.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use crate::dno::DnoMode;
use crate::error::{Error, Result};
use crate::evolution::{PhysParams, RunSpec, WaveState};
use crate::geometry::{separation, StripSampling};
use crate::spectral::{ScalarField, TorusGrid};

/// Parsed `key = value` pairs.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: bad key `{k}`", lineno + 1)));
            }
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key `{k}`", lineno + 1)));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    fn parse_value<V: std::str::FromStr>(&self, key: &str, v: &str) -> Result<V> {
        v.parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{v}`")))
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            Some(v) => self.parse_value(key, v),
            None => Ok(default),
        }
    }

    pub fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            Some(v) => self.parse_value(key, v),
            None => Ok(default),
        }
    }

    pub fn opt_f64(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| self.parse_value(key, v)).transpose()
    }

    /// Comma-separated list.
    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        match self.get(key) {
            Some(v) => v.split(',').map(|s| self.parse_value(key, s.trim())).collect(),
            None => Ok(default.to_vec()),
        }
    }

    pub fn str_or<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.get(key).unwrap_or(default)
    }

    /// Rejects keys outside the given sections (prefixes before the first dot).
    pub fn check_sections(&self, known: &[&str]) -> Result<()> {
        let known: BTreeSet<&str> = known.iter().copied().collect();
        for k in self.keys() {
            let section = k.split('.').next().unwrap_or(k);
            if !known.contains(section) {
                return Err(Error::Config(format!("unknown section in key `{k}`")));
            }
        }
        Ok(())
    }

    /// Canonical `key = value` rendering.
    pub fn echo(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

/// Bottom topography.
#[derive(Clone, Debug, PartialEq)]
pub enum BottomSpec {
    Flat { depth: f64 },
    Profile(PathBuf),
}

/// Initial surface data.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialSpec {
    /// `ζ = amplitude cos(k x₁)`, `ψ = 0`.
    SingleMode { k: f64, amplitude: f64 },
    /// Periodized Gaussian `amplitude exp(-|x - c|²/width²)` at the domain center, `ψ = 0`.
    GaussianBump { width: f64, amplitude: f64 },
    FromFile { zeta: PathBuf, psi: Option<PathBuf> },
}

/// Validated run configuration.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dim: usize,
    pub n: usize,
    pub length: f64,
    pub m: usize,
    pub g: f64,
    pub kappa: f64,
    pub bottom: BottomSpec,
    pub h0: Option<f64>,
    pub initial: InitialSpec,
    pub dt: Option<f64>,
    pub t_final: f64,
    pub snapshot_stride: usize,
    pub cfl: f64,
    pub dealias: bool,
    pub backend: DnoMode,
    pub solve_tol: f64,
    pub raw: Config,
}

pub const SECTIONS: &[&str] =
    &["domain", "physics", "initial", "integrator", "solver", "dispersion", "limit", "shape", "suite", "linear", "taylor"];

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl RunConfig {
    /// Reads and validates a config; relative file paths resolve against `base`.
    pub fn from_config(raw: Config, base: &Path) -> Result<Self> {
        raw.check_sections(SECTIONS)?;
        let dim = raw.usize_or("domain.d", 1)?;
        let n = raw.usize_or("domain.n", 64)?;
        let length = raw.f64_or("domain.L", std::f64::consts::TAU)?;
        let m = raw.usize_or("domain.M", 32)?;
        TorusGrid::<f64>::new(dim, n, length).map_err(|e| Error::Config(e.to_string()))?;
        if m < 8 {
            return Err(Error::Config(format!("domain.M = {m} must be at least 8")));
        }
        let g = raw.f64_or("physics.g", 1.0)?;
        let kappa = raw.f64_or("physics.kappa", 0.0)?;
        if !(g > 0.0) || !(kappa >= 0.0) {
            return Err(Error::Config("physics.g must be positive and physics.kappa non-negative".into()));
        }
        let bottom = match raw.str_or("physics.bottom", "flat") {
            "flat" => {
                let depth = raw.f64_or("physics.depth", 1.0)?;
                if !(depth > 0.0) {
                    return Err(Error::Config("physics.depth must be positive".into()));
                }
                BottomSpec::Flat { depth }
            }
            "profile" => {
                let p = raw.get("physics.bottom_file").ok_or_else(|| Error::Config("physics.bottom_file missing".into()))?;
                let p = resolve(base, p);
                if !p.exists() {
                    return Err(Error::Config(format!("bottom profile {} not found", p.display())));
                }
                BottomSpec::Profile(p)
            }
            other => return Err(Error::Config(format!("physics.bottom = `{other}` (expected flat or profile)"))),
        };
        let h0 = raw.opt_f64("physics.h0")?;
        let initial = match raw.str_or("initial.preset", "single_mode") {
            "single_mode" => {
                let k = raw.f64_or("initial.k", 1.0)?;
                let step = std::f64::consts::TAU / length;
                let q = k / step;
                if !(k > 0.0) || (q - q.round()).abs() > 1e-9 {
                    return Err(Error::Config(format!("initial.k = {k} is not a positive multiple of 2π/L")));
                }
                InitialSpec::SingleMode { k, amplitude: raw.f64_or("initial.amplitude", 1e-3)? }
            }
            "gaussian_bump" => InitialSpec::GaussianBump {
                width: raw.f64_or("initial.width", 0.5)?,
                amplitude: raw.f64_or("initial.amplitude", 1e-2)?,
            },
            "from_file" => {
                let z = raw.get("initial.zeta_file").ok_or_else(|| Error::Config("initial.zeta_file missing".into()))?;
                let z = resolve(base, z);
                if !z.exists() {
                    return Err(Error::Config(format!("{} not found", z.display())));
                }
                let psi = raw.get("initial.psi_file").map(|p| resolve(base, p));
                if let Some(p) = &psi {
                    if !p.exists() {
                        return Err(Error::Config(format!("{} not found", p.display())));
                    }
                }
                InitialSpec::FromFile { zeta: z, psi }
            }
            other => return Err(Error::Config(format!("initial.preset = `{other}` is unknown"))),
        };
        let dt = match raw.str_or("integrator.dt", "auto") {
            "auto" => None,
            v => Some(v.parse::<f64>().map_err(|_| Error::Config(format!("integrator.dt = `{v}`")))?),
        };
        let t_final = raw.f64_or("integrator.t_final", 1.0)?;
        let snapshot_stride = raw.usize_or("integrator.snapshot_stride", 0)?;
        let cfl = raw.f64_or("integrator.cfl", 0.5)?;
        let dealias = match raw.str_or("integrator.dealias", "true") {
            "true" => true,
            "false" => false,
            v => return Err(Error::Config(format!("integrator.dealias = `{v}`"))),
        };
        let backend: DnoMode = raw.str_or("solver.backend", "exact").parse().map_err(|e: Error| Error::Config(e.to_string()))?;
        let solve_tol = raw.f64_or("solver.tol", 1e-10)?;
        if !(t_final >= 0.0) || dt.is_some_and(|d| !(d > 0.0)) || !(cfl > 0.0) {
            return Err(Error::Config("integrator values out of range".into()));
        }
        Ok(Self {
            dim,
            n,
            length,
            m,
            g,
            kappa,
            bottom,
            h0,
            initial,
            dt,
            t_final,
            snapshot_stride,
            cfl,
            dealias,
            backend,
            solve_tol,
            raw,
        })
    }

    pub fn grid(&self) -> TorusGrid<f64> {
        TorusGrid::new(self.dim, self.n, self.length).expect("validated grid")
    }

    pub fn bottom_field(&self) -> Result<ScalarField<f64>> {
        let g = self.grid();
        match &self.bottom {
            BottomSpec::Flat { depth } => Ok(ScalarField::constant(&g, -depth)),
            BottomSpec::Profile(p) => {
                let f = read_field(p)?;
                if f.field.grid() != &g {
                    return Err(Error::Config(format!("{} is on a different grid", p.display())));
                }
                Ok(f.field)
            }
        }
    }

    pub fn depth(&self) -> Option<f64> {
        match self.bottom {
            BottomSpec::Flat { depth } => Some(depth),
            BottomSpec::Profile(_) => None,
        }
    }

    pub fn params(&self) -> Result<PhysParams<f64>> {
        let g = self.grid();
        let bottom = self.bottom_field()?;
        let h0 = self.h0.unwrap_or(0.25 * (-bottom.max()));
        let mut p = PhysParams::new(self.g, self.kappa, bottom, h0, StripSampling::new(&g, self.m)?)
            .map_err(|e| Error::Config(e.to_string()))?;
        p.cfl = self.cfl;
        p.dealias = self.dealias;
        p.backend = self.backend;
        p.solve.tol = self.solve_tol;
        Ok(p)
    }

    pub fn run_spec(&self) -> RunSpec<f64> {
        RunSpec { dt: self.dt, t_final: self.t_final, snapshot_stride: self.snapshot_stride }
    }

    /// Initial state, checked against the separation constant.
    pub fn initial_state(&self, params: &PhysParams<f64>) -> Result<WaveState<f64>> {
        let g = self.grid();
        let (zeta, psi) = match &self.initial {
            InitialSpec::SingleMode { k, amplitude } => {
                (ScalarField::from_fn(&g, |x| amplitude * (k * x[0]).cos()), ScalarField::zeros(&g))
            }
            InitialSpec::GaussianBump { width, amplitude } => {
                let c = 0.5 * self.length;
                let wrap = |d: f64| {
                    let d = d - c;
                    d - self.length * (d / self.length).round()
                };
                let dim = self.dim;
                let z = ScalarField::from_fn(&g, |x| {
                    let mut r2 = wrap(x[0] + c).powi(2);
                    if dim == 2 {
                        r2 += wrap(x[1] + c).powi(2);
                    }
                    amplitude * (-r2 / (width * width)).exp()
                });
                (z.without_mean(), ScalarField::zeros(&g))
            }
            InitialSpec::FromFile { zeta, psi } => {
                let z = read_field(zeta)?.field;
                let p = match psi {
                    Some(p) => read_field(p)?.field,
                    None => ScalarField::zeros(&g),
                };
                if z.grid() != &g || p.grid() != &g {
                    return Err(Error::Config("initial field files are on a different grid".into()));
                }
                (z, p)
            }
        };
        let sep = separation(&zeta, &params.bottom);
        if sep < params.h0 {
            return Err(Error::Config(format!("initial surface violates the separation bound ({sep} < h0 = {})", params.h0)));
        }
        WaveState::new(zeta, psi, 0.0)
    }
}

pub const FIELD_MAGIC: &[u8; 9] = b"CAPSTRIP1";
pub const FIELD_HEADER_LEN: usize = 128;

/// A field with its name and time stamp.
#[derive(Clone, Debug)]
pub struct FieldFile {
    pub name: String,
    pub time: f64,
    pub field: ScalarField<f64>,
}

/// Header layout (byte offsets): magic `0..9`, endianness tag `16` (`b'L'`
/// or `b'B'`), `d` u64 `24..32`, `n` u64 `32..40`, `L` f64 `40..48`, time f64
/// `48..56`, NUL-padded UTF-8 name `56..120`; all other bytes zero.
pub fn encode_field(name: &str, time: f64, field: &ScalarField<f64>) -> Result<Vec<u8>> {
    if name.len() > 64 {
        return Err(Error::Format(format!("field name `{name}` longer than 64 bytes")));
    }
    let g = field.grid();
    let mut out = vec![0u8; FIELD_HEADER_LEN];
    out[..9].copy_from_slice(FIELD_MAGIC);
    out[16] = b'L';
    out[24..32].copy_from_slice(&(g.dim() as u64).to_le_bytes());
    out[32..40].copy_from_slice(&(g.n() as u64).to_le_bytes());
    out[40..48].copy_from_slice(&g.length().to_le_bytes());
    out[48..56].copy_from_slice(&time.to_le_bytes());
    out[56..56 + name.len()].copy_from_slice(name.as_bytes());
    out.reserve(8 * field.values().len());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_field(bytes: &[u8]) -> Result<FieldFile> {
    if bytes.len() < FIELD_HEADER_LEN || &bytes[..9] != FIELD_MAGIC {
        return Err(Error::Format("missing CAPSTRIP1 header".into()));
    }
    let big = match bytes[16] {
        b'L' => false,
        b'B' => true,
        t => return Err(Error::Format(format!("unknown endianness tag {t:#x}"))),
    };
    let word = |o: usize| -> [u8; 8] { bytes[o..o + 8].try_into().expect("8 bytes") };
    let u = |o: usize| if big { u64::from_be_bytes(word(o)) } else { u64::from_le_bytes(word(o)) };
    let f = |o: usize| if big { f64::from_be_bytes(word(o)) } else { f64::from_le_bytes(word(o)) };
    let (dim, n, length, time) = (u(24) as usize, u(32) as usize, f(40), f(48));
    let name_bytes = &bytes[56..120];
    let end = name_bytes.iter().position(|&b| b == 0).unwrap_or(64);
    let name = std::str::from_utf8(&name_bytes[..end]).map_err(|_| Error::Format("field name is not UTF-8".into()))?;
    let grid = TorusGrid::new(dim, n, length).map_err(|e| Error::Format(e.to_string()))?;
    let payload = &bytes[FIELD_HEADER_LEN..];
    if payload.len() != 8 * grid.len() {
        return Err(Error::Format(format!("payload has {} bytes, expected {}", payload.len(), 8 * grid.len())));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| {
            let w: [u8; 8] = c.try_into().expect("8 bytes");
            if big {
                f64::from_be_bytes(w)
            } else {
                f64::from_le_bytes(w)
            }
        })
        .collect();
    let field = ScalarField::new(&grid, values).map_err(|e| Error::Format(e.to_string()))?;
    Ok(FieldFile { name: name.to_string(), time, field })
}

pub fn write_field(path: &Path, name: &str, time: f64, field: &ScalarField<f64>) -> Result<()> {
    fs::write(path, encode_field(name, time, field)?)?;
    Ok(())
}

pub fn read_field(path: &Path) -> Result<FieldFile> {
    decode_field(&fs::read(path)?)
}

/// Comma-separated table with a header row.
pub fn write_csv<R: AsRef<[String]>>(path: &Path, header: &[&str], rows: &[R]) -> Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    writeln!(f, "{}", header.join(","))?;
    for r in rows {
        writeln!(f, "{}", r.as_ref().join(","))?;
    }
    f.flush()?;
    Ok(())
}

/// Run manifest: config echo, version, grid and timings.
pub fn write_manifest(dir: &Path, command: &str, config: &Config, grid: &str, timings: &[(&str, f64)]) -> Result<()> {
    let mut s = String::new();
    s.push_str(&format!("command = {command}\n"));
    s.push_str(&format!("version = {}\n", env!("CARGO_PKG_VERSION")));
    s.push_str(&format!("grid = {grid}\n"));
    for (k, v) in timings {
        s.push_str(&format!("timing.{k} = {v:.3}\n"));
    }
    s.push_str("\n# config\n");
    s.push_str(&config.echo());
    fs::write(dir.join("manifest.txt"), s)?;
    Ok(())
}
