//! Scenario files: a sectioned `key = value` grammar.
//!
//! ```text
//! # comment (also `;`)
//! [section]
//! key = value
//! ```
//!
//! Sections and keys (defaults in parentheses):
//!
//! * `[grid]` `nx` (32), `neta` (64), `dx` (2π/nx), `deta` (16/neta), `eps` (0.1).
//!   The x domain starts at 0 and is periodic; η is centred on 0.
//! * `[hamiltonian]` `mass` (1, or `none`), `potential`, `field_x`, `field_y`,
//!   `field_z` (0). Series are `;`-separated terms `const:c`, `slope:s`,
//!   `cos:k:a`, `sin:k:b`; a bare number is a constant.
//! * `[potential]` `form` (scalar | sigma3 | exchange | custom-table),
//!   `amplitude` (1), `range` (0.5), `profile` (gaussian | exponential),
//!   `table` (CSV path for custom-table: `r` then 16 Pauli coefficients).
//! * `[bath]` `density` (1, series in z), `polarization` (0,0,0),
//!   `covariance` (zero | white | gaussian), `covariance_strength` (4
//!   diagonal entries, 1,1,1,1), `covariance_length` (1), `n_total` (none),
//!   `include_self_term` (true).
//! * `[scaling]` `a` (1), `b` (eps), `range` (short), `gamma` (eps); values
//!   `1`, `eps`, `eps^2`, `1/eps`.
//! * `[run]` `model` (sbe | wigner | bloch), `dt` (0.01), `t_end` (1),
//!   `snapshot_every` (0), `output` (out), `mass_tol` (1e-10),
//!   `norm_tol` (none).
//! * `[relaxation]` `enabled` (false), `tau` (1).
//! * `[initial]` `modulation` (0), `wavenumber` (1), `temperature` (1),
//!   `drift` (0), `polarization` (0,0,0).
//! * `[bloch]` `tol` (1e-10).

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix4, Vector3};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::collision::{self, CollisionSetup};
use crate::environment::{BathState, Covariance, PairPotential, PauliQuad, RadialProfile, SpinStructure};
use crate::pauli::Herm2;
use crate::semiclassics::{
    boltzmann_setup, build_limit_model, CollisionModel, DampingMatrix, Dynamics, EpsOrder, Hamiltonian,
    InitialState, InteractionRange, Monitors, RunSettings, ScalingScenario, SweepProblem, TransportModel,
    TrigSeries, TrigTerm,
};
use crate::wigner::PhaseSpaceGrid;

/// Every violation found in a scenario file.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid scenario:\n  {}", .problems.join("\n  "))]
pub struct ConfigError {
    pub problems: Vec<String>,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["nx", "neta", "dx", "deta", "eps"]),
    ("hamiltonian", &["mass", "potential", "field_x", "field_y", "field_z"]),
    ("potential", &["form", "amplitude", "range", "profile", "table"]),
    (
        "bath",
        &[
            "density",
            "polarization",
            "covariance",
            "covariance_strength",
            "covariance_length",
            "n_total",
            "include_self_term",
        ],
    ),
    ("scaling", &["a", "b", "range", "gamma"]),
    ("run", &["model", "dt", "t_end", "snapshot_every", "output", "mass_tol", "norm_tol"]),
    ("relaxation", &["enabled", "tau"]),
    ("initial", &["modulation", "wavenumber", "temperature", "drift", "polarization"]),
    ("bloch", &["tol"]),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialForm {
    Scalar,
    Sigma3,
    Exchange,
    CustomTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileKind {
    Gaussian,
    Exponential,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovarianceForm {
    Zero,
    White,
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Sbe,
    Wigner,
    Bloch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub neta: usize,
    pub dx: f64,
    pub deta: f64,
    pub eps: f64,
}

/// Tabulated pair potential and the path it was read from.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialTable {
    pub path: String,
    pub potential: PairPotential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PotentialSpec {
    pub form: PotentialForm,
    pub amplitude: f64,
    pub range: f64,
    pub profile: ProfileKind,
    pub table: Option<PotentialTable>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BathSpec {
    pub density: TrigSeries,
    pub polarization: Vector3<f64>,
    pub covariance: CovarianceForm,
    pub covariance_strength: [f64; 4],
    pub covariance_length: f64,
    pub n_total: Option<f64>,
    pub include_self_term: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub model: ModelKind,
    pub dt: f64,
    pub t_end: f64,
    pub snapshot_every: usize,
    pub output: PathBuf,
    pub mass_tol: f64,
    pub norm_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub grid: GridSpec,
    pub hamiltonian: Hamiltonian,
    pub potential: PotentialSpec,
    pub bath: BathSpec,
    pub scaling: ScalingScenario,
    pub run: RunSpec,
    pub relaxation: Option<f64>,
    /// Relaxation time kept while relaxation is disabled, for round trips.
    pub relaxation_tau: f64,
    pub initial: InitialState,
    pub bloch_tol: f64,
}

/// Reads and validates a scenario file; table paths resolve against its
/// directory.
pub fn parse_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
        problems: vec![format!("cannot read {}: {e}", path.display())],
    })?;
    parse_str(&text, path.parent().unwrap_or(Path::new(".")))
}

type Raw = BTreeMap<(String, String), (usize, String)>;

fn lex(text: &str, problems: &mut Vec<String>) -> Raw {
    let mut raw = Raw::new();
    let mut section: Option<String> = None;
    for (n, line) in text.lines().enumerate() {
        let lineno = n + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if SECTIONS.iter().any(|(s, _)| *s == name) {
                section = Some(name.to_string());
            } else {
                let names: Vec<&str> = SECTIONS.iter().map(|(s, _)| *s).collect();
                problems.push(format!(
                    "line {lineno}: unknown section [{name}]; accepted sections: {}",
                    names.join(", ")
                ));
                section = None;
            }
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            problems.push(format!("line {lineno}: expected `key = value`"));
            continue;
        };
        let key = key.trim();
        let Some(sec) = &section else {
            problems.push(format!("line {lineno}: key `{key}` outside a known section"));
            continue;
        };
        let accepted = SECTIONS.iter().find(|(s, _)| s == sec).map(|(_, k)| *k).unwrap_or(&[]);
        if !accepted.contains(&key) {
            problems.push(format!(
                "line {lineno}: unknown key `{key}` in [{sec}]; accepted keys: {}",
                accepted.join(", ")
            ));
            continue;
        }
        if raw.insert((sec.clone(), key.to_string()), (lineno, value.trim().to_string())).is_some() {
            problems.push(format!("line {lineno}: duplicate key `{key}` in [{sec}]"));
        }
    }
    raw
}

/// Typed access to lexed values that records every failure.
struct Reader<'a> {
    raw: &'a Raw,
    problems: Vec<String>,
}

impl Reader<'_> {
    fn get<T>(&mut self, sec: &str, key: &str, default: T, parse: impl Fn(&str) -> Option<T>, what: &str) -> T {
        match self.raw.get(&(sec.to_string(), key.to_string())) {
            None => default,
            Some((line, v)) => parse(v).unwrap_or_else(|| {
                self.problems.push(format!("line {line}: [{sec}] {key} = `{v}` is not {what}"));
                default
            }),
        }
    }

    fn float(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        self.get(sec, key, default, |v| v.parse().ok().filter(|x: &f64| x.is_finite()), "a finite number")
    }

    fn positive(&mut self, sec: &str, key: &str, default: f64) -> f64 {
        let v = self.float(sec, key, default);
        if !(v > 0.0) {
            self.problems.push(format!("[{sec}] {key} must be positive, got {v}"));
        }
        v
    }

    fn count(&mut self, sec: &str, key: &str, default: usize) -> usize {
        self.get(sec, key, default, |v| v.parse().ok(), "a non-negative integer")
    }

    fn flag(&mut self, sec: &str, key: &str, default: bool) -> bool {
        self.get(sec, key, default, |v| v.parse().ok(), "true or false")
    }

    fn vector(&mut self, sec: &str, key: &str) -> Vector3<f64> {
        self.get(sec, key, Vector3::zeros(), |v| parse_list::<3>(v).map(Vector3::from), "three comma-separated numbers")
    }

    fn series(&mut self, sec: &str, key: &str, default: TrigSeries) -> TrigSeries {
        self.get(sec, key, default, parse_series, "a series of const:/slope:/cos:k:a/sin:k:b terms")
    }

    fn order(&mut self, sec: &str, key: &str, default: EpsOrder) -> EpsOrder {
        self.get(sec, key, default, EpsOrder::parse, "one of 1, eps, eps^2, 1/eps")
    }
}

fn parse_list<const N: usize>(v: &str) -> Option<[f64; N]> {
    let parts: Vec<f64> = v.split(',').map(|s| s.trim().parse::<f64>().ok().filter(|x| x.is_finite())).collect::<Option<_>>()?;
    parts.try_into().ok()
}

fn parse_series(v: &str) -> Option<TrigSeries> {
    if let Ok(c) = v.parse::<f64>() {
        return c.is_finite().then(|| TrigSeries::constant(c));
    }
    let mut s = TrigSeries::default();
    for term in v.split(';').map(str::trim).filter(|t| !t.is_empty()) {
        let parts: Vec<&str> = term.split(':').map(str::trim).collect();
        let num = |i: usize| parts.get(i).and_then(|p| p.parse::<f64>().ok()).filter(|x| x.is_finite());
        match (parts[0], parts.len()) {
            ("const", 2) => s.constant += num(1)?,
            ("slope", 2) => s.slope += num(1)?,
            ("cos", 3) => s.terms.push(TrigTerm { wavenumber: num(1)?, cos: num(2)?, sin: 0.0 }),
            ("sin", 3) => s.terms.push(TrigTerm { wavenumber: num(1)?, cos: 0.0, sin: num(2)? }),
            _ => return None,
        }
    }
    Some(s)
}

fn format_series(s: &TrigSeries) -> String {
    let mut parts = vec![format!("const:{}", s.constant)];
    if s.slope != 0.0 {
        parts.push(format!("slope:{}", s.slope));
    }
    for t in &s.terms {
        if t.cos != 0.0 {
            parts.push(format!("cos:{}:{}", t.wavenumber, t.cos));
        }
        if t.sin != 0.0 {
            parts.push(format!("sin:{}:{}", t.wavenumber, t.sin));
        }
    }
    parts.join("; ")
}

fn read_table(path: &Path) -> Result<PairPotential, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read potential table {}: {e}", path.display()))?;
    let mut r = Vec::new();
    let mut values: Vec<PauliQuad> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| format!("potential table line {}: not numeric", n + 1))?;
        if row.len() != 17 {
            return Err(format!("potential table line {}: expected 17 columns, got {}", n + 1, row.len()));
        }
        r.push(row[0]);
        values.push(std::array::from_fn(|i| Herm2::new(row[1 + 4 * i], [row[2 + 4 * i], row[3 + 4 * i], row[4 + 4 * i]])));
    }
    if r.len() < 2 {
        return Err("potential table needs at least two rows".into());
    }
    let dr = r[1] - r[0];
    if !(dr > 0.0) || r.windows(2).any(|w| ((w[1] - w[0]) - dr).abs() > 1e-9 * dr) {
        return Err("potential table radii must be increasing and uniformly spaced".into());
    }
    Ok(PairPotential::Sampled { r0: r[0], dr, values })
}

/// Parses scenario text; `base` anchors relative table paths.
pub fn parse_str(text: &str, base: &Path) -> Result<ScenarioConfig, ConfigError> {
    let mut problems = Vec::new();
    let raw = lex(text, &mut problems);
    let mut rd = Reader { raw: &raw, problems };

    let nx = rd.count("grid", "nx", 32);
    let neta = rd.count("grid", "neta", 64);
    for (k, n) in [("nx", nx), ("neta", neta)] {
        if n < 4 || n % 2 != 0 {
            rd.problems.push(format!("[grid] {k} must be an even number >= 4, got {n}"));
        }
    }
    let grid = GridSpec {
        nx,
        neta,
        dx: rd.positive("grid", "dx", std::f64::consts::TAU / nx.max(1) as f64),
        deta: rd.positive("grid", "deta", 16.0 / neta.max(1) as f64),
        eps: rd.positive("grid", "eps", 0.1),
    };

    let mass = rd.get("hamiltonian", "mass", Some(1.0), |v| {
        if v == "none" {
            Some(None)
        } else {
            v.parse::<f64>().ok().filter(|m| *m > 0.0 && m.is_finite()).map(Some)
        }
    }, "a positive number or `none`");
    let hamiltonian = Hamiltonian {
        mass,
        potential: rd.series("hamiltonian", "potential", TrigSeries::default()),
        field: [
            rd.series("hamiltonian", "field_x", TrigSeries::default()),
            rd.series("hamiltonian", "field_y", TrigSeries::default()),
            rd.series("hamiltonian", "field_z", TrigSeries::default()),
        ],
    };

    let form = rd.get(
        "potential",
        "form",
        PotentialForm::Scalar,
        |v| match v {
            "scalar" => Some(PotentialForm::Scalar),
            "sigma3" => Some(PotentialForm::Sigma3),
            "exchange" => Some(PotentialForm::Exchange),
            "custom-table" => Some(PotentialForm::CustomTable),
            _ => None,
        },
        "one of scalar, sigma3, exchange, custom-table",
    );
    let profile = rd.get(
        "potential",
        "profile",
        ProfileKind::Gaussian,
        |v| match v {
            "gaussian" => Some(ProfileKind::Gaussian),
            "exponential" => Some(ProfileKind::Exponential),
            _ => None,
        },
        "gaussian or exponential",
    );
    let amplitude = rd.float("potential", "amplitude", 1.0);
    let range = rd.positive("potential", "range", 0.5);
    let table_path = rd.get("potential", "table", None, |v| Some(Some(v.to_string())), "a path");
    let table = match (form, table_path) {
        (PotentialForm::CustomTable, Some(p)) => match read_table(&base.join(&p)) {
            Ok(potential) => Some(PotentialTable { path: p, potential }),
            Err(e) => {
                rd.problems.push(e);
                None
            }
        },
        (PotentialForm::CustomTable, None) => {
            rd.problems.push("[potential] form = custom-table needs a `table` path".into());
            None
        }
        (_, Some(_)) => {
            rd.problems.push("[potential] table is only used with form = custom-table".into());
            None
        }
        _ => None,
    };

    let covariance = rd.get(
        "bath",
        "covariance",
        CovarianceForm::White,
        |v| match v {
            "zero" => Some(CovarianceForm::Zero),
            "white" => Some(CovarianceForm::White),
            "gaussian" => Some(CovarianceForm::Gaussian),
            _ => None,
        },
        "one of zero, white, gaussian",
    );
    let covariance_strength = rd.get("bath", "covariance_strength", [1.0; 4], parse_list::<4>, "four comma-separated numbers");
    if covariance_strength.iter().any(|s| *s < 0.0) {
        rd.problems.push("[bath] covariance_strength entries must be non-negative".into());
    }
    let n_total = rd.get("bath", "n_total", None, |v| v.parse::<f64>().ok().filter(|x| *x > 0.0 && x.is_finite()).map(Some), "a positive number");
    let bath = BathSpec {
        density: rd.series("bath", "density", TrigSeries::constant(1.0)),
        polarization: rd.vector("bath", "polarization"),
        covariance,
        covariance_strength,
        covariance_length: rd.positive("bath", "covariance_length", 1.0),
        n_total,
        include_self_term: rd.flag("bath", "include_self_term", true),
    };
    if bath.polarization.norm() > 1.0 {
        rd.problems.push("[bath] polarization must have norm at most 1".into());
    }

    let a = rd.order("scaling", "a", EpsOrder::ONE);
    let b = rd.order("scaling", "b", EpsOrder::EPS);
    let gamma = rd.order("scaling", "gamma", EpsOrder::EPS);
    let srange = rd.get("scaling", "range", InteractionRange::Short, InteractionRange::parse, "short or long");
    let scaling = ScalingScenario {
        coupling: a,
        density: b,
        range: srange,
        covariance: gamma,
    };
    if let Err(e) = scaling.operators() {
        rd.problems.push(e.to_string());
    }

    let model = rd.get(
        "run",
        "model",
        ModelKind::Sbe,
        |v| match v {
            "sbe" => Some(ModelKind::Sbe),
            "wigner" => Some(ModelKind::Wigner),
            "bloch" => Some(ModelKind::Bloch),
            _ => None,
        },
        "one of sbe, wigner, bloch",
    );
    let t_end = rd.float("run", "t_end", 1.0);
    if t_end < 0.0 {
        rd.problems.push(format!("[run] t_end must be non-negative, got {t_end}"));
    }
    let run = RunSpec {
        model,
        dt: rd.positive("run", "dt", 0.01),
        t_end,
        snapshot_every: rd.count("run", "snapshot_every", 0),
        output: rd.get("run", "output", PathBuf::from("out"), |v| Some(PathBuf::from(v)), "a path"),
        mass_tol: rd.positive("run", "mass_tol", 1e-10),
        norm_tol: rd.get("run", "norm_tol", None, |v| v.parse::<f64>().ok().filter(|x| *x > 0.0).map(Some), "a positive number"),
    };

    let enabled = rd.flag("relaxation", "enabled", false);
    let relaxation_tau = rd.positive("relaxation", "tau", 1.0);

    let initial = InitialState {
        modulation: rd.float("initial", "modulation", 0.0),
        wavenumber: rd.float("initial", "wavenumber", 1.0),
        temperature: rd.positive("initial", "temperature", 1.0),
        drift: rd.float("initial", "drift", 0.0),
        polarization: rd.vector("initial", "polarization"),
    };
    if initial.polarization.norm() > 1.0 || initial.modulation.abs() > 1.0 {
        rd.problems.push("[initial] polarization norm and |modulation| must not exceed 1".into());
    }
    let bloch_tol = rd.positive("bloch", "tol", 1e-10);

    let cfg = ScenarioConfig {
        grid,
        hamiltonian,
        potential: PotentialSpec {
            form,
            amplitude,
            range,
            profile,
            table,
        },
        bath,
        scaling,
        run,
        relaxation: enabled.then_some(relaxation_tau),
        relaxation_tau,
        initial,
        bloch_tol,
    };
    let mut problems = rd.problems;
    if problems.is_empty() {
        if let Err(e) = cfg.phase_grid().and_then(|g| {
            let p = g.period();
            cfg.hamiltonian
                .potential
                .terms
                .iter()
                .chain(cfg.hamiltonian.field.iter().flat_map(|f| f.terms.iter()))
                .chain(cfg.bath.density.terms.iter())
                .try_for_each(|t| {
                    let turns = t.wavenumber * p / std::f64::consts::TAU;
                    if (turns - turns.round()).abs() > 1e-9 {
                        Err(crate::Error::InvalidParameter {
                            name: "wavenumber",
                            reason: format!("{} does not fit the x period {p}", t.wavenumber),
                        })
                    } else {
                        Ok(())
                    }
                })
        }) {
            problems.push(e.to_string());
        }
        if cfg.hamiltonian.field.iter().any(|f| f.slope != 0.0) {
            problems.push("[hamiltonian] exchange field series must not have a slope".into());
        }
        if let Err(e) = cfg.bath_state() {
            problems.push(e.to_string());
        }
    }
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigError { problems })
    }
}

fn order_name(o: EpsOrder) -> String {
    o.to_string()
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Sbe => "sbe",
            ModelKind::Wigner => "wigner",
            ModelKind::Bloch => "bloch",
        })
    }
}

impl ScenarioConfig {
    /// Canonical text; parsing it back yields an equal config.
    pub fn serialize(&self) -> String {
        let mut s = String::new();
        let g = &self.grid;
        let list = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
        let _ = writeln!(s, "[grid]\nnx = {}\nneta = {}\ndx = {}\ndeta = {}\neps = {}\n", g.nx, g.neta, g.dx, g.deta, g.eps);
        let h = &self.hamiltonian;
        let _ = writeln!(
            s,
            "[hamiltonian]\nmass = {}\npotential = {}\nfield_x = {}\nfield_y = {}\nfield_z = {}\n",
            h.mass.map_or("none".to_string(), |m| m.to_string()),
            format_series(&h.potential),
            format_series(&h.field[0]),
            format_series(&h.field[1]),
            format_series(&h.field[2])
        );
        let p = &self.potential;
        let form = match p.form {
            PotentialForm::Scalar => "scalar",
            PotentialForm::Sigma3 => "sigma3",
            PotentialForm::Exchange => "exchange",
            PotentialForm::CustomTable => "custom-table",
        };
        let profile = match p.profile {
            ProfileKind::Gaussian => "gaussian",
            ProfileKind::Exponential => "exponential",
        };
        let _ = write!(s, "[potential]\nform = {form}\namplitude = {}\nrange = {}\nprofile = {profile}\n", p.amplitude, p.range);
        if let Some(t) = &p.table {
            let _ = writeln!(s, "table = {}", t.path);
        }
        let b = &self.bath;
        let cov = match b.covariance {
            CovarianceForm::Zero => "zero",
            CovarianceForm::White => "white",
            CovarianceForm::Gaussian => "gaussian",
        };
        let _ = write!(
            s,
            "\n[bath]\ndensity = {}\npolarization = {}\ncovariance = {cov}\ncovariance_strength = {}\ncovariance_length = {}\ninclude_self_term = {}\n",
            format_series(&b.density),
            list(b.polarization.as_slice()),
            list(&b.covariance_strength),
            b.covariance_length,
            b.include_self_term
        );
        if let Some(n) = b.n_total {
            let _ = writeln!(s, "n_total = {n}");
        }
        let sc = &self.scaling;
        let _ = writeln!(
            s,
            "\n[scaling]\na = {}\nb = {}\nrange = {}\ngamma = {}\n",
            order_name(sc.coupling),
            order_name(sc.density),
            sc.range,
            order_name(sc.covariance)
        );
        let r = &self.run;
        let _ = write!(
            s,
            "[run]\nmodel = {}\ndt = {}\nt_end = {}\nsnapshot_every = {}\noutput = {}\nmass_tol = {}\n",
            r.model,
            r.dt,
            r.t_end,
            r.snapshot_every,
            r.output.display(),
            r.mass_tol
        );
        if let Some(n) = r.norm_tol {
            let _ = writeln!(s, "norm_tol = {n}");
        }
        let _ = writeln!(
            s,
            "\n[relaxation]\nenabled = {}\ntau = {}\n",
            self.relaxation.is_some(),
            self.relaxation_tau
        );
        let i = &self.initial;
        let _ = writeln!(
            s,
            "[initial]\nmodulation = {}\nwavenumber = {}\ntemperature = {}\ndrift = {}\npolarization = {}\n",
            i.modulation,
            i.wavenumber,
            i.temperature,
            i.drift,
            list(i.polarization.as_slice())
        );
        let _ = writeln!(s, "[bloch]\ntol = {}", self.bloch_tol);
        s
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        Sha256::digest(self.serialize().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// `a, b, range, gamma` as text.
    pub fn scaling_label(&self) -> String {
        let s = &self.scaling;
        format!("a={} b={} range={} gamma={}", s.coupling, s.density, s.range, s.covariance)
    }

    pub fn phase_grid(&self) -> crate::Result<PhaseSpaceGrid> {
        let g = &self.grid;
        PhaseSpaceGrid::new(g.nx, 0.0, g.dx, g.neta, -(g.neta as f64) * g.deta / 2.0, g.deta, g.eps)
    }

    pub fn pair_potential(&self) -> PairPotential {
        let p = &self.potential;
        if let Some(t) = &p.table {
            return t.potential.clone();
        }
        let profile = match p.profile {
            ProfileKind::Gaussian => RadialProfile::Gaussian { width: p.range },
            ProfileKind::Exponential => RadialProfile::Exponential { range: p.range },
        };
        let structure = match p.form {
            PotentialForm::Sigma3 => SpinStructure::Sigma3,
            PotentialForm::Exchange => SpinStructure::Exchange,
            _ => SpinStructure::Scalar,
        };
        PairPotential::separable(p.amplitude, profile, structure)
    }

    pub fn covariance(&self) -> Covariance {
        let strength = Matrix4::from_diagonal(&self.bath.covariance_strength.into());
        match self.bath.covariance {
            CovarianceForm::Zero => Covariance::Zero,
            CovarianceForm::White => Covariance::WhiteNoise { strength },
            CovarianceForm::Gaussian => Covariance::Gaussian {
                strength,
                length: self.bath.covariance_length,
            },
        }
    }

    /// Bath on the x grid: `n(z) = ρ(z)(1 + p·σ)`.
    pub fn bath_state(&self) -> crate::Result<BathState> {
        let g = &self.grid;
        let n1 = (0..g.nx)
            .map(|j| {
                let rho = self.bath.density.eval(j as f64 * g.dx);
                Herm2::from_parts(rho, self.bath.polarization * rho)
            })
            .collect();
        let bath = BathState::new(0.0, g.dx, n1, self.covariance(), self.bath.include_self_term)?;
        match self.bath.n_total {
            Some(n) => bath.normalized(n),
            None => Ok(bath),
        }
    }

    /// Mean bath density, used for the finite-`ε` self term.
    pub fn mean_density(&self) -> crate::Result<Herm2> {
        let bath = self.bath_state()?;
        Ok(bath.n1.iter().copied().sum::<Herm2>() * (1.0 / bath.len() as f64))
    }

    /// The limit model, with the relaxation ansatz applied when enabled.
    pub fn limit_model(&self) -> crate::Result<TransportModel> {
        let mut m = build_limit_model(
            &self.scaling,
            &self.phase_grid()?,
            &self.hamiltonian,
            &self.pair_potential(),
            &self.bath_state()?,
            &self.covariance(),
        )?;
        if let Some(tau) = self.relaxation {
            m.collision = m.collision.relaxed(tau)?;
        }
        Ok(m)
    }

    /// The rescaled quantum model at the configured `ε`. Short range adds
    /// the self term of the mean bath density to the covariance.
    pub fn quantum_model(&self) -> crate::Result<TransportModel> {
        let mut m = self.limit_model()?;
        if let CollisionModel::Boltzmann(_) = m.collision {
            let extra = crate::environment::density_kmatrix(&self.mean_density()?) * (self.grid.eps / std::f64::consts::TAU);
            m.collision = CollisionModel::Boltzmann(boltzmann_setup(&m.grid, &self.pair_potential(), &self.covariance(), Some(extra))?);
        }
        m.dynamics = Dynamics::Quantum;
        Ok(m)
    }

    /// Short-range channel table on the transfer grid (unit prefactor).
    pub fn channel_setup(&self) -> crate::Result<CollisionSetup> {
        boltzmann_setup(&self.phase_grid()?, &self.pair_potential(), &self.covariance(), None)
    }

    pub fn run_settings(&self) -> RunSettings {
        RunSettings {
            dt: self.run.dt,
            t_end: self.run.t_end,
            snapshot_every: self.run.snapshot_every,
            monitors: Monitors {
                mass_tol: self.run.mass_tol,
                norm_tol: self.run.norm_tol,
                ..Monitors::default()
            },
            record_rhs: true,
        }
    }

    pub fn sweep_problem(&self) -> crate::Result<SweepProblem> {
        if self.scaling.range != InteractionRange::Short {
            return Err(crate::Error::InvalidParameter {
                name: "range",
                reason: "the epsilon sweep compares against the short-range limit only".into(),
            });
        }
        Ok(SweepProblem {
            grid: self.phase_grid()?,
            hamiltonian: self.hamiltonian.clone(),
            pair: self.pair_potential(),
            microscopic: self.covariance(),
            density: self.mean_density()?,
            initial: self.initial,
            dt: self.run.dt,
            t_end: self.run.t_end,
        })
    }

    /// Homogeneous Bloch system at `x = 0` with damping from the limit
    /// collision model (spin block at the momentum node nearest the drift
    /// for short range).
    pub fn bloch_system(&self) -> crate::Result<crate::semiclassics::BlochSystem> {
        let model = self.limit_model()?;
        let damping = match &model.collision {
            CollisionModel::None => DampingMatrix::zero(),
            CollisionModel::Boltzmann(setup) => {
                let g = &model.grid;
                let k = (((self.initial.drift - g.eta0) / g.deta).round().max(0.0) as usize).min(g.neta - 1);
                DampingMatrix::from_superoperator(&collision::q2_superoperator(setup, k))
            }
            CollisionModel::Local(ops) => DampingMatrix::from_superoperator(&ops[0]),
            CollisionModel::Relaxation { class, tau, .. } => DampingMatrix::relaxation(class, *tau),
        };
        let h = model.mean_field.as_ref().map_or(Vector3::zeros(), |m| m[0].spin);
        Ok(crate::semiclassics::BlochSystem {
            omega: self.hamiltonian.field_at(0.0),
            mean_field: h,
            damping,
        })
    }
}
