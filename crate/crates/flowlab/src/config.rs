//! Scenario configuration: strict JSON with every violation reported.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::flow::SolverOptions;
use crate::geometry::{rotsym::POLE_SLOPE_TOL, FlowKind, GeometryState};
use crate::presets::{self, Sampling};
use crate::singularity::ClassifyOptions;
use crate::verification::OracleScenario;

#[derive(Debug)]
pub enum ConfigError {
    Io(String, std::io::Error),
    Parse { line: usize, column: usize, message: String },
    Schema(Vec<String>),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io(p, e) => write!(f, "cannot read {p}: {e}"),
            ConfigError::Parse { line, column, message } => write!(f, "parse error at line {line}, column {column}: {message}"),
            ConfigError::Schema(v) => {
                write!(f, "{} schema violation(s):", v.len())?;
                for e in v {
                    write!(f, "\n  - {e}")?;
                }
                Ok(())
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case")]
pub enum Ansatz {
    RoundSphere { n: usize, nodes: usize, c0: f64, sampling: Sampling, alpha: f64, phi_amp: f64 },
    DumbbellNeckpinch { n: usize, nodes: usize, beta: f64, scale: f64, alpha: f64, phi_amp: f64 },
    #[serde(rename = "torus-H")]
    TorusH { m: usize, u0: Vec<f64>, h: f64 },
    Winding { m: usize, u0: Vec<f64>, axis: usize, kappa: f64, alpha: f64 },
    FlatTorus { m: usize, u0: Vec<f64>, alpha: f64 },
}

impl Ansatz {
    pub fn preset(&self) -> &'static str {
        match self {
            Ansatz::RoundSphere { .. } => "round-sphere",
            Ansatz::DumbbellNeckpinch { .. } => "dumbbell-neckpinch",
            Ansatz::TorusH { .. } => "torus-H",
            Ansatz::Winding { .. } => "winding",
            Ansatz::FlatTorus { .. } => "flat-torus",
        }
    }

    pub fn is_rotsym(&self) -> bool {
        matches!(self, Ansatz::RoundSphere { .. } | Ansatz::DumbbellNeckpinch { .. })
    }

    /// Initial state, with the grid overridden when `nodes` is given.
    pub fn build(&self, nodes: Option<usize>) -> crate::Result<GeometryState> {
        Ok(match self {
            Ansatz::RoundSphere { n, nodes: nn, c0, sampling, alpha, phi_amp } => {
                presets::round_sphere(*n, nodes.unwrap_or(*nn), *c0, *sampling, *alpha, *phi_amp)?.into()
            }
            Ansatz::DumbbellNeckpinch { n, nodes: nn, beta, scale, alpha, phi_amp } => {
                presets::dumbbell(*n, nodes.unwrap_or(*nn), *beta, *scale, *alpha, *phi_amp)?.into()
            }
            Ansatz::TorusH { u0, h, .. } => presets::torus_h(u0.clone(), *h)?.into(),
            Ansatz::Winding { u0, axis, kappa, alpha, .. } => presets::winding(u0.clone(), *axis, *kappa, *alpha)?.into(),
            Ansatz::FlatTorus { u0, alpha, .. } => presets::flat_torus(u0.clone(), *alpha)?.into(),
        })
    }

    /// Closed-form solution, where one exists.
    pub fn oracle(&self) -> Option<OracleScenario> {
        match self {
            Ansatz::RoundSphere { n, c0, phi_amp, .. } if *phi_amp == 0.0 => Some(OracleScenario::RoundSphere { n: *n, c0: *c0 }),
            Ansatz::TorusH { u0, h, .. } if u0[..3].iter().all(|u| *u == u0[0]) => Some(OracleScenario::TorusH { u0: u0.clone(), h: *h }),
            Ansatz::Winding { u0, axis, kappa, alpha, .. } => {
                Some(OracleScenario::WindingTorus { u0: u0.clone(), axis: *axis, kappa: *kappa, alpha: *alpha })
            }
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifySettings {
    #[serde(flatten)]
    pub options: ClassifyOptions,
    /// Trailing record highs used to extrapolate the singular time.
    pub window: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupSettings {
    pub c1: f64,
    pub c2: f64,
    pub max_windows: usize,
    pub s_back: Option<f64>,
    pub tol: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropySettings {
    pub taus: Vec<f64>,
    pub nu: bool,
    pub volume_bound: bool,
    pub monotonicity: bool,
    pub monotonicity_points: usize,
    /// Singular time for the monotonicity series; the estimate is used when absent.
    pub t_sing: Option<f64>,
    pub soliton_tau: Option<f64>,
    pub tol: f64,
    pub max_iters: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifySettings {
    pub checks: Vec<String>,
    pub oracle_tol: f64,
    pub oracle_t_frac: f64,
    pub residual_samples: usize,
    pub residual_dt: Option<f64>,
    pub refinement_dt: f64,
    pub refinement_times: Vec<f64>,
}

pub const VERIFY_CHECKS: [&str; 6] = ["oracle", "residuals", "refinement", "smin", "h_growth", "doubling"];

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Analyses {
    pub classify: Option<ClassifySettings>,
    pub blowup: Option<BlowupSettings>,
    pub entropy: Option<EntropySettings>,
    pub verify: Option<VerifySettings>,
}

impl Analyses {
    pub fn is_empty(&self) -> bool {
        self.classify.is_none() && self.blowup.is_none() && self.entropy.is_none() && self.verify.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub flow: FlowKind,
    pub ansatz: Ansatz,
    pub solver: SolverOptions,
    pub analyses: Analyses,
    #[serde(rename = "C_s")]
    pub c_s: Option<f64>,
    pub output_dir: String,
    pub seed: u64,
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.display().to_string(), e))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let v: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let mut c = Checker::default();
    let cfg = c.config(&v);
    if c.errors.is_empty() {
        Ok(cfg.expect("no violations"))
    } else {
        Err(ConfigError::Schema(c.errors))
    }
}

#[derive(Clone, Copy)]
enum Rule {
    Gt(f64),
    Ge(f64),
    /// `(lo, hi]`
    OpenClosed(f64, f64),
    /// `[lo, hi)`
    ClosedOpen(f64, f64),
    Finite,
}

impl Rule {
    fn holds(self, x: f64) -> bool {
        x.is_finite()
            && match self {
                Rule::Gt(a) => x > a,
                Rule::Ge(a) => x >= a,
                Rule::OpenClosed(a, b) => x > a && x <= b,
                Rule::ClosedOpen(a, b) => x >= a && x < b,
                Rule::Finite => true,
            }
    }

    fn describe(self) -> String {
        match self {
            Rule::Gt(a) => format!("must be > {a}"),
            Rule::Ge(a) => format!("must be >= {a}"),
            Rule::OpenClosed(a, b) => format!("must lie in ({a}, {b}]"),
            Rule::ClosedOpen(a, b) => format!("must lie in [{a}, {b})"),
            Rule::Finite => "must be a finite number".into(),
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

/// Walks the JSON tree, collecting violations instead of stopping at the first.
#[derive(Default)]
struct Checker {
    errors: Vec<String>,
}

impl Checker {
    fn object<'a>(&mut self, path: &str, v: &'a Value, allowed: &[&str]) -> Option<&'a Map<String, Value>> {
        let Some(m) = v.as_object() else {
            self.errors.push(format!("{} must be an object", if path.is_empty() { "config" } else { path }));
            return None;
        };
        for k in m.keys() {
            if !allowed.contains(&k.as_str()) {
                self.errors.push(format!("unknown key `{}`", join(path, k)));
            }
        }
        Some(m)
    }

    fn real(&mut self, m: &Map<String, Value>, path: &str, key: &str, default: Option<f64>, rule: Rule) -> f64 {
        let name = join(path, key);
        match m.get(key) {
            None => default.unwrap_or_else(|| {
                self.errors.push(format!("{name} is required"));
                f64::NAN
            }),
            Some(Value::Number(n)) => {
                let x = n.as_f64().unwrap_or(f64::NAN);
                if !rule.holds(x) {
                    self.errors.push(format!("{name} {}", rule.describe()));
                }
                x
            }
            Some(_) => {
                self.errors.push(format!("{name} must be a number"));
                f64::NAN
            }
        }
    }

    fn opt_real(&mut self, m: &Map<String, Value>, path: &str, key: &str, rule: Rule) -> Option<f64> {
        match m.get(key) {
            None | Some(Value::Null) => None,
            Some(_) => Some(self.real(m, path, key, None, rule)),
        }
    }

    fn int(&mut self, m: &Map<String, Value>, path: &str, key: &str, default: u64, lo: u64, hi: u64) -> u64 {
        let name = join(path, key);
        match m.get(key) {
            None => default,
            Some(v) => match v.as_u64() {
                Some(x) if (lo..=hi).contains(&x) => x,
                Some(_) => {
                    self.errors.push(format!("{name} must lie in [{lo}, {hi}]"));
                    default
                }
                None => {
                    self.errors.push(format!("{name} must be a non-negative integer"));
                    default
                }
            },
        }
    }

    fn boolean(&mut self, m: &Map<String, Value>, path: &str, key: &str, default: bool) -> bool {
        match m.get(key) {
            None => default,
            Some(Value::Bool(b)) => *b,
            Some(_) => {
                self.errors.push(format!("{} must be true or false", join(path, key)));
                default
            }
        }
    }

    fn string<'a>(&mut self, m: &'a Map<String, Value>, path: &str, key: &str) -> Option<&'a str> {
        match m.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(_) => {
                self.errors.push(format!("{} must be a string", join(path, key)));
                None
            }
        }
    }

    fn reals(&mut self, m: &Map<String, Value>, path: &str, key: &str, default: Vec<f64>, rule: Rule) -> Vec<f64> {
        let name = join(path, key);
        match m.get(key) {
            None => default,
            Some(Value::Array(a)) => a
                .iter()
                .enumerate()
                .map(|(i, v)| match v.as_f64() {
                    Some(x) if rule.holds(x) => x,
                    Some(x) => {
                        self.errors.push(format!("{name}[{i}] {}", rule.describe()));
                        x
                    }
                    None => {
                        self.errors.push(format!("{name}[{i}] must be a number"));
                        f64::NAN
                    }
                })
                .collect(),
            Some(_) => {
                self.errors.push(format!("{name} must be an array of numbers"));
                default
            }
        }
    }

    fn config(&mut self, v: &Value) -> Option<ScenarioConfig> {
        let m = self.object("", v, &["name", "flow", "ansatz", "solver", "analyses", "C_s", "output_dir", "seed"])?;
        let name = self.string(m, "", "name").unwrap_or("scenario").to_string();
        let flow = match self.string(m, "", "flow") {
            Some("CRF") => Some(FlowKind::Crf),
            Some("RHF") => Some(FlowKind::Rhf),
            Some(other) => {
                self.errors.push(format!("flow must be \"CRF\" or \"RHF\", got \"{other}\""));
                None
            }
            None => {
                if !m.contains_key("flow") {
                    self.errors.push("flow is required".into());
                }
                None
            }
        };
        let ansatz = match m.get("ansatz") {
            Some(a) => self.ansatz(a),
            None => {
                self.errors.push("ansatz is required".into());
                None
            }
        };
        let empty = Value::Object(Map::new());
        let solver = self.solver(m.get("solver").unwrap_or(&empty));
        let analyses = self.analyses(m.get("analyses").unwrap_or(&empty));
        let c_s = self.opt_real(m, "", "C_s", Rule::Gt(0.0));
        let output_dir = match self.string(m, "", "output_dir") {
            Some(s) if !s.is_empty() => s.to_string(),
            Some(_) => {
                self.errors.push("output_dir must not be empty".into());
                String::new()
            }
            None => {
                if !m.contains_key("output_dir") {
                    self.errors.push("output_dir is required".into());
                }
                String::new()
            }
        };
        let seed = self.int(m, "", "seed", 0, 0, u64::MAX);
        if let (Some(f), Some(a)) = (flow, &ansatz) {
            self.compatible(f, a);
        }
        Some(ScenarioConfig { name, flow: flow?, ansatz: ansatz?, solver: solver?, analyses: analyses?, c_s, output_dir, seed })
    }

    fn compatible(&mut self, flow: FlowKind, a: &Ansatz) {
        match (flow, a) {
            (FlowKind::Rhf, Ansatz::TorusH { h, .. }) if *h != 0.0 => self.errors.push("preset torus-H requires flow CRF".into()),
            (FlowKind::Crf, Ansatz::Winding { kappa, alpha, .. }) if *kappa != 0.0 && *alpha != 0.0 => {
                self.errors.push("preset winding with alpha != 0 requires flow RHF".into())
            }
            (
                FlowKind::Crf,
                Ansatz::RoundSphere { alpha, phi_amp, .. } | Ansatz::DumbbellNeckpinch { alpha, phi_amp, .. },
            ) if *alpha != 0.0 && *phi_amp != 0.0 => self.errors.push("a non-constant map (phi_amp != 0) requires flow RHF".into()),
            _ => {}
        }
    }

    fn torus_u0(&mut self, m: &Map<String, Value>) -> (usize, Vec<f64>) {
        let dim = self.int(m, "ansatz", "m", 3, 3, 8) as usize;
        let u0 = self.reals(m, "ansatz", "u0", vec![1.0; dim], Rule::Gt(0.0));
        if u0.len() != dim {
            self.errors.push(format!("ansatz.u0 must have m = {dim} entries, got {}", u0.len()));
        }
        (dim, u0)
    }

    fn ansatz(&mut self, v: &Value) -> Option<Ansatz> {
        let Some(preset) = v.get("preset").and_then(Value::as_str) else {
            self.errors.push("ansatz.preset is required (round-sphere, dumbbell-neckpinch, torus-H, winding, flat-torus)".into());
            return None;
        };
        let p = "ansatz";
        Some(match preset {
            "round-sphere" => {
                let m = self.object(p, v, &["preset", "n", "nodes", "c0", "sampling", "alpha", "phi_amp"])?;
                let sampling = match self.string(m, p, "sampling") {
                    None | Some("consistent") => Sampling::Consistent,
                    Some("geometric") => Sampling::Geometric,
                    Some(s) => {
                        self.errors.push(format!("ansatz.sampling must be \"consistent\" or \"geometric\", got \"{s}\""));
                        Sampling::Consistent
                    }
                };
                Ansatz::RoundSphere {
                    n: self.int(m, p, "n", 3, 3, 16) as usize,
                    nodes: self.int(m, p, "nodes", 65, 16, 20001) as usize,
                    c0: self.real(m, p, "c0", Some(1.0), Rule::Gt(0.0)),
                    sampling,
                    alpha: self.real(m, p, "alpha", Some(0.0), Rule::Ge(0.0)),
                    phi_amp: self.real(m, p, "phi_amp", Some(0.0), Rule::Finite),
                }
            }
            "dumbbell-neckpinch" => {
                let m = self.object(p, v, &["preset", "n", "nodes", "beta", "scale", "alpha", "phi_amp"])?;
                Ansatz::DumbbellNeckpinch {
                    n: self.int(m, p, "n", 3, 3, 16) as usize,
                    nodes: self.int(m, p, "nodes", 401, 16, 20001) as usize,
                    beta: self.real(m, p, "beta", Some(0.9), Rule::ClosedOpen(0.0, 1.0)),
                    scale: self.real(m, p, "scale", Some(1.0), Rule::Gt(0.0)),
                    alpha: self.real(m, p, "alpha", Some(0.0), Rule::Ge(0.0)),
                    phi_amp: self.real(m, p, "phi_amp", Some(0.0), Rule::Finite),
                }
            }
            "torus-H" => {
                let m = self.object(p, v, &["preset", "m", "u0", "h"])?;
                let (dim, u0) = self.torus_u0(m);
                Ansatz::TorusH { m: dim, u0, h: self.real(m, p, "h", Some(1.0), Rule::Finite) }
            }
            "winding" => {
                let m = self.object(p, v, &["preset", "m", "u0", "axis", "kappa", "alpha"])?;
                let (dim, u0) = self.torus_u0(m);
                let axis = self.int(m, p, "axis", 0, 0, dim.saturating_sub(1) as u64) as usize;
                Ansatz::Winding {
                    m: dim,
                    u0,
                    axis,
                    kappa: self.real(m, p, "kappa", Some(1.0), Rule::Finite),
                    alpha: self.real(m, p, "alpha", Some(1.0), Rule::Ge(0.0)),
                }
            }
            "flat-torus" => {
                let m = self.object(p, v, &["preset", "m", "u0", "alpha"])?;
                let (dim, u0) = self.torus_u0(m);
                Ansatz::FlatTorus { m: dim, u0, alpha: self.real(m, p, "alpha", Some(0.0), Rule::Ge(0.0)) }
            }
            other => {
                self.errors.push(format!("unknown ansatz.preset \"{other}\""));
                return None;
            }
        })
    }

    fn solver(&mut self, v: &Value) -> Option<SolverOptions> {
        let p = "solver";
        let m = self.object(
            p,
            v,
            &["sigma", "t_max", "P_stop", "psi_floor", "dt_max", "fixed_dt", "snapshot_target", "pole_tol", "max_steps"],
        )?;
        let d = SolverOptions::default();
        Some(SolverOptions {
            sigma: self.real(m, p, "sigma", Some(d.sigma), Rule::OpenClosed(0.0, 1.0)),
            t_max: self.real(m, p, "t_max", Some(d.t_max), Rule::Gt(0.0)),
            p_stop: self.real(m, p, "P_stop", Some(d.p_stop), Rule::Gt(0.0)),
            psi_floor: self.real(m, p, "psi_floor", Some(d.psi_floor), Rule::Ge(0.0)),
            dt_max: self.opt_real(m, p, "dt_max", Rule::Gt(0.0)),
            fixed_dt: self.opt_real(m, p, "fixed_dt", Rule::Gt(0.0)),
            snapshot_target: self.int(m, p, "snapshot_target", d.snapshot_target as u64, 1, 1_000_000) as usize,
            pole_tol: self.real(m, p, "pole_tol", Some(POLE_SLOPE_TOL), Rule::Gt(0.0)),
            max_steps: self.int(m, p, "max_steps", d.max_steps as u64, 1, 1_000_000_000) as usize,
        })
    }

    fn analyses(&mut self, v: &Value) -> Option<Analyses> {
        let m = self.object("analyses", v, &["classify", "blowup", "entropy", "verify"])?;
        let mut out = Analyses::default();
        if let Some(v) = m.get("classify").filter(|v| !v.is_null()) {
            let p = "analyses.classify";
            if let Some(m) = self.object(p, v, &["kappa", "slope_max", "decay", "window"]) {
                let d = ClassifyOptions::default();
                out.classify = Some(ClassifySettings {
                    options: ClassifyOptions {
                        kappa: self.real(m, p, "kappa", Some(d.kappa), Rule::Ge(1.0)),
                        slope_max: self.real(m, p, "slope_max", Some(d.slope_max), Rule::Gt(0.0)),
                        decay: self.real(m, p, "decay", Some(d.decay), Rule::OpenClosed(0.0, 1.0)),
                    },
                    window: self.int(m, p, "window", 20, 4, 100_000) as usize,
                });
            }
        }
        if let Some(v) = m.get("blowup").filter(|v| !v.is_null()) {
            let p = "analyses.blowup";
            if let Some(m) = self.object(p, v, &["c1", "c2", "max_windows", "s_back", "tol"]) {
                out.blowup = Some(BlowupSettings {
                    c1: self.real(m, p, "c1", Some(1.0), Rule::OpenClosed(0.0, 1.0)),
                    c2: self.real(m, p, "c2", Some(1.0), Rule::OpenClosed(0.0, 1.0)),
                    max_windows: self.int(m, p, "max_windows", 8, 1, 10_000) as usize,
                    s_back: self.opt_real(m, p, "s_back", Rule::Gt(0.0)),
                    tol: self.real(m, p, "tol", Some(0.05), Rule::Ge(0.0)),
                });
            }
        }
        if let Some(v) = m.get("entropy").filter(|v| !v.is_null()) {
            let p = "analyses.entropy";
            let keys = [
                "taus",
                "nu",
                "volume_bound",
                "monotonicity",
                "monotonicity_points",
                "t_sing",
                "soliton_tau",
                "tol",
                "max_iters",
            ];
            if let Some(m) = self.object(p, v, &keys) {
                out.entropy = Some(EntropySettings {
                    taus: self.reals(m, p, "taus", vec![], Rule::Gt(0.0)),
                    nu: self.boolean(m, p, "nu", false),
                    volume_bound: self.boolean(m, p, "volume_bound", false),
                    monotonicity: self.boolean(m, p, "monotonicity", false),
                    monotonicity_points: self.int(m, p, "monotonicity_points", 40, 2, 10_000) as usize,
                    t_sing: self.opt_real(m, p, "t_sing", Rule::Gt(0.0)),
                    soliton_tau: self.opt_real(m, p, "soliton_tau", Rule::Gt(0.0)),
                    tol: self.real(m, p, "tol", Some(1e-8), Rule::Gt(0.0)),
                    max_iters: self.int(m, p, "max_iters", 20_000, 1, 10_000_000) as usize,
                });
            }
        }
        if let Some(v) = m.get("verify").filter(|v| !v.is_null()) {
            let p = "analyses.verify";
            let keys = [
                "checks",
                "oracle_tol",
                "oracle_t_frac",
                "residual_samples",
                "residual_dt",
                "refinement_dt",
                "refinement_times",
            ];
            if let Some(m) = self.object(p, v, &keys) {
                let checks = match m.get("checks") {
                    None => VERIFY_CHECKS.iter().map(|s| s.to_string()).collect(),
                    Some(Value::Array(a)) => a
                        .iter()
                        .filter_map(|c| match c.as_str() {
                            Some(s) if VERIFY_CHECKS.contains(&s) => Some(s.to_string()),
                            _ => {
                                self.errors.push(format!("{p}.checks: unknown check {c} (known: {})", VERIFY_CHECKS.join(", ")));
                                None
                            }
                        })
                        .collect(),
                    Some(_) => {
                        self.errors.push(format!("{p}.checks must be an array of check names"));
                        vec![]
                    }
                };
                out.verify = Some(VerifySettings {
                    checks,
                    oracle_tol: self.real(m, p, "oracle_tol", Some(1e-6), Rule::Gt(0.0)),
                    oracle_t_frac: self.real(m, p, "oracle_t_frac", Some(0.9), Rule::OpenClosed(0.0, 1.0)),
                    residual_samples: self.int(m, p, "residual_samples", 5, 1, 1000) as usize,
                    residual_dt: self.opt_real(m, p, "residual_dt", Rule::Gt(0.0)),
                    refinement_dt: self.real(m, p, "refinement_dt", Some(1e-3), Rule::Gt(0.0)),
                    refinement_times: self.reals(m, p, "refinement_times", vec![0.0, 0.01], Rule::Ge(0.0)),
                });
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema_errors(text: &str) -> Vec<String> {
        match parse_config(text) {
            Err(ConfigError::Schema(v)) => v,
            other => panic!("expected schema errors, got {other:?}"),
        }
    }

    #[test]
    fn minimal_sphere_config() {
        let c = parse_config(r#"{"flow": "CRF", "ansatz": {"preset": "round-sphere", "n": 3, "c0": 1}, "output_dir": "out"}"#).unwrap();
        assert_eq!(c.ansatz, Ansatz::RoundSphere { n: 3, nodes: 65, c0: 1.0, sampling: Sampling::Consistent, alpha: 0.0, phi_amp: 0.0 });
        assert_eq!(c.solver, SolverOptions::default());
        assert!(c.analyses.is_empty());
        assert!(c.ansatz.oracle().is_some());
    }

    #[test]
    fn negative_p_stop() {
        let e = schema_errors(r#"{"flow": "CRF", "ansatz": {"preset": "round-sphere"}, "solver": {"P_stop": -1}, "output_dir": "o"}"#);
        assert_eq!(e, vec!["solver.P_stop must be > 0"]);
    }

    #[test]
    fn all_violations_listed() {
        let e = schema_errors(
            r#"{"flow": "XRF", "ansatz": {"preset": "torus-H", "m": 3, "u0": [1, -1, 1], "hh": 2},
                "solver": {"sigma": 2, "t_max": 0}, "bogus": 1, "output_dir": ""}"#,
        );
        assert_eq!(e.len(), 7, "{e:#?}");
        assert!(e.contains(&"unknown key `bogus`".to_string()));
        assert!(e.contains(&"unknown key `ansatz.hh`".to_string()));
        assert!(e.contains(&"ansatz.u0[1] must be > 0".to_string()));
    }

    #[test]
    fn parse_error_has_position() {
        match parse_config("{\n  \"flow\": \"CRF\",\n  oops\n}") {
            Err(ConfigError::Parse { line, column, .. }) => assert_eq!((line, column), (3, 3)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn flow_preset_mismatch() {
        let e = schema_errors(r#"{"flow": "RHF", "ansatz": {"preset": "torus-H"}, "output_dir": "o"}"#);
        assert_eq!(e, vec!["preset torus-H requires flow CRF"]);
    }

    #[test]
    fn unknown_verify_check() {
        let e = schema_errors(r#"{"flow": "CRF", "ansatz": {"preset": "flat-torus"}, "output_dir": "o", "analyses": {"verify": {"checks": ["oracle", "nope"]}}}"#);
        assert_eq!(e.len(), 1);
        assert!(e[0].starts_with("analyses.verify.checks: unknown check \"nope\""));
    }

    #[test]
    fn normalized_config_round_trips() {
        let c = parse_config(
            r#"{"flow": "RHF", "ansatz": {"preset": "winding"}, "output_dir": "o",
                "analyses": {"blowup": {"s_back": 10}, "entropy": {"taus": [1], "nu": true}}}"#,
        )
        .unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ScenarioConfig>(&text).unwrap(), c);
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
