//! Run orchestration and the on-disk artifacts of a run directory.
//!
//! Layout: `config.json` (normalized), `run.json`, `series.csv`,
//! `snapshots/snapshot_<step>.json`, `verdict.json`, `blowup.json`,
//! `entropy.json`, `checks.json` and `manifest.json`.

use std::fs;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{self, BlowupSettings, ClassifySettings, EntropySettings, ScenarioConfig, VerifySettings};
use crate::entropy::{self, EntropyReport, MinOptions, BOUND_TOL};
use crate::error::{FlowError, Result};
use crate::flow::{self, FlowHistory, SeriesRow, Snapshot, TEstimate, Termination};
use crate::geometry::{FlowKind, Gauge, GeometryState};
use crate::serde_ext;
use crate::singularity::{self, BlowupSequence, ClassifyOptions, Pick, SingularityVerdict};
use crate::verification::{self, DOUBLING_SPREAD};

pub const SERIES_HEADER: &str = "t,sup_AC,volume,S_min,sup_H2,dt";
pub const OUT_ENV: &str = "FLOWLAB_OUT";
pub const NO_CHECKS: &str = "no checks requested";

/// `|AC - 1|` allowed at the picked point of a rescaled window.
pub const NORMALIZATION_TOL_TORUS: f64 = 1e-10;
pub const NORMALIZATION_TOL_ROTSYM: f64 = 1e-6;
/// Closed-form torus residuals.
pub const TORUS_RESIDUAL_TOL: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    /// Evolve, then every requested analysis.
    Run,
    /// Evolve, then only the verification suite.
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Analysis {
    Classify,
    Blowup,
    Entropy,
}

impl Analysis {
    fn group(self) -> &'static str {
        match self {
            Analysis::Classify => "classify",
            Analysis::Blowup => "blowup",
            Analysis::Entropy => "entropy",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub group: String,
    pub pass: bool,
    pub skipped: bool,
    #[serde(with = "serde_ext::ext")]
    pub margin: f64,
    pub thresholds: Value,
    pub notes: Vec<String>,
    pub details: Value,
}

impl CheckResult {
    fn new<T: Serialize>(name: &str, group: &str, pass: bool, margin: f64, thresholds: Value, details: &T) -> Self {
        CheckResult {
            name: name.into(),
            group: group.into(),
            pass,
            skipped: false,
            margin,
            thresholds,
            notes: vec![],
            details: serde_json::to_value(details).unwrap_or(Value::Null),
        }
    }

    fn skipped(name: &str, group: &str, note: impl Into<String>) -> Self {
        CheckResult {
            name: name.into(),
            group: group.into(),
            pass: true,
            skipped: true,
            margin: f64::NAN,
            thresholds: Value::Null,
            notes: vec![note.into()],
            details: Value::Null,
        }
    }

    fn note(mut self, n: impl Into<String>) -> Self {
        self.notes.push(n.into());
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub name: String,
    pub kind: FlowKind,
    pub gauge: Option<Gauge>,
    pub termination: Termination,
    pub stride: usize,
    pub steps: usize,
    pub t_final: f64,
    pub snapshots: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerdictFile {
    #[serde(flatten)]
    pub verdict: SingularityVerdict,
    pub estimate: TEstimate,
    pub termination: Termination,
    pub t_final: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub pick: Pick,
    pub ac_at_pick: f64,
    /// `(s, sup AC)` over the rescaled window.
    pub series: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupFile {
    pub settings: BlowupSettings,
    pub picks: Vec<Pick>,
    pub windows: Vec<WindowSummary>,
    pub volume_trend: entropy::BlowupVolumeTrend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, Default)]
pub struct RunReport {
    pub out_dir: PathBuf,
    pub meta: Option<RunMeta>,
    pub verdict: Option<VerdictFile>,
    pub blowup: Option<BlowupFile>,
    pub entropy: Option<EntropyReport>,
    pub checks: Vec<CheckResult>,
    pub errors: Vec<String>,
    pub notices: Vec<String>,
    pub manifest: Vec<ManifestEntry>,
}

impl RunReport {
    pub fn failed_checks(&self) -> Vec<&CheckResult> {
        self.checks.iter().filter(|c| !c.pass).collect()
    }

    pub fn check(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.name == name)
    }

    /// 0 all requested checks pass, 1 a check failed, 3 a runtime error.
    pub fn exit_code(&self) -> i32 {
        if !self.errors.is_empty() {
            3
        } else if !self.failed_checks().is_empty() {
            1
        } else {
            0
        }
    }

    fn capture(&mut self, what: &str, r: Result<()>) {
        if let Err(e) = r {
            self.errors.push(format!("{what}: {e}"));
        }
    }
}

pub fn output_root() -> PathBuf {
    match std::env::var_os(OUT_ENV) {
        Some(v) if !v.is_empty() => PathBuf::from(v),
        _ => PathBuf::from("."),
    }
}

/// `output_dir` under the output root, unless it is absolute.
pub fn resolve_out_dir(cfg: &ScenarioConfig) -> PathBuf {
    let p = Path::new(&cfg.output_dir);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        output_root().join(p)
    }
}

fn write_json<T: Serialize + ?Sized>(path: &Path, v: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| FlowError::InvalidParameter(format!("{}: {e}", path.display())))?;
    Ok(serde_json::from_str(&text)?)
}

fn fmt_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else if v == 0.0 || (1e-4..1e15).contains(&v.abs()) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

pub fn series_csv(rows: &[SeriesRow]) -> String {
    let mut s = String::with_capacity(64 * rows.len());
    s.push_str(SERIES_HEADER);
    s.push('\n');
    for r in rows {
        let cells = [r.t, r.sup_ac, r.volume, r.s_min, r.sup_h2, r.dt].map(fmt_real);
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn parse_series_csv(text: &str) -> Result<Vec<SeriesRow>> {
    let mut lines = text.lines();
    if lines.next() != Some(SERIES_HEADER) {
        return Err(FlowError::InvalidParameter("series.csv: unexpected header".into()));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let v: Vec<f64> = l.split(',').map(|c| c.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|e| {
                FlowError::InvalidParameter(format!("series.csv line {}: {e}", i + 2))
            })?;
            if v.len() != 6 {
                return Err(FlowError::InvalidParameter(format!("series.csv line {}: expected 6 columns", i + 2)));
            }
            Ok(SeriesRow { t: v[0], sup_ac: v[1], volume: v[2], s_min: v[3], sup_h2: v[4], dt: v[5] })
        })
        .collect()
}

fn snapshot_name(step: usize) -> String {
    format!("snapshot_{step:08}.json")
}

fn write_history(dir: &Path, cfg: &ScenarioConfig, h: &FlowHistory) -> Result<RunMeta> {
    fs::write(dir.join("series.csv"), series_csv(&h.series))?;
    let snap_dir = dir.join("snapshots");
    if snap_dir.is_dir() {
        // Only stale snapshots from an earlier run into the same directory.
        for e in fs::read_dir(&snap_dir)? {
            let p = e?.path();
            if p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("snapshot_") && n.ends_with(".json")) {
                fs::remove_file(p)?;
            }
        }
    }
    fs::create_dir_all(&snap_dir)?;
    for s in &h.snapshots {
        let mut text = serde_json::to_string(s)?;
        text.push('\n');
        fs::write(snap_dir.join(snapshot_name(s.step)), text)?;
    }
    let meta = RunMeta {
        name: cfg.name.clone(),
        kind: h.kind,
        gauge: h.gauge.clone(),
        termination: h.termination,
        stride: h.stride,
        steps: h.series.len() - 1,
        t_final: h.t_final(),
        snapshots: h.snapshots.len(),
        seed: cfg.seed,
    };
    write_json(&dir.join("run.json"), &meta)?;
    Ok(meta)
}

/// Reload the configuration and history stored in a run directory.
pub fn load_run(dir: &Path) -> Result<(ScenarioConfig, FlowHistory)> {
    let cfg = config::load_config(&dir.join("config.json")).map_err(|e| FlowError::InvalidParameter(e.to_string()))?;
    let meta: RunMeta = read_json(&dir.join("run.json"))?;
    let series = parse_series_csv(&fs::read_to_string(dir.join("series.csv"))?)?;
    let mut names: Vec<PathBuf> = fs::read_dir(dir.join("snapshots"))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("snapshot_")))
        .collect();
    names.sort();
    let snapshots = names.iter().map(|p| read_json::<Snapshot>(p)).collect::<Result<Vec<_>>>()?;
    if snapshots.len() != meta.snapshots {
        return Err(FlowError::InvalidState(format!("expected {} snapshots, found {}", meta.snapshots, snapshots.len())));
    }
    Ok((cfg, FlowHistory { kind: meta.kind, gauge: meta.gauge, snapshots, series, termination: meta.termination, stride: meta.stride }))
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

fn collect_files(root: &Path, dir: &Path, out: &mut Vec<ManifestEntry>) -> Result<()> {
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            collect_files(root, &p, out)?;
        } else {
            let rel: Vec<String> = p
                .strip_prefix(root)
                .expect("walk stays under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect();
            let rel = rel.join("/");
            if rel == "manifest.json" {
                continue;
            }
            let bytes = fs::read(&p)?;
            out.push(ManifestEntry { path: rel, sha256: sha256_hex(&bytes), bytes: bytes.len() as u64 });
        }
    }
    Ok(())
}

/// Hash every file in the run directory into `manifest.json`.
pub fn write_manifest(dir: &Path) -> Result<Vec<ManifestEntry>> {
    let mut files = Vec::new();
    collect_files(dir, dir, &mut files)?;
    files.sort_by(|a, b| a.path.cmp(&b.path));
    write_json(&dir.join("manifest.json"), &json!({ "flowlab_version": env!("CARGO_PKG_VERSION"), "files": files }))?;
    Ok(files)
}

fn min_options(cfg: &ScenarioConfig, e: &EntropySettings) -> MinOptions {
    MinOptions { tol: e.tol, max_iters: e.max_iters, seed: Some(cfg.seed) }
}

fn default_classify() -> ClassifySettings {
    ClassifySettings { options: ClassifyOptions::default(), window: 20 }
}

fn verdict_of(h: &FlowHistory, s: &ClassifySettings) -> VerdictFile {
    let estimate = flow::estimate_t(h, s.window);
    let verdict = singularity::classify(h, estimate.t_hat, &s.options);
    VerdictFile { verdict, estimate, termination: h.termination, t_final: h.t_final() }
}

fn classify_checks(h: &FlowHistory, v: &VerdictFile) -> Vec<CheckResult> {
    const G: &str = "classify";
    let Some(t_hat) = v.estimate.t_hat else {
        let why = "singular time is infinite";
        return vec![CheckResult::skipped("lower_bound", G, why), CheckResult::skipped("inj", G, why)];
    };
    let lb = singularity::lower_bound_check(h, Some(t_hat));
    let inj = singularity::inj_estimate_check(h);
    let inj_detail = json!({ "c_i": inj.c_i, "spread": inj.spread, "points": inj.series.len() });
    vec![
        CheckResult::new("lower_bound", G, lb.pass, lb.c_fit, json!({ "c_fit_min_exclusive": 0.0, "spread_max": 10.0 }), &lb),
        CheckResult::new("inj", G, inj.pass, inj.c_i, json!({ "c_i_min_exclusive": 0.0, "spread_max": 10.0 }), &inj_detail),
    ]
}

fn blowup_analysis(h: &FlowHistory, s: &BlowupSettings, verdict: &SingularityVerdict) -> Result<(BlowupFile, Vec<CheckResult>)> {
    const G: &str = "blowup";
    let seq: BlowupSequence = singularity::blowup(h, s.c1, s.c2, s.max_windows, s.s_back)?;
    let torus = h.snapshots[0].state.is_torus();
    let mut checks = Vec::new();
    if seq.windows.is_empty() {
        checks.push(CheckResult::skipped("dilation_normalization", G, "empty blow-up list"));
    } else {
        let tol = if torus { NORMALIZATION_TOL_TORUS } else { NORMALIZATION_TOL_ROTSYM };
        let devs: Vec<f64> = seq.windows.iter().map(|w| (w.ac_at_pick - 1.0).abs()).collect();
        let worst = devs.iter().cloned().fold(0.0, f64::max);
        checks.push(CheckResult::new("dilation_normalization", G, worst <= tol, worst, json!({ "max_abs_deviation": tol }), &devs));
    }
    let mb = singularity::check_model_bounds(&seq, verdict, s.tol);
    checks.push(if mb.applicable && !seq.windows.is_empty() {
        CheckResult::new("model_bounds", G, mb.pass, mb.margin, json!({ "margin_min": 0.0, "tol": s.tol }), &mb)
    } else {
        CheckResult::skipped("model_bounds", G, mb.notes.join("; "))
    });
    let an = verification::ancient_nonnegativity_check(&seq);
    checks.push(if an.skipped {
        CheckResult::skipped("ancient", G, an.notes.join("; "))
    } else {
        let tail = &an.eps[an.eps.len().saturating_sub(5)..];
        let margin = tail.windows(2).map(|w| w[0] - w[1]).fold(f64::INFINITY, f64::min);
        CheckResult::new("ancient", G, an.pass, margin, json!({ "eps_nonincreasing_over_last": 5 }), &an)
    });
    let file = BlowupFile {
        settings: s.clone(),
        picks: seq.picks.clone(),
        windows: seq
            .windows
            .iter()
            .map(|w| WindowSummary {
                pick: w.pick,
                ac_at_pick: w.ac_at_pick,
                series: w.history.series.iter().map(|r| (r.t, r.sup_ac)).collect(),
            })
            .collect(),
        volume_trend: entropy::blowup_volume_trend(h, &seq.picks),
    };
    Ok((file, checks))
}

fn entropy_analysis(
    cfg: &ScenarioConfig,
    h: &FlowHistory,
    s: &EntropySettings,
    t_hat: Option<f64>,
) -> Result<(EntropyReport, Vec<CheckResult>)> {
    const G: &str = "entropy";
    let opts = min_options(cfg, s);
    let state = &h.snapshots[0].state;
    let lam = entropy::lambda_alpha(state)?;
    let mu = s.taus.iter().map(|&t| entropy::mu_alpha(state, t, &opts)).collect::<Result<Vec<_>>>()?;
    let nu = if s.nu { Some(entropy::nu_alpha(state, &opts)?) } else { None };
    let mut checks = Vec::new();
    let mut mu_bounds = Vec::new();
    let mut nonpos = Vec::new();
    for &tau in &s.taus {
        let b = entropy::check_mu_bounds(state, tau, cfg.c_s, &opts)?;
        let margin = b.upper_residual.min(b.lower_residual.unwrap_or(f64::INFINITY));
        let th = json!({ "residual_min": -BOUND_TOL, "tau": tau, "C_s": cfg.c_s });
        let mut c = CheckResult::new("mu_bounds", G, b.pass, margin, th, &b);
        c.notes = b.notes.clone();
        checks.push(c);
        mu_bounds.push(b);
        let n = entropy::check_nonpositive_lambda_bound(state, tau, &opts)?;
        checks.push(if n.applicable {
            CheckResult::new("nonpositive_lambda", G, n.pass, n.residual, json!({ "residual_min": -BOUND_TOL, "tau": tau }), &n)
        } else {
            CheckResult::skipped("nonpositive_lambda", G, format!("lambda_alpha = {} > 0", lam.value))
        });
        nonpos.push(n);
    }
    let volume_bound = if s.volume_bound {
        let v = entropy::check_volume_bound(h)?;
        checks.push(if v.applicable {
            CheckResult::new("volume_bound", G, v.pass, v.margin, json!({ "margin_min": 0.0 }), &v)
        } else {
            CheckResult::skipped("volume_bound", G, "lambda_alpha > 0 somewhere along the run")
        });
        Some(v)
    } else {
        None
    };
    let monotonicity = if s.monotonicity {
        let t_final = h.t_final();
        let t_sing = s.t_sing.or(t_hat.filter(|t| *t > t_final)).unwrap_or(t_final + (0.1 * t_final).max(1.0));
        let m = entropy::monotonicity_check(h, t_sing, s.monotonicity_points, &opts)?;
        let c = CheckResult::new("monotonicity", G, m.pass, m.min_increment, json!({ "min_increment_min": -m.tol }), &m);
        checks.push(c.note(format!("T = {t_sing}")));
        Some(m)
    } else {
        None
    };
    let soliton = s.soliton_tau.map(|tau| entropy::soliton_residual(state, None, tau)).transpose()?;
    let report = EntropyReport {
        t: state.t(),
        lambda: lam.value,
        eigenfunction: lam.eigenfunction,
        mu,
        nu_value: nu.as_ref().map_or(f64::NAN, |n| n.value),
        nu,
        mu_bounds,
        nonpositive_lambda: nonpos,
        volume_bound,
        monotonicity,
        soliton,
    };
    Ok((report, checks))
}

fn verify_checks(cfg: &ScenarioConfig, h: &FlowHistory, s: &VerifySettings) -> Vec<CheckResult> {
    const G: &str = "verify";
    let rotsym = cfg.ansatz.is_rotsym();
    let mut out = Vec::new();
    for name in &s.checks {
        let r: Result<CheckResult> = (|| {
            Ok(match name.as_str() {
                "oracle" => match cfg.ansatz.oracle() {
                    None => CheckResult::skipped("oracle", G, format!("no closed-form solution for preset {}", cfg.ansatz.preset())),
                    Some(sc) => {
                        let a = verification::oracle_agreement(h, &sc, s.oracle_t_frac, s.oracle_tol)?;
                        let th = json!({ "max_rel_error": s.oracle_tol, "t_frac": s.oracle_t_frac });
                        CheckResult::new("oracle", G, a.pass, a.max_error, th, &a)
                    }
                },
                "residuals" => {
                    let r = verification::residual_scalar_evolution(h, s.residual_samples, s.oracle_t_frac, s.residual_dt)?;
                    let worst = r.max.iter().map(|m| m.1).fold(0.0, f64::max);
                    if rotsym {
                        CheckResult::new("residuals", G, worst.is_finite(), worst, json!({ "finite": true }), &r)
                            .note("grid residuals are judged by the refinement check")
                    } else {
                        CheckResult::new("residuals", G, worst < TORUS_RESIDUAL_TOL, worst, json!({ "max_residual": TORUS_RESIDUAL_TOL }), &r)
                    }
                }
                "refinement" if !rotsym => CheckResult::skipped("refinement", G, "no spatial grid on the torus ansatz"),
                "refinement" => {
                    let nodes = match cfg.ansatz {
                        config::Ansatz::RoundSphere { nodes, .. } | config::Ansatz::DumbbellNeckpinch { nodes, .. } => nodes,
                        _ => unreachable!(),
                    };
                    let make = |nn: usize| cfg.ansatz.build(Some(nn));
                    let r = verification::refinement_study(make, cfg.flow, nodes, s.refinement_dt, &s.refinement_times)?;
                    let th = json!({ "min_ratio": r.threshold, "dt": s.refinement_dt, "times": s.refinement_times });
                    CheckResult::new("refinement", G, r.pass, r.min_ratio, th, &r)
                }
                "smin" if cfg.flow != FlowKind::Rhf => CheckResult::skipped("smin", G, "applies to RHF runs"),
                "smin" => {
                    let c = verification::smin_ode_check(h);
                    CheckResult::new("smin", G, c.pass, c.slack, json!({ "slack_min": 0.0 }), &c)
                }
                "h_growth" if cfg.flow != FlowKind::Crf => CheckResult::skipped("h_growth", G, "applies to CRF runs"),
                "h_growth" => {
                    let c = verification::h_growth_check(h)?;
                    CheckResult::new("h_growth", G, c.pass, c.margin, json!({ "margin_min": -1e-12 * c.k2 }), &c)
                }
                "doubling" => {
                    let c = verification::doubling_bound_check(h)?;
                    CheckResult::new("doubling", G, c.pass, c.spread, json!({ "spread_max_exclusive": DOUBLING_SPREAD }), &c)
                }
                other => return Err(FlowError::InvalidParameter(format!("unknown check {other}"))),
            })
        })();
        out.push(r.unwrap_or_else(|e| {
            let mut c = CheckResult::skipped(name, G, format!("error: {e}"));
            c.skipped = false;
            c.pass = false;
            c
        }));
    }
    out
}

fn initial(cfg: &ScenarioConfig) -> Result<GeometryState> {
    cfg.ansatz.build(None)
}

/// Evolve the scenario and run the analyses `mode` asks for. Errors are
/// recorded in the report; whatever was written before them stays on disk.
pub fn execute(cfg: &ScenarioConfig, mode: Mode) -> RunReport {
    let mut rep = RunReport { out_dir: resolve_out_dir(cfg), ..Default::default() };
    if mode == Mode::Verify && cfg.analyses.verify.is_none() {
        rep.notices.push(NO_CHECKS.into());
        return rep;
    }
    if mode == Mode::Run && cfg.analyses.is_empty() {
        rep.notices.push(NO_CHECKS.into());
    }
    let r = execute_inner(cfg, mode, &mut rep);
    rep.capture("run", r);
    if rep.out_dir.is_dir() {
        match write_manifest(&rep.out_dir) {
            Ok(m) => rep.manifest = m,
            Err(e) => rep.errors.push(format!("manifest: {e}")),
        }
    }
    rep
}

fn execute_inner(cfg: &ScenarioConfig, mode: Mode, rep: &mut RunReport) -> Result<()> {
    let dir = rep.out_dir.clone();
    fs::create_dir_all(&dir)?;
    write_json(&dir.join("config.json"), cfg)?;
    let h = flow::evolve(&initial(cfg)?, cfg.flow, &cfg.solver)?;
    rep.meta = Some(write_history(&dir, cfg, &h)?);
    if mode == Mode::Run {
        let v = verdict_of(&h, cfg.analyses.classify.as_ref().unwrap_or(&default_classify()));
        write_json(&dir.join("verdict.json"), &v)?;
        if cfg.analyses.classify.is_some() {
            rep.checks.extend(classify_checks(&h, &v));
        }
        if let Some(b) = &cfg.analyses.blowup {
            let r = blowup_analysis(&h, b, &v.verdict).and_then(|(f, c)| {
                write_json(&dir.join("blowup.json"), &f)?;
                rep.checks.extend(c);
                rep.blowup = Some(f);
                Ok(())
            });
            rep.capture("blowup", r);
        }
        if let Some(e) = &cfg.analyses.entropy {
            let r = entropy_analysis(cfg, &h, e, v.estimate.t_hat).and_then(|(f, c)| {
                write_json(&dir.join("entropy.json"), &f)?;
                rep.checks.extend(c);
                rep.entropy = Some(f);
                Ok(())
            });
            rep.capture("entropy", r);
        }
        rep.verdict = Some(v);
    }
    if let Some(s) = &cfg.analyses.verify {
        rep.checks.extend(verify_checks(cfg, &h, s));
    }
    write_json(&dir.join("checks.json"), &rep.checks)
}

/// Re-run one analysis on a stored run directory, replacing its checks in
/// `checks.json` and refreshing the manifest.
pub fn analyze_dir(dir: &Path, what: Analysis) -> RunReport {
    let mut rep = RunReport { out_dir: dir.to_path_buf(), ..Default::default() };
    let r = analyze_inner(dir, what, &mut rep);
    rep.capture(what.group(), r);
    if dir.is_dir() {
        match write_manifest(dir) {
            Ok(m) => rep.manifest = m,
            Err(e) => rep.errors.push(format!("manifest: {e}")),
        }
    }
    rep
}

fn analyze_inner(dir: &Path, what: Analysis, rep: &mut RunReport) -> Result<()> {
    let (cfg, h) = load_run(dir)?;
    rep.meta = Some(read_json(&dir.join("run.json"))?);
    let classify = cfg.analyses.classify.clone().unwrap_or_else(default_classify);
    let v = verdict_of(&h, &classify);
    let fresh = match what {
        Analysis::Classify => {
            write_json(&dir.join("verdict.json"), &v)?;
            classify_checks(&h, &v)
        }
        Analysis::Blowup => {
            let s = cfg.analyses.blowup.clone().unwrap_or(BlowupSettings { c1: 1.0, c2: 1.0, max_windows: 8, s_back: None, tol: 0.05 });
            let (f, c) = blowup_analysis(&h, &s, &v.verdict)?;
            write_json(&dir.join("blowup.json"), &f)?;
            rep.blowup = Some(f);
            c
        }
        Analysis::Entropy => {
            let s = cfg.analyses.entropy.clone().unwrap_or(EntropySettings {
                taus: vec![1.0],
                nu: true,
                volume_bound: false,
                monotonicity: false,
                monotonicity_points: 40,
                t_sing: None,
                soliton_tau: None,
                tol: 1e-8,
                max_iters: 20_000,
            });
            let (f, c) = entropy_analysis(&cfg, &h, &s, v.estimate.t_hat)?;
            write_json(&dir.join("entropy.json"), &f)?;
            rep.entropy = Some(f);
            c
        }
    };
    rep.verdict = Some(v);
    let path = dir.join("checks.json");
    let mut all: Vec<CheckResult> = if path.exists() { read_json(&path)? } else { vec![] };
    all.retain(|c| c.group != what.group());
    all.extend(fresh.iter().cloned());
    write_json(&path, &all)?;
    rep.checks = fresh;
    Ok(())
}

/// One line per check, for terminal output.
pub fn summary(rep: &RunReport) -> String {
    let mut s = String::new();
    for n in &rep.notices {
        let _ = writeln!(s, "{n}");
    }
    for c in &rep.checks {
        let status = if c.skipped {
            "skip"
        } else if c.pass {
            "pass"
        } else {
            "FAIL"
        };
        let _ = writeln!(s, "[{status}] {}/{}  margin {}  {}", c.group, c.name, fmt_real(c.margin), c.notes.join("; "));
    }
    for e in &rep.errors {
        let _ = writeln!(s, "error: {e}");
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            SeriesRow { t: 0.0, sup_ac: 6.0, volume: 19.739208802178716, s_min: 1e-300, sup_h2: 0.0, dt: 0.0 },
            SeriesRow { t: 0.1, sup_ac: 1.5e17, volume: 2.0, s_min: -0.25, sup_h2: f64::INFINITY, dt: 3e-7 },
        ];
        let text = series_csv(&rows);
        assert!(text.starts_with("t,sup_AC,volume,S_min,sup_H2,dt\n0,6,19.739208802178716,1e-300,0,0\n"));
        assert!(!text.contains('\r'));
        assert_eq!(parse_series_csv(&text).unwrap(), rows);
    }

    #[test]
    fn csv_rejects_bad_header() {
        assert!(parse_series_csv("a,b\n").is_err());
    }

    #[test]
    fn exit_codes() {
        let mut r = RunReport::default();
        assert_eq!(r.exit_code(), 0);
        r.checks.push(CheckResult::skipped("x", "verify", "n/a"));
        assert_eq!(r.exit_code(), 0);
        r.checks[0].pass = false;
        assert_eq!(r.exit_code(), 1);
        r.errors.push("boom".into());
        assert_eq!(r.exit_code(), 3);
    }
}
