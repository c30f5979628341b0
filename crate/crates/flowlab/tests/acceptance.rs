//! Acceptance criteria 1-11. Each test prints one PASS/FAIL line with the
//! measured values, then asserts.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use flowlab::config::{load_config, ScenarioConfig};
use flowlab::entropy::{self, MinOptions};
use flowlab::flow::{self, FlowHistory, SolverOptions};
use flowlab::geometry::{FlowKind, GeometryState};
use flowlab::presets::{self, Sampling};
use flowlab::run::{self, Mode};
use flowlab::singularity::{self, ClassifyOptions, SingularityType};
use flowlab::verification::{self, OracleScenario};

fn scenario(name: &str) -> ScenarioConfig {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    load_config(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn evolve_scenario(name: &str) -> FlowHistory {
    let cfg = scenario(name);
    flow::evolve(&cfg.ansatz.build(None).unwrap(), cfg.flow, &cfg.solver).unwrap()
}

fn sphere() -> &'static FlowHistory {
    static H: OnceLock<FlowHistory> = OnceLock::new();
    H.get_or_init(|| evolve_scenario("round-sphere"))
}

fn torus_h() -> &'static FlowHistory {
    static H: OnceLock<FlowHistory> = OnceLock::new();
    H.get_or_init(|| evolve_scenario("torus-H"))
}

fn winding() -> &'static FlowHistory {
    static H: OnceLock<FlowHistory> = OnceLock::new();
    H.get_or_init(|| evolve_scenario("winding"))
}

fn report(n: u32, title: &str, checks: &[(String, bool)]) {
    let ok = checks.iter().all(|c| c.1);
    println!("criterion {n:2} {}: {title}", if ok { "PASS" } else { "FAIL" });
    for (msg, pass) in checks {
        println!("    [{}] {msg}", if *pass { "ok" } else { "!!" });
    }
    assert!(ok, "criterion {n} failed");
}

fn t_hat(h: &FlowHistory) -> Option<f64> {
    flow::estimate_t(h, 20).t_hat
}

#[test]
fn criterion_01_shrinking_sphere_oracle() {
    let h = sphere();
    let sc = OracleScenario::RoundSphere { n: 3, c0: 1.0 };
    let a = verification::oracle_agreement(h, &sc, 0.9, 1e-8).unwrap();
    let scale_err = a.errors.iter().find(|e| e.0 == "scale").unwrap().1;
    let th = t_hat(h).unwrap();
    let tf = h.t_final();
    report(
        1,
        "shrinking sphere c(t) = 1 - 4t",
        &[
            (format!("max rel error of c(t) before 0.9T = {scale_err:.3e} (tol 1e-8)"), scale_err <= 1e-8),
            (format!("t_final = {tf:.6} (|t - 0.25| <= 1e-3)"), (tf - 0.25).abs() <= 1e-3),
            (format!("T_hat = {th:.6} (|T - 0.25| <= 1e-3)"), (th - 0.25).abs() <= 1e-3),
        ],
    );
}

#[test]
fn criterion_02_type_one_constant() {
    let h = sphere();
    let v = singularity::classify(h, t_hat(h), &ClassifyOptions::default());
    let target = 3f64.sqrt() / 2.0;
    let worst = v.m_series.iter().map(|(_, m)| (m / target - 1.0).abs()).fold(0.0, f64::max);
    report(
        2,
        "sphere Type I with M = sqrt(3)/2",
        &[
            (format!("type = {:?}", v.kind), v.kind == SingularityType::I),
            (format!("max |M/(sqrt3/2) - 1| over {} trailing points = {worst:.3e} (tol 0.02)", v.m_series.len()), worst <= 0.02),
        ],
    );
}

#[test]
fn criterion_03_torus_crf_oracle() {
    let init = scenario("torus-H").ansatz.build(None).unwrap();
    let opts = SolverOptions { t_max: 10.0, fixed_dt: Some(1e-3), ..Default::default() };
    let short = flow::evolve(&init, FlowKind::Crf, &opts).unwrap();
    let sc = OracleScenario::TorusH { u0: vec![1.0; 3], h: 1.0 };
    let a = verification::oracle_agreement(&short, &sc, 1.0, 1e-6).unwrap();
    let u_err = a.errors.iter().find(|e| e.0 == "scale").unwrap().1;
    let h = torus_h();
    let v = singularity::classify(h, t_hat(h), &ClassifyOptions::default());
    let last = h.series.last().unwrap();
    let pt = last.sup_ac * last.t;
    report(
        3,
        "torus CRF u(t) = (1+3t)^(1/3), Type III",
        &[
            (format!("max rel error of u(t), t <= 10, dt = 1e-3: {u_err:.3e} (tol 1e-6)"), u_err <= 1e-6),
            (format!("type = {:?}", v.kind), v.kind == SingularityType::III),
            (format!("sup P * t at t = {} is {pt:.6} (in [1.9, 2.0])", last.t), (1.9..=2.0).contains(&pt)),
        ],
    );
}

#[test]
fn criterion_04_winding_rhf_oracle() {
    let h = winding();
    let sc = OracleScenario::WindingTorus { u0: vec![1.0; 3], axis: 0, kappa: 1.0, alpha: 1.0 };
    let a = verification::oracle_agreement(h, &sc, 1.0, 1e-12).unwrap();
    let v = singularity::classify(h, t_hat(h), &ClassifyOptions::default());
    let last = h.series.last().unwrap();
    let qt = last.sup_ac * last.t;
    let s0 = &h.snapshots[0].state;
    let lam = entropy::lambda_alpha(s0).unwrap().value;
    let nu = entropy::nu_alpha(s0, &MinOptions::default()).unwrap().value;
    report(
        4,
        "winding RHF u(t) = 1 + 2t, Type III, lambda = -1, nu = -inf",
        &[
            (format!("max rel error against the closed form = {:.3e} (tol 1e-12)", a.max_error), a.pass),
            (format!("type = {:?}", v.kind), v.kind == SingularityType::III),
            (format!("sup Q * t at t = {} is {qt:.6} (in [0.49, 0.5])", last.t), (0.49..=0.5).contains(&qt)),
            (format!("lambda_alpha = {lam} (|lambda + 1| <= 1e-8)"), (lam + 1.0).abs() <= 1e-8),
            (format!("nu_alpha = {nu}"), nu == f64::NEG_INFINITY),
        ],
    );
}

#[test]
fn criterion_05_dilation_normalization() {
    let mut checks = Vec::new();
    for (name, h, tol) in [("torus-H", torus_h(), 1e-10), ("winding", winding(), 1e-10), ("round-sphere", sphere(), 1e-6)] {
        let seq = singularity::blowup(h, 1.0, 1.0, 8, None).unwrap();
        let dev = seq.windows.iter().map(|w| (w.ac_at_pick - 1.0).abs()).fold(0.0, f64::max);
        let ok = !seq.windows.is_empty() && dev <= tol;
        checks.push((format!("{name}: {} windows, max |AC - 1| at the pick = {dev:.3e} (tol {tol:e})", seq.windows.len()), ok));
    }
    let h = sphere();
    let v = singularity::classify(h, t_hat(h), &ClassifyOptions::default());
    let seq = singularity::blowup(h, 1.0, 1.0, 8, None).unwrap();
    let mb = singularity::check_model_bounds(&seq, &v, 1e-6);
    let gap = mb.windows.iter().map(|w| w.gap_at_zero).fold(0.0, f64::max);
    checks.push((format!("sphere Type I model bound margin = {:.3e} (tol 1e-6)", mb.margin), mb.pass));
    checks.push((format!("sphere |AC - bound| at s = 0 = {gap:.3e} (tol 1e-6)"), gap <= 1e-6));
    report(5, "rescaled windows normalized at the pick", &checks);
}

#[test]
fn criterion_06_neckpinch() {
    let start = Instant::now();
    let h = evolve_scenario("neckpinch");
    let th = t_hat(&h);
    let v = singularity::classify(&h, th, &ClassifyOptions::default());
    let lb = singularity::lower_bound_check(&h, th);
    let inj = singularity::inj_estimate_check(&h);
    let nodes = match &h.snapshots[0].state {
        GeometryState::RotSym(s) => s.nodes(),
        GeometryState::Torus(_) => 0,
    };
    let secs = start.elapsed().as_secs_f64();
    report(
        6,
        "dumbbell neckpinch",
        &[
            (format!("N = {nodes}, termination = {:?} at t = {:.6}", h.termination, h.t_final()), nodes == 401 && h.termination.is_singular()),
            (format!("type = {:?}, T_hat = {th:?}", v.kind), v.kind == SingularityType::I),
            (format!("lower bound c_fit = {:.4}, spread {:.3} (c_fit > 0.1)", lb.c_fit, lb.spread), lb.pass && lb.c_fit > 0.1),
            (format!("inj proxy c_I = {:.4}, spread {:.3}", inj.c_i, inj.spread), inj.pass),
            (format!("runtime {secs:.1}s (<= 600s)"), secs <= 600.0),
        ],
    );
}

#[test]
fn criterion_07_scalar_evolution_residuals() {
    let mut checks = Vec::new();
    let init = scenario("torus-H").ansatz.build(None).unwrap();
    let opts = SolverOptions { t_max: 1.0, fixed_dt: Some(1e-3), ..Default::default() };
    let h = flow::evolve(&init, FlowKind::Crf, &opts).unwrap();
    let r = verification::residual_scalar_evolution(&h, 5, 1.0, Some(1e-3)).unwrap();
    for (name, v) in &r.max {
        checks.push((format!("torus-H {name} residual = {v:.3e} (tol 1e-6)"), *v < 1e-6));
    }
    let cases: [(&str, FlowKind, Box<dyn Fn(usize) -> flowlab::Result<GeometryState>>); 3] = [
        ("dumbbell CRF", FlowKind::Crf, Box::new(|nn| Ok(presets::dumbbell(3, nn, 0.5, 1.0, 0.0, 0.0)?.into()))),
        ("dumbbell RHF", FlowKind::Rhf, Box::new(|nn| Ok(presets::dumbbell(3, nn, 0.5, 1.0, 1.0, 0.5)?.into()))),
        (
            "sphere RHF",
            FlowKind::Rhf,
            Box::new(|nn| Ok(presets::round_sphere(3, nn, 1.0, Sampling::Consistent, 1.0, 0.5)?.into())),
        ),
    ];
    for (name, kind, make) in cases {
        let r = verification::refinement_study(make, kind, 33, 1e-3, &[0.0, 0.01]).unwrap();
        let ratios: Vec<String> = r.ratios.iter().map(|(n, v)| format!("{n} {v:.2}")).collect();
        checks.push((format!("{name} 33 -> 65 nodes: min ratio {:.3} (>= 3.5): {}", r.min_ratio, ratios.join(", ")), r.pass));
    }
    report(7, "scalar evolution identities", &checks);
}

#[test]
fn criterion_08_smin_inequality() {
    let w = verification::smin_ode_check(winding());
    let init: GeometryState = presets::round_sphere(3, 65, 1.0, Sampling::Consistent, 1.0, 0.0).unwrap().into();
    let opts = SolverOptions { t_max: 0.2, ..Default::default() };
    let h = flow::evolve(&init, FlowKind::Rhf, &opts).unwrap();
    let s = verification::smin_ode_check(&h);
    report(
        8,
        "S_min differential inequality",
        &[
            (format!("winding: min margin {:.3e}, slack {:.3e} over {} steps", w.min_margin, w.slack, w.steps), w.pass),
            (format!("Einstein sphere: slack {:.3e} over {} steps", s.slack, s.steps), s.pass),
            (format!("Einstein sphere: max |margin| {:.3e} (equality, tol 1e-6)", s.max_abs_margin), s.max_abs_margin <= 1e-6),
        ],
    );
}

#[test]
fn criterion_09_entropy_suite() {
    let mut checks = Vec::new();
    let opts = MinOptions::default();
    let unit: GeometryState = presets::round_sphere(3, 65, 1.0, Sampling::Consistent, 0.0, 0.0).unwrap().into();
    let lam = entropy::lambda_alpha(&unit).unwrap().value;
    checks.push((format!("lambda(S^3) = {lam:.12} (|lambda - 6| <= 1e-6)"), (lam - 6.0).abs() <= 1e-6));
    let err = |nn| {
        let s: GeometryState = presets::round_sphere(3, nn, 1.0, Sampling::Geometric, 0.0, 0.0).unwrap().into();
        (entropy::lambda_alpha(&s).unwrap().value - 6.0).abs()
    };
    let (e1, e2) = (err(65), err(129));
    checks.push((format!("point-sampled sphere: error {e1:.3e} (N=65), {e2:.3e} (N=129), ratio {:.2} (second order)", e1 / e2), e1 / e2 > 3.5));
    for (name, st) in [("sphere", unit.clone()), ("winding", winding().snapshots[0].state.clone())] {
        let a = entropy::mu_alpha(&st, 1.0, &opts).unwrap().value;
        let b = entropy::mu_alpha(&st.scaled(2.0), 2.0, &opts).unwrap().value;
        checks.push((format!("{name}: mu(2g, 2tau) - mu(g, tau) = {:.3e} (tol 1e-6)", b - a), (b - a).abs() <= 1e-6));
    }
    for (name, st, cs) in [("sphere", unit.clone(), 0.427), ("winding", winding().snapshots[0].state.clone(), 2.0)] {
        let b = entropy::check_mu_bounds(&st, 1.0, Some(cs), &opts).unwrap();
        checks.push((
            format!("{name} tau = 1: upper residual {:.4}, lower residual {:?} (>= -1e-6)", b.upper_residual, b.lower_residual),
            b.pass && b.lower_residual.is_some(),
        ));
    }
    let w0 = &winding().snapshots[0].state;
    let c = entropy::check_nonpositive_lambda_bound(w0, 1.0, &opts).unwrap();
    checks.push((format!("winding lambda <= 0 entropy bound residual {:.4}", c.residual), c.applicable && c.pass));
    let v = entropy::check_volume_bound(winding()).unwrap();
    checks.push((format!("winding volume bound c1 = {}, c2 = {}, margin {:.3e}", v.c1, v.c2, v.margin), v.applicable && v.pass));
    let sh = sphere();
    let m = entropy::monotonicity_check(sh, t_hat(sh).unwrap(), 40, &opts).unwrap();
    checks.push((format!("sphere monotonicity: min increment {:.3e}, spread {:.3e} (<= 1e-3)", m.min_increment, m.spread), m.pass && m.spread <= 1e-3));
    let m = entropy::monotonicity_check(winding(), 110.0, 40, &opts).unwrap();
    checks.push((format!("winding monotonicity: min increment {:.4}", m.min_increment), m.pass));
    report(9, "entropy functionals", &checks);
}

#[test]
fn criterion_10_soliton_residual() {
    let s: GeometryState = presets::round_sphere(3, 65, 1.0, Sampling::Consistent, 0.0, 0.0).unwrap().into();
    let r = entropy::soliton_residual(&s, None, 0.25).unwrap();
    let tau = 0.7;
    let flat: GeometryState = presets::flat_torus(vec![1.0, 2.0, 3.0], 0.0).unwrap().into();
    let f = entropy::soliton_residual(&flat, None, tau).unwrap();
    let expect = 1.0 / (2.0 * tau);
    report(
        10,
        "soliton residuals",
        &[
            (format!("round S^3, tau = c/4: metric {:.3e}, map {:.3e} (< 1e-8)", r.metric, r.map), r.metric < 1e-8 && r.map < 1e-8),
            (format!("flat torus, tau = {tau}: metric {} vs 1/(2 tau) = {expect}", f.metric), (f.metric - expect).abs() <= 1e-10),
        ],
    );
}

fn read_tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

#[test]
fn criterion_11_determinism() {
    let tmp = tempfile::tempdir().unwrap();
    let mut checks = Vec::new();
    for name in ["round-sphere", "dumbbell-neckpinch", "torus-H", "winding", "flat-torus"] {
        let file = if name == "dumbbell-neckpinch" { "neckpinch" } else { name };
        let mut cfg = scenario(file);
        let dir = tmp.path().join(file);
        cfg.output_dir = dir.to_string_lossy().into_owned();
        let a = run::execute(&cfg, Mode::Run);
        assert!(a.errors.is_empty(), "{name}: {:?}", a.errors);
        let first = read_tree(&dir);
        let b = run::execute(&cfg, Mode::Run);
        assert!(b.errors.is_empty(), "{name}: {:?}", b.errors);
        let second = read_tree(&dir);
        let same = |f: &str| first.get(Path::new(f)).is_some() && first.get(Path::new(f)) == second.get(Path::new(f));
        let all = first == second;
        checks.push((
            format!("{file}: series.csv {}, verdict.json {}, all {} files {}", same("series.csv"), same("verdict.json"), first.len(), all),
            same("series.csv") && same("verdict.json") && all,
        ));
    }
    report(11, "byte-identical reruns of the shipped scenarios", &checks);
}
