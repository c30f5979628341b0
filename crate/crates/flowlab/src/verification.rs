//! Closed-form oracles, scalar evolution identities and the inequality
//! checks run along recorded flows.
//!
//! Every check reports its margin together with the tolerance it used.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::flow::{self, FlowHistory, SolverOptions};
use crate::geometry::stencil::{d1, EVEN};
use crate::geometry::{self, sphere_area, FlowKind, GeometryState};
use crate::serde_ext;
use crate::singularity::BlowupSequence;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "scenario", rename_all = "kebab-case")]
pub enum OracleScenario {
    /// `S^n` of scale `c0` (metric `c0·g_round`).
    RoundSphere { n: usize, c0: f64 },
    /// Torus with `h_{012} = h`; the first three coefficients start equal.
    TorusH { u0: Vec<f64>, h: f64 },
    /// Winding map `φ = κ x_axis`.
    WindingTorus { u0: Vec<f64>, axis: usize, kappa: f64, alpha: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSolution {
    pub t: f64,
    /// `c` for the sphere, `u_i` for the torus.
    pub scale: Vec<f64>,
    pub h_sq: f64,
    pub grad_phi_sq: f64,
    pub sup_ac: f64,
    pub volume: f64,
    #[serde(with = "serde_ext::inf_opt")]
    pub t_sing: Option<f64>,
}

fn torus_volume(u: &[f64]) -> f64 {
    u.iter().product::<f64>().sqrt()
}

/// Exact solution of the reduced flow at time `t`.
pub fn oracle(scenario: &OracleScenario, t: f64) -> Result<OracleSolution> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(FlowError::OracleDomain(format!("t = {t} is outside [0, T)")));
    }
    match scenario {
        OracleScenario::RoundSphere { n, c0 } => {
            if *n < 2 || !(*c0 > 0.0) {
                return Err(FlowError::InvalidParameter("round sphere needs n >= 2, c0 > 0".into()));
            }
            let nf = *n as f64;
            let t_sing = c0 / (2.0 * (nf - 1.0));
            if t >= t_sing {
                return Err(FlowError::OracleDomain(format!("t = {t} is past T = {t_sing}")));
            }
            let c = c0 - 2.0 * (nf - 1.0) * t;
            Ok(OracleSolution {
                t,
                scale: vec![c],
                h_sq: 0.0,
                grad_phi_sq: 0.0,
                sup_ac: (2.0 * nf * (nf - 1.0)).sqrt() / c,
                volume: sphere_area(*n) * c.powf(nf / 2.0),
                t_sing: Some(t_sing),
            })
        }
        OracleScenario::TorusH { u0, h } => {
            if u0.len() < 3 || u0[1] != u0[0] || u0[2] != u0[0] || u0.iter().any(|u| !(*u > 0.0)) {
                return Err(FlowError::InvalidParameter("torus-H oracle needs m >= 3, u0 > 0, u0[0] = u0[1] = u0[2]".into()));
            }
            let c = (u0[0].powi(3) + 3.0 * h * h * t).cbrt();
            let mut u = u0.clone();
            u[..3].fill(c);
            let h_sq = 6.0 * h * h / c.powi(3);
            Ok(OracleSolution { t, volume: torus_volume(&u), scale: u, h_sq, grad_phi_sq: 0.0, sup_ac: h_sq, t_sing: None })
        }
        OracleScenario::WindingTorus { u0, axis, kappa, alpha } => {
            if *axis >= u0.len() || u0.iter().any(|u| !(*u > 0.0)) {
                return Err(FlowError::InvalidParameter("winding oracle needs axis < m, u0 > 0".into()));
            }
            let mut u = u0.clone();
            u[*axis] += 2.0 * alpha * kappa * kappa * t;
            let g = kappa * kappa / u[*axis];
            Ok(OracleSolution { t, volume: torus_volume(&u), scale: u, h_sq: 0.0, grad_phi_sq: g, sup_ac: g, t_sing: None })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleAgreement {
    /// Worst relative error per tracked scalar.
    pub errors: Vec<(String, f64)>,
    pub t_checked: f64,
    pub max_error: f64,
    pub tol: f64,
    pub pass: bool,
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }
}

/// Compare every snapshot with `t <= t_frac·T` (all of them when `T = ∞`) to the oracle.
/// Volume is compared as `Vol(t)/Vol(0)`: the grid quadrature of the
/// initial sphere carries a fixed relative error that the flow preserves.
pub fn oracle_agreement(history: &FlowHistory, scenario: &OracleScenario, t_frac: f64, tol: f64) -> Result<OracleAgreement> {
    let t_lim = match oracle(scenario, 0.0)?.t_sing {
        Some(t) => t_frac * t,
        None => f64::INFINITY,
    };
    let mut worst = [0.0f64; 5];
    let mut t_checked = 0.0;
    let vol0 = history.snapshots.first().map_or(1.0, |s| s.diag.volume);
    let ovol0 = oracle(scenario, 0.0)?.volume;
    for sn in history.snapshots.iter().filter(|s| s.state.t() <= t_lim) {
        let t = sn.state.t();
        let o = oracle(scenario, t)?;
        let scale: Vec<f64> = match (&sn.state, scenario) {
            (GeometryState::RotSym(s), OracleScenario::RoundSphere { n, .. }) => {
                let nf = *n as f64;
                let _ = s;
                vec![(2.0 * nf * (nf - 1.0)).sqrt() / sn.diag.sup_ac]
            }
            (GeometryState::Torus(s), _) => s.u.clone(),
            _ => return Err(FlowError::Incompatible("oracle scenario does not match the history ansatz".into())),
        };
        let e_scale = scale.iter().zip(&o.scale).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);
        let (h_sq, g) = match &sn.state {
            GeometryState::Torus(s) => (s.h_sq(), s.grad_phi_sq()),
            GeometryState::RotSym(_) => (0.0, 0.0),
        };
        let errs = [e_scale, rel(h_sq, o.h_sq), rel(g, o.grad_phi_sq), rel(sn.diag.sup_ac, o.sup_ac), rel(sn.diag.volume / vol0, o.volume / ovol0)];
        for (w, e) in worst.iter_mut().zip(errs) {
            *w = w.max(e);
        }
        t_checked = t;
    }
    let names = ["scale", "h_sq", "grad_phi_sq", "sup_ac", "volume"];
    let max_error = worst.iter().cloned().fold(0.0, f64::max);
    Ok(OracleAgreement {
        errors: names.iter().map(|n| n.to_string()).zip(worst).collect(),
        t_checked,
        max_error,
        tol,
        pass: max_error <= tol,
    })
}

/// Pointwise scalars whose evolution identities are checked.
fn tracked(state: &GeometryState, kind: FlowKind) -> Result<Vec<(&'static str, Vec<f64>)>> {
    let mut out = Vec::new();
    match state {
        GeometryState::Torus(s) => {
            out.push(("R", vec![0.0]));
            match kind {
                FlowKind::Crf => out.push(("H2", vec![s.h_sq()])),
                FlowKind::Rhf => {
                    let g = s.grad_phi_sq();
                    out.push(("grad_phi_sq", vec![g]));
                    out.push(("S", vec![-s.alpha * g]));
                }
            }
        }
        GeometryState::RotSym(s) => {
            let f = s.fields();
            out.push(("R", f.scalar()));
            if kind == FlowKind::Rhf {
                let g = f.grad_phi_sq();
                let r = f.scalar();
                out.push(("S", r.iter().zip(&g).map(|(r, g)| r - s.alpha * g).collect()));
                out.push(("grad_phi_sq", g));
            }
        }
    }
    Ok(out)
}

/// Right-hand sides of the scalar evolution identities, including the
/// Lie term of the DeTurck field when a gauge is given.
fn identity_rhs(state: &GeometryState, kind: FlowKind, gauge: Option<&geometry::Gauge>) -> Result<Vec<(&'static str, Vec<f64>)>> {
    let mut out = Vec::new();
    match state {
        GeometryState::Torus(s) => {
            out.push(("R", vec![0.0]));
            match kind {
                FlowKind::Crf => {
                    let m = s.m;
                    let hh = s.script_h();
                    let mut norm = 0.0;
                    for i in 0..m {
                        for j in 0..m {
                            norm += hh[i * m + j].powi(2) / (s.u[i] * s.u[j]);
                        }
                    }
                    // Rc = 0 on the flat torus, so only the quadratic term survives.
                    out.push(("H2", vec![-1.5 * norm]));
                }
                FlowKind::Rhf => {
                    let dd: Vec<f64> = s.k.iter().zip(&s.u).map(|(k, u)| k * k / u).collect();
                    let g: f64 = dd.iter().sum();
                    let dd2: f64 = dd.iter().map(|d| d * d).sum();
                    out.push(("grad_phi_sq", vec![-2.0 * s.alpha * g * g]));
                    out.push(("S", vec![2.0 * s.alpha * s.alpha * dd2]));
                }
            }
        }
        GeometryState::RotSym(s) => {
            let f = s.fields();
            let nn = s.nodes();
            let n = s.n as f64;
            let alpha = if kind == FlowKind::Rhf { s.alpha } else { 0.0 };
            let r = f.scalar();
            let rr = f.ric_rad();
            let rs = f.ric_sph();
            let g = f.grad_phi_sq();
            let hess = f.hess_phi_sq();
            let w = gauge.map(|g| f.deturck(s, g));
            let lie = |v: &[f64]| -> Vec<f64> {
                match &w {
                    Some(w) => d1(v, f.h, EVEN).iter().zip(w).map(|(a, b)| a * b).collect(),
                    None => vec![0.0; nn],
                }
            };
            let lap_r = f.laplacian(&r, &s.a);
            let lie_r = lie(&r);
            let rhs_r: Vec<f64> = (0..nn)
                .map(|j| {
                    lap_r[j] + 2.0 * (rr[j] * rr[j] + (n - 1.0) * rs[j] * rs[j]) - 4.0 * alpha * rr[j] * g[j]
                        - 2.0 * alpha * hess[j]
                        + 2.0 * alpha * f.tension[j] * f.tension[j]
                        + lie_r[j]
                })
                .collect();
            out.push(("R", rhs_r));
            if kind == FlowKind::Rhf {
                let sv: Vec<f64> = r.iter().zip(&g).map(|(r, g)| r - alpha * g).collect();
                let lap_s = f.laplacian(&sv, &s.a);
                let lie_s = lie(&sv);
                out.push((
                    "S",
                    (0..nn)
                        .map(|j| {
                            let srad = rr[j] - alpha * g[j];
                            lap_s[j] + 2.0 * (srad * srad + (n - 1.0) * rs[j] * rs[j]) + 2.0 * alpha * f.tension[j] * f.tension[j] + lie_s[j]
                        })
                        .collect(),
                ));
                let lap_g = f.laplacian(&g, &s.a);
                let lie_g = lie(&g);
                out.push((
                    "grad_phi_sq",
                    (0..nn).map(|j| lap_g[j] - 2.0 * hess[j] - 2.0 * alpha * g[j] * g[j] + lie_g[j]).collect(),
                ));
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub name: String,
    pub t: f64,
    pub residual: f64,
    /// `max |rhs|` at the same time, for scale.
    pub scale: f64,
    /// Worst residual inside the pole caps `|x| > POLE_CAP` (grid ansatz only).
    pub cap_residual: f64,
    /// Rounding level of the time difference; residuals below it carry no information.
    pub floor: f64,
    /// Difference step.
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub entries: Vec<IdentityResidual>,
    /// Worst residual per identity.
    pub max: Vec<(String, f64)>,
    pub nodes: Option<usize>,
}

/// The pole caps `|x| > POLE_CAP` use the regularized spherical curvature,
/// whose error is `O(h²/s²)`; fourth-derivative quantities such as `ΔR`
/// therefore carry a fixed-node layer there that does not refine away.
pub const POLE_CAP: f64 = 0.5;

/// Residuals of the identities at one state. The time derivative of each
/// scalar is a centred five-point difference along the semi-discrete
/// velocity, `F(s + kεV)` for `k = ±1, ±2`, which is the derivative of the
/// discrete flow itself and carries no step-size stability limit.
pub fn residual_at(state: &GeometryState, kind: FlowKind, gauge: Option<&geometry::Gauge>, eps: f64) -> Result<Vec<IdentityResidual>> {
    let v = flow::rhs(state, kind, gauge)?;
    let win: Vec<GeometryState> = [-2.0, -1.0, 0.0, 1.0, 2.0].iter().map(|k| flow::axpy(state, &v, k * eps)).collect();
    let vals = win.iter().map(|s| tracked(s, kind)).collect::<Result<Vec<_>>>()?;
    let rhs = identity_rhs(state, kind, gauge)?;
    let mut out = Vec::new();
    for (k, (name, r)) in rhs.iter().enumerate() {
        let len = r.len();
        let range = if len == 1 { 0..1 } else { 1..len - 1 };
        let mut res = 0.0f64;
        let mut cap = 0.0f64;
        let mut scale = 0.0f64;
        let mut size = 0.0f64;
        for j in range {
            let d = (vals[0][k].1[j] - 8.0 * vals[1][k].1[j] + 8.0 * vals[3][k].1[j] - vals[4][k].1[j]) / (12.0 * eps);
            let e = (d - r[j]).abs();
            if len > 1 && state.location(j).abs() > POLE_CAP {
                cap = cap.max(e);
                continue;
            }
            res = res.max(e);
            scale = scale.max(r[j].abs());
            size = size.max(vals[2][k].1[j].abs());
        }
        // grid differences amplify rounding by 1/h
        let amp = match state {
            GeometryState::RotSym(s) => 1.0 / s.h(),
            GeometryState::Torus(_) => 1.0,
        };
        let floor = 100.0 * f64::EPSILON * size * amp / eps;
        out.push(IdentityResidual { name: name.to_string(), t: state.t(), residual: res, cap_residual: cap, scale, floor, dt: eps });
    }
    Ok(out)
}

fn summarize(entries: Vec<IdentityResidual>, nodes: Option<usize>) -> ResidualReport {
    let mut max: Vec<(String, f64)> = Vec::new();
    for e in &entries {
        match max.iter_mut().find(|(n, _)| *n == e.name) {
            Some((_, v)) => *v = v.max(e.residual),
            None => max.push((e.name.clone(), e.residual)),
        }
    }
    ResidualReport { entries, max, nodes }
}

fn nodes_of(state: &GeometryState) -> Option<usize> {
    match state {
        GeometryState::RotSym(s) => Some(s.nodes()),
        GeometryState::Torus(_) => None,
    }
}

/// Difference step for the identity residuals: `dt` in units of the local
/// curvature time `1/sup AC`.
pub fn difference_step(state: &GeometryState, kind: FlowKind, dt: f64) -> Result<f64> {
    let sup = geometry::ac(state, kind)?.sup;
    Ok(dt / sup.max(1.0))
}

pub const DEFAULT_DIFFERENCE_STEP: f64 = 1e-4;

/// Identity residuals at up to `samples` snapshots spread over the first
/// `t_frac` of the run. Recorded snapshots are not uniformly spaced, so
/// each sample gets its own centred difference; `dt` sets its step
/// (default `DEFAULT_DIFFERENCE_STEP`).
pub fn residual_scalar_evolution(history: &FlowHistory, samples: usize, t_frac: f64, dt: Option<f64>) -> Result<ResidualReport> {
    if history.snapshots.len() < 3 {
        return Err(FlowError::InvalidState("need at least 3 snapshots".into()));
    }
    let t_lim = t_frac * history.t_final();
    let pool: Vec<usize> = (0..history.snapshots.len()).filter(|&i| history.snapshots[i].state.t() <= t_lim).collect();
    let k = samples.clamp(1, pool.len().max(1));
    let mut idx: Vec<usize> = (0..k).map(|i| pool[(i * (pool.len() - 1)) / (k - 1).max(1)]).collect();
    idx.dedup();
    let mut entries = Vec::new();
    for i in idx {
        let st = &history.snapshots[i].state;
        let eps = match st {
            GeometryState::Torus(_) => dt.unwrap_or(DEFAULT_DIFFERENCE_STEP),
            GeometryState::RotSym(_) => difference_step(st, history.kind, dt.unwrap_or(DEFAULT_DIFFERENCE_STEP))?,
        };
        entries.extend(residual_at(st, history.kind, history.gauge.as_ref(), eps)?);
    }
    Ok(summarize(entries, nodes_of(&history.snapshots[0].state)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    pub coarse: ResidualReport,
    pub fine: ResidualReport,
    /// `coarse / fine` per identity at matching times.
    pub ratios: Vec<(String, f64)>,
    pub min_ratio: f64,
    pub threshold: f64,
    pub pass: bool,
}

pub const REFINEMENT_RATIO: f64 = 3.5;

/// Residuals at the same physical times on `nodes` and `2·nodes - 1` grid
/// nodes, the finer run capped at half the solver step. Identities already
/// at rounding level on both grids count as converged.
pub fn refinement_study<F>(make: F, kind: FlowKind, nodes: usize, dt: f64, times: &[f64]) -> Result<RefinementReport>
where
    F: Fn(usize) -> Result<GeometryState>,
{
    let run = |nn: usize, step: f64| -> Result<ResidualReport> {
        let init = make(nn)?;
        let gauge = match &init {
            GeometryState::RotSym(s) => Some(geometry::Gauge::from_state(s)),
            GeometryState::Torus(_) => None,
        };
        let mut entries = Vec::new();
        for &t in times {
            let state = if t > 0.0 {
                let opts = SolverOptions { t_max: t, dt_max: Some(step), p_stop: f64::INFINITY, ..Default::default() };
                let h = flow::evolve_with_gauge(&init, kind, &opts, gauge.clone())?;
                if h.termination != flow::Termination::ReachedTMax {
                    return Err(FlowError::InvalidState(format!("refinement run stopped early: {:?}", h.termination)));
                }
                h.final_state().clone()
            } else {
                init.clone()
            };
            let eps = difference_step(&state, kind, DEFAULT_DIFFERENCE_STEP)?;
            entries.extend(residual_at(&state, kind, gauge.as_ref(), eps)?);
        }
        Ok(summarize(entries, Some(nn)))
    };
    let coarse = run(nodes, dt)?;
    let fine = run(2 * nodes - 1, dt / 2.0)?;
    let mut ratios: Vec<(String, f64)> = Vec::new();
    for (c, f) in coarse.entries.iter().zip(&fine.entries) {
        let r = if c.residual <= c.floor && f.residual <= f.floor { f64::INFINITY } else { c.residual / f.residual };
        match ratios.iter_mut().find(|(n, _)| *n == c.name) {
            Some((_, v)) => *v = v.min(r),
            None => ratios.push((c.name.clone(), r)),
        }
    }
    let min_ratio = ratios.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    Ok(RefinementReport { coarse, fine, ratios, min_ratio, threshold: REFINEMENT_RATIO, pass: min_ratio >= REFINEMENT_RATIO })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SminCheck {
    /// `min_j` of `ΔS/Δt - (2/m)S_j S_{j+1}`, relative to the size of the terms.
    pub min_margin: f64,
    /// `max_j |margin_j|`, relative.
    pub max_abs_margin: f64,
    /// `min_j (margin_j + tol_j)`, relative.
    pub slack: f64,
    pub steps: usize,
    pub pass: bool,
}

/// `dS_min/dt ≥ (2/m)S_min²` on consecutive series rows.
///
/// The product `S_j S_{j+1}` makes the forward difference exact on
/// `S' = (2/m)S²`, so the Einstein case gives zero margin up to rounding.
/// The tolerance is ten times the local truncation estimate
/// `½Δt|S''|` plus a rounding floor.
pub fn smin_ode_check(history: &FlowHistory) -> SminCheck {
    let m = history.snapshots.first().map(|s| s.state.dim()).unwrap_or(1) as f64;
    let rows = &history.series;
    let q: Vec<f64> = rows.windows(2).map(|w| (w[1].s_min - w[0].s_min) / (w[1].t - w[0].t)).collect();
    let mut min_margin = f64::INFINITY;
    let mut max_abs = 0.0f64;
    let mut slack = f64::INFINITY;
    for j in 0..q.len() {
        let (a, b) = (rows[j].s_min, rows[j + 1].s_min);
        let rhs = 2.0 / m * a * b;
        let size = q[j].abs().max(rhs.abs()).max(1.0);
        let curv = match (j.checked_sub(1).map(|i| q[i]), q.get(j + 1)) {
            (Some(p), Some(n)) => (q[j] - p).abs().max((n - q[j]).abs()),
            (Some(p), None) => (q[j] - p).abs(),
            (None, Some(n)) => (n - q[j]).abs(),
            (None, None) => 0.0,
        };
        let eps = 1e3 * f64::EPSILON * (a.abs().max(b.abs()) / (rows[j + 1].t - rows[j].t) + rhs.abs());
        let tol = 5.0 * curv + eps;
        let margin = q[j] - rhs;
        min_margin = min_margin.min(margin / size);
        max_abs = max_abs.max(margin.abs() / size);
        slack = slack.min((margin + tol) / size);
    }
    if q.is_empty() {
        min_margin = 0.0;
        slack = 0.0;
    }
    SminCheck { min_margin, max_abs_margin: max_abs, slack, steps: q.len(), pass: slack >= 0.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AncientCheck {
    pub skipped: bool,
    pub notes: Vec<String>,
    /// `min S` over each rescaled window.
    pub s_min: Vec<f64>,
    pub eps: Vec<f64>,
    pub pass: bool,
}

/// `S_min ≥ -ε_i` on each blow-up window, with `ε_i` nonincreasing over the last five.
pub fn ancient_nonnegativity_check(seq: &BlowupSequence) -> AncientCheck {
    if seq.windows.len() < 2 {
        return AncientCheck {
            skipped: true,
            notes: vec![format!("{} blow-up window(s); need at least 2", seq.windows.len())],
            s_min: vec![],
            eps: vec![],
            pass: true,
        };
    }
    let s_min: Vec<f64> = seq
        .windows
        .iter()
        .map(|w| w.history.series.iter().map(|r| r.s_min).fold(f64::INFINITY, f64::min))
        .collect();
    let eps: Vec<f64> = s_min.iter().map(|s| (-s).max(0.0)).collect();
    let tail = &eps[eps.len().saturating_sub(5)..];
    let pass = tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
    AncientCheck { skipped: false, notes: vec![], s_min, eps, pass }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HGrowthCheck {
    pub k1: f64,
    pub k2: f64,
    pub c_fit: f64,
    /// `min (K2 e^{C K1 t} - sup|H|²)`.
    pub margin: f64,
    pub pass: bool,
}

/// `sup|H|²(t) ≤ K2 e^{C K1 t}` along a CRF run.
pub fn h_growth_check(history: &FlowHistory) -> Result<HGrowthCheck> {
    let mut k1 = 0.0f64;
    for sn in &history.snapshots {
        let rm = geometry::curvature(&sn.state)?.rm_norm;
        k1 = k1.max(rm.iter().cloned().fold(0.0, f64::max));
    }
    let k2 = history.series.first().map(|r| r.sup_h2).unwrap_or(0.0);
    let c_fit = if k1 == 0.0 {
        0.0
    } else {
        history
            .series
            .iter()
            .filter(|r| r.t > 0.0 && r.sup_h2 > k2)
            .map(|r| (r.sup_h2 / k2).ln() / (k1 * r.t))
            .fold(0.0, f64::max)
    };
    let margin = history
        .series
        .iter()
        .map(|r| k2 * (c_fit * k1 * r.t).exp() - r.sup_h2)
        .fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * k2.max(f64::MIN_POSITIVE);
    Ok(HGrowthCheck { k1, k2, c_fit, margin, pass: margin >= -tol && c_fit.is_finite() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DoublingCheck {
    /// Largest `ΔK/Δt / (K_j K_{j+1})^{3/4}` over the run.
    pub c_fit: f64,
    /// `max/min` of the positive ratios over the trailing half.
    pub spread: f64,
    pub increasing_steps: usize,
    pub pass: bool,
}

/// `K = sup(|Rm|² + |∇H|² + |H|⁴)` for CRF, `sup(|Rm|² + |∇²φ|² + |∇φ|⁴)` for RHF.
pub fn doubling_quantity(state: &GeometryState, kind: FlowKind) -> Result<f64> {
    let rm = geometry::curvature(state)?.rm_norm;
    let extra: Vec<f64> = match (state, kind) {
        (GeometryState::Torus(s), FlowKind::Crf) => {
            let t = geometry::torsion_quantities(s)?;
            vec![t.grad_h_norm.powi(2) + t.h_sq.powi(2)]
        }
        (GeometryState::RotSym(_), FlowKind::Crf) => vec![0.0; rm.len()],
        (_, FlowKind::Rhf) => {
            let m = geometry::map_quantities(state)?;
            m.hess_norm.iter().zip(&m.grad_sq).map(|(h, g)| h * h + g * g).collect()
        }
    };
    Ok(rm.iter().zip(extra.iter().cycle()).map(|(r, e)| r * r + e).fold(0.0, f64::max))
}

pub const DOUBLING_SPREAD: f64 = 10.0;

/// Forward differences of `K` over snapshots against `C K^{3/2}`.
///
/// The geometric mean `(K_j K_{j+1})^{3/4}` keeps the ratio exact for the
/// shrinking sphere, whose `K` is a power of `T - t`.
pub fn doubling_bound_check(history: &FlowHistory) -> Result<DoublingCheck> {
    let ks = history
        .snapshots
        .iter()
        .map(|s| Ok((s.state.t(), doubling_quantity(&s.state, history.kind)?)))
        .collect::<Result<Vec<(f64, f64)>>>()?;
    let mut ratios = Vec::new();
    for w in ks.windows(2) {
        let ((t0, k0), (t1, k1)) = (w[0], w[1]);
        if t1 > t0 && k0 > 0.0 && k1 > 0.0 {
            ratios.push((t0, (k1 - k0) / (t1 - t0) / (k0 * k1).powf(0.75)));
        }
    }
    let c_fit = ratios.iter().map(|r| r.1).fold(0.0, f64::max);
    let t_half = history.t_final() / 2.0;
    let tail: Vec<f64> = ratios.iter().filter(|r| r.0 >= t_half && r.1 > 0.0).map(|r| r.1).collect();
    let spread = if tail.is_empty() {
        1.0
    } else {
        tail.iter().cloned().fold(0.0, f64::max) / tail.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let increasing_steps = ratios.iter().filter(|r| r.1 > 0.0).count();
    Ok(DoublingCheck { c_fit, spread, increasing_steps, pass: c_fit.is_finite() && spread < DOUBLING_SPREAD })
}

/// Volume of the unit round `S^n` per the sphere oracle.
pub fn unit_sphere_volume(n: usize) -> f64 {
    if n == 1 {
        2.0 * PI
    } else {
        sphere_area(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn sphere_oracle_values() {
        let o = oracle(&OracleScenario::RoundSphere { n: 3, c0: 1.0 }, 0.2).unwrap();
        assert!((o.scale[0] - 0.2).abs() < 1e-15);
        assert!((o.sup_ac - 10.0 * 3f64.sqrt()).abs() < 1e-12);
        assert!(oracle(&OracleScenario::RoundSphere { n: 3, c0: 1.0 }, 0.25).is_err());
    }

    #[test]
    fn torus_h_oracle_values() {
        let o = oracle(&OracleScenario::TorusH { u0: vec![1.0; 3], h: 1.0 }, 1.0).unwrap();
        assert!((o.scale[0] - 4f64.cbrt()).abs() < 1e-15);
        assert!((o.h_sq - 1.5).abs() < 1e-14);
        assert_eq!(o.t_sing, None);
    }

    #[test]
    fn winding_oracle_initial() {
        let o = oracle(&OracleScenario::WindingTorus { u0: vec![1.0; 3], axis: 0, kappa: 1.0, alpha: 1.0 }, 0.0).unwrap();
        assert_eq!(o.scale[0], 1.0);
        assert_eq!(o.sup_ac, 1.0);
    }

    #[test]
    fn sphere_oracle_solves_the_reduced_flow() {
        // c' = -2(n-1) from the sphere right-hand side with exact sampling
        let s = presets::round_sphere(3, 65, 1.0, presets::Sampling::Consistent, 0.0, 0.0).unwrap();
        let d = flow::crf_rhs(&s.clone().into()).unwrap();
        let flow::StateDerivative::RotSym { dpsi, .. } = d else { panic!() };
        // ψ ∝ √c, so dψ/ψ = c'/(2c)
        let rate = 2.0 * dpsi[20] / s.psi[20];
        assert!((rate + 4.0).abs() < 1e-10, "{rate}");
    }

    #[test]
    fn sphere_doubling_constant() {
        // K = 12/c², c = 1 - 4t, so dK/dt = 96/c³ = (4/√3) K^{3/2}
        let s: GeometryState = presets::round_sphere(3, 65, 1.0, presets::Sampling::Consistent, 0.0, 0.0).unwrap().into();
        let h = flow::evolve(&s, FlowKind::Crf, &SolverOptions { t_max: 0.2, ..Default::default() }).unwrap();
        let d = doubling_bound_check(&h).unwrap();
        let exact = 4.0 / 3f64.sqrt();
        assert!((d.c_fit / exact - 1.0).abs() < 1e-3, "{}", d.c_fit);
        assert!(d.pass && d.spread < 1.01);
    }

    #[test]
    fn static_flat_residuals_are_zero() {
        let s: GeometryState = presets::flat_torus(vec![1.0; 3], 0.0).unwrap().into();
        for kind in [FlowKind::Crf, FlowKind::Rhf] {
            let r = residual_at(&s, kind, None, 1e-3).unwrap();
            assert!(r.iter().all(|e| e.residual == 0.0));
        }
    }

    #[test]
    fn torus_h_identity_residual() {
        let s: GeometryState = presets::torus_h(vec![1.0; 3], 1.0).unwrap().into();
        let r = residual_at(&s, FlowKind::Crf, None, 1e-3).unwrap();
        let h2 = r.iter().find(|e| e.name == "H2").unwrap();
        assert!(h2.residual < 1e-6, "{}", h2.residual);
    }

    #[test]
    fn winding_smin_margin_positive() {
        let s: GeometryState = presets::winding(vec![1.0; 3], 0, 1.0, 1.0).unwrap().into();
        let h = flow::evolve(&s, FlowKind::Rhf, &SolverOptions { t_max: 5.0, fixed_dt: Some(1e-2), ..Default::default() }).unwrap();
        let c = smin_ode_check(&h);
        assert!(c.pass && c.min_margin > 0.0);
    }

    #[test]
    fn h_growth_on_torus_is_monotone() {
        let s: GeometryState = presets::torus_h(vec![1.0; 3], 1.0).unwrap().into();
        let h = flow::evolve(&s, FlowKind::Crf, &SolverOptions { t_max: 2.0, fixed_dt: Some(1e-2), ..Default::default() }).unwrap();
        let c = h_growth_check(&h).unwrap();
        assert_eq!(c.k1, 0.0);
        assert_eq!(c.k2, 6.0);
        assert!(c.pass);
        let d = doubling_bound_check(&h).unwrap();
        assert_eq!(d.increasing_steps, 0);
        assert!(d.pass);
    }
}
