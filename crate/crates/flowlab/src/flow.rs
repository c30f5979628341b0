//! Method-of-lines integration of the two flows.
//!
//! The rot-sym system is integrated in DeTurck form: the geometric
//! right-hand side plus the Lie derivative along a vector field `W`
//! built from the initial metric. The grid stays fixed; `W` only keeps
//! the pole behaviour well posed.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::geometry::stencil::{d1, d2, EVEN, ODD};
use crate::geometry::{self, Diagnostics, FlowKind, Gauge, GeometryState, RotSymState, TorusState};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ansatz", rename_all = "kebab-case")]
pub enum StateDerivative {
    Torus { du: Vec<f64>, dh: Vec<f64>, dk: Vec<f64> },
    RotSym { da: Vec<f64>, dpsi: Vec<f64>, dphi: Vec<f64> },
}

fn torus_rhs(s: &TorusState, kind: FlowKind) -> StateDerivative {
    let m = s.m;
    let du = match kind {
        FlowKind::Crf => {
            let hh = s.script_h();
            (0..m).map(|i| 0.5 * hh[i * m + i]).collect()
        }
        FlowKind::Rhf => s.k.iter().map(|k| 2.0 * s.alpha * k * k).collect(),
    };
    StateDerivative::Torus { du, dh: vec![0.0; m * m * m], dk: vec![0.0; m] }
}

fn rotsym_rhs(s: &RotSymState, kind: FlowKind, gauge: Option<&Gauge>) -> StateDerivative {
    let f = s.fields();
    let nn = s.nodes();
    let n = s.n as f64;
    let alpha = if kind == FlowKind::Rhf { s.alpha } else { 0.0 };
    let mut da: Vec<f64> = (0..nn)
        .map(|j| s.a[j] * (-(n - 1.0) * f.k_rad[j] + alpha * f.phi_s[j] * f.phi_s[j]))
        .collect();
    let mut dpsi: Vec<f64> = (0..nn)
        .map(|j| s.psi[j] * (-f.k_rad[j] - (n - 2.0) * f.k_sph[j]))
        .collect();
    let mut dphi = match kind {
        FlowKind::Rhf => f.tension.clone(),
        FlowKind::Crf => vec![0.0; nn],
    };
    if let Some(g) = gauge {
        let h = f.h;
        let w = f.deturck(s, g);
        let abx = d1(&g.a, h, EVEN);
        let pbx = d1(&g.psi, h, ODD);
        let inv_a: Vec<f64> = s.a.iter().map(|a| 1.0 / a).collect();
        let bg: Vec<f64> = (0..nn).map(|j| abx[j] / (g.a[j] * s.a[j])).collect();
        let mut q = vec![0.0; nn];
        for j in 1..nn - 1 {
            let (a, p) = (s.a[j], s.psi[j]);
            q[j] = f.psi_x[j] / (a * p) - a * g.psi[j] * pbx[j] / (g.a[j] * g.a[j] * p * p);
        }
        let t1 = d2(&inv_a, h, EVEN);
        let t2 = d1(&bg, h, ODD);
        let t3 = d1(&q, h, ODD);
        for j in 0..nn {
            da[j] += -t1[j] - t2[j] - (n - 1.0) * t3[j];
            dpsi[j] += w[j] * f.psi_x[j];
            if kind == FlowKind::Rhf {
                dphi[j] += w[j] * f.phi_x[j];
            }
        }
    }
    dpsi[0] = 0.0;
    dpsi[nn - 1] = 0.0;
    StateDerivative::RotSym { da, dpsi, dphi }
}

fn check_kind(state: &GeometryState, kind: FlowKind) -> Result<()> {
    match (state, kind) {
        (GeometryState::RotSym(s), FlowKind::Crf) if s.alpha != 0.0 && s.phi.iter().any(|p| *p != s.phi[0]) => {
            Err(FlowError::KindMismatch("CRF on the rot-sym ansatz carries no map field".into()))
        }
        (GeometryState::Torus(s), FlowKind::Rhf) if s.h.iter().any(|h| *h != 0.0) => {
            Err(FlowError::KindMismatch("RHF torus state carries a 3-form".into()))
        }
        (GeometryState::Torus(s), FlowKind::Crf) if s.k.iter().any(|k| *k != 0.0) && s.alpha != 0.0 => {
            Err(FlowError::KindMismatch("CRF torus state carries a coupled winding map".into()))
        }
        _ => Ok(()),
    }
}

/// Geometric right-hand side of the flow, with an optional DeTurck background.
pub fn rhs(state: &GeometryState, kind: FlowKind, gauge: Option<&Gauge>) -> Result<StateDerivative> {
    check_kind(state, kind)?;
    Ok(match state {
        GeometryState::Torus(s) => torus_rhs(s, kind),
        GeometryState::RotSym(s) => rotsym_rhs(s, kind, gauge),
    })
}

/// `∂g = -2Rc + ½𝓗`, `∂H = Δ_LB H`.
pub fn crf_rhs(state: &GeometryState) -> Result<StateDerivative> {
    rhs(state, FlowKind::Crf, None)
}

/// `∂g = -2Rc + 2α∇φ⊗∇φ`, `∂φ = τ_g φ`.
pub fn rhf_rhs(state: &GeometryState) -> Result<StateDerivative> {
    rhs(state, FlowKind::Rhf, None)
}

/// `state + c·d`, advancing the clock by `c`.
pub fn axpy(state: &GeometryState, d: &StateDerivative, c: f64) -> GeometryState {
    let add = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(x, y)| x + c * y).collect::<Vec<f64>>();
    match (state, d) {
        (GeometryState::Torus(s), StateDerivative::Torus { du, dh, dk }) => GeometryState::Torus(TorusState {
            m: s.m,
            u: add(&s.u, du),
            h: add(&s.h, dh),
            k: add(&s.k, dk),
            alpha: s.alpha,
            t: s.t + c,
        }),
        (GeometryState::RotSym(s), StateDerivative::RotSym { da, dpsi, dphi }) => {
            let mut psi = add(&s.psi, dpsi);
            let nn = psi.len();
            psi[0] = 0.0;
            psi[nn - 1] = 0.0;
            GeometryState::RotSym(RotSymState {
                n: s.n,
                a: add(&s.a, da),
                psi,
                phi: add(&s.phi, dphi),
                alpha: s.alpha,
                t: s.t + c,
            })
        }
        _ => unreachable!("derivative shape mismatch"),
    }
}

fn combine(d: [&StateDerivative; 4]) -> StateDerivative {
    let mix = |v: [&Vec<f64>; 4]| -> Vec<f64> {
        (0..v[0].len()).map(|i| (v[0][i] + 2.0 * v[1][i] + 2.0 * v[2][i] + v[3][i]) / 6.0).collect()
    };
    match d {
        [StateDerivative::Torus { du: a1, dh: b1, dk: c1 }, StateDerivative::Torus { du: a2, dh: b2, dk: c2 }, StateDerivative::Torus { du: a3, dh: b3, dk: c3 }, StateDerivative::Torus { du: a4, dh: b4, dk: c4 }] => {
            StateDerivative::Torus { du: mix([a1, a2, a3, a4]), dh: mix([b1, b2, b3, b4]), dk: mix([c1, c2, c3, c4]) }
        }
        [StateDerivative::RotSym { da: a1, dpsi: b1, dphi: c1 }, StateDerivative::RotSym { da: a2, dpsi: b2, dphi: c2 }, StateDerivative::RotSym { da: a3, dpsi: b3, dphi: c3 }, StateDerivative::RotSym { da: a4, dpsi: b4, dphi: c4 }] => {
            StateDerivative::RotSym { da: mix([a1, a2, a3, a4]), dpsi: mix([b1, b2, b3, b4]), dphi: mix([c1, c2, c3, c4]) }
        }
        _ => unreachable!("derivative shape mismatch"),
    }
}

fn finite(d: &StateDerivative) -> bool {
    let all = |v: &[f64]| v.iter().all(|x| x.is_finite());
    match d {
        StateDerivative::Torus { du, dh, dk } => all(du) && all(dh) && all(dk),
        StateDerivative::RotSym { da, dpsi, dphi } => all(da) && all(dpsi) && all(dphi),
    }
}

/// One classical RK4 step; the result is re-validated.
pub fn step(state: &GeometryState, kind: FlowKind, gauge: Option<&Gauge>, dt: f64, pole_tol: f64) -> Result<GeometryState> {
    if !(dt > 0.0) {
        return Err(FlowError::InvalidParameter("dt must be > 0".into()));
    }
    let rate = |s: &GeometryState| -> Result<StateDerivative> {
        let d = rhs(s, kind, gauge)?;
        if finite(&d) {
            Ok(d)
        } else {
            Err(FlowError::NonFinite("right-hand side".into()))
        }
    };
    let k1 = rate(state)?;
    let k2 = rate(&axpy(state, &k1, 0.5 * dt))?;
    let k3 = rate(&axpy(state, &k2, 0.5 * dt))?;
    let k4 = rate(&axpy(state, &k3, dt))?;
    let next = axpy(state, &combine([&k1, &k2, &k3, &k4]), dt);
    match &next {
        GeometryState::Torus(s) => s.validate()?,
        GeometryState::RotSym(s) => s.validate(pole_tol)?,
    }
    Ok(next)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub sigma: f64,
    pub t_max: f64,
    #[serde(rename = "P_stop")]
    pub p_stop: f64,
    pub psi_floor: f64,
    /// Cap on dt; required for the ODE ansatz when sup AC vanishes.
    pub dt_max: Option<f64>,
    pub fixed_dt: Option<f64>,
    /// Approximate number of cadence snapshots kept.
    pub snapshot_target: usize,
    pub pole_tol: f64,
    pub max_steps: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            sigma: 0.5,
            t_max: 1.0,
            p_stop: 1e6,
            psi_floor: 1e-4,
            dt_max: None,
            fixed_dt: None,
            snapshot_target: 500,
            pole_tol: geometry::rotsym::POLE_SLOPE_TOL,
            max_steps: 10_000_000,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(FlowError::InvalidParameter(m.into()));
        if !(self.sigma > 0.0 && self.sigma <= 1.0) {
            return bad("sigma must lie in (0, 1]");
        }
        if !(self.t_max > 0.0) {
            return bad("t_max must be > 0");
        }
        if !(self.p_stop > 0.0) {
            return bad("P_stop must be > 0");
        }
        if !(self.psi_floor >= 0.0) {
            return bad("psi_floor must be >= 0");
        }
        if matches!(self.dt_max, Some(d) if !(d > 0.0)) || matches!(self.fixed_dt, Some(d) if !(d > 0.0)) {
            return bad("dt_max and fixed_dt must be > 0");
        }
        if self.snapshot_target == 0 {
            return bad("snapshot_target must be >= 1");
        }
        Ok(())
    }
}

/// `σ·min(Δs_min²/2, 1/(10 sup AC))`, the first term only on the grid.
pub fn adaptive_dt(state: &GeometryState, sup_ac: f64, opts: &SolverOptions) -> Result<f64> {
    if !sup_ac.is_finite() {
        return Err(FlowError::NonFinite("sup AC".into()));
    }
    let curv = if sup_ac > 0.0 { 1.0 / (10.0 * sup_ac) } else { f64::INFINITY };
    let dt = match state {
        GeometryState::RotSym(s) => {
            let ds = s.a.iter().cloned().fold(f64::INFINITY, f64::min) * s.h();
            opts.sigma * curv.min(ds * ds / 2.0)
        }
        GeometryState::Torus(_) => opts.sigma * curv,
    };
    let dt = match opts.dt_max {
        Some(cap) => dt.min(cap),
        None => dt,
    };
    if dt.is_finite() {
        Ok(dt)
    } else {
        Err(FlowError::InvalidParameter("flat homogeneous state needs dt_max".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    ReachedTMax,
    BlowUp,
    PsiFloor,
    StepUnderflow,
    NonFinite,
    StepLimit,
}

impl Termination {
    pub fn is_singular(self) -> bool {
        matches!(self, Termination::BlowUp | Termination::PsiFloor | Termination::StepUnderflow | Termination::NonFinite)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub record: bool,
    pub diag: Diagnostics,
    pub state: GeometryState,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub sup_ac: f64,
    pub volume: f64,
    pub s_min: f64,
    pub sup_h2: f64,
    pub dt: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlowHistory {
    pub kind: FlowKind,
    pub gauge: Option<Gauge>,
    pub snapshots: Vec<Snapshot>,
    /// One row per accepted step, starting with the initial state.
    pub series: Vec<SeriesRow>,
    pub termination: Termination,
    pub stride: usize,
}

impl FlowHistory {
    pub fn t_final(&self) -> f64 {
        self.series.last().map(|r| r.t).unwrap_or(0.0)
    }

    pub fn dt_last(&self) -> f64 {
        self.series.last().map(|r| r.dt).unwrap_or(0.0)
    }

    /// Indices of series rows that set a new running maximum of sup AC.
    pub fn record_rows(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut best = f64::NEG_INFINITY;
        for (i, r) in self.series.iter().enumerate() {
            if r.sup_ac > best {
                best = r.sup_ac;
                out.push(i);
            }
        }
        out
    }

    pub fn final_state(&self) -> &GeometryState {
        &self.snapshots.last().expect("history has snapshots").state
    }
}

fn psi_min(state: &GeometryState) -> f64 {
    match state {
        GeometryState::RotSym(s) => s.psi[1..s.nodes() - 1].iter().cloned().fold(f64::INFINITY, f64::min),
        GeometryState::Torus(_) => f64::INFINITY,
    }
}

/// Integrate until a stop condition fires.
pub fn evolve(initial: &GeometryState, kind: FlowKind, opts: &SolverOptions) -> Result<FlowHistory> {
    evolve_with_gauge(initial, kind, opts, None)
}

pub fn evolve_with_gauge(
    initial: &GeometryState,
    kind: FlowKind,
    opts: &SolverOptions,
    gauge: Option<Gauge>,
) -> Result<FlowHistory> {
    opts.validate()?;
    initial.validate()?;
    check_kind(initial, kind)?;
    let gauge = match initial {
        GeometryState::RotSym(s) => Some(gauge.unwrap_or_else(|| Gauge::from_state(s))),
        GeometryState::Torus(_) => None,
    };
    let mut state = initial.clone();
    let mut diag = geometry::diagnostics(&state, kind)?;
    let row = |s: &GeometryState, d: &Diagnostics, dt: f64| SeriesRow {
        t: s.t(),
        sup_ac: d.sup_ac,
        volume: d.volume,
        s_min: d.s_min,
        sup_h2: d.sup_h2,
        dt,
    };
    let mut series = vec![row(&state, &diag, 0.0)];
    let mut snapshots = vec![Snapshot { step: 0, record: true, diag, state: state.clone() }];
    let mut best = diag.sup_ac;
    let mut stride = 1usize;
    let mut steps = 0usize;
    let t_end = opts.t_max;
    let termination = loop {
        if !diag.sup_ac.is_finite() {
            break Termination::NonFinite;
        }
        if diag.sup_ac >= opts.p_stop {
            break Termination::BlowUp;
        }
        if psi_min(&state) <= opts.psi_floor {
            break Termination::PsiFloor;
        }
        if state.t() >= t_end - 1e-12 * t_end.max(1.0) {
            break Termination::ReachedTMax;
        }
        if steps >= opts.max_steps {
            break Termination::StepLimit;
        }
        let mut dt = match opts.fixed_dt {
            Some(d) => d,
            None => adaptive_dt(&state, diag.sup_ac, opts)?,
        };
        dt = dt.min(t_end - state.t());
        let mut next = None;
        for _ in 0..=20 {
            match step(&state, kind, gauge.as_ref(), dt, opts.pole_tol) {
                Ok(s) => {
                    next = Some(s);
                    break;
                }
                Err(_) => dt *= 0.5,
            }
        }
        let Some(next) = next else {
            break Termination::StepUnderflow;
        };
        let Ok(d) = geometry::diagnostics(&next, kind) else {
            break Termination::NonFinite;
        };
        state = next;
        diag = d;
        steps += 1;
        series.push(row(&state, &diag, dt));
        let record = diag.sup_ac > best;
        if record {
            best = diag.sup_ac;
        }
        if record || steps % stride == 0 {
            snapshots.push(Snapshot { step: steps, record, diag, state: state.clone() });
        }
        let cadence = snapshots.iter().filter(|s| !s.record).count();
        if cadence > 2 * opts.snapshot_target {
            stride *= 2;
            snapshots.retain(|s| s.record || s.step % stride == 0);
        }
    };
    if snapshots.last().map(|s| s.step) != Some(steps) {
        snapshots.push(Snapshot { step: steps, record: false, diag, state });
    }
    Ok(FlowHistory { kind, gauge, snapshots, series, termination, stride })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TEstimate {
    /// `None` encodes an infinite singular time.
    pub t_hat: Option<f64>,
    pub low_confidence: bool,
    pub fit_residual: f64,
    pub points: usize,
}

/// Least-squares line through `(x, y)`: returns `(slope, intercept, rms residual)`.
pub fn line_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let icept = my - slope * mx;
    let rms = (x.iter().zip(y).map(|(x, y)| (y - slope * x - icept).powi(2)).sum::<f64>() / n).sqrt();
    (slope, icept, rms)
}

/// Extrapolate the zero of `1/sup AC` from the trailing record highs.
pub fn estimate_t(history: &FlowHistory, window: usize) -> TEstimate {
    if !history.termination.is_singular() {
        return TEstimate { t_hat: None, low_confidence: false, fit_residual: 0.0, points: 0 };
    }
    let t_final = history.t_final();
    let fallback = |pts: usize, res: f64| TEstimate {
        t_hat: Some(t_final + history.dt_last()),
        low_confidence: true,
        fit_residual: res,
        points: pts,
    };
    let rows = history.record_rows();
    let tail = &rows[rows.len().saturating_sub(window)..];
    if tail.len() < 4 {
        return fallback(tail.len(), f64::NAN);
    }
    let t: Vec<f64> = tail.iter().map(|&i| history.series[i].t).collect();
    let y: Vec<f64> = tail.iter().map(|&i| 1.0 / history.series[i].sup_ac).collect();
    let (b, c, rms) = line_fit(&t, &y);
    let scale = y.iter().cloned().fold(0.0, f64::max);
    let rel = if scale > 0.0 { rms / scale } else { rms };
    if b >= 0.0 {
        return fallback(tail.len(), rel);
    }
    let t_hat = -c / b;
    if !(t_hat > t_final) {
        return fallback(tail.len(), rel);
    }
    TEstimate { t_hat: Some(t_hat), low_confidence: false, fit_residual: rel, points: tail.len() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    fn torus_h() -> GeometryState {
        presets::torus_h(vec![1.0; 3], 1.0).unwrap().into()
    }

    #[test]
    fn crf_torus_rhs_is_half_script_h() {
        let StateDerivative::Torus { du, .. } = crf_rhs(&torus_h()).unwrap() else { panic!() };
        assert_eq!(du, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn rhf_winding_rhs() {
        let s: GeometryState = presets::winding(vec![1.0; 3], 0, 1.0, 1.0).unwrap().into();
        let StateDerivative::Torus { du, .. } = rhf_rhs(&s).unwrap() else { panic!() };
        assert_eq!(du, vec![2.0, 0.0, 0.0]);
    }

    #[test]
    fn rk4_torus_matches_closed_form() {
        let opts = SolverOptions::default();
        let s = step(&torus_h(), FlowKind::Crf, None, 1e-3, opts.pole_tol).unwrap();
        let GeometryState::Torus(s) = s else { panic!() };
        let want = (1.0f64 + 3e-3).cbrt();
        for u in s.u {
            assert!((u - want).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_rhs_leaves_state() {
        let s: GeometryState = presets::flat_torus(vec![1.0, 2.0, 3.0], 0.0).unwrap().into();
        let n = step(&s, FlowKind::Crf, None, 0.1, 1e-3).unwrap();
        let (GeometryState::Torus(a), GeometryState::Torus(b)) = (&s, &n) else { panic!() };
        assert_eq!(a.u, b.u);
    }

    #[test]
    fn adaptive_dt_examples() {
        let opts = SolverOptions::default();
        assert!((adaptive_dt(&torus_h(), 6.0, &opts).unwrap() - 1.0 / 120.0).abs() < 1e-15);
        let flat: GeometryState = presets::flat_torus(vec![1.0; 3], 0.0).unwrap().into();
        assert!(adaptive_dt(&flat, 0.0, &opts).is_err());
        let capped = SolverOptions { dt_max: Some(0.01), ..opts.clone() };
        assert_eq!(adaptive_dt(&flat, 0.0, &capped).unwrap(), 0.01);
        assert!(adaptive_dt(&flat, f64::NAN, &capped).is_err());
    }

    #[test]
    fn kind_mismatch_rejected() {
        let s: GeometryState = presets::torus_h(vec![1.0; 3], 1.0).unwrap().into();
        assert!(matches!(rhf_rhs(&s), Err(FlowError::KindMismatch(_))));
    }

    #[test]
    fn line_fit_exact() {
        let (b, c, r) = line_fit(&[0.0, 1.0, 2.0], &[1.0, 3.0, 5.0]);
        assert!((b - 2.0).abs() < 1e-14 && (c - 1.0).abs() < 1e-14 && r < 1e-14);
    }
}
