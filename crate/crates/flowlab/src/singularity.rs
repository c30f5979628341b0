//! Singularity classification, point picking, parabolic dilation and
//! the bound checks a blow-up limit has to satisfy.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::flow::{line_fit, FlowHistory, SeriesRow, Snapshot};
use crate::geometry::{self, GeometryState};
use crate::serde_ext;

/// Model bounds for Type II and III limits are checked over the whole
/// existence interval of the limit, `(-inf, inf)` and `(-a, inf)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingularityType {
    I,
    IIa,
    IIb,
    III,
    #[serde(rename = "none")]
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifyOptions {
    pub kappa: f64,
    pub slope_max: f64,
    /// `sup AC` below `decay · initial` means no singularity.
    pub decay: f64,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        ClassifyOptions { kappa: 2.0, slope_max: 0.1, decay: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SingularityVerdict {
    #[serde(rename = "type")]
    pub kind: SingularityType,
    #[serde(with = "serde_ext::inf_opt")]
    pub t_hat: Option<f64>,
    /// `(t, M)` over the trailing window; `M = sup AC·(T̂ - t)` or `sup AC·t`.
    pub m_series: Vec<(f64, f64)>,
    pub median: f64,
    pub max: f64,
    /// Slope of `ln M` against `-ln(T̂ - t)` (finite T) or `ln t` (infinite T).
    pub slope: f64,
    /// Trailing value of `M`: the model constant `ω` or `a`.
    pub limit: f64,
    pub low_confidence: bool,
    pub thresholds: ClassifyOptions,
    pub notes: Vec<String>,
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    let n = s.len();
    if n == 0 {
        f64::NAN
    } else if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

struct Trend {
    median: f64,
    max: f64,
    slope: f64,
}

fn trend(x: &[f64], m: &[f64]) -> Trend {
    let lm: Vec<f64> = m.iter().map(|v| v.ln()).collect();
    let (slope, _, _) = line_fit(x, &lm);
    Trend { median: median(m), max: m.iter().cloned().fold(f64::NEG_INFINITY, f64::max), slope }
}

pub fn classify(history: &FlowHistory, t_hat: Option<f64>, opts: &ClassifyOptions) -> SingularityVerdict {
    let mut v = SingularityVerdict {
        kind: SingularityType::None,
        t_hat,
        m_series: Vec::new(),
        median: f64::NAN,
        max: f64::NAN,
        slope: f64::NAN,
        limit: f64::NAN,
        low_confidence: false,
        thresholds: opts.clone(),
        notes: Vec::new(),
    };
    let rows = &history.series;
    if rows.len() < 2 {
        v.low_confidence = true;
        v.notes.push("fewer than two recorded rows".into());
        return v;
    }
    match t_hat {
        Some(th) => {
            let rec = history.record_rows();
            let tail: Vec<&SeriesRow> = rec[rec.len() / 2..].iter().map(|&i| &rows[i]).filter(|r| r.t < th).collect();
            v.m_series = tail.iter().map(|r| (r.t, r.sup_ac * (th - r.t))).collect();
            if v.m_series.len() < 4 {
                v.low_confidence = true;
                v.notes.push(format!("only {} record highs in the trailing window", v.m_series.len()));
            }
            if v.m_series.is_empty() {
                v.kind = SingularityType::IIa;
                return v;
            }
            let x: Vec<f64> = tail.iter().map(|r| -(th - r.t).ln()).collect();
            let m: Vec<f64> = v.m_series.iter().map(|p| p.1).collect();
            let tr = trend(&x, &m);
            v.median = tr.median;
            v.max = tr.max;
            v.slope = tr.slope;
            v.limit = *m.last().unwrap();
            v.kind = if tr.max <= opts.kappa * tr.median && tr.slope <= opts.slope_max {
                SingularityType::I
            } else {
                SingularityType::IIa
            };
        }
        None => {
            let first = rows[0].sup_ac;
            let last = rows.last().unwrap().sup_ac;
            if first <= 0.0 && rows.iter().all(|r| r.sup_ac == 0.0) {
                v.notes.push("AC identically zero".into());
                return v;
            }
            if last < opts.decay * first {
                v.notes.push("sup AC decayed below the decay threshold".into());
                return v;
            }
            let t_end = rows.last().unwrap().t;
            let tail: Vec<&SeriesRow> = rows.iter().filter(|r| r.t > 0.0 && r.t >= 0.5 * t_end).collect();
            if tail.len() < 4 {
                v.low_confidence = true;
                v.notes.push(format!("only {} rows in the trailing half", tail.len()));
            }
            if tail.is_empty() {
                return v;
            }
            v.m_series = tail.iter().map(|r| (r.t, r.sup_ac * r.t)).collect();
            let x: Vec<f64> = tail.iter().map(|r| r.t.ln()).collect();
            let m: Vec<f64> = v.m_series.iter().map(|p| p.1).collect();
            let tr = trend(&x, &m);
            v.median = tr.median;
            v.max = tr.max;
            v.slope = tr.slope;
            v.limit = *m.last().unwrap();
            v.kind = if tr.max <= opts.kappa * tr.median && tr.slope <= opts.slope_max {
                SingularityType::III
            } else {
                SingularityType::IIb
            };
        }
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Pick {
    /// Index into `history.snapshots`.
    pub snapshot: usize,
    /// Grid index of the AC maximum (0 on the torus).
    pub x_index: usize,
    pub x: f64,
    pub t: f64,
    pub lambda: f64,
}

/// Snapshots with `sup AC(t_i) >= c1·sup_{[0,t_i]} sup AC` and
/// `AC(x_i, t_i) >= c2·sup AC(t_i)`, taking `x_i` at the argmax.
pub fn pick_points(history: &FlowHistory, c1: f64, c2: f64) -> Result<Vec<Pick>> {
    if !(c1 > 0.0 && c1 <= 1.0 && c2 > 0.0 && c2 <= 1.0) {
        return Err(FlowError::InvalidParameter("c1, c2 must lie in (0, 1]".into()));
    }
    let mut prefix = Vec::with_capacity(history.series.len());
    let mut best = f64::NEG_INFINITY;
    for r in &history.series {
        best = best.max(r.sup_ac);
        prefix.push(best);
    }
    let mut out = Vec::new();
    for (i, s) in history.snapshots.iter().enumerate() {
        let qualifies = if c1 == 1.0 { s.record } else { s.diag.sup_ac >= c1 * prefix[s.step] };
        if qualifies && s.diag.sup_ac > 0.0 {
            out.push(Pick {
                snapshot: i,
                x_index: s.diag.argmax,
                x: s.state.location(s.diag.argmax),
                t: s.state.t(),
                lambda: s.diag.sup_ac,
            });
        }
    }
    Ok(out)
}

/// Rescale the recorded flow about a pick: `g -> λg`, `H -> λH`, `s = λ(t - t_i)`.
/// Snapshots earlier than `s_back` in rescaled time are dropped when it is given.
pub fn dilate(history: &FlowHistory, pick: &Pick, s_back: Option<f64>) -> Result<FlowHistory> {
    let lambda = pick.lambda;
    if !(lambda > 0.0) {
        return Err(FlowError::FlatPoint);
    }
    let mut snapshots = Vec::new();
    for sn in &history.snapshots {
        let s = lambda * (sn.state.t() - pick.t);
        if let Some(b) = s_back {
            if s < -b {
                continue;
            }
        }
        let mut state = sn.state.scaled(lambda);
        state.set_t(s);
        let diag = geometry::diagnostics(&state, history.kind)?;
        snapshots.push(Snapshot { step: sn.step, record: sn.record, diag, state });
    }
    let series = snapshots
        .iter()
        .map(|s| SeriesRow {
            t: s.state.t(),
            sup_ac: s.diag.sup_ac,
            volume: s.diag.volume,
            s_min: s.diag.s_min,
            sup_h2: s.diag.sup_h2,
            dt: 0.0,
        })
        .collect();
    Ok(FlowHistory {
        kind: history.kind,
        gauge: history.gauge.as_ref().map(|g| g.scaled(lambda)),
        snapshots,
        series,
        termination: history.termination,
        stride: history.stride,
    })
}

/// AC at grid index `x` of a state.
pub fn ac_at(state: &GeometryState, kind: geometry::FlowKind, x: usize) -> Result<f64> {
    Ok(geometry::ac(state, kind)?.values[x])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupWindow {
    pub pick: Pick,
    /// AC at the picked point at rescaled time 0.
    pub ac_at_pick: f64,
    pub history: FlowHistory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupSequence {
    pub picks: Vec<Pick>,
    pub windows: Vec<BlowupWindow>,
    pub c1: f64,
    pub c2: f64,
}

/// Picks (kept with nondecreasing scale) and dilations of the last
/// `max_windows` of them.
pub fn blowup(history: &FlowHistory, c1: f64, c2: f64, max_windows: usize, s_back: Option<f64>) -> Result<BlowupSequence> {
    let mut picks = Vec::new();
    for p in pick_points(history, c1, c2)? {
        if picks.last().map_or(true, |q: &Pick| p.lambda >= q.lambda && p.t > q.t) {
            picks.push(p);
        }
    }
    let from = picks.len().saturating_sub(max_windows);
    let windows = picks[from..]
        .iter()
        .map(|p| {
            let h = dilate(history, p, s_back)?;
            let zero = h
                .snapshots
                .iter()
                .find(|s| s.step == history.snapshots[p.snapshot].step)
                .expect("pick lies in its own window");
            let ac_at_pick = ac_at(&zero.state, history.kind, p.x_index)?;
            Ok(BlowupWindow { pick: *p, ac_at_pick, history: h })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(BlowupSequence { picks, windows, c1, c2 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowBound {
    pub t_pick: f64,
    pub lambda: f64,
    /// `min (bound·(1+tol) - AC)/bound` over the window.
    pub margin: f64,
    /// `|AC - bound|` at rescaled time 0.
    pub gap_at_zero: f64,
    pub non_flat: bool,
    pub points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelBoundReport {
    pub applicable: bool,
    pub model: String,
    pub constant: f64,
    pub tol: f64,
    pub windows: Vec<WindowBound>,
    pub margin: f64,
    pub pass: bool,
    pub notes: Vec<String>,
}

pub fn check_model_bounds(seq: &BlowupSequence, verdict: &SingularityVerdict, tol: f64) -> ModelBoundReport {
    let mut rep = ModelBoundReport {
        applicable: true,
        model: String::new(),
        constant: verdict.limit,
        tol,
        windows: Vec::new(),
        margin: f64::NAN,
        pass: false,
        notes: Vec::new(),
    };
    let c = verdict.limit;
    let bound: Box<dyn Fn(f64) -> Option<f64>> = match verdict.kind {
        SingularityType::None => {
            rep.applicable = false;
            rep.model = "none".into();
            rep.notes.push("flat, not a singularity model".into());
            return rep;
        }
        SingularityType::I => {
            rep.model = "ancient: AC <= ω/(ω - s)".into();
            Box::new(move |s| (s < c).then(|| c / (c - s)))
        }
        SingularityType::IIa | SingularityType::IIb => {
            rep.model = "eternal: AC <= 1".into();
            Box::new(|_| Some(1.0))
        }
        SingularityType::III => {
            rep.model = "immortal: AC <= a/(a + s)".into();
            Box::new(move |s| (s > -c).then(|| c / (c + s)))
        }
    };
    if seq.windows.is_empty() {
        rep.notes.push("no blow-up windows".into());
        return rep;
    }
    let mut worst = f64::INFINITY;
    let mut all_non_flat = true;
    for w in &seq.windows {
        let mut margin = f64::INFINITY;
        let mut points = 0;
        let mut sup = 0.0f64;
        let mut gap = f64::NAN;
        for sn in &w.history.snapshots {
            let s = sn.state.t();
            sup = sup.max(sn.diag.sup_ac);
            if let Some(b) = bound(s) {
                points += 1;
                margin = margin.min((b * (1.0 + tol) - sn.diag.sup_ac) / b);
                if s == 0.0 {
                    gap = (sn.diag.sup_ac - b).abs();
                }
            }
        }
        let non_flat = sup >= 1.0 - 1e-9;
        all_non_flat &= non_flat;
        worst = worst.min(margin);
        rep.windows.push(WindowBound { t_pick: w.pick.t, lambda: w.pick.lambda, margin, gap_at_zero: gap, non_flat, points });
    }
    if !all_non_flat {
        rep.notes.push("flat, not a singularity model".into());
    }
    rep.margin = worst;
    rep.pass = worst >= 0.0 && all_non_flat;
    rep
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LowerBound {
    pub applicable: bool,
    pub c_fit: f64,
    /// `max/min` of `M` over the trailing half of the run.
    pub spread: f64,
    pub pass: bool,
}

/// `c_fit = min_t sup AC·(T̂ - t)`.
pub fn lower_bound_check(history: &FlowHistory, t_hat: Option<f64>) -> LowerBound {
    let Some(th) = t_hat else {
        return LowerBound { applicable: false, c_fit: f64::NAN, spread: f64::NAN, pass: false };
    };
    let rows: Vec<&SeriesRow> = history.series.iter().filter(|r| r.t < th).collect();
    let m: Vec<f64> = rows.iter().map(|r| r.sup_ac * (th - r.t)).collect();
    let c_fit = m.iter().cloned().fold(f64::INFINITY, f64::min);
    let half = history.t_final() / 2.0;
    let tail: Vec<f64> = rows.iter().zip(&m).filter(|(r, _)| r.t >= half).map(|(_, m)| *m).collect();
    let spread = spread(&tail);
    LowerBound { applicable: true, c_fit, spread, pass: c_fit > 0.0 && spread < 10.0 }
}

fn spread(v: &[f64]) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if v.is_empty() {
        f64::NAN
    } else {
        hi / lo
    }
}

/// Injectivity-radius proxy: half the shortest period on the torus; on the
/// rot-sym ansatz the smaller of the conjugate-radius bound `π/√K_max` and
/// `π·ψ` at the thinnest interior neck.
pub fn inj_proxy(state: &GeometryState) -> f64 {
    match state {
        GeometryState::Torus(s) => s.u.iter().map(|u| u.sqrt() / 2.0).fold(f64::INFINITY, f64::min),
        GeometryState::RotSym(s) => {
            let f = s.fields();
            let kmax = f.k_rad.iter().chain(&f.k_sph).cloned().fold(1e-300, f64::max);
            let nn = s.nodes();
            let neck = (1..nn - 1)
                .filter(|&j| s.psi[j] <= s.psi[j - 1] && s.psi[j] <= s.psi[j + 1])
                .map(|j| s.psi[j])
                .fold(f64::INFINITY, f64::min);
            (std::f64::consts::PI / kmax.sqrt()).min(std::f64::consts::PI * neck)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjCheck {
    pub c_i: f64,
    pub spread: f64,
    pub series: Vec<(f64, f64)>,
    pub pass: bool,
}

/// `inj_proxy² · sup AC >= c_I` with `c_I` fitted over the recorded snapshots.
pub fn inj_estimate_check(history: &FlowHistory) -> InjCheck {
    let series: Vec<(f64, f64)> = history
        .snapshots
        .iter()
        .map(|s| (s.state.t(), inj_proxy(&s.state).powi(2) * s.diag.sup_ac))
        .collect();
    let c_i = series.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
    let half = history.t_final() / 2.0;
    let tail: Vec<f64> = series.iter().filter(|p| p.0 >= half).map(|p| p.1).collect();
    let spread = spread(&tail);
    InjCheck { c_i, spread, series, pass: c_i > 0.0 && c_i.is_finite() && spread < 10.0 }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn spread_of_constant_is_one() {
        assert_eq!(spread(&[2.0, 2.0]), 1.0);
    }
}
