//! The functionals `λ_α`, `μ_α`, `ν_α` and the bounds relating them.
//!
//! With `u = (4πτ)^{-m/4} e^{-f/2}` the entropy becomes
//! `W(u) = τ∫(S u² + 4|∇u|²) - ∫u² ln u² - (m/2)ln(4πτ) - m`
//! on `∫u² = 1`, where `S = R - α|∇φ|²`.
//!
//! Radial problems are discretized on the interior grid nodes with cell
//! volumes `V_j` and edge conductances `c_{j+1/2}`, so that
//! `∫|∇u|² ≈ Σ c (u_{j+1} - u_j)²` and `∫u² ≈ Σ V u²`. No flux crosses
//! the poles, which is the Neumann condition.

use rayon::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::flow::FlowHistory;
use crate::geometry::stencil::{dss, extrapolate_poles, EVEN};
use crate::geometry::{self, sphere_area, GeometryState, RotSymState, TorusState};
use crate::linalg;
use crate::serde_ext;

/// Weighted 1-D Neumann problem.
#[derive(Clone, Debug)]
pub struct RadialProblem {
    pub vol: Vec<f64>,
    pub cond: Vec<f64>,
    pub pot: Vec<f64>,
    /// Arclength coordinate of each unknown.
    pub pos: Vec<f64>,
}

impl RadialProblem {
    pub fn from_rotsym(s: &RotSymState) -> Self {
        let nn = s.nodes();
        let h = s.h();
        let w = sphere_area(s.n - 1);
        let e = s.n as i32 - 1;
        let sv = geometry::map_quantities(&GeometryState::RotSym(s.clone()))
            .map(|m| m.s)
            .unwrap_or_else(|_| vec![f64::NAN; nn]);
        let vol = (1..nn - 1).map(|j| w * s.a[j] * s.psi[j].powi(e) * h).collect();
        let cond = (1..nn - 2)
            .map(|j| {
                let p = 0.5 * (s.psi[j] + s.psi[j + 1]);
                let a = 0.5 * (s.a[j] + s.a[j + 1]);
                w * p.powi(e) / (a * h)
            })
            .collect();
        let mut pos = vec![0.0; nn - 2];
        let mut acc = 0.5 * (s.a[0] + s.a[1]) * h;
        for j in 1..nn - 1 {
            pos[j - 1] = acc;
            acc += 0.5 * (s.a[j] + s.a[j + 1]) * h;
        }
        RadialProblem { vol, cond, pot: sv[1..nn - 1].to_vec(), pos }
    }

    /// Interval `[0, len]` with flat measure and zero potential.
    pub fn interval(len: f64, nodes: usize) -> Self {
        let ds = len / (nodes - 1) as f64;
        let mut vol = vec![ds; nodes];
        vol[0] = ds / 2.0;
        vol[nodes - 1] = ds / 2.0;
        RadialProblem {
            vol,
            cond: vec![1.0 / ds; nodes - 1],
            pot: vec![0.0; nodes],
            pos: (0..nodes).map(|j| j as f64 * ds).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.vol.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vol.is_empty()
    }

    /// `Σ c (u_{j+1} - u_j)²`
    pub fn dirichlet(&self, u: &[f64]) -> f64 {
        self.cond.iter().enumerate().map(|(j, c)| c * (u[j + 1] - u[j]).powi(2)).sum()
    }

    /// `K u` where `uᵀKu` is the Dirichlet energy.
    fn stiff(&self, u: &[f64]) -> Vec<f64> {
        let n = self.len();
        let mut out = vec![0.0; n];
        for (j, c) in self.cond.iter().enumerate() {
            let f = c * (u[j + 1] - u[j]);
            out[j] -= f;
            out[j + 1] += f;
        }
        out
    }

    fn stiff_tridiag(&self, scale: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.len();
        let mut d = vec![0.0; n];
        for (j, c) in self.cond.iter().enumerate() {
            d[j] += scale * c;
            d[j + 1] += scale * c;
        }
        (d, self.cond.iter().map(|c| -scale * c).collect())
    }

    pub fn mass(&self, u: &[f64]) -> f64 {
        self.vol.iter().zip(u).map(|(v, u)| v * u * u).sum()
    }

    /// `(4∫|∇f|² + ∫S f²)/∫f²`
    pub fn rayleigh(&self, f: &[f64]) -> f64 {
        let pot: f64 = self.vol.iter().zip(&self.pot).zip(f).map(|((v, p), f)| v * p * f * f).sum();
        (4.0 * self.dirichlet(f) + pot) / self.mass(f)
    }

    /// `τ(4∫|∇u|² + ∫S u²) - ∫u² ln u²`
    pub fn energy(&self, u: &[f64], tau: f64) -> f64 {
        let mut pot = 0.0;
        let mut ent = 0.0;
        for j in 0..self.len() {
            let u2 = u[j] * u[j];
            pot += self.vol[j] * self.pot[j] * u2;
            if u2 > 0.0 {
                ent += self.vol[j] * u2 * u2.ln();
            }
        }
        tau * (4.0 * self.dirichlet(u) + pot) - ent
    }

    fn gradient(&self, u: &[f64], tau: f64) -> Vec<f64> {
        let k = self.stiff(u);
        (0..self.len())
            .map(|j| {
                let u2 = u[j] * u[j];
                8.0 * tau * k[j] + self.vol[j] * (2.0 * tau * self.pot[j] * u[j] - 2.0 * u[j] * u2.ln() - 2.0 * u[j])
            })
            .collect()
    }

    fn normalize(&self, u: &mut [f64]) {
        let m = self.mass(u).sqrt();
        for x in u.iter_mut() {
            *x /= m;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Eigen {
    pub value: f64,
    /// Eigenfunction normalized to `∫f² = 1`.
    pub function: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

const EIGEN_MAX_ITERS: usize = 10_000;

/// Ground state of `-4Δ + S`: Sturm bisection for the shift, then inverse iteration.
pub fn ground_state(p: &RadialProblem) -> Result<Eigen> {
    let n = p.len();
    let (kd, ke) = p.stiff_tridiag(4.0);
    let sq: Vec<f64> = p.vol.iter().map(|v| v.sqrt()).collect();
    let d: Vec<f64> = (0..n).map(|j| (kd[j] + p.vol[j] * p.pot[j]) / p.vol[j]).collect();
    let e: Vec<f64> = (0..n - 1).map(|j| ke[j] / (sq[j] * sq[j + 1])).collect();
    if d.iter().chain(&e).any(|x| !x.is_finite()) {
        return Err(FlowError::NonFinite("eigen operator".into()));
    }
    let lam = linalg::smallest_eigenvalue(&d, &e);
    let (glo, ghi) = linalg::gershgorin(&d, &e);
    let scale = glo.abs().max(ghi.abs()).max(1.0);
    let mut v: Vec<f64> = sq.clone();
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    let mut shift = lam - 1e-9 * scale;
    while iterations < EIGEN_MAX_ITERS {
        iterations += 1;
        let ds: Vec<f64> = d.iter().map(|x| x - shift).collect();
        let Some(w) = linalg::solve_sym_tridiag(&ds, &e, &v) else {
            shift -= 1e-7 * scale;
            continue;
        };
        let nrm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.iter().map(|x| x / nrm).collect();
        let bv = linalg::mat_vec(&d, &e, &v);
        let rho: f64 = bv.iter().zip(&v).map(|(a, b)| a * b).sum();
        residual = bv.iter().zip(&v).map(|(a, b)| (a - rho * b).powi(2)).sum::<f64>().sqrt() / scale;
        if residual < 1e-12 {
            break;
        }
    }
    if residual >= 1e-12 {
        return Err(FlowError::EigenNoConvergence { iterations, residual });
    }
    let sign = if v.iter().sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
    let mut f: Vec<f64> = v.iter().zip(&sq).map(|(v, s)| sign * v / s).collect();
    p.normalize(&mut f);
    Ok(Eigen { value: p.rayleigh(&f), function: f, iterations, residual })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaReport {
    pub value: f64,
    /// On the full grid (pole values copied from their neighbours); one entry on the torus.
    pub eigenfunction: Vec<f64>,
    pub rayleigh: f64,
}

pub fn lambda_alpha(state: &GeometryState) -> Result<LambdaReport> {
    match state {
        GeometryState::Torus(s) => {
            let sv = 0.0 - s.alpha * s.grad_phi_sq();
            Ok(LambdaReport { value: sv, eigenfunction: vec![s.volume().powf(-0.5)], rayleigh: sv })
        }
        GeometryState::RotSym(s) => {
            let p = RadialProblem::from_rotsym(s);
            let e = ground_state(&p)?;
            let mut f = vec![0.0; s.nodes()];
            f[1..s.nodes() - 1].copy_from_slice(&e.function);
            f[0] = f[1];
            let nn = s.nodes();
            f[nn - 1] = f[nn - 2];
            Ok(LambdaReport { value: e.value, eigenfunction: f, rayleigh: e.value })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MinOptions {
    pub tol: f64,
    pub max_iters: usize,
    /// Adds a third start, a randomly jittered constant, seeded from this.
    pub seed: Option<u64>,
}

impl Default for MinOptions {
    fn default() -> Self {
        MinOptions { tol: 1e-8, max_iters: 20_000, seed: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Minimum {
    /// `τ(4∫|∇u|² + ∫S u²) - ∫u² ln u²` at the minimizer.
    pub energy: f64,
    pub u: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Preconditioned projected gradient descent on the unit sphere `Σ V u² = 1`.
pub fn minimize(p: &RadialProblem, tau: f64, start: Vec<f64>, opts: &MinOptions) -> Result<Minimum> {
    const FLOOR: f64 = 1e-150;
    let n = p.len();
    let mut u: Vec<f64> = start.into_iter().map(|x| x.abs().max(FLOOR)).collect();
    p.normalize(&mut u);
    let mut f = p.energy(&u, tau);
    if !f.is_finite() {
        return Err(FlowError::Divergence("non-finite starting energy".into()));
    }
    let (kd, ke) = p.stiff_tridiag(8.0 * tau);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        let g = p.gradient(&u, tau);
        let theta: f64 = u.iter().zip(&g).map(|(u, g)| u * g).sum::<f64>() / 2.0;
        residual = (0..n)
            .map(|j| (g[j] - 2.0 * theta * p.vol[j] * u[j]).powi(2) / p.vol[j])
            .sum::<f64>()
            .sqrt();
        if residual < opts.tol {
            break;
        }
        iterations += 1;
        let diag: Vec<f64> = (0..n)
            .map(|j| {
                let c = 2.0 * tau * p.pot[j] - 2.0 * (u[j] * u[j]).ln() - 6.0 - 2.0 * theta;
                kd[j] + p.vol[j] * c.max(1.0)
            })
            .collect();
        let vu: Vec<f64> = (0..n).map(|j| p.vol[j] * u[j]).collect();
        let (Some(zg), Some(zv)) = (linalg::solve_sym_tridiag(&diag, &ke, &g), linalg::solve_sym_tridiag(&diag, &ke, &vu)) else {
            return Err(FlowError::Divergence("singular preconditioner".into()));
        };
        let gamma = vu.iter().zip(&zg).map(|(a, b)| a * b).sum::<f64>() / vu.iter().zip(&zv).map(|(a, b)| a * b).sum::<f64>();
        let d: Vec<f64> = (0..n).map(|j| -(zg[j] - gamma * zv[j])).collect();
        let slope: f64 = g.iter().zip(&d).map(|(g, d)| g * d).sum();
        if slope >= 0.0 {
            break;
        }
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let mut trial: Vec<f64> = (0..n).map(|j| u[j] + step * d[j]).collect();
            if trial.iter().all(|x| *x > 0.0) {
                p.normalize(&mut trial);
                let ft = p.energy(&trial, tau);
                if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                    u = trial.into_iter().map(|x| x.max(FLOOR)).collect();
                    f = ft;
                    accepted = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if !f.is_finite() {
        return Err(FlowError::Divergence("non-finite energy".into()));
    }
    Ok(Minimum { energy: f, u, residual, iterations })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuResult {
    pub tau: f64,
    pub value: f64,
    pub minimizer: Vec<f64>,
    pub residual: f64,
    /// `constant`, `gaussian`, `closed-form` or `product`.
    pub method: String,
}

fn entropy_const(m: usize, tau: f64) -> f64 {
    -(m as f64 / 2.0) * (4.0 * std::f64::consts::PI * tau).ln() - m as f64
}

fn best_of(p: &RadialProblem, tau: f64, starts: Vec<(&str, Vec<f64>)>, opts: &MinOptions) -> Result<(Minimum, String)> {
    let mut best: Option<(Minimum, String)> = None;
    let mut last_err = None;
    for (name, s) in starts {
        match minimize(p, tau, s, opts) {
            Ok(m) => {
                if best.as_ref().map_or(true, |b| m.energy < b.0.energy) {
                    best = Some((m, name.to_string()));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    best.ok_or_else(|| last_err.unwrap_or_else(|| FlowError::Divergence("no start converged".into())))
}

fn starts(p: &RadialProblem, center: f64, tau: f64, opts: &MinOptions) -> Vec<(&'static str, Vec<f64>)> {
    let mut out = vec![("constant", vec![1.0; p.len()]), ("gaussian", gaussian(p, center, tau))];
    if let Some(seed) = opts.seed {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        out.push(("jitter", (0..p.len()).map(|_| 1.0 + rng.gen_range(-0.25..0.25)).collect()));
    }
    out
}

fn gaussian(p: &RadialProblem, center: f64, tau: f64) -> Vec<f64> {
    p.pos.iter().map(|s| (-(s - center).powi(2) / (8.0 * tau)).exp()).collect()
}

/// Smallest `τ` at which the constant is the global minimizer on a flat torus
/// (log-Sobolev constant of a circle equals its spectral gap).
pub fn torus_threshold(s: &TorusState) -> f64 {
    s.u.iter().cloned().fold(0.0, f64::max) / (8.0 * std::f64::consts::PI.powi(2))
}

pub const PRODUCT_NODES: usize = 401;

fn mu_torus(s: &TorusState, tau: f64, opts: &MinOptions) -> Result<MuResult> {
    let sv = 0.0 - s.alpha * s.grad_phi_sq();
    let c = entropy_const(s.m, tau) + tau * sv;
    if tau >= torus_threshold(s) {
        return Ok(MuResult {
            tau,
            value: c + s.volume().ln(),
            minimizer: vec![s.volume().powf(-0.5)],
            residual: 0.0,
            method: "closed-form".into(),
        });
    }
    // Below the threshold: minimize over products of circle profiles, each
    // reduced to a reflection-symmetric half circle.
    let mut total = c;
    let mut residual = 0.0f64;
    for u in &s.u {
        let len = u.sqrt() / 2.0;
        let p = RadialProblem::interval(len, PRODUCT_NODES);
        let (m, _) = best_of(&p, tau, starts(&p, 0.0, tau, opts), opts)?;
        total += m.energy + std::f64::consts::LN_2;
        residual = residual.max(m.residual);
    }
    Ok(MuResult { tau, value: total, minimizer: vec![], residual, method: "product".into() })
}

pub fn mu_alpha(state: &GeometryState, tau: f64, opts: &MinOptions) -> Result<MuResult> {
    if !(tau > 0.0) {
        return Err(FlowError::InvalidParameter("tau must be > 0".into()));
    }
    match state {
        GeometryState::Torus(s) => mu_torus(s, tau, opts),
        GeometryState::RotSym(s) => {
            let p = RadialProblem::from_rotsym(s);
            let kind = geometry::FlowKind::Rhf;
            let peak = geometry::ac(state, kind)?.argmax.clamp(1, s.nodes() - 2) - 1;
            let (m, name) = best_of(&p, tau, starts(&p, p.pos[peak], tau, opts), opts)?;
            Ok(MuResult {
                tau,
                value: m.energy + entropy_const(s.n, tau),
                minimizer: m.u,
                residual: m.residual,
                method: name,
            })
        }
    }
}

/// `W` evaluated at the constant `u = Vol^{-1/2}` with a homogeneous `S`.
pub fn constant_candidate(state: &GeometryState, tau: f64) -> Result<f64> {
    let m = geometry::map_quantities(state)?;
    let vol = geometry::volume(state);
    let s_avg = match state {
        GeometryState::Torus(_) => m.s[0],
        GeometryState::RotSym(s) => {
            let p = RadialProblem::from_rotsym(s);
            p.vol.iter().zip(&p.pot).map(|(v, s)| v * s).sum::<f64>() / p.vol.iter().sum::<f64>()
        }
    };
    Ok(tau * s_avg + vol.ln() + entropy_const(state.dim(), tau))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NuResult {
    #[serde(with = "serde_ext::ext")]
    pub value: f64,
    #[serde(with = "serde_ext::ext")]
    pub tau: f64,
    pub grid: Vec<(f64, f64)>,
}

pub const NU_GRID: usize = 61;

pub fn nu_alpha(state: &GeometryState, opts: &MinOptions) -> Result<NuResult> {
    let lam = lambda_alpha(state)?.value;
    if lam <= 0.0 {
        return Ok(NuResult { value: f64::NEG_INFINITY, tau: f64::INFINITY, grid: vec![] });
    }
    let d2 = match state {
        GeometryState::Torus(s) => s.u.iter().cloned().fold(0.0, f64::max),
        GeometryState::RotSym(s) => s.length().powi(2),
    };
    let (lo, hi) = ((1e-3 * d2).ln(), (1e3 * d2).ln());
    let taus: Vec<f64> = (0..NU_GRID).map(|i| (lo + (hi - lo) * i as f64 / (NU_GRID - 1) as f64).exp()).collect();
    let vals = taus
        .par_iter()
        .map(|&t| mu_alpha(state, t, opts).map(|r| r.value))
        .collect::<Result<Vec<f64>>>()?;
    let mut i = 0;
    for j in 1..vals.len() {
        if vals[j] < vals[i] {
            i = j;
        }
    }
    let mut a = taus[i.saturating_sub(1)].ln();
    let mut b = taus[(i + 1).min(NU_GRID - 1)].ln();
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let eval = |x: f64| mu_alpha(state, x.exp(), opts).map(|r| r.value);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let mut fc = eval(c)?;
    let mut fd = eval(d)?;
    for _ in 0..40 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d)?;
        }
    }
    let (mut value, mut tau) = if fc < fd { (fc, c.exp()) } else { (fd, d.exp()) };
    if vals[i] < value {
        value = vals[i];
        tau = taus[i];
    }
    Ok(NuResult { value, tau, grid: taus.into_iter().zip(vals).collect() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MuBounds {
    pub tau: f64,
    pub mu: f64,
    pub lambda: f64,
    pub volume: f64,
    pub inf_s: f64,
    pub upper_residual: f64,
    pub lower_residual: Option<f64>,
    pub notes: Vec<String>,
    pub pass: bool,
}

pub const BOUND_TOL: f64 = 1e-6;

/// Upper bound `τλ + Vol - (m/2)ln(4πτ) - m` and, for `τ > m/8` with a
/// Sobolev constant, the lower bound with the `(m/8)(λ - inf S)` and
/// `m ln C_s` corrections.
pub fn check_mu_bounds(state: &GeometryState, tau: f64, c_s: Option<f64>, opts: &MinOptions) -> Result<MuBounds> {
    let m = state.dim() as f64;
    let lambda = lambda_alpha(state)?.value;
    let mu = mu_alpha(state, tau, opts)?.value;
    let vol = geometry::volume(state);
    let inf_s = geometry::map_quantities(state)?.s.iter().cloned().fold(f64::INFINITY, f64::min);
    let k = entropy_const(state.dim(), tau);
    let upper_residual = tau * lambda + vol + k - mu;
    let mut notes = Vec::new();
    let lower_residual = match c_s {
        None => {
            notes.push("lower bound skipped: no Sobolev constant supplied".into());
            None
        }
        Some(_) if tau <= m / 8.0 => {
            notes.push("lower bound skipped: requires tau > m/8".into());
            None
        }
        Some(cs) => Some(mu - (tau * lambda + k - (m / 8.0) * (lambda - inf_s) - m * cs.ln())),
    };
    let pass = upper_residual >= -BOUND_TOL && lower_residual.map_or(true, |r| r >= -BOUND_TOL);
    Ok(MuBounds { tau, mu, lambda, volume: vol, inf_s, upper_residual, lower_residual, notes, pass })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NonpositiveLambdaBound {
    pub applicable: bool,
    pub tau: f64,
    pub mu: f64,
    pub residual: f64,
    pub pass: bool,
}

/// For `λ ≤ 0`: `μ ≤ ln Vol - (m/2)ln(4πτ) - m + 1`.
pub fn check_nonpositive_lambda_bound(state: &GeometryState, tau: f64, opts: &MinOptions) -> Result<NonpositiveLambdaBound> {
    let lambda = lambda_alpha(state)?.value;
    if lambda > 0.0 {
        return Ok(NonpositiveLambdaBound { applicable: false, tau, mu: f64::NAN, residual: f64::NAN, pass: true });
    }
    let mu = mu_alpha(state, tau, opts)?.value;
    let bound = geometry::volume(state).ln() + entropy_const(state.dim(), tau) + 1.0;
    let residual = bound - mu;
    Ok(NonpositiveLambdaBound { applicable: true, tau, mu, residual, pass: residual >= -BOUND_TOL })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeBound {
    pub applicable: bool,
    pub c1: f64,
    pub c2: f64,
    pub margin: f64,
    pub pass: bool,
}

/// Fit `Vol(t) ≥ c1 e^{-c2 t}` over the snapshots when `λ ≤ 0` throughout.
pub fn check_volume_bound(history: &FlowHistory) -> Result<VolumeBound> {
    let lams = history
        .snapshots
        .par_iter()
        .map(|s| lambda_alpha(&s.state).map(|l| l.value))
        .collect::<Result<Vec<f64>>>()?;
    if lams.iter().any(|l| *l > 0.0) {
        return Ok(VolumeBound { applicable: false, c1: f64::NAN, c2: f64::NAN, margin: f64::NAN, pass: true });
    }
    let t: Vec<f64> = history.series.iter().map(|r| r.t).collect();
    let lv: Vec<f64> = history.series.iter().map(|r| r.volume.ln()).collect();
    let (slope, _, _) = crate::flow::line_fit(&t, &lv);
    let c2 = (-slope).max(0.0);
    let c1 = history.series.iter().map(|r| r.volume * (c2 * r.t).exp()).fold(f64::INFINITY, f64::min);
    let margin = history
        .series
        .iter()
        .map(|r| r.volume - c1 * (-c2 * r.t).exp())
        .fold(f64::INFINITY, f64::min);
    Ok(VolumeBound { applicable: true, c1, c2, margin, pass: c1 > 0.0 && margin >= -1e-12 * c1 })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityPoint {
    pub t: f64,
    pub tau: f64,
    #[serde(with = "serde_ext::ext")]
    pub mu: f64,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Monotonicity {
    pub t_sing: f64,
    pub series: Vec<MonotonicityPoint>,
    /// Smallest increment `μ_{j+1} - μ_j`.
    pub min_increment: f64,
    /// `max μ - min μ` over the series.
    pub spread: f64,
    pub tol: f64,
    pub pass: bool,
}

pub const MONOTONE_TOL: f64 = 1e-4;

/// `μ(g(t), φ(t), T - t)` at up to `max_points` evenly spaced snapshots.
pub fn monotonicity_check(history: &FlowHistory, t_sing: f64, max_points: usize, opts: &MinOptions) -> Result<Monotonicity> {
    if !(t_sing > history.t_final()) {
        return Err(FlowError::InvalidParameter("T must exceed the final recorded time".into()));
    }
    let n = history.snapshots.len();
    let k = max_points.clamp(2, n.max(2));
    let mut idx: Vec<usize> = (0..k).map(|i| (i * (n - 1)) / (k - 1).max(1)).collect();
    idx.dedup();
    let series: Vec<MonotonicityPoint> = idx
        .par_iter()
        .map(|&i| {
            let s = &history.snapshots[i].state;
            let tau = t_sing - s.t();
            match mu_alpha(s, tau, opts) {
                Ok(r) => MonotonicityPoint { t: s.t(), tau, mu: r.value, flagged: r.residual > 1e-6 },
                Err(_) => MonotonicityPoint { t: s.t(), tau, mu: f64::NAN, flagged: true },
            }
        })
        .collect();
    let good: Vec<f64> = series.iter().filter(|p| !p.flagged).map(|p| p.mu).collect();
    let min_increment = good.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let spread = good.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - good.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(Monotonicity {
        t_sing,
        series,
        min_increment,
        spread,
        tol: MONOTONE_TOL,
        pass: good.len() >= 2 && min_increment >= -MONOTONE_TOL,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonResidual {
    pub metric: f64,
    pub map: f64,
}

/// `sup|S_ij + ∇_i∇_j f - g_ij/(2τ)|` and `sup|τ_gφ - ⟨∇φ, ∇f⟩|` in an orthonormal frame.
pub fn soliton_residual(state: &GeometryState, f: Option<&[f64]>, tau: f64) -> Result<SolitonResidual> {
    if !(tau > 0.0) {
        return Err(FlowError::InvalidParameter("tau must be > 0".into()));
    }
    let shr = 1.0 / (2.0 * tau);
    let mq = geometry::map_quantities(state)?;
    match state {
        GeometryState::Torus(_) => {
            if f.is_some_and(|f| f.iter().any(|x| *x != f[0])) {
                return Err(FlowError::InvalidParameter("torus potentials must be constant".into()));
            }
            let metric = mq.s_ij[0].iter().map(|s| (s - shr).abs()).fold(0.0, f64::max);
            Ok(SolitonResidual { metric, map: mq.tension[0].abs() })
        }
        GeometryState::RotSym(s) => {
            let nn = s.nodes();
            let zero = vec![0.0; nn];
            let f = f.unwrap_or(&zero);
            if f.len() != nn {
                return Err(FlowError::InvalidParameter("potential length differs from grid".into()));
            }
            let fl = s.fields();
            let fss = dss(f, &s.a, s.h(), EVEN);
            let fs: Vec<f64> = crate::geometry::stencil::d1(f, s.h(), EVEN).iter().zip(&s.a).map(|(d, a)| d / a).collect();
            let mut fsph: Vec<f64> = (0..nn).map(|j| fl.mean_curv[j] * fs[j]).collect();
            extrapolate_poles(&mut fsph);
            let mut metric = 0.0f64;
            let mut map = 0.0f64;
            for j in 0..nn {
                metric = metric
                    .max((mq.s_ij[j][0] + fss[j] - shr).abs())
                    .max((mq.s_ij[j][1] + fsph[j] - shr).abs());
                map = map.max((mq.tension[j] - fl.phi_s[j] * fs[j]).abs());
            }
            Ok(SolitonResidual { metric, map })
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlowupVolumeTrend {
    /// `λ_i^{m/2} Vol(g(t_i))` along the picks.
    pub rescaled: Vec<f64>,
    pub nondecreasing: bool,
    pub growth: f64,
}

/// Rescaled volumes along a blow-up sequence; for `λ_α ≤ 0` they must diverge.
pub fn blowup_volume_trend(history: &FlowHistory, picks: &[crate::singularity::Pick]) -> BlowupVolumeTrend {
    let rescaled: Vec<f64> = picks
        .iter()
        .map(|p| {
            let s = &history.snapshots[p.snapshot];
            p.lambda.powf(s.state.dim() as f64 / 2.0) * s.diag.volume
        })
        .collect();
    let nondecreasing = rescaled.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
    let growth = match (rescaled.first(), rescaled.last()) {
        (Some(a), Some(b)) if *a > 0.0 => b / a,
        _ => f64::NAN,
    };
    BlowupVolumeTrend { rescaled, nondecreasing, growth }
}

fn nan() -> f64 {
    f64::NAN
}

/// Entropy quantities of one state, with the bound checks evaluated on it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub t: f64,
    #[serde(rename = "lambda_alpha")]
    pub lambda: f64,
    pub eigenfunction: Vec<f64>,
    #[serde(rename = "mu_alpha")]
    pub mu: Vec<MuResult>,
    /// NaN when not requested.
    #[serde(rename = "nu_alpha", with = "serde_ext::ext", default = "nan")]
    pub nu_value: f64,
    pub nu: Option<NuResult>,
    pub mu_bounds: Vec<MuBounds>,
    pub nonpositive_lambda: Vec<NonpositiveLambdaBound>,
    pub volume_bound: Option<VolumeBound>,
    pub monotonicity: Option<Monotonicity>,
    pub soliton: Option<SolitonResidual>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::presets;

    #[test]
    fn interval_constant_energy_is_log_length() {
        let p = RadialProblem::interval(2.0, 101);
        let mut u = vec![1.0; 101];
        p.normalize(&mut u);
        assert!((p.energy(&u, 1.0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ground_state_of_interval_is_constant() {
        let mut p = RadialProblem::interval(1.0, 51);
        p.pot = vec![3.0; 51];
        let e = ground_state(&p).unwrap();
        assert!((e.value - 3.0).abs() < 1e-10);
        let mean = e.function.iter().sum::<f64>() / 51.0;
        assert!(e.function.iter().all(|f| (f - mean).abs() < 1e-8));
    }

    #[test]
    fn second_eigen_direction_raises_quotient() {
        let mut p = RadialProblem::interval(1.0, 81);
        p.pot = (0..81).map(|j| (j as f64 / 10.0).sin()).collect();
        let e = ground_state(&p).unwrap();
        let pert: Vec<f64> = e.function.iter().enumerate().map(|(j, f)| f + 1e-3 * (j as f64 * 0.3).cos()).collect();
        assert!(p.rayleigh(&pert) >= e.value - 1e-12);
    }

    #[test]
    fn torus_closed_form_above_threshold() {
        let s: GeometryState = presets::winding(vec![1.0; 3], 0, 1.0, 1.0).unwrap().into();
        let r = mu_alpha(&s, 1.0, &MinOptions::default()).unwrap();
        let want = -1.0 - 1.5 * (4.0 * std::f64::consts::PI).ln() - 3.0;
        assert_eq!(r.method, "closed-form");
        assert!((r.value - want).abs() < 1e-14);
    }

    #[test]
    fn torus_product_branch_is_continuous_and_below_constant() {
        let s = presets::flat_torus(vec![1.0; 3], 0.0).unwrap();
        let tc = torus_threshold(&s);
        let g: GeometryState = s.into();
        let opts = MinOptions::default();
        let above = mu_alpha(&g, tc, &opts).unwrap().value;
        let below = mu_alpha(&g, tc * (1.0 - 1e-6), &opts).unwrap();
        assert_eq!(below.method, "product");
        assert!((above - below.value).abs() < 1e-4, "{above} vs {}", below.value);
        let small = mu_alpha(&g, 1e-3, &opts).unwrap().value;
        assert!(small <= constant_candidate(&g, 1e-3).unwrap() + 1e-12);
    }

    #[test]
    fn tau_must_be_positive() {
        let s: GeometryState = presets::flat_torus(vec![1.0; 3], 0.0).unwrap().into();
        assert!(mu_alpha(&s, 0.0, &MinOptions::default()).is_err());
        assert!(soliton_residual(&s, None, -1.0).is_err());
    }
}
