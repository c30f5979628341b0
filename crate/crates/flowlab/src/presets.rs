//! Named initial data.

use std::f64::consts::FRAC_PI_2;

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};
use crate::geometry::{GeometryState, RotSymState, TorusState};

/// How the round sphere is sampled on the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Sampling {
    /// Lapse and amplitude tuned so the discrete curvature is exactly `1/c`.
    #[default]
    Consistent,
    /// Point samples of `ψ = √c cos(πx/2)` with `a = π√c/2`.
    Geometric,
}

fn grid(nodes: usize) -> (Vec<f64>, f64) {
    let h = 2.0 / (nodes - 1) as f64;
    ((0..nodes).map(|j| -1.0 + j as f64 * h).collect(), h)
}

fn cos_profile(x: &[f64]) -> Vec<f64> {
    let nn = x.len();
    let mut u: Vec<f64> = x.iter().map(|x| (FRAC_PI_2 * x).cos()).collect();
    u[0] = 0.0;
    u[nn - 1] = 0.0;
    u
}

fn phi_profile(x: &[f64], amp: f64) -> Vec<f64> {
    x.iter().map(|x| amp * (FRAC_PI_2 * x).sin()).collect()
}

/// Round `S^n` of scale `c` (sectional curvature `1/c`), optional map `φ = amp·sin(πx/2)`.
pub fn round_sphere(n: usize, nodes: usize, c: f64, sampling: Sampling, alpha: f64, phi_amp: f64) -> Result<RotSymState> {
    if !(c > 0.0) {
        return Err(FlowError::InvalidParameter("sphere scale c must be > 0".into()));
    }
    if nodes < 3 {
        return Err(FlowError::GridTooCoarse(nodes));
    }
    let (x, h) = grid(nodes);
    let u = cos_profile(&x);
    let k = FRAC_PI_2;
    let (a, amp) = match sampling {
        Sampling::Consistent => {
            let k1 = (k * h).sin() / h;
            let k2 = 4.0 * (k * h / 2.0).sin().powi(2) / (h * h);
            let a = (k2 * c).sqrt();
            (a, a / k1)
        }
        Sampling::Geometric => (k * c.sqrt(), c.sqrt()),
    };
    RotSymState::new(
        n,
        vec![a; nodes],
        u.iter().map(|u| amp * u).collect(),
        phi_profile(&x, phi_amp),
        alpha,
        0.0,
    )
}

/// Dumbbell `ψ = s·u(1 - βu^2)`, `u = cos(πx/2)`, with a neck at `x = 0`
/// of radius `s(1 - β)`.
pub fn dumbbell(n: usize, nodes: usize, beta: f64, scale: f64, alpha: f64, phi_amp: f64) -> Result<RotSymState> {
    if !(0.0..1.0).contains(&beta) {
        return Err(FlowError::InvalidParameter("dumbbell beta must lie in [0, 1)".into()));
    }
    if !(scale > 0.0) {
        return Err(FlowError::InvalidParameter("dumbbell scale must be > 0".into()));
    }
    if nodes < 3 {
        return Err(FlowError::GridTooCoarse(nodes));
    }
    let (x, h) = grid(nodes);
    let u = cos_profile(&x);
    let psi: Vec<f64> = u.iter().map(|u| scale * u * (1.0 - beta * u * u)).collect();
    let a = psi[1] / h;
    RotSymState::new(n, vec![a; nodes], psi, phi_profile(&x, phi_amp), alpha, 0.0)
}

/// Torus with `h_{012} = h` (and permutations).
pub fn torus_h(u0: Vec<f64>, h: f64) -> Result<TorusState> {
    let mut s = TorusState::flat(u0, 0.0)?;
    s.set_form(0, 1, 2, h);
    s.validate()?;
    Ok(s)
}

/// Torus carrying the winding map `φ = κ x_axis`.
pub fn winding(u0: Vec<f64>, axis: usize, kappa: f64, alpha: f64) -> Result<TorusState> {
    let m = u0.len();
    if axis >= m {
        return Err(FlowError::InvalidParameter(format!("winding axis {axis} out of range")));
    }
    let mut k = vec![0.0; m];
    k[axis] = kappa;
    TorusState::new(u0, vec![0.0; m * m * m], k, alpha, 0.0)
}

pub fn flat_torus(u0: Vec<f64>, alpha: f64) -> Result<TorusState> {
    TorusState::flat(u0, alpha)
}

impl From<TorusState> for GeometryState {
    fn from(s: TorusState) -> Self {
        GeometryState::Torus(s)
    }
}

impl From<RotSymState> for GeometryState {
    fn from(s: RotSymState) -> Self {
        GeometryState::RotSym(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dumbbell_is_smooth_at_poles() {
        let s = dumbbell(3, 101, 0.9, 1.0, 0.0, 0.0).unwrap();
        let (a, b) = s.pole_slopes();
        assert!((a - 1.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12);
        assert!((s.psi[50] - 0.1).abs() < 1e-12);
    }

    #[test]
    fn presets_reject_bad_parameters() {
        assert!(round_sphere(3, 33, -1.0, Sampling::Consistent, 0.0, 0.0).is_err());
        assert!(dumbbell(3, 33, 1.2, 1.0, 0.0, 0.0).is_err());
        assert!(winding(vec![1.0; 3], 5, 1.0, 1.0).is_err());
    }
}
