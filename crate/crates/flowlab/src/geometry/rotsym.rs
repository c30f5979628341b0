//! Rotationally symmetric metrics `g = a(x)^2 dx^2 + ψ(x)^2 g_{S^{n-1}}`
//! on `S^n`, sampled on a uniform grid `x ∈ [-1, 1]` including both poles.
//!
//! Sectional curvatures are `K_rad = -ψ_ss/ψ` and `K_sph = (1 - ψ_s^2)/ψ^2`.
//! In `K_sph` the constant 1 is replaced near each pole by the discrete
//! pole slope squared so the ratio stays bounded on the grid, and `ψ_s^2`
//! uses the forward/backward slope product; both agree with the continuum
//! expression to second order.

use serde::{Deserialize, Serialize};

use super::stencil::{self, d1, dss, extrapolate_poles, slope_product, EVEN, ODD};
use crate::error::{FlowError, Result};

pub const MIN_NODES: usize = 16;
pub const POLE_SLOPE_TOL: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotSymState {
    pub n: usize,
    pub a: Vec<f64>,
    pub psi: Vec<f64>,
    pub phi: Vec<f64>,
    pub alpha: f64,
    pub t: f64,
}

/// Background metric for the DeTurck term.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gauge {
    pub a: Vec<f64>,
    pub psi: Vec<f64>,
}

impl Gauge {
    pub fn from_state(s: &RotSymState) -> Self {
        Gauge { a: s.a.clone(), psi: s.psi.clone() }
    }

    pub fn scaled(&self, lambda: f64) -> Self {
        let r = lambda.sqrt();
        Gauge {
            a: self.a.iter().map(|v| v * r).collect(),
            psi: self.psi.iter().map(|v| v * r).collect(),
        }
    }
}

impl RotSymState {
    pub fn new(n: usize, a: Vec<f64>, psi: Vec<f64>, phi: Vec<f64>, alpha: f64, t: f64) -> Result<Self> {
        let s = RotSymState { n, a, psi, phi, alpha, t };
        s.validate(POLE_SLOPE_TOL)?;
        Ok(s)
    }

    pub fn nodes(&self) -> usize {
        self.a.len()
    }

    pub fn h(&self) -> f64 {
        2.0 / (self.nodes() - 1) as f64
    }

    pub fn x(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.nodes()).map(|j| -1.0 + j as f64 * h).collect()
    }

    /// Discrete `dψ/ds` at the two poles.
    pub fn pole_slopes(&self) -> (f64, f64) {
        let n = self.nodes();
        let h = self.h();
        (self.psi[1] / (h * self.a[0]), self.psi[n - 2] / (h * self.a[n - 1]))
    }

    pub fn validate(&self, pole_tol: f64) -> Result<()> {
        let nn = self.nodes();
        if nn < MIN_NODES {
            return Err(FlowError::GridTooCoarse(nn));
        }
        if self.n < 3 {
            return Err(FlowError::InvalidState(format!("sphere dimension {} < 3", self.n)));
        }
        if self.psi.len() != nn || self.phi.len() != nn {
            return Err(FlowError::InvalidState("a, psi, phi lengths differ".into()));
        }
        for (name, v) in [("a", &self.a), ("psi", &self.psi), ("phi", &self.phi)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(FlowError::NonFinite(name.into()));
            }
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(FlowError::InvalidState("alpha must be finite and >= 0".into()));
        }
        if self.a.iter().any(|&v| v <= 0.0) {
            return Err(FlowError::InvalidState("lapse a must be positive".into()));
        }
        if self.psi[0] != 0.0 || self.psi[nn - 1] != 0.0 {
            return Err(FlowError::InvalidState("psi must vanish at the poles".into()));
        }
        if self.psi[1..nn - 1].iter().any(|&v| v <= 0.0) {
            return Err(FlowError::InvalidState("psi must be positive at interior nodes".into()));
        }
        let (s0, s1) = self.pole_slopes();
        if (s0 - 1.0).abs() > pole_tol || (s1 - 1.0).abs() > pole_tol {
            return Err(FlowError::InvalidState(format!(
                "pole smoothness violated: dpsi/ds = ({s0:.6}, {s1:.6})"
            )));
        }
        Ok(())
    }

    /// `g -> λ g`; the map is unscaled.
    pub fn scaled(&self, lambda: f64) -> RotSymState {
        let r = lambda.sqrt();
        RotSymState {
            n: self.n,
            a: self.a.iter().map(|v| v * r).collect(),
            psi: self.psi.iter().map(|v| v * r).collect(),
            phi: self.phi.clone(),
            alpha: self.alpha,
            t: self.t,
        }
    }

    pub fn volume(&self) -> f64 {
        let f: Vec<f64> = self
            .a
            .iter()
            .zip(&self.psi)
            .map(|(a, p)| a * p.powi(self.n as i32 - 1))
            .collect();
        sphere_area(self.n - 1) * stencil::trapezoid(&f, self.h())
    }

    /// Pole-to-pole length `∫ a dx`.
    pub fn length(&self) -> f64 {
        stencil::trapezoid(&self.a, self.h())
    }

    pub fn fields(&self) -> RotSymFields {
        RotSymFields::compute(self)
    }
}

/// Area of the unit `k`-sphere.
pub fn sphere_area(k: usize) -> f64 {
    match k {
        0 => 2.0,
        1 => 2.0 * std::f64::consts::PI,
        _ => 2.0 * std::f64::consts::PI / (k as f64 - 1.0) * sphere_area(k - 2),
    }
}

/// Pointwise derived quantities of a rot-sym state.
#[derive(Clone, Debug)]
pub struct RotSymFields {
    pub n: usize,
    pub h: f64,
    /// `dψ/dx`
    pub psi_x: Vec<f64>,
    pub psi_s: Vec<f64>,
    pub psi_ss: Vec<f64>,
    pub k_rad: Vec<f64>,
    pub k_sph: Vec<f64>,
    pub phi_x: Vec<f64>,
    pub phi_s: Vec<f64>,
    pub phi_ss: Vec<f64>,
    /// `ψ_s φ_s / ψ`, the spherical Hessian eigenvalue of φ.
    pub phi_sph: Vec<f64>,
    pub tension: Vec<f64>,
    /// `ψ_s/ψ` at interior nodes; zero at the poles where it is unused.
    pub mean_curv: Vec<f64>,
}

impl RotSymFields {
    pub fn compute(s: &RotSymState) -> Self {
        let nn = s.nodes();
        let h = s.h();
        let n = s.n as f64;
        let x = s.x();
        let psi_x = d1(&s.psi, h, ODD);
        let psi_s: Vec<f64> = psi_x.iter().zip(&s.a).map(|(p, a)| p / a).collect();
        let psi_ss = dss(&s.psi, &s.a, h, ODD);
        let e = slope_product(&s.psi, &s.a, h, ODD);
        let mut k_rad = vec![0.0; nn];
        let mut k_sph = vec![0.0; nn];
        for j in 1..nn - 1 {
            let pole = if x[j] < 0.0 { e[0] } else { e[nn - 1] };
            let w = stencil::pole_weight(x[j]);
            let rho = w * pole + (1.0 - w);
            k_rad[j] = -psi_ss[j] / s.psi[j];
            k_sph[j] = (rho - e[j]) / (s.psi[j] * s.psi[j]);
        }
        extrapolate_poles(&mut k_rad);
        extrapolate_poles(&mut k_sph);

        let phi_x = d1(&s.phi, h, EVEN);
        let phi_s: Vec<f64> = phi_x.iter().zip(&s.a).map(|(p, a)| p / a).collect();
        let phi_ss = dss(&s.phi, &s.a, h, EVEN);
        let mut mean_curv = vec![0.0; nn];
        let mut phi_sph = vec![0.0; nn];
        let mut tension = vec![0.0; nn];
        for j in 1..nn - 1 {
            mean_curv[j] = psi_s[j] / s.psi[j];
            phi_sph[j] = mean_curv[j] * phi_s[j];
            tension[j] = phi_ss[j] + (n - 1.0) * phi_sph[j];
        }
        extrapolate_poles(&mut phi_sph);
        extrapolate_poles(&mut tension);
        RotSymFields {
            n: s.n,
            h,
            psi_x,
            psi_s,
            psi_ss,
            k_rad,
            k_sph,
            phi_x,
            phi_s,
            phi_ss,
            phi_sph,
            tension,
            mean_curv,
        }
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    pub fn ric_rad(&self) -> Vec<f64> {
        self.k_rad.iter().map(|k| (self.nf() - 1.0) * k).collect()
    }

    pub fn ric_sph(&self) -> Vec<f64> {
        self.k_rad.iter().zip(&self.k_sph).map(|(r, s)| r + (self.nf() - 2.0) * s).collect()
    }

    pub fn scalar(&self) -> Vec<f64> {
        let n = self.nf();
        self.k_rad
            .iter()
            .zip(&self.k_sph)
            .map(|(r, s)| 2.0 * (n - 1.0) * r + (n - 1.0) * (n - 2.0) * s)
            .collect()
    }

    pub fn rm_norm(&self) -> Vec<f64> {
        let n = self.nf();
        self.k_rad
            .iter()
            .zip(&self.k_sph)
            .map(|(r, s)| (4.0 * (n - 1.0) * r * r + 2.0 * (n - 1.0) * (n - 2.0) * s * s).sqrt())
            .collect()
    }

    pub fn grad_phi_sq(&self) -> Vec<f64> {
        self.phi_s.iter().map(|p| p * p).collect()
    }

    pub fn hess_phi_sq(&self) -> Vec<f64> {
        let n = self.nf();
        self.phi_ss.iter().zip(&self.phi_sph).map(|(a, b)| a * a + (n - 1.0) * b * b).collect()
    }

    /// Laplace-Beltrami of a radial scalar sampled on the grid.
    pub fn laplacian(&self, f: &[f64], a: &[f64]) -> Vec<f64> {
        let n = self.nf();
        let fss = dss(f, a, self.h, EVEN);
        let fx = d1(f, self.h, EVEN);
        let mut out = vec![0.0; f.len()];
        for j in 1..f.len() - 1 {
            out[j] = fss[j] + (n - 1.0) * self.mean_curv[j] * fx[j] / a[j];
        }
        extrapolate_poles(&mut out);
        out
    }

    /// DeTurck vector field `W` (dx-component scaled so that `∂_t f ∋ W f_x`).
    pub fn deturck(&self, s: &RotSymState, g: &Gauge) -> Vec<f64> {
        let nn = s.nodes();
        let n = self.nf();
        let ax = d1(&s.a, self.h, EVEN);
        let abx = d1(&g.a, self.h, EVEN);
        let pbx = d1(&g.psi, self.h, ODD);
        let mut w = vec![0.0; nn];
        for j in 1..nn - 1 {
            let a = s.a[j];
            let p = s.psi[j];
            w[j] = ax[j] / (a * a * a) - abx[j] / (g.a[j] * a * a)
                - (n - 1.0)
                    * (self.psi_x[j] / (a * a * p) - g.psi[j] * pbx[j] / (g.a[j] * g.a[j] * p * p));
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_areas() {
        use std::f64::consts::PI;
        assert!((sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn validation_errors() {
        let nn = 8;
        let s = RotSymState { n: 3, a: vec![1.0; nn], psi: vec![0.0; nn], phi: vec![0.0; nn], alpha: 0.0, t: 0.0 };
        assert!(matches!(s.validate(1e-3), Err(FlowError::GridTooCoarse(8))));
        let nn = 17;
        let h = 2.0 / 16.0;
        let psi: Vec<f64> = (0..nn).map(|j| (std::f64::consts::PI * (-1.0 + j as f64 * h) / 2.0).cos()).collect();
        let mut psi = psi;
        psi[0] = 0.0;
        psi[nn - 1] = 0.0;
        let mut s = RotSymState { n: 3, a: vec![1.0; nn], psi, phi: vec![0.0; nn], alpha: 0.0, t: 0.0 };
        // slope psi_1/(h a) is far from 1 with a = 1
        assert!(s.validate(1e-3).is_err());
        s.a[3] = f64::NAN;
        assert!(matches!(s.validate(1.0), Err(FlowError::NonFinite(_))));
    }
}
