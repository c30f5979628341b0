//! Homogeneous flat torus `T^m` with diagonal metric `diag(u_1, ..., u_m)`,
//! a constant 3-form `h` and a winding covector `k`.

use serde::{Deserialize, Serialize};

use crate::error::{FlowError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorusState {
    pub m: usize,
    pub u: Vec<f64>,
    /// Dense covariant components `h[(i*m + j)*m + k]`.
    pub h: Vec<f64>,
    pub k: Vec<f64>,
    pub alpha: f64,
    pub t: f64,
}

/// Off-diagonal tolerance for the induced `𝓗`.
pub const DIAG_TOL: f64 = 1e-14;

impl TorusState {
    pub fn new(u: Vec<f64>, h: Vec<f64>, k: Vec<f64>, alpha: f64, t: f64) -> Result<Self> {
        let m = u.len();
        if m < 3 {
            return Err(FlowError::InvalidState(format!("torus dimension {m} < 3")));
        }
        if h.len() != m * m * m || k.len() != m {
            return Err(FlowError::InvalidState("field lengths do not match m".into()));
        }
        let s = TorusState { m, u, h, k, alpha, t };
        s.validate()?;
        Ok(s)
    }

    /// Zero 3-form, zero winding.
    pub fn flat(u: Vec<f64>, alpha: f64) -> Result<Self> {
        let m = u.len();
        Self::new(u, vec![0.0; m * m * m], vec![0.0; m], alpha, 0.0)
    }

    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.m + j) * self.m + k
    }

    /// Fill all six signed permutations of `(i, j, k)` with `value`.
    pub fn set_form(&mut self, i: usize, j: usize, k: usize, value: f64) {
        for (p, sign) in [
            ((i, j, k), 1.0),
            ((j, k, i), 1.0),
            ((k, i, j), 1.0),
            ((j, i, k), -1.0),
            ((i, k, j), -1.0),
            ((k, j, i), -1.0),
        ] {
            let id = self.idx(p.0, p.1, p.2);
            self.h[id] = sign * value;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.m;
        for (name, v) in [("u", &self.u), ("h", &self.h), ("k", &self.k)] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(FlowError::NonFinite(name.into()));
            }
        }
        if !self.alpha.is_finite() || self.alpha < 0.0 {
            return Err(FlowError::InvalidState("alpha must be finite and >= 0".into()));
        }
        if self.u.iter().any(|&x| x <= 0.0) {
            return Err(FlowError::InvalidState("metric coefficients must be positive".into()));
        }
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let v = self.h[self.idx(i, j, k)];
                    if v != -self.h[self.idx(j, i, k)]
                        || v != -self.h[self.idx(i, k, j)]
                        || v != -self.h[self.idx(k, j, i)]
                    {
                        return Err(FlowError::InvalidState(format!(
                            "h not antisymmetric at ({i},{j},{k})"
                        )));
                    }
                }
            }
        }
        let hh = self.script_h();
        for i in 0..m {
            for j in 0..m {
                if i != j && hh[i * m + j].abs() > DIAG_TOL {
                    return Err(FlowError::Incompatible(format!(
                        "𝓗[{i}][{j}] = {:e} is off-diagonal",
                        hh[i * m + j]
                    )));
                }
            }
        }
        if self.k.iter().filter(|x| **x != 0.0).count() > 1 {
            return Err(FlowError::Incompatible(
                "winding covector has more than one nonzero entry, so k⊗k is not diagonal".into(),
            ));
        }
        Ok(())
    }

    /// Covariant `𝓗_ij = Σ_{p,r} h_ipr h_jpr / (u_p u_r)`, row-major `m×m`.
    pub fn script_h(&self) -> Vec<f64> {
        let m = self.m;
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                let mut s = 0.0;
                for p in 0..m {
                    for r in 0..m {
                        s += self.h[self.idx(i, p, r)] * self.h[self.idx(j, p, r)] / (self.u[p] * self.u[r]);
                    }
                }
                out[i * m + j] = s;
            }
        }
        out
    }

    /// Full component sum `Σ h_ijk h^ijk`.
    pub fn h_sq(&self) -> f64 {
        let m = self.m;
        let mut s = 0.0;
        for i in 0..m {
            for j in 0..m {
                for k in 0..m {
                    let v = self.h[self.idx(i, j, k)];
                    s += v * v / (self.u[i] * self.u[j] * self.u[k]);
                }
            }
        }
        s
    }

    pub fn grad_phi_sq(&self) -> f64 {
        self.k.iter().zip(&self.u).map(|(k, u)| k * k / u).sum()
    }

    pub fn volume(&self) -> f64 {
        self.u.iter().product::<f64>().sqrt()
    }

    /// Metric rescaling `g -> λ g`, `H -> λ H`; the map is left alone.
    pub fn scaled(&self, lambda: f64) -> TorusState {
        TorusState {
            m: self.m,
            u: self.u.iter().map(|u| u * lambda).collect(),
            h: self.h.iter().map(|h| h * lambda).collect(),
            k: self.k.clone(),
            alpha: self.alpha,
            t: self.t,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_h() -> TorusState {
        let mut s = TorusState::flat(vec![1.0; 3], 0.0).unwrap();
        s.set_form(0, 1, 2, 1.0);
        s.validate().unwrap();
        s
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(TorusState::flat(vec![1.0, -1.0, 1.0], 0.0).is_err());
        assert!(TorusState::flat(vec![1.0, 1.0], 0.0).is_err());
        let mut s = unit_h();
        s.h[1] = 5.0;
        assert!(s.validate().is_err());
        let s = TorusState::new(vec![1.0; 3], vec![0.0; 27], vec![1.0, 1.0, 0.0], 1.0, 0.0);
        assert!(matches!(s, Err(FlowError::Incompatible(_))));
    }

    #[test]
    fn off_diagonal_script_h_rejected() {
        let mut s = TorusState::flat(vec![1.0; 4], 0.0).unwrap();
        s.set_form(0, 1, 2, 1.0);
        s.set_form(0, 1, 3, 1.0);
        assert!(matches!(s.validate(), Err(FlowError::Incompatible(_))));
    }

    #[test]
    fn scaling_multiplies_h_sq_by_inverse() {
        let s = unit_h();
        let r = s.scaled(3.0);
        assert!((r.h_sq() * 3.0 - s.h_sq()).abs() < 1e-12);
    }
}
