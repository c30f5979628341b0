//! Symmetry-reduced geometries and their pointwise invariants.
//!
//! Norms are full component sums: `|Rm|^2 = R_ijkl R^ijkl`,
//! `|H|^2 = H_ijk H^ijk` over all index triples, and likewise for
//! `|∇H|^2` and `|∇^2 φ|^2`. All quantities are reported in an
//! orthonormal frame, pointwise on the grid (one entry for the torus).

pub mod rotsym;
pub mod stencil;
pub mod torus;

use serde::{Deserialize, Serialize};

pub use rotsym::{sphere_area, Gauge, RotSymFields, RotSymState};
pub use torus::TorusState;

use crate::error::{FlowError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FlowKind {
    #[serde(rename = "CRF")]
    Crf,
    #[serde(rename = "RHF")]
    Rhf,
}

impl FlowKind {
    pub fn label(self) -> &'static str {
        match self {
            FlowKind::Crf => "CRF",
            FlowKind::Rhf => "RHF",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "ansatz", rename_all = "kebab-case")]
pub enum GeometryState {
    Torus(TorusState),
    RotSym(RotSymState),
}

impl GeometryState {
    pub fn t(&self) -> f64 {
        match self {
            GeometryState::Torus(s) => s.t,
            GeometryState::RotSym(s) => s.t,
        }
    }

    pub fn set_t(&mut self, t: f64) {
        match self {
            GeometryState::Torus(s) => s.t = t,
            GeometryState::RotSym(s) => s.t = t,
        }
    }

    pub fn alpha(&self) -> f64 {
        match self {
            GeometryState::Torus(s) => s.alpha,
            GeometryState::RotSym(s) => s.alpha,
        }
    }

    /// Manifold dimension.
    pub fn dim(&self) -> usize {
        match self {
            GeometryState::Torus(s) => s.m,
            GeometryState::RotSym(s) => s.n,
        }
    }

    pub fn is_torus(&self) -> bool {
        matches!(self, GeometryState::Torus(_))
    }

    pub fn scaled(&self, lambda: f64) -> GeometryState {
        match self {
            GeometryState::Torus(s) => GeometryState::Torus(s.scaled(lambda)),
            GeometryState::RotSym(s) => GeometryState::RotSym(s.scaled(lambda)),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            GeometryState::Torus(s) => s.validate(),
            GeometryState::RotSym(s) => s.validate(rotsym::POLE_SLOPE_TOL),
        }
    }

    /// Grid coordinate of point index `i` (torus: 0).
    pub fn location(&self, i: usize) -> f64 {
        match self {
            GeometryState::Torus(_) => 0.0,
            GeometryState::RotSym(s) => -1.0 + i as f64 * s.h(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurvatureReport {
    pub rm_norm: Vec<f64>,
    /// Ricci eigenvalues per point: `m` diagonal entries on the torus,
    /// `[radial, spherical]` on the rot-sym ansatz (spherical has multiplicity n-1).
    pub ricci: Vec<Vec<f64>>,
    pub scalar: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TorsionReport {
    /// Covariant `𝓗_ij`, row-major `m×m`.
    pub script_h: Vec<f64>,
    pub h_sq: f64,
    pub grad_h_norm: f64,
    pub lap_h: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MapReport {
    pub grad_sq: Vec<f64>,
    pub hess_norm: Vec<f64>,
    pub tension: Vec<f64>,
    /// Diagonal of `∇φ⊗∇φ` in the frame of `ricci`.
    pub dphi_dphi: Vec<Vec<f64>>,
    pub s: Vec<f64>,
    pub s_ij: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AcKind {
    P,
    Q,
}

impl AcKind {
    pub fn for_flow(kind: FlowKind) -> Self {
        match kind {
            FlowKind::Crf => AcKind::P,
            FlowKind::Rhf => AcKind::Q,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AcField {
    pub values: Vec<f64>,
    pub sup: f64,
    pub argmax: usize,
    pub kind: AcKind,
}

impl AcField {
    fn from_values(values: Vec<f64>, kind: AcKind) -> Self {
        let mut argmax = 0;
        for (i, v) in values.iter().enumerate() {
            if *v > values[argmax] {
                argmax = i;
            }
        }
        AcField { sup: values[argmax], values, argmax, kind }
    }
}

fn check_finite(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(FlowError::NonFinite(name.into()))
    }
}

pub fn curvature(state: &GeometryState) -> Result<CurvatureReport> {
    match state {
        GeometryState::Torus(s) => Ok(CurvatureReport {
            rm_norm: vec![0.0],
            ricci: vec![vec![0.0; s.m]],
            scalar: vec![0.0],
        }),
        GeometryState::RotSym(s) => {
            s.validate(f64::INFINITY)?;
            let f = s.fields();
            let rep = CurvatureReport {
                rm_norm: f.rm_norm(),
                ricci: f.ric_rad().into_iter().zip(f.ric_sph()).map(|(r, p)| vec![r, p]).collect(),
                scalar: f.scalar(),
            };
            check_finite("curvature", &rep.scalar)?;
            Ok(rep)
        }
    }
}

pub fn torsion_quantities(s: &TorusState) -> Result<TorsionReport> {
    s.validate()?;
    let m = s.m;
    Ok(TorsionReport {
        script_h: s.script_h(),
        h_sq: s.h_sq(),
        grad_h_norm: 0.0,
        lap_h: vec![0.0; m * m * m],
    })
}

pub fn map_quantities(state: &GeometryState) -> Result<MapReport> {
    match state {
        GeometryState::Torus(s) => {
            let dd: Vec<f64> = s.k.iter().zip(&s.u).map(|(k, u)| k * k / u).collect();
            let gs: f64 = dd.iter().sum();
            let s_ij: Vec<f64> = dd.iter().map(|d| 0.0 - s.alpha * d).collect();
            Ok(MapReport {
                grad_sq: vec![gs],
                hess_norm: vec![0.0],
                tension: vec![0.0],
                dphi_dphi: vec![dd],
                s: vec![0.0 - s.alpha * gs],
                s_ij: vec![s_ij],
            })
        }
        GeometryState::RotSym(s) => {
            s.validate(f64::INFINITY)?;
            let f = s.fields();
            let grad = f.grad_phi_sq();
            let r = f.scalar();
            let rr = f.ric_rad();
            let rs = f.ric_sph();
            let rep = MapReport {
                hess_norm: f.hess_phi_sq().iter().map(|v| v.sqrt()).collect(),
                tension: f.tension.clone(),
                dphi_dphi: grad.iter().map(|g| vec![*g, 0.0]).collect(),
                s: r.iter().zip(&grad).map(|(r, g)| r - s.alpha * g).collect(),
                s_ij: rr.iter().zip(&rs).zip(&grad).map(|((a, b), g)| vec![a - s.alpha * g, *b]).collect(),
                grad_sq: grad,
            };
            check_finite("map quantities", &rep.s)?;
            Ok(rep)
        }
    }
}

pub fn ac_p(state: &GeometryState) -> Result<AcField> {
    let c = curvature(state)?;
    let extra = match state {
        GeometryState::Torus(s) => s.h_sq(),
        GeometryState::RotSym(_) => 0.0,
    };
    let v = c.rm_norm.iter().map(|r| r + extra).collect();
    Ok(AcField::from_values(v, AcKind::P))
}

pub fn ac_q(state: &GeometryState) -> Result<AcField> {
    let c = curvature(state)?;
    let m = map_quantities(state)?;
    let v = c
        .rm_norm
        .iter()
        .zip(&m.hess_norm)
        .zip(&m.grad_sq)
        .map(|((r, h), g)| r + h + g)
        .collect();
    Ok(AcField::from_values(v, AcKind::Q))
}

pub fn ac(state: &GeometryState, kind: FlowKind) -> Result<AcField> {
    match kind {
        FlowKind::Crf => ac_p(state),
        FlowKind::Rhf => ac_q(state),
    }
}

pub fn volume(state: &GeometryState) -> f64 {
    match state {
        GeometryState::Torus(s) => s.volume(),
        GeometryState::RotSym(s) => s.volume(),
    }
}

/// Per-snapshot scalars tracked along a flow.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub sup_ac: f64,
    pub argmax: usize,
    pub volume: f64,
    pub s_min: f64,
    pub sup_h2: f64,
}

pub fn diagnostics(state: &GeometryState, kind: FlowKind) -> Result<Diagnostics> {
    let acf = ac(state, kind)?;
    let m = map_quantities(state)?;
    let s_min = m.s.iter().cloned().fold(f64::INFINITY, f64::min);
    let sup_h2 = match (state, kind) {
        (GeometryState::Torus(s), FlowKind::Crf) => s.h_sq(),
        _ => 0.0,
    };
    Ok(Diagnostics { sup_ac: acf.sup, argmax: acf.argmax, volume: volume(state), s_min, sup_h2 })
}
