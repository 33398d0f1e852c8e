//! Energies, angular momentum and boundary functionals of a Galerkin state.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::DVector;
use thiserror::Error;

use crate::basis::{axial_rotation, poincare_field, Basis};
use crate::geometry::{surface_integral, surface_rule, DomainKind, SurfaceRule};
use crate::operators::OperatorSet;
use crate::poly::VectorField;

pub const CSV_HEADER: &str =
    "t,E_K,dEK_dt,dissipation,delta_EK,lambda,E_perp,M_x,M_y,M_z,dE_Kn,dE_Ks,c_rot,c_orth,c_tot";

/// Default surface rule orders for the boundary functionals.
pub const SURFACE_ORDERS: (usize, usize) = (32, 64);

#[derive(Debug, Error, PartialEq)]
pub enum DiagnosticsError {
    #[error("need at least 3 records, got {0}")]
    TooFewRecords(usize),
    #[error("records are not uniformly spaced in time")]
    NonUniform,
    #[error("constraint functional vanishes on the rotation direction")]
    Degenerate,
    #[error("coefficient vector has length {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    /// `int_G (u - u_P) . (e_z x x) = 0`.
    RotMomentum,
    /// `int_G (u - u_P) . u_P = 0`.
    OrthPoincare,
    /// `int_G u . (e_z x x) = 0`.
    TotalMomentum,
}

impl ConstraintMode {
    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "rot_momentum" => Some(Self::RotMomentum),
            "orth_poincare" => Some(Self::OrthPoincare),
            "total_momentum" => Some(Self::TotalMomentum),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::RotMomentum => "rot_momentum",
            Self::OrthPoincare => "orth_poincare",
            Self::TotalMomentum => "total_momentum",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub e_k: f64,
    pub dek_dt: f64,
    pub dissipation: f64,
    pub delta_ek: f64,
    pub lambda: f64,
    pub e_perp: f64,
    pub m: [f64; 3],
    pub de_kn: f64,
    pub de_ks: f64,
    pub c_rot: f64,
    pub c_orth: f64,
    pub c_tot: f64,
}

impl DiagnosticsRecord {
    pub fn csv_row(&self) -> String {
        let v = [
            self.t,
            self.e_k,
            self.dek_dt,
            self.dissipation,
            self.delta_ek,
            self.lambda,
            self.e_perp,
            self.m[0],
            self.m[1],
            self.m[2],
            self.de_kn,
            self.de_ks,
            self.c_rot,
            self.c_orth,
            self.c_tot,
        ];
        v.iter()
            .map(|x| format!("{x:.16e}"))
            .collect::<Vec<_>>()
            .join(",")
    }
}

/// Per-basis data shared by every record of a run.
#[derive(Clone, Debug)]
pub struct DiagnosticsContext {
    /// Coefficients of `e_z x x`.
    pub rotation: DVector<f64>,
    /// Coefficients of the reference flow (`u_P` or zero).
    pub reference: DVector<f64>,
    /// `||e_z x x||^2`.
    pub rotation_norm2: f64,
    /// `int_G b_i . (e_z x x)`.
    pub surf_rot: DVector<f64>,
    /// `int_G b_i . u_P`; zero without a reference flow.
    pub surf_ref: DVector<f64>,
    pub has_reference: bool,
}

fn surface_functional(basis: &Basis, w: &VectorField<f64>, rule: &SurfaceRule) -> DVector<f64> {
    DVector::from_iterator(
        basis.dim(),
        basis.fields.iter().map(|b| {
            surface_integral(
                |p| {
                    let u = b.eval(p);
                    let v = w.eval(p);
                    u[0] * v[0] + u[1] * v[1] + u[2] * v[2]
                },
                rule,
            )
        }),
    )
}

/// The reference flow of a run: `u_P` for a spheroid about `Oz`, none otherwise.
pub fn reference_flow(basis: &Basis, eps_p: f64) -> Option<VectorField<f64>> {
    if basis.domain.kind() != DomainKind::SpheroidZ {
        return None;
    }
    poincare_field(basis.domain.poincare_beta()?, eps_p).ok()
}

impl DiagnosticsContext {
    pub fn new(basis: &Basis, reference: Option<&VectorField<f64>>) -> Self {
        let rule =
            surface_rule(&basis.domain, SURFACE_ORDERS.0, SURFACE_ORDERS.1).expect("valid orders");
        let rot = axial_rotation();
        let rotation = basis.project(&rot).coeffs;
        let rotation_norm2 = rotation.dot(&(&basis.gram * &rotation));
        let surf_rot = surface_functional(basis, &rot, &rule);
        let (reference_coeffs, surf_ref) = match reference {
            Some(up) => (
                basis.project(up).coeffs,
                surface_functional(basis, up, &rule),
            ),
            None => (DVector::zeros(basis.dim()), DVector::zeros(basis.dim())),
        };
        Self {
            rotation,
            reference: reference_coeffs,
            rotation_norm2,
            surf_rot,
            surf_ref,
            has_reference: reference.is_some(),
        }
    }

    fn check(&self, c: &DVector<f64>) -> Result<(), DiagnosticsError> {
        if c.len() != self.rotation.len() {
            return Err(DiagnosticsError::DimensionMismatch {
                expected: self.rotation.len(),
                got: c.len(),
            });
        }
        Ok(())
    }

    /// Every quantity except `dek_dt`, which needs neighbouring records.
    pub fn record(
        &self,
        t: f64,
        c: &DVector<f64>,
        ops: &OperatorSet,
    ) -> Result<DiagnosticsRecord, DiagnosticsError> {
        self.check(c)?;
        let m = &ops.mass;
        let half_norm = |v: &DVector<f64>| 0.5 * v.dot(&(m * v));
        let d = c - &self.reference;
        let lambda = c.dot(&(m * &self.rotation)) / self.rotation_norm2;
        let perp = c - &self.rotation * lambda;
        let mom = ops.angular_momentum(c).expect("checked dimension");
        Ok(DiagnosticsRecord {
            t,
            e_k: half_norm(c),
            dek_dt: 0.0,
            dissipation: ops.energy_rate(c),
            delta_ek: half_norm(&d),
            lambda,
            e_perp: half_norm(&perp),
            m: [mom[0], mom[1], mom[2]],
            de_kn: 0.5 * d.dot(&(&ops.hemi_north * &d)),
            de_ks: 0.5 * d.dot(&(&ops.hemi_south * &d)),
            c_rot: self.surf_rot.dot(&d),
            c_orth: self.surf_ref.dot(&d),
            c_tot: self.surf_rot.dot(c),
        })
    }

    /// Removes the rotation component that makes the selected boundary
    /// functional nonzero.
    pub fn constraint_projection(
        &self,
        c: &DVector<f64>,
        mode: ConstraintMode,
    ) -> Result<DVector<f64>, DiagnosticsError> {
        self.check(c)?;
        let d = c - &self.reference;
        let (value, slope) = match mode {
            ConstraintMode::RotMomentum => {
                (self.surf_rot.dot(&d), self.surf_rot.dot(&self.rotation))
            }
            ConstraintMode::OrthPoincare => {
                (self.surf_ref.dot(&d), self.surf_ref.dot(&self.rotation))
            }
            ConstraintMode::TotalMomentum => {
                (self.surf_rot.dot(c), self.surf_rot.dot(&self.rotation))
            }
        };
        let scale = self.surf_rot.amax().max(self.surf_ref.amax());
        if !(slope.abs() > 1e-12 * scale) {
            return Err(DiagnosticsError::Degenerate);
        }
        let alpha = value / slope;
        if alpha == 0.0 {
            return Ok(c.clone());
        }
        Ok(c - &self.rotation * alpha)
    }
}

/// Fills `dek_dt` by centered differences, one-sided at the ends.
pub fn fill_energy_derivative(records: &mut [DiagnosticsRecord]) {
    let n = records.len();
    if n < 2 {
        if let Some(r) = records.first_mut() {
            r.dek_dt = 0.0;
        }
        return;
    }
    let d: Vec<f64> = (0..n)
        .map(|i| {
            let (a, b) = match i {
                0 => (0, 1),
                i if i == n - 1 => (n - 2, n - 1),
                i => (i - 1, i + 1),
            };
            (records[b].e_k - records[a].e_k) / (records[b].t - records[a].t)
        })
        .collect();
    for (r, v) in records.iter_mut().zip(d) {
        r.dek_dt = v;
    }
}

/// `dM_z/dt + eps_p M_y` at interior records, by centered differences.
pub fn momentum_balance_residual(
    records: &[DiagnosticsRecord],
    eps_p: f64,
) -> Result<Vec<(f64, f64)>, DiagnosticsError> {
    if records.len() < 3 {
        return Err(DiagnosticsError::TooFewRecords(records.len()));
    }
    let h = records[1].t - records[0].t;
    if !(h > 0.0)
        || records
            .windows(2)
            .any(|w| ((w[1].t - w[0].t) - h).abs() > 1e-9 * h.max(1.0))
    {
        return Err(DiagnosticsError::NonUniform);
    }
    Ok(records
        .windows(3)
        .map(|w| {
            let dmz = (w[2].m[2] - w[0].m[2]) / (w[2].t - w[0].t);
            (w[1].t, dmz + eps_p * w[1].m[1])
        })
        .collect())
}

pub fn write_csv<W: Write>(records: &[DiagnosticsRecord], mut w: W) -> io::Result<()> {
    w.write_all(CSV_HEADER.as_bytes())?;
    w.write_all(b"\n")?;
    for r in records {
        w.write_all(r.csv_row().as_bytes())?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn write_csv_file(records: &[DiagnosticsRecord], path: &Path) -> io::Result<()> {
    write_csv(records, BufWriter::new(File::create(path)?))
}
