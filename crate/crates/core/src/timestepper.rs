//! Semi-implicit BDF2 integration of the Galerkin system.
//!
//! Viscous and Coriolis terms are implicit; advection is extrapolated from the
//! two previous levels. The first step after a start or a restart is
//! Richardson-extrapolated backward Euler, `2 u(dt/2, dt/2) - u(dt)`, which
//! keeps the startup error at the same order as the multistep error.

use std::path::PathBuf;

use nalgebra::{DMatrix, DVector, Dyn, LU};
use thiserror::Error;

use crate::basis::{axial_rotation, poincare_field, Basis, BasisError};
use crate::diagnostics::{
    fill_energy_derivative, reference_flow, ConstraintMode, DiagnosticsContext, DiagnosticsError,
    DiagnosticsRecord,
};
use crate::geometry::{Domain, GeometryError};
use crate::operators::{assemble, BcForm, BcSpec, OperatorError, OperatorSet};
use crate::spectral::{viscous_kernel, SpectralError, DEFAULT_KERNEL_TOL};

pub const DEFAULT_BLOWUP_FACTOR: f64 = 1e6;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("step matrix is singular")]
    Singular,
    #[error("blow-up at t = {t}: |c| = {norm:e}")]
    BlowUp {
        t: f64,
        norm: f64,
        partial: Vec<DiagnosticsRecord>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub t: f64,
    pub coeffs: DVector<f64>,
    /// Previous level; `None` right after a start or restart.
    pub prev: Option<DVector<f64>>,
}

impl State {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self {
            t: 0.0,
            coeffs,
            prev: None,
        }
    }
}

/// Fixed-step integrator bound to one operator set.
pub struct Stepper<'a> {
    ops: &'a OperatorSet,
    dt: f64,
    advection: bool,
    euler: LU<f64, Dyn, Dyn>,
    euler_half: LU<f64, Dyn, Dyn>,
    bdf2: LU<f64, Dyn, Dyn>,
}

impl<'a> Stepper<'a> {
    pub fn new(ops: &'a OperatorSet, dt: f64, advection: bool) -> Result<Self, RunError> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(RunError::Invalid(format!("dt must be positive, got {dt}")));
        }
        let linear: DMatrix<f64> = &ops.viscous + &ops.coriolis * (2.0 * ops.eps_p);
        let euler = (&ops.mass / dt + &linear).lu();
        let euler_half = (&ops.mass * (2.0 / dt) + &linear).lu();
        let bdf2 = (&ops.mass * (1.5 / dt) + &linear).lu();
        if !euler.is_invertible() || !euler_half.is_invertible() || !bdf2.is_invertible() {
            return Err(RunError::Singular);
        }
        Ok(Self {
            ops,
            dt,
            advection,
            euler,
            euler_half,
            bdf2,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn explicit(&self, u: &DVector<f64>) -> DVector<f64> {
        if self.advection {
            &self.ops.forcing - self.ops.advect(u)
        } else {
            self.ops.forcing.clone()
        }
    }

    pub fn step(&self, state: &State) -> State {
        let m = &self.ops.mass;
        let c = &state.coeffs;
        let next = match &state.prev {
            None => {
                let full = self
                    .euler
                    .solve(&(m * c / self.dt + self.explicit(c)))
                    .expect("invertible");
                let h = 0.5 * self.dt;
                let mid = self
                    .euler_half
                    .solve(&(m * c / h + self.explicit(c)))
                    .expect("invertible");
                let half = self
                    .euler_half
                    .solve(&(m * &mid / h + self.explicit(&mid)))
                    .expect("invertible");
                half * 2.0 - full
            }
            Some(p) => {
                let star = c * 2.0 - p;
                let rhs = m * (c * 4.0 - p) / (2.0 * self.dt) + self.explicit(&star);
                self.bdf2.solve(&rhs).expect("invertible")
            }
        };
        State {
            t: state.t + self.dt,
            coeffs: next,
            prev: Some(c.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DomainSpec {
    Axes([f64; 3]),
    Beta(f64),
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain, GeometryError> {
        match *self {
            DomainSpec::Axes([a, b, c]) => Domain::new(a, b, c),
            DomainSpec::Beta(beta) => Domain::spheroid(beta),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitSpec {
    /// `amplitude * e_z x x`.
    SolidRotation {
        amplitude: f64,
    },
    Poincare,
    /// `u_P + omega * e_z x x`.
    PoincarePlusRotation {
        omega: f64,
    },
    /// Lowest non-kernel eigenmode of the viscous operator, scaled to unit
    /// L2 norm times `amplitude`.
    Eigenmode {
        amplitude: f64,
    },
    /// Whitespace-separated coefficients, one basis field each.
    Coefficients(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Restart {
    pub time: f64,
    pub omega: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunParams {
    pub dt: f64,
    pub t_end: f64,
    /// Steps between records.
    pub record_every: usize,
    pub restart: Option<Restart>,
    pub constraint: Option<ConstraintMode>,
    pub advection: bool,
    pub blowup_factor: f64,
}

impl RunParams {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            record_every: 1,
            restart: None,
            constraint: None,
            advection: true,
            blowup_factor: DEFAULT_BLOWUP_FACTOR,
        }
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(RunError::Invalid(format!(
                "time.dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end > 0.0) || !self.t_end.is_finite() {
            return Err(RunError::Invalid(format!(
                "time.t_end must be positive, got {}",
                self.t_end
            )));
        }
        if self.record_every == 0 {
            return Err(RunError::Invalid(
                "time.record_every must be at least 1".into(),
            ));
        }
        if let Some(r) = self.restart {
            if !(0.0..=self.t_end).contains(&r.time) {
                return Err(RunError::Invalid(format!(
                    "restart.time {} outside [0, t_end]",
                    r.time
                )));
            }
        }
        if !(self.blowup_factor > 1.0) {
            return Err(RunError::Invalid("blow-up factor must exceed 1".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.t_end / self.dt).round() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub domain: DomainSpec,
    pub degree: usize,
    pub bc: BcForm,
    pub nu_inverse: f64,
    pub eps_p: f64,
    pub init: InitSpec,
    /// Precession rate used to build `u_P` for the initial field, when it
    /// differs from the dynamics.
    pub init_eps_p: Option<f64>,
    pub run: RunParams,
    pub output: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn nu(&self) -> f64 {
        1.0 / self.nu_inverse
    }

    pub fn validate(&self) -> Result<(), RunError> {
        if !(self.nu_inverse > 0.0) || !self.nu_inverse.is_finite() {
            return Err(RunError::Invalid(format!(
                "physics.nu_inverse must be positive, got {}",
                self.nu_inverse
            )));
        }
        if !self.eps_p.is_finite() {
            return Err(RunError::Invalid("physics.eps_p must be finite".into()));
        }
        if self.degree == 0 {
            return Err(RunError::Invalid("basis.degree must be at least 1".into()));
        }
        self.run.validate()
    }
}

/// Everything a run needs, built once from a scenario.
pub struct Setup {
    pub basis: Basis,
    pub ops: OperatorSet,
    pub context: DiagnosticsContext,
    pub initial: DVector<f64>,
}

/// Poincaré flow for a domain, or an error naming why it does not exist.
pub fn poincare_for(
    domain: &Domain,
    eps_p: f64,
) -> Result<crate::poly::VectorField<f64>, RunError> {
    let beta = domain
        .poincare_beta()
        .filter(|b| *b != 0.0)
        .ok_or_else(|| {
            RunError::Invalid(format!("no Poincaré flow on a {} domain", domain.kind()))
        })?;
    Ok(poincare_field(beta, eps_p)?)
}

pub fn prepare(cfg: &ScenarioConfig) -> Result<Setup, RunError> {
    cfg.validate()?;
    let domain = cfg.domain.build()?;
    let basis = Basis::build(&domain, cfg.degree)?;
    let bc = if cfg.bc.has_data() {
        BcSpec::with_data(cfg.bc, poincare_for(&domain, cfg.eps_p)?)?
    } else {
        BcSpec::homogeneous(cfg.bc)?
    };
    let ops = assemble(&basis, &bc, cfg.nu(), cfg.eps_p, [1.0, 0.0, 0.0])?;
    let reference = reference_flow(&basis, cfg.eps_p);
    let context = DiagnosticsContext::new(&basis, reference.as_ref());
    let init_eps = cfg.init_eps_p.unwrap_or(cfg.eps_p);
    let initial = match &cfg.init {
        InitSpec::SolidRotation { amplitude } => {
            basis.project(&axial_rotation().scale(amplitude)).coeffs
        }
        InitSpec::Poincare => basis.project(&poincare_for(&domain, init_eps)?).coeffs,
        InitSpec::PoincarePlusRotation { omega } => {
            let w = &poincare_for(&domain, init_eps)? + &axial_rotation().scale(omega);
            basis.project(&w).coeffs
        }
        InitSpec::Eigenmode { amplitude } => lowest_decaying_mode(&ops)? * *amplitude,
        InitSpec::Coefficients(path) => read_coefficients(path, basis.dim())?,
    };
    Ok(Setup {
        basis,
        ops,
        context,
        initial,
    })
}

/// M-normalized eigenvector of the smallest nonzero viscous eigenvalue.
pub fn lowest_decaying_mode(ops: &OperatorSet) -> Result<DVector<f64>, RunError> {
    let rep = viscous_kernel(ops, DEFAULT_KERNEL_TOL)?;
    rep.eigenvectors
        .get(rep.kernel_dim)
        .cloned()
        .ok_or_else(|| RunError::Invalid("viscous operator has no decaying mode".into()))
}

fn read_coefficients(path: &std::path::Path, dim: usize) -> Result<DVector<f64>, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    let values: Vec<f64> = text
        .split_whitespace()
        .map(|s| s.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| RunError::Invalid(format!("{}: {e}", path.display())))?;
    if values.len() != dim {
        return Err(RunError::Invalid(format!(
            "{}: expected {dim} coefficients, found {}",
            path.display(),
            values.len()
        )));
    }
    Ok(DVector::from_vec(values))
}

/// Integrates from `initial` and returns the diagnostics series.
pub fn integrate(
    ops: &OperatorSet,
    context: &DiagnosticsContext,
    initial: DVector<f64>,
    params: &RunParams,
) -> Result<Vec<DiagnosticsRecord>, RunError> {
    params.validate()?;
    let stepper = Stepper::new(ops, params.dt, params.advection)?;
    let steps = params.steps();
    let restart_step = params
        .restart
        .map(|r| (r.time / params.dt).round() as usize);
    let norm0 = initial.norm();
    let limit = params.blowup_factor * if norm0 > 0.0 { norm0 } else { 1.0 };

    let mut state = State::new(initial);
    let mut records = vec![context.record(0.0, &state.coeffs, ops)?];
    for n in 1..=steps {
        if let (Some(rs), Some(r)) = (restart_step, params.restart) {
            if rs == n - 1 {
                state.coeffs += &context.rotation * r.omega;
                state.prev = None;
            }
        }
        state = stepper.step(&state);
        state.t = n as f64 * params.dt;
        if let Some(mode) = params.constraint {
            state.coeffs = context.constraint_projection(&state.coeffs, mode)?;
        }
        let norm = state.coeffs.norm();
        if !norm.is_finite() || norm > limit {
            records.push(context.record(state.t, &state.coeffs, ops)?);
            fill_energy_derivative(&mut records);
            return Err(RunError::BlowUp {
                t: state.t,
                norm,
                partial: records,
            });
        }
        if n % params.record_every == 0 || n == steps {
            records.push(context.record(state.t, &state.coeffs, ops)?);
        }
    }
    fill_energy_derivative(&mut records);
    Ok(records)
}

pub fn run(cfg: &ScenarioConfig) -> Result<Vec<DiagnosticsRecord>, RunError> {
    let setup = prepare(cfg)?;
    integrate(&setup.ops, &setup.context, setup.initial, &cfg.run)
}
