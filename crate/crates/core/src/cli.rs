//! Subcommands behind the `ellipflow` binary. Each writes its report to `out`
//! and returns the process outcome.

use std::io::{self, Write};
use std::path::PathBuf;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::{axial_rotation, Basis};
use crate::config::ConfigError;
use crate::diagnostics::write_csv;
use crate::geometry::{Domain, DomainKind};
use crate::operators::{assemble, my_identity_check, BcForm, BcSpec, OperatorSet};
use crate::spectral::{coercivity_constant, viscous_kernel_for, Stiffness, DEFAULT_KERNEL_TOL};
use crate::timestepper::{integrate, poincare_for, prepare, RunError, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Success,
    ConfigError,
    BlowUp,
    InvariantFailure,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::ConfigError => 1,
            Outcome::BlowUp => 2,
            Outcome::InvariantFailure => 3,
        }
    }

    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Success
        } else {
            Outcome::InvariantFailure
        }
    }
}

pub fn report_config_error(err: &ConfigError, out: &mut dyn Write) -> io::Result<Outcome> {
    writeln!(out, "config error: {err}")?;
    Ok(Outcome::ConfigError)
}

fn setup_error(err: RunError, out: &mut dyn Write) -> io::Result<Outcome> {
    writeln!(out, "error: {err}")?;
    Ok(Outcome::ConfigError)
}

fn mark(pass: bool) -> &'static str {
    if pass {
        "PASS"
    } else {
        "FAIL"
    }
}

pub fn cmd_basis(cfg: &ScenarioConfig, out: &mut dyn Write) -> io::Result<Outcome> {
    let domain = match cfg.domain.build() {
        Ok(d) => d,
        Err(e) => return setup_error(e.into(), out),
    };
    let basis = match Basis::build(&domain, cfg.degree) {
        Ok(b) => b,
        Err(e) => return setup_error(e.into(), out),
    };
    let checks = basis.check_fields(1e-12);
    let div_ok = checks.iter().filter(|c| c.divergence_free).count();
    let tan_ok = checks.iter().filter(|c| c.tangent).count();
    let defect = basis.orthonormality_defect();
    let [a, b, c] = domain.axes();
    writeln!(out, "domain {} axes {a} {b} {c}", domain.kind())?;
    writeln!(out, "degree {}", cfg.degree)?;
    writeln!(out, "dim {}", basis.dim())?;
    writeln!(out, "gram_condition {:.6e}", basis.raw_condition)?;
    writeln!(out, "orthonormality_defect {defect:.3e}")?;
    writeln!(out, "divergence_free {div_ok}/{}", checks.len())?;
    writeln!(out, "tangent {tan_ok}/{}", checks.len())?;
    let pass = div_ok == checks.len() && tan_ok == checks.len() && defect <= 1e-12;
    writeln!(out, "{}", mark(pass))?;
    Ok(Outcome::from_pass(pass))
}

fn homogeneous_ops(basis: &Basis, nu: f64) -> OperatorSet {
    assemble(basis, &BcSpec::stress_free(), nu, 0.0, [1.0, 0.0, 0.0]).expect("homogeneous assembly")
}

pub fn cmd_eig(cfg: &ScenarioConfig, out: &mut dyn Write) -> io::Result<Outcome> {
    let domain = match cfg.domain.build() {
        Ok(d) => d,
        Err(e) => return setup_error(e.into(), out),
    };
    let basis = match Basis::build(&domain, cfg.degree) {
        Ok(b) => b,
        Err(e) => return setup_error(e.into(), out),
    };
    let ops = homogeneous_ops(&basis, cfg.nu());
    let strain =
        viscous_kernel_for(&ops, Stiffness::Strain, DEFAULT_KERNEL_TOL).expect("mass is SPD");
    let grad =
        viscous_kernel_for(&ops, Stiffness::Gradient, DEFAULT_KERNEL_TOL).expect("mass is SPD");
    let expected = domain.kind().rotation_count();
    writeln!(
        out,
        "domain {} degree {} dim {}",
        domain.kind(),
        cfg.degree,
        basis.dim()
    )?;
    writeln!(
        out,
        "kernel_dim A_sym {} (expected {expected})",
        strain.kernel_dim
    )?;
    writeln!(out, "kernel_dim A_grad {} (expected 0)", grad.kernel_dim)?;
    let smallest: Vec<String> = strain
        .eigenvalues
        .iter()
        .take(6)
        .map(|l| format!("{l:.6e}"))
        .collect();
    writeln!(out, "A_sym eigenvalues {}", smallest.join(" "))?;
    match coercivity_constant(&ops, &strain.kernel_fields, cfg.degree) {
        Ok(k) => writeln!(out, "K_N {:.12e} (excluded {})", k.k_n, k.excluded_dim)?,
        Err(e) => writeln!(out, "K_N unavailable: {e}")?,
    }
    let pass = strain.kernel_dim == expected && grad.kernel_dim == 0;
    writeln!(out, "{}", mark(pass))?;
    Ok(Outcome::from_pass(pass))
}

/// Rotation amplitudes swept by `cmd_steady`.
pub const OMEGA_SWEEP: [f64; 5] = [0.025, -0.025, 0.1, -0.1, 1.0];
pub const STEADY_TOL: f64 = 1e-10;

/// Residuals of `u_P` and `u_P + omega e_z x x`. Under the gradient forms
/// `e_z x x` is not a viscous null mode, so only `u_P` decides the outcome
/// there and the sweep is reported for information.
pub fn cmd_steady(cfg: &ScenarioConfig, out: &mut dyn Write) -> io::Result<Outcome> {
    let domain = match cfg.domain.build() {
        Ok(d) => d,
        Err(e) => return setup_error(e.into(), out),
    };
    let up = match poincare_for(&domain, cfg.eps_p) {
        Ok(u) => u,
        Err(e) => return setup_error(e, out),
    };
    let basis = match Basis::build(&domain, cfg.degree) {
        Ok(b) => b,
        Err(e) => return setup_error(e.into(), out),
    };
    let bc = if cfg.bc.has_data() {
        BcSpec::with_data(cfg.bc, up.clone())
    } else {
        BcSpec::homogeneous(cfg.bc)
    };
    let ops = match bc.and_then(|bc| assemble(&basis, &bc, cfg.nu(), cfg.eps_p, [1.0, 0.0, 0.0])) {
        Ok(o) => o,
        Err(e) => return setup_error(e.into(), out),
    };
    let sweep_decides = cfg.bc == BcForm::PoincareStress;
    writeln!(
        out,
        "bc {} nu_inverse {} eps_p {} degree {}",
        cfg.bc, cfg.nu_inverse, cfg.eps_p, cfg.degree
    )?;
    let base = ops
        .residual(&basis.project(&up).coeffs)
        .expect("dimension")
        .amax();
    let mut pass = base < STEADY_TOL;
    writeln!(out, "{} residual u_P {base:.3e}", mark(base < STEADY_TOL))?;
    for omega in OMEGA_SWEEP {
        let w = &up + &axial_rotation().scale(&omega);
        let r = ops
            .residual(&basis.project(&w).coeffs)
            .expect("dimension")
            .amax();
        let ok = r < STEADY_TOL;
        if sweep_decides {
            pass &= ok;
            writeln!(out, "{} residual u_P + {omega} R {r:.3e}", mark(ok))?;
        } else {
            writeln!(out, "INFO residual u_P + {omega} R {r:.3e}")?;
        }
    }
    writeln!(out, "{}", mark(pass))?;
    Ok(Outcome::from_pass(pass))
}

pub fn cmd_run(cfg: &ScenarioConfig, out: &mut dyn Write) -> io::Result<Outcome> {
    let setup = match prepare(cfg) {
        Ok(s) => s,
        Err(e) => return setup_error(e, out),
    };
    let (records, outcome) =
        match integrate(&setup.ops, &setup.context, setup.initial.clone(), &cfg.run) {
            Ok(r) => (r, Outcome::Success),
            Err(RunError::BlowUp { t, norm, partial }) => {
                writeln!(out, "blow-up at t = {t}: |c| = {norm:e}")?;
                (partial, Outcome::BlowUp)
            }
            Err(e) => return setup_error(e, out),
        };
    match &cfg.output {
        Some(path) => {
            let file = std::fs::File::create(path)?;
            write_csv(&records, io::BufWriter::new(file))?;
            writeln!(out, "wrote {} records to {}", records.len(), path.display())?;
        }
        None => write_csv(&records, &mut *out)?,
    }
    if let (Some(first), Some(last)) = (records.first(), records.last()) {
        if cfg.output.is_some() {
            writeln!(
                out,
                "t_end {} E_K {:.6e} -> {:.6e}",
                last.t, first.e_k, last.e_k
            )?;
        }
    }
    Ok(outcome)
}

/// Negative-control hooks for `cmd_verify`.
#[derive(Debug, Clone, Default)]
pub struct VerifyOptions {
    /// Checks this basis file instead of the built basis.
    pub basis_file: Option<PathBuf>,
    /// Added to `T[0][0][0]` before the antisymmetry check.
    pub advection_perturbation: Option<f64>,
}

pub const VERIFY_DEGREES: [usize; 3] = [1, 2, 4];

fn verify_domains() -> Vec<(&'static str, Domain)> {
    vec![
        ("sphere", Domain::unit_sphere()),
        ("spheroid", Domain::spheroid(0.5625).expect("spheroid")),
        ("triaxial", Domain::new(1.0, 0.9, 0.8).expect("triaxial")),
    ]
}

struct Tally<'a> {
    out: &'a mut dyn Write,
    passed: usize,
    failed: usize,
}

impl Tally<'_> {
    fn check(&mut self, name: &str, pass: bool, detail: String) -> io::Result<()> {
        if pass {
            self.passed += 1;
        } else {
            self.failed += 1;
        }
        writeln!(self.out, "{} {name} {detail}", mark(pass))
    }
}

/// Runs the invariant battery on sphere, spheroid and triaxial domains.
pub fn cmd_verify(opts: &VerifyOptions, out: &mut dyn Write) -> io::Result<Outcome> {
    let mut tally = Tally {
        out,
        passed: 0,
        failed: 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);

    if let Some(path) = &opts.basis_file {
        match Basis::import_file(path) {
            Ok(b) => {
                let checks = b.check_fields(1e-10);
                let div = checks.iter().all(|c| c.divergence_free);
                let tan = checks.iter().all(|c| c.tangent);
                tally.check(
                    "basis_file.divergence_free",
                    div,
                    path.display().to_string(),
                )?;
                tally.check("basis_file.tangent", tan, path.display().to_string())?;
            }
            Err(e) => tally.check("basis_file.load", false, e.to_string())?,
        }
    }

    for (label, domain) in verify_domains() {
        for n in VERIFY_DEGREES {
            let tag = format!("{label}.N{n}");
            let basis = match Basis::build(&domain, n) {
                Ok(b) => b,
                Err(e) => {
                    tally.check(&format!("{tag}.basis"), false, e.to_string())?;
                    continue;
                }
            };
            let checks = basis.check_fields(1e-12);
            tally.check(
                &format!("{tag}.basis.divergence_free"),
                checks.iter().all(|c| c.divergence_free),
                format!("dim {}", basis.dim()),
            )?;
            tally.check(
                &format!("{tag}.basis.tangent"),
                checks.iter().all(|c| c.tangent),
                format!("dim {}", basis.dim()),
            )?;
            let defect = basis.orthonormality_defect();
            tally.check(
                &format!("{tag}.basis.orthonormal"),
                defect <= 1e-12,
                format!("{defect:.2e}"),
            )?;

            let mut ops = homogeneous_ops(&basis, 1.0);
            if let Some(delta) = opts.advection_perturbation {
                ops.perturb_advection(0, 0, 0, delta);
            }
            let cx = (&ops.coriolis + ops.coriolis.transpose()).amax();
            tally.check(
                &format!("{tag}.coriolis.antisymmetric"),
                cx <= 1e-13,
                format!("{cx:.2e}"),
            )?;
            let t = ops.advection_antisymmetry_defect();
            tally.check(
                &format!("{tag}.advection.antisymmetric"),
                t <= 1e-12,
                format!("{t:.2e}"),
            )?;
            let h = (&ops.hemi_north + &ops.hemi_south - &ops.mass).amax();
            tally.check(
                &format!("{tag}.hemispheres"),
                h <= 1e-12,
                format!("{h:.2e}"),
            )?;

            let (mut worst_t, mut worst_c) = (0.0f64, 0.0f64);
            for _ in 0..100 {
                let mut c = DVector::from_fn(basis.dim(), |_, _| rng.gen_range(-1.0..1.0));
                c /= c.norm();
                worst_t = worst_t.max(c.dot(&ops.advect(&c)).abs());
                worst_c = worst_c.max(c.dot(&(&ops.coriolis * &c)).abs());
            }
            tally.check(
                &format!("{tag}.advection.neutral"),
                worst_t < 1e-11,
                format!("{worst_t:.2e}"),
            )?;
            tally.check(
                &format!("{tag}.coriolis.neutral"),
                worst_c < 1e-13,
                format!("{worst_c:.2e}"),
            )?;

            let expected = domain.kind().rotation_count();
            let ks = viscous_kernel_for(&ops, Stiffness::Strain, DEFAULT_KERNEL_TOL)
                .expect("mass is SPD");
            tally.check(
                &format!("{tag}.kernel.strain"),
                ks.kernel_dim == expected,
                format!("{} (expected {expected})", ks.kernel_dim),
            )?;
            let kg = viscous_kernel_for(&ops, Stiffness::Gradient, DEFAULT_KERNEL_TOL)
                .expect("mass is SPD");
            tally.check(
                &format!("{tag}.kernel.gradient"),
                kg.kernel_dim == 0,
                format!("{}", kg.kernel_dim),
            )?;

            let identity = basis
                .fields
                .iter()
                .map(|f| {
                    let (l, r) = my_identity_check(f, basis.table());
                    (l - r).abs()
                })
                .fold(0.0, f64::max);
            tally.check(
                &format!("{tag}.my_identity"),
                identity < 1e-12,
                format!("{identity:.2e}"),
            )?;

            if domain.kind() == DomainKind::SpheroidZ {
                let up = poincare_for(&domain, 0.25).expect("spheroid");
                let bc = BcSpec::with_data(BcForm::PoincareStress, up.clone()).expect("data form");
                let pops =
                    assemble(&basis, &bc, 1.0 / 0.024, 0.25, [1.0, 0.0, 0.0]).expect("assembly");
                let r = pops
                    .residual(&basis.project(&up).coeffs)
                    .expect("dimension")
                    .amax();
                tally.check(
                    &format!("{tag}.poincare_steady"),
                    r < STEADY_TOL,
                    format!("{r:.2e}"),
                )?;
            }
        }
    }
    let (passed, failed) = (tally.passed, tally.failed);
    writeln!(tally.out, "summary {passed} passed {failed} failed")?;
    Ok(Outcome::from_pass(failed == 0))
}
