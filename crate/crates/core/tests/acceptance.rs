//! End-to-end acceptance checks. Runs without the libtest harness and prints
//! one `criterion N: PASS|FAIL` line each; exits non-zero if any fail.

use std::process::ExitCode;
use std::time::Instant;

use ellipflow::basis::{axial_rotation, poincare_field, solid_rotation, Basis};
use ellipflow::diagnostics::{
    momentum_balance_residual, reference_flow, ConstraintMode, DiagnosticsContext,
};
use ellipflow::geometry::Domain;
use ellipflow::operators::{assemble, my_identity_check, BcForm, BcSpec, OperatorSet};
use ellipflow::poly::VectorField;
use ellipflow::spectral::{coercivity_constant, viscous_kernel_for, Stiffness, DEFAULT_KERNEL_TOL};
use ellipflow::timestepper::{integrate, lowest_decaying_mode, RunParams, State, Stepper};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const BETA: f64 = 0.5625;
const EPS: f64 = 0.25;
const DEGREES: [usize; 3] = [1, 2, 4];

type Outcome = Result<String, String>;

fn domains() -> [(&'static str, Domain, usize); 3] {
    [
        ("sphere", Domain::unit_sphere(), 3),
        ("spheroid", Domain::spheroid(BETA).unwrap(), 1),
        ("triaxial", Domain::new(1.0, 0.9, 0.8).unwrap(), 0),
    ]
}

struct Problem {
    basis: Basis,
    ops: OperatorSet,
    context: DiagnosticsContext,
}

fn spheroid_problem(degree: usize, form: BcForm, nu: f64, eps: f64) -> Problem {
    let basis = Basis::build(&Domain::spheroid(BETA).unwrap(), degree).unwrap();
    let bc = if form.has_data() {
        BcSpec::with_data(form, poincare_field(BETA, eps).unwrap()).unwrap()
    } else {
        BcSpec::homogeneous(form).unwrap()
    };
    let ops = assemble(&basis, &bc, nu, eps, [1.0, 0.0, 0.0]).unwrap();
    let up = reference_flow(&basis, eps);
    let context = DiagnosticsContext::new(&basis, up.as_ref());
    Problem {
        basis,
        ops,
        context,
    }
}

fn poincare_plus(omega: f64) -> VectorField<f64> {
    &poincare_field(BETA, EPS).unwrap() + &axial_rotation().scale(&omega)
}

fn advance(ops: &OperatorSet, c0: DVector<f64>, dt: f64, steps: usize) -> DVector<f64> {
    let stepper = Stepper::new(ops, dt, true).unwrap();
    let mut state = State::new(c0);
    for _ in 0..steps {
        state = stepper.step(&state);
    }
    state.coeffs
}

fn kernels() -> Outcome {
    let start = Instant::now();
    let mut rows = Vec::new();
    for (name, d, expected) in domains() {
        for n in DEGREES {
            let basis = Basis::build(&d, n).unwrap();
            let ops = assemble(&basis, &BcSpec::stress_free(), 1.0, 0.0, [1.0, 0.0, 0.0]).unwrap();
            let ks = viscous_kernel_for(&ops, Stiffness::Strain, DEFAULT_KERNEL_TOL)
                .unwrap()
                .kernel_dim;
            let kg = viscous_kernel_for(&ops, Stiffness::Gradient, DEFAULT_KERNEL_TOL)
                .unwrap()
                .kernel_dim;
            if ks != expected || kg != 0 {
                return Err(format!(
                    "{name} N={n}: A_sym kernel {ks} (want {expected}), A_grad kernel {kg}"
                ));
            }
            rows.push(ks.to_string());
        }
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 60.0 {
        return Err(format!("took {secs:.1}s"));
    }
    Ok(format!("A_sym kernels {} in {secs:.1}s", rows.join(",")))
}

fn poincare_steady() -> Outcome {
    let mut worst: f64 = 0.0;
    for nu_inverse in [0.024, 0.00375] {
        for n in DEGREES {
            let p = spheroid_problem(n, BcForm::PoincareStress, 1.0 / nu_inverse, EPS);
            let c = p.basis.project(&poincare_field(BETA, EPS).unwrap()).coeffs;
            worst = worst.max(p.ops.residual(&c).unwrap().amax());
        }
    }
    if worst < 1e-10 {
        Ok(format!("max residual {worst:.2e}"))
    } else {
        Err(format!("max residual {worst:.2e}"))
    }
}

fn non_attractivity() -> Outcome {
    let p = spheroid_problem(3, BcForm::PoincareStress, 1.0 / 0.024, EPS);
    let mut worst: f64 = 0.0;
    for omega in [0.025, -0.025, 0.1, -0.1, 1.0] {
        let c = p.basis.project(&poincare_plus(omega)).coeffs;
        worst = worst.max(p.ops.residual(&c).unwrap().amax());
    }
    let c0 = p.basis.project(&poincare_plus(0.025)).coeffs;
    let c1 = advance(&p.ops, c0.clone(), 0.01, 100);
    let drift = (&c1 - &c0).norm() / c0.norm();
    let detail = format!("max residual {worst:.2e}, 100-step drift {drift:.2e}");
    if worst < 1e-10 && drift < 1e-9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn perpetual_rotation() -> Outcome {
    let p = spheroid_problem(3, BcForm::StressFree, 1.0 / 0.024, 0.0);
    let c0 = p.basis.project(&axial_rotation().scale(&0.1)).coeffs;
    let mut params = RunParams::new(0.01, 100.0);
    params.record_every = 100;
    let recs = integrate(&p.ops, &p.context, c0, &params).map_err(|e| e.to_string())?;
    let (e0, l0) = (recs[0].e_k, recs[0].lambda);
    let de = recs
        .iter()
        .map(|r| (r.e_k / e0 - 1.0).abs())
        .fold(0.0, f64::max);
    let dl = recs
        .iter()
        .map(|r| (r.lambda / l0 - 1.0).abs())
        .fold(0.0, f64::max);
    let detail = format!(
        "{} steps, E_K drift {de:.2e}, lambda drift {dl:.2e}",
        params.steps()
    );
    if params.steps() >= 10_000 && de <= 1e-12 && dl <= 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn free_decay() -> Outcome {
    let nu = 1.0 / 0.024;
    let p = spheroid_problem(3, BcForm::StressFree, nu, 0.0);
    let rotation = p.basis.project(&axial_rotation()).coeffs;
    let k = coercivity_constant(&p.ops, &[rotation], 3).map_err(|e| e.to_string())?;
    let predicted = 4.0 * nu * k.k_n;
    let mode = lowest_decaying_mode(&p.ops).map_err(|e| e.to_string())?;
    let mut params = RunParams::new(1e-3, 3.0 / predicted);
    params.advection = false;
    let recs = integrate(&p.ops, &p.context, mode * 0.1, &params).map_err(|e| e.to_string())?;
    let (a, z) = (&recs[0], recs.last().unwrap());
    let measured = -(z.e_k / a.e_k).ln() / (z.t - a.t);
    let rel = (measured / predicted - 1.0).abs();
    let detail = format!(
        "K_N {:.5}, rate {measured:.4} vs {predicted:.4} ({rel:.1e})",
        k.k_n
    );
    if rel < 0.05 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn stress_free_decay() -> Outcome {
    let p = spheroid_problem(3, BcForm::StressFree, 1.0 / 0.024, EPS);
    let c0 = p.basis.project(&axial_rotation().scale(&0.1)).coeffs;
    let mut params = RunParams::new(0.5, 4000.0);
    params.record_every = 20;
    let recs = integrate(&p.ops, &p.context, c0, &params).map_err(|e| e.to_string())?;
    let max_rate = recs.iter().map(|r| r.dek_dt).fold(f64::MIN, f64::max);
    let ratio = recs.last().unwrap().e_k / recs[0].e_k;
    let detail = format!("max dEK_dt {max_rate:.2e}, E_K(end)/E_K(0) {ratio:.2e}");
    if max_rate <= 1e-12 && ratio < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn momentum_balance() -> Outcome {
    let p = spheroid_problem(3, BcForm::PoincareStress, 0.024, EPS);
    let w = &poincare_field(BETA, EPS).unwrap()
        + &solid_rotation([1.0, 0.0, 0.0]).unwrap().scale(&0.025);
    let c0 = p.basis.project(&w).coeffs;
    let mut maxima = Vec::new();
    for dt in [0.01, 0.005, 0.0025] {
        let params = RunParams::new(dt, 2.0);
        let recs = integrate(&p.ops, &p.context, c0.clone(), &params).map_err(|e| e.to_string())?;
        let res = momentum_balance_residual(&recs, EPS).map_err(|e| e.to_string())?;
        maxima.push(res.iter().map(|r| r.1.abs()).fold(0.0, f64::max));
    }
    let ratios = [maxima[0] / maxima[1], maxima[1] / maxima[2]];
    let detail = format!(
        "ratios {:.3}, {:.3}; residual {:.2e} at dt 0.0025",
        ratios[0], ratios[1], maxima[2]
    );
    if ratios.iter().all(|r| (3.5..=4.5).contains(r)) && maxima[2] < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn my_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (_, d, _) in domains() {
        let basis = Basis::build(&d, 4).unwrap();
        for f in &basis.fields {
            let (lhs, rhs) = my_identity_check(f, basis.table());
            worst = worst.max((lhs - rhs).abs());
            count += 1;
        }
    }
    let detail = format!("{count} fields, max defect {worst:.2e}");
    if worst < 1e-12 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn neutrality() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let (mut wt, mut wc) = (0.0f64, 0.0f64);
    for (_, d, _) in domains() {
        let basis = Basis::build(&d, 4).unwrap();
        let ops = assemble(&basis, &BcSpec::stress_free(), 1.0, EPS, [1.0, 0.0, 0.0]).unwrap();
        for _ in 0..100 {
            let mut c = DVector::from_fn(basis.dim(), |_, _| rng.gen_range(-1.0..1.0));
            c /= c.norm();
            wt = wt.max(c.dot(&ops.advect(&c)).abs());
            wc = wc.max(c.dot(&(&ops.coriolis * &c)).abs());
        }
    }
    let detail = format!("advection {wt:.2e}, Coriolis {wc:.2e}");
    if wt < 1e-11 && wc < 1e-13 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn family_separation() -> Outcome {
    let p = spheroid_problem(3, BcForm::PoincareStress, 1.0 / 0.00375, EPS);
    let (dt, steps, chunk) = (0.05, 2000, 50);
    let plus = p.basis.project(&poincare_plus(0.025)).coeffs;
    let minus = p.basis.project(&poincare_plus(-0.025)).coeffs;
    let stepper = Stepper::new(&p.ops, dt, true).unwrap();
    let (mut a, mut b) = (State::new(plus), State::new(minus));
    let d0 = (&a.coeffs - &b.coeffs).norm();
    let mut least = f64::INFINITY;
    for i in 1..=steps {
        a = stepper.step(&a);
        b = stepper.step(&b);
        if i % chunk == 0 || i == steps {
            least = least.min((&a.coeffs - &b.coeffs).norm() / d0);
        }
    }
    let detail = format!("t = {}, min distance ratio {least:.6}", dt * steps as f64);
    if least >= 0.9 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn constraint_remedy() -> Outcome {
    let p = spheroid_problem(3, BcForm::PoincareStress, 1.0 / 0.024, EPS);
    let c0 = p.basis.project(&poincare_plus(0.025)).coeffs;
    let mut params = RunParams::new(0.01, 1.0);
    params.constraint = Some(ConstraintMode::RotMomentum);
    params.record_every = 100;
    let recs = integrate(&p.ops, &p.context, c0, &params).map_err(|e| e.to_string())?;
    let ratio = recs.last().unwrap().delta_ek / recs[0].delta_ek;
    let detail = format!("delta_EK(end)/delta_EK(0) {ratio:.2e}");
    if ratio < 1e-6 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("kernel trichotomy", kernels),
        ("Poincare flow is steady", poincare_steady),
        ("rotating family is steady", non_attractivity),
        ("solid rotation persists", perpetual_rotation),
        ("Stokes decay rate", free_decay),
        ("stress-free decay", stress_free_decay),
        ("momentum balance", momentum_balance),
        ("M_y identity", my_identity),
        ("energy neutrality", neutrality),
        ("family members stay apart", family_separation),
        ("rotation constraint", constraint_remedy),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {}: PASS {name}: {d} [{secs:.1}s]", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {}: FAIL {name}: {d} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
