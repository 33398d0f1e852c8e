use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ellipflow::basis::Basis;
use ellipflow::config::parse_config;
use ellipflow::diagnostics::CSV_HEADER;
use ellipflow::geometry::Domain;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ellipflow"))
}

fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn bundled_configs_parse() {
    for name in [
        "fig1.cfg",
        "fig2_poincare.cfg",
        "freedecay_spheroid.cfg",
        "freedecay_triaxial.cfg",
        "gradbc_spheroid.cfg",
    ] {
        let text = fs::read_to_string(configs_dir().join(name)).unwrap();
        parse_config(&text, None).unwrap_or_else(|e| panic!("{name}: {e}"));
    }
}

#[test]
fn basis_reports_dimension() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "b.cfg",
        "domain.beta = 0.5625\nbasis.degree = 1\n",
    );
    let o = run_in(dir.path(), &["basis", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let s = stdout(&o);
    assert!(s.contains("dim 3"), "{s}");
    assert!(s.contains("tangent 3/3"));

    let cfg = write_cfg(
        dir.path(),
        "t.cfg",
        "domain.a = 1\ndomain.b = 0.9\ndomain.c = 0.8\nbasis.degree = 3\n",
    );
    let o = run_in(dir.path(), &["basis", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("dim 26"));
}

#[test]
fn config_and_usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "z.cfg",
        "domain.beta = 0.5625\nbasis.degree = 0\n",
    );
    let o = run_in(dir.path(), &["basis", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("line 2"));

    let cfg = write_cfg(
        dir.path(),
        "u.cfg",
        "domain.beta = 0.5625\nbasis.degree = 1\nfoo.bar = 2\n",
    );
    let o = run_in(dir.path(), &["eig", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("line 3: unknown key 'foo.bar'"));

    assert_eq!(run_in(dir.path(), &["frobnicate"]).status.code(), Some(1));
    assert_eq!(run_in(dir.path(), &["run"]).status.code(), Some(1));
}

#[test]
fn eig_reports_trichotomy() {
    let dir = tempfile::tempdir().unwrap();
    for (text, kernel) in [
        ("domain.a = 1\ndomain.b = 1\ndomain.c = 1\n", 3),
        ("domain.beta = 0.5625\n", 1),
        ("domain.a = 1\ndomain.b = 0.9\ndomain.c = 0.8\n", 0),
        ("domain.a = 0.8\ndomain.b = 1\ndomain.c = 1\n", 1),
    ] {
        let cfg = write_cfg(dir.path(), "e.cfg", &format!("{text}basis.degree = 2\n"));
        let o = run_in(dir.path(), &["eig", "--config", cfg.to_str().unwrap()]);
        let s = stdout(&o);
        assert_eq!(o.status.code(), Some(0), "{s}");
        assert!(s.contains(&format!("kernel_dim A_sym {kernel} ")), "{s}");
        assert!(s.contains("kernel_dim A_grad 0 "), "{s}");
    }
}

#[test]
fn steady_outcomes_per_boundary_condition() {
    let dir = tempfile::tempdir().unwrap();
    let base = "domain.beta = 0.5625\nbasis.degree = 2\nphysics.nu_inverse = 0.024\nphysics.eps_p = 0.25\n";
    for (form, code) in [
        ("poincare_stress", 0),
        ("poincare_normal_gradient", 0),
        ("stress_free", 3),
    ] {
        let cfg = write_cfg(dir.path(), "s.cfg", &format!("{base}bc.form = {form}\n"));
        let o = run_in(dir.path(), &["steady", "--config", cfg.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(code), "{form}: {}", stdout(&o));
    }
    let cfg = write_cfg(
        dir.path(),
        "tri.cfg",
        "domain.a = 1\ndomain.b = 0.9\ndomain.c = 0.8\nbasis.degree = 1\nbc.form = poincare_stress\n",
    );
    assert_eq!(
        run_in(dir.path(), &["steady", "--config", cfg.to_str().unwrap()])
            .status
            .code(),
        Some(1)
    );
}

#[test]
fn run_is_deterministic_and_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    let text = "domain.beta = 0.5625\nbasis.degree = 2\nphysics.nu_inverse = 0.024\nphysics.eps_p = 0.25\n\
                time.dt = 0.5\ntime.t_end = 50\ntime.record_every = 4\noutput.path = out.csv\n";
    let cfg = write_cfg(dir.path(), "r.cfg", text);
    let o = run_in(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let first = fs::read(dir.path().join("out.csv")).unwrap();
    let o = run_in(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let second = fs::read(dir.path().join("out.csv")).unwrap();
    assert_eq!(first, second);

    let csv = String::from_utf8(first).unwrap();
    assert!(!csv.contains('\r'));
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 26);
    assert!(rows.iter().all(|r| r.len() == 15 && r[2] <= 1e-12));
}

#[test]
fn blow_up_exits_2_with_partial_csv() {
    let dir = tempfile::tempdir().unwrap();
    // Poincaré forcing spins a nearly resting fluid up towards u_P, so the
    // coefficient norm grows far beyond ten times its start.
    let text = "domain.beta = 0.5625\nbasis.degree = 2\nbc.form = poincare_stress\nphysics.nu_inverse = 0.024\n\
                physics.eps_p = 0.25\ninit.type = solid_rotation\ninit.amplitude = 0.001\n\
                time.dt = 0.001\ntime.t_end = 1\ntime.blowup_factor = 10\noutput.path = out.csv\n";
    let cfg = write_cfg(dir.path(), "x.cfg", text);
    let o = run_in(dir.path(), &["run", "--config", cfg.to_str().unwrap()]);
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(2), "{s}");
    assert!(s.contains("blow-up"));
    let csv = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert!(csv.lines().count() >= 2);
}

#[test]
fn verify_passes_and_catches_negative_controls() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_in(dir.path(), &["verify"]);
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{s}");
    assert!(s.contains(" 0 failed"));

    let o = run_in(dir.path(), &["verify", "--perturb-advection", "1e-6"]);
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(3));
    assert!(
        s.lines()
            .any(|l| l.starts_with("FAIL") && l.contains("advection.antisymmetric")),
        "{s}"
    );

    let d = Domain::spheroid(0.5625).unwrap();
    let b = Basis::build(&d, 2).unwrap();
    let good = dir.path().join("good.basis");
    b.export_file(&good).unwrap();
    let o = run_in(
        dir.path(),
        &["verify", "--basis-file", good.to_str().unwrap()],
    );
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));

    // Shift one coefficient of the first field.
    let text = fs::read_to_string(&good).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let row = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    let mut tokens: Vec<String> = lines[row].split(' ').map(String::from).collect();
    let at = tokens.iter().position(|t| t.contains(',')).unwrap();
    let (mono, value) = tokens[at].split_once(':').unwrap();
    let shifted = value.parse::<f64>().unwrap() + 0.5;
    tokens[at] = format!("{mono}:{shifted:.16e}");
    lines[row] = tokens.join(" ");
    let bad = dir.path().join("bad.basis");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = run_in(
        dir.path(),
        &["verify", "--basis-file", bad.to_str().unwrap()],
    );
    let s = stdout(&o);
    assert_eq!(o.status.code(), Some(3), "{s}");
    assert!(s.lines().any(|l| l.starts_with("FAIL basis_file.")), "{s}");
}
