use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_voidlattice"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).arg("--out").arg(dir.join("out")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn value(text: &str, key: &str) -> f64 {
    let prefix = format!("{key} = ");
    text.lines().find_map(|l| l.strip_prefix(&prefix)).unwrap_or_else(|| panic!("no {key} in\n{text}")).parse().unwrap()
}

fn write_square(dir: &Path) {
    let mut s = String::from("dim 2\neps 0.125\ncount 4\n");
    for (a, b) in [(3, 3), (3, 4), (4, 3), (4, 4)] {
        s.push_str(&format!("{a} {b}\n"));
    }
    fs::write(dir.join("square.txt"), s).unwrap();
}

#[test]
fn regime_prints_monitor_csv() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--quiet", "regime", "--q", "2", "--exponents", "6:12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(rows[0].starts_with("eps,delta,n,eta,gamma,"));
    assert_eq!(rows.len(), 8);
    for r in &rows[1..] {
        let fields: Vec<&str> = r.split(',').collect();
        assert_eq!(fields.len(), 9);
        let mantissa = fields[0].split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 12, "{r}");
    }
    assert_eq!(fs::read_to_string(dir.path().join("out/regime.csv")).unwrap(), text);
}

#[test]
fn eam_check_reports_identity() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--quiet", "eam-check", "--trials", "100", "--seed", "7"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("identity holds: 100/100"), "{text}");
    assert!(text.contains("lemma counterexamples: 0"), "{text}");
}

#[test]
fn eam_check_requires_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["--quiet", "eam-check", "--trials", "3"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn malformed_void_set_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "dim 2\neps 0.125\ncount 2\n3 3\n3 x\n").unwrap();
    let o = run(dir.path(), &["--quiet", "perimeter", "--set", "bad.txt"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 5"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_names_key_and_section() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.toml"), "[solver]\ntolerance = 1e-6\n").unwrap();
    let o = run(dir.path(), &["--quiet", "minimize", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("`tolerance`") && err.contains("[solver]"), "{err}");
}

#[test]
fn dimension_mismatch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    write_square(dir.path());
    fs::write(dir.path().join("c.toml"), "[domain]\ndim = 3\nn = 8\n[input]\nset = \"square.txt\"\n").unwrap();
    let o = run(dir.path(), &["--quiet", "minimize", "--config", "c.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dimension mismatch"));
}

#[test]
fn repeated_runs_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    write_square(dir.path());
    fs::write(
        dir.path().join("g.toml"),
        "[regime]\neps = [0.125, 0.0625]\nn = [2, 3]\ngamma = [0.125, 0.065]\nenforce_monitors = false\n",
    )
    .unwrap();
    let commands: [&[&str]; 4] = [
        &["smooth", "--set", "square.txt", "--grid", "24"],
        &["gamma", "--config", "g.toml"],
        &["eam-check", "--seed", "3", "--trials", "10"],
        &["replace", "--set", "square.txt", "--eta", "3", "--n", "8"],
    ];
    for args in commands {
        let a = run(dir.path(), &[&["--quiet", "--threads", "2"], args].concat());
        let b = run(dir.path(), &[&["--quiet"], args].concat());
        assert_eq!(a.status.code(), Some(0), "{args:?}: {}", stderr(&a));
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn flags_override_file_values_and_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    write_square(dir.path());
    fs::write(dir.path().join("c.toml"), "[input]\nset = \"square.txt\"\n[curvature]\neta = 2\n").unwrap();
    let o = run(dir.path(), &["curvature", "--config", "c.toml", "--eta", "3", "--n", "8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("# [curvature] eta = 3  (flag)"), "{text}");
    assert!(text.contains("# [input] set = \"square.txt\"  (file)"), "{text}");
    assert!(text.contains("# [curvature] q = 2.0  (default)"), "{text}");
    assert!(stderr(&o).contains("override: [curvature] eta = 3"));
    let quiet = run(dir.path(), &["--quiet", "curvature", "--config", "c.toml", "--eta", "3", "--n", "8"]);
    assert!(quiet.stderr.is_empty());
    assert_eq!(quiet.stdout, o.stdout);
}

#[test]
fn energy_of_minimizer_matches_reported_minimum() {
    let dir = tempfile::tempdir().unwrap();
    write_square(dir.path());
    fs::write(
        dir.path().join("m.toml"),
        "[domain]\ndim = 2\neps = 0.125\nn = 8\n[input]\nset = \"square.txt\"\n[load]\nstrain = [0.05, 0.0, 0.0, -0.02]\n",
    )
    .unwrap();
    let m = run(dir.path(), &["--quiet", "minimize", "--config", "m.toml"]);
    assert_eq!(m.status.code(), Some(0), "{}", stderr(&m));
    let min = stdout(&m);
    assert!(min.contains("converged = true"), "{min}");
    let disp = dir.path().join("out/displacement.txt");
    let e = run(
        dir.path(),
        &["--quiet", "energy", "--set", "square.txt", "--n", "8", "--displacement", disp.to_str().unwrap()],
    );
    assert_eq!(e.status.code(), Some(0), "{}", stderr(&e));
    let (e_min, e_eval) = (value(&min, "energy"), value(&stdout(&e), "elastic_energy"));
    assert!((e_min - e_eval).abs() <= 1e-10 * e_min, "{e_min} vs {e_eval}");
    assert!(e_min <= value(&min, "initial_energy"));
}
