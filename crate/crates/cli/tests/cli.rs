use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;
use wavekernel::io::{read_potential_spec, write_snapshot};
use wavekernel::linalg::C64;
use wavekernel::propagator::propagate;
use wavekernel::{solve_goursat, Bump, Control, PotentialGrid};

const CONSTANT_Q: &str = "kind = constant\nvalue = 1\ndimension = 1\nx_max = 2\n";
const BASE: &str = "potential = q.txt\nT = 1\nh = 0.02\nN = 50\ntrials = 10\ncontrol = bump\ncontrol.start = 0.1\ncontrol.end = 0.9\n";

fn setup(potential: &str, config: &str) -> TempDir {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("q.txt"), potential).unwrap();
    fs::write(dir.path().join("run.cfg"), config).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str], out: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wavekernel"))
        .args(args)
        .arg("--config")
        .arg(dir.join("run.cfg"))
        .arg("--out")
        .arg(dir.join(out))
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn propagate_matches_the_library_bit_for_bit() {
    let dir = setup(CONSTANT_Q, BASE);
    let o = run(dir.path(), &["propagate"], "out");
    assert!(o.status.success(), "{}", stderr(&o));

    let p = PotentialGrid::build(&read_potential_spec(&dir.path().join("q.txt")).unwrap()).unwrap();
    let field = solve_goursat(&p, 1.0, 0.02, 1e-10).unwrap();
    let f = Control::bump(1.0, Bump::new(0.1, 0.9).unwrap(), vec![C64::new(1.0, 0.0)]).unwrap();
    let snap = propagate(&p, &field, &f, 1.0, 50).unwrap();
    let mut expected = Vec::new();
    write_snapshot(&mut expected, &snap).unwrap();
    assert_eq!(fs::read(dir.path().join("out/snapshot.csv")).unwrap(), expected);
}

#[test]
fn malformed_potential_is_an_input_error() {
    let dir = setup("kind = constant\nvalue = one\ndimension = 1\nx_max = 2\n", BASE);
    let o = run(dir.path(), &["kernel"], "out");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("value"), "{}", stderr(&o));
}

#[test]
fn non_hermitian_potential_is_an_input_error() {
    let q = "kind = constant\nvalue = 1 2; 0 1\nx_max = 2\n";
    let dir = setup(q, &BASE.replace("control = bump", "control = bump\ncontrol.coeffs = 1 1"));
    let o = run(dir.path(), &["kernel"], "out");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Hermitian"), "{}", stderr(&o));
}

#[test]
fn missing_config_and_kernel_dump_are_input_errors() {
    let dir = setup(CONSTANT_Q, &format!("{BASE}kernel = absent.csv\n"));
    let o = run(dir.path(), &["propagate"], "out");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("absent"), "{}", stderr(&o));

    let o = Command::new(env!("CARGO_BIN_EXE_wavekernel")).arg("kernel").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn kernel_dump_feeds_later_commands() {
    let dir = setup(CONSTANT_Q, BASE);
    assert!(run(dir.path(), &["kernel"], "k").status.success());
    assert!(run(dir.path(), &["propagate"], "fresh").status.success());
    fs::write(dir.path().join("run.cfg"), format!("{BASE}kernel = k/kernel.csv\n")).unwrap();
    let o = run(dir.path(), &["propagate"], "reused");
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        fs::read(dir.path().join("fresh/snapshot.csv")).unwrap(),
        fs::read(dir.path().join("reused/snapshot.csv")).unwrap()
    );
}

#[test]
fn wrong_length_snapshot_is_rejected() {
    let dir = setup(CONSTANT_Q, BASE);
    assert!(run(dir.path(), &["propagate"], "out").status.success());
    let cfg = BASE.replace("N = 50", "N = 40") + "snapshot = out/snapshot.csv\n";
    fs::write(dir.path().join("run.cfg"), cfg).unwrap();
    let o = run(dir.path(), &["invert"], "inv");
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("intervals"), "{}", stderr(&o));
}

#[test]
fn invert_recovers_the_control() {
    let dir = setup(CONSTANT_Q, &format!("{BASE}snapshot = out/snapshot.csv\n"));
    assert!(run(dir.path(), &["propagate"], "out").status.success());
    let o = run(dir.path(), &["invert"], "inv");
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("inv/invert.json")).unwrap()).unwrap();
    assert!(summary["relative_error"].as_f64().unwrap() <= 1e-10);
}

#[test]
fn validation_failure_names_the_check() {
    let dir = setup(CONSTANT_Q, &format!("{BASE}validate.oracle_rel_l2 = 1e-12\n"));
    let o = run(dir.path(), &["validate"], "out");
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("oracle_rel_l2"), "{}", stderr(&o));
    assert!(dir.path().join("out/validate.json").exists());

    fs::write(dir.path().join("run.cfg"), BASE).unwrap();
    let o = run(dir.path(), &["validate"], "ok");
    assert!(o.status.success(), "{}", stderr(&o));
}

#[test]
fn non_convergence_exits_with_two() {
    let q = "kind = constant\nvalue = 1e6\ndimension = 1\nx_max = 4\n";
    let dir = setup(q, &BASE.replace("T = 1", "T = 2").replace("h = 0.02", "h = 0.5"));
    let o = run(dir.path(), &["kernel"], "out");
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn outputs_are_reproducible_across_thread_counts() {
    let dir = setup(CONSTANT_Q, &format!("{BASE}seed = 7\n"));
    let names = ["bounds.json", "manifest.json"];
    assert!(run(dir.path(), &["bounds", "--threads", "1"], "a").status.success());
    assert!(run(dir.path(), &["bounds", "--threads", "3"], "b").status.success());
    for name in names {
        assert_eq!(
            fs::read(dir.path().join("a").join(name)).unwrap(),
            fs::read(dir.path().join("b").join(name)).unwrap(),
            "{name}"
        );
    }
    assert!(run(dir.path(), &["bounds", "--seed", "8"], "c").status.success());
    assert_ne!(
        fs::read(dir.path().join("a/bounds.json")).unwrap(),
        fs::read(dir.path().join("c/bounds.json")).unwrap()
    );
}

#[test]
fn zero_potential_has_a_trivial_kernel() {
    let dir = setup("kind = zero\ndimension = 2\nx_max = 2\n", &BASE.replace("control = bump", "control = bump\ncontrol.coeffs = 1 -1"));
    let o = run(dir.path(), &["kernel"], "out");
    assert!(o.status.success(), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("out/kernel.json")).unwrap()).unwrap();
    assert_eq!(s["iterations"], 1);
    for key in ["b1", "b2", "b3", "b4", "tail_bound"] {
        assert_eq!(s[key], 0.0, "{key}");
    }
    let dump = fs::read_to_string(dir.path().join("out/kernel.csv")).unwrap();
    assert!(dump.lines().skip(1).all(|l| l.split(',').skip(2).all(|v| v.parse::<f64>().unwrap() == 0.0)));

    let o = run(dir.path(), &["validate"], "val");
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("val/validate.json")).unwrap()).unwrap();
    assert_eq!(v["condition"]["cond"], 1.0);
    assert_eq!(v["certification"]["empirical_ratio"], 0.0);
}
