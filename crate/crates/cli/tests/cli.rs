use std::path::Path;
use std::process::{Command, Output};

fn conley(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_conley"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn analyze_writes_graph_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = conley(&["analyze", "--system", "doublewell1d", "--depth", "128"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("3 Morse sets"), "{text}");
    for f in ["graph.json", "graph.dot", "morse_graph.json", "morse_graph.dot", "recurrent.json", "analyze.json"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let dot = std::fs::read_to_string(dir.path().join("morse_graph.dot")).unwrap();
    assert!(dot.starts_with("digraph"));
}

#[test]
fn lyapunov_constructions_write_fields() {
    for kind in ["pair", "morse", "complete"] {
        let dir = tempfile::tempdir().unwrap();
        let o = conley(&["lyapunov", "--system", "doublewell1d", "--construction", kind], dir.path());
        assert_eq!(code(&o), 0, "{kind}: {}", stderr(&o));
        for f in ["pair.json", "field.json", "field.csv", "field_plot.csv"] {
            assert!(dir.path().join(f).is_file(), "{kind}: missing {f}");
        }
        let csv = std::fs::read_to_string(dir.path().join("field.csv")).unwrap();
        assert!(csv.starts_with("box_id,x0,value\n"));
    }
}

#[test]
fn bad_pair_selector_lists_choices() {
    let dir = tempfile::tempdir().unwrap();
    let o = conley(&["lyapunov", "--system", "doublewell1d", "--construction", "pair", "--pair", "99"], dir.path());
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("pair 99") && err.contains("0: down-set"), "{err}");
}

#[test]
fn filtration_success_and_named_failure() {
    let dir = tempfile::tempdir().unwrap();
    let o = conley(&["filtration", "--system", "doublewell1d"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("4 levels"));
    assert!(dir.path().join("filtration.json").is_file());

    let dir = tempfile::tempdir().unwrap();
    let o = conley(&["filtration", "--system", "doublewell1d", "--depth", "8"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("level"), "{}", stderr(&o));
    assert!(dir.path().join("filtration_failure.json").is_file());
}

#[test]
fn verify_exit_status_follows_the_verdict() {
    let dir = tempfile::tempdir().unwrap();
    let o = conley(&["verify", "--system", "doublewell1d"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(dir.path().join("verify.json").is_file() && dir.path().join("verify.txt").is_file());

    let dir = tempfile::tempdir().unwrap();
    let o = conley(&["verify", "--system", "doublewell1d", "--depth", "8"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn configuration_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{"dimension": 1, "domain": [[0, 1]], "step": 0.01, "feild": "saddle1d"}"#).unwrap();
    let missing = dir.path().join("missing.json");
    let cases: Vec<Vec<&str>> = vec![
        vec!["analyze", "--system", "nosuch"],
        vec!["analyze", "--system", "saddle1d", "--depth", "0"],
        vec!["analyze", "--system", "saddle1d", "--dt", "-1"],
        vec!["analyze", "--system", "hopf2d", "--depth", "4,4,4"],
        vec!["analyze"],
        vec!["analyze", "--system-file", spec.to_str().unwrap()],
        vec!["analyze", "--system-file", missing.to_str().unwrap()],
    ];
    for args in cases {
        let o = conley(&args, &dir.path().join("out"));
        assert_eq!(code(&o), 2, "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn system_file_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("cubic.json");
    std::fs::write(
        &spec,
        r#"{"dimension": 1, "domain": [[-2, 2]], "step": 0.01,
            "field": [{"coeffs": [1.0], "exponents": [1]}, {"coeffs": [-1.0], "exponents": [3]}]}"#,
    )
    .unwrap();
    let o = conley(&["analyze", "--system-file", spec.to_str().unwrap(), "--depth", "128"], &dir.path().join("out"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("3 Morse sets"));
}
