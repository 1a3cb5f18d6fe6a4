use std::fs;
use std::process::{Command, Output};

fn qurd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qurd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn simulate_is_repeatable() {
    let a = qurd(&["simulate", "--scenario", "replacement", "--seed", "9"]);
    let b = qurd(&["simulate", "--scenario", "replacement", "--seed", "9"]);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert!(stdout(&a).starts_with("0.000000\tm0\ttransition\t-\tavailable\tinit\n"));
}

#[test]
fn scenario_files_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("tiny.scn");
    fs::write(&path, "# one job\nn_machines = 1\nclient.0.nb_nodes = 1\n").unwrap();
    let out = qurd(&[
        "simulate",
        "--scenario",
        path.to_str().unwrap(),
        "--horizon",
        "4",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("Launch from=c0 to=m0"));
    assert!(!text.contains("Ack3"));
}

#[test]
fn verify_clean_trace_holds() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("run.trace");
    let out = qurd(&[
        "simulate",
        "--scenario",
        "deadlock-wait-semantics",
        "--out",
        trace.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let t = trace.to_str().unwrap();
    let v = qurd(&["verify", "--trace", t, "--property", "exclusive-access"]);
    assert_eq!(v.status.code(), Some(0));
    assert!(stdout(&v).contains("holds\ttrue"));
    let c = qurd(&[
        "verify",
        "--trace",
        t,
        "--property",
        "complete",
        "--scenario",
        "deadlock-wait-semantics",
    ]);
    assert_eq!(c.status.code(), Some(0));
}

#[test]
fn verify_reports_a_double_grant() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("bad.trace");
    fs::write(
        &trace,
        "0.000000\tm0\ttransition\t-\tavailable\tinit\n\
         2.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c0 job=j0 attempt=1\n\
         3.000000\tm0\tsend\t-\t-\tReplyOK from=m0 to=c1 job=j1 attempt=1\n",
    )
    .unwrap();
    let out_doc = dir.path().join("result.txt");
    let v = qurd(&[
        "verify",
        "--trace",
        trace.to_str().unwrap(),
        "--property",
        "exclusive-access",
        "--out",
        out_doc.to_str().unwrap(),
    ]);
    assert_eq!(v.status.code(), Some(1));
    let doc = fs::read_to_string(out_doc).unwrap();
    assert!(doc.contains("holds\tfalse"));
    assert!(doc.contains("violations\t1"));
    assert!(doc.contains("3.000000\tm0,c0,c1\t"));
}

#[test]
fn hold_deadlock_fails_completion() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("hold.trace");
    qurd(&[
        "simulate",
        "--scenario",
        "deadlock-hold",
        "--out",
        trace.to_str().unwrap(),
    ]);
    let v = qurd(&[
        "verify",
        "--trace",
        trace.to_str().unwrap(),
        "--property",
        "complete",
    ]);
    assert_eq!(v.status.code(), Some(1));
    assert!(stdout(&v).contains("not done: ended in reserve"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.scn");
    fs::write(&bad, "n_machines = 1\nmachine.lambda = 2\n").unwrap();
    for args in [
        vec!["simulate", "--scenario", bad.to_str().unwrap()],
        vec!["simulate", "--scenario", "no-such-preset"],
        vec!["simulate"],
        vec![
            "estimate",
            "--scenario",
            "replacement",
            "--property",
            "deadline",
        ],
        vec![
            "estimate",
            "--scenario",
            "replacement",
            "--property",
            "no-dead-transitions",
        ],
        vec![
            "cartography",
            "--scenario",
            "replacement",
            "--property",
            "complete",
            "--axis",
            "bogus=1",
        ],
        vec![
            "verify",
            "--trace",
            "/nonexistent/trace",
            "--property",
            "complete",
        ],
    ] {
        let out = qurd(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn estimate_prints_an_interval() {
    let out = qurd(&[
        "estimate",
        "--scenario",
        "deadlock-fail-semantics",
        "--property",
        "complete",
        "--runs",
        "200",
    ]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("property=complete p_hat="), "{text}");
    assert!(text.contains("ci95=[") && text.trim_end().ends_with("runs=200"));
}

#[test]
fn oracle_prints_exact_fraction() {
    let out = qurd(&[
        "oracle",
        "--scenario",
        "replacement",
        "--property",
        "complete",
    ]);
    assert!(out.status.success());
    assert_eq!(
        stdout(&out),
        "property=complete probability=24/25 (0.960000) leaves=3\n"
    );
}

#[test]
fn cartography_is_thread_independent() {
    let run = |threads: &str| {
        qurd(&[
            "cartography",
            "--scenario",
            "replacement",
            "--property",
            "complete",
            "--runs",
            "100",
            "--axis",
            "machine.lambda=0,0.3",
            "--axis",
            "deadline=15,30",
            "--threads",
            threads,
        ])
    };
    let a = run("1");
    let b = run("3");
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert_eq!(
        text.lines().next(),
        Some("point_index,machine.lambda,deadline,p_hat,ci_low,ci_high,runs")
    );
    assert_eq!(text.lines().count(), 5);
}
