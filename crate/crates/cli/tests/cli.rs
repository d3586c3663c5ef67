use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_invsynth"))
}

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn mini(name: &str) -> PathBuf {
    root().join("problems/mini").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn solve_c1_and_validate_the_witness() {
    let o = run(&["solve", mini("c1.sl").to_str().unwrap(), "--policy", "expert", "--timeout", "60"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("sat"));
    let witness = lines.collect::<Vec<_>>().join("\n");
    assert!(witness.starts_with("(define-fun inv-f ((x Int) (y Int) (z Int)) Bool"));

    let dir = tempfile::tempdir().unwrap();
    let w = dir.path().join("w.smt2");
    fs::write(&w, &witness).unwrap();
    let v = run(&["validate", mini("c1.sl").to_str().unwrap(), w.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));
    assert_eq!(stdout(&v).trim(), "valid");
}

#[test]
fn validate_examples() {
    let dir = tempfile::tempdir().unwrap();
    let c1 = mini("c1.sl");
    let known = dir.path().join("known.smt2");
    fs::write(
        &known,
        "(define-fun inv-f ((x Int) (y Int) (z Int)) Bool (and (= (+ x y) z) (>= y 0)))",
    )
    .unwrap();
    let o = run(&["validate", c1.to_str().unwrap(), known.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "valid");

    let t = dir.path().join("true.smt2");
    fs::write(&t, "(define-fun inv-f ((x Int) (y Int) (z Int)) Bool true)").unwrap();
    let o = run(&["validate", c1.to_str().unwrap(), t.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.starts_with("invalid\npost counterexample: ~F("), "{out}");

    let bad = dir.path().join("bad.smt2");
    fs::write(&bad, "(define-fun inv-f ((x Int) (y Int)) Bool true)").unwrap();
    let o = run(&["validate", c1.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("takes 2 arguments"));
}

#[test]
fn solve_outcomes_and_exit_codes() {
    let o = run(&["solve", mini("unsat_toy.chc").to_str().unwrap(), "--policy", "random", "--timeout", "60"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "unsat");

    let o = run(&["solve", mini("c1.sl").to_str().unwrap(), "--timeout", "0.001"]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stdout(&o).trim(), "timeout");

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.chc");
    fs::write(&p, "(vars (x))\n(pre (= x 0))\n(trans (= x! (div x 2)))\n(post true)\n").unwrap();
    let o = run(&["solve", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.chc:3:"), "{err}");

    let o = run(&["solve", mini("c1.sl").to_str().unwrap(), "--policy", "clever"]);
    assert_eq!(o.status.code(), Some(1));
}

/// `problem -> outcome` rows of a single-policy report, plus the total line.
fn parse_report(text: &str) -> (BTreeMap<String, (String, f64)>, String) {
    let mut rows = BTreeMap::new();
    let mut total = String::new();
    for l in text.lines() {
        if let Some(t) = l.strip_prefix("# total ") {
            total = t.to_string();
        } else if !l.starts_with('#') {
            let f: Vec<&str> = l.split_whitespace().collect();
            rows.insert(f[0].to_string(), (f[1].to_string(), f[2].parse().unwrap()));
        }
    }
    (rows, total)
}

#[test]
fn bench_is_consistent_across_job_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out1 = dir.path().join("r1.txt");
    let problems = root().join("problems/mini");
    let o = run(&[
        "bench", "--problems", problems.to_str().unwrap(), "--policy", "expert", "--timeout", "60", "--jobs", "1",
        "--out", out1.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let (rows1, total) = parse_report(&fs::read_to_string(&out1).unwrap());
    assert_eq!(rows1.len(), 11);
    // totals recomputed from rows
    let count = |k: &str| rows1.values().filter(|(o, _)| o == k).count();
    let time: f64 = rows1.values().map(|(_, t)| t).sum();
    let f: Vec<&str> = total.split_whitespace().collect();
    assert_eq!(f[0].parse::<usize>().unwrap(), 11);
    assert_eq!(f[2].parse::<usize>().unwrap(), count("sat"));
    assert_eq!(f[4].parse::<usize>().unwrap(), count("unsat"));
    assert_eq!(f[6].parse::<usize>().unwrap(), count("timeout"));
    assert!((f[10].parse::<f64>().unwrap() - time).abs() < 0.01);
    // every sat row has a witness file
    let wdir = dir.path().join("r1.txt.witnesses/0-expert");
    for (name, (outcome, _)) in &rows1 {
        assert_eq!(outcome == "sat", wdir.join(format!("{name}.smt2")).exists(), "{name}");
    }

    let o = run(&[
        "bench", "--problems", problems.to_str().unwrap(), "--policy", "expert", "--timeout", "60", "--jobs", "4",
    ]);
    let (rows4, _) = parse_report(&stdout(&o));
    let outcomes = |r: &BTreeMap<String, (String, f64)>| r.iter().map(|(k, v)| (k.clone(), v.0.clone())).collect::<Vec<_>>();
    assert_eq!(outcomes(&rows1), outcomes(&rows4));
}

#[test]
fn bench_joint_row() {
    let dir = tempfile::tempdir().unwrap();
    for f in ["lockstep.chc", "unsat_toy.chc"] {
        fs::copy(mini(f), dir.path().join(f)).unwrap();
    }
    let o = run(&[
        "bench", "--problems", dir.path().to_str().unwrap(), "--policy", "expert", "--policy", "random",
        "--timeout", "30",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("# policy expert+random"), "{out}");
    assert_eq!(out.matches("# total 2 ").count(), 3);
}

#[test]
fn train_mc_small_run_and_empty_dir() {
    let empty = tempfile::tempdir().unwrap();
    let o = run(&["train-mc", "--problems", empty.path().to_str().unwrap(), "--epochs", "1"]);
    assert_eq!(o.status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    for f in ["lockstep.chc", "unsat_toy.chc"] {
        fs::copy(mini(f), dir.path().join(f)).unwrap();
    }
    let table = dir.path().join("t.txt");
    let o = run(&[
        "train-mc", "--problems", dir.path().to_str().unwrap(), "--epochs", "2", "--episode-timeout", "10",
        "--out", table.to_str().unwrap(), "--seed", "4",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(&table).unwrap();
    let report = fs::read_to_string(dir.path().join("t.txt.report")).unwrap();
    assert_eq!(report.lines().filter(|l| !l.starts_with('#')).count(), 4);
    for l in text.lines() {
        assert_eq!(l.split_whitespace().count(), 4, "{l}");
    }
    let spec = format!("mc:{}", table.display());
    let o = run(&["solve", mini("lockstep.chc").to_str().unwrap(), "--policy", &spec, "--timeout", "10"]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg");
    fs::write(&cfg, "# defaults\npolicy clever\ntimeout 0.001\n").unwrap();
    let c1 = mini("c1.sl");
    let o = run(&["--config", cfg.to_str().unwrap(), "solve", c1.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "the file's bad policy is used");
    let o = run(&["--config", cfg.to_str().unwrap(), "solve", c1.to_str().unwrap(), "--policy", "expert"]);
    assert_eq!(o.status.code(), Some(2), "the file's timeout applies");
}

#[test]
fn serve_env_over_stdio() {
    let mut child = bin()
        .args(["serve-env", "--transport", "stdio", "--problems", root().join("problems/mini").to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    {
        let stdin = child.stdin.as_mut().unwrap();
        writeln!(stdin, r#"{{"type":"reset","problem":"lockstep.chc","time_limit_s":20}}"#).unwrap();
        writeln!(stdin, r#"{{"type":"close"}}"#).unwrap();
    }
    let o = child.wait_with_output().unwrap();
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2, "{out}");
    assert!(lines[0].contains(r#""type":"state""#));
    assert_eq!(lines[1], r#"{"type":"closed"}"#);

    let o = run(&["serve-env", "--transport", "carrier-pigeon"]);
    assert_eq!(o.status.code(), Some(64));
}
