use std::path::PathBuf;
use std::process::{Command, Output};

use flatoct::fop;

fn programs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../programs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flatoct")).args(args).env_remove("FLATOCT_BUDGET").output().unwrap()
}

fn program(name: &str) -> String {
    programs().join(name).to_string_lossy().into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn tmp(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("flatoct-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn check_exit_codes() {
    let o = run(&["check", &program("running.fop")]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).starts_with("UNREACHABLE_UP_TO_BOUND"));

    let o = run(&["check", &program("running_one.fop")]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("word: t1 call[t2] t4 ret[t2] t3\n"), "{}", stdout(&o));

    let bad = tmp("bad.fop", "vars: x\naxiom: S\nprod 1: S -> a\nrel a: x > = 0\nbound: (a)*\n");
    let o = run(&["check", &bad]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.fop:4:12:"));

    let o = run(&["check", &program("missing.fop")]);
    assert_eq!(o.status.code(), Some(3));

    let o = Command::new(env!("CARGO_BIN_EXE_flatoct"))
        .args(["check", &program("running_reach.fop")])
        .env("FLATOCT_BUDGET", "3")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2), "{}", stdout(&o));
}

#[test]
fn fixed_index_and_oracle() {
    let o = run(&["check", "--k", "1", &program("running_one.fop")]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    let o = run(&["check", "--k", "2", &program("running_one.fop")]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let o = run(&["check", "--oracle", "--word-bound", "8", &program("running_reach.fop")]);
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["check", "--oracle", "--word-bound", "9", &program("running_reach.fop")]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn json_is_deterministic() {
    let strip = |o: Output| {
        let mut v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
        v.as_object_mut().unwrap().remove("timings_ms");
        v
    };
    let a = strip(run(&["check", "--json", &program("running_reach.fop")]));
    let b = strip(run(&["check", "--json", &program("running_reach.fop")]));
    assert_eq!(a, b);
    assert_eq!(a["verdict"], "REACHABLE");
    for key in ["control_word", "iterations", "word", "relation"] {
        assert!(a["witness"].get(key).is_some(), "{key}");
    }
    for key in ["K", "k", "iter", "word"] {
        assert!(a["bounds"].get(key).is_some(), "{key}");
    }
    assert!(a["sizes"]["intersection"].as_u64().unwrap() > 0);
}

#[test]
fn stages() {
    let f = program("running.fop");
    let o = run(&["stage", &f, "--stage", "semantics", "--word", "t1 call[t2] t4 ret[t2] t3"]);
    assert_eq!(stdout(&o), "x = 1, x' = 1, z' = 2\n");

    let o = run(&["stage", &f, "--stage", "automaton", "--k", "2"]);
    let dump = stdout(&o);
    for edge in [
        "X1{0} --p1--> X2{0}",
        "X2{0} --p2--> X1{0}X3{0}",
        "X1{0}X3{0} --p1--> X3{0}X2{1}",
        "X1{0}X3{0} --p4--> X3{0}",
        "X3{0} --p3--> eps",
    ] {
        assert!(dump.contains(edge), "{edge}\n{dump}");
    }
    assert!(!dump.contains("X3{0}X2{1} --p2-->"));

    let o = run(&["stage", &f, "--stage", "oracle", "--word-bound", "0"]);
    assert_eq!((o.status.code(), stdout(&o)), (Some(0), String::new()));
    let o = run(&["stage", &f, "--stage", "oracle", "--word-bound", "6"]);
    assert_eq!(stdout(&o), "t4\nt1 call[t2] t4 ret[t2] t3\n");

    for s in ["intersect", "bowtie", "controlset"] {
        let o = run(&["stage", &f, "--stage", s]);
        assert_eq!(o.status.code(), Some(0), "{s}");
        assert!(stdout(&o).contains("prod") || s == "controlset");
    }
    let o = run(&["stage", &f, "--stage", "semantics"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn pilp_instances() {
    let o = run(&["pilp", &program("pilp_feasible.txt")]);
    let f = tmp("feasible.fop", &stdout(&o));
    assert_eq!(run(&["check", &f]).status.code(), Some(0));
    let out = tmp("infeasible.fop", "");
    assert_eq!(run(&["pilp", &program("pilp_infeasible.txt"), "-o", &out]).status.code(), Some(0));
    assert_eq!(run(&["check", "--iter-bound", "20", &out]).status.code(), Some(1));
    let empty = tmp("empty.txt", "pilp 2 0\n");
    let f = tmp("empty.fop", &stdout(&run(&["pilp", &empty])));
    assert_eq!(run(&["check", &f]).status.code(), Some(0));
    let bad = tmp("bad.txt", "pilp 2 1\n1 2\n");
    assert_eq!(run(&["pilp", &bad]).status.code(), Some(3));
    let a = stdout(&run(&["pilp", "--random", "--seed", "7"]));
    assert_eq!(a, stdout(&run(&["pilp", "--random", "--seed", "7"])));
    assert!(fop::parse(&a).is_ok());
}

#[test]
fn shipped_programs_round_trip() {
    let mut n = 0;
    for e in std::fs::read_dir(programs()).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "fop") {
            let f = fop::parse(&std::fs::read_to_string(&p).unwrap()).unwrap();
            let text = fop::render(&f);
            let g = fop::parse(&text).unwrap();
            assert_eq!(fop::render(&g), text, "{}", p.display());
            assert_eq!(g.program.grammar, f.program.grammar);
            assert_eq!(g.program.labels, f.program.labels);
            assert_eq!(g.bound, f.bound);
            assert_eq!(g.query, f.query);
            n += 1;
        }
    }
    assert!(n >= 4);
}
