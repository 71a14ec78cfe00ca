use std::path::Path;
use std::process::{Command, Output};

fn sim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim")).args(args).arg("--out").arg(out).output().expect("sim runs")
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn accuracy_writes_expected_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["eval", "accuracy", "--seed", "3", "--subjects", "2", "--reps", "1"], dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let results = read(&dir.path().join("results.csv"));
    let mut lines = results.lines();
    assert_eq!(
        lines.next(),
        Some("experiment,subject,point_id,target_x_cm,target_y_cm,realized_x_cm,realized_y_cm,e_d_cm,pick,place")
    );
    assert_eq!(lines.count(), 18);
    let stats = read(&dir.path().join("stats.csv"));
    assert!(stats.starts_with("point_id,n,mean_cm,std_cm,min_cm,max_cm\n"));
    assert_eq!(stats.lines().count(), 1 + 9 + 1);
    let meta: serde_json::Value = serde_json::from_str(&read(&dir.path().join("meta.json"))).unwrap();
    assert_eq!(meta["rng"], "chacha8");
    assert_eq!(meta["master_seed"], 3);
}

#[test]
fn robot_and_pickplace_are_deterministic() {
    for exp in ["robot", "pickplace"] {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        assert!(sim(&["eval", exp, "--seed", "7"], &a).status.success());
        assert!(sim(&["eval", exp, "--seed", "7"], &b).status.success());
        for f in ["results.csv", "stats.csv", "meta.json"] {
            assert_eq!(read(&a.join(f)), read(&b.join(f)), "{exp}/{f}");
        }
    }
}

#[test]
fn different_seeds_differ() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(sim(&["eval", "accuracy", "--seed", "1"], &a).status.success());
    assert!(sim(&["eval", "accuracy", "--seed", "2"], &b).status.success());
    assert_ne!(read(&a.join("results.csv")), read(&b.join("results.csv")));
}

#[test]
fn pickplace_protocol_splits_discarded_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["eval", "pickplace", "--reps", "12", "--discard", "2", "--seed", "5"], dir.path());
    assert!(o.status.success());
    assert_eq!(read(&dir.path().join("results.csv")).lines().count(), 1 + 10);
    assert_eq!(read(&dir.path().join("discarded.csv")).lines().count(), 1 + 2);
    for line in read(&dir.path().join("results.csv")).lines().skip(1) {
        let cols: Vec<_> = line.split(',').collect();
        let (pick, place) = (cols[8], cols[9]);
        assert!(matches!(pick, "0" | "1"));
        assert_eq!(place == "null", pick == "0", "{line}");
    }
}

#[test]
fn replay_reproduces_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let eval = dir.path().join("eval");
    for exp in ["accuracy", "robot", "pickplace"] {
        let o = sim(&["eval", exp, "--seed", "9", "--subjects", "1", "--reps", "3", "--discard", "1", "--trace"], &eval);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let trace = eval.join("trace.csv");
        assert!(read(&trace).starts_with("# frame=camera\n"));
        let rep = dir.path().join(format!("replay-{exp}"));
        let o = Command::new(env!("CARGO_BIN_EXE_sim"))
            .args(["replay", "--trace"])
            .arg(&trace)
            .arg("--out")
            .arg(&rep)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        assert_eq!(read(&rep.join("results.csv")), read(&eval.join("results.csv")), "{exp}");
        assert!(read(&rep.join("events.jsonl")).contains("\"kind\":\"fixation\""));
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["eval", "accuracy", "--sigma=-1"], dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = sim(&["eval", "pickplace", "--reps", "2", "--discard", "2"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = sim(&["eval", "robot", "--misalign", "5:0.3,0"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.cfg");
    std::fs::write(&bad, "w_i = 1600\nnonsense\n").unwrap();
    let o = sim(&["eval", "accuracy", "--calib", bad.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_sim")).arg("frobnicate").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reference_calibration_file_matches_builtin() {
    let cfg = concat!(env!("CARGO_MANIFEST_DIR"), "/../../calib/paper.cfg");
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(sim(&["eval", "accuracy", "--seed", "4", "--calib", cfg], &a).status.success());
    assert!(sim(&["eval", "accuracy", "--seed", "4"], &b).status.success());
    assert_eq!(read(&a.join("results.csv")), read(&b.join("results.csv")));
}

#[test]
fn malformed_trace_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let run = |text: &str| {
        let p = dir.path().join("t.csv");
        std::fs::write(&p, text).unwrap();
        Command::new(env!("CARGO_BIN_EXE_sim"))
            .args(["replay", "--trace"])
            .arg(&p)
            .arg("--out")
            .arg(dir.path().join("out"))
            .output()
            .unwrap()
    };
    assert_eq!(run("t,x,y,valid\n0,1,2,1\n").status.code(), Some(3), "missing frame line");
    assert_eq!(run("# frame=interface\nt,x,y,valid\n0,1,2,1\n0.5,abc,2,1\n").status.code(), Some(3));
    assert_eq!(run("# frame=interface\nt,x,y,valid\n1,1,2,1\n0.5,1,2,1\n").status.code(), Some(3), "time going back");
    // camera samples need the homography from an annotated segment
    assert_eq!(run("# frame=camera\nt,x,y,valid\n0,1,2,1\n").status.code(), Some(3));
    let missing = Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(["replay", "--trace", "/nonexistent/trace.csv", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn unannotated_interface_trace_replays() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.csv");
    // 2.5 s of steady gaze at the workspace center
    let mut text = String::from("# frame=interface\nt,x,y,valid\n");
    for k in 0..125 {
        text.push_str(&format!("{},800,485,1\n", k as f64 / 50.0));
    }
    std::fs::write(&p, text).unwrap();
    let out = dir.path().join("out");
    let o = Command::new(env!("CARGO_BIN_EXE_sim")).args(["replay", "--trace"]).arg(&p).arg("--out").arg(&out).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let events = read(&out.join("events.jsonl"));
    assert_eq!(events.lines().count(), 1, "{events}");
    assert!(events.contains("\"kind\":\"fixation\""));
    assert!(!out.join("results.csv").exists());
}
