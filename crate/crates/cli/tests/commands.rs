use std::fs;
use std::path::Path;
use std::process::Command;

fn swarmsteer(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_swarmsteer"))
        .args(args)
        .output()
        .expect("binary runs");
    assert!(
        out.status.success(),
        "swarmsteer {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        swarmsteer(&[
            "simulate",
            "--trials",
            "300",
            "--seed",
            "5",
            "--error",
            "digitized",
            "--out",
            out.to_str().unwrap(),
        ]);
        files(&out)
    };
    let a = run("a");
    let b = run("b");
    assert_eq!(a.len(), 4);
    assert_eq!(a, b);
    let c = {
        let out = tmp.path().join("c");
        swarmsteer(&[
            "simulate",
            "--trials",
            "300",
            "--seed",
            "6",
            "--error",
            "digitized",
            "--out",
            out.to_str().unwrap(),
        ]);
        files(&out)
    };
    assert_ne!(a, c);
}

#[test]
fn threshold_table_and_table_lookup() {
    let tmp = tempfile::tempdir().unwrap();
    let t1 = tmp.path().join("t1.csv");
    let t2 = tmp.path().join("t2.csv");
    for t in [&t1, &t2] {
        swarmsteer(&[
            "threshold-table",
            "--trials-per-cell",
            "40",
            "--crossovers",
            "0,0.1,0.25",
            "--taus",
            "0.5,0.8,0.95",
            "--budgets",
            "10,25,50",
            "--out",
            t.to_str().unwrap(),
        ]);
    }
    assert_eq!(fs::read(&t1).unwrap(), fs::read(&t2).unwrap());
    assert_eq!(
        fs::read(t1.with_extension("json")).unwrap(),
        fs::read(t2.with_extension("json")).unwrap()
    );
    let text = fs::read_to_string(&t1).unwrap();
    assert_eq!(text.lines().next().unwrap(), "crossover,10,25,50");
    assert_eq!(text.lines().count(), 4);

    let out = tmp.path().join("sim");
    let stdout = swarmsteer(&[
        "simulate",
        "--trials",
        "50",
        "--assumed-p",
        "0.2",
        "--budget",
        "25",
        "--table",
        t1.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ])
    .stdout;
    assert!(String::from_utf8(stdout).unwrap().contains("tau"));
}

#[test]
fn sweep_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let out = tmp.path().join(name);
        swarmsteer(&[
            "sweep",
            "--alphabet-sizes",
            "3",
            "--lengths",
            "2,4",
            "--trials",
            "60",
            "--resamples",
            "200",
            "--max-inputs",
            "20",
            "--out",
            out.to_str().unwrap(),
        ]);
        fs::read(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let text = String::from_utf8(a).unwrap();
    // 2 algorithms x 2 sizes x 6 metrics x 20 inputs + header
    assert_eq!(text.lines().count(), 2 * 2 * 6 * 20 + 1);
    assert!(text.contains("pm/b3r4/accuracy"));
    assert!(text.contains("stepwise/b3r2/norm_alph_dev"));
}

#[test]
fn bin_report_from_trial_log() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    swarmsteer(&[
        "simulate",
        "--trials",
        "200",
        "--out",
        sim.to_str().unwrap(),
    ]);
    let log = sim.join("trials.jsonl");
    let run = |name: &str| {
        let out = tmp.path().join(name);
        swarmsteer(&[
            "bin-report",
            "--trials",
            log.to_str().unwrap(),
            "--resamples",
            "100",
            "--out",
            out.to_str().unwrap(),
        ]);
        files(&out)
    };
    let a = run("r1");
    assert_eq!(a, run("r2"));
    let bins = String::from_utf8(a.iter().find(|f| f.0 == "bins.csv").unwrap().1.clone()).unwrap();
    let labels: Vec<&str> = bins
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(labels, ["short", "medium", "long", "all"]);
}

#[test]
fn bad_arguments_fail_cleanly() {
    for args in [
        vec!["simulate", "--error", "nonsense", "--trials", "1"],
        vec!["simulate", "--budget", "25"],
        vec!["simulate", "--dictionary", "synthetic:3", "--trials", "1"],
        vec!["bin-report", "--trials", "/nonexistent.jsonl"],
    ] {
        let tmp = tempfile::tempdir().unwrap();
        let out = Command::new(env!("CARGO_BIN_EXE_swarmsteer"))
            .args(&args)
            .current_dir(tmp.path())
            .output()
            .unwrap();
        assert!(!out.status.success(), "{args:?} should fail");
    }
}
