use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use monorecon::oracles::{dkw_margin, Beta22Cdf, Truth};
use monorecon::{Dataset, Domain};

fn monorecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_monorecon"))
        .args(args)
        .output()
        .expect("spawn monorecon")
}

fn code(args: &[&str]) -> i32 {
    monorecon(args).status.code().expect("exit code")
}

fn out_arg(dir: &Path) -> &str {
    dir.to_str().unwrap()
}

fn dataset(dir: &Path, domain: Domain) -> Dataset {
    let text = fs::read_to_string(dir.join("dataset.csv")).unwrap();
    Dataset::read_csv(domain, text.as_bytes()).unwrap()
}

fn trace_json(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("trace.json")).unwrap()).unwrap()
}

#[test]
fn synthetic_run_writes_every_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let args = [
        "run-synthetic",
        "--variant",
        "continuous",
        "--er",
        "15",
        "--iters",
        "300",
        "--seed",
        "7",
    ];
    let mut full = args.to_vec();
    full.extend(["--out", out_arg(&out)]);
    assert_eq!(code(&full), 0);
    for f in [
        "trace.csv",
        "trace.json",
        "errors.csv",
        "rates.txt",
        "dataset.csv",
    ] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let errors = fs::read_to_string(out.join("errors.csv")).unwrap();
    assert!(errors.starts_with("n,sup_err,l1_err\n"));
    assert_eq!(errors.lines().count(), 302);
}

#[test]
fn trace_calls_sum_to_the_reported_total() {
    let tmp = tempfile::tempdir().unwrap();
    for study in ["run-synthetic", "run-cdf", "run-ouq"] {
        let out = tmp.path().join(study);
        assert_eq!(code(&[study, "--iters", "25", "--out", out_arg(&out)]), 0);
        let csv = fs::read_to_string(out.join("trace.csv")).unwrap();
        let mut lines = csv.lines();
        let header: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(header, ["n", "branch", "calls", "I", "q_min", "A", "WA"]);
        let sum: u64 = lines
            .map(|l| l.split(',').nth(2).unwrap().parse::<u64>().unwrap())
            .sum();
        let total = trace_json(&out)["trace"]["total_calls"].as_u64().unwrap();
        assert_eq!(sum, total, "{study}");
    }
}

#[test]
fn config_failures_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    let o = out_arg(&out);
    let bad_toml = tmp.path().join("bad.toml");
    fs::write(&bad_toml, "exchange_rate = 15\nno_such_key = 1\n").unwrap();
    let negative = tmp.path().join("neg.toml");
    fs::write(&negative, "exchange_rate = -1.0\n").unwrap();
    let cases: Vec<Vec<&str>> = vec![
        vec!["run-synthetic", "--variant", "wiggly", "--out", o],
        vec!["run-synthetic", "--quality-mode", "best", "--out", o],
        vec![
            "run-synthetic",
            "--config",
            bad_toml.to_str().unwrap(),
            "--out",
            o,
        ],
        vec![
            "run-synthetic",
            "--config",
            negative.to_str().unwrap(),
            "--out",
            o,
        ],
        vec![
            "run-synthetic",
            "--config",
            "/nonexistent/config.toml",
            "--out",
            o,
        ],
        vec!["run-cdf", "--variant", "continuous", "--out", o],
        vec!["run-ouq", "--er", "0", "--out", o],
        vec!["no-such-command"],
    ];
    for args in cases {
        assert_eq!(code(&args), 1, "{args:?}");
    }
    assert!(!out.join("trace.csv").exists());
}

#[test]
fn help_exits_0() {
    assert_eq!(code(&["--help"]), 0);
    assert_eq!(code(&["run-ouq", "--help"]), 0);
}

#[test]
fn unwritable_output_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain-file");
    fs::write(&file, "x").unwrap();
    let out = file.join("sub");
    assert_eq!(
        code(&["run-synthetic", "--iters", "3", "--out", out_arg(&out)]),
        2
    );
}

#[test]
fn unusable_checkpoints_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(
        code(&[
            "run-synthetic",
            "--iters",
            "20",
            "--halt-after",
            "10",
            "--out",
            out_arg(&out)
        ]),
        0
    );
    let cp = out.join("checkpoint.json");
    let text = fs::read_to_string(&cp).unwrap();

    let missing = tmp.path().join("missing.json");
    assert_eq!(code(&["resume", missing.to_str().unwrap()]), 3);

    let garbage = tmp.path().join("garbage.json");
    fs::write(&garbage, "{ not json").unwrap();
    assert_eq!(code(&["resume", garbage.to_str().unwrap()]), 3);

    // Edit the echoed config without updating its hash.
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["config"]["exchange_rate"] = serde_json::json!(16.0);
    let tampered = tmp.path().join("tampered.json");
    fs::write(&tampered, serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(code(&["resume", tampered.to_str().unwrap()]), 3);

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["config_hash"] = serde_json::json!("00");
    let rehashed = tmp.path().join("hash.json");
    fs::write(&rehashed, serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(code(&["resume", rehashed.to_str().unwrap()]), 3);

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["iteration"] = serde_json::json!(11);
    let skewed = tmp.path().join("skewed.json");
    fs::write(&skewed, serde_json::to_string(&v).unwrap()).unwrap();
    assert_eq!(code(&["resume", skewed.to_str().unwrap()]), 3);

    // The untouched checkpoint still resumes.
    assert_eq!(code(&["resume", cp.to_str().unwrap()]), 0);
}

fn same_outputs(a: &Path, b: &Path) {
    for f in [
        "trace.csv",
        "trace.json",
        "dataset.csv",
        "errors.csv",
        "rates.txt",
        "series.csv",
    ] {
        let (x, y) = (a.join(f), b.join(f));
        assert_eq!(x.exists(), y.exists(), "{f}");
        if x.exists() {
            assert_eq!(fs::read(&x).unwrap(), fs::read(&y).unwrap(), "{f} differs");
        }
    }
}

#[test]
fn resume_midway_matches_a_straight_run() {
    let tmp = tempfile::tempdir().unwrap();
    let straight = tmp.path().join("straight");
    let split = tmp.path().join("split");
    let common = [
        "run-synthetic",
        "--variant",
        "discontinuous",
        "--iters",
        "100",
        "--seed",
        "4",
    ];
    let mut a = common.to_vec();
    a.extend(["--out", out_arg(&straight)]);
    assert_eq!(code(&a), 0);
    let mut b = common.to_vec();
    b.extend(["--out", out_arg(&split), "--halt-after", "50"]);
    assert_eq!(code(&b), 0);
    assert!(
        !split.join("trace.csv").exists(),
        "a halted run writes no outputs"
    );
    let elsewhere = tmp.path().join("elsewhere");
    let cp = split.join("checkpoint.json");
    assert_eq!(
        code(&["resume", cp.to_str().unwrap(), "--out", out_arg(&elsewhere)]),
        0
    );
    same_outputs(&straight, &elsewhere);
}

#[test]
fn ouq_resume_restores_the_warm_starts() {
    let tmp = tempfile::tempdir().unwrap();
    let straight = tmp.path().join("straight");
    let split = tmp.path().join("split");
    let common = ["run-ouq", "--er", "20", "--iters", "12"];
    let mut a = common.to_vec();
    a.extend(["--out", out_arg(&straight)]);
    assert_eq!(code(&a), 0);
    let mut b = common.to_vec();
    b.extend(["--out", out_arg(&split), "--halt-after", "6"]);
    assert_eq!(code(&b), 0);
    assert_eq!(
        code(&["resume", split.join("checkpoint.json").to_str().unwrap()]),
        0
    );
    same_outputs(&straight, &split);
}

#[test]
fn checkpoint_at_the_last_iteration_finalises_immediately() {
    let tmp = tempfile::tempdir().unwrap();
    let straight = tmp.path().join("straight");
    let at_end = tmp.path().join("at-end");
    let resumed = tmp.path().join("resumed");
    assert_eq!(
        code(&["run-cdf", "--iters", "30", "--out", out_arg(&straight)]),
        0
    );
    assert_eq!(
        code(&[
            "run-cdf",
            "--iters",
            "30",
            "--halt-after",
            "30",
            "--out",
            out_arg(&at_end)
        ]),
        0
    );
    let cp = at_end.join("checkpoint.json");
    let before = fs::read(&cp).unwrap();
    assert_eq!(
        code(&["resume", cp.to_str().unwrap(), "--out", out_arg(&resumed)]),
        0
    );
    same_outputs(&straight, &at_end);
    same_outputs(&straight, &resumed);
    assert_eq!(fs::read(&cp).unwrap(), before);
}

#[test]
fn zero_iterations_keep_the_initial_pair() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(
        code(&["run-cdf", "--iters", "0", "--out", out_arg(&out)]),
        0
    );
    let ds = dataset(&out, Domain::new(0.0, 1.0).unwrap());
    let xs: Vec<f64> = ds.points().iter().map(|p| p.x).collect();
    assert_eq!(xs, [0.0, 1.0]);
    assert_eq!(
        fs::read_to_string(out.join("trace.csv"))
            .unwrap()
            .lines()
            .count(),
        1
    );
}

#[test]
fn uniform_cdf_stays_inside_the_dkw_band() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    assert_eq!(
        code(&[
            "run-cdf",
            "--iters",
            "150",
            "--seed",
            "2",
            "--out",
            out_arg(&out)
        ]),
        0
    );
    let ds = dataset(&out, Domain::new(0.0, 1.0).unwrap());
    assert!(ds.len() > 10);
    for p in ds.points() {
        let n = p.reliability as usize;
        // The oracle subtracts one margin; the empirical CDF strays by at most
        // another one with overwhelming probability.
        let slack = dkw_margin(n, 1e-6);
        assert!(
            p.x - p.y <= dkw_margin(n, 0.05) + slack,
            "x={} y={} n={n}",
            p.x,
            p.y
        );
        assert!(p.y - p.x <= slack, "x={} y={} n={n}", p.x, p.y);
    }
}

#[test]
fn beta_cdf_is_underestimated_almost_everywhere() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("beta.toml");
    fs::write(&cfg, "[cdf]\nlaws = [\"beta(2, 2)\"]\n").unwrap();
    let out = tmp.path().join("run");
    assert_eq!(
        code(&[
            "run-cdf",
            "--config",
            cfg.to_str().unwrap(),
            "--iters",
            "150",
            "--seed",
            "1",
            "--out",
            out_arg(&out)
        ]),
        0
    );
    let domain = Domain::new(0.0, 1.0).unwrap();
    let truth = Beta22Cdf { domain };
    let ds = dataset(&out, domain);
    let under = ds
        .points()
        .iter()
        .filter(|p| p.y <= truth.value(p.x))
        .count();
    assert!(
        under as f64 >= 0.95 * ds.len() as f64,
        "{under} of {}",
        ds.len()
    );
    assert!(fs::read_to_string(out.join("errors.csv")).is_ok());
}

#[test]
fn ouq_regimes() {
    let tmp = tempfile::tempdir().unwrap();
    let redo = tmp.path().join("redo");
    assert_eq!(
        code(&[
            "run-ouq",
            "--er",
            "1e4",
            "--iters",
            "10",
            "--out",
            out_arg(&redo)
        ]),
        0
    );
    let recs = trace_json(&redo)["trace"]["records"]
        .as_array()
        .unwrap()
        .clone();
    assert_eq!(recs.len(), 10);
    assert!(recs.iter().all(|r| r["branch"] == "Redo"));
    // Both endpoints are exact, so every redo stalls and keeps its most
    // expensive draw. The two points take turns as the worst, hence the
    // minimum rises strictly every second iteration.
    let q: Vec<f64> = recs.iter().map(|r| r["q_min"].as_f64().unwrap()).collect();
    assert!(q.windows(2).all(|w| w[1] >= w[0]), "{q:?}");
    assert!(q.windows(3).all(|w| w[2] > w[0]), "{q:?}");
    assert!(recs.iter().all(|r| r["points"] == 2));
    let series = fs::read_to_string(redo.join("series.csv")).unwrap();
    assert!(series.starts_with("n,min_quality,total_area\n"));
    assert_eq!(series.lines().count(), 11);

    let split = tmp.path().join("split");
    assert_eq!(
        code(&[
            "run-ouq",
            "--er",
            "1e-4",
            "--iters",
            "10",
            "--out",
            out_arg(&split)
        ]),
        0
    );
    let recs = trace_json(&split)["trace"]["records"]
        .as_array()
        .unwrap()
        .clone();
    for (k, r) in recs.iter().enumerate() {
        assert_eq!(r["points"].as_u64().unwrap() as usize, 3 + k);
    }
}

#[test]
fn config_file_and_flags_combine() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "seed = 3\nexchange_rate = 2.0\niterations = 40\n[synthetic]\nvariant = \"discontinuous\"\n[initial]\npoints = [1.0, 1.5, 2.0]\n",
    )
    .unwrap();
    let out = tmp.path().join("run");
    assert_eq!(
        code(&[
            "run-synthetic",
            "--config",
            cfg.to_str().unwrap(),
            "--iters",
            "12",
            "--out",
            out_arg(&out)
        ]),
        0
    );
    let t = trace_json(&out);
    let c = &t["config"];
    assert_eq!(c["seed"], 3);
    assert_eq!(c["exchange_rate"], 2.0);
    assert_eq!(c["iterations"], 12);
    assert_eq!(c["synthetic"]["variant"], "discontinuous");
    assert_eq!(c["initial_points"], serde_json::json!([1.0, 1.5, 2.0]));
    assert_eq!(t["trace"]["records"].as_array().unwrap().len(), 12);
    assert_eq!(t["config_hash"].as_str().unwrap().len(), 64);
}
