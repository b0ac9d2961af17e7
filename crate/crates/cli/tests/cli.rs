use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mixdyn_cli::{execute, read_manifest, SubcommandKind, MANIFEST_FILE};
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mixdyn"))
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn run_bin(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn table(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = table(path);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

const SMALL_TEACHER: &str = r#"{"epochs": 150, "test_size": 200, "seed": 4}"#;

#[test]
fn teacher_student_writes_four_curves_and_replays_bitwise() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "ts.json", SMALL_TEACHER);
    let a = tmp.path().join("a");
    let manifest = execute(SubcommandKind::TeacherStudent, &cfg, None, &a).unwrap();
    let names = [
        "erm.csv",
        "mixup_fixed.csv",
        "mixup_beta.csv",
        "switch.csv",
        "summary.csv",
    ];
    assert_eq!(manifest.outputs, names);
    for name in &names[..4] {
        let (header, rows) = table(&a.join(name));
        assert_eq!(header, ["epoch", "train_mse", "test_mse", "grad_norm"]);
        assert_eq!(rows.len(), 150);
        assert_eq!(rows[0][0], "1");
    }
    let (_, summary) = table(&a.join("summary.csv"));
    assert_eq!(summary.len(), 4);
    assert_eq!(summary[3][0], "switch");
    assert_eq!(
        summary[3][6], summary[2][1],
        "switch epoch is the Beta turning epoch"
    );

    let b = tmp.path().join("b");
    let out = run_bin(&[
        "teacher-student",
        "--config",
        a.join(MANIFEST_FILE).to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    for name in names {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap()
        );
    }
    assert_eq!(
        read_manifest(&b.join(MANIFEST_FILE)).unwrap().config,
        manifest.config
    );
}

#[test]
fn zero_epochs_give_header_only_files() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "ts.json", r#"{"epochs": 0, "test_size": 50}"#);
    let out_dir = tmp.path().join("o");
    let out = run_bin(&[
        "teacher-student",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    for name in ["erm.csv", "mixup_fixed.csv", "mixup_beta.csv", "switch.csv"] {
        assert_eq!(
            std::fs::read_to_string(out_dir.join(name)).unwrap(),
            "epoch,train_mse,test_mse,grad_norm\n"
        );
    }
    let summary = std::fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "lb.json",
        r#"{"classes": [3], "pairs": 2000, "seed": 1}"#,
    );
    let a = execute(SubcommandKind::Lossbound, &cfg, None, &tmp.path().join("a")).unwrap();
    let b = execute(
        SubcommandKind::Lossbound,
        &cfg,
        Some(9),
        &tmp.path().join("b"),
    )
    .unwrap();
    assert_eq!(a.seed, Some(1));
    assert_eq!(b.seed, Some(9));
    assert_ne!(
        std::fs::read(tmp.path().join("a/lossbound.csv")).unwrap(),
        std::fs::read(tmp.path().join("b/lossbound.csv")).unwrap()
    );
}

#[test]
fn malformed_json_reports_byte_offset() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "bad.json", "{\n  \"epochs\": 3,\n  ]\n}");
    let out = run_bin(&[
        "teacher-student",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("byte offset 19"), "{err}");
}

#[test]
fn config_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    let cases = [
        ("flow", r#"{"n": 20, "bogus": 1}"#, "bogus"),
        ("flow", r#"{"n": "twenty"}"#, "`n`"),
        ("lossbound", r#"{"schema_version": 2}"#, "schema_version"),
        (
            "noise",
            r#"{"family": {"kind": "piecewise_region", "class_count": 2, "boundaries": [1.0], "region_labels": [0, 1]}, "inputs": {"kind": "points", "points": [[0.0], [2.0]]}, "labels": [0, 0]}"#,
            "label",
        ),
    ];
    for (sub, text, needle) in cases {
        let cfg = write(tmp.path(), "c.json", text);
        let out = run_bin(&[
            sub,
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(2), "{sub} {text}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(needle), "{err}");
    }
}

#[test]
fn numerical_and_io_failures_have_their_own_codes() {
    let tmp = TempDir::new().unwrap();
    let out_dir = tmp.path().join("o");
    let cfg = write(tmp.path(), "flow.json", r#"{"n": 3, "d": 100}"#);
    let out = run_bin(&[
        "flow",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_eq!(
        out.status.code(),
        Some(3),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    let missing = tmp.path().join("missing.json");
    let out = run_bin(&["flow", "--config", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));

    let blocker = write(tmp.path(), "file", "");
    let cfg = write(tmp.path(), "lb.json", r#"{"classes": [2], "pairs": 10}"#);
    let out = run_bin(&[
        "lossbound",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        blocker.join("x").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(4));

    let out = bin()
        .env("MIXDYN_THREADS", "0")
        .args([
            "lossbound",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manifest_for_another_subcommand_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "lb.json", r#"{"classes": [2], "pairs": 10}"#);
    let a = tmp.path().join("a");
    execute(SubcommandKind::Lossbound, &cfg, None, &a).unwrap();
    let err = execute(
        SubcommandKind::Flow,
        &a.join(MANIFEST_FILE),
        None,
        &tmp.path().join("b"),
    )
    .unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn lossbound_rows() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "lb.json", r#"{"classes": [2, 10]}"#);
    execute(SubcommandKind::Lossbound, &cfg, None, tmp.path()).unwrap();
    let path = tmp.path().join("lossbound.csv");
    let (header, rows) = table(&path);
    assert_eq!(
        header,
        [
            "C",
            "bound",
            "empirical_loss_of_interpolating_predictor",
            "abs_gap"
        ]
    );
    assert_eq!(rows[0][1], "0.25");
    assert_eq!(rows[1][1], "0.45");
    assert!(column(&path, "abs_gap").iter().all(|g| *g <= 0.01));
}

#[test]
fn flow_rows_respect_the_bound() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(
        tmp.path(),
        "flow.json",
        r#"{"xi": 0.0, "theta0_draws": 1, "seed": 2}"#,
    );
    execute(SubcommandKind::Flow, &cfg, None, tmp.path()).unwrap();
    let flow = tmp.path().join("flow.csv");
    let summary = tmp.path().join("flow_summary.csv");
    let t = column(&flow, "t");
    assert_eq!(t.len(), 64);
    assert_eq!(t[0], 0.0);
    let bound = column(&flow, "risk_bound");
    let excess = column(&flow, "excess_risk");
    let se = column(&flow, "excess_std_err");
    for k in 0..t.len() {
        assert!(excess[k] <= bound[k] + 3.0 * se[k]);
    }
    // θ0 = 0, so the distance at t = 0 is |θ*|.
    let theta_star_sq = column(&flow, "theta_dist_to_star")[0].powi(2);
    let c1 = column(&summary, "c1")[0];
    let r_star = column(&summary, "r_star")[0];
    let zeta = column(&summary, "zeta")[0];
    let expected = c1 * theta_star_sq + 2.0 * (c1 * r_star * zeta).sqrt();
    assert!((bound[0] - expected).abs() <= 1e-9 * expected);
}

#[test]
fn flow_default_risk_minimum_is_interior() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "flow.json", "{}");
    execute(SubcommandKind::Flow, &cfg, None, tmp.path()).unwrap();
    let risk = column(&tmp.path().join("flow.csv"), "mc_risk");
    let argmin = (0..risk.len())
        .min_by(|&a, &b| risk[a].total_cmp(&risk[b]))
        .unwrap();
    assert!(argmin > 0 && argmin + 1 < risk.len());
    let (_, summary) = table(&tmp.path().join("flow_summary.csv"));
    assert_eq!(summary[0][9], "true");
}

const STEP_NOISE: &str = r#"{
  "family": {"kind": "piecewise_region", "class_count": 2, "axis": 0, "boundaries": [1.0], "region_labels": [0, 1]},
  "inputs": {"kind": "points", "points": [[-1.0], [0.0], [0.5], [1.5], [2.0], [3.5]]},
  "lambdas": [0.0, 0.25, 0.5, 1.0]
}"#;

#[test]
fn noise_matches_exhaustive_count() {
    let tmp = TempDir::new().unwrap();
    let cfg = write(tmp.path(), "noise.json", STEP_NOISE);
    execute(SubcommandKind::Noise, &cfg, None, tmp.path()).unwrap();
    let path = tmp.path().join("noise.csv");
    let (header, rows) = table(&path);
    assert_eq!(
        header,
        [
            "lambda",
            "noisy_fraction",
            "same_pair",
            "cross_pair",
            "intrusion"
        ]
    );
    for r in &rows {
        let total: usize = r[2..].iter().map(|v| v.parse::<usize>().unwrap()).sum();
        assert_eq!(total, 36);
    }
    assert_eq!(rows[3][1], "0.0");

    let xs = [-1.0, 0.0, 0.5, 1.5, 2.0, 3.5];
    let class = |x: f64| usize::from(x >= 1.0);
    let mut noisy = 0;
    for &a in &xs {
        for &b in &xs {
            let truth = class(0.5 * a + 0.5 * b);
            // Equal weights on distinct one-hot parents tie; the lower class wins.
            let mixup = class(a).min(class(b));
            noisy += usize::from(truth != mixup);
        }
    }
    let fractions = column(&path, "noisy_fraction");
    assert_eq!(fractions[2], noisy as f64 / 36.0);
}

#[test]
fn spectrum_outputs() {
    let tmp = TempDir::new().unwrap();
    let gaussian = write(
        tmp.path(),
        "g.json",
        r#"{"source": {"kind": "gaussian", "d": 200, "m": 2000}, "bins": 25}"#,
    );
    let g = tmp.path().join("g");
    execute(SubcommandKind::Spectrum, &gaussian, None, &g).unwrap();
    assert!(column(&g.join("ks.csv"), "ks_distance")[0] <= 0.05);
    assert_eq!(
        column(&g.join("histogram.csv"), "count")
            .iter()
            .sum::<f64>(),
        200.0
    );
    assert_eq!(column(&g.join("spectrum.csv"), "eigenvalue").len(), 200);

    let degenerate = write(
        tmp.path(),
        "m.json",
        r#"{"source": {"kind": "mixup", "n": 8, "d0": 5, "d": 20, "lambda": 1.0}, "repeats": 2}"#,
    );
    let m = tmp.path().join("m");
    execute(SubcommandKind::Spectrum, &degenerate, None, &m).unwrap();
    let (_, ks) = table(&m.join("ks.csv"));
    assert_eq!(ks.len(), 4);
    for row in ks.iter().filter(|r| r[1] == "mixup") {
        assert!(row[4].parse::<usize>().unwrap() <= 8);
    }
    let (_, hist) = table(&m.join("histogram.csv"));
    for seed in ["0", "1"] {
        for kind in ["mixup", "control"] {
            let total: usize = hist
                .iter()
                .filter(|r| r[0] == seed && r[1] == kind)
                .map(|r| r[5].parse::<usize>().unwrap())
                .sum();
            assert_eq!(total, 20);
        }
    }
}

#[test]
fn render_draws_one_polyline_per_series() {
    let tmp = TempDir::new().unwrap();
    write(tmp.path(), "data.csv", "t,a,b\n0,1,2\n1,3,0.5\n");
    let cfg = write(
        tmp.path(),
        "r.json",
        r#"{"csv": "data.csv", "x": "t", "y": ["a", "b"]}"#,
    );
    execute(SubcommandKind::Render, &cfg, None, &tmp.path().join("o1")).unwrap();
    execute(SubcommandKind::Render, &cfg, None, &tmp.path().join("o2")).unwrap();
    let svg = std::fs::read_to_string(tmp.path().join("o1/plot.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 2);
    assert!(svg.starts_with("<?xml") && svg.trim_end().ends_with("</svg>"));
    assert_eq!(
        svg,
        std::fs::read_to_string(tmp.path().join("o2/plot.svg")).unwrap()
    );

    write(tmp.path(), "empty.csv", "t,a\n");
    let cfg = write(
        tmp.path(),
        "e.json",
        r#"{"csv": "empty.csv", "x": "t", "y": ["a"], "output": "e.svg"}"#,
    );
    execute(SubcommandKind::Render, &cfg, None, tmp.path()).unwrap();
    let svg = std::fs::read_to_string(tmp.path().join("e.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 0);
    assert!(svg.contains("class=\"axes\""));

    let cfg = write(
        tmp.path(),
        "m.json",
        r#"{"csv": "data.csv", "x": "t", "y": ["c"]}"#,
    );
    let out = run_bin(&[
        "render",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing column `c`"));
}
