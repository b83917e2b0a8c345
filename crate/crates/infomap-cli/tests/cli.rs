//! End-to-end checks of the `infomap` binary: exit codes, stream discipline
//! (success writes nothing to stderr), and the documented file formats.

use std::path::Path;
use std::process::{Command, Output};

fn infomap(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infomap"))
        .current_dir(dir)
        .args(args)
        .env_remove("INFOMAP_CONFIG_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

fn write(dir: &Path, name: &str, contents: &str) {
    std::fs::write(dir.join(name), contents).unwrap();
}

const CALIBRATION_SCENARIO: &str = "\
duration 400
dt 0.1
seed 5
noise 0
sensor rect 0.8 -5 -5 5 5
trajectory 1.0 0 0
trajectory 1.0 2 2
";

const OCCLUSION_SCENARIO: &str = "\
duration 30
dt 0.5
seed 7
noise 0.05
sensor rect 0.95 0 0 12 10
sensor rect 0.95 18 0 30 10
trajectory 2.0 1 5 29 5
occlusion 12 0 18 10
";

#[test]
fn build_pd_pipeline_writes_a_map() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "cal.scenario", CALIBRATION_SCENARIO);

    let out = infomap(
        dir.path(),
        &["sim", "--scenario", "cal.scenario", "--emit-log", "cal.log", "--no-experiment"],
    );
    assert!(out.status.success(), "{out:?}");
    assert!(out.stderr.is_empty(), "success must not write stderr");

    let out = infomap(
        dir.path(),
        &[
            "build-pd",
            "--log",
            "cal.log",
            "--out",
            "pd.imap",
            "--grid",
            "11,11",
            "--res",
            "1.0",
            "--origin",
            "5,5",
            "--match-radius",
            "0.3",
            "--min-opportunities",
            "100",
        ],
    );
    assert!(out.status.success(), "{out:?}");
    let text = std::fs::read_to_string(dir.path().join("pd.imap")).unwrap();
    assert!(text.starts_with("IMAP1\n"));

    // stationary targets sit in exactly two cells; both estimates near 0.8
    write(dir.path(), "h.cfg", "node pd\nsource static pd.imap\n");
    for (x, y) in [("0", "0"), ("2", "2")] {
        let out = infomap(
            dir.path(),
            &["query", "--hierarchy", "h.cfg", "--node", "pd", "--x", x, "--y", y],
        );
        assert!(out.status.success());
        let value: f64 = stdout(&out).trim().parse().unwrap();
        assert!((value - 0.8).abs() < 0.1, "estimate {value}");
    }
}

#[test]
fn missing_log_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = infomap(
        dir.path(),
        &["build-pd", "--log", "nope.log", "--out", "x.imap", "--grid", "4,4", "--res", "1"],
    );
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

#[test]
fn usage_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = infomap(dir.path(), &["build-pd", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convert_round_trip_stays_within_one_quantization_step() {
    let dir = tempfile::tempdir().unwrap();
    // map with a value gradient and one unknown cell
    let mut rows = String::new();
    for r in 0..4 {
        let line: Vec<String> = (0..4)
            .map(|c| {
                if (r, c) == (2, 1) {
                    "unknown".into()
                } else {
                    format!("{}", (r * 4 + c) as f64 / 15.0)
                }
            })
            .collect();
        rows.push_str(&line.join(" "));
        rows.push('\n');
    }
    write(
        dir.path(),
        "m.imap",
        &format!(
            "IMAP1\nframe=cartesian\nrows=4\ncols=4\nresolution=0.5\norigin_row=3\norigin_col=0\n\
             vmin=0\nvmax=1\noob_policy=nearest\noob_default=0\ndata\n{rows}"
        ),
    );

    let out = infomap(dir.path(), &["convert", "--in", "m.imap", "--out", "m.pgm", "--to", "image"]);
    assert!(out.status.success(), "{out:?}");
    assert!(dir.path().join("m.pgm.meta").exists(), "sidecar for the unknown cell");

    let out = infomap(
        dir.path(),
        &[
            "convert", "--in", "m.pgm", "--out", "m2.imap", "--to", "native", "--grid", "4,4",
            "--res", "0.5", "--origin", "3,0", "--range", "0,1", "--oob", "nearest",
        ],
    );
    assert!(out.status.success(), "{out:?}");

    let a = std::fs::read_to_string(dir.path().join("m.imap")).unwrap();
    let b = std::fs::read_to_string(dir.path().join("m2.imap")).unwrap();
    let values = |text: &str| -> Vec<Option<f64>> {
        text.lines()
            .skip(12)
            .flat_map(|l| l.split_whitespace())
            .map(|t| t.parse::<f64>().ok())
            .collect()
    };
    for (va, vb) in values(&a).iter().zip(values(&b).iter()) {
        match (va, vb) {
            (Some(va), Some(vb)) => assert!((va - vb).abs() <= 1.0 / 255.0),
            (None, None) => {} // unknown survived the round trip
            other => panic!("mismatched cells {other:?}"),
        }
    }
}

#[test]
fn convert_dimension_mismatch_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let mut pgm = b"P5\n3 3\n255\n".to_vec();
    pgm.extend_from_slice(&[0u8; 9]);
    std::fs::write(dir.path().join("t.pgm"), pgm).unwrap();
    let out = infomap(
        dir.path(),
        &[
            "convert", "--in", "t.pgm", "--out", "t.imap", "--to", "native", "--grid", "5,5",
            "--res", "1", "--range", "0,1",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn query_composite_node_prints_the_fold() {
    let dir = tempfile::tempdir().unwrap();
    let uniform = |v: f64| {
        format!(
            "IMAP1\nframe=cartesian\nrows=2\ncols=2\nresolution=1\norigin_row=1\norigin_col=0\n\
             vmin=0\nvmax=1\noob_policy=nearest\noob_default=0\ndata\n{v} {v}\n{v} {v}\n"
        )
    };
    write(dir.path(), "a.imap", &uniform(0.9));
    write(dir.path(), "b.imap", &uniform(0.5));
    write(
        dir.path(),
        "h.cfg",
        "node root\nsource static a.imap\ncombine product\nchildren sub\n\nnode sub\nsource static b.imap\n",
    );
    let out = infomap(
        dir.path(),
        &["query", "--hierarchy", "h.cfg", "--node", "root", "--x", "0", "--y", "0"],
    );
    assert!(out.status.success());
    let value: f64 = stdout(&out).trim().parse().unwrap();
    assert!((value - 0.45).abs() < 1e-12);
}

#[test]
fn query_accepts_negative_coordinates() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "m.imap",
        "IMAP1\nframe=cartesian\nrows=3\ncols=3\nresolution=1\norigin_row=1\norigin_col=1\n\
         vmin=0\nvmax=1\noob_policy=nearest\noob_default=0\ndata\n0.1 0.2 0.3\n0.4 0.5 0.6\n0.7 0.8 0.9\n",
    );
    write(dir.path(), "h.cfg", "node m\nsource static m.imap\n");
    let out = infomap(
        dir.path(),
        &["query", "--hierarchy", "h.cfg", "--node", "m", "--x", "-1", "--y", "-1"],
    );
    assert!(out.status.success(), "{out:?}");
    assert_eq!(stdout(&out).trim(), "0.7");
}

#[test]
fn query_unknown_everywhere_prints_unknown_and_exits_0() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "u.imap",
        "IMAP1\nframe=cartesian\nrows=1\ncols=2\nresolution=1\norigin_row=0\norigin_col=0\n\
         vmin=0\nvmax=1\noob_policy=nearest\noob_default=0\ndata\nunknown unknown\n",
    );
    write(dir.path(), "h.cfg", "node u\nsource static u.imap\n");
    let out = infomap(
        dir.path(),
        &["query", "--hierarchy", "h.cfg", "--node", "u", "--x", "0", "--y", "0"],
    );
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "unknown");
}

#[test]
fn validate_priors_exit_codes_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let map = |v: f64, broken: bool| {
        let cell = |r: usize, c: usize| {
            if broken && (r, c) == (0, 1) {
                v + 0.2
            } else {
                v
            }
        };
        format!(
            "IMAP1\nframe=cartesian\nrows=2\ncols=2\nresolution=1\norigin_row=1\norigin_col=0\n\
             vmin=0\nvmax=1\noob_policy=nearest\noob_default=0\ndata\n{} {}\n{} {}\n",
            cell(0, 0),
            cell(0, 1),
            cell(1, 0),
            cell(1, 1)
        )
    };
    write(dir.path(), "car.imap", &map(0.7, false));
    write(dir.path(), "ped.imap", &map(0.3, false));
    write(dir.path(), "priors.txt", "car car.imap\nped ped.imap\n");
    let out = infomap(dir.path(), &["validate-priors", "--manifest", "priors.txt"]);
    assert!(out.status.success(), "{out:?}");
    assert!(stdout(&out).is_empty(), "valid set prints nothing");

    write(dir.path(), "ped.imap", &map(0.3, true));
    let out = infomap(dir.path(), &["validate-priors", "--manifest", "priors.txt"]);
    assert_eq!(out.status.code(), Some(1));
    let report = stdout(&out);
    assert!(report.contains("cell 0 1"), "{report}");
}

#[test]
fn bake_then_query_agree_at_cell_centers() {
    let dir = tempfile::tempdir().unwrap();
    let uniform = |v: f64| {
        format!(
            "IMAP1\nframe=cartesian\nrows=3\ncols=3\nresolution=1\norigin_row=2\norigin_col=0\n\
             vmin=0\nvmax=1\noob_policy=default\noob_default=0\ndata\n{v} {v} {v}\n{v} {v} {v}\n{v} {v} {v}\n"
        )
    };
    write(dir.path(), "a.imap", &uniform(0.6));
    write(dir.path(), "b.imap", &uniform(0.5));
    write(
        dir.path(),
        "h.cfg",
        "node root\nsource static a.imap\ncombine product\nchildren sub\n\nnode sub\nsource static b.imap\n",
    );
    let out = infomap(
        dir.path(),
        &[
            "bake", "--hierarchy", "h.cfg", "--node", "root", "--out", "baked.imap", "--grid",
            "3,3", "--res", "1", "--origin", "2,0",
        ],
    );
    assert!(out.status.success(), "{out:?}");

    write(dir.path(), "hb.cfg", "node baked\nsource static baked.imap\n");
    for (x, y) in [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)] {
        let live = infomap(
            dir.path(),
            &[
                "query", "--hierarchy", "h.cfg", "--node", "root", "--x", &x.to_string(), "--y",
                &y.to_string(),
            ],
        );
        let baked = infomap(
            dir.path(),
            &[
                "query", "--hierarchy", "hb.cfg", "--node", "baked", "--x", &x.to_string(), "--y",
                &y.to_string(),
            ],
        );
        assert_eq!(stdout(&live), stdout(&baked));
    }
}

#[test]
fn sim_reports_survival_flags_both_ways() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "occ.scenario", OCCLUSION_SCENARIO);
    let out = infomap(dir.path(), &["sim", "--scenario", "occ.scenario", "--report", "occ"]);
    assert!(out.status.success(), "{out:?}");
    let text = stdout(&out);
    assert!(text.contains("with_persistence_map survival true"), "{text}");
    assert!(text.contains("without_persistence_map survival false"), "{text}");

    let csv = std::fs::read_to_string(dir.path().join("occ-with.csv")).unwrap();
    assert!(csv.starts_with("scan,time,truths,estimates,expected_cardinality"));
    assert_eq!(csv.lines().count(), 31, "header plus one row per scan");

    // identical invocation, identical bytes
    let again = infomap(dir.path(), &["sim", "--scenario", "occ.scenario", "--report", "occ2"]);
    assert!(again.status.success());
    let csv2 = std::fs::read_to_string(dir.path().join("occ2-with.csv")).unwrap();
    assert_eq!(csv, csv2);
}

#[test]
fn config_dir_env_var_resolves_relative_inputs() {
    let config_dir = tempfile::tempdir().unwrap();
    let work_dir = tempfile::tempdir().unwrap();
    write(config_dir.path(), "cal.scenario", CALIBRATION_SCENARIO);
    let out = Command::new(env!("CARGO_BIN_EXE_infomap"))
        .current_dir(work_dir.path())
        .env("INFOMAP_CONFIG_DIR", config_dir.path())
        .args(["sim", "--scenario", "cal.scenario", "--emit-log", "cal.log", "--no-experiment"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{out:?}");
    assert!(work_dir.path().join("cal.log").exists());
}
