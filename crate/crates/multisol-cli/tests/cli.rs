//! End-to-end checks of the binary: exit codes, emitted files, round trips.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_multisol"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

fn temp_out(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("multisol_test_{tag}_{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    dir
}

#[test]
fn wells_prints_a_two_row_table() {
    let out = bin()
        .args(["wells", "--config"])
        .arg(config("two_well_elliptic.cfg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("detected 2 well(s)"), "{stdout}");
    let rows: Vec<&str> = stdout
        .lines()
        .filter(|l| l.trim_start().starts_with(['1', '2']))
        .collect();
    assert_eq!(rows.len(), 2, "{stdout}");
}

#[test]
fn wells_exits_2_when_density_is_nonnegative() {
    let dir = temp_out("nowells");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("nowells.cfg");
    std::fs::write(
        &cfg,
        "[problem]\nkind = nls\nnonlinearity = poly_s2 1\nconstraint = 1\n",
    )
    .unwrap();
    let out = bin().args(["wells", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_config_exits_1_with_position() {
    let dir = temp_out("badcfg");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("bad.cfg");
    std::fs::write(&cfg, "[problem]\nkind = nls\nconstraint = zebra\n").unwrap();
    let out = bin().args(["wells", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 3"), "{stderr}");
    assert!(stderr.contains("column"), "{stderr}");
}

#[test]
fn wells_reports_advisory_growth_bounds() {
    let dir = temp_out("growth");
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("growth.cfg");
    // |T''| = 12 s² for T = -s⁴: the stated bound holds with zero margin
    std::fs::write(
        &cfg,
        "[problem]\nkind = nls\nnonlinearity = poly_s2 0 -1 0.01\nconstraint = 5\n\
         growth = 4 4 12.1 0.5\ncoercivity = 1 1 3\n[solver]\ns_max = 16\n",
    )
    .unwrap();
    let out = bin().args(["wells", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("growth bound"), "{stdout}");
    assert!(stdout.contains("coercivity bound"), "{stdout}");
    assert!(stdout.contains("advisory only"), "{stdout}");
}

#[test]
fn usage_errors_exit_1() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().arg("solve").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_single_well_emits_artifacts() {
    let dir = temp_out("solve1");
    let out = bin()
        .args(["solve", "--config"])
        .arg(config("elliptic_single_well.cfg"))
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    assert!(dir.join("well_1_profile.csv").exists());
    assert!(dir.join("well_1_rescaled.csv").exists());
    let certs = std::fs::read_to_string(dir.join("certificates.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&certs).unwrap();
    assert_eq!(json.as_array().unwrap().len(), 1);
    assert_eq!(json[0]["status"], "Converged");
    assert_eq!(json[0]["certificate"]["localization_ok"], true);

    // the emitted profile parses back bit-exactly
    let text = std::fs::read_to_string(dir.join("well_1_profile.csv")).unwrap();
    let prof = multisol::grid::RadialProfile::from_csv(&text).unwrap();
    assert_eq!(prof.grid().dim(), 3);
    assert!(prof.linf() > 0.0);
}

#[test]
fn solve_below_threshold_exits_3() {
    let dir = temp_out("partial");
    let out = bin()
        .args(["solve", "--config"])
        .arg(config("nls_single_well.cfg"))
        .args(["--constraint", "0.01"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("InitFailed"), "{stdout}");
}

#[test]
fn solve_with_trace_emits_ndjson() {
    let dir = temp_out("trace");
    let out = bin()
        .args(["solve", "--config"])
        .arg(config("nls_deep_well.cfg"))
        .arg("--out")
        .arg(&dir)
        .arg("--trace")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let trace = std::fs::read_to_string(dir.join("well_1_trace.ndjson")).unwrap();
    let first = trace.lines().next().unwrap();
    let rec: serde_json::Value = serde_json::from_str(first).unwrap();
    for key in ["iteration", "h", "j", "grad_norm", "linf", "g"] {
        assert!(rec.get(key).is_some(), "missing trace key {key}");
    }
}

#[test]
fn scan_writes_plot_csv() {
    let dir = temp_out("scan");
    let out = bin()
        .args(["scan", "--config"])
        .arg(config("nls_deep_well.cfg"))
        .args(["--values", "10,20"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.join("scan.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "value,status,h,linf,j");
    assert_eq!(lines.len(), 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("threshold estimate"), "{stdout}");
}

#[test]
fn scan_without_values_exits_1() {
    let out = bin()
        .args(["scan", "--config"])
        .arg(config("nls_deep_well.cfg"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn dump_config_round_trips_through_the_binary() {
    let out = bin()
        .args(["solve", "--config"])
        .arg(config("kg_single_well.cfg"))
        .arg("--dump-config")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let dumped = String::from_utf8(out.stdout).unwrap();
    let reparsed = multisol_cli::RunConfig::parse(&dumped).unwrap();
    let original =
        multisol_cli::RunConfig::from_path(&config("kg_single_well.cfg")).unwrap();
    assert_eq!(reparsed, original);
}

#[test]
fn json_config_is_accepted() {
    let original = multisol_cli::RunConfig::from_path(&config("nls_deep_well.cfg")).unwrap();
    let dir = temp_out("jsoncfg");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("cfg.json");
    std::fs::write(&path, serde_json::to_string_pretty(&original).unwrap()).unwrap();
    let out = bin().args(["wells", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}
