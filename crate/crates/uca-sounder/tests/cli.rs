//! End-to-end runs of the command-line front end against the bundled
//! scenario fixtures.

use std::path::PathBuf;

use uca_sounder::cli::cli_run;
use uca_sounder::io::read_estimates;

fn scenario_path(name: &str) -> String {
    let mut p = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    p.push("scenarios");
    p.push(name);
    p.display().to_string()
}

fn temp_dir(tag: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(tag);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn synth_estimate_padp_pipeline_reproduces_benchmark_scene() {
    let dir = temp_dir("pipeline");
    let cfr = dir.join("table1_ci.cfr");
    let estimates_csv = dir.join("estimates.csv");
    let padp_csv = dir.join("padp_cbf.csv");

    let code = cli_run([
        "uca-sounder",
        "synth",
        &scenario_path("table1_ci.scenario"),
        "--out",
        cfr.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);

    // Synthesis is deterministic byte-for-byte.
    let first = std::fs::read(&cfr).unwrap();
    let cfr2 = dir.join("table1_ci_again.cfr");
    cli_run([
        "uca-sounder",
        "synth",
        &scenario_path("table1_ci.scenario"),
        "--out",
        cfr2.to_str().unwrap(),
    ]);
    assert_eq!(first, std::fs::read(&cfr2).unwrap());

    let code = cli_run([
        "uca-sounder",
        "estimate",
        cfr.to_str().unwrap(),
        "--eta",
        "40",
        "--out",
        estimates_csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let estimates = read_estimates(std::io::BufReader::new(
        std::fs::File::open(&estimates_csv).unwrap(),
    ))
    .unwrap();
    assert_eq!(estimates.len(), 3, "expected the three benchmark paths");
    let truth = [(0.0, 90.0, 16.6), (-3.0, 270.0, 40.0), (-18.0, 90.0, 40.0)];
    for (est, (power, az, delay)) in estimates.iter().zip(truth) {
        assert!(
            (est.power_db() - power).abs() <= 0.3,
            "power {} vs {power}",
            est.power_db()
        );
        assert!((est.azimuth_rad.to_degrees() - az).abs() <= 0.5);
        assert!(
            (est.delay_s * 1e9 - delay).abs() <= 0.4,
            "delay {}",
            est.delay_s * 1e9
        );
    }

    // The classical-beamforming PADP loses more than 10 dB on the main lobe.
    let code = cli_run([
        "uca-sounder",
        "padp",
        cfr.to_str().unwrap(),
        "--method",
        "cbf",
        "--out",
        padp_csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&padp_csv).unwrap();
    let mut near_path1_max = f64::NEG_INFINITY;
    for line in text.lines().skip(1) {
        let mut fields = line.split(',');
        let delay_ns: f64 = fields.next().unwrap().parse().unwrap();
        if (delay_ns - 16.6).abs() > 1.0 {
            continue;
        }
        for (a, cell) in fields.enumerate() {
            let az = a as f64 * 0.5;
            if (az - 90.0).abs() <= 2.0 {
                near_path1_max = near_path1_max.max(cell.parse::<f64>().unwrap());
            }
        }
    }
    assert!(
        near_path1_max <= -10.0,
        "CBF main lobe of the 0 dB path shows only {near_path1_max} dB loss"
    );

    // PADP export is deterministic.
    let padp2 = dir.join("padp_cbf_again.csv");
    cli_run([
        "uca-sounder",
        "padp",
        cfr.to_str().unwrap(),
        "--method",
        "cbf",
        "--out",
        padp2.to_str().unwrap(),
    ]);
    assert_eq!(
        std::fs::read(&padp_csv).unwrap(),
        std::fs::read(&padp2).unwrap()
    );
}

#[test]
fn estimate_trace_writes_iteration_snapshots() {
    let dir = temp_dir("trace");
    let cfr = dir.join("scene.cfr");
    cli_run([
        "uca-sounder",
        "synth",
        &scenario_path("table1_ci.scenario"),
        "--out",
        cfr.to_str().unwrap(),
    ]);
    let out = dir.join("est.csv");
    let trace = dir.join("iters");
    let code = cli_run([
        "uca-sounder",
        "estimate",
        cfr.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--trace-dir",
        trace.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    // Three accepted paths plus the final (discarded) iteration.
    for q in 0..4 {
        assert!(
            trace.join(format!("cir_{q}.csv")).exists(),
            "missing cir_{q}.csv"
        );
        assert!(
            trace.join(format!("padp_{q}.csv")).exists(),
            "missing padp_{q}.csv"
        );
    }
}

#[test]
fn sweep_rp_emits_table() {
    let dir = temp_dir("sweeprp");
    let out = dir.join("rp.csv");
    let code = cli_run([
        "uca-sounder",
        "sweep-rp",
        "--bandwidths",
        "2e9",
        "--distances",
        "3",
        "--elevations",
        "90",
        "--radius",
        "0.05",
        "--elements",
        "64",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "bandwidth_hz,distance_m,elevation_deg,rp_percent"
    );
    let row = lines.next().unwrap();
    let rp: f64 = row.rsplit(',').next().unwrap().parse().unwrap();
    assert!(
        rp <= 0.2,
        "single-cell residual power rate {rp}% above the documented bound"
    );
}

#[test]
fn beampattern_emits_curve_and_patterns() {
    let dir = temp_dir("beampattern");
    let out = dir.join("curve.csv");
    let patterns = dir.join("patterns.csv");
    let code = cli_run([
        "uca-sounder",
        "beampattern",
        "--distances",
        "3,193",
        "--out",
        out.to_str().unwrap(),
        "--patterns-out",
        patterns.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "distance_m,cbf_target_db,fibf_peak_db");
    assert_eq!(rows.len(), 3);
    // Near field hurts the classical beamformer far more than the
    // frequency-invariant one.
    let parse_row = |row: &str| {
        let f: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
        (f[0], f[1], f[2])
    };
    let (_, cbf_near, fibf_near) = parse_row(rows[1]);
    let (_, cbf_far, fibf_far) = parse_row(rows[2]);
    assert!(cbf_far - cbf_near > 5.0, "CBF should degrade near field");
    assert!(
        (fibf_far - fibf_near).abs() <= 1.0,
        "FIBF peak should stay flat"
    );
    assert!(patterns.exists());
}

#[test]
fn binary_failure_prints_exactly_one_stderr_line() {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_uca-sounder"))
        .args(["estimate", "/nonexistent/in.cfr", "--out", "/tmp/out.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert_eq!(stderr.lines().count(), 1, "stderr was: {stderr:?}");
    assert!(stderr.starts_with("error: "), "stderr was: {stderr:?}");
    assert!(out.stdout.is_empty());
}

#[test]
fn failures_exit_nonzero_with_one_diagnostic_line() {
    let dir = temp_dir("failures");
    // Unreadable input file.
    assert_eq!(
        cli_run([
            "uca-sounder",
            "estimate",
            dir.join("missing.cfr").to_str().unwrap(),
            "--out",
            dir.join("x.csv").to_str().unwrap(),
        ]),
        1
    );
    // Invalid scenario content.
    let bad = dir.join("bad.scenario");
    std::fs::write(&bad, "[geometry]\nradius_m = 0.5\nbogus = 1\n").unwrap();
    assert_eq!(
        cli_run([
            "uca-sounder",
            "synth",
            bad.to_str().unwrap(),
            "--out",
            dir.join("y.cfr").to_str().unwrap(),
        ]),
        1
    );
    // Bad flag usage.
    assert_eq!(cli_run(["uca-sounder", "padp"]), 2);
}
