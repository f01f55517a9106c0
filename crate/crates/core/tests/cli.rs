mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::fixture;

fn edsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edsched")).args(args).output().unwrap()
}

fn tsd_inputs() -> Vec<String> {
    let f = |n: &str| fixture(n).to_str().unwrap().to_string();
    vec![
        "--workload".into(),
        f("tsd_workload.json"),
        "--platform".into(),
        f("heeptimize.json"),
        "--profiles".into(),
        f("synthetic_tsd_profiles.json"),
        "--groups".into(),
        f("tsd_groups.json"),
    ]
}

fn run(sub: &str, inputs: &[String], extra: &[&str]) -> Output {
    let mut args: Vec<&str> = vec![sub];
    args.extend(inputs.iter().map(String::as_str));
    args.extend_from_slice(extra);
    edsched(&args)
}

fn write_cpu_only(dir: &Path) -> Vec<String> {
    std::fs::write(
        dir.join("w.json"),
        r#"{"name":"cpu-only","kernels":[
            {"kind":"matmul","size":[64,64,64],"data_width":8},
            {"kind":"add","size":[64,64],"data_width":8}]}"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("p.json"),
        r#"{"pes":[{"id":"cpu","role":"cpu","lm_capacity":131072,"bus_width":4,"dma_setup":0,"cycles_per_beat":0}],
            "vf_table":[{"voltage_v":0.5,"frequency_hz":1.22e8},{"voltage_v":0.9,"frequency_hz":6.9e8}],
            "shared_capacity_bytes":131072,"sleep_power_w":1.29e-4}"#,
    )
    .unwrap();
    std::fs::write(
        dir.join("r.json"),
        r#"{"cycles":[
            {"pe":"cpu","kind":"matmul","size":[64,64,64],"data_width":8,"proc_cycles":2621440},
            {"pe":"cpu","kind":"add","size":[64,64],"data_width":8,"proc_cycles":16384}],
           "power":[
            {"pe":"cpu","kind":"matmul","voltage":0.5,"p_stat":1e-4,"p_dyn_base":5e-4,"f_base":1.22e8},
            {"pe":"cpu","kind":"matmul","voltage":0.9,"p_stat":3e-4,"p_dyn_base":3e-3,"f_base":6.9e8},
            {"pe":"cpu","kind":"add","voltage":0.5,"p_stat":1e-4,"p_dyn_base":5e-4,"f_base":1.22e8},
            {"pe":"cpu","kind":"add","voltage":0.9,"p_stat":3e-4,"p_dyn_base":3e-3,"f_base":6.9e8}]}"#,
    )
    .unwrap();
    let s = |n: &str| dir.join(n).to_str().unwrap().to_string();
    vec![
        "--workload".into(),
        s("w.json"),
        "--platform".into(),
        s("p.json"),
        "--profiles".into(),
        s("r.json"),
    ]
}

#[test]
fn schedule_writes_schedule_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = run("schedule", &tsd_inputs(), &["--deadline", "200", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["schedule.json", "report.json", "manifest.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(report.to_string().contains("total_energy"));

    let schedule = dir.path().join("schedule.json");
    let o = run("validate", &tsd_inputs(), &["--schedule", schedule.to_str().unwrap(), "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("validation.json")).unwrap()).unwrap();
    assert_eq!(v["pass"], true);
}

#[test]
fn tampered_schedule_fails_validation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(run("schedule", &tsd_inputs(), &["--deadline", "100", "--out", out]).status.code(), Some(0));
    let path = dir.path().join("schedule.json");
    let mut s: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let e = s["assignments"][0]["energy_j"].as_f64().unwrap();
    s["assignments"][0]["energy_j"] = (e * 1.01).into();
    std::fs::write(&path, serde_json::to_string(&s).unwrap()).unwrap();
    let o = run("validate", &tsd_inputs(), &["--schedule", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("energy_j"));
}

#[test]
fn infeasible_deadline_exits_two_with_minimum_time() {
    let dir = tempfile::tempdir().unwrap();
    let inputs = write_cpu_only(dir.path());
    let out = dir.path().join("out");
    let o = run("schedule", &inputs, &["--deadline", "0.1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("minimum achievable time"), "{err}");
    // 2,637,824 cycles at 690 MHz.
    assert!(err.contains("3.82"), "{err}");
    assert!(!out.join("schedule.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        let o = run("schedule", &tsd_inputs(), &["--deadline", "50", "--out", d.path().to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0));
    }
    for f in ["schedule.json", "report.json"] {
        let a = std::fs::read(dirs[0].path().join(f)).unwrap();
        let b = std::fs::read(dirs[1].path().join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn compare_writes_fifteen_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("compare", &tsd_inputs(), &["--deadline", "50,200,1000", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("compare.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 15);
    for chunk in rows.chunks(5) {
        let medea = chunk.iter().find(|r| &r[1] == "medea").unwrap();
        let best: f64 = medea[5].parse().unwrap();
        for r in chunk.iter().filter(|r| &r[6] == "true") {
            assert!(best <= r[5].parse::<f64>().unwrap(), "{r:?}");
        }
    }
    // Re-serializing the parsed rows reproduces the file.
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(rdr.headers().unwrap()).unwrap();
    for r in &rows {
        w.write_record(r).unwrap();
    }
    assert_eq!(w.into_inner().unwrap(), std::fs::read(dir.path().join("compare.csv")).unwrap());
}

#[test]
fn ablate_savings_follow_the_formula() {
    let dir = tempfile::tempdir().unwrap();
    let o = run("ablate", &tsd_inputs(), &["--deadline", "100,500", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut rdr = csv::Reader::from_path(dir.path().join("ablation.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 8);
    for chunk in rows.chunks(4) {
        assert_eq!(&chunk[0][1], "none");
        let full: f64 = chunk[0][5].parse().unwrap();
        for r in &chunk[1..] {
            if r[5].is_empty() {
                continue;
            }
            let without: f64 = r[5].parse().unwrap();
            let pct: f64 = r[7].parse().unwrap();
            assert_eq!(pct, edsched::savings(without, full).unwrap());
            assert!(pct >= -1e-9, "{r:?}");
        }
    }
}

#[test]
fn gen_is_deterministic() {
    let dirs: Vec<_> = (0..2).map(|_| tempfile::tempdir().unwrap()).collect();
    for d in &dirs {
        assert_eq!(edsched(&["gen", "--seed", "9", "--out", d.path().to_str().unwrap()]).status.code(), Some(0));
    }
    for f in ["workload.json", "platform.json", "profiles.json"] {
        assert_eq!(
            std::fs::read(dirs[0].path().join(f)).unwrap(),
            std::fs::read(dirs[1].path().join(f)).unwrap()
        );
    }
    let p = |n: &str| dirs[0].path().join(n).to_str().unwrap().to_string();
    let inputs = vec![
        "--workload".into(),
        p("workload.json"),
        "--platform".into(),
        p("platform.json"),
        "--profiles".into(),
        p("profiles.json"),
    ];
    let o = run("schedule", &inputs, &["--deadline", "1000", "--out", dirs[1].path().to_str().unwrap()]);
    assert!(matches!(o.status.code(), Some(0) | Some(2)));
}

#[test]
fn inputs_are_left_untouched() {
    let names = ["tsd_workload.json", "heeptimize.json", "synthetic_tsd_profiles.json", "tsd_groups.json"];
    let before: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(fixture(n)).unwrap()).collect();
    let dir = tempfile::tempdir().unwrap();
    run("schedule", &tsd_inputs(), &["--deadline", "100", "--out", dir.path().to_str().unwrap()]);
    let after: Vec<Vec<u8>> = names.iter().map(|n| std::fs::read(fixture(n)).unwrap()).collect();
    assert_eq!(before, after);
}

#[test]
fn bad_arguments_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    for extra in [
        vec!["--deadline", "-5", "--out", out],
        vec!["--deadline", "100", "--strategy", "fastest", "--out", out],
        vec!["--deadline", "100", "--strategy", "cpu_maxvf", "--ablation", "no_kernel_dvfs", "--out", out],
    ] {
        assert_eq!(run("schedule", &tsd_inputs(), &extra).status.code(), Some(1), "{extra:?}");
    }
    assert_eq!(run("compare", &tsd_inputs(), &["--deadline", "200,100", "--out", out]).status.code(), Some(1));
    let o = edsched(&["schedule", "--workload", "/nonexistent.json", "--platform", "x", "--profiles", "y", "--deadline", "1"]);
    assert_eq!(o.status.code(), Some(1));
}
