use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use edsched_ffi::*;

fn fixture(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(name);
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(eds_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn tsd_problem(deadline_s: f64) -> *mut EdsProblem {
    let mut p = ptr::null_mut();
    let st = unsafe {
        eds_problem_from_files(
            fixture("tsd_workload.json").as_ptr(),
            fixture("heeptimize.json").as_ptr(),
            fixture("synthetic_tsd_profiles.json").as_ptr(),
            deadline_s,
            &mut p,
        )
    };
    assert_eq!(st, EdsStatus::Ok, "{}", last_error());
    assert!(!p.is_null());
    p
}

#[test]
fn solve_report_and_validate_round_trip() {
    let p = tsd_problem(0.2);
    unsafe {
        let mut s = ptr::null_mut();
        assert_eq!(eds_solve(p, &mut s), EdsStatus::Ok, "{}", last_error());
        let n = eds_schedule_len(s);
        assert!(n > 100);

        let mut report = EdsReport::default();
        assert_eq!(eds_schedule_report(s, &mut report), EdsStatus::Ok);
        assert!(report.active_time_s <= 0.2);
        assert_eq!(report.total_energy_j, report.active_energy_j + report.sleep_energy_j);

        let mut sum = 0.0;
        for i in 0..n {
            let mut a = EdsAssignment::default();
            assert_eq!(eds_schedule_assignment(p, s, i, &mut a), EdsStatus::Ok);
            assert_eq!(a.kernel_id, i + 1);
            sum += a.energy_j;
        }
        assert!((sum - report.active_energy_j).abs() <= 1e-12 * sum);
        let mut a = EdsAssignment::default();
        assert_eq!(eds_schedule_assignment(p, s, n, &mut a), EdsStatus::OutOfRange);

        let mut json = ptr::null_mut();
        assert_eq!(eds_schedule_to_json(s, &mut json), EdsStatus::Ok);
        let (mut pass, mut count) = (false, usize::MAX);
        assert_eq!(eds_validate_json(p, json, &mut pass, &mut count), EdsStatus::Ok);
        assert!(pass);
        assert_eq!(count, 0);

        let text = CStr::from_ptr(json).to_str().unwrap().to_string();
        eds_string_free(json);
        let tampered = CString::new(text.replacen("\"cycles\": ", "\"cycles\": 1", 1)).unwrap();
        assert_eq!(eds_validate_json(p, tampered.as_ptr(), &mut pass, &mut count), EdsStatus::Ok);
        assert!(!pass);
        assert_eq!(count, 1, "{}", last_error());
        assert!(last_error().contains("cycles"));

        eds_schedule_free(s);
        eds_problem_free(p);
    }
}

#[test]
fn strategies_and_ablations_by_name() {
    let p = tsd_problem(0.05);
    let groups = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/tsd_groups.json"),
    )
    .unwrap();
    let groups = CString::new(groups).unwrap();
    unsafe {
        let mut s = ptr::null_mut();
        let cpu = CString::new("cpu_maxvf").unwrap();
        assert_eq!(
            eds_run_strategy(p, cpu.as_ptr(), ptr::null(), &mut s),
            EdsStatus::InfeasibleDeadline
        );
        assert!(s.is_null());
        assert!(last_error().contains("deadline"));

        let mut energies = Vec::new();
        for name in ["static_accel_appdvfs", "coarse_appdvfs", "medea"] {
            let n = CString::new(name).unwrap();
            assert_eq!(eds_run_strategy(p, n.as_ptr(), groups.as_ptr(), &mut s), EdsStatus::Ok, "{name}");
            let mut r = EdsReport::default();
            eds_schedule_report(s, &mut r);
            energies.push(r.active_energy_j);
            eds_schedule_free(s);
        }
        assert!(energies[2] <= energies[0] && energies[2] <= energies[1]);

        let a = CString::new("no_kernel_dvfs").unwrap();
        assert_eq!(eds_run_ablation(p, a.as_ptr(), ptr::null(), &mut s), EdsStatus::Ok);
        eds_schedule_free(s);

        let bad = CString::new("fastest").unwrap();
        assert_eq!(
            eds_run_strategy(p, bad.as_ptr(), ptr::null(), &mut s),
            EdsStatus::InvalidArgument
        );
        eds_problem_free(p);
    }
}

#[test]
fn scalar_helpers_and_errors() {
    let p = tsd_problem(1.0);
    unsafe {
        let mut f = 0.0;
        assert_eq!(eds_max_frequency(p, 0.65, &mut f), EdsStatus::Ok);
        assert_eq!(f, 347e6);
        assert_eq!(eds_max_frequency(p, 0.70, &mut f), EdsStatus::UnknownVoltage);

        assert_eq!(eds_problem_set_deadline(p, -1.0), EdsStatus::InvalidArgument);
        assert_eq!(eds_problem_set_options(p, 0, 100, 1e-9), EdsStatus::Ok);
        let mut s = ptr::null_mut();
        assert_eq!(eds_solve(p, &mut s), EdsStatus::Ok);
        eds_schedule_free(s);

        let mut pct = 0.0;
        assert_eq!(eds_savings(576.0, 395.0, &mut pct), EdsStatus::Ok);
        assert!((pct - 31.42).abs() < 0.01);
        assert_eq!(eds_savings(0.0, 1.0, &mut pct), EdsStatus::DivisionByZero);

        assert_eq!(eds_solve(ptr::null(), &mut s), EdsStatus::NullPointer);
        eds_problem_free(p);
        eds_problem_free(ptr::null_mut());
    }

    let mut q = ptr::null_mut();
    let missing = CString::new("/nonexistent/workload.json").unwrap();
    let st = unsafe {
        eds_problem_from_files(
            missing.as_ptr(),
            fixture("heeptimize.json").as_ptr(),
            fixture("synthetic_tsd_profiles.json").as_ptr(),
            1.0,
            &mut q,
        )
    };
    assert_eq!(st, EdsStatus::Io);
    assert!(q.is_null());
}

#[test]
fn problem_from_json_strings() {
    let w = CString::new(
        r#"{"name":"one","kernels":[{"kind":"add","size":[64],"data_width":8}]}"#,
    )
    .unwrap();
    let plat = CString::new(
        r#"{"pes":[{"id":"cpu","role":"cpu","lm_capacity":4096,"bus_width":4,"dma_setup":0,"cycles_per_beat":0}],
            "vf_table":[{"voltage_v":0.5,"frequency_hz":1e8}],"shared_capacity_bytes":4096,"sleep_power_w":0.0}"#,
    )
    .unwrap();
    let prof = CString::new(
        r#"{"cycles":[{"pe":"cpu","kind":"add","size":[64],"data_width":8,"proc_cycles":1000}],
            "power":[{"pe":"cpu","kind":"add","voltage":0.5,"p_stat":0.001,"p_dyn_base":0.001,"f_base":1e8}]}"#,
    )
    .unwrap();
    let mut p = ptr::null_mut();
    unsafe {
        assert_eq!(
            eds_problem_from_json(w.as_ptr(), plat.as_ptr(), prof.as_ptr(), 1e-3, &mut p),
            EdsStatus::Ok,
            "{}",
            last_error()
        );
        let mut s = ptr::null_mut();
        assert_eq!(eds_solve(p, &mut s), EdsStatus::Ok);
        let mut a = EdsAssignment::default();
        eds_schedule_assignment(p, s, 0, &mut a);
        assert_eq!(a.cycles, 1000);
        assert_eq!(a.time_s, 1e-5);
        assert_eq!(a.energy_j, 0.002 * 1e-5);
        eds_schedule_free(s);
        eds_problem_free(p);
    }
}

#[test]
fn header_declares_every_entry_point() {
    let header = std::fs::read_to_string(
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include/edsched.h"),
    )
    .unwrap();
    for f in [
        "eds_last_error_message",
        "eds_problem_from_files",
        "eds_problem_from_json",
        "eds_problem_free",
        "eds_solve",
        "eds_run_strategy",
        "eds_run_ablation",
        "eds_schedule_to_json",
        "eds_validate_json",
        "eds_savings",
        "EDS_STATUS_INFEASIBLE_DEADLINE",
    ] {
        assert!(header.contains(f), "missing {f}");
    }
}
