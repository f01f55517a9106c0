//! C ABI for the `edsched` scheduler.
//!
//! Every function returns an [`EdsStatus`]. On failure a message is kept
//! per thread and can be read with [`eds_last_error_message`]. Handles are
//! opaque and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use edsched::schedule::ScheduleFile;
use edsched::tiling::TilingMode;
use edsched::{
    baselines, optimizer, validator, Ablation, Error, KernelGroup, ModelOptions, PlatformSpec,
    Problem, Profiles, Strategy, Workload,
};

/// Result code of every `eds_*` call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    Validation = 5,
    UnknownVoltage = 6,
    MissingProfile = 7,
    Untileable = 8,
    NoFeasibleMode = 9,
    NoValidConfiguration = 10,
    InfeasibleDeadline = 11,
    DegenerateMeasurement = 12,
    DivisionByZero = 13,
    UnknownReference = 14,
    InvalidArgument = 15,
    OutOfRange = 16,
    Panic = 99,
}

impl From<&Error> for EdsStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Io { .. } => EdsStatus::Io,
            Error::Parse { .. } => EdsStatus::Parse,
            Error::Validation { .. } => EdsStatus::Validation,
            Error::UnknownVoltage(_) => EdsStatus::UnknownVoltage,
            Error::MissingProfile { .. } => EdsStatus::MissingProfile,
            Error::Untileable { .. } => EdsStatus::Untileable,
            Error::NoFeasibleMode { .. } => EdsStatus::NoFeasibleMode,
            Error::NoValidConfiguration { .. } => EdsStatus::NoValidConfiguration,
            Error::InfeasibleDeadline { .. } => EdsStatus::InfeasibleDeadline,
            Error::DegenerateMeasurement(_) => EdsStatus::DegenerateMeasurement,
            Error::DivisionByZero(_) => EdsStatus::DivisionByZero,
            Error::UnknownReference(_) => EdsStatus::UnknownReference,
            Error::InvalidArgument(_) => EdsStatus::InvalidArgument,
        }
    }
}

/// A loaded workload, platform and profile set with a deadline.
pub struct EdsProblem {
    inner: Problem,
}

/// A computed schedule with its energy report.
pub struct EdsSchedule {
    file: ScheduleFile,
}

/// One kernel's configuration. `mode`: 0 untiled, 1 single buffer, 2 double buffer.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdsAssignment {
    pub kernel_id: usize,
    pub pe_index: usize,
    pub voltage_v: f64,
    pub frequency_hz: f64,
    pub mode: u32,
    pub n_tiles: u64,
    pub cycles: u64,
    pub time_s: f64,
    pub power_w: f64,
    pub energy_j: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EdsReport {
    pub deadline_s: f64,
    pub active_time_s: f64,
    pub sleep_time_s: f64,
    pub active_energy_j: f64,
    pub sleep_energy_j: f64,
    pub total_energy_j: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(EdsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(EdsStatus::from(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EdsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            EdsStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            EdsStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(EdsStatus::NullPointer, format!("`{name}` is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(EdsStatus::InvalidUtf8, format!("`{name}` is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(EdsStatus::NullPointer, format!("`{name}` is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(EdsStatus::NullPointer, format!("`{name}` is null")))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next `eds_*` call on the same thread.
#[no_mangle]
pub extern "C" fn eds_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

fn build_problem(w: Workload, spec: PlatformSpec, profiles: Profiles, deadline_s: f64) -> Result<Box<EdsProblem>, Failure> {
    Ok(Box::new(EdsProblem {
        inner: Problem::new(w, spec, profiles, deadline_s)?,
    }))
}

/// Loads a problem from three JSON files. `deadline_s` is in seconds.
///
/// # Safety
/// Paths must be valid NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eds_problem_from_files(
    workload_path: *const c_char,
    platform_path: *const c_char,
    profiles_path: *const c_char,
    deadline_s: f64,
    out: *mut *mut EdsProblem,
) -> EdsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let w = edsched::load_workload(str_arg(workload_path, "workload_path")?)?;
        let spec = edsched::load_platform(str_arg(platform_path, "platform_path")?)?;
        let profiles = edsched::load_profiles(str_arg(profiles_path, "profiles_path")?, &spec)?;
        *out = Box::into_raw(build_problem(w, spec, profiles, deadline_s)?);
        Ok(())
    })
}

/// Builds a problem from three JSON documents.
///
/// # Safety
/// Strings must be valid NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eds_problem_from_json(
    workload_json: *const c_char,
    platform_json: *const c_char,
    profiles_json: *const c_char,
    deadline_s: f64,
    out: *mut *mut EdsProblem,
) -> EdsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let w = Workload::from_json_str(str_arg(workload_json, "workload_json")?)?;
        let spec = PlatformSpec::from_json_str(str_arg(platform_json, "platform_json")?)?;
        let profiles = Profiles::from_json_str(str_arg(profiles_json, "profiles_json")?, &spec)?;
        *out = Box::into_raw(build_problem(w, spec, profiles, deadline_s)?);
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a handle from `eds_problem_from_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn eds_problem_free(p: *mut EdsProblem) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn eds_problem_set_deadline(p: *mut EdsProblem, deadline_s: f64) -> EdsStatus {
    guard(|| {
        let p = out_arg(p, "problem")?;
        p.inner = p.inner.with_deadline(deadline_s)?;
        Ok(())
    })
}

/// Sets the tile overhead, V-F switch cycles and V-F switch energy (J).
///
/// # Safety
/// `p` must be a live problem handle.
#[no_mangle]
pub unsafe extern "C" fn eds_problem_set_options(
    p: *mut EdsProblem,
    tile_overhead_cycles: u64,
    vf_switch_cycles: u64,
    vf_switch_energy_j: f64,
) -> EdsStatus {
    guard(|| {
        let p = out_arg(p, "problem")?;
        if !(vf_switch_energy_j.is_finite() && vf_switch_energy_j >= 0.0) {
            return Err(Failure(EdsStatus::InvalidArgument, "vf_switch_energy_j must be >= 0".into()));
        }
        p.inner.options = ModelOptions {
            tile_overhead_cycles,
            vf_switch_cycles,
            vf_switch_energy: vf_switch_energy_j,
        };
        Ok(())
    })
}

/// Maximum frequency (Hz) at a listed voltage.
///
/// # Safety
/// `p` and `out_hz` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn eds_max_frequency(p: *const EdsProblem, voltage_v: f64, out_hz: *mut f64) -> EdsStatus {
    guard(|| {
        let p = ref_arg(p, "problem")?;
        *out_arg(out_hz, "out_hz")? = edsched::max_frequency(&p.inner.spec, voltage_v)?;
        Ok(())
    })
}

fn finish(label: &str, p: &Problem, r: edsched::Result<(edsched::Schedule, edsched::EnergyReport)>) -> Result<*mut EdsSchedule, Failure> {
    let (s, report) = r?;
    debug_assert_eq!(report, optimizer::report(p, &s));
    Ok(Box::into_raw(Box::new(EdsSchedule {
        file: ScheduleFile::new(label, &s, &report),
    })))
}

/// Minimum-energy schedule meeting the problem's deadline.
///
/// # Safety
/// `p` must be a live problem handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eds_solve(p: *const EdsProblem, out: *mut *mut EdsSchedule) -> EdsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = &ref_arg(p, "problem")?.inner;
        let r = optimizer::solve(p).map(|s| {
            let rep = optimizer::report(p, &s);
            (s, rep)
        });
        *out = finish("medea", p, r)?;
        Ok(())
    })
}

unsafe fn groups_arg(json: *const c_char, n: usize) -> Result<Vec<KernelGroup>, Failure> {
    if json.is_null() {
        return Ok(baselines::singleton_groups(n));
    }
    let groups: Vec<KernelGroup> = serde_json::from_str(str_arg(json, "groups_json")?)
        .map_err(|e| Failure(EdsStatus::Parse, format!("groups: {e}")))?;
    baselines::check_groups(&groups, n)?;
    Ok(groups)
}

/// Runs a named strategy (`cpu_maxvf`, `static_accel_maxvf`,
/// `static_accel_appdvfs`, `coarse_appdvfs`, `medea`). `groups_json` may be
/// null for one group per kernel.
///
/// # Safety
/// `p` must be a live problem handle, strings valid or (for groups) null,
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eds_run_strategy(
    p: *const EdsProblem,
    strategy: *const c_char,
    groups_json: *const c_char,
    out: *mut *mut EdsSchedule,
) -> EdsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = &ref_arg(p, "problem")?.inner;
        let s: Strategy = str_arg(strategy, "strategy")?.parse()?;
        let groups = groups_arg(groups_json, p.workload.len())?;
        *out = finish(s.as_str(), p, baselines::run_strategy(p, s, Some(&groups)))?;
        Ok(())
    })
}

/// Runs a named ablation (`none`, `no_kernel_dvfs`, `no_adaptive_tiling`,
/// `no_kernel_sched`).
///
/// # Safety
/// As for [`eds_run_strategy`].
#[no_mangle]
pub unsafe extern "C" fn eds_run_ablation(
    p: *const EdsProblem,
    ablation: *const c_char,
    groups_json: *const c_char,
    out: *mut *mut EdsSchedule,
) -> EdsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = &ref_arg(p, "problem")?.inner;
        let a: Ablation = str_arg(ablation, "ablation")?.parse()?;
        let groups = groups_arg(groups_json, p.workload.len())?;
        *out = finish(a.as_str(), p, baselines::run_ablation(p, a, &groups))?;
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a live schedule handle.
#[no_mangle]
pub unsafe extern "C" fn eds_schedule_free(s: *mut EdsSchedule) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Number of assignments; 0 for a null handle.
///
/// # Safety
/// `s` must be null or a live schedule handle.
#[no_mangle]
pub unsafe extern "C" fn eds_schedule_len(s: *const EdsSchedule) -> usize {
    s.as_ref().map_or(0, |s| s.file.assignments.len())
}

/// # Safety
/// `p` and `s` must be live handles and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eds_schedule_assignment(
    p: *const EdsProblem,
    s: *const EdsSchedule,
    index: usize,
    out: *mut EdsAssignment,
) -> EdsStatus {
    guard(|| {
        let p = &ref_arg(p, "problem")?.inner;
        let s = ref_arg(s, "schedule")?;
        let out = out_arg(out, "out")?;
        let a = s.file.assignments.get(index).ok_or_else(|| {
            Failure(
                EdsStatus::OutOfRange,
                format!("assignment {index} of {}", s.file.assignments.len()),
            )
        })?;
        let pe_index = p
            .spec
            .pe_index(&a.pe)
            .ok_or_else(|| Failure(EdsStatus::UnknownReference, format!("PE `{}`", a.pe)))?;
        *out = EdsAssignment {
            kernel_id: a.kernel_id,
            pe_index,
            voltage_v: a.voltage_v,
            frequency_hz: a.frequency_hz,
            mode: match a.mode {
                TilingMode::Untiled => 0,
                TilingMode::SingleBuffer => 1,
                TilingMode::DoubleBuffer => 2,
            },
            n_tiles: a.n_tiles,
            cycles: a.cycles,
            time_s: a.time_s,
            power_w: a.power_w,
            energy_j: a.energy_j,
        };
        Ok(())
    })
}

/// # Safety
/// `s` must be a live schedule handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eds_schedule_report(s: *const EdsSchedule, out: *mut EdsReport) -> EdsStatus {
    guard(|| {
        let r = ref_arg(s, "schedule")?.file.report;
        *out_arg(out, "out")? = EdsReport {
            deadline_s: r.deadline,
            active_time_s: r.active_time,
            sleep_time_s: r.sleep_time,
            active_energy_j: r.active_energy,
            sleep_energy_j: r.sleep_energy,
            total_energy_j: r.total_energy,
        };
        Ok(())
    })
}

/// Serializes a schedule in the schedule-file format. Release the string
/// with [`eds_string_free`].
///
/// # Safety
/// `s` must be a live schedule handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eds_schedule_to_json(s: *const EdsSchedule, out: *mut *mut c_char) -> EdsStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let json = ref_arg(s, "schedule")?.file.to_json_string();
        *out = CString::new(json)
            .map_err(|e| Failure(EdsStatus::Parse, e.to_string()))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, freed once.
#[no_mangle]
pub unsafe extern "C" fn eds_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Checks a schedule document against the problem's models. Sets
/// `out_pass` and the number of mismatching fields; details go to the
/// last-error message.
///
/// # Safety
/// `p` must be a live problem handle, `schedule_json` a valid string and the
/// out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn eds_validate_json(
    p: *const EdsProblem,
    schedule_json: *const c_char,
    out_pass: *mut bool,
    out_mismatches: *mut usize,
) -> EdsStatus {
    let mut details = String::new();
    let status = guard(|| {
        let p = &ref_arg(p, "problem")?.inner;
        let file = ScheduleFile::from_json_str(str_arg(schedule_json, "schedule_json")?)?;
        let pass = out_arg(out_pass, "out_pass")?;
        let count = out_arg(out_mismatches, "out_mismatches")?;
        let r = validator::validate(p, &file)?;
        *pass = r.pass;
        *count = r.mismatches.len();
        for m in &r.mismatches {
            let at = m.kernel_id.map_or_else(|| "schedule".to_string(), |k| format!("kernel {k}"));
            details.push_str(&format!("{at}: {} expected {} got {}\n", m.field, m.expected, m.actual));
        }
        Ok(())
    });
    if status == EdsStatus::Ok && !details.is_empty() {
        set_error(details.trim_end());
    }
    status
}

/// Percentage saved by a feature: (e_without - e_full) / e_without * 100.
///
/// # Safety
/// `out_pct` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn eds_savings(e_without: f64, e_full: f64, out_pct: *mut f64) -> EdsStatus {
    guard(|| {
        *out_arg(out_pct, "out_pct")? = edsched::savings(e_without, e_full)?;
        Ok(())
    })
}
