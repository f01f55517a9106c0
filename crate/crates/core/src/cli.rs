//! Command-line front end.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::baselines::{self, Ablation, KernelGroup, Strategy};
use crate::error::{Error, Result};
use crate::gen::{self, GenConfig};
use crate::optimizer::{Problem, SolverKind};
use crate::perfmodel::ModelOptions;
use crate::platform::{load_platform, load_profiles};
use crate::schedule::{EnergyReport, ReportFile, Schedule, ScheduleFile};
use crate::validator;
use crate::workload::load_workload;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_INVALID: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "edsched", version, about = "Energy-optimal kernel scheduling under a deadline")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Schedule one workload for one deadline.
    Schedule(ScheduleArgs),
    /// Run every strategy at every deadline.
    Compare(SweepArgs),
    /// Run every ablation at every deadline.
    Ablate(SweepArgs),
    /// Check a schedule file against the models.
    Validate(ValidateArgs),
    /// Write a random workload, platform and profiles.
    Gen(GenArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct InputArgs {
    #[arg(long)]
    pub workload: PathBuf,
    #[arg(long)]
    pub platform: PathBuf,
    #[arg(long)]
    pub profiles: PathBuf,
    /// Kernel groups for group-level strategies; one group per kernel if absent.
    #[arg(long)]
    pub groups: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub tile_overhead_cycles: u64,
    #[arg(long, default_value_t = 0)]
    pub vf_switch_cycles: u64,
    #[arg(long, default_value_t = 0.0)]
    pub vf_switch_energy_uj: f64,
    /// Use the time-quantized solver with this quantum (µs).
    #[arg(long)]
    pub dp_quantum_us: Option<f64>,
}

#[derive(Debug, Args)]
pub struct ScheduleArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Deadline in milliseconds.
    #[arg(long)]
    pub deadline: f64,
    #[arg(long, default_value = "medea")]
    pub strategy: String,
    #[arg(long, default_value = "none")]
    pub ablation: String,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Comma-separated deadlines in milliseconds.
    #[arg(long, value_delimiter = ',', required = true)]
    pub deadline: Vec<f64>,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long)]
    pub schedule: PathBuf,
    /// Deadline in milliseconds; taken from the schedule's report if absent.
    #[arg(long)]
    pub deadline: Option<f64>,
    /// Directory for `validation.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

/// Everything a run was started with, written next to its outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub input: InputArgs,
    pub deadlines_ms: Vec<f64>,
    pub strategy: Option<String>,
    pub ablation: Option<String>,
    pub seed: Option<u64>,
}

impl InputArgs {
    fn options(&self) -> ModelOptions {
        ModelOptions {
            tile_overhead_cycles: self.tile_overhead_cycles,
            vf_switch_cycles: self.vf_switch_cycles,
            vf_switch_energy: self.vf_switch_energy_uj * 1e-6,
        }
    }

    fn problem(&self, deadline_ms: f64) -> Result<Problem> {
        let workload = load_workload(&self.workload)?;
        let spec = load_platform(&self.platform)?;
        let profiles = load_profiles(&self.profiles, &spec)?;
        let solver = match self.dp_quantum_us {
            Some(q) if q > 0.0 && q.is_finite() => SolverKind::QuantizedDp { quantum: q * 1e-6 },
            Some(q) => return Err(Error::InvalidArgument(format!("dp quantum must be > 0, got {q}"))),
            None => SolverKind::Exact,
        };
        if self.vf_switch_energy_uj < 0.0 || !self.vf_switch_energy_uj.is_finite() {
            return Err(Error::InvalidArgument("vf switch energy must be >= 0".into()));
        }
        Ok(Problem::new(workload, spec, profiles, deadline_ms * 1e-3)?
            .with_options(self.options())
            .with_solver(solver))
    }

    fn groups(&self, n: usize) -> Result<Vec<KernelGroup>> {
        let groups = match &self.groups {
            Some(path) => baselines::load_groups(path)?,
            None => baselines::singleton_groups(n),
        };
        baselines::check_groups(&groups, n)?;
        Ok(groups)
    }
}

/// Writes `contents` to `path` through a temporary file in the same
/// directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(contents).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InfeasibleDeadline { .. } => EXIT_INFEASIBLE,
        _ => EXIT_INPUT,
    }
}

/// Seconds to milliseconds, rounded to 1 ns so unit round trips print cleanly.
fn ms(seconds: f64) -> f64 {
    (seconds * 1e9).round() / 1e6
}

fn report_error(e: &Error) {
    match e {
        Error::InfeasibleDeadline {
            deadline,
            min_achievable_time,
        } => eprintln!(
            "infeasible: deadline {} ms, minimum achievable time {} ms",
            ms(*deadline),
            ms(*min_achievable_time)
        ),
        _ => eprintln!("error: {e}"),
    }
}

/// Parses `args` and runs the command. Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INPUT } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Schedule(a) => schedule(&a),
        Command::Compare(a) => compare(&a),
        Command::Ablate(a) => ablate(&a),
        Command::Validate(a) => validate(&a),
        Command::Gen(a) => generate(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            report_error(&e);
            exit_code(&e)
        }
    }
}

fn manifest(command: &str, input: &InputArgs, deadlines_ms: Vec<f64>) -> RunManifest {
    RunManifest {
        command: command.into(),
        version: env!("CARGO_PKG_VERSION").into(),
        input: input.clone(),
        deadlines_ms,
        strategy: None,
        ablation: None,
        seed: None,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("value serializes");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

fn schedule(a: &ScheduleArgs) -> Result<i32> {
    let strategy: Strategy = a.strategy.parse()?;
    let ablation: Ablation = a.ablation.parse()?;
    if ablation != Ablation::None && strategy != Strategy::Medea {
        return Err(Error::InvalidArgument(
            "ablations apply to the medea strategy only".into(),
        ));
    }
    let p = a.input.problem(a.deadline)?;
    let groups = a.input.groups(p.workload.len())?;
    let (s, r) = if ablation == Ablation::None {
        baselines::run_strategy(&p, strategy, Some(&groups))?
    } else {
        baselines::run_ablation(&p, ablation, &groups)?
    };
    let label = if ablation == Ablation::None {
        strategy.to_string()
    } else {
        ablation.to_string()
    };
    write_atomic(
        &a.out.join("schedule.json"),
        ScheduleFile::new(&label, &s, &r).to_json_string().as_bytes(),
    )?;
    write_atomic(
        &a.out.join("report.json"),
        ReportFile::new(&label, &r).to_json_string().as_bytes(),
    )?;
    let mut m = manifest("schedule", &a.input, vec![a.deadline]);
    m.strategy = Some(strategy.to_string());
    m.ablation = Some(ablation.to_string());
    write_json(&a.out.join("manifest.json"), &m)?;
    println!(
        "{label}: active {:.3} ms, sleep {:.3} ms, energy active {:.3} uJ + sleep {:.3} uJ = {:.3} uJ",
        r.active_time * 1e3,
        r.sleep_time * 1e3,
        r.active_energy * 1e6,
        r.sleep_energy * 1e6,
        r.total_energy * 1e6
    );
    Ok(EXIT_OK)
}

/// One row of compare.csv or ablation.csv. Energies are empty when
/// infeasible.
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub deadline_ms: f64,
    pub name: String,
    pub active_time_ms: Option<f64>,
    pub active_energy_uj: Option<f64>,
    pub sleep_energy_uj: Option<f64>,
    pub total_energy_uj: Option<f64>,
    pub feasible: bool,
}

fn row(deadline_ms: f64, name: &str, outcome: &Result<(Schedule, EnergyReport)>) -> Result<SweepRow> {
    match outcome {
        Ok((_, r)) => Ok(SweepRow {
            deadline_ms,
            name: name.into(),
            active_time_ms: Some(r.active_time * 1e3),
            active_energy_uj: Some(r.active_energy * 1e6),
            sleep_energy_uj: Some(r.sleep_energy * 1e6),
            total_energy_uj: Some(r.total_energy * 1e6),
            feasible: true,
        }),
        Err(Error::InfeasibleDeadline { .. } | Error::NoValidConfiguration { .. }) => Ok(SweepRow {
            deadline_ms,
            name: name.into(),
            active_time_ms: None,
            active_energy_uj: None,
            sleep_energy_uj: None,
            total_energy_uj: None,
            feasible: false,
        }),
        Err(e) => Err(Error::InvalidArgument(e.to_string())),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn csv_bytes(header: &[&str], records: Vec<Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::parse("csv", e);
    w.write_record(header).map_err(csv_err)?;
    for r in records {
        w.write_record(&r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::parse("csv", e))
}

/// Runs every strategy at every deadline.
pub fn compare_rows(base: &Problem, deadlines_ms: &[f64], groups: &[KernelGroup]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &d in deadlines_ms {
        let p = base.with_deadline(d * 1e-3)?;
        for s in Strategy::ALL {
            rows.push(row(d, s.as_str(), &baselines::run_strategy(&p, s, Some(groups)))?);
        }
    }
    Ok(rows)
}

/// Runs the full optimizer and every ablation at every deadline. The
/// second element of each pair is the savings of the feature over the
/// full optimizer's total energy, in percent.
pub fn ablate_rows(
    base: &Problem,
    deadlines_ms: &[f64],
    groups: &[KernelGroup],
) -> Result<Vec<(SweepRow, Option<f64>)>> {
    let mut rows = Vec::new();
    for &d in deadlines_ms {
        let p = base.with_deadline(d * 1e-3)?;
        let mut full_energy = None;
        for a in Ablation::ALL {
            let r = row(d, a.as_str(), &baselines::run_ablation(&p, a, groups))?;
            let saving = match (a, full_energy, r.total_energy_uj) {
                (Ablation::None, _, e) => {
                    full_energy = e;
                    None
                }
                (_, Some(full), Some(without)) => baselines::savings(without, full).ok(),
                _ => None,
            };
            rows.push((r, saving));
        }
    }
    Ok(rows)
}

fn sweep_record(r: &SweepRow) -> Vec<String> {
    vec![
        r.deadline_ms.to_string(),
        r.name.clone(),
        opt(r.active_time_ms),
        opt(r.active_energy_uj),
        opt(r.sleep_energy_uj),
        opt(r.total_energy_uj),
        r.feasible.to_string(),
    ]
}

fn check_deadlines(d: &[f64]) -> Result<()> {
    if d.is_empty() || d.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(Error::InvalidArgument(format!("deadlines must be > 0 ms, got {d:?}")));
    }
    if d.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(format!("deadlines must be strictly increasing, got {d:?}")));
    }
    Ok(())
}

fn print_rows(rows: &[SweepRow]) {
    for r in rows {
        match r.total_energy_uj {
            Some(e) => println!("{:>10} ms  {:<22} {:>14.3} uJ", r.deadline_ms, r.name, e),
            None => println!("{:>10} ms  {:<22} {:>14}", r.deadline_ms, r.name, "infeasible"),
        }
    }
}

fn compare(a: &SweepArgs) -> Result<i32> {
    check_deadlines(&a.deadline)?;
    let p = a.input.problem(a.deadline[0])?;
    let groups = a.input.groups(p.workload.len())?;
    let rows = compare_rows(&p, &a.deadline, &groups)?;
    let header = [
        "deadline_ms",
        "strategy",
        "active_time_ms",
        "active_energy_uj",
        "sleep_energy_uj",
        "total_energy_uj",
        "feasible",
    ];
    let bytes = csv_bytes(&header, rows.iter().map(sweep_record).collect())?;
    write_atomic(&a.out.join("compare.csv"), &bytes)?;
    write_json(&a.out.join("manifest.json"), &manifest("compare", &a.input, a.deadline.clone()))?;
    print_rows(&rows);
    Ok(EXIT_OK)
}

fn ablate(a: &SweepArgs) -> Result<i32> {
    check_deadlines(&a.deadline)?;
    let p = a.input.problem(a.deadline[0])?;
    let groups = a.input.groups(p.workload.len())?;
    let rows = ablate_rows(&p, &a.deadline, &groups)?;
    let header = [
        "deadline_ms",
        "ablation",
        "active_time_ms",
        "active_energy_uj",
        "sleep_energy_uj",
        "total_energy_uj",
        "feasible",
        "savings_pct",
    ];
    let records = rows
        .iter()
        .map(|(r, s)| {
            let mut rec = sweep_record(r);
            rec.push(opt(*s));
            rec
        })
        .collect();
    let bytes = csv_bytes(&header, records)?;
    write_atomic(&a.out.join("ablation.csv"), &bytes)?;
    write_json(&a.out.join("manifest.json"), &manifest("ablate", &a.input, a.deadline.clone()))?;
    let plain: Vec<SweepRow> = rows.into_iter().map(|(r, _)| r).collect();
    print_rows(&plain);
    Ok(EXIT_OK)
}

fn validate(a: &ValidateArgs) -> Result<i32> {
    let text = crate::platform::read(&a.schedule)?;
    let file = ScheduleFile::from_json_str(&text)?;
    let deadline_ms = a.deadline.unwrap_or(file.report.deadline * 1e3);
    let mut p = a.input.problem(deadline_ms)?;
    if a.deadline.is_none() {
        // Keep the stored value bit-for-bit.
        p.deadline = file.report.deadline;
    }
    let result = validator::validate(&p, &file)?;
    if let Some(dir) = &a.out {
        write_json(&dir.join("validation.json"), &result)?;
    }
    if result.pass {
        println!("valid: {} assignments", file.assignments.len());
        Ok(EXIT_OK)
    } else {
        for m in &result.mismatches {
            let at = m.kernel_id.map(|k| format!("kernel {k}")).unwrap_or_else(|| "schedule".into());
            eprintln!("{at}: {} expected {} got {}", m.field, m.expected, m.actual);
        }
        println!("invalid: {} mismatches", result.mismatches.len());
        Ok(EXIT_INVALID)
    }
}

fn generate(a: &GenArgs) -> Result<i32> {
    let inst = gen::generate(a.seed, &GenConfig::default());
    write_atomic(&a.out.join("workload.json"), inst.workload.to_json_string().as_bytes())?;
    write_atomic(&a.out.join("platform.json"), inst.platform.to_json_string().as_bytes())?;
    write_atomic(&a.out.join("profiles.json"), inst.profiles.to_json_string().as_bytes())?;
    println!(
        "seed {}: {} kernels, {} PEs, {} V-F points",
        a.seed,
        inst.workload.len(),
        inst.platform.pes.len(),
        inst.platform.vf_table.len()
    );
    Ok(EXIT_OK)
}
