//! Comparison strategies and single-feature ablations.
//!
//! Every baseline runs double-buffered tiling and goes through the same
//! timing and power models as the optimizer, so their schedules can be
//! checked by the same validator.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mckp::{self, Choice};
use crate::optimizer::{self, Enumeration, Problem};
use crate::perfmodel::{self, Configuration, ModePolicy};
use crate::platform::PeRole;
use crate::schedule::{Assignment, EnergyReport, Schedule, Totals};
use crate::tiling::TilingMode;
use crate::workload::Kernel;

pub use crate::workload::KernelGroup;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    CpuMaxvf,
    StaticAccelMaxvf,
    StaticAccelAppdvfs,
    CoarseAppdvfs,
    Medea,
}

impl Strategy {
    pub const ALL: [Strategy; 5] = [
        Strategy::CpuMaxvf,
        Strategy::StaticAccelMaxvf,
        Strategy::StaticAccelAppdvfs,
        Strategy::CoarseAppdvfs,
        Strategy::Medea,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::CpuMaxvf => "cpu_maxvf",
            Strategy::StaticAccelMaxvf => "static_accel_maxvf",
            Strategy::StaticAccelAppdvfs => "static_accel_appdvfs",
            Strategy::CoarseAppdvfs => "coarse_appdvfs",
            Strategy::Medea => "medea",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    None,
    NoKernelDvfs,
    NoAdaptiveTiling,
    NoKernelSched,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::None,
        Ablation::NoKernelDvfs,
        Ablation::NoAdaptiveTiling,
        Ablation::NoKernelSched,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoKernelDvfs => "no_kernel_dvfs",
            Ablation::NoAdaptiveTiling => "no_adaptive_tiling",
            Ablation::NoKernelSched => "no_kernel_sched",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Ablation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown ablation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AblationOptions {
    /// In `no_kernel_sched`, run members a PE cannot execute on the CPU at
    /// the group's voltage instead of invalidating that PE for the group.
    pub group_cpu_fallback: bool,
}

impl Default for AblationOptions {
    fn default() -> Self {
        AblationOptions {
            group_cpu_fallback: true,
        }
    }
}

/// Checks that `groups` are contiguous and partition kernels 1..=n.
pub fn check_groups(groups: &[KernelGroup], n: usize) -> Result<()> {
    let mut next = 1;
    for (i, g) in groups.iter().enumerate() {
        if g.first_kernel != next || g.last_kernel < g.first_kernel {
            return Err(Error::validation(
                Some(i + 1),
                format!(
                    "group `{}` must start at kernel {next} and be non-empty (got {}..={})",
                    g.name, g.first_kernel, g.last_kernel
                ),
            ));
        }
        next = g.last_kernel + 1;
    }
    if next != n + 1 {
        return Err(Error::validation(
            None,
            format!("groups cover kernels 1..{} but the workload has {n}", next - 1),
        ));
    }
    Ok(())
}

/// One group per kernel.
pub fn singleton_groups(n: usize) -> Vec<KernelGroup> {
    (1..=n)
        .map(|i| KernelGroup {
            name: format!("k{i}"),
            first_kernel: i,
            last_kernel: i,
        })
        .collect()
}

pub fn load_groups(path: impl AsRef<std::path::Path>) -> Result<Vec<KernelGroup>> {
    let text = crate::platform::read(path.as_ref())?;
    serde_json::from_str(&text).map_err(|e| Error::parse("groups", e))
}

fn config(p: &Problem, k: &Kernel, pe: usize, v: usize, policy: ModePolicy) -> Option<Configuration> {
    let timing = perfmodel::pe_timing(&p.spec, &p.profiles, k, pe, policy, &p.options).ok()?;
    perfmodel::configure(&p.spec, &p.profiles, k, &timing, v).ok()
}

/// `k` on `pe` at `v`, or on the CPU at `v` if `pe` cannot run it.
fn with_fallback(p: &Problem, k: &Kernel, pe: usize, v: usize, policy: ModePolicy) -> Result<Configuration> {
    config(p, k, pe, v, policy)
        .or_else(|| config(p, k, p.spec.cpu_index(), v, policy))
        .ok_or(Error::NoValidConfiguration { kernel_id: k.id })
}

const DB: ModePolicy = ModePolicy::Forced(TilingMode::DoubleBuffer);

fn build(p: &Problem, configs: Vec<Configuration>) -> Schedule {
    let assignments = p
        .workload
        .kernels
        .iter()
        .zip(configs)
        .map(|(k, config)| Assignment {
            kernel_id: k.id,
            config,
        })
        .collect();
    Schedule::new(assignments, &p.options)
}

/// Whole workload on `pe` (CPU fallback) at voltage `v`, double-buffered.
fn static_schedule(p: &Problem, pe: usize, v: usize) -> Result<Schedule> {
    let configs = p
        .workload
        .kernels
        .iter()
        .map(|k| with_fallback(p, k, pe, v, DB))
        .collect::<Result<Vec<_>>>()?;
    Ok(build(p, configs))
}

fn meet(p: &Problem, s: Schedule) -> Result<Schedule> {
    if s.total_active_time > p.deadline {
        return Err(Error::InfeasibleDeadline {
            deadline: p.deadline,
            min_achievable_time: s.total_active_time,
        });
    }
    Ok(s)
}

/// The accelerator with the least total workload energy at the top V-F
/// point (CPU fallback included). The CPU itself if there is none.
pub fn most_efficient_accelerator(p: &Problem) -> Result<usize> {
    let vmax = p.spec.max_voltage_index();
    let mut best: Option<(f64, usize)> = None;
    let mut last_err = None;
    for (i, pe) in p.spec.pes.iter().enumerate() {
        if pe.role != PeRole::Accelerator {
            continue;
        }
        match static_schedule(p, i, vmax) {
            Ok(s) => {
                if best.map_or(true, |(e, _)| s.total_active_energy < e) {
                    best = Some((s.total_active_energy, i));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match (best, last_err) {
        (Some((_, i)), _) => Ok(i),
        (None, Some(e)) => Err(e),
        (None, None) => Ok(p.spec.cpu_index()),
    }
}

/// Among the feasible candidates, the one with the least active energy.
/// Errors with the fastest candidate's time if none meets the deadline.
fn best_feasible(p: &Problem, candidates: Vec<Result<Schedule>>) -> Result<Schedule> {
    let mut best: Option<Schedule> = None;
    let mut fastest = f64::INFINITY;
    let mut err = None;
    for c in candidates {
        match c {
            Ok(s) => {
                fastest = fastest.min(s.total_active_time);
                if s.total_active_time <= p.deadline
                    && best
                        .as_ref()
                        .map_or(true, |b| s.total_active_energy < b.total_active_energy)
                {
                    best = Some(s);
                }
            }
            Err(e) => err = Some(e),
        }
    }
    match best {
        Some(s) => Ok(s),
        None if fastest.is_finite() => Err(Error::InfeasibleDeadline {
            deadline: p.deadline,
            min_achievable_time: fastest,
        }),
        None => Err(err.unwrap_or(Error::InvalidArgument("no candidate schedules".into()))),
    }
}

fn coarse_schedule(p: &Problem, groups: &[KernelGroup], v: usize) -> Result<Schedule> {
    let mut configs = Vec::with_capacity(p.workload.len());
    for g in groups {
        let members = &p.workload.kernels[g.first_kernel - 1..g.last_kernel];
        let mut best: Option<(f64, Vec<Configuration>)> = None;
        for pe in 0..p.spec.pes.len() {
            let Ok(cs) = members
                .iter()
                .map(|k| with_fallback(p, k, pe, v, DB))
                .collect::<Result<Vec<_>>>()
            else {
                continue;
            };
            let e = Totals::of(&cs, &p.options).energy;
            if best.as_ref().map_or(true, |(be, _)| e < *be) {
                best = Some((e, cs));
            }
        }
        let (_, cs) = best.ok_or(Error::NoValidConfiguration {
            kernel_id: g.first_kernel,
        })?;
        configs.extend(cs);
    }
    Ok(build(p, configs))
}

pub fn run_strategy(
    p: &Problem,
    s: Strategy,
    groups: Option<&[KernelGroup]>,
) -> Result<(Schedule, EnergyReport)> {
    let voltages = 0..p.spec.vf_table.len();
    let vmax = p.spec.max_voltage_index();
    let schedule = match s {
        Strategy::CpuMaxvf => meet(p, static_schedule(p, p.spec.cpu_index(), vmax)?)?,
        Strategy::StaticAccelMaxvf => {
            let acc = most_efficient_accelerator(p)?;
            meet(p, static_schedule(p, acc, vmax)?)?
        }
        Strategy::StaticAccelAppdvfs => {
            let acc = most_efficient_accelerator(p)?;
            best_feasible(p, voltages.map(|v| static_schedule(p, acc, v)).collect())?
        }
        Strategy::CoarseAppdvfs => {
            let groups = groups.ok_or_else(|| {
                Error::InvalidArgument("coarse_appdvfs needs kernel groups".into())
            })?;
            check_groups(groups, p.workload.len())?;
            best_feasible(p, voltages.map(|v| coarse_schedule(p, groups, v)).collect())?
        }
        Strategy::Medea => optimizer::solve(p)?,
    };
    let report = optimizer::report(p, &schedule);
    Ok((schedule, report))
}

pub fn run_ablation(
    p: &Problem,
    a: Ablation,
    groups: &[KernelGroup],
) -> Result<(Schedule, EnergyReport)> {
    run_ablation_with(p, a, groups, AblationOptions::default())
}

pub fn run_ablation_with(
    p: &Problem,
    a: Ablation,
    groups: &[KernelGroup],
    opts: AblationOptions,
) -> Result<(Schedule, EnergyReport)> {
    let schedule = match a {
        Ablation::None => optimizer::solve(p)?,
        Ablation::NoKernelDvfs => lowest_common_voltage(p)?,
        Ablation::NoAdaptiveTiling => optimizer::solve_with(
            p,
            Enumeration {
                policy: DB,
                voltage: None,
            },
        )?,
        Ablation::NoKernelSched => {
            check_groups(groups, p.workload.len())?;
            group_level(p, groups, opts)?
        }
    };
    let report = optimizer::report(p, &schedule);
    Ok((schedule, report))
}

/// Full optimization with every kernel pinned to the lowest voltage that
/// still meets the deadline.
fn lowest_common_voltage(p: &Problem) -> Result<Schedule> {
    let mut last_err = None;
    for v in 0..p.spec.vf_table.len() {
        let rule = Enumeration {
            policy: ModePolicy::Preselect,
            voltage: Some(v),
        };
        match optimizer::solve_with(p, rule) {
            Ok(s) => return Ok(s),
            Err(e @ (Error::InfeasibleDeadline { .. } | Error::NoValidConfiguration { .. })) => {
                last_err = Some(e)
            }
            Err(e) => return Err(e),
        }
    }
    Err(last_err.expect("V-F table is non-empty"))
}

/// One (PE, voltage) decision per kernel group, solved as a group-level
/// knapsack.
fn group_level(p: &Problem, groups: &[KernelGroup], opts: AblationOptions) -> Result<Schedule> {
    let cpu = p.spec.cpu_index();
    let mut choice_groups = Vec::with_capacity(groups.len());
    for g in groups {
        let members = &p.workload.kernels[g.first_kernel - 1..g.last_kernel];
        let mut choices = Vec::new();
        for pe in 0..p.spec.pes.len() {
            for v in 0..p.spec.vf_table.len() {
                let cs: Option<Vec<Configuration>> = members
                    .iter()
                    .map(|k| {
                        config(p, k, pe, v, ModePolicy::Preselect).or_else(|| {
                            opts.group_cpu_fallback
                                .then(|| config(p, k, cpu, v, ModePolicy::Preselect))
                                .flatten()
                        })
                    })
                    .collect();
                if let Some(cs) = cs {
                    choices.push(Choice::new((pe, v), cs));
                }
            }
        }
        if choices.is_empty() {
            return Err(Error::NoValidConfiguration {
                kernel_id: g.first_kernel,
            });
        }
        choice_groups.push(mckp::prune_choices(choices, p.options.has_switch_penalty()));
    }
    let ids: Vec<usize> = p.workload.kernels.iter().map(|k| k.id).collect();
    optimizer::solve_choices(&choice_groups, &ids, p.deadline, &p.options, p.solver)
}

/// Percentage of energy saved by a feature: (E_without − E_full) / E_without · 100.
pub fn savings(e_without: f64, e_full: f64) -> Result<f64> {
    if !(e_without > 0.0) {
        return Err(Error::DivisionByZero("energy without the feature must be > 0"));
    }
    Ok((e_without - e_full) / e_without * 100.0)
}
