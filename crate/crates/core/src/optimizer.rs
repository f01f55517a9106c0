//! Deadline-constrained minimum-energy selection of one configuration per
//! kernel.

use crate::error::{Error, Result};
use crate::mckp::{self, Choice};
use crate::perfmodel::{self, Configuration, ModePolicy, ModelOptions};
use crate::platform::{PlatformSpec, Profiles};
use crate::schedule::{Assignment, EnergyReport, Schedule};
use crate::workload::Workload;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum SolverKind {
    /// Exact optimum on the model's arithmetic.
    #[default]
    Exact,
    /// Time-quantized dynamic program; optimal within the quantum (seconds).
    QuantizedDp { quantum: f64 },
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub workload: Workload,
    pub spec: PlatformSpec,
    pub profiles: Profiles,
    /// Seconds.
    pub deadline: f64,
    pub options: ModelOptions,
    pub solver: SolverKind,
}

impl Problem {
    pub fn new(workload: Workload, spec: PlatformSpec, profiles: Profiles, deadline: f64) -> Result<Self> {
        spec.validate()?;
        profiles.validate(&spec)?;
        let p = Problem {
            workload,
            spec,
            profiles,
            deadline,
            options: ModelOptions::default(),
            solver: SolverKind::Exact,
        };
        p.check_deadline()?;
        Ok(p)
    }

    pub fn with_options(mut self, options: ModelOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_solver(mut self, solver: SolverKind) -> Self {
        self.solver = solver;
        self
    }

    pub fn with_deadline(&self, deadline: f64) -> Result<Self> {
        let mut p = self.clone();
        p.deadline = deadline;
        p.check_deadline()?;
        Ok(p)
    }

    fn check_deadline(&self) -> Result<()> {
        if !(self.deadline.is_finite() && self.deadline > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "deadline must be > 0 s, got {}",
                self.deadline
            )));
        }
        Ok(())
    }
}

/// The valid configurations of one kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigGroup {
    pub kernel_id: usize,
    pub items: Vec<Configuration>,
}

/// Which configurations to generate per kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Enumeration {
    pub policy: ModePolicy,
    /// Restrict every kernel to this voltage index.
    pub voltage: Option<usize>,
}

impl Default for Enumeration {
    fn default() -> Self {
        Enumeration {
            policy: ModePolicy::Preselect,
            voltage: None,
        }
    }
}

/// Every valid configuration per kernel, ordered by (PE index, voltage
/// index). No dominance pruning.
pub fn enumerate_all(p: &Problem, rule: Enumeration) -> Result<Vec<ConfigGroup>> {
    let voltages: Vec<usize> = match rule.voltage {
        Some(v) => vec![v],
        None => (0..p.spec.vf_table.len()).collect(),
    };
    p.workload
        .kernels
        .iter()
        .map(|k| {
            let mut items = Vec::new();
            for pe in 0..p.spec.pes.len() {
                let timing = match perfmodel::pe_timing(&p.spec, &p.profiles, k, pe, rule.policy, &p.options) {
                    Ok(t) => t,
                    Err(why) => {
                        log::debug!("kernel {} on {}: {why}", k.id, p.spec.pes[pe].id);
                        continue;
                    }
                };
                for &v in &voltages {
                    match perfmodel::configure(&p.spec, &p.profiles, k, &timing, v) {
                        Ok(c) => items.push(c),
                        Err(why) => log::debug!("kernel {} on {} @ {} V: {why}", k.id, p.spec.pes[pe].id, p.spec.vf_table[v].voltage),
                    }
                }
            }
            if items.is_empty() {
                return Err(Error::NoValidConfiguration { kernel_id: k.id });
            }
            Ok(ConfigGroup {
                kernel_id: k.id,
                items,
            })
        })
        .collect()
}

/// Drops items that another item matches or beats in both time and energy
/// (strictly in one). Exact (time, energy) ties keep the earliest item in
/// the input order. Output is sorted by time ascending with strictly
/// decreasing energy.
///
/// With `per_voltage`, dominance is only checked among items sharing a
/// voltage; the result is then ordered by time.
pub fn prune_dominated(items: &[Configuration], per_voltage: bool) -> Vec<Configuration> {
    fn frontier(mut sorted: Vec<(usize, &Configuration)>) -> Vec<(usize, &Configuration)> {
        sorted.sort_by(|(ia, a), (ib, b)| {
            a.time
                .total_cmp(&b.time)
                .then(a.energy.total_cmp(&b.energy))
                .then(ia.cmp(ib))
        });
        let mut kept: Vec<(usize, &Configuration)> = Vec::new();
        for (i, c) in sorted {
            if kept.last().map_or(true, |(_, l)| c.energy < l.energy) {
                kept.push((i, c));
            }
        }
        kept
    }
    let mut kept: Vec<(usize, &Configuration)> = if per_voltage {
        let mut vs: Vec<usize> = items.iter().map(|c| c.voltage_index).collect();
        vs.sort_unstable();
        vs.dedup();
        vs.into_iter()
            .flat_map(|v| {
                frontier(
                    items
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| c.voltage_index == v)
                        .collect(),
                )
            })
            .collect()
    } else {
        frontier(items.iter().enumerate().collect())
    };
    kept.sort_by(|(ia, a), (ib, b)| {
        a.time
            .total_cmp(&b.time)
            .then(a.energy.total_cmp(&b.energy))
            .then(ia.cmp(ib))
    });
    kept.into_iter().map(|(_, c)| c.clone()).collect()
}

/// Valid configurations per kernel with dominated ones removed.
pub fn enumerate_groups(p: &Problem) -> Result<Vec<ConfigGroup>> {
    enumerate_pruned(p, Enumeration::default())
}

pub fn enumerate_pruned(p: &Problem, rule: Enumeration) -> Result<Vec<ConfigGroup>> {
    let per_voltage = p.options.has_switch_penalty();
    Ok(enumerate_all(p, rule)?
        .into_iter()
        .map(|g| ConfigGroup {
            kernel_id: g.kernel_id,
            items: prune_dominated(&g.items, per_voltage),
        })
        .collect())
}

pub(crate) fn to_choices(groups: &[ConfigGroup]) -> Vec<Vec<Choice>> {
    groups
        .iter()
        .map(|g| {
            let mut cs: Vec<Choice> = g
                .items
                .iter()
                .map(|c| Choice::new((c.pe_index, c.voltage_index), vec![c.clone()]))
                .collect();
            cs.sort_by_key(|c| c.key);
            cs
        })
        .collect()
}

/// Runs the configured MCKP solver over prepared choice groups and expands
/// the picks into a schedule. `kernel_ids` lists the kernels covered by the
/// members of each group, in order.
pub(crate) fn solve_choices(
    groups: &[Vec<Choice>],
    kernel_ids: &[usize],
    deadline: f64,
    opts: &ModelOptions,
    solver: SolverKind,
) -> Result<Schedule> {
    let min_time = mckp::min_time(groups);
    if min_time > deadline {
        return Err(Error::InfeasibleDeadline {
            deadline,
            min_achievable_time: min_time,
        });
    }
    let picks = match solver {
        SolverKind::Exact => mckp::solve_exact(groups, deadline, opts),
        SolverKind::QuantizedDp { quantum } => {
            mckp::solve_quantized(groups, deadline, opts, quantum).map_err(Error::InvalidArgument)?
        }
    };
    let infeasible = || Error::InfeasibleDeadline {
        deadline,
        min_achievable_time: min_time,
    };
    let picks = picks.ok_or_else(infeasible)?;
    let configs = picks
        .iter()
        .enumerate()
        .flat_map(|(g, &c)| groups[g][c].members.iter().cloned());
    let assignments: Vec<Assignment> = kernel_ids
        .iter()
        .zip(configs)
        .map(|(&kernel_id, config)| Assignment { kernel_id, config })
        .collect();
    debug_assert_eq!(assignments.len(), kernel_ids.len());
    let schedule = Schedule::new(assignments, opts);
    if schedule.total_active_time > deadline {
        return Err(infeasible());
    }
    Ok(schedule)
}

/// Minimum-active-energy schedule meeting the deadline.
pub fn solve(p: &Problem) -> Result<Schedule> {
    solve_with(p, Enumeration::default())
}

/// [`solve`] over a restricted configuration space.
pub fn solve_with(p: &Problem, rule: Enumeration) -> Result<Schedule> {
    let groups = enumerate_pruned(p, rule)?;
    let ids: Vec<usize> = groups.iter().map(|g| g.kernel_id).collect();
    solve_choices(&to_choices(&groups), &ids, p.deadline, &p.options, p.solver)
}

/// Sum of the fastest configuration time of every kernel.
pub fn min_time(p: &Problem) -> Result<f64> {
    Ok(mckp::min_time(&to_choices(&enumerate_groups(p)?)))
}

pub fn report(p: &Problem, s: &Schedule) -> EnergyReport {
    EnergyReport::compute(
        p.deadline,
        p.spec.sleep_power,
        s.total_active_time,
        s.total_active_energy,
    )
}
