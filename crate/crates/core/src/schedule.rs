//! Schedules, energy reports and their file formats.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::perfmodel::{Configuration, ModelOptions};
use crate::tiling::TilingMode;

#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub kernel_id: usize,
    pub config: Configuration,
}

/// Running active time and energy over a kernel sequence, including V-F
/// switch penalties between consecutive kernels. Every total in the crate
/// is produced by folding configurations through this type in kernel
/// order, so two totals over the same sequence are bit-identical.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Totals {
    pub time: f64,
    pub energy: f64,
    pub switch_time: f64,
    pub switch_energy: f64,
    pub last_voltage: Option<usize>,
}

impl Totals {
    pub fn push(&mut self, c: &Configuration, opts: &ModelOptions) {
        if opts.has_switch_penalty() {
            if let Some(prev) = self.last_voltage {
                if prev != c.voltage_index {
                    let t = opts.vf_switch_cycles as f64 / c.frequency;
                    self.time += t;
                    self.switch_time += t;
                    self.energy += opts.vf_switch_energy;
                    self.switch_energy += opts.vf_switch_energy;
                }
            }
        }
        self.time += c.time;
        self.energy += c.energy;
        self.last_voltage = Some(c.voltage_index);
    }

    pub fn of<'a>(configs: impl IntoIterator<Item = &'a Configuration>, opts: &ModelOptions) -> Self {
        let mut t = Totals::default();
        for c in configs {
            t.push(c, opts);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    pub assignments: Vec<Assignment>,
    /// Seconds, including switch penalties.
    pub total_active_time: f64,
    /// Joules, including switch penalties.
    pub total_active_energy: f64,
    pub switch_time: f64,
    pub switch_energy: f64,
}

impl Schedule {
    pub fn new(assignments: Vec<Assignment>, opts: &ModelOptions) -> Self {
        let t = Totals::of(assignments.iter().map(|a| &a.config), opts);
        Schedule {
            assignments,
            total_active_time: t.time,
            total_active_energy: t.energy,
            switch_time: t.switch_time,
            switch_energy: t.switch_energy,
        }
    }
}

/// Active/sleep breakdown over one deadline window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    #[serde(rename = "deadline_s")]
    pub deadline: f64,
    #[serde(rename = "active_time_s")]
    pub active_time: f64,
    #[serde(rename = "sleep_time_s")]
    pub sleep_time: f64,
    #[serde(rename = "active_energy_j")]
    pub active_energy: f64,
    #[serde(rename = "sleep_energy_j")]
    pub sleep_energy: f64,
    #[serde(rename = "total_energy_j")]
    pub total_energy: f64,
}

impl EnergyReport {
    /// E_t = E_active + P_sleep · max(0, T_d − T_active).
    pub fn compute(deadline: f64, sleep_power: f64, active_time: f64, active_energy: f64) -> Self {
        let sleep_time = (deadline - active_time).max(0.0);
        let sleep_energy = sleep_power * sleep_time;
        EnergyReport {
            deadline,
            active_time,
            sleep_time,
            active_energy,
            sleep_energy,
            total_energy: active_energy + sleep_energy,
        }
    }
}

/// One row of the schedule file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentRecord {
    pub kernel_id: usize,
    pub pe: String,
    pub voltage_v: f64,
    pub frequency_hz: f64,
    pub mode: TilingMode,
    pub n_tiles: u64,
    pub cycles: u64,
    pub time_s: f64,
    pub power_w: f64,
    pub energy_j: f64,
}

impl From<&Assignment> for AssignmentRecord {
    fn from(a: &Assignment) -> Self {
        let c = &a.config;
        AssignmentRecord {
            kernel_id: a.kernel_id,
            pe: c.pe.clone(),
            voltage_v: c.voltage,
            frequency_hz: c.frequency,
            mode: c.mode,
            n_tiles: c.n_tiles,
            cycles: c.cycles,
            time_s: c.time,
            power_w: c.power,
            energy_j: c.energy,
        }
    }
}

/// On-disk schedule: ordered assignments, totals and the report block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleFile {
    #[serde(default)]
    pub strategy: String,
    pub assignments: Vec<AssignmentRecord>,
    pub total_active_time_s: f64,
    pub total_active_energy_j: f64,
    #[serde(default)]
    pub switch_time_s: f64,
    #[serde(default)]
    pub switch_energy_j: f64,
    pub report: EnergyReport,
}

impl ScheduleFile {
    pub fn new(strategy: &str, schedule: &Schedule, report: &EnergyReport) -> Self {
        ScheduleFile {
            strategy: strategy.to_string(),
            assignments: schedule.assignments.iter().map(AssignmentRecord::from).collect(),
            total_active_time_s: schedule.total_active_time,
            total_active_energy_j: schedule.total_active_energy,
            switch_time_s: schedule.switch_time,
            switch_energy_j: schedule.switch_energy,
            report: *report,
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("schedule serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::parse("schedule", e))
    }
}

/// report.json: the energy report in milliseconds and microjoules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub strategy: String,
    pub deadline_ms: f64,
    pub active_time_ms: f64,
    pub sleep_time_ms: f64,
    pub active_energy_uj: f64,
    pub sleep_energy_uj: f64,
    pub total_energy_uj: f64,
}

impl ReportFile {
    pub fn new(strategy: &str, r: &EnergyReport) -> Self {
        ReportFile {
            strategy: strategy.to_string(),
            deadline_ms: r.deadline * 1e3,
            active_time_ms: r.active_time * 1e3,
            sleep_time_ms: r.sleep_time * 1e3,
            active_energy_uj: r.active_energy * 1e6,
            sleep_energy_uj: r.sleep_energy * 1e6,
            total_energy_uj: r.total_energy * 1e6,
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}
