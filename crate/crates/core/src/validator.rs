//! Recomputes a schedule from the models and reports every field that
//! disagrees.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::optimizer::Problem;
use crate::perfmodel::{derive_time_energy, kernel_power, kernel_proc_cycles};
use crate::schedule::{EnergyReport, ScheduleFile};
use crate::tiling::{estimate_cycles, plan_tiles};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mismatch {
    /// `None` for schedule-level fields.
    pub kernel_id: Option<usize>,
    pub field: String,
    pub expected: String,
    pub actual: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationResult {
    pub pass: bool,
    pub mismatches: Vec<Mismatch>,
}

struct Collector(Vec<Mismatch>);

impl Collector {
    fn check<T: PartialEq + std::fmt::Debug>(&mut self, kernel_id: Option<usize>, field: &str, expected: T, actual: T) {
        if expected != actual {
            self.0.push(Mismatch {
                kernel_id,
                field: field.to_string(),
                expected: format!("{expected:?}"),
                actual: format!("{actual:?}"),
            });
        }
    }

    fn fail(&mut self, kernel_id: Option<usize>, field: &str, expected: String, actual: String) {
        self.0.push(Mismatch {
            kernel_id,
            field: field.to_string(),
            expected,
            actual,
        });
    }
}

/// Time, energy and voltage of one recomputed assignment.
struct Recomputed {
    time: f64,
    energy: f64,
    frequency: f64,
    voltage_index: usize,
}

/// Checks `s` against the models of `p`. Fields must match exactly. Unknown
/// kernel, PE or voltage references are errors rather than mismatches.
pub fn validate(p: &Problem, s: &ScheduleFile) -> Result<ValidationResult> {
    let mut out = Collector(Vec::new());
    let n = p.workload.len();
    if s.assignments.len() != n {
        out.fail(None, "assignments", format!("{n} entries"), format!("{} entries", s.assignments.len()));
    }

    let mut rows: Vec<Option<Recomputed>> = Vec::with_capacity(s.assignments.len());
    for (pos, a) in s.assignments.iter().enumerate() {
        let id = a.kernel_id;
        let k = id
            .checked_sub(1)
            .and_then(|i| p.workload.kernels.get(i))
            .ok_or_else(|| Error::UnknownReference(format!("kernel {id}")))?;
        if id != pos + 1 {
            out.fail(Some(id), "kernel_id", format!("{}", pos + 1), format!("{id}"));
        }
        let pe_index = p
            .spec
            .pe_index(&a.pe)
            .ok_or_else(|| Error::UnknownReference(format!("PE `{}`", a.pe)))?;
        let voltage_index = p
            .spec
            .voltage_index(a.voltage_v)
            .ok_or_else(|| Error::UnknownReference(format!("voltage {} V", a.voltage_v)))?;
        let pe = &p.spec.pes[pe_index];
        let frequency = p.spec.vf_table[voltage_index].frequency;
        out.check(Some(id), "frequency_hz", frequency, a.frequency_hz);

        let lambda = p.spec.constraint(pe, &k.kind);
        if !lambda.supported {
            out.fail(Some(id), "pe", format!("a PE supporting {}", k.kind), a.pe.clone());
            rows.push(None);
            continue;
        }
        let proc = match kernel_proc_cycles(&p.profiles, k, pe) {
            Ok(c) => c,
            Err(e) => {
                out.fail(Some(id), "profile", "a cycle profile".into(), e.to_string());
                rows.push(None);
                continue;
            }
        };
        let plan = match plan_tiles(k, pe, &lambda, a.mode) {
            Ok(plan) => plan,
            Err(e) => {
                out.fail(Some(id), "mode", "a feasible tiling mode".into(), format!("{} ({e})", a.mode));
                rows.push(None);
                continue;
            }
        };
        let cycles = estimate_cycles(k, pe, &plan, proc, p.options.tile_overhead_cycles);
        out.check(Some(id), "n_tiles", plan.n_tiles, a.n_tiles);
        out.check(Some(id), "cycles", cycles, a.cycles);
        let power = match kernel_power(&p.profiles, k, pe, p.spec.vf_table[voltage_index].voltage, frequency) {
            Ok(w) => w,
            Err(e) => {
                out.fail(Some(id), "power_w", "a power profile".into(), e.to_string());
                rows.push(None);
                continue;
            }
        };
        let (time, energy) = derive_time_energy(cycles, frequency, power);
        out.check(Some(id), "power_w", power, a.power_w);
        out.check(Some(id), "time_s", time, a.time_s);
        out.check(Some(id), "energy_j", energy, a.energy_j);
        rows.push(Some(Recomputed {
            time,
            energy,
            frequency,
            voltage_index,
        }));
    }

    if rows.iter().all(Option::is_some) {
        let opts = &p.options;
        let penalized = opts.vf_switch_cycles > 0 || opts.vf_switch_energy > 0.0;
        let (mut time, mut energy, mut sw_time, mut sw_energy) = (0.0, 0.0, 0.0, 0.0);
        let mut prev: Option<usize> = None;
        for r in rows.iter().flatten() {
            if penalized && prev.is_some_and(|v| v != r.voltage_index) {
                let t = opts.vf_switch_cycles as f64 / r.frequency;
                time += t;
                sw_time += t;
                energy += opts.vf_switch_energy;
                sw_energy += opts.vf_switch_energy;
            }
            time += r.time;
            energy += r.energy;
            prev = Some(r.voltage_index);
        }
        out.check(None, "total_active_time_s", time, s.total_active_time_s);
        out.check(None, "total_active_energy_j", energy, s.total_active_energy_j);
        out.check(None, "switch_time_s", sw_time, s.switch_time_s);
        out.check(None, "switch_energy_j", sw_energy, s.switch_energy_j);
        if time > p.deadline {
            out.fail(None, "deadline", format!("active time <= {} s", p.deadline), format!("{time} s"));
        }

        let r = EnergyReport::compute(p.deadline, p.spec.sleep_power, time, energy);
        let got = &s.report;
        out.check(None, "report.deadline_s", r.deadline, got.deadline);
        out.check(None, "report.active_time_s", r.active_time, got.active_time);
        out.check(None, "report.sleep_time_s", r.sleep_time, got.sleep_time);
        out.check(None, "report.active_energy_j", r.active_energy, got.active_energy);
        out.check(None, "report.sleep_energy_j", r.sleep_energy, got.sleep_energy);
        out.check(None, "report.total_energy_j", r.total_energy, got.total_energy);
    }

    Ok(ValidationResult {
        pass: out.0.is_empty(),
        mismatches: out.0,
    })
}
