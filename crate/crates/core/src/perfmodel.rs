//! Timing and power models: (kernel, PE, V-F point, tiling mode) → time and
//! energy.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::platform::{max_frequency, Pe, PlatformSpec, Profiles};
use crate::tiling::{self, TilingMode};
use crate::workload::Kernel;

/// Tunable model parameters that are not part of the platform files.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelOptions {
    /// Extra compute cycles charged per tile in tiled modes.
    pub tile_overhead_cycles: u64,
    /// Cycles lost when consecutive kernels run at different voltages,
    /// counted at the incoming kernel's frequency.
    pub vf_switch_cycles: u64,
    /// Joules lost per voltage change.
    pub vf_switch_energy: f64,
}

impl ModelOptions {
    pub fn has_switch_penalty(&self) -> bool {
        self.vf_switch_cycles > 0 || self.vf_switch_energy > 0.0
    }
}

/// How the tiling mode of a configuration is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModePolicy {
    /// Minimum-cycle mode among the feasible ones.
    Preselect,
    /// Always this mode; the configuration is invalid if it is infeasible.
    Forced(TilingMode),
}

/// One execution configuration of a kernel with its derived time and energy.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    pub pe_index: usize,
    pub pe: String,
    pub voltage_index: usize,
    pub voltage: f64,
    pub frequency: f64,
    pub mode: TilingMode,
    pub n_tiles: u64,
    pub cycles: u64,
    /// Seconds.
    pub time: f64,
    /// Watts.
    pub power: f64,
    /// Joules.
    pub energy: f64,
}

/// time = cycles / f; energy = power · time. The only place these are
/// computed.
pub fn derive_time_energy(cycles: u64, frequency: f64, power: f64) -> (f64, f64) {
    let time = cycles as f64 / frequency;
    (time, power * time)
}

/// Why a (kernel, PE, voltage) combination has no configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Invalid {
    Unsupported,
    Untileable(String),
    MissingProfile(String),
}

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Invalid::Unsupported => f.write_str("kind not supported on this PE"),
            Invalid::Untileable(r) => write!(f, "untileable: {r}"),
            Invalid::MissingProfile(r) => write!(f, "missing profile: {r}"),
        }
    }
}

/// Processing-only cycles of `k` on `pe`.
///
/// An entry with the same size and data width is used verbatim. Otherwise
/// the entry of the same data width with the nearest operation count is
/// scaled linearly by the operation-count ratio and rounded up.
pub fn kernel_proc_cycles(profiles: &Profiles, k: &Kernel, pe: &Pe) -> Result<u64> {
    let missing = |detail: &str| Error::MissingProfile {
        pe: pe.id.clone(),
        kind: k.kind.to_string(),
        detail: detail.to_string(),
    };
    let mut candidates = profiles
        .cycles
        .iter()
        .filter(|e| e.pe == pe.id && e.kind == k.kind)
        .peekable();
    if candidates.peek().is_none() {
        return Err(missing("no cycle entries"));
    }
    let same_width: Vec<_> = candidates.filter(|e| e.data_width == k.data_width).collect();
    if let Some(exact) = same_width.iter().find(|e| e.size == k.size) {
        return Ok(exact.proc_cycles);
    }

    let query = k.op_count();
    let q = query.as_f64();
    let nearest = same_width
        .iter()
        .map(|e| {
            let r = Kernel::new(e.kind.clone(), e.size.clone(), e.data_width).op_count();
            (e, r)
        })
        .min_by(|(_, a), (_, b)| {
            let (da, db) = ((a.as_f64() - q).abs(), (b.as_f64() - q).abs());
            da.total_cmp(&db).then(a.as_f64().total_cmp(&b.as_f64()))
        })
        .ok_or_else(|| missing(&format!("no entry with data_width {}", k.data_width)))?;
    let (entry, reference) = nearest;

    // cycles_ref · (q.num / q.den) / (r.num / r.den), rounded up.
    let exact = u128::from(entry.proc_cycles)
        .checked_mul(query.num)
        .and_then(|x| x.checked_mul(reference.den))
        .zip(query.den.checked_mul(reference.num));
    let cycles = match exact {
        Some((num, den)) => num.div_ceil(den),
        None => (entry.proc_cycles as f64 * q / reference.as_f64()).ceil() as u128,
    };
    Ok(u64::try_from(cycles.max(1)).unwrap_or(u64::MAX))
}

/// Platform power while `k` runs on `pe` at voltage `v` and frequency `f`.
pub fn kernel_power(profiles: &Profiles, k: &Kernel, pe: &Pe, v: f64, f: f64) -> Result<f64> {
    let entry = profiles
        .power_entry(&pe.id, &k.kind, v)
        .ok_or_else(|| Error::MissingProfile {
            pe: pe.id.clone(),
            kind: k.kind.to_string(),
            detail: format!("no power entry at {v} V"),
        })?;
    Ok(entry.p_stat + entry.p_dyn_base * (f / entry.f_base))
}

/// Voltage-independent part of a configuration: tiling mode and cycles.
#[derive(Debug, Clone, PartialEq)]
pub struct PeTiming {
    pub pe_index: usize,
    pub mode: TilingMode,
    pub n_tiles: u64,
    pub cycles: u64,
}

pub fn pe_timing(
    spec: &PlatformSpec,
    profiles: &Profiles,
    k: &Kernel,
    pe_index: usize,
    policy: ModePolicy,
    opts: &ModelOptions,
) -> std::result::Result<PeTiming, Invalid> {
    let pe = &spec.pes[pe_index];
    let lambda = spec.constraint(pe, &k.kind);
    if !lambda.supported {
        return Err(Invalid::Unsupported);
    }
    let proc = kernel_proc_cycles(profiles, k, pe).map_err(|e| Invalid::MissingProfile(e.to_string()))?;
    let (mode, plan, cycles) = match policy {
        ModePolicy::Preselect => {
            let c = tiling::preselect_mode(k, pe, &lambda, proc, opts.tile_overhead_cycles)
                .map_err(|e| Invalid::Untileable(e.to_string()))?;
            (c.mode, c.plan, c.cycles)
        }
        ModePolicy::Forced(mode) => {
            let plan = tiling::plan_tiles(k, pe, &lambda, mode)
                .map_err(|e| Invalid::Untileable(e.to_string()))?;
            let cycles = tiling::estimate_cycles(k, pe, &plan, proc, opts.tile_overhead_cycles);
            (mode, plan, cycles)
        }
    };
    Ok(PeTiming {
        pe_index,
        mode,
        n_tiles: plan.n_tiles,
        cycles,
    })
}

/// Completes a [`PeTiming`] at one V-F point.
pub fn configure(
    spec: &PlatformSpec,
    profiles: &Profiles,
    k: &Kernel,
    timing: &PeTiming,
    voltage_index: usize,
) -> std::result::Result<Configuration, Invalid> {
    let pe = &spec.pes[timing.pe_index];
    let vf = spec.vf_table[voltage_index];
    let power = kernel_power(profiles, k, pe, vf.voltage, vf.frequency)
        .map_err(|e| Invalid::MissingProfile(e.to_string()))?;
    let (time, energy) = derive_time_energy(timing.cycles, vf.frequency, power);
    Ok(Configuration {
        pe_index: timing.pe_index,
        pe: pe.id.clone(),
        voltage_index,
        voltage: vf.voltage,
        frequency: vf.frequency,
        mode: timing.mode,
        n_tiles: timing.n_tiles,
        cycles: timing.cycles,
        time,
        power,
        energy,
    })
}

/// Builds the configuration of `k` on `pe` at voltage `v` with a
/// pre-selected tiling mode.
pub fn build_configuration(
    spec: &PlatformSpec,
    profiles: &Profiles,
    k: &Kernel,
    pe: &Pe,
    v: f64,
    opts: &ModelOptions,
) -> std::result::Result<Configuration, Invalid> {
    let pe_index = spec
        .pe_index(&pe.id)
        .ok_or_else(|| Invalid::MissingProfile(format!("PE `{}` not on platform", pe.id)))?;
    let voltage_index = spec
        .voltage_index(v)
        .ok_or_else(|| Invalid::MissingProfile(Error::UnknownVoltage(v).to_string()))?;
    debug_assert_eq!(max_frequency(spec, v).ok(), Some(spec.vf_table[voltage_index].frequency));
    let timing = pe_timing(spec, profiles, k, pe_index, ModePolicy::Preselect, opts)?;
    configure(spec, profiles, k, &timing, voltage_index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::platform::{CycleProfileEntry, PowerProfileEntry};
    use crate::workload::KernelType;

    fn cpu() -> Pe {
        Pe {
            id: "cpu".into(),
            role: crate::platform::PeRole::Cpu,
            lm_capacity: 1 << 20,
            bus_width: 4,
            dma_setup: 0,
            cycles_per_beat: 0,
        }
    }

    fn cycles(size: Vec<u64>, c: u64) -> CycleProfileEntry {
        CycleProfileEntry {
            pe: "cpu".into(),
            kind: KernelType::Matmul,
            size,
            data_width: 8,
            proc_cycles: c,
        }
    }

    fn mm(size: Vec<u64>) -> Kernel {
        Kernel::new(KernelType::Matmul, size, 8)
    }

    #[test]
    fn exact_entry_is_verbatim() {
        let p = Profiles {
            cycles: vec![cycles(vec![16, 16, 16], 4097)],
            ..Default::default()
        };
        assert_eq!(kernel_proc_cycles(&p, &mm(vec![16, 16, 16]), &cpu()).unwrap(), 4097);
    }

    #[test]
    fn linear_extrapolation() {
        let p = Profiles {
            cycles: vec![cycles(vec![16, 16, 16], 4096)],
            ..Default::default()
        };
        assert_eq!(kernel_proc_cycles(&p, &mm(vec![32, 16, 16]), &cpu()).unwrap(), 8192);
        // 3/4096 of the ops rounds up to 3 cycles.
        assert_eq!(kernel_proc_cycles(&p, &mm(vec![3, 1, 1]), &cpu()).unwrap(), 3);
    }

    #[test]
    fn nearest_reference_by_op_count() {
        // Ops 1e3 and 1e6; a 2e3 query scales from the 1e3 entry.
        let p = Profiles {
            cycles: vec![
                cycles(vec![10, 10, 10], 500),
                cycles(vec![100, 100, 100], 1_000_000),
            ],
            ..Default::default()
        };
        let q = mm(vec![20, 10, 10]);
        let got = kernel_proc_cycles(&p, &q, &cpu()).unwrap();
        // Exhaustive: scale from each reference, pick the closest one.
        let by_small = 500 * 2000 / 1000;
        let by_large = (1_000_000u64 * 2000).div_ceil(1_000_000);
        assert_eq!(got, by_small);
        assert_ne!(got, by_large);
    }

    #[test]
    fn missing_profile() {
        let p = Profiles::default();
        assert!(matches!(
            kernel_proc_cycles(&p, &mm(vec![1, 1, 1]), &cpu()),
            Err(Error::MissingProfile { .. })
        ));
        let p = Profiles {
            cycles: vec![cycles(vec![1, 1, 1], 1)],
            ..Default::default()
        };
        let wide = Kernel::new(KernelType::Matmul, vec![1, 1, 1], 16);
        assert!(kernel_proc_cycles(&p, &wide, &cpu()).is_err());
    }

    #[test]
    fn power_scaling() {
        let p = Profiles {
            power: vec![PowerProfileEntry {
                pe: "cpu".into(),
                kind: KernelType::Matmul,
                voltage: 0.5,
                p_stat: 1e-3,
                p_dyn_base: 2e-3,
                f_base: 100e6,
            }],
            ..Default::default()
        };
        let k = mm(vec![1, 1, 1]);
        assert!((kernel_power(&p, &k, &cpu(), 0.5, 100e6).unwrap() - 3e-3).abs() < 1e-15);
        assert!((kernel_power(&p, &k, &cpu(), 0.5, 200e6).unwrap() - 5e-3).abs() < 1e-15);
        assert_eq!(kernel_power(&p, &k, &cpu(), 0.5, 0.0).unwrap(), 1e-3);
        assert!(kernel_power(&p, &k, &cpu(), 0.65, 0.0).is_err());
    }
}
