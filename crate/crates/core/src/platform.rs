//! Platform description and characterization profiles.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::workload::KernelType;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VfPoint {
    #[serde(rename = "voltage_v")]
    pub voltage: f64,
    /// Maximum supported frequency at `voltage`.
    #[serde(rename = "frequency_hz")]
    pub frequency: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeRole {
    Cpu,
    Accelerator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pe {
    pub id: String,
    pub role: PeRole,
    /// Local memory capacity in bytes.
    pub lm_capacity: u64,
    /// Bytes moved per transfer beat.
    pub bus_width: u32,
    /// Fixed cycles per DMA transfer.
    pub dma_setup: u64,
    pub cycles_per_beat: u64,
}

/// Kernel-PE operational constraint. `limits` are per-dimension maxima over
/// the kernel's size list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpConstraint {
    pub pe: String,
    pub kind: KernelType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<Vec<u64>>,
    pub supported: bool,
}

impl OpConstraint {
    pub fn unlimited(pe: &str, kind: KernelType) -> Self {
        OpConstraint {
            pe: pe.to_string(),
            kind,
            limits: None,
            supported: true,
        }
    }

    pub fn unsupported(pe: &str, kind: KernelType) -> Self {
        OpConstraint {
            pe: pe.to_string(),
            kind,
            limits: None,
            supported: false,
        }
    }

    /// Limit for dimension `dim`, if one is declared.
    pub fn limit(&self, dim: usize) -> Option<u64> {
        self.limits.as_ref().and_then(|l| l.get(dim).copied())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlatformSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub pes: Vec<Pe>,
    pub vf_table: Vec<VfPoint>,
    #[serde(rename = "shared_capacity_bytes")]
    pub shared_capacity: u64,
    #[serde(rename = "sleep_power_w")]
    pub sleep_power: f64,
    #[serde(default)]
    pub constraints: Vec<OpConstraint>,
}

impl PlatformSpec {
    pub fn validate(&self) -> Result<()> {
        if self.pes.is_empty() {
            return Err(Error::validation(None, "platform has no PEs"));
        }
        let mut ids = HashSet::new();
        for (i, pe) in self.pes.iter().enumerate() {
            let at = Some(i + 1);
            if pe.id.is_empty() {
                return Err(Error::validation(at, "PE id is empty"));
            }
            if !ids.insert(pe.id.as_str()) {
                return Err(Error::validation(at, format!("duplicate PE id `{}`", pe.id)));
            }
            if pe.lm_capacity == 0 {
                return Err(Error::validation(
                    at,
                    format!("PE `{}` has zero LM capacity", pe.id),
                ));
            }
            if !matches!(pe.bus_width, 4 | 8 | 16) {
                return Err(Error::validation(
                    at,
                    format!("PE `{}` bus_width {} is not 4, 8 or 16", pe.id, pe.bus_width),
                ));
            }
        }
        let cpus = self.pes.iter().filter(|p| p.role == PeRole::Cpu).count();
        if cpus != 1 {
            return Err(Error::validation(
                None,
                format!("platform must have exactly one CPU, found {cpus}"),
            ));
        }

        if self.vf_table.is_empty() {
            return Err(Error::validation(None, "V-F table is empty"));
        }
        for (i, vf) in self.vf_table.iter().enumerate() {
            if !(vf.voltage.is_finite() && vf.voltage > 0.0) {
                return Err(Error::validation(Some(i + 1), "voltage must be positive"));
            }
            if !(vf.frequency.is_finite() && vf.frequency > 0.0) {
                return Err(Error::validation(Some(i + 1), "frequency must be positive"));
            }
        }
        for (i, pair) in self.vf_table.windows(2).enumerate() {
            if pair[1].voltage == pair[0].voltage {
                return Err(Error::validation(
                    Some(i + 2),
                    format!("duplicate voltage {} V", pair[1].voltage),
                ));
            }
            if pair[1].voltage < pair[0].voltage {
                return Err(Error::validation(
                    Some(i + 2),
                    "V-F table is not sorted by voltage",
                ));
            }
            if pair[1].frequency <= pair[0].frequency {
                return Err(Error::validation(
                    Some(i + 2),
                    "frequency is not strictly increasing with voltage",
                ));
            }
        }

        if !(self.sleep_power.is_finite() && self.sleep_power >= 0.0) {
            return Err(Error::validation(None, "sleep_power_w must be >= 0"));
        }

        let mut seen = HashSet::new();
        for (i, c) in self.constraints.iter().enumerate() {
            let at = Some(i + 1);
            if self.pe_index(&c.pe).is_none() {
                return Err(Error::validation(at, format!("constraint names unknown PE `{}`", c.pe)));
            }
            if !seen.insert((c.pe.as_str(), &c.kind)) {
                return Err(Error::validation(
                    at,
                    format!("duplicate constraint for ({}, {})", c.pe, c.kind),
                ));
            }
            match (&c.limits, c.supported) {
                (Some(_), false) => {
                    return Err(Error::validation(at, "unsupported constraint carries limits"))
                }
                (Some(l), true) if l.iter().any(|&x| x == 0) => {
                    return Err(Error::validation(at, "constraint limits must be >= 1"))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let spec: PlatformSpec =
            serde_json::from_str(s).map_err(|e| Error::parse("platform", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("platform serializes")
    }

    pub fn pe_index(&self, id: &str) -> Option<usize> {
        self.pes.iter().position(|p| p.id == id)
    }

    pub fn cpu_index(&self) -> usize {
        self.pes
            .iter()
            .position(|p| p.role == PeRole::Cpu)
            .expect("validated platform has a CPU")
    }

    pub fn voltage_index(&self, v: f64) -> Option<usize> {
        self.vf_table.iter().position(|p| p.voltage == v)
    }

    pub fn max_voltage_index(&self) -> usize {
        self.vf_table.len() - 1
    }

    /// Resolves the constraint for (pe, kind). Undeclared pairs default to
    /// unlimited support on the CPU and no support on accelerators.
    pub fn constraint(&self, pe: &Pe, kind: &KernelType) -> OpConstraint {
        self.constraints
            .iter()
            .find(|c| c.pe == pe.id && &c.kind == kind)
            .cloned()
            .unwrap_or_else(|| match pe.role {
                PeRole::Cpu => OpConstraint::unlimited(&pe.id, kind.clone()),
                PeRole::Accelerator => OpConstraint::unsupported(&pe.id, kind.clone()),
            })
    }
}

pub fn load_platform(path: impl AsRef<Path>) -> Result<PlatformSpec> {
    PlatformSpec::from_json_str(&read(path.as_ref())?)
}

pub(crate) fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// F_max at a listed voltage. Voltages are a discrete set; there is no
/// interpolation.
pub fn max_frequency(spec: &PlatformSpec, v: f64) -> Result<f64> {
    spec.vf_table
        .iter()
        .find(|p| p.voltage == v)
        .map(|p| p.frequency)
        .ok_or(Error::UnknownVoltage(v))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecoupledPower {
    pub p_stat: f64,
    pub p_dyn_base: f64,
    /// True when the linear fit went negative and was clamped to zero.
    pub clamped: bool,
}

/// Splits static and dynamic power from two total-power measurements taken
/// at one voltage and two frequencies, assuming `total = p_stat + slope·f`.
/// `p_dyn_base` is the dynamic part at `f_base`.
pub fn decouple_power(a: (f64, f64), b: (f64, f64), f_base: f64) -> Result<DecoupledPower> {
    let ((f1, p1), (f2, p2)) = (a, b);
    if f1 == f2 {
        return Err(Error::DegenerateMeasurement(f1));
    }
    if !(f_base > 0.0) {
        return Err(Error::InvalidArgument("f_base must be > 0".into()));
    }
    if p1 < 0.0 || p2 < 0.0 {
        return Err(Error::InvalidArgument("measured power must be >= 0".into()));
    }
    let df = f2 - f1;
    let slope = (p2 - p1) / df;
    let p_stat = (p1 * f2 - p2 * f1) / df;
    let p_dyn_base = slope * f_base;
    let clamped = p_stat < 0.0 || p_dyn_base < 0.0;
    if clamped {
        log::warn!(
            "power decoupling produced a negative component (p_stat={p_stat}, p_dyn_base={p_dyn_base}); clamping to 0"
        );
    }
    Ok(DecoupledPower {
        p_stat: p_stat.max(0.0),
        p_dyn_base: p_dyn_base.max(0.0),
        clamped,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CycleProfileEntry {
    pub pe: String,
    pub kind: KernelType,
    pub size: Vec<u64>,
    pub data_width: u32,
    /// Computation-only cycles, untiled, operands resident in LM.
    pub proc_cycles: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerProfileEntry {
    pub pe: String,
    pub kind: KernelType,
    pub voltage: f64,
    pub p_stat: f64,
    pub p_dyn_base: f64,
    pub f_base: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Profiles {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub cycles: Vec<CycleProfileEntry>,
    pub power: Vec<PowerProfileEntry>,
}

impl Profiles {
    /// Checks key uniqueness and coverage against `spec`.
    pub fn validate(&self, spec: &PlatformSpec) -> Result<()> {
        let mut cycle_keys = HashSet::new();
        for (i, c) in self.cycles.iter().enumerate() {
            let at = Some(i + 1);
            if spec.pe_index(&c.pe).is_none() {
                return Err(Error::validation(at, format!("cycle entry names unknown PE `{}`", c.pe)));
            }
            if c.proc_cycles == 0 {
                return Err(Error::validation(at, "proc_cycles must be >= 1"));
            }
            let probe = crate::workload::Kernel::new(c.kind.clone(), c.size.clone(), c.data_width);
            probe
                .validate()
                .map_err(|m| Error::validation(at, format!("cycle entry: {m}")))?;
            if !cycle_keys.insert((&c.pe, &c.kind, &c.size, c.data_width)) {
                return Err(Error::validation(
                    at,
                    format!(
                        "duplicate cycle entry for ({}, {}, {:?}, {})",
                        c.pe, c.kind, c.size, c.data_width
                    ),
                ));
            }
        }
        let mut power_keys = HashSet::new();
        for (i, p) in self.power.iter().enumerate() {
            let at = Some(i + 1);
            if spec.pe_index(&p.pe).is_none() {
                return Err(Error::validation(at, format!("power entry names unknown PE `{}`", p.pe)));
            }
            if spec.voltage_index(p.voltage).is_none() {
                return Err(Error::validation(
                    at,
                    format!("power entry at {} V which is not in the V-F table", p.voltage),
                ));
            }
            if !(p.p_stat >= 0.0 && p.p_dyn_base >= 0.0 && p.f_base > 0.0)
                || !(p.p_stat.is_finite() && p.p_dyn_base.is_finite() && p.f_base.is_finite())
            {
                return Err(Error::validation(
                    at,
                    "power entry needs p_stat >= 0, p_dyn_base >= 0, f_base > 0",
                ));
            }
            if !power_keys.insert((&p.pe, &p.kind, p.voltage.to_bits())) {
                return Err(Error::validation(
                    at,
                    format!("duplicate power entry for ({}, {}, {} V)", p.pe, p.kind, p.voltage),
                ));
            }
        }
        for c in spec.constraints.iter().filter(|c| c.supported) {
            if !self.cycles.iter().any(|e| e.pe == c.pe && e.kind == c.kind) {
                return Err(Error::validation(
                    None,
                    format!("supported pair ({}, {}) has no cycle profile", c.pe, c.kind),
                ));
            }
            for vf in &spec.vf_table {
                if !power_keys.contains(&(&c.pe, &c.kind, vf.voltage.to_bits())) {
                    return Err(Error::validation(
                        None,
                        format!(
                            "supported pair ({}, {}) has no power entry at {} V",
                            c.pe, c.kind, vf.voltage
                        ),
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn from_json_str(s: &str, spec: &PlatformSpec) -> Result<Self> {
        let p: Profiles = serde_json::from_str(s).map_err(|e| Error::parse("profiles", e))?;
        p.validate(spec)?;
        Ok(p)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("profiles serialize")
    }

    pub fn power_entry(&self, pe: &str, kind: &KernelType, v: f64) -> Option<&PowerProfileEntry> {
        self.power
            .iter()
            .find(|p| p.pe == pe && &p.kind == kind && p.voltage == v)
    }

    /// Cycle entries grouped by (pe, kind) for fast lookup.
    pub fn cycle_index(&self) -> HashMap<(&str, &KernelType), Vec<&CycleProfileEntry>> {
        let mut map: HashMap<_, Vec<_>> = HashMap::new();
        for c in &self.cycles {
            map.entry((c.pe.as_str(), &c.kind)).or_default().push(c);
        }
        map
    }
}

pub fn load_profiles(path: impl AsRef<Path>, spec: &PlatformSpec) -> Result<Profiles> {
    Profiles::from_json_str(&read(path.as_ref())?, spec)
}
