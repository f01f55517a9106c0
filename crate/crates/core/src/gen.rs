//! Seeded random instances: a small workload, a platform and matching
//! profiles that always load cleanly.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::platform::{
    CycleProfileEntry, OpConstraint, Pe, PeRole, PlatformSpec, PowerProfileEntry, Profiles, VfPoint,
};
use crate::workload::{Kernel, KernelType, Workload};

#[derive(Debug, Clone, PartialEq)]
pub struct GenConfig {
    /// Inclusive kernel-count range.
    pub kernels: (usize, usize),
    /// Inclusive PE-count range, CPU included.
    pub pes: (usize, usize),
    /// Inclusive V-F point range.
    pub voltages: (usize, usize),
    /// Inclusive range of matmul and element-wise dimensions.
    pub dim: (u64, u64),
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            kernels: (3, 8),
            pes: (2, 3),
            voltages: (2, 4),
            dim: (4, 96),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub workload: Workload,
    pub platform: PlatformSpec,
    pub profiles: Profiles,
}

const VOLTAGES: [f64; 7] = [0.5, 0.6, 0.65, 0.7, 0.8, 0.9, 1.0];

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    (rng.gen_range(lo.ln()..hi.ln())).exp()
}

fn random_kernel(rng: &mut ChaCha8Rng, cfg: &GenConfig) -> Kernel {
    let d = |rng: &mut ChaCha8Rng| rng.gen_range(cfg.dim.0..=cfg.dim.1);
    let dw = *[8, 8, 16, 32].choose(rng).unwrap();
    let kinds = [
        KernelType::Matmul,
        KernelType::Matmul,
        KernelType::Conv2d,
        KernelType::Add,
        KernelType::Norm,
        KernelType::Scale,
        KernelType::Transpose,
        KernelType::Softmax,
        KernelType::Gelu,
    ];
    let kind = kinds.choose(rng).unwrap().clone();
    let size = match kind {
        KernelType::Matmul => vec![d(rng), d(rng), d(rng)],
        KernelType::Conv2d => {
            let kh = *[1, 3].choose(rng).unwrap();
            vec![
                rng.gen_range(4..=32),
                rng.gen_range(4..=32),
                rng.gen_range(1..=16),
                rng.gen_range(1..=16),
                kh,
                kh,
                rng.gen_range(1..=2),
            ]
        }
        _ => vec![d(rng), d(rng)],
    };
    Kernel::new(kind, size, dw)
}

/// Generates one instance from `seed`.
pub fn generate(seed: u64, cfg: &GenConfig) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;

    let n = rng.gen_range(cfg.kernels.0..=cfg.kernels.1);
    let kernels: Vec<Kernel> = (0..n).map(|_| random_kernel(rng, cfg)).collect();
    let workload = Workload::new(format!("random-{seed}"), kernels).expect("generated kernels are valid");

    let nv = rng.gen_range(cfg.voltages.0..=cfg.voltages.1).min(VOLTAGES.len());
    let mut volts: Vec<f64> = VOLTAGES.choose_multiple(rng, nv).copied().collect();
    volts.sort_by(f64::total_cmp);
    let mut freqs: Vec<f64> = (0..nv).map(|_| rng.gen_range(50..=800) as f64 * 1e6).collect();
    freqs.sort_by(f64::total_cmp);
    for i in 1..nv {
        if freqs[i] <= freqs[i - 1] {
            freqs[i] = freqs[i - 1] + 1e6;
        }
    }
    let vf_table: Vec<VfPoint> = volts
        .iter()
        .zip(&freqs)
        .map(|(&voltage, &frequency)| VfPoint { voltage, frequency })
        .collect();

    let npe = rng.gen_range(cfg.pes.0..=cfg.pes.1);
    let mut pes = vec![Pe {
        id: "cpu".into(),
        role: PeRole::Cpu,
        lm_capacity: 128 * 1024,
        bus_width: 4,
        dma_setup: 0,
        cycles_per_beat: 0,
    }];
    for i in 1..npe {
        pes.push(Pe {
            id: format!("acc{i}"),
            role: PeRole::Accelerator,
            lm_capacity: *[8u64, 16, 32, 64].choose(rng).unwrap() * 1024,
            bus_width: *[4, 8, 16].choose(rng).unwrap(),
            dma_setup: rng.gen_range(10..=100),
            cycles_per_beat: rng.gen_range(1..=2),
        });
    }

    let kinds: BTreeSet<KernelType> = workload.kernels.iter().map(|k| k.kind.clone()).collect();
    let mut constraints = Vec::new();
    // (pe index, kind) pairs that get profiles.
    let mut runs: Vec<(usize, KernelType)> = kinds.iter().map(|k| (0, k.clone())).collect();
    for (i, pe) in pes.iter().enumerate().skip(1) {
        for kind in &kinds {
            let p_support = match kind {
                KernelType::Softmax | KernelType::Gelu => 0.25,
                _ => 0.75,
            };
            if !rng.gen_bool(p_support) {
                continue;
            }
            let mut c = OpConstraint::unlimited(&pe.id, kind.clone());
            if rng.gen_bool(0.3) {
                let arity = workload.kernels.iter().find(|k| &k.kind == kind).unwrap().size.len();
                c.limits = Some((0..arity).map(|_| rng.gen_range(8..=256)).collect());
            }
            constraints.push(c);
            runs.push((i, kind.clone()));
        }
    }

    let platform = PlatformSpec {
        name: Some(format!("random-{seed}")),
        pes,
        vf_table,
        shared_capacity: 128 * 1024,
        sleep_power: rng.gen_range(50.0..200.0) * 1e-6,
        constraints,
    };

    let vmax = *volts.last().unwrap();
    let fmax = *freqs.last().unwrap();
    let mut cycles = Vec::new();
    let mut power = Vec::new();
    for (i, kind) in &runs {
        let pe = &platform.pes[*i];
        let cpo = if *i == 0 {
            log_uniform(rng, 2.0, 8.0)
        } else {
            log_uniform(rng, 0.05, 1.0)
        };
        let widths: BTreeSet<u32> = workload
            .kernels
            .iter()
            .filter(|k| &k.kind == kind)
            .map(|k| k.data_width)
            .collect();
        for dw in widths {
            let mut sizes: Vec<Vec<u64>> = workload
                .kernels
                .iter()
                .filter(|k| &k.kind == kind && k.data_width == dw)
                .map(|k| k.size.clone())
                .collect();
            sizes.sort();
            sizes.dedup();
            sizes.shuffle(rng);
            let keep = rng.gen_range(1..=sizes.len());
            for size in sizes.into_iter().take(keep) {
                let ops = Kernel::new(kind.clone(), size.clone(), dw).op_count().as_f64();
                let proc_cycles = (ops * cpo * rng.gen_range(0.9..1.1)).ceil().max(1.0) as u64;
                cycles.push(CycleProfileEntry {
                    pe: pe.id.clone(),
                    kind: kind.clone(),
                    size,
                    data_width: dw,
                    proc_cycles,
                });
            }
        }
        let p_stat_max = log_uniform(rng, 5e-5, 5e-4);
        let p_dyn_max = log_uniform(rng, 5e-4, 5e-3);
        for (&v, &f) in volts.iter().zip(&freqs) {
            let s = (v / vmax) * (v / vmax);
            power.push(PowerProfileEntry {
                pe: pe.id.clone(),
                kind: kind.clone(),
                voltage: v,
                p_stat: p_stat_max * s,
                p_dyn_base: p_dyn_max * s * (f / fmax),
                f_base: f,
            });
        }
    }

    let profiles = Profiles {
        description: Some(format!("random instance, seed {seed}")),
        cycles,
        power,
    };
    Instance {
        workload,
        platform,
        profiles,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn instances_are_deterministic_and_valid() {
        for seed in 0..50 {
            let a = generate(seed, &GenConfig::default());
            assert_eq!(a, generate(seed, &GenConfig::default()));
            a.platform.validate().unwrap();
            a.profiles.validate(&a.platform).unwrap();
            let text = a.profiles.to_json_string();
            Profiles::from_json_str(&text, &a.platform).unwrap();
            assert!((3..=8).contains(&a.workload.len()));
            assert!((2..=3).contains(&a.platform.pes.len()));
            assert!((2..=4).contains(&a.platform.vf_table.len()));
        }
    }
}
