mod common;

use common::{random_problem, replay};
use edsched::gen::{generate, GenConfig};
use edsched::optimizer::{enumerate_all, prune_dominated, Enumeration};
use edsched::perfmodel::kernel_proc_cycles;
use edsched::platform::{
    decouple_power, CycleProfileEntry, OpConstraint, Pe, PeRole, PlatformSpec, Profiles,
};
use edsched::schedule::EnergyReport;
use edsched::tiling::{estimate_cycles, plan_tiles, TilingMode};
use edsched::workload::{Kernel, KernelType, Workload};
use proptest::prelude::*;

fn pe_strategy() -> impl Strategy<Value = Pe> {
    (256u64..=64 * 1024, prop::sample::select(vec![4u32, 8, 16]), 0u64..=200, 0u64..=3).prop_map(
        |(lm, bus, setup, cpb)| Pe {
            id: "acc".into(),
            role: PeRole::Accelerator,
            lm_capacity: lm,
            bus_width: bus,
            dma_setup: setup,
            cycles_per_beat: cpb,
        },
    )
}

fn kernel_strategy() -> impl Strategy<Value = Kernel> {
    let dw = prop::sample::select(vec![8u32, 16, 32]);
    prop_oneof![
        (1u64..=512, 1u64..=64, 1u64..=64, dw.clone())
            .prop_map(|(m, k, n, dw)| Kernel::new(KernelType::Matmul, vec![m, k, n], dw)),
        (1u64..=64, 1u64..=64, 1u64..=8, 1u64..=8, prop::sample::select(vec![1u64, 3, 5]), 1u64..=3)
            .prop_map(|(h, w, ci, co, k, s)| Kernel::new(KernelType::Conv2d, vec![h, w, ci, co, k, k, s], 8)),
        (1u64..=2048, 1u64..=32, dw.clone()).prop_map(|(a, b, dw)| Kernel::new(KernelType::Add, vec![a, b], dw)),
        (1u64..=1024, 1u64..=64, dw.clone()).prop_map(|(a, b, dw)| Kernel::new(KernelType::Norm, vec![a, b], dw)),
        (1u64..=256, 1u64..=256, dw).prop_map(|(a, b, dw)| Kernel::new(KernelType::Transpose, vec![a, b], dw)),
        (1u64..=4096).prop_map(|n| Kernel::new(KernelType::Fft, vec![n], 32)),
    ]
}

fn mode_strategy() -> impl Strategy<Value = TilingMode> {
    prop::sample::select(vec![TilingMode::Untiled, TilingMode::SingleBuffer, TilingMode::DoubleBuffer])
}

proptest! {
    #[test]
    fn closed_form_matches_event_replay(
        pe in pe_strategy(),
        k in kernel_strategy(),
        mode in mode_strategy(),
        proc in 1u64..=2_000_000,
        overhead in 0u64..=50,
    ) {
        let lambda = OpConstraint::unlimited(&pe.id, k.kind.clone());
        if let Ok(plan) = plan_tiles(&k, &pe, &lambda, mode) {
            prop_assert_eq!(estimate_cycles(&k, &pe, &plan, proc, overhead), replay(&pe, &plan, proc, overhead));
            let biggest = (plan.tile_bytes_in + plan.tile_bytes_out)
                .max(plan.last_tile_bytes_in + plan.last_tile_bytes_out);
            prop_assert!(biggest <= mode.budget(&pe));
            prop_assert!(plan.n_tiles >= 1);
            if mode == TilingMode::Untiled {
                prop_assert_eq!(plan.n_tiles, 1);
            }
        }
    }

    #[test]
    fn limits_shrink_tiles_never_grow_them(
        pe in pe_strategy(),
        k in kernel_strategy(),
        limit in 1u64..=64,
    ) {
        let free = OpConstraint::unlimited(&pe.id, k.kind.clone());
        let mut capped = free.clone();
        capped.limits = Some(vec![limit; k.size.len()]);
        if let (Ok(a), Ok(b)) = (
            plan_tiles(&k, &pe, &free, TilingMode::DoubleBuffer),
            plan_tiles(&k, &pe, &capped, TilingMode::DoubleBuffer),
        ) {
            prop_assert!(b.n_tiles >= a.n_tiles);
        }
    }

    #[test]
    fn decoupling_recovers_components(
        p_stat in 1e-6f64..1e-2,
        p_dyn in 1e-6f64..1e-2,
        f_base in 1e7f64..1e9,
        ratio in 1.1f64..4.0,
    ) {
        let slope = p_dyn / f_base;
        let (f1, f2) = (f_base, f_base * ratio);
        let d = decouple_power((f1, p_stat + slope * f1), (f2, p_stat + slope * f2), f_base).unwrap();
        prop_assert!(((d.p_stat - p_stat) / p_stat).abs() <= 1e-9);
        prop_assert!(((d.p_dyn_base - p_dyn) / p_dyn).abs() <= 1e-9);
        prop_assert!(!d.clamped);
    }

    #[test]
    fn workload_json_round_trip(kernels in prop::collection::vec(kernel_strategy(), 1..20)) {
        let w = Workload::new("w", kernels).unwrap();
        let back = Workload::from_json_str(&w.to_json_string()).unwrap();
        prop_assert_eq!(&w, &back);
        for (i, k) in back.kernels.iter().enumerate() {
            prop_assert_eq!(k.id, i + 1);
        }
    }

    #[test]
    fn report_invariants(
        deadline in 1e-4f64..1.0,
        sleep in 0.0f64..1e-3,
        active_time in 0.0f64..1.0,
        active_energy in 0.0f64..1e-2,
    ) {
        let r = EnergyReport::compute(deadline, sleep, active_time, active_energy);
        prop_assert!(r.sleep_time >= 0.0);
        prop_assert_eq!(r.sleep_time, (deadline - active_time).max(0.0));
        prop_assert_eq!(r.total_energy, r.active_energy + r.sleep_energy);
        if active_time >= deadline {
            prop_assert_eq!(r.sleep_energy, 0.0);
        }
    }

    #[test]
    fn extrapolation_scales_with_ops(
        m in 1u64..=256, k in 1u64..=256, n in 1u64..=256,
        qm in 1u64..=256, qk in 1u64..=256, qn in 1u64..=256,
        cycles in 1u64..=10_000_000,
    ) {
        let cpu = Pe {
            id: "cpu".into(),
            role: PeRole::Cpu,
            lm_capacity: 1 << 20,
            bus_width: 4,
            dma_setup: 0,
            cycles_per_beat: 0,
        };
        let profiles = Profiles {
            description: None,
            cycles: vec![CycleProfileEntry {
                pe: "cpu".into(),
                kind: KernelType::Matmul,
                size: vec![m, k, n],
                data_width: 8,
                proc_cycles: cycles,
            }],
            power: vec![],
        };
        let exact = Kernel::new(KernelType::Matmul, vec![m, k, n], 8);
        prop_assert_eq!(kernel_proc_cycles(&profiles, &exact, &cpu).unwrap(), cycles);

        let q = Kernel::new(KernelType::Matmul, vec![qm, qk, qn], 8);
        let got = kernel_proc_cycles(&profiles, &q, &cpu).unwrap() as u128;
        let (num, den) = (cycles as u128 * (qm * qk * qn) as u128, (m * k * n) as u128);
        prop_assert_eq!(got, num.div_ceil(den).max(1));

        let other_width = Kernel::new(KernelType::Matmul, vec![qm, qk, qn], 16);
        prop_assert!(kernel_proc_cycles(&profiles, &other_width, &cpu).is_err());
    }

    #[test]
    fn pruning_keeps_every_useful_configuration(seed in 0u64..5000) {
        let p = random_problem(seed);
        for g in enumerate_all(&p, Enumeration::default()).unwrap() {
            for per_voltage in [false, true] {
                let kept = prune_dominated(&g.items, per_voltage);
                prop_assert!(!kept.is_empty());
                for c in &g.items {
                    let covered = kept.iter().any(|d| {
                        d.time <= c.time
                            && d.energy <= c.energy
                            && (!per_voltage || d.voltage_index == c.voltage_index)
                    });
                    prop_assert!(covered, "kernel {} dropped {:?}", g.kernel_id, (c.pe_index, c.voltage_index));
                }
            }
        }
    }
}

#[test]
fn generated_instances_always_load() {
    let dir = tempfile::tempdir().unwrap();
    for seed in 0..1000 {
        let inst = generate(seed, &GenConfig::default());
        let w = dir.path().join("w.json");
        let pl = dir.path().join("p.json");
        let pr = dir.path().join("r.json");
        std::fs::write(&w, inst.workload.to_json_string()).unwrap();
        std::fs::write(&pl, inst.platform.to_json_string()).unwrap();
        std::fs::write(&pr, inst.profiles.to_json_string()).unwrap();
        let w2 = edsched::load_workload(&w).unwrap();
        let pl2 = edsched::load_platform(&pl).unwrap();
        let pr2 = edsched::load_profiles(&pr, &pl2).unwrap();
        assert_eq!(w2, inst.workload, "seed {seed}");
        assert_eq!(pl2, inst.platform, "seed {seed}");
        assert_eq!(pr2, inst.profiles, "seed {seed}");
    }
}

#[test]
fn generation_is_seed_determined() {
    let cfg = GenConfig::default();
    assert_eq!(generate(42, &cfg), generate(42, &cfg));
    let distinct: std::collections::BTreeSet<String> =
        (0..20).map(|s| generate(s, &cfg).profiles.to_json_string()).collect();
    assert_eq!(distinct.len(), 20);
}

#[test]
fn platform_json_round_trip() {
    let spec = edsched::load_platform(common::fixture("heeptimize.json")).unwrap();
    let back = PlatformSpec::from_json_str(&spec.to_json_string()).unwrap();
    assert_eq!(spec, back);
}
