//! Independent oracles shared by the integration suites.
#![allow(dead_code)]

use edsched::gen::{generate, GenConfig};
use edsched::optimizer::{enumerate_all, Enumeration, Problem};
use edsched::platform::Pe;
use edsched::tiling::{TilePlan, TilingMode};
use edsched::workload::KernelGroup;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> std::path::PathBuf {
    std::path::PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}

fn dma(pe: &Pe, bytes: u64) -> u64 {
    pe.dma_setup + (bytes + pe.bus_width as u64 - 1) / pe.bus_width as u64 * pe.cycles_per_beat
}

/// Cycle-by-cycle replay of a tile plan with one compute unit, one serial
/// DMA channel and (for double buffering) two LM buffers.
pub fn replay(pe: &Pe, plan: &TilePlan, proc_cycles: u64, overhead: u64) -> u64 {
    let n = plan.n_tiles as usize;
    let bytes = |t: usize| {
        if t + 1 == n {
            (plan.last_tile_bytes_in, plan.last_tile_bytes_out)
        } else {
            (plan.tile_bytes_in, plan.tile_bytes_out)
        }
    };
    let compute = |_: usize| {
        if plan.mode == TilingMode::Untiled {
            proc_cycles
        } else {
            (proc_cycles + plan.n_tiles - 1) / plan.n_tiles + overhead
        }
    };
    match plan.mode {
        TilingMode::Untiled | TilingMode::SingleBuffer => {
            let mut clock = 0;
            for t in 0..n {
                let (bi, bo) = bytes(t);
                clock += dma(pe, bi);
                clock += compute(t);
                clock += dma(pe, bo);
            }
            clock
        }
        TilingMode::DoubleBuffer => {
            // DMA queue: in_0, then per tile t: out_{t-1}, in_{t+1}; finally out_{n-1}.
            enum Op {
                In(usize),
                Out(usize),
            }
            let mut queue = vec![Op::In(0)];
            for t in 0..n {
                if t > 0 {
                    queue.push(Op::Out(t - 1));
                }
                if t + 1 < n {
                    queue.push(Op::In(t + 1));
                }
            }
            queue.push(Op::Out(n - 1));

            let mut in_done = vec![None::<u64>; n];
            let mut out_done = vec![None::<u64>; n];
            let mut comp_done = vec![None::<u64>; n];
            let mut dma_free = 0u64;
            // Compute of tile t can be resolved once in_t is done.
            let resolve = |t: usize, in_done: &Vec<Option<u64>>, comp_done: &mut Vec<Option<u64>>| {
                let prev = if t == 0 { 0 } else { comp_done[t - 1].unwrap() };
                let start = in_done[t].unwrap().max(prev);
                comp_done[t] = Some(start + compute(t));
            };
            for op in queue {
                match op {
                    Op::In(t) => {
                        // The buffer is free once tile t-2 has been written back.
                        let ready = if t >= 2 { out_done[t - 2].unwrap() } else { 0 };
                        let start = dma_free.max(ready);
                        dma_free = start + dma(pe, bytes(t).0);
                        in_done[t] = Some(dma_free);
                        resolve(t, &in_done, &mut comp_done);
                    }
                    Op::Out(t) => {
                        let start = dma_free.max(comp_done[t].unwrap());
                        dma_free = start + dma(pe, bytes(t).1);
                        out_done[t] = Some(dma_free);
                    }
                }
            }
            out_done[n - 1].unwrap()
        }
    }
}

/// A deadline between the fastest schedule and the slowest one.
pub fn random_deadline(rng: &mut ChaCha8Rng, p: &Problem) -> f64 {
    let groups = enumerate_all(p, Enumeration::default()).unwrap();
    let (mut lo, mut hi) = (0.0, 0.0);
    for g in &groups {
        lo += g.items.iter().map(|c| c.time).fold(f64::INFINITY, f64::min);
        hi += g.items.iter().map(|c| c.time).fold(0.0, f64::max);
    }
    lo + rng.gen_range(0.0..1.1) * (hi - lo)
}

pub fn random_problem(seed: u64) -> Problem {
    let inst = generate(seed, &GenConfig::default());
    let mut p = Problem::new(inst.workload, inst.platform, inst.profiles, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    p.deadline = random_deadline(&mut rng, &p);
    p
}

pub fn random_groups(seed: u64, n: usize) -> Vec<KernelGroup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31) + 7);
    let mut groups = Vec::new();
    let mut first = 1;
    while first <= n {
        let last = rng.gen_range(first..=n.min(first + 2));
        groups.push(KernelGroup {
            name: format!("g{}", groups.len() + 1),
            first_kernel: first,
            last_kernel: last,
        });
        first = last + 1;
    }
    groups
}

/// Exhaustive search over every combination of valid (unpruned)
/// configurations, cutting only prefixes that already miss the deadline.
/// Energies are summed in kernel order. Ties keep the first combination in
/// (PE index, voltage index) order. Returns (energy, per-kernel (PE, voltage)).
pub fn brute_force(p: &Problem) -> Option<(f64, Vec<(usize, usize)>)> {
    let groups = enumerate_all(p, Enumeration::default()).ok()?;
    let items: Vec<Vec<(f64, f64, (usize, usize))>> = groups
        .iter()
        .map(|g| {
            let mut v: Vec<_> = g
                .items
                .iter()
                .map(|c| (c.time, c.energy, (c.pe_index, c.voltage_index)))
                .collect();
            v.sort_by_key(|x| x.2);
            v
        })
        .collect();
    let n = items.len();
    let mut suffix_min = vec![0.0; n + 1];
    for d in (0..n).rev() {
        let m = items[d].iter().map(|x| x.0).fold(f64::INFINITY, f64::min);
        suffix_min[d] = suffix_min[d + 1] + m;
    }
    struct S<'a> {
        items: &'a [Vec<(f64, f64, (usize, usize))>],
        suffix_min: &'a [f64],
        deadline: f64,
        pick: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
    }
    fn dfs(s: &mut S, d: usize, t: f64, e: f64) {
        if d == s.items.len() {
            if t <= s.deadline && s.best.as_ref().map_or(true, |(be, _)| e < *be) {
                s.best = Some((e, s.pick.clone()));
            }
            return;
        }
        // Loose cut: the remaining kernels can only add time.
        if t + s.suffix_min[d] > s.deadline * (1.0 + 1e-9) {
            return;
        }
        for i in 0..s.items[d].len() {
            let (ti, ei, _) = s.items[d][i];
            s.pick[d] = i;
            dfs(s, d + 1, t + ti, e + ei);
        }
    }
    let mut s = S {
        items: &items,
        suffix_min: &suffix_min,
        deadline: p.deadline,
        pick: vec![0; n],
        best: None,
    };
    dfs(&mut s, 0, 0.0, 0.0);
    s.best.map(|(e, pick)| {
        (
            e,
            pick.iter().enumerate().map(|(d, &i)| items[d][i].2).collect(),
        )
    })
}

/// Number of item combinations `brute_force` ranges over.
pub fn combinations(p: &Problem) -> f64 {
    enumerate_all(p, Enumeration::default())
        .map(|g| g.iter().map(|g| g.items.len() as f64).product())
        .unwrap_or(0.0)
}
