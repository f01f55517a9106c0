//! Operand tiling and the data-movement cycle model.
//!
//! Kernels are split along one canonical axis only: matmul along M, conv2d
//! along output rows, every shape-preserving kind along dimension 0. FFT is
//! never split. Non-split operands (matmul K×N weights, conv filters) travel
//! with every tile and must fit whole.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::platform::{OpConstraint, Pe};
use crate::workload::{Kernel, KernelType};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TilingMode {
    Untiled,
    SingleBuffer,
    DoubleBuffer,
}

impl TilingMode {
    pub const ALL: [TilingMode; 3] = [
        TilingMode::Untiled,
        TilingMode::SingleBuffer,
        TilingMode::DoubleBuffer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TilingMode::Untiled => "untiled",
            TilingMode::SingleBuffer => "single_buffer",
            TilingMode::DoubleBuffer => "double_buffer",
        }
    }

    /// Bytes available for one tile's operands on `pe`.
    pub fn budget(self, pe: &Pe) -> u64 {
        match self {
            TilingMode::DoubleBuffer => pe.lm_capacity / 2,
            _ => pe.lm_capacity,
        }
    }

    // Lower rank wins a cycle tie.
    fn tie_rank(self) -> u8 {
        match self {
            TilingMode::Untiled => 0,
            TilingMode::DoubleBuffer => 1,
            TilingMode::SingleBuffer => 2,
        }
    }
}

impl std::fmt::Display for TilingMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TilingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TilingMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown tiling mode `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Footprint {
    pub bytes_in: u64,
    pub bytes_out: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub mode: TilingMode,
    pub n_tiles: u64,
    /// Dimensions of a full tile (every tile but possibly the last).
    pub tile_dims: Vec<u64>,
    pub tile_bytes_in: u64,
    pub tile_bytes_out: u64,
    pub last_tile_bytes_in: u64,
    pub last_tile_bytes_out: u64,
    pub budget: u64,
}

/// Extent of the split axis.
fn split_extent(k: &Kernel) -> u64 {
    match k.kind {
        KernelType::Matmul => k.size[0],
        KernelType::Conv2d => out_rows(k),
        KernelType::Fft => 1,
        _ => k.size[0],
    }
}

fn out_rows(k: &Kernel) -> u64 {
    k.size[0].div_ceil(k.size[6])
}

fn out_cols(k: &Kernel) -> u64 {
    k.size[1].div_ceil(k.size[6])
}

/// Dimensions of a tile covering `rows` units of the split axis.
fn tile_dims(k: &Kernel, rows: u64) -> Vec<u64> {
    let mut dims = k.size.clone();
    match k.kind {
        KernelType::Fft => {}
        KernelType::Conv2d => dims[0] = conv_in_rows(k, rows),
        _ => dims[0] = rows,
    }
    dims
}

fn conv_in_rows(k: &Kernel, rows: u64) -> u64 {
    let (h, kh, stride) = (k.size[0], k.size[4], k.size[6]);
    if rows >= out_rows(k) {
        h
    } else {
        ((rows - 1) * stride + kh).min(h)
    }
}

/// Element counts (in, out) of a tile covering `rows` of the split axis.
fn tile_elements(k: &Kernel, rows: u64) -> (u128, u128) {
    let w = |x: u64| u128::from(x);
    match k.kind {
        KernelType::Matmul => {
            let (kd, n) = (w(k.size[1]), w(k.size[2]));
            let m = w(rows);
            (m * kd + kd * n, m * n)
        }
        KernelType::Conv2d => {
            let s = &k.size;
            let weights = w(s[2]) * w(s[3]) * w(s[4]) * w(s[5]);
            let input = w(conv_in_rows(k, rows)) * w(s[1]) * w(s[2]);
            (input + weights, w(rows) * w(out_cols(k)) * w(s[3]))
        }
        KernelType::Fft => {
            let n = w(k.size[0]);
            (n, n)
        }
        _ => {
            let rest = k.size[1..]
                .iter()
                .fold(1u128, |acc, &d| acc.saturating_mul(w(d)));
            let n = w(rows).saturating_mul(rest);
            let inputs = if k.kind == KernelType::Add { 2 } else { 1 };
            (n.saturating_mul(inputs), n)
        }
    }
}

fn tile_bytes(k: &Kernel, rows: u64) -> (u128, u128) {
    let (i, o) = tile_elements(k, rows);
    let bpe = u128::from(k.bytes_per_element());
    (i.saturating_mul(bpe), o.saturating_mul(bpe))
}

pub(crate) fn footprint_wide(k: &Kernel) -> (u128, u128) {
    tile_bytes(k, split_extent(k))
}

/// Bytes of all input and output operands of `k`.
pub fn operand_footprint(k: &Kernel) -> Footprint {
    let (i, o) = footprint_wide(k);
    let clamp = |x: u128| u64::try_from(x).unwrap_or(u64::MAX);
    Footprint {
        bytes_in: clamp(i),
        bytes_out: clamp(o),
    }
}

fn dims_within(dims: &[u64], lambda: &OpConstraint) -> bool {
    dims.iter()
        .enumerate()
        .all(|(i, &d)| lambda.limit(i).map_or(true, |l| d <= l))
}

fn tile_fits(k: &Kernel, rows: u64, budget: u64, lambda: &OpConstraint) -> bool {
    let (i, o) = tile_bytes(k, rows);
    i + o <= u128::from(budget) && dims_within(&tile_dims(k, rows), lambda)
}

/// Decomposes `k` for execution on `pe` under `mode`, picking the smallest
/// tile count whose tiles fit the mode's LM budget and the λ limits.
pub fn plan_tiles(k: &Kernel, pe: &Pe, lambda: &OpConstraint, mode: TilingMode) -> Result<TilePlan> {
    let untileable = |reason: String| Error::Untileable {
        kernel_id: k.id,
        pe: pe.id.clone(),
        reason,
    };
    if !lambda.supported {
        return Err(untileable(format!("`{}` is not supported", k.kind)));
    }
    let budget = mode.budget(pe);
    let extent = split_extent(k);

    let rows = if mode == TilingMode::Untiled {
        if !tile_fits(k, extent, budget, lambda) {
            return Err(untileable(format!(
                "untiled footprint does not fit {budget} B or exceeds limits"
            )));
        }
        extent
    } else {
        if !tile_fits(k, 1, budget, lambda) {
            return Err(untileable(format!(
                "a single-row tile does not fit {budget} B or exceeds limits"
            )));
        }
        // Largest row count that fits; footprint is monotone in rows.
        let (mut lo, mut hi) = (1u64, extent);
        while lo < hi {
            let mid = lo + (hi - lo + 1) / 2;
            if tile_fits(k, mid, budget, lambda) {
                lo = mid;
            } else {
                hi = mid - 1;
            }
        }
        let n = extent.div_ceil(lo);
        extent.div_ceil(n)
    };

    let n_tiles = extent.div_ceil(rows);
    let last_rows = extent - (n_tiles - 1) * rows;
    let (bi, bo) = tile_bytes(k, rows);
    let (li, lo) = tile_bytes(k, last_rows);
    Ok(TilePlan {
        mode,
        n_tiles,
        tile_dims: tile_dims(k, rows),
        tile_bytes_in: bi as u64,
        tile_bytes_out: bo as u64,
        last_tile_bytes_in: li as u64,
        last_tile_bytes_out: lo as u64,
        budget,
    })
}

/// Cycles of one DMA transfer between shared memory and LM.
pub fn transfer_cycles(pe: &Pe, bytes: u64) -> u64 {
    pe.dma_setup + bytes.div_ceil(u64::from(pe.bus_width)) * pe.cycles_per_beat
}

/// Transfer-in, compute and transfer-out cycles of one tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TileCost {
    pub x_in: u64,
    pub compute: u64,
    pub x_out: u64,
}

pub fn tile_costs(pe: &Pe, plan: &TilePlan, proc_cycles_total: u64, tile_overhead: u64) -> Vec<TileCost> {
    let n = plan.n_tiles;
    if plan.mode == TilingMode::Untiled {
        return vec![TileCost {
            x_in: transfer_cycles(pe, plan.tile_bytes_in),
            compute: proc_cycles_total,
            x_out: transfer_cycles(pe, plan.tile_bytes_out),
        }];
    }
    let compute = proc_cycles_total.div_ceil(n) + tile_overhead;
    (1..=n)
        .map(|t| {
            let (bi, bo) = if t == n {
                (plan.last_tile_bytes_in, plan.last_tile_bytes_out)
            } else {
                (plan.tile_bytes_in, plan.tile_bytes_out)
            };
            TileCost {
                x_in: transfer_cycles(pe, bi),
                compute,
                x_out: transfer_cycles(pe, bo),
            }
        })
        .collect()
}

/// Total cycles of a tile sequence.
///
/// Single buffering runs transfer-in, compute and transfer-out strictly in
/// sequence. Double buffering overlaps tile t's compute with the write-back
/// of tile t-1 followed by the fetch of tile t+1 on the one DMA channel.
pub fn pipeline_cycles(mode: TilingMode, tiles: &[TileCost]) -> u64 {
    match mode {
        TilingMode::Untiled | TilingMode::SingleBuffer => tiles
            .iter()
            .map(|t| t.x_in + t.compute + t.x_out)
            .sum(),
        TilingMode::DoubleBuffer => {
            let Some(first) = tiles.first() else { return 0 };
            let last = tiles[tiles.len() - 1];
            let mut total = first.x_in;
            for t in 0..tiles.len() {
                let fetch_next = tiles.get(t + 1).map_or(0, |n| n.x_in);
                let drain_prev = if t > 0 { tiles[t - 1].x_out } else { 0 };
                total += tiles[t].compute.max(fetch_next + drain_prev);
            }
            total + last.x_out
        }
    }
}

/// Total cycles to run `k` on `pe` following `plan`.
pub fn estimate_cycles(
    _k: &Kernel,
    pe: &Pe,
    plan: &TilePlan,
    proc_cycles_total: u64,
    tile_overhead: u64,
) -> u64 {
    pipeline_cycles(plan.mode, &tile_costs(pe, plan, proc_cycles_total, tile_overhead))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeChoice {
    pub mode: TilingMode,
    pub plan: TilePlan,
    pub cycles: u64,
}

/// Evaluates every feasible mode and keeps the one with the fewest cycles.
/// Ties prefer untiled, then double buffering, then single buffering.
pub fn preselect_mode(
    k: &Kernel,
    pe: &Pe,
    lambda: &OpConstraint,
    proc_cycles_total: u64,
    tile_overhead: u64,
) -> Result<ModeChoice> {
    TilingMode::ALL
        .into_iter()
        .filter_map(|mode| {
            let plan = plan_tiles(k, pe, lambda, mode).ok()?;
            let cycles = estimate_cycles(k, pe, &plan, proc_cycles_total, tile_overhead);
            Some(ModeChoice { mode, plan, cycles })
        })
        .min_by_key(|c| (c.cycles, c.mode.tie_rank()))
        .ok_or_else(|| Error::NoFeasibleMode {
            kernel_id: k.id,
            pe: pe.id.clone(),
        })
}
