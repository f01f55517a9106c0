//! Multiple-choice knapsack engine: pick exactly one choice per group,
//! total time within the deadline, minimum total energy.
//!
//! The exact solver walks the groups in kernel order and keeps, per depth,
//! the partial assignments that are neither over the deadline, nor beaten
//! by the linear-relaxation bound, nor dominated in (time, energy) by an
//! assignment that precedes them lexicographically. Partial totals are
//! exact folds in kernel order, so the winner is optimal on the model's own
//! floating-point arithmetic and ties resolve to the lexicographically
//! smallest choice vector.

use std::collections::BTreeMap;

use crate::perfmodel::{Configuration, ModelOptions};
use crate::schedule::Totals;

/// One selectable item of a group. `members` are the per-kernel
/// configurations it expands to, in kernel order.
#[derive(Debug, Clone)]
pub(crate) struct Choice {
    /// (PE index, voltage index); defines the lexicographic tie order.
    pub key: (usize, usize),
    pub members: Vec<Configuration>,
    pub time: f64,
    pub energy: f64,
}

impl Choice {
    pub fn new(key: (usize, usize), members: Vec<Configuration>) -> Self {
        let (mut time, mut energy) = (0.0, 0.0);
        for m in &members {
            time += m.time;
            energy += m.energy;
        }
        Choice {
            key,
            members,
            time,
            energy,
        }
    }

    fn push_into(&self, totals: &mut Totals, opts: &ModelOptions) {
        for m in &self.members {
            totals.push(m, opts);
        }
    }
}

/// Drops choices that another choice of the group matches or beats in both
/// time and energy. Exact ties keep the smaller key. With `per_voltage`,
/// only choices with the same voltage are compared. The result is sorted
/// by key.
pub(crate) fn prune_choices(group: Vec<Choice>, per_voltage: bool) -> Vec<Choice> {
    let mut sorted = group;
    sorted.sort_by(|a, b| {
        a.time
            .total_cmp(&b.time)
            .then(a.energy.total_cmp(&b.energy))
            .then(a.key.cmp(&b.key))
    });
    let mut best: BTreeMap<usize, f64> = BTreeMap::new();
    let mut kept: Vec<Choice> = Vec::new();
    for c in sorted {
        let bucket = if per_voltage { c.key.1 } else { 0 };
        if best.get(&bucket).map_or(true, |&e| c.energy < e) {
            best.insert(bucket, c.energy);
            kept.push(c);
        }
    }
    kept.sort_by_key(|c| c.key);
    kept
}

/// Relative slack that keeps bound and deadline pruning safe against
/// rounding in the precomputed suffix sums.
const TIME_SLACK: f64 = 1e-12;
const ENERGY_SLACK: f64 = 1e-9;
/// Partial energies this close (relative) are treated as equal by the
/// dominance check. Reorderings of identical kernels produce sums that
/// differ only in the last bits; without this they never dominate each
/// other. The total error stays below n · MERGE_EPS relative.
const MERGE_EPS: f64 = 1e-13;

/// Index of the fastest choice in a group (ties: lower energy, then order).
pub(crate) fn fastest(group: &[Choice]) -> usize {
    (0..group.len())
        .min_by(|&a, &b| {
            let (ca, cb) = (&group[a], &group[b]);
            ca.time
                .total_cmp(&cb.time)
                .then(ca.energy.total_cmp(&cb.energy))
        })
        .expect("non-empty group")
}

/// Σ of per-group fastest times, folded in group order.
pub(crate) fn min_time(groups: &[Vec<Choice>]) -> f64 {
    let opts = ModelOptions::default();
    let mut t = Totals::default();
    for g in groups {
        g[fastest(g)].push_into(&mut t, &opts);
    }
    t.time
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    group: usize,
    dt: f64,
    saving: f64,
}

/// Linear relaxation of the groups at depth >= d: the energy saved, relative
/// to the all-fastest assignment, when `cap` extra seconds may be spent.
struct Relaxation {
    /// Per group: (time, energy) of its fastest hull point.
    group_base: Vec<(f64, f64)>,
    base_time: Vec<f64>,
    base_energy: Vec<f64>,
    /// Per depth: cumulative (dt, saving) of the hull segments of groups >= d,
    /// best saving rate first.
    cumulative: Vec<Vec<(f64, f64)>>,
    /// Segments of all groups in rate order (for the greedy incumbent).
    ordered: Vec<(Segment, usize)>,
}

impl Relaxation {
    fn new(groups: &[Vec<Choice>]) -> Self {
        let n = groups.len();
        let mut segments = Vec::new();
        let mut base_t = vec![0.0; n];
        let mut base_e = vec![0.0; n];
        for (g, choices) in groups.iter().enumerate() {
            let hull = lower_hull(choices);
            base_t[g] = choices[hull[0]].time;
            base_e[g] = choices[hull[0]].energy;
            for w in hull.windows(2) {
                let (a, b) = (&choices[w[0]], &choices[w[1]]);
                segments.push((
                    Segment {
                        group: g,
                        dt: b.time - a.time,
                        saving: a.energy - b.energy,
                    },
                    w[1],
                ));
            }
        }
        // Stable sort keeps hull order within a group on equal rates.
        segments.sort_by(|(a, _), (b, _)| {
            (b.saving / b.dt)
                .total_cmp(&(a.saving / a.dt))
                .then(a.group.cmp(&b.group))
        });

        let mut base_time = vec![0.0; n + 1];
        let mut base_energy = vec![0.0; n + 1];
        for g in (0..n).rev() {
            base_time[g] = base_time[g + 1] + base_t[g];
            base_energy[g] = base_energy[g + 1] + base_e[g];
        }
        let cumulative = (0..=n)
            .map(|d| {
                let (mut t, mut s) = (0.0, 0.0);
                segments
                    .iter()
                    .filter(|(seg, _)| seg.group >= d)
                    .map(|(seg, _)| {
                        t += seg.dt;
                        s += seg.saving;
                        (t, s)
                    })
                    .collect()
            })
            .collect();
        Relaxation {
            group_base: base_t.into_iter().zip(base_e).collect(),
            base_time,
            base_energy,
            cumulative,
            ordered: segments,
        }
    }

    /// Lower bound on the energy of groups >= d given `cap` seconds beyond
    /// their fastest total.
    fn bound(&self, d: usize, cap: f64) -> f64 {
        let cum = &self.cumulative[d];
        let cap = cap.max(0.0);
        let full = cum.partition_point(|&(t, _)| t <= cap);
        let (t0, s0) = if full == 0 { (0.0, 0.0) } else { cum[full - 1] };
        let saving = match cum.get(full) {
            Some(&(t1, s1)) if t1 > t0 => s0 + (s1 - s0) * ((cap - t0) / (t1 - t0)),
            _ => s0,
        };
        self.base_energy[d] - saving
    }

    /// Greedy rounding of the relaxation: take hull segments in rate order
    /// while they fit; a group whose next segment does not fit is frozen.
    fn greedy(&self, groups: &[Vec<Choice>], deadline: f64) -> Vec<usize> {
        let mut pick: Vec<usize> = groups.iter().map(|g| lower_hull(g)[0]).collect();
        let mut frozen = vec![false; groups.len()];
        let mut cap = deadline - self.base_time[0];
        for (seg, to) in &self.ordered {
            if frozen[seg.group] {
                continue;
            }
            if seg.dt <= cap {
                cap -= seg.dt;
                pick[seg.group] = *to;
            } else {
                frozen[seg.group] = true;
            }
        }
        pick
    }

    /// Lower bound on the total energy when group `g` is fixed to `c`;
    /// infinite when the remaining groups cannot fit in the time left.
    fn bound_fixing(&self, g: usize, c: &Choice, deadline: f64, time_limit: f64, cumulative: &[(f64, f64)]) -> f64 {
        let (bt, be) = self.group_base[g];
        let rest_time = self.base_time[0] - bt;
        if c.time + rest_time > time_limit {
            return f64::INFINITY;
        }
        let cap = (deadline - c.time - rest_time).max(0.0);
        let full = cumulative.partition_point(|&(t, _)| t <= cap);
        let (t0, s0) = if full == 0 { (0.0, 0.0) } else { cumulative[full - 1] };
        let saving = match cumulative.get(full) {
            Some(&(t1, s1)) if t1 > t0 => s0 + (s1 - s0) * ((cap - t0) / (t1 - t0)),
            _ => s0,
        };
        c.energy + (self.base_energy[0] - be) - saving
    }

    /// Cumulative (dt, saving) of every segment outside group `g`.
    fn cumulative_without(&self, g: usize) -> Vec<(f64, f64)> {
        let (mut t, mut s) = (0.0, 0.0);
        self.ordered
            .iter()
            .filter(|(seg, _)| seg.group != g)
            .map(|(seg, _)| {
                t += seg.dt;
                s += seg.saving;
                (t, s)
            })
            .collect()
    }
}

/// Improves a feasible pick by single-group changes and pairwise
/// exchanges until neither lowers the energy. Works on plain sums.
fn local_search(groups: &[Vec<Choice>], pick: &mut [usize], deadline: f64) {
    let mut time: f64 = pick.iter().enumerate().map(|(g, &c)| groups[g][c].time).sum();
    for _ in 0..100 {
        let mut improved = false;
        for g in 0..groups.len() {
            let cur = &groups[g][pick[g]];
            let best = (0..groups[g].len())
                .filter(|&c| time - cur.time + groups[g][c].time <= deadline)
                .min_by(|&a, &b| groups[g][a].energy.total_cmp(&groups[g][b].energy));
            if let Some(c) = best {
                if groups[g][c].energy < cur.energy {
                    time += groups[g][c].time - cur.time;
                    pick[g] = c;
                    improved = true;
                }
            }
        }
        // Pairwise: speed one group up to pay for slowing another down.
        let now: &[usize] = pick;
        let moves: Vec<(usize, usize, f64, f64)> = (0..groups.len())
            .flat_map(|g| {
                let cur = &groups[g][now[g]];
                groups[g]
                    .iter()
                    .enumerate()
                    .filter(move |&(c, _)| c != now[g])
                    .map(move |(c, x)| (g, c, x.time - cur.time, x.energy - cur.energy))
            })
            .collect();
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, a) in moves.iter().enumerate() {
            if a.2 >= 0.0 {
                continue;
            }
            for (j, b) in moves.iter().enumerate() {
                if a.0 == b.0 || time + a.2 + b.2 > deadline {
                    continue;
                }
                let gain = a.3 + b.3;
                if gain < 0.0 && best.map_or(true, |(_, _, g)| gain < g) {
                    best = Some((i, j, gain));
                }
            }
        }
        if let Some((i, j, _)) = best {
            for m in [moves[i], moves[j]] {
                pick[m.0] = m.1;
                time += m.2;
            }
            improved = true;
        }
        if !improved {
            break;
        }
    }
}

/// Indices of the lower convex hull of a group's (time, energy) points,
/// starting from the fastest point and walking towards lower energy.
fn lower_hull(choices: &[Choice]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..choices.len()).collect();
    order.sort_by(|&a, &b| {
        choices[a]
            .time
            .total_cmp(&choices[b].time)
            .then(choices[a].energy.total_cmp(&choices[b].energy))
    });
    let mut frontier: Vec<usize> = Vec::new();
    for i in order {
        if frontier
            .last()
            .map_or(true, |&l| choices[i].energy < choices[l].energy)
        {
            frontier.push(i);
        }
    }
    let mut hull: Vec<usize> = Vec::new();
    for i in frontier {
        while hull.len() >= 2 {
            let (a, b, c) = (
                &choices[hull[hull.len() - 2]],
                &choices[hull[hull.len() - 1]],
                &choices[i],
            );
            let cross = (b.time - a.time) * (c.energy - a.energy)
                - (b.energy - a.energy) * (c.time - a.time);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull
}

#[derive(Debug, Clone, Copy)]
struct Node {
    totals: Totals,
    parent: u32,
    choice: u32,
}

/// Points already kept at the current depth; answers "is (t, e) weakly
/// dominated by an earlier point", energies compared up to `MERGE_EPS`.
#[derive(Default)]
struct Staircase {
    // time bits → energy; energy strictly decreasing in time.
    steps: BTreeMap<u64, f64>,
}

impl Staircase {
    fn dominated(&self, t: f64, e: f64) -> bool {
        self.steps
            .range(..=t.to_bits())
            .next_back()
            .is_some_and(|(_, &best)| best <= e + MERGE_EPS * e.abs())
    }

    fn insert(&mut self, t: f64, e: f64) {
        let key = t.to_bits();
        let stale: Vec<u64> = self
            .steps
            .range(key..)
            .take_while(|(_, &v)| v >= e)
            .map(|(&k, _)| k)
            .collect();
        for k in stale {
            self.steps.remove(&k);
        }
        self.steps.insert(key, e);
    }
}

fn fold(groups: &[Vec<Choice>], pick: &[usize], opts: &ModelOptions) -> Totals {
    let mut t = Totals::default();
    for (g, &c) in pick.iter().enumerate() {
        groups[g][c].push_into(&mut t, opts);
    }
    t
}

/// Exact solve. Groups must be non-empty with choices sorted by key.
/// Returns the chosen index per group, or `None` if the deadline cannot be met.
///
/// A feasible incumbent from greedy rounding plus local search lets every
/// choice whose relaxation bound, with that choice forced, exceeds the
/// incumbent be dropped before the layered search.
pub(crate) fn solve_exact(groups: &[Vec<Choice>], deadline: f64, opts: &ModelOptions) -> Option<Vec<usize>> {
    let relax = Relaxation::new(groups);
    let time_limit = deadline * (1.0 + TIME_SLACK);

    let mut pick = relax.greedy(groups, deadline);
    let mut incumbent = f64::INFINITY;
    let t = fold(groups, &pick, opts);
    if t.time <= deadline {
        incumbent = t.energy;
        let mut better = pick.clone();
        local_search(groups, &mut better, deadline);
        let t = fold(groups, &better, opts);
        if t.time <= deadline && t.energy < incumbent {
            incumbent = t.energy;
            pick = better;
        }
    }
    if let Some(mut better) = dp_pick(groups, deadline, opts) {
        local_search(groups, &mut better, deadline);
        let t = fold(groups, &better, opts);
        if t.time <= deadline && t.energy < incumbent {
            incumbent = t.energy;
            pick = better;
        }
    }
    log::debug!(
        "mckp incumbent energy {incumbent}, relaxation bound {}",
        relax.bound(0, deadline - relax.base_time[0])
    );

    let mut keep: Vec<Vec<usize>> = groups.iter().map(|g| (0..g.len()).collect()).collect();
    let mut reduced: Vec<Vec<Choice>> = groups.to_vec();
    if incumbent.is_finite() {
        let limit = energy_limit(incumbent);
        // Each pass tightens the relaxation of the next.
        for _ in 0..8 {
            let relax = Relaxation::new(&reduced);
            let before: usize = keep.iter().map(Vec::len).sum();
            for (g, choices) in groups.iter().enumerate() {
                let cumulative = relax.cumulative_without(g);
                keep[g].retain(|&c| {
                    relax.bound_fixing(g, &choices[c], deadline, time_limit, &cumulative) <= limit
                });
            }
            reduced = keep
                .iter()
                .zip(groups)
                .map(|(k, g)| k.iter().map(|&c| g[c].clone()).collect())
                .collect();
            let after: usize = keep.iter().map(Vec::len).sum();
            log::debug!("mckp reduction: {after} of {} choices kept", groups.iter().map(Vec::len).sum::<usize>());
            if after == before {
                break;
            }
        }
    }
    if keep.iter().any(Vec::is_empty) {
        return incumbent.is_finite().then_some(pick);
    }

    // Without switch penalties the cost ignores kernel order, so identical
    // groups are searched as one run with non-decreasing choice indices.
    let order: Vec<usize> = if opts.has_switch_penalty() {
        (0..groups.len()).collect()
    } else {
        symmetry_order(&reduced)
    };
    let permuted: Vec<Vec<Choice>> = order.iter().map(|&g| reduced[g].clone()).collect();
    let same_as_prev: Vec<bool> = (0..order.len())
        .map(|d| d > 0 && identical(&reduced[order[d - 1]], &reduced[order[d]]))
        .collect();

    let found = search(&permuted, &same_as_prev, deadline, opts, incumbent).map(|p| {
        let mut picks = vec![0; groups.len()];
        for (d, &g) in order.iter().enumerate() {
            picks[g] = keep[g][p[d]];
        }
        picks
    });
    match found {
        // A reordered fold can sit a few ulps either side of the kernel-order one.
        Some(p) if fold(groups, &p, opts).time <= deadline => Some(p),
        _ => incumbent.is_finite().then_some(pick),
    }
}

fn identical(a: &[Choice], b: &[Choice]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.key == y.key
                && x.members.len() == y.members.len()
                && x.members.iter().zip(&y.members).all(|(m, n)| {
                    m.time.to_bits() == n.time.to_bits() && m.energy.to_bits() == n.energy.to_bits()
                })
        })
}

/// Group order that puts identical groups next to each other, each run at
/// the position of its first member.
fn symmetry_order(groups: &[Vec<Choice>]) -> Vec<usize> {
    let mut class = vec![usize::MAX; groups.len()];
    for g in 0..groups.len() {
        if class[g] != usize::MAX {
            continue;
        }
        class[g] = g;
        for h in g + 1..groups.len() {
            if class[h] == usize::MAX && identical(&groups[g], &groups[h]) {
                class[h] = g;
            }
        }
    }
    let mut order: Vec<usize> = (0..groups.len()).collect();
    order.sort_by_key(|&g| (class[g], g));
    order
}

/// Cells the incumbent DP may use, and its widest time grid.
const INCUMBENT_DP_CELLS: usize = 4_000_000;
const INCUMBENT_DP_WIDTH: usize = 1 << 14;

/// A feasible pick from the quantized DP on a grid sized to
/// `INCUMBENT_DP_CELLS`, if it finds one.
fn dp_pick(groups: &[Vec<Choice>], deadline: f64, opts: &ModelOptions) -> Option<Vec<usize>> {
    let states = if opts.has_switch_penalty() {
        groups.iter().flat_map(|g| g.iter().map(|c| c.key.1)).max().map_or(1, |v| v + 2)
    } else {
        1
    };
    let width = (INCUMBENT_DP_CELLS / (groups.len() * states).max(1)).clamp(16, INCUMBENT_DP_WIDTH);
    let quantum = deadline / width as f64;
    if !(quantum > 0.0) || !quantum.is_finite() {
        return None;
    }
    solve_quantized(groups, deadline, opts, quantum).ok().flatten()
}

fn energy_limit(incumbent: f64) -> f64 {
    incumbent + ENERGY_SLACK * incumbent.abs()
}

/// Layered dominance search over `groups`, pruning partial assignments
/// whose bound exceeds `incumbent`. Where `same_as_prev[d]` holds, group d
/// may not pick a lower index than group d - 1.
fn search(
    groups: &[Vec<Choice>],
    same_as_prev: &[bool],
    deadline: f64,
    opts: &ModelOptions,
    incumbent: f64,
) -> Option<Vec<usize>> {
    let n = groups.len();
    let relax = Relaxation::new(groups);
    let time_limit = deadline * (1.0 + TIME_SLACK);

    let voltages = if opts.has_switch_penalty() {
        groups
            .iter()
            .flat_map(|g| g.iter().map(|c| c.key.1))
            .max()
            .map_or(1, |v| v + 2)
    } else {
        1
    };
    let widest = groups.iter().map(Vec::len).max().unwrap_or(1);
    // Nodes compete only with nodes that have the same future: same last
    // voltage under switch penalties, same last choice inside a run.
    let bucket_of = |d: usize, node: &Node| {
        let v = if voltages == 1 {
            0
        } else {
            node.totals.last_voltage.map_or(0, |v| v + 1)
        };
        let run = if same_as_prev.get(d + 1).copied().unwrap_or(false) {
            node.choice as usize
        } else {
            0
        };
        v * widest + run
    };
    let buckets = voltages * widest;

    let mut layers: Vec<Vec<Node>> = Vec::with_capacity(n + 1);
    layers.push(vec![Node {
        totals: Totals::default(),
        parent: 0,
        choice: 0,
    }]);
    for d in 0..n {
        let rest_time = relax.base_time[d + 1];
        let mut stairs: Vec<Staircase> = (0..buckets).map(|_| Staircase::default()).collect();
        let mut next = Vec::new();
        for (pi, parent) in layers[d].iter().enumerate() {
            let first = if same_as_prev[d] { parent.choice as usize } else { 0 };
            for (ci, choice) in groups[d].iter().enumerate().skip(first) {
                let mut t = parent.totals;
                choice.push_into(&mut t, opts);
                if t.time + rest_time > time_limit {
                    continue;
                }
                let bound = t.energy + relax.bound(d + 1, deadline - t.time - rest_time);
                if bound > energy_limit(incumbent) {
                    continue;
                }
                let node = Node {
                    totals: t,
                    parent: pi as u32,
                    choice: ci as u32,
                };
                let stair = &mut stairs[bucket_of(d, &node)];
                if stair.dominated(t.time, t.energy) {
                    continue;
                }
                stair.insert(t.time, t.energy);
                next.push(node);
            }
        }
        if next.is_empty() {
            return None;
        }
        let next = drop_beaten(next, buckets, |node| bucket_of(d, node));
        log::trace!("mckp depth {d}: {} partial assignments", next.len());
        layers.push(next);
    }

    let last = &layers[n];
    let best = (0..last.len())
        .filter(|&i| last[i].totals.time <= deadline)
        .min_by(|&a, &b| last[a].totals.energy.total_cmp(&last[b].totals.energy))?;
    Some(backtrack(&layers, best))
}

/// Removes nodes that a later node of the same bucket beats: no slower
/// and lower in energy by more than `MERGE_EPS`. Order is kept.
fn drop_beaten(nodes: Vec<Node>, buckets: usize, bucket_of: impl Fn(&Node) -> usize) -> Vec<Node> {
    let mut order: Vec<usize> = (0..nodes.len()).collect();
    order.sort_by(|&a, &b| {
        let (ta, tb) = (&nodes[a].totals, &nodes[b].totals);
        bucket_of(&nodes[a])
            .cmp(&bucket_of(&nodes[b]))
            .then(ta.time.total_cmp(&tb.time))
            .then(ta.energy.total_cmp(&tb.energy))
    });
    let mut keep = vec![true; nodes.len()];
    let mut best = vec![f64::INFINITY; buckets];
    let mut i = 0;
    while i < order.len() {
        // Nodes with equal time see each other's energies.
        let (b, time) = (bucket_of(&nodes[order[i]]), nodes[order[i]].totals.time);
        let mut j = i;
        while j < order.len() && bucket_of(&nodes[order[j]]) == b && nodes[order[j]].totals.time == time {
            best[b] = best[b].min(nodes[order[j]].totals.energy);
            j += 1;
        }
        for &k in &order[i..j] {
            let e = nodes[k].totals.energy;
            if best[b] < e - MERGE_EPS * e.abs() {
                keep[k] = false;
            }
        }
        i = j;
    }
    nodes.into_iter().zip(keep).filter_map(|(n, k)| k.then_some(n)).collect()
}

fn backtrack(layers: &[Vec<Node>], mut idx: usize) -> Vec<usize> {
    let n = layers.len() - 1;
    let mut picks = vec![0; n];
    for d in (1..=n).rev() {
        let node = layers[d][idx];
        picks[d - 1] = node.choice as usize;
        idx = node.parent as usize;
    }
    picks
}

/// Upper bound on the DP table size (cells across all groups).
const DP_CELL_LIMIT: usize = 400_000_000;

/// Dynamic program over a time grid of `quantum` seconds. Choice times are
/// rounded up to whole quanta and the deadline down, so any schedule it
/// returns meets the deadline; optimality holds within the quantization.
pub(crate) fn solve_quantized(
    groups: &[Vec<Choice>],
    deadline: f64,
    opts: &ModelOptions,
    quantum: f64,
) -> Result<Option<Vec<usize>>, String> {
    if !(quantum > 0.0) {
        return Err("DP quantum must be > 0".into());
    }
    let ceil_q = |t: f64| {
        let mut w = (t / quantum).ceil() as usize;
        if (w as f64) * quantum < t {
            w += 1;
        }
        w
    };
    let mut cap = (deadline / quantum).floor() as usize;
    while cap > 0 && (cap as f64) * quantum > deadline {
        cap -= 1;
    }
    let width = cap + 1;
    let penalties = opts.has_switch_penalty();
    let states = if penalties {
        groups
            .iter()
            .flat_map(|g| g.iter().map(|c| c.key.1))
            .max()
            .map_or(1, |v| v + 2)
    } else {
        1
    };
    if groups.len().saturating_mul(states).saturating_mul(width) > DP_CELL_LIMIT {
        return Err(format!(
            "DP table too large ({} groups × {states} states × {width} cells); use a coarser quantum",
            groups.len()
        ));
    }

    const NONE: u32 = u32::MAX;
    let mut dp = vec![f64::INFINITY; states * width];
    dp[0] = 0.0;
    // back[g][s * width + w] = (previous state, choice index)
    let mut back: Vec<Vec<(u32, u32)>> = Vec::with_capacity(groups.len());
    for g in groups {
        let mut next = vec![f64::INFINITY; states * width];
        let mut from = vec![(NONE, NONE); states * width];
        for s in 0..states {
            for w in 0..width {
                let e0 = dp[s * width + w];
                if e0.is_infinite() {
                    continue;
                }
                for (ci, c) in g.iter().enumerate() {
                    let v = c.key.1;
                    let (mut wt, mut en) = (ceil_q(c.time), c.energy);
                    if penalties && s != 0 && s - 1 != v {
                        let f = c.members[0].frequency;
                        wt += ceil_q(opts.vf_switch_cycles as f64 / f);
                        en += opts.vf_switch_energy;
                    }
                    let w2 = w + wt;
                    if w2 >= width {
                        continue;
                    }
                    let s2 = if penalties { v + 1 } else { 0 };
                    let cell = s2 * width + w2;
                    let cand = e0 + en;
                    if cand < next[cell] {
                        next[cell] = cand;
                        from[cell] = (s as u32, ci as u32);
                    }
                }
            }
        }
        dp = next;
        back.push(from);
    }

    let Some(best) = (0..states * width)
        .filter(|&i| dp[i].is_finite())
        .min_by(|&a, &b| dp[a].total_cmp(&dp[b]).then((a % width).cmp(&(b % width))))
    else {
        return Ok(None);
    };
    let mut picks = vec![0; groups.len()];
    let (mut s, mut w) = (best / width, best % width);
    for g in (0..groups.len()).rev() {
        let (ps, ci) = back[g][s * width + w];
        let c = &groups[g][ci as usize];
        let mut wt = ceil_q(c.time);
        if penalties && ps != 0 && ps as usize - 1 != c.key.1 {
            wt += ceil_q(opts.vf_switch_cycles as f64 / c.members[0].frequency);
        }
        picks[g] = ci as usize;
        s = ps as usize;
        w -= wt;
    }
    Ok(Some(picks))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tiling::TilingMode;

    fn cfg(pe: usize, v: usize, time: f64, energy: f64) -> Configuration {
        Configuration {
            pe_index: pe,
            pe: format!("pe{pe}"),
            voltage_index: v,
            voltage: 0.5 + v as f64 * 0.1,
            frequency: 1e8 * (v + 1) as f64,
            mode: TilingMode::Untiled,
            n_tiles: 1,
            cycles: 1,
            time,
            power: energy / time,
            energy,
        }
    }

    fn choice(pe: usize, v: usize, t: f64, e: f64) -> Choice {
        Choice::new((pe, v), vec![cfg(pe, v, t, e)])
    }

    fn brute(groups: &[Vec<Choice>], deadline: f64, opts: &ModelOptions) -> Option<(f64, Vec<usize>)> {
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut idx = vec![0usize; groups.len()];
        loop {
            let mut t = Totals::default();
            for (g, &c) in idx.iter().enumerate() {
                groups[g][c].push_into(&mut t, opts);
            }
            if t.time <= deadline && best.as_ref().map_or(true, |(e, _)| t.energy < *e) {
                best = Some((t.energy, idx.clone()));
            }
            let mut g = groups.len();
            loop {
                if g == 0 {
                    return best;
                }
                g -= 1;
                idx[g] += 1;
                if idx[g] < groups[g].len() {
                    break;
                }
                idx[g] = 0;
            }
        }
    }

    #[test]
    fn hull_skips_non_convex_points() {
        let g = vec![
            choice(0, 0, 1.0, 10.0),
            choice(0, 1, 2.0, 9.5),
            choice(0, 2, 3.0, 4.0),
            choice(0, 3, 4.0, 5.0),
        ];
        assert_eq!(lower_hull(&g), vec![0, 2]);
    }

    #[test]
    fn tiny_instance_matches_enumeration() {
        let groups = vec![
            vec![choice(0, 0, 3.0, 1.0), choice(0, 1, 1.0, 4.0), choice(1, 0, 2.0, 2.0)],
            vec![choice(0, 0, 4.0, 1.0), choice(0, 1, 2.0, 3.0)],
            vec![choice(0, 0, 2.0, 2.0), choice(1, 1, 1.0, 2.5)],
        ];
        let opts = ModelOptions::default();
        for deadline in [4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 20.0] {
            let got = solve_exact(&groups, deadline, &opts);
            let want = brute(&groups, deadline, &opts).map(|(_, p)| p);
            assert_eq!(got, want, "deadline {deadline}");
        }
        assert_eq!(solve_exact(&groups, 3.9, &opts), None);
    }

    #[test]
    fn switch_penalties_match_enumeration() {
        let groups = vec![
            vec![choice(0, 0, 3.0, 1.0), choice(0, 1, 1.5, 2.0)],
            vec![choice(0, 0, 3.0, 1.0), choice(0, 1, 1.5, 2.0)],
            vec![choice(0, 0, 3.0, 1.0), choice(0, 1, 1.5, 2.2)],
        ];
        let opts = ModelOptions {
            tile_overhead_cycles: 0,
            vf_switch_cycles: 20_000_000,
            vf_switch_energy: 0.4,
        };
        for deadline in [4.5, 5.0, 6.0, 7.3, 8.0, 9.5, 12.0] {
            let got = solve_exact(&groups, deadline, &opts);
            let want = brute(&groups, deadline, &opts).map(|(_, p)| p);
            assert_eq!(got, want, "deadline {deadline}");
        }
    }

    #[test]
    fn identical_groups_match_enumeration() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let opts = ModelOptions::default();
        for _ in 0..200 {
            let class = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<Choice> {
                (0..rng.gen_range(2..=4))
                    .map(|v| choice(0, v, rng.gen_range(0.1..3.0), rng.gen_range(0.1..3.0)))
                    .collect()
            };
            let (a, b) = (class(&mut rng), class(&mut rng));
            let groups = vec![a.clone(), b.clone(), a.clone(), b, a];
            let lo: f64 = groups.iter().map(|g| g.iter().map(|c| c.time).fold(f64::MAX, f64::min)).sum();
            let deadline = lo * rng.gen_range(1.0..2.0);
            let got = solve_exact(&groups, deadline, &opts);
            let want = brute(&groups, deadline, &opts);
            match (got, want) {
                (Some(p), Some((e, _))) => {
                    let t = fold(&groups, &p, &opts);
                    assert!(t.time <= deadline);
                    assert!((t.energy - e).abs() <= 1e-12 * e);
                    // Identical groups carry their choices in sorted order.
                    assert!(p[0] <= p[2] && p[2] <= p[4] && p[1] <= p[3], "{p:?}");
                }
                (None, None) => {}
                (g, w) => panic!("{g:?} vs {w:?}"),
            }
        }
    }

    #[test]
    fn quantized_dp_is_feasible_and_near_optimal() {
        let groups = vec![
            vec![choice(0, 0, 3.0e-3, 1.0), choice(0, 1, 1.0e-3, 4.0)],
            vec![choice(0, 0, 4.0e-3, 1.0), choice(0, 1, 2.0e-3, 3.0)],
        ];
        let opts = ModelOptions::default();
        let picks = solve_quantized(&groups, 5.5e-3, &opts, 1e-6).unwrap().unwrap();
        assert_eq!(picks, vec![0, 1]);
        let tight = solve_quantized(&groups, 3.5e-3, &opts, 1e-6).unwrap().unwrap();
        assert_eq!(tight, vec![1, 1]);
        assert_eq!(solve_quantized(&groups, 2.5e-3, &opts, 1e-6).unwrap(), None);
        assert!(solve_quantized(&groups, 1.0, &opts, 1e-12).is_err());
    }
}
