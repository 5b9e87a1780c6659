//! Error/delay trade-off table and the wordline LUT solver.
//!
//! Choosing one wordline count per bit-pair under a total error budget is a
//! multiple-choice knapsack: classes are sub-operations, items are candidate
//! wordline counts weighted by expected error, and the objective is total
//! delay. [`Mckp::solve`] is an exact depth-first branch and bound bounded by
//! the LP relaxation; [`Mckp::solve_exhaustive`] enumerates the Pareto
//! frontier of partial solutions and serves as the reference.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bitplane::{plane_magnitude, PLANES};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::errormodel::expected_read_error;
use crate::profiler::LayerProfile;

const PAIRS: usize = PLANES * PLANES;

/// Largest Pareto frontier the exhaustive solver will hold.
pub const EXHAUSTIVE_LIMIT: usize = 10_000_000;

/// Search nodes [`Mckp::solve`] visits before switching to the frontier
/// enumeration.
const BRANCH_LIMIT: usize = 2_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffEntry {
    pub error: f64,
    pub delay: f64,
}

/// `entries[x][w][n_wl - 1]`, flattened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffTable {
    n_max: usize,
    entries: Vec<TradeoffEntry>,
}

impl TradeoffTable {
    pub fn new(n_max: usize, entries: Vec<TradeoffEntry>) -> Result<Self> {
        if n_max == 0 || entries.len() != PAIRS * n_max {
            return Err(Error::Shape(format!(
                "trade-off table needs {} entries for n_max {n_max}, got {}",
                PAIRS * n_max,
                entries.len()
            )));
        }
        if let Some(e) = entries.iter().find(|e| {
            !(e.error.is_finite() && e.delay.is_finite() && e.error >= 0.0 && e.delay >= 0.0)
        }) {
            return Err(Error::InvalidArgument(format!(
                "non-finite or negative entry {e:?}"
            )));
        }
        Ok(Self { n_max, entries })
    }

    pub fn from_fn(
        n_max: usize,
        mut f: impl FnMut(usize, usize, usize) -> TradeoffEntry,
    ) -> Result<Self> {
        let mut entries = Vec::with_capacity(PAIRS * n_max);
        for x in 0..PLANES {
            for w in 0..PLANES {
                for n in 1..=n_max {
                    entries.push(f(x, w, n));
                }
            }
        }
        Self::new(n_max, entries)
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn get(&self, x: usize, w: usize, n_wl: usize) -> TradeoffEntry {
        self.entries[(x * PLANES + w) * self.n_max + n_wl - 1]
    }

    /// Sum of per-pair minimum errors: the smallest feasible threshold.
    pub fn min_error(&self) -> f64 {
        self.entries
            .chunks(self.n_max)
            .map(|c| c.iter().map(|e| e.error).fold(f64::INFINITY, f64::min))
            .sum()
    }

    /// Error and delay of a full assignment.
    pub fn evaluate(&self, choice: &[[usize; PLANES]; PLANES]) -> TradeoffEntry {
        let mut error = 0.0;
        let mut delay = 0.0;
        for x in 0..PLANES {
            for w in 0..PLANES {
                let e = self.get(x, w, choice[x][w]);
                error += e.error;
                delay += e.delay;
            }
        }
        TradeoffEntry { error, delay }
    }

    /// CSV with columns `x_bit,w_bit,n_wl,expected_error,delay`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x_bit,w_bit,n_wl,expected_error,delay\n");
        for x in 0..PLANES {
            for w in 0..PLANES {
                for n in 1..=self.n_max {
                    let e = self.get(x, w, n);
                    let _ = writeln!(s, "{x},{w},{n},{},{}", e.error, e.delay);
                }
            }
        }
        s
    }
}

/// Trade-off table for one profiled layer.
///
/// Errors are `|2^x 2^w| * reads * E(eps | x, w)` divided by `quant_scale`,
/// so thresholds are in output-LSB units. Delays are expected ADC reads per
/// output column.
pub fn build_tradeoff_table(
    profile: &LayerProfile,
    device: &DeviceParams,
    quant_scale: f64,
) -> Result<TradeoffTable> {
    if !(quant_scale > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quant_scale must be positive, got {quant_scale}"
        )));
    }
    let n_max = device.max_wordlines;
    let mut entries = Vec::with_capacity(PAIRS * n_max);
    for x in 0..PLANES {
        for w in 0..PLANES {
            let mag = (plane_magnitude(x, false) * plane_magnitude(w, true)).unsigned_abs() as f64;
            for n in 1..=n_max {
                let pmf = profile.pmf_of(x, w, n)?;
                let reads = profile.reads_per_column(x, w, n)?;
                let per_read = if reads == 0.0 {
                    0.0
                } else {
                    expected_read_error(pmf, device.sigma, device.adc_bits)?
                };
                entries.push(TradeoffEntry {
                    error: mag * reads * per_read / quant_scale,
                    delay: reads,
                });
            }
        }
    }
    TradeoffTable::new(n_max, entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordlineLut {
    pub choice: [[usize; PLANES]; PLANES],
    pub group_factor: usize,
    pub n_max: usize,
    pub threshold_used: f64,
    pub achieved_error: f64,
    pub achieved_delay: f64,
}

impl WordlineLut {
    /// Every sub-operation at the same wordline count.
    pub fn uniform(n_wl: usize, n_max: usize) -> Self {
        Self {
            choice: [[n_wl; PLANES]; PLANES],
            group_factor: 1,
            n_max,
            threshold_used: f64::INFINITY,
            achieved_error: f64::NAN,
            achieved_delay: f64::NAN,
        }
    }

    pub fn get(&self, x: usize, w: usize) -> usize {
        self.choice[x][w]
    }

    pub fn field_bits(&self) -> u32 {
        usize::BITS - (self.n_max.max(2) - 1).leading_zeros()
    }

    /// Text table, one `x_bit,w_bit,n_wl` line per sub-operation.
    pub fn to_text(&self) -> String {
        let mut s = String::from("x_bit,w_bit,n_wl\n");
        for x in 0..PLANES {
            for w in 0..PLANES {
                let _ = writeln!(s, "{x},{w},{}", self.choice[x][w]);
            }
        }
        s
    }

    pub fn from_text(text: &str, n_max: usize) -> Result<Self> {
        let mut lut = Self::uniform(1, n_max);
        let mut seen = [[false; PLANES]; PLANES];
        for line in text.lines().skip(1).filter(|l| !l.trim().is_empty()) {
            let f: Vec<usize> = line
                .split(',')
                .map(|t| t.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("bad LUT line {line:?}: {e}")))?;
            match f.as_slice() {
                &[x, w, n] if x < PLANES && w < PLANES && (1..=n_max).contains(&n) => {
                    lut.choice[x][w] = n;
                    seen[x][w] = true;
                }
                _ => return Err(Error::Format(format!("bad LUT line {line:?}"))),
            }
        }
        if seen.iter().flatten().any(|s| !s) {
            return Err(Error::Format(
                "LUT text does not cover all 64 sub-operations".into(),
            ));
        }
        Ok(lut)
    }

    /// Hardware register image: 64 fields of `field_bits` bits holding
    /// `n_wl - 1`, packed LSB-first in `x * 8 + w` order.
    pub fn to_packed(&self) -> Vec<u8> {
        let bits = self.field_bits() as usize;
        let mut out = vec![0u8; (PAIRS * bits).div_ceil(8)];
        for (i, n) in self.choice.iter().flatten().enumerate() {
            let v = n - 1;
            for b in 0..bits {
                if (v >> b) & 1 == 1 {
                    let pos = i * bits + b;
                    out[pos / 8] |= 1 << (pos % 8);
                }
            }
        }
        out
    }

    pub fn from_packed(bytes: &[u8], n_max: usize) -> Result<Self> {
        let mut lut = Self::uniform(1, n_max);
        let bits = lut.field_bits() as usize;
        if bytes.len() != (PAIRS * bits).div_ceil(8) {
            return Err(Error::Format(format!(
                "packed LUT must be {} bytes",
                (PAIRS * bits).div_ceil(8)
            )));
        }
        for i in 0..PAIRS {
            let mut v = 0usize;
            for b in 0..bits {
                let pos = i * bits + b;
                v |= (((bytes[pos / 8] >> (pos % 8)) & 1) as usize) << b;
            }
            if v + 1 > n_max {
                return Err(Error::Format(format!(
                    "field {i} encodes {} > n_max {n_max}",
                    v + 1
                )));
            }
            lut.choice[i / PLANES][i % PLANES] = v + 1;
        }
        Ok(lut)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    #[default]
    Exact,
    Greedy,
}

/// Grouping of bit-pairs into LUT classes.
///
/// `group_factor` 4 shares one entry between the 2x2 block
/// `{2i, 2i+1} x {2j, 2j+1}`.
pub fn pair_groups(group_factor: usize) -> Result<Vec<Vec<(usize, usize)>>> {
    match group_factor {
        1 => Ok((0..PLANES)
            .flat_map(|x| (0..PLANES).map(move |w| vec![(x, w)]))
            .collect()),
        4 => Ok((0..PLANES / 2)
            .flat_map(|gx| {
                (0..PLANES / 2).map(move |gw| {
                    vec![
                        (2 * gx, 2 * gw),
                        (2 * gx, 2 * gw + 1),
                        (2 * gx + 1, 2 * gw),
                        (2 * gx + 1, 2 * gw + 1),
                    ]
                })
            })
            .collect()),
        g => Err(Error::InvalidArgument(format!(
            "group_factor must be 1 or 4, got {g}"
        ))),
    }
}

fn table_to_mckp(
    table: &TradeoffTable,
    group_factor: usize,
) -> Result<(Mckp, Vec<Vec<(usize, usize)>>)> {
    let groups = pair_groups(group_factor)?;
    let classes = groups
        .iter()
        .map(|members| {
            (1..=table.n_max())
                .map(|n| {
                    let (mut error, mut delay) = (0.0, 0.0);
                    for &(x, w) in members {
                        let e = table.get(x, w, n);
                        error += e.error;
                        delay += e.delay;
                    }
                    Item {
                        error,
                        delay,
                        label: n,
                    }
                })
                .collect()
        })
        .collect();
    Ok((Mckp::new(classes)?, groups))
}

fn lut_from_solution(
    table: &TradeoffTable,
    groups: &[Vec<(usize, usize)>],
    sol: &Solution,
    threshold: f64,
    group_factor: usize,
) -> WordlineLut {
    let mut choice = [[1usize; PLANES]; PLANES];
    for (members, &n) in groups.iter().zip(&sol.labels) {
        for &(x, w) in members {
            choice[x][w] = n;
        }
    }
    let achieved = table.evaluate(&choice);
    WordlineLut {
        choice,
        group_factor,
        n_max: table.n_max(),
        threshold_used: threshold,
        achieved_error: achieved.error,
        achieved_delay: achieved.delay,
    }
}

/// Minimum-delay LUT whose total expected error stays within `threshold`.
pub fn optimize_lut(
    table: &TradeoffTable,
    threshold: f64,
    group_factor: usize,
) -> Result<WordlineLut> {
    optimize_lut_with(table, threshold, group_factor, SolverKind::Exact)
}

pub fn optimize_lut_with(
    table: &TradeoffTable,
    threshold: f64,
    group_factor: usize,
    solver: SolverKind,
) -> Result<WordlineLut> {
    let (problem, groups) = table_to_mckp(table, group_factor)?;
    let sol = match solver {
        SolverKind::Exact => problem.solve(threshold)?,
        SolverKind::Greedy => problem.solve_greedy(threshold)?,
    };
    Ok(lut_from_solution(
        table,
        &groups,
        &sol,
        threshold,
        group_factor,
    ))
}

/// Exhaustive reference for [`optimize_lut`] with one class per bit-pair.
pub fn brute_force_lut(table: &TradeoffTable, threshold: f64) -> Result<WordlineLut> {
    let (problem, groups) = table_to_mckp(table, 1)?;
    let sol = problem.solve_exhaustive(threshold)?;
    Ok(lut_from_solution(table, &groups, &sol, threshold, 1))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Item {
    pub error: f64,
    pub delay: f64,
    /// Caller's identifier, e.g. the wordline count. Smaller wins ties.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    /// Chosen label per class.
    pub labels: Vec<usize>,
    pub error: f64,
    pub delay: f64,
}

/// Multiple-choice knapsack: pick one item per class, keep total error
/// within a budget, minimize total delay.
///
/// Ties on delay go to lower total error, then to the lexicographically
/// smaller label vector.
#[derive(Debug, Clone)]
pub struct Mckp {
    classes: Vec<Vec<Item>>,
}

fn tol(x: f64) -> f64 {
    1e-9 * x.abs().max(1.0)
}

/// `Less` if `a` is the preferred solution.
fn compare(
    a: (f64, f64, &[usize]),
    b: (f64, f64, &[usize]),
    delay_tol: f64,
    error_tol: f64,
) -> Ordering {
    if a.0 < b.0 - delay_tol {
        return Ordering::Less;
    }
    if a.0 > b.0 + delay_tol {
        return Ordering::Greater;
    }
    if a.1 < b.1 - error_tol {
        return Ordering::Less;
    }
    if a.1 > b.1 + error_tol {
        return Ordering::Greater;
    }
    a.2.cmp(b.2)
}

/// Non-dominated items, error strictly increasing and delay strictly
/// decreasing; among exact duplicates the smallest label survives.
fn efficient_items(items: &[Item]) -> Vec<Item> {
    let mut sorted = items.to_vec();
    sorted.sort_by(|a, b| {
        a.error
            .total_cmp(&b.error)
            .then(a.delay.total_cmp(&b.delay))
            .then(a.label.cmp(&b.label))
    });
    let mut out: Vec<Item> = Vec::with_capacity(sorted.len());
    for it in sorted {
        if out.last().is_none_or(|last| it.delay < last.delay) {
            out.push(it);
        }
    }
    out
}

/// One step of a class's lower convex hull in (error, delay).
#[derive(Debug, Clone, Copy)]
struct Segment {
    class: usize,
    d_error: f64,
    d_delay: f64,
}

impl Mckp {
    pub fn new(classes: Vec<Vec<Item>>) -> Result<Self> {
        if classes.is_empty() || classes.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidArgument(
                "every class needs at least one item".into(),
            ));
        }
        if classes
            .iter()
            .flatten()
            .any(|i| !(i.error.is_finite() && i.delay.is_finite()))
        {
            return Err(Error::InvalidArgument("items must be finite".into()));
        }
        Ok(Self { classes })
    }

    pub fn classes(&self) -> &[Vec<Item>] {
        &self.classes
    }

    pub fn min_error(&self) -> f64 {
        self.classes
            .iter()
            .map(|c| c.iter().map(|i| i.error).fold(f64::INFINITY, f64::min))
            .sum()
    }

    fn check_feasible(&self, threshold: f64) -> Result<()> {
        let min_error = self.min_error();
        if !(threshold.is_finite() || threshold == f64::INFINITY)
            || min_error > threshold + tol(threshold)
        {
            return Err(Error::Infeasible {
                threshold,
                min_error,
            });
        }
        Ok(())
    }

    fn finish(&self, labels: Vec<usize>) -> Solution {
        let (mut error, mut delay) = (0.0, 0.0);
        for (class, &l) in self.classes.iter().zip(&labels) {
            let it = class
                .iter()
                .find(|i| i.label == l)
                .expect("label from class");
            error += it.error;
            delay += it.delay;
        }
        Solution {
            labels,
            error,
            delay,
        }
    }

    /// Exact optimum. Branch and bound first; instances whose search tree
    /// outgrows a node budget go to [`Mckp::solve_exhaustive`], and back to an
    /// unbounded search if the frontier is too large as well.
    pub fn solve(&self, threshold: f64) -> Result<Solution> {
        if let Some(sol) = self.branch_and_bound(threshold, Some(BRANCH_LIMIT))? {
            return Ok(sol);
        }
        match self.solve_exhaustive(threshold) {
            Err(Error::TooLarge { .. }) => Ok(self
                .branch_and_bound(threshold, None)?
                .expect("unbounded search finishes")),
            r => r,
        }
    }

    fn branch_and_bound(
        &self,
        threshold: f64,
        node_limit: Option<usize>,
    ) -> Result<Option<Solution>> {
        self.check_feasible(threshold)?;
        let eff: Vec<Vec<Item>> = self.classes.iter().map(|c| efficient_items(c)).collect();
        let m = eff.len();

        // hull segments, sorted by delay saved per unit error
        let mut segments = Vec::new();
        for (ci, items) in eff.iter().enumerate() {
            let mut hull: Vec<usize> = vec![0];
            for j in 1..items.len() {
                while hull.len() >= 2 {
                    let a = &items[hull[hull.len() - 2]];
                    let b = &items[hull[hull.len() - 1]];
                    let c = &items[j];
                    // drop b if it lies on or above segment a-c
                    let lhs = (b.delay - a.delay) * (c.error - a.error);
                    let rhs = (c.delay - a.delay) * (b.error - a.error);
                    if lhs >= rhs {
                        hull.pop();
                    } else {
                        break;
                    }
                }
                hull.push(j);
            }
            for pair in hull.windows(2) {
                let (a, b) = (&items[pair[0]], &items[pair[1]]);
                segments.push(Segment {
                    class: ci,
                    d_error: b.error - a.error,
                    d_delay: a.delay - b.delay,
                });
            }
        }
        segments.sort_by(|a, b| {
            (b.d_delay / b.d_error)
                .total_cmp(&(a.d_delay / a.d_error))
                .then(a.class.cmp(&b.class))
        });

        // suffix sums of the min-error corner
        let mut base_error = vec![0.0; m + 1];
        let mut base_delay = vec![0.0; m + 1];
        for i in (0..m).rev() {
            base_error[i] = base_error[i + 1] + eff[i][0].error;
            base_delay[i] = base_delay[i + 1] + eff[i][0].delay;
        }

        let budget = threshold;
        let budget_tol = tol(threshold);

        // incumbent from the greedy fallback, always feasible
        let best = self.solve_greedy(threshold)?;

        let mut search = Search {
            eff: &eff,
            segments: &segments,
            base_error: &base_error,
            base_delay: &base_delay,
            budget,
            budget_tol,
            best_delay: best.delay,
            best_error: best.error,
            best_labels: best.labels.clone(),
            path: Vec::with_capacity(m),
            nodes_left: node_limit.unwrap_or(usize::MAX),
        };
        if !search.dfs(0, 0.0, 0.0) {
            return Ok(None);
        }
        Ok(Some(self.finish(search.best_labels)))
    }

    /// Greedy by best marginal delay saving per unit error. Always feasible,
    /// not optimal; offered for experimentation.
    pub fn solve_greedy(&self, threshold: f64) -> Result<Solution> {
        self.check_feasible(threshold)?;
        let eff: Vec<Vec<Item>> = self.classes.iter().map(|c| efficient_items(c)).collect();
        let mut segments = Vec::new();
        for (ci, items) in eff.iter().enumerate() {
            for pair in items.windows(2) {
                segments.push(Segment {
                    class: ci,
                    d_error: pair[1].error - pair[0].error,
                    d_delay: pair[0].delay - pair[1].delay,
                });
            }
        }
        // best marginal first, one step at a time per class
        let mut pos = vec![0usize; eff.len()];
        let mut used: f64 = eff.iter().map(|c| c[0].error).sum();
        loop {
            let mut pick: Option<(usize, f64)> = None;
            for (ci, items) in eff.iter().enumerate() {
                if pos[ci] + 1 < items.len() {
                    let de = items[pos[ci] + 1].error - items[pos[ci]].error;
                    let dd = items[pos[ci]].delay - items[pos[ci] + 1].delay;
                    if used + de <= threshold + tol(threshold) {
                        let ratio = dd / de;
                        if pick.is_none_or(|(_, r)| ratio > r) {
                            pick = Some((ci, ratio));
                        }
                    }
                }
            }
            match pick {
                Some((ci, _)) => {
                    used += eff[ci][pos[ci] + 1].error - eff[ci][pos[ci]].error;
                    pos[ci] += 1;
                }
                None => break,
            }
        }
        Ok(self.finish(pos.iter().zip(&eff).map(|(&p, c)| c[p].label).collect()))
    }

    /// Exact optimum by enumerating the Pareto frontier of partial
    /// solutions class by class. Fails with [`Error::TooLarge`] if a level
    /// holds more than [`EXHAUSTIVE_LIMIT`] candidates.
    pub fn solve_exhaustive(&self, threshold: f64) -> Result<Solution> {
        self.solve_exhaustive_with_limit(threshold, EXHAUSTIVE_LIMIT)
    }

    pub fn solve_exhaustive_with_limit(&self, threshold: f64, limit: usize) -> Result<Solution> {
        self.check_feasible(threshold)?;
        let slack = tol(threshold);
        let m = self.classes.len();
        let mut min_rest = vec![0.0; m + 1];
        for i in (0..m).rev() {
            min_rest[i] = min_rest[i + 1]
                + self.classes[i]
                    .iter()
                    .map(|it| it.error)
                    .fold(f64::INFINITY, f64::min);
        }

        // frontier entries: (error, delay, lexicographic rank of the labels)
        let mut frontier: Vec<(f64, f64, u32)> = vec![(0.0, 0.0, 0)];
        // per level: (parent index, label) for reconstruction
        let mut back: Vec<Vec<(u32, usize)>> = Vec::with_capacity(m);
        for (ci, class) in self.classes.iter().enumerate() {
            let mut next: Vec<(f64, f64, u32, usize, u32)> = Vec::new();
            for (pi, &(e, d, rank)) in frontier.iter().enumerate() {
                for it in class {
                    let ne = e + it.error;
                    if ne + min_rest[ci + 1] > threshold + slack {
                        continue;
                    }
                    next.push((ne, d + it.delay, rank, it.label, pi as u32));
                }
                if next.len() > limit {
                    return Err(Error::TooLarge {
                        combinations: next.len() as f64,
                    });
                }
            }
            next.sort_by(|a, b| {
                a.0.total_cmp(&b.0)
                    .then(a.1.total_cmp(&b.1))
                    .then(a.2.cmp(&b.2))
                    .then(a.3.cmp(&b.3))
            });
            let mut kept: Vec<(f64, f64, u32, usize, u32)> = Vec::with_capacity(next.len());
            for cand in next {
                if kept.last().is_none_or(|k| cand.1 < k.1) {
                    kept.push(cand);
                }
            }
            let mut order: Vec<usize> = (0..kept.len()).collect();
            order.sort_by_key(|&i| (kept[i].2, kept[i].3));
            let mut ranks = vec![0u32; kept.len()];
            for (r, &i) in order.iter().enumerate() {
                ranks[i] = r as u32;
            }
            back.push(kept.iter().map(|k| (k.4, k.3)).collect());
            frontier = kept
                .iter()
                .zip(&ranks)
                .map(|(k, &r)| (k.0, k.1, r))
                .collect();
        }
        let (best, _) = frontier
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let rank_a = [a.2 as usize];
                let rank_b = [b.2 as usize];
                compare(
                    (a.1, a.0, &rank_a),
                    (b.1, b.0, &rank_b),
                    tol(a.1.max(b.1)),
                    slack,
                )
            })
            .expect("feasible instance has a frontier");
        let mut labels = vec![0usize; m];
        let mut idx = best;
        for level in (0..m).rev() {
            let (parent, label) = back[level][idx];
            labels[level] = label;
            idx = parent as usize;
        }
        Ok(self.finish(labels))
    }
}

struct Search<'a> {
    eff: &'a [Vec<Item>],
    segments: &'a [Segment],
    base_error: &'a [f64],
    base_delay: &'a [f64],
    budget: f64,
    budget_tol: f64,
    best_delay: f64,
    best_error: f64,
    best_labels: Vec<usize>,
    path: Vec<usize>,
    nodes_left: usize,
}

impl Search<'_> {
    /// Lower bound on the delay of classes `k..` given `budget` error for
    /// them, from the LP relaxation over their hulls.
    fn lp_bound(&self, k: usize, budget: f64) -> f64 {
        let mut room = budget - self.base_error[k];
        let mut delay = self.base_delay[k];
        if room <= 0.0 {
            return delay;
        }
        for s in self.segments.iter().filter(|s| s.class >= k) {
            if s.d_error <= room {
                room -= s.d_error;
                delay -= s.d_delay;
            } else {
                delay -= s.d_delay * room / s.d_error;
                break;
            }
        }
        delay
    }

    /// `false` once the node budget is spent.
    fn dfs(&mut self, k: usize, error: f64, delay: f64) -> bool {
        if self.nodes_left == 0 {
            return false;
        }
        self.nodes_left -= 1;
        let m = self.eff.len();
        if k == m {
            let cand = (delay, error, self.path.as_slice());
            let best = (
                self.best_delay,
                self.best_error,
                self.best_labels.as_slice(),
            );
            if compare(cand, best, tol(self.best_delay), self.budget_tol) == Ordering::Less {
                self.best_delay = delay;
                self.best_error = error;
                self.best_labels = self.path.clone();
            }
            return true;
        }
        let remaining = self.budget - error;
        if self.base_error[k] > remaining + self.budget_tol {
            return true;
        }
        let bound = delay + self.lp_bound(k, remaining + self.budget_tol);
        if bound > self.best_delay + tol(self.best_delay) {
            return true;
        }
        // fastest feasible items first
        let items = &self.eff[k];
        for j in (0..items.len()).rev() {
            let it = items[j];
            let ne = error + it.error;
            if ne + self.base_error[k + 1] > self.budget + self.budget_tol {
                continue;
            }
            self.path.push(it.label);
            let done = self.dfs(k + 1, ne, delay + it.delay);
            self.path.pop();
            if !done {
                return false;
            }
        }
        true
    }
}
