//! Workload histograms of true bitline counts per ADC read.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::bitplane::{bit_of, QuantizedTensor, PLANES};
use crate::error::{Error, Result};

/// How rows are grouped while profiling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileGrouping {
    /// Next `n_wl` rows whose input bit is 1.
    #[default]
    ZeroSkip,
    /// Next `n_wl` consecutive rows.
    Consecutive,
}

/// Histogram of the true count `N` seen by one ADC read of sub-operation
/// `(x_bit, w_bit)` at `n_wl` rows per read.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReadoutPmf {
    pub x_bit: usize,
    pub w_bit: usize,
    pub n_wl: usize,
    /// `counts[N]` for `N` in `0..=n_wl`
    pub counts: Vec<u64>,
    pub total: u64,
}

impl ReadoutPmf {
    pub fn empty(x_bit: usize, w_bit: usize, n_wl: usize) -> Self {
        Self {
            x_bit,
            w_bit,
            n_wl,
            counts: vec![0; n_wl + 1],
            total: 0,
        }
    }

    /// No reads were observed; [`probabilities`](Self::probabilities) then
    /// reports a point mass at zero.
    pub fn is_degenerate(&self) -> bool {
        self.total == 0
    }

    pub fn probabilities(&self) -> Vec<f64> {
        if self.total == 0 {
            let mut p = vec![0.0; self.n_wl + 1];
            p[0] = 1.0;
            return p;
        }
        let t = self.total as f64;
        self.counts.iter().map(|&c| c as f64 / t).collect()
    }

    pub fn mean(&self) -> f64 {
        if self.total == 0 {
            return 0.0;
        }
        let s: u64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(n, &c)| n as u64 * c)
            .sum();
        s as f64 / self.total as f64
    }

    pub fn merge(&mut self, other: &ReadoutPmf) -> Result<()> {
        if (self.x_bit, self.w_bit, self.n_wl) != (other.x_bit, other.w_bit, other.n_wl) {
            return Err(Error::InvalidArgument(
                "merging PMFs of different tuples".into(),
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }
}

/// All PMFs of one layer for `n_wl` in `1..=n_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerProfile {
    pub layer: usize,
    pub n_max: usize,
    pub grouping: ProfileGrouping,
    /// Output columns observed: vectors times layer outputs.
    pub instances: u64,
    /// indexed `(x * 8 + w) * n_max + (n_wl - 1)`
    pmfs: Vec<Option<ReadoutPmf>>,
}

impl LayerProfile {
    fn blank(layer: usize, n_max: usize, grouping: ProfileGrouping) -> Self {
        Self {
            layer,
            n_max,
            grouping,
            instances: 0,
            pmfs: vec![None; PLANES * PLANES * n_max],
        }
    }

    fn slot(&self, x: usize, w: usize, n_wl: usize) -> Option<usize> {
        (x < PLANES && w < PLANES && (1..=self.n_max).contains(&n_wl))
            .then(|| (x * PLANES + w) * self.n_max + n_wl - 1)
    }

    pub fn pmf_of(&self, x_bit: usize, w_bit: usize, n_wl: usize) -> Result<&ReadoutPmf> {
        self.slot(x_bit, w_bit, n_wl)
            .and_then(|i| self.pmfs[i].as_ref())
            .ok_or(Error::MissingPmf {
                layer: self.layer,
                x_bit,
                w_bit,
                n_wl,
            })
    }

    /// Mean ADC reads per output element for one sub-operation.
    pub fn reads_per_column(&self, x_bit: usize, w_bit: usize, n_wl: usize) -> Result<f64> {
        let pmf = self.pmf_of(x_bit, w_bit, n_wl)?;
        if self.instances == 0 {
            return Ok(0.0);
        }
        Ok(pmf.total as f64 / self.instances as f64)
    }

    pub fn pmfs(&self) -> impl Iterator<Item = &ReadoutPmf> {
        self.pmfs.iter().flatten()
    }

    fn insert(&mut self, pmf: ReadoutPmf) -> Result<()> {
        let i = self.slot(pmf.x_bit, pmf.w_bit, pmf.n_wl).ok_or_else(|| {
            Error::InvalidArgument(format!("PMF tuple out of range: n_wl {}", pmf.n_wl))
        })?;
        match &mut self.pmfs[i] {
            Some(p) => p.merge(&pmf),
            slot => {
                *slot = Some(pmf);
                Ok(())
            }
        }
    }
}

/// Profile every `n_wl` in `1..=n_max` for one layer.
///
/// `weights` is `[out, in]`; each stream entry is one input vector of length
/// `in`. Inputs longer than `array_rows` are split into row tiles and groups
/// never straddle tiles.
pub fn profile_layer(
    layer: usize,
    weights: &QuantizedTensor,
    stream: &[Vec<i32>],
    n_max: usize,
    grouping: ProfileGrouping,
    array_rows: usize,
) -> Result<LayerProfile> {
    let (outs, ins) = match weights.dims() {
        [o, i] => (*o, *i),
        d => return Err(Error::Shape(format!("weights must be rank 2, got {d:?}"))),
    };
    if stream.is_empty() {
        return Err(Error::InvalidArgument("activation stream is empty".into()));
    }
    if n_max == 0 || array_rows == 0 {
        return Err(Error::InvalidArgument(
            "n_max and array_rows must be positive".into(),
        ));
    }
    if let Some(v) = stream.iter().find(|v| v.len() != ins) {
        return Err(Error::Shape(format!(
            "input vector of length {} for {ins} weight rows",
            v.len()
        )));
    }

    // counts[(x*8+w)][n-1][N]
    let mut counts: Vec<Vec<Vec<u64>>> = (0..PLANES * PLANES)
        .map(|_| (1..=n_max).map(|n| vec![0u64; n + 1]).collect())
        .collect();
    // weight bits as [w][out][in]
    let wv = weights.values();
    let wbits: Vec<Vec<u8>> = (0..PLANES)
        .map(|w| wv.iter().map(|&v| bit_of(v, w)).collect())
        .collect();

    let mut seq: Vec<u8> = Vec::with_capacity(array_rows);
    let mut xbits: Vec<u8> = vec![0; ins];
    for vector in stream {
        for x in 0..PLANES {
            for (b, &v) in xbits.iter_mut().zip(vector) {
                *b = bit_of(v, x);
            }
            for r0 in (0..ins).step_by(array_rows) {
                let r1 = (r0 + array_rows).min(ins);
                let active: Vec<usize> = (r0..r1).filter(|&r| xbits[r] == 1).collect();
                if grouping == ProfileGrouping::ZeroSkip && active.is_empty() {
                    continue;
                }
                for (w, plane) in wbits.iter().enumerate() {
                    let per_n = &mut counts[x * PLANES + w];
                    for c in 0..outs {
                        let row = &plane[c * ins..(c + 1) * ins];
                        seq.clear();
                        match grouping {
                            ProfileGrouping::ZeroSkip => seq.extend(active.iter().map(|&r| row[r])),
                            ProfileGrouping::Consecutive => {
                                seq.extend((r0..r1).map(|r| row[r] & xbits[r]))
                            }
                        }
                        for (n_idx, hist) in per_n.iter_mut().enumerate() {
                            for chunk in seq.chunks(n_idx + 1) {
                                let s: u32 = chunk.iter().map(|&b| b as u32).sum();
                                hist[s as usize] += 1;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut profile = LayerProfile::blank(layer, n_max, grouping);
    profile.instances = (stream.len() * outs) as u64;
    for x in 0..PLANES {
        for w in 0..PLANES {
            for (n_idx, hist) in counts[x * PLANES + w].drain(..).enumerate() {
                let total = hist.iter().sum();
                profile.insert(ReadoutPmf {
                    x_bit: x,
                    w_bit: w,
                    n_wl: n_idx + 1,
                    counts: hist,
                    total,
                })?;
            }
        }
    }
    Ok(profile)
}

/// The 64 PMFs of a single wordline count.
pub fn profile_pmfs(
    weights: &QuantizedTensor,
    stream: &[Vec<i32>],
    n_wl: usize,
    grouping: ProfileGrouping,
    array_rows: usize,
) -> Result<Vec<ReadoutPmf>> {
    if n_wl == 0 {
        return Err(Error::InvalidArgument("n_wl must be at least 1".into()));
    }
    let p = profile_layer(0, weights, stream, n_wl, grouping, array_rows)?;
    let mut out = Vec::with_capacity(PLANES * PLANES);
    for x in 0..PLANES {
        for w in 0..PLANES {
            out.push(p.pmf_of(x, w, n_wl)?.clone());
        }
    }
    Ok(out)
}

const CACHE_HEADER: &str = "layer,x_bit,w_bit,n_wl,N,count";

/// PMF cache text: one `layer,x_bit,w_bit,n_wl,N,count` row per histogram
/// bin plus one `#instances,layer,count` line per layer.
pub fn cache_to_csv(profiles: &[LayerProfile]) -> String {
    let mut s = String::from(CACHE_HEADER);
    s.push('\n');
    for p in profiles {
        let _ = writeln!(s, "#instances,{},{}", p.layer, p.instances);
        let _ = writeln!(
            s,
            "#grouping,{},{}",
            p.layer,
            match p.grouping {
                ProfileGrouping::ZeroSkip => "zero_skip",
                ProfileGrouping::Consecutive => "consecutive",
            }
        );
        for pmf in p.pmfs() {
            for (n, c) in pmf.counts.iter().enumerate() {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{n},{c}",
                    p.layer, pmf.x_bit, pmf.w_bit, pmf.n_wl
                );
            }
        }
    }
    s
}

pub fn cache_from_csv(text: &str) -> Result<Vec<LayerProfile>> {
    let bad = |line: &str| Error::Format(format!("bad PMF cache line {line:?}"));
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(CACHE_HEADER) {
        return Err(Error::Format("PMF cache header missing".into()));
    }
    let mut instances: BTreeMap<usize, u64> = BTreeMap::new();
    let mut groupings: BTreeMap<usize, ProfileGrouping> = BTreeMap::new();
    let mut bins: BTreeMap<(usize, usize, usize, usize), Vec<u64>> = BTreeMap::new();
    for line in lines.filter(|l| !l.trim().is_empty()) {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        match f.as_slice() {
            ["#instances", layer, count] => {
                let layer = layer.parse().map_err(|_| bad(line))?;
                instances.insert(layer, count.parse().map_err(|_| bad(line))?);
            }
            ["#grouping", layer, g] => {
                let layer = layer.parse().map_err(|_| bad(line))?;
                let g = match *g {
                    "zero_skip" => ProfileGrouping::ZeroSkip,
                    "consecutive" => ProfileGrouping::Consecutive,
                    _ => return Err(bad(line)),
                };
                groupings.insert(layer, g);
            }
            [_, _, _, _, _, _] => {
                let v: Vec<usize> = f
                    .iter()
                    .map(|t| t.parse())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| bad(line))?;
                let (layer, x, w, n, big_n, count) = (v[0], v[1], v[2], v[3], v[4], v[5] as u64);
                if x >= PLANES || w >= PLANES || n == 0 || big_n > n {
                    return Err(bad(line));
                }
                let hist = bins
                    .entry((layer, x, w, n))
                    .or_insert_with(|| vec![0; n + 1]);
                hist[big_n] += count;
            }
            _ => return Err(bad(line)),
        }
    }
    let mut n_max: BTreeMap<usize, usize> = BTreeMap::new();
    for &(layer, _, _, n) in bins.keys() {
        let m = n_max.entry(layer).or_insert(0);
        *m = (*m).max(n);
    }
    let mut out: Vec<LayerProfile> = Vec::new();
    for ((layer, x, w, n), counts) in bins {
        if out.last().is_none_or(|p| p.layer != layer) {
            let inst = *instances
                .get(&layer)
                .ok_or_else(|| Error::Format(format!("no #instances line for layer {layer}")))?;
            let mut p = LayerProfile::blank(
                layer,
                n_max[&layer],
                groupings.get(&layer).copied().unwrap_or_default(),
            );
            p.instances = inst;
            out.push(p);
        }
        let total = counts.iter().sum();
        out.last_mut().unwrap().insert(ReadoutPmf {
            x_bit: x,
            w_bit: w,
            n_wl: n,
            counts,
            total,
        })?;
    }
    Ok(out)
}
