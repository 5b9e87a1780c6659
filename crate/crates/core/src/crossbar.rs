//! Cycle-level model of one RRAM sub-array running bit-serial VMM.
//!
//! Each 8-bit weight occupies 8 adjacent physical columns (plane `w` in
//! column `8 * c + w`) and the 8 columns share one ADC through a mux. Every
//! cycle enables one group of wordlines for one `(x, w)` sub-operation and
//! every ADC converts its column `w`, so one cycle is one ADC read per
//! logical column.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bitplane::{bit_of, plane_magnitude, QuantizedTensor, PLANES};
use crate::device::{sample_bitline, sample_cell, AdcQuantizer, DeviceParams};
use crate::error::{Error, Result};
use crate::optimizer::WordlineLut;

/// Rows a baseline or zero-skip read enables for a `b`-bit ADC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RowConvention {
    /// `2^b` rows: the ADC's state count, so a full read saturates.
    #[default]
    PowerOfTwo,
    /// `2^b - 1` rows: every count is resolved exactly.
    Resolvable,
}

impl RowConvention {
    pub fn rows(self, adc_bits: u32) -> usize {
        match self {
            RowConvention::PowerOfTwo => 1 << adc_bits,
            RowConvention::Resolvable => (1 << adc_bits) - 1,
        }
    }
}

/// Per-event energies in pJ. The defaults are placeholders, not calibrated
/// silicon numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnergyModel {
    pub adc_read_pj: f64,
    pub wordline_pj: f64,
    pub shift_add_pj: f64,
    /// Per array cycle: LUT lookup, mux and control.
    pub control_pj: f64,
    /// Vector unit, per output element (accumulate, bias, quantize, relu).
    #[serde(default = "EnergyModel::default_vector_op")]
    pub vector_op_pj: f64,
    #[serde(default = "EnergyModel::default_hop")]
    pub hop_pj: f64,
}

impl EnergyModel {
    fn default_vector_op() -> f64 {
        0.5
    }

    fn default_hop() -> f64 {
        1.0
    }
}

impl Default for EnergyModel {
    fn default() -> Self {
        Self {
            adc_read_pj: 2.0,
            wordline_pj: 0.05,
            shift_add_pj: 0.1,
            control_pj: 0.2,
            vector_op_pj: Self::default_vector_op(),
            hop_pj: Self::default_hop(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArrayConfig {
    pub rows: usize,
    pub cols: usize,
    pub convention: RowConvention,
    pub energy: EnergyModel,
}

impl Default for ArrayConfig {
    fn default() -> Self {
        Self {
            rows: 128,
            cols: 128,
            convention: RowConvention::PowerOfTwo,
            energy: EnergyModel::default(),
        }
    }
}

impl ArrayConfig {
    pub fn logical_cols(&self) -> usize {
        self.cols / PLANES
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PerfCounters {
    pub cycles: u64,
    pub adc_reads: u64,
    pub wordline_activations: u64,
    pub shift_add_ops: u64,
    pub stalls: u64,
    pub energy_pj: f64,
}

impl PerfCounters {
    fn charge(&mut self, energy: &EnergyModel) {
        self.energy_pj = self.adc_reads as f64 * energy.adc_read_pj
            + self.wordline_activations as f64 * energy.wordline_pj
            + self.shift_add_ops as f64 * energy.shift_add_pj
            + self.cycles as f64 * energy.control_pj;
    }

    /// Events that happened one after the other.
    pub fn add_sequential(&mut self, other: &PerfCounters) {
        self.cycles += other.cycles;
        self.add_events(other);
    }

    /// Events on units working side by side: cycles overlap.
    pub fn add_parallel(&mut self, other: &PerfCounters) {
        self.cycles = self.cycles.max(other.cycles);
        self.add_events(other);
    }

    fn add_events(&mut self, other: &PerfCounters) {
        self.adc_reads += other.adc_reads;
        self.wordline_activations += other.wordline_activations;
        self.shift_add_ops += other.shift_add_ops;
        self.stalls += other.stalls;
        self.energy_pj += other.energy_pj;
    }
}

/// How rows are grouped into ADC reads for one sub-operation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Grouping {
    /// Next `n` consecutive rows, whatever their input bits.
    Consecutive(usize),
    /// Next `n` rows whose input bit is 1.
    OnesOnly(usize),
}

impl Grouping {
    /// Rows the ADC is configured for.
    pub fn rows(self) -> usize {
        match self {
            Grouping::Consecutive(n) | Grouping::OnesOnly(n) => n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Policy {
    Baseline,
    ZeroSkip,
    CountingCards(WordlineLut),
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Baseline => "baseline",
            Policy::ZeroSkip => "zero_skip",
            Policy::CountingCards(_) => "counting_cards",
        }
    }

    pub fn grouping(
        &self,
        x: usize,
        w: usize,
        adc_bits: u32,
        convention: RowConvention,
    ) -> Grouping {
        match self {
            Policy::Baseline => Grouping::Consecutive(convention.rows(adc_bits)),
            Policy::ZeroSkip => Grouping::OnesOnly(convention.rows(adc_bits)),
            Policy::CountingCards(lut) => Grouping::OnesOnly(lut.get(x, w)),
        }
    }
}

/// Rows of the next read starting at `cursor`; advances the cursor. An empty
/// result means the column is done.
pub fn next_row_group(grouping: Grouping, input_bits: &[u8], cursor: &mut usize) -> Vec<usize> {
    let rows = input_bits.len();
    let mut out = Vec::new();
    match grouping {
        Grouping::Consecutive(n) => {
            let end = (*cursor + n).min(rows);
            out.extend(*cursor..end);
            *cursor = end;
        }
        Grouping::OnesOnly(n) => {
            while *cursor < rows && out.len() < n {
                if input_bits[*cursor] == 1 {
                    out.push(*cursor);
                }
                *cursor += 1;
            }
            // skip trailing zeros so an exhausted column reports empty next time
            while *cursor < rows && input_bits[*cursor] == 0 {
                *cursor += 1;
            }
        }
    }
    out
}

/// Row groups of one sub-operation: active rows (input bit 1) per read plus
/// the number of wordlines each read enables.
#[derive(Debug, Default, Clone)]
pub(crate) struct GroupPlan {
    pub active: Vec<u32>,
    /// `(start, end)` into `active`, wordlines enabled
    pub groups: Vec<(u32, u32, u32)>,
}

impl GroupPlan {
    pub fn build(&mut self, grouping: Grouping, input_bits: &[u8]) {
        self.active.clear();
        self.groups.clear();
        match grouping {
            Grouping::Consecutive(n) => {
                for (g, window) in input_bits.chunks(n).enumerate() {
                    let start = self.active.len() as u32;
                    for (i, &b) in window.iter().enumerate() {
                        if b == 1 {
                            self.active.push((g * n + i) as u32);
                        }
                    }
                    self.groups
                        .push((start, self.active.len() as u32, window.len() as u32));
                }
            }
            Grouping::OnesOnly(n) => {
                self.active.extend(
                    input_bits
                        .iter()
                        .enumerate()
                        .filter(|(_, &b)| b == 1)
                        .map(|(r, _)| r as u32),
                );
                let len = self.active.len();
                let mut s = 0;
                while s < len {
                    let e = (s + n).min(len);
                    self.groups.push((s as u32, e as u32, (e - s) as u32));
                    s = e;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub cycle: u64,
    pub x_bit: usize,
    pub w_bit: usize,
    pub column: usize,
    pub rows_enabled: usize,
    pub true_n: usize,
    pub code: u32,
}

pub fn trace_to_csv(events: &[TraceEvent]) -> String {
    let mut s = String::from("cycle,pair,column,rows_enabled,true_N,code\n");
    for e in events {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            e.cycle,
            e.x_bit * PLANES + e.w_bit,
            e.column,
            e.rows_enabled,
            e.true_n,
            e.code
        );
    }
    s
}

/// One programmed sub-array.
#[derive(Debug, Clone)]
pub struct CrossbarArray {
    config: ArrayConfig,
    used_rows: usize,
    used_cols: usize,
    /// `[physical column][row]`
    bits: Vec<u8>,
    conductance: Vec<f64>,
}

/// Program a `[out, in]` weight tile: input `r` drives row `r`, output `c`
/// occupies physical columns `8c..8c+8`.
pub fn program_array<R: Rng + ?Sized>(
    weights: &QuantizedTensor,
    config: &ArrayConfig,
    device: &DeviceParams,
    rng: &mut R,
) -> Result<CrossbarArray> {
    let (outs, ins) = match weights.dims() {
        [o, i] => (*o, *i),
        d => {
            return Err(Error::Shape(format!(
                "weight tile must be rank 2, got {d:?}"
            )))
        }
    };
    if ins > config.rows || outs > config.logical_cols() {
        return Err(Error::Shape(format!(
            "{outs}x{ins} tile does not fit a {}x{} array ({} weight columns)",
            config.rows,
            config.cols,
            config.logical_cols()
        )));
    }
    let rows = config.rows;
    let phys = outs * PLANES;
    let mut bits = vec![0u8; phys * rows];
    let mut conductance = vec![device.hrs_current(); phys * rows];
    let values = weights.values();
    for c in 0..outs {
        for w in 0..PLANES {
            let col = c * PLANES + w;
            for r in 0..ins {
                let b = bit_of(values[c * ins + r], w);
                bits[col * rows + r] = b;
                conductance[col * rows + r] = sample_cell(b, device, rng);
            }
        }
    }
    Ok(CrossbarArray {
        config: config.clone(),
        used_rows: ins,
        used_cols: outs,
        bits,
        conductance,
    })
}

impl CrossbarArray {
    pub fn config(&self) -> &ArrayConfig {
        &self.config
    }

    pub fn used_rows(&self) -> usize {
        self.used_rows
    }

    pub fn used_cols(&self) -> usize {
        self.used_cols
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductance
    }

    fn column(&self, c: usize, w: usize) -> (&[u8], &[f64]) {
        let rows = self.config.rows;
        let col = c * PLANES + w;
        (
            &self.bits[col * rows..(col + 1) * rows],
            &self.conductance[col * rows..(col + 1) * rows],
        )
    }
}

/// Bit-serial VMM of an unsigned activation vector on one array.
pub fn simulate_vmm<R: Rng + ?Sized>(
    array: &CrossbarArray,
    input: &QuantizedTensor,
    policy: &Policy,
    device: &DeviceParams,
    rng: &mut R,
) -> Result<(Vec<i64>, PerfCounters)> {
    if input.len() != array.used_rows {
        return Err(Error::Shape(format!(
            "input has {} entries but the array holds {} rows",
            input.len(),
            array.used_rows
        )));
    }
    if input.is_signed() {
        return Err(Error::InvalidArgument(
            "activations must be unsigned".into(),
        ));
    }
    let mut counters = PerfCounters::default();
    let out = run_vmm(
        array,
        input.values(),
        policy,
        device,
        rng,
        &mut counters,
        None,
    );
    Ok((out, counters))
}

/// As [`simulate_vmm`], recording one event per ADC read.
pub fn simulate_vmm_traced<R: Rng + ?Sized>(
    array: &CrossbarArray,
    input: &QuantizedTensor,
    policy: &Policy,
    device: &DeviceParams,
    rng: &mut R,
) -> Result<(Vec<i64>, PerfCounters, Vec<TraceEvent>)> {
    if input.len() != array.used_rows {
        return Err(Error::Shape(format!(
            "input has {} entries but the array holds {} rows",
            input.len(),
            array.used_rows
        )));
    }
    let mut counters = PerfCounters::default();
    let mut trace = Vec::new();
    let out = run_vmm(
        array,
        input.values(),
        policy,
        device,
        rng,
        &mut counters,
        Some(&mut trace),
    );
    Ok((out, counters, trace))
}

pub(crate) fn run_vmm<R: Rng + ?Sized>(
    array: &CrossbarArray,
    input: &[i32],
    policy: &Policy,
    device: &DeviceParams,
    rng: &mut R,
    counters: &mut PerfCounters,
    mut trace: Option<&mut Vec<TraceEvent>>,
) -> Vec<i64> {
    let cols = array.used_cols;
    let mut acc = vec![0i64; cols];
    let mut local = PerfCounters::default();
    let mut in_bits = vec![0u8; array.used_rows];
    let mut plan = GroupPlan::default();
    let convention = array.config.convention;
    let hrs = device.hrs_current();
    for x in 0..PLANES {
        for (b, &v) in in_bits.iter_mut().zip(input) {
            *b = bit_of(v, x);
        }
        let mag_x = plane_magnitude(x, false);
        for w in 0..PLANES {
            let grouping = policy.grouping(x, w, device.adc_bits, convention);
            plan.build(grouping, &in_bits);
            if plan.groups.is_empty() {
                continue;
            }
            let adc = AdcQuantizer::new(device.adc_bits, grouping.rows());
            let mag = mag_x * plane_magnitude(w, true);
            for &(_, _, enabled) in &plan.groups {
                local.wordline_activations += enabled as u64;
            }
            for (c, a) in acc.iter_mut().enumerate() {
                let (bits, cond) = array.column(c, w);
                let mut partial = 0i64;
                for (g, &(s, e, enabled)) in plan.groups.iter().enumerate() {
                    let rows = &plan.active[s as usize..e as usize];
                    let n_true: usize = rows.iter().map(|&r| bits[r as usize] as usize).sum();
                    let level = if device.resample_per_read {
                        sample_bitline(n_true, rows.len() - n_true, device, rng)
                    } else {
                        rows.iter().map(|&r| cond[r as usize]).sum::<f64>()
                    };
                    let level = if hrs == 0.0 && n_true == 0 {
                        0.0
                    } else {
                        level
                    };
                    let code = adc.quantize(level);
                    partial += code as i64;
                    if let Some(t) = trace.as_deref_mut() {
                        t.push(TraceEvent {
                            cycle: local.cycles + g as u64,
                            x_bit: x,
                            w_bit: w,
                            column: c,
                            rows_enabled: enabled as usize,
                            true_n: n_true,
                            code,
                        });
                    }
                }
                *a += partial * mag;
            }
            let groups = plan.groups.len() as u64;
            local.cycles += groups;
            local.adc_reads += groups * cols as u64;
            local.shift_add_ops += groups * cols as u64;
        }
    }
    local.charge(&array.config.energy);
    counters.add_sequential(&local);
    acc
}

/// A weight matrix tiled over as many arrays as it needs.
#[derive(Debug, Clone)]
pub struct TiledLayer {
    outputs: usize,
    inputs: usize,
    row_tile: usize,
    col_tile: usize,
    /// `[row tile][col tile]`, row-major
    tiles: Vec<CrossbarArray>,
}

/// Number of `(row, col)` tiles a `[out, in]` matrix needs.
pub fn tile_counts(outputs: usize, inputs: usize, config: &ArrayConfig) -> (usize, usize) {
    (
        inputs.div_ceil(config.rows),
        outputs.div_ceil(config.logical_cols()),
    )
}

pub fn program_tiled<R: Rng + ?Sized>(
    weights: &QuantizedTensor,
    config: &ArrayConfig,
    device: &DeviceParams,
    rng: &mut R,
) -> Result<TiledLayer> {
    let (outputs, inputs) = match weights.dims() {
        [o, i] => (*o, *i),
        d => return Err(Error::Shape(format!("weights must be rank 2, got {d:?}"))),
    };
    let (rt, ct) = tile_counts(outputs, inputs, config);
    let row_tile = config.rows;
    let col_tile = config.logical_cols();
    let values = weights.values();
    let mut tiles = Vec::with_capacity(rt * ct);
    for r in 0..rt {
        let r0 = r * row_tile;
        let r1 = (r0 + row_tile).min(inputs);
        for c in 0..ct {
            let c0 = c * col_tile;
            let c1 = (c0 + col_tile).min(outputs);
            let mut tile = Vec::with_capacity((c1 - c0) * (r1 - r0));
            for o in c0..c1 {
                tile.extend_from_slice(&values[o * inputs + r0..o * inputs + r1]);
            }
            let t = QuantizedTensor::new(vec![c1 - c0, r1 - r0], tile, true, 8, weights.scale())?;
            tiles.push(program_array(&t, config, device, rng)?);
        }
    }
    Ok(TiledLayer {
        outputs,
        inputs,
        row_tile,
        col_tile,
        tiles,
    })
}

impl TiledLayer {
    pub fn outputs(&self) -> usize {
        self.outputs
    }

    pub fn inputs(&self) -> usize {
        self.inputs
    }

    pub fn arrays(&self) -> usize {
        self.tiles.len()
    }

    /// Run one vector through every tile; tiles work in parallel and their
    /// partial sums are added digitally.
    pub fn simulate<R: Rng + ?Sized>(
        &self,
        input: &[i32],
        policy: &Policy,
        device: &DeviceParams,
        rng: &mut R,
        counters: &mut PerfCounters,
    ) -> Result<Vec<i64>> {
        if input.len() != self.inputs {
            return Err(Error::Shape(format!(
                "input has {} entries, layer expects {}",
                input.len(),
                self.inputs
            )));
        }
        let ct = self.outputs.div_ceil(self.col_tile);
        let mut out = vec![0i64; self.outputs];
        let mut step = PerfCounters::default();
        let mut busy = Vec::with_capacity(self.tiles.len());
        for (i, tile) in self.tiles.iter().enumerate() {
            let (r, c) = (i / ct, i % ct);
            let r0 = r * self.row_tile;
            let slice = &input[r0..r0 + tile.used_rows];
            let mut tc = PerfCounters::default();
            let part = run_vmm(tile, slice, policy, device, rng, &mut tc, None);
            for (o, v) in out[c * self.col_tile..].iter_mut().zip(part) {
                *o += v;
            }
            busy.push((tc.cycles, tile.used_cols as u64));
            step.add_parallel(&tc);
        }
        // ADCs of tiles that finish early idle until the slowest tile is done
        step.stalls += busy
            .iter()
            .map(|&(c, adcs)| (step.cycles - c) * adcs)
            .sum::<u64>();
        counters.add_sequential(&step);
        Ok(out)
    }
}
