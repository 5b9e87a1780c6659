//! Chip-level simulation: layers lowered to VMM, mapped onto PEs of
//! crossbar arrays with weight duplication, and run end to end.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitplane::{matvec, QuantizedTensor};
use crate::crossbar::{program_tiled, tile_counts, ArrayConfig, PerfCounters, Policy, TiledLayer};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::errormodel::mean_ci95;
use crate::seed::derive_seed;

/// Largest activation code after requantization (7-bit effective data).
pub const ACT_MAX: i64 = 127;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum LayerKind {
    Conv {
        in_ch: usize,
        in_h: usize,
        in_w: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        out_ch: usize,
    },
    Dense {
        inputs: usize,
        outputs: usize,
    },
}

impl LayerKind {
    pub fn input_len(&self) -> usize {
        match *self {
            LayerKind::Conv {
                in_ch, in_h, in_w, ..
            } => in_ch * in_h * in_w,
            LayerKind::Dense { inputs, .. } => inputs,
        }
    }

    /// Rows of the lowered weight matrix.
    pub fn patch_len(&self) -> usize {
        match *self {
            LayerKind::Conv { in_ch, kernel, .. } => in_ch * kernel * kernel,
            LayerKind::Dense { inputs, .. } => inputs,
        }
    }

    pub fn out_channels(&self) -> usize {
        match *self {
            LayerKind::Conv { out_ch, .. } => out_ch,
            LayerKind::Dense { outputs, .. } => outputs,
        }
    }

    pub fn out_hw(&self) -> (usize, usize) {
        match *self {
            LayerKind::Conv {
                in_h,
                in_w,
                kernel,
                stride,
                padding,
                ..
            } => (
                (in_h + 2 * padding - kernel) / stride + 1,
                (in_w + 2 * padding - kernel) / stride + 1,
            ),
            LayerKind::Dense { .. } => (1, 1),
        }
    }

    pub fn patches_per_input(&self) -> usize {
        let (h, w) = self.out_hw();
        h * w
    }

    pub fn output_len(&self) -> usize {
        self.out_channels() * self.patches_per_input()
    }

    /// im2col: one vector per output position, ordered channel, ky, kx.
    pub fn patches(&self, input: &[i32]) -> Vec<Vec<i32>> {
        match *self {
            LayerKind::Dense { .. } => vec![input.to_vec()],
            LayerKind::Conv {
                in_ch,
                in_h,
                in_w,
                kernel,
                stride,
                padding,
                ..
            } => {
                let (oh, ow) = self.out_hw();
                let mut out = Vec::with_capacity(oh * ow);
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut p = Vec::with_capacity(in_ch * kernel * kernel);
                        for c in 0..in_ch {
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    let y = (oy * stride + ky) as isize - padding as isize;
                                    let x = (ox * stride + kx) as isize - padding as isize;
                                    let inside = y >= 0
                                        && x >= 0
                                        && (y as usize) < in_h
                                        && (x as usize) < in_w;
                                    p.push(if inside {
                                        input[(c * in_h + y as usize) * in_w + x as usize]
                                    } else {
                                        0
                                    });
                                }
                            }
                        }
                        out.push(p);
                    }
                }
                out
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub name: String,
    pub kind: LayerKind,
    /// `[out_channels, patch_len]`, signed 8-bit
    pub weights: QuantizedTensor,
    /// In accumulator units.
    pub bias: Vec<i64>,
    /// Requantization step: accumulator units per output code.
    pub divisor: f64,
    /// Hidden layers apply ReLU and requantize to `0..=127`; the last layer
    /// returns raw `acc + bias` as logits.
    pub relu: bool,
}

impl Layer {
    pub fn validate(&self) -> Result<()> {
        let dims = self.weights.dims();
        if dims != [self.kind.out_channels(), self.kind.patch_len()] {
            return Err(Error::Shape(format!(
                "layer {}: weights {dims:?}, expected [{}, {}]",
                self.name,
                self.kind.out_channels(),
                self.kind.patch_len()
            )));
        }
        if !self.weights.is_signed() {
            return Err(Error::InvalidArgument(format!(
                "layer {}: weights must be signed",
                self.name
            )));
        }
        if self.bias.len() != self.kind.out_channels() {
            return Err(Error::Shape(format!(
                "layer {}: {} biases for {} outputs",
                self.name,
                self.bias.len(),
                self.kind.out_channels()
            )));
        }
        if !(self.divisor > 0.0 && self.divisor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "layer {}: divisor must be positive",
                self.name
            )));
        }
        Ok(())
    }

    /// Bias, ReLU and requantization of a `[out_ch, positions]` accumulator.
    pub fn finish(&self, acc: &[i64]) -> Vec<i64> {
        let positions = self.kind.patches_per_input();
        acc.iter()
            .enumerate()
            .map(|(i, &a)| {
                let v = a + self.bias[i / positions];
                if self.relu {
                    requantize(v, self.divisor)
                } else {
                    v
                }
            })
            .collect()
    }
}

/// `clamp(round(v / divisor), 0, 127)`, rounding half away from zero.
pub fn requantize(v: i64, divisor: f64) -> i64 {
    ((v as f64 / divisor).round() as i64).clamp(0, ACT_MAX)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub name: String,
    pub layers: Vec<Layer>,
}

/// Noiseless run of one input.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceRun {
    /// Input of every layer.
    pub inputs: Vec<Vec<i32>>,
    /// Output of the last layer.
    pub logits: Vec<i64>,
}

impl Network {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            l.validate()?;
            if i + 1 < self.layers.len() {
                if !l.relu {
                    return Err(Error::InvalidArgument(format!(
                        "hidden layer {} must use relu",
                        l.name
                    )));
                }
                let next = &self.layers[i + 1];
                if l.kind.output_len() != next.kind.input_len() {
                    return Err(Error::Shape(format!(
                        "layer {} emits {} values, {} expects {}",
                        l.name,
                        l.kind.output_len(),
                        next.name,
                        next.kind.input_len()
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn input_len(&self) -> usize {
        self.layers[0].kind.input_len()
    }

    pub fn reference(&self, input: &[i32]) -> Result<ReferenceRun> {
        if input.len() != self.input_len() {
            return Err(Error::Shape(format!(
                "input of length {}, network expects {}",
                input.len(),
                self.input_len()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut act: Vec<i32> = input.to_vec();
        let mut out = Vec::new();
        for layer in &self.layers {
            let acc = exact_layer(layer, &act);
            out = layer.finish(&acc);
            inputs.push(act);
            act = out.iter().map(|&v| v as i32).collect();
        }
        Ok(ReferenceRun {
            inputs,
            logits: out,
        })
    }

    /// Noiseless inputs of every layer as `[channels, h, w]` or `[n]`
    /// tensors, for checking against other implementations.
    pub fn reference_activations(&self, input: &[i32]) -> Result<Vec<QuantizedTensor>> {
        let run = self.reference(input)?;
        run.inputs
            .into_iter()
            .zip(&self.layers)
            .map(|(v, l)| {
                let dims = match l.kind {
                    LayerKind::Conv {
                        in_ch, in_h, in_w, ..
                    } => vec![in_ch, in_h, in_w],
                    LayerKind::Dense { inputs, .. } => vec![inputs],
                };
                QuantizedTensor::new(dims, v, false, 8, 1.0)
            })
            .collect()
    }
}

/// Exact accumulators in `[out_ch, positions]` order.
pub fn exact_layer(layer: &Layer, input: &[i32]) -> Vec<i64> {
    let (o, k) = (layer.kind.out_channels(), layer.kind.patch_len());
    let patches = layer.kind.patches(input);
    let positions = patches.len();
    let mut acc = vec![0i64; o * positions];
    for (p, patch) in patches.iter().enumerate() {
        for (c, v) in matvec(layer.weights.values(), o, k, patch)
            .into_iter()
            .enumerate()
        {
            acc[c * positions + p] = v;
        }
    }
    acc
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChipConfig {
    pub pes: usize,
    #[serde(default = "ChipConfig::default_arrays_per_pe")]
    pub arrays_per_pe: usize,
    /// Cycles per mesh hop between consecutive layers.
    #[serde(default = "ChipConfig::default_hop_latency")]
    pub hop_latency: u64,
}

impl ChipConfig {
    fn default_arrays_per_pe() -> usize {
        64
    }

    fn default_hop_latency() -> u64 {
        4
    }

    pub fn total_arrays(&self) -> usize {
        self.pes * self.arrays_per_pe
    }

    /// Side of the square mesh holding the PEs.
    pub fn mesh_width(&self) -> usize {
        (1..).find(|w| w * w >= self.pes).unwrap_or(1)
    }

    pub fn hops(&self, pe_a: usize, pe_b: usize) -> u64 {
        let w = self.mesh_width();
        let (ax, ay) = (pe_a % w, pe_a / w);
        let (bx, by) = (pe_b % w, pe_b / w);
        (ax.abs_diff(bx) + ay.abs_diff(by)) as u64
    }
}

impl Default for ChipConfig {
    fn default() -> Self {
        Self {
            pes: 4,
            arrays_per_pe: Self::default_arrays_per_pe(),
            hop_latency: Self::default_hop_latency(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMapping {
    pub layer: usize,
    /// Arrays along the input and output dimensions of one copy.
    pub row_tiles: usize,
    pub col_tiles: usize,
    pub duplication: usize,
    /// Global array ids, one contiguous block per copy.
    pub first_array: usize,
    pub first_pe: usize,
    pub last_pe: usize,
}

impl LayerMapping {
    pub fn arrays_per_copy(&self) -> usize {
        self.row_tiles * self.col_tiles
    }

    pub fn arrays(&self) -> usize {
        self.arrays_per_copy() * self.duplication
    }
}

/// Array-steps per input: patches times tiles of one copy.
pub fn layer_workload(layer: &Layer, array: &ArrayConfig) -> f64 {
    let (rt, ct) = tile_counts(layer.kind.out_channels(), layer.kind.patch_len(), array);
    (layer.kind.patches_per_input() * rt * ct) as f64
}

/// Place one copy of every layer, then hand spare arrays out as extra
/// copies in proportion to `workloads`; arrays that the proportional split
/// leaves over go one copy at a time to the layer with the most work per
/// copy.
pub fn map_layers_weighted(
    network: &Network,
    chip: &ChipConfig,
    array: &ArrayConfig,
    workloads: &[f64],
) -> Result<Vec<LayerMapping>> {
    if chip.pes == 0 || chip.arrays_per_pe == 0 {
        return Err(Error::InvalidArgument(
            "chip needs at least one PE and one array per PE".into(),
        ));
    }
    if workloads.len() != network.layers.len() {
        return Err(Error::Shape("one workload per layer required".into()));
    }
    let tiles: Vec<usize> = network
        .layers
        .iter()
        .map(|l| {
            let (rt, ct) = tile_counts(l.kind.out_channels(), l.kind.patch_len(), array);
            rt * ct
        })
        .collect();
    let needed: usize = tiles.iter().sum();
    let available = chip.total_arrays();
    if needed > available {
        return Err(Error::InsufficientArrays { needed, available });
    }
    let spare = available - needed;
    let total_work: f64 = workloads.iter().sum();
    let mut dup = vec![1usize; tiles.len()];
    if total_work > 0.0 {
        for (i, (&w, &t)) in workloads.iter().zip(&tiles).enumerate() {
            dup[i] += (spare as f64 * w / total_work / t as f64).floor() as usize;
        }
    }
    let mut left = available - dup.iter().zip(&tiles).map(|(d, t)| d * t).sum::<usize>();
    loop {
        let best = (0..tiles.len())
            .filter(|&i| tiles[i] <= left && workloads[i] > 0.0)
            .max_by(|&a, &b| {
                let ra = workloads[a] / dup[a] as f64;
                let rb = workloads[b] / dup[b] as f64;
                ra.total_cmp(&rb).then(b.cmp(&a))
            });
        match best {
            Some(i) => {
                dup[i] += 1;
                left -= tiles[i];
            }
            None => break,
        }
    }
    let mut next = 0;
    Ok((0..tiles.len())
        .map(|i| {
            let (rt, ct) = tile_counts(
                network.layers[i].kind.out_channels(),
                network.layers[i].kind.patch_len(),
                array,
            );
            let first = next;
            next += tiles[i] * dup[i];
            LayerMapping {
                layer: i,
                row_tiles: rt,
                col_tiles: ct,
                duplication: dup[i],
                first_array: first,
                first_pe: first / chip.arrays_per_pe,
                last_pe: (next - 1) / chip.arrays_per_pe,
            }
        })
        .collect())
}

/// [`map_layers_weighted`] with each layer's array-steps as its workload.
pub fn map_layers(
    network: &Network,
    chip: &ChipConfig,
    array: &ArrayConfig,
) -> Result<Vec<LayerMapping>> {
    let w: Vec<f64> = network
        .layers
        .iter()
        .map(|l| layer_workload(l, array))
        .collect();
    map_layers_weighted(network, chip, array, &w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerReport {
    pub name: String,
    pub duplication: usize,
    pub arrays: usize,
    /// Per input, averaged over inputs and trials.
    pub cycles: f64,
    pub adc_reads: f64,
    pub wordline_activations: f64,
    pub stalls: f64,
    pub energy_pj: f64,
    /// Mean absolute accumulator error per output, in requantized units.
    pub mae: f64,
    pub mae_ci: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChipTotals {
    /// One input through every layer plus the hops between them.
    pub latency_cycles: f64,
    /// Steady-state cycles per input of the pipeline (slowest layer).
    pub throughput_cycles: f64,
    pub adc_reads: f64,
    pub energy_pj: f64,
    pub hops: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub network: String,
    pub policy: String,
    pub sigma: f64,
    pub threshold: Option<f64>,
    pub trials: usize,
    pub inputs: usize,
    pub layers: Vec<LayerReport>,
    pub chip: ChipTotals,
    /// Label accuracy when labels are known, else agreement of the argmax
    /// with the noiseless run.
    pub accuracy_proxy: f64,
    pub accuracy_kind: String,
    /// Argmax per input of the first trial.
    pub predictions: Vec<usize>,
}

/// Everything [`simulate_network`] needs besides the network itself.
#[derive(Debug, Clone)]
pub struct RunSpec<'a> {
    pub device: &'a DeviceParams,
    pub array: &'a ArrayConfig,
    pub chip: &'a ChipConfig,
    pub mapping: &'a [LayerMapping],
    /// One policy per layer.
    pub policies: &'a [Policy],
    pub trials: usize,
    pub seed: u64,
}

struct TrialResult {
    abs_err: Vec<f64>,
    counters: Vec<PerfCounters>,
    cycles: Vec<u64>,
    predictions: Vec<usize>,
}

pub fn argmax(v: &[i64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn run_trial(
    network: &Network,
    inputs: &[Vec<i32>],
    spec: &RunSpec,
    trial: usize,
) -> Result<TrialResult> {
    let nl = network.layers.len();
    let mut copies: Vec<Vec<TiledLayer>> = Vec::with_capacity(nl);
    for (l, (layer, map)) in network.layers.iter().zip(spec.mapping).enumerate() {
        let mut v = Vec::with_capacity(map.duplication);
        for d in 0..map.duplication {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                spec.seed,
                &[trial as u64, 0, l as u64, d as u64],
            ));
            v.push(program_tiled(
                &layer.weights,
                spec.array,
                spec.device,
                &mut rng,
            )?);
        }
        copies.push(v);
    }
    let mut res = TrialResult {
        abs_err: vec![0.0; nl],
        counters: vec![PerfCounters::default(); nl],
        cycles: vec![0; nl],
        predictions: Vec::with_capacity(inputs.len()),
    };
    for (i, input) in inputs.iter().enumerate() {
        let mut act = input.clone();
        let mut out = Vec::new();
        for (l, layer) in network.layers.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                spec.seed,
                &[trial as u64, 1, l as u64, i as u64],
            ));
            let patches = layer.kind.patches(&act);
            let positions = patches.len();
            let (o, k) = (layer.kind.out_channels(), layer.kind.patch_len());
            let dup = copies[l].len();
            let mut per_copy = vec![PerfCounters::default(); dup];
            let mut acc = vec![0i64; o * positions];
            for (p, patch) in patches.iter().enumerate() {
                let d = p % dup;
                let got = copies[l][d].simulate(
                    patch,
                    &spec.policies[l],
                    spec.device,
                    &mut rng,
                    &mut per_copy[d],
                )?;
                let exact = matvec(layer.weights.values(), o, k, patch);
                for (c, (g, e)) in got.into_iter().zip(exact).enumerate() {
                    res.abs_err[l] += (g - e).unsigned_abs() as f64 / layer.divisor;
                    acc[c * positions + p] = g;
                }
            }
            let mut step = PerfCounters::default();
            for c in &per_copy {
                step.add_parallel(c);
            }
            step.energy_pj += (o * positions) as f64 * spec.array.energy.vector_op_pj;
            res.cycles[l] += step.cycles;
            res.counters[l].add_sequential(&step);
            out = layer.finish(&acc);
            act = out.iter().map(|&v| v as i32).collect();
        }
        res.predictions.push(argmax(&out));
    }
    Ok(res)
}

/// Run every input through the mapped network for `spec.trials` fresh
/// programmings of the chip.
pub fn simulate_network(
    network: &Network,
    inputs: &[Vec<i32>],
    labels: Option<&[usize]>,
    spec: &RunSpec,
) -> Result<SimReport> {
    network.validate()?;
    let nl = network.layers.len();
    if spec.mapping.len() != nl || spec.policies.len() != nl {
        return Err(Error::Shape(
            "one mapping and one policy per layer required".into(),
        ));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("no inputs".into()));
    }
    if spec.trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if let Some(l) = labels {
        if l.len() != inputs.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} inputs",
                l.len(),
                inputs.len()
            )));
        }
    }
    if let Some(v) = inputs.iter().find(|v| v.len() != network.input_len()) {
        return Err(Error::Shape(format!(
            "input of length {}, network expects {}",
            v.len(),
            network.input_len()
        )));
    }
    let reference: Vec<usize> = match labels {
        Some(l) => l.to_vec(),
        None => inputs
            .iter()
            .map(|v| network.reference(v).map(|r| argmax(&r.logits)))
            .collect::<Result<_>>()?,
    };

    let trials: Vec<TrialResult> = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_trial(network, inputs, spec, t))
        .collect::<Result<_>>()?;

    let n_in = inputs.len() as f64;
    let runs = n_in * spec.trials as f64;
    let mut layers = Vec::with_capacity(nl);
    for (l, layer) in network.layers.iter().enumerate() {
        let outputs = layer.kind.output_len() as f64 * n_in;
        let per_trial: Vec<f64> = trials.iter().map(|t| t.abs_err[l] / outputs).collect();
        let (mae, mae_ci) = mean_ci95(&per_trial);
        let mut total = PerfCounters::default();
        for t in &trials {
            total.add_sequential(&t.counters[l]);
        }
        layers.push(LayerReport {
            name: layer.name.clone(),
            duplication: spec.mapping[l].duplication,
            arrays: spec.mapping[l].arrays(),
            cycles: total.cycles as f64 / runs,
            adc_reads: total.adc_reads as f64 / runs,
            wordline_activations: total.wordline_activations as f64 / runs,
            stalls: total.stalls as f64 / runs,
            energy_pj: total.energy_pj / runs,
            mae,
            mae_ci,
        });
    }
    let hops: u64 = spec
        .mapping
        .windows(2)
        .map(|w| spec.chip.hops(w[0].last_pe, w[1].first_pe))
        .sum();
    let chip = ChipTotals {
        latency_cycles: layers.iter().map(|l| l.cycles).sum::<f64>()
            + (hops * spec.chip.hop_latency) as f64,
        throughput_cycles: layers.iter().map(|l| l.cycles).fold(0.0, f64::max),
        adc_reads: layers.iter().map(|l| l.adc_reads).sum(),
        energy_pj: layers.iter().map(|l| l.energy_pj).sum::<f64>()
            + hops as f64 * spec.array.energy.hop_pj,
        hops,
    };
    let correct: usize = trials
        .iter()
        .map(|t| {
            t.predictions
                .iter()
                .zip(&reference)
                .filter(|(a, b)| a == b)
                .count()
        })
        .sum();
    Ok(SimReport {
        network: network.name.clone(),
        policy: spec.policies.first().map_or("", |p| p.name()).to_string(),
        sigma: spec.device.sigma,
        threshold: None,
        trials: spec.trials,
        inputs: inputs.len(),
        layers,
        chip,
        accuracy_proxy: correct as f64 / runs,
        accuracy_kind: if labels.is_some() {
            "label_accuracy"
        } else {
            "reference_agreement"
        }
        .to_string(),
        predictions: trials[0].predictions.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crossbar::{program_tiled, RowConvention};
    use rand::Rng;

    fn dense(name: &str, inputs: usize, outputs: usize, relu: bool, seed: u64) -> Layer {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let w = (0..inputs * outputs)
            .map(|_| r.random_range(-40..=40))
            .collect();
        Layer {
            name: name.into(),
            kind: LayerKind::Dense { inputs, outputs },
            weights: QuantizedTensor::weights(outputs, inputs, w).unwrap(),
            bias: (0..outputs).map(|_| r.random_range(-500..=500)).collect(),
            divisor: 60.0,
            relu,
        }
    }

    fn tiny_cnn() -> Network {
        let mut r = ChaCha8Rng::seed_from_u64(4);
        let kind = LayerKind::Conv {
            in_ch: 2,
            in_h: 5,
            in_w: 5,
            kernel: 3,
            stride: 2,
            padding: 1,
            out_ch: 4,
        };
        let w = (0..4 * 18).map(|_| r.random_range(-60..=60)).collect();
        let conv = Layer {
            name: "conv".into(),
            kind,
            weights: QuantizedTensor::weights(4, 18, w).unwrap(),
            bias: vec![10, -5, 0, 3],
            divisor: 30.0,
            relu: true,
        };
        Network {
            name: "tiny".into(),
            layers: vec![conv, dense("fc", 36, 3, false, 5)],
        }
    }

    #[test]
    fn im2col_matches_direct_convolution() {
        let net = tiny_cnn();
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let input: Vec<i32> = (0..50).map(|_| r.random_range(0..=127)).collect();
        let layer = &net.layers[0];
        let acc = exact_layer(layer, &input);
        let w = layer.weights.values();
        for o in 0..4 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut s = 0i64;
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let y = (oy * 2 + ky) as i64 - 1;
                                let x = (ox * 2 + kx) as i64 - 1;
                                if (0..5).contains(&y) && (0..5).contains(&x) {
                                    let v = input[(c * 5 + y as usize) * 5 + x as usize] as i64;
                                    s += v * w[o * 18 + c * 9 + ky * 3 + kx] as i64;
                                }
                            }
                        }
                    }
                    assert_eq!(acc[o * 9 + oy * 3 + ox], s);
                }
            }
        }
    }

    #[test]
    fn requantize_rounds_and_clamps() {
        assert_eq!(requantize(-10, 2.0), 0);
        assert_eq!(requantize(5, 2.0), 3);
        assert_eq!(requantize(1_000_000, 2.0), 127);
        assert_eq!(requantize(7, 2.0), 4);
    }

    #[test]
    fn shape_errors() {
        let mut net = tiny_cnn();
        net.layers[1].kind = LayerKind::Dense {
            inputs: 35,
            outputs: 3,
        };
        assert!(net.validate().is_err());
        let net = tiny_cnn();
        assert!(net.reference(&[0; 49]).is_err());
    }

    fn one_tile_net(layers: usize) -> Network {
        Network {
            name: "fc".into(),
            layers: (0..layers)
                .map(|i| dense(&format!("fc{i}"), 16, 16, i + 1 < layers, i as u64))
                .collect(),
        }
    }

    #[test]
    fn mapping_examples() {
        let array = ArrayConfig::default();
        let chip = ChipConfig {
            pes: 1,
            arrays_per_pe: 4,
            hop_latency: 1,
        };
        let m = map_layers(&one_tile_net(1), &chip, &array).unwrap();
        assert_eq!(m[0].duplication, 4);

        let chip = ChipConfig {
            pes: 1,
            arrays_per_pe: 3,
            hop_latency: 1,
        };
        let m = map_layers(&one_tile_net(3), &chip, &array).unwrap();
        assert!(m.iter().all(|l| l.duplication == 1));

        // 2 layers of one array each, 8 spare arrays, workloads 3:1
        let chip = ChipConfig {
            pes: 1,
            arrays_per_pe: 10,
            hop_latency: 1,
        };
        let m = map_layers_weighted(&one_tile_net(2), &chip, &array, &[3.0, 1.0]).unwrap();
        assert_eq!((m[0].duplication - 1, m[1].duplication - 1), (6, 2));
        assert_eq!(m[1].first_array, 7);

        let chip = ChipConfig {
            pes: 1,
            arrays_per_pe: 2,
            hop_latency: 1,
        };
        assert!(matches!(
            map_layers(&one_tile_net(3), &chip, &array),
            Err(Error::InsufficientArrays {
                needed: 3,
                available: 2
            })
        ));
    }

    #[test]
    fn mapping_copies_are_disjoint() {
        let net = tiny_cnn();
        let chip = ChipConfig {
            pes: 2,
            arrays_per_pe: 5,
            hop_latency: 1,
        };
        let m = map_layers(&net, &chip, &ArrayConfig::default()).unwrap();
        let used: usize = m.iter().map(|l| l.arrays()).sum();
        assert!(used <= 10);
        for w in m.windows(2) {
            assert_eq!(w[0].first_array + w[0].arrays(), w[1].first_array);
        }
    }

    fn spec_parts(sigma: f64) -> (DeviceParams, ArrayConfig, ChipConfig) {
        (
            DeviceParams::new(sigma, 3, 16).unwrap(),
            ArrayConfig {
                convention: RowConvention::Resolvable,
                ..ArrayConfig::default()
            },
            ChipConfig {
                pes: 1,
                arrays_per_pe: 4,
                hop_latency: 2,
            },
        )
    }

    #[test]
    fn noiseless_network_is_exact() {
        let net = tiny_cnn();
        let (dev, array, chip) = spec_parts(0.0);
        let mapping = map_layers(&net, &chip, &array).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let inputs: Vec<Vec<i32>> = (0..5)
            .map(|_| (0..50).map(|_| r.random_range(0..=127)).collect())
            .collect();
        for policy in [Policy::Baseline, Policy::ZeroSkip] {
            let policies = vec![policy; 2];
            let spec = RunSpec {
                device: &dev,
                array: &array,
                chip: &chip,
                mapping: &mapping,
                policies: &policies,
                trials: 2,
                seed: 1,
            };
            let rep = simulate_network(&net, &inputs, None, &spec).unwrap();
            assert!(rep.layers.iter().all(|l| l.mae == 0.0));
            assert_eq!(rep.accuracy_proxy, 1.0);
            let expected: Vec<usize> = inputs
                .iter()
                .map(|v| argmax(&net.reference(v).unwrap().logits))
                .collect();
            assert_eq!(rep.predictions, expected);
        }
    }

    #[test]
    fn single_layer_report_matches_crossbar_counters() {
        let net = Network {
            name: "fc".into(),
            layers: vec![dense("fc", 100, 12, false, 9)],
        };
        let (dev, array, _) = spec_parts(0.1);
        let chip = ChipConfig {
            pes: 1,
            arrays_per_pe: 1,
            hop_latency: 2,
        };
        let mapping = map_layers(&net, &chip, &array).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(3);
        let inputs: Vec<Vec<i32>> = (0..3)
            .map(|_| (0..100).map(|_| r.random_range(0..=127)).collect())
            .collect();
        let policies = vec![Policy::ZeroSkip];
        let spec = RunSpec {
            device: &dev,
            array: &array,
            chip: &chip,
            mapping: &mapping,
            policies: &policies,
            trials: 1,
            seed: 8,
        };
        let rep = simulate_network(&net, &inputs, None, &spec).unwrap();

        let mut prog = ChaCha8Rng::seed_from_u64(derive_seed(8, &[0, 0, 0, 0]));
        let tiled = program_tiled(&net.layers[0].weights, &array, &dev, &mut prog).unwrap();
        let mut total = PerfCounters::default();
        for (i, v) in inputs.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(8, &[0, 1, 0, i as u64]));
            tiled
                .simulate(v, &policies[0], &dev, &mut rng, &mut total)
                .unwrap();
        }
        let l = &rep.layers[0];
        assert_eq!(l.cycles, total.cycles as f64 / 3.0);
        assert_eq!(l.adc_reads, total.adc_reads as f64 / 3.0);
        let vector = 12.0 * array.energy.vector_op_pj;
        assert!((l.energy_pj - (total.energy_pj / 3.0 + vector)).abs() < 1e-9);
        assert_eq!(rep.chip.adc_reads, l.adc_reads);
        assert_eq!(rep.chip.hops, 0);
    }

    #[test]
    fn duplication_never_slows_a_layer() {
        let net = tiny_cnn();
        let (dev, array, _) = spec_parts(0.0);
        let mut r = ChaCha8Rng::seed_from_u64(6);
        let inputs: Vec<Vec<i32>> = (0..2)
            .map(|_| (0..50).map(|_| r.random_range(0..=127)).collect())
            .collect();
        let policies = vec![Policy::ZeroSkip; 2];
        let mut cycles = Vec::new();
        for arrays in [2, 6] {
            let chip = ChipConfig {
                pes: 1,
                arrays_per_pe: arrays,
                hop_latency: 1,
            };
            let mapping = map_layers(&net, &chip, &array).unwrap();
            let spec = RunSpec {
                device: &dev,
                array: &array,
                chip: &chip,
                mapping: &mapping,
                policies: &policies,
                trials: 1,
                seed: 0,
            };
            let rep = simulate_network(&net, &inputs, None, &spec).unwrap();
            assert!(rep.chip.throughput_cycles <= rep.chip.latency_cycles);
            cycles.push(rep.layers[0].cycles);
        }
        assert!(cycles[1] < cycles[0]);
    }

    #[test]
    fn report_serializes() {
        let net = one_tile_net(2);
        let (dev, array, chip) = spec_parts(0.05);
        let mapping = map_layers(&net, &chip, &array).unwrap();
        let policies = vec![Policy::ZeroSkip; 2];
        let spec = RunSpec {
            device: &dev,
            array: &array,
            chip: &chip,
            mapping: &mapping,
            policies: &policies,
            trials: 2,
            seed: 3,
        };
        let inputs = vec![vec![5; 16], vec![100; 16]];
        let rep = simulate_network(&net, &inputs, Some(&[0, 1]), &spec).unwrap();
        let json = serde_json::to_string(&rep).unwrap();
        let back: SimReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, rep);
        assert_eq!(rep.accuracy_kind, "label_accuracy");
    }
}
