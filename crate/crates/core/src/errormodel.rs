//! Analytic read and VMM error, and the Monte-Carlo check against it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bitplane::{matvec, plane_magnitude, QuantizedTensor, PLANES};
use crate::crossbar::{program_tiled, ArrayConfig, PerfCounters, Policy};
use crate::device::{sample_bitline, AdcQuantizer, DeviceParams};
use crate::error::{Error, Result};
use crate::optimizer::WordlineLut;
use crate::profiler::{LayerProfile, ReadoutPmf};
use crate::seed::derive_seed;

/// Expected `|N_hat - N|` of one ADC read whose true count follows `pmf`.
pub fn expected_read_error(pmf: &ReadoutPmf, sigma: f64, adc_bits: u32) -> Result<f64> {
    expected_read_error_probs(&pmf.probabilities(), sigma, adc_bits)
}

/// As [`expected_read_error`] for a probability vector over `N = 0..=n_wl`.
pub fn expected_read_error_probs(probs: &[f64], sigma: f64, adc_bits: u32) -> Result<f64> {
    if probs.is_empty() {
        return Err(Error::InvalidArgument("empty PMF".into()));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    let sum: f64 = probs.iter().sum();
    if probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "PMF is not normalized (sums to {sum})"
        )));
    }
    let adc = AdcQuantizer::new(adc_bits, probs.len() - 1);
    Ok(probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p > 0.0)
        .map(|(n, &p)| p * adc.expected_misread(n, sigma))
        .sum())
}

/// Draw `samples` reads from `probs` through the bitline and ADC models and
/// return the mean `|N_hat - N|`.
pub fn sampled_read_error<R: Rng + ?Sized>(
    probs: &[f64],
    device: &DeviceParams,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let n_wl = probs.len() - 1;
    let adc = AdcQuantizer::new(device.adc_bits, n_wl);
    let cdf: Vec<f64> = probs
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    let mut total = 0.0;
    for _ in 0..samples {
        let u: f64 = rng.random::<f64>() * cdf[n_wl];
        let n = cdf.partition_point(|&c| c <= u).min(n_wl);
        let level = sample_bitline(n, n_wl - n, device, rng);
        total += (adc.quantize(level) as f64 - n as f64).abs();
    }
    total / samples as f64
}

/// One sub-operation's share of the VMM error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTerm {
    pub x_bit: usize,
    pub w_bit: usize,
    pub n_wl: usize,
    /// Expected error of one read.
    pub read_error: f64,
    /// ADC reads per output element.
    pub reads: f64,
}

impl PairTerm {
    /// Reads from a cell count: `n_tot / n_wl`.
    pub fn from_cells(
        x_bit: usize,
        w_bit: usize,
        read_error: f64,
        n_tot: f64,
        n_wl: usize,
    ) -> Self {
        Self {
            x_bit,
            w_bit,
            n_wl,
            read_error,
            reads: n_tot / n_wl as f64,
        }
    }

    pub fn magnitude(&self) -> f64 {
        (plane_magnitude(self.x_bit, false) * plane_magnitude(self.w_bit, true)).unsigned_abs()
            as f64
    }

    pub fn contribution(&self) -> f64 {
        self.magnitude() * self.reads * self.read_error
    }
}

/// Upper bound on mean absolute VMM error per output element: read errors
/// added linearly with their plane magnitudes. Divided by `quant_scale`
/// when given.
pub fn expected_vmm_error(
    terms: &[PairTerm],
    n_max: usize,
    quant_scale: Option<f64>,
) -> Result<f64> {
    if let Some(t) = terms.iter().find(|t| t.n_wl == 0 || t.n_wl > n_max) {
        return Err(Error::InvalidArgument(format!(
            "n_wl {} outside 1..={n_max}",
            t.n_wl
        )));
    }
    if let Some(s) = quant_scale {
        if !(s > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "quant_scale must be positive, got {s}"
            )));
        }
    }
    let raw: f64 = terms.iter().map(PairTerm::contribution).sum();
    Ok(raw / quant_scale.unwrap_or(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimate {
    /// `E(eps | x, w)` at the chosen wordline count.
    pub per_pair: [[f64; PLANES]; PLANES],
    /// Reads per output element.
    pub reads: [[f64; PLANES]; PLANES],
    pub n_wl_used: [[usize; PLANES]; PLANES],
    pub vmm_mae: f64,
}

impl ErrorEstimate {
    pub fn contribution(&self, x: usize, w: usize) -> f64 {
        let mag = (plane_magnitude(x, false) * plane_magnitude(w, true)).unsigned_abs() as f64;
        mag * self.reads[x][w] * self.per_pair[x][w]
    }
}

/// Analytic MAE of a profiled layer under one wordline table.
pub fn estimate_layer(
    profile: &LayerProfile,
    device: &DeviceParams,
    lut: &WordlineLut,
    quant_scale: Option<f64>,
) -> Result<ErrorEstimate> {
    let mut est = ErrorEstimate {
        per_pair: [[0.0; PLANES]; PLANES],
        reads: [[0.0; PLANES]; PLANES],
        n_wl_used: lut.choice,
        vmm_mae: 0.0,
    };
    let mut terms = Vec::with_capacity(PLANES * PLANES);
    for x in 0..PLANES {
        for w in 0..PLANES {
            let n = lut.get(x, w);
            let reads = profile.reads_per_column(x, w, n)?;
            let e = expected_read_error(profile.pmf_of(x, w, n)?, device.sigma, device.adc_bits)?;
            est.per_pair[x][w] = e;
            est.reads[x][w] = reads;
            terms.push(PairTerm {
                x_bit: x,
                w_bit: w,
                n_wl: n,
                read_error: e,
                reads,
            });
        }
    }
    est.vmm_mae = expected_vmm_error(&terms, profile.n_max, quant_scale)?;
    Ok(est)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloMae {
    pub mean: f64,
    /// Half-width of the normal 95% interval on `mean`.
    pub ci95: f64,
    pub per_trial: Vec<f64>,
    /// Counters of the first trial.
    pub counters: PerfCounters,
}

/// Empirical MAE per output element of one layer: each trial programs fresh
/// arrays and runs every vector of `stream`.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo_mae(
    weights: &QuantizedTensor,
    stream: &[Vec<i32>],
    device: &DeviceParams,
    policy: &Policy,
    config: &ArrayConfig,
    trials: usize,
    seed: u64,
    quant_scale: Option<f64>,
) -> Result<MonteCarloMae> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be at least 1".into()));
    }
    if stream.is_empty() {
        return Err(Error::InvalidArgument("activation stream is empty".into()));
    }
    let (outs, ins) = match weights.dims() {
        [o, i] => (*o, *i),
        d => return Err(Error::Shape(format!("weights must be rank 2, got {d:?}"))),
    };
    let scale = quant_scale.unwrap_or(1.0);
    let exact: Vec<Vec<i64>> = stream
        .iter()
        .map(|v| matvec(weights.values(), outs, ins, v))
        .collect();
    let results: Vec<(f64, PerfCounters)> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<(f64, PerfCounters)> {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[t as u64]));
            let layer = program_tiled(weights, config, device, &mut rng)?;
            let mut counters = PerfCounters::default();
            let mut abs = 0i64;
            for (v, y) in stream.iter().zip(&exact) {
                let got = layer.simulate(v, policy, device, &mut rng, &mut counters)?;
                abs += got.iter().zip(y).map(|(a, b)| (a - b).abs()).sum::<i64>();
            }
            Ok((abs as f64 / (stream.len() * outs) as f64 / scale, counters))
        })
        .collect::<Result<_>>()?;
    let per_trial: Vec<f64> = results.iter().map(|r| r.0).collect();
    let (mean, ci95) = mean_ci95(&per_trial);
    Ok(MonteCarloMae {
        mean,
        ci95,
        per_trial,
        counters: results[0].1.clone(),
    })
}

/// Mean and 95% half-width (`1.96 * s / sqrt(n)`, 0 for one sample).
pub fn mean_ci95(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, 1.96 * (var / n).sqrt())
}
