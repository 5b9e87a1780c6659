//! RRAM cell statistics and the bitline ADC.
//!
//! Conductances are normalized so one LRS cell contributes one ADC count on
//! average; `sigma` is the coefficient of variation of that conductance, so
//! `n` active LRS cells sum to `Normal(n, sigma * sqrt(n))`.

use libm::erfc;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceParams {
    pub sigma: f64,
    /// LRS/HRS conductance ratio; `None` means HRS cells carry no current.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hrs_ratio: Option<f64>,
    pub adc_bits: u32,
    pub max_wordlines: usize,
    #[serde(default)]
    pub resample_per_read: bool,
}

impl DeviceParams {
    pub fn new(sigma: f64, adc_bits: u32, max_wordlines: usize) -> Result<Self> {
        let p = Self {
            sigma,
            hrs_ratio: None,
            adc_bits,
            max_wordlines,
            resample_per_read: false,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn with_sigma(&self, sigma: f64) -> Self {
        Self {
            sigma,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "sigma must be >= 0, got {}",
                self.sigma
            )));
        }
        if !(1..=16).contains(&self.adc_bits) {
            return Err(Error::InvalidArgument(format!(
                "adc_bits must be in 1..=16, got {}",
                self.adc_bits
            )));
        }
        if self.max_wordlines < self.resolvable_levels() as usize {
            return Err(Error::InvalidArgument(format!(
                "max_wordlines {} is below the {} nonzero levels a {}-bit ADC resolves",
                self.max_wordlines,
                self.resolvable_levels(),
                self.adc_bits
            )));
        }
        if let Some(r) = self.hrs_ratio {
            if !(r > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "hrs_ratio must be positive, got {r}"
                )));
            }
        }
        Ok(())
    }

    /// Nonzero levels the ADC distinguishes: `2^adc_bits - 1`.
    pub fn resolvable_levels(&self) -> u32 {
        (1u32 << self.adc_bits) - 1
    }

    /// Normalized HRS current per off cell.
    pub fn hrs_current(&self) -> f64 {
        self.hrs_ratio.map_or(0.0, |r| 1.0 / r)
    }

    /// Bits per LUT entry: `ceil(log2(max_wordlines))`.
    pub fn lut_field_bits(&self) -> u32 {
        usize::BITS - (self.max_wordlines - 1).leading_zeros()
    }
}

/// Standard normal CDF.
pub fn phi(x: f64) -> f64 {
    if x == f64::INFINITY {
        1.0
    } else if x == f64::NEG_INFINITY {
        0.0
    } else {
        0.5 * erfc(-x / std::f64::consts::SQRT_2)
    }
}

/// `P(lo <= Z < hi)` for standard normal `Z`, computed on the short tail.
fn normal_interval(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo >= 0.0 {
        phi(-lo) - phi(-hi)
    } else {
        phi(hi) - phi(lo)
    }
}

/// Misread probability `P(n_hat | n)` over codes `0..=max_level`.
///
/// Interior codes integrate `Normal(n, sigma*sqrt(n))` over
/// `[n_hat - 0.5, n_hat + 0.5)`; codes `0` and `max_level` absorb the tails.
pub fn readout_probability(n_hat: usize, n: usize, sigma: f64, max_level: usize) -> Result<f64> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if n_hat > max_level {
        return Ok(0.0);
    }
    if n == 0 || sigma == 0.0 {
        let expected = n.min(max_level);
        return Ok(if n_hat == expected { 1.0 } else { 0.0 });
    }
    let sd = sigma * (n as f64).sqrt();
    let lo = if n_hat == 0 {
        f64::NEG_INFINITY
    } else {
        (n_hat as f64 - n as f64 - 0.5) / sd
    };
    let hi = if n_hat == max_level {
        f64::INFINITY
    } else {
        (n_hat as f64 - n as f64 + 0.5) / sd
    };
    Ok(normal_interval(lo, hi))
}

/// Bitline ADC for a read that enables `rows_enabled` wordlines.
///
/// Up to `2^bits - 1` rows the ADC resolves every count. Beyond that the
/// range `[0, rows]` is split into `2^bits` uniform codes and each code is
/// reported back as the nearest integer count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdcQuantizer {
    adc_bits: u32,
    rows: u32,
}

impl AdcQuantizer {
    pub fn new(adc_bits: u32, rows_enabled: usize) -> Self {
        Self {
            adc_bits,
            rows: rows_enabled.max(1) as u32,
        }
    }

    fn steps(&self) -> u32 {
        (1u32 << self.adc_bits) - 1
    }

    pub fn full_resolution(&self) -> bool {
        self.rows <= self.steps()
    }

    /// Number of distinct output codes.
    pub fn codes(&self) -> usize {
        if self.full_resolution() {
            self.rows as usize + 1
        } else {
            self.steps() as usize + 1
        }
    }

    /// Count reported for code index `k`.
    pub fn code_value(&self, k: usize) -> u32 {
        if self.full_resolution() {
            k as u32
        } else {
            round_half_up(k as f64 * self.rows as f64 / self.steps() as f64) as u32
        }
    }

    /// Lower analog edge of code `k` (`-inf` for code 0).
    pub fn lower_edge(&self, k: usize) -> f64 {
        if k == 0 {
            f64::NEG_INFINITY
        } else if k >= self.codes() {
            f64::INFINITY
        } else if self.full_resolution() {
            k as f64 - 0.5
        } else {
            (k as f64 - 0.5) * self.rows as f64 / self.steps() as f64
        }
    }

    pub fn code_index(&self, level: f64) -> usize {
        let top = self.codes() - 1;
        let scaled = if self.full_resolution() {
            level
        } else {
            level * self.steps() as f64 / self.rows as f64
        };
        let k = round_half_up(scaled);
        if k <= 0.0 {
            0
        } else {
            (k as usize).min(top)
        }
    }

    pub fn quantize(&self, level: f64) -> u32 {
        self.code_value(self.code_index(level))
    }

    /// Distribution of reported counts for `n` active LRS cells, as
    /// `(reported, probability)` over every code.
    pub fn code_distribution(&self, n: usize, sigma: f64) -> Vec<(u32, f64)> {
        let codes = self.codes();
        if n == 0 || sigma == 0.0 {
            let k = self.code_index(n as f64);
            return (0..codes)
                .map(|c| (self.code_value(c), if c == k { 1.0 } else { 0.0 }))
                .collect();
        }
        let sd = sigma * (n as f64).sqrt();
        (0..codes)
            .map(|c| {
                let lo = (self.lower_edge(c) - n as f64) / sd;
                let hi = (self.lower_edge(c + 1) - n as f64) / sd;
                (self.code_value(c), normal_interval(lo, hi))
            })
            .collect()
    }

    /// `E|reported - n|` for a single read of `n` active LRS cells.
    pub fn expected_misread(&self, n: usize, sigma: f64) -> f64 {
        self.code_distribution(n, sigma)
            .into_iter()
            .map(|(v, p)| p * (v as f64 - n as f64).abs())
            .sum()
    }
}

#[inline]
fn round_half_up(x: f64) -> f64 {
    (x + 0.5).floor()
}

/// Quantize an analog bitline level to a count.
pub fn adc_quantize(analog_level: f64, adc_bits: u32, rows_enabled: usize) -> u32 {
    AdcQuantizer::new(adc_bits, rows_enabled).quantize(analog_level)
}

/// Conductance of one programmed cell.
pub fn sample_cell<R: Rng + ?Sized>(bit: u8, params: &DeviceParams, rng: &mut R) -> f64 {
    if bit == 0 {
        params.hrs_current()
    } else {
        let z: f64 = rng.sample(StandardNormal);
        1.0 + params.sigma * z
    }
}

/// Analog level from `n_on` freshly sampled LRS cells and `n_off` HRS cells.
pub fn sample_bitline<R: Rng + ?Sized>(
    n_on: usize,
    n_off: usize,
    params: &DeviceParams,
    rng: &mut R,
) -> f64 {
    let on: f64 = (0..n_on).map(|_| sample_cell(1, params, rng)).sum();
    on + n_off as f64 * params.hrs_current()
}
