//! Simulator and scheduler for bit-serial vector-matrix multiplication on
//! RRAM crossbars with noisy cells and low-resolution ADCs.

pub mod archsim;
pub mod bitplane;
pub mod cli;
pub mod crossbar;
pub mod device;
pub mod error;
pub mod errormodel;
pub mod optimizer;
pub mod pipeline;
pub mod profiler;
pub mod qtsr;
pub mod seed;
pub mod workload;

pub use bitplane::{quantize_affine, reference_vmm, slice_bits, BitPlane, QuantizedTensor};
pub use crossbar::{program_array, simulate_vmm, ArrayConfig, CrossbarArray, PerfCounters, Policy};
pub use device::{adc_quantize, readout_probability, sample_bitline, DeviceParams};
pub use error::{Error, Result};
pub use errormodel::{expected_read_error, expected_vmm_error, monte_carlo_mae};
pub use optimizer::{
    brute_force_lut, build_tradeoff_table, optimize_lut, TradeoffTable, WordlineLut,
};
pub use profiler::{profile_pmfs, LayerProfile, ReadoutPmf};
