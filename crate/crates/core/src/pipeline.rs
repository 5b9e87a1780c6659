//! Profile, tabulate and optimize a whole network.

use rayon::prelude::*;

use crate::archsim::Network;
use crate::device::DeviceParams;
use crate::error::Result;
use crate::optimizer::{
    build_tradeoff_table, optimize_lut_with, SolverKind, TradeoffTable, WordlineLut,
};
use crate::profiler::{profile_layer, LayerProfile, ProfileGrouping};

/// Lowered input vectors of every layer over noiseless runs of `inputs`.
pub fn layer_streams(network: &Network, inputs: &[Vec<i32>]) -> Result<Vec<Vec<Vec<i32>>>> {
    let mut streams = vec![Vec::new(); network.layers.len()];
    for input in inputs {
        let run = network.reference(input)?;
        for ((stream, layer), act) in streams.iter_mut().zip(&network.layers).zip(&run.inputs) {
            stream.extend(layer.kind.patches(act));
        }
    }
    Ok(streams)
}

pub fn profile_network(
    network: &Network,
    calibration: &[Vec<i32>],
    n_max: usize,
    grouping: ProfileGrouping,
    array_rows: usize,
) -> Result<Vec<LayerProfile>> {
    let streams = layer_streams(network, calibration)?;
    network
        .layers
        .par_iter()
        .zip(streams.par_iter())
        .enumerate()
        .map(|(i, (layer, stream))| {
            profile_layer(i, &layer.weights, stream, n_max, grouping, array_rows)
        })
        .collect()
}

/// One trade-off table per layer, errors in that layer's output units.
pub fn layer_tables(
    network: &Network,
    profiles: &[LayerProfile],
    device: &DeviceParams,
) -> Result<Vec<TradeoffTable>> {
    network
        .layers
        .par_iter()
        .zip(profiles.par_iter())
        .map(|(layer, profile)| build_tradeoff_table(profile, device, layer.divisor))
        .collect()
}

/// The same threshold applied to every layer.
pub fn plan_luts(
    tables: &[TradeoffTable],
    threshold: f64,
    group_factor: usize,
    solver: SolverKind,
) -> Vec<Result<WordlineLut>> {
    tables
        .par_iter()
        .map(|t| optimize_lut_with(t, threshold, group_factor, solver))
        .collect()
}
