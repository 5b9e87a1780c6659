//! Bundled desk-scale workloads and the on-disk network manifest.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::archsim::{exact_layer, Layer, LayerKind, Network, ACT_MAX};
use crate::bitplane::{quantize_affine, QuantizedTensor};
use crate::error::{Error, Result};
use crate::qtsr;

/// A network plus the inputs used to profile it and to evaluate it.
#[derive(Debug, Clone)]
pub struct Workload {
    pub network: Network,
    pub calibration: Vec<Vec<i32>>,
    pub inputs: Vec<Vec<i32>>,
    pub labels: Option<Vec<usize>>,
}

/// Sparse 7-bit image: one bright blob on a dark background, with
/// log-normal pixel values.
fn synthetic_image(rng: &mut ChaCha8Rng, channels: usize, side: usize) -> Vec<i32> {
    let ln: Normal<f64> = Normal::new(2.0, 1.0).unwrap();
    let cy = rng.random_range(0..side) as f64;
    let cx = rng.random_range(0..side) as f64;
    let mut v = vec![0; channels * side * side];
    for c in 0..channels {
        for y in 0..side {
            for x in 0..side {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                if rng.random_bool(0.8 * (-d2 / 4.0).exp()) {
                    v[(c * side + y) * side + x] =
                        (ln.sample(rng).exp().floor() as i64).clamp(0, ACT_MAX) as i32;
                }
            }
        }
    }
    v
}

/// Pruned weights with uniform magnitudes: `keep` of the entries survive
/// and `positive` of the survivors are positive.
fn synthetic_weights(
    rng: &mut ChaCha8Rng,
    outs: usize,
    ins: usize,
    keep: f64,
    positive: f64,
) -> Result<QuantizedTensor> {
    let real: Vec<f64> = (0..outs * ins)
        .map(|_| {
            if rng.random_bool(keep) {
                let m = rng.random_range(0.05..1.0);
                if rng.random_bool(positive) {
                    m
                } else {
                    -m
                }
            } else {
                0.0
            }
        })
        .collect();
    quantize_affine(&real, vec![outs, ins], 8, true)
}

/// Set each layer's divisor so the largest calibration output maps to 127.
pub fn calibrate(layers: &mut [Layer], calibration: &[Vec<i32>]) -> Result<()> {
    let mut acts: Vec<Vec<i32>> = calibration.to_vec();
    for layer in layers.iter_mut() {
        let positions = layer.kind.patches_per_input();
        let mut peak = 0i64;
        let accs: Vec<Vec<i64>> = acts.iter().map(|a| exact_layer(layer, a)).collect();
        for acc in &accs {
            for (i, &a) in acc.iter().enumerate() {
                let v = a + layer.bias[i / positions];
                peak = peak.max(if layer.relu { v } else { v.abs() });
            }
        }
        layer.divisor = (peak.max(1) as f64 / ACT_MAX as f64).max(1.0);
        acts = accs
            .iter()
            .map(|acc| layer.finish(acc).into_iter().map(|v| v as i32).collect())
            .collect();
    }
    Ok(())
}

/// Binary image: in every channel, the same disc of saturated pixels (each
/// kept with probability 0.9) on an empty background.
fn blob_image(rng: &mut ChaCha8Rng, channels: usize, side: usize, radius: f64) -> Vec<i32> {
    let cy = rng.random_range(0.0..side as f64);
    let cx = rng.random_range(0.0..side as f64);
    let mut v = vec![0; channels * side * side];
    for c in 0..channels {
        for y in 0..side {
            for x in 0..side {
                let d2 = (y as f64 - cy).powi(2) + (x as f64 - cx).powi(2);
                if d2 <= radius * radius && rng.random_bool(0.9) {
                    v[(c * side + y) * side + x] = ACT_MAX as i32;
                }
            }
        }
    }
    v
}

/// Fixed-seed 4-layer CNN on binary `[2, 16, 16]` inputs:
/// conv 2->16 (2x2), conv 16->16 stride 2, conv 16->32 stride 2, dense 512->10.
///
/// Hidden layers get a negative bias of a fixed fraction of their output
/// range, which keeps the activations they pass on sparse.
pub fn synthetic_cnn(seed: u64, calibration: usize, inputs: usize) -> Result<Workload> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let conv = |in_ch, in_h, kernel, stride, padding, out_ch| LayerKind::Conv {
        in_ch,
        in_h,
        in_w: in_h,
        kernel,
        stride,
        padding,
        out_ch,
    };
    // (name, shape, kept weights, positive fraction, bias as a fraction of the output range)
    let side = 16;
    let plan = [
        ("conv1", conv(2, side, 2, 1, 0, 16), 1.0, 1.0, 0.55),
        ("conv2", conv(16, 15, 3, 2, 1, 16), 0.3, 0.95, 0.4),
        ("conv3", conv(16, 8, 3, 2, 1, 32), 0.3, 0.95, 0.5),
        (
            "fc",
            LayerKind::Dense {
                inputs: 512,
                outputs: 10,
            },
            1.0,
            0.95,
            0.0,
        ),
    ];
    let mut layers = Vec::with_capacity(plan.len());
    for (i, (name, kind, keep, positive, _)) in plan.iter().enumerate() {
        let weights = synthetic_weights(
            &mut rng,
            kind.out_channels(),
            kind.patch_len(),
            *keep,
            *positive,
        )?;
        layers.push(Layer {
            name: name.to_string(),
            bias: vec![0; kind.out_channels()],
            kind: kind.clone(),
            weights,
            divisor: 1.0,
            relu: i + 1 < plan.len(),
        });
    }
    let calib: Vec<Vec<i32>> = (0..calibration)
        .map(|_| blob_image(&mut rng, 2, side, 2.5))
        .collect();
    let eval: Vec<Vec<i32>> = (0..inputs)
        .map(|_| blob_image(&mut rng, 2, side, 2.5))
        .collect();
    calibrate(&mut layers, &calib)?;
    for (i, (_, _, _, _, frac)) in plan.iter().enumerate() {
        if *frac > 0.0 {
            let b = -(frac * layers[i].divisor * ACT_MAX as f64).round() as i64;
            layers[i].bias = vec![b; layers[i].kind.out_channels()];
            calibrate(&mut layers, &calib)?;
        }
    }
    let network = Network {
        name: "synthetic_cnn".into(),
        layers,
    };
    network.validate()?;
    Ok(Workload {
        network,
        calibration: calib,
        inputs: eval,
        labels: None,
    })
}

/// Fixed-seed single layer with 128 input rows and 16 outputs, plus a
/// stream of activation vectors.
pub fn synthetic_layer(seed: u64, vectors: usize) -> Result<(QuantizedTensor, Vec<Vec<i32>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = synthetic_weights(&mut rng, 16, 128, 0.5, 0.8)?;
    let stream = (0..vectors)
        .map(|_| synthetic_image(&mut rng, 2, 8))
        .collect();
    Ok((w, stream))
}

/// TOML description of a network stored as QTSR tensors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub name: String,
    /// `[N, features]` unsigned inputs.
    pub inputs: PathBuf,
    /// `[N]` unsigned class labels.
    #[serde(default)]
    pub labels: Option<PathBuf>,
    /// Inputs used for profiling; defaults to the first `calibration_count`
    /// inputs.
    #[serde(default)]
    pub calibration: Option<PathBuf>,
    #[serde(default = "Manifest::default_calibration_count")]
    pub calibration_count: usize,
    pub layers: Vec<ManifestLayer>,
}

impl Manifest {
    fn default_calibration_count() -> usize {
        64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestLayer {
    pub name: String,
    pub kind: LayerKind,
    /// `[out, patch_len]` signed weights.
    pub weights: PathBuf,
    /// Integer biases in accumulator units.
    pub bias: Vec<i64>,
    pub divisor: f64,
    pub relu: bool,
}

fn rows_of(t: &QuantizedTensor, what: &Path) -> Result<Vec<Vec<i32>>> {
    match t.dims() {
        [n, f] => Ok((0..*n)
            .map(|i| t.values()[i * f..(i + 1) * f].to_vec())
            .collect()),
        d => Err(Error::Shape(format!(
            "{}: expected [N, features], got {d:?}",
            what.display()
        ))),
    }
}

/// Load a manifest; relative paths resolve against its directory.
pub fn load_manifest(path: &Path) -> Result<Workload> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: Manifest =
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |p: &Path| {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    let mut layers = Vec::with_capacity(m.layers.len());
    for l in &m.layers {
        let weights = qtsr::read(&resolve(&l.weights))?;
        layers.push(Layer {
            name: l.name.clone(),
            kind: l.kind.clone(),
            weights,
            bias: l.bias.clone(),
            divisor: l.divisor,
            relu: l.relu,
        });
    }
    let network = Network {
        name: m.name.clone(),
        layers,
    };
    network.validate()?;

    let input_path = resolve(&m.inputs);
    let inputs = rows_of(&qtsr::read(&input_path)?, &input_path)?;
    let labels = match &m.labels {
        Some(p) => {
            let t = qtsr::read(&resolve(p))?;
            Some(t.values().iter().map(|&v| v as usize).collect::<Vec<_>>())
        }
        None => None,
    };
    if let Some(l) = &labels {
        if l.len() != inputs.len() {
            return Err(Error::Shape(format!(
                "{} labels for {} inputs",
                l.len(),
                inputs.len()
            )));
        }
    }
    let calibration = match &m.calibration {
        Some(p) => {
            let p = resolve(p);
            rows_of(&qtsr::read(&p)?, &p)?
        }
        None => inputs.iter().take(m.calibration_count).cloned().collect(),
    };
    Ok(Workload {
        network,
        calibration,
        inputs,
        labels,
    })
}
