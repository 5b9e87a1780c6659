//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero if any of them fails.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use cardsim::archsim::{map_layers, simulate_network, ChipConfig, RunSpec, SimReport};
use cardsim::bitplane::{reference_vmm, QuantizedTensor};
use cardsim::cli::{write_summary, Experiment, ExperimentConfig};
use cardsim::crossbar::{program_array, simulate_vmm, ArrayConfig, Policy, RowConvention};
use cardsim::device::{readout_probability, DeviceParams};
use cardsim::errormodel::{
    estimate_layer, expected_read_error_probs, monte_carlo_mae, sampled_read_error,
};
use cardsim::optimizer::{
    brute_force_lut, optimize_lut, Item, Mckp, SolverKind, TradeoffEntry, TradeoffTable,
    WordlineLut,
};
use cardsim::pipeline::{layer_tables, plan_luts, profile_network};
use cardsim::profiler::{profile_layer, ProfileGrouping};
use cardsim::workload::{load_manifest, synthetic_cnn, synthetic_layer, Workload};

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
        }
    }
}

fn binomial(n: usize, p: f64) -> Vec<f64> {
    let mut out = vec![0.0; n + 1];
    let mut c = 1.0;
    for (k, slot) in out.iter_mut().enumerate() {
        *slot = c * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    out
}

fn readout_sums() -> Outcome {
    let mut worst = 0.0f64;
    for sigma in [0.01, 0.05, 0.1, 0.2, 0.35] {
        for n in 0..=16 {
            let s: f64 = (0..=16)
                .map(|k| readout_probability(k, n, sigma, 16).unwrap())
                .sum();
            worst = worst.max((s - 1.0).abs());
        }
    }
    Outcome::new(
        worst <= 1e-9,
        format!("85 (n, sigma) cases, max |sum - 1| = {worst:.1e}"),
    )
}

fn read_error_vs_sampling() -> Outcome {
    let uniform12 = vec![1.0 / 13.0; 13];
    let pmfs: Vec<(&str, Vec<f64>, Vec<f64>)> = vec![
        (
            "Bin(8,0.5)",
            binomial(8, 0.5),
            vec![0.1, 0.15, 0.2, 0.3, 0.35],
        ),
        (
            "Bin(16,0.3)",
            binomial(16, 0.3),
            vec![0.1, 0.15, 0.2, 0.3, 0.35],
        ),
        ("U(0..12)", uniform12, vec![0.1, 0.2, 0.35]),
        ("Bin(7,0.6)", binomial(7, 0.6), vec![0.2, 0.3, 0.35]),
        ("Bin(4,0.5)", binomial(4, 0.5), vec![0.2, 0.25, 0.3, 0.35]),
    ];
    let cases: Vec<(usize, &str, &[f64], f64)> = pmfs
        .iter()
        .flat_map(|(name, p, sigmas)| sigmas.iter().map(move |&s| (*name, p.as_slice(), s)))
        .enumerate()
        .map(|(i, (name, p, s))| (i, name, p, s))
        .collect();
    let results: Vec<(String, f64)> = cases
        .par_iter()
        .map(|&(i, name, probs, sigma)| {
            let dev = DeviceParams::new(sigma, 3, 16).unwrap();
            let analytic = expected_read_error_probs(probs, sigma, 3).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + i as u64);
            let sampled = sampled_read_error(probs, &dev, 1_000_000, &mut rng);
            let rel = (sampled - analytic).abs() / analytic;
            (
                format!("{name}@{sigma}: {analytic:.4} vs {sampled:.4}"),
                rel,
            )
        })
        .collect();
    let (worst_case, worst) = results
        .iter()
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(d, r)| (d.clone(), *r))
        .unwrap();
    Outcome::new(
        worst <= 0.02,
        format!(
            "{} cases, worst relative gap {:.2}% ({worst_case})",
            results.len(),
            worst * 100.0
        ),
    )
}

fn bound_vs_monte_carlo() -> Outcome {
    let (w, stream) = synthetic_layer(3, 8).unwrap();
    let profile = profile_layer(0, &w, &stream, 16, ProfileGrouping::ZeroSkip, 128).unwrap();
    let lut = WordlineLut::uniform(8, 16);
    let mut pass = true;
    let mut parts = Vec::new();
    for sigma in [0.05, 0.1, 0.2] {
        let dev = DeviceParams::new(sigma, 3, 16).unwrap();
        let bound = estimate_layer(&profile, &dev, &lut, None).unwrap().vmm_mae;
        let mc = monte_carlo_mae(
            &w,
            &stream,
            &dev,
            &Policy::CountingCards(lut.clone()),
            &ArrayConfig::default(),
            1000,
            17,
            None,
        )
        .unwrap();
        let ok = mc.mean <= 1.05 * bound && mc.mean >= 0.25 * bound;
        pass &= ok;
        parts.push(format!(
            "sigma {sigma}: MC {:.3} / bound {:.3} = {:.2}",
            mc.mean,
            bound,
            mc.mean / bound
        ));
    }
    Outcome::new(pass, parts.join("; "))
}

fn enumerate_min_delay(classes: &[Vec<Item>], threshold: f64) -> Option<f64> {
    let k = classes[0].len();
    let total = k.pow(classes.len() as u32);
    let mut best: Option<f64> = None;
    for code in 0..total {
        let mut c = code;
        let (mut e, mut d) = (0.0, 0.0);
        for class in classes {
            let item = &class[c % k];
            c /= k;
            e += item.error;
            d += item.delay;
        }
        if e <= threshold && best.is_none_or(|b| d < b) {
            best = Some(d);
        }
    }
    best
}

fn solver_is_exact() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut mismatches = 0;
    let mut infeasible = 0;
    for _ in 0..100 {
        let classes: Vec<Vec<Item>> = (0..6)
            .map(|_| {
                (0..5)
                    .map(|label| Item {
                        error: rng.random_range(0..20) as f64,
                        delay: rng.random_range(1..50) as f64,
                        label,
                    })
                    .collect()
            })
            .collect();
        let min_err: f64 = classes
            .iter()
            .map(|c| c.iter().map(|i| i.error).fold(f64::INFINITY, f64::min))
            .sum();
        let threshold = min_err + rng.random_range(0..40) as f64;
        let oracle = enumerate_min_delay(&classes, threshold);
        let m = Mckp::new(classes).unwrap();
        let fast = m.solve(threshold).ok().map(|s| s.delay);
        let slow = m.solve_exhaustive(threshold).ok().map(|s| s.delay);
        if oracle.is_none() {
            infeasible += 1;
        }
        if fast != oracle || slow != oracle {
            mismatches += 1;
        }
    }

    let errs = [0.0, 1.0, 3.0, 7.0];
    let delays = [12.0, 6.0, 4.0, 3.0];
    let table = TradeoffTable::from_fn(4, |x, w, n| TradeoffEntry {
        error: ((x + w) % 5 + 1) as f64 * errs[n - 1],
        delay: ((x * 3 + w) % 7 + 1) as f64 * delays[n - 1],
    })
    .unwrap();
    let mut lut_mismatches = 0;
    let thresholds = [0.0, 10.0, 40.0, 100.0, 250.0, 600.0];
    for thr in thresholds {
        let a = optimize_lut(&table, thr, 1).unwrap();
        let b = brute_force_lut(&table, thr).unwrap();
        if a.achieved_delay != b.achieved_delay || a.achieved_error > thr {
            lut_mismatches += 1;
        }
    }
    Outcome::new(
        mismatches == 0 && lut_mismatches == 0,
        format!(
            "100 random 6x5 instances ({infeasible} infeasible): {mismatches} mismatches; \
             8x8x4 table at {} thresholds: {lut_mismatches} mismatches",
            thresholds.len()
        ),
    )
}

fn random_lut(rng: &mut ChaCha8Rng, n_max: usize) -> WordlineLut {
    let mut lut = WordlineLut::uniform(1, 16);
    for row in lut.choice.iter_mut() {
        for c in row.iter_mut() {
            *c = rng.random_range(1..=n_max);
        }
    }
    lut
}

fn noiseless_is_exact() -> Outcome {
    let dev = DeviceParams::new(0.0, 3, 16).unwrap();
    let config = ArrayConfig {
        convention: RowConvention::Resolvable,
        ..ArrayConfig::default()
    };
    let mismatches: usize = (0..1000u64)
        .into_par_iter()
        .map(|case| {
            let mut rng = ChaCha8Rng::seed_from_u64(case);
            let w: Vec<i32> = (0..16 * 128)
                .map(|_| rng.random_range(-128..=127))
                .collect();
            let density: f64 = rng.random_range(0.0..=1.0);
            let x: Vec<i32> = (0..128)
                .map(|_| {
                    if rng.random_bool(density) {
                        rng.random_range(1..=255)
                    } else {
                        0
                    }
                })
                .collect();
            let w = QuantizedTensor::weights(16, 128, w).unwrap();
            let x = QuantizedTensor::activations(x).unwrap();
            let want = reference_vmm(&w, &x).unwrap();
            let array = program_array(&w, &config, &dev, &mut rng).unwrap();
            let policies = [
                Policy::Baseline,
                Policy::ZeroSkip,
                Policy::CountingCards(random_lut(&mut rng, 7)),
            ];
            policies
                .iter()
                .filter(|p| simulate_vmm(&array, &x, p, &dev, &mut rng).unwrap().0 != want)
                .count()
        })
        .sum();

    let w = synthetic_cnn(7, 16, 8).unwrap();
    let profiles = profile_network(
        &w.network,
        &w.calibration,
        16,
        ProfileGrouping::ZeroSkip,
        128,
    )
    .unwrap();
    let tables = layer_tables(&w.network, &profiles, &dev).unwrap();
    let cc: Vec<Policy> = plan_luts(&tables, 1e-9, 1, SolverKind::Exact)
        .into_iter()
        .map(|l| Policy::CountingCards(l.unwrap()))
        .collect();
    let n = w.network.layers.len();
    let mut net_worst = 0.0f64;
    for policies in [vec![Policy::Baseline; n], vec![Policy::ZeroSkip; n], cc] {
        let r = run_network(&w, &dev, &config, &policies, 1, None);
        net_worst = r.layers.iter().map(|l| l.mae).fold(net_worst, f64::max);
    }
    Outcome::new(
        mismatches == 0 && net_worst == 0.0,
        format!("1000 random 128x128 VMMs x 3 policies: {mismatches} mismatches; CNN max layer MAE {net_worst}"),
    )
}

fn zero_skip_never_slower() -> Outcome {
    let dev = DeviceParams::new(0.1, 3, 16).unwrap();
    let config = ArrayConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let w: Vec<i32> = (0..16 * 128)
        .map(|_| rng.random_range(-128..=127))
        .collect();
    let w = QuantizedTensor::weights(16, 128, w).unwrap();
    let array = program_array(&w, &config, &dev, &mut rng).unwrap();
    let mut violations = 0;
    let mut dense_unequal = 0;
    let mut saved = Vec::new();
    for density in [0.1, 0.5, 0.9, 1.0] {
        let (mut zs_total, mut base_total) = (0u64, 0u64);
        for _ in 0..250 {
            let x: Vec<i32> = (0..128)
                .map(|_| {
                    (0..8)
                        .filter(|_| rng.random_bool(density))
                        .fold(0, |v, b| v | (1 << b))
                })
                .collect();
            let x = QuantizedTensor::activations(x).unwrap();
            let base = simulate_vmm(&array, &x, &Policy::Baseline, &dev, &mut rng)
                .unwrap()
                .1
                .cycles;
            let zs = simulate_vmm(&array, &x, &Policy::ZeroSkip, &dev, &mut rng)
                .unwrap()
                .1
                .cycles;
            violations += usize::from(zs > base);
            if density == 1.0 {
                dense_unequal += usize::from(zs != base);
            }
            zs_total += zs;
            base_total += base;
        }
        saved.push(format!(
            "{density}: {:.0}%",
            100.0 * (1.0 - zs_total as f64 / base_total as f64)
        ));
    }
    Outcome::new(
        violations == 0 && dense_unequal == 0,
        format!(
            "1000 inputs: {violations} with zero-skip slower, {dense_unequal} unequal at density 1; \
             cycles saved by density {}",
            saved.join(", ")
        ),
    )
}

fn run_network(
    w: &Workload,
    dev: &DeviceParams,
    array: &ArrayConfig,
    policies: &[Policy],
    trials: usize,
    labels: Option<&[usize]>,
) -> SimReport {
    let chip = ChipConfig::default();
    let mapping = map_layers(&w.network, &chip, array).unwrap();
    let spec = RunSpec {
        device: dev,
        array,
        chip: &chip,
        mapping: &mapping,
        policies,
        trials,
        seed: 1,
    };
    simulate_network(&w.network, &w.inputs, labels, &spec).unwrap()
}

fn cnn_budget_and_savings() -> (Outcome, Outcome) {
    let w = synthetic_cnn(7, 64, 32).unwrap();
    let dev = DeviceParams::new(0.2, 3, 16).unwrap();
    let array = ArrayConfig::default();
    let n = w.network.layers.len();
    let profiles = profile_network(
        &w.network,
        &w.calibration,
        16,
        ProfileGrouping::ZeroSkip,
        128,
    )
    .unwrap();
    let tables = layer_tables(&w.network, &profiles, &dev).unwrap();

    let base = run_network(&w, &dev, &array, &vec![Policy::Baseline; n], 20, None);
    let zs = run_network(&w, &dev, &array, &vec![Policy::ZeroSkip; n], 20, None);
    let zs_max = zs.layers.iter().map(|l| l.mae).fold(0.0, f64::max);

    let mut within = true;
    let mut parts = vec![format!("zero-skip max layer MAE {zs_max:.3}")];
    let mut loosest = None;
    for thr in [0.1, 0.5, 1.0] {
        let policies: Vec<Policy> = plan_luts(&tables, thr, 1, SolverKind::Exact)
            .into_iter()
            .map(|l| Policy::CountingCards(l.unwrap()))
            .collect();
        let r = run_network(&w, &dev, &array, &policies, 20, None);
        let worst = r
            .layers
            .iter()
            .map(|l| l.mae + l.mae_ci)
            .fold(0.0, f64::max);
        within &= worst <= thr;
        parts.push(format!("thr {thr}: max MAE+ci {worst:.3}"));
        loosest = Some(r);
    }
    let budget = Outcome::new(within && zs_max > 1.0, parts.join("; "));

    let cc = loosest.unwrap();
    let cyc = 1.0 - cc.chip.latency_cycles / base.chip.latency_cycles;
    let energy = 1.0 - cc.chip.energy_pj / base.chip.energy_pj;
    let savings = Outcome::new(
        cyc >= 0.2 && energy >= 0.2,
        format!(
            "thr 1.0 vs baseline: cycles {:.0} -> {:.0} ({:.1}% fewer), energy {:.3e} -> {:.3e} pJ ({:.1}% less)",
            base.chip.latency_cycles,
            cc.chip.latency_cycles,
            cyc * 100.0,
            base.chip.energy_pj,
            cc.chip.energy_pj,
            energy * 100.0
        ),
    );
    (budget, savings)
}

fn accuracy_degrades() -> Outcome {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/mlp/mlp.toml");
    let w = load_manifest(&path).unwrap();
    let labels = w.labels.clone().unwrap();
    let array = ArrayConfig::default();
    let sigmas = [0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35];
    let acc: Vec<f64> = sigmas
        .iter()
        .map(|&s| {
            let dev = DeviceParams::new(s, 3, 16).unwrap();
            let policies = vec![Policy::Baseline; w.network.layers.len()];
            run_network(&w, &dev, &array, &policies, 20, Some(&labels)).accuracy_proxy
        })
        .collect();
    let monotone = acc.windows(2).all(|p| p[1] <= p[0] + 0.01);
    let drop = acc[0] - acc[acc.len() - 1];
    let curve: Vec<String> = sigmas
        .iter()
        .zip(&acc)
        .map(|(s, a)| format!("{s}:{a:.3}"))
        .collect();
    Outcome::new(
        monotone && drop >= 0.10,
        format!(
            "accuracy by sigma {}; drop {:.1} points",
            curve.join(" "),
            drop * 100.0
        ),
    )
}

const SWEEP: &str = r#"
seed = 5
trials = 3
max_inputs = 4

[device]
sigma = 0.2
adc_bits = 3
max_wordlines = 16

[workload]
kind = "synthetic_cnn"
seed = 7
calibration = 16
inputs = 4

[sweep]
sigmas = [0.1, 0.3]
policies = ["baseline", "zero_skip", "counting_cards"]
thresholds = [0.5, 1.0]
"#;

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

fn sweep_is_reproducible() -> Outcome {
    let mut dirs = Vec::new();
    let mut snaps = Vec::new();
    for workers in [1, 4] {
        let mut config = ExperimentConfig::from_toml_str(SWEEP).unwrap();
        config.workers = Some(workers);
        let sigmas = config.sweep.sigmas.clone();
        let dir = tempfile::tempdir().unwrap();
        Experiment::new(config)
            .unwrap()
            .run_grid(&sigmas, dir.path())
            .unwrap();
        write_summary(dir.path()).unwrap();
        snaps.push(snapshot(dir.path()));
        dirs.push(dir);
    }
    let reports = snaps[0].keys().filter(|k| k.starts_with("report_")).count();
    let failures: Vec<serde_json::Value> =
        serde_json::from_slice(&snaps[0]["failures.json"]).unwrap();
    let failed_cells: BTreeSet<String> = failures.iter().map(|f| f["cell"].to_string()).collect();
    let differing: Vec<&String> = snaps[0]
        .iter()
        .filter(|(k, v)| snaps[1].get(*k) != Some(*v))
        .map(|(k, _)| k)
        .collect();
    let same_names = snaps[0].len() == snaps[1].len();
    Outcome::new(
        same_names && differing.is_empty() && reports + failed_cells.len() == 8 && snaps[0].contains_key("summary.csv"),
        format!(
            "{} files, {reports} reports + {} infeasible cells of 8, 1 vs 4 workers: {} differing {:?}",
            snaps[0].len(),
            failed_cells.len(),
            differing.len(),
            differing
        ),
    )
}

fn timed<T>(f: impl FnOnce() -> T) -> (T, f64) {
    let t = Instant::now();
    let v = f();
    (v, t.elapsed().as_secs_f64())
}

fn main() -> ExitCode {
    let checks: [(u32, &str, fn() -> Outcome); 6] = [
        (1, "readout probabilities sum to one", readout_sums),
        (
            2,
            "analytic read error matches sampling",
            read_error_vs_sampling,
        ),
        (
            3,
            "analytic VMM error bounds Monte Carlo",
            bound_vs_monte_carlo,
        ),
        (4, "knapsack solver matches brute force", solver_is_exact),
        (5, "noiseless simulation is bit exact", noiseless_is_exact),
        (
            6,
            "zero skipping never costs cycles",
            zero_skip_never_slower,
        ),
    ];
    let mut outcomes: Vec<(u32, &str, Outcome, f64)> = Vec::new();
    for (n, name, f) in checks {
        let (o, secs) = timed(f);
        outcomes.push((n, name, o, secs));
    }
    let ((budget, savings), secs) = timed(cnn_budget_and_savings);
    outcomes.push((7, "scheduled CNN stays within budget", budget, secs));
    outcomes.push((8, "scheduling saves cycles and energy", savings, 0.0));
    let (o, secs) = timed(accuracy_degrades);
    outcomes.push((9, "MLP accuracy degrades with variation", o, secs));
    let (o, secs) = timed(sweep_is_reproducible);
    outcomes.push((10, "sweeps are reproducible", o, secs));

    let mut failed = 0;
    for (n, name, o, secs) in &outcomes {
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {n} [{name}]: {verdict} ({secs:.1}s) {}",
            o.detail
        );
        failed += usize::from(!o.pass);
    }
    println!(
        "{} of {} criteria passed",
        outcomes.len() - failed,
        outcomes.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
