//! Experiment driver: TOML config, the profile/optimize/simulate pipeline
//! over a sigma x policy x threshold grid, and report files.

use std::cmp::Ordering;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::archsim::{map_layers, simulate_network, ChipConfig, RunSpec, SimReport};
use crate::crossbar::{ArrayConfig, Policy};
use crate::device::DeviceParams;
use crate::error::{Error, Result};
use crate::optimizer::{SolverKind, WordlineLut};
use crate::pipeline::{layer_tables, plan_luts, profile_network};
use crate::profiler::{cache_to_csv, LayerProfile, ProfileGrouping};
use crate::workload::{load_manifest, synthetic_cnn, Workload};

pub const MAX_SIGMA: f64 = 0.5;
pub const MAX_ADC_BITS: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Baseline,
    ZeroSkip,
    CountingCards,
}

impl PolicyKind {
    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Baseline => "baseline",
            PolicyKind::ZeroSkip => "zero_skip",
            PolicyKind::CountingCards => "counting_cards",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(PolicyKind::Baseline),
            "zero_skip" => Ok(PolicyKind::ZeroSkip),
            "counting_cards" => Ok(PolicyKind::CountingCards),
            _ => Err(Error::Config(format!("unknown policy {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum WorkloadSpec {
    /// The bundled fixed-seed CNN.
    SyntheticCnn {
        #[serde(default = "default_workload_seed")]
        seed: u64,
        #[serde(default = "default_calibration")]
        calibration: usize,
        #[serde(default = "default_inputs")]
        inputs: usize,
    },
    /// A TOML manifest of QTSR tensors; relative paths resolve against the
    /// config file.
    Manifest { path: PathBuf },
}

fn default_workload_seed() -> u64 {
    7
}

fn default_calibration() -> usize {
    64
}

fn default_inputs() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub sigmas: Vec<f64>,
    pub policies: Vec<PolicyKind>,
    /// Per-layer MAE budgets for counting cards, in requantized output units.
    #[serde(default)]
    pub thresholds: Vec<f64>,
    #[serde(default = "default_group_factor")]
    pub group_factor: usize,
    #[serde(default)]
    pub solver: SolverKind,
    #[serde(default)]
    pub profile_grouping: ProfileGrouping,
}

fn default_group_factor() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Evaluate only the first `max_inputs` inputs.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_inputs: Option<usize>,
    /// Thread count only; results do not depend on it, so it is left out of
    /// the `config.toml` written next to them.
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
    /// `sigma` here is the operating point of `profile`, `optimize` and
    /// `simulate`; `sweep` uses `sweep.sigmas`.
    pub device: DeviceParams,
    #[serde(default)]
    pub array: ArrayConfig,
    #[serde(default)]
    pub chip: ChipConfig,
    pub workload: WorkloadSpec,
    pub sweep: SweepConfig,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_trials() -> usize {
    20
}

fn check_sigma(what: &str, s: f64) -> Result<()> {
    if !(0.0..=MAX_SIGMA).contains(&s) {
        return Err(Error::Config(format!(
            "{what} must be in [0, {MAX_SIGMA}], got {s}"
        )));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Read and validate a config file, resolving relative workload paths
    /// against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })?;
        if let WorkloadSpec::Manifest { path: p } = &mut c.workload {
            if p.is_relative() {
                *p = path.parent().unwrap_or(Path::new(".")).join(&*p);
            }
        }
        Ok(c)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.device
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        check_sigma("device.sigma", self.device.sigma)?;
        if !(1..=MAX_ADC_BITS).contains(&self.device.adc_bits) {
            return Err(Error::Config(format!(
                "device.adc_bits must be in [1, {MAX_ADC_BITS}], got {}",
                self.device.adc_bits
            )));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if self.workers == Some(0) || self.max_inputs == Some(0) {
            return Err(Error::Config(
                "workers and max_inputs must be at least 1".into(),
            ));
        }
        if self.array.rows == 0 || self.array.cols == 0 || self.array.cols % 8 != 0 {
            return Err(Error::Config(
                "array needs rows >= 1 and a nonzero multiple of 8 columns".into(),
            ));
        }
        if self.chip.pes == 0 || self.chip.arrays_per_pe == 0 {
            return Err(Error::Config(
                "chip needs at least one PE and one array per PE".into(),
            ));
        }
        let s = &self.sweep;
        if s.sigmas.is_empty() || s.policies.is_empty() {
            return Err(Error::Config(
                "sweep.sigmas and sweep.policies must be non-empty".into(),
            ));
        }
        for &sigma in &s.sigmas {
            check_sigma("sweep.sigmas entry", sigma)?;
        }
        if s.policies.contains(&PolicyKind::CountingCards) && s.thresholds.is_empty() {
            return Err(Error::Config(
                "counting_cards needs a non-empty sweep.thresholds".into(),
            ));
        }
        if let Some(t) = s.thresholds.iter().find(|t| !(**t > 0.0 && t.is_finite())) {
            return Err(Error::Config(format!(
                "thresholds must be positive, got {t}"
            )));
        }
        if !matches!(s.group_factor, 1 | 4) {
            return Err(Error::Config(format!(
                "group_factor must be 1 or 4, got {}",
                s.group_factor
            )));
        }
        Ok(())
    }
}

/// One point of the sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub sigma: f64,
    pub policy: PolicyKind,
    pub threshold: Option<f64>,
}

impl Cell {
    pub fn file_stem(&self) -> String {
        let mut s = format!("sigma{}_{}", self.sigma, self.policy.name());
        if let Some(t) = self.threshold {
            let _ = write!(s, "_thr{t}");
        }
        s
    }

    pub fn report_name(&self) -> String {
        format!("report_{}.json", self.file_stem())
    }
}

/// A grid cell that could not run, with the layer at fault.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub cell: Cell,
    pub layer: Option<String>,
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub written: Vec<PathBuf>,
    pub failures: Vec<CellFailure>,
}

/// A loaded workload plus the config that drives it.
pub struct Experiment {
    pub config: ExperimentConfig,
    pub workload: Workload,
}

fn write_file(path: &Path, text: &str) -> Result<PathBuf> {
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    Ok(path.to_path_buf())
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn luts_to_csv(names: &[String], luts: &[WordlineLut]) -> String {
    let mut s = String::from("layer,x_bit,w_bit,n_wl\n");
    for (name, lut) in names.iter().zip(luts) {
        for x in 0..8 {
            for w in 0..8 {
                let _ = writeln!(s, "{name},{x},{w},{}", lut.get(x, w));
            }
        }
    }
    s
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let workload = match &config.workload {
            WorkloadSpec::SyntheticCnn {
                seed,
                calibration,
                inputs,
            } => synthetic_cnn(*seed, *calibration, *inputs)?,
            WorkloadSpec::Manifest { path } => load_manifest(path)?,
        };
        Ok(Self { config, workload })
    }

    fn eval_inputs(&self) -> (&[Vec<i32>], Option<&[usize]>) {
        let n = self
            .config
            .max_inputs
            .unwrap_or(usize::MAX)
            .min(self.workload.inputs.len());
        let labels = self.workload.labels.as_deref().map(|l| &l[..n]);
        (&self.workload.inputs[..n], labels)
    }

    fn layer_names(&self) -> Vec<String> {
        self.workload
            .network
            .layers
            .iter()
            .map(|l| l.name.clone())
            .collect()
    }

    /// Profiles do not depend on sigma: they come from noiseless activations.
    pub fn profile(&self) -> Result<Vec<LayerProfile>> {
        profile_network(
            &self.workload.network,
            &self.workload.calibration,
            self.config.device.max_wordlines,
            self.config.sweep.profile_grouping,
            self.config.array.rows,
        )
    }

    /// One LUT per layer per threshold at `sigma`; a layer whose budget is
    /// infeasible yields an error in its slot.
    pub fn plan(
        &self,
        profiles: &[LayerProfile],
        sigma: f64,
    ) -> Result<Vec<Vec<Result<WordlineLut>>>> {
        let device = self.config.device.with_sigma(sigma);
        let tables = layer_tables(&self.workload.network, profiles, &device)?;
        let s = &self.config.sweep;
        Ok(s.thresholds
            .iter()
            .map(|&t| plan_luts(&tables, t, s.group_factor, s.solver))
            .collect())
    }

    /// Grid cells in report order: sigma, then policy, then threshold.
    pub fn cells(&self, sigmas: &[f64]) -> Vec<Cell> {
        let mut out = Vec::new();
        for &sigma in sigmas {
            for &policy in &self.config.sweep.policies {
                if policy == PolicyKind::CountingCards {
                    for &t in &self.config.sweep.thresholds {
                        out.push(Cell {
                            sigma,
                            policy,
                            threshold: Some(t),
                        });
                    }
                } else {
                    out.push(Cell {
                        sigma,
                        policy,
                        threshold: None,
                    });
                }
            }
        }
        out
    }

    pub fn simulate_cell(&self, cell: &Cell, policies: &[Policy]) -> Result<SimReport> {
        let c = &self.config;
        let device = c.device.with_sigma(cell.sigma);
        let mapping = map_layers(&self.workload.network, &c.chip, &c.array)?;
        let (inputs, labels) = self.eval_inputs();
        let spec = RunSpec {
            device: &device,
            array: &c.array,
            chip: &c.chip,
            mapping: &mapping,
            policies,
            trials: c.trials,
            seed: c.seed,
        };
        let mut report = simulate_network(&self.workload.network, inputs, labels, &spec)?;
        report.threshold = cell.threshold;
        Ok(report)
    }

    fn pool(&self) -> Result<rayon::ThreadPool> {
        let mut b = rayon::ThreadPoolBuilder::new();
        if let Some(w) = self.config.workers {
            b = b.num_threads(w);
        }
        b.build().map_err(|e| Error::Config(e.to_string()))
    }

    /// Run every cell of `sigmas` x policies (x thresholds) and write one
    /// report per cell into `out`, plus the LUTs used and a failure list.
    pub fn run_grid(&self, sigmas: &[f64], out: &Path) -> Result<SweepOutcome> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let pool = self.pool()?;
        pool.install(|| self.run_grid_inner(sigmas, out))
    }

    fn run_grid_inner(&self, sigmas: &[f64], out: &Path) -> Result<SweepOutcome> {
        let nl = self.workload.network.layers.len();
        let names = self.layer_names();
        let cc = self
            .config
            .sweep
            .policies
            .contains(&PolicyKind::CountingCards);
        let profiles = if cc { Some(self.profile()?) } else { None };
        let mut outcome = SweepOutcome::default();
        outcome.written.push(write_file(
            &out.join("config.toml"),
            &self.config.to_toml()?,
        )?);

        // Resolve every cell to per-layer policies or a failure.
        let mut jobs: Vec<(Cell, Vec<Policy>)> = Vec::new();
        for &sigma in sigmas {
            let plans = match &profiles {
                Some(p) => self.plan(p, sigma)?,
                None => Vec::new(),
            };
            for cell in self.cells(&[sigma]) {
                match cell.policy {
                    PolicyKind::Baseline => jobs.push((cell, vec![Policy::Baseline; nl])),
                    PolicyKind::ZeroSkip => jobs.push((cell, vec![Policy::ZeroSkip; nl])),
                    PolicyKind::CountingCards => {
                        let ti = self
                            .config
                            .sweep
                            .thresholds
                            .iter()
                            .position(|t| Some(*t) == cell.threshold)
                            .expect("cell threshold comes from the config");
                        let mut luts = Vec::with_capacity(nl);
                        let mut failed = false;
                        for (l, r) in plans[ti].iter().enumerate() {
                            match r {
                                Ok(lut) => luts.push(lut.clone()),
                                Err(e) => {
                                    failed = true;
                                    outcome.failures.push(CellFailure {
                                        cell,
                                        layer: Some(names[l].clone()),
                                        kind: e.kind().into(),
                                        message: e.to_string(),
                                    });
                                }
                            }
                        }
                        if !failed {
                            let path = out.join(format!("lut_{}.csv", cell.file_stem()));
                            outcome
                                .written
                                .push(write_file(&path, &luts_to_csv(&names, &luts))?);
                            jobs.push((
                                cell,
                                luts.into_iter().map(Policy::CountingCards).collect(),
                            ));
                        }
                    }
                }
            }
        }

        let results: Vec<(Cell, Result<SimReport>)> = jobs
            .par_iter()
            .map(|(cell, policies)| (*cell, self.simulate_cell(cell, policies)))
            .collect();
        for (cell, r) in results {
            match r {
                Ok(report) => {
                    outcome.written.push(write_file(
                        &out.join(cell.report_name()),
                        &to_json(&report)?,
                    )?);
                }
                Err(e) => outcome.failures.push(CellFailure {
                    cell,
                    layer: None,
                    kind: e.kind().into(),
                    message: e.to_string(),
                }),
            }
        }
        outcome.written.push(write_file(
            &out.join("failures.json"),
            &to_json(&outcome.failures)?,
        )?);
        Ok(outcome)
    }

    /// Profile at the operating point and write the PMF cache.
    pub fn write_profile(&self, out: &Path) -> Result<PathBuf> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let profiles = self.pool()?.install(|| self.profile())?;
        write_file(&out.join("profile.csv"), &cache_to_csv(&profiles))
    }

    /// Trade-off tables and LUTs at the operating point, one file per
    /// threshold; infeasible layers are reported and skipped.
    pub fn write_luts(&self, out: &Path) -> Result<SweepOutcome> {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let sigma = self.config.device.sigma;
        let names = self.layer_names();
        let mut outcome = SweepOutcome::default();
        self.pool()?.install(|| -> Result<()> {
            let profiles = self.profile()?;
            let device = self.config.device.with_sigma(sigma);
            let tables = layer_tables(&self.workload.network, &profiles, &device)?;
            let mut t_csv = String::new();
            for (name, t) in names.iter().zip(&tables) {
                for (i, line) in t.to_csv().lines().enumerate() {
                    if i == 0 && t_csv.is_empty() {
                        let _ = writeln!(t_csv, "layer,{line}");
                    } else if i > 0 {
                        let _ = writeln!(t_csv, "{name},{line}");
                    }
                }
            }
            outcome.written.push(write_file(
                &out.join(format!("tables_sigma{sigma}.csv")),
                &t_csv,
            )?);
            for (plans, &t) in self
                .plan(&profiles, sigma)?
                .into_iter()
                .zip(&self.config.sweep.thresholds)
            {
                let cell = Cell {
                    sigma,
                    policy: PolicyKind::CountingCards,
                    threshold: Some(t),
                };
                let mut luts = Vec::new();
                let mut kept = Vec::new();
                for (name, r) in names.iter().zip(plans) {
                    match r {
                        Ok(lut) => {
                            luts.push(lut);
                            kept.push(name.clone());
                        }
                        Err(e) => outcome.failures.push(CellFailure {
                            cell,
                            layer: Some(name.clone()),
                            kind: e.kind().into(),
                            message: e.to_string(),
                        }),
                    }
                }
                if !luts.is_empty() {
                    let path = out.join(format!("lut_{}.csv", cell.file_stem()));
                    outcome
                        .written
                        .push(write_file(&path, &luts_to_csv(&kept, &luts))?);
                }
            }
            Ok(())
        })?;
        Ok(outcome)
    }
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub sigma: f64,
    pub policy: String,
    pub threshold: Option<f64>,
    /// Mean over layers of the per-layer MAE.
    pub mae: f64,
    pub accuracy_proxy: f64,
    pub cycles: f64,
    pub energy: f64,
}

impl SummaryRow {
    fn from_report(r: &SimReport) -> Self {
        let mae = if r.layers.is_empty() {
            0.0
        } else {
            r.layers.iter().map(|l| l.mae).sum::<f64>() / r.layers.len() as f64
        };
        Self {
            sigma: r.sigma,
            policy: r.policy.clone(),
            threshold: r.threshold,
            mae,
            accuracy_proxy: r.accuracy_proxy,
            cycles: r.chip.latency_cycles,
            energy: r.chip.energy_pj,
        }
    }

    fn order(&self, other: &Self) -> Ordering {
        self.sigma
            .total_cmp(&other.sigma)
            .then_with(|| self.policy.cmp(&other.policy))
            .then_with(|| match (self.threshold, other.threshold) {
                (Some(a), Some(b)) => a.total_cmp(&b),
                (a, b) => a.is_some().cmp(&b.is_some()),
            })
    }
}

/// Rows for every `report_*.json` in `dir`, sorted by sigma, policy and
/// threshold.
pub fn read_summary(dir: &Path) -> Result<Vec<SummaryRow>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut rows = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
        if !(name.starts_with("report_") && name.ends_with(".json")) {
            continue;
        }
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let r: SimReport = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        rows.push(SummaryRow::from_report(&r));
    }
    if rows.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no report_*.json files in {}",
            dir.display()
        )));
    }
    rows.sort_by(|a, b| a.order(b));
    Ok(rows)
}

pub fn summary_csv(rows: &[SummaryRow]) -> String {
    let mut s = String::from("sigma,policy,threshold,mae,accuracy_proxy,cycles,energy\n");
    for r in rows {
        let t = r.threshold.map(|t| t.to_string()).unwrap_or_default();
        let _ = writeln!(
            s,
            "{},{},{t},{},{},{},{}",
            r.sigma, r.policy, r.mae, r.accuracy_proxy, r.cycles, r.energy
        );
    }
    s
}

/// Write `summary.csv` next to the reports in `dir`.
pub fn write_summary(dir: &Path) -> Result<PathBuf> {
    let csv = summary_csv(&read_summary(dir)?);
    write_file(&dir.join("summary.csv"), &csv)
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = r#"
seed = 3
trials = 2
max_inputs = 2

[device]
sigma = 0.1
adc_bits = 3
max_wordlines = 16

[workload]
kind = "synthetic_cnn"
calibration = 4
inputs = 2

[sweep]
sigmas = [0.0, 0.2]
policies = ["baseline", "counting_cards"]
thresholds = [0.5, 1e-9]
"#;

    #[test]
    fn config_round_trip() {
        let c = ExperimentConfig::from_toml_str(SMALL).unwrap();
        let back = ExperimentConfig::from_toml_str(&c.to_toml().unwrap()).unwrap();
        assert_eq!(c, back);
        assert_eq!(c.array, ArrayConfig::default());
        assert_eq!(c.trials, 2);
    }

    #[test]
    fn config_validation() {
        let bad = |from: &str, to: &str| {
            let text = SMALL.replacen(from, to, 1);
            assert_ne!(text, SMALL, "{from}");
            ExperimentConfig::from_toml_str(&text).unwrap_err()
        };
        assert_eq!(bad("sigma = 0.1", "sigma = 0.6").kind(), "config");
        assert_eq!(bad("adc_bits = 3", "adc_bits = 7").kind(), "config");
        assert_eq!(bad("sigmas = [0.0, 0.2]", "sigmas = []").kind(), "config");
        assert_eq!(
            bad("thresholds = [0.5, 1e-9]", "thresholds = [0.5, 0.0]").kind(),
            "config"
        );
        assert_eq!(
            bad("thresholds = [0.5, 1e-9]", "thresholds = []").kind(),
            "config"
        );
        assert_eq!(bad("seed = 3", "seed = 3\nbogus = 1").kind(), "config");
        assert_eq!(bad("adc_bits = 3\n", "").kind(), "config");
        assert_eq!(bad("sigma = 0.1\n", "").kind(), "config");
        assert_eq!(bad("inputs = 2", "inputs = 2\nextra = 1").kind(), "config");
    }

    #[test]
    fn grid_files_and_failures() {
        let dir = tempfile::tempdir().unwrap();
        let exp = Experiment::new(ExperimentConfig::from_toml_str(SMALL).unwrap()).unwrap();
        let cells = exp.cells(&exp.config.sweep.sigmas);
        // 2 sigmas x (baseline + 2 thresholds)
        assert_eq!(cells.len(), 6);
        let out = exp.run_grid(&exp.config.sweep.sigmas, dir.path()).unwrap();
        assert!(dir
            .path()
            .join("report_sigma0.2_counting_cards_thr0.5.json")
            .exists());
        assert!(dir.path().join("report_sigma0_baseline.json").exists());
        // The 1e-9 budget is feasible only without noise.
        assert!(dir
            .path()
            .join("report_sigma0_counting_cards_thr0.000000001.json")
            .exists());
        assert!(!out.failures.is_empty());
        assert!(out
            .failures
            .iter()
            .all(|f| f.cell.sigma == 0.2 && f.kind == "infeasible"));

        let rows = read_summary(dir.path()).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows
            .windows(2)
            .all(|w| w[0].order(&w[1]) != Ordering::Greater));
        let a = write_summary(dir.path()).unwrap();
        let first = fs::read(&a).unwrap();
        write_summary(dir.path()).unwrap();
        assert_eq!(first, fs::read(&a).unwrap());
    }

    #[test]
    fn single_cell_writes_one_report() {
        let dir = tempfile::tempdir().unwrap();
        let text = SMALL
            .replace("sigmas = [0.0, 0.2]", "sigmas = [0.1]")
            .replace(
                "policies = [\"baseline\", \"counting_cards\"]",
                "policies = [\"zero_skip\"]",
            );
        let exp = Experiment::new(ExperimentConfig::from_toml_str(&text).unwrap()).unwrap();
        exp.run_grid(&[0.1], dir.path()).unwrap();
        let reports: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .filter(|e| e.file_name().to_string_lossy().starts_with("report_"))
            .collect();
        assert_eq!(reports.len(), 1);
        assert_eq!(read_summary(dir.path()).unwrap().len(), 1);
    }

    #[test]
    fn summarize_empty_dir_fails() {
        let dir = tempfile::tempdir().unwrap();
        assert!(read_summary(dir.path()).is_err());
    }
}
