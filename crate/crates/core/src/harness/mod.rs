//! Experiment drivers: each sweep expands into runs, every run is keyed by a hash
//! of its full specification, and a run whose result file already exists is not
//! repeated. Results are written as deterministic CSV files.

mod report;
mod sweeps;

pub use report::{export_vtk, report, ReportSummary};
pub use sweeps::{
    cross_eval, fit_power_law, grid_search, nested_subsets, repr_sweep, trainsize_sweep, uncertainty, CrossCell,
    CrossEvalReport, GridPoint, GridRow, GridSearchReport, GridSearchSpace, ReprRow, ReprSweepReport, TrainsizeReport,
    TrainsizeRow, UncertaintyReport, UncertaintyRow, DEFAULT_FRACTIONS,
};

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::metrics::{evaluate, DropletHistogram, EvalResult, IdentityModel, Reconstructor};
use crate::model::{load_split, save_checkpoint, train, Autoencoder, ModelConfig, TrainConfig};
use crate::repr::Representation;
use crate::synthgen::SynthConfig;
use crate::volume::{write_atomic, DatasetManifest, ManifestEntry, Split};
use crate::{Error, Result};

/// Environment variable that overrides the output root.
pub const OUTPUT_ROOT_ENV: &str = "IFAE_OUTPUT_ROOT";

/// Named default scales.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// 32³ grids, 8 base channels, 200-sample datasets; runs on a laptop CPU.
    Desk,
    /// 64³ grids, 16 base channels, 100 epochs.
    #[serde(alias = "paper")]
    Full,
}

impl Profile {
    pub fn grid(&self) -> usize {
        match self {
            Profile::Desk => 32,
            Profile::Full => 64,
        }
    }

    pub fn samples(&self) -> usize {
        match self {
            Profile::Desk => 200,
            Profile::Full => 1000,
        }
    }

    pub fn model(&self) -> ModelConfig {
        match self {
            Profile::Desk => ModelConfig { base_channels: 8, ..ModelConfig::default() },
            Profile::Full => ModelConfig::default(),
        }
    }

    pub fn train(&self) -> TrainConfig {
        match self {
            Profile::Desk => TrainConfig { epochs: 30, ..TrainConfig::default() },
            Profile::Full => TrainConfig { epochs: 100, ..TrainConfig::default() },
        }
    }

    pub fn synth(&self, mu: f64, seed: u64) -> SynthConfig {
        SynthConfig { mu, grid: self.grid(), seed, ..SynthConfig::default() }
    }
}

impl std::str::FromStr for Profile {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "desk" => Ok(Profile::Desk),
            "full" | "paper" => Ok(Profile::Full),
            other => Err(Error::Config(format!("unknown profile {other:?} (desk, full)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetRef {
    pub name: String,
    pub manifest: PathBuf,
}

/// Everything a sweep needs; read from a JSON file and then overridden by flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetRef>,
    /// Representation labels such as `sdf`, `sharp`, `tanh_1/32`.
    pub representations: Vec<String>,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            representations: Representation::default_sweep().iter().map(Representation::label).collect(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            seeds: vec![0, 1, 2, 3, 4],
            output_dir: PathBuf::from("results"),
        }
    }
}

impl ExperimentConfig {
    pub fn for_profile(profile: Profile) -> Self {
        Self { model: profile.model(), train: profile.train(), ..Self::default() }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::format(path, format!("malformed experiment config: {e}")))
    }

    pub fn representations(&self) -> Result<Vec<Representation>> {
        self.representations.iter().map(|l| Representation::parse_label(l)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.representations()?;
        self.model.validate()?;
        self.train.validate()?;
        for d in &self.datasets {
            if !d.manifest.is_file() {
                return Err(Error::Config(format!("manifest {} of dataset {:?} does not exist", d.manifest.display(), d.name)));
            }
        }
        Ok(())
    }

    pub fn load_datasets(&self) -> Result<Vec<Dataset>> {
        if self.datasets.is_empty() {
            return Err(Error::Config("no datasets configured".into()));
        }
        self.datasets
            .iter()
            .map(|d| Ok(Dataset { name: d.name.clone(), manifest: DatasetManifest::load(&d.manifest)? }))
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub name: String,
    pub manifest: DatasetManifest,
}

impl Dataset {
    pub fn entries(&self, split: Split) -> Vec<&ManifestEntry> {
        self.manifest.split(split)
    }
}

/// Complete description of one run; its hash names the run directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub backend: String,
    pub dataset: String,
    pub representation: Representation,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub train_ids: Vec<String>,
    /// Evaluation targets: name and sample ids.
    pub targets: Vec<(String, Vec<String>)>,
}

impl RunSpec {
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("run spec serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }
}

pub struct EvalTarget<'a> {
    pub name: String,
    pub manifest: &'a DatasetManifest,
    pub entries: Vec<&'a ManifestEntry>,
}

/// A run plus borrowed access to its data.
pub struct Job<'a> {
    pub spec: RunSpec,
    pub train_manifest: &'a DatasetManifest,
    pub train_entries: Vec<&'a ManifestEntry>,
    pub targets: Vec<EvalTarget<'a>>,
}

impl<'a> Job<'a> {
    pub fn new(
        backend: &str,
        dataset: &'a Dataset,
        train_entries: Vec<&'a ManifestEntry>,
        targets: Vec<EvalTarget<'a>>,
        representation: Representation,
        model: ModelConfig,
        train: TrainConfig,
    ) -> Self {
        let spec = RunSpec {
            backend: backend.to_string(),
            dataset: dataset.name.clone(),
            representation,
            model,
            train,
            train_ids: train_entries.iter().map(|e| e.id.clone()).collect(),
            targets: targets.iter().map(|t| (t.name.clone(), t.entries.iter().map(|e| e.id.clone()).collect())).collect(),
        };
        Self { spec, train_manifest: &dataset.manifest, train_entries, targets }
    }
}

/// Evaluation of one trained model on one target.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub results: Vec<EvalResult>,
    pub truth_droplets: Vec<usize>,
    pub pred_droplets: Vec<usize>,
}

impl EvalRecord {
    pub fn mean_dice(&self) -> f64 {
        mean(self.results.iter().map(|r| r.dice))
    }

    pub fn mean_hausdorff(&self) -> f64 {
        mean(self.results.iter().map(|r| r.hausdorff_norm))
    }

    pub fn droplet_histograms(&self) -> (DropletHistogram, DropletHistogram) {
        (
            DropletHistogram { volumes: self.truth_droplets.clone() },
            DropletHistogram { volumes: self.pred_droplets.clone() },
        )
    }
}

pub(crate) fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub hash: String,
    pub spec: RunSpec,
    pub loss_history: Vec<f64>,
    /// Set when training produced a non-finite loss.
    pub diverged: Option<String>,
    pub evaluations: BTreeMap<String, EvalRecord>,
}

impl RunResult {
    pub fn new(spec: &RunSpec) -> Self {
        Self { hash: spec.hash(), spec: spec.clone(), loss_history: Vec::new(), diverged: None, evaluations: BTreeMap::new() }
    }

    /// Mean Dice on `target`; 0 for diverged runs.
    pub fn score(&self, target: &str) -> f64 {
        if self.diverged.is_some() {
            return 0.0;
        }
        self.evaluations.get(target).map_or(0.0, EvalRecord::mean_dice)
    }

    pub fn hausdorff(&self, target: &str) -> f64 {
        self.evaluations.get(target).map_or(f64::NAN, EvalRecord::mean_hausdorff)
    }
}

/// Executes runs; swapped for stubs in tests and plumbing checks.
pub trait Runner {
    /// Distinguishes backends in the run hash.
    fn name(&self) -> &str;
    fn execute(&self, job: &Job, run_dir: &Path) -> Result<RunResult>;
}

fn evaluate_targets<M: Reconstructor + ?Sized>(model: &M, job: &Job, out: &mut RunResult) -> Result<()> {
    for t in &job.targets {
        let ev = evaluate(model, t.manifest, &t.entries, job.spec.representation)?;
        out.evaluations.insert(
            t.name.clone(),
            EvalRecord { results: ev.results, truth_droplets: ev.truth_droplets.volumes, pred_droplets: ev.pred_droplets.volumes },
        );
    }
    Ok(())
}

/// Trains the autoencoder, saves its checkpoint in the run directory, evaluates.
#[derive(Clone, Copy, Debug, Default)]
pub struct TrainRunner;

impl Runner for TrainRunner {
    fn name(&self) -> &str {
        "train"
    }

    fn execute(&self, job: &Job, run_dir: &Path) -> Result<RunResult> {
        let spec = &job.spec;
        let mut out = RunResult::new(spec);
        let samples = load_split(job.train_manifest, &job.train_entries, spec.representation)?;
        let mut model = Autoencoder::<f32>::new(spec.model.clone(), spec.train.effective_init_seed())?;
        match train(&mut model, &samples, &spec.train) {
            Ok(r) => out.loss_history = r.loss_history,
            Err(e @ Error::Diverged { .. }) => {
                warn!("run {} diverged: {e}", out.hash);
                out.diverged = Some(e.to_string());
                return Ok(out);
            }
            Err(e) => return Err(e),
        }
        save_checkpoint(&model, run_dir.join("model.ckpt"))?;
        evaluate_targets(&model, job, &mut out)?;
        Ok(out)
    }
}

/// Skips training and reconstructs inputs exactly.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityRunner;

impl Runner for IdentityRunner {
    fn name(&self) -> &str {
        "identity"
    }

    fn execute(&self, job: &Job, _run_dir: &Path) -> Result<RunResult> {
        let mut out = RunResult::new(&job.spec);
        evaluate_targets(&IdentityModel, job, &mut out)?;
        Ok(out)
    }
}

/// Runs `job` unless `root/runs/<hash>/result.json` already holds its result.
pub fn execute_cached(runner: &dyn Runner, job: &Job, root: &Path) -> Result<RunResult> {
    let hash = job.spec.hash();
    let dir = root.join("runs").join(&hash);
    let result_path = dir.join("result.json");
    if let Ok(text) = fs::read_to_string(&result_path) {
        if let Ok(prev) = serde_json::from_str::<RunResult>(&text) {
            if prev.spec == job.spec {
                info!("run {hash} already complete, skipping");
                return Ok(prev);
            }
        }
    }
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_atomic(&dir.join("spec.json"), serde_json::to_string_pretty(&job.spec).expect("spec serializes").as_bytes())?;
    info!("run {hash}: {} on {} ({})", runner.name(), job.spec.dataset, job.spec.representation.label());
    let result = runner.execute(job, &dir)?;
    write_atomic(&result_path, serde_json::to_string_pretty(&result).expect("result serializes").as_bytes())?;
    Ok(result)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    write_atomic(path, text.as_bytes())
}

/// Representation label usable as a file name component.
pub fn file_label(r: &Representation) -> String {
    r.label().replace('/', "-")
}
