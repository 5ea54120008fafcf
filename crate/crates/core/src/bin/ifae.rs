use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};

use ifae::harness::{
    self, DatasetRef, ExperimentConfig, GridSearchSpace, IdentityRunner, Profile, Runner, TrainRunner, OUTPUT_ROOT_ENV,
};
use ifae::metrics::{evaluate, results_csv, IdentityModel};
use ifae::model::{load_checkpoint, save_checkpoint, train_on_manifest, Autoencoder};
use ifae::repr::{derive, to_sdf, InterfaceField, Representation};
use ifae::synthgen::generate_dataset;
use ifae::tensor::{Activation, LossKind};
use ifae::volume::{ingest_diffuse_volumes, read_volume, write_volume, DatasetManifest, IngestConfig, Split};

#[derive(Parser)]
#[command(name = "ifae", version, about = "Autoencoders for 3D two-phase interface fields")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic droplet dataset.
    SynthGen {
        #[arg(long)]
        mu: f64,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "desk")]
        profile: Profile,
        /// Grid size; overrides the profile.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long)]
        sigma: Option<f64>,
    },
    /// Extract SDF patches from diffuse simulation volumes.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        eps_sim: Option<f64>,
        #[arg(long)]
        patch_size: Option<usize>,
        #[arg(long)]
        patches_per_volume: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Convert a stored volume to another representation.
    Convert {
        #[arg(long)]
        input: PathBuf,
        /// Target representation label: sdf, sharp, tanh_1/32, ...
        #[arg(long)]
        to: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model on a dataset's train split.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "sharp")]
        repr: String,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        opts: ConfigOpts,
    },
    /// Evaluate a checkpoint on a split.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "sharp")]
        repr: String,
        #[arg(long, default_value = "test")]
        split: String,
        /// Per-sample CSV destination; printed to stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Reconstruct inputs exactly instead of loading a checkpoint.
        #[arg(long)]
        identity: bool,
    },
    /// Train and evaluate every representation on every dataset.
    ReprSweep(#[command(flatten)] ConfigOpts),
    /// Train the 36-point hyper-parameter grid, scored on the validation split.
    GridSearch {
        #[command(flatten)]
        opts: ConfigOpts,
        #[arg(long, default_value = "sharp")]
        repr: String,
    },
    /// Repeat training with several seeds on a fixed training subset.
    Uncertainty {
        #[command(flatten)]
        opts: ConfigOpts,
        #[arg(long, default_value_t = 5)]
        n_seeds: usize,
        #[arg(long, default_value_t = 0.5)]
        subset_fraction: f64,
    },
    /// Train on nested fractions of the training split and fit a power law.
    TrainsizeSweep {
        #[command(flatten)]
        opts: ConfigOpts,
        #[arg(long, default_value = "sharp")]
        repr: String,
        #[arg(long, value_delimiter = ',', default_values_t = harness::DEFAULT_FRACTIONS.to_vec())]
        fractions: Vec<f64>,
    },
    /// Train on each dataset and evaluate on every dataset.
    CrossEval(#[command(flatten)] ConfigOpts),
    /// Collect sweep outputs into tables, plots and VTK exports.
    Report {
        #[arg(long)]
        results: Option<PathBuf>,
        /// Volumes to export as VTK phase masks.
        #[arg(long)]
        vtk: Vec<PathBuf>,
    },
}

#[derive(Args, Clone, Default)]
struct ConfigOpts {
    /// JSON experiment config; flags override its fields. Takes precedence over --profile.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    profile: Option<Profile>,
    /// Dataset as NAME=MANIFEST; repeatable.
    #[arg(long = "dataset")]
    datasets: Vec<String>,
    /// Representation label; repeatable.
    #[arg(long = "representation")]
    representations: Vec<String>,
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    latent_channels: Option<usize>,
    #[arg(long)]
    base_channels: Option<usize>,
    /// Skip training and reconstruct inputs exactly (plumbing check).
    #[arg(long)]
    identity: bool,
}

impl ConfigOpts {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.profile) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(p)) => ExperimentConfig::for_profile(p),
            (None, None) => ExperimentConfig::for_profile(Profile::Desk),
        };
        for d in &self.datasets {
            let (name, path) = d.split_once('=').with_context(|| format!("dataset {d:?} is not NAME=MANIFEST"))?;
            cfg.datasets.push(DatasetRef { name: name.into(), manifest: path.into() });
        }
        if !self.representations.is_empty() {
            cfg.representations = self.representations.clone();
        }
        if let Ok(root) = std::env::var(OUTPUT_ROOT_ENV) {
            cfg.output_dir = root.into();
        }
        if let Some(o) = &self.output {
            cfg.output_dir = o.clone();
        }
        let t = &mut cfg.train;
        t.epochs = self.epochs.unwrap_or(t.epochs);
        t.lr = self.lr.unwrap_or(t.lr);
        t.weight_decay = self.weight_decay.unwrap_or(t.weight_decay);
        t.batch_size = self.batch_size.unwrap_or(t.batch_size);
        t.loss = self.loss.unwrap_or(t.loss);
        t.seed = self.seed.unwrap_or(t.seed);
        let m = &mut cfg.model;
        m.activation = self.activation.unwrap_or(m.activation);
        m.levels = self.levels.unwrap_or(m.levels);
        m.latent_channels = self.latent_channels.unwrap_or(m.latent_channels);
        m.base_channels = self.base_channels.unwrap_or(m.base_channels);
        cfg.validate()?;
        Ok(cfg)
    }

    fn runner(&self) -> Box<dyn Runner> {
        if self.identity {
            Box::new(IdentityRunner)
        } else {
            Box::new(TrainRunner)
        }
    }
}

fn parse_split(s: &str) -> Result<Split> {
    Ok(match s {
        "train" => Split::Train,
        "test" => Split::Test,
        "val" => Split::Val,
        other => bail!("unknown split {other:?} (train, test, val)"),
    })
}

fn failures_to_exit(failures: &[String]) -> ExitCode {
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        for f in failures {
            eprintln!("failed run: {f}");
        }
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::SynthGen { mu, n, seed, out, profile, grid, sigma } => {
            let mut cfg = profile.synth(mu, seed);
            cfg.grid = grid.unwrap_or(cfg.grid);
            cfg.sigma = sigma.unwrap_or(cfg.sigma);
            let (manifest, stats) = generate_dataset(&cfg, n, &out)?;
            print!("{}", stats.report(&cfg));
            info!("wrote {} samples to {}", manifest.entries.len(), out.display());
        }
        Command::Ingest { input, out, eps_sim, patch_size, patches_per_volume, seed } => {
            let d = IngestConfig::default();
            let cfg = IngestConfig {
                eps_sim: eps_sim.unwrap_or(d.eps_sim),
                patch_size: patch_size.unwrap_or(d.patch_size),
                patches_per_volume: patches_per_volume.unwrap_or(d.patches_per_volume),
                seed: seed.unwrap_or(d.seed),
                ..d
            };
            let m = ingest_diffuse_volumes(&input, &out, &cfg)?;
            println!("{} patches written to {}", m.entries.len(), out.display());
        }
        Command::Convert { input, to, out } => {
            let target = Representation::parse_label(&to)?;
            let (grid, kind) = read_volume(&input)?;
            let field = derive(&to_sdf(&InterfaceField::new(grid, kind)), target)?;
            write_volume(&out, &field.grid, field.kind)?;
        }
        Command::Train { manifest, repr, out, opts } => {
            let cfg = opts.resolve()?;
            let repr = Representation::parse_label(&repr)?;
            let m = DatasetManifest::load(&manifest)?;
            let mut model = Autoencoder::<f32>::new(cfg.model.clone(), cfg.train.effective_init_seed())?;
            info!("{} trainable parameters", model.parameter_count());
            let report = train_on_manifest(&mut model, &m, &m.split(Split::Train), repr, &cfg.train)?;
            save_checkpoint(&model, &out)?;
            let hist = out.with_extension("loss.json");
            std::fs::write(&hist, serde_json::to_string(&report.loss_history)?).with_context(|| hist.display().to_string())?;
            if let Some(l) = report.loss_history.last() {
                println!("final loss {l:.6e}");
            }
        }
        Command::Eval { manifest, checkpoint, repr, split, out, identity } => {
            let repr = Representation::parse_label(&repr)?;
            let m = DatasetManifest::load(&manifest)?;
            let entries = m.split(parse_split(&split)?);
            let ev = match (identity, checkpoint) {
                (true, _) => evaluate(&IdentityModel, &m, &entries, repr)?,
                (false, Some(c)) => evaluate(&load_checkpoint(&c)?, &m, &entries, repr)?,
                (false, None) => bail!("--checkpoint is required unless --identity is set"),
            };
            let csv = results_csv(&ev.results);
            match out {
                Some(p) => std::fs::write(&p, csv).with_context(|| p.display().to_string())?,
                None => print!("{csv}"),
            }
            println!("mean dice {:.6}, mean hausdorff {:.6}", ev.mean_dice(), ev.mean_hausdorff());
        }
        Command::ReprSweep(opts) => {
            let cfg = opts.resolve()?;
            let report = harness::repr_sweep(&cfg, &cfg.load_datasets()?, opts.runner().as_ref())?;
            for r in &report.rows {
                println!("{} {}: dice {:.4}, hausdorff {:.4} ({})", r.dataset, r.representation, r.mean_dice, r.mean_hausdorff, r.status);
            }
            return Ok(failures_to_exit(&report.failures));
        }
        Command::GridSearch { opts, repr } => {
            let cfg = opts.resolve()?;
            let datasets = cfg.load_datasets()?;
            let repr = Representation::parse_label(&repr)?;
            let mut failures = Vec::new();
            for ds in &datasets {
                let report = harness::grid_search(&cfg, ds, repr, &GridSearchSpace::default(), opts.runner().as_ref())?;
                if let Some(b) = report.best() {
                    println!("{}: best {:?} (val dice {:.4})", ds.name, b.point, b.score);
                }
                failures.extend(report.failures);
            }
            return Ok(failures_to_exit(&failures));
        }
        Command::Uncertainty { opts, n_seeds, subset_fraction } => {
            let cfg = opts.resolve()?;
            let mut failures = Vec::new();
            for ds in &cfg.load_datasets()? {
                let report = harness::uncertainty(&cfg, ds, n_seeds, subset_fraction, opts.runner().as_ref())?;
                for r in &report.rows {
                    let s = &r.stats;
                    println!("{} {} {}: {:.4} ± {:.4} [{:.4}, {:.4}]", ds.name, r.representation, r.metric, s.mean, s.std, s.ci_lo, s.ci_hi);
                }
                failures.extend(report.failures);
            }
            return Ok(failures_to_exit(&failures));
        }
        Command::TrainsizeSweep { opts, repr, fractions } => {
            let cfg = opts.resolve()?;
            let repr = Representation::parse_label(&repr)?;
            let mut failures = Vec::new();
            for ds in &cfg.load_datasets()? {
                let report = harness::trainsize_sweep(&cfg, ds, repr, &fractions, opts.runner().as_ref())?;
                match report.fit {
                    Some((b, _)) => println!("{}: 1 - dice ~ N^{b:.3}", ds.name),
                    None => warn!("{}: not enough points for a power-law fit", ds.name),
                }
                failures.extend(report.failures);
            }
            return Ok(failures_to_exit(&failures));
        }
        Command::CrossEval(opts) => {
            let cfg = opts.resolve()?;
            let report = harness::cross_eval(&cfg, &cfg.load_datasets()?, opts.runner().as_ref())?;
            for c in &report.cells {
                println!("{} {} -> {}: dice {:.4}", c.representation, c.train_dataset, c.test_dataset, c.mean_dice);
            }
            return Ok(failures_to_exit(&report.failures));
        }
        Command::Report { results, vtk } => {
            let results = results
                .or_else(|| std::env::var(OUTPUT_ROOT_ENV).ok().map(PathBuf::from))
                .unwrap_or_else(|| ExperimentConfig::default().output_dir);
            let sum = harness::report(&results, &vtk)?;
            println!("{} files written to {}", sum.written.len(), results.join("report").display());
            for m in &sum.missing {
                println!("missing: {m}");
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
