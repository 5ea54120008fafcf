use std::fmt::Write as _;

use log::{error, info, warn};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{execute_cached, file_label, write_text, Dataset, EvalTarget, ExperimentConfig, Job, RunResult, Runner};
use crate::metrics::{histogram_csv, summarize, LogBins, SummaryStats, HAUSDORFF_SENTINEL};
use crate::repr::Representation;
use crate::tensor::{Activation, LossKind};
use crate::volume::{ManifestEntry, Split};
use crate::{Error, Result};

fn test_target(ds: &Dataset) -> EvalTarget<'_> {
    EvalTarget { name: ds.name.clone(), manifest: &ds.manifest, entries: ds.entries(Split::Test) }
}

fn run_or_record(runner: &dyn Runner, job: &Job, cfg: &ExperimentConfig, failures: &mut Vec<String>) -> Option<RunResult> {
    match execute_cached(runner, job, &cfg.output_dir) {
        Ok(r) => Some(r),
        Err(e) => {
            let msg = format!("{} / {} ({}): {e}", job.spec.dataset, job.spec.representation.label(), job.spec.hash());
            error!("run failed: {msg}");
            failures.push(msg);
            None
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReprRow {
    pub dataset: String,
    pub representation: String,
    pub mean_dice: f64,
    pub mean_hausdorff: f64,
    pub n: usize,
    pub status: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ReprSweepReport {
    pub rows: Vec<ReprRow>,
    pub failures: Vec<String>,
}

impl ReprSweepReport {
    pub fn mean_dice(&self, dataset: &str, repr: &Representation) -> Option<f64> {
        let label = repr.label();
        self.rows.iter().find(|r| r.dataset == dataset && r.representation == label).map(|r| r.mean_dice)
    }
}

/// Trains one model per (dataset, representation) on the train split and scores
/// it on the test split. Writes `repr_sweep.csv` and one droplet histogram per run.
pub fn repr_sweep(cfg: &ExperimentConfig, datasets: &[Dataset], runner: &dyn Runner) -> Result<ReprSweepReport> {
    let reprs = cfg.representations()?;
    let mut report = ReprSweepReport::default();
    let mut csv = String::from("dataset,representation,kind,sample_id,dice,hausdorff_norm,flags\n");
    let bins = LogBins::default();
    for ds in datasets {
        for repr in &reprs {
            let job = Job::new(
                runner.name(),
                ds,
                ds.entries(Split::Train),
                vec![test_target(ds)],
                *repr,
                cfg.model.clone(),
                cfg.train.clone(),
            );
            let label = repr.label();
            let Some(run) = run_or_record(runner, &job, cfg, &mut report.failures) else {
                let _ = writeln!(csv, "{},{label},aggregate,mean,NaN,NaN,failed", ds.name);
                report.rows.push(ReprRow {
                    dataset: ds.name.clone(),
                    representation: label,
                    mean_dice: f64::NAN,
                    mean_hausdorff: f64::NAN,
                    n: 0,
                    status: "failed".into(),
                });
                continue;
            };
            let rec = run.evaluations.get(&ds.name).cloned().unwrap_or_default();
            for r in &rec.results {
                let _ = writeln!(csv, "{},{label},sample,{},{},{},{}", ds.name, r.sample_id, r.dice, r.hausdorff_norm, r.flags());
            }
            let status = if run.diverged.is_some() { "diverged" } else { "ok" };
            let (dice, hd) = (run.score(&ds.name), rec.mean_hausdorff());
            let _ = writeln!(csv, "{},{label},aggregate,mean,{dice},{hd},{status}", ds.name);
            let (t, p) = rec.droplet_histograms();
            write_text(&cfg.output_dir.join(format!("droplets_{}_{}.csv", ds.name, file_label(repr))), &histogram_csv(&bins, &t, &p))?;
            report.rows.push(ReprRow {
                dataset: ds.name.clone(),
                representation: label,
                mean_dice: dice,
                mean_hausdorff: hd,
                n: rec.results.len(),
                status: status.into(),
            });
        }
    }
    write_text(&cfg.output_dir.join("repr_sweep.csv"), &csv)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSearchSpace {
    pub losses: Vec<LossKind>,
    pub lrs: Vec<f64>,
    pub weight_decays: Vec<f64>,
    pub activations: Vec<Activation>,
}

impl Default for GridSearchSpace {
    fn default() -> Self {
        Self {
            losses: LossKind::ALL.to_vec(),
            lrs: vec![1e-3, 1e-4, 1e-5],
            weight_decays: vec![1e-4, 1e-6],
            activations: Activation::ALL.to_vec(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub loss: LossKind,
    pub lr: f64,
    pub weight_decay: f64,
    pub activation: Activation,
}

impl GridSearchSpace {
    /// Cartesian product in a fixed order (loss, lr, weight decay, activation).
    pub fn points(&self) -> Vec<GridPoint> {
        let mut out = Vec::new();
        for &loss in &self.losses {
            for &lr in &self.lrs {
                for &weight_decay in &self.weight_decays {
                    for &activation in &self.activations {
                        out.push(GridPoint { loss, lr, weight_decay, activation });
                    }
                }
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub point: GridPoint,
    pub score: f64,
    pub status: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GridSearchReport {
    /// Best first; ties keep grid order.
    pub ranked: Vec<GridRow>,
    pub failures: Vec<String>,
}

impl GridSearchReport {
    pub fn best(&self) -> Option<&GridRow> {
        self.ranked.first()
    }
}

fn grid_line(p: &GridPoint) -> String {
    format!("{},{:e},{:e},{}", p.loss, p.lr, p.weight_decay, p.activation)
}

/// Trains every grid point once on the train split and scores mean Dice on the
/// validation split; diverged or failed runs score 0.
pub fn grid_search(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    repr: Representation,
    space: &GridSearchSpace,
    runner: &dyn Runner,
) -> Result<GridSearchReport> {
    let val = ds.entries(Split::Val);
    if val.is_empty() {
        return Err(Error::Config(format!("dataset {:?} has an empty validation split", ds.name)));
    }
    let mut report = GridSearchReport::default();
    let mut rows = Vec::new();
    for p in space.points() {
        let model = crate::model::ModelConfig { activation: p.activation, ..cfg.model.clone() };
        let train = crate::model::TrainConfig { lr: p.lr, loss: p.loss, weight_decay: p.weight_decay, ..cfg.train.clone() };
        let target = EvalTarget { name: "val".into(), manifest: &ds.manifest, entries: val.clone() };
        let job = Job::new(runner.name(), ds, ds.entries(Split::Train), vec![target], repr, model, train);
        let (score, status) = match run_or_record(runner, &job, cfg, &mut report.failures) {
            Some(r) if r.diverged.is_some() => (0.0, "diverged"),
            Some(r) => (r.score("val"), "ok"),
            None => (0.0, "failed"),
        };
        rows.push(GridRow { point: p, score, status: status.into() });
    }
    let mut par = String::from("loss,lr,weight_decay,activation,score\n");
    for r in &rows {
        let _ = writeln!(par, "{},{}", grid_line(&r.point), r.score);
    }
    let mut ranked = rows;
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut table = String::from("rank,loss,lr,weight_decay,activation,val_dice,status\n");
    for (i, r) in ranked.iter().enumerate() {
        let _ = writeln!(table, "{},{},{},{}", i + 1, grid_line(&r.point), r.score, r.status);
    }
    let top5: String = table.lines().take(6).map(|l| format!("{l}\n")).collect();
    let dir = cfg.output_dir.join(format!("grid_search_{}_{}", ds.name, file_label(&repr)));
    write_text(&dir.join("grid_search.csv"), &table)?;
    write_text(&dir.join("top5.csv"), &top5)?;
    write_text(&dir.join("parallel_coords.csv"), &par)?;
    if let Some(best) = ranked.first() {
        let wd = if best.point.weight_decay == 1e-6 { "observed" } else { "not observed" };
        let act = if best.point.activation == Activation::Silu { "observed" } else { "not observed" };
        let text = format!(
            "best: {} (val dice {})\nexpected weight decay 1e-6: {wd}\nexpected activation silu: {act}\n",
            grid_line(&best.point),
            best.score
        );
        write_text(&dir.join("expectations.txt"), &text)?;
        info!("grid search best {}", grid_line(&best.point));
    }
    report.ranked = ranked;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyRow {
    pub representation: String,
    pub metric: String,
    pub stats: SummaryStats,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct UncertaintyReport {
    pub rows: Vec<UncertaintyRow>,
    pub failures: Vec<String>,
}

/// `ceil(fraction · n)` samples from a seeded shuffle of `entries` (sorted by id
/// first), for each fraction; larger fractions extend smaller ones.
pub fn nested_subsets<'a>(entries: &[&'a ManifestEntry], fractions: &[f64], seed: u64) -> Result<Vec<Vec<&'a ManifestEntry>>> {
    let mut order: Vec<&ManifestEntry> = entries.to_vec();
    order.sort_by(|a, b| a.id.cmp(&b.id));
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    fractions
        .iter()
        .map(|&f| {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::Config(format!("fraction {f} outside (0, 1]")));
            }
            let k = ((f * order.len() as f64) - 1e-9).ceil().max(1.0) as usize;
            Ok(order[..k.min(order.len())].to_vec())
        })
        .collect()
}

/// Trains one model per seed on a fixed `subset_fraction` of the train split and
/// summarizes test Dice and Hausdorff per representation.
pub fn uncertainty(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    n_seeds: usize,
    subset_fraction: f64,
    runner: &dyn Runner,
) -> Result<UncertaintyReport> {
    if n_seeds < 2 {
        return Err(Error::Config("uncertainty needs at least 2 seeds".into()));
    }
    let seeds: Vec<u64> = if cfg.seeds.len() >= n_seeds { cfg.seeds[..n_seeds].to_vec() } else { (0..n_seeds as u64).collect() };
    let subset = nested_subsets(&ds.entries(Split::Train), &[subset_fraction], cfg.train.seed)?.remove(0);
    let mut report = UncertaintyReport::default();
    let mut csv = String::from("representation,metric,mean,std,ci_lo,ci_hi,n\n");
    for repr in cfg.representations()? {
        let mut dice = Vec::new();
        let mut hd = Vec::new();
        for &seed in &seeds {
            let train = crate::model::TrainConfig { seed, ..cfg.train.clone() };
            let job = Job::new(runner.name(), ds, subset.clone(), vec![test_target(ds)], repr, cfg.model.clone(), train);
            if let Some(r) = run_or_record(runner, &job, cfg, &mut report.failures) {
                dice.push(r.score(&ds.name));
                hd.push(if r.diverged.is_some() { HAUSDORFF_SENTINEL } else { r.hausdorff(&ds.name) });
            }
        }
        for (metric, values) in [("dice", &dice), ("hausdorff", &hd)] {
            match summarize(values) {
                Ok(s) => {
                    let _ = writeln!(csv, "{},{metric},{},{},{},{},{}", repr.label(), s.mean, s.std, s.ci_lo, s.ci_hi, s.n);
                    report.rows.push(UncertaintyRow { representation: repr.label(), metric: metric.into(), stats: s });
                }
                Err(e) => warn!("{} {metric}: {e}", repr.label()),
            }
        }
    }
    write_text(&cfg.output_dir.join(format!("uncertainty_{}.csv", ds.name)), &csv)?;
    Ok(report)
}

/// Least-squares fit of `log(1 - dice) = a + b · log n`; returns `(b, a)`.
/// Points with `dice >= 1` carry no error signal and are skipped.
pub fn fit_power_law(n: &[usize], dice: &[f64]) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = n
        .iter()
        .zip(dice)
        .filter(|(&k, &d)| k > 0 && d < 1.0 && d.is_finite())
        .map(|(&k, &d)| ((k as f64).ln(), (1.0 - d).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let (mx, my) = (pts.iter().map(|p| p.0).sum::<f64>() / m, pts.iter().map(|p| p.1).sum::<f64>() / m);
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let b = sxy / sxx;
    Some((b, my - b * mx))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainsizeRow {
    pub fraction: f64,
    pub n_train: usize,
    pub mean_dice: f64,
    pub mean_hausdorff: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainsizeReport {
    pub rows: Vec<TrainsizeRow>,
    /// Fitted exponent and intercept of `1 - dice ∝ n^b`.
    pub fit: Option<(f64, f64)>,
    pub failures: Vec<String>,
}

pub const DEFAULT_FRACTIONS: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.0625];

pub fn trainsize_sweep(
    cfg: &ExperimentConfig,
    ds: &Dataset,
    repr: Representation,
    fractions: &[f64],
    runner: &dyn Runner,
) -> Result<TrainsizeReport> {
    let subsets = nested_subsets(&ds.entries(Split::Train), fractions, cfg.train.seed)?;
    if let Some(small) = subsets.iter().map(Vec::len).min() {
        if small < 4 && fractions.len() > 1 {
            return Err(Error::Config(format!("smallest training subset has {small} samples; at least 4 are needed")));
        }
    }
    let mut report = TrainsizeReport::default();
    let mut csv = String::from("fraction,n_train,mean_dice,mean_hausdorff\n");
    for (&f, subset) in fractions.iter().zip(subsets) {
        let n = subset.len();
        let job = Job::new(runner.name(), ds, subset, vec![test_target(ds)], repr, cfg.model.clone(), cfg.train.clone());
        if let Some(r) = run_or_record(runner, &job, cfg, &mut report.failures) {
            let row = TrainsizeRow { fraction: f, n_train: n, mean_dice: r.score(&ds.name), mean_hausdorff: r.hausdorff(&ds.name) };
            let _ = writeln!(csv, "{},{},{},{}", row.fraction, row.n_train, row.mean_dice, row.mean_hausdorff);
            report.rows.push(row);
        }
    }
    let ns: Vec<usize> = report.rows.iter().map(|r| r.n_train).collect();
    let ds_: Vec<f64> = report.rows.iter().map(|r| r.mean_dice).collect();
    report.fit = fit_power_law(&ns, &ds_);
    let mut fit = String::from("quantity,exponent,intercept,points\n");
    match report.fit {
        Some((b, a)) => {
            let _ = writeln!(fit, "log(1-dice) vs log(n),{b},{a},{}", ns.len());
        }
        None => {
            let _ = writeln!(fit, "log(1-dice) vs log(n),NaN,NaN,{}", ns.len());
        }
    }
    let stem = format!("trainsize_{}_{}", ds.name, file_label(&repr));
    write_text(&cfg.output_dir.join(format!("{stem}.csv")), &csv)?;
    write_text(&cfg.output_dir.join(format!("{stem}_fit.csv")), &fit)?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CrossCell {
    pub representation: String,
    pub train_dataset: String,
    pub test_dataset: String,
    pub mean_dice: f64,
    pub mean_hausdorff: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CrossEvalReport {
    pub cells: Vec<CrossCell>,
    pub failures: Vec<String>,
}

/// For each representation and training dataset, one model scored on every
/// dataset's test split.
pub fn cross_eval(cfg: &ExperimentConfig, datasets: &[Dataset], runner: &dyn Runner) -> Result<CrossEvalReport> {
    let mut report = CrossEvalReport::default();
    let mut csv = String::from("representation,train_dataset,test_dataset,mean_dice,mean_hausdorff\n");
    for repr in cfg.representations()? {
        for train_ds in datasets {
            let targets = datasets.iter().map(test_target).collect();
            let job = Job::new(runner.name(), train_ds, train_ds.entries(Split::Train), targets, repr, cfg.model.clone(), cfg.train.clone());
            let run = run_or_record(runner, &job, cfg, &mut report.failures);
            for test_ds in datasets {
                let (d, h) = run.as_ref().map_or((f64::NAN, f64::NAN), |r| (r.score(&test_ds.name), r.hausdorff(&test_ds.name)));
                let _ = writeln!(csv, "{},{},{},{d},{h}", repr.label(), train_ds.name, test_ds.name);
                report.cells.push(CrossCell {
                    representation: repr.label(),
                    train_dataset: train_ds.name.clone(),
                    test_dataset: test_ds.name.clone(),
                    mean_dice: d,
                    mean_hausdorff: h,
                });
            }
        }
    }
    write_text(&cfg.output_dir.join("cross_eval.csv"), &csv)?;
    Ok(report)
}

