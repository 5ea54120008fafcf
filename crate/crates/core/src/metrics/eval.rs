use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{dice, droplet_size_distribution, hausdorff, summarize, DropletHistogram, LogBins, SummaryStats};
use crate::model::Autoencoder;
use crate::repr::{binarize, InterfaceField, Representation};
use crate::volume::{DatasetManifest, ManifestEntry, VoxelGrid};
use crate::Result;

/// Anything that maps an input field to a reconstructed field of the same dims.
pub trait Reconstructor {
    fn reconstruct_field(&self, input: &VoxelGrid) -> Result<VoxelGrid>;
}

impl Reconstructor for Autoencoder<f32> {
    fn reconstruct_field(&self, input: &VoxelGrid) -> Result<VoxelGrid> {
        self.reconstruct_grid(input)
    }
}

/// Returns its input unchanged.
#[derive(Clone, Copy, Debug, Default)]
pub struct IdentityModel;

impl Reconstructor for IdentityModel {
    fn reconstruct_field(&self, input: &VoxelGrid) -> Result<VoxelGrid> {
        Ok(input.clone())
    }
}

/// Outputs a constant field.
#[derive(Clone, Copy, Debug)]
pub struct ConstantModel(pub f32);

impl Reconstructor for ConstantModel {
    fn reconstruct_field(&self, input: &VoxelGrid) -> Result<VoxelGrid> {
        Ok(VoxelGrid::filled(input.dims(), self.0))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub sample_id: String,
    pub dice: f64,
    pub hausdorff_norm: f64,
    pub empty_truth: bool,
    pub empty_prediction: bool,
    /// Hausdorff is the sentinel because exactly one interface was empty.
    pub hausdorff_sentinel: bool,
}

impl EvalResult {
    pub fn flags(&self) -> String {
        let mut f = Vec::new();
        if self.empty_truth {
            f.push("empty_truth");
        }
        if self.empty_prediction {
            f.push("empty_prediction");
        }
        if self.hausdorff_sentinel {
            f.push("hausdorff_sentinel");
        }
        f.join("|")
    }
}

/// Per-sample results plus pooled droplet volumes of truths and predictions.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub representation: Representation,
    pub results: Vec<EvalResult>,
    pub truth_droplets: DropletHistogram,
    pub pred_droplets: DropletHistogram,
}

impl Evaluation {
    pub fn dice(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.dice).collect()
    }

    pub fn hausdorff(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.hausdorff_norm).collect()
    }

    pub fn mean_dice(&self) -> f64 {
        mean(&self.dice())
    }

    pub fn mean_hausdorff(&self) -> f64 {
        mean(&self.hausdorff())
    }

    pub fn dice_stats(&self) -> Result<SummaryStats> {
        summarize(&self.dice())
    }

    pub fn hausdorff_stats(&self) -> Result<SummaryStats> {
        summarize(&self.hausdorff())
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Scores one sample: both fields are binarized in their own representation.
fn score(id: &str, truth: &InterfaceField, pred: &InterfaceField) -> Result<(EvalResult, DropletHistogram, DropletHistogram)> {
    let t = binarize(truth);
    let p = binarize(pred);
    let hd = hausdorff(&p, &t)?;
    let r = EvalResult {
        sample_id: id.to_string(),
        dice: dice(&p, &t)?,
        hausdorff_norm: hd.value,
        empty_truth: t.count() == 0,
        empty_prediction: p.count() == 0,
        hausdorff_sentinel: hd.one_sided_empty,
    };
    Ok((r, droplet_size_distribution(&t), droplet_size_distribution(&p)))
}

/// Evaluates `model` on fields that are already in their input representation.
pub fn evaluate_fields<M: Reconstructor + ?Sized>(model: &M, samples: &[(String, InterfaceField)]) -> Result<Evaluation> {
    let representation = samples.first().map_or(Representation::Sharp, |s| s.1.kind);
    let mut ev = Evaluation {
        representation,
        results: Vec::with_capacity(samples.len()),
        truth_droplets: DropletHistogram::default(),
        pred_droplets: DropletHistogram::default(),
    };
    for (id, field) in samples {
        let out = model.reconstruct_field(&field.grid).map_err(|e| e.in_sample(id))?;
        let pred = InterfaceField::new(out, field.kind);
        let (r, th, ph) = score(id, field, &pred).map_err(|e| e.in_sample(id))?;
        ev.results.push(r);
        ev.truth_droplets.volumes.extend(th.volumes);
        ev.pred_droplets.volumes.extend(ph.volumes);
    }
    Ok(ev)
}

/// Loads `entries` in representation `repr`, reconstructs, and scores them.
pub fn evaluate<M: Reconstructor + ?Sized>(
    model: &M,
    manifest: &DatasetManifest,
    entries: &[&ManifestEntry],
    repr: Representation,
) -> Result<Evaluation> {
    let samples = entries
        .iter()
        .map(|e| Ok((e.id.clone(), manifest.load_as(e, repr)?)))
        .collect::<Result<Vec<_>>>()?;
    let mut ev = evaluate_fields(model, &samples)?;
    ev.representation = repr;
    Ok(ev)
}

pub fn results_csv(results: &[EvalResult]) -> String {
    let mut s = String::from("sample_id,dice,hausdorff_norm,flags\n");
    for r in results {
        let _ = writeln!(s, "{},{},{},{}", r.sample_id, r.dice, r.hausdorff_norm, r.flags());
    }
    s
}

pub fn histogram_csv(bins: &LogBins, truth: &DropletHistogram, pred: &DropletHistogram) -> String {
    let edges = bins.edges();
    let (ct, cp) = (truth.counts(bins), pred.counts(bins));
    let mut s = String::from("bin_lo,bin_hi,count_truth,count_pred\n");
    for i in 0..bins.n {
        let _ = writeln!(s, "{},{},{},{}", edges[i], edges[i + 1], ct[i], cp[i]);
    }
    s
}
