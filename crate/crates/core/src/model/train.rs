use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{batch_from_grids, Autoencoder};
use crate::repr::Representation;
use crate::tensor::{AdamConfig, AdamState, Graph, LossKind, Tensor};
use crate::volume::{DatasetManifest, ManifestEntry, VoxelGrid};
use crate::{Error, Result};

/// Optimization settings. The activation lives in [`super::ModelConfig`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub loss: LossKind,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Drives batch shuffling, and weight initialization unless `init_seed` is set.
    pub seed: u64,
    pub init_seed: Option<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { lr: 1e-5, loss: LossKind::L1, weight_decay: 1e-6, batch_size: 4, epochs: 100, seed: 0, init_seed: None }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and non-negative, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        self.adam().validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig { lr: self.lr, weight_decay: self.weight_decay, ..AdamConfig::default() }
    }

    pub fn effective_init_seed(&self) -> u64 {
        self.init_seed.unwrap_or(self.seed)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean batch loss per epoch.
    pub loss_history: Vec<f64>,
    pub steps: u64,
}

fn param_norms(model: &Autoencoder<f32>) -> String {
    model
        .params()
        .iter()
        .map(|p| format!("{}={:.4e}", p.name, p.tensor.l2_norm()))
        .collect::<Vec<_>>()
        .join(", ")
}

/// Fits `model` to reproduce `samples` (autoencoding: input = target).
///
/// Each epoch shuffles the sample order with a generator seeded from `tc.seed`
/// and walks it in mini-batches; the final batch may be smaller.
pub fn train(model: &mut Autoencoder<f32>, samples: &[VoxelGrid], tc: &TrainConfig) -> Result<TrainReport> {
    tc.validate()?;
    let first = samples.first().ok_or_else(|| Error::Usage("no training samples".into()))?;
    for s in samples {
        first.same_dims(s)?;
    }
    model.config().check_input(first.dims())?;
    let mut adam = AdamState::new(tc.adam(), model.params())?;
    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..tc.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(tc.batch_size).enumerate() {
            let grids: Vec<&VoxelGrid> = chunk.iter().map(|&i| &samples[i]).collect();
            let x: Tensor<f32> = batch_from_grids(&grids)?;
            let mut g = Graph::new();
            let xv = g.input(x);
            let y = model.reconstruct_graph(&mut g, xv)?;
            let l = g.loss(y, xv, tc.loss)?;
            let loss = g.value(l).item()? as f64;
            if !loss.is_finite() {
                return Err(Error::Diverged { epoch, batch: bi, norms: param_norms(model) });
            }
            model.params_mut().zero_grad();
            g.backward(l, model.params_mut())?;
            adam.step(model.params_mut())?;
            total += loss;
            batches += 1;
            report.steps += 1;
        }
        let mean = total / batches as f64;
        debug!("epoch {epoch}: loss {mean:.6e}");
        report.loss_history.push(mean);
    }
    if let (Some(a), Some(b)) = (report.loss_history.first(), report.loss_history.last()) {
        info!("trained {} epochs, loss {a:.4e} -> {b:.4e}", tc.epochs);
    }
    Ok(report)
}

/// Loads `entries` in representation `repr`.
pub fn load_split(manifest: &DatasetManifest, entries: &[&ManifestEntry], repr: Representation) -> Result<Vec<VoxelGrid>> {
    entries.iter().map(|e| Ok(manifest.load_as(e, repr)?.grid)).collect()
}

/// Trains on the listed manifest entries converted to `repr`.
pub fn train_on_manifest(
    model: &mut Autoencoder<f32>,
    manifest: &DatasetManifest,
    entries: &[&ManifestEntry],
    repr: Representation,
    tc: &TrainConfig,
) -> Result<TrainReport> {
    let samples = load_split(manifest, entries, repr)?;
    train(model, &samples, tc)
}
