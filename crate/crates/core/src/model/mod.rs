//! Residual convolutional autoencoder: architecture, training, checkpoints.
//!
//! Encoder: a 3³ stem conv (1 → base channels), then per level two residual
//! blocks and a stride-2 3³ downsampling conv, then a 1×1×1 latent head down to
//! `Z` channels. The decoder mirrors it with a 1×1×1 tail, per level a nearest ×2
//! upsample + 3³ conv and two residual blocks, and a linear 1×1×1 output head.
//! Level `ℓ` runs at `base · 2^ℓ` channels.

mod checkpoint;
mod train;

pub use checkpoint::{checkpoint_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use train::{load_split, train, train_on_manifest, TrainConfig, TrainReport};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::tensor::{Activation, ConvSpec, Graph, PaddingMode, ParamId, ParamStore, Scalar, Tensor, Var};
use crate::volume::VoxelGrid;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Number of down/upsampling levels `N`.
    pub levels: usize,
    /// Latent channels `Z`.
    pub latent_channels: usize,
    pub base_channels: usize,
    pub groups: usize,
    pub activation: Activation,
    pub eps_ws: f64,
    pub eps_gn: f64,
    pub padding: PaddingMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            latent_channels: 4,
            base_channels: 16,
            groups: 8,
            activation: Activation::Silu,
            eps_ws: 1e-5,
            eps_gn: 1e-5,
            padding: PaddingMode::Zeros,
        }
    }
}

impl ModelConfig {
    /// Channels at level `l` (`base · 2^l`).
    pub fn channels(&self, level: usize) -> usize {
        self.base_channels << level
    }

    /// Channels entering the latent head.
    pub fn top_channels(&self) -> usize {
        if self.levels == 0 {
            self.base_channels
        } else {
            self.channels(self.levels - 1)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_channels == 0 || self.base_channels == 0 || self.groups == 0 {
            return Err(Error::Config("latent, base channels and groups must be positive".into()));
        }
        if self.levels > 12 {
            return Err(Error::Config(format!("{} levels is unreasonably deep", self.levels)));
        }
        for l in 0..self.levels.max(1) {
            let c = self.channels(l);
            if !c.is_multiple_of(self.groups) {
                return Err(Error::Config(format!("level {l} has {c} channels, not divisible by {} groups", self.groups)));
            }
        }
        if !(self.eps_ws > 0.0 && self.eps_gn > 0.0) {
            return Err(Error::Config("normalization epsilons must be positive".into()));
        }
        Ok(())
    }

    /// Checks that `dims` survive `N` halvings.
    pub fn check_input(&self, dims: [usize; 3]) -> Result<()> {
        let f = 1usize << self.levels;
        if dims.iter().any(|&d| d == 0 || d % f != 0) {
            return Err(Error::Config(format!("input dims {dims:?} are not divisible by 2^{} = {f}", self.levels)));
        }
        Ok(())
    }

    pub fn latent_dims(&self, dims: [usize; 3]) -> Result<[usize; 3]> {
        self.check_input(dims)?;
        Ok(dims.map(|d| d >> self.levels))
    }

    /// Latent tensor shape `(Z, D/2^N, H/2^N, W/2^N)` for one single-channel sample.
    pub fn latent_shape(&self, dims: [usize; 3]) -> Result<[usize; 4]> {
        let [d, h, w] = self.latent_dims(dims)?;
        Ok([self.latent_channels, d, h, w])
    }
}

/// Input dimensionality over latent dimensionality; `2^{3N} / Z` for cubic inputs.
pub fn compression_ratio(config: &ModelConfig, dims: [usize; 3]) -> Result<f64> {
    let [z, d, h, w] = config.latent_shape(dims)?;
    let input: usize = dims.iter().product();
    Ok(input as f64 / (z * d * h * w) as f64)
}

#[derive(Clone, Debug)]
struct Conv {
    w: ParamId,
    b: Option<ParamId>,
    stride: usize,
}

#[derive(Clone, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
}

#[derive(Clone, Debug)]
struct Block {
    conv1: ParamId,
    norm1: Norm,
    conv2: ParamId,
    norm2: Norm,
    skip: Conv,
}

#[derive(Clone, Debug)]
struct Layout {
    stem: Conv,
    encoder: Vec<(Block, Block, Conv)>,
    head: Conv,
    tail: Conv,
    /// Top level first.
    decoder: Vec<(Conv, Block, Block)>,
    output: Conv,
}

struct Builder<'a, T> {
    store: &'a mut ParamStore<T>,
    rng: ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    fn uniform(&mut self, name: String, shape: Vec<usize>, bound: f64) -> Result<ParamId> {
        let rng = &mut self.rng;
        let t = Tensor::from_fn(shape, |_| T::c(rng.random_range(-bound..=bound)));
        self.store.add(name, t, true)
    }

    fn conv(&mut self, name: &str, cin: usize, cout: usize, k: usize, stride: usize, bias: bool) -> Result<Conv> {
        let bound = 1.0 / ((cin * k * k * k) as f64).sqrt();
        let w = self.uniform(format!("{name}.weight"), vec![cout, cin, k, k, k], bound)?;
        let b = if bias { Some(self.uniform(format!("{name}.bias"), vec![cout], bound)?) } else { None };
        Ok(Conv { w, b, stride })
    }

    fn norm(&mut self, name: &str, c: usize) -> Result<Norm> {
        let gamma = self.store.add(format!("{name}.gamma"), Tensor::full(vec![c], T::one()), true)?;
        let beta = self.store.add(format!("{name}.beta"), Tensor::zeros(vec![c]), true)?;
        Ok(Norm { gamma, beta })
    }

    fn block(&mut self, name: &str, cin: usize, cout: usize) -> Result<Block> {
        let conv1 = self.conv(&format!("{name}.conv1"), cin, cout, 3, 1, false)?.w;
        let norm1 = self.norm(&format!("{name}.norm1"), cout)?;
        let conv2 = self.conv(&format!("{name}.conv2"), cout, cout, 3, 1, false)?.w;
        let norm2 = self.norm(&format!("{name}.norm2"), cout)?;
        let skip = self.conv(&format!("{name}.skip"), cin, cout, 1, 1, true)?;
        Ok(Block { conv1, norm1, conv2, norm2, skip })
    }
}

/// The autoencoder: configuration, parameters, and their wiring.
#[derive(Clone, Debug)]
pub struct Autoencoder<T> {
    config: ModelConfig,
    params: ParamStore<T>,
    layout: Layout,
}

impl<T: Scalar> Autoencoder<T> {
    /// Builds the network with uniform `±1/sqrt(fan_in)` initial weights drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut params = ParamStore::new();
        let mut b = Builder { store: &mut params, rng: ChaCha8Rng::seed_from_u64(seed) };
        let base = config.base_channels;
        let stem = b.conv("encoder.stem", 1, base, 3, 1, true)?;
        let mut encoder = Vec::new();
        let mut cin = base;
        for l in 0..config.levels {
            let c = config.channels(l);
            let b1 = b.block(&format!("encoder.level{l}.block1"), cin, c)?;
            let b2 = b.block(&format!("encoder.level{l}.block2"), c, c)?;
            let down = b.conv(&format!("encoder.level{l}.down"), c, c, 3, 2, true)?;
            encoder.push((b1, b2, down));
            cin = c;
        }
        let top = config.top_channels();
        let z = config.latent_channels;
        let head = b.conv("encoder.head", top, z, 1, 1, true)?;
        let tail = b.conv("decoder.tail", z, top, 1, 1, true)?;
        let mut decoder = Vec::new();
        for l in (0..config.levels).rev() {
            let c = config.channels(l);
            let cout = if l == 0 { base } else { config.channels(l - 1) };
            let up = b.conv(&format!("decoder.level{l}.up"), c, c, 3, 1, true)?;
            let b1 = b.block(&format!("decoder.level{l}.block1"), c, c)?;
            let b2 = b.block(&format!("decoder.level{l}.block2"), c, cout)?;
            decoder.push((up, b1, b2));
        }
        let output = b.conv("decoder.output", base, 1, 1, 1, true)?;
        let layout = Layout { stem, encoder, head, tail, decoder, output };
        Ok(Self { config, params, layout })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn parameter_count(&self) -> usize {
        self.params.trainable_count()
    }

    pub fn cast<U: Scalar>(&self) -> Autoencoder<U> {
        Autoencoder { config: self.config.clone(), params: self.params.cast(), layout: self.layout.clone() }
    }

    fn conv(&self, g: &mut Graph<T>, x: Var, c: &Conv) -> Result<Var> {
        let w = g.param(&self.params, c.w);
        let b = c.b.map(|b| g.param(&self.params, b));
        let k = self.params.get(c.w).tensor.shape()[2];
        let spec = ConvSpec { stride: c.stride, padding: (k - 1) / 2, mode: self.config.padding };
        g.conv3d(x, w, b, spec)
    }

    fn ws_norm_act(&self, g: &mut Graph<T>, x: Var, w: ParamId, n: &Norm) -> Result<Var> {
        let w = g.param(&self.params, w);
        let ws = g.weight_standardize(w, self.config.eps_ws)?;
        let y = g.conv3d(x, ws, None, ConvSpec::same(3, self.config.padding))?;
        let gamma = g.param(&self.params, n.gamma);
        let beta = g.param(&self.params, n.beta);
        let y = g.group_norm(y, self.config.groups, gamma, beta, self.config.eps_gn)?;
        Ok(g.activation(y, self.config.activation))
    }

    fn block(&self, g: &mut Graph<T>, x: Var, b: &Block) -> Result<Var> {
        let h = self.ws_norm_act(g, x, b.conv1, &b.norm1)?;
        let h = self.ws_norm_act(g, h, b.conv2, &b.norm2)?;
        let s = self.conv(g, x, &b.skip)?;
        g.add(h, s)
    }

    fn check_batch(&self, shape: &[usize]) -> Result<()> {
        match shape {
            [_, 1, d, h, w] => self.config.check_input([*d, *h, *w]),
            _ => Err(Error::Dimension(format!("expected input of shape (N, 1, D, H, W), got {shape:?}"))),
        }
    }

    /// Adds the encoder to `g`; `x` is (N, 1, D, H, W).
    pub fn encode_graph(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        self.check_batch(g.value(x).shape())?;
        let mut h = self.conv(g, x, &self.layout.stem)?;
        for (b1, b2, down) in &self.layout.encoder {
            h = self.block(g, h, b1)?;
            h = self.block(g, h, b2)?;
            h = self.conv(g, h, down)?;
        }
        self.conv(g, h, &self.layout.head)
    }

    /// Adds the decoder to `g`; `z` is (N, Z, d, h, w).
    pub fn decode_graph(&self, g: &mut Graph<T>, z: Var) -> Result<Var> {
        let shape = g.value(z).shape();
        if shape.len() != 5 || shape[1] != self.config.latent_channels {
            return Err(Error::Dimension(format!(
                "expected latent of shape (N, {}, d, h, w), got {shape:?}",
                self.config.latent_channels
            )));
        }
        let mut h = self.conv(g, z, &self.layout.tail)?;
        for (up, b1, b2) in &self.layout.decoder {
            h = g.upsample_nearest2x(h)?;
            h = self.conv(g, h, up)?;
            h = self.block(g, h, b1)?;
            h = self.block(g, h, b2)?;
        }
        self.conv(g, h, &self.layout.output)
    }

    pub fn reconstruct_graph(&self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        let z = self.encode_graph(g, x)?;
        self.decode_graph(g, z)
    }

    pub fn encode(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let z = self.encode_graph(&mut g, xv)?;
        Ok(g.value(z).clone())
    }

    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let zv = g.input(z.clone());
        let y = self.decode_graph(&mut g, zv)?;
        Ok(g.value(y).clone())
    }

    pub fn reconstruct(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut g = Graph::new();
        let xv = g.input(x.clone());
        let y = self.reconstruct_graph(&mut g, xv)?;
        Ok(g.value(y).clone())
    }

    /// Names of parameters whose gradient is identically zero for a random probe
    /// batch at the smallest input size with 2³ voxels at the bottleneck.
    pub fn dead_parameters(&self, seed: u64) -> Result<Vec<String>> {
        let n = 2usize << self.config.levels;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut probe = self.clone();
        probe.params.zero_grad();
        let mut g = Graph::new();
        let x = g.input(Tensor::from_fn(vec![2, 1, n, n, n], |_| T::c(rng.random_range(-1.0..1.0))));
        let t = g.input(Tensor::from_fn(vec![2, 1, n, n, n], |_| T::c(rng.random_range(-1.0..1.0))));
        let y = probe.reconstruct_graph(&mut g, x)?;
        let l = g.loss(y, t, crate::tensor::LossKind::Mse)?;
        g.backward(l, &mut probe.params)?;
        Ok(probe
            .params
            .iter()
            .filter(|p| p.trainable && p.grad.as_ref().is_none_or(|gr| gr.iter().all(|v| *v == T::zero())))
            .map(|p| p.name.clone())
            .collect())
    }
}

impl Autoencoder<f32> {
    /// Reconstructs one volume.
    pub fn reconstruct_grid(&self, grid: &VoxelGrid) -> Result<VoxelGrid> {
        let [nx, ny, nz] = grid.dims();
        let x = Tensor::new(vec![1, 1, nz, ny, nx], grid.data().to_vec())?;
        let y = self.reconstruct(&x)?;
        VoxelGrid::from_vec(grid.dims(), y.into_data())
    }
}

/// Packs volumes of equal dims into an (N, 1, D, H, W) batch.
pub fn batch_from_grids<T: Scalar>(grids: &[&VoxelGrid]) -> Result<Tensor<T>> {
    let first = grids.first().ok_or_else(|| Error::Usage("empty batch".into()))?;
    let [nx, ny, nz] = first.dims();
    let mut data = Vec::with_capacity(grids.len() * first.len());
    for g in grids {
        if g.dims() != first.dims() {
            return Err(Error::Dimension(format!("batch mixes dims {:?} and {:?}", first.dims(), g.dims())));
        }
        data.extend(g.data().iter().map(|&v| T::c(v as f64)));
    }
    Tensor::new(vec![grids.len(), 1, nz, ny, nx], data)
}
