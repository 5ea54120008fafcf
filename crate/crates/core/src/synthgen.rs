//! Synthetic droplet datasets.
//!
//! Each sample is a union of spheres with lognormal radii, grown one droplet at a
//! time until a uniformly drawn target volume fraction is reached.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::repr::{signed_distance, Representation};
use crate::volume::{
    split_dataset, write_atomic, write_volume, DatasetManifest, ManifestEntry, PhaseMask, Provenance,
    DEFAULT_SPLIT_RATIOS,
};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    /// Location of the underlying normal of the log-radius (radii in voxels).
    pub mu: f64,
    pub sigma: f64,
    pub grid: usize,
    pub seed: u64,
    pub max_droplets: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            mu: 2.0,
            sigma: 0.5,
            grid: 64,
            seed: 0,
            max_droplets: 4096,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.mu.is_finite() {
            return Err(Error::Config(format!("need finite mu and sigma > 0, got mu={} sigma={}", self.mu, self.sigma)));
        }
        if self.grid < 8 {
            return Err(Error::Config(format!("grid must be at least 8, got {}", self.grid)));
        }
        if self.max_droplets == 0 {
            return Err(Error::Config("max_droplets must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DropletSpec {
    /// Centre in domain units, `[0, 1]³`.
    pub center: [f64; 3],
    /// Radius in voxels.
    pub radius: f64,
}

#[derive(Clone, Debug)]
pub struct SyntheticSample {
    pub mask: PhaseMask,
    pub droplets: Vec<DropletSpec>,
    pub target_vf: f64,
    pub achieved_vf: f64,
    /// Set when `max_droplets` was hit before the target fraction.
    pub capped: bool,
}

/// Draws `exp(g)` with `g ~ Normal(mu, sigma)`.
pub fn sample_radius<R: Rng + ?Sized>(rng: &mut R, mu: f64, sigma: f64) -> f64 {
    let normal = Normal::new(mu, sigma).expect("finite mu and non-negative sigma");
    normal.sample(rng).exp()
}

/// Independent generator stream for sample `index` of the dataset seeded by `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Sets every voxel whose centre lies in the sphere; returns the number of newly set voxels.
fn rasterize(mask: &mut PhaseMask, d: &DropletSpec) -> usize {
    let n = mask.dims()[0];
    let c = d.center.map(|v| v * n as f64);
    let r2 = d.radius * d.radius;
    let range = |cv: f64| {
        let lo = (cv - d.radius - 0.5).ceil().max(0.0) as usize;
        let hi = (cv + d.radius - 0.5).floor().min(n as f64 - 1.0);
        (lo, hi)
    };
    let (rx, ry, rz) = (range(c[0]), range(c[1]), range(c[2]));
    if rx.1 < 0.0 || ry.1 < 0.0 || rz.1 < 0.0 {
        return 0;
    }
    let (hx, hy, hz) = (rx.1 as usize, ry.1 as usize, rz.1 as usize);
    let sq = |i: usize, cv: f64| (i as f64 + 0.5 - cv).powi(2);
    let mut added = 0;
    for z in rz.0..=hz {
        let dz = sq(z, c[2]);
        if dz > r2 {
            continue;
        }
        for y in ry.0..=hy {
            let dyz = dz + sq(y, c[1]);
            if dyz > r2 {
                continue;
            }
            for x in rx.0..=hx {
                if dyz + sq(x, c[0]) <= r2 {
                    let i = mask.index(x, y, z);
                    let v = &mut mask.data_mut()[i];
                    if !*v {
                        *v = true;
                        added += 1;
                    }
                }
            }
        }
    }
    added
}

/// Grows droplets until the achieved volume fraction reaches `target_vf`.
pub fn generate_sample_with_target<R: Rng + ?Sized>(
    config: &SynthConfig,
    target_vf: f64,
    rng: &mut R,
) -> Result<SyntheticSample> {
    config.validate()?;
    let n = config.grid;
    let total = (n * n * n) as f64;
    let mut mask = PhaseMask::filled([n; 3], false);
    let mut filled = 0usize;
    let mut droplets = Vec::new();
    loop {
        let center = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        let radius = sample_radius(rng, config.mu, config.sigma);
        let d = DropletSpec { center, radius };
        filled += rasterize(&mut mask, &d);
        droplets.push(d);
        let vf = filled as f64 / total;
        if vf >= target_vf {
            return Ok(SyntheticSample { mask, droplets, target_vf, achieved_vf: vf, capped: false });
        }
        if droplets.len() >= config.max_droplets {
            return Ok(SyntheticSample { mask, droplets, target_vf, achieved_vf: vf, capped: true });
        }
    }
}

/// Draws a target fraction from `Uniform(0, 1)` and grows a sample to it.
pub fn generate_sample<R: Rng + ?Sized>(config: &SynthConfig, rng: &mut R) -> Result<SyntheticSample> {
    let target = rng.random::<f64>();
    generate_sample_with_target(config, target, rng)
}

/// Aggregate statistics over a generated dataset.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct DatasetStats {
    pub achieved_vf: Vec<f64>,
    pub droplet_counts: Vec<usize>,
    pub capped: usize,
}

impl DatasetStats {
    pub fn mean_droplets(&self) -> f64 {
        self.droplet_counts.iter().sum::<usize>() as f64 / self.droplet_counts.len().max(1) as f64
    }

    /// Plain-text summary: achieved volume-fraction histogram and droplet counts.
    pub fn report(&self, config: &SynthConfig) -> String {
        let n = self.achieved_vf.len();
        let mut s = String::new();
        let _ = writeln!(s, "synthetic dataset: mu={} sigma={} grid={} seed={}", config.mu, config.sigma, config.grid, config.seed);
        let _ = writeln!(s, "samples: {n}");
        let _ = writeln!(s, "capped (max_droplets={}): {}", config.max_droplets, self.capped);
        let mean_vf = self.achieved_vf.iter().sum::<f64>() / n.max(1) as f64;
        let _ = writeln!(s, "mean achieved volume fraction: {mean_vf:.4}");
        let _ = writeln!(s, "achieved volume fraction histogram:");
        let mut bins = [0usize; 10];
        for &v in &self.achieved_vf {
            bins[((v * 10.0) as usize).min(9)] += 1;
        }
        for (i, c) in bins.iter().enumerate() {
            let _ = writeln!(s, "  [{:.1}, {:.1}) {c}", i as f64 / 10.0, (i + 1) as f64 / 10.0);
        }
        let min = self.droplet_counts.iter().min().copied().unwrap_or(0);
        let max = self.droplet_counts.iter().max().copied().unwrap_or(0);
        let _ = writeln!(s, "droplets per sample: mean {:.2} min {min} max {max}", self.mean_droplets());
        s
    }
}

/// Generates `n_samples` masks, stores them as canonical SDF volumes under
/// `out_dir`, splits 80/15/5, and writes `manifest.json` and `stats.txt`.
pub fn generate_dataset(
    config: &SynthConfig,
    n_samples: usize,
    out_dir: impl AsRef<Path>,
) -> Result<(DatasetManifest, DatasetStats)> {
    config.validate()?;
    if n_samples == 0 {
        return Err(Error::Config("n_samples must be at least 1".into()));
    }
    let out_dir = out_dir.as_ref();
    let mut manifest = DatasetManifest::new(format!("synthetic_mu{}", config.mu), out_dir);
    manifest.metadata.insert("mu".into(), config.mu.into());
    manifest.metadata.insert("sigma".into(), config.sigma.into());
    manifest.metadata.insert("grid".into(), config.grid.into());
    manifest.metadata.insert("seed".into(), config.seed.into());
    let mut stats = DatasetStats::default();
    for i in 0..n_samples {
        let id = format!("sample_{i:05}");
        let mut rng = sample_rng(config.seed, i as u64);
        let sample = generate_sample(config, &mut rng)?;
        let sdf = signed_distance(&sample.mask);
        let rel = format!("{id}.raw");
        write_volume(out_dir.join(&rel), &sdf.grid, sdf.kind).map_err(|e| e.in_sample(&id))?;
        stats.achieved_vf.push(sample.achieved_vf);
        stats.droplet_counts.push(sample.droplets.len());
        stats.capped += sample.capped as usize;
        manifest.push(ManifestEntry {
            id,
            path: rel,
            representation: Representation::Sdf.tag().into(),
            epsilon: None,
            provenance: Provenance::Synthetic,
            split: None,
        })?;
    }
    let mut split_rng = sample_rng(config.seed, u64::MAX);
    let mut manifest = split_dataset(&manifest, DEFAULT_SPLIT_RATIOS, &mut split_rng)?;
    manifest.set_root(out_dir);
    manifest.save(out_dir.join("manifest.json"))?;
    write_atomic(&out_dir.join("stats.txt"), stats.report(config).as_bytes())?;
    Ok((manifest, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::volume_fraction;

    #[test]
    fn degenerate_lognormal_is_exp_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = sample_radius(&mut rng, 2.0, 1e-12);
        assert!((r - 2f64.exp()).abs() < 1e-9);
        assert!((r - 7.389).abs() < 1e-3);
    }

    #[test]
    fn log_radius_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let logs: Vec<f64> = (0..100_000).map(|_| sample_radius(&mut rng, 1.0, 0.5).ln()).collect();
        let n = logs.len() as f64;
        let mean = logs.iter().sum::<f64>() / n;
        let var = logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((mean - 1.0).abs() < 0.01, "{mean}");
        assert!((var.sqrt() - 0.5).abs() < 0.01, "{}", var.sqrt());
    }

    #[test]
    fn radius_median_is_exp_mu() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut r: Vec<f64> = (0..100_000).map(|_| sample_radius(&mut rng, 2.5, 0.5)).collect();
        r.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = r[r.len() / 2];
        assert!((median / 2.5f64.exp() - 1.0).abs() < 0.02, "{median}");
    }

    #[test]
    fn near_zero_target_stops_after_one_droplet() {
        let cfg = SynthConfig { mu: 2.0, grid: 32, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        // a droplet centre always covers its own voxel for r >= sqrt(3)/2
        let s = generate_sample_with_target(&cfg, 1e-12, &mut rng).unwrap();
        assert_eq!(s.droplets.len(), 1);
        assert!(!s.capped);
        assert!(s.achieved_vf > 0.0 && s.achieved_vf < 0.5);
    }

    #[test]
    fn same_seed_same_mask() {
        let cfg = SynthConfig { mu: 2.0, grid: 32, ..Default::default() };
        let a = generate_sample(&cfg, &mut sample_rng(9, 4)).unwrap();
        let b = generate_sample(&cfg, &mut sample_rng(9, 4)).unwrap();
        assert_eq!(a.mask, b.mask);
        assert_eq!(a.droplets, b.droplets);
    }

    #[test]
    fn voxels_lie_in_listed_spheres_and_flag_semantics_hold() {
        let cfg = SynthConfig { mu: 1.5, grid: 24, max_droplets: 64, ..Default::default() };
        for idx in 0..20 {
            let s = generate_sample(&cfg, &mut sample_rng(1, idx)).unwrap();
            let n = cfg.grid as f64;
            for i in 0..s.mask.len() {
                if !s.mask.data()[i] {
                    continue;
                }
                let [x, y, z] = s.mask.coords(i);
                let p = [x, y, z].map(|v| v as f64 + 0.5);
                let inside = s.droplets.iter().any(|d| {
                    let c = d.center.map(|v| v * n);
                    (0..3).map(|a| (p[a] - c[a]).powi(2)).sum::<f64>() <= d.radius * d.radius
                });
                assert!(inside);
            }
            for d in s.droplets.iter().filter(|d| d.radius >= 3f64.sqrt() / 2.0) {
                let [x, y, z] = d.center.map(|v| ((v * n) as usize).min(cfg.grid - 1));
                assert!(*s.mask.get(x, y, z));
            }
            assert_eq!(s.achieved_vf, volume_fraction(&s.mask));
            if !s.capped {
                assert!(s.achieved_vf >= s.target_vf);
            } else {
                assert_eq!(s.droplets.len(), cfg.max_droplets);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(SynthConfig { sigma: 0.0, ..Default::default() }.validate().is_err());
        assert!(SynthConfig { grid: 4, ..Default::default() }.validate().is_err());
    }
}
