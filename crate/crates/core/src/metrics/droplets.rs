use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::volume::PhaseMask;
use crate::{Error, Result};

/// Diameter (in voxels) of the sphere with `volume` voxels.
pub fn equivalent_diameter(volume: usize) -> f64 {
    2.0 * (3.0 * volume as f64 / (4.0 * PI)).cbrt()
}

/// Geometric bin edges `lo · r^i`, `i = 0..=n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogBins {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl Default for LogBins {
    /// One voxel up to twice a 64-voxel domain edge, in half-octave steps.
    fn default() -> Self {
        Self { lo: 1.0, hi: 128.0, n: 14 }
    }
}

impl LogBins {
    pub fn validate(&self) -> Result<()> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.n > 0) {
            return Err(Error::Config(format!("invalid histogram bins {self:?}")));
        }
        Ok(())
    }

    pub fn edges(&self) -> Vec<f64> {
        let r = (self.hi / self.lo).ln() / self.n as f64;
        (0..=self.n).map(|i| self.lo * (r * i as f64).exp()).collect()
    }

    /// Counts per bin; values outside `[lo, hi)` land in the first/last bin.
    pub fn count(&self, values: &[f64]) -> Vec<usize> {
        let mut counts = vec![0; self.n];
        let r = (self.hi / self.lo).ln() / self.n as f64;
        for &v in values {
            let i = ((v / self.lo).ln() / r).floor();
            let i = if i.is_nan() || i < 0.0 { 0 } else { (i as usize).min(self.n - 1) };
            counts[i] += 1;
        }
        counts
    }
}

/// Connected components of the foreground (26-connectivity).
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DropletHistogram {
    /// Voxel count per component, in order of first appearance (x-fastest scan).
    pub volumes: Vec<usize>,
}

impl DropletHistogram {
    pub fn diameters(&self) -> Vec<f64> {
        self.volumes.iter().map(|&v| equivalent_diameter(v)).collect()
    }

    pub fn total_volume(&self) -> usize {
        self.volumes.iter().sum()
    }

    pub fn counts(&self, bins: &LogBins) -> Vec<usize> {
        bins.count(&self.diameters())
    }
}

pub fn droplet_size_distribution(mask: &PhaseMask) -> DropletHistogram {
    let [nx, ny, nz] = mask.dims();
    let mut seen = vec![false; mask.len()];
    let mut volumes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask.data()[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut volume = 0;
        while let Some(i) = stack.pop() {
            volume += 1;
            let [x, y, z] = mask.coords(i);
            for dz in -1i64..=1 {
                for dy in -1i64..=1 {
                    for dx in -1i64..=1 {
                        let (xx, yy, zz) = (x as i64 + dx, y as i64 + dy, z as i64 + dz);
                        if xx < 0 || yy < 0 || zz < 0 || xx >= nx as i64 || yy >= ny as i64 || zz >= nz as i64 {
                            continue;
                        }
                        let j = mask.index(xx as usize, yy as usize, zz as usize);
                        if mask.data()[j] && !seen[j] {
                            seen[j] = true;
                            stack.push(j);
                        }
                    }
                }
            }
        }
        volumes.push(volume);
    }
    DropletHistogram { volumes }
}
