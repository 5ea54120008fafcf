use rand::Rng;

use super::VoxelGrid;
use crate::{Error, Result};

/// Patches whose diffuse values all sit within this distance of 0 or of 1 are
/// single-phase and get discarded.
pub const DEFAULT_EMPTY_THRESHOLD: f32 = 0.01;

/// Cubic window into a source volume.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchSpec {
    pub origin: [usize; 3],
    pub size: usize,
}

/// True when the diffuse field holds a single phase under `threshold`.
pub fn is_single_phase(patch: &VoxelGrid, threshold: f32) -> bool {
    let (lo, hi) = patch.min_max();
    hi < threshold || lo > 1.0 - threshold
}

/// Draws `count` patch origins uniformly over all valid offsets (overlap allowed)
/// and keeps the patches that contain both phases.
pub fn extract_patches<R: Rng + ?Sized>(
    volume: &VoxelGrid,
    patch_size: usize,
    count: usize,
    empty_threshold: f32,
    rng: &mut R,
) -> Result<Vec<(PatchSpec, VoxelGrid)>> {
    let dims = volume.dims();
    if patch_size == 0 || dims.iter().any(|&d| d < patch_size) {
        return Err(Error::Dimension(format!(
            "patch size {patch_size} does not fit volume {dims:?}"
        )));
    }
    let mut out = Vec::new();
    for _ in 0..count {
        let origin = [
            rng.random_range(0..=dims[0] - patch_size),
            rng.random_range(0..=dims[1] - patch_size),
            rng.random_range(0..=dims[2] - patch_size),
        ];
        let patch = volume.sub_block(origin, [patch_size; 3])?;
        if !is_single_phase(&patch, empty_threshold) {
            out.push((PatchSpec { origin, size: patch_size }, patch));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn diffuse_sphere(n: usize, radius_voxels: f64, eps_voxels: f64) -> VoxelGrid {
        let c = n as f64 / 2.0;
        VoxelGrid::from_fn([n; 3], |x, y, z| {
            let r = [x, y, z]
                .iter()
                .map(|&i| (i as f64 + 0.5 - c).powi(2))
                .sum::<f64>()
                .sqrt();
            let s = r - radius_voxels;
            (0.5 * (1.0 + (-s / (2.0 * eps_voxels)).tanh())) as f32
        })
    }

    #[test]
    fn single_phase_volumes_yield_nothing() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zeros = VoxelGrid::filled([128; 3], 0.0);
        assert!(extract_patches(&zeros, 64, 64, 0.01, &mut rng).unwrap().is_empty());
        let ones = VoxelGrid::filled([128; 3], 1.0);
        assert!(extract_patches(&ones, 64, 64, 0.01, &mut rng).unwrap().is_empty());
    }

    #[test]
    fn sphere_patches_all_contain_interface_and_match_source() {
        let vol = diffuse_sphere(128, 40.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let patches = extract_patches(&vol, 64, 64, DEFAULT_EMPTY_THRESHOLD, &mut rng).unwrap();
        assert!(!patches.is_empty());
        for (spec, p) in &patches {
            assert!(p.data().iter().any(|&v| v > 0.01 && v < 0.99));
            let [ox, oy, oz] = spec.origin;
            for (i, &v) in p.data().iter().enumerate() {
                let [x, y, z] = p.coords(i);
                assert_eq!(v, *vol.get(ox + x, oy + y, oz + z));
            }
        }
    }

    #[test]
    fn oversized_patch_is_a_dimension_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let vol = VoxelGrid::filled([32, 32, 16], 0.5);
        assert!(matches!(
            extract_patches(&vol, 32, 4, 0.01, &mut rng),
            Err(Error::Dimension(_))
        ));
    }
}
