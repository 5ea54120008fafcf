use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::io::{read_volume, write_atomic, write_volume};
use super::patch::{extract_patches, DEFAULT_EMPTY_THRESHOLD};
use super::{PhaseMask, VoxelGrid};
use crate::repr::{derive, signed_distance, to_sdf, InterfaceField, Representation};
use crate::{Error, Result};

/// Train / test / hyper-parameter validation fractions.
pub const DEFAULT_SPLIT_RATIOS: [f64; 3] = [0.80, 0.15, 0.05];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Val,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Synthetic,
    Ingested,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// Payload path relative to the manifest's directory.
    pub path: String,
    pub representation: String,
    pub epsilon: Option<f64>,
    pub provenance: Provenance,
    pub split: Option<Split>,
}

impl ManifestEntry {
    pub fn representation(&self) -> Result<Representation> {
        Representation::from_tag(&self.representation, self.epsilon)
    }
}

/// List of stored samples with their split assignment.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub name: String,
    #[serde(default)]
    pub metadata: BTreeMap<String, serde_json::Value>,
    pub entries: Vec<ManifestEntry>,
    #[serde(skip)]
    root: PathBuf,
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, root: impl Into<PathBuf>) -> Self {
        Self {
            name: name.into(),
            root: root.into(),
            ..Default::default()
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn set_root(&mut self, root: impl Into<PathBuf>) {
        self.root = root.into();
    }

    pub fn push(&mut self, entry: ManifestEntry) -> Result<()> {
        if self.entries.iter().any(|e| e.id == entry.id) {
            return Err(Error::Config(format!("duplicate sample id {:?}", entry.id)));
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for e in &self.entries {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::Config(format!("duplicate sample id {:?}", e.id)));
            }
            e.representation()?;
        }
        Ok(())
    }

    pub fn entry_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }

    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        self.entries.iter().filter(|e| e.split == Some(split)).collect()
    }

    pub fn split_counts(&self) -> [usize; 3] {
        [Split::Train, Split::Test, Split::Val].map(|s| self.split(s).len())
    }

    /// Loads the stored field of one entry.
    pub fn load_entry(&self, entry: &ManifestEntry) -> Result<(VoxelGrid, Representation)> {
        read_volume(self.entry_path(entry)).map_err(|e| e.in_sample(&entry.id))
    }

    /// Loads one entry converted to `target`, going through its canonical SDF.
    pub fn load_as(&self, entry: &ManifestEntry, target: Representation) -> Result<InterfaceField> {
        let (grid, kind) = self.load_entry(entry)?;
        let sdf = to_sdf(&InterfaceField::new(grid, kind));
        derive(&sdf, target).map_err(|e| e.in_sample(&entry.id))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Writes the manifest atomically; the payload paths stay relative.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_atomic(path.as_ref(), self.to_json().as_bytes())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)
            .map_err(|e| Error::format(path, format!("malformed manifest: {e}")))?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }
}

/// Split sizes by largest-remainder rounding; ties go to the earlier split.
pub fn split_sizes(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let total: f64 = ratios.iter().sum();
    if (total - 1.0).abs() > 1e-9 || ratios.iter().any(|&r| r < 0.0 || !r.is_finite()) {
        return Err(Error::Config(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let exact = ratios.map(|r| r * n as f64);
    let mut sizes = exact.map(|x| x.floor() as usize);
    let mut left = n - sizes.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| {
        let fa = exact[a] - exact[a].floor();
        let fb = exact[b] - exact[b].floor();
        fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
    });
    for &i in order.iter().cycle() {
        if left == 0 {
            break;
        }
        sizes[i] += 1;
        left -= 1;
    }
    Ok(sizes)
}

/// Assigns every entry to train/test/val.
///
/// Entries are ordered by id before shuffling, so the result depends only on the
/// set of ids and the generator state.
pub fn split_dataset<R: Rng + ?Sized>(
    manifest: &DatasetManifest,
    ratios: [f64; 3],
    rng: &mut R,
) -> Result<DatasetManifest> {
    let sizes = split_sizes(manifest.entries.len(), ratios)?;
    let mut order: Vec<usize> = (0..manifest.entries.len()).collect();
    order.sort_by(|&a, &b| manifest.entries[a].id.cmp(&manifest.entries[b].id));
    order.shuffle(rng);
    let mut out = manifest.clone();
    for (rank, &i) in order.iter().enumerate() {
        out.entries[i].split = Some(if rank < sizes[0] {
            Split::Train
        } else if rank < sizes[0] + sizes[1] {
            Split::Test
        } else {
            Split::Val
        });
    }
    Ok(out)
}

/// Parameters for turning raw diffuse simulation volumes into an SDF patch dataset.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IngestConfig {
    /// Interface thickness of the source simulation, domain units of the source volume.
    pub eps_sim: f64,
    pub patch_size: usize,
    pub patches_per_volume: usize,
    pub empty_threshold: f32,
    pub seed: u64,
    pub ratios: [f64; 3],
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            eps_sim: 1.0 / 256.0,
            patch_size: 64,
            patches_per_volume: 64,
            empty_threshold: DEFAULT_EMPTY_THRESHOLD,
            seed: 0,
            ratios: DEFAULT_SPLIT_RATIOS,
        }
    }
}

fn list_volumes(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
            continue;
        };
        if let Some(stem) = name.strip_suffix(".json") {
            let payload = dir.join(stem);
            if stem != "manifest" && payload.is_file() {
                out.push(payload);
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Extracts two-phase patches from every diffuse volume in `input_dir`, stores each
/// patch as a canonical SDF under `out_dir`, and writes `out_dir/manifest.json`.
///
/// All inputs are read and validated before anything is written.
pub fn ingest_diffuse_volumes(
    input_dir: impl AsRef<Path>,
    out_dir: impl AsRef<Path>,
    config: &IngestConfig,
) -> Result<DatasetManifest> {
    let input_dir = input_dir.as_ref();
    let out_dir = out_dir.as_ref();
    if config.eps_sim <= 0.0 {
        return Err(Error::Config(format!("eps_sim must be positive, got {}", config.eps_sim)));
    }
    let paths = list_volumes(input_dir)?;
    if paths.is_empty() {
        log::warn!("no volumes found in {}", input_dir.display());
    }
    let mut volumes = Vec::with_capacity(paths.len());
    for path in &paths {
        let (grid, _) = read_volume(path)?;
        let (lo, hi) = grid.min_max();
        if lo < -0.05 || hi > 1.05 {
            return Err(Error::Representation(format!(
                "{}: diffuse values must lie in [-0.05, 1.05], found [{lo}, {hi}]",
                path.display()
            )));
        }
        volumes.push(grid);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut manifest = DatasetManifest::new("ingested", out_dir);
    manifest.metadata.insert("eps_sim".into(), config.eps_sim.into());
    manifest.metadata.insert("patch_size".into(), config.patch_size.into());
    let mut pending = Vec::new();
    for (path, grid) in paths.iter().zip(&volumes) {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("volume");
        let patches = extract_patches(
            grid,
            config.patch_size,
            config.patches_per_volume,
            config.empty_threshold,
            &mut rng,
        )?;
        for (k, (spec, patch)) in patches.into_iter().enumerate() {
            let id = format!("{stem}_p{k:03}");
            let mask: PhaseMask = patch.map(|&v| v >= 0.5);
            let sdf = signed_distance(&mask);
            let rel = format!("{id}.raw");
            manifest.push(ManifestEntry {
                id,
                path: rel.clone(),
                representation: Representation::Sdf.tag().into(),
                epsilon: None,
                provenance: Provenance::Ingested,
                split: None,
            })?;
            log::debug!("patch {} at {:?}", rel, spec.origin);
            pending.push((rel, sdf));
        }
    }
    let mut manifest = split_dataset(&manifest, config.ratios, &mut rng)?;
    manifest.set_root(out_dir);
    for (rel, sdf) in &pending {
        write_volume(out_dir.join(rel), &sdf.grid, sdf.kind)?;
    }
    manifest.save(out_dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest_of(n: usize) -> DatasetManifest {
        let mut m = DatasetManifest::new("t", ".");
        for i in 0..n {
            m.push(ManifestEntry {
                id: format!("s{i:04}"),
                path: format!("s{i:04}.raw"),
                representation: "sdf".into(),
                epsilon: None,
                provenance: Provenance::Synthetic,
                split: None,
            })
            .unwrap();
        }
        m
    }

    #[test]
    fn exact_split_of_hundred() {
        let m = manifest_of(100);
        let out = split_dataset(&m, DEFAULT_SPLIT_RATIOS, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(out.split_counts(), [80, 15, 5]);
    }

    #[test]
    fn largest_remainder_on_ten() {
        // 8.0 / 1.5 / 0.5: the single leftover goes to the first .5 remainder (test)
        assert_eq!(split_sizes(10, DEFAULT_SPLIT_RATIOS).unwrap(), [8, 2, 0]);
        assert_eq!(split_sizes(7, DEFAULT_SPLIT_RATIOS).unwrap(), [6, 1, 0]);
        assert_eq!(split_sizes(0, DEFAULT_SPLIT_RATIOS).unwrap(), [0, 0, 0]);
        assert_eq!(split_sizes(3, [1.0 / 3.0; 3]).unwrap(), [1, 1, 1]);
    }

    #[test]
    fn split_is_deterministic_and_order_independent() {
        let m = manifest_of(37);
        let a = split_dataset(&m, DEFAULT_SPLIT_RATIOS, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        let b = split_dataset(&m, DEFAULT_SPLIT_RATIOS, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(a, b);
        let mut rev = m.clone();
        rev.entries.reverse();
        let c = split_dataset(&rev, DEFAULT_SPLIT_RATIOS, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for e in &a.entries {
            let other = c.entries.iter().find(|x| x.id == e.id).unwrap();
            assert_eq!(e.split, other.split);
        }
    }

    #[test]
    fn bad_ratios_are_config_errors() {
        let m = manifest_of(4);
        let err = split_dataset(&m, [0.8, 0.15, 0.1], &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut m = manifest_of(2);
        let dup = m.entries[0].clone();
        assert!(m.push(dup.clone()).is_err());
        m.entries.push(dup);
        assert!(m.validate().is_err());
    }

    #[test]
    fn empty_input_dir_gives_empty_manifest() {
        let input = tempfile::tempdir().unwrap();
        let out = tempfile::tempdir().unwrap();
        let m = ingest_diffuse_volumes(input.path(), out.path(), &IngestConfig::default()).unwrap();
        assert!(m.entries.is_empty());
        assert!(out.path().join("manifest.json").exists());
    }
}
