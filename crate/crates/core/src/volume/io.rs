use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::VoxelGrid;
use crate::repr::Representation;
use crate::{Error, Result};

/// Sidecar describing a raw volume payload.
///
/// Stored next to the payload as `<payload path>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeHeader {
    pub dims: [usize; 3],
    pub dtype: String,
    pub representation: String,
    pub epsilon: Option<f64>,
    pub byte_order: String,
}

impl VolumeHeader {
    pub fn new(dims: [usize; 3], repr: Representation) -> Self {
        Self {
            dims,
            dtype: "f32".into(),
            representation: repr.tag().into(),
            epsilon: repr.epsilon(),
            byte_order: "le".into(),
        }
    }

    pub fn representation(&self) -> Result<Representation> {
        Representation::from_tag(&self.representation, self.epsilon)
    }
}

pub(crate) fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes `bytes` to a temporary sibling and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
        f.write_all(bytes).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Writes the raw little-endian f32 payload and its JSON sidecar.
pub fn write_volume(path: impl AsRef<Path>, grid: &VoxelGrid, repr: Representation) -> Result<()> {
    let path = path.as_ref();
    grid.check_finite()?;
    let mut bytes = Vec::with_capacity(grid.len() * 4);
    for v in grid.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let header = VolumeHeader::new(grid.dims(), repr);
    let json = serde_json::to_string_pretty(&header).expect("header serializes");
    write_atomic(path, &bytes)?;
    write_atomic(&sidecar_path(path), json.as_bytes())
}

pub fn read_header(path: &Path) -> Result<VolumeHeader> {
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let header: VolumeHeader =
        serde_json::from_str(&text).map_err(|e| Error::format(&side, format!("malformed header: {e}")))?;
    if header.dtype != "f32" {
        return Err(Error::format(&side, format!("unknown dtype {:?}", header.dtype)));
    }
    if header.byte_order != "le" {
        return Err(Error::format(&side, format!("unsupported byte order {:?}", header.byte_order)));
    }
    if header.dims.contains(&0) {
        return Err(Error::format(&side, format!("non-positive dims {:?}", header.dims)));
    }
    header
        .representation()
        .map_err(|e| Error::format(&side, e.to_string()))?;
    Ok(header)
}

/// Reads a volume written by [`write_volume`], validating length and finiteness.
pub fn read_volume(path: impl AsRef<Path>) -> Result<(VoxelGrid, Representation)> {
    let path = path.as_ref();
    let header = read_header(path)?;
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let [nx, ny, nz] = header.dims;
    let expected = nx * ny * nz;
    if bytes.len() != expected * 4 {
        return Err(Error::format(
            path,
            format!(
                "length mismatch: dims {:?} need {} bytes, payload has {}",
                header.dims,
                expected * 4,
                bytes.len()
            ),
        ));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::format(path, format!("non-finite value at element {i}")));
    }
    let grid = VoxelGrid::from_vec(header.dims, data)?;
    Ok((grid, header.representation()?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn random_grid_roundtrip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let grid = VoxelGrid::from_fn([16; 3], |_, _, _| rng.random_range(-3.0f32..3.0));
        let path = dir.path().join("v.raw");
        write_volume(&path, &grid, Representation::Tanh { epsilon: 1.0 / 32.0 }).unwrap();
        let (back, repr) = read_volume(&path).unwrap();
        assert_eq!(back.dims(), grid.dims());
        let a: Vec<u32> = grid.data().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(repr, Representation::Tanh { epsilon: 1.0 / 32.0 });
    }

    #[test]
    fn short_payload_is_a_length_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        fs::write(&path, vec![0u8; 63 * 4]).unwrap();
        let header = VolumeHeader::new([4, 4, 4], Representation::Sdf);
        fs::write(sidecar_path(&path), serde_json::to_string(&header).unwrap()).unwrap();
        let err = read_volume(&path).unwrap_err();
        assert!(matches!(err, Error::Format { ref reason, .. } if reason.contains("length mismatch")), "{err}");
    }

    #[test]
    fn nan_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        let mut bytes = Vec::new();
        for i in 0..8 {
            let v = if i == 5 { f32::NAN } else { 0.5 };
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(&path, bytes).unwrap();
        let header = VolumeHeader::new([2, 2, 2], Representation::Sharp);
        fs::write(sidecar_path(&path), serde_json::to_string(&header).unwrap()).unwrap();
        let err = read_volume(&path).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "{err}");
    }

    #[test]
    fn unknown_dtype_and_garbage_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.raw");
        fs::write(&path, vec![0u8; 32]).unwrap();
        let mut header = VolumeHeader::new([2, 2, 2], Representation::Sharp);
        header.dtype = "f16".into();
        fs::write(sidecar_path(&path), serde_json::to_string(&header).unwrap()).unwrap();
        assert!(read_volume(&path).unwrap_err().to_string().contains("dtype"));
        fs::write(sidecar_path(&path), "{not json").unwrap();
        assert!(read_volume(&path).unwrap_err().to_string().contains("malformed"));
    }
}
