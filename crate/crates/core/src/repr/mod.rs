//! Interface representations and the exact conversions between them.
//!
//! Sign convention: phase 1 (the droplets) is inside, where the signed distance is
//! negative, the diffuse field tends to 1 and the sharp indicator is 1.

mod edt;

pub use edt::{edt, edt_squared_voxels};

use serde::{Deserialize, Serialize};

use crate::volume::{PhaseMask, VoxelGrid};
use crate::{Error, Result};

/// How an interface is encoded in a scalar field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Representation {
    /// Signed distance in domain units, negative inside phase 1.
    Sdf,
    /// `(1 + tanh(-s / 2ε)) / 2` with interface thickness `ε` in domain units.
    Tanh { epsilon: f64 },
    /// Indicator `(1 - sgn s) / 2`.
    Sharp,
}

impl Representation {
    /// The default representation axis: SDF, sharp, and tanh at 1/128, 1/32, 1/8.
    pub fn default_sweep() -> Vec<Representation> {
        vec![
            Representation::Sdf,
            Representation::Sharp,
            Representation::Tanh { epsilon: 1.0 / 128.0 },
            Representation::Tanh { epsilon: 1.0 / 32.0 },
            Representation::Tanh { epsilon: 1.0 / 8.0 },
        ]
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Representation::Sdf => "sdf",
            Representation::Tanh { .. } => "tanh",
            Representation::Sharp => "sharp",
        }
    }

    pub fn epsilon(&self) -> Option<f64> {
        match self {
            Representation::Tanh { epsilon } => Some(*epsilon),
            _ => None,
        }
    }

    pub fn from_tag(tag: &str, epsilon: Option<f64>) -> Result<Self> {
        match (tag, epsilon) {
            ("sdf", _) => Ok(Representation::Sdf),
            ("sharp", _) => Ok(Representation::Sharp),
            ("tanh", Some(e)) if e > 0.0 && e.is_finite() => Ok(Representation::Tanh { epsilon: e }),
            ("tanh", e) => Err(Error::Config(format!("tanh representation needs epsilon > 0, got {e:?}"))),
            (other, _) => Err(Error::Config(format!("unknown representation {other:?}"))),
        }
    }

    /// Short label such as `sdf`, `sharp`, `tanh_1/32` (or `tanh_0.02` when ε is
    /// not a unit fraction).
    pub fn label(&self) -> String {
        match self {
            Representation::Tanh { epsilon } => {
                let inv = 1.0 / epsilon;
                if (inv - inv.round()).abs() < 1e-9 {
                    format!("tanh_1/{}", inv.round() as u64)
                } else {
                    format!("tanh_{epsilon}")
                }
            }
            other => other.tag().to_string(),
        }
    }

    /// Inverse of [`Representation::label`].
    pub fn parse_label(label: &str) -> Result<Self> {
        let label = label.trim().to_ascii_lowercase();
        if let Some(rest) = label.strip_prefix("tanh") {
            let rest = rest.trim_start_matches(['_', ':', '-', ' ']);
            let eps = match rest.split_once('/') {
                Some((a, b)) => {
                    let a: f64 = a.parse().map_err(|_| Error::Config(format!("bad epsilon in {label:?}")))?;
                    let b: f64 = b.parse().map_err(|_| Error::Config(format!("bad epsilon in {label:?}")))?;
                    a / b
                }
                None => rest
                    .parse()
                    .map_err(|_| Error::Config(format!("bad epsilon in {label:?}")))?,
            };
            return Self::from_tag("tanh", Some(eps));
        }
        Self::from_tag(&label, None)
    }
}

/// A voxel grid tagged with its representation.
#[derive(Clone, Debug, PartialEq)]
pub struct InterfaceField {
    pub grid: VoxelGrid,
    pub kind: Representation,
}

impl InterfaceField {
    pub fn new(grid: VoxelGrid, kind: Representation) -> Self {
        Self { grid, kind }
    }

    /// Checks the value-range invariants of the representation.
    pub fn validate(&self) -> Result<()> {
        self.grid.check_finite()?;
        let h = self.grid.spacing();
        let bad = |msg: String| Err(Error::Representation(msg));
        match self.kind {
            Representation::Sdf => {
                let half = (h / 2.0) as f32;
                let diag = 3f32.sqrt();
                for (i, &s) in self.grid.data().iter().enumerate() {
                    if s.abs() > diag || s.abs() < half {
                        return bad(format!("sdf value {s} at {:?} violates h/2 <= |s| <= sqrt(3)", self.grid.coords(i)));
                    }
                }
            }
            Representation::Tanh { .. } => {
                if let Some(v) = self.grid.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
                    return bad(format!("tanh value {v} outside [0, 1]"));
                }
            }
            Representation::Sharp => {
                if let Some(v) = self.grid.data().iter().find(|&&v| v != 0.0 && v != 0.5 && v != 1.0) {
                    return bad(format!("sharp value {v} outside {{0, 0.5, 1}}"));
                }
            }
        }
        Ok(())
    }
}

/// Diffuse profile value for a signed distance `s` (negative inside).
#[inline]
pub fn tanh_profile(s: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 + (-s / (2.0 * epsilon)).tanh())
}

/// Signed distance with the zero level midway between voxel layers.
///
/// Background voxels get `d_F - h/2`, foreground voxels `-(d_B - h/2)`, where
/// `d_F` and `d_B` are exact distances to the nearest foreground and background
/// voxel centres. A single-phase mask maps to the constant `±sqrt(3)`.
pub fn signed_distance(mask: &PhaseMask) -> InterfaceField {
    let h = mask.spacing();
    let diag = 3f64.sqrt();
    let to_fg = edt(mask);
    let to_bg = edt(&mask.complement());
    let grid = match (to_fg, to_bg) {
        (None, _) => VoxelGrid::filled(mask.dims(), diag as f32),
        (_, None) => VoxelGrid::filled(mask.dims(), -diag as f32),
        (Some(d_f), Some(d_b)) => {
            let data = mask
                .data()
                .iter()
                .zip(d_f.data().iter().zip(d_b.data()))
                .map(|(&inside, (&df, &db))| {
                    if inside {
                        -(db - h / 2.0) as f32
                    } else {
                        (df - h / 2.0) as f32
                    }
                })
                .collect();
            VoxelGrid::from_vec(mask.dims(), data).expect("same dims")
        }
    };
    InterfaceField::new(grid, Representation::Sdf)
}

fn expect_sdf(field: &InterfaceField) -> Result<()> {
    match field.kind {
        Representation::Sdf => Ok(()),
        other => Err(Error::Representation(format!("expected an sdf field, got {}", other.label()))),
    }
}

/// Diffuse field of thickness `epsilon` from an SDF.
pub fn to_tanh(sdf: &InterfaceField, epsilon: f64) -> Result<InterfaceField> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("interface thickness must be positive, got {epsilon}")));
    }
    expect_sdf(sdf)?;
    let grid = sdf.grid.map(|&s| tanh_profile(s as f64, epsilon) as f32);
    Ok(InterfaceField::new(grid, Representation::Tanh { epsilon }))
}

/// Sharp indicator `(1 - sgn s) / 2` from an SDF; `s = 0` maps to 0.5.
pub fn to_sharp(sdf: &InterfaceField) -> Result<InterfaceField> {
    expect_sdf(sdf)?;
    let grid = sdf.grid.map(|&s| {
        if s < 0.0 {
            1.0
        } else if s > 0.0 {
            0.0
        } else {
            0.5
        }
    });
    Ok(InterfaceField::new(grid, Representation::Sharp))
}

/// Converts a canonical SDF into any representation.
pub fn derive(sdf: &InterfaceField, target: Representation) -> Result<InterfaceField> {
    match target {
        Representation::Sdf => {
            expect_sdf(sdf)?;
            Ok(sdf.clone())
        }
        Representation::Sharp => to_sharp(sdf),
        Representation::Tanh { epsilon } => to_tanh(sdf, epsilon),
    }
}

/// Phase-1 mask of any field: `s < 0` for SDFs, `value >= 0.5` otherwise.
pub fn binarize(field: &InterfaceField) -> PhaseMask {
    match field.kind {
        Representation::Sdf => field.grid.map(|&s| s < 0.0),
        Representation::Tanh { .. } | Representation::Sharp => field.grid.map(|&v| v >= 0.5),
    }
}

/// Canonical SDF of any field, via its phase mask.
pub fn to_sdf(field: &InterfaceField) -> InterfaceField {
    match field.kind {
        Representation::Sdf => field.clone(),
        _ => signed_distance(&binarize(field)),
    }
}

#[cfg(test)]
mod tests;
