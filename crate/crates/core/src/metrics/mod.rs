//! Reconstruction quality: Dice overlap, normalized Hausdorff distance between
//! interface voxel sets, droplet size distributions, and summary statistics.

mod droplets;
mod eval;
mod stats;

pub use droplets::{droplet_size_distribution, equivalent_diameter, DropletHistogram, LogBins};
pub use eval::{
    evaluate, evaluate_fields, histogram_csv, results_csv, ConstantModel, EvalResult, Evaluation, IdentityModel,
    Reconstructor,
};
pub use stats::{summarize, SummaryStats};

use crate::repr::edt;
use crate::volume::PhaseMask;
use crate::Result;

/// `2|X ∩ Y| / (|X| + |Y|)`; two empty masks agree perfectly (1.0).
pub fn dice(x: &PhaseMask, y: &PhaseMask) -> Result<f64> {
    x.same_dims(y)?;
    let mut inter = 0usize;
    let mut total = 0usize;
    for (&a, &b) in x.data().iter().zip(y.data()) {
        inter += (a && b) as usize;
        total += a as usize + b as usize;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

/// Foreground voxels with at least one face neighbour in the background. The
/// domain boundary does not count as background.
pub fn interface_voxels(mask: &PhaseMask) -> PhaseMask {
    let [nx, ny, nz] = mask.dims();
    PhaseMask::from_fn(mask.dims(), |x, y, z| {
        if !*mask.get(x, y, z) {
            return false;
        }
        (x > 0 && !*mask.get(x - 1, y, z))
            || (x + 1 < nx && !*mask.get(x + 1, y, z))
            || (y > 0 && !*mask.get(x, y - 1, z))
            || (y + 1 < ny && !*mask.get(x, y + 1, z))
            || (z > 0 && !*mask.get(x, y, z - 1))
            || (z + 1 < nz && !*mask.get(x, y, z + 1))
    })
}

/// Symmetric Hausdorff distance between interface voxel centres, in domain units.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Hausdorff {
    pub value: f64,
    /// Exactly one of the two interfaces was empty; `value` is then `sqrt(3)`.
    pub one_sided_empty: bool,
}

/// Value reported when only one interface exists: the domain diagonal.
pub const HAUSDORFF_SENTINEL: f64 = 1.732_050_807_568_877_2;

pub fn hausdorff(x: &PhaseMask, y: &PhaseMask) -> Result<Hausdorff> {
    x.same_dims(y)?;
    let (gx, gy) = (interface_voxels(x), interface_voxels(y));
    let (dx, dy) = (edt(&gx), edt(&gy));
    let value = match (&dx, &dy) {
        (None, None) => 0.0,
        (Some(_), None) | (None, Some(_)) => {
            return Ok(Hausdorff { value: HAUSDORFF_SENTINEL, one_sided_empty: true });
        }
        (Some(to_x), Some(to_y)) => directed(&gx, to_y).max(directed(&gy, to_x)),
    };
    Ok(Hausdorff { value, one_sided_empty: false })
}

fn directed(from: &PhaseMask, dist_to_other: &crate::volume::Grid<f64>) -> f64 {
    from.data()
        .iter()
        .zip(dist_to_other.data())
        .filter(|(&on, _)| on)
        .fold(0.0, |m, (_, &d)| m.max(d))
}
