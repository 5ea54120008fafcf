use crate::{Error, Result};

/// Dense scalar field on a uniform grid, x-fastest layout.
///
/// The domain edge has length 1 along the largest axis, so the voxel spacing is
/// `1 / max(dims)` in domain units.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    dims: [usize; 3],
    data: Vec<T>,
}

/// Floating-point field; the carrier for every interface representation.
pub type VoxelGrid = Grid<f32>;

/// Per-voxel phase indicator, `true` inside phase 1 (the droplets).
pub type PhaseMask = Grid<bool>;

impl<T> Grid<T> {
    pub fn from_vec(dims: [usize; 3], data: Vec<T>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Dimension(format!("grid dims must be positive, got {dims:?}")));
        }
        let expected = dims[0] * dims[1] * dims[2];
        if data.len() != expected {
            return Err(Error::Dimension(format!(
                "grid {dims:?} needs {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    /// Builds a grid by evaluating `f(x, y, z)` at every voxel.
    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        assert!(dims.iter().all(|&d| d > 0), "grid dims must be positive");
        let mut data = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for z in 0..dims[2] {
            for y in 0..dims[1] {
                for x in 0..dims[0] {
                    data.push(f(x, y, z));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Voxel spacing in domain units.
    pub fn spacing(&self) -> f64 {
        1.0 / *self.dims.iter().max().unwrap() as f64
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let x = idx % self.dims[0];
        let yz = idx / self.dims[0];
        [x, yz % self.dims[1], yz / self.dims[1]]
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> &T {
        &self.data[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: T) {
        let i = self.index(x, y, z);
        self.data[i] = value;
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid<U> {
        Grid {
            dims: self.dims,
            data: self.data.iter().map(f).collect(),
        }
    }

    pub fn same_dims<U>(&self, other: &Grid<U>) -> Result<()> {
        if self.dims != other.dims {
            return Err(Error::Dimension(format!(
                "grid dims differ: {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        Ok(())
    }
}

impl<T: Clone> Grid<T> {
    pub fn filled(dims: [usize; 3], value: T) -> Self {
        Self::from_fn(dims, |_, _, _| value.clone())
    }

    /// Copies the sub-block starting at `origin` with edge `size`.
    pub fn sub_block(&self, origin: [usize; 3], size: [usize; 3]) -> Result<Self> {
        for a in 0..3 {
            if origin[a] + size[a] > self.dims[a] || size[a] == 0 {
                return Err(Error::Dimension(format!(
                    "block at {origin:?} of size {size:?} exceeds grid {:?}",
                    self.dims
                )));
            }
        }
        Ok(Self::from_fn(size, |x, y, z| {
            self.get(origin[0] + x, origin[1] + y, origin[2] + z).clone()
        }))
    }
}

impl VoxelGrid {
    /// Like [`Grid::from_vec`], additionally rejecting NaN and infinite values.
    pub fn from_finite(dims: [usize; 3], data: Vec<f32>) -> Result<Self> {
        let grid = Self::from_vec(dims, data)?;
        grid.check_finite()?;
        Ok(grid)
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::Representation(format!(
                "non-finite value {} at voxel {:?}",
                self.data[i],
                self.coords(i)
            ))),
            None => Ok(()),
        }
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }
}

impl PhaseMask {
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn complement(&self) -> Self {
        self.map(|&b| !b)
    }

    /// Stores the mask as a `{0.0, 1.0}` volume.
    pub fn to_volume(&self) -> VoxelGrid {
        self.map(|&b| if b { 1.0 } else { 0.0 })
    }
}

/// Fraction of voxels inside phase 1.
pub fn volume_fraction(mask: &PhaseMask) -> f64 {
    mask.count() as f64 / mask.len() as f64
}
