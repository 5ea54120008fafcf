//! Exact Euclidean distance transform.
//!
//! Separable lower-envelope passes over squared distances, one axis at a time.
//! All arithmetic is on integer voxel offsets, so the squared distances are exact;
//! the final distance is `sqrt(d²) · h`.

use crate::volume::{Grid, PhaseMask};

const INF: i64 = i64::MAX;

/// Squared distance (in voxels²) from every voxel centre to the nearest `true` voxel
/// centre, or `None` when the mask has no `true` voxels.
pub fn edt_squared_voxels(mask: &PhaseMask) -> Option<Grid<i64>> {
    if !mask.data().iter().any(|&b| b) {
        return None;
    }
    let dims = mask.dims();
    let mut g: Vec<i64> = mask.data().iter().map(|&b| if b { 0 } else { INF }).collect();
    let strides = [1, dims[0], dims[0] * dims[1]];
    let n_max = *dims.iter().max().unwrap();
    let mut line = vec![0i64; n_max];
    let mut out = vec![0i64; n_max];
    let mut env = Envelope::with_capacity(n_max);

    for axis in 0..3 {
        let n = dims[axis];
        let stride = strides[axis];
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for j in 0..dims[b] {
            for i in 0..dims[a] {
                let base = i * strides[a] + j * strides[b];
                for k in 0..n {
                    line[k] = g[base + k * stride];
                }
                env.transform(&line[..n], &mut out[..n]);
                for k in 0..n {
                    g[base + k * stride] = out[k];
                }
            }
        }
    }
    Some(Grid::from_vec(dims, g).expect("same dims"))
}

/// Distance in domain units from every voxel centre to the nearest `true` voxel
/// centre; `None` when there are no such voxels.
pub fn edt(mask: &PhaseMask) -> Option<Grid<f64>> {
    let h = mask.spacing();
    edt_squared_voxels(mask).map(|d2| d2.map(|&v| (v as f64).sqrt() * h))
}

struct Envelope {
    sites: Vec<usize>,
    starts: Vec<usize>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            sites: Vec::with_capacity(n),
            starts: Vec::with_capacity(n),
        }
    }

    /// `out[x] = min_i (x - i)² + f[i]` over finite `f[i]`.
    fn transform(&mut self, f: &[i64], out: &mut [i64]) {
        let n = f.len();
        let eval = |x: usize, i: usize| {
            let d = x as i64 - i as i64;
            d * d + f[i]
        };
        // last x at which parabola i is no worse than parabola u (i < u)
        let sep = |i: usize, u: usize| {
            let (ii, uu) = (i as i64, u as i64);
            (uu * uu - ii * ii + f[u] - f[i]).div_euclid(2 * (uu - ii))
        };
        self.sites.clear();
        self.starts.clear();
        for u in 0..n {
            if f[u] == INF {
                continue;
            }
            while let (Some(&s), Some(&t)) = (self.sites.last(), self.starts.last()) {
                if eval(t, s) > eval(t, u) {
                    self.sites.pop();
                    self.starts.pop();
                } else {
                    break;
                }
            }
            match self.sites.last() {
                None => {
                    self.sites.push(u);
                    self.starts.push(0);
                }
                Some(&s) => {
                    let w = 1 + sep(s, u);
                    if w < n as i64 {
                        self.sites.push(u);
                        self.starts.push(w as usize);
                    }
                }
            }
        }
        if self.sites.is_empty() {
            out.fill(INF);
            return;
        }
        let mut q = self.sites.len() - 1;
        for x in (0..n).rev() {
            out[x] = eval(x, self.sites[q]);
            if x == self.starts[q] && q > 0 {
                q -= 1;
            }
        }
    }
}
