//! Raw compute kernels on flat slices: GEMM wrapper, im2col/col2im for 3D
//! convolution, and normalization statistics.

use serde::{Deserialize, Serialize};

use super::Scalar;

/// How convolutions treat voxels outside the volume.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PaddingMode {
    #[default]
    Zeros,
    Circular,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvSpec {
    pub stride: usize,
    pub padding: usize,
    pub mode: PaddingMode,
}

impl ConvSpec {
    /// Stride 1 with `(k - 1) / 2` padding.
    pub fn same(kernel: usize, mode: PaddingMode) -> Self {
        Self { stride: 1, padding: (kernel - 1) / 2, mode }
    }
}

/// `floor((len + 2p - k) / stride) + 1`, or `None` when the kernel does not fit.
pub fn conv_output_len(len: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = len + 2 * padding;
    if stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Row-major `c (m×n) = a (m×k) · b (k×n) [+ c]`, where `a_t` / `b_t` mean the
/// operand is stored transposed (`k×m` / `n×k`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    b: &[T],
    b_t: bool,
    c: &mut [T],
    accumulate: bool,
) {
    matmul_strided(m, k, n, a, a_t, k_stride(a_t, m, k), b, b_t, k_stride(b_t, k, n), c, n, accumulate)
}

fn k_stride(transposed: bool, rows: usize, cols: usize) -> usize {
    if transposed {
        rows
    } else {
        cols
    }
}

/// [`matmul`] with explicit leading dimensions: `lda`/`ldb` are the distance between
/// consecutive stored rows of `a`/`b`, and `ldc` that of `c`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_strided<T: Scalar>(
    m: usize,
    k: usize,
    n: usize,
    a: &[T],
    a_t: bool,
    lda: usize,
    b: &[T],
    b_t: bool,
    ldb: usize,
    c: &mut [T],
    ldc: usize,
    accumulate: bool,
) {
    let span = |rows: usize, cols: usize, ld: usize| if rows == 0 || cols == 0 { 0 } else { (rows - 1) * ld + cols };
    let (ar, ac) = if a_t { (k, m) } else { (m, k) };
    let (br, bc) = if b_t { (n, k) } else { (k, n) };
    assert!(
        a.len() >= span(ar, ac, lda) && b.len() >= span(br, bc, ldb) && c.len() >= span(m, n, ldc),
        "matmul operand too small"
    );
    if m == 0 || n == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, lda as isize) } else { (lda as isize, 1) };
    let (rsb, csb) = if b_t { (1, ldb as isize) } else { (ldb as isize, 1) };
    let beta = if accumulate { T::one() } else { T::zero() };
    // SAFETY: spans checked above; strides describe in-bounds views.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            T::one(),
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

/// For each kernel tap and output position along one axis, the source index or -1.
fn axis_map(len: usize, out: usize, k: usize, stride: usize, pad: usize, mode: PaddingMode) -> Vec<isize> {
    let mut map = Vec::with_capacity(k * out);
    for kk in 0..k {
        for o in 0..out {
            let i = (o * stride + kk) as isize - pad as isize;
            map.push(match mode {
                PaddingMode::Zeros if i < 0 || i >= len as isize => -1,
                PaddingMode::Zeros => i,
                PaddingMode::Circular => i.rem_euclid(len as isize),
            });
        }
    }
    map
}

/// Geometry of one convolution on a single sample.
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub dims: [usize; 3],
    pub kernel: usize,
    pub out: [usize; 3],
    maps: [Vec<isize>; 3],
    contiguous: bool,
}

impl ConvGeom {
    pub fn new(channels: usize, dims: [usize; 3], kernel: usize, spec: ConvSpec, out: [usize; 3]) -> Self {
        let maps = [0, 1, 2].map(|a| axis_map(dims[a], out[a], kernel, spec.stride, spec.padding, spec.mode));
        Self {
            channels,
            dims,
            kernel,
            out,
            maps,
            contiguous: spec.stride == 1,
        }
    }

    pub fn rows(&self) -> usize {
        self.channels * self.kernel.pow(3)
    }

    pub fn cols(&self) -> usize {
        self.out.iter().product()
    }

    /// Whether the column matrix is the input itself (1×1×1 kernel, stride 1, no padding).
    pub fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.out == self.dims && self.maps.iter().all(|m| m.iter().enumerate().all(|(i, &v)| v == i as isize))
    }

    /// Number of output rows (one row = `out[2]` voxels along x).
    pub fn out_rows(&self) -> usize {
        self.out[0] * self.out[1]
    }

    /// Output rows per tile so that a tile's column buffer stays cache-sized.
    pub fn tile_rows(&self) -> usize {
        const TILE_FLOATS: usize = 1 << 16;
        (TILE_FLOATS / (self.rows() * self.out[2]).max(1)).clamp(1, self.out_rows().max(1))
    }

    /// Fills `col` (`rows × (r1 - r0)·out[2]`) with the taps for output rows `r0..r1`.
    pub fn im2col_rows<T: Scalar>(&self, input: &[T], r0: usize, r1: usize, col: &mut [T]) {
        let [d, h, w] = self.dims;
        let [od, oh, ow] = self.out;
        let k = self.kernel;
        let p = (r1 - r0) * ow;
        let [md, mh, mw] = &self.maps;
        for ci in 0..self.channels {
            for kd in 0..k {
                for kh in 0..k {
                    for kw in 0..k {
                        let r = ((ci * k + kd) * k + kh) * k + kw;
                        let row = &mut col[r * p..(r + 1) * p];
                        let wmap = &mw[kw * ow..(kw + 1) * ow];
                        for (j, orow) in (r0..r1).enumerate() {
                            let (zd, zh) = (orow / oh, orow % oh);
                            let dst = &mut row[j * ow..(j + 1) * ow];
                            let id = md[kd * od + zd];
                            let ih = mh[kh * oh + zh];
                            if id < 0 || ih < 0 {
                                dst.fill(T::zero());
                                continue;
                            }
                            let src = &input[((ci * d + id as usize) * h + ih as usize) * w..][..w];
                            copy_row(dst, src, wmap, self.contiguous);
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`ConvGeom::im2col_rows`]: accumulates `col` back into `grad_input`.
    pub fn col2im_rows<T: Scalar>(&self, col: &[T], r0: usize, r1: usize, grad_input: &mut [T]) {
        let [d, h, w] = self.dims;
        let [od, oh, ow] = self.out;
        let k = self.kernel;
        let p = (r1 - r0) * ow;
        let [md, mh, mw] = &self.maps;
        for ci in 0..self.channels {
            for kd in 0..k {
                for kh in 0..k {
                    for kw in 0..k {
                        let r = ((ci * k + kd) * k + kh) * k + kw;
                        let row = &col[r * p..(r + 1) * p];
                        let wmap = &mw[kw * ow..(kw + 1) * ow];
                        for (j, orow) in (r0..r1).enumerate() {
                            let (zd, zh) = (orow / oh, orow % oh);
                            let id = md[kd * od + zd];
                            let ih = mh[kh * oh + zh];
                            if id < 0 || ih < 0 {
                                continue;
                            }
                            let src = &row[j * ow..(j + 1) * ow];
                            let dst = &mut grad_input[((ci * d + id as usize) * h + ih as usize) * w..][..w];
                            add_row(dst, src, wmap, self.contiguous);
                        }
                    }
                }
            }
        }
    }
}

#[inline]
fn add_row<T: Scalar>(dst: &mut [T], src: &[T], wmap: &[isize], contiguous: bool) {
    if contiguous {
        if let Some(lo) = wmap.iter().position(|&v| v >= 0) {
            let hi = wmap.iter().rposition(|&v| v >= 0).unwrap();
            let start = wmap[lo];
            if wmap[hi] - start == (hi - lo) as isize {
                let d = &mut dst[start as usize..=wmap[hi] as usize];
                d.iter_mut().zip(&src[lo..=hi]).for_each(|(a, &b)| *a = *a + b);
                return;
            }
        }
    }
    for (o, &iw) in wmap.iter().enumerate() {
        if iw >= 0 {
            dst[iw as usize] = dst[iw as usize] + src[o];
        }
    }
}

#[inline]
fn copy_row<T: Scalar>(dst: &mut [T], src: &[T], wmap: &[isize], contiguous: bool) {
    if contiguous {
        // stride 1: the valid taps form one contiguous run, unless padding wraps
        let first = wmap.iter().position(|&v| v >= 0);
        if let Some(lo) = first {
            let hi = wmap.iter().rposition(|&v| v >= 0).unwrap();
            let start = wmap[lo];
            if wmap[hi] - start == (hi - lo) as isize {
                dst[..lo].fill(T::zero());
                dst[lo..=hi].copy_from_slice(&src[start as usize..=wmap[hi] as usize]);
                dst[hi + 1..].fill(T::zero());
                return;
            }
        }
    }
    for (o, &iw) in wmap.iter().enumerate() {
        dst[o] = if iw >= 0 { src[iw as usize] } else { T::zero() };
    }
}

/// Mean and `1/sqrt(var + eps)` of a slice (population variance), accumulated in f64.
pub(crate) fn moments<T: Scalar>(x: &[T], eps: f64) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().map(|v| v.f64()).sum::<f64>() / n;
    let var = x.iter().map(|v| (v.f64() - mean).powi(2)).sum::<f64>() / n;
    (mean, 1.0 / (var + eps).sqrt())
}

/// Backward of `xhat = (x - mean) * rstd` for one normalization slice:
/// `dx = rstd · (dxhat - mean(dxhat) - xhat · mean(dxhat · xhat))`.
pub(crate) fn normalize_backward<T: Scalar>(xhat: &[T], dxhat: &[T], rstd: f64, dx: &mut [T]) {
    let n = xhat.len() as f64;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (&xh, &g) in xhat.iter().zip(dxhat) {
        s1 += g.f64();
        s2 += g.f64() * xh.f64();
    }
    let (m1, m2) = (s1 / n, s2 / n);
    for ((d, &xh), &g) in dx.iter_mut().zip(xhat).zip(dxhat) {
        *d = *d + T::c(rstd * (g.f64() - m1 - xh.f64() * m2));
    }
}
