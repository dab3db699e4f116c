//! Raw numeric kernels behind the tape operations.

/// Strided view of a row-major matrix stored in a slice.
#[derive(Clone, Copy)]
pub(crate) struct Mat<'a> {
    pub data: &'a [f32],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a> Mat<'a> {
    pub fn new(data: &'a [f32], rows: usize, cols: usize) -> Self {
        Mat { data, rows, cols, rs: cols, cs: 1 }
    }

    pub fn t(self) -> Self {
        Mat {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn last_index(&self) -> usize {
        if self.rows == 0 || self.cols == 0 {
            0
        } else {
            (self.rows - 1) * self.rs + (self.cols - 1) * self.cs
        }
    }
}

/// `c = alpha * a * b + beta * c` with `c` a contiguous `a.rows x b.cols` matrix.
pub(crate) fn gemm(alpha: f32, a: Mat<'_>, b: Mat<'_>, beta: f32, c: &mut [f32]) {
    assert_eq!(a.cols, b.rows, "gemm inner dimensions");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in &mut c[..m * n] {
            *v *= beta;
        }
        return;
    }
    assert!(a.last_index() < a.data.len());
    assert!(b.last_index() < b.data.len());
    // SAFETY: the asserts above bound every index the kernel touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Geometry of a same-padded square convolution.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(channels: usize, height: usize, width: usize, kernel: usize, stride: usize) -> Self {
        let pad = (kernel - 1) / 2;
        ConvGeom {
            channels,
            height,
            width,
            kernel,
            stride,
            pad,
            out_h: (height + 2 * pad - kernel) / stride + 1,
            out_w: (width + 2 * pad - kernel) / stride + 1,
        }
    }

    pub fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }
}

/// Unfolds one image `[C,H,W]` into `[C*k*k, out_h*out_w]`.
pub(crate) fn im2col(input: &[f32], g: &ConvGeom, cols: &mut [f32]) {
    let p = g.out_pixels();
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &input[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = &mut cols[((c * k + ky) * k + kx) * p..][..p];
                for oy in 0..g.out_h {
                    let dst = &mut row[oy * g.out_w..(oy + 1) * g.out_w];
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    if g.stride == 1 {
                        // ix = ox + kx - pad
                        let shift = kx as isize - g.pad as isize;
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = ox as isize + shift;
                            *d = if ix >= 0 && (ix as usize) < g.width { src[ix as usize] } else { 0.0 };
                        }
                    } else {
                        for (ox, d) in dst.iter_mut().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            *d = if ix >= 0 && (ix as usize) < g.width { src[ix as usize] } else { 0.0 };
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: accumulates columns back into `[C,H,W]`.
pub(crate) fn col2im(cols: &[f32], g: &ConvGeom, out: &mut [f32]) {
    let p = g.out_pixels();
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut out[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ky in 0..k {
            for kx in 0..k {
                let row = &cols[((c * k + ky) * k + kx) * p..][..p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    let src = &row[oy * g.out_w..(oy + 1) * g.out_w];
                    for (ox, &v) in src.iter().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.width {
                            dst[ix as usize] += v;
                        }
                    }
                }
            }
        }
    }
}

/// Copies `src` (shape `dims`) into a new buffer with axes reordered by `perm`.
pub(crate) fn permute(src: &[f32], dims: &[usize], perm: &[usize]) -> Vec<f32> {
    let rank = dims.len();
    let mut in_strides = vec![1usize; rank];
    for i in (0..rank.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * dims[i + 1];
    }
    let out_dims: Vec<usize> = perm.iter().map(|&p| dims[p]).collect();
    let strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let mut out = Vec::with_capacity(src.len());
    let mut idx = vec![0usize; rank];
    let mut offset = 0usize;
    for _ in 0..src.len() {
        out.push(src[offset]);
        for ax in (0..rank).rev() {
            idx[ax] += 1;
            offset += strides[ax];
            if idx[ax] < out_dims[ax] {
                break;
            }
            offset -= strides[ax] * out_dims[ax];
            idx[ax] = 0;
        }
    }
    out
}

pub(crate) fn inverse_perm(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// `log(1 + exp(-|x|))` plus the hinge part, i.e. the stable binary
/// cross-entropy of logit `x` against label `y`.
pub(crate) fn bce_logit(x: f64, y: f64) -> f64 {
    x.max(0.0) - x * y + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f32) -> f32 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                c[i * n + j] = (0..k).map(|t| a[i * k + t] * b[t * n + j]).sum();
            }
        }
        c
    }

    #[test]
    fn gemm_matches_naive_including_transposes() {
        let (m, k, n) = (3, 5, 4);
        let a: Vec<f32> = (0..m * k).map(|i| (i as f32 * 0.37).sin()).collect();
        let b: Vec<f32> = (0..k * n).map(|i| (i as f32 * 0.11).cos()).collect();
        let expect = naive_matmul(&a, &b, m, k, n);
        let mut c = vec![0.0; m * n];
        gemm(1.0, Mat::new(&a, m, k), Mat::new(&b, k, n), 0.0, &mut c);
        for (x, y) in c.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-5);
        }
        // a^T stored as [k, m]
        let at = permute(&a, &[m, k], &[1, 0]);
        let mut c2 = vec![0.0; m * n];
        gemm(1.0, Mat::new(&at, k, m).t(), Mat::new(&b, k, n), 0.0, &mut c2);
        assert_eq!(c, c2);
    }

    #[test]
    fn im2col_col2im_are_adjoint() {
        // <im2col(x), y> == <x, col2im(y)>
        for &(stride, kernel) in &[(1, 3), (2, 3), (2, 1), (1, 1)] {
            let g = ConvGeom::new(2, 5, 6, kernel, stride);
            let x: Vec<f32> = (0..2 * 5 * 6).map(|i| (i as f32 * 0.7).sin()).collect();
            let y: Vec<f32> = (0..g.col_rows() * g.out_pixels()).map(|i| (i as f32 * 0.3).cos()).collect();
            let mut cols = vec![0.0; y.len()];
            im2col(&x, &g, &mut cols);
            let mut back = vec![0.0; x.len()];
            col2im(&y, &g, &mut back);
            let lhs: f64 = cols.iter().zip(&y).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
            let rhs: f64 = x.iter().zip(&back).map(|(a, b)| (*a as f64) * (*b as f64)).sum();
            assert!((lhs - rhs).abs() < 1e-4, "stride {stride} kernel {kernel}");
        }
    }

    #[test]
    fn output_sizes_round_up() {
        let g = ConvGeom::new(1, 5, 7, 3, 2);
        assert_eq!((g.out_h, g.out_w), (3, 4));
        let g = ConvGeom::new(1, 16, 256, 1, 2);
        assert_eq!((g.out_h, g.out_w), (8, 128));
    }

    #[test]
    fn permute_transposes() {
        let src: Vec<f32> = (0..24).map(|i| i as f32).collect();
        let out = permute(&src, &[2, 3, 4], &[2, 0, 1]);
        // out[k][i][j] = src[i][j][k]
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(out[k * 6 + i * 3 + j], src[i * 12 + j * 4 + k]);
                }
            }
        }
        assert_eq!(permute(&out, &[4, 2, 3], &inverse_perm(&[2, 0, 1])), src);
    }

    #[test]
    fn bce_is_stable() {
        assert!((bce_logit(0.0, 1.0) - std::f64::consts::LN_2).abs() < 1e-12);
        assert!((bce_logit(20.0, 1.0) - (-20f64).exp().ln_1p()).abs() < 1e-15);
        assert!(bce_logit(-800.0, 1.0).is_finite());
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-100.0) >= 0.0 && sigmoid(100.0) <= 1.0);
    }
}
