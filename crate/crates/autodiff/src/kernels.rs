//! Raw numeric kernels over row-major slices. Shape checking happens in the
//! op layer; everything here assumes consistent sizes.

/// `c = a · b + beta · c` where the logical `a` is `m×k` and `b` is `k×n`.
/// `ta`/`tb` mark operands that are stored transposed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    ta: bool,
    b: &[f64],
    tb: bool,
    beta: f64,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements of the three slices, whose lengths are checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

pub(crate) fn transpose2d(rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = x[i * cols + j];
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub batch: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub h: usize,
    pub w: usize,
    pub kh: usize,
    pub kw: usize,
}

impl ConvGeom {
    pub fn oh(&self) -> usize {
        self.h - self.kh + 1
    }
    pub fn ow(&self) -> usize {
        self.w - self.kw + 1
    }
    fn patch(&self) -> usize {
        self.in_ch * self.kh * self.kw
    }
    fn out_hw(&self) -> usize {
        self.oh() * self.ow()
    }
}

fn im2col(g: &ConvGeom, x: &[f64], cols: &mut [f64]) {
    let (oh, ow) = (g.oh(), g.ow());
    let ohw = oh * ow;
    for c in 0..g.in_ch {
        for a in 0..g.kh {
            for b in 0..g.kw {
                let row = (c * g.kh + a) * g.kw + b;
                let dst = &mut cols[row * ohw..(row + 1) * ohw];
                for i in 0..oh {
                    let src = &x[(c * g.h + i + a) * g.w + b..][..ow];
                    dst[i * ow..(i + 1) * ow].copy_from_slice(src);
                }
            }
        }
    }
}

fn col2im_add(g: &ConvGeom, cols: &[f64], x: &mut [f64]) {
    let (oh, ow) = (g.oh(), g.ow());
    let ohw = oh * ow;
    for c in 0..g.in_ch {
        for a in 0..g.kh {
            for b in 0..g.kw {
                let row = (c * g.kh + a) * g.kw + b;
                let src = &cols[row * ohw..(row + 1) * ohw];
                for i in 0..oh {
                    let dst = &mut x[(c * g.h + i + a) * g.w + b..][..ow];
                    for (d, s) in dst.iter_mut().zip(&src[i * ow..(i + 1) * ow]) {
                        *d += s;
                    }
                }
            }
        }
    }
}

/// Valid, stride-1 cross-correlation: `[N,C,H,W] ⊛ [O,C,KH,KW] -> [N,O,OH,OW]`.
pub(crate) fn conv2d(g: &ConvGeom, x: &[f64], w: &[f64]) -> Vec<f64> {
    let (patch, ohw) = (g.patch(), g.out_hw());
    let in_sz = g.in_ch * g.h * g.w;
    let out_sz = g.out_ch * ohw;
    let mut out = vec![0.0; g.batch * out_sz];
    let mut cols = vec![0.0; patch * ohw];
    for n in 0..g.batch {
        im2col(g, &x[n * in_sz..(n + 1) * in_sz], &mut cols);
        gemm(
            g.out_ch,
            patch,
            ohw,
            w,
            false,
            &cols,
            false,
            0.0,
            &mut out[n * out_sz..(n + 1) * out_sz],
        );
    }
    out
}

/// Adjoint of [`conv2d`] in its input: `[N,O,OH,OW], [O,C,KH,KW] -> [N,C,H,W]`.
pub(crate) fn conv2d_input_grad(g: &ConvGeom, grad: &[f64], w: &[f64]) -> Vec<f64> {
    let (patch, ohw) = (g.patch(), g.out_hw());
    let in_sz = g.in_ch * g.h * g.w;
    let out_sz = g.out_ch * ohw;
    let mut dx = vec![0.0; g.batch * in_sz];
    let mut cols = vec![0.0; patch * ohw];
    for n in 0..g.batch {
        gemm(
            patch,
            g.out_ch,
            ohw,
            w,
            true,
            &grad[n * out_sz..(n + 1) * out_sz],
            false,
            0.0,
            &mut cols,
        );
        col2im_add(g, &cols, &mut dx[n * in_sz..(n + 1) * in_sz]);
    }
    dx
}

/// Adjoint of [`conv2d`] in its kernel: `[N,C,H,W], [N,O,OH,OW] -> [O,C,KH,KW]`.
pub(crate) fn conv2d_weight_grad(g: &ConvGeom, x: &[f64], grad: &[f64]) -> Vec<f64> {
    let (patch, ohw) = (g.patch(), g.out_hw());
    let in_sz = g.in_ch * g.h * g.w;
    let out_sz = g.out_ch * ohw;
    let mut dw = vec![0.0; g.out_ch * patch];
    let mut cols = vec![0.0; patch * ohw];
    for n in 0..g.batch {
        im2col(g, &x[n * in_sz..(n + 1) * in_sz], &mut cols);
        gemm(
            g.out_ch,
            ohw,
            patch,
            &grad[n * out_sz..(n + 1) * out_sz],
            false,
            &cols,
            true,
            1.0,
            &mut dw,
        );
    }
    dw
}

/// Non-overlapping `k×k` average pooling over the trailing two axes.
pub(crate) fn avgpool2d(planes: usize, h: usize, w: usize, k: usize, x: &[f64]) -> Vec<f64> {
    let (ph, pw) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; planes * ph * pw];
    for p in 0..planes {
        let src = &x[p * h * w..(p + 1) * h * w];
        let dst = &mut out[p * ph * pw..(p + 1) * ph * pw];
        for i in 0..ph * k {
            for j in 0..pw * k {
                dst[(i / k) * pw + j / k] += src[i * w + j];
            }
        }
        dst.iter_mut().for_each(|v| *v *= scale);
    }
    out
}

/// Adjoint of [`avgpool2d`]: spreads each pooled value over its window.
pub(crate) fn avgpool2d_grad(planes: usize, h: usize, w: usize, k: usize, g: &[f64]) -> Vec<f64> {
    let (ph, pw) = (h / k, w / k);
    let scale = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; planes * h * w];
    for p in 0..planes {
        let src = &g[p * ph * pw..(p + 1) * ph * pw];
        let dst = &mut out[p * h * w..(p + 1) * h * w];
        for i in 0..ph * k {
            for j in 0..pw * k {
                dst[i * w + j] = src[(i / k) * pw + j / k] * scale;
            }
        }
    }
    out
}

/// Row-wise softmax over the trailing axis of length `k`.
pub(crate) fn softmax_rows(k: usize, x: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, dst) in x.chunks(k).zip(out.chunks_mut(k)) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for (d, &v) in dst.iter_mut().zip(row) {
            *d = (v - max).exp();
            total += *d;
        }
        dst.iter_mut().for_each(|d| *d /= total);
    }
    out
}

/// Row-wise log-sum-exp over the trailing axis of length `k`.
pub(crate) fn logsumexp_rows(k: usize, x: &[f64]) -> Vec<f64> {
    x.chunks(k)
        .map(|row| {
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
        })
        .collect()
}
