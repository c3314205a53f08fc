//! Forward and backward kernels of the encoder layers.

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Output side of a convolution along one axis.
pub fn conv_out(n: usize, k: usize, stride: usize, pad: usize) -> usize {
    (n + 2 * pad - k) / stride + 1
}

// range of output positions whose tap `k` lands inside `0..n`
fn valid_range(out: usize, n: usize, k: usize, stride: usize, pad: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(k).div_ceil(stride);
    let hi = if n + pad > k {
        ((n + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo, hi.max(lo))
}

fn conv_dims(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<[usize; 6]> {
    if x.shape.len() != 4 || w.shape.len() != 4 || b.shape.len() != 1 {
        return Err(Error::shape(
            "NCHW input, OIKK weight, O bias",
            format!("{:?} {:?} {:?}", x.shape, w.shape, b.shape),
        ));
    }
    let (n, c, h, wd) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
    let (o, ci, kh, kw) = (w.shape[0], w.shape[1], w.shape[2], w.shape[3]);
    if ci != c || b.shape[0] != o || kh != kw {
        return Err(Error::shape(
            format!("{c} input channels, {o} biases, square kernel"),
            format!("{:?} {:?}", w.shape, b.shape),
        ));
    }
    Ok([n, c, h, wd, o, kh])
}

// unfold one sample into a `[c*k*k, oh*ow]` row-major patch matrix
fn im2col(x: &[f64], dims: [usize; 7], cols: &mut [f64]) {
    let [c, h, wd, k, stride, pad, ow] = dims;
    let p = cols.len() / (c * k * k);
    cols.fill(0.0);
    for ic in 0..c {
        for ky in 0..k {
            let (y_lo, y_hi) = valid_range(p / ow, h, ky, stride, pad);
            for kx in 0..k {
                let (x_lo, x_hi) = valid_range(ow, wd, kx, stride, pad);
                let row = &mut cols[((ic * k + ky) * k + kx) * p..][..p];
                for oy in y_lo..y_hi {
                    let irow = &x[(ic * h + oy * stride + ky - pad) * wd..][..wd];
                    for ox in x_lo..x_hi {
                        row[oy * ow + ox] = irow[ox * stride + kx - pad];
                    }
                }
            }
        }
    }
}

// scatter-add a patch matrix back onto one sample
fn col2im(cols: &[f64], dims: [usize; 7], x: &mut [f64]) {
    let [c, h, wd, k, stride, pad, ow] = dims;
    let p = cols.len() / (c * k * k);
    for ic in 0..c {
        for ky in 0..k {
            let (y_lo, y_hi) = valid_range(p / ow, h, ky, stride, pad);
            for kx in 0..k {
                let (x_lo, x_hi) = valid_range(ow, wd, kx, stride, pad);
                let row = &cols[((ic * k + ky) * k + kx) * p..][..p];
                for oy in y_lo..y_hi {
                    let irow = &mut x[(ic * h + oy * stride + ky - pad) * wd..][..wd];
                    for ox in x_lo..x_hi {
                        irow[ox * stride + kx - pad] += row[oy * ow + ox];
                    }
                }
            }
        }
    }
}

// c = alpha * a * b + beta * c with explicit (row, column) strides
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize), beta: f64, c: &mut [f64]) {
    assert!(c.len() >= m * n);
    let max_index =
        |rows: usize, cols: usize, rs: isize, cs: isize| (rows - 1) as isize * rs + (cols - 1) as isize * cs;
    assert!(max_index(m, k, a.1, a.2) < a.0.len() as isize);
    assert!(max_index(k, n, b.1, b.2) < b.0.len() as isize);
    // SAFETY: the asserts above keep every strided access inside the slices
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// 2D cross-correlation with zero padding, NCHW layout.
pub fn conv2d(x: &Tensor, w: &Tensor, b: &Tensor, stride: usize, pad: usize) -> Result<Tensor> {
    let [n, c, h, wd, o, k] = conv_dims(x, w, b)?;
    if h + 2 * pad < k || wd + 2 * pad < k {
        return Err(Error::shape(format!("input of at least {k} px"), format!("{h}x{wd}")));
    }
    let (oh, ow) = (conv_out(h, k, stride, pad), conv_out(wd, k, stride, pad));
    let (p, ckk) = (oh * ow, c * k * k);
    let dims = [c, h, wd, k, stride, pad, ow];
    let mut out = Tensor::zeros(&[n, o, oh, ow]);
    let mut cols = vec![0.0; ckk * p];
    for ni in 0..n {
        im2col(&x.data[ni * c * h * wd..(ni + 1) * c * h * wd], dims, &mut cols);
        let dst = &mut out.data[ni * o * p..(ni + 1) * o * p];
        for (oc, row) in dst.chunks_mut(p).enumerate() {
            row.fill(b.data[oc]);
        }
        gemm(o, ckk, p, (&w.data, ckk as isize, 1), (&cols, p as isize, 1), 1.0, dst);
    }
    Ok(out)
}

/// Gradients with respect to input, weight and bias.
pub fn conv2d_backward(
    x: &Tensor,
    w: &Tensor,
    b: &Tensor,
    stride: usize,
    pad: usize,
    dout: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [n, c, h, wd, o, k] = conv_dims(x, w, b)?;
    let (oh, ow) = (dout.shape[2], dout.shape[3]);
    let (p, ckk) = (oh * ow, c * k * k);
    let dims = [c, h, wd, k, stride, pad, ow];
    let mut dx = x.zeros_like();
    let mut dw = w.zeros_like();
    let mut db = b.zeros_like();
    let mut cols = vec![0.0; ckk * p];
    let mut dcols = vec![0.0; ckk * p];
    for ni in 0..n {
        let g = &dout.data[ni * o * p..(ni + 1) * o * p];
        for (oc, row) in g.chunks(p).enumerate() {
            db.data[oc] += row.iter().sum::<f64>();
        }
        let xs = ni * c * h * wd..(ni + 1) * c * h * wd;
        im2col(&x.data[xs.clone()], dims, &mut cols);
        // dW += dOut * cols^T
        gemm(o, p, ckk, (g, p as isize, 1), (&cols, 1, p as isize), 1.0, &mut dw.data);
        // dcols = W^T * dOut
        gemm(
            ckk,
            o,
            p,
            (&w.data, 1, ckk as isize),
            (g, p as isize, 1),
            0.0,
            &mut dcols,
        );
        col2im(&dcols, dims, &mut dx.data[xs]);
    }
    Ok((dx, dw, db))
}

pub fn relu(x: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x.data.iter().map(|v| v.max(0.0)).collect(),
    }
}

pub fn relu_backward(x: &Tensor, dout: &Tensor) -> Tensor {
    Tensor {
        shape: x.shape.clone(),
        data: x
            .data
            .iter()
            .zip(&dout.data)
            .map(|(v, g)| if *v > 0.0 { *g } else { 0.0 })
            .collect(),
    }
}

/// Mean over the spatial axes: `[N, C, H, W] -> [N, C]`.
pub fn global_avg_pool(x: &Tensor) -> Result<Tensor> {
    if x.shape.len() != 4 {
        return Err(Error::shape("NCHW", format!("{:?}", x.shape)));
    }
    let (n, c, hw) = (x.shape[0], x.shape[1], x.shape[2] * x.shape[3]);
    let mut out = Tensor::zeros(&[n, c]);
    for (i, o) in out.data.iter_mut().enumerate() {
        *o = x.data[i * hw..(i + 1) * hw].iter().sum::<f64>() / hw as f64;
    }
    Ok(out)
}

pub fn global_avg_pool_backward(x: &Tensor, dout: &Tensor) -> Tensor {
    let hw = x.shape[2] * x.shape[3];
    let mut dx = x.zeros_like();
    for (i, g) in dout.data.iter().enumerate() {
        dx.data[i * hw..(i + 1) * hw].fill(g / hw as f64);
    }
    dx
}

/// `x W^T + b` for `x: [N, I]`, `W: [O, I]`.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    if x.shape.len() != 2 || w.shape.len() != 2 || w.shape[1] != x.shape[1] || b.shape != [w.shape[0]] {
        return Err(Error::shape(
            "x [N, I], W [O, I], b [O]",
            format!("{:?} {:?} {:?}", x.shape, w.shape, b.shape),
        ));
    }
    let (n, i, o) = (x.shape[0], x.shape[1], w.shape[0]);
    let mut out = Tensor::zeros(&[n, o]);
    for r in 0..n {
        let xr = &x.data[r * i..(r + 1) * i];
        for c in 0..o {
            let wr = &w.data[c * i..(c + 1) * i];
            out.data[r * o + c] = b.data[c] + xr.iter().zip(wr).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    Ok(out)
}

pub fn linear_backward(x: &Tensor, w: &Tensor, dout: &Tensor) -> (Tensor, Tensor, Tensor) {
    let (n, i, o) = (x.shape[0], x.shape[1], w.shape[0]);
    let mut dx = x.zeros_like();
    let mut dw = w.zeros_like();
    let mut db = Tensor::zeros(&[o]);
    for r in 0..n {
        for c in 0..o {
            let g = dout.data[r * o + c];
            db.data[c] += g;
            for k in 0..i {
                dw.data[c * i + k] += g * x.data[r * i + k];
                dx.data[r * i + k] += g * w.data[c * i + k];
            }
        }
    }
    (dx, dw, db)
}

/// Norm floor of the cosine similarity.
pub const COSINE_EPS: f64 = 1e-12;

/// Contrastive loss summary.
#[derive(Clone, Debug, PartialEq)]
pub struct LossReport {
    /// Mean over all directed terms.
    pub loss: f64,
    /// `l(i, j)` then `l(j, i)` for each pair.
    pub pair_losses: Vec<f64>,
    /// Norm of the gradient with respect to the projections.
    pub grad_norm: f64,
}

/// InfoNCE over cosine similarities at temperature `tau`. Each pair `(i, j)`
/// contributes `l(i, j)` and `l(j, i)`, where the denominator of row `i` runs
/// over every other sample. Returns the report and `dL/dz`.
pub fn info_nce(z: &Tensor, pairs: &[(usize, usize)], tau: f64) -> Result<(LossReport, Tensor)> {
    if z.shape.len() != 2 {
        return Err(Error::shape("[2N, D]", format!("{:?}", z.shape)));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("temperature must be positive"));
    }
    let (m, d) = (z.shape[0], z.shape[1]);
    if pairs.is_empty() || pairs.iter().any(|&(i, j)| i >= m || j >= m || i == j) {
        return Err(Error::invalid("pair indices must name two distinct rows"));
    }
    let norms: Vec<f64> = (0..m)
        .map(|i| z.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut u = z.clone();
    for (i, n) in norms.iter().enumerate() {
        let n = n.max(COSINE_EPS);
        u.data[i * d..(i + 1) * d].iter_mut().for_each(|v| *v /= n);
    }
    let mut s = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let v = u.row(i).iter().zip(u.row(j)).map(|(a, b)| a * b).sum::<f64>() / tau;
            s[i * m + j] = v;
            s[j * m + i] = v;
        }
    }
    let terms: Vec<(usize, usize)> = pairs.iter().flat_map(|&(i, j)| [(i, j), (j, i)]).collect();
    let scale = 1.0 / terms.len() as f64;
    let mut g = vec![0.0; m * m];
    let mut pair_losses = Vec::with_capacity(terms.len());
    for &(i, p) in &terms {
        let row = &s[i * m..(i + 1) * m];
        let mx = row
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, v)| *v)
            .fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = row
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, v)| (v - mx).exp())
            .sum();
        pair_losses.push((mx - row[p]) + sum.ln());
        for k in (0..m).filter(|k| *k != i) {
            let prob = (row[k] - mx).exp() / sum;
            let delta = if k == p { 1.0 } else { 0.0 };
            g[i * m + k] += (prob - delta) * scale / tau;
        }
    }
    let loss = pair_losses.iter().sum::<f64>() * scale;

    // back through the cosine similarities and the normalization
    let mut du = Tensor::zeros(&[m, d]);
    for i in 0..m {
        for k in 0..m {
            let gik = g[i * m + k];
            if gik == 0.0 {
                continue;
            }
            for c in 0..d {
                du.data[i * d + c] += gik * u.data[k * d + c];
                du.data[k * d + c] += gik * u.data[i * d + c];
            }
        }
    }
    let mut dz = Tensor::zeros(&[m, d]);
    for i in 0..m {
        let ui = u.row(i);
        let dui = &du.data[i * d..(i + 1) * d];
        if norms[i] > COSINE_EPS {
            let proj: f64 = ui.iter().zip(dui).map(|(a, b)| a * b).sum();
            for c in 0..d {
                dz.data[i * d + c] = (dui[c] - ui[c] * proj) / norms[i];
            }
        } else {
            for c in 0..d {
                dz.data[i * d + c] = dui[c] / COSINE_EPS;
            }
        }
    }
    let grad_norm = dz.norm();
    Ok((
        LossReport {
            loss,
            pair_losses,
            grad_norm,
        },
        dz,
    ))
}
