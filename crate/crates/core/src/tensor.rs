//! Dense row-major tensors and the matrix/convolution kernels built on them.
//!
//! All values are 64-bit floats. Accumulations run in row-major element
//! order, single-threaded, so results are bit-reproducible for fixed inputs.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense multi-dimensional array, row-major, f64 storage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, checking that the element count matches the shape
    /// and that every value is finite.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if shape.contains(&0) {
            return Err(Error::Dimension(format!(
                "zero-sized dimension in shape {shape:?}"
            )));
        }
        if expected != data.len() {
            return Err(Error::Dimension(format!(
                "shape {shape:?} wants {expected} elements, got {}",
                data.len()
            )));
        }
        let t = Tensor { shape, data };
        t.check_finite()?;
        Ok(t)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    /// 1-D tensor from a value slice.
    pub fn vector(values: &[f64]) -> Self {
        Tensor {
            shape: vec![values.len()],
            data: values.to_vec(),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Reject NaN/Inf anywhere in the tensor.
    pub fn check_finite(&self) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite value {v} at flat index {i}"
                )));
            }
        }
        Ok(())
    }

    /// Reinterpret the same data under a new shape.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::Dimension(format!(
                "cannot reshape {:?} ({} elems) to {shape:?} ({n} elems)",
                self.shape,
                self.data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, mut f: impl FnMut(f64) -> f64) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Elementwise combination; shapes must match exactly.
    pub fn zip_map(&self, other: &Tensor, mut f: impl FnMut(f64, f64) -> f64) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "elementwise op on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul_elem(&self, other: &Tensor) -> Result<Tensor> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        self.map(|v| v * c)
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension(format!(
                "add_assign on {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    /// Index of the largest value; first occurrence wins ties.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.data.iter().enumerate() {
            if v > self.data[best] {
                best = i;
            }
        }
        best
    }
}

/// Matrix product of `a` [m,k] and `b` [k,n]; accumulation runs over k in
/// ascending order for each output element.
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ashape, bshape) = (a.shape(), b.shape());
    if ashape.len() != 2 || bshape.len() != 2 {
        return Err(Error::Dimension(format!(
            "matmul needs rank-2 tensors, got {ashape:?} and {bshape:?}"
        )));
    }
    let (m, k) = (ashape[0], ashape[1]);
    let (k2, n) = (bshape[0], bshape[1]);
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul inner dims differ: {k} vs {k2}"
        )));
    }
    a.check_finite()?;
    b.check_finite()?;
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0;
            for p in 0..k {
                acc += a.data[i * k + p] * b.data[p * n + j];
            }
            out[i * n + j] = acc;
        }
    }
    Ok(Tensor {
        shape: vec![m, n],
        data: out,
    })
}

/// `weight` [out,in] times `x` [in], plus `bias` [out].
pub fn affine(weight: &Tensor, bias: &Tensor, x: &Tensor) -> Result<Tensor> {
    let ws = weight.shape();
    if ws.len() != 2 {
        return Err(Error::Dimension(format!("weight must be rank 2, got {ws:?}")));
    }
    let (rows, cols) = (ws[0], ws[1]);
    if x.len() != cols || x.shape().len() != 1 {
        return Err(Error::Dimension(format!(
            "affine input {:?} does not match weight {ws:?}",
            x.shape()
        )));
    }
    if bias.len() != rows {
        return Err(Error::Dimension(format!(
            "bias length {} does not match {rows} rows",
            bias.len()
        )));
    }
    let mut out = vec![0.0; rows];
    for (r, o) in out.iter_mut().enumerate() {
        let mut acc = bias.data[r];
        let row = &weight.data[r * cols..(r + 1) * cols];
        for (w, v) in row.iter().zip(&x.data) {
            acc += w * v;
        }
        *o = acc;
    }
    Ok(Tensor {
        shape: vec![rows],
        data: out,
    })
}

/// Output spatial length for one convolution axis.
pub fn conv_out_len(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if kernel > padded {
        return Err(Error::Dimension(format!(
            "kernel {kernel} larger than padded input {padded}"
        )));
    }
    if stride == 0 {
        return Err(Error::Parameter("stride must be >= 1".into()));
    }
    Ok((padded - kernel) / stride + 1)
}

/// 2-D cross-correlation (no kernel flip) with zero padding.
///
/// `input` is [c_in, h, w], `kernels` is [c_out, c_in, kh, kw]; output is
/// [c_out, h', w'] with h' = floor((h + 2p - kh)/stride) + 1.
pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let ishape = input.shape();
    let kshape = kernels.shape();
    if ishape.len() != 3 || kshape.len() != 4 {
        return Err(Error::Dimension(format!(
            "conv2d expects input [c,h,w] and kernels [co,ci,kh,kw], got {ishape:?} and {kshape:?}"
        )));
    }
    let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
    let (c_out, kc_in, kh, kw) = (kshape[0], kshape[1], kshape[2], kshape[3]);
    if c_in != kc_in {
        return Err(Error::Dimension(format!(
            "conv2d channel mismatch: input {c_in}, kernels {kc_in}"
        )));
    }
    input.check_finite()?;
    kernels.check_finite()?;
    let oh = conv_out_len(h, kh, stride, padding)?;
    let ow = conv_out_len(w, kw, stride, padding)?;
    let mut out = vec![0.0; c_out * oh * ow];
    for co in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for ci in 0..c_in {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let iv = input.data[(ci * h + iy as usize) * w + ix as usize];
                            let kv = kernels.data[((co * c_in + ci) * kh + ky) * kw + kx];
                            acc += iv * kv;
                        }
                    }
                }
                out[(co * oh + oy) * ow + ox] = acc;
            }
        }
    }
    Ok(Tensor {
        shape: vec![c_out, oh, ow],
        data: out,
    })
}

/// Gradients of `conv2d` with respect to its input and kernels, given the
/// gradient on the output.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let ishape = input.shape();
    let kshape = kernels.shape();
    let (c_in, h, w) = (ishape[0], ishape[1], ishape[2]);
    let (c_out, _, kh, kw) = (kshape[0], kshape[1], kshape[2], kshape[3]);
    let oh = conv_out_len(h, kh, stride, padding)?;
    let ow = conv_out_len(w, kw, stride, padding)?;
    if grad_out.shape() != [c_out, oh, ow] {
        return Err(Error::Dimension(format!(
            "conv2d_backward grad shape {:?}, expected [{c_out}, {oh}, {ow}]",
            grad_out.shape()
        )));
    }
    let mut dinput = vec![0.0; input.len()];
    let mut dkernels = vec![0.0; kernels.len()];
    for co in 0..c_out {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = grad_out.data[(co * oh + oy) * ow + ox];
                for ci in 0..c_in {
                    for ky in 0..kh {
                        let iy = (oy * stride + ky) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let ix = (ox * stride + kx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let ii = (ci * h + iy as usize) * w + ix as usize;
                            let ki = ((co * c_in + ci) * kh + ky) * kw + kx;
                            dinput[ii] += g * kernels.data[ki];
                            dkernels[ki] += g * input.data[ii];
                        }
                    }
                }
            }
        }
    }
    Ok((
        Tensor {
            shape: ishape.to_vec(),
            data: dinput,
        },
        Tensor {
            shape: kshape.to_vec(),
            data: dkernels,
        },
    ))
}

/// Non-overlapping average pooling over [c, h, w]; h and w must divide by k.
pub fn avgpool2d(input: &Tensor, k: usize) -> Result<Tensor> {
    let s = input.shape();
    if s.len() != 3 {
        return Err(Error::Dimension(format!(
            "avgpool expects [c,h,w], got {s:?}"
        )));
    }
    let (c, h, w) = (s[0], s[1], s[2]);
    if k == 0 || h % k != 0 || w % k != 0 {
        return Err(Error::Dimension(format!(
            "avgpool kernel {k} does not divide {h}x{w}"
        )));
    }
    let (oh, ow) = (h / k, w / k);
    let inv = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; c * oh * ow];
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0;
                for dy in 0..k {
                    for dx in 0..k {
                        acc += input.data[(ci * h + oy * k + dy) * w + ox * k + dx];
                    }
                }
                out[(ci * oh + oy) * ow + ox] = acc * inv;
            }
        }
    }
    Ok(Tensor {
        shape: vec![c, oh, ow],
        data: out,
    })
}

/// Gradient of `avgpool2d`: each input cell receives grad/k².
pub fn avgpool2d_backward(input_shape: &[usize], k: usize, grad_out: &Tensor) -> Result<Tensor> {
    let (c, h, w) = (input_shape[0], input_shape[1], input_shape[2]);
    let (oh, ow) = (h / k, w / k);
    if grad_out.shape() != [c, oh, ow] {
        return Err(Error::Dimension(format!(
            "avgpool_backward grad shape {:?}, expected [{c}, {oh}, {ow}]",
            grad_out.shape()
        )));
    }
    let inv = 1.0 / (k * k) as f64;
    let mut out = vec![0.0; c * h * w];
    for ci in 0..c {
        for oy in 0..oh {
            for ox in 0..ow {
                let g = grad_out.data[(ci * oh + oy) * ow + ox] * inv;
                for dy in 0..k {
                    for dx in 0..k {
                        out[(ci * h + oy * k + dy) * w + ox * k + dx] = g;
                    }
                }
            }
        }
    }
    Ok(Tensor {
        shape: input_shape.to_vec(),
        data: out,
    })
}
