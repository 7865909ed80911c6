//! Network layers realized on crossbars, plus the analog activation stages.
//!
//! Convolution, transposed convolution and dense layers are all lowered to
//! one crossbar each: rows are the flattened receptive field
//! (`kernel_h · kernel_w · in_channels`, or the whole input for dense) and
//! columns are the filters. Every output pixel is one crossbar read of its
//! patch. A [`PatchMap`] records, for each output position and crossbar row,
//! which input element drives that row (or none, for padding and the holes
//! of a strided transposed convolution).
//!
//! Spatial tensors are `[height, width, channels]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::crossbar::{CrossbarArray, ReadoutMode};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv,
    Deconv,
    MeanPool,
    Dense,
    Relu,
    Tanh,
    BatchNorm,
    Dropout,
}

impl LayerKind {
    pub fn uses_crossbar(self) -> bool {
        matches!(self, LayerKind::Conv | LayerKind::Deconv | LayerKind::Dense)
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            LayerKind::Conv => 0,
            LayerKind::Deconv => 1,
            LayerKind::MeanPool => 2,
            LayerKind::Dense => 3,
            LayerKind::Relu => 4,
            LayerKind::Tanh => 5,
            LayerKind::BatchNorm => 6,
            LayerKind::Dropout => 7,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => LayerKind::Conv,
            1 => LayerKind::Deconv,
            2 => LayerKind::MeanPool,
            3 => LayerKind::Dense,
            4 => LayerKind::Relu,
            5 => LayerKind::Tanh,
            6 => LayerKind::BatchNorm,
            7 => LayerKind::Dropout,
            _ => return None,
        })
    }
}

/// One layer of a topology. `kernel` doubles as the pooling window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerDesc {
    pub kind: LayerKind,
    pub kernel: (usize, usize),
    pub filters: usize,
    pub stride: usize,
    pub padding: usize,
    pub output_padding: usize,
    /// Dropout rate; unused by other kinds.
    pub rate: f64,
    /// Crossbar layers only: one extra row driven by [`BIAS_VOLTS`].
    #[serde(default)]
    pub bias: bool,
    pub in_shape: Vec<usize>,
    pub out_shape: Vec<usize>,
}

fn spatial(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match *shape {
        [h, w, c] if h > 0 && w > 0 && c > 0 => Ok((h, w, c)),
        _ => Err(Error::Shape(format!(
            "expected [height, width, channels], got {shape:?}"
        ))),
    }
}

fn conv_extent(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    let padded = input + 2 * padding;
    if kernel == 0 || stride == 0 || padded < kernel {
        return Err(Error::Shape(format!(
            "kernel {kernel} does not fit input {input} with padding {padding}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

fn deconv_extent(
    input: usize,
    kernel: usize,
    stride: usize,
    padding: usize,
    output_padding: usize,
) -> Result<usize> {
    if kernel == 0 || stride == 0 || output_padding >= stride {
        return Err(Error::Shape(format!(
            "invalid transposed convolution: kernel {kernel}, stride {stride}, output padding {output_padding}"
        )));
    }
    let full = (input - 1) * stride + kernel + output_padding;
    if full <= 2 * padding {
        return Err(Error::Shape("padding consumes the whole output".into()));
    }
    Ok(full - 2 * padding)
}

impl LayerDesc {
    fn base(kind: LayerKind, in_shape: Vec<usize>, out_shape: Vec<usize>) -> Self {
        Self {
            kind,
            kernel: (1, 1),
            filters: 0,
            stride: 1,
            padding: 0,
            output_padding: 0,
            rate: 0.0,
            bias: false,
            in_shape,
            out_shape,
        }
    }

    pub fn conv(
        in_shape: &[usize],
        kernel: (usize, usize),
        filters: usize,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (h, w, _) = spatial(in_shape)?;
        let oh = conv_extent(h, kernel.0, stride, padding)?;
        let ow = conv_extent(w, kernel.1, stride, padding)?;
        let mut d = Self::base(LayerKind::Conv, in_shape.to_vec(), vec![oh, ow, filters]);
        d.kernel = kernel;
        d.filters = filters;
        d.stride = stride;
        d.padding = padding;
        d.validate()?;
        Ok(d)
    }

    /// Transposed convolution; each spatial extent becomes
    /// `(in − 1)·stride − 2·padding + kernel + output_padding`.
    pub fn deconv(
        in_shape: &[usize],
        kernel: (usize, usize),
        filters: usize,
        stride: usize,
        padding: usize,
        output_padding: usize,
    ) -> Result<Self> {
        let (h, w, _) = spatial(in_shape)?;
        let oh = deconv_extent(h, kernel.0, stride, padding, output_padding)?;
        let ow = deconv_extent(w, kernel.1, stride, padding, output_padding)?;
        let mut d = Self::base(LayerKind::Deconv, in_shape.to_vec(), vec![oh, ow, filters]);
        d.kernel = kernel;
        d.filters = filters;
        d.stride = stride;
        d.padding = padding;
        d.output_padding = output_padding;
        d.validate()?;
        Ok(d)
    }

    pub fn mean_pool(in_shape: &[usize], window: (usize, usize)) -> Result<Self> {
        let (h, w, c) = spatial(in_shape)?;
        if window.0 == 0 || window.1 == 0 || h % window.0 != 0 || w % window.1 != 0 {
            return Err(Error::Shape(format!(
                "pool window {window:?} does not divide {h}x{w}"
            )));
        }
        let mut d = Self::base(
            LayerKind::MeanPool,
            in_shape.to_vec(),
            vec![h / window.0, w / window.1, c],
        );
        d.kernel = window;
        d.stride = window.0;
        Ok(d)
    }

    /// Fully connected layer; the input is flattened and the output takes
    /// `out_shape` (so a dense layer can feed a transposed convolution
    /// directly).
    pub fn dense(in_shape: &[usize], out_shape: &[usize]) -> Result<Self> {
        let d = Self {
            filters: out_shape.iter().product(),
            ..Self::base(LayerKind::Dense, in_shape.to_vec(), out_shape.to_vec())
        };
        d.validate()?;
        Ok(d)
    }

    pub fn elementwise(kind: LayerKind, shape: &[usize]) -> Result<Self> {
        if !matches!(
            kind,
            LayerKind::Relu | LayerKind::Tanh | LayerKind::BatchNorm | LayerKind::Dropout
        ) {
            return Err(Error::Topology(format!("{kind:?} is not an elementwise stage")));
        }
        Ok(Self::base(kind, shape.to_vec(), shape.to_vec()))
    }

    pub fn dropout(shape: &[usize], rate: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Topology(format!("dropout rate {rate} outside [0, 1)")));
        }
        let mut d = Self::base(LayerKind::Dropout, shape.to_vec(), shape.to_vec());
        d.rate = rate;
        Ok(d)
    }

    /// Adds a constant-voltage bias row to a crossbar layer.
    pub fn with_bias(mut self) -> Self {
        self.bias = self.kind.uses_crossbar();
        self
    }

    /// Checks that `out_shape` follows from the kind, kernel and stride.
    pub fn validate(&self) -> Result<()> {
        let expected = match self.kind {
            LayerKind::Conv => {
                let (h, w, _) = spatial(&self.in_shape)?;
                vec![
                    conv_extent(h, self.kernel.0, self.stride, self.padding)?,
                    conv_extent(w, self.kernel.1, self.stride, self.padding)?,
                    self.filters,
                ]
            }
            LayerKind::Deconv => {
                let (h, w, _) = spatial(&self.in_shape)?;
                vec![
                    deconv_extent(h, self.kernel.0, self.stride, self.padding, self.output_padding)?,
                    deconv_extent(w, self.kernel.1, self.stride, self.padding, self.output_padding)?,
                    self.filters,
                ]
            }
            LayerKind::MeanPool => {
                let (h, w, c) = spatial(&self.in_shape)?;
                let (ph, pw) = self.kernel;
                if ph == 0 || pw == 0 || h % ph != 0 || w % pw != 0 {
                    return Err(Error::Shape(format!(
                        "pool window {:?} does not divide {h}x{w}",
                        self.kernel
                    )));
                }
                vec![h / ph, w / pw, c]
            }
            LayerKind::Dense => {
                let n_in: usize = self.in_shape.iter().product();
                let n_out: usize = self.out_shape.iter().product();
                if n_in == 0 || n_out == 0 || self.filters != n_out {
                    return Err(Error::Shape(format!(
                        "dense layer {:?} -> {:?} is empty or inconsistent",
                        self.in_shape, self.out_shape
                    )));
                }
                self.out_shape.clone()
            }
            LayerKind::Dropout if !(0.0..1.0).contains(&self.rate) => {
                return Err(Error::Topology(format!("dropout rate {} outside [0, 1)", self.rate)));
            }
            _ => self.in_shape.clone(),
        };
        if self.bias && !self.kind.uses_crossbar() {
            return Err(Error::Topology(format!("{:?} layer cannot carry a bias row", self.kind)));
        }
        if self.kind.uses_crossbar() && self.filters == 0 {
            return Err(Error::Shape("layer has no filters".into()));
        }
        if expected != self.out_shape {
            return Err(Error::Shape(format!(
                "{:?} layer out_shape {:?} inconsistent with expected {:?}",
                self.kind, self.out_shape, expected
            )));
        }
        Ok(())
    }

    /// `(rows, columns)` of the crossbar holding this layer's weights.
    pub fn crossbar_shape(&self) -> Option<(usize, usize)> {
        let bias = usize::from(self.bias);
        match self.kind {
            LayerKind::Conv | LayerKind::Deconv => {
                let c_in = self.in_shape[2];
                Some((self.kernel.0 * self.kernel.1 * c_in + bias, self.filters))
            }
            LayerKind::Dense => Some((self.in_shape.iter().product::<usize>() + bias, self.filters)),
            _ => None,
        }
    }

    pub fn weight_count(&self) -> usize {
        self.crossbar_shape().map_or(0, |(r, c)| r * c)
    }

    pub fn fan_in(&self) -> usize {
        self.crossbar_shape().map_or(0, |(r, _)| r)
    }
}

/// Voltage on the bias row of a crossbar layer.
pub const BIAS_VOLTS: f64 = 1.0;

const NO_INPUT: u32 = u32::MAX;
const BIAS_INPUT: u32 = u32::MAX - 1;

/// Input element feeding each (output position, crossbar row) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMap {
    positions: usize,
    rows: usize,
    index: Vec<u32>,
}

impl PatchMap {
    pub fn for_layer(desc: &LayerDesc) -> Result<Self> {
        let (rows, _) = desc
            .crossbar_shape()
            .ok_or_else(|| Error::Topology(format!("{:?} has no crossbar", desc.kind)))?;
        let bias = desc.bias.then_some(BIAS_INPUT);
        if desc.kind == LayerKind::Dense {
            let n = (rows - usize::from(desc.bias)) as u32;
            return Ok(Self {
                positions: 1,
                rows,
                index: (0..n).chain(bias).collect(),
            });
        }
        let (h, w, c) = spatial(&desc.in_shape)?;
        let (oh, ow, _) = spatial(&desc.out_shape)?;
        let (kh, kw) = desc.kernel;
        let (s, p) = (desc.stride as isize, desc.padding as isize);
        let mut index = Vec::with_capacity(oh * ow * rows);
        for oy in 0..oh as isize {
            for ox in 0..ow as isize {
                for ky in 0..kh as isize {
                    for kx in 0..kw as isize {
                        let src = match desc.kind {
                            LayerKind::Conv => {
                                let (iy, ix) = (oy * s + ky - p, ox * s + kx - p);
                                (iy >= 0 && ix >= 0 && iy < h as isize && ix < w as isize)
                                    .then_some((iy, ix))
                            }
                            _ => {
                                // Transposed: output oy gathers input iy where
                                // oy = iy·s − p + ky.
                                let (ny, nx) = (oy + p - ky, ox + p - kx);
                                (ny >= 0
                                    && nx >= 0
                                    && ny % s == 0
                                    && nx % s == 0
                                    && ny / s < h as isize
                                    && nx / s < w as isize)
                                    .then_some((ny / s, nx / s))
                            }
                        };
                        for ci in 0..c {
                            index.push(match src {
                                Some((iy, ix)) => ((iy as usize * w + ix as usize) * c + ci) as u32,
                                None => NO_INPUT,
                            });
                        }
                    }
                }
                index.extend(bias);
            }
        }
        Ok(Self {
            positions: oh * ow,
            rows,
            index,
        })
    }

    pub fn positions(&self) -> usize {
        self.positions
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Row voltages for output position `p`.
    pub fn gather(&self, x: &[f64], p: usize, patch: &mut [f64]) {
        let idx = &self.index[p * self.rows..(p + 1) * self.rows];
        for (v, &i) in patch.iter_mut().zip(idx) {
            *v = match i {
                NO_INPUT => 0.0,
                BIAS_INPUT => BIAS_VOLTS,
                _ => x[i as usize],
            };
        }
    }

    /// `out[p, j] = Σ_r patch_p[r] · t[r, j]`, positions-major.
    pub fn apply(&self, x: &[f64], t: &[f64], cols: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.positions * cols];
        let mut patch = vec![0.0; self.rows];
        for (p, o) in out.chunks_exact_mut(cols).enumerate() {
            self.gather(x, p, &mut patch);
            accumulate_row_product(&patch, t, o);
        }
        out
    }

    /// Gradients of `apply` with respect to the input and the matrix.
    pub fn backward(
        &self,
        x: &[f64],
        t: &[f64],
        cols: usize,
        grad_out: &[f64],
    ) -> (Vec<f64>, Vec<f64>) {
        let mut grad_x = vec![0.0; x.len()];
        let mut grad_t = vec![0.0; t.len()];
        let mut patch = vec![0.0; self.rows];
        for (p, g) in grad_out.chunks_exact(cols).enumerate() {
            self.gather(x, p, &mut patch);
            let idx = &self.index[p * self.rows..(p + 1) * self.rows];
            for (r, (&v, &i)) in patch.iter().zip(idx).enumerate() {
                let t_row = &t[r * cols..(r + 1) * cols];
                let gt_row = &mut grad_t[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for j in 0..cols {
                    gt_row[j] += v * g[j];
                    acc += t_row[j] * g[j];
                }
                if i < BIAS_INPUT {
                    grad_x[i as usize] += acc;
                }
            }
        }
        (grad_x, grad_t)
    }
}

/// `out[j] += Σ_r v[r] · t[r, j]`.
pub(crate) fn accumulate_row_product(v: &[f64], t: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &vr) in v.iter().enumerate() {
        if vr == 0.0 {
            continue;
        }
        for (o, tv) in out.iter_mut().zip(&t[r * cols..(r + 1) * cols]) {
            *o += vr * tv;
        }
    }
}

fn check_crossbar(desc: &LayerDesc, input: &Tensor, xbar: &CrossbarArray) -> Result<()> {
    desc.validate()?;
    if input.shape() != desc.in_shape.as_slice() {
        return Err(Error::Shape(format!(
            "input shape {:?} does not match layer input {:?}",
            input.shape(),
            desc.in_shape
        )));
    }
    let (rows, cols) = desc.crossbar_shape().expect("crossbar layer");
    if xbar.rows() != rows || xbar.cols() != cols {
        return Err(Error::Shape(format!(
            "crossbar is {}x{}, layer needs {rows}x{cols}",
            xbar.rows(),
            xbar.cols()
        )));
    }
    Ok(())
}

fn crossbar_layer(
    input: &Tensor,
    xbar: &CrossbarArray,
    desc: &LayerDesc,
    mode: ReadoutMode,
    kind: LayerKind,
) -> Result<Tensor> {
    if desc.kind != kind {
        return Err(Error::Topology(format!("expected a {kind:?} layer, got {:?}", desc.kind)));
    }
    check_crossbar(desc, input, xbar)?;
    let map = PatchMap::for_layer(desc)?;
    let t = xbar.transfer_matrix(mode);
    let out = map.apply(input.data(), &t, xbar.cols());
    Ok(Tensor::from_parts(desc.out_shape.clone(), out))
}

/// Convolution: each output pixel is a crossbar read of its flattened
/// receptive field. In ideal mode this is standard cross-correlation.
pub fn conv2d(
    input: &Tensor,
    xbar: &CrossbarArray,
    desc: &LayerDesc,
    mode: ReadoutMode,
) -> Result<Tensor> {
    crossbar_layer(input, xbar, desc, mode, LayerKind::Conv)
}

/// Transposed convolution, computed in gather form so every output pixel is
/// again one crossbar read. In ideal mode it is the adjoint of [`conv2d`]
/// with the kernel's channel axes swapped.
pub fn deconv2d(
    input: &Tensor,
    xbar: &CrossbarArray,
    desc: &LayerDesc,
    mode: ReadoutMode,
) -> Result<Tensor> {
    crossbar_layer(input, xbar, desc, mode, LayerKind::Deconv)
}

/// Dense layer over the flattened input. Columns may be processed one at a
/// time in hardware; that only affects timing.
pub fn dense(input: &Tensor, xbar: &CrossbarArray, mode: ReadoutMode) -> Result<Tensor> {
    if input.len() != xbar.rows() {
        return Err(Error::DimensionMismatch {
            expected: xbar.rows(),
            got: input.len(),
        });
    }
    let out = xbar.read(input.data(), mode)?;
    Ok(Tensor::vector(out))
}

pub fn mean_pool(input: &Tensor, window: (usize, usize)) -> Result<Tensor> {
    let desc = LayerDesc::mean_pool(input.shape(), window)?;
    let (h, w, c) = spatial(input.shape())?;
    let (oh, ow, _) = spatial(&desc.out_shape)?;
    let (ph, pw) = window;
    let x = input.data();
    let scale = 1.0 / (ph * pw) as f64;
    let mut out = vec![0.0; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ci in 0..c {
                let mut acc = 0.0;
                for dy in 0..ph {
                    for dx in 0..pw {
                        acc += x[((oy * ph + dy) * w + ox * pw + dx) * c + ci];
                    }
                }
                out[(oy * ow + ox) * c + ci] = acc * scale;
            }
        }
    }
    debug_assert_eq!(h, oh * ph);
    Ok(Tensor::from_parts(desc.out_shape, out))
}

pub(crate) fn mean_pool_backward(
    grad_out: &[f64],
    in_shape: &[usize],
    window: (usize, usize),
) -> Vec<f64> {
    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let (ph, pw) = window;
    let ow = w / pw;
    let scale = 1.0 / (ph * pw) as f64;
    let mut g = vec![0.0; h * w * c];
    for y in 0..h {
        for x in 0..w {
            for ci in 0..c {
                g[(y * w + x) * c + ci] = grad_out[((y / ph) * ow + x / pw) * c + ci] * scale;
            }
        }
    }
    g
}

/// Analog ReLU: clamps to `[0, v_dd]`.
pub fn relu_clip(x: &Tensor, v_dd: f64) -> Tensor {
    x.map(|v| v.clamp(0.0, v_dd))
}

pub(crate) fn relu_clip_backward(x: &[f64], grad: &[f64], v_dd: f64) -> Vec<f64> {
    x.iter()
        .zip(grad)
        .map(|(&v, &g)| if v > 0.0 && v < v_dd { g } else { 0.0 })
        .collect()
}

/// `v_scale · tanh(x / v_scale)`: unit slope at zero, saturating at
/// `±v_scale`.
pub fn tanh_act(x: &Tensor, v_scale: f64) -> Tensor {
    x.map(|v| v_scale * (v / v_scale).tanh())
}

pub(crate) fn tanh_backward(y: &[f64], grad: &[f64], v_scale: f64) -> Vec<f64> {
    y.iter()
        .zip(grad)
        .map(|(&o, &g)| {
            let t = o / v_scale;
            g * (1.0 - t * t)
        })
        .collect()
}

pub fn batch_norm(x: &Tensor, mean: f64, var: f64, eps: f64) -> Tensor {
    let inv = 1.0 / (var.max(0.0) + eps).sqrt();
    x.map(|v| (v - mean) * inv)
}

/// Population mean and variance of a tensor.
pub fn moments(x: &[f64]) -> (f64, f64) {
    let n = x.len().max(1) as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Gradient through normalization with statistics taken from the input
/// itself; `y` is the normalized output.
pub(crate) fn batch_norm_backward(y: &[f64], grad: &[f64], var: f64, eps: f64) -> Vec<f64> {
    let n = y.len().max(1) as f64;
    let inv = 1.0 / (var + eps).sqrt();
    let g_mean = grad.iter().sum::<f64>() / n;
    let gy_mean = grad.iter().zip(y).map(|(g, v)| g * v).sum::<f64>() / n;
    y.iter()
        .zip(grad)
        .map(|(&v, &g)| inv * (g - g_mean - v * gy_mean))
        .collect()
}

/// Bernoulli(1 − rate) keep-mask for the dropout switches.
pub fn dropout_mask<R: Rng + ?Sized>(shape: &[usize], rate: f64, rng: &mut R) -> Tensor {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { 1.0 })
        .collect();
    Tensor::from_parts(shape.to_vec(), data)
}

pub fn sigmoid(x: f64) -> f64 {
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
    use crate::crossbar::map_weights;
    use crate::device::DeviceSpec;
    use crate::rng;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;

    fn xbar(rows: usize, cols: usize, w: Vec<f64>, w_max: f64) -> CrossbarArray {
        let t = Tensor::new(vec![rows, cols], w).unwrap();
        map_weights(&t, &DeviceSpec::wo2(), false, Some(w_max)).unwrap()
    }

    fn img(h: usize, w: usize, c: usize, data: Vec<f64>) -> Tensor {
        Tensor::new(vec![h, w, c], data).unwrap()
    }

    /// Direct nested-loop cross-correlation with zero padding.
    fn conv_oracle(
        x: &Tensor,
        k: &[f64],
        (kh, kw): (usize, usize),
        f: usize,
        s: usize,
        p: usize,
    ) -> Vec<f64> {
        let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let oh = (h + 2 * p - kh) / s + 1;
        let ow = (w + 2 * p - kw) / s + 1;
        let mut out = vec![0.0; oh * ow * f];
        for oy in 0..oh {
            for ox in 0..ow {
                for fo in 0..f {
                    let mut acc = 0.0;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            let iy = (oy * s + ky) as isize - p as isize;
                            let ix = (ox * s + kx) as isize - p as isize;
                            if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                continue;
                            }
                            for ci in 0..c {
                                let xv = x.data()[((iy as usize) * w + ix as usize) * c + ci];
                                acc += xv * k[((ky * kw + kx) * c + ci) * f + fo];
                            }
                        }
                    }
                    out[(oy * ow + ox) * f + fo] = acc;
                }
            }
        }
        out
    }

    /// Scatter-form transposed convolution.
    fn deconv_oracle(x: &Tensor, k: &[f64], d: &LayerDesc) -> Vec<f64> {
        let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let (oh, ow, f) = (d.out_shape[0], d.out_shape[1], d.out_shape[2]);
        let (kh, kw) = d.kernel;
        let mut out = vec![0.0; oh * ow * f];
        for iy in 0..h {
            for ix in 0..w {
                for ky in 0..kh {
                    for kx in 0..kw {
                        let oy = (iy * d.stride + ky) as isize - d.padding as isize;
                        let ox = (ix * d.stride + kx) as isize - d.padding as isize;
                        if oy < 0 || ox < 0 || oy >= oh as isize || ox >= ow as isize {
                            continue;
                        }
                        for ci in 0..c {
                            for fo in 0..f {
                                out[((oy as usize) * ow + ox as usize) * f + fo] += x.data()
                                    [(iy * w + ix) * c + ci]
                                    * k[((ky * kw + kx) * c + ci) * f + fo];
                            }
                        }
                    }
                }
            }
        }
        out
    }

    #[test]
    fn conv_all_ones() {
        let d = LayerDesc::conv(&[3, 3, 1], (3, 3), 1, 1, 0).unwrap();
        let x = xbar(9, 1, vec![2.0; 9], 2.0);
        let out = conv2d(&Tensor::filled(vec![3, 3, 1], 1.0), &x, &d, ReadoutMode::Ideal).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert!((out.data()[0] - 18.0).abs() < 1e-12);
    }

    #[test]
    fn conv_identity_kernel_crops() {
        let d = LayerDesc::conv(&[5, 5, 1], (3, 3), 1, 1, 0).unwrap();
        let mut k = vec![0.0; 9];
        k[4] = 1.0;
        let x = xbar(9, 1, k, 1.0);
        let input = img(5, 5, 1, (0..25).map(f64::from).collect());
        let out = conv2d(&input, &x, &d, ReadoutMode::Ideal).unwrap();
        let expect: Vec<f64> = (1..4)
            .flat_map(|y| (1..4).map(move |x| f64::from(y * 5 + x)))
            .collect();
        for (a, b) in out.data().iter().zip(&expect) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn conv_matches_oracle_on_random_shapes() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        for _ in 0..40 {
            let (h, w) = (r.random_range(3..=8), r.random_range(3..=8));
            let c = r.random_range(1..=3);
            let f = r.random_range(1..=3);
            let k = (r.random_range(1..=3.min(h)), r.random_range(1..=3.min(w)));
            let s = r.random_range(1..=2);
            let p = r.random_range(0..=1);
            let d = LayerDesc::conv(&[h, w, c], k, f, s, p).unwrap();
            let kern: Vec<f64> = (0..k.0 * k.1 * c * f).map(|_| r.random_range(-1.0..1.0)).collect();
            let x = img(h, w, c, (0..h * w * c).map(|_| r.random_range(-1.0..1.0)).collect());
            let xb = xbar(k.0 * k.1 * c, f, kern.clone(), 1.0);
            let out = conv2d(&x, &xb, &d, ReadoutMode::Ideal).unwrap();
            let oracle = conv_oracle(&x, &kern, k, f, s, p);
            for (a, b) in out.data().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn deconv_single_pixel_expands_kernel() {
        let d = LayerDesc::deconv(&[1, 1, 1], (3, 3), 1, 1, 0, 0).unwrap();
        let k: Vec<f64> = (1..=9).map(|v| f64::from(v) / 10.0).collect();
        let x = xbar(9, 1, k.clone(), 1.0);
        let out = deconv2d(&img(1, 1, 1, vec![0.5]), &x, &d, ReadoutMode::Ideal).unwrap();
        assert_eq!(out.shape(), &[3, 3, 1]);
        for (a, b) in out.data().iter().zip(&k) {
            assert!((a - 0.5 * b).abs() < 1e-12);
        }
    }

    #[test]
    fn deconv_stride_two_shape() {
        let d = LayerDesc::deconv(&[2, 2, 1], (3, 3), 1, 2, 0, 0).unwrap();
        assert_eq!(d.out_shape, vec![5, 5, 1]);
        let d = LayerDesc::deconv(&[7, 7, 2], (3, 3), 2, 2, 1, 1).unwrap();
        assert_eq!(d.out_shape, vec![14, 14, 2]);
    }

    #[test]
    fn deconv_matches_scatter_oracle() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..40 {
            let (h, w) = (r.random_range(1..=5), r.random_range(1..=5));
            let c = r.random_range(1..=3);
            let f = r.random_range(1..=3);
            let k = (r.random_range(1..=4), r.random_range(1..=4));
            let s = r.random_range(1..=3);
            let p = r.random_range(0..=1);
            let op = r.random_range(0..s);
            let Ok(d) = LayerDesc::deconv(&[h, w, c], k, f, s, p, op) else { continue };
            let kern: Vec<f64> = (0..k.0 * k.1 * c * f).map(|_| r.random_range(-1.0..1.0)).collect();
            let x = img(h, w, c, (0..h * w * c).map(|_| r.random_range(-1.0..1.0)).collect());
            let xb = xbar(k.0 * k.1 * c, f, kern.clone(), 1.0);
            let out = deconv2d(&x, &xb, &d, ReadoutMode::Ideal).unwrap();
            let oracle = deconv_oracle(&x, &kern, &d);
            for (a, b) in out.data().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn conv_rejects_wrong_crossbar() {
        let d = LayerDesc::conv(&[4, 4, 1], (3, 3), 2, 1, 0).unwrap();
        let x = xbar(9, 1, vec![1.0; 9], 1.0);
        assert!(conv2d(&Tensor::zeros(vec![4, 4, 1]), &x, &d, ReadoutMode::Ideal).is_err());
        let x = xbar(9, 2, vec![1.0; 18], 1.0);
        assert!(conv2d(&Tensor::zeros(vec![5, 4, 1]), &x, &d, ReadoutMode::Ideal).is_err());
    }

    #[test]
    fn mean_pool_examples() {
        let x = img(2, 2, 1, vec![1.0, 3.0, 5.0, 7.0]);
        assert_eq!(mean_pool(&x, (2, 2)).unwrap().data(), &[4.0]);
        let c = Tensor::filled(vec![4, 4, 2], 0.3);
        assert!(mean_pool(&c, (2, 2)).unwrap().data().iter().all(|&v| (v - 0.3).abs() < 1e-15));
        assert_eq!(mean_pool(&x, (1, 1)).unwrap(), x);
        assert!(mean_pool(&Tensor::zeros(vec![3, 4, 1]), (2, 2)).is_err());
    }

    #[test]
    fn relu_clip_examples() {
        let x = Tensor::vector(vec![-0.5, 0.7, 2.4]);
        assert_eq!(relu_clip(&x, 1.8).data(), &[0.0, 0.7, 1.8]);
    }

    #[test]
    fn tanh_examples() {
        assert_eq!(tanh_act(&Tensor::vector(vec![0.0]), 0.9).data(), &[0.0]);
        let big = tanh_act(&Tensor::vector(vec![1e3]), 0.9).data()[0];
        assert!((big - 0.9).abs() < 1e-12);
        let h = 1e-6;
        let f = |x: f64| tanh_act(&Tensor::vector(vec![x]), 0.9).data()[0];
        let slope = (f(h) - f(-h)) / (2.0 * h);
        assert!((slope - 1.0).abs() < 1e-8);
    }

    #[test]
    fn batch_norm_examples() {
        let x = Tensor::vector(vec![0.4, 0.4]);
        assert!(batch_norm(&x, 0.4, 0.0, 1e-5).data().iter().all(|&v| v == 0.0));
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..4096).map(|_| r.random_range(-3.0..5.0)).collect();
        let t = Tensor::vector(v);
        let (m, var) = moments(t.data());
        let y = batch_norm(&t, m, var, 1e-12);
        assert_eq!(y.shape(), t.shape());
        let (ym, yv) = moments(y.data());
        assert!(ym.abs() < 1e-12 && (yv - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dropout_examples() {
        let mut r = rng::substream(0, rng::DROPOUT, 0);
        assert!(dropout_mask(&[100], 0.0, &mut r).data().iter().all(|&v| v == 1.0));
        let m = dropout_mask(&[10_000], 0.5, &mut r);
        assert!((m.mean() - 0.5).abs() < 0.02);
        let a = dropout_mask(&[64], 0.3, &mut rng::substream(4, rng::DROPOUT, 2));
        let b = dropout_mask(&[64], 0.3, &mut rng::substream(4, rng::DROPOUT, 2));
        assert_eq!(a, b);
    }

    #[test]
    fn dense_examples() {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let w: Vec<f64> = (0..64).map(|_| r.random_range(-1.0..1.0)).collect();
        let x = xbar(16, 4, w.clone(), 1.0);
        let v: Vec<f64> = (0..16).map(|_| r.random_range(-1.0..1.0)).collect();
        let out = dense(&Tensor::vector(v.clone()), &x, ReadoutMode::Ideal).unwrap();
        for j in 0..4 {
            let o: f64 = (0..16).map(|i| w[i * 4 + j] * v[i]).sum();
            assert!((out.data()[j] - o).abs() <= 1e-9);
        }
        let z = dense(&Tensor::zeros(vec![16]), &x, ReadoutMode::Ideal).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        let mut hot = vec![0.0; 16];
        hot[5] = 1.0;
        let sel = dense(&Tensor::vector(hot), &x, ReadoutMode::Ideal).unwrap();
        for j in 0..4 {
            assert!((sel.data()[j] - w[5 * 4 + j]).abs() < 1e-12);
        }
        assert!(dense(&Tensor::zeros(vec![15]), &x, ReadoutMode::Ideal).is_err());
    }

    proptest! {
        #[test]
        fn loaded_conv_bounded(
            seed in any::<u64>(),
            h in 3usize..8,
            w in 3usize..8,
        ) {
            let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let d = LayerDesc::conv(&[h, w, 2], (3, 3), 3, 1, 1).unwrap();
            let kern: Vec<f64> = (0..54).map(|_| r.random_range(-1.0..1.0)).collect();
            let xb = xbar(18, 3, kern, 1.0);
            let x = img(h, w, 2, (0..h * w * 2).map(|_| r.random_range(-2.0..2.0)).collect());
            let out = conv2d(&x, &xb, &d, ReadoutMode::Loaded).unwrap();
            prop_assert!(out.max_abs() <= x.max_abs());
        }

        #[test]
        fn mean_pool_preserves_mean(
            data in proptest::collection::vec(-5.0f64..5.0, 32),
        ) {
            let x = img(4, 4, 2, data);
            let y = mean_pool(&x, (2, 2)).unwrap();
            prop_assert!((x.mean() - y.mean()).abs() < 1e-12);
        }
    }
}
