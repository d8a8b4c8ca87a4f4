//! The five layer kinds of the autoencoder: dense, 3x3 convolution, 2x2
//! average pooling, 2x2 nearest-neighbour upsampling and leaky ReLU.
//!
//! Image tensors are `[N, C, H, W]`. Dense layers treat everything after the
//! batch extent as one flattened feature vector. Conv weights are
//! `[Cout, Cin, 3, 3]`, dense weights `[Din, Dout]`.

use rand::Rng;

use super::{gemm, Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerKind {
    Dense,
    Conv3x3,
    AvgPool2x2,
    UpsampleNn2x,
    LeakyRelu { negative_slope: f64 },
}

impl LayerKind {
    pub fn has_params(&self) -> bool {
        matches!(self, LayerKind::Dense | LayerKind::Conv3x3)
    }
}

/// Standard deviation of the zero-mean Gaussian weight initialization for a
/// layer followed by a leaky rectifier with the given slope.
pub fn he_init_std(negative_slope: f64, fan_in: usize) -> Result<f64> {
    if fan_in == 0 {
        return Err(Error::invalid("fan_in must be at least 1"));
    }
    if negative_slope < 0.0 || !negative_slope.is_finite() {
        return Err(Error::invalid("negative_slope must be finite and >= 0"));
    }
    Ok((2.0 / ((1.0 + negative_slope * negative_slope) * fan_in as f64)).sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams<T = f32> {
    pub kind: LayerKind,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
    pub fan_in: usize,
}

/// Gradients of one layer's parameters; empty tensors for parameter-free kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrads<T = f32> {
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> ParamGrads<T> {
    pub fn empty() -> Self {
        Self {
            weights: Tensor::empty(),
            bias: Tensor::empty(),
        }
    }

    pub fn zeros_like(layer: &LayerParams<T>) -> Self {
        Self {
            weights: Tensor::zeros(layer.weights.shape().to_vec()),
            bias: Tensor::zeros(layer.bias.shape().to_vec()),
        }
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.weights.add_assign(&other.weights)?;
        self.bias.add_assign(&other.bias)
    }
}

impl<T: Real> LayerParams<T> {
    /// Dense layer with He-initialized weights and zero bias. `init_slope`
    /// is the rectifier slope used in the init formula.
    pub fn dense<R: Rng + ?Sized>(
        din: usize,
        dout: usize,
        init_slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if din == 0 || dout == 0 {
            return Err(Error::invalid("dense extents must be positive"));
        }
        let std = he_init_std(init_slope, din)?;
        Ok(Self {
            kind: LayerKind::Dense,
            weights: Tensor::randn(vec![din, dout], std, rng),
            bias: Tensor::zeros(vec![dout]),
            fan_in: din,
        })
    }

    pub fn conv3x3<R: Rng + ?Sized>(
        cin: usize,
        cout: usize,
        init_slope: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if cin == 0 || cout == 0 {
            return Err(Error::invalid("conv channel counts must be positive"));
        }
        let fan_in = cin * 9;
        let std = he_init_std(init_slope, fan_in)?;
        Ok(Self {
            kind: LayerKind::Conv3x3,
            weights: Tensor::randn(vec![cout, cin, 3, 3], std, rng),
            bias: Tensor::zeros(vec![cout]),
            fan_in,
        })
    }

    fn parameter_free(kind: LayerKind) -> Self {
        Self {
            kind,
            weights: Tensor::empty(),
            bias: Tensor::empty(),
            fan_in: 1,
        }
    }

    pub fn avgpool2x2() -> Self {
        Self::parameter_free(LayerKind::AvgPool2x2)
    }

    pub fn upsample_nn2x() -> Self {
        Self::parameter_free(LayerKind::UpsampleNn2x)
    }

    pub fn leaky_relu(negative_slope: f64) -> Self {
        Self::parameter_free(LayerKind::LeakyRelu { negative_slope })
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        match self.kind {
            LayerKind::Dense => dense_forward(x, self),
            LayerKind::Conv3x3 => conv3x3_forward(x, self),
            LayerKind::AvgPool2x2 => avgpool2x2_forward(x),
            LayerKind::UpsampleNn2x => upsample_nn2x_forward(x),
            LayerKind::LeakyRelu { negative_slope } => {
                Ok(leaky_relu_forward(x, T::from_f64_lossy(negative_slope)))
            }
        }
    }

    /// Gradient of the layer given the input of the matching forward call.
    /// Parameter gradients are skipped (returned empty) when
    /// `want_param_grads` is false.
    pub fn backward(
        &self,
        input: &Tensor<T>,
        upstream: &Tensor<T>,
        want_param_grads: bool,
    ) -> Result<(Tensor<T>, ParamGrads<T>)> {
        match self.kind {
            LayerKind::Dense => dense_backward(input, upstream, self, want_param_grads),
            LayerKind::Conv3x3 => conv3x3_backward(input, upstream, self, want_param_grads),
            LayerKind::AvgPool2x2 => Ok((avgpool2x2_backward(input, upstream)?, ParamGrads::empty())),
            LayerKind::UpsampleNn2x => {
                Ok((upsample_nn2x_backward(input, upstream)?, ParamGrads::empty()))
            }
            LayerKind::LeakyRelu { negative_slope } => Ok((
                leaky_relu_backward(input, upstream, T::from_f64_lossy(negative_slope))?,
                ParamGrads::empty(),
            )),
        }
    }
}

fn dense_dims<T: Real>(x: &Tensor<T>, layer: &LayerParams<T>) -> Result<(usize, usize, usize)> {
    let w = layer.weights.shape();
    if w.len() != 2 {
        return Err(Error::shape("dense weights must be rank 2"));
    }
    let (din, dout) = (w[0], w[1]);
    if x.shape().len() < 2 || x.item_len() != din {
        return Err(Error::shape(format!(
            "dense layer expects {din} input features, got shape {:?}",
            x.shape()
        )));
    }
    Ok((x.batch(), din, dout))
}

/// `y = x W + b`, with `x` flattened to `[N, Din]`.
pub fn dense_forward<T: Real>(x: &Tensor<T>, layer: &LayerParams<T>) -> Result<Tensor<T>> {
    let (n, din, dout) = dense_dims(x, layer)?;
    let bias = layer.bias.data();
    let mut y = Vec::with_capacity(n * dout);
    for _ in 0..n {
        y.extend_from_slice(bias);
    }
    gemm(false, false, n, dout, din, x.data(), layer.weights.data(), &mut y, true);
    Tensor::new(vec![n, dout], y)
}

fn dense_backward<T: Real>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    layer: &LayerParams<T>,
    want_param_grads: bool,
) -> Result<(Tensor<T>, ParamGrads<T>)> {
    let (n, din, dout) = dense_dims(x, layer)?;
    if dy.shape() != [n, dout] {
        return Err(Error::shape(format!(
            "dense upstream gradient must be [{n}, {dout}], got {:?}",
            dy.shape()
        )));
    }
    let mut dx = vec![T::zero(); n * din];
    gemm(false, true, n, din, dout, dy.data(), layer.weights.data(), &mut dx, false);
    let grads = if want_param_grads {
        let mut dw = vec![T::zero(); din * dout];
        gemm(true, false, din, dout, n, x.data(), dy.data(), &mut dw, false);
        let mut db = vec![T::zero(); dout];
        for row in dy.data().chunks_exact(dout) {
            for (acc, &g) in db.iter_mut().zip(row) {
                *acc = *acc + g;
            }
        }
        ParamGrads {
            weights: Tensor::new(vec![din, dout], dw)?,
            bias: Tensor::new(vec![dout], db)?,
        }
    } else {
        ParamGrads::empty()
    };
    Ok((Tensor::new(x.shape().to_vec(), dx)?, grads))
}

fn image_dims<T: Real>(x: &Tensor<T>) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(Error::shape(format!(
            "expected an [N, C, H, W] tensor, got {:?}",
            x.shape()
        ))),
    }
}

/// Unfold one `[C, H, W]` image into `[C*9, H*W]` patch columns (zero padding 1).
fn im2col<T: Real>(img: &[T], c: usize, h: usize, w: usize, col: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &img[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &mut col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        row[y * w + x] = if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize
                        {
                            plane[sy as usize * w + sx as usize]
                        } else {
                            T::zero()
                        };
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add patch columns back into an image.
fn col2im<T: Real>(col: &[T], c: usize, h: usize, w: usize, img: &mut [T]) {
    let hw = h * w;
    for ci in 0..c {
        let plane = &mut img[ci * hw..(ci + 1) * hw];
        for ky in 0..3 {
            for kx in 0..3 {
                let row = &col[((ci * 9) + ky * 3 + kx) * hw..][..hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - 1;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for x in 0..w {
                        let sx = x as isize + kx as isize - 1;
                        if sx >= 0 && sx < w as isize {
                            let p = &mut plane[sy as usize * w + sx as usize];
                            *p = *p + row[y * w + x];
                        }
                    }
                }
            }
        }
    }
}

fn conv_dims<T: Real>(
    x: &Tensor<T>,
    layer: &LayerParams<T>,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = image_dims(x)?;
    match *layer.weights.shape() {
        [cout, cin, 3, 3] if cin == c => Ok((n, c, h, w, cout)),
        [_, cin, 3, 3] => Err(Error::shape(format!(
            "conv expects {cin} input channels, got {c}"
        ))),
        ref s => Err(Error::shape(format!("conv weights must be [Cout, Cin, 3, 3], got {s:?}"))),
    }
}

/// Zero-padded, stride-1 3x3 convolution (cross-correlation).
pub fn conv3x3_forward<T: Real>(x: &Tensor<T>, layer: &LayerParams<T>) -> Result<Tensor<T>> {
    let (n, cin, h, w, cout) = conv_dims(x, layer)?;
    let hw = h * w;
    let k = cin * 9;
    let mut col = vec![T::zero(); k * hw];
    let mut y = vec![T::zero(); n * cout * hw];
    let bias = layer.bias.data();
    for (img, out) in x.data().chunks_exact(cin * hw).zip(y.chunks_exact_mut(cout * hw)) {
        im2col(img, cin, h, w, &mut col);
        for (plane, &b) in out.chunks_exact_mut(hw).zip(bias) {
            plane.iter_mut().for_each(|v| *v = b);
        }
        gemm(false, false, cout, hw, k, layer.weights.data(), &col, out, true);
    }
    Tensor::new(vec![n, cout, h, w], y)
}

fn conv3x3_backward<T: Real>(
    x: &Tensor<T>,
    dy: &Tensor<T>,
    layer: &LayerParams<T>,
    want_param_grads: bool,
) -> Result<(Tensor<T>, ParamGrads<T>)> {
    let (n, cin, h, w, cout) = conv_dims(x, layer)?;
    if dy.shape() != [n, cout, h, w] {
        return Err(Error::shape(format!(
            "conv upstream gradient must be [{n}, {cout}, {h}, {w}], got {:?}",
            dy.shape()
        )));
    }
    let hw = h * w;
    let k = cin * 9;
    let mut col = vec![T::zero(); k * hw];
    let mut dcol = vec![T::zero(); k * hw];
    let mut dx = vec![T::zero(); n * cin * hw];
    let mut dw = vec![T::zero(); if want_param_grads { cout * k } else { 0 }];
    let mut db = vec![T::zero(); if want_param_grads { cout } else { 0 }];
    for ((img, g), dimg) in x
        .data()
        .chunks_exact(cin * hw)
        .zip(dy.data().chunks_exact(cout * hw))
        .zip(dx.chunks_exact_mut(cin * hw))
    {
        if want_param_grads {
            im2col(img, cin, h, w, &mut col);
            gemm(false, true, cout, k, hw, g, &col, &mut dw, true);
            for (acc, plane) in db.iter_mut().zip(g.chunks_exact(hw)) {
                *acc = plane.iter().fold(*acc, |s, &v| s + v);
            }
        }
        gemm(true, false, k, hw, cout, layer.weights.data(), g, &mut dcol, false);
        col2im(&dcol, cin, h, w, dimg);
    }
    let grads = if want_param_grads {
        ParamGrads {
            weights: Tensor::new(vec![cout, cin, 3, 3], dw)?,
            bias: Tensor::new(vec![cout], db)?,
        }
    } else {
        ParamGrads::empty()
    };
    Ok((Tensor::new(x.shape().to_vec(), dx)?, grads))
}

/// Mean over non-overlapping 2x2 windows.
pub fn avgpool2x2_forward<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = image_dims(x)?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("avgpool needs even extents, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let quarter = T::from_f64_lossy(0.25);
    let mut y = Vec::with_capacity(n * c * oh * ow);
    for plane in x.data().chunks_exact(h * w) {
        for oy in 0..oh {
            let r0 = &plane[2 * oy * w..][..w];
            let r1 = &plane[(2 * oy + 1) * w..][..w];
            for ox in 0..ow {
                let s = r0[2 * ox] + r0[2 * ox + 1] + r1[2 * ox] + r1[2 * ox + 1];
                y.push(s * quarter);
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], y)
}

fn avgpool2x2_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = image_dims(x)?;
    let (oh, ow) = (h / 2, w / 2);
    if dy.shape() != [n, c, oh, ow] {
        return Err(Error::shape("avgpool upstream gradient has the wrong shape"));
    }
    let quarter = T::from_f64_lossy(0.25);
    let mut dx = vec![T::zero(); x.len()];
    for (plane, g) in dx.chunks_exact_mut(h * w).zip(dy.data().chunks_exact(oh * ow)) {
        for y in 0..h {
            for xx in 0..w {
                plane[y * w + xx] = g[(y / 2) * ow + xx / 2] * quarter;
            }
        }
    }
    Tensor::new(x.shape().to_vec(), dx)
}

/// Replicate each pixel into a 2x2 block.
pub fn upsample_nn2x_forward<T: Real>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = image_dims(x)?;
    let (oh, ow) = (2 * h, 2 * w);
    let mut y = vec![T::zero(); n * c * oh * ow];
    for (src, dst) in x.data().chunks_exact(h * w).zip(y.chunks_exact_mut(oh * ow)) {
        for oy in 0..oh {
            for ox in 0..ow {
                dst[oy * ow + ox] = src[(oy / 2) * w + ox / 2];
            }
        }
    }
    Tensor::new(vec![n, c, oh, ow], y)
}

fn upsample_nn2x_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = image_dims(x)?;
    let (oh, ow) = (2 * h, 2 * w);
    if dy.shape() != [n, c, oh, ow] {
        return Err(Error::shape("upsample upstream gradient has the wrong shape"));
    }
    let mut dx = vec![T::zero(); x.len()];
    for (dst, g) in dx.chunks_exact_mut(h * w).zip(dy.data().chunks_exact(oh * ow)) {
        for y in 0..h {
            for xx in 0..w {
                let r0 = &g[2 * y * ow..][..ow];
                let r1 = &g[(2 * y + 1) * ow..][..ow];
                dst[y * w + xx] = r0[2 * xx] + r0[2 * xx + 1] + r1[2 * xx] + r1[2 * xx + 1];
            }
        }
    }
    Tensor::new(x.shape().to_vec(), dx)
}

pub fn leaky_relu_forward<T: Real>(x: &Tensor<T>, negative_slope: T) -> Tensor<T> {
    x.map(|v| if v >= T::zero() { v } else { negative_slope * v })
}

fn leaky_relu_backward<T: Real>(x: &Tensor<T>, dy: &Tensor<T>, negative_slope: T) -> Result<Tensor<T>> {
    x.zip_map(dy, |v, g| if v >= T::zero() { g } else { negative_slope * g })
}
