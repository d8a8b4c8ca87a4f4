//! Encoder, mirrored decoder and critic built from `nn` layers.
//!
//! Two families are supported:
//!
//! - `conv_paper`: `num_blocks` blocks of two 3x3 convolutions (channels
//!   doubled between the two), leaky ReLU after each, 2x2 average pooling
//!   after every block except the last, then a dense head to `latent_dim`.
//! - `mlp_toy`: dense layers through `hidden` widths down to `latent_dim`.
//!
//! The decoder mirrors the encoder with pooling replaced by nearest-neighbour
//! upsampling. The critic has the encoder's layer stack with independent
//! weights; its prediction is the mean of its final feature vector.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{LayerParams, Node, Real, Sequential, Tensor};
use crate::rng::SeededRng;

pub const DEFAULT_NEGATIVE_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    ConvPaper,
    MlpToy,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::ConvPaper => "conv_paper",
            Family::MlpToy => "mlp_toy",
        })
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conv_paper" => Ok(Family::ConvPaper),
            "mlp_toy" => Ok(Family::MlpToy),
            other => Err(Error::Spec(format!("unknown architecture family `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub family: Family,
    /// `[C, H, W]` for `conv_paper`, `[D]` for `mlp_toy`.
    pub input_shape: Vec<usize>,
    pub base_channels: usize,
    pub num_blocks: usize,
    pub latent_dim: usize,
    pub negative_slope: f64,
    /// Hidden widths of the `mlp_toy` encoder, input side first.
    pub hidden: Vec<usize>,
}

impl ArchitectureSpec {
    pub fn conv_paper(input_shape: [usize; 3], base_channels: usize, num_blocks: usize, latent_dim: usize) -> Self {
        Self {
            family: Family::ConvPaper,
            input_shape: input_shape.to_vec(),
            base_channels,
            num_blocks,
            latent_dim,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
            hidden: Vec::new(),
        }
    }

    pub fn mlp_toy(input_dim: usize, hidden: Vec<usize>, latent_dim: usize) -> Self {
        Self {
            family: Family::MlpToy,
            input_shape: vec![input_dim],
            base_channels: 1,
            num_blocks: hidden.len() + 1,
            latent_dim,
            negative_slope: DEFAULT_NEGATIVE_SLOPE,
            hidden,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim == 0 {
            return Err(Error::Spec("latent_dim must be at least 1".into()));
        }
        if !(self.negative_slope >= 0.0 && self.negative_slope.is_finite()) {
            return Err(Error::Spec("negative_slope must be finite and >= 0".into()));
        }
        match self.family {
            Family::ConvPaper => {
                let [c, h, w] = self.input_shape[..] else {
                    return Err(Error::Spec("conv_paper input shape must be [C, H, W]".into()));
                };
                if c == 0 || self.base_channels == 0 || self.num_blocks == 0 {
                    return Err(Error::Spec(
                        "channels, base_channels and num_blocks must be positive".into(),
                    ));
                }
                let div = 1usize << (self.num_blocks - 1);
                if h == 0 || w == 0 || h % div != 0 || w % div != 0 {
                    return Err(Error::Spec(format!(
                        "input {h}x{w} is not divisible by 2^{} for {} blocks",
                        self.num_blocks - 1,
                        self.num_blocks
                    )));
                }
            }
            Family::MlpToy => {
                if self.input_shape.len() != 1 || self.input_shape[0] == 0 {
                    return Err(Error::Spec("mlp_toy input shape must be [D] with D > 0".into()));
                }
                if self.hidden.contains(&0) {
                    return Err(Error::Spec("hidden widths must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Flat `key = value` form used in checkpoint metadata.
    pub fn to_kv(&self) -> Vec<(String, String)> {
        let join = |v: &[usize]| {
            v.iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(",")
        };
        vec![
            ("family".into(), self.family.to_string()),
            ("input_shape".into(), join(&self.input_shape)),
            ("base_channels".into(), self.base_channels.to_string()),
            ("num_blocks".into(), self.num_blocks.to_string()),
            ("latent_dim".into(), self.latent_dim.to_string()),
            ("negative_slope".into(), format!("{}", self.negative_slope)),
            ("hidden".into(), join(&self.hidden)),
        ]
    }

    pub fn from_kv(pairs: &[(String, String)]) -> Result<Self> {
        let get = |k: &str| {
            pairs
                .iter()
                .find(|(key, _)| key == k)
                .map(|(_, v)| v.as_str())
                .ok_or_else(|| Error::Spec(format!("missing spec key `{k}`")))
        };
        let list = |s: &str| -> Result<Vec<usize>> {
            if s.trim().is_empty() {
                return Ok(Vec::new());
            }
            s.split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| Error::Spec(format!("bad integer list `{s}`")))
                })
                .collect()
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| Error::Spec(format!("bad integer for `{k}`")))
        };
        let spec = Self {
            family: get("family")?.parse()?,
            input_shape: list(get("input_shape")?)?,
            base_channels: num("base_channels")?,
            num_blocks: num("num_blocks")?,
            latent_dim: num("latent_dim")?,
            negative_slope: get("negative_slope")?
                .parse()
                .map_err(|_| Error::Spec("bad negative_slope".into()))?,
            hidden: list(get("hidden")?)?,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f32> {
    pub spec: ArchitectureSpec,
    pub encoder: Sequential<T>,
    pub decoder: Sequential<T>,
    pub discriminator: Sequential<T>,
}

fn encoder_stack<T: Real>(spec: &ArchitectureSpec, rng: &mut SeededRng) -> Result<Sequential<T>> {
    let a = spec.negative_slope;
    let mut nodes = Vec::new();
    match spec.family {
        Family::ConvPaper => {
            let (c, h, w) = (spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]);
            let mut cin = c;
            for b in 0..spec.num_blocks {
                let width = spec.base_channels << b;
                nodes.push(Node::Layer(LayerParams::conv3x3(cin, width, a, rng)?));
                nodes.push(Node::Layer(LayerParams::leaky_relu(a)));
                nodes.push(Node::Layer(LayerParams::conv3x3(width, 2 * width, a, rng)?));
                nodes.push(Node::Layer(LayerParams::leaky_relu(a)));
                if b + 1 < spec.num_blocks {
                    nodes.push(Node::Layer(LayerParams::avgpool2x2()));
                }
                cin = 2 * width;
            }
            let shrink = 1 << (spec.num_blocks - 1);
            let flat = cin * (h / shrink) * (w / shrink);
            nodes.push(Node::Layer(LayerParams::dense(flat, spec.latent_dim, a, rng)?));
        }
        Family::MlpToy => {
            let mut din = spec.input_shape[0];
            for &width in &spec.hidden {
                nodes.push(Node::Layer(LayerParams::dense(din, width, a, rng)?));
                nodes.push(Node::Layer(LayerParams::leaky_relu(a)));
                din = width;
            }
            nodes.push(Node::Layer(LayerParams::dense(din, spec.latent_dim, a, rng)?));
        }
    }
    Ok(Sequential::new(nodes))
}

fn decoder_stack<T: Real>(spec: &ArchitectureSpec, rng: &mut SeededRng) -> Result<Sequential<T>> {
    let a = spec.negative_slope;
    let mut nodes = Vec::new();
    match spec.family {
        Family::ConvPaper => {
            let (c, h, w) = (spec.input_shape[0], spec.input_shape[1], spec.input_shape[2]);
            let blocks = spec.num_blocks;
            let shrink = 1 << (blocks - 1);
            let top = spec.base_channels << blocks;
            let (sh, sw) = (h / shrink, w / shrink);
            nodes.push(Node::Layer(LayerParams::dense(spec.latent_dim, top * sh * sw, a, rng)?));
            nodes.push(Node::Layer(LayerParams::leaky_relu(a)));
            nodes.push(Node::Reshape(vec![top, sh, sw]));
            for b in (0..blocks).rev() {
                let width = spec.base_channels << b;
                let out = if b == 0 { c } else { width };
                nodes.push(Node::Layer(LayerParams::conv3x3(2 * width, width, a, rng)?));
                nodes.push(Node::Layer(LayerParams::leaky_relu(a)));
                nodes.push(Node::Layer(LayerParams::conv3x3(width, out, a, rng)?));
                if b > 0 {
                    nodes.push(Node::Layer(LayerParams::leaky_relu(a)));
                    nodes.push(Node::Layer(LayerParams::upsample_nn2x()));
                }
            }
        }
        Family::MlpToy => {
            let mut din = spec.latent_dim;
            for &width in spec.hidden.iter().rev() {
                nodes.push(Node::Layer(LayerParams::dense(din, width, a, rng)?));
                nodes.push(Node::Layer(LayerParams::leaky_relu(a)));
                din = width;
            }
            nodes.push(Node::Layer(LayerParams::dense(din, spec.input_shape[0], a, rng)?));
        }
    }
    Ok(Sequential::new(nodes))
}

/// Build encoder, decoder and critic with Gaussian He-initialized weights
/// and zero biases, drawn in that order from `rng`.
pub fn build_model<T: Real>(spec: &ArchitectureSpec, rng: &mut SeededRng) -> Result<ModelParams<T>> {
    spec.validate()?;
    let encoder = encoder_stack(spec, rng)?;
    let decoder = decoder_stack(spec, rng)?;
    let discriminator = encoder_stack(spec, rng)?;
    Ok(ModelParams {
        spec: spec.clone(),
        encoder,
        decoder,
        discriminator,
    })
}

impl<T: Real> ModelParams<T> {
    /// Reshape a batch whose items hold `input_len` values into the model's
    /// input layout.
    pub fn as_input(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.shape().len() < 2 || x.item_len() != self.spec.input_len() {
            return Err(Error::shape(format!(
                "model expects items of shape {:?}, got {:?}",
                self.spec.input_shape,
                x.shape()
            )));
        }
        let mut shape = vec![x.batch()];
        shape.extend_from_slice(&self.spec.input_shape);
        x.clone().reshape(shape)
    }

    pub fn encode(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.encoder.infer(&self.as_input(x)?)
    }

    pub fn decode(&self, z: &Tensor<T>) -> Result<Tensor<T>> {
        self.check_latent(z)?;
        let y = self.decoder.infer(z)?;
        self.as_input(&y)
    }

    pub fn check_latent(&self, z: &Tensor<T>) -> Result<()> {
        if z.shape().len() != 2 || z.shape()[1] != self.spec.latent_dim {
            return Err(Error::shape(format!(
                "latent batch must be [N, {}], got {:?}",
                self.spec.latent_dim,
                z.shape()
            )));
        }
        Ok(())
    }

    /// Critic prediction per batch item: mean of its final feature vector.
    pub fn discriminate(&self, xhat: &Tensor<T>) -> Result<Tensor<T>> {
        let out = self.discriminator.infer(&self.as_input(xhat)?)?;
        Ok(item_means(&out))
    }
}

/// Mean of each batch item's values, as an `[N]` tensor.
pub fn item_means<T: Real>(t: &Tensor<T>) -> Tensor<T> {
    let w = t.item_len();
    let inv = T::from_f64_lossy(1.0 / w as f64);
    let means = (0..t.batch())
        .map(|i| t.item(i).iter().fold(T::zero(), |s, &v| s + v) * inv)
        .collect();
    Tensor::new(vec![t.batch()], means).expect("one mean per item")
}

/// Adjoint of [`item_means`]: spread per-item gradients evenly over a
/// tensor of `shape`.
pub fn item_means_backward<T: Real>(grad: &[T], shape: &[usize]) -> Tensor<T> {
    let w: usize = shape.iter().skip(1).product();
    let inv = T::from_f64_lossy(1.0 / w as f64);
    let mut data = Vec::with_capacity(grad.len() * w);
    for &g in grad {
        data.extend(std::iter::repeat_n(g * inv, w));
    }
    Tensor::new(shape.to_vec(), data).expect("gradient matches feature shape")
}
