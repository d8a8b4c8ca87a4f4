//! Datasets: MNIST IDX files, bilinear resizing, class subsets and
//! synthetic Gaussian blobs.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::{Real, Tensor};
use crate::rng::SeededRng;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_UBYTE: u8 = 0x08;

/// Images `[N, C, H, W]` in [0, 1] with dense labels in `0..class_count`.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset<T: Real = f32> {
    pub images: Tensor<T>,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl<T: Real> LabeledDataset<T> {
    pub fn new(images: Tensor<T>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if images.shape().len() != 4 {
            return Err(Error::shape(format!(
                "dataset images must be [N, C, H, W], got {:?}",
                images.shape()
            )));
        }
        if images.shape()[0] != labels.len() {
            return Err(Error::Consistency(format!(
                "{} images but {} labels",
                images.shape()[0],
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::invalid(format!(
                "label {bad} outside 0..{class_count}"
            )));
        }
        Ok(Self {
            images,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// `[C, H, W]` of one image.
    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn class_sizes(&self) -> Vec<usize> {
        let mut n = vec![0; self.class_count];
        for &l in &self.labels {
            n[l] += 1;
        }
        n
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            images: self.images.select(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }

    pub fn cast<U: Real>(&self) -> LabeledDataset<U> {
        LabeledDataset {
            images: self.images.cast(),
            labels: self.labels.clone(),
            class_count: self.class_count,
        }
    }
}

/// Unsigned-byte IDX array: header dimensions plus raw payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<u32>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        (u32::from(IDX_UBYTE) << 8) | self.dims.len() as u32
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 4 {
            return Err(Error::format(bytes.len(), "file shorter than the IDX magic"));
        }
        if bytes[0] != 0 || bytes[1] != 0 {
            return Err(Error::format(0, "IDX magic must start with two zero bytes"));
        }
        if bytes[2] != IDX_UBYTE {
            return Err(Error::format(
                2,
                format!("unsupported IDX element type 0x{:02x}", bytes[2]),
            ));
        }
        let rank = bytes[3] as usize;
        let header = 4 + 4 * rank;
        if bytes.len() < header {
            return Err(Error::format(bytes.len(), "truncated IDX header"));
        }
        let dims: Vec<u32> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        let payload = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d as usize))
            .ok_or_else(|| Error::format(4, "IDX dimensions overflow"))?;
        let have = bytes.len() - header;
        if have < payload {
            return Err(Error::format(
                bytes.len(),
                format!("truncated IDX payload: {have} of {payload} bytes"),
            ));
        }
        if have > payload {
            return Err(Error::format(
                header + payload,
                format!("{} trailing bytes after IDX payload", have - payload),
            ));
        }
        Ok(Self {
            dims,
            data: bytes[header..].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for d in &self.dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&fs::read(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes())?;
        Ok(())
    }
}

fn expect_magic(arr: &IdxArray, want: u32, what: &str) -> Result<()> {
    if arr.magic() != want {
        return Err(Error::format(
            0,
            format!("{what} file has magic 0x{:08x}, expected 0x{want:08x}", arr.magic()),
        ));
    }
    Ok(())
}

/// Build a dataset from parsed image and label arrays.
pub fn dataset_from_idx(images: &IdxArray, labels: &IdxArray) -> Result<LabeledDataset<f32>> {
    expect_magic(images, IDX_IMAGES_MAGIC, "image")?;
    expect_magic(labels, IDX_LABELS_MAGIC, "label")?;
    let (n, h, w) = (
        images.dims[0] as usize,
        images.dims[1] as usize,
        images.dims[2] as usize,
    );
    if labels.dims[0] as usize != n {
        return Err(Error::Consistency(format!(
            "{n} images but {} labels",
            labels.dims[0]
        )));
    }
    let pixels = images.data.iter().map(|&b| f32::from(b) / 255.0).collect();
    let labels: Vec<usize> = labels.data.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(Tensor::new(vec![n, 1, h, w], pixels)?, labels, class_count)
}

pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset<f32>> {
    dataset_from_idx(&IdxArray::read(images_path)?, &IdxArray::read(labels_path)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::invalid(format!("unknown split `{s}` (train, test)"))),
        }
    }
}

/// `<root>/mnist/<split>-images` and `<root>/mnist/<split>-labels`.
pub fn mnist_paths(root: &Path, split: Split) -> (PathBuf, PathBuf) {
    let dir = root.join("mnist");
    (
        dir.join(format!("{split}-images")),
        dir.join(format!("{split}-labels")),
    )
}

pub fn load_mnist(root: &Path, split: Split) -> Result<LabeledDataset<f32>> {
    let (images, labels) = mnist_paths(root, split);
    load_idx(&images, &labels)
}

/// Bilinear resampling of a `[C, H, W]` image with half-pixel centers.
pub fn bilinear_resize<T: Real>(img: &Tensor<T>, out_h: usize, out_w: usize) -> Result<Tensor<T>> {
    let &[c, h, w] = img.shape() else {
        return Err(Error::shape(format!("expected [C, H, W], got {:?}", img.shape())));
    };
    if out_h == 0 || out_w == 0 {
        return Err(Error::invalid("output extent must be positive"));
    }
    if h == 0 || w == 0 {
        return Err(Error::invalid("input extent must be positive"));
    }
    // Source coordinate, lower tap, upper tap and upper weight per output index.
    let taps = |n_in: usize, n_out: usize| -> Vec<(usize, usize, f64)> {
        let scale = n_in as f64 / n_out as f64;
        (0..n_out)
            .map(|o| {
                let s = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (n_in - 1) as f64);
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(n_in - 1);
                (lo, hi, s - lo as f64)
            })
            .collect()
    };
    let ty = taps(h, out_h);
    let tx = taps(w, out_w);
    let src = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ty {
            for &(x0, x1, fx) in &tx {
                let v = |y: usize, x: usize| plane[y * w + x].as_f64();
                let top = v(y0, x0) * (1.0 - fx) + v(y0, x1) * fx;
                let bot = v(y1, x0) * (1.0 - fx) + v(y1, x1) * fx;
                out.push(T::from_f64_lossy(top * (1.0 - fy) + bot * fy));
            }
        }
    }
    Tensor::new(vec![c, out_h, out_w], out)
}

/// Resize every image of a dataset.
pub fn resize_dataset<T: Real>(ds: &LabeledDataset<T>, out_h: usize, out_w: usize) -> Result<LabeledDataset<T>> {
    let [c, h, w] = ds.image_shape();
    let mut data = Vec::with_capacity(ds.len() * c * out_h * out_w);
    for i in 0..ds.len() {
        let img = Tensor::new(vec![c, h, w], ds.images.item(i).to_vec())?;
        data.extend_from_slice(bilinear_resize(&img, out_h, out_w)?.data());
    }
    LabeledDataset::new(
        Tensor::new(vec![ds.len(), c, out_h, out_w], data)?,
        ds.labels.clone(),
        ds.class_count,
    )
}

/// Keep at most `per_class_cap` seeded-random samples of each listed class,
/// relabeled to list position, in shuffled order.
pub fn subset_by_classes<T: Real>(
    ds: &LabeledDataset<T>,
    classes: &[usize],
    per_class_cap: usize,
    rng: &mut SeededRng,
) -> Result<LabeledDataset<T>> {
    if classes.is_empty() {
        return Err(Error::invalid("class list is empty"));
    }
    let mut picked: Vec<(usize, usize)> = Vec::new();
    for (new_label, &class) in classes.iter().enumerate() {
        if classes[..new_label].contains(&class) {
            return Err(Error::invalid(format!("class {class} listed twice")));
        }
        let mut members: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == class).collect();
        if members.is_empty() {
            return Err(Error::invalid(format!("class {class} not present in dataset")));
        }
        members.shuffle(rng);
        members.truncate(per_class_cap);
        picked.extend(members.into_iter().map(|i| (i, new_label)));
    }
    picked.shuffle(rng);
    let indices: Vec<usize> = picked.iter().map(|&(i, _)| i).collect();
    LabeledDataset::new(
        ds.images.select(&indices),
        picked.iter().map(|&(_, l)| l).collect(),
        classes.len(),
    )
}

/// `k` unit-variance Gaussian clusters in `dim` dimensions, class `c`
/// centred at `c * separation` on the first axis. Values are then mapped
/// affinely into [0, 1] using the global range. Images are `[N, dim, 1, 1]`.
pub fn synthetic_blobs(
    n_per_class: usize,
    k: usize,
    dim: usize,
    separation: f64,
    rng: &mut SeededRng,
) -> Result<LabeledDataset<f32>> {
    if k == 0 || dim == 0 {
        return Err(Error::invalid("synthetic blobs need k >= 1 and dim >= 1"));
    }
    let n = n_per_class * k;
    let mut raw = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for class in 0..k {
        for _ in 0..n_per_class {
            for d in 0..dim {
                let z: f64 = StandardNormal.sample(rng);
                raw.push(if d == 0 { z + class as f64 * separation } else { z });
            }
            labels.push(class);
        }
    }
    let lo = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    let data = raw
        .iter()
        .map(|&v| if span > 0.0 { ((v - lo) / span) as f32 } else { 0.5 })
        .collect();
    LabeledDataset::new(Tensor::new(vec![n, dim, 1, 1], data)?, labels, k)
}
