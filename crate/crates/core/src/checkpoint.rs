//! Binary checkpoint files.
//!
//! Layout: ASCII `MCDC`, a little-endian u16 format version, a u32 record
//! count, then records. Each record is a u32 name length, the UTF-8 name, a
//! u8 dtype code, a u32 rank, rank u32 extents and the row-major
//! little-endian payload. All integers are little-endian.
//!
//! The first record is `__spec__` with dtype code 0: its payload is the
//! architecture as `key=value` lines. Parameters follow as
//! `<net>.<node>.weight` and `<net>.<node>.bias`. Optimizer state, when
//! saved, adds `opt.<net>.<node>.<weight|bias>.{m,v,hyper}` where `hyper`
//! holds step count, lr, beta1, beta2 and epsilon as f64.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{build_model, ArchitectureSpec, ModelParams};
use crate::nn::{LayerParams, NetworkAdam, Node, Real, Sequential, Tensor};
use crate::rng::SeededRng;
use crate::train::Trainer;

pub const MAGIC: &[u8; 4] = b"MCDC";
pub const FORMAT_VERSION: u16 = 1;
pub const SPEC_RECORD: &str = "__spec__";
const META_DTYPE: u8 = 0;

const NETS: [&str; 3] = ["encoder", "decoder", "discriminator"];

/// One decoded record. Payload bytes are kept raw until the dtype is known.
#[derive(Debug, Clone, PartialEq)]
struct Record {
    name: String,
    dtype: u8,
    shape: Vec<usize>,
    payload: Vec<u8>,
}

fn push_record(out: &mut Vec<u8>, name: &str, dtype: u8, shape: &[usize], payload: &[u8]) {
    out.extend_from_slice(&(name.len() as u32).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(dtype);
    out.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(payload);
}

fn push_tensor<T: Real>(out: &mut Vec<u8>, count: &mut u32, name: &str, t: &Tensor<T>) {
    let mut payload = Vec::with_capacity(t.len() * T::BYTES);
    for &v in t.data() {
        v.write_le(&mut payload);
    }
    push_record(out, name, T::DTYPE_CODE, t.shape(), &payload);
    *count += 1;
}

fn nets<T>(model: &ModelParams<T>) -> [&Sequential<T>; 3] {
    [&model.encoder, &model.decoder, &model.discriminator]
}

fn nets_mut<T>(model: &mut ModelParams<T>) -> [&mut Sequential<T>; 3] {
    [&mut model.encoder, &mut model.decoder, &mut model.discriminator]
}

fn spec_text(spec: &ArchitectureSpec) -> String {
    spec.to_kv()
        .into_iter()
        .map(|(k, v)| format!("{k}={v}\n"))
        .collect()
}

/// Serialize a model and, optionally, the optimizer state of its trainer.
pub fn encode_checkpoint<T: Real>(model: &ModelParams<T>, optimizers: Option<[&NetworkAdam<T>; 3]>) -> Vec<u8> {
    let mut body = Vec::new();
    let mut count = 0u32;
    let spec = spec_text(&model.spec);
    push_record(&mut body, SPEC_RECORD, META_DTYPE, &[spec.len()], spec.as_bytes());
    count += 1;
    for (net_name, net) in NETS.iter().zip(nets(model)) {
        for (node, layer) in layer_nodes(net) {
            push_tensor(&mut body, &mut count, &format!("{net_name}.{node}.weight"), &layer.weights);
            push_tensor(&mut body, &mut count, &format!("{net_name}.{node}.bias"), &layer.bias);
        }
    }
    if let Some(opts) = optimizers {
        for (net_name, opt) in NETS.iter().zip(opts) {
            for (node, state) in opt.states.iter().enumerate() {
                let Some((w, b)) = state else { continue };
                for (part, s) in [("weight", w), ("bias", b)] {
                    let base = format!("opt.{net_name}.{node}.{part}");
                    push_tensor(&mut body, &mut count, &format!("{base}.m"), &s.first_moment);
                    push_tensor(&mut body, &mut count, &format!("{base}.v"), &s.second_moment);
                    let hyper = Tensor::<f64>::new(
                        vec![5],
                        vec![s.step_count as f64, s.lr, s.beta1, s.beta2, s.epsilon],
                    )
                    .expect("five values");
                    push_tensor(&mut body, &mut count, &format!("{base}.hyper"), &hyper);
                }
            }
        }
    }
    let mut out = Vec::with_capacity(10 + body.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&body);
    out
}

fn layer_nodes<T>(net: &Sequential<T>) -> impl Iterator<Item = (usize, &LayerParams<T>)> {
    net.nodes.iter().enumerate().filter_map(|(i, n)| match n {
        Node::Layer(l) if l.kind.has_params() => Some((i, l)),
        _ => None,
    })
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.pos, format!("truncated checkpoint: need {n} more bytes")));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn dtype_bytes(code: u8, offset: usize) -> Result<usize> {
    match code {
        META_DTYPE => Ok(1),
        1 => Ok(4),
        2 => Ok(8),
        _ => Err(Error::format(offset, format!("unknown dtype code {code}"))),
    }
}

fn parse_records(bytes: &[u8]) -> Result<Vec<Record>> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(Error::format(0, "not a checkpoint (bad magic)"));
    }
    let vb = r.take(2)?;
    let version = u16::from_le_bytes([vb[0], vb[1]]);
    if version != FORMAT_VERSION {
        return Err(Error::format(4, format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()?;
    let mut records = Vec::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name_at = r.pos;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| Error::format(name_at, "record name is not UTF-8"))?
            .to_owned();
        let dtype_at = r.pos;
        let dtype = r.take(1)?[0];
        let width = dtype_bytes(dtype, dtype_at)?;
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n: usize = shape.iter().product();
        let payload = r.take(n * width)?.to_vec();
        records.push(Record {
            name,
            dtype,
            shape,
            payload,
        });
    }
    if r.pos != bytes.len() {
        return Err(Error::format(r.pos, "trailing bytes after last record"));
    }
    Ok(records)
}

fn find<'r>(records: &'r [Record], name: &str) -> Result<&'r Record> {
    records
        .iter()
        .find(|r| r.name == name)
        .ok_or_else(|| Error::Consistency(format!("checkpoint lacks record `{name}`")))
}

fn read_tensor<T: Real>(records: &[Record], name: &str, want_shape: &[usize]) -> Result<Tensor<T>> {
    let rec = find(records, name)?;
    if rec.dtype != T::DTYPE_CODE {
        return Err(Error::Consistency(format!(
            "record `{name}` has dtype {}, expected {}",
            rec.dtype,
            T::DTYPE_CODE
        )));
    }
    if rec.shape != want_shape {
        return Err(Error::Consistency(format!(
            "record `{name}` has shape {:?}, expected {want_shape:?}",
            rec.shape
        )));
    }
    let data = rec.payload.chunks_exact(T::BYTES).map(T::read_le).collect();
    Tensor::new(rec.shape.clone(), data)
}

fn read_f64s(records: &[Record], name: &str, n: usize) -> Result<Vec<f64>> {
    Ok(read_tensor::<f64>(records, name, &[n])?.into_data())
}

/// Parse the architecture stored in a checkpoint without loading tensors.
pub fn checkpoint_spec(bytes: &[u8]) -> Result<ArchitectureSpec> {
    let records = parse_records(bytes)?;
    spec_from_records(&records)
}

fn spec_from_records(records: &[Record]) -> Result<ArchitectureSpec> {
    let first = records
        .first()
        .filter(|r| r.name == SPEC_RECORD && r.dtype == META_DTYPE)
        .ok_or_else(|| Error::Consistency("checkpoint does not start with the spec record".into()))?;
    let text = std::str::from_utf8(&first.payload)
        .map_err(|_| Error::Consistency("spec record is not UTF-8".into()))?;
    let pairs: Vec<(String, String)> = text
        .lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.to_owned(), v.to_owned()))
        .collect();
    ArchitectureSpec::from_kv(&pairs)
}

/// A decoded model with optional encoder, decoder and critic optimizer state.
pub type Decoded<T> = (ModelParams<T>, Option<[NetworkAdam<T>; 3]>);

/// Decode a model and, when present, its optimizer state.
pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<Decoded<T>> {
    let records = parse_records(bytes)?;
    let spec = spec_from_records(&records)?;
    // Only the structure matters here; every tensor is overwritten.
    let mut model: ModelParams<T> = build_model(&spec, &mut SeededRng::new(0))?;
    for (net_name, net) in NETS.iter().zip(nets_mut(&mut model)) {
        for (node, n) in net.nodes.iter_mut().enumerate() {
            let Node::Layer(layer) = n else { continue };
            if !layer.kind.has_params() {
                continue;
            }
            let w = format!("{net_name}.{node}.weight");
            let b = format!("{net_name}.{node}.bias");
            layer.weights = read_tensor(&records, &w, layer.weights.shape())?;
            layer.bias = read_tensor(&records, &b, layer.bias.shape())?;
        }
    }
    let has_opt = records.iter().any(|r| r.name.starts_with("opt."));
    let optimizers = if has_opt {
        let mut opts = Vec::with_capacity(3);
        for (net_name, net) in NETS.iter().zip(nets(&model)) {
            let mut opt = NetworkAdam::new(net, 0.0);
            for (node, state) in opt.states.iter_mut().enumerate() {
                let Some((w, b)) = state else { continue };
                for (part, s) in [("weight", w), ("bias", b)] {
                    let base = format!("opt.{net_name}.{node}.{part}");
                    let shape = s.first_moment.shape().to_vec();
                    s.first_moment = read_tensor(&records, &format!("{base}.m"), &shape)?;
                    s.second_moment = read_tensor(&records, &format!("{base}.v"), &shape)?;
                    let h = read_f64s(&records, &format!("{base}.hyper"), 5)?;
                    s.step_count = h[0] as u64;
                    s.lr = h[1];
                    s.beta1 = h[2];
                    s.beta2 = h[3];
                    s.epsilon = h[4];
                }
            }
            opts.push(opt);
        }
        let [e, d, c]: [NetworkAdam<T>; 3] = match opts.try_into() {
            Ok(a) => a,
            Err(_) => unreachable!("one optimizer per network"),
        };
        Some([e, d, c])
    } else {
        None
    };
    Ok((model, optimizers))
}

pub fn save_model<T: Real>(path: &Path, model: &ModelParams<T>) -> Result<()> {
    fs::write(path, encode_checkpoint(model, None))?;
    Ok(())
}

pub fn save_trainer<T: Real>(path: &Path, trainer: &Trainer<T>) -> Result<()> {
    let opts = [&trainer.encoder_opt, &trainer.decoder_opt, &trainer.discriminator_opt];
    fs::write(path, encode_checkpoint(&trainer.model, Some(opts)))?;
    Ok(())
}

pub fn load_model<T: Real>(path: &Path) -> Result<ModelParams<T>> {
    Ok(decode_checkpoint(&fs::read(path)?)?.0)
}

/// Restore a trainer; a checkpoint without optimizer state gets fresh
/// optimizers at `lr`.
pub fn load_trainer<T: Real>(path: &Path, lr: f64) -> Result<Trainer<T>> {
    let (model, opts) = decode_checkpoint(&fs::read(path)?)?;
    Ok(match opts {
        Some([encoder_opt, decoder_opt, discriminator_opt]) => Trainer {
            model,
            encoder_opt,
            decoder_opt,
            discriminator_opt,
        },
        None => Trainer::new(model, lr),
    })
}
