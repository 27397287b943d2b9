//! Network construction: architecture specs, parameter bundles, checkpoint
//! serialization, and the feature-combination assembly for the classifier.

mod clsnet;
mod features;
mod segnet;

pub use clsnet::{build_clsnet, clsnet_forward, clsnet_predict, ClsnetOutputs, ClsnetSpec};
pub use features::{assemble_features, FeatureMode, SegFeatureBank, SegFeatures};
pub use segnet::{build_segnet, segnet_forward, segnet_infer, SegnetInference, SegnetOutputs, SegnetSpec};

use std::io::{self, Read, Write};
use std::path::Path;

use rand::Rng;

use crate::scalar::Scalar;
use crate::tape::{NodeId, Tape};
use crate::tensor::{read_tnsr, write_tnsr_f32, Result, Tensor, TensorError, TnsrData};

/// One weight layer of a network layout, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Layer {
    Conv { name: String, cin: usize, cout: usize, k: usize },
    Dense { name: String, din: usize, dout: usize },
}

impl Layer {
    /// `(weight shape, bias shape)` of this layer.
    pub fn param_shapes(&self) -> (Vec<usize>, Vec<usize>) {
        match self {
            Layer::Conv { cin, cout, k, .. } => (vec![*cout, *cin, *k, *k], vec![*cout]),
            Layer::Dense { din, dout, .. } => (vec![*dout, *din], vec![*dout]),
        }
    }

    pub fn name(&self) -> &str {
        match self {
            Layer::Conv { name, .. } | Layer::Dense { name, .. } => name,
        }
    }

    fn fan_in(&self) -> usize {
        match self {
            Layer::Conv { cin, k, .. } => cin * k * k,
            Layer::Dense { din, .. } => *din,
        }
    }
}

/// Architecture descriptor for either network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NetworkSpec {
    Segnet(SegnetSpec),
    Clsnet(ClsnetSpec),
}

impl NetworkSpec {
    pub fn layers(&self) -> Vec<Layer> {
        match self {
            NetworkSpec::Segnet(s) => s.layers(),
            NetworkSpec::Clsnet(s) => s.layers(),
        }
    }

    /// Number of weight layers (convolutions plus dense layers).
    pub fn weight_layer_count(&self) -> usize {
        self.layers().len()
    }

    /// Total trainable scalar count, a pure function of the spec.
    pub fn param_count(&self) -> usize {
        self.layers()
            .iter()
            .map(|l| {
                let (w, b) = l.param_shapes();
                w.iter().product::<usize>() + b.iter().product::<usize>()
            })
            .sum()
    }

    fn descriptor(&self, seed: u64) -> String {
        let mut s = String::new();
        match self {
            NetworkSpec::Segnet(sp) => {
                s.push_str("arch=segnet\n");
                s.push_str(&format!("n={}\n", sp.n));
                s.push_str(&format!("N={}\n", sp.num_labels));
                s.push_str(&format!("levels={}\n", sp.levels));
                s.push_str(&format!("in_channels={}\n", sp.in_channels));
                s.push_str(&format!("input_size={}\n", sp.input_size));
            }
            NetworkSpec::Clsnet(sp) => {
                s.push_str("arch=clsnet\n");
                let widths: Vec<String> = sp.conv_widths.iter().map(|w| w.to_string()).collect();
                s.push_str(&format!("widths={}\n", widths.join(",")));
                let dense: Vec<String> = sp.dense_widths.iter().map(|w| w.to_string()).collect();
                s.push_str(&format!("dense={}\n", dense.join(",")));
                s.push_str(&format!("in_channels={}\n", sp.in_channels));
                s.push_str(&format!("input_size={}\n", sp.input_size));
            }
        }
        s.push_str("init=uniform_fanin\n");
        s.push_str(&format!("seed={seed}\n"));
        s
    }

    fn from_descriptor(text: &str) -> Result<(NetworkSpec, u64)> {
        let mut kv = std::collections::HashMap::new();
        for line in text.lines() {
            if let Some((k, v)) = line.split_once('=') {
                kv.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
        let get = |k: &str| -> Result<String> {
            kv.get(k)
                .cloned()
                .ok_or_else(|| TensorError::Format(format!("checkpoint descriptor missing key {k}")))
        };
        let parse_usize = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| TensorError::Format(format!("checkpoint descriptor: bad value for {k}")))
        };
        let seed: u64 = get("seed")?
            .parse()
            .map_err(|_| TensorError::Format("checkpoint descriptor: bad seed".into()))?;
        let spec = match get("arch")?.as_str() {
            "segnet" => NetworkSpec::Segnet(SegnetSpec {
                n: parse_usize("n")?,
                num_labels: parse_usize("N")?,
                levels: parse_usize("levels")?,
                in_channels: parse_usize("in_channels")?,
                input_size: parse_usize("input_size")?,
            }),
            "clsnet" => {
                let list = |k: &str| -> Result<Vec<usize>> {
                    get(k)?
                        .split(',')
                        .map(|v| v.trim().parse().map_err(|_| TensorError::Format(format!("bad {k} entry"))))
                        .collect()
                };
                let widths = list("widths")?;
                let dense = list("dense")?;
                if widths.len() != 5 || dense.len() != 3 {
                    return Err(TensorError::Format("clsnet descriptor needs 5 widths and 3 dense sizes".into()));
                }
                NetworkSpec::Clsnet(ClsnetSpec {
                    in_channels: parse_usize("in_channels")?,
                    conv_widths: [widths[0], widths[1], widths[2], widths[3], widths[4]],
                    dense_widths: [dense[0], dense[1], dense[2]],
                    input_size: parse_usize("input_size")?,
                })
            }
            other => return Err(TensorError::Format(format!("unknown arch {other}"))),
        };
        Ok((spec, seed))
    }
}

/// Named parameter tensors in canonical layout order (`<layer>.w`,
/// `<layer>.b` per layer).
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams<T> {
    entries: Vec<(String, Tensor<T>)>,
}

impl<T: Scalar> NetworkParams<T> {
    /// Fan-in-scaled uniform init (`bound = sqrt(6 / fan_in)`) for weights,
    /// zero biases. Draws in f64 then casts, so f32 and f64 instantiations
    /// of one seed describe the same network.
    pub fn init(spec: &NetworkSpec, seed: u64) -> Self {
        let mut rng = crate::rng::rng_from(seed, "net-init", &[]);
        let mut entries = Vec::new();
        for layer in spec.layers() {
            let (wshape, bshape) = layer.param_shapes();
            let bound = (6.0 / layer.fan_in() as f64).sqrt();
            let w = Tensor::from_fn(&wshape, |_| T::from_f64_lossy(rng.gen_range(-bound..bound)));
            entries.push((format!("{}.w", layer.name()), w));
            entries.push((format!("{}.b", layer.name()), Tensor::zeros(&bshape)));
        }
        NetworkParams { entries }
    }

    pub fn entries(&self) -> &[(String, Tensor<T>)] {
        &self.entries
    }

    pub(crate) fn entries_mut(&mut self) -> &mut [(String, Tensor<T>)] {
        &mut self.entries
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Tensor<T>> {
        self.entries.iter_mut().map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Register every parameter on a tape, preserving order.
    pub fn bind(&self, tape: &mut Tape<T>) -> Vec<NodeId> {
        self.entries.iter().map(|(_, t)| tape.param(t.clone())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> NetworkParams<U> {
        NetworkParams {
            entries: self.entries.iter().map(|(n, t)| (n.clone(), t.cast())).collect(),
        }
    }

    pub fn from_entries(entries: Vec<(String, Tensor<T>)>) -> Self {
        NetworkParams { entries }
    }
}

/// Walks bound parameter node ids in layout order during a forward pass.
pub(crate) struct ParamCursor<'a> {
    ids: &'a [NodeId],
    pos: usize,
}

impl<'a> ParamCursor<'a> {
    pub fn new(ids: &'a [NodeId]) -> Self {
        ParamCursor { ids, pos: 0 }
    }

    pub fn next_pair(&mut self) -> (NodeId, NodeId) {
        let w = self.ids[self.pos];
        let b = self.ids[self.pos + 1];
        self.pos += 2;
        (w, b)
    }

    pub fn finish(self) {
        assert_eq!(self.pos, self.ids.len(), "forward consumed {} of {} params", self.pos, self.ids.len());
    }
}

/// Serializable bundle: architecture descriptor plus trained parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub spec: NetworkSpec,
    pub init_seed: u64,
    pub params: NetworkParams<f32>,
}

impl Checkpoint {
    pub fn fresh(spec: NetworkSpec, seed: u64) -> Self {
        let params = NetworkParams::init(&spec, seed);
        Checkpoint { spec, init_seed: seed, params }
    }
}

const CKPT_MAGIC: &[u8; 4] = b"CKPT";
const CKPT_VERSION: u8 = 0x01;

pub fn write_checkpoint<W: Write>(w: &mut W, ckpt: &Checkpoint) -> Result<()> {
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&[CKPT_VERSION])?;
    let desc = ckpt.spec.descriptor(ckpt.init_seed);
    w.write_all(&(desc.len() as u32).to_le_bytes())?;
    w.write_all(desc.as_bytes())?;
    w.write_all(&(ckpt.params.len() as u32).to_le_bytes())?;
    for (name, tensor) in ckpt.params.entries() {
        w.write_all(&(name.len() as u32).to_le_bytes())?;
        w.write_all(name.as_bytes())?;
        write_tnsr_f32(w, tensor)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Checkpoint> {
    let mut head = [0u8; 5];
    r.read_exact(&mut head)?;
    if &head[0..4] != CKPT_MAGIC {
        return Err(TensorError::Format("bad magic, expected CKPT".into()));
    }
    if head[4] != CKPT_VERSION {
        return Err(TensorError::Format(format!("unsupported checkpoint version {}", head[4])));
    }
    let mut len4 = [0u8; 4];
    r.read_exact(&mut len4)?;
    let mut desc = vec![0u8; u32::from_le_bytes(len4) as usize];
    r.read_exact(&mut desc)?;
    let desc = String::from_utf8(desc).map_err(|_| TensorError::Format("descriptor is not UTF-8".into()))?;
    let (spec, init_seed) = NetworkSpec::from_descriptor(&desc)?;
    r.read_exact(&mut len4)?;
    let count = u32::from_le_bytes(len4) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        r.read_exact(&mut len4)?;
        let mut name = vec![0u8; u32::from_le_bytes(len4) as usize];
        r.read_exact(&mut name)?;
        let name = String::from_utf8(name).map_err(|_| TensorError::Format("param name is not UTF-8".into()))?;
        match read_tnsr(r)? {
            TnsrData::F32(t) => entries.push((name, t)),
            TnsrData::U8 { .. } => {
                return Err(TensorError::Format("checkpoint tensors must be f32".into()));
            }
        }
    }
    // Validate the payload against the declared layout.
    let expected: Vec<(String, Vec<usize>)> = spec
        .layers()
        .iter()
        .flat_map(|l| {
            let (wp, bp) = l.param_shapes();
            [(format!("{}.w", l.name()), wp), (format!("{}.b", l.name()), bp)]
        })
        .collect();
    if expected.len() != entries.len() {
        return Err(TensorError::Format(format!(
            "checkpoint has {} params, layout needs {}",
            entries.len(),
            expected.len()
        )));
    }
    for ((name, tensor), (ename, eshape)) in entries.iter().zip(&expected) {
        if name != ename || tensor.shape() != eshape.as_slice() {
            return Err(TensorError::Format(format!(
                "checkpoint param {name} {:?} does not match layout {ename} {:?}",
                tensor.shape(),
                eshape
            )));
        }
    }
    Ok(Checkpoint {
        spec,
        init_seed,
        params: NetworkParams::from_entries(entries),
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let mut f = io::BufWriter::new(std::fs::File::create(path)?);
    write_checkpoint(&mut f, ckpt)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let mut f = io::BufReader::new(std::fs::File::open(path)?);
    read_checkpoint(&mut f)
}
