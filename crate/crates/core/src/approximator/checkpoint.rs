use serde::{Deserialize, Serialize};

use super::{GaussianPolicy, MlpLayout, ValueNet};
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
pub const BINARY_MAGIC: &[u8; 8] = b"GEPPOCKP";

const MAX_NDIM: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetKind {
    GaussianPolicy,
    Value,
}

impl NetKind {
    fn tag(self) -> u8 {
        match self {
            NetKind::GaussianPolicy => 1,
            NetKind::Value => 2,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            1 => Ok(NetKind::GaussianPolicy),
            2 => Ok(NetKind::Value),
            t => Err(Error::Decode(format!("unknown network tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Serialized network parameters: alternating weight `(out, in)` and bias
/// `(out)` tensors, plus `log_std` for policies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub kind: NetKind,
    pub layers: Vec<Tensor>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub log_std: Option<Vec<f64>>,
}

fn decode(msg: impl Into<String>) -> Error {
    Error::Decode(msg.into())
}

impl Checkpoint {
    fn from_flat(
        kind: NetKind,
        layout: &MlpLayout,
        flat: &[f64],
        log_std: Option<Vec<f64>>,
    ) -> Self {
        let mut layers = Vec::new();
        let mut at = 0;
        for shape in layout.tensor_shapes() {
            let len: usize = shape.iter().product();
            layers.push(Tensor {
                shape,
                data: flat[at..at + len].to_vec(),
            });
            at += len;
        }
        Self {
            version: CHECKPOINT_VERSION,
            kind,
            layers,
            log_std,
        }
    }

    /// Validates structure and returns the layout and flattened parameters.
    fn to_flat(&self) -> Result<(MlpLayout, Vec<f64>)> {
        if self.version != CHECKPOINT_VERSION {
            return Err(decode(format!(
                "unsupported checkpoint version {}",
                self.version
            )));
        }
        if self.layers.is_empty() || self.layers.len() % 2 != 0 {
            return Err(decode("layers must alternate weight and bias tensors"));
        }
        let mut sizes = Vec::new();
        let mut flat = Vec::new();
        for pair in self.layers.chunks(2) {
            let (w, b) = (&pair[0], &pair[1]);
            let [out, inp] = w.shape[..] else {
                return Err(decode(format!("weight shape {:?} is not 2-D", w.shape)));
            };
            if b.shape != [out] {
                return Err(decode(format!(
                    "bias shape {:?} does not match {out}",
                    b.shape
                )));
            }
            match sizes.last() {
                None => sizes.push(inp),
                Some(&prev) if prev == inp => {}
                Some(&prev) => {
                    return Err(decode(format!(
                        "layer input {inp} does not chain from {prev}"
                    )))
                }
            }
            sizes.push(out);
            for t in [w, b] {
                let expected = t.shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
                if expected != Some(t.data.len()) {
                    return Err(decode(format!(
                        "tensor {:?} holds {} values",
                        t.shape,
                        t.data.len()
                    )));
                }
                flat.extend_from_slice(&t.data);
            }
        }
        let layout = MlpLayout::new(sizes).map_err(|e| decode(e.to_string()))?;
        match (self.kind, &self.log_std) {
            (NetKind::GaussianPolicy, Some(ls)) if ls.len() == layout.output_dim() => {
                flat.extend_from_slice(ls);
            }
            (NetKind::GaussianPolicy, _) => {
                return Err(decode("policy checkpoint needs log_std per action"))
            }
            (NetKind::Value, None) => {}
            (NetKind::Value, Some(_)) => return Err(decode("value checkpoint has log_std")),
        }
        if flat.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("checkpoint parameter".into()));
        }
        Ok((layout, flat))
    }

    pub fn into_policy(self) -> Result<GaussianPolicy> {
        if self.kind != NetKind::GaussianPolicy {
            return Err(decode("checkpoint does not hold a policy"));
        }
        let (layout, flat) = self.to_flat()?;
        GaussianPolicy::from_parts(layout, flat)
    }

    pub fn into_value(self) -> Result<ValueNet> {
        if self.kind != NetKind::Value {
            return Err(decode("checkpoint does not hold a value network"));
        }
        let (layout, flat) = self.to_flat()?;
        ValueNet::from_parts(layout, flat)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        ck.to_flat()?;
        Ok(ck)
    }

    /// `magic, version: u32, kind: u8, count: u32`, then per tensor
    /// `ndim: u32, dims: u32 × ndim, data: f64 × Πdims`, all little-endian.
    /// A policy's `log_std` is the final 1-D tensor.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(BINARY_MAGIC);
        out.extend_from_slice(&self.version.to_le_bytes());
        out.push(self.kind.tag());
        let extra = self.log_std.as_ref().map(|ls| Tensor {
            shape: vec![ls.len()],
            data: ls.clone(),
        });
        let tensors: Vec<&Tensor> = self.layers.iter().chain(extra.as_ref()).collect();
        out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
        for t in tensors {
            out.extend_from_slice(&(t.shape.len() as u32).to_le_bytes());
            for &d in &t.shape {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
            for &x in &t.data {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8)? != BINARY_MAGIC {
            return Err(decode("bad checkpoint magic"));
        }
        let version = r.u32()?;
        let kind = NetKind::from_tag(r.take(1)?[0])?;
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let ndim = r.u32()?;
            if ndim == 0 || ndim > MAX_NDIM {
                return Err(decode(format!("tensor rank {ndim}")));
            }
            let mut shape = Vec::new();
            let mut len = 1usize;
            for _ in 0..ndim {
                let d = r.u32()? as usize;
                len = len
                    .checked_mul(d)
                    .ok_or_else(|| decode("tensor size overflows"))?;
                shape.push(d);
            }
            if len > r.remaining() / 8 {
                return Err(decode("tensor data truncated"));
            }
            let data = (0..len).map(|_| r.f64()).collect::<Result<Vec<f64>>>()?;
            tensors.push(Tensor { shape, data });
        }
        if r.remaining() != 0 {
            return Err(decode(format!("{} trailing bytes", r.remaining())));
        }
        let log_std = match kind {
            NetKind::GaussianPolicy => {
                let t = tensors
                    .pop()
                    .ok_or_else(|| decode("missing log_std tensor"))?;
                if t.shape.len() != 1 {
                    return Err(decode("log_std must be 1-D"));
                }
                Some(t.data)
            }
            NetKind::Value => None,
        };
        let ck = Checkpoint {
            version,
            kind,
            layers: tensors,
            log_std,
        };
        ck.to_flat()?;
        Ok(ck)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(decode("unexpected end of checkpoint"));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }
}

impl GaussianPolicy {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let n = self.layout().num_params();
        Checkpoint::from_flat(
            NetKind::GaussianPolicy,
            self.layout(),
            &self.params()[..n],
            Some(self.log_std().to_vec()),
        )
    }
}

impl ValueNet {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint::from_flat(NetKind::Value, self.layout(), self.params(), None)
    }
}
