use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::adam::{Adam, AdamConfig, Moments};
use crate::error::{Error, Result};
use crate::model::{build, ModelConfig, Network};
use crate::nn::{DType, Real, Tensor};

/// First eight bytes of every checkpoint file.
pub const CHECKPOINT_MAGIC: &[u8; 8] = b"DQSELDCK";
const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Role {
    Param,
    AdamM,
    AdamV,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    role: Role,
    shape: Vec<usize>,
    /// Byte offset into the payload.
    offset: usize,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OptimizerHeader {
    config: AdamConfig,
    step: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    version: u32,
    dtype: DType,
    config: Value,
    epoch: usize,
    best_score: Option<f64>,
    optimizer: Option<OptimizerHeader>,
    tensors: Vec<TensorEntry>,
    metadata: Value,
}

fn field(field: impl Into<String>, detail: impl Into<String>) -> Error {
    Error::Checkpoint {
        field: field.into(),
        detail: detail.into(),
    }
}

/// First differing path between two JSON values, with both sides.
fn first_difference(path: &str, a: &Value, b: &Value) -> Option<(String, String)> {
    match (a, b) {
        (Value::Object(x), Value::Object(y)) => {
            for (k, va) in x {
                let p = format!("{path}.{k}");
                match y.get(k) {
                    Some(vb) => {
                        if let Some(d) = first_difference(&p, va, vb) {
                            return Some(d);
                        }
                    }
                    None => return Some((p, format!("{va} vs missing"))),
                }
            }
            y.keys()
                .find(|k| !x.contains_key(*k))
                .map(|k| (format!("{path}.{k}"), format!("missing vs {}", y[k])))
        }
        _ if a == b => None,
        _ => Some((path.to_string(), format!("{a} vs {b}"))),
    }
}

/// Model configuration, every named parameter and buffer, optional
/// optimizer state, and training progress.
#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub config: ModelConfig,
    pub params: Vec<(String, Tensor<T>)>,
    pub optimizer: Option<Adam<T>>,
    pub epoch: usize,
    pub best_score: Option<f64>,
    /// Free-form run description stored alongside the weights.
    pub metadata: Value,
}

impl<T: Real> Checkpoint<T> {
    pub fn from_network(net: &Network<T>) -> Self {
        Self {
            config: net.config().clone(),
            params: net
                .params()
                .into_iter()
                .map(|(n, p)| (n, p.value.clone()))
                .collect(),
            optimizer: None,
            epoch: 0,
            best_score: None,
            metadata: Value::Null,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut payload = Vec::new();
        let mut tensors = Vec::new();
        let mut push = |name: &str, role: Role, t: &Tensor<T>| {
            tensors.push(TensorEntry {
                name: name.to_string(),
                role,
                shape: t.shape().to_vec(),
                offset: payload.len(),
                len: t.len(),
            });
            for &v in t.data() {
                v.write_le(&mut payload);
            }
        };
        for (n, t) in &self.params {
            push(n, Role::Param, t);
        }
        if let Some(opt) = &self.optimizer {
            for m in &opt.moments {
                push(&m.name, Role::AdamM, &m.m);
                push(&m.name, Role::AdamV, &m.v);
            }
        }
        let header = Header {
            version: FORMAT_VERSION,
            dtype: T::DTYPE,
            config: serde_json::to_value(&self.config)?,
            epoch: self.epoch,
            best_score: self.best_score,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerHeader {
                config: o.config,
                step: o.step,
            }),
            tensors,
            metadata: self.metadata.clone(),
        };
        let json = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(16 + json.len() + payload.len());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&payload);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(field("magic", "not a checkpoint file"));
        }
        let hlen = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        if bytes.len() - 16 < hlen {
            return Err(field(
                "header_length",
                format!("{hlen} bytes exceeds file size"),
            ));
        }
        let header: Header = serde_json::from_slice(&bytes[16..16 + hlen])
            .map_err(|e| field("header", e.to_string()))?;
        if header.version != FORMAT_VERSION {
            return Err(field(
                "version",
                format!("{} vs supported {FORMAT_VERSION}", header.version),
            ));
        }
        if header.dtype != T::DTYPE {
            return Err(field(
                "dtype",
                format!("file holds {:?}, requested {:?}", header.dtype, T::DTYPE),
            ));
        }
        let config: ModelConfig =
            serde_json::from_value(header.config).map_err(|e| field("config", e.to_string()))?;
        let payload = &bytes[16 + hlen..];
        let size = T::DTYPE.size();
        let mut params = Vec::new();
        let mut moments: Vec<Moments<T>> = Vec::new();
        for (i, e) in header.tensors.iter().enumerate() {
            let at = format!("tensors[{i}]({})", e.name);
            if e.shape.iter().product::<usize>() != e.len {
                return Err(field(
                    format!("{at}.shape"),
                    format!("{:?} does not hold {} values", e.shape, e.len),
                ));
            }
            let end = e.offset + e.len * size;
            if end > payload.len() {
                return Err(field(
                    format!("{at}.offset"),
                    "runs past the end of the payload",
                ));
            }
            let data = payload[e.offset..end]
                .chunks_exact(size)
                .map(T::read_le)
                .collect();
            let t = Tensor::from_vec(&e.shape, data)?;
            match e.role {
                Role::Param => params.push((e.name.clone(), t)),
                Role::AdamM => moments.push(Moments {
                    name: e.name.clone(),
                    m: t,
                    v: Tensor::zeros(&e.shape),
                }),
                Role::AdamV => match moments.last_mut() {
                    Some(m) if m.name == e.name && m.m.shape() == e.shape.as_slice() => m.v = t,
                    _ => {
                        return Err(field(
                            format!("{at}.role"),
                            "second moment without matching first moment",
                        ))
                    }
                },
            }
        }
        let optimizer = header.optimizer.map(|o| Adam {
            config: o.config,
            step: o.step,
            moments,
        });
        Ok(Self {
            config,
            params,
            optimizer,
            epoch: header.epoch,
            best_score: header.best_score,
            metadata: header.metadata,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }

    /// Copies the stored values into `net`, which must have been built from
    /// the same configuration.
    pub fn apply(&self, net: &mut Network<T>) -> Result<()> {
        let want = serde_json::to_value(net.config())?;
        let have = serde_json::to_value(&self.config)?;
        if let Some((path, detail)) = first_difference("config", &have, &want) {
            return Err(field(path, format!("checkpoint vs network: {detail}")));
        }
        let mut targets = net.params_mut();
        if targets.len() != self.params.len() {
            return Err(field(
                "tensors",
                format!(
                    "{} stored tensors, network has {}",
                    self.params.len(),
                    targets.len()
                ),
            ));
        }
        for ((name, p), (stored, t)) in targets.iter_mut().zip(&self.params) {
            if name != stored {
                return Err(field(
                    format!("tensors.{stored}"),
                    format!("network expects `{name}` here"),
                ));
            }
            if p.value.shape() != t.shape() {
                return Err(field(
                    format!("tensors.{stored}.shape"),
                    format!("{:?} vs network {:?}", t.shape(), p.value.shape()),
                ));
            }
        }
        for ((_, p), (_, t)) in targets.iter_mut().zip(&self.params) {
            p.value = t.clone();
        }
        Ok(())
    }

    /// Builds a network from the stored configuration and loads the values.
    pub fn network(&self) -> Result<Network<T>> {
        let mut net = build(&self.config, 0)?;
        self.apply(&mut net)?;
        Ok(net)
    }
}
