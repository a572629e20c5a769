//! Binary checkpoint container.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! offset  size  content
//! 0       8     magic  b"ARMTCKPT"
//! 8       4     u32    container version (currently 1)
//! 12      8     u64    header length H in bytes
//! 20      H     UTF-8 JSON header
//! 20+H    8·N   f64    payload, N little-endian IEEE-754 doubles
//! ```
//!
//! The header carries everything except the numeric arrays: the algorithm,
//! episode count, seed, hyperparameter record, and for every network its
//! [`MlpSpec`], layer layout and optimizer scalars. Each numeric array in the
//! header is a `{"offset": o, "len": n}` reference into the payload, counted in
//! doubles. Storing raw bits makes save → load bit-exact.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::AdamState;
use super::mlp::{LayerLayout, MlpParams, MlpSpec};
use crate::error::{Error, Result};
use crate::hyper::ParamMap;

const MAGIC: &[u8; 8] = b"ARMTCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkRecord {
    pub name: String,
    pub spec: MlpSpec,
    pub params: MlpParams,
    pub adam: Option<AdamState>,
}

/// A free parameter vector, e.g. a state-independent log standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRecord {
    pub name: String,
    pub values: Vec<f64>,
    pub adam: Option<AdamState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub algo: String,
    pub episodes: u64,
    pub seed: u64,
    pub hyperparameters: ParamMap,
    pub networks: Vec<NetworkRecord>,
    pub vectors: Vec<VectorRecord>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct Blob {
    offset: u64,
    len: u64,
}

#[derive(Serialize, Deserialize)]
struct AdamHeader {
    first_moment: Blob,
    second_moment: Blob,
    step_count: u64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

#[derive(Serialize, Deserialize)]
struct NetworkHeader {
    name: String,
    spec: MlpSpec,
    layout: Vec<LayerLayout>,
    params: Blob,
    adam: Option<AdamHeader>,
}

#[derive(Serialize, Deserialize)]
struct VectorHeader {
    name: String,
    values: Blob,
    adam: Option<AdamHeader>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    algo: String,
    episodes: u64,
    seed: u64,
    hyperparameters: ParamMap,
    networks: Vec<NetworkHeader>,
    vectors: Vec<VectorHeader>,
}

struct PayloadWriter(Vec<f64>);

impl PayloadWriter {
    fn push(&mut self, values: &[f64]) -> Blob {
        let blob = Blob {
            offset: self.0.len() as u64,
            len: values.len() as u64,
        };
        self.0.extend_from_slice(values);
        blob
    }

    fn adam(&mut self, state: &AdamState) -> AdamHeader {
        AdamHeader {
            first_moment: self.push(&state.first_moment),
            second_moment: self.push(&state.second_moment),
            step_count: state.step_count,
            beta1: state.beta1,
            beta2: state.beta2,
            epsilon: state.epsilon,
        }
    }
}

fn slice(payload: &[f64], blob: Blob, what: &str) -> Result<Vec<f64>> {
    let start = usize::try_from(blob.offset).map_err(|_| Error::parse(what, "offset overflow"))?;
    let len = usize::try_from(blob.len).map_err(|_| Error::parse(what, "length overflow"))?;
    payload
        .get(start..start.saturating_add(len))
        .map(<[f64]>::to_vec)
        .ok_or_else(|| Error::parse(what, "array reference lies outside the payload"))
}

fn read_adam(payload: &[f64], h: AdamHeader, what: &str) -> Result<AdamState> {
    Ok(AdamState {
        first_moment: slice(payload, h.first_moment, what)?,
        second_moment: slice(payload, h.second_moment, what)?,
        step_count: h.step_count,
        beta1: h.beta1,
        beta2: h.beta2,
        epsilon: h.epsilon,
    })
}

impl Checkpoint {
    pub fn network(&self, name: &str) -> Result<&NetworkRecord> {
        self.networks
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::parse("networks", format!("checkpoint has no network `{name}`")))
    }

    pub fn vector(&self, name: &str) -> Result<&VectorRecord> {
        self.vectors
            .iter()
            .find(|n| n.name == name)
            .ok_or_else(|| Error::parse("vectors", format!("checkpoint has no vector `{name}`")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut payload = PayloadWriter(Vec::new());
        let networks = self
            .networks
            .iter()
            .map(|n| NetworkHeader {
                name: n.name.clone(),
                spec: n.spec.clone(),
                layout: n.params.layout.clone(),
                params: payload.push(&n.params.flat),
                adam: n.adam.as_ref().map(|a| payload.adam(a)),
            })
            .collect();
        let vectors = self
            .vectors
            .iter()
            .map(|v| VectorHeader {
                name: v.name.clone(),
                values: payload.push(&v.values),
                adam: v.adam.as_ref().map(|a| payload.adam(a)),
            })
            .collect();
        let header = Header {
            algo: self.algo.clone(),
            episodes: self.episodes,
            seed: self.seed,
            hyperparameters: self.hyperparameters.clone(),
            networks,
            vectors,
        };
        let header = serde_json::to_vec(&header).expect("checkpoint header serializes");

        let mut out = Vec::with_capacity(20 + header.len() + 8 * payload.0.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        for x in &payload.0 {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(Error::parse("magic", "not an armtune checkpoint"));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != CHECKPOINT_VERSION {
            return Err(Error::parse(
                "version",
                format!("unsupported checkpoint version {version}"),
            ));
        }
        let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap());
        let header_end = usize::try_from(header_len)
            .ok()
            .and_then(|h| h.checked_add(20))
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| Error::parse("header", "header length exceeds file size"))?;
        let header: Header =
            serde_json::from_slice(&bytes[20..header_end]).map_err(|e| Error::parse("header", e.to_string()))?;
        let rest = &bytes[header_end..];
        if !rest.len().is_multiple_of(8) {
            return Err(Error::parse("payload", "payload is not a whole number of doubles"));
        }
        let payload: Vec<f64> = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();

        let networks = header
            .networks
            .into_iter()
            .map(|n| {
                let what = format!("networks.{}", n.name);
                let flat = slice(&payload, n.params, &what)?;
                let expected = n.spec.param_count();
                if flat.len() != expected {
                    return Err(Error::parse(
                        what,
                        format!("expected {expected} parameters, found {}", flat.len()),
                    ));
                }
                Ok(NetworkRecord {
                    adam: n.adam.map(|a| read_adam(&payload, a, &what)).transpose()?,
                    name: n.name,
                    spec: n.spec,
                    params: MlpParams { flat, layout: n.layout },
                })
            })
            .collect::<Result<_>>()?;
        let vectors = header
            .vectors
            .into_iter()
            .map(|v| {
                let what = format!("vectors.{}", v.name);
                Ok(VectorRecord {
                    values: slice(&payload, v.values, &what)?,
                    adam: v.adam.map(|a| read_adam(&payload, a, &what)).transpose()?,
                    name: v.name,
                })
            })
            .collect::<Result<_>>()?;

        Ok(Checkpoint {
            algo: header.algo,
            episodes: header.episodes,
            seed: header.seed,
            hyperparameters: header.hyperparameters,
            networks,
            vectors,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))?;
        f.sync_all().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}
