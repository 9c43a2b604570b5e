//! Checkpoint byte layout, little-endian throughout:
//!
//! ```text
//! "KMF1"                      magic
//! u32 version                 currently 1
//! u32 dim, u32 layers, u32 classes
//! u32 n, n bytes              config snapshot (TOML, UTF-8)
//! classes × (u32 n, n bytes)  class ids in model order
//! u8 mode                     1 or 2
//! 3 × (u32 n, n × u32)        train, val and unseen class indices
//! layers × (dim·dim f64, f64) filter row-major, then gate logit
//! classes·dim f64             CSD matrix row-major
//! ```

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::gnn::{GnnLayer, GnnParams};
use crate::numerics::Tensor;
use crate::pipeline::config::{SplitMode, TrainConfig};
use crate::pipeline::split::ClassSplit;
use crate::{KmfError, Result};

pub const MAGIC: &[u8; 4] = b"KMF1";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: GnnParams,
    /// `|C| × d`.
    pub csds: Tensor,
    pub classes: Vec<String>,
    pub split: ClassSplit,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end =
            end.ok_or_else(|| KmfError::Checkpoint(format!("truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec())
            .map_err(|_| KmfError::Checkpoint("string is not UTF-8".into()))
    }

    fn indices(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.u32().map(|i| i as usize)).collect()
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend((s.len() as u32).to_le_bytes());
    out.extend(s.as_bytes());
}

fn put_indices(out: &mut Vec<u8>, idx: &[usize]) {
    out.extend((idx.len() as u32).to_le_bytes());
    for &i in idx {
        out.extend((i as u32).to_le_bytes());
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let dim = self.params.dim;
        let mut out = Vec::new();
        out.extend(MAGIC);
        out.extend(VERSION.to_le_bytes());
        for n in [dim, self.params.num_layers(), self.classes.len()] {
            out.extend((n as u32).to_le_bytes());
        }
        put_str(&mut out, &self.config.to_toml_string());
        for c in &self.classes {
            put_str(&mut out, c);
        }
        out.push(match self.split.mode {
            SplitMode::I => 1,
            SplitMode::II => 2,
        });
        for idx in [&self.split.train, &self.split.val, &self.split.unseen] {
            put_indices(&mut out, idx);
        }
        for layer in &self.params.layers {
            for x in layer.weight.data() {
                out.extend(x.to_le_bytes());
            }
            out.extend(layer.gate_logit.to_le_bytes());
        }
        for x in self.csds.data() {
            out.extend(x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(KmfError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(KmfError::Checkpoint(format!(
                "unsupported version {version}"
            )));
        }
        let dim = r.u32()? as usize;
        let layers = r.u32()? as usize;
        let num_classes = r.u32()? as usize;
        let config = TrainConfig::from_toml_str(&r.string()?)?;
        let classes = (0..num_classes)
            .map(|_| r.string())
            .collect::<Result<Vec<_>>>()?;
        let mode = match r.u8()? {
            1 => SplitMode::I,
            2 => SplitMode::II,
            m => return Err(KmfError::Checkpoint(format!("unknown split mode {m}"))),
        };
        let split = ClassSplit {
            mode,
            train: r.indices()?,
            val: r.indices()?,
            unseen: r.indices()?,
        };
        if split
            .train
            .iter()
            .chain(&split.val)
            .chain(&split.unseen)
            .any(|&c| c >= num_classes)
        {
            return Err(KmfError::Checkpoint(
                "split references a class outside the class list".into(),
            ));
        }
        let params = GnnParams {
            dim,
            layers: (0..layers)
                .map(|_| {
                    Ok(GnnLayer {
                        weight: Tensor::matrix(dim, dim, r.f64s(dim * dim)?)?,
                        gate_logit: r.f64()?,
                    })
                })
                .collect::<Result<_>>()?,
        };
        let csds = Tensor::matrix(num_classes, dim, r.f64s(num_classes * dim)?)?;
        if r.pos != bytes.len() {
            return Err(KmfError::Checkpoint(format!(
                "{} trailing bytes",
                bytes.len() - r.pos
            )));
        }
        Ok(Self {
            config,
            params,
            csds,
            classes,
            split,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| KmfError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path).map_err(|e| KmfError::io(path, e))?)
    }

    /// Hex SHA-256 of the serialized bytes.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes()))
    }
}
