//! Binary weight files.
//!
//! ```text
//! magic        8 bytes   "PAIRNET\0"
//! version      u32 LE    currently 1
//! layer count  u32 LE
//! per layer:
//!   kind       u8        0 = affine, 1 = recurrent
//!   input      u32 LE
//!   output     u32 LE
//!   params     f64 LE × param_count, in the order documented on NetworkWeights
//! ```
//!
//! Nothing may follow the last layer.

use std::fmt::Write as _;
use std::io::{Read, Write};

use thiserror::Error;

use super::{LayerKind, LayerShape, ModelError, NetworkWeights};

pub const MAGIC: &[u8; 8] = b"PAIRNET\0";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum WeightsError {
    #[error("malformed weight file at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported weight format version {found} (expected {FORMAT_VERSION})")]
    Version { found: u32 },
    #[error("weight file describes an invalid network: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn save_weights<W: Write>(w: &NetworkWeights, mut sink: W) -> Result<(), WeightsError> {
    sink.write_all(&to_bytes(w))?;
    sink.flush()?;
    Ok(())
}

pub fn to_bytes(w: &NetworkWeights) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + w.param_count() * 8 + w.layers().len() * 9);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(w.layers().len() as u32).to_le_bytes());
    for (k, l) in w.layers().iter().enumerate() {
        out.push(match l.kind {
            LayerKind::Affine => 0,
            LayerKind::Recurrent => 1,
        });
        out.extend_from_slice(&(l.input as u32).to_le_bytes());
        out.extend_from_slice(&(l.output as u32).to_le_bytes());
        for p in w.layer_params(k) {
            out.extend_from_slice(&p.to_le_bytes());
        }
    }
    out
}

pub fn load_weights<R: Read>(mut source: R) -> Result<NetworkWeights, WeightsError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    from_bytes(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], WeightsError> {
        if self.bytes.len() - self.pos < n {
            return Err(WeightsError::Parse {
                offset: self.pos,
                message: format!(
                    "truncated while reading {what}: need {n} bytes, {} left",
                    self.bytes.len() - self.pos
                ),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, WeightsError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

pub fn from_bytes(bytes: &[u8]) -> Result<NetworkWeights, WeightsError> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(8, "magic")? != MAGIC {
        return Err(WeightsError::Parse {
            offset: 0,
            message: "bad magic, not a weight file".into(),
        });
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(WeightsError::Version { found: version });
    }
    let count_at = c.pos;
    let count = c.u32("layer count")? as usize;
    if count > 64 {
        return Err(WeightsError::Parse {
            offset: count_at,
            message: format!("implausible layer count {count}"),
        });
    }
    let mut layers = Vec::with_capacity(count);
    let mut params = Vec::new();
    for k in 0..count {
        let tag_at = c.pos;
        let kind = match c.take(1, "layer kind")?[0] {
            0 => LayerKind::Affine,
            1 => LayerKind::Recurrent,
            t => {
                return Err(WeightsError::Parse {
                    offset: tag_at,
                    message: format!("layer {}: unknown kind tag {t}", k + 1),
                })
            }
        };
        let input = c.u32("input width")? as usize;
        let output = c.u32("output width")? as usize;
        let shape = LayerShape { kind, input, output };
        let n = shape.param_count();
        let block = c.take(n * 8, &format!("layer {} parameters", k + 1))?;
        params.extend(block.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())));
        layers.push(shape);
    }
    if c.pos != bytes.len() {
        return Err(WeightsError::Parse {
            offset: c.pos,
            message: format!("{} trailing bytes after last layer", bytes.len() - c.pos),
        });
    }
    Ok(NetworkWeights::new(layers, params)?)
}

/// Human-readable dump of the header and layer shapes.
pub fn describe(w: &NetworkWeights) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "format: PAIRNET v{FORMAT_VERSION}");
    let _ = writeln!(s, "layers: {}", w.layers().len());
    for (k, l) in w.layers().iter().enumerate() {
        let kind = match l.kind {
            LayerKind::Recurrent => "recurrent",
            LayerKind::Affine => "affine",
        };
        let act = if k + 1 == w.layers().len() { "linear" } else { "relu" };
        let _ = writeln!(
            s,
            "  {:>2}  {:<9} {:>4} -> {:<4} {:<6} params={}",
            k + 1,
            kind,
            l.input,
            l.output,
            act,
            l.param_count()
        );
    }
    let _ = writeln!(s, "total parameters: {}", w.param_count());
    s
}
