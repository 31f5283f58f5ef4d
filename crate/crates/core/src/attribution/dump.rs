//! Attention dump files.
//!
//! ```text
//! {"magic":"ATTNDUMP","version":1,"variant":"full","L":..,"H":..,"T":..,"d":..,"dtype":"f32le","prompt_id":".."}\n
//! <payload: little-endian f32>
//! ```
//!
//! Full payload, per layer: `alpha[H][T]` then `fvec[H][T][d]`.
//! Reduced payload, per layer: `norms[T]`.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompt::ComponentKind;

pub const MAGIC: &str = "ATTNDUMP";
pub const VERSION: u32 = 1;
pub const DTYPE: &str = "f32le";
/// Tolerance on attention rows summing to one.
pub const ROW_SUM_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Full,
    Reduced,
}

/// Field order matches the on-disk header.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DumpHeader {
    pub magic: String,
    pub version: u32,
    pub variant: Variant,
    #[serde(rename = "L")]
    pub layers: usize,
    #[serde(rename = "H")]
    pub heads: usize,
    #[serde(rename = "T")]
    pub tokens: usize,
    #[serde(rename = "d")]
    pub dim: usize,
    pub dtype: String,
    pub prompt_id: String,
}

impl DumpHeader {
    pub fn new(variant: Variant, layers: usize, heads: usize, tokens: usize, dim: usize, prompt_id: impl Into<String>) -> Self {
        DumpHeader {
            magic: MAGIC.into(),
            version: VERSION,
            variant,
            layers,
            heads,
            tokens,
            dim,
            dtype: DTYPE.into(),
            prompt_id: prompt_id.into(),
        }
    }

    /// Number of f32 values the payload must hold.
    pub fn payload_len(&self) -> usize {
        match self.variant {
            Variant::Full => self.layers * self.heads * self.tokens * (1 + self.dim),
            Variant::Reduced => self.layers * self.tokens,
        }
    }

    fn check(&self) -> Result<()> {
        if self.magic != MAGIC {
            return Err(Error::Format(format!("bad magic {:?}", self.magic)));
        }
        if self.version != VERSION {
            return Err(Error::Format(format!("unsupported dump version {}", self.version)));
        }
        if self.dtype != DTYPE {
            return Err(Error::Format(format!("unsupported dtype {:?}", self.dtype)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DumpData {
    Full { alpha: Vec<f32>, fvec: Vec<f32> },
    Reduced { norms: Vec<f32> },
}

/// Attention weights of the last-token query and value-output vectors
/// `f(x_j) = W_O W_V x_j`, per layer and head.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionDump {
    pub header: DumpHeader,
    pub data: DumpData,
    /// Filled from the sidecar when available.
    pub token_texts: Vec<String>,
}

impl AttentionDump {
    /// `alpha` is `[L][H][T]`, `fvec` is `[L][H][T][d]`, both flattened row-major.
    pub fn full(prompt_id: impl Into<String>, layers: usize, heads: usize, tokens: usize, dim: usize, alpha: Vec<f32>, fvec: Vec<f32>) -> Result<Self> {
        let dump = AttentionDump {
            header: DumpHeader::new(Variant::Full, layers, heads, tokens, dim, prompt_id),
            data: DumpData::Full { alpha, fvec },
            token_texts: Vec::new(),
        };
        dump.validate()?;
        Ok(dump)
    }

    /// `norms` is `[L][T]`.
    pub fn reduced(prompt_id: impl Into<String>, layers: usize, tokens: usize, norms: Vec<f32>) -> Result<Self> {
        let dump = AttentionDump {
            header: DumpHeader::new(Variant::Reduced, layers, 0, tokens, 0, prompt_id),
            data: DumpData::Reduced { norms },
            token_texts: Vec::new(),
        };
        dump.validate()?;
        Ok(dump)
    }

    pub fn layers(&self) -> usize {
        self.header.layers
    }
    pub fn heads(&self) -> usize {
        self.header.heads
    }
    pub fn tokens(&self) -> usize {
        self.header.tokens
    }
    pub fn dim(&self) -> usize {
        self.header.dim
    }

    pub fn alpha(&self, layer: usize, head: usize, token: usize) -> Option<f32> {
        match &self.data {
            DumpData::Full { alpha, .. } => {
                let (h, t) = (self.heads(), self.tokens());
                alpha.get((layer * h + head) * t + token).copied()
            }
            DumpData::Reduced { .. } => None,
        }
    }

    pub fn fvec(&self, layer: usize, head: usize, token: usize) -> Option<&[f32]> {
        match &self.data {
            DumpData::Full { fvec, .. } => {
                let (h, t, d) = (self.heads(), self.tokens(), self.dim());
                let start = ((layer * h + head) * t + token) * d;
                fvec.get(start..start + d)
            }
            DumpData::Reduced { .. } => None,
        }
    }

    pub fn stored_norm(&self, layer: usize, token: usize) -> Option<f32> {
        match &self.data {
            DumpData::Reduced { norms } => norms.get(layer * self.tokens() + token).copied(),
            DumpData::Full { .. } => None,
        }
    }

    /// Dimensions agree with the header, values are finite, attention weights
    /// are non-negative and each softmax row sums to one.
    pub fn validate(&self) -> Result<()> {
        self.header.check()?;
        let (l, h, t, d) = (self.layers(), self.heads(), self.tokens(), self.dim());
        match (&self.data, self.header.variant) {
            (DumpData::Full { alpha, fvec }, Variant::Full) => {
                if alpha.len() != l * h * t || fvec.len() != l * h * t * d {
                    return Err(Error::Format(format!(
                        "full dump sizes alpha={} fvec={} do not match L={l} H={h} T={t} d={d}",
                        alpha.len(),
                        fvec.len()
                    )));
                }
                if let Some(bad) = alpha.iter().position(|a| !a.is_finite() || *a < 0.0) {
                    return Err(Error::Format(format!("attention weight #{bad} is negative or not finite")));
                }
                if fvec.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Format("value vectors contain non-finite entries".into()));
                }
                for (row, chunk) in alpha.chunks(t.max(1)).enumerate().filter(|_| t > 0) {
                    let sum: f64 = chunk.iter().map(|&a| a as f64).sum();
                    if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                        return Err(Error::Format(format!(
                            "attention row (layer {}, head {}) sums to {sum}",
                            row / h.max(1),
                            row % h.max(1)
                        )));
                    }
                }
            }
            (DumpData::Reduced { norms }, Variant::Reduced) => {
                if norms.len() != l * t {
                    return Err(Error::Format(format!(
                        "reduced dump has {} norms, expected L*T = {}",
                        norms.len(),
                        l * t
                    )));
                }
                if norms.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::Format("stored norms must be finite and non-negative".into()));
                }
            }
            _ => return Err(Error::Format("payload does not match header variant".into())),
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(mut reader: R) -> Result<Self> {
        let mut line = Vec::new();
        reader
            .read_until(b'\n', &mut line)
            .map_err(|e| Error::Format(format!("reading header: {e}")))?;
        if line.last() != Some(&b'\n') {
            return Err(Error::Format("header line is not newline-terminated".into()));
        }
        line.pop();
        let header: DumpHeader = serde_json::from_slice(&line)
            .map_err(|e| Error::Format(format!("bad dump header: {e}")))?;
        header.check()?;

        let mut payload = Vec::new();
        reader
            .read_to_end(&mut payload)
            .map_err(|e| Error::Format(format!("reading payload: {e}")))?;
        let expected = header.payload_len() * 4;
        if payload.len() != expected {
            return Err(Error::Format(format!(
                "payload is {} bytes, header implies {expected}",
                payload.len()
            )));
        }
        let floats: Vec<f32> = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();

        let data = match header.variant {
            Variant::Reduced => DumpData::Reduced { norms: floats },
            Variant::Full => {
                let (h, t, d) = (header.heads, header.tokens, header.dim);
                let mut alpha = Vec::with_capacity(header.layers * h * t);
                let mut fvec = Vec::with_capacity(header.layers * h * t * d);
                let per_layer = h * t * (1 + d);
                for layer in floats.chunks(per_layer.max(1)).take(header.layers) {
                    alpha.extend_from_slice(&layer[..h * t]);
                    fvec.extend_from_slice(&layer[h * t..]);
                }
                DumpData::Full { alpha, fvec }
            }
        };
        let dump = AttentionDump {
            header,
            data,
            token_texts: Vec::new(),
        };
        dump.validate()?;
        Ok(dump)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        self.validate()?;
        let io = |e: std::io::Error| Error::Format(format!("writing dump: {e}"));
        serde_json::to_writer(&mut w, &self.header)?;
        w.write_all(b"\n").map_err(io)?;
        let mut buf = Vec::with_capacity(self.header.payload_len() * 4);
        match &self.data {
            DumpData::Reduced { norms } => norms.iter().for_each(|v| buf.extend_from_slice(&v.to_le_bytes())),
            DumpData::Full { alpha, fvec } => {
                let (h, t, d) = (self.heads(), self.tokens(), self.dim());
                for l in 0..self.layers() {
                    for v in &alpha[l * h * t..(l + 1) * h * t] {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                    for v in &fvec[l * h * t * d..(l + 1) * h * t * d] {
                        buf.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
        w.write_all(&buf).map_err(io)?;
        w.flush().map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let f = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(BufReader::new(f))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let f = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(f))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SidecarSpan {
    pub kind: ComponentKind,
    pub demo: Option<usize>,
    pub start: usize,
    pub end: usize,
}

/// Token-level component spans that accompany a dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpanFile {
    pub prompt_id: String,
    pub token_texts: Vec<String>,
    pub spans: Vec<SidecarSpan>,
    /// Attention blocks the exporter hooked, if it says.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hooked_blocks: Option<Vec<String>>,
    /// Whether the model's prediction on this prompt was correct.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correct: Option<bool>,
}

impl SpanFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
