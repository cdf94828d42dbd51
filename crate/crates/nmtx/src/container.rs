//! The binary model file.
//!
//! ```text
//! magic      8 bytes   "NMTXMODL"
//! version    u32
//! entries    u32       number of directory records
//! dir_len    u32       byte length of the directory
//! dir_crc    u32       CRC-32 of the directory bytes
//! directory  entries × { name_len u16, name, offset u64, len u64, crc u32 }
//! payload    concatenated entry bodies; offsets are relative to its start
//! ```
//!
//! All integers are little-endian. Entries:
//!
//! * `config` – `key=value` text, including `kind=translation|lm`;
//! * `provenance` – the parent a transferred model was initialised from
//!   (absent for models trained from scratch);
//! * `src_vocab`, `tgt_vocab` – vocabulary files (an LM has no `src_vocab`);
//! * `block/<name>` – one per parameter block. A block body is a sequence
//!   of tensors `{ name_len u16, name, rows u32, cols u32, rows·cols f32 }`.
//!
//! Language models store only the four target-side blocks; their source
//! blocks are identically zero and rebuilt on load.

use std::fs;
use std::path::Path;

use nmtx_core::lm::LanguageModel;
use nmtx_core::tensor::AttentionKind;
use nmtx_core::{BlockName, ModelConfig, ParameterBlocks, Real, Seq2Seq, Vocabulary};

use crate::atomic::write_atomic;
use crate::error::{NmtxError, Result};
use crate::formats::{kv_to_text, parse_kv, parse_vocab, vocab_to_text};

pub const MAGIC: &[u8; 8] = b"NMTXMODL";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 * 4;

/// What a model file holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Translation,
    Language,
}

impl ModelKind {
    fn as_str(self) -> &'static str {
        match self {
            ModelKind::Translation => "translation",
            ModelKind::Language => "lm",
        }
    }

    fn blocks(self) -> &'static [BlockName] {
        match self {
            ModelKind::Translation => &BlockName::ALL,
            ModelKind::Language => &BlockName::ALL[2..],
        }
    }
}

pub fn block_entry_name(b: BlockName) -> String {
    format!("block/{b}")
}

/// A named entry of a model file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub name: String,
    pub data: Vec<u8>,
}

/// The raw, checksummed directory of named entries.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Container {
    pub entries: Vec<Entry>,
}

impl Container {
    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.entries.iter().find(|e| e.name == name).map(|e| e.data.as_slice())
    }

    pub fn push(&mut self, name: impl Into<String>, data: Vec<u8>) {
        self.entries.push(Entry { name: name.into(), data });
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut dir = Vec::new();
        let mut offset = 0u64;
        for e in &self.entries {
            dir.extend_from_slice(&(e.name.len() as u16).to_le_bytes());
            dir.extend_from_slice(e.name.as_bytes());
            dir.extend_from_slice(&offset.to_le_bytes());
            dir.extend_from_slice(&(e.data.len() as u64).to_le_bytes());
            dir.extend_from_slice(&crc32fast::hash(&e.data).to_le_bytes());
            offset += e.data.len() as u64;
        }
        let mut out = Vec::with_capacity(HEADER_LEN + dir.len() + offset as usize);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        out.extend_from_slice(&(dir.len() as u32).to_le_bytes());
        out.extend_from_slice(&crc32fast::hash(&dir).to_le_bytes());
        out.extend_from_slice(&dir);
        for e in &self.entries {
            out.extend_from_slice(&e.data);
        }
        out
    }

    /// Parses and verifies every checksum. `path` is only used in errors.
    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let truncated = |what: &str| NmtxError::Truncated {
            path: path.to_path_buf(),
            what: what.to_string(),
        };
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(NmtxError::BadMagic { path: path.to_path_buf() });
        }
        if bytes.len() < HEADER_LEN {
            return Err(truncated("header"));
        }
        let version = u32_at(bytes, 8);
        if version != FORMAT_VERSION {
            return Err(NmtxError::VersionMismatch {
                path: path.to_path_buf(),
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let count = u32_at(bytes, 12) as usize;
        let dir_len = u32_at(bytes, 16) as usize;
        let dir_crc = u32_at(bytes, 20);
        let dir = bytes
            .get(HEADER_LEN..HEADER_LEN + dir_len)
            .ok_or_else(|| truncated("directory"))?;
        if crc32fast::hash(dir) != dir_crc {
            return Err(NmtxError::Checksum {
                path: path.to_path_buf(),
                entry: "directory".into(),
            });
        }
        let payload = &bytes[HEADER_LEN + dir_len..];
        let malformed_dir = || NmtxError::Malformed {
            path: path.to_path_buf(),
            entry: "directory".into(),
            message: "record runs past the directory".into(),
        };

        let mut entries = Vec::with_capacity(count);
        let mut pos = 0usize;
        for _ in 0..count {
            let name_len = u16::from_le_bytes(take(dir, &mut pos, 2).ok_or_else(malformed_dir)?.try_into().unwrap()) as usize;
            let name = take(dir, &mut pos, name_len).ok_or_else(malformed_dir)?;
            let name = String::from_utf8(name.to_vec()).map_err(|_| NmtxError::Malformed {
                path: path.to_path_buf(),
                entry: "directory".into(),
                message: "entry name is not UTF-8".into(),
            })?;
            let rec = take(dir, &mut pos, 20).ok_or_else(malformed_dir)?;
            let offset = u64::from_le_bytes(rec[..8].try_into().unwrap()) as usize;
            let len = u64::from_le_bytes(rec[8..16].try_into().unwrap()) as usize;
            let crc = u32::from_le_bytes(rec[16..].try_into().unwrap());
            let data = offset
                .checked_add(len)
                .and_then(|end| payload.get(offset..end))
                .ok_or_else(|| truncated(&format!("entry `{name}`")))?;
            if crc32fast::hash(data) != crc {
                return Err(NmtxError::Checksum {
                    path: path.to_path_buf(),
                    entry: name,
                });
            }
            entries.push(Entry {
                name,
                data: data.to_vec(),
            });
        }
        if pos != dir.len() {
            return Err(malformed_dir());
        }
        Ok(Container { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| NmtxError::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn take<'a>(bytes: &'a [u8], pos: &mut usize, n: usize) -> Option<&'a [u8]> {
    let out = bytes.get(*pos..pos.checked_add(n)?)?;
    *pos += n;
    Some(out)
}

// ------------------------------------------------------------------ encoding

fn config_text(config: &ModelConfig, kind: ModelKind) -> String {
    let attention = match config.attention {
        AttentionKind::Local => "local",
        AttentionKind::Global => "global",
    };
    let kv: Vec<(String, String)> = [
        ("kind", kind.as_str().to_string()),
        ("hidden_size", config.hidden_size.to_string()),
        ("layers", config.layers.to_string()),
        ("src_vocab_size", config.src_vocab_size.to_string()),
        ("tgt_vocab_size", config.tgt_vocab_size.to_string()),
        ("dropout_p", config.dropout_p.to_string()),
        ("init_range", config.init_range.to_string()),
        ("attention_window", config.attention_window.to_string()),
        ("attention", attention.to_string()),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    kv_to_text(&kv)
}

fn encode_block<T: Real>(params: &ParameterBlocks<T>, b: BlockName) -> Vec<u8> {
    let mut out = Vec::new();
    for (name, m) in params.block(b) {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
        for &x in m.as_slice() {
            out.extend_from_slice(&(x.as_f64() as f32).to_le_bytes());
        }
    }
    out
}

fn encode<T: Real>(model: &Seq2Seq<T>, kind: ModelKind) -> Container {
    let mut c = Container::default();
    c.push("config", config_text(&model.config, kind).into_bytes());
    if let Some(parent) = &model.config.parent {
        c.push("provenance", parent.clone().into_bytes());
    }
    if kind == ModelKind::Translation {
        c.push("src_vocab", vocab_to_text(&model.src_vocab).into_bytes());
    }
    c.push("tgt_vocab", vocab_to_text(&model.tgt_vocab).into_bytes());
    for &b in kind.blocks() {
        c.push(block_entry_name(b), encode_block(&model.params, b));
    }
    c
}

/// Serialises a translation model. Values are stored as 32-bit floats, so
/// an `f32` model round-trips bit for bit.
pub fn save_model<T: Real>(model: &Seq2Seq<T>, path: &Path) -> Result<()> {
    encode(model, ModelKind::Translation).write(path)
}

/// Serialises a language model (target-side blocks only).
pub fn save_lm<T: Real>(lm: &LanguageModel<T>, path: &Path) -> Result<()> {
    encode(lm.as_seq2seq(), ModelKind::Language).write(path)
}

// ------------------------------------------------------------------ decoding

struct Decoder<'a> {
    c: &'a Container,
    path: &'a Path,
}

impl Decoder<'_> {
    fn malformed(&self, entry: &str, message: impl Into<String>) -> NmtxError {
        NmtxError::Malformed {
            path: self.path.to_path_buf(),
            entry: entry.to_string(),
            message: message.into(),
        }
    }

    fn text(&self, name: &str) -> Result<&str> {
        let data = self.c.get(name).ok_or_else(|| self.malformed(name, "entry is missing"))?;
        std::str::from_utf8(data).map_err(|_| self.malformed(name, "not UTF-8"))
    }

    fn config(&self) -> Result<(ModelKind, ModelConfig)> {
        let kv = parse_kv(self.text("config")?, self.path)?;
        let get = |k: &str| {
            kv.iter()
                .find(|e| e.key == k)
                .map(|e| e.value.as_str())
                .ok_or_else(|| self.malformed("config", format!("key `{k}` is missing")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|_| self.malformed("config", format!("key `{k}` is not an integer")))
        };
        let real = |k: &str| -> Result<f64> {
            get(k)?
                .parse()
                .map_err(|_| self.malformed("config", format!("key `{k}` is not a number")))
        };
        let kind = match get("kind")? {
            "translation" => ModelKind::Translation,
            "lm" => ModelKind::Language,
            other => return Err(self.malformed("config", format!("unknown kind `{other}`"))),
        };
        let attention = match get("attention")? {
            "local" => AttentionKind::Local,
            "global" => AttentionKind::Global,
            other => return Err(self.malformed("config", format!("unknown attention `{other}`"))),
        };
        let parent = match self.c.get("provenance") {
            None => None,
            Some(_) => Some(self.text("provenance")?.to_string()),
        };
        let config = ModelConfig {
            hidden_size: num("hidden_size")?,
            layers: num("layers")?,
            src_vocab_size: num("src_vocab_size")?,
            tgt_vocab_size: num("tgt_vocab_size")?,
            dropout_p: real("dropout_p")?,
            init_range: real("init_range")?,
            attention_window: num("attention_window")?,
            attention,
            parent,
        };
        Ok((kind, config))
    }

    fn vocab(&self, name: &str) -> Result<Vocabulary> {
        parse_vocab(self.text(name)?, self.path).map_err(|e| self.malformed(name, e.to_string()))
    }

    /// Fills `params`' tensors for block `b`, checking names and shapes.
    fn block(&self, params: &mut ParameterBlocks<f32>, b: BlockName) -> Result<()> {
        let entry = block_entry_name(b);
        let data = self.c.get(&entry).ok_or_else(|| NmtxError::MissingBlock {
            path: self.path.to_path_buf(),
            block: b.to_string(),
        })?;
        let names: Vec<&'static str> = params.block(b).into_iter().map(|(n, _)| n).collect();
        let short = || self.malformed(&entry, "ends inside a tensor");
        let mut pos = 0usize;
        for (name, m) in names.into_iter().zip(params.block_mut(b)) {
            let len = u16::from_le_bytes(take(data, &mut pos, 2).ok_or_else(short)?.try_into().unwrap()) as usize;
            let found = take(data, &mut pos, len).ok_or_else(short)?;
            if found != name.as_bytes() {
                return Err(self.malformed(
                    &entry,
                    format!("expected tensor `{name}`, found `{}`", String::from_utf8_lossy(found)),
                ));
            }
            let dims = take(data, &mut pos, 8).ok_or_else(short)?;
            let rows = u32::from_le_bytes(dims[..4].try_into().unwrap()) as usize;
            let cols = u32::from_le_bytes(dims[4..].try_into().unwrap()) as usize;
            if (rows, cols) != m.shape() {
                return Err(self.malformed(
                    &entry,
                    format!(
                        "tensor `{name}` is {rows}x{cols}, the config implies {}x{}",
                        m.rows(),
                        m.cols()
                    ),
                ));
            }
            let body = take(data, &mut pos, rows * cols * 4).ok_or_else(short)?;
            for (x, chunk) in m.as_mut_slice().iter_mut().zip(body.chunks_exact(4)) {
                *x = f32::from_le_bytes(chunk.try_into().unwrap());
            }
        }
        if pos != data.len() {
            return Err(self.malformed(&entry, "trailing bytes after the last tensor"));
        }
        Ok(())
    }

    fn model(&self, want: ModelKind) -> Result<Seq2Seq<f32>> {
        let (kind, config) = self.config()?;
        if kind != want {
            return Err(self.malformed(
                "config",
                format!("file holds a `{}` model, expected `{}`", kind.as_str(), want.as_str()),
            ));
        }
        let src_vocab = match kind {
            ModelKind::Translation => self.vocab("src_vocab")?,
            ModelKind::Language => Vocabulary::default(),
        };
        let tgt_vocab = self.vocab("tgt_vocab")?;
        let mut params = ParameterBlocks::<f32>::zeros(config.hidden_size, src_vocab.len(), tgt_vocab.len());
        for &b in kind.blocks() {
            self.block(&mut params, b)?;
        }
        Ok(Seq2Seq::from_parts(config, src_vocab, tgt_vocab, params)?)
    }
}

pub fn decode_model(c: &Container, path: &Path) -> Result<Seq2Seq<f32>> {
    Decoder { c, path }.model(ModelKind::Translation)
}

pub fn load_model(path: &Path) -> Result<Seq2Seq<f32>> {
    decode_model(&Container::read(path)?, path)
}

pub fn load_lm(path: &Path) -> Result<LanguageModel<f32>> {
    let c = Container::read(path)?;
    let model = Decoder { c: &c, path }.model(ModelKind::Language)?;
    Ok(LanguageModel::from_seq2seq(model)?)
}

/// Reads just the kind of model stored at `path`.
pub fn model_kind(path: &Path) -> Result<ModelKind> {
    let c = Container::read(path)?;
    Ok(Decoder { c: &c, path }.config()?.0)
}
