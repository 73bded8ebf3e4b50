//! Self-describing binary model files.
//!
//! Layout (little-endian):
//!
//! ```text
//! "SFFN" u32:version
//! u32:groups  { str:name u32:V u32:D u8:pooling u8:source u8:storage u32:slots }*
//! embedding payloads, per group:
//!     dense:     V*D f32
//!     quantized: V * { f32:scale, D u8 }
//! u32:M  M*H0 f32 (hidden weights)  M f32 (hidden bias)
//! u32:K  K*M f32 (output weights)   K f32 (output bias)
//! K * str (labels)
//! str:config text
//! u32:lexicons { str:group u32:n n*str }*
//! u8:has_bloom [u64:len blob]
//! ```
//!
//! `str` is a u32 byte length followed by UTF-8.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use crate::bloom::BloomMap;
use crate::config::TaskConfig;
use crate::error::{Error, Result};
use crate::features::{FeatureGroup, GroupLayout, Lexicon, Pooling, Resources, VocabSource};
use crate::network::{EmbeddingMatrix, EmbeddingStorage, NetworkModel, NetworkParts};
use crate::pipelines::sync_lexicon_sizes;
use crate::quantize::QuantizedRow;

pub const MAGIC: &[u8; 4] = b"SFFN";
pub const FORMAT_VERSION: u32 = 1;

/// A trained model together with its configuration and resources.
#[derive(Clone, Debug)]
pub struct SavedModel {
    pub config: TaskConfig,
    pub network: NetworkModel,
    pub resources: Resources,
}

/// Named byte ranges of a serialized model; lengths sum to the file length.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Section {
    Header,
    Embeddings,
    Hidden,
    Output,
    Labels,
    Config,
    Lexicons,
    Clusters,
}

impl Section {
    pub fn name(self) -> &'static str {
        match self {
            Section::Header => "header",
            Section::Embeddings => "embeddings",
            Section::Hidden => "hidden",
            Section::Output => "output",
            Section::Labels => "labels",
            Section::Config => "config",
            Section::Lexicons => "lexicons",
            Section::Clusters => "clusters",
        }
    }

    pub fn is_resource(self) -> bool {
        matches!(self, Section::Config | Section::Lexicons | Section::Clusters)
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u64).to_le_bytes());
    }
    fn f32s(&mut self, vs: &[f32]) {
        self.0.reserve(vs.len() * 4);
        for v in vs {
            self.0.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn str(&mut self, s: &str) {
        self.u32(s.len());
        self.0.extend_from_slice(s.as_bytes());
    }
}

fn pooling_tag(p: Pooling) -> u8 {
    match p {
        Pooling::Concat => 0,
        Pooling::Average => 1,
        Pooling::Sum => 2,
    }
}

fn source_tag(s: VocabSource) -> u8 {
    match s {
        VocabSource::Hashed => 0,
        VocabSource::Lexicon => 1,
        VocabSource::Closed => 2,
    }
}

impl SavedModel {
    /// Serialized sections in file order.
    pub fn sections(&self) -> Vec<(Section, Vec<u8>)> {
        let net = &self.network;
        let mut header = Writer(Vec::new());
        header.0.extend_from_slice(MAGIC);
        header.u32(FORMAT_VERSION as usize);
        header.u32(net.groups().len());
        for (g, e) in net.groups().iter().zip(net.embeddings()) {
            header.str(&g.group.name);
            header.u32(g.group.vocab_size as usize);
            header.u32(g.group.embedding_dim);
            header.u8(pooling_tag(g.group.pooling));
            header.u8(source_tag(g.group.source));
            header.u8(u8::from(e.is_quantized()));
            header.u32(g.slots);
        }

        let mut emb = Writer(Vec::new());
        for e in net.embeddings() {
            match e.storage() {
                EmbeddingStorage::Dense(v) => emb.f32s(v),
                EmbeddingStorage::Quantized(rows) => {
                    for r in rows {
                        emb.f32s(&[r.scale]);
                        emb.0.extend_from_slice(&r.codes);
                    }
                }
            }
        }

        let mut hidden = Writer(Vec::new());
        hidden.u32(net.hidden_dim());
        hidden.f32s(net.hidden_weights());
        hidden.f32s(net.hidden_bias());

        let mut output = Writer(Vec::new());
        output.u32(net.num_classes());
        output.f32s(net.output_weights());
        output.f32s(net.output_bias());

        let mut labels = Writer(Vec::new());
        for l in net.labels() {
            labels.str(l);
        }

        let mut config = Writer(Vec::new());
        config.str(&self.config.to_text());

        let mut lex = Writer(Vec::new());
        lex.u32(self.resources.lexicons.len());
        for (name, l) in &self.resources.lexicons {
            lex.str(name);
            lex.u32(l.entries().len());
            for e in l.entries() {
                lex.str(e);
            }
        }

        let mut clusters = Writer(Vec::new());
        match &self.resources.clusters {
            Some(map) => {
                clusters.u8(1);
                clusters.u64(map.serialized_len());
                clusters.0.extend_from_slice(&map.to_bytes());
            }
            None => clusters.u8(0),
        }

        vec![
            (Section::Header, header.0),
            (Section::Embeddings, emb.0),
            (Section::Hidden, hidden.0),
            (Section::Output, output.0),
            (Section::Labels, labels.0),
            (Section::Config, config.0),
            (Section::Lexicons, lex.0),
            (Section::Clusters, clusters.0),
        ]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.sections().into_iter().flat_map(|(_, b)| b).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes =
            std::fs::read(path).map_err(|e| Error::Format(format!("cannot read model `{}`: {e}", path.display())))?;
        SavedModel::from_bytes(&bytes)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format("not a model file (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format(format!("unsupported model format version {version}")));
        }
        let ngroups = r.u32()? as usize;
        let mut layout = Vec::with_capacity(ngroups.min(1024));
        let mut quantized = Vec::with_capacity(ngroups.min(1024));
        for _ in 0..ngroups {
            let name = r.str()?;
            let vocab_size = r.u32()?;
            let embedding_dim = r.u32()? as usize;
            let pooling = match r.u8()? {
                0 => Pooling::Concat,
                1 => Pooling::Average,
                2 => Pooling::Sum,
                t => return Err(Error::Format(format!("bad pooling tag {t}"))),
            };
            let source = match r.u8()? {
                0 => VocabSource::Hashed,
                1 => VocabSource::Lexicon,
                2 => VocabSource::Closed,
                t => return Err(Error::Format(format!("bad vocabulary tag {t}"))),
            };
            quantized.push(match r.u8()? {
                0 => false,
                1 => true,
                t => return Err(Error::Format(format!("bad storage tag {t}"))),
            });
            let slots = r.u32()? as usize;
            layout
                .push(GroupLayout { group: FeatureGroup { name, vocab_size, embedding_dim, pooling, source }, slots });
        }
        let mut embeddings = Vec::with_capacity(layout.len());
        for (g, &q) in layout.iter().zip(&quantized) {
            let (v, d) = (g.group.vocab_size as usize, g.group.embedding_dim);
            embeddings.push(if q {
                let mut rows = Vec::with_capacity(v.min(1 << 20));
                for _ in 0..v {
                    let scale = r.f32()?;
                    rows.push(QuantizedRow { scale, codes: r.take(d)?.to_vec() });
                }
                EmbeddingMatrix::from_quantized(v, d, rows)?
            } else {
                EmbeddingMatrix::from_dense(v, d, r.f32s(v.checked_mul(d).ok_or_else(overflow)?)?)?
            });
        }
        let input_dim: usize = layout.iter().map(GroupLayout::width).sum();
        let m = r.u32()? as usize;
        let hidden_weights = r.f32s(m.checked_mul(input_dim).ok_or_else(overflow)?)?;
        let hidden_bias = r.f32s(m)?;
        let k = r.u32()? as usize;
        let output_weights = r.f32s(k.checked_mul(m).ok_or_else(overflow)?)?;
        let output_bias = r.f32s(k)?;
        let mut labels = Vec::with_capacity(k.min(1 << 16));
        for _ in 0..k {
            labels.push(r.str()?);
        }
        let mut config = TaskConfig::parse(&r.str()?).map_err(|e| Error::Format(format!("embedded config: {e}")))?;
        let nlex = r.u32()? as usize;
        let mut lexicons = BTreeMap::new();
        for _ in 0..nlex {
            let name = r.str()?;
            let n = r.u32()? as usize;
            let mut entries = Vec::with_capacity(n.min(1 << 20));
            for _ in 0..n {
                entries.push(r.str()?);
            }
            lexicons.insert(name, Lexicon::from_entries(entries));
        }
        let clusters = match r.u8()? {
            0 => None,
            1 => {
                let len = r.u64()? as usize;
                let mut blob = r.take(len)?;
                Some(BloomMap::read_from(&mut blob)?)
            }
            t => return Err(Error::Format(format!("bad cluster tag {t}"))),
        };
        if r.pos != bytes.len() {
            return Err(Error::Format(format!("{} trailing bytes after model", bytes.len() - r.pos)));
        }
        let network = NetworkModel::from_parts(NetworkParts {
            groups: layout,
            embeddings,
            hidden_dim: m,
            hidden_weights,
            hidden_bias,
            output_weights,
            output_bias,
            labels,
        })?;
        sync_lexicon_sizes(&mut config.templates, &lexicons)?;
        if config.templates.layout() != network.groups() {
            return Err(Error::Format("embedded config does not match the stored network layout".into()));
        }
        Ok(SavedModel { config, network, resources: Resources { lexicons, clusters } })
    }
}

fn overflow() -> Error {
    Error::Format("tensor size overflows".into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end =
            self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
                Error::Format(format!("truncated model file (wanted {n} bytes at offset {})", self.pos))
            })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        b.copy_from_slice(self.take(4)?);
        Ok(u32::from_le_bytes(b))
    }

    fn u64(&mut self) -> Result<u64> {
        let mut b = [0u8; 8];
        b.copy_from_slice(self.take(8)?);
        Ok(u64::from_le_bytes(b))
    }

    fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_bits(self.u32()?))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f32>> {
        let raw = self.take(n.checked_mul(4).ok_or_else(overflow)?)?;
        Ok(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
    }

    fn str(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| Error::Format("invalid UTF-8 in model file".into()))
    }
}

/// Read from any reader (used for stdin-style sources).
pub fn read_model(mut r: impl Read) -> Result<SavedModel> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    SavedModel::from_bytes(&bytes)
}
