//! On-disk formats: embedding matrices, qrels and document text.
//!
//! Embedding files are a fixed 21-byte little-endian header followed by a
//! row-major `f32` payload:
//!
//! ```text
//! magic "CWEB" | version u32 = 1 | count u64 | dim u32 | dtype u8 = 0 | count*dim f32
//! ```
//!
//! Row identifiers live in a sibling `<path>.ids` file, one per line.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"CWEB";
pub const EMBEDDING_VERSION: u32 = 1;
pub const DTYPE_F32: u8 = 0;
pub const EMBEDDING_HEADER_LEN: usize = 4 + 4 + 8 + 4 + 1;

/// Dense row-major `f32` vectors with one unique string id per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    data: Vec<f32>,
    ids: Vec<String>,
}

impl EmbeddingMatrix {
    /// Builds a matrix, checking shape, id uniqueness and finiteness.
    pub fn new(dim: usize, data: Vec<f32>, ids: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("embedding dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::Consistency(format!(
                "payload of {} values is not a multiple of dim {dim}",
                data.len()
            )));
        }
        let count = data.len() / dim;
        if ids.len() != count {
            return Err(Error::Consistency(format!(
                "{count} rows but {} ids",
                ids.len()
            )));
        }
        let mut seen = HashSet::with_capacity(ids.len());
        for id in &ids {
            if id.contains('\n') {
                return Err(Error::Validation(format!("id {id:?} contains a newline")));
            }
            if !seen.insert(id.as_str()) {
                return Err(Error::Validation(format!("duplicate id `{id}`")));
            }
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Validation(format!(
                "non-finite value at row {}, column {}",
                pos / dim,
                pos % dim
            )));
        }
        Ok(Self { dim, data, ids })
    }

    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new())
    }

    /// Builds a matrix from rows, each of which must have length `dim`.
    pub fn from_rows(dim: usize, rows: &[Vec<f32>], ids: Vec<String>) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::Shape {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data, ids)
    }

    pub fn count(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.data[row * self.dim..(row + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f32]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    /// Map from id to row index.
    pub fn id_index(&self) -> HashMap<&str, usize> {
        self.ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect()
    }

    /// Returns a copy with rows reordered by `order` (a permutation of row indices).
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(self.data.len());
        let mut ids = Vec::with_capacity(order.len());
        for &r in order {
            data.extend_from_slice(self.row(r));
            ids.push(self.ids[r].clone());
        }
        Self::new(self.dim, data, ids)
    }
}

/// Path of the id file that accompanies an embedding file.
pub fn ids_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".ids");
    PathBuf::from(os)
}

/// Serializes the binary payload (header and floats) of an embedding file.
pub fn encode_embeddings(matrix: &EmbeddingMatrix) -> Vec<u8> {
    let mut buf = Vec::with_capacity(EMBEDDING_HEADER_LEN + matrix.data.len() * 4);
    buf.extend_from_slice(EMBEDDING_MAGIC);
    buf.write_u32::<LittleEndian>(EMBEDDING_VERSION).unwrap();
    buf.write_u64::<LittleEndian>(matrix.count() as u64).unwrap();
    buf.write_u32::<LittleEndian>(matrix.dim as u32).unwrap();
    buf.write_u8(DTYPE_F32).unwrap();
    for &v in &matrix.data {
        buf.write_f32::<LittleEndian>(v).unwrap();
    }
    buf
}

/// Parses the binary payload of an embedding file; ids are supplied separately.
pub fn decode_embeddings(bytes: &[u8], ids: Vec<String>) -> Result<EmbeddingMatrix> {
    if bytes.len() < EMBEDDING_HEADER_LEN {
        return Err(Error::Format(format!(
            "file is {} bytes, shorter than the {EMBEDDING_HEADER_LEN}-byte header",
            bytes.len()
        )));
    }
    let mut header = &bytes[..EMBEDDING_HEADER_LEN];
    let mut magic = [0u8; 4];
    header.read_exact(&mut magic).unwrap();
    if &magic != EMBEDDING_MAGIC {
        return Err(Error::Format(format!("bad magic {magic:?}")));
    }
    let version = header.read_u32::<LittleEndian>().unwrap();
    if version != EMBEDDING_VERSION {
        return Err(Error::Format(format!("unsupported version {version}")));
    }
    let count = header.read_u64::<LittleEndian>().unwrap();
    let dim = header.read_u32::<LittleEndian>().unwrap() as usize;
    let dtype = header.read_u8().unwrap();
    if dtype != DTYPE_F32 {
        return Err(Error::Format(format!("unsupported dtype {dtype}")));
    }
    if dim == 0 {
        return Err(Error::Format("dimension is zero".into()));
    }
    let payload = &bytes[EMBEDDING_HEADER_LEN..];
    let expected = (count as u128) * (dim as u128) * 4;
    if payload.len() as u128 != expected {
        return Err(Error::Consistency(format!(
            "payload is {} bytes but header declares {count}x{dim} f32 ({expected} bytes)",
            payload.len()
        )));
    }
    if ids.len() as u64 != count {
        return Err(Error::Consistency(format!(
            "header declares {count} rows but id file has {} ids",
            ids.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingMatrix::new(dim, data, ids)
}

pub fn write_embeddings(matrix: &EmbeddingMatrix, path: &Path) -> Result<()> {
    if let Some(pos) = matrix.data.iter().position(|v| !v.is_finite()) {
        return Err(Error::Validation(format!(
            "non-finite value at row {}",
            pos / matrix.dim
        )));
    }
    fs::write(path, encode_embeddings(matrix)).map_err(|e| Error::io(path, e))?;
    let ids = ids_path(path);
    let mut out = BufWriter::new(File::create(&ids).map_err(|e| Error::io(&ids, e))?);
    for id in &matrix.ids {
        out.write_all(id.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
            .map_err(|e| Error::io(&ids, e))?;
    }
    out.flush().map_err(|e| Error::io(&ids, e))
}

pub fn read_embeddings(path: &Path) -> Result<EmbeddingMatrix> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let ids_file = ids_path(path);
    let text = fs::read_to_string(&ids_file).map_err(|e| Error::io(&ids_file, e))?;
    decode_embeddings(&bytes, parse_ids(&text))
}

fn parse_ids(text: &str) -> Vec<String> {
    let body = text.strip_suffix('\n').unwrap_or(text);
    if text.is_empty() {
        return Vec::new();
    }
    body.split('\n').map(str::to_owned).collect()
}

/// Graded relevance judgments, keyed by query then document.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    /// Builds qrels from `(query, doc, grade)` triples. Duplicates keep the max grade.
    pub fn from_entries<I, Q, D>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (Q, D, u32)>,
        Q: Into<String>,
        D: Into<String>,
    {
        let mut judgments: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
        for (q, d, grade) in entries {
            let slot = judgments.entry(q.into()).or_default().entry(d.into()).or_insert(0);
            *slot = (*slot).max(grade);
        }
        let qrels = Self { judgments };
        qrels.validate()?;
        Ok(qrels)
    }

    fn validate(&self) -> Result<()> {
        for (q, docs) in &self.judgments {
            if !docs.values().any(|&g| g >= 1) {
                return Err(Error::Validation(format!(
                    "query `{q}` has no document with relevance >= 1"
                )));
            }
        }
        Ok(())
    }

    pub fn query_ids(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.judgments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.judgments.is_empty()
    }

    /// All judged documents for a query, including grade-0 entries.
    pub fn grades(&self, query: &str) -> Option<&BTreeMap<String, u32>> {
        self.judgments.get(query)
    }

    /// Documents with grade >= 1 for a query.
    pub fn relevant(&self, query: &str) -> HashSet<&str> {
        self.judgments
            .get(query)
            .into_iter()
            .flatten()
            .filter(|(_, &g)| g >= 1)
            .map(|(d, _)| d.as_str())
            .collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.judgments
            .iter()
            .flat_map(|(q, docs)| docs.iter().map(move |(d, &g)| (q.as_str(), d.as_str(), g)))
    }
}

/// Parses `query<TAB>doc<TAB>relevance` lines.
pub fn parse_qrels(text: &str) -> Result<Qrels> {
    let mut entries = Vec::new();
    for (i, line) in text.split_terminator('\n').enumerate() {
        let lineno = i + 1;
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: lineno,
                msg: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        if fields[0].is_empty() || fields[1].is_empty() {
            return Err(Error::Parse {
                line: lineno,
                msg: "empty query or document id".into(),
            });
        }
        let grade: u32 = fields[2].parse().map_err(|_| Error::Parse {
            line: lineno,
            msg: format!("relevance `{}` is not a non-negative integer", fields[2]),
        })?;
        entries.push((fields[0], fields[1], grade));
    }
    Qrels::from_entries(entries)
}

pub fn read_qrels(path: &Path) -> Result<Qrels> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qrels(&text)
}

pub fn write_qrels(qrels: &Qrels, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (q, d, g) in qrels.entries() {
        out.push_str(&format!("{q}\t{d}\t{g}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Document texts keyed by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DocStore {
    docs: BTreeMap<String, String>,
}

impl DocStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, id: impl Into<String>, text: impl Into<String>) -> Result<()> {
        let id = id.into();
        if self.docs.contains_key(&id) {
            return Err(Error::Validation(format!("duplicate document id `{id}`")));
        }
        self.docs.insert(id, text.into());
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&str> {
        self.docs.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.docs.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }
}

fn escape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut chars = text.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('\\') => out.push('\\'),
            Some(other) => {
                out.push('\\');
                out.push(other);
            }
            None => out.push('\\'),
        }
    }
    out
}

/// Parses `doc_id<TAB>text` lines with `\t`, `\n` and `\\` escapes in the text.
pub fn parse_docstore(text: &str) -> Result<DocStore> {
    let mut store = DocStore::new();
    for (i, line) in text.split_terminator('\n').enumerate() {
        let (id, body) = line.split_once('\t').ok_or_else(|| Error::Parse {
            line: i + 1,
            msg: "expected doc_id<TAB>text".into(),
        })?;
        store.insert(id, unescape_text(body))?;
    }
    Ok(store)
}

pub fn read_docstore(path: &Path) -> Result<DocStore> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_docstore(&text)
}

pub fn write_docstore(store: &DocStore, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (id, text) in store.iter() {
        out.push_str(id);
        out.push('\t');
        out.push_str(&escape_text(text));
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}
