//! On-disk index layout.
//!
//! A saved index is a directory with:
//!
//! * `chunks.jsonl`: one chunk per line, in ordinal order.
//! * `postings.bin`: little-endian. Magic `CVPI`, `u32` version, `u32`
//!   chunk count followed by that many `u32` token lengths, `u32` term
//!   count, then per term (ascending byte order): `u32` byte length, UTF-8
//!   bytes, `u32` posting count and that many (`u32` ordinal delta from the
//!   previous posting, `u32` term frequency) pairs.
//! * `vectors.f32`: row-major little-endian `f32`, chunk count × `dim`.
//!   Absent when the index was built without an embedder.
//! * `meta.json`: dimension, embedding model id, descriptor, counts, labels.
//! * `sources.jsonl`: `{"filename", "text"}` per source document.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ChunkIndex, IndexError};
use crate::chunker::{read_jsonl, write_jsonl};

const MAGIC: &[u8; 4] = b"CVPI";
const VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Meta {
    format_version: u32,
    dim: usize,
    embed_model_id: String,
    descriptor: String,
    chunk_count: usize,
    term_count: usize,
    has_vectors: bool,
    #[serde(default)]
    labels: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct SourceRecord {
    filename: String,
    text: String,
}

fn put(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8], IndexError> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.buf.len()).ok_or_else(|| IndexError::Format("postings.bin truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn encode_postings(index: &ChunkIndex) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    put(&mut out, VERSION);
    put(&mut out, index.doc_lens.len() as u32);
    for l in &index.doc_lens {
        put(&mut out, *l);
    }
    put(&mut out, index.postings.len() as u32);
    for (term, list) in &index.postings {
        put(&mut out, term.len() as u32);
        out.extend_from_slice(term.as_bytes());
        put(&mut out, list.len() as u32);
        let mut prev = 0u32;
        for &(doc, tf) in list {
            put(&mut out, doc - prev);
            put(&mut out, tf);
            prev = doc;
        }
    }
    out
}

type Decoded = (BTreeMap<String, Vec<(u32, u32)>>, Vec<u32>);

fn decode_postings(buf: &[u8]) -> Result<Decoded, IndexError> {
    let mut c = Cursor { buf, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(IndexError::Format("postings.bin has wrong magic".into()));
    }
    let version = c.u32()?;
    if version != VERSION {
        return Err(IndexError::Format(format!("unsupported postings version {version}")));
    }
    let n = c.u32()? as usize;
    let lens = (0..n).map(|_| c.u32()).collect::<Result<Vec<_>, _>>()?;
    let terms = c.u32()?;
    let mut postings = BTreeMap::new();
    for _ in 0..terms {
        let len = c.u32()? as usize;
        let term = String::from_utf8(c.take(len)?.to_vec()).map_err(|e| IndexError::Format(e.to_string()))?;
        let count = c.u32()?;
        let mut list = Vec::with_capacity(count as usize);
        let mut doc = 0u32;
        for _ in 0..count {
            doc += c.u32()?;
            let tf = c.u32()?;
            if doc as usize >= n {
                return Err(IndexError::Format(format!("posting for '{term}' points past chunk {n}")));
            }
            list.push((doc, tf));
        }
        postings.insert(term, list);
    }
    Ok((postings, lens))
}

impl ChunkIndex {
    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        fs::create_dir_all(dir)?;
        write_jsonl(&self.chunks, BufWriter::new(File::create(dir.join("chunks.jsonl"))?))?;
        fs::write(dir.join("postings.bin"), encode_postings(self))?;
        let vec_path = dir.join("vectors.f32");
        match &self.vectors {
            Some(vectors) => {
                let mut w = BufWriter::new(File::create(&vec_path)?);
                for v in vectors {
                    for x in v {
                        w.write_all(&x.to_le_bytes())?;
                    }
                }
                w.flush()?;
            }
            None if vec_path.exists() => fs::remove_file(&vec_path)?,
            None => {}
        }
        let meta = Meta {
            format_version: VERSION,
            dim: self.dim,
            embed_model_id: self.embed_model_id.clone(),
            descriptor: self.descriptor.clone(),
            chunk_count: self.chunks.len(),
            term_count: self.postings.len(),
            has_vectors: self.vectors.is_some(),
            labels: self.labels.clone(),
        };
        fs::write(dir.join("meta.json"), serde_json::to_vec_pretty(&meta).map_err(|e| IndexError::Format(e.to_string()))?)?;
        let mut w = BufWriter::new(File::create(dir.join("sources.jsonl"))?);
        for (filename, text) in &self.sources {
            serde_json::to_writer(&mut w, &SourceRecord { filename: filename.clone(), text: text.clone() })
                .map_err(|e| IndexError::Format(e.to_string()))?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let meta: Meta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?).map_err(|e| IndexError::Format(e.to_string()))?;
        let chunks = read_jsonl(BufReader::new(File::open(dir.join("chunks.jsonl"))?))?;
        if chunks.len() != meta.chunk_count {
            return Err(IndexError::Format(format!("meta lists {} chunks, chunks.jsonl has {}", meta.chunk_count, chunks.len())));
        }
        let (postings, doc_lens) = decode_postings(&fs::read(dir.join("postings.bin"))?)?;
        if doc_lens.len() != chunks.len() {
            return Err(IndexError::Format("postings.bin chunk count disagrees with chunks.jsonl".into()));
        }
        let vectors = if meta.has_vectors {
            let mut raw = Vec::new();
            File::open(dir.join("vectors.f32"))?.read_to_end(&mut raw)?;
            if raw.len() != chunks.len() * meta.dim * 4 {
                return Err(IndexError::Format(format!("vectors.f32 has {} bytes, expected {}", raw.len(), chunks.len() * meta.dim * 4)));
            }
            let flat: Vec<f32> = raw.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
            Some(if meta.dim == 0 { vec![Vec::new(); chunks.len()] } else { flat.chunks(meta.dim).map(<[f32]>::to_vec).collect() })
        } else {
            None
        };
        let mut sources = BTreeMap::new();
        let text = fs::read_to_string(dir.join("sources.jsonl"))?;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let r: SourceRecord = serde_json::from_str(line).map_err(|e| IndexError::Format(e.to_string()))?;
            sources.insert(r.filename, r.text);
        }
        Ok(ChunkIndex {
            chunks,
            postings,
            doc_lens,
            vectors,
            dim: meta.dim,
            descriptor: meta.descriptor,
            embed_model_id: meta.embed_model_id,
            sources,
            labels: meta.labels,
        })
    }
}
