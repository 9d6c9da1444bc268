//! Binary model container.
//!
//! Layout: 8-byte magic, little-endian `u32` format version, little-endian
//! `u64` header length, a JSON header, then every tensor as little-endian
//! `f64` in the order the header lists them.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::model::{CaptionModel, ExpansionRecord, TrainableParams, WordEmbeddings};
use crate::error::{Error, Result};
use crate::scorer::fresh_tag;
use crate::vocab::Vocabulary;

const MAGIC: &[u8; 8] = b"CBSLSTM\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    len: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    embed_dim: usize,
    hidden: usize,
    cond_dim: usize,
    frozen_embeddings: bool,
    vocab: Vocabulary,
    expansions: Vec<ExpansionRecord>,
    tensors: Vec<TensorEntry>,
}

fn tensors(model: &CaptionModel) -> Vec<(String, Vec<f64>)> {
    let mut out = vec![
        ("embeddings".to_string(), model.embeddings.raw().to_vec()),
        ("start".to_string(), model.embeddings.start_column().to_vec()),
    ];
    model
        .params
        .visit(|name, t| out.push((name.to_string(), t.to_vec())));
    out
}

pub fn write_checkpoint<W: Write>(model: &CaptionModel, mut w: W) -> Result<()> {
    let data = tensors(model);
    let header = Header {
        embed_dim: model.embed_dim(),
        hidden: model.hidden(),
        cond_dim: model.cond_dim,
        frozen_embeddings: true,
        vocab: model.vocab.clone(),
        expansions: model.expansions.clone(),
        tensors: data
            .iter()
            .map(|(name, t)| TensorEntry {
                name: name.clone(),
                len: t.len(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for (_, t) in &data {
        for v in t {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

fn read_exact<R: Read, const N: usize>(r: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)
        .map_err(|_| Error::Data("checkpoint is truncated".into()))?;
    Ok(buf)
}

fn read_tensor<R: Read>(r: &mut R, len: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(len);
    for _ in 0..len {
        out.push(f64::from_le_bytes(read_exact::<_, 8>(r)?));
    }
    Ok(out)
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<CaptionModel> {
    if &read_exact::<_, 8>(&mut r)? != MAGIC {
        return Err(Error::Data("not a model checkpoint".into()));
    }
    let version = u32::from_le_bytes(read_exact(&mut r)?);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Data(format!(
            "unsupported checkpoint version {version}"
        )));
    }
    let len = u64::from_le_bytes(read_exact(&mut r)?) as usize;
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)
        .map_err(|_| Error::Data("checkpoint header is truncated".into()))?;
    let header: Header = serde_json::from_slice(&json)?;
    if !header.frozen_embeddings {
        return Err(Error::Data("checkpoint embeddings are not marked frozen".into()));
    }

    let mut params = TrainableParams::zeros(header.embed_dim, header.hidden, header.cond_dim);
    let mut expected = vec![
        (
            "embeddings".to_string(),
            header.vocab.len() * header.embed_dim,
        ),
        ("start".to_string(), header.embed_dim),
    ];
    params.visit(|name, t| expected.push((name.to_string(), t.len())));
    if header.tensors.len() != expected.len() {
        return Err(Error::Data("checkpoint tensor list does not match its shapes".into()));
    }
    let mut loaded = Vec::with_capacity(expected.len());
    for (entry, (name, len)) in header.tensors.iter().zip(&expected) {
        if &entry.name != name || entry.len != *len {
            return Err(Error::Data(format!(
                "checkpoint tensor {} ({} values) where {name} ({len} values) was expected",
                entry.name, entry.len
            )));
        }
        loaded.push(read_tensor(&mut r, *len)?);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(Error::Data("trailing bytes after checkpoint".into()));
    }

    let mut it = loaded.into_iter();
    let emb = it.next().unwrap();
    let start = it.next().unwrap();
    let embeddings = WordEmbeddings::from_flat(header.embed_dim, emb, start)?;
    params.visit_mut(|_, t| t.copy_from_slice(&it.next().unwrap()));
    let mut model = CaptionModel::new(header.vocab, embeddings, params, header.cond_dim)?;
    model.expansions = header.expansions;
    model.tag = fresh_tag();
    Ok(model)
}

impl CaptionModel {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        write_checkpoint(self, BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_checkpoint(BufReader::new(File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vocab::Vocabulary;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> CaptionModel {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let vocab = Vocabulary::with_words(["x", "y"]);
        let cols = (0..3)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let emb = WordEmbeddings::new(4, cols, vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        CaptionModel::initialize(vocab, emb, 3, 2, 7).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let back = read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, m);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.ckpt");
        m.save(&p).unwrap();
        assert_eq!(CaptionModel::load(&p).unwrap(), m);
    }

    #[test]
    fn corrupt_inputs_are_rejected() {
        let m = model();
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        assert!(read_checkpoint(&buf[..buf.len() - 3]).is_err());
        let mut extra = buf.clone();
        extra.push(0);
        assert!(read_checkpoint(&extra[..]).is_err());
        let mut magic = buf.clone();
        magic[0] = b'X';
        assert!(read_checkpoint(&magic[..]).is_err());
        let mut version = buf;
        version[8] = 9;
        assert!(read_checkpoint(&version[..]).is_err());
    }
}
