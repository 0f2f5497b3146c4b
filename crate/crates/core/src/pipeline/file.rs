//! Stored embeddings.
//!
//! Layout: magic `AILKEMB1`, then little-endian u32 `records, e, s, l`, then
//! per record a 16-byte id followed by `s * l` vectors (segment-major,
//! layer-minor) of `e` little-endian f32 values. With `s = 1` the single
//! vector set describes the whole image; with `s = 5` it describes the five
//! crops in geometry order.

use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::provider::{EmbeddingProvider, ImageId, Segment};
use crate::error::{Error, Result};
use crate::types::Embedding;

pub const MAGIC: &[u8; 8] = b"AILKEMB1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingFileHeader {
    pub records: u32,
    pub e: u32,
    pub s: u32,
    pub l: u32,
}

impl EmbeddingFileHeader {
    fn vectors_per_record(&self) -> usize {
        self.s as usize * self.l as usize
    }

    fn validate(&self) -> Result<()> {
        if self.e == 0 || self.l == 0 || !(self.s == 1 || self.s == 5) {
            return Err(Error::MalformedFile(format!(
                "bad header: e={} s={} l={} (need e, l >= 1 and s in {{1, 5}})",
                self.e, self.s, self.l
            )));
        }
        Ok(())
    }
}

/// Writes `records` (id, `s * l * e` values) under `header`.
pub fn write_embedding_file<'a>(
    out: impl Write,
    header: EmbeddingFileHeader,
    records: impl IntoIterator<Item = (ImageId, &'a [f32])>,
) -> Result<()> {
    header.validate()?;
    let mut w = BufWriter::new(out);
    w.write_all(MAGIC)?;
    for v in [header.records, header.e, header.s, header.l] {
        w.write_all(&v.to_le_bytes())?;
    }
    let per = header.vectors_per_record() * header.e as usize;
    let mut written = 0u32;
    for (id, values) in records {
        if values.len() != per {
            return Err(Error::Dimension {
                expected: per,
                actual: values.len(),
            });
        }
        w.write_all(&id.0)?;
        for v in values {
            w.write_all(&v.to_le_bytes())?;
        }
        written += 1;
    }
    if written != header.records {
        return Err(Error::MalformedFile(format!(
            "header announces {} records, {written} supplied",
            header.records
        )));
    }
    w.flush()?;
    Ok(())
}

/// Exports embeddings of `ids` from another provider. Values are narrowed
/// to f32.
pub fn export_embeddings(
    out: impl Write,
    provider: &dyn EmbeddingProvider,
    ids: &[ImageId],
    s: usize,
) -> Result<()> {
    let dims = provider.layer_dims();
    let e = dims[0];
    if dims.iter().any(|&d| d != e) {
        return Err(Error::InvalidParam("embedding files need equal layer dimensions".into()));
    }
    let rows = ids
        .par_iter()
        .map(|id| {
            let mut row = Vec::with_capacity(s * dims.len() * e);
            for seg in 0..s {
                for layer in 0..dims.len() {
                    let emb = provider.embed(id, Segment::of(s, seg), layer)?;
                    row.extend(emb.values.iter().map(|&v| v as f32));
                }
            }
            Ok((*id, row))
        })
        .collect::<Result<Vec<_>>>()?;
    let header = EmbeddingFileHeader {
        records: ids.len() as u32,
        e: e as u32,
        s: s as u32,
        l: dims.len() as u32,
    };
    write_embedding_file(out, header, rows.iter().map(|(id, r)| (*id, r.as_slice())))
}

#[derive(Debug, Clone)]
pub struct FileEmbeddingProvider {
    header: EmbeddingFileHeader,
    index: HashMap<ImageId, usize>,
    ids: Vec<ImageId>,
    values: Vec<f32>,
}

impl FileEmbeddingProvider {
    pub fn read(input: impl Read) -> Result<Self> {
        let mut r = BufReader::new(input);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)
            .map_err(|_| Error::MalformedFile("truncated before magic".into()))?;
        if &magic != MAGIC {
            return Err(Error::MalformedFile("bad magic".into()));
        }
        let mut nums = [0u32; 4];
        for n in nums.iter_mut() {
            let mut b = [0u8; 4];
            r.read_exact(&mut b)
                .map_err(|_| Error::MalformedFile("truncated header".into()))?;
            *n = u32::from_le_bytes(b);
        }
        let header = EmbeddingFileHeader {
            records: nums[0],
            e: nums[1],
            s: nums[2],
            l: nums[3],
        };
        header.validate()?;
        let per = header.vectors_per_record() * header.e as usize;
        let mut index = HashMap::with_capacity(header.records as usize);
        let mut ids = Vec::with_capacity(header.records as usize);
        let mut values = Vec::new();
        let mut buf = vec![0u8; per * 4];
        for rec in 0..header.records as usize {
            let mut id = [0u8; 16];
            r.read_exact(&mut id)
                .and_then(|_| r.read_exact(&mut buf))
                .map_err(|_| Error::MalformedFile(format!("truncated at record {rec}")))?;
            let id = ImageId(id);
            if index.insert(id, rec).is_some() {
                return Err(Error::MalformedFile(format!("duplicate id {id}")));
            }
            ids.push(id);
            values.extend(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(Error::MalformedFile("trailing bytes after last record".into()));
        }
        Ok(FileEmbeddingProvider {
            header,
            index,
            ids,
            values,
        })
    }

    pub fn open(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open embedding file {}: {e}", path.display())))?;
        Self::read(f)
    }

    pub fn header(&self) -> EmbeddingFileHeader {
        self.header
    }

    pub fn ids(&self) -> &[ImageId] {
        &self.ids
    }

    /// Raw f32 vector as stored.
    pub fn raw(&self, id: &ImageId, segment: Segment, layer: usize) -> Result<&[f32]> {
        let rec = *self
            .index
            .get(id)
            .ok_or_else(|| Error::MissingKey(format!("image {id}")))?;
        let s = self.header.s as usize;
        let seg = match (segment, s) {
            (Segment::Whole, 1) => 0,
            (Segment::Part(i), 5) if i < 5 => i,
            _ => return Err(Error::MissingKey(format!("{segment:?} of {id} (file has s={s})"))),
        };
        let l = self.header.l as usize;
        if layer >= l {
            return Err(Error::MissingKey(format!("layer {layer} of {id} (file has l={l})")));
        }
        let e = self.header.e as usize;
        let start = ((rec * s + seg) * l + layer) * e;
        Ok(&self.values[start..start + e])
    }
}

impl EmbeddingProvider for FileEmbeddingProvider {
    fn layer_dims(&self) -> Vec<usize> {
        vec![self.header.e as usize; self.header.l as usize]
    }

    fn embed(&self, id: &ImageId, segment: Segment, layer: usize) -> Result<Embedding> {
        let raw = self.raw(id, segment, layer)?;
        Embedding::new(raw.iter().map(|&v| v as f64).collect(), format!("file/{id}/{segment:?}/{layer}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> (EmbeddingFileHeader, Vec<(ImageId, Vec<f32>)>) {
        let header = EmbeddingFileHeader { records: 2, e: 3, s: 5, l: 2 };
        let rows = (0..2u64)
            .map(|r| {
                let vals = (0..30).map(|i| (r * 100 + i) as f32 * 0.37 - 1.5e-7).collect();
                (ImageId::synthetic(r, 9), vals)
            })
            .collect();
        (header, rows)
    }

    #[test]
    fn round_trip_bit_exact() {
        let (header, rows) = sample();
        let mut buf = Vec::new();
        write_embedding_file(&mut buf, header, rows.iter().map(|(id, v)| (*id, v.as_slice()))).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        assert_eq!(buf.len(), 8 + 16 + 2 * (16 + 30 * 4));
        let p = FileEmbeddingProvider::read(buf.as_slice()).unwrap();
        assert_eq!(p.layer_dims(), vec![3, 3]);
        for (id, vals) in &rows {
            for seg in 0..5 {
                for layer in 0..2 {
                    let got = p.raw(id, Segment::Part(seg), layer).unwrap();
                    let start = (seg * 2 + layer) * 3;
                    let want = &vals[start..start + 3];
                    assert!(got.iter().zip(want).all(|(a, b)| a.to_bits() == b.to_bits()));
                }
            }
        }
        assert!(matches!(p.embed(&rows[0].0, Segment::Whole, 0), Err(Error::MissingKey(_))));
        assert!(matches!(p.embed(&ImageId::synthetic(7, 7), Segment::Part(0), 0), Err(Error::MissingKey(_))));
    }

    #[test]
    fn malformed_inputs() {
        let (header, rows) = sample();
        let mut buf = Vec::new();
        write_embedding_file(&mut buf, header, rows.iter().map(|(id, v)| (*id, v.as_slice()))).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(FileEmbeddingProvider::read(bad.as_slice()), Err(Error::MalformedFile(_))));
        assert!(matches!(
            FileEmbeddingProvider::read(&buf[..buf.len() - 1]),
            Err(Error::MalformedFile(_))
        ));
        let mut long = buf.clone();
        long.push(0);
        assert!(matches!(FileEmbeddingProvider::read(long.as_slice()), Err(Error::MalformedFile(_))));
        let mut bad_s = buf;
        bad_s[16..20].copy_from_slice(&3u32.to_le_bytes());
        assert!(matches!(FileEmbeddingProvider::read(bad_s.as_slice()), Err(Error::MalformedFile(_))));
    }

    #[test]
    fn record_count_must_match_header() {
        let (mut header, rows) = sample();
        header.records = 3;
        let r = write_embedding_file(Vec::new(), header, rows.iter().map(|(id, v)| (*id, v.as_slice())));
        assert!(r.is_err());
    }
}
