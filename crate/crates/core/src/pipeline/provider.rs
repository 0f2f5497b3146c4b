//! Embedding providers and labeled corpora.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::types::Embedding;

/// 16-byte image key. Synthetic ids pack the object id and the capture
/// index as two little-endian u64 halves.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ImageId(pub [u8; 16]);

impl ImageId {
    pub fn synthetic(object: u64, capture: u64) -> Self {
        let mut b = [0u8; 16];
        b[..8].copy_from_slice(&object.to_le_bytes());
        b[8..].copy_from_slice(&capture.to_le_bytes());
        ImageId(b)
    }

    pub fn object_part(&self) -> u64 {
        u64::from_le_bytes(self.0[..8].try_into().expect("8 bytes"))
    }

    pub fn capture_part(&self) -> u64 {
        u64::from_le_bytes(self.0[8..].try_into().expect("8 bytes"))
    }
}

impl fmt::Display for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for ImageId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ImageId({self})")
    }
}

impl FromStr for ImageId {
    type Err = Error;

    /// Accepts 32 hex digits or `object:capture` in decimal.
    fn from_str(s: &str) -> Result<Self> {
        if let Some((o, c)) = s.split_once(':') {
            let parse = |x: &str| {
                x.trim()
                    .parse::<u64>()
                    .map_err(|_| Error::Config(format!("bad image id {s:?}: expected object:capture")))
            };
            return Ok(ImageId::synthetic(parse(o)?, parse(c)?));
        }
        let bytes = hex::decode(s.trim()).map_err(|_| Error::Config(format!("bad image id {s:?}: not hex")))?;
        let arr: [u8; 16] = bytes
            .try_into()
            .map_err(|_| Error::Config(format!("bad image id {s:?}: need 16 bytes")))?;
        Ok(ImageId(arr))
    }
}

impl Serialize for ImageId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for ImageId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Which crop an embedding describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Segment {
    Whole,
    /// Index into the five-segment geometry.
    Part(usize),
}

impl Segment {
    /// Segment `i` of a pipeline with `s` segments.
    pub fn of(s: usize, i: usize) -> Segment {
        if s == 1 {
            Segment::Whole
        } else {
            Segment::Part(i)
        }
    }
}

/// Source of per-(image, segment, layer) feature vectors. Implementations
/// are deterministic and safe to call concurrently.
pub trait EmbeddingProvider: Send + Sync {
    /// Embedding length of each layer.
    fn layer_dims(&self) -> Vec<usize>;

    fn embed(&self, id: &ImageId, segment: Segment, layer: usize) -> Result<Embedding>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Attack,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Attack => "attack",
        })
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            "attack" => Ok(Split::Attack),
            other => Err(Error::Config(format!("unknown split {other:?} (expected train, test or attack)"))),
        }
    }
}

/// One labeled image. Two entries show the same object iff their
/// `object` fields are equal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: ImageId,
    pub object: u64,
    pub split: Split,
    /// Coarse object category, used to order guessing attacks.
    #[serde(default)]
    pub kind: u32,
}

pub fn select_split(corpus: &[CorpusEntry], split: Split) -> Vec<CorpusEntry> {
    corpus.iter().filter(|e| e.split == split).cloned().collect()
}

#[derive(Serialize, Deserialize)]
struct ManifestRow {
    id: String,
    object_id: u64,
    split: String,
    #[serde(default)]
    kind: Option<u32>,
}

/// Writes a CSV manifest with columns `id,object_id,split,kind`.
pub fn write_manifest(corpus: &[CorpusEntry], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in corpus {
        w.serialize(ManifestRow {
            id: e.id.to_string(),
            object_id: e.object,
            split: e.split.to_string(),
            kind: Some(e.kind),
        })
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a CSV manifest; the `kind` column is optional.
pub fn read_manifest(input: impl Read) -> Result<Vec<CorpusEntry>> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (line, row) in r.deserialize::<ManifestRow>().enumerate() {
        let row = row.map_err(|e| Error::Config(format!("manifest row {}: {e}", line + 1)))?;
        out.push(CorpusEntry {
            id: row.id.parse()?,
            object: row.object_id,
            split: row.split.parse()?,
            kind: row.kind.unwrap_or(0),
        });
    }
    Ok(out)
}

pub fn load_manifest(path: &Path) -> Result<Vec<CorpusEntry>> {
    let f = std::fs::File::open(path)
        .map_err(|e| Error::Config(format!("cannot open manifest {}: {e}", path.display())))?;
    read_manifest(std::io::BufReader::new(f))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}
