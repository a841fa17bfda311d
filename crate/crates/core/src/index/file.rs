//! Index file (`.vfci`).
//!
//! ```text
//! "VFCI" | version u32 | body | crc32(body) u32
//! body := embedding-store payload (keys = record ids, unit rows)
//!         provider identity (u32 len + UTF-8)
//!         per record: text, source (u32 len + UTF-8 each)
//!         structure u8 (0 = flat, 1 = partitioned)
//!         [partitioned] count u32, centroids count*dim f32,
//!                       per partition: member count u32, member rows u32...
//! ```

use std::fs::File;
use std::io::{self, BufWriter, Cursor, Read, Write};
use std::path::Path;

use super::partition::Partitions;
use super::{CaptionIndex, CaptionRecord, IndexError, Result};
use crate::codec;
use crate::embedding::{EmbeddingError, EmbeddingStore};

pub const INDEX_MAGIC: &[u8; 4] = b"VFCI";
pub const INDEX_VERSION: u32 = 1;

const STRUCT_FLAT: u8 = 0;
const STRUCT_PARTITIONED: u8 = 1;

impl CaptionIndex {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut body = Vec::new();
        self.write_body(&mut body)?;
        let mut out = Vec::with_capacity(body.len() + 12);
        out.extend_from_slice(INDEX_MAGIC);
        codec::write_u32(&mut out, INDEX_VERSION)?;
        let crc = crc32fast::hash(&body);
        out.extend_from_slice(&body);
        codec::write_u32(&mut out, crc)?;
        Ok(out)
    }

    fn write_body(&self, w: &mut Vec<u8>) -> Result<()> {
        let mut store = EmbeddingStore::new(self.dim)?;
        for (i, r) in self.records.iter().enumerate() {
            store.insert(r.id.clone(), self.row(i))?;
        }
        store.write_to(w)?;
        codec::write_str(w, &self.provider_identity)?;
        for r in &self.records {
            codec::write_str(w, &r.text)?;
            codec::write_str(w, &r.source)?;
        }
        match &self.partitions {
            None => codec::write_u8(w, STRUCT_FLAT)?,
            Some(p) => {
                codec::write_u8(w, STRUCT_PARTITIONED)?;
                codec::write_u32(w, p.len() as u32)?;
                codec::write_f32s(w, &p.centroids)?;
                for m in &p.members {
                    codec::write_u32(w, m.len() as u32)?;
                    for &i in m {
                        codec::write_u32(w, i)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 12 {
            return Err(corrupt("truncated header"));
        }
        if &bytes[..4] != INDEX_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
        if version != INDEX_VERSION {
            return Err(corrupt(&format!("unsupported version {version}")));
        }
        let (body, tail) = bytes[8..].split_at(bytes.len() - 12);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("checksum mismatch"));
        }
        let mut cur = Cursor::new(body);
        let index = read_body(&mut cur)?;
        if (cur.position() as usize) != body.len() {
            return Err(corrupt("trailing bytes in body"));
        }
        Ok(index)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes()?)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let mut bytes = Vec::new();
        File::open(path)?.read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes)
    }
}

fn corrupt(msg: &str) -> IndexError {
    IndexError::CorruptFile(msg.to_string())
}

fn io_corrupt(e: io::Error) -> IndexError {
    match e.kind() {
        io::ErrorKind::UnexpectedEof => corrupt("truncated body"),
        _ => corrupt(&e.to_string()),
    }
}

fn read_body(r: &mut Cursor<&[u8]>) -> Result<CaptionIndex> {
    let store = EmbeddingStore::read_from(r).map_err(|e| match e {
        EmbeddingError::CorruptStore(m) => corrupt(&m),
        other => IndexError::Embedding(other),
    })?;
    let dim = store.dim();
    let count = store.len();
    if count == 0 {
        return Err(corrupt("no records"));
    }
    let provider_identity = codec::read_str(r).map_err(io_corrupt)?;
    let mut records = Vec::with_capacity(count);
    for id in store.keys() {
        let text = codec::read_str(r).map_err(io_corrupt)?;
        let source = codec::read_str(r).map_err(io_corrupt)?;
        records.push(CaptionRecord {
            id: id.clone(),
            text,
            source,
        });
    }
    let vectors = store.data().to_vec();
    for row in vectors.chunks(dim) {
        let norm = row.iter().map(|&x| (x as f64).powi(2)).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-5 {
            return Err(corrupt("row not unit-normalized"));
        }
    }
    let partitions = match codec::read_u8(r).map_err(io_corrupt)? {
        STRUCT_FLAT => None,
        STRUCT_PARTITIONED => Some(read_partitions(r, dim, count)?),
        other => return Err(corrupt(&format!("unknown structure tag {other}"))),
    };
    Ok(CaptionIndex {
        dim,
        records,
        vectors,
        partitions,
        provider_identity,
    })
}

fn read_partitions(r: &mut Cursor<&[u8]>, dim: usize, count: usize) -> Result<Partitions> {
    let k = codec::read_u32(r).map_err(io_corrupt)? as usize;
    if k == 0 || k > count {
        return Err(corrupt("invalid partition count"));
    }
    let centroids = codec::read_f32s(r, k * dim).map_err(io_corrupt)?;
    let mut seen = vec![false; count];
    let mut members = Vec::with_capacity(k);
    for _ in 0..k {
        let len = codec::read_u32(r).map_err(io_corrupt)? as usize;
        if len > count {
            return Err(corrupt("partition larger than corpus"));
        }
        let mut m = Vec::with_capacity(len);
        for _ in 0..len {
            let i = codec::read_u32(r).map_err(io_corrupt)?;
            let slot = seen
                .get_mut(i as usize)
                .ok_or_else(|| corrupt("member out of range"))?;
            if *slot {
                return Err(corrupt("record in more than one partition"));
            }
            *slot = true;
            m.push(i);
        }
        members.push(m);
    }
    if seen.iter().any(|s| !s) {
        return Err(corrupt("record missing from partitions"));
    }
    Ok(Partitions { centroids, members })
}

#[cfg(test)]
mod tests {
    use super::super::{BuildConfig, Probes};
    use super::*;
    use crate::embedding::EmbeddingVector;

    fn small(config: &BuildConfig) -> CaptionIndex {
        let records = vec![
            CaptionRecord::new("a", "a red car", "cc"),
            CaptionRecord::new("b", "a blue sky", "cc"),
            CaptionRecord::new("c", "ünïcode text", "wit"),
        ];
        let vectors = vec![
            EmbeddingVector::new(vec![1.0, 0.2, 0.0]).unwrap(),
            EmbeddingVector::new(vec![0.0, 1.0, 0.3]).unwrap(),
            EmbeddingVector::new(vec![0.1, 0.0, 1.0]).unwrap(),
        ];
        CaptionIndex::from_vectors(records, vectors, "unit-test", config).unwrap()
    }

    #[test]
    fn round_trip_flat_and_partitioned() {
        for cfg in [BuildConfig::default(), BuildConfig::partitioned(2)] {
            let idx = small(&cfg);
            let back = CaptionIndex::from_bytes(&idx.to_bytes().unwrap()).unwrap();
            assert_eq!(back, idx);
            assert_eq!(back.structure(), cfg.structure);
        }
    }

    #[test]
    fn save_load_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("idx.vfci");
        let idx = small(&BuildConfig::partitioned(2));
        idx.save(&path).unwrap();
        let back = CaptionIndex::load(&path).unwrap();
        let q = EmbeddingVector::new(vec![0.5, 0.5, 0.1]).unwrap();
        assert_eq!(
            idx.retrieve_topk(&q, 3, Probes::All).unwrap(),
            back.retrieve_topk(&q, 3, Probes::All).unwrap()
        );
    }

    #[test]
    fn corruption_detected() {
        let bytes = small(&BuildConfig::default()).to_bytes().unwrap();
        for cut in [0, 5, 11, 20, bytes.len() - 1] {
            assert!(
                matches!(CaptionIndex::from_bytes(&bytes[..cut]), Err(IndexError::CorruptFile(_))),
                "cut at {cut}"
            );
        }
        let mut flipped = bytes.clone();
        flipped[30] ^= 0xff;
        assert!(matches!(
            CaptionIndex::from_bytes(&flipped),
            Err(IndexError::CorruptFile(m)) if m.contains("checksum")
        ));
        let mut magic = bytes;
        magic[0] = b'Z';
        assert!(matches!(
            CaptionIndex::from_bytes(&magic),
            Err(IndexError::CorruptFile(m)) if m.contains("magic")
        ));
    }
}
