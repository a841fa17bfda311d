//! Precomputed embedding store (`.vfce`).
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "VFCE" | version u32 | dim u32 | count u64 | dtype u8 (0 = f32)
//! count * dim f32 values, row-major
//! count keys, each u32 byte length + UTF-8 bytes
//! ```

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{
    check_batch_dims, check_dim, check_text_batch, EmbeddingError, EmbeddingProvider,
    EmbeddingVector, ProviderDescriptor, ProviderKind, Result, TextEmbedder,
};
use crate::codec;
use crate::index::CaptionRecord;

pub const STORE_MAGIC: &[u8; 4] = b"VFCE";
pub const STORE_VERSION: u32 = 1;
const DTYPE_F32: u8 = 0;

/// Key → vector table. Keys are caption ids, image refs, or literal texts.
#[derive(Debug, Clone)]
pub struct EmbeddingStore {
    descriptor: ProviderDescriptor,
    keys: Vec<String>,
    data: Vec<f32>,
    lookup: HashMap<String, usize>,
}

impl PartialEq for EmbeddingStore {
    fn eq(&self, other: &Self) -> bool {
        self.dim() == other.dim()
            && self.keys == other.keys
            && self.data.len() == other.data.len()
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingStore {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(EmbeddingError::EmptyInput);
        }
        Ok(Self {
            descriptor: ProviderDescriptor {
                kind: ProviderKind::PrecomputedStore,
                dim,
                identity: "precomputed".to_string(),
            },
            keys: Vec::new(),
            data: Vec::new(),
            lookup: HashMap::new(),
        })
    }

    pub fn with_identity(mut self, identity: impl Into<String>) -> Self {
        self.descriptor.identity = identity.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.descriptor.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    /// Row-major `len() * dim()` payload.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn contains(&self, key: &str) -> bool {
        self.lookup.contains_key(key)
    }

    pub fn insert(&mut self, key: impl Into<String>, values: &[f32]) -> Result<()> {
        let key = key.into();
        check_dim(self.dim(), values.len())?;
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite(pos));
        }
        if self.lookup.contains_key(&key) {
            return Err(EmbeddingError::DuplicateKey(key));
        }
        self.lookup.insert(key.clone(), self.keys.len());
        self.keys.push(key);
        self.data.extend_from_slice(values);
        Ok(())
    }

    pub fn insert_vector(&mut self, key: impl Into<String>, v: &EmbeddingVector) -> Result<()> {
        self.insert(key, &v.to_f32())
    }

    pub fn row(&self, key: &str) -> Option<&[f32]> {
        let dim = self.dim();
        self.lookup.get(key).map(|&i| &self.data[i * dim..(i + 1) * dim])
    }

    pub fn get(&self, key: &str) -> Option<EmbeddingVector> {
        self.row(key).and_then(|r| EmbeddingVector::from_f32(r).ok())
    }

    pub fn write_to(&self, w: &mut impl Write) -> io::Result<()> {
        w.write_all(STORE_MAGIC)?;
        codec::write_u32(w, STORE_VERSION)?;
        codec::write_u32(w, self.dim() as u32)?;
        codec::write_u64(w, self.keys.len() as u64)?;
        codec::write_u8(w, DTYPE_F32)?;
        codec::write_f32s(w, &self.data)?;
        for key in &self.keys {
            codec::write_str(w, key)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let corrupt = |e: io::Error| match e.kind() {
            io::ErrorKind::UnexpectedEof => EmbeddingError::CorruptStore("truncated".into()),
            io::ErrorKind::InvalidData => EmbeddingError::CorruptStore(e.to_string()),
            _ => EmbeddingError::Io(e),
        };
        let magic = codec::read_array::<4>(r).map_err(corrupt)?;
        if &magic != STORE_MAGIC {
            return Err(EmbeddingError::CorruptStore("bad magic".into()));
        }
        let version = codec::read_u32(r).map_err(corrupt)?;
        if version != STORE_VERSION {
            return Err(EmbeddingError::CorruptStore(format!("unsupported version {version}")));
        }
        let dim = codec::read_u32(r).map_err(corrupt)? as usize;
        let count = codec::read_u64(r).map_err(corrupt)?;
        let dtype = codec::read_u8(r).map_err(corrupt)?;
        if dtype != DTYPE_F32 {
            return Err(EmbeddingError::CorruptStore(format!("unsupported dtype {dtype}")));
        }
        if dim == 0 {
            return Err(EmbeddingError::CorruptStore("zero dimension".into()));
        }
        let total = usize::try_from(count)
            .ok()
            .and_then(|c| c.checked_mul(dim))
            .ok_or_else(|| EmbeddingError::CorruptStore("count overflow".into()))?;
        let data = codec::read_f32s(r, total).map_err(corrupt)?;
        let mut store = Self::new(dim)?;
        store.data.reserve(total);
        for i in 0..count as usize {
            let key = codec::read_str(r).map_err(corrupt)?;
            store
                .insert(key, &data[i * dim..(i + 1) * dim])
                .map_err(|e| EmbeddingError::CorruptStore(e.to_string()))?;
        }
        Ok(store)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut r = BufReader::new(File::open(path)?);
        let store = Self::read_from(&mut r)?;
        if r.read(&mut [0u8; 1])? != 0 {
            return Err(EmbeddingError::CorruptStore("trailing bytes".into()));
        }
        Ok(store.with_identity(path.display().to_string()))
    }

    fn lookup_text(&self, key: &str) -> Result<EmbeddingVector> {
        self.get(key)
            .ok_or_else(|| EmbeddingError::UnknownText(key.to_string()))
    }
}

impl TextEmbedder for EmbeddingStore {
    fn descriptor(&self) -> &ProviderDescriptor {
        &self.descriptor
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        check_text_batch(texts)?;
        let out = texts
            .iter()
            .map(|t| self.lookup_text(t))
            .collect::<Result<Vec<_>>>()?;
        check_batch_dims(&out, self.dim())?;
        Ok(out)
    }
}

impl EmbeddingProvider for EmbeddingStore {
    fn embed_image(&self, image_ref: &str) -> Result<EmbeddingVector> {
        self.get(image_ref)
            .ok_or_else(|| EmbeddingError::UnknownImageRef(image_ref.to_string()))
    }

    /// Captions resolve by id first, then by literal text.
    fn embed_captions(&self, records: &[CaptionRecord]) -> Result<Vec<EmbeddingVector>> {
        if records.is_empty() {
            return Err(EmbeddingError::EmptyInput);
        }
        records
            .iter()
            .map(|r| {
                self.get(&r.id)
                    .or_else(|| self.get(&r.text))
                    .ok_or_else(|| EmbeddingError::UnknownText(r.id.clone()))
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store() -> EmbeddingStore {
        let mut s = EmbeddingStore::new(2).unwrap();
        s.insert("dog", &[1.0, 0.0]).unwrap();
        s.insert("cat", &[0.0, 1.0]).unwrap();
        s.insert("img_001", &[0.6, 0.8]).unwrap();
        s
    }

    #[test]
    fn lookup_identity() {
        let s = store();
        let out = s.embed_texts(&["dog".to_string()]).unwrap();
        assert_eq!(out[0].values(), &[1.0, 0.0]);
        let img = s.embed_image("img_001").unwrap();
        assert_eq!(img.to_f32(), vec![0.6f32, 0.8]);
    }

    #[test]
    fn errors() {
        let s = store();
        assert!(matches!(s.embed_texts(&[]), Err(EmbeddingError::EmptyInput)));
        assert!(matches!(s.embed_texts(&["  ".into()]), Err(EmbeddingError::EmptyInput)));
        assert!(matches!(
            s.embed_image("missing"),
            Err(EmbeddingError::UnknownImageRef(_))
        ));
        let mut s = s;
        assert!(matches!(
            s.insert("dog", &[0.0, 0.0]),
            Err(EmbeddingError::DuplicateKey(_))
        ));
        assert!(matches!(
            s.insert("x", &[0.0]),
            Err(EmbeddingError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn order_is_preserved() {
        let s = store();
        let a = s.embed_texts(&["cat".into(), "dog".into()]).unwrap();
        let b = s.embed_texts(&["dog".into(), "cat".into()]).unwrap();
        assert_eq!(a[0], b[1]);
        assert_eq!(a[1], b[0]);
    }

    #[test]
    fn binary_layout() {
        let mut s = EmbeddingStore::new(1).unwrap();
        s.insert("ab", &[1.5]).unwrap();
        let mut buf = Vec::new();
        s.write_to(&mut buf).unwrap();
        let mut expected = b"VFCE".to_vec();
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u32.to_le_bytes());
        expected.extend_from_slice(&1u64.to_le_bytes());
        expected.push(0);
        expected.extend_from_slice(&1.5f32.to_le_bytes());
        expected.extend_from_slice(&2u32.to_le_bytes());
        expected.extend_from_slice(b"ab");
        assert_eq!(buf, expected);
        let back = EmbeddingStore::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn truncated_and_bad_magic() {
        let mut buf = Vec::new();
        store().write_to(&mut buf).unwrap();
        for cut in [3, 10, 25, buf.len() - 1] {
            assert!(matches!(
                EmbeddingStore::read_from(&mut &buf[..cut]),
                Err(EmbeddingError::CorruptStore(_))
            ));
        }
        buf[0] = b'X';
        assert!(matches!(
            EmbeddingStore::read_from(&mut buf.as_slice()),
            Err(EmbeddingError::CorruptStore(_))
        ));
    }
}
