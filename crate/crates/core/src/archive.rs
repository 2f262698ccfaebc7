//! Binary snapshot archives.
//!
//! Layout, all little-endian:
//!
//! ```text
//! "ATRL1" | version u16 | model id u8 | D u32 | count u64 | count·D f64 | crc32 u32
//! ```
//!
//! The checksum covers everything before it.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{LabError, Result};
use crate::models::ModelId;
use crate::spectral::SpectralField;

pub const MAGIC: &[u8; 5] = b"ATRL1";
pub const FORMAT_VERSION: u16 = 1;
const HEADER_LEN: usize = 5 + 2 + 1 + 4 + 8;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotArchive {
    pub model_id: ModelId,
    pub dim: usize,
    pub rows: Vec<SpectralField>,
}

impl SnapshotArchive {
    pub fn new(model_id: ModelId, rows: Vec<SpectralField>) -> Result<Self> {
        let dim = rows.first().map_or(0, |r| r.len());
        if let Some(bad) = rows.iter().find(|r| r.len() != dim) {
            return Err(LabError::Dimension { expected: dim, got: bad.len() });
        }
        Ok(Self { model_id, dim, rows })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(HEADER_LEN + self.rows.len() * self.dim * 8 + 4);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.push(self.model_id.code());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.rows.len() as u64).to_le_bytes());
        for row in &self.rows {
            for x in &row.coeffs {
                buf.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&buf);
        buf.extend_from_slice(&crc.to_le_bytes());
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN + 4 {
            return Err(LabError::Integrity(format!("archive truncated at {} bytes", bytes.len())));
        }
        let (payload, footer) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(footer.try_into().expect("4-byte footer"));
        let actual = crc32fast::hash(payload);
        if stored != actual {
            return Err(LabError::Integrity(format!(
                "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        if &payload[..5] != MAGIC {
            return Err(LabError::Integrity("bad magic".into()));
        }
        let version = u16::from_le_bytes([payload[5], payload[6]]);
        if version != FORMAT_VERSION {
            return Err(LabError::Integrity(format!("unsupported format version {version}")));
        }
        let model_id = ModelId::from_code(payload[7])
            .ok_or_else(|| LabError::Integrity(format!("unknown model id {}", payload[7])))?;
        let dim = u32::from_le_bytes(payload[8..12].try_into().expect("u32")) as usize;
        let count = u64::from_le_bytes(payload[12..20].try_into().expect("u64"));
        let body = &payload[HEADER_LEN..];
        let expected = (count as u128) * (dim as u128) * 8;
        if body.len() as u128 != expected {
            return Err(LabError::Integrity(format!(
                "row count {count} with D = {dim} needs {expected} bytes, found {}",
                body.len()
            )));
        }
        let rows = if dim == 0 {
            vec![SpectralField::zeros(0); count as usize]
        } else {
            body.chunks_exact(dim * 8)
                .map(|row| {
                    SpectralField::new(
                        row.chunks_exact(8)
                            .map(|b| f64::from_le_bytes(b.try_into().expect("f64")))
                            .collect(),
                    )
                })
                .collect()
        };
        Ok(Self { model_id, dim, rows })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = fs::File::create(path)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> SnapshotArchive {
        SnapshotArchive::new(
            ModelId::Burgers1d,
            vec![
                SpectralField::new(vec![1.0, -0.0, f64::MIN_POSITIVE]),
                SpectralField::new(vec![1e300, 3.5, -2.25]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let a = sample();
        let b = SnapshotArchive::from_bytes(&a.to_bytes()).unwrap();
        for (x, y) in a.rows.iter().zip(&b.rows) {
            let xb: Vec<u64> = x.coeffs.iter().map(|v| v.to_bits()).collect();
            let yb: Vec<u64> = y.coeffs.iter().map(|v| v.to_bits()).collect();
            assert_eq!(xb, yb);
        }
        assert_eq!(b.model_id, ModelId::Burgers1d);
    }

    #[test]
    fn header_layout() {
        let bytes = sample().to_bytes();
        assert_eq!(&bytes[..5], b"ATRL1");
        assert_eq!(&bytes[5..7], &[1, 0]);
        assert_eq!(bytes[7], 1);
        assert_eq!(&bytes[8..12], &[3, 0, 0, 0]);
        assert_eq!(&bytes[12..20], &[2, 0, 0, 0, 0, 0, 0, 0]);
        assert_eq!(bytes.len(), 20 + 2 * 3 * 8 + 4);
    }

    #[test]
    fn corruption_is_detected() {
        let mut bytes = sample().to_bytes();
        bytes[25] ^= 0x10;
        assert!(matches!(SnapshotArchive::from_bytes(&bytes), Err(LabError::Integrity(_))));
        assert!(matches!(SnapshotArchive::from_bytes(&bytes[..10]), Err(LabError::Integrity(_))));
    }

    #[test]
    fn ragged_rows_rejected() {
        let rows = vec![SpectralField::zeros(2), SpectralField::zeros(3)];
        assert!(SnapshotArchive::new(ModelId::Nse2d, rows).is_err());
    }
}
