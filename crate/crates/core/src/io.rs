//! Flat binary f64 arrays (little-endian) and content hashing, shared by
//! the dataset and checkpoint directory formats.

use sha2::{Digest, Sha256};
use std::fs;
use std::path::Path;

use crate::error::{FieldError, Result};

pub fn write_f64_file(path: &Path, values: &[f64]) -> Result<()> {
    let mut bytes = Vec::with_capacity(values.len() * 8);
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_f64_file(path: &Path) -> Result<Vec<f64>> {
    let bytes = fs::read(path)?;
    if bytes.len() % 8 != 0 {
        return Err(FieldError::Truncated(format!(
            "{} has {} bytes, not a multiple of 8",
            path.display(),
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(hex::encode(hasher.finalize()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f64_roundtrip_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.f64");
        let vals = vec![1.0, -2.5, 1e-300, f64::MAX];
        write_f64_file(&p, &vals).unwrap();
        assert_eq!(read_f64_file(&p).unwrap(), vals);
        let h1 = sha256_file(&p).unwrap();
        write_f64_file(&p, &vals).unwrap();
        assert_eq!(sha256_file(&p).unwrap(), h1);

        fs::write(&p, b"12345").unwrap();
        assert!(matches!(read_f64_file(&p), Err(FieldError::Truncated(_))));
    }
}
