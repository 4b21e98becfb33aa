//! Flat binary value blocks shared by the dataset and model containers:
//! little-endian 64-bit floats, row-major, next to a JSON manifest that
//! records the expected element count.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

pub fn write_f64_block(path: &Path, values: &[f64]) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    for v in values {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

/// Read a block, validating its byte size against the expected element
/// count from the manifest.
pub fn read_f64_block(path: &Path, expected_len: usize) -> Result<Vec<f64>> {
    let file = File::open(path)?;
    let actual = file.metadata()?.len();
    let expected_bytes = expected_len as u64 * 8;
    if actual != expected_bytes {
        return Err(Error::Data(format!(
            "block {} holds {actual} bytes, manifest expects {expected_bytes}",
            path.display()
        )));
    }
    let mut reader = BufReader::new(file);
    let mut values = Vec::with_capacity(expected_len);
    let mut buf = [0u8; 8];
    for _ in 0..expected_len {
        reader.read_exact(&mut buf)?;
        values.push(f64::from_le_bytes(buf));
    }
    Ok(values)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f64");
        let values = vec![0.1, -3.5e300, f64::MIN_POSITIVE, 42.0, -0.0];
        write_f64_block(&path, &values).unwrap();
        let back = read_f64_block(&path, values.len()).unwrap();
        for (a, b) in values.iter().zip(&back) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn size_mismatch_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.f64");
        write_f64_block(&path, &[1.0, 2.0, 3.0]).unwrap();
        let err = read_f64_block(&path, 4).unwrap_err();
        assert!(err.to_string().contains("bytes"), "{err}");
    }
}
