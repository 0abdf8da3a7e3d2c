//! Tensor snapshot files: a little-endian header (`u32` rank, `u32` per
//! dimension) followed by the raw 32-bit values in row-major order. The
//! extension `.t32` marks the format.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use tscm_core::Tensor;

pub const EXTENSION: &str = "t32";

pub fn write(path: &Path, shape: &[usize], data: &[f32]) -> Result<()> {
    let count: usize = shape.iter().product();
    if count != data.len() {
        bail!(
            "snapshot shape covers {count} elements but {} were supplied",
            data.len()
        );
    }
    let mut bytes = Vec::with_capacity(4 * (1 + shape.len() + data.len()));
    bytes.extend_from_slice(&(shape.len() as u32).to_le_bytes());
    for &d in shape {
        let d = u32::try_from(d).context("snapshot dimension exceeds u32")?;
        bytes.extend_from_slice(&d.to_le_bytes());
    }
    for &v in data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

pub fn read(path: &Path) -> Result<(Vec<usize>, Vec<f32>)> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let word = |at: usize| -> Result<u32> {
        let end = at + 4;
        if end > bytes.len() {
            bail!("{}: truncated snapshot header", path.display());
        }
        Ok(u32::from_le_bytes(bytes[at..end].try_into().unwrap()))
    };
    let rank = word(0)? as usize;
    let mut shape = Vec::with_capacity(rank);
    for i in 0..rank {
        shape.push(word(4 * (1 + i))? as usize);
    }
    let count: usize = shape.iter().product();
    let body = 4 * (1 + rank);
    let expected = body + 4 * count;
    if bytes.len() != expected {
        bail!(
            "{}: snapshot holds {} bytes, header promises {expected}",
            path.display(),
            bytes.len()
        );
    }
    let data = bytes[body..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((shape, data))
}

pub fn write_tensor(path: &Path, tensor: &Tensor<f32>) -> Result<()> {
    write(path, tensor.shape(), tensor.data())
}

pub fn read_tensor(path: &Path) -> Result<Tensor<f32>> {
    let (shape, data) = read(path)?;
    Tensor::new(&shape, data).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_shapes_and_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.t32");
        let data: Vec<f32> = (0..24).map(|i| i as f32 * 0.5 - 3.0).collect();
        write(&path, &[2, 3, 4], &data).unwrap();
        let (shape, back) = read(&path).unwrap();
        assert_eq!(shape, vec![2, 3, 4]);
        assert_eq!(back, data);
    }

    #[test]
    fn header_is_little_endian_words() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.t32");
        write(&path, &[1, 2], &[1.0, -1.0]).unwrap();
        let bytes = fs::read(&path).unwrap();
        assert_eq!(&bytes[..12], &[2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(bytes.len(), 12 + 8);
        assert_eq!(&bytes[12..16], &1.0f32.to_le_bytes());
    }

    #[test]
    fn rejects_mismatched_payload() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.t32");
        assert!(write(&path, &[3], &[0.0; 2]).is_err());
        write(&path, &[3], &[0.0; 3]).unwrap();
        let mut bytes = fs::read(&path).unwrap();
        bytes.pop();
        fs::write(&path, bytes).unwrap();
        assert!(read(&path).is_err());
    }
}
