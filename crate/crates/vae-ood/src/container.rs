//! Self-describing tensor records: `{name, dtype, shape}` header then
//! little-endian values. Shared by the checkpoint container and one-off
//! debug dumps.

use crate::error::{Error, Result};
use crate::nn::Tensor;
use std::io::{Read, Write};
use std::path::Path;

const DTYPE_F32: u8 = 0;

pub(crate) fn write_record<W: Write>(
    out: &mut W,
    name: &str,
    shape: &[usize],
    data: &[f32],
) -> std::io::Result<()> {
    out.write_all(&(name.len() as u32).to_le_bytes())?;
    out.write_all(name.as_bytes())?;
    out.write_all(&[DTYPE_F32])?;
    out.write_all(&(shape.len() as u32).to_le_bytes())?;
    for &d in shape {
        out.write_all(&(d as u32).to_le_bytes())?;
    }
    for &v in data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_record<R: Read>(input: &mut R) -> std::io::Result<(String, Vec<usize>, Vec<f32>)> {
    let mut word = [0u8; 4];
    input.read_exact(&mut word)?;
    let mut name_bytes = vec![0u8; u32::from_le_bytes(word) as usize];
    input.read_exact(&mut name_bytes)?;
    let name = String::from_utf8(name_bytes)
        .map_err(|_| std::io::Error::other("tensor name not utf-8"))?;
    let mut dtype = [0u8; 1];
    input.read_exact(&mut dtype)?;
    if dtype[0] != DTYPE_F32 {
        return Err(std::io::Error::other("unsupported dtype"));
    }
    input.read_exact(&mut word)?;
    let ndim = u32::from_le_bytes(word) as usize;
    let mut shape = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        input.read_exact(&mut word)?;
        shape.push(u32::from_le_bytes(word) as usize);
    }
    let count: usize = shape.iter().product();
    let mut payload = vec![0u8; count * 4];
    input.read_exact(&mut payload)?;
    let data = payload
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((name, shape, data))
}

/// Dump one tensor to a standalone file (debugging aid).
pub fn dump_tensor(path: &Path, name: &str, tensor: &Tensor<f32>) -> Result<()> {
    let mut file = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(|e| Error::io(path, e))?,
    );
    write_record(&mut file, name, tensor.shape(), tensor.data()).map_err(|e| Error::io(path, e))
}

/// Read back a standalone tensor dump.
pub fn read_tensor(path: &Path) -> Result<(String, Tensor<f32>)> {
    let mut file = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| Error::io(path, e))?,
    );
    let (name, shape, data) = read_record(&mut file).map_err(|e| Error::io(path, e))?;
    Ok((name, Tensor::from_vec(&shape, data)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.tensor");
        let t = Tensor::from_vec(&[2, 3], vec![1.5f32, -0.25, 3.0, f32::MIN_POSITIVE, 0.0, -0.0])
            .unwrap();
        dump_tensor(&path, "debug.activations", &t).unwrap();
        let (name, back) = read_tensor(&path).unwrap();
        assert_eq!(name, "debug.activations");
        assert_eq!(back.shape(), t.shape());
        let bits_a: Vec<u32> = t.data().iter().map(|v| v.to_bits()).collect();
        let bits_b: Vec<u32> = back.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits_a, bits_b);
    }
}
