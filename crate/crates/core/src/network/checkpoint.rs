//! Binary checkpoint layout (all integers and floats little-endian):
//!
//! ```text
//! magic        8 bytes  "REFCALNN"
//! version      u32      1
//! layers       u64      number of encoder layers L
//! shapes       (L + 2) × (out u64, in u64)   encoder..., projection, classifier
//! temperature  f64
//! payload      f64 × P  NetworkParams::flatten order
//! ```

use std::io::{Read, Write};
use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Dense, NetworkParams};
use crate::error::{RefcalError, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"REFCALNN";
const VERSION: u32 = 1;

pub fn write_checkpoint(params: &NetworkParams, out: &mut impl Write) -> Result<()> {
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&(params.encoder.len() as u64).to_le_bytes())?;
    for block in params.encoder.iter().chain([&params.projection, &params.classifier]) {
        out.write_all(&(block.out_dim() as u64).to_le_bytes())?;
        out.write_all(&(block.in_dim() as u64).to_le_bytes())?;
    }
    out.write_all(&params.temperature.to_le_bytes())?;
    for v in params.flatten() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn take<const N: usize>(bytes: &[u8], pos: &mut usize) -> Result<[u8; N]> {
    let end = *pos + N;
    let chunk = bytes
        .get(*pos..end)
        .ok_or_else(|| RefcalError::Checkpoint(format!("truncated at byte {}", *pos)))?;
    *pos = end;
    Ok(chunk.try_into().expect("length checked"))
}

pub fn read_checkpoint(input: &mut impl Read) -> Result<NetworkParams> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut pos = 0;
    if &take::<8>(&bytes, &mut pos)? != CHECKPOINT_MAGIC {
        return Err(RefcalError::Checkpoint("bad magic".into()));
    }
    let version = u32::from_le_bytes(take(&bytes, &mut pos)?);
    if version != VERSION {
        return Err(RefcalError::Checkpoint(format!("unsupported version {version}")));
    }
    let layers = u64::from_le_bytes(take(&bytes, &mut pos)?) as usize;
    if layers > 1024 {
        return Err(RefcalError::Checkpoint(format!("implausible layer count {layers}")));
    }
    let mut blocks = Vec::with_capacity(layers + 2);
    for _ in 0..layers + 2 {
        let out_dim = u64::from_le_bytes(take(&bytes, &mut pos)?) as usize;
        let in_dim = u64::from_le_bytes(take(&bytes, &mut pos)?) as usize;
        if out_dim.saturating_mul(in_dim) > bytes.len() {
            return Err(RefcalError::Checkpoint("block larger than file".into()));
        }
        blocks.push(Dense { weight: Array2::zeros((out_dim, in_dim)), bias: Array1::zeros(out_dim) });
    }
    let temperature = f64::from_le_bytes(take(&bytes, &mut pos)?);
    let classifier = blocks.pop().expect("two heads");
    let projection = blocks.pop().expect("two heads");
    let mut params = NetworkParams { encoder: blocks, projection, classifier, temperature };
    let count = params.num_scalars();
    if bytes.len() - pos != count * 8 {
        return Err(RefcalError::Checkpoint(format!(
            "payload has {} bytes, expected {}",
            bytes.len() - pos,
            count * 8
        )));
    }
    let values: Vec<f64> = bytes[pos..].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    params.set_flat(&values)?;
    params.validate().map_err(|e| RefcalError::Checkpoint(e.to_string()))?;
    Ok(params)
}

pub fn save_checkpoint(params: &NetworkParams, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<NetworkParams> {
    read_checkpoint(&mut std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Architecture;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut p = NetworkParams::init(&Architecture::desk(6, 4), 11);
        p.temperature = 1.2345678901234567;
        p.classifier.bias[2] = -0.0;
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        let q = read_checkpoint(&mut buf.as_slice()).unwrap();
        assert_eq!(p.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
                   q.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(p.temperature.to_bits(), q.temperature.to_bits());
        let mut again = Vec::new();
        write_checkpoint(&q, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let p = NetworkParams::init(&Architecture::desk(2, 2), 1);
        let mut buf = Vec::new();
        write_checkpoint(&p, &mut buf).unwrap();
        assert!(read_checkpoint(&mut &buf[..buf.len() - 3]).is_err());
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(read_checkpoint(&mut bad.as_slice()).is_err());
    }
}
