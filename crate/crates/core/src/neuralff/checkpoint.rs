//! Model checkpoints.
//!
//! Binary layout, all integers and floats little-endian:
//!
//! ```text
//! "FFNN" | u16 version (1) | u16 layer count
//! per layer: u32 rows | u32 cols
//! all weights (row-major, layer order) | all biases | per layer u then v   (f64)
//! ```
//!
//! The JSON mirror is the serde form of [`MlpModel`].

use std::io::{Read, Write};

use super::{Layer, MlpModel, NnError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"FFNN";
pub const CHECKPOINT_VERSION: u16 = 1;

pub fn write_checkpoint<W: Write>(model: &MlpModel, mut out: W) -> Result<(), NnError> {
    let count = u16::try_from(model.layers.len())
        .map_err(|_| NnError::InvalidModel("too many layers".into()))?;
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    out.write_all(&count.to_le_bytes())?;
    for l in &model.layers {
        for dim in [l.rows, l.cols] {
            let dim = u32::try_from(dim).map_err(|_| NnError::InvalidModel("layer too wide".into()))?;
            out.write_all(&dim.to_le_bytes())?;
        }
    }
    for x in model.flat() {
        out.write_all(&x.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut input: R) -> Result<MlpModel, NnError> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(NnError::BadCheckpoint(format!("magic {magic:?}")));
    }
    let version = read_u16(&mut input)?;
    if version != CHECKPOINT_VERSION {
        return Err(NnError::BadCheckpoint(format!("unsupported version {version}")));
    }
    let count = read_u16(&mut input)?;
    let mut layers = Vec::with_capacity(usize::from(count));
    for _ in 0..count {
        let rows = read_u32(&mut input)? as usize;
        let cols = read_u32(&mut input)? as usize;
        if rows == 0 || cols == 0 || rows * cols > 1 << 24 {
            return Err(NnError::BadCheckpoint(format!("layer shape {rows}x{cols}")));
        }
        layers.push(Layer::zeros(rows, cols));
    }
    let mut model = MlpModel { layers };
    let mut flat = vec![0.0; model.flat_len()];
    let mut buf = [0u8; 8];
    for x in &mut flat {
        input.read_exact(&mut buf)?;
        *x = f64::from_le_bytes(buf);
    }
    model.set_flat(&flat)?;
    model.validate()?;
    Ok(model)
}

pub fn write_checkpoint_json<W: Write>(model: &MlpModel, out: W) -> Result<(), NnError> {
    serde_json::to_writer_pretty(out, model)?;
    Ok(())
}

pub fn read_checkpoint_json<R: Read>(input: R) -> Result<MlpModel, NnError> {
    let model: MlpModel = serde_json::from_reader(input)?;
    model.validate()?;
    Ok(model)
}

fn read_u16<R: Read>(r: &mut R) -> Result<u16, NnError> {
    let mut b = [0u8; 2];
    r.read_exact(&mut b)?;
    Ok(u16::from_le_bytes(b))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32, NnError> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

#[cfg(test)]
mod tests {
    use super::super::{forward, init_model};
    use super::*;

    #[test]
    fn header_layout() {
        let m = init_model(10, 1);
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"FFNN");
        assert_eq!(u16::from_le_bytes([buf[4], buf[5]]), 1);
        assert_eq!(u16::from_le_bytes([buf[6], buf[7]]), 3);
        assert_eq!(u32::from_le_bytes(buf[8..12].try_into().unwrap()), 10);
        assert_eq!(u32::from_le_bytes(buf[12..16].try_into().unwrap()), 2);
        assert_eq!(buf.len(), 8 + 3 * 8 + 8 * m.flat_len());
        // first float is W1[0][0]
        assert_eq!(f64::from_le_bytes(buf[32..40].try_into().unwrap()), m.layers[0].weight[0]);
    }

    #[test]
    fn binary_roundtrip_is_bit_exact() {
        let m = init_model(10, 99);
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back, m);
        assert_eq!(forward(&back, 0.4, 0.9).to_bits(), forward(&m, 0.4, 0.9).to_bits());
    }

    #[test]
    fn json_roundtrip_is_exact() {
        let m = init_model(10, 98);
        let mut buf = Vec::new();
        write_checkpoint_json(&m, &mut buf).unwrap();
        assert_eq!(read_checkpoint_json(buf.as_slice()).unwrap(), m);
    }

    #[test]
    fn rejects_corrupt_input() {
        let m = init_model(4, 1);
        let mut buf = Vec::new();
        write_checkpoint(&m, &mut buf).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(NnError::BadCheckpoint(_))));
        let mut bad = buf.clone();
        bad[4] = 2;
        assert!(matches!(read_checkpoint(bad.as_slice()), Err(NnError::BadCheckpoint(_))));
        assert!(matches!(read_checkpoint(&buf[..buf.len() - 3]), Err(NnError::Io(_))));
    }
}
