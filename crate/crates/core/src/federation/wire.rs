//! Framed binary encoding of [`ModelUpdate`] and a loopback TCP transport.
//!
//! Frame layout, little-endian throughout:
//!
//! ```text
//! u32 frame length (bytes after this field)
//! "FFUP" u16 version u32 client_id u32 round u64 sample_count u32 param_count
//! f64 × param_count
//! ```

use std::io::{Read, Write};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};

use super::{FedError, ModelUpdate};
use crate::trajgen::ClientId;

pub const UPDATE_MAGIC: &[u8; 4] = b"FFUP";
pub const UPDATE_VERSION: u16 = 1;

const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8 + 4;
/// Refuses frames claiming more parameters than any sane model holds.
const MAX_PARAMS: usize = 1 << 24;

pub fn encode_update(update: &ModelUpdate) -> Vec<u8> {
    let body = HEADER_LEN + 8 * update.params.len();
    let mut out = Vec::with_capacity(4 + body);
    out.extend_from_slice(&(body as u32).to_le_bytes());
    out.extend_from_slice(UPDATE_MAGIC);
    out.extend_from_slice(&UPDATE_VERSION.to_le_bytes());
    out.extend_from_slice(&u32::from(update.client_id.number()).to_le_bytes());
    out.extend_from_slice(&update.round.to_le_bytes());
    out.extend_from_slice(&update.sample_count.to_le_bytes());
    out.extend_from_slice(&(update.params.len() as u32).to_le_bytes());
    for p in &update.params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

/// Decodes one complete frame, length prefix included.
pub fn decode_update(frame: &[u8]) -> Result<ModelUpdate, FedError> {
    let bad = |m: &str| FedError::BadFrame(m.to_string());
    if frame.len() < 4 {
        return Err(bad("truncated length prefix"));
    }
    let body_len = u32::from_le_bytes(frame[..4].try_into().unwrap()) as usize;
    let body = &frame[4..];
    if body.len() != body_len {
        return Err(bad("length prefix does not match frame size"));
    }
    decode_body(body)
}

fn decode_body(body: &[u8]) -> Result<ModelUpdate, FedError> {
    let bad = |m: String| FedError::BadFrame(m);
    if body.len() < HEADER_LEN {
        return Err(bad("truncated header".into()));
    }
    if &body[..4] != UPDATE_MAGIC {
        return Err(bad("bad magic".into()));
    }
    let u16_at = |i: usize| u16::from_le_bytes(body[i..i + 2].try_into().unwrap());
    let u32_at = |i: usize| u32::from_le_bytes(body[i..i + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != UPDATE_VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let client = u32_at(6);
    let client_id = u8::try_from(client)
        .ok()
        .and_then(ClientId::new)
        .ok_or_else(|| bad(format!("unknown client {client}")))?;
    let round = u32_at(10);
    let sample_count = u64::from_le_bytes(body[14..22].try_into().unwrap());
    let count = u32_at(22) as usize;
    if body.len() != HEADER_LEN + 8 * count {
        return Err(bad(format!("{count} parameters do not fit a {}-byte frame", body.len())));
    }
    let params = body[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ModelUpdate {
        client_id,
        round,
        sample_count,
        params,
    })
}

pub fn write_update<W: Write>(update: &ModelUpdate, mut out: W) -> Result<(), FedError> {
    out.write_all(&encode_update(update))?;
    out.flush()?;
    Ok(())
}

/// Reads the next frame from a stream.
pub fn read_update<R: Read>(mut input: R) -> Result<ModelUpdate, FedError> {
    let mut len = [0u8; 4];
    input.read_exact(&mut len)?;
    let body_len = u32::from_le_bytes(len) as usize;
    if body_len < HEADER_LEN || body_len > HEADER_LEN + 8 * MAX_PARAMS {
        return Err(FedError::BadFrame(format!("implausible frame length {body_len}")));
    }
    let mut body = vec![0u8; body_len];
    input.read_exact(&mut body)?;
    decode_body(&body)
}

/// Connects to a collecting server and sends one update.
pub fn send_update<A: ToSocketAddrs>(addr: A, update: &ModelUpdate) -> Result<(), FedError> {
    let stream = TcpStream::connect(addr)?;
    write_update(update, stream)
}

/// Server side of the loopback transport: each client connection carries
/// exactly one update frame.
pub struct UpdateListener {
    listener: TcpListener,
}

impl UpdateListener {
    /// Binds an ephemeral port on the loopback interface.
    pub fn bind_loopback() -> Result<Self, FedError> {
        Ok(Self {
            listener: TcpListener::bind(("127.0.0.1", 0))?,
        })
    }

    pub fn local_addr(&self) -> Result<SocketAddr, FedError> {
        Ok(self.listener.local_addr()?)
    }

    /// Blocks until `n` updates have arrived. This is the round barrier.
    pub fn collect(&self, n: usize) -> Result<Vec<ModelUpdate>, FedError> {
        (0..n)
            .map(|_| {
                let (stream, _) = self.listener.accept()?;
                read_update(stream)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ModelUpdate {
        ModelUpdate {
            client_id: ClientId::new(11).unwrap(),
            round: 4,
            sample_count: 183,
            params: vec![0.5, -1.25, f64::MIN_POSITIVE, 1e300],
        }
    }

    #[test]
    fn header_layout() {
        let bytes = encode_update(&sample());
        assert_eq!(&bytes[..4], &((HEADER_LEN + 32) as u32).to_le_bytes());
        assert_eq!(&bytes[4..8], b"FFUP");
        assert_eq!(&bytes[8..10], &1u16.to_le_bytes());
        assert_eq!(&bytes[10..14], &11u32.to_le_bytes());
        assert_eq!(&bytes[14..18], &4u32.to_le_bytes());
        assert_eq!(&bytes[18..26], &183u64.to_le_bytes());
        assert_eq!(&bytes[26..30], &4u32.to_le_bytes());
        assert_eq!(&bytes[30..38], &0.5f64.to_le_bytes());
        assert_eq!(bytes.len(), 4 + HEADER_LEN + 32);
    }

    #[test]
    fn roundtrip_is_bit_exact() {
        let u = sample();
        assert_eq!(decode_update(&encode_update(&u)).unwrap(), u);
        let mut buf = Vec::new();
        write_update(&u, &mut buf).unwrap();
        write_update(&u, &mut buf).unwrap();
        let mut cursor = &buf[..];
        assert_eq!(read_update(&mut cursor).unwrap(), u);
        assert_eq!(read_update(&mut cursor).unwrap(), u);
    }

    #[test]
    fn corrupt_frames_are_rejected() {
        let good = encode_update(&sample());
        let mut magic = good.clone();
        magic[4] = b'X';
        assert!(decode_update(&magic).is_err());
        let mut client = good.clone();
        client[10] = 13;
        assert!(decode_update(&client).is_err());
        assert!(decode_update(&good[..good.len() - 1]).is_err());
        let mut version = good;
        version[8] = 9;
        assert!(decode_update(&version).is_err());
    }
}
