use super::crc::{crc_dnp, push_crc};
use super::CodecError;

pub const SYNC: [u8; 2] = [0x05, 0x64];
pub const HEADER_LEN: usize = 10;
pub const BLOCK_LEN: usize = 16;
pub const MAX_PAYLOAD: usize = 292;

/// Link control octet for a primary, master-originated unconfirmed user
/// data frame (DIR=1, PRM=1, FC=4).
pub const CONTROL_MASTER_DATA: u8 = 0xC4;
/// Same as [`CONTROL_MASTER_DATA`] from the outstation side (DIR=0).
pub const CONTROL_OUTSTATION_DATA: u8 = 0x44;

/// Addressing portion of a link header. The length octet and header CRC
/// are derived on encode and verified on decode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LinkHeader {
    pub control: u8,
    pub destination: u16,
    pub source: u16,
}

/// A decoded link frame with block CRCs stripped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DnpFrame {
    pub header: LinkHeader,
    pub payload: Vec<u8>,
}

/// Length octet for a payload of `payload_len` octets. Counts control,
/// destination, source and user data; saturates at 0xFF for the long
/// payloads the one-octet field cannot express.
fn length_octet(payload_len: usize) -> u8 {
    (5 + payload_len).min(0xFF) as u8
}

/// Total encoded size of a frame carrying `payload_len` octets.
pub fn framed_len(payload_len: usize) -> usize {
    HEADER_LEN + payload_len + 2 * payload_len.div_ceil(BLOCK_LEN)
}

/// Inverse of [`framed_len`] over the octets following the header.
fn payload_len_from_body(body_len: usize) -> Option<usize> {
    let full = body_len / (BLOCK_LEN + 2);
    match body_len % (BLOCK_LEN + 2) {
        0 => Some(full * BLOCK_LEN),
        1 | 2 => None,
        rest => Some(full * BLOCK_LEN + rest - 2),
    }
}

pub fn encode_frame(header: &LinkHeader, payload: &[u8]) -> Result<Vec<u8>, CodecError> {
    if payload.len() > MAX_PAYLOAD {
        return Err(CodecError::PayloadTooLarge(payload.len()));
    }
    let mut out = Vec::with_capacity(framed_len(payload.len()));
    out.extend_from_slice(&SYNC);
    out.push(length_octet(payload.len()));
    out.push(header.control);
    out.extend_from_slice(&header.destination.to_le_bytes());
    out.extend_from_slice(&header.source.to_le_bytes());
    let header_crc = crc_dnp(&out);
    out.extend_from_slice(&header_crc.to_le_bytes());
    for block in payload.chunks(BLOCK_LEN) {
        out.extend_from_slice(block);
        push_crc(&mut out, block);
    }
    Ok(out)
}

pub fn decode_frame(octets: &[u8]) -> Result<DnpFrame, CodecError> {
    if octets.len() < 2 {
        return Err(CodecError::Truncated);
    }
    if octets[..2] != SYNC {
        return Err(CodecError::BadSync);
    }
    if octets.len() < HEADER_LEN {
        return Err(CodecError::Truncated);
    }
    let stored = u16::from_le_bytes([octets[8], octets[9]]);
    if crc_dnp(&octets[..8]) != stored {
        return Err(CodecError::BadHeaderCrc);
    }
    let length = octets[2];
    if length < 5 {
        return Err(CodecError::BadLength(length));
    }
    let body = &octets[HEADER_LEN..];
    let payload_len = if length < 0xFF {
        let expected = length as usize - 5;
        let needed = framed_len(expected) - HEADER_LEN;
        if body.len() < needed {
            return Err(CodecError::Truncated);
        }
        if body.len() > needed {
            return Err(CodecError::TrailingOctets(body.len() - needed));
        }
        expected
    } else {
        match payload_len_from_body(body.len()) {
            Some(n) if n + 5 >= 0xFF && n <= MAX_PAYLOAD => n,
            _ => return Err(CodecError::Truncated),
        }
    };

    let mut payload = Vec::with_capacity(payload_len);
    let mut rest = body;
    let mut index = 0;
    while payload.len() < payload_len {
        let take = (payload_len - payload.len()).min(BLOCK_LEN);
        let (block, tail) = rest.split_at(take);
        let stored = u16::from_le_bytes([tail[0], tail[1]]);
        if crc_dnp(block) != stored {
            return Err(CodecError::BadBlockCrc(index));
        }
        payload.extend_from_slice(block);
        rest = &tail[2..];
        index += 1;
    }

    Ok(DnpFrame {
        header: LinkHeader {
            control: octets[3],
            destination: u16::from_le_bytes([octets[4], octets[5]]),
            source: u16::from_le_bytes([octets[6], octets[7]]),
        },
        payload,
    })
}

/// Rewrites every CRC in an encoded frame to match its current contents.
/// Frame geometry is taken from the octet count. Used by adversaries that
/// patch payload octets in place.
pub fn recompute_crcs(octets: &mut [u8]) -> Result<(), CodecError> {
    if octets.len() < HEADER_LEN {
        return Err(CodecError::Truncated);
    }
    let crc = crc_dnp(&octets[..8]).to_le_bytes();
    octets[8..10].copy_from_slice(&crc);
    let payload_len =
        payload_len_from_body(octets.len() - HEADER_LEN).ok_or(CodecError::Truncated)?;
    let mut pos = HEADER_LEN;
    let mut remaining = payload_len;
    while remaining > 0 {
        let take = remaining.min(BLOCK_LEN);
        let crc = crc_dnp(&octets[pos..pos + take]).to_le_bytes();
        octets[pos + take..pos + take + 2].copy_from_slice(&crc);
        pos += take + 2;
        remaining -= take;
    }
    Ok(())
}
