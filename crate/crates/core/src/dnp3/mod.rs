//! DNP3 wire format: link frames with per-block CRCs, a single-segment
//! transport octet, and application fragments carrying indexed points.
//!
//! All functions are pure over octet slices.

mod app;
mod crc;
mod link;

pub use app::{
    decode_app, encode_app, value_offsets, AppControl, AppFragment, CommandStatus, ControlCode,
    FunctionCode, PointGroup, PointKind, PointValue,
};
pub use crc::crc_dnp;
pub use link::{
    decode_frame, encode_frame, framed_len, recompute_crcs, DnpFrame, LinkHeader, BLOCK_LEN,
    CONTROL_MASTER_DATA, CONTROL_OUTSTATION_DATA, HEADER_LEN, MAX_PAYLOAD, SYNC,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("payload of {0} octets exceeds the 292-octet maximum")]
    PayloadTooLarge(usize),
    #[error("frame does not start with 0x05 0x64")]
    BadSync,
    #[error("header CRC mismatch")]
    BadHeaderCrc,
    #[error("CRC mismatch in payload block {0}")]
    BadBlockCrc(usize),
    #[error("input ends before the frame or fragment is complete")]
    Truncated,
    #[error("invalid length octet {0}")]
    BadLength(u8),
    #[error("{0} octets follow the end of the frame")]
    TrailingOctets(usize),
    #[error("unsupported function code 0x{0:02x}")]
    UnknownFunctionCode(u8),
    #[error("unsupported object group {group} variation {variation}")]
    UnknownObject { group: u8, variation: u8 },
    #[error("unsupported qualifier 0x{0:02x}")]
    BadQualifier(u8),
    #[error("unsupported control code 0x{0:02x}")]
    UnknownControlCode(u8),
    #[error("unsupported command status {0}")]
    UnknownStatus(u8),
    #[error("point indices are not strictly increasing")]
    NonCanonical,
    #[error("point value does not match its group kind")]
    ValueKindMismatch,
    #[error("response fragment without internal indications")]
    MissingIin,
    #[error("request fragment carries internal indications")]
    UnexpectedIin,
}

/// Offset of the application fragment inside a frame payload (one
/// transport octet precedes it).
pub const TRANSPORT_LEN: usize = 1;

/// A complete DNP3 message as carried in one transport segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub header: LinkHeader,
    pub transport_seq: u8,
    pub fragment: AppFragment,
}

/// Encodes link frame + transport octet (FIR|FIN) + application fragment.
pub fn encode_message(msg: &Message) -> Result<Vec<u8>, CodecError> {
    let mut payload = vec![0xC0 | (msg.transport_seq & 0x3F)];
    payload.extend(encode_app(&msg.fragment)?);
    encode_frame(&msg.header, &payload)
}

pub fn decode_message(octets: &[u8]) -> Result<Message, CodecError> {
    let frame = decode_frame(octets)?;
    let (&transport, rest) = frame.payload.split_first().ok_or(CodecError::Truncated)?;
    Ok(Message {
        header: frame.header,
        transport_seq: transport & 0x3F,
        fragment: decode_app(rest)?,
    })
}

/// Maps an offset within the frame payload to its position in the
/// encoded frame (skipping header and interleaved block CRCs).
pub fn payload_offset_to_frame(offset: usize) -> usize {
    HEADER_LEN + offset + 2 * (offset / BLOCK_LEN)
}
