//! Payload framing: a 16-bit big-endian bit count followed by the bits.

use crate::error::{Error, Result};

pub const FRAME_HEADER_BITS: usize = 16;
pub const MAX_FRAMED_BITS: usize = u16::MAX as usize;

pub fn bytes_to_bits(bytes: &[u8]) -> Vec<bool> {
    bytes
        .iter()
        .flat_map(|&b| (0..8).rev().map(move |s| (b >> s) & 1 == 1))
        .collect()
}

/// Packs bits MSB-first; a trailing partial byte is dropped.
pub fn bits_to_bytes(bits: &[bool]) -> Vec<u8> {
    bits.chunks_exact(8)
        .map(|c| c.iter().fold(0u8, |acc, &b| (acc << 1) | b as u8))
        .collect()
}

pub(crate) fn header_value(header: &[bool]) -> usize {
    header.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize)
}

pub fn frame_bits(payload: &[bool]) -> Result<Vec<bool>> {
    if payload.len() > MAX_FRAMED_BITS {
        return Err(Error::InvalidInput(format!(
            "payload of {} bits exceeds the {MAX_FRAMED_BITS}-bit frame limit",
            payload.len()
        )));
    }
    let mut out: Vec<bool> = (0..FRAME_HEADER_BITS)
        .rev()
        .map(|s| (payload.len() >> s) & 1 == 1)
        .collect();
    out.extend_from_slice(payload);
    Ok(out)
}

pub fn frame_bytes(payload: &[u8]) -> Result<Vec<bool>> {
    frame_bits(&bytes_to_bits(payload))
}

/// What a retriever can say about a framed decoding.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unframed {
    /// Declared payload length, once the whole header was recovered.
    pub declared_bits: Option<usize>,
    /// Payload bits recovered so far (at most `declared_bits`).
    pub bits: Vec<bool>,
}

impl Unframed {
    pub fn is_complete(&self) -> bool {
        self.declared_bits == Some(self.bits.len())
    }

    pub fn bytes(&self) -> Vec<u8> {
        bits_to_bytes(&self.bits)
    }
}

pub fn unframe(decoded: &[bool]) -> Unframed {
    if decoded.len() < FRAME_HEADER_BITS {
        return Unframed {
            declared_bits: None,
            bits: vec![],
        };
    }
    let declared = header_value(&decoded[..FRAME_HEADER_BITS]);
    let body = &decoded[FRAME_HEADER_BITS..];
    Unframed {
        declared_bits: Some(declared),
        bits: body[..body.len().min(declared)].to_vec(),
    }
}

/// Length of the longest common prefix.
pub fn matched_prefix(expected: &[bool], got: &[bool]) -> usize {
    expected.iter().zip(got).take_while(|(a, b)| a == b).count()
}

/// Payload bits recovered from a framed decoding: the matched prefix of the
/// framed stream minus the header, zero while the header is incomplete.
pub fn recovered_payload_bits(framed: &[bool], decoded: &[bool]) -> usize {
    matched_prefix(framed, decoded).saturating_sub(FRAME_HEADER_BITS)
}
