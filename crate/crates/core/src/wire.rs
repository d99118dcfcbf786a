//! Datagram layout exchanged between the encoder and decoder proxies.
//!
//! | offset | size | field                                              |
//! |--------|------|----------------------------------------------------|
//! | 0      | 2    | magic `0x4E 0x43` ("NC")                           |
//! | 2      | 1    | version `0x01`                                     |
//! | 3      | 1    | kind: 0 systematic, 1 coded                        |
//! | 4      | 4    | block id, big-endian                               |
//! | 8      | 1    | k                                                  |
//! | 9      | 1    | n                                                  |
//! | 10     | 1    | slot index (systematic) or `0xFF` (coded)          |
//! | 11     | 2    | symbol size, big-endian                            |
//! | 13     | k    | coefficients (coded only)                          |
//! | ..     | s    | symbol                                             |
//!
//! Total length is `13 + (coded ? k : 0) + symbol_size`, with no trailing octets.

use thiserror::Error;

use crate::codec::{CodedSymbol, SymbolKind};

pub const MAGIC: [u8; 2] = [0x4E, 0x43];
pub const VERSION: u8 = 0x01;
pub const HEADER_LEN: usize = 13;
pub const KIND_SYSTEMATIC: u8 = 0;
pub const KIND_CODED: u8 = 1;
pub const CODED_SLOT: u8 = 0xFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Error)]
pub enum ParseError {
    #[error("datagram truncated")]
    Truncated,
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown symbol kind {0}")]
    BadKind(u8),
    #[error("invalid block geometry")]
    BadParams,
    #[error("slot index out of range")]
    SlotOutOfRange,
    #[error("coded symbol with non-reserved slot field")]
    BadReserved,
    #[error("trailing octets after symbol")]
    TrailingBytes,
}

impl ParseError {
    /// Stable short label, used in counters and logs.
    pub fn code(&self) -> &'static str {
        match self {
            ParseError::Truncated => "truncated",
            ParseError::BadMagic => "bad_magic",
            ParseError::BadVersion(_) => "bad_version",
            ParseError::BadKind(_) => "bad_kind",
            ParseError::BadParams => "bad_params",
            ParseError::SlotOutOfRange => "slot_out_of_range",
            ParseError::BadReserved => "bad_reserved",
            ParseError::TrailingBytes => "trailing_bytes",
        }
    }
}

/// Exact datagram length for a symbol.
pub fn encoded_len(sym: &CodedSymbol) -> usize {
    HEADER_LEN + if sym.is_systematic() { 0 } else { sym.k() } + sym.symbol.len()
}

pub fn serialize(sym: &CodedSymbol) -> Vec<u8> {
    let mut out = Vec::with_capacity(encoded_len(sym));
    serialize_into(sym, &mut out);
    out
}

/// Append the datagram for `sym` to `out`.
pub fn serialize_into(sym: &CodedSymbol, out: &mut Vec<u8>) {
    let (kind, slot) = match sym.kind {
        SymbolKind::Systematic(slot) => (KIND_SYSTEMATIC, slot),
        SymbolKind::Coded => (KIND_CODED, CODED_SLOT),
    };
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(kind);
    out.extend_from_slice(&sym.block_id.to_be_bytes());
    out.push(sym.k() as u8);
    out.push(sym.n);
    out.push(slot);
    out.extend_from_slice(&(sym.symbol.len() as u16).to_be_bytes());
    if kind == KIND_CODED {
        out.extend_from_slice(&sym.coefficients);
    }
    out.extend_from_slice(&sym.symbol);
}

pub fn parse(datagram: &[u8]) -> Result<CodedSymbol, ParseError> {
    let header = datagram.get(..HEADER_LEN).ok_or(ParseError::Truncated)?;
    if header[..2] != MAGIC {
        return Err(ParseError::BadMagic);
    }
    if header[2] != VERSION {
        return Err(ParseError::BadVersion(header[2]));
    }
    let kind = header[3];
    if kind != KIND_SYSTEMATIC && kind != KIND_CODED {
        return Err(ParseError::BadKind(kind));
    }
    let block_id = u32::from_be_bytes([header[4], header[5], header[6], header[7]]);
    let k = header[8] as usize;
    let n = header[9];
    let slot = header[10];
    let symbol_size = u16::from_be_bytes([header[11], header[12]]) as usize;
    if k == 0 || (n as usize) < k || symbol_size < 3 {
        return Err(ParseError::BadParams);
    }

    let coeff_len = if kind == KIND_CODED { k } else { 0 };
    if kind == KIND_SYSTEMATIC && slot as usize >= k {
        return Err(ParseError::SlotOutOfRange);
    }
    if kind == KIND_CODED && slot != CODED_SLOT {
        return Err(ParseError::BadReserved);
    }
    let body = &datagram[HEADER_LEN..];
    let expected = coeff_len + symbol_size;
    if body.len() < expected {
        return Err(ParseError::Truncated);
    }
    if body.len() > expected {
        return Err(ParseError::TrailingBytes);
    }

    let symbol = body[coeff_len..].to_vec();
    Ok(if kind == KIND_SYSTEMATIC {
        CodedSymbol::systematic(block_id, k, n, slot, symbol)
    } else {
        CodedSymbol {
            block_id,
            n,
            kind: SymbolKind::Coded,
            coefficients: body[..coeff_len].to_vec(),
            symbol,
        }
    })
}
