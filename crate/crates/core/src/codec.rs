//! Systematic block RLNC.
//!
//! A block carries up to `K` source payloads. Each payload is framed into a
//! fixed-size symbol (`[len_hi, len_lo, data.., 0..]`) and sent immediately as a
//! systematic symbol with a unit coefficient vector. When the block is full (or
//! flushed early) the encoder emits `N - K` coded symbols whose coefficients are
//! drawn uniformly from GF(2^8).
//!
//! The decoder keeps the received coefficient rows in reduced row-echelon form,
//! so rank is known after every insertion and any slot whose unit vector lies
//! in the row space can be read straight out of the matrix.

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::gf256;

/// Octets used by the in-symbol length prefix.
pub const LENGTH_PREFIX: usize = 2;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodecError {
    #[error("invalid coding parameters: {0}")]
    InvalidParams(String),
    #[error("payload of {len} octets exceeds the {max}-octet slot capacity")]
    PayloadTooLarge { len: usize, max: usize },
    #[error("block is full, flush before pushing")]
    BlockFull,
    #[error("block {got} routed to decoder for block {expected}")]
    BlockMismatch { expected: u32, got: u32 },
    #[error("symbol shape does not match block (k {k}, symbol size {symbol_size})")]
    ShapeMismatch { k: usize, symbol_size: usize },
    #[error("block not decodable yet: rank {rank} of {k}")]
    NotReady { rank: usize, k: usize },
    #[error("slot {slot} carries a corrupt length prefix")]
    CorruptFrame { slot: usize },
    #[error(transparent)]
    Field(#[from] gf256::FieldError),
}

/// Block geometry: `k` source packets, `n` total packets, `symbol_size` octets per slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CodingParams {
    k: u8,
    n: u8,
    symbol_size: u16,
}

impl CodingParams {
    pub fn new(k: usize, n: usize, symbol_size: usize) -> Result<Self, CodecError> {
        if !(1..=255).contains(&k) {
            return Err(CodecError::InvalidParams(format!("k={k} outside 1..=255")));
        }
        if n < k || n > 255 {
            return Err(CodecError::InvalidParams(format!(
                "n={n} must satisfy k <= n <= 255"
            )));
        }
        if !(LENGTH_PREFIX + 1..=u16::MAX as usize).contains(&symbol_size) {
            return Err(CodecError::InvalidParams(format!(
                "symbol_size={symbol_size} outside 3..=65535"
            )));
        }
        Ok(Self {
            k: k as u8,
            n: n as u8,
            symbol_size: symbol_size as u16,
        })
    }

    pub fn k(&self) -> usize {
        self.k as usize
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn symbol_size(&self) -> usize {
        self.symbol_size as usize
    }

    /// Number of redundant (coded) symbols per block.
    pub fn redundancy(&self) -> usize {
        self.n() - self.k()
    }

    /// Largest source payload a slot can carry.
    pub fn max_payload(&self) -> usize {
        self.symbol_size() - LENGTH_PREFIX
    }

    /// K/N as an exact fraction.
    pub fn code_rate(&self) -> Ratio<u32> {
        Ratio::new(self.k as u32, self.n as u32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SymbolKind {
    /// Uncoded source packet at the given slot.
    Systematic(u8),
    /// Random linear combination of the block's source slots.
    Coded,
}

/// One transmitted unit of a block.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedSymbol {
    pub block_id: u32,
    /// Total packets in the block, as announced by the encoder.
    pub n: u8,
    pub kind: SymbolKind,
    /// One coefficient per source slot; a unit vector for systematic symbols.
    pub coefficients: Vec<u8>,
    pub symbol: Vec<u8>,
}

impl CodedSymbol {
    pub fn systematic(block_id: u32, k: usize, n: u8, slot: u8, symbol: Vec<u8>) -> Self {
        let mut coefficients = vec![0u8; k];
        coefficients[slot as usize] = 1;
        Self {
            block_id,
            n,
            kind: SymbolKind::Systematic(slot),
            coefficients,
            symbol,
        }
    }

    /// Number of source slots this symbol spans.
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn is_systematic(&self) -> bool {
        matches!(self.kind, SymbolKind::Systematic(_))
    }
}

/// Frame a payload into a zero-padded, length-prefixed symbol.
pub fn frame(payload: &[u8], symbol_size: usize) -> Result<Vec<u8>, CodecError> {
    let max = symbol_size.saturating_sub(LENGTH_PREFIX);
    if payload.len() > max {
        return Err(CodecError::PayloadTooLarge {
            len: payload.len(),
            max,
        });
    }
    let mut symbol = vec![0u8; symbol_size];
    symbol[..LENGTH_PREFIX].copy_from_slice(&(payload.len() as u16).to_be_bytes());
    symbol[LENGTH_PREFIX..LENGTH_PREFIX + payload.len()].copy_from_slice(payload);
    Ok(symbol)
}

/// Inverse of [`frame`]; `None` if the length prefix overruns the symbol.
pub fn unframe(symbol: &[u8]) -> Option<&[u8]> {
    if symbol.len() < LENGTH_PREFIX {
        return None;
    }
    let len = u16::from_be_bytes([symbol[0], symbol[1]]) as usize;
    symbol.get(LENGTH_PREFIX..LENGTH_PREFIX + len)
}

/// Encoder side of one flow direction.
#[derive(Debug, Clone)]
pub struct BlockEncoder {
    params: CodingParams,
    block_id: u32,
    buffered: Vec<Vec<u8>>,
}

impl BlockEncoder {
    pub fn new(params: CodingParams) -> Self {
        Self::starting_at(params, 0)
    }

    pub fn starting_at(params: CodingParams, block_id: u32) -> Self {
        Self {
            params,
            block_id,
            buffered: Vec::with_capacity(params.k()),
        }
    }

    pub fn params(&self) -> &CodingParams {
        &self.params
    }

    pub fn block_id(&self) -> u32 {
        self.block_id
    }

    pub fn buffered(&self) -> usize {
        self.buffered.len()
    }

    pub fn is_full(&self) -> bool {
        self.buffered.len() == self.params.k()
    }

    /// Buffer a payload and return its systematic symbol.
    pub fn push(&mut self, payload: &[u8]) -> Result<CodedSymbol, CodecError> {
        if self.is_full() {
            return Err(CodecError::BlockFull);
        }
        let symbol = frame(payload, self.params.symbol_size())?;
        let slot = self.buffered.len() as u8;
        self.buffered.push(symbol.clone());
        Ok(CodedSymbol::systematic(
            self.block_id,
            self.params.k(),
            self.params.n,
            slot,
            symbol,
        ))
    }

    /// Emit the redundancy for the buffered symbols and start the next block.
    ///
    /// A partial block is coded over the `K' = buffered()` symbols present;
    /// the coded symbols then carry `K'` coefficients and announce
    /// `n = K' + (N - K)`. Flushing an empty block does nothing.
    pub fn flush(&mut self, seed: u64) -> Vec<CodedSymbol> {
        if self.buffered.is_empty() {
            return Vec::new();
        }
        let k = self.buffered.len();
        let n = (k + self.params.redundancy()) as u8;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(self.params.redundancy());
        for _ in 0..self.params.redundancy() {
            let coefficients: Vec<u8> = (0..k).map(|_| rng.gen()).collect();
            let mut symbol = vec![0u8; self.params.symbol_size()];
            for (c, src) in coefficients.iter().zip(&self.buffered) {
                gf256::axpy(&mut symbol, src, *c).expect("buffered symbols share one size");
            }
            out.push(CodedSymbol {
                block_id: self.block_id,
                n,
                kind: SymbolKind::Coded,
                coefficients,
                symbol,
            });
        }
        self.buffered.clear();
        self.block_id = self.block_id.wrapping_add(1);
        out
    }
}

#[derive(Debug, Clone)]
struct Row {
    pivot: usize,
    coefficients: Vec<u8>,
    data: Vec<u8>,
}

impl Row {
    fn is_unit(&self) -> bool {
        self.coefficients
            .iter()
            .enumerate()
            .all(|(i, &c)| if i == self.pivot { c == 1 } else { c == 0 })
    }
}

/// Outcome of abandoning a block before (or after) full rank.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Salvage {
    /// Recovered payloads in slot order.
    pub recovered: Vec<(usize, Vec<u8>)>,
    /// Slots that could not be recovered.
    pub lost: Vec<usize>,
}

/// Decoder state for a single block.
#[derive(Debug, Clone)]
pub struct BlockDecoder {
    block_id: u32,
    k: usize,
    symbol_size: usize,
    /// Reduced row-echelon rows, sorted by pivot column.
    rows: Vec<Row>,
    seen_coded: bool,
    released: bool,
}

impl BlockDecoder {
    pub fn new(block_id: u32, k: usize, symbol_size: usize) -> Self {
        Self {
            block_id,
            k,
            symbol_size,
            rows: Vec::with_capacity(k),
            seen_coded: false,
            released: false,
        }
    }

    /// Decoder shaped after the first symbol seen for a block.
    pub fn for_symbol(sym: &CodedSymbol) -> Self {
        Self::new(sym.block_id, sym.k(), sym.symbol.len())
    }

    pub fn block_id(&self) -> u32 {
        self.block_id
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn symbol_size(&self) -> usize {
        self.symbol_size
    }

    pub fn rank(&self) -> usize {
        self.rows.len()
    }

    pub fn is_decodable(&self) -> bool {
        self.rows.len() == self.k
    }

    pub fn is_released(&self) -> bool {
        self.released
    }

    /// Pivot columns currently held, ascending.
    pub fn pivots(&self) -> Vec<usize> {
        self.rows.iter().map(|r| r.pivot).collect()
    }

    /// Row-reduce `sym` into the block. Returns 1 if it raised the rank, 0 otherwise.
    ///
    /// Coded symbols are authoritative for the block width: the first coded
    /// symbol of a partially flushed block narrows `k` to its coefficient count.
    pub fn insert(&mut self, sym: &CodedSymbol) -> Result<usize, CodecError> {
        if sym.block_id != self.block_id {
            return Err(CodecError::BlockMismatch {
                expected: self.block_id,
                got: sym.block_id,
            });
        }
        if self.released {
            return Ok(0);
        }
        if sym.symbol.len() != self.symbol_size {
            return Err(self.shape_error());
        }
        let mut coefficients = self.conform(sym)?;
        let mut data = sym.symbol.clone();
        if !sym.is_systematic() {
            self.seen_coded = true;
        }

        for row in &self.rows {
            let f = coefficients[row.pivot];
            if f != 0 {
                gf256::axpy(&mut coefficients, &row.coefficients, f)?;
                gf256::axpy(&mut data, &row.data, f)?;
            }
        }
        let Some(pivot) = coefficients.iter().position(|&c| c != 0) else {
            return Ok(0);
        };
        let norm = gf256::inv(coefficients[pivot])?;
        gf256::scale(&mut coefficients, norm);
        gf256::scale(&mut data, norm);

        for row in &mut self.rows {
            let f = row.coefficients[pivot];
            if f != 0 {
                gf256::axpy(&mut row.coefficients, &coefficients, f)?;
                gf256::axpy(&mut row.data, &data, f)?;
            }
        }
        let at = self.rows.partition_point(|r| r.pivot < pivot);
        self.rows.insert(
            at,
            Row {
                pivot,
                coefficients,
                data,
            },
        );
        Ok(1)
    }

    /// Fit the symbol's coefficient vector to this block's width.
    fn conform(&mut self, sym: &CodedSymbol) -> Result<Vec<u8>, CodecError> {
        let width = sym.k();
        if width == self.k {
            return Ok(sym.coefficients.clone());
        }
        if width > self.k && sym.coefficients[self.k..].iter().all(|&c| c == 0) {
            // systematic symbol announced with the full K of a block later flushed short
            return Ok(sym.coefficients[..self.k].to_vec());
        }
        if width < self.k
            && width > 0
            && !sym.is_systematic()
            && !self.seen_coded
            && self
                .rows
                .iter()
                .all(|r| r.coefficients[width..].iter().all(|&c| c == 0))
        {
            self.k = width;
            for row in &mut self.rows {
                row.coefficients.truncate(width);
            }
            return Ok(sym.coefficients.clone());
        }
        Err(self.shape_error())
    }

    fn shape_error(&self) -> CodecError {
        CodecError::ShapeMismatch {
            k: self.k,
            symbol_size: self.symbol_size,
        }
    }

    /// Source payloads in slot order. Requires full rank.
    pub fn release(&mut self) -> Result<Vec<Vec<u8>>, CodecError> {
        if !self.is_decodable() {
            return Err(CodecError::NotReady {
                rank: self.rank(),
                k: self.k,
            });
        }
        // Full-rank RREF over k columns is the identity, so row i holds slot i.
        let payloads = self
            .rows
            .iter()
            .map(|row| {
                unframe(&row.data)
                    .map(<[u8]>::to_vec)
                    .ok_or(CodecError::CorruptFrame { slot: row.pivot })
            })
            .collect::<Result<Vec<_>, _>>()?;
        self.released = true;
        Ok(payloads)
    }

    /// Slots whose unit vector lies in the received row space.
    ///
    /// In reduced echelon form that is exactly the set of rows that are unit rows.
    pub fn recoverable_slots(&self) -> Vec<usize> {
        self.rows
            .iter()
            .filter(|r| r.is_unit())
            .map(|r| r.pivot)
            .collect()
    }

    /// Payload for a single slot if it is already recoverable.
    pub fn slot_payload(&self, slot: usize) -> Option<Vec<u8>> {
        self.rows
            .iter()
            .find(|r| r.pivot == slot && r.is_unit())
            .and_then(|r| unframe(&r.data).map(<[u8]>::to_vec))
    }

    /// Abandon the block and return whatever can be recovered. Terminal.
    pub fn salvage(&mut self) -> Salvage {
        let mut out = Salvage::default();
        let mut recovered = vec![false; self.k];
        if !self.released {
            for row in self.rows.iter().filter(|r| r.is_unit()) {
                if let Some(p) = unframe(&row.data) {
                    recovered[row.pivot] = true;
                    out.recovered.push((row.pivot, p.to_vec()));
                }
            }
        }
        out.lost = (0..self.k).filter(|&s| !recovered[s]).collect();
        self.released = true;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::seq::SliceRandom;

    fn params(k: usize, n: usize, s: usize) -> CodingParams {
        CodingParams::new(k, n, s).unwrap()
    }

    #[test]
    fn params_validation() {
        assert!(CodingParams::new(0, 1, 8).is_err());
        assert!(CodingParams::new(256, 256, 8).is_err());
        assert!(CodingParams::new(4, 3, 8).is_err());
        assert!(CodingParams::new(4, 4, 2).is_err());
        let p = params(10, 15, 1202);
        assert_eq!(p.redundancy(), 5);
        assert_eq!(p.max_payload(), 1200);
        assert_eq!(p.code_rate(), Ratio::new(2, 3));
    }

    #[test]
    fn push_returns_unit_vectors() {
        let mut enc = BlockEncoder::new(params(3, 5, 8));
        let first = enc.push(b"a").unwrap();
        assert_eq!(first.kind, SymbolKind::Systematic(0));
        assert_eq!(first.coefficients, vec![1, 0, 0]);
        enc.push(b"b").unwrap();
        let last = enc.push(b"c").unwrap();
        assert_eq!(last.coefficients, vec![0, 0, 1]);
        assert!(enc.is_full());
        assert_eq!(enc.push(b"d"), Err(CodecError::BlockFull));
    }

    #[test]
    fn framing_layout() {
        let mut enc = BlockEncoder::new(params(2, 3, 8));
        let sym = enc.push(&[0xAA, 0xBB, 0xCC]).unwrap();
        assert_eq!(
            sym.symbol,
            vec![0x00, 0x03, 0xAA, 0xBB, 0xCC, 0x00, 0x00, 0x00]
        );
        assert_eq!(
            enc.push(&[0u8; 7]),
            Err(CodecError::PayloadTooLarge { len: 7, max: 6 })
        );
        assert_eq!(unframe(&sym.symbol), Some(&[0xAA, 0xBB, 0xCC][..]));
        assert_eq!(unframe(&[0x00, 0x09, 1, 2]), None);
    }

    #[test]
    fn flush_single_source_scales() {
        let mut enc = BlockEncoder::new(params(1, 2, 6));
        let sys = enc.push(&[1, 2, 3, 4]).unwrap();
        let coded = enc.flush(7);
        assert_eq!(coded.len(), 1);
        let rho = coded[0].coefficients[0];
        let expect: Vec<u8> = sys.symbol.iter().map(|&x| gf256::mul(rho, x)).collect();
        assert_eq!(coded[0].symbol, expect);
        assert_eq!(enc.block_id(), 1);
        assert_eq!(enc.buffered(), 0);
    }

    #[test]
    fn flush_two_sources_combine_positionally() {
        // Post-framing symbols [1,0] and [0,1] isolated by direct substitution:
        // combining unit symbols yields the coefficient pair itself.
        let p1 = [1u8, 0];
        let p2 = [0u8, 1];
        let (a, b) = (0x35u8, 0xC2u8);
        let mut out = [0u8; 2];
        gf256::axpy(&mut out, &p1, a).unwrap();
        gf256::axpy(&mut out, &p2, b).unwrap();
        assert_eq!(out, [a, b]);

        // Same structure through the encoder: the coded symbol equals
        // a*frame(P1) + b*frame(P2) for the drawn coefficients.
        let mut enc = BlockEncoder::new(params(2, 3, 4));
        let s1 = enc.push(&[1, 0]).unwrap();
        let s2 = enc.push(&[0, 1]).unwrap();
        let coded = enc.flush(99).pop().unwrap();
        let (a, b) = (coded.coefficients[0], coded.coefficients[1]);
        let expect: Vec<u8> = s1
            .symbol
            .iter()
            .zip(&s2.symbol)
            .map(|(&x, &y)| gf256::mul(a, x) ^ gf256::mul(b, y))
            .collect();
        assert_eq!(coded.symbol, expect);
    }

    #[test]
    fn flush_counts_and_determinism() {
        let p = params(10, 15, 32);
        let mut a = BlockEncoder::new(p);
        let mut b = BlockEncoder::new(p);
        for i in 0..10u8 {
            a.push(&[i; 5]).unwrap();
            b.push(&[i; 5]).unwrap();
        }
        let ca = a.flush(42);
        let cb = b.flush(42);
        assert_eq!(ca.len(), 5);
        assert!(ca.iter().all(|s| s.coefficients.len() == 10 && s.n == 15));
        assert_eq!(ca, cb);
        assert!(a.flush(1).is_empty());
        assert_eq!(a.block_id(), 1);
    }

    #[test]
    fn partial_flush_uses_buffered_width() {
        let mut enc = BlockEncoder::new(params(10, 15, 16));
        for i in 0..7u8 {
            enc.push(&[i]).unwrap();
        }
        let coded = enc.flush(3);
        assert_eq!(coded.len(), 5);
        assert!(coded.iter().all(|s| s.k() == 7 && s.n == 12));
    }

    #[test]
    fn decoder_insert_rank_behaviour() {
        let p = params(4, 8, 10);
        let mut enc = BlockEncoder::new(p);
        let sys: Vec<_> = (0..4u8).map(|i| enc.push(&[i, i + 1]).unwrap()).collect();
        let mut dec = BlockDecoder::for_symbol(&sys[0]);
        assert_eq!(dec.insert(&sys[0]), Ok(1));
        assert_eq!(dec.insert(&sys[0]), Ok(0));
        assert_eq!(dec.insert(&sys[1]), Ok(1));
        assert_eq!(dec.insert(&sys[2]), Ok(1));
        assert!(!dec.is_decodable());
        assert_eq!(dec.insert(&sys[3]), Ok(1));
        assert!(dec.is_decodable());
        let out = dec.release().unwrap();
        assert_eq!(out, (0..4u8).map(|i| vec![i, i + 1]).collect::<Vec<_>>());
        assert!(dec.is_released());
        assert_eq!(dec.insert(&sys[1]), Ok(0));
    }

    #[test]
    fn decoder_rejects_foreign_block_and_early_release() {
        let mut enc = BlockEncoder::new(params(2, 3, 4));
        let s = enc.push(&[1]).unwrap();
        let mut dec = BlockDecoder::new(5, 2, 4);
        assert_eq!(
            dec.insert(&s),
            Err(CodecError::BlockMismatch {
                expected: 5,
                got: 0
            })
        );
        let mut dec = BlockDecoder::for_symbol(&s);
        dec.insert(&s).unwrap();
        assert_eq!(dec.release(), Err(CodecError::NotReady { rank: 1, k: 2 }));
    }

    #[test]
    fn zero_coefficient_row_is_dependent() {
        let mut dec = BlockDecoder::new(0, 3, 4);
        let zero = CodedSymbol {
            block_id: 0,
            n: 4,
            kind: SymbolKind::Coded,
            coefficients: vec![0, 0, 0],
            symbol: vec![0; 4],
        };
        assert_eq!(dec.insert(&zero), Ok(0));
        assert_eq!(dec.rank(), 0);
    }

    #[test]
    fn k10_n15_recovers_with_three_systematic_losses() {
        let p = params(10, 15, 40);
        let mut enc = BlockEncoder::new(p);
        let payloads: Vec<Vec<u8>> = (0..10u8).map(|i| vec![i; (i as usize) * 3]).collect();
        let mut all: Vec<_> = payloads.iter().map(|x| enc.push(x).unwrap()).collect();
        all.extend(enc.flush(2024));
        let mut dec = BlockDecoder::for_symbol(&all[0]);
        for (i, s) in all.iter().enumerate() {
            if [2, 5, 7].contains(&i) || i >= 13 {
                continue;
            }
            dec.insert(s).unwrap();
        }
        assert!(dec.is_decodable());
        assert_eq!(dec.release().unwrap(), payloads);
    }

    #[test]
    fn partial_block_decodes_after_narrowing() {
        let mut enc = BlockEncoder::new(params(10, 15, 16));
        let payloads: Vec<Vec<u8>> = (0..7u8).map(|i| vec![i, 0xEE]).collect();
        let sys: Vec<_> = payloads.iter().map(|p| enc.push(p).unwrap()).collect();
        let coded = enc.flush(5);
        let mut dec = BlockDecoder::for_symbol(&sys[0]);
        assert_eq!(dec.k(), 10);
        for s in &sys[..5] {
            dec.insert(s).unwrap();
        }
        dec.insert(&coded[0]).unwrap();
        assert_eq!(dec.k(), 7);
        dec.insert(&sys[6]).unwrap();
        assert_eq!(dec.rank(), 7);
        assert_eq!(dec.release().unwrap(), payloads);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut dec = BlockDecoder::new(0, 4, 8);
        let sym = CodedSymbol {
            block_id: 0,
            n: 6,
            kind: SymbolKind::Coded,
            coefficients: vec![1, 2, 3, 4],
            symbol: vec![0; 9],
        };
        assert!(matches!(
            dec.insert(&sym),
            Err(CodecError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn salvage_cases() {
        let mut empty = BlockDecoder::new(0, 10, 8);
        let s = empty.salvage();
        assert!(s.recovered.is_empty());
        assert_eq!(s.lost, (0..10).collect::<Vec<_>>());

        let mut enc = BlockEncoder::new(params(10, 15, 8));
        let sys: Vec<_> = (0..10u8).map(|i| enc.push(&[i]).unwrap()).collect();
        let mut dec = BlockDecoder::for_symbol(&sys[0]);
        for s in sys.iter().filter(|s| s.kind != SymbolKind::Systematic(4)) {
            dec.insert(s).unwrap();
        }
        let out = dec.salvage();
        assert_eq!(out.recovered.len(), 9);
        assert_eq!(out.lost, vec![4]);
        assert!(out
            .recovered
            .iter()
            .all(|(slot, p)| p == &vec![*slot as u8]));
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let p = params(6, 12, 12);
        let mut enc = BlockEncoder::new(p);
        let payloads: Vec<Vec<u8>> = (0..6u8).map(|i| vec![i; i as usize + 1]).collect();
        let mut all: Vec<_> = payloads.iter().map(|x| enc.push(x).unwrap()).collect();
        all.extend(enc.flush(11));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            all.shuffle(&mut rng);
            let subset = &all[..7];
            let mut dec = BlockDecoder::for_symbol(&subset[0]);
            for s in subset {
                dec.insert(s).unwrap();
            }
            let mut dec2 = BlockDecoder::for_symbol(&subset[0]);
            for s in subset.iter().rev() {
                dec2.insert(s).unwrap();
            }
            assert_eq!(dec.rank(), dec2.rank());
            if dec.is_decodable() {
                assert_eq!(dec.release().unwrap(), payloads);
                assert_eq!(dec2.release().unwrap(), payloads);
            }
        }
    }
}
