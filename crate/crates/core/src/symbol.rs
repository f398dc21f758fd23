//! Source blocks, payloads and coded symbols.

use std::ops::BitXorAssign;

use crate::error::{invalid, Error, Result};

/// Default payload length in bytes.
pub const DEFAULT_SYMBOL_SIZE: usize = 32;

/// Index of a source symbol, always `< k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SymbolId(pub u32);

impl SymbolId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for SymbolId {
    fn from(i: usize) -> Self {
        SymbolId(i as u32)
    }
}

/// Fixed-length byte block. A zero-length payload is the counting-only mode
/// used by large Monte Carlo runs: XOR and propagation still happen, they are
/// just free.
#[derive(Debug, Clone, PartialEq, Eq, Default, Hash)]
pub struct Payload(pub Vec<u8>);

impl Payload {
    pub fn zeroed(len: usize) -> Self {
        Payload(vec![0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn xor(&self, other: &Payload) -> Payload {
        let mut out = self.clone();
        out ^= other;
        out
    }
}

impl BitXorAssign<&Payload> for Payload {
    fn bitxor_assign(&mut self, rhs: &Payload) {
        debug_assert_eq!(self.0.len(), rhs.0.len(), "payload length mismatch");
        for (a, b) in self.0.iter_mut().zip(&rhs.0) {
            *a ^= *b;
        }
    }
}

/// The k source symbols of one session.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceBlock {
    symbols: Vec<Payload>,
    symbol_size: usize,
}

impl SourceBlock {
    pub fn new(symbols: Vec<Payload>) -> Result<Self> {
        if symbols.len() < 2 {
            return invalid(format!("source block needs k >= 2, got {}", symbols.len()));
        }
        let symbol_size = symbols[0].len();
        if symbols.iter().any(|p| p.len() != symbol_size) {
            return invalid("all source payloads must have the same length");
        }
        Ok(Self { symbols, symbol_size })
    }

    /// Block of `k` empty payloads, for counting-only sessions.
    pub fn counting(k: usize) -> Result<Self> {
        Self::new(vec![Payload::default(); k])
    }

    /// Splits `data` into `symbol_size` chunks, zero-padding the last one.
    pub fn from_bytes(data: &[u8], symbol_size: usize) -> Result<Self> {
        if data.is_empty() {
            return invalid("input is empty");
        }
        if symbol_size == 0 {
            return invalid("symbol size must be positive");
        }
        let mut symbols: Vec<Payload> = data
            .chunks(symbol_size)
            .map(|c| {
                let mut v = c.to_vec();
                v.resize(symbol_size, 0);
                Payload(v)
            })
            .collect();
        // k >= 2 is required by the decoder; a tiny input gets one padding symbol.
        if symbols.len() == 1 {
            symbols.push(Payload::zeroed(symbol_size));
        }
        Self::new(symbols)
    }

    pub fn k(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbol_size(&self) -> usize {
        self.symbol_size
    }

    pub fn symbols(&self) -> &[Payload] {
        &self.symbols
    }

    pub fn get(&self, id: SymbolId) -> &Payload {
        &self.symbols[id.index()]
    }

    /// Builds the coded symbol over `indices` (must be sorted and distinct).
    pub fn encode(&self, indices: Vec<SymbolId>) -> Result<CodedSymbol> {
        let mut payload = Payload::zeroed(self.symbol_size);
        for &i in &indices {
            if i.index() >= self.k() {
                return Err(Error::MalformedSymbol(format!("index {} out of range", i.0)));
            }
            payload ^= self.get(i);
        }
        CodedSymbol::new(indices, payload)
    }

    /// Concatenates the payloads and truncates to `len` bytes.
    pub fn to_bytes(&self, len: usize) -> Vec<u8> {
        let mut out: Vec<u8> = self.symbols.iter().flat_map(|p| p.0.iter().copied()).collect();
        out.truncate(len);
        out
    }
}

/// XOR of the source payloads named by `indices`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CodedSymbol {
    indices: Vec<SymbolId>,
    payload: Payload,
}

impl CodedSymbol {
    pub fn new(indices: Vec<SymbolId>, payload: Payload) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::MalformedSymbol("degree must be at least 1".into()));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::MalformedSymbol("indices must be strictly increasing".into()));
        }
        Ok(Self { indices, payload })
    }

    pub fn degree(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[SymbolId] {
        &self.indices
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn into_parts(self) -> (Vec<SymbolId>, Payload) {
        (self.indices, self.payload)
    }
}
