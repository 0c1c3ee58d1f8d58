use std::fmt;

use serde::{Deserialize, Serialize};

/// Bits billed per exchanged real floating-point number.
pub const BITS_PER_REAL: u64 = 8;
/// Bits billed per exchanged complex floating-point number.
pub const BITS_PER_COMPLEX: u64 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Endpoint {
    Bs(usize),
    Center,
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Endpoint::Bs(b) => write!(f, "bs{b}"),
            Endpoint::Center => f.write_str("center"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub round: usize,
    pub sender: Endpoint,
    pub receiver: Endpoint,
    pub n_real: u64,
    pub n_complex: u64,
}

impl LedgerEntry {
    pub fn bits(&self) -> u64 {
        BITS_PER_REAL * self.n_real + BITS_PER_COMPLEX * self.n_complex
    }
}

/// Payload-only message trace. Counts are unsigned, so the "no negative
/// counts" invariant holds by construction.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverheadLedger {
    entries: Vec<LedgerEntry>,
    total_bits: u64,
}

impl OverheadLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        round: usize,
        sender: Endpoint,
        receiver: Endpoint,
        n_real: u64,
        n_complex: u64,
    ) {
        let e = LedgerEntry {
            round,
            sender,
            receiver,
            n_real,
            n_complex,
        };
        self.total_bits += e.bits();
        self.entries.push(e);
    }

    pub fn entries(&self) -> &[LedgerEntry] {
        &self.entries
    }

    pub fn total_bits(&self) -> u64 {
        self.total_bits
    }

    pub fn total_reals(&self) -> u64 {
        self.entries.iter().map(|e| e.n_real).sum()
    }

    pub fn total_complex(&self) -> u64 {
        self.entries.iter().map(|e| e.n_complex).sum()
    }

    pub fn rounds(&self) -> usize {
        self.entries.iter().map(|e| e.round).max().unwrap_or(0)
    }
}

/// `Σ (8·n_real + 16·n_complex)` recomputed from the entries.
pub fn overhead_bits(ledger: &OverheadLedger) -> u64 {
    ledger.entries().iter().map(LedgerEntry::bits).sum()
}
