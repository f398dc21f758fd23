//! Reference implementations shared by the integration tests.
#![allow(dead_code)]

use fountain_lab::symbol::{CodedSymbol, Payload, SymbolId};
use rand::seq::index;
use rand::Rng;

/// Brute-force replay decoder for small k: keeps every accepted equation
/// as a bitmask row and re-runs Gaussian elimination over GF(2) after each
/// arrival. An equation is accepted only if it has at most two unknowns
/// when it arrives, mirroring online peeling.
pub struct Gf2Replay {
    k: usize,
    rows: Vec<(u32, u8)>,
}

impl Gf2Replay {
    pub fn new(k: usize) -> Self {
        assert!(k <= 32);
        Self { k, rows: Vec::new() }
    }

    /// Value of every determined variable.
    pub fn solved(&self) -> Vec<Option<u8>> {
        let mut rows = self.rows.clone();
        let mut rank = 0;
        for col in 0..self.k {
            let bit = 1u32 << col;
            let Some(p) = (rank..rows.len()).find(|&i| rows[i].0 & bit != 0) else {
                continue;
            };
            rows.swap(rank, p);
            let pivot = rows[rank];
            for (i, r) in rows.iter_mut().enumerate() {
                if i != rank && r.0 & bit != 0 {
                    r.0 ^= pivot.0;
                    r.1 ^= pivot.1;
                }
            }
            rank += 1;
        }
        let mut out = vec![None; self.k];
        for &(mask, v) in &rows[..rank] {
            if mask.count_ones() == 1 {
                out[mask.trailing_zeros() as usize] = Some(v);
            }
        }
        out
    }

    pub fn receive(&mut self, indices: &[SymbolId], value: u8) {
        let solved = self.solved();
        let unknown = indices.iter().filter(|id| solved[id.index()].is_none()).count();
        if unknown <= 2 {
            let mask = indices.iter().fold(0u32, |m, id| m | 1 << id.0);
            self.rows.push((mask, value));
        }
    }
}

/// Coded symbol with `m` distinct uniform indices over a one-byte source.
pub fn random_symbol<R: Rng>(rng: &mut R, source: &[u8], m: usize) -> CodedSymbol {
    let mut ids: Vec<usize> = index::sample(rng, source.len(), m).into_vec();
    ids.sort_unstable();
    let value = ids.iter().fold(0u8, |acc, &i| acc ^ source[i]);
    CodedSymbol::new(ids.into_iter().map(SymbolId::from).collect(), Payload(vec![value])).unwrap()
}
