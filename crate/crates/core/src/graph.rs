//! Receiver-side uni-partite decoding graph.
//!
//! Nodes are source symbols. A node is black once its value is known and
//! white otherwise. Degree-2 residual equations become XOR-labelled edges
//! between white nodes, so every white component is a tree whose nodes all
//! become known as soon as one of them is. Components are tracked with a
//! union-find (union by size, path halving) and a size histogram so the
//! largest white component is always available in `O(log k)`.

use std::collections::{BTreeMap, VecDeque};

use crate::error::{invalid, Error, Result};
use crate::symbol::{CodedSymbol, Payload, SymbolId};

/// How a received coded symbol relates to the current decoding state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    /// Every constituent is already recovered.
    Duplicate,
    /// Exactly one unrecovered constituent; `value` is its payload.
    Case1 { target: SymbolId, value: Payload },
    /// Two unrecovered constituents in different components.
    Case2 { a: SymbolId, b: SymbolId, xor: Payload },
    /// Two unrecovered constituents already connected; carries no information.
    Cycle { a: SymbolId, b: SymbolId },
    /// Three or more unrecovered constituents; discarded.
    TooManyUnknown { count: usize },
}

impl Classification {
    pub fn kind(&self) -> ClassKind {
        match self {
            Classification::Duplicate => ClassKind::Duplicate,
            Classification::Case1 { .. } => ClassKind::Case1,
            Classification::Case2 { .. } => ClassKind::Case2,
            Classification::Cycle { .. } => ClassKind::Cycle,
            Classification::TooManyUnknown { .. } => ClassKind::TooManyUnknown,
        }
    }
}

/// Payload-free tag of a [`Classification`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassKind {
    Duplicate,
    Case1,
    Case2,
    Cycle,
    TooManyUnknown,
}

/// Effect of feeding one coded symbol through [`DecodeGraph::receive`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Update {
    Recovered(Vec<(SymbolId, Payload)>),
    Merged { a: SymbolId, size: usize },
    Discarded(ClassKind),
}

#[derive(Debug, Clone)]
pub struct DecodeGraph {
    k: usize,
    black: Vec<bool>,
    values: Vec<Option<Payload>>,
    parent: Vec<u32>,
    size: Vec<u32>,
    adjacency: Vec<Vec<(u32, Payload)>>,
    recovered: usize,
    // white component size -> number of such components
    histogram: BTreeMap<usize, usize>,
}

impl DecodeGraph {
    pub fn new(k: usize) -> Result<Self> {
        if k < 2 {
            return invalid(format!("decode graph needs k >= 2, got {k}"));
        }
        if k > u32::MAX as usize {
            return invalid("k does not fit in 32 bits");
        }
        Ok(Self {
            k,
            black: vec![false; k],
            values: vec![None; k],
            parent: (0..k as u32).collect(),
            size: vec![1; k],
            adjacency: vec![Vec::new(); k],
            recovered: 0,
            histogram: BTreeMap::from([(1, k)]),
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn recovered_count(&self) -> usize {
        self.recovered
    }

    pub fn is_complete(&self) -> bool {
        self.recovered == self.k
    }

    /// Fraction of recovered source symbols.
    pub fn beta(&self) -> f64 {
        self.recovered as f64 / self.k as f64
    }

    pub fn is_black(&self, id: SymbolId) -> bool {
        self.black[id.index()]
    }

    pub fn value(&self, id: SymbolId) -> Option<&Payload> {
        self.values[id.index()].as_ref()
    }

    pub fn values(&self) -> &[Option<Payload>] {
        &self.values
    }

    pub fn largest_white_component(&self) -> usize {
        self.histogram.keys().next_back().copied().unwrap_or(0)
    }

    /// White component size -> number of components of that size.
    pub fn component_histogram(&self) -> BTreeMap<usize, usize> {
        self.histogram.clone()
    }

    /// Size of the component containing `id` (meaningful for white nodes).
    pub fn component_size(&self, id: SymbolId) -> usize {
        self.size[self.find(id.index())] as usize
    }

    pub fn same_component(&self, a: SymbolId, b: SymbolId) -> bool {
        self.find(a.index()) == self.find(b.index())
    }

    /// Number of stored edges (each white-white edge counted once).
    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    fn find(&self, mut i: usize) -> usize {
        while self.parent[i] as usize != i {
            i = self.parent[i] as usize;
        }
        i
    }

    fn find_mut(&mut self, mut i: usize) -> usize {
        while self.parent[i] as usize != i {
            let grand = self.parent[self.parent[i] as usize];
            self.parent[i] = grand;
            i = grand as usize;
        }
        i
    }

    fn hist_remove(&mut self, size: usize) {
        match self.histogram.get_mut(&size) {
            Some(n) if *n > 1 => *n -= 1,
            Some(_) => {
                self.histogram.remove(&size);
            }
            None => unreachable!("histogram out of sync for size {size}"),
        }
    }

    fn hist_add(&mut self, size: usize) {
        *self.histogram.entry(size).or_insert(0) += 1;
    }

    /// Strips recovered constituents from `c` and classifies the residual
    /// equation. Does not modify the graph.
    pub fn classify(&self, c: &CodedSymbol) -> Result<Classification> {
        let mut residual = c.payload().clone();
        let mut unknown = [SymbolId(0); 2];
        let mut unknown_count = 0usize;
        for &id in c.indices() {
            if id.index() >= self.k {
                return Err(Error::MalformedSymbol(format!(
                    "index {} out of range for k = {}",
                    id.0, self.k
                )));
            }
            if self.black[id.index()] {
                if unknown_count < 3 {
                    if let Some(v) = &self.values[id.index()] {
                        residual ^= v;
                    }
                }
            } else {
                if unknown_count < 2 {
                    unknown[unknown_count] = id;
                }
                unknown_count += 1;
            }
        }
        Ok(match unknown_count {
            0 => Classification::Duplicate,
            1 => Classification::Case1 { target: unknown[0], value: residual },
            2 => {
                let (a, b) = (unknown[0], unknown[1]);
                if self.same_component(a, b) {
                    Classification::Cycle { a, b }
                } else {
                    Classification::Case2 { a, b, xor: residual }
                }
            }
            count => Classification::TooManyUnknown { count },
        })
    }

    /// Recovers `target` and, by XOR propagation along stored edges, its whole
    /// component. Returns every newly recovered `(id, value)` pair, target first.
    pub fn apply_case1(
        &mut self,
        target: SymbolId,
        value: Payload,
    ) -> Result<Vec<(SymbolId, Payload)>> {
        let t = target.index();
        if t >= self.k {
            return Err(Error::MalformedSymbol(format!("index {} out of range", target.0)));
        }
        if self.black[t] {
            return Err(Error::ContractViolation(format!(
                "case-1 target {} is already recovered",
                target.0
            )));
        }
        let root = self.find_mut(t);
        let comp_size = self.size[root] as usize;

        let mut out = Vec::with_capacity(comp_size);
        let mut queue = VecDeque::with_capacity(comp_size);
        self.black[t] = true;
        queue.push_back((t, value));
        while let Some((node, node_value)) = queue.pop_front() {
            for (nbr, edge) in std::mem::take(&mut self.adjacency[node]) {
                let n = nbr as usize;
                if self.black[n] {
                    continue;
                }
                self.black[n] = true;
                queue.push_back((n, edge.xor(&node_value)));
            }
            out.push((SymbolId(node as u32), node_value.clone()));
            self.values[node] = Some(node_value);
        }
        debug_assert_eq!(out.len(), comp_size, "component was not a tree");

        self.hist_remove(comp_size);
        self.recovered += out.len();
        Ok(out)
    }

    /// Stores the edge `a -- b` labelled `xor` and merges the two components.
    /// Returns the merged component size.
    pub fn apply_case2(&mut self, a: SymbolId, b: SymbolId, xor: Payload) -> Result<usize> {
        let (ai, bi) = (a.index(), b.index());
        if ai >= self.k || bi >= self.k {
            return Err(Error::MalformedSymbol("edge endpoint out of range".into()));
        }
        if self.black[ai] || self.black[bi] {
            return Err(Error::ContractViolation(format!(
                "edge ({}, {}) touches a recovered node",
                a.0, b.0
            )));
        }
        let (ra, rb) = (self.find_mut(ai), self.find_mut(bi));
        if ra == rb {
            return Err(Error::ContractViolation(format!(
                "edge ({}, {}) would close a cycle",
                a.0, b.0
            )));
        }
        let (sa, sb) = (self.size[ra] as usize, self.size[rb] as usize);
        let (big, small) = if sa >= sb { (ra, rb) } else { (rb, ra) };
        self.parent[small] = big as u32;
        self.size[big] = (sa + sb) as u32;
        self.hist_remove(sa);
        self.hist_remove(sb);
        self.hist_add(sa + sb);

        self.adjacency[ai].push((bi as u32, xor.clone()));
        self.adjacency[bi].push((ai as u32, xor));
        Ok(sa + sb)
    }

    /// Classifies `c` and applies it when it is useful.
    pub fn receive(&mut self, c: &CodedSymbol) -> Result<Update> {
        Ok(match self.classify(c)? {
            Classification::Case1 { target, value } => {
                Update::Recovered(self.apply_case1(target, value)?)
            }
            Classification::Case2 { a, b, xor } => {
                let size = self.apply_case2(a, b, xor)?;
                Update::Merged { a, size }
            }
            other => Update::Discarded(other.kind()),
        })
    }
}
