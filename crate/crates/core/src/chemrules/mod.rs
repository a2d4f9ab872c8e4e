//! Chemical validation cascade applied to assembled molecules.
//!
//! Stages run in a fixed order: atomic range, edge deduplication, valence,
//! aromaticity and formal charge, kekulization. Each stage lands a verdict in
//! a [`ValidationReport`]; nothing in the cascade returns an error.

mod aromatic;
mod sanitize;
mod valence;

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use crate::element;
use crate::molgraph::BondType;

pub use aromatic::{aromaticity_and_charge_check, aromatize, kekulize, AromaticityVerdict};
pub use sanitize::{sanitize, sanitize_graph, sanitize_with, RawMolecule, Stage, StageResult, StageStatus, ValidationReport};
pub use valence::{valence_check, AtomValence, ValenceVerdict};
pub(crate) use aromatic::aromatic_ring_problems;
pub(crate) use valence::bond_order_sums;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChemError {
    #[error("element with atomic number {0} is not in the valence table")]
    UnknownElement(u8),
    #[error("unknown element symbol {0:?}")]
    UnknownSymbol(String),
    #[error("valence entry for {0} is empty or contains a zero order")]
    BadValenceEntry(String),
    #[error("aromatic system cannot be kekulized")]
    Kekulization,
    #[error("valence table I/O: {0}")]
    Io(String),
}

/// Allowed total bond orders per element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValenceTable {
    entries: BTreeMap<u8, Vec<u8>>,
}

const DEFAULT_VALENCES: &str = include_str!("../../data/valence_default.json");

impl Default for ValenceTable {
    fn default() -> Self {
        ValenceTable::from_json(DEFAULT_VALENCES).expect("embedded valence table is valid")
    }
}

impl ValenceTable {
    pub fn new(entries: BTreeMap<u8, Vec<u8>>) -> Result<Self, ChemError> {
        let mut clean = BTreeMap::new();
        for (z, mut orders) in entries {
            let name = element::symbol(z).map(str::to_owned).unwrap_or_else(|| z.to_string());
            if orders.is_empty() || orders.contains(&0) {
                return Err(ChemError::BadValenceEntry(name));
            }
            orders.sort_unstable();
            orders.dedup();
            clean.insert(z, orders);
        }
        Ok(ValenceTable { entries: clean })
    }

    /// Parses `{"C":[4],"N":[3,5],...}` keyed by element symbol.
    pub fn from_json(text: &str) -> Result<Self, ChemError> {
        let raw: BTreeMap<String, Vec<u8>> =
            serde_json::from_str(text).map_err(|e| ChemError::Io(e.to_string()))?;
        let mut entries = BTreeMap::new();
        for (sym, orders) in raw {
            let z = element::atomic_number(&sym).ok_or(ChemError::UnknownSymbol(sym))?;
            entries.insert(z, orders);
        }
        ValenceTable::new(entries)
    }

    pub fn load(path: &Path) -> Result<Self, ChemError> {
        let text = std::fs::read_to_string(path).map_err(|e| ChemError::Io(e.to_string()))?;
        ValenceTable::from_json(&text)
    }

    pub fn allowed(&self, z: u8) -> Option<&[u8]> {
        self.entries.get(&z).map(Vec::as_slice)
    }

    pub fn max_valence(&self, z: u8) -> Option<u8> {
        self.allowed(z).and_then(|o| o.last().copied())
    }

    pub fn contains(&self, z: u8) -> bool {
        self.entries.contains_key(&z)
    }

    pub fn elements(&self) -> impl Iterator<Item = u8> + '_ {
        self.entries.keys().copied()
    }
}

/// Rounds noisy scalars to atomic numbers and drops anything outside `1..=118`.
///
/// Non-finite values are treated as 0 and therefore dropped.
pub fn check_atomic_range(values: &[f64]) -> Vec<u8> {
    values
        .iter()
        .map(|&v| if v.is_finite() { v.round() } else { 0.0 })
        .filter(|&r| (1.0..=f64::from(element::MAX_ATOMIC_NUMBER)).contains(&r))
        .map(|r| r as u8)
        .collect()
}

/// Keeps the first bond per unordered pair and drops self-loops.
pub fn dedup_edges(edges: &[(usize, usize, BondType)]) -> Vec<(usize, usize, BondType)> {
    let mut seen = std::collections::HashSet::new();
    edges
        .iter()
        .copied()
        .filter(|&(i, j, _)| i != j && seen.insert((i.min(j), i.max(j))))
        .collect()
}

/// Bond type from the atomic-number gap: order `1 + (|z_i - z_j| mod 3)`.
pub fn heuristic_bond_type(z_i: u8, z_j: u8) -> BondType {
    match z_i.abs_diff(z_j) % 3 {
        0 => BondType::Single,
        1 => BondType::Double,
        _ => BondType::Triple,
    }
}
