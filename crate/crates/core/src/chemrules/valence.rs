use serde::Serialize;

use super::aromatic::kekule_matching;
use super::{ChemError, ValenceTable};
use crate::molgraph::{BondType, MoleculeGraph};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AtomValence {
    pub index: usize,
    pub atomic_number: u8,
    pub bond_order_sum: u32,
    pub max_valence: u8,
    pub implicit_h: u8,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValenceVerdict {
    pub pass: bool,
    pub atoms: Vec<AtomValence>,
}

impl ValenceVerdict {
    pub fn failures(&self) -> impl Iterator<Item = &AtomValence> {
        self.atoms.iter().filter(|a| !a.ok)
    }
}

/// Per-atom bond-order sums used by valence and formal-charge checks.
///
/// Aromatic bonds count as 1 each plus 1 for the atom's double bond in a
/// Kekulé assignment of the aromatic system. When no Kekulé assignment exists
/// each aromatic bond counts 1.5 and the total is rounded half-up.
pub(crate) fn bond_order_sums(g: &MoleculeGraph) -> Vec<u32> {
    let matching = kekule_matching(g);
    let mut localized = vec![0u32; g.num_atoms()];
    let mut aromatic = vec![0u32; g.num_atoms()];
    for b in g.bonds() {
        match b.kind.order() {
            Some(o) => {
                localized[b.i] += u32::from(o);
                localized[b.j] += u32::from(o);
            }
            None => {
                aromatic[b.i] += 1;
                aromatic[b.j] += 1;
            }
        }
    }
    (0..g.num_atoms())
        .map(|i| {
            let k = aromatic[i];
            let extra = if k == 0 {
                0
            } else {
                match &matching {
                    Some(m) => k + u32::from(m[i].is_some()),
                    None => (3 * k).div_ceil(2),
                }
            };
            localized[i] + extra
        })
        .collect()
}

/// Checks every atom's bond-order sum against the largest allowed valence.
///
/// Implicit hydrogens raise the sum to the smallest allowed valence that is
/// not below it.
pub fn valence_check(g: &MoleculeGraph, table: &ValenceTable) -> Result<ValenceVerdict, ChemError> {
    for atom in g.atoms() {
        if !table.contains(atom.atomic_number) {
            return Err(ChemError::UnknownElement(atom.atomic_number));
        }
    }
    let sums = bond_order_sums(g);
    let atoms: Vec<AtomValence> = g
        .atoms()
        .iter()
        .zip(&sums)
        .enumerate()
        .map(|(index, (atom, &sum))| {
            let allowed = table.allowed(atom.atomic_number).unwrap_or(&[]);
            let max_valence = allowed.last().copied().unwrap_or(0);
            let target = allowed.iter().copied().find(|&v| u32::from(v) >= sum);
            AtomValence {
                index,
                atomic_number: atom.atomic_number,
                bond_order_sum: sum,
                max_valence,
                implicit_h: target.map_or(0, |v| (u32::from(v) - sum) as u8),
                ok: target.is_some(),
            }
        })
        .collect();
    Ok(ValenceVerdict {
        pass: atoms.iter().all(|a| a.ok),
        atoms,
    })
}

pub(crate) fn has_aromatic(g: &MoleculeGraph) -> bool {
    g.bonds().any(|b| b.kind == BondType::Aromatic)
}
