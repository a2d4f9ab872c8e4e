//! Canonical SMILES by iterative invariant refinement plus individualization.
//!
//! Atoms start in classes keyed by (degree, element, aromaticity, incident
//! bond types). Classes are refined by the sorted multiset of neighbor
//! classes until stable. Remaining ties are broken by trying every atom of
//! the first tied class and keeping the lexicographically smallest string.

use super::write::{check_writable, prepare, write_ranked, AromaticStyle};
use super::SmilesError;
use crate::chemrules::aromatize;
use crate::molgraph::{BondType, MoleculeGraph};

pub fn canonicalize(g: &MoleculeGraph) -> Result<String, SmilesError> {
    check_writable(g)?;
    let perceived = aromatize(g);
    let mut parts: Vec<String> = perceived
        .connected_components()
        .into_iter()
        .map(|c| {
            let (sub, style) = prepare(&perceived.subgraph(&c));
            canonical_component(&sub, style)
        })
        .collect();
    parts.sort();
    Ok(parts.join("."))
}

type Adjacency = Vec<Vec<(usize, BondType)>>;

fn dense_ranks<K: Ord + Clone>(keys: &[K]) -> Vec<usize> {
    let mut sorted: Vec<K> = keys.to_vec();
    sorted.sort();
    sorted.dedup();
    keys.iter()
        .map(|k| sorted.binary_search(k).expect("key present"))
        .collect()
}

fn class_count(ranks: &[usize]) -> usize {
    let mut r = ranks.to_vec();
    r.sort_unstable();
    r.dedup();
    r.len()
}

fn refine(adj: &Adjacency, mut ranks: Vec<usize>) -> Vec<usize> {
    let mut classes = class_count(&ranks);
    loop {
        let keys: Vec<(usize, Vec<(usize, BondType)>)> = (0..ranks.len())
            .map(|i| {
                let mut nb: Vec<(usize, BondType)> =
                    adj[i].iter().map(|&(j, k)| (ranks[j], k)).collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let next = dense_ranks(&keys);
        let next_classes = class_count(&next);
        if next_classes == classes {
            return next;
        }
        classes = next_classes;
        ranks = next;
    }
}

fn initial_ranks(g: &MoleculeGraph, adj: &Adjacency) -> Vec<usize> {
    let keys: Vec<(usize, u8, bool, Vec<BondType>)> = (0..g.num_atoms())
        .map(|i| {
            let mut kinds: Vec<BondType> = adj[i].iter().map(|&(_, k)| k).collect();
            kinds.sort_unstable();
            let aromatic = kinds.contains(&BondType::Aromatic);
            (adj[i].len(), g.atoms()[i].atomic_number, aromatic, kinds)
        })
        .collect();
    dense_ranks(&keys)
}

fn canonical_component(g: &MoleculeGraph, style: AromaticStyle) -> String {
    let adj = g.adjacency();
    let ranks = refine(&adj, initial_ranks(g, &adj));
    let mut best: Option<String> = None;
    search(g, &adj, ranks, style, &mut best);
    best.unwrap_or_default()
}

fn search(
    g: &MoleculeGraph,
    adj: &Adjacency,
    ranks: Vec<usize>,
    style: AromaticStyle,
    best: &mut Option<String>,
) {
    let n = ranks.len();
    let mut counts = vec![0usize; n];
    for &r in &ranks {
        counts[r] += 1;
    }
    let Some(target) = (0..n).find(|&r| counts[r] > 1) else {
        let s = write_ranked(g, &ranks, style);
        if best.as_ref().is_none_or(|b| s < *b) {
            *best = Some(s);
        }
        return;
    };
    let cell: Vec<usize> = (0..n).filter(|&i| ranks[i] == target).collect();
    for &pick in &cell {
        let keys: Vec<(usize, u8)> = (0..n)
            .map(|i| (ranks[i], u8::from(!(i == pick || ranks[i] != target))))
            .collect();
        let split = refine(adj, dense_ranks(&keys));
        search(g, adj, split, style, best);
    }
}
