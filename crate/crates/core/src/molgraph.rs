//! Molecular graph: heavy atoms with 3D positions and undirected typed bonds.
//!
//! Bonds are keyed by the sorted index pair, so an unordered pair can hold at
//! most one bond and self-loops are unrepresentable. Hydrogens are implicit.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("atom {atom} has a non-finite position")]
    NonFinitePosition { atom: usize },
    #[error("atoms {i} and {j} are already bonded")]
    DuplicateBond { i: usize, j: usize },
    #[error("self-loop on atom {i}")]
    SelfLoop { i: usize },
    #[error("atom index {index} out of range for {len} atoms")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("no bond between atoms {i} and {j}")]
    MissingBond { i: usize, j: usize },
    #[error("malformed graph JSON: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Atom {
    pub atomic_number: u8,
    pub position: [f64; 3],
}

impl Atom {
    pub fn new(atomic_number: u8, position: [f64; 3]) -> Self {
        Atom {
            atomic_number,
            position,
        }
    }

    /// Atom at the origin.
    pub fn element(atomic_number: u8) -> Self {
        Atom::new(atomic_number, [0.0; 3])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BondType {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondType {
    pub const ALL: [BondType; 4] = [
        BondType::Single,
        BondType::Double,
        BondType::Triple,
        BondType::Aromatic,
    ];

    /// Class index used by the bond classifier.
    pub fn class_index(self) -> usize {
        match self {
            BondType::Single => 0,
            BondType::Double => 1,
            BondType::Triple => 2,
            BondType::Aromatic => 3,
        }
    }

    pub fn from_class_index(index: usize) -> Option<BondType> {
        BondType::ALL.get(index).copied()
    }

    /// Integer order for the three localized types.
    pub fn order(self) -> Option<u8> {
        match self {
            BondType::Single => Some(1),
            BondType::Double => Some(2),
            BondType::Triple => Some(3),
            BondType::Aromatic => None,
        }
    }

    pub fn from_order(order: u8) -> Option<BondType> {
        match order {
            1 => Some(BondType::Single),
            2 => Some(BondType::Double),
            3 => Some(BondType::Triple),
            _ => None,
        }
    }
}

impl fmt::Display for BondType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BondType::Single => "single",
            BondType::Double => "double",
            BondType::Triple => "triple",
            BondType::Aromatic => "aromatic",
        };
        f.write_str(s)
    }
}

/// An undirected bond with `i < j`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Bond {
    pub i: usize,
    pub j: usize,
    pub kind: BondType,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MoleculeGraph {
    atoms: Vec<Atom>,
    bonds: BTreeMap<(usize, usize), BondType>,
}

fn key(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl MoleculeGraph {
    pub fn new(atoms: Vec<Atom>) -> Result<Self, GraphError> {
        if let Some(atom) = atoms
            .iter()
            .position(|a| a.position.iter().any(|c| !c.is_finite()))
        {
            return Err(GraphError::NonFinitePosition { atom });
        }
        Ok(MoleculeGraph {
            atoms,
            bonds: BTreeMap::new(),
        })
    }

    /// Atoms at the origin with the given atomic numbers.
    pub fn from_elements(atomic_numbers: &[u8]) -> Self {
        MoleculeGraph {
            atoms: atomic_numbers.iter().map(|&z| Atom::element(z)).collect(),
            bonds: BTreeMap::new(),
        }
    }

    pub fn num_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn num_bonds(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn atom(&self, i: usize) -> Result<&Atom, GraphError> {
        self.atoms.get(i).ok_or(GraphError::IndexOutOfRange {
            index: i,
            len: self.atoms.len(),
        })
    }

    pub fn atomic_numbers(&self) -> Vec<u8> {
        self.atoms.iter().map(|a| a.atomic_number).collect()
    }

    /// Bonds in sorted `(i, j)` order.
    pub fn bonds(&self) -> impl Iterator<Item = Bond> + '_ {
        self.bonds.iter().map(|(&(i, j), &kind)| Bond { i, j, kind })
    }

    pub fn bond(&self, i: usize, j: usize) -> Option<BondType> {
        self.bonds.get(&key(i, j)).copied()
    }

    fn check_index(&self, i: usize) -> Result<(), GraphError> {
        if i < self.atoms.len() {
            Ok(())
        } else {
            Err(GraphError::IndexOutOfRange {
                index: i,
                len: self.atoms.len(),
            })
        }
    }

    pub fn add_bond(&mut self, i: usize, j: usize, kind: BondType) -> Result<(), GraphError> {
        self.check_index(i)?;
        self.check_index(j)?;
        if i == j {
            return Err(GraphError::SelfLoop { i });
        }
        let k = key(i, j);
        if self.bonds.contains_key(&k) {
            return Err(GraphError::DuplicateBond { i: k.0, j: k.1 });
        }
        self.bonds.insert(k, kind);
        Ok(())
    }

    /// Builder form of [`MoleculeGraph::add_bond`].
    pub fn with_bond(mut self, i: usize, j: usize, kind: BondType) -> Result<Self, GraphError> {
        self.add_bond(i, j, kind)?;
        Ok(self)
    }

    pub fn set_bond_type(&mut self, i: usize, j: usize, kind: BondType) -> Result<(), GraphError> {
        match self.bonds.get_mut(&key(i, j)) {
            Some(slot) => {
                *slot = kind;
                Ok(())
            }
            None => Err(GraphError::MissingBond { i, j }),
        }
    }

    pub fn remove_bond(&mut self, i: usize, j: usize) -> Option<BondType> {
        self.bonds.remove(&key(i, j))
    }

    pub fn set_positions(&mut self, positions: &[[f64; 3]]) -> Result<(), GraphError> {
        if positions.len() != self.atoms.len() {
            return Err(GraphError::IndexOutOfRange {
                index: positions.len(),
                len: self.atoms.len(),
            });
        }
        if let Some(atom) = positions
            .iter()
            .position(|p| p.iter().any(|c| !c.is_finite()))
        {
            return Err(GraphError::NonFinitePosition { atom });
        }
        for (atom, p) in self.atoms.iter_mut().zip(positions) {
            atom.position = *p;
        }
        Ok(())
    }

    pub fn positions(&self) -> Vec<[f64; 3]> {
        self.atoms.iter().map(|a| a.position).collect()
    }

    pub fn pairwise_distance(&self, i: usize, j: usize) -> Result<f64, GraphError> {
        let a = self.atom(i)?.position;
        let b = self.atom(j)?.position;
        Ok(distance(&a, &b))
    }

    /// Neighbor lists in ascending neighbor order.
    pub fn adjacency(&self) -> Vec<Vec<(usize, BondType)>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for (&(i, j), &kind) in &self.bonds {
            adj[i].push((j, kind));
            adj[j].push((i, kind));
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }

    pub fn degree(&self, i: usize) -> usize {
        self.bonds
            .keys()
            .filter(|&&(a, b)| a == i || b == i)
            .count()
    }

    /// Connected components as sorted atom-index lists, ordered by smallest member.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let adj = self.adjacency();
        let mut seen = vec![false; self.atoms.len()];
        let mut components = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut stack = vec![start];
            let mut members = Vec::new();
            while let Some(u) = stack.pop() {
                members.push(u);
                for &(v, _) in &adj[u] {
                    if !seen[v] {
                        seen[v] = true;
                        stack.push(v);
                    }
                }
            }
            members.sort_unstable();
            components.push(members);
        }
        components
    }

    /// Induced subgraph on `indices`, renumbered in the given order.
    pub fn subgraph(&self, indices: &[usize]) -> MoleculeGraph {
        let mut remap = vec![usize::MAX; self.atoms.len()];
        for (new, &old) in indices.iter().enumerate() {
            remap[old] = new;
        }
        let atoms = indices.iter().map(|&i| self.atoms[i]).collect();
        let mut bonds = BTreeMap::new();
        for (&(i, j), &kind) in &self.bonds {
            let (a, b) = (remap[i], remap[j]);
            if a != usize::MAX && b != usize::MAX {
                bonds.insert(key(a, b), kind);
            }
        }
        MoleculeGraph { atoms, bonds }
    }

    /// Reorders atoms so that new atom `k` is old atom `order[k]`.
    ///
    /// `order` must be a permutation of `0..num_atoms`.
    pub fn permuted(&self, order: &[usize]) -> MoleculeGraph {
        assert_eq!(order.len(), self.atoms.len(), "permutation length");
        self.subgraph(order)
    }

    /// Typed-graph isomorphism: same elements, same bond types, positions ignored.
    pub fn is_isomorphic(&self, other: &MoleculeGraph) -> bool {
        isomorphism::isomorphic(self, other)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphJson::from(self)).expect("graph JSON serialization")
    }

    pub fn from_json(text: &str) -> Result<MoleculeGraph, GraphError> {
        let raw: GraphJson =
            serde_json::from_str(text).map_err(|e| GraphError::Json(e.to_string()))?;
        raw.try_into()
    }
}

pub fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

#[derive(Debug, Serialize, Deserialize)]
struct AtomJson {
    z: u8,
    xyz: [f64; 3],
}

/// Wire form: `{"atoms":[{"z":6,"xyz":[0,0,0]}],"bonds":[[0,1,"single"]]}`.
#[derive(Debug, Serialize, Deserialize)]
pub struct GraphJson {
    atoms: Vec<AtomJson>,
    bonds: Vec<(usize, usize, BondType)>,
}

impl From<&MoleculeGraph> for GraphJson {
    fn from(g: &MoleculeGraph) -> Self {
        GraphJson {
            atoms: g
                .atoms
                .iter()
                .map(|a| AtomJson {
                    z: a.atomic_number,
                    xyz: a.position,
                })
                .collect(),
            bonds: g.bonds().map(|b| (b.i, b.j, b.kind)).collect(),
        }
    }
}

impl TryFrom<GraphJson> for MoleculeGraph {
    type Error = GraphError;

    fn try_from(raw: GraphJson) -> Result<Self, GraphError> {
        let atoms = raw
            .atoms
            .into_iter()
            .map(|a| Atom::new(a.z, a.xyz))
            .collect();
        let mut g = MoleculeGraph::new(atoms)?;
        for (i, j, kind) in raw.bonds {
            g.add_bond(i, j, kind)?;
        }
        Ok(g)
    }
}

impl Serialize for MoleculeGraph {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        GraphJson::from(self).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for MoleculeGraph {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = GraphJson::deserialize(deserializer)?;
        raw.try_into().map_err(serde::de::Error::custom)
    }
}

mod isomorphism {
    use super::{BondType, MoleculeGraph};

    type Adjacency = Vec<Vec<(usize, BondType)>>;

    fn signature(g: &MoleculeGraph, adj: &Adjacency, i: usize) -> (u8, Vec<(BondType, u8)>) {
        let mut s: Vec<(BondType, u8)> = adj[i]
            .iter()
            .map(|&(j, k)| (k, g.atoms[j].atomic_number))
            .collect();
        s.sort_unstable();
        (g.atoms[i].atomic_number, s)
    }

    pub(super) fn isomorphic(a: &MoleculeGraph, b: &MoleculeGraph) -> bool {
        if a.num_atoms() != b.num_atoms() || a.num_bonds() != b.num_bonds() {
            return false;
        }
        let adj_a = a.adjacency();
        let adj_b = b.adjacency();
        let sig_a: Vec<_> = (0..a.num_atoms()).map(|i| signature(a, &adj_a, i)).collect();
        let sig_b: Vec<_> = (0..b.num_atoms()).map(|i| signature(b, &adj_b, i)).collect();
        let mut sa = sig_a.clone();
        let mut sb = sig_b.clone();
        sa.sort();
        sb.sort();
        if sa != sb {
            return false;
        }
        // Visit atoms of `a` in BFS order so each new atom tends to have a mapped neighbor.
        let mut order = Vec::with_capacity(a.num_atoms());
        let mut seen = vec![false; a.num_atoms()];
        for start in 0..a.num_atoms() {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut queue = std::collections::VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                order.push(u);
                for &(v, _) in &adj_a[u] {
                    if !seen[v] {
                        seen[v] = true;
                        queue.push_back(v);
                    }
                }
            }
        }
        let mut map = vec![usize::MAX; a.num_atoms()];
        let mut used = vec![false; b.num_atoms()];
        let ctx = Ctx {
            a,
            b,
            sig_a: &sig_a,
            sig_b: &sig_b,
            order: &order,
        };
        ctx.extend(0, &mut map, &mut used)
    }

    struct Ctx<'a> {
        a: &'a MoleculeGraph,
        b: &'a MoleculeGraph,
        sig_a: &'a [(u8, Vec<(BondType, u8)>)],
        sig_b: &'a [(u8, Vec<(BondType, u8)>)],
        order: &'a [usize],
    }

    impl Ctx<'_> {
        fn extend(&self, depth: usize, map: &mut [usize], used: &mut [bool]) -> bool {
            if depth == self.order.len() {
                return true;
            }
            let u = self.order[depth];
            for v in 0..self.b.num_atoms() {
                if used[v] || self.sig_a[u] != self.sig_b[v] {
                    continue;
                }
                let consistent = self.order[..depth].iter().all(|&w| {
                    self.a.bond(u, w) == self.b.bond(v, map[w])
                });
                if !consistent {
                    continue;
                }
                map[u] = v;
                used[v] = true;
                if self.extend(depth + 1, map, used) {
                    return true;
                }
                used[v] = false;
                map[u] = usize::MAX;
            }
            false
        }
    }
}
