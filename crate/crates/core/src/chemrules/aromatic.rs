//! Aromatic systems: Kekulé assignment, Hückel ring check, perception.

use serde::Serialize;

use super::valence::{bond_order_sums, has_aromatic};
use super::{ChemError, ValenceTable};
use crate::element;
use crate::molgraph::{BondType, MoleculeGraph};

/// Longest ring searched when looking for a Hückel cycle through an aromatic bond.
const MAX_AROMATIC_RING: usize = 8;
/// Ring sizes considered when perceiving aromaticity in Kekulé input.
const PERCEIVED_RING_SIZES: std::ops::RangeInclusive<usize> = 5..=7;
const MATCHING_BUDGET: usize = 200_000;
const CYCLE_LIMIT: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Must,
    Optional,
    Never,
}

fn aromatic_capable(z: u8) -> bool {
    matches!(z, 6 | 7 | 8 | 16)
}

fn roles(g: &MoleculeGraph) -> Vec<Option<Role>> {
    let mut localized = vec![0u32; g.num_atoms()];
    let mut multiple = vec![false; g.num_atoms()];
    let mut aromatic = vec![0u32; g.num_atoms()];
    for b in g.bonds() {
        match b.kind.order() {
            Some(o) => {
                for a in [b.i, b.j] {
                    localized[a] += u32::from(o);
                    multiple[a] |= o > 1;
                }
            }
            None => {
                aromatic[b.i] += 1;
                aromatic[b.j] += 1;
            }
        }
    }
    g.atoms()
        .iter()
        .enumerate()
        .map(|(i, atom)| {
            if aromatic[i] == 0 {
                return None;
            }
            let role = if multiple[i] {
                Role::Never
            } else {
                match atom.atomic_number {
                    6 => Role::Must,
                    7 | 15 if localized[i] + aromatic[i] == 2 => Role::Optional,
                    _ => Role::Never,
                }
            };
            Some(role)
        })
        .collect()
}

/// Partner of each atom in a Kekulé double-bond assignment of the aromatic bonds.
///
/// Every aromatic carbon without an exocyclic multiple bond must receive
/// exactly one partner; two-connected aromatic nitrogens may take one.
/// Returns `None` when no assignment exists.
pub(crate) fn kekule_matching(g: &MoleculeGraph) -> Option<Vec<Option<usize>>> {
    let n = g.num_atoms();
    let mut partner = vec![None; n];
    if !has_aromatic(g) {
        return Some(partner);
    }
    let roles = roles(g);
    let mut candidates: Vec<Vec<usize>> = vec![Vec::new(); n];
    for b in g.bonds().filter(|b| b.kind == BondType::Aromatic) {
        let ok = |a: usize| matches!(roles[a], Some(Role::Must) | Some(Role::Optional));
        if ok(b.i) && ok(b.j) {
            candidates[b.i].push(b.j);
            candidates[b.j].push(b.i);
        }
    }
    for list in &mut candidates {
        list.sort_by_key(|&v| (roles[v] != Some(Role::Must), v));
    }
    let must: Vec<usize> = (0..n).filter(|&i| roles[i] == Some(Role::Must)).collect();
    let optional: Vec<usize> = (0..n)
        .filter(|&i| roles[i] == Some(Role::Optional) && !candidates[i].is_empty())
        .collect();
    // Match as many optional atoms as possible; the rest donate a lone pair.
    let k = if optional.len() <= MAX_OPTIONAL_SUBSETS { optional.len() } else { 0 };
    let mut masks: Vec<u32> = (0..1u32 << k).collect();
    masks.sort_by_key(|m| std::cmp::Reverse(m.count_ones()));
    for mask in masks {
        let mut required = must.clone();
        required.extend((0..k).filter(|b| mask >> b & 1 == 1).map(|b| optional[b]));
        partner.iter_mut().for_each(|p| *p = None);
        let mut budget = MATCHING_BUDGET;
        if assign(&required, &candidates, &mut partner, &mut budget) {
            return Some(partner);
        }
    }
    None
}

const MAX_OPTIONAL_SUBSETS: usize = 8;

fn assign(
    must: &[usize],
    candidates: &[Vec<usize>],
    partner: &mut [Option<usize>],
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    // Most constrained unmatched atom first.
    let mut pick: Option<(usize, usize)> = None;
    for &u in must {
        if partner[u].is_some() {
            continue;
        }
        let free = candidates[u].iter().filter(|&&v| partner[v].is_none()).count();
        if free == 0 {
            return false;
        }
        if pick.is_none_or(|(_, best)| free < best) {
            pick = Some((u, free));
        }
    }
    let Some((u, _)) = pick else {
        return true;
    };
    for &v in &candidates[u] {
        if partner[v].is_some() {
            continue;
        }
        partner[u] = Some(v);
        partner[v] = Some(u);
        if assign(must, candidates, partner, budget) {
            return true;
        }
        partner[u] = None;
        partner[v] = None;
    }
    false
}

/// Rewrites aromatic bonds as alternating single and double bonds.
pub fn kekulize(g: &MoleculeGraph) -> Result<MoleculeGraph, ChemError> {
    let matching = kekule_matching(g).ok_or(ChemError::Kekulization)?;
    let mut out = g.clone();
    let aromatic: Vec<_> = g.bonds().filter(|b| b.kind == BondType::Aromatic).collect();
    for b in aromatic {
        let kind = if matching[b.i] == Some(b.j) {
            BondType::Double
        } else {
            BondType::Single
        };
        out.set_bond_type(b.i, b.j, kind).expect("bond exists");
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AromaticityVerdict {
    pub pass: bool,
    pub aromatic_ok: bool,
    pub charge_ok: bool,
    pub formal_charges: Vec<i32>,
    pub detail: Vec<String>,
}

/// Simple cycles through bond `(u, v)` using only edges in `adj`, as atom lists starting at `u`.
fn cycles_through(adj: &[Vec<usize>], u: usize, v: usize, max_len: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut path = vec![u, v];
    let mut on_path = vec![false; adj.len()];
    on_path[u] = true;
    on_path[v] = true;
    extend_cycle(adj, u, max_len, &mut path, &mut on_path, &mut out);
    out
}

fn extend_cycle(
    adj: &[Vec<usize>],
    start: usize,
    max_len: usize,
    path: &mut Vec<usize>,
    on_path: &mut [bool],
    out: &mut Vec<Vec<usize>>,
) {
    if out.len() >= CYCLE_LIMIT {
        return;
    }
    let last = *path.last().expect("nonempty path");
    for &w in &adj[last] {
        if w == start && path.len() >= 3 {
            out.push(path.clone());
            continue;
        }
        if on_path[w] || path.len() >= max_len {
            continue;
        }
        on_path[w] = true;
        path.push(w);
        extend_cycle(adj, start, max_len, path, on_path, out);
        path.pop();
        on_path[w] = false;
    }
}

fn huckel(electrons: u32) -> bool {
    electrons >= 2 && (electrons - 2).is_multiple_of(4)
}

/// Ring-level aromaticity problems, empty when every aromatic bond sits on a Hückel ring.
pub(crate) fn aromatic_ring_problems(g: &MoleculeGraph) -> Vec<String> {
    let mut problems = Vec::new();
    if !has_aromatic(g) {
        return problems;
    }
    let mut adj = vec![Vec::new(); g.num_atoms()];
    let mut in_system = vec![false; g.num_atoms()];
    for b in g.bonds().filter(|b| b.kind == BondType::Aromatic) {
        adj[b.i].push(b.j);
        adj[b.j].push(b.i);
        in_system[b.i] = true;
        in_system[b.j] = true;
    }
    for (i, atom) in g.atoms().iter().enumerate() {
        if in_system[i] && !aromatic_capable(atom.atomic_number) {
            let sym = element::symbol(atom.atomic_number).unwrap_or("?");
            problems.push(format!("atom {i} ({sym}) cannot be aromatic"));
        }
    }
    if !problems.is_empty() {
        return problems;
    }
    let Some(matching) = kekule_matching(g) else {
        problems.push("aromatic system cannot be kekulized".to_owned());
        return problems;
    };
    let electrons = |a: usize| -> u32 {
        if matching[a].is_some() {
            1
        } else if g.atoms()[a].atomic_number == 6 {
            // carbon whose pi bond is exocyclic
            0
        } else {
            2
        }
    };
    for b in g.bonds().filter(|b| b.kind == BondType::Aromatic) {
        let cycles = cycles_through(&adj, b.i, b.j, MAX_AROMATIC_RING);
        if cycles.is_empty() {
            problems.push(format!("aromatic bond {}-{} is not on a ring", b.i, b.j));
            continue;
        }
        let ok = cycles
            .iter()
            .any(|c| huckel(c.iter().map(|&a| electrons(a)).sum()));
        if !ok {
            let counts: Vec<u32> = cycles
                .iter()
                .map(|c| c.iter().map(|&a| electrons(a)).sum())
                .collect();
            problems.push(format!(
                "aromatic bond {}-{} has no 4n+2 ring (pi electrons {:?})",
                b.i, b.j, counts
            ));
        }
    }
    problems
}

/// Formal charge `valence_electrons - nonbonded - bond_order_sum` for every atom.
///
/// Nonbonded electrons come from the table configuration the atom occupies:
/// `valence_electrons - total_valence`, floored at zero.
pub(crate) fn formal_charges(g: &MoleculeGraph, table: &ValenceTable) -> Result<Vec<i32>, String> {
    let sums = bond_order_sums(g);
    g.atoms()
        .iter()
        .zip(sums)
        .enumerate()
        .map(|(i, (atom, sum))| {
            let z = atom.atomic_number;
            let ve = element::valence_electrons(z)
                .ok_or_else(|| format!("atom {i}: valence electrons unknown for Z={z}"))?;
            let sum = sum as i32;
            let total = table
                .allowed(z)
                .and_then(|a| a.iter().copied().find(|&v| i32::from(v) >= sum))
                .map_or(sum, i32::from);
            let ve = i32::from(ve);
            let nonbonded = (ve - total).max(0);
            Ok(ve - nonbonded - total)
        })
        .collect()
}

/// Hückel check on aromatic rings plus the zero-formal-charge rule.
pub fn aromaticity_and_charge_check(g: &MoleculeGraph, table: &ValenceTable) -> AromaticityVerdict {
    let mut detail = aromatic_ring_problems(g);
    let aromatic_ok = detail.is_empty();
    let (charge_ok, formal_charges) = match formal_charges(g, table) {
        Ok(charges) => {
            for (i, &c) in charges.iter().enumerate() {
                if c != 0 {
                    detail.push(format!("atom {i} has formal charge {c}"));
                }
            }
            (charges.iter().all(|&c| c == 0), charges)
        }
        Err(msg) => {
            detail.push(msg);
            (false, Vec::new())
        }
    };
    AromaticityVerdict {
        pass: aromatic_ok && charge_ok,
        aromatic_ok,
        charge_ok,
        formal_charges,
        detail,
    }
}

/// Bonds whose removal disconnects the graph.
fn bridges(g: &MoleculeGraph) -> std::collections::HashSet<(usize, usize)> {
    let adj = g.adjacency();
    let n = g.num_atoms();
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0; n];
    let mut timer = 0;
    let mut out = std::collections::HashSet::new();
    fn dfs(
        u: usize,
        parent: usize,
        adj: &[Vec<(usize, BondType)>],
        disc: &mut [usize],
        low: &mut [usize],
        timer: &mut usize,
        out: &mut std::collections::HashSet<(usize, usize)>,
    ) {
        disc[u] = *timer;
        low[u] = *timer;
        *timer += 1;
        for &(v, _) in &adj[u] {
            if v == parent {
                continue;
            }
            if disc[v] == usize::MAX {
                dfs(v, u, adj, disc, low, timer, out);
                low[u] = low[u].min(low[v]);
                if low[v] > disc[u] {
                    out.insert((u.min(v), u.max(v)));
                }
            } else {
                low[u] = low[u].min(disc[v]);
            }
        }
    }
    for s in 0..n {
        if disc[s] == usize::MAX {
            dfs(s, usize::MAX, &adj, &mut disc, &mut low, &mut timer, &mut out);
        }
    }
    out
}

/// Converts Kekulé rings that satisfy Hückel's rule into aromatic bonds.
///
/// Existing aromatic bonds are first kekulized so the result does not depend
/// on how the input spelled its rings. Input that cannot be kekulized, or a
/// perception that would fail [`aromaticity_and_charge_check`], is returned
/// in Kekulé (or original) form.
pub fn aromatize(g: &MoleculeGraph) -> MoleculeGraph {
    let base = if has_aromatic(g) {
        match kekulize(g) {
            Ok(k) => k,
            Err(_) => return g.clone(),
        }
    } else {
        g.clone()
    };
    let bridges = bridges(&base);
    let adj = base.adjacency();
    let n = base.num_atoms();
    let is_ring_bond = |a: usize, b: usize| !bridges.contains(&(a.min(b), a.max(b)));

    // pi electrons each atom would donate, and its ring double-bond partner
    let mut donate: Vec<Option<u32>> = vec![None; n];
    let mut double_partner: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let z = base.atoms()[i].atomic_number;
        if !aromatic_capable(z) {
            continue;
        }
        let doubles: Vec<usize> = adj[i]
            .iter()
            .filter(|(_, k)| *k == BondType::Double)
            .map(|&(j, _)| j)
            .collect();
        if adj[i].iter().any(|(_, k)| *k == BondType::Triple) || doubles.len() > 1 {
            continue;
        }
        if let Some(&j) = doubles.first() {
            if is_ring_bond(i, j) {
                donate[i] = Some(1);
                double_partner[i] = Some(j);
            }
            continue;
        }
        donate[i] = match z {
            7 if adj[i].len() <= 3 => Some(2),
            8 | 16 if adj[i].len() == 2 => Some(2),
            _ => None,
        };
    }

    let mut ring_adj = vec![Vec::new(); n];
    for b in base.bonds() {
        if donate[b.i].is_some()
            && donate[b.j].is_some()
            && matches!(b.kind, BondType::Single | BondType::Double)
            && is_ring_bond(b.i, b.j)
        {
            ring_adj[b.i].push(b.j);
            ring_adj[b.j].push(b.i);
        }
    }
    let mut cycles: Vec<Vec<usize>> = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for b in base.bonds() {
        if !ring_adj[b.i].contains(&b.j) {
            continue;
        }
        for c in cycles_through(&ring_adj, b.i, b.j, *PERCEIVED_RING_SIZES.end()) {
            if !PERCEIVED_RING_SIZES.contains(&c.len()) {
                continue;
            }
            let mut key = c.clone();
            key.sort_unstable();
            if seen.insert(key) {
                cycles.push(c);
            }
        }
    }
    cycles.sort();
    let mut marked: Vec<bool> = cycles
        .iter()
        .map(|c| huckel(c.iter().map(|&a| donate[a].unwrap_or(0)).sum()))
        .collect();
    let edges_of = |c: &Vec<usize>| -> Vec<(usize, usize)> {
        (0..c.len())
            .map(|k| {
                let (a, b) = (c[k], c[(k + 1) % c.len()]);
                (a.min(b), a.max(b))
            })
            .collect()
    };
    loop {
        let mut aromatic_bonds = std::collections::HashSet::new();
        for (c, _) in cycles.iter().zip(&marked).filter(|(_, &m)| m) {
            aromatic_bonds.extend(edges_of(c));
        }
        let mut changed = false;
        for (c, m) in cycles.iter().zip(marked.iter_mut()) {
            if !*m {
                continue;
            }
            let consistent = c.iter().all(|&a| match double_partner[a] {
                Some(p) => aromatic_bonds.contains(&(a.min(p), a.max(p))),
                None => true,
            });
            if !consistent {
                *m = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut out = base.clone();
    let mut any = false;
    for (c, _) in cycles.iter().zip(&marked).filter(|(_, &m)| m) {
        for (a, b) in edges_of(c) {
            out.set_bond_type(a, b, BondType::Aromatic).expect("ring bond exists");
            any = true;
        }
    }
    if any && aromatic_ring_problems(&out).is_empty() {
        out
    } else {
        base
    }
}
