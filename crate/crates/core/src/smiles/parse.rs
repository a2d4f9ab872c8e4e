use std::collections::{BTreeMap, HashSet};

use super::SmilesError;
use crate::element;
use crate::molgraph::{Atom, BondType, MoleculeGraph};

struct Parser<'a> {
    text: &'a [u8],
    pos: usize,
    atoms: Vec<(u8, bool)>,
    bonds: Vec<(usize, usize, BondType)>,
    pairs: HashSet<(usize, usize)>,
    prev: Option<usize>,
    pending: Option<BondType>,
    branches: Vec<Option<usize>>,
    rings: BTreeMap<u32, (usize, Option<BondType>)>,
    just_opened: bool,
}

/// Parses a SMILES string into a graph with all positions at the origin.
///
/// Implicit and bracket hydrogen counts are not materialized.
pub fn parse(s: &str) -> Result<MoleculeGraph, SmilesError> {
    if let Some((position, _)) = s.char_indices().find(|(_, c)| !c.is_ascii()) {
        return Err(SmilesError::syntax(position, "non-ASCII character"));
    }
    let mut p = Parser {
        text: s.as_bytes(),
        pos: 0,
        atoms: Vec::new(),
        bonds: Vec::new(),
        pairs: HashSet::new(),
        prev: None,
        pending: None,
        branches: Vec::new(),
        rings: BTreeMap::new(),
        just_opened: false,
    };
    p.run()?;
    let atoms = p.atoms.iter().map(|&(z, _)| Atom::element(z)).collect();
    let mut g = MoleculeGraph::new(atoms).expect("origin positions are finite");
    for (i, j, kind) in p.bonds {
        g.add_bond(i, j, kind).expect("bonds checked during parsing");
    }
    Ok(g)
}

impl Parser<'_> {
    fn peek(&self) -> Option<u8> {
        self.text.get(self.pos).copied()
    }

    fn err<T>(&self, reason: &str) -> Result<T, SmilesError> {
        Err(SmilesError::syntax(self.pos, reason))
    }

    fn run(&mut self) -> Result<(), SmilesError> {
        if self.text.is_empty() {
            return self.err("empty SMILES");
        }
        while let Some(c) = self.peek() {
            let opened = self.just_opened;
            self.just_opened = false;
            match c {
                b'(' => {
                    if self.prev.is_none() {
                        return self.err("branch without a preceding atom");
                    }
                    if self.pending.is_some() {
                        return self.err("bond symbol before branch");
                    }
                    self.branches.push(self.prev);
                    self.just_opened = true;
                    self.pos += 1;
                }
                b')' => {
                    if self.branches.is_empty() {
                        return self.err("unbalanced ')'");
                    }
                    if opened {
                        return self.err("empty branch");
                    }
                    if self.pending.is_some() {
                        return self.err("dangling bond symbol");
                    }
                    self.prev = self.branches.pop().flatten();
                    self.pos += 1;
                }
                b'.' => {
                    if self.pending.is_some() || opened {
                        return self.err("misplaced '.'");
                    }
                    self.prev = None;
                    self.pos += 1;
                }
                b'-' | b'=' | b'#' | b':' | b'/' | b'\\' => {
                    if self.pending.is_some() {
                        return self.err("consecutive bond symbols");
                    }
                    if self.prev.is_none() {
                        return self.err("bond symbol without a preceding atom");
                    }
                    self.pending = Some(match c {
                        b'=' => BondType::Double,
                        b'#' => BondType::Triple,
                        b':' => BondType::Aromatic,
                        _ => BondType::Single,
                    });
                    self.just_opened = opened;
                    self.pos += 1;
                }
                b'0'..=b'9' | b'%' => {
                    if opened {
                        return self.err("ring closure directly inside a branch");
                    }
                    self.ring_closure()?;
                }
                b'[' => {
                    let (z, aromatic) = self.bracket_atom()?;
                    self.push_atom(z, aromatic)?;
                }
                b'A'..=b'Z' | b'a'..=b'z' => {
                    let (z, aromatic) = self.organic_atom()?;
                    self.push_atom(z, aromatic)?;
                }
                b'$' => return self.err("quadruple bonds are not supported"),
                b'*' => return self.err("wildcard atoms are not supported"),
                _ => return self.err("unexpected character"),
            }
        }
        if self.pending.is_some() {
            return self.err("dangling bond symbol");
        }
        if !self.branches.is_empty() {
            return self.err("unclosed branch");
        }
        if let Some(digit) = self.rings.keys().next() {
            return Err(SmilesError::syntax(self.pos, &format!("unclosed ring {digit}")));
        }
        Ok(())
    }

    fn default_bond(&self, a: usize, b: usize) -> BondType {
        if self.atoms[a].1 && self.atoms[b].1 {
            BondType::Aromatic
        } else {
            BondType::Single
        }
    }

    fn add_bond(&mut self, a: usize, b: usize, kind: BondType) -> bool {
        let fresh = self.pairs.insert((a.min(b), a.max(b)));
        if fresh {
            self.bonds.push((a, b, kind));
        }
        fresh
    }

    fn push_atom(&mut self, z: u8, aromatic: bool) -> Result<(), SmilesError> {
        let idx = self.atoms.len();
        self.atoms.push((z, aromatic));
        if let Some(p) = self.prev {
            let kind = self.pending.take().unwrap_or_else(|| self.default_bond(p, idx));
            self.add_bond(p, idx, kind);
        }
        self.pending = None;
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_closure(&mut self) -> Result<(), SmilesError> {
        let start = self.pos;
        let number = if self.peek() == Some(b'%') {
            let digits = self.text.get(self.pos + 1..self.pos + 3);
            match digits {
                Some(d) if d.iter().all(u8::is_ascii_digit) => {
                    self.pos += 3;
                    u32::from(d[0] - b'0') * 10 + u32::from(d[1] - b'0')
                }
                _ => return self.err("'%' must be followed by two digits"),
            }
        } else {
            let d = self.text[self.pos];
            self.pos += 1;
            u32::from(d - b'0')
        };
        let Some(current) = self.prev else {
            return Err(SmilesError::syntax(start, "ring closure without a preceding atom"));
        };
        let explicit = self.pending.take();
        match self.rings.remove(&number) {
            Some((other, opened_with)) => {
                if other == current {
                    return Err(SmilesError::syntax(start, "ring closure onto the same atom"));
                }
                let kind = match (opened_with, explicit) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(SmilesError::syntax(start, "conflicting ring-closure bond symbols"))
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.default_bond(other, current),
                };
                if !self.add_bond(other, current, kind) {
                    return Err(SmilesError::syntax(start, "ring closure duplicates an existing bond"));
                }
            }
            None => {
                self.rings.insert(number, (current, explicit));
            }
        }
        Ok(())
    }

    fn organic_atom(&mut self) -> Result<(u8, bool), SmilesError> {
        let start = self.pos;
        let c = self.text[self.pos];
        let next = self.text.get(self.pos + 1).copied();
        let (symbol, len, aromatic) = match (c, next) {
            (b'C', Some(b'l')) => ("Cl", 2, false),
            (b'B', Some(b'r')) => ("Br", 2, false),
            (b'B', _) => ("B", 1, false),
            (b'C', _) => ("C", 1, false),
            (b'N', _) => ("N", 1, false),
            (b'O', _) => ("O", 1, false),
            (b'P', _) => ("P", 1, false),
            (b'S', _) => ("S", 1, false),
            (b'F', _) => ("F", 1, false),
            (b'I', _) => ("I", 1, false),
            (b'b', _) => ("B", 1, true),
            (b'c', _) => ("C", 1, true),
            (b'n', _) => ("N", 1, true),
            (b'o', _) => ("O", 1, true),
            (b'p', _) => ("P", 1, true),
            (b's', _) => ("S", 1, true),
            _ => {
                let end = self.text[start..]
                    .iter()
                    .position(|b| !b.is_ascii_alphabetic())
                    .map_or(self.text.len(), |k| start + k)
                    .min(start + 2);
                let symbol = String::from_utf8_lossy(&self.text[start..end]).into_owned();
                return Err(SmilesError::UnknownElement {
                    position: start,
                    symbol,
                });
            }
        };
        self.pos += len;
        Ok((element::atomic_number(symbol).expect("organic subset"), aromatic))
    }

    fn bracket_atom(&mut self) -> Result<(u8, bool), SmilesError> {
        self.pos += 1;
        if matches!(self.peek(), Some(b'0'..=b'9')) {
            return self.err("isotopes are not supported");
        }
        let start = self.pos;
        let first = match self.peek() {
            Some(c) if c.is_ascii_alphabetic() => c,
            _ => return self.err("expected element symbol"),
        };
        let second = self.text.get(self.pos + 1).copied().filter(u8::is_ascii_lowercase);
        let (z, aromatic, len) = if first.is_ascii_lowercase() {
            let two = second.map(|s| [first.to_ascii_uppercase(), s]);
            match two.as_ref().map(|t| std::str::from_utf8(t).unwrap_or("")) {
                Some(sym @ ("Se" | "As")) => (element::atomic_number(sym), true, 2),
                _ => {
                    let sym = (first.to_ascii_uppercase() as char).to_string();
                    let z = element::atomic_number(&sym).filter(|_| b"bcnops".contains(&first));
                    (z, true, 1)
                }
            }
        } else {
            let two = second
                .map(|s| format!("{}{}", first as char, s as char))
                .and_then(|sym| element::atomic_number(&sym));
            match two {
                Some(z) => (Some(z), false, 2),
                None => (element::atomic_number(&(first as char).to_string()), false, 1),
            }
        };
        let Some(z) = z else {
            let end = (start + 2).min(self.text.len());
            let symbol = String::from_utf8_lossy(&self.text[start..end])
                .trim_end_matches(|c: char| !c.is_ascii_alphabetic())
                .to_owned();
            return Err(SmilesError::UnknownElement {
                position: start,
                symbol,
            });
        };
        self.pos += len;
        if self.peek() == Some(b'@') {
            return self.err("stereo descriptors are not supported");
        }
        if self.peek() == Some(b'H') {
            self.pos += 1;
            while matches!(self.peek(), Some(b'0'..=b'9')) {
                self.pos += 1;
            }
        }
        if matches!(self.peek(), Some(b'+') | Some(b'-')) {
            return self.err("charges are not supported");
        }
        if self.peek() == Some(b':') {
            return self.err("atom classes are not supported");
        }
        if self.peek() != Some(b']') {
            return self.err("expected ']'");
        }
        self.pos += 1;
        Ok((z, aromatic))
    }
}
