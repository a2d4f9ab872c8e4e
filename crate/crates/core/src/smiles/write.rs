use super::SmilesError;
use crate::chemrules::{aromatic_ring_problems, bond_order_sums, kekulize};
use crate::element;
use crate::molgraph::{BondType, MoleculeGraph};

/// How aromatic bonds are spelled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum AromaticStyle {
    /// Lowercase atoms, implicit ring bonds.
    Lowercase,
    /// Uppercase atoms joined by explicit `:` bonds.
    Explicit,
}

const ORGANIC: [u8; 10] = [5, 6, 7, 8, 9, 15, 16, 17, 35, 53];
const AROMATIC_LOWER: [u8; 6] = [5, 6, 7, 8, 15, 16];

pub(crate) fn check_writable(g: &MoleculeGraph) -> Result<(), SmilesError> {
    match g
        .atoms()
        .iter()
        .position(|a| element::symbol(a.atomic_number).is_none())
    {
        Some(atom) => Err(SmilesError::UnwritableGraph {
            atom,
            atomic_number: g.atoms()[atom].atomic_number,
        }),
        None => Ok(()),
    }
}

/// Picks the spelling for `g`'s aromatic bonds, kekulizing when the rings do not pass.
pub(crate) fn prepare(g: &MoleculeGraph) -> (MoleculeGraph, AromaticStyle) {
    if !g.bonds().any(|b| b.kind == BondType::Aromatic) {
        return (g.clone(), AromaticStyle::Lowercase);
    }
    if aromatic_ring_problems(g).is_empty() {
        return (g.clone(), AromaticStyle::Lowercase);
    }
    match kekulize(g) {
        Ok(k) => (k, AromaticStyle::Lowercase),
        Err(_) => (g.clone(), AromaticStyle::Explicit),
    }
}

/// Writes `g` in atom-index order. Output is deterministic but not canonical.
pub fn write(g: &MoleculeGraph) -> Result<String, SmilesError> {
    check_writable(g)?;
    let (g, style) = prepare(g);
    let rank: Vec<usize> = (0..g.num_atoms()).collect();
    Ok(write_ranked(&g, &rank, style))
}

/// Writes every component, starting each at its lowest-ranked atom and visiting
/// neighbors in rank order. Components are joined with `.` in order of their
/// lowest rank.
pub(crate) fn write_ranked(g: &MoleculeGraph, rank: &[usize], style: AromaticStyle) -> String {
    let n = g.num_atoms();
    let mut adj = g.adjacency();
    for list in &mut adj {
        list.sort_by_key(|&(v, _)| rank[v]);
    }
    let lowercase: Vec<bool> = (0..n)
        .map(|i| {
            style == AromaticStyle::Lowercase
                && AROMATIC_LOWER.contains(&g.atoms()[i].atomic_number)
                && adj[i].iter().any(|(_, k)| *k == BondType::Aromatic)
        })
        .collect();
    let sums = if lowercase.iter().any(|&l| l) {
        bond_order_sums(g)
    } else {
        Vec::new()
    };
    let tokens: Vec<String> = (0..n)
        .map(|i| {
            let z = g.atoms()[i].atomic_number;
            let sym = element::symbol(z).expect("checked writable");
            if lowercase[i] {
                let lower = sym.to_ascii_lowercase();
                if z == 7 && sums[i] == 2 {
                    "[nH]".to_owned()
                } else {
                    lower
                }
            } else if ORGANIC.contains(&z) {
                sym.to_owned()
            } else {
                format!("[{sym}]")
            }
        })
        .collect();

    let mut starts: Vec<usize> = g
        .connected_components()
        .into_iter()
        .map(|c| *c.iter().min_by_key(|&&a| rank[a]).expect("nonempty component"))
        .collect();
    starts.sort_by_key(|&a| rank[a]);

    let mut writer = Writer {
        adj: &adj,
        tokens: &tokens,
        lowercase: &lowercase,
        visited: vec![false; n],
        closures_open: vec![Vec::new(); n],
        closures_close: vec![Vec::new(); n],
        children: vec![Vec::new(); n],
        digits_in_use: Vec::new(),
        digit_of: std::collections::HashMap::new(),
        out: String::new(),
    };
    for (k, &s) in starts.iter().enumerate() {
        if k > 0 {
            writer.out.push('.');
        }
        writer.plan(s, usize::MAX);
        writer.emit(s);
    }
    writer.out
}

struct Writer<'a> {
    adj: &'a [Vec<(usize, BondType)>],
    tokens: &'a [String],
    lowercase: &'a [bool],
    visited: Vec<bool>,
    /// ring bonds opened at an atom: (partner, kind)
    closures_open: Vec<Vec<(usize, BondType)>>,
    /// ring bonds closed at an atom: partner that opened them
    closures_close: Vec<Vec<usize>>,
    children: Vec<Vec<(usize, BondType)>>,
    digits_in_use: Vec<bool>,
    digit_of: std::collections::HashMap<(usize, usize), usize>,
    out: String,
}

impl Writer<'_> {
    fn plan(&mut self, u: usize, parent: usize) {
        self.visited[u] = true;
        for &(v, kind) in self.adj[u].iter() {
            if v == parent {
                continue;
            }
            if self.visited[v] {
                // back edge to an ancestor still on the DFS path; record once
                if !self.closures_open[u].iter().any(|&(w, _)| w == v)
                    && !self.closures_close[u].contains(&v)
                    && !self.children[v].iter().any(|&(w, _)| w == u)
                {
                    self.closures_open[v].push((u, kind));
                    self.closures_close[u].push(v);
                }
                continue;
            }
            self.children[u].push((v, kind));
            self.plan(v, u);
        }
    }

    fn bond_symbol(&self, a: usize, b: usize, kind: BondType) -> &'static str {
        let both_lower = self.lowercase[a] && self.lowercase[b];
        match kind {
            BondType::Single if both_lower => "-",
            BondType::Single => "",
            BondType::Double => "=",
            BondType::Triple => "#",
            BondType::Aromatic if both_lower => "",
            BondType::Aromatic => ":",
        }
    }

    fn take_digit(&mut self) -> usize {
        match self.digits_in_use.iter().position(|used| !used) {
            Some(d) => {
                self.digits_in_use[d] = true;
                d + 1
            }
            None => {
                self.digits_in_use.push(true);
                self.digits_in_use.len()
            }
        }
    }

    fn push_digit(&mut self, d: usize) {
        if d < 10 {
            self.out.push(char::from(b'0' + d as u8));
        } else {
            self.out.push('%');
            self.out.push_str(&format!("{d:02}"));
        }
    }

    fn emit(&mut self, u: usize) {
        let token = self.tokens[u].clone();
        self.out.push_str(&token);
        let closing = std::mem::take(&mut self.closures_close[u]);
        let mut closing: Vec<(usize, usize)> = closing
            .into_iter()
            .map(|opener| (self.digit_of[&(opener, u)], opener))
            .collect();
        closing.sort_unstable();
        for &(d, _) in &closing {
            self.push_digit(d);
        }
        let opening = std::mem::take(&mut self.closures_open[u]);
        for (partner, kind) in opening {
            let d = self.take_digit();
            self.digit_of.insert((u, partner), d);
            let sym = self.bond_symbol(u, partner, kind);
            self.out.push_str(sym);
            self.push_digit(d);
        }
        for (d, _) in closing {
            self.digits_in_use[d - 1] = false;
        }
        let children = std::mem::take(&mut self.children[u]);
        let last = children.len().saturating_sub(1);
        for (k, (v, kind)) in children.into_iter().enumerate() {
            let sym = self.bond_symbol(u, v, kind);
            if k < last {
                self.out.push('(');
                self.out.push_str(sym);
                self.emit(v);
                self.out.push(')');
            } else {
                self.out.push_str(sym);
                self.emit(v);
            }
        }
    }
}
