//! SMILES reading, writing, and canonicalization for a pragmatic subset:
//! organic-subset and bracket atoms, `- = # :` bonds, branches, ring
//! closures (including `%nn`), and `.` fragments. Stereo, isotopes, and
//! charges are rejected.

mod canon;
mod parse;
mod write;

use thiserror::Error;

pub use canon::canonicalize;
pub use parse::parse;
pub use write::write;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SmilesError {
    #[error("SMILES syntax error at {position}: {reason}")]
    Syntax { position: usize, reason: String },
    #[error("unknown element {symbol:?} at {position}")]
    UnknownElement { position: usize, symbol: String },
    #[error("atom {atom} has atomic number {atomic_number}, which has no element symbol")]
    UnwritableGraph { atom: usize, atomic_number: u8 },
}

impl SmilesError {
    pub(crate) fn syntax(position: usize, reason: &str) -> Self {
        SmilesError::Syntax {
            position,
            reason: reason.to_owned(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::{BondType, MoleculeGraph};
    use proptest::prelude::*;
    use BondType::*;

    fn bonds(g: &MoleculeGraph) -> Vec<(usize, usize, BondType)> {
        g.bonds().map(|b| (b.i, b.j, b.kind)).collect()
    }

    #[test]
    fn parse_ethanol() {
        let g = parse("CCO").unwrap();
        assert_eq!(g.atomic_numbers(), vec![6, 6, 8]);
        assert_eq!(bonds(&g), vec![(0, 1, Single), (1, 2, Single)]);
        assert!(g.positions().iter().all(|p| *p == [0.0; 3]));
    }

    #[test]
    fn parse_cyclopropane() {
        let g = parse("C1CC1").unwrap();
        assert_eq!(g.atomic_numbers(), vec![6, 6, 6]);
        assert_eq!(bonds(&g), vec![(0, 1, Single), (0, 2, Single), (1, 2, Single)]);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(parse("C(C"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("C)"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("C1CC"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("C()C"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("C="), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("=C"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse(""), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("C11"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("C12CC12"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("[NH4+]"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("[13C]"), Err(SmilesError::Syntax { .. })));
        assert!(matches!(parse("C[C@H](O)N"), Err(SmilesError::Syntax { .. })));
        assert_eq!(
            parse("[Xx]"),
            Err(SmilesError::UnknownElement {
                position: 1,
                symbol: "Xx".into()
            })
        );
        assert!(matches!(parse("CQ"), Err(SmilesError::UnknownElement { position: 1, .. })));
        assert!(matches!(parse("C\u{e9}"), Err(SmilesError::Syntax { position: 1, .. })));
    }

    #[test]
    fn parse_features() {
        let g = parse("c1ccccc1").unwrap();
        assert!(g.bonds().all(|b| b.kind == Aromatic));
        let g = parse("OC(=O)C#N").unwrap();
        assert_eq!(bonds(&g), vec![(0, 1, Single), (1, 2, Double), (1, 3, Single), (3, 4, Triple)]);
        let g = parse("c1ccccc1-c1ccccc1").unwrap();
        assert_eq!(g.bond(5, 6), Some(Single));
        let g = parse("[Se]C.[Na]").unwrap();
        assert_eq!(g.atomic_numbers(), vec![34, 6, 11]);
        assert_eq!(g.num_bonds(), 1);
        let g = parse("C%12CC%12").unwrap();
        assert_eq!(g.num_bonds(), 3);
        let g = parse("c1cc[nH]c1").unwrap();
        assert_eq!(g.atomic_numbers(), vec![6, 6, 6, 7, 6]);
        let g = parse("C=1CCC1").unwrap();
        assert_eq!(g.bond(0, 3), Some(Double));
        let g = parse("ClCBr").unwrap();
        assert_eq!(g.atomic_numbers(), vec![17, 6, 35]);
        let g = parse("[H][H]").unwrap();
        assert_eq!(g.atomic_numbers(), vec![1, 1]);
    }

    #[test]
    fn write_simple() {
        assert_eq!(write(&MoleculeGraph::from_elements(&[6])).unwrap(), "C");
        let g = parse("CCO").unwrap();
        assert_eq!(write(&g).unwrap(), "CCO");
        assert_eq!(
            write(&MoleculeGraph::from_elements(&[119])),
            Err(SmilesError::UnwritableGraph {
                atom: 0,
                atomic_number: 119
            })
        );
        assert_eq!(write(&MoleculeGraph::from_elements(&[26])).unwrap(), "[Fe]");
    }

    #[test]
    fn write_round_trips_ethanol() {
        let g = parse("OCC").unwrap();
        let back = parse(&write(&g).unwrap()).unwrap();
        assert!(back.is_isomorphic(&g));
        assert_eq!(back.num_atoms(), 3);
        assert_eq!(back.bonds().filter(|b| b.kind == Single).count(), 2);
    }

    #[test]
    fn write_kekulizes_failing_aromatic_ring() {
        // a lone aromatic pair kekulizes to a double bond
        let g = MoleculeGraph::from_elements(&[6, 6]).with_bond(0, 1, Aromatic).unwrap();
        assert_eq!(write(&g).unwrap(), "C=C");
        // an odd aromatic chain has no perfect matching: explicit ':' bonds
        let g = MoleculeGraph::from_elements(&[6, 6, 6])
            .with_bond(0, 1, Aromatic)
            .unwrap()
            .with_bond(1, 2, Aromatic)
            .unwrap();
        assert_eq!(write(&g).unwrap(), "C:C:C");
        assert!(parse("C:C:C").unwrap().is_isomorphic(&g));
        // aromatic bonds on a ring that fails Hückel but kekulizes
        let mut g = MoleculeGraph::from_elements(&[6, 6, 6, 6]);
        for i in 0..4 {
            g.add_bond(i, (i + 1) % 4, Aromatic).unwrap();
        }
        let s = write(&g).unwrap();
        assert!(s.contains('='), "{s}");
    }

    #[test]
    fn canonical_matches_write_for_single_atom() {
        let g = MoleculeGraph::from_elements(&[6]);
        assert_eq!(canonicalize(&g).unwrap(), write(&g).unwrap());
        assert_eq!(canonicalize(&g).unwrap(), "C");
    }

    #[test]
    fn canonical_ethanol_orders() {
        let a = canonicalize(&parse("CCO").unwrap()).unwrap();
        let b = canonicalize(&parse("OCC").unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, "CCO");
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for k in 0..=p.len() {
                let mut q = p.clone();
                q.insert(k, n - 1);
                out.push(q);
            }
        }
        out
    }

    /// Exhaustive permutation oracle over every atom ordering.
    #[test]
    fn canonical_invariant_under_all_orderings_small() {
        for smi in ["CCO", "C1CC1", "CC(C)=O", "C#CC=C", "OC1CC1N", "c1ccoc1", "CC(Cl)F"] {
            let g = parse(smi).unwrap();
            let reference = canonicalize(&g).unwrap();
            for p in permutations(g.num_atoms()) {
                assert_eq!(canonicalize(&g.permuted(&p)).unwrap(), reference, "{smi} under {p:?}");
            }
        }
    }

    #[test]
    fn canonical_aromatic_forms_agree() {
        let a = canonicalize(&parse("Cc1ccccc1").unwrap()).unwrap();
        let b = canonicalize(&parse("CC1=CC=CC=C1").unwrap()).unwrap();
        let c = canonicalize(&parse("C1=CC=C(C)C=C1").unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert_eq!(a, "Cc1ccccc1");
        let pyrrole = canonicalize(&parse("C1=CNC=C1").unwrap()).unwrap();
        assert_eq!(pyrrole, "c1cc[nH]c1");
        assert!(parse(&pyrrole).unwrap().is_isomorphic(&parse("c1ccnc1").unwrap()));
    }

    #[test]
    fn canonical_fragments_sorted() {
        let a = canonicalize(&parse("O.CC").unwrap()).unwrap();
        let b = canonicalize(&parse("CC.O").unwrap()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, "CC.O");
    }

    proptest! {
        #[test]
        fn parser_never_panics(s in "\\PC{0,24}") {
            let _ = parse(&s);
        }

        #[test]
        fn parser_never_panics_on_smiles_alphabet(s in "[CNOSPFIBrlcnosp\\[\\]()=#:%.0-9H+@-]{0,30}") {
            let _ = parse(&s);
        }
    }
}
