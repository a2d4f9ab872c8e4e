use serde::{Deserialize, Serialize};

use super::{aromaticity_and_charge_check, dedup_edges, kekulize, valence_check, ChemError, ValenceTable};
use crate::element::MAX_ATOMIC_NUMBER;
use crate::molgraph::{Atom, BondType, MoleculeGraph};

/// Atoms plus an unchecked edge list, as assembled by the generator.
///
/// Edges may repeat pairs, contain self-loops, or reference missing atoms;
/// the cascade cleans those up.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawMolecule {
    pub atoms: Vec<Atom>,
    pub edges: Vec<(usize, usize, BondType)>,
}

impl From<&MoleculeGraph> for RawMolecule {
    fn from(g: &MoleculeGraph) -> Self {
        RawMolecule {
            atoms: g.atoms().to_vec(),
            edges: g.bonds().map(|b| (b.i, b.j, b.kind)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    AtomicRange,
    Dedup,
    Valence,
    AromaticityCharge,
    Kekulization,
}

impl Stage {
    /// Cascade order.
    pub const ALL: [Stage; 5] = [
        Stage::AtomicRange,
        Stage::Dedup,
        Stage::Valence,
        Stage::AromaticityCharge,
        Stage::Kekulization,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::AtomicRange => "atomic_range",
            Stage::Dedup => "dedup",
            Stage::Valence => "valence",
            Stage::AromaticityCharge => "aromaticity_charge",
            Stage::Kekulization => "kekulization",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageResult {
    pub stage: Stage,
    pub status: StageStatus,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub stages: Vec<StageResult>,
    pub final_verdict: bool,
    /// Connected components of the checked graph; more than one is flagged, not failed.
    pub fragments: usize,
}

impl ValidationReport {
    pub fn first_failure(&self) -> Option<Stage> {
        self.stages
            .iter()
            .find(|s| s.status == StageStatus::Fail)
            .map(|s| s.stage)
    }

    pub fn stage(&self, stage: Stage) -> Option<&StageResult> {
        self.stages.iter().find(|s| s.stage == stage)
    }
}

struct Cascade {
    stages: Vec<StageResult>,
}

impl Cascade {
    fn record(&mut self, stage: Stage, ok: bool, detail: impl Into<String>) -> bool {
        self.stages.push(StageResult {
            stage,
            status: if ok { StageStatus::Pass } else { StageStatus::Fail },
            detail: detail.into(),
        });
        ok
    }

    fn finish(mut self, graph: MoleculeGraph) -> (MoleculeGraph, ValidationReport) {
        for stage in Stage::ALL.iter().skip(self.stages.len()) {
            self.stages.push(StageResult {
                stage: *stage,
                status: StageStatus::Skipped,
                detail: String::new(),
            });
        }
        let final_verdict = self.stages.iter().all(|s| s.status == StageStatus::Pass);
        let fragments = graph.connected_components().len();
        let report = ValidationReport {
            stages: self.stages,
            final_verdict,
            fragments,
        };
        (graph, report)
    }
}

pub fn sanitize(raw: &RawMolecule) -> (MoleculeGraph, ValidationReport) {
    sanitize_with(raw, &ValenceTable::default())
}

pub fn sanitize_graph(g: &MoleculeGraph) -> (MoleculeGraph, ValidationReport) {
    sanitize(&RawMolecule::from(g))
}

/// Runs the full cascade; the returned graph carries every correction that applied.
pub fn sanitize_with(raw: &RawMolecule, table: &ValenceTable) -> (MoleculeGraph, ValidationReport) {
    let mut cascade = Cascade { stages: Vec::new() };

    // atomic range: skip atoms outside 1..=118 and renumber the rest
    let mut remap = vec![None; raw.atoms.len()];
    let mut atoms = Vec::new();
    for (old, atom) in raw.atoms.iter().enumerate() {
        if (1..=MAX_ATOMIC_NUMBER).contains(&atom.atomic_number) {
            remap[old] = Some(atoms.len());
            let mut a = *atom;
            for c in &mut a.position {
                if !c.is_finite() {
                    *c = 0.0;
                }
            }
            atoms.push(a);
        }
    }
    let dropped = raw.atoms.len() - atoms.len();
    let ok = !atoms.is_empty();
    let detail = if ok {
        format!("{} atoms kept, {dropped} skipped", atoms.len())
    } else {
        format!("no atoms in range ({dropped} skipped)")
    };
    let empty = MoleculeGraph::new(Vec::new()).expect("empty graph");
    if !cascade.record(Stage::AtomicRange, ok, detail) {
        return cascade.finish(empty);
    }

    let mut dangling = 0;
    let edges: Vec<_> = raw
        .edges
        .iter()
        .filter_map(|&(i, j, k)| {
            match (remap.get(i).copied().flatten(), remap.get(j).copied().flatten()) {
                (Some(a), Some(b)) => Some((a, b, k)),
                _ => {
                    dangling += 1;
                    None
                }
            }
        })
        .collect();
    let unique = dedup_edges(&edges);
    let mut graph = MoleculeGraph::new(atoms).expect("positions sanitized");
    for &(i, j, k) in &unique {
        graph.add_bond(i, j, k).expect("deduplicated edge");
    }
    let removed = edges.len() - unique.len();
    cascade.record(
        Stage::Dedup,
        true,
        format!("{removed} duplicate or self-loop edges removed, {dangling} dangling edges dropped"),
    );

    match valence_check(&graph, table) {
        Ok(v) if v.pass => {
            let h: u32 = v.atoms.iter().map(|a| u32::from(a.implicit_h)).sum();
            cascade.record(Stage::Valence, true, format!("{h} implicit hydrogens"));
        }
        Ok(v) => {
            let bad: Vec<String> = v
                .failures()
                .map(|a| format!("atom {} (Z={}) order {} > {}", a.index, a.atomic_number, a.bond_order_sum, a.max_valence))
                .collect();
            cascade.record(Stage::Valence, false, bad.join("; "));
            return cascade.finish(graph);
        }
        Err(ChemError::UnknownElement(z)) => {
            cascade.record(Stage::Valence, false, format!("no valence entry for Z={z}"));
            return cascade.finish(graph);
        }
        Err(e) => {
            cascade.record(Stage::Valence, false, e.to_string());
            return cascade.finish(graph);
        }
    }

    let arom = aromaticity_and_charge_check(&graph, table);
    if !cascade.record(Stage::AromaticityCharge, arom.pass, arom.detail.join("; ")) {
        return cascade.finish(graph);
    }

    match kekulize(&graph) {
        Ok(k) => {
            let fragments = k.connected_components().len();
            let detail = if fragments > 1 {
                format!("{fragments} disconnected fragments")
            } else {
                String::new()
            };
            cascade.record(Stage::Kekulization, true, detail);
            cascade.finish(k)
        }
        Err(e) => {
            cascade.record(Stage::Kekulization, false, e.to_string());
            cascade.finish(graph)
        }
    }
}
