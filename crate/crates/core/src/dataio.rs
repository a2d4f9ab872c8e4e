//! Dataset ingestion: `smiles,descriptor1;descriptor2` CSV files, the odour
//! vocabulary, multi-hot encoding, seeded 80/20 splits, and a force-directed
//! 3D embedder for training geometry.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemrules;
use crate::molgraph::MoleculeGraph;
use crate::smiles;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("no valid molecules in dataset")]
    EmptyDataset,
    #[error("need at least 5 molecules to split, got {0}")]
    TooFewSamples(usize),
    #[error("embedding did not reach the minimum separation for {smiles}")]
    EmbeddingFailed { smiles: String },
    #[error("malformed CSV: {0}")]
    Csv(String),
}

/// Sorted, deduplicated, lowercase descriptor terms.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct OdourVocabulary {
    terms: Vec<String>,
}

impl OdourVocabulary {
    pub fn new<I, S>(terms: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let set: BTreeSet<String> = terms
            .into_iter()
            .map(|t| normalize_term(t.as_ref()))
            .filter(|t| !t.is_empty())
            .collect();
        OdourVocabulary {
            terms: set.into_iter().collect(),
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.terms.binary_search(&normalize_term(term)).ok()
    }
}

fn normalize_term(t: &str) -> String {
    t.trim().to_lowercase()
}

/// Encoded descriptor vector plus how many input terms were not in the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiHot {
    pub y: Vec<f64>,
    pub unknown: Vec<String>,
}

pub fn multi_hot<I, S>(descriptors: I, vocab: &OdourVocabulary) -> MultiHot
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut y = vec![0.0; vocab.len()];
    let mut unknown = Vec::new();
    for d in descriptors {
        let d = d.as_ref();
        match vocab.index_of(d) {
            Some(k) => y[k] = 1.0,
            None => unknown.push(normalize_term(d)),
        }
    }
    if !unknown.is_empty() {
        log::warn!("dropped {} unknown descriptor(s): {}", unknown.len(), unknown.join(", "));
    }
    MultiHot { y, unknown }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledMolecule {
    pub smiles: String,
    pub descriptors: BTreeSet<String>,
    /// Parsed graph with embedded coordinates.
    pub graph: MoleculeGraph,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub vocabulary: OdourVocabulary,
    pub molecules: Vec<LabeledMolecule>,
    /// Rows dropped for unparseable or chemically invalid SMILES.
    pub skipped: usize,
}

impl Dataset {
    pub fn descriptor_vectors(&self) -> Vec<Vec<f64>> {
        self.molecules
            .iter()
            .map(|m| multi_hot(&m.descriptors, &self.vocabulary).y)
            .collect()
    }
}

#[derive(Debug, Deserialize)]
struct Row {
    smiles: String,
    #[serde(default)]
    descriptors: String,
}

/// Seed used for embedding row `k` of a file.
fn row_seed(k: usize) -> u64 {
    0x5ce7_0000 + k as u64
}

/// Reads `smiles,descriptors` with a header row. Rows whose SMILES fail to
/// parse, fail sanitization, or cannot be embedded are skipped and counted.
pub fn load_csv(path: &Path) -> Result<Dataset, DataError> {
    if !path.exists() {
        return Err(DataError::FileNotFound(path.display().to_string()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| DataError::Csv(e.to_string()))?;
    parse_csv(&text)
}

pub fn parse_csv(text: &str) -> Result<Dataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut raw: Vec<(String, BTreeSet<String>, MoleculeGraph)> = Vec::new();
    let mut skipped = 0;
    for (k, row) in reader.deserialize::<Row>().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                log::warn!("row {}: {e}", k + 2);
                skipped += 1;
                continue;
            }
        };
        let descriptors: BTreeSet<String> = row
            .descriptors
            .split(';')
            .map(normalize_term)
            .filter(|t| !t.is_empty())
            .collect();
        let graph = match smiles::parse(&row.smiles) {
            Ok(g) => g,
            Err(e) => {
                log::warn!("row {}: {e}", k + 2);
                skipped += 1;
                continue;
            }
        };
        let (_, report) = chemrules::sanitize_graph(&graph);
        if !report.final_verdict {
            log::warn!("row {}: {} fails validation", k + 2, row.smiles);
            skipped += 1;
            continue;
        }
        match embed_coordinates(&graph, row_seed(k)) {
            Ok(g) => raw.push((row.smiles, descriptors, g)),
            Err(e) => {
                log::warn!("row {}: {e}", k + 2);
                skipped += 1;
            }
        }
    }
    if skipped > 0 {
        log::info!("skipped {skipped} row(s)");
    }
    if raw.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let vocabulary = OdourVocabulary::new(raw.iter().flat_map(|r| r.1.iter()));
    let molecules = raw
        .into_iter()
        .map(|(smiles, descriptors, graph)| LabeledMolecule {
            smiles,
            descriptors,
            graph,
        })
        .collect();
    Ok(Dataset {
        vocabulary,
        molecules,
        skipped,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit<T> {
    pub train: Vec<T>,
    pub test: Vec<T>,
    pub seed: u64,
}

/// Seeded shuffle, then the first `round(0.8 n)` items train.
pub fn split_80_20<T: Clone>(items: &[T], seed: u64) -> Result<DataSplit<T>, DataError> {
    let n = items.len();
    if n < 5 {
        return Err(DataError::TooFewSamples(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (4 * n + 2) / 5;
    Ok(DataSplit {
        train: order[..n_train].iter().map(|&i| items[i].clone()).collect(),
        test: order[n_train..].iter().map(|&i| items[i].clone()).collect(),
        seed,
    })
}

pub const BOND_REST_LENGTH: f64 = 1.5;
pub const REPULSION_RANGE: f64 = 1.0;
pub const MIN_SEPARATION: f64 = 0.5;
pub const MAX_EMBED_ITERATIONS: usize = 10_000;

/// Force-directed layout: harmonic springs toward the rest length on bonds and
/// a harmonic push between any pair closer than the repulsion range. Starts
/// from seeded random positions, relaxes by gradient descent, and centers the
/// result at the origin.
pub fn embed_coordinates(g: &MoleculeGraph, seed: u64) -> Result<MoleculeGraph, DataError> {
    let n = g.num_atoms();
    if n <= 1 {
        let mut out = g.clone();
        out.set_positions(&vec![[0.0; 3]; n]).expect("finite");
        return Ok(out);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = BOND_REST_LENGTH * (n as f64).cbrt();
    let mut pos: Vec<[f64; 3]> = (0..n)
        .map(|_| [0; 3].map(|_| rng.gen_range(-spread..spread)))
        .collect();
    let bonded: BTreeMap<(usize, usize), ()> = g.bonds().map(|b| ((b.i, b.j), ())).collect();
    let step = 0.1;
    let mut force = vec![[0.0f64; 3]; n];
    for _ in 0..MAX_EMBED_ITERATIONS {
        force.iter_mut().for_each(|f| *f = [0.0; 3]);
        for i in 0..n {
            for j in i + 1..n {
                let d = [pos[i][0] - pos[j][0], pos[i][1] - pos[j][1], pos[i][2] - pos[j][2]];
                let r = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt().max(1e-9);
                let mut mag = 0.0;
                if bonded.contains_key(&(i, j)) {
                    mag -= r - BOND_REST_LENGTH;
                }
                if r < REPULSION_RANGE {
                    mag += REPULSION_RANGE - r;
                }
                for a in 0..3 {
                    let f = mag * d[a] / r;
                    force[i][a] += f;
                    force[j][a] -= f;
                }
            }
        }
        let mut max_move = 0.0f64;
        for (p, f) in pos.iter_mut().zip(&force) {
            for a in 0..3 {
                let m = step * f[a];
                p[a] += m;
                max_move = max_move.max(m.abs());
            }
        }
        if max_move < 1e-9 {
            break;
        }
    }
    let mut centroid = [0.0; 3];
    for p in &pos {
        for a in 0..3 {
            centroid[a] += p[a] / n as f64;
        }
    }
    for p in &mut pos {
        for a in 0..3 {
            p[a] -= centroid[a];
        }
    }
    let min_sep = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .map(|(i, j)| crate::molgraph::distance(&pos[i], &pos[j]))
        .fold(f64::INFINITY, f64::min);
    if !(min_sep >= MIN_SEPARATION) || pos.iter().flatten().any(|v| !v.is_finite()) {
        return Err(DataError::EmbeddingFailed {
            smiles: smiles::write(g).unwrap_or_default(),
        });
    }
    let mut out = g.clone();
    out.set_positions(&pos).expect("finite positions");
    Ok(out)
}

/// Small fixture dataset bundled with the crate.
pub const MINI_SCENTS_CSV: &str = include_str!("../data/mini_scents.csv");

pub fn load_bundled() -> Result<Dataset, DataError> {
    parse_csv(MINI_SCENTS_CSV)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::distance;
    use proptest::prelude::*;

    #[test]
    fn csv_format() {
        let d = parse_csv("smiles,descriptors\nCCO,floral;fruity\n").unwrap();
        assert_eq!(d.molecules.len(), 1);
        assert_eq!(d.vocabulary.terms(), &["floral", "fruity"]);
        assert_eq!(d.descriptor_vectors(), vec![vec![1.0, 1.0]]);
        assert_eq!(d.skipped, 0);
    }

    #[test]
    fn bad_smiles_skipped() {
        assert_eq!(parse_csv("smiles,descriptors\nC(C,floral\n"), Err(DataError::EmptyDataset));
        let d = parse_csv("smiles,descriptors\nC(C,floral\nCC,Fruity ; sweet\n").unwrap();
        assert_eq!(d.skipped, 1);
        assert_eq!(d.vocabulary.terms(), &["fruity", "sweet"]);
        let d = parse_csv("smiles,descriptors\nC(C)(C)(C)(C)C,odd\nCC,sweet\n").unwrap();
        assert_eq!(d.skipped, 1);
    }

    #[test]
    fn empty_and_missing_files() {
        assert_eq!(parse_csv(""), Err(DataError::EmptyDataset));
        assert_eq!(parse_csv("smiles,descriptors\n"), Err(DataError::EmptyDataset));
        assert!(matches!(load_csv(Path::new("/nonexistent/x.csv")), Err(DataError::FileNotFound(_))));
    }

    #[test]
    fn multi_hot_examples() {
        let v = OdourVocabulary::new(["musky", "Floral", "floral"]);
        assert_eq!(v.terms(), &["floral", "musky"]);
        assert_eq!(multi_hot(Vec::<&str>::new(), &v).y, vec![0.0, 0.0]);
        assert_eq!(multi_hot(["floral", "musky"], &v).y, vec![1.0, 1.0]);
        let m = multi_hot(["floral", "unknown_term"], &v);
        assert_eq!(m.y, vec![1.0, 0.0]);
        assert_eq!(m.unknown, vec!["unknown_term"]);
    }

    #[test]
    fn split_examples() {
        let items: Vec<usize> = (0..10).collect();
        let a = split_80_20(&items, 42).unwrap();
        let b = split_80_20(&items, 42).unwrap();
        assert_eq!((a.train.len(), a.test.len()), (8, 2));
        assert_eq!(a, b);
        let five = split_80_20(&items[..5], 1).unwrap();
        assert_eq!((five.train.len(), five.test.len()), (4, 1));
        assert_eq!(split_80_20(&items[..4], 1), Err(DataError::TooFewSamples(4)));
    }

    proptest! {
        #[test]
        fn split_disjoint_and_ratio(n in 5usize..300, seed in any::<u64>()) {
            let items: Vec<usize> = (0..n).collect();
            let s = split_80_20(&items, seed).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, items);
            let ideal = 0.8 * n as f64;
            prop_assert!((s.train.len() as f64 - ideal).abs() <= 1.0);
        }
    }

    #[test]
    fn embed_single_atom_at_origin() {
        let g = smiles::parse("C").unwrap();
        assert_eq!(embed_coordinates(&g, 1).unwrap().positions(), vec![[0.0; 3]]);
    }

    #[test]
    fn embed_pair_near_rest_length() {
        let g = smiles::parse("CO").unwrap();
        let e = embed_coordinates(&g, 2).unwrap();
        let d = e.pairwise_distance(0, 1).unwrap();
        assert!((1.3..=1.7).contains(&d), "{d}");
    }

    #[test]
    fn embed_benzene_symmetric() {
        let g = smiles::parse("c1ccccc1").unwrap();
        let e = embed_coordinates(&g, 3).unwrap();
        let d: Vec<f64> = e.bonds().map(|b| e.pairwise_distance(b.i, b.j).unwrap()).collect();
        let (lo, hi) = d.iter().fold((f64::MAX, f64::MIN), |(l, h), &v| (l.min(v), h.max(v)));
        assert!(hi <= 1.1 * lo, "{d:?}");
    }

    #[test]
    fn embed_centered_separated_deterministic() {
        for smi in ["CC(C)CCOC(C)=O", "CC12CCC(CC1)C(C)(C)O2", "c1ccc2ccccc2c1", "O.CC"] {
            let g = smiles::parse(smi).unwrap();
            let a = embed_coordinates(&g, 9).unwrap();
            assert_eq!(a, embed_coordinates(&g, 9).unwrap());
            let pos = a.positions();
            for axis in 0..3 {
                let c: f64 = pos.iter().map(|p| p[axis]).sum::<f64>() / pos.len() as f64;
                assert!(c.abs() < 1e-9);
            }
            for i in 0..pos.len() {
                for j in i + 1..pos.len() {
                    assert!(distance(&pos[i], &pos[j]) >= MIN_SEPARATION);
                }
            }
            assert!(a.is_isomorphic(&g));
        }
    }

    #[test]
    fn bundled_dataset_loads() {
        let d = load_bundled().unwrap();
        assert_eq!(d.skipped, 0, "bundled rows must all be valid");
        assert!(d.molecules.len() >= 150);
        assert!(d.vocabulary.index_of("floral").is_some());
        assert!(d.vocabulary.index_of("fruity").is_some());
        for m in &d.molecules {
            let canon = smiles::canonicalize(&smiles::parse(&m.smiles).unwrap()).unwrap();
            assert_eq!(smiles::canonicalize(&m.graph).unwrap(), canon);
        }
    }
}
