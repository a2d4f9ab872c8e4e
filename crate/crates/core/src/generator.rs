//! Reverse-diffusion sampling: Gaussian start, `T` denoising passes, atom
//! decoding, distance-based bond proposal, bond typing, and validation.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chemrules::{self, Stage, ValidationReport};
use crate::diffusion::{self, Checkpoint, DenoiserInput, DiffusionError, NoiseSchedule};
use crate::element;
use crate::molgraph::{Atom, BondType, MoleculeGraph};
use crate::numcore::{ParamStore, Tensor};
use crate::smiles;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("parameters are missing or incomplete: {0}")]
    UntrainedParams(String),
    #[error("invalid generation config: {0}")]
    BadConfig(String),
    #[error("no reports to score")]
    EmptyInput,
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Constrained,
    Unconstrained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BondSource {
    Classifier,
    Heuristic,
}

pub const DEFAULT_ALLOWLIST: [&str; 7] = ["C", "N", "O", "F", "P", "S", "Cl"];

/// Pairs closer than this become candidate bonds.
pub const EDGE_CUTOFF: f64 = 1.8;

/// Bound applied to carried-forward coordinates between denoising passes.
const COORD_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub mode: Mode,
    /// Element symbols kept in constrained mode.
    pub allowlist: Vec<String>,
    /// Fixed atom count; drawn from the training distribution when absent.
    pub n_atoms: Option<usize>,
    pub steps: usize,
    pub tau: f64,
    pub seed: u64,
    pub bond_source: BondSource,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        GenerationConfig {
            mode: Mode::Unconstrained,
            allowlist: DEFAULT_ALLOWLIST.map(String::from).to_vec(),
            n_atoms: None,
            steps: 1000,
            tau: 0.5,
            seed: 0,
            bond_source: BondSource::Classifier,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationError> {
        let bad = |m: String| Err(GenerationError::BadConfig(m));
        if self.steps == 0 {
            return bad("steps must be positive".into());
        }
        if !(self.tau > 0.0) {
            return bad(format!("tau must be positive, got {}", self.tau));
        }
        if self.n_atoms == Some(0) {
            return bad("n_atoms must be at least 1".into());
        }
        if self.mode == Mode::Constrained {
            if self.allowlist.is_empty() {
                return bad("constrained mode needs a nonempty allowlist".into());
            }
            self.allowed_numbers()?;
        }
        Ok(())
    }

    /// Atomic numbers of the allowlist.
    pub fn allowed_numbers(&self) -> Result<BTreeSet<u8>, GenerationError> {
        self.allowlist
            .iter()
            .map(|s| {
                element::atomic_number(s.trim())
                    .ok_or_else(|| GenerationError::BadConfig(format!("unknown element {s:?}")))
            })
            .collect()
    }
}

/// One generated sample and everything needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationReport {
    pub index: usize,
    pub raw_features: Vec<f64>,
    pub decoded_atoms: Vec<u8>,
    pub proposed_edges: Vec<(usize, usize)>,
    pub bonds: Vec<(usize, usize, BondType)>,
    pub validation: ValidationReport,
    pub smiles: Option<String>,
    pub corpus_match: bool,
}

/// Canonical SMILES of known molecules, for novelty reporting.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    canonical: BTreeSet<String>,
}

impl Corpus {
    pub fn new<I, S>(smiles_list: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let canonical = smiles_list
            .into_iter()
            .filter_map(|s| smiles::parse(s.as_ref()).ok())
            .filter_map(|g| smiles::canonicalize(&g).ok())
            .collect();
        Corpus { canonical }
    }

    /// The bundled mini dataset.
    pub fn bundled() -> Self {
        let mut reader = csv::Reader::from_reader(crate::dataio::MINI_SCENTS_CSV.as_bytes());
        Corpus::new(
            reader
                .records()
                .filter_map(Result::ok)
                .filter_map(|r| r.get(0).map(str::to_owned)),
        )
    }

    pub fn contains(&self, canonical_smiles: &str) -> bool {
        self.canonical.contains(canonical_smiles)
    }

    pub fn len(&self) -> usize {
        self.canonical.len()
    }

    pub fn is_empty(&self) -> bool {
        self.canonical.is_empty()
    }
}

/// nan_to_num → round → `[1, 118]` → allowlist (constrained mode only).
///
/// Returns the kept atomic numbers and, for each, its source node index.
pub fn decode_atoms(x: &[f64], mode: Mode, allowed: &BTreeSet<u8>) -> (Vec<u8>, Vec<usize>) {
    let mut atoms = Vec::new();
    let mut nodes = Vec::new();
    for (node, &v) in x.iter().enumerate() {
        let r = crate::numcore::nan_to_num(v).round();
        if !(1.0..=f64::from(element::MAX_ATOMIC_NUMBER)).contains(&r) {
            continue;
        }
        let z = r as u8;
        if mode == Mode::Constrained && !allowed.contains(&z) {
            continue;
        }
        atoms.push(z);
        nodes.push(node);
    }
    (atoms, nodes)
}

/// Unordered pairs `i < j` closer than [`EDGE_CUTOFF`]. Non-finite positions propose nothing.
pub fn propose_edges(coords: &[[f64; 3]]) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for i in 0..coords.len() {
        for j in i + 1..coords.len() {
            let d = crate::molgraph::distance(&coords[i], &coords[j]);
            if d < EDGE_CUTOFF {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// `(i, j, type)` triples.
pub type TypedEdges = Vec<(usize, usize, BondType)>;

/// Types each proposed edge and adds it to a graph over `atoms`.
///
/// `logits` has one row per edge and is required for the classifier path.
/// Edges the graph rejects are skipped with a warning.
pub fn assign_bond_types(
    edges: &[(usize, usize)],
    atoms: &[u8],
    logits: Option<&Tensor>,
    tau: f64,
    source: BondSource,
) -> Result<(MoleculeGraph, TypedEdges), GenerationError> {
    let kinds: Vec<BondType> = match (source, logits) {
        (BondSource::Heuristic, _) => edges
            .iter()
            .map(|&(i, j)| chemrules::heuristic_bond_type(atoms[i], atoms[j]))
            .collect(),
        (BondSource::Classifier, Some(l)) => {
            let p = diffusion::bond_probabilities(l, tau)?;
            (0..edges.len()).map(|e| argmax_class(p.row(e))).collect()
        }
        (BondSource::Classifier, None) => {
            return Err(GenerationError::BadConfig("classifier bond source needs logits".into()))
        }
    };
    let mut g = MoleculeGraph::from_elements(atoms);
    let mut typed = Vec::with_capacity(edges.len());
    for (&(i, j), kind) in edges.iter().zip(kinds) {
        match g.add_bond(i, j, kind) {
            Ok(()) => typed.push((i, j, kind)),
            Err(e) => log::warn!("skipping bond {i}-{j}: {e}"),
        }
    }
    Ok((g, typed))
}

fn argmax_class(row: &[f64]) -> BondType {
    let mut best = 0;
    for (k, &p) in row.iter().enumerate() {
        if p > row[best] {
            best = k;
        }
    }
    BondType::from_class_index(best).expect("four bond classes")
}

/// Validation outcome of an assembled graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Finalized {
    pub validation: ValidationReport,
    pub smiles: Option<String>,
    pub corpus_match: bool,
}

/// sanitize → canonical SMILES when it passes → corpus membership.
pub fn finalize(graph: &MoleculeGraph, corpus: &Corpus) -> Finalized {
    let (clean, mut validation) = chemrules::sanitize_graph(graph);
    let smiles = if validation.final_verdict {
        match smiles::canonicalize(&clean) {
            Ok(s) => Some(s),
            Err(e) => {
                log::warn!("validated graph could not be written: {e}");
                validation.final_verdict = false;
                None
            }
        }
    } else {
        None
    };
    let corpus_match = smiles.as_deref().is_some_and(|s| corpus.contains(s));
    Finalized {
        validation,
        smiles,
        corpus_match,
    }
}

/// A trained model ready to sample.
#[derive(Debug, Clone)]
pub struct Generator {
    params: ParamStore,
    vocabulary: Vec<String>,
    atom_counts: Vec<usize>,
    corpus: Corpus,
}

impl Generator {
    pub fn new(
        params: ParamStore,
        vocabulary: Vec<String>,
        atom_counts: Vec<usize>,
        corpus: Corpus,
    ) -> Result<Self, GenerationError> {
        let dims = diffusion::dims_of(&params).map_err(|e| GenerationError::UntrainedParams(e.to_string()))?;
        if dims.vocab != vocabulary.len() {
            return Err(GenerationError::UntrainedParams(format!(
                "model expects {} descriptors, vocabulary has {}",
                dims.vocab,
                vocabulary.len()
            )));
        }
        Ok(Generator {
            params,
            vocabulary,
            atom_counts,
            corpus,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint, corpus: Corpus) -> Result<Self, GenerationError> {
        Generator::new(
            ckpt.params.clone(),
            ckpt.vocabulary.clone(),
            ckpt.atom_counts.clone(),
            corpus,
        )
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    /// Multi-hot vector for a descriptor set; unknown terms are dropped.
    pub fn encode(&self, descriptors: &[String]) -> Vec<f64> {
        let vocab = crate::dataio::OdourVocabulary::new(&self.vocabulary);
        crate::dataio::multi_hot(descriptors, &vocab).y
    }

    fn draw_size(&self, config: &GenerationConfig, rng: &mut ChaCha8Rng) -> usize {
        match (config.n_atoms, self.atom_counts.is_empty()) {
            (Some(n), _) => n,
            (None, false) => self.atom_counts[rng.gen_range(0..self.atom_counts.len())].max(1),
            (None, true) => 1,
        }
    }

    /// Sample `index` of a run; independent of every other index.
    pub fn sample(&self, y: &[f64], config: &GenerationConfig, index: usize) -> Result<GenerationReport, GenerationError> {
        config.validate()?;
        let allowed = config.allowed_numbers()?;
        let schedule = NoiseSchedule::linear(config.steps);
        let mut rng = ChaCha8Rng::seed_from_u64(sample_seed(config.seed, index));
        let n = self.draw_size(config, &mut rng);
        let mut x = Tensor::column(&normal_vec(&mut rng, n));
        let mut coords = Tensor::matrix(n, 3, normal_vec(&mut rng, 3 * n)).expect("n×3");
        let mut features = Tensor::zeros(n, 0);
        let mut iterations = 0;
        for t in (1..=config.steps).rev() {
            let out = diffusion::denoiser_forward(
                &self.params,
                &schedule,
                &DenoiserInput {
                    x_t: &x,
                    coords: &coords,
                    t,
                    y,
                    bond_pairs: &[],
                },
            )?;
            let step = schedule.beta_at(t)?.sqrt() - schedule.beta_or_zero(t - 1)?.sqrt();
            for (xi, e) in x.data_mut().iter_mut().zip(out.eps_hat.data()) {
                *xi = crate::numcore::nan_to_num(*xi - step * e);
            }
            coords = out
                .coords
                .map(|v| crate::numcore::nan_to_num(v).clamp(-COORD_LIMIT, COORD_LIMIT));
            features = out.features;
            iterations += 1;
        }
        debug_assert_eq!(iterations, config.steps);

        let raw_features = x.data().to_vec();
        let (decoded_atoms, nodes) = decode_atoms(&raw_features, config.mode, &allowed);
        let kept_coords: Vec<[f64; 3]> = nodes
            .iter()
            .map(|&i| [coords.get(i, 0), coords.get(i, 1), coords.get(i, 2)])
            .collect();
        let proposed_edges = propose_edges(&kept_coords);
        let logits = match config.bond_source {
            BondSource::Classifier => {
                let node_pairs: Vec<(usize, usize)> = proposed_edges.iter().map(|&(i, j)| (nodes[i], nodes[j])).collect();
                Some(diffusion::bond_logits(&self.params, &features, &node_pairs)?)
            }
            BondSource::Heuristic => None,
        };
        let (mut graph, bonds) =
            assign_bond_types(&proposed_edges, &decoded_atoms, logits.as_ref(), config.tau, config.bond_source)?;
        if graph.set_positions(&kept_coords).is_err() {
            log::debug!("sample {index}: positions left at origin");
        }
        let done = finalize(&graph, &self.corpus);
        Ok(GenerationReport {
            index,
            raw_features,
            decoded_atoms,
            proposed_edges,
            bonds,
            validation: done.validation,
            smiles: done.smiles,
            corpus_match: done.corpus_match,
        })
    }

    /// `count` samples in index order; computed in parallel.
    pub fn sample_many(
        &self,
        y: &[f64],
        config: &GenerationConfig,
        count: usize,
    ) -> Result<Vec<GenerationReport>, GenerationError> {
        (0..count).into_par_iter().map(|i| self.sample(y, config, i)).collect()
    }
}

fn sample_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ (index as u64).wrapping_add(0x6765_6e00)
}

fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Fraction of reports whose validation passed.
pub fn validity_rate(reports: &[GenerationReport]) -> Result<f64, GenerationError> {
    if reports.is_empty() {
        return Err(GenerationError::EmptyInput);
    }
    let valid = reports.iter().filter(|r| r.validation.final_verdict).count();
    Ok(valid as f64 / reports.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationSummary {
    pub samples: usize,
    pub valid: usize,
    pub validity_rate: f64,
    /// Samples whose first failing stage is the key.
    pub failures_by_stage: BTreeMap<String, usize>,
    pub mode: Mode,
    pub seed: u64,
    pub steps: usize,
    pub novel: usize,
}

pub fn summarize(reports: &[GenerationReport], config: &GenerationConfig) -> Result<GenerationSummary, GenerationError> {
    let rate = validity_rate(reports)?;
    let mut failures_by_stage: BTreeMap<String, usize> =
        Stage::ALL.iter().map(|s| (s.name().to_owned(), 0)).collect();
    for r in reports {
        if let Some(stage) = r.validation.first_failure() {
            *failures_by_stage.entry(stage.name().to_owned()).or_default() += 1;
        }
    }
    Ok(GenerationSummary {
        samples: reports.len(),
        valid: reports.iter().filter(|r| r.validation.final_verdict).count(),
        validity_rate: rate,
        failures_by_stage,
        mode: config.mode,
        seed: config.seed,
        steps: config.steps,
        novel: reports.iter().filter(|r| r.smiles.is_some() && !r.corpus_match).count(),
    })
}

/// Markdown table of validity rates, one row per run.
pub fn validity_table(rows: &[(&str, &GenerationSummary)]) -> String {
    let mut out = String::from("| Elements | Valid (%) | Samples |\n|---|---|---|\n");
    for (label, s) in rows {
        out.push_str(&format!("| {label} | {:.2} | {} |\n", 100.0 * s.validity_rate, s.samples));
    }
    out
}

/// One JSON object per line.
pub fn reports_to_jsonl(reports: &[GenerationReport]) -> String {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("report serializes"));
        out.push('\n');
    }
    out
}

/// Graph rebuilt from a report's atoms and typed bonds.
pub fn report_graph(r: &GenerationReport) -> MoleculeGraph {
    let mut g = MoleculeGraph::new(r.decoded_atoms.iter().map(|&z| Atom::element(z)).collect()).expect("finite");
    for &(i, j, k) in &r.bonds {
        g.add_bond(i, j, k).expect("bonds were accepted once");
    }
    g
}
