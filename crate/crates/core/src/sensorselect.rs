//! Sensor down-selection as weighted set cover over target compounds.
//!
//! Compounds are compared by canonical SMILES; strings that do not parse
//! (trade names, charged species) are kept as opaque tokens.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::generator::{GenerationConfig, GenerationError, Generator};
use crate::smiles;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SensorError {
    #[error("invalid catalog: {0}")]
    InvalidCatalog(String),
    #[error("coverage problem has no targets")]
    EmptyTargets,
    #[error("exact search supports at most {max} sensors, got {got}")]
    TooManySensors { got: usize, max: usize },
    #[error("unknown sensor id {0:?}")]
    UnknownSensorId(String),
    #[error("malformed scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Generation(#[from] GenerationError),
}

pub const EXACT_MAX_SENSORS: usize = 20;

/// Canonical SMILES when `s` parses, otherwise the trimmed string.
pub fn compound_key(s: &str) -> String {
    let s = s.trim();
    smiles::parse(s)
        .ok()
        .and_then(|g| smiles::canonicalize(&g).ok())
        .unwrap_or_else(|| s.to_owned())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sensor {
    pub id: String,
    pub detects: Vec<String>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorCatalog {
    pub sensors: Vec<Sensor>,
}

impl SensorCatalog {
    pub fn validate(&self) -> Result<(), SensorError> {
        let mut seen = BTreeSet::new();
        for s in &self.sensors {
            if !seen.insert(s.id.as_str()) {
                return Err(SensorError::InvalidCatalog(format!("duplicate id {:?}", s.id)));
            }
            if s.detects.is_empty() {
                return Err(SensorError::InvalidCatalog(format!("{} detects nothing", s.id)));
            }
            if !(s.cost >= 0.0) || !s.cost.is_finite() {
                return Err(SensorError::InvalidCatalog(format!("{} has cost {}", s.id, s.cost)));
            }
        }
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Sensor> {
        self.sensors.iter().find(|s| s.id == id)
    }
}

/// Catalog plus targets, as read from a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub description: String,
    pub sensors: Vec<Sensor>,
    pub targets: Vec<String>,
    /// Installed sensors, for subtractive mode.
    #[serde(default)]
    pub current: Vec<String>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, SensorError> {
        serde_json::from_str(text).map_err(|e| SensorError::Scenario(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, SensorError> {
        let text = std::fs::read_to_string(path).map_err(|e| SensorError::Scenario(format!("{}: {e}", path.display())))?;
        Scenario::from_json(&text)
    }

    pub fn problem(&self) -> Result<CoverageProblem, SensorError> {
        CoverageProblem::new(
            SensorCatalog {
                sensors: self.sensors.clone(),
            },
            self.targets.iter().map(String::as_str),
        )
    }
}

/// Illustrative 16-sensor ammonia scenario; realizes a 16 → 4 reduction.
pub const AMMONIA_SCENARIO_JSON: &str = include_str!("../data/ammonia_scenario.json");

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageProblem {
    catalog: SensorCatalog,
    targets: Vec<String>,
    /// Per sensor, indices into `targets` it detects.
    detects: Vec<BTreeSet<usize>>,
}

impl CoverageProblem {
    pub fn new<'a>(catalog: SensorCatalog, targets: impl IntoIterator<Item = &'a str>) -> Result<Self, SensorError> {
        catalog.validate()?;
        let targets: Vec<String> = targets
            .into_iter()
            .map(compound_key)
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        if targets.is_empty() {
            return Err(SensorError::EmptyTargets);
        }
        let index: BTreeMap<&str, usize> = targets.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let detects = catalog
            .sensors
            .iter()
            .map(|s| {
                s.detects
                    .iter()
                    .filter_map(|d| index.get(compound_key(d).as_str()).copied())
                    .collect()
            })
            .collect();
        Ok(CoverageProblem {
            catalog,
            targets,
            detects,
        })
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn catalog(&self) -> &SensorCatalog {
        &self.catalog
    }

    fn sensor_index(&self, id: &str) -> Result<usize, SensorError> {
        self.catalog
            .sensors
            .iter()
            .position(|s| s.id == id)
            .ok_or_else(|| SensorError::UnknownSensorId(id.to_owned()))
    }

    fn coverage(&self, chosen: &[usize]) -> BTreeSet<usize> {
        chosen.iter().flat_map(|&s| self.detects[s].iter().copied()).collect()
    }

    fn coverable(&self) -> BTreeSet<usize> {
        (0..self.detects.len()).flat_map(|s| self.detects[s].iter().copied()).collect()
    }

    fn result(&self, chosen: &[usize]) -> SelectionResult {
        let covered_idx = self.coverage(chosen);
        let covered = covered_idx.iter().map(|&t| self.targets[t].clone()).collect();
        let uncovered = (0..self.targets.len())
            .filter(|t| !covered_idx.contains(t))
            .map(|t| self.targets[t].clone())
            .collect();
        SelectionResult {
            chosen: chosen.iter().map(|&s| self.catalog.sensors[s].id.clone()).collect(),
            covered,
            uncovered,
            total_cost: chosen.iter().map(|&s| self.catalog.sensors[s].cost).sum(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub chosen: Vec<String>,
    pub covered: BTreeSet<String>,
    pub uncovered: BTreeSet<String>,
    pub total_cost: f64,
}

/// Repeatedly takes the sensor with the most newly covered targets per unit
/// cost; ties go to the cheaper sensor, then the smaller id. Zero-cost sensors
/// that add coverage rank first.
pub fn greedy_cover(problem: &CoverageProblem) -> SelectionResult {
    let sensors = &problem.catalog.sensors;
    let mut covered = BTreeSet::new();
    let mut chosen = Vec::new();
    loop {
        let mut best: Option<(usize, usize)> = None;
        for (s, detects) in problem.detects.iter().enumerate() {
            let gain = detects.difference(&covered).count();
            if gain == 0 || chosen.contains(&s) {
                continue;
            }
            let better = match best {
                None => true,
                Some((b, b_gain)) => {
                    // gain/cost > b_gain/b_cost, compared without division
                    let lhs = gain as f64 * sensors[b].cost;
                    let rhs = b_gain as f64 * sensors[s].cost;
                    lhs > rhs
                        || (lhs == rhs
                            && (sensors[s].cost < sensors[b].cost
                                || (sensors[s].cost == sensors[b].cost && sensors[s].id < sensors[b].id)))
                }
            };
            if better {
                best = Some((s, gain));
            }
        }
        let Some((s, _)) = best else { break };
        covered.extend(problem.detects[s].iter().copied());
        chosen.push(s);
    }
    problem.result(&chosen)
}

/// Minimum-cardinality, then minimum-cost, subset covering every coverable
/// target, by enumeration in increasing subset size.
pub fn exact_cover(problem: &CoverageProblem) -> Result<SelectionResult, SensorError> {
    let m = problem.catalog.sensors.len();
    if m > EXACT_MAX_SENSORS {
        return Err(SensorError::TooManySensors {
            got: m,
            max: EXACT_MAX_SENSORS,
        });
    }
    let need = problem.coverable();
    if need.is_empty() {
        return Ok(problem.result(&[]));
    }
    let costs: Vec<f64> = problem.catalog.sensors.iter().map(|s| s.cost).collect();
    for size in 1..=m {
        let mut best: Option<(f64, Vec<usize>)> = None;
        for_each_combination(m, size, &mut |combo| {
            if problem.coverage(combo) == need {
                let cost: f64 = combo.iter().map(|&s| costs[s]).sum();
                if best.as_ref().is_none_or(|(c, _)| cost < *c) {
                    best = Some((cost, combo.to_vec()));
                }
            }
        });
        if let Some((_, combo)) = best {
            return Ok(problem.result(&combo));
        }
    }
    unreachable!("the full catalog covers every coverable target")
}

fn for_each_combination(m: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    let mut combo: Vec<usize> = (0..k).collect();
    loop {
        f(&combo);
        let mut i = k;
        while i > 0 && combo[i - 1] == m - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return;
        }
        combo[i - 1] += 1;
        for j in i..k {
            combo[j] = combo[j - 1] + 1;
        }
    }
}

/// Drops installed sensors, most expensive first (ties by id), whenever the
/// rest still cover exactly what the full installed set covers.
pub fn subtractive_prune(current: &[String], problem: &CoverageProblem) -> Result<SelectionResult, SensorError> {
    let mut kept: Vec<usize> = Vec::new();
    for id in current {
        let s = problem.sensor_index(id)?;
        if !kept.contains(&s) {
            kept.push(s);
        }
    }
    let baseline = problem.coverage(&kept);
    let sensors = &problem.catalog.sensors;
    let mut order = kept.clone();
    order.sort_by(|&a, &b| {
        sensors[b]
            .cost
            .total_cmp(&sensors[a].cost)
            .then_with(|| sensors[a].id.cmp(&sensors[b].id))
    });
    for s in order {
        let trial: Vec<usize> = kept.iter().copied().filter(|&k| k != s).collect();
        if problem.coverage(&trial) == baseline {
            kept = trial;
        }
    }
    Ok(problem.result(&kept))
}

/// User compounds plus valid generated SMILES for a descriptor set, deduplicated
/// by canonical form.
pub fn expand_targets(
    descriptors: &[String],
    user: &[String],
    generator: &Generator,
    config: &GenerationConfig,
    count: usize,
) -> Result<BTreeSet<String>, SensorError> {
    let mut targets: BTreeSet<String> = user.iter().map(|u| compound_key(u)).collect();
    if count == 0 {
        return Ok(targets);
    }
    let y = generator.encode(descriptors);
    let reports = generator.sample_many(&y, config, count)?;
    let before = targets.len();
    targets.extend(reports.into_iter().filter_map(|r| r.smiles));
    if targets.len() == before {
        log::warn!("none of {count} generated samples added a target");
    }
    Ok(targets)
}
