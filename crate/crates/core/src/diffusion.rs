//! Feature-space diffusion over atomic numbers with an EGNN denoiser.
//!
//! Forward process `x_t = x_0 + sqrt(β_t) ε` with `β_t = β_max t / T`.
//! The denoiser sees `[x_t ‖ e_t ‖ c]` per node, where `e_t` is an affine
//! embedding of `t/T` and `c = Linear(y)` embeds the descriptor vector. It
//! predicts the per-node noise and, from the final node embeddings, logits
//! over the four bond classes for requested atom pairs.

use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::egnn::{self, Edges, EgnnError};
use crate::molgraph::MoleculeGraph;
use crate::numcore::{self, AdamConfig, AdamState, NumError, ParamStore, Tape, Tensor, Var};

pub const NUM_BOND_CLASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiffusionError {
    #[error("step {t} outside 1..={steps}")]
    StepOutOfRange { t: usize, steps: usize },
    #[error("descriptor vector has length {got}, model expects {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),
    #[error("training set is empty")]
    EmptyDataset,
    #[error("graph has no atoms")]
    EmptyGraph,
    #[error("loss diverged at epoch {epoch}: {loss} vs initial {initial}")]
    DivergedLoss { epoch: usize, loss: f64, initial: f64 },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error("i/o: {0}")]
    Io(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Egnn(#[from] EgnnError),
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Linear variance schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub steps: usize,
    pub beta_max: f64,
}

impl NoiseSchedule {
    pub fn linear(steps: usize) -> Self {
        NoiseSchedule { steps, beta_max: 1.0 }
    }

    pub fn beta_at(&self, t: usize) -> Result<f64, DiffusionError> {
        if t == 0 || t > self.steps {
            return Err(DiffusionError::StepOutOfRange { t, steps: self.steps });
        }
        Ok(self.beta_max * t as f64 / self.steps as f64)
    }

    /// `β_t` with the convention `β_0 = 0`.
    pub fn beta_or_zero(&self, t: usize) -> Result<f64, DiffusionError> {
        if t == 0 {
            Ok(0.0)
        } else {
            self.beta_at(t)
        }
    }
}

pub fn beta_at(schedule: &NoiseSchedule, t: usize) -> Result<f64, DiffusionError> {
    schedule.beta_at(t)
}

/// Returns `(x_t, ε)` for a column `x0`.
pub fn forward_noise(
    x0: &Tensor,
    t: usize,
    schedule: &NoiseSchedule,
    rng: &mut impl Rng,
) -> Result<(Tensor, Tensor), DiffusionError> {
    let eps: Vec<f64> = (0..x0.len()).map(|_| StandardNormal.sample(rng)).collect();
    let eps = Tensor::new(x0.shape().to_vec(), eps)?;
    let xt = noised(x0, &eps, t, schedule)?;
    Ok((xt, eps))
}

/// `x0 + sqrt(β_t) ε` for a given `ε`.
pub fn noised(x0: &Tensor, eps: &Tensor, t: usize, schedule: &NoiseSchedule) -> Result<Tensor, DiffusionError> {
    let s = schedule.beta_at(t)?.sqrt();
    let data = x0.data().iter().zip(eps.data()).map(|(a, e)| a + s * e).collect();
    Ok(Tensor::new(x0.shape().to_vec(), data)?)
}

/// Widths and layer names of the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDims {
    pub vocab: usize,
    pub hidden: usize,
    pub time_dim: usize,
    pub cond_dim: usize,
    pub layers: usize,
}

impl ModelDims {
    pub fn new(vocab: usize) -> Self {
        ModelDims {
            vocab,
            hidden: 8,
            time_dim: 8,
            cond_dim: 8,
            layers: 2,
        }
    }

    pub fn layer_names(&self) -> Vec<String> {
        (0..self.layers).map(|k| format!("egnn{k}")).collect()
    }
}

pub fn init_params(dims: &ModelDims, rng: &mut impl Rng) -> ParamStore {
    let mut p = ParamStore::new();
    p.init_linear("cond", dims.vocab, dims.cond_dim, rng);
    p.init_linear("time", 1, dims.time_dim, rng);
    p.init_linear("input", 1 + dims.time_dim + dims.cond_dim, dims.hidden, rng);
    for name in dims.layer_names() {
        egnn::init_layer(&mut p, &name, dims.hidden, rng);
    }
    p.init_linear("head", dims.hidden, 1, rng);
    p.init_mlp("bond", 2 * dims.hidden, dims.hidden, NUM_BOND_CLASSES, rng);
    p
}

fn layer_names(params: &ParamStore) -> Vec<String> {
    (0..)
        .map(|k| format!("egnn{k}"))
        .take_while(|name| params.contains(&format!("{name}.node.l1.w")))
        .collect()
}

/// Recovers the widths stored in a parameter set.
pub fn dims_of(params: &ParamStore) -> Result<ModelDims, DiffusionError> {
    let cond = params.get("cond.w")?;
    let time = params.get("time.w")?;
    let input = params.get("input.w")?;
    let layers = layer_names(params).len();
    Ok(ModelDims {
        vocab: cond.rows(),
        hidden: input.cols(),
        time_dim: time.cols(),
        cond_dim: cond.cols(),
        layers,
    })
}

fn check_y(params: &ParamStore, y: &[f64]) -> Result<(), DiffusionError> {
    let expected = params.get("cond.w")?.rows();
    if y.len() != expected {
        return Err(DiffusionError::LengthMismatch { expected, got: y.len() });
    }
    Ok(())
}

/// `c = y W + b`, a `1×d_c` row.
pub fn condition_embed(y: &[f64], params: &ParamStore) -> Result<Tensor, DiffusionError> {
    check_y(params, y)?;
    let mut tape = Tape::new();
    let yv = tape.input(Tensor::row_vector(y));
    let c = params.linear(&mut tape, "cond", yv)?;
    Ok(tape.value(c).clone())
}

/// Affine image of `t/T`, a `1×d_t` row.
pub fn time_embed(t: usize, schedule: &NoiseSchedule, params: &ParamStore) -> Result<Tensor, DiffusionError> {
    schedule.beta_at(t)?;
    let mut tape = Tape::new();
    let tv = tape.input(Tensor::scalar(t as f64 / schedule.steps as f64));
    let e = params.linear(&mut tape, "time", tv)?;
    Ok(tape.value(e).clone())
}

/// Denoiser outputs recorded on a tape.
pub struct DenoiserVars {
    pub eps_hat: Var,
    pub bond_logits: Var,
    pub features: Var,
    pub coords: Var,
}

/// Inputs for one denoiser pass over a single molecule.
#[derive(Debug, Clone, Copy)]
pub struct DenoiserInput<'a> {
    /// `n×1` noisy node features
    pub x_t: &'a Tensor,
    /// `n×3`
    pub coords: &'a Tensor,
    pub t: usize,
    pub y: &'a [f64],
    /// Unordered atom pairs that get bond logits.
    pub bond_pairs: &'a [(usize, usize)],
}

pub fn record_denoiser(
    tape: &mut Tape,
    params: &ParamStore,
    schedule: &NoiseSchedule,
    input: &DenoiserInput<'_>,
) -> Result<DenoiserVars, DiffusionError> {
    let n = input.x_t.rows();
    if n == 0 {
        return Err(DiffusionError::EmptyGraph);
    }
    if input.coords.rows() != n || input.coords.cols() != 3 || input.x_t.cols() != 1 {
        return Err(NumError::ShapeMismatch {
            op: "denoiser",
            left: input.x_t.shape().to_vec(),
            right: input.coords.shape().to_vec(),
        }
        .into());
    }
    schedule.beta_at(input.t)?;
    check_y(params, input.y)?;
    let broadcast = Arc::new(vec![0usize; n]);

    let yv = tape.input(Tensor::row_vector(input.y));
    let c = params.linear(tape, "cond", yv)?;
    let c = tape.gather_rows(c, broadcast.clone())?;
    let tv = tape.input(Tensor::scalar(input.t as f64 / schedule.steps as f64));
    let e = params.linear(tape, "time", tv)?;
    let e = tape.gather_rows(e, broadcast)?;
    let x = tape.input(input.x_t.clone());
    let h = tape.concat_cols(&[x, e, c])?;
    let h = params.linear(tape, "input", h)?;
    let r = tape.input(input.coords.clone());

    let edges = Edges::fully_connected(n);
    let (h, r) = egnn::forward_vars(tape, params, &layer_names(params), h, r, &edges)?;

    let eps = params.linear(tape, "head", h)?;
    let eps_hat = tape.nan_to_num(eps);
    let bond_logits = record_bond_logits(tape, params, h, input.bond_pairs)?;
    Ok(DenoiserVars {
        eps_hat,
        bond_logits,
        features: h,
        coords: r,
    })
}

/// Classifier logits `MLP([h_i ‖ h_j])` per pair, `|pairs|×4`.
pub fn record_bond_logits(
    tape: &mut Tape,
    params: &ParamStore,
    h: Var,
    pairs: &[(usize, usize)],
) -> Result<Var, DiffusionError> {
    if pairs.is_empty() {
        return Ok(tape.input(Tensor::zeros(0, NUM_BOND_CLASSES)));
    }
    let hi = tape.gather_rows(h, Arc::new(pairs.iter().map(|p| p.0).collect()))?;
    let hj = tape.gather_rows(h, Arc::new(pairs.iter().map(|p| p.1).collect()))?;
    let cat = tape.concat_cols(&[hi, hj])?;
    let logits = params.mlp(tape, "bond", cat)?;
    Ok(tape.nan_to_num(logits))
}

/// Bond logits from already-computed node embeddings.
pub fn bond_logits(params: &ParamStore, features: &Tensor, pairs: &[(usize, usize)]) -> Result<Tensor, DiffusionError> {
    let mut tape = Tape::new();
    let h = tape.input(features.clone());
    let l = record_bond_logits(&mut tape, params, h, pairs)?;
    Ok(tape.value(l).clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenoiserOutput {
    /// `n×1`
    pub eps_hat: Tensor,
    /// `|pairs|×4`
    pub bond_logits: Tensor,
    /// Final node embeddings, `n×d`.
    pub features: Tensor,
    /// Coordinates after the EGNN stack, `n×3`.
    pub coords: Tensor,
}

pub fn denoiser_forward(
    params: &ParamStore,
    schedule: &NoiseSchedule,
    input: &DenoiserInput<'_>,
) -> Result<DenoiserOutput, DiffusionError> {
    let mut tape = Tape::new();
    let v = record_denoiser(&mut tape, params, schedule, input)?;
    Ok(DenoiserOutput {
        eps_hat: tape.value(v.eps_hat).clone(),
        bond_logits: tape.value(v.bond_logits).clone(),
        features: tape.value(v.features).clone(),
        coords: tape.value(v.coords).clone(),
    })
}

/// Row-wise `softmax(logits / τ)`.
pub fn bond_probabilities(logits: &Tensor, tau: f64) -> Result<Tensor, DiffusionError> {
    if !(tau > 0.0) {
        return Err(DiffusionError::NonPositiveTemperature(tau));
    }
    Ok(numcore::softmax_rows(logits, tau))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub mse: f64,
    pub ce: f64,
    pub total: f64,
}

/// Records `mean((ε̂ - ε)²) + CE(softmax(logits/τ), labels)` and returns the three scalars.
pub fn record_loss(
    tape: &mut Tape,
    eps_hat: Var,
    eps: &Tensor,
    bond_logits: Var,
    labels: &[usize],
    tau: f64,
) -> Result<(Var, Var, Var), DiffusionError> {
    if !(tau > 0.0) {
        return Err(DiffusionError::NonPositiveTemperature(tau));
    }
    let target = tape.input(eps.clone());
    let d = tape.sub(eps_hat, target)?;
    let sq = tape.square(d);
    let mse = tape.mean(sq);
    let ce = tape.softmax_cross_entropy(bond_logits, labels, tau)?;
    let total = tape.add(mse, ce)?;
    Ok((mse, ce, total))
}

pub fn loss_total(
    eps_hat: &Tensor,
    eps: &Tensor,
    bond_logits: &Tensor,
    labels: &[usize],
    tau: f64,
) -> Result<LossParts, DiffusionError> {
    let mut tape = Tape::new();
    let e = tape.input(eps_hat.clone());
    let l = tape.input(bond_logits.clone());
    let (mse, ce, total) = record_loss(&mut tape, e, eps, l, labels, tau)?;
    Ok(LossParts {
        mse: tape.value(mse).item(),
        ce: tape.value(ce).item(),
        total: tape.value(total).item(),
    })
}

/// One training molecule in model space.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingExample {
    /// `n×1` atomic numbers
    pub x0: Tensor,
    /// `n×3`
    pub coords: Tensor,
    pub y: Vec<f64>,
    /// Real bonds as `(i, j)` with `i < j`.
    pub bonds: Vec<(usize, usize)>,
    pub labels: Vec<usize>,
}

impl TrainingExample {
    pub fn from_graph(g: &MoleculeGraph, y: Vec<f64>) -> Self {
        let z: Vec<f64> = g.atoms().iter().map(|a| f64::from(a.atomic_number)).collect();
        let coords: Vec<f64> = g.positions().iter().flatten().copied().collect();
        let (bonds, labels) = g.bonds().map(|b| ((b.i, b.j), b.kind.class_index())).unzip();
        TrainingExample {
            x0: Tensor::column(&z),
            coords: Tensor::matrix(g.num_atoms(), 3, coords).expect("n×3"),
            y,
            bonds,
            labels,
        }
    }
}

/// Training hyperparameters; also the JSON config file format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub tau: f64,
    pub sample_tau: f64,
    pub learning_rate: f64,
    pub constrained: bool,
    pub allowlist: Vec<String>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            steps: 1000,
            epochs: 1000,
            batch_size: 32,
            tau: 1.0,
            sample_tau: 0.5,
            learning_rate: 1e-3,
            constrained: false,
            allowlist: ["C", "N", "O", "F", "P", "S", "Cl"].map(String::from).to_vec(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_json(text: &str) -> Result<Self, DiffusionError> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| DiffusionError::BadConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), DiffusionError> {
        let bad = |m: &str| Err(DiffusionError::BadConfig(m.to_owned()));
        if self.steps == 0 {
            return bad("steps must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if !(self.tau > 0.0) || !(self.sample_tau > 0.0) {
            return bad("temperatures must be positive");
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive and finite");
        }
        Ok(())
    }

    pub fn schedule(&self) -> NoiseSchedule {
        NoiseSchedule::linear(self.steps)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub mse_loss: f64,
    pub ce_loss: f64,
    pub total_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub params: ParamStore,
    pub optimizer: AdamState,
    pub metrics: Vec<EpochMetrics>,
}

struct Draw {
    index: usize,
    t: usize,
    eps: Tensor,
}

fn example_step(
    params: &ParamStore,
    schedule: &NoiseSchedule,
    ex: &TrainingExample,
    draw: &Draw,
    tau: f64,
) -> Result<(LossParts, numcore::Gradients), DiffusionError> {
    let xt = noised(&ex.x0, &draw.eps, draw.t, schedule)?;
    let mut tape = Tape::new();
    let v = record_denoiser(
        &mut tape,
        params,
        schedule,
        &DenoiserInput {
            x_t: &xt,
            coords: &ex.coords,
            t: draw.t,
            y: &ex.y,
            bond_pairs: &ex.bonds,
        },
    )?;
    let (mse, ce, total) = record_loss(&mut tape, v.eps_hat, &draw.eps, v.bond_logits, &ex.labels, tau)?;
    let grads = tape.backward(total)?;
    Ok((
        LossParts {
            mse: tape.value(mse).item(),
            ce: tape.value(ce).item(),
            total: tape.value(total).item(),
        },
        grads,
    ))
}

/// Divergence threshold relative to the first batch's loss.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// Mini-batch Adam on the mean per-molecule loss. Randomness (shuffles, steps,
/// noise) is drawn sequentially from one seeded stream, so results do not
/// depend on thread count.
pub fn train(
    examples: &[TrainingExample],
    config: &TrainConfig,
    init: ParamStore,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutput, DiffusionError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(DiffusionError::EmptyDataset);
    }
    let schedule = config.schedule();
    let adam_cfg = AdamConfig {
        lr: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut state = AdamState::default();
    let mut params = init;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x7472_6169_6e00);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut metrics = Vec::with_capacity(config.epochs);
    let mut initial: Option<f64> = None;

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossParts {
            mse: 0.0,
            ce: 0.0,
            total: 0.0,
        };
        for batch in order.chunks(config.batch_size) {
            let draws: Vec<Draw> = batch
                .iter()
                .map(|&index| {
                    let t = rng.gen_range(1..=schedule.steps);
                    let n = examples[index].x0.rows();
                    let eps: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
                    Draw {
                        index,
                        t,
                        eps: Tensor::column(&eps),
                    }
                })
                .collect();
            let snapshot = &params;
            let results: Vec<Result<(LossParts, numcore::Gradients), DiffusionError>> = draws
                .par_iter()
                .map(|d| example_step(snapshot, &schedule, &examples[d.index], d, config.tau))
                .collect();
            params.zero_grad();
            let mut batch_total = 0.0;
            for r in results {
                let (parts, grads) = r?;
                params.accumulate(&grads)?;
                sum.mse += parts.mse;
                sum.ce += parts.ce;
                sum.total += parts.total;
                batch_total += parts.total;
            }
            let batch_mean = batch_total / batch.len() as f64;
            let reference = *initial.get_or_insert(batch_mean);
            if !batch_mean.is_finite() || batch_mean > DIVERGENCE_FACTOR * reference.abs().max(f64::MIN_POSITIVE) {
                return Err(DiffusionError::DivergedLoss {
                    epoch,
                    loss: batch_mean,
                    initial: reference,
                });
            }
            params.scale_grads(1.0 / batch.len() as f64);
            params.fill_missing_grads();
            numcore::adam_step(&mut params, &mut state, &adam_cfg)?;
        }
        let n = examples.len() as f64;
        let m = EpochMetrics {
            epoch,
            mse_loss: sum.mse / n,
            ce_loss: sum.ce / n,
            total_loss: sum.total / n,
        };
        log::debug!("epoch {epoch}: total {:.6}", m.total_loss);
        on_epoch(&m);
        metrics.push(m);
    }
    params.zero_grad();
    Ok(TrainOutput {
        params,
        optimizer: state,
        metrics,
    })
}

pub fn write_metrics_csv(path: &Path, metrics: &[EpochMetrics]) -> Result<(), DiffusionError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| DiffusionError::Io(e.to_string()))?;
    for m in metrics {
        w.serialize(m).map_err(|e| DiffusionError::Io(e.to_string()))?;
    }
    if metrics.is_empty() {
        w.write_record(["epoch", "mse_loss", "ce_loss", "total_loss"])
            .map_err(|e| DiffusionError::Io(e.to_string()))?;
    }
    w.flush().map_err(|e| DiffusionError::Io(e.to_string()))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<EpochMetrics>, DiffusionError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| DiffusionError::Io(e.to_string()))?;
    r.deserialize()
        .map(|row| row.map_err(|e| DiffusionError::Io(e.to_string())))
        .collect()
}

pub const CHECKPOINT_FORMAT: &str = "scentgen-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training or to sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: TrainConfig,
    pub vocabulary: Vec<String>,
    /// Heavy-atom counts of the training molecules, sampled at generation.
    pub atom_counts: Vec<usize>,
    pub params: ParamStore,
    pub optimizer: AdamState,
}

impl Checkpoint {
    pub fn new(
        config: TrainConfig,
        vocabulary: Vec<String>,
        atom_counts: Vec<usize>,
        params: ParamStore,
        optimizer: AdamState,
    ) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            config,
            vocabulary,
            atom_counts,
            params,
            optimizer,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, DiffusionError> {
        let c: Checkpoint = serde_json::from_str(text).map_err(|e| DiffusionError::Checkpoint(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(DiffusionError::Checkpoint(format!(
                "unsupported format {:?} version {}",
                c.format, c.version
            )));
        }
        let dims = dims_of(&c.params)?;
        if dims.vocab != c.vocabulary.len() {
            return Err(DiffusionError::Checkpoint(format!(
                "vocabulary has {} terms but the model expects {}",
                c.vocabulary.len(),
                dims.vocab
            )));
        }
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<(), DiffusionError> {
        std::fs::write(path, self.to_json()).map_err(|e| DiffusionError::Io(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let text = std::fs::read_to_string(path).map_err(|e| DiffusionError::Io(e.to_string()))?;
        Checkpoint::from_json(&text)
    }
}
