use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use super::{NumError, Tensor};

/// Named parameters with a parallel gradient map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
    #[serde(skip)]
    grads: BTreeMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, t: Tensor) {
        self.params.insert(name.to_owned(), t);
    }

    pub fn get(&self, name: &str) -> Result<&Tensor, NumError> {
        self.params.get(name).ok_or_else(|| NumError::UnknownParam(name.to_owned()))
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut Tensor, NumError> {
        self.params.get_mut(name).ok_or_else(|| NumError::UnknownParam(name.to_owned()))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    pub fn grad(&self, name: &str) -> Option<&Tensor> {
        self.grads.get(name)
    }

    pub fn zero_grad(&mut self) {
        self.grads.clear();
    }

    /// Adds `g` into the gradient map. Names must exist with the same shape.
    pub fn accumulate(&mut self, g: &Gradients) -> Result<(), NumError> {
        for (name, t) in g {
            let p = self.get(name)?;
            if p.shape() != t.shape() {
                return Err(NumError::ShapeMismatch {
                    op: "accumulate",
                    left: p.shape().to_vec(),
                    right: t.shape().to_vec(),
                });
            }
            match self.grads.get_mut(name) {
                Some(e) => {
                    for (a, b) in e.data_mut().iter_mut().zip(t.data()) {
                        *a += b;
                    }
                }
                None => {
                    self.grads.insert(name.clone(), t.clone());
                }
            }
        }
        Ok(())
    }

    /// Multiplies every stored gradient by `k`.
    pub fn scale_grads(&mut self, k: f64) {
        for g in self.grads.values_mut() {
            for v in g.data_mut() {
                *v *= k;
            }
        }
    }

    /// Uniform `±1/sqrt(fan_in)` weight `[fan_in×fan_out]` and bias `[1×fan_out]`.
    pub fn init_linear(&mut self, name: &str, fan_in: usize, fan_out: usize, rng: &mut impl Rng) {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let w = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        let b = (0..fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
        self.insert(&format!("{name}.w"), Tensor::matrix(fan_in, fan_out, w).expect("sized"));
        self.insert(&format!("{name}.b"), Tensor::matrix(1, fan_out, b).expect("sized"));
    }

    /// Two-layer MLP `{name}.l1`, `{name}.l2` with widths `in → hidden → out`.
    pub fn init_mlp(&mut self, name: &str, fan_in: usize, hidden: usize, out: usize, rng: &mut impl Rng) {
        self.init_linear(&format!("{name}.l1"), fan_in, hidden, rng);
        self.init_linear(&format!("{name}.l2"), hidden, out, rng);
    }

    pub fn map_params(&mut self, f: impl Fn(f64) -> f64) {
        for t in self.params.values_mut() {
            for v in t.data_mut() {
                *v = f(*v);
            }
        }
    }

    pub fn linear(&self, tape: &mut Tape, name: &str, x: Var) -> Result<Var, NumError> {
        let w = tape.param(self, &format!("{name}.w"))?;
        let b = tape.param(self, &format!("{name}.b"))?;
        let y = tape.matmul(x, w)?;
        tape.add_row(y, b)
    }

    /// affine → SiLU → affine
    pub fn mlp(&self, tape: &mut Tape, name: &str, x: Var) -> Result<Var, NumError> {
        let h = self.linear(tape, &format!("{name}.l1"), x)?;
        let h = tape.silu(h);
        self.linear(tape, &format!("{name}.l2"), h)
    }
}

/// Runs the two-layer MLP `name` on `x` without keeping the tape.
pub fn mlp_forward(params: &ParamStore, name: &str, x: &Tensor) -> Result<Tensor, NumError> {
    let mut tape = Tape::new();
    let xv = tape.input(x.clone());
    let y = params.mlp(&mut tape, name, xv)?;
    Ok(tape.value(y).clone())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates plus the step counter.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: BTreeMap<String, Tensor>,
    pub v: BTreeMap<String, Tensor>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: AdamState,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: AdamState::default(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore) -> Result<(), NumError> {
        adam_step(params, &mut self.state, &self.config)
    }
}

/// One bias-corrected Adam update over every parameter. Each parameter needs
/// a gradient entry; use a zero tensor for parameters that were not touched.
pub fn adam_step(params: &mut ParamStore, state: &mut AdamState, cfg: &AdamConfig) -> Result<(), NumError> {
    if let Some(missing) = params.params.keys().find(|k| !params.grads.contains_key(*k)) {
        return Err(NumError::MissingGradients(missing.clone()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (name, p) in params.params.iter_mut() {
        let g = &params.grads[name];
        let m = state
            .m
            .entry(name.clone())
            .or_insert_with(|| Tensor::new(p.shape().to_vec(), vec![0.0; p.len()]).expect("sized"));
        let v = state
            .v
            .entry(name.clone())
            .or_insert_with(|| Tensor::new(p.shape().to_vec(), vec![0.0; p.len()]).expect("sized"));
        for k in 0..p.len() {
            let gk = g.data()[k];
            let mk = cfg.beta1 * m.data()[k] + (1.0 - cfg.beta1) * gk;
            let vk = cfg.beta2 * v.data()[k] + (1.0 - cfg.beta2) * gk * gk;
            m.data_mut()[k] = mk;
            v.data_mut()[k] = vk;
            let mhat = mk / c1;
            let vhat = vk / c2;
            p.data_mut()[k] -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

impl ParamStore {
    /// Fills missing gradient entries with zeros so `adam_step` accepts the store.
    pub fn fill_missing_grads(&mut self) {
        for (name, p) in &self.params {
            self.grads
                .entry(name.clone())
                .or_insert_with(|| Tensor::new(p.shape().to_vec(), vec![0.0; p.len()]).expect("sized"));
        }
    }
}
