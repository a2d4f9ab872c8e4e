//! E(3)-equivariant message passing.
//!
//! Per layer, with directed edges `i ← j`:
//! `m_ij = MLP_node([h_i, h_j, |r_i - r_j|])`, `h_i += Σ_j m_ij`,
//! `r_i += (1/(n-1)) Σ_j MLP_coord(|r_i - r_j|) (r_i - r_j)`.
//! Parameters live in a [`ParamStore`] under `{layer}.node` and `{layer}.coord`.

use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

use crate::numcore::{NumError, ParamStore, Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EgnnError {
    #[error("edge endpoint {index} out of range for {len} nodes")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("features have {features} rows but coordinates have {coords}")]
    RowMismatch { features: usize, coords: usize },
    #[error(transparent)]
    Num(#[from] NumError),
}

/// Directed edge list; the message on edge `k` flows from `source[k]` into `target[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Edges {
    n: usize,
    target: Arc<Vec<usize>>,
    source: Arc<Vec<usize>>,
}

impl Edges {
    pub fn new(n: usize, pairs: &[(usize, usize)]) -> Result<Self, EgnnError> {
        for &(i, j) in pairs {
            for index in [i, j] {
                if index >= n {
                    return Err(EgnnError::IndexOutOfRange { index, len: n });
                }
            }
        }
        Ok(Edges {
            n,
            target: Arc::new(pairs.iter().map(|p| p.0).collect()),
            source: Arc::new(pairs.iter().map(|p| p.1).collect()),
        })
    }

    /// Every ordered pair `(i, j)` with `i != j`.
    pub fn fully_connected(n: usize) -> Self {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect();
        Edges::new(n, &pairs).expect("indices in range")
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.target.iter().copied().zip(self.source.iter().copied())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeState {
    /// `n×d`
    pub features: Tensor,
    /// `n×3`
    pub coords: Tensor,
}

impl NodeState {
    pub fn new(features: Tensor, coords: Tensor) -> Result<Self, EgnnError> {
        if features.rows() != coords.rows() {
            return Err(EgnnError::RowMismatch {
                features: features.rows(),
                coords: coords.rows(),
            });
        }
        Ok(NodeState { features, coords })
    }

    pub fn num_nodes(&self) -> usize {
        self.coords.rows()
    }
}

pub fn init_layer(params: &mut ParamStore, name: &str, d: usize, rng: &mut impl Rng) {
    params.init_mlp(&format!("{name}.node"), 2 * d + 1, d, d, rng);
    params.init_mlp(&format!("{name}.coord"), 1, d, 1, rng);
}

/// Layer outputs recorded on a tape.
pub struct LayerVars {
    pub messages: Var,
    pub features: Var,
    pub coords: Var,
}

/// Records one layer. `h` is `n×d`, `r` is `n×3`.
pub fn layer(
    tape: &mut Tape,
    params: &ParamStore,
    name: &str,
    h: Var,
    r: Var,
    edges: &Edges,
) -> Result<LayerVars, EgnnError> {
    let n = edges.n;
    if tape.value(r).rows() != n {
        return Err(EgnnError::IndexOutOfRange {
            index: n.saturating_sub(1),
            len: tape.value(r).rows(),
        });
    }
    if edges.is_empty() {
        let zeros = tape.input(Tensor::zeros(0, tape.value(h).cols()));
        return Ok(LayerVars {
            messages: zeros,
            features: h,
            coords: r,
        });
    }
    let h_i = tape.gather_rows(h, edges.target.clone())?;
    let h_j = tape.gather_rows(h, edges.source.clone())?;
    let r_i = tape.gather_rows(r, edges.target.clone())?;
    let r_j = tape.gather_rows(r, edges.source.clone())?;
    let diff = tape.sub(r_i, r_j)?;
    let dist = tape.row_norm(diff);
    let input = tape.concat_cols(&[h_i, h_j, dist])?;
    let messages = params.mlp(tape, &format!("{name}.node"), input)?;
    let agg = tape.scatter_add_rows(messages, edges.target.clone(), n)?;
    let features = tape.add(h, agg)?;

    let w = params.mlp(tape, &format!("{name}.coord"), dist)?;
    let shift = tape.scale_rows(diff, w)?;
    let shift = tape.scatter_add_rows(shift, edges.target.clone(), n)?;
    let shift = tape.scale(shift, 1.0 / (n.saturating_sub(1).max(1)) as f64);
    let coords = tape.add(r, shift)?;
    Ok(LayerVars {
        messages,
        features,
        coords,
    })
}

/// Records the layer stack and returns final `(features, coords)`.
pub fn forward_vars(
    tape: &mut Tape,
    params: &ParamStore,
    layers: &[String],
    h: Var,
    r: Var,
    edges: &Edges,
) -> Result<(Var, Var), EgnnError> {
    let (mut h, mut r) = (h, r);
    for name in layers {
        let out = layer(tape, params, name, h, r, edges)?;
        h = out.features;
        r = out.coords;
    }
    Ok((h, r))
}

fn check(state: &NodeState, edges: &Edges) -> Result<(), EgnnError> {
    if state.num_nodes() != edges.n {
        return Err(EgnnError::IndexOutOfRange {
            index: edges.n.saturating_sub(1),
            len: state.num_nodes(),
        });
    }
    NodeState::new(state.features.clone(), state.coords.clone()).map(|_| ())
}

/// One message per directed edge, `|E|×d`.
pub fn compute_messages(state: &NodeState, params: &ParamStore, name: &str, edges: &Edges) -> Result<Tensor, EgnnError> {
    check(state, edges)?;
    let mut tape = Tape::new();
    let h = tape.input(state.features.clone());
    let r = tape.input(state.coords.clone());
    let out = layer(&mut tape, params, name, h, r, edges)?;
    Ok(tape.value(out.messages).clone())
}

/// `r + Δr` for one layer.
pub fn update_coordinates(state: &NodeState, params: &ParamStore, name: &str, edges: &Edges) -> Result<Tensor, EgnnError> {
    check(state, edges)?;
    let mut tape = Tape::new();
    let h = tape.input(state.features.clone());
    let r = tape.input(state.coords.clone());
    let out = layer(&mut tape, params, name, h, r, edges)?;
    Ok(tape.value(out.coords).clone())
}

pub fn egnn_forward(state: &NodeState, params: &ParamStore, layers: &[String], edges: &Edges) -> Result<NodeState, EgnnError> {
    check(state, edges)?;
    let mut tape = Tape::new();
    let h = tape.input(state.features.clone());
    let r = tape.input(state.coords.clone());
    let (h, r) = forward_vars(&mut tape, params, layers, h, r, edges)?;
    Ok(NodeState {
        features: tape.value(h).clone(),
        coords: tape.value(r).clone(),
    })
}
