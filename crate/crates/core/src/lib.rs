// `!(x > 0.0)` is used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod chemrules;
pub mod element;
pub mod molgraph;
pub mod smiles;
pub mod numcore;
pub mod egnn;
pub mod diffusion;
pub mod dataio;
pub mod generator;
pub mod sensorselect;
pub mod cli;
