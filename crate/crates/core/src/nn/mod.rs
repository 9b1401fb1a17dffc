//! Dense f64 tensor engine with reverse-mode differentiation, the layer set
//! the models are built from, and Adam.

pub mod adam;
pub mod check;
pub mod layers;
pub mod params;
pub mod tape;

pub use adam::Adam;
pub use layers::{two_node_pool, Activation, Conv1dReadout, Dense, GraphConv, GruCell};
pub use params::{Init, ParamId, ParamSet, TapeSession};
pub use tape::{sigmoid_scalar, Adjacency, Tape, VarId};
