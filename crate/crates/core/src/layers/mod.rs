//! Network building blocks, each with a forward and a backward pass.

mod combiner;
mod conv;
mod dense;
mod embedding;
mod lstm;
mod network;
mod softmax;

pub use combiner::PoolingOp;
pub use conv::{max_over_time, ConvCache, ConvMaxOverTime};
pub use dense::{DropoutHidden, Mode};
pub use embedding::EmbeddingTable;
pub use lstm::{LstmCache, LstmLayer, LstmOutput, LstmStep};
pub use network::{
    pad_for_window, BranchMode, CnnBranch, ForwardCache, HybridNetwork, NetworkConfig, RnnBranch,
    Tensor, TensorMut,
};
pub use softmax::{softmax, SoftmaxOutput};
