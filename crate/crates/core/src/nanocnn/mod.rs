pub mod gradcheck;
pub mod io;
pub mod layers;
pub mod network;
pub mod tensor;
pub mod train;

pub use network::{build_network, shape_chain, DropoutMode, LayerSpec, Network, NetworkSpec, Trace};
pub use tensor::{Scalar, Tensor};
pub use train::{image_to_input, predict, train, Control, EpochStats, Sample, TrainConfig};
pub use io::{load_weights, save_weights, ModelWeights};
