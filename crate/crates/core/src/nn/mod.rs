//! Dense feed-forward networks: layers, losses, RMSProp, training, checking.

pub mod activation;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod network;
pub mod optim;
pub mod train;

pub use activation::{softmax, Activation};
pub use gradcheck::{grad_check, grad_check_against, grad_check_matrix, GradCheckCase, GradCheckReport};
pub use io::{load_network, read_network, save_network, write_network};
pub use loss::{cross_entropy, lp_loss, Loss};
pub use network::{
    mlp_specs, BatchNorm, DenseLayer, ForwardCache, Gradients, LayerSpec, Mode, NetworkParams,
    Standardizer,
};
pub use optim::{rmsprop_step, RmsPropConfig};
pub use train::{train, train_with_validator, write_history_csv, Dataset, EpochRecord, TrainConfig, TrainOutcome};
