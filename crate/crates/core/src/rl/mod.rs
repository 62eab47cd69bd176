//! Deep Q-learning for the dialog manager.

mod checkpoint;
mod network;
mod replay;
mod train;

pub use checkpoint::{PolicyCheckpoint, CHECKPOINT_FORMAT_VERSION};
pub use network::{
    init_network, masked_argmax, select_action, ForwardCache, Gradients, QNetwork, QValues,
    ACTION_COUNT, DROPOUT, HIDDEN_UNITS,
};
pub use replay::{ReplayBuffer, Transition, REPLAY_CAPACITY};
pub use train::{
    epsilon_at, eval_seed, evaluate_network, loss_and_gradients, td_targets, td_targets_counted,
    train, train_step, DqnPolicy, EvalRecord, TrainConfig, TrainStats,
};
