//! A small convolutional network stack with reverse-mode gradients, and the
//! actor/critic pair built on it.

mod checkpoint;
mod layers;
mod network;
mod policy;
mod tensor;

pub use checkpoint::{Checkpoint, NetworkManifest, CHECKPOINT_VERSION};
pub use layers::LayerSpec;
pub use network::{Gradients, Network};
pub use policy::{
    actor_specs, critic_input, critic_specs, minmax_action, minmax_action_backward, observation,
    policy_action, policy_action_backward, weight_channel_gradient, ActorNet, CriticNet,
    CONV_CHANNELS, HIDDEN_UNITS, MIN_WINDOW,
};
pub use tensor::Tensor;
