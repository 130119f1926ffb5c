//! Generator and discriminator networks, noise sources and checkpoints.

mod checkpoint;
mod gan;
mod mlp;
mod noise;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use gan::{local_discriminator_step, Discriminator, DiscriminatorBatch, Generator, EPS_D};
pub use mlp::{Mlp, MlpSpec, OutputActivation, DEFAULT_LEAKY_SLOPE};
pub use noise::{LabelEncoding, NoiseSpec};
