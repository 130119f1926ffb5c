//! Federated GAN training with universal (odds-value) aggregation of private
//! local discriminators, plus a numerical lab that checks the method's
//! correctness and suboptimality bounds on discrete distributions.

pub mod aggregation;
pub mod autodiff;
pub mod config;
pub mod data;
pub mod error;
pub mod eval;
pub mod federation;
pub mod models;
pub mod plot;
pub mod theory;

pub use autodiff::{Adam, AdamConfig, Tape, Tensor, Var};
pub use error::{Error, Result};
pub use aggregation::{aggregate_odds, FeedbackBatch, GeneratorLoss, MixtureWeights, OddsValue, Probability};
pub use config::RunConfig;
pub use data::{GaussianMixtureSpec, LabeledDataset, PartitionMode, PartitionPlan, SitedDataset};
pub use eval::ModeReport;
pub use federation::{AggregatorKind, LocalTransport, Message, TrainingConfig};
pub use models::{Discriminator, Generator, NoiseSpec};
