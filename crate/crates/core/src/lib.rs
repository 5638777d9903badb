pub mod backbone;
pub mod bridge;
pub mod cli;
pub mod data;
pub mod diagnostics;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod fsio;
pub mod heads;
pub mod metrics;
pub mod modality;
pub mod model;
pub mod nn;
pub mod prompts;
pub mod tensor;
pub mod tokenizer;
pub mod train;

pub use error::{Error, Result};
pub use modality::{Modality, ModalitySample};
pub use model::{Example, Model, ModelConfig, Prediction, Preset, Target};
pub use tensor::Tensor;
