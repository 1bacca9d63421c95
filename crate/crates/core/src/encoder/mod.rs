//! BERT-style encoder driven by an [`AttentionPattern`](crate::attention::AttentionPattern).

mod config;
mod io;
mod layers;
mod model;
mod tokens;
mod weights;

pub use config::EncoderConfig;
pub use io::{load_model, save_model, ModelManifest, TensorEntry};
pub use model::{embed, encoder_forward, layer_forward, relevance_score, Encoder, ForwardTrace};
pub use tokens::{assemble_input, TokenSequence, Vocab, CLS, FIRST_WORD, SEP, UNK};
pub use weights::{interpolate_positions, EncoderWeights, LayerWeights};
