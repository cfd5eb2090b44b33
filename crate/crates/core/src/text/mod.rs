//! Hypothesis text: tokenization, vocabulary, word vectors and the GRU
//! sentence encoder.

mod embeddings;
mod encoder;
mod gru;
mod tokenize;
mod vocab;

pub use embeddings::{load_embeddings, load_embeddings_file, EmbeddingTable, OOV_INIT_LIMIT};
pub use encoder::{encode_hypothesis, init_text_encoder, EncoderKind, TokenSeq, EMBEDDING};
pub use gru::{gru_step, GruParams};
pub use tokenize::{tokenize, PUNCTUATION};
pub use vocab::{Vocabulary, PAD, PAD_TOKEN, UNK, UNK_TOKEN};
