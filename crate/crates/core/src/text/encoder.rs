use rand::Rng;

use super::gru::{gru_step, GruParams};
use super::vocab::{PAD, UNK};
use crate::attention::self_attend_masked;
use crate::error::{Result, VeError};
use crate::numcore::{Bound, Graph, ParamStore, Tensor, Var};

/// Name of the shared word-embedding table in a parameter store.
pub const EMBEDDING: &str = "embedding";

/// A token-id row, possibly padded. `keep[t]` is false for PAD positions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenSeq {
    pub ids: Vec<usize>,
    pub keep: Vec<bool>,
}

impl TokenSeq {
    pub fn new(ids: Vec<usize>) -> Self {
        let keep = vec![true; ids.len()];
        Self { ids, keep }
    }

    /// Pads with [`PAD`] up to `width`.
    pub fn padded(mut ids: Vec<usize>, width: usize) -> Self {
        let len = ids.len();
        let mut keep = vec![true; len];
        if width > len {
            ids.resize(width, PAD);
            keep.resize(width, false);
        }
        Self { ids, keep }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn valid_len(&self) -> usize {
        self.keep.iter().filter(|k| **k).count()
    }
}

/// How a text branch turns embeddings into a sentence vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    /// embeddings → MLP(ReLU) → self-attention → GRU
    Attentive,
    /// embeddings → GRU
    Plain,
}

/// Adds the weights of one text encoder under `prefix`.
pub fn init_text_encoder<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    kind: EncoderKind,
    embed_dim: usize,
    hidden: usize,
    rng: &mut R,
) -> Result<()> {
    let gru_input = match kind {
        EncoderKind::Attentive => {
            store.insert(
                format!("{prefix}.mlp.weight"),
                Tensor::glorot(embed_dim, hidden, rng),
                true,
            )?;
            store.insert(format!("{prefix}.mlp.bias"), Tensor::zeros(&[1, hidden]), true)?;
            hidden
        }
        EncoderKind::Plain => embed_dim,
    };
    GruParams::init(store, &format!("{prefix}.gru"), gru_input, hidden, rng)
}

/// Encodes one hypothesis into a `1×hidden` feature: the GRU state after
/// the last non-PAD token.
///
/// PAD positions are excluded as attention keys and never fed to the GRU,
/// so padding a row does not change its encoding. A row with no real tokens
/// is encoded as a single UNK.
pub fn encode_hypothesis<'p>(
    g: &mut Graph<'p>,
    bound: &Bound<'p>,
    prefix: &str,
    kind: EncoderKind,
    seq: &TokenSeq,
) -> Result<Var> {
    if seq.ids.len() != seq.keep.len() {
        return Err(VeError::Contract("token ids and pad mask differ in length".into()));
    }
    let unk;
    let seq = if seq.valid_len() == 0 {
        unk = TokenSeq::new(vec![UNK]);
        &unk
    } else {
        seq
    };

    let table = bound.var(EMBEDDING)?;
    let embedded = g.gather_rows(table, &seq.ids, Some(PAD))?;

    let inputs = match kind {
        EncoderKind::Attentive => {
            let w = bound.var(&format!("{prefix}.mlp.weight"))?;
            let b = bound.var(&format!("{prefix}.mlp.bias"))?;
            let pre = g.affine(embedded, w, b)?;
            let projected = g.relu(pre);
            self_attend_masked(g, projected, &seq.keep)?
        }
        EncoderKind::Plain => embedded,
    };

    let gru = GruParams::bind(bound, &format!("{prefix}.gru"))?;
    let mut h = g.constant(Tensor::zeros(&[1, gru.hidden(g)]))?;
    for (t, _) in seq.keep.iter().enumerate().filter(|(_, k)| **k) {
        let x = g.row(inputs, t)?;
        h = gru_step(g, x, h, &gru)?;
    }
    Ok(h)
}
