use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, VeError};
use crate::features::FeatureKind;
use crate::numcore::{ParamStore, Tensor};
use crate::text::{init_text_encoder, EmbeddingTable, EncoderKind, EMBEDDING, OOV_INIT_LIMIT, PAD};

pub const NUM_CLASSES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    HypothesisOnly,
    /// Caption premise + hypothesis, two text encoders.
    TextualEntailment,
    RelationalNetwork,
    TopDown,
    BottomUp,
    EveImage,
    EveRoi,
}

impl Architecture {
    pub const ALL: [Architecture; 7] = [
        Architecture::HypothesisOnly,
        Architecture::TextualEntailment,
        Architecture::RelationalNetwork,
        Architecture::TopDown,
        Architecture::BottomUp,
        Architecture::EveImage,
        Architecture::EveRoi,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::HypothesisOnly => "hypothesis-only",
            Architecture::TextualEntailment => "te",
            Architecture::RelationalNetwork => "rn",
            Architecture::TopDown => "top-down",
            Architecture::BottomUp => "bottom-up",
            Architecture::EveImage => "eve-image",
            Architecture::EveRoi => "eve-roi",
        }
    }

    /// Image features this architecture consumes, if any.
    pub fn feature_kind(self) -> Option<FeatureKind> {
        match self {
            Architecture::HypothesisOnly | Architecture::TextualEntailment => None,
            Architecture::BottomUp | Architecture::EveRoi => Some(FeatureKind::Roi),
            Architecture::RelationalNetwork | Architecture::TopDown | Architecture::EveImage => Some(FeatureKind::Grid),
        }
    }

    pub fn needs_premise(self) -> bool {
        self == Architecture::TextualEntailment
    }

    pub fn is_eve(self) -> bool {
        matches!(self, Architecture::EveImage | Architecture::EveRoi)
    }

    fn text_prefixes(self) -> &'static [&'static str] {
        match self {
            Architecture::TextualEntailment => &["premise", "hypothesis"],
            _ => &["text"],
        }
    }

    fn encoder_kind(self) -> EncoderKind {
        if self.is_eve() {
            EncoderKind::Attentive
        } else {
            EncoderKind::Plain
        }
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = VeError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| VeError::Config(format!("unknown architecture {s:?}")))
    }
}

/// Layer sizes. Defaults follow 300-d text features and a 2048-channel
/// image backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub vocab: usize,
    pub embed: usize,
    /// Text feature size, projected image size and attention width.
    pub hidden: usize,
    /// Image object feature size.
    pub feat: usize,
    /// Width of the first classifier layer.
    pub head_hidden: usize,
    /// Width of the relational pair MLP.
    pub rn_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            vocab: 2,
            embed: 300,
            hidden: 300,
            feat: crate::features::DEFAULT_GRID_CHANNELS,
            head_hidden: 300,
            rn_hidden: 256,
        }
    }
}

struct Entry {
    name: String,
    shape: [usize; 2],
    trainable: bool,
}

fn entry(name: impl Into<String>, rows: usize, cols: usize) -> Entry {
    Entry {
        name: name.into(),
        shape: [rows, cols],
        trainable: true,
    }
}

fn dense(out: &mut Vec<Entry>, prefix: &str, input: usize, output: usize) {
    out.push(entry(format!("{prefix}.weight"), input, output));
    out.push(entry(format!("{prefix}.bias"), 1, output));
}

fn gru(out: &mut Vec<Entry>, prefix: &str, input: usize, hidden: usize) {
    for gate in ["z", "r", "h"] {
        out.push(entry(format!("{prefix}.w_{gate}"), input, hidden));
        out.push(entry(format!("{prefix}.u_{gate}"), hidden, hidden));
        out.push(entry(format!("{prefix}.b_{gate}"), 1, hidden));
    }
}

/// Names, shapes and trainability of every tensor, in store order.
fn schema(arch: Architecture, d: &ModelDims) -> Vec<Entry> {
    let mut s = vec![Entry {
        name: EMBEDDING.into(),
        shape: [d.vocab, d.embed],
        trainable: false,
    }];
    for p in arch.text_prefixes() {
        match arch.encoder_kind() {
            EncoderKind::Attentive => {
                dense(&mut s, &format!("{p}.mlp"), d.embed, d.hidden);
                gru(&mut s, &format!("{p}.gru"), d.hidden, d.hidden);
            }
            EncoderKind::Plain => gru(&mut s, &format!("{p}.gru"), d.embed, d.hidden),
        }
    }
    match arch {
        Architecture::HypothesisOnly => {
            dense(&mut s, "head.fc1", d.hidden, d.head_hidden);
            dense(&mut s, "head.fc2", d.head_hidden, NUM_CLASSES);
        }
        Architecture::TextualEntailment | Architecture::EveImage | Architecture::EveRoi => {
            if arch.is_eve() {
                dense(&mut s, "image.proj", d.feat, d.hidden);
            }
            dense(&mut s, "head.fc1", 2 * d.hidden, d.head_hidden);
            dense(&mut s, "head.fc2", d.head_hidden, NUM_CLASSES);
        }
        Architecture::RelationalNetwork => {
            dense(&mut s, "rn.g1", d.feat + d.hidden, d.rn_hidden);
            dense(&mut s, "rn.g2", d.rn_hidden, d.rn_hidden);
            dense(&mut s, "rn.out", d.rn_hidden, NUM_CLASSES);
        }
        Architecture::TopDown | Architecture::BottomUp => {
            dense(&mut s, "att.fc", d.feat + d.hidden, d.hidden);
            s.push(entry("att.score", d.hidden, 1));
            dense(&mut s, "proj.image", d.feat, d.hidden);
            dense(&mut s, "proj.text", d.hidden, d.hidden);
            for m in ["mlp_a", "mlp_b"] {
                dense(&mut s, &format!("{m}.fc1"), d.hidden, d.head_hidden);
                dense(&mut s, &format!("{m}.fc2"), d.head_hidden, NUM_CLASSES);
            }
        }
    }
    s
}

/// All tensors of one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub arch: Architecture,
    pub dims: ModelDims,
    pub store: ParamStore,
}

impl ModelParams {
    /// Seeded Glorot-uniform weights and zero biases. The embedding table
    /// is copied from `embeddings` (its width must equal `dims.embed`) or
    /// drawn randomly with a zero PAD row when absent.
    pub fn init(arch: Architecture, dims: ModelDims, embeddings: Option<&EmbeddingTable>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let table = match embeddings {
            Some(t) => {
                if t.matrix.shape() != [dims.vocab, dims.embed] {
                    return Err(VeError::Config(format!(
                        "embedding table is {:?}, model expects [{}, {}]",
                        t.matrix.shape(),
                        dims.vocab,
                        dims.embed
                    )));
                }
                t.matrix.clone()
            }
            None => {
                let mut m = Tensor::uniform(&[dims.vocab, dims.embed], OOV_INIT_LIMIT, &mut rng);
                m.data_mut()[PAD * dims.embed..(PAD + 1) * dims.embed].fill(0.0);
                m
            }
        };

        let mut store = ParamStore::new();
        store.insert(EMBEDDING, table, false)?;
        for p in arch.text_prefixes() {
            init_text_encoder(&mut store, p, arch.encoder_kind(), dims.embed, dims.hidden, &mut rng)?;
        }
        for e in schema(arch, &dims).into_iter().skip(store.len()) {
            let [r, c] = e.shape;
            let t = if e.name.ends_with(".bias") {
                Tensor::zeros(&[r, c])
            } else {
                Tensor::glorot(r, c, &mut rng)
            };
            store.insert(e.name, t, e.trainable)?;
        }
        let params = Self { arch, dims, store };
        params.validate()?;
        Ok(params)
    }

    /// Rebuilds from loaded tensors, inferring dims from their shapes and
    /// checking every name and shape against the architecture's schema.
    pub fn from_store(arch: Architecture, mut store: ParamStore) -> Result<Self> {
        let dims = infer_dims(arch, &store)?;
        let expected = schema(arch, &dims);
        for e in &expected {
            if let Some((_, p)) = store.iter_mut().find(|(n, _)| *n == e.name) {
                p.trainable = e.trainable;
            }
        }
        let params = Self { arch, dims, store };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = schema(self.arch, &self.dims);
        if expected.len() != self.store.len() {
            return Err(VeError::Config(format!(
                "{} expects {} tensors, found {}",
                self.arch,
                expected.len(),
                self.store.len()
            )));
        }
        for e in expected {
            let t = self.store.get(&e.name)?;
            if t.shape() != e.shape {
                return Err(VeError::Config(format!(
                    "{}: tensor {:?} has shape {:?}, expected {:?}",
                    self.arch,
                    e.name,
                    t.shape(),
                    e.shape
                )));
            }
        }
        Ok(())
    }
}

fn shape_of(store: &ParamStore, name: &str) -> Result<(usize, usize)> {
    let t = store
        .get(name)
        .map_err(|_| VeError::Config(format!("checkpoint lacks tensor {name:?}")))?;
    t.dims2()
}

fn infer_dims(arch: Architecture, store: &ParamStore) -> Result<ModelDims> {
    let (vocab, embed) = shape_of(store, EMBEDDING)?;
    let text = arch.text_prefixes()[0];
    let (hidden, _) = shape_of(store, &format!("{text}.gru.u_z"))?;
    let mut d = ModelDims {
        vocab,
        embed,
        hidden,
        feat: 0,
        head_hidden: 0,
        rn_hidden: 0,
    };
    match arch {
        Architecture::HypothesisOnly | Architecture::TextualEntailment => {
            d.head_hidden = shape_of(store, "head.fc1.weight")?.1;
        }
        Architecture::EveImage | Architecture::EveRoi => {
            d.feat = shape_of(store, "image.proj.weight")?.0;
            d.head_hidden = shape_of(store, "head.fc1.weight")?.1;
        }
        Architecture::RelationalNetwork => {
            let (input, rn) = shape_of(store, "rn.g1.weight")?;
            d.feat = input.saturating_sub(hidden);
            d.rn_hidden = rn;
        }
        Architecture::TopDown | Architecture::BottomUp => {
            d.feat = shape_of(store, "proj.image.weight")?.0;
            d.head_hidden = shape_of(store, "mlp_a.fc1.weight")?.1;
        }
    }
    Ok(d)
}
