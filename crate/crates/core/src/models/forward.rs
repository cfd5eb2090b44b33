use crate::attention::{self_attend, text_image_attend};
use crate::error::{Result, VeError};
use crate::features::{project_regions, FeatureSet};
use crate::numcore::{Bound, Graph, Var};
use crate::text::{encode_hypothesis, EncoderKind, TokenSeq};

use super::params::{Architecture, ModelParams};

/// One instance as the models see it.
#[derive(Debug, Clone, Copy)]
pub struct ModelInput<'a> {
    pub hypothesis: &'a TokenSeq,
    /// Caption tokens; only the textual-entailment baseline reads them.
    pub premise: Option<&'a TokenSeq>,
    pub features: Option<&'a FeatureSet>,
}

impl<'a> ModelInput<'a> {
    pub fn text(hypothesis: &'a TokenSeq) -> Self {
        Self {
            hypothesis,
            premise: None,
            features: None,
        }
    }

    pub fn with_features(hypothesis: &'a TokenSeq, features: &'a FeatureSet) -> Self {
        Self {
            hypothesis,
            premise: None,
            features: Some(features),
        }
    }
}

/// Graph outputs of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct Forward {
    /// `1×3` unnormalized scores in C, N, E order.
    pub logits: Var,
    /// `1×M` attention over image objects, for attention models.
    pub attention: Option<Var>,
}

/// `relu(x·W1 + b1)·W2 + b2`
fn mlp<'p>(g: &mut Graph<'p>, b: &Bound<'p>, prefix: &str, x: Var) -> Result<Var> {
    let h = dense(g, b, &format!("{prefix}.fc1"), x)?;
    let h = g.relu(h);
    dense(g, b, &format!("{prefix}.fc2"), h)
}

fn dense<'p>(g: &mut Graph<'p>, b: &Bound<'p>, prefix: &str, x: Var) -> Result<Var> {
    let w = b.var(&format!("{prefix}.weight"))?;
    let bias = b.var(&format!("{prefix}.bias"))?;
    g.affine(x, w, bias)
}

fn image_objects(g: &mut Graph<'_>, params: &ModelParams, input: &ModelInput<'_>) -> Result<Var> {
    let want = params.arch.feature_kind().expect("image architecture");
    let fs = input
        .features
        .ok_or_else(|| VeError::Config(format!("{} needs image features", params.arch)))?;
    if fs.kind() != want {
        return Err(VeError::Config(format!(
            "{} expects {:?} features, image {:?} has {:?}",
            params.arch,
            want,
            fs.image_id,
            fs.kind()
        )));
    }
    if fs.num_objects() == 0 {
        return Err(VeError::Domain(format!("image {:?} has no objects", fs.image_id)));
    }
    if fs.feat_dim() != params.dims.feat {
        return Err(VeError::Config(format!(
            "image {:?} has {}-d features, model expects {}",
            fs.image_id,
            fs.feat_dim(),
            params.dims.feat
        )));
    }
    g.constant(fs.objects.clone())
}

/// Builds the graph of `params.arch` for one instance.
pub fn forward<'p>(
    g: &mut Graph<'p>,
    bound: &Bound<'p>,
    params: &ModelParams,
    input: &ModelInput<'_>,
) -> Result<Forward> {
    let text_only = |logits| Forward {
        logits,
        attention: None,
    };
    match params.arch {
        Architecture::HypothesisOnly => forward_hypothesis_only(g, bound, input.hypothesis).map(text_only),
        Architecture::TextualEntailment => {
            let premise = input
                .premise
                .ok_or_else(|| VeError::Config("te needs premise tokens".into()))?;
            forward_te(g, bound, premise, input.hypothesis).map(text_only)
        }
        Architecture::RelationalNetwork => {
            let objects = image_objects(g, params, input)?;
            forward_rn(g, bound, objects, input.hypothesis).map(text_only)
        }
        Architecture::TopDown | Architecture::BottomUp => {
            let objects = image_objects(g, params, input)?;
            forward_topdown(g, bound, objects, input.hypothesis)
        }
        Architecture::EveImage | Architecture::EveRoi => {
            let objects = image_objects(g, params, input)?;
            forward_eve(g, bound, objects, input.hypothesis)
        }
    }
}

/// Text encoder followed by the two-layer classifier.
pub fn forward_hypothesis_only<'p>(g: &mut Graph<'p>, b: &Bound<'p>, hypothesis: &TokenSeq) -> Result<Var> {
    let t = encode_hypothesis(g, b, "text", EncoderKind::Plain, hypothesis)?;
    mlp(g, b, "head", t)
}

/// Separate premise and hypothesis encoders, concatenated.
pub fn forward_te<'p>(g: &mut Graph<'p>, b: &Bound<'p>, premise: &TokenSeq, hypothesis: &TokenSeq) -> Result<Var> {
    let p = encode_hypothesis(g, b, "premise", EncoderKind::Plain, premise)?;
    let h = encode_hypothesis(g, b, "hypothesis", EncoderKind::Plain, hypothesis)?;
    let joint = g.concat_cols(&[p, h])?;
    mlp(g, b, "head", joint)
}

/// Pairs every object with the text feature, runs a shared two-layer MLP
/// over each pair and sums the results.
pub fn forward_rn<'p>(g: &mut Graph<'p>, b: &Bound<'p>, objects: Var, hypothesis: &TokenSeq) -> Result<Var> {
    let t = encode_hypothesis(g, b, "text", EncoderKind::Plain, hypothesis)?;
    let (m, _) = g.shape(objects);
    let tiled = g.repeat_rows(t, m)?;
    let pairs = g.concat_cols(&[objects, tiled])?;
    let h = dense(g, b, "rn.g1", pairs)?;
    let h = g.relu(h);
    let h = dense(g, b, "rn.g2", h)?;
    let h = g.relu(h);
    let pooled = g.sum_rows(h);
    dense(g, b, "rn.out", pooled)
}

/// Text-conditioned soft attention over objects, then a gated fusion of
/// the attended image and text features into two summed classifiers.
pub fn forward_topdown<'p>(g: &mut Graph<'p>, b: &Bound<'p>, objects: Var, hypothesis: &TokenSeq) -> Result<Forward> {
    let t = encode_hypothesis(g, b, "text", EncoderKind::Plain, hypothesis)?;
    let (m, _) = g.shape(objects);
    let tiled = g.repeat_rows(t, m)?;
    let joint = g.concat_cols(&[objects, tiled])?;
    let h = dense(g, b, "att.fc", joint)?;
    let h = g.relu(h);
    let w = b.var("att.score")?;
    let scores = g.matmul(h, w)?;
    let scores = g.transpose(scores);
    let weights = g.softmax_rows(scores)?;
    let v = g.matmul(weights, objects)?;

    let pv = dense(g, b, "proj.image", v)?;
    let pv = g.relu(pv);
    let pt = dense(g, b, "proj.text", t)?;
    let pt = g.relu(pt);
    let fused = g.mul(pv, pt)?;
    let a = mlp(g, b, "mlp_a", fused)?;
    let c = mlp(g, b, "mlp_b", fused)?;
    Ok(Forward {
        logits: g.add(a, c)?,
        attention: Some(weights),
    })
}

/// Image self-attention, text-to-image attention with the self-attended
/// hypothesis feature, then a classifier over `[text, attended image]`.
pub fn forward_eve<'p>(g: &mut Graph<'p>, b: &Bound<'p>, objects: Var, hypothesis: &TokenSeq) -> Result<Forward> {
    let t = encode_hypothesis(g, b, "text", EncoderKind::Attentive, hypothesis)?;
    let regions = project_regions(g, b, "image.proj", objects)?;
    let regions = self_attend(g, regions)?;
    let att = text_image_attend(g, regions, t)?;
    let joint = g.concat_cols(&[t, att.attended])?;
    Ok(Forward {
        logits: mlp(g, b, "head", joint)?,
        attention: Some(att.mask),
    })
}

/// Forward values without gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub logits: [f64; 3],
    pub attention: Option<Vec<f64>>,
}

impl Prediction {
    /// Highest-scoring class index; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.logits.iter().enumerate().skip(1) {
            if v > self.logits[best] {
                best = i;
            }
        }
        best
    }
}

pub fn predict(params: &ModelParams, input: &ModelInput<'_>) -> Result<Prediction> {
    let mut g = Graph::new();
    let bound = g.bind(&params.store)?;
    let out = forward(&mut g, &bound, params, input)?;
    let v = g.value(out.logits);
    Ok(Prediction {
        logits: [v[0], v[1], v[2]],
        attention: out.attention.map(|a| g.value(a).to_vec()),
    })
}
