//! Text-image attention export: a JSON record per instance plus a PGM
//! heatmap for grid features.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::dataset::Label;
use crate::error::{Result, VeError};
use crate::features::{FeatureMeta, FeatureSet};
use crate::models::{predict, ModelInput, ModelParams};
use crate::text::{tokenize, TokenSeq, Vocabulary};

/// Intensity used when every grid cell has the same weight.
pub const UNIFORM_GRAY: u8 = 128;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionMap {
    pub image_id: String,
    pub hypothesis: String,
    pub predicted_label: Label,
    pub logits: [f64; 3],
    pub weights: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub boxes: Option<Vec<[f32; 4]>>,
    /// `(d, d)` for grid features.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<[usize; 2]>,
}

/// Runs an EVE model on one hypothesis and returns its text-image mask.
pub fn attention_map(
    params: &ModelParams,
    vocab: &Vocabulary,
    hypothesis: &str,
    features: &FeatureSet,
) -> Result<AttentionMap> {
    if !params.arch.is_eve() {
        return Err(VeError::Config(format!(
            "visualize needs an eve-image or eve-roi checkpoint, got {}",
            params.arch
        )));
    }
    let tokens = TokenSeq::new(vocab.encode(&tokenize(hypothesis)));
    let pred = predict(params, &ModelInput::with_features(&tokens, features))?;
    let (boxes, grid) = match &features.meta {
        FeatureMeta::Grid { side, .. } => (None, Some([*side, *side])),
        FeatureMeta::Roi { boxes } => (Some(boxes.clone()), None),
    };
    Ok(AttentionMap {
        image_id: features.image_id.clone(),
        hypothesis: hypothesis.to_string(),
        predicted_label: Label::from_index(pred.argmax()).expect("three logits"),
        logits: pred.logits,
        weights: pred.attention.expect("eve returns a mask"),
        boxes,
        grid,
    })
}

/// Binary PGM (P5) of `weights` laid out row-major on a `side × side`
/// grid. Intensity is `round(255·w / max w)`; equal weights over more than
/// one cell map to [`UNIFORM_GRAY`].
pub fn grid_pgm(weights: &[f64], side: usize) -> Result<Vec<u8>> {
    if side == 0 || weights.len() != side * side {
        return Err(VeError::Contract(format!(
            "{} weights do not fill a {side}×{side} grid",
            weights.len()
        )));
    }
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(VeError::Domain(
            "attention weights must be finite and non-negative".into(),
        ));
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    let uniform = weights.len() > 1 && weights.iter().all(|&w| w == weights[0]);
    let mut out = format!("P5\n{side} {side}\n255\n").into_bytes();
    out.extend(weights.iter().map(|&w| {
        if uniform {
            UNIFORM_GRAY
        } else if max > 0.0 {
            (255.0 * w / max).round() as u8
        } else {
            0
        }
    }));
    Ok(out)
}

/// Writes `map` as JSON to `json_path` and, for grid features, the
/// heatmap next to it with a `.pgm` extension. Returns the PGM path.
pub fn write_attention(map: &AttentionMap, json_path: &Path) -> Result<Option<PathBuf>> {
    let mut json = serde_json::to_vec_pretty(map)?;
    json.push(b'\n');
    fs::write(json_path, json)?;
    match map.grid {
        Some([side, _]) => {
            let pgm = json_path.with_extension("pgm");
            fs::write(&pgm, grid_pgm(&map.weights, side)?)?;
            Ok(Some(pgm))
        }
        None => Ok(None),
    }
}
