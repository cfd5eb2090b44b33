//! Scaled dot-product attention and its two uses: self-attention within a
//! branch and text-to-image attention across branches.
//!
//! For a query matrix `Q` (M×d) and a reference matrix `R` (N×d) the mask is
//! `softmax_rows(R·Qᵀ / √d)` (N×M) and the attended output is `mask·Q`
//! (N×d). Each mask row is a distribution over the rows of `Q`.

use crate::error::{dim_err, Result};
use crate::numcore::{Graph, Var};

/// Graph nodes produced by one attention call.
#[derive(Debug, Clone, Copy)]
pub struct AttentionResult {
    /// N×M weights.
    pub mask: Var,
    /// N×d attended query features.
    pub attended: Var,
}

/// `query_keep[j] == false` excludes query row `j` from every mask row
/// (its score is treated as `-inf`).
pub fn sdp_attention_masked(
    g: &mut Graph<'_>,
    query: Var,
    reference: Var,
    query_keep: Option<&[bool]>,
) -> Result<AttentionResult> {
    let (m, dq) = g.shape(query);
    let (n, dr) = g.shape(reference);
    if dq != dr {
        return Err(dim_err("sdp_attention", &[m, dq], &[n, dr]));
    }
    let qt = g.transpose(query);
    let raw = g.matmul(reference, qt)?;
    let scores = g.scale(raw, 1.0 / (dq as f64).sqrt());
    let mask = match query_keep {
        Some(keep) => g.softmax_rows_masked(scores, keep)?,
        None => g.softmax_rows(scores)?,
    };
    let attended = g.matmul(mask, query)?;
    Ok(AttentionResult { mask, attended })
}

pub fn sdp_attention(g: &mut Graph<'_>, query: Var, reference: Var) -> Result<AttentionResult> {
    sdp_attention_masked(g, query, reference, None)
}

/// Self-attention: `Q = R = x`. Output has the shape of `x`.
pub fn self_attend(g: &mut Graph<'_>, x: Var) -> Result<Var> {
    Ok(sdp_attention(g, x, x)?.attended)
}

/// Self-attention that ignores padded positions as keys.
pub fn self_attend_masked(g: &mut Graph<'_>, x: Var, keep: &[bool]) -> Result<Var> {
    Ok(sdp_attention_masked(g, x, x, Some(keep))?.attended)
}

/// Attends over image rows (queries, M×d) with one text row (1×d) as the
/// reference. Returns the 1×M mask and the 1×d attended image vector.
pub fn text_image_attend(g: &mut Graph<'_>, image_feats: Var, text_feat: Var) -> Result<AttentionResult> {
    let (tr, tc) = g.shape(text_feat);
    if tr != 1 {
        return Err(dim_err("text_image_attend", &[1, g.shape(image_feats).1], &[tr, tc]));
    }
    sdp_attention(g, image_feats, text_feat)
}
