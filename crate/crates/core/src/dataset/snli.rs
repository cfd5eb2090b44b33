use std::io::BufRead;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Result, VeError};

/// Entailment class. The discriminant is the logit index: C, N, E.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Contradiction = 0,
    Neutral = 1,
    Entailment = 2,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::Contradiction, Label::Neutral, Label::Entailment];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Label> {
        Self::ALL.get(i).copied()
    }

    pub fn short(self) -> &'static str {
        match self {
            Label::Contradiction => "C",
            Label::Neutral => "N",
            Label::Entailment => "E",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Contradiction => "contradiction",
            Label::Neutral => "neutral",
            Label::Entailment => "entailment",
        }
    }
}

/// SNLI gold label; `None` means no annotator consensus ("-").
pub type GoldLabel = Option<Label>;

#[derive(Debug, Clone, PartialEq)]
pub struct SnliRecord {
    pub gold_label: GoldLabel,
    pub premise: String,
    pub hypothesis: String,
    pub caption_id: String,
    pub pair_id: String,
    /// 1-based line in the source file.
    pub line: usize,
}

/// A non-fatal problem found while reading or building.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub message: String,
}

impl Diagnostic {
    pub fn at(line: usize, message: impl Into<String>) -> Self {
        Self {
            line: Some(line),
            message: message.into(),
        }
    }

    pub fn general(message: impl Into<String>) -> Self {
        Self {
            line: None,
            message: message.into(),
        }
    }
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(l) => write!(f, "line {l}: {}", self.message),
            None => f.write_str(&self.message),
        }
    }
}

fn parse_gold(s: &str, line: usize) -> Result<GoldLabel> {
    match s {
        "-" => Ok(None),
        "entailment" => Ok(Some(Label::Entailment)),
        "neutral" => Ok(Some(Label::Neutral)),
        "contradiction" => Ok(Some(Label::Contradiction)),
        other => Err(VeError::Schema {
            line,
            msg: format!("unknown gold_label {other:?}"),
        }),
    }
}

/// Parses one JSON line of the SNLI distribution.
pub fn parse_snli_line(text: &str, line: usize) -> Result<SnliRecord> {
    let v: Value = serde_json::from_str(text).map_err(|e| VeError::Parse {
        line,
        msg: e.to_string(),
    })?;
    let field = |name: &str| -> Result<String> {
        match v.get(name) {
            Some(Value::String(s)) => Ok(s.clone()),
            Some(Value::Number(n)) => Ok(n.to_string()),
            Some(_) => Err(VeError::Schema {
                line,
                msg: format!("field {name:?} is not a string"),
            }),
            None => Err(VeError::Schema {
                line,
                msg: format!("missing field {name:?}"),
            }),
        }
    };
    let caption_id = field("captionID")?;
    if caption_id.is_empty() {
        return Err(VeError::Schema {
            line,
            msg: "empty captionID".into(),
        });
    }
    Ok(SnliRecord {
        gold_label: parse_gold(&field("gold_label")?, line)?,
        premise: field("sentence1")?,
        hypothesis: field("sentence2")?,
        caption_id,
        pair_id: field("pairID")?,
        line,
    })
}

/// Streams records in file order. Blank lines are skipped.
pub fn parse_snli<R: BufRead>(reader: R) -> impl Iterator<Item = Result<SnliRecord>> {
    reader.lines().enumerate().filter_map(|(i, line)| {
        let line_no = i + 1;
        match line {
            Err(e) => Some(Err(e.into())),
            Ok(text) if text.trim().is_empty() => None,
            Ok(text) => Some(parse_snli_line(&text, line_no)),
        }
    })
}

/// Whether a bad line aborts reading or is reported and skipped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnError {
    #[default]
    Abort,
    Continue,
}

/// Reads every record; with [`OnError::Continue`], malformed lines become
/// diagnostics. I/O errors always abort.
pub fn read_snli<R: BufRead>(reader: R, on_error: OnError) -> Result<(Vec<SnliRecord>, Vec<Diagnostic>)> {
    let mut records = Vec::new();
    let mut diags = Vec::new();
    for item in parse_snli(reader) {
        match item {
            Ok(r) => records.push(r),
            Err(e @ VeError::Io(_)) => return Err(e),
            Err(e) if on_error == OnError::Continue => {
                let line = match &e {
                    VeError::Parse { line, .. } | VeError::Schema { line, .. } => Some(*line),
                    _ => None,
                };
                diags.push(Diagnostic {
                    line,
                    message: e.to_string(),
                });
            }
            Err(e) => return Err(e),
        }
    }
    Ok((records, diags))
}

/// Flickr30k image id of an SNLI caption id (`"<image>.jpg#<n>"`). Ids
/// without `#` are taken whole and flagged with a warning.
pub fn derive_image_id(caption_id: &str) -> (String, Option<String>) {
    match caption_id.split_once('#') {
        Some((image, _)) => (image.to_string(), None),
        None => (
            caption_id.to_string(),
            Some(format!(
                "caption id {caption_id:?} has no '#' index; using it as the image id"
            )),
        ),
    }
}
