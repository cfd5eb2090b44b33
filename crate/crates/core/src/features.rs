//! Precomputed image features and the VEF1 container.
//!
//! VEF1 layout, little-endian:
//!
//! ```text
//! "VEF1"                      4 bytes
//! kind                        u8   (0 = grid, 1 = roi)
//! id_len, image_id            u16 + UTF-8 bytes
//! M, feat_dim                 u32, u32
//! grid:  k, d                 u32, u32   (M = d·d, feat_dim = k)
//! roi:   boxes                M × 4 f32  (x1, y1, x2, y2 pixels)
//! payload                     M × feat_dim f32, row-major
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;

use crate::error::{dim_err, Result, VeError};
use crate::numcore::{Bound, Graph, ParamStore, Tensor, Var};
use crate::par::{self, Execution};

pub const MAGIC: &[u8; 4] = b"VEF1";
pub const FILE_EXTENSION: &str = "vef";
pub const DEFAULT_GRID_CHANNELS: usize = 2048;
pub const DEFAULT_GRID_SIDE: usize = 7;
pub const DEFAULT_TOP_ROIS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureKind {
    Grid,
    Roi,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FeatureMeta {
    Grid { channels: usize, side: usize },
    Roi { boxes: Vec<[f32; 4]> },
}

/// Objects of one image: `M × feat_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub image_id: String,
    pub objects: Tensor,
    pub meta: FeatureMeta,
}

impl FeatureSet {
    pub fn grid(image_id: impl Into<String>, objects: Tensor, side: usize) -> Result<Self> {
        let (m, k) = objects.dims2()?;
        if m != side * side {
            return Err(dim_err("FeatureSet::grid", &[m, k], &[side, side]));
        }
        Ok(Self {
            image_id: image_id.into(),
            objects,
            meta: FeatureMeta::Grid { channels: k, side },
        })
    }

    pub fn roi(image_id: impl Into<String>, objects: Tensor, boxes: Vec<[f32; 4]>) -> Result<Self> {
        let (m, k) = objects.dims2()?;
        if boxes.len() != m {
            return Err(dim_err("FeatureSet::roi", &[m, k], &[boxes.len(), 4]));
        }
        validate_boxes(&boxes)?;
        Ok(Self {
            image_id: image_id.into(),
            objects,
            meta: FeatureMeta::Roi { boxes },
        })
    }

    pub fn kind(&self) -> FeatureKind {
        match self.meta {
            FeatureMeta::Grid { .. } => FeatureKind::Grid,
            FeatureMeta::Roi { .. } => FeatureKind::Roi,
        }
    }

    pub fn num_objects(&self) -> usize {
        self.objects.shape()[0]
    }

    pub fn feat_dim(&self) -> usize {
        self.objects.shape()[1]
    }

    /// Fails if an ROI set exceeds `top_n` regions.
    pub fn check_roi_limit(&self, top_n: usize) -> Result<()> {
        if self.kind() == FeatureKind::Roi && self.num_objects() > top_n {
            return Err(VeError::Config(format!(
                "{} has {} ROIs, limit is {top_n}",
                self.image_id,
                self.num_objects()
            )));
        }
        Ok(())
    }
}

fn validate_boxes(boxes: &[[f32; 4]]) -> Result<()> {
    for (i, b) in boxes.iter().enumerate() {
        let ok = b.iter().all(|v| v.is_finite() && *v >= 0.0) && b[0] <= b[2] && b[1] <= b[3];
        if !ok {
            return Err(VeError::Format(format!("ROI box {i} out of bounds: {b:?}")));
        }
    }
    Ok(())
}

pub fn encode_feature_set(fs: &FeatureSet) -> Result<Vec<u8>> {
    let (m, k) = fs.objects.dims2()?;
    let id = fs.image_id.as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| VeError::Format("image id longer than 65535 bytes".into()))?;
    let mut out = Vec::with_capacity(32 + id.len() + m * k * 4);
    out.extend_from_slice(MAGIC);
    out.push(match fs.kind() {
        FeatureKind::Grid => 0,
        FeatureKind::Roi => 1,
    });
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&(m as u32).to_le_bytes());
    out.extend_from_slice(&(k as u32).to_le_bytes());
    match &fs.meta {
        FeatureMeta::Grid { channels, side } => {
            out.extend_from_slice(&(*channels as u32).to_le_bytes());
            out.extend_from_slice(&(*side as u32).to_le_bytes());
        }
        FeatureMeta::Roi { boxes } => {
            for v in boxes.iter().flatten() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    for v in fs.objects.data() {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    Ok(out)
}

/// Little-endian reader that reports truncation with the byte offset.
pub(crate) struct Cursor<'a> {
    buf: &'a [u8],
    pub(crate) pos: usize,
}

impl<'a> Cursor<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    pub(crate) fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(VeError::Corruption {
                offset: self.pos,
                msg: format!(
                    "truncated while reading {what}: need {n} bytes, {} left",
                    self.buf.len() - self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    pub(crate) fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    pub(crate) fn f32s(&mut self, n: usize, what: &str) -> Result<Vec<f32>> {
        let bytes = self.take(
            n.checked_mul(4)
                .ok_or_else(|| VeError::Format(format!("{what} too large")))?,
            what,
        )?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode_feature_set(buf: &[u8]) -> Result<FeatureSet> {
    let mut c = Cursor::new(buf);
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        if &magic[..3] == b"VEF" {
            return Err(VeError::Format(format!(
                "unsupported VEF version {:?}",
                magic[3] as char
            )));
        }
        return Err(VeError::Format(format!(
            "bad magic {:?}",
            String::from_utf8_lossy(magic)
        )));
    }
    let kind = match c.u8("kind")? {
        0 => FeatureKind::Grid,
        1 => FeatureKind::Roi,
        other => return Err(VeError::Format(format!("unknown feature kind {other}"))),
    };
    let id_len = c.u16("image id length")? as usize;
    let image_id = String::from_utf8(c.take(id_len, "image id")?.to_vec())
        .map_err(|_| VeError::Format("image id is not UTF-8".into()))?;
    let m = c.u32("object count")? as usize;
    let k = c.u32("feature dim")? as usize;
    if k == 0 {
        return Err(VeError::Format("feature dim must be positive".into()));
    }
    let meta = match kind {
        FeatureKind::Grid => {
            let channels = c.u32("grid channels")? as usize;
            let side = c.u32("grid side")? as usize;
            if side == 0 || side * side != m || channels != k {
                return Err(VeError::Format(format!(
                    "grid header inconsistent: M={m}, feat_dim={k}, k={channels}, d={side}"
                )));
            }
            FeatureMeta::Grid { channels, side }
        }
        FeatureKind::Roi => {
            let flat = c.f32s(m * 4, "ROI boxes")?;
            let boxes: Vec<[f32; 4]> = flat.chunks_exact(4).map(|b| [b[0], b[1], b[2], b[3]]).collect();
            validate_boxes(&boxes)?;
            FeatureMeta::Roi { boxes }
        }
    };
    let payload = c.f32s(m * k, "feature payload")?;
    if c.pos != buf.len() {
        return Err(VeError::Corruption {
            offset: c.pos,
            msg: format!("{} trailing bytes", buf.len() - c.pos),
        });
    }
    if m == 0 {
        return Err(VeError::Format(format!("{image_id} has no objects")));
    }
    let objects = Tensor::new(vec![m, k], payload.into_iter().map(f64::from).collect())?;
    Ok(FeatureSet {
        image_id,
        objects,
        meta,
    })
}

pub fn write_feature_file(path: &Path, fs: &FeatureSet) -> Result<()> {
    fs::write(path, encode_feature_set(fs)?)?;
    Ok(())
}

pub fn read_feature_file(path: &Path) -> Result<FeatureSet> {
    decode_feature_set(&fs::read(path)?)
}

/// `k × d × d` maps → `(d·d) × k` objects; object `i·d + j` is `maps[:, i, j]`.
pub fn grid_to_objects(maps: &Tensor) -> Result<Tensor> {
    let [k, d, d2] = maps.shape() else {
        return Err(VeError::Contract(format!(
            "expected k×d×d maps, got {:?}",
            maps.shape()
        )));
    };
    let (k, d) = (*k, *d);
    if d != *d2 {
        return Err(dim_err("grid_to_objects", &[k, d, *d2], &[k, d, d]));
    }
    let src = maps.data();
    let mut out = vec![0.0; d * d * k];
    for c in 0..k {
        for cell in 0..d * d {
            out[cell * k + c] = src[c * d * d + cell];
        }
    }
    Tensor::new(vec![d * d, k], out)
}

/// Inverse of [`grid_to_objects`].
pub fn objects_to_grid(objects: &Tensor, side: usize) -> Result<Tensor> {
    let (m, k) = objects.dims2()?;
    if m != side * side {
        return Err(dim_err("objects_to_grid", &[m, k], &[side, side]));
    }
    let src = objects.data();
    let mut out = vec![0.0; m * k];
    for cell in 0..m {
        for c in 0..k {
            out[c * m + cell] = src[cell * k + c];
        }
    }
    Tensor::new(vec![k, side, side], out)
}

/// Adds `{prefix}.weight` (k×out) and `{prefix}.bias` (1×out).
pub fn init_projection<R: Rng + ?Sized>(
    store: &mut ParamStore,
    prefix: &str,
    input: usize,
    output: usize,
    rng: &mut R,
) -> Result<()> {
    store.insert(format!("{prefix}.weight"), Tensor::glorot(input, output, rng), true)?;
    store.insert(format!("{prefix}.bias"), Tensor::zeros(&[1, output]), true)
}

/// Per-row `relu(x·W + b)`.
pub fn project_regions<'p>(g: &mut Graph<'p>, bound: &Bound<'p>, prefix: &str, objects: Var) -> Result<Var> {
    let w = bound.var(&format!("{prefix}.weight"))?;
    let b = bound.var(&format!("{prefix}.bias"))?;
    let pre = g.affine(objects, w, b)?;
    Ok(g.relu(pre))
}

/// Resolves image ids to `<dir>/<image_id>.vef`.
#[derive(Debug, Clone)]
pub struct FeatureStore {
    dir: PathBuf,
}

impl FeatureStore {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, image_id: &str) -> PathBuf {
        self.dir.join(format!("{image_id}.{FILE_EXTENSION}"))
    }

    pub fn load(&self, image_id: &str) -> Result<FeatureSet> {
        let path = self.path_for(image_id);
        if !path.exists() {
            return Err(VeError::Missing(format!("feature file {}", path.display())));
        }
        let fs = read_feature_file(&path)?;
        if fs.image_id != image_id {
            return Err(VeError::Format(format!(
                "{} holds features for {:?}, expected {image_id:?}",
                path.display(),
                fs.image_id
            )));
        }
        Ok(fs)
    }

    /// Loads every distinct id, in parallel when enabled. Fails on the
    /// first missing or invalid file.
    pub fn load_all<'a, I>(&self, ids: I, exec: Execution) -> Result<HashMap<String, FeatureSet>>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut unique: Vec<&str> = ids.into_iter().collect();
        unique.sort_unstable();
        unique.dedup();
        let loaded = par::map(exec, &unique, |id| self.load(id));
        let mut out = HashMap::with_capacity(unique.len());
        for (id, fs) in unique.into_iter().zip(loaded) {
            out.insert(id.to_string(), fs?);
        }
        Ok(out)
    }
}
