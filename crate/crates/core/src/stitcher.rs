//! Patch-to-frame reprojection and duplicate suppression across overlaps.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco::Prediction;
use crate::maskgeom::{rle_decode, segmentation_iou, GeomError, RleMask, Segmentation};
use crate::tiler::PatchRecord;

pub const DEFAULT_DEDUP_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StitchError {
    #[error("prediction on image {pred_image} does not belong to patch {patch_image}")]
    PatchMismatch { pred_image: u64, patch_image: u64 },
    #[error("image {0} is not in the patch manifest")]
    UnknownPatch(u64),
    #[error("geometry from patch {0} falls outside its frame")]
    OutOfBounds(u64),
    #[error("IoU threshold {0} must be in (0, 1]")]
    InvalidThreshold(f64),
    #[error(transparent)]
    Geometry(#[from] GeomError),
}

pub type Result<T> = std::result::Result<T, StitchError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FramePrediction {
    pub source_image_id: u64,
    pub category_id: u64,
    pub segmentation: Segmentation,
    pub score: f64,
    pub frame_w: u32,
    pub frame_h: u32,
    /// Patch image ids the geometry came from.
    pub contributing_patches: Vec<u64>,
}

impl FramePrediction {
    pub fn to_prediction(&self) -> Prediction {
        Prediction {
            image_id: self.source_image_id,
            category_id: self.category_id,
            segmentation: self.segmentation.clone(),
            score: self.score,
            bbox: None,
        }
    }
}

/// Run-length writer over column-major pixel order.
struct RunWriter {
    counts: Vec<u64>,
    current: bool,
    run: u64,
}

impl RunWriter {
    fn new() -> Self {
        Self {
            counts: Vec::new(),
            current: false,
            run: 0,
        }
    }

    fn push(&mut self, bit: bool, n: u64) {
        if n == 0 {
            return;
        }
        if bit != self.current {
            self.counts.push(self.run);
            self.current = bit;
            self.run = 0;
        }
        self.run += n;
    }

    fn finish(mut self) -> Vec<u64> {
        self.counts.push(self.run);
        self.counts
    }
}

/// Places a patch-sized RLE at `(x0, y0)` inside an otherwise empty frame.
fn place_rle(m: &RleMask, x0: u32, y0: u32, frame_w: u32, frame_h: u32) -> Result<RleMask> {
    let (ph, pw) = (m.height(), m.width());
    let bits = rle_decode(m);
    let h = u64::from(frame_h);
    let mut out = RunWriter::new();
    out.push(false, u64::from(x0) * h);
    for col in 0..pw {
        out.push(false, u64::from(y0));
        for row in 0..ph {
            out.push(bits.get(row, col), 1);
        }
        out.push(false, h - u64::from(y0) - u64::from(ph));
    }
    out.push(false, u64::from(frame_w - x0 - pw) * h);
    Ok(RleMask::new(frame_h, frame_w, out.finish())?)
}

pub fn reproject_to_frame(pred: &Prediction, patch: &PatchRecord) -> Result<FramePrediction> {
    if pred.image_id != patch.patch_image_id {
        return Err(StitchError::PatchMismatch {
            pred_image: pred.image_id,
            patch_image: patch.patch_image_id,
        });
    }
    let (fw, fh) = (f64::from(patch.frame_w), f64::from(patch.frame_h));
    let segmentation = match &pred.segmentation {
        Segmentation::Polygons(p) => {
            let moved = p.translate(f64::from(patch.x0), f64::from(patch.y0));
            let escapes = moved
                .rings
                .iter()
                .flatten()
                .any(|q| q.x < 0.0 || q.y < 0.0 || q.x > fw || q.y > fh);
            if escapes {
                return Err(StitchError::OutOfBounds(patch.patch_image_id));
            }
            Segmentation::Polygons(moved)
        }
        Segmentation::Rle(m) => {
            if m.height() != patch.patch_h || m.width() != patch.patch_w {
                return Err(GeomError::DimensionMismatch(
                    m.height(),
                    m.width(),
                    patch.patch_h,
                    patch.patch_w,
                )
                .into());
            }
            if patch.x0 + patch.patch_w > patch.frame_w || patch.y0 + patch.patch_h > patch.frame_h {
                return Err(StitchError::OutOfBounds(patch.patch_image_id));
            }
            Segmentation::Rle(place_rle(m, patch.x0, patch.y0, patch.frame_w, patch.frame_h)?)
        }
    };
    Ok(FramePrediction {
        source_image_id: patch.source_image_id,
        category_id: pred.category_id,
        segmentation,
        score: pred.score,
        frame_w: patch.frame_w,
        frame_h: patch.frame_h,
        contributing_patches: vec![patch.patch_image_id],
    })
}

/// Greedy per-category suppression on one frame: in descending score order
/// (ties by input position), a prediction survives iff its mask IoU with
/// every survivor of its category is below `iou_threshold`. Output is in
/// that same order.
pub fn dedup(preds: &[FramePrediction], iou_threshold: f64) -> Result<Vec<FramePrediction>> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(StitchError::InvalidThreshold(iou_threshold));
    }
    let mut order: Vec<usize> = (0..preds.len()).collect();
    order.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let p = &preds[i];
        let mut survives = true;
        for &k in &kept {
            let q = &preds[k];
            if q.category_id != p.category_id {
                continue;
            }
            let iou = segmentation_iou(&p.segmentation, &q.segmentation, p.frame_h, p.frame_w)?;
            if iou >= iou_threshold {
                survives = false;
                break;
            }
        }
        if survives {
            kept.push(i);
        }
    }
    Ok(kept.into_iter().map(|i| preds[i].clone()).collect())
}

/// Reprojects patch predictions through the manifest and deduplicates each
/// frame independently. Frames come out in ascending source id.
pub fn stitch(
    preds: &[Prediction],
    manifest: &[PatchRecord],
    iou_threshold: f64,
) -> Result<Vec<FramePrediction>> {
    let patches: HashMap<u64, &PatchRecord> =
        manifest.iter().map(|p| (p.patch_image_id, p)).collect();
    let mut frames: BTreeMap<u64, Vec<FramePrediction>> = BTreeMap::new();
    for p in preds {
        let rec = patches.get(&p.image_id).ok_or(StitchError::UnknownPatch(p.image_id))?;
        frames
            .entry(rec.source_image_id)
            .or_default()
            .push(reproject_to_frame(p, rec)?);
    }
    let frames: Vec<Vec<FramePrediction>> = frames.into_values().collect();
    let stitched = frames
        .par_iter()
        .map(|f| dedup(f, iou_threshold))
        .collect::<Result<Vec<_>>>()?;
    Ok(stitched.into_iter().flatten().collect())
}
