//! Pixel-level mIoU / mAcc over four semantic classes and COCO-style mask
//! AP / AP50 over the three stomatal classes.
//!
//! Semantic maps are painted from instance geometry, outermost class first
//! (complex, guard cell, pore) so nested inner structures win.
//!
//! Instance AP follows the COCO protocol without area ranges or detection
//! caps: per class and IoU threshold, predictions are ranked by score and
//! greedily matched to the unmatched ground truth of highest IoU on the same
//! image; precision is made monotone from the right and sampled at the 101
//! recall points 0.00..=1.00.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::coco::{Dataset, ImageRecord, Prediction, StomataClass};
use crate::maskgeom::{segmentation_iou, GeomError, Segmentation};

/// Background plus the three stomatal classes.
pub const SEMANTIC_CLASSES: usize = 4;
pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("label map is {0}x{1}, expected {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("label {0} outside 0..{1}")]
    LabelOutOfRange(u8, usize),
    #[error("{record} references missing {target}")]
    DanglingReference { record: String, target: String },
    #[error("category {0} is not a stomatal class")]
    UnknownClass(u64),
    #[error("image {image}: {source}")]
    Geometry { image: u64, source: GeomError },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn iou_thresholds() -> Vec<f64> {
    (0..10).map(|k| f64::from(50 + 5 * k) / 100.0).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SemanticLabelMap {
    height: u32,
    width: u32,
    labels: Vec<u8>,
}

impl SemanticLabelMap {
    pub fn background(height: u32, width: u32) -> Self {
        Self {
            height,
            width,
            labels: vec![0; height as usize * width as usize],
        }
    }

    pub fn from_labels(height: u32, width: u32, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != height as usize * width as usize {
            return Err(EvalError::DimensionMismatch(height, width, labels.len() as u32, 1));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= SEMANTIC_CLASSES) {
            return Err(EvalError::LabelOutOfRange(bad, SEMANTIC_CLASSES));
        }
        Ok(Self { height, width, labels })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn get(&self, row: u32, col: u32) -> u8 {
        self.labels[row as usize * self.width as usize + col as usize]
    }

    pub fn class_counts(&self) -> [u64; SEMANTIC_CLASSES] {
        let mut out = [0u64; SEMANTIC_CLASSES];
        for &l in &self.labels {
            out[l as usize] += 1;
        }
        out
    }
}

/// Paints instances into an `h x w` map; later classes in
/// complex → guard cell → pore order overwrite earlier ones.
pub fn build_semantic_map<'a>(
    instances: impl IntoIterator<Item = (StomataClass, &'a Segmentation)>,
    h: u32,
    w: u32,
) -> std::result::Result<SemanticLabelMap, GeomError> {
    let mut items: Vec<(StomataClass, &Segmentation)> = instances.into_iter().collect();
    items.sort_by_key(|(c, _)| *c);
    let mut map = SemanticLabelMap::background(h, w);
    for (class, seg) in items {
        if let Segmentation::Rle(r) = seg {
            if r.height() != h || r.width() != w {
                return Err(GeomError::DimensionMismatch(r.height(), r.width(), h, w));
            }
        }
        let Some(window) = seg.extent()?.and_then(|b| b.pixel_window(w, h)) else {
            continue;
        };
        let mask = seg.mask_in(&window);
        for row in 0..window.height() {
            for col in 0..window.width() {
                if mask.get(row, col) {
                    let idx = (window.y0 + row) as usize * w as usize + (window.x0 + col) as usize;
                    map.labels[idx] = class.label();
                }
            }
        }
    }
    Ok(map)
}

/// `counts[g][p]`: pixels with ground truth `g` predicted as `p`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Self {
        let classes = rows.len();
        assert!(rows.iter().all(|r| r.len() == classes), "confusion matrix must be square");
        Self {
            classes,
            counts: rows.concat(),
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, gt: usize, pred: usize) -> u64 {
        self.counts[gt * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn true_positives(&self, c: usize) -> u64 {
        self.get(c, c)
    }

    pub fn false_negatives(&self, c: usize) -> u64 {
        (0..self.classes).map(|p| self.get(c, p)).sum::<u64>() - self.get(c, c)
    }

    pub fn false_positives(&self, c: usize) -> u64 {
        (0..self.classes).map(|g| self.get(g, c)).sum::<u64>() - self.get(c, c)
    }

    pub fn accumulate(&mut self, gt: &SemanticLabelMap, pred: &SemanticLabelMap) -> Result<()> {
        if gt.height != pred.height || gt.width != pred.width {
            return Err(EvalError::DimensionMismatch(pred.height, pred.width, gt.height, gt.width));
        }
        for (&g, &p) in gt.labels.iter().zip(&pred.labels) {
            let (g, p) = (g as usize, p as usize);
            if g >= self.classes || p >= self.classes {
                return Err(EvalError::LabelOutOfRange(g.max(p) as u8, self.classes));
            }
            self.counts[g * self.classes + p] += 1;
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        assert_eq!(self.classes, other.classes);
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
    }
}

pub fn accumulate_confusion(
    gt: &SemanticLabelMap,
    pred: &SemanticLabelMap,
    mut acc: ConfusionMatrix,
) -> Result<ConfusionMatrix> {
    acc.accumulate(gt, pred)?;
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSemantic {
    pub class: usize,
    /// `None` when the class never occurs in either map.
    pub iou: Option<f64>,
    /// `None` when the class has no ground-truth pixels.
    pub acc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SemanticScores {
    pub per_class: Vec<ClassSemantic>,
    pub miou: f64,
    pub macc: f64,
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Per-class IoU and accuracy in percent. Classes absent from both maps are
/// left out of both means; accuracy also skips classes without ground truth.
pub fn miou_macc(cm: &ConfusionMatrix) -> SemanticScores {
    let per_class: Vec<ClassSemantic> = (0..cm.classes())
        .map(|c| {
            let tp = cm.true_positives(c);
            let fp = cm.false_positives(c);
            let fn_ = cm.false_negatives(c);
            ClassSemantic {
                class: c,
                iou: pct(tp, tp + fp + fn_),
                acc: pct(tp, tp + fn_),
            }
        })
        .collect();
    SemanticScores {
        miou: mean(per_class.iter().filter_map(|c| c.iou)).unwrap_or(0.0),
        macc: mean(per_class.iter().filter_map(|c| c.acc)).unwrap_or(0.0),
        per_class,
    }
}

/// Per-image instance lists keyed by image id, ready for painting.
pub type ClassInstances<'a> = HashMap<u64, Vec<(StomataClass, &'a Segmentation)>>;

fn class_table(d: &Dataset) -> HashMap<u64, Option<StomataClass>> {
    d.class_of()
}

pub fn dataset_instances(d: &Dataset) -> Result<ClassInstances<'_>> {
    let classes = class_table(d);
    let mut out: ClassInstances = HashMap::new();
    for a in &d.annotations {
        let class = classes
            .get(&a.category_id)
            .copied()
            .flatten()
            .ok_or(EvalError::UnknownClass(a.category_id))?;
        out.entry(a.image_id).or_default().push((class, &a.segmentation));
    }
    Ok(out)
}

/// Predictions at or above `min_score`, classed through `gt`'s category table.
pub fn prediction_instances<'a>(
    gt: &Dataset,
    preds: &'a [Prediction],
    min_score: f64,
) -> Result<ClassInstances<'a>> {
    let classes = class_table(gt);
    let images = gt.image_index();
    let mut out: ClassInstances = HashMap::new();
    for (i, p) in preds.iter().enumerate() {
        if !images.contains_key(&p.image_id) {
            return Err(EvalError::DanglingReference {
                record: format!("prediction {i}"),
                target: format!("image {}", p.image_id),
            });
        }
        let class = classes
            .get(&p.category_id)
            .copied()
            .flatten()
            .ok_or(EvalError::UnknownClass(p.category_id))?;
        if p.score >= min_score {
            out.entry(p.image_id).or_default().push((class, &p.segmentation));
        }
    }
    Ok(out)
}

/// Confusion over every image of `gt`; images missing from `pred` count as
/// all-background predictions.
pub fn evaluate_semantic(
    gt: &Dataset,
    gt_instances: &ClassInstances<'_>,
    pred_instances: &ClassInstances<'_>,
) -> Result<ConfusionMatrix> {
    let mut images: Vec<&ImageRecord> = gt.images.iter().collect();
    images.sort_by_key(|im| im.id);
    let partials = images
        .par_iter()
        .map(|im| {
            let geom = |source| EvalError::Geometry { image: im.id, source };
            let empty = Vec::new();
            let g = gt_instances.get(&im.id).unwrap_or(&empty);
            let p = pred_instances.get(&im.id).unwrap_or(&empty);
            let gmap = build_semantic_map(g.iter().copied(), im.height, im.width).map_err(geom)?;
            let pmap = build_semantic_map(p.iter().copied(), im.height, im.width).map_err(geom)?;
            accumulate_confusion(&gmap, &pmap, ConfusionMatrix::new(SEMANTIC_CLASSES))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut total = ConfusionMatrix::new(SEMANTIC_CLASSES);
    for p in &partials {
        total.merge(p);
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassAp {
    pub category_id: u64,
    pub name: String,
    pub gt_count: usize,
    pub pred_count: usize,
    /// Mean over the IoU thresholds; `None` without ground truth.
    pub ap: Option<f64>,
    pub ap50: Option<f64>,
    pub ap_per_threshold: Vec<f64>,
    /// Interpolated precision at each recall point, one row per threshold.
    pub precision: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApResult {
    pub iou_thresholds: Vec<f64>,
    pub classes: Vec<ClassAp>,
    /// Mean AP over classes with at least one ground-truth instance.
    pub map: Option<f64>,
    pub map50: Option<f64>,
}

impl ApResult {
    pub fn class(&self, name: &str) -> Option<&ClassAp> {
        self.classes.iter().find(|c| c.name == name)
    }
}

/// Interpolated precision at the 101 recall points from a ranked list of
/// match flags.
pub fn interpolated_precision(tp_flags: &[bool], n_gt: usize) -> Vec<f64> {
    let mut precision = Vec::with_capacity(tp_flags.len());
    let mut tp_cum = Vec::with_capacity(tp_flags.len());
    let (mut tp, mut fp) = (0u64, 0u64);
    for &hit in tp_flags {
        if hit {
            tp += 1;
        } else {
            fp += 1;
        }
        tp_cum.push(tp);
        precision.push(tp as f64 / (tp + fp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let n = n_gt as u64;
    let mut out = Vec::with_capacity(RECALL_POINTS);
    let mut k = 0usize;
    for r in 0..RECALL_POINTS as u64 {
        // first rank whose recall tp/n reaches r/100
        while k < tp_cum.len() && tp_cum[k] * 100 < r * n {
            k += 1;
        }
        out.push(if k < precision.len() { precision[k] } else { 0.0 });
    }
    out
}

struct Cell<'a> {
    image: &'a ImageRecord,
    gts: Vec<(u64, &'a Segmentation)>,
    /// Prediction indices in rank order.
    preds: Vec<usize>,
}

/// Rank-ordered match flags for one cell at one threshold.
fn match_cell(ious: &[Vec<f64>], threshold: f64) -> Vec<bool> {
    let n_gt = ious.first().map_or(0, Vec::len);
    let mut taken = vec![false; n_gt];
    ious.iter()
        .map(|row| {
            let mut best: Option<(usize, f64)> = None;
            for (g, &iou) in row.iter().enumerate() {
                if taken[g] || iou < threshold {
                    continue;
                }
                if best.map_or(true, |(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            match best {
                Some((g, _)) => {
                    taken[g] = true;
                    true
                }
                None => false,
            }
        })
        .collect()
}

pub fn evaluate_instances(gt: &Dataset, preds: &[Prediction]) -> Result<ApResult> {
    let images = gt.image_index();
    let cats = gt.category_index();
    for (i, p) in preds.iter().enumerate() {
        if !images.contains_key(&p.image_id) {
            return Err(EvalError::DanglingReference {
                record: format!("prediction {i}"),
                target: format!("image {}", p.image_id),
            });
        }
        if !cats.contains_key(&p.category_id) {
            return Err(EvalError::DanglingReference {
                record: format!("prediction {i}"),
                target: format!("category {}", p.category_id),
            });
        }
    }
    let thresholds = iou_thresholds();

    // rank order: score descending, ties by input position
    let mut ranked: Vec<usize> = (0..preds.len()).collect();
    ranked.sort_by(|&a, &b| preds[b].score.total_cmp(&preds[a].score).then(a.cmp(&b)));
    let mut rank_of = vec![0usize; preds.len()];
    for (r, &i) in ranked.iter().enumerate() {
        rank_of[i] = r;
    }

    let mut cells: BTreeMap<(u64, u64), Cell> = BTreeMap::new();
    for a in &gt.annotations {
        cells
            .entry((a.category_id, a.image_id))
            .or_insert_with(|| Cell {
                image: images[&a.image_id],
                gts: Vec::new(),
                preds: Vec::new(),
            })
            .gts
            .push((a.id, &a.segmentation));
    }
    for &i in &ranked {
        let p = &preds[i];
        cells
            .entry((p.category_id, p.image_id))
            .or_insert_with(|| Cell {
                image: images[&p.image_id],
                gts: Vec::new(),
                preds: Vec::new(),
            })
            .preds
            .push(i);
    }
    for cell in cells.values_mut() {
        cell.gts.sort_by_key(|(id, _)| *id);
    }

    // per cell: match flags for every threshold, keyed by prediction index
    let keys: Vec<(u64, u64)> = cells.keys().copied().collect();
    let matched = keys
        .par_iter()
        .map(|key| {
            let cell = &cells[key];
            let (h, w) = (cell.image.height, cell.image.width);
            let ious = cell
                .preds
                .iter()
                .map(|&i| {
                    cell.gts
                        .iter()
                        .map(|(_, g)| segmentation_iou(&preds[i].segmentation, g, h, w))
                        .collect::<std::result::Result<Vec<f64>, GeomError>>()
                })
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|source| EvalError::Geometry {
                    image: cell.image.id,
                    source,
                })?;
            let flags: Vec<Vec<bool>> = thresholds.iter().map(|&t| match_cell(&ious, t)).collect();
            Ok((*key, flags))
        })
        .collect::<Result<Vec<_>>>()?;
    let matched: HashMap<(u64, u64), Vec<Vec<bool>>> = matched.into_iter().collect();

    let mut categories: Vec<_> = gt.categories.iter().collect();
    categories.sort_by_key(|c| c.id);
    let mut classes = Vec::with_capacity(categories.len());
    for cat in categories {
        let class_cells: Vec<&(u64, u64)> = keys.iter().filter(|k| k.0 == cat.id).collect();
        let gt_count: usize = class_cells.iter().map(|k| cells[*k].gts.len()).sum();
        // (rank, per-threshold flags) for every prediction of this class
        let mut entries: Vec<(usize, Vec<bool>)> = Vec::new();
        for key in &class_cells {
            let cell = &cells[*key];
            let flags = &matched[*key];
            for (j, &i) in cell.preds.iter().enumerate() {
                entries.push((rank_of[i], flags.iter().map(|f| f[j]).collect()));
            }
        }
        entries.sort_by_key(|(r, _)| *r);
        let pred_count = entries.len();
        let (ap, ap50, per_t, precision) = if gt_count == 0 {
            (None, None, Vec::new(), Vec::new())
        } else {
            let precision: Vec<Vec<f64>> = (0..thresholds.len())
                .map(|t| {
                    let flags: Vec<bool> = entries.iter().map(|(_, f)| f[t]).collect();
                    interpolated_precision(&flags, gt_count)
                })
                .collect();
            let per_t: Vec<f64> = precision
                .iter()
                .map(|p| p.iter().sum::<f64>() / RECALL_POINTS as f64)
                .collect();
            let ap = per_t.iter().sum::<f64>() / per_t.len() as f64;
            (Some(ap), Some(per_t[0]), per_t, precision)
        };
        classes.push(ClassAp {
            category_id: cat.id,
            name: cat.name.clone(),
            gt_count,
            pred_count,
            ap,
            ap50,
            ap_per_threshold: per_t,
            precision,
        });
    }
    Ok(ApResult {
        map: mean(classes.iter().filter_map(|c| c.ap)),
        map50: mean(classes.iter().filter_map(|c| c.ap50)),
        iou_thresholds: thresholds,
        classes,
    })
}

/// One table row: a label and two metric columns (percent).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricRow {
    pub label: String,
    pub values: [Option<f64>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricTable {
    pub metrics: [&'static str; 2],
    pub rows: Vec<MetricRow>,
}

/// Columns appear as Overall, Pore area, Guard cell, Complex area.
const TABLE_ORDER: [StomataClass; 3] = [StomataClass::Pore, StomataClass::GuardCell, StomataClass::Complex];

impl MetricTable {
    pub fn instance(r: &ApResult) -> Self {
        let scale = |v: Option<f64>| v.map(|x| 100.0 * x);
        let mut rows = vec![MetricRow {
            label: "Overall".into(),
            values: [scale(r.map), scale(r.map50)],
        }];
        for class in TABLE_ORDER {
            let found = r
                .classes
                .iter()
                .find(|c| StomataClass::from_name(&c.name) == Some(class));
            rows.push(MetricRow {
                label: class.short_label().into(),
                values: [
                    found.and_then(|c| scale(c.ap)),
                    found.and_then(|c| scale(c.ap50)),
                ],
            });
        }
        Self {
            metrics: ["AP", "AP50"],
            rows,
        }
    }

    pub fn semantic(s: &SemanticScores) -> Self {
        let mut rows = vec![MetricRow {
            label: "Overall".into(),
            values: [Some(s.miou), Some(s.macc)],
        }];
        for class in TABLE_ORDER {
            let c = s.per_class.get(class.label() as usize);
            rows.push(MetricRow {
                label: class.short_label().into(),
                values: [c.and_then(|c| c.iou), c.and_then(|c| c.acc)],
            });
        }
        Self {
            metrics: ["mIoU", "mAcc"],
            rows,
        }
    }

    /// Aligned text: one header line naming the groups, one naming the
    /// metrics, then a single line of values.
    pub fn to_text(&self) -> String {
        const CELL: usize = 8;
        let group = 2 * CELL + 1;
        let mut head = String::new();
        let mut sub = String::new();
        let mut vals = String::new();
        for (i, row) in self.rows.iter().enumerate() {
            let sep = if i == 0 { "" } else { " | " };
            let _ = write!(head, "{sep}{:^group$}", row.label);
            let _ = write!(sub, "{sep}{:>CELL$} {:>CELL$}", self.metrics[0], self.metrics[1]);
            let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.2}"));
            let _ = write!(vals, "{sep}{:>CELL$} {:>CELL$}", fmt(row.values[0]), fmt(row.values[1]));
        }
        format!("{}\n{}\n{}\n", head.trim_end(), sub.trim_end(), vals.trim_end())
    }
}
