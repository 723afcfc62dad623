//! Confidence-filtered pseudo labels and GT + PL dataset merging.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};
use serde_json::Map;
use thiserror::Error;

use crate::coco::{Annotation, Category, Dataset, Prediction, Provenance, StomataClass};
use crate::maskgeom::GeomError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PseudoError {
    #[error("no threshold for category {0:?}")]
    MissingThreshold(String),
    #[error("threshold {value} for {name:?} is outside [0, 1]")]
    ThresholdOutOfRange { name: String, value: f64 },
    #[error("prediction {index} references unknown category {category_id}")]
    UnknownCategory { index: usize, category_id: u64 },
    #[error("prediction {index} references missing image {image_id}")]
    DanglingReference { index: usize, image_id: u64 },
    #[error("patch set already holds {0} annotations")]
    AnnotatedPatches(usize),
    #[error("prediction {index} has an empty mask")]
    EmptyMask { index: usize },
    #[error("prediction {index}: {source}")]
    Geometry { index: usize, source: GeomError },
    #[error("category tables differ: human {human:?}, pseudo {pseudo:?}")]
    CategoryMismatch { human: Vec<String>, pseudo: Vec<String> },
    #[error("id space overflow while offsetting {0} ids")]
    IdOverflow(&'static str),
}

pub type Result<T> = std::result::Result<T, PseudoError>;

/// Minimum accepted confidence per category name.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, f64>", into = "BTreeMap<String, f64>")]
pub struct ThresholdPolicy {
    thresholds: BTreeMap<String, f64>,
}

impl Default for ThresholdPolicy {
    fn default() -> Self {
        Self {
            thresholds: BTreeMap::from([
                (StomataClass::Pore.name().to_string(), 0.5),
                (StomataClass::GuardCell.name().to_string(), 0.7),
                (StomataClass::Complex.name().to_string(), 0.7),
            ]),
        }
    }
}

impl TryFrom<BTreeMap<String, f64>> for ThresholdPolicy {
    type Error = PseudoError;

    fn try_from(thresholds: BTreeMap<String, f64>) -> Result<Self> {
        for (name, &value) in &thresholds {
            if !(0.0..=1.0).contains(&value) {
                return Err(PseudoError::ThresholdOutOfRange {
                    name: name.clone(),
                    value,
                });
            }
        }
        Ok(Self { thresholds })
    }
}

impl From<ThresholdPolicy> for BTreeMap<String, f64> {
    fn from(p: ThresholdPolicy) -> Self {
        p.thresholds
    }
}

impl ThresholdPolicy {
    pub fn new(thresholds: BTreeMap<String, f64>) -> Result<Self> {
        Self::try_from(thresholds)
    }

    /// Exact name first, then the canonical stomatal class spelling.
    pub fn threshold(&self, name: &str) -> Option<f64> {
        self.thresholds.get(name).copied().or_else(|| {
            let class = StomataClass::from_name(name)?;
            self.thresholds
                .iter()
                .find(|(k, _)| StomataClass::from_name(k) == Some(class))
                .map(|(_, &v)| v)
        })
    }

    pub fn set(&mut self, name: impl Into<String>, value: f64) -> Result<()> {
        let name = name.into();
        if !(0.0..=1.0).contains(&value) {
            return Err(PseudoError::ThresholdOutOfRange { name, value });
        }
        self.thresholds.insert(name, value);
        Ok(())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, f64)> {
        self.thresholds.iter().map(|(k, &v)| (k.as_str(), v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassCounts {
    pub kept: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FilterOutcome {
    pub kept: Vec<Prediction>,
    pub dropped: Vec<Prediction>,
    /// Per category name.
    pub counts: BTreeMap<String, ClassCounts>,
}

/// Keeps a prediction iff `score >= threshold(category)`. Both halves of the
/// partition preserve input order.
pub fn filter_predictions(
    preds: &[Prediction],
    policy: &ThresholdPolicy,
    categories: &[Category],
) -> Result<FilterOutcome> {
    let names: HashMap<u64, &str> = categories.iter().map(|c| (c.id, c.name.as_str())).collect();
    let mut out = FilterOutcome::default();
    for (index, p) in preds.iter().enumerate() {
        let name = *names.get(&p.category_id).ok_or(PseudoError::UnknownCategory {
            index,
            category_id: p.category_id,
        })?;
        let threshold = policy
            .threshold(name)
            .ok_or_else(|| PseudoError::MissingThreshold(name.to_string()))?;
        let counts = out.counts.entry(name.to_string()).or_default();
        if p.score >= threshold {
            counts.kept += 1;
            out.kept.push(p.clone());
        } else {
            counts.dropped += 1;
            out.dropped.push(p.clone());
        }
    }
    Ok(out)
}

/// One pseudo annotation per kept prediction (ids from 1, input order);
/// every patch image is retained whether or not it received a label.
pub fn build_pseudo_dataset(patches: &Dataset, kept: &[Prediction]) -> Result<Dataset> {
    if !patches.annotations.is_empty() {
        return Err(PseudoError::AnnotatedPatches(patches.annotations.len()));
    }
    let images = patches.image_index();
    let cats = patches.category_index();
    let mut annotations = Vec::with_capacity(kept.len());
    for (index, p) in kept.iter().enumerate() {
        if !images.contains_key(&p.image_id) {
            return Err(PseudoError::DanglingReference {
                index,
                image_id: p.image_id,
            });
        }
        if !cats.contains_key(&p.category_id) {
            return Err(PseudoError::UnknownCategory {
                index,
                category_id: p.category_id,
            });
        }
        let geom = |source| PseudoError::Geometry { index, source };
        let area = p.segmentation.area().map_err(geom)?;
        let bbox = p.segmentation.extent().map_err(geom)?;
        let bbox = match bbox {
            Some(b) if area > 0.0 => b,
            _ => return Err(PseudoError::EmptyMask { index }),
        };
        annotations.push(Annotation {
            id: index as u64 + 1,
            image_id: p.image_id,
            category_id: p.category_id,
            segmentation: p.segmentation.clone(),
            bbox,
            area,
            iscrowd: false,
            provenance: Provenance::Pseudo,
            extra: Map::new(),
        });
    }
    Ok(Dataset {
        images: patches.images.clone(),
        annotations,
        categories: patches.categories.clone(),
        extra: patches.extra.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SourceCounts {
    pub human: usize,
    pub pseudo: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MergeReport {
    pub human_images: usize,
    pub pseudo_images: usize,
    pub human_annotations: usize,
    pub pseudo_annotations: usize,
    /// Added to every pseudo image id.
    pub image_id_offset: i64,
    /// Added to every pseudo annotation id.
    pub annotation_id_offset: i64,
    /// Annotation counts per category name.
    pub per_class: BTreeMap<String, SourceCounts>,
    /// Kept/dropped prediction counts from the filtering stage, when known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub filter: Option<BTreeMap<String, ClassCounts>>,
}

impl MergeReport {
    pub fn total_images(&self) -> usize {
        self.human_images + self.pseudo_images
    }
}

/// Offset that lands the smallest pseudo id on `max(human) + 1`.
fn id_offset(human: impl Iterator<Item = u64>, pseudo: impl Iterator<Item = u64>) -> Option<i64> {
    let (Some(max_h), Some(min_p)) = (human.max(), pseudo.min()) else {
        return Some(0);
    };
    let target = i128::from(max_h) + 1;
    i64::try_from(target - i128::from(min_p)).ok()
}

fn shift(id: u64, offset: i64, what: &'static str) -> Result<u64> {
    u64::try_from(i128::from(id) + i128::from(offset)).map_err(|_| PseudoError::IdOverflow(what))
}

fn name_table(d: &Dataset) -> Vec<String> {
    d.categories.iter().map(|c| c.name.clone()).collect()
}

/// Appends the pseudo set to the human set. Pseudo ids move by a constant
/// offset per id space; pseudo category ids are mapped onto the human table
/// by name.
pub fn merge_datasets(human: &Dataset, pseudo: &Dataset) -> Result<(Dataset, MergeReport)> {
    let human_names: BTreeSet<&str> = human.categories.iter().map(|c| c.name.as_str()).collect();
    let pseudo_names: BTreeSet<&str> = pseudo.categories.iter().map(|c| c.name.as_str()).collect();
    if human_names != pseudo_names
        || human_names.len() != human.categories.len()
        || pseudo_names.len() != pseudo.categories.len()
    {
        return Err(PseudoError::CategoryMismatch {
            human: name_table(human),
            pseudo: name_table(pseudo),
        });
    }
    let by_name: HashMap<&str, u64> = human.categories.iter().map(|c| (c.name.as_str(), c.id)).collect();
    let cat_map: HashMap<u64, u64> = pseudo
        .categories
        .iter()
        .map(|c| (c.id, by_name[c.name.as_str()]))
        .collect();
    let cat_names: HashMap<u64, &str> = human.categories.iter().map(|c| (c.id, c.name.as_str())).collect();

    let image_offset = id_offset(
        human.images.iter().map(|i| i.id),
        pseudo.images.iter().map(|i| i.id),
    )
    .ok_or(PseudoError::IdOverflow("image"))?;
    let ann_offset = id_offset(
        human.annotations.iter().map(|a| a.id),
        pseudo.annotations.iter().map(|a| a.id),
    )
    .ok_or(PseudoError::IdOverflow("annotation"))?;

    let mut merged = human.clone();
    merged.images.reserve(pseudo.images.len());
    for im in &pseudo.images {
        let mut im = im.clone();
        im.id = shift(im.id, image_offset, "image")?;
        merged.images.push(im);
    }
    let mut per_class: BTreeMap<String, SourceCounts> = human_names
        .iter()
        .map(|n| (n.to_string(), SourceCounts::default()))
        .collect();
    for a in &human.annotations {
        if let Some(name) = cat_names.get(&a.category_id) {
            per_class.entry(name.to_string()).or_default().human += 1;
        }
    }
    merged.annotations.reserve(pseudo.annotations.len());
    for a in &pseudo.annotations {
        let mut a = a.clone();
        a.id = shift(a.id, ann_offset, "annotation")?;
        a.image_id = shift(a.image_id, image_offset, "image")?;
        if let Some(&cid) = cat_map.get(&a.category_id) {
            a.category_id = cid;
            per_class.entry(cat_names[&cid].to_string()).or_default().pseudo += 1;
        }
        merged.annotations.push(a);
    }
    let report = MergeReport {
        human_images: human.images.len(),
        pseudo_images: pseudo.images.len(),
        human_annotations: human.annotations.len(),
        pseudo_annotations: pseudo.annotations.len(),
        image_id_offset: image_offset,
        annotation_id_offset: ann_offset,
        per_class,
        filter: None,
    };
    Ok((merged, report))
}
