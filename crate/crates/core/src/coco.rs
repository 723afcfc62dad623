//! COCO-style dataset and prediction-results model.
//!
//! Parsing is two-phase: the text is read into a JSON tree (malformed text
//! fails here), then each record is decoded with its path tracked so that
//! missing or mistyped fields are reported as `images[3].width` and the like.
//! Structural integrity (unique ids, resolvable references) is enforced at
//! parse time; geometric invariants are reported by [`validate`].
//!
//! Keys this model does not know about are kept in `extra` maps at every
//! level and written back unchanged.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::maskgeom::{BBox, Segmentation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CocoError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("missing field `{0}`")]
    MissingField(String),
    #[error("invalid value at `{path}`: {message}")]
    InvalidField { path: String, message: String },
    #[error("{record} references missing {target}")]
    DanglingReference { record: String, target: String },
    #[error("duplicate {kind} id {id}")]
    DuplicateId { kind: &'static str, id: u64 },
    #[error("prediction {index} has score {score} outside [0, 1]")]
    ScoreOutOfRange { index: usize, score: f64 },
}

pub type Result<T> = std::result::Result<T, CocoError>;

/// The three annotated stomatal components, numbered as semantic classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StomataClass {
    Complex = 1,
    GuardCell = 2,
    Pore = 3,
}

impl StomataClass {
    /// Paint order for semantic maps: outermost first.
    pub const ALL: [StomataClass; 3] = [
        StomataClass::Complex,
        StomataClass::GuardCell,
        StomataClass::Pore,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StomataClass::Complex => "complex area",
            StomataClass::GuardCell => "guard cell area",
            StomataClass::Pore => "pore area",
        }
    }

    /// Column label used in metric tables.
    pub fn short_label(self) -> &'static str {
        match self {
            StomataClass::Complex => "Complex area",
            StomataClass::GuardCell => "Guard cell",
            StomataClass::Pore => "Pore area",
        }
    }

    /// Case- and whitespace-insensitive lookup by category name.
    pub fn from_name(name: &str) -> Option<Self> {
        let norm = name.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase();
        Self::ALL.into_iter().find(|c| c.name() == norm)
    }

    pub fn label(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    #[default]
    Human,
    Pseudo,
}

impl Provenance {
    fn is_human(&self) -> bool {
        *self == Provenance::Human
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ImageRecord {
    pub fn new(id: u64, file_name: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            id,
            file_name: file_name.into(),
            width,
            height,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: u64,
    pub name: String,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Category {
    pub fn new(id: u64, name: impl Into<String>) -> Self {
        Self {
            id,
            name: name.into(),
            extra: Map::new(),
        }
    }

    /// The three stomatal categories with ids 1..=3.
    pub fn stomata_defaults() -> Vec<Category> {
        StomataClass::ALL
            .iter()
            .map(|c| Category::new(c.label() as u64, c.name()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub image_id: u64,
    pub category_id: u64,
    pub segmentation: Segmentation,
    pub bbox: BBox,
    pub area: f64,
    #[serde(default, with = "crowd_flag")]
    pub iscrowd: bool,
    #[serde(default, skip_serializing_if = "Provenance::is_human")]
    pub provenance: Provenance,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

mod crowd_flag {
    use super::*;

    pub fn serialize<S: Serializer>(v: &bool, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(u8::from(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<bool, D::Error> {
        match Value::deserialize(d)? {
            Value::Bool(b) => Ok(b),
            Value::Number(n) if n.as_u64() == Some(0) => Ok(false),
            Value::Number(n) if n.as_u64() == Some(1) => Ok(true),
            other => Err(serde::de::Error::custom(format!(
                "iscrowd must be 0, 1 or a boolean, got {other}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub images: Vec<ImageRecord>,
    pub annotations: Vec<Annotation>,
    pub categories: Vec<Category>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl Dataset {
    pub fn image_index(&self) -> HashMap<u64, &ImageRecord> {
        self.images.iter().map(|im| (im.id, im)).collect()
    }

    pub fn category_index(&self) -> HashMap<u64, &Category> {
        self.categories.iter().map(|c| (c.id, c)).collect()
    }

    /// Annotations grouped by image id, in file order.
    pub fn annotations_by_image(&self) -> HashMap<u64, Vec<&Annotation>> {
        let mut out: HashMap<u64, Vec<&Annotation>> = HashMap::new();
        for a in &self.annotations {
            out.entry(a.image_id).or_default().push(a);
        }
        out
    }

    /// Maps category ids to their stomatal class, `None` for other names.
    pub fn class_of(&self) -> HashMap<u64, Option<StomataClass>> {
        self.categories
            .iter()
            .map(|c| (c.id, StomataClass::from_name(&c.name)))
            .collect()
    }
}

/// One scored instance from an external model's results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub image_id: u64,
    pub category_id: u64,
    pub segmentation: Segmentation,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BBox>,
}

fn decode_record<T: DeserializeOwned>(v: Value, path: &str) -> Result<T> {
    serde_json::from_value(v).map_err(|e| {
        let msg = e.to_string();
        match msg.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            Some(field) => CocoError::MissingField(format!("{path}.{field}")),
            None => CocoError::InvalidField {
                path: path.to_string(),
                message: msg,
            },
        }
    })
}

fn decode_list<T: DeserializeOwned>(root: &mut Map<String, Value>, key: &str) -> Result<Vec<T>> {
    match root.shift_remove(key) {
        None => Err(CocoError::MissingField(key.to_string())),
        Some(Value::Array(items)) => items
            .into_iter()
            .enumerate()
            .map(|(i, v)| decode_record(v, &format!("{key}[{i}]")))
            .collect(),
        Some(_) => Err(CocoError::InvalidField {
            path: key.to_string(),
            message: "expected an array".into(),
        }),
    }
}

fn check_unique<I: IntoIterator<Item = u64>>(kind: &'static str, ids: I) -> Result<HashSet<u64>> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(CocoError::DuplicateId { kind, id });
        }
    }
    Ok(seen)
}

pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let root: Value = serde_json::from_str(text).map_err(|e| CocoError::MalformedJson(e.to_string()))?;
    let Value::Object(mut root) = root else {
        return Err(CocoError::InvalidField {
            path: "$".into(),
            message: "top level must be an object".into(),
        });
    };
    let images: Vec<ImageRecord> = decode_list(&mut root, "images")?;
    let annotations: Vec<Annotation> = decode_list(&mut root, "annotations")?;
    let categories: Vec<Category> = decode_list(&mut root, "categories")?;
    let d = Dataset {
        images,
        annotations,
        categories,
        extra: root,
    };
    check_references(&d)?;
    Ok(d)
}

/// Id uniqueness and reference resolution, the invariants parsing enforces.
pub fn check_references(d: &Dataset) -> Result<()> {
    let image_ids = check_unique("image", d.images.iter().map(|i| i.id))?;
    let cat_ids = check_unique("category", d.categories.iter().map(|c| c.id))?;
    check_unique("annotation", d.annotations.iter().map(|a| a.id))?;
    for a in &d.annotations {
        if !image_ids.contains(&a.image_id) {
            return Err(CocoError::DanglingReference {
                record: format!("annotation {}", a.id),
                target: format!("image {}", a.image_id),
            });
        }
        if !cat_ids.contains(&a.category_id) {
            return Err(CocoError::DanglingReference {
                record: format!("annotation {}", a.id),
                target: format!("category {}", a.category_id),
            });
        }
    }
    Ok(())
}

/// Compact JSON. Never fails for a dataset built from this model.
pub fn serialize_dataset(d: &Dataset) -> String {
    serde_json::to_string(d).expect("dataset serialization is infallible")
}

pub fn parse_predictions(text: &str, context: &Dataset) -> Result<Vec<Prediction>> {
    let root: Value = serde_json::from_str(text).map_err(|e| CocoError::MalformedJson(e.to_string()))?;
    let Value::Array(items) = root else {
        return Err(CocoError::InvalidField {
            path: "$".into(),
            message: "results file must be a JSON array".into(),
        });
    };
    let preds = items
        .into_iter()
        .enumerate()
        .map(|(i, v)| decode_record::<Prediction>(v, &format!("[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    check_predictions(&preds, context)?;
    Ok(preds)
}

pub fn check_predictions(preds: &[Prediction], context: &Dataset) -> Result<()> {
    let images: HashSet<u64> = context.images.iter().map(|i| i.id).collect();
    let cats: HashSet<u64> = context.categories.iter().map(|c| c.id).collect();
    for (index, p) in preds.iter().enumerate() {
        if !(0.0..=1.0).contains(&p.score) {
            return Err(CocoError::ScoreOutOfRange { index, score: p.score });
        }
        if !images.contains(&p.image_id) {
            return Err(CocoError::DanglingReference {
                record: format!("prediction {index}"),
                target: format!("image {}", p.image_id),
            });
        }
        if !cats.contains(&p.category_id) {
            return Err(CocoError::DanglingReference {
                record: format!("prediction {index}"),
                target: format!("category {}", p.category_id),
            });
        }
    }
    Ok(())
}

pub fn serialize_predictions(preds: &[Prediction]) -> String {
    serde_json::to_string(preds).expect("prediction serialization is infallible")
}

/// Allowed distance between each bbox edge and the segmentation extent.
pub const BBOX_TOLERANCE_PX: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Rule {
    DuplicateId,
    DanglingImage,
    DanglingCategory,
    NonPositiveDimension,
    EmptyFileName,
    UnknownCategoryName,
    NonPositiveArea,
    NonPositiveBbox,
    BboxMismatch,
    OutOfBounds,
    DegenerateSegmentation,
    RleSizeMismatch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RecordKind {
    Image,
    Category,
    Annotation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Issue {
    pub rule: Rule,
    pub kind: RecordKind,
    pub id: u64,
    pub detail: String,
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {:?} {}: {}", self.rule, self.kind, self.id, self.detail)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }

    pub fn count(&self, rule: Rule) -> usize {
        self.issues.iter().filter(|i| i.rule == rule).count()
    }

    fn push(&mut self, rule: Rule, kind: RecordKind, id: u64, detail: impl Into<String>) {
        self.issues.push(Issue {
            rule,
            kind,
            id,
            detail: detail.into(),
        });
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ValidateOptions {
    /// Reject category names outside the three stomatal classes.
    pub strict_categories: bool,
}

pub fn validate(d: &Dataset) -> ValidationReport {
    validate_with(d, ValidateOptions::default())
}

pub fn validate_with(d: &Dataset, opts: ValidateOptions) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    for im in &d.images {
        if !seen.insert(im.id) {
            report.push(Rule::DuplicateId, RecordKind::Image, im.id, "repeated image id");
        }
        if im.width == 0 || im.height == 0 {
            report.push(
                Rule::NonPositiveDimension,
                RecordKind::Image,
                im.id,
                format!("size {}x{}", im.width, im.height),
            );
        }
        if im.file_name.is_empty() {
            report.push(Rule::EmptyFileName, RecordKind::Image, im.id, "empty file_name");
        }
    }
    let mut seen = HashSet::new();
    for c in &d.categories {
        if !seen.insert(c.id) {
            report.push(Rule::DuplicateId, RecordKind::Category, c.id, "repeated category id");
        }
        if opts.strict_categories && StomataClass::from_name(&c.name).is_none() {
            report.push(
                Rule::UnknownCategoryName,
                RecordKind::Category,
                c.id,
                format!("unexpected name {:?}", c.name),
            );
        }
    }
    let images = d.image_index();
    let cats = d.category_index();
    let mut seen = HashSet::new();
    for a in &d.annotations {
        let kind = RecordKind::Annotation;
        if !seen.insert(a.id) {
            report.push(Rule::DuplicateId, kind, a.id, "repeated annotation id");
        }
        if !cats.contains_key(&a.category_id) {
            report.push(Rule::DanglingCategory, kind, a.id, format!("category {}", a.category_id));
        }
        if !(a.area > 0.0) {
            report.push(Rule::NonPositiveArea, kind, a.id, format!("area {}", a.area));
        }
        if !(a.bbox.w > 0.0 && a.bbox.h > 0.0) {
            report.push(
                Rule::NonPositiveBbox,
                kind,
                a.id,
                format!("bbox size {}x{}", a.bbox.w, a.bbox.h),
            );
        }
        let Some(image) = images.get(&a.image_id) else {
            report.push(Rule::DanglingImage, kind, a.id, format!("image {}", a.image_id));
            continue;
        };
        check_geometry(a, image, &mut report);
    }
    report
}

fn check_geometry(a: &Annotation, image: &ImageRecord, report: &mut ValidationReport) {
    let kind = RecordKind::Annotation;
    match &a.segmentation {
        Segmentation::Polygons(p) => {
            if let Err(e) = p.check() {
                report.push(Rule::DegenerateSegmentation, kind, a.id, e.to_string());
                return;
            }
            if p.is_empty() {
                report.push(Rule::DegenerateSegmentation, kind, a.id, "no polygons");
                return;
            }
            let (w, h) = (f64::from(image.width), f64::from(image.height));
            let outside = p
                .rings
                .iter()
                .flatten()
                .filter(|q| q.x < 0.0 || q.y < 0.0 || q.x > w || q.y > h)
                .count();
            if outside > 0 {
                report.push(
                    Rule::OutOfBounds,
                    kind,
                    a.id,
                    format!("{outside} vertices outside {}x{}", image.width, image.height),
                );
            }
        }
        Segmentation::Rle(r) => {
            if r.height() != image.height || r.width() != image.width {
                report.push(
                    Rule::RleSizeMismatch,
                    kind,
                    a.id,
                    format!(
                        "RLE {}x{} on image {}x{}",
                        r.height(),
                        r.width(),
                        image.height,
                        image.width
                    ),
                );
                return;
            }
        }
    }
    if let Ok(Some(extent)) = a.segmentation.extent() {
        if !a.bbox.edges_within(&extent, BBOX_TOLERANCE_PX) {
            report.push(
                Rule::BboxMismatch,
                kind,
                a.id,
                format!(
                    "bbox [{}, {}, {}, {}] vs extent [{}, {}, {}, {}]",
                    a.bbox.x, a.bbox.y, a.bbox.w, a.bbox.h, extent.x, extent.y, extent.w, extent.h
                ),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::maskgeom::{Point, PolygonSet};

    const MINIMAL: &str = r#"{
        "info": {"description": "fixture"},
        "images": [{"id": 7, "file_name": "QL12_1_L10_abaxial_mid.jpg", "width": 341, "height": 341}],
        "annotations": [{"id": 1, "image_id": 7, "category_id": 1,
            "segmentation": [[10, 10, 30, 10, 30, 20, 10, 20]],
            "bbox": [10, 10, 20, 10], "area": 200.0, "iscrowd": 0, "tool": "v7"}],
        "categories": [{"id": 1, "name": "complex area", "supercategory": "stoma"}]
    }"#;

    fn square_ann(id: u64, bbox: BBox) -> Annotation {
        Annotation {
            id,
            image_id: 1,
            category_id: 1,
            segmentation: Segmentation::Polygons(PolygonSet::new(vec![vec![
                Point::new(10.0, 10.0),
                Point::new(20.0, 10.0),
                Point::new(20.0, 20.0),
                Point::new(10.0, 20.0),
            ]])),
            bbox,
            area: 100.0,
            iscrowd: false,
            provenance: Provenance::Human,
            extra: Map::new(),
        }
    }

    fn one_image(anns: Vec<Annotation>) -> Dataset {
        Dataset {
            images: vec![ImageRecord::new(1, "a.jpg", 64, 64)],
            annotations: anns,
            categories: Category::stomata_defaults(),
            extra: Map::new(),
        }
    }

    #[test]
    fn parse_empty() {
        let d = parse_dataset(r#"{"images":[],"annotations":[],"categories":[]}"#).unwrap();
        assert!(d.images.is_empty() && d.annotations.is_empty() && d.categories.is_empty());
    }

    #[test]
    fn parse_minimal() {
        let d = parse_dataset(MINIMAL).unwrap();
        assert_eq!((d.images.len(), d.annotations.len(), d.categories.len()), (1, 1, 1));
        assert_eq!(d.annotations[0].image_id, 7);
        assert_eq!(d.annotations[0].extra["tool"], "v7");
        assert_eq!(d.categories[0].extra["supercategory"], "stoma");
        assert!(d.extra.contains_key("info"));
        assert!(validate(&d).is_valid());
    }

    #[test]
    fn parse_errors() {
        let dangling = MINIMAL.replace("\"image_id\": 7", "\"image_id\": 99");
        match parse_dataset(&dangling) {
            Err(CocoError::DanglingReference { record, target }) => {
                assert_eq!(record, "annotation 1");
                assert_eq!(target, "image 99");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse_dataset("{"), Err(CocoError::MalformedJson(_))));
        let missing = MINIMAL.replace("\"width\": 341, ", "");
        assert_eq!(
            parse_dataset(&missing),
            Err(CocoError::MissingField("images[0].width".into()))
        );
        assert_eq!(
            parse_dataset(r#"{"images":[],"categories":[]}"#),
            Err(CocoError::MissingField("annotations".into()))
        );
        let dup = r#"{"images":[{"id":1,"file_name":"a","width":1,"height":1},
            {"id":1,"file_name":"b","width":1,"height":1}],"annotations":[],"categories":[]}"#;
        assert_eq!(
            parse_dataset(dup),
            Err(CocoError::DuplicateId { kind: "image", id: 1 })
        );
        let bad_type = MINIMAL.replace("\"width\": 341", "\"width\": \"wide\"");
        assert!(matches!(parse_dataset(&bad_type), Err(CocoError::InvalidField { .. })));
        assert!(matches!(parse_dataset("[]"), Err(CocoError::InvalidField { .. })));
    }

    #[test]
    fn round_trip_keeps_provenance_and_extras() {
        let mut d = parse_dataset(MINIMAL).unwrap();
        d.annotations[0].provenance = Provenance::Pseudo;
        let again = parse_dataset(&serialize_dataset(&d)).unwrap();
        assert_eq!(again, d);
        assert_eq!(again.annotations[0].provenance, Provenance::Pseudo);
    }

    #[test]
    fn human_provenance_not_written() {
        let d = parse_dataset(MINIMAL).unwrap();
        assert!(!serialize_dataset(&d).contains("provenance"));
    }

    #[test]
    fn predictions() {
        let ctx = parse_dataset(MINIMAL).unwrap();
        assert!(parse_predictions("[]", &ctx).unwrap().is_empty());
        let one = r#"[{"image_id":7,"category_id":1,"segmentation":[[0,0,4,0,4,4]],"score":0.73}]"#;
        let preds = parse_predictions(one, &ctx).unwrap();
        assert_eq!(preds.len(), 1);
        assert_eq!(preds[0].score, 0.73);
        let high = one.replace("0.73", "1.2");
        assert!(matches!(
            parse_predictions(&high, &ctx),
            Err(CocoError::ScoreOutOfRange { index: 0, .. })
        ));
        let dangling = one.replace("\"image_id\":7", "\"image_id\":8");
        assert!(matches!(
            parse_predictions(&dangling, &ctx),
            Err(CocoError::DanglingReference { .. })
        ));
        assert!(matches!(parse_predictions("[", &ctx), Err(CocoError::MalformedJson(_))));
    }

    #[test]
    fn validate_rules() {
        let ok = one_image(vec![square_ann(1, BBox::new(10.0, 10.0, 10.0, 10.0))]);
        assert!(validate(&ok).is_valid());

        let mut zero = ok.clone();
        zero.annotations[0].area = 0.0;
        let r = validate(&zero);
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.count(Rule::NonPositiveArea), 1);

        // extent is (10,10,10,10); a 5 px shift moves two edges past tolerance
        let shifted = one_image(vec![square_ann(1, BBox::new(15.0, 10.0, 10.0, 10.0))]);
        let r = validate(&shifted);
        assert_eq!(r.count(Rule::BboxMismatch), 1);
        assert_eq!(r.issues[0].id, 1);

        // within ±1 px per edge passes
        let loose = one_image(vec![square_ann(1, BBox::new(9.0, 11.0, 12.0, 8.0))]);
        assert!(validate(&loose).is_valid());

        let mut out = ok.clone();
        out.images[0].width = 15;
        assert_eq!(validate(&out).count(Rule::OutOfBounds), 1);

        let mut odd = ok.clone();
        odd.categories.push(Category::new(9, "leaf hair"));
        assert!(validate(&odd).is_valid());
        let strict = validate_with(&odd, ValidateOptions { strict_categories: true });
        assert_eq!(strict.count(Rule::UnknownCategoryName), 1);

        let mut dangling = ok;
        dangling.annotations[0].image_id = 5;
        assert_eq!(validate(&dangling).count(Rule::DanglingImage), 1);
    }

    #[test]
    fn class_names() {
        assert_eq!(StomataClass::from_name("Pore  Area"), Some(StomataClass::Pore));
        assert_eq!(StomataClass::from_name("guard cell area"), Some(StomataClass::GuardCell));
        assert_eq!(StomataClass::from_name("stoma"), None);
    }
}
