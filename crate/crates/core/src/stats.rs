//! Dataset analytics and image-level splits.
//!
//! File names follow `{genotype}_{replicate}_{leafLevel}_{surface}_{region}.{ext}`
//! where the genotype may contain hyphens but not underscores.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::coco::Dataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("unparseable file name {name:?}: {reason}")]
    UnparseableFilename { name: String, reason: String },
    #[error("split references unknown image {0}")]
    UnknownImageId(String),
    #[error("image {0} appears in more than one split")]
    OverlappingSplits(String),
    #[error("image {0} is not assigned to any split")]
    IncompleteSplit(u64),
    #[error("invalid split ratios {0:?}")]
    InvalidRatios([f64; 3]),
}

pub type Result<T> = std::result::Result<T, StatsError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Surface {
    Abaxial,
    Adaxial,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Region {
    Base,
    Mid,
    Tip,
}

/// `L<n>` or the flag leaf `FL`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LeafLevel {
    Leaf(u32),
    Flag,
}

impl Surface {
    pub fn as_str(self) -> &'static str {
        match self {
            Surface::Abaxial => "abaxial",
            Surface::Adaxial => "adaxial",
        }
    }
}

impl Region {
    pub fn as_str(self) -> &'static str {
        match self {
            Region::Base => "base",
            Region::Mid => "mid",
            Region::Tip => "tip",
        }
    }
}

impl FromStr for Surface {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "abaxial" => Ok(Surface::Abaxial),
            "adaxial" => Ok(Surface::Adaxial),
            _ => Err(()),
        }
    }
}

impl FromStr for Region {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "base" => Ok(Region::Base),
            "mid" => Ok(Region::Mid),
            "tip" => Ok(Region::Tip),
            _ => Err(()),
        }
    }
}

impl FromStr for LeafLevel {
    type Err = ();
    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        if s == "FL" {
            return Ok(LeafLevel::Flag);
        }
        let digits = s.strip_prefix('L').ok_or(())?;
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return Err(());
        }
        digits.parse().map(LeafLevel::Leaf).map_err(|_| ())
    }
}

impl fmt::Display for LeafLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeafLevel::Leaf(n) => write!(f, "L{n}"),
            LeafLevel::Flag => f.write_str("FL"),
        }
    }
}

impl Serialize for LeafLevel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LeafLevel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse()
            .map_err(|_| serde::de::Error::custom(format!("invalid leaf level {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub genotype: String,
    pub replicate: u32,
    pub leaf_level: LeafLevel,
    pub surface: Surface,
    pub region: Region,
}

/// Whatever could be recovered from a non-conforming name.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct PartialSampleMeta {
    pub genotype: Option<String>,
    pub replicate: Option<u32>,
    pub leaf_level: Option<LeafLevel>,
    pub surface: Option<Surface>,
    pub region: Option<Region>,
    pub complete: bool,
}

fn stem(file_name: &str) -> &str {
    let base = file_name.rsplit(['/', '\\']).next().unwrap_or(file_name);
    match base.rsplit_once('.') {
        Some((s, ext)) if !s.is_empty() && !ext.contains('_') => s,
        _ => base,
    }
}

fn valid_genotype(g: &str) -> bool {
    !g.is_empty() && !g.contains('_')
}

pub fn parse_sample_meta(file_name: &str) -> Result<SampleMeta> {
    let fail = |reason: &str| StatsError::UnparseableFilename {
        name: file_name.to_string(),
        reason: reason.to_string(),
    };
    let parts: Vec<&str> = stem(file_name).split('_').collect();
    let [genotype, replicate, leaf, surface, region] = parts[..] else {
        return Err(fail("expected five underscore-separated fields"));
    };
    if !valid_genotype(genotype) {
        return Err(fail("empty genotype"));
    }
    if replicate.is_empty() || !replicate.bytes().all(|b| b.is_ascii_digit()) {
        return Err(fail("replicate is not an integer"));
    }
    Ok(SampleMeta {
        genotype: genotype.to_string(),
        replicate: replicate.parse().map_err(|_| fail("replicate out of range"))?,
        leaf_level: leaf.parse().map_err(|_| fail("leaf level must be L<n> or FL"))?,
        surface: surface.parse().map_err(|_| fail("surface must be abaxial or adaxial"))?,
        region: region.parse().map_err(|_| fail("region must be base, mid or tip"))?,
    })
}

/// Token-wise recovery: each field is taken from the first token that fits it.
pub fn parse_sample_meta_lenient(file_name: &str) -> PartialSampleMeta {
    if let Ok(m) = parse_sample_meta(file_name) {
        return PartialSampleMeta {
            genotype: Some(m.genotype),
            replicate: Some(m.replicate),
            leaf_level: Some(m.leaf_level),
            surface: Some(m.surface),
            region: Some(m.region),
            complete: true,
        };
    }
    let mut out = PartialSampleMeta::default();
    for (i, raw) in stem(file_name).split(['_', ' ']).enumerate() {
        let tok = raw.trim();
        let lower = tok.to_ascii_lowercase();
        if tok.is_empty() {
            continue;
        }
        if out.surface.is_none() {
            if let Ok(s) = lower.parse() {
                out.surface = Some(s);
                continue;
            }
        }
        if out.region.is_none() {
            if let Ok(r) = lower.parse() {
                out.region = Some(r);
                continue;
            }
        }
        if out.leaf_level.is_none() {
            if let Ok(l) = tok.to_ascii_uppercase().parse() {
                out.leaf_level = Some(l);
                continue;
            }
        }
        if out.replicate.is_none() && tok.bytes().all(|b| b.is_ascii_digit()) {
            if let Ok(n) = tok.parse() {
                out.replicate = Some(n);
                continue;
            }
        }
        if i == 0 && out.genotype.is_none() {
            out.genotype = Some(tok.to_string());
        }
    }
    out
}

pub fn format_sample_meta(m: &SampleMeta, ext: &str) -> String {
    let mut s = format!(
        "{}_{}_{}_{}_{}",
        m.genotype,
        m.replicate,
        m.leaf_level,
        m.surface.as_str(),
        m.region.as_str()
    );
    if !ext.is_empty() {
        s.push('.');
        s.push_str(ext.trim_start_matches('.'));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

/// Linear interpolation between closest ranks on sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    let n = sorted.len();
    if n == 0 {
        return None;
    }
    let pos = q.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

impl Quantiles {
    pub fn of(samples: &[f64]) -> Option<Self> {
        let mut v = samples.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Quantiles {
            min: *v.first()?,
            q25: quantile(&v, 0.25)?,
            median: quantile(&v, 0.5)?,
            q75: quantile(&v, 0.75)?,
            max: *v.last()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassStats {
    pub category_id: u64,
    pub class: String,
    pub count: usize,
    pub quantiles: Option<Quantiles>,
    /// Mask coverage of each instance, percent of its image area.
    pub coverage: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassSummary {
    pub images: usize,
    pub classes: Vec<ClassStats>,
}

impl ClassSummary {
    pub fn class(&self, name: &str) -> Option<&ClassStats> {
        self.classes.iter().find(|c| c.class == name)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,count,min,q25,median,q75,max\n");
        for c in &self.classes {
            let q = match c.quantiles {
                Some(q) => format!("{},{},{},{},{}", q.min, q.q25, q.median, q.q75, q.max),
                None => ",,,,".to_string(),
            };
            let name = if c.class.contains([',', '"']) {
                format!("\"{}\"", c.class.replace('"', "\"\""))
            } else {
                c.class.clone()
            };
            out.push_str(&format!("{name},{},{q}\n", c.count));
        }
        out
    }
}

/// Counts and coverage per category, using the stored `area` field.
pub fn class_summary(d: &Dataset) -> ClassSummary {
    let images = d.image_index();
    let mut cats: Vec<_> = d.categories.iter().collect();
    cats.sort_by_key(|c| c.id);
    let mut samples: BTreeMap<u64, Vec<f64>> = cats.iter().map(|c| (c.id, Vec::new())).collect();
    for a in &d.annotations {
        let Some(im) = images.get(&a.image_id) else { continue };
        let frame = f64::from(im.width) * f64::from(im.height);
        if let Some(v) = samples.get_mut(&a.category_id) {
            v.push(100.0 * a.area / frame);
        }
    }
    let classes = cats
        .iter()
        .map(|c| {
            let coverage = samples.remove(&c.id).unwrap_or_default();
            ClassStats {
                category_id: c.id,
                class: c.name.clone(),
                count: coverage.len(),
                quantiles: Quantiles::of(&coverage),
                coverage,
            }
        })
        .collect();
    ClassSummary {
        images: d.images.len(),
        classes,
    }
}

/// Image counts per parsed metadata field.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetadataSummary {
    pub parsed: usize,
    pub unparsed: Vec<String>,
    pub genotype: BTreeMap<String, usize>,
    pub surface: BTreeMap<String, usize>,
    pub region: BTreeMap<String, usize>,
    pub leaf_level: BTreeMap<String, usize>,
}

pub fn metadata_summary(d: &Dataset, lenient: bool) -> Result<MetadataSummary> {
    let mut out = MetadataSummary::default();
    let bump = |map: &mut BTreeMap<String, usize>, k: Option<String>| {
        if let Some(k) = k {
            *map.entry(k).or_default() += 1;
        }
    };
    for im in &d.images {
        let p = if lenient {
            parse_sample_meta_lenient(&im.file_name)
        } else {
            let m = parse_sample_meta(&im.file_name)?;
            PartialSampleMeta {
                genotype: Some(m.genotype),
                replicate: Some(m.replicate),
                leaf_level: Some(m.leaf_level),
                surface: Some(m.surface),
                region: Some(m.region),
                complete: true,
            }
        };
        if p.complete {
            out.parsed += 1;
        } else {
            out.unparsed.push(im.file_name.clone());
        }
        bump(&mut out.genotype, p.genotype);
        bump(&mut out.surface, p.surface.map(|s| s.as_str().to_string()));
        bump(&mut out.region, p.region.map(|r| r.as_str().to_string()));
        bump(&mut out.leaf_level, p.leaf_level.map(|l| l.to_string()));
    }
    Ok(out)
}

/// An image named by id or by file name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImageRef {
    Id(u64),
    Name(String),
}

impl fmt::Display for ImageRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ImageRef::Id(id) => write!(f, "{id}"),
            ImageRef::Name(n) => f.write_str(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SplitSpec {
    Explicit {
        train: Vec<ImageRef>,
        val: Vec<ImageRef>,
        test: Vec<ImageRef>,
    },
    Ratio { ratios: [f64; 3], seed: u64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub val: Dataset,
    pub test: Dataset,
}

impl Splits {
    pub fn iter(&self) -> [(&'static str, &Dataset); 3] {
        [("train", &self.train), ("val", &self.val), ("test", &self.test)]
    }
}

/// Image counts per split for ratio mode: train and val rounded, test takes
/// the rest.
pub fn ratio_counts(n: usize, ratios: [f64; 3]) -> Result<[usize; 3]> {
    let sum: f64 = ratios.iter().sum();
    if ratios.iter().any(|r| !r.is_finite() || *r < 0.0) || sum <= 0.0 {
        return Err(StatsError::InvalidRatios(ratios));
    }
    let train = ((ratios[0] / sum) * n as f64).round() as usize;
    let train = train.min(n);
    let val = (((ratios[1] / sum) * n as f64).round() as usize).min(n - train);
    Ok([train, val, n - train - val])
}

fn resolve(d: &Dataset, spec: &SplitSpec) -> Result<[Vec<u64>; 3]> {
    let mut ids: Vec<u64> = d.images.iter().map(|im| im.id).collect();
    ids.sort_unstable();
    match spec {
        SplitSpec::Ratio { ratios, seed } => {
            let [a, b, _] = ratio_counts(ids.len(), *ratios)?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            ids.shuffle(&mut rng);
            let test = ids.split_off(a + b);
            let val = ids.split_off(a);
            Ok([ids, val, test])
        }
        SplitSpec::Explicit { train, val, test } => {
            let by_id: BTreeSet<u64> = ids.iter().copied().collect();
            let mut by_name: HashMap<&str, u64> = HashMap::new();
            for im in &d.images {
                by_name.entry(im.file_name.as_str()).or_insert(im.id);
            }
            let mut seen: BTreeSet<u64> = BTreeSet::new();
            let mut out: [Vec<u64>; 3] = Default::default();
            for (slot, list) in out.iter_mut().zip([train, val, test]) {
                for r in list {
                    let id = match r {
                        ImageRef::Id(id) if by_id.contains(id) => *id,
                        ImageRef::Name(n) if by_name.contains_key(n.as_str()) => by_name[n.as_str()],
                        _ => return Err(StatsError::UnknownImageId(r.to_string())),
                    };
                    if !seen.insert(id) {
                        return Err(StatsError::OverlappingSplits(r.to_string()));
                    }
                    slot.push(id);
                }
            }
            if let Some(missing) = ids.iter().find(|id| !seen.contains(id)) {
                return Err(StatsError::IncompleteSplit(*missing));
            }
            Ok(out)
        }
    }
}

/// Restricts `d` to the given images, keeping file order.
pub fn subset(d: &Dataset, ids: &BTreeSet<u64>) -> Dataset {
    Dataset {
        images: d.images.iter().filter(|im| ids.contains(&im.id)).cloned().collect(),
        annotations: d
            .annotations
            .iter()
            .filter(|a| ids.contains(&a.image_id))
            .cloned()
            .collect(),
        categories: d.categories.clone(),
        extra: d.extra.clone(),
    }
}

pub fn split_dataset(d: &Dataset, spec: &SplitSpec) -> Result<Splits> {
    let [train, val, test] = resolve(d, spec)?;
    let set = |v: Vec<u64>| v.into_iter().collect::<BTreeSet<u64>>();
    Ok(Splits {
        train: subset(d, &set(train)),
        val: subset(d, &set(val)),
        test: subset(d, &set(test)),
    })
}
