//! Mask geometry: polygon area, rectangle clipping, even-odd rasterization,
//! column-major run-length encoding and mask IoU.
//!
//! Polygons use continuous pixel coordinates: pixel `(row, col)` covers
//! `[col, col + 1) x [row, row + 1)` and is sampled at its center.

use std::fmt;

use serde::de::{self, Deserializer};
use serde::ser::{SerializeMap, Serializer};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("corrupt RLE: {0}")]
    CorruptRle(String),
    #[error("dimension mismatch: {0}x{1} vs {2}x{3}")]
    DimensionMismatch(u32, u32, u32, u32),
    #[error("invalid rectangle [{0}, {2}) x [{1}, {3})")]
    InvalidRect(u32, u32, u32, u32),
}

pub type Result<T> = std::result::Result<T, GeomError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }
}

/// Half-open pixel window `[x0, x1) x [y0, y1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Rect {
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl Rect {
    pub fn new(x0: u32, y0: u32, x1: u32, y1: u32) -> Result<Self> {
        if x1 <= x0 || y1 <= y0 {
            return Err(GeomError::InvalidRect(x0, y0, x1, y1));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    /// Rectangle of size `w x h` anchored at `(x, y)`.
    pub fn from_origin(x: u32, y: u32, w: u32, h: u32) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        f64::from(self.width()) * f64::from(self.height())
    }

    pub fn intersect(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x0.max(other.x0);
        let y0 = self.y0.max(other.y0);
        let x1 = self.x1.min(other.x1);
        let y1 = self.y1.min(other.y1);
        (x1 > x0 && y1 > y0).then_some(Rect { x0, y0, x1, y1 })
    }

    pub fn union(&self, other: &Rect) -> Rect {
        Rect {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }
}

/// COCO `[x, y, width, height]` box.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BBox {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl BBox {
    pub const fn new(x: f64, y: f64, w: f64, h: f64) -> Self {
        Self { x, y, w, h }
    }

    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    /// True when every edge of `self` lies within `tol` of the matching edge of `other`.
    pub fn edges_within(&self, other: &BBox, tol: f64) -> bool {
        (self.x - other.x).abs() <= tol
            && (self.y - other.y).abs() <= tol
            && (self.right() - other.right()).abs() <= tol
            && (self.bottom() - other.bottom()).abs() <= tol
    }

    /// Smallest pixel window (clamped to `w x h`) containing every pixel whose
    /// center may fall inside the box.
    pub fn pixel_window(&self, img_w: u32, img_h: u32) -> Option<Rect> {
        let clamp = |v: f64, hi: u32| v.max(0.0).min(f64::from(hi)) as u32;
        let x0 = clamp(self.x.floor(), img_w);
        let y0 = clamp(self.y.floor(), img_h);
        let x1 = clamp(self.right().ceil(), img_w);
        let y1 = clamp(self.bottom().ceil(), img_h);
        (x1 > x0 && y1 > y0).then_some(Rect { x0, y0, x1, y1 })
    }
}

impl Serialize for BBox {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.x, self.y, self.w, self.h].serialize(s)
    }
}

impl<'de> Deserialize<'de> for BBox {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [x, y, w, h] = <[f64; 4]>::deserialize(d)?;
        Ok(BBox { x, y, w, h })
    }
}

/// A set of implicitly closed rings. Interpreted with the even-odd rule when
/// rasterized; areas sum the absolute area of each ring.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolygonSet {
    pub rings: Vec<Vec<Point>>,
}

impl PolygonSet {
    pub fn new(rings: Vec<Vec<Point>>) -> Self {
        Self { rings }
    }

    pub fn from_flat(rings: &[Vec<f64>]) -> Result<Self> {
        let mut out = Vec::with_capacity(rings.len());
        for (i, flat) in rings.iter().enumerate() {
            if flat.len() % 2 != 0 {
                return Err(GeomError::DegeneratePolygon(format!(
                    "ring {i} has an odd number of coordinates ({})",
                    flat.len()
                )));
            }
            out.push(flat.chunks_exact(2).map(|c| Point::new(c[0], c[1])).collect());
        }
        Ok(Self { rings: out })
    }

    pub fn to_flat(&self) -> Vec<Vec<f64>> {
        self.rings
            .iter()
            .map(|r| r.iter().flat_map(|p| [p.x, p.y]).collect())
            .collect()
    }

    pub fn is_empty(&self) -> bool {
        self.rings.is_empty()
    }

    /// Checks the ring-size and finiteness invariants.
    pub fn check(&self) -> Result<()> {
        for (i, ring) in self.rings.iter().enumerate() {
            if ring.len() < 3 {
                return Err(GeomError::DegeneratePolygon(format!(
                    "ring {i} has {} vertices",
                    ring.len()
                )));
            }
            if ring.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
                return Err(GeomError::DegeneratePolygon(format!(
                    "ring {i} has a non-finite coordinate"
                )));
            }
        }
        Ok(())
    }

    pub fn translate(&self, dx: f64, dy: f64) -> PolygonSet {
        PolygonSet {
            rings: self
                .rings
                .iter()
                .map(|r| r.iter().map(|p| Point::new(p.x + dx, p.y + dy)).collect())
                .collect(),
        }
    }

    fn points(&self) -> impl Iterator<Item = &Point> {
        self.rings.iter().flatten()
    }
}

impl Serialize for PolygonSet {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_flat().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PolygonSet {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let flat = Vec::<Vec<f64>>::deserialize(d)?;
        PolygonSet::from_flat(&flat).map_err(de::Error::custom)
    }
}

fn ring_signed_area(ring: &[Point]) -> f64 {
    let n = ring.len();
    let mut acc = 0.0;
    for i in 0..n {
        let a = ring[i];
        let b = ring[(i + 1) % n];
        acc += a.x * b.y - b.x * a.y;
    }
    acc / 2.0
}

/// Shoelace area: sum of absolute ring areas.
pub fn polygon_area(p: &PolygonSet) -> Result<f64> {
    p.check()?;
    Ok(p.rings.iter().map(|r| ring_signed_area(r).abs()).sum())
}

/// Tight axis-aligned extent of all vertices.
pub fn bbox_of(p: &PolygonSet) -> Result<BBox> {
    p.check()?;
    if p.is_empty() {
        return Err(GeomError::DegeneratePolygon("empty polygon set".into()));
    }
    let (mut x0, mut y0) = (f64::INFINITY, f64::INFINITY);
    let (mut x1, mut y1) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for pt in p.points() {
        x0 = x0.min(pt.x);
        y0 = y0.min(pt.y);
        x1 = x1.max(pt.x);
        y1 = y1.max(pt.y);
    }
    Ok(BBox::new(x0, y0, x1 - x0, y1 - y0))
}

#[derive(Clone, Copy)]
enum Edge {
    Left(f64),
    Right(f64),
    Top(f64),
    Bottom(f64),
}

impl Edge {
    fn inside(self, p: Point) -> bool {
        match self {
            Edge::Left(c) => p.x >= c,
            Edge::Right(c) => p.x <= c,
            Edge::Top(c) => p.y >= c,
            Edge::Bottom(c) => p.y <= c,
        }
    }

    fn cross(self, a: Point, b: Point) -> Point {
        match self {
            Edge::Left(c) | Edge::Right(c) => {
                let t = (c - a.x) / (b.x - a.x);
                Point::new(c, a.y + t * (b.y - a.y))
            }
            Edge::Top(c) | Edge::Bottom(c) => {
                let t = (c - a.y) / (b.y - a.y);
                Point::new(a.x + t * (b.x - a.x), c)
            }
        }
    }
}

fn clip_ring(ring: &[Point], r: &Rect) -> Vec<Point> {
    let edges = [
        Edge::Left(f64::from(r.x0)),
        Edge::Right(f64::from(r.x1)),
        Edge::Top(f64::from(r.y0)),
        Edge::Bottom(f64::from(r.y1)),
    ];
    let mut poly = ring.to_vec();
    for edge in edges {
        if poly.is_empty() {
            break;
        }
        let input = std::mem::take(&mut poly);
        let n = input.len();
        for i in 0..n {
            let cur = input[i];
            let prev = input[(i + n - 1) % n];
            match (edge.inside(prev), edge.inside(cur)) {
                (true, true) => poly.push(cur),
                (true, false) => poly.push(edge.cross(prev, cur)),
                (false, true) => {
                    poly.push(edge.cross(prev, cur));
                    poly.push(cur);
                }
                (false, false) => {}
            }
        }
    }
    poly
}

/// Clips every ring against the closed rectangle `r` (successive half-plane
/// clipping). Rings that vanish or collapse to zero area are dropped; rings
/// already inside `r` are returned unchanged.
pub fn clip_polygon_to_rect(p: &PolygonSet, r: &Rect) -> PolygonSet {
    let (rx0, ry0) = (f64::from(r.x0), f64::from(r.y0));
    let (rx1, ry1) = (f64::from(r.x1), f64::from(r.y1));
    let mut rings = Vec::new();
    for ring in &p.rings {
        if ring.len() < 3 {
            continue;
        }
        let inside = ring
            .iter()
            .all(|q| q.x >= rx0 && q.x <= rx1 && q.y >= ry0 && q.y <= ry1);
        let clipped = if inside { ring.clone() } else { clip_ring(ring, r) };
        if clipped.len() >= 3 && ring_signed_area(&clipped) != 0.0 {
            rings.push(clipped);
        }
    }
    PolygonSet { rings }
}

/// Row-major binary mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BitMask {
    height: u32,
    width: u32,
    bits: Vec<bool>,
}

impl BitMask {
    pub fn zeros(height: u32, width: u32) -> Self {
        Self {
            height,
            width,
            bits: vec![false; height as usize * width as usize],
        }
    }

    pub fn from_bits(height: u32, width: u32, bits: Vec<bool>) -> Result<Self> {
        if bits.len() != height as usize * width as usize {
            return Err(GeomError::DimensionMismatch(
                height,
                width,
                bits.len() as u32,
                1,
            ));
        }
        Ok(Self { height, width, bits })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn get(&self, row: u32, col: u32) -> bool {
        self.bits[row as usize * self.width as usize + col as usize]
    }

    pub fn set(&mut self, row: u32, col: u32, v: bool) {
        let w = self.width as usize;
        self.bits[row as usize * w + col as usize] = v;
    }

    pub fn count_ones(&self) -> u64 {
        self.bits.iter().filter(|&&b| b).count() as u64
    }

    /// Sub-mask covering `r` (clamped to this mask).
    pub fn crop(&self, r: &Rect) -> BitMask {
        let x1 = r.x1.min(self.width);
        let y1 = r.y1.min(self.height);
        let w = x1.saturating_sub(r.x0);
        let h = y1.saturating_sub(r.y0);
        let mut out = BitMask::zeros(h, w);
        for row in 0..h {
            for col in 0..w {
                if self.get(r.y0 + row, r.x0 + col) {
                    out.set(row, col, true);
                }
            }
        }
        out
    }

    /// Pixel extent of set bits as a box, `None` when empty.
    pub fn extent(&self) -> Option<BBox> {
        let (mut r0, mut c0, mut r1, mut c1) = (u32::MAX, u32::MAX, 0u32, 0u32);
        let mut any = false;
        for row in 0..self.height {
            for col in 0..self.width {
                if self.get(row, col) {
                    any = true;
                    r0 = r0.min(row);
                    c0 = c0.min(col);
                    r1 = r1.max(row + 1);
                    c1 = c1.max(col + 1);
                }
            }
        }
        any.then(|| {
            BBox::new(
                f64::from(c0),
                f64::from(r0),
                f64::from(c1 - c0),
                f64::from(r1 - r0),
            )
        })
    }
}

/// Even-odd rasterization of `p` into a `h x w` mask, sampling pixel centers.
pub fn rasterize(p: &PolygonSet, h: u32, w: u32) -> BitMask {
    if h == 0 || w == 0 {
        return BitMask::zeros(h, w);
    }
    rasterize_region(p, &Rect { x0: 0, y0: 0, x1: w, y1: h })
}

/// Rasterizes only the pixels of window `r`; output pixel `(i, j)` samples the
/// center of frame pixel `(r.y0 + i, r.x0 + j)`.
pub fn rasterize_region(p: &PolygonSet, r: &Rect) -> BitMask {
    let (h, w) = (r.height(), r.width());
    let mut mask = BitMask::zeros(h, w);
    let mut xs: Vec<f64> = Vec::new();
    for row in 0..h {
        let py = f64::from(r.y0 + row) + 0.5;
        xs.clear();
        for ring in &p.rings {
            let n = ring.len();
            for i in 0..n {
                let a = ring[i];
                let b = ring[(i + 1) % n];
                if (a.y > py) != (b.y > py) {
                    xs.push((b.x - a.x) * (py - a.y) / (b.y - a.y) + a.x);
                }
            }
        }
        if xs.is_empty() {
            continue;
        }
        xs.sort_by(f64::total_cmp);
        let mut k = 0;
        let base = row as usize * w as usize;
        for col in 0..w {
            let px = f64::from(r.x0 + col) + 0.5;
            while k < xs.len() && xs[k] <= px {
                k += 1;
            }
            if k == xs.len() {
                break;
            }
            if k % 2 == 1 {
                mask.bits[base + col as usize] = true;
            }
        }
    }
    mask
}

/// Uncompressed COCO run-length mask: runs over column-major pixel order,
/// alternating zeros and ones, starting with zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RleMask {
    height: u32,
    width: u32,
    counts: Vec<u64>,
}

impl RleMask {
    pub fn new(height: u32, width: u32, counts: Vec<u64>) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        let expected = u64::from(height) * u64::from(width);
        if total != expected {
            return Err(GeomError::CorruptRle(format!(
                "counts sum to {total}, expected {height}x{width} = {expected}"
            )));
        }
        if let Some(i) = counts.iter().skip(1).position(|&c| c == 0) {
            return Err(GeomError::CorruptRle(format!("zero-length run at index {}", i + 1)));
        }
        Ok(Self { height, width, counts })
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn area(&self) -> u64 {
        self.counts.iter().skip(1).step_by(2).sum()
    }
}

#[derive(Serialize, Deserialize)]
struct RleRepr {
    size: [u32; 2],
    counts: Value,
}

impl Serialize for RleMask {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let mut m = s.serialize_map(Some(2))?;
        m.serialize_entry("size", &[self.height, self.width])?;
        m.serialize_entry("counts", &self.counts)?;
        m.end()
    }
}

impl<'de> Deserialize<'de> for RleMask {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = RleRepr::deserialize(d)?;
        let counts = match repr.counts {
            Value::Array(items) => items
                .into_iter()
                .map(|v| {
                    v.as_u64()
                        .ok_or_else(|| de::Error::custom("RLE counts must be non-negative integers"))
                })
                .collect::<std::result::Result<Vec<u64>, D::Error>>()?,
            Value::String(_) => {
                return Err(de::Error::custom(
                    "compressed RLE strings are not supported; use integer counts",
                ))
            }
            _ => return Err(de::Error::custom("RLE counts must be an integer array")),
        };
        RleMask::new(repr.size[0], repr.size[1], counts).map_err(de::Error::custom)
    }
}

pub fn rle_encode(m: &BitMask) -> RleMask {
    let (h, w) = (m.height as usize, m.width as usize);
    let mut counts = Vec::new();
    let mut current = false;
    let mut run = 0u64;
    for col in 0..w {
        for row in 0..h {
            let bit = m.bits[row * w + col];
            if bit != current {
                counts.push(run);
                run = 0;
                current = bit;
            }
            run += 1;
        }
    }
    if run > 0 || counts.is_empty() {
        counts.push(run);
    }
    RleMask {
        height: m.height,
        width: m.width,
        counts,
    }
}

pub fn rle_decode(m: &RleMask) -> BitMask {
    let (h, w) = (m.height as usize, m.width as usize);
    let mut out = BitMask::zeros(m.height, m.width);
    let mut pos = 0usize;
    for (i, &run) in m.counts.iter().enumerate() {
        let run = run as usize;
        if i % 2 == 1 {
            for k in pos..pos + run {
                let (col, row) = (k / h, k % h);
                out.bits[row * w + col] = true;
            }
        }
        pos += run;
    }
    out
}

fn check_dims(ah: u32, aw: u32, bh: u32, bw: u32) -> Result<()> {
    if ah != bh || aw != bw {
        return Err(GeomError::DimensionMismatch(ah, aw, bh, bw));
    }
    Ok(())
}

fn ratio(inter: u64, union: u64) -> f64 {
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// `|a ∩ b| / |a ∪ b|`, zero when both masks are empty.
pub fn mask_iou(a: &BitMask, b: &BitMask) -> Result<f64> {
    check_dims(a.height, a.width, b.height, b.width)?;
    let (mut inter, mut union) = (0u64, 0u64);
    for (&x, &y) in a.bits.iter().zip(&b.bits) {
        inter += u64::from(x && y);
        union += u64::from(x || y);
    }
    Ok(ratio(inter, union))
}

/// Mask IoU computed directly on run-length counts.
pub fn rle_iou(a: &RleMask, b: &RleMask) -> Result<f64> {
    check_dims(a.height, a.width, b.height, b.width)?;
    let (mut inter, mut union) = (0u64, 0u64);
    let (mut ia, mut ib) = (0usize, 0usize);
    let (mut ra, mut rb) = (
        a.counts.first().copied().unwrap_or(0),
        b.counts.first().copied().unwrap_or(0),
    );
    while ia < a.counts.len() && ib < b.counts.len() {
        let step = ra.min(rb);
        let (va, vb) = (ia % 2 == 1, ib % 2 == 1);
        if va && vb {
            inter += step;
        }
        if va || vb {
            union += step;
        }
        ra -= step;
        rb -= step;
        while ra == 0 && ia < a.counts.len() {
            ia += 1;
            ra = a.counts.get(ia).copied().unwrap_or(0);
        }
        while rb == 0 && ib < b.counts.len() {
            ib += 1;
            rb = b.counts.get(ib).copied().unwrap_or(0);
        }
    }
    Ok(ratio(inter, union))
}

/// Instance geometry: polygons or an uncompressed RLE mask.
#[derive(Debug, Clone, PartialEq)]
pub enum Segmentation {
    Polygons(PolygonSet),
    Rle(RleMask),
}

impl Segmentation {
    /// Polygon area, or pixel count for RLE.
    pub fn area(&self) -> Result<f64> {
        match self {
            Segmentation::Polygons(p) => polygon_area(p),
            Segmentation::Rle(r) => Ok(r.area() as f64),
        }
    }

    /// Tight extent, `None` for an empty mask.
    pub fn extent(&self) -> Result<Option<BBox>> {
        match self {
            Segmentation::Polygons(p) => bbox_of(p).map(Some),
            Segmentation::Rle(r) => Ok(rle_decode(r).extent()),
        }
    }

    /// Pixels of window `r` covered by this instance (`r` in image coordinates).
    pub fn mask_in(&self, r: &Rect) -> BitMask {
        match self {
            Segmentation::Polygons(p) => rasterize_region(p, r),
            Segmentation::Rle(m) => rle_decode(m).crop(r),
        }
    }

    /// Pixel window (within `w x h`) that can contain set pixels.
    fn window(&self, img_w: u32, img_h: u32) -> Result<Option<Rect>> {
        Ok(self.extent()?.and_then(|b| b.pixel_window(img_w, img_h)))
    }
}

impl Serialize for Segmentation {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Segmentation::Polygons(p) => p.serialize(s),
            Segmentation::Rle(r) => r.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for Segmentation {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Value::deserialize(d)?;
        match v {
            Value::Array(_) => serde_json::from_value(v)
                .map(Segmentation::Polygons)
                .map_err(de::Error::custom),
            Value::Object(_) => serde_json::from_value(v)
                .map(Segmentation::Rle)
                .map_err(de::Error::custom),
            other => Err(de::Error::custom(format!(
                "segmentation must be a polygon list or an RLE object, got {}",
                json_kind(&other)
            ))),
        }
    }
}

fn json_kind(v: &Value) -> &'static str {
    match v {
        Value::Null => "null",
        Value::Bool(_) => "a boolean",
        Value::Number(_) => "a number",
        Value::String(_) => "a string",
        Value::Array(_) => "an array",
        Value::Object(_) => "an object",
    }
}

/// Mask IoU of two instances on a `h x w` image. Only the union of their
/// pixel windows is rasterized; RLE pairs use the run-length kernel.
pub fn segmentation_iou(a: &Segmentation, b: &Segmentation, img_h: u32, img_w: u32) -> Result<f64> {
    if let (Segmentation::Rle(x), Segmentation::Rle(y)) = (a, b) {
        return rle_iou(x, y);
    }
    for seg in [a, b] {
        if let Segmentation::Rle(r) = seg {
            check_dims(r.height, r.width, img_h, img_w)?;
        }
    }
    let window = match (a.window(img_w, img_h)?, b.window(img_w, img_h)?) {
        (Some(wa), Some(wb)) => {
            if wa.intersect(&wb).is_none() {
                return Ok(0.0);
            }
            wa.union(&wb)
        }
        _ => return Ok(0.0),
    };
    mask_iou(&a.mask_in(&window), &b.mask_in(&window))
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}) x [{}, {})", self.x0, self.x1, self.y0, self.y1)
    }
}
